//! Canonical JSON encoding used for every hash and signature in the ledger.
//!
//! The encoding is compact JSON with object keys sorted bytewise, integers in
//! minimal base-10 form and no insignificant whitespace. Only objects, arrays,
//! strings, booleans and integers are representable: floats and `null` are
//! rejected so that two implementations can never disagree on the bytes.

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CanonicalError {
    #[error("floating point value at {0}")]
    Float(String),
    #[error("null value at {0}")]
    Null(String),
    #[error("value is not serializable: {0}")]
    Serde(String),
}

/// Serialize any `Serialize` value into canonical bytes.
pub fn to_canonical<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, CanonicalError> {
    let value = serde_json::to_value(value).map_err(|e| CanonicalError::Serde(e.to_string()))?;
    canonical_serialize(&value)
}

/// Encode a JSON value canonically.
pub fn canonical_serialize(value: &Value) -> Result<Vec<u8>, CanonicalError> {
    let mut out = Vec::with_capacity(128);
    write_value(value, &mut out, &mut String::from("$"))?;
    Ok(out)
}

/// Canonical text form; convenient where a `String` is wanted.
pub fn canonical_string<T: Serialize + ?Sized>(value: &T) -> Result<String, CanonicalError> {
    // The writer only ever emits valid UTF-8.
    to_canonical(value).map(|b| String::from_utf8(b).expect("canonical JSON is UTF-8"))
}

fn write_value(value: &Value, out: &mut Vec<u8>, path: &mut String) -> Result<(), CanonicalError> {
    match value {
        Value::Null => Err(CanonicalError::Null(path.clone())),
        Value::Bool(true) => {
            out.extend_from_slice(b"true");
            Ok(())
        }
        Value::Bool(false) => {
            out.extend_from_slice(b"false");
            Ok(())
        }
        Value::Number(n) => {
            if let Some(u) = n.as_u64() {
                out.extend_from_slice(u.to_string().as_bytes());
            } else if let Some(i) = n.as_i64() {
                out.extend_from_slice(i.to_string().as_bytes());
            } else {
                return Err(CanonicalError::Float(path.clone()));
            }
            Ok(())
        }
        Value::String(s) => {
            write_string(s, out);
            Ok(())
        }
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                let len = path.len();
                path.push_str(&format!("[{i}]"));
                write_value(item, out, path)?;
                path.truncate(len);
            }
            out.push(b']');
            Ok(())
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort_by(|a, b| a.as_bytes().cmp(b.as_bytes()));
            out.push(b'{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_string(key, out);
                out.push(b':');
                let len = path.len();
                path.push('.');
                path.push_str(key);
                write_value(&map[key], out, path)?;
                path.truncate(len);
            }
            out.push(b'}');
            Ok(())
        }
    }
}

fn write_string(s: &str, out: &mut Vec<u8>) {
    // serde_json's string escaping is already minimal and deterministic.
    serde_json::to_writer(&mut *out, s).expect("writing a str into a Vec cannot fail");
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    fn enc(v: Value) -> String {
        String::from_utf8(canonical_serialize(&v).unwrap()).unwrap()
    }

    #[test]
    fn sorts_keys() {
        assert_eq!(enc(json!({"b": 1, "a": 2})), r#"{"a":2,"b":1}"#);
    }

    #[test]
    fn empty_list() {
        assert_eq!(enc(json!([])), "[]");
    }

    #[test]
    fn nested_values_pass_through() {
        assert_eq!(enc(json!({"x": [true, "s"]})), r#"{"x":[true,"s"]}"#);
        assert_eq!(
            enc(json!({"b": {"z": 1, "a": -2}, "a": [{"c": 3, "b": 4}]})),
            r#"{"a":[{"b":4,"c":3}],"b":{"a":-2,"z":1}}"#
        );
    }

    #[test]
    fn bytewise_key_order() {
        // Uppercase sorts before lowercase, and "a" before "aa".
        assert_eq!(enc(json!({"aa": 1, "a": 2, "B": 3})), r#"{"B":3,"a":2,"aa":1}"#);
    }

    #[test]
    fn rejects_floats_and_null() {
        assert!(matches!(canonical_serialize(&json!({"x": 1.5})), Err(CanonicalError::Float(p)) if p == "$.x"));
        assert!(matches!(canonical_serialize(&json!([null])), Err(CanonicalError::Null(_))));
    }

    #[test]
    fn escapes_strings() {
        assert_eq!(enc(json!("a\"b\\c\n")), r#""a\"b\\c\n""#);
    }

    proptest! {
        #[test]
        fn output_reparses_to_same_value(m in proptest::collection::btree_map("[a-zA-Z0-9_]{0,6}", any::<i64>(), 0..8)) {
            let v = serde_json::to_value(&m).unwrap();
            let bytes = canonical_serialize(&v).unwrap();
            let back: Value = serde_json::from_slice(&bytes).unwrap();
            prop_assert_eq!(&back, &v);
            // Re-encoding is a fixed point.
            prop_assert_eq!(canonical_serialize(&back).unwrap(), bytes);
        }
    }
}
