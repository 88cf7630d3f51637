//! Hashing, addresses and Ed25519 signing.

use std::fmt;
use std::str::FromStr;

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HexError {
    #[error("expected {expected} lowercase hex characters, got {got:?}")]
    Malformed { expected: usize, got: String },
}

/// Strict lowercase hex decode into a fixed-size array.
fn decode_fixed<const N: usize>(s: &str) -> Result<[u8; N], HexError> {
    let bad = || HexError::Malformed { expected: N * 2, got: s.chars().take(140).collect() };
    if s.len() != N * 2 || s.bytes().any(|b| !matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
        return Err(bad());
    }
    let mut out = [0u8; N];
    hex::decode_to_slice(s, &mut out).map_err(|_| bad())?;
    Ok(out)
}

macro_rules! hex_newtype {
    ($(#[$meta:meta])* $name:ident, $len:expr) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub [u8; $len]);

        impl $name {
            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }

            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let h = self.to_hex();
                write!(f, "{}({}…)", stringify!($name), &h[..12])
            }
        }

        impl FromStr for $name {
            type Err = HexError;
            fn from_str(s: &str) -> Result<Self, HexError> {
                decode_fixed::<$len>(s).map($name)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

hex_newtype!(
    /// A SHA-256 digest.
    Digest,
    32
);
hex_newtype!(
    /// Account address: SHA-256 of the account's public key.
    Address,
    32
);
hex_newtype!(
    /// Locator of an off-chain document: SHA-256 of its stored envelope.
    ContentId,
    32
);
hex_newtype!(PublicKey, 32);
hex_newtype!(Signature, 64);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; 32]);
}

/// SHA-256 of arbitrary bytes.
pub fn hash(bytes: &[u8]) -> Digest {
    Digest(Sha256::digest(bytes).into())
}

/// SHA-256 over the concatenation of several slices.
pub fn hash_parts(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Digest(h.finalize().into())
}

impl Address {
    pub fn from_public_key(pk: &PublicKey) -> Address {
        Address(hash(&pk.0).0)
    }

    /// Well-known address with no private key, derived from a label.
    pub fn system(label: &str) -> Address {
        Address(hash_parts(&[b"cgs-system-account:", label.as_bytes()]).0)
    }
}

/// Public half of an account.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    pub address: Address,
    pub public_key: PublicKey,
}

/// Deterministic Ed25519 key pair. The private half never enters ledger state.
#[derive(Clone)]
pub struct Keypair {
    signing: SigningKey,
}

impl fmt::Debug for Keypair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Keypair").field("address", &self.address()).finish_non_exhaustive()
    }
}

impl Keypair {
    pub fn from_seed(seed: [u8; 32]) -> Keypair {
        Keypair { signing: SigningKey::from_bytes(&seed) }
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey(self.signing.verifying_key().to_bytes())
    }

    pub fn address(&self) -> Address {
        Address::from_public_key(&self.public_key())
    }

    pub fn account(&self) -> Account {
        Account { address: self.address(), public_key: self.public_key() }
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        Signature(self.signing.sign(message).to_bytes())
    }
}

/// Generate the account and key pair for a 32-byte seed.
pub fn generate_account(seed: [u8; 32]) -> (Account, Keypair) {
    let kp = Keypair::from_seed(seed);
    (kp.account(), kp)
}

/// Check an Ed25519 signature. Malformed public keys simply fail verification.
pub fn verify_signature(pk: &PublicKey, message: &[u8], sig: &Signature) -> bool {
    let Ok(vk) = VerifyingKey::from_bytes(&pk.0) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(&sig.0);
    vk.verify(message, &sig).is_ok()
}

/// Derive a 32-byte child seed from a parent seed and a label.
pub fn derive_seed(parent: &[u8; 32], label: &str) -> [u8; 32] {
    hash_parts(&[parent, b"/", label.as_bytes()]).0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_digest() {
        // Standard SHA-256 test vectors.
        assert_eq!(
            hash(b"").to_hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            hash(b"abc").to_hex(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn one_bit_difference_changes_digest() {
        let a = b"guarantee".to_vec();
        let mut b = a.clone();
        b[0] ^= 1;
        assert_ne!(hash(&a), hash(&b));
        assert_eq!(hash(&a), hash(&a));
    }

    #[test]
    fn hash_parts_matches_concatenation() {
        assert_eq!(hash_parts(&[b"ab", b"", b"c"]), hash(b"abc"));
    }

    #[test]
    fn account_from_zero_seed_is_reproducible() {
        let (a1, _) = generate_account([0u8; 32]);
        let (a2, _) = generate_account([0u8; 32]);
        assert_eq!(a1, a2);
        assert_eq!(a1.address, Address::from_public_key(&a1.public_key));
        // Cross-checked against an independent Ed25519 implementation.
        assert_eq!(
            a1.public_key.to_hex(),
            "3b6a27bcceb6a42d62a3a8d02a6f0d73653215771de243a63ac048a18b59da29"
        );
    }

    #[test]
    fn distinct_seeds_distinct_addresses() {
        let (a, _) = generate_account([1u8; 32]);
        let (b, _) = generate_account([2u8; 32]);
        assert_ne!(a.address, b.address);
    }

    #[test]
    fn rfc8032_test_vector_one() {
        let seed: [u8; 32] =
            hex::decode("9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60")
                .unwrap()
                .try_into()
                .unwrap();
        let kp = Keypair::from_seed(seed);
        assert_eq!(
            kp.public_key().to_hex(),
            "d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a"
        );
        let sig = kp.sign(b"");
        assert_eq!(
            sig.to_hex(),
            "e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e065224901555fb8821590a33bacc61e39701cf9b46bd25bf5f0595bbe24655141438e7a100b"
        );
        assert!(verify_signature(&kp.public_key(), b"", &sig));
        assert!(!verify_signature(&kp.public_key(), b"x", &sig));
    }

    #[test]
    fn hex_parsing_is_strict() {
        let d = hash(b"x");
        let upper = d.to_hex().to_uppercase();
        assert!(upper.parse::<Digest>().is_err());
        assert!("abc".parse::<Digest>().is_err());
        assert_eq!(d.to_hex().parse::<Digest>().unwrap(), d);
    }
}
