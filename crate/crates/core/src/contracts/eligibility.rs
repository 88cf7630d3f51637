//! Declarative guarantee eligibility criteria established ahead of time by
//! the CGI. A ruleset is a list of `{field, op, value}` comparisons over
//! named case fields; the overall result is their conjunction.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::to_canonical;
use crate::crypto::{hash, Digest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseField {
    #[serde(rename = "principal")]
    Principal,
    #[serde(rename = "installments")]
    Installments,
    #[serde(rename = "borrower_role")]
    BorrowerRole,
    #[serde(rename = "pathway")]
    Pathway,
}

impl fmt::Display for CaseField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CaseField::Principal => "principal",
            CaseField::Installments => "installments",
            CaseField::BorrowerRole => "borrower_role",
            CaseField::Pathway => "pathway",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompareOp {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RuleValue {
    Int(u64),
    Text(String),
}

impl fmt::Display for RuleValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleValue::Int(n) => write!(f, "{n}"),
            RuleValue::Text(s) => write!(f, "{s:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    pub field: CaseField,
    pub op: CompareOp,
    pub value: RuleValue,
}

impl Rule {
    pub fn name(&self) -> String {
        let op = match self.op {
            CompareOp::Le => "<=",
            CompareOp::Ge => ">=",
            CompareOp::Eq => "=",
        };
        format!("{} {op} {}", self.field, self.value)
    }

    fn check_types(&self) -> Result<(), RulesetError> {
        let numeric = matches!(self.field, CaseField::Principal | CaseField::Installments);
        match (&self.value, numeric, self.op) {
            (RuleValue::Int(_), true, _) => Ok(()),
            (RuleValue::Text(_), false, CompareOp::Eq) => Ok(()),
            _ => Err(RulesetError::IllTyped(self.name())),
        }
    }

    pub fn evaluate(&self, facts: &CaseFacts) -> bool {
        match (&self.value, self.field) {
            (RuleValue::Int(v), CaseField::Principal) => compare(self.op, facts.principal, *v),
            (RuleValue::Int(v), CaseField::Installments) => compare(self.op, facts.installments, *v),
            (RuleValue::Text(v), CaseField::BorrowerRole) => {
                self.op == CompareOp::Eq && facts.borrower_role.as_deref() == Some(v.as_str())
            }
            (RuleValue::Text(v), CaseField::Pathway) => self.op == CompareOp::Eq && facts.pathway == *v,
            // Ill-typed rules are rejected at load time; fail closed anyway.
            _ => false,
        }
    }
}

fn compare(op: CompareOp, lhs: u64, rhs: u64) -> bool {
    match op {
        CompareOp::Le => lhs <= rhs,
        CompareOp::Ge => lhs >= rhs,
        CompareOp::Eq => lhs == rhs,
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RulesetError {
    #[error("ruleset is not valid JSON: {0}")]
    Parse(String),
    #[error("rule {0} compares values of the wrong type")]
    IllTyped(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ruleset(pub Vec<Rule>);

impl Ruleset {
    pub fn from_json(bytes: &[u8]) -> Result<Ruleset, RulesetError> {
        let r: Ruleset = serde_json::from_slice(bytes).map_err(|e| RulesetError::Parse(e.to_string()))?;
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), RulesetError> {
        self.0.iter().try_for_each(Rule::check_types)
    }

    pub fn digest(&self) -> Digest {
        hash(&to_canonical(self).expect("ruleset is canonical-serializable"))
    }

    pub fn evaluate(&self, facts: &CaseFacts) -> EligibilityResult {
        let rules: Vec<RuleOutcome> = self
            .0
            .iter()
            .map(|r| RuleOutcome { rule: r.name(), passed: r.evaluate(facts) })
            .collect();
        let overall = rules.iter().all(|r| r.passed);
        EligibilityResult { rules, overall }
    }
}

/// The case data rules can refer to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseFacts {
    pub principal: u64,
    pub installments: u64,
    pub borrower_role: Option<String>,
    pub pathway: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleOutcome {
    pub rule: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EligibilityResult {
    pub rules: Vec<RuleOutcome>,
    pub overall: bool,
}
