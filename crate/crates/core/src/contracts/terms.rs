//! Risk-line terms and the integer money formulas derived from them.

use serde::{Deserialize, Serialize};

/// Basis-point denominator: 10_000 bps = 100%.
pub const BPS: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Seniority {
    /// The bank must show recovery action against the borrower before claiming.
    PariPassu,
    /// The guarantee pays on an eligible claim without prior recovery action.
    FirstDemand,
}

/// The negotiated risk-sharing terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskLineTerms {
    /// Coverage ratio in basis points, 1..=10000.
    pub coverage_bps: u64,
    pub seniority: Seniority,
    /// Maximum payout in minor currency units.
    pub cap: u64,
}

impl RiskLineTerms {
    pub fn validate(&self) -> Result<(), String> {
        if self.coverage_bps == 0 || self.coverage_bps > BPS {
            return Err(format!("coverage_bps must be in 1..={BPS}, got {}", self.coverage_bps));
        }
        Ok(())
    }

    /// floor(coverage × outstanding).
    pub fn covered_amount(&self, outstanding: u64) -> u64 {
        mul_div_floor(self.coverage_bps, outstanding, BPS)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Party {
    Bank,
    #[serde(rename = "CGI")]
    Cgi,
}

impl Party {
    pub fn other(self) -> Party {
        match self {
            Party::Bank => Party::Cgi,
            Party::Cgi => Party::Bank,
        }
    }
}

/// Negotiation state: the standing offer and who has agreed to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskLine {
    pub terms: RiskLineTerms,
    pub proposed_by: Party,
    pub agreed_by_bank: bool,
    pub agreed_by_cgi: bool,
}

impl RiskLine {
    pub fn is_agreed(&self) -> bool {
        self.agreed_by_bank && self.agreed_by_cgi
    }
}

fn mul_div_floor(a: u64, b: u64, d: u64) -> u64 {
    // a ≤ 10^4 in every caller, but keep the product exact for any input.
    let q = (a as u128 * b as u128) / d as u128;
    u64::try_from(q).unwrap_or(u64::MAX)
}

/// Guarantee fee: floor(coverage_bps × principal × fee_rate_bps / 10^8).
pub fn fee_amount(coverage_bps: u64, principal: u64, fee_rate_bps: u64) -> u64 {
    let num = coverage_bps as u128 * principal as u128 * fee_rate_bps as u128;
    u64::try_from(num / (BPS as u128 * BPS as u128)).unwrap_or(u64::MAX)
}

/// payout = min(claimed, cap, floor(coverage_bps × outstanding / 10^4)).
pub fn compute_payout(terms: &RiskLineTerms, outstanding: u64, claimed_amount: u64) -> u64 {
    claimed_amount.min(terms.cap).min(terms.covered_amount(outstanding))
}
