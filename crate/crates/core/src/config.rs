//! Deployment parameters fixed at genesis.

use serde::{Deserialize, Serialize};

use crate::contracts::eligibility::Ruleset;
use crate::registry::PermissionMatrix;

pub const DEFAULT_TRIGGER_K: u32 = 3;
pub const DEFAULT_FEE_RATE_BPS: u64 = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentConfig {
    /// Consecutive missed payments that trigger default.
    pub default_trigger_k: u32,
    pub fee_rate_bps: u64,
    pub permission_matrix: PermissionMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ruleset: Option<Ruleset>,
    pub kyc_required_fields: Vec<String>,
}

impl Default for DeploymentConfig {
    fn default() -> Self {
        DeploymentConfig {
            default_trigger_k: DEFAULT_TRIGGER_K,
            fee_rate_bps: DEFAULT_FEE_RATE_BPS,
            permission_matrix: PermissionMatrix::standard(),
            ruleset: Some(Ruleset::default()),
            kyc_required_fields: vec!["id".into(), "financials".into(), "registry_extract".into()],
        }
    }
}
