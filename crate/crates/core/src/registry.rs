//! Certified-actor admission and role-based permissions.
//!
//! Only admitted, non-revoked addresses may issue or read transactions, and
//! every active admission is a validator with weight one.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::to_canonical;
use crate::crypto::{hash, Address, ContentId, Digest, PublicKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    Borrower,
    Bank,
    #[serde(rename = "CGI")]
    Cgi,
    Auditor,
    GovernmentAgency,
    InvestorShareholder,
}

impl Role {
    pub const ALL: [Role; 6] = [
        Role::Borrower,
        Role::Bank,
        Role::Cgi,
        Role::Auditor,
        Role::GovernmentAgency,
        Role::InvestorShareholder,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Borrower => "Borrower",
            Role::Bank => "Bank",
            Role::Cgi => "CGI",
            Role::Auditor => "Auditor",
            Role::GovernmentAgency => "GovernmentAgency",
            Role::InvestorShareholder => "InvestorShareholder",
        }
    }

    /// Roles allowed to admit and revoke other actors.
    pub fn can_admit(self) -> bool {
        matches!(self, Role::Cgi | Role::GovernmentAgency)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;
    fn from_str(s: &str) -> Result<Role, String> {
        Role::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown role {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Permission {
    IssueTx,
    ReadLedger,
    Validate,
    ProposeRiskLine,
    DecideGuarantee,
    FileClaim,
    Arbitrate,
    AuditRead,
}

impl Permission {
    pub const ALL: [Permission; 8] = [
        Permission::IssueTx,
        Permission::ReadLedger,
        Permission::Validate,
        Permission::ProposeRiskLine,
        Permission::DecideGuarantee,
        Permission::FileClaim,
        Permission::Arbitrate,
        Permission::AuditRead,
    ];

    pub fn is_mutating(self) -> bool {
        !matches!(self, Permission::ReadLedger | Permission::AuditRead | Permission::Validate)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MatrixError {
    #[error("permission matrix has no entry for ({0}, {1:?})")]
    Missing(Role, Permission),
    #[error("unsupported permission matrix version {0}")]
    Version(u32),
    #[error("read-only role {0} is allowed mutating permission {1:?}")]
    ReadOnlyViolated(Role, Permission),
    #[error("permission matrix is not valid JSON: {0}")]
    Parse(String),
}

/// Total mapping from (role, permission) to allow/deny.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PermissionMatrix {
    pub version: u32,
    pub rules: BTreeMap<Role, BTreeMap<Permission, bool>>,
}

impl PermissionMatrix {
    pub const VERSION: u32 = 1;

    /// Auditors and government agencies only read; the one mutating act an
    /// auditor may perform is a dispute ruling.
    pub fn standard() -> PermissionMatrix {
        use Permission::*;
        let allow = |role: Role| -> &'static [Permission] {
            match role {
                Role::Borrower => &[IssueTx, ReadLedger, Validate],
                Role::Bank => &[IssueTx, ReadLedger, Validate, ProposeRiskLine, FileClaim],
                Role::Cgi => {
                    &[IssueTx, ReadLedger, Validate, ProposeRiskLine, DecideGuarantee, Arbitrate]
                }
                Role::Auditor => &[ReadLedger, Validate, AuditRead, Arbitrate],
                Role::GovernmentAgency => &[ReadLedger, Validate, AuditRead],
                Role::InvestorShareholder => &[ReadLedger, Validate],
            }
        };
        let rules = Role::ALL
            .into_iter()
            .map(|role| {
                let row = Permission::ALL
                    .into_iter()
                    .map(|p| (p, allow(role).contains(&p)))
                    .collect();
                (role, row)
            })
            .collect();
        PermissionMatrix { version: Self::VERSION, rules }
    }

    pub fn from_json(bytes: &[u8]) -> Result<PermissionMatrix, MatrixError> {
        let m: PermissionMatrix =
            serde_json::from_slice(bytes).map_err(|e| MatrixError::Parse(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), MatrixError> {
        if self.version != Self::VERSION {
            return Err(MatrixError::Version(self.version));
        }
        for role in Role::ALL {
            for p in Permission::ALL {
                let allowed = self
                    .rules
                    .get(&role)
                    .and_then(|row| row.get(&p))
                    .ok_or(MatrixError::Missing(role, p))?;
                let read_only = matches!(role, Role::Auditor | Role::GovernmentAgency);
                // Arbitrate is the auditor's dispute seat, not general write access.
                let exempt = role == Role::Auditor && p == Permission::Arbitrate;
                if read_only && *allowed && p.is_mutating() && !exempt {
                    return Err(MatrixError::ReadOnlyViolated(role, p));
                }
            }
        }
        Ok(())
    }

    pub fn allows(&self, role: Role, p: Permission) -> bool {
        // validate() guarantees totality; a missing entry is a construction bug.
        self.rules[&role][&p]
    }

    pub fn digest(&self) -> Digest {
        hash(&to_canonical(self).expect("matrix is canonical-serializable"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdmissionRecord {
    pub address: Address,
    pub public_key: PublicKey,
    pub role: Role,
    pub attestation_cid: ContentId,
    pub admitted_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub admitted_by: Option<Address>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revoked_at: Option<u64>,
}

impl AdmissionRecord {
    pub fn is_active(&self) -> bool {
        self.revoked_at.is_none()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegistryError {
    #[error("address is already admitted")]
    AlreadyAdmitted,
    #[error("attestation dossier not found in the document store")]
    AttestationMissing,
    #[error("admitter is not allowed to admit actors")]
    AdmitterUnauthorized,
    #[error("address is not registered")]
    NotFound,
    #[error("address is already revoked")]
    AlreadyRevoked,
    #[error("revoker is not allowed to revoke actors")]
    RevokerUnauthorized,
    #[error("address does not match the public key")]
    KeyMismatch,
}

impl RegistryError {
    pub fn code(&self) -> &'static str {
        match self {
            RegistryError::AlreadyAdmitted => "AlreadyAdmitted",
            RegistryError::AttestationMissing => "AttestationMissing",
            RegistryError::AdmitterUnauthorized => "AdmitterUnauthorized",
            RegistryError::NotFound => "NotFound",
            RegistryError::AlreadyRevoked => "AlreadyRevoked",
            RegistryError::RevokerUnauthorized => "RevokerUnauthorized",
            RegistryError::KeyMismatch => "KeyMismatch",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Denial {
    NotAdmitted,
    Revoked,
    RoleForbidden,
}

impl fmt::Display for Denial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Denial::NotAdmitted => "NotAdmitted",
            Denial::Revoked => "Revoked",
            Denial::RoleForbidden => "RoleForbidden",
        })
    }
}

/// Admission history per address. The last record is the current one.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registry {
    records: BTreeMap<Address, Vec<AdmissionRecord>>,
}

impl Registry {
    pub fn new() -> Registry {
        Registry::default()
    }

    pub fn latest(&self, address: &Address) -> Option<&AdmissionRecord> {
        self.records.get(address).and_then(|v| v.last())
    }

    pub fn active(&self, address: &Address) -> Option<&AdmissionRecord> {
        self.latest(address).filter(|r| r.is_active())
    }

    pub fn role_of(&self, address: &Address) -> Option<Role> {
        self.active(address).map(|r| r.role)
    }

    pub fn history(&self, address: &Address) -> &[AdmissionRecord] {
        self.records.get(address).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Public key of any address ever admitted (revoked keys still verify old blocks).
    pub fn public_key(&self, address: &Address) -> Option<PublicKey> {
        self.latest(address).map(|r| r.public_key)
    }

    /// Admit an actor. `admitter` is `None` only for genesis bootstrap.
    pub fn admit(
        &mut self,
        address: Address,
        public_key: PublicKey,
        role: Role,
        attestation_cid: ContentId,
        attestation_present: bool,
        admitter: Option<&Address>,
        now: u64,
    ) -> Result<&AdmissionRecord, RegistryError> {
        if let Some(admitter) = admitter {
            match self.role_of(admitter) {
                Some(r) if r.can_admit() => {}
                _ => return Err(RegistryError::AdmitterUnauthorized),
            }
        }
        if Address::from_public_key(&public_key) != address {
            return Err(RegistryError::KeyMismatch);
        }
        if self.active(&address).is_some() {
            return Err(RegistryError::AlreadyAdmitted);
        }
        if !attestation_present {
            return Err(RegistryError::AttestationMissing);
        }
        let entry = self.records.entry(address).or_default();
        entry.push(AdmissionRecord {
            address,
            public_key,
            role,
            attestation_cid,
            admitted_at: now,
            admitted_by: admitter.copied(),
            revoked_at: None,
        });
        Ok(entry.last().expect("just pushed"))
    }

    pub fn revoke(
        &mut self,
        address: &Address,
        revoker: &Address,
        now: u64,
    ) -> Result<&AdmissionRecord, RegistryError> {
        match self.role_of(revoker) {
            Some(r) if r.can_admit() => {}
            _ => return Err(RegistryError::RevokerUnauthorized),
        }
        let record = self
            .records
            .get_mut(address)
            .and_then(|v| v.last_mut())
            .ok_or(RegistryError::NotFound)?;
        if record.revoked_at.is_some() {
            return Err(RegistryError::AlreadyRevoked);
        }
        record.revoked_at = Some(now);
        Ok(record)
    }

    pub fn admission_status(&self, address: &Address) -> Result<&AdmissionRecord, Denial> {
        match self.latest(address) {
            None => Err(Denial::NotAdmitted),
            Some(r) if !r.is_active() => Err(Denial::Revoked),
            Some(r) => Ok(r),
        }
    }

    pub fn check_permission(
        &self,
        matrix: &PermissionMatrix,
        address: &Address,
        p: Permission,
    ) -> Result<Role, Denial> {
        let record = self.admission_status(address)?;
        if matrix.allows(record.role, p) {
            Ok(record.role)
        } else {
            Err(Denial::RoleForbidden)
        }
    }

    /// Active admissions sorted bytewise by address.
    pub fn validator_set(&self) -> Vec<Address> {
        // BTreeMap iteration is already address-ordered.
        self.records
            .iter()
            .filter(|(_, v)| v.last().is_some_and(|r| r.is_active()))
            .map(|(a, _)| *a)
            .collect()
    }

    pub fn active_records(&self) -> impl Iterator<Item = &AdmissionRecord> {
        self.records.values().filter_map(|v| v.last()).filter(|r| r.is_active())
    }
}
