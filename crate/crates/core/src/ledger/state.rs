//! Everything block application mutates. Its canonical hash is the state root.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::canonical::to_canonical;
use crate::config::DeploymentConfig;
use crate::contracts::{GuaranteeCase, LogEntry};
use crate::crypto::{hash, Address, Digest};
use crate::registry::Registry;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountState {
    pub balance: u64,
    /// Last accepted nonce; the next transaction must use a larger one.
    pub nonce: u64,
}

/// A transfer to the guarantee fund that references a case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeePayment {
    pub tx_hash: Digest,
    pub payer: Address,
    pub amount: u64,
    pub height: u64,
}

/// A case event as a notification: the actor plus the parties it concerns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub height: u64,
    pub time: u64,
    pub case_id: String,
    pub event: String,
    pub actor: Address,
    pub recipients: Vec<Address>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerState {
    pub config: DeploymentConfig,
    pub registry: Registry,
    pub accounts: BTreeMap<Address, AccountState>,
    pub cases: BTreeMap<String, GuaranteeCase>,
    pub fee_payments: BTreeMap<String, Vec<FeePayment>>,
    pub events: Vec<EventRecord>,
    pub last_timestamp: u64,
    /// Height the next block must carry.
    pub next_height: u64,
}

impl LedgerState {
    pub fn state_root(&self) -> Digest {
        hash(&to_canonical(self).expect("ledger state is canonical-serializable"))
    }

    pub fn balance(&self, address: &Address) -> u64 {
        self.accounts.get(address).map_or(0, |a| a.balance)
    }

    pub fn nonce(&self, address: &Address) -> u64 {
        self.accounts.get(address).map_or(0, |a| a.nonce)
    }

    pub(crate) fn record_events(&mut self, height: u64, case: &GuaranteeCase, entries: &[LogEntry]) {
        for entry in entries {
            let recipients = [case.borrower, case.bank, case.cgi]
                .into_iter()
                .filter(|a| *a != entry.actor)
                .collect();
            let seq = self.events.len() as u64;
            self.events.push(EventRecord {
                seq,
                height,
                time: entry.time,
                case_id: case.case_id.clone(),
                event: entry.event.name().to_string(),
                actor: entry.actor,
                recipients,
            });
        }
    }
}
