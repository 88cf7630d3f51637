//! Equal-weight committee consensus: one scheduled proposer per round and
//! finality at ceil(2n/3) votes from the active validator set.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::to_canonical;
use crate::crypto::{hash_parts, Address, Digest, Keypair};
use crate::ledger::{execute_block, tx_root, vote_threshold, Block, Chain, Transaction, TxRejection, Vote};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConsensusError {
    #[error("validator set is empty")]
    EmptyValidatorSet,
}

/// index = BE u64 of the first 8 bytes of
/// hash(prev_hash ‖ canonical(height) [‖ canonical(retry)]) mod n.
/// The retry counter is appended only for retried rounds.
pub fn proposer_index(prev_hash: &Digest, height: u64, retry: u32, n: usize) -> Result<usize, ConsensusError> {
    if n == 0 {
        return Err(ConsensusError::EmptyValidatorSet);
    }
    let h = to_canonical(&height).expect("integers are canonical");
    let digest = if retry == 0 {
        hash_parts(&[&prev_hash.0, &h])
    } else {
        let r = to_canonical(&retry).expect("integers are canonical");
        hash_parts(&[&prev_hash.0, &h, &r])
    };
    let mut first = [0u8; 8];
    first.copy_from_slice(&digest.0[..8]);
    Ok((u64::from_be_bytes(first) % n as u64) as usize)
}

pub fn select_proposer(
    prev_hash: &Digest,
    height: u64,
    retry: u32,
    validators: &[Address],
) -> Result<Address, ConsensusError> {
    proposer_index(prev_hash, height, retry, validators.len()).map(|i| validators[i])
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Behavior {
    #[default]
    Honest,
    Offline,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum RoundOutcome {
    Finalized { block_hash: Digest },
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dropped {
    pub tx_hash: Digest,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Round {
    pub height: u64,
    pub retry: u32,
    pub proposer: Address,
    pub votes: usize,
    pub needed: usize,
    pub outcome: RoundOutcome,
    pub included: Vec<Digest>,
    pub dropped: Vec<Dropped>,
}

impl Round {
    pub fn finalized(&self) -> bool {
        matches!(self.outcome, RoundOutcome::Finalized { .. })
    }
}

/// Build the candidate block: pending transactions the proposer can apply
/// in order, with the resulting state root. Rejected ones are reported.
pub fn assemble_block(
    chain: &Chain,
    pending: &[Transaction],
    proposer: Address,
    retry: u32,
) -> (Block, Vec<(Digest, TxRejection)>) {
    let height = chain.state().next_height;
    let mut state = chain.state().clone();
    let mut included = Vec::new();
    let mut dropped = Vec::new();
    for tx in pending {
        match crate::ledger::apply_transaction(&mut state, tx, height) {
            Ok(()) => included.push(tx.clone()),
            Err(e) => dropped.push((tx.hash(), e)),
        }
    }
    state.next_height = height + 1;
    let block = Block {
        height,
        prev_hash: chain.tip_hash(),
        round: retry,
        proposer,
        tx_root: tx_root(&included),
        state_root: state.state_root(),
        transactions: included,
        finality_votes: Vec::new(),
    };
    (block, dropped)
}

/// Run one round. Validators missing from `behavior` are honest; validators
/// without a key in `keys` cannot act and are treated as offline. On success
/// the block is appended to `chain`.
pub fn run_round(
    chain: &mut Chain,
    pending: &[Transaction],
    behavior: &BTreeMap<Address, Behavior>,
    keys: &BTreeMap<Address, Keypair>,
    retry: u32,
) -> Round {
    let validators = chain.state().registry.validator_set();
    let height = chain.state().next_height;
    let needed = vote_threshold(validators.len());
    let honest = |a: &Address| keys.contains_key(a) && behavior.get(a).copied().unwrap_or_default() == Behavior::Honest;
    let failed = |proposer, reason: &str| Round {
        height,
        retry,
        proposer,
        votes: 0,
        needed,
        outcome: RoundOutcome::Failed { reason: reason.to_string() },
        included: vec![],
        dropped: vec![],
    };
    let proposer = match select_proposer(&chain.tip_hash(), height, retry, &validators) {
        Ok(p) => p,
        Err(_) => return failed(Address([0; 32]), "EmptyValidatorSet"),
    };
    if !honest(&proposer) {
        return failed(proposer, "ProposerOffline");
    }
    let (mut block, dropped) = assemble_block(chain, pending, proposer, retry);
    let block_hash = block.hash();
    let prev = chain.tip_hash();
    for v in validators.iter().filter(|v| honest(v)) {
        // Each voter re-executes the proposal before signing.
        let ok = execute_block(chain.state(), &block, &prev).is_ok_and(|s| s.state_root() == block.state_root);
        if ok {
            let sig = keys[v].sign(&block_hash.0);
            block.add_vote(Vote { validator: *v, signature: sig });
        }
    }
    let votes = block.finality_votes.len();
    let included: Vec<Digest> = block.transactions.iter().map(Transaction::hash).collect();
    let dropped = dropped.into_iter().map(|(tx_hash, e)| Dropped { tx_hash, reason: e.code().to_string() }).collect();
    if votes < needed {
        let mut r = failed(proposer, "InsufficientVotes");
        r.votes = votes;
        return r;
    }
    match chain.append(block) {
        Ok(()) => Round {
            height,
            retry,
            proposer,
            votes,
            needed,
            outcome: RoundOutcome::Finalized { block_hash },
            included,
            dropped,
        },
        Err(e) => {
            let mut r = failed(proposer, e.error.code());
            r.votes = votes;
            r
        }
    }
}
