//! Signed transactions, hash-linked blocks and the rules for applying them.

pub mod state;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::to_canonical;
use crate::config::DeploymentConfig;
use crate::contracts::{self, guarantee_fund, ContractCall, ContractError};
use crate::crypto::{hash, verify_signature, Address, ContentId, Digest, Keypair, PublicKey, Signature};
use crate::registry::{Denial, Permission, RegistryError, Role};
use state::{FeePayment, LedgerState};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum AdminAction {
    Admit { address: Address, public_key: PublicKey, role: Role, attestation_cid: ContentId },
    Revoke { address: Address },
    /// Genesis only.
    Configure { config: DeploymentConfig },
    /// Genesis only: initial balances.
    Mint { address: Address, amount: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Payload {
    ValueTransfer {
        recipient: Address,
        amount: u64,
        /// Case the transfer pays a fee for.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reference: Option<String>,
    },
    ContractCall {
        call: ContractCall,
    },
    AdminAction {
        admin: AdminAction,
    },
}

impl Payload {
    /// Address the payload moves value to or acts upon, if any.
    pub fn counterparty(&self) -> Option<Address> {
        match self {
            Payload::ValueTransfer { recipient, .. } => Some(*recipient),
            Payload::AdminAction { admin } => match admin {
                AdminAction::Admit { address, .. }
                | AdminAction::Revoke { address }
                | AdminAction::Mint { address, .. } => Some(*address),
                AdminAction::Configure { .. } => None,
            },
            Payload::ContractCall { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnsignedTx {
    pub nonce: u64,
    pub sender: Address,
    pub payload: Payload,
    pub timestamp: u64,
}

impl UnsignedTx {
    pub fn signing_bytes(&self) -> Vec<u8> {
        to_canonical(self).expect("transaction is canonical-serializable")
    }

    pub fn sign(self, key: &Keypair) -> Result<Transaction, TxRejection> {
        if key.address() != self.sender {
            return Err(TxRejection::KeyMismatch);
        }
        let signature = key.sign(&self.signing_bytes());
        Ok(Transaction { nonce: self.nonce, sender: self.sender, payload: self.payload, timestamp: self.timestamp, signature })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transaction {
    pub nonce: u64,
    pub sender: Address,
    pub payload: Payload,
    pub timestamp: u64,
    pub signature: Signature,
}

impl Transaction {
    pub fn unsigned(&self) -> UnsignedTx {
        UnsignedTx { nonce: self.nonce, sender: self.sender, payload: self.payload.clone(), timestamp: self.timestamp }
    }

    pub fn hash(&self) -> Digest {
        hash(&to_canonical(self).expect("transaction is canonical-serializable"))
    }

    pub fn verify_signature(&self, pk: &PublicKey) -> bool {
        Address::from_public_key(pk) == self.sender
            && verify_signature(pk, &self.unsigned().signing_bytes(), &self.signature)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TxRejection {
    #[error("signature does not verify")]
    BadSignature,
    #[error("sender is not admitted")]
    NotAdmitted,
    #[error("sender is revoked")]
    Revoked,
    #[error("nonce does not exceed the last accepted nonce")]
    StaleNonce,
    #[error("sender role is not permitted to do this")]
    RoleForbidden,
    #[error("timestamp precedes the last accepted timestamp")]
    StaleTimestamp,
    #[error("sender balance is too low")]
    InsufficientBalance,
    #[error("action is only valid in the genesis block")]
    GenesisOnly,
    #[error("signing key does not belong to the sender")]
    KeyMismatch,
    #[error("invalid deployment configuration: {0}")]
    InvalidConfig(String),
    #[error("registry: {0}")]
    Registry(RegistryError),
    #[error("contract: {0}")]
    Contract(ContractError),
}

impl TxRejection {
    /// Stable machine-readable reason.
    pub fn code(&self) -> &'static str {
        match self {
            TxRejection::BadSignature => "BadSignature",
            TxRejection::NotAdmitted => "NotAdmitted",
            TxRejection::Revoked => "Revoked",
            TxRejection::StaleNonce => "StaleNonce",
            TxRejection::RoleForbidden => "RoleForbidden",
            TxRejection::StaleTimestamp => "StaleTimestamp",
            TxRejection::InsufficientBalance => "InsufficientBalance",
            TxRejection::GenesisOnly => "GenesisOnly",
            TxRejection::KeyMismatch => "KeyMismatch",
            TxRejection::InvalidConfig(_) => "InvalidConfig",
            TxRejection::Registry(e) => e.code(),
            TxRejection::Contract(e) => e.code(),
        }
    }
}

impl From<Denial> for TxRejection {
    fn from(d: Denial) -> Self {
        match d {
            Denial::NotAdmitted => TxRejection::NotAdmitted,
            Denial::Revoked => TxRejection::Revoked,
            Denial::RoleForbidden => TxRejection::RoleForbidden,
        }
    }
}

fn permission_for(payload: &Payload) -> Option<Permission> {
    match payload {
        Payload::ValueTransfer { .. } => Some(Permission::IssueTx),
        // Rulings come from read-only auditors too; the contract checks Arbitrate.
        Payload::ContractCall { call } if call.permission() == Permission::Arbitrate => None,
        Payload::ContractCall { .. } => Some(Permission::IssueTx),
        // Admission rights are governed by the registry, not the matrix.
        Payload::AdminAction { .. } => None,
    }
}

/// Admission, signature, nonce, timestamp and permission checks.
pub fn verify_transaction(state: &LedgerState, tx: &Transaction) -> Result<(), TxRejection> {
    let record = state.registry.admission_status(&tx.sender)?;
    if !tx.verify_signature(&record.public_key) {
        return Err(TxRejection::BadSignature);
    }
    if tx.nonce <= state.nonce(&tx.sender) {
        return Err(TxRejection::StaleNonce);
    }
    if tx.timestamp < state.last_timestamp {
        return Err(TxRejection::StaleTimestamp);
    }
    if let Some(p) = permission_for(&tx.payload) {
        state.registry.check_permission(&state.config.permission_matrix, &tx.sender, p)?;
    }
    Ok(())
}

fn debit(state: &mut LedgerState, from: &Address, amount: u64) -> Result<(), TxRejection> {
    let acct = state.accounts.entry(*from).or_default();
    acct.balance = acct.balance.checked_sub(amount).ok_or(TxRejection::InsufficientBalance)?;
    Ok(())
}

fn credit(state: &mut LedgerState, to: &Address, amount: u64) {
    let acct = state.accounts.entry(*to).or_default();
    acct.balance = acct.balance.saturating_add(amount);
}

/// Apply a transaction at `height`. On error `state` is unchanged.
pub fn apply_transaction(state: &mut LedgerState, tx: &Transaction, height: u64) -> Result<(), TxRejection> {
    if height == 0 {
        return apply_genesis_tx(state, tx);
    }
    verify_transaction(state, tx)?;
    let mut next = state.clone();
    execute_payload(&mut next, tx, height)?;
    let acct = next.accounts.entry(tx.sender).or_default();
    acct.nonce = tx.nonce;
    next.last_timestamp = tx.timestamp;
    *state = next;
    Ok(())
}

/// Genesis transactions come from the bootstrap admitter, which admits itself
/// first; its key is taken from that admission.
fn apply_genesis_tx(state: &mut LedgerState, tx: &Transaction) -> Result<(), TxRejection> {
    let Payload::AdminAction { admin } = &tx.payload else {
        return Err(TxRejection::GenesisOnly);
    };
    let pk = match (state.registry.public_key(&tx.sender), admin) {
        (Some(pk), _) => pk,
        (None, AdminAction::Admit { address, public_key, .. }) if *address == tx.sender => *public_key,
        (None, _) => return Err(TxRejection::NotAdmitted),
    };
    if !tx.verify_signature(&pk) {
        return Err(TxRejection::BadSignature);
    }
    if tx.nonce <= state.nonce(&tx.sender) {
        return Err(TxRejection::StaleNonce);
    }
    let mut next = state.clone();
    match admin {
        AdminAction::Admit { address, public_key, role, attestation_cid } => {
            if !role.can_admit() {
                return Err(TxRejection::Registry(RegistryError::AdmitterUnauthorized));
            }
            next.registry
                .admit(*address, *public_key, *role, *attestation_cid, true, None, tx.timestamp)
                .map_err(TxRejection::Registry)?;
        }
        AdminAction::Configure { config } => {
            config.permission_matrix.validate().map_err(|e| TxRejection::InvalidConfig(e.to_string()))?;
            if let Some(r) = &config.ruleset {
                r.validate().map_err(|e| TxRejection::InvalidConfig(e.to_string()))?;
            }
            next.config = config.clone();
        }
        AdminAction::Mint { address, amount } => credit(&mut next, address, *amount),
        AdminAction::Revoke { .. } => return Err(TxRejection::GenesisOnly),
    }
    next.accounts.entry(tx.sender).or_default().nonce = tx.nonce;
    next.last_timestamp = tx.timestamp;
    *state = next;
    Ok(())
}

fn execute_payload(state: &mut LedgerState, tx: &Transaction, height: u64) -> Result<(), TxRejection> {
    match &tx.payload {
        Payload::ValueTransfer { recipient, amount, reference } => {
            debit(state, &tx.sender, *amount)?;
            credit(state, recipient, *amount);
            if let (Some(case_id), true) = (reference, *recipient == guarantee_fund()) {
                state.fee_payments.entry(case_id.clone()).or_default().push(FeePayment {
                    tx_hash: tx.hash(),
                    payer: tx.sender,
                    amount: *amount,
                    height,
                });
            }
        }
        Payload::ContractCall { call } => {
            let outcome = contracts::execute(state, &tx.sender, call, tx.timestamp).map_err(TxRejection::Contract)?;
            for t in &outcome.transfers {
                debit(state, &t.from, t.amount)?;
                credit(state, &t.to, t.amount);
            }
            state.record_events(height, &outcome.case, &outcome.emitted);
            state.cases.insert(outcome.case.case_id.clone(), outcome.case);
        }
        Payload::AdminAction { admin } => match admin {
            AdminAction::Admit { address, public_key, role, attestation_cid } => {
                state
                    .registry
                    .admit(*address, *public_key, *role, *attestation_cid, true, Some(&tx.sender), tx.timestamp)
                    .map_err(TxRejection::Registry)?;
            }
            AdminAction::Revoke { address } => {
                state.registry.revoke(address, &tx.sender, tx.timestamp).map_err(TxRejection::Registry)?;
            }
            AdminAction::Configure { .. } | AdminAction::Mint { .. } => return Err(TxRejection::GenesisOnly),
        },
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vote {
    pub validator: Address,
    pub signature: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub height: u64,
    pub prev_hash: Digest,
    /// Retry counter of the round that produced the block.
    pub round: u32,
    pub proposer: Address,
    pub tx_root: Digest,
    pub state_root: Digest,
    pub transactions: Vec<Transaction>,
    pub finality_votes: Vec<Vote>,
}

/// The hashed part of a block: everything except the votes on it.
#[derive(Serialize)]
struct BlockBody<'a> {
    height: u64,
    prev_hash: &'a Digest,
    round: u32,
    proposer: &'a Address,
    tx_root: &'a Digest,
    state_root: &'a Digest,
    transactions: &'a [Transaction],
}

pub fn tx_root(txs: &[Transaction]) -> Digest {
    let mut bytes = Vec::with_capacity(txs.len() * 32);
    for tx in txs {
        bytes.extend_from_slice(&tx.hash().0);
    }
    hash(&bytes)
}

/// ceil(2n/3) votes finalize a block among n validators.
pub fn vote_threshold(n: usize) -> usize {
    (2 * n).div_ceil(3)
}

impl Block {
    pub fn hash(&self) -> Digest {
        let body = BlockBody {
            height: self.height,
            prev_hash: &self.prev_hash,
            round: self.round,
            proposer: &self.proposer,
            tx_root: &self.tx_root,
            state_root: &self.state_root,
            transactions: &self.transactions,
        };
        hash(&to_canonical(&body).expect("block is canonical-serializable"))
    }

    pub fn to_canonical_line(&self) -> String {
        String::from_utf8(to_canonical(self).expect("block is canonical-serializable")).expect("canonical JSON is UTF-8")
    }

    /// Add a vote, keeping votes sorted by validator.
    pub fn add_vote(&mut self, vote: Vote) {
        let pos = self.finality_votes.partition_point(|v| v.validator < vote.validator);
        self.finality_votes.insert(pos, vote);
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockError {
    #[error("line is not a well-formed block: {0}")]
    Malformed(String),
    #[error("block bytes are not in canonical form")]
    NonCanonical,
    #[error("expected height {expected}, got {got}")]
    HeightMismatch { expected: u64, got: u64 },
    #[error("prev_hash does not match the preceding block")]
    PrevHashMismatch,
    #[error("tx_root does not match the transactions")]
    TxRootMismatch,
    #[error("proposer is not the scheduled proposer")]
    WrongProposer,
    #[error("vote from {0} is invalid")]
    InvalidVote(Address),
    #[error("{got} valid votes, {need} required")]
    InsufficientVotes { got: usize, need: usize },
    #[error("transaction {index} rejected: {reason}")]
    ContainsInvalidTransaction { index: usize, reason: TxRejection },
    #[error("state_root does not match the replayed state")]
    StateRootMismatch,
}

impl BlockError {
    pub fn code(&self) -> &'static str {
        match self {
            BlockError::Malformed(_) => "Malformed",
            BlockError::NonCanonical => "NonCanonical",
            BlockError::HeightMismatch { .. } => "HeightMismatch",
            BlockError::PrevHashMismatch => "PrevHashMismatch",
            BlockError::TxRootMismatch => "TxRootMismatch",
            BlockError::WrongProposer => "WrongProposer",
            BlockError::InvalidVote(_) => "InvalidVote",
            BlockError::InsufficientVotes { .. } => "InsufficientVotes",
            BlockError::ContainsInvalidTransaction { .. } => "ContainsInvalidTransaction",
            BlockError::StateRootMismatch => "StateRootMismatch",
        }
    }
}

/// Count votes from the validator set. Any vote that is not a valid, unique
/// signature over the block hash by a current validator fails the block.
pub fn check_votes(state: &LedgerState, block: &Block, block_hash: &Digest) -> Result<usize, BlockError> {
    let validators = state.registry.validator_set();
    let mut prev: Option<Address> = None;
    for vote in &block.finality_votes {
        if prev.is_some_and(|p| p >= vote.validator) || validators.binary_search(&vote.validator).is_err() {
            return Err(BlockError::InvalidVote(vote.validator));
        }
        let pk = state.registry.public_key(&vote.validator).ok_or(BlockError::InvalidVote(vote.validator))?;
        if !verify_signature(&pk, &block_hash.0, &vote.signature) {
            return Err(BlockError::InvalidVote(vote.validator));
        }
        prev = Some(vote.validator);
    }
    let got = block.finality_votes.len();
    let need = vote_threshold(validators.len());
    if got < need {
        return Err(BlockError::InsufficientVotes { got, need });
    }
    Ok(got)
}

/// Apply the transactions of a proposed block and return the resulting
/// state. Links, proposer and transaction validity are checked; votes and the
/// declared state root are not.
pub fn execute_block(state: &LedgerState, block: &Block, prev_hash: &Digest) -> Result<LedgerState, BlockError> {
    if block.height != state.next_height {
        return Err(BlockError::HeightMismatch { expected: state.next_height, got: block.height });
    }
    if block.prev_hash != *prev_hash {
        return Err(BlockError::PrevHashMismatch);
    }
    if block.tx_root != tx_root(&block.transactions) {
        return Err(BlockError::TxRootMismatch);
    }
    if block.height > 0 {
        let validators = state.registry.validator_set();
        let expected = crate::consensus::select_proposer(prev_hash, block.height, block.round, &validators)
            .map_err(|_| BlockError::WrongProposer)?;
        if expected != block.proposer {
            return Err(BlockError::WrongProposer);
        }
    }
    let mut next = state.clone();
    for (index, tx) in block.transactions.iter().enumerate() {
        apply_transaction(&mut next, tx, block.height)
            .map_err(|reason| BlockError::ContainsInvalidTransaction { index, reason })?;
    }
    next.next_height = block.height + 1;
    Ok(next)
}

/// Full validation of a finalized block against the state before it.
pub fn validate_block(state: &LedgerState, block: &Block, prev_hash: &Digest) -> Result<LedgerState, BlockError> {
    let next = execute_block(state, block, prev_hash)?;
    if block.height > 0 {
        check_votes(state, block, &block.hash())?;
    } else if !block.finality_votes.is_empty() {
        return Err(BlockError::InvalidVote(block.finality_votes[0].validator));
    }
    if next.state_root() != block.state_root {
        return Err(BlockError::StateRootMismatch);
    }
    Ok(next)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("fail height={height} {error}")]
pub struct ChainFailure {
    pub height: u64,
    pub error: BlockError,
}

/// A verified chain and the state after its last block.
#[derive(Debug, Clone)]
pub struct Chain {
    blocks: Vec<Block>,
    hashes: Vec<Digest>,
    state: LedgerState,
}

impl Default for Chain {
    fn default() -> Self {
        Chain::new()
    }
}

impl Chain {
    pub fn new() -> Chain {
        Chain { blocks: Vec::new(), hashes: Vec::new(), state: LedgerState::default() }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn height(&self) -> Option<u64> {
        self.blocks.last().map(|b| b.height)
    }

    pub fn state(&self) -> &LedgerState {
        &self.state
    }

    pub fn state_root(&self) -> Digest {
        self.state.state_root()
    }

    pub fn tip_hash(&self) -> Digest {
        self.hashes.last().copied().unwrap_or(Digest::ZERO)
    }

    pub fn block_hash(&self, height: u64) -> Option<Digest> {
        self.hashes.get(height as usize).copied()
    }

    /// Validate and append a finalized block. On error the chain is unchanged.
    pub fn append(&mut self, block: Block) -> Result<(), ChainFailure> {
        let height = block.height;
        let next = validate_block(&self.state, &block, &self.tip_hash())
            .map_err(|error| ChainFailure { height, error })?;
        self.hashes.push(block.hash());
        self.blocks.push(block);
        self.state = next;
        Ok(())
    }

    /// Every transaction sent by or addressed to `address`, in chain order.
    pub fn account_history(&self, address: &Address) -> Vec<(u64, &Transaction)> {
        self.blocks
            .iter()
            .flat_map(|b| b.transactions.iter().map(move |t| (b.height, t)))
            .filter(|(_, t)| t.sender == *address || t.payload.counterparty() == Some(*address))
            .collect()
    }

    /// JSON-lines: one canonical block per line, genesis first.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for b in &self.blocks {
            out.push_str(&b.to_canonical_line());
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for Chain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "chain height={:?} root={}", self.height(), self.state_root())
    }
}

/// Parse one JSON-lines block, requiring its bytes to be canonical.
pub fn parse_block_line(line: &[u8]) -> Result<Block, BlockError> {
    let block: Block = serde_json::from_slice(line).map_err(|e| BlockError::Malformed(e.to_string()))?;
    let again = to_canonical(&block).map_err(|e| BlockError::Malformed(e.to_string()))?;
    if again != line {
        return Err(BlockError::NonCanonical);
    }
    Ok(block)
}

/// Verify a JSON-lines chain from genesis. Returns the verified chain or the
/// first failing height (for an unparseable line, its line index).
pub fn verify_chain(bytes: &[u8]) -> Result<Chain, ChainFailure> {
    let mut chain = Chain::new();
    let body = bytes.strip_suffix(b"\n").unwrap_or(bytes);
    if body.is_empty() {
        return Ok(chain);
    }
    for (i, line) in body.split(|b| *b == b'\n').enumerate() {
        let block = parse_block_line(line).map_err(|error| ChainFailure { height: i as u64, error })?;
        if block.height != i as u64 {
            return Err(ChainFailure {
                height: i as u64,
                error: BlockError::HeightMismatch { expected: i as u64, got: block.height },
            });
        }
        chain.append(block)?;
    }
    Ok(chain)
}
