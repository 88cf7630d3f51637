//! A desk-scale network in one process: the finalized chain, the pending
//! transaction pool, the document store and the custodial wallet of every
//! actor. Actions arrive as named operations with JSON arguments, are turned
//! into signed transactions, dry-run against the pending state and queued
//! for the next consensus round.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::canonical::to_canonical;
use crate::config::DeploymentConfig;
use crate::consensus::{self, Behavior, Round};
use crate::contracts::tasks::fee_paid_exactly;
use crate::contracts::{
    certificate_terms, guarantee_fund, ArbiterSeat, BankEvaluation, CaseState, ContractCall, ContractError,
    DisputeStep, GuaranteeCase, Installment, PaymentEvent, RiskLineStep, Ruling,
};
use crate::crypto::{derive_seed, Address, ContentId, Digest, Keypair};
use crate::docstore::{AccessPolicy, DirStore, DocError, DocStore, RoleKeyring};
use crate::ledger::state::LedgerState;
use crate::ledger::{
    apply_transaction, tx_root, verify_chain, AdminAction, Block, Chain, ChainFailure, Payload, Transaction,
    TxRejection, UnsignedTx,
};
use crate::registry::Role;

#[derive(Debug, Error)]
pub enum NodeError {
    #[error("{0}")]
    Rejected(TxRejection),
    #[error("document store: {0}")]
    Doc(#[from] DocError),
    #[error("malformed arguments: {0}")]
    Parse(String),
    #[error("unknown action {0}")]
    UnknownAction(String),
    #[error("no signing key held for {0}")]
    NoKey(Address),
    #[error("fee already paid")]
    FeeAlreadyPaid,
    #[error("invalid network spec: {0}")]
    Spec(String),
    #[error("chain: {0}")]
    Chain(#[from] ChainFailure),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl NodeError {
    pub fn code(&self) -> &'static str {
        match self {
            NodeError::Rejected(r) => r.code(),
            NodeError::Doc(e) => e.code(),
            NodeError::Parse(_) => "ParseError",
            NodeError::UnknownAction(_) => "UnknownAction",
            NodeError::NoKey(_) => "NoKey",
            NodeError::FeeAlreadyPaid => "FeeAlreadyPaid",
            NodeError::Spec(_) => "InvalidSpec",
            NodeError::Chain(_) => "ChainFailure",
            NodeError::Io(_) => "Io",
        }
    }
}

impl From<TxRejection> for NodeError {
    fn from(r: TxRejection) -> Self {
        NodeError::Rejected(r)
    }
}

impl From<ContractError> for NodeError {
    fn from(e: ContractError) -> Self {
        NodeError::Rejected(TxRejection::Contract(e))
    }
}

fn parse<T: DeserializeOwned>(args: &Value) -> Result<T, NodeError> {
    let v = if args.is_null() { json!({}) } else { args.clone() };
    serde_json::from_value(v).map_err(|e| NodeError::Parse(e.to_string()))
}

/// A named operation on a case with JSON arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionRequest {
    pub op: String,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub args: Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SubmitArgs {
    bank: Address,
    cgi: Address,
    principal: u64,
    schedule: Vec<Installment>,
    application: Value,
    kyc: BTreeMap<String, Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KycArgs {
    kyc: BTreeMap<String, Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DecideArgs {
    approve: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GrantArgs {
    #[serde(default)]
    document: Option<ContentId>,
}

#[derive(Deserialize)]
#[serde(tag = "pathway", rename_all = "snake_case", deny_unknown_fields)]
enum EvaluateArgs {
    ExAnte {
        accept: bool,
    },
    ExPost {
        borrower: Address,
        cgi: Address,
        principal: u64,
        schedule: Vec<Installment>,
        application: Value,
        collateral_sufficient: bool,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PayFeeArgs {
    #[serde(default)]
    amount: Option<u64>,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum PaymentArgs {
    Regular { amount: u64 },
    Missed,
    CreditNote { note: Value },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ClaimArgs {
    claimed_amount: u64,
    #[serde(default)]
    recovery_actions: Vec<Value>,
}

#[derive(Deserialize)]
#[serde(tag = "step", rename_all = "snake_case", deny_unknown_fields)]
enum DisputeArgs {
    Open {
        #[serde(default)]
        evidence: Vec<Value>,
    },
    Rule {
        seat: ArbiterSeat,
        ruling: Ruling,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NoArgs {}

fn policy(roles: &[Role]) -> AccessPolicy {
    AccessPolicy::new(roles.iter().copied()).expect("non-empty policy")
}

/// One actor of a network spec.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorSpec {
    pub label: String,
    pub role: Role,
    #[serde(default)]
    pub balance: u64,
    /// Admit during bootstrap. Actors left out are admitted later or never.
    #[serde(default = "yes")]
    pub admit: bool,
}

fn yes() -> bool {
    true
}

/// Everything needed to create a network deterministically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub seed: Digest,
    pub actors: Vec<ActorSpec>,
    pub config: DeploymentConfig,
    #[serde(default)]
    pub fund_balance: u64,
}

impl NetworkSpec {
    pub fn keypair(&self, label: &str) -> Keypair {
        Keypair::from_seed(derive_seed(&self.seed.0, &format!("actor/{label}")))
    }

    pub fn keyring(&self) -> RoleKeyring {
        RoleKeyring::derive(&derive_seed(&self.seed.0, "role-keys"))
    }

    pub fn labels(&self) -> BTreeMap<String, Address> {
        self.actors.iter().map(|a| (a.label.clone(), self.keypair(&a.label).address())).collect()
    }

    fn validate(&self) -> Result<(), NodeError> {
        let mut seen = std::collections::BTreeSet::new();
        for a in &self.actors {
            if !seen.insert(a.label.as_str()) {
                return Err(NodeError::Spec(format!("duplicate actor label {}", a.label)));
            }
        }
        if !self.actors.iter().any(|a| a.role == Role::Cgi && a.admit) {
            return Err(NodeError::Spec("at least one admitted CGI actor is required".into()));
        }
        self.config.permission_matrix.validate().map_err(|e| NodeError::Spec(e.to_string()))?;
        Ok(())
    }

    /// Genesis signer: the first GovernmentAgency, else the first CGI.
    fn bootstrap_actors(&self) -> (usize, Option<usize>) {
        let first = |role| self.actors.iter().position(|a| a.role == role && a.admit);
        let cgi = first(Role::Cgi).expect("validated");
        match first(Role::GovernmentAgency) {
            Some(gov) => (gov, Some(cgi)),
            None => (cgi, None),
        }
    }
}

/// Store an attestation dossier for an actor and return its id.
pub fn store_attestation(docs: &DocStore, address: &Address, role: Role) -> Result<ContentId, DocError> {
    let dossier = json!({"address": address, "role": role, "attested": true});
    let bytes = to_canonical(&dossier).expect("dossier is canonical-serializable");
    docs.put(&bytes, &policy(&[Role::Cgi, Role::GovernmentAgency]))
}

/// Build the genesis block: bootstrap admissions, configuration and mints.
pub fn genesis_block(spec: &NetworkSpec, docs: &DocStore) -> Result<Block, NodeError> {
    spec.validate()?;
    let (signer_ix, other_ix) = spec.bootstrap_actors();
    let signer = spec.keypair(&spec.actors[signer_ix].label);
    let mut actions = Vec::new();
    for ix in std::iter::once(signer_ix).chain(other_ix) {
        let a = &spec.actors[ix];
        let kp = spec.keypair(&a.label);
        let cid = store_attestation(docs, &kp.address(), a.role)?;
        actions.push(AdminAction::Admit {
            address: kp.address(),
            public_key: kp.public_key(),
            role: a.role,
            attestation_cid: cid,
        });
    }
    actions.push(AdminAction::Configure { config: spec.config.clone() });
    if spec.fund_balance > 0 {
        actions.push(AdminAction::Mint { address: guarantee_fund(), amount: spec.fund_balance });
    }
    for a in spec.actors.iter().filter(|a| a.balance > 0) {
        actions.push(AdminAction::Mint { address: spec.keypair(&a.label).address(), amount: a.balance });
    }
    let mut state = LedgerState::default();
    let mut txs = Vec::new();
    for (i, admin) in actions.into_iter().enumerate() {
        let tx = UnsignedTx {
            nonce: i as u64 + 1,
            sender: signer.address(),
            payload: Payload::AdminAction { admin },
            timestamp: 0,
        }
        .sign(&signer)?;
        apply_transaction(&mut state, &tx, 0)?;
        txs.push(tx);
    }
    state.next_height = 1;
    Ok(Block {
        height: 0,
        prev_hash: Digest::ZERO,
        round: 0,
        proposer: signer.address(),
        tx_root: tx_root(&txs),
        state_root: state.state_root(),
        transactions: txs,
        finality_votes: Vec::new(),
    })
}

#[derive(Debug)]
pub struct Node {
    chain: Chain,
    pending: Vec<Transaction>,
    pending_state: LedgerState,
    docs: DocStore,
    wallet: BTreeMap<Address, Keypair>,
    labels: BTreeMap<String, Address>,
    behavior: BTreeMap<Address, Behavior>,
    retry: u32,
    chain_file: Option<PathBuf>,
}

impl Node {
    /// Create a network from a spec: genesis plus one round admitting the
    /// remaining actors (signed by the first CGI).
    pub fn bootstrap(spec: &NetworkSpec, docs: DocStore) -> Result<Node, NodeError> {
        let genesis = genesis_block(spec, &docs)?;
        let mut chain = Chain::new();
        chain.append(genesis)?;
        let mut node = Node::with_chain(spec, chain, docs);
        let (signer_ix, other_ix) = spec.bootstrap_actors();
        let cgi_ix = if spec.actors[signer_ix].role == Role::Cgi { signer_ix } else { other_ix.expect("cgi") };
        let admitter = node.labels[&spec.actors[cgi_ix].label];
        let rest: Vec<&ActorSpec> = spec
            .actors
            .iter()
            .enumerate()
            .filter(|(i, a)| a.admit && *i != signer_ix && Some(*i) != other_ix)
            .map(|(_, a)| a)
            .collect();
        if !rest.is_empty() {
            for a in rest {
                let address = node.labels[&a.label];
                node.admit(&admitter, &address, a.role)?;
            }
            let round = node.run_round(&BTreeMap::new());
            if !round.finalized() {
                return Err(NodeError::Spec(format!("bootstrap round failed: {:?}", round.outcome)));
            }
        }
        Ok(node)
    }

    /// Wrap an already verified chain. Keys come from `spec`.
    pub fn with_chain(spec: &NetworkSpec, chain: Chain, docs: DocStore) -> Node {
        let wallet = spec.actors.iter().map(|a| {
            let kp = spec.keypair(&a.label);
            (kp.address(), kp)
        });
        let pending_state = chain.state().clone();
        Node {
            chain,
            pending: Vec::new(),
            pending_state,
            docs,
            wallet: wallet.collect(),
            labels: spec.labels(),
            behavior: BTreeMap::new(),
            retry: 0,
            chain_file: None,
        }
    }

    /// Open a persisted network: `config/network.json`, `chain.jsonl`,
    /// `docstore/`.
    pub fn open_dir(dir: &Path) -> Result<Node, NodeError> {
        let spec: NetworkSpec = serde_json::from_slice(&fs::read(dir.join("config").join("network.json"))?)
            .map_err(|e| NodeError::Spec(e.to_string()))?;
        let docs = DocStore::new(Box::new(DirStore::open(dir.join("docstore"))?), spec.keyring());
        let chain = verify_chain(&fs::read(dir.join("chain.jsonl"))?)?;
        let mut node = Node::with_chain(&spec, chain, docs);
        node.chain_file = Some(dir.join("chain.jsonl"));
        Ok(node)
    }

    /// Create a fresh persisted network in `dir`.
    pub fn init_dir(dir: &Path, spec: &NetworkSpec) -> Result<Node, NodeError> {
        fs::create_dir_all(dir.join("config"))?;
        let spec_bytes = serde_json::to_vec_pretty(spec).map_err(|e| NodeError::Spec(e.to_string()))?;
        fs::write(dir.join("config").join("network.json"), spec_bytes)?;
        let docs = DocStore::new(Box::new(DirStore::open(dir.join("docstore"))?), spec.keyring());
        let mut node = Node::bootstrap(spec, docs)?;
        node.persist_to(&dir.join("chain.jsonl"))?;
        Ok(node)
    }

    /// Write the whole chain to `path` and append every later block.
    pub fn persist_to(&mut self, path: &Path) -> Result<(), NodeError> {
        let tmp = path.with_extension("jsonl.tmp");
        fs::write(&tmp, self.chain.to_jsonl())?;
        fs::rename(&tmp, path)?;
        self.chain_file = Some(path.to_path_buf());
        Ok(())
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn state(&self) -> &LedgerState {
        self.chain.state()
    }

    /// Finalized state plus every queued transaction.
    pub fn pending_state(&self) -> &LedgerState {
        &self.pending_state
    }

    pub fn pending(&self) -> &[Transaction] {
        &self.pending
    }

    pub fn docs(&self) -> &DocStore {
        &self.docs
    }

    pub fn labels(&self) -> &BTreeMap<String, Address> {
        &self.labels
    }

    pub fn address_of(&self, label: &str) -> Option<Address> {
        self.labels.get(label).copied()
    }

    pub fn label_of(&self, address: &Address) -> Option<&str> {
        self.labels.iter().find(|(_, a)| *a == address).map(|(l, _)| l.as_str())
    }

    pub fn keypair(&self, address: &Address) -> Option<&Keypair> {
        self.wallet.get(address)
    }

    /// Set the standing behavior of validators (default Honest).
    pub fn set_behavior(&mut self, address: Address, behavior: Behavior) {
        self.behavior.insert(address, behavior);
    }

    /// Sign `payload` for `sender`, dry-run it on top of the pending pool
    /// and queue it. Returns the transaction hash.
    pub fn submit_payload(&mut self, sender: &Address, payload: Payload) -> Result<Digest, NodeError> {
        let tx = self.sign_next(sender, payload)?;
        self.submit_tx(tx)
    }

    fn sign_next(&self, sender: &Address, payload: Payload) -> Result<Transaction, NodeError> {
        let key = self.wallet.get(sender).ok_or(NodeError::NoKey(*sender))?;
        Ok(UnsignedTx {
            nonce: self.pending_state.nonce(sender) + 1,
            sender: *sender,
            payload,
            timestamp: self.pending_state.next_height,
        }
        .sign(key)?)
    }

    /// Would `act` accept this request right now? Nothing is queued, though
    /// documents the action stores are written.
    pub fn dry_run(&self, actor: &Address, case_id: &str, req: &ActionRequest) -> Result<(), NodeError> {
        let payload = self.build_payload(actor, case_id, req)?;
        let tx = self.sign_next(actor, payload)?;
        let mut next = self.pending_state.clone();
        apply_transaction(&mut next, &tx, self.pending_state.next_height)?;
        Ok(())
    }

    /// Queue an externally signed transaction after a dry run.
    pub fn submit_tx(&mut self, tx: Transaction) -> Result<Digest, NodeError> {
        let mut next = self.pending_state.clone();
        apply_transaction(&mut next, &tx, self.pending_state.next_height)?;
        self.pending_state = next;
        let h = tx.hash();
        self.pending.push(tx);
        Ok(h)
    }

    pub fn transfer(
        &mut self,
        sender: &Address,
        recipient: &Address,
        amount: u64,
        reference: Option<String>,
    ) -> Result<Digest, NodeError> {
        self.submit_payload(sender, Payload::ValueTransfer { recipient: *recipient, amount, reference })
    }

    /// Admit an actor held in the wallet, storing its attestation first.
    pub fn admit(&mut self, admitter: &Address, address: &Address, role: Role) -> Result<Digest, NodeError> {
        let public_key = self.wallet.get(address).ok_or(NodeError::NoKey(*address))?.public_key();
        let cid = store_attestation(&self.docs, address, role)?;
        self.admit_with(admitter, address, public_key, role, cid)
    }

    /// Admit with an explicit attestation id, which must resolve in the store.
    pub fn admit_with(
        &mut self,
        admitter: &Address,
        address: &Address,
        public_key: crate::crypto::PublicKey,
        role: Role,
        attestation_cid: ContentId,
    ) -> Result<Digest, NodeError> {
        if !self.docs.contains(&attestation_cid) {
            return Err(TxRejection::Registry(crate::registry::RegistryError::AttestationMissing).into());
        }
        let admin = AdminAction::Admit { address: *address, public_key, role, attestation_cid };
        self.submit_payload(admitter, Payload::AdminAction { admin })
    }

    pub fn revoke(&mut self, revoker: &Address, address: &Address) -> Result<Digest, NodeError> {
        self.submit_payload(revoker, Payload::AdminAction { admin: AdminAction::Revoke { address: *address } })
    }

    /// Case as seen by the pending pool (what the next action will act on).
    fn pending_case(&self, case_id: &str) -> Result<&GuaranteeCase, NodeError> {
        self.pending_state.cases.get(case_id).ok_or_else(|| ContractError::UnknownCase.into())
    }

    fn put_json(&self, value: &Value, roles: &[Role]) -> Result<ContentId, NodeError> {
        let bytes = to_canonical(value).map_err(|e| NodeError::Parse(e.to_string()))?;
        Ok(self.docs.put(&bytes, &policy(roles))?)
    }

    /// Translate a named action into a payload, storing any documents it
    /// carries.
    pub fn build_payload(&self, actor: &Address, case_id: &str, req: &ActionRequest) -> Result<Payload, NodeError> {
        let case_id = case_id.to_string();
        let call = match req.op.as_str() {
            "submit_application" => {
                let a: SubmitArgs = parse(&req.args)?;
                let application_cid = self.put_json(&a.application, &[Role::Borrower, Role::Cgi])?;
                let dossier = Value::Object(a.kyc.clone().into_iter().collect());
                let dossier_cid = self.put_json(&dossier, &[Role::Borrower, Role::Cgi])?;
                ContractCall::SubmitApplication {
                    case_id,
                    bank: a.bank,
                    cgi: a.cgi,
                    application_cid,
                    principal: a.principal,
                    schedule: a.schedule,
                    dossier_cid,
                    provided_fields: a.kyc.into_keys().collect(),
                }
            }
            "supplement_kyc" => {
                let a: KycArgs = parse(&req.args)?;
                let dossier = Value::Object(a.kyc.clone().into_iter().collect());
                let dossier_cid = self.put_json(&dossier, &[Role::Borrower, Role::Cgi])?;
                ContractCall::SupplementKyc { case_id, dossier_cid, provided_fields: a.kyc.into_keys().collect() }
            }
            "cgi_decide_guarantee" => {
                let a: DecideArgs = parse(&req.args)?;
                ContractCall::CgiDecideGuarantee { case_id, approve: a.approve }
            }
            "grant_to_bank" => {
                let a: GrantArgs = parse(&req.args)?;
                let case = self.pending_case(&case_id)?;
                let original = a.document.unwrap_or(case.application_cid);
                let granted = self.docs.grant_to_bank(case, &original, actor)?;
                ContractCall::GrantToBank { case_id, original_cid: original, granted_cid: granted }
            }
            "auto_submit_loan_request" => {
                let _: NoArgs = parse(&req.args)?;
                ContractCall::AutoSubmitLoanRequest { case_id }
            }
            "bank_evaluate_loan" => {
                let evaluation = match parse::<EvaluateArgs>(&req.args)? {
                    EvaluateArgs::ExAnte { accept } => BankEvaluation::ExAnte { accept },
                    EvaluateArgs::ExPost { borrower, cgi, principal, schedule, application, collateral_sufficient } => {
                        let application_cid = self.put_json(&application, &[Role::Borrower, Role::Bank, Role::Cgi])?;
                        BankEvaluation::ExPost { borrower, cgi, application_cid, principal, schedule, collateral_sufficient }
                    }
                };
                ContractCall::BankEvaluateLoan { case_id, evaluation }
            }
            "bank_request_guarantee" => {
                let _: NoArgs = parse(&req.args)?;
                ContractCall::BankRequestGuarantee { case_id }
            }
            "risk_line_step" => {
                let action: RiskLineStep = parse(&req.args)?;
                ContractCall::RiskLineStep { case_id, action }
            }
            "pay_fee" => {
                let a: PayFeeArgs = parse(&req.args)?;
                let case = self.pending_case(&case_id)?;
                if case.state != CaseState::FeePending {
                    return Err(ContractError::WrongState { op: "pay_fee".into(), state: case.state }.into());
                }
                let fee = case.fee.as_ref().expect("FeePending implies a fee");
                if fee.payer != *actor {
                    return Err(ContractError::WrongActor.into());
                }
                if fee_paid_exactly(&self.pending_state, case) {
                    return Err(NodeError::FeeAlreadyPaid);
                }
                return Ok(Payload::ValueTransfer {
                    recipient: guarantee_fund(),
                    amount: a.amount.unwrap_or(fee.fee_amount),
                    reference: Some(case_id),
                });
            }
            "verify_fee_payment" => {
                let _: NoArgs = parse(&req.args)?;
                ContractCall::VerifyFeePayment { case_id }
            }
            "issue_certificate" => {
                let _: NoArgs = parse(&req.args)?;
                let case = self.pending_case(&case_id)?;
                if case.state != CaseState::FeeVerified {
                    return Err(ContractError::WrongState { op: "issue_certificate".into(), state: case.state }.into());
                }
                let certificate_cid =
                    self.put_json(&certificate_terms(case), &[Role::Borrower, Role::Bank, Role::Cgi])?;
                ContractCall::IssueCertificate { case_id, certificate_cid }
            }
            "disburse_loan" => {
                let _: NoArgs = parse(&req.args)?;
                ContractCall::DisburseLoan { case_id }
            }
            "record_payment_event" => {
                let payment = match parse::<PaymentArgs>(&req.args)? {
                    PaymentArgs::Regular { amount } => PaymentEvent::Regular { amount },
                    PaymentArgs::Missed => PaymentEvent::Missed,
                    PaymentArgs::CreditNote { note } => {
                        PaymentEvent::CreditNote { note_cid: self.put_json(&note, &[Role::Bank, Role::Cgi])? }
                    }
                };
                ContractCall::RecordPaymentEvent { case_id, payment }
            }
            "trigger_default" => {
                let _: NoArgs = parse(&req.args)?;
                ContractCall::TriggerDefault { case_id }
            }
            "file_claim" => {
                let a: ClaimArgs = parse(&req.args)?;
                let recovery_action_cids = a
                    .recovery_actions
                    .iter()
                    .map(|v| self.put_json(v, &[Role::Bank, Role::Cgi, Role::Auditor]))
                    .collect::<Result<_, _>>()?;
                ContractCall::FileClaim { case_id, claimed_amount: a.claimed_amount, recovery_action_cids }
            }
            "dispute_step" => {
                let action = match parse::<DisputeArgs>(&req.args)? {
                    DisputeArgs::Open { evidence } => DisputeStep::Open {
                        evidence_cids: evidence
                            .iter()
                            .map(|v| self.put_json(v, &[Role::Bank, Role::Cgi, Role::Auditor]))
                            .collect::<Result<_, _>>()?,
                    },
                    DisputeArgs::Rule { seat, ruling } => DisputeStep::Rule { seat, ruling },
                };
                ContractCall::DisputeStep { case_id, action }
            }
            "enforce_and_payout" => {
                let _: NoArgs = parse(&req.args)?;
                ContractCall::EnforceAndPayout { case_id }
            }
            other => return Err(NodeError::UnknownAction(other.to_string())),
        };
        Ok(Payload::ContractCall { call })
    }

    /// Perform a named action for `actor` and queue the transaction.
    pub fn act(&mut self, actor: &Address, case_id: &str, req: &ActionRequest) -> Result<Digest, NodeError> {
        if !self.wallet.contains_key(actor) {
            return Err(NodeError::NoKey(*actor));
        }
        let payload = self.build_payload(actor, case_id, req)?;
        self.submit_payload(actor, payload)
    }

    /// Run one consensus round with per-round behavior overrides.
    pub fn run_round(&mut self, overrides: &BTreeMap<Address, Behavior>) -> Round {
        let mut behavior = self.behavior.clone();
        behavior.extend(overrides.iter().map(|(a, b)| (*a, *b)));
        let round = consensus::run_round(&mut self.chain, &self.pending, &behavior, &self.wallet, self.retry);
        if round.finalized() {
            self.retry = 0;
            let included: std::collections::BTreeSet<Digest> = round.included.iter().copied().collect();
            let dropped: std::collections::BTreeSet<Digest> = round.dropped.iter().map(|d| d.tx_hash).collect();
            self.pending.retain(|t| {
                let h = t.hash();
                !included.contains(&h) && !dropped.contains(&h)
            });
            if let Some(path) = &self.chain_file {
                let line = self.chain.blocks().last().expect("just appended").to_canonical_line();
                let appended = OpenOptions::new().append(true).open(path).and_then(|mut f| writeln!(f, "{line}"));
                if let Err(e) = appended {
                    // The in-memory chain is authoritative; the file can be rewritten.
                    eprintln!("warning: could not append to {}: {e}", path.display());
                }
            }
        } else {
            self.retry += 1;
        }
        self.rebuild_pending();
        round
    }

    /// Recompute the pending view on top of the finalized state, dropping
    /// anything that no longer applies.
    fn rebuild_pending(&mut self) {
        let mut state = self.chain.state().clone();
        let height = state.next_height;
        self.pending.retain(|tx| apply_transaction(&mut state, tx, height).is_ok());
        self.pending_state = state;
    }

    /// Documents readable by `requester`.
    pub fn read_document(&self, id: &ContentId, requester: &Address) -> Result<Vec<u8>, DocError> {
        self.docs.get(id, requester, &self.chain.state().registry)
    }
}
