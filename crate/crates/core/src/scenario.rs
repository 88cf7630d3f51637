//! Scripted multi-party runs with a replayable trace.
//!
//! A scenario names its actors by label; inside action arguments a string
//! `"@label"` stands for that actor's address.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::canonical::to_canonical;
use crate::config::{DeploymentConfig, DEFAULT_FEE_RATE_BPS, DEFAULT_TRIGGER_K};
use crate::consensus::Behavior;
use crate::contracts::eligibility::Ruleset;
use crate::contracts::CaseState;
use crate::crypto::{hash, Address, Digest};
use crate::docstore::DocStore;
use crate::ledger::state::EventRecord;
use crate::ledger::verify_chain;
use crate::node::{ActionRequest, ActorSpec, NetworkSpec, Node, NodeError};
use crate::registry::{PermissionMatrix, Role};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error at line {line}: {detail}")]
    ParseError { line: usize, detail: String },
    #[error("step {step}: unknown label {label}")]
    UnknownLabel { step: usize, label: String },
    #[error("actor {label}: unknown role {role}")]
    BadRole { label: String, role: String },
    #[error("config: {0}")]
    Config(String),
    #[error("step {step}: expectation failed: {detail}")]
    ExpectationFailed { step: usize, detail: String },
    #[error("step {step}: rejected: {reason}")]
    StepRejected { step: usize, reason: String },
    #[error("setup: {0}")]
    Setup(#[from] NodeError),
}

impl ScenarioError {
    pub fn code(&self) -> &'static str {
        match self {
            ScenarioError::ParseError { .. } => "ParseError",
            ScenarioError::UnknownLabel { .. } => "UnknownLabel",
            ScenarioError::BadRole { .. } => "BadRole",
            ScenarioError::Config(_) => "Config",
            ScenarioError::ExpectationFailed { .. } => "ExpectationFailed",
            ScenarioError::StepRejected { .. } => "StepRejected",
            ScenarioError::Setup(_) => "Setup",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawActor {
    label: String,
    role: String,
    #[serde(default)]
    balance: u64,
    #[serde(default = "yes")]
    admit: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(rename = "K", default = "default_k")]
    pub k: u32,
    #[serde(default = "default_fee_rate")]
    pub fee_rate_bps: u64,
    /// "default" or a path relative to the scenario file.
    #[serde(default = "default_ref")]
    pub permission_matrix: String,
    /// "none", "empty" or a path relative to the scenario file.
    #[serde(default = "empty_ref")]
    pub ruleset: String,
    #[serde(default = "default_kyc_fields")]
    pub kyc_required_fields: Vec<String>,
}

fn default_k() -> u32 {
    DEFAULT_TRIGGER_K
}
fn default_fee_rate() -> u64 {
    DEFAULT_FEE_RATE_BPS
}
fn default_ref() -> String {
    "default".into()
}
fn empty_ref() -> String {
    "empty".into()
}
fn default_kyc_fields() -> Vec<String> {
    DeploymentConfig::default().kyc_required_fields
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            k: default_k(),
            fee_rate_bps: default_fee_rate(),
            permission_matrix: default_ref(),
            ruleset: empty_ref(),
            kyc_required_fields: default_kyc_fields(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case", deny_unknown_fields)]
pub enum Check {
    CaseState { case: String, state: CaseState },
    Balance { actor: String, amount: u64 },
    KycChecks { case: String, count: u32 },
    EventCount { case: String, event: String, count: usize },
    Payout { case: String, amount: u64 },
    Fee { case: String, amount: u64 },
    Height { height: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case", deny_unknown_fields)]
pub enum Step {
    Admit {
        admitter: String,
        actor: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expect_reject: Option<String>,
    },
    Revoke {
        revoker: String,
        actor: String,
    },
    Act {
        actor: String,
        case: String,
        op: String,
        #[serde(default, skip_serializing_if = "Value::is_null")]
        args: Value,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expect_reject: Option<String>,
    },
    Transfer {
        from: String,
        to: String,
        amount: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reference: Option<String>,
    },
    Round {
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        offline: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expect_finalized: Option<bool>,
    },
    Expect(Check),
}

impl Step {
    fn kind(&self) -> &'static str {
        match self {
            Step::Admit { .. } => "admit",
            Step::Revoke { .. } => "revoke",
            Step::Act { .. } => "act",
            Step::Transfer { .. } => "transfer",
            Step::Round { .. } => "round",
            Step::Expect(_) => "expect",
        }
    }

    fn labels(&self) -> Vec<&str> {
        match self {
            Step::Admit { admitter, actor, .. } => vec![admitter, actor],
            Step::Revoke { revoker, actor } => vec![revoker, actor],
            Step::Act { actor, .. } => vec![actor],
            Step::Transfer { from, to, .. } => vec![from, to],
            Step::Round { offline, .. } => offline.iter().map(String::as_str).collect(),
            Step::Expect(Check::Balance { actor, .. }) => vec![actor],
            Step::Expect(_) => vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    seed: Digest,
    actors: Vec<RawActor>,
    #[serde(default)]
    config: ScenarioConfig,
    #[serde(default)]
    fund_balance: u64,
    #[serde(default)]
    steps: Vec<Step>,
}

/// A loaded scenario with every referenced config file resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub spec: NetworkSpec,
    pub steps: Vec<Step>,
}

fn resolve_ref(base: Option<&Path>, reference: &str) -> Result<Vec<u8>, ScenarioError> {
    let path = match base {
        Some(b) => b.join(reference),
        None => reference.into(),
    };
    std::fs::read(&path).map_err(|e| ScenarioError::Config(format!("{}: {e}", path.display())))
}

/// Parse and validate a scenario. `base` resolves relative config paths.
pub fn load_scenario(bytes: &[u8], base: Option<&Path>) -> Result<Scenario, ScenarioError> {
    let raw: RawScenario = serde_json::from_slice(bytes)
        .map_err(|e| ScenarioError::ParseError { line: e.line(), detail: e.to_string() })?;
    let mut actors = Vec::new();
    for a in &raw.actors {
        let role: Role = a.role.parse().map_err(|_| ScenarioError::BadRole { label: a.label.clone(), role: a.role.clone() })?;
        actors.push(ActorSpec { label: a.label.clone(), role, balance: a.balance, admit: a.admit });
    }
    let known: std::collections::BTreeSet<&str> = raw.actors.iter().map(|a| a.label.as_str()).collect();
    for (i, step) in raw.steps.iter().enumerate() {
        for label in step.labels() {
            if !known.contains(label) {
                return Err(ScenarioError::UnknownLabel { step: i + 1, label: label.to_string() });
            }
        }
        if let Step::Act { args, .. } = step {
            for label in at_labels(args) {
                if !known.contains(label.as_str()) {
                    return Err(ScenarioError::UnknownLabel { step: i + 1, label });
                }
            }
        }
    }
    let c = &raw.config;
    let permission_matrix = match c.permission_matrix.as_str() {
        "default" => PermissionMatrix::standard(),
        path => PermissionMatrix::from_json(&resolve_ref(base, path)?)
            .map_err(|e| ScenarioError::Config(e.to_string()))?,
    };
    let ruleset = match c.ruleset.as_str() {
        "none" => None,
        "empty" => Some(Ruleset::default()),
        path => Some(Ruleset::from_json(&resolve_ref(base, path)?).map_err(|e| ScenarioError::Config(e.to_string()))?),
    };
    let config = DeploymentConfig {
        default_trigger_k: c.k,
        fee_rate_bps: c.fee_rate_bps,
        permission_matrix,
        ruleset,
        kyc_required_fields: c.kyc_required_fields.clone(),
    };
    let spec = NetworkSpec { seed: raw.seed, actors, config, fund_balance: raw.fund_balance };
    Ok(Scenario { name: raw.name, spec, steps: raw.steps })
}

fn at_labels(v: &Value) -> Vec<String> {
    match v {
        Value::String(s) => s.strip_prefix('@').map(|l| vec![l.to_string()]).unwrap_or_default(),
        Value::Array(xs) => xs.iter().flat_map(at_labels).collect(),
        Value::Object(m) => m.values().flat_map(at_labels).collect(),
        _ => vec![],
    }
}

fn resolve_labels(v: &Value, labels: &BTreeMap<String, Address>) -> Value {
    match v {
        Value::String(s) => match s.strip_prefix('@').and_then(|l| labels.get(l)) {
            Some(a) => Value::String(a.to_hex()),
            None => v.clone(),
        },
        Value::Array(xs) => Value::Array(xs.iter().map(|x| resolve_labels(x, labels)).collect()),
        Value::Object(m) => Value::Object(m.iter().map(|(k, x)| (k.clone(), resolve_labels(x, labels))).collect()),
        _ => v.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    /// 1-based step number.
    pub index: u64,
    pub step: String,
    pub outcome: String,
    pub events: Vec<EventRecord>,
    pub state_root: Digest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub name: String,
    pub entries: Vec<TraceEntry>,
    pub final_state_root: Digest,
    pub trace_hash: Digest,
}

/// A finished run: the trace plus the network it produced.
#[derive(Debug)]
pub struct Run {
    pub trace: Trace,
    pub node: Node,
}

fn lookup(node: &Node, step: usize, label: &str) -> Result<Address, ScenarioError> {
    node.address_of(label).ok_or_else(|| ScenarioError::UnknownLabel { step, label: label.to_string() })
}

fn check(node: &Node, step: usize, c: &Check) -> Result<(), ScenarioError> {
    let state = node.state();
    let fail = |detail: String| Err(ScenarioError::ExpectationFailed { step, detail });
    let case = |id: &str| state.cases.get(id).ok_or_else(|| ScenarioError::ExpectationFailed {
        step,
        detail: format!("case {id} does not exist"),
    });
    match c {
        Check::CaseState { case: id, state: want } => {
            let got = case(id)?.state;
            if got != *want {
                return fail(format!("case {id} is {got}, expected {want}"));
            }
        }
        Check::Balance { actor, amount } => {
            let got = state.balance(&lookup(node, step, actor)?);
            if got != *amount {
                return fail(format!("balance of {actor} is {got}, expected {amount}"));
            }
        }
        Check::KycChecks { case: id, count } => {
            let got = case(id)?.kyc_checks;
            if got != *count {
                return fail(format!("case {id} has {got} KYC checks, expected {count}"));
            }
        }
        Check::EventCount { case: id, event, count } => {
            let got = case(id)?.event_log.iter().filter(|e| e.event.name() == event).count();
            if got != *count {
                return fail(format!("case {id} has {got} {event} events, expected {count}"));
            }
        }
        Check::Payout { case: id, amount } => {
            let got = case(id)?.claim.as_ref().and_then(|c| c.payout);
            if got != Some(*amount) {
                return fail(format!("case {id} payout is {got:?}, expected {amount}"));
            }
        }
        Check::Fee { case: id, amount } => {
            let got = case(id)?.fee.as_ref().map(|f| f.fee_amount);
            if got != Some(*amount) {
                return fail(format!("case {id} fee is {got:?}, expected {amount}"));
            }
        }
        Check::Height { height } => {
            let got = node.chain().height().unwrap_or(0);
            if got != *height {
                return fail(format!("chain height is {got}, expected {height}"));
            }
        }
    }
    Ok(())
}

fn expect_outcome(
    step: usize,
    result: Result<Digest, NodeError>,
    expect_reject: &Option<String>,
) -> Result<String, ScenarioError> {
    match (result, expect_reject) {
        (Ok(h), None) => Ok(h.to_hex()),
        (Ok(_), Some(want)) => Err(ScenarioError::ExpectationFailed {
            step,
            detail: format!("expected rejection {want}, but the action was accepted"),
        }),
        (Err(e), Some(want)) if e.code() == want => Ok(format!("rejected:{want}")),
        (Err(e), _) => Err(ScenarioError::StepRejected { step, reason: format!("{}: {e}", e.code()) }),
    }
}

/// Run a scenario in memory.
pub fn run(scenario: &Scenario) -> Result<Run, ScenarioError> {
    let docs = DocStore::in_memory(scenario.spec.keyring());
    run_with(scenario, Node::bootstrap(&scenario.spec, docs)?)
}

/// Run a scenario on a node already bootstrapped from `scenario.spec`.
pub fn run_with(scenario: &Scenario, node: Node) -> Result<Run, ScenarioError> {
    run_observed(scenario, node, |_, _| {})
}

/// Like `run_with`, calling `observe` with the 1-based step number and the
/// node after every step.
pub fn run_observed(
    scenario: &Scenario,
    mut node: Node,
    mut observe: impl FnMut(usize, &Node),
) -> Result<Run, ScenarioError> {
    let mut entries = Vec::new();
    let mut seen_events = 0usize;
    let mut new_events = |node: &Node| {
        let evs = node.state().events[seen_events..].to_vec();
        seen_events = node.state().events.len();
        evs
    };
    // Bootstrap events are part of the starting state, not of any step.
    new_events(&node);
    for (i, step) in scenario.steps.iter().enumerate() {
        let n = i + 1;
        let outcome = match step {
            Step::Admit { admitter, actor, expect_reject } => {
                let a = lookup(&node, n, admitter)?;
                let who = lookup(&node, n, actor)?;
                let role = scenario.spec.actors.iter().find(|x| x.label == *actor).expect("validated").role;
                expect_outcome(n, node.admit(&a, &who, role), expect_reject)?
            }
            Step::Revoke { revoker, actor } => {
                let a = lookup(&node, n, revoker)?;
                let who = lookup(&node, n, actor)?;
                expect_outcome(n, node.revoke(&a, &who), &None)?
            }
            Step::Act { actor, case, op, args, expect_reject } => {
                let who = lookup(&node, n, actor)?;
                let req = ActionRequest { op: op.clone(), args: resolve_labels(args, node.labels()) };
                expect_outcome(n, node.act(&who, case, &req), expect_reject)?
            }
            Step::Transfer { from, to, amount, reference } => {
                let a = lookup(&node, n, from)?;
                let b = lookup(&node, n, to)?;
                expect_outcome(n, node.transfer(&a, &b, *amount, reference.clone()), &None)?
            }
            Step::Round { offline, expect_finalized } => {
                let mut overrides = BTreeMap::new();
                for label in offline {
                    overrides.insert(lookup(&node, n, label)?, Behavior::Offline);
                }
                let round = node.run_round(&overrides);
                if let Some(want) = expect_finalized {
                    if round.finalized() != *want {
                        return Err(ScenarioError::ExpectationFailed {
                            step: n,
                            detail: format!("round outcome {:?}", round.outcome),
                        });
                    }
                }
                let text = to_canonical(&round).expect("round is canonical-serializable");
                String::from_utf8(text).expect("utf-8")
            }
            Step::Expect(c) => {
                check(&node, n, c)?;
                "ok".into()
            }
        };
        entries.push(TraceEntry {
            index: n as u64,
            step: step.kind().into(),
            outcome,
            events: new_events(&node),
            state_root: node.chain().state_root(),
        });
        observe(n, &node);
    }
    let trace_hash = hash(&to_canonical(&entries).expect("trace is canonical-serializable"));
    let trace = Trace {
        name: scenario.name.clone(),
        entries,
        final_state_root: node.chain().state_root(),
        trace_hash,
    };
    Ok(Run { trace, node })
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("{0}")]
    Verify(#[from] crate::ledger::ChainFailure),
    #[error("replayed root {got} does not match expected {expected}")]
    RootMismatch { expected: Digest, got: Digest },
}

/// Re-verify and re-execute a persisted chain and compare its final root.
pub fn replay_assert(chain_bytes: &[u8], expected: &Digest) -> Result<Digest, ReplayError> {
    let chain = verify_chain(chain_bytes)?;
    let got = chain.state_root();
    if got != *expected {
        return Err(ReplayError::RootMismatch { expected: *expected, got });
    }
    Ok(got)
}
