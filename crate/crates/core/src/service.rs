//! Session-authenticated gateway over a custodial node: pending tasks,
//! decisions, case and ledger queries. Transport-agnostic; the CLI serves it
//! over HTTP.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contracts::tasks::{pending_tasks, TaskItem};
use crate::contracts::{CaseState, GuaranteeCase, Pathway};
use crate::crypto::{verify_signature, Address, ContentId, Digest, Signature};
use crate::docstore::DocError;
use crate::ledger::state::EventRecord;
use crate::ledger::{Block, Transaction};
use crate::node::{ActionRequest, Node, NodeError};
use crate::registry::{Denial, Permission};

pub const DEFAULT_IDLE: Duration = Duration::from_secs(30 * 60);
/// Upper bound on items per page for range and event queries.
pub const PAGE_LIMIT: usize = 100;
/// Rounds attempted before a submitted decision is reported as not included.
const MAX_ROUNDS: u32 = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    #[error("missing, unknown or expired session token")]
    InvalidToken,
    #[error("no outstanding challenge for this address")]
    NoChallenge,
    #[error("address is not an active member")]
    NotAdmitted,
    #[error("signature does not verify")]
    BadSignature,
    #[error("denied: {0}")]
    Denied(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("malformed request: {0}")]
    ParseError(String),
    #[error("{code}: {reason}")]
    Rejected { code: String, reason: String },
    #[error("transaction was not finalized")]
    NotIncluded,
}

impl GatewayError {
    pub fn code(&self) -> &str {
        match self {
            GatewayError::InvalidToken => "InvalidToken",
            GatewayError::NoChallenge => "NoChallenge",
            GatewayError::NotAdmitted => "NotAdmitted",
            GatewayError::BadSignature => "BadSignature",
            GatewayError::Denied(_) => "Denied",
            GatewayError::NotFound(_) => "NotFound",
            GatewayError::ParseError(_) => "ParseError",
            GatewayError::Rejected { code, .. } => code,
            GatewayError::NotIncluded => "NotIncluded",
        }
    }

    /// HTTP status for this error.
    pub fn status(&self) -> u16 {
        match self {
            GatewayError::InvalidToken | GatewayError::NoChallenge | GatewayError::BadSignature => 401,
            GatewayError::NotAdmitted | GatewayError::Denied(_) => 403,
            GatewayError::NotFound(_) => 404,
            GatewayError::ParseError(_) => 400,
            GatewayError::Rejected { .. } => 409,
            GatewayError::NotIncluded => 503,
        }
    }
}

impl From<NodeError> for GatewayError {
    fn from(e: NodeError) -> Self {
        match e {
            NodeError::Parse(m) => GatewayError::ParseError(m),
            other => GatewayError::Rejected { code: other.code().to_string(), reason: other.to_string() },
        }
    }
}

/// Error body sent to clients.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub reason: String,
}

impl From<&GatewayError> for ErrorBody {
    fn from(e: &GatewayError) -> Self {
        let reason = match e {
            GatewayError::Rejected { reason, .. } => reason.clone(),
            other => other.to_string(),
        };
        ErrorBody { code: e.code().to_string(), reason }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub token: String,
    pub address: Address,
}

/// Read-only view of a case for auditing roles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub case_id: String,
    pub pathway: Pathway,
    pub state: CaseState,
    pub principal: u64,
    pub since: u64,
}

impl CaseSummary {
    fn of(case: &GuaranteeCase) -> CaseSummary {
        CaseSummary {
            case_id: case.case_id.clone(),
            pathway: case.pathway,
            state: case.state,
            principal: case.principal,
            since: case.event_log.last().map_or(0, |e| e.time),
        }
    }
}

/// `summaries` is filled only for roles with audit read access.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskView {
    pub tasks: Vec<TaskItem>,
    pub summaries: Vec<CaseSummary>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub tx_hash: Digest,
    pub height: u64,
    pub state: Option<CaseState>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryItem {
    pub height: u64,
    pub tx_hash: Digest,
    pub transaction: Transaction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventPage {
    pub events: Vec<EventRecord>,
    /// Pass back as `cursor` to receive only newer events.
    pub next_cursor: u64,
}

struct Sessions {
    challenges: BTreeMap<Address, Digest>,
    live: BTreeMap<String, (Address, Instant)>,
}

pub type Clock = Arc<dyn Fn() -> Instant + Send + Sync>;

pub struct Gateway {
    node: RwLock<Node>,
    sessions: Mutex<Sessions>,
    idle: Duration,
    clock: Clock,
}

fn random_digest() -> Digest {
    let mut b = [0u8; 32];
    getrandom::getrandom(&mut b).expect("OS randomness is available");
    Digest(b)
}

impl Gateway {
    pub fn new(node: Node, idle: Duration) -> Gateway {
        Gateway::with_clock(node, idle, Arc::new(Instant::now))
    }

    pub fn with_clock(node: Node, idle: Duration, clock: Clock) -> Gateway {
        Gateway {
            node: RwLock::new(node),
            sessions: Mutex::new(Sessions { challenges: BTreeMap::new(), live: BTreeMap::new() }),
            idle,
            clock,
        }
    }

    /// Run `f` with shared access to the node.
    pub fn with_node<T>(&self, f: impl FnOnce(&Node) -> T) -> T {
        f(&self.node.read().expect("node lock"))
    }

    /// Operator access, e.g. for admissions outside the API.
    pub fn with_node_mut<T>(&self, f: impl FnOnce(&mut Node) -> T) -> T {
        f(&mut self.node.write().expect("node lock"))
    }

    /// Issue a fresh challenge for `address`, replacing any earlier one.
    pub fn challenge(&self, address: &Address) -> Digest {
        let c = random_digest();
        self.sessions.lock().expect("session lock").challenges.insert(*address, c);
        c
    }

    /// Exchange a signature over the outstanding challenge for a token.
    pub fn login(&self, address: &Address, signature: &Signature) -> Result<Session, GatewayError> {
        let pk = self.with_node(|n| {
            n.state().registry.admission_status(address).map(|r| r.public_key).map_err(|_| GatewayError::NotAdmitted)
        })?;
        let mut s = self.sessions.lock().expect("session lock");
        let challenge = s.challenges.get(address).copied().ok_or(GatewayError::NoChallenge)?;
        if !verify_signature(&pk, &challenge.0, signature) {
            return Err(GatewayError::BadSignature);
        }
        s.challenges.remove(address);
        let token = random_digest().to_hex();
        s.live.insert(token.clone(), (*address, (self.clock)()));
        Ok(Session { token, address: *address })
    }

    /// Resolve a token and refresh its idle timer. Revoked members lose their
    /// sessions immediately.
    pub fn authenticate(&self, token: &str) -> Result<Address, GatewayError> {
        let now = (self.clock)();
        let mut s = self.sessions.lock().expect("session lock");
        let Some((address, last)) = s.live.get(token).copied() else {
            return Err(GatewayError::InvalidToken);
        };
        let active = self.with_node(|n| n.state().registry.admission_status(&address).is_ok());
        if now.duration_since(last) > self.idle || !active {
            s.live.remove(token);
            return Err(GatewayError::InvalidToken);
        }
        s.live.insert(token.to_string(), (address, now));
        Ok(address)
    }

    fn require(&self, node: &Node, who: &Address, p: Permission) -> Result<(), GatewayError> {
        let st = node.state();
        st.registry.check_permission(&st.config.permission_matrix, who, p).map(|_| ()).map_err(|d| match d {
            Denial::NotAdmitted | Denial::Revoked => GatewayError::NotAdmitted,
            Denial::RoleForbidden => GatewayError::Denied(format!("role lacks {p:?}")),
        })
    }

    fn audits(&self, node: &Node, who: &Address) -> bool {
        self.require(node, who, Permission::AuditRead).is_ok()
    }

    pub fn tasks(&self, token: &str) -> Result<TaskView, GatewayError> {
        let who = self.authenticate(token)?;
        self.with_node(|n| {
            let tasks = pending_tasks(n.pending_state(), &who);
            let summaries = if self.audits(n, &who) {
                n.state().cases.values().map(CaseSummary::of).collect()
            } else {
                vec![]
            };
            Ok(TaskView { tasks, summaries })
        })
    }

    /// Sign and queue the action, then run rounds until it is finalized.
    pub fn submit_decision(&self, token: &str, case_id: &str, req: &ActionRequest) -> Result<Decision, GatewayError> {
        let who = self.authenticate(token)?;
        let mut node = self.node.write().expect("node lock");
        let tx_hash = node.act(&who, case_id, req)?;
        for _ in 0..MAX_ROUNDS {
            let round = node.run_round(&BTreeMap::new());
            if let Some(d) = round.dropped.iter().find(|d| d.tx_hash == tx_hash) {
                return Err(GatewayError::Rejected { code: d.reason.clone(), reason: "dropped at inclusion".into() });
            }
            if round.included.contains(&tx_hash) {
                return Ok(Decision {
                    tx_hash,
                    height: round.height,
                    state: node.state().cases.get(case_id).map(|c| c.state),
                });
            }
        }
        Err(GatewayError::NotIncluded)
    }

    pub fn case(&self, token: &str, case_id: &str) -> Result<GuaranteeCase, GatewayError> {
        let who = self.authenticate(token)?;
        self.with_node(|n| {
            self.require(n, &who, Permission::ReadLedger)?;
            let case = n.state().cases.get(case_id).ok_or_else(|| GatewayError::NotFound(format!("case {case_id}")))?;
            if !case.is_party(&who) && !self.audits(n, &who) {
                return Err(GatewayError::Denied("not a party to this case".into()));
            }
            Ok(case.clone())
        })
    }

    /// Blocks `from..=to`, at most [`PAGE_LIMIT`] of them.
    pub fn blocks(&self, token: &str, from: Option<u64>, to: Option<u64>) -> Result<Vec<Block>, GatewayError> {
        let who = self.authenticate(token)?;
        self.with_node(|n| {
            self.require(n, &who, Permission::ReadLedger)?;
            let from = from.unwrap_or(0);
            let to = to.unwrap_or(u64::MAX);
            Ok(n.chain()
                .blocks()
                .iter()
                .filter(|b| b.height >= from && b.height <= to)
                .take(PAGE_LIMIT)
                .cloned()
                .collect())
        })
    }

    /// Transactions sent or received by `address`. Members see their own
    /// history; auditing roles see anyone's.
    pub fn history(&self, token: &str, address: &Address) -> Result<Vec<HistoryItem>, GatewayError> {
        let who = self.authenticate(token)?;
        self.with_node(|n| {
            self.require(n, &who, Permission::ReadLedger)?;
            if who != *address && !self.audits(n, &who) {
                return Err(GatewayError::Denied("history of another account".into()));
            }
            Ok(n.chain()
                .account_history(address)
                .into_iter()
                .map(|(height, t)| HistoryItem { height, tx_hash: t.hash(), transaction: t.clone() })
                .collect())
        })
    }

    /// Notifications addressed to or raised by the caller from `cursor` on.
    pub fn events(&self, token: &str, cursor: u64) -> Result<EventPage, GatewayError> {
        let who = self.authenticate(token)?;
        self.with_node(|n| {
            self.require(n, &who, Permission::ReadLedger)?;
            let all = self.audits(n, &who);
            let events = &n.state().events;
            let mut out = Vec::new();
            let mut next = cursor;
            for e in events.iter().skip(cursor as usize) {
                next = e.seq + 1;
                if all || e.actor == who || e.recipients.contains(&who) {
                    out.push(e.clone());
                    if out.len() == PAGE_LIMIT {
                        break;
                    }
                }
            }
            Ok(EventPage { events: out, next_cursor: next })
        })
    }

    pub fn document(&self, token: &str, id: &ContentId) -> Result<Vec<u8>, GatewayError> {
        let who = self.authenticate(token)?;
        self.with_node(|n| {
            n.read_document(id, &who).map_err(|e| match e {
                DocError::NotFound => GatewayError::NotFound(format!("document {id}")),
                DocError::RoleNotInPolicy | DocError::NotAdmitted => GatewayError::Denied(e.to_string()),
                other => GatewayError::Rejected { code: other.code().to_string(), reason: other.to_string() },
            })
        })
    }
}
