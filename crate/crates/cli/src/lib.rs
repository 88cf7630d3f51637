//! Operator commands for the credit-guarantee ledger. Every command prints a
//! final `result: …` line on success or `error: …` on failure.

pub mod api;

use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use cgs_ledger::crypto::{Address, Digest};
use cgs_ledger::ledger::{verify_chain, Payload};
use cgs_ledger::node::Node;
use cgs_ledger::scenario::{load_scenario, replay_assert, run, ReplayError, Scenario};
use cgs_ledger::service::{Gateway, DEFAULT_IDLE};
use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "cgsl", version, about = "Credit-guarantee ledger: network, scenarios, audit and API")]
pub struct Cli {
    /// Holds chain.jsonl, docstore/ and config/.
    #[arg(long, env = "GL_DATA_DIR", default_value = "./data", global = true)]
    pub data_dir: PathBuf,
    /// Network config used by `init` (scenario format; steps are ignored).
    #[arg(long, default_value = "config/network.json", global = true)]
    pub config: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8469", global = true)]
    pub listen: SocketAddr,
    /// Hex seed replacing the one in the scenario or network config.
    #[arg(long, global = true)]
    pub seed: Option<Digest>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create the data directory with genesis and the admission round.
    Init,
    /// Run a scenario; exit 0 iff every step and expectation passes.
    RunScenario {
        file: PathBuf,
        /// Print one line per step.
        #[arg(long)]
        trace: bool,
    },
    /// Verify a chain file block by block.
    Verify { chain: PathBuf },
    /// Show a case or block from the data directory.
    Inspect {
        #[command(subcommand)]
        what: Inspect,
    },
    /// Serve the /v1 API over the data directory until interrupted.
    Serve,
    /// Replay a chain file and compare its final state root.
    Replay { chain: PathBuf, root: Digest },
    /// Sign a login challenge with an actor key derived from the network seed.
    SignChallenge { label: String, challenge: Digest },
}

#[derive(Debug, Subcommand)]
pub enum Inspect {
    Case { id: String },
    Block { height: u64 },
}

/// A failed command: the text after `error: `.
#[derive(Debug)]
pub struct Failure(pub String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

type Outcome = Result<String, Failure>;

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure(format!("Io {}: {e}", path.display())))
}

fn load(path: &Path, seed: Option<Digest>) -> Result<Scenario, Failure> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut s = load_scenario(&read(path)?, Some(base)).map_err(|e| Failure(format!("{} {e}", e.code())))?;
    if let Some(seed) = seed {
        s.spec.seed = seed;
    }
    Ok(s)
}

fn open(dir: &Path) -> Result<Node, Failure> {
    Node::open_dir(dir).map_err(|e| Failure(format!("{} {}: {e}", e.code(), dir.display())))
}

fn label(node: &Node, a: &Address) -> String {
    node.label_of(a).map_or_else(|| a.to_hex()[..12].to_string(), str::to_string)
}

pub fn init(cli: &Cli) -> Outcome {
    if cli.data_dir.join("chain.jsonl").exists() {
        return Err(Failure(format!("AlreadyInitialized {}", cli.data_dir.display())));
    }
    let s = load(&cli.config, cli.seed)?;
    let node = Node::init_dir(&cli.data_dir, &s.spec).map_err(|e| Failure(format!("{} {e}", e.code())))?;
    println!("network {} in {}", s.name, cli.data_dir.display());
    for a in &s.spec.actors {
        let addr = node.address_of(&a.label).expect("spec actor");
        let status = if a.admit { "admitted" } else { "not admitted" };
        println!("  {:<10} {:<16} {} ({status})", a.label, a.role.as_str(), addr.to_hex());
    }
    let height = node.chain().height().unwrap_or(0);
    Ok(format!("ok height={height} tip={} state_root={}", node.chain().tip_hash().to_hex(), node.chain().state_root().to_hex()))
}

pub fn run_scenario(cli: &Cli, file: &Path, trace: bool) -> Outcome {
    let s = load(file, cli.seed)?;
    let r = run(&s).map_err(|e| Failure(format!("{} {e}", e.code())))?;
    if trace {
        for e in &r.trace.entries {
            println!("{:>4} {:<8} {}", e.index, e.step, e.outcome);
        }
    }
    println!("scenario: {}", r.trace.name);
    println!("steps: {}", r.trace.entries.len());
    println!("trace_hash: {}", r.trace.trace_hash.to_hex());
    println!("state_root: {}", r.trace.final_state_root.to_hex());
    Ok(format!("ok trace_hash={} state_root={}", r.trace.trace_hash.to_hex(), r.trace.final_state_root.to_hex()))
}

pub fn verify(chain: &Path) -> Outcome {
    match verify_chain(&read(chain)?) {
        Ok(c) => {
            let height = c.height().map_or("none".to_string(), |h| h.to_string());
            Ok(format!("ok height={height} state_root={}", c.state_root().to_hex()))
        }
        Err(f) => Err(Failure(format!("fail height={} reason={} ({})", f.height, f.error.code(), f.error))),
    }
}

pub fn replay(chain: &Path, root: &Digest) -> Outcome {
    match replay_assert(&read(chain)?, root) {
        Ok(r) => Ok(format!("ok state_root={}", r.to_hex())),
        Err(ReplayError::Verify(f)) => {
            Err(Failure(format!("fail height={} reason={} ({})", f.height, f.error.code(), f.error)))
        }
        Err(ReplayError::RootMismatch { expected, got }) => {
            Err(Failure(format!("RootMismatch expected={} got={}", expected.to_hex(), got.to_hex())))
        }
    }
}

pub fn inspect_case(cli: &Cli, id: &str) -> Outcome {
    let node = open(&cli.data_dir)?;
    let case = node.state().cases.get(id).ok_or_else(|| Failure(format!("NotFound case {id}")))?;
    let mut out = String::new();
    let _ = writeln!(out, "case {} ({:?}) state {:?}", case.case_id, case.pathway, case.state);
    let _ = writeln!(out, "  borrower {}  bank {}  cgi {}", label(&node, &case.borrower), label(&node, &case.bank), label(&node, &case.cgi));
    let _ = writeln!(out, "  principal {}  installments {}  kyc checks {}", case.principal, case.schedule.len(), case.kyc_checks);
    if let Some(rl) = &case.risk_line {
        let _ = writeln!(
            out,
            "  risk line {} bps {:?} cap {} (bank {}, cgi {})",
            rl.terms.coverage_bps, rl.terms.seniority, rl.terms.cap, rl.agreed_by_bank, rl.agreed_by_cgi
        );
    }
    if let Some(fee) = &case.fee {
        let _ = writeln!(out, "  fee {} payer {} paid {}", fee.fee_amount, label(&node, &fee.payer), fee.paid);
    }
    if let Some(loan) = &case.loan {
        let _ = writeln!(out, "  outstanding {}  consecutive missed {}", loan.outstanding, loan.consecutive_missed);
    }
    if let Some(claim) = &case.claim {
        let _ = writeln!(out, "  claim {} {:?} payout {:?}", claim.claimed_amount, claim.eligibility, claim.payout);
    }
    if let Some(c) = &case.closure {
        let _ = writeln!(out, "  closed: {c:?}");
    }
    let _ = writeln!(out, "  events:");
    for e in &case.event_log {
        let _ = writeln!(out, "    t={:<4} {:<10} {}", e.time, label(&node, &e.actor), e.event.name());
    }
    print!("{out}");
    Ok(format!("ok case={} state={:?} events={}", case.case_id, case.state, case.event_log.len()))
}

pub fn inspect_block(cli: &Cli, height: u64) -> Outcome {
    let node = open(&cli.data_dir)?;
    let block = node
        .chain()
        .blocks()
        .get(height as usize)
        .ok_or_else(|| Failure(format!("NotFound block {height}")))?;
    println!("block {} hash {}", block.height, block.hash().to_hex());
    println!("  prev      {}", block.prev_hash.to_hex());
    println!("  proposer  {} (round {})", label(&node, &block.proposer), block.round);
    println!("  tx_root   {}", block.tx_root.to_hex());
    println!("  state     {}", block.state_root.to_hex());
    println!("  votes     {}", block.finality_votes.iter().map(|v| label(&node, &v.validator)).collect::<Vec<_>>().join(", "));
    println!("  transactions:");
    for tx in &block.transactions {
        let what = match &tx.payload {
            Payload::ValueTransfer { recipient, amount, reference } => format!(
                "transfer {amount} to {}{}",
                label(&node, recipient),
                reference.as_ref().map(|r| format!(" ref {r}")).unwrap_or_default()
            ),
            Payload::ContractCall { call } => format!("{} on {}", call.op_name(), call.case_id()),
            Payload::AdminAction { admin } => format!("admin {}", serde_json::to_string(admin).unwrap_or_default()),
        };
        println!("    {} {:<10} n={:<3} {what}", &tx.hash().to_hex()[..16], label(&node, &tx.sender), tx.nonce);
    }
    Ok(format!("ok block={} hash={} txs={}", block.height, block.hash().to_hex(), block.transactions.len()))
}

pub fn sign_challenge(cli: &Cli, who: &str, challenge: &Digest) -> Outcome {
    let node = open(&cli.data_dir)?;
    let addr = node.address_of(who).ok_or_else(|| Failure(format!("UnknownLabel {who}")))?;
    let kp = node.keypair(&addr).ok_or_else(|| Failure(format!("NoKey {who}")))?;
    println!("address: {}", addr.to_hex());
    Ok(format!("ok signature={}", kp.sign(&challenge.0).to_hex()))
}

pub async fn serve(cli: &Cli) -> Outcome {
    let node = open(&cli.data_dir)?;
    let gateway = Arc::new(Gateway::new(node, DEFAULT_IDLE));
    let listener = tokio::net::TcpListener::bind(cli.listen).await?;
    println!("listening on http://{}/v1", listener.local_addr()?);
    axum::serve(listener, api::router(gateway))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok("ok stopped".into())
}

/// Dispatch one parsed command.
pub async fn execute(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Init => init(cli),
        Command::RunScenario { file, trace } => run_scenario(cli, file, *trace),
        Command::Verify { chain } => verify(chain),
        Command::Inspect { what: Inspect::Case { id } } => inspect_case(cli, id),
        Command::Inspect { what: Inspect::Block { height } } => inspect_block(cli, *height),
        Command::Serve => serve(cli).await,
        Command::Replay { chain, root } => replay(chain, root),
        Command::SignChallenge { label, challenge } => sign_challenge(cli, label, challenge),
    }
}
