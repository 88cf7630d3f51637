//! Python bindings. Structured values cross the boundary as plain dicts and
//! lists (via JSON); hashes and addresses are lowercase hex strings.

use std::collections::BTreeMap;
use std::path::Path;

use cgs_ledger::consensus::{proposer_index as proposer, RoundOutcome};
use cgs_ledger::contracts::tasks::pending_tasks;
use cgs_ledger::contracts::terms::{compute_payout as payout, fee_amount as fee, RiskLineTerms, Seniority};
use cgs_ledger::crypto::{Address, Digest};
use cgs_ledger::ledger::verify_chain as verify;
use cgs_ledger::node::{ActionRequest, Node, NodeError};
use cgs_ledger::scenario::{load_scenario, run, Scenario};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(cgs_ledger_py, LedgerError, PyException, "A ledger operation was rejected; the message starts with its code.");

fn ledger_err(code: &str, e: impl std::fmt::Display) -> PyErr {
    LedgerError::new_err(format!("{code}: {e}"))
}

fn node_err(e: NodeError) -> PyErr {
    ledger_err(e.code(), e)
}

fn to_py<'py>(py: Python<'py>, v: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py(obj: &Bound<'_, PyAny>) -> PyResult<serde_json::Value> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn load(text: &str, base: Option<&str>) -> PyResult<Scenario> {
    load_scenario(text.as_bytes(), base.map(Path::new)).map_err(|e| ledger_err(e.code(), e))
}

fn parse_hex<T: std::str::FromStr>(s: &str) -> PyResult<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| PyValueError::new_err(e.to_string()))
}

/// Run a scenario document (JSON text). Returns `{name, steps, trace_hash,
/// state_root}`; a failing step raises LedgerError.
#[pyfunction]
#[pyo3(signature = (text, base_dir=None))]
fn run_scenario<'py>(py: Python<'py>, text: &str, base_dir: Option<&str>) -> PyResult<Bound<'py, PyAny>> {
    let r = run(&load(text, base_dir)?).map_err(|e| ledger_err(e.code(), e))?;
    let summary = serde_json::json!({
        "name": r.trace.name,
        "steps": r.trace.entries.len(),
        "trace_hash": r.trace.trace_hash,
        "state_root": r.trace.final_state_root,
    });
    to_py(py, &summary)
}

/// Verify a JSON-lines chain. Returns `(height, state_root)`.
#[pyfunction]
fn verify_chain(chain: &[u8]) -> PyResult<(u64, String)> {
    let c = verify(chain).map_err(|f| ledger_err(f.error.code(), format!("fail height={} {}", f.height, f.error)))?;
    Ok((c.height().unwrap_or(0), c.state_root().to_hex()))
}

/// min(claimed, cap, floor(coverage_bps × outstanding / 10^4)).
#[pyfunction]
#[pyo3(signature = (coverage_bps, cap, outstanding, claimed, first_demand=false))]
fn compute_payout(coverage_bps: u64, cap: u64, outstanding: u64, claimed: u64, first_demand: bool) -> PyResult<u64> {
    let seniority = if first_demand { Seniority::FirstDemand } else { Seniority::PariPassu };
    let terms = RiskLineTerms { coverage_bps, seniority, cap };
    terms.validate().map_err(PyValueError::new_err)?;
    Ok(payout(&terms, outstanding, claimed))
}

#[pyfunction]
fn fee_amount(coverage_bps: u64, principal: u64, fee_rate_bps: u64) -> u64 {
    fee(coverage_bps, principal, fee_rate_bps)
}

/// Proposer slot for `height` (and `retry`) among `n` validators.
#[pyfunction]
fn proposer_index(prev_hash: &str, height: u64, retry: u32, n: usize) -> PyResult<usize> {
    proposer(&parse_hex::<Digest>(prev_hash)?, height, retry, n).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// An in-memory network built from a scenario document. Its steps run first.
#[pyclass(unsendable)]
struct Network {
    node: Node,
}

impl Network {
    fn addr(&self, label: &str) -> PyResult<Address> {
        self.node.address_of(label).ok_or_else(|| ledger_err("UnknownLabel", label))
    }
}

#[pymethods]
impl Network {
    #[new]
    #[pyo3(signature = (text, base_dir=None))]
    fn new(text: &str, base_dir: Option<&str>) -> PyResult<Self> {
        let r = run(&load(text, base_dir)?).map_err(|e| ledger_err(e.code(), e))?;
        Ok(Network { node: r.node })
    }

    fn address(&self, label: &str) -> PyResult<String> {
        Ok(self.addr(label)?.to_hex())
    }

    fn balance(&self, label: &str) -> PyResult<u64> {
        Ok(self.node.state().balance(&self.addr(label)?))
    }

    /// Queue a case operation; returns the transaction hash. `@label`
    /// strings in `args` are not resolved here, use `address()`.
    #[pyo3(signature = (actor, case_id, op, args=None))]
    fn act(&mut self, actor: &str, case_id: &str, op: &str, args: Option<&Bound<'_, PyAny>>) -> PyResult<String> {
        let args = args.map(from_py).transpose()?.unwrap_or(serde_json::Value::Null);
        let req = ActionRequest { op: op.to_string(), args };
        let who = self.addr(actor)?;
        Ok(self.node.act(&who, case_id, &req).map_err(node_err)?.to_hex())
    }

    fn transfer(&mut self, sender: &str, recipient: &str, amount: u64) -> PyResult<String> {
        let (from, to) = (self.addr(sender)?, self.addr(recipient)?);
        Ok(self.node.transfer(&from, &to, amount, None).map_err(node_err)?.to_hex())
    }

    /// One consensus round. Returns `(finalized, height)`.
    fn round(&mut self) -> (bool, u64) {
        let r = self.node.run_round(&BTreeMap::new());
        (matches!(r.outcome, RoundOutcome::Finalized { .. }), r.height)
    }

    fn case<'py>(&self, py: Python<'py>, case_id: &str) -> PyResult<Bound<'py, PyAny>> {
        let case = self.node.state().cases.get(case_id).ok_or_else(|| ledger_err("NotFound", case_id))?;
        to_py(py, case)
    }

    fn tasks<'py>(&self, py: Python<'py>, label: &str) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &pending_tasks(self.node.state(), &self.addr(label)?))
    }

    #[getter]
    fn height(&self) -> u64 {
        self.node.chain().height().unwrap_or(0)
    }

    #[getter]
    fn state_root(&self) -> String {
        self.node.chain().state_root().to_hex()
    }

    fn chain_jsonl(&self) -> String {
        self.node.chain().to_jsonl()
    }
}

#[pymodule]
fn cgs_ledger_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("LedgerError", m.py().get_type::<LedgerError>())?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(verify_chain, m)?)?;
    m.add_function(wrap_pyfunction!(compute_payout, m)?)?;
    m.add_function(wrap_pyfunction!(fee_amount, m)?)?;
    m.add_function(wrap_pyfunction!(proposer_index, m)?)?;
    m.add_class::<Network>()?;
    Ok(())
}
