#![allow(dead_code)]

use std::collections::BTreeMap;

use cgs_ledger::config::DeploymentConfig;
use cgs_ledger::crypto::{Address, Digest};
use cgs_ledger::docstore::DocStore;
use cgs_ledger::ledger::{Block, Vote};
use cgs_ledger::node::{ActorSpec, NetworkSpec, Node};
use cgs_ledger::registry::Role;

pub fn spec(seed: u8, actors: &[(&str, Role, u64)]) -> NetworkSpec {
    NetworkSpec {
        seed: Digest([seed; 32]),
        actors: actors
            .iter()
            .map(|(label, role, balance)| ActorSpec { label: label.to_string(), role: *role, balance: *balance, admit: true })
            .collect(),
        config: DeploymentConfig::default(),
        fund_balance: 1_000_000,
    }
}

pub fn node(spec: &NetworkSpec) -> Node {
    Node::bootstrap(spec, DocStore::in_memory(spec.keyring())).unwrap()
}

/// Four validators: a borrower, a bank, a CGI and an auditor.
pub fn four() -> Node {
    node(&spec(
        3,
        &[("borrower", Role::Borrower, 10_000), ("bank", Role::Bank, 10_000), ("cgi", Role::Cgi, 0), ("auditor", Role::Auditor, 0)],
    ))
}

pub fn addr(node: &Node, label: &str) -> Address {
    node.address_of(label).unwrap()
}

/// Run `blocks` more rounds, each carrying one transfer.
pub fn grow(node: &mut Node, blocks: usize) {
    let (a, b) = (addr(node, "borrower"), addr(node, "bank"));
    for i in 0..blocks {
        let (from, to) = if i % 2 == 0 { (a, b) } else { (b, a) };
        node.transfer(&from, &to, 1 + i as u64, None).unwrap();
        assert!(node.run_round(&BTreeMap::new()).finalized());
    }
}

/// Add votes from `voters` (validators whose keys the node holds).
pub fn vote(node: &Node, block: &mut Block, voters: &[Address]) {
    let h = block.hash();
    for v in voters {
        let sig = node.keypair(v).unwrap().sign(&h.0);
        block.add_vote(Vote { validator: *v, signature: sig });
    }
}
