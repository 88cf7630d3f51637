mod common;

use std::collections::BTreeMap;

use cgs_ledger::consensus::{proposer_index, select_proposer, Behavior, RoundOutcome};
use cgs_ledger::crypto::{Address, Digest};
use cgs_ledger::ledger::verify_chain;
use cgs_ledger::registry::Role;
use common::{addr, four, node, spec};

fn hex32(s: &str) -> Digest {
    s.parse().unwrap()
}

/// Indices computed with Python's hashlib over prev ‖ ascii(height)
/// [‖ ascii(retry)], first 8 bytes big-endian, mod n.
#[test]
fn proposer_index_matches_independent_oracle() {
    let cases = [
        ("0000000000000000000000000000000000000000000000000000000000000000", 1, 0, 4, 3),
        ("1111111111111111111111111111111111111111111111111111111111111111", 5, 0, 7, 5),
        ("1111111111111111111111111111111111111111111111111111111111111111", 5, 2, 7, 2),
        ("000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f", 123456, 0, 10, 7),
        ("000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f", 123456, 1, 10, 9),
        ("ffffffffffffffffffffffffffffffffffffffffffffffffffffffffffffffff", 0, 0, 3, 1),
        ("abababababababababababababababababababababababababababababababab", 42, 17, 2, 1),
    ];
    for (prev, height, retry, n, want) in cases {
        assert_eq!(proposer_index(&hex32(prev), height, retry, n).unwrap(), want, "{prev} {height} {retry} {n}");
    }
}

#[test]
fn proposer_is_drawn_from_the_sorted_set() {
    let set: Vec<Address> = (0..4u8).map(|i| Address([i * 40; 32])).collect();
    let p = select_proposer(&Digest::ZERO, 1, 0, &set).unwrap();
    assert_eq!(p, set[3]);
}

#[test]
fn four_honest_validators_finalize_with_four_votes() {
    let mut n = four();
    let round = n.run_round(&BTreeMap::new());
    assert!(round.finalized());
    assert_eq!((round.votes, round.needed), (4, 3));
}

#[test]
fn two_offline_of_four_fails_and_keeps_pending() {
    let mut n = four();
    let (borrower, bank) = (addr(&n, "borrower"), addr(&n, "bank"));
    n.transfer(&borrower, &bank, 9, None).unwrap();
    let height = n.chain().height();
    let validators = n.state().registry.validator_set();
    let proposer = select_proposer(&n.chain().tip_hash(), n.state().next_height, 0, &validators).unwrap();
    let offline: BTreeMap<Address, Behavior> =
        validators.iter().filter(|v| **v != proposer).take(2).map(|v| (*v, Behavior::Offline)).collect();
    let round = n.run_round(&offline);
    assert_eq!(round.outcome, RoundOutcome::Failed { reason: "InsufficientVotes".into() });
    assert_eq!(round.votes, 2);
    assert_eq!(n.chain().height(), height);
    assert_eq!(n.pending().len(), 1);

    // The retry is proposed under retry = 1 and still verifies from the file.
    let round = n.run_round(&BTreeMap::new());
    assert!(round.finalized());
    assert_eq!(round.retry, 1);
    let block = n.chain().blocks().last().unwrap();
    assert_eq!(block.round, 1);
    assert_eq!(block.transactions.len(), 1);
    assert!(n.pending().is_empty());
    verify_chain(n.chain().to_jsonl().as_bytes()).unwrap();
}

#[test]
fn offline_proposer_fails_without_proposal() {
    let mut n = four();
    let validators = n.state().registry.validator_set();
    let proposer = select_proposer(&n.chain().tip_hash(), n.state().next_height, 0, &validators).unwrap();
    let round = n.run_round(&BTreeMap::from([(proposer, Behavior::Offline)]));
    assert_eq!(round.outcome, RoundOutcome::Failed { reason: "ProposerOffline".into() });
    assert_eq!((round.votes, round.proposer), (0, proposer));
}

#[test]
fn identical_inputs_give_identical_rounds() {
    let mut a = four();
    let mut b = four();
    for node in [&mut a, &mut b] {
        let (x, y) = (addr(node, "borrower"), addr(node, "cgi"));
        node.transfer(&x, &y, 3, None).unwrap();
    }
    let off = BTreeMap::from([(addr(&a, "auditor"), Behavior::Offline)]);
    assert_eq!(a.run_round(&off), b.run_round(&off));
    assert_eq!(a.chain().to_jsonl(), b.chain().to_jsonl());
}

#[test]
fn revoked_validator_leaves_the_set() {
    let mut n = four();
    let (cgi, auditor) = (addr(&n, "cgi"), addr(&n, "auditor"));
    n.revoke(&cgi, &auditor).unwrap();
    assert!(n.run_round(&BTreeMap::new()).finalized());
    let round = n.run_round(&BTreeMap::new());
    assert!(round.finalized());
    assert_eq!((round.votes, round.needed), (3, 2));
    let last = n.chain().blocks().last().unwrap();
    assert!(last.finality_votes.iter().all(|v| v.validator != auditor));
}

#[test]
fn one_block_per_height_across_rounds() {
    let s = spec(9, &[("cgi", Role::Cgi, 0), ("a", Role::Borrower, 0), ("b", Role::Borrower, 0)]);
    let mut n = node(&s);
    let mut behaviors = [BTreeMap::new(), BTreeMap::from([(addr(&n, "a"), Behavior::Offline), (addr(&n, "b"), Behavior::Offline)])];
    for i in 0..12 {
        n.run_round(&behaviors[i % 2]);
        behaviors.swap(0, 1);
    }
    for (i, b) in n.chain().blocks().iter().enumerate() {
        assert_eq!(b.height, i as u64);
    }
}
