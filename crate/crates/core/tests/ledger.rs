mod common;

use std::collections::BTreeMap;

use cgs_ledger::consensus::{assemble_block, select_proposer};
use cgs_ledger::crypto::{Address, Keypair};
use cgs_ledger::ledger::{
    parse_block_line, tx_root, verify_chain, verify_transaction, BlockError, Payload, TxRejection, UnsignedTx,
};
use common::{addr, four, grow, vote};
use proptest::prelude::*;

fn transfer(kp: &Keypair, nonce: u64, to: Address, amount: u64) -> UnsignedTx {
    UnsignedTx {
        nonce,
        sender: kp.address(),
        payload: Payload::ValueTransfer { recipient: to, amount, reference: None },
        timestamp: 5,
    }
}

#[test]
fn signing_round_trip_and_binding() {
    let node = four();
    let bank = addr(&node, "bank");
    let kp = node.keypair(&bank).unwrap().clone();
    let tx = transfer(&kp, 1, Address([1; 32]), 10).sign(&kp).unwrap();
    assert!(tx.verify_signature(&kp.public_key()));

    let mut edited = tx.clone();
    edited.payload = Payload::ValueTransfer { recipient: Address([1; 32]), amount: 11, reference: None };
    assert!(!edited.verify_signature(&kp.public_key()));

    let other = Keypair::from_seed([8; 32]);
    assert_eq!(transfer(&kp, 1, Address([1; 32]), 10).sign(&other), Err(TxRejection::KeyMismatch));
}

#[test]
fn verify_transaction_reasons() {
    let mut node = four();
    let bank = addr(&node, "bank");
    let cgi = addr(&node, "cgi");
    let kp = node.keypair(&bank).unwrap().clone();
    let state = node.state().clone();
    let next = state.nonce(&bank) + 1;

    let ok = transfer(&kp, next, cgi, 1).sign(&kp).unwrap();
    assert_eq!(verify_transaction(&state, &ok), Ok(()));

    let stranger = Keypair::from_seed([99; 32]);
    let t = transfer(&stranger, 1, cgi, 1).sign(&stranger).unwrap();
    assert_eq!(verify_transaction(&state, &t), Err(TxRejection::NotAdmitted));

    let stale = transfer(&kp, state.nonce(&bank), cgi, 1).sign(&kp).unwrap();
    assert_eq!(verify_transaction(&state, &stale), Err(TxRejection::StaleNonce));

    let mut forged = ok.clone();
    forged.signature = stranger.sign(&forged.unsigned().signing_bytes());
    assert_eq!(verify_transaction(&state, &forged), Err(TxRejection::BadSignature));

    node.revoke(&cgi, &bank).unwrap();
    assert!(node.run_round(&BTreeMap::new()).finalized());
    assert_eq!(verify_transaction(node.state(), &ok), Err(TxRejection::Revoked));
}

#[test]
fn read_only_roles_cannot_transfer() {
    let mut node = four();
    let auditor = addr(&node, "auditor");
    let bank = addr(&node, "bank");
    let err = node.transfer(&auditor, &bank, 0, None).unwrap_err();
    assert_eq!(err.code(), "RoleForbidden");
}

#[test]
fn append_rejections_leave_chain_unchanged() {
    let mut node = four();
    let (borrower, bank) = (addr(&node, "borrower"), addr(&node, "bank"));
    node.transfer(&borrower, &bank, 5, None).unwrap();
    let before = node.chain().to_jsonl();
    let validators = node.state().registry.validator_set();
    assert_eq!(validators.len(), 4);
    let proposer = select_proposer(&node.chain().tip_hash(), node.state().next_height, 0, &validators).unwrap();

    // One vote of four: 1 < ceil(8/3) = 3.
    let (mut block, dropped) = assemble_block(node.chain(), node.pending(), proposer, 0);
    assert!(dropped.is_empty());
    vote(&node, &mut block, &[proposer]);
    let mut chain = node.chain().clone();
    let err = chain.append(block.clone()).unwrap_err();
    assert_eq!(err.error, BlockError::InsufficientVotes { got: 1, need: 3 });
    assert_eq!(chain.to_jsonl(), before);

    let mut wrong_link = block.clone();
    wrong_link.prev_hash.0[0] ^= 1;
    assert_eq!(chain.append(wrong_link).unwrap_err().error, BlockError::PrevHashMismatch);

    let stranger = Keypair::from_seed([99; 32]);
    let mut invalid = block.clone();
    invalid.finality_votes.clear();
    invalid.transactions = vec![transfer(&stranger, 1, bank, 1).sign(&stranger).unwrap()];
    invalid.tx_root = tx_root(&invalid.transactions);
    vote(&node, &mut invalid, &validators);
    assert_eq!(
        chain.append(invalid).unwrap_err().error,
        BlockError::ContainsInvalidTransaction { index: 0, reason: TxRejection::NotAdmitted }
    );
    assert_eq!(chain.to_jsonl(), before);

    let mut full = block;
    full.finality_votes.clear();
    vote(&node, &mut full, &validators);
    chain.append(full).unwrap();
    assert_eq!(chain.height(), Some(node.chain().height().unwrap() + 1));
}

#[test]
fn revoked_validator_vote_invalidates_block() {
    let mut node = four();
    let (cgi, auditor) = (addr(&node, "cgi"), addr(&node, "auditor"));
    node.revoke(&cgi, &auditor).unwrap();
    assert!(node.run_round(&BTreeMap::new()).finalized());
    let validators = node.state().registry.validator_set();
    assert_eq!(validators.len(), 3);
    let proposer = select_proposer(&node.chain().tip_hash(), node.state().next_height, 0, &validators).unwrap();
    let (mut block, _) = assemble_block(node.chain(), &[], proposer, 0);
    vote(&node, &mut block, &[validators[0], auditor]);
    let mut chain = node.chain().clone();
    assert_eq!(chain.append(block).unwrap_err().error, BlockError::InvalidVote(auditor));
}

#[test]
fn ten_block_chain_verifies_and_detects_tampering() {
    let mut node = four();
    grow(&mut node, 8);
    let chain = node.chain();
    assert_eq!(chain.height(), Some(9));
    let text = chain.to_jsonl();
    let verified = verify_chain(text.as_bytes()).unwrap();
    assert_eq!(verified.state_root(), chain.state_root());

    // Flip one byte inside block 4's transaction list.
    let lines: Vec<&str> = text.lines().collect();
    let offset: usize = lines[..4].iter().map(|l| l.len() + 1).sum();
    let in_line = lines[4].find("\"transactions\":[").unwrap() + 40;
    let mut bytes = text.clone().into_bytes();
    bytes[offset + in_line] = if bytes[offset + in_line] == b'a' { b'b' } else { b'a' };
    assert_eq!(verify_chain(&bytes).unwrap_err().height, 4);

    // Dropping the last block leaves a valid prefix.
    let prefix: String = lines[..9].iter().map(|l| format!("{l}\n")).collect();
    assert_eq!(verify_chain(prefix.as_bytes()).unwrap().height(), Some(8));
}

#[test]
fn every_prefix_is_valid() {
    let mut node = four();
    grow(&mut node, 4);
    let text = node.chain().to_jsonl();
    let mut acc = String::new();
    for (i, line) in text.lines().enumerate() {
        acc.push_str(line);
        acc.push('\n');
        let c = verify_chain(acc.as_bytes()).unwrap();
        assert_eq!(c.height(), Some(i as u64));
        assert_eq!(c.block_hash(i as u64), node.chain().block_hash(i as u64));
    }
}

#[test]
fn reformatted_line_is_rejected() {
    let node = four();
    let line = node.chain().blocks()[1].to_canonical_line();
    assert!(parse_block_line(line.as_bytes()).is_ok());
    let pretty = serde_json::to_string_pretty(&serde_json::from_str::<serde_json::Value>(&line).unwrap()).unwrap();
    assert_eq!(parse_block_line(pretty.as_bytes()), Err(BlockError::NonCanonical));
}

#[test]
fn account_history_filters_in_order() {
    let mut node = four();
    let (borrower, bank, cgi) = (addr(&node, "borrower"), addr(&node, "bank"), addr(&node, "cgi"));
    assert!(node.chain().account_history(&Address([5; 32])).is_empty());

    let before = node.chain().account_history(&bank).len();
    node.transfer(&bank, &borrower, 1, None).unwrap();
    node.run_round(&BTreeMap::new());
    let mid: Vec<_> = node.chain().account_history(&bank).into_iter().map(|(_, t)| t.hash()).collect();
    node.transfer(&borrower, &bank, 2, None).unwrap();
    node.transfer(&bank, &cgi, 3, None).unwrap();
    node.run_round(&BTreeMap::new());
    let after: Vec<_> = node.chain().account_history(&bank).into_iter().map(|(_, t)| t.hash()).collect();
    assert_eq!(after.len(), before + 3);
    assert_eq!(&after[..mid.len()], &mid[..]);

    let amounts: Vec<u64> = node.chain().account_history(&bank)[before..]
        .iter()
        .map(|(_, t)| match &t.payload {
            Payload::ValueTransfer { amount, .. } => *amount,
            _ => panic!("expected a transfer"),
        })
        .collect();
    assert_eq!(amounts, [1, 2, 3]);
}

#[test]
fn resubmitted_transaction_is_rejected() {
    let mut node = four();
    let (borrower, bank) = (addr(&node, "borrower"), addr(&node, "bank"));
    node.transfer(&borrower, &bank, 7, None).unwrap();
    node.run_round(&BTreeMap::new());
    let tx = node.chain().blocks().last().unwrap().transactions[0].clone();
    assert_eq!(node.submit_tx(tx).unwrap_err().code(), "StaleNonce");
}

#[test]
fn overdraft_is_rejected() {
    let mut node = four();
    let (borrower, bank) = (addr(&node, "borrower"), addr(&node, "bank"));
    assert_eq!(node.transfer(&borrower, &bank, 10_001, None).unwrap_err().code(), "InsufficientBalance");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Random transfer batches: replay reproduces the root and nonces strictly
    /// increase per sender.
    #[test]
    fn replay_and_nonce_monotonicity(batches in prop::collection::vec(prop::collection::vec((0usize..3, 0usize..3, 0u64..4000), 0..4), 1..5)) {
        let mut node = four();
        let labels = ["borrower", "bank", "cgi"];
        for batch in &batches {
            for (f, t, amount) in batch {
                let (from, to) = (addr(&node, labels[*f]), addr(&node, labels[*t]));
                let _ = node.transfer(&from, &to, *amount, None);
            }
            prop_assert!(node.run_round(&BTreeMap::new()).finalized());
        }
        let text = node.chain().to_jsonl();
        let a = verify_chain(text.as_bytes()).unwrap();
        let b = verify_chain(text.as_bytes()).unwrap();
        prop_assert_eq!(a.state_root(), node.chain().state_root());
        prop_assert_eq!(a.state_root(), b.state_root());

        let mut last: BTreeMap<Address, u64> = BTreeMap::new();
        for block in node.chain().blocks() {
            for tx in &block.transactions {
                if let Some(prev) = last.insert(tx.sender, tx.nonce) {
                    prop_assert!(tx.nonce > prev);
                }
            }
        }
        let total: u64 = node.state().accounts.values().map(|a| a.balance).sum();
        prop_assert_eq!(total, 20_000 + 1_000_000);
    }
}
