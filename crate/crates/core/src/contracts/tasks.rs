//! Which actions each actor can take right now.
//!
//! Every task carries a ready-to-submit argument template; submitting it
//! unchanged against the same finalized state is accepted. Actions not listed
//! for an actor are rejected by the engine or the node.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::case::{ArbiterSeat, CaseState, GuaranteeCase, Pathway, PaymentStatus};
use super::terms::{compute_payout, Party, RiskLineTerms, Seniority};
use super::guarantee_fund;
use crate::crypto::Address;
use crate::ledger::state::LedgerState;
use crate::registry::Role;

/// Every action name the node accepts for an existing case.
pub const CASE_ACTIONS: [&str; 17] = [
    "supplement_kyc",
    "cgi_decide_guarantee",
    "grant_to_bank",
    "auto_submit_loan_request",
    "bank_evaluate_loan",
    "bank_request_guarantee",
    "risk_line_step",
    "pay_fee",
    "verify_fee_payment",
    "issue_certificate",
    "disburse_loan",
    "record_payment_event",
    "trigger_default",
    "file_claim",
    "dispute_step",
    "enforce_and_payout",
    "submit_application",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskItem {
    pub case_id: String,
    pub state: CaseState,
    pub awaited_action: String,
    /// Logical time of the case's latest event.
    pub since: u64,
    pub args: Value,
}

fn default_terms(case: &GuaranteeCase) -> RiskLineTerms {
    RiskLineTerms { coverage_bps: 8000, seniority: Seniority::PariPassu, cap: case.principal }
}

/// True when a payment of exactly the assessed fee from the payer is on record.
pub fn fee_paid_exactly(state: &LedgerState, case: &GuaranteeCase) -> bool {
    let Some(fee) = case.fee.as_ref() else {
        return false;
    };
    state
        .fee_payments
        .get(&case.case_id)
        .is_some_and(|ps| ps.iter().any(|p| p.payer == fee.payer && p.amount == fee.fee_amount))
}

fn next_installment(case: &GuaranteeCase) -> u64 {
    let Some(loan) = case.loan.as_ref() else {
        return 0;
    };
    let paid = loan.payments.iter().filter(|p| p.status == PaymentStatus::Regular).count();
    let due = loan.schedule.get(paid).map_or(loan.outstanding, |i| i.amount);
    match due.min(loan.outstanding) {
        0 => loan.outstanding.min(1),
        n => n,
    }
}

fn risk_line_tasks(case: &GuaranteeCase, party: Party, out: &mut Vec<(String, Value)>) {
    match (&case.risk_line, case.state) {
        (Some(rl), CaseState::RiskLineNegotiation) => {
            if rl.proposed_by != party {
                out.push(("risk_line_step".into(), json!({"step": "accept"})));
            }
            out.push(("risk_line_step".into(), json!({"step": "propose", "terms": rl.terms})));
        }
        _ => out.push(("risk_line_step".into(), json!({"step": "propose", "terms": default_terms(case)}))),
    }
}

fn payout_funded(state: &LedgerState, case: &GuaranteeCase) -> bool {
    let (Some(claim), Some(rl)) = (case.claim.as_ref(), case.risk_line.as_ref()) else {
        return true;
    };
    if !claim.eligibility.is_eligible() {
        return true;
    }
    state.balance(&guarantee_fund()) >= compute_payout(&rl.terms, claim.outstanding_at_filing, claim.claimed_amount)
}

fn case_tasks(state: &LedgerState, case: &GuaranteeCase, actor: &Address) -> Vec<(String, Value)> {
    use CaseState as S;
    let mut out = Vec::new();
    let is_borrower = *actor == case.borrower;
    let is_bank = *actor == case.bank;
    let is_cgi = *actor == case.cgi;
    let fee_payer = case.fee.as_ref().map(|f| f.payer);
    match case.state {
        S::KycNeedsMoreData if is_borrower => {
            let missing = case.kyc.as_ref().map(|k| k.missing()).unwrap_or_default();
            let kyc: serde_json::Map<String, Value> =
                missing.into_iter().map(|f| (f, Value::String("provided".into()))).collect();
            out.push(("supplement_kyc".into(), json!({ "kyc": kyc })));
        }
        S::KycVerified if is_cgi => out.push(("cgi_decide_guarantee".into(), json!({"approve": true}))),
        S::CriteriaAutoChecked if is_cgi => out.push(("cgi_decide_guarantee".into(), json!({"approve": true}))),
        S::GuaranteeApproved if is_cgi && case.pathway == Pathway::ExAnte => {
            out.push(("grant_to_bank".into(), json!({})))
        }
        S::LoanRequested if is_bank => {
            out.push(("bank_evaluate_loan".into(), json!({"pathway": "ex_ante", "accept": true})))
        }
        S::CollateralAssessed if is_bank => out.push(("bank_request_guarantee".into(), json!({}))),
        S::BankAccepted | S::RiskLineNegotiation => {
            if let Some(party) = case.party(actor) {
                risk_line_tasks(case, party, &mut out);
            }
        }
        S::FeePending => {
            let fee = case.fee.as_ref().expect("FeePending implies a fee");
            let paid = fee_paid_exactly(state, case);
            if fee_payer == Some(*actor) && !paid && state.balance(actor) >= fee.fee_amount {
                out.push(("pay_fee".into(), json!({})));
            }
            if is_cgi && paid {
                out.push(("verify_fee_payment".into(), json!({})));
            }
        }
        S::FeeVerified if is_cgi => out.push(("issue_certificate".into(), json!({}))),
        S::CertificateIssued if is_bank && state.balance(&case.bank) >= case.principal => {
            out.push(("disburse_loan".into(), json!({})))
        }
        S::LoanActive if is_bank => {
            out.push(("record_payment_event".into(), json!({"kind": "regular", "amount": next_installment(case)})));
            out.push(("record_payment_event".into(), json!({"kind": "missed"})));
        }
        S::DefaultTriggered if is_bank => {
            let outstanding = case.loan.as_ref().map_or(0, |l| l.outstanding);
            let claim = case
                .risk_line
                .as_ref()
                .map_or(outstanding, |rl| rl.terms.covered_amount(outstanding).min(rl.terms.cap));
            out.push((
                "file_claim".into(),
                json!({"claimed_amount": claim, "recovery_actions": [{"action": "formal_notice"}]}),
            ));
        }
        S::ClaimEligible | S::ClaimIneligible | S::Resolved if is_bank || is_cgi => {
            let may_dispute =
                (case.state == S::ClaimEligible && is_cgi) || (case.state == S::ClaimIneligible && is_bank);
            if may_dispute {
                out.push(("dispute_step".into(), json!({"step": "open", "evidence": [{"note": "contested"}]})));
            }
            if payout_funded(state, case) {
                out.push(("enforce_and_payout".into(), json!({})));
            }
        }
        S::Disputed => {
            let dispute = case.claim.as_ref().and_then(|c| c.dispute.as_ref());
            if let Some(d) = dispute {
                if is_cgi && d.cgi_ruling.is_none() {
                    out.push(("dispute_step".into(), json!({"step": "rule", "seat": ArbiterSeat::Cgi, "ruling": "Upheld"})));
                }
                let auditor = state.registry.role_of(actor) == Some(Role::Auditor);
                if auditor && !is_cgi && d.auditor_ruling.is_none() {
                    out.push((
                        "dispute_step".into(),
                        json!({"step": "rule", "seat": ArbiterSeat::Auditor, "ruling": "Upheld"}),
                    ));
                }
            }
        }
        _ => {}
    }
    out
}

/// Tasks currently enabled for `actor`, ordered by case id.
pub fn pending_tasks(state: &LedgerState, actor: &Address) -> Vec<TaskItem> {
    if state.registry.role_of(actor).is_none() {
        return Vec::new();
    }
    let mut out = Vec::new();
    for case in state.cases.values() {
        let since = case.event_log.last().map_or(0, |e| e.time);
        for (action, args) in case_tasks(state, case, actor) {
            out.push(TaskItem { case_id: case.case_id.clone(), state: case.state, awaited_action: action, since, args });
        }
    }
    out
}
