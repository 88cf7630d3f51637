mod common;

use std::collections::BTreeMap;

use cgs_ledger::contracts::case::KycStatus;
use cgs_ledger::contracts::eligibility::Ruleset;
use cgs_ledger::contracts::{
    CaseState, ClaimEligibility, ClosureReason, GuaranteeCase, IneligibleReason,
};
use cgs_ledger::node::{ActionRequest, NetworkSpec, Node};
use cgs_ledger::registry::Role;
use serde_json::{json, Value};

const CASE: &str = "k1";

struct Flow {
    n: Node,
    terms: Value,
}

fn network() -> NetworkSpec {
    common::spec(
        21,
        &[
            ("borrower", Role::Borrower, 10_000),
            ("bank", Role::Bank, 1_000_000),
            ("cgi", Role::Cgi, 0),
            ("auditor", Role::Auditor, 0),
            ("other", Role::Borrower, 0),
            ("poorbank", Role::Bank, 10),
        ],
    )
}

impl Flow {
    fn new(spec: &NetworkSpec) -> Flow {
        Flow {
            n: common::node(spec),
            terms: json!({"coverage_bps": 8000, "seniority": "FirstDemand", "cap": 80000}),
        }
    }

    fn a(&self, label: &str) -> String {
        self.n.address_of(label).unwrap().to_hex()
    }

    /// Act and run a round. Returns the rejection code, if any.
    fn try_act(&mut self, label: &str, op: &str, args: Value) -> Result<(), String> {
        let who = self.n.address_of(label).unwrap();
        let req = ActionRequest { op: op.into(), args };
        let h = self.n.act(&who, CASE, &req).map_err(|e| e.code().to_string())?;
        let round = self.n.run_round(&BTreeMap::new());
        assert!(round.finalized());
        assert!(round.included.contains(&h), "dropped: {:?}", round.dropped);
        Ok(())
    }

    fn act(&mut self, label: &str, op: &str, args: Value) {
        if let Err(e) = self.try_act(label, op, args) {
            panic!("{label} {op}: {e} in {:?}", self.state());
        }
    }

    fn case(&self) -> &GuaranteeCase {
        &self.n.state().cases[CASE]
    }

    fn state(&self) -> CaseState {
        self.case().state
    }

    fn ex_ante(kyc: Value) -> Flow {
        let mut f = Flow::new(&network());
        let args = json!({
            "bank": f.a("bank"), "cgi": f.a("cgi"), "principal": 100000,
            "schedule": [{"due": 10, "amount": 40000}, {"due": 20, "amount": 40000}, {"due": 30, "amount": 20000}],
            "application": {"purpose": "inventory"}, "kyc": kyc,
        });
        f.act("borrower", "submit_application", args);
        f
    }

    fn full_kyc() -> Value {
        json!({"id": 1, "financials": 2, "registry_extract": 3})
    }

    fn ex_post_with(spec: &NetworkSpec, principal: u64) -> Flow {
        let mut f = Flow::new(spec);
        let args = json!({
            "pathway": "ex_post", "borrower": f.a("borrower"), "cgi": f.a("cgi"), "principal": principal,
            "schedule": [{"due": 10, "amount": principal}], "application": {"purpose": "fleet"},
            "collateral_sufficient": false,
        });
        f.act("bank", "bank_evaluate_loan", args);
        f
    }

    fn ex_post() -> Flow {
        Flow::ex_post_with(&network(), 100000)
    }

    fn payer(&self) -> &'static str {
        if self.case().pathway.as_str() == "ExAnte" {
            "borrower"
        } else {
            "bank"
        }
    }

    /// Follow the main path until `target` is reached.
    fn until(mut self, target: CaseState) -> Flow {
        use CaseState::*;
        while self.state() != target {
            let terms = self.terms.clone();
            match self.state() {
                KycVerified | CriteriaAutoChecked => self.act("cgi", "cgi_decide_guarantee", json!({"approve": true})),
                GuaranteeApproved => self.act("cgi", "grant_to_bank", json!({})),
                LoanRequested => self.act("bank", "bank_evaluate_loan", json!({"pathway": "ex_ante", "accept": true})),
                CollateralAssessed => self.act("bank", "bank_request_guarantee", json!({})),
                BankAccepted => self.act("cgi", "risk_line_step", json!({"step": "propose", "terms": terms})),
                RiskLineNegotiation => self.act("bank", "risk_line_step", json!({"step": "accept"})),
                FeePending => {
                    let payer = self.payer();
                    self.act(payer, "pay_fee", json!({}));
                    self.act("cgi", "verify_fee_payment", json!({}));
                }
                FeeVerified => self.act("cgi", "issue_certificate", json!({})),
                CertificateIssued => self.act("bank", "disburse_loan", json!({})),
                LoanActive => self.act("bank", "record_payment_event", json!({"kind": "missed"})),
                DefaultTriggered => self.act(
                    "bank",
                    "file_claim",
                    json!({"claimed_amount": 80000, "recovery_actions": [{"letter": 1}]}),
                ),
                s => panic!("no path from {s:?} to {target:?}"),
            }
        }
        self
    }
}

#[test]
fn submit_application_paths() {
    let f = Flow::ex_ante(Flow::full_kyc());
    assert_eq!(f.state(), CaseState::KycVerified);
    assert_eq!(f.case().kyc_checks, 1);

    let mut f = f;
    let args = json!({
        "bank": f.a("bank"), "cgi": f.a("cgi"), "principal": 5, "schedule": [{"due": 1, "amount": 5}],
        "application": {}, "kyc": {},
    });
    assert_eq!(f.try_act("borrower", "submit_application", args.clone()), Err("WrongState".into()));

    let mut g = Flow::new(&network());
    let args = json!({
        "bank": g.a("bank"), "cgi": g.a("cgi"), "principal": 5, "schedule": [{"due": 1, "amount": 5}],
        "application": {}, "kyc": {},
    });
    assert_eq!(g.try_act("bank", "submit_application", args), Err("WrongActor".into()));
}

#[test]
fn kyc_missing_fields_and_loop() {
    let mut f = Flow::ex_ante(json!({"id": "x"}));
    assert_eq!(f.state(), CaseState::KycNeedsMoreData);
    let kyc = f.case().kyc.as_ref().unwrap();
    assert_eq!(kyc.status, KycStatus::MissingFields(vec!["financials".into(), "registry_extract".into()]));

    f.act("borrower", "supplement_kyc", json!({"kyc": {"financials": 1, "registry_extract": 2}}));
    assert_eq!(f.state(), CaseState::KycVerified);
    assert_eq!(f.case().kyc.as_ref().unwrap().status, KycStatus::Verified);
    assert_eq!(f.case().kyc_checks, 2);
    let names: Vec<&str> = f.case().event_log.iter().map(|e| e.event.name()).collect();
    assert_eq!(
        names,
        ["opened", "kyc_submitted", "kyc_checked", "kyc_supplemented", "kyc_checked"]
    );
}

#[test]
fn guarantee_decisions() {
    let mut f = Flow::ex_ante(Flow::full_kyc());
    assert_eq!(f.try_act("bank", "cgi_decide_guarantee", json!({"approve": true})), Err("WrongActor".into()));
    assert_eq!(f.try_act("auditor", "cgi_decide_guarantee", json!({"approve": true})), Err("RoleForbidden".into()));
    f.act("cgi", "cgi_decide_guarantee", json!({"approve": true}));
    assert_eq!(f.state(), CaseState::GuaranteeApproved);

    let mut r = Flow::ex_ante(Flow::full_kyc());
    r.act("cgi", "cgi_decide_guarantee", json!({"approve": false}));
    assert_eq!(r.state(), CaseState::GuaranteeRejected);
    assert!(r.state().is_terminal());
    assert_eq!(r.try_act("cgi", "cgi_decide_guarantee", json!({"approve": true})), Err("WrongState".into()));
}

#[test]
fn loan_request_needs_the_grant() {
    let mut f = Flow::ex_ante(Flow::full_kyc()).until(CaseState::GuaranteeApproved);
    assert_eq!(f.try_act("cgi", "auto_submit_loan_request", json!({})), Err("GrantMissing".into()));
    assert_eq!(f.state(), CaseState::GuaranteeApproved);

    // Bank cannot read the application before the grant.
    let bank = f.n.address_of("bank").unwrap();
    assert!(f.n.read_document(&f.case().application_cid, &bank).is_err());

    f.act("cgi", "grant_to_bank", json!({}));
    assert_eq!(f.state(), CaseState::LoanRequested);
    let heights: BTreeMap<&str, u64> = f
        .n
        .state()
        .events
        .iter()
        .filter(|e| e.case_id == CASE)
        .map(|e| (e.event.as_str(), e.height))
        .collect();
    assert_eq!(heights["financials_granted"], heights["loan_requested"]);

    f.act("bank", "bank_evaluate_loan", json!({"pathway": "ex_ante", "accept": true}));
    assert_eq!(f.state(), CaseState::BankAccepted);
}

#[test]
fn bank_rejection_is_terminal() {
    let mut f = Flow::ex_ante(Flow::full_kyc()).until(CaseState::LoanRequested);
    f.act("bank", "bank_evaluate_loan", json!({"pathway": "ex_ante", "accept": false}));
    assert_eq!(f.state(), CaseState::BankRejected);
}

#[test]
fn ex_post_head() {
    let mut f = Flow::ex_post();
    assert_eq!(f.state(), CaseState::CollateralAssessed);
    assert_eq!(f.try_act("borrower", "bank_request_guarantee", json!({})), Err("WrongActor".into()));
    f.act("bank", "bank_request_guarantee", json!({}));
    assert_eq!(f.state(), CaseState::CriteriaAutoChecked);
    assert!(f.case().eligibility.as_ref().unwrap().overall);
    assert_eq!(f.case().kyc_checks, 0);
    f.act("cgi", "cgi_decide_guarantee", json!({"approve": true}));
    assert_eq!(f.state(), CaseState::BankAccepted);

    let mut s = Flow::new(&network());
    let args = json!({
        "pathway": "ex_post", "borrower": s.a("borrower"), "cgi": s.a("cgi"), "principal": 100,
        "schedule": [{"due": 10, "amount": 100}], "application": {}, "collateral_sufficient": true,
    });
    s.act("bank", "bank_evaluate_loan", args);
    assert_eq!(s.state(), CaseState::ClosedWithoutPayout);
    assert_eq!(s.case().closure, Some(ClosureReason::NoGuaranteeNeeded));
}

#[test]
fn failed_criteria_reject_automatically() {
    let mut spec = network();
    spec.config.ruleset = Some(Ruleset::from_json(br#"[{"field":"principal","op":"<=","value":500000}]"#).unwrap());
    let mut f = Flow::ex_post_with(&spec, 600000);
    f.act("bank", "bank_request_guarantee", json!({}));
    assert_eq!(f.state(), CaseState::GuaranteeRejected);
    assert!(!f.case().eligibility.as_ref().unwrap().overall);

    let mut ok = Flow::ex_post_with(&spec, 100000);
    ok.act("bank", "bank_request_guarantee", json!({}));
    assert_eq!(ok.state(), CaseState::CriteriaAutoChecked);

    let mut none = network();
    none.config.ruleset = None;
    let mut m = Flow::ex_post_with(&none, 100000);
    assert_eq!(m.try_act("bank", "bank_request_guarantee", json!({})), Err("RulesetMissing".into()));
}

#[test]
fn risk_line_negotiation() {
    let mut f = Flow::ex_ante(Flow::full_kyc()).until(CaseState::BankAccepted);
    assert_eq!(f.try_act("bank", "risk_line_step", json!({"step": "accept"})), Err("AcceptWithoutOffer".into()));
    let offer = json!({"coverage_bps": 8000, "seniority": "PariPassu", "cap": 80000});
    f.act("cgi", "risk_line_step", json!({"step": "propose", "terms": offer}));
    let rl = f.case().risk_line.clone().unwrap();
    assert!(rl.agreed_by_cgi && !rl.agreed_by_bank);
    assert_eq!(f.try_act("cgi", "risk_line_step", json!({"step": "accept"})), Err("WrongActor".into()));

    let counter = json!({"coverage_bps": 7000, "seniority": "PariPassu", "cap": 80000});
    f.act("bank", "risk_line_step", json!({"step": "propose", "terms": counter}));
    let rl = f.case().risk_line.clone().unwrap();
    assert!(rl.agreed_by_bank && !rl.agreed_by_cgi);
    assert_eq!(f.state(), CaseState::RiskLineNegotiation);

    f.act("cgi", "risk_line_step", json!({"step": "accept"}));
    assert_eq!(f.state(), CaseState::FeePending);
    let rl = f.case().risk_line.clone().unwrap();
    assert!(rl.agreed_by_bank && rl.agreed_by_cgi);
    assert_eq!(rl.terms.coverage_bps, 7000);
    // floor(7000 * 100000 * 100 / 10^8)
    assert_eq!(f.case().fee.as_ref().unwrap().fee_amount, 700);
}

#[test]
fn fee_verification_is_exact() {
    let mut f = Flow::ex_ante(Flow::full_kyc()).until(CaseState::FeePending);
    let fee = f.case().fee.as_ref().unwrap().fee_amount;
    assert_eq!(fee, 800);
    assert_eq!(f.try_act("cgi", "verify_fee_payment", json!({})), Err("FeeNotFound".into()));
    assert_eq!(f.try_act("cgi", "issue_certificate", json!({})), Err("WrongState".into()));
    assert_eq!(f.try_act("bank", "pay_fee", json!({})), Err("WrongActor".into()));
    f.act("borrower", "pay_fee", json!({"amount": fee - 1}));
    assert_eq!(f.try_act("cgi", "verify_fee_payment", json!({})), Err("WrongAmount".into()));
    assert_eq!(f.state(), CaseState::FeePending);
    f.act("borrower", "pay_fee", json!({}));
    assert_eq!(f.try_act("borrower", "pay_fee", json!({})), Err("FeeAlreadyPaid".into()));
    f.act("cgi", "verify_fee_payment", json!({}));
    assert_eq!(f.state(), CaseState::FeeVerified);
    let rec = f.case().fee.clone().unwrap();
    assert!(rec.paid && rec.payment_tx.is_some());
    assert_eq!(f.n.state().balance(&f.n.address_of("borrower").unwrap()), 10_000 - (fee - 1) - fee);
}

#[test]
fn ex_post_fee_is_paid_by_the_bank() {
    let f = Flow::ex_post().until(CaseState::FeePending);
    assert_eq!(f.case().fee.as_ref().unwrap().payer, f.n.address_of("bank").unwrap());
}

#[test]
fn certificate_readable_by_role_policy() {
    let f = Flow::ex_ante(Flow::full_kyc()).until(CaseState::CertificateIssued);
    let cid = f.case().certificate_cid.unwrap();
    for label in ["borrower", "bank", "cgi", "other"] {
        let who = f.n.address_of(label).unwrap();
        assert!(f.n.read_document(&cid, &who).is_ok(), "{label}");
    }
    let auditor = f.n.address_of("auditor").unwrap();
    assert!(f.n.read_document(&cid, &auditor).is_err());
}

#[test]
fn disbursement() {
    let mut f = Flow::ex_ante(Flow::full_kyc()).until(CaseState::FeeVerified);
    assert_eq!(f.try_act("bank", "disburse_loan", json!({})), Err("WrongState".into()));
    f.act("cgi", "issue_certificate", json!({}));
    f.act("bank", "disburse_loan", json!({}));
    assert_eq!(f.state(), CaseState::LoanActive);
    assert_eq!(f.case().loan.as_ref().unwrap().outstanding, 100000);

    // A bank without funds.
    let mut p = Flow::new(&network());
    let args = json!({
        "bank": p.a("poorbank"), "cgi": p.a("cgi"), "principal": 100000,
        "schedule": [{"due": 10, "amount": 100000}], "application": {}, "kyc": Flow::full_kyc(),
    });
    p.act("borrower", "submit_application", args);
    p.act("cgi", "cgi_decide_guarantee", json!({"approve": true}));
    p.act("cgi", "grant_to_bank", json!({}));
    p.act("poorbank", "bank_evaluate_loan", json!({"pathway": "ex_ante", "accept": true}));
    p.act("cgi", "risk_line_step", json!({"step": "propose", "terms": p.terms.clone()}));
    p.act("poorbank", "risk_line_step", json!({"step": "accept"}));
    p.act("borrower", "pay_fee", json!({}));
    p.act("cgi", "verify_fee_payment", json!({}));
    p.act("cgi", "issue_certificate", json!({}));
    assert_eq!(p.try_act("poorbank", "disburse_loan", json!({})), Err("InsufficientBankBalance".into()));
}

#[test]
fn payments_and_default() {
    let mut f = Flow::ex_ante(Flow::full_kyc()).until(CaseState::LoanActive);
    let pay = |n: u64| json!({"kind": "regular", "amount": n});
    assert_eq!(f.try_act("bank", "record_payment_event", pay(100001)), Err("OverPayment".into()));
    f.act("bank", "record_payment_event", json!({"kind": "missed"}));
    f.act("bank", "record_payment_event", json!({"kind": "missed"}));
    assert_eq!(f.try_act("bank", "trigger_default", json!({})), Err("ThresholdNotReached".into()));
    f.act("bank", "record_payment_event", pay(10));
    assert_eq!(f.case().loan.as_ref().unwrap().consecutive_missed, 0);
    f.act("bank", "record_payment_event", json!({"kind": "missed"}));
    f.act("bank", "record_payment_event", json!({"kind": "missed"}));
    assert_eq!(f.state(), CaseState::LoanActive);
    f.act("bank", "record_payment_event", json!({"kind": "credit_note", "note": {"rating": "B-"}}));
    assert_eq!(f.case().loan.as_ref().unwrap().creditworthiness_notes.len(), 1);
    assert_eq!(f.case().loan.as_ref().unwrap().consecutive_missed, 2);
    f.act("bank", "record_payment_event", json!({"kind": "missed"}));
    assert_eq!(f.state(), CaseState::DefaultTriggered);

    let mut r = Flow::ex_ante(Flow::full_kyc()).until(CaseState::LoanActive);
    r.act("bank", "record_payment_event", pay(40000));
    r.act("bank", "record_payment_event", pay(40000));
    assert_eq!(r.state(), CaseState::LoanActive);
    r.act("bank", "record_payment_event", pay(20000));
    assert_eq!(r.state(), CaseState::Repaid);
    assert_eq!(r.case().loan.as_ref().unwrap().outstanding, 0);
}

#[test]
fn claim_filing_and_eligibility() {
    let mut f = Flow::ex_ante(Flow::full_kyc()).until(CaseState::LoanActive);
    assert_eq!(
        f.try_act("bank", "file_claim", json!({"claimed_amount": 1})),
        Err("WrongState".into())
    );
    let mut f = f.until(CaseState::DefaultTriggered);
    assert_eq!(f.try_act("borrower", "file_claim", json!({"claimed_amount": 1})), Err("WrongActor".into()));
    // FirstDemand, claim = coverage × outstanding = 80000 (cap 80000).
    f.act("bank", "file_claim", json!({"claimed_amount": 80000}));
    assert_eq!(f.state(), CaseState::ClaimEligible);
    f.act("cgi", "enforce_and_payout", json!({}));
    assert_eq!(f.state(), CaseState::PaidOut);
    assert_eq!(f.case().claim.as_ref().unwrap().payout, Some(80000));

    let mut cap = Flow::ex_ante(Flow::full_kyc()).until(CaseState::DefaultTriggered);
    cap.act("bank", "file_claim", json!({"claimed_amount": 80001}));
    assert_eq!(
        cap.case().claim.as_ref().unwrap().eligibility,
        ClaimEligibility::Ineligible(IneligibleReason::ExceedsCap)
    );
    cap.act("cgi", "enforce_and_payout", json!({}));
    assert_eq!(cap.state(), CaseState::ClosedWithoutPayout);
    assert_eq!(cap.case().closure, Some(ClosureReason::ClaimIneligible));

    let mut pp = Flow::ex_ante(Flow::full_kyc());
    pp.terms = json!({"coverage_bps": 8000, "seniority": "PariPassu", "cap": 80000});
    let mut pp = pp.until(CaseState::DefaultTriggered);
    pp.act("bank", "file_claim", json!({"claimed_amount": 1000}));
    assert_eq!(
        pp.case().claim.as_ref().unwrap().eligibility,
        ClaimEligibility::Ineligible(IneligibleReason::NoRecoveryAction)
    );
}

#[test]
fn disputes() {
    let mut f = Flow::ex_ante(Flow::full_kyc()).until(CaseState::DefaultTriggered);
    f.act("bank", "file_claim", json!({"claimed_amount": 90000}));
    assert_eq!(f.state(), CaseState::ClaimIneligible);
    assert_eq!(
        f.try_act("cgi", "dispute_step", json!({"step": "open", "evidence": []})),
        Err("WrongActor".into())
    );
    f.act("bank", "dispute_step", json!({"step": "open", "evidence": [{"memo": 1}]}));
    assert_eq!(f.state(), CaseState::Disputed);

    let rule = |seat: &str, ruling: &str| json!({"step": "rule", "seat": seat, "ruling": ruling});
    assert_eq!(f.try_act("bank", "dispute_step", rule("CGI", "Upheld")), Err("NotArbiter".into()));
    assert_eq!(f.try_act("cgi", "dispute_step", rule("Auditor", "Upheld")), Err("SelfArbitration".into()));
    assert_eq!(f.try_act("auditor", "dispute_step", rule("CGI", "Upheld")), Err("NotArbiter".into()));

    // Discordant rulings reset both seats and keep the dispute open.
    f.act("cgi", "dispute_step", rule("CGI", "Upheld"));
    assert_eq!(f.try_act("cgi", "dispute_step", rule("CGI", "Upheld")), Err("AlreadyRuled".into()));
    f.act("auditor", "dispute_step", rule("Auditor", "Overturned"));
    assert_eq!(f.state(), CaseState::Disputed);
    let d = f.case().claim.as_ref().unwrap().dispute.clone().unwrap();
    assert!(d.cgi_ruling.is_none() && d.auditor_ruling.is_none());
    assert_eq!(d.rounds, 1);

    f.act("cgi", "dispute_step", rule("CGI", "Overturned"));
    f.act("auditor", "dispute_step", rule("Auditor", "Overturned"));
    assert_eq!(f.state(), CaseState::Resolved);
    assert_eq!(f.case().claim.as_ref().unwrap().eligibility, ClaimEligibility::Eligible);
    f.act("cgi", "enforce_and_payout", json!({}));
    // min(90000, cap 80000, floor(8000 × 100000 / 10^4) = 80000)
    assert_eq!(f.case().claim.as_ref().unwrap().payout, Some(80000));

    // The CGI may dispute an eligible claim; upheld keeps it eligible.
    let mut g = Flow::ex_ante(Flow::full_kyc()).until(CaseState::ClaimEligible);
    g.act("cgi", "dispute_step", json!({"step": "open", "evidence": []}));
    g.act("cgi", "dispute_step", rule("CGI", "Upheld"));
    g.act("auditor", "dispute_step", rule("Auditor", "Upheld"));
    assert_eq!(g.case().claim.as_ref().unwrap().eligibility, ClaimEligibility::Eligible);
}

#[test]
fn payout_needs_guarantee_funds() {
    let mut spec = network();
    spec.fund_balance = 100;
    let mut f = Flow::new(&spec);
    let args = json!({
        "bank": f.a("bank"), "cgi": f.a("cgi"), "principal": 100000,
        "schedule": [{"due": 10, "amount": 100000}], "application": {}, "kyc": Flow::full_kyc(),
    });
    f.act("borrower", "submit_application", args);
    let mut f = f.until(CaseState::ClaimEligible);
    assert_eq!(f.try_act("cgi", "enforce_and_payout", json!({})), Err("InsufficientGuaranteeFunds".into()));
}

#[test]
fn event_log_replays_to_case() {
    for f in [
        Flow::ex_ante(json!({"id": 1})),
        Flow::ex_ante(Flow::full_kyc()).until(CaseState::ClaimEligible),
        Flow::ex_post().until(CaseState::LoanActive),
    ] {
        let case = f.case();
        assert_eq!(&GuaranteeCase::replay(&case.event_log).unwrap(), case);
    }
}
