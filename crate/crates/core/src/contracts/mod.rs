//! Guarantee life-cycle contracts.
//!
//! [`execute`] is a pure function of the finalized ledger view, the caller
//! and the call: it validates actor and state, then returns the updated case,
//! the events it emitted and any balance movements. The ledger commits the
//! outcome only when the whole transaction succeeds, so a rejected call never
//! changes anything.

pub mod case;
pub mod eligibility;
pub mod tasks;
pub mod terms;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::canonical::to_canonical;
use crate::crypto::{hash, Address, ContentId, Digest};
use crate::ledger::state::LedgerState;
use crate::registry::{Permission, Role};

pub use case::{
    ArbiterSeat, CaseEvent, CaseState, ClaimEligibility, ClosureReason, EnforcementAction, GuaranteeCase,
    IneligibleReason, Installment, LogEntry, Pathway, PaymentEvent, Ruling,
};
pub use eligibility::{CaseFacts, EligibilityResult, Ruleset};
pub use terms::{compute_payout, fee_amount, Party, RiskLine, RiskLineTerms, Seniority};

/// Account holding guarantee fees and funding payouts. It has no private key;
/// only contract execution moves its balance.
pub fn guarantee_fund() -> Address {
    Address::system("guarantee-fund")
}

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContractError {
    #[error("operation {op} is not allowed in state {state}")]
    WrongState { op: String, state: CaseState },
    #[error("caller may not perform this operation on the case")]
    WrongActor,
    #[error("no case with this id")]
    UnknownCase,
    #[error("invalid case party: {0}")]
    InvalidParty(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("financial data has not been granted to the bank")]
    GrantMissing,
    #[error("no eligibility ruleset is configured")]
    RulesetMissing,
    #[error("there is no standing risk-line offer to accept")]
    AcceptWithoutOffer,
    #[error("no fee payment referencing the case was found")]
    FeeNotFound,
    #[error("fee payment of {found} does not match the assessed fee {expected}")]
    WrongAmount { expected: u64, found: u64 },
    #[error("bank balance is below the principal")]
    InsufficientBankBalance,
    #[error("payment exceeds the outstanding amount")]
    OverPayment,
    #[error("consecutive missed payments below the default threshold")]
    ThresholdNotReached,
    #[error("caller is not an arbiter for this seat")]
    NotArbiter,
    #[error("the case CGI cannot take the independent arbiter seat")]
    SelfArbitration,
    #[error("this arbiter seat has already ruled in the current round")]
    AlreadyRuled,
    #[error("guarantee fund balance is below the payout")]
    InsufficientGuaranteeFunds,
}

impl ContractError {
    pub fn code(&self) -> &'static str {
        match self {
            ContractError::WrongState { .. } => "WrongState",
            ContractError::WrongActor => "WrongActor",
            ContractError::UnknownCase => "UnknownCase",
            ContractError::InvalidParty(_) => "InvalidParty",
            ContractError::InvalidArgument(_) => "InvalidArgument",
            ContractError::GrantMissing => "GrantMissing",
            ContractError::RulesetMissing => "RulesetMissing",
            ContractError::AcceptWithoutOffer => "AcceptWithoutOffer",
            ContractError::FeeNotFound => "FeeNotFound",
            ContractError::WrongAmount { .. } => "WrongAmount",
            ContractError::InsufficientBankBalance => "InsufficientBankBalance",
            ContractError::OverPayment => "OverPayment",
            ContractError::ThresholdNotReached => "ThresholdNotReached",
            ContractError::NotArbiter => "NotArbiter",
            ContractError::SelfArbitration => "SelfArbitration",
            ContractError::AlreadyRuled => "AlreadyRuled",
            ContractError::InsufficientGuaranteeFunds => "InsufficientGuaranteeFunds",
        }
    }
}

/// Bank's evaluation: accept/reject a requested ex-ante loan, or open an
/// ex-post case with the collateral assessment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "pathway", rename_all = "snake_case", deny_unknown_fields)]
pub enum BankEvaluation {
    ExAnte {
        accept: bool,
    },
    ExPost {
        borrower: Address,
        cgi: Address,
        application_cid: ContentId,
        principal: u64,
        schedule: Vec<Installment>,
        collateral_sufficient: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case", deny_unknown_fields)]
pub enum RiskLineStep {
    Propose { terms: RiskLineTerms },
    Accept,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisputeStep {
    Open { evidence_cids: Vec<ContentId> },
    Rule { seat: ArbiterSeat, ruling: Ruling },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum ContractCall {
    SubmitApplication {
        case_id: String,
        bank: Address,
        cgi: Address,
        application_cid: ContentId,
        principal: u64,
        schedule: Vec<Installment>,
        dossier_cid: ContentId,
        provided_fields: Vec<String>,
    },
    SupplementKyc {
        case_id: String,
        dossier_cid: ContentId,
        provided_fields: Vec<String>,
    },
    CgiDecideGuarantee {
        case_id: String,
        approve: bool,
    },
    GrantToBank {
        case_id: String,
        original_cid: ContentId,
        granted_cid: ContentId,
    },
    AutoSubmitLoanRequest {
        case_id: String,
    },
    BankEvaluateLoan {
        case_id: String,
        evaluation: BankEvaluation,
    },
    BankRequestGuarantee {
        case_id: String,
    },
    RiskLineStep {
        case_id: String,
        action: RiskLineStep,
    },
    VerifyFeePayment {
        case_id: String,
    },
    IssueCertificate {
        case_id: String,
        certificate_cid: ContentId,
    },
    DisburseLoan {
        case_id: String,
    },
    RecordPaymentEvent {
        case_id: String,
        payment: PaymentEvent,
    },
    TriggerDefault {
        case_id: String,
    },
    FileClaim {
        case_id: String,
        claimed_amount: u64,
        recovery_action_cids: Vec<ContentId>,
    },
    DisputeStep {
        case_id: String,
        action: DisputeStep,
    },
    EnforceAndPayout {
        case_id: String,
    },
}

impl ContractCall {
    pub fn case_id(&self) -> &str {
        use ContractCall::*;
        match self {
            SubmitApplication { case_id, .. }
            | SupplementKyc { case_id, .. }
            | CgiDecideGuarantee { case_id, .. }
            | GrantToBank { case_id, .. }
            | AutoSubmitLoanRequest { case_id }
            | BankEvaluateLoan { case_id, .. }
            | BankRequestGuarantee { case_id }
            | RiskLineStep { case_id, .. }
            | VerifyFeePayment { case_id }
            | IssueCertificate { case_id, .. }
            | DisburseLoan { case_id }
            | RecordPaymentEvent { case_id, .. }
            | TriggerDefault { case_id }
            | FileClaim { case_id, .. }
            | DisputeStep { case_id, .. }
            | EnforceAndPayout { case_id } => case_id,
        }
    }

    pub fn op_name(&self) -> &'static str {
        use ContractCall::*;
        match self {
            SubmitApplication { .. } => "submit_application",
            SupplementKyc { .. } => "supplement_kyc",
            CgiDecideGuarantee { .. } => "cgi_decide_guarantee",
            GrantToBank { .. } => "grant_to_bank",
            AutoSubmitLoanRequest { .. } => "auto_submit_loan_request",
            BankEvaluateLoan { .. } => "bank_evaluate_loan",
            BankRequestGuarantee { .. } => "bank_request_guarantee",
            RiskLineStep { .. } => "risk_line_step",
            VerifyFeePayment { .. } => "verify_fee_payment",
            IssueCertificate { .. } => "issue_certificate",
            DisburseLoan { .. } => "disburse_loan",
            RecordPaymentEvent { .. } => "record_payment_event",
            TriggerDefault { .. } => "trigger_default",
            FileClaim { .. } => "file_claim",
            DisputeStep { .. } => "dispute_step",
            EnforceAndPayout { .. } => "enforce_and_payout",
        }
    }

    /// Matrix permission the sender's role must hold.
    pub fn permission(&self) -> Permission {
        match self {
            ContractCall::CgiDecideGuarantee { .. } => Permission::DecideGuarantee,
            ContractCall::RiskLineStep { .. } => Permission::ProposeRiskLine,
            ContractCall::FileClaim { .. } => Permission::FileClaim,
            ContractCall::DisputeStep { action: DisputeStep::Rule { .. }, .. } => Permission::Arbitrate,
            _ => Permission::IssueTx,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transfer {
    pub from: Address,
    pub to: Address,
    pub amount: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub case: GuaranteeCase,
    pub emitted: Vec<LogEntry>,
    pub transfers: Vec<Transfer>,
}

/// Case being advanced by one call; emitted events are folded immediately so
/// automation rules see the post-event case.
struct Run {
    case: GuaranteeCase,
    emitted: Vec<LogEntry>,
    transfers: Vec<Transfer>,
    actor: Address,
    now: u64,
}

impl Run {
    fn emit(&mut self, event: CaseEvent) {
        let entry = LogEntry { time: self.now, actor: self.actor, event };
        self.case.evolve(entry.clone());
        self.emitted.push(entry);
    }

    fn finish(self) -> Outcome {
        Outcome { case: self.case, emitted: self.emitted, transfers: self.transfers }
    }
}

fn wrong_state(op: &str, state: CaseState) -> ContractError {
    ContractError::WrongState { op: op.to_string(), state }
}

fn require_state(call: &ContractCall, case: &GuaranteeCase, allowed: &[CaseState]) -> Result<(), ContractError> {
    if allowed.contains(&case.state) {
        Ok(())
    } else {
        Err(wrong_state(call.op_name(), case.state))
    }
}

fn require_actor(ok: bool) -> Result<(), ContractError> {
    if ok {
        Ok(())
    } else {
        Err(ContractError::WrongActor)
    }
}

fn check_party(state: &LedgerState, who: &Address, role: Role) -> Result<(), ContractError> {
    match state.registry.role_of(who) {
        Some(r) if r == role => Ok(()),
        _ => Err(ContractError::InvalidParty(format!("{who} is not an active {role}"))),
    }
}

fn check_schedule(principal: u64, schedule: &[Installment]) -> Result<(), ContractError> {
    if principal == 0 {
        return Err(ContractError::InvalidArgument("principal must be positive".into()));
    }
    if schedule.windows(2).any(|w| w[0].due > w[1].due) {
        return Err(ContractError::InvalidArgument("schedule must be ordered by due time".into()));
    }
    Ok(())
}

fn facts(state: &LedgerState, case: &GuaranteeCase) -> CaseFacts {
    CaseFacts {
        principal: case.principal,
        installments: case.schedule.len() as u64,
        borrower_role: state.registry.role_of(&case.borrower).map(|r| r.as_str().to_string()),
        pathway: case.pathway.as_str().to_string(),
    }
}

/// Canonical certificate terms for a case: parties, risk line, principal and
/// a hash of the repayment schedule.
pub fn certificate_terms(case: &GuaranteeCase) -> serde_json::Value {
    let schedule_hash = hash(&to_canonical(&case.schedule).expect("schedule is canonical-serializable"));
    json!({
        "case_id": case.case_id,
        "pathway": case.pathway,
        "borrower": case.borrower,
        "bank": case.bank,
        "cgi": case.cgi,
        "principal": case.principal,
        "schedule_hash": schedule_hash,
        "risk_line": case.risk_line.as_ref().map(|r| r.terms),
        "fee_amount": case.fee.as_ref().map(|f| f.fee_amount),
    })
}

pub fn certificate_terms_hash(case: &GuaranteeCase) -> Digest {
    hash(&to_canonical(&certificate_terms(case)).expect("terms are canonical-serializable"))
}

/// Validate and execute one call. Nothing in `state` is modified.
pub fn execute(
    state: &LedgerState,
    sender: &Address,
    call: &ContractCall,
    now: u64,
) -> Result<Outcome, ContractError> {
    let case_id = call.case_id();
    if case_id.is_empty() {
        return Err(ContractError::InvalidArgument("case_id must be non-empty".into()));
    }
    // The ledger gate only checks IssueTx. The call-specific right is checked
    // here so a party acting out of role gets a contract error.
    let p = call.permission();
    if p != Permission::IssueTx
        && state.registry.check_permission(&state.config.permission_matrix, sender, p).is_err()
    {
        return Err(if p == Permission::Arbitrate { ContractError::NotArbiter } else { ContractError::WrongActor });
    }
    let existing = state.cases.get(case_id);
    let creates = matches!(
        call,
        ContractCall::SubmitApplication { .. }
            | ContractCall::BankEvaluateLoan { evaluation: BankEvaluation::ExPost { .. }, .. }
    );
    if creates {
        if let Some(case) = existing {
            return Err(wrong_state(call.op_name(), case.state));
        }
        return open_case(state, sender, call, now);
    }
    let case = existing.ok_or(ContractError::UnknownCase)?;
    let mut run = Run { case: case.clone(), emitted: vec![], transfers: vec![], actor: *sender, now };
    advance(state, &mut run, call)?;
    Ok(run.finish())
}

fn open_case(state: &LedgerState, sender: &Address, call: &ContractCall, now: u64) -> Result<Outcome, ContractError> {
    let ruleset_hash = state.config.ruleset.as_ref().map(Ruleset::digest);
    let (opened, kyc) = match call {
        ContractCall::SubmitApplication {
            case_id,
            bank,
            cgi,
            application_cid,
            principal,
            schedule,
            dossier_cid,
            provided_fields,
        } => {
            require_actor(state.registry.role_of(sender) == Some(Role::Borrower))?;
            check_party(state, bank, Role::Bank)?;
            check_party(state, cgi, Role::Cgi)?;
            check_schedule(*principal, schedule)?;
            let opened = CaseEvent::Opened {
                case_id: case_id.clone(),
                pathway: Pathway::ExAnte,
                borrower: *sender,
                bank: *bank,
                cgi: *cgi,
                application_cid: *application_cid,
                principal: *principal,
                schedule: schedule.clone(),
                ruleset_hash,
            };
            let kyc = CaseEvent::KycSubmitted {
                dossier_cid: *dossier_cid,
                required_fields: state.config.kyc_required_fields.clone(),
                provided_fields: dedup(provided_fields),
            };
            (opened, Some(kyc))
        }
        ContractCall::BankEvaluateLoan {
            case_id,
            evaluation:
                BankEvaluation::ExPost { borrower, cgi, application_cid, principal, schedule, collateral_sufficient },
        } => {
            require_actor(state.registry.role_of(sender) == Some(Role::Bank))?;
            check_party(state, borrower, Role::Borrower)?;
            check_party(state, cgi, Role::Cgi)?;
            check_schedule(*principal, schedule)?;
            let opened = CaseEvent::Opened {
                case_id: case_id.clone(),
                pathway: Pathway::ExPost,
                borrower: *borrower,
                bank: *sender,
                cgi: *cgi,
                application_cid: *application_cid,
                principal: *principal,
                schedule: schedule.clone(),
                ruleset_hash,
            };
            (opened, Some(CaseEvent::CollateralAssessed { sufficient: *collateral_sufficient }))
        }
        _ => unreachable!("only creation calls reach open_case"),
    };
    let first = LogEntry { time: now, actor: *sender, event: opened };
    let case = GuaranteeCase::open(&first).expect("Opened event opens a case");
    let mut run = Run { case, emitted: vec![first], transfers: vec![], actor: *sender, now };
    if let Some(ev) = kyc {
        run.emit(ev);
    }
    if run.case.state == CaseState::KycSubmitted {
        auto_verify_kyc(&mut run);
    }
    Ok(run.finish())
}

fn dedup(fields: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(fields.len());
    for f in fields {
        if !out.contains(f) {
            out.push(f.clone());
        }
    }
    out
}

/// CGI-side KYC check: required ⊆ provided.
fn auto_verify_kyc(run: &mut Run) {
    let missing = run.case.kyc.as_ref().map(|k| k.missing()).unwrap_or_default();
    run.emit(CaseEvent::KycChecked { missing });
}

fn advance(state: &LedgerState, run: &mut Run, call: &ContractCall) -> Result<(), ContractError> {
    use CaseState as S;
    let sender = run.actor;
    let case = &run.case;
    let is_borrower = sender == case.borrower;
    let is_bank = sender == case.bank;
    let is_cgi = sender == case.cgi;
    match call {
        ContractCall::SubmitApplication { .. } => unreachable!("handled by open_case"),
        ContractCall::SupplementKyc { dossier_cid, provided_fields, .. } => {
            require_actor(is_borrower)?;
            require_state(call, case, &[S::KycNeedsMoreData])?;
            let mut all = case.kyc.as_ref().map(|k| k.provided_fields.clone()).unwrap_or_default();
            all.extend(provided_fields.iter().cloned());
            let all = dedup(&all);
            run.emit(CaseEvent::KycSupplemented { dossier_cid: *dossier_cid, provided_fields: all });
            auto_verify_kyc(run);
        }
        ContractCall::CgiDecideGuarantee { approve, .. } => {
            require_actor(is_cgi)?;
            match case.pathway {
                Pathway::ExAnte => {
                    require_state(call, case, &[S::KycVerified])?;
                    let ruleset = state.config.ruleset.as_ref().ok_or(ContractError::RulesetMissing)?;
                    let eligibility = ruleset.evaluate(&facts(state, case));
                    let pass = eligibility.overall;
                    run.emit(CaseEvent::ReviewStarted { eligibility });
                    run.emit(CaseEvent::GuaranteeDecided { approved: pass && *approve, criteria_failed: !pass });
                }
                Pathway::ExPost => {
                    require_state(call, case, &[S::CriteriaAutoChecked])?;
                    run.emit(CaseEvent::GuaranteeDecided { approved: *approve, criteria_failed: false });
                    if *approve {
                        // The bank initiated the request, so its acceptance is implied.
                        run.emit(CaseEvent::ImplicitBankAcceptance);
                    }
                }
            }
        }
        ContractCall::GrantToBank { original_cid, granted_cid, .. } => {
            require_actor(is_cgi)?;
            if case.pathway != Pathway::ExAnte {
                return Err(wrong_state(call.op_name(), case.state));
            }
            require_state(call, case, &[S::GuaranteeApproved])?;
            run.emit(CaseEvent::FinancialsGranted { original_cid: *original_cid, granted_cid: *granted_cid });
            run.emit(CaseEvent::LoanRequested);
        }
        ContractCall::AutoSubmitLoanRequest { .. } => {
            require_actor(case.is_party(&sender))?;
            if case.pathway != Pathway::ExAnte {
                return Err(wrong_state(call.op_name(), case.state));
            }
            require_state(call, case, &[S::GuaranteeApproved])?;
            if case.shared_with_bank.is_empty() {
                return Err(ContractError::GrantMissing);
            }
            run.emit(CaseEvent::LoanRequested);
        }
        ContractCall::BankEvaluateLoan { evaluation, .. } => {
            require_actor(is_bank)?;
            match evaluation {
                BankEvaluation::ExAnte { accept } => {
                    require_state(call, case, &[S::LoanRequested])?;
                    run.emit(CaseEvent::BankDecided { accepted: *accept });
                }
                BankEvaluation::ExPost { .. } => unreachable!("handled by open_case"),
            }
        }
        ContractCall::BankRequestGuarantee { .. } => {
            require_actor(is_bank)?;
            require_state(call, case, &[S::CollateralAssessed])?;
            let ruleset = state.config.ruleset.as_ref().ok_or(ContractError::RulesetMissing)?;
            let eligibility = ruleset.evaluate(&facts(state, case));
            run.emit(CaseEvent::GuaranteeRequested);
            run.emit(CaseEvent::CriteriaChecked { eligibility });
        }
        ContractCall::RiskLineStep { action, .. } => {
            let party = case.party(&sender).ok_or(ContractError::WrongActor)?;
            require_state(call, case, &[S::BankAccepted, S::RiskLineNegotiation])?;
            match action {
                RiskLineStep::Propose { terms } => {
                    terms.validate().map_err(ContractError::InvalidArgument)?;
                    run.emit(CaseEvent::RiskLineProposed { by: party, terms: *terms });
                }
                RiskLineStep::Accept => {
                    let offer = case.risk_line.as_ref().filter(|_| case.state == S::RiskLineNegotiation);
                    let offer = offer.ok_or(ContractError::AcceptWithoutOffer)?;
                    if offer.proposed_by == party {
                        return Err(ContractError::WrongActor);
                    }
                    let terms = offer.terms;
                    run.emit(CaseEvent::RiskLineAgreed { terms });
                    let principal = run.case.principal;
                    let fee = fee_amount(terms.coverage_bps, principal, state.config.fee_rate_bps);
                    let payer = match run.case.pathway {
                        Pathway::ExAnte => run.case.borrower,
                        Pathway::ExPost => run.case.bank,
                    };
                    run.emit(CaseEvent::FeeAssessed { fee_amount: fee, payer });
                }
            }
        }
        ContractCall::VerifyFeePayment { .. } => {
            require_actor(is_cgi)?;
            require_state(call, case, &[S::FeePending])?;
            let fee = case.fee.as_ref().expect("FeePending implies an assessed fee");
            let payments = state.fee_payments.get(&case.case_id).map(Vec::as_slice).unwrap_or(&[]);
            let from_payer: Vec<_> = payments.iter().filter(|p| p.payer == fee.payer).collect();
            match from_payer.iter().find(|p| p.amount == fee.fee_amount) {
                Some(p) => run.emit(CaseEvent::FeeVerified { payment_tx: p.tx_hash }),
                None => {
                    return Err(match from_payer.last() {
                        Some(p) => ContractError::WrongAmount { expected: fee.fee_amount, found: p.amount },
                        None => ContractError::FeeNotFound,
                    })
                }
            }
        }
        ContractCall::IssueCertificate { certificate_cid, .. } => {
            require_actor(is_cgi)?;
            require_state(call, case, &[S::FeeVerified])?;
            let terms_hash = certificate_terms_hash(case);
            run.emit(CaseEvent::CertificateIssued { certificate_cid: *certificate_cid, terms_hash });
        }
        ContractCall::DisburseLoan { .. } => {
            require_actor(is_bank)?;
            require_state(call, case, &[S::CertificateIssued])?;
            if state.balance(&case.bank) < case.principal {
                return Err(ContractError::InsufficientBankBalance);
            }
            let principal = case.principal;
            run.transfers.push(Transfer { from: case.bank, to: case.borrower, amount: principal });
            run.emit(CaseEvent::LoanDisbursed { principal });
        }
        ContractCall::RecordPaymentEvent { payment, .. } => {
            require_actor(is_bank)?;
            require_state(call, case, &[S::LoanActive])?;
            let loan = case.loan.as_ref().expect("LoanActive implies a loan record");
            if let PaymentEvent::Regular { amount } = payment {
                if *amount > loan.outstanding {
                    return Err(ContractError::OverPayment);
                }
                if *amount == 0 {
                    return Err(ContractError::InvalidArgument("payment amount must be positive".into()));
                }
            }
            run.emit(CaseEvent::PaymentRecorded { payment: payment.clone() });
            let loan = run.case.loan.as_ref().expect("loan record");
            if loan.outstanding == 0 {
                run.emit(CaseEvent::Repaid);
            } else if loan.consecutive_missed >= state.config.default_trigger_k {
                let n = loan.consecutive_missed;
                run.emit(CaseEvent::DefaultTriggered { consecutive_missed: n });
            }
        }
        ContractCall::TriggerDefault { .. } => {
            require_actor(is_bank || is_cgi)?;
            require_state(call, case, &[S::LoanActive])?;
            let missed = case.loan.as_ref().map_or(0, |l| l.consecutive_missed);
            if missed < state.config.default_trigger_k {
                return Err(ContractError::ThresholdNotReached);
            }
            run.emit(CaseEvent::DefaultTriggered { consecutive_missed: missed });
        }
        ContractCall::FileClaim { claimed_amount, recovery_action_cids, .. } => {
            require_actor(is_bank)?;
            require_state(call, case, &[S::DefaultTriggered])?;
            let outstanding = case.loan.as_ref().map_or(0, |l| l.outstanding);
            run.emit(CaseEvent::ClaimFiled {
                claimed_amount: *claimed_amount,
                outstanding,
                recovery_action_cids: recovery_action_cids.clone(),
            });
            let outcome = check_claim_eligibility(&run.case);
            run.emit(CaseEvent::ClaimChecked { outcome });
        }
        ContractCall::DisputeStep { action, .. } => match action {
            DisputeStep::Open { evidence_cids } => {
                let ok = match case.state {
                    S::ClaimEligible => is_cgi,
                    S::ClaimIneligible => is_bank,
                    other => return Err(wrong_state(call.op_name(), other)),
                };
                require_actor(ok)?;
                run.emit(CaseEvent::DisputeOpened { by: sender, evidence_cids: evidence_cids.clone() });
            }
            DisputeStep::Rule { seat, ruling } => {
                require_state(call, case, &[S::Disputed])?;
                match seat {
                    ArbiterSeat::Cgi if !is_cgi => return Err(ContractError::NotArbiter),
                    ArbiterSeat::Auditor if is_cgi => return Err(ContractError::SelfArbitration),
                    ArbiterSeat::Auditor if state.registry.role_of(&sender) != Some(Role::Auditor) => {
                        return Err(ContractError::NotArbiter)
                    }
                    _ => {}
                }
                let dispute = case.claim.as_ref().and_then(|c| c.dispute.as_ref()).expect("Disputed has a dispute");
                let taken = match seat {
                    ArbiterSeat::Cgi => dispute.cgi_ruling.is_some(),
                    ArbiterSeat::Auditor => dispute.auditor_ruling.is_some(),
                };
                if taken {
                    return Err(ContractError::AlreadyRuled);
                }
                run.emit(CaseEvent::DisputeRuled { seat: *seat, arbiter: sender, ruling: *ruling });
                let claim = run.case.claim.as_ref().expect("claim");
                let d = claim.dispute.as_ref().expect("dispute");
                if let (Some(a), Some(b)) = (&d.cgi_ruling, &d.auditor_ruling) {
                    if a.ruling == b.ruling {
                        let ruling = a.ruling;
                        let outcome = match (ruling, &claim.eligibility) {
                            (Ruling::Upheld, e) => e.clone(),
                            (Ruling::Overturned, ClaimEligibility::Eligible) => {
                                ClaimEligibility::Ineligible(IneligibleReason::DisputeOverturned)
                            }
                            (Ruling::Overturned, _) => ClaimEligibility::Eligible,
                        };
                        run.emit(CaseEvent::DisputeResolved { ruling, outcome });
                    } else {
                        run.emit(CaseEvent::DisputeDiscordant);
                    }
                }
            }
        },
        ContractCall::EnforceAndPayout { .. } => {
            require_actor(is_bank || is_cgi)?;
            require_state(call, case, &[S::ClaimEligible, S::ClaimIneligible, S::Resolved])?;
            let claim = case.claim.as_ref().expect("claim stage implies a claim record");
            if claim.eligibility.is_eligible() {
                let terms = case.risk_line.as_ref().expect("claim eligibility implies a risk line").terms;
                let payout = compute_payout(&terms, claim.outstanding_at_filing, claim.claimed_amount);
                let fund = guarantee_fund();
                if state.balance(&fund) < payout {
                    return Err(ContractError::InsufficientGuaranteeFunds);
                }
                let bank = case.bank;
                for action in [EnforcementAction::NotifyBorrower, EnforcementAction::RecordEnforcement] {
                    run.emit(CaseEvent::Enforcement { action });
                }
                run.transfers.push(Transfer { from: fund, to: bank, amount: payout });
                run.emit(CaseEvent::Enforcement { action: EnforcementAction::TransferPayout });
                run.emit(CaseEvent::PaidOut { amount: payout });
            } else {
                run.emit(CaseEvent::Closed { reason: ClosureReason::ClaimIneligible });
            }
        }
    }
    Ok(())
}

/// Claim eligibility against the agreed risk line. The first failing
/// condition is reported.
pub fn check_claim_eligibility(case: &GuaranteeCase) -> ClaimEligibility {
    let Some(claim) = case.claim.as_ref() else {
        return ClaimEligibility::Pending;
    };
    let fee_paid = case.fee.as_ref().is_some_and(|f| f.paid);
    let (Some(rl), true, Some(_)) = (case.risk_line.as_ref(), fee_paid, case.certificate_cid) else {
        return ClaimEligibility::Ineligible(IneligibleReason::NoGuaranteeInForce);
    };
    let t = rl.terms;
    if claim.claimed_amount > t.cap {
        return ClaimEligibility::Ineligible(IneligibleReason::ExceedsCap);
    }
    if claim.claimed_amount > t.covered_amount(claim.outstanding_at_filing) {
        return ClaimEligibility::Ineligible(IneligibleReason::ExceedsCoverage);
    }
    if t.seniority == Seniority::PariPassu && claim.recovery_action_cids.is_empty() {
        return ClaimEligibility::Ineligible(IneligibleReason::NoRecoveryAction);
    }
    ClaimEligibility::Eligible
}
