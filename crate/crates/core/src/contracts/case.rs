//! Guarantee case records and the event fold that defines them.
//!
//! A case is never mutated directly: every change is a [`CaseEvent`] appended
//! to the case's log and applied with [`GuaranteeCase::evolve`]. Replaying the
//! log from nothing reproduces the stored case exactly.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::eligibility::EligibilityResult;
use super::terms::{Party, RiskLine, RiskLineTerms};
use crate::crypto::{Address, ContentId, Digest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pathway {
    ExAnte,
    ExPost,
}

impl Pathway {
    pub fn as_str(self) -> &'static str {
        match self {
            Pathway::ExAnte => "ExAnte",
            Pathway::ExPost => "ExPost",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CaseState {
    // ex-ante head
    Created,
    KycSubmitted,
    KycNeedsMoreData,
    KycVerified,
    GuaranteeUnderReview,
    LoanRequested,
    BankRejected,
    // ex-post head
    LoanApplicationAtBank,
    CollateralAssessed,
    GuaranteeRequested,
    CriteriaAutoChecked,
    // decision
    GuaranteeApproved,
    GuaranteeRejected,
    BankAccepted,
    // shared tail
    RiskLineNegotiation,
    RiskLineAgreed,
    FeePending,
    FeeVerified,
    CertificateIssued,
    LoanActive,
    Repaid,
    DefaultTriggered,
    ClaimFiled,
    ClaimEligible,
    ClaimIneligible,
    Disputed,
    Resolved,
    PaidOut,
    ClosedWithoutPayout,
}

impl CaseState {
    pub const ALL: [CaseState; 29] = [
        CaseState::Created,
        CaseState::KycSubmitted,
        CaseState::KycNeedsMoreData,
        CaseState::KycVerified,
        CaseState::GuaranteeUnderReview,
        CaseState::LoanRequested,
        CaseState::BankRejected,
        CaseState::LoanApplicationAtBank,
        CaseState::CollateralAssessed,
        CaseState::GuaranteeRequested,
        CaseState::CriteriaAutoChecked,
        CaseState::GuaranteeApproved,
        CaseState::GuaranteeRejected,
        CaseState::BankAccepted,
        CaseState::RiskLineNegotiation,
        CaseState::RiskLineAgreed,
        CaseState::FeePending,
        CaseState::FeeVerified,
        CaseState::CertificateIssued,
        CaseState::LoanActive,
        CaseState::Repaid,
        CaseState::DefaultTriggered,
        CaseState::ClaimFiled,
        CaseState::ClaimEligible,
        CaseState::ClaimIneligible,
        CaseState::Disputed,
        CaseState::Resolved,
        CaseState::PaidOut,
        CaseState::ClosedWithoutPayout,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            CaseState::GuaranteeRejected
                | CaseState::BankRejected
                | CaseState::Repaid
                | CaseState::PaidOut
                | CaseState::ClosedWithoutPayout
        )
    }

    /// True once the guarantee has been approved and not subsequently refused.
    pub fn is_at_or_after_approval(self) -> bool {
        use CaseState::*;
        matches!(
            self,
            GuaranteeApproved
                | LoanRequested
                | BankAccepted
                | RiskLineNegotiation
                | RiskLineAgreed
                | FeePending
                | FeeVerified
                | CertificateIssued
                | LoanActive
                | Repaid
                | DefaultTriggered
                | ClaimFiled
                | ClaimEligible
                | ClaimIneligible
                | Disputed
                | Resolved
                | PaidOut
        )
    }
}

impl fmt::Display for CaseState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Installment {
    pub due: u64,
    pub amount: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "missing")]
pub enum KycStatus {
    Pending,
    MissingFields(Vec<String>),
    Verified,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KycRecord {
    pub dossier_cid: ContentId,
    pub required_fields: Vec<String>,
    pub provided_fields: Vec<String>,
    pub status: KycStatus,
}

impl KycRecord {
    /// Required fields not yet provided, in required order.
    pub fn missing(&self) -> Vec<String> {
        self.required_fields
            .iter()
            .filter(|f| !self.provided_fields.contains(f))
            .cloned()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeeRecord {
    pub fee_amount: u64,
    pub payer: Address,
    pub paid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payment_tx: Option<Digest>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PaymentStatus {
    Regular,
    Missed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaymentEntry {
    pub time: u64,
    pub amount: u64,
    pub status: PaymentStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreditNote {
    pub time: u64,
    pub note_cid: ContentId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoanRecord {
    pub principal: u64,
    pub schedule: Vec<Installment>,
    pub outstanding: u64,
    pub payments: Vec<PaymentEntry>,
    pub consecutive_missed: u32,
    pub creditworthiness_notes: Vec<CreditNote>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum IneligibleReason {
    NoGuaranteeInForce,
    ExceedsCap,
    ExceedsCoverage,
    NoRecoveryAction,
    /// An eligible determination reversed by concordant arbiters.
    DisputeOverturned,
}

impl fmt::Display for IneligibleReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", content = "reason")]
pub enum ClaimEligibility {
    Pending,
    Eligible,
    Ineligible(IneligibleReason),
}

impl ClaimEligibility {
    pub fn is_eligible(&self) -> bool {
        matches!(self, ClaimEligibility::Eligible)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ruling {
    Upheld,
    Overturned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArbiterSeat {
    #[serde(rename = "CGI")]
    Cgi,
    Auditor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeatRuling {
    pub arbiter: Address,
    pub ruling: Ruling,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisputeRecord {
    pub opened_by: Address,
    pub evidence_cids: Vec<ContentId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cgi_ruling: Option<SeatRuling>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auditor_ruling: Option<SeatRuling>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ruling: Option<Ruling>,
    pub rounds: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub filed_at: u64,
    pub claimed_amount: u64,
    pub outstanding_at_filing: u64,
    pub eligibility: ClaimEligibility,
    pub recovery_action_cids: Vec<ContentId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dispute: Option<DisputeRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payout: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnforcementAction {
    NotifyBorrower,
    RecordEnforcement,
    TransferPayout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PaymentEvent {
    Regular { amount: u64 },
    Missed,
    CreditNote { note_cid: ContentId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClosureReason {
    NoGuaranteeNeeded,
    ClaimIneligible,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum CaseEvent {
    Opened {
        case_id: String,
        pathway: Pathway,
        borrower: Address,
        bank: Address,
        cgi: Address,
        application_cid: ContentId,
        principal: u64,
        schedule: Vec<Installment>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ruleset_hash: Option<Digest>,
    },
    KycSubmitted { dossier_cid: ContentId, required_fields: Vec<String>, provided_fields: Vec<String> },
    KycSupplemented { dossier_cid: ContentId, provided_fields: Vec<String> },
    KycChecked { missing: Vec<String> },
    ReviewStarted { eligibility: EligibilityResult },
    GuaranteeDecided { approved: bool, criteria_failed: bool },
    FinancialsGranted { original_cid: ContentId, granted_cid: ContentId },
    LoanRequested,
    BankDecided { accepted: bool },
    CollateralAssessed { sufficient: bool },
    GuaranteeRequested,
    CriteriaChecked { eligibility: EligibilityResult },
    ImplicitBankAcceptance,
    RiskLineProposed { by: Party, terms: RiskLineTerms },
    RiskLineAgreed { terms: RiskLineTerms },
    FeeAssessed { fee_amount: u64, payer: Address },
    FeeVerified { payment_tx: Digest },
    CertificateIssued { certificate_cid: ContentId, terms_hash: Digest },
    LoanDisbursed { principal: u64 },
    PaymentRecorded { payment: PaymentEvent },
    Repaid,
    DefaultTriggered { consecutive_missed: u32 },
    ClaimFiled { claimed_amount: u64, outstanding: u64, recovery_action_cids: Vec<ContentId> },
    ClaimChecked { outcome: ClaimEligibility },
    DisputeOpened { by: Address, evidence_cids: Vec<ContentId> },
    DisputeRuled { seat: ArbiterSeat, arbiter: Address, ruling: Ruling },
    DisputeDiscordant,
    DisputeResolved { ruling: Ruling, outcome: ClaimEligibility },
    Enforcement { action: EnforcementAction },
    PaidOut { amount: u64 },
    Closed { reason: ClosureReason },
}

impl CaseEvent {
    /// snake_case event name, as used for notifications and traces.
    pub fn name(&self) -> &'static str {
        match self {
            CaseEvent::Opened { .. } => "opened",
            CaseEvent::KycSubmitted { .. } => "kyc_submitted",
            CaseEvent::KycSupplemented { .. } => "kyc_supplemented",
            CaseEvent::KycChecked { .. } => "kyc_checked",
            CaseEvent::ReviewStarted { .. } => "review_started",
            CaseEvent::GuaranteeDecided { .. } => "guarantee_decided",
            CaseEvent::FinancialsGranted { .. } => "financials_granted",
            CaseEvent::LoanRequested => "loan_requested",
            CaseEvent::BankDecided { .. } => "bank_decided",
            CaseEvent::CollateralAssessed { .. } => "collateral_assessed",
            CaseEvent::GuaranteeRequested => "guarantee_requested",
            CaseEvent::CriteriaChecked { .. } => "criteria_checked",
            CaseEvent::ImplicitBankAcceptance => "implicit_bank_acceptance",
            CaseEvent::RiskLineProposed { .. } => "risk_line_proposed",
            CaseEvent::RiskLineAgreed { .. } => "risk_line_agreed",
            CaseEvent::FeeAssessed { .. } => "fee_assessed",
            CaseEvent::FeeVerified { .. } => "fee_verified",
            CaseEvent::CertificateIssued { .. } => "certificate_issued",
            CaseEvent::LoanDisbursed { .. } => "loan_disbursed",
            CaseEvent::PaymentRecorded { .. } => "payment_recorded",
            CaseEvent::Repaid => "repaid",
            CaseEvent::DefaultTriggered { .. } => "default_triggered",
            CaseEvent::ClaimFiled { .. } => "claim_filed",
            CaseEvent::ClaimChecked { .. } => "claim_checked",
            CaseEvent::DisputeOpened { .. } => "dispute_opened",
            CaseEvent::DisputeRuled { .. } => "dispute_ruled",
            CaseEvent::DisputeDiscordant => "dispute_discordant",
            CaseEvent::DisputeResolved { .. } => "dispute_resolved",
            CaseEvent::Enforcement { .. } => "enforcement",
            CaseEvent::PaidOut { .. } => "paid_out",
            CaseEvent::Closed { .. } => "closed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub time: u64,
    pub actor: Address,
    #[serde(flatten)]
    pub event: CaseEvent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuaranteeCase {
    pub case_id: String,
    pub pathway: Pathway,
    pub state: CaseState,
    pub borrower: Address,
    pub bank: Address,
    pub cgi: Address,
    pub application_cid: ContentId,
    pub principal: u64,
    pub schedule: Vec<Installment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ruleset_hash: Option<Digest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kyc: Option<KycRecord>,
    /// Number of CGI-side KYC verification runs on this case.
    pub kyc_checks: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eligibility: Option<EligibilityResult>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shared_with_bank: Vec<ContentId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub risk_line: Option<RiskLine>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fee: Option<FeeRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate_cid: Option<ContentId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate_hash: Option<Digest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loan: Option<LoanRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim: Option<ClaimRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closure: Option<ClosureReason>,
    pub event_log: Vec<LogEntry>,
}

impl GuaranteeCase {
    /// Rebuild a case from its log. `None` when the log is empty or does not
    /// start with an `Opened` event.
    pub fn replay(log: &[LogEntry]) -> Option<GuaranteeCase> {
        let (first, rest) = log.split_first()?;
        let mut case = GuaranteeCase::open(first)?;
        for entry in rest {
            case.evolve(entry.clone());
        }
        Some(case)
    }

    pub fn open(entry: &LogEntry) -> Option<GuaranteeCase> {
        let CaseEvent::Opened {
            case_id,
            pathway,
            borrower,
            bank,
            cgi,
            application_cid,
            principal,
            schedule,
            ruleset_hash,
        } = &entry.event
        else {
            return None;
        };
        let state = match pathway {
            Pathway::ExAnte => CaseState::Created,
            Pathway::ExPost => CaseState::LoanApplicationAtBank,
        };
        Some(GuaranteeCase {
            case_id: case_id.clone(),
            pathway: *pathway,
            state,
            borrower: *borrower,
            bank: *bank,
            cgi: *cgi,
            application_cid: *application_cid,
            principal: *principal,
            schedule: schedule.clone(),
            ruleset_hash: *ruleset_hash,
            kyc: None,
            kyc_checks: 0,
            eligibility: None,
            shared_with_bank: Vec::new(),
            risk_line: None,
            fee: None,
            certificate_cid: None,
            certificate_hash: None,
            loan: None,
            claim: None,
            closure: None,
            event_log: vec![entry.clone()],
        })
    }

    pub fn party(&self, who: &Address) -> Option<Party> {
        if *who == self.bank {
            Some(Party::Bank)
        } else if *who == self.cgi {
            Some(Party::Cgi)
        } else {
            None
        }
    }

    pub fn is_party(&self, who: &Address) -> bool {
        *who == self.borrower || *who == self.bank || *who == self.cgi
    }

    /// Apply one event. Total: events are only produced by the engine after
    /// validation, so this never fails.
    pub fn evolve(&mut self, entry: LogEntry) {
        use CaseState as S;
        let time = entry.time;
        match &entry.event {
            CaseEvent::Opened { .. } => {}
            CaseEvent::KycSubmitted { dossier_cid, required_fields, provided_fields } => {
                self.kyc = Some(KycRecord {
                    dossier_cid: *dossier_cid,
                    required_fields: required_fields.clone(),
                    provided_fields: provided_fields.clone(),
                    status: KycStatus::Pending,
                });
                self.state = S::KycSubmitted;
            }
            CaseEvent::KycSupplemented { dossier_cid, provided_fields } => {
                if let Some(kyc) = self.kyc.as_mut() {
                    kyc.dossier_cid = *dossier_cid;
                    kyc.provided_fields = provided_fields.clone();
                    kyc.status = KycStatus::Pending;
                }
                self.state = S::KycSubmitted;
            }
            CaseEvent::KycChecked { missing } => {
                self.kyc_checks += 1;
                if let Some(kyc) = self.kyc.as_mut() {
                    kyc.status = if missing.is_empty() {
                        KycStatus::Verified
                    } else {
                        KycStatus::MissingFields(missing.clone())
                    };
                }
                self.state = if missing.is_empty() { S::KycVerified } else { S::KycNeedsMoreData };
            }
            CaseEvent::ReviewStarted { eligibility } => {
                self.eligibility = Some(eligibility.clone());
                self.state = S::GuaranteeUnderReview;
            }
            CaseEvent::GuaranteeDecided { approved, .. } => {
                self.state = if *approved { S::GuaranteeApproved } else { S::GuaranteeRejected };
            }
            CaseEvent::FinancialsGranted { granted_cid, .. } => {
                self.shared_with_bank.push(*granted_cid);
            }
            CaseEvent::LoanRequested => self.state = S::LoanRequested,
            CaseEvent::BankDecided { accepted } => {
                self.state = if *accepted { S::BankAccepted } else { S::BankRejected };
            }
            CaseEvent::CollateralAssessed { sufficient } => {
                if *sufficient {
                    self.closure = Some(ClosureReason::NoGuaranteeNeeded);
                    self.state = S::ClosedWithoutPayout;
                } else {
                    self.state = S::CollateralAssessed;
                }
            }
            CaseEvent::GuaranteeRequested => self.state = S::GuaranteeRequested,
            CaseEvent::CriteriaChecked { eligibility } => {
                self.eligibility = Some(eligibility.clone());
                self.state = if eligibility.overall { S::CriteriaAutoChecked } else { S::GuaranteeRejected };
            }
            CaseEvent::ImplicitBankAcceptance => self.state = S::BankAccepted,
            CaseEvent::RiskLineProposed { by, terms } => {
                self.risk_line = Some(RiskLine {
                    terms: *terms,
                    proposed_by: *by,
                    agreed_by_bank: *by == Party::Bank,
                    agreed_by_cgi: *by == Party::Cgi,
                });
                self.state = S::RiskLineNegotiation;
            }
            CaseEvent::RiskLineAgreed { .. } => {
                if let Some(rl) = self.risk_line.as_mut() {
                    rl.agreed_by_bank = true;
                    rl.agreed_by_cgi = true;
                }
                self.state = S::RiskLineAgreed;
            }
            CaseEvent::FeeAssessed { fee_amount, payer } => {
                self.fee = Some(FeeRecord { fee_amount: *fee_amount, payer: *payer, paid: false, payment_tx: None });
                self.state = S::FeePending;
            }
            CaseEvent::FeeVerified { payment_tx } => {
                if let Some(fee) = self.fee.as_mut() {
                    fee.paid = true;
                    fee.payment_tx = Some(*payment_tx);
                }
                self.state = S::FeeVerified;
            }
            CaseEvent::CertificateIssued { certificate_cid, terms_hash } => {
                self.certificate_cid = Some(*certificate_cid);
                self.certificate_hash = Some(*terms_hash);
                self.state = S::CertificateIssued;
            }
            CaseEvent::LoanDisbursed { principal } => {
                self.loan = Some(LoanRecord {
                    principal: *principal,
                    schedule: self.schedule.clone(),
                    outstanding: *principal,
                    payments: Vec::new(),
                    consecutive_missed: 0,
                    creditworthiness_notes: Vec::new(),
                });
                self.state = S::LoanActive;
            }
            CaseEvent::PaymentRecorded { payment } => {
                if let Some(loan) = self.loan.as_mut() {
                    match payment {
                        PaymentEvent::Regular { amount } => {
                            loan.outstanding = loan.outstanding.saturating_sub(*amount);
                            loan.consecutive_missed = 0;
                            loan.payments.push(PaymentEntry { time, amount: *amount, status: PaymentStatus::Regular });
                        }
                        PaymentEvent::Missed => {
                            loan.consecutive_missed += 1;
                            loan.payments.push(PaymentEntry { time, amount: 0, status: PaymentStatus::Missed });
                        }
                        PaymentEvent::CreditNote { note_cid } => {
                            loan.creditworthiness_notes.push(CreditNote { time, note_cid: *note_cid });
                        }
                    }
                }
            }
            CaseEvent::Repaid => self.state = S::Repaid,
            CaseEvent::DefaultTriggered { .. } => self.state = S::DefaultTriggered,
            CaseEvent::ClaimFiled { claimed_amount, outstanding, recovery_action_cids } => {
                self.claim = Some(ClaimRecord {
                    filed_at: time,
                    claimed_amount: *claimed_amount,
                    outstanding_at_filing: *outstanding,
                    eligibility: ClaimEligibility::Pending,
                    recovery_action_cids: recovery_action_cids.clone(),
                    dispute: None,
                    payout: None,
                });
                self.state = S::ClaimFiled;
            }
            CaseEvent::ClaimChecked { outcome } => {
                if let Some(claim) = self.claim.as_mut() {
                    claim.eligibility = outcome.clone();
                }
                self.state = if outcome.is_eligible() { S::ClaimEligible } else { S::ClaimIneligible };
            }
            CaseEvent::DisputeOpened { by, evidence_cids } => {
                if let Some(claim) = self.claim.as_mut() {
                    claim.dispute = Some(DisputeRecord {
                        opened_by: *by,
                        evidence_cids: evidence_cids.clone(),
                        cgi_ruling: None,
                        auditor_ruling: None,
                        ruling: None,
                        rounds: 0,
                    });
                }
                self.state = S::Disputed;
            }
            CaseEvent::DisputeRuled { seat, arbiter, ruling } => {
                if let Some(d) = self.claim.as_mut().and_then(|c| c.dispute.as_mut()) {
                    let r = Some(SeatRuling { arbiter: *arbiter, ruling: *ruling });
                    match seat {
                        ArbiterSeat::Cgi => d.cgi_ruling = r,
                        ArbiterSeat::Auditor => d.auditor_ruling = r,
                    }
                }
            }
            CaseEvent::DisputeDiscordant => {
                if let Some(d) = self.claim.as_mut().and_then(|c| c.dispute.as_mut()) {
                    d.cgi_ruling = None;
                    d.auditor_ruling = None;
                    d.rounds += 1;
                }
            }
            CaseEvent::DisputeResolved { ruling, outcome } => {
                if let Some(claim) = self.claim.as_mut() {
                    claim.eligibility = outcome.clone();
                    if let Some(d) = claim.dispute.as_mut() {
                        d.ruling = Some(*ruling);
                        d.rounds += 1;
                    }
                }
                self.state = S::Resolved;
            }
            CaseEvent::Enforcement { .. } => {}
            CaseEvent::PaidOut { amount } => {
                if let Some(claim) = self.claim.as_mut() {
                    claim.payout = Some(*amount);
                }
                self.state = S::PaidOut;
            }
            CaseEvent::Closed { reason } => {
                self.closure = Some(*reason);
                self.state = S::ClosedWithoutPayout;
            }
        }
        self.event_log.push(entry);
    }
}
