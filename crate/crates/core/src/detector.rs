//! The seven inconsistency rules, applied to front-end claims and contract
//! semantics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;
use serde_json::{json, Value};

use crate::chain::{classify_uri, ChainState, UriStorage};
use crate::frontend::FrontendAttributes;
use crate::graphs::RecipientClass;
use crate::symexec::{fee_groups, ContractSemantics, FeeCandidate, FeeTerm};
use crate::word::{word_hex, Address, Word};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum FindingKind {
    UR,
    HF,
    AL,
    UTS,
    UFF,
    CDS,
    VNA,
}

impl fmt::Display for FindingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FindingKind {
    pub const ALL: [FindingKind; 7] =
        [FindingKind::UR, FindingKind::HF, FindingKind::AL, FindingKind::UTS, FindingKind::UFF, FindingKind::CDS, FindingKind::VNA];
}

#[derive(Debug, thiserror::Error)]
#[error("unknown finding kind `{0}`")]
pub struct UnknownKind(pub String);

impl std::str::FromStr for FindingKind {
    type Err = UnknownKind;

    fn from_str(s: &str) -> Result<FindingKind, UnknownKind> {
        FindingKind::ALL.into_iter().find(|k| k.to_string().eq_ignore_ascii_case(s)).ok_or_else(|| UnknownKind(s.into()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Confirmed,
    /// Chain state needed to decide the rule could not be read.
    Indeterminate,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Evidence {
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub call_sites: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub store_sites: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub slots: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fee_slot: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fee_slot_modifiable: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amount_expr: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub amount_exprs: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub recipients: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub uri: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Finding {
    #[serde(rename = "type")]
    pub kind: FindingKind,
    pub status: Status,
    pub computed_rate: Option<String>,
    pub claimed_rate: Option<String>,
    pub evidence: Evidence,
    /// The claim values the rule read.
    pub claim: BTreeMap<String, Value>,
}

impl Finding {
    fn new(kind: FindingKind, evidence: Evidence) -> Finding {
        Finding { kind, status: Status::Confirmed, computed_rate: None, claimed_rate: None, evidence, claim: BTreeMap::new() }
    }

    fn claim(mut self, key: &str, value: Value) -> Finding {
        self.claim.insert(key.to_string(), value);
        self
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ReportMetadata {
    /// Some function hit the state budget; findings may be incomplete.
    pub partial: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct InconsistencyReport {
    pub contract: Address,
    pub findings: Vec<Finding>,
    pub metadata: ReportMetadata,
}

impl InconsistencyReport {
    pub fn kinds(&self) -> BTreeSet<FindingKind> {
        self.findings.iter().map(|f| f.kind).collect()
    }

    pub fn finding(&self, kind: FindingKind) -> Option<&Finding> {
        self.findings.iter().find(|f| f.kind == kind)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn sorted<T: ToString>(items: impl IntoIterator<Item = T>) -> Vec<String> {
    let set: BTreeSet<String> = items.into_iter().map(|x| x.to_string()).collect();
    set.into_iter().collect()
}

fn big(w: Word) -> BigInt {
    BigInt::from_bytes_be(num_bigint::Sign::Plus, &w.to_big_endian())
}

/// `n/d` without reduction.
fn render_ratio(n: &BigInt, d: &BigInt) -> String {
    format!("{n}/{d}")
}

/// Claimed percent as a fraction of one, written over 100 when whole.
fn render_claim(p: &crate::frontend::Percent) -> String {
    if p.0.is_integer() {
        format!("{}/100", p.0.numer())
    } else {
        let f = p.fraction();
        render_ratio(f.numer(), f.denom())
    }
}

enum Resolved {
    Rate { numer: BigInt, denom: BigInt },
    Unavailable(String),
}

fn resolve(c: &FeeCandidate, chain: Option<&dyn ChainState>, address: &Address) -> Resolved {
    let value = |t: &FeeTerm| -> Result<BigInt, String> {
        match t {
            FeeTerm::Const(w) => Ok(big(*w)),
            FeeTerm::Slot(s) => match chain {
                None => Err("no chain backend configured".to_string()),
                Some(ch) => ch.get_storage(address, *s).map(big).map_err(|e| e.to_string()),
            },
        }
    };
    let product = |ts: &[FeeTerm]| ts.iter().try_fold(BigInt::one(), |acc, t| Ok(acc * value(t)?));
    match (product(&c.numerator), product(&c.denominator)) {
        (Ok(numer), Ok(denom)) => Resolved::Rate { numer, denom },
        (Err(e), _) | (_, Err(e)) => Resolved::Unavailable(e),
    }
}

struct GroupRate {
    value: BigRational,
    text: String,
}

/// Sum of the group's fractions, written over the shared denominator when
/// every candidate uses the same one.
fn group_rate(parts: &[(BigInt, BigInt)]) -> Option<GroupRate> {
    let parts: Vec<&(BigInt, BigInt)> = parts.iter().filter(|(_, d)| !d.is_zero()).collect();
    if parts.is_empty() {
        return None;
    }
    let value = parts.iter().fold(BigRational::zero(), |acc, (n, d)| acc + BigRational::new(n.clone(), d.clone()));
    let d0 = &parts[0].1;
    let text = if parts.iter().all(|(_, d)| d == d0) {
        let n: BigInt = parts.iter().map(|(n, _)| n).sum();
        render_ratio(&n, d0)
    } else {
        render_ratio(value.numer(), value.denom())
    };
    Some(GroupRate { value, text })
}

/// A fee group that fired: status, computed rate, candidates and why the
/// rate could not be read.
type FiredGroup<'a> = (Status, Option<String>, Vec<&'a FeeCandidate>, Option<String>);

fn hidden_fee(
    attrs: &FrontendAttributes,
    sem: &ContractSemantics,
    chain: Option<&dyn ChainState>,
    address: &Address,
) -> Option<Finding> {
    let claimed = attrs.fee_rate_percent.as_ref().map(|p| p.fraction());
    let mut fired: Vec<FiredGroup> = Vec::new();
    for ((selector, _), group) in fee_groups(sem) {
        let mut parts = Vec::new();
        let mut unavailable = None;
        for c in &group {
            match resolve(c, chain, address) {
                Resolved::Rate { numer, denom } => parts.push((numer, denom)),
                Resolved::Unavailable(e) => unavailable = Some(e),
            }
        }
        if let Some(reason) = unavailable {
            fired.push((Status::Indeterminate, None, group, Some(reason)));
            continue;
        }
        let Some(rate) = group_rate(&parts) else { continue };
        if rate.value.is_zero() {
            continue;
        }
        // the whole principal split among preset wallets, nothing to the user
        if !sem.payout_selectors.contains(&selector) && rate.value == BigRational::one() {
            continue;
        }
        let mismatch = !attrs.fee_claimed || claimed.as_ref().is_some_and(|c| *c != rate.value);
        if mismatch {
            fired.push((Status::Confirmed, Some(rate.text), group, None));
        }
    }
    if fired.is_empty() {
        return None;
    }
    // confirmed groups first, then in group order
    fired.sort_by_key(|f| f.0);
    let (status, computed, first, reason) = fired[0].clone();
    let all: Vec<&FeeCandidate> = fired.iter().filter(|f| f.0 == status).flat_map(|f| f.2.iter().copied()).collect();
    let fee_slot = first.iter().flat_map(|c| c.slots()).next();
    let evidence = Evidence {
        call_sites: sorted(all.iter().map(|c| &c.call_site)),
        slots: sorted(all.iter().flat_map(|c| c.slots()).map(|s| word_hex(&s))),
        fee_slot: fee_slot.map(|s| word_hex(&s)),
        fee_slot_modifiable: fee_slot.map(|_| first.iter().any(|c| !c.modifiable_slots.is_empty())),
        amount_expr: Some(first[0].amount.to_string()),
        amount_exprs: sorted(all.iter().map(|c| &c.amount)),
        recipients: sorted(all.iter().map(|c| c.recipient_class)),
        reason,
        ..Evidence::default()
    };
    let mut f = Finding::new(FindingKind::HF, evidence)
        .claim("fee_claimed", json!(attrs.fee_claimed))
        .claim("fee_rate_percent", serde_json::to_value(&attrs.fee_rate_percent).expect("percent serializes"));
    f.status = status;
    f.computed_rate = computed;
    f.claimed_rate = attrs.fee_rate_percent.as_ref().map(render_claim);
    Some(f)
}

fn token_uri(
    attrs: &FrontendAttributes,
    sem: &ContractSemantics,
    chain: Option<&dyn ChainState>,
    address: &Address,
) -> Option<Finding> {
    let slot = sem.token_uri_slot?;
    if attrs.nft_permanence_claimed == Some(false) {
        return None;
    }
    let base = Evidence { slots: vec![word_hex(&slot)], ..Evidence::default() };
    let claim = json!(attrs.nft_permanence_claimed);
    let read = match chain {
        None => Err("no chain backend configured".to_string()),
        Some(ch) => ch.read_string_at(address, slot).map_err(|e| e.to_string()),
    };
    match read {
        Ok(uri) => (classify_uri(&uri) == UriStorage::Centralized).then(|| {
            Finding::new(FindingKind::VNA, Evidence { uri: Some(uri), ..base }).claim("nft_permanence_claimed", claim)
        }),
        Err(reason) => {
            let mut f = Finding::new(FindingKind::VNA, Evidence { reason: Some(reason), ..base })
                .claim("nft_permanence_claimed", claim);
            f.status = Status::Indeterminate;
            Some(f)
        }
    }
}

/// Applies every rule. Pure in its inputs: the same claims, semantics and
/// chain contents give the same report.
pub fn detect_all(
    attrs: &FrontendAttributes,
    sem: &ContractSemantics,
    chain: Option<&dyn ChainState>,
    address: &Address,
) -> InconsistencyReport {
    let mut findings = Vec::new();

    if let Some(rate) = &attrs.reward_rate_percent {
        let hits: Vec<_> = sem
            .transfers
            .iter()
            .filter(|t| t.recipient_class == RecipientClass::Caller && t.dynamic.is_dynamic())
            .collect();
        if !hits.is_empty() {
            let ev = Evidence {
                call_sites: sorted(hits.iter().map(|t| &t.call_site)),
                slots: sorted(hits.iter().flat_map(|t| &t.dynamic.written_storage).map(word_hex)),
                amount_exprs: sorted(hits.iter().map(|t| &t.amount)),
                ..Evidence::default()
            };
            findings.push(
                Finding::new(FindingKind::UR, ev)
                    .claim("reward_rate_percent", serde_json::to_value(rate).expect("percent serializes")),
            );
        }
    }

    findings.extend(hidden_fee(attrs, sem, chain, address));

    if let Some(secs) = attrs.lock_time_seconds {
        let hits: Vec<_> = sem.lock_time.iter().filter(|l| l.publicly_settable).collect();
        if !hits.is_empty() {
            let ev = Evidence {
                store_sites: sorted(hits.iter().flat_map(|l| &l.setters)),
                slots: sorted(hits.iter().map(|l| word_hex(&l.slot))),
                ..Evidence::default()
            };
            findings.push(Finding::new(FindingKind::AL, ev).claim("lock_time_seconds", json!(secs)));
        }
    }

    let unbounded: Vec<_> = sem.supply.iter().filter(|s| !s.bound_checked).collect();
    if !unbounded.is_empty() {
        let ev = Evidence {
            store_sites: sorted(unbounded.iter().flat_map(|s| &s.unchecked_sites)),
            slots: sorted(unbounded.iter().map(|s| word_hex(&s.slot))),
            ..Evidence::default()
        };
        findings.push(Finding::new(FindingKind::UTS, ev).claim("total_supply", json!(attrs.total_supply)));
    }

    if !attrs.fund_flow_disclosed {
        let hits: Vec<_> = sem
            .transfers
            .iter()
            .filter(|t| t.owner_gated && (t.recipient_class != RecipientClass::Caller || t.withdraws_balance))
            .collect();
        if !hits.is_empty() {
            let ev = Evidence {
                call_sites: sorted(hits.iter().map(|t| &t.call_site)),
                amount_exprs: sorted(hits.iter().map(|t| &t.amount)),
                recipients: sorted(hits.iter().map(|t| t.recipient_class)),
                ..Evidence::default()
            };
            findings.push(Finding::new(FindingKind::UFF, ev).claim("fund_flow_disclosed", json!(false)));
        }
    }

    if !attrs.pause_disclosed {
        let hits: Vec<_> = sem.pause.iter().filter(|p| p.owner_modifiable && p.gates_transfer).collect();
        if !hits.is_empty() {
            let ev = Evidence {
                call_sites: sorted(hits.iter().flat_map(|p| &p.gated)),
                store_sites: sorted(hits.iter().flat_map(|p| &p.setters)),
                slots: sorted(hits.iter().map(|p| word_hex(&p.slot))),
                ..Evidence::default()
            };
            findings.push(Finding::new(FindingKind::CDS, ev).claim("pause_disclosed", json!(false)));
        }
    }

    findings.extend(token_uri(attrs, sem, chain, address));
    findings.sort_by_key(|f| f.kind);
    InconsistencyReport { contract: *address, findings, metadata: ReportMetadata::default() }
}
