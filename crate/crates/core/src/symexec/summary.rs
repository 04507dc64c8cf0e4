//! Condenses checkpoint states into the contract-level facts the detector
//! checks claims against.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use super::exec::CheckpointState;
use super::expr::{BinOp, Leaf, SymExpr};
use crate::analysis::StaticAnalysis;
use crate::graphs::RecipientClass;
use crate::infer::Role;
use crate::ir::{Operand, StmtId};
use crate::word::{serialize_word, serialize_word_set, Selector, Word};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SummaryOptions {
    /// Also accept supply bound checks that run after the store.
    pub strict_uts: bool,
}

/// What a transfer amount depends on besides constants and arguments.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct DynamicFlags {
    pub balance_self: bool,
    /// Initial values of slots that some statement writes.
    #[serde(serialize_with = "serialize_word_set")]
    pub written_storage: BTreeSet<Word>,
    pub calldata: bool,
}

impl DynamicFlags {
    /// Balance or mutable storage; calldata alone does not count.
    pub fn is_dynamic(&self) -> bool {
        self.balance_self || !self.written_storage.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct TransferSummary {
    pub call_site: StmtId,
    pub selector: Selector,
    pub recipient_class: RecipientClass,
    pub recipient: SymExpr,
    pub amount: SymExpr,
    pub dynamic: DynamicFlags,
    pub owner_gated: bool,
    pub withdraws_balance: bool,
}

/// A constant or storage-valued factor of a fee fraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum FeeTerm {
    Const(Word),
    Slot(Word),
}

impl fmt::Display for FeeTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeeTerm::Const(w) => write!(f, "{}", SymExpr::Const(*w)),
            FeeTerm::Slot(s) => write!(f, "{}", Leaf::StoreInit(*s)),
        }
    }
}

impl Serialize for FeeTerm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Amount of the shape `base * num[0] * ... / den[0] / ...`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct FeeCandidate {
    pub call_site: StmtId,
    pub selector: Selector,
    pub recipient_class: RecipientClass,
    pub amount: SymExpr,
    pub base: SymExpr,
    pub numerator: Vec<FeeTerm>,
    pub denominator: Vec<FeeTerm>,
    /// Storage factors of the fraction that some statement can rewrite.
    #[serde(serialize_with = "serialize_word_set")]
    pub modifiable_slots: BTreeSet<Word>,
}

impl FeeCandidate {
    pub fn slots(&self) -> impl Iterator<Item = Word> + '_ {
        self.numerator.iter().chain(&self.denominator).filter_map(|t| match t {
            FeeTerm::Slot(s) => Some(*s),
            FeeTerm::Const(_) => None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SupplySummary {
    #[serde(serialize_with = "serialize_word")]
    pub slot: Word,
    /// Stores that add to the supply.
    pub mint_sites: BTreeSet<StmtId>,
    /// Mints reachable without any bound comparison on the supply.
    pub unchecked_sites: BTreeSet<StmtId>,
    pub bound_checked: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PauseSummary {
    #[serde(serialize_with = "serialize_word")]
    pub slot: Word,
    pub setters: BTreeSet<StmtId>,
    pub gated: BTreeSet<StmtId>,
    pub owner_modifiable: bool,
    pub gates_transfer: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LockSummary {
    #[serde(serialize_with = "serialize_word")]
    pub slot: Word,
    pub setters: BTreeSet<StmtId>,
    pub publicly_settable: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ContractSemantics {
    pub transfers: Vec<TransferSummary>,
    /// Caller-recipient transfers per selector.
    pub payout_selectors: BTreeSet<Selector>,
    pub fee_candidates: Vec<FeeCandidate>,
    pub supply: Vec<SupplySummary>,
    pub pause: Vec<PauseSummary>,
    pub lock_time: Vec<LockSummary>,
    #[serde(serialize_with = "crate::word::serialize_opt_word")]
    pub token_uri_slot: Option<Word>,
}

impl ContractSemantics {
    pub fn is_empty(&self) -> bool {
        *self == ContractSemantics::default()
    }
}

fn strip_negations(e: &SymExpr) -> (&SymExpr, bool) {
    let mut e = e;
    let mut negated = false;
    while let SymExpr::IsZero(a) = e {
        negated = !negated;
        e = a;
    }
    (e, negated)
}

/// `eq(caller, store(s))` with `s` a sender-check slot, asserted true.
fn is_owner_check(c: &SymExpr, owner_slots: &BTreeSet<Word>) -> bool {
    let (e, negated) = strip_negations(c);
    let SymExpr::Bin(BinOp::Eq, a, b) = e else { return false };
    let caller = |x: &SymExpr| x.contains_leaf(&|l| *l == Leaf::Caller);
    let owner = |x: &SymExpr| x.contains_leaf(&|l| matches!(l, Leaf::StoreInit(s) if owner_slots.contains(s)));
    !negated && ((caller(a) && owner(b)) || (caller(b) && owner(a)))
}

fn contains_subexpr(e: &SymExpr, sub: &SymExpr) -> bool {
    if e == sub {
        return true;
    }
    match e {
        SymExpr::Bin(_, a, b) => contains_subexpr(a, sub) || contains_subexpr(b, sub),
        SymExpr::IsZero(a) => contains_subexpr(a, sub),
        _ => false,
    }
}

fn fee_term(e: &SymExpr) -> Option<FeeTerm> {
    match e {
        SymExpr::Const(w) if !w.is_zero() => Some(FeeTerm::Const(*w)),
        SymExpr::Leaf(Leaf::StoreInit(s)) => Some(FeeTerm::Slot(*s)),
        _ => None,
    }
}

/// Splits `e` into a base and constant/storage multiplicative factors.
fn fraction(e: &SymExpr) -> (SymExpr, Vec<FeeTerm>, Vec<FeeTerm>) {
    match e {
        SymExpr::Bin(BinOp::Div, a, d) => match fee_term(d) {
            Some(t) => {
                let (base, num, mut den) = fraction(a);
                den.push(t);
                (base, num, den)
            }
            None => (e.clone(), Vec::new(), Vec::new()),
        },
        SymExpr::Bin(BinOp::Mul, a, b) => {
            let (inner, t) = match (fee_term(a), fee_term(b)) {
                (_, Some(t)) => (a, t),
                (Some(t), None) => (b, t),
                (None, None) => return (e.clone(), Vec::new(), Vec::new()),
            };
            let (base, mut num, den) = fraction(inner);
            num.push(t);
            (base, num, den)
        }
        _ => (e.clone(), Vec::new(), Vec::new()),
    }
}

/// A path constraint comparing (`lt`/`gt`) something involving `bound`
/// against something free of `init`. Overflow checks compare the sum with
/// the old value, so both sides hold `init` and they do not count as caps.
fn bounds(c: &SymExpr, bound: &dyn Fn(&SymExpr) -> bool, init: &SymExpr) -> bool {
    let (e, _) = strip_negations(c);
    match e {
        SymExpr::Bin(BinOp::Lt | BinOp::Gt, a, b) => {
            (bound(a) && !contains_subexpr(b, init)) || (bound(b) && !contains_subexpr(a, init))
        }
        SymExpr::Bin(BinOp::And | BinOp::Or, a, b) => bounds(a, bound, init) || bounds(b, bound, init),
        _ => false,
    }
}

fn store_slot(cp: &CheckpointState) -> Option<Word> {
    cp.get("slot").and_then(SymExpr::as_const)
}

pub fn summarize_semantics(
    sa: &StaticAnalysis,
    checkpoints: &[CheckpointState],
    options: SummaryOptions,
) -> ContractSemantics {
    let feasible: Vec<&CheckpointState> = checkpoints.iter().filter(|c| c.feasibility.possible()).collect();
    let mut owner_slots: BTreeSet<Word> = sa.inference.role_slots(Role::Owner);
    owner_slots.extend(sa.inference.guards.iter().map(|g| g.slot));

    let mut sem = ContractSemantics::default();
    let mut transfers: BTreeSet<TransferSummary> = BTreeSet::new();
    for cp in &feasible {
        let (Some(recipient), Some(amount)) = (cp.get("recipient"), cp.get("amount")) else { continue };
        let Some(edge) = sa.ftg.edge(&cp.site, cp.selector) else { continue };
        let mut dynamic = DynamicFlags::default();
        for leaf in amount.leaves() {
            match leaf {
                Leaf::BalanceSelf => dynamic.balance_self = true,
                Leaf::StoreInit(s) if sa.sdg.is_written(*s) => {
                    dynamic.written_storage.insert(*s);
                }
                Leaf::Calldata(..) => dynamic.calldata = true,
                _ => {}
            }
        }
        let recipient_class = match recipient {
            SymExpr::Leaf(Leaf::Caller) => RecipientClass::Caller,
            _ => edge.recipient_class,
        };
        transfers.insert(TransferSummary {
            call_site: cp.site.clone(),
            selector: cp.selector,
            recipient_class,
            recipient: recipient.clone(),
            amount: amount.clone(),
            dynamic,
            owner_gated: edge.privileged_owner.is_some() || cp.path.iter().any(|c| is_owner_check(c, &owner_slots)),
            withdraws_balance: *amount == SymExpr::leaf(Leaf::BalanceSelf),
        });
    }
    sem.transfers = transfers.into_iter().collect();
    sem.payout_selectors =
        sem.transfers.iter().filter(|t| t.recipient_class == RecipientClass::Caller).map(|t| t.selector).collect();

    let mut fees: BTreeSet<FeeCandidate> = BTreeSet::new();
    for t in &sem.transfers {
        if !matches!(t.recipient_class, RecipientClass::ConstantAddress(_) | RecipientClass::StorageLoaded(_)) {
            continue;
        }
        let (base, numerator, denominator) = fraction(&t.amount);
        if denominator.is_empty() || fee_term(&base).is_some() {
            continue;
        }
        let payout_sites: BTreeSet<&StmtId> = sem
            .transfers
            .iter()
            .filter(|p| p.selector == t.selector && p.recipient_class == RecipientClass::Caller)
            .map(|p| &p.call_site)
            .collect();
        let shares_payout = sem
            .transfers
            .iter()
            .filter(|p| payout_sites.contains(&p.call_site))
            .any(|p| contains_subexpr(&p.amount, &base))
            || sa.ftg.edge(&t.call_site, t.selector).is_some_and(|e| {
                e.shares_ancestor_with.iter().any(|s| payout_sites.contains(s))
            });
        let from_value = base.contains_leaf(&|l| *l == Leaf::CallValue);
        if !(shares_payout || from_value) {
            continue;
        }
        let mut cand = FeeCandidate {
            call_site: t.call_site.clone(),
            selector: t.selector,
            recipient_class: t.recipient_class,
            amount: t.amount.clone(),
            base,
            numerator,
            denominator,
            modifiable_slots: BTreeSet::new(),
        };
        cand.modifiable_slots = cand.slots().filter(|s| sa.sdg.is_written(*s)).collect();
        fees.insert(cand);
    }
    sem.fee_candidates = fees.into_iter().collect();

    let stores_at = |slot: Word| feasible.iter().filter(move |c| store_slot(c) == Some(slot));
    for slot in sa.inference.role_slots(Role::Supply) {
        let init = SymExpr::leaf(Leaf::StoreInit(slot));
        let mut mint_sites = BTreeSet::new();
        let mut unchecked_sites = BTreeSet::new();
        for cp in stores_at(slot) {
            let Some(value) = cp.get("value") else { continue };
            if !matches!(value, SymExpr::Bin(BinOp::Add, ..)) || !contains_subexpr(value, &init) {
                continue;
            }
            mint_sites.insert(cp.site.clone());
            let bound = |e: &SymExpr| contains_subexpr(e, &init) || contains_subexpr(e, value);
            if !cp.path.iter().any(|c| bounds(c, &bound, &init)) {
                unchecked_sites.insert(cp.site.clone());
            }
        }
        if options.strict_uts {
            unchecked_sites.retain(|site| !checked_after_store(sa, site, slot));
        }
        sem.supply.push(SupplySummary { slot, bound_checked: unchecked_sites.is_empty(), mint_sites, unchecked_sites });
    }

    for slot in sa.inference.role_slots(Role::Pause) {
        let reached: BTreeSet<&StmtId> = stores_at(slot).map(|c| &c.site).collect();
        let setters: BTreeSet<StmtId> = sa
            .sdg
            .edges
            .iter()
            .filter(|e| e.role == Role::Pause && e.slot == slot && e.guard.is_some() && reached.contains(&e.store_site))
            .map(|e| e.store_site.clone())
            .collect();
        let gated: BTreeSet<StmtId> =
            sa.sdg.pause_edges.iter().filter(|e| e.pause_slot == slot).map(|e| e.target.clone()).collect();
        sem.pause.push(PauseSummary {
            slot,
            owner_modifiable: !setters.is_empty(),
            gates_transfer: !gated.is_empty(),
            setters,
            gated,
        });
    }

    for slot in sa.inference.role_slots(Role::LockTime) {
        let setters: BTreeSet<StmtId> = stores_at(slot)
            .filter(|c| c.get("value").is_some_and(|v| v.contains_leaf(&|l| matches!(l, Leaf::Calldata(..)))))
            .map(|c| c.site.clone())
            .collect();
        sem.lock_time.push(LockSummary { slot, publicly_settable: !setters.is_empty(), setters });
    }

    sem.token_uri_slot = sa.inference.role_slots(Role::TokenUri).into_iter().next();
    sem
}

/// A comparison in the same function reading the stored supply (through
/// the stored value or a load of the slot).
fn checked_after_store(sa: &StaticAnalysis, site: &StmtId, slot: Word) -> bool {
    let db = &sa.facts;
    let Some(store) = db.stores.iter().find(|s| &s.site == site) else { return false };
    let selectors: BTreeSet<Selector> = db.selectors(site).collect();
    let mut roots: Vec<_> = store.value.var().into_iter().cloned().collect();
    roots.extend(
        db.loads
            .iter()
            .filter(|l| db.const_of(&l.slot) == Some(slot) && db.selectors(&l.site).any(|s| selectors.contains(&s)))
            .map(|l| l.def.clone()),
    );
    db.comp.iter().filter(|c| matches!(c.op, crate::ir::Op::Lt | crate::ir::Op::Gt)).any(|c| {
        let same_fn = sa
            .program
            .def_stmt(&c.def)
            .is_some_and(|st| db.selectors(&st.id).any(|s| selectors.contains(&s)));
        let reads = |o: &Operand| o.var().is_some_and(|v| roots.iter().any(|r| db.df(r, v)));
        same_fn && (reads(&c.lhs) || reads(&c.rhs))
    })
}

/// Groups fee candidates by (selector, base), in stable order.
pub fn fee_groups(sem: &ContractSemantics) -> BTreeMap<(Selector, SymExpr), Vec<&FeeCandidate>> {
    let mut groups: BTreeMap<(Selector, SymExpr), Vec<&FeeCandidate>> = BTreeMap::new();
    for c in &sem.fee_candidates {
        groups.entry((c.selector, c.base.clone())).or_default().push(c);
    }
    groups
}
