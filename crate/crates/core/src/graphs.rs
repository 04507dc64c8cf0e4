//! Fund-transfer and state-dependency graphs, and the analysis plan they
//! induce for symbolic execution.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use serde::Serialize;

use crate::facts::{FactDb, Source};
use crate::infer::{Inference, Role, TransferKind};
use crate::ir::{IrProgram, Operand, StmtId, Var};
use crate::sigdb::SignatureDb;
use crate::word::{word_hex, Selector, Word};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(tag = "class", content = "value", rename_all = "snake_case")]
pub enum RecipientClass {
    Caller,
    ConstantAddress(#[serde(serialize_with = "crate::word::serialize_word")] Word),
    StorageLoaded(#[serde(serialize_with = "crate::word::serialize_word")] Word),
    Other,
}

impl fmt::Display for RecipientClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecipientClass::Caller => f.write_str("caller"),
            RecipientClass::ConstantAddress(w) => write!(f, "const({})", word_hex(w)),
            RecipientClass::StorageLoaded(w) => write!(f, "storage({})", word_hex(w)),
            RecipientClass::Other => f.write_str("other"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FtgEdge {
    pub call_site: StmtId,
    pub selector: Selector,
    pub kind: TransferKind,
    pub recipient: Operand,
    pub recipient_class: RecipientClass,
    pub amount: Operand,
    /// Owner slot whose sender check controls this transfer.
    pub privileged_owner: Option<Word>,
    /// Amount derives from the contract's own balance.
    pub withdraws_balance: bool,
    /// Other transfers of the same selector whose amounts share a
    /// non-constant DF ancestor with this one.
    pub shares_ancestor_with: BTreeSet<StmtId>,
}

/// Transfers as edges from the contract (self node) to classified recipients.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FundTransferGraph {
    pub edges: Vec<FtgEdge>,
}

impl FundTransferGraph {
    pub fn recipients(&self) -> BTreeSet<RecipientClass> {
        self.edges.iter().map(|e| e.recipient_class).collect()
    }

    pub fn edge(&self, call_site: &StmtId, selector: Selector) -> Option<&FtgEdge> {
        self.edges.iter().find(|e| &e.call_site == call_site && e.selector == selector)
    }
}

/// A write to a constant storage slot, with the sender-check slot that
/// guards it (if any).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct SlotWrite {
    pub store_site: StmtId,
    pub selector: Selector,
    pub slot: Word,
    pub guard: Option<Word>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct SdgEdge {
    pub guard: Option<Word>,
    pub slot: Word,
    pub role: Role,
    pub selector: Selector,
    pub store_site: StmtId,
}

/// The pause flag controls a value-moving statement.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct PauseEdge {
    pub pause_slot: Word,
    pub target: StmtId,
    pub selector: Selector,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StateDependencyGraph {
    pub nodes: BTreeSet<(Role, Word)>,
    /// Writes to role slots, guarded (`guard` set) or not.
    pub edges: Vec<SdgEdge>,
    pub pause_edges: Vec<PauseEdge>,
    /// Writes to every constant slot, role or not.
    pub writes: BTreeMap<Word, Vec<SlotWrite>>,
}

impl StateDependencyGraph {
    pub fn is_written(&self, slot: Word) -> bool {
        self.writes.contains_key(&slot)
    }

    /// Writable only behind an owner check (and written at all).
    pub fn owner_only(&self, slot: Word) -> bool {
        self.writes.get(&slot).is_some_and(|ws| ws.iter().all(|w| w.guard.is_some()))
    }

    pub fn guarded_writes(&self, slot: Word) -> impl Iterator<Item = &SlotWrite> {
        self.writes.get(&slot).into_iter().flatten().filter(|w| w.guard.is_some())
    }
}

/// Owner slots whose caller comparison gates `site`.
fn guarding_owner_slot(db: &FactDb, program: &IrProgram, inf: &Inference, site: &StmtId) -> Option<Word> {
    let owners = inf.role_slots(Role::Owner);
    db.loads
        .iter()
        .filter(|l| db.const_of(&l.slot).is_some_and(|s| owners.contains(&s)))
        .filter(|l| db.compared_with_caller(&l.def) && gated_by(db, program, &l.def).contains(site))
        .filter_map(|l| db.const_of(&l.slot))
        .min()
}

/// Sender-check slots (any SG slot) gating `site`.
fn guarding_sender_slot(db: &FactDb, program: &IrProgram, inf: &Inference, selector: Selector, site: &StmtId) -> Option<Word> {
    let sg: BTreeSet<Word> = inf.guards.iter().filter(|g| g.selector == selector).map(|g| g.slot).collect();
    db.loads
        .iter()
        .filter(|l| db.const_of(&l.slot).is_some_and(|s| sg.contains(&s)))
        .filter(|l| db.compared_with_caller(&l.def) && gated_by(db, program, &l.def).contains(site))
        .filter_map(|l| db.const_of(&l.slot))
        .min()
}

pub fn classify_recipient(db: &FactDb, recipient: &Operand) -> RecipientClass {
    let v = match recipient {
        Operand::Var(v) => v,
        lit => return RecipientClass::ConstantAddress(lit.literal().expect("literal operand")),
    };
    if db.flows_from_source(Source::Caller, v) {
        return RecipientClass::Caller;
    }
    if let Some(c) = db.constant.get(v) {
        return RecipientClass::ConstantAddress(*c);
    }
    let slot = db
        .loads
        .iter()
        .filter(|l| db.df(&l.def, v))
        .filter_map(|l| db.const_of(&l.slot))
        .min();
    match slot {
        Some(s) => RecipientClass::StorageLoaded(s),
        None => RecipientClass::Other,
    }
}

fn shared_ancestor(db: &FactDb, a: &Operand, b: &Operand) -> bool {
    let (Some(a), Some(b)) = (a.var(), b.var()) else { return false };
    db.dataflow
        .iter()
        .any(|(v, reach)| !db.constant.contains_key(v) && reach.contains(a) && reach.contains(b))
}

pub fn build_ftg(db: &FactDb, program: &IrProgram, inf: &Inference) -> FundTransferGraph {
    let mut edges: Vec<FtgEdge> = inf
        .transfers
        .iter()
        .map(|t| FtgEdge {
            call_site: t.call_site.clone(),
            selector: t.selector,
            kind: t.kind,
            recipient: t.recipient.clone(),
            recipient_class: classify_recipient(db, &t.recipient),
            amount: t.amount.clone(),
            privileged_owner: guarding_owner_slot(db, program, inf, &t.call_site)
                .filter(|s| inf.guards.iter().any(|g| g.slot == *s && g.selector == t.selector)),
            withdraws_balance: t.amount.var().is_some_and(|a| db.self_balance.iter().any(|b| db.df(b, a))),
            shares_ancestor_with: BTreeSet::new(),
        })
        .collect();
    for i in 0..edges.len() {
        for j in 0..edges.len() {
            if i != j
                && edges[i].selector == edges[j].selector
                && edges[i].call_site != edges[j].call_site
                && shared_ancestor(db, &edges[i].amount, &edges[j].amount)
            {
                let other = edges[j].call_site.clone();
                edges[i].shares_ancestor_with.insert(other);
            }
        }
    }
    FundTransferGraph { edges }
}

/// Statements that move tokens or ether: transfer call sites, plus storage
/// writes inside a contract's own `transfer`/`transferFrom`.
fn value_moving_statements(db: &FactDb, inf: &Inference, sigs: &SignatureDb) -> BTreeSet<(StmtId, Selector)> {
    let token_entry: BTreeSet<Selector> = ["transfer(address,uint256)", "transferFrom(address,address,uint256)"]
        .iter()
        .filter_map(|s| sigs.selector(s))
        .collect();
    let mut out: BTreeSet<(StmtId, Selector)> =
        inf.transfers.iter().map(|t| (t.call_site.clone(), t.selector)).collect();
    for st in &db.stores {
        for sel in db.selectors(&st.site) {
            if token_entry.contains(&sel) {
                out.insert((st.site.clone(), sel));
            }
        }
    }
    out
}

/// Statements that only run once `x` has passed a check: those a condition
/// on `x` controls, plus those controlled by conditions computed there.
fn gated_by(db: &FactDb, program: &IrProgram, x: &Var) -> BTreeSet<StmtId> {
    let mut set: BTreeSet<StmtId> = db.controlled_by(x).into_iter().cloned().collect();
    loop {
        let before = set.len();
        for (c, s) in &db.controls {
            if !set.contains(s) && program.def_stmt(c).is_some_and(|d| set.contains(&d.id)) {
                set.insert(s.clone());
            }
        }
        if set.len() == before {
            return set;
        }
    }
}

pub fn build_sdg(db: &FactDb, program: &IrProgram, inf: &Inference, sigs: &SignatureDb) -> StateDependencyGraph {
    let mut sdg = StateDependencyGraph {
        nodes: inf.roles.iter().map(|r| (r.role, r.slot)).collect(),
        ..Default::default()
    };
    for st in &db.stores {
        let Some(slot) = db.const_of(&st.slot) else { continue };
        for selector in db.selectors(&st.site) {
            let guard = guarding_sender_slot(db, program, inf, selector, &st.site);
            sdg.writes.entry(slot).or_default().push(SlotWrite {
                store_site: st.site.clone(),
                selector,
                slot,
                guard,
            });
            let roles: BTreeSet<Role> = inf.roles.iter().filter(|r| r.slot == slot).map(|r| r.role).collect();
            for role in roles {
                sdg.edges.push(SdgEdge { guard, slot, role, selector, store_site: st.site.clone() });
            }
        }
    }
    let pause_slots = inf.role_slots(Role::Pause);
    let moving = value_moving_statements(db, inf, sigs);
    for load in &db.loads {
        let Some(slot) = db.const_of(&load.slot) else { continue };
        if !pause_slots.contains(&slot) {
            continue;
        }
        let gated = gated_by(db, program, &load.def);
        for (site, selector) in &moving {
            if gated.contains(site) {
                sdg.pause_edges.push(PauseEdge { pause_slot: slot, target: site.clone(), selector: *selector });
            }
        }
    }
    sdg.edges.sort();
    sdg.edges.dedup();
    sdg.pause_edges.sort();
    sdg.pause_edges.dedup();
    for ws in sdg.writes.values_mut() {
        ws.sort();
        ws.dedup();
    }
    sdg
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PlanEntry {
    pub checkpoints: BTreeSet<StmtId>,
    pub tracked: BTreeSet<Var>,
}

/// Selectors worth executing and where to capture state in each.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AnalysisPlan {
    pub entries: BTreeMap<Selector, PlanEntry>,
}

impl AnalysisPlan {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn selectors(&self) -> impl Iterator<Item = Selector> + '_ {
        self.entries.keys().copied()
    }

    pub fn checkpoint_count(&self) -> usize {
        self.entries.values().map(|e| e.checkpoints.len()).sum()
    }
}

pub fn plan_symexec(program: &IrProgram, ftg: &FundTransferGraph, sdg: &StateDependencyGraph) -> AnalysisPlan {
    let mut plan = AnalysisPlan::default();
    let track = |entry: &mut PlanEntry, op: &Operand| {
        if let Some(v) = op.var() {
            entry.tracked.insert(v.clone());
        }
    };
    for e in &ftg.edges {
        let entry = plan.entries.entry(e.selector).or_default();
        entry.checkpoints.insert(e.call_site.clone());
        track(entry, &e.recipient);
        track(entry, &e.amount);
    }
    for e in &sdg.edges {
        let entry = plan.entries.entry(e.selector).or_default();
        entry.checkpoints.insert(e.store_site.clone());
        if let Some(st) = program.statement(&e.store_site) {
            track(entry, &st.args[1]);
        }
    }
    for e in &sdg.pause_edges {
        let entry = plan.entries.entry(e.selector).or_default();
        entry.checkpoints.insert(e.target.clone());
    }
    plan
}

/// Plain-text adjacency listing of both graphs and the plan.
pub fn dump_graphs(ftg: &FundTransferGraph, sdg: &StateDependencyGraph, plan: &AnalysisPlan) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "[ftg]");
    for e in &ftg.edges {
        let _ = write!(
            out,
            "self -> {} via {} in {} amount {} kind {:?}",
            e.recipient_class, e.call_site, e.selector, e.amount, e.kind
        );
        if let Some(o) = e.privileged_owner {
            let _ = write!(out, " owner {}", word_hex(&o));
        }
        if e.withdraws_balance {
            let _ = write!(out, " withdraws_balance");
        }
        for s in &e.shares_ancestor_with {
            let _ = write!(out, " shares {s}");
        }
        out.push('\n');
    }
    let _ = writeln!(out, "[sdg]");
    for (role, slot) in &sdg.nodes {
        let _ = writeln!(out, "node {role} {}", word_hex(slot));
    }
    for e in &sdg.edges {
        let guard = e.guard.map_or("none".to_string(), |g| word_hex(&g));
        let _ = writeln!(out, "{guard} -> {} {} via {} in {}", e.role, word_hex(&e.slot), e.store_site, e.selector);
    }
    for e in &sdg.pause_edges {
        let _ = writeln!(out, "pause {} -> {} in {}", word_hex(&e.pause_slot), e.target, e.selector);
    }
    let _ = writeln!(out, "[plan]");
    for (sel, entry) in &plan.entries {
        let cps: Vec<String> = entry.checkpoints.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(out, "{sel}: {}", cps.join(" "));
    }
    out
}
