//! Brute-force re-derivation of the data-flow closure and the inference
//! rules, straight from the IR. Control dependence is the one base relation
//! taken from the fact database as given.

use std::collections::{BTreeMap, BTreeSet};

use dappcheck::facts::{derive_facts, FactDb};
use dappcheck::infer::{infer_all, Role, RoleRule, TransferKind};
use dappcheck::ir::{IrProgram, Op, Operand, Statement, StmtId, Terminator, Var, Visibility};
use dappcheck::sigdb::SignatureDb;
use dappcheck::{Selector, Word};

pub type Pairs = BTreeSet<(Var, Var)>;

pub struct Oracle<'a> {
    program: &'a IrProgram,
    controls: &'a BTreeSet<(Var, StmtId)>,
    pub df: Pairs,
    pub copies: Pairs,
    constants: BTreeMap<Var, Word>,
    selectors: BTreeMap<StmtId, BTreeSet<Selector>>,
}

fn all_statements(p: &IrProgram) -> Vec<&Statement> {
    p.functions.iter().flat_map(|f| f.blocks.iter().flat_map(|b| b.statements.iter())).collect()
}

fn seeds(p: &IrProgram, copies_only: bool) -> Pairs {
    let mut out = Pairs::new();
    for s in all_statements(p) {
        match &s.op {
            Op::Call | Op::Sstore => {}
            Op::CallPrivate(callee) => {
                let f = p.functions.iter().find(|f| &f.name == callee).expect("callee exists");
                for (i, a) in s.args.iter().enumerate() {
                    if let (Operand::Var(a), Some(formal)) = (a, f.params.get(i)) {
                        out.insert((a.clone(), formal.clone()));
                    }
                }
                let Some(d) = &s.def else { continue };
                for b in &f.blocks {
                    if let Terminator::ReturnPrivate { values, .. } = &b.terminator {
                        for v in values {
                            if let Operand::Var(v) = v {
                                out.insert((v.clone(), d.clone()));
                            }
                        }
                    }
                }
            }
            op => {
                if copies_only && !matches!(op, Op::Phi | Op::And | Op::Or) {
                    continue;
                }
                let Some(d) = &s.def else { continue };
                for a in &s.args {
                    if let Operand::Var(v) = a {
                        out.insert((v.clone(), d.clone()));
                    }
                }
            }
        }
    }
    out
}

/// Reflexive-transitive closure by repeated composition until nothing new.
fn naive_closure(vars: &BTreeSet<Var>, seeds: &Pairs) -> Pairs {
    let mut reach: Pairs = vars.iter().map(|v| (v.clone(), v.clone())).collect();
    reach.extend(seeds.iter().cloned());
    loop {
        let mut add = Vec::new();
        for (a, b) in &reach {
            for (c, d) in seeds {
                if b == c && !reach.contains(&(a.clone(), d.clone())) {
                    add.push((a.clone(), d.clone()));
                }
            }
        }
        if add.is_empty() {
            return reach;
        }
        reach.extend(add);
    }
}

fn fold(op: &Op, a: Word, b: Word) -> Option<Word> {
    match op {
        Op::Add => Some(a.overflowing_add(b).0),
        Op::Sub => Some(a.overflowing_sub(b).0),
        Op::Mul => Some(a.overflowing_mul(b).0),
        Op::Div if !b.is_zero() => Some(a / b),
        Op::Mod if !b.is_zero() => Some(a % b),
        _ => None,
    }
}

const TRANSFER: u32 = 0xa9059cbb;
const TRANSFER_FROM: u32 = 0x23b872dd;
const TOKEN_ENTRY: [u32; 3] = [0xa9059cbb, 0x70a08231, 0x40c10f19];

fn getter(sel: Selector) -> Option<Role> {
    match u32::from_be_bytes(sel.0) {
        0x8da5cb5b => Some(Role::Owner),
        0x18160ddd => Some(Role::Supply),
        0x5c975abb => Some(Role::Pause),
        0xc87b56dd => Some(Role::TokenUri),
        _ => None,
    }
}

impl<'a> Oracle<'a> {
    pub fn new(program: &'a IrProgram, db: &'a FactDb) -> Oracle<'a> {
        let mut vars: BTreeSet<Var> = BTreeSet::new();
        for f in &program.functions {
            vars.extend(f.params.iter().cloned());
        }
        for s in all_statements(program) {
            vars.extend(s.def.iter().cloned());
        }
        let df = naive_closure(&vars, &seeds(program, false));
        let copies = naive_closure(&vars, &seeds(program, true));

        let mut constants = BTreeMap::new();
        loop {
            let mut changed = false;
            for s in all_statements(program) {
                let Some(d) = &s.def else { continue };
                if constants.contains_key(d) {
                    continue;
                }
                let c = |o: &Operand| match o {
                    Operand::Var(v) => constants.get(v).copied(),
                    Operand::Lit(w) | Operand::Slot(w) => Some(*w),
                };
                let v = match s.op {
                    Op::Const => c(&s.args[0]),
                    Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Mod => {
                        c(&s.args[0]).zip(c(&s.args[1])).and_then(|(a, b)| fold(&s.op, a, b))
                    }
                    _ => None,
                };
                if let Some(v) = v {
                    constants.insert(d.clone(), v);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        let mut reach: BTreeMap<&str, BTreeSet<Selector>> = BTreeMap::new();
        for f in &program.functions {
            reach.entry(&f.name).or_default().extend(f.selector);
        }
        loop {
            let mut changed = false;
            for f in &program.functions {
                for s in f.statements() {
                    if let Op::CallPrivate(callee) = &s.op {
                        let from = reach[f.name.as_str()].clone();
                        let to = reach.get_mut(callee.as_str()).expect("callee exists");
                        for sel in from {
                            changed |= to.insert(sel);
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut selectors = BTreeMap::new();
        for f in &program.functions {
            for s in f.statements() {
                selectors.insert(s.id.clone(), reach[f.name.as_str()].clone());
            }
        }
        Oracle { program, controls: &db.controls, df, copies, constants, selectors }
    }

    fn flows(&self, a: &Var, b: &Var) -> bool {
        self.df.contains(&(a.clone(), b.clone()))
    }

    fn flows_op(&self, a: &Var, o: &Operand) -> bool {
        matches!(o, Operand::Var(v) if self.flows(a, v))
    }

    fn konst(&self, o: &Operand) -> Option<Word> {
        match o {
            Operand::Var(v) => self.constants.get(v).copied(),
            Operand::Lit(w) | Operand::Slot(w) => Some(*w),
        }
    }

    fn sels(&self, s: &StmtId) -> BTreeSet<Selector> {
        self.selectors.get(s).cloned().unwrap_or_default()
    }

    fn with_op(&self, pred: impl Fn(&Op) -> bool) -> Vec<&'a Statement> {
        all_statements(self.program).into_iter().filter(|s| pred(&s.op)).collect()
    }

    fn caller_vars(&self) -> Vec<Var> {
        self.with_op(|o| *o == Op::Caller).iter().filter_map(|s| s.def.clone()).collect()
    }

    fn const_loads(&self) -> Vec<(&'a Statement, Word)> {
        self.with_op(|o| *o == Op::Sload).into_iter().filter_map(|s| self.konst(&s.args[0]).map(|w| (s, w))).collect()
    }

    fn const_stores(&self) -> Vec<(&'a Statement, Word)> {
        self.with_op(|o| *o == Op::Sstore).into_iter().filter_map(|s| self.konst(&s.args[0]).map(|w| (s, w))).collect()
    }

    fn compared_with_caller(&self, x: &Var) -> bool {
        let callers = self.caller_vars();
        self.with_op(|o| matches!(o, Op::Lt | Op::Gt | Op::Eq)).iter().any(|c| {
            let (l, r) = (&c.args[0], &c.args[1]);
            callers.iter().any(|cv| (self.flows_op(x, l) && self.flows_op(cv, r)) || (self.flows_op(x, r) && self.flows_op(cv, l)))
        })
    }

    fn value_controls(&self, x: &Var, s: &StmtId) -> bool {
        self.controls.iter().any(|(c, t)| t == s && self.flows(x, c))
    }

    fn controls_anything(&self, x: &Var) -> bool {
        self.controls.iter().any(|(c, _)| self.flows(x, c))
    }

    pub fn transfers(&self) -> BTreeSet<(StmtId, Selector, Operand, Operand, TransferKind)> {
        let mut out = BTreeSet::new();
        for s in self.with_op(|o| *o == Op::Call) {
            let a = &s.args;
            let picked = if a.len() == 2 {
                Some((0, 1, TransferKind::Ether))
            } else if a.len() >= 3 {
                match self.konst(&a[2]) {
                    Some(w) if w == Word::from(TRANSFER) && a.len() >= 5 => Some((3, 4, TransferKind::Erc20Transfer)),
                    Some(w) if w == Word::from(TRANSFER_FROM) && a.len() >= 6 => Some((4, 5, TransferKind::Erc20TransferFrom)),
                    _ => None,
                }
            } else {
                None
            };
            let Some((r, m, kind)) = picked else { continue };
            for sel in self.sels(&s.id) {
                out.insert((s.id.clone(), sel, a[r].clone(), a[m].clone(), kind));
            }
        }
        out
    }

    pub fn sender_guards(&self) -> BTreeSet<(Word, Selector)> {
        let mut out = BTreeSet::new();
        for (load, slot) in self.const_loads() {
            let d = load.def.as_ref().expect("load defines");
            if self.compared_with_caller(d) {
                for sel in self.sels(&load.id) {
                    out.insert((slot, sel));
                }
            }
        }
        out
    }

    pub fn roles(&self) -> BTreeSet<(Role, Word, Selector, RoleRule)> {
        let mut out = BTreeSet::new();
        let publics: Vec<_> =
            self.program.functions.iter().filter(|f| f.visibility == Visibility::Public && f.selector.is_some()).collect();

        for f in &publics {
            let sel = f.selector.expect("filtered");
            let Some(role) = getter(sel) else { continue };
            for b in &f.blocks {
                let Terminator::Return(vals) = &b.terminator else { continue };
                for ret in vals.iter().filter_map(|o| if let Operand::Var(v) = o { Some(v) } else { None }) {
                    for (load, slot) in self.const_loads() {
                        let d = load.def.clone().expect("load defines");
                        if self.copies.contains(&(d, ret.clone())) {
                            let rule = if role == Role::Owner { RoleRule::OwnerGetter } else { RoleRule::StandardGetter };
                            out.insert((role, slot, sel, rule));
                        }
                    }
                }
            }
        }

        for (load, slot) in self.const_loads() {
            let d = load.def.as_ref().expect("load defines");
            if self.compared_with_caller(d) && self.controls_anything(d) {
                for sel in self.sels(&load.id) {
                    out.insert((Role::Owner, slot, sel, RoleRule::SenderGuard));
                }
            }
        }

        let times: Vec<Var> = self.with_op(|o| *o == Op::Timestamp).iter().filter_map(|s| s.def.clone()).collect();
        let args: Vec<Var> = publics.iter().flat_map(|f| f.params.iter().cloned()).collect();
        for (store, slot) in self.const_stores() {
            let Operand::Var(z) = &store.args[1] else { continue };
            if times.iter().any(|t| self.flows(t, z)) && args.iter().any(|a| self.flows(a, z)) {
                for sel in self.sels(&store.id) {
                    out.insert((Role::LockTime, slot, sel, RoleRule::LockArithmetic));
                }
            }
        }

        let has_getter = |out: &BTreeSet<(Role, Word, Selector, RoleRule)>, role: Role| {
            out.iter().any(|(r, _, _, rule)| *r == role && *rule == RoleRule::StandardGetter)
        };
        let token = publics.iter().any(|f| TOKEN_ENTRY.contains(&u32::from_be_bytes(f.selector.expect("filtered").0)));

        if !has_getter(&out, Role::Supply) && token {
            let mut found = Vec::new();
            for (load, slot) in self.const_loads() {
                let x = Operand::Var(load.def.clone().expect("load defines"));
                for add in self.with_op(|o| *o == Op::Add) {
                    if add.args[0] != x && add.args[1] != x {
                        continue;
                    }
                    let a = add.def.as_ref().expect("add defines");
                    for (store, sslot) in self.const_stores() {
                        if sslot == slot && self.flows_op(a, &store.args[1]) {
                            for sel in self.sels(&store.id) {
                                found.push((Role::Supply, slot, sel, RoleRule::AddAccumulator));
                            }
                        }
                    }
                }
            }
            out.extend(found);
        }

        if !has_getter(&out, Role::Pause) {
            let mut found = Vec::new();
            for (load, slot) in self.const_loads() {
                let d = load.def.as_ref().expect("load defines");
                for (store, sslot) in self.const_stores() {
                    let nonzero = self.konst(&store.args[1]).is_some_and(|v| !v.is_zero());
                    if sslot == slot && nonzero && self.value_controls(d, &store.id) {
                        for sel in self.sels(&store.id) {
                            found.push((Role::Pause, slot, sel, RoleRule::FlagSet));
                        }
                    }
                }
            }
            out.extend(found);
        }
        out
    }
}

/// Names the first relation where the engine and the oracle disagree.
pub fn disagreement(p: &IrProgram) -> Option<String> {
    let db = derive_facts(p);
    let inf = infer_all(&db, p, &SignatureDb::builtin());
    let o = Oracle::new(p, &db);
    if db.df_pairs() != o.df {
        return Some("dataflow closure".into());
    }
    let copies: BTreeSet<_> =
        db.copy_flow.iter().flat_map(|(a, bs)| bs.iter().map(move |b| (a.clone(), b.clone()))).collect();
    if copies != o.copies {
        return Some("copy closure".into());
    }
    let transfers: BTreeSet<_> = inf
        .transfers
        .iter()
        .map(|t| (t.call_site.clone(), t.selector, t.recipient.clone(), t.amount.clone(), t.kind))
        .collect();
    if transfers != o.transfers() {
        return Some(format!("transfer: engine {transfers:?} oracle {:?}", o.transfers()));
    }
    let guards: BTreeSet<_> = inf.guards.iter().map(|g| (g.slot, g.selector)).collect();
    if guards != o.sender_guards() {
        return Some(format!("sender guard: engine {guards:?} oracle {:?}", o.sender_guards()));
    }
    let roles: BTreeSet<_> = inf.roles.iter().map(|r| (r.role, r.slot, r.selector, r.rule)).collect();
    if roles != o.roles() {
        return Some(format!("storage role: engine {roles:?} oracle {:?}", o.roles()));
    }
    None
}
