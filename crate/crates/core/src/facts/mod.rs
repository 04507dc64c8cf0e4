//! Base semantic relations over an [`IrProgram`].
//!
//! [`derive_base_facts`] extracts every relation except the data-flow
//! closure, which [`dataflow_closure`] adds; [`derive_facts`] does both.

mod dump;

use std::collections::{BTreeMap, BTreeSet};

pub use dump::{dump_tsv, relation_tables};

use crate::ir::{build_cfg, IrProgram, Op, Operand, StmtId, Terminator, Var, Visibility};
use crate::word::{Selector, Word};

/// A binary arithmetic or comparison statement `def = op lhs rhs`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OpFact {
    pub def: Var,
    pub op: Op,
    pub lhs: Operand,
    pub rhs: Operand,
}

/// A `CALL` statement, ABI-decoded or plain.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct CallSite {
    pub site: StmtId,
    pub def: Option<Var>,
    pub target: Operand,
    pub value: Operand,
    pub sig: Option<Operand>,
    pub args: Vec<Operand>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct LoadFact {
    pub site: StmtId,
    pub def: Var,
    pub slot: Operand,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct StoreFact {
    pub site: StmtId,
    pub slot: Operand,
    pub value: Operand,
}

/// Environment values a variable can be read from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Source {
    Caller,
    CallValue,
    Timestamp,
    SelfAddress,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FactDb {
    /// C(x) = v, including folded arithmetic over constants.
    pub constant: BTreeMap<Var, Word>,
    /// EC(cs, target, sig) for calls carrying a signature operand.
    pub external_call: BTreeSet<(StmtId, Operand, Operand)>,
    /// CA(cs, arg, index), index counted from the first ABI argument.
    pub call_arg: BTreeSet<(StmtId, Operand, usize)>,
    /// Value-only calls: (cs, target, value).
    pub plain_call: BTreeSet<(StmtId, Operand, Operand)>,
    /// Controls(cond, s), interprocedural.
    pub controls: BTreeSet<(Var, StmtId)>,
    pub math_op: BTreeSet<OpFact>,
    pub func_arg: BTreeSet<(Selector, Var)>,
    /// DF as successor sets; always reflexive, closed after [`dataflow_closure`].
    pub dataflow: BTreeMap<Var, BTreeSet<Var>>,
    pub df_seeds: BTreeSet<(Var, Var)>,
    /// Closure of the value-preserving seeds only (PHI, AND, OR and private
    /// call/return binding): `x` reaches `y` without arithmetic in between.
    pub copy_flow: BTreeMap<Var, BTreeSet<Var>>,
    /// SF: statement -> public selectors reaching it.
    pub stmt_func: BTreeMap<StmtId, BTreeSet<Selector>>,
    /// LT/GT/EQ statements; see [`FactDb::comp`] for the relation itself.
    pub comp: BTreeSet<OpFact>,

    pub calls: Vec<CallSite>,
    pub loads: Vec<LoadFact>,
    pub stores: Vec<StoreFact>,
    pub sources: BTreeMap<Source, BTreeSet<Var>>,
    /// Variables holding `BALANCE` of the contract itself.
    pub self_balance: BTreeSet<Var>,
    /// (selector, returned variable) for public functions.
    pub returns: BTreeSet<(Selector, Var)>,
    /// Unreachable blocks as `function.block`.
    pub unreachable: Vec<String>,
}

impl FactDb {
    pub fn df(&self, from: &Var, to: &Var) -> bool {
        from == to || self.dataflow.get(from).is_some_and(|s| s.contains(to))
    }

    pub fn copies(&self, from: &Var, to: &Var) -> bool {
        from == to || self.copy_flow.get(from).is_some_and(|s| s.contains(to))
    }

    pub fn df_from<'a>(&'a self, from: &Var) -> impl Iterator<Item = &'a Var> + 'a {
        self.dataflow.get(from).into_iter().flatten()
    }

    /// Constant value of an operand: literals, or C(x).
    pub fn const_of(&self, op: &Operand) -> Option<Word> {
        match op {
            Operand::Var(v) => self.constant.get(v).copied(),
            _ => op.literal(),
        }
    }

    pub fn selectors(&self, s: &StmtId) -> impl Iterator<Item = Selector> + '_ {
        self.stmt_func.get(s).into_iter().flatten().copied()
    }

    pub fn source_vars(&self, src: Source) -> impl Iterator<Item = &Var> {
        self.sources.get(&src).into_iter().flatten()
    }

    /// Some variable read from `src` flows to `v`.
    pub fn flows_from_source(&self, src: Source, v: &Var) -> bool {
        self.source_vars(src).any(|c| self.df(c, v))
    }

    /// Comp(x, y): a comparison whose operands are reachable from `x` and
    /// `y` respectively (in either order).
    pub fn comp(&self, x: &Var, y: &Var) -> bool {
        let reach = |a: &Var, o: &Operand| o.var().is_some_and(|ov| self.df(a, ov));
        self.comp.iter().any(|c| {
            (reach(x, &c.lhs) && reach(y, &c.rhs)) || (reach(x, &c.rhs) && reach(y, &c.lhs))
        })
    }

    /// Comp(x, CALLER-def) for some CALLER-defined variable.
    pub fn compared_with_caller(&self, x: &Var) -> bool {
        self.source_vars(Source::Caller).any(|c| self.comp(x, c))
    }

    /// Statements controlled by a condition that `x` flows to.
    pub fn controlled_by(&self, x: &Var) -> BTreeSet<&StmtId> {
        self.controls.iter().filter(|(c, _)| self.df(x, c)).map(|(_, s)| s).collect()
    }

    pub fn value_controls(&self, x: &Var, s: &StmtId) -> bool {
        self.controls.iter().any(|(c, t)| t == s && self.df(x, c))
    }

    /// All DF pairs, reflexive ones included.
    pub fn df_pairs(&self) -> BTreeSet<(Var, Var)> {
        self.dataflow
            .iter()
            .flat_map(|(a, bs)| bs.iter().map(move |b| (a.clone(), b.clone())))
            .collect()
    }
}

/// Folds one arithmetic op over constants with 256-bit wrapping. Division
/// or modulo by zero is left unfolded.
pub fn fold_const(op: &Op, a: Word, b: Word) -> Option<Word> {
    Some(match op {
        Op::Add => a.overflowing_add(b).0,
        Op::Sub => a.overflowing_sub(b).0,
        Op::Mul => a.overflowing_mul(b).0,
        Op::Div => a.checked_div(b)?,
        Op::Mod => a.checked_rem(b)?,
        _ => return None,
    })
}

pub fn derive_facts(program: &IrProgram) -> FactDb {
    dataflow_closure(derive_base_facts(program), program)
}

pub fn derive_base_facts(program: &IrProgram) -> FactDb {
    let mut db = FactDb::default();
    for v in program.variables() {
        db.dataflow.insert(v.clone(), BTreeSet::from([v.clone()]));
    }

    // Constants to a fixpoint; SSA makes each assignment final.
    loop {
        let mut changed = false;
        for (_, s) in program.statements() {
            let Some(d) = &s.def else { continue };
            if db.constant.contains_key(d) {
                continue;
            }
            let value = match &s.op {
                Op::Const => s.args[0].literal(),
                op if op.is_arithmetic() => match (db.const_of(&s.args[0]), db.const_of(&s.args[1])) {
                    (Some(a), Some(b)) => fold_const(op, a, b),
                    _ => None,
                },
                _ => None,
            };
            if let Some(v) = value {
                db.constant.insert(d.clone(), v);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    for f in &program.functions {
        if let (Visibility::Public, Some(sel)) = (f.visibility, f.selector) {
            for p in &f.params {
                db.func_arg.insert((sel, p.clone()));
            }
        }
    }

    for (_, s) in program.statements() {
        match &s.op {
            Op::Call => {
                let (target, value, sig, args) = s.call_parts().expect("call statement");
                match sig {
                    Some(sig) => {
                        db.external_call.insert((s.id.clone(), target.clone(), sig.clone()));
                        for (i, a) in args.iter().enumerate() {
                            db.call_arg.insert((s.id.clone(), a.clone(), i));
                        }
                    }
                    None => {
                        db.plain_call.insert((s.id.clone(), target.clone(), value.clone()));
                    }
                }
                db.calls.push(CallSite {
                    site: s.id.clone(),
                    def: s.def.clone(),
                    target: target.clone(),
                    value: value.clone(),
                    sig: sig.cloned(),
                    args: args.to_vec(),
                });
            }
            Op::Sload => db.loads.push(LoadFact {
                site: s.id.clone(),
                def: s.def.clone().expect("SLOAD defines"),
                slot: s.args[0].clone(),
            }),
            Op::Sstore => db.stores.push(StoreFact {
                site: s.id.clone(),
                slot: s.args[0].clone(),
                value: s.args[1].clone(),
            }),
            op if op.is_arithmetic() || op.is_comparison() => {
                let fact = OpFact {
                    def: s.def.clone().expect("binary op defines"),
                    op: op.clone(),
                    lhs: s.args[0].clone(),
                    rhs: s.args[1].clone(),
                };
                if op.is_arithmetic() {
                    db.math_op.insert(fact);
                } else {
                    db.comp.insert(fact);
                }
            }
            _ => {}
        }
        let src = match s.op {
            Op::Caller => Some(Source::Caller),
            Op::CallValue => Some(Source::CallValue),
            Op::Timestamp => Some(Source::Timestamp),
            Op::Address => Some(Source::SelfAddress),
            _ => None,
        };
        if let (Some(src), Some(d)) = (src, &s.def) {
            db.sources.entry(src).or_default().insert(d.clone());
        }
    }

    let selectors = stmt_selectors(program);
    db.stmt_func = selectors;
    db.controls = interprocedural_controls(program, &mut db.unreachable);
    db.df_seeds = dataflow_seeds(program);

    for f in program.public_functions() {
        let Some(sel) = f.selector else { continue };
        for b in &f.blocks {
            if let Terminator::Return(vals) = &b.terminator {
                for v in vals.iter().filter_map(Operand::var) {
                    db.returns.insert((sel, v.clone()));
                }
            }
        }
    }
    db
}

/// Seed edges of DF. Every pure statement's operands flow to its def, PHI
/// included; CALLPRIVATE passes actuals to formals and the callee's
/// returned value back to the call's def. External call results are fresh.
pub fn dataflow_seeds(program: &IrProgram) -> BTreeSet<(Var, Var)> {
    seed_edges(program, false)
}

fn seed_edges(program: &IrProgram, copies_only: bool) -> BTreeSet<(Var, Var)> {
    let mut seeds = BTreeSet::new();
    // returned values of each private function
    let mut returned: BTreeMap<&str, Vec<&Var>> = BTreeMap::new();
    for f in &program.functions {
        for b in &f.blocks {
            if let Terminator::ReturnPrivate { values, .. } = &b.terminator {
                returned.entry(&f.name).or_default().extend(values.iter().filter_map(Operand::var));
            }
        }
    }
    for (_, s) in program.statements() {
        match &s.op {
            Op::Call | Op::Sstore => {}
            Op::CallPrivate(callee) => {
                let target = program.function(callee).expect("parser checked callees");
                for (actual, formal) in s.args.iter().zip(&target.params) {
                    if let Some(a) = actual.var() {
                        seeds.insert((a.clone(), formal.clone()));
                    }
                }
                if let Some(d) = &s.def {
                    for r in returned.get(callee.as_str()).into_iter().flatten() {
                        seeds.insert(((*r).clone(), d.clone()));
                    }
                }
            }
            op => {
                if copies_only && !matches!(op, Op::Phi | Op::And | Op::Or) {
                    continue;
                }
                if let Some(d) = &s.def {
                    for v in s.var_operands() {
                        seeds.insert((v.clone(), d.clone()));
                    }
                }
            }
        }
    }
    seeds
}

/// Reflexive-transitive closure of the seed edges.
pub fn dataflow_closure(mut db: FactDb, program: &IrProgram) -> FactDb {
    db.dataflow = closure(program, &db.df_seeds);
    db.copy_flow = closure(program, &seed_edges(program, true));

    // Balance reads of the contract's own address.
    db.self_balance.clear();
    for (_, s) in program.statements() {
        if s.op != Op::Balance {
            continue;
        }
        let own = match &s.args[0] {
            Operand::Var(v) => db.flows_from_source(Source::SelfAddress, v),
            lit => lit.literal() == Some(program.contract_address.to_word()),
        };
        if own {
            db.self_balance.insert(s.def.clone().expect("BALANCE defines"));
        }
    }
    db
}

fn closure(program: &IrProgram, seeds: &BTreeSet<(Var, Var)>) -> BTreeMap<Var, BTreeSet<Var>> {
    let mut succ: BTreeMap<&Var, Vec<&Var>> = BTreeMap::new();
    for (a, b) in seeds {
        succ.entry(a).or_default().push(b);
    }
    let mut out = BTreeMap::new();
    for v in program.variables() {
        let mut seen = BTreeSet::from([v.clone()]);
        let mut work = vec![v];
        while let Some(x) = work.pop() {
            for &y in succ.get(x).into_iter().flatten() {
                if seen.insert(y.clone()) {
                    work.push(y);
                }
            }
        }
        out.insert(v.clone(), seen);
    }
    out
}

/// SF: public selectors propagated through CALLPRIVATE edges to a fixpoint.
fn stmt_selectors(program: &IrProgram) -> BTreeMap<StmtId, BTreeSet<Selector>> {
    let n = program.functions.len();
    let mut reach: Vec<BTreeSet<Selector>> = vec![BTreeSet::new(); n];
    for (i, f) in program.functions.iter().enumerate() {
        if let Some(sel) = f.selector {
            reach[i].insert(sel);
        }
    }
    let edges = call_edges(program);
    let mut changed = true;
    while changed {
        changed = false;
        for &(caller, _, callee) in &edges {
            let add: Vec<Selector> = reach[caller].difference(&reach[callee]).copied().collect();
            if !add.is_empty() {
                reach[callee].extend(add);
                changed = true;
            }
        }
    }
    let mut out = BTreeMap::new();
    for (loc, s) in program.statements() {
        if !reach[loc.func].is_empty() {
            out.insert(s.id.clone(), reach[loc.func].clone());
        }
    }
    out
}

/// (caller function, call statement, callee function) for every CALLPRIVATE.
fn call_edges(program: &IrProgram) -> Vec<(usize, StmtId, usize)> {
    program
        .statements()
        .filter_map(|(loc, s)| match &s.op {
            Op::CallPrivate(callee) => {
                Some((loc.func, s.id.clone(), program.function_index(callee).expect("parser checked callees")))
            }
            _ => None,
        })
        .collect()
}

/// Intraprocedural control dependence, extended so a callee's statements
/// inherit the conditions controlling each of its call sites.
fn interprocedural_controls(program: &IrProgram, unreachable: &mut Vec<String>) -> BTreeSet<(Var, StmtId)> {
    let mut direct: BTreeMap<StmtId, BTreeSet<Var>> = BTreeMap::new();
    for f in &program.functions {
        let cfg = build_cfg(f);
        unreachable.extend(cfg.unreachable.iter().map(|b| format!("{}.{b}", f.name)));
        for (sid, deps) in cfg.control_deps {
            direct.insert(sid, deps.into_iter().map(|(v, _)| v).collect());
        }
    }
    let n = program.functions.len();
    let mut inherited: Vec<BTreeSet<Var>> = vec![BTreeSet::new(); n];
    let edges = call_edges(program);
    let mut changed = true;
    while changed {
        changed = false;
        for (caller, site, callee) in &edges {
            let mut incoming: BTreeSet<Var> = direct[site].clone();
            incoming.extend(inherited[*caller].iter().cloned());
            for v in incoming {
                if inherited[*callee].insert(v) {
                    changed = true;
                }
            }
        }
    }
    let mut controls = BTreeSet::new();
    for (loc, s) in program.statements() {
        for v in direct[&s.id].iter().chain(&inherited[loc.func]) {
            controls.insert((v.clone(), s.id.clone()));
        }
    }
    controls
}
