use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::expr::{BinOp, Leaf, SymExpr};
use super::solver::{check_feasible, Feasibility};
use crate::graphs::PlanEntry;
use crate::infer::{TRANSFER_FROM_SIG, TRANSFER_SIG};
use crate::ir::{build_cfg, Cfg, IrProgram, Op, Operand, StmtId, Terminator, Var};
use crate::word::{Selector, Word};

const MAX_CALL_DEPTH: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Limits {
    /// Blocks visited per path.
    pub max_depth: usize,
    /// Back-edge traversals per loop activation.
    pub loop_bound: u32,
    /// Paths (initial plus forks) per function.
    pub max_states: usize,
}

impl Default for Limits {
    fn default() -> Limits {
        Limits { max_depth: 64, loop_bound: 3, max_states: 512 }
    }
}

impl Limits {
    pub fn validate(&self) -> Result<(), ExecError> {
        if self.max_depth == 0 || self.loop_bound == 0 || self.max_states == 0 {
            return Err(ExecError::InvalidLimits(*self));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ExecError {
    #[error("no public function with selector {0}")]
    UnknownSelector(Selector),
    #[error("limits must be positive: {0:?}")]
    InvalidLimits(Limits),
}

/// Symbolic state captured just before a checkpoint statement runs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckpointState {
    pub site: StmtId,
    pub selector: Selector,
    /// `recipient`/`amount` for transfers, `slot`/`value` for stores.
    pub captured: BTreeMap<String, SymExpr>,
    pub path: Vec<SymExpr>,
    pub feasibility: Feasibility,
}

impl CheckpointState {
    pub fn get(&self, key: &str) -> Option<&SymExpr> {
        self.captured.get(key)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExecResult {
    pub selector: Selector,
    pub checkpoints: Vec<CheckpointState>,
    pub states: usize,
    /// The state budget stopped exploration; results are partial.
    pub budget_exceeded: bool,
    /// Paths abandoned at the depth or call-depth limit.
    pub cut_paths: usize,
    pub completed_paths: usize,
}

#[derive(Clone, Debug)]
struct Frame {
    func: usize,
    block: usize,
    idx: usize,
    /// Variable -> (value, definition order).
    env: BTreeMap<Var, (SymExpr, u64)>,
    ret_def: Option<Var>,
    loop_counts: BTreeMap<usize, u32>,
    exit_mode: BTreeSet<usize>,
}

#[derive(Clone, Debug)]
struct State {
    frames: Vec<Frame>,
    storage: BTreeMap<Word, SymExpr>,
    path: Vec<SymExpr>,
    depth: usize,
    seq: u64,
}

enum Step {
    Continue,
    Fork(State),
    Done,
    Cut,
}

struct Executor<'a> {
    program: &'a IrProgram,
    cfgs: Vec<Cfg>,
    loops: Vec<BTreeMap<usize, BTreeSet<usize>>>,
    limits: Limits,
    checkpoints: &'a BTreeSet<StmtId>,
    fixed: Option<&'a BTreeMap<Word, Word>>,
    selector: Selector,
    out: Vec<CheckpointState>,
}

/// Explores the public function `selector` depth-first, capturing state at
/// the plan's checkpoints. `fixed` gives known values for storage slots the
/// program never writes; they are used only to prune infeasible paths.
pub fn execute_function(
    program: &IrProgram,
    selector: Selector,
    plan: &PlanEntry,
    limits: Limits,
    fixed: Option<&BTreeMap<Word, Word>>,
) -> Result<ExecResult, ExecError> {
    limits.validate()?;
    let func = program
        .functions
        .iter()
        .position(|f| f.selector == Some(selector))
        .ok_or(ExecError::UnknownSelector(selector))?;
    let cfgs: Vec<Cfg> = program.functions.iter().map(build_cfg).collect();
    let loops = cfgs
        .iter()
        .map(|cfg| {
            (0..cfg.blocks.len())
                .filter(|h| cfg.preds[*h].iter().any(|p| cfg.is_back_edge(*p, *h)))
                .map(|h| (h, cfg.natural_loop(h)))
                .collect()
        })
        .collect();
    let mut ex = Executor {
        program,
        cfgs,
        loops,
        limits,
        checkpoints: &plan.checkpoints,
        fixed,
        selector,
        out: Vec::new(),
    };

    let mut env = BTreeMap::new();
    for (i, p) in program.functions[func].params.iter().enumerate() {
        env.insert(p.clone(), (SymExpr::leaf(Leaf::Calldata(selector, i)), 0));
    }
    let init = State {
        frames: vec![Frame {
            func,
            block: 0,
            idx: 0,
            env,
            ret_def: None,
            loop_counts: BTreeMap::new(),
            exit_mode: BTreeSet::new(),
        }],
        storage: BTreeMap::new(),
        path: Vec::new(),
        depth: 1,
        seq: 1,
    };

    let mut result = ExecResult {
        selector,
        checkpoints: Vec::new(),
        states: 1,
        budget_exceeded: false,
        cut_paths: 0,
        completed_paths: 0,
    };
    let mut work = vec![init];
    while let Some(mut st) = work.pop() {
        loop {
            match ex.step(&mut st) {
                Step::Continue => {}
                Step::Fork(other) => {
                    if result.states < limits.max_states {
                        result.states += 1;
                        work.push(other);
                    } else {
                        result.budget_exceeded = true;
                    }
                }
                Step::Done => {
                    result.completed_paths += 1;
                    break;
                }
                Step::Cut => {
                    result.cut_paths += 1;
                    break;
                }
            }
        }
    }
    result.checkpoints = ex.out;
    Ok(result)
}

impl Executor<'_> {
    fn feasibility(&self, path: &[SymExpr]) -> Feasibility {
        match self.fixed {
            Some(fixed) if !fixed.is_empty() => {
                let subst = |l: &Leaf| match l {
                    Leaf::StoreInit(s) => fixed.get(s).map(|w| SymExpr::Const(*w)),
                    _ => None,
                };
                let p: Vec<SymExpr> = path.iter().map(|c| c.substitute(&subst)).collect();
                check_feasible(&p)
            }
            _ => check_feasible(path),
        }
    }

    fn operand(&self, frame: &Frame, op: &Operand) -> SymExpr {
        match op {
            Operand::Var(v) => frame
                .env
                .get(v)
                .map(|(e, _)| e.clone())
                .unwrap_or_else(|| SymExpr::leaf(Leaf::Fresh(format!("undef:{v}")))),
            lit => SymExpr::Const(lit.literal().expect("literal operand")),
        }
    }

    fn capture(&mut self, st: &State, sid: &StmtId, op: &Op, args: &[Operand]) {
        let frame = st.frames.last().expect("live frame");
        let val = |i: usize| self.operand(frame, &args[i]);
        let mut captured = BTreeMap::new();
        match op {
            Op::Call => {
                let sig = args.get(2).map(|a| self.operand(frame, a)).and_then(|e| e.as_const());
                let (r, a) = match sig {
                    None if args.len() == 2 => (Some(0), Some(1)),
                    Some(s) if s == Word::from(TRANSFER_SIG) && args.len() >= 5 => (Some(3), Some(4)),
                    Some(s) if s == Word::from(TRANSFER_FROM_SIG) && args.len() >= 6 => (Some(4), Some(5)),
                    _ => (None, None),
                };
                if let (Some(r), Some(a)) = (r, a) {
                    captured.insert("recipient".to_string(), val(r));
                    captured.insert("amount".to_string(), val(a));
                } else {
                    captured.insert("target".to_string(), val(0));
                    captured.insert("value".to_string(), val(1));
                }
            }
            Op::Sstore => {
                captured.insert("slot".to_string(), val(0));
                captured.insert("value".to_string(), val(1));
            }
            _ => {
                for i in 0..args.len() {
                    captured.insert(format!("arg{i}"), val(i));
                }
            }
        }
        self.out.push(CheckpointState {
            site: sid.clone(),
            selector: self.selector,
            captured,
            path: st.path.clone(),
            feasibility: self.feasibility(&st.path),
        });
    }

    fn define(st: &mut State, var: &Var, e: SymExpr) {
        st.seq += 1;
        let seq = st.seq;
        st.frames.last_mut().expect("live frame").env.insert(var.clone(), (e, seq));
    }

    /// Moves the top frame to block `to`, maintaining loop counters.
    fn goto(&self, st: &mut State, to: usize) -> bool {
        let frame = st.frames.last_mut().expect("live frame");
        let cfg = &self.cfgs[frame.func];
        let loops = &self.loops[frame.func];
        let from = frame.block;
        // leaving a loop resets its activation
        let left: Vec<usize> =
            frame.loop_counts.keys().copied().filter(|h| !loops[h].contains(&to)).collect();
        for h in left {
            frame.loop_counts.remove(&h);
            frame.exit_mode.remove(&h);
        }
        if cfg.is_back_edge(from, to) {
            let n = frame.loop_counts.entry(to).or_insert(0);
            *n += 1;
            if *n >= self.limits.loop_bound {
                frame.exit_mode.insert(to);
            }
        }
        frame.block = to;
        frame.idx = 0;
        st.depth += 1;
        st.depth <= self.limits.max_depth
    }

    fn step(&mut self, st: &mut State) -> Step {
        let program = self.program;
        let frame = st.frames.last().expect("live frame");
        let func = &program.functions[frame.func];
        let block = &func.blocks[frame.block];

        if frame.idx < block.statements.len() {
            let s = &block.statements[frame.idx];
            if self.checkpoints.contains(&s.id) {
                self.capture(st, &s.id, &s.op, &s.args);
            }
            let frame = st.frames.last().expect("live frame");
            let vals: Vec<SymExpr> = s.args.iter().map(|a| self.operand(frame, a)).collect();
            let phi = (s.op == Op::Phi).then(|| self.phi(frame, &s.args));
            let arg = |i: usize| vals[i].clone();
            let value = match &s.op {
                Op::Const => Some(arg(0)),
                Op::Sload => Some(match arg(0).as_const() {
                    Some(slot) => {
                        st.storage.get(&slot).cloned().unwrap_or_else(|| SymExpr::leaf(Leaf::StoreInit(slot)))
                    }
                    None => SymExpr::leaf(Leaf::Fresh(format!("sload@{}", s.id))),
                }),
                Op::Sstore => {
                    if let Some(slot) = arg(0).as_const() {
                        let v = arg(1);
                        st.storage.insert(slot, v);
                    }
                    None
                }
                Op::Caller => Some(SymExpr::leaf(Leaf::Caller)),
                Op::CallValue => Some(SymExpr::leaf(Leaf::CallValue)),
                Op::Timestamp => Some(SymExpr::leaf(Leaf::Timestamp)),
                Op::Address => Some(SymExpr::leaf(Leaf::SelfAddress)),
                Op::Balance => {
                    let a = arg(0);
                    let own = a == SymExpr::leaf(Leaf::SelfAddress)
                        || a.as_const() == Some(program.contract_address.to_word());
                    Some(if own {
                        SymExpr::leaf(Leaf::BalanceSelf)
                    } else {
                        SymExpr::leaf(Leaf::Fresh(format!("balance@{}", s.id)))
                    })
                }
                Op::IsZero => Some(SymExpr::is_zero(arg(0))),
                Op::Phi => phi,
                Op::Call => s.def.as_ref().map(|_| SymExpr::leaf(Leaf::Fresh(format!("ret@{}", s.id)))),
                Op::CallPrivate(callee) => {
                    if st.frames.len() >= MAX_CALL_DEPTH {
                        return Step::Cut;
                    }
                    let callee_idx = program.function_index(callee).expect("parser checked callees");
                    let target = &program.functions[callee_idx];
                    let mut env = BTreeMap::new();
                    for (i, p) in target.params.iter().enumerate() {
                        let v = vals.get(i).cloned();
                        let v = v.unwrap_or_else(|| SymExpr::leaf(Leaf::Fresh(format!("arg@{}:{i}", s.id))));
                        env.insert(p.clone(), (v, st.seq));
                    }
                    let ret_def = s.def.clone();
                    st.frames.last_mut().expect("live frame").idx += 1;
                    st.frames.push(Frame {
                        func: callee_idx,
                        block: 0,
                        idx: 0,
                        env,
                        ret_def,
                        loop_counts: BTreeMap::new(),
                        exit_mode: BTreeSet::new(),
                    });
                    st.depth += 1;
                    return if st.depth <= self.limits.max_depth { Step::Continue } else { Step::Cut };
                }
                op => {
                    let bop = match op {
                        Op::Add => BinOp::Add,
                        Op::Sub => BinOp::Sub,
                        Op::Mul => BinOp::Mul,
                        Op::Div => BinOp::Div,
                        Op::Mod => BinOp::Mod,
                        Op::Lt => BinOp::Lt,
                        Op::Gt => BinOp::Gt,
                        Op::Eq => BinOp::Eq,
                        Op::And => BinOp::And,
                        Op::Or => BinOp::Or,
                        _ => unreachable!("all opcodes handled"),
                    };
                    Some(SymExpr::bin(bop, arg(0), arg(1)))
                }
            };
            if let (Some(d), Some(v)) = (&s.def, value) {
                Self::define(st, d, v);
            }
            st.frames.last_mut().expect("live frame").idx += 1;
            return Step::Continue;
        }

        match &block.terminator {
            Terminator::Jump(t) => {
                let to = func.block_index(t).expect("parser checked targets");
                if self.goto(st, to) {
                    Step::Continue
                } else {
                    Step::Cut
                }
            }
            Terminator::JumpI { cond, then_target, else_target } => {
                let t = func.block_index(then_target).expect("parser checked targets");
                let e = func.block_index(else_target).expect("parser checked targets");
                let frame = st.frames.last().expect("live frame");
                // a loop at its bound leaves through its exit edge
                let loops = &self.loops[frame.func];
                let exit = frame.exit_mode.iter().find_map(|h| {
                    let body = &loops[h];
                    (body.contains(&frame.block) && body.contains(&t) != body.contains(&e))
                        .then(|| if body.contains(&t) { e } else { t })
                });
                if let Some(out) = exit {
                    return if self.goto(st, out) { Step::Continue } else { Step::Cut };
                }
                let c = self.operand(frame, &Operand::Var(cond.clone()));
                if let Some(k) = c.as_const() {
                    let to = if k.is_zero() { e } else { t };
                    return if self.goto(st, to) { Step::Continue } else { Step::Cut };
                }
                let mut other = st.clone();
                other.path.push(SymExpr::is_zero(c.clone()));
                st.path.push(c);
                let then_ok = self.feasibility(&st.path).possible();
                let else_ok = self.feasibility(&other.path).possible();
                match (then_ok, else_ok) {
                    (false, false) => Step::Done,
                    (true, false) => {
                        if self.goto(st, t) {
                            Step::Continue
                        } else {
                            Step::Cut
                        }
                    }
                    (false, true) => {
                        *st = other;
                        if self.goto(st, e) {
                            Step::Continue
                        } else {
                            Step::Cut
                        }
                    }
                    (true, true) => {
                        if !self.goto(&mut other, e) {
                            // the sibling is already over budget; count it as cut
                            other.frames.clear();
                        }
                        if !self.goto(st, t) {
                            return Step::Cut;
                        }
                        if other.frames.is_empty() {
                            Step::Continue
                        } else {
                            Step::Fork(other)
                        }
                    }
                }
            }
            Terminator::ReturnPrivate { values, .. } if st.frames.len() > 1 => {
                let ret = values.first().map(|v| self.operand(frame, v));
                let done = st.frames.pop().expect("live frame");
                if let (Some(d), Some(v)) = (done.ret_def, ret) {
                    Self::define(st, &d, v);
                }
                Step::Continue
            }
            Terminator::Return(_) | Terminator::ReturnPrivate { .. } | Terminator::Revert | Terminator::Stop => {
                Step::Done
            }
        }
    }

    /// PHI(in, out): a loop header at its bound takes the out-loop value;
    /// otherwise the most recently defined operand wins, which is the
    /// in-loop value on every iteration after the first.
    fn phi(&self, frame: &Frame, args: &[Operand]) -> SymExpr {
        if frame.exit_mode.contains(&frame.block) {
            return self.operand(frame, &args[1]);
        }
        let seq = |o: &Operand| match o {
            Operand::Var(v) => frame.env.get(v).map(|(_, s)| *s),
            _ => Some(0),
        };
        match (seq(&args[0]), seq(&args[1])) {
            (Some(a), Some(b)) if a >= b => self.operand(frame, &args[0]),
            (Some(_), None) => self.operand(frame, &args[0]),
            (_, Some(_)) => self.operand(frame, &args[1]),
            (None, None) => self.operand(frame, &args[0]),
        }
    }
}
