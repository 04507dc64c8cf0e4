use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::word::{Selector, Word};

/// Leaves of a symbolic expression.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Leaf {
    Caller,
    CallValue,
    Timestamp,
    BalanceSelf,
    SelfAddress,
    /// Storage content before the transaction.
    StoreInit(Word),
    Calldata(Selector, usize),
    Fresh(String),
}

impl fmt::Display for Leaf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Leaf::Caller => f.write_str("caller"),
            Leaf::CallValue => f.write_str("callvalue"),
            Leaf::Timestamp => f.write_str("timestamp"),
            Leaf::BalanceSelf => f.write_str("balance(self)"),
            Leaf::SelfAddress => f.write_str("address(self)"),
            Leaf::StoreInit(slot) => write!(f, "store({})", Num(slot)),
            Leaf::Calldata(sel, i) => write!(f, "calldata({sel},{i})"),
            Leaf::Fresh(name) => f.write_str(name),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Lt,
    Gt,
    Eq,
    And,
    Or,
}

impl BinOp {
    pub fn name(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::Div => "div",
            BinOp::Mod => "mod",
            BinOp::Lt => "lt",
            BinOp::Gt => "gt",
            BinOp::Eq => "eq",
            BinOp::And => "and",
            BinOp::Or => "or",
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(self, BinOp::Lt | BinOp::Gt | BinOp::Eq)
    }

    /// EVM semantics: wrapping arithmetic, x/0 = x%0 = 0, comparisons 0/1.
    pub fn apply(self, a: Word, b: Word) -> Word {
        let flag = |c: bool| if c { Word::one() } else { Word::zero() };
        match self {
            BinOp::Add => a.overflowing_add(b).0,
            BinOp::Sub => a.overflowing_sub(b).0,
            BinOp::Mul => a.overflowing_mul(b).0,
            BinOp::Div => a.checked_div(b).unwrap_or_default(),
            BinOp::Mod => a.checked_rem(b).unwrap_or_default(),
            BinOp::Lt => flag(a < b),
            BinOp::Gt => flag(a > b),
            BinOp::Eq => flag(a == b),
            BinOp::And => a & b,
            BinOp::Or => a | b,
        }
    }
}

/// Immutable expression tree with shared children.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SymExpr {
    Const(Word),
    Leaf(Leaf),
    Bin(BinOp, Arc<SymExpr>, Arc<SymExpr>),
    IsZero(Arc<SymExpr>),
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("unbound leaf `{0}`")]
    UnboundLeaf(String),
}

impl SymExpr {
    pub fn constant(w: impl Into<Word>) -> SymExpr {
        SymExpr::Const(w.into())
    }

    pub fn leaf(l: Leaf) -> SymExpr {
        SymExpr::Leaf(l)
    }

    /// Builds `op(a, b)`, folding when both sides are constant. Division or
    /// modulo by a constant zero folds to zero, so such nodes never exist.
    pub fn bin(op: BinOp, a: SymExpr, b: SymExpr) -> SymExpr {
        match (&a, &b) {
            (SymExpr::Const(x), SymExpr::Const(y)) => SymExpr::Const(op.apply(*x, *y)),
            (_, SymExpr::Const(z)) if z.is_zero() && matches!(op, BinOp::Div | BinOp::Mod) => {
                SymExpr::Const(Word::zero())
            }
            _ => SymExpr::Bin(op, Arc::new(a), Arc::new(b)),
        }
    }

    pub fn is_zero(a: SymExpr) -> SymExpr {
        match a {
            SymExpr::Const(x) => SymExpr::Const(if x.is_zero() { Word::one() } else { Word::zero() }),
            other => SymExpr::IsZero(Arc::new(other)),
        }
    }

    pub fn as_const(&self) -> Option<Word> {
        match self {
            SymExpr::Const(w) => Some(*w),
            _ => None,
        }
    }

    pub fn as_leaf(&self) -> Option<&Leaf> {
        match self {
            SymExpr::Leaf(l) => Some(l),
            _ => None,
        }
    }

    pub fn contains_leaf(&self, pred: &dyn Fn(&Leaf) -> bool) -> bool {
        match self {
            SymExpr::Const(_) => false,
            SymExpr::Leaf(l) => pred(l),
            SymExpr::Bin(_, a, b) => a.contains_leaf(pred) || b.contains_leaf(pred),
            SymExpr::IsZero(a) => a.contains_leaf(pred),
        }
    }

    pub fn leaves(&self) -> Vec<&Leaf> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a Leaf>) {
        match self {
            SymExpr::Const(_) => {}
            SymExpr::Leaf(l) => out.push(l),
            SymExpr::Bin(_, a, b) => {
                a.collect_leaves(out);
                b.collect_leaves(out);
            }
            SymExpr::IsZero(a) => a.collect_leaves(out),
        }
    }

    /// Replaces leaves for which `f` returns a value, refolding constants.
    pub fn substitute(&self, f: &dyn Fn(&Leaf) -> Option<SymExpr>) -> SymExpr {
        match self {
            SymExpr::Const(_) => self.clone(),
            SymExpr::Leaf(l) => f(l).unwrap_or_else(|| self.clone()),
            SymExpr::Bin(op, a, b) => SymExpr::bin(*op, a.substitute(f), b.substitute(f)),
            SymExpr::IsZero(a) => SymExpr::is_zero(a.substitute(f)),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            SymExpr::Const(_) | SymExpr::Leaf(_) => 1,
            SymExpr::Bin(_, a, b) => 1 + a.depth().max(b.depth()),
            SymExpr::IsZero(a) => 1 + a.depth(),
        }
    }
}

/// Evaluates `expr` with every leaf bound, under EVM semantics.
pub fn eval_concrete(expr: &SymExpr, bindings: &BTreeMap<Leaf, Word>) -> Result<Word, EvalError> {
    match expr {
        SymExpr::Const(w) => Ok(*w),
        SymExpr::Leaf(l) => bindings.get(l).copied().ok_or_else(|| EvalError::UnboundLeaf(l.to_string())),
        SymExpr::Bin(op, a, b) => Ok(op.apply(eval_concrete(a, bindings)?, eval_concrete(b, bindings)?)),
        SymExpr::IsZero(a) => {
            Ok(if eval_concrete(a, bindings)?.is_zero() { Word::one() } else { Word::zero() })
        }
    }
}

/// Decimal below 2^64, hex above.
struct Num<'a>(&'a Word);

impl fmt::Display for Num<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.bits() <= 64 {
            write!(f, "{}", self.0.as_u64())
        } else {
            write!(f, "{:#x}", self.0)
        }
    }
}

impl fmt::Display for SymExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymExpr::Const(w) => write!(f, "{}", Num(w)),
            SymExpr::Leaf(l) => write!(f, "{l}"),
            SymExpr::Bin(op, a, b) => write!(f, "{}({a}, {b})", op.name()),
            SymExpr::IsZero(a) => write!(f, "iszero({a})"),
        }
    }
}

impl serde::Serialize for SymExpr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl serde::Serialize for Leaf {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}
