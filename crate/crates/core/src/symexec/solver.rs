//! Feasibility of path constraints over a small decidable fragment.
//!
//! Each constraint must be nonzero. Constraints that mention a single leaf
//! through an affine term `leaf ± k` compared against constants (and
//! `iszero`/`or`/boolean `and` combinations of those) are turned into exact
//! value sets for that leaf; everything else is outside the fragment.

use std::collections::BTreeMap;

use serde::Serialize;

use super::expr::{BinOp, Leaf, SymExpr};
use crate::word::Word;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Feasibility {
    Feasible,
    Infeasible,
    Unknown,
}

impl Feasibility {
    /// Unknown counts as feasible downstream.
    pub fn possible(self) -> bool {
        self != Feasibility::Infeasible
    }
}

/// Sorted, disjoint, non-adjacent inclusive ranges of 256-bit values.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntervalSet(Vec<(Word, Word)>);

impl IntervalSet {
    pub fn empty() -> IntervalSet {
        IntervalSet(Vec::new())
    }

    pub fn full() -> IntervalSet {
        IntervalSet(vec![(Word::zero(), Word::MAX)])
    }

    pub fn range(lo: Word, hi: Word) -> IntervalSet {
        if lo > hi {
            IntervalSet::empty()
        } else {
            IntervalSet(vec![(lo, hi)])
        }
    }

    pub fn point(w: Word) -> IntervalSet {
        IntervalSet::range(w, w)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, w: Word) -> bool {
        self.0.iter().any(|(a, b)| *a <= w && w <= *b)
    }

    pub fn min(&self) -> Option<Word> {
        self.0.first().map(|r| r.0)
    }

    pub fn ranges(&self) -> &[(Word, Word)] {
        &self.0
    }

    fn normalize(mut v: Vec<(Word, Word)>) -> IntervalSet {
        v.sort();
        let mut out: Vec<(Word, Word)> = Vec::with_capacity(v.len());
        for (a, b) in v {
            if let Some(last) = out.last_mut() {
                if last.1 == Word::MAX || a <= last.1 + 1 {
                    last.1 = last.1.max(b);
                    continue;
                }
            }
            out.push((a, b));
        }
        IntervalSet(out)
    }

    pub fn union(&self, other: &IntervalSet) -> IntervalSet {
        IntervalSet::normalize(self.0.iter().chain(&other.0).copied().collect())
    }

    pub fn intersect(&self, other: &IntervalSet) -> IntervalSet {
        let mut out = Vec::new();
        for (a, b) in &self.0 {
            for (c, d) in &other.0 {
                let lo = (*a).max(*c);
                let hi = (*b).min(*d);
                if lo <= hi {
                    out.push((lo, hi));
                }
            }
        }
        IntervalSet::normalize(out)
    }

    pub fn complement(&self) -> IntervalSet {
        let mut out = Vec::new();
        let mut next = Some(Word::zero());
        for (a, b) in &self.0 {
            if let Some(n) = next {
                if n < *a {
                    out.push((n, *a - 1));
                }
            }
            next = if *b == Word::MAX { None } else { Some(*b + 1) };
        }
        if let Some(n) = next {
            out.push((n, Word::MAX));
        }
        IntervalSet(out)
    }

    /// `{ (x - k) mod 2^256 : x in self }`.
    pub fn shift_down(&self, k: Word) -> IntervalSet {
        let mut out = Vec::new();
        for (a, b) in &self.0 {
            let lo = a.overflowing_sub(k).0;
            let hi = b.overflowing_sub(k).0;
            if lo <= hi {
                out.push((lo, hi));
            } else {
                out.push((lo, Word::MAX));
                out.push((Word::zero(), hi));
            }
        }
        IntervalSet::normalize(out)
    }
}

/// `leaf + offset` (mod 2^256).
fn affine(e: &SymExpr) -> Option<(&Leaf, Word)> {
    match e {
        SymExpr::Leaf(l) => Some((l, Word::zero())),
        SymExpr::Bin(BinOp::Add, a, b) => match (affine(a), b.as_const(), a.as_const(), affine(b)) {
            (Some((l, k)), Some(c), _, _) | (_, _, Some(c), Some((l, k))) => Some((l, k.overflowing_add(c).0)),
            _ => None,
        },
        SymExpr::Bin(BinOp::Sub, a, b) => {
            let (l, k) = affine(a)?;
            Some((l, k.overflowing_sub(b.as_const()?).0))
        }
        _ => None,
    }
}

/// Result of analysing one expression: constant truth, or the set of
/// values of a single leaf for which it is nonzero.
enum Truth<'a> {
    Ground(bool),
    Leaf(&'a Leaf, IntervalSet),
}

fn negate(t: Truth<'_>) -> Truth<'_> {
    match t {
        Truth::Ground(b) => Truth::Ground(!b),
        Truth::Leaf(l, s) => Truth::Leaf(l, s.complement()),
    }
}

fn combine<'a>(a: Truth<'a>, b: Truth<'a>, and: bool) -> Option<Truth<'a>> {
    Some(match (a, b) {
        (Truth::Ground(x), Truth::Ground(y)) => Truth::Ground(if and { x && y } else { x || y }),
        (Truth::Ground(x), t) | (t, Truth::Ground(x)) => match (and, x) {
            (true, true) | (false, false) => t,
            (true, false) => Truth::Ground(false),
            (false, true) => Truth::Ground(true),
        },
        (Truth::Leaf(l1, s1), Truth::Leaf(l2, s2)) => {
            if l1 != l2 {
                return None;
            }
            Truth::Leaf(l1, if and { s1.intersect(&s2) } else { s1.union(&s2) })
        }
    })
}

/// Whether `e` only ever evaluates to 0 or 1.
fn boolean(e: &SymExpr) -> bool {
    match e {
        SymExpr::Const(w) => *w <= Word::one(),
        SymExpr::IsZero(_) => true,
        SymExpr::Bin(op, a, b) => {
            op.is_comparison() || (matches!(op, BinOp::And | BinOp::Or) && boolean(a) && boolean(b))
        }
        SymExpr::Leaf(_) => false,
    }
}

/// Values of the affine side's leaf for which `affine cmp k` holds, given
/// the set of values of the affine term that satisfy it.
fn preimage<'a>(term: &'a SymExpr, values: IntervalSet) -> Option<Truth<'a>> {
    let (l, k) = affine(term)?;
    Some(Truth::Leaf(l, values.shift_down(k)))
}

fn truth(e: &SymExpr) -> Option<Truth<'_>> {
    match e {
        SymExpr::Const(w) => Some(Truth::Ground(!w.is_zero())),
        SymExpr::IsZero(a) => truth(a).map(negate),
        SymExpr::Bin(BinOp::Or, a, b) => combine(truth(a)?, truth(b)?, false),
        SymExpr::Bin(BinOp::And, a, b) if boolean(a) && boolean(b) => combine(truth(a)?, truth(b)?, true),
        SymExpr::Bin(op @ (BinOp::Lt | BinOp::Gt | BinOp::Eq), a, b) => {
            let (term, k, flipped) = match (a.as_const(), b.as_const()) {
                (None, Some(k)) => (&**a, k, false),
                (Some(k), None) => (&**b, k, true),
                _ => return None,
            };
            // values of `term` satisfying the comparison
            let set = match (op, flipped) {
                (BinOp::Eq, _) => IntervalSet::point(k),
                (BinOp::Lt, false) | (BinOp::Gt, true) => {
                    if k.is_zero() {
                        IntervalSet::empty()
                    } else {
                        IntervalSet::range(Word::zero(), k - 1)
                    }
                }
                _ => {
                    if k == Word::MAX {
                        IntervalSet::empty()
                    } else {
                        IntervalSet::range(k + 1, Word::MAX)
                    }
                }
            };
            preimage(term, set)
        }
        other => preimage(other, IntervalSet::range(Word::one(), Word::MAX)),
    }
}

/// Decides the conjunction `path[i] != 0` for all `i`, returning a witness
/// assignment for the constrained leaves when feasible.
pub fn solve(path: &[SymExpr]) -> (Feasibility, Option<BTreeMap<Leaf, Word>>) {
    let mut sets: BTreeMap<&Leaf, IntervalSet> = BTreeMap::new();
    let mut unknown = false;
    for c in path {
        match truth(c) {
            Some(Truth::Ground(true)) => {}
            Some(Truth::Ground(false)) => return (Feasibility::Infeasible, None),
            Some(Truth::Leaf(l, s)) => {
                let cur = sets.entry(l).or_insert_with(IntervalSet::full);
                *cur = cur.intersect(&s);
                if cur.is_empty() {
                    return (Feasibility::Infeasible, None);
                }
            }
            None => unknown = true,
        }
    }
    if unknown {
        return (Feasibility::Unknown, None);
    }
    let witness = sets.into_iter().map(|(l, s)| (l.clone(), s.min().expect("nonempty"))).collect();
    (Feasibility::Feasible, Some(witness))
}

pub fn check_feasible(path: &[SymExpr]) -> Feasibility {
    solve(path).0
}
