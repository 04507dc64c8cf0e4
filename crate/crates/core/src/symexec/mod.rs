//! Bounded symbolic execution of planned functions and the contract
//! semantics summarised from the captured states.

mod exec;
mod expr;
mod solver;
mod summary;

pub use exec::{execute_function, CheckpointState, ExecError, ExecResult, Limits};
pub use expr::{eval_concrete, BinOp, EvalError, Leaf, SymExpr};
pub use solver::{check_feasible, solve, Feasibility, IntervalSet};
pub use summary::*;
