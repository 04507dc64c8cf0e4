//! Textual SSA three-address IR for decompiled contracts.
//!
//! A program is a list of functions; each function is a list of blocks ending
//! in exactly one terminator. Variables are program-global SSA names, so a
//! variable is defined by at most one statement (or parameter) in the whole
//! program. See [`parse_ir`] for the grammar.

mod cfg;
mod parse;
mod print;

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

pub use cfg::{build_cfg, dominators, Cfg};
pub use parse::{parse_ir, ParseError};
pub use print::print_ir;

use crate::word::{Address, Selector, Word};

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub String);

impl Var {
    pub fn new(name: impl Into<String>) -> Var {
        Var(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for Var {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

/// Statement identifier, rendered `<function>.<block>.<label>`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StmtId(pub String);

impl StmtId {
    pub fn new(function: &str, block: &str, label: &str) -> StmtId {
        StmtId(format!("{function}.{block}.{label}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for StmtId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for StmtId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for StmtId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Operand {
    Var(Var),
    Lit(Word),
    /// `slot(n)` sugar; semantically identical to a literal.
    Slot(Word),
}

impl Operand {
    pub fn var(&self) -> Option<&Var> {
        match self {
            Operand::Var(v) => Some(v),
            _ => None,
        }
    }

    pub fn literal(&self) -> Option<Word> {
        match self {
            Operand::Lit(w) | Operand::Slot(w) => Some(*w),
            Operand::Var(_) => None,
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Var(v) => write!(f, "{v}"),
            Operand::Lit(w) => write!(f, "{:#x}", w),
            Operand::Slot(w) => write!(f, "slot({})", w),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Op {
    Const,
    Sload,
    Sstore,
    Caller,
    CallValue,
    Timestamp,
    /// Address of the executing contract.
    Address,
    Balance,
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Lt,
    Gt,
    Eq,
    IsZero,
    And,
    Or,
    Phi,
    CallPrivate(String),
    Call,
}

impl Op {
    pub fn mnemonic(&self) -> &'static str {
        match self {
            Op::Const => "CONST",
            Op::Sload => "SLOAD",
            Op::Sstore => "SSTORE",
            Op::Caller => "CALLER",
            Op::CallValue => "CALLVALUE",
            Op::Timestamp => "TIMESTAMP",
            Op::Address => "ADDRESS",
            Op::Balance => "BALANCE",
            Op::Add => "ADD",
            Op::Sub => "SUB",
            Op::Mul => "MUL",
            Op::Div => "DIV",
            Op::Mod => "MOD",
            Op::Lt => "LT",
            Op::Gt => "GT",
            Op::Eq => "EQ",
            Op::IsZero => "ISZERO",
            Op::And => "AND",
            Op::Or => "OR",
            Op::Phi => "PHI",
            Op::CallPrivate(_) => "CALLPRIVATE",
            Op::Call => "CALL",
        }
    }

    pub fn is_arithmetic(&self) -> bool {
        matches!(self, Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Mod)
    }

    pub fn is_comparison(&self) -> bool {
        matches!(self, Op::Lt | Op::Gt | Op::Eq)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Statement {
    pub id: StmtId,
    pub label: String,
    pub def: Option<Var>,
    pub op: Op,
    pub args: Vec<Operand>,
}

impl Statement {
    pub fn var_operands(&self) -> impl Iterator<Item = &Var> {
        self.args.iter().filter_map(Operand::var)
    }

    /// For `CALL`: (target, value, sig, abi args).
    pub fn call_parts(&self) -> Option<(&Operand, &Operand, Option<&Operand>, &[Operand])> {
        if self.op != Op::Call {
            return None;
        }
        let sig = self.args.get(2);
        let abi = if self.args.len() > 3 { &self.args[3..] } else { &[] };
        Some((&self.args[0], &self.args[1], sig, abi))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Terminator {
    Jump(String),
    JumpI { cond: Var, then_target: String, else_target: String },
    Return(Vec<Operand>),
    ReturnPrivate { target: Operand, values: Vec<Operand> },
    Revert,
    Stop,
}

impl Terminator {
    pub fn targets(&self) -> Vec<&str> {
        match self {
            Terminator::Jump(t) => vec![t.as_str()],
            Terminator::JumpI { then_target, else_target, .. } => {
                vec![then_target.as_str(), else_target.as_str()]
            }
            _ => Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IrBlock {
    pub id: String,
    pub statements: Vec<Statement>,
    pub terminator: Terminator,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Visibility {
    Public,
    Private,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IrFunction {
    pub name: String,
    pub visibility: Visibility,
    pub selector: Option<Selector>,
    pub params: Vec<Var>,
    pub blocks: Vec<IrBlock>,
}

impl IrFunction {
    pub fn entry(&self) -> &str {
        &self.blocks[0].id
    }

    pub fn block_index(&self, id: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.id == id)
    }

    pub fn statements(&self) -> impl Iterator<Item = &Statement> {
        self.blocks.iter().flat_map(|b| b.statements.iter())
    }
}

/// Position of a statement: (function, block, statement) indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Loc {
    pub func: usize,
    pub block: usize,
    pub stmt: usize,
}

#[derive(Clone, Debug)]
pub struct IrProgram {
    pub contract_address: Address,
    pub functions: Vec<IrFunction>,
    stmt_index: BTreeMap<StmtId, Loc>,
    def_index: BTreeMap<Var, DefSite>,
}

/// Where a variable gets its value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DefSite {
    Param { func: usize, index: usize },
    Stmt(Loc),
}

impl PartialEq for IrProgram {
    fn eq(&self, other: &Self) -> bool {
        self.contract_address == other.contract_address && self.functions == other.functions
    }
}

impl IrProgram {
    /// Builds the lookup indexes. Callers must have validated the program.
    pub(crate) fn from_parts(contract_address: Address, functions: Vec<IrFunction>) -> IrProgram {
        let mut stmt_index = BTreeMap::new();
        let mut def_index = BTreeMap::new();
        for (fi, f) in functions.iter().enumerate() {
            for (i, p) in f.params.iter().enumerate() {
                def_index.insert(p.clone(), DefSite::Param { func: fi, index: i });
            }
            for (bi, b) in f.blocks.iter().enumerate() {
                for (si, s) in b.statements.iter().enumerate() {
                    let loc = Loc { func: fi, block: bi, stmt: si };
                    stmt_index.insert(s.id.clone(), loc);
                    if let Some(d) = &s.def {
                        def_index.insert(d.clone(), DefSite::Stmt(loc));
                    }
                }
            }
        }
        IrProgram { contract_address, functions, stmt_index, def_index }
    }

    pub fn function(&self, name: &str) -> Option<&IrFunction> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn function_index(&self, name: &str) -> Option<usize> {
        self.functions.iter().position(|f| f.name == name)
    }

    pub fn function_by_selector(&self, selector: Selector) -> Option<&IrFunction> {
        self.functions.iter().find(|f| f.selector == Some(selector))
    }

    pub fn public_functions(&self) -> impl Iterator<Item = &IrFunction> {
        self.functions.iter().filter(|f| f.visibility == Visibility::Public)
    }

    pub fn locate(&self, id: &StmtId) -> Option<Loc> {
        self.stmt_index.get(id).copied()
    }

    pub fn statement(&self, id: &StmtId) -> Option<&Statement> {
        self.locate(id).map(|l| self.at(l))
    }

    pub fn at(&self, loc: Loc) -> &Statement {
        &self.functions[loc.func].blocks[loc.block].statements[loc.stmt]
    }

    pub fn def_site(&self, var: &Var) -> Option<DefSite> {
        self.def_index.get(var).copied()
    }

    /// The statement defining `var`, if it is not a parameter.
    pub fn def_stmt(&self, var: &Var) -> Option<&Statement> {
        match self.def_site(var)? {
            DefSite::Stmt(loc) => Some(self.at(loc)),
            DefSite::Param { .. } => None,
        }
    }

    pub fn variables(&self) -> impl Iterator<Item = &Var> {
        self.def_index.keys()
    }

    pub fn statements(&self) -> impl Iterator<Item = (Loc, &Statement)> {
        self.stmt_index.values().map(move |l| (*l, self.at(*l)))
    }

    pub fn statement_count(&self) -> usize {
        self.stmt_index.len()
    }
}
