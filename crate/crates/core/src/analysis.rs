//! The static half of contract analysis: facts, inferred relations, graphs
//! and the plan they produce for symbolic execution.

use crate::facts::{derive_facts, FactDb};
use crate::graphs::{build_ftg, build_sdg, plan_symexec, AnalysisPlan, FundTransferGraph, StateDependencyGraph};
use crate::infer::{infer_all, Inference};
use crate::ir::IrProgram;
use crate::sigdb::SignatureDb;

#[derive(Clone, Debug)]
pub struct StaticAnalysis {
    pub program: IrProgram,
    pub facts: FactDb,
    pub inference: Inference,
    pub ftg: FundTransferGraph,
    pub sdg: StateDependencyGraph,
    pub plan: AnalysisPlan,
}

pub fn analyze(program: IrProgram, sigs: &SignatureDb) -> StaticAnalysis {
    let facts = derive_facts(&program);
    let inference = infer_all(&facts, &program, sigs);
    let ftg = build_ftg(&facts, &program, &inference);
    let sdg = build_sdg(&facts, &program, &inference, sigs);
    let plan = plan_symexec(&program, &ftg, &sdg);
    StaticAnalysis { program, facts, inference, ftg, sdg, plan }
}
