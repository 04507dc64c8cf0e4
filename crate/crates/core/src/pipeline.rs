//! End-to-end audit of one contract: static analysis, guided symbolic
//! execution, semantics summary and detection.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use crate::analysis::{analyze, StaticAnalysis};
use crate::chain::ChainState;
use crate::detector::{detect_all, InconsistencyReport};
use crate::frontend::FrontendAttributes;
use crate::ir::IrProgram;
use crate::sigdb::SignatureDb;
use crate::symexec::{
    execute_function, summarize_semantics, CheckpointState, ContractSemantics, ExecError, ExecResult, Limits,
    SummaryOptions,
};
use crate::word::Word;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PipelineOptions {
    pub limits: Limits,
    pub summary: SummaryOptions,
}

#[derive(Clone, Debug)]
pub struct ContractRun {
    pub analysis: StaticAnalysis,
    pub executions: Vec<ExecResult>,
    pub semantics: ContractSemantics,
    pub report: InconsistencyReport,
}

impl ContractRun {
    pub fn checkpoints(&self) -> impl Iterator<Item = &CheckpointState> {
        self.executions.iter().flat_map(|e| &e.checkpoints)
    }
}

/// Current values of constant slots the program reads but never writes.
/// Chain errors leave a slot out, which only weakens pruning.
pub fn fixed_storage(sa: &StaticAnalysis, chain: &dyn ChainState) -> BTreeMap<Word, Word> {
    let read: BTreeSet<Word> = sa.facts.loads.iter().filter_map(|l| sa.facts.const_of(&l.slot)).collect();
    read.into_iter()
        .filter(|s| !sa.sdg.is_written(*s))
        .filter_map(|s| chain.get_storage(&sa.program.contract_address, s).ok().map(|w| (s, w)))
        .collect()
}

/// Executes every planned selector, in selector order.
pub fn execute_plan(
    sa: &StaticAnalysis,
    limits: Limits,
    fixed: Option<&BTreeMap<Word, Word>>,
) -> Result<Vec<ExecResult>, ExecError> {
    sa.plan
        .entries
        .iter()
        .map(|(sel, entry)| execute_function(&sa.program, *sel, entry, limits, fixed))
        .collect()
}

pub fn audit(
    program: IrProgram,
    attrs: &FrontendAttributes,
    chain: Option<&dyn ChainState>,
    sigs: &SignatureDb,
    options: PipelineOptions,
) -> Result<ContractRun, ExecError> {
    options.limits.validate()?;
    let analysis = analyze(program, sigs);
    let fixed = chain.map(|c| fixed_storage(&analysis, c));
    let executions = execute_plan(&analysis, options.limits, fixed.as_ref())?;
    let checkpoints: Vec<CheckpointState> = executions.iter().flat_map(|e| e.checkpoints.iter().cloned()).collect();
    let semantics = summarize_semantics(&analysis, &checkpoints, options.summary);
    let mut report = detect_all(attrs, &semantics, chain, &analysis.program.contract_address);
    for e in &executions {
        if e.budget_exceeded {
            report.metadata.partial = true;
            report.metadata.notes.push(format!("{}: state budget exceeded after {} states", e.selector, e.states));
        }
    }
    Ok(ContractRun { analysis, executions, semantics, report })
}

pub const IR_FILE: &str = "contract.ir";
pub const ATTRS_FILE: &str = "attrs.json";
pub const CHAIN_FILE: &str = "chain.json";

#[derive(Debug, thiserror::Error)]
pub enum BundleError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Ir { path: String, source: crate::ir::ParseError },
    #[error("{path}: {source}")]
    Attrs { path: String, source: crate::frontend::AttrsError },
    #[error("{path}: {source}")]
    Chain { path: String, source: crate::chain::ChainError },
}

/// A contract directory: `contract.ir`, optional `attrs.json` (claims
/// default to none) and optional `chain.json` mock state.
#[derive(Clone, Debug)]
pub struct Bundle {
    pub name: String,
    pub program: IrProgram,
    pub attrs: FrontendAttributes,
    pub chain: Option<crate::chain::MockChain>,
}

fn read(path: &Path) -> Result<String, BundleError> {
    std::fs::read_to_string(path).map_err(|source| BundleError::Io { path: path.display().to_string(), source })
}

impl Bundle {
    pub fn load(dir: &Path) -> Result<Bundle, BundleError> {
        let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let ir_path = dir.join(IR_FILE);
        let program = crate::ir::parse_ir(&read(&ir_path)?)
            .map_err(|source| BundleError::Ir { path: ir_path.display().to_string(), source })?;
        let attrs_path = dir.join(ATTRS_FILE);
        let attrs = if attrs_path.exists() {
            FrontendAttributes::from_json(&read(&attrs_path)?)
                .map_err(|source| BundleError::Attrs { path: attrs_path.display().to_string(), source })?
        } else {
            FrontendAttributes::default()
        };
        let chain_path = dir.join(CHAIN_FILE);
        let chain = if chain_path.exists() {
            Some(
                crate::chain::MockChain::from_json(&read(&chain_path)?)
                    .map_err(|source| BundleError::Chain { path: chain_path.display().to_string(), source })?,
            )
        } else {
            None
        };
        Ok(Bundle { name, program, attrs, chain })
    }

    pub fn audit(&self, sigs: &SignatureDb, options: PipelineOptions) -> Result<ContractRun, ExecError> {
        let chain = self.chain.as_ref().map(|c| c as &dyn ChainState);
        audit(self.program.clone(), &self.attrs, chain, sigs, options)
    }
}

/// Subdirectories of `root` holding a `contract.ir`, sorted by name.
pub fn bundle_dirs(root: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for entry in std::fs::read_dir(root)? {
        let p = entry?.path();
        if p.join(IR_FILE).is_file() {
            dirs.push(p);
        }
    }
    dirs.sort();
    Ok(dirs)
}
