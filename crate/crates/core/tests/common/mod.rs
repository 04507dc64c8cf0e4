#![allow(dead_code)]

pub mod concrete;
pub mod criteria;
pub mod interp;
pub mod oracle;
pub mod random_ir;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use dappcheck::detector::FindingKind;
use dappcheck::pipeline::{Bundle, ContractRun, PipelineOptions};
use dappcheck::sigdb::SignatureDb;

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Fixture name to the finding kinds it must produce, from `corpus.json`.
pub fn corpus() -> BTreeMap<String, BTreeSet<FindingKind>> {
    let text = std::fs::read_to_string(fixtures_dir().join("corpus.json")).unwrap();
    let raw: BTreeMap<String, Vec<String>> = serde_json::from_str(&text).unwrap();
    raw.into_iter()
        .map(|(name, kinds)| {
            let kinds = kinds.iter().map(|k| k.parse().unwrap_or_else(|_| panic!("{name}: kind {k}"))).collect();
            (name, kinds)
        })
        .collect()
}

pub fn load(name: &str) -> Bundle {
    Bundle::load(&fixtures_dir().join(name)).unwrap_or_else(|e| panic!("{e}"))
}

pub fn run(name: &str) -> ContractRun {
    load(name).audit(&SignatureDb::builtin(), PipelineOptions::default()).unwrap_or_else(|e| panic!("{name}: {e}"))
}
