//! Selector dictionary loaded from `selector<TAB>signature` lines.

use std::collections::BTreeMap;

use crate::word::Selector;

const BUILTIN: &str = include_str!("../data/signatures.tsv");

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("signature table line {line}: {reason}")]
pub struct SigDbError {
    pub line: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignatureDb {
    by_selector: BTreeMap<Selector, String>,
}

impl SignatureDb {
    pub fn builtin() -> SignatureDb {
        SignatureDb::parse(BUILTIN).expect("bundled signature table is valid")
    }

    pub fn parse(text: &str) -> Result<SignatureDb, SigDbError> {
        let mut by_selector = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: &str| SigDbError { line: i + 1, reason: reason.to_string() };
            let (sel, sig) = line.split_once('\t').ok_or_else(|| err("expected selector<TAB>signature"))?;
            let sel: Selector = sel.trim().parse().map_err(|_| err("bad selector"))?;
            by_selector.insert(sel, sig.trim().to_string());
        }
        Ok(SignatureDb { by_selector })
    }

    /// Adds the entries of `other`, which win on conflicts.
    pub fn extend(&mut self, other: SignatureDb) {
        self.by_selector.extend(other.by_selector);
    }

    pub fn signature(&self, sel: Selector) -> Option<&str> {
        self.by_selector.get(&sel).map(String::as_str)
    }

    pub fn selector(&self, signature: &str) -> Option<Selector> {
        self.by_selector.iter().find(|(_, s)| *s == signature).map(|(k, _)| *k)
    }

    pub fn len(&self) -> usize {
        self.by_selector.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_selector.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Selector, &str)> {
        self.by_selector.iter().map(|(k, v)| (*k, v.as_str()))
    }
}
