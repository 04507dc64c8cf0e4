use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use super::{ChainError, ChainState};
use crate::word::{decode_hex, parse_word, Address, Word};

/// File-backed chain state:
/// `{ "<address>": { "code": "0x…", "storage": { "0x<slot>": "0x<word>" },
/// "strings": { "0x<slot>": "text" } } }`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MockChain {
    accounts: BTreeMap<Address, MockAccount>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct MockAccount {
    code: Vec<u8>,
    storage: BTreeMap<Word, Word>,
}

#[derive(Deserialize)]
struct RawAccount {
    #[serde(default)]
    code: Option<String>,
    #[serde(default)]
    storage: BTreeMap<String, String>,
    /// Solidity `string` values, encoded into storage on load.
    #[serde(default)]
    strings: BTreeMap<String, String>,
}

fn fmt_err(msg: impl Into<String>) -> ChainError {
    ChainError::MockFormat(msg.into())
}

impl MockChain {
    pub fn new() -> MockChain {
        MockChain::default()
    }

    pub fn from_json(text: &str) -> Result<MockChain, ChainError> {
        let raw: BTreeMap<String, RawAccount> =
            serde_json::from_str(text).map_err(|e| fmt_err(e.to_string()))?;
        let mut chain = MockChain::new();
        for (addr, acct) in raw {
            let address: Address = addr.to_ascii_lowercase().parse().map_err(|_| fmt_err(format!("bad address `{addr}`")))?;
            let code = match acct.code {
                Some(c) => decode_hex(&c).map_err(|_| fmt_err(format!("bad code hex for {addr}")))?,
                None => Vec::new(),
            };
            let mut storage = BTreeMap::new();
            for (k, v) in acct.storage {
                let slot = parse_word(&k).map_err(|_| fmt_err(format!("bad slot `{k}` for {addr}")))?;
                let word = parse_word(&v).map_err(|_| fmt_err(format!("bad word `{v}` for {addr}")))?;
                storage.insert(slot, word);
            }
            for (k, text) in acct.strings {
                let slot = parse_word(&k).map_err(|_| fmt_err(format!("bad slot `{k}` for {addr}")))?;
                storage.extend(super::encode_storage_string(slot, &text));
            }
            chain.accounts.insert(address, MockAccount { code, storage });
        }
        Ok(chain)
    }

    pub fn from_file(path: &Path) -> Result<MockChain, ChainError> {
        let text = std::fs::read_to_string(path).map_err(|e| fmt_err(format!("{}: {e}", path.display())))?;
        MockChain::from_json(&text)
    }

    pub fn with_storage(mut self, address: Address, slot: Word, word: Word) -> MockChain {
        self.accounts.entry(address).or_default().storage.insert(slot, word);
        self
    }

    pub fn with_code(mut self, address: Address, code: Vec<u8>) -> MockChain {
        self.accounts.entry(address).or_default().code = code;
        self
    }

    pub fn with_string(mut self, address: Address, slot: Word, text: &str) -> MockChain {
        for (s, w) in super::encode_storage_string(slot, text) {
            self = self.with_storage(address, s, w);
        }
        self
    }
}

impl ChainState for MockChain {
    fn get_storage(&self, address: &Address, slot: Word) -> Result<Word, ChainError> {
        Ok(self
            .accounts
            .get(address)
            .and_then(|a| a.storage.get(&slot).copied())
            .unwrap_or_default())
    }

    fn get_code(&self, address: &Address) -> Result<Vec<u8>, ChainError> {
        Ok(self.accounts.get(address).map(|a| a.code.clone()).unwrap_or_default())
    }
}
