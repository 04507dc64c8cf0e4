//! On-chain state access: storage words, code and storage-encoded strings.
//!
//! Two backends implement [`ChainState`]: [`MockChain`] reads a JSON file and
//! [`RpcChain`] talks to a JSON-RPC node (`eth_getStorageAt`, `eth_getCode`).

mod mock;
mod rpc;
mod strings;

use sha3::{Digest, Keccak256};

pub use mock::MockChain;
pub use rpc::{RpcChain, RpcConfig};
pub use strings::{decode_storage_string, encode_storage_string, StorageString};

use crate::word::{Address, Word};

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum ChainError {
    #[error("rpc error after {attempts} attempt(s): {reason}")]
    Rpc { attempts: u32, reason: String },
    #[error("malformed rpc response: {0}")]
    MalformedResponse(String),
    #[error("mock chain file: {0}")]
    MockFormat(String),
    #[error("slot {slot:#x} does not hold a storage string")]
    NotAString { slot: Word },
}

pub fn keccak256(data: &[u8]) -> [u8; 32] {
    Keccak256::digest(data).into()
}

/// Read access to contract state at the latest block.
pub trait ChainState: Send + Sync {
    fn get_storage(&self, address: &Address, slot: Word) -> Result<Word, ChainError>;

    /// Runtime bytecode; empty for externally owned accounts.
    fn get_code(&self, address: &Address) -> Result<Vec<u8>, ChainError>;

    /// Decodes a string stored with the standard layout: short strings
    /// (< 32 bytes) pack data and `2*len` into one word, long ones store
    /// `2*len+1` and put the data at `keccak256(slot)` onwards.
    fn read_string_at(&self, address: &Address, slot: Word) -> Result<String, ChainError> {
        let head = self.get_storage(address, slot)?;
        match decode_storage_string(head).ok_or(ChainError::NotAString { slot })? {
            StorageString::Short(bytes) => String::from_utf8(bytes).map_err(|_| ChainError::NotAString { slot }),
            StorageString::Long(len) => {
                let base = data_slot(slot);
                let mut bytes = Vec::with_capacity(len);
                let words = len.div_ceil(32);
                for i in 0..words {
                    let w = self.get_storage(address, base.overflowing_add(Word::from(i)).0)?;
                    bytes.extend_from_slice(&w.to_big_endian());
                }
                bytes.truncate(len);
                String::from_utf8(bytes).map_err(|_| ChainError::NotAString { slot })
            }
        }
    }
}

/// First data slot of a long storage string or dynamic array at `slot`.
pub fn data_slot(slot: Word) -> Word {
    Word::from_big_endian(&keccak256(&slot.to_big_endian()))
}

/// Storage location of a token URI prefix, by scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UriStorage {
    Decentralized,
    Centralized,
    Unknown,
}

/// `ipfs://` and `ar://` are decentralized; `http(s)://` and base64 `data:`
/// URIs are centralized.
pub fn classify_uri(uri: &str) -> UriStorage {
    let lower = uri.trim().to_ascii_lowercase();
    if lower.starts_with("ipfs://") || lower.starts_with("ar://") {
        UriStorage::Decentralized
    } else if lower.starts_with("http://")
        || lower.starts_with("https://")
        || (lower.starts_with("data:") && lower.contains(";base64,"))
    {
        UriStorage::Centralized
    } else {
        UriStorage::Unknown
    }
}
