use std::collections::HashMap;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{ChainError, ChainState};
use crate::word::{decode_hex, parse_word, word_hex, Address, Word};

#[derive(Clone, Debug)]
pub struct RpcConfig {
    pub url: String,
    /// When set, `eth_chainId` is checked once before the first query.
    pub chain_id: Option<u64>,
    pub attempts: u32,
    pub backoff: Duration,
    /// Overall budget for one logical request including retries.
    pub deadline: Duration,
}

impl RpcConfig {
    pub fn new(url: impl Into<String>) -> RpcConfig {
        RpcConfig {
            url: url.into(),
            chain_id: None,
            attempts: 3,
            backoff: Duration::from_millis(200),
            deadline: Duration::from_secs(20),
        }
    }
}

/// JSON-RPC backed chain state. Reads are cached for the lifetime of the
/// client so repeated slot lookups in one run hit the node once.
pub struct RpcChain {
    config: RpcConfig,
    agent: ureq::Agent,
    storage: Mutex<HashMap<(Address, Word), Word>>,
    code: Mutex<HashMap<Address, Vec<u8>>>,
    chain_checked: Mutex<bool>,
}

impl RpcChain {
    pub fn new(config: RpcConfig) -> RpcChain {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.deadline))
            .http_status_as_error(true)
            .build()
            .into();
        RpcChain {
            config,
            agent,
            storage: Mutex::new(HashMap::new()),
            code: Mutex::new(HashMap::new()),
            chain_checked: Mutex::new(false),
        }
    }

    fn call(&self, method: &str, params: Value) -> Result<Value, ChainError> {
        let body = json!({"jsonrpc": "2.0", "id": 1, "method": method, "params": params});
        let start = Instant::now();
        let mut last = String::new();
        let mut attempts = 0;
        for attempt in 0..self.config.attempts.max(1) {
            if attempt > 0 {
                let wait = self.config.backoff * 2u32.pow(attempt - 1);
                if start.elapsed() + wait > self.config.deadline {
                    break;
                }
                std::thread::sleep(wait);
            }
            attempts += 1;
            let resp = self.agent.post(&self.config.url).send_json(&body);
            match resp {
                Ok(mut r) => {
                    let v: Value = r
                        .body_mut()
                        .read_json()
                        .map_err(|e| ChainError::MalformedResponse(e.to_string()))?;
                    if let Some(err) = v.get("error") {
                        return Err(ChainError::Rpc { attempts, reason: err.to_string() });
                    }
                    return v
                        .get("result")
                        .cloned()
                        .ok_or_else(|| ChainError::MalformedResponse(format!("no result in {v}")));
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(ChainError::Rpc { attempts, reason: last })
    }

    fn ensure_chain(&self) -> Result<(), ChainError> {
        let Some(expected) = self.config.chain_id else {
            return Ok(());
        };
        let mut checked = self.chain_checked.lock().expect("lock poisoned");
        if *checked {
            return Ok(());
        }
        let got = self.call("eth_chainId", json!([]))?;
        let got = got
            .as_str()
            .and_then(|s| parse_word(s).ok())
            .ok_or_else(|| ChainError::MalformedResponse(format!("chain id {got}")))?;
        if got != Word::from(expected) {
            return Err(ChainError::Rpc {
                attempts: 1,
                reason: format!("endpoint serves chain {got}, expected {expected}"),
            });
        }
        *checked = true;
        Ok(())
    }
}

fn result_str(v: &Value) -> Result<&str, ChainError> {
    v.as_str().ok_or_else(|| ChainError::MalformedResponse(format!("expected hex string, got {v}")))
}

impl ChainState for RpcChain {
    fn get_storage(&self, address: &Address, slot: Word) -> Result<Word, ChainError> {
        if let Some(w) = self.storage.lock().expect("lock poisoned").get(&(*address, slot)) {
            return Ok(*w);
        }
        self.ensure_chain()?;
        let v = self.call("eth_getStorageAt", json!([address.to_string(), word_hex(&slot), "latest"]))?;
        let s = result_str(&v)?;
        let word = if s == "0x" {
            Word::zero()
        } else {
            parse_word(s).map_err(|e| ChainError::MalformedResponse(e.to_string()))?
        };
        self.storage.lock().expect("lock poisoned").insert((*address, slot), word);
        Ok(word)
    }

    fn get_code(&self, address: &Address) -> Result<Vec<u8>, ChainError> {
        if let Some(c) = self.code.lock().expect("lock poisoned").get(address) {
            return Ok(c.clone());
        }
        self.ensure_chain()?;
        let v = self.call("eth_getCode", json!([address.to_string(), "latest"]))?;
        let code = decode_hex(result_str(&v)?).map_err(|e| ChainError::MalformedResponse(e.to_string()))?;
        self.code.lock().expect("lock poisoned").insert(*address, code.clone());
        Ok(code)
    }
}
