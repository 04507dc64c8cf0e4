//! 256-bit words, addresses and function selectors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use primitive_types::U256 as Word;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("invalid hex literal `{0}`")]
pub struct HexError(pub String);

/// Parses `0x`-prefixed hex or plain decimal into a word.
pub fn parse_word(text: &str) -> Result<Word, HexError> {
    if let Some(hex) = text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")) {
        if hex.is_empty() || hex.len() > 64 || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(HexError(text.to_string()));
        }
        Word::from_str_radix(hex, 16).map_err(|_| HexError(text.to_string()))
    } else {
        if text.is_empty() || !text.bytes().all(|b| b.is_ascii_digit()) {
            return Err(HexError(text.to_string()));
        }
        Word::from_dec_str(text).map_err(|_| HexError(text.to_string()))
    }
}

/// Lowercase `0x` hex without leading zeros (`0x0` for zero).
pub fn word_hex(w: &Word) -> String {
    format!("{:#x}", w)
}

/// Serializes a word as `word_hex` text.
pub fn serialize_word<S: Serializer>(w: &Word, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&word_hex(w))
}

pub fn serialize_opt_word<S: Serializer>(w: &Option<Word>, s: S) -> Result<S::Ok, S::Error> {
    match w {
        Some(w) => s.serialize_str(&word_hex(w)),
        None => s.serialize_none(),
    }
}

pub fn serialize_word_set<S: Serializer>(ws: &std::collections::BTreeSet<Word>, s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(ws.iter().map(word_hex))
}

pub fn decode_hex(text: &str) -> Result<Vec<u8>, HexError> {
    let hex = text.strip_prefix("0x").unwrap_or(text);
    if !hex.len().is_multiple_of(2) {
        return Err(HexError(text.to_string()));
    }
    (0..hex.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&hex[i..i + 2], 16).map_err(|_| HexError(text.to_string())))
        .collect()
}

pub fn encode_hex(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(2 + bytes.len() * 2);
    out.push_str("0x");
    for b in bytes {
        out.push_str(&format!("{:02x}", b));
    }
    out
}

/// A 20-byte account address.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Address(pub [u8; 20]);

impl Address {
    pub fn to_word(&self) -> Word {
        Word::from_big_endian(&self.0)
    }
}

impl FromStr for Address {
    type Err = HexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let hex = s.strip_prefix("0x").ok_or_else(|| HexError(s.to_string()))?;
        if hex.len() != 40 {
            return Err(HexError(s.to_string()));
        }
        let bytes = decode_hex(hex)?;
        let mut out = [0u8; 20];
        out.copy_from_slice(&bytes);
        Ok(Address(out))
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&encode_hex(&self.0))
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// First four bytes of the keccak hash of a function signature.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Selector(pub [u8; 4]);

impl Selector {
    pub fn of_signature(signature: &str) -> Selector {
        let hash = crate::chain::keccak256(signature.as_bytes());
        Selector([hash[0], hash[1], hash[2], hash[3]])
    }

    pub fn to_word(&self) -> Word {
        Word::from(u32::from_be_bytes(self.0))
    }
}

impl FromStr for Selector {
    type Err = HexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let hex = s.strip_prefix("0x").unwrap_or(s);
        if hex.len() != 8 {
            return Err(HexError(s.to_string()));
        }
        let bytes = decode_hex(hex)?;
        Ok(Selector([bytes[0], bytes[1], bytes[2], bytes[3]]))
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&encode_hex(&self.0))
    }
}

impl fmt::Debug for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for Selector {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}
