use super::data_slot;
use crate::word::Word;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StorageString {
    /// Inline data (length < 32).
    Short(Vec<u8>),
    /// Length of an out-of-line string.
    Long(usize),
}

// Long strings beyond this are treated as garbage rather than read.
const MAX_LONG_LEN: usize = 1 << 20;

/// Classifies the head word of a storage string, or `None` when it matches
/// neither encoding.
pub fn decode_storage_string(head: Word) -> Option<StorageString> {
    let bytes = head.to_big_endian();
    if head.bit(0) {
        let len = (head - Word::one()) / Word::from(2u8);
        if len < Word::from(32u8) || len > Word::from(MAX_LONG_LEN) {
            return None;
        }
        return Some(StorageString::Long(len.as_usize()));
    }
    let len = (bytes[31] / 2) as usize;
    if len > 31 || bytes[len..31].iter().any(|b| *b != 0) {
        return None;
    }
    Some(StorageString::Short(bytes[..len].to_vec()))
}

/// Storage words (slot, word) that encode `text` at `slot`.
pub fn encode_storage_string(slot: Word, text: &str) -> Vec<(Word, Word)> {
    let data = text.as_bytes();
    if data.len() < 32 {
        let mut word = [0u8; 32];
        word[..data.len()].copy_from_slice(data);
        word[31] = (data.len() * 2) as u8;
        return vec![(slot, Word::from_big_endian(&word))];
    }
    let mut out = vec![(slot, Word::from(data.len() * 2 + 1))];
    let base = data_slot(slot);
    for (i, chunk) in data.chunks(32).enumerate() {
        let mut word = [0u8; 32];
        word[..chunk.len()].copy_from_slice(chunk);
        out.push((base.overflowing_add(Word::from(i)).0, Word::from_big_endian(&word)));
    }
    out
}
