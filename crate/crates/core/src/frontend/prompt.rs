use std::collections::BTreeMap;
use std::path::Path;

use super::{BoolAttr, NumericAttr};

pub const DEFAULT_SEGMENT_TOKENS: usize = 3000;

/// Splits text into tokens, reported as byte spans in order.
pub trait Tokenizer: Send + Sync {
    fn spans(&self, text: &str) -> Vec<(usize, usize)>;

    fn count(&self, text: &str) -> usize {
        self.spans(text).len()
    }
}

/// Runs of alphanumerics are tokens, as is every other non-space char.
#[derive(Clone, Copy, Debug, Default)]
pub struct WordTokenizer;

impl Tokenizer for WordTokenizer {
    fn spans(&self, text: &str) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut run: Option<usize> = None;
        for (i, c) in text.char_indices() {
            if c.is_alphanumeric() {
                run.get_or_insert(i);
                continue;
            }
            if let Some(start) = run.take() {
                out.push((start, i));
            }
            if !c.is_whitespace() {
                out.push((i, i + c.len_utf8()));
            }
        }
        if let Some(start) = run {
            out.push((start, text.len()));
        }
        out
    }
}

/// Cuts `text` into consecutive pieces of at most `max_tokens` tokens each.
/// Cuts fall on token starts, so the pieces concatenate back to `text`.
pub fn segment<'a>(text: &'a str, tokenizer: &dyn Tokenizer, max_tokens: usize) -> Vec<&'a str> {
    let max_tokens = max_tokens.max(1);
    let spans = tokenizer.spans(text);
    if spans.len() <= max_tokens {
        return vec![text];
    }
    let mut cuts = vec![0usize];
    let mut i = max_tokens;
    while i < spans.len() {
        let mut cut = spans[i].0;
        // tokenizers that are not boundary-stable may count more in the piece
        let start = *cuts.last().expect("nonempty");
        let mut back = i;
        while tokenizer.count(&text[start..cut]) > max_tokens && back > 1 {
            back -= 1;
            cut = spans[back].0;
        }
        if cut <= start {
            cut = spans[i].0;
        }
        cuts.push(cut);
        i = spans.partition_point(|s| s.0 < cut) + max_tokens;
    }
    cuts.push(text.len());
    cuts.windows(2).map(|w| &text[w[0]..w[1]]).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum PromptKind {
    Numeric,
    Boolean(BoolAttr),
}

/// Prompt text, loaded from data files keyed by kind and attribute.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Templates {
    pub system: String,
    pub numeric: BTreeMap<NumericAttr, String>,
    pub numeric_cot: String,
    pub boolean: BTreeMap<BoolAttr, String>,
    pub boolean_cot: String,
}

#[derive(Debug, thiserror::Error)]
#[error("template {path}: {source}")]
pub struct TemplateError {
    pub path: String,
    #[source]
    pub source: std::io::Error,
}

impl Templates {
    pub fn builtin() -> Templates {
        let numeric = [
            (NumericAttr::Reward, include_str!("../../data/frontend/templates/numeric_reward.txt")),
            (NumericAttr::Fee, include_str!("../../data/frontend/templates/numeric_fee.txt")),
            (NumericAttr::Supply, include_str!("../../data/frontend/templates/numeric_supply.txt")),
            (NumericAttr::Lock, include_str!("../../data/frontend/templates/numeric_lock.txt")),
        ];
        let boolean = [
            (BoolAttr::Fee, include_str!("../../data/frontend/templates/boolean_fee.txt")),
            (BoolAttr::Pause, include_str!("../../data/frontend/templates/boolean_pause.txt")),
            (BoolAttr::FundFlow, include_str!("../../data/frontend/templates/boolean_fund_flow.txt")),
            (BoolAttr::NftPermanence, include_str!("../../data/frontend/templates/boolean_nft_permanence.txt")),
        ];
        Templates {
            system: include_str!("../../data/frontend/templates/system.txt").trim().to_string(),
            numeric: numeric.into_iter().map(|(k, v)| (k, v.trim().to_string())).collect(),
            numeric_cot: include_str!("../../data/frontend/templates/numeric_cot.txt").trim().to_string(),
            boolean: boolean.into_iter().map(|(k, v)| (k, v.trim().to_string())).collect(),
            boolean_cot: include_str!("../../data/frontend/templates/boolean_cot.txt").trim().to_string(),
        }
    }

    /// Reads `system.txt`, `numeric_<attr>.txt`, `boolean_<attr>.txt` and
    /// the two `*_cot.txt` files from `dir`.
    pub fn from_dir(dir: &Path) -> Result<Templates, TemplateError> {
        let read = |name: String| {
            let path = dir.join(&name);
            std::fs::read_to_string(&path)
                .map(|s| s.trim().to_string())
                .map_err(|source| TemplateError { path: path.display().to_string(), source })
        };
        let mut numeric = BTreeMap::new();
        for a in NumericAttr::ALL {
            numeric.insert(a, read(format!("numeric_{}.txt", a.key()))?);
        }
        let mut boolean = BTreeMap::new();
        for a in BoolAttr::ALL {
            boolean.insert(a, read(format!("boolean_{}.txt", a.key()))?);
        }
        Ok(Templates {
            system: read("system.txt".into())?,
            numeric,
            numeric_cot: read("numeric_cot.txt".into())?,
            boolean,
            boolean_cot: read("boolean_cot.txt".into())?,
        })
    }

    /// Information-type instruction followed by the reasoning block.
    pub fn user_prompt(&self, kind: PromptKind) -> String {
        match kind {
            PromptKind::Numeric => {
                let items: Vec<&str> = self.numeric.values().map(String::as_str).collect();
                format!("{}\n{}", items.join("\n"), self.numeric_cot)
            }
            PromptKind::Boolean(a) => format!("{}\n{}", self.boolean[&a], self.boolean_cot),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptSegment {
    pub system: String,
    pub user: String,
    pub description: String,
}

const DESCRIPTION_HEADER: &str = "Description:";

impl PromptSegment {
    pub fn render(&self) -> String {
        format!("{}\n\n{}\n\n{DESCRIPTION_HEADER}\n{}", self.system, self.user, self.description)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptBundle {
    pub kind: PromptKind,
    pub segments: Vec<PromptSegment>,
}

impl PromptBundle {
    pub fn description(&self) -> String {
        self.segments.iter().map(|s| s.description.as_str()).collect()
    }
}

/// Segments `description` so that each rendered prompt (templates plus
/// description piece) stays within `max_tokens`. The templates repeat in
/// every segment; only the description is split.
pub fn build_prompts(
    description: &str,
    kind: PromptKind,
    templates: &Templates,
    tokenizer: &dyn Tokenizer,
    max_tokens: usize,
) -> PromptBundle {
    let system = templates.system.clone();
    let user = templates.user_prompt(kind);
    let overhead = tokenizer.count(&system) + tokenizer.count(&user) + tokenizer.count(DESCRIPTION_HEADER);
    let budget = max_tokens.saturating_sub(overhead).max(1);
    let segments = segment(description, tokenizer, budget)
        .into_iter()
        .map(|d| PromptSegment { system: system.clone(), user: user.clone(), description: d.to_string() })
        .collect();
    PromptBundle { kind, segments }
}
