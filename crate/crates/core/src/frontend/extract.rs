use std::collections::BTreeMap;
use std::path::Path;
use std::sync::LazyLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use regex::Regex;

use super::prompt::PromptKind;
use super::{BoolAttr, FrontendAttributes, NumericAttr, Percent};

const DAY: u64 = 86_400;
/// Maximum token gap between an anchor and the quantity it claims.
const WINDOW: usize = 10;

/// An LLM answer together with the question it answers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledResponse {
    pub query: PromptKind,
    pub text: String,
}

impl LabeledResponse {
    pub fn numeric(text: impl Into<String>) -> LabeledResponse {
        LabeledResponse { query: PromptKind::Numeric, text: text.into() }
    }

    pub fn boolean(attr: BoolAttr, text: impl Into<String>) -> LabeledResponse {
        LabeledResponse { query: PromptKind::Boolean(attr), text: text.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(tag = "warning", rename_all = "snake_case")]
pub enum ExtractWarning {
    /// Two responses gave different values; the first is kept.
    ConflictingClaims { attribute: String, kept: String, ignored: String },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Extraction {
    pub attributes: FrontendAttributes,
    pub warnings: Vec<ExtractWarning>,
    /// Attribute key -> the response text the value was read from.
    pub sources: BTreeMap<&'static str, String>,
}

/// Anchor phrases per numeric attribute, as lowercase word sequences.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Synonyms {
    anchors: BTreeMap<NumericAttr, Vec<Vec<String>>>,
}

impl Synonyms {
    pub fn builtin() -> Synonyms {
        let files = [
            (NumericAttr::Reward, include_str!("../../data/frontend/synonyms/reward.txt")),
            (NumericAttr::Fee, include_str!("../../data/frontend/synonyms/fee.txt")),
            (NumericAttr::Supply, include_str!("../../data/frontend/synonyms/supply.txt")),
            (NumericAttr::Lock, include_str!("../../data/frontend/synonyms/lock.txt")),
        ];
        Synonyms { anchors: files.into_iter().map(|(a, text)| (a, Synonyms::parse(text))).collect() }
    }

    /// Reads `<attr>.txt` for each numeric attribute from `dir`.
    pub fn from_dir(dir: &Path) -> std::io::Result<Synonyms> {
        let mut anchors = BTreeMap::new();
        for a in NumericAttr::ALL {
            let text = std::fs::read_to_string(dir.join(format!("{}.txt", a.key())))?;
            anchors.insert(a, Synonyms::parse(&text));
        }
        Ok(Synonyms { anchors })
    }

    /// One phrase per line; `#` starts a comment line.
    pub fn parse(text: &str) -> Vec<Vec<String>> {
        let mut out: Vec<Vec<String>> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| l.split_whitespace().map(str::to_lowercase).collect())
            .collect();
        out.sort();
        out.dedup();
        out
    }
}

/// Parses `1,234.5`-style decimals exactly.
pub fn parse_decimal(text: &str) -> Option<BigRational> {
    let (int, frac) = match text.split_once('.') {
        Some((i, f)) => (i, f),
        None => (text, ""),
    };
    let int: String = int.chars().filter(|c| *c != ',').collect();
    if int.is_empty() || !int.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let digits: BigInt = format!("{int}{frac}").parse().ok()?;
    let scale = num_traits::pow(BigInt::from(10), frac.len());
    Some(BigRational::new(digits, scale))
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(BigRational, String),
    Word(String),
    Percent,
    Break,
    Punct,
}

static LEXER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?P<num>\d+(?:,\d{3})*(?:\.\d+)?)|(?P<word>[A-Za-z]+)|(?P<pct>%)|(?P<brk>[\n.!?;])|(?P<other>\S)")
        .expect("lexer regex")
});

/// Rule-based tagging: numbers, words, percent signs and sentence breaks.
fn lex(text: &str) -> Vec<Tok> {
    LEXER
        .captures_iter(text)
        .map(|c| {
            if let Some(m) = c.name("num") {
                Tok::Num(parse_decimal(m.as_str()).expect("lexer matched a decimal"), m.as_str().to_string())
            } else if let Some(m) = c.name("word") {
                Tok::Word(m.as_str().to_lowercase())
            } else if c.name("pct").is_some() {
                Tok::Percent
            } else if c.name("brk").is_some() {
                Tok::Break
            } else {
                Tok::Punct
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
enum Quantity {
    Percent(BigRational),
    Seconds(u64),
    Amount(u128),
}

impl Quantity {
    fn fits(&self, attr: NumericAttr) -> bool {
        matches!(
            (self, attr),
            (Quantity::Percent(_), NumericAttr::Reward | NumericAttr::Fee)
                | (Quantity::Seconds(_), NumericAttr::Lock)
                | (Quantity::Amount(_), NumericAttr::Supply)
        )
    }

    fn render(&self) -> String {
        match self {
            Quantity::Percent(p) => Percent(p.clone()).to_string(),
            Quantity::Seconds(s) => s.to_string(),
            Quantity::Amount(a) => a.to_string(),
        }
    }
}

fn magnitude(word: &str) -> Option<u64> {
    Some(match word {
        "k" | "thousand" => 1_000,
        "m" | "mn" | "million" | "millions" => 1_000_000,
        "b" | "bn" | "billion" | "billions" => 1_000_000_000,
        "t" | "trillion" => 1_000_000_000_000,
        _ => return None,
    })
}

/// Seconds per unit; years are 365 days and months 30 days.
fn time_unit(word: &str) -> Option<u64> {
    Some(match word {
        "year" | "years" | "yr" | "yrs" => 365 * DAY,
        "month" | "months" => 30 * DAY,
        "week" | "weeks" => 7 * DAY,
        "day" | "days" => DAY,
        "hour" | "hours" => 3_600,
        _ => return None,
    })
}

/// Quantity starting at a number token, with the index past its unit.
fn quantity_at(toks: &[Tok], i: usize) -> Option<(Quantity, usize)> {
    let Tok::Num(value, _) = &toks[i] else { return None };
    let word = |j: usize| match toks.get(j) {
        Some(Tok::Word(w)) => Some(w.as_str()),
        _ => None,
    };
    if matches!(toks.get(i + 1), Some(Tok::Percent)) || word(i + 1) == Some("percent") {
        return Some((Quantity::Percent(value.clone()), i + 2));
    }
    // "5 years" and "5-year"
    let unit_at = if matches!(toks.get(i + 1), Some(Tok::Punct)) { i + 2 } else { i + 1 };
    if let Some(secs) = word(unit_at).and_then(time_unit) {
        let total = value * BigRational::from_integer(BigInt::from(secs));
        return total.is_integer().then(|| total.to_integer().to_u64()).flatten().map(|s| (Quantity::Seconds(s), unit_at + 1));
    }
    let (total, end) = match word(i + 1).and_then(magnitude) {
        Some(m) => (value * BigRational::from_integer(BigInt::from(m)), i + 2),
        None => (value.clone(), i + 1),
    };
    total.is_integer().then(|| total.to_integer().to_u128()).flatten().map(|a| (Quantity::Amount(a), end))
}

/// Value per numeric attribute read from one response. Each quantity goes
/// to the nearest compatible anchor in its sentence; an attribute keeps the
/// first quantity it receives.
fn scan_numeric(text: &str, synonyms: &Synonyms) -> BTreeMap<NumericAttr, (Quantity, String)> {
    let toks = lex(text);
    let mut anchors: Vec<(usize, usize, NumericAttr)> = Vec::new();
    for (attr, phrases) in &synonyms.anchors {
        for phrase in phrases {
            for start in 0..toks.len() {
                let hit = phrase.iter().enumerate().all(|(k, w)| matches!(toks.get(start + k), Some(Tok::Word(t)) if t == w));
                if hit {
                    anchors.push((start, start + phrase.len(), *attr));
                }
            }
        }
    }
    anchors.sort();
    anchors.dedup();
    let breaks: Vec<usize> = toks.iter().enumerate().filter(|(_, t)| **t == Tok::Break).map(|(i, _)| i).collect();
    let same_sentence = |a: usize, b: usize| {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        !breaks.iter().any(|k| lo < *k && *k < hi)
    };

    let mut out: BTreeMap<NumericAttr, (Quantity, String)> = BTreeMap::new();
    let mut i = 0;
    while i < toks.len() {
        let Some((q, end)) = quantity_at(&toks, i) else {
            i += 1;
            continue;
        };
        let best = anchors
            .iter()
            .filter(|(_, _, attr)| q.fits(*attr))
            .filter_map(|(s, e, attr)| {
                let (gap, after) = if *e <= i { (i - e, false) } else { (s.saturating_sub(end), true) };
                (gap <= WINDOW && same_sentence(*s, i)).then_some((gap, after, *attr))
            })
            .min();
        if let Some((_, _, attr)) = best {
            let source = match &toks[i] {
                Tok::Num(_, raw) => raw.clone(),
                _ => unreachable!("quantities start at numbers"),
            };
            out.entry(attr).or_insert((q, source));
        }
        i = end;
    }
    out
}

/// Leading yes/no after an `Answer:` marker, else at the start.
fn scan_boolean(text: &str) -> Option<bool> {
    let toks = lex(text);
    let words: Vec<&str> = toks
        .iter()
        .filter_map(|t| match t {
            Tok::Word(w) => Some(w.as_str()),
            _ => None,
        })
        .collect();
    let at = words.iter().position(|w| *w == "answer").map_or(0, |p| p + 1);
    match words.get(at) {
        Some(&"yes") | Some(&"true") => Some(true),
        Some(&"no") | Some(&"false") => Some(false),
        _ => None,
    }
}

pub fn extract_attributes(responses: &[LabeledResponse], synonyms: &Synonyms) -> Extraction {
    let mut numeric: BTreeMap<NumericAttr, Quantity> = BTreeMap::new();
    let mut boolean: BTreeMap<BoolAttr, bool> = BTreeMap::new();
    let mut out = Extraction::default();
    for r in responses {
        match r.query {
            PromptKind::Numeric => {
                for (attr, (q, source)) in scan_numeric(&r.text, synonyms) {
                    match numeric.get(&attr) {
                        None => {
                            out.sources.insert(attr.key(), source);
                            numeric.insert(attr, q);
                        }
                        Some(kept) if *kept != q => out.warnings.push(ExtractWarning::ConflictingClaims {
                            attribute: attr.key().to_string(),
                            kept: kept.render(),
                            ignored: q.render(),
                        }),
                        Some(_) => {}
                    }
                }
            }
            PromptKind::Boolean(attr) => {
                if let (None, Some(b)) = (boolean.get(&attr), scan_boolean(&r.text)) {
                    boolean.insert(attr, b);
                }
            }
        }
    }
    let percent = |q: Option<&Quantity>| match q {
        Some(Quantity::Percent(p)) => Some(Percent(p.clone())).filter(|p| p.in_range()),
        _ => None,
    };
    let a = &mut out.attributes;
    a.reward_rate_percent = percent(numeric.get(&NumericAttr::Reward));
    a.fee_rate_percent = percent(numeric.get(&NumericAttr::Fee));
    a.fee_claimed = a.fee_rate_percent.is_some() || boolean.get(&BoolAttr::Fee) == Some(&true);
    a.lock_time_seconds = match numeric.get(&NumericAttr::Lock) {
        Some(Quantity::Seconds(s)) => Some(*s),
        _ => None,
    };
    a.total_supply = match numeric.get(&NumericAttr::Supply) {
        Some(Quantity::Amount(n)) if !n.is_zero() => Some(*n),
        _ => None,
    };
    a.pause_disclosed = boolean.get(&BoolAttr::Pause) == Some(&true);
    a.fund_flow_disclosed = boolean.get(&BoolAttr::FundFlow) == Some(&true);
    a.nft_permanence_claimed = boolean.get(&BoolAttr::NftPermanence).copied();
    out
}
