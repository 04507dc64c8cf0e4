//! Front-end description analysis: prompt construction for an LLM and
//! deterministic attribute extraction from its answers.

mod extract;
mod llm;
mod prompt;

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use extract::{extract_attributes, parse_decimal, ExtractWarning, Extraction, LabeledResponse, Synonyms};
pub use llm::{describe_to_attributes, CannedLlm, HttpLlm, LlmClient, LlmError};
pub use prompt::{build_prompts, segment, PromptBundle, PromptKind, PromptSegment, Templates, Tokenizer, WordTokenizer, DEFAULT_SEGMENT_TOKENS};

/// Numeric attributes read from a description.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NumericAttr {
    Reward,
    Fee,
    Supply,
    Lock,
}

impl NumericAttr {
    pub const ALL: [NumericAttr; 4] = [NumericAttr::Reward, NumericAttr::Fee, NumericAttr::Supply, NumericAttr::Lock];

    pub fn key(self) -> &'static str {
        match self {
            NumericAttr::Reward => "reward",
            NumericAttr::Fee => "fee",
            NumericAttr::Supply => "supply",
            NumericAttr::Lock => "lock",
        }
    }
}

/// Yes/no questions asked about a description.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoolAttr {
    Fee,
    Pause,
    FundFlow,
    NftPermanence,
}

impl BoolAttr {
    pub const ALL: [BoolAttr; 4] = [BoolAttr::Fee, BoolAttr::Pause, BoolAttr::FundFlow, BoolAttr::NftPermanence];

    pub fn key(self) -> &'static str {
        match self {
            BoolAttr::Fee => "fee",
            BoolAttr::Pause => "pause",
            BoolAttr::FundFlow => "fund_flow",
            BoolAttr::NftPermanence => "nft_permanence",
        }
    }
}

impl fmt::Display for BoolAttr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// An exact percentage. JSON form is a number (or a decimal/fraction
/// string); the value is kept as a rational so comparisons are exact.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Percent(pub BigRational);

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("invalid percentage `{0}`")]
pub struct PercentError(pub String);

impl Percent {
    pub fn from_integer(n: i64) -> Percent {
        Percent(BigRational::from_integer(BigInt::from(n)))
    }

    /// The percentage as a fraction of one.
    pub fn fraction(&self) -> BigRational {
        &self.0 / BigRational::from_integer(BigInt::from(100))
    }

    pub(crate) fn in_range(&self) -> bool {
        self.0 >= BigRational::zero() && self.0 <= BigRational::from_integer(BigInt::from(1000))
    }
}

impl FromStr for Percent {
    type Err = PercentError;

    fn from_str(s: &str) -> Result<Percent, PercentError> {
        let t = s.trim().trim_end_matches('%').trim();
        let value = match t.split_once('/') {
            Some((n, d)) => {
                let n = parse_decimal(n.trim()).ok_or_else(|| PercentError(s.to_string()))?;
                let d = parse_decimal(d.trim()).ok_or_else(|| PercentError(s.to_string()))?;
                if d.is_zero() {
                    return Err(PercentError(s.to_string()));
                }
                n / d
            }
            None => parse_decimal(t).ok_or_else(|| PercentError(s.to_string()))?,
        };
        let p = Percent(value);
        if p.in_range() {
            Ok(p)
        } else {
            Err(PercentError(s.to_string()))
        }
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl Serialize for Percent {
    /// Terminating decimals become JSON numbers, which read back exactly;
    /// anything else is written as a `n/d` string.
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut d = self.0.denom().clone();
        for p in [2u32, 5] {
            let p = BigInt::from(p);
            while (&d % &p).is_zero() {
                d /= &p;
            }
        }
        match self.0.to_f64() {
            Some(f) if d == BigInt::from(1) && parse_decimal(&format!("{f}")).as_ref() == Some(&self.0) => {
                s.serialize_f64(f)
            }
            _ => s.collect_str(self),
        }
    }
}

impl<'de> Deserialize<'de> for Percent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Percent, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        // shortest round-trip text of the float, read back as a decimal
        let text = match Raw::deserialize(d)? {
            Raw::Num(f) => format!("{f}"),
            Raw::Text(t) => t,
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Claims read from a DApp's description. Also the detector's direct input
/// format, so a run never needs the LLM.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontendAttributes {
    #[serde(default)]
    pub reward_rate_percent: Option<Percent>,
    #[serde(default)]
    pub fee_rate_percent: Option<Percent>,
    #[serde(default)]
    pub fee_claimed: bool,
    #[serde(default)]
    pub lock_time_seconds: Option<u64>,
    #[serde(default)]
    pub total_supply: Option<u128>,
    #[serde(default)]
    pub pause_disclosed: bool,
    #[serde(default)]
    pub fund_flow_disclosed: bool,
    #[serde(default)]
    pub nft_permanence_claimed: Option<bool>,
}

#[derive(Debug, thiserror::Error)]
pub enum AttrsError {
    #[error("attributes JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("fee_rate_percent is set but fee_claimed is false")]
    RateWithoutClaim,
}

impl FrontendAttributes {
    pub fn from_json(text: &str) -> Result<FrontendAttributes, AttrsError> {
        let attrs: FrontendAttributes = serde_json::from_str(text)?;
        if attrs.fee_rate_percent.is_some() && !attrs.fee_claimed {
            return Err(AttrsError::RateWithoutClaim);
        }
        Ok(attrs)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("attributes serialize")
    }
}
