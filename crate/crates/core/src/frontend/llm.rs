use std::collections::BTreeMap;
use std::time::Duration;

use serde::Deserialize;

use super::extract::{extract_attributes, Extraction, LabeledResponse, Synonyms};
use super::prompt::{build_prompts, PromptKind, Templates, Tokenizer};
use super::BoolAttr;

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("llm endpoint {url}: {reason}")]
    Http { url: String, reason: String },
    #[error("llm response: {0}")]
    BadResponse(String),
    #[error("canned responses: {0}")]
    Canned(String),
}

/// Text in, text out.
pub trait LlmClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, LlmError>;
}

/// POSTs `{"prompt": ...}` and reads `{"text": ...}` back.
pub struct HttpLlm {
    url: String,
    agent: ureq::Agent,
}

impl HttpLlm {
    pub fn new(url: impl Into<String>, timeout: Duration) -> HttpLlm {
        let config = ureq::Agent::config_builder().timeout_global(Some(timeout)).build();
        HttpLlm { url: url.into(), agent: config.into() }
    }

    /// Endpoint from `LLM_ENDPOINT_URL`.
    pub fn from_env(timeout: Duration) -> Option<HttpLlm> {
        std::env::var("LLM_ENDPOINT_URL").ok().filter(|u| !u.is_empty()).map(|u| HttpLlm::new(u, timeout))
    }
}

impl LlmClient for HttpLlm {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        #[derive(Deserialize)]
        struct Reply {
            text: String,
        }
        let http = |e: ureq::Error| LlmError::Http { url: self.url.clone(), reason: e.to_string() };
        let mut resp = self.agent.post(&self.url).send_json(serde_json::json!({ "prompt": prompt })).map_err(http)?;
        let reply: Reply = resp.body_mut().read_json().map_err(|e| LlmError::BadResponse(e.to_string()))?;
        Ok(reply.text)
    }
}

/// Fixed answers chosen by which template a prompt contains.
#[derive(Clone, Debug, Default)]
pub struct CannedLlm {
    rules: Vec<(String, String)>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CannedFile {
    #[serde(default)]
    numeric: Option<String>,
    #[serde(default)]
    boolean: BTreeMap<BoolAttr, String>,
}

impl CannedLlm {
    pub fn new(templates: &Templates, numeric: Option<String>, boolean: BTreeMap<BoolAttr, String>) -> CannedLlm {
        let mut rules: Vec<(String, String)> =
            boolean.into_iter().map(|(a, text)| (templates.boolean[&a].clone(), text)).collect();
        if let Some(text) = numeric {
            rules.push((templates.numeric_cot.clone(), text));
        }
        CannedLlm { rules }
    }

    /// `{"numeric": "...", "boolean": {"pause": "Answer: no", ...}}`
    pub fn from_json(templates: &Templates, text: &str) -> Result<CannedLlm, LlmError> {
        let f: CannedFile = serde_json::from_str(text).map_err(|e| LlmError::Canned(e.to_string()))?;
        Ok(CannedLlm::new(templates, f.numeric, f.boolean))
    }
}

impl LlmClient for CannedLlm {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        Ok(self.rules.iter().find(|(needle, _)| prompt.contains(needle.as_str())).map(|(_, r)| r.clone()).unwrap_or_default())
    }
}

/// Runs every prompt (numeric, then each boolean question) segment by
/// segment through `client` and extracts attributes from the answers.
pub fn describe_to_attributes(
    description: &str,
    client: &dyn LlmClient,
    templates: &Templates,
    synonyms: &Synonyms,
    tokenizer: &dyn Tokenizer,
    max_tokens: usize,
) -> Result<Extraction, LlmError> {
    let kinds = std::iter::once(PromptKind::Numeric).chain(BoolAttr::ALL.into_iter().map(PromptKind::Boolean));
    let mut responses = Vec::new();
    for kind in kinds {
        let bundle = build_prompts(description, kind, templates, tokenizer, max_tokens);
        for seg in &bundle.segments {
            let text = client.complete(&seg.render())?;
            responses.push(LabeledResponse { query: kind, text });
        }
    }
    Ok(extract_attributes(&responses, synonyms))
}
