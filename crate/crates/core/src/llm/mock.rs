//! Deterministic generation backend driven by a canned-responses file.
//!
//! ```json
//! {
//!   "rules": [
//!     {"prefix": "[REWRITE]", "suffix": "Q: who sang it", "responses": ["Who sang Hello?"]},
//!     {"contains": "Question: who sang", "responses": ["Adele.", "Adele did."]}
//!   ],
//!   "default": "no idea"
//! }
//! ```
//!
//! The first rule whose conditions all hold answers the request. `contains` is
//! matched against the annotated sample only (the text after the last
//! `Annotated Sample:` marker, or the whole prompt when there is none), so
//! demonstrations never trigger a rule. A request with seed `s` receives
//! `responses[s % len]`; unseeded requests receive the first response.

use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::prompt::ANNOTATED_MARKER;
use super::{GenerationRequest, Generator};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suffix: Option<String>,
    pub responses: Vec<String>,
}

impl MockRule {
    fn matches(&self, prompt: &str) -> bool {
        let focus = prompt.rsplit_once(ANNOTATED_MARKER).map_or(prompt, |(_, tail)| tail);
        self.prefix.as_deref().is_none_or(|p| prompt.starts_with(p))
            && self.contains.as_deref().is_none_or(|c| focus.contains(c))
            && self.suffix.as_deref().is_none_or(|s| prompt.trim_end().ends_with(s))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub rules: Vec<MockRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<String>,
}

#[derive(Debug, Default)]
pub struct MockBackend {
    script: MockScript,
    log: Mutex<Vec<GenerationRequest>>,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Result<Self> {
        if let Some(i) = script.rules.iter().position(|r| r.responses.is_empty()) {
            return Err(Error::invalid(format!("mock rule {i} has no responses")));
        }
        Ok(Self { script, log: Mutex::new(Vec::new()) })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let script: MockScript = serde_json::from_str(&text)
            .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        Self::new(script)
    }

    /// Every request seen so far, in arrival order.
    pub fn requests(&self) -> Vec<GenerationRequest> {
        self.log.lock().expect("mock log poisoned").clone()
    }
}

impl Generator for MockBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<String> {
        self.log.lock().expect("mock log poisoned").push(request.clone());
        let pick = |responses: &[String]| {
            let idx = request.seed.map_or(0, |s| (s % responses.len() as u64) as usize);
            responses[idx].clone()
        };
        if let Some(rule) = self.script.rules.iter().find(|r| r.matches(&request.prompt)) {
            return Ok(pick(&rule.responses));
        }
        self.script.default.clone().ok_or_else(|| {
            let tail: String = request.prompt.chars().rev().take(80).collect::<Vec<_>>().into_iter().rev().collect();
            Error::Backend(format!("mock has no response for prompt ending `{tail}`"))
        })
    }
}
