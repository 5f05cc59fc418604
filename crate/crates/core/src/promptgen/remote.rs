//! Chat-completion client for LLM-backed generation.
//!
//! Speaks the common `POST {endpoint}` JSON chat format:
//! `{"model", "messages": [{"role", "content"}], "temperature"}` in,
//! `{"choices": [{"message": {"content"}}]}` out. The reply is split into lines
//! and handed back to the generation driver, which parses and filters them.
//!
//! The request wording below is this toolkit's own; it is not a canonical
//! reproduction of any published prompt.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::backend::{GeneratorBackend, PromptRequest, Provenance, TermRequest};
use super::PromptGenError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
}

fn default_timeout() -> u64 {
    60
}

fn default_key_env() -> String {
    "OPENAI_API_KEY".into()
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4".into(),
            timeout_secs: default_timeout(),
            api_key_env: default_key_env(),
        }
    }
}

const SYSTEM_MESSAGE: &str = "You help build text prompts for zero-shot audio classification \
with audio-language models. Reply with plain lines only: no numbering, no commentary.";

pub struct RemoteGenerator {
    config: RemoteConfig,
    agent: ureq::Agent,
}

impl RemoteGenerator {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn chat(&self, user: String) -> Result<Vec<String>, PromptGenError> {
        let body = json!({
            "model": self.config.model,
            "temperature": 0.7,
            "messages": [
                {"role": "system", "content": SYSTEM_MESSAGE},
                {"role": "user", "content": user},
            ],
        });
        let mut req = self.agent.post(&self.config.endpoint);
        if let Ok(key) = std::env::var(&self.config.api_key_env) {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(&body)
            .map_err(|e| PromptGenError::BackendUnavailable(format!("{}: {e}", self.config.endpoint)))?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(PromptGenError::BackendUnavailable(format!(
                "{} returned HTTP {}: {}",
                self.config.endpoint,
                status.as_u16(),
                text.chars().take(200).collect::<String>()
            )));
        }
        let value: serde_json::Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| PromptGenError::BackendResponse(e.to_string()))?;
        let content = value
            .pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .ok_or_else(|| PromptGenError::BackendResponse("missing choices[0].message.content".into()))?;
        Ok(content
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect())
    }
}

pub fn term_request_text(request: &TermRequest<'_>) -> String {
    let (examples, kind) = match request.kind {
        super::backend::TermKind::Attribute => ("quiet, loud, muted, faint", "sound attributes"),
        super::backend::TermKind::Source => ("theater, concert, room, opera, street", "sound sources"),
    };
    let mut text = String::from("Audio classification task categories:\n");
    for d in request.category_descriptions {
        text.push_str("- ");
        text.push_str(d);
        text.push('\n');
    }
    text.push_str(&format!(
        "\nList {} distinct {kind} relevant to these categories (examples: {examples}). \
         One lowercase term of at most three words per line.",
        request.count
    ));
    if !request.exclude.is_empty() {
        text.push_str(&format!(" Do not repeat any of: {}.", request.exclude.join(", ")));
    }
    text
}

pub fn prompt_request_text(request: &PromptRequest<'_>) -> String {
    format!(
        "Task category: {name}. {desc}\nExample labels: {labels}\nSound attributes: {attrs}\n\
         Sound sources: {srcs}\n\nWrite {n} prompts, one per line, each using exactly one of \
         these formats and only the attributes and sources listed above. Keep the literal \
         placeholder <label> for the class label.\n\
         A <attribute> sound of a <label>\n\
         A sound of a <label> coming from a <source>\n\
         A <attribute> sound of a <label> can be heard from a <source>{exclude}",
        name = request.category.name,
        desc = request.category.description,
        labels = request.example_labels.join(", "),
        attrs = request.attributes.join(", "),
        srcs = request.sources.join(", "),
        n = request.count,
        exclude = if request.exclude.is_empty() {
            String::new()
        } else {
            format!("\nDo not repeat any of these:\n{}", request.exclude.join("\n"))
        },
    )
}

impl GeneratorBackend for RemoteGenerator {
    fn provenance(&self) -> Provenance {
        Provenance::Llm
    }

    fn propose_terms(&self, request: &TermRequest<'_>) -> Result<Vec<String>, PromptGenError> {
        self.chat(term_request_text(request))
    }

    fn propose_prompts(&self, request: &PromptRequest<'_>) -> Result<Vec<String>, PromptGenError> {
        self.chat(prompt_request_text(request))
    }
}
