//! Language-model clients: a scripted mock for offline runs and an HTTP
//! client for OpenAI-compatible chat-completion endpoints.

use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::LlmError;

pub const ENV_LLM_MODEL: &str = "JUDGEKIT_LLM_MODEL";
pub const ENV_LLM_API_KEY: &str = "JUDGEKIT_LLM_API_KEY";
pub const ENV_LLM_TEMPERATURE: &str = "JUDGEKIT_LLM_TEMPERATURE";

/// A text-completion service. Implementations must tolerate concurrent calls.
pub trait LlmClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, LlmError>;
}

impl<T: LlmClient + ?Sized> LlmClient for Arc<T> {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        (**self).complete(prompt)
    }
}

/// Picks a client from a URI: `mock:<script.jsonl>` or `http(s)://<base>`.
pub fn client_from_uri(uri: &str) -> Result<Arc<dyn LlmClient>, LlmError> {
    if let Some(path) = uri.strip_prefix("mock:") {
        return Ok(Arc::new(MockLlm::from_file(Path::new(path))?));
    }
    if uri.starts_with("http://") || uri.starts_with("https://") {
        if uri.starts_with("https://") && !cfg!(feature = "tls") {
            return Err(LlmError::UnsupportedUri(format!("{uri} (built without the `tls` feature)")));
        }
        return Ok(Arc::new(HttpLlm::new(HttpLlmConfig::from_env(uri))));
    }
    Err(LlmError::UnsupportedUri(uri.to_string()))
}

/// One scripted exchange. The entry answers a prompt that contains every
/// string in `match`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(default, rename = "match", deserialize_with = "one_or_many")]
    pub matches: Vec<String>,
    pub response: String,
}

fn one_or_many<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<String>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(String),
        Many(Vec<String>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(s) => vec![s],
        OneOrMany::Many(v) => v,
    })
}

/// Replays a script. Each entry is used at most once, and a prompt gets the
/// first unused entry that matches it.
#[derive(Debug)]
pub struct MockLlm {
    entries: Vec<ScriptEntry>,
    state: Mutex<MockState>,
}

#[derive(Debug, Default)]
struct MockState {
    used: Vec<bool>,
    prompts: Vec<String>,
}

impl MockLlm {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        let used = vec![false; entries.len()];
        Self { entries, state: Mutex::new(MockState { used, prompts: Vec::new() }) }
    }

    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, LlmError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e = serde_json::from_str(line).map_err(|e| LlmError::Script(format!("line {}: {e}", i + 1)))?;
            entries.push(e);
        }
        Ok(Self::new(entries))
    }

    /// Every prompt received so far, in arrival order.
    pub fn prompts(&self) -> Vec<String> {
        self.state.lock().unwrap().prompts.clone()
    }

    pub fn remaining(&self) -> usize {
        self.state.lock().unwrap().used.iter().filter(|u| !**u).count()
    }
}

impl LlmClient for MockLlm {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let mut st = self.state.lock().unwrap();
        st.prompts.push(prompt.to_string());
        let hit = self
            .entries
            .iter()
            .enumerate()
            .find(|(i, e)| !st.used[*i] && e.matches.iter().all(|m| prompt.contains(m.as_str())));
        match hit {
            Some((i, e)) => {
                st.used[i] = true;
                Ok(e.response.clone())
            }
            None => {
                let head: String = prompt.chars().take(120).collect();
                Err(LlmError::Script(format!("no unused entry matches prompt starting `{head}`")))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct HttpLlmConfig {
    /// Base URL; requests go to `<base>/chat/completions`.
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub temperature: Option<f64>,
    pub timeout: Duration,
    pub retries: u32,
}

impl HttpLlmConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: "default".into(),
            api_key: None,
            temperature: None,
            timeout: Duration::from_secs(300),
            retries: 2,
        }
    }

    /// Reads `JUDGEKIT_LLM_MODEL`, `JUDGEKIT_LLM_API_KEY` and
    /// `JUDGEKIT_LLM_TEMPERATURE`.
    pub fn from_env(base_url: &str) -> Self {
        let mut c = Self::new(base_url);
        if let Ok(m) = std::env::var(ENV_LLM_MODEL) {
            c.model = m;
        }
        c.api_key = std::env::var(ENV_LLM_API_KEY).ok();
        c.temperature = std::env::var(ENV_LLM_TEMPERATURE).ok().and_then(|t| t.parse().ok());
        c
    }
}

#[derive(Debug)]
pub struct HttpLlm {
    config: HttpLlmConfig,
    agent: ureq::Agent,
}

impl HttpLlm {
    pub fn new(config: HttpLlmConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    fn request_once(&self, prompt: &str) -> Result<String, (bool, String)> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let mut body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
        });
        if let Some(t) = self.config.temperature {
            body["temperature"] = json!(t);
        }
        let mut req = self.agent.post(&url);
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| (true, e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| (true, e.to_string()))?;
        if status != 200 {
            let retry = status == 429 || status >= 500;
            return Err((retry, format!("status {status}: {}", text.chars().take(500).collect::<String>())));
        }
        let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| (false, format!("bad json: {e}")))?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| (false, "response has no choices[0].message.content".into()))
    }
}

impl LlmClient for HttpLlm {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let mut attempt = 0;
        loop {
            match self.request_once(prompt) {
                Ok(s) => return Ok(s),
                Err((retry, msg)) if retry && attempt < self.config.retries => {
                    attempt += 1;
                    log::warn!("llm request failed ({msg}); retry {attempt}/{}", self.config.retries);
                    std::thread::sleep(Duration::from_millis(500 << attempt));
                }
                Err((_, msg)) => return Err(LlmError::Request(msg)),
            }
        }
    }
}
