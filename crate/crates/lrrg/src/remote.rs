//! Chat-completions style HTTP grader.

use std::time::Duration;

use lrrg_core::curation::{GradeRequest, GraderError, QualityGrader, VerdictSource};
use serde_json::{json, Value};

use crate::config::GraderSettings;

pub struct HttpGrader {
    url: String,
    token: Option<String>,
    model: String,
    agent: ureq::Agent,
}

impl HttpGrader {
    pub fn new(url: impl Into<String>, token: Option<String>, model: impl Into<String>, timeout: Duration) -> HttpGrader {
        HttpGrader {
            url: url.into(),
            token,
            model: model.into(),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }

    /// `None` when no endpoint is configured.
    pub fn from_settings(settings: &GraderSettings) -> Option<HttpGrader> {
        let url = settings.url.as_ref()?;
        Some(HttpGrader::new(
            url.clone(),
            settings.token.clone(),
            settings.model.clone(),
            Duration::from_secs(settings.timeout_secs.max(1)),
        ))
    }

    pub fn request_body(&self, request: &GradeRequest<'_>) -> Value {
        let mut content = request.prompt.to_string();
        if let Some(r) = request.image_ref {
            content.push_str(&format!("\nImage reference: {r}"));
        }
        json!({
            "model": self.model,
            "messages": [{"role": "user", "content": content}],
            "temperature": 0,
        })
    }
}

/// The assistant text of a chat-completions reply, or the raw body when it
/// has no such field.
pub fn response_text(body: &str) -> String {
    serde_json::from_str::<Value>(body)
        .ok()
        .and_then(|v| {
            v.pointer("/choices/0/message/content")
                .or_else(|| v.pointer("/choices/0/text"))
                .and_then(Value::as_str)
                .map(str::to_string)
        })
        .unwrap_or_else(|| body.to_string())
}

impl QualityGrader for HttpGrader {
    fn complete(&self, request: &GradeRequest<'_>) -> Result<String, GraderError> {
        let mut req = self.agent.post(&self.url).set("Content-Type", "application/json");
        if let Some(t) = &self.token {
            req = req.set("Authorization", &format!("Bearer {t}"));
        }
        match req.send_json(self.request_body(request)) {
            Ok(resp) => {
                let body = resp.into_string().map_err(|e| GraderError::Transport(e.to_string()))?;
                Ok(response_text(&body))
            }
            Err(ureq::Error::Status(code, _)) => Err(GraderError::Status(code)),
            Err(e) => Err(GraderError::Transport(e.to_string())),
        }
    }

    fn source(&self) -> VerdictSource {
        VerdictSource::Remote
    }
}
