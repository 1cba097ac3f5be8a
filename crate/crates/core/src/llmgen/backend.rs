use std::time::Duration;

use serde::{Deserialize, Serialize};

pub const ENDPOINT_VAR: &str = "LLAMA_LLM_ENDPOINT";
pub const TOKEN_VAR: &str = "LLAMA_LLM_TOKEN";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LlmError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("no call sequence could be extracted from the model output")]
    UnparseableOutput,
}

/// Text completion service.
pub trait LlmBackend: Send + Sync {
    fn complete(&self, prompt: &str, max_tokens: u32, temperature: f64) -> Result<String, LlmError>;

    /// Seeds produced through this backend are tagged with this origin.
    fn is_stub(&self) -> bool {
        false
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
    max_tokens: u32,
    temperature: f64,
}

#[derive(Deserialize)]
struct CompletionResponse {
    text: String,
}

/// JSON-over-HTTP completion endpoint.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    pub endpoint: String,
    pub token: Option<String>,
    pub timeout: Duration,
}

impl RemoteBackend {
    pub fn new(endpoint: impl Into<String>, token: Option<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            token,
            timeout: DEFAULT_TIMEOUT,
        }
    }

    /// `None` when the endpoint variable is unset or empty.
    pub fn from_env() -> Option<Self> {
        let endpoint = std::env::var(ENDPOINT_VAR).ok().filter(|e| !e.trim().is_empty())?;
        let token = std::env::var(TOKEN_VAR).ok().filter(|t| !t.is_empty());
        Some(Self::new(endpoint, token))
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

impl LlmBackend for RemoteBackend {
    fn complete(&self, prompt: &str, max_tokens: u32, temperature: f64) -> Result<String, LlmError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .into();
        let mut request = agent.post(&self.endpoint);
        if let Some(token) = &self.token {
            request = request.header("Authorization", &format!("Bearer {token}"));
        }
        let unavailable = |e: ureq::Error| LlmError::BackendUnavailable(e.to_string());
        let response = request
            .send_json(CompletionRequest {
                prompt,
                max_tokens,
                temperature,
            })
            .map_err(unavailable)?;
        let body: CompletionResponse = response.into_body().read_json().map_err(unavailable)?;
        Ok(body.text)
    }
}

/// One attempt plus one retry.
pub fn complete_with_retry(
    backend: &dyn LlmBackend,
    prompt: &str,
    max_tokens: u32,
    temperature: f64,
) -> Result<String, LlmError> {
    match backend.complete(prompt, max_tokens, temperature) {
        Ok(text) => Ok(text),
        Err(first) => {
            log::warn!("completion failed, retrying: {first}");
            backend.complete(prompt, max_tokens, temperature)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    /// Serve `responses` in order, one per connection, and return the request bodies.
    fn serve(responses: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/complete", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let mut bodies = vec![];
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line.trim().is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                bodies.push(String::from_utf8(buf).unwrap());
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            bodies
        });
        (url, handle)
    }

    #[test]
    fn remote_round_trip() {
        let (url, handle) = serve(vec![(200, r#"{"text":"f() value=0 from=0"}"#.into())]);
        let backend = RemoteBackend::new(url, Some("t0k".into()));
        assert_eq!(backend.complete("hi", 16, 0.5).unwrap(), "f() value=0 from=0");
        let sent: serde_json::Value = serde_json::from_str(&handle.join().unwrap()[0]).unwrap();
        assert_eq!(sent["prompt"], "hi");
        assert_eq!(sent["max_tokens"], 16);
    }

    #[test]
    fn server_error_is_unavailable() {
        let (url, handle) = serve(vec![(503, "{}".into()), (500, "{}".into())]);
        let backend = RemoteBackend::new(url, None);
        let err = complete_with_retry(&backend, "hi", 16, 0.5).unwrap_err();
        assert!(matches!(err, LlmError::BackendUnavailable(_)));
        assert_eq!(handle.join().unwrap().len(), 2);
    }

    #[test]
    fn refused_connection_is_unavailable() {
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let backend = RemoteBackend::new(format!("http://127.0.0.1:{port}/"), None).with_timeout(Duration::from_secs(2));
        assert!(matches!(backend.complete("x", 1, 0.0), Err(LlmError::BackendUnavailable(_))));
    }
}
