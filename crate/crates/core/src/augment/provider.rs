use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("translation {source_lang}->{target_lang} is not supported")]
    Unsupported {
        source_lang: String,
        target_lang: String,
    },
    #[error("translation request failed: {0}")]
    Request(String),
    #[error("malformed translation response: {0}")]
    Response(String),
    #[error("translation table line {line}: {message}")]
    Table { line: usize, message: String },
    #[error("translation cache: {0}")]
    Cache(String),
}

/// Call counters exposed by providers that track them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ProviderCounters {
    pub provider_calls: usize,
    pub cache_hits: usize,
}

pub trait TranslationProvider: Send + Sync {
    fn supports(&self, source: &str, target: &str) -> bool;

    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String, ProviderError>;

    fn counters(&self) -> Option<ProviderCounters> {
        None
    }
}

impl<P: TranslationProvider + ?Sized> TranslationProvider for &P {
    fn supports(&self, source: &str, target: &str) -> bool {
        (**self).supports(source, target)
    }

    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String, ProviderError> {
        (**self).translate(text, source, target)
    }

    fn counters(&self) -> Option<ProviderCounters> {
        (**self).counters()
    }
}

impl<P: TranslationProvider + ?Sized> TranslationProvider for Box<P> {
    fn supports(&self, source: &str, target: &str) -> bool {
        (**self).supports(source, target)
    }

    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String, ProviderError> {
        (**self).translate(text, source, target)
    }

    fn counters(&self) -> Option<ProviderCounters> {
        (**self).counters()
    }
}

/// Returns every text unchanged, for every language pair.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityProvider;

impl TranslationProvider for IdentityProvider {
    fn supports(&self, _source: &str, _target: &str) -> bool {
        true
    }

    fn translate(&self, text: &str, _source: &str, _target: &str) -> Result<String, ProviderError> {
        Ok(text.to_string())
    }
}

/// Deterministic word-substitution translator.
///
/// Table lines are `source<TAB>target<TAB>word<TAB>translation`; blank lines
/// and lines starting with `#` are skipped. Translation splits on whitespace,
/// maps each word through the table for the requested pair and rejoins with
/// single spaces. Words without an entry pass through unchanged.
#[derive(Debug, Clone, Default)]
pub struct MockProvider {
    table: HashMap<(String, String), HashMap<String, String>>,
}

impl MockProvider {
    pub fn parse(text: &str) -> Result<Self, ProviderError> {
        let mut table: HashMap<(String, String), HashMap<String, String>> = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 || fields.iter().any(|f| f.is_empty()) {
                return Err(ProviderError::Table {
                    line: line_no,
                    message: "expected 4 non-empty tab-separated fields".into(),
                });
            }
            let pair = table
                .entry((fields[0].to_string(), fields[1].to_string()))
                .or_default();
            if let Some(prev) = pair.insert(fields[2].to_string(), fields[3].to_string()) {
                if prev != fields[3] {
                    return Err(ProviderError::Table {
                        line: line_no,
                        message: format!("conflicting translations for `{}`", fields[2]),
                    });
                }
            }
        }
        Ok(MockProvider { table })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ProviderError::Table {
            line: 0,
            message: format!("{}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }
}

impl TranslationProvider for MockProvider {
    fn supports(&self, source: &str, target: &str) -> bool {
        self.table
            .contains_key(&(source.to_string(), target.to_string()))
    }

    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String, ProviderError> {
        let words = self
            .table
            .get(&(source.to_string(), target.to_string()))
            .ok_or_else(|| ProviderError::Unsupported {
                source_lang: source.into(),
                target_lang: target.into(),
            })?;
        Ok(text
            .split_whitespace()
            .map(|w| words.get(w).map_or(w, String::as_str))
            .collect::<Vec<_>>()
            .join(" "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpProviderConfig {
    pub endpoint: String,
    /// Environment variable holding a bearer token, if the service needs one.
    pub credential_env: Option<String>,
    /// Maps toolkit language codes to the service's codes.
    pub language_map: HashMap<String, String>,
    /// Supported `[source, target]` pairs; empty means any pair.
    pub pairs: Vec<[String; 2]>,
    pub timeout_secs: u64,
}

impl Default for HttpProviderConfig {
    fn default() -> Self {
        HttpProviderConfig {
            endpoint: String::new(),
            credential_env: None,
            language_map: HashMap::new(),
            pairs: Vec::new(),
            timeout_secs: 30,
        }
    }
}

#[derive(Serialize)]
struct HttpRequest<'a> {
    text: &'a str,
    source: &'a str,
    target: &'a str,
}

#[derive(Deserialize)]
struct HttpResponse {
    text: String,
}

/// JSON-over-HTTP client: POSTs `{text, source, target}` and expects `{text}`.
pub struct HttpProvider {
    config: HttpProviderConfig,
    agent: ureq::Agent,
}

impl HttpProvider {
    pub fn new(config: HttpProviderConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .build()
            .into();
        HttpProvider { config, agent }
    }

    fn code<'a>(&'a self, lang: &'a str) -> &'a str {
        self.config.language_map.get(lang).map_or(lang, String::as_str)
    }
}

impl TranslationProvider for HttpProvider {
    fn supports(&self, source: &str, target: &str) -> bool {
        self.config.pairs.is_empty()
            || self
                .config
                .pairs
                .iter()
                .any(|[s, t]| s == source && t == target)
    }

    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String, ProviderError> {
        if !self.supports(source, target) {
            return Err(ProviderError::Unsupported {
                source_lang: source.into(),
                target_lang: target.into(),
            });
        }
        let body = HttpRequest {
            text,
            source: self.code(source),
            target: self.code(target),
        };
        let mut request = self.agent.post(&self.config.endpoint);
        if let Some(var) = &self.config.credential_env {
            let token = std::env::var(var).map_err(|_| {
                ProviderError::Request(format!("credential variable {var} is not set"))
            })?;
            request = request.header("Authorization", &format!("Bearer {token}"));
        }
        let mut response = request
            .send_json(&body)
            .map_err(|e| ProviderError::Request(e.to_string()))?;
        let parsed: HttpResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| ProviderError::Response(e.to_string()))?;
        Ok(parsed.text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    #[test]
    fn mock_table_translation() {
        let m = MockProvider::parse("# demo\nar\ten\tx\tX\nen\tar\tX\tx2\n\n").unwrap();
        assert!(m.supports("ar", "en"));
        assert!(!m.supports("en", "fr"));
        assert_eq!(m.translate("x  y x", "ar", "en").unwrap(), "X y X");
        assert_eq!(m.translate("X", "en", "ar").unwrap(), "x2");
        assert!(matches!(m.translate("x", "en", "fr"), Err(ProviderError::Unsupported { .. })));
    }

    #[test]
    fn mock_table_errors() {
        assert!(matches!(
            MockProvider::parse("ar\ten\tx\n"),
            Err(ProviderError::Table { line: 1, .. })
        ));
        assert!(matches!(
            MockProvider::parse("ar\ten\tx\tX\nar\ten\tx\tY\n"),
            Err(ProviderError::Table { line: 2, .. })
        ));
        assert!(MockProvider::parse("ar\ten\tx\tX\nar\ten\tx\tX\n").is_ok());
    }

    /// Serves one request, returning the raw request text it received.
    fn serve_once(status: &'static str, body: &'static str) -> (String, std::thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/translate", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut content_length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    content_length = v.trim().parse().unwrap();
                }
                head.push_str(&line);
                if line == "\r\n" {
                    break;
                }
            }
            let mut payload = vec![0u8; content_length];
            reader.read_exact(&mut payload).unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
            head + &String::from_utf8(payload).unwrap()
        });
        (url, handle)
    }

    #[test]
    fn http_round_trip() {
        let (url, server) = serve_once("200 OK", r#"{"text":"hello"}"#);
        std::env::set_var("CW_TEST_TRANSLATE_TOKEN", "s3cret");
        let provider = HttpProvider::new(HttpProviderConfig {
            endpoint: url,
            credential_env: Some("CW_TEST_TRANSLATE_TOKEN".into()),
            language_map: [("ar".to_string(), "ara".to_string())].into(),
            pairs: vec![["ar".into(), "en".into()]],
            timeout_secs: 5,
        });
        assert!(!provider.supports("en", "ar"));
        assert_eq!(provider.translate("marhaba", "ar", "en").unwrap(), "hello");
        let request = server.join().unwrap();
        assert!(request.starts_with("POST /translate"));
        assert!(request.to_ascii_lowercase().contains("authorization: bearer s3cret"));
        let json = request.split("\r\n\r\n").nth(1).unwrap();
        let v: serde_json::Value = serde_json::from_str(json).unwrap();
        assert_eq!(v, serde_json::json!({"text": "marhaba", "source": "ara", "target": "en"}));
    }

    #[test]
    fn http_errors() {
        let (url, server) = serve_once("500 Internal Server Error", "{}");
        let provider = HttpProvider::new(HttpProviderConfig {
            endpoint: url,
            timeout_secs: 5,
            ..Default::default()
        });
        assert!(matches!(provider.translate("x", "ar", "en"), Err(ProviderError::Request(_))));
        server.join().unwrap();

        let (url, server) = serve_once("200 OK", r#"{"translation":"x"}"#);
        let provider = HttpProvider::new(HttpProviderConfig {
            endpoint: url,
            timeout_secs: 5,
            ..Default::default()
        });
        assert!(matches!(provider.translate("x", "ar", "en"), Err(ProviderError::Response(_))));
        server.join().unwrap();

        let provider = HttpProvider::new(HttpProviderConfig {
            endpoint: "http://127.0.0.1:9/".into(),
            credential_env: Some("CW_TEST_UNSET_VARIABLE".into()),
            ..Default::default()
        });
        let err = provider.translate("x", "ar", "en").unwrap_err();
        assert!(err.to_string().contains("CW_TEST_UNSET_VARIABLE"));
    }
}
