//! Full-text acquisition through a pluggable resolver.
//!
//! Two resolvers ship: a fixture directory (offline, deterministic) and an
//! HTTP resolver that checks access with `HEAD` before fetching with content
//! negotiation for TEI or plain text.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::Execution;

/// What a resolver returned for one DOI.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resolved {
    Tei(String),
    Plaintext(String),
    NoFullText(String),
    LicenseBlocked(String),
    Error(String),
}

pub trait Resolver: Sync {
    fn resolve(&self, doi: &str) -> Resolved;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "FetchedTEI")]
    FetchedTei,
    FetchedPlaintext,
    NoFullText,
    LicenseBlocked,
    Error,
}

impl Outcome {
    pub fn is_fetched(self) -> bool {
        matches!(self, Outcome::FetchedTei | Outcome::FetchedPlaintext)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcquisitionResult {
    pub doc_doi: String,
    pub outcome: Outcome,
    /// Relative to the output directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload_path: Option<PathBuf>,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcquisitionSummary {
    pub fetched_tei: usize,
    pub fetched_plaintext: usize,
    pub no_full_text: usize,
    pub license_blocked: usize,
    pub error: usize,
}

impl AcquisitionSummary {
    pub fn fetched(&self) -> usize {
        self.fetched_tei + self.fetched_plaintext
    }

    pub fn from_results(results: &[AcquisitionResult]) -> Self {
        let mut s = AcquisitionSummary::default();
        for r in results {
            *match r.outcome {
                Outcome::FetchedTei => &mut s.fetched_tei,
                Outcome::FetchedPlaintext => &mut s.fetched_plaintext,
                Outcome::NoFullText => &mut s.no_full_text,
                Outcome::LicenseBlocked => &mut s.license_blocked,
                Outcome::Error => &mut s.error,
            } += 1;
        }
        s
    }
}

/// Filesystem-safe, injective name for a DOI: lowercase `[a-z0-9.-]` kept,
/// every other byte written as `_xx`.
pub fn sanitize_doi(doi: &str) -> String {
    let mut out = String::with_capacity(doi.len());
    for b in doi.trim().to_lowercase().bytes() {
        if b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'.' || b == b'-' {
            out.push(b as char);
        } else {
            out.push_str(&format!("_{b:02x}"));
        }
    }
    out
}

/// Payload files named `<sanitized doi>.tei.xml`, `.xml` or `.txt`; a
/// `.license-blocked` or `.error` marker file produces that outcome.
#[derive(Debug, Clone)]
pub struct FixtureResolver {
    dir: PathBuf,
}

impl FixtureResolver {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FixtureResolver { dir: dir.into() }
    }
}

impl Resolver for FixtureResolver {
    fn resolve(&self, doi: &str) -> Resolved {
        let stem = sanitize_doi(doi);
        let path = |ext: &str| self.dir.join(format!("{stem}.{ext}"));
        let read = |p: PathBuf| std::fs::read_to_string(&p).map_err(|e| format!("{}: {e}", p.display()));
        for ext in ["tei.xml", "xml"] {
            if path(ext).is_file() {
                return read(path(ext)).map_or_else(Resolved::Error, Resolved::Tei);
            }
        }
        if path("txt").is_file() {
            return read(path("txt")).map_or_else(Resolved::Error, Resolved::Plaintext);
        }
        if path("license-blocked").is_file() {
            return Resolved::LicenseBlocked("license marker in fixture".into());
        }
        if path("error").is_file() {
            return Resolved::Error(read(path("error")).unwrap_or_default().trim().to_string());
        }
        Resolved::NoFullText("not in fixture directory".into())
    }
}

#[cfg(feature = "http")]
pub use http::HttpResolver;

#[cfg(feature = "http")]
mod http {
    use std::sync::Mutex;
    use std::time::{Duration, Instant};

    use super::{Resolved, Resolver};

    const ACCEPT: &str = "application/tei+xml, application/xml;q=0.9, text/xml;q=0.9, text/plain;q=0.8";

    /// Resolves `<base>/<doi>`. Requests are spaced at least `min_interval` apart.
    pub struct HttpResolver {
        base: String,
        agent: ureq::Agent,
        min_interval: Duration,
        last: Mutex<Option<Instant>>,
    }

    impl HttpResolver {
        pub fn new(base: &str, min_interval: Duration, timeout: Duration) -> Self {
            let agent = ureq::Agent::config_builder()
                .http_status_as_error(false)
                .timeout_global(Some(timeout))
                .build()
                .into();
            HttpResolver { base: base.trim_end_matches('/').to_string(), agent, min_interval, last: Mutex::new(None) }
        }

        fn pace(&self) {
            let mut last = self.last.lock().unwrap_or_else(|e| e.into_inner());
            if let Some(t) = *last {
                let wait = self.min_interval.saturating_sub(t.elapsed());
                if !wait.is_zero() {
                    std::thread::sleep(wait);
                }
            }
            *last = Some(Instant::now());
        }

        fn url(&self, doi: &str) -> String {
            format!("{}/{}", self.base, doi.trim())
        }
    }

    fn status_outcome(status: u16) -> Option<Resolved> {
        match status {
            401 | 402 | 403 | 451 => Some(Resolved::LicenseBlocked(format!("HTTP {status}"))),
            404 | 410 => Some(Resolved::NoFullText(format!("HTTP {status}"))),
            _ => None,
        }
    }

    impl Resolver for HttpResolver {
        fn resolve(&self, doi: &str) -> Resolved {
            let url = self.url(doi);
            self.pace();
            match self.agent.head(&url).header("Accept", ACCEPT).call() {
                Ok(resp) => {
                    if let Some(r) = status_outcome(resp.status().as_u16()) {
                        return r;
                    }
                }
                Err(e) => return Resolved::Error(format!("HEAD {url}: {e}")),
            }
            self.pace();
            let mut resp = match self.agent.get(&url).header("Accept", ACCEPT).call() {
                Ok(r) => r,
                Err(e) => return Resolved::Error(format!("GET {url}: {e}")),
            };
            let status = resp.status().as_u16();
            if let Some(r) = status_outcome(status) {
                return r;
            }
            if !(200..300).contains(&status) {
                return Resolved::Error(format!("GET {url}: HTTP {status}"));
            }
            let ctype = resp
                .headers()
                .get("content-type")
                .and_then(|v| v.to_str().ok())
                .unwrap_or("")
                .to_ascii_lowercase();
            let body = match resp.body_mut().read_to_string() {
                Ok(b) => b,
                Err(e) => return Resolved::Error(format!("GET {url}: {e}")),
            };
            if ctype.contains("xml") {
                Resolved::Tei(body)
            } else if ctype.starts_with("text/plain") {
                Resolved::Plaintext(body)
            } else {
                Resolved::NoFullText(format!("unsupported content type {ctype:?}"))
            }
        }
    }
}

/// One result per input DOI, in input order. Repeated DOIs (case-insensitive)
/// reuse the first result. Payloads are written only for fetched outcomes.
pub fn acquire_fulltext(
    dois: &[String],
    resolver: &dyn Resolver,
    out_dir: &Path,
    exec: Execution,
) -> std::io::Result<Vec<AcquisitionResult>> {
    std::fs::create_dir_all(out_dir)?;
    let mut first: HashMap<String, usize> = HashMap::new();
    let mut unique: Vec<&String> = Vec::new();
    let slot: Vec<usize> = dois
        .iter()
        .map(|d| {
            *first.entry(d.trim().to_lowercase()).or_insert_with(|| {
                unique.push(d);
                unique.len() - 1
            })
        })
        .collect();

    let resolved = exec.map(&unique, |d| resolver.resolve(d));
    let mut results = Vec::with_capacity(unique.len());
    for (doi, r) in unique.iter().zip(resolved) {
        let stem = sanitize_doi(doi);
        let (outcome, payload, detail) = match r {
            Resolved::Tei(body) => (Outcome::FetchedTei, Some((format!("{stem}.tei.xml"), body)), String::new()),
            Resolved::Plaintext(body) => (Outcome::FetchedPlaintext, Some((format!("{stem}.txt"), body)), String::new()),
            Resolved::NoFullText(d) => (Outcome::NoFullText, None, d),
            Resolved::LicenseBlocked(d) => (Outcome::LicenseBlocked, None, d),
            Resolved::Error(d) => (Outcome::Error, None, d),
        };
        let payload_path = match payload {
            Some((name, body)) => {
                crate::jsonl::write_atomic(&out_dir.join(&name), body.as_bytes())?;
                Some(PathBuf::from(name))
            }
            None => None,
        };
        results.push(AcquisitionResult { doc_doi: doi.to_string(), outcome, payload_path, detail });
    }
    Ok(slot.into_iter().map(|i| results[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture_dir(fetchable: &[usize]) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        for &i in fetchable {
            let doi = format!("10.1000/paper{i}");
            let ext = if i % 2 == 0 { "tei.xml" } else { "txt" };
            std::fs::write(dir.path().join(format!("{}.{ext}", sanitize_doi(&doi))), format!("body {i}")).unwrap();
        }
        std::fs::write(dir.path().join(format!("{}.license-blocked", sanitize_doi("10.1000/locked"))), "").unwrap();
        dir
    }

    #[test]
    fn sanitize_is_injective_on_tricky_inputs() {
        let inputs = ["10.1000/a_b", "10.1000/a/b", "10.1000/a_2fb", "10.1000/A(B)", "10.1000/a%b"];
        let out: std::collections::HashSet<String> = inputs.iter().map(|d| sanitize_doi(d)).collect();
        assert_eq!(out.len(), inputs.len());
        assert_eq!(sanitize_doi("10.3886/ICPSR06635"), "10.3886_2ficpsr06635");
    }

    #[test]
    fn fourteen_of_one_hundred() {
        let fetchable: Vec<usize> = (0..100).filter(|i| i % 7 == 0).take(14).collect();
        let fixtures = fixture_dir(&fetchable);
        let res = FixtureResolver::new(fixtures.path());
        let dois: Vec<String> = (0..100).map(|i| format!("10.1000/paper{i}")).collect();
        let out = tempfile::tempdir().unwrap();
        let results = acquire_fulltext(&dois, &res, out.path(), Execution::default()).unwrap();
        let s = AcquisitionSummary::from_results(&results);
        assert_eq!((s.fetched(), s.no_full_text), (14, 86));
        assert_eq!(std::fs::read_dir(out.path()).unwrap().count(), 14);
        for (r, d) in results.iter().zip(&dois) {
            assert_eq!(&r.doc_doi, d);
            assert_eq!(r.payload_path.is_some(), r.outcome.is_fetched());
        }
    }

    #[test]
    fn duplicates_and_empty() {
        let fixtures = fixture_dir(&[0]);
        let res = FixtureResolver::new(fixtures.path());
        let out = tempfile::tempdir().unwrap();
        assert!(acquire_fulltext(&[], &res, out.path(), Execution::Sequential).unwrap().is_empty());
        let dois = vec!["10.1000/paper0".to_string(), "10.1000/locked".into(), "10.1000/PAPER0".into()];
        let r = acquire_fulltext(&dois, &res, out.path(), Execution::Sequential).unwrap();
        assert_eq!(r.len(), 3);
        assert_eq!(r[0], r[2]);
        assert_eq!(r[1].outcome, Outcome::LicenseBlocked);
    }

    #[test]
    fn outcome_names() {
        assert_eq!(serde_json::to_string(&Outcome::FetchedTei).unwrap(), "\"FetchedTEI\"");
    }

    #[cfg(feature = "http")]
    #[test]
    fn http_resolver_negotiates_and_checks_license() {
        use std::io::{BufRead, BufReader, Write};
        use std::net::TcpListener;
        use std::time::Duration;

        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let mut stream = stream.unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut request_line = String::new();
                reader.read_line(&mut request_line).unwrap();
                loop {
                    let mut l = String::new();
                    if reader.read_line(&mut l).unwrap() == 0 || l == "\r\n" {
                        break;
                    }
                }
                let mut parts = request_line.split_whitespace();
                let (method, path) = (parts.next().unwrap_or(""), parts.next().unwrap_or(""));
                let (status, ctype, body) = match path {
                    p if p.ends_with("tei") => ("200 OK", "application/tei+xml", "<TEI/>"),
                    p if p.ends_with("plain") => ("200 OK", "text/plain; charset=utf-8", "hello"),
                    p if p.ends_with("locked") => ("451 Unavailable", "text/plain", ""),
                    p if p.ends_with("pdf") => ("200 OK", "application/pdf", "%PDF"),
                    _ => ("404 Not Found", "text/plain", ""),
                };
                let body = if method == "HEAD" { "" } else { body };
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status}\r\nContent-Type: {ctype}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
            }
        });
        let r = HttpResolver::new(&format!("http://{addr}"), Duration::from_millis(1), Duration::from_secs(5));
        assert_eq!(r.resolve("10.1/tei"), Resolved::Tei("<TEI/>".into()));
        assert_eq!(r.resolve("10.1/plain"), Resolved::Plaintext("hello".into()));
        assert!(matches!(r.resolve("10.1/locked"), Resolved::LicenseBlocked(_)));
        assert!(matches!(r.resolve("10.1/pdf"), Resolved::NoFullText(_)));
        assert!(matches!(r.resolve("10.1/missing"), Resolved::NoFullText(_)));
        let dead = HttpResolver::new("http://127.0.0.1:9", Duration::ZERO, Duration::from_secs(2));
        assert!(matches!(dead.resolve("10.1/x"), Resolved::Error(_)));
    }
}
