//! Question generation: drive a text-generation backend over every prompt of a
//! corpus, parse completions into questions and attach initial answer scopes.

mod mock;
mod parse;
mod remote;

use std::sync::mpsc;
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::promptgen::{build_prompts, Prompt, Strategy};
use crate::qbank::{AnswerScope, Label, Provenance, Question, Source};
use crate::retry::RetryPolicy;

pub use mock::{MockBackend, MOCK_BACKEND_ID};
pub use parse::parse_questions;
pub use remote::{RemoteCompletionBackend, API_KEY_ENV, API_URL_ENV};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerationError {
    #[error("backend unreachable: {0}")]
    Transport(String),
    #[error("backend returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("backend call timed out after {0:?}")]
    Timeout(Duration),
    #[error("unexpected backend response: {0}")]
    Protocol(String),
    #[error("{0}")]
    Backend(String),
}

impl GenerationError {
    fn is_retryable(&self) -> bool {
        match self {
            GenerationError::Transport(_) | GenerationError::Timeout(_) => true,
            GenerationError::Http { status, .. } => *status >= 500 || *status == 429,
            GenerationError::Protocol(_) | GenerationError::Backend(_) => false,
        }
    }
}

/// Decoding settings passed to the backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub temperature: f64,
    pub top_p: f64,
    pub frequency_penalty: f64,
    pub presence_penalty: f64,
    pub max_tokens: u32,
    pub model_id: String,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            top_p: 0.9,
            frequency_penalty: 0.3,
            presence_penalty: 0.1,
            max_tokens: 512,
            model_id: "davinci".to_string(),
        }
    }
}

/// A text-generation service. Implementations must return (success or error) rather
/// than block forever; [`run_generation`] still abandons calls that exceed the
/// per-call timeout.
pub trait GenerationBackend: Send + Sync {
    fn backend_id(&self) -> &str;

    fn complete(
        &self,
        prompt_text: &str,
        config: &GenerationConfig,
    ) -> Result<String, GenerationError>;
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            max_in_flight: 4,
            retry: RetryPolicy::default(),
        }
    }
}

/// Audit record for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawGeneration {
    pub prompt_index: usize,
    pub prompt: Prompt,
    pub completion: Option<String>,
    pub error: Option<String>,
    pub attempts: u32,
    pub backend_id: String,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptFailure {
    pub prompt_index: usize,
    pub page_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BatchReport {
    pub total: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub failures: Vec<PromptFailure>,
}

impl BatchReport {
    pub fn failure_rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.failed as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenerationRun {
    pub strategy: Strategy,
    pub records: Vec<RawGeneration>,
    pub report: BatchReport,
}

/// Every prompt of the corpus for `strategy`, pages in id order.
pub fn corpus_prompts(corpus: &Corpus, strategy: Strategy) -> Vec<Prompt> {
    corpus
        .pages()
        .flat_map(|page| build_prompts(page, strategy))
        .collect()
}

fn call_with_timeout(
    backend: &Arc<dyn GenerationBackend>,
    text: &str,
    config: &GenerationConfig,
    timeout: Duration,
) -> Result<String, GenerationError> {
    let (tx, rx) = mpsc::channel();
    let backend = Arc::clone(backend);
    let (text, config) = (text.to_string(), config.clone());
    std::thread::spawn(move || {
        let _ = tx.send(backend.complete(&text, &config));
    });
    rx.recv_timeout(timeout)
        .unwrap_or(Err(GenerationError::Timeout(timeout)))
}

/// Runs the backend once per prompt, at most `max_in_flight` calls at a time.
/// Records come back in prompt order; failures are recorded, never fatal.
pub fn run_generation(
    corpus: &Corpus,
    strategy: Strategy,
    backend: Arc<dyn GenerationBackend>,
    config: &GenerationConfig,
    options: &RunOptions,
) -> GenerationRun {
    let prompts = corpus_prompts(corpus, strategy);
    let backend_id = backend.backend_id().to_string();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.max_in_flight.max(1))
        .build()
        .expect("generation thread pool");

    let records: Vec<RawGeneration> = pool.install(|| {
        prompts
            .into_par_iter()
            .enumerate()
            .map(|(prompt_index, prompt)| {
                let text = prompt.text();
                let outcome = options.retry.run(GenerationError::is_retryable, |_| {
                    call_with_timeout(&backend, &text, config, options.retry.timeout)
                });
                let (completion, error, attempts) = match outcome {
                    Ok((c, n)) => (Some(c), None, n),
                    Err((e, n)) => (None, Some(e.to_string()), n),
                };
                RawGeneration {
                    prompt_index,
                    prompt,
                    completion,
                    error,
                    attempts,
                    backend_id: backend_id.clone(),
                    timestamp: chrono::Utc::now().to_rfc3339(),
                }
            })
            .collect()
    });

    let failures: Vec<PromptFailure> = records
        .iter()
        .filter_map(|r| {
            r.error.as_ref().map(|e| PromptFailure {
                prompt_index: r.prompt_index,
                page_id: r.prompt.page_id.clone(),
                error: e.clone(),
            })
        })
        .collect();
    let report = BatchReport {
        total: records.len(),
        succeeded: records.len() - failures.len(),
        failed: failures.len(),
        failures,
    };
    if report.failed > 0 {
        tracing::warn!(
            failed = report.failed,
            total = report.total,
            "generation batch had failures"
        );
    }
    GenerationRun {
        strategy,
        records,
        report,
    }
}

/// The initial scope is everything the prompt showed the model.
pub fn assign_initial_scope(prompt: &Prompt) -> AnswerScope {
    AnswerScope::new(prompt.page_id.clone(), prompt.scope_pids.iter().copied())
}

/// Turns successful generations into unverified bank questions. Question ids are
/// `<source>-<page>-<n>` with `n` counting from 1 within each page.
pub fn questions_from_generations(records: &[RawGeneration]) -> Vec<Question> {
    let mut per_page: std::collections::HashMap<&str, usize> = Default::default();
    let mut out = Vec::new();
    for record in records {
        let Some(completion) = &record.completion else {
            continue;
        };
        let source = Source::from(record.prompt.strategy);
        for text in parse_questions(completion) {
            let n = per_page.entry(record.prompt.page_id.as_str()).or_default();
            *n += 1;
            out.push(Question {
                qid: format!("{source}-{}-{:04}", record.prompt.page_id, n),
                text,
                source,
                page: record.prompt.page_id.clone(),
                initial_scope: assign_initial_scope(&record.prompt),
                verified_scope: None,
                label: Label::Unverified,
                provenance: Provenance::Generated {
                    backend_id: record.backend_id.clone(),
                    prompt_index: record.prompt_index,
                },
            });
        }
    }
    out
}

/// Writes the audit log as JSON lines.
pub fn write_audit_log(
    records: &[RawGeneration],
    path: impl AsRef<std::path::Path>,
) -> std::io::Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Page, Paragraph, Pid, Section};
    use std::collections::BTreeSet;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn prompt(strategy: Strategy, scope: &[u32], attention: &[u32]) -> Prompt {
        Prompt {
            page_id: "p3".into(),
            strategy,
            context_text: "ctx".into(),
            instruction: "inst".into(),
            attention_pids: attention.iter().map(|&p| Pid::Para(p)).collect(),
            scope_pids: scope.iter().map(|&p| Pid::Para(p)).collect(),
        }
    }

    #[test]
    fn decoding_defaults() {
        let c = GenerationConfig::default();
        assert_eq!((c.temperature, c.top_p), (1.0, 0.9));
        assert_eq!((c.frequency_penalty, c.presence_penalty), (0.3, 0.1));
        assert_eq!(c.max_tokens, 512);
    }

    #[test]
    fn initial_scope_is_prompt_scope() {
        let s = assign_initial_scope(&prompt(Strategy::ParagraphBased, &[2], &[2]));
        assert_eq!(s, AnswerScope::new("p3", [Pid::Para(2)]));
        let s = assign_initial_scope(&prompt(Strategy::Hybrid, &[1, 2, 3, 4], &[2]));
        assert_eq!(
            s.pid_list,
            Some((1..=4).map(Pid::Para).collect::<BTreeSet<_>>())
        );
        let s = assign_initial_scope(&prompt(Strategy::SectionBased, &[7], &[7]));
        assert_eq!(s.to_string(), "[p3: {7}]");
    }

    fn corpus(sizes: &[u32]) -> Corpus {
        Corpus::from_pages(sizes.iter().enumerate().map(|(i, &n)| Page {
            page_id: format!("{}", i + 1),
            title: format!("Page {}", i + 1),
            url: None,
            topic: None,
            sections: vec![Section {
                sid: 1,
                title: None,
                paragraphs: (1..=n)
                    .map(|pid| Paragraph {
                        pid,
                        text: format!("The tenant must keep deposit receipt number {pid} safe."),
                    })
                    .collect(),
            }],
        }))
        .unwrap()
    }

    struct Flaky {
        calls: AtomicUsize,
        fail_first: usize,
    }

    impl GenerationBackend for Flaky {
        fn backend_id(&self) -> &str {
            "flaky"
        }

        fn complete(&self, _: &str, _: &GenerationConfig) -> Result<String, GenerationError> {
            if self.calls.fetch_add(1, Ordering::SeqCst) < self.fail_first {
                Err(GenerationError::Transport("connection reset".into()))
            } else {
                Ok("1. Is it fine?".into())
            }
        }
    }

    struct Hanging;

    impl GenerationBackend for Hanging {
        fn backend_id(&self) -> &str {
            "hanging"
        }

        fn complete(&self, _: &str, _: &GenerationConfig) -> Result<String, GenerationError> {
            std::thread::sleep(Duration::from_secs(5));
            Ok("1. Too late?".into())
        }
    }

    #[test]
    fn retries_recover_transient_failures() {
        let backend = Arc::new(Flaky {
            calls: AtomicUsize::new(0),
            fail_first: 1,
        });
        let opts = RunOptions {
            max_in_flight: 1,
            retry: RetryPolicy::immediate(3),
        };
        let run = run_generation(
            &corpus(&[2]),
            Strategy::ParagraphBased,
            backend,
            &GenerationConfig::default(),
            &opts,
        );
        assert_eq!(run.report.failed, 0);
        assert_eq!(run.records[0].attempts, 2);
        assert_eq!(run.records[1].attempts, 1);
    }

    #[test]
    fn per_call_timeout_is_recorded() {
        let opts = RunOptions {
            max_in_flight: 2,
            retry: RetryPolicy {
                attempts: 1,
                initial_backoff: Duration::ZERO,
                timeout: Duration::from_millis(50),
            },
        };
        let run = run_generation(
            &corpus(&[2]),
            Strategy::Hybrid,
            Arc::new(Hanging),
            &GenerationConfig::default(),
            &opts,
        );
        assert_eq!(run.report.failed, 2);
        assert!(run.report.failures[0].error.contains("timed out"));
    }

    #[test]
    fn questions_get_page_scoped_ids() {
        let run = run_generation(
            &corpus(&[2, 1]),
            Strategy::ParagraphBased,
            Arc::new(MockBackend::new().with_fixture("x", "")),
            &GenerationConfig::default(),
            &RunOptions::default(),
        );
        let qs = questions_from_generations(&run.records);
        assert!(!qs.is_empty());
        assert!(qs.iter().any(|q| q.qid == "paragraph-1-0001"));
        assert!(qs.iter().all(|q| q.check().is_ok()));
        for q in &qs {
            let Provenance::Generated { prompt_index, .. } = &q.provenance else {
                panic!()
            };
            assert_eq!(
                q.initial_scope,
                assign_initial_scope(&run.records[*prompt_index].prompt)
            );
        }
    }
}
