#![allow(dead_code)]

use std::path::PathBuf;

use lqb_core::corpus::{load_corpus, Corpus};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(rel)
}

pub fn landlord_corpus() -> Corpus {
    load_corpus(fixture("corpus")).unwrap()
}

/// An HTTP server on an ephemeral port, alive until dropped.
pub struct MockServer {
    pub url: String,
    _rt: tokio::runtime::Runtime,
}

pub fn spawn(router: axum::Router) -> MockServer {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .unwrap();
    let listener = rt
        .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
        .unwrap();
    let addr = listener.local_addr().unwrap();
    rt.spawn(async move { axum::serve(listener, router).await.unwrap() });
    MockServer {
        url: format!("http://{addr}"),
        _rt: rt,
    }
}

use lqb_core::corpus::{Page, Paragraph, Pid, Section};
use lqb_core::qbank::{AnswerScope, Label, Provenance, Question, QuestionBank, Source};

/// Vocabulary for synthetic text; indices are drawn by a fixed arithmetic walk.
const WORDS: &[&str] = &[
    "landlord",
    "tenant",
    "rent",
    "deposit",
    "repair",
    "leak",
    "notice",
    "court",
    "lease",
    "premises",
    "damage",
    "contract",
    "employer",
    "wages",
    "dismissal",
    "privacy",
    "data",
    "consent",
    "neighbour",
    "noise",
    "debt",
    "loan",
    "interest",
    "police",
    "arrest",
    "bail",
    "marriage",
    "divorce",
    "custody",
    "property",
    "will",
    "estate",
    "insurance",
    "claim",
];

fn words(seed: usize, n: usize) -> String {
    (0..n)
        .map(|i| WORDS[(seed * 31 + i * 17 + i * i) % WORDS.len()])
        .collect::<Vec<_>>()
        .join(" ")
}

/// `pages` pages of three paragraphs each, and `questions` CORRECT questions spread
/// round-robin over them with one- or two-paragraph scopes.
pub fn synthetic(pages: usize, questions: usize) -> (Corpus, QuestionBank) {
    let corpus = Corpus::from_pages((0..pages).map(|p| Page {
        page_id: format!("s{p}"),
        title: format!("Synthetic page {p}"),
        url: None,
        topic: None,
        sections: vec![Section {
            sid: 1,
            title: None,
            paragraphs: (1..=3)
                .map(|pid| Paragraph {
                    pid,
                    text: words(p * 3 + pid as usize, 40),
                })
                .collect(),
        }],
    }))
    .unwrap();
    let qs = (0..questions).map(|i| {
        let page = format!("s{}", i % pages);
        let first = (i / pages) % 3 + 1;
        let pids: Vec<Pid> = if i % 5 == 0 {
            vec![Pid::Para(first as u32), Pid::Para((first % 3 + 1) as u32)]
        } else {
            vec![Pid::Para(first as u32)]
        };
        let scope = AnswerScope::new(page.clone(), pids);
        Question {
            qid: format!("q{i:06}"),
            text: format!("What about {}?", words(i, 8)),
            source: Source::Hybrid,
            page,
            initial_scope: scope.clone(),
            verified_scope: Some(scope),
            label: Label::Correct,
            provenance: Provenance::Generated {
                backend_id: "synthetic".into(),
                prompt_index: i,
            },
        }
    });
    let bank = QuestionBank::from_questions(corpus.hash(), qs).unwrap();
    (corpus, bank)
}

/// Peak resident set size of this process, in KiB (Linux only).
pub fn peak_rss_kib() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find(|l| l.starts_with("VmHWM:"))?
        .split_whitespace()
        .nth(1)?
        .parse()
        .ok()
}
