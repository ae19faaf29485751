#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use lqb_core::corpus::load_corpus;
use lqb_core::embedding::LocalEmbedder;
use lqb_core::generation::{
    questions_from_generations, run_generation, GenerationConfig, MockBackend, RunOptions,
};
use lqb_core::promptgen::Strategy;
use lqb_core::qbank::{save_bank, QuestionBank};
use lqb_core::recommender::build_index;
use lqb_service::config::ServiceConfig;
use lqb_service::http::{router, AppState};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(rel)
}

/// Copies the landlord pages and the privacy page into `dir/corpus`.
pub fn write_corpus(dir: &Path) -> PathBuf {
    let out = dir.join("corpus");
    std::fs::create_dir_all(&out).unwrap();
    for rel in [
        "corpus/1.json",
        "corpus/2.json",
        "corpus/3.json",
        "privacy/69.json",
    ] {
        let src = fixture(rel);
        std::fs::copy(&src, out.join(src.file_name().unwrap())).unwrap();
    }
    out
}

/// Corpus, mock Hybrid bank and local index on disk, ready for `ServiceConfig`.
pub fn artifacts(dir: &Path) -> ServiceConfig {
    let corpus_dir = write_corpus(dir);
    let corpus = load_corpus(&corpus_dir).unwrap();
    let run = run_generation(
        &corpus,
        Strategy::Hybrid,
        Arc::new(MockBackend::new()),
        &GenerationConfig::default(),
        &RunOptions::default(),
    );
    let bank =
        QuestionBank::from_questions(corpus.hash(), questions_from_generations(&run.records))
            .unwrap();
    let bank_path = dir.join("bank.jsonl");
    save_bank(&bank, &bank_path).unwrap();
    let index_path = dir.join("index.lqbi");
    build_index(&bank, &corpus, &LocalEmbedder)
        .unwrap()
        .save(&index_path)
        .unwrap();
    ServiceConfig::new(corpus_dir, bank_path, index_path)
}

/// The API on an ephemeral port, alive until dropped.
pub struct Server {
    pub url: String,
    _rt: tokio::runtime::Runtime,
}

pub fn serve(state: AppState) -> Server {
    serve_with(state, &[], None)
}

pub fn serve_with(state: AppState, cors: &[String], static_dir: Option<&Path>) -> Server {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .unwrap();
    let app = router(state, cors, static_dir).unwrap();
    let listener = rt
        .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
        .unwrap();
    let addr = listener.local_addr().unwrap();
    rt.spawn(async move { axum::serve(listener, app).await.unwrap() });
    Server {
        url: format!("http://{addr}"),
        _rt: rt,
    }
}

pub fn lqb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lqb"))
        .args(args)
        .output()
        .unwrap()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub const QUERIES: [&str; 10] = [
    "my landlord kept my deposit after I moved out",
    "how much rent can the landlord increase",
    "the ceiling leaks and nobody will repair it",
    "can I withhold rent until repairs are done",
    "who pays for damage to the premises",
    "what happens if I pay rent late",
    "my landlord wants to inspect the flat",
    "how is personal data collected and used",
    "can a company share my data without consent",
    "deposit deductions for cleaning and wear",
];
