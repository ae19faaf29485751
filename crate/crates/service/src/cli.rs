//! The `lqb` command line: one subcommand per pipeline stage.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lqb_core::corpus::{load_corpus, paragraph_count, Corpus};
use lqb_core::dedup::{dedup_bank, Granularity, DEFAULT_THRESHOLD};
use lqb_core::embedding::{EmbeddingProvider, DEDUP_MODEL, RECOMMENDER_MODEL};
use lqb_core::generation::{
    questions_from_generations, run_generation, write_audit_log, GenerationBackend,
    GenerationConfig, MockBackend, RemoteCompletionBackend, RunOptions,
};
use lqb_core::metrics::{evaluate, render_table, GroupBy};
use lqb_core::promptgen::Strategy;
use lqb_core::qbank::{ingest_labels, load_bank, read_annotations, save_bank, QuestionBank};
use lqb_core::recommender::{build_index, recommend, RecommendOptions, RecommenderIndex};
use lqb_core::retry::RetryPolicy;
use serde::Serialize;

use crate::config::{ProviderKind, ProviderSettings, ServiceConfig};
use crate::http::RecommendResponse;

/// Exit status when a generation batch finishes with failed prompts.
pub const EXIT_PARTIAL: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "lqb",
    version,
    about = "Build, evaluate and serve a legal question bank"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and validate a corpus directory, then print a summary.
    Ingest {
        /// Directory of page JSON files.
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Prompt a text-generation backend and write the generated questions as a bank.
    Generate(GenerateArgs),
    /// Remove near-duplicate questions.
    Dedup(DedupArgs),
    /// Apply annotator labels and verified scopes to a bank.
    LabelIngest {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// CSV, JSON array or JSON lines with qid, label, page, pid_list.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute precision, coverage, diversity and generality.
    Evaluate {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "source")]
        by: GroupBy,
        /// Write the full report as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Embed answers and question strings into a recommender index.
    Index {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        embed: EmbedArgs,
    },
    /// Recommend questions for a free-text scenario; prints JSON.
    Recommend {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// The user's description of their situation.
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
        k: u32,
        #[arg(long, default_value_t = 300)]
        excerpt_chars: usize,
        #[command(flatten)]
        embed: EmbedArgs,
    },
    /// Serve the recommendation API (and optionally the web UI assets).
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    /// Deterministic offline backend.
    Mock,
    /// OpenAI-style completions endpoint from LQB_API_URL / LQB_API_KEY.
    Remote,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Directory of page JSON files.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Partitioning strategy: section, paragraph or hybrid.
    #[arg(long)]
    pub strategy: Strategy,
    #[arg(long, value_enum, default_value = "mock")]
    pub backend: BackendKind,
    /// Bank file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Add to the bank already at --out instead of replacing it.
    #[arg(long)]
    pub append: bool,
    /// Write every prompt and raw completion as JSON lines.
    #[arg(long)]
    pub audit_log: Option<PathBuf>,
    /// Write the batch report as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// JSON map from prompt key to canned completion, for the mock backend.
    #[arg(long)]
    pub mock_fixtures: Option<PathBuf>,
    #[arg(long, default_value = "davinci")]
    pub model: String,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 0.9)]
    pub top_p: f64,
    #[arg(long, default_value_t = 0.3)]
    pub frequency_penalty: f64,
    #[arg(long, default_value_t = 0.1)]
    pub presence_penalty: f64,
    #[arg(long, default_value_t = 512)]
    pub max_tokens: u32,
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,
    #[command(flatten)]
    pub retry: RetryArgs,
}

#[derive(Debug, Clone, Args)]
pub struct RetryArgs {
    /// Attempts per call, including the first.
    #[arg(long, default_value_t = 3)]
    pub attempts: u32,
    /// Delay before the first retry; doubles on each further retry.
    #[arg(long, default_value_t = 1000)]
    pub backoff_ms: u64,
    /// Per-call timeout.
    #[arg(long, default_value_t = 60)]
    pub timeout_secs: u64,
}

impl RetryArgs {
    fn policy(&self) -> RetryPolicy {
        RetryPolicy {
            attempts: self.attempts.max(1),
            initial_backoff: Duration::from_millis(self.backoff_ms),
            timeout: Duration::from_secs(self.timeout_secs.max(1)),
        }
    }
}

#[derive(Debug, Args)]
pub struct DedupArgs {
    #[arg(long)]
    pub bank: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Cosine similarity at or above which two questions are duplicates.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Also merge duplicates across pages (per source).
    #[arg(long, conflicts_with = "per_page")]
    pub global: bool,
    /// Only merge duplicates within a page (the default).
    #[arg(long)]
    pub per_page: bool,
    /// Write the cluster reports as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub embed: EmbedArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EmbedArgs {
    #[arg(long, value_enum, default_value = "local")]
    pub embedder: ProviderKind,
    /// Embeddings endpoint; defaults to LQB_EMBED_URL.
    #[arg(long)]
    pub embed_url: Option<String>,
    /// Remote embedding model; defaults depend on the subcommand.
    #[arg(long)]
    pub embed_model: Option<String>,
}

impl EmbedArgs {
    fn settings(&self, default_model: &str) -> ProviderSettings {
        ProviderSettings {
            kind: self.embedder,
            endpoint: self.embed_url.clone(),
            model: self
                .embed_model
                .clone()
                .unwrap_or_else(|| default_model.to_string()),
        }
    }

    fn provider(&self, default_model: &str) -> anyhow::Result<Arc<dyn EmbeddingProvider>> {
        self.settings(default_model).build(RetryPolicy::default())
    }
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// TOML or JSON service configuration; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub bank: Option<PathBuf>,
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub listen: Option<SocketAddr>,
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    /// Allowed browser origin; repeat for several.
    #[arg(long = "cors-origin")]
    pub cors_origins: Vec<String>,
    #[arg(long, value_enum)]
    pub embedder: Option<ProviderKind>,
}

impl ServeArgs {
    pub fn resolve(&self) -> anyhow::Result<ServiceConfig> {
        let mut cfg = match &self.config {
            Some(path) => ServiceConfig::load(path)?,
            None => {
                let (Some(c), Some(b), Some(i)) = (&self.corpus, &self.bank, &self.index) else {
                    bail!("serve needs --config or all of --corpus, --bank and --index");
                };
                ServiceConfig::new(c.clone(), b.clone(), i.clone())
            }
        };
        if let Some(c) = &self.corpus {
            cfg.corpus = c.clone();
        }
        if let Some(b) = &self.bank {
            cfg.bank = b.clone();
        }
        if let Some(i) = &self.index {
            cfg.index = i.clone();
        }
        if let Some(l) = self.listen {
            cfg.listen = l;
        }
        if self.static_dir.is_some() {
            cfg.static_dir = self.static_dir.clone();
        }
        if !self.cors_origins.is_empty() {
            cfg.cors_allowlist = self.cors_origins.clone();
        }
        if let Some(kind) = self.embedder {
            cfg.provider.kind = kind;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn load(corpus: &Path, bank: &Path) -> anyhow::Result<(Corpus, QuestionBank)> {
    let corpus = load_corpus(corpus)?;
    let bank = load_bank(bank, &corpus)?;
    Ok((corpus, bank))
}

pub fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Ingest { corpus } => {
            let corpus = load_corpus(&corpus)?;
            #[derive(Serialize)]
            struct Summary<'a> {
                pages: usize,
                paragraphs: usize,
                corpus_hash: &'a str,
            }
            let summary = Summary {
                pages: corpus.len(),
                paragraphs: paragraph_count(&corpus),
                corpus_hash: corpus.hash(),
            };
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Generate(args) => return generate(args),
        Command::Dedup(args) => {
            let (_, bank) = load(&args.corpus, &args.bank)?;
            let provider = args.embed.provider(DEDUP_MODEL)?;
            let granularity = if args.global {
                Granularity::Global
            } else {
                Granularity::PerPage
            };
            let (kept, reports) =
                dedup_bank(&bank, provider.as_ref(), args.threshold, granularity)?;
            save_bank(&kept, &args.out)?;
            if let Some(path) = &args.report {
                write_json(path, &reports)?;
            }
            eprintln!("kept {} of {} questions", kept.len(), bank.len());
        }
        Command::LabelIngest {
            bank,
            corpus,
            labels,
            out,
        } => {
            let (corpus, bank) = load(&corpus, &bank)?;
            let annotations = read_annotations(&labels)?;
            let labelled = ingest_labels(&bank, &annotations, &corpus)?;
            save_bank(&labelled, &out)?;
            eprintln!("applied {} labels", annotations.len());
        }
        Command::Evaluate {
            bank,
            corpus,
            by,
            out,
        } => {
            let (corpus, bank) = load(&corpus, &bank)?;
            let report = evaluate(&bank, &corpus, by);
            print!("{}", render_table(&report));
            if let Some(path) = &out {
                write_json(path, &report)?;
            }
        }
        Command::Index {
            bank,
            corpus,
            out,
            embed,
        } => {
            let (corpus, bank) = load(&corpus, &bank)?;
            let provider = embed.provider(RECOMMENDER_MODEL)?;
            let index = build_index(&bank, &corpus, provider.as_ref())?;
            index.save(&out)?;
            eprintln!(
                "indexed {} questions over {} scopes",
                index.len(),
                index.distinct_scopes()
            );
        }
        Command::Recommend {
            index,
            bank,
            corpus,
            query,
            k,
            excerpt_chars,
            embed,
        } => {
            let (corpus, bank) = load(&corpus, &bank)?;
            let index = RecommenderIndex::load(&index)?;
            index.check_fresh(&bank.content_hash(), corpus.hash())?;
            let provider = embed.provider(RECOMMENDER_MODEL)?;
            let options = RecommendOptions {
                k: k as usize,
                excerpt_chars,
            };
            let results = recommend(&query, &index, &corpus, provider.as_ref(), &options)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&RecommendResponse { results })?
            );
        }
        Command::Serve(args) => {
            let config = args.resolve()?;
            tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()?
                .block_on(crate::http::serve(config))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn generate(args: GenerateArgs) -> anyhow::Result<ExitCode> {
    let corpus = load_corpus(&args.corpus)?;
    let retry = args.retry.policy();
    let backend: Arc<dyn GenerationBackend> = match args.backend {
        BackendKind::Mock => match &args.mock_fixtures {
            Some(path) => Arc::new(MockBackend::from_fixture_file(path)?),
            None => Arc::new(MockBackend::new()),
        },
        BackendKind::Remote => Arc::new(RemoteCompletionBackend::from_env(retry.timeout)?),
    };
    let config = GenerationConfig {
        temperature: args.temperature,
        top_p: args.top_p,
        frequency_penalty: args.frequency_penalty,
        presence_penalty: args.presence_penalty,
        max_tokens: args.max_tokens,
        model_id: args.model.clone(),
    };
    if !(args.top_p > 0.0 && args.top_p <= 1.0) {
        bail!("--top-p must be in (0, 1]");
    }
    let options = RunOptions {
        max_in_flight: args.max_in_flight.max(1),
        retry,
    };
    let run = run_generation(&corpus, args.strategy, backend, &config, &options);

    if let Some(path) = &args.audit_log {
        write_audit_log(&run.records, path)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &args.report {
        write_json(path, &run.report)?;
    }

    let mut bank = if args.append && args.out.exists() {
        load_bank(&args.out, &corpus)?
    } else {
        QuestionBank::new(corpus.hash())
    };
    let questions = questions_from_generations(&run.records);
    let generated = questions.len();
    for q in questions {
        bank.push(q)?;
    }
    save_bank(&bank, &args.out)?;
    eprintln!(
        "{} prompts, {} failed, {} questions generated",
        run.report.total, run.report.failed, generated
    );
    if run.report.failed > 0 {
        for f in &run.report.failures {
            eprintln!(
                "prompt {} (page {}): {}",
                f.prompt_index, f.page_id, f.error
            );
        }
        return Ok(ExitCode::from(EXIT_PARTIAL));
    }
    Ok(ExitCode::SUCCESS)
}
