//! Scenario-to-question recommendation.
//!
//! Every scoped question carries two vectors: an answer vector (the embedding of its
//! answer paragraphs, joined in id order with blank lines) and a string vector (the
//! embedding of the question text). A query is ranked against answer vectors;
//! questions sharing an answer scope collapse to the one whose string vector is
//! closest to the query.
//!
//! Ordering is total: answer score descending, then string score descending, then
//! qid ascending. A zero string vector scores 0.
//!
//! Vectors are stored as packed `f32` rows and widened to `f64` while scoring, so a
//! score equals [`cosine`](crate::embedding::cosine) on the widened row exactly.
//! The index file is `LQBINDEX`, a little-endian `u32` version and `u64` metadata
//! length, the metadata as JSON (header and entries), then the answer rows and the
//! string rows as little-endian `f32`.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{resolve_scope, Corpus, CorpusError, Pid};
use crate::embedding::{cosine_with_norms, norm, EmbedError, EmbeddingProvider};
use crate::qbank::{effective_scope, QuestionBank};

pub const INDEX_FORMAT: &str = "lqb-index/1";
const MAGIC: &[u8; 8] = b"LQBINDEX";
const FILE_VERSION: u32 = 1;
pub const DEFAULT_TOP_K: usize = 10;
pub const DEFAULT_EXCERPT_CHARS: usize = 300;

#[derive(Debug, Error)]
pub enum RecommendError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("query has no embeddable content")]
    UnembeddableQuery,
    #[error("the index holds no questions")]
    EmptyIndex,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("embedding provider failed: {0}")]
    Provider(#[from] EmbedError),
    #[error("question {qid}: {source}")]
    Scope {
        qid: String,
        #[source]
        source: CorpusError,
    },
    #[error("index is stale: built for {what} {expected}, loaded {actual}")]
    Stale {
        what: &'static str,
        expected: String,
        actual: String,
    },
    #[error("index was built with provider {index}, query provider is {query}")]
    ProviderMismatch { index: String, query: String },
    #[error("vector dimension {got} does not match index dimension {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("index file {path}: {message}")]
    File { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexHeader {
    pub format: String,
    pub provider_id: String,
    pub dim: usize,
    pub bank_hash: String,
    pub corpus_hash: String,
    pub entry_count: usize,
    /// Distinct answer scopes; one answer row is stored per scope.
    pub scope_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub qid: String,
    pub question: String,
    pub page_id: String,
    /// Sorted; together with `page_id` forms the scope key.
    pub pid_list: Vec<Pid>,
}

impl IndexEntry {
    fn scope_key(&self) -> (&str, &[Pid]) {
        (&self.page_id, &self.pid_list)
    }
}

/// Immutable after construction; share it freely across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct RecommenderIndex {
    pub header: IndexHeader,
    pub entries: Vec<IndexEntry>,
    /// One row per scope group, in order of first appearance in `entries`.
    answer_vectors: Vec<f32>,
    /// One row per entry.
    string_vectors: Vec<f32>,
    derived: Derived,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    header: IndexHeader,
    entries: Vec<IndexEntry>,
}

#[derive(Debug, Clone, PartialEq, Default)]
struct Derived {
    answer_norms: Vec<f64>,
    string_norms: Vec<f64>,
    /// Scope group of each entry; groups numbered by first appearance.
    group_of: Vec<usize>,
    group_count: usize,
}

fn scope_groups(entries: &[IndexEntry]) -> (Vec<usize>, usize) {
    let mut groups: HashMap<(&str, &[Pid]), usize> = HashMap::new();
    let group_of = entries
        .iter()
        .map(|e| {
            let next = groups.len();
            *groups.entry(e.scope_key()).or_insert(next)
        })
        .collect();
    (group_of, groups.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationResult {
    pub rank: usize,
    pub qid: String,
    pub question: String,
    pub score: f64,
    pub page_id: String,
    pub pid_list: Vec<Pid>,
    pub excerpt: String,
    pub url: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecommendOptions {
    pub k: usize,
    pub excerpt_chars: usize,
}

impl Default for RecommendOptions {
    fn default() -> Self {
        Self {
            k: DEFAULT_TOP_K,
            excerpt_chars: DEFAULT_EXCERPT_CHARS,
        }
    }
}

impl RecommendOptions {
    pub fn top(k: usize) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }
}

/// Per-entry similarities to one query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntryScore {
    pub entry: usize,
    pub answer: f64,
    pub string: f64,
}

impl RecommenderIndex {
    fn new(
        header: IndexHeader,
        entries: Vec<IndexEntry>,
        answer_vectors: Vec<f32>,
        string_vectors: Vec<f32>,
    ) -> Result<Self, String> {
        if header.entry_count != entries.len() {
            return Err(format!(
                "header declares {} entries, found {}",
                header.entry_count,
                entries.len()
            ));
        }
        let (group_of, group_count) = scope_groups(&entries);
        if header.scope_count != group_count {
            return Err(format!(
                "header declares {} scopes, entries have {group_count}",
                header.scope_count
            ));
        }
        let dim = header.dim;
        if answer_vectors.len() != group_count * dim || string_vectors.len() != entries.len() * dim
        {
            return Err(format!(
                "vector storage holds {}/{} values, expected {}/{}",
                answer_vectors.len(),
                string_vectors.len(),
                group_count * dim,
                entries.len() * dim
            ));
        }
        let norms = |store: &[f32], rows: usize| -> Vec<f64> {
            if dim == 0 {
                return vec![0.0; rows];
            }
            store.chunks(dim).map(norm).collect()
        };
        let derived = Derived {
            answer_norms: norms(&answer_vectors, group_count),
            string_norms: norms(&string_vectors, entries.len()),
            group_of,
            group_count,
        };
        Ok(Self {
            header,
            entries,
            answer_vectors,
            string_vectors,
            derived,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn distinct_scopes(&self) -> usize {
        self.derived.group_count
    }

    /// The answer row of entry `i` (shared by every entry with the same scope).
    pub fn answer_vector(&self, i: usize) -> &[f32] {
        let d = self.header.dim;
        let g = self.derived.group_of[i];
        &self.answer_vectors[g * d..(g + 1) * d]
    }

    pub fn string_vector(&self, i: usize) -> &[f32] {
        let d = self.header.dim;
        &self.string_vectors[i * d..(i + 1) * d]
    }

    /// Fails unless the index was built from exactly these bank and corpus revisions.
    pub fn check_fresh(&self, bank_hash: &str, corpus_hash: &str) -> Result<(), RecommendError> {
        if self.header.corpus_hash != corpus_hash {
            return Err(RecommendError::Stale {
                what: "corpus",
                expected: self.header.corpus_hash.clone(),
                actual: corpus_hash.to_string(),
            });
        }
        if self.header.bank_hash != bank_hash {
            return Err(RecommendError::Stale {
                what: "bank",
                expected: self.header.bank_hash.clone(),
                actual: bank_hash.to_string(),
            });
        }
        Ok(())
    }

    fn check_query(&self, query: &[f64]) -> Result<f64, RecommendError> {
        if query.len() != self.header.dim {
            return Err(RecommendError::Dimension {
                expected: self.header.dim,
                got: query.len(),
            });
        }
        let qn = norm(query);
        if qn == 0.0 {
            return Err(RecommendError::UnembeddableQuery);
        }
        Ok(qn)
    }

    /// Cosine of `query` with a stored row; a zero row scores 0.
    fn row_score(query: &[f64], qn: f64, row: &[f32], row_norm: f64) -> f64 {
        if row_norm == 0.0 {
            0.0
        } else {
            cosine_with_norms(query, row, qn, row_norm)
        }
    }

    fn group_scores(&self, query: &[f64], qn: f64) -> Vec<f64> {
        let d = self.header.dim;
        (0..self.derived.group_count)
            .into_par_iter()
            .map(|g| {
                let row = &self.answer_vectors[g * d..(g + 1) * d];
                Self::row_score(query, qn, row, self.derived.answer_norms[g])
            })
            .collect()
    }

    fn string_score(&self, query: &[f64], qn: f64, i: usize) -> f64 {
        Self::row_score(
            query,
            qn,
            self.string_vector(i),
            self.derived.string_norms[i],
        )
    }

    /// Scores every entry against an embedded query.
    pub fn score_all(&self, query: &[f64]) -> Result<Vec<EntryScore>, RecommendError> {
        let qn = self.check_query(query)?;
        let group_scores = self.group_scores(query, qn);
        Ok((0..self.len())
            .into_par_iter()
            .map(|i| EntryScore {
                entry: i,
                answer: group_scores[self.derived.group_of[i]],
                string: self.string_score(query, qn, i),
            })
            .collect())
    }

    /// Ranking order: answer score desc, string score desc, qid asc.
    pub fn compare(&self, a: &EntryScore, b: &EntryScore) -> std::cmp::Ordering {
        b.answer
            .total_cmp(&a.answer)
            .then(b.string.total_cmp(&a.string))
            .then_with(|| self.entries[a.entry].qid.cmp(&self.entries[b.entry].qid))
    }

    /// Within a scope: higher string score wins, then the smaller qid.
    fn beats(&self, a: &EntryScore, b: &EntryScore) -> bool {
        a.string
            .total_cmp(&b.string)
            .then_with(|| self.entries[b.entry].qid.cmp(&self.entries[a.entry].qid))
            .is_gt()
    }

    /// The top `k` entries of an exhaustive scoring after keeping one entry per scope.
    pub fn rank(&self, scores: &[EntryScore], k: usize) -> Vec<EntryScore> {
        let mut best: Vec<Option<EntryScore>> = vec![None; self.derived.group_count];
        for s in scores {
            let slot = &mut best[self.derived.group_of[s.entry]];
            if slot.as_ref().is_none_or(|cur| self.beats(s, cur)) {
                *slot = Some(*s);
            }
        }
        let mut winners: Vec<EntryScore> = best.into_iter().flatten().collect();
        winners.sort_by(|a, b| self.compare(a, b));
        winners.truncate(k);
        winners
    }

    /// Same result as `rank(&score_all(query)?, k)`, but string vectors are only
    /// scored for scopes that can reach the top `k`: those whose answer score is at
    /// least the k-th best.
    pub fn search(&self, query: &[f64], k: usize) -> Result<Vec<EntryScore>, RecommendError> {
        let qn = self.check_query(query)?;
        let group_scores = self.group_scores(query, qn);
        if k == 0 || group_scores.is_empty() {
            return Ok(Vec::new());
        }
        let cutoff = if k >= group_scores.len() {
            f64::NEG_INFINITY
        } else {
            let mut sorted = group_scores.clone();
            let (_, kth, _) = sorted.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
            *kth
        };
        let mut best: Vec<Option<EntryScore>> = vec![None; self.derived.group_count];
        for (i, &g) in self.derived.group_of.iter().enumerate() {
            let answer = group_scores[g];
            if answer.total_cmp(&cutoff).is_lt() {
                continue;
            }
            let s = EntryScore {
                entry: i,
                answer,
                string: self.string_score(query, qn, i),
            };
            if best[g].as_ref().is_none_or(|cur| self.beats(&s, cur)) {
                best[g] = Some(s);
            }
        }
        let mut winners: Vec<EntryScore> = best.into_iter().flatten().collect();
        winners.sort_by(|a, b| self.compare(a, b));
        winners.truncate(k);
        Ok(winners)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RecommendError> {
        let path = path.as_ref();
        let file_err = |message: String| RecommendError::File {
            path: path.display().to_string(),
            message,
        };
        let write = || -> std::io::Result<()> {
            let meta = serde_json::to_vec(&Metadata {
                header: self.header.clone(),
                entries: self.entries.clone(),
            })?;
            let mut out = BufWriter::new(std::fs::File::create(path)?);
            out.write_all(MAGIC)?;
            out.write_all(&FILE_VERSION.to_le_bytes())?;
            out.write_all(&(meta.len() as u64).to_le_bytes())?;
            out.write_all(&meta)?;
            for v in self.answer_vectors.iter().chain(&self.string_vectors) {
                out.write_all(&v.to_le_bytes())?;
            }
            out.flush()
        };
        write().map_err(|e| file_err(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RecommendError> {
        let path = path.as_ref();
        let file_err = |message: String| RecommendError::File {
            path: path.display().to_string(),
            message,
        };
        let io_err = |e: std::io::Error| file_err(e.to_string());
        let mut input = BufReader::new(std::fs::File::open(path).map_err(io_err)?);

        let mut fixed = [0u8; 20];
        input
            .read_exact(&mut fixed)
            .map_err(|_| file_err("truncated header".into()))?;
        if &fixed[..8] != MAGIC {
            return Err(file_err("not an index file".into()));
        }
        let version = u32::from_le_bytes(fixed[8..12].try_into().expect("4 bytes"));
        if version != FILE_VERSION {
            return Err(file_err(format!("unsupported index version {version}")));
        }
        let meta_len = u64::from_le_bytes(fixed[12..20].try_into().expect("8 bytes"));
        let mut meta = vec![0u8; usize::try_from(meta_len).map_err(|e| file_err(e.to_string()))?];
        input
            .read_exact(&mut meta)
            .map_err(|_| file_err("truncated metadata".into()))?;
        let meta: Metadata = serde_json::from_slice(&meta).map_err(|e| file_err(e.to_string()))?;
        if meta.header.format != INDEX_FORMAT {
            return Err(file_err(format!(
                "unsupported format {:?}",
                meta.header.format
            )));
        }

        let values = |rows: usize| {
            rows.checked_mul(meta.header.dim)
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| file_err("vector storage overflows".into()))
        };
        let answer_bytes = values(meta.header.scope_count)?;
        let string_bytes = values(meta.entries.len())?;
        let mut read_rows = |bytes: usize| -> Result<Vec<f32>, RecommendError> {
            let mut buf = vec![0u8; bytes];
            input
                .read_exact(&mut buf)
                .map_err(|_| file_err("truncated vector data".into()))?;
            Ok(buf
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                .collect())
        };
        let answers = read_rows(answer_bytes)?;
        let strings = read_rows(string_bytes)?;
        if input.read(&mut [0u8; 1]).map_err(io_err)? != 0 {
            return Err(file_err("trailing bytes after vector data".into()));
        }
        if answers.iter().chain(&strings).any(|v| !v.is_finite()) {
            return Err(file_err("non-finite vector value".into()));
        }
        Self::new(meta.header, meta.entries, answers, strings).map_err(file_err)
    }
}

/// Embeds answers and question strings for every question with a non-NULL,
/// non-empty effective scope.
pub fn build_index(
    bank: &QuestionBank,
    corpus: &Corpus,
    provider: &dyn EmbeddingProvider,
) -> Result<RecommenderIndex, RecommendError> {
    let mut entries = Vec::new();
    let mut answer_texts: Vec<String> = Vec::new();
    let mut text_slot: HashMap<String, usize> = HashMap::new();
    let mut answer_of = Vec::new();

    for q in bank.questions() {
        let scope = effective_scope(q);
        if scope.is_empty() {
            continue;
        }
        let paragraphs = resolve_scope(corpus, scope).map_err(|source| RecommendError::Scope {
            qid: q.qid.clone(),
            source,
        })?;
        let text = paragraphs
            .iter()
            .map(|p| p.text.trim())
            .collect::<Vec<_>>()
            .join("\n\n");
        let slot = *text_slot.entry(text.clone()).or_insert_with(|| {
            answer_texts.push(text);
            answer_texts.len() - 1
        });
        answer_of.push(slot);
        entries.push(IndexEntry {
            qid: q.qid.clone(),
            question: q.text.clone(),
            page_id: scope.page.clone(),
            pid_list: scope.pids().collect(),
        });
    }

    let mut dim = None;
    let answer_rows = embed_packed(provider, &answer_texts, &mut dim)?;
    let question_texts: Vec<&str> = entries.iter().map(|e| e.question.as_str()).collect();
    let mut string_store = embed_packed(provider, &question_texts, &mut dim)?;
    let dim = dim.or(provider.dim()).unwrap_or(0);

    let mut kept = Vec::with_capacity(entries.len());
    let mut kept_slots = Vec::with_capacity(entries.len());
    for (i, (entry, slot)) in entries.into_iter().zip(answer_of).enumerate() {
        if norm(&answer_rows[slot * dim..(slot + 1) * dim]) == 0.0 {
            tracing::warn!(qid = %entry.qid, "answer text has no embeddable content; not indexed");
            continue;
        }
        // compact string rows in place
        let k = kept.len();
        if k != i {
            string_store.copy_within(i * dim..(i + 1) * dim, k * dim);
        }
        kept.push(entry);
        kept_slots.push(slot);
    }
    string_store.truncate(kept.len() * dim);
    let (group_of, scope_count) = scope_groups(&kept);
    let mut answer_store = Vec::with_capacity(scope_count * dim);
    let mut next_group = 0;
    for (g, slot) in group_of.into_iter().zip(kept_slots) {
        if g == next_group {
            answer_store.extend_from_slice(&answer_rows[slot * dim..(slot + 1) * dim]);
            next_group += 1;
        }
    }

    let header = IndexHeader {
        format: INDEX_FORMAT.to_string(),
        provider_id: provider.provider_id().to_string(),
        dim,
        bank_hash: bank.content_hash(),
        corpus_hash: corpus.hash().to_string(),
        entry_count: kept.len(),
        scope_count,
    };
    RecommenderIndex::new(header, kept, answer_store, string_store).map_err(|m| {
        RecommendError::File {
            path: "<memory>".into(),
            message: m,
        }
    })
}

/// Texts embedded per provider call while building; bounds peak memory.
const BUILD_CHUNK: usize = 1024;

/// Embeds `texts` in chunks into packed `f32` rows, checking that every vector has
/// the dimension recorded in (or first established for) `dim`.
fn embed_packed<S: AsRef<str>>(
    provider: &dyn EmbeddingProvider,
    texts: &[S],
    dim: &mut Option<usize>,
) -> Result<Vec<f32>, RecommendError> {
    let mut rows = Vec::new();
    for chunk in texts.chunks(BUILD_CHUNK) {
        let owned: Vec<String> = chunk.iter().map(|t| t.as_ref().to_string()).collect();
        let vectors = provider.embed_batch(&owned)?;
        if vectors.len() != owned.len() {
            return Err(RecommendError::Provider(EmbedError::Protocol(format!(
                "sent {} texts, received {} vectors",
                owned.len(),
                vectors.len()
            ))));
        }
        for v in vectors {
            let expected = *dim.get_or_insert(v.dim());
            if v.dim() != expected {
                return Err(RecommendError::Dimension {
                    expected,
                    got: v.dim(),
                });
            }
            if rows.is_empty() {
                rows.reserve(texts.len() * expected);
            }
            rows.extend(v.values.iter().map(|&x| x as f32));
        }
    }
    Ok(rows)
}

/// Cuts `text` to at most `max_chars` characters at a word boundary, appending an
/// ellipsis when anything was dropped.
pub fn excerpt(text: &str, max_chars: usize) -> String {
    let text = text.trim();
    if text.chars().count() <= max_chars {
        return text.to_string();
    }
    let cut = text
        .char_indices()
        .nth(max_chars)
        .map_or(text.len(), |(i, _)| i);
    let head = &text[..cut];
    // A boundary at `cut` itself counts: the next character is whitespace.
    let next_is_space = text[cut..].starts_with(char::is_whitespace);
    let head = if next_is_space {
        head
    } else {
        head.rfind(char::is_whitespace).map_or(head, |i| &head[..i])
    };
    format!("{}…", head.trim_end())
}

/// Top-k questions for a free-text scenario, one per answer scope.
pub fn recommend(
    query: &str,
    index: &RecommenderIndex,
    corpus: &Corpus,
    provider: &dyn EmbeddingProvider,
    options: &RecommendOptions,
) -> Result<Vec<RecommendationResult>, RecommendError> {
    if query.trim().is_empty() {
        return Err(RecommendError::EmptyQuery);
    }
    if options.k == 0 {
        return Err(RecommendError::ZeroK);
    }
    if index.is_empty() {
        return Err(RecommendError::EmptyIndex);
    }
    if index.header.corpus_hash != corpus.hash() {
        return Err(RecommendError::Stale {
            what: "corpus",
            expected: index.header.corpus_hash.clone(),
            actual: corpus.hash().to_string(),
        });
    }
    if provider.provider_id() != index.header.provider_id {
        return Err(RecommendError::ProviderMismatch {
            index: index.header.provider_id.clone(),
            query: provider.provider_id().to_string(),
        });
    }
    let qv = provider.embed_one(query)?;
    if !qv.is_usable() {
        return Err(RecommendError::UnembeddableQuery);
    }
    index
        .search(&qv.values, options.k)?
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let entry = &index.entries[s.entry];
            let page = corpus.page(&entry.page_id);
            let first = entry
                .pid_list
                .iter()
                .find(|p| !p.is_heading())
                .or(entry.pid_list.first())
                .copied()
                .unwrap_or(Pid::Heading);
            let text =
                page.and_then(|p| p.text_of(first))
                    .ok_or_else(|| RecommendError::Scope {
                        qid: entry.qid.clone(),
                        source: CorpusError::UnknownPid {
                            page_id: entry.page_id.clone(),
                            pid: first,
                        },
                    })?;
            Ok(RecommendationResult {
                rank: i + 1,
                qid: entry.qid.clone(),
                question: entry.question.clone(),
                score: s.answer,
                page_id: entry.page_id.clone(),
                pid_list: entry.pid_list.clone(),
                excerpt: excerpt(text, options.excerpt_chars),
                url: page.and_then(|p| p.url.clone()),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Page, Paragraph, Section};
    use crate::embedding::LocalEmbedder;
    use crate::qbank::{AnswerScope, Label, Provenance, Question, Source};

    fn corpus() -> Corpus {
        let texts = [
            "The landlord must repair the roof and structural walls when notified.",
            "The tenant pays the rent on the first day of every month.",
            "A deposit is returned at the end of the tenancy minus deductions.",
            "Defamation needs a false statement published to a third party.",
            "— … —",
        ];
        Corpus::from_pages([Page {
            page_id: "p".into(),
            title: "Landlord and tenant".into(),
            url: Some("https://example.org/p".into()),
            topic: None,
            sections: vec![Section {
                sid: 1,
                title: None,
                paragraphs: texts
                    .iter()
                    .enumerate()
                    .map(|(i, t)| Paragraph {
                        pid: i as u32 + 1,
                        text: t.to_string(),
                    })
                    .collect(),
            }],
        }])
        .unwrap()
    }

    fn q(qid: &str, text: &str, pids: &[u32], label: Label) -> Question {
        let scope = AnswerScope::new("p", pids.iter().map(|&p| Pid::Para(p)));
        Question {
            qid: qid.into(),
            text: text.into(),
            source: Source::Hybrid,
            page: "p".into(),
            verified_scope: match label {
                Label::Correct => Some(scope.clone()),
                Label::Unverified => None,
                _ => Some(AnswerScope::null("p")),
            },
            initial_scope: scope,
            label,
            provenance: Provenance::Annotator { id: "t".into() },
        }
    }

    fn bank(c: &Corpus) -> QuestionBank {
        QuestionBank::from_questions(
            c.hash(),
            [
                q("a", "Who repairs the roof?", &[1], Label::Correct),
                q(
                    "b",
                    "Must the landlord fix structural walls?",
                    &[1],
                    Label::Correct,
                ),
                q("c", "When is rent due?", &[2], Label::Unverified),
                q("d", "Can I get my deposit back?", &[3], Label::Augmenting),
            ],
        )
        .unwrap()
    }

    #[test]
    fn augmenting_questions_are_not_indexed() {
        let c = corpus();
        let idx = build_index(&bank(&c), &c, &LocalEmbedder).unwrap();
        assert_eq!(idx.len(), 3);
        assert_eq!(idx.distinct_scopes(), 2);
        assert_eq!(idx.answer_vector(0), idx.answer_vector(1));
        assert_ne!(idx.string_vector(0), idx.string_vector(1));
    }

    #[test]
    fn unembeddable_answers_are_skipped_without_disturbing_later_rows() {
        let c = corpus();
        let b = QuestionBank::from_questions(
            c.hash(),
            [
                q("a", "Who repairs the roof?", &[1], Label::Correct),
                q("x", "What does the dash mean?", &[5], Label::Correct),
                q("c", "When is rent due?", &[2], Label::Correct),
            ],
        )
        .unwrap();
        let idx = build_index(&b, &c, &LocalEmbedder).unwrap();
        let qids: Vec<&str> = idx.entries.iter().map(|e| e.qid.as_str()).collect();
        assert_eq!(qids, ["a", "c"]);
        let widened: Vec<f32> = crate::embedding::embed_local("When is rent due?")
            .values
            .iter()
            .map(|&v| v as f32)
            .collect();
        assert_eq!(idx.string_vector(1), widened.as_slice());
        assert_eq!(idx.header.scope_count, 2);
    }

    #[test]
    fn empty_bank_gives_empty_index() {
        let c = corpus();
        let idx = build_index(&QuestionBank::new(c.hash()), &c, &LocalEmbedder).unwrap();
        assert!(idx.is_empty());
        assert!(matches!(
            recommend(
                "leak",
                &idx,
                &c,
                &LocalEmbedder,
                &RecommendOptions::default()
            ),
            Err(RecommendError::EmptyIndex)
        ));
    }

    #[test]
    fn shared_scope_collapses_to_best_string_match() {
        let c = corpus();
        let idx = build_index(&bank(&c), &c, &LocalEmbedder).unwrap();
        let out = recommend(
            "the landlord must fix structural walls",
            &idx,
            &c,
            &LocalEmbedder,
            &RecommendOptions::default(),
        )
        .unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].qid, "b");
        assert_eq!(out[0].rank, 1);
        assert_eq!(out[0].url.as_deref(), Some("https://example.org/p"));
        assert!(out[0].score >= out[1].score);
    }

    #[test]
    fn verbatim_paragraph_ranks_first() {
        let c = corpus();
        let idx = build_index(&bank(&c), &c, &LocalEmbedder).unwrap();
        let query = c.page("p").unwrap().text_of(Pid::Para(2)).unwrap();
        let out = recommend(query, &idx, &c, &LocalEmbedder, &RecommendOptions::top(1)).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].qid, "c");
        // f32 storage costs a few ulps of single precision
        assert!((out[0].score - 1.0).abs() < 1e-6);
    }

    #[test]
    fn errors() {
        let c = corpus();
        let idx = build_index(&bank(&c), &c, &LocalEmbedder).unwrap();
        let opts = RecommendOptions::default();
        assert!(matches!(
            recommend("  ", &idx, &c, &LocalEmbedder, &opts),
            Err(RecommendError::EmptyQuery)
        ));
        assert!(matches!(
            recommend("?!", &idx, &c, &LocalEmbedder, &opts),
            Err(RecommendError::UnembeddableQuery)
        ));
        assert!(matches!(
            recommend("rent", &idx, &c, &LocalEmbedder, &RecommendOptions::top(0)),
            Err(RecommendError::ZeroK)
        ));
        let other = Corpus::default();
        assert!(matches!(
            recommend("rent", &idx, &other, &LocalEmbedder, &opts),
            Err(RecommendError::Stale { what: "corpus", .. })
        ));
        assert!(idx.check_fresh("nope", c.hash()).is_err());
        assert!(idx.check_fresh(&bank(&c).content_hash(), c.hash()).is_ok());
    }

    #[test]
    fn index_file_round_trip() {
        let c = corpus();
        let idx = build_index(&bank(&c), &c, &LocalEmbedder).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.json");
        idx.save(&path).unwrap();
        let loaded = RecommenderIndex::load(&path).unwrap();
        assert_eq!(loaded, idx);

        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        assert!(RecommenderIndex::load(&path)
            .unwrap_err()
            .to_string()
            .contains("truncated"));
        let mut extra = bytes.clone();
        extra.push(0);
        std::fs::write(&path, &extra).unwrap();
        assert!(RecommenderIndex::load(&path)
            .unwrap_err()
            .to_string()
            .contains("trailing"));
        std::fs::write(&path, b"{\"header\": 1}").unwrap();
        assert!(RecommenderIndex::load(&path).is_err());
    }

    /// Small integer vectors over few scopes, so ties are common.
    fn random_index(scopes: Vec<(u8, Vec<i8>)>, strings: Vec<(u8, Vec<i8>)>) -> RecommenderIndex {
        const DIM: usize = 3;
        let row = |v: &[i8]| -> Vec<f32> { (0..DIM).map(|i| f32::from(v[i % v.len()])).collect() };
        let entries: Vec<IndexEntry> = strings
            .iter()
            .enumerate()
            .map(|(i, (scope, _))| IndexEntry {
                qid: format!("q{:03}", (i * 37) % 101),
                question: String::new(),
                page_id: format!("p{}", scope % scopes.len() as u8),
                pid_list: vec![Pid::Para(1)],
            })
            .collect();
        let (group_of, groups) = scope_groups(&entries);
        let mut answers = vec![0.0f32; groups * DIM];
        for (i, g) in group_of.iter().enumerate() {
            let scope = usize::from(strings[i].0) % scopes.len();
            answers[g * DIM..(g + 1) * DIM].copy_from_slice(&row(&scopes[scope].1));
        }
        let string_rows: Vec<f32> = strings.iter().flat_map(|(_, v)| row(v)).collect();
        let header = IndexHeader {
            format: INDEX_FORMAT.into(),
            provider_id: "test".into(),
            dim: DIM,
            bank_hash: String::new(),
            corpus_hash: String::new(),
            entry_count: entries.len(),
            scope_count: groups,
        };
        RecommenderIndex::new(header, entries, answers, string_rows).unwrap()
    }

    proptest::proptest! {
        #[test]
        fn pruned_search_equals_exhaustive_rank(
            scopes in proptest::collection::vec((0u8..4, proptest::collection::vec(-2i8..3, 1..4)), 1..6),
            strings in proptest::collection::vec((0u8..8, proptest::collection::vec(-2i8..3, 1..4)), 1..40),
            query in proptest::collection::vec(-2i8..3, 3),
            k in 1usize..8,
        ) {
            let index = random_index(scopes, strings);
            let q: Vec<f64> = query.iter().map(|&v| f64::from(v)).collect();
            match index.score_all(&q) {
                Ok(all) => {
                    let expected = index.rank(&all, k);
                    proptest::prop_assert_eq!(index.search(&q, k).unwrap(), expected);
                }
                Err(e) => proptest::prop_assert!(matches!(e, RecommendError::UnembeddableQuery)),
            }
        }
    }

    #[test]
    fn excerpt_rules() {
        assert_eq!(excerpt("short text", 300), "short text");
        assert_eq!(excerpt("alpha beta gamma", 12), "alpha beta…");
        assert_eq!(excerpt("alpha beta gamma", 10), "alpha beta…");
        assert_eq!(excerpt("abcdefghij", 4), "abcd…");
        let long = "word ".repeat(100);
        let e = excerpt(&long, 300);
        assert!(e.chars().count() <= 301);
        assert!(e.ends_with("word…"));
    }
}
