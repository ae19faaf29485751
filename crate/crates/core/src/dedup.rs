//! Near-duplicate removal by single-link clustering over embedding cosine similarity.
//!
//! Two questions are linked when their similarity is at least the threshold
//! (inclusive); clusters are the connected components of that graph. Each cluster
//! keeps the member that came first in the input.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine_with_norms, EmbedError, EmbeddingProvider, EmbeddingVector};
use crate::qbank::{Question, QuestionBank, Source};

pub const DEFAULT_THRESHOLD: f64 = 0.95;
pub const REPRESENTATIVE_RULE: &str = "smallest-input-index";

#[derive(Debug, Error)]
pub enum DedupError {
    #[error("threshold must lie in (0, 1], got {0}")]
    BadThreshold(f64),
    #[error("embedding failed: {0}")]
    Embedding(#[from] EmbedError),
    #[error("provider returned {got} vectors for {expected} questions")]
    VectorCount { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub representative: String,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupReport {
    /// Which slice of the bank this report covers, e.g. `hybrid/69` or `hybrid/*`.
    pub group: String,
    pub provider_id: String,
    pub threshold: f64,
    pub representative_rule: String,
    pub clusters: Vec<Cluster>,
    pub retained_ids: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Granularity {
    /// One pass per (source, page).
    #[default]
    PerPage,
    /// The per-page pass followed by one pass per source across all pages.
    Global,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Roots are always the smaller index.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Pairs `(i, j)`, `i < j`, whose cosine similarity is at least `threshold`.
/// Zero vectors have no edges.
pub fn similarity_edges(vectors: &[EmbeddingVector], threshold: f64) -> Vec<(usize, usize)> {
    let norms: Vec<f64> = vectors.iter().map(EmbeddingVector::norm).collect();
    (0..vectors.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let norms = &norms;
            (i + 1..vectors.len()).filter_map(move |j| {
                if norms[i] == 0.0 || norms[j] == 0.0 {
                    return None;
                }
                let s =
                    cosine_with_norms(&vectors[i].values, &vectors[j].values, norms[i], norms[j]);
                (s >= threshold).then_some((i, j))
            })
        })
        .collect()
}

/// Connected components of the similarity graph as sorted index lists, ordered by
/// their smallest member.
pub fn single_link_clusters(vectors: &[EmbeddingVector], threshold: f64) -> Vec<Vec<usize>> {
    connected_components(vectors.len(), similarity_edges(vectors, threshold))
}

/// Components of the graph on `0..n`, as sorted index lists ordered by smallest member.
pub fn connected_components(
    n: usize,
    edges: impl IntoIterator<Item = (usize, usize)>,
) -> Vec<Vec<usize>> {
    let mut uf = UnionFind::new(n);
    for (i, j) in edges {
        uf.union(i, j);
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let root = uf.find(i);
        groups.entry(root).or_default().push(i);
    }
    groups.into_values().collect()
}

fn check_threshold(threshold: f64) -> Result<(), DedupError> {
    if threshold > 0.0 && threshold <= 1.0 {
        Ok(())
    } else {
        Err(DedupError::BadThreshold(threshold))
    }
}

fn report_from_vectors(
    group: String,
    questions: &[&Question],
    vectors: &[EmbeddingVector],
    provider_id: &str,
    threshold: f64,
) -> DedupReport {
    for (q, v) in questions.iter().zip(vectors) {
        if !v.is_usable() {
            tracing::warn!(qid = %q.qid, "zero-norm embedding; question kept without comparison");
        }
    }
    let clusters: Vec<Cluster> = single_link_clusters(vectors, threshold)
        .into_iter()
        .map(|members| Cluster {
            representative: questions[members[0]].qid.clone(),
            members: members.iter().map(|&i| questions[i].qid.clone()).collect(),
        })
        .collect();
    let retained_ids = clusters.iter().map(|c| c.representative.clone()).collect();
    DedupReport {
        group,
        provider_id: provider_id.to_string(),
        threshold,
        representative_rule: REPRESENTATIVE_RULE.to_string(),
        clusters,
        retained_ids,
    }
}

fn embed_questions(
    questions: &[&Question],
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<EmbeddingVector>, DedupError> {
    let texts: Vec<String> = questions.iter().map(|q| q.text.clone()).collect();
    let vectors = provider.embed_batch(&texts)?;
    if vectors.len() != texts.len() {
        return Err(DedupError::VectorCount {
            expected: texts.len(),
            got: vectors.len(),
        });
    }
    Ok(vectors)
}

/// Clusters `questions` and picks one representative per cluster.
pub fn dedup(
    questions: &[Question],
    provider: &dyn EmbeddingProvider,
    threshold: f64,
) -> Result<DedupReport, DedupError> {
    check_threshold(threshold)?;
    let refs: Vec<&Question> = questions.iter().collect();
    let vectors = embed_questions(&refs, provider)?;
    Ok(report_from_vectors(
        "*".into(),
        &refs,
        &vectors,
        provider.provider_id(),
        threshold,
    ))
}

fn grouped<'a, K: Ord>(
    questions: impl Iterator<Item = &'a Question>,
    key: impl Fn(&Question) -> K,
) -> BTreeMap<K, Vec<&'a Question>> {
    let mut groups: BTreeMap<K, Vec<&Question>> = BTreeMap::new();
    for q in questions {
        groups.entry(key(q)).or_default().push(q);
    }
    groups
}

/// Deduplicates a whole bank, one pass per (source, page) and optionally a second
/// pass per source across pages. Questions keep their bank order.
pub fn dedup_bank(
    bank: &QuestionBank,
    provider: &dyn EmbeddingProvider,
    threshold: f64,
    granularity: Granularity,
) -> Result<(QuestionBank, Vec<DedupReport>), DedupError> {
    check_threshold(threshold)?;
    let mut reports = Vec::new();
    let mut keep: HashSet<String> = HashSet::new();

    let by_page = grouped(bank.questions().iter(), |q| (q.source, q.page.clone()));
    for ((source, page), qs) in &by_page {
        let vectors = embed_questions(qs, provider)?;
        let report = report_from_vectors(
            format!("{source}/{page}"),
            qs,
            &vectors,
            provider.provider_id(),
            threshold,
        );
        reports.push(report);
    }
    for r in &reports {
        keep.extend(r.retained_ids.iter().cloned());
    }

    if granularity == Granularity::Global {
        let survivors = bank
            .questions()
            .iter()
            .filter(|q| keep.contains(q.qid.as_str()));
        let by_source: BTreeMap<Source, Vec<&Question>> = grouped(survivors, |q| q.source);
        let mut global_keep = HashSet::new();
        let mut global_reports = Vec::new();
        for (source, qs) in &by_source {
            let vectors = embed_questions(qs, provider)?;
            let report = report_from_vectors(
                format!("{source}/*"),
                qs,
                &vectors,
                provider.provider_id(),
                threshold,
            );
            global_reports.push(report);
        }
        for r in &global_reports {
            global_keep.extend(r.retained_ids.iter().cloned());
        }
        reports.extend(global_reports);
        keep.retain(|qid| global_keep.contains(qid));
    }

    let mut out = bank.clone();
    out.retain_qids(&keep.iter().map(String::as_str).collect());
    Ok((out, reports))
}
