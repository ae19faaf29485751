//! Bank quality measures: quantity, precision, coverage, diversity, generality and
//! augmenting-question statistics.
//!
//! Coverage counts numbered paragraphs only; a scope naming the page heading adds
//! nothing to either side of the ratio. Paragraph tallies count every scope entry,
//! heading included, so a tally always equals the summed scope sizes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Page, Pid};
use crate::qbank::{
    classify_generality, effective_scope, Generality, Label, Question, QuestionBank, Source,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("no paragraphs in the selected pages")]
    NoParagraphs,
    #[error("no questions match the filter")]
    EmptySelection,
    #[error("{0} selected questions are still UNVERIFIED")]
    Unverified(usize),
    #[error("question {0} has a NULL scope")]
    NullScope(String),
    #[error("unknown page {0}")]
    UnknownPage(String),
}

/// Which questions a measure looks at. `None` fields match everything.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Filter {
    pub sources: Option<BTreeSet<Source>>,
    pub labels: Option<BTreeSet<Label>>,
    /// Restricts questions to these pages; coverage then also divides by the
    /// paragraphs of these pages only.
    pub pages: Option<BTreeSet<String>>,
}

impl Filter {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn source(source: Source) -> Self {
        Self {
            sources: Some([source].into()),
            ..Self::default()
        }
    }

    pub fn with_labels(mut self, labels: impl IntoIterator<Item = Label>) -> Self {
        self.labels = Some(labels.into_iter().collect());
        self
    }

    pub fn with_pages<S: Into<String>>(mut self, pages: impl IntoIterator<Item = S>) -> Self {
        self.pages = Some(pages.into_iter().map(Into::into).collect());
        self
    }

    pub fn matches(&self, q: &Question) -> bool {
        self.sources.as_ref().is_none_or(|s| s.contains(&q.source))
            && self.labels.as_ref().is_none_or(|l| l.contains(&q.label))
            && self.pages.as_ref().is_none_or(|p| p.contains(&q.page))
    }

    pub fn select<'a>(&'a self, bank: &'a QuestionBank) -> impl Iterator<Item = &'a Question> + 'a {
        bank.questions().iter().filter(move |q| self.matches(q))
    }
}

/// `(page, pid)` pairs covered by the filtered questions' effective scopes.
pub fn covered_paragraphs(bank: &QuestionBank, filter: &Filter) -> BTreeSet<(String, u32)> {
    filter
        .select(bank)
        .flat_map(|q| {
            let scope = effective_scope(q);
            scope.pids().filter_map(move |pid| match pid {
                Pid::Para(n) => Some((scope.page.clone(), n)),
                Pid::Heading => None,
            })
        })
        .collect()
}

fn paragraphs_in_scope(corpus: &Corpus, filter: &Filter) -> usize {
    corpus
        .pages()
        .filter(|p| filter.pages.as_ref().is_none_or(|s| s.contains(&p.page_id)))
        .map(Page::paragraph_count)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageCounts {
    pub covered: usize,
    pub total: usize,
}

impl CoverageCounts {
    pub fn fraction(self) -> f64 {
        self.covered as f64 / self.total as f64
    }
}

pub fn coverage_counts(
    bank: &QuestionBank,
    corpus: &Corpus,
    filter: &Filter,
) -> Result<CoverageCounts, MetricsError> {
    let total = paragraphs_in_scope(corpus, filter);
    if total == 0 {
        return Err(MetricsError::NoParagraphs);
    }
    Ok(CoverageCounts {
        covered: covered_paragraphs(bank, filter).len(),
        total,
    })
}

/// Fraction of paragraphs contained in the union of the filtered answer scopes.
pub fn coverage(
    bank: &QuestionBank,
    corpus: &Corpus,
    filter: &Filter,
) -> Result<f64, MetricsError> {
    coverage_counts(bank, corpus, filter).map(CoverageCounts::fraction)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrecisionCounts {
    pub correct: usize,
    pub total: usize,
}

impl PrecisionCounts {
    pub fn fraction(self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

pub fn precision_counts(
    bank: &QuestionBank,
    filter: &Filter,
) -> Result<PrecisionCounts, MetricsError> {
    let (mut correct, mut total, mut unverified) = (0, 0, 0);
    for q in filter.select(bank) {
        total += 1;
        match q.label {
            Label::Correct => correct += 1,
            Label::Unverified => unverified += 1,
            Label::Incorrect | Label::Augmenting => {}
        }
    }
    if total == 0 {
        return Err(MetricsError::EmptySelection);
    }
    if unverified > 0 {
        return Err(MetricsError::Unverified(unverified));
    }
    Ok(PrecisionCounts { correct, total })
}

/// Share of filtered questions labelled CORRECT. Augmenting questions count as not
/// correct.
pub fn precision(bank: &QuestionBank, filter: &Filter) -> Result<f64, MetricsError> {
    precision_counts(bank, filter).map(PrecisionCounts::fraction)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub page_id: String,
    pub question_count: usize,
    /// Questions whose effective scope contains each id of the page (heading included).
    pub per_paragraph_counts: BTreeMap<Pid, usize>,
    pub paragraph_tally: usize,
    pub general_count: usize,
    pub specific_count: usize,
}

pub fn diversity_report(
    bank: &QuestionBank,
    corpus: &Corpus,
    page_id: &str,
    filter: &Filter,
) -> Result<DiversityReport, MetricsError> {
    let page = corpus
        .page(page_id)
        .ok_or_else(|| MetricsError::UnknownPage(page_id.to_string()))?;
    let mut counts: BTreeMap<Pid, usize> =
        page.scope_universe().into_iter().map(|p| (p, 0)).collect();
    let (mut question_count, mut general, mut specific) = (0, 0, 0);
    for q in filter.select(bank).filter(|q| q.page == page_id) {
        question_count += 1;
        for pid in effective_scope(q).pids() {
            *counts.entry(pid).or_default() += 1;
        }
        match classify_generality(q) {
            Generality::General => general += 1,
            Generality::Specific => specific += 1,
            Generality::Undefined => {}
        }
    }
    Ok(DiversityReport {
        page_id: page_id.to_string(),
        question_count,
        paragraph_tally: counts.values().sum(),
        per_paragraph_counts: counts,
        general_count: general,
        specific_count: specific,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralityStats {
    pub general: usize,
    pub specific: usize,
    /// Questions skipped for having a NULL scope (always 0 in strict mode).
    pub undefined: usize,
    pub general_fraction: f64,
    pub specific_fraction: f64,
}

/// General/specific split over scoped questions. In strict mode a NULL scope is an
/// error; otherwise it is counted as undefined and left out of the fractions.
pub fn generality_stats(
    bank: &QuestionBank,
    filter: &Filter,
    strict: bool,
) -> Result<GeneralityStats, MetricsError> {
    let (mut general, mut specific, mut undefined) = (0, 0, 0);
    for q in filter.select(bank) {
        match classify_generality(q) {
            Generality::General => general += 1,
            Generality::Specific => specific += 1,
            Generality::Undefined if strict => return Err(MetricsError::NullScope(q.qid.clone())),
            Generality::Undefined => undefined += 1,
        }
    }
    let scoped = general + specific;
    let frac = |n: usize| {
        if scoped == 0 {
            0.0
        } else {
            n as f64 / scoped as f64
        }
    };
    Ok(GeneralityStats {
        general,
        specific,
        undefined,
        general_fraction: frac(general),
        specific_fraction: frac(specific),
    })
}

/// Number of AUGMENTING questions and of distinct pages they belong to.
pub fn augmenting_stats(bank: &QuestionBank, filter: &Filter) -> (usize, usize) {
    let mut pages = BTreeSet::new();
    let mut count = 0;
    for q in filter.select(bank).filter(|q| q.label == Label::Augmenting) {
        count += 1;
        pages.insert(q.page.as_str());
    }
    (count, pages.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupBy {
    Source,
    Page,
    Topic,
}

impl std::str::FromStr for GroupBy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "source" => Ok(GroupBy::Source),
            "page" => Ok(GroupBy::Page),
            "topic" => Ok(GroupBy::Topic),
            other => Err(format!(
                "unknown grouping {other:?} (source, page or topic)"
            )),
        }
    }
}

/// All measures for one (group, source) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    /// `*` when grouping by source, otherwise the page id or topic.
    pub group: String,
    pub source: Source,
    pub question_count: usize,
    /// `None` while any selected question is unverified.
    pub precision: Option<f64>,
    pub correct_count: usize,
    pub coverage: f64,
    pub covered_count: usize,
    pub paragraph_count: usize,
    pub covered_pids: Vec<String>,
    pub per_paragraph_counts: BTreeMap<String, usize>,
    pub paragraph_tally: usize,
    pub general_count: usize,
    pub specific_count: usize,
    pub augmenting_count: usize,
    pub augmenting_pages: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub corpus_hash: String,
    pub bank_hash: String,
    pub group_by: GroupBy,
    pub total_paragraphs: usize,
    pub groups: Vec<GroupMetrics>,
}

fn group_metrics(
    bank: &QuestionBank,
    corpus: &Corpus,
    group: String,
    source: Source,
    pages: &BTreeSet<String>,
) -> GroupMetrics {
    let filter = Filter::source(source).with_pages(pages.iter().cloned());
    let selected: Vec<&Question> = filter.select(bank).collect();
    let precision = precision_counts(bank, &filter).ok();
    let covered = covered_paragraphs(bank, &filter);
    let paragraph_count = paragraphs_in_scope(corpus, &filter);

    let mut per_paragraph_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut tally = 0;
    for q in &selected {
        let scope = effective_scope(q);
        for pid in scope.pids() {
            tally += 1;
            *per_paragraph_counts
                .entry(format!("{}:{pid}", scope.page))
                .or_default() += 1;
        }
    }
    let generality = generality_stats(bank, &filter, false).expect("non-strict never fails");
    let (augmenting_count, augmenting_pages) = augmenting_stats(bank, &filter);

    GroupMetrics {
        group,
        source,
        question_count: selected.len(),
        precision: precision.map(PrecisionCounts::fraction),
        correct_count: selected
            .iter()
            .filter(|q| q.label == Label::Correct)
            .count(),
        coverage: if paragraph_count == 0 {
            0.0
        } else {
            covered.len() as f64 / paragraph_count as f64
        },
        covered_count: covered.len(),
        paragraph_count,
        covered_pids: covered.iter().map(|(p, n)| format!("{p}:{n}")).collect(),
        per_paragraph_counts,
        paragraph_tally: tally,
        general_count: generality.general,
        specific_count: generality.specific,
        augmenting_count,
        augmenting_pages,
    }
}

/// Computes every measure per source, optionally split by page or topic.
pub fn evaluate(bank: &QuestionBank, corpus: &Corpus, group_by: GroupBy) -> MetricsReport {
    let sources: BTreeSet<Source> = bank.questions().iter().map(|q| q.source).collect();
    let mut partitions: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for page in corpus.pages() {
        let key = match group_by {
            GroupBy::Source => "*".to_string(),
            GroupBy::Page => page.page_id.clone(),
            GroupBy::Topic => page.topic.clone().unwrap_or_else(|| "unknown".into()),
        };
        partitions
            .entry(key)
            .or_default()
            .insert(page.page_id.clone());
    }
    let mut groups = Vec::new();
    for (key, pages) in &partitions {
        for &source in &sources {
            groups.push(group_metrics(bank, corpus, key.clone(), source, pages));
        }
    }
    MetricsReport {
        corpus_hash: corpus.hash().to_string(),
        bank_hash: bank.content_hash(),
        group_by,
        total_paragraphs: crate::corpus::paragraph_count(corpus),
        groups,
    }
}

fn pct(x: f64) -> String {
    format!("{:.1}%", x * 100.0)
}

/// Plain-text table: one column per (group, source), one row per measure.
pub fn render_table(report: &MetricsReport) -> String {
    let headers: Vec<String> = report
        .groups
        .iter()
        .map(|g| {
            if g.group == "*" {
                g.source.to_string()
            } else {
                format!("{}/{}", g.group, g.source)
            }
        })
        .collect();
    let rows: Vec<(&str, Vec<String>)> = vec![
        (
            "Number of questions",
            report
                .groups
                .iter()
                .map(|g| g.question_count.to_string())
                .collect(),
        ),
        (
            "Precision",
            report
                .groups
                .iter()
                .map(|g| g.precision.map_or("n/a".into(), pct))
                .collect(),
        ),
        (
            "Paragraphs covered",
            report
                .groups
                .iter()
                .map(|g| format!("{}/{}", g.covered_count, g.paragraph_count))
                .collect(),
        ),
        (
            "Coverage",
            report.groups.iter().map(|g| pct(g.coverage)).collect(),
        ),
        (
            "Paragraph tally",
            report
                .groups
                .iter()
                .map(|g| g.paragraph_tally.to_string())
                .collect(),
        ),
        (
            "General questions",
            report
                .groups
                .iter()
                .map(|g| g.general_count.to_string())
                .collect(),
        ),
        (
            "Specific questions",
            report
                .groups
                .iter()
                .map(|g| g.specific_count.to_string())
                .collect(),
        ),
        (
            "Augmenting (pages)",
            report
                .groups
                .iter()
                .map(|g| format!("{} ({})", g.augmenting_count, g.augmenting_pages))
                .collect(),
        ),
    ];
    let label_w = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0);
    let col_w: Vec<usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| {
            rows.iter()
                .map(|(_, v)| v[i].len())
                .chain([h.len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let _ = write!(out, "{:label_w$}", "");
    for (h, w) in headers.iter().zip(&col_w) {
        let _ = write!(out, " | {h:>w$}");
    }
    out.push('\n');
    let rule = label_w + col_w.iter().map(|w| w + 3).sum::<usize>();
    out.push_str(&"-".repeat(rule));
    out.push('\n');
    for (label, values) in rows {
        let _ = write!(out, "{label:label_w$}");
        for (v, w) in values.iter().zip(&col_w) {
            let _ = write!(out, " | {v:>w$}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Paragraph, Section};
    use crate::qbank::{AnswerScope, Provenance};

    fn corpus(n: u32) -> Corpus {
        Corpus::from_pages([Page {
            page_id: "p".into(),
            title: "T".into(),
            url: None,
            topic: None,
            sections: vec![Section {
                sid: 1,
                title: None,
                paragraphs: (1..=n)
                    .map(|pid| Paragraph {
                        pid,
                        text: format!("x{pid}"),
                    })
                    .collect(),
            }],
        }])
        .unwrap()
    }

    fn q(qid: &str, source: Source, label: Label, pids: &[Pid]) -> Question {
        let scope = AnswerScope::new("p", pids.iter().copied());
        let verified = match label {
            Label::Unverified => None,
            Label::Correct => Some(scope.clone()),
            _ => Some(AnswerScope::null("p")),
        };
        Question {
            qid: qid.into(),
            text: format!("{qid}?"),
            source,
            page: "p".into(),
            initial_scope: scope,
            verified_scope: verified,
            label,
            provenance: Provenance::Annotator { id: "t".into() },
        }
    }

    fn bank(qs: Vec<Question>) -> QuestionBank {
        QuestionBank::from_questions("h", qs).unwrap()
    }

    const P: fn(u32) -> Pid = Pid::Para;

    #[test]
    fn coverage_is_union_over_paragraphs() {
        let c = corpus(4);
        let b = bank(vec![
            q("a", Source::Hybrid, Label::Unverified, &[P(1), P(2)]),
            q(
                "b",
                Source::Hybrid,
                Label::Unverified,
                &[P(2), P(3), Pid::Heading],
            ),
        ]);
        assert_eq!(coverage(&b, &c, &Filter::all()).unwrap(), 0.75);
        assert_eq!(coverage(&bank(vec![]), &c, &Filter::all()).unwrap(), 0.0);
        assert_eq!(
            coverage(&b, &Corpus::default(), &Filter::all()),
            Err(MetricsError::NoParagraphs)
        );
    }

    #[test]
    fn null_scopes_cover_nothing() {
        let c = corpus(2);
        let b = bank(vec![q(
            "a",
            Source::Hybrid,
            Label::Augmenting,
            &[P(1), P(2)],
        )]);
        assert_eq!(coverage(&b, &c, &Filter::all()).unwrap(), 0.0);
    }

    #[test]
    fn precision_rules() {
        let b = bank(vec![
            q("a", Source::Hybrid, Label::Correct, &[P(1)]),
            q("b", Source::Hybrid, Label::Augmenting, &[P(1)]),
            q("c", Source::Hybrid, Label::Incorrect, &[P(1)]),
            q("d", Source::Hybrid, Label::Correct, &[P(1)]),
        ]);
        assert_eq!(precision(&b, &Filter::all()).unwrap(), 0.5);
        assert_eq!(
            precision(&b, &Filter::all().with_labels([Label::Correct])).unwrap(),
            1.0
        );
        assert_eq!(
            precision(&b, &Filter::source(Source::Manual)),
            Err(MetricsError::EmptySelection)
        );
        let u = bank(vec![q("a", Source::Hybrid, Label::Unverified, &[P(1)])]);
        assert_eq!(
            precision(&u, &Filter::all()),
            Err(MetricsError::Unverified(1))
        );
    }

    #[test]
    fn diversity_counts_single_question() {
        let c = corpus(3);
        let b = bank(vec![q("a", Source::Hybrid, Label::Correct, &[P(1), P(2)])]);
        let d = diversity_report(&b, &c, "p", &Filter::all()).unwrap();
        assert_eq!(d.per_paragraph_counts[&P(1)], 1);
        assert_eq!(d.per_paragraph_counts[&P(2)], 1);
        assert_eq!(d.per_paragraph_counts[&P(3)], 0);
        assert_eq!(d.paragraph_tally, 2);
        assert_eq!((d.general_count, d.specific_count), (1, 0));
        assert!(diversity_report(&b, &c, "zz", &Filter::all()).is_err());
    }

    #[test]
    fn generality_strictness() {
        let b = bank(vec![
            q("a", Source::Hybrid, Label::Correct, &[P(1)]),
            q("b", Source::Hybrid, Label::Correct, &[P(2)]),
            q("c", Source::Hybrid, Label::Incorrect, &[P(1)]),
        ]);
        let s = generality_stats(&b, &Filter::all(), false).unwrap();
        assert_eq!((s.general, s.specific, s.undefined), (0, 2, 1));
        assert_eq!((s.general_fraction, s.specific_fraction), (0.0, 1.0));
        assert_eq!(
            generality_stats(&b, &Filter::all(), true),
            Err(MetricsError::NullScope("c".into()))
        );
    }

    #[test]
    fn augmenting_counts_pages() {
        let b = bank(vec![
            q("a", Source::Hybrid, Label::Augmenting, &[P(1)]),
            q("b", Source::Hybrid, Label::Augmenting, &[P(2)]),
        ]);
        assert_eq!(augmenting_stats(&b, &Filter::all()), (2, 1));
        assert_eq!(augmenting_stats(&bank(vec![]), &Filter::all()), (0, 0));
    }

    #[test]
    fn evaluate_by_source_and_table() {
        let c = corpus(4);
        let b = bank(vec![
            q("a", Source::Hybrid, Label::Correct, &[P(1), P(2)]),
            q("b", Source::Manual, Label::Correct, &[P(3)]),
        ]);
        let r = evaluate(&b, &c, GroupBy::Source);
        assert_eq!(r.groups.len(), 2);
        let hybrid = &r.groups[0];
        assert_eq!(hybrid.source, Source::Hybrid);
        assert_eq!(hybrid.coverage, 0.5);
        assert_eq!(hybrid.precision, Some(1.0));
        assert_eq!(hybrid.per_paragraph_counts["p:1"], 1);
        let table = render_table(&r);
        assert!(table.contains("50.0%"), "{table}");
        assert!(table.lines().next().unwrap().contains("hybrid"));
    }
}
