//! Question bank data model: questions, answer scopes, verification labels.

mod labels;
mod persist;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{Corpus, Pid};
use crate::promptgen::Strategy;

pub use labels::{ingest_labels, read_annotations, Annotation};
pub use persist::{load_bank, save_bank, BankHeader, BANK_FORMAT};

#[derive(Debug, Error)]
pub enum BankError {
    #[error("duplicate qid {0}")]
    DuplicateQid(String),
    #[error("unknown qid {0}")]
    UnknownQid(String),
    #[error("question {qid}: {reason}")]
    Invariant { qid: String, reason: String },
    #[error("question {qid} references unknown page {page}")]
    UnknownPage { qid: String, page: String },
    #[error("question {qid} references paragraph {pid} missing from page {page}")]
    UnknownPid { qid: String, page: String, pid: Pid },
    #[error("{path}:{line}: {message}")]
    Schema {
        path: String,
        line: usize,
        message: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Where on a page a question is answered. `pid_list == None` is the NULL scope:
/// the page does not answer the question.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AnswerScope {
    pub page: String,
    pub pid_list: Option<BTreeSet<Pid>>,
}

impl AnswerScope {
    pub fn new(page: impl Into<String>, pids: impl IntoIterator<Item = Pid>) -> Self {
        Self {
            page: page.into(),
            pid_list: Some(pids.into_iter().collect()),
        }
    }

    pub fn null(page: impl Into<String>) -> Self {
        Self {
            page: page.into(),
            pid_list: None,
        }
    }

    pub fn is_null(&self) -> bool {
        self.pid_list.is_none()
    }

    /// Number of addressed ids (heading included); zero for NULL.
    pub fn len(&self) -> usize {
        self.pid_list.as_ref().map_or(0, BTreeSet::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pids(&self) -> impl Iterator<Item = Pid> + '_ {
        self.pid_list.iter().flatten().copied()
    }
}

impl fmt::Display for AnswerScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.pid_list {
            None => write!(f, "[{}: NULL]", self.page),
            Some(pids) => {
                let list: Vec<String> = pids.iter().map(Pid::to_string).collect();
                write!(f, "[{}: {{{}}}]", self.page, list.join(", "))
            }
        }
    }
}

/// Origin of a question: one of the generation strategies or a human author.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Section,
    Paragraph,
    Hybrid,
    Manual,
}

impl Source {
    pub const ALL: [Source; 4] = [
        Source::Section,
        Source::Paragraph,
        Source::Hybrid,
        Source::Manual,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Section => "section",
            Source::Paragraph => "paragraph",
            Source::Hybrid => "hybrid",
            Source::Manual => "manual",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl From<Strategy> for Source {
    fn from(s: Strategy) -> Self {
        match s {
            Strategy::SectionBased => Source::Section,
            Strategy::ParagraphBased => Source::Paragraph,
            Strategy::Hybrid => Source::Hybrid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Label {
    Unverified,
    Correct,
    Incorrect,
    /// Relevant to the page's topic but not answered by it.
    Augmenting,
}

impl std::str::FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "UNVERIFIED" => Ok(Label::Unverified),
            "CORRECT" => Ok(Label::Correct),
            "INCORRECT" => Ok(Label::Incorrect),
            "AUGMENTING" => Ok(Label::Augmenting),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    /// Produced by a generation backend; `prompt_index` is the position of the prompt
    /// in the generation run's audit log.
    Generated {
        backend_id: String,
        prompt_index: usize,
    },
    Annotator {
        id: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub qid: String,
    pub text: String,
    pub source: Source,
    pub page: String,
    pub initial_scope: AnswerScope,
    #[serde(default)]
    pub verified_scope: Option<AnswerScope>,
    pub label: Label,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Generality {
    General,
    Specific,
    Undefined,
}

impl Question {
    /// Checks the label/scope invariants that do not need a corpus.
    pub fn check(&self) -> Result<(), BankError> {
        let fail = |reason: String| {
            Err(BankError::Invariant {
                qid: self.qid.clone(),
                reason,
            })
        };
        if self.qid.trim().is_empty() {
            return fail("empty qid".into());
        }
        if !self.text.trim_end().ends_with('?') {
            return fail(format!("text does not end in '?': {:?}", self.text));
        }
        if self.initial_scope.page != self.page {
            return fail(format!(
                "initial scope page {} differs from question page {}",
                self.initial_scope.page, self.page
            ));
        }
        if let Some(v) = &self.verified_scope {
            if v.page != self.page {
                return fail(format!(
                    "verified scope page {} differs from question page {}",
                    v.page, self.page
                ));
            }
        }
        let verified_null = self.verified_scope.as_ref().map(AnswerScope::is_null);
        match (self.label, verified_null) {
            (Label::Unverified, None) => Ok(()),
            (Label::Unverified, Some(_)) => {
                fail("UNVERIFIED question carries a verified scope".into())
            }
            (Label::Correct, Some(false)) => {
                if self
                    .verified_scope
                    .as_ref()
                    .is_some_and(AnswerScope::is_empty)
                {
                    fail("CORRECT requires a non-empty verified scope".into())
                } else {
                    Ok(())
                }
            }
            (Label::Correct, _) => fail("CORRECT requires a non-NULL verified scope".into()),
            (Label::Incorrect | Label::Augmenting, Some(true)) => Ok(()),
            (label, _) => fail(format!("{label:?} requires a NULL verified scope")),
        }
    }
}

/// The verified scope when present, otherwise the initial one.
pub fn effective_scope(q: &Question) -> &AnswerScope {
    q.verified_scope.as_ref().unwrap_or(&q.initial_scope)
}

/// Multi-paragraph scopes are general, single-paragraph ones specific.
pub fn classify_generality(q: &Question) -> Generality {
    let scope = effective_scope(q);
    match scope.pid_list.as_ref().map(BTreeSet::len) {
        None | Some(0) => Generality::Undefined,
        Some(1) => Generality::Specific,
        Some(_) => Generality::General,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct QuestionBank {
    pub corpus_hash: String,
    questions: Vec<Question>,
    /// qid → position in `questions`.
    positions: HashMap<String, usize>,
}

impl QuestionBank {
    pub fn new(corpus_hash: impl Into<String>) -> Self {
        Self {
            corpus_hash: corpus_hash.into(),
            questions: Vec::new(),
            positions: HashMap::new(),
        }
    }

    pub fn from_questions(
        corpus_hash: impl Into<String>,
        questions: impl IntoIterator<Item = Question>,
    ) -> Result<Self, BankError> {
        let mut bank = Self::new(corpus_hash);
        for q in questions {
            bank.push(q)?;
        }
        Ok(bank)
    }

    pub fn push(&mut self, q: Question) -> Result<(), BankError> {
        q.check()?;
        if self.positions.contains_key(&q.qid) {
            return Err(BankError::DuplicateQid(q.qid));
        }
        self.positions.insert(q.qid.clone(), self.questions.len());
        self.questions.push(q);
        Ok(())
    }

    pub fn questions(&self) -> &[Question] {
        &self.questions
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn get(&self, qid: &str) -> Option<&Question> {
        self.positions.get(qid).map(|&i| &self.questions[i])
    }

    /// Keeps only questions whose qid is in `keep`, preserving order.
    pub fn retain_qids(&mut self, keep: &HashSet<&str>) {
        self.questions.retain(|q| keep.contains(q.qid.as_str()));
        self.positions = self
            .questions
            .iter()
            .enumerate()
            .map(|(i, q)| (q.qid.clone(), i))
            .collect();
    }

    pub(crate) fn position(&self, qid: &str) -> Option<usize> {
        self.positions.get(qid).copied()
    }

    /// Callers must not change qids.
    pub(crate) fn questions_mut(&mut self) -> &mut [Question] {
        &mut self.questions
    }

    /// Verifies every page and paragraph reference against `corpus`.
    pub fn validate_against(&self, corpus: &Corpus) -> Result<(), BankError> {
        let mut seen = HashSet::with_capacity(self.questions.len());
        for q in &self.questions {
            q.check()?;
            if !seen.insert(q.qid.as_str()) {
                return Err(BankError::DuplicateQid(q.qid.clone()));
            }
            check_scope_refs(q, &q.initial_scope, corpus)?;
            if let Some(v) = &q.verified_scope {
                check_scope_refs(q, v, corpus)?;
            }
        }
        Ok(())
    }

    /// SHA-256 over the serialized questions, in bank order.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for q in &self.questions {
            hasher.update(serde_json::to_vec(q).expect("question serializes"));
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}

pub(crate) fn check_scope_refs(
    q: &Question,
    scope: &AnswerScope,
    corpus: &Corpus,
) -> Result<(), BankError> {
    let page = corpus
        .page(&scope.page)
        .ok_or_else(|| BankError::UnknownPage {
            qid: q.qid.clone(),
            page: scope.page.clone(),
        })?;
    for pid in scope.pids() {
        if !page.contains(pid) {
            return Err(BankError::UnknownPid {
                qid: q.qid.clone(),
                page: scope.page.clone(),
                pid,
            });
        }
    }
    Ok(())
}
