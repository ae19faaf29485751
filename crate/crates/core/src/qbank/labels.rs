//! Verification labels produced by human reviewers.
//!
//! Annotation files are CSV (`qid,label,page,pid_list` with `pid_list` written as
//! `3;4;5`, empty or `NULL` for no scope), a JSON array, or JSON lines of
//! `{"qid", "label", "page", "pid_list"}` objects.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_scope_refs, AnswerScope, BankError, Label, QuestionBank};
use crate::corpus::{Corpus, Pid};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub qid: String,
    pub label: Label,
    pub page: String,
    #[serde(default)]
    pub pid_list: Option<BTreeSet<Pid>>,
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    qid: String,
    label: String,
    page: String,
    #[serde(default)]
    pid_list: String,
}

fn parse_pid_list(raw: &str) -> Result<Option<BTreeSet<Pid>>, String> {
    let raw = raw.trim();
    if raw.is_empty() || raw.eq_ignore_ascii_case("null") || raw.eq_ignore_ascii_case("n.a.") {
        return Ok(None);
    }
    raw.split([';', ' ', ','])
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<BTreeSet<Pid>, _>>()
        .map(Some)
}

/// Reads an annotation file, choosing the parser from the extension.
pub fn read_annotations(path: impl AsRef<Path>) -> Result<Vec<Annotation>, BankError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let schema = |line: usize, message: String| BankError::Schema {
        path: display.clone(),
        line,
        message,
    };
    let raw = std::fs::read_to_string(path).map_err(|source| BankError::Io {
        path: display.clone(),
        source,
    })?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or_default()
        .to_ascii_lowercase();
    match ext.as_str() {
        "csv" => {
            let mut reader = csv::ReaderBuilder::new()
                .trim(csv::Trim::All)
                .from_reader(raw.as_bytes());
            let mut out = Vec::new();
            for (i, row) in reader.deserialize::<CsvRow>().enumerate() {
                // header is line 1
                let line = i + 2;
                let row = row.map_err(|e| schema(line, e.to_string()))?;
                out.push(Annotation {
                    qid: row.qid,
                    label: row.label.parse().map_err(|e| schema(line, e))?,
                    page: row.page,
                    pid_list: parse_pid_list(&row.pid_list).map_err(|e| schema(line, e))?,
                });
            }
            Ok(out)
        }
        "json" => serde_json::from_str(&raw).map_err(|e| schema(e.line(), e.to_string())),
        _ => raw
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| schema(i + 1, e.to_string())))
            .collect(),
    }
}

/// Applies reviewer labels. The update is all-or-nothing: on any error the input
/// bank is left untouched.
pub fn ingest_labels(
    bank: &QuestionBank,
    annotations: &[Annotation],
    corpus: &Corpus,
) -> Result<QuestionBank, BankError> {
    let mut updated = bank.clone();
    for ann in annotations {
        let idx = updated
            .position(&ann.qid)
            .ok_or_else(|| BankError::UnknownQid(ann.qid.clone()))?;
        let q = &mut updated.questions_mut()[idx];
        q.label = ann.label;
        q.verified_scope = match ann.label {
            Label::Unverified => None,
            _ => Some(AnswerScope {
                page: ann.page.clone(),
                pid_list: ann.pid_list.clone(),
            }),
        };
        q.check()?;
        if let Some(scope) = &q.verified_scope {
            check_scope_refs(q, scope, corpus)?;
        }
    }
    Ok(updated)
}
