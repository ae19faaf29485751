//! Corpus of structured legal pages.
//!
//! Each page lives in its own JSON document:
//!
//! ```json
//! {"page_id": "69", "title": "...", "url": "...", "topic": "...",
//!  "sections": [{"sid": 1, "title": "...", "paragraphs": [{"pid": 1, "text": "..."}]}]}
//! ```
//!
//! Paragraph ids are assigned by the corpus author and never recomputed, so answer
//! scopes stay valid across re-ingestion. The page title is addressable through the
//! reserved id `heading`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::qbank::AnswerScope;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus path {0} does not exist or is not a directory")]
    MissingPath(PathBuf),
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: malformed page JSON at line {line}, column {column}: {message}")]
    Malformed {
        file: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{file}: page {page_id}: {location}: {reason}")]
    Invalid {
        file: PathBuf,
        page_id: String,
        location: String,
        reason: String,
    },
    #[error("duplicate page_id {page_id} in {first} and {second}")]
    DuplicatePage {
        page_id: String,
        first: PathBuf,
        second: PathBuf,
    },
    #[error("unknown page {0}")]
    UnknownPage(String),
    #[error("page {page_id} has no paragraph {pid}")]
    UnknownPid { page_id: String, pid: Pid },
}

/// Paragraph identifier inside a page. `Heading` addresses the page title and sorts
/// before every numbered paragraph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pid {
    Heading,
    Para(u32),
}

impl Pid {
    pub const HEADING_LABEL: &'static str = "heading";

    pub fn is_heading(self) -> bool {
        matches!(self, Pid::Heading)
    }
}

impl fmt::Display for Pid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pid::Heading => f.write_str(Self::HEADING_LABEL),
            Pid::Para(n) => write!(f, "{n}"),
        }
    }
}

impl std::str::FromStr for Pid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case(Self::HEADING_LABEL) {
            return Ok(Pid::Heading);
        }
        match s.parse::<u32>() {
            Ok(0) => Err("paragraph ids start at 1".to_string()),
            Ok(n) => Ok(Pid::Para(n)),
            Err(_) => Err(format!("invalid paragraph id {s:?}")),
        }
    }
}

impl From<u32> for Pid {
    fn from(n: u32) -> Self {
        Pid::Para(n)
    }
}

impl Serialize for Pid {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Pid::Heading => serializer.serialize_str(Self::HEADING_LABEL),
            Pid::Para(n) => serializer.serialize_u32(*n),
        }
    }
}

impl<'de> Deserialize<'de> for Pid {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct PidVisitor;

        impl Visitor<'_> for PidVisitor {
            type Value = Pid;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a positive paragraph number or \"heading\"")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Pid, E> {
                match u32::try_from(v) {
                    Ok(0) | Err(_) => Err(E::custom(format!("invalid paragraph id {v}"))),
                    Ok(n) => Ok(Pid::Para(n)),
                }
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Pid, E> {
                if v <= 0 {
                    return Err(E::custom(format!("invalid paragraph id {v}")));
                }
                self.visit_u64(v as u64)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Pid, E> {
                v.parse().map_err(E::custom)
            }
        }

        deserializer.deserialize_any(PidVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub pid: u32,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub sid: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub paragraphs: Vec<Paragraph>,
}

impl Section {
    pub fn pids(&self) -> impl Iterator<Item = u32> + '_ {
        self.paragraphs.iter().map(|p| p.pid)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page {
    pub page_id: String,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
    pub sections: Vec<Section>,
}

impl Page {
    pub fn paragraphs(&self) -> impl Iterator<Item = &Paragraph> {
        self.sections.iter().flat_map(|s| s.paragraphs.iter())
    }

    pub fn paragraph_count(&self) -> usize {
        self.sections.iter().map(|s| s.paragraphs.len()).sum()
    }

    pub fn paragraph(&self, pid: u32) -> Option<&Paragraph> {
        self.paragraphs().find(|p| p.pid == pid)
    }

    /// Text addressed by `pid`; the heading resolves to the page title.
    pub fn text_of(&self, pid: Pid) -> Option<&str> {
        match pid {
            Pid::Heading => Some(self.title.as_str()),
            Pid::Para(n) => self.paragraph(n).map(|p| p.text.as_str()),
        }
    }

    pub fn contains(&self, pid: Pid) -> bool {
        match pid {
            Pid::Heading => true,
            Pid::Para(n) => self.paragraph(n).is_some(),
        }
    }

    /// Every addressable id: the heading plus all paragraph ids.
    pub fn scope_universe(&self) -> BTreeSet<Pid> {
        std::iter::once(Pid::Heading)
            .chain(self.paragraphs().map(|p| Pid::Para(p.pid)))
            .collect()
    }

    /// Checks the structural invariants. `location` strings name the offending element.
    pub fn validate(&self) -> Result<(), (String, String)> {
        if self.page_id.trim().is_empty() {
            return Err(("page_id".into(), "page_id must not be empty".into()));
        }
        if self.sections.is_empty() {
            return Err(("sections".into(), "page has no sections".into()));
        }
        let mut sids = HashSet::new();
        let mut pids = HashSet::new();
        for (si, section) in self.sections.iter().enumerate() {
            let loc = format!("sections[{si}] (sid {})", section.sid);
            if section.sid == 0 {
                return Err((loc, "sid must be a positive integer".into()));
            }
            if !sids.insert(section.sid) {
                return Err((loc, format!("duplicate sid {}", section.sid)));
            }
            if section.paragraphs.is_empty() {
                return Err((loc, "section has no paragraphs".into()));
            }
            for (pi, para) in section.paragraphs.iter().enumerate() {
                let loc = format!("{loc}.paragraphs[{pi}] (pid {})", para.pid);
                if para.pid == 0 {
                    return Err((loc, "pid must be a positive integer".into()));
                }
                if !pids.insert(para.pid) {
                    return Err((loc, format!("duplicate pid {}", para.pid)));
                }
                if para.text.trim().is_empty() {
                    return Err((loc, "paragraph text is empty".into()));
                }
            }
        }
        Ok(())
    }
}

/// A paragraph resolved from an answer scope. The heading carries the page title.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScopeParagraph<'a> {
    pub pid: Pid,
    pub text: &'a str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pages: BTreeMap<String, Page>,
    hash: String,
}

impl Default for Corpus {
    fn default() -> Self {
        Self::from_map(BTreeMap::new())
    }
}

impl Corpus {
    /// Builds a corpus from in-memory pages, enforcing the same invariants as
    /// [`load_corpus`].
    pub fn from_pages(pages: impl IntoIterator<Item = Page>) -> Result<Self, CorpusError> {
        let mut map = BTreeMap::new();
        for page in pages {
            let origin = PathBuf::from(format!("<memory:{}>", page.page_id));
            check_page(&origin, &page)?;
            if map.contains_key(&page.page_id) {
                return Err(CorpusError::DuplicatePage {
                    page_id: page.page_id.clone(),
                    first: origin.clone(),
                    second: origin,
                });
            }
            map.insert(page.page_id.clone(), page);
        }
        Ok(Self::from_map(map))
    }

    fn from_map(pages: BTreeMap<String, Page>) -> Self {
        let encoded = serde_json::to_vec(&pages).expect("pages serialize");
        let hash = hex::encode(Sha256::digest(&encoded));
        Self { pages, hash }
    }

    pub fn pages(&self) -> impl Iterator<Item = &Page> {
        self.pages.values()
    }

    pub fn page(&self, page_id: &str) -> Option<&Page> {
        self.pages.get(page_id)
    }

    pub fn len(&self) -> usize {
        self.pages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }

    /// SHA-256 over the canonical serialization of all pages.
    pub fn hash(&self) -> &str {
        &self.hash
    }
}

fn check_page(file: &Path, page: &Page) -> Result<(), CorpusError> {
    page.validate()
        .map_err(|(location, reason)| CorpusError::Invalid {
            file: file.to_path_buf(),
            page_id: page.page_id.clone(),
            location,
            reason,
        })
}

/// Loads every `*.json` page file in `dir` (non-recursive, in file-name order).
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(CorpusError::MissingPath(dir.to_path_buf()));
    }
    let io_err = |source| CorpusError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "json") {
            files.push(path);
        }
    }
    files.sort();

    let mut pages = BTreeMap::new();
    let mut origins: BTreeMap<String, PathBuf> = BTreeMap::new();
    for file in files {
        let raw = std::fs::read_to_string(&file).map_err(|source| CorpusError::Io {
            path: file.clone(),
            source,
        })?;
        let page: Page = serde_json::from_str(&raw).map_err(|e| CorpusError::Malformed {
            file: file.clone(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        check_page(&file, &page)?;
        if let Some(first) = origins.get(&page.page_id) {
            return Err(CorpusError::DuplicatePage {
                page_id: page.page_id,
                first: first.clone(),
                second: file,
            });
        }
        origins.insert(page.page_id.clone(), file);
        pages.insert(page.page_id.clone(), page);
    }
    Ok(Corpus::from_map(pages))
}

/// Total number of paragraphs, headings excluded.
pub fn paragraph_count(corpus: &Corpus) -> usize {
    corpus.pages().map(Page::paragraph_count).sum()
}

/// Resolves an answer scope to its paragraphs in ascending id order, heading first.
/// A NULL scope resolves to nothing.
pub fn resolve_scope<'a>(
    corpus: &'a Corpus,
    scope: &AnswerScope,
) -> Result<Vec<ScopeParagraph<'a>>, CorpusError> {
    let page = corpus
        .page(&scope.page)
        .ok_or_else(|| CorpusError::UnknownPage(scope.page.clone()))?;
    let Some(pids) = &scope.pid_list else {
        return Ok(Vec::new());
    };
    pids.iter()
        .map(|&pid| {
            page.text_of(pid)
                .map(|text| ScopeParagraph { pid, text })
                .ok_or_else(|| CorpusError::UnknownPid {
                    page_id: page.page_id.clone(),
                    pid,
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn page(id: &str, sections: &[&[u32]]) -> Page {
        Page {
            page_id: id.into(),
            title: format!("Page {id}"),
            url: None,
            topic: None,
            sections: sections
                .iter()
                .enumerate()
                .map(|(i, pids)| Section {
                    sid: i as u32 + 1,
                    title: None,
                    paragraphs: pids
                        .iter()
                        .map(|&pid| Paragraph {
                            pid,
                            text: format!("text of {id}/{pid}"),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    fn write_page(dir: &Path, name: &str, page: &Page) {
        std::fs::write(dir.join(name), serde_json::to_string_pretty(page).unwrap()).unwrap();
    }

    #[test]
    fn empty_directory_is_empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = load_corpus(dir.path()).unwrap();
        assert!(corpus.is_empty());
        assert_eq!(paragraph_count(&corpus), 0);
    }

    #[test]
    fn missing_directory_is_an_error() {
        let err = load_corpus("/definitely/not/here").unwrap_err();
        assert!(matches!(err, CorpusError::MissingPath(_)));
    }

    #[test]
    fn counts_paragraphs_without_headings() {
        let corpus = Corpus::from_pages([
            page("a", &[&[1, 2], &[3, 4]]),
            page("b", &[&[1, 2, 3, 4, 5]]),
            page("c", &[&[1, 2, 3], &[4, 5, 6]]),
        ])
        .unwrap();
        assert_eq!(paragraph_count(&corpus), 15);
    }

    #[test]
    fn duplicate_pid_names_page_and_pid() {
        let dir = tempfile::tempdir().unwrap();
        write_page(dir.path(), "x.json", &page("x", &[&[1, 2, 3], &[3]]));
        let err = load_corpus(dir.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("page x"), "{msg}");
        assert!(msg.contains("duplicate pid 3"), "{msg}");
        assert!(msg.contains("x.json"), "{msg}");
    }

    #[test]
    fn duplicate_page_ids_across_files() {
        let dir = tempfile::tempdir().unwrap();
        write_page(dir.path(), "a.json", &page("same", &[&[1]]));
        write_page(dir.path(), "b.json", &page("same", &[&[1]]));
        assert!(matches!(
            load_corpus(dir.path()).unwrap_err(),
            CorpusError::DuplicatePage { .. }
        ));
    }

    #[test]
    fn blank_paragraph_rejected() {
        let mut p = page("x", &[&[1, 2]]);
        p.sections[0].paragraphs[1].text = "  \n ".into();
        let err = Corpus::from_pages([p]).unwrap_err();
        assert!(err.to_string().contains("empty"));
    }

    #[test]
    fn malformed_json_reports_location() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("bad.json"), "{\n  \"page_id\": 3,\n").unwrap();
        match load_corpus(dir.path()).unwrap_err() {
            CorpusError::Malformed { file, line, .. } => {
                assert!(file.ends_with("bad.json"));
                assert!(line >= 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn resolve_scope_orders_heading_first() {
        let corpus = Corpus::from_pages([page("69", &[&[1, 2], &[3, 4, 5]])]).unwrap();
        let scope = AnswerScope::new("69", [Pid::Para(5), Pid::Heading, Pid::Para(3)]);
        let resolved = resolve_scope(&corpus, &scope).unwrap();
        let pids: Vec<_> = resolved.iter().map(|p| p.pid).collect();
        assert_eq!(pids, vec![Pid::Heading, Pid::Para(3), Pid::Para(5)]);
        assert_eq!(resolved[0].text, "Page 69");
    }

    #[test]
    fn resolve_scope_errors() {
        let corpus = Corpus::from_pages([page("p", &[&[1, 2, 3, 4, 5]])]).unwrap();
        let err = resolve_scope(&corpus, &AnswerScope::new("p", [Pid::Para(99)])).unwrap_err();
        assert!(matches!(
            err,
            CorpusError::UnknownPid {
                pid: Pid::Para(99),
                ..
            }
        ));
        let err = resolve_scope(&corpus, &AnswerScope::new("q", [Pid::Para(1)])).unwrap_err();
        assert!(matches!(err, CorpusError::UnknownPage(_)));
        let empty = AnswerScope::new("p", std::iter::empty::<Pid>());
        assert!(resolve_scope(&corpus, &empty).unwrap().is_empty());
    }

    #[test]
    fn pid_serde() {
        let pids: Vec<Pid> = serde_json::from_str(r#"["heading", 3, "4"]"#).unwrap();
        assert_eq!(pids, vec![Pid::Heading, Pid::Para(3), Pid::Para(4)]);
        assert_eq!(serde_json::to_string(&pids).unwrap(), r#"["heading",3,4]"#);
        assert!(serde_json::from_str::<Pid>("0").is_err());
        assert!(serde_json::from_str::<Pid>("-2").is_err());
    }

    #[test]
    fn hash_is_stable_and_content_sensitive() {
        let a = Corpus::from_pages([page("a", &[&[1, 2]])]).unwrap();
        let b = Corpus::from_pages([page("a", &[&[1, 2]])]).unwrap();
        let mut changed = page("a", &[&[1, 2]]);
        changed.sections[0].paragraphs[0].text.push('!');
        let c = Corpus::from_pages([changed]).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }
}
