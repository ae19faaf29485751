//! Offline deterministic backend.
//!
//! A completion is looked up by the stable hash of the prompt text in an optional
//! fixture table; prompts without a fixture get a synthetic numbered question list
//! built from the words of the attended paragraph, with the RNG seeded by the same
//! hash. Identical prompts always yield identical completions.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GenerationBackend, GenerationConfig, GenerationError};
use crate::hashing::{fnv1a64, stable_key};

pub const MOCK_BACKEND_ID: &str = "mock-v1";

const STOPWORDS: &[&str] = &[
    "about",
    "above",
    "after",
    "again",
    "against",
    "also",
    "among",
    "been",
    "before",
    "being",
    "below",
    "between",
    "both",
    "cannot",
    "could",
    "does",
    "doing",
    "down",
    "during",
    "each",
    "either",
    "even",
    "every",
    "from",
    "further",
    "have",
    "having",
    "here",
    "however",
    "into",
    "itself",
    "just",
    "made",
    "make",
    "many",
    "might",
    "more",
    "most",
    "much",
    "must",
    "only",
    "other",
    "otherwise",
    "over",
    "same",
    "shall",
    "should",
    "since",
    "some",
    "such",
    "than",
    "that",
    "their",
    "them",
    "then",
    "there",
    "these",
    "they",
    "this",
    "those",
    "through",
    "under",
    "until",
    "upon",
    "very",
    "what",
    "when",
    "where",
    "whether",
    "which",
    "while",
    "will",
    "with",
    "within",
    "without",
    "would",
    "your",
];

const SINGLE: &[&str] = &[
    "What is the {a}?",
    "When does the {a} apply?",
    "Who is responsible for the {a}?",
    "What happens if the {a} is not respected?",
    "Is there any exception to the {a}?",
    "What should I know about the {a}?",
];

const PAIR: &[&str] = &[
    "How does the {a} relate to the {b}?",
    "Can the {a} affect the {b}?",
    "What is the difference between the {a} and the {b}?",
    "Who decides on the {a} when there is a {b}?",
    "Do I need the {a} before the {b}?",
];

#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    fixtures: BTreeMap<String, String>,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a canned completion for `prompt_text`.
    pub fn with_fixture(mut self, prompt_text: &str, completion: impl Into<String>) -> Self {
        self.fixtures
            .insert(stable_key(prompt_text), completion.into());
        self
    }

    /// Loads a JSON object mapping [`stable_key`] hashes to completions.
    pub fn from_fixture_file(path: impl AsRef<Path>) -> Result<Self, GenerationError> {
        let raw = std::fs::read_to_string(path.as_ref())
            .map_err(|e| GenerationError::Backend(format!("fixture file: {e}")))?;
        let fixtures = serde_json::from_str(&raw)
            .map_err(|e| GenerationError::Backend(format!("fixture file: {e}")))?;
        Ok(Self { fixtures })
    }

    fn synthesize(prompt_text: &str) -> String {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(prompt_text.as_bytes()));
        let words = content_words(focus_text(prompt_text));
        if words.is_empty() {
            return "I could not find anything to ask about.".to_string();
        }
        let mut lines = Vec::with_capacity(10);
        let mut seen = HashSet::new();
        let mut guard = 0;
        while lines.len() < 10 && guard < 100 {
            guard += 1;
            let a = *words.choose(&mut rng).expect("non-empty");
            let q = if words.len() > 1 && rng.random_bool(0.4) {
                let b = *words.choose(&mut rng).expect("non-empty");
                if a == b {
                    continue;
                }
                PAIR.choose(&mut rng)
                    .expect("templates")
                    .replace("{a}", a)
                    .replace("{b}", b)
            } else {
                SINGLE
                    .choose(&mut rng)
                    .expect("templates")
                    .replace("{a}", a)
            };
            if seen.insert(q.clone()) {
                lines.push(q);
            }
        }
        let mut out = String::from("\n\n");
        for (i, q) in lines.iter().enumerate() {
            out.push_str(&format!("{}. {q}\n", i + 1));
        }
        if rng.random_bool(0.25) {
            out.push_str("\nNote: these questions are for general information only.\n");
        }
        out
    }
}

/// The labelled paragraph a hybrid instruction points at, or the whole context
/// (without its first line, the page title) otherwise.
fn focus_text(prompt_text: &str) -> &str {
    let (context, instruction) = prompt_text.rsplit_once("\n\n").unwrap_or((prompt_text, ""));
    if let Some(start) = instruction.find("[P") {
        if let Some(len) = instruction[start..].find(']') {
            let label = &instruction[start..=start + len];
            if let Some(block) = context.split("\n\n").find(|b| b.starts_with(label)) {
                return &block[label.len()..];
            }
        }
    }
    context.split_once("\n\n").map_or(context, |(_, rest)| rest)
}

fn content_words(text: &str) -> Vec<&str> {
    let mut seen = HashSet::new();
    text.split(|c: char| !c.is_alphabetic())
        .filter(|w| w.len() >= 4 && w.chars().all(|c| c.is_ascii_lowercase()))
        .filter(|w| !STOPWORDS.contains(w))
        .filter(|w| seen.insert(*w))
        .collect()
}

impl GenerationBackend for MockBackend {
    fn backend_id(&self) -> &str {
        MOCK_BACKEND_ID
    }

    fn complete(
        &self,
        prompt_text: &str,
        _config: &GenerationConfig,
    ) -> Result<String, GenerationError> {
        Ok(self
            .fixtures
            .get(&stable_key(prompt_text))
            .cloned()
            .unwrap_or_else(|| Self::synthesize(prompt_text)))
    }
}
