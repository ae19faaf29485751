use std::collections::HashSet;
use std::sync::LazyLock;

use regex::Regex;

/// Enumeration markers a model puts in front of list items: `1.`, `1)`, `-`, `*`,
/// `Q1:`, `Q:`, `Question 3.`.
static MARKER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?i:(?:q(?:uestion)?\s*\d*\s*[:.)])|(?:\d+\s*[.)\]:])|(?:[-*•]))\s*")
        .expect("marker regex")
});

/// Extracts the question list from a raw completion.
///
/// Each line is trimmed and stripped of one leading enumeration marker; only lines
/// ending in `?` survive. Order is preserved and exact repeats are dropped.
pub fn parse_questions(completion: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for line in completion.lines() {
        let line = line.trim();
        let stripped = MARKER.replace(line, "");
        let candidate = stripped.trim();
        if candidate.len() > 1 && candidate.ends_with('?') && seen.insert(candidate.to_string()) {
            out.push(candidate.to_string());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn numbered_list() {
        assert_eq!(
            parse_questions("1. What is rent?\n2. Who pays?"),
            vec!["What is rent?", "Who pays?"]
        );
    }

    #[test]
    fn drops_prose() {
        assert_eq!(
            parse_questions("Here are FAQs:\n1. A?\nNote: consult a lawyer."),
            vec!["A?"]
        );
    }

    #[test]
    fn marker_variants() {
        let raw = "1) One?\n- Two?\n* Three?\nQ4: Four?\nQ: Five?\nquestion 6. Six?\n  7 . Seven?  \n• Eight?";
        assert_eq!(
            parse_questions(raw),
            vec!["One?", "Two?", "Three?", "Four?", "Five?", "Six?", "Seven?", "Eight?"]
        );
    }

    #[test]
    fn duplicates_and_blanks() {
        assert_eq!(
            parse_questions("1. Same?\n\n2. Same?\n3. ?\n"),
            vec!["Same?"]
        );
        assert!(parse_questions("").is_empty());
    }

    #[test]
    fn keeps_question_words_that_look_like_markers() {
        assert_eq!(parse_questions("Quite right?"), vec!["Quite right?"]);
        assert_eq!(
            parse_questions("2022 rules apply?"),
            vec!["2022 rules apply?"]
        );
    }

    proptest! {
        #[test]
        fn outputs_are_trimmed_substrings_ending_in_question_mark(raw in "[ -~\n]{0,200}") {
            for q in parse_questions(&raw) {
                prop_assert!(q.ends_with('?'));
                prop_assert!(raw.contains(&q));
                prop_assert_eq!(q.trim(), q.as_str());
            }
        }
    }
}
