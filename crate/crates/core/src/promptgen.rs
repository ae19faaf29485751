//! Generation prompts for the three page-partitioning strategies.
//!
//! * Section-based: one prompt per section.
//! * Paragraph-based: one prompt per paragraph.
//! * Hybrid: one prompt per paragraph, each carrying the paragraph's whole section
//!   with every paragraph labelled `[P<pid>]`, and an instruction that points the
//!   model at one label.
//!
//! Every context starts with the page title. The prompt text is the context, a blank
//! line, then the instruction.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Page, Pid, Section};

pub const FAQ_INSTRUCTION: &str = "10 frequently-asked questions (FAQs):";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("hybrid prompts need a paragraph label")]
    MissingLabel,
    #[error("{0} prompts do not take a paragraph label")]
    UnexpectedLabel(Strategy),
    #[error("unknown strategy {0:?} (expected section, paragraph or hybrid)")]
    UnknownStrategy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "section")]
    SectionBased,
    #[serde(rename = "paragraph")]
    ParagraphBased,
    #[serde(rename = "hybrid")]
    Hybrid,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [
        Strategy::SectionBased,
        Strategy::ParagraphBased,
        Strategy::Hybrid,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::SectionBased => "section",
            Strategy::ParagraphBased => "paragraph",
            Strategy::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Strategy {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "section" | "section-based" | "sectionbased" => Ok(Strategy::SectionBased),
            "paragraph" | "paragraph-based" | "paragraphbased" => Ok(Strategy::ParagraphBased),
            "hybrid" => Ok(Strategy::Hybrid),
            _ => Err(PromptError::UnknownStrategy(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub page_id: String,
    pub strategy: Strategy,
    pub context_text: String,
    pub instruction: String,
    /// The paragraph(s) the instruction points at.
    pub attention_pids: BTreeSet<Pid>,
    /// Everything included in the context; becomes the initial answer scope.
    pub scope_pids: BTreeSet<Pid>,
}

impl Prompt {
    /// The exact string sent to the generation backend.
    pub fn text(&self) -> String {
        format!("{}\n\n{}", self.context_text, self.instruction)
    }
}

pub fn paragraph_label(pid: u32) -> String {
    format!("[P{pid}]")
}

pub fn instruction_for(strategy: Strategy, label: Option<u32>) -> Result<String, PromptError> {
    match (strategy, label) {
        (Strategy::Hybrid, Some(pid)) => Ok(format!(
            "10 most frequently-asked questions for {}:",
            paragraph_label(pid)
        )),
        (Strategy::Hybrid, None) => Err(PromptError::MissingLabel),
        (other, Some(_)) => Err(PromptError::UnexpectedLabel(other)),
        (_, None) => Ok(FAQ_INSTRUCTION.to_string()),
    }
}

fn section_context(page: &Page, section: &Section, labelled: bool) -> String {
    let mut blocks = vec![page.title.trim().to_string()];
    if let Some(title) = section
        .title
        .as_deref()
        .map(str::trim)
        .filter(|t| !t.is_empty())
    {
        blocks.push(title.to_string());
    }
    for p in &section.paragraphs {
        let text = p.text.trim();
        blocks.push(if labelled {
            format!("{} {text}", paragraph_label(p.pid))
        } else {
            text.to_string()
        });
    }
    blocks.join("\n\n")
}

fn section_scope(section: &Section, with_heading: bool) -> BTreeSet<Pid> {
    let mut pids: BTreeSet<Pid> = section.pids().map(Pid::Para).collect();
    if with_heading {
        pids.insert(Pid::Heading);
    }
    pids
}

/// Builds the prompts for one page, in section order then paragraph order.
pub fn build_prompts(page: &Page, strategy: Strategy) -> Vec<Prompt> {
    let mut prompts = Vec::new();
    for (si, section) in page.sections.iter().enumerate() {
        let first_section = si == 0;
        match strategy {
            Strategy::SectionBased => {
                let scope = section_scope(section, first_section);
                prompts.push(Prompt {
                    page_id: page.page_id.clone(),
                    strategy,
                    context_text: section_context(page, section, false),
                    instruction: FAQ_INSTRUCTION.to_string(),
                    attention_pids: scope.clone(),
                    scope_pids: scope,
                });
            }
            Strategy::ParagraphBased => {
                for p in &section.paragraphs {
                    let only = BTreeSet::from([Pid::Para(p.pid)]);
                    prompts.push(Prompt {
                        page_id: page.page_id.clone(),
                        strategy,
                        context_text: format!("{}\n\n{}", page.title.trim(), p.text.trim()),
                        instruction: FAQ_INSTRUCTION.to_string(),
                        attention_pids: only.clone(),
                        scope_pids: only,
                    });
                }
            }
            Strategy::Hybrid => {
                let context = section_context(page, section, true);
                let scope = section_scope(section, first_section);
                for p in &section.paragraphs {
                    prompts.push(Prompt {
                        page_id: page.page_id.clone(),
                        strategy,
                        context_text: context.clone(),
                        instruction: instruction_for(strategy, Some(p.pid))
                            .expect("hybrid with label"),
                        attention_pids: BTreeSet::from([Pid::Para(p.pid)]),
                        scope_pids: scope.clone(),
                    });
                }
            }
        }
    }
    prompts
}
