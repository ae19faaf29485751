//! Build, evaluate and serve a legal question bank.
//!
//! The pipeline runs corpus → prompts → generation → deduplication → bank; the bank
//! is then scored with [`metrics`] and indexed by [`recommender`] to map a free-text
//! scenario onto the most relevant questions and their answer paragraphs.

pub mod corpus;
pub mod dedup;
pub mod embedding;
pub mod generation;
pub mod hashing;
pub mod metrics;
pub mod promptgen;
pub mod qbank;
pub mod recommender;
pub mod retry;
