//! Command line and HTTP front ends for the question bank pipeline.

pub mod cli;
pub mod config;
pub mod http;
