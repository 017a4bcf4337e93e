//! Library surface of the command-line harness, kept separate from the
//! binary so the orchestration logic is testable in-process.

pub mod commands;
pub mod config;
