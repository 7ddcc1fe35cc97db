//! Seeded synthetic patients, gait and multimodal sensor streams.

pub mod gait;
pub mod profile;
pub mod run;
pub mod scenario;
pub mod streams;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("io error: {0}")]
    Io(String),
}
