//! Blackboard, knowledge bases and conversation windows.

mod blackboard;
mod knowledge;
mod window;

use thiserror::Error;

pub use blackboard::{Artifact, Blackboard, INPUT_PRODUCER};
pub use knowledge::{tokenize, Document, Hit, KnowledgeBase, KnowledgeStore};
pub use window::{apply_window, Eviction, MemoryWindow};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MemoryError {
    #[error("UNDECLARED_OUTPUT: {producer} does not declare output {key:?}")]
    UndeclaredOutput { producer: String, key: String },
    #[error("KEY_ABSENT: {0}")]
    KeyAbsent(String),
    #[error("EMPTY_QUERY: query has no tokens")]
    EmptyQuery,
    #[error("DUPLICATE_DOCUMENT: {kb} already holds {id}")]
    DuplicateDocument { kb: String, id: String },
    #[error("knowledge base io: {0}")]
    Io(String),
}
