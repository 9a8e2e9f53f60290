//! Multi-faceted self-consistency preference data for conversational query rewriting.

pub mod concurrency;
pub mod corpus;
mod error;
pub mod eval;
pub mod fusion;
pub mod io;
pub mod llm;
pub mod preference;
pub mod retriever;
pub mod scoring;
pub mod similarity;
#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
