//! Event schema induction with a language model: skeleton construction,
//! event expansion, pairwise relation verification and graph repair.

pub mod cli;
pub mod config;
pub mod dot;
pub mod eval;
pub mod finalize;
pub mod llm;
pub mod pipeline;
pub mod prompts;
pub mod relation;
pub mod retrieval;
pub mod schema;
pub mod similarity;
