pub mod config;
pub mod dataset;
pub mod eval;
pub mod exec;
pub mod llm;
pub mod pipeline;
pub mod prompt;
pub mod schema;
mod sqlite;
