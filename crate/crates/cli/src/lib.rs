//! Pipeline plumbing for the simplifier generator.

pub mod config;
pub mod corpus;
pub mod pipeline;
pub mod planted;
pub mod report;
