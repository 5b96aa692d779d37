//! Generation of domain-specific formula simplifiers.
//!
//! The pipeline mines recurring sub-patterns from a corpus of formula DAGs,
//! synthesizes verified conditional rewrite rules for them, compiles the rules
//! into a shared discrimination net, and tunes which rules to apply (and in
//! what order) against a corpus metric.

pub mod absint;
pub mod dag;
pub mod engine;
pub mod eval;
pub mod hashcons;
pub mod matcher;
pub mod miner;
pub mod pattern;
pub mod predicate;
pub mod synth;
pub mod tuner;

pub use dag::{parse_dag, serialize_dag, FormulaDag, Node, NodeId, OpKind, Sort};
pub use eval::{evaluate, Environment, Semantics, Value};
pub use hashcons::{constant_fold, hash_cons};
