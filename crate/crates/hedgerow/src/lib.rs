//! Causal identifiability engine for acyclic directed mixed graphs.
//!
//! (Crate-level documentation is finalized alongside the examples.)

pub mod criteria;
pub mod ctf;
pub mod dsl;
pub mod effects;
pub mod error;
pub mod estimand;
pub mod graph;
pub mod id;
pub mod parse;
pub mod render;
pub mod scm;
pub mod simplify;
