//! Error types shared across the crate.
//!
//! Each family of operations has its own focused enum so that callers can
//! match on exactly the failures their layer can produce: graph construction
//! and structural queries ([`GraphError`]), model construction and oracle
//! evaluation ([`ModelError`], [`EvalError`]), and text-format parsing
//! ([`ParseError`]).

use thiserror::Error;

/// Errors from ADMG construction and structural graph operations.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    /// The directed part of the graph contains a cycle.
    #[error("directed cycle through `{0}`")]
    Cycle(String),

    /// An operation referenced a node that is not in the graph.
    #[error("unknown node `{0}`")]
    UnknownNode(String),

    /// An edge connects a node to itself.
    #[error("self-loop on `{0}`")]
    SelfLoop(String),

    /// The same node name was declared twice.
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),

    /// Node sets that must be disjoint share a member.
    #[error("node sets must be disjoint, but `{0}` appears in two of them")]
    OverlappingSets(String),

    /// A Markovian-only operation was applied to a graph with bidirected edges.
    #[error("graph is not Markovian: bidirected edge `{0} <-> {1}`")]
    NotMarkovian(String, String),

    /// The given node set is not a c-component of the graph.
    #[error("`{{{0}}}` is not a c-component of the graph")]
    NotAComponent(String),

    /// A supplied node ordering is not a topological order of the graph.
    #[error("not a topological order: {0}")]
    NotTopological(String),

    /// Treatment and outcome sets overlap.
    #[error("degenerate query: `{0}` is both treatment and outcome")]
    DegenerateQuery(String),

    /// The two contrast values of an effect query coincide.
    #[error("degenerate contrast: active and baseline values are both `{0}`")]
    DegenerateContrast(String),

    /// An adjustment set violates a structural precondition.
    #[error("bad adjustment set: `{0}` is a descendant of the treatment")]
    BadAdjustmentSet(String),

    /// A counterfactual conjunction is structurally self-contradictory in a
    /// way that is an error rather than a probability-zero event.
    #[error("inconsistent counterfactual query: {0}")]
    InconsistentQuery(String),

    /// A conditional counterfactual query was posed without evidence.
    #[error("conditional counterfactual query has empty evidence")]
    EmptyEvidence,

    /// A path set failed validation against the graph.
    #[error("invalid path set: {0}")]
    InvalidPathSet(String),
}

/// Errors from discrete SCM construction and oracle computations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    /// The model references a variable absent from its graph (or vice versa).
    #[error("model/graph mismatch: {0}")]
    Mismatch(String),

    /// A probability row does not sum to one (or has a negative entry).
    #[error("row `{row}` of `{var}` is not a distribution (sums to {sum})")]
    BadRow { var: String, row: String, sum: f64 },

    /// The exogenous-sharing pattern does not match the bidirected edges.
    #[error("exogenous sharing does not match bidirected edges: {0}")]
    SharingMismatch(String),

    /// Exact enumeration would exceed the configured state cap.
    #[error("state space too large: {actual} states exceeds the cap of {cap}")]
    DomainTooLarge { actual: u128, cap: u128 },

    /// An operation referenced an unknown variable.
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    /// An evidence conjunction has probability zero.
    #[error("evidence has probability zero")]
    ZeroEvidence,

    /// An expectation-based effect was requested over a non-numeric domain.
    #[error("domain of `{0}` is not numeric; expectation is undefined")]
    NonNumericDomain(String),
}

/// Errors from estimand evaluation against a distribution.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    /// A free value token was not bound by the supplied environment.
    #[error("free value token `{0}` is not bound")]
    FreeVariableUnbound(String),

    /// The estimand still contains an interventional term.
    #[error("estimand contains a residual do-term and cannot be evaluated observationally")]
    ContainsDoTerm,

    /// A variable of the estimand is not a variable of the distribution.
    #[error("distribution has no variable `{0}`")]
    UnknownVariable(String),

    /// A value token resolved to something outside the variable's domain.
    #[error("value `{value}` is not in the domain of `{var}`")]
    ValueOutsideDomain { var: String, value: String },

    /// An expectation was taken over a domain that does not parse as numbers.
    #[error("domain of `{0}` is not numeric; expectation is undefined")]
    NonNumericDomain(String),
}

/// Errors from the text formats: graph files, model files, queries, and the
/// estimand grammar. Line/column are 1-based; column 0 means "whole line".
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl ParseError {
    /// Error pinned to a specific line and column.
    pub fn at(line: usize, column: usize, message: impl Into<String>) -> Self {
        ParseError {
            line,
            column,
            message: message.into(),
        }
    }

    /// Error for a single-line input where only the column is meaningful.
    pub fn col(column: usize, message: impl Into<String>) -> Self {
        ParseError {
            line: 1,
            column,
            message: message.into(),
        }
    }
}
