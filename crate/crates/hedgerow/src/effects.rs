//! Natural direct and indirect effects, and general path-specific effects.
//!
//! A path set π selects some of the proper causal paths from a treatment `A`
//! to an outcome `Y`. The π-specific effect asks what would change if the
//! active treatment value `a1` were transmitted only along π, while every
//! other mechanism saw the baseline value `a0` (Avin, Shpitser & Pearl,
//! 2005). Natural direct and indirect effects are the two classic special
//! cases: π = {the edge A→Y} and π = {everything but that edge}.
//!
//! This module houses the criteria deciding when such effects are
//! identifiable — the recanting witness for Markovian graphs and its
//! district generalization — and the constructions lowering identifiable
//! effects to observational estimands.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::GraphError;
use crate::graph::{Admg, Variable};

/// A set of proper causal paths from one treatment to one outcome, with the
/// derived edge partition: an edge is *active* when it lies on some chosen
/// path, *baseline* when it lies only on unchosen causal paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathSet {
    a: Variable,
    y: Variable,
    paths: Vec<Vec<Variable>>,
    active: BTreeSet<(Variable, Variable)>,
    baseline: BTreeSet<(Variable, Variable)>,
}

impl PathSet {
    /// Builds a path set, checking that it is nonempty and that every path
    /// is a proper causal path from `a` to `y` in `g`.
    pub fn new(
        g: &Admg,
        a: &Variable,
        y: &Variable,
        paths: Vec<Vec<Variable>>,
    ) -> Result<PathSet, GraphError> {
        if paths.is_empty() {
            return Err(GraphError::InvalidPathSet(
                "a path set must contain at least one path".into(),
            ));
        }
        let mut x_set = BTreeSet::new();
        x_set.insert(a.clone());
        let mut y_set = BTreeSet::new();
        y_set.insert(y.clone());
        let all = g.proper_causal_paths(&x_set, &y_set)?;
        let mut chosen: Vec<Vec<Variable>> = Vec::new();
        for path in paths {
            if !all.contains(&path) {
                let shown = path
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join("->");
                return Err(GraphError::InvalidPathSet(format!(
                    "`{shown}` is not a proper causal path from `{a}` to `{y}`"
                )));
            }
            if !chosen.contains(&path) {
                chosen.push(path);
            }
        }
        chosen.sort();
        let active = edges_of(&chosen);
        let baseline: BTreeSet<(Variable, Variable)> =
            edges_of(&all).difference(&active).cloned().collect();
        Ok(PathSet {
            a: a.clone(),
            y: y.clone(),
            paths: chosen,
            active,
            baseline,
        })
    }

    /// The path set containing *every* proper causal path from `a` to `y`;
    /// the π for which the π-specific effect is the total effect.
    pub fn all_paths(g: &Admg, a: &Variable, y: &Variable) -> Result<PathSet, GraphError> {
        let mut x_set = BTreeSet::new();
        x_set.insert(a.clone());
        let mut y_set = BTreeSet::new();
        y_set.insert(y.clone());
        let all = g.proper_causal_paths(&x_set, &y_set)?;
        PathSet::new(g, a, y, all)
    }

    /// The treatment variable.
    pub fn treatment(&self) -> &Variable {
        &self.a
    }

    /// The outcome variable.
    pub fn outcome(&self) -> &Variable {
        &self.y
    }

    /// The chosen paths, sorted.
    pub fn paths(&self) -> &[Vec<Variable>] {
        &self.paths
    }

    /// The edges lying on some chosen path.
    pub fn active_edges(&self) -> &BTreeSet<(Variable, Variable)> {
        &self.active
    }

    /// The edges lying on causal paths from `a` to `y` but on no chosen path.
    pub fn baseline_edges(&self) -> &BTreeSet<(Variable, Variable)> {
        &self.baseline
    }

    /// Whether the directed edge `u -> v` transmits the active treatment.
    pub fn is_active(&self, u: &Variable, v: &Variable) -> bool {
        self.active.contains(&(u.clone(), v.clone()))
    }
}

fn edges_of(paths: &[Vec<Variable>]) -> BTreeSet<(Variable, Variable)> {
    let mut out = BTreeSet::new();
    for path in paths {
        for pair in path.windows(2) {
            out.insert((pair[0].clone(), pair[1].clone()));
        }
    }
    out
}

impl fmt::Display for PathSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shown = self
            .paths
            .iter()
            .map(|p| {
                p.iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join("->")
            })
            .collect::<Vec<_>>()
            .join(", ");
        write!(f, "{{{shown}}}")
    }
}

/// The obstruction that makes a path-specific effect non-identifiable: a
/// single node (recanting witness, Markovian case) or a confounded district
/// (recanting district) that would have to transmit the active and the
/// baseline treatment at once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PseWitness {
    /// A node with an all-π path from the treatment, an all-π path to the
    /// outcome, and another path to the outcome leaving π.
    RecantingWitness(Variable),
    /// A district needing its members evaluated under two different
    /// treatment regimes at once.
    RecantingDistrict(BTreeSet<Variable>),
}

impl PseWitness {
    /// The nodes of the witness.
    pub fn nodes(&self) -> BTreeSet<Variable> {
        match self {
            PseWitness::RecantingWitness(v) => {
                let mut s = BTreeSet::new();
                s.insert(v.clone());
                s
            }
            PseWitness::RecantingDistrict(d) => d.clone(),
        }
    }
}

impl fmt::Display for PseWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PseWitness::RecantingWitness(v) => write!(f, "recanting witness {v}"),
            PseWitness::RecantingDistrict(d) => {
                let shown = d
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(", ");
                write!(f, "recanting district {{{shown}}}")
            }
        }
    }
}
