//! Discrete structural causal models: the ground-truth oracle.
//!
//! Everything the symbolic engine claims is checked against this module.
//! A [`DiscreteScm`] pairs an ADMG with concrete mechanisms: every observed
//! variable has a finite domain and a conditional probability table over its
//! observed parents and its *listed* exogenous parents; every bidirected
//! edge is realized by an explicitly shared exogenous variable with its own
//! prior. The oracle can then compute, by exact enumeration:
//!
//! * the observational joint ([`DiscreteScm::joint`]),
//! * interventional distributions by mutilation ([`DiscreteScm::intervene`]),
//! * arbitrary counterfactual probabilities, including nested worlds
//!   ([`DiscreteScm::ctf_probability`]), and
//! * path-specific counterfactuals ([`DiscreteScm::pse_value`]).
//!
//! Counterfactuals are computed under *response-function canonicalization*
//! (Balke & Pearl's canonical partition): each CPT row is treated as the
//! marginal of an independent deterministic selector, so a variable's
//! response to one parent configuration is drawn once and reused across all
//! hypothetical worlds. Rather than materializing all `d^k` selectors per
//! variable, rows are branched on lazily — evaluation restarts whenever it
//! needs a draw that has not been fixed yet — which is semantically
//! identical (a unit test cross-checks the full enumeration on a small
//! model). Row draws are assumed independent across rows and across
//! variables; this row-independence is a modelling choice that pins down
//! counterfactuals the observational and interventional laws leave open.
//!
//! Symbolic estimands are scored against oracle distributions with
//! [`eval_estimand`], which resolves value tokens like `a0` by stripping
//! the variable's lowercased name (`a0` on `A` means the domain value `0`).

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ctf::{CtfAtom, CtfIntervention};
use crate::effects::PathSet;
use crate::error::{EvalError, ModelError};
use crate::estimand::{Atom, Estimand};
use crate::graph::{Admg, Variable};

/// Largest number of states the oracle will enumerate exactly.
pub const STATE_CAP: u128 = 10_000_000;

/// Row sums must match 1 to this tolerance at model construction.
const ROW_TOLERANCE: f64 = 1e-12;

/// Distribution totals must match 1 to this tolerance.
const DIST_TOLERANCE: f64 = 1e-9;

/// An exogenous disturbance: a named background variable with a finite
/// domain and an explicit prior. Shared exogenous variables realize
/// bidirected edges.
#[derive(Debug, Clone, PartialEq)]
pub struct ExogenousVar {
    /// Name; must not collide with any observed node.
    pub name: String,
    /// The values the disturbance ranges over.
    pub domain: Vec<String>,
    /// Prior probabilities, aligned with `domain`, summing to one.
    pub prior: Vec<f64>,
}

/// The mechanism of one observed variable: a conditional probability table
/// over its observed parents and its listed exogenous parents.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// Observed-parent names; their order fixes the row-key layout.
    pub parents: Vec<String>,
    /// Listed exogenous parents; appended to the row key after `parents`.
    pub exo_parents: Vec<String>,
    /// One probability row per full parent configuration. The key is the
    /// parent values in `parents` order followed by the exogenous values in
    /// `exo_parents` order; the row is aligned with the variable's domain.
    pub rows: BTreeMap<Vec<String>, Vec<f64>>,
}

/// A discrete structural causal model over an ADMG.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteScm {
    graph: Admg,
    domains: BTreeMap<Variable, Vec<String>>,
    exogenous: Vec<ExogenousVar>,
    tables: BTreeMap<Variable, Table>,
}

impl DiscreteScm {
    /// Builds and validates a model.
    ///
    /// Checks performed: every node has a domain and a table and nothing
    /// else does; table parents match the graph's parent sets; every row
    /// exists exactly once, is nonnegative, and sums to one within `1e-12`;
    /// exogenous names are distinct and disjoint from node names; every
    /// exogenous variable is listed by one or two tables, never more; and
    /// the pairs sharing an exogenous variable are exactly the bidirected
    /// edges of the graph.
    pub fn new(
        graph: Admg,
        domains: BTreeMap<Variable, Vec<String>>,
        exogenous: Vec<ExogenousVar>,
        tables: BTreeMap<Variable, Table>,
    ) -> Result<DiscreteScm, ModelError> {
        // Domains: exactly the graph's nodes, each nonempty and duplicate-free.
        for v in graph.nodes() {
            let dom = domains
                .get(v)
                .ok_or_else(|| ModelError::Mismatch(format!("no domain for node `{v}`")))?;
            if dom.is_empty() {
                return Err(ModelError::Mismatch(format!("empty domain for node `{v}`")));
            }
            if dom.iter().collect::<BTreeSet<_>>().len() != dom.len() {
                return Err(ModelError::Mismatch(format!(
                    "duplicate domain value for `{v}`"
                )));
            }
        }
        if let Some(stray) = domains.keys().find(|v| !graph.contains(v)) {
            return Err(ModelError::UnknownVariable(stray.to_string()));
        }

        // Exogenous variables: distinct names, disjoint from nodes, valid priors.
        let mut exo_names = BTreeSet::new();
        for exo in &exogenous {
            if !exo_names.insert(exo.name.clone()) {
                return Err(ModelError::Mismatch(format!(
                    "exogenous `{}` declared twice",
                    exo.name
                )));
            }
            if graph.var(&exo.name).is_ok() {
                return Err(ModelError::Mismatch(format!(
                    "exogenous `{}` collides with an observed node",
                    exo.name
                )));
            }
            if exo.domain.is_empty() || exo.domain.len() != exo.prior.len() {
                return Err(ModelError::Mismatch(format!(
                    "exogenous `{}` needs a nonempty domain aligned with its prior",
                    exo.name
                )));
            }
            check_row(&exo.name, "prior", &exo.prior)?;
        }

        // Tables: one per node, parents matching the graph, complete rows.
        for v in graph.nodes() {
            let table = tables
                .get(v)
                .ok_or_else(|| ModelError::Mismatch(format!("no table for node `{v}`")))?;
            let declared: BTreeSet<&str> = table.parents.iter().map(|s| s.as_str()).collect();
            if declared.len() != table.parents.len() {
                return Err(ModelError::Mismatch(format!(
                    "duplicate parent in table for `{v}`"
                )));
            }
            let actual_names: BTreeSet<String> = graph
                .parents_of(v)
                .iter()
                .map(|p| p.name().to_owned())
                .collect();
            let declared_names: BTreeSet<String> = table.parents.iter().cloned().collect();
            if actual_names != declared_names {
                return Err(ModelError::Mismatch(format!(
                    "table for `{v}` lists parents {{{}}} but the graph gives {{{}}}",
                    table.parents.join(", "),
                    actual_names.iter().cloned().collect::<Vec<_>>().join(", ")
                )));
            }
            let mut seen_exo = BTreeSet::new();
            for e in &table.exo_parents {
                if !exo_names.contains(e) {
                    return Err(ModelError::Mismatch(format!(
                        "table for `{v}` lists unknown exogenous parent `{e}`"
                    )));
                }
                if !seen_exo.insert(e.clone()) {
                    return Err(ModelError::Mismatch(format!(
                        "table for `{v}` lists exogenous parent `{e}` twice"
                    )));
                }
            }

            // Row completeness: exactly one row per parent configuration.
            let mut key_domains: Vec<&[String]> = Vec::new();
            for pname in &table.parents {
                let pvar = graph.var(pname).expect("parent names validated above");
                key_domains.push(&domains[&pvar]);
            }
            for ename in &table.exo_parents {
                let exo = exogenous
                    .iter()
                    .find(|x| &x.name == ename)
                    .expect("validated");
                key_domains.push(&exo.domain);
            }
            let expected: u128 = key_domains.iter().map(|d| d.len() as u128).product();
            if expected > STATE_CAP {
                return Err(ModelError::DomainTooLarge {
                    actual: expected,
                    cap: STATE_CAP,
                });
            }
            if table.rows.len() as u128 != expected {
                return Err(ModelError::Mismatch(format!(
                    "table for `{v}` has {} rows; its parents call for {expected}",
                    table.rows.len()
                )));
            }
            let dom_len = domains[v].len();
            for key in cartesian(&key_domains) {
                let row = table.rows.get(&key).ok_or_else(|| {
                    ModelError::Mismatch(format!(
                        "table for `{v}` is missing the row for `{}`",
                        key.join(", ")
                    ))
                })?;
                if row.len() != dom_len {
                    return Err(ModelError::Mismatch(format!(
                        "row `{}` of `{v}` has {} entries; the domain has {dom_len}",
                        key.join(", "),
                        row.len()
                    )));
                }
                check_row(&v.to_string(), &key.join(", "), row)?;
            }
        }
        if let Some(stray) = tables.keys().find(|v| !graph.contains(v)) {
            return Err(ModelError::UnknownVariable(stray.to_string()));
        }

        // Sharing pattern: the pairs of tables listing a common exogenous
        // variable must be exactly the bidirected edges.
        let mut shared_pairs: BTreeSet<(Variable, Variable)> = BTreeSet::new();
        for exo in &exogenous {
            let listeners: Vec<&Variable> = graph
                .nodes()
                .iter()
                .filter(|v| tables[v].exo_parents.contains(&exo.name))
                .collect();
            match listeners.len() {
                0 => {
                    return Err(ModelError::SharingMismatch(format!(
                        "exogenous `{}` is not listed by any table",
                        exo.name
                    )))
                }
                1 => {}
                2 => {
                    let (a, b) = (listeners[0].clone(), listeners[1].clone());
                    if !graph.has_bidirected(&a, &b) {
                        return Err(ModelError::SharingMismatch(format!(
                            "`{a}` and `{b}` share `{}` but have no bidirected edge",
                            exo.name
                        )));
                    }
                    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                    shared_pairs.insert((lo, hi));
                }
                _ => {
                    return Err(ModelError::SharingMismatch(format!(
                        "exogenous `{}` is shared by {} variables; at most two may share",
                        exo.name,
                        listeners.len()
                    )))
                }
            }
        }
        for (a, b) in graph.bidirected_edges() {
            if !shared_pairs.contains(&(a.clone(), b.clone())) {
                return Err(ModelError::SharingMismatch(format!(
                    "bidirected edge `{a} <-> {b}` has no shared exogenous variable"
                )));
            }
        }

        Ok(DiscreteScm {
            graph,
            domains,
            exogenous,
            tables,
        })
    }

    /// The model's graph.
    pub fn graph(&self) -> &Admg {
        &self.graph
    }

    /// The domain of an observed variable.
    pub fn domain(&self, v: &Variable) -> Result<&[String], ModelError> {
        self.domains
            .get(v)
            .map(|d| d.as_slice())
            .ok_or_else(|| ModelError::UnknownVariable(v.to_string()))
    }

    /// All domains.
    pub fn domains(&self) -> &BTreeMap<Variable, Vec<String>> {
        &self.domains
    }

    /// The exogenous variables.
    pub fn exogenous(&self) -> &[ExogenousVar] {
        &self.exogenous
    }

    /// The mechanism tables.
    pub fn tables(&self) -> &BTreeMap<Variable, Table> {
        &self.tables
    }

    /// Every exogenous assignment with positive prior mass, with its
    /// probability, in deterministic order.
    fn exo_states(&self) -> Result<Vec<(Vec<String>, f64)>, ModelError> {
        let count: u128 = self
            .exogenous
            .iter()
            .map(|e| e.domain.len() as u128)
            .product();
        if count > STATE_CAP {
            return Err(ModelError::DomainTooLarge {
                actual: count,
                cap: STATE_CAP,
            });
        }
        let mut states = vec![(Vec::new(), 1.0)];
        for exo in &self.exogenous {
            let mut next = Vec::with_capacity(states.len() * exo.domain.len());
            for (assign, p) in &states {
                for (val, q) in exo.domain.iter().zip(&exo.prior) {
                    if *q == 0.0 {
                        continue;
                    }
                    let mut extended = assign.clone();
                    extended.push(val.clone());
                    next.push((extended, p * q));
                }
            }
            states = next;
        }
        Ok(states)
    }

    fn exo_index(&self, name: &str) -> usize {
        self.exogenous
            .iter()
            .position(|e| e.name == name)
            .expect("exogenous parents validated at construction")
    }

    /// The observational joint distribution over the observed variables.
    pub fn joint(&self) -> Result<Distribution, ModelError> {
        self.joint_impl(false)
    }

    /// The joint distribution over observed *and* exogenous variables, for
    /// evaluating expressions that mention background variables explicitly.
    pub fn joint_with_exogenous(&self) -> Result<Distribution, ModelError> {
        self.joint_impl(true)
    }

    fn joint_impl(&self, include_exo: bool) -> Result<Distribution, ModelError> {
        let obs_vars: Vec<Variable> = self.graph.nodes().iter().cloned().collect();
        let mut vars = obs_vars.clone();
        let mut domains: Vec<Vec<String>> =
            obs_vars.iter().map(|v| self.domains[v].clone()).collect();
        if include_exo {
            for exo in &self.exogenous {
                vars.push(Variable::new(exo.name.clone()));
                domains.push(exo.domain.clone());
            }
            // Distribution variables must stay sorted for lookup by name.
            let mut paired: Vec<(Variable, Vec<String>)> = vars.into_iter().zip(domains).collect();
            paired.sort_by(|x, y| x.0.cmp(&y.0));
            vars = paired.iter().map(|(v, _)| v.clone()).collect();
            domains = paired.into_iter().map(|(_, d)| d).collect();
            if vars.windows(2).any(|w| w[0] == w[1]) {
                return Err(ModelError::Mismatch(
                    "exogenous name collides with an observed node".into(),
                ));
            }
        }
        let total: u128 = domains.iter().map(|d| d.len() as u128).product();
        if total > STATE_CAP {
            return Err(ModelError::DomainTooLarge {
                actual: total,
                cap: STATE_CAP,
            });
        }
        let strides = strides_for(&domains);
        let index_of_var: BTreeMap<&Variable, usize> =
            vars.iter().enumerate().map(|(i, v)| (v, i)).collect();
        let mut probs = vec![0.0; total as usize];

        let topo = self.graph.topological_order();
        // For each node: its slot, its domain, and its row-key recipe as
        // slots of already-assigned variables plus exogenous positions.
        struct Recipe {
            slot: usize,
            parent_slots: Vec<usize>,
            exo_positions: Vec<usize>,
        }
        let recipes: Vec<Recipe> = topo
            .iter()
            .map(|v| {
                let table = &self.tables[v];
                Recipe {
                    slot: index_of_var[v],
                    parent_slots: table
                        .parents
                        .iter()
                        .map(|p| index_of_var[&self.graph.var(p).expect("validated")])
                        .collect(),
                    exo_positions: table
                        .exo_parents
                        .iter()
                        .map(|e| self.exo_index(e))
                        .collect(),
                }
            })
            .collect();

        let exo_slots: Vec<usize> = if include_exo {
            self.exogenous
                .iter()
                .map(|e| index_of_var[&Variable::new(e.name.clone())])
                .collect()
        } else {
            Vec::new()
        };

        for (u, pu) in self.exo_states()? {
            // Depth-first accumulation over the topological order.
            let mut value_idx = vec![0usize; vars.len()];
            let mut value: Vec<String> = vars.iter().map(|_| String::new()).collect();
            for (pos, slot) in exo_slots.iter().enumerate() {
                value[*slot] = u[pos].clone();
                value_idx[*slot] = domains[*slot]
                    .iter()
                    .position(|x| *x == u[pos])
                    .expect("exogenous value is from its domain");
            }
            let mut stack: Vec<(usize, f64)> = vec![(0, pu)];
            // Iterative DFS with explicit value choices per level.
            #[allow(clippy::too_many_arguments)]
            fn descend(
                scm: &DiscreteScm,
                topo: &[Variable],
                recipes: &[Recipe],
                domains: &[Vec<String>],
                strides: &[usize],
                u: &[String],
                level: usize,
                weight: f64,
                value: &mut Vec<String>,
                value_idx: &mut Vec<usize>,
                probs: &mut [f64],
            ) {
                if weight == 0.0 {
                    return;
                }
                if level == topo.len() {
                    let index: usize = value_idx.iter().zip(strides).map(|(i, s)| i * s).sum();
                    probs[index] += weight;
                    return;
                }
                let recipe = &recipes[level];
                let v = &topo[level];
                let mut key: Vec<String> = recipe
                    .parent_slots
                    .iter()
                    .map(|s| value[*s].clone())
                    .collect();
                for pos in &recipe.exo_positions {
                    key.push(u[*pos].clone());
                }
                let row = &scm.tables[v].rows[&key];
                for (i, p) in row.iter().enumerate() {
                    if *p == 0.0 {
                        continue;
                    }
                    value[recipe.slot] = domains[recipe.slot][i].clone();
                    value_idx[recipe.slot] = i;
                    descend(
                        scm,
                        topo,
                        recipes,
                        domains,
                        strides,
                        u,
                        level + 1,
                        weight * p,
                        value,
                        value_idx,
                        probs,
                    );
                }
            }
            let _ = &mut stack;
            descend(
                self,
                &topo,
                &recipes,
                &domains,
                &strides,
                &u,
                0,
                pu,
                &mut value,
                &mut value_idx,
                &mut probs,
            );
        }
        Distribution::new(vars, domains, probs)
    }

    /// The mutilated model `do(x)`: incoming edges of the intervened
    /// variables are cut and their mechanisms replaced by constants.
    /// Exogenous variables left with no listener are dropped.
    pub fn intervene(&self, x: &BTreeMap<Variable, String>) -> Result<DiscreteScm, ModelError> {
        let mut cut = BTreeSet::new();
        for (v, val) in x {
            let dom = self.domain(v)?;
            if !dom.contains(val) {
                return Err(ModelError::Mismatch(format!(
                    "`{val}` is not in the domain of `{v}`"
                )));
            }
            cut.insert(v.clone());
        }
        let graph = self.graph.mutilate(&cut, &BTreeSet::new());
        let mut tables = self.tables.clone();
        for (v, val) in x {
            let dom = &self.domains[v];
            let row: Vec<f64> = dom
                .iter()
                .map(|d| if d == val { 1.0 } else { 0.0 })
                .collect();
            let mut rows = BTreeMap::new();
            rows.insert(Vec::new(), row);
            tables.insert(
                v.clone(),
                Table {
                    parents: Vec::new(),
                    exo_parents: Vec::new(),
                    rows,
                },
            );
        }
        let exogenous: Vec<ExogenousVar> = self
            .exogenous
            .iter()
            .filter(|exo| {
                self.graph
                    .nodes()
                    .iter()
                    .any(|v| tables[v].exo_parents.contains(&exo.name))
            })
            .cloned()
            .collect();
        DiscreteScm::new(graph, self.domains.clone(), exogenous, tables)
    }

    /// `P(gamma | delta)` for conjunctions of (possibly nested)
    /// counterfactual atoms, by exact enumeration over exogenous states and
    /// response-function draws. With empty `delta` this is `P(gamma)`.
    ///
    /// Fails with [`ModelError::ZeroEvidence`] when `delta` is nonempty but
    /// has probability zero.
    pub fn ctf_probability(&self, gamma: &[CtfAtom], delta: &[CtfAtom]) -> Result<f64, ModelError> {
        for atom in gamma.iter().chain(delta) {
            atom.validate(&self.graph)
                .map_err(|e| ModelError::Mismatch(e.to_string()))?;
            self.validate_atom_values(atom)?;
        }
        let gamma_delta: Vec<&CtfAtom> = gamma.iter().chain(delta).collect();
        let delta_only: Vec<&CtfAtom> = delta.iter().collect();
        let mut num = 0.0;
        let mut den = 0.0;
        for (u, pu) in self.exo_states()? {
            let mut draws = Draws::new();
            num += pu * self.explore_atoms(&gamma_delta, &u, &mut draws);
            if !delta.is_empty() {
                let mut draws = Draws::new();
                den += pu * self.explore_atoms(&delta_only, &u, &mut draws);
            }
        }
        if delta.is_empty() {
            return Ok(num);
        }
        if den <= 0.0 {
            return Err(ModelError::ZeroEvidence);
        }
        Ok(num / den)
    }

    fn validate_atom_values(&self, atom: &CtfAtom) -> Result<(), ModelError> {
        let dom = self.domain(&atom.var)?;
        if !dom.contains(&atom.value) {
            return Err(ModelError::Mismatch(format!(
                "`{}` is not in the domain of `{}`",
                atom.value, atom.var
            )));
        }
        fn walk(scm: &DiscreteScm, entries: &[CtfIntervention]) -> Result<(), ModelError> {
            for e in entries {
                match e {
                    CtfIntervention::Fixed(v, val) => {
                        let dom = scm.domain(v)?;
                        if !dom.contains(val) {
                            return Err(ModelError::Mismatch(format!(
                                "`{val}` is not in the domain of `{v}`"
                            )));
                        }
                    }
                    CtfIntervention::Nested(_, inner) => walk(scm, inner)?,
                }
            }
            Ok(())
        }
        walk(self, &atom.subscript)
    }

    /// Probability over response-function draws that all atoms hold, given
    /// the exogenous state `u`. Branches lazily on missing draws.
    fn explore_atoms(&self, atoms: &[&CtfAtom], u: &[String], draws: &mut Draws) -> f64 {
        let probe = {
            let mut memo = Memo::new();
            self.try_atoms(atoms, u, draws, &mut memo)
        };
        match probe {
            Ok(sat) => {
                if sat {
                    1.0
                } else {
                    0.0
                }
            }
            Err(missing) => {
                let mut total = 0.0;
                for (val, p) in missing.domain.iter().zip(&missing.probs) {
                    if *p == 0.0 {
                        continue;
                    }
                    draws.insert(missing.key.clone(), val.clone());
                    total += p * self.explore_atoms(atoms, u, draws);
                }
                draws.remove(&missing.key);
                total
            }
        }
    }

    /// Evaluates all atoms under the current draws: `Ok(sat)` if every
    /// needed draw is fixed, `Err` naming the first missing draw otherwise.
    fn try_atoms(
        &self,
        atoms: &[&CtfAtom],
        u: &[String],
        draws: &Draws,
        memo: &mut Memo,
    ) -> Result<bool, MissingDraw> {
        for atom in atoms {
            let ctx = self.resolve_subscript(&atom.subscript, u, draws, memo)?;
            let value = self.value_of(&atom.var, &ctx, u, draws, memo)?;
            if value != atom.value {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Turns a subscript into a flat intervention context, computing nested
    /// counterfactual values as needed.
    fn resolve_subscript(
        &self,
        entries: &[CtfIntervention],
        u: &[String],
        draws: &Draws,
        memo: &mut Memo,
    ) -> Result<Vec<(Variable, String)>, MissingDraw> {
        let mut ctx = Vec::with_capacity(entries.len());
        for entry in entries {
            match entry {
                CtfIntervention::Fixed(v, val) => ctx.push((v.clone(), val.clone())),
                CtfIntervention::Nested(v, inner) => {
                    let inner_ctx = self.resolve_subscript(inner, u, draws, memo)?;
                    let val = self.value_of(v, &inner_ctx, u, draws, memo)?;
                    ctx.push((v.clone(), val));
                }
            }
        }
        ctx.sort();
        Ok(ctx)
    }

    /// The value of `v` in the world where `ctx` is intervened, under
    /// exogenous state `u` and the response-function draws fixed so far.
    fn value_of(
        &self,
        v: &Variable,
        ctx: &[(Variable, String)],
        u: &[String],
        draws: &Draws,
        memo: &mut Memo,
    ) -> Result<String, MissingDraw> {
        if let Some((_, val)) = ctx.iter().find(|(w, _)| w == v) {
            return Ok(val.clone());
        }
        let memo_key = (ctx.to_vec(), v.clone());
        if let Some(val) = memo.get(&memo_key) {
            return Ok(val.clone());
        }
        let table = &self.tables[v];
        let mut key = Vec::with_capacity(table.parents.len() + table.exo_parents.len());
        for pname in &table.parents {
            let pvar = self.graph.var(pname).expect("validated");
            key.push(self.value_of(&pvar, ctx, u, draws, memo)?);
        }
        for ename in &table.exo_parents {
            key.push(u[self.exo_index(ename)].clone());
        }
        let draw_key = (v.clone(), key.clone());
        match draws.get(&draw_key) {
            Some(val) => {
                memo.insert(memo_key, val.clone());
                Ok(val.clone())
            }
            None => Err(MissingDraw {
                key: draw_key,
                probs: table.rows[&key].clone(),
                domain: self.domains[v].clone(),
            }),
        }
    }

    /// The path-specific counterfactual `P(Y_{a1 | π, a0 | π̄} = yval)`:
    /// the probability the outcome takes `yval` when the active value `a1`
    /// is transmitted only along the edges of `pi` and every other edge
    /// transmits the baseline `a0`.
    ///
    /// Each node carries an (active, baseline) pair per exogenous state: the
    /// baseline value is its value under `do(a0)`; the active value feeds on
    /// parents' active values through π edges and baseline values elsewhere.
    /// Draws are shared between the two computations — same response
    /// function, different inputs — which is what makes this the honest
    /// nested counterfactual.
    pub fn pse_value(
        &self,
        pi: &PathSet,
        a1: &str,
        a0: &str,
        yval: &str,
    ) -> Result<f64, ModelError> {
        let a = pi.treatment();
        let y = pi.outcome();
        let a_dom = self.domain(a)?;
        if !a_dom.contains(&a1.to_string()) || !a_dom.contains(&a0.to_string()) {
            return Err(ModelError::Mismatch(format!(
                "treatment values `{a1}`, `{a0}` must lie in the domain of `{a}`"
            )));
        }
        let y_dom = self.domain(y)?;
        if !y_dom.contains(&yval.to_string()) {
            return Err(ModelError::Mismatch(format!(
                "`{yval}` is not in the domain of `{y}`"
            )));
        }
        let mut total = 0.0;
        for (u, pu) in self.exo_states()? {
            let mut draws = Draws::new();
            total += pu * self.explore_pse(pi, a1, a0, yval, &u, &mut draws);
        }
        Ok(total)
    }

    fn explore_pse(
        &self,
        pi: &PathSet,
        a1: &str,
        a0: &str,
        yval: &str,
        u: &[String],
        draws: &mut Draws,
    ) -> f64 {
        let probe = {
            let mut memo: BTreeMap<Variable, (String, String)> = BTreeMap::new();
            self.pair_of(pi.outcome(), pi, a1, a0, u, draws, &mut memo)
        };
        match probe {
            Ok((active, _)) => {
                if active == yval {
                    1.0
                } else {
                    0.0
                }
            }
            Err(missing) => {
                let mut total = 0.0;
                for (val, p) in missing.domain.iter().zip(&missing.probs) {
                    if *p == 0.0 {
                        continue;
                    }
                    draws.insert(missing.key.clone(), val.clone());
                    total += p * self.explore_pse(pi, a1, a0, yval, u, draws);
                }
                draws.remove(&missing.key);
                total
            }
        }
    }

    /// The (active, baseline) value pair of `v` in the π-specific world.
    #[allow(clippy::too_many_arguments)]
    fn pair_of(
        &self,
        v: &Variable,
        pi: &PathSet,
        a1: &str,
        a0: &str,
        u: &[String],
        draws: &Draws,
        memo: &mut BTreeMap<Variable, (String, String)>,
    ) -> Result<(String, String), MissingDraw> {
        if let Some(pair) = memo.get(v) {
            return Ok(pair.clone());
        }
        let a = pi.treatment();
        let table = &self.tables[v];
        let mut active_key = Vec::with_capacity(table.parents.len() + table.exo_parents.len());
        let mut baseline_key = active_key.clone();
        for pname in &table.parents {
            let pvar = self.graph.var(pname).expect("validated");
            if &pvar == a {
                active_key.push(if pi.is_active(a, v) {
                    a1.to_string()
                } else {
                    a0.to_string()
                });
                baseline_key.push(a0.to_string());
            } else {
                let (p_active, p_baseline) = self.pair_of(&pvar, pi, a1, a0, u, draws, memo)?;
                active_key.push(if pi.is_active(&pvar, v) {
                    p_active
                } else {
                    p_baseline.clone()
                });
                baseline_key.push(p_baseline);
            }
        }
        for ename in &table.exo_parents {
            let val = u[self.exo_index(ename)].clone();
            active_key.push(val.clone());
            baseline_key.push(val);
        }
        let baseline = self.draw_or_missing(v, baseline_key, draws)?;
        let active = self.draw_or_missing(v, active_key, draws)?;
        let pair = (active, baseline);
        memo.insert(v.clone(), pair.clone());
        Ok(pair)
    }

    fn draw_or_missing(
        &self,
        v: &Variable,
        key: Vec<String>,
        draws: &Draws,
    ) -> Result<String, MissingDraw> {
        let draw_key = (v.clone(), key.clone());
        match draws.get(&draw_key) {
            Some(val) => Ok(val.clone()),
            None => Err(MissingDraw {
                key: draw_key,
                probs: self.tables[v].rows[&key].clone(),
                domain: self.domains[v].clone(),
            }),
        }
    }

    /// Classic effect measures, computed exactly. Expectation-based measures
    /// need the outcome domain to parse as numbers.
    pub fn effect_measure(
        &self,
        q: &EffectQuery<'_>,
        a: &Variable,
        y: &Variable,
        a1: &str,
        a0: &str,
    ) -> Result<f64, ModelError> {
        let a_dom = self.domain(a)?;
        if !a_dom.contains(&a1.to_string()) || !a_dom.contains(&a0.to_string()) {
            return Err(ModelError::Mismatch(format!(
                "contrast values `{a1}`, `{a0}` must lie in the domain of `{a}`"
            )));
        }
        match q {
            EffectQuery::TotalVariation { value } => {
                let joint = self.joint()?;
                let p1 = conditional_prob(&joint, y, value, a, a1)?;
                let p0 = conditional_prob(&joint, y, value, a, a0)?;
                Ok(p1 - p0)
            }
            EffectQuery::TotalEffect => {
                Ok(self.interventional_mean(y, a, a1)? - self.interventional_mean(y, a, a0)?)
            }
            EffectQuery::NaturalDirect => {
                // E[Y_{a1, M_{a0}}] - E[Y_{a0}] over all mediators M.
                let nested = self.nested_mediation_mean(a, y, a1, a0)?;
                Ok(nested - self.interventional_mean(y, a, a0)?)
            }
            EffectQuery::NaturalIndirect => {
                // E[Y_{a0, M_{a1}}] - E[Y_{a0}].
                let nested = self.nested_mediation_mean(a, y, a0, a1)?;
                Ok(nested - self.interventional_mean(y, a, a0)?)
            }
            EffectQuery::PathSpecific { pi, value } => {
                let direct = self.pse_value(pi, a1, a0, value)?;
                let mut x = BTreeMap::new();
                x.insert(a.clone(), a0.to_string());
                let base = self.intervene(&x)?.joint()?;
                let mut want = BTreeMap::new();
                want.insert(y.clone(), value.clone());
                let p0 = base.mass(&want).map_err(eval_to_model)?;
                Ok(direct - p0)
            }
        }
    }

    /// The mediators of `a` on `y`: descendants of `a` that are ancestors
    /// of `y`, minus the endpoints.
    pub fn mediators(&self, a: &Variable, y: &Variable) -> BTreeSet<Variable> {
        let mut a_set = BTreeSet::new();
        a_set.insert(a.clone());
        let mut y_set = BTreeSet::new();
        y_set.insert(y.clone());
        let mut m: BTreeSet<Variable> = self
            .graph
            .descendants(&a_set)
            .intersection(&self.graph.ancestors(&y_set))
            .cloned()
            .collect();
        m.remove(a);
        m.remove(y);
        m
    }

    /// `E[Y_{hold, M_{natural}}]`: outcome expectation with the treatment
    /// held at `hold` while every mediator keeps the value it would have
    /// under `natural`.
    fn nested_mediation_mean(
        &self,
        a: &Variable,
        y: &Variable,
        hold: &str,
        natural: &str,
    ) -> Result<f64, ModelError> {
        let numeric = numeric_domain(y, self.domain(y)?)?;
        let mut subscript = vec![CtfIntervention::Fixed(a.clone(), hold.to_string())];
        for m in self.mediators(a, y) {
            subscript.push(CtfIntervention::Nested(
                m.clone(),
                vec![CtfIntervention::Fixed(a.clone(), natural.to_string())],
            ));
        }
        let mut mean = 0.0;
        for (val, x) in self.domain(y)?.to_vec().iter().zip(&numeric) {
            let atom = CtfAtom::new(y.clone(), subscript.clone(), val.clone());
            mean += x * self.ctf_probability(&[atom], &[])?;
        }
        Ok(mean)
    }

    /// `E[Y | do(a = val)]`.
    fn interventional_mean(
        &self,
        y: &Variable,
        a: &Variable,
        val: &str,
    ) -> Result<f64, ModelError> {
        let numeric = numeric_domain(y, self.domain(y)?)?;
        let mut x = BTreeMap::new();
        x.insert(a.clone(), val.to_string());
        let dist = self.intervene(&x)?.joint()?;
        let mut mean = 0.0;
        for (dval, xval) in self.domain(y)?.to_vec().iter().zip(&numeric) {
            let mut want = BTreeMap::new();
            want.insert(y.clone(), dval.clone());
            mean += xval * dist.mass(&want).map_err(eval_to_model)?;
        }
        Ok(mean)
    }
}

/// An effect measure for [`DiscreteScm::effect_measure`].
#[derive(Debug, Clone)]
pub enum EffectQuery<'p> {
    /// `TV_{a1,a0}(Y=value) = P(Y=value | a1) − P(Y=value | a0)`: the
    /// observational contrast, not a causal quantity.
    TotalVariation {
        /// The outcome value compared.
        value: String,
    },
    /// `TE_{a1,a0}(Y) = E[Y_{a1}] − E[Y_{a0}]`.
    TotalEffect,
    /// `NDE_{a1,a0}(Y) = E[Y_{a1, M_{a0}}] − E[Y_{a0}]`.
    NaturalDirect,
    /// `NIE_{a1,a0}(Y) = E[Y_{a0, M_{a1}}] − E[Y_{a0}]`.
    NaturalIndirect,
    /// `PSE^π_{a1,a0}(Y=value) = P(Y_{a1|π, a0|π̄} = value) − P(Y_{a0} = value)`.
    PathSpecific {
        /// The chosen paths.
        pi: &'p PathSet,
        /// The outcome value compared.
        value: String,
    },
}

type Draws = BTreeMap<(Variable, Vec<String>), String>;
type Memo = BTreeMap<(Vec<(Variable, String)>, Variable), String>;

/// A draw that has not been fixed yet: the row to branch over.
struct MissingDraw {
    key: (Variable, Vec<String>),
    probs: Vec<f64>,
    domain: Vec<String>,
}

fn check_row(var: &str, row: &str, probs: &[f64]) -> Result<(), ModelError> {
    let mut sum = 0.0;
    for p in probs {
        if *p < 0.0 || !p.is_finite() {
            return Err(ModelError::BadRow {
                var: var.to_string(),
                row: row.to_string(),
                sum: *p,
            });
        }
        sum += p;
    }
    if (sum - 1.0).abs() > ROW_TOLERANCE {
        return Err(ModelError::BadRow {
            var: var.to_string(),
            row: row.to_string(),
            sum,
        });
    }
    Ok(())
}

fn cartesian(domains: &[&[String]]) -> Vec<Vec<String>> {
    let mut out = vec![Vec::new()];
    for dom in domains {
        let mut next = Vec::with_capacity(out.len() * dom.len());
        for prefix in &out {
            for val in *dom {
                let mut extended = prefix.clone();
                extended.push(val.clone());
                next.push(extended);
            }
        }
        out = next;
    }
    out
}

fn strides_for(domains: &[Vec<String>]) -> Vec<usize> {
    let mut strides = vec![1usize; domains.len()];
    for i in (0..domains.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * domains[i + 1].len();
    }
    strides
}

fn numeric_domain(v: &Variable, domain: &[String]) -> Result<Vec<f64>, ModelError> {
    domain
        .iter()
        .map(|d| {
            d.parse::<f64>()
                .map_err(|_| ModelError::NonNumericDomain(v.to_string()))
        })
        .collect()
}

fn eval_to_model(e: EvalError) -> ModelError {
    ModelError::Mismatch(e.to_string())
}

fn conditional_prob(
    joint: &Distribution,
    y: &Variable,
    yval: &str,
    a: &Variable,
    aval: &str,
) -> Result<f64, ModelError> {
    let mut cond = BTreeMap::new();
    cond.insert(a.clone(), aval.to_string());
    let den = joint.mass(&cond).map_err(eval_to_model)?;
    if den <= 0.0 {
        return Err(ModelError::ZeroEvidence);
    }
    cond.insert(y.clone(), yval.to_string());
    let num = joint.mass(&cond).map_err(eval_to_model)?;
    Ok(num / den)
}

/// A finite joint distribution over named variables, stored densely in
/// mixed-radix order (last variable fastest). Variables are kept sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    vars: Vec<Variable>,
    domains: Vec<Vec<String>>,
    probs: Vec<f64>,
}

impl Distribution {
    /// Builds a distribution, checking shape, nonnegativity, and that the
    /// total mass is 1 within `1e-9`.
    pub fn new(
        vars: Vec<Variable>,
        domains: Vec<Vec<String>>,
        probs: Vec<f64>,
    ) -> Result<Distribution, ModelError> {
        if vars.len() != domains.len() {
            return Err(ModelError::Mismatch(
                "distribution variables and domains differ in length".into(),
            ));
        }
        if vars.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ModelError::Mismatch(
                "distribution variables must be sorted".into(),
            ));
        }
        let expected: u128 = domains.iter().map(|d| d.len() as u128).product();
        if probs.len() as u128 != expected {
            return Err(ModelError::Mismatch(format!(
                "distribution has {} entries; its domains call for {expected}",
                probs.len()
            )));
        }
        let mut sum = 0.0;
        for p in &probs {
            if *p < -ROW_TOLERANCE || !p.is_finite() {
                return Err(ModelError::Mismatch(format!(
                    "distribution entry {p} is negative"
                )));
            }
            sum += p.max(0.0);
        }
        if (sum - 1.0).abs() > DIST_TOLERANCE {
            return Err(ModelError::Mismatch(format!(
                "distribution mass is {sum}, not 1"
            )));
        }
        let probs = probs.into_iter().map(|p| p.max(0.0)).collect();
        Ok(Distribution {
            vars,
            domains,
            probs,
        })
    }

    /// The variables, sorted.
    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    /// The domain of one variable.
    pub fn domain(&self, v: &Variable) -> Option<&[String]> {
        self.vars
            .iter()
            .position(|w| w == v)
            .map(|i| self.domains[i].as_slice())
    }

    /// The probability mass of a partial assignment: the sum over all
    /// states agreeing with it. The empty assignment has mass 1.
    pub fn mass(&self, assignment: &BTreeMap<Variable, String>) -> Result<f64, EvalError> {
        let mut wanted: Vec<Option<usize>> = vec![None; self.vars.len()];
        for (v, val) in assignment {
            let slot = self
                .vars
                .iter()
                .position(|w| w == v)
                .ok_or_else(|| EvalError::UnknownVariable(v.to_string()))?;
            let idx = self.domains[slot]
                .iter()
                .position(|x| x == val)
                .ok_or_else(|| EvalError::ValueOutsideDomain {
                    var: v.to_string(),
                    value: val.clone(),
                })?;
            wanted[slot] = Some(idx);
        }
        let strides = strides_for(&self.domains);
        let mut total = 0.0;
        'outer: for (flat, p) in self.probs.iter().enumerate() {
            if *p == 0.0 {
                continue;
            }
            for (slot, want) in wanted.iter().enumerate() {
                if let Some(idx) = want {
                    if (flat / strides[slot]) % self.domains[slot].len() != *idx {
                        continue 'outer;
                    }
                }
            }
            total += p;
        }
        Ok(total)
    }

    /// The marginal over `keep` (silently intersected with the variables).
    pub fn marginal(&self, keep: &BTreeSet<Variable>) -> Distribution {
        let kept: Vec<usize> = (0..self.vars.len())
            .filter(|i| keep.contains(&self.vars[*i]))
            .collect();
        let new_vars: Vec<Variable> = kept.iter().map(|i| self.vars[*i].clone()).collect();
        let new_domains: Vec<Vec<String>> = kept.iter().map(|i| self.domains[*i].clone()).collect();
        let new_strides = strides_for(&new_domains);
        let old_strides = strides_for(&self.domains);
        let total: usize = new_domains.iter().map(|d| d.len()).product();
        let mut probs = vec![0.0; total];
        for (flat, p) in self.probs.iter().enumerate() {
            if *p == 0.0 {
                continue;
            }
            let mut idx = 0;
            for (j, i) in kept.iter().enumerate() {
                let digit = (flat / old_strides[*i]) % self.domains[*i].len();
                idx += digit * new_strides[j];
            }
            probs[idx] += p;
        }
        Distribution {
            vars: new_vars,
            domains: new_domains,
            probs,
        }
    }

    /// Iterates over `(assignment, probability)` pairs with positive mass.
    pub fn support(&self) -> Vec<(BTreeMap<Variable, String>, f64)> {
        let strides = strides_for(&self.domains);
        let mut out = Vec::new();
        for (flat, p) in self.probs.iter().enumerate() {
            if *p == 0.0 {
                continue;
            }
            let mut assignment = BTreeMap::new();
            for (slot, v) in self.vars.iter().enumerate() {
                let digit = (flat / strides[slot]) % self.domains[slot].len();
                assignment.insert(v.clone(), self.domains[slot][digit].clone());
            }
            out.push((assignment, *p));
        }
        out
    }
}

/// Counters for the denominator conventions applied during evaluation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EvalDiagnostics {
    /// Quotients where numerator and denominator were both zero (scored 0).
    pub zero_over_zero: usize,
    /// Quotients with a zero denominator under a nonzero numerator
    /// (also scored 0; flags an estimand/distribution mismatch).
    pub zero_denominator: usize,
}

/// Evaluates a do-free estimand against a distribution.
///
/// Value tokens resolve in three steps: an exact domain member is itself
/// (`P(Y=1)`); otherwise the variable's lowercased name is stripped, so
/// `a0` on `A` means the domain value `0`; anything else is unbound and
/// fails. `0/0` evaluates to `0` by convention.
pub fn eval_estimand(e: &Estimand, d: &Distribution) -> Result<f64, EvalError> {
    eval_estimand_with(e, d, &BTreeMap::new())
}

/// [`eval_estimand`] with an environment binding value tokens (for scoring
/// estimands that keep symbolic outcome tokens like `y`).
pub fn eval_estimand_with(
    e: &Estimand,
    d: &Distribution,
    env: &BTreeMap<String, String>,
) -> Result<f64, EvalError> {
    let mut diag = EvalDiagnostics::default();
    eval_estimand_diag(e, d, env, &mut diag)
}

/// [`eval_estimand_with`] that also reports the denominator diagnostics.
pub fn eval_estimand_diag(
    e: &Estimand,
    d: &Distribution,
    env: &BTreeMap<String, String>,
    diag: &mut EvalDiagnostics,
) -> Result<f64, EvalError> {
    let mut scope = env.clone();
    eval_rec(e, d, &mut scope, diag)
}

fn eval_rec(
    e: &Estimand,
    d: &Distribution,
    scope: &mut BTreeMap<String, String>,
    diag: &mut EvalDiagnostics,
) -> Result<f64, EvalError> {
    match e {
        Estimand::Term { joint, given } => {
            let mut cond = BTreeMap::new();
            let den = match assign_atoms(given, d, scope, &mut cond)? {
                Consistency::Consistent => {
                    if given.is_empty() {
                        1.0
                    } else {
                        d.mass(&cond)?
                    }
                }
                Consistency::Contradictory => 0.0,
            };
            let mut all = cond.clone();
            let num = match assign_atoms(joint, d, scope, &mut all)? {
                Consistency::Consistent => d.mass(&all)?,
                Consistency::Contradictory => 0.0,
            };
            Ok(ratio(num, den, diag))
        }
        Estimand::DoTerm { .. } => Err(EvalError::ContainsDoTerm),
        Estimand::Expectation {
            target,
            r#do,
            given,
        } => {
            if !r#do.is_empty() {
                return Err(EvalError::ContainsDoTerm);
            }
            let dom = d
                .domain(target)
                .ok_or_else(|| EvalError::UnknownVariable(target.to_string()))?
                .to_vec();
            let numeric: Result<Vec<f64>, EvalError> = dom
                .iter()
                .map(|x| {
                    x.parse::<f64>()
                        .map_err(|_| EvalError::NonNumericDomain(target.to_string()))
                })
                .collect();
            let numeric = numeric?;
            let mut cond = BTreeMap::new();
            let den = match assign_atoms(given, d, scope, &mut cond)? {
                Consistency::Consistent => {
                    if given.is_empty() {
                        1.0
                    } else {
                        d.mass(&cond)?
                    }
                }
                Consistency::Contradictory => 0.0,
            };
            let mut mean = 0.0;
            for (val, x) in dom.iter().zip(&numeric) {
                let mut all = cond.clone();
                let num = match insert_checked(&mut all, target, val) {
                    Consistency::Consistent => d.mass(&all)?,
                    Consistency::Contradictory => 0.0,
                };
                mean += x * ratio(num, den, diag);
            }
            Ok(mean)
        }
        Estimand::Sum { bound, body } => {
            let mut doms = Vec::with_capacity(bound.len());
            for (v, _) in bound {
                let dom = d
                    .domain(v)
                    .ok_or_else(|| EvalError::UnknownVariable(v.to_string()))?;
                doms.push(dom.to_vec());
            }
            let mut total = 0.0;
            let mut idx = vec![0usize; bound.len()];
            loop {
                let mut saved = Vec::with_capacity(bound.len());
                for (slot, (_, token)) in bound.iter().enumerate() {
                    saved.push(scope.insert(token.clone(), doms[slot][idx[slot]].clone()));
                }
                total += eval_rec(body, d, scope, diag)?;
                for ((_, token), old) in bound.iter().zip(saved) {
                    match old {
                        Some(val) => {
                            scope.insert(token.clone(), val);
                        }
                        None => {
                            scope.remove(token);
                        }
                    }
                }
                // Odometer increment over the bound domains.
                let mut carry = bound.len();
                while carry > 0 {
                    idx[carry - 1] += 1;
                    if idx[carry - 1] < doms[carry - 1].len() {
                        break;
                    }
                    idx[carry - 1] = 0;
                    carry -= 1;
                }
                if carry == 0 {
                    break;
                }
            }
            Ok(total)
        }
        Estimand::Product(factors) => {
            let mut prod = 1.0;
            for f in factors {
                prod *= eval_rec(f, d, scope, diag)?;
            }
            Ok(prod)
        }
        Estimand::Quotient {
            numerator,
            denominator,
        } => {
            let num = eval_rec(numerator, d, scope, diag)?;
            let den = eval_rec(denominator, d, scope, diag)?;
            Ok(ratio(num, den, diag))
        }
        Estimand::Difference {
            minuend,
            subtrahend,
        } => Ok(eval_rec(minuend, d, scope, diag)? - eval_rec(subtrahend, d, scope, diag)?),
    }
}

enum Consistency {
    Consistent,
    Contradictory,
}

fn assign_atoms(
    atoms: &[Atom],
    d: &Distribution,
    scope: &BTreeMap<String, String>,
    out: &mut BTreeMap<Variable, String>,
) -> Result<Consistency, EvalError> {
    for atom in atoms {
        let val = resolve_token(atom, d, scope)?;
        if let Consistency::Contradictory = insert_checked(out, &atom.var, &val) {
            return Ok(Consistency::Contradictory);
        }
    }
    Ok(Consistency::Consistent)
}

fn insert_checked(out: &mut BTreeMap<Variable, String>, var: &Variable, val: &str) -> Consistency {
    match out.get(var) {
        Some(existing) if existing != val => Consistency::Contradictory,
        _ => {
            out.insert(var.clone(), val.to_string());
            Consistency::Consistent
        }
    }
}

/// Resolves one atom's value token against the environment, the domain, and
/// the name-prefix convention, in that order.
fn resolve_token(
    atom: &Atom,
    d: &Distribution,
    scope: &BTreeMap<String, String>,
) -> Result<String, EvalError> {
    let dom = d
        .domain(&atom.var)
        .ok_or_else(|| EvalError::UnknownVariable(atom.var.to_string()))?;
    if let Some(val) = scope.get(&atom.value) {
        if !dom.contains(val) {
            return Err(EvalError::ValueOutsideDomain {
                var: atom.var.to_string(),
                value: val.clone(),
            });
        }
        return Ok(val.clone());
    }
    if dom.contains(&atom.value) {
        return Ok(atom.value.clone());
    }
    let prefix = atom.var.name().to_lowercase();
    if let Some(rest) = atom.value.strip_prefix(&prefix) {
        if dom.contains(&rest.to_string()) {
            return Ok(rest.to_string());
        }
    }
    Err(EvalError::FreeVariableUnbound(atom.value.clone()))
}

fn ratio(num: f64, den: f64, diag: &mut EvalDiagnostics) -> f64 {
    if den == 0.0 {
        if num == 0.0 {
            diag.zero_over_zero += 1;
        } else {
            diag.zero_denominator += 1;
        }
        0.0
    } else {
        num / den
    }
}

/// A random model over `g`: uniform random rows bounded away from zero
/// (every entry at least 0.01), one shared exogenous variable per
/// bidirected edge (domain size 4), deterministic in `seed`.
pub fn random_scm(g: &Admg, seed: u64, domain_size: usize) -> DiscreteScm {
    assert!(
        domain_size >= 2,
        "observed domains need at least two values"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut domains: BTreeMap<Variable, Vec<String>> = BTreeMap::new();
    for v in g.nodes() {
        domains.insert(v.clone(), (0..domain_size).map(|i| i.to_string()).collect());
    }
    let mut exogenous = Vec::new();
    let mut exo_of: BTreeMap<Variable, Vec<String>> = BTreeMap::new();
    let taken: BTreeSet<String> = g.nodes().iter().map(|v| v.name().to_string()).collect();
    for (x, y) in g.bidirected_edges() {
        let mut name = format!("u_{}_{}", x.name().to_lowercase(), y.name().to_lowercase());
        while taken.contains(&name) || exogenous.iter().any(|e: &ExogenousVar| e.name == name) {
            name.push('_');
        }
        let prior = random_row(&mut rng, 4);
        exogenous.push(ExogenousVar {
            name: name.clone(),
            domain: (0..4).map(|i| i.to_string()).collect(),
            prior,
        });
        exo_of.entry(x.clone()).or_default().push(name.clone());
        exo_of.entry(y.clone()).or_default().push(name);
    }
    let mut tables = BTreeMap::new();
    for v in g.nodes() {
        let parents: Vec<String> = g
            .parents_of(v)
            .iter()
            .map(|p| p.name().to_string())
            .collect();
        let exo_parents = exo_of.get(v).cloned().unwrap_or_default();
        let mut key_domains: Vec<&[String]> = Vec::new();
        for p in &parents {
            key_domains.push(&domains[&g.var(p).expect("parent is a node")]);
        }
        let exo_domains: Vec<Vec<String>> = exo_parents
            .iter()
            .map(|_| (0..4).map(|i| i.to_string()).collect())
            .collect();
        for dom in &exo_domains {
            key_domains.push(dom);
        }
        let mut rows = BTreeMap::new();
        for key in cartesian(&key_domains) {
            rows.insert(key, random_row(&mut rng, domain_size));
        }
        tables.insert(
            v.clone(),
            Table {
                parents,
                exo_parents,
                rows,
            },
        );
    }
    DiscreteScm::new(g.clone(), domains, exogenous, tables)
        .expect("randomly generated model is valid by construction")
}

/// A random probability row with every entry at least 0.01.
fn random_row(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| rng.gen::<f64>() + 1e-9).collect();
    let sum: f64 = raw.iter().sum();
    let scale = 1.0 - 0.01 * len as f64;
    raw.into_iter().map(|x| x / sum * scale + 0.01).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The paper-style two-variable confounded model: a bow `A -> Yh`,
    /// `A <-> Yh` realized by a fair binary `U`.
    fn teacher_model(a_rows: [[f64; 2]; 2], y_rows: [[f64; 2]; 4]) -> DiscreteScm {
        let g = Admg::build_named(&["A", "Yh"], &[("A", "Yh")], &[("A", "Yh")]).unwrap();
        let a = g.var("A").unwrap();
        let yh = g.var("Yh").unwrap();
        let mut domains = BTreeMap::new();
        domains.insert(a.clone(), vec!["0".into(), "1".into()]);
        domains.insert(yh.clone(), vec!["0".into(), "1".into()]);
        let exogenous = vec![ExogenousVar {
            name: "U".into(),
            domain: vec!["0".into(), "1".into()],
            prior: vec![0.5, 0.5],
        }];
        let mut tables = BTreeMap::new();
        let mut a_table = BTreeMap::new();
        a_table.insert(vec!["0".to_string()], a_rows[0].to_vec());
        a_table.insert(vec!["1".to_string()], a_rows[1].to_vec());
        tables.insert(
            a.clone(),
            Table {
                parents: vec![],
                exo_parents: vec!["U".into()],
                rows: a_table,
            },
        );
        let mut y_table = BTreeMap::new();
        // Key layout: [A value, U value].
        y_table.insert(vec!["0".to_string(), "0".to_string()], y_rows[0].to_vec());
        y_table.insert(vec!["1".to_string(), "0".to_string()], y_rows[1].to_vec());
        y_table.insert(vec!["0".to_string(), "1".to_string()], y_rows[2].to_vec());
        y_table.insert(vec!["1".to_string(), "1".to_string()], y_rows[3].to_vec());
        tables.insert(
            yh.clone(),
            Table {
                parents: vec!["A".into()],
                exo_parents: vec!["U".into()],
                rows: y_table,
            },
        );
        DiscreteScm::new(g, domains, exogenous, tables).unwrap()
    }

    fn m1() -> DiscreteScm {
        teacher_model(
            [[0.6, 0.4], [0.4, 0.6]],
            [[0.75, 0.25], [0.98, 0.02], [0.98, 0.02], [0.75, 0.25]],
        )
    }

    fn m2() -> DiscreteScm {
        teacher_model(
            [[0.65, 0.35], [0.35, 0.65]],
            [[0.76, 0.24], [0.99, 0.01], [0.99, 0.01], [0.76, 0.24]],
        )
    }

    fn assign(pairs: &[(&Variable, &str)]) -> BTreeMap<Variable, String> {
        pairs
            .iter()
            .map(|(v, x)| ((*v).clone(), x.to_string()))
            .collect()
    }

    #[test]
    fn teacher_models_reproduce_known_values() {
        for (model, p11, p00, interventional) in
            [(m1(), 0.079, 0.421, 0.135), (m2(), 0.07975, 0.42025, 0.125)]
        {
            let g = model.graph().clone();
            let a = g.var("A").unwrap();
            let yh = g.var("Yh").unwrap();
            let joint = model.joint().unwrap();
            let got11 = joint.mass(&assign(&[(&yh, "1"), (&a, "1")])).unwrap();
            assert!((got11 - p11).abs() < 1e-12, "P(Yh=1,A=1) = {got11}");
            let got00 = joint.mass(&assign(&[(&yh, "0"), (&a, "0")])).unwrap();
            assert!((got00 - p00).abs() < 1e-12, "P(Yh=0,A=0) = {got00}");
            // P(Yh_{A=0} = 1) two ways: mutilation and counterfactual.
            let mut x = BTreeMap::new();
            x.insert(a.clone(), "0".to_string());
            let post = model.intervene(&x).unwrap().joint().unwrap();
            let by_do = post.mass(&assign(&[(&yh, "1")])).unwrap();
            assert!((by_do - interventional).abs() < 1e-12, "do-value {by_do}");
            let atom = CtfAtom::new(
                yh.clone(),
                vec![CtfIntervention::Fixed(a.clone(), "0".into())],
                "1",
            );
            let by_ctf = model.ctf_probability(&[atom], &[]).unwrap();
            assert!(
                (by_ctf - interventional).abs() < 1e-12,
                "ctf-value {by_ctf}"
            );
        }
    }

    #[test]
    fn first_model_has_zero_tv_and_zero_te() {
        let model = m1();
        let g = model.graph().clone();
        let a = g.var("A").unwrap();
        let yh = g.var("Yh").unwrap();
        let tv = model
            .effect_measure(
                &EffectQuery::TotalVariation { value: "1".into() },
                &a,
                &yh,
                "1",
                "0",
            )
            .unwrap();
        assert!(tv.abs() < 1e-12, "TV = {tv}");
        let te = model
            .effect_measure(&EffectQuery::TotalEffect, &a, &yh, "1", "0")
            .unwrap();
        assert!(te.abs() < 1e-12, "TE = {te}");
    }

    #[test]
    fn eval_scores_the_background_adjustment_formula() {
        // sum_u P(yh1 | a0, u) P(u) is the interventional value 0.135.
        let model = m1();
        let g = model.graph().clone();
        let a = g.var("A").unwrap();
        let yh = g.var("Yh").unwrap();
        let u = Variable::new("U");
        let e = Estimand::sum(
            vec![(u.clone(), "u".into())],
            Estimand::product(vec![
                Estimand::term(
                    vec![Atom::new(yh.clone(), "yh1")],
                    vec![Atom::new(a.clone(), "a0"), Atom::new(u.clone(), "u")],
                ),
                Estimand::term(vec![Atom::new(u.clone(), "u")], vec![]),
            ]),
        );
        let d = model.joint_with_exogenous().unwrap();
        let got = eval_estimand(&e, &d).unwrap();
        assert!((got - 0.135).abs() < 1e-12, "eval gave {got}");
        // The bare token `y` has no self-describing suffix: unbound.
        let free = Estimand::term(vec![Atom::new(yh.clone(), "y")], vec![]);
        assert!(matches!(
            eval_estimand(&free, &d),
            Err(EvalError::FreeVariableUnbound(t)) if t == "y"
        ));
        // ...unless an environment binds it.
        let mut env = BTreeMap::new();
        env.insert("y".to_string(), "1".to_string());
        let bound = eval_estimand_with(&free, &d, &env).unwrap();
        let direct = eval_estimand(
            &Estimand::term(vec![Atom::new(yh.clone(), "1")], vec![]),
            &d,
        )
        .unwrap();
        assert!((bound - direct).abs() < 1e-15);
        // Do-terms cannot be scored observationally.
        let dt = Estimand::do_term(
            vec![Atom::new(yh.clone(), "1")],
            vec![Atom::new(a.clone(), "a0")],
            vec![],
        );
        assert!(matches!(
            eval_estimand(&dt, &d),
            Err(EvalError::ContainsDoTerm)
        ));
    }

    #[test]
    fn intervention_matches_truncated_factorization_on_markovian_chain() {
        let g = Admg::build_named(&["A", "M", "Y"], &[("A", "M"), ("M", "Y")], &[]).unwrap();
        let model = random_scm(&g, 7, 3);
        let a = g.var("A").unwrap();
        let m = g.var("M").unwrap();
        let y = g.var("Y").unwrap();
        let mut x = BTreeMap::new();
        x.insert(a.clone(), "1".to_string());
        let post = model.intervene(&x).unwrap().joint().unwrap();
        // Truncated factorization: P(m, y | do(a=1)) = P(m | a=1) P(y | m).
        let joint = model.joint().unwrap();
        for mv in 0..3 {
            for yv in 0..3 {
                let mv = mv.to_string();
                let yv = yv.to_string();
                let lhs = post
                    .mass(&assign(&[(&a, "1"), (&m, &mv), (&y, &yv)]))
                    .unwrap();
                let p_m = joint.mass(&assign(&[(&a, "1"), (&m, &mv)])).unwrap()
                    / joint.mass(&assign(&[(&a, "1")])).unwrap();
                let p_y = joint.mass(&assign(&[(&m, &mv), (&y, &yv)])).unwrap()
                    / joint.mass(&assign(&[(&m, &mv)])).unwrap();
                assert!((lhs - p_m * p_y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_subscript_counterfactual_is_plain_conditioning() {
        let g = Admg::build_named(&["A", "Y"], &[("A", "Y")], &[("A", "Y")]).unwrap();
        let model = random_scm(&g, 11, 2);
        let a = g.var("A").unwrap();
        let y = g.var("Y").unwrap();
        let p = model
            .ctf_probability(
                &[CtfAtom::observed(y.clone(), "1")],
                &[CtfAtom::observed(a.clone(), "0")],
            )
            .unwrap();
        let joint = model.joint().unwrap();
        let want = joint.mass(&assign(&[(&a, "0"), (&y, "1")])).unwrap()
            / joint.mass(&assign(&[(&a, "0")])).unwrap();
        assert!((p - want).abs() < 1e-12);
    }

    /// Full response-function enumeration on a small model, as a semantic
    /// cross-check of the lazy row-branching implementation.
    fn response_function_prob(model: &DiscreteScm, gamma: &[CtfAtom]) -> f64 {
        let g = model.graph();
        let topo = g.topological_order();
        // Materialize every selector: for each variable, a full map from
        // row keys to chosen values.
        type Selectors = Vec<(f64, BTreeMap<Vec<String>, String>)>;
        let mut selector_sets: Vec<Selectors> = Vec::new();
        for v in &topo {
            let table = &model.tables()[v];
            let keys: Vec<Vec<String>> = table.rows.keys().cloned().collect();
            let mut selectors: Vec<(f64, BTreeMap<Vec<String>, String>)> =
                vec![(1.0, BTreeMap::new())];
            for key in &keys {
                let row = &table.rows[key];
                let mut next = Vec::new();
                for (p, partial) in &selectors {
                    for (i, q) in row.iter().enumerate() {
                        let mut extended = partial.clone();
                        extended.insert(key.clone(), model.domains()[v][i].clone());
                        next.push((p * q, extended));
                    }
                }
                selectors = next;
            }
            selector_sets.push(selectors);
        }
        // Enumerate exogenous states x selector combinations.
        let mut total = 0.0;
        let exo_states = model.exo_states().unwrap();
        let mut combo = vec![0usize; topo.len()];
        loop {
            let mut weight = 1.0;
            for (i, sel) in combo.iter().enumerate() {
                weight *= selector_sets[i][*sel].0;
            }
            if weight > 0.0 {
                for (u, pu) in &exo_states {
                    // Deterministic world evaluation.
                    fn value_of(
                        model: &DiscreteScm,
                        topo: &[Variable],
                        selector_sets: &[Selectors],
                        combo: &[usize],
                        u: &[String],
                        v: &Variable,
                        ctx: &[(Variable, String)],
                    ) -> String {
                        if let Some((_, val)) = ctx.iter().find(|(w, _)| w == v) {
                            return val.clone();
                        }
                        let table = &model.tables()[v];
                        let mut key = Vec::new();
                        for pname in &table.parents {
                            let pvar = model.graph().var(pname).unwrap();
                            key.push(value_of(model, topo, selector_sets, combo, u, &pvar, ctx));
                        }
                        for ename in &table.exo_parents {
                            key.push(u[model.exo_index(ename)].clone());
                        }
                        let slot = topo.iter().position(|w| w == v).unwrap();
                        selector_sets[slot][combo[slot]].1[&key].clone()
                    }
                    let mut sat = true;
                    for atom in gamma {
                        // This cross-check covers unnested subscripts only.
                        let ctx: Vec<(Variable, String)> = atom
                            .subscript
                            .iter()
                            .map(|e| match e {
                                CtfIntervention::Fixed(v, val) => (v.clone(), val.clone()),
                                CtfIntervention::Nested(v, inner) => {
                                    let ictx: Vec<(Variable, String)> = inner
                                        .iter()
                                        .map(|f| match f {
                                            CtfIntervention::Fixed(w, val) => {
                                                (w.clone(), val.clone())
                                            }
                                            _ => unreachable!("one level of nesting"),
                                        })
                                        .collect();
                                    let val =
                                        value_of(model, &topo, &selector_sets, &combo, u, v, &ictx);
                                    (v.clone(), val)
                                }
                            })
                            .collect();
                        let val =
                            value_of(model, &topo, &selector_sets, &combo, u, &atom.var, &ctx);
                        if val != atom.value {
                            sat = false;
                            break;
                        }
                    }
                    if sat {
                        total += weight * pu;
                    }
                }
            }
            // Odometer over selector combinations.
            let mut carry = combo.len();
            while carry > 0 {
                combo[carry - 1] += 1;
                if combo[carry - 1] < selector_sets[carry - 1].len() {
                    break;
                }
                combo[carry - 1] = 0;
                carry -= 1;
            }
            if carry == 0 {
                break;
            }
        }
        total
    }

    #[test]
    fn lazy_branching_matches_full_response_function_enumeration() {
        // Hand-rolled mediation model with a *binary* disturbance so the
        // full selector enumeration (2^8 selectors for Y alone) stays small.
        let g = Admg::build_named(
            &["A", "M", "Y"],
            &[("A", "M"), ("M", "Y"), ("A", "Y")],
            &[("A", "Y")],
        )
        .unwrap();
        let a = g.var("A").unwrap();
        let m = g.var("M").unwrap();
        let y = g.var("Y").unwrap();
        let binary = vec!["0".to_string(), "1".to_string()];
        let mut domains = BTreeMap::new();
        domains.insert(a.clone(), binary.clone());
        domains.insert(m.clone(), binary.clone());
        domains.insert(y.clone(), binary.clone());
        let exogenous = vec![ExogenousVar {
            name: "U".into(),
            domain: binary.clone(),
            prior: vec![0.3, 0.7],
        }];
        let mut tables = BTreeMap::new();
        let mut rows = BTreeMap::new();
        rows.insert(vec!["0".to_string()], vec![0.8, 0.2]);
        rows.insert(vec!["1".to_string()], vec![0.35, 0.65]);
        tables.insert(
            a.clone(),
            Table {
                parents: vec![],
                exo_parents: vec!["U".into()],
                rows,
            },
        );
        let mut rows = BTreeMap::new();
        rows.insert(vec!["0".to_string()], vec![0.6, 0.4]);
        rows.insert(vec!["1".to_string()], vec![0.25, 0.75]);
        tables.insert(
            m.clone(),
            Table {
                parents: vec!["A".into()],
                exo_parents: vec![],
                rows,
            },
        );
        let mut rows = BTreeMap::new();
        for (key, p1) in [
            (("0", "0", "0"), 0.15),
            (("0", "0", "1"), 0.4),
            (("0", "1", "0"), 0.55),
            (("0", "1", "1"), 0.7),
            (("1", "0", "0"), 0.3),
            (("1", "0", "1"), 0.45),
            (("1", "1", "0"), 0.8),
            (("1", "1", "1"), 0.9),
        ] {
            // Key layout: [A value, M value, U value].
            rows.insert(
                vec![key.0.to_string(), key.1.to_string(), key.2.to_string()],
                vec![1.0 - p1, p1],
            );
        }
        tables.insert(
            y.clone(),
            Table {
                parents: vec!["A".into(), "M".into()],
                exo_parents: vec!["U".into()],
                rows,
            },
        );
        let model = DiscreteScm::new(g.clone(), domains, exogenous, tables).unwrap();
        let queries: Vec<Vec<CtfAtom>> = vec![
            // P(Y_{a=1} = 1, A = 0): the classic cross-world conjunction.
            vec![
                CtfAtom::new(
                    y.clone(),
                    vec![CtfIntervention::Fixed(a.clone(), "1".into())],
                    "1",
                ),
                CtfAtom::observed(a.clone(), "0"),
            ],
            // P(Y_{a=1, M_{a=0}} = 1): the natural-direct-effect kernel.
            vec![CtfAtom::new(
                y.clone(),
                vec![
                    CtfIntervention::Fixed(a.clone(), "1".into()),
                    CtfIntervention::Nested(
                        m.clone(),
                        vec![CtfIntervention::Fixed(a.clone(), "0".into())],
                    ),
                ],
                "1",
            )],
            // P(Y_{a=0} = 1, Y_{a=1} = 0): probability of necessity shape.
            vec![
                CtfAtom::new(
                    y.clone(),
                    vec![CtfIntervention::Fixed(a.clone(), "0".into())],
                    "1",
                ),
                CtfAtom::new(
                    y.clone(),
                    vec![CtfIntervention::Fixed(a.clone(), "1".into())],
                    "0",
                ),
            ],
        ];
        for gamma in queries {
            let lazy = model.ctf_probability(&gamma, &[]).unwrap();
            let full = response_function_prob(&model, &gamma);
            assert!(
                (lazy - full).abs() < 1e-12,
                "lazy {lazy} vs full {full} on {:?}",
                gamma.iter().map(|a| a.to_string()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn pse_with_all_paths_is_the_intervened_distribution() {
        let g = Admg::build_named(&["A", "M", "Y"], &[("A", "M"), ("M", "Y"), ("A", "Y")], &[])
            .unwrap();
        let model = random_scm(&g, 31, 2);
        let a = g.var("A").unwrap();
        let y = g.var("Y").unwrap();
        let pi = PathSet::all_paths(&g, &a, &y).unwrap();
        let value = model.pse_value(&pi, "1", "0", "1").unwrap();
        let mut x = BTreeMap::new();
        x.insert(a.clone(), "1".to_string());
        let post = model.intervene(&x).unwrap().joint().unwrap();
        let want = post.mass(&assign(&[(&y, "1")])).unwrap();
        assert!((value - want).abs() < 1e-12, "{value} vs {want}");
    }

    #[test]
    fn pse_on_direct_edge_is_the_nested_counterfactual() {
        let g = Admg::build_named(&["A", "M", "Y"], &[("A", "M"), ("M", "Y"), ("A", "Y")], &[])
            .unwrap();
        let model = random_scm(&g, 37, 2);
        let a = g.var("A").unwrap();
        let m = g.var("M").unwrap();
        let y = g.var("Y").unwrap();
        let pi = PathSet::new(&g, &a, &y, vec![vec![a.clone(), y.clone()]]).unwrap();
        let by_pse = model.pse_value(&pi, "1", "0", "1").unwrap();
        let atom = CtfAtom::new(
            y.clone(),
            vec![
                CtfIntervention::Fixed(a.clone(), "1".into()),
                CtfIntervention::Nested(
                    m.clone(),
                    vec![CtfIntervention::Fixed(a.clone(), "0".into())],
                ),
            ],
            "1",
        );
        let by_ctf = model.ctf_probability(&[atom], &[]).unwrap();
        assert!((by_pse - by_ctf).abs() < 1e-12, "{by_pse} vs {by_ctf}");
    }

    #[test]
    fn random_models_are_deterministic_and_structured() {
        let g =
            Admg::build_named(&["A", "W", "Y"], &[("A", "W"), ("W", "Y")], &[("A", "Y")]).unwrap();
        let one = random_scm(&g, 99, 3);
        let two = random_scm(&g, 99, 3);
        assert_eq!(one, two);
        let three = random_scm(&g, 100, 3);
        assert_ne!(one, three);
        assert_eq!(one.exogenous().len(), 1);
        assert_eq!(one.exogenous()[0].name, "u_a_y");
        for table in one.tables().values() {
            for row in table.rows.values() {
                assert!(row.iter().all(|p| *p >= 0.01));
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn validation_rejects_malformed_models() {
        let g = Admg::build_named(&["A", "Y"], &[("A", "Y")], &[("A", "Y")]).unwrap();
        let a = g.var("A").unwrap();
        let y = g.var("Y").unwrap();
        let mut domains = BTreeMap::new();
        domains.insert(a.clone(), vec!["0".to_string(), "1".to_string()]);
        domains.insert(y.clone(), vec!["0".to_string(), "1".to_string()]);
        let exo = |shared: bool| {
            vec![ExogenousVar {
                name: "U".into(),
                domain: vec!["0".into(), "1".into()],
                prior: vec![0.5, 0.5],
            }]
            .into_iter()
            .filter(|_| shared)
            .collect::<Vec<_>>()
        };
        let table_a = |with_exo: bool| {
            let mut rows = BTreeMap::new();
            if with_exo {
                rows.insert(vec!["0".to_string()], vec![0.5, 0.5]);
                rows.insert(vec!["1".to_string()], vec![0.5, 0.5]);
            } else {
                rows.insert(vec![], vec![0.5, 0.5]);
            }
            Table {
                parents: vec![],
                exo_parents: if with_exo { vec!["U".into()] } else { vec![] },
                rows,
            }
        };
        let table_y = |with_exo: bool, bad_sum: bool| {
            let mut rows = BTreeMap::new();
            let row = if bad_sum {
                vec![0.6, 0.5]
            } else {
                vec![0.5, 0.5]
            };
            if with_exo {
                for aval in ["0", "1"] {
                    for uval in ["0", "1"] {
                        rows.insert(vec![aval.to_string(), uval.to_string()], row.clone());
                    }
                }
            } else {
                for aval in ["0", "1"] {
                    rows.insert(vec![aval.to_string()], row.clone());
                }
            }
            Table {
                parents: vec!["A".into()],
                exo_parents: if with_exo { vec!["U".into()] } else { vec![] },
                rows,
            }
        };
        let build = |exo_shared: bool, a_exo: bool, y_exo: bool, bad_sum: bool| {
            let mut tables = BTreeMap::new();
            tables.insert(a.clone(), table_a(a_exo));
            tables.insert(y.clone(), table_y(y_exo, bad_sum));
            DiscreteScm::new(g.clone(), domains.clone(), exo(exo_shared), tables)
        };
        // The well-formed model passes.
        assert!(build(true, true, true, false).is_ok());
        // A row that does not sum to one.
        assert!(matches!(
            build(true, true, true, true),
            Err(ModelError::BadRow { .. })
        ));
        // Bidirected edge with no shared exogenous variable.
        assert!(matches!(
            build(true, true, false, false),
            Err(ModelError::SharingMismatch(_))
        ));
        // Unused exogenous variable.
        assert!(matches!(
            build(true, false, false, false),
            Err(ModelError::SharingMismatch(_))
        ));
    }

    #[test]
    fn state_cap_rejects_oversized_joints() {
        let names: Vec<String> = (0..24).map(|i| format!("V{i:02}")).collect();
        let name_refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        let g = Admg::build_named(&name_refs, &[], &[]).unwrap();
        let model = random_scm(&g, 1, 2);
        assert!(matches!(
            model.joint(),
            Err(ModelError::DomainTooLarge { .. })
        ));
    }

    #[test]
    fn zero_evidence_is_reported() {
        let g = Admg::build_named(&["A", "Y"], &[("A", "Y")], &[]).unwrap();
        let a = g.var("A").unwrap();
        let y = g.var("Y").unwrap();
        let mut domains = BTreeMap::new();
        domains.insert(a.clone(), vec!["0".to_string(), "1".to_string()]);
        domains.insert(y.clone(), vec!["0".to_string(), "1".to_string()]);
        let mut tables = BTreeMap::new();
        let mut rows = BTreeMap::new();
        rows.insert(vec![], vec![1.0, 0.0]); // A is never 1.
        tables.insert(
            a.clone(),
            Table {
                parents: vec![],
                exo_parents: vec![],
                rows,
            },
        );
        let mut rows = BTreeMap::new();
        rows.insert(vec!["0".to_string()], vec![0.5, 0.5]);
        rows.insert(vec!["1".to_string()], vec![0.5, 0.5]);
        tables.insert(
            y.clone(),
            Table {
                parents: vec!["A".into()],
                exo_parents: vec![],
                rows,
            },
        );
        let model = DiscreteScm::new(g, domains, vec![], tables).unwrap();
        let got = model.ctf_probability(
            &[CtfAtom::observed(y.clone(), "1")],
            &[CtfAtom::observed(a.clone(), "1")],
        );
        assert!(matches!(got, Err(ModelError::ZeroEvidence)));
    }

    #[test]
    fn marginals_and_support_are_consistent() {
        let g = Admg::build_named(&["A", "B"], &[("A", "B")], &[]).unwrap();
        let model = random_scm(&g, 5, 2);
        let joint = model.joint().unwrap();
        let a = g.var("A").unwrap();
        let mut keep = BTreeSet::new();
        keep.insert(a.clone());
        let marg = joint.marginal(&keep);
        let by_mass = joint.mass(&assign(&[(&a, "0")])).unwrap();
        let direct = marg.mass(&assign(&[(&a, "0")])).unwrap();
        assert!((by_mass - direct).abs() < 1e-15);
        let total: f64 = joint.support().iter().map(|(_, p)| *p).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
