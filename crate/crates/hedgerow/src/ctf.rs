//! Counterfactual queries: atoms, conjunctions, parallel worlds, and the
//! identification of counterfactual probabilities.
//!
//! A counterfactual atom is a statement `Y[A=a1] = y`: "had `A` been held at
//! `a1`, `Y` would have taken the value `y`". Subscripts may nest, as in
//! `Y[A=a1, M[A=a0]] = y` — `Y` under `A` held at `a1` and `M` held at
//! whatever value it *would* have taken under `A=a0` — the shape that natural
//! direct effects are made of. A conjunction of atoms across different
//! hypothetical worlds, such as Pearl's probability of necessity and
//! sufficiency `P(Y[a']=y', Y[a]=y)`, is the general object.
//!
//! This module follows the parallel-worlds construction: one copy of the
//! graph per distinct subscript, with all copies sharing their exogenous
//! disturbances, pruned and merged into a *counterfactual graph* on which
//! identification proceeds district by district (Shpitser & Pearl's ID*).
//! [`make_cg`] builds the counterfactual graph; [`identify_ctf`] and
//! [`identify_ctf_conditional`] compile counterfactual conjunctions into
//! observational estimands or report the obstructing pattern.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::criteria::TokenPool;
use crate::error::GraphError;
use crate::estimand::{Atom, Estimand};
use crate::graph::{Admg, Variable};
use crate::id::{identify, IdentResult, Witness};
use crate::simplify::simplify;

/// One entry of a counterfactual subscript: either a variable held at an
/// explicit value, or a variable held at the value it would attain in
/// another hypothetical world (a nested counterfactual).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum CtfIntervention {
    /// `A=a1`: hold `A` fixed at the value (or value token) `a1`.
    Fixed(Variable, String),
    /// `M[A=a0]`: hold `M` fixed at the value it would attain under the
    /// inner subscript.
    Nested(Variable, Vec<CtfIntervention>),
}

impl CtfIntervention {
    /// The variable being held fixed by this entry.
    pub fn variable(&self) -> &Variable {
        match self {
            CtfIntervention::Fixed(v, _) => v,
            CtfIntervention::Nested(v, _) => v,
        }
    }
}

impl fmt::Display for CtfIntervention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CtfIntervention::Fixed(v, val) => write!(f, "{v}={val}"),
            CtfIntervention::Nested(v, inner) => {
                write!(f, "{v}[{}]", join_interventions(inner))
            }
        }
    }
}

fn join_interventions(entries: &[CtfIntervention]) -> String {
    entries
        .iter()
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

/// A counterfactual atom `Y[subscript] = value`. An empty subscript is the
/// observed world: `Y[] = y` is plain `Y = y`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CtfAtom {
    /// The variable the statement is about.
    pub var: Variable,
    /// The interventions defining the hypothetical world, sorted by variable.
    pub subscript: Vec<CtfIntervention>,
    /// The value (or value token) asserted for `var` in that world.
    pub value: String,
}

impl CtfAtom {
    /// A new atom; the subscript is sorted by intervened variable so that
    /// atoms about the same world compare equal regardless of input order.
    pub fn new(
        var: Variable,
        mut subscript: Vec<CtfIntervention>,
        value: impl Into<String>,
    ) -> Self {
        sort_subscript(&mut subscript);
        CtfAtom {
            var,
            subscript,
            value: value.into(),
        }
    }

    /// An observed-world atom `var = value`.
    pub fn observed(var: Variable, value: impl Into<String>) -> Self {
        CtfAtom::new(var, Vec::new(), value)
    }

    /// Checks the atom against a graph: every mentioned variable must be a
    /// node, subscript variables must be distinct at each nesting level, and
    /// no variable may be subscripted by itself.
    pub fn validate(&self, g: &Admg) -> Result<(), GraphError> {
        if !g.contains(&self.var) {
            return Err(GraphError::UnknownNode(self.var.to_string()));
        }
        validate_subscript(&self.var, &self.subscript, g)
    }

    /// Every base variable the atom mentions, at any nesting depth.
    pub fn variables(&self) -> BTreeSet<Variable> {
        let mut out = BTreeSet::new();
        out.insert(self.var.clone());
        collect_subscript_vars(&self.subscript, &mut out);
        out
    }
}

fn sort_subscript(entries: &mut [CtfIntervention]) {
    for e in entries.iter_mut() {
        if let CtfIntervention::Nested(_, inner) = e {
            sort_subscript(inner);
        }
    }
    entries.sort_by(|x, y| x.variable().cmp(y.variable()).then_with(|| x.cmp(y)));
}

fn validate_subscript(
    subject: &Variable,
    entries: &[CtfIntervention],
    g: &Admg,
) -> Result<(), GraphError> {
    let mut seen = BTreeSet::new();
    for entry in entries {
        let v = entry.variable();
        if !g.contains(v) {
            return Err(GraphError::UnknownNode(v.to_string()));
        }
        if v == subject {
            return Err(GraphError::InconsistentQuery(format!(
                "`{subject}` is subscripted by itself"
            )));
        }
        if !seen.insert(v.clone()) {
            return Err(GraphError::InconsistentQuery(format!(
                "`{v}` appears twice in one subscript"
            )));
        }
        if let CtfIntervention::Nested(inner_var, inner) = entry {
            validate_subscript(inner_var, inner, g)?;
        }
    }
    Ok(())
}

fn collect_subscript_vars(entries: &[CtfIntervention], out: &mut BTreeSet<Variable>) {
    for entry in entries {
        out.insert(entry.variable().clone());
        if let CtfIntervention::Nested(_, inner) = entry {
            collect_subscript_vars(inner, out);
        }
    }
}

impl fmt::Display for CtfAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.subscript.is_empty() {
            write!(f, "{}={}", self.var, self.value)
        } else {
            write!(
                f,
                "{}[{}]={}",
                self.var,
                join_interventions(&self.subscript),
                self.value
            )
        }
    }
}

/// A counterfactual query `P(gamma | delta)`: a conjunction of atoms of
/// interest and a (possibly empty) conjunction of evidence atoms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CtfQuery {
    /// The atoms whose joint probability is asked for. Nonempty.
    pub gamma: Vec<CtfAtom>,
    /// Evidence atoms; empty means an unconditional query.
    pub delta: Vec<CtfAtom>,
}

impl CtfQuery {
    /// A new query; `gamma` must be nonempty.
    pub fn new(gamma: Vec<CtfAtom>, delta: Vec<CtfAtom>) -> Result<Self, GraphError> {
        if gamma.is_empty() {
            return Err(GraphError::InconsistentQuery(
                "counterfactual query needs at least one atom".into(),
            ));
        }
        Ok(CtfQuery { gamma, delta })
    }

    /// Validates every atom of the query against the graph.
    pub fn validate(&self, g: &Admg) -> Result<(), GraphError> {
        for atom in self.gamma.iter().chain(&self.delta) {
            atom.validate(g)?;
        }
        Ok(())
    }
}

impl fmt::Display for CtfQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let gamma = self
            .gamma
            .iter()
            .map(|a| a.to_string())
            .collect::<Vec<_>>()
            .join(", ");
        if self.delta.is_empty() {
            write!(f, "P({gamma})")
        } else {
            let delta = self
                .delta
                .iter()
                .map(|a| a.to_string())
                .collect::<Vec<_>>()
                .join(", ");
            write!(f, "P({gamma} | {delta})")
        }
    }
}

// ---------------------------------------------------------------------------
// Parallel worlds
// ---------------------------------------------------------------------------

/// A hypothetical world, keyed by the variables its subscript holds fixed.
/// The observed world is the empty assignment.
pub type World = BTreeMap<Variable, String>;

/// A cross-world conflict: within one district of the counterfactual graph,
/// a single base variable would have to take two different settings at once
/// — as the value of two unmergeable copies, as the demanded input of two
/// members, or as both a member and a demanded input. Such a district admits
/// two models that agree observationally but disagree on the conjunction,
/// so the verdict is final, not an artifact of the strategy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorldConflict {
    /// The district of the counterfactual graph that is blocked.
    pub district: BTreeSet<Variable>,
    /// The base variable caught between worlds.
    pub variable: Variable,
    /// The two clashing settings (value tokens).
    pub values: (String, String),
}

impl fmt::Display for WorldConflict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let nodes = self
            .district
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(", ");
        write!(
            f,
            "conflict: `{}` would have to be both `{}` and `{}` within the district {{{nodes}}}",
            self.variable, self.values.0, self.values.1
        )
    }
}

/// The merged parallel-worlds ("counterfactual") graph of a conjunction.
///
/// One copy of the base graph is laid down per distinct flat subscript (the
/// observed world is always among them), all copies sharing their exogenous
/// disturbances. Copies of a variable whose mechanisms provably receive the
/// same inputs are merged; intervened variables become parentless nodes
/// pinned to their setting. Nodes carry their world in the name — `Y@{A=a1}`
/// is the copy of `Y` in the world where `A` was held at `a1`; a node named
/// plainly, like `Y`, is (merged with) the observed-world copy.
#[derive(Debug, Clone)]
pub struct WorldGraph {
    base: Admg,
    graph: Admg,
    worlds: Vec<World>,
    merged: BTreeMap<(usize, Variable), Variable>,
    fixed: BTreeMap<Variable, String>,
    shared: Vec<(String, BTreeSet<Variable>)>,
}

impl WorldGraph {
    /// The graph the worlds are copies of.
    pub fn base(&self) -> &Admg {
        &self.base
    }

    /// The merged parallel-worlds graph itself.
    pub fn graph(&self) -> &Admg {
        &self.graph
    }

    /// The worlds, sorted with the observed (empty) world first.
    pub fn worlds(&self) -> &[World] {
        &self.worlds
    }

    /// The index of `world` among [`WorldGraph::worlds`].
    pub fn world_index(&self, world: &World) -> Option<usize> {
        self.worlds.iter().position(|w| w == world)
    }

    /// Where each copy went: `(world index, base variable)` to the merged
    /// node that represents it. Intervened copies map to fixed nodes.
    pub fn merged(&self) -> &BTreeMap<(usize, Variable), Variable> {
        &self.merged
    }

    /// The node representing base variable `v` in world `world`.
    pub fn canonical(&self, world: usize, v: &Variable) -> Option<&Variable> {
        self.merged.get(&(world, v.clone()))
    }

    /// The intervened nodes and the settings they are pinned to.
    pub fn fixed(&self) -> &BTreeMap<Variable, String> {
        &self.fixed
    }

    /// The exogenous disturbances shared between surviving copies: one
    /// labelled group per mechanism noise (`e(V)`) or latent confounder
    /// (`U(A,B)`) with at least two children in the graph. Each group
    /// appears as a clique of bidirected edges.
    pub fn shared_exogenous(&self) -> &[(String, BTreeSet<Variable>)] {
        &self.shared
    }
}

/// One base atom placed in a flat (already unnested) world.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct FlatAtom {
    var: Variable,
    world: World,
    value: String,
}

/// Rewrites nested subscripts away. Each inner counterfactual `M[A=a0]`
/// becomes a fresh value token `m` bound by an outer sum: the atom using it
/// moves to the flat world `{M=m}` and an auxiliary conjunct `M[A=a0]=m`
/// joins the conjunction. Repeated inner counterfactuals share one token.
struct Unnester<'p> {
    memo: BTreeMap<(Variable, World), String>,
    binders: Vec<(Variable, String)>,
    minted: Vec<FlatAtom>,
    pool: &'p mut TokenPool,
}

impl<'p> Unnester<'p> {
    fn new(pool: &'p mut TokenPool) -> Self {
        Unnester {
            memo: BTreeMap::new(),
            binders: Vec::new(),
            minted: Vec::new(),
            pool,
        }
    }

    /// Flattens `atoms`, appending any minted auxiliary conjuncts right
    /// after the atom whose subscript forced them.
    fn atoms(&mut self, atoms: &[CtfAtom]) -> Vec<FlatAtom> {
        let mut out = Vec::new();
        for a in atoms {
            let world = self.world_of(&a.subscript);
            out.push(FlatAtom {
                var: a.var.clone(),
                world,
                value: a.value.clone(),
            });
            out.append(&mut self.minted);
        }
        out
    }

    fn world_of(&mut self, entries: &[CtfIntervention]) -> World {
        let mut world = World::new();
        for entry in entries {
            match entry {
                CtfIntervention::Fixed(v, val) => {
                    world.insert(v.clone(), val.clone());
                }
                CtfIntervention::Nested(v, inner) => {
                    let w = self.world_of(inner);
                    let key = (v.clone(), w.clone());
                    let token = match self.memo.get(&key) {
                        Some(t) => t.clone(),
                        None => {
                            let t = self.pool.claim(v);
                            self.memo.insert(key, t.clone());
                            self.binders.push((v.clone(), t.clone()));
                            self.minted.push(FlatAtom {
                                var: v.clone(),
                                world: w,
                                value: t.clone(),
                            });
                            t
                        }
                    };
                    world.insert(v.clone(), token);
                }
            }
        }
        world
    }
}

/// Marks every value token the query already uses as taken.
fn reserve_tokens(atoms: &[CtfAtom], pool: &mut TokenPool) {
    fn walk(entries: &[CtfIntervention], pool: &mut TokenPool) {
        for e in entries {
            match e {
                CtfIntervention::Fixed(_, val) => pool.reserve(val),
                CtfIntervention::Nested(_, inner) => walk(inner, pool),
            }
        }
    }
    for a in atoms {
        pool.reserve(&a.value);
        walk(&a.subscript, pool);
    }
}

/// Builds the merged parallel-worlds graph for a set of flat atoms.
///
/// Merging is by structure, in topological order: two copies of a variable
/// collapse exactly when their (already canonicalized) parent sets coincide,
/// so they provably compute the same value in every model. Intervened
/// copies become parentless fixed nodes named by their setting, shared
/// across worlds that agree on it. A surviving mechanism noise or latent
/// confounder with two or more children becomes a bidirected clique and is
/// recorded in `shared`.
fn build_world_graph(g: &Admg, atoms: &[FlatAtom]) -> Result<WorldGraph, GraphError> {
    let mut world_set: BTreeSet<World> = atoms.iter().map(|a| a.world.clone()).collect();
    world_set.insert(World::new());
    let worlds: Vec<World> = world_set.into_iter().collect();

    let mut merged: BTreeMap<(usize, Variable), Variable> = BTreeMap::new();
    let mut fixed: BTreeMap<Variable, String> = BTreeMap::new();
    // Key: (base variable, canonical parents). Copies sharing a key merge;
    // the first world to create a class names its node, and the observed
    // world goes first, so classes reaching it keep the plain name.
    let mut class_of: BTreeMap<(Variable, Vec<Variable>), Variable> = BTreeMap::new();
    let mut nodes: BTreeSet<Variable> = BTreeSet::new();
    let mut directed: BTreeSet<(Variable, Variable)> = BTreeSet::new();

    for v in g.topological_order() {
        for (i, w) in worlds.iter().enumerate() {
            if let Some(val) = w.get(&v) {
                let node = Variable::in_world(v.name(), vec![(v.name().to_string(), val.clone())]);
                fixed.insert(node.clone(), val.clone());
                nodes.insert(node.clone());
                merged.insert((i, v.clone()), node);
            } else {
                let key: Vec<Variable> = g
                    .parents_of(&v)
                    .iter()
                    .map(|p| merged[&(i, p.clone())].clone())
                    .collect();
                let node = class_of
                    .entry((v.clone(), key.clone()))
                    .or_insert_with(|| {
                        if w.is_empty() {
                            Variable::new(v.name())
                        } else {
                            let tag = w
                                .iter()
                                .map(|(var, val)| (var.name().to_string(), val.clone()))
                                .collect();
                            Variable::in_world(v.name(), tag)
                        }
                    })
                    .clone();
                nodes.insert(node.clone());
                for p in key {
                    directed.insert((p, node.clone()));
                }
                merged.insert((i, v.clone()), node);
            }
        }
    }

    // Copies of `v` still governed by their own mechanism (not intervened).
    let surviving = |v: &Variable| -> BTreeSet<Variable> {
        (0..worlds.len())
            .map(|i| merged[&(i, v.clone())].clone())
            .filter(|n| !fixed.contains_key(n))
            .collect()
    };

    let mut bidirected: BTreeSet<(Variable, Variable)> = BTreeSet::new();
    let mut shared: Vec<(String, BTreeSet<Variable>)> = Vec::new();
    let connect = |label: String,
                   members: BTreeSet<Variable>,
                   bidirected: &mut BTreeSet<(Variable, Variable)>,
                   shared: &mut Vec<(String, BTreeSet<Variable>)>| {
        if members.len() < 2 {
            return;
        }
        for a in &members {
            for b in &members {
                if a < b {
                    bidirected.insert((a.clone(), b.clone()));
                }
            }
        }
        shared.push((label, members));
    };
    for v in g.topological_order() {
        connect(
            format!("e({})", v.name()),
            surviving(&v),
            &mut bidirected,
            &mut shared,
        );
    }
    for (a, b) in g.bidirected_edges() {
        let mut members = surviving(a);
        members.extend(surviving(b));
        connect(
            format!("U({},{})", a.name(), b.name()),
            members,
            &mut bidirected,
            &mut shared,
        );
    }

    let graph = Admg::build(
        nodes.into_iter().collect(),
        directed.into_iter().collect(),
        bidirected.into_iter().collect(),
    )?;
    Ok(WorldGraph {
        base: g.clone(),
        graph,
        worlds,
        merged,
        fixed,
        shared,
    })
}

/// The canonical node and asserted value of every flat atom. Two atoms
/// landing on one node must agree; a clash is the probability-zero kind of
/// inconsistency, reported as [`GraphError::InconsistentQuery`].
fn atom_values(
    wg: &WorldGraph,
    atoms: &[FlatAtom],
) -> Result<BTreeMap<Variable, String>, GraphError> {
    let mut values: BTreeMap<Variable, String> = BTreeMap::new();
    for a in atoms {
        let i = wg
            .world_index(&a.world)
            .expect("every atom's world is present by construction");
        let node = wg.merged[&(i, a.var.clone())].clone();
        match values.get(&node) {
            Some(prev) if *prev != a.value => {
                return Err(GraphError::InconsistentQuery(format!(
                    "`{node}` is required to be both `{prev}` and `{}`",
                    a.value
                )));
            }
            _ => {
                values.insert(node, a.value.clone());
            }
        }
    }
    Ok(values)
}

/// Builds the counterfactual graph for `q` and rewrites the query onto it.
///
/// The returned query states the same conjunction over the merged nodes:
/// subscripts are gone (each node's world is in its name), duplicate atoms
/// are dropped, and any nested subscript has been replaced by a minted
/// value token with an auxiliary conjunct added to `gamma` (such a token
/// stands for "whatever value that inner counterfactual takes" and is
/// summed out when the query is compiled). Two atoms forcing one node to
/// two different values are [`GraphError::InconsistentQuery`].
pub fn make_cg(g: &Admg, q: &CtfQuery) -> Result<(WorldGraph, CtfQuery), GraphError> {
    q.validate(g)?;
    let mut pool = TokenPool::new();
    reserve_tokens(&q.gamma, &mut pool);
    reserve_tokens(&q.delta, &mut pool);
    let mut un = Unnester::new(&mut pool);
    let gamma_flat = un.atoms(&q.gamma);
    let delta_flat = un.atoms(&q.delta);
    let all: Vec<FlatAtom> = gamma_flat.iter().chain(&delta_flat).cloned().collect();
    let wg = build_world_graph(g, &all)?;
    atom_values(&wg, &all)?;

    let canonical = |flat: &[FlatAtom]| -> Vec<CtfAtom> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for fa in flat {
            let i = wg.world_index(&fa.world).expect("world present");
            let node = wg.merged[&(i, fa.var.clone())].clone();
            let atom = CtfAtom::new(node, Vec::new(), fa.value.clone());
            if seen.insert(atom.clone()) {
                out.push(atom);
            }
        }
        out
    };
    let rewritten = CtfQuery {
        gamma: canonical(&gamma_flat),
        delta: canonical(&delta_flat),
    };
    Ok((wg, rewritten))
}

// ---------------------------------------------------------------------------
// Identification of counterfactual conjunctions
// ---------------------------------------------------------------------------

/// What one district of the counterfactual graph compiles to.
enum DistrictPlan {
    /// The district traps a variable between worlds; the query is blocked.
    Conflict(WorldConflict),
    /// The district contributes `P(members | do(external inputs))` — with
    /// both sides mapped to their value tokens.
    Kernel {
        x: BTreeMap<Variable, String>,
        y: BTreeMap<Variable, String>,
    },
}

/// Examines one district: every member's mechanism runs inside it, and all
/// external inputs (intervened parents and cross-district parents) must
/// agree on a single setting per base variable.
fn plan_district(
    wg: &WorldGraph,
    district: &BTreeSet<Variable>,
    token: &BTreeMap<Variable, String>,
) -> DistrictPlan {
    // Two surviving copies of one variable in a single district: structural
    // merging failed, so the worlds demonstrably diverge on it.
    let mut members: BTreeMap<Variable, String> = BTreeMap::new();
    for n in district {
        let b = n.base();
        if let Some(prev) = members.get(&b) {
            return DistrictPlan::Conflict(WorldConflict {
                district: district.clone(),
                variable: b,
                values: (prev.clone(), token[n].clone()),
            });
        }
        members.insert(b, token[n].clone());
    }
    // External demands: a fixed parent demands its setting, a parent in
    // another district demands its value token.
    let mut demands: BTreeMap<Variable, String> = BTreeMap::new();
    for n in district {
        for p in wg.graph().parents_of(n) {
            let (b, t) = if let Some(val) = wg.fixed.get(&p) {
                (p.base(), val.clone())
            } else if !district.contains(&p) {
                (p.base(), token[&p].clone())
            } else {
                continue;
            };
            match demands.get(&b) {
                Some(prev) if *prev != t => {
                    return DistrictPlan::Conflict(WorldConflict {
                        district: district.clone(),
                        variable: b,
                        values: (prev.clone(), t),
                    });
                }
                _ => {
                    demands.insert(b, t);
                }
            }
        }
    }
    // A member that is itself demanded: matching settings collapse (the
    // demand is implied by the member's own value — the consistency axiom);
    // different settings clash.
    let mut x = demands;
    let mut y = BTreeMap::new();
    for (b, t) in members {
        if let Some(dt) = x.remove(&b) {
            if dt != t {
                return DistrictPlan::Conflict(WorldConflict {
                    district: district.clone(),
                    variable: b,
                    values: (dt, t),
                });
            }
        }
        y.insert(b, t);
    }
    DistrictPlan::Kernel { x, y }
}

/// Renames the free tokens of a district kernel onto the conjunction's
/// tokens. The kernel was compiled in isolation, so first its own bound
/// tokens move out of the way of everything minted or reserved outside;
/// then the free tokens step through placeholders, so overlapping source
/// and target names cannot capture one another.
fn rebind(mut e: Estimand, map: &BTreeMap<String, String>, pool: &mut TokenPool) -> Estimand {
    let free = e.free_tokens();
    let bound: Vec<String> = e
        .all_tokens()
        .into_iter()
        .filter(|t| !free.contains(t))
        .collect();
    for t in bound {
        let fresh = pool.claim_token(&t);
        if fresh != t {
            e.rename_token(&t, &fresh);
        }
    }
    for (i, from) in map.keys().enumerate() {
        e.rename_token(from, &format!("\u{1}{i}"));
    }
    for (i, to) in map.values().enumerate() {
        e.rename_token(&format!("\u{1}{i}"), to);
    }
    e
}

/// Compiles the conjunction of `atoms` (already validated) into an
/// observational estimand, or reports what blocks it. A value clash
/// surfaces as [`GraphError::InconsistentQuery`] for the caller to turn
/// into the zero estimand or an error as its contract demands.
fn compile(g: &Admg, atoms: &[CtfAtom]) -> Result<IdentResult, GraphError> {
    let mut pool = TokenPool::new();
    reserve_tokens(atoms, &mut pool);
    let mut un = Unnester::new(&mut pool);
    let flat = un.atoms(atoms);
    let mut binders = un.binders;
    let wg = build_world_graph(g, &flat)?;
    let values = atom_values(&wg, &flat)?;

    // A conjunction whose every surviving node is the observed-world copy
    // is a plain observational probability.
    if binders.is_empty() && values.keys().all(|n| !n.is_counterfactual()) {
        let joint: Vec<Atom> = values
            .iter()
            .map(|(v, t)| Atom::new(v.clone(), t.clone()))
            .collect();
        let estimand = simplify(&Estimand::term(joint, Vec::new()), g)?;
        return Ok(IdentResult::Identifiable { estimand });
    }

    // Restrict to the ancestors of the conjunction: the rest of the world
    // graph is summed out wholesale. Every surviving ancestor carries a
    // value token — asserted by the query, or minted here and summed over.
    let targets: BTreeSet<Variable> = values.keys().cloned().collect();
    let an: BTreeSet<Variable> = wg
        .graph()
        .ancestors(&targets)
        .into_iter()
        .filter(|n| !wg.fixed.contains_key(n))
        .collect();
    let mut token = values;
    for n in &an {
        if !token.contains_key(n) {
            let t = pool.claim(&n.base());
            binders.push((n.base(), t.clone()));
            token.insert(n.clone(), t);
        }
    }

    // One kernel per district of the ancestral counterfactual graph,
    // multiplied in the base graph's topological order.
    let induced = wg.graph().induced(&an);
    let mut districts = induced.c_components();
    let position: BTreeMap<Variable, usize> = g
        .topological_order()
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();
    districts.sort_by_key(|d| d.iter().map(|n| position[&n.base()]).min());
    let mut factors = Vec::new();
    for district in districts {
        match plan_district(&wg, &district, &token) {
            DistrictPlan::Conflict(conflict) => {
                return Ok(IdentResult::NotIdentifiable {
                    witness: Witness::Conflict(conflict),
                });
            }
            DistrictPlan::Kernel { x, y } => {
                let xs: BTreeSet<Variable> = x.keys().cloned().collect();
                let ys: BTreeSet<Variable> = y.keys().cloned().collect();
                match identify(g, &xs, &ys)? {
                    IdentResult::NotIdentifiable { witness } => {
                        return Ok(IdentResult::NotIdentifiable { witness });
                    }
                    IdentResult::Identifiable { estimand } => {
                        let map: BTreeMap<String, String> = x
                            .iter()
                            .chain(&y)
                            .map(|(b, t)| (b.name().to_lowercase(), t.clone()))
                            .collect();
                        factors.push(rebind(estimand, &map, &mut pool));
                    }
                }
            }
        }
    }
    let body = if factors.len() == 1 {
        factors.pop().expect("just checked")
    } else {
        Estimand::product(factors)
    };
    let estimand = simplify(&Estimand::sum(binders, body), g)?;
    Ok(IdentResult::Identifiable { estimand })
}

/// Decides identifiability of the counterfactual conjunction `P(gamma)` and
/// compiles the estimand.
///
/// The strategy is the parallel-worlds one: build the merged counterfactual
/// graph ([`make_cg`]), restrict to the conjunction's ancestors, and
/// compile each district separately — a district's members are driven by
/// their own mechanisms once every external input is pinned, so it
/// contributes `P(members | do(inputs))`, identified on the base graph. Any
/// district that traps a variable between two settings yields
/// [`Witness::Conflict`]; a district whose interventional kernel has no
/// observational form yields [`Witness::Hedge`].
///
/// A conjunction that contradicts itself outright (one node, two values) is
/// the impossible event: the result is the literal zero estimand, not an
/// error. On success the estimand's free tokens are exactly the query's
/// value tokens.
pub fn identify_ctf(g: &Admg, gamma: &[CtfAtom]) -> Result<IdentResult, GraphError> {
    let q = CtfQuery::new(gamma.to_vec(), Vec::new())?;
    q.validate(g)?;
    match compile(g, gamma) {
        Err(GraphError::InconsistentQuery(_)) => Ok(IdentResult::Identifiable {
            estimand: Estimand::zero(),
        }),
        other => other,
    }
}

/// Decides identifiability of `P(gamma | delta)` — a counterfactual
/// conjunction conditioned on a counterfactual conjunction — and compiles
/// the estimand as the ratio `P(gamma ∧ delta) / P(delta)`.
///
/// `delta` must be nonempty ([`GraphError::EmptyEvidence`]; use
/// [`identify_ctf`] for unconditional queries). Both halves must be
/// identifiable; a blocked numerator is reported before a blocked
/// denominator. A contradictory `gamma ∧ delta` yields the zero estimand; a
/// contradictory `delta` alone is [`GraphError::InconsistentQuery`], since
/// conditioning on the impossible event is not a probability at all.
/// Whether the evidence has positive probability in a given model is a
/// question for evaluation time, not compilation.
pub fn identify_ctf_conditional(
    g: &Admg,
    gamma: &[CtfAtom],
    delta: &[CtfAtom],
) -> Result<IdentResult, GraphError> {
    if delta.is_empty() {
        return Err(GraphError::EmptyEvidence);
    }
    let q = CtfQuery::new(gamma.to_vec(), delta.to_vec())?;
    q.validate(g)?;
    let denominator = match compile(g, delta) {
        Err(GraphError::InconsistentQuery(_)) => {
            return Err(GraphError::InconsistentQuery(
                "the evidence conjunction is impossible".into(),
            ));
        }
        other => other?,
    };
    let joint: Vec<CtfAtom> = gamma.iter().chain(delta).cloned().collect();
    let numerator = match compile(g, &joint) {
        Err(GraphError::InconsistentQuery(_)) => {
            return Ok(IdentResult::Identifiable {
                estimand: Estimand::zero(),
            });
        }
        other => other?,
    };
    let num = match numerator {
        IdentResult::Identifiable { estimand } => estimand,
        blocked => return Ok(blocked),
    };
    let den = match denominator {
        IdentResult::Identifiable { estimand } => estimand,
        blocked => return Ok(blocked),
    };
    Ok(IdentResult::Identifiable {
        estimand: Estimand::quotient(num, den),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_graph;
    use crate::render::to_text;
    use crate::scm::{eval_estimand_with, random_scm, DiscreteScm, ExogenousVar, Table};

    fn chain() -> Admg {
        Admg::build_named(&["A", "M", "Y"], &[("A", "M"), ("M", "Y")], &[]).unwrap()
    }

    fn bow() -> Admg {
        Admg::build_named(&["A", "Y"], &[("A", "Y")], &[("A", "Y")]).unwrap()
    }

    fn fixture(name: &str) -> Admg {
        let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/graphs/");
        let text = std::fs::read_to_string(format!("{dir}{name}.g"))
            .unwrap_or_else(|e| panic!("fixture `{name}`: {e}"));
        parse_graph(&text).unwrap_or_else(|e| panic!("fixture `{name}`: {e}"))
    }

    fn atom(g: &Admg, var: &str, subs: &[(&str, &str)], value: &str) -> CtfAtom {
        let subscript = subs
            .iter()
            .map(|(v, val)| CtfIntervention::Fixed(g.var(v).unwrap(), val.to_string()))
            .collect();
        CtfAtom::new(g.var(var).unwrap(), subscript, value)
    }

    fn must_estimand(r: IdentResult) -> Estimand {
        match r {
            IdentResult::Identifiable { estimand } => estimand,
            IdentResult::NotIdentifiable { witness } => {
                panic!("unexpectedly blocked: {witness}")
            }
        }
    }

    fn must_conflict(r: IdentResult) -> WorldConflict {
        match r {
            IdentResult::NotIdentifiable {
                witness: Witness::Conflict(c),
            } => c,
            IdentResult::NotIdentifiable { witness } => {
                panic!("expected a world conflict, got {witness}")
            }
            IdentResult::Identifiable { estimand } => {
                panic!("unexpectedly identifiable: {}", to_text(&estimand))
            }
        }
    }

    fn binds(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn atom_display_matches_query_syntax() {
        let g = chain();
        let a = g.var("A").unwrap();
        let m = g.var("M").unwrap();
        let y = g.var("Y").unwrap();
        let nested = CtfAtom::new(
            y.clone(),
            vec![
                CtfIntervention::Nested(
                    m.clone(),
                    vec![CtfIntervention::Fixed(a.clone(), "a0".into())],
                ),
                CtfIntervention::Fixed(a.clone(), "a1".into()),
            ],
            "y",
        );
        // Subscript entries are sorted by variable name.
        assert_eq!(nested.to_string(), "Y[A=a1, M[A=a0]]=y");
        assert!(nested.validate(&g).is_ok());
        let plain = CtfAtom::observed(a.clone(), "a0");
        assert_eq!(plain.to_string(), "A=a0");
        let q = CtfQuery::new(vec![nested], vec![plain]).unwrap();
        assert_eq!(q.to_string(), "P(Y[A=a1, M[A=a0]]=y | A=a0)");
    }

    #[test]
    fn validation_rejects_self_and_duplicate_subscripts() {
        let g = chain();
        let a = g.var("A").unwrap();
        let y = g.var("Y").unwrap();
        let selfed = CtfAtom::new(
            y.clone(),
            vec![CtfIntervention::Fixed(y.clone(), "y".into())],
            "y",
        );
        assert!(matches!(
            selfed.validate(&g),
            Err(GraphError::InconsistentQuery(_))
        ));
        let doubled = CtfAtom::new(
            y.clone(),
            vec![
                CtfIntervention::Fixed(a.clone(), "a0".into()),
                CtfIntervention::Fixed(a.clone(), "a1".into()),
            ],
            "y",
        );
        assert!(matches!(
            doubled.validate(&g),
            Err(GraphError::InconsistentQuery(_))
        ));
        let foreign = CtfAtom::observed(Variable::new("Q"), "q");
        assert!(matches!(
            foreign.validate(&g),
            Err(GraphError::UnknownNode(_))
        ));
    }

    #[test]
    fn atoms_about_one_world_compare_equal() {
        let g = chain();
        let a = g.var("A").unwrap();
        let m = g.var("M").unwrap();
        let y = g.var("Y").unwrap();
        let one = CtfAtom::new(
            y.clone(),
            vec![
                CtfIntervention::Fixed(a.clone(), "a1".into()),
                CtfIntervention::Fixed(m.clone(), "m".into()),
            ],
            "y",
        );
        let two = CtfAtom::new(
            y.clone(),
            vec![
                CtfIntervention::Fixed(m.clone(), "m".into()),
                CtfIntervention::Fixed(a.clone(), "a1".into()),
            ],
            "y",
        );
        assert_eq!(one, two);
        assert_eq!(one.variables(), g.set(&["A", "M", "Y"]).unwrap());
    }

    #[test]
    fn two_worlds_of_the_bow_share_their_disturbances() {
        let g = bow();
        let q = CtfQuery::new(
            vec![atom(&g, "Y", &[("A", "a1")], "y")],
            vec![atom(&g, "A", &[], "a0")],
        )
        .unwrap();
        let (wg, canonical) = make_cg(&g, &q).unwrap();
        assert_eq!(wg.worlds().len(), 2);
        assert!(wg.worlds()[0].is_empty());
        let y_star = Variable::in_world("Y", vec![("A".into(), "a1".into())]);
        let a_star = Variable::in_world("A", vec![("A".into(), "a1".into())]);
        let nodes: Vec<String> = wg.graph().nodes().iter().map(|v| v.to_string()).collect();
        assert_eq!(nodes, ["A", "A@{A=a1}", "Y", "Y@{A=a1}"]);
        // The intervened copy is pinned and parentless; both Y copies keep
        // their own incoming edge.
        assert_eq!(wg.fixed().get(&a_star).map(String::as_str), Some("a1"));
        assert!(wg.graph().parents_of(&a_star).is_empty());
        assert!(wg.graph().parents_of(&y_star).contains(&a_star));
        assert!(wg
            .graph()
            .parents_of(&Variable::new("Y"))
            .contains(&g.var("A").unwrap()));
        // Shared exogenous: the Y mechanism noise and the latent confounder.
        let labels: Vec<&str> = wg
            .shared_exogenous()
            .iter()
            .map(|(l, _)| l.as_str())
            .collect();
        assert_eq!(labels, ["e(Y)", "U(A,Y)"]);
        assert_eq!(
            wg.shared_exogenous()[1].1,
            BTreeSet::from([g.var("A").unwrap(), Variable::new("Y"), y_star.clone()])
        );
        // Everything unfixed hangs together in one district.
        let unfixed: BTreeSet<Variable> = wg
            .graph()
            .nodes()
            .iter()
            .filter(|n| !wg.fixed().contains_key(n))
            .cloned()
            .collect();
        assert_eq!(wg.graph().induced(&unfixed).c_components().len(), 1);
        // The canonical query reads off the merged nodes.
        assert_eq!(canonical.to_string(), "P(Y@{A=a1}=y | A=a0)");
        assert_eq!(wg.canonical(1, &g.var("Y").unwrap()), Some(&y_star));
        assert_eq!(
            wg.canonical(0, &g.var("Y").unwrap()),
            Some(&Variable::new("Y"))
        );
    }

    #[test]
    fn observed_queries_reproduce_the_base_graph() {
        for i in 1..=30 {
            let g = fixture(&format!("g{i}"));
            let q = CtfQuery::new(
                vec![atom(&g, "Y", &[], "y"), atom(&g, "A", &[], "a")],
                Vec::new(),
            )
            .unwrap();
            let (wg, canonical) = make_cg(&g, &q).unwrap();
            assert_eq!(
                wg.graph(),
                &g,
                "g{i}: an observed-world query must not disturb the graph"
            );
            assert_eq!(wg.worlds().len(), 1);
            assert_eq!(canonical.gamma, q.gamma);
        }
    }

    #[test]
    fn copies_unaffected_by_the_intervention_merge() {
        let g = chain();
        // Y cannot affect M, so M under do(Y) is plain M.
        let q = CtfQuery::new(vec![atom(&g, "M", &[("Y", "y0")], "m")], Vec::new()).unwrap();
        let (wg, canonical) = make_cg(&g, &q).unwrap();
        assert_eq!(canonical.gamma[0].to_string(), "M=m");
        // The only unmerged leftover is the pinned Y copy itself.
        assert_eq!(wg.fixed().len(), 1);
        assert!(wg
            .graph()
            .contains(&Variable::in_world("Y", vec![("Y".into(), "y0".into())])));
    }

    #[test]
    fn worlds_are_sorted_with_the_observed_world_first() {
        let g = bow();
        let q = CtfQuery::new(
            vec![
                atom(&g, "Y", &[("A", "a1")], "y1"),
                atom(&g, "Y", &[("A", "a0")], "y0"),
            ],
            Vec::new(),
        )
        .unwrap();
        let (wg, _) = make_cg(&g, &q).unwrap();
        assert_eq!(wg.worlds().len(), 3);
        assert!(wg.worlds()[0].is_empty());
        let w1: Vec<String> = wg.worlds()[1].values().cloned().collect();
        let w2: Vec<String> = wg.worlds()[2].values().cloned().collect();
        assert_eq!((w1, w2), (vec!["a0".to_string()], vec!["a1".to_string()]));
        assert_eq!(wg.world_index(&wg.worlds()[2].clone()), Some(2));
    }

    #[test]
    fn contradictory_conjunctions_compile_to_zero() {
        let g = bow();
        // Outright: one node asserted at two values.
        let r = identify_ctf(&g, &[atom(&g, "Y", &[], "0"), atom(&g, "Y", &[], "1")]).unwrap();
        assert!(must_estimand(r).is_zero());
        // After merging: M under do(Y) is plain M, so the clash only shows
        // once the copies collapse.
        let g2 = chain();
        let clash = [
            atom(&g2, "M", &[("Y", "y0")], "0"),
            atom(&g2, "M", &[], "1"),
        ];
        let r2 = identify_ctf(&g2, &clash).unwrap();
        assert!(must_estimand(r2).is_zero());
        // make_cg reports the same clash as an error: it has no zero to offer.
        let q = CtfQuery::new(clash.to_vec(), Vec::new()).unwrap();
        assert!(matches!(
            make_cg(&g2, &q),
            Err(GraphError::InconsistentQuery(_))
        ));
    }

    #[test]
    fn consistent_duplicates_collapse() {
        let g = chain();
        let single = must_estimand(identify_ctf(&g, &[atom(&g, "Y", &[("A", "a")], "y")]).unwrap());
        let doubled = must_estimand(
            identify_ctf(
                &g,
                &[
                    atom(&g, "Y", &[("A", "a")], "y"),
                    atom(&g, "Y", &[("A", "a")], "y"),
                ],
            )
            .unwrap(),
        );
        assert_eq!(single, doubled);
    }

    #[test]
    fn consistency_turns_the_bow_conjunction_observational() {
        let g = bow();
        // P(Y[A=a]=y ∧ A=a): given A=a, the world "A held at a" is the
        // observed one, so the conjunction is the plain joint.
        let e = must_estimand(
            identify_ctf(
                &g,
                &[atom(&g, "Y", &[("A", "a")], "y"), atom(&g, "A", &[], "a")],
            )
            .unwrap(),
        );
        assert_eq!(to_text(&e), "P(y|a) P(a)");
        for seed in 0..5 {
            let m = random_scm(&g, 4200 + seed, 2);
            let d = m.joint().unwrap();
            let got = eval_estimand_with(&e, &d, &binds(&[("a", "1"), ("y", "0")])).unwrap();
            let want = m
                .ctf_probability(
                    &[atom(&g, "Y", &[("A", "1")], "0"), atom(&g, "A", &[], "1")],
                    &[],
                )
                .unwrap();
            assert!((got - want).abs() < 1e-9, "seed {seed}: {got} vs {want}");
        }
    }

    #[test]
    fn the_joint_over_two_intervened_worlds_is_blocked() {
        // Joint probability of necessity-and-sufficiency shape: Y under
        // a1 and Y under a0 in one conjunction.
        let g = bow();
        let c = must_conflict(
            identify_ctf(
                &g,
                &[
                    atom(&g, "Y", &[("A", "a1")], "y1"),
                    atom(&g, "Y", &[("A", "a0")], "y0"),
                ],
            )
            .unwrap(),
        );
        assert_eq!(c.variable, Variable::new("Y"));
        assert_eq!(
            c.district,
            BTreeSet::from([
                Variable::in_world("Y", vec![("A".into(), "a0".into())]),
                Variable::in_world("Y", vec![("A".into(), "a1".into())]),
            ])
        );
        // The latent arc is not what blocks it: the mechanism noise alone
        // already entangles the two worlds.
        let markovian = Admg::build_named(&["A", "Y"], &[("A", "Y")], &[]).unwrap();
        let c2 = must_conflict(
            identify_ctf(
                &markovian,
                &[
                    atom(&markovian, "Y", &[("A", "a1")], "y1"),
                    atom(&markovian, "Y", &[("A", "a0")], "y0"),
                ],
            )
            .unwrap(),
        );
        assert_eq!(c2.variable, Variable::new("Y"));
    }

    #[test]
    fn the_zigzag_conjunction_is_blocked_on_the_crossworld_chain() {
        let g = fixture("fig3c");
        let c = must_conflict(
            identify_ctf(
                &g,
                &[
                    atom(&g, "Y", &[("A", "a")], "y"),
                    atom(&g, "W1", &[], "w1"),
                    atom(&g, "W2", &[], "w2"),
                    atom(&g, "Z", &[("X", "x'")], "z"),
                ],
            )
            .unwrap(),
        );
        // The bidirected chain drags all four atoms into one district, which
        // then needs X both free and held at x'.
        assert_eq!(c.variable, Variable::new("X"));
        assert_eq!(c.values, ("x".to_string(), "x'".to_string()));
        assert_eq!(c.district.len(), 4);
    }

    #[test]
    fn crossworld_conditionals_match_the_catalog() {
        // The bow: the worlds collide on A itself.
        let g31 = fixture("g31");
        let c = must_conflict(
            identify_ctf_conditional(
                &g31,
                &[atom(&g31, "Y", &[("A", "a1")], "y")],
                &[atom(&g31, "A", &[], "a0")],
            )
            .unwrap(),
        );
        assert_eq!(c.variable, Variable::new("A"));
        assert_eq!(c.values, ("a1".to_string(), "a0".to_string()));
        // Observed confounding instead: identifiable, in exactly the
        // adjustment-then-reweigh shape.
        let g32 = fixture("g32");
        let e = must_estimand(
            identify_ctf_conditional(
                &g32,
                &[atom(&g32, "Y", &[("A", "a1")], "y")],
                &[atom(&g32, "A", &[], "a0")],
            )
            .unwrap(),
        );
        assert_eq!(to_text(&e), "(sum_{c} P(c) P(a0|c) P(y|a1,c)) / P(a0)");
    }

    #[test]
    fn matching_settings_collapse_by_consistency() {
        let g = bow();
        let e = must_estimand(
            identify_ctf_conditional(
                &g,
                &[atom(&g, "Y", &[("A", "a")], "y")],
                &[atom(&g, "A", &[], "a")],
            )
            .unwrap(),
        );
        for seed in 0..10 {
            let m = random_scm(&g, 6400 + seed, 2);
            let d = m.joint().unwrap();
            let got = eval_estimand_with(&e, &d, &binds(&[("a", "1"), ("y", "0")])).unwrap();
            let want = m
                .ctf_probability(
                    &[atom(&g, "Y", &[("A", "1")], "0")],
                    &[atom(&g, "A", &[], "1")],
                )
                .unwrap();
            assert!((got - want).abs() < 1e-9, "seed {seed}: {got} vs {want}");
        }
    }

    #[test]
    fn catalog_conditionals_match_the_oracle() {
        for name in ["g32", "g33", "g34"] {
            let g = fixture(name);
            let e = must_estimand(
                identify_ctf_conditional(
                    &g,
                    &[atom(&g, "Y", &[("A", "a1")], "y")],
                    &[atom(&g, "A", &[], "a0")],
                )
                .unwrap(),
            );
            for seed in 0..20 {
                let m = random_scm(&g, 7000 + seed, 2);
                let d = m.joint().unwrap();
                let got =
                    eval_estimand_with(&e, &d, &binds(&[("a1", "1"), ("a0", "0"), ("y", "1")]))
                        .unwrap();
                let want = m
                    .ctf_probability(
                        &[atom(&g, "Y", &[("A", "1")], "1")],
                        &[atom(&g, "A", &[], "0")],
                    )
                    .unwrap();
                assert!(
                    (got - want).abs() < 1e-9,
                    "{name} seed {seed}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn degenerate_conjunctions_reduce_to_the_interventional_case() {
        for i in 1..=30u64 {
            let name = format!("g{i}");
            let g = fixture(&name);
            let ctf = identify_ctf(&g, &[atom(&g, "Y", &[("A", "a")], "y")]).unwrap();
            let plain = identify(&g, &g.set(&["A"]).unwrap(), &g.set(&["Y"]).unwrap()).unwrap();
            assert_eq!(
                ctf.is_identifiable(),
                plain.is_identifiable(),
                "{name}: the conjunction engine and the interventional engine disagree"
            );
            if let (Some(ce), Some(pe)) = (ctf.estimand(), plain.estimand()) {
                let m = random_scm(&g, 7500 + i, 2);
                let d = m.joint().unwrap();
                let env = binds(&[("a", "1"), ("y", "0")]);
                let got = eval_estimand_with(ce, &d, &env).unwrap();
                let want = eval_estimand_with(pe, &d, &env).unwrap();
                assert!((got - want).abs() < 1e-9, "{name}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn conditional_counterfactuals_match_abduction_on_the_chain() {
        let g = chain();
        let e = must_estimand(
            identify_ctf_conditional(
                &g,
                &[atom(&g, "Y", &[("A", "a1")], "y")],
                &[atom(&g, "A", &[], "a0")],
            )
            .unwrap(),
        );
        for seed in 0..20 {
            let m = random_scm(&g, 8100 + seed, 2);
            let d = m.joint().unwrap();
            let got = eval_estimand_with(&e, &d, &binds(&[("a1", "1"), ("a0", "0"), ("y", "1")]))
                .unwrap();
            let want = m
                .ctf_probability(
                    &[atom(&g, "Y", &[("A", "1")], "1")],
                    &[atom(&g, "A", &[], "0")],
                )
                .unwrap();
            assert!((got - want).abs() < 1e-9, "seed {seed}: {got} vs {want}");
        }
        // Larger domains keep the check honest.
        for seed in 0..3 {
            let m = random_scm(&g, 8200 + seed, 3);
            let d = m.joint().unwrap();
            let got = eval_estimand_with(&e, &d, &binds(&[("a1", "2"), ("a0", "0"), ("y", "1")]))
                .unwrap();
            let want = m
                .ctf_probability(
                    &[atom(&g, "Y", &[("A", "2")], "1")],
                    &[atom(&g, "A", &[], "0")],
                )
                .unwrap();
            assert!((got - want).abs() < 1e-9, "seed {seed}: {got} vs {want}");
        }
    }

    #[test]
    fn a_model_pair_witnesses_the_bow_conditional() {
        let g = bow();
        // Two models over one shared exogenous U: in the first, Y copies U
        // and ignores A; in the second, Y copies A. Both set A = U, so the
        // observational joints coincide — but "had A been 1" differs.
        let build = |y_follows_a: bool| -> DiscreteScm {
            let u = ExogenousVar {
                name: "U".into(),
                domain: vec!["0".into(), "1".into()],
                prior: vec![0.5, 0.5],
            };
            let point = |val: &str| -> Vec<f64> {
                if val == "0" {
                    vec![1.0, 0.0]
                } else {
                    vec![0.0, 1.0]
                }
            };
            let mut tables = BTreeMap::new();
            tables.insert(
                g.var("A").unwrap(),
                Table {
                    parents: vec![],
                    exo_parents: vec!["U".into()],
                    rows: BTreeMap::from([
                        (vec!["0".to_string()], point("0")),
                        (vec!["1".to_string()], point("1")),
                    ]),
                },
            );
            let mut rows = BTreeMap::new();
            for a in ["0", "1"] {
                for u_val in ["0", "1"] {
                    let y = if y_follows_a { a } else { u_val };
                    rows.insert(vec![a.to_string(), u_val.to_string()], point(y));
                }
            }
            tables.insert(
                g.var("Y").unwrap(),
                Table {
                    parents: vec!["A".into()],
                    exo_parents: vec!["U".into()],
                    rows,
                },
            );
            let domains = BTreeMap::from([
                (g.var("A").unwrap(), vec!["0".to_string(), "1".to_string()]),
                (g.var("Y").unwrap(), vec!["0".to_string(), "1".to_string()]),
            ]);
            DiscreteScm::new(g.clone(), domains, vec![u], tables).unwrap()
        };
        let m1 = build(false);
        let m2 = build(true);
        let d1 = m1.joint().unwrap();
        let d2 = m2.joint().unwrap();
        for a in ["0", "1"] {
            for y in ["0", "1"] {
                let point = BTreeMap::from([
                    (g.var("A").unwrap(), a.to_string()),
                    (g.var("Y").unwrap(), y.to_string()),
                ]);
                assert!(
                    (d1.mass(&point).unwrap() - d2.mass(&point).unwrap()).abs() < 1e-9,
                    "observational joints must agree at ({a},{y})"
                );
            }
        }
        let gamma = [atom(&g, "Y", &[("A", "1")], "1")];
        let delta = [atom(&g, "A", &[], "0")];
        let v1 = m1.ctf_probability(&gamma, &delta).unwrap();
        let v2 = m2.ctf_probability(&gamma, &delta).unwrap();
        assert!(
            (v1 - v2).abs() >= 0.005,
            "the pair must split the counterfactual: {v1} vs {v2}"
        );
    }

    #[test]
    fn nested_subscripts_unnest_into_bound_sums() {
        let g = chain();
        let nested = |a_val: &str| {
            CtfIntervention::Nested(
                g.var("M").unwrap(),
                vec![CtfIntervention::Fixed(g.var("A").unwrap(), a_val.into())],
            )
        };
        let e = must_estimand(
            identify_ctf(
                &g,
                &[CtfAtom::new(g.var("Y").unwrap(), vec![nested("a0")], "y")],
            )
            .unwrap(),
        );
        assert_eq!(to_text(&e), "sum_{m} P(m|a0) P(y|m)");
        for seed in 0..10 {
            let m = random_scm(&g, 8800 + seed, 2);
            let d = m.joint().unwrap();
            let got = eval_estimand_with(&e, &d, &binds(&[("a0", "0"), ("y", "1")])).unwrap();
            let want = m
                .ctf_probability(
                    &[CtfAtom::new(g.var("Y").unwrap(), vec![nested("0")], "1")],
                    &[],
                )
                .unwrap();
            assert!((got - want).abs() < 1e-9, "seed {seed}: {got} vs {want}");
        }
    }

    #[test]
    fn estimand_free_tokens_are_the_query_tokens() {
        let g32 = fixture("g32");
        let e = must_estimand(
            identify_ctf(
                &g32,
                &[
                    atom(&g32, "Y", &[("A", "a1")], "y"),
                    atom(&g32, "A", &[], "a0"),
                ],
            )
            .unwrap(),
        );
        assert_eq!(
            e.free_tokens(),
            BTreeSet::from(["a0".to_string(), "a1".to_string(), "y".to_string()])
        );
    }

    #[test]
    fn conditionals_require_evidence() {
        let g = bow();
        assert!(matches!(
            identify_ctf_conditional(&g, &[atom(&g, "Y", &[("A", "a")], "y")], &[]),
            Err(GraphError::EmptyEvidence)
        ));
        // Impossible evidence is an error, not a zero: conditioning on it
        // is not a probability at all.
        assert!(matches!(
            identify_ctf_conditional(
                &g,
                &[atom(&g, "Y", &[("A", "a")], "y")],
                &[atom(&g, "A", &[], "0"), atom(&g, "A", &[], "1")],
            ),
            Err(GraphError::InconsistentQuery(_))
        ));
    }
}
