//! Closed-form graphical identification criteria.
//!
//! These are the classical special-purpose routes to an interventional
//! estimand — each one a recognizable pattern with a ready-made formula:
//!
//! * **back-door adjustment** (Pearl): condition on a set that blocks every
//!   back-door path — [`is_backdoor_admissible`], [`enumerate_backdoor_sets`],
//!   [`backdoor_estimand`];
//! * **parent adjustment**: the special case of adjusting for all parents of
//!   the treatment — [`parents_estimand`];
//! * **front-door adjustment** (Pearl): route the effect through a shielded
//!   mediator set — [`is_frontdoor_admissible`], [`frontdoor_estimand`];
//! * **truncated factorization** (the g-formula) for graphs without latent
//!   confounding — [`truncated_estimand`];
//! * **confounded-component factorization** (Tian & Pearl): every c-component
//!   contributes an observable kernel — [`c_factor`],
//!   [`tian_effect_estimand`];
//! * **instrument detection**: exogenous-variation candidates for when
//!   adjustment fails — [`find_instruments`].
//!
//! Every estimand builder returns an [`Estimand`] over value tokens: the
//! treatment and outcome keep the caller's tokens, and every marginalized
//! variable gets a fresh lowercase token bound by the enclosing sum.

use std::collections::BTreeSet;

use crate::error::GraphError;
use crate::estimand::{Atom, Estimand};
use crate::graph::{Admg, Variable};

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Why an adjustment set fails its criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ViolationReason {
    /// A back-door path from treatment to outcome stays open.
    OpenBackdoor,
    /// The candidate set contains a descendant of the treatment.
    DescendantInSet,
    /// A directed treatment-to-outcome path avoids the mediator set.
    UncoveredCausalPath,
}

impl std::fmt::Display for ViolationReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ViolationReason::OpenBackdoor => "open-backdoor",
            ViolationReason::DescendantInSet => "descendant-in-set",
            ViolationReason::UncoveredCausalPath => "uncovered-causal-path",
        })
    }
}

/// One concrete witness that an adjustment criterion fails: a rendered path
/// (`"A <- W <- C2 -> Y"`) plus the clause it violates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// The offending path, rendered with `->`, `<-`, and `<->` links.
    pub path: String,
    /// The violated clause.
    pub reason: ViolationReason,
}

/// The verdict on a candidate adjustment set, with a complete list of
/// witnesses when it fails. `admissible` holds exactly when `violations`
/// is empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjustmentReport {
    /// Whether the candidate satisfies every clause of the criterion.
    pub admissible: bool,
    /// Every witnessed violation (empty iff admissible).
    pub violations: Vec<Violation>,
}

impl AdjustmentReport {
    fn from_violations(mut violations: Vec<Violation>) -> Self {
        violations.sort_by(|a, b| (&a.reason, &a.path).cmp(&(&b.reason, &b.path)));
        violations.dedup();
        AdjustmentReport {
            admissible: violations.is_empty(),
            violations,
        }
    }
}

/// One admissible back-door adjustment set, flagged if no strict subset of
/// it is also admissible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackdoorSet {
    /// The adjustment set.
    pub set: BTreeSet<Variable>,
    /// Whether the set is minimal (no admissible strict subset exists).
    pub minimal: bool,
}

/// An instrumental-variable candidate: `instrument` covaries with the
/// treatment given `conditioning`, yet reaches the outcome only through it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instrument {
    /// The instrument.
    pub instrument: Variable,
    /// The conditioning set under which both instrument conditions hold.
    pub conditioning: BTreeSet<Variable>,
}

/// Which edges to sever when testing that an instrument is separated from
/// the outcome "except through the treatment".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstrumentCut {
    /// Remove the treatment's outgoing edges, so any remaining
    /// instrument–outcome connection bypasses the treatment's causal
    /// influence. This is the reading under which the classical examples
    /// come out as instruments, and the default.
    TreatmentOutgoing,
    /// Remove the treatment's incoming edges (directed and bidirected), the
    /// literal overbar-mutilation convention. Kept selectable because texts
    /// state the condition this way; on graphs where the treatment is
    /// confounded with the outcome the two readings can disagree.
    TreatmentIncoming,
}

// ---------------------------------------------------------------------------
// Shared validation and token allocation
// ---------------------------------------------------------------------------

fn check_node(g: &Admg, v: &Variable) -> Result<(), GraphError> {
    if g.contains(v) {
        Ok(())
    } else {
        Err(GraphError::UnknownNode(v.to_string()))
    }
}

fn check_query(g: &Admg, a: &Variable, y: &Variable) -> Result<(), GraphError> {
    check_node(g, a)?;
    check_node(g, y)?;
    if a == y {
        return Err(GraphError::DegenerateQuery(a.to_string()));
    }
    Ok(())
}

fn check_disjoint(
    pair: (&Variable, &Variable),
    set: &BTreeSet<Variable>,
) -> Result<(), GraphError> {
    for v in [pair.0, pair.1] {
        if set.contains(v) {
            return Err(GraphError::OverlappingSets(v.to_string()));
        }
    }
    Ok(())
}

/// Hands out value tokens: the lowercased variable name, primed until fresh.
pub(crate) struct TokenPool {
    used: BTreeSet<String>,
}

impl TokenPool {
    pub(crate) fn new() -> Self {
        TokenPool {
            used: BTreeSet::new(),
        }
    }

    /// Marks a token as taken (callers reserve the query's own tokens).
    pub(crate) fn reserve(&mut self, token: &str) {
        self.used.insert(token.to_string());
    }

    /// A fresh token spelled after `v`.
    pub(crate) fn claim(&mut self, v: &Variable) -> String {
        self.claim_token(&v.name().to_lowercase())
    }

    /// A fresh token starting from `base` (used for primed copies like `a'`).
    pub(crate) fn claim_token(&mut self, base: &str) -> String {
        let mut token = base.to_string();
        while !self.used.insert(token.clone()) {
            token.push('\'');
        }
        token
    }
}

// ---------------------------------------------------------------------------
// Path machinery (witness rendering)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Link {
    Forward,
    Backward,
    Bidirected,
}

fn render_path(nodes: &[Variable], links: &[Link]) -> String {
    let mut out = nodes[0].to_string();
    for (i, link) in links.iter().enumerate() {
        out.push_str(match link {
            Link::Forward => " -> ",
            Link::Backward => " <- ",
            Link::Bidirected => " <-> ",
        });
        out.push_str(&nodes[i + 1].to_string());
    }
    out
}

/// Whether the walk `nodes`/`links` is m-connecting given `z`: every interior
/// collider has a (reflexive) descendant in `z`, every interior non-collider
/// stays outside `z`.
fn path_open(g: &Admg, nodes: &[Variable], links: &[Link], z: &BTreeSet<Variable>) -> bool {
    for i in 1..nodes.len() - 1 {
        let head_left = matches!(links[i - 1], Link::Forward | Link::Bidirected);
        let head_right = matches!(links[i], Link::Backward | Link::Bidirected);
        if head_left && head_right {
            let seed = BTreeSet::from([nodes[i].clone()]);
            if g.descendants(&seed).intersection(z).next().is_none() {
                return false;
            }
        } else if z.contains(&nodes[i]) {
            return false;
        }
    }
    true
}

/// Every open simple path in `g` from `from` to (the first contact with)
/// `targets`, given `z`, rendered deterministically. Callers choose the
/// graph: passing a mutilated graph restricts which paths exist at all.
fn open_paths(
    g: &Admg,
    from: &Variable,
    targets: &BTreeSet<Variable>,
    z: &BTreeSet<Variable>,
) -> Vec<String> {
    fn walk(
        g: &Admg,
        targets: &BTreeSet<Variable>,
        z: &BTreeSet<Variable>,
        nodes: &mut Vec<Variable>,
        links: &mut Vec<Link>,
        found: &mut BTreeSet<String>,
    ) {
        let cur = nodes.last().expect("walk starts from a node").clone();
        let mut steps: Vec<(Variable, Link)> = Vec::new();
        steps.extend(g.children_of(&cur).into_iter().map(|c| (c, Link::Forward)));
        steps.extend(g.parents_of(&cur).into_iter().map(|p| (p, Link::Backward)));
        steps.extend(
            g.bidirected_neighbors(&cur)
                .into_iter()
                .map(|b| (b, Link::Bidirected)),
        );
        steps.sort();
        for (to, link) in steps {
            if nodes.contains(&to) {
                continue;
            }
            nodes.push(to.clone());
            links.push(link);
            if targets.contains(&to) {
                if path_open(g, nodes, links, z) {
                    found.insert(render_path(nodes, links));
                }
            } else {
                walk(g, targets, z, nodes, links, found);
            }
            nodes.pop();
            links.pop();
        }
    }

    let mut nodes = vec![from.clone()];
    let mut links = Vec::new();
    let mut found = BTreeSet::new();
    walk(g, targets, z, &mut nodes, &mut links, &mut found);
    found.into_iter().collect()
}

/// The lexicographically first directed path `from -> ... -> to`, rendered.
fn directed_witness(g: &Admg, from: &Variable, to: &Variable) -> Option<String> {
    fn dfs(g: &Admg, to: &Variable, path: &mut Vec<Variable>) -> bool {
        let cur = path.last().expect("path starts nonempty").clone();
        if cur == *to {
            return true;
        }
        for child in g.children_of(&cur) {
            if path.contains(&child) {
                continue;
            }
            path.push(child);
            if dfs(g, to, path) {
                return true;
            }
            path.pop();
        }
        false
    }

    let mut path = vec![from.clone()];
    if dfs(g, to, &mut path) {
        let names: Vec<String> = path.iter().map(|v| v.to_string()).collect();
        Some(names.join(" -> "))
    } else {
        None
    }
}

/// All subsets of `pool` with at most `max` members, in (size, lexicographic)
/// order. `pool` must be sorted.
fn subsets_up_to(pool: &[Variable], max: usize) -> Vec<BTreeSet<Variable>> {
    fn combos(
        pool: &[Variable],
        size: usize,
        start: usize,
        cur: &mut Vec<Variable>,
        out: &mut Vec<BTreeSet<Variable>>,
    ) {
        if cur.len() == size {
            out.push(cur.iter().cloned().collect());
            return;
        }
        for i in start..pool.len() {
            cur.push(pool[i].clone());
            combos(pool, size, i + 1, cur, out);
            cur.pop();
        }
    }

    let mut out = Vec::new();
    let mut cur = Vec::new();
    for size in 0..=max.min(pool.len()) {
        combos(pool, size, 0, &mut cur, &mut out);
    }
    out
}

// ---------------------------------------------------------------------------
// Back-door adjustment
// ---------------------------------------------------------------------------

/// Checks Pearl's back-door criterion for adjusting on `c` when estimating
/// the effect of `a` on `y`: (1) `c` blocks every back-door path from `a`
/// to `y`, and (2) `c` contains no descendant of `a`. The report carries a
/// rendered witness path for every violated clause.
pub fn is_backdoor_admissible(
    g: &Admg,
    a: &Variable,
    y: &Variable,
    c: &BTreeSet<Variable>,
) -> Result<AdjustmentReport, GraphError> {
    check_query(g, a, y)?;
    for v in c {
        check_node(g, v)?;
    }
    check_disjoint((a, y), c)?;

    let mut violations = Vec::new();

    // Clause 2: no member of `c` descends from the treatment.
    let below = g.descendants(&BTreeSet::from([a.clone()]));
    for v in c {
        if below.contains(v) {
            let path = directed_witness(g, a, v).expect("descendants are reachable");
            violations.push(Violation {
                path,
                reason: ViolationReason::DescendantInSet,
            });
        }
    }

    // Clause 1: with the treatment's outgoing edges severed, only back-door
    // paths remain, and `c` must block them all.
    let backdoors_only = g.mutilate(&BTreeSet::new(), &BTreeSet::from([a.clone()]));
    if !backdoors_only.m_separated(
        &BTreeSet::from([a.clone()]),
        &BTreeSet::from([y.clone()]),
        c,
    )? {
        for path in open_paths(&backdoors_only, a, &BTreeSet::from([y.clone()]), c) {
            violations.push(Violation {
                path,
                reason: ViolationReason::OpenBackdoor,
            });
        }
    }

    Ok(AdjustmentReport::from_violations(violations))
}

/// Enumerates every back-door-admissible adjustment set over the observed
/// nodes (excluding `a` and `y`) with at most `max_size` members, in
/// (size, lexicographic) order. A set is flagged `minimal` when none of its
/// strict subsets is admissible. Exhaustive search — intended for the
/// desk-scale graphs this crate works on.
pub fn enumerate_backdoor_sets(
    g: &Admg,
    a: &Variable,
    y: &Variable,
    max_size: usize,
) -> Result<Vec<BackdoorSet>, GraphError> {
    check_query(g, a, y)?;
    let pool: Vec<Variable> = g
        .nodes()
        .iter()
        .filter(|v| *v != a && *v != y)
        .cloned()
        .collect();
    let mut admissible = Vec::new();
    for cand in subsets_up_to(&pool, max_size) {
        if is_backdoor_admissible(g, a, y, &cand)?.admissible {
            admissible.push(cand);
        }
    }
    Ok(admissible
        .iter()
        .map(|set| BackdoorSet {
            set: set.clone(),
            minimal: !admissible
                .iter()
                .any(|other| other != set && other.is_subset(set)),
        })
        .collect())
}

/// The back-door adjustment formula `Σ_c P(y|a,c) P(c)`, degenerating to
/// `P(y|a)` for an empty set. The caller is responsible for having checked
/// admissibility.
pub fn backdoor_estimand(a: &Atom, y: &Atom, c: &BTreeSet<Variable>) -> Estimand {
    let mut pool = TokenPool::new();
    pool.reserve(&a.value);
    pool.reserve(&y.value);
    let c_atoms: Vec<Atom> = c
        .iter()
        .map(|v| Atom::new(v.clone(), pool.claim(v)))
        .collect();
    if c_atoms.is_empty() {
        return Estimand::term(vec![y.clone()], vec![a.clone()]);
    }
    let bound: Vec<(Variable, String)> = c_atoms
        .iter()
        .map(|at| (at.var.clone(), at.value.clone()))
        .collect();
    let mut outcome_given = vec![a.clone()];
    outcome_given.extend(c_atoms.iter().cloned());
    Estimand::sum(
        bound,
        Estimand::product(vec![
            Estimand::term(vec![y.clone()], outcome_given),
            Estimand::term(c_atoms, Vec::new()),
        ]),
    )
}

/// Adjustment for the treatment's parent set: `Σ_{pa} P(y|a,pa) P(pa)`.
/// Returns `None` when the treatment touches a bidirected edge — then one
/// of its "parents" is latent and the adjustment is unavailable.
pub fn parents_estimand(g: &Admg, a: &Atom, y: &Atom) -> Result<Option<Estimand>, GraphError> {
    check_query(g, &a.var, &y.var)?;
    if !g.bidirected_neighbors(&a.var).is_empty() {
        return Ok(None);
    }
    let parents = g.parents_of(&a.var);
    Ok(Some(backdoor_estimand(a, y, &parents)))
}

// ---------------------------------------------------------------------------
// Front-door adjustment
// ---------------------------------------------------------------------------

/// Checks Pearl's front-door criterion for the mediator set `m`:
/// (1) every directed path from `a` to `y` passes through `m`,
/// (2) no back-door path from `a` to `m` is open, and
/// (3) every back-door path from `m` to `y` is blocked by `a`.
pub fn is_frontdoor_admissible(
    g: &Admg,
    a: &Variable,
    y: &Variable,
    m: &BTreeSet<Variable>,
) -> Result<AdjustmentReport, GraphError> {
    check_query(g, a, y)?;
    for v in m {
        check_node(g, v)?;
    }
    check_disjoint((a, y), m)?;

    let mut violations = Vec::new();
    let a_set = BTreeSet::from([a.clone()]);
    let y_set = BTreeSet::from([y.clone()]);

    // Clause 1: the mediators intercept every directed route.
    for path in g.proper_causal_paths(&a_set, &y_set)? {
        let interior = &path[1..path.len() - 1];
        if !interior.iter().any(|v| m.contains(v)) {
            let names: Vec<String> = path.iter().map(|v| v.to_string()).collect();
            violations.push(Violation {
                path: names.join(" -> "),
                reason: ViolationReason::UncoveredCausalPath,
            });
        }
    }

    // Clause 2: the treatment has no open back-door path to the mediators.
    let a_cut = g.mutilate(&BTreeSet::new(), &a_set);
    if !a_cut.m_separated(&a_set, m, &BTreeSet::new())? {
        for path in open_paths(&a_cut, a, m, &BTreeSet::new()) {
            violations.push(Violation {
                path,
                reason: ViolationReason::OpenBackdoor,
            });
        }
    }

    // Clause 3: the treatment blocks every back-door path mediator → outcome.
    let m_cut = g.mutilate(&BTreeSet::new(), m);
    if !m_cut.m_separated(m, &y_set, &a_set)? {
        for v in m {
            for path in open_paths(&m_cut, v, &y_set, &a_set) {
                violations.push(Violation {
                    path,
                    reason: ViolationReason::OpenBackdoor,
                });
            }
        }
    }

    Ok(AdjustmentReport::from_violations(violations))
}

/// The front-door formula `Σ_m P(m|a) Σ_{a'} P(y|m,a') P(a')`, with the
/// mediator set kept as one joint kernel. The caller is responsible for
/// having checked admissibility.
pub fn frontdoor_estimand(a: &Atom, y: &Atom, m: &BTreeSet<Variable>) -> Estimand {
    let mut pool = TokenPool::new();
    pool.reserve(&a.value);
    pool.reserve(&y.value);
    let m_atoms: Vec<Atom> = m
        .iter()
        .map(|v| Atom::new(v.clone(), pool.claim(v)))
        .collect();
    let a_prime = Atom::new(a.var.clone(), pool.claim_token(&a.value));

    let mut outcome_given = m_atoms.clone();
    outcome_given.push(a_prime.clone());
    let inner = Estimand::sum(
        vec![(a_prime.var.clone(), a_prime.value.clone())],
        Estimand::product(vec![
            Estimand::term(vec![y.clone()], outcome_given),
            Estimand::term(vec![a_prime], Vec::new()),
        ]),
    );
    if m_atoms.is_empty() {
        return inner;
    }
    let bound: Vec<(Variable, String)> = m_atoms
        .iter()
        .map(|at| (at.var.clone(), at.value.clone()))
        .collect();
    Estimand::sum(
        bound,
        Estimand::product(vec![Estimand::term(m_atoms, vec![a.clone()]), inner]),
    )
}

// ---------------------------------------------------------------------------
// Truncated factorization (the g-formula)
// ---------------------------------------------------------------------------

/// The truncated factorization for Markovian graphs: drop the treatment's
/// factor from the chain factorization and marginalize everything but the
/// outcome, `Σ_{v∖{a,y}} Π_{v≠a} P(v | pa(v))`.
pub fn truncated_estimand(g: &Admg, a: &Atom, y: &Atom) -> Result<Estimand, GraphError> {
    check_query(g, &a.var, &y.var)?;
    if let Some((u, v)) = g.bidirected_edges().iter().next() {
        return Err(GraphError::NotMarkovian(u.to_string(), v.to_string()));
    }

    let mut pool = TokenPool::new();
    pool.reserve(&a.value);
    pool.reserve(&y.value);
    let token = |v: &Variable, pool: &mut TokenPool| -> String {
        if *v == a.var {
            a.value.clone()
        } else if *v == y.var {
            y.value.clone()
        } else {
            pool.claim(v)
        }
    };

    // Deepest node first, names breaking ties: each factor then conditions
    // only on later-listed (shallower) variables, matching the order a
    // chain-rule expansion reads in.
    let depth = g.longest_path_depths();
    let mut ordered: Vec<Variable> = g.nodes().iter().cloned().collect();
    ordered.sort_by(|u, v| {
        let du = depth.get(u).copied().unwrap_or(0);
        let dv = depth.get(v).copied().unwrap_or(0);
        dv.cmp(&du).then_with(|| u.cmp(v))
    });

    let mut tokens = std::collections::BTreeMap::new();
    for v in &ordered {
        let t = token(v, &mut pool);
        tokens.insert(v.clone(), t);
    }

    let mut factors = Vec::new();
    let mut bound = Vec::new();
    for v in &ordered {
        if *v != a.var && *v != y.var {
            bound.push((v.clone(), tokens[v].clone()));
        }
        if *v == a.var {
            continue;
        }
        let given: Vec<Atom> = g
            .parents_of(v)
            .iter()
            .map(|p| Atom::new(p.clone(), tokens[p].clone()))
            .collect();
        factors.push(Estimand::term(
            vec![Atom::new(v.clone(), tokens[v].clone())],
            given,
        ));
    }
    Ok(Estimand::sum(bound, Estimand::product(factors)))
}

// ---------------------------------------------------------------------------
// C-component factorization
// ---------------------------------------------------------------------------

/// The c-factor of `component` relative to a topological `order` over all
/// nodes: `Q = Π_{v ∈ component} P(v | predecessors of v in order)`. The
/// component must be a union of whole c-components (districts) — the
/// factorization `P(v) = Π_S Q[S]` only cuts along district boundaries.
pub fn c_factor(
    g: &Admg,
    component: &BTreeSet<Variable>,
    order: &[Variable],
) -> Result<Estimand, GraphError> {
    for v in component.iter().chain(order) {
        check_node(g, v)?;
    }
    let mut seen = BTreeSet::new();
    for v in order {
        if !seen.insert(v.clone()) {
            return Err(GraphError::NotTopological(format!(
                "`{v}` appears twice in the order"
            )));
        }
    }
    if let Some(missing) = g.nodes().iter().find(|v| !seen.contains(v)) {
        return Err(GraphError::NotTopological(format!(
            "`{missing}` is missing from the order"
        )));
    }
    let position: std::collections::BTreeMap<&Variable, usize> =
        order.iter().enumerate().map(|(i, v)| (v, i)).collect();
    for (u, v) in g.directed_edges() {
        if position[u] > position[v] {
            return Err(GraphError::NotTopological(format!(
                "`{u}` must come before `{v}`"
            )));
        }
    }
    for district in g.c_components() {
        let inside = district.intersection(component).count();
        if inside != 0 && inside != district.len() {
            let names: Vec<String> = component.iter().map(|v| v.to_string()).collect();
            return Err(GraphError::NotAComponent(names.join(", ")));
        }
    }

    let mut pool = TokenPool::new();
    let tokens: Vec<Atom> = order
        .iter()
        .map(|v| Atom::new(v.clone(), pool.claim(v)))
        .collect();
    let mut factors = Vec::new();
    for (i, v) in order.iter().enumerate() {
        if component.contains(v) {
            factors.push(Estimand::term(
                vec![tokens[i].clone()],
                tokens[..i].to_vec(),
            ));
        }
    }
    Ok(Estimand::product(factors))
}

/// Tian's estimand for a single intervention: restrict to the ancestors of
/// the outcome, split off the treatment's district `S`, and — provided the
/// treatment has no bidirected path to any of its children there — emit
///
/// ```text
/// Σ_{rest} [ Π_{v ∉ S} P(v | pred) ] · Σ_{a'} Π_{v ∈ S} P(v | pred)|_{a→a'}
/// ```
///
/// with `pred` the predecessors in a topological order of the restriction.
/// Returns `None` when the district condition fails; a treatment that is
/// not an ancestor of the outcome yields the bare marginal `P(y)`.
pub fn tian_effect_estimand(g: &Admg, a: &Atom, y: &Atom) -> Result<Option<Estimand>, GraphError> {
    check_query(g, &a.var, &y.var)?;
    let relevant = g.ancestors(&BTreeSet::from([y.var.clone()]));
    if !relevant.contains(&a.var) {
        return Ok(Some(Estimand::term(vec![y.clone()], Vec::new())));
    }
    let sub = g.induced(&relevant);
    let district = sub.district_of(&a.var)?;
    if sub
        .children_of(&a.var)
        .intersection(&district)
        .next()
        .is_some()
    {
        return Ok(None);
    }

    let order = sub.topological_order();
    let mut pool = TokenPool::new();
    pool.reserve(&a.value);
    pool.reserve(&y.value);
    let mut tokens = std::collections::BTreeMap::new();
    for v in &order {
        let t = if *v == a.var {
            a.value.clone()
        } else if *v == y.var {
            y.value.clone()
        } else {
            pool.claim(v)
        };
        tokens.insert(v.clone(), t);
    }
    let a_prime = pool.claim_token(&a.value);

    let factor = |v: &Variable, treatment_token: &str| -> Estimand {
        let pos = order
            .iter()
            .position(|w| w == v)
            .expect("order covers the subgraph");
        let mut joint_token = tokens[v].clone();
        if *v == a.var {
            joint_token = treatment_token.to_string();
        }
        let given: Vec<Atom> = order[..pos]
            .iter()
            .map(|p| {
                let t = if *p == a.var {
                    treatment_token.to_string()
                } else {
                    tokens[p].clone()
                };
                Atom::new(p.clone(), t)
            })
            .collect();
        Estimand::term(vec![Atom::new(v.clone(), joint_token)], given)
    };

    let mut outer: Vec<Estimand> = Vec::new();
    for v in order.iter().rev() {
        if !district.contains(v) {
            outer.push(factor(v, &a.value));
        }
    }
    let mut inner: Vec<Estimand> = Vec::new();
    for v in order.iter().rev() {
        if district.contains(v) {
            inner.push(factor(v, &a_prime));
        }
    }
    outer.push(Estimand::sum(
        vec![(a.var.clone(), a_prime)],
        Estimand::product(inner),
    ));

    let bound: Vec<(Variable, String)> = order
        .iter()
        .filter(|v| **v != a.var && **v != y.var)
        .map(|v| (v.clone(), tokens[v].clone()))
        .collect();
    let mut bound_sorted = bound;
    bound_sorted.sort();
    Ok(Some(Estimand::sum(bound_sorted, Estimand::product(outer))))
}

// ---------------------------------------------------------------------------
// Instruments
// ---------------------------------------------------------------------------

/// [`find_instruments_with`] under the default settings: conditioning sets
/// of at most two nodes and the outgoing-edge cut.
pub fn find_instruments(
    g: &Admg,
    a: &Variable,
    y: &Variable,
) -> Result<Vec<Instrument>, GraphError> {
    find_instruments_with(g, a, y, 2, InstrumentCut::TreatmentOutgoing)
}

/// Searches for instrumental-variable candidates: every pair `(i, z)` with
/// `i` dependent on the treatment given `z` in the full graph, yet separated
/// from the outcome given `z` once the treatment's edges are cut per `cut`.
/// Results are ordered by instrument name, then conditioning-set size, then
/// lexicographically.
pub fn find_instruments_with(
    g: &Admg,
    a: &Variable,
    y: &Variable,
    max_conditioning: usize,
    cut: InstrumentCut,
) -> Result<Vec<Instrument>, GraphError> {
    check_query(g, a, y)?;
    let a_set = BTreeSet::from([a.clone()]);
    let y_set = BTreeSet::from([y.clone()]);
    let severed = match cut {
        InstrumentCut::TreatmentOutgoing => g.mutilate(&BTreeSet::new(), &a_set),
        InstrumentCut::TreatmentIncoming => g.mutilate(&a_set, &BTreeSet::new()),
    };
    let mut out = Vec::new();
    for i in g.nodes() {
        if i == a || i == y {
            continue;
        }
        let i_set = BTreeSet::from([i.clone()]);
        let pool: Vec<Variable> = g
            .nodes()
            .iter()
            .filter(|v| *v != a && *v != y && *v != i)
            .cloned()
            .collect();
        for z in subsets_up_to(&pool, max_conditioning) {
            let relevant = !g.m_separated(&i_set, &a_set, &z)?;
            let excluded = severed.m_separated(&i_set, &y_set, &z)?;
            if relevant && excluded {
                out.push(Instrument {
                    instrument: i.clone(),
                    conditioning: z,
                });
            }
        }
    }
    Ok(out)
}
