//! The complete identification algorithm for interventional queries.
//!
//! [`identify`] decides whether `P(Y | do(X))` can be expressed from the
//! observational law of an ADMG and, when it can, compiles the symbolic
//! estimand. The recursion is Shpitser and Pearl's ID procedure, built on
//! Tian's c-component factorization, and it is complete: when it fails,
//! the failure yields a [`Hedge`] — a pair of nested c-forests that
//! provably blocks identification — which [`verify_hedge`] checks
//! independently of the recursion that found it.
//!
//! On the current graph over `V` with query `P(Y | do(X))` and carried
//! distribution `P`, one call performs the first applicable step:
//!
//! 1. with nothing intervened, answer the marginal `Σ_{V∖Y} P`;
//! 2. restrict to `An(Y)`, marginalizing the carried distribution;
//! 3. grow `X` by the variables that cannot transmit an effect
//!    (`W = V ∖ X ∖ An(Y)` in the graph with edges into `X` cut, Pearl's
//!    Rule 3);
//! 4. if `V ∖ X` splits into c-components `S_1 … S_k`, solve each
//!    `P(S_i | do(V ∖ S_i))` and assemble `Σ_{V∖(Y∪X)} Π_i …`;
//! 5. if the whole graph is a single c-component, fail — the graph and
//!    the lone component of `V ∖ X` form a hedge;
//! 6. if the component of `V ∖ X` is a c-component of the whole graph,
//!    emit its c-factor: a product of conditionals of the carried law,
//!    each variable given its topological predecessors;
//! 7. otherwise descend into the enclosing c-component `S′`,
//!    re-expressing the carried law as a chain of conditionals over `S′`.
//!
//! Identifiable answers pass through [`simplify`] once at the end, so the
//! returned estimand is a fixed point of the rewrite rules, free of `do`
//! operators, and its free tokens are exactly the lowercased names of
//! `X ∪ Y`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::criteria::TokenPool;
use crate::ctf::WorldConflict;
use crate::effects::PseWitness;
use crate::error::GraphError;
use crate::estimand::{Atom, Estimand};
use crate::graph::{Admg, Variable};
use crate::simplify::simplify;

// ---------------------------------------------------------------------------
// Public types
// ---------------------------------------------------------------------------

/// A non-identifiability witness: two nested c-forests over the graph.
///
/// `f` and `f_prime` both induce c-forests (one c-component, every node
/// keeping at most one child inside the set) sharing `root_set` as their
/// childless roots; `f` meets the treatments while `f_prime` avoids them,
/// and every root stays an ancestor of the outcomes once the edges into
/// the treatments are cut. Whenever such a pair exists, two models agree
/// on the observational law yet disagree on `P(Y | do(X))`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hedge {
    /// The larger forest; it intersects the treatment set.
    pub f: BTreeSet<Variable>,
    /// The nested forest, disjoint from the treatments.
    pub f_prime: BTreeSet<Variable>,
    /// The shared root set of both forests.
    pub root_set: BTreeSet<Variable>,
}

impl fmt::Display for Hedge {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |s: &BTreeSet<Variable>| {
            s.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        };
        write!(
            out,
            "F = {{{}}}, F' = {{{}}}, rooted at {{{}}}",
            list(&self.f),
            list(&self.f_prime),
            list(&self.root_set)
        )
    }
}

/// The structure blocking identification, attached to every negative
/// verdict. Each variant is checkable on its own terms: a [`Hedge`] passes
/// [`verify_hedge`], a [`WorldConflict`] names the cross-world clash, and a
/// [`PseWitness`] names the recanting structure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Witness {
    /// A hedge blocking an interventional query.
    Hedge(Hedge),
    /// A cross-world conflict blocking a counterfactual conjunction.
    Conflict(WorldConflict),
    /// A recanting witness or district blocking a path-specific effect.
    Recanting(PseWitness),
    /// A named precondition of a derivation that does not hold.
    Condition(String),
}

impl fmt::Display for Witness {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Witness::Hedge(h) => write!(out, "hedge: {h}"),
            Witness::Conflict(c) => write!(out, "{c}"),
            Witness::Recanting(r) => write!(out, "{r}"),
            Witness::Condition(msg) => write!(out, "failed condition: {msg}"),
        }
    }
}

/// The verdict of [`identify`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IdentResult {
    /// The query equals `estimand` on every model of the graph.
    Identifiable {
        /// Observational expression for the query, already simplified.
        estimand: Estimand,
    },
    /// No observational expression exists; `witness` says why.
    NotIdentifiable {
        /// The structure that blocks identification.
        witness: Witness,
    },
}

impl IdentResult {
    /// The estimand, when the verdict is positive.
    pub fn estimand(&self) -> Option<&Estimand> {
        match self {
            IdentResult::Identifiable { estimand } => Some(estimand),
            IdentResult::NotIdentifiable { .. } => None,
        }
    }

    /// The witness, when the verdict is negative.
    pub fn witness(&self) -> Option<&Witness> {
        match self {
            IdentResult::Identifiable { .. } => None,
            IdentResult::NotIdentifiable { witness } => Some(witness),
        }
    }

    /// True on the positive verdict.
    pub fn is_identifiable(&self) -> bool {
        matches!(self, IdentResult::Identifiable { .. })
    }
}

// ---------------------------------------------------------------------------
// Hedge checking
// ---------------------------------------------------------------------------

/// Checks a hedge witness for `P(y | do(x))` against the graph.
///
/// True iff (1) `f_prime ⊆ f`, `f` meets `x` and `f_prime` avoids it;
/// (2) both sets induce c-forests whose childless root set is exactly
/// `root_set`; and (3) every root is an ancestor of `y` in the graph with
/// the edges into `x` cut. Unknown nodes anywhere are an error.
pub fn verify_hedge(
    g: &Admg,
    h: &Hedge,
    x: &BTreeSet<Variable>,
    y: &BTreeSet<Variable>,
) -> Result<bool, GraphError> {
    for v in
        h.f.iter()
            .chain(&h.f_prime)
            .chain(&h.root_set)
            .chain(x)
            .chain(y)
    {
        if !g.contains(v) {
            return Err(GraphError::UnknownNode(v.to_string()));
        }
    }
    let nested = h.f_prime.is_subset(&h.f);
    let split = !h.f.is_disjoint(x) && h.f_prime.is_disjoint(x);
    let forests = is_c_forest(g, &h.f, &h.root_set) && is_c_forest(g, &h.f_prime, &h.root_set);
    let reach = g.mutilate(x, &BTreeSet::new()).ancestors(y);
    Ok(nested && split && forests && h.root_set.is_subset(&reach))
}

/// `set` induces a single c-component in which every node keeps at most
/// one child, and its childless nodes are exactly `roots`.
fn is_c_forest(g: &Admg, set: &BTreeSet<Variable>, roots: &BTreeSet<Variable>) -> bool {
    if set.is_empty() {
        return false;
    }
    let sub = g.induced(set);
    sub.c_components().len() == 1
        && set.iter().all(|v| sub.children_of(v).len() <= 1)
        && childless(&sub) == *roots
}

fn childless(g: &Admg) -> BTreeSet<Variable> {
    g.nodes()
        .iter()
        .filter(|v| g.children_of(v).is_empty())
        .cloned()
        .collect()
}

// ---------------------------------------------------------------------------
// Identification
// ---------------------------------------------------------------------------

/// Decides identifiability of `P(y | do(x))` and compiles the estimand.
///
/// `x` and `y` must be disjoint ([`GraphError::DegenerateQuery`] names an
/// offender otherwise) and known ([`GraphError::UnknownNode`]). An empty
/// `x` yields the plain marginal `P(y)`; an empty `y` the constant one.
/// On success the estimand contains no `do` operator, is a fixed point of
/// [`simplify`], and its free tokens are the lowercased names of `x ∪ y`.
/// On failure the witness carries a hedge satisfying [`verify_hedge`].
pub fn identify(
    g: &Admg,
    x: &BTreeSet<Variable>,
    y: &BTreeSet<Variable>,
) -> Result<IdentResult, GraphError> {
    for v in x.iter().chain(y) {
        if !g.contains(v) {
            return Err(GraphError::UnknownNode(v.to_string()));
        }
    }
    if let Some(both) = x.intersection(y).next() {
        return Err(GraphError::DegenerateQuery(both.to_string()));
    }
    if y.is_empty() {
        return Ok(IdentResult::Identifiable {
            estimand: Estimand::one(),
        });
    }
    let mut session = Session::new(g, x, y);
    if x.is_empty() {
        let joint = y.iter().map(|v| session.atom(v)).collect();
        let estimand = simplify(&Estimand::term(joint, Vec::new()), g)?;
        return Ok(IdentResult::Identifiable { estimand });
    }
    match session.run(g, y, x, Carried::Joint) {
        Ok(raw) => {
            let estimand = session.close(raw, g, x, y)?;
            Ok(IdentResult::Identifiable { estimand })
        }
        Err(fail) => {
            let root_set = childless(&g.induced(&fail.f_prime));
            let mut hedge = Hedge {
                f: fail.f,
                f_prime: fail.f_prime,
                root_set,
            };
            if !verify_hedge(g, &hedge, x, y)? {
                if let Some(found) = exhaustive_hedge(g, x, y) {
                    hedge = found;
                }
            }
            Ok(IdentResult::NotIdentifiable {
                witness: Witness::Hedge(hedge),
            })
        }
    }
}

/// The point where the recursion gave up: the failing subgraph's nodes and
/// the single c-component of its non-treatment part.
struct FailData {
    f: BTreeSet<Variable>,
    f_prime: BTreeSet<Variable>,
}

/// The distribution threaded through the recursion. Its value is the
/// current subproblem's reference law over the current graph's variables;
/// tokens of variables fixed by enclosing scopes may appear free inside.
#[derive(Clone)]
enum Carried {
    /// The observational law marginalized to the current variables. The
    /// restrictions are always ancestral, so no expression is stored and
    /// conditionals can be read off as plain terms.
    Joint,
    /// One conditional factor per current variable, in topological order —
    /// the kernel produced by step 7.
    Chain(Vec<(Variable, Estimand)>),
    /// Any other expression over the current variables' tokens;
    /// conditionals become quotients of sums.
    Opaque(Estimand),
}

/// One identification run: the global topological order, each variable's
/// token, and the variables step 3 added to the treatments (their tokens
/// may survive in the raw output and are averaged out at the end).
struct Session {
    pi: Vec<Variable>,
    tok: BTreeMap<Variable, String>,
    pool: TokenPool,
    strays: BTreeSet<Variable>,
}

impl Session {
    fn new(g: &Admg, x: &BTreeSet<Variable>, y: &BTreeSet<Variable>) -> Session {
        let mut pool = TokenPool::new();
        let mut tok = BTreeMap::new();
        for v in x.iter().chain(y) {
            tok.insert(v.clone(), pool.claim(v));
        }
        for v in g.nodes() {
            if !tok.contains_key(v) {
                tok.insert(v.clone(), pool.claim(v));
            }
        }
        Session {
            pi: g.topological_order(),
            tok,
            pool,
            strays: BTreeSet::new(),
        }
    }

    fn atom(&self, v: &Variable) -> Atom {
        Atom::new(v.clone(), self.tok[v].clone())
    }

    /// `(variable, token)` binders for `vars`, in name order.
    fn binders(&self, vars: &BTreeSet<Variable>) -> Vec<(Variable, String)> {
        vars.iter()
            .map(|v| (v.clone(), self.tok[v].clone()))
            .collect()
    }

    /// The current graph's variables in the global topological order.
    fn order(&self, g: &Admg) -> Vec<Variable> {
        self.pi.iter().filter(|v| g.contains(v)).cloned().collect()
    }

    fn as_estimand(&self, p: &Carried, g: &Admg) -> Estimand {
        match p {
            Carried::Joint => Estimand::term(
                self.order(g).iter().map(|v| self.atom(v)).collect(),
                Vec::new(),
            ),
            Carried::Chain(factors) => {
                Estimand::product(factors.iter().map(|(_, f)| f.clone()).collect())
            }
            Carried::Opaque(e) => e.clone(),
        }
    }

    /// `Σ_{vars} body` with brand-new primed tokens substituted for the
    /// variables' current tokens inside `body`, so tokens owned by
    /// enclosing scopes are never captured.
    fn fresh_sum(&mut self, vars: &[Variable], mut body: Estimand) -> Estimand {
        let mut bound = Vec::new();
        for v in vars {
            let fresh = self.pool.claim_token(&self.tok[v]);
            body.rename_token(&self.tok[v], &fresh);
            bound.push((v.clone(), fresh));
        }
        bound.sort();
        Estimand::sum(bound, body)
    }

    /// Marginalizes the carried law onto `keep` (an ancestral subset of
    /// the current graph). Chain factors drop freely while the summed-out
    /// variables sit at the tail of the order; whatever remains is wrapped
    /// in an explicit sum over fresh tokens.
    fn marginal(&mut self, p: Carried, keep: &BTreeSet<Variable>, g: &Admg) -> Carried {
        match p {
            Carried::Joint => Carried::Joint,
            Carried::Chain(mut factors) => {
                while factors.last().is_some_and(|(v, _)| !keep.contains(v)) {
                    factors.pop();
                }
                let dropped: Vec<Variable> = factors
                    .iter()
                    .map(|(v, _)| v.clone())
                    .filter(|v| !keep.contains(v))
                    .collect();
                if dropped.is_empty() {
                    return Carried::Chain(factors);
                }
                let body = Estimand::product(factors.into_iter().map(|(_, f)| f).collect());
                Carried::Opaque(self.fresh_sum(&dropped, body))
            }
            Carried::Opaque(e) => {
                let dropped: Vec<Variable> = g
                    .nodes()
                    .iter()
                    .filter(|v| !keep.contains(*v))
                    .cloned()
                    .collect();
                Carried::Opaque(self.fresh_sum(&dropped, e))
            }
        }
    }

    /// The carried law's conditional of `v` given its topological
    /// predecessors among the current variables.
    fn conditional(&mut self, p: &Carried, v: &Variable, g: &Admg) -> Estimand {
        let order = self.order(g);
        let pos = order
            .iter()
            .position(|w| w == v)
            .expect("v is a current variable");
        match p {
            Carried::Joint => Estimand::term(
                vec![self.atom(v)],
                order[..pos].iter().map(|w| self.atom(w)).collect(),
            ),
            Carried::Chain(factors) => factors
                .iter()
                .find(|(w, _)| w == v)
                .expect("chain covers v")
                .1
                .clone(),
            Carried::Opaque(e) => {
                // P(v | preds) = (Σ_{after v} P) / (Σ_{v and after} P).
                let numerator = self.fresh_sum(&order[pos + 1..], e.clone());
                let denominator = self.fresh_sum(&order[pos..], e.clone());
                Estimand::quotient(numerator, denominator)
            }
        }
    }

    /// One step of the recursion (see the module docs for the seven steps).
    fn run(
        &mut self,
        g: &Admg,
        y: &BTreeSet<Variable>,
        x: &BTreeSet<Variable>,
        p: Carried,
    ) -> Result<Estimand, FailData> {
        // Step 1: nothing intervened — the marginal of the carried law.
        if x.is_empty() {
            let rest: BTreeSet<Variable> = g.nodes().difference(y).cloned().collect();
            let body = self.as_estimand(&p, g);
            return Ok(Estimand::sum(self.binders(&rest), body));
        }

        // Step 2: restrict to the ancestors of the outcomes.
        let an = g.ancestors(y);
        if an != *g.nodes() {
            let p = self.marginal(p, &an, g);
            let g = g.induced(&an);
            let x: BTreeSet<Variable> = x.intersection(&an).cloned().collect();
            return self.run(&g, y, &x, p);
        }

        // Step 3: absorb variables whose interventions cannot matter.
        let reach = g.mutilate(x, &BTreeSet::new()).ancestors(y);
        let w: BTreeSet<Variable> = g
            .nodes()
            .iter()
            .filter(|v| !x.contains(v) && !reach.contains(v))
            .cloned()
            .collect();
        if !w.is_empty() {
            self.strays.extend(w.iter().cloned());
            let x: BTreeSet<Variable> = x.union(&w).cloned().collect();
            return self.run(g, y, &x, p);
        }

        // Step 4: split over the c-components of V ∖ X.
        let rest: BTreeSet<Variable> = g.nodes().difference(x).cloned().collect();
        let comps = g.induced(&rest).c_components();
        if comps.len() > 1 {
            let mut factors = Vec::new();
            for s in &comps {
                let others: BTreeSet<Variable> = g.nodes().difference(s).cloned().collect();
                factors.push(self.run(g, s, &others, p.clone())?);
            }
            let outer: BTreeSet<Variable> =
                rest.iter().filter(|v| !y.contains(*v)).cloned().collect();
            return Ok(Estimand::sum(
                self.binders(&outer),
                Estimand::product(factors),
            ));
        }
        let s = comps
            .into_iter()
            .next()
            .expect("y is nonempty, so V ∖ X is nonempty");

        // Step 5: one district spanning the whole graph blocks the query.
        let districts = g.c_components();
        if districts.len() == 1 {
            return Err(FailData {
                f: g.nodes().clone(),
                f_prime: s,
            });
        }

        // Step 6: S is itself a district — its c-factor is a product of
        // conditionals of the carried law.
        if districts.contains(&s) {
            let order = self.order(g);
            let factors: Vec<Estimand> = order
                .iter()
                .filter(|v| s.contains(*v))
                .map(|v| self.conditional(&p, v, g))
                .collect();
            let margin: BTreeSet<Variable> =
                s.iter().filter(|v| !y.contains(*v)).cloned().collect();
            return Ok(Estimand::sum(
                self.binders(&margin),
                Estimand::product(factors),
            ));
        }

        // Step 7: descend into the enclosing district S′, re-expressing
        // the carried law as a chain of conditionals over S′.
        let s_prime = districts
            .into_iter()
            .find(|d| s.is_subset(d))
            .expect("S lies inside exactly one district");
        let order = self.order(g);
        let chain: Vec<(Variable, Estimand)> = order
            .iter()
            .filter(|v| s_prime.contains(*v))
            .map(|v| (v.clone(), self.conditional(&p, v, g)))
            .collect();
        let g2 = g.induced(&s_prime);
        let x2: BTreeSet<Variable> = x.intersection(&s_prime).cloned().collect();
        self.run(&g2, y, &x2, Carried::Chain(chain))
    }

    /// Final cleanup: average out any step-3 token that survived in the
    /// raw expression (the result provably does not depend on its value),
    /// then simplify.
    fn close(
        &mut self,
        raw: Estimand,
        g: &Admg,
        x: &BTreeSet<Variable>,
        y: &BTreeSet<Variable>,
    ) -> Result<Estimand, GraphError> {
        let expected: BTreeSet<String> = x.iter().chain(y).map(|v| self.tok[v].clone()).collect();
        let free = raw.free_tokens();
        let leftover: BTreeSet<Variable> = self
            .strays
            .iter()
            .filter(|v| free.contains(&self.tok[*v]) && !expected.contains(&self.tok[*v]))
            .cloned()
            .collect();
        let mut e = raw;
        if !leftover.is_empty() {
            let joint = leftover.iter().map(|v| self.atom(v)).collect();
            e = Estimand::sum(
                self.binders(&leftover),
                Estimand::product(vec![Estimand::term(joint, Vec::new()), e]),
            );
        }
        debug_assert!(
            e.free_tokens().is_subset(&expected),
            "free tokens beyond the query: {:?}",
            e.free_tokens()
        );
        simplify(&e, g)
    }
}

// ---------------------------------------------------------------------------
// Fallback hedge search
// ---------------------------------------------------------------------------

/// Bounded exhaustive search for a verifying hedge, used only if the
/// failure point's own node sets do not check out (possible when a node
/// keeps several children inside the failing component, which node-induced
/// forests cannot express). Scans small graphs, smallest `F′` first.
fn exhaustive_hedge(g: &Admg, x: &BTreeSet<Variable>, y: &BTreeSet<Variable>) -> Option<Hedge> {
    let nodes: Vec<Variable> = g.nodes().iter().cloned().collect();
    if nodes.len() > 10 {
        return None;
    }
    let reach = g.mutilate(x, &BTreeSet::new()).ancestors(y);
    let candidates: Vec<Variable> = nodes.iter().filter(|v| !x.contains(*v)).cloned().collect();
    let pick = |pool: &[Variable], bits: u32| -> BTreeSet<Variable> {
        pool.iter()
            .enumerate()
            .filter(|(i, _)| bits & (1 << i) != 0)
            .map(|(_, v)| v.clone())
            .collect()
    };
    let mut budget = 1_000_000u32;
    for bits in 1u32..(1 << candidates.len()) {
        let f_prime = pick(&candidates, bits);
        let sub = g.induced(&f_prime);
        if sub.c_components().len() != 1 || !f_prime.iter().all(|v| sub.children_of(v).len() <= 1) {
            continue;
        }
        let roots = childless(&sub);
        if !roots.is_subset(&reach) {
            continue;
        }
        let ext_pool: Vec<Variable> = nodes
            .iter()
            .filter(|v| !f_prime.contains(*v))
            .cloned()
            .collect();
        for ext_bits in 1u32..(1 << ext_pool.len()) {
            budget = budget.saturating_sub(1);
            if budget == 0 {
                return None;
            }
            let ext = pick(&ext_pool, ext_bits);
            if ext.is_disjoint(x) {
                continue;
            }
            let f: BTreeSet<Variable> = f_prime.union(&ext).cloned().collect();
            if is_c_forest(g, &f, &roots) {
                let h = Hedge {
                    f,
                    f_prime: f_prime.clone(),
                    root_set: roots.clone(),
                };
                if verify_hedge(g, &h, x, y).unwrap_or(false) {
                    return Some(h);
                }
            }
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
