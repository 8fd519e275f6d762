//! Graph-aware estimand simplification.
//!
//! Three value-preserving rewrites run to a global fixed point:
//!
//! 1. **Conditional pruning** — a conditioning atom is dropped when the
//!    graph proves it irrelevant: `P(j | g, z) = P(j | g)` whenever
//!    `J ⊥ Z | G` by m-separation (Pearl's d-separation lifted to ADMGs).
//! 2. **Normalization collapse** — a sum over a complete conditional
//!    distribution integrates to one. The whole body of the sum must
//!    chain-contract to a single joint term `P(J | S)` (chain rule read
//!    right to left) with every bound token inside `J`; the bound atoms
//!    then marginalize away: `Σ_c P(c) P(a0|c) = P(a0)`,
//!    `Σ_m P(m|a) = 1`. Partial collapses inside a product are
//!    deliberately not taken — they would rewrite classical textbook
//!    forms (the adjustment identity below) past their familiar shape.
//! 3. **Chain expansion + flattening** — multi-variable joints expand by
//!    the chain rule in reverse topological order,
//!    `P(w, c1, c2) = P(w|c1,c2) P(c1|c2) P(c2)`, exposing factors for
//!    rule 1; nested products flatten and unit factors disappear.
//! 4. **Factor extraction** — a product factor mentioning none of a sum's
//!    bound tokens moves outside the sum: `Σ_w P(w) P(y|a)` becomes
//!    `P(y|a) Σ_w P(w)`, whose inner sum then collapses by rule 2. The
//!    extraction never empties the sum's body (a bare `Σ_w 1` counts the
//!    domain rather than integrating to one).
//!
//! The classic example (back-door adjustment equals the truncated
//! factorization):
//!
//! ```text
//! sum_{w,c1,c2} P(y|a,w,c1,c2) P(w,c1,c2)
//!   = sum_{w,c1,c2} P(y|a,c2) P(w|c1,c2) P(c1) P(c2)
//! ```
//!
//! Every step preserves [`crate::scm::eval_estimand`] on every compatible
//! model; the fixed point is idempotent. Termination: collapses strictly
//! reduce the number of bound variables, expansions strictly reduce the
//! number of multi-variable joints, prunes strictly reduce conditioning
//! atoms, extractions strictly reduce the factor count under sums, and no
//! rewrite increases an earlier measure.

use std::collections::BTreeSet;

use crate::error::GraphError;
use crate::estimand::{Atom, Estimand};
use crate::graph::{Admg, Variable};

/// Simplifies an estimand against its graph (see the module docs).
pub fn simplify(e: &Estimand, g: &Admg) -> Result<Estimand, GraphError> {
    check_known(e, g)?;
    let mut current = e.clone();
    loop {
        let next = pass(&current, g);
        if next == current {
            return Ok(next);
        }
        current = next;
    }
}

/// Every variable mentioned must be a node of the graph.
fn check_known(e: &Estimand, g: &Admg) -> Result<(), GraphError> {
    let atoms_known = |atoms: &[Atom]| -> Result<(), GraphError> {
        for a in atoms {
            if !g.contains(&a.var) {
                return Err(GraphError::UnknownNode(a.var.to_string()));
            }
        }
        Ok(())
    };
    match e {
        Estimand::Term { joint, given } => {
            atoms_known(joint)?;
            atoms_known(given)
        }
        Estimand::DoTerm { joint, r#do, given } => {
            atoms_known(joint)?;
            atoms_known(r#do)?;
            atoms_known(given)
        }
        Estimand::Expectation {
            target,
            r#do,
            given,
        } => {
            if !g.contains(target) {
                return Err(GraphError::UnknownNode(target.to_string()));
            }
            atoms_known(r#do)?;
            atoms_known(given)
        }
        Estimand::Sum { bound, body } => {
            for (v, _) in bound {
                if !g.contains(v) {
                    return Err(GraphError::UnknownNode(v.to_string()));
                }
            }
            check_known(body, g)
        }
        Estimand::Product(factors) => factors.iter().try_for_each(|f| check_known(f, g)),
        Estimand::Quotient {
            numerator,
            denominator,
        } => {
            check_known(numerator, g)?;
            check_known(denominator, g)
        }
        Estimand::Difference {
            minuend,
            subtrahend,
        } => {
            check_known(minuend, g)?;
            check_known(subtrahend, g)
        }
    }
}

/// One bottom-up rewriting pass.
fn pass(e: &Estimand, g: &Admg) -> Estimand {
    match e {
        Estimand::Term { joint, given } => {
            let given = prune_given(joint_vars(joint), given, g);
            expand_joint(joint, &given, g)
        }
        Estimand::Expectation {
            target,
            r#do,
            given,
        } => {
            // Prune only observational expectations; under do(...) the
            // separation statement would concern a different graph.
            if r#do.is_empty() {
                let mut tvars = BTreeSet::new();
                tvars.insert(target.clone());
                let given = prune_given(tvars, given, g);
                Estimand::Expectation {
                    target: target.clone(),
                    r#do: Vec::new(),
                    given,
                }
            } else {
                e.clone()
            }
        }
        Estimand::DoTerm { .. } => e.clone(),
        Estimand::Sum { bound, body } => {
            let body = pass(body, g);
            if bound.is_empty() {
                return body;
            }
            if let Some(collapsed) = try_collapse(bound, &body) {
                return collapsed;
            }
            // Factor extraction: a product factor that mentions none of the
            // bound tokens is a constant of the summation and moves outside.
            // Only fires while at least one factor stays inside — an empty
            // body would turn the sum into a bare domain count.
            if let Estimand::Product(factors) = &body {
                let toks: BTreeSet<&str> = bound.iter().map(|(_, t)| t.as_str()).collect();
                let (outside, inside): (Vec<Estimand>, Vec<Estimand>) = factors
                    .iter()
                    .cloned()
                    .partition(|f| f.free_tokens().iter().all(|t| !toks.contains(t.as_str())));
                if !outside.is_empty() && !inside.is_empty() {
                    let mut flat = outside;
                    flat.push(Estimand::sum(bound.clone(), Estimand::product(inside)));
                    return Estimand::Product(flat);
                }
            }
            // Canonical binder order: deepest variable first, names breaking
            // ties — the same order the expanded factor lists read in.
            let depth = g.longest_path_depths();
            let mut bound = bound.clone();
            bound.sort_by(|(u, _), (v, _)| {
                let du = depth.get(u).copied().unwrap_or(0);
                let dv = depth.get(v).copied().unwrap_or(0);
                dv.cmp(&du).then_with(|| u.cmp(v))
            });
            Estimand::Sum {
                bound,
                body: Box::new(body),
            }
        }
        Estimand::Product(factors) => {
            let mut flat = Vec::new();
            for f in factors {
                match pass(f, g) {
                    Estimand::Product(inner) => flat.extend(inner),
                    other => flat.push(other),
                }
            }
            flat.retain(|f| !f.is_one());
            match flat.len() {
                0 => Estimand::one(),
                1 => flat.pop().expect("length checked"),
                _ => Estimand::Product(flat),
            }
        }
        Estimand::Quotient {
            numerator,
            denominator,
        } => {
            let numerator = pass(numerator, g);
            let denominator = pass(denominator, g);
            if denominator.is_one() {
                numerator
            } else {
                Estimand::Quotient {
                    numerator: Box::new(numerator),
                    denominator: Box::new(denominator),
                }
            }
        }
        Estimand::Difference {
            minuend,
            subtrahend,
        } => Estimand::Difference {
            minuend: Box::new(pass(minuend, g)),
            subtrahend: Box::new(pass(subtrahend, g)),
        },
    }
}

fn joint_vars(atoms: &[Atom]) -> BTreeSet<Variable> {
    atoms.iter().map(|a| a.var.clone()).collect()
}

/// Rule 1: drop conditioning atoms separated from the joint given the rest,
/// one at a time to a fixed point, in deterministic (sorted) order.
fn prune_given(joint: BTreeSet<Variable>, given: &[Atom], g: &Admg) -> Vec<Atom> {
    let mut kept: Vec<Atom> = given.to_vec();
    'retry: loop {
        for i in 0..kept.len() {
            let z = &kept[i].var;
            // Degenerate overlaps are left for evaluation semantics.
            if joint.contains(z) {
                continue;
            }
            let mut zset = BTreeSet::new();
            zset.insert(z.clone());
            let rest: BTreeSet<Variable> = kept
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, a)| a.var.clone())
                .filter(|v| !joint.contains(v))
                .collect();
            if rest.len() + 1 + joint.len() != rest.union(&zset).count() + joint.len() {
                // z also appears among the remaining conditioners; skip.
                continue;
            }
            if let Ok(true) = g.m_separated(&joint, &zset, &rest) {
                kept.remove(i);
                continue 'retry;
            }
        }
        return kept;
    }
}

/// Rule 3 (expansion half): a multi-variable joint expands by the chain
/// rule in reverse topological order; single-variable terms are returned
/// as-is.
fn expand_joint(joint: &[Atom], given: &[Atom], g: &Admg) -> Estimand {
    if joint.len() <= 1 {
        return Estimand::Term {
            joint: joint.to_vec(),
            given: given.to_vec(),
        };
    }
    // Refuse repeated variables (degenerate self-conditioning).
    let vars = joint_vars(joint);
    if vars.len() != joint.len() {
        return Estimand::Term {
            joint: joint.to_vec(),
            given: given.to_vec(),
        };
    }
    // Deepest node first (so each factor conditions only on its
    // non-descendants, giving rule 1 the best chance to prune), with
    // name order breaking ties among incomparable nodes:
    // P(w, c1, c2 | s) = P(w | c1, c2, s) P(c1 | c2, s) P(c2 | s).
    let depth = g.longest_path_depths();
    let mut ordered: Vec<Atom> = joint.to_vec();
    ordered.sort_by(|x, y| {
        let dx = depth.get(&x.var).copied().unwrap_or(0);
        let dy = depth.get(&y.var).copied().unwrap_or(0);
        dy.cmp(&dx).then_with(|| x.var.cmp(&y.var))
    });
    let mut factors = Vec::with_capacity(ordered.len());
    for (i, atom) in ordered.iter().enumerate() {
        let mut cond: Vec<Atom> = ordered[i + 1..].to_vec();
        cond.extend(given.iter().cloned());
        factors.push(Estimand::term(vec![atom.clone()], cond));
    }
    Estimand::Product(factors)
}

/// Rule 2: the whole body must be a term, or a product of terms, that
/// chain-contracts to one joint `P(J | S)` with all bound tokens in `J`.
fn try_collapse(bound: &[(Variable, String)], body: &Estimand) -> Option<Estimand> {
    let factors: Vec<(&Vec<Atom>, &Vec<Atom>)> = match body {
        Estimand::Term { joint, given } => vec![(joint, given)],
        Estimand::Product(fs) => {
            let mut out = Vec::with_capacity(fs.len());
            for f in fs {
                match f {
                    Estimand::Term { joint, given } => out.push((joint, given)),
                    _ => return None,
                }
            }
            out
        }
        _ => return None,
    };
    if factors.is_empty() {
        return None;
    }
    // Order as a chain: smallest conditioning set last in the chain rule,
    // so first here; each next factor must condition on everything before
    // it plus the common tail. Stable sort keeps ties deterministic.
    let mut ordered = factors;
    ordered.sort_by_key(|(_, given)| given.len());
    let tail: BTreeSet<&Atom> = ordered[0].1.iter().collect();
    let mut accumulated: BTreeSet<&Atom> = tail.clone();
    let mut joint_all: Vec<&Atom> = Vec::new();
    for (joint, given) in &ordered {
        let given_set: BTreeSet<&Atom> = given.iter().collect();
        if given_set != accumulated {
            return None;
        }
        for atom in joint.iter() {
            joint_all.push(atom);
            accumulated.insert(atom);
        }
    }
    // Joint and tail variables must be distinct for marginalization.
    let mut seen = BTreeSet::new();
    for atom in joint_all.iter().chain(tail.iter()) {
        if !seen.insert(&atom.var) {
            return None;
        }
    }
    // Every bound token must name exactly one joint atom of its variable
    // and must not appear in the tail.
    for (v, token) in bound {
        let hits: Vec<&&Atom> = joint_all.iter().filter(|a| &a.value == token).collect();
        if hits.len() != 1 || &hits[0].var != v {
            return None;
        }
        if tail.iter().any(|a| &a.value == token) {
            return None;
        }
    }
    let bound_tokens: BTreeSet<&String> = bound.iter().map(|(_, t)| t).collect();
    let remaining: Vec<Atom> = joint_all
        .iter()
        .filter(|a| !bound_tokens.contains(&a.value))
        .map(|a| (*a).clone())
        .collect();
    if remaining.is_empty() {
        return Some(Estimand::one());
    }
    Some(Estimand::term(
        remaining,
        tail.into_iter().cloned().collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_estimand;
    use crate::render::to_text;
    use crate::scm::{eval_estimand_with, random_scm};
    use std::collections::BTreeMap;

    /// Two confounders, one collider: back-door paths `A <- W <- C2 -> Y`
    /// and `A <- C1 -> W <- C2 -> Y`.
    fn g12() -> Admg {
        Admg::build_named(
            &["A", "C1", "C2", "W", "Y"],
            &[
                ("C1", "W"),
                ("C2", "W"),
                ("C2", "Y"),
                ("W", "A"),
                ("A", "Y"),
            ],
            &[],
        )
        .unwrap()
    }

    #[test]
    fn adjustment_identity_reaches_the_textbook_form() {
        let g = g12();
        let e = parse_estimand("sum_{w,c1,c2} P(y|a,w,c1,c2) P(w,c1,c2)", &g).unwrap();
        let s = simplify(&e, &g).unwrap();
        assert_eq!(
            to_text(&s),
            "sum_{w,c1,c2} P(y|a,c2) P(w|c1,c2) P(c1) P(c2)"
        );
        // Idempotent.
        assert_eq!(simplify(&s, &g).unwrap(), s);
    }

    #[test]
    fn simplification_preserves_value_on_random_models() {
        let g = g12();
        let e = parse_estimand("sum_{w,c1,c2} P(y|a,w,c1,c2) P(w,c1,c2)", &g).unwrap();
        let s = simplify(&e, &g).unwrap();
        for seed in 0..20 {
            let model = random_scm(&g, seed, 2);
            let d = model.joint().unwrap();
            let mut env = BTreeMap::new();
            env.insert("a".to_string(), "1".to_string());
            env.insert("y".to_string(), "0".to_string());
            let before = eval_estimand_with(&e, &d, &env).unwrap();
            let after = eval_estimand_with(&s, &d, &env).unwrap();
            assert!(
                (before - after).abs() < 1e-12,
                "seed {seed}: {before} vs {after}"
            );
        }
    }

    #[test]
    fn complete_conditionals_normalize_away() {
        let g = Admg::build_named(&["A", "M", "Y"], &[("A", "M"), ("M", "Y")], &[]).unwrap();
        // Standalone: sum_m P(m|a) is the constant one.
        let e = parse_estimand("sum_{m} P(m|a)", &g).unwrap();
        assert_eq!(to_text(&simplify(&e, &g).unwrap()), "1");
        // Inside a product the unit factor disappears.
        let e = parse_estimand("P(y|a) sum_{m} P(m|a)", &g).unwrap();
        assert_eq!(to_text(&simplify(&e, &g).unwrap()), "P(y|a)");
    }

    #[test]
    fn chains_contract_through_the_binder() {
        // The classic confounding triangle: C -> A, C -> Y, A -> Y.
        let g = Admg::build_named(&["A", "C", "Y"], &[("C", "A"), ("C", "Y"), ("A", "Y")], &[])
            .unwrap();
        let e = parse_estimand("sum_{c} P(c) P(a0|c)", &g).unwrap();
        assert_eq!(to_text(&simplify(&e, &g).unwrap()), "P(a0)");
        // The numerator shape of the conditional-intervention formula must
        // NOT collapse: the chain breaks at P(y|a1,c).
        let e = parse_estimand("sum_{c} P(c) P(a0|c) P(y|a1,c)", &g).unwrap();
        assert_eq!(
            to_text(&simplify(&e, &g).unwrap()),
            "sum_{c} P(c) P(a0|c) P(y|a1,c)"
        );
    }

    #[test]
    fn independent_factors_leave_the_sum() {
        let g = Admg::build_named(&["A", "W", "Y"], &[("A", "Y")], &[]).unwrap();
        // P(y|a) is constant in w, so it exits the sum; the leftover
        // normalization sum_w P(w) then integrates to one.
        let e = parse_estimand("sum_{w} P(w) P(y|a)", &g).unwrap();
        assert_eq!(to_text(&simplify(&e, &g).unwrap()), "P(y|a)");
        // A sum whose body never mentions the binder is a domain count,
        // not a normalization — it must survive untouched.
        let e = parse_estimand("sum_{w} P(y|a)", &g).unwrap();
        assert_eq!(to_text(&simplify(&e, &g).unwrap()), "sum_{w} P(y|a)");
    }

    #[test]
    fn minimal_forms_are_fixed_points() {
        let g = Admg::build_named(&["A", "Y"], &[("A", "Y")], &[]).unwrap();
        let e = parse_estimand("P(y|a)", &g).unwrap();
        assert_eq!(simplify(&e, &g).unwrap(), e);
        let e = parse_estimand("P(y|do(a))", &g).unwrap();
        assert_eq!(simplify(&e, &g).unwrap(), e);
    }

    #[test]
    fn expectations_prune_their_conditioners() {
        // Y independent of Z2 given A, M (but not of A): the mediation
        // shape whose expectation terms shed the covariate only.
        let g = Admg::build_named(
            &["A", "M", "Y", "Z2"],
            &[("Z2", "A"), ("A", "M"), ("M", "Y"), ("A", "Y")],
            &[],
        )
        .unwrap();
        let e = parse_estimand("E[Y|a1,m,z2]", &g).unwrap();
        assert_eq!(to_text(&simplify(&e, &g).unwrap()), "E[Y|a1,m]");
    }

    #[test]
    fn unknown_nodes_are_rejected() {
        let g = Admg::build_named(&["A", "Y"], &[("A", "Y")], &[]).unwrap();
        let bigger = Admg::build_named(&["A", "Q", "Y"], &[("A", "Y")], &[]).unwrap();
        let e = parse_estimand("P(y|q)", &bigger).unwrap();
        assert!(matches!(simplify(&e, &g), Err(GraphError::UnknownNode(_))));
    }
}
