//! Counterfactual conjunctions: merged worlds, conflicts, and estimands.
//!
//! A counterfactual query speaks about several hypothetical worlds at once:
//! `P(Y[A=a1]=y | A=a0)` asks for the chance that `Y` would have taken value
//! `y` had `A` been held at `a1`, among the units where `A` was in fact `a0`.
//! The engine builds one graph containing a copy of each variable per world,
//! merges copies that provably coincide, and either compiles the query down
//! to an observational estimand or reports the conflict that blocks it.
//!
//! Run with `cargo run --example counterfactuals`.

use hedgerow::ctf::{identify_ctf, identify_ctf_conditional, CtfAtom, CtfIntervention};
use hedgerow::dsl::parse_graph;
use hedgerow::graph::Admg;
use hedgerow::id::IdentResult;
use hedgerow::render::to_text;
use hedgerow::scm::{eval_estimand_with, random_scm};
use std::collections::BTreeMap;

fn fixture(name: &str) -> Admg {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/graphs/");
    let text = std::fs::read_to_string(format!("{dir}{name}.g")).expect("fixture file");
    parse_graph(&text).expect("fixture grammar")
}

/// `Y[A=value] = y` — the atom "Y equals y in the world where A is held".
fn y_under(g: &Admg, value: &str, y: &str) -> CtfAtom {
    CtfAtom::new(
        g.var("Y").unwrap(),
        vec![CtfIntervention::Fixed(g.var("A").unwrap(), value.into())],
        y,
    )
}

fn main() {
    // --- An identifiable conditional -----------------------------------
    // Confounding between A and Y runs through the *observed* variable C,
    // so the cross-world question reduces to adjustment plus reweighting.
    let g = fixture("g32");
    let gamma = vec![y_under(&g, "a1", "y")];
    let delta = vec![CtfAtom::observed(g.var("A").unwrap(), "a0")];
    let result = identify_ctf_conditional(&g, &gamma, &delta).unwrap();
    let estimand = match &result {
        IdentResult::Identifiable { estimand } => estimand.clone(),
        IdentResult::NotIdentifiable { witness } => unreachable!("blocked: {witness}"),
    };
    println!("triangle  P(Y[A=a1]=y | A=a0) = {}", to_text(&estimand));

    // The estimand is a black-box function of the observational joint; any
    // structural model over the graph must evaluate it to the same number
    // the counterfactual takes in that model.
    let model = random_scm(&g, 99, 2);
    let joint = model.joint().unwrap();
    let env: BTreeMap<String, String> = [("a1", "1"), ("a0", "0"), ("y", "1")]
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    let from_estimand = eval_estimand_with(&estimand, &joint, &env).unwrap();
    let from_model = model
        .ctf_probability(
            &[y_under(&g, "1", "1")],
            &[CtfAtom::observed(g.var("A").unwrap(), "0")],
        )
        .unwrap();
    println!(
        "          estimand {from_estimand:.9}  vs  ground truth {from_model:.9}"
    );
    assert!((from_estimand - from_model).abs() < 1e-9);

    // --- A blocked conditional ------------------------------------------
    // With a latent confounder instead, the two worlds disagree about A
    // inside a single confounded district, and no reweighting can help.
    let bow = fixture("g31");
    let gamma = vec![y_under(&bow, "a1", "y")];
    let delta = vec![CtfAtom::observed(bow.var("A").unwrap(), "a0")];
    match identify_ctf_conditional(&bow, &gamma, &delta).unwrap() {
        IdentResult::NotIdentifiable { witness } => println!("bow       {witness}"),
        IdentResult::Identifiable { .. } => unreachable!("the bow must be blocked"),
    }

    // --- A cross-world joint --------------------------------------------
    // Asking about Y under a1 *and* Y under a0 in the same breath is blocked
    // even without latent confounding: the two copies of Y share their own
    // mechanism noise.
    let markov = parse_graph("node A, Y\nA -> Y\n").unwrap();
    let joint_query = vec![y_under(&markov, "a1", "y1"), y_under(&markov, "a0", "y0")];
    match identify_ctf(&markov, &joint_query).unwrap() {
        IdentResult::NotIdentifiable { witness } => println!("two-world {witness}"),
        IdentResult::Identifiable { .. } => unreachable!("the joint must be blocked"),
    }

    // --- Nested subscripts ----------------------------------------------
    // P(Y[M[A=a0]]=y): Y under "M as it would have been had A been a0".
    // The inner world unnests into a bound sum over M's value.
    let chain = parse_graph("node A, M, Y\nA -> M\nM -> Y\n").unwrap();
    let nested = CtfAtom::new(
        chain.var("Y").unwrap(),
        vec![CtfIntervention::Nested(
            chain.var("M").unwrap(),
            vec![CtfIntervention::Fixed(chain.var("A").unwrap(), "a0".into())],
        )],
        "y",
    );
    match identify_ctf(&chain, &[nested]).unwrap() {
        IdentResult::Identifiable { estimand } => {
            println!("nested    P(Y[M[A=a0]]=y) = {}", to_text(&estimand))
        }
        IdentResult::NotIdentifiable { witness } => unreachable!("blocked: {witness}"),
    }
}
