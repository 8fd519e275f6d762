//! Symbolic estimands: the intermediate representation produced by the
//! identification machinery and consumed by the evaluator, the simplifier,
//! and the renderers.
//!
//! An estimand is a closed-form functional of the observational distribution:
//! sums of products of conditional probability terms, with quotients for
//! conditioning, differences for contrasts, and expectation leaves for
//! effect-scale formulas. Interventional terms ([`Estimand::DoTerm`] and
//! expectations with a nonempty `do` list) can be written and rendered but
//! never evaluated against data; identification exists to rewrite them away.
//!
//! Value tokens are plain strings such as `a0`, `a1`, `c`, `y'`. A token is
//! *bound* when a [`Estimand::Sum`] ranges over it and *free* otherwise; free
//! tokens must be supplied by an environment at evaluation time.

use std::collections::BTreeSet;
use std::fmt;

use crate::graph::Variable;

/// One `variable = value-token` pairing inside a term.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Atom {
    /// The variable the atom constrains.
    pub var: Variable,
    /// The value token, e.g. `a0` or a bound symbol like `c`.
    pub value: String,
}

impl Atom {
    /// A new atom.
    pub fn new(var: Variable, value: impl Into<String>) -> Self {
        Atom {
            var,
            value: value.into(),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.var, self.value)
    }
}

/// A symbolic estimand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Estimand {
    /// An observational probability `P(joint | given)`.
    Term { joint: Vec<Atom>, given: Vec<Atom> },

    /// An interventional probability `P(joint | do(do), given)`.
    DoTerm {
        joint: Vec<Atom>,
        r#do: Vec<Atom>,
        given: Vec<Atom>,
    },

    /// A sum over the domains of the bound `(variable, token)` pairs.
    Sum {
        bound: Vec<(Variable, String)>,
        body: Box<Estimand>,
    },

    /// A product of factors; the empty product is the constant one.
    Product(Vec<Estimand>),

    /// A ratio of two estimands.
    Quotient {
        numerator: Box<Estimand>,
        denominator: Box<Estimand>,
    },

    /// A contrast `minuend - subtrahend`.
    Difference {
        minuend: Box<Estimand>,
        subtrahend: Box<Estimand>,
    },

    /// An expectation `E[target | do(do), given]`, lowered at evaluation
    /// time to a value-weighted sum over the target's (numeric) domain.
    Expectation {
        target: Variable,
        r#do: Vec<Atom>,
        given: Vec<Atom>,
    },
}

impl Estimand {
    /// `P(joint | given)`, with both atom lists put in sorted order.
    pub fn term(joint: Vec<Atom>, given: Vec<Atom>) -> Estimand {
        let mut joint = joint;
        let mut given = given;
        joint.sort();
        given.sort();
        Estimand::Term { joint, given }
    }

    /// `P(joint | do(r#do), given)`, with all atom lists put in sorted order.
    pub fn do_term(joint: Vec<Atom>, r#do: Vec<Atom>, given: Vec<Atom>) -> Estimand {
        let mut joint = joint;
        let mut r#do = r#do;
        let mut given = given;
        joint.sort();
        r#do.sort();
        given.sort();
        Estimand::DoTerm { joint, r#do, given }
    }

    /// A sum binding `(variable, token)` pairs; with no binders the body is
    /// returned unchanged.
    pub fn sum(bound: Vec<(Variable, String)>, body: Estimand) -> Estimand {
        if bound.is_empty() {
            body
        } else {
            Estimand::Sum {
                bound,
                body: Box::new(body),
            }
        }
    }

    /// A product of factors.
    pub fn product(factors: Vec<Estimand>) -> Estimand {
        Estimand::Product(factors)
    }

    /// The multiplicative identity (the empty product).
    pub fn one() -> Estimand {
        Estimand::Product(Vec::new())
    }

    /// The zero estimand, written as the trivial contrast `1 - 1` so that
    /// the representation stays closed under differences.
    pub fn zero() -> Estimand {
        Estimand::difference(Estimand::one(), Estimand::one())
    }

    /// A ratio.
    pub fn quotient(numerator: Estimand, denominator: Estimand) -> Estimand {
        Estimand::Quotient {
            numerator: Box::new(numerator),
            denominator: Box::new(denominator),
        }
    }

    /// A contrast.
    pub fn difference(minuend: Estimand, subtrahend: Estimand) -> Estimand {
        Estimand::Difference {
            minuend: Box::new(minuend),
            subtrahend: Box::new(subtrahend),
        }
    }

    /// `E[target | given]`, with the conditioning atoms put in sorted order.
    pub fn expectation(target: Variable, given: Vec<Atom>) -> Estimand {
        let mut given = given;
        given.sort();
        Estimand::Expectation {
            target,
            r#do: Vec::new(),
            given,
        }
    }

    /// `E[target | do(r#do), given]`.
    pub fn expectation_do(target: Variable, r#do: Vec<Atom>, given: Vec<Atom>) -> Estimand {
        let mut r#do = r#do;
        let mut given = given;
        r#do.sort();
        given.sort();
        Estimand::Expectation {
            target,
            r#do,
            given,
        }
    }

    /// Whether this is the empty product.
    pub fn is_one(&self) -> bool {
        matches!(self, Estimand::Product(fs) if fs.is_empty())
    }

    /// Whether this is the canonical zero (`1 - 1`).
    pub fn is_zero(&self) -> bool {
        matches!(self, Estimand::Difference { minuend, subtrahend }
            if minuend.is_one() && subtrahend.is_one())
    }

    /// Whether any interventional content remains: a do-term, or an
    /// expectation with a nonempty `do` list.
    pub fn contains_do(&self) -> bool {
        match self {
            Estimand::Term { .. } => false,
            Estimand::DoTerm { .. } => true,
            Estimand::Expectation { r#do, .. } => !r#do.is_empty(),
            Estimand::Sum { body, .. } => body.contains_do(),
            Estimand::Product(factors) => factors.iter().any(|f| f.contains_do()),
            Estimand::Quotient {
                numerator,
                denominator,
            } => numerator.contains_do() || denominator.contains_do(),
            Estimand::Difference {
                minuend,
                subtrahend,
            } => minuend.contains_do() || subtrahend.contains_do(),
        }
    }

    /// The free value tokens: tokens used by some atom and not bound by an
    /// enclosing sum.
    pub fn free_tokens(&self) -> BTreeSet<String> {
        fn atoms_of(lists: &[&[Atom]]) -> BTreeSet<String> {
            lists
                .iter()
                .flat_map(|l| l.iter())
                .map(|a| a.value.clone())
                .collect()
        }
        match self {
            Estimand::Term { joint, given } => atoms_of(&[joint, given]),
            Estimand::DoTerm { joint, r#do, given } => atoms_of(&[joint, r#do, given]),
            Estimand::Expectation { r#do, given, .. } => atoms_of(&[r#do, given]),
            Estimand::Sum { bound, body } => {
                let mut free = body.free_tokens();
                for (_, token) in bound {
                    free.remove(token);
                }
                free
            }
            Estimand::Product(factors) => factors.iter().flat_map(|f| f.free_tokens()).collect(),
            Estimand::Quotient {
                numerator,
                denominator,
            } => {
                let mut free = numerator.free_tokens();
                free.extend(denominator.free_tokens());
                free
            }
            Estimand::Difference {
                minuend,
                subtrahend,
            } => {
                let mut free = minuend.free_tokens();
                free.extend(subtrahend.free_tokens());
                free
            }
        }
    }

    /// Renames every occurrence of the token `from` to `to`, including sum
    /// binders. Sound when tokens are never shadowed, which the allocator in
    /// the identification engine guarantees by never reusing a token.
    pub fn rename_token(&mut self, from: &str, to: &str) {
        fn fix(atoms: &mut [Atom], from: &str, to: &str) {
            for a in atoms {
                if a.value == from {
                    a.value = to.to_owned();
                }
            }
        }
        match self {
            Estimand::Term { joint, given } => {
                fix(joint, from, to);
                fix(given, from, to);
            }
            Estimand::DoTerm { joint, r#do, given } => {
                fix(joint, from, to);
                fix(r#do, from, to);
                fix(given, from, to);
            }
            Estimand::Expectation { r#do, given, .. } => {
                fix(r#do, from, to);
                fix(given, from, to);
            }
            Estimand::Sum { bound, body } => {
                for (_, token) in bound.iter_mut() {
                    if token == from {
                        *token = to.to_owned();
                    }
                }
                body.rename_token(from, to);
            }
            Estimand::Product(factors) => {
                for f in factors {
                    f.rename_token(from, to);
                }
            }
            Estimand::Quotient {
                numerator,
                denominator,
            } => {
                numerator.rename_token(from, to);
                denominator.rename_token(from, to);
            }
            Estimand::Difference {
                minuend,
                subtrahend,
            } => {
                minuend.rename_token(from, to);
                subtrahend.rename_token(from, to);
            }
        }
    }

    /// Every token in use anywhere in the estimand, bound or free. Useful
    /// for allocating fresh tokens that cannot collide.
    pub fn all_tokens(&self) -> BTreeSet<String> {
        let mut out = self.free_tokens();
        self.collect_bound(&mut out);
        out
    }

    fn collect_bound(&self, out: &mut BTreeSet<String>) {
        match self {
            Estimand::Term { .. } | Estimand::DoTerm { .. } | Estimand::Expectation { .. } => {}
            Estimand::Sum { bound, body } => {
                for (_, token) in bound {
                    out.insert(token.clone());
                }
                body.collect_bound(out);
            }
            Estimand::Product(factors) => {
                for f in factors {
                    f.collect_bound(out);
                }
            }
            Estimand::Quotient {
                numerator,
                denominator,
            } => {
                numerator.collect_bound(out);
                denominator.collect_bound(out);
            }
            Estimand::Difference {
                minuend,
                subtrahend,
            } => {
                minuend.collect_bound(out);
                subtrahend.collect_bound(out);
            }
        }
    }
}
