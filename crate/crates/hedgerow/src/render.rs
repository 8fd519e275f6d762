//! Renderers for estimands: plain text, LaTeX, and a structured JSON tree.
//!
//! The text form is the canonical one — it is what the command-line tool
//! prints, what the estimand parser reads back, and what tests compare
//! against. Its grammar is deliberately small:
//!
//! ```text
//! sum_{c} P(c) P(a0|c) P(y|a1,c)
//! (sum_{c} P(c) P(a0|c) P(y|a1,c)) / P(a0)
//! sum_{m,z} (E[Y|a1,m,z] - E[Y|a0,m,z]) P(m|a0,z) P(z)
//! ```
//!
//! Products are juxtaposition, `-` is a contrast, `/` is a ratio binding
//! tighter than `-`, and an unparenthesized `sum_{...}` extends to the end
//! of its enclosing scope. The renderer inserts parentheses exactly where
//! that grammar needs them, so rendering followed by parsing is the
//! identity on estimand trees.

use crate::estimand::{Atom, Estimand};
use serde_json::{json, Value};
use std::fmt;

/// Where a subexpression sits, for parenthesization decisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ctx {
    /// Top of an expression scope (whole input, inside parentheses, or the
    /// body of a sum).
    Top,
    /// A factor of a product.
    Factor,
    /// A side of a `/`.
    FracSide,
    /// A side of a `-`.
    DiffSide,
}

fn tokens(atoms: &[Atom]) -> String {
    atoms
        .iter()
        .map(|a| a.value.as_str())
        .collect::<Vec<_>>()
        .join(",")
}

fn text(e: &Estimand, ctx: Ctx, at_end: bool, out: &mut String) {
    match e {
        Estimand::Term { joint, given } => {
            out.push_str("P(");
            out.push_str(&tokens(joint));
            if !given.is_empty() {
                out.push('|');
                out.push_str(&tokens(given));
            }
            out.push(')');
        }
        Estimand::DoTerm { joint, r#do, given } => {
            out.push_str("P(");
            out.push_str(&tokens(joint));
            out.push_str("|do(");
            out.push_str(&tokens(r#do));
            out.push(')');
            if !given.is_empty() {
                out.push(',');
                out.push_str(&tokens(given));
            }
            out.push(')');
        }
        Estimand::Expectation {
            target,
            r#do,
            given,
        } => {
            out.push_str("E[");
            out.push_str(&target.to_string());
            if !r#do.is_empty() || !given.is_empty() {
                out.push('|');
                if !r#do.is_empty() {
                    out.push_str("do(");
                    out.push_str(&tokens(r#do));
                    out.push(')');
                    if !given.is_empty() {
                        out.push(',');
                    }
                }
                out.push_str(&tokens(given));
            }
            out.push(']');
        }
        Estimand::Product(factors) => {
            if factors.is_empty() {
                out.push('1');
            } else if factors.len() == 1 {
                text(&factors[0], ctx, at_end, out);
            } else if ctx == Ctx::Factor || ctx == Ctx::FracSide {
                out.push('(');
                render_product(factors, true, out);
                out.push(')');
            } else {
                render_product(factors, at_end, out);
            }
        }
        Estimand::Sum { bound, body } => {
            if at_end {
                render_sum(bound, body, true, out);
            } else {
                out.push('(');
                render_sum(bound, body, true, out);
                out.push(')');
            }
        }
        Estimand::Quotient {
            numerator,
            denominator,
        } => {
            let parens = ctx == Ctx::Factor || ctx == Ctx::FracSide;
            if parens {
                out.push('(');
            }
            text(numerator, Ctx::FracSide, false, out);
            out.push_str(" / ");
            text(denominator, Ctx::FracSide, parens || at_end, out);
            if parens {
                out.push(')');
            }
        }
        Estimand::Difference {
            minuend,
            subtrahend,
        } => {
            if e.is_zero() {
                out.push('0');
                return;
            }
            let parens = ctx != Ctx::Top;
            if parens {
                out.push('(');
            }
            text(minuend, Ctx::DiffSide, false, out);
            out.push_str(" - ");
            text(subtrahend, Ctx::DiffSide, parens || at_end, out);
            if parens {
                out.push(')');
            }
        }
    }
}

fn render_sum(
    bound: &[(crate::graph::Variable, String)],
    body: &Estimand,
    at_end: bool,
    out: &mut String,
) {
    out.push_str("sum_{");
    out.push_str(
        &bound
            .iter()
            .map(|(_, t)| t.as_str())
            .collect::<Vec<_>>()
            .join(","),
    );
    out.push_str("} ");
    text(body, Ctx::Top, at_end, out);
}

fn render_product(factors: &[Estimand], at_end: bool, out: &mut String) {
    let last = factors.len() - 1;
    for (i, f) in factors.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        text(f, Ctx::Factor, if i == last { at_end } else { false }, out);
    }
}

/// Renders the canonical text form.
pub fn to_text(e: &Estimand) -> String {
    let mut out = String::new();
    text(e, Ctx::Top, true, &mut out);
    out
}

/// Turns a value token into its LaTeX spelling: a trailing digit run becomes
/// a subscript (`a0` → `a_{0}`), primes are kept (`c'` stays `c'`).
fn latex_token(token: &str) -> String {
    let primes_at = token.trim_end_matches('\'').len();
    let (core, primes) = token.split_at(primes_at);
    let digits_at = core.trim_end_matches(|c: char| c.is_ascii_digit()).len();
    let (base, digits) = core.split_at(digits_at);
    if base.is_empty() || digits.is_empty() {
        format!("{core}{primes}")
    } else {
        format!("{base}_{{{digits}}}{primes}")
    }
}

fn latex_tokens(atoms: &[Atom]) -> String {
    atoms
        .iter()
        .map(|a| latex_token(&a.value))
        .collect::<Vec<_>>()
        .join(", ")
}

fn latex(e: &Estimand, ctx: Ctx, at_end: bool, out: &mut String) {
    match e {
        Estimand::Term { joint, given } => {
            out.push_str("P(");
            out.push_str(&latex_tokens(joint));
            if !given.is_empty() {
                out.push_str(" \\mid ");
                out.push_str(&latex_tokens(given));
            }
            out.push(')');
        }
        Estimand::DoTerm { joint, r#do, given } => {
            out.push_str("P(");
            out.push_str(&latex_tokens(joint));
            out.push_str(" \\mid \\mathrm{do}(");
            out.push_str(&latex_tokens(r#do));
            out.push(')');
            if !given.is_empty() {
                out.push_str(", ");
                out.push_str(&latex_tokens(given));
            }
            out.push(')');
        }
        Estimand::Expectation {
            target,
            r#do,
            given,
        } => {
            out.push_str("\\mathbb{E}[");
            out.push_str(target.name());
            if !r#do.is_empty() || !given.is_empty() {
                out.push_str(" \\mid ");
                if !r#do.is_empty() {
                    out.push_str("\\mathrm{do}(");
                    out.push_str(&latex_tokens(r#do));
                    out.push(')');
                    if !given.is_empty() {
                        out.push_str(", ");
                    }
                }
                out.push_str(&latex_tokens(given));
            }
            out.push(']');
        }
        Estimand::Product(factors) => {
            if factors.is_empty() {
                out.push('1');
            } else if factors.len() == 1 {
                latex(&factors[0], ctx, at_end, out);
            } else if ctx == Ctx::Factor {
                out.push_str("\\left(");
                latex_product(factors, true, out);
                out.push_str("\\right)");
            } else {
                latex_product(factors, at_end, out);
            }
        }
        Estimand::Sum { bound, body } => {
            let parens = !at_end;
            if parens {
                out.push_str("\\left(");
            }
            out.push_str("\\sum_{");
            out.push_str(
                &bound
                    .iter()
                    .map(|(_, t)| latex_token(t))
                    .collect::<Vec<_>>()
                    .join(", "),
            );
            out.push_str("} ");
            latex(body, Ctx::Top, true, out);
            if parens {
                out.push_str("\\right)");
            }
        }
        Estimand::Quotient {
            numerator,
            denominator,
        } => {
            out.push_str("\\frac{");
            latex(numerator, Ctx::Top, true, out);
            out.push_str("}{");
            latex(denominator, Ctx::Top, true, out);
            out.push('}');
        }
        Estimand::Difference {
            minuend,
            subtrahend,
        } => {
            if e.is_zero() {
                out.push('0');
                return;
            }
            let parens = ctx != Ctx::Top;
            if parens {
                out.push_str("\\left(");
            }
            latex(minuend, Ctx::DiffSide, false, out);
            out.push_str(" - ");
            latex(subtrahend, Ctx::DiffSide, parens || at_end, out);
            if parens {
                out.push_str("\\right)");
            }
        }
    }
}

fn latex_product(factors: &[Estimand], at_end: bool, out: &mut String) {
    let last = factors.len() - 1;
    for (i, f) in factors.iter().enumerate() {
        if i > 0 {
            out.push_str(" \\, ");
        }
        latex(f, Ctx::Factor, if i == last { at_end } else { false }, out);
    }
}

/// Renders LaTeX math (no surrounding delimiters).
pub fn to_latex(e: &Estimand) -> String {
    let mut out = String::new();
    latex(e, Ctx::Top, true, &mut out);
    out
}

fn atoms_json(atoms: &[Atom]) -> Value {
    Value::Array(
        atoms
            .iter()
            .map(|a| json!({ "var": a.var.to_string(), "value": a.value }))
            .collect(),
    )
}

/// Renders a structured JSON tree with `kind` discriminators; object keys
/// come out sorted, so the output is byte-stable.
pub fn to_structured(e: &Estimand) -> Value {
    match e {
        Estimand::Term { joint, given } => json!({
            "kind": "term",
            "joint": atoms_json(joint),
            "given": atoms_json(given),
        }),
        Estimand::DoTerm { joint, r#do, given } => json!({
            "kind": "do_term",
            "joint": atoms_json(joint),
            "do": atoms_json(r#do),
            "given": atoms_json(given),
        }),
        Estimand::Expectation {
            target,
            r#do,
            given,
        } => json!({
            "kind": "expectation",
            "target": target.to_string(),
            "do": atoms_json(r#do),
            "given": atoms_json(given),
        }),
        Estimand::Sum { bound, body } => json!({
            "kind": "sum",
            "bound": bound.iter()
                .map(|(v, t)| json!({ "var": v.to_string(), "token": t }))
                .collect::<Vec<_>>(),
            "children": [to_structured(body)],
        }),
        Estimand::Product(factors) => json!({
            "kind": "product",
            "children": factors.iter().map(to_structured).collect::<Vec<_>>(),
        }),
        Estimand::Quotient {
            numerator,
            denominator,
        } => json!({
            "kind": "quotient",
            "children": [to_structured(numerator), to_structured(denominator)],
        }),
        Estimand::Difference {
            minuend,
            subtrahend,
        } => json!({
            "kind": "difference",
            "children": [to_structured(minuend), to_structured(subtrahend)],
        }),
    }
}

impl fmt::Display for Estimand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&to_text(self))
    }
}
