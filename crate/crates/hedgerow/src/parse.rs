//! Parser for the estimand text grammar — the inverse of
//! [`crate::render::to_text`].
//!
//! ```text
//! expr    := frac (' - ' frac)*          contrasts, left-associative
//! frac    := product ('/' product)*      ratios, binding tighter than '-'
//! product := factor+                     juxtaposition
//! factor  := 'sum_{' tokens '}' expr     a bare sum swallows the rest of
//!          | '(' expr ')'                its enclosing scope
//!          | 'P(' ... ')' | 'E[' ... ']' | '0' | '1'
//! ```
//!
//! Value tokens are resolved to graph variables by the longest-prefix rule:
//! the token's longest prefix that is the (lowercased) name of a node wins,
//! and the remainder must be a plain value suffix (letters, digits, or
//! primes). So with nodes `C` and `C1` in scope, `c1` names `C1` while
//! `c2` names... `C` with suffix `2` only if `C2` is absent. Parsing an
//! estimand therefore needs the graph it is about.

use crate::error::ParseError;
use crate::estimand::{Atom, Estimand};
use crate::graph::{Admg, Variable};

/// Parses the canonical text form of an estimand against `graph`'s nodes.
pub fn parse_estimand(input: &str, graph: &Admg) -> Result<Estimand, ParseError> {
    let mut p = Parser {
        src: input.as_bytes(),
        pos: 0,
        graph,
    };
    let e = p.expr()?;
    p.ws();
    if p.pos != p.src.len() {
        return Err(p.err("trailing input after estimand"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    graph: &'a Admg,
}

impl<'a> Parser<'a> {
    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError::col(self.pos + 1, message)
    }

    fn ws(&mut self) {
        while self
            .src
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_whitespace())
        {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{}`", c as char)))
        }
    }

    fn starts_with(&self, s: &str) -> bool {
        self.src[self.pos..].starts_with(s.as_bytes())
    }

    fn expr(&mut self) -> Result<Estimand, ParseError> {
        let mut acc = self.frac()?;
        loop {
            self.ws();
            if self.eat(b'-') {
                let rhs = self.frac()?;
                acc = Estimand::difference(acc, rhs);
            } else {
                break;
            }
        }
        Ok(acc)
    }

    fn frac(&mut self) -> Result<Estimand, ParseError> {
        let mut acc = self.product()?;
        loop {
            self.ws();
            if self.eat(b'/') {
                let rhs = self.product()?;
                acc = Estimand::quotient(acc, rhs);
            } else {
                break;
            }
        }
        Ok(acc)
    }

    fn product(&mut self) -> Result<Estimand, ParseError> {
        let mut factors = Vec::new();
        loop {
            self.ws();
            match self.peek() {
                None | Some(b')') | Some(b']') | Some(b'-') | Some(b'/') | Some(b'}') => break,
                _ => factors.push(self.factor()?),
            }
        }
        match factors.len() {
            0 => Err(self.err("expected a term")),
            1 => Ok(factors.pop().expect("length checked")),
            _ => Ok(Estimand::Product(factors)),
        }
    }

    fn factor(&mut self) -> Result<Estimand, ParseError> {
        self.ws();
        if self.starts_with("sum_{") {
            self.pos += "sum_{".len();
            let mut bound = Vec::new();
            loop {
                self.ws();
                let start = self.pos;
                let token = self.token()?;
                let var = self.resolve(&token, start)?;
                bound.push((var, token));
                self.ws();
                if !self.eat(b',') {
                    break;
                }
            }
            self.expect(b'}')?;
            let body = self.expr()?;
            return Ok(Estimand::Sum {
                bound,
                body: Box::new(body),
            });
        }
        if self.eat(b'(') {
            let e = self.expr()?;
            self.ws();
            self.expect(b')')?;
            return Ok(e);
        }
        if self.starts_with("P(") {
            self.pos += 2;
            return self.probability();
        }
        if self.starts_with("E[") {
            self.pos += 2;
            return self.expectation();
        }
        if self.eat(b'1') {
            return Ok(Estimand::one());
        }
        if self.eat(b'0') {
            return Ok(Estimand::zero());
        }
        Err(self.err("expected `P(`, `E[`, `sum_{`, `(`, `0`, or `1`"))
    }

    /// Body of `P(...)` after the opening parenthesis.
    fn probability(&mut self) -> Result<Estimand, ParseError> {
        let joint = self.atoms(b"|)")?;
        if joint.is_empty() {
            return Err(self.err("empty probability term"));
        }
        let mut r#do = Vec::new();
        let mut given = Vec::new();
        if self.eat(b'|') {
            self.ws();
            if self.starts_with("do(") {
                self.pos += 3;
                r#do = self.atoms(b")")?;
                self.expect(b')')?;
                if r#do.is_empty() {
                    return Err(self.err("empty do() list"));
                }
                self.ws();
                if self.eat(b',') {
                    given = self.atoms(b")")?;
                }
            } else {
                given = self.atoms(b")")?;
            }
            if r#do.is_empty() && given.is_empty() {
                return Err(self.err("empty conditioning list"));
            }
        }
        self.expect(b')')?;
        if r#do.is_empty() {
            Ok(Estimand::term(joint, given))
        } else {
            Ok(Estimand::do_term(joint, r#do, given))
        }
    }

    /// Body of `E[...]` after the opening bracket.
    fn expectation(&mut self) -> Result<Estimand, ParseError> {
        self.ws();
        let start = self.pos;
        let name = self.token()?;
        let target = self
            .graph
            .var(&name)
            .map_err(|_| ParseError::col(start + 1, format!("unknown variable `{name}`")))?;
        let mut r#do = Vec::new();
        let mut given = Vec::new();
        self.ws();
        if self.eat(b'|') {
            self.ws();
            if self.starts_with("do(") {
                self.pos += 3;
                r#do = self.atoms(b")")?;
                self.expect(b')')?;
                self.ws();
                if self.eat(b',') {
                    given = self.atoms(b"]")?;
                }
            } else {
                given = self.atoms(b"]")?;
            }
        }
        self.expect(b']')?;
        if r#do.is_empty() {
            Ok(Estimand::expectation(target, given))
        } else {
            Ok(Estimand::expectation_do(target, r#do, given))
        }
    }

    /// A comma-separated list of value tokens, stopping before any of
    /// `stops`; each token is resolved to a variable.
    fn atoms(&mut self, stops: &[u8]) -> Result<Vec<Atom>, ParseError> {
        let mut out = Vec::new();
        loop {
            self.ws();
            match self.peek() {
                Some(c) if stops.contains(&c) => break,
                None => break,
                _ => {}
            }
            let start = self.pos;
            let token = self.token()?;
            let var = self.resolve(&token, start)?;
            out.push(Atom::new(var, token));
            self.ws();
            if !self.eat(b',') {
                break;
            }
        }
        Ok(out)
    }

    /// A value token: a letter followed by letters, digits, underscores, or
    /// primes.
    fn token(&mut self) -> Result<String, ParseError> {
        let start = self.pos;
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() => self.pos += 1,
            _ => return Err(self.err("expected a value token")),
        }
        while self
            .peek()
            .is_some_and(|c| c.is_ascii_alphanumeric() || c == b'_' || c == b'\'')
        {
            self.pos += 1;
        }
        Ok(std::str::from_utf8(&self.src[start..self.pos])
            .expect("token bytes are ASCII")
            .to_owned())
    }

    /// Longest-prefix resolution of a value token to a base variable.
    fn resolve(&self, token: &str, start: usize) -> Result<Variable, ParseError> {
        let token_lc = token.to_lowercase();
        let mut best: Option<&Variable> = None;
        for node in self.graph.nodes() {
            if node.is_counterfactual() {
                continue;
            }
            let name_lc = node.name().to_lowercase();
            if token_lc.starts_with(&name_lc) && best.is_none_or(|b| name_lc.len() > b.name().len())
            {
                best = Some(node);
            }
        }
        match best {
            Some(node) => Ok(node.clone()),
            None => Err(ParseError::col(
                start + 1,
                format!("value token `{token}` does not name any variable of the graph"),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::to_text;

    fn graph() -> Admg {
        Admg::build_named(
            &["A", "C", "M", "Y"],
            &[("C", "A"), ("C", "Y"), ("A", "M"), ("M", "Y"), ("A", "Y")],
            &[],
        )
        .unwrap()
    }

    #[test]
    fn round_trips_the_conditional_intervention_formula() {
        let g = graph();
        let text = "(sum_{c} P(c) P(a0|c) P(y|a1,c)) / P(a0)";
        let e = parse_estimand(text, &g).unwrap();
        assert_eq!(to_text(&e), text);
    }

    #[test]
    fn round_trips_contrasts_and_expectations() {
        let g = graph();
        let text = "sum_{m} (E[Y|a1,m] - E[Y|a0,m]) P(m|a0)";
        let e = parse_estimand(text, &g).unwrap();
        assert_eq!(to_text(&e), text);
    }

    #[test]
    fn bare_sum_swallows_the_rest_of_scope() {
        let g = graph();
        let e = parse_estimand("sum_{m} P(m|a) P(y|m)", &g).unwrap();
        match e {
            Estimand::Sum { bound, body } => {
                assert_eq!(bound.len(), 1);
                assert!(matches!(*body, Estimand::Product(ref fs) if fs.len() == 2));
            }
            other => panic!("expected a sum, got {other:?}"),
        }
    }

    #[test]
    fn longest_variable_prefix_wins() {
        let g = Admg::build_named(&["C", "C1", "A"], &[("C", "A"), ("C1", "A")], &[]).unwrap();
        let e = parse_estimand("P(a|c1,c2)", &g).unwrap();
        match e {
            Estimand::Term { given, .. } => {
                let vars: Vec<&str> = given.iter().map(|a| a.var.name()).collect();
                // `c1` names C1; `c2` falls back to C with suffix `2`.
                assert_eq!(vars, ["C", "C1"]);
            }
            other => panic!("expected a term, got {other:?}"),
        }
    }

    #[test]
    fn reports_positions_for_bad_input() {
        let g = graph();
        let err = parse_estimand("P(q)", &g).unwrap_err();
        assert_eq!(err.line, 1);
        assert_eq!(err.column, 3);
        let err = parse_estimand("P(y", &g).unwrap_err();
        assert!(err.message.contains("expected"));
    }

    #[test]
    fn parses_do_terms_and_constants() {
        let g = graph();
        let e = parse_estimand("P(y|do(a1),c)", &g).unwrap();
        assert!(e.contains_do());
        assert_eq!(to_text(&e), "P(y|do(a1),c)");
        assert!(parse_estimand("0", &g).unwrap().is_zero());
        assert!(parse_estimand("1", &g).unwrap().is_one());
    }
}
