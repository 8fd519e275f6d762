//! File formats and query syntax: the text front end.
//!
//! Three little languages connect the engine to the command line:
//!
//! * **Graph files** — one statement per line: `node A, B` declares nodes,
//!   `A -> B` a directed edge, `A <-> B` a bidirected edge; `#` starts a
//!   comment and blank lines are ignored. Every node must be declared
//!   before an edge uses it, so typos fail loudly.
//! * **Model files** — a TOML document with `variables`, `exogenous`,
//!   `edges`, and `tables` sections describing a [`DiscreteScm`]. Table
//!   rows are keyed by parent assignments like `"A=0, U=1"` (the empty key
//!   is `"()"`).
//! * **Queries** — `P(Y | do(A))` for interventional queries, with values
//!   as in `P(Y=1 | do(A=0))`, extra conditioning after the bar as in
//!   `P(Y | do(A), C)`; counterfactual conjunctions as in
//!   `P( Y[A=1]=1 , A=0 )`, with nested worlds `Y[A=1, M[A=0]]` and a bar
//!   separating evidence. Paths are written `A->M1->M2->Y`.
//!
//! Serializers ([`graph_to_string`], [`model_to_string`]) emit canonical
//! text that re-parses to an equal value.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ctf::{CtfAtom, CtfIntervention, CtfQuery};
use crate::error::ParseError;
use crate::graph::{Admg, Variable};
use crate::scm::{DiscreteScm, ExogenousVar, Table};

// ---------------------------------------------------------------------------
// Graph files
// ---------------------------------------------------------------------------

/// Parses the graph file grammar.
pub fn parse_graph(text: &str) -> Result<Admg, ParseError> {
    let mut nodes: Vec<String> = Vec::new();
    let mut directed: Vec<(String, String)> = Vec::new();
    let mut bidirected: Vec<(String, String)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let stmt = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if stmt.is_empty() {
            continue;
        }
        if let Some(rest) = stmt.strip_prefix("node ") {
            for name in rest.split(',') {
                let name = name.trim();
                if name.is_empty() {
                    return Err(ParseError::at(line, 1, "empty name in node statement"));
                }
                check_ident(name, line)?;
                if nodes.iter().any(|n| n == name) {
                    return Err(ParseError::at(
                        line,
                        1,
                        format!("node `{name}` declared twice"),
                    ));
                }
                nodes.push(name.to_string());
            }
        } else if let Some((lhs, rhs)) = stmt.split_once("<->") {
            let (a, b) = (lhs.trim(), rhs.trim());
            check_edge_ends(a, b, &nodes, line)?;
            bidirected.push((a.to_string(), b.to_string()));
        } else if let Some((lhs, rhs)) = stmt.split_once("->") {
            let (a, b) = (lhs.trim(), rhs.trim());
            check_edge_ends(a, b, &nodes, line)?;
            directed.push((a.to_string(), b.to_string()));
        } else {
            return Err(ParseError::at(
                line,
                1,
                format!("expected `node`, `->`, or `<->` statement, found `{stmt}`"),
            ));
        }
    }
    let node_refs: Vec<&str> = nodes.iter().map(|s| s.as_str()).collect();
    let directed_refs: Vec<(&str, &str)> = directed
        .iter()
        .map(|(a, b)| (a.as_str(), b.as_str()))
        .collect();
    let bidirected_refs: Vec<(&str, &str)> = bidirected
        .iter()
        .map(|(a, b)| (a.as_str(), b.as_str()))
        .collect();
    Admg::build_named(&node_refs, &directed_refs, &bidirected_refs)
        .map_err(|e| ParseError::at(0, 0, e.to_string()))
}

fn check_ident(name: &str, line: usize) -> Result<(), ParseError> {
    let mut chars = name.chars();
    let ok_first = chars
        .next()
        .map(|c| c.is_ascii_alphabetic() || c == '_')
        .unwrap_or(false);
    if !ok_first || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(ParseError::at(
            line,
            1,
            format!("`{name}` is not a valid identifier"),
        ));
    }
    Ok(())
}

fn check_edge_ends(a: &str, b: &str, nodes: &[String], line: usize) -> Result<(), ParseError> {
    for end in [a, b] {
        if end.is_empty() {
            return Err(ParseError::at(
                line,
                1,
                "edge statement is missing an endpoint",
            ));
        }
        check_ident(end, line)?;
        if !nodes.iter().any(|n| n == end) {
            return Err(ParseError::at(
                line,
                1,
                format!("`{end}` is not declared; add it to a `node` statement first"),
            ));
        }
    }
    Ok(())
}

/// Serializes a graph to the file grammar (canonical form: one `node`
/// statement, then directed edges, then bidirected edges, all sorted).
pub fn graph_to_string(g: &Admg) -> String {
    let mut out = String::new();
    let names: Vec<&str> = g.nodes().iter().map(|v| v.name()).collect();
    if !names.is_empty() {
        out.push_str("node ");
        out.push_str(&names.join(", "));
        out.push('\n');
    }
    for (a, b) in g.directed_edges() {
        out.push_str(&format!("{} -> {}\n", a.name(), b.name()));
    }
    for (a, b) in g.bidirected_edges() {
        out.push_str(&format!("{} <-> {}\n", a.name(), b.name()));
    }
    out
}

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct ModelDoc {
    variables: Vec<VariableDoc>,
    #[serde(default)]
    exogenous: Vec<ExogenousDoc>,
    edges: EdgesDoc,
    tables: BTreeMap<String, TableDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct VariableDoc {
    name: String,
    domain: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ExogenousDoc {
    name: String,
    domain: Vec<String>,
    prior: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgesDoc {
    #[serde(default)]
    directed: Vec<(String, String)>,
    #[serde(default)]
    bidirected: Vec<(String, String)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TableDoc {
    /// All parents, observed and exogenous, in row-key order.
    parents: Vec<String>,
    rows: BTreeMap<String, Vec<f64>>,
}

/// Parses and validates a model file.
pub fn parse_model(text: &str) -> Result<DiscreteScm, ParseError> {
    let doc: ModelDoc = toml::from_str(text).map_err(|e| {
        let (line, column) = e
            .span()
            .map(|s| offset_to_position(text, s.start))
            .unwrap_or((0, 0));
        ParseError::at(line, column, e.message().to_string())
    })?;
    let fail = |msg: String| ParseError::at(0, 0, msg);

    let node_names: Vec<&str> = doc.variables.iter().map(|v| v.name.as_str()).collect();
    let directed: Vec<(&str, &str)> = doc
        .edges
        .directed
        .iter()
        .map(|(a, b)| (a.as_str(), b.as_str()))
        .collect();
    let bidirected: Vec<(&str, &str)> = doc
        .edges
        .bidirected
        .iter()
        .map(|(a, b)| (a.as_str(), b.as_str()))
        .collect();
    let graph =
        Admg::build_named(&node_names, &directed, &bidirected).map_err(|e| fail(e.to_string()))?;

    let mut domains = BTreeMap::new();
    for v in &doc.variables {
        domains.insert(Variable::new(v.name.clone()), v.domain.clone());
    }
    let exogenous: Vec<ExogenousVar> = doc
        .exogenous
        .iter()
        .map(|e| ExogenousVar {
            name: e.name.clone(),
            domain: e.domain.clone(),
            prior: e.prior.clone(),
        })
        .collect();

    let mut tables = BTreeMap::new();
    for (name, table) in &doc.tables {
        let var = graph.var(name).map_err(|e| fail(e.to_string()))?;
        // Split the listed parents into observed and exogenous by name.
        let mut parents = Vec::new();
        let mut exo_parents = Vec::new();
        for p in &table.parents {
            if graph.var(p).is_ok() {
                parents.push(p.clone());
            } else if doc.exogenous.iter().any(|e| &e.name == p) {
                exo_parents.push(p.clone());
            } else {
                return Err(fail(format!(
                    "table for `{name}` lists `{p}`, which is neither a node nor exogenous"
                )));
            }
        }
        // Row keys name their assignments; rebuild them in canonical
        // parents-then-exogenous order so entry order never matters.
        let mut rows = BTreeMap::new();
        for (key, row) in &table.rows {
            let assignment = parse_row_key(key, name)?;
            if assignment.len() != parents.len() + exo_parents.len() {
                return Err(fail(format!(
                    "row `{key}` of `{name}` assigns {} parents; the table lists {}",
                    assignment.len(),
                    parents.len() + exo_parents.len()
                )));
            }
            let mut canonical = Vec::with_capacity(assignment.len());
            for p in parents.iter().chain(&exo_parents) {
                match assignment.get(p) {
                    Some(val) => canonical.push(val.clone()),
                    None => {
                        return Err(fail(format!(
                            "row `{key}` of `{name}` does not assign parent `{p}`"
                        )))
                    }
                }
            }
            if rows.insert(canonical, row.clone()).is_some() {
                return Err(fail(format!("row `{key}` of `{name}` appears twice")));
            }
        }
        tables.insert(
            var,
            Table {
                parents,
                exo_parents,
                rows,
            },
        );
    }

    DiscreteScm::new(graph, domains, exogenous, tables).map_err(|e| fail(e.to_string()))
}

fn parse_row_key(key: &str, table: &str) -> Result<BTreeMap<String, String>, ParseError> {
    let trimmed = key.trim();
    let mut out = BTreeMap::new();
    if trimmed == "()" || trimmed.is_empty() {
        return Ok(out);
    }
    for part in trimmed.split(',') {
        let (name, value) = part.split_once('=').ok_or_else(|| {
            ParseError::at(
                0,
                0,
                format!("row key `{key}` of `{table}` needs `name=value` entries"),
            )
        })?;
        let (name, value) = (name.trim().to_string(), value.trim().to_string());
        if out.insert(name.clone(), value).is_some() {
            return Err(ParseError::at(
                0,
                0,
                format!("row key `{key}` of `{table}` assigns `{name}` twice"),
            ));
        }
    }
    Ok(out)
}

fn offset_to_position(text: &str, offset: usize) -> (usize, usize) {
    let mut line = 1;
    let mut column = 1;
    for (i, c) in text.char_indices() {
        if i >= offset {
            break;
        }
        if c == '\n' {
            line += 1;
            column = 1;
        } else {
            column += 1;
        }
    }
    (line, column)
}

/// Serializes a model to the (canonical) TOML file format.
pub fn model_to_string(m: &DiscreteScm) -> String {
    let variables = m
        .graph()
        .nodes()
        .iter()
        .map(|v| VariableDoc {
            name: v.name().to_string(),
            domain: m.domains()[v].clone(),
        })
        .collect();
    let exogenous = m
        .exogenous()
        .iter()
        .map(|e| ExogenousDoc {
            name: e.name.clone(),
            domain: e.domain.clone(),
            prior: e.prior.clone(),
        })
        .collect();
    let edges = EdgesDoc {
        directed: m
            .graph()
            .directed_edges()
            .iter()
            .map(|(a, b)| (a.name().to_string(), b.name().to_string()))
            .collect(),
        bidirected: m
            .graph()
            .bidirected_edges()
            .iter()
            .map(|(a, b)| (a.name().to_string(), b.name().to_string()))
            .collect(),
    };
    let mut tables = BTreeMap::new();
    for (v, table) in m.tables() {
        let listed: Vec<String> = table
            .parents
            .iter()
            .chain(&table.exo_parents)
            .cloned()
            .collect();
        let mut rows = BTreeMap::new();
        for (key, row) in &table.rows {
            let label = if key.is_empty() {
                "()".to_string()
            } else {
                listed
                    .iter()
                    .zip(key)
                    .map(|(p, val)| format!("{p}={val}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            };
            rows.insert(label, row.clone());
        }
        tables.insert(
            v.name().to_string(),
            TableDoc {
                parents: listed,
                rows,
            },
        );
    }
    let doc = ModelDoc {
        variables,
        exogenous,
        edges,
        tables,
    };
    toml::to_string_pretty(&doc).expect("model document serializes")
}

// ---------------------------------------------------------------------------
// Queries
// ---------------------------------------------------------------------------

/// One atom of an interventional query: a variable with an optional
/// explicit value (absent means symbolic, as in `P(Y | do(A))`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalAtom {
    /// The variable.
    pub var: Variable,
    /// The explicit value, if the query supplied one (`Y=1`).
    pub value: Option<String>,
}

/// An interventional query `P(outcomes | do(treatments), given)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalQuery {
    /// The outcome atoms (left of the bar).
    pub outcomes: Vec<CausalAtom>,
    /// The intervened atoms (inside `do(...)`).
    pub treatments: Vec<CausalAtom>,
    /// Additional conditioning atoms (after the bar, outside `do`).
    pub given: Vec<CausalAtom>,
}

/// A parsed query: either interventional (`do(...)` present) or a
/// counterfactual conjunction (world subscripts, or no `do`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Query {
    /// `P(Y | do(A), C)`-style query.
    Causal(CausalQuery),
    /// `P( Y[A=1]=1 , A=0 )`-style query.
    Counterfactual(CtfQuery),
}

/// Parses a query against a graph (variables must be nodes).
pub fn parse_query(text: &str, g: &Admg) -> Result<Query, ParseError> {
    let mut cur = Cursor::new(text);
    cur.skip_ws();
    cur.expect('P')?;
    cur.skip_ws();
    cur.expect('(')?;
    // Left of the bar: outcome/conjunction atoms.
    let mut left = Vec::new();
    loop {
        cur.skip_ws();
        left.push(parse_query_atom(&mut cur, g)?);
        cur.skip_ws();
        if cur.eat(',') {
            continue;
        }
        break;
    }
    // Right of the bar: do-groups and conditioning atoms.
    let mut treatments: Vec<ParsedAtom> = Vec::new();
    let mut right: Vec<ParsedAtom> = Vec::new();
    let mut saw_do = false;
    cur.skip_ws();
    if cur.eat('|') {
        loop {
            cur.skip_ws();
            if cur.peek_keyword("do") {
                cur.expect_keyword("do")?;
                cur.skip_ws();
                cur.expect('(')?;
                loop {
                    cur.skip_ws();
                    let atom = parse_query_atom(&mut cur, g)?;
                    if !atom.subscript.is_empty() {
                        return Err(cur.err("a do() entry cannot carry a world subscript"));
                    }
                    treatments.push(atom);
                    cur.skip_ws();
                    if cur.eat(',') {
                        continue;
                    }
                    break;
                }
                cur.expect(')')?;
                saw_do = true;
            } else {
                right.push(parse_query_atom(&mut cur, g)?);
            }
            cur.skip_ws();
            if cur.eat(',') {
                continue;
            }
            break;
        }
    }
    cur.skip_ws();
    cur.expect(')')?;
    cur.skip_ws();
    if !cur.at_end() {
        return Err(cur.err("trailing input after the closing parenthesis"));
    }

    let any_subscript = left.iter().chain(&right).any(|a| !a.subscript.is_empty());
    if saw_do {
        if any_subscript {
            return Err(ParseError::at(
                1,
                1,
                "mixing do(...) with world subscripts is not supported; \
                 write the whole query counterfactually instead",
            ));
        }
        let strip = |atoms: Vec<ParsedAtom>| {
            atoms
                .into_iter()
                .map(|a| CausalAtom {
                    var: a.var,
                    value: a.value,
                })
                .collect::<Vec<_>>()
        };
        return Ok(Query::Causal(CausalQuery {
            outcomes: strip(left),
            treatments: strip(treatments),
            given: strip(right),
        }));
    }
    let to_ctf = |atoms: Vec<ParsedAtom>| {
        atoms
            .into_iter()
            .map(|a| {
                let value = a.value.unwrap_or_else(|| a.var.name().to_lowercase());
                CtfAtom::new(a.var, a.subscript, value)
            })
            .collect::<Vec<_>>()
    };
    let query = CtfQuery::new(to_ctf(left), to_ctf(right))
        .map_err(|e| ParseError::at(1, 1, e.to_string()))?;
    Ok(Query::Counterfactual(query))
}

struct ParsedAtom {
    var: Variable,
    subscript: Vec<CtfIntervention>,
    value: Option<String>,
}

fn parse_query_atom(cur: &mut Cursor, g: &Admg) -> Result<ParsedAtom, ParseError> {
    cur.skip_ws();
    let col = cur.col();
    let name = cur.ident()?;
    let var = g
        .var(&name)
        .map_err(|_| ParseError::at(1, col, format!("`{name}` is not a node of the graph")))?;
    cur.skip_ws();
    let subscript = if cur.eat('[') {
        let entries = parse_subscript(cur, g)?;
        cur.expect(']')?;
        entries
    } else {
        Vec::new()
    };
    cur.skip_ws();
    let value = if cur.eat('=') {
        cur.skip_ws();
        Some(cur.value_token()?)
    } else {
        None
    };
    Ok(ParsedAtom {
        var,
        subscript,
        value,
    })
}

fn parse_subscript(cur: &mut Cursor, g: &Admg) -> Result<Vec<CtfIntervention>, ParseError> {
    let mut entries = Vec::new();
    loop {
        cur.skip_ws();
        let col = cur.col();
        let name = cur.ident()?;
        let var = g
            .var(&name)
            .map_err(|_| ParseError::at(1, col, format!("`{name}` is not a node of the graph")))?;
        cur.skip_ws();
        if cur.eat('[') {
            // Nested world: the entry takes its counterfactual value.
            let inner = parse_subscript(cur, g)?;
            cur.expect(']')?;
            cur.skip_ws();
            if cur.peek() == Some('=') {
                return Err(
                    cur.err("a nested intervention takes its world's value; it cannot be assigned")
                );
            }
            entries.push(CtfIntervention::Nested(var, inner));
        } else if cur.eat('=') {
            cur.skip_ws();
            let value = cur.value_token()?;
            entries.push(CtfIntervention::Fixed(var, value));
        } else {
            return Err(cur.err("a subscript entry needs `=value` or a nested `[...]`"));
        }
        cur.skip_ws();
        if cur.eat(',') {
            continue;
        }
        break;
    }
    Ok(entries)
}

// ---------------------------------------------------------------------------
// Paths
// ---------------------------------------------------------------------------

/// Parses a path written `A->M1->M2->Y` into its node sequence.
pub fn parse_path(text: &str, g: &Admg) -> Result<Vec<Variable>, ParseError> {
    let mut path = Vec::new();
    for part in text.split("->") {
        let name = part.trim();
        if name.is_empty() {
            return Err(ParseError::at(1, 1, "path has an empty segment"));
        }
        let var = g
            .var(name)
            .map_err(|_| ParseError::at(1, 1, format!("`{name}` is not a node of the graph")))?;
        path.push(var);
    }
    if path.len() < 2 {
        return Err(ParseError::at(1, 1, "a path needs at least two nodes"));
    }
    Ok(path)
}

// ---------------------------------------------------------------------------
// Cursor
// ---------------------------------------------------------------------------

struct Cursor {
    chars: Vec<char>,
    pos: usize,
}

impl Cursor {
    fn new(text: &str) -> Cursor {
        Cursor {
            chars: text.chars().collect(),
            pos: 0,
        }
    }

    fn col(&self) -> usize {
        self.pos + 1
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn at_end(&self) -> bool {
        self.pos >= self.chars.len()
    }

    fn skip_ws(&mut self) {
        while self.peek().map(|c| c.is_whitespace()).unwrap_or(false) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(format!(
                "expected `{c}`{}",
                self.peek()
                    .map(|f| format!(", found `{f}`"))
                    .unwrap_or_default()
            )))
        }
    }

    fn peek_keyword(&self, word: &str) -> bool {
        let end = self.pos + word.len();
        if end > self.chars.len() {
            return false;
        }
        let slice: String = self.chars[self.pos..end].iter().collect();
        if slice != word {
            return false;
        }
        // The keyword must not continue as an identifier (`done` ≠ `do`).
        !self
            .chars
            .get(end)
            .map(|c| c.is_ascii_alphanumeric() || *c == '_')
            .unwrap_or(false)
    }

    fn expect_keyword(&mut self, word: &str) -> Result<(), ParseError> {
        if self.peek_keyword(word) {
            self.pos += word.len();
            Ok(())
        } else {
            Err(self.err(format!("expected `{word}`")))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        let ok_first = self
            .peek()
            .map(|c| c.is_ascii_alphabetic() || c == '_')
            .unwrap_or(false);
        if !ok_first {
            return Err(self.err("expected an identifier"));
        }
        let start = self.pos;
        while self
            .peek()
            .map(|c| c.is_ascii_alphanumeric() || c == '_')
            .unwrap_or(false)
        {
            self.pos += 1;
        }
        Ok(self.chars[start..self.pos].iter().collect())
    }

    fn value_token(&mut self) -> Result<String, ParseError> {
        let start = self.pos;
        while self
            .peek()
            .map(|c| c.is_ascii_alphanumeric() || c == '_' || c == '\'')
            .unwrap_or(false)
        {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err("expected a value"));
        }
        Ok(self.chars[start..self.pos].iter().collect())
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError::at(1, self.col(), message)
    }
}
