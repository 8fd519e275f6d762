//! Acyclic directed mixed graphs (ADMGs) and their structural operations.
//!
//! An ADMG has a node set, directed edges `A -> B`, and bidirected edges
//! `A <-> B`, where a bidirected edge stands for an unobserved common cause
//! of its endpoints. This module provides the structural toolkit the
//! identification machinery is built on: topological order, reflexive
//! ancestors and descendants, edge cutting (mutilation), induced subgraphs,
//! confounded components (districts), m-separation, and proper causal paths.
//!
//! m-separation is decided on the canonical expansion of the graph: every
//! bidirected edge `A <-> B` is replaced by a hidden fork `A <- U -> B`, and
//! d-separation is decided on the resulting DAG with the
//! reachable-via-active-trails search of Koller & Friedman (Alg. 3.1). The
//! expansion makes collider activation through latent confounders explicit,
//! which is exactly where ad-hoc shortcuts tend to go wrong.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::GraphError;

/// A variable of the model: either a base variable such as `Y`, or a copy of
/// it in a counterfactual world, such as `Y@{A=a1}` (the value `Y` would have
/// taken had `A` been set to `a1`).
///
/// World tags are kept sorted by variable name, so two tags describing the
/// same intervention set compare equal. Base variables order before
/// counterfactual copies of the same name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Variable {
    name: String,
    world: Option<Vec<(String, String)>>,
}

impl Variable {
    /// A base (actual-world) variable.
    pub fn new(name: impl Into<String>) -> Self {
        Variable {
            name: name.into(),
            world: None,
        }
    }

    /// A copy of `name` in the world where each `(variable, value)` pair of
    /// `interventions` has been set by intervention.
    pub fn in_world(name: impl Into<String>, mut interventions: Vec<(String, String)>) -> Self {
        interventions.sort();
        interventions.dedup();
        Variable {
            name: name.into(),
            world: Some(interventions),
        }
    }

    /// The variable's name, without any world tag.
    pub fn name(&self) -> &str {
        &self.name
    }

    /// The world tag, if this is a counterfactual copy.
    pub fn world(&self) -> Option<&[(String, String)]> {
        self.world.as_deref()
    }

    /// The base variable this node is a copy of.
    pub fn base(&self) -> Variable {
        Variable {
            name: self.name.clone(),
            world: None,
        }
    }

    /// Whether this is a counterfactual copy rather than a base variable.
    pub fn is_counterfactual(&self) -> bool {
        self.world.is_some()
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)?;
        if let Some(world) = &self.world {
            let parts: Vec<String> = world
                .iter()
                .map(|(var, val)| format!("{var}={val}"))
                .collect();
            write!(f, "@{{{}}}", parts.join(","))?;
        }
        Ok(())
    }
}

/// An acyclic directed mixed graph.
///
/// Construction via [`Admg::build`] validates the node and edge lists and
/// rejects cyclic directed parts, so every value of this type is a valid
/// ADMG. Bidirected edges are stored with their endpoints in sorted order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Admg {
    nodes: BTreeSet<Variable>,
    directed: BTreeSet<(Variable, Variable)>,
    bidirected: BTreeSet<(Variable, Variable)>,
}

impl Admg {
    /// Builds an ADMG, checking that nodes are distinct, edge endpoints are
    /// declared nodes, no edge is a self-loop, and the directed part is
    /// acyclic.
    pub fn build(
        nodes: Vec<Variable>,
        directed: Vec<(Variable, Variable)>,
        bidirected: Vec<(Variable, Variable)>,
    ) -> Result<Admg, GraphError> {
        let mut node_set = BTreeSet::new();
        for node in nodes {
            if !node_set.insert(node.clone()) {
                return Err(GraphError::DuplicateNode(node.to_string()));
            }
        }
        let mut dir = BTreeSet::new();
        for (u, v) in directed {
            if !node_set.contains(&u) {
                return Err(GraphError::UnknownNode(u.to_string()));
            }
            if !node_set.contains(&v) {
                return Err(GraphError::UnknownNode(v.to_string()));
            }
            if u == v {
                return Err(GraphError::SelfLoop(u.to_string()));
            }
            dir.insert((u, v));
        }
        let mut bid = BTreeSet::new();
        for (a, b) in bidirected {
            if !node_set.contains(&a) {
                return Err(GraphError::UnknownNode(a.to_string()));
            }
            if !node_set.contains(&b) {
                return Err(GraphError::UnknownNode(b.to_string()));
            }
            if a == b {
                return Err(GraphError::SelfLoop(a.to_string()));
            }
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            bid.insert((lo, hi));
        }
        let graph = Admg {
            nodes: node_set,
            directed: dir,
            bidirected: bid,
        };
        let (_, remaining) = graph.kahn();
        if let Some(witness) = remaining.iter().next() {
            return Err(GraphError::Cycle(witness.to_string()));
        }
        Ok(graph)
    }

    /// Convenience constructor over plain names, for base-world graphs.
    pub fn build_named(
        nodes: &[&str],
        directed: &[(&str, &str)],
        bidirected: &[(&str, &str)],
    ) -> Result<Admg, GraphError> {
        Admg::build(
            nodes.iter().map(|n| Variable::new(*n)).collect(),
            directed
                .iter()
                .map(|(u, v)| (Variable::new(*u), Variable::new(*v)))
                .collect(),
            bidirected
                .iter()
                .map(|(a, b)| (Variable::new(*a), Variable::new(*b)))
                .collect(),
        )
    }

    /// The node set.
    pub fn nodes(&self) -> &BTreeSet<Variable> {
        &self.nodes
    }

    /// The directed edges, as `(parent, child)` pairs.
    pub fn directed_edges(&self) -> &BTreeSet<(Variable, Variable)> {
        &self.directed
    }

    /// The bidirected edges, with endpoints in sorted order.
    pub fn bidirected_edges(&self) -> &BTreeSet<(Variable, Variable)> {
        &self.bidirected
    }

    /// Whether `v` is a node of the graph.
    pub fn contains(&self, v: &Variable) -> bool {
        self.nodes.contains(v)
    }

    /// Whether the directed edge `u -> v` is present.
    pub fn has_directed(&self, u: &Variable, v: &Variable) -> bool {
        self.directed.contains(&(u.clone(), v.clone()))
    }

    /// Whether the bidirected edge `a <-> b` is present (in either writing).
    pub fn has_bidirected(&self, a: &Variable, b: &Variable) -> bool {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        self.bidirected.contains(&(lo.clone(), hi.clone()))
    }

    /// Resolves a base-world variable by name.
    pub fn var(&self, name: &str) -> Result<Variable, GraphError> {
        let v = Variable::new(name);
        if self.nodes.contains(&v) {
            Ok(v)
        } else {
            Err(GraphError::UnknownNode(name.to_string()))
        }
    }

    /// Resolves several base-world variables by name.
    pub fn set(&self, names: &[&str]) -> Result<BTreeSet<Variable>, GraphError> {
        names.iter().map(|n| self.var(n)).collect()
    }

    /// Direct causes of `v`.
    pub fn parents_of(&self, v: &Variable) -> BTreeSet<Variable> {
        self.directed
            .iter()
            .filter(|(_, c)| c == v)
            .map(|(p, _)| p.clone())
            .collect()
    }

    /// Direct effects of `v`.
    pub fn children_of(&self, v: &Variable) -> BTreeSet<Variable> {
        self.directed
            .iter()
            .filter(|(p, _)| p == v)
            .map(|(_, c)| c.clone())
            .collect()
    }

    /// Union of the parents of all members of `set` (not excluding `set`).
    pub fn parents_of_set(&self, set: &BTreeSet<Variable>) -> BTreeSet<Variable> {
        self.directed
            .iter()
            .filter(|(_, c)| set.contains(c))
            .map(|(p, _)| p.clone())
            .collect()
    }

    /// Nodes joined to `v` by a bidirected edge.
    pub fn bidirected_neighbors(&self, v: &Variable) -> BTreeSet<Variable> {
        let mut out = BTreeSet::new();
        for (a, b) in &self.bidirected {
            if a == v {
                out.insert(b.clone());
            } else if b == v {
                out.insert(a.clone());
            }
        }
        out
    }

    /// Reflexive ancestors of `seeds` (seeds outside the graph are ignored).
    pub fn ancestors(&self, seeds: &BTreeSet<Variable>) -> BTreeSet<Variable> {
        let mut out: BTreeSet<Variable> = seeds.intersection(&self.nodes).cloned().collect();
        let mut stack: Vec<Variable> = out.iter().cloned().collect();
        while let Some(v) = stack.pop() {
            for p in self.parents_of(&v) {
                if out.insert(p.clone()) {
                    stack.push(p);
                }
            }
        }
        out
    }

    /// Reflexive descendants of `seeds` (seeds outside the graph are ignored).
    pub fn descendants(&self, seeds: &BTreeSet<Variable>) -> BTreeSet<Variable> {
        let mut out: BTreeSet<Variable> = seeds.intersection(&self.nodes).cloned().collect();
        let mut stack: Vec<Variable> = out.iter().cloned().collect();
        while let Some(v) = stack.pop() {
            for c in self.children_of(&v) {
                if out.insert(c.clone()) {
                    stack.push(c);
                }
            }
        }
        out
    }

    /// The graph with all edges into `cut_incoming` removed (directed edges
    /// pointing at a member, and bidirected edges touching a member) and all
    /// directed edges out of `cut_outgoing` removed. Nodes are kept.
    ///
    /// Cutting incoming edges of the treatments is the graph of the
    /// intervened model; cutting outgoing edges is what Pearl's back-door
    /// rule (do-calculus Rule 2) inspects.
    pub fn mutilate(
        &self,
        cut_incoming: &BTreeSet<Variable>,
        cut_outgoing: &BTreeSet<Variable>,
    ) -> Admg {
        let directed = self
            .directed
            .iter()
            .filter(|(u, v)| !cut_incoming.contains(v) && !cut_outgoing.contains(u))
            .cloned()
            .collect();
        let bidirected = self
            .bidirected
            .iter()
            .filter(|(a, b)| !cut_incoming.contains(a) && !cut_incoming.contains(b))
            .cloned()
            .collect();
        Admg {
            nodes: self.nodes.clone(),
            directed,
            bidirected,
        }
    }

    /// The subgraph induced by `keep`: nodes in `keep` and all edges with
    /// both endpoints kept.
    pub fn induced(&self, keep: &BTreeSet<Variable>) -> Admg {
        let nodes: BTreeSet<Variable> = self.nodes.intersection(keep).cloned().collect();
        let directed = self
            .directed
            .iter()
            .filter(|(u, v)| nodes.contains(u) && nodes.contains(v))
            .cloned()
            .collect();
        let bidirected = self
            .bidirected
            .iter()
            .filter(|(a, b)| nodes.contains(a) && nodes.contains(b))
            .cloned()
            .collect();
        Admg {
            nodes,
            directed,
            bidirected,
        }
    }

    /// A topological order of the directed part, smallest-name first among
    /// ties, so the order is deterministic across runs.
    pub fn topological_order(&self) -> Vec<Variable> {
        let (order, remaining) = self.kahn();
        debug_assert!(
            remaining.is_empty(),
            "validated ADMG cannot have a directed cycle"
        );
        order
    }

    /// Kahn's algorithm with a sorted frontier; returns the order and any
    /// nodes left unprocessed (nonempty exactly when there is a cycle).
    fn kahn(&self) -> (Vec<Variable>, BTreeSet<Variable>) {
        let mut indegree: BTreeMap<&Variable, usize> = self.nodes.iter().map(|v| (v, 0)).collect();
        for (_, v) in &self.directed {
            *indegree.get_mut(v).expect("edge endpoints are nodes") += 1;
        }
        let mut frontier: BTreeSet<&Variable> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(v, _)| *v)
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(&next) = frontier.iter().next() {
            frontier.remove(next);
            order.push(next.clone());
            for (u, v) in &self.directed {
                if u == next {
                    let d = indegree.get_mut(v).expect("edge endpoints are nodes");
                    *d -= 1;
                    if *d == 0 {
                        frontier.insert(v);
                    }
                }
            }
        }
        let processed: BTreeSet<&Variable> = order.iter().collect();
        let remaining = self
            .nodes
            .iter()
            .filter(|v| !processed.contains(v))
            .cloned()
            .collect();
        (order, remaining)
    }

    /// The length of the longest directed path from any root to each node
    /// (roots sit at depth 0). Sorting by descending depth puts every node
    /// after all of its ancestors, which is the order chain-rule expansions
    /// and truncated factorizations print their factors in.
    pub fn longest_path_depths(&self) -> BTreeMap<Variable, usize> {
        let mut depth: BTreeMap<Variable, usize> = BTreeMap::new();
        for v in self.topological_order() {
            let d = self
                .parents_of(&v)
                .iter()
                .map(|p| depth.get(p).copied().unwrap_or(0) + 1)
                .max()
                .unwrap_or(0);
            depth.insert(v, d);
        }
        depth
    }

    /// The confounded components (districts) of the graph: the partition of
    /// the nodes into maximal sets connected by bidirected edges. Components
    /// are returned ordered by their smallest member.
    pub fn c_components(&self) -> Vec<BTreeSet<Variable>> {
        let mut remaining: BTreeSet<Variable> = self.nodes.clone();
        let mut components = Vec::new();
        while let Some(seed) = remaining.iter().next().cloned() {
            remaining.remove(&seed);
            let mut component = BTreeSet::new();
            component.insert(seed.clone());
            let mut stack = vec![seed];
            while let Some(v) = stack.pop() {
                for nb in self.bidirected_neighbors(&v) {
                    if remaining.remove(&nb) {
                        component.insert(nb.clone());
                        stack.push(nb);
                    }
                }
            }
            components.push(component);
        }
        components
    }

    /// The district (confounded component) containing `v`.
    pub fn district_of(&self, v: &Variable) -> Result<BTreeSet<Variable>, GraphError> {
        if !self.nodes.contains(v) {
            return Err(GraphError::UnknownNode(v.to_string()));
        }
        Ok(self
            .c_components()
            .into_iter()
            .find(|c| c.contains(v))
            .expect("every node lies in some component"))
    }

    /// m-separation: whether every path between `x` and `y` is blocked by
    /// `z`.
    ///
    /// Decided by replacing each bidirected edge with a hidden fork and
    /// running the reachable-via-active-trails search on the expanded DAG.
    /// Following the usual graphoid convention, members of `z` are first
    /// removed from `x` and `y`; if the remaining sets intersect, the answer
    /// is `false`.
    pub fn m_separated(
        &self,
        x: &BTreeSet<Variable>,
        y: &BTreeSet<Variable>,
        z: &BTreeSet<Variable>,
    ) -> Result<bool, GraphError> {
        for v in x.iter().chain(y).chain(z) {
            if !self.nodes.contains(v) {
                return Err(GraphError::UnknownNode(v.to_string()));
            }
        }
        let x: BTreeSet<&Variable> = x.iter().filter(|v| !z.contains(v)).collect();
        let y: BTreeSet<&Variable> = y.iter().filter(|v| !z.contains(v)).collect();
        if x.iter().any(|v| y.contains(*v)) {
            return Ok(false);
        }
        if x.is_empty() || y.is_empty() {
            return Ok(true);
        }

        // Expanded DAG over indices: real nodes first, then one hidden fork
        // root per bidirected edge.
        let index: BTreeMap<&Variable, usize> =
            self.nodes.iter().enumerate().map(|(i, v)| (v, i)).collect();
        let n = self.nodes.len();
        let total = n + self.bidirected.len();
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); total];
        let mut parents: Vec<Vec<usize>> = vec![Vec::new(); total];
        for (u, v) in &self.directed {
            children[index[u]].push(index[v]);
            parents[index[v]].push(index[u]);
        }
        for (k, (a, b)) in self.bidirected.iter().enumerate() {
            let fork = n + k;
            for target in [index[a], index[b]] {
                children[fork].push(target);
                parents[target].push(fork);
            }
        }
        let mut in_z = vec![false; total];
        for v in z {
            in_z[index[v]] = true;
        }
        let mut in_y = vec![false; total];
        for v in &y {
            in_y[index[v]] = true;
        }

        // Reflexive ancestors of z in the expanded DAG: the nodes at which a
        // collider is opened by the conditioning set.
        let mut anc_z = vec![false; total];
        let mut stack: Vec<usize> = z.iter().map(|v| index[v]).collect();
        for &i in &stack {
            anc_z[i] = true;
        }
        while let Some(i) = stack.pop() {
            for &p in &parents[i] {
                if !anc_z[p] {
                    anc_z[p] = true;
                    stack.push(p);
                }
            }
        }

        // Active-trail search over (node, arrived-from-parent) states.
        const UP: usize = 0; // arrived from a child (or trail source)
        const DOWN: usize = 1; // arrived from a parent
        let mut seen = vec![[false; 2]; total];
        let mut queue: Vec<(usize, usize)> = x.iter().map(|v| (index[*v], UP)).collect();
        while let Some((w, dir)) = queue.pop() {
            if seen[w][dir] {
                continue;
            }
            seen[w][dir] = true;
            if in_y[w] {
                return Ok(false);
            }
            if dir == UP {
                // prev <- w: continue as a fork (to children) or a chain (to
                // parents); both need w unobserved.
                if !in_z[w] {
                    for &c in &children[w] {
                        queue.push((c, DOWN));
                    }
                    for &p in &parents[w] {
                        queue.push((p, UP));
                    }
                }
            } else {
                // prev -> w: chains continue to children when w is
                // unobserved; colliders open toward parents when w has a
                // descendant (or is itself) in z.
                if !in_z[w] {
                    for &c in &children[w] {
                        queue.push((c, DOWN));
                    }
                }
                if anc_z[w] {
                    for &p in &parents[w] {
                        queue.push((p, UP));
                    }
                }
            }
        }
        Ok(true)
    }

    /// All proper causal paths from `x` to `y`: directed paths that start in
    /// `x`, end in `y`, and meet `x` only at their first node. Paths are
    /// produced in depth-first order with children visited in sorted order,
    /// so the enumeration is deterministic.
    pub fn proper_causal_paths(
        &self,
        x: &BTreeSet<Variable>,
        y: &BTreeSet<Variable>,
    ) -> Result<Vec<Vec<Variable>>, GraphError> {
        for v in x.iter().chain(y) {
            if !self.nodes.contains(v) {
                return Err(GraphError::UnknownNode(v.to_string()));
            }
        }
        fn extend(
            g: &Admg,
            x: &BTreeSet<Variable>,
            y: &BTreeSet<Variable>,
            path: &mut Vec<Variable>,
            out: &mut Vec<Vec<Variable>>,
        ) {
            let last = path.last().expect("path starts nonempty").clone();
            for child in g.children_of(&last) {
                if x.contains(&child) {
                    continue;
                }
                path.push(child.clone());
                if y.contains(&child) {
                    out.push(path.clone());
                }
                extend(g, x, y, path, out);
                path.pop();
            }
        }
        let mut out = Vec::new();
        for start in x {
            let mut path = vec![start.clone()];
            extend(self, x, y, &mut path, &mut out);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(nodes: &[&str], d: &[(&str, &str)], b: &[(&str, &str)]) -> Admg {
        Admg::build_named(nodes, d, b).expect("test graph is valid")
    }

    #[test]
    fn build_rejects_malformed_graphs() {
        let dup = Admg::build_named(&["A", "A"], &[], &[]);
        assert_eq!(dup, Err(GraphError::DuplicateNode("A".into())));
        let unknown = Admg::build_named(&["A"], &[("A", "B")], &[]);
        assert_eq!(unknown, Err(GraphError::UnknownNode("B".into())));
        let self_loop = Admg::build_named(&["A"], &[("A", "A")], &[]);
        assert_eq!(self_loop, Err(GraphError::SelfLoop("A".into())));
        let cycle = Admg::build_named(&["A", "B"], &[("A", "B"), ("B", "A")], &[]);
        assert_eq!(cycle, Err(GraphError::Cycle("A".into())));
    }

    #[test]
    fn topological_order_breaks_ties_by_name() {
        let g6 = g(&["A", "C", "Y"], &[("C", "A"), ("C", "Y"), ("A", "Y")], &[]);
        let names: Vec<String> = g6
            .topological_order()
            .iter()
            .map(|v| v.name().to_string())
            .collect();
        assert_eq!(names, ["C", "A", "Y"]);
    }

    #[test]
    fn ancestors_and_descendants_are_reflexive() {
        let g6 = g(&["A", "C", "Y"], &[("C", "A"), ("C", "Y"), ("A", "Y")], &[]);
        let an_y = g6.ancestors(&g6.set(&["Y"]).unwrap());
        assert_eq!(an_y, g6.set(&["A", "C", "Y"]).unwrap());
        let de_c = g6.descendants(&g6.set(&["C"]).unwrap());
        assert_eq!(de_c, g6.set(&["A", "C", "Y"]).unwrap());
    }

    #[test]
    fn mutilation_cuts_the_right_edges() {
        let bow = g(&["A", "Y"], &[("A", "Y")], &[("A", "Y")]);
        let a = bow.set(&["A"]).unwrap();
        let none = BTreeSet::new();

        let cut_in = bow.mutilate(&a, &none);
        assert_eq!(cut_in.directed_edges().len(), 1);
        assert!(cut_in.bidirected_edges().is_empty());

        let cut_out = bow.mutilate(&none, &a);
        assert!(cut_out.directed_edges().is_empty());
        assert_eq!(cut_out.bidirected_edges().len(), 1);
    }

    #[test]
    fn c_components_partition_and_order() {
        // A <-> M2 and M1 <-> Y form the two districts.
        let g17 = g(
            &["A", "M1", "M2", "Y"],
            &[("A", "M1"), ("M1", "M2"), ("M2", "Y")],
            &[("A", "M2"), ("M1", "Y")],
        );
        let comps = g17.c_components();
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0], g17.set(&["A", "M2"]).unwrap());
        assert_eq!(comps[1], g17.set(&["M1", "Y"]).unwrap());
        assert_eq!(g17.district_of(&g17.var("M2").unwrap()).unwrap(), comps[0]);
    }

    #[test]
    fn m_separation_on_chains_forks_and_colliders() {
        let chain = g(&["A", "B", "C"], &[("A", "B"), ("B", "C")], &[]);
        let (a, b, c) = (
            chain.set(&["A"]).unwrap(),
            chain.set(&["B"]).unwrap(),
            chain.set(&["C"]).unwrap(),
        );
        assert!(!chain.m_separated(&a, &c, &BTreeSet::new()).unwrap());
        assert!(chain.m_separated(&a, &c, &b).unwrap());

        let collider = g(&["A", "B", "C"], &[("A", "C"), ("B", "C")], &[]);
        assert!(collider.m_separated(&a, &b, &BTreeSet::new()).unwrap());
        assert!(!collider.m_separated(&a, &b, &c).unwrap());
    }

    #[test]
    fn m_separation_sees_latent_colliders() {
        // A -> B <-> C <- D: conditioning on {B, C} opens both colliders, so
        // A and D are connected. A moralization shortcut that forgets the
        // hidden fork behind the bidirected edge gets this wrong.
        let g = g(
            &["A", "B", "C", "D"],
            &[("A", "B"), ("D", "C")],
            &[("B", "C")],
        );
        let a = g.set(&["A"]).unwrap();
        let d = g.set(&["D"]).unwrap();
        let bc = g.set(&["B", "C"]).unwrap();
        assert!(!g.m_separated(&a, &d, &bc).unwrap());
        assert!(g.m_separated(&a, &d, &BTreeSet::new()).unwrap());
    }

    #[test]
    fn m_separation_on_bow_graph() {
        let bow = g(&["A", "Y"], &[("A", "Y")], &[("A", "Y")]);
        let a = bow.set(&["A"]).unwrap();
        let y = bow.set(&["Y"]).unwrap();
        assert!(!bow.m_separated(&a, &y, &BTreeSet::new()).unwrap());
        // Cutting A's outgoing edge leaves the confounding arc only.
        let cut = bow.mutilate(&BTreeSet::new(), &a);
        assert!(!cut.m_separated(&a, &y, &BTreeSet::new()).unwrap());
    }

    #[test]
    fn proper_causal_paths_in_sorted_dfs_order() {
        let g3 = g(&["A", "M", "Y"], &[("A", "M"), ("M", "Y"), ("A", "Y")], &[]);
        let paths = g3
            .proper_causal_paths(&g3.set(&["A"]).unwrap(), &g3.set(&["Y"]).unwrap())
            .unwrap();
        let rendered: Vec<String> = paths
            .iter()
            .map(|p| p.iter().map(|v| v.name()).collect::<Vec<_>>().join("->"))
            .collect();
        assert_eq!(rendered, ["A->M->Y", "A->Y"]);
    }

    #[test]
    fn counterfactual_variables_render_with_world_tags() {
        let v = Variable::in_world("Y", vec![("A".into(), "a1".into())]);
        assert_eq!(v.to_string(), "Y@{A=a1}");
        assert_eq!(v.base(), Variable::new("Y"));
        assert!(Variable::new("Y") < v);
    }
}
