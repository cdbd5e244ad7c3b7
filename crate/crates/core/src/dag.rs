//! Directed acyclic causal models: structural predicates, enumeration,
//! maximal cliques, junction trees and d-separation.
//!
//! Nodes are a subset of `{1..n}` that must contain the action variable `1`
//! and the outcome variable `n`; validity additionally requires acyclicity
//! and the absence of any directed path from `n` back to `1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A causal model: a node subset together with directed links.
///
/// Serialized as `{"nodes":[1,2,3],"edges":[[1,2],[2,3]]}`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CausalDag {
    nodes: Vec<usize>,
    edges: Vec<(usize, usize)>,
}

/// One violated structural requirement, as reported by [`CausalDag::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DagViolation {
    Cycle,
    PathFromOutcomeToAction,
    MissingActionNode,
    MissingOutcomeNode,
    NodeOutOfRange(usize),
    SelfLoop(usize),
    EdgeOutsideNodes(usize, usize),
}

impl std::fmt::Display for DagViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DagViolation::Cycle => write!(f, "directed cycle"),
            DagViolation::PathFromOutcomeToAction => {
                write!(f, "directed path from the outcome node to the action node")
            }
            DagViolation::MissingActionNode => write!(f, "node set does not contain node 1"),
            DagViolation::MissingOutcomeNode => write!(f, "node set does not contain node n"),
            DagViolation::NodeOutOfRange(v) => write!(f, "node {v} outside 1..=n"),
            DagViolation::SelfLoop(v) => write!(f, "self loop at node {v}"),
            DagViolation::EdgeOutsideNodes(i, j) => {
                write!(f, "edge ({i},{j}) references a node outside the node set")
            }
        }
    }
}

impl CausalDag {
    /// Build a DAG from nodes and directed edges; both are sorted and
    /// deduplicated. No validity check happens here — see [`Self::validate`].
    pub fn new(nodes: Vec<usize>, edges: Vec<(usize, usize)>) -> Self {
        let mut nodes = nodes;
        nodes.sort_unstable();
        nodes.dedup();
        let mut edges = edges;
        edges.sort_unstable();
        edges.dedup();
        Self { nodes, edges }
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn contains_edge(&self, i: usize, j: usize) -> bool {
        self.edges.binary_search(&(i, j)).is_ok()
    }

    /// Parents of node `i` (sources of edges into `i`).
    pub fn parents(&self, i: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|(_, t)| *t == i)
            .map(|(s, _)| *s)
            .collect()
    }

    pub fn children(&self, i: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|(s, _)| *s == i)
            .map(|(_, t)| *t)
            .collect()
    }

    fn position(&self, node: usize) -> Option<usize> {
        self.nodes.binary_search(&node).ok()
    }

    /// Adjacency as bitmasks over node positions: `(parents, children, skeleton)`.
    fn masks(&self) -> (Vec<u16>, Vec<u16>, Vec<u16>) {
        let k = self.nodes.len();
        let mut parents = vec![0u16; k];
        let mut children = vec![0u16; k];
        let mut skeleton = vec![0u16; k];
        for &(i, j) in &self.edges {
            if let (Some(pi), Some(pj)) = (self.position(i), self.position(j)) {
                children[pi] |= 1 << pj;
                parents[pj] |= 1 << pi;
                skeleton[pi] |= 1 << pj;
                skeleton[pj] |= 1 << pi;
            }
        }
        (parents, children, skeleton)
    }

    fn path_exists(children: &[u16], start: usize, goal: usize) -> bool {
        let mut seen: u16 = 0;
        let mut frontier: u16 = children[start];
        while frontier != 0 {
            if frontier >> goal & 1 == 1 {
                return true;
            }
            seen |= frontier;
            let mut next: u16 = 0;
            let mut f = frontier;
            while f != 0 {
                let p = f.trailing_zeros() as usize;
                f &= f - 1;
                next |= children[p];
            }
            frontier = next & !seen;
        }
        false
    }

    /// Is there a directed path from `from` to `to` (of length >= 1)?
    pub fn has_directed_path(&self, from: usize, to: usize) -> bool {
        let (Some(start), Some(goal)) = (self.position(from), self.position(to)) else {
            return false;
        };
        let (_, children, _) = self.masks();
        Self::path_exists(&children, start, goal)
    }

    /// Diagnostic check of every structural requirement against an ambient
    /// variable count `n`. Empty result means the DAG is valid.
    pub fn validate(&self, n: usize) -> Vec<DagViolation> {
        let mut out = Vec::new();
        if !self.nodes.contains(&1) {
            out.push(DagViolation::MissingActionNode);
        }
        if !self.nodes.contains(&n) {
            out.push(DagViolation::MissingOutcomeNode);
        }
        for &v in &self.nodes {
            if v < 1 || v > n {
                out.push(DagViolation::NodeOutOfRange(v));
            }
        }
        for &(i, j) in &self.edges {
            if i == j {
                out.push(DagViolation::SelfLoop(i));
            }
            if self.position(i).is_none() || self.position(j).is_none() {
                out.push(DagViolation::EdgeOutsideNodes(i, j));
            }
        }
        if !out.iter().any(|v| {
            matches!(
                v,
                DagViolation::SelfLoop(_) | DagViolation::EdgeOutsideNodes(_, _)
            )
        }) {
            let (_, children, _) = self.masks();
            if (0..self.nodes.len()).any(|v| Self::path_exists(&children, v, v)) {
                out.push(DagViolation::Cycle);
            }
            if let (Some(p1), Some(pn)) = (self.position(1), self.position(n)) {
                if Self::path_exists(&children, pn, p1) {
                    out.push(DagViolation::PathFromOutcomeToAction);
                }
            }
        }
        out
    }

    pub fn is_valid(&self, n: usize) -> bool {
        self.validate(n).is_empty()
    }

    /// True iff node 1 has no parents.
    pub fn action_ancestral(&self) -> bool {
        self.edges.iter().all(|(_, t)| *t != 1)
    }

    /// Perfection: every two parents of a common child are themselves linked
    /// (in either direction).
    pub fn is_perfect(&self) -> bool {
        let (parents, _, skeleton) = self.masks();
        for pa in &parents {
            let mut rest = *pa;
            while rest != 0 {
                let u = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                if (pa & !(1 << u)) & !skeleton[u] != 0 {
                    return false;
                }
            }
        }
        true
    }

    /// Linearity: node 1 is the unique ancestral node, the outcome is the
    /// unique terminal node, and every other node has exactly one parent.
    pub fn is_linear(&self) -> bool {
        let n_out = *self.nodes.last().unwrap_or(&0);
        for &v in &self.nodes {
            let pa = self.parents(v).len();
            let ch = self.children(v).len();
            if v == 1 {
                if pa != 0 {
                    return false;
                }
            } else if pa != 1 {
                return false;
            }
            if ch == 0 && v != n_out {
                return false;
            }
            if v == n_out && ch != 0 {
                return false;
            }
        }
        // Node 1 must be the unique ancestral node.
        self.nodes.iter().filter(|&&v| self.parents(v).is_empty()).count() == 1
    }

    /// Every pair of nodes linked in some direction?
    pub fn is_fully_connected(&self) -> bool {
        let (_, _, skeleton) = self.masks();
        let k = self.nodes.len();
        (0..k).all(|i| skeleton[i].count_ones() as usize == k - 1)
    }
}

/// Filters for [`enumerate_dags`] / [`for_each_dag`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnumerateOptions {
    /// Keep DAGs whose node set has at most this many nodes.
    pub max_nodes: usize,
    /// Keep only perfect DAGs.
    #[serde(default)]
    pub perfect_only: bool,
    /// Keep only DAGs in which node 1 has no parents.
    #[serde(default)]
    pub action_ancestral: bool,
}

/// Enumerate all valid DAGs on node subsets of `{1..n}` containing `{1, n}`,
/// in canonical order (node set, then edge set).
pub fn enumerate_dags(n: usize, options: &EnumerateOptions) -> Result<Vec<CausalDag>> {
    let mut out = Vec::new();
    for_each_dag(n, options, |dag| out.push(dag.clone()))?;
    out.sort();
    Ok(out)
}

/// Streaming variant of [`enumerate_dags`]: the visitor is called once per
/// valid DAG in a deterministic (but unspecified) order. Use this for the
/// large sweeps where collecting the list first would be wasteful.
pub fn for_each_dag<F: FnMut(&CausalDag)>(
    n: usize,
    options: &EnumerateOptions,
    mut visit: F,
) -> Result<()> {
    if options.max_nodes < 2 {
        return Err(Error::Domain(
            "max_nodes must be at least 2 (the node set contains 1 and n)".to_string(),
        ));
    }
    if n < 2 {
        return Err(Error::Domain("need at least two variables".to_string()));
    }
    // Node subsets containing {1, n}, ordered by their sorted node vectors.
    let interior: Vec<usize> = (2..n).collect();
    let mut subsets: Vec<Vec<usize>> = Vec::new();
    for mask in 0..(1usize << interior.len()) {
        let mut nodes = vec![1];
        for (i, &v) in interior.iter().enumerate() {
            if mask >> i & 1 == 1 {
                nodes.push(v);
            }
        }
        nodes.push(n);
        nodes.sort_unstable();
        if nodes.len() <= options.max_nodes {
            subsets.push(nodes);
        }
    }
    subsets.sort();

    for nodes in subsets {
        let k = nodes.len();
        let pos_of_1 = nodes.iter().position(|&v| v == 1).unwrap();
        let pos_of_n = nodes.iter().position(|&v| v == n).unwrap();
        // Ordered node pairs as edge slots, lexicographic.
        let mut slots: Vec<(usize, usize)> = Vec::new();
        for i in 0..k {
            for j in 0..k {
                if i != j && !(options.action_ancestral && j == pos_of_1) {
                    slots.push((i, j));
                }
            }
        }
        slots.sort_unstable_by_key(|&(i, j)| (nodes[i], nodes[j]));

        // DFS over edge slots with incremental transitive closure; prefixes
        // that create a cycle or an n->1 path are never extended.
        let mut reach: Vec<u16> = (0..k).map(|i| 1u16 << i).collect();
        let mut chosen: Vec<(usize, usize)> = Vec::new();
        dfs_edges(
            &slots,
            0,
            &mut reach,
            &mut chosen,
            pos_of_1,
            pos_of_n,
            &nodes,
            options,
            &mut visit,
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn dfs_edges<F: FnMut(&CausalDag)>(
    slots: &[(usize, usize)],
    depth: usize,
    reach: &mut Vec<u16>,
    chosen: &mut Vec<(usize, usize)>,
    pos_of_1: usize,
    pos_of_n: usize,
    nodes: &[usize],
    options: &EnumerateOptions,
    visit: &mut F,
) {
    if depth == slots.len() {
        let edges: Vec<(usize, usize)> = chosen.iter().map(|&(i, j)| (nodes[i], nodes[j])).collect();
        let dag = CausalDag::new(nodes.to_vec(), edges);
        if !options.perfect_only || dag.is_perfect() {
            visit(&dag);
        }
        return;
    }
    // Slot absent.
    dfs_edges(slots, depth + 1, reach, chosen, pos_of_1, pos_of_n, nodes, options, visit);

    // Slot present, if it keeps the prefix acyclic and n cannot reach 1.
    let (i, j) = slots[depth];
    if reach[j] >> i & 1 == 1 {
        return; // would close a cycle
    }
    let saved = reach.clone();
    let down = reach[j];
    for r in reach.iter_mut() {
        if *r >> i & 1 == 1 {
            *r |= down;
        }
    }
    if reach[pos_of_n] >> pos_of_1 & 1 != 1 {
        chosen.push((i, j));
        dfs_edges(slots, depth + 1, reach, chosen, pos_of_1, pos_of_n, nodes, options, visit);
        chosen.pop();
    }
    *reach = saved;
}

/// All maximal node sets that are pairwise linked (ignoring direction).
/// Requires a perfect DAG; junction-tree constructions are only sound there.
pub fn maximal_cliques(dag: &CausalDag) -> Result<Vec<Vec<usize>>> {
    if !dag.is_perfect() {
        return Err(Error::UnsupportedStructure(
            "maximal cliques are only extracted from perfect DAGs".to_string(),
        ));
    }
    Ok(maximal_cliques_unchecked(dag))
}

fn maximal_cliques_unchecked(dag: &CausalDag) -> Vec<Vec<usize>> {
    let k = dag.nodes.len();
    let (_, _, skeleton) = dag.masks();
    // Exhaustive subset scan; node counts are tiny by construction.
    let mut cliques: Vec<u16> = Vec::new();
    for set in 1u16..(1 << k) {
        let mut ok = true;
        let mut rest = set;
        while rest != 0 {
            let u = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            if set & !(1 << u) & !skeleton[u] != 0 {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }
        // Maximal iff no outside node is adjacent to the whole set.
        let maximal = (0..k).all(|v| {
            if set >> v & 1 == 1 {
                return true;
            }
            set & !skeleton[v] != 0
        });
        if maximal {
            cliques.push(set);
        }
    }
    let mut out: Vec<Vec<usize>> = cliques
        .into_iter()
        .map(|set| {
            (0..k)
                .filter(|&v| set >> v & 1 == 1)
                .map(|v| dag.nodes[v])
                .collect()
        })
        .collect();
    out.sort();
    out
}

/// A junction forest over the maximal cliques of a perfect DAG.
///
/// `tree_edges` joins clique indices; `separators[e]` is the intersection of
/// the two cliques joined by `tree_edges[e]`. Disconnected skeletons yield
/// one tree per connected component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JunctionTree {
    pub cliques: Vec<Vec<usize>>,
    pub tree_edges: Vec<(usize, usize)>,
    pub separators: Vec<Vec<usize>>,
}

fn intersect(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().filter(|v| b.contains(v)).cloned().collect()
}

impl JunctionTree {
    /// Clique-index adjacency lists.
    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.cliques.len()];
        for &(i, j) in &self.tree_edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    /// Clique indices along the unique tree path from `from` to `to`
    /// (inclusive), or `None` when they lie in different components.
    pub fn path_between(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        let adj = self.adjacency();
        let mut prev = vec![usize::MAX; self.cliques.len()];
        let mut queue = std::collections::VecDeque::from([from]);
        prev[from] = from;
        while let Some(c) = queue.pop_front() {
            if c == to {
                let mut path = vec![to];
                let mut cur = to;
                while cur != from {
                    cur = prev[cur];
                    path.push(cur);
                }
                path.reverse();
                return Some(path);
            }
            for &nb in &adj[c] {
                if prev[nb] == usize::MAX {
                    prev[nb] = c;
                    queue.push_back(nb);
                }
            }
        }
        None
    }

    /// Number of connected components of the forest.
    pub fn component_count(&self) -> usize {
        self.cliques.len() - self.tree_edges.len()
    }

    /// Running intersection property: for every pair of cliques, their
    /// intersection is contained in every clique on the path between them;
    /// cliques in different components must be disjoint.
    pub fn verify_running_intersection(&self) -> bool {
        for i in 0..self.cliques.len() {
            for j in (i + 1)..self.cliques.len() {
                let common = intersect(&self.cliques[i], &self.cliques[j]);
                match self.path_between(i, j) {
                    Some(path) => {
                        for &c in &path {
                            if !common.iter().all(|v| self.cliques[c].contains(v)) {
                                return false;
                            }
                        }
                    }
                    None => {
                        if !common.is_empty() {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }
}

/// Build a junction tree for a perfect DAG: maximum-weight spanning forest
/// of the clique intersection graph, verified against the running
/// intersection property (verification failure is a hard error).
pub fn junction_tree(dag: &CausalDag) -> Result<JunctionTree> {
    let cliques = maximal_cliques(dag)?;
    let m = cliques.len();
    let mut candidates: Vec<(usize, usize, usize)> = Vec::new();
    for i in 0..m {
        for j in (i + 1)..m {
            let w = intersect(&cliques[i], &cliques[j]).len();
            if w > 0 {
                candidates.push((w, i, j));
            }
        }
    }
    candidates.sort_unstable_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut parent: Vec<usize> = (0..m).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        if parent[x] != x {
            parent[x] = find(parent, parent[x]);
        }
        parent[x]
    }
    let mut tree_edges = Vec::new();
    let mut separators = Vec::new();
    for (_, i, j) in candidates {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri] = rj;
            separators.push(intersect(&cliques[i], &cliques[j]));
            tree_edges.push((i, j));
        }
    }
    let tree = JunctionTree {
        cliques,
        tree_edges,
        separators,
    };
    if !tree.verify_running_intersection() {
        return Err(Error::Validation(
            "junction tree failed the running-intersection check".to_string(),
        ));
    }
    Ok(tree)
}

/// Standard d-separation verdict: is `a` independent of `b` given `z`
/// according to the DAG's structure alone?
pub fn d_separated(dag: &CausalDag, a: &[usize], b: &[usize], z: &[usize]) -> Result<bool> {
    for sets in [(a, b), (a, z), (b, z)] {
        if sets.0.iter().any(|v| sets.1.contains(v)) {
            return Err(Error::Domain(
                "d-separation requires pairwise disjoint node sets".to_string(),
            ));
        }
    }
    for &v in a.iter().chain(b).chain(z) {
        if dag.position(v).is_none() {
            return Err(Error::Domain(format!("node {v} not in the DAG node set")));
        }
    }
    if a.is_empty() || b.is_empty() {
        return Ok(true);
    }
    let k = dag.nodes.len();
    let (parents, _, skeleton) = dag.masks();
    let to_mask = |set: &[usize]| -> u16 {
        set.iter()
            .map(|&v| 1u16 << dag.position(v).unwrap())
            .fold(0, |acc, m| acc | m)
    };
    let (ma, mb, mz) = (to_mask(a), to_mask(b), to_mask(z));

    // Ancestral closure of a ∪ b ∪ z.
    let mut anc = ma | mb | mz;
    loop {
        let mut grown = anc;
        let mut rest = anc;
        while rest != 0 {
            let v = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            grown |= parents[v];
        }
        if grown == anc {
            break;
        }
        anc = grown;
    }

    // Moralize the ancestral subgraph: skeleton edges plus married parents.
    let mut moral = vec![0u16; k];
    for v in 0..k {
        if anc >> v & 1 != 1 {
            continue;
        }
        moral[v] |= skeleton[v] & anc;
        let pa = parents[v] & anc;
        let mut rest = pa;
        while rest != 0 {
            let u = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            moral[u] |= pa & !(1 << u);
        }
    }

    // Reachability from a to b avoiding z.
    let mut seen = ma & !mz;
    let mut frontier = seen;
    while frontier != 0 {
        if frontier & mb != 0 {
            return Ok(false);
        }
        let mut next: u16 = 0;
        let mut f = frontier;
        while f != 0 {
            let v = f.trailing_zeros() as usize;
            f &= f - 1;
            next |= moral[v] & anc;
        }
        frontier = next & !seen & !mz;
        seen |= frontier;
    }
    Ok(seen & mb == 0)
}

/// All pairwise conditional-independence statements `(i ⟂ j | Z)` implied by
/// the DAG via d-separation, in canonical order.
pub fn implied_independencies(dag: &CausalDag) -> Vec<(usize, usize, Vec<usize>)> {
    let nodes = dag.nodes();
    let mut out = Vec::new();
    for (ai, &i) in nodes.iter().enumerate() {
        for &j in nodes.iter().skip(ai + 1) {
            let others: Vec<usize> = nodes.iter().filter(|&&v| v != i && v != j).cloned().collect();
            for mask in 0..(1usize << others.len()) {
                let z: Vec<usize> = others
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| mask >> b & 1 == 1)
                    .map(|(_, &v)| v)
                    .collect();
                if d_separated(dag, &[i], &[j], &z).unwrap_or(false) {
                    out.push((i, j, z));
                }
            }
        }
    }
    out
}
