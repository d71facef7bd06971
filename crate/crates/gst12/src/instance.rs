//! Instance model: a graph of distance-1 pairs over dense 0-based nodes, a
//! proper family of requirement groups, and connection costs.
//!
//! Every unordered pair of distinct nodes has a cost: 1 if it is an edge of
//! the graph, 2 otherwise. A solution is any set of such pairs; it is valid
//! when each requirement group lies inside one connected component.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{invalid, Result};
use crate::unionfind::UnionFind;

/// Dense 0-based node index.
pub type Node = usize;

/// Unordered pair of distinct nodes, stored with the smaller node first.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pair(Node, Node);

impl Pair {
    /// Normalizes the endpoint order. Panics on a self-loop; use
    /// [`Pair::try_new`] for unvalidated input.
    pub fn new(u: Node, v: Node) -> Pair {
        assert!(u != v, "self-loop pair ({u},{v})");
        if u < v {
            Pair(u, v)
        } else {
            Pair(v, u)
        }
    }

    pub fn try_new(u: Node, v: Node) -> Result<Pair> {
        if u == v {
            return Err(invalid(format!("self-loop pair ({u},{v})")));
        }
        Ok(Pair::new(u, v))
    }

    pub fn lo(&self) -> Node {
        self.0
    }

    pub fn hi(&self) -> Node {
        self.1
    }
}

impl fmt::Debug for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.0, self.1)
    }
}

impl Serialize for Pair {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        (self.0, self.1).serialize(s)
    }
}

/// Graph of distance-1 pairs. Non-edges between distinct nodes cost 2.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetricGraph {
    n: usize,
    edges: BTreeSet<Pair>,
}

impl MetricGraph {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (Node, Node)>) -> Result<MetricGraph> {
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(invalid(format!("edge ({u},{v}) out of range for n={n}")));
            }
            set.insert(Pair::try_new(u, v)?);
        }
        Ok(MetricGraph { n, edges: set })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = Pair> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, p: Pair) -> bool {
        self.edges.contains(&p)
    }

    /// Distance between two distinct nodes: 1 for an edge, 2 otherwise.
    pub fn connection_cost(&self, u: Node, v: Node) -> Result<u64> {
        if u >= self.n || v >= self.n {
            return Err(invalid(format!("node out of range: ({u},{v}), n={}", self.n)));
        }
        let p = Pair::try_new(u, v)?;
        Ok(if self.has_edge(p) { 1 } else { 2 })
    }

    /// Cost of a pair already known to be in range.
    pub fn pair_cost(&self, p: Pair) -> u64 {
        debug_assert!(p.hi() < self.n);
        if self.has_edge(p) {
            1
        } else {
            2
        }
    }
}

/// Proper family of requirement groups: pairwise disjoint node sets, each of
/// size at least 2. Built by [`propify`] from an arbitrary list of groups.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct RequirementFamily {
    groups: Vec<BTreeSet<Node>>,
}

impl RequirementFamily {
    /// Wraps groups that are already proper; rejects overlaps and singletons.
    pub fn new_proper(groups: Vec<BTreeSet<Node>>) -> Result<RequirementFamily> {
        let fam = propify(&groups);
        if fam.groups != normalize_groups(&groups) {
            return Err(invalid("requirement family is not proper".to_string()));
        }
        Ok(fam)
    }

    pub fn groups(&self) -> &[BTreeSet<Node>] {
        &self.groups
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    /// Union of all groups.
    pub fn terminals(&self) -> BTreeSet<Node> {
        self.groups.iter().flatten().copied().collect()
    }
}

fn normalize_groups(groups: &[BTreeSet<Node>]) -> Vec<BTreeSet<Node>> {
    let mut gs: Vec<BTreeSet<Node>> = groups.iter().filter(|g| g.len() >= 2).cloned().collect();
    gs.sort();
    gs
}

/// Merges overlapping groups transitively and drops groups of size < 2.
/// Two terminals end up in the same output group iff a chain of overlapping
/// input groups forces them together. Idempotent.
pub fn propify(groups: &[BTreeSet<Node>]) -> RequirementFamily {
    let nodes: Vec<Node> = groups.iter().flatten().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let index: BTreeMap<Node, usize> = nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut uf = UnionFind::new(nodes.len());
    for g in groups {
        let mut it = g.iter();
        if let Some(&first) = it.next() {
            for &v in it {
                uf.union(index[&first], index[&v]);
            }
        }
    }
    let mut classes: BTreeMap<usize, BTreeSet<Node>> = BTreeMap::new();
    for &v in &nodes {
        classes.entry(uf.find(index[&v])).or_default().insert(v);
    }
    let mut out: Vec<BTreeSet<Node>> = classes.into_values().filter(|c| c.len() >= 2).collect();
    out.sort();
    RequirementFamily { groups: out }
}

/// A problem instance: metric graph plus proper requirement family.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    graph: MetricGraph,
    requirements: RequirementFamily,
    terminal: Vec<bool>,
}

impl Instance {
    /// Builds an instance; arbitrary groups are made proper on ingest.
    pub fn new(graph: MetricGraph, groups: Vec<BTreeSet<Node>>) -> Result<Instance> {
        let requirements = propify(&groups);
        let n = graph.node_count();
        let mut terminal = vec![false; n];
        for g in requirements.groups() {
            for &t in g {
                if t >= n {
                    return Err(invalid(format!("terminal {t} out of range for n={n}")));
                }
                terminal[t] = true;
            }
        }
        Ok(Instance { graph, requirements, terminal })
    }

    pub fn graph(&self) -> &MetricGraph {
        &self.graph
    }

    pub fn requirements(&self) -> &RequirementFamily {
        &self.requirements
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn is_terminal(&self, v: Node) -> bool {
        self.terminal[v]
    }

    pub fn terminals(&self) -> BTreeSet<Node> {
        self.requirements.terminals()
    }
}

/// A set of node pairs (a candidate solution or a partial one).
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ConnectionSet {
    pairs: BTreeSet<Pair>,
}

impl ConnectionSet {
    pub fn new() -> ConnectionSet {
        ConnectionSet::default()
    }

    pub fn insert(&mut self, p: Pair) -> bool {
        self.pairs.insert(p)
    }

    pub fn remove(&mut self, p: Pair) -> bool {
        self.pairs.remove(&p)
    }

    pub fn contains(&self, p: Pair) -> bool {
        self.pairs.contains(&p)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Pair> + '_ {
        self.pairs.iter().copied()
    }
}

impl FromIterator<Pair> for ConnectionSet {
    fn from_iter<I: IntoIterator<Item = Pair>>(iter: I) -> ConnectionSet {
        ConnectionSet { pairs: iter.into_iter().collect() }
    }
}

/// Total cost of a pair set under the {1,2} metric of `g`.
pub fn solution_cost(g: &MetricGraph, f: &ConnectionSet) -> Result<u64> {
    let mut total = 0;
    for p in f.iter() {
        total += g.connection_cost(p.lo(), p.hi())?;
    }
    Ok(total)
}

/// Checks that every requirement group of `inst` lies in one component of
/// `(V, f)`.
pub fn is_valid_solution(inst: &Instance, f: &ConnectionSet) -> Result<bool> {
    let n = inst.node_count();
    let mut uf = UnionFind::new(n);
    for p in f.iter() {
        if p.hi() >= n {
            return Err(invalid(format!("pair {:?} out of range for n={n}", p)));
        }
        uf.union(p.lo(), p.hi());
    }
    for g in inst.requirements().groups() {
        let mut it = g.iter();
        let first = uf.find(*it.next().expect("proper groups are nonempty"));
        for &t in it {
            if uf.find(t) != first {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
