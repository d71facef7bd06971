//! Residual contraction state shared by the heuristics.
//!
//! The state keeps a partition of the original nodes into supernodes (classes)
//! plus the forest `f` of pairs chosen so far; collapsing a set of supernodes
//! merges them and appends spanning pairs to `f`. Supernodes are always named
//! by their smallest original node, and every search in this module breaks
//! ties toward smaller indices, so runs are deterministic.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{internal, invalid, precondition, Result};
use crate::instance::{ConnectionSet, Instance, Node, Pair};
use crate::unionfind::UnionFind;

/// A star move: a non-terminal center node joined to `s` distinct terminal
/// supernodes by original edges. Proper stars have `s >= 3`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Star {
    /// Original node serving as the center (a singleton non-terminal class).
    pub center: Node,
    /// Representatives of the terminal supernodes, sorted.
    pub leaves: Vec<Node>,
    /// One original edge per leaf, the smallest `(center, t)` available.
    pub representatives: Vec<Pair>,
}

impl Star {
    pub fn s(&self) -> usize {
        self.leaves.len()
    }
}

/// Pairs appended to `f` by a collapse, and their total cost.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CollapseOutcome {
    pub added: Vec<Pair>,
    pub cost: u64,
}

#[derive(Clone)]
pub struct ResidualState<'a> {
    inst: &'a Instance,
    uf: UnionFind,
    f: ConnectionSet,
    /// Terminal flag per union-find root.
    term: Vec<bool>,
    /// Adjacency lists of the original graph, sorted.
    adj: Vec<Vec<Node>>,
}

impl<'a> ResidualState<'a> {
    pub fn new(inst: &'a Instance) -> ResidualState<'a> {
        let n = inst.node_count();
        let mut adj = vec![Vec::new(); n];
        for e in inst.graph().edges() {
            adj[e.lo()].push(e.hi());
            adj[e.hi()].push(e.lo());
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        ResidualState {
            inst,
            uf: UnionFind::new(n),
            f: ConnectionSet::new(),
            term: (0..n).map(|v| inst.is_terminal(v)).collect(),
            adj,
        }
    }

    pub fn instance(&self) -> &'a Instance {
        self.inst
    }

    /// The forest of pairs chosen so far.
    pub fn forest(&self) -> &ConnectionSet {
        &self.f
    }

    pub fn forest_cost(&self) -> u64 {
        self.f.iter().map(|p| self.inst.graph().pair_cost(p)).sum()
    }

    /// Supernode representative (smallest original node in the class).
    pub fn rep(&mut self, v: Node) -> Node {
        self.uf.rep(v)
    }

    pub fn same_class(&mut self, u: Node, v: Node) -> bool {
        self.uf.same(u, v)
    }

    pub fn class_count(&mut self) -> usize {
        self.uf.class_count()
    }

    pub fn class_reps(&mut self) -> Vec<Node> {
        self.uf.class_reps()
    }

    pub fn class_members(&mut self, v: Node) -> Vec<Node> {
        self.uf.class_members(v)
    }

    /// Does v's supernode contain a terminal?
    pub fn class_is_terminal(&mut self, v: Node) -> bool {
        let r = self.uf.find(v);
        self.term[r]
    }

    /// All terminal supernode representatives, sorted.
    pub fn terminal_reps(&mut self) -> Vec<Node> {
        let reps = self.class_reps();
        reps.into_iter().filter(|&r| self.class_is_terminal(r)).collect()
    }

    fn merge(&mut self, u: Node, v: Node) {
        let flag = self.class_is_terminal(u) || self.class_is_terminal(v);
        self.uf.union(u, v);
        let r = self.uf.find(u);
        self.term[r] = flag;
    }

    fn check_forest_invariant(&mut self) {
        debug_assert_eq!(self.f.len(), self.inst.node_count() - self.uf.class_count());
    }

    /// Induced edges of the residual graph: for each pair of adjacent
    /// supernodes, the lexicographically smallest original edge between them,
    /// keyed by the sorted representative pair.
    pub fn induced_edges(&mut self) -> BTreeMap<(Node, Node), Pair> {
        let mut out = BTreeMap::new();
        let edges: Vec<Pair> = self.inst.graph().edges().collect();
        for e in edges {
            let (ru, rv) = (self.rep(e.lo()), self.rep(e.hi()));
            if ru == rv {
                continue;
            }
            let key = if ru < rv { (ru, rv) } else { (rv, ru) };
            out.entry(key).or_insert(e);
        }
        out
    }

    /// Requirement groups carried over to supernode representatives, made
    /// proper again (satisfied groups vanish, overlapping images merge).
    pub fn induced_requirements(&mut self) -> Vec<BTreeSet<Node>> {
        let images: Vec<BTreeSet<Node>> = self
            .inst
            .requirements()
            .groups()
            .iter()
            .map(|g| g.iter().map(|&t| self.uf.rep(t)).collect())
            .collect();
        crate::instance::propify(&images).groups().to_vec()
    }

    /// Is this group of original terminals inside one supernode?
    pub fn group_satisfied(&mut self, group: &BTreeSet<Node>) -> bool {
        let mut it = group.iter();
        match it.next() {
            None => true,
            Some(&first) => {
                let r = self.uf.find(first);
                it.all(|&t| self.uf.find(t) == r)
            }
        }
    }

    /// Merges the supernodes of `supers` into one, appending the pairs of a
    /// spanning tree of the set in the induced graph (smallest representative
    /// pairs first). Errors if the set is not induced-connected.
    pub fn collapse(&mut self, supers: &[Node]) -> Result<CollapseOutcome> {
        let mut set: BTreeSet<Node> = BTreeSet::new();
        for &v in supers {
            if v >= self.inst.node_count() {
                return Err(invalid(format!("supernode {v} out of range")));
            }
            let r = self.rep(v);
            set.insert(r);
        }
        if set.len() <= 1 {
            return Ok(CollapseOutcome { added: vec![], cost: 0 });
        }
        // Induced edges with both endpoints inside the set.
        let mut inner: BTreeMap<(Node, Node), Pair> = BTreeMap::new();
        for (&(a, b), &p) in self.induced_edges().iter() {
            if set.contains(&a) && set.contains(&b) {
                inner.insert((a, b), p);
            }
        }
        let start = *set.iter().next().expect("nonempty set");
        let mut in_tree: BTreeSet<Node> = [start].into();
        let mut added = Vec::new();
        while in_tree.len() < set.len() {
            // Smallest representative pair crossing the cut.
            let next = inner
                .iter()
                .filter(|(&(a, b), _)| in_tree.contains(&a) != in_tree.contains(&b))
                .min_by_key(|&(_, &p)| p)
                .map(|(&(a, b), &p)| (a, b, p));
            let Some((a, b, p)) = next else {
                return Err(precondition(format!(
                    "supernode set {:?} is not connected in the induced graph",
                    set
                )));
            };
            in_tree.insert(a);
            in_tree.insert(b);
            added.push(p);
            self.f.insert(p);
        }
        for p in &added {
            self.merge(p.lo(), p.hi());
        }
        self.check_forest_invariant();
        let cost = added.len() as u64; // spanning pairs are original edges
        debug_assert!(added.iter().all(|&p| self.inst.graph().has_edge(p)));
        Ok(CollapseOutcome { added, cost })
    }

    /// Joins two distinct supernodes with a single pair: an original edge if
    /// one exists (cost 1), otherwise the smallest non-edge between terminal
    /// members (cost 2).
    pub fn connect_pair(&mut self, a: Node, b: Node) -> Result<(Pair, u64)> {
        let (ra, rb) = (self.rep(a), self.rep(b));
        if ra == rb {
            return Err(precondition(format!("supernodes of {a} and {b} already coincide")));
        }
        let key = if ra < rb { (ra, rb) } else { (rb, ra) };
        let pair = match self.induced_edges().get(&key) {
            Some(&e) => e,
            None => {
                let pick = |st: &mut Self, r: Node| -> Node {
                    let members = st.class_members(r);
                    members
                        .iter()
                        .copied()
                        .find(|&v| st.inst.is_terminal(v))
                        .unwrap_or(members[0])
                };
                let (ta, tb) = (pick(self, ra), pick(self, rb));
                Pair::new(ta, tb)
            }
        };
        let cost = self.inst.graph().pair_cost(pair);
        self.f.insert(pair);
        self.merge(pair.lo(), pair.hi());
        self.check_forest_invariant();
        Ok((pair, cost))
    }

    /// Adds exactly the pair (u, v) between two distinct supernodes.
    pub(crate) fn add_connection_exact(&mut self, u: Node, v: Node) -> Result<u64> {
        if self.uf.same(u, v) {
            return Err(precondition(format!("nodes {u} and {v} already share a supernode")));
        }
        let p = Pair::try_new(u, v)?;
        self.f.insert(p);
        self.merge(u, v);
        self.check_forest_invariant();
        Ok(self.inst.graph().pair_cost(p))
    }

    /// Removes pairs from `f` and rebuilds the partition from what remains.
    pub(crate) fn remove_connections(&mut self, pairs: &[Pair]) -> Result<()> {
        for p in pairs {
            if !self.f.remove(*p) {
                return Err(internal(format!("pair {:?} not present in the forest", p)));
            }
        }
        let n = self.inst.node_count();
        self.uf = UnionFind::new(n);
        self.term = (0..n).map(|v| self.inst.is_terminal(v)).collect();
        let pairs: Vec<Pair> = self.f.iter().collect();
        for p in pairs {
            self.merge(p.lo(), p.hi());
        }
        self.check_forest_invariant();
        Ok(())
    }

    /// Smallest induced edge joining two terminal supernodes, if any.
    pub fn find_terminal_edge(&mut self) -> Option<(Node, Node, Pair)> {
        let all: BTreeSet<Node> = self.terminal_reps().into_iter().collect();
        self.find_terminal_edge_among(&all)
    }

    /// Same, restricted to both endpoints being in `eligible` (terminal
    /// supernode representatives).
    pub fn find_terminal_edge_among(&mut self, eligible: &BTreeSet<Node>) -> Option<(Node, Node, Pair)> {
        for (&(a, b), &p) in self.induced_edges().iter() {
            if eligible.contains(&a) && eligible.contains(&b) {
                return Some((a, b, p));
            }
        }
        None
    }

    /// Largest star with `s >= 3` whose center is an original non-terminal
    /// node still forming a singleton class and whose leaves are distinct
    /// eligible terminal supernodes adjacent to it. Ties: smallest center.
    pub fn find_max_star(&mut self, eligible: &BTreeSet<Node>) -> Option<Star> {
        let n = self.inst.node_count();
        let mut best: Option<Star> = None;
        for c in 0..n {
            if self.inst.is_terminal(c) || self.uf.class_size(c) != 1 {
                continue;
            }
            // Smallest adjacent original node per leaf supernode.
            let mut leaf_min: BTreeMap<Node, Node> = BTreeMap::new();
            let neighbors = self.adj[c].clone();
            for x in neighbors {
                let r = self.rep(x);
                if self.class_is_terminal(r) && eligible.contains(&r) {
                    leaf_min.entry(r).or_insert(x);
                }
            }
            let s = leaf_min.len();
            if s >= 3 && best.as_ref().is_none_or(|b| s > b.s()) {
                let leaves: Vec<Node> = leaf_min.keys().copied().collect();
                let representatives = leaf_min.values().map(|&t| Pair::new(c, t)).collect();
                best = Some(Star { center: c, leaves, representatives });
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::MetricGraph;

    fn inst(n: usize, edges: &[(Node, Node)], groups: &[&[Node]]) -> Instance {
        let g = MetricGraph::new(n, edges.iter().copied()).unwrap();
        Instance::new(g, groups.iter().map(|s| s.iter().copied().collect()).collect()).unwrap()
    }

    #[test]
    fn induced_edges_on_identity_partition() {
        let i = inst(3, &[(0, 1), (1, 2)], &[&[0, 2]]);
        let mut st = ResidualState::new(&i);
        let ind = st.induced_edges();
        assert_eq!(ind.len(), 2);
        assert_eq!(ind[&(0, 1)], Pair::new(0, 1));
        assert_eq!(ind[&(1, 2)], Pair::new(1, 2));
    }

    #[test]
    fn induced_edges_pick_smallest_representative() {
        let i = inst(3, &[(0, 2), (1, 2)], &[&[0, 1]]);
        let mut st = ResidualState::new(&i);
        st.connect_pair(0, 1).unwrap();
        let ind = st.induced_edges();
        assert_eq!(ind.len(), 1);
        assert_eq!(ind[&(0, 2)], Pair::new(0, 2));
    }

    #[test]
    fn induced_edges_empty_when_fully_collapsed() {
        let i = inst(3, &[(0, 1), (1, 2)], &[&[0, 2]]);
        let mut st = ResidualState::new(&i);
        st.collapse(&[0, 1, 2]).unwrap();
        assert!(st.induced_edges().is_empty());
        assert_eq!(st.class_count(), 1);
    }

    #[test]
    fn collapse_star_adds_star_edges() {
        let i = inst(4, &[(3, 0), (3, 1), (3, 2)], &[&[0, 1, 2]]);
        let mut st = ResidualState::new(&i);
        let out = st.collapse(&[3, 0, 1, 2]).unwrap();
        assert_eq!(out.cost, 3);
        assert_eq!(out.added, vec![Pair::new(0, 3), Pair::new(1, 3), Pair::new(2, 3)]);
        assert_eq!(st.class_count(), 1);
        assert_eq!(st.forest().len(), 3);
    }

    #[test]
    fn collapse_single_supernode_is_noop() {
        let i = inst(2, &[], &[&[0, 1]]);
        let mut st = ResidualState::new(&i);
        let out = st.collapse(&[0]).unwrap();
        assert_eq!(out.cost, 0);
        assert!(out.added.is_empty());
        assert_eq!(st.class_count(), 2);
    }

    #[test]
    fn collapse_rejects_disconnected_set() {
        let i = inst(2, &[], &[&[0, 1]]);
        let mut st = ResidualState::new(&i);
        assert!(matches!(st.collapse(&[0, 1]), Err(crate::Error::Precondition(_))));
    }

    #[test]
    fn connect_pair_prefers_edges() {
        let i = inst(2, &[(0, 1)], &[&[0, 1]]);
        let mut st = ResidualState::new(&i);
        assert_eq!(st.connect_pair(0, 1).unwrap(), (Pair::new(0, 1), 1));

        let i2 = inst(2, &[], &[&[0, 1]]);
        let mut st2 = ResidualState::new(&i2);
        assert_eq!(st2.connect_pair(0, 1).unwrap(), (Pair::new(0, 1), 2));
        assert!(st2.connect_pair(0, 1).is_err());
    }

    #[test]
    fn connect_pair_uses_terminal_members() {
        // class {0,4} where 4 is a non-terminal absorbed center, class {1}:
        // the cost-2 pair must join terminals, i.e. (0,1), not (1,4).
        let i = inst(5, &[(4, 0), (4, 2), (4, 3)], &[&[0, 2, 3], &[0, 1]]);
        let mut st = ResidualState::new(&i);
        st.collapse(&[4, 0]).unwrap(); // merge center with terminal 0
        let (p, c) = st.connect_pair(4, 1).unwrap();
        assert_eq!((p, c), (Pair::new(0, 1), 2));
    }

    #[test]
    fn find_terminal_edge_smallest_first() {
        let i = inst(4, &[(2, 3), (0, 1)], &[&[0, 1, 2, 3]]);
        let mut st = ResidualState::new(&i);
        assert_eq!(st.find_terminal_edge(), Some((0, 1, Pair::new(0, 1))));

        let i2 = inst(3, &[(0, 2)], &[&[0, 1]]);
        let mut st2 = ResidualState::new(&i2);
        assert_eq!(st2.find_terminal_edge(), None); // 2 is not a terminal
    }

    #[test]
    fn find_max_star_basic() {
        let i = inst(5, &[(4, 0), (4, 1), (4, 2)], &[&[0, 1, 2, 3]]);
        let mut st = ResidualState::new(&i);
        let elig: BTreeSet<Node> = st.terminal_reps().into_iter().collect();
        let star = st.find_max_star(&elig).unwrap();
        assert_eq!(star.center, 4);
        assert_eq!(star.leaves, vec![0, 1, 2]);
        assert_eq!(star.representatives, vec![Pair::new(0, 4), Pair::new(1, 4), Pair::new(2, 4)]);
    }

    #[test]
    fn find_max_star_tie_breaks_to_smallest_center() {
        let i = inst(6, &[(4, 0), (4, 1), (4, 2), (5, 0), (5, 1), (5, 2)], &[&[0, 1, 2]]);
        let mut st = ResidualState::new(&i);
        let elig: BTreeSet<Node> = st.terminal_reps().into_iter().collect();
        assert_eq!(st.find_max_star(&elig).unwrap().center, 4);
    }

    #[test]
    fn find_max_star_counts_distinct_supernodes() {
        let i = inst(4, &[(3, 0), (3, 1)], &[&[0, 1, 2]]);
        let mut st = ResidualState::new(&i);
        st.connect_pair(0, 1).unwrap(); // 0 and 1 now share a supernode
        let elig: BTreeSet<Node> = st.terminal_reps().into_iter().collect();
        assert_eq!(st.find_max_star(&elig), None); // center 3 reaches s = 1
    }

    #[test]
    fn forest_invariant_holds_across_operations() {
        let i = inst(6, &[(5, 0), (5, 1), (5, 2), (3, 4)], &[&[0, 1, 2, 3, 4]]);
        let mut st = ResidualState::new(&i);
        st.collapse(&[5, 0, 1, 2]).unwrap();
        st.collapse(&[3, 4]).unwrap();
        st.connect_pair(0, 3).unwrap();
        assert_eq!(st.forest().len(), i.node_count() - st.class_count());
        assert_eq!(st.class_count(), 1);
    }
}
