//! Exact optima for desk-scale instances.
//!
//! `steiner_tree_opt` runs the Dreyfus–Wagner subset DP directly on the
//! complete {1,2}-cost metric (no shortest-path phase is needed: the metric is
//! already closed, so a single relaxation per subset suffices).
//! `steiner_forest_opt` minimizes over set partitions of the requirement
//! groups, solving one tree per block; a component of any valid solution
//! contains whole groups, so the partition enumeration is exact.
//! `brute_force_opt` is an independent exhaustive search over pair subsets
//! used to cross-check the other two; it shares no code with them.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use crate::error::{internal, invalid, Result};
use crate::instance::{solution_cost, ConnectionSet, Instance, MetricGraph, Node, Pair};
use crate::Error;

/// Largest number of requirement groups `steiner_forest_opt` will partition.
pub const MAX_FOREST_GROUPS: usize = 8;
/// Largest terminal set `steiner_tree_opt` will accept.
pub const MAX_TREE_TERMINALS: usize = 14;
/// Largest node count `brute_force_opt` will accept.
pub const MAX_BRUTE_NODES: usize = 7;

/// An optimal solution together with the block structure it was found under:
/// `grouping[b]` lists the requirement-group indices joined by block `b`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OptimalForest {
    pub cost: u64,
    pub pairs: ConnectionSet,
    pub grouping: Vec<Vec<usize>>,
}

fn dist(g: &MetricGraph, u: Node, v: Node) -> u64 {
    if u == v {
        0
    } else {
        g.pair_cost(Pair::new(u, v))
    }
}

/// Minimum cost of a tree connecting `terminals`, with the pairs of one such
/// tree (deterministic reconstruction: smallest junction node, then largest
/// canonical submask). A single terminal costs 0; an empty set is rejected.
pub fn steiner_tree_opt(g: &MetricGraph, terminals: &BTreeSet<Node>) -> Result<(u64, ConnectionSet)> {
    if terminals.is_empty() {
        return Err(invalid("empty terminal set"));
    }
    let n = g.node_count();
    if let Some(&t) = terminals.iter().find(|&&t| t >= n) {
        return Err(invalid(format!("terminal {t} out of range for n={n}")));
    }
    let ts: Vec<Node> = terminals.iter().copied().collect();
    let k = ts.len();
    if k == 1 {
        return Ok((0, ConnectionSet::new()));
    }
    if k > MAX_TREE_TERMINALS {
        return Err(Error::ResourceLimit(format!(
            "{k} terminals exceeds the subset-DP limit of {MAX_TREE_TERMINALS}"
        )));
    }
    let root = ts[0];
    let others = &ts[1..];
    let b = others.len();
    let full: usize = (1 << b) - 1;
    const INF: u64 = u64::MAX / 4;

    // dp[mask][v]: cheapest tree spanning {v} plus the terminals of `mask`.
    let mut dp = vec![vec![INF; n]; full + 1];
    for (i, &t) in others.iter().enumerate() {
        for (v, slot) in dp[1 << i].iter_mut().enumerate() {
            *slot = dist(g, v, t);
        }
    }
    let mut merged = vec![INF; n];
    for mask in 1..=full {
        if mask & (mask - 1) == 0 {
            continue; // single terminal handled above
        }
        for (v, m) in merged.iter_mut().enumerate() {
            let mut best = INF;
            // proper nonempty submasks, each split visited twice (harmless)
            let mut sub = (mask - 1) & mask;
            while sub > 0 {
                let c = dp[sub][v].saturating_add(dp[mask ^ sub][v]);
                if c < best {
                    best = c;
                }
                sub = (sub - 1) & mask;
            }
            *m = best;
        }
        for (v, slot) in dp[mask].iter_mut().enumerate() {
            let mut best = INF;
            for (u, &m) in merged.iter().enumerate() {
                let c = m.saturating_add(dist(g, u, v));
                if c < best {
                    best = c;
                }
            }
            *slot = best;
        }
    }

    let cost = dp[full][root];
    debug_assert!(cost < INF);

    // Reconstruction mirrors the recurrence with fixed tie-breaks.
    let mut pairs = ConnectionSet::new();
    let mut stack = vec![(full, root)];
    while let Some((mask, v)) = stack.pop() {
        if mask & (mask - 1) == 0 {
            let t = others[mask.trailing_zeros() as usize];
            if v != t {
                pairs.insert(Pair::new(v, t));
            }
            continue;
        }
        let mut found = false;
        'junction: for u in 0..n {
            let base = dist(g, u, v);
            if base > dp[mask][v] {
                continue;
            }
            let mut sub = (mask - 1) & mask;
            while sub > 0 {
                if base + dp[sub][u].saturating_add(dp[mask ^ sub][u]) == dp[mask][v] {
                    if u != v {
                        pairs.insert(Pair::new(u, v));
                    }
                    stack.push((sub, u));
                    stack.push((mask ^ sub, u));
                    found = true;
                    break 'junction;
                }
                sub = (sub - 1) & mask;
            }
        }
        if !found {
            return Err(internal("subset-DP reconstruction found no witness"));
        }
    }
    debug_assert_eq!(solution_cost(g, &pairs)?, cost);
    Ok((cost, pairs))
}

fn partitions(m: usize) -> Vec<Vec<Vec<usize>>> {
    // All set partitions of 0..m via restricted growth strings, in
    // lexicographic string order.
    let mut out = Vec::new();
    let mut rgs = vec![0usize; m];
    fn rec(i: usize, maxb: usize, rgs: &mut Vec<usize>, out: &mut Vec<Vec<Vec<usize>>>) {
        let m = rgs.len();
        if i == m {
            let blocks = maxb + 1;
            let mut part = vec![Vec::new(); blocks];
            for (g, &b) in rgs.iter().enumerate() {
                part[b].push(g);
            }
            out.push(part);
            return;
        }
        for b in 0..=maxb + 1 {
            rgs[i] = b;
            rec(i + 1, maxb.max(b), rgs, out);
        }
    }
    if m == 0 {
        return vec![vec![]];
    }
    rgs[0] = 0;
    rec(1, 0, &mut rgs, &mut out);
    out
}

/// Exact optimum for a grouped instance: minimum over set partitions of the
/// requirement groups of the per-block tree optima. Ties prefer partitions
/// with more blocks (finer solutions), then the first partition in canonical
/// enumeration order.
pub fn steiner_forest_opt(inst: &Instance) -> Result<OptimalForest> {
    let groups = inst.requirements().groups();
    let m = groups.len();
    if m == 0 {
        return Ok(OptimalForest { cost: 0, pairs: ConnectionSet::new(), grouping: vec![] });
    }
    if m > MAX_FOREST_GROUPS {
        return Err(Error::ResourceLimit(format!(
            "{m} requirement groups exceeds the partition limit of {MAX_FOREST_GROUPS}"
        )));
    }
    let mut block_cache: BTreeMap<u32, (u64, ConnectionSet)> = BTreeMap::new();
    let mut block_cost = |mask: u32| -> Result<u64> {
        if let Some((c, _)) = block_cache.get(&mask) {
            return Ok(*c);
        }
        let mut ts = BTreeSet::new();
        for (gi, g) in groups.iter().enumerate() {
            if mask & (1 << gi) != 0 {
                ts.extend(g.iter().copied());
            }
        }
        let res = steiner_tree_opt(inst.graph(), &ts)?;
        let c = res.0;
        block_cache.insert(mask, res);
        Ok(c)
    };

    let mut best: Option<(u64, Vec<Vec<usize>>)> = None;
    for part in partitions(m) {
        let mut total = 0u64;
        for block in &part {
            let mask = block.iter().fold(0u32, |acc, &g| acc | (1 << g));
            total += block_cost(mask)?;
        }
        let better = match &best {
            None => true,
            Some((c, p)) => total < *c || (total == *c && part.len() > p.len()),
        };
        if better {
            best = Some((total, part));
        }
    }
    let (cost, grouping) = best.expect("at least one partition");
    let mut pairs = ConnectionSet::new();
    for block in &grouping {
        let mask = block.iter().fold(0u32, |acc, &g| acc | (1 << g));
        for p in block_cache[&mask].1.iter() {
            let fresh = pairs.insert(p);
            debug_assert!(fresh, "optimal blocks never share pairs");
        }
    }
    debug_assert_eq!(solution_cost(inst.graph(), &pairs)?, cost);
    debug_assert!(crate::instance::is_valid_solution(inst, &pairs)?);
    Ok(OptimalForest { cost, pairs, grouping })
}

/// Exhaustive minimum over pair subsets, for tiny instances only. Prunes with
/// the trivial all-non-edge upper bound and a per-partition merge lower
/// bound; only acyclic extensions are explored (some optimum is a forest).
pub fn brute_force_opt(inst: &Instance) -> Result<u64> {
    let n = inst.node_count();
    if n > MAX_BRUTE_NODES {
        return Err(Error::ResourceLimit(format!(
            "n={n} exceeds the exhaustive-search limit of {MAX_BRUTE_NODES}"
        )));
    }
    let groups: Vec<Vec<Node>> = inst
        .requirements()
        .groups()
        .iter()
        .map(|g| g.iter().copied().collect())
        .collect();
    if groups.is_empty() {
        return Ok(0);
    }
    let mut pairs: Vec<(u64, Pair)> = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = Pair::new(u, v);
            pairs.push((inst.graph().pair_cost(p), p));
        }
    }
    pairs.sort();

    // Remaining merges needed: classes of each group, with overlapping
    // group-class sets merged first (a shared class lets one pair serve two
    // groups). Computed with plain set merging, independent of other modules.
    let deficiency = |roots: &[usize]| -> u64 {
        let mut sets: Vec<BTreeSet<usize>> = groups
            .iter()
            .map(|g| g.iter().map(|&t| roots[t]).collect())
            .filter(|s: &BTreeSet<usize>| s.len() >= 2)
            .collect();
        loop {
            let mut merged = false;
            'outer: for i in 0..sets.len() {
                for j in i + 1..sets.len() {
                    if !sets[i].is_disjoint(&sets[j]) {
                        let s = sets.remove(j);
                        sets[i].extend(s);
                        merged = true;
                        break 'outer;
                    }
                }
            }
            if !merged {
                break;
            }
        }
        sets.iter().map(|s| (s.len() - 1) as u64).sum()
    };

    // Flat parent array with full path flattening: cheap to clone at n <= 7.
    fn roots_of(parent: &[usize]) -> Vec<usize> {
        let mut r = vec![0; parent.len()];
        for (v, root) in r.iter_mut().enumerate() {
            let mut x = v;
            while parent[x] != x {
                x = parent[x];
            }
            *root = x;
        }
        r
    }

    let ub: u64 = groups.iter().map(|g| 2 * (g.len() as u64 - 1)).sum();
    let mut best = ub;

    fn dfs(
        idx: usize,
        parent: Vec<usize>,
        cost: u64,
        pairs: &[(u64, Pair)],
        deficiency: &dyn Fn(&[usize]) -> u64,
        best: &mut u64,
    ) {
        let roots = roots_of(&parent);
        let lb = deficiency(&roots);
        if cost + lb >= *best {
            return;
        }
        if lb == 0 {
            *best = cost;
            return;
        }
        if idx == pairs.len() {
            return;
        }
        let (c, p) = pairs[idx];
        if roots[p.lo()] != roots[p.hi()] {
            let mut child = parent.clone();
            child[roots[p.lo()]] = roots[p.hi()];
            dfs(idx + 1, child, cost + c, pairs, deficiency, best);
        }
        dfs(idx + 1, parent, cost, pairs, deficiency, best);
    }

    dfs(0, (0..n).collect(), 0, &pairs, &deficiency, &mut best);
    Ok(best)
}

/// Number of pairs of `f` that are original edges.
pub fn skeleton_cost(g: &MetricGraph, f: &ConnectionSet) -> u64 {
    f.iter().filter(|&p| g.has_edge(p)).count() as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::Instance;

    fn graph(n: usize, edges: &[(Node, Node)]) -> MetricGraph {
        MetricGraph::new(n, edges.iter().copied()).unwrap()
    }

    fn inst(n: usize, edges: &[(Node, Node)], groups: &[&[Node]]) -> Instance {
        Instance::new(
            graph(n, edges),
            groups.iter().map(|s| s.iter().copied().collect()).collect(),
        )
        .unwrap()
    }

    fn ts(nodes: &[Node]) -> BTreeSet<Node> {
        nodes.iter().copied().collect()
    }

    #[test]
    fn tree_opt_two_terminals() {
        let g = graph(2, &[(0, 1)]);
        let (c, pairs) = steiner_tree_opt(&g, &ts(&[0, 1])).unwrap();
        assert_eq!(c, 1);
        assert_eq!(pairs.iter().collect::<Vec<_>>(), vec![Pair::new(0, 1)]);

        let g2 = graph(3, &[(0, 2)]);
        let (c2, pairs2) = steiner_tree_opt(&g2, &ts(&[0, 1])).unwrap();
        assert_eq!(c2, 2);
        // direct pair, not a two-edge detour of equal cost
        assert_eq!(pairs2.iter().collect::<Vec<_>>(), vec![Pair::new(0, 1)]);
    }

    #[test]
    fn tree_opt_star_uses_center() {
        let g = graph(4, &[(3, 0), (3, 1), (3, 2)]);
        let (c, pairs) = steiner_tree_opt(&g, &ts(&[0, 1, 2])).unwrap();
        assert_eq!(c, 3);
        assert_eq!(pairs.len(), 3);
        assert!(pairs.contains(Pair::new(0, 3)));
        // cross-check against the independent exhaustive search
        let i = inst(4, &[(3, 0), (3, 1), (3, 2)], &[&[0, 1, 2]]);
        assert_eq!(brute_force_opt(&i).unwrap(), 3);
    }

    #[test]
    fn tree_opt_degenerate_inputs() {
        let g = graph(3, &[]);
        assert_eq!(steiner_tree_opt(&g, &ts(&[1])).unwrap(), (0, ConnectionSet::new()));
        assert!(steiner_tree_opt(&g, &ts(&[])).is_err());
        assert!(steiner_tree_opt(&g, &ts(&[0, 9])).is_err());
    }

    #[test]
    fn forest_opt_disjoint_pairs() {
        let i = inst(4, &[], &[&[0, 1], &[2, 3]]);
        let f = steiner_forest_opt(&i).unwrap();
        assert_eq!(f.cost, 4);
        assert_eq!(f.grouping, vec![vec![0], vec![1]]);
        assert_eq!(f.pairs.len(), 2);
        assert_eq!(brute_force_opt(&i).unwrap(), 4);
    }

    #[test]
    fn forest_opt_prefers_finer_blocks_on_ties() {
        // center 4 adjacent to everything: the 4-star ties the two direct
        // non-edges at cost 4; the finer solution must win.
        let i = inst(5, &[(4, 0), (4, 1), (4, 2), (4, 3)], &[&[0, 1], &[2, 3]]);
        let f = steiner_forest_opt(&i).unwrap();
        assert_eq!(f.cost, 4);
        assert_eq!(brute_force_opt(&i).unwrap(), 4);
        assert_eq!(f.grouping, vec![vec![0], vec![1]]);
        assert!(f.pairs.contains(Pair::new(0, 1)));
        assert!(f.pairs.contains(Pair::new(2, 3)));
    }

    #[test]
    fn forest_opt_group_limit() {
        let groups: Vec<Vec<Node>> = (0..9).map(|i| vec![2 * i, 2 * i + 1]).collect();
        let refs: Vec<&[Node]> = groups.iter().map(|g| g.as_slice()).collect();
        let i = inst(18, &[], &refs);
        assert!(matches!(steiner_forest_opt(&i), Err(Error::ResourceLimit(_))));
    }

    #[test]
    fn brute_force_basics() {
        let i = inst(2, &[], &[&[0, 1]]);
        assert_eq!(brute_force_opt(&i).unwrap(), 2);
        let i2 = inst(2, &[(0, 1)], &[&[0, 1]]);
        assert_eq!(brute_force_opt(&i2).unwrap(), 1);
        let i3 = inst(8, &[], &[&[0, 1]]);
        assert!(matches!(brute_force_opt(&i3), Err(Error::ResourceLimit(_))));
        let i4 = inst(3, &[], &[]);
        assert_eq!(brute_force_opt(&i4).unwrap(), 0);
    }

    #[test]
    fn oracle_routes_agree_on_seeded_instances() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let n = rng.gen_range(2..=6);
            let mut edges = Vec::new();
            for u in 0..n {
                for v in u + 1..n {
                    if rng.gen_bool(0.4) {
                        edges.push((u, v));
                    }
                }
            }
            let mut groups: Vec<BTreeSet<Node>> = Vec::new();
            for _ in 0..rng.gen_range(1..=2) {
                let len = rng.gen_range(2..=3.min(n));
                let mut g = BTreeSet::new();
                while g.len() < len {
                    g.insert(rng.gen_range(0..n));
                }
                groups.push(g);
            }
            let i = Instance::new(graph(n, &edges), groups).unwrap();
            let forest = steiner_forest_opt(&i).unwrap();
            assert_eq!(forest.cost, brute_force_opt(&i).unwrap());
            assert!(crate::instance::is_valid_solution(&i, &forest.pairs).unwrap());
        }
    }

    #[test]
    fn skeleton_counts_edges_only() {
        let g = graph(4, &[(0, 1)]);
        let f: ConnectionSet = [Pair::new(0, 1), Pair::new(2, 3)].into_iter().collect();
        assert_eq!(skeleton_cost(&g, &f), 1);
        assert_eq!(skeleton_cost(&g, &ConnectionSet::new()), 0);
        let f2: ConnectionSet = [Pair::new(2, 3)].into_iter().collect();
        assert_eq!(skeleton_cost(&g, &f2), 0);
    }
}
