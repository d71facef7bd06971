//! Seeded random instance generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gst12::instance::{Instance, MetricGraph, Node};
use gst12::{Error, Result};

/// Parameters for [`gen_random`].
#[derive(Clone, Debug)]
pub struct GenParams {
    pub nodes: usize,
    /// Probability that any given node pair is a distance-1 edge.
    pub edge_prob: f64,
    /// Number of 2-terminal requirement groups.
    pub pairs: usize,
    /// Number of 3-terminal requirement groups.
    pub triples: usize,
    pub seed: u64,
    /// Probability, per non-terminal, of planting a star from it to three
    /// random terminals. Makes star collapses reachable even at low
    /// `edge_prob`; zero leaves the plain Bernoulli graph untouched.
    pub star_bias: f64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams { nodes: 8, edge_prob: 0.3, pairs: 1, triples: 1, seed: 0, star_bias: 0.0 }
    }
}

/// Draws an instance from `params`. Terminals are the first
/// `2 * pairs + 3 * triples` nodes, grouped consecutively, pairs first.
pub fn gen_random(params: &GenParams) -> Result<Instance> {
    let t = 2 * params.pairs + 3 * params.triples;
    if t > params.nodes {
        return Err(Error::InvalidArgument(format!(
            "{} terminals requested but only {} nodes",
            t, params.nodes
        )));
    }
    for (name, p) in [("edge_prob", params.edge_prob), ("star_bias", params.star_bias)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("{name} must lie in [0, 1], got {p}")));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = params.nodes;
    let mut edges = std::collections::BTreeSet::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.gen_bool(params.edge_prob) {
                edges.insert((u, v));
            }
        }
    }

    let mut groups: Vec<std::collections::BTreeSet<Node>> = Vec::new();
    let mut next = 0;
    for _ in 0..params.pairs {
        groups.push((next..next + 2).collect());
        next += 2;
    }
    for _ in 0..params.triples {
        groups.push((next..next + 3).collect());
        next += 3;
    }

    if t >= 3 && params.star_bias > 0.0 {
        for c in t..n {
            if !rng.gen_bool(params.star_bias) {
                continue;
            }
            let mut leaves = std::collections::BTreeSet::new();
            while leaves.len() < 3 {
                leaves.insert(rng.gen_range(0..t));
            }
            for v in leaves {
                let (a, b) = if v < c { (v, c) } else { (c, v) };
                edges.insert((a, b));
            }
        }
    }

    let graph = MetricGraph::new(n, edges.into_iter().collect::<Vec<_>>())?;
    Instance::new(graph, groups)
}
