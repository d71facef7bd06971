//! Seeded ALG/OPT ratio experiments with exact-oracle baselines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gst12::gst::solve_gst;
use gst12::heuristic::{solve_stp, StarPolicy};
use gst12::instance::{solution_cost, Instance, MetricGraph, Node};
use gst12::oracle::{skeleton_cost, steiner_forest_opt};
use gst12::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    /// Single requirement group, greedy tree heuristic.
    Stp,
    /// General requirement family, full pipeline.
    Gst,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RatioRow {
    pub id: usize,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub alg: u64,
    pub opt: u64,
    pub skel: u64,
    /// `alg / opt` in lowest terms (`0 / 1` when both costs are zero).
    pub ratio_num: u64,
    pub ratio_den: u64,
}

#[derive(Clone, Debug, Default)]
pub struct RatioReport {
    pub rows: Vec<RatioRow>,
    /// Instances dropped because an oracle limit was exceeded.
    pub skipped: usize,
    /// Rows whose costs break the guaranteed bound for the mode.
    pub violations: usize,
    pub max_ratio: (u64, u64),
}

#[derive(Clone, Copy, Debug)]
pub struct RatioConfig {
    pub count: usize,
    pub max_nodes: usize,
    pub mode: Mode,
    pub seed: u64,
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Whether the a-priori guarantee holds: `3 alg <= 3 opt + skel(opt)` for
/// trees, `2 alg <= 3 opt` in general.
pub fn bound_holds(mode: Mode, alg: u64, opt: u64, skel: u64) -> bool {
    match mode {
        Mode::Stp => 3 * alg <= 3 * opt + skel,
        Mode::Gst => 2 * alg <= 3 * opt,
    }
}

/// Solves `inst` both ways and lines up the costs. `Ok(None)` means the
/// exact oracle declined the instance (too many groups or terminals).
pub fn ratio_row(inst: &Instance, mode: Mode, id: usize) -> Result<Option<RatioRow>> {
    let (f, trace) = match mode {
        Mode::Stp => solve_stp(inst)?,
        Mode::Gst => solve_gst(inst, StarPolicy::Active)?,
    };
    let opt = match steiner_forest_opt(inst) {
        Ok(opt) => opt,
        Err(Error::ResourceLimit(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    if !gst12::instance::is_valid_solution(inst, &f)? {
        return Err(Error::Internal(format!("heuristic produced an invalid solution on #{id}")));
    }
    let alg = solution_cost(inst.graph(), &f)?;
    if alg != trace.final_cost {
        return Err(Error::Internal(format!("trace cost disagrees with the forest on #{id}")));
    }
    let skel = skeleton_cost(inst.graph(), &opt.pairs);
    let (ratio_num, ratio_den) = if opt.cost == 0 {
        (0, 1)
    } else {
        let g = gcd(alg, opt.cost);
        (alg / g, opt.cost / g)
    };
    Ok(Some(RatioRow {
        id,
        n: inst.node_count(),
        m: inst.graph().edge_count(),
        k: inst.requirements().len(),
        alg,
        opt: opt.cost,
        skel,
        ratio_num,
        ratio_den,
    }))
}

/// Draws one experiment instance. Kept separate from [`crate::gen`] so the
/// experiment can vary group shapes and density more freely than the fixed
/// pairs-then-triples layout there.
pub fn sample_instance(rng: &mut ChaCha8Rng, max_nodes: usize, mode: Mode) -> Result<Instance> {
    let n = rng.gen_range(4..=max_nodes.max(4));
    let mut groups: Vec<std::collections::BTreeSet<Node>> = Vec::new();
    match mode {
        Mode::Stp => {
            let size = rng.gen_range(2..=5.min(n));
            groups.push(pick_distinct(rng, n, size));
        }
        Mode::Gst => {
            for _ in 0..rng.gen_range(1..=4) {
                let size = rng.gen_range(2..=3);
                groups.push(pick_distinct(rng, n, size));
            }
        }
    }

    let edge_prob = rng.gen_range(0.15..0.6);
    let mut edges = std::collections::BTreeSet::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.gen_bool(edge_prob) {
                edges.insert((u, v));
            }
        }
    }
    let terminals: Vec<Node> = {
        let mut t: std::collections::BTreeSet<Node> = std::collections::BTreeSet::new();
        for g in &groups {
            t.extend(g.iter().copied());
        }
        t.into_iter().collect()
    };
    if terminals.len() >= 3 {
        for c in 0..n {
            if terminals.binary_search(&c).is_ok() || !rng.gen_bool(0.4) {
                continue;
            }
            let mut leaves = std::collections::BTreeSet::new();
            while leaves.len() < 3 {
                leaves.insert(terminals[rng.gen_range(0..terminals.len())]);
            }
            for v in leaves {
                edges.insert((v.min(c), v.max(c)));
            }
        }
    }
    let graph = MetricGraph::new(n, edges.into_iter().collect::<Vec<_>>())?;
    Instance::new(graph, groups)
}

fn pick_distinct(rng: &mut ChaCha8Rng, n: usize, size: usize) -> std::collections::BTreeSet<Node> {
    let mut set = std::collections::BTreeSet::new();
    while set.len() < size {
        set.insert(rng.gen_range(0..n));
    }
    set
}

pub fn run_ratio_experiment(config: &RatioConfig) -> Result<RatioReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut report = RatioReport { max_ratio: (0, 1), ..RatioReport::default() };
    for id in 0..config.count {
        let inst = sample_instance(&mut rng, config.max_nodes, config.mode)?;
        let Some(row) = ratio_row(&inst, config.mode, id)? else {
            report.skipped += 1;
            continue;
        };
        if !bound_holds(config.mode, row.alg, row.opt, row.skel) {
            report.violations += 1;
        }
        let (bn, bd) = report.max_ratio;
        if row.ratio_num * bd > bn * row.ratio_den {
            report.max_ratio = (row.ratio_num, row.ratio_den);
        }
        report.rows.push(row);
    }
    Ok(report)
}

pub fn to_csv(report: &RatioReport) -> String {
    let mut out = String::from("id,n,m,k,alg,opt,skel,ratio_num,ratio_den\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.id, r.n, r.m, r.k, r.alg, r.opt, r.skel, r.ratio_num, r.ratio_den
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(n: usize, edges: &[(usize, usize)], groups: &[&[usize]]) -> Instance {
        let graph = MetricGraph::new(n, edges.to_vec()).unwrap();
        let groups: Vec<std::collections::BTreeSet<Node>> =
            groups.iter().map(|g| g.iter().copied().collect()).collect();
        Instance::new(graph, groups).unwrap()
    }

    #[test]
    fn a_three_star_scores_ratio_one() {
        let inst = inst(4, &[(0, 3), (1, 3), (2, 3)], &[&[0, 1, 2]]);
        let row = ratio_row(&inst, Mode::Stp, 9).unwrap().unwrap();
        assert_eq!((row.alg, row.opt, row.skel), (3, 3, 3));
        assert_eq!((row.ratio_num, row.ratio_den), (1, 1));
        assert_eq!(row.id, 9);
        assert!(bound_holds(Mode::Stp, row.alg, row.opt, row.skel));
    }

    #[test]
    fn cross_group_edge_round_trips_through_annihilation() {
        let inst = inst(4, &[(1, 2)], &[&[0, 1], &[2, 3]]);
        let row = ratio_row(&inst, Mode::Gst, 0).unwrap().unwrap();
        assert_eq!((row.alg, row.opt), (4, 4));
        assert!(bound_holds(Mode::Gst, row.alg, row.opt, row.skel));
    }

    #[test]
    fn empty_experiment_is_empty() {
        let report = run_ratio_experiment(&RatioConfig {
            count: 0,
            max_nodes: 8,
            mode: Mode::Gst,
            seed: 1,
        })
        .unwrap();
        assert!(report.rows.is_empty());
        assert_eq!(report.skipped, 0);
        assert_eq!(report.violations, 0);
        assert_eq!(to_csv(&report), "id,n,m,k,alg,opt,skel,ratio_num,ratio_den\n");
    }

    #[test]
    fn small_experiments_run_clean_in_both_modes() {
        for mode in [Mode::Stp, Mode::Gst] {
            let report = run_ratio_experiment(&RatioConfig {
                count: 60,
                max_nodes: 8,
                mode,
                seed: 42,
            })
            .unwrap();
            assert_eq!(report.rows.len() + report.skipped, 60);
            assert_eq!(report.violations, 0, "{mode:?}");
            let csv = to_csv(&report);
            assert_eq!(csv.lines().count(), report.rows.len() + 1);
        }
    }
}
