//! Acceptance suite: one test and one printed PASS/FAIL line per criterion.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gst12::gst::{ge_preprocess, solve_gst};
use gst12::heuristic::{replay_trace, solve_stp, MoveKind, StarPolicy};
use gst12::instance::{is_valid_solution, propify, solution_cost, Instance, MetricGraph, Node};
use gst12::ledger::{audit_stp_run, check_safety_lemmas};
use gst12::oracle::{brute_force_opt, steiner_forest_opt};
use gst12::residual::ResidualState;
use gst12::Error;

use gst12_cli::fmt::{parse_instance, write_instance};
use gst12_cli::gen::{gen_random, GenParams};
use gst12_cli::ratio::{run_ratio_experiment, sample_instance, Mode, RatioConfig};

fn report(idx: usize, name: &str, result: Result<String, String>) {
    match result {
        Ok(detail) => println!("ACCEPTANCE {idx} {name}: PASS ({detail})"),
        Err(why) => {
            println!("ACCEPTANCE {idx} {name}: FAIL ({why})");
            panic!("criterion {idx} ({name}): {why}");
        }
    }
}

fn pick_distinct(rng: &mut ChaCha8Rng, n: usize, size: usize) -> BTreeSet<Node> {
    let mut set = BTreeSet::new();
    while set.len() < size {
        set.insert(rng.gen_range(0..n));
    }
    set
}

fn sample_family(rng: &mut ChaCha8Rng, n: usize, max_groups: usize) -> Vec<BTreeSet<Node>> {
    let k = rng.gen_range(1..=max_groups);
    (0..k)
        .map(|_| {
            let size = rng.gen_range(2..=3.min(n));
            pick_distinct(rng, n, size)
        })
        .collect()
}

fn build(n: usize, edges: &[(usize, usize)], groups: Vec<BTreeSet<Node>>) -> Result<Instance, String> {
    let graph = MetricGraph::new(n, edges.to_vec()).map_err(|e| e.to_string())?;
    Instance::new(graph, groups).map_err(|e| e.to_string())
}

// ---------------------------------------------------------------- criterion 1

fn run_oracle_soundness() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC1);
    let mut sweep = 0usize;

    for n in 2..=5usize {
        let all: Vec<(usize, usize)> =
            (0..n).flat_map(|u| ((u + 1)..n).map(move |v| (u, v))).collect();
        for mask in 0u32..(1 << all.len()) {
            let edges: Vec<(usize, usize)> = all
                .iter()
                .enumerate()
                .filter(|&(i, _)| mask >> i & 1 == 1)
                .map(|(_, &e)| e)
                .collect();
            for _ in 0..2 {
                let inst = build(n, &edges, sample_family(&mut rng, n, 2))?;
                let a = steiner_forest_opt(&inst).map_err(|e| e.to_string())?.cost;
                let b = brute_force_opt(&inst).map_err(|e| e.to_string())?;
                if a != b {
                    return Err(format!(
                        "partition oracle {a} vs brute force {b} on n={n} mask={mask}"
                    ));
                }
                sweep += 1;
            }
        }
    }

    let mut random = 0usize;
    for id in 0..500 {
        let n = 6;
        let p = rng.gen_range(0.1..0.7);
        let edges: Vec<(usize, usize)> = (0..n)
            .flat_map(|u| ((u + 1)..n).map(move |v| (u, v)))
            .filter(|_| rng.gen_bool(p))
            .collect();
        let inst = build(n, &edges, sample_family(&mut rng, n, 2))?;
        let a = steiner_forest_opt(&inst).map_err(|e| e.to_string())?.cost;
        let b = brute_force_opt(&inst).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("partition oracle {a} vs brute force {b} on random #{id}"));
        }
        random += 1;
    }

    let secs = start.elapsed().as_secs_f64();
    if secs >= 120.0 {
        return Err(format!("runtime {secs:.1}s exceeds the 2-minute budget"));
    }
    Ok(format!("{sweep} exhaustive-sweep + {random} random agreements in {secs:.1}s"))
}

#[test]
fn criterion_1_oracle_soundness() {
    report(1, "oracle-soundness", run_oracle_soundness());
}

// ---------------------------------------------------------------- criterion 2

fn run_grouped_bound() -> Result<String, String> {
    let start = Instant::now();
    let config = RatioConfig { count: 5000, max_nodes: 10, mode: Mode::Gst, seed: 0xACC2 };
    let report = run_ratio_experiment(&config).map_err(|e| e.to_string())?;
    if report.rows.len() != 5000 || report.skipped != 0 {
        return Err(format!(
            "expected 5000 evaluated instances, got {} (+{} skipped)",
            report.rows.len(),
            report.skipped
        ));
    }
    if report.violations != 0 {
        return Err(format!("{} instances break 2*alg <= 3*opt", report.violations));
    }
    if let Some(row) = report.rows.iter().find(|r| r.alg < r.opt) {
        return Err(format!("row {} has alg {} below opt {}", row.id, row.alg, row.opt));
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 300.0 {
        return Err(format!("runtime {secs:.1}s exceeds the 5-minute budget"));
    }
    let (num, den) = report.max_ratio;
    Ok(format!("5000 grouped instances, 0 violations, max ratio {num}/{den}, {secs:.1}s"))
}

#[test]
fn criterion_2_grouped_approximation_bound() {
    report(2, "grouped-3/2-bound", run_grouped_bound());
}

// ---------------------------------------------------------------- criterion 3

fn run_tree_bound() -> Result<String, String> {
    let start = Instant::now();
    let config = RatioConfig { count: 5000, max_nodes: 10, mode: Mode::Stp, seed: 0xACC3 };
    let report = run_ratio_experiment(&config).map_err(|e| e.to_string())?;
    if report.rows.len() != 5000 || report.skipped != 0 {
        return Err(format!(
            "expected 5000 evaluated instances, got {} (+{} skipped)",
            report.rows.len(),
            report.skipped
        ));
    }
    if report.violations != 0 {
        return Err(format!("{} instances break 3*alg <= 3*opt + skel", report.violations));
    }
    if let Some(row) = report.rows.iter().find(|r| r.alg < r.opt) {
        return Err(format!("row {} has alg {} below opt {}", row.id, row.alg, row.opt));
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 300.0 {
        return Err(format!("runtime {secs:.1}s exceeds the 5-minute budget"));
    }
    let (num, den) = report.max_ratio;
    Ok(format!("5000 tree instances, 0 violations, max ratio {num}/{den}, {secs:.1}s"))
}

#[test]
fn criterion_3_tree_bound() {
    report(3, "tree-1/3-skeleton-bound", run_tree_bound());
}

// ---------------------------------------------------------------- criterion 4

fn run_ledger_hard_facts() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC4);
    let mut monotone = 0usize;
    let mut moves = 0usize;
    for id in 0..1000 {
        let inst = sample_instance(&mut rng, 9, Mode::Stp).map_err(|e| e.to_string())?;
        let (_, trace) = solve_stp(&inst).map_err(|e| e.to_string())?;
        let opt = steiner_forest_opt(&inst).map_err(|e| e.to_string())?;
        let audit = audit_stp_run(&inst, &opt, &trace).map_err(|e| e.to_string())?;
        if !audit.hard.all() {
            return Err(format!("hard facts fail on #{id}: {:?}", audit.hard));
        }
        if !audit.bridgeless_after_prep {
            return Err(format!("reference tree not bridgeless after preparation on #{id}"));
        }
        if let Some(step) = audit.prep_steps.iter().find(|s| s.account_delta().numerator() > 0) {
            return Err(format!(
                "preparation step increases CR + PE + PC on #{id}: {step:?}"
            ));
        }
        monotone += audit.monotone_moves;
        moves += audit.moves.len();
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(format!(
        "1000 audits clean; per-move promise monotone on {monotone}/{moves} moves (diagnostic), {secs:.1}s"
    ))
}

#[test]
fn criterion_4_ledger_hard_facts() {
    report(4, "potential-ledger-hard-facts", run_ledger_hard_facts());
}

// ---------------------------------------------------------------- criterion 5

/// Instances whose terminals form an independent set; the preprocessing
/// fixpoint is then a matter of in-group stars only, which the rejection
/// filter below weeds out.
fn sample_fixpoint_candidate(rng: &mut ChaCha8Rng) -> Result<Instance, String> {
    let n = rng.gen_range(5..=10);
    let groups = sample_family(rng, n, 3);
    let terminals: BTreeSet<Node> = groups.iter().flatten().copied().collect();
    let p = rng.gen_range(0.2..0.5);
    let edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|u| ((u + 1)..n).map(move |v| (u, v)))
        .filter(|(u, v)| !(terminals.contains(u) && terminals.contains(v)))
        .filter(|_| rng.gen_bool(p))
        .collect();
    build(n, &edges, groups)
}

fn run_safety_lemmas() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC5);
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut comps = 0usize;
    let mut pair_comps = 0usize;
    let mut flipped_holds = 0usize;
    while accepted < 500 {
        if rejected > 20_000 {
            return Err(format!("rejection filter stuck: {rejected} rejects, {accepted} accepts"));
        }
        let inst = sample_fixpoint_candidate(&mut rng)?;
        let opt = match steiner_forest_opt(&inst) {
            Ok(opt) => opt,
            Err(Error::ResourceLimit(_)) => {
                rejected += 1;
                continue;
            }
            Err(e) => return Err(e.to_string()),
        };
        let report = match check_safety_lemmas(&inst, &opt) {
            Ok(r) => r,
            Err(Error::Precondition(_)) => {
                rejected += 1;
                continue;
            }
            Err(e) => return Err(format!("safety check crashed: {e}")),
        };
        if !report.pair_comps_hold_literal() {
            let bad = report
                .comps
                .iter()
                .find(|c| !c.large_group && !c.holds_literal)
                .expect("a violating component");
            return Err(format!(
                "pair-only component {:?} has budget {} below 1",
                bad.nodes, bad.pg.literal
            ));
        }
        comps += report.comps.len();
        pair_comps += report.comps.iter().filter(|c| !c.large_group).count();
        flipped_holds += report.comps.iter().filter(|c| c.holds_flipped).count();
        accepted += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(format!(
        "{accepted} fixpoint instances ({rejected} rejected), {comps} components ({pair_comps} pair-only, all literal budgets hold; flipped holds on {flipped_holds}), {secs:.1}s"
    ))
}

#[test]
fn criterion_5_safety_lemma_report() {
    report(5, "component-budget-report", run_safety_lemmas());
}

// ---------------------------------------------------------------- criterion 6

fn forest_ok(n: usize, pairs: &gst12::instance::ConnectionSet) -> bool {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let r = find(parent, parent[x]);
            parent[x] = r;
        }
        parent[x]
    }
    for p in pairs.iter() {
        let (a, b) = (find(&mut parent, p.lo()), find(&mut parent, p.hi()));
        if a == b {
            return false;
        }
        parent[a] = b;
    }
    true
}

fn suite_propify_idempotent(rng: &mut ChaCha8Rng, cases: usize) -> Result<(), String> {
    for _ in 0..cases {
        let k = rng.gen_range(0..=4);
        let groups: Vec<BTreeSet<Node>> = (0..k)
            .map(|_| {
                let size = rng.gen_range(1..=4);
                pick_distinct(rng, 12, size)
            })
            .collect();
        let once = propify(&groups);
        if propify(once.groups()) != once {
            return Err(format!("propify not idempotent on {groups:?}"));
        }
    }
    Ok(())
}

fn suite_forest_invariant(rng: &mut ChaCha8Rng, cases: usize) -> Result<(), String> {
    for id in 0..cases {
        let inst = sample_instance(rng, 10, Mode::Gst).map_err(|e| e.to_string())?;
        let (f, trace) = solve_gst(&inst, StarPolicy::Active).map_err(|e| e.to_string())?;
        if !forest_ok(inst.node_count(), &f) {
            return Err(format!("solution has a cycle on #{id}"));
        }
        if !is_valid_solution(&inst, &f).map_err(|e| e.to_string())? {
            return Err(format!("solution leaves a group disconnected on #{id}"));
        }
        let cost = solution_cost(inst.graph(), &f).map_err(|e| e.to_string())?;
        if cost != trace.final_cost {
            return Err(format!("trace cost {} vs forest cost {cost} on #{id}", trace.final_cost));
        }
    }
    Ok(())
}

fn suite_replay_determinism(rng: &mut ChaCha8Rng, cases: usize) -> Result<(), String> {
    for id in 0..cases {
        let inst = sample_instance(rng, 10, Mode::Gst).map_err(|e| e.to_string())?;
        let (f1, t1) = solve_gst(&inst, StarPolicy::Active).map_err(|e| e.to_string())?;
        let (f2, t2) = solve_gst(&inst, StarPolicy::Active).map_err(|e| e.to_string())?;
        if f1 != f2 || t1 != t2 {
            return Err(format!("two runs of the same instance diverge on #{id}"));
        }
        let replayed = replay_trace(&inst, &t1).map_err(|e| e.to_string())?;
        if replayed != f1 {
            return Err(format!("trace replay rebuilds a different forest on #{id}"));
        }
    }
    Ok(())
}

fn suite_preprocess_postcondition(rng: &mut ChaCha8Rng, cases: usize) -> Result<(), String> {
    for id in 0..cases {
        let inst = sample_instance(rng, 10, Mode::Gst).map_err(|e| e.to_string())?;
        let mut state = ResidualState::new(&inst);
        let (_, tagged) = ge_preprocess(&mut state).map_err(|e| e.to_string())?;
        // Fixpoint: no collapsible edge between terminals of unsatisfied
        // requirements (satisfied ones drop out of consideration).
        let mut live = std::collections::BTreeSet::new();
        for t in &tagged {
            if state.group_satisfied(&t.members) {
                continue;
            }
            for &m in &t.members {
                live.insert(state.rep(m));
            }
        }
        if state.find_terminal_edge_among(&live).is_some() {
            return Err(format!("live terminal-terminal edge survives preprocessing on #{id}"));
        }
    }
    Ok(())
}

fn suite_annihilation_identity(rng: &mut ChaCha8Rng, cases: usize) -> Result<usize, String> {
    let mut seen = 0usize;
    for id in 0..cases {
        let inst = sample_instance(rng, 10, Mode::Gst).map_err(|e| e.to_string())?;
        let (_, trace) = solve_gst(&inst, StarPolicy::Active).map_err(|e| e.to_string())?;
        for m in &trace.moves {
            let MoveKind::Annihilate { origin_pairs } = m.kind else { continue };
            seen += 1;
            if m.cost > origin_pairs as i64 + 1 {
                return Err(format!(
                    "annihilation of {origin_pairs} pairs costs {} on #{id}",
                    m.cost
                ));
            }
            let pure = m.added.len() == origin_pairs && m.removed.len() == origin_pairs - 1;
            if pure && m.cost != origin_pairs as i64 + 1 {
                return Err(format!(
                    "pure annihilation of {origin_pairs} pairs costs {} instead of {} on #{id}",
                    m.cost,
                    origin_pairs + 1
                ));
            }
        }
    }
    if seen < 200 {
        return Err(format!("suite exercised only {seen} annihilations"));
    }
    Ok(seen)
}

fn suite_round_trip(rng: &mut ChaCha8Rng, cases: usize) -> Result<(), String> {
    for id in 0..cases {
        let nodes = rng.gen_range(2..=14);
        let max_pairs = nodes / 2;
        let pairs = rng.gen_range(0..=max_pairs);
        let max_triples = (nodes - 2 * pairs) / 3;
        let params = GenParams {
            nodes,
            edge_prob: rng.gen_range(0.0..=1.0),
            pairs,
            triples: rng.gen_range(0..=max_triples),
            seed: rng.gen(),
            star_bias: rng.gen_range(0.0..=1.0),
        };
        let inst = gen_random(&params).map_err(|e| e.to_string())?;
        let back = parse_instance(&write_instance(&inst)).map_err(|e| e.to_string())?;
        if back != inst {
            return Err(format!("write/parse round trip changed instance #{id}"));
        }
    }
    Ok(())
}

fn run_invariant_suites() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC6);
    const CASES: usize = 10_000;
    suite_propify_idempotent(&mut rng, CASES)?;
    suite_forest_invariant(&mut rng, CASES)?;
    suite_replay_determinism(&mut rng, CASES)?;
    suite_preprocess_postcondition(&mut rng, CASES)?;
    let annihilations = suite_annihilation_identity(&mut rng, CASES)?;
    suite_round_trip(&mut rng, CASES)?;
    let secs = start.elapsed().as_secs_f64();
    Ok(format!(
        "6 suites x {CASES} cases ({annihilations} annihilations observed), {secs:.1}s"
    ))
}

#[test]
fn criterion_6_invariant_suites() {
    report(6, "randomized-invariant-suites", run_invariant_suites());
}
