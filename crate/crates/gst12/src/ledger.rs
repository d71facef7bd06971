//! Numerical audit of the solver's cost guarantee.
//!
//! The audit replays a solver trace while performing surgery on a *reference
//! solution* initialized from an exact optimum. Alongside the reference it
//! tracks a potential account in exact sixths:
//!
//! * `CA` — cost of the connections the solver has committed so far;
//! * `CR` — remaining cost of the reference solution;
//! * `PE` — 1/3 per cost-1 reference pair (the *skeleton*);
//! * `PC` — per skeleton component, assigned by the surgery steps;
//! * `PS` — per Steiner star inside the skeleton, assigned by redistribution.
//!
//! `PromCost = CA + CR + PE + PC + PS` starts at `OPT + skel(OPT)/3` and the
//! audit reports how it evolves, whether the bridgeless normalization of the
//! reference ever increases `CR + PE + PC`, and the end-of-run facts (empty
//! reference, zero potential, `CA` equal to the algorithm's cost).
//!
//! The grouped problem is audited statically instead: [`normalize_forest_gst`]
//! brings an optimal forest into a normal form and [`check_safety_lemmas`]
//! evaluates the per-component budget `p_g` against the thresholds that the
//! grouped approximation bound rests on.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};

use serde::{Serialize, Serializer};

use crate::error::{invalid, precondition, Result};
use crate::heuristic::{Move, MoveKind, Trace};
use crate::instance::{is_valid_solution, solution_cost, ConnectionSet, Instance, Node, Pair};
use crate::oracle::OptimalForest;
use crate::residual::ResidualState;
use crate::unionfind::UnionFind;

/// Exact rational with implicit denominator 6. Every potential constant in
/// the analysis is a multiple of one sixth, so this never rounds.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Sixths(i64);

impl Sixths {
    pub const ZERO: Sixths = Sixths(0);

    /// `n` sixths.
    #[allow(clippy::self_named_constructors)] // reads as "n sixths", paired with `int`
    pub const fn sixths(n: i64) -> Sixths {
        Sixths(n)
    }

    /// The integer `n`.
    pub const fn int(n: i64) -> Sixths {
        Sixths(n * 6)
    }

    pub const fn numerator(self) -> i64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl Add for Sixths {
    type Output = Sixths;
    fn add(self, rhs: Sixths) -> Sixths {
        Sixths(self.0 + rhs.0)
    }
}

impl Sub for Sixths {
    type Output = Sixths;
    fn sub(self, rhs: Sixths) -> Sixths {
        Sixths(self.0 - rhs.0)
    }
}

impl Neg for Sixths {
    type Output = Sixths;
    fn neg(self) -> Sixths {
        Sixths(-self.0)
    }
}

impl AddAssign for Sixths {
    fn add_assign(&mut self, rhs: Sixths) {
        self.0 += rhs.0;
    }
}

impl SubAssign for Sixths {
    fn sub_assign(&mut self, rhs: Sixths) {
        self.0 -= rhs.0;
    }
}

impl Sum for Sixths {
    fn sum<I: Iterator<Item = Sixths>>(iter: I) -> Sixths {
        Sixths(iter.map(|s| s.0).sum())
    }
}

impl fmt::Display for Sixths {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let g = match self.0.unsigned_abs() % 6 {
            0 => 6,
            3 => 3,
            2 | 4 => 2,
            _ => 1,
        };
        let num = self.0 / g as i64;
        let den = 6 / g as i64;
        if den == 1 {
            write!(f, "{num}")
        } else {
            write!(f, "{num}/{den}")
        }
    }
}

impl fmt::Debug for Sixths {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl Serialize for Sixths {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// One connection of the reference solution, keyed by current supernode
/// representatives. The cost is frozen when the connection is created so the
/// account keeps its identity across collapses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct RefPair {
    a: Node,
    b: Node,
    cost: u64,
}

impl RefPair {
    fn new(u: Node, v: Node, cost: u64) -> RefPair {
        debug_assert_ne!(u, v);
        RefPair { a: u.min(v), b: u.max(v), cost }
    }

    fn touches(&self, v: Node) -> bool {
        self.a == v || self.b == v
    }

    fn other(&self, v: Node) -> Node {
        if self.a == v {
            self.b
        } else {
            self.a
        }
    }
}

/// The reference solution: a forest of frozen-cost connections over the
/// current residual supernodes, plus its cost-1 part (the skeleton).
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ReferenceSolution {
    /// `(pair, frozen cost)` for every remaining connection.
    pub pairs: Vec<(Pair, u64)>,
}

impl ReferenceSolution {
    pub fn cost(&self) -> u64 {
        self.pairs.iter().map(|(_, c)| c).sum()
    }

    /// The cost-1 connections.
    pub fn skeleton(&self) -> Vec<Pair> {
        self.pairs.iter().filter(|(_, c)| *c == 1).map(|(p, _)| *p).collect()
    }
}

/// Snapshot of the potential account.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PotentialState {
    pub ca: i64,
    pub cr: i64,
    /// Number of skeleton pairs; the edge potential is one third each.
    pub skeleton_edges: usize,
    /// Nonzero skeleton-component potentials, keyed by smallest node.
    pub ccomp: BTreeMap<Node, Sixths>,
    /// Nonzero Steiner-star potentials, keyed by the Steiner node.
    pub scomp: BTreeMap<Node, Sixths>,
}

impl PotentialState {
    pub fn pe(&self) -> Sixths {
        Sixths::sixths(2 * self.skeleton_edges as i64)
    }

    pub fn pc(&self) -> Sixths {
        self.ccomp.values().copied().sum()
    }

    pub fn ps(&self) -> Sixths {
        self.scomp.values().copied().sum()
    }

    pub fn p(&self) -> Sixths {
        self.pe() + self.pc() + self.ps()
    }

    pub fn prom_cost(&self) -> Sixths {
        Sixths::int(self.ca + self.cr) + self.p()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SurgeryKind {
    /// Degree-2 Steiner node: both skeleton edges replaced by one non-edge.
    Path,
    /// Skeleton edge between two Steiner nodes replaced by a non-edge.
    Bridge,
    /// Degree-1 Steiner node dropped with its edge.
    SteinerLeaf,
}

/// One normalization step on the reference solution with its account deltas.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SurgeryStep {
    pub kind: SurgeryKind,
    pub d_cr: i64,
    pub d_pe: Sixths,
    pub d_pc: Sixths,
}

impl SurgeryStep {
    /// The quantity the bridgeless normalization must never increase.
    pub fn account_delta(&self) -> Sixths {
        Sixths::int(self.d_cr) + self.d_pe + self.d_pc
    }
}

#[derive(Clone, Copy)]
struct Metrics {
    cr: i64,
    pe: Sixths,
    pc: Sixths,
    ps: Sixths,
}

impl Metrics {
    fn p(&self) -> Sixths {
        self.pe + self.pc + self.ps
    }
}

/// Replay engine: residual state, reference solution, and potential account.
pub struct Ledger<'a> {
    state: ResidualState<'a>,
    tref: Vec<RefPair>,
    ca: i64,
    ccomp: BTreeMap<Node, Sixths>,
    scomp: BTreeMap<Node, Sixths>,
    redistributed: bool,
}

impl<'a> Ledger<'a> {
    /// Starts an audit with the reference solution set to `opt`, re-anchored
    /// so that every cost-2 connection joins two terminals (a cost-2 pair can
    /// join any two nodes of its sides, so this never raises the cost) and no
    /// Steiner node hangs by a single connection.
    pub fn init(inst: &'a Instance, opt: &OptimalForest) -> Result<Ledger<'a>> {
        let state = ResidualState::new(inst);
        let mut pairs: Vec<RefPair> = opt
            .pairs
            .iter()
            .map(|p| RefPair::new(p.lo(), p.hi(), inst.graph().pair_cost(p)))
            .collect();
        pairs.sort();
        debug_assert!(is_forest(inst.node_count(), &pairs));

        loop {
            let mut deg: BTreeMap<Node, usize> = BTreeMap::new();
            for rp in &pairs {
                *deg.entry(rp.a).or_insert(0) += 1;
                *deg.entry(rp.b).or_insert(0) += 1;
            }
            if let Some(v) = deg
                .iter()
                .filter(|(v, d)| **d == 1 && !inst.is_terminal(**v))
                .map(|(v, _)| *v)
                .next()
            {
                pairs.retain(|rp| !rp.touches(v));
                continue;
            }
            let hanging = pairs.iter().position(|rp| {
                rp.cost == 2 && (!inst.is_terminal(rp.a) || !inst.is_terminal(rp.b))
            });
            if let Some(i) = hanging {
                let rp = pairs.remove(i);
                let side_a = reachable(&pairs, rp.a);
                let side_b = reachable(&pairs, rp.b);
                let ta = side_a.iter().copied().find(|v| inst.is_terminal(*v));
                let tb = side_b.iter().copied().find(|v| inst.is_terminal(*v));
                if let (Some(ta), Some(tb)) = (ta, tb) {
                    let cost = inst.graph().connection_cost(ta, tb)?;
                    pairs.push(RefPair::new(ta, tb, cost));
                    pairs.sort();
                }
                continue;
            }
            break;
        }

        let led = Ledger {
            state,
            tref: pairs,
            ca: 0,
            ccomp: BTreeMap::new(),
            scomp: BTreeMap::new(),
            redistributed: false,
        };
        debug_assert!({
            let mut f = ConnectionSet::new();
            for rp in &led.tref {
                f.insert(Pair::new(rp.a, rp.b));
            }
            is_valid_solution(inst, &f)?
        });
        Ok(led)
    }

    pub fn reference(&self) -> ReferenceSolution {
        ReferenceSolution {
            pairs: self.tref.iter().map(|rp| (Pair::new(rp.a, rp.b), rp.cost)).collect(),
        }
    }

    pub fn reference_cost(&self) -> u64 {
        self.tref.iter().map(|rp| rp.cost).sum()
    }

    pub fn skeleton_len(&self) -> usize {
        self.tref.iter().filter(|rp| rp.cost == 1).count()
    }

    pub fn ca(&self) -> i64 {
        self.ca
    }

    pub fn redistributed(&self) -> bool {
        self.redistributed
    }

    pub fn potential_state(&self) -> PotentialState {
        PotentialState {
            ca: self.ca,
            cr: self.reference_cost() as i64,
            skeleton_edges: self.skeleton_len(),
            ccomp: self.ccomp.clone(),
            scomp: self.scomp.clone(),
        }
    }

    pub fn prom_cost(&self) -> Sixths {
        self.potential_state().prom_cost()
    }

    fn metrics(&self) -> Metrics {
        let pot = self.potential_state();
        Metrics { cr: pot.cr, pe: pot.pe(), pc: pot.pc(), ps: pot.ps() }
    }

    fn skeleton_pairs(&self) -> Vec<RefPair> {
        self.tref.iter().copied().filter(|rp| rp.cost == 1).collect()
    }

    fn skeleton_degree(&self, v: Node) -> usize {
        self.tref.iter().filter(|rp| rp.cost == 1 && rp.touches(v)).count()
    }

    /// Connected components of the skeleton, as sets of supernode
    /// representatives, sorted by smallest member.
    fn skeleton_comps(&self) -> Vec<BTreeSet<Node>> {
        let mut adj: BTreeMap<Node, Vec<Node>> = BTreeMap::new();
        for rp in self.skeleton_pairs() {
            adj.entry(rp.a).or_default().push(rp.b);
            adj.entry(rp.b).or_default().push(rp.a);
        }
        let mut seen = BTreeSet::new();
        let mut comps = Vec::new();
        for &start in adj.keys() {
            if !seen.insert(start) {
                continue;
            }
            let mut comp = BTreeSet::new();
            let mut stack = vec![start];
            while let Some(v) = stack.pop() {
                if !comp.insert(v) {
                    continue;
                }
                for &w in adj.get(&v).into_iter().flatten() {
                    if !comp.contains(&w) {
                        stack.push(w);
                        seen.insert(w);
                    }
                }
            }
            comps.push(comp);
        }
        comps
    }

    fn comp_original_nodes(&mut self, comp: &BTreeSet<Node>) -> BTreeSet<Node> {
        let mut out = BTreeSet::new();
        for &r in comp {
            out.extend(self.state.class_members(r));
        }
        out
    }

    /// `(original-node set, potential)` for each skeleton component.
    fn comp_snapshot(&mut self) -> Vec<(BTreeSet<Node>, Sixths)> {
        let comps = self.skeleton_comps();
        let mut out = Vec::with_capacity(comps.len());
        for comp in comps {
            let key = *comp.iter().next().expect("nonempty component");
            let pot = self.ccomp.get(&key).copied().unwrap_or(Sixths::ZERO);
            let orig = self.comp_original_nodes(&comp);
            out.push((orig, pot));
        }
        out
    }

    /// Recomputes the component potential map. Each new component inherits
    /// the minimum potential of the old components it overlaps (a component
    /// formed by merging keeps its most indebted constituent), except where
    /// `overrides` pins the component containing a given node to a value.
    /// Potentials of vanished components are released.
    fn rebuild_ccomp(
        &mut self,
        old: &[(BTreeSet<Node>, Sixths)],
        overrides: &[(Node, Sixths)],
    ) {
        let comps = self.skeleton_comps();
        let mut next = BTreeMap::new();
        for comp in comps {
            let key = *comp.iter().next().expect("nonempty component");
            let orig = self.comp_original_nodes(&comp);
            let mut pot = old
                .iter()
                .filter(|(nodes, _)| !nodes.is_disjoint(&orig))
                .map(|(_, p)| *p)
                .min()
                .unwrap_or(Sixths::ZERO);
            for (member, value) in overrides {
                if comp.contains(member) {
                    pot = *value;
                }
            }
            if !pot.is_zero() {
                next.insert(key, pot);
            }
        }
        self.ccomp = next;
    }

    /// Drops star potentials whose Steiner node merged into a terminal
    /// supernode or lost all skeleton edges.
    fn prune_scomp(&mut self) {
        let keys: Vec<Node> = self.scomp.keys().copied().collect();
        for k in keys {
            let r = self.state.rep(k);
            if self.state.class_is_terminal(r) || self.skeleton_degree(r) == 0 {
                self.scomp.remove(&k);
            }
        }
    }

    /// Re-keys reference pairs to current representatives, dropping pairs
    /// whose endpoints merged.
    fn rekey(&mut self) {
        let old = std::mem::take(&mut self.tref);
        for rp in old {
            let a = self.state.rep(rp.a);
            let b = self.state.rep(rp.b);
            if a != b {
                self.tref.push(RefPair::new(a, b, rp.cost));
            }
        }
        self.tref.sort();
    }

    /// Restores forest-ness after a merge, keeping skeleton pairs first so
    /// cost-2 connections are removed preferentially. A dropped skeleton pair
    /// always lies on a skeleton cycle, so components never split here.
    fn cycle_break(&mut self) {
        let mut uf = UnionFind::new(self.state.instance().node_count());
        let mut by_cost = self.tref.clone();
        by_cost.sort_by_key(|rp| (rp.cost, rp.a, rp.b));
        let mut kept = Vec::with_capacity(by_cost.len());
        for rp in by_cost {
            if uf.union(rp.a, rp.b) {
                kept.push(rp);
            }
        }
        kept.sort();
        self.tref = kept;
    }

    fn tref_degree_map(&self) -> BTreeMap<Node, usize> {
        let mut deg = BTreeMap::new();
        for rp in &self.tref {
            *deg.entry(rp.a).or_insert(0) += 1;
            *deg.entry(rp.b).or_insert(0) += 1;
        }
        deg
    }

    fn smallest_steiner_with_degree(&mut self, want: usize) -> Option<Node> {
        let deg = self.tref_degree_map();
        deg.into_iter()
            .filter(|(_, d)| *d == want)
            .map(|(v, _)| v)
            .find(|v| !self.state.class_is_terminal(*v))
    }

    fn reachable_now(&self, start: Node) -> BTreeSet<Node> {
        reachable(&self.tref, start)
    }

    fn smallest_terminal_in(&mut self, nodes: &BTreeSet<Node>) -> Option<Node> {
        nodes.iter().copied().find(|v| self.state.class_is_terminal(*v))
    }

    fn remove_pair(&mut self, rp: RefPair) {
        let i = self.tref.iter().position(|x| *x == rp).expect("pair present");
        self.tref.remove(i);
    }

    /// Reconnects the sides of `x` and `y` with a terminal-terminal non-edge
    /// if both sides hold terminals; otherwise the terminal-free side is left
    /// for leaf pruning.
    fn reconnect_sides(&mut self, x: Node, y: Node) {
        let side_x = self.reachable_now(x);
        let side_y = self.reachable_now(y);
        debug_assert!(side_x.is_disjoint(&side_y));
        let tx = self.smallest_terminal_in(&side_x);
        let ty = self.smallest_terminal_in(&side_y);
        if let (Some(tx), Some(ty)) = (tx, ty) {
            self.tref.push(RefPair::new(tx, ty, 2));
            self.tref.sort();
        }
    }

    /// One pass of reference normalization: drop hanging Steiner nodes,
    /// replace degree-2 Steiner nodes by non-edges (`Path`), and — when
    /// permitted — replace Steiner-Steiner skeleton edges by non-edges
    /// (`Bridge`). Every step logs its account deltas.
    fn cleanup(&mut self, allow_bridge: bool) -> Vec<SurgeryStep> {
        let mut log = Vec::new();
        loop {
            if let Some(v) = self.smallest_steiner_with_degree(1) {
                let before = self.metrics();
                let snapshot = self.comp_snapshot();
                let rp = *self.tref.iter().find(|rp| rp.touches(v)).expect("incident pair");
                debug_assert_eq!(rp.cost, 1, "Steiner nodes touch only skeleton pairs");
                self.remove_pair(rp);
                self.rebuild_ccomp(&snapshot, &[]);
                self.prune_scomp();
                log.push(self.step_record(SurgeryKind::SteinerLeaf, before));
                continue;
            }
            if let Some(v) = self.smallest_steiner_with_degree(2) {
                let before = self.metrics();
                let snapshot = self.comp_snapshot();
                let incident: Vec<RefPair> =
                    self.tref.iter().copied().filter(|rp| rp.touches(v)).collect();
                debug_assert!(incident.iter().all(|rp| rp.cost == 1));
                let (x, y) = (incident[0].other(v), incident[1].other(v));
                debug_assert_ne!(x, y, "parallel pairs are broken before cleanup");
                self.remove_pair(incident[0]);
                self.remove_pair(incident[1]);
                self.reconnect_sides(x, y);
                self.rebuild_ccomp(&snapshot, &[(x, Sixths::ZERO), (y, Sixths::ZERO)]);
                self.prune_scomp();
                log.push(self.step_record(SurgeryKind::Path, before));
                continue;
            }
            if allow_bridge {
                let bridge = self
                    .skeleton_pairs()
                    .into_iter()
                    .find(|rp| {
                        !self.state.class_is_terminal(rp.a) && !self.state.class_is_terminal(rp.b)
                    });
                if let Some(rp) = bridge {
                    let before = self.metrics();
                    let snapshot = self.comp_snapshot();
                    let old_pot = {
                        let comps = self.skeleton_comps();
                        let comp = comps.iter().find(|c| c.contains(&rp.a)).expect("comp");
                        let key = *comp.iter().next().expect("nonempty");
                        self.ccomp.get(&key).copied().unwrap_or(Sixths::ZERO)
                    };
                    self.remove_pair(rp);
                    self.reconnect_sides(rp.a, rp.b);
                    // the half keyed lower keeps the old potential, the other
                    // half is charged for the split
                    let charge = if self.redistributed {
                        Sixths::sixths(-3)
                    } else {
                        Sixths::sixths(-4)
                    };
                    let comps = self.skeleton_comps();
                    let key_a = comps
                        .iter()
                        .find(|c| c.contains(&rp.a))
                        .map(|c| *c.iter().next().expect("nonempty"));
                    let key_b = comps
                        .iter()
                        .find(|c| c.contains(&rp.b))
                        .map(|c| *c.iter().next().expect("nonempty"));
                    let overrides = match (key_a, key_b) {
                        (Some(ka), Some(kb)) if ka <= kb => {
                            vec![(rp.a, old_pot), (rp.b, charge)]
                        }
                        (Some(_), Some(_)) => vec![(rp.b, old_pot), (rp.a, charge)],
                        _ => vec![],
                    };
                    self.rebuild_ccomp(&snapshot, &overrides);
                    self.prune_scomp();
                    log.push(self.step_record(SurgeryKind::Bridge, before));
                    continue;
                }
            }
            break;
        }
        log
    }

    fn step_record(&mut self, kind: SurgeryKind, before: Metrics) -> SurgeryStep {
        let after = self.metrics();
        SurgeryStep {
            kind,
            d_cr: after.cr - before.cr,
            d_pe: after.pe - before.pe,
            d_pc: after.pc - before.pc,
        }
    }

    /// Whether no skeleton pair joins two Steiner supernodes and every
    /// Steiner supernode touching the skeleton does so with degree at least 3.
    pub fn is_bridgeless(&mut self) -> bool {
        for rp in self.skeleton_pairs() {
            if !self.state.class_is_terminal(rp.a) && !self.state.class_is_terminal(rp.b) {
                return false;
            }
        }
        let deg = self.tref_degree_map();
        for (v, _) in deg {
            if !self.state.class_is_terminal(v) {
                let d = self.skeleton_degree(v);
                if d > 0 && d < 3 {
                    return false;
                }
            }
        }
        true
    }

    /// Normalizes the reference into bridgeless form. Requires that the
    /// residual instance has no terminal-terminal edge left (the edge
    /// collapses of the trace must be replayed first). Each step must not
    /// increase `CR + PE + PC`.
    pub fn make_bridgeless(&mut self) -> Result<Vec<SurgeryStep>> {
        if self.state.find_terminal_edge().is_some() {
            return Err(precondition(
                "bridgeless normalization requires a residual instance without \
                 terminal-terminal edges",
            ));
        }
        let log = self.cleanup(true);
        debug_assert!(log.iter().all(|s| s.account_delta() <= Sixths::ZERO));
        debug_assert!(self.is_bridgeless());
        Ok(log)
    }

    /// One-time potential shift before the first 3-star of the trace: each
    /// component sitting at -2/3 is raised to -1/2 and its smallest Steiner
    /// star is lowered to -1/6, leaving the total unchanged.
    pub fn redistribute(&mut self) {
        let before = self.metrics().p();
        let comps = self.skeleton_comps();
        for comp in comps {
            let key = *comp.iter().next().expect("nonempty component");
            if self.ccomp.get(&key) != Some(&Sixths::sixths(-4)) {
                continue;
            }
            self.ccomp.insert(key, Sixths::sixths(-3));
            let donor = comp
                .iter()
                .copied()
                .find(|v| !self.state.class_is_terminal(*v))
                .expect("an indebted component contains a Steiner node");
            self.scomp.insert(donor, Sixths::sixths(-1));
        }
        self.redistributed = true;
        debug_assert_eq!(self.metrics().p(), before);
        debug_assert!(self.ccomp.values().all(|p| *p >= Sixths::sixths(-3)));
        debug_assert!(self.scomp.values().all(|p| *p >= Sixths::sixths(-1)));
    }

    /// Replays one solver move: commits its pairs to the residual state and
    /// performs the matching surgery on the reference (re-key, cycle break,
    /// cleanup without bridge steps).
    pub fn apply_move(&mut self, mv: &Move) -> Result<()> {
        match mv.kind {
            MoveKind::CollapseEdge | MoveKind::CollapseStar | MoveKind::Finish => {}
            _ => {
                return Err(invalid(format!(
                    "audit expects edge/star/finish moves only, got {:?}",
                    mv.kind
                )))
            }
        }
        debug_assert!(mv.removed.is_empty());
        let snapshot = self.comp_snapshot();
        let mut cost = 0u64;
        for p in &mv.added {
            cost += self.state.add_connection_exact(p.lo(), p.hi())?;
        }
        if cost as i64 != mv.cost {
            return Err(invalid(format!(
                "move does not replay: recorded cost {}, actual {cost}",
                mv.cost
            )));
        }
        self.ca += mv.cost;
        self.rekey();
        self.cycle_break();
        self.rebuild_ccomp(&snapshot, &[]);
        self.prune_scomp();
        self.cleanup(false);
        Ok(())
    }
}

fn reachable(pairs: &[RefPair], start: Node) -> BTreeSet<Node> {
    let mut out = BTreeSet::new();
    let mut stack = vec![start];
    while let Some(v) = stack.pop() {
        if !out.insert(v) {
            continue;
        }
        for rp in pairs {
            if rp.touches(v) {
                let w = rp.other(v);
                if !out.contains(&w) {
                    stack.push(w);
                }
            }
        }
    }
    out
}

fn is_forest(n: usize, pairs: &[RefPair]) -> bool {
    let mut uf = UnionFind::new(n);
    pairs.iter().all(|rp| uf.union(rp.a, rp.b))
}

/// Per-move audit record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MoveAudit {
    pub index: usize,
    pub kind: MoveKind,
    pub d_ca: i64,
    pub d_cr: i64,
    pub d_p: Sixths,
    pub prom_cost: Sixths,
    pub monotone: bool,
}

/// End-of-run facts the analysis promises unconditionally.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct HardFacts {
    pub final_cr_zero: bool,
    pub final_p_zero: bool,
    pub ca_matches_algorithm: bool,
    pub ca_within_initial_promise: bool,
}

impl HardFacts {
    pub fn all(&self) -> bool {
        self.final_cr_zero
            && self.final_p_zero
            && self.ca_matches_algorithm
            && self.ca_within_initial_promise
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub optimum_cost: u64,
    pub algorithm_cost: u64,
    pub initial_cr: u64,
    pub initial_skeleton: usize,
    pub initial_prom_cost: Sixths,
    /// Bridgeless-normalization steps with their account deltas.
    pub prep_steps: Vec<SurgeryStep>,
    pub bridgeless_after_prep: bool,
    pub moves: Vec<MoveAudit>,
    pub monotone_moves: usize,
    pub final_ca: i64,
    pub final_cr: i64,
    pub final_p: Sixths,
    pub hard: HardFacts,
}

/// Replays a single-requirement trace against an exact optimum and reports
/// the full potential account: the promised-cost sequence, whether each step
/// kept it non-increasing (diagnostic), and the hard end-of-run facts.
pub fn audit_stp_run(inst: &Instance, opt: &OptimalForest, trace: &Trace) -> Result<AuditReport> {
    if inst.requirements().len() > 1 {
        return Err(precondition("audit requires at most one requirement group"));
    }
    let mut led = Ledger::init(inst, opt)?;
    let initial_cr = led.reference_cost();
    let initial_skeleton = led.skeleton_len();
    let initial_prom_cost = led.prom_cost();

    let mut moves = Vec::new();
    let mut record = |led: &Ledger<'_>, mv: &Move, index: usize, before: (i64, Sixths, Sixths)| {
        let (cr0, p0, prom0) = before;
        let pot = led.potential_state();
        let prom = pot.prom_cost();
        moves.push(MoveAudit {
            index,
            kind: mv.kind.clone(),
            d_ca: mv.cost,
            d_cr: pot.cr - cr0,
            d_p: pot.p() - p0,
            prom_cost: prom,
            monotone: prom <= prom0,
        });
    };

    let split = trace
        .moves
        .iter()
        .position(|m| m.kind != MoveKind::CollapseEdge)
        .unwrap_or(trace.moves.len());
    for (i, mv) in trace.moves[..split].iter().enumerate() {
        let pot = led.potential_state();
        let before = (pot.cr, pot.p(), pot.prom_cost());
        led.apply_move(mv)?;
        record(&led, mv, i, before);
    }

    let prep_steps = led.make_bridgeless()?;
    let bridgeless_after_prep = led.is_bridgeless();

    for (i, mv) in trace.moves[split..].iter().enumerate() {
        if mv.kind == MoveKind::CollapseStar && mv.added.len() == 3 && !led.redistributed() {
            led.redistribute();
        }
        let pot = led.potential_state();
        let before = (pot.cr, pot.p(), pot.prom_cost());
        led.apply_move(mv)?;
        record(&led, mv, split + i, before);
    }

    if led.state.forest_cost() != trace.final_cost {
        return Err(invalid(format!(
            "trace does not replay: final cost {} recorded, {} reached",
            trace.final_cost,
            led.state.forest_cost()
        )));
    }

    let pot = led.potential_state();
    let hard = HardFacts {
        final_cr_zero: pot.cr == 0,
        final_p_zero: pot.p().is_zero(),
        ca_matches_algorithm: pot.ca == trace.final_cost as i64,
        ca_within_initial_promise: Sixths::int(pot.ca) <= initial_prom_cost,
    };
    let monotone_moves = moves.iter().filter(|m| m.monotone).count();
    Ok(AuditReport {
        optimum_cost: opt.cost,
        algorithm_cost: trace.final_cost,
        initial_cr,
        initial_skeleton,
        initial_prom_cost,
        prep_steps,
        bridgeless_after_prep,
        moves,
        monotone_moves,
        final_ca: pot.ca,
        final_cr: pot.cr,
        final_p: pot.p(),
        hard,
    })
}

/// Brings an optimal forest for a grouped instance into the normal form the
/// budget checks assume: no Steiner node of degree below 3 on its own, no
/// cost-2 connection except between two terminals of one group. Reconnection
/// always happens inside a group that spans the cut, using its smallest
/// terminals; the cost never increases.
pub fn normalize_forest_gst(inst: &Instance, opt: &OptimalForest) -> OptimalForest {
    let groups = inst.requirements().groups();
    let mut pairs: Vec<RefPair> = opt
        .pairs
        .iter()
        .map(|p| RefPair::new(p.lo(), p.hi(), inst.graph().pair_cost(p)))
        .collect();
    pairs.sort();

    let reconnect = |pairs: &mut Vec<RefPair>, x: Node, y: Node| {
        let side_x = reachable(pairs, x);
        let side_y = reachable(pairs, y);
        let spanning = groups.iter().find(|g| {
            g.iter().any(|t| side_x.contains(t)) && g.iter().any(|t| side_y.contains(t))
        });
        if let Some(g) = spanning {
            let tx = *g.iter().find(|t| side_x.contains(t)).expect("member on side");
            let ty = *g.iter().find(|t| side_y.contains(t)).expect("member on side");
            let cost = inst.graph().pair_cost(Pair::new(tx, ty));
            pairs.push(RefPair::new(tx, ty, cost));
            pairs.sort();
        }
    };

    loop {
        let mut deg: BTreeMap<Node, usize> = BTreeMap::new();
        for rp in &pairs {
            *deg.entry(rp.a).or_insert(0) += 1;
            *deg.entry(rp.b).or_insert(0) += 1;
        }
        if let Some(v) = deg
            .iter()
            .filter(|(v, d)| **d == 1 && !inst.is_terminal(**v))
            .map(|(v, _)| *v)
            .next()
        {
            pairs.retain(|rp| !rp.touches(v));
            continue;
        }
        if let Some(v) = deg
            .iter()
            .filter(|(v, d)| **d == 2 && !inst.is_terminal(**v))
            .map(|(v, _)| *v)
            .next()
        {
            let incident: Vec<RefPair> = pairs.iter().copied().filter(|rp| rp.touches(v)).collect();
            let (x, y) = (incident[0].other(v), incident[1].other(v));
            pairs.retain(|rp| !rp.touches(v));
            reconnect(&mut pairs, x, y);
            continue;
        }
        let misplaced = pairs.iter().position(|rp| {
            rp.cost == 2
                && !groups
                    .iter()
                    .any(|g| g.contains(&rp.a) && g.contains(&rp.b))
        });
        if let Some(i) = misplaced {
            let rp = pairs.remove(i);
            reconnect(&mut pairs, rp.a, rp.b);
            continue;
        }
        break;
    }

    let mut f = ConnectionSet::new();
    for rp in &pairs {
        f.insert(Pair::new(rp.a, rp.b));
    }
    let cost = solution_cost(inst.graph(), &f).expect("pairs are in range");
    debug_assert!(cost <= opt.cost);
    debug_assert!(is_valid_solution(inst, &f).expect("valid nodes"));

    // group the requirement indices by the component serving them
    let mut uf = UnionFind::new(inst.node_count());
    for rp in &pairs {
        uf.union(rp.a, rp.b);
    }
    let mut blocks: BTreeMap<Node, Vec<usize>> = BTreeMap::new();
    for (gi, g) in groups.iter().enumerate() {
        let root = uf.rep(*g.iter().next().expect("proper group"));
        blocks.entry(root).or_default().push(gi);
    }
    OptimalForest { cost, pairs: f, grouping: blocks.into_values().collect() }
}

/// Per-component budget breakdown of a normalized forest component:
/// terminal-terminal edges count 1/2, Steiner-touching edges 1/6, non-edges
/// 1, and each Steiner-containing skeleton component adds a term of
/// magnitude 2/3 whose sign differs between the two reported conventions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PgBreakdown {
    pub t_connections: usize,
    pub steiner_edges: usize,
    pub non_edges: usize,
    pub steiner_comps: usize,
    pub literal: Sixths,
    pub flipped: Sixths,
}

/// Sums the budget over the connections and skeleton components of one
/// forest component (given by its node set).
pub fn pg_of_fcomp(inst: &Instance, forest: &ConnectionSet, comp: &BTreeSet<Node>) -> PgBreakdown {
    let mut t_connections = 0;
    let mut steiner_edges = 0;
    let mut non_edges = 0;
    let mut skeleton: Vec<Pair> = Vec::new();
    for p in forest.iter() {
        if !comp.contains(&p.lo()) || !comp.contains(&p.hi()) {
            continue;
        }
        if inst.graph().pair_cost(p) == 2 {
            non_edges += 1;
        } else if inst.is_terminal(p.lo()) && inst.is_terminal(p.hi()) {
            t_connections += 1;
            skeleton.push(p);
        } else {
            steiner_edges += 1;
            skeleton.push(p);
        }
    }
    let mut uf = UnionFind::new(inst.node_count());
    for p in &skeleton {
        uf.union(p.lo(), p.hi());
    }
    let mut steiner_roots = BTreeSet::new();
    for p in &skeleton {
        for v in [p.lo(), p.hi()] {
            if !inst.is_terminal(v) {
                steiner_roots.insert(uf.rep(v));
            }
        }
    }
    let steiner_comps = steiner_roots.len();
    let base = Sixths::sixths(3 * t_connections as i64)
        + Sixths::sixths(steiner_edges as i64)
        + Sixths::int(non_edges as i64);
    PgBreakdown {
        t_connections,
        steiner_edges,
        non_edges,
        steiner_comps,
        literal: base + Sixths::sixths(-4 * steiner_comps as i64),
        flipped: base + Sixths::sixths(4 * steiner_comps as i64),
    }
}

/// Safety verdict for one component of a normalized optimal forest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FcompSafety {
    pub nodes: Vec<Node>,
    /// Indices of the requirement groups living in this component.
    pub group_indices: Vec<usize>,
    /// Whether any of those groups has more than two terminals.
    pub large_group: bool,
    /// 3/2 for components holding a larger group, 1 for pair-only components.
    pub threshold: Sixths,
    pub pg: PgBreakdown,
    pub holds_literal: bool,
    pub holds_flipped: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SafetyReport {
    pub comps: Vec<FcompSafety>,
    pub all_literal: bool,
    pub all_flipped: bool,
}

impl SafetyReport {
    /// Whether every pair-only component meets its budget under the literal
    /// sign convention.
    pub fn pair_comps_hold_literal(&self) -> bool {
        self.comps.iter().filter(|c| !c.large_group).all(|c| c.holds_literal)
    }
}

/// Evaluates the per-component budget of a normalized optimal forest against
/// the thresholds the grouped bound rests on. Only meaningful — and only
/// accepted — on instances where the grouped preprocessing has no move left.
pub fn check_safety_lemmas(inst: &Instance, opt: &OptimalForest) -> Result<SafetyReport> {
    let mut probe = ResidualState::new(inst);
    let (moves, _) = crate::gst::ge_preprocess(&mut probe)?;
    if !moves.is_empty() {
        return Err(precondition(
            "safety thresholds apply to preprocessing-fixpoint instances only",
        ));
    }

    let norm = normalize_forest_gst(inst, opt);
    let mut uf = UnionFind::new(inst.node_count());
    for p in norm.pairs.iter() {
        uf.union(p.lo(), p.hi());
    }
    let mut comp_nodes: BTreeMap<Node, BTreeSet<Node>> = BTreeMap::new();
    for p in norm.pairs.iter() {
        for v in [p.lo(), p.hi()] {
            comp_nodes.entry(uf.rep(v)).or_default().insert(v);
        }
    }

    let groups = inst.requirements().groups();
    let mut comps = Vec::new();
    for (root, nodes) in comp_nodes {
        let group_indices: Vec<usize> = groups
            .iter()
            .enumerate()
            .filter(|(_, g)| g.iter().all(|t| nodes.contains(t)))
            .map(|(i, _)| i)
            .collect();
        let _ = root;
        let large_group = group_indices.iter().any(|&i| groups[i].len() > 2);
        let threshold = if large_group { Sixths::sixths(9) } else { Sixths::int(1) };
        let pg = pg_of_fcomp(inst, &norm.pairs, &nodes);
        comps.push(FcompSafety {
            nodes: nodes.into_iter().collect(),
            group_indices,
            large_group,
            threshold,
            holds_literal: pg.literal >= threshold,
            holds_flipped: pg.flipped >= threshold,
            pg,
        });
    }
    let all_literal = comps.iter().all(|c| c.holds_literal);
    let all_flipped = comps.iter().all(|c| c.holds_flipped);
    Ok(SafetyReport { comps, all_literal, all_flipped })
}
