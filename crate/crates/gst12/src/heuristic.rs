//! The star-collapsing heuristic and its move trace.
//!
//! The main loop repeats three moves on the residual state, in strict
//! priority order, until the given groups are satisfied:
//!
//! 1. collapse an induced edge joining two eligible terminal supernodes,
//! 2. collapse a largest star (`s >= 3`) over eligible terminal supernodes,
//! 3. finishing: join two supernodes of one unsatisfied group with a single
//!    pair (cost 2 when no edge is available).
//!
//! Every search breaks ties toward smaller indices, so traces are
//! reproducible; [`replay_trace`] re-applies a trace move by move and
//! validates costs against the instance.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{internal, invalid, precondition, Result};
use crate::instance::{is_valid_solution, ConnectionSet, Instance, Node, Pair};
use crate::residual::ResidualState;

/// Which terminal supernodes may serve as star leaves / edge endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum StarPolicy {
    /// Only supernodes holding a terminal of a not-yet-satisfied group.
    Active,
    /// Supernodes holding a terminal of any surviving group, satisfied or not.
    All,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum MoveKind {
    /// Main-loop or preprocessing collapse of a terminal-terminal edge.
    CollapseEdge,
    /// Main-loop collapse of an `s >= 3` star.
    CollapseStar,
    /// Finishing pair between two supernodes of one unsatisfied group.
    Finish,
    /// Preprocessing collapse of a star contained in one requirement group.
    PreprocessStar,
    /// Break-up of an unsafe requirement: its internal collapsed pairs are
    /// removed and each origin pair that comes apart is rejoined directly,
    /// so the cost delta can be negative when the refund dominates.
    Annihilate { origin_pairs: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Move {
    pub kind: MoveKind,
    /// Pairs appended to the forest by this move.
    pub added: Vec<Pair>,
    /// Pairs removed from the forest (annihilation only).
    pub removed: Vec<Pair>,
    /// Cost delta: cost(added) - cost(removed).
    pub cost: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize)]
pub struct Trace {
    pub moves: Vec<Move>,
    pub final_cost: u64,
}

impl Trace {
    pub fn cost_sum(&self) -> i64 {
        self.moves.iter().map(|m| m.cost).sum()
    }
}

fn eligible_reps(
    state: &mut ResidualState<'_>,
    groups: &[BTreeSet<Node>],
    policy: StarPolicy,
) -> BTreeSet<Node> {
    let mut out = BTreeSet::new();
    for g in groups {
        let satisfied = state.group_satisfied(g);
        if policy == StarPolicy::Active && satisfied {
            continue;
        }
        for &t in g {
            out.insert(state.rep(t));
        }
    }
    out
}

/// Runs the priority loop until every group in `groups` is satisfied,
/// returning the moves performed. `groups` are sets of original terminals
/// (for the grouped pipeline: the surviving requirements).
pub fn run_main_loop(
    state: &mut ResidualState<'_>,
    groups: &[BTreeSet<Node>],
    policy: StarPolicy,
) -> Result<Vec<Move>> {
    let mut moves = Vec::new();
    loop {
        let unsatisfied: Vec<&BTreeSet<Node>> =
            groups.iter().filter(|g| !state.group_satisfied(g)).collect();
        if unsatisfied.is_empty() {
            return Ok(moves);
        }
        let eligible = eligible_reps(state, groups, policy);

        if let Some((a, b, _)) = state.find_terminal_edge_among(&eligible) {
            let out = state.collapse(&[a, b])?;
            moves.push(Move {
                kind: MoveKind::CollapseEdge,
                added: out.added,
                removed: vec![],
                cost: out.cost as i64,
            });
            continue;
        }
        if let Some(star) = state.find_max_star(&eligible) {
            let mut set = vec![star.center];
            set.extend(star.leaves.iter().copied());
            let out = state.collapse(&set)?;
            // Same spanning pairs, though collapse may emit them in a
            // different order than the star listed its leaves.
            debug_assert_eq!(
                out.added.iter().collect::<BTreeSet<_>>(),
                star.representatives.iter().collect::<BTreeSet<_>>()
            );
            moves.push(Move {
                kind: MoveKind::CollapseStar,
                added: out.added,
                removed: vec![],
                cost: out.cost as i64,
            });
            continue;
        }
        // Finishing: smallest representative pair within one unsatisfied group.
        let mut candidate: Option<(Node, Node)> = None;
        for g in &unsatisfied {
            let mut reps: BTreeSet<Node> = BTreeSet::new();
            for &t in g.iter() {
                reps.insert(state.rep(t));
            }
            let mut it = reps.iter();
            let (a, b) = (*it.next().expect("unsatisfied group"), *it.next().expect("two classes"));
            if candidate.is_none_or(|c| (a, b) < c) {
                candidate = Some((a, b));
            }
        }
        let Some((a, b)) = candidate else {
            return Err(internal("unsatisfied groups but no finishing pair"));
        };
        let (pair, cost) = state.connect_pair(a, b)?;
        moves.push(Move { kind: MoveKind::Finish, added: vec![pair], removed: vec![], cost: cost as i64 });
    }
}

/// Solves a single-group instance with the priority loop.
pub fn solve_stp(inst: &Instance) -> Result<(ConnectionSet, Trace)> {
    let groups = inst.requirements().groups();
    if groups.len() != 1 {
        return Err(precondition(format!(
            "single-group solver called with {} groups",
            groups.len()
        )));
    }
    let mut state = ResidualState::new(inst);
    let moves = run_main_loop(&mut state, groups, StarPolicy::Active)?;
    let f = state.forest().clone();
    let final_cost = state.forest_cost();
    debug_assert!(is_valid_solution(inst, &f)?);
    let trace = Trace { moves, final_cost };
    debug_assert_eq!(trace.cost_sum(), final_cost as i64);
    Ok((f, trace))
}

/// Re-applies a trace against a fresh state, validating every move: added
/// pairs must join distinct supernodes, recorded costs must match the metric,
/// and the final forest must cost `final_cost`. Returns the rebuilt forest.
pub fn replay_trace(inst: &Instance, trace: &Trace) -> Result<ConnectionSet> {
    let mut state = ResidualState::new(inst);
    for (i, m) in trace.moves.iter().enumerate() {
        let mut delta: i64 = 0;
        if !m.removed.is_empty() {
            if !matches!(m.kind, MoveKind::Annihilate { .. }) {
                return Err(invalid(format!("move {i}: only annihilation removes pairs")));
            }
            for p in &m.removed {
                delta -= inst.graph().pair_cost(*p) as i64;
            }
            state
                .remove_connections(&m.removed)
                .map_err(|e| invalid(format!("move {i}: {e}")))?;
        }
        for p in &m.added {
            if state.same_class(p.lo(), p.hi()) {
                return Err(invalid(format!("move {i}: pair {:?} closes a cycle", p)));
            }
            delta += state
                .add_connection_exact(p.lo(), p.hi())
                .map_err(|e| invalid(format!("move {i}: {e}")))? as i64;
        }
        if delta != m.cost {
            return Err(invalid(format!("move {i}: recorded cost {} but pairs cost {delta}", m.cost)));
        }
    }
    if state.forest_cost() != trace.final_cost {
        return Err(invalid(format!(
            "final cost {} does not match trace ({})",
            state.forest_cost(),
            trace.final_cost
        )));
    }
    Ok(state.forest().clone())
}

/// Checks the move-priority invariant on a single-group trace: no star
/// collapse while a terminal-terminal edge exists, no finishing while an
/// `s >= 3` star exists.
pub fn stp_trace_respects_priority(inst: &Instance, trace: &Trace) -> Result<bool> {
    let mut state = ResidualState::new(inst);
    for m in &trace.moves {
        let eligible: BTreeSet<Node> = state.terminal_reps().into_iter().collect();
        match m.kind {
            MoveKind::CollapseEdge => {}
            MoveKind::CollapseStar => {
                if state.find_terminal_edge_among(&eligible).is_some() {
                    return Ok(false);
                }
            }
            MoveKind::Finish => {
                if state.find_terminal_edge_among(&eligible).is_some()
                    || state.find_max_star(&eligible).is_some()
                {
                    return Ok(false);
                }
            }
            _ => return Err(invalid("not a single-group trace")),
        }
        for p in &m.added {
            state.add_connection_exact(p.lo(), p.hi())?;
        }
    }
    Ok(true)
}
