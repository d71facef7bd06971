//! Pipeline for grouped (multi-requirement) instances.
//!
//! Three phases over one residual state:
//!
//! 1. **Preprocessing with safety tagging** ([`ge_preprocess`]): repeatedly
//!    collapse any induced edge between terminal supernodes of unsatisfied
//!    requirements, or a star whose leaves all lie in a single requirement.
//!    Collapsing an edge across two requirements merges them; the union is
//!    tagged safe iff either part was. Groups of more than two terminals
//!    start safe; pair groups start unsafe and turn safe only when their own
//!    edge satisfies them outright (a merged union collapsing an internal
//!    edge stays unsafe: the edge is a sunk cost the break-up refunds, not
//!    evidence the union is worth keeping).
//! 2. **Annihilation** ([`annihilate_unsafe`]): every unsafe requirement is
//!    split back into its origin pairs — the cost-1 pairs collapsed between
//!    its terminals are removed from the forest and each origin pair that
//!    comes apart is rejoined directly at its real cost. A union the
//!    preprocessing happened to satisfy is only broken up when the rejoins
//!    cost strictly less than the refunded collapses. Either way the
//!    requirement drops out of further consideration.
//! 3. The main loop of [`crate::heuristic`] over the surviving safe groups.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{internal, Result};
use crate::heuristic::{run_main_loop, Move, MoveKind, StarPolicy, Trace};
use crate::instance::{is_valid_solution, ConnectionSet, Instance, Node, Pair};
use crate::residual::ResidualState;
use crate::unionfind::UnionFind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Tag {
    Safe,
    Unsafe,
}

/// A requirement as tracked through preprocessing: possibly the union of
/// several original groups merged by cross-group edge collapses.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TaggedRequirement {
    /// Union of the origin groups (original terminal nodes).
    pub members: BTreeSet<Node>,
    pub tag: Tag,
    /// The original proper groups merged into this requirement.
    pub origins: Vec<BTreeSet<Node>>,
    /// Cost-1 pairs collapsed between members of this requirement.
    pub internal_collapsed: Vec<Pair>,
}

fn tagged_index_of_class(
    state: &mut ResidualState<'_>,
    tagged: &[TaggedRequirement],
    class: Node,
) -> Option<usize> {
    let members = state.class_members(class);
    for &v in &members {
        if state.instance().is_terminal(v) {
            let idx = tagged.iter().position(|t| t.members.contains(&v));
            debug_assert!(idx.is_some(), "terminal {v} belongs to no tagged requirement");
            return idx;
        }
    }
    None
}

/// Runs preprocessing to a fixpoint. Edge collapses take priority over
/// in-group stars; both searches break ties toward smaller indices.
pub fn ge_preprocess(state: &mut ResidualState<'_>) -> Result<(Vec<Move>, Vec<TaggedRequirement>)> {
    let groups = state.instance().requirements().groups().to_vec();
    let mut tagged: Vec<TaggedRequirement> = groups
        .iter()
        .map(|g| TaggedRequirement {
            members: g.clone(),
            tag: if g.len() > 2 { Tag::Safe } else { Tag::Unsafe },
            origins: vec![g.clone()],
            internal_collapsed: vec![],
        })
        .collect();
    let mut moves = Vec::new();

    loop {
        // Only terminals of unsatisfied requirements are worth collapsing
        // onto: an edge into an already-connected component buys nothing.
        let live = live_reps(state, &tagged);
        if let Some((a, b, pair)) = state.find_terminal_edge_among(&live) {
            let ga = tagged_index_of_class(state, &tagged, a)
                .ok_or_else(|| internal("terminal supernode without requirement"))?;
            let gb = tagged_index_of_class(state, &tagged, b)
                .ok_or_else(|| internal("terminal supernode without requirement"))?;
            let out = state.collapse(&[a, b])?;
            debug_assert_eq!(out.added, vec![pair]);
            if ga == gb {
                tagged[ga].internal_collapsed.push(pair);
                // A pair requirement finished by its own edge is optimal.
                // A merged union is not vouched for by one internal edge:
                // breaking it up refunds that edge, so it stays unsafe.
                if tagged[ga].origins.len() == 1 {
                    tagged[ga].tag = Tag::Safe;
                }
            } else {
                let (keep, gone) = (ga.min(gb), ga.max(gb));
                let other = tagged.remove(gone);
                let t = &mut tagged[keep];
                t.members.extend(other.members.iter().copied());
                t.origins.extend(other.origins);
                t.internal_collapsed.extend(other.internal_collapsed);
                t.internal_collapsed.push(pair);
                if other.tag == Tag::Safe {
                    t.tag = Tag::Safe;
                }
            }
            moves.push(Move {
                kind: MoveKind::CollapseEdge,
                added: out.added,
                removed: vec![],
                cost: out.cost as i64,
            });
            continue;
        }

        // Largest star whose leaves all belong to one unsatisfied requirement.
        let mut best: Option<(usize, crate::residual::Star)> = None;
        for (gi, t) in tagged.iter().enumerate() {
            if state.group_satisfied(&t.members) {
                continue;
            }
            let mut elig: BTreeSet<Node> = BTreeSet::new();
            for &m in &t.members {
                elig.insert(state.rep(m));
            }
            if let Some(star) = state.find_max_star(&elig) {
                let better = match &best {
                    None => true,
                    Some((_, b)) => {
                        star.s() > b.s() || (star.s() == b.s() && star.center < b.center)
                    }
                };
                if better {
                    best = Some((gi, star));
                }
            }
        }
        if let Some((_, star)) = best {
            let mut set = vec![star.center];
            set.extend(star.leaves.iter().copied());
            let out = state.collapse(&set)?;
            moves.push(Move {
                kind: MoveKind::PreprocessStar,
                added: out.added,
                removed: vec![],
                cost: out.cost as i64,
            });
            continue;
        }
        break;
    }

    debug_assert!({
        let live = live_reps(state, &tagged);
        state.find_terminal_edge_among(&live).is_none()
    });
    Ok((moves, tagged))
}

/// Representatives of every terminal belonging to a not-yet-satisfied
/// requirement.
fn live_reps(state: &mut ResidualState<'_>, tagged: &[TaggedRequirement]) -> BTreeSet<Node> {
    let mut live = BTreeSet::new();
    for t in tagged {
        if state.group_satisfied(&t.members) {
            continue;
        }
        for &m in &t.members {
            live.insert(state.rep(m));
        }
    }
    live
}

/// Breaks up unsafe requirements: removes their internal collapsed pairs
/// from the forest (splitting the partition back) and joins each origin
/// pair that comes apart directly, at its real cost. Every unsatisfied
/// unsafe requirement is broken up; a satisfied one only when the rejoins
/// cost strictly less than the refunded collapses, so the result is never
/// worse than either keeping or breaking everything.
pub fn annihilate_unsafe(
    state: &mut ResidualState<'_>,
    tagged: &[TaggedRequirement],
) -> Result<Vec<Move>> {
    let mut moves = Vec::new();
    for t in tagged {
        if t.tag != Tag::Unsafe {
            continue;
        }
        debug_assert!(t.origins.iter().all(|o| o.len() == 2), "unsafe sets merge pair groups only");
        for p in &t.internal_collapsed {
            if !state.forest().contains(*p) {
                return Err(internal(format!("collapsed pair {:?} missing from the forest", p)));
            }
        }
        if state.group_satisfied(&t.members) && !breakup_pays(state, t) {
            continue;
        }
        let removed = t.internal_collapsed.clone();
        let mut cost: i64 = -removed
            .iter()
            .map(|&p| state.instance().graph().pair_cost(p) as i64)
            .sum::<i64>();
        state.remove_connections(&removed)?;
        let mut origins = t.origins.clone();
        origins.sort();
        let mut added = Vec::new();
        for o in &origins {
            let mut it = o.iter();
            let (&a, &b) = (it.next().expect("pair"), it.next().expect("pair"));
            if state.same_class(a, b) {
                continue; // still connected through surviving collapses
            }
            cost += state.add_connection_exact(a, b)? as i64;
            added.push(Pair::new(a, b));
        }
        moves.push(Move {
            kind: MoveKind::Annihilate { origin_pairs: origins.len() },
            added,
            removed,
            cost,
        });
    }
    Ok(moves)
}

/// Whether splitting this union back into origin pairs refunds more than
/// the rejoins cost. Connectivity is probed on the forest minus the pairs
/// the break-up would remove; rejoins that ride on earlier rejoins are not
/// anticipated, so this can only overestimate the true rejoin bill.
fn breakup_pays(state: &ResidualState<'_>, t: &TaggedRequirement) -> bool {
    let internals: BTreeSet<Pair> = t.internal_collapsed.iter().copied().collect();
    let mut uf = UnionFind::new(state.instance().node_count());
    for p in state.forest().iter() {
        if !internals.contains(&p) {
            uf.union(p.lo(), p.hi());
        }
    }
    let graph = state.instance().graph();
    let refunded: i64 = internals.iter().map(|&p| graph.pair_cost(p) as i64).sum();
    let mut rejoins: i64 = 0;
    for o in &t.origins {
        let mut it = o.iter();
        let (&a, &b) = (it.next().expect("pair"), it.next().expect("pair"));
        if !uf.same(a, b) {
            rejoins += graph.pair_cost(Pair::new(a, b)) as i64;
        }
    }
    rejoins < refunded
}

/// Full pipeline: preprocessing, annihilation, then the main loop over the
/// surviving safe requirements.
pub fn solve_gst(inst: &Instance, policy: StarPolicy) -> Result<(ConnectionSet, Trace)> {
    let mut state = ResidualState::new(inst);
    let (mut moves, tagged) = ge_preprocess(&mut state)?;
    moves.extend(annihilate_unsafe(&mut state, &tagged)?);
    let surviving: Vec<BTreeSet<Node>> = tagged
        .iter()
        .filter(|t| t.tag == Tag::Safe)
        .map(|t| t.members.clone())
        .collect();
    moves.extend(run_main_loop(&mut state, &surviving, policy)?);
    let f = state.forest().clone();
    let final_cost = state.forest_cost();
    debug_assert!(is_valid_solution(inst, &f)?);
    let trace = Trace { moves, final_cost };
    debug_assert_eq!(trace.cost_sum(), final_cost as i64);
    Ok((f, trace))
}
