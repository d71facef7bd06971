//! Solvers for the generalized Steiner tree problem on metrics where every
//! distance is 1 or 2.
//!
//! An instance is given by a graph `G = (V, E)` (the distance-1 pairs; every
//! other pair costs 2) together with a family of requirement groups. A
//! solution is a set of node pairs whose induced connectivity puts each group
//! inside a single component. The crate provides:
//!
//! * the instance model and costs ([`instance`]),
//! * a contraction-based residual state shared by the heuristics ([`residual`]),
//! * the star-collapsing heuristic for single-group instances and its main
//!   loop ([`heuristic`]),
//! * the grouped pipeline: preprocessing with safety tagging, annihilation of
//!   unsafe merged groups, then the main loop ([`gst`]),
//! * an exact oracle (Dreyfus–Wagner over terminal subsets plus a
//!   partition-enumeration forest optimum and an independent brute-force
//!   check) ([`oracle`]),
//! * an exact-rational accounting ledger that replays heuristic runs against
//!   an optimal solution and audits the amortized cost bound ([`ledger`]).

pub mod error;
pub mod gst;
pub mod heuristic;
pub mod instance;
pub mod ledger;
pub mod oracle;
pub mod residual;

mod unionfind;

pub use error::{Error, Result};
