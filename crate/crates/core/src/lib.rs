//! Proportional allocation for online capacitated bipartite matching.
//!
//! An [`Instance`] pairs advertisers (with capacities) and impression types
//! (with supplies). Offline, [`optimum`] computes the fractional maximum
//! matching and a vertex-cut certificate. [`weights`] finds discretized
//! proportional weights whose allocation reaches `(1-ε)` of the optimum.
//! [`online`] replays unit arrival streams through weight-based and
//! baseline policies, and learns weights from a sample prefix. [`genlab`]
//! generates synthetic instances, quota rules, arrival orders and day
//! families, and [`harness`] sweeps them into CSV/SVG reports.

pub mod error;
pub mod genlab;
pub mod harness;
pub mod instance;
pub mod online;
pub mod optimum;
pub mod rng;
pub mod weights;

pub use error::{Error, Result};
pub use genlab::{ArrivalOrder, DayFamily, GeneratorConfig, QuotaRule};
pub use instance::{AllocationState, Instance, InstanceBuilder, MatchResult};
pub use online::{simulate, ArrivalStream, Evaluator, LearnConfig, LearnMode, OnlinePolicy, TailPolicy};
pub use optimum::{max_matching, min_vertex_cut, opt_value, CutCertificate};
pub use weights::{compute_weights, evaluate_offline, WeightSolution, WeightVector};
