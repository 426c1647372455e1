//! Threshold-constrained priority matching.
//!
//! Agents are matched to capacitated locations by a priority mechanism that
//! honours their preferences only as far as the planner's minimum average
//! outcome still remains reachable. The crate also ships brute-force
//! oracles for certifying the mechanism on small markets, a synthetic
//! instance generator, agent-ordering experiments, and the bundle/CSV
//! formats used by the `cpm` command-line tool.

pub mod error;
pub mod experiment;
pub mod fixtures;
pub mod io;
pub mod lsap;
pub mod mechanism;
pub mod model;
pub mod oracles;
pub mod ordering;
pub mod simgen;

pub use error::{Error, Result};
pub use mechanism::{run_mechanism, MechanismRunner, MechanismOutcome, MechanismParams, MechanismTrace};
pub use model::{
    compute_metrics, is_feasible, is_g_acceptable, pareto_dominates, AgentPreference, Instance, Matching,
    MetricReport, OutcomeMatrix, PlannerView, PreferenceProfile, EPS_TOL,
};
