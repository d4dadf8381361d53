//! Anytime assessment and tuning of MaxSAT local search.
//!
//! - [`wcnf`]: instance model, WCNF parsing and cost evaluation
//! - [`solver`]: clause-weighting local search recording anytime trajectories
//! - [`assess`]: scores, win counts, ECDF curves, AUC and CSV reports
//! - [`hpo`]: Best-f and ECDF' tuning costs, target store, random-search tuner
//! - [`generate`]: crafted instance families
//! - [`runlog`] and [`experiment`]: run matrices, JSONL logs, report pipeline

pub mod assess;
pub mod experiment;
pub mod generate;
pub mod hpo;
pub mod runlog;
pub mod solver;
pub mod wcnf;

pub use solver::{solve, Budget, Clock, RunResult, SolverConfig, Trajectory, TrajectoryEvent};
pub use wcnf::{Assignment, CostReport, Literal, WcnfInstance};
