//! Desk-scale data-parallel training: synthetic data, small models with
//! analytic gradients, and a lockstep runner comparing DeMo against fully
//! synchronized baselines.

pub mod bench;
pub mod data;
pub mod metrics;
pub mod model;
pub mod plot;
pub mod run;
pub mod sweep;

pub use metrics::{MetricsRow, RunMetrics};
pub use run::{build_problem, run_experiment, HarnessError, Problem};
pub use sweep::{run_sweep, SweepGrid, SweepRow};
