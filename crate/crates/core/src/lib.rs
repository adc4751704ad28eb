//! Numerics for the intermittent interval map
//!
//! ```text
//! T(x) = x (1 + (2x)^alpha)   on (0, 1/2]
//! T(x) = 2x - 1               on (1/2, 1]
//! ```
//!
//! with `0 < alpha < 1`. The crate covers the map itself and its first-return
//! structure over `Y = (1/2, 1]` ([`map`], [`returns`]), the invariant density
//! by Ulam discretization with a Birkhoff cross-check ([`measure`]), the
//! first-return transfer operators and the renewal quantities built from them
//! ([`renewal`]), and Monte Carlo experiments on shrinking-target hit counts
//! ([`harness`]).
//!
//! Every computation is deterministic: parallel work is split along fixed
//! boundaries (rows, orbits) and merged in a fixed order, so results do not
//! depend on the size of the rayon thread pool.

pub mod error;
pub mod harness;
pub mod interval;
pub mod map;
pub mod measure;
pub mod mesh;
pub mod operator;
pub mod renewal;
pub mod returns;
pub mod rng;
pub mod step;
pub mod sum;

pub use error::{Error, Result};
pub use harness::{
    criterion_ratio, make_schedule, pullback, run_experiment, CriterionReport, ExperimentConfig,
    HitReport, IntervalSchedule, ScheduleSpec,
};

pub use interval::Interval;
pub use map::{MapParams, ReturnTime};
pub use measure::{build_ulam, stationary_density, InvariantDensity};
pub use mesh::{GradedMesh, Mesh};
pub use operator::{OperatorKind, OperatorMatrix};

pub use renewal::{Correlator, RenewalDiagnostics, ReturnOperators};
pub use returns::FirstReturnStructure;
pub use step::StepFunction;
