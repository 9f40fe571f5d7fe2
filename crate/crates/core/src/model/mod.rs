//! Parameters, priors, the state-space model abstraction, the bundled
//! two-city example and the synthetic-data simulator.

pub mod config;
mod def;
pub mod expr;
mod params;
mod simulate;
mod two_city;

use std::path::PathBuf;

pub use def::{
    deterministic_collapse, gaussian_log_density, Dynamics, Frame, JacobianPolicy, LatentPath, ModelDef,
    ObservationNoise, ObservationSeries, ObservationStream, Schedule, StateRole, StreamKind, StreamSchedule,
};
pub use params::{guess, log_prior, names, to_natural, to_transformed, ParamSpec, Theta, Transform};
pub use simulate::{default_dt, simulate, SimulateOptions};
pub(crate) use simulate::EulerStepper;
pub use two_city::{build_two_city_si, two_city_schedule, TwoCityConfig, TwoCitySi, PARAM_NAMES, STREAM_NAMES};

/// Everything needed to simulate from or fit a model.
#[derive(Debug, Clone)]
pub struct Problem {
    pub model: ModelDef,
    pub params: Vec<ParamSpec>,
    /// Reporting schedule used when simulating data.
    pub schedule: Schedule,
    /// Natural-scale parameters to simulate at, when known.
    pub truth: Option<Vec<f64>>,
    /// Data file declared by the context document.
    pub data: Option<PathBuf>,
}
