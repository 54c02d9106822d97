//! Diffusion LMS over sensor networks whose sensors (and optionally links)
//! apply a second-order nonlinearity `x + b x²`.
//!
//! The numeric code is generic over [`scalar::Real`]; the aliases below fix
//! it to `f64` (used by the harness) or `f32`.

// Index loops mirror the per-node sums; `!(x > 0)` style checks also reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod analysis;
pub mod crb;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod scalar;
pub mod signal;
pub mod topology;

pub use algorithms::{
    run_dlms, run_sonec_dlms, LinkModel, LinkSetting, Measurements, NodeState, RunOptions,
    RunTrace, SonecVariant, StepSizes,
};
pub use error::{CrbError, DivergenceError, LinalgError, ModelError, RunError};
pub use harness::{parse_config, run_experiment, AlgorithmId, ExperimentConfig};
pub use scalar::Real;
pub use signal::{generate_dataset, SignalConfig};
pub use topology::{build_random_topology, uniform_weights, NetworkTopology};

pub type Dataset = signal::SensorDataset<f64>;
pub type Dataset32 = signal::SensorDataset<f32>;
pub type Weights = topology::CombinationMatrices<f64>;
pub type Weights32 = topology::CombinationMatrices<f32>;
pub type Trace = algorithms::RunTrace<f64>;
pub type Trace32 = algorithms::RunTrace<f32>;
pub type State = algorithms::NodeState<f64>;
pub type State32 = algorithms::NodeState<f32>;
pub type Mat = linalg::Matrix<f64>;
pub type Mat32 = linalg::Matrix<f32>;
pub type Observation = crb::ObservationModel<f64>;
pub type Observation32 = crb::ObservationModel<f32>;
pub type Fim = crb::FimBlocks<f64>;
pub type Fim32 = crb::FimBlocks<f32>;
pub type Crb = crb::CrbResult<f64>;
pub type Crb32 = crb::CrbResult<f32>;
pub type MeanPrediction = analysis::MeanTrajectory<f64>;
pub type MeanPrediction32 = analysis::MeanTrajectory<f32>;
