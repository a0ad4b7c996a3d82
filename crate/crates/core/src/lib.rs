//! Variably saturated flow with root water uptake, discretized by local
//! Gaussian RBF stencils and advanced by BDF1/BDF2 with a modified Picard
//! iteration.
//!
//! Everything numeric is generic over [`scalar::Real`], implemented for `f64`
//! and `f32`. Internal units are metres and hours; scenario files may use
//! other units per section.

// `!(a > b)` is how parameter checks reject NaN along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cloud;
pub mod constitutive;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod operators;
pub mod root_uptake;
pub mod scalar;
pub mod scenario;
pub mod stepper;

pub use cloud::{build_stencils, build_tensor_grid, Face, NodeCloud, StencilIndex};
pub use constitutive::{Gardner, SoilModel, VanGenuchten};
pub use diagnostics::MassTracker;
pub use error::{CloudError, DiagnosticsError, OperatorError, ParamError, SolveError, StepError};
pub use operators::{RbfKernel, StencilSystem};
pub use root_uptake::{FeddesParams, RootDistribution, SimplifiedSink};
pub use scalar::Real;
pub use scenario::{
    build_scenario, convergence_study, load_config, load_preset, parse_config, run_scenario, simulate, ConfigError,
    RunError, RunResult, ScenarioConfig, StudyReport, StudyRow,
};
pub use stepper::{PicardControls, Problem, Scheme, SimulationState};

pub type Problem64 = Problem<f64>;
pub type Problem32 = Problem<f32>;
pub type State64 = SimulationState<f64>;
pub type State32 = SimulationState<f32>;
pub type Scenario64 = scenario::Scenario<f64>;
pub type Scenario32 = scenario::Scenario<f32>;
pub type SoilModel64 = SoilModel<f64>;
pub type SoilModel32 = SoilModel<f32>;
pub type NodeCloud64 = NodeCloud<f64>;
pub type NodeCloud32 = NodeCloud<f32>;
