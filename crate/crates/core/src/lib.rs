//! Hierarchical least-squares parameter identification.
//!
//! Linearly entering parameters are eliminated exactly at every nonlinear trial point, the
//! remaining low-dimensional problem is scanned on a coordinate grid or iterated with a
//! secant method, and reliability is judged from the noise-free follower merit function.
//! The numerical core is generic over [`Scalar`] (`f32`/`f64`); the aliases below fix `f64`.

pub mod consolidation;
pub mod error;
pub mod grid;
pub mod merit;
pub mod linalg;
pub mod model;
pub mod models;
pub mod scalar;
pub mod secant;

pub use consolidation::{
    build_model, fourier_coefficients, mean_pore_pressure, pore_pressure, relaxation_term, time_factor,
    total_stress, ConsolidationParams, FixedValues, FourierSeries, InitialCondition, Load, ModelVersion,
    OedometerGeometry, Relaxation, TestType,
};
pub use error::{Error, Result};
pub use grid::{
    clever_section, global_min, is_unimodal, local_minima, project_scan, resolve_degenerate, scan, scan_follower,
    CleverSection, GridAxis, GridScan, GridSpec, SectionSource, Spacing,
};
pub use linalg::{gram, is_positive_definite, lstsq_min_norm, DenseMatrix, LinalgError, LsqSolution};
pub use model::{
    basis_consistency_gap, design_matrix, eliminate_linear, eliminate_with_fixed, merit, residual,
    response, Bounds, DataSeries, Elimination, ModelDefinition, ParameterSpace, ParameterSplit,
    ParameterVector, ResidualVector, SamplingSchedule, TimeUnit,
};
pub use merit::{error_domain_1d, ErrorInterval, FollowerModel};
pub use scalar::Scalar;
pub use secant::{
    iterate, iterate_with_elimination, modified_step, wolfe_step, Acceptance, BoundsPolicy, SecantFit,
    SecantSimplex, SecantVariant, SolverOptions, StopReason,
};

pub type Matrix = DenseMatrix<f64>;
pub type Solution = LsqSolution<f64>;
pub type Model = ModelDefinition<f64>;
pub type Data = DataSeries<f64>;
pub type Schedule = SamplingSchedule<f64>;
pub type Params = ParameterVector<f64>;
pub type Space = ParameterSpace<f64>;
