//! Personal income distribution microsimulation.
//!
//! Incomes below the Pareto threshold follow a dissipative balance law per
//! capability/means class; above it they are redistributed over a truncated
//! power-law tail. Cohort incomes are aggregated over a population pyramid
//! into distributions and work-experience profiles.
//!
//! All numerics are generic over [`Real`] (`f32` or `f64`); the aliases at the
//! crate root fix the scalar to `f64`.

// negated comparisons deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregate;
pub mod calibrate;
pub mod error;
pub mod model;
pub mod paretotail;
pub mod population;
pub mod real;
pub mod rk4;
pub mod sum;
pub mod trajectory;

pub use error::{Error, Result};
pub use model::{TrajectoryClass, NOMINAL_ANCHOR_YEAR};
pub use real::Real;

pub type ModelParams = model::ModelParams<f64>;
pub type EconomySeries = model::EconomySeries<f64>;
pub type ScalingState = model::ScalingState<f64>;
pub type PopulationPyramid = population::PopulationPyramid<f64>;
pub type Trajectory = trajectory::Trajectory<f64>;
pub type IncomeHistogram = aggregate::IncomeHistogram<f64>;
pub type WorkExperienceProfile = aggregate::WorkExperienceProfile<f64>;
pub type PidOptions = aggregate::PidOptions<f64>;
pub type TailConfig = paretotail::TailConfig<f64>;
pub type ExponentFit = paretotail::ExponentFit<f64>;
pub type CalibrationResult = calibrate::CalibrationResult<f64>;

pub type ModelParams32 = model::ModelParams<f32>;
pub type EconomySeries32 = model::EconomySeries<f32>;
pub type PopulationPyramid32 = population::PopulationPyramid<f32>;
pub type IncomeHistogram32 = aggregate::IncomeHistogram<f32>;
