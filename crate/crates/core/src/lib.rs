//! Condition-adaptive tire force modeling and vehicle yaw stability control.
//!
//! The crate is organized around a Pacejka-style lateral force model whose
//! cornering stiffness and peak grip respond to inflation pressure, tread
//! depth, and surface temperature:
//!
//! * [`mf`] - baseline Magic Formula lateral force curve and its load
//!   dependence.
//! * [`adapt`] - polynomial scaling of the baseline coefficients by tire
//!   condition, plus the coefficient tree text format.
//! * [`fit`] - damped Gauss-Newton solver, the staged fitting pipeline that
//!   recovers a coefficient tree from slip sweep data, and a calibrated
//!   synthetic data generator.
//! * [`thermal`] - contact patch temperature dynamics and a small recurrent
//!   network for surface temperature prediction.
//! * [`vehicle`] - planar two-track plant, bicycle reference model, and a
//!   recursive least squares axle stiffness estimator.
//! * [`esc`] - sliding mode yaw controller with single-wheel brake actuation.
//! * [`maneuver`] - open-loop steering profiles, closed-loop maneuver
//!   simulation, and controller comparison harness.
//!
//! All angles are radians and all units SI unless a name says otherwise
//! (`*_deg`, `*_kpa`, `*_mm`, `*_c`). Everything is deterministic: the only
//! randomness is through explicitly seeded generators.

pub mod adapt;
pub mod error;
pub mod esc;
pub mod fit;
pub mod maneuver;
pub mod mf;
pub mod textio;
pub mod thermal;
pub mod vehicle;

pub use adapt::{AdaptedMfCoefficients, TireConditions};
pub use error::{Error, Result};
pub use esc::{BrakedWheel, EscConfig, EscController, EscDecision};
pub use fit::{FitOptions, FitProblem, FitResult, PipelineReport, SweepGenerator, SweepObservation};
pub use maneuver::{ComparisonReport, ManeuverKind, ManeuverResult, ManeuverSpec};
pub use mf::{BaseMfCoefficients, TireForceState};
pub use thermal::{RecurrentNetModel, ThermalParameters};
pub use vehicle::{BicycleReference, PlantState, StiffnessEstimate, VehicleParameters};

/// Standard gravity used throughout the force and load computations, m/s^2.
pub const GRAVITY: f64 = 9.81;
