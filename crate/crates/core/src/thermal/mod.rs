//! Tread surface temperature dynamics.
//!
//! A lumped heat balance over the contact patch: frictional sliding pumps
//! power in, convection to ambient air takes it out,
//!
//! ```text
//! dT/dt = (P - h (T - T_ambient)) / W
//! ```
//!
//! with `W` the heat capacity in J/K and `h` the dissipation coefficient in
//! W/K. The sliding power `P` comes from slip velocities and contact
//! forces. [`rnn`] adds a learned predictor for the same quantity driven by
//! sensor channels instead of the physical parameters.

pub mod rnn;

pub use rnn::{
    gradient_check, prediction_rms, read_training_csv, rnn_train, series_from_samples,
    write_training_csv, RecurrentNetModel, TrainOptions, TrainingSeries,
};

use crate::error::{Error, Result};
use crate::GRAVITY;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Lumped thermal constants of one tire.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalParameters {
    /// Heat capacity of the tread band, J/K.
    pub heat_capacity_j_per_k: f64,
    /// Convective dissipation to ambient, W/K.
    pub dissipation_w_per_k: f64,
}

impl Default for ThermalParameters {
    fn default() -> Self {
        Self {
            heat_capacity_j_per_k: 6000.0,
            dissipation_w_per_k: 200.0,
        }
    }
}

impl ThermalParameters {
    pub fn validate(&self) -> Result<()> {
        for (value, what) in [
            (self.heat_capacity_j_per_k, "heat capacity"),
            (self.dissipation_w_per_k, "dissipation coefficient"),
        ] {
            if !value.is_finite() || value <= 0.0 {
                return Err(Error::InvalidCoefficients(format!(
                    "{what} {value} must be positive"
                )));
            }
        }
        Ok(())
    }

    /// Largest explicit Euler step that cannot overshoot the equilibrium, s.
    #[must_use]
    pub fn max_stable_dt(&self) -> f64 {
        self.heat_capacity_j_per_k / self.dissipation_w_per_k
    }
}

/// Sliding velocity components in the contact patch, m/s.
///
/// Longitudinal sliding is the mismatch between travel speed and wheel
/// circumferential speed; lateral sliding follows from the slip angle.
#[must_use]
pub fn slip_velocities(travel_speed: f64, wheel_speed: f64, slip_angle: f64) -> (f64, f64) {
    (travel_speed - wheel_speed, travel_speed * slip_angle.tan())
}

/// Contact forces estimated from measured accelerations, N.
#[must_use]
pub fn forces_from_acceleration(normal_load: f64, ax: f64, ay: f64) -> (f64, f64) {
    (normal_load * ax / GRAVITY, normal_load * ay / GRAVITY)
}

/// Frictional power dissipated in the patch, W.
#[must_use]
pub fn frictional_power(fx: f64, fy: f64, slip_vx: f64, slip_vy: f64) -> f64 {
    (fx * slip_vx).abs() + (fy * slip_vy).abs()
}

/// One explicit Euler step of the patch heat balance, returning the next
/// surface temperature, C.
pub fn surface_temperature_step(
    params: &ThermalParameters,
    surface_temp_c: f64,
    ambient_c: f64,
    friction_power_w: f64,
    dt: f64,
) -> Result<f64> {
    params.validate()?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::NonFinite("time step"));
    }
    let max_dt = params.max_stable_dt();
    if dt > max_dt {
        return Err(Error::UnstableTimeStep { dt, max_dt });
    }
    let rate = (friction_power_w
        - params.dissipation_w_per_k * (surface_temp_c - ambient_c))
        / params.heat_capacity_j_per_k;
    Ok(surface_temp_c + dt * rate)
}

/// Temperature the patch settles at under constant power, C.
#[must_use]
pub fn equilibrium_temperature(
    params: &ThermalParameters,
    ambient_c: f64,
    friction_power_w: f64,
) -> f64 {
    ambient_c + friction_power_w / params.dissipation_w_per_k
}

/// An input/target time series for the learned predictor, in physical
/// units. Inputs per step: inner liner temperature (C), ambient temperature
/// (C), friction power (W), travel speed (m/s), previous surface
/// temperature (C).
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalSample {
    pub time_s: f64,
    pub inner_liner_c: f64,
    pub ambient_c: f64,
    pub friction_energy_w: f64,
    pub velocity_mps: f64,
    pub surface_temp_c: f64,
}

/// Simulates a driving session against the heat balance and returns it as
/// a training series. Friction power and speed wander smoothly; the inner
/// liner lags the surface with its own time constant.
#[must_use]
pub fn synthetic_thermal_series(
    params: &ThermalParameters,
    seed: u64,
    duration_s: f64,
    dt: f64,
) -> Vec<ThermalSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x7EA1));
    let ambient = rng.gen_range(15.0..30.0);
    let phase: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.0..std::f64::consts::TAU));
    let power_base = rng.gen_range(2500.0..4500.0);
    let power_swing = rng.gen_range(1200.0..2200.0);
    let speed_base = rng.gen_range(18.0..26.0);

    let steps = (duration_s / dt).round() as usize;
    let substeps = (dt / 0.05).ceil().max(1.0) as usize;
    let dt_inner = dt / substeps as f64;
    let liner_tau = 60.0;

    let mut surface = ambient + rng.gen_range(0.0..3.0);
    let mut liner = ambient;
    let mut out = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        let t = i as f64 * dt;
        let power = (power_base
            + power_swing * (std::f64::consts::TAU * t / 175.0 + phase[0]).sin()
            + 0.6 * power_swing * (std::f64::consts::TAU * t / 63.0 + phase[1]).sin())
        .max(0.0);
        let velocity =
            (speed_base + 8.0 * (std::f64::consts::TAU * t / 210.0 + phase[2]).sin()).max(5.0);
        out.push(ThermalSample {
            time_s: t,
            inner_liner_c: liner,
            ambient_c: ambient,
            friction_energy_w: power,
            velocity_mps: velocity,
            surface_temp_c: surface,
        });
        for _ in 0..substeps {
            surface =
                surface_temperature_step(params, surface, ambient, power, dt_inner).unwrap();
            liner += dt_inner * (surface - liner) / liner_tau;
        }
    }
    out
}
