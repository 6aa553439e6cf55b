//! Online axle cornering stiffness estimation.
//!
//! The linear bicycle equations are bilinear in the unknown stiffnesses,
//! so each sensor sample yields two regression rows for theta = (Cf, Cr):
//!
//! ```text
//! m  ay   = Cf alpha_f + Cr alpha_r
//! Iz rdot = lf Cf alpha_f - lr Cr alpha_r
//! ```
//!
//! A recursive least squares filter with exponential forgetting absorbs
//! the rows. The slip angles need the lateral velocity, which no
//! production car measures; it is reconstructed by integrating
//! `ay - r u`. The yaw acceleration comes from a dirty derivative of the
//! yaw rate, and the same low-pass filter runs over the yaw row
//! regressors so both sides of that balance stay phase-consistent.
//! Updates only run while the steering is actually exciting the
//! dynamics, otherwise the regressors are numerical noise and the
//! forgetting factor would slowly wash out a good estimate for nothing.

use crate::error::{Error, Result};
use crate::vehicle::VehicleParameters;

/// One time step of sensor data, SI units.
#[derive(Debug, Clone, Copy)]
pub struct RlsSample {
    pub speed: f64,
    pub road_wheel_angle: f64,
    pub lateral_acc: f64,
    pub yaw_rate: f64,
    pub dt: f64,
}

/// Current stiffness belief.
#[derive(Debug, Clone, Copy)]
pub struct StiffnessEstimate {
    /// Front axle cornering stiffness, N/rad.
    pub front_n_per_rad: f64,
    /// Rear axle cornering stiffness, N/rad.
    pub rear_n_per_rad: f64,
    /// Grows from 0.5 toward 1 as the covariance contracts below its
    /// initial value; stays low while the filter has seen no excitation.
    pub confidence: f64,
    /// Regression rows absorbed so far.
    pub samples: usize,
}

/// Seconds between regression updates. Sensor samples can arrive much
/// faster than this; the velocity integration and the filters consume
/// every sample, but rows enter the least squares at this fixed cadence
/// so the forgetting factor corresponds to a known memory horizon.
pub const REGRESSION_INTERVAL_S: f64 = 0.01;

/// Steering must exceed the excitation threshold for this long before
/// rows are absorbed, so isolated zero crossings and jitter do not count
/// as excitation.
pub const EXCITATION_SUSTAIN_S: f64 = 0.05;

/// Recursive least squares over the two bicycle balance equations.
#[derive(Debug, Clone)]
pub struct RlsStiffnessEstimator {
    params: VehicleParameters,
    /// Exponential forgetting factor per absorbed row, slightly below one.
    pub forgetting: f64,
    /// Steering threshold below which updates pause, rad.
    pub excitation_threshold: f64,
    theta: [f64; 2],
    covariance: [[f64; 2]; 2],
    initial_trace: f64,
    lateral_velocity: f64,
    filtered_yaw_rate: f64,
    filtered_front_slip: f64,
    filtered_rear_slip: f64,
    excited_for_s: f64,
    since_absorb_s: f64,
    primed: bool,
    samples: usize,
}

impl RlsStiffnessEstimator {
    pub fn new(params: VehicleParameters, initial_stiffness_n_per_rad: f64) -> Result<Self> {
        params.validate()?;
        if !(initial_stiffness_n_per_rad.is_finite() && initial_stiffness_n_per_rad > 0.0) {
            return Err(Error::InvalidCoefficients(format!(
                "initial stiffness {initial_stiffness_n_per_rad} must be positive"
            )));
        }
        let spread = (0.5 * initial_stiffness_n_per_rad).powi(2);
        Ok(Self {
            params,
            forgetting: 0.995,
            excitation_threshold: 0.5_f64.to_radians(),
            theta: [initial_stiffness_n_per_rad; 2],
            covariance: [[spread, 0.0], [0.0, spread]],
            initial_trace: 2.0 * spread,
            lateral_velocity: 0.0,
            filtered_yaw_rate: 0.0,
            filtered_front_slip: 0.0,
            filtered_rear_slip: 0.0,
            excited_for_s: 0.0,
            since_absorb_s: REGRESSION_INTERVAL_S,
            primed: false,
            samples: 0,
        })
    }

    fn absorb(&mut self, regressor: [f64; 2], target: f64) {
        let p = &self.covariance;
        let pf = [
            p[0][0] * regressor[0] + p[0][1] * regressor[1],
            p[1][0] * regressor[0] + p[1][1] * regressor[1],
        ];
        let denom = self.forgetting + regressor[0] * pf[0] + regressor[1] * pf[1];
        let gain = [pf[0] / denom, pf[1] / denom];
        let innovation = target - regressor[0] * self.theta[0] - regressor[1] * self.theta[1];
        self.theta[0] += gain[0] * innovation;
        self.theta[1] += gain[1] * innovation;
        let mut next = [[0.0; 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                next[r][c] = (p[r][c] - gain[r] * pf[c]) / self.forgetting;
            }
        }
        self.covariance = next;
        self.samples += 1;
    }

    /// Feeds one sensor sample. Lateral velocity integration and yaw rate
    /// filtering always run; the regression only updates under excitation.
    pub fn update(&mut self, sample: &RlsSample) -> Result<()> {
        let RlsSample {
            speed,
            road_wheel_angle,
            lateral_acc,
            yaw_rate,
            dt,
        } = *sample;
        if ![speed, road_wheel_angle, lateral_acc, yaw_rate, dt]
            .iter()
            .all(|v| v.is_finite())
            || dt <= 0.0
        {
            return Err(Error::NonFinite("estimator sample"));
        }

        if !self.primed {
            self.filtered_yaw_rate = yaw_rate;
            self.primed = true;
        }
        let lf = self.params.front_axle_to_cg_m;
        let lr = self.params.rear_axle_to_cg_m;
        let tau = 0.03;
        let gain = dt / (tau + dt);
        let yaw_acc = (yaw_rate - self.filtered_yaw_rate) / (tau + dt);

        self.since_absorb_s += dt;
        if speed >= 1.0 {
            let alpha_f = road_wheel_angle - (self.lateral_velocity + lf * yaw_rate) / speed;
            let alpha_r = -(self.lateral_velocity - lr * yaw_rate) / speed;
            if road_wheel_angle.abs() >= self.excitation_threshold {
                self.excited_for_s += dt;
            } else {
                self.excited_for_s = 0.0;
            }
            if self.excited_for_s >= EXCITATION_SUSTAIN_S
                && self.since_absorb_s >= REGRESSION_INTERVAL_S
            {
                self.since_absorb_s = 0.0;
                self.absorb([alpha_f, alpha_r], self.params.mass_kg * lateral_acc);
                self.absorb(
                    [lf * self.filtered_front_slip, -lr * self.filtered_rear_slip],
                    self.params.yaw_inertia_kgm2 * yaw_acc,
                );
            }
            self.filtered_front_slip += gain * (alpha_f - self.filtered_front_slip);
            self.filtered_rear_slip += gain * (alpha_r - self.filtered_rear_slip);
        } else {
            self.excited_for_s = 0.0;
        }
        self.filtered_yaw_rate += gain * (yaw_rate - self.filtered_yaw_rate);
        self.lateral_velocity += dt * (lateral_acc - yaw_rate * speed);
        Ok(())
    }

    #[must_use]
    pub fn estimate(&self) -> StiffnessEstimate {
        let trace = self.covariance[0][0] + self.covariance[1][1];
        StiffnessEstimate {
            front_n_per_rad: self.theta[0],
            rear_n_per_rad: self.theta[1],
            confidence: 1.0 / (1.0 + trace / self.initial_trace),
            samples: self.samples,
        }
    }
}

/// Runs the estimator over a whole log at once.
pub fn estimate_stiffness_from_log(
    params: &VehicleParameters,
    initial_stiffness_n_per_rad: f64,
    samples: &[RlsSample],
) -> Result<StiffnessEstimate> {
    let mut estimator = RlsStiffnessEstimator::new(*params, initial_stiffness_n_per_rad)?;
    for sample in samples {
        estimator.update(sample)?;
    }
    Ok(estimator.estimate())
}
