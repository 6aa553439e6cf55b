//! Sliding mode yaw stability control with single wheel brake actuation.
//!
//! The controller is hierarchical. The upper level treats the yaw rate
//! error `s = gamma - gamma_des` as a sliding surface and computes the
//! corrective yaw moment that makes `sdot = -eta s` under the planar yaw
//! balance `Iz gammadot = lf Fyf cos(delta) - lr Fyr + Mz`. The lower
//! level maps that moment onto a brake torque at the single wheel whose
//! longitudinal force produces a moment of the required sign, then caps
//! the torque so the tire stays inside its friction circle and below a
//! longitudinal slip target.
//!
//! The axle forces entering the moment law are not measured directly;
//! they are recovered from lateral and yaw acceleration. The yaw
//! acceleration comes from a dirty derivative of the measured yaw rate,
//! and the controller's own previously commanded moment is removed from
//! that estimate through an identically tuned filter, so the recovered
//! forces describe the uncontrolled vehicle rather than the closed loop.

use std::path::Path;

use crate::error::{Error, Result};
use crate::textio::{format_f64, CsvTable, KvFile, KvSection};
use crate::vehicle::plant::WHEEL_NAMES;
use crate::vehicle::{axle_forces_from_measurements, BicycleReference, VehicleParameters};

/// Stability controller tuning. All defaults are design choices exposed
/// here rather than constants baked into the loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EscConfig {
    /// Reaching gain eta: the commanded decay rate of the sliding
    /// surface, 1/s.
    pub sliding_gain_per_s: f64,
    /// Yaw rate error magnitude below which the controller stays
    /// passive, rad/s.
    pub dead_band_rad_per_s: f64,
    /// Brake torque saturation per wheel, N m.
    pub max_brake_torque_nm: f64,
    /// Longitudinal slip magnitude the brake limiter steers away from.
    pub slip_target: f64,
    /// When true the harness refreshes the reference stiffnesses and
    /// friction from the condition-adapted tire model each step; when
    /// false the reference stays at its construction values.
    pub adaptive_reference: bool,
    /// Time constant of the filtered differentiation producing the
    /// desired yaw acceleration feedforward, s.
    pub reference_rate_filter_tau_s: f64,
    /// Time constant of the filtered differentiation producing measured
    /// yaw acceleration, s.
    pub yaw_accel_filter_tau_s: f64,
}

impl Default for EscConfig {
    fn default() -> Self {
        Self {
            sliding_gain_per_s: 5.0,
            dead_band_rad_per_s: 0.03,
            max_brake_torque_nm: 1500.0,
            slip_target: 0.12,
            adaptive_reference: true,
            reference_rate_filter_tau_s: 0.02,
            yaw_accel_filter_tau_s: 0.02,
        }
    }
}

impl EscConfig {
    pub fn validate(&self) -> Result<()> {
        let positives = [
            ("sliding_gain_per_s", self.sliding_gain_per_s),
            ("max_brake_torque_nm", self.max_brake_torque_nm),
            ("slip_target", self.slip_target),
            ("reference_rate_filter_tau_s", self.reference_rate_filter_tau_s),
            ("yaw_accel_filter_tau_s", self.yaw_accel_filter_tau_s),
        ];
        for (name, value) in positives {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidCoefficients(format!(
                    "{name} = {value} must be positive"
                )));
            }
        }
        if !(self.dead_band_rad_per_s.is_finite() && self.dead_band_rad_per_s >= 0.0) {
            return Err(Error::InvalidCoefficients(format!(
                "dead_band_rad_per_s = {} must be nonnegative",
                self.dead_band_rad_per_s
            )));
        }
        if self.slip_target > 1.0 {
            return Err(Error::InvalidCoefficients(format!(
                "slip_target = {} must not exceed 1",
                self.slip_target
            )));
        }
        Ok(())
    }

    #[must_use]
    pub fn to_kv_section(&self) -> KvSection {
        let mut section = KvSection::new("esc");
        section.set_f64("sliding_gain_per_s", self.sliding_gain_per_s);
        section.set_f64("dead_band_rad_per_s", self.dead_band_rad_per_s);
        section.set_f64("max_brake_torque_nm", self.max_brake_torque_nm);
        section.set_f64("slip_target", self.slip_target);
        section.set(
            "adaptive_reference",
            if self.adaptive_reference { "true" } else { "false" },
        );
        section.set_f64(
            "reference_rate_filter_tau_s",
            self.reference_rate_filter_tau_s,
        );
        section.set_f64("yaw_accel_filter_tau_s", self.yaw_accel_filter_tau_s);
        section
    }

    pub fn from_kv_section(section: &KvSection) -> Result<Self> {
        let defaults = Self::default();
        let adaptive_reference = match section.get("adaptive_reference") {
            None => defaults.adaptive_reference,
            Some("true") => true,
            Some("false") => false,
            Some(other) => {
                return Err(Error::InvalidCoefficients(format!(
                    "adaptive_reference = {other} must be true or false"
                )))
            }
        };
        let config = Self {
            sliding_gain_per_s: section
                .f64_or("sliding_gain_per_s", defaults.sliding_gain_per_s)?,
            dead_band_rad_per_s: section
                .f64_or("dead_band_rad_per_s", defaults.dead_band_rad_per_s)?,
            max_brake_torque_nm: section
                .f64_or("max_brake_torque_nm", defaults.max_brake_torque_nm)?,
            slip_target: section.f64_or("slip_target", defaults.slip_target)?,
            adaptive_reference,
            reference_rate_filter_tau_s: section.f64_or(
                "reference_rate_filter_tau_s",
                defaults.reference_rate_filter_tau_s,
            )?,
            yaw_accel_filter_tau_s: section
                .f64_or("yaw_accel_filter_tau_s", defaults.yaw_accel_filter_tau_s)?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = KvFile::new();
        file.push(self.to_kv_section());
        file.write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = KvFile::read(path)?;
        Self::from_kv_section(file.require_section("esc")?)
    }
}

/// The one wheel the controller brakes, in plant wheel order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BrakedWheel {
    FrontLeft,
    FrontRight,
    RearLeft,
    RearRight,
}

impl BrakedWheel {
    /// Index into the plant's wheel arrays.
    #[must_use]
    pub fn index(self) -> usize {
        match self {
            Self::FrontLeft => 0,
            Self::FrontRight => 1,
            Self::RearLeft => 2,
            Self::RearRight => 3,
        }
    }

    #[must_use]
    pub fn name(self) -> &'static str {
        WHEEL_NAMES[self.index()]
    }

    #[must_use]
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "front_left" => Some(Self::FrontLeft),
            "front_right" => Some(Self::FrontRight),
            "rear_left" => Some(Self::RearLeft),
            "rear_right" => Some(Self::RearRight),
            _ => None,
        }
    }

    /// Sign of the wheel's lateral position: -1 for the left side, +1
    /// for the right side. Braking a wheel yields a yaw moment of this
    /// sign.
    #[must_use]
    pub fn side_sign(self) -> f64 {
        match self {
            Self::FrontLeft | Self::RearLeft => -1.0,
            Self::FrontRight | Self::RearRight => 1.0,
        }
    }
}

/// One controller invocation's verdict.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EscDecision {
    /// Reference yaw rate the sliding surface was built against, rad/s.
    pub desired_yaw_rate_rad_s: f64,
    /// Sliding surface value gamma - gamma_des, rad/s.
    pub sliding_rad_s: f64,
    /// Corrective yaw moment requested by the upper level, N m. Zero
    /// inside the dead band.
    pub yaw_moment_nm: f64,
    /// Wheel receiving brake torque, if any.
    pub braked_wheel: Option<BrakedWheel>,
    /// Brake torque after saturation and slip limiting, N m,
    /// nonnegative. Zero exactly when no wheel is braked.
    pub brake_torque_nm: f64,
    /// True when brake torque is actually applied this step.
    pub intervention: bool,
}

/// Sensor snapshot consumed by one controller step.
#[derive(Debug, Clone, Copy)]
pub struct EscMeasurements {
    pub dt_s: f64,
    /// Forward speed, m/s.
    pub speed_mps: f64,
    /// Measured yaw rate, rad/s.
    pub yaw_rate_rad_s: f64,
    /// Measured lateral acceleration, m/s^2.
    pub lateral_acc_mps2: f64,
    /// Road wheel steer angle, rad.
    pub road_wheel_angle_rad: f64,
    /// Wheel spin rates in plant order, rad/s.
    pub wheel_speeds_rad_s: [f64; 4],
    /// Per wheel combined force capacity mu_max Fz, N.
    pub friction_budgets_n: [f64; 4],
    /// Per wheel current lateral force magnitude, N.
    pub lateral_forces_n: [f64; 4],
}

/// The sliding surface: yaw rate tracking error, rad/s.
#[must_use]
pub fn sliding_surface(yaw_rate: f64, desired_yaw_rate: f64) -> f64 {
    yaw_rate - desired_yaw_rate
}

/// Yaw moment that drives the sliding surface to zero at the configured
/// reaching gain: the planar yaw balance solved for the moment making
/// `sdot = -eta s`.
#[must_use]
pub fn desired_yaw_moment(
    params: &VehicleParameters,
    front_lateral_force_n: f64,
    rear_lateral_force_n: f64,
    sliding: f64,
    desired_yaw_acc: f64,
    road_wheel_angle: f64,
    config: &EscConfig,
) -> f64 {
    params.yaw_inertia_kgm2 * (desired_yaw_acc - config.sliding_gain_per_s * sliding)
        - params.front_axle_to_cg_m * front_lateral_force_n * road_wheel_angle.cos()
        + params.rear_axle_to_cg_m * rear_lateral_force_n
}

/// Brake rule table keyed on the signs of the reference yaw rate, the
/// sliding surface, and the commanded moment. Understeer brakes the
/// inner rear wheel, oversteer the outer front wheel; any zero sign or
/// a moment demand of the same sign as the error maps to no wheel.
#[must_use]
pub fn select_braked_wheel(
    desired_yaw_rate: f64,
    sliding: f64,
    yaw_moment: f64,
) -> Option<BrakedWheel> {
    if desired_yaw_rate == 0.0 || sliding == 0.0 || yaw_moment == 0.0 {
        return None;
    }
    match (desired_yaw_rate > 0.0, sliding > 0.0, yaw_moment > 0.0) {
        (true, true, false) => Some(BrakedWheel::FrontLeft),
        (true, false, true) => Some(BrakedWheel::RearRight),
        (false, true, false) => Some(BrakedWheel::RearLeft),
        (false, false, true) => Some(BrakedWheel::FrontRight),
        _ => None,
    }
}

/// Brake torque magnitude realizing the moment through one wheel's
/// longitudinal force at half the track width, saturated at the
/// configured maximum. N m, nonnegative.
#[must_use]
pub fn brake_torque(yaw_moment: f64, params: &VehicleParameters, config: &EscConfig) -> f64 {
    let lever = 0.5 * params.track_width_m;
    (yaw_moment.abs() * params.wheel_radius_m / lever).min(config.max_brake_torque_nm)
}

/// Cuts a requested brake torque down to what the tire can transmit:
/// first to the longitudinal share of the friction circle left over by
/// the current lateral force, then proportionally to zero as the
/// longitudinal slip runs from the target to twice the target.
#[must_use]
pub fn limit_slip(
    requested_torque_nm: f64,
    travel_speed_mps: f64,
    wheel_speed_rad_s: f64,
    friction_budget_n: f64,
    lateral_force_n: f64,
    params: &VehicleParameters,
    config: &EscConfig,
) -> f64 {
    let longitudinal_sq = friction_budget_n * friction_budget_n
        - lateral_force_n * lateral_force_n;
    if longitudinal_sq <= 0.0 {
        return 0.0;
    }
    let torque = requested_torque_nm
        .min(longitudinal_sq.sqrt() * params.wheel_radius_m)
        .max(0.0);
    let denom = travel_speed_mps.max(0.1);
    let slip = ((travel_speed_mps - wheel_speed_rad_s * params.wheel_radius_m) / denom).max(0.0);
    if slip <= config.slip_target {
        torque
    } else {
        torque * (1.0 - (slip - config.slip_target) / config.slip_target).max(0.0)
    }
}

/// Hierarchical yaw controller with its filter state. One instance per
/// simulated vehicle.
#[derive(Debug, Clone)]
pub struct EscController {
    config: EscConfig,
    reference: BicycleReference,
    filtered_yaw_rate: f64,
    filtered_desired_yaw_rate: f64,
    filtered_applied_moment_nm: f64,
    primed: bool,
}

impl EscController {
    pub fn new(config: EscConfig, reference: BicycleReference) -> Result<Self> {
        config.validate()?;
        reference.params.validate()?;
        for (name, value) in [
            ("front_stiffness", reference.front_stiffness),
            ("rear_stiffness", reference.rear_stiffness),
            ("friction", reference.friction),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidCoefficients(format!(
                    "reference {name} = {value} must be positive"
                )));
            }
        }
        Ok(Self {
            config,
            reference,
            filtered_yaw_rate: 0.0,
            filtered_desired_yaw_rate: 0.0,
            filtered_applied_moment_nm: 0.0,
            primed: false,
        })
    }

    #[must_use]
    pub fn config(&self) -> &EscConfig {
        &self.config
    }

    #[must_use]
    pub fn reference(&self) -> &BicycleReference {
        &self.reference
    }

    /// Swaps in fresh reference model scalars, as the adaptive harness
    /// does when tire conditions drift.
    pub fn set_reference(
        &mut self,
        front_stiffness: f64,
        rear_stiffness: f64,
        friction: f64,
    ) -> Result<()> {
        for (name, value) in [
            ("front_stiffness", front_stiffness),
            ("rear_stiffness", rear_stiffness),
            ("friction", friction),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidCoefficients(format!(
                    "reference {name} = {value} must be positive"
                )));
            }
        }
        self.reference.front_stiffness = front_stiffness;
        self.reference.rear_stiffness = rear_stiffness;
        self.reference.friction = friction;
        Ok(())
    }

    /// Clears all filter state, as before a new maneuver.
    pub fn reset(&mut self) {
        self.filtered_yaw_rate = 0.0;
        self.filtered_desired_yaw_rate = 0.0;
        self.filtered_applied_moment_nm = 0.0;
        self.primed = false;
    }

    /// One control step: reference yaw rate, dead band check, sliding
    /// moment law, wheel selection, torque allocation, slip limiting.
    pub fn esc_step(&mut self, measurements: &EscMeasurements) -> Result<EscDecision> {
        let EscMeasurements {
            dt_s,
            speed_mps,
            yaw_rate_rad_s,
            lateral_acc_mps2,
            road_wheel_angle_rad,
            wheel_speeds_rad_s,
            friction_budgets_n,
            lateral_forces_n,
        } = *measurements;
        let finite = [
            dt_s,
            speed_mps,
            yaw_rate_rad_s,
            lateral_acc_mps2,
            road_wheel_angle_rad,
        ]
        .iter()
        .all(|v| v.is_finite())
            && wheel_speeds_rad_s.iter().all(|v| v.is_finite())
            && friction_budgets_n.iter().all(|v| v.is_finite())
            && lateral_forces_n.iter().all(|v| v.is_finite());
        if !finite || dt_s <= 0.0 {
            return Err(Error::NonFinite("stability controller measurements"));
        }

        let desired_yaw_rate = self
            .reference
            .desired_yaw_rate(speed_mps, road_wheel_angle_rad);
        if !self.primed {
            self.filtered_yaw_rate = yaw_rate_rad_s;
            self.filtered_desired_yaw_rate = desired_yaw_rate;
            self.primed = true;
        }
        let tau_ref = self.config.reference_rate_filter_tau_s;
        let desired_yaw_acc = (desired_yaw_rate - self.filtered_desired_yaw_rate) / (tau_ref + dt_s);
        self.filtered_desired_yaw_rate +=
            dt_s / (tau_ref + dt_s) * (desired_yaw_rate - self.filtered_desired_yaw_rate);

        let tau_acc = self.config.yaw_accel_filter_tau_s;
        let gain_acc = dt_s / (tau_acc + dt_s);
        let yaw_acc = (yaw_rate_rad_s - self.filtered_yaw_rate) / (tau_acc + dt_s);
        self.filtered_yaw_rate += gain_acc * (yaw_rate_rad_s - self.filtered_yaw_rate);
        let free_yaw_acc =
            yaw_acc - self.filtered_applied_moment_nm / self.reference.params.yaw_inertia_kgm2;

        let sliding = sliding_surface(yaw_rate_rad_s, desired_yaw_rate);
        let mut decision = EscDecision {
            desired_yaw_rate_rad_s: desired_yaw_rate,
            sliding_rad_s: sliding,
            yaw_moment_nm: 0.0,
            braked_wheel: None,
            brake_torque_nm: 0.0,
            intervention: false,
        };
        let mut applied_moment = 0.0;
        if sliding.abs() > self.config.dead_band_rad_per_s {
            let (front_force, rear_force) = axle_forces_from_measurements(
                &self.reference.params,
                road_wheel_angle_rad,
                lateral_acc_mps2,
                free_yaw_acc,
            )?;
            let moment = desired_yaw_moment(
                &self.reference.params,
                front_force,
                rear_force,
                sliding,
                desired_yaw_acc,
                road_wheel_angle_rad,
                &self.config,
            );
            decision.yaw_moment_nm = moment;
            if let Some(wheel) = select_braked_wheel(desired_yaw_rate, sliding, moment) {
                let i = wheel.index();
                let requested = brake_torque(moment, &self.reference.params, &self.config);
                let torque = limit_slip(
                    requested,
                    speed_mps,
                    wheel_speeds_rad_s[i],
                    friction_budgets_n[i],
                    lateral_forces_n[i],
                    &self.reference.params,
                    &self.config,
                );
                if torque > 0.0 {
                    decision.braked_wheel = Some(wheel);
                    decision.brake_torque_nm = torque;
                    decision.intervention = true;
                    applied_moment = wheel.side_sign() * 0.5 * self.reference.params.track_width_m
                        * torque
                        / self.reference.params.wheel_radius_m;
                }
            }
        }
        self.filtered_applied_moment_nm +=
            gain_acc * (applied_moment - self.filtered_applied_moment_nm);
        Ok(decision)
    }
}

pub const DECISION_CSV_HEADER: [&str; 8] = [
    "time_s",
    "gamma",
    "gamma_des",
    "s",
    "mz",
    "wheel",
    "tb",
    "intervention",
];

/// One decision log line: the measured yaw rate plus the controller
/// verdict at that instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionRecord {
    pub time_s: f64,
    pub yaw_rate_rad_s: f64,
    pub desired_yaw_rate_rad_s: f64,
    pub sliding_rad_s: f64,
    pub yaw_moment_nm: f64,
    pub braked_wheel: Option<BrakedWheel>,
    pub brake_torque_nm: f64,
    pub intervention: bool,
}

impl DecisionRecord {
    #[must_use]
    pub fn new(time_s: f64, yaw_rate_rad_s: f64, decision: &EscDecision) -> Self {
        Self {
            time_s,
            yaw_rate_rad_s,
            desired_yaw_rate_rad_s: decision.desired_yaw_rate_rad_s,
            sliding_rad_s: decision.sliding_rad_s,
            yaw_moment_nm: decision.yaw_moment_nm,
            braked_wheel: decision.braked_wheel,
            brake_torque_nm: decision.brake_torque_nm,
            intervention: decision.intervention,
        }
    }
}

pub fn write_decision_log(path: &Path, records: &[DecisionRecord]) -> Result<()> {
    let mut table = CsvTable::new(&DECISION_CSV_HEADER);
    for record in records {
        table.push_row(vec![
            format_f64(record.time_s),
            format_f64(record.yaw_rate_rad_s),
            format_f64(record.desired_yaw_rate_rad_s),
            format_f64(record.sliding_rad_s),
            format_f64(record.yaw_moment_nm),
            record
                .braked_wheel
                .map_or("none", BrakedWheel::name)
                .to_string(),
            format_f64(record.brake_torque_nm),
            if record.intervention { "true" } else { "false" }.to_string(),
        ]);
    }
    table.write(path)
}

pub fn read_decision_log(path: &Path) -> Result<Vec<DecisionRecord>> {
    let table = CsvTable::read(path)?;
    table.expect_header(&DECISION_CSV_HEADER)?;
    let mut records = Vec::with_capacity(table.rows.len());
    for (row, cells) in table.rows.iter().enumerate() {
        let wheel = match cells[5].as_str() {
            "none" => None,
            name => Some(BrakedWheel::from_name(name).ok_or_else(|| Error::Parse {
                line: row + 2,
                message: "unknown wheel name".to_string(),
            })?),
        };
        let intervention = match cells[7].as_str() {
            "true" => true,
            "false" => false,
            _ => {
                return Err(Error::Parse {
                    line: row + 2,
                    message: "intervention must be true or false".to_string(),
                })
            }
        };
        records.push(DecisionRecord {
            time_s: table.f64_cell(row, 0)?,
            yaw_rate_rad_s: table.f64_cell(row, 1)?,
            desired_yaw_rate_rad_s: table.f64_cell(row, 2)?,
            sliding_rad_s: table.f64_cell(row, 3)?,
            yaw_moment_nm: table.f64_cell(row, 4)?,
            braked_wheel: wheel,
            brake_torque_nm: table.f64_cell(row, 6)?,
            intervention,
        });
    }
    Ok(records)
}
