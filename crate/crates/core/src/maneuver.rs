//! Open loop steering profiles and closed loop maneuver simulation.
//!
//! A maneuver fixes the steering (and for the braking profile, pedal)
//! inputs; the loop couples the two track plant, the tire thermal
//! states, and optionally the stability controller at a 1 ms step. The
//! controller's bicycle reference is built once per run: from the tire
//! model evaluated at the actual fitted conditions when the adaptive
//! reference is enabled, or at the model's own neutral conditions when
//! it is not. Condition drift within one maneuver (a few seconds) is
//! small against the drift between maneuvers, so the reference is not
//! refreshed inside the loop; the two modes differ only in what the
//! controller believes about the tires, never in the plant itself.
//!
//! Spin out is judged the way the open loop test protocol does: the
//! heading must stay within a quarter turn of its value at steering
//! onset, evaluated a fixed settling window after the steering input
//! ends.

use std::path::Path;

use crate::adapt::{AdaptedMfCoefficients, TireConditions};
use crate::error::{Error, Result};
use crate::esc::{DecisionRecord, EscConfig, EscController, EscMeasurements};
use crate::textio::{format_f64, CsvTable, KvFile, KvSection};
use crate::vehicle::plant::{plant_step, wheel_loads, PlantState, TireSetup};
use crate::vehicle::{BicycleReference, VehicleParameters};

/// Fixed integration step for every maneuver, s.
pub const SIMULATION_DT_S: f64 = 1e-3;

/// Straight running before the steering input starts, s.
pub const LEAD_IN_S: f64 = 0.5;

/// Coast time after the steering input ends, after which the heading
/// deviation decides spin out, s.
pub const POST_STEER_WINDOW_S: f64 = 4.0;

/// Heading deviation beyond which the run counts as a spin out, rad.
pub const SPIN_OUT_HEADING_RAD: f64 = std::f64::consts::FRAC_PI_2;

const STEP_STEER_RISE_S: f64 = 0.25;
const STEP_STEER_HOLD_S: f64 = 3.0;
const STRAIGHT_BRAKE_WINDOW_S: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManeuverKind {
    SineWithDwell,
    StepSteer,
    StraightBrake,
}

impl ManeuverKind {
    #[must_use]
    pub fn name(self) -> &'static str {
        match self {
            Self::SineWithDwell => "sine_with_dwell",
            Self::StepSteer => "step_steer",
            Self::StraightBrake => "straight_brake",
        }
    }

    #[must_use]
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "sine_with_dwell" => Some(Self::SineWithDwell),
            "step_steer" => Some(Self::StepSteer),
            "straight_brake" => Some(Self::StraightBrake),
            _ => None,
        }
    }
}

/// Open loop test definition. Angles are hand wheel degrees; the
/// steering ratio maps them to road wheel radians inside the loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManeuverSpec {
    pub kind: ManeuverKind,
    /// Entry speed, m/s.
    pub initial_speed_mps: f64,
    /// Peak hand wheel angle, deg.
    pub hand_wheel_amplitude_deg: f64,
    /// Steering frequency of the sine profile, Hz.
    pub frequency_hz: f64,
    /// Hold time at the reversed peak of the sine profile, s.
    pub dwell_duration_s: f64,
    /// Amplitude sweep used when hunting for the spin out threshold, deg.
    pub ramp_start_deg: f64,
    pub ramp_step_deg: f64,
    pub ramp_stop_deg: f64,
    /// Pedal torque per wheel for the straight braking profile, N m.
    pub brake_torque_nm: f64,
}

impl Default for ManeuverSpec {
    fn default() -> Self {
        Self {
            kind: ManeuverKind::SineWithDwell,
            initial_speed_mps: 80.0 / 3.6,
            hand_wheel_amplitude_deg: 120.0,
            frequency_hz: 0.7,
            dwell_duration_s: 0.5,
            ramp_start_deg: 30.0,
            ramp_step_deg: 30.0,
            ramp_stop_deg: 330.0,
            brake_torque_nm: 1000.0,
        }
    }
}

impl ManeuverSpec {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.initial_speed_mps,
            self.hand_wheel_amplitude_deg,
            self.frequency_hz,
            self.dwell_duration_s,
            self.ramp_start_deg,
            self.ramp_step_deg,
            self.ramp_stop_deg,
            self.brake_torque_nm,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("maneuver spec"));
        }
        if self.initial_speed_mps <= 0.0 {
            return Err(Error::InvalidCoefficients(format!(
                "initial speed {} must be positive",
                self.initial_speed_mps
            )));
        }
        if !(0.0..=330.0).contains(&self.hand_wheel_amplitude_deg) {
            return Err(Error::InvalidCoefficients(format!(
                "hand wheel amplitude {} outside [0, 330] deg",
                self.hand_wheel_amplitude_deg
            )));
        }
        if self.frequency_hz <= 0.0 {
            return Err(Error::InvalidCoefficients(format!(
                "steering frequency {} must be positive",
                self.frequency_hz
            )));
        }
        if self.dwell_duration_s < 0.0 || self.brake_torque_nm < 0.0 {
            return Err(Error::InvalidCoefficients(
                "dwell duration and brake torque must be nonnegative".to_string(),
            ));
        }
        if !(self.ramp_start_deg > 0.0
            && self.ramp_step_deg > 0.0
            && self.ramp_start_deg <= self.ramp_stop_deg
            && self.ramp_stop_deg <= 330.0)
        {
            return Err(Error::InvalidCoefficients(format!(
                "amplitude ramp {} / {} / {} must satisfy 0 < start <= stop <= 330",
                self.ramp_start_deg, self.ramp_step_deg, self.ramp_stop_deg
            )));
        }
        Ok(())
    }

    /// How long the input (steering or pedal) stays active, s.
    #[must_use]
    pub fn input_duration_s(&self) -> f64 {
        match self.kind {
            ManeuverKind::SineWithDwell => 1.0 / self.frequency_hz + self.dwell_duration_s,
            ManeuverKind::StepSteer => STEP_STEER_RISE_S + STEP_STEER_HOLD_S,
            ManeuverKind::StraightBrake => STRAIGHT_BRAKE_WINDOW_S,
        }
    }

    /// Hand wheel angle at input-local time, deg. Zero before the input
    /// starts; the step profile keeps holding its amplitude afterwards.
    #[must_use]
    pub fn hand_wheel_angle_deg(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        let amplitude = self.hand_wheel_amplitude_deg;
        match self.kind {
            ManeuverKind::SineWithDwell => {
                let period = 1.0 / self.frequency_hz;
                let dwell_start = 0.75 * period;
                let omega = 2.0 * std::f64::consts::PI * self.frequency_hz;
                if t < dwell_start {
                    amplitude * (omega * t).sin()
                } else if t < dwell_start + self.dwell_duration_s {
                    -amplitude
                } else if t < period + self.dwell_duration_s {
                    amplitude * (omega * (t - self.dwell_duration_s)).sin()
                } else {
                    0.0
                }
            }
            ManeuverKind::StepSteer => {
                if t < STEP_STEER_RISE_S {
                    amplitude * t / STEP_STEER_RISE_S
                } else {
                    amplitude
                }
            }
            ManeuverKind::StraightBrake => 0.0,
        }
    }

    /// Driver brake torque per wheel at input-local time, N m.
    #[must_use]
    pub fn driver_brake_torque_nm(&self, t: f64) -> f64 {
        match self.kind {
            ManeuverKind::StraightBrake if (0.0..STRAIGHT_BRAKE_WINDOW_S).contains(&t) => {
                self.brake_torque_nm
            }
            _ => 0.0,
        }
    }

    #[must_use]
    pub fn to_kv_section(&self) -> KvSection {
        let mut section = KvSection::new("maneuver");
        section.set("kind", self.kind.name());
        section.set_f64("initial_speed_mps", self.initial_speed_mps);
        section.set_f64("hand_wheel_amplitude_deg", self.hand_wheel_amplitude_deg);
        section.set_f64("frequency_hz", self.frequency_hz);
        section.set_f64("dwell_duration_s", self.dwell_duration_s);
        section.set_f64("ramp_start_deg", self.ramp_start_deg);
        section.set_f64("ramp_step_deg", self.ramp_step_deg);
        section.set_f64("ramp_stop_deg", self.ramp_stop_deg);
        section.set_f64("brake_torque_nm", self.brake_torque_nm);
        section
    }

    pub fn from_kv_section(section: &KvSection) -> Result<Self> {
        let defaults = Self::default();
        let kind = match section.get("kind") {
            None => defaults.kind,
            Some(name) => ManeuverKind::from_name(name).ok_or_else(|| {
                Error::InvalidCoefficients(format!("unknown maneuver kind {name}"))
            })?,
        };
        let spec = Self {
            kind,
            initial_speed_mps: section
                .f64_or("initial_speed_mps", defaults.initial_speed_mps)?,
            hand_wheel_amplitude_deg: section.f64_or(
                "hand_wheel_amplitude_deg",
                defaults.hand_wheel_amplitude_deg,
            )?,
            frequency_hz: section.f64_or("frequency_hz", defaults.frequency_hz)?,
            dwell_duration_s: section.f64_or("dwell_duration_s", defaults.dwell_duration_s)?,
            ramp_start_deg: section.f64_or("ramp_start_deg", defaults.ramp_start_deg)?,
            ramp_step_deg: section.f64_or("ramp_step_deg", defaults.ramp_step_deg)?,
            ramp_stop_deg: section.f64_or("ramp_stop_deg", defaults.ramp_stop_deg)?,
            brake_torque_nm: section.f64_or("brake_torque_nm", defaults.brake_torque_nm)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = KvFile::new();
        file.push(self.to_kv_section());
        file.write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = KvFile::read(path)?;
        Self::from_kv_section(file.require_section("maneuver")?)
    }
}

/// One logged simulation step. All values describe the state at
/// `time_s`, with the brake torques those applied over the following
/// step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManeuverSample {
    pub time_s: f64,
    pub hand_wheel_deg: f64,
    pub road_wheel_rad: f64,
    pub yaw_rate_rad_s: f64,
    pub desired_yaw_rate_rad_s: f64,
    pub sideslip_rad: f64,
    pub speed_mps: f64,
    pub brake_torques_nm: [f64; 4],
    pub surface_temps_c: [f64; 4],
    pub intervention: bool,
}

/// Scalar verdicts, all recomputable from the sample series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManeuverSummary {
    pub peak_sideslip_rad: f64,
    pub yaw_rate_tracking_rms: f64,
    pub speed_loss_mps: f64,
    /// Number of steps with active brake intervention.
    pub intervention_count: usize,
    /// Heading change between steering onset and the spin out check
    /// point, rad.
    pub heading_deviation_rad: f64,
    pub spin_out: bool,
}

/// Everything one closed loop run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ManeuverResult {
    pub samples: Vec<ManeuverSample>,
    /// Controller decision log; empty when the controller was disabled.
    pub decisions: Vec<DecisionRecord>,
    pub summary: ManeuverSummary,
    /// When the steering (or pedal) input ended, s.
    pub steer_end_s: f64,
    pub dt_s: f64,
    /// Largest combined force over friction budget ratio seen on any
    /// wheel at any step.
    pub max_friction_utilization: f64,
    /// True when the plant reported a lifting wheel and the run was cut
    /// short; the series holds the part that completed.
    pub wheel_lift_abort: bool,
}

/// Recomputes the summary from a sample series. Heading is rebuilt by
/// integrating the logged yaw rates with the same explicit Euler rule
/// the plant uses, so the result matches the simulation exactly.
#[must_use]
pub fn summarize(samples: &[ManeuverSample], steer_end_s: f64, dt_s: f64) -> ManeuverSummary {
    if samples.is_empty() {
        return ManeuverSummary {
            peak_sideslip_rad: 0.0,
            yaw_rate_tracking_rms: 0.0,
            speed_loss_mps: 0.0,
            intervention_count: 0,
            heading_deviation_rad: 0.0,
            spin_out: false,
        };
    }
    let mut peak_sideslip: f64 = 0.0;
    let mut error_sq = 0.0;
    let mut interventions = 0;
    for sample in samples {
        peak_sideslip = peak_sideslip.max(sample.sideslip_rad.abs());
        let error = sample.yaw_rate_rad_s - sample.desired_yaw_rate_rad_s;
        error_sq += error * error;
        interventions += usize::from(sample.intervention);
    }
    let onset_index = (LEAD_IN_S / dt_s).round() as usize;
    let check_index = ((steer_end_s + POST_STEER_WINDOW_S) / dt_s).round() as usize;
    let last = samples.len() - 1;
    let (onset_index, check_index) = (onset_index.min(last), check_index.min(last));
    let mut heading = 0.0;
    let mut onset_heading = 0.0;
    let mut check_heading = 0.0;
    for (index, sample) in samples.iter().enumerate() {
        if index == onset_index {
            onset_heading = heading;
        }
        if index == check_index {
            check_heading = heading;
        }
        heading += dt_s * sample.yaw_rate_rad_s;
    }
    let heading_deviation = check_heading - onset_heading;
    ManeuverSummary {
        peak_sideslip_rad: peak_sideslip,
        yaw_rate_tracking_rms: (error_sq / samples.len() as f64).sqrt(),
        speed_loss_mps: samples[0].speed_mps - samples[last].speed_mps,
        intervention_count: interventions,
        heading_deviation_rad: heading_deviation,
        spin_out: heading_deviation.abs() > SPIN_OUT_HEADING_RAD,
    }
}

fn axle_conditions(
    setup: &TireSetup,
    tree: &AdaptedMfCoefficients,
    adaptive: bool,
    wheels: [usize; 2],
    load_n: f64,
) -> Result<TireConditions> {
    let (pressure, tread, temp) = if adaptive {
        (
            0.5 * (setup.pressures_kpa[wheels[0]] + setup.pressures_kpa[wheels[1]]),
            0.5 * (setup.tread_depths_mm[wheels[0]] + setup.tread_depths_mm[wheels[1]]),
            setup.ambient_c,
        )
    } else {
        (
            tree.reference.pressure_kpa,
            tree.reference.tread_depth_mm,
            tree.reference.surface_temp_c,
        )
    };
    Ok(TireConditions::clamped(pressure, tread, temp, load_n)?.0)
}

/// Controller-side bicycle model: axle stiffnesses and friction pulled
/// from the tire model, either at the believed actual conditions
/// (adaptive) or at the model's neutral conditions (fixed).
pub fn build_reference(
    params: &VehicleParameters,
    tree: &AdaptedMfCoefficients,
    setup: &TireSetup,
    adaptive: bool,
) -> Result<BicycleReference> {
    let front_load = 0.5 * params.front_axle_load_n();
    let rear_load = 0.5 * params.rear_axle_load_n();
    let front = axle_conditions(setup, tree, adaptive, [0, 1], front_load)?;
    let rear = axle_conditions(setup, tree, adaptive, [2, 3], rear_load)?;
    Ok(BicycleReference {
        params: *params,
        front_stiffness: 2.0 * tree.cornering_stiffness(&front)?,
        rear_stiffness: 2.0 * tree.cornering_stiffness(&rear)?,
        friction: 0.5 * (tree.peak_friction(&front)? + tree.peak_friction(&rear)?),
    })
}

/// Runs one closed loop maneuver. The plant always carries `setup` (the
/// true tires); `controller_tree` is what the stability controller
/// believes, which matters only when the controller is enabled.
pub fn run_maneuver(
    spec: &ManeuverSpec,
    params: &VehicleParameters,
    setup: &TireSetup,
    esc_config: &EscConfig,
    esc_enabled: bool,
    controller_tree: &AdaptedMfCoefficients,
) -> Result<ManeuverResult> {
    spec.validate()?;
    params.validate()?;
    esc_config.validate()?;
    let dt = SIMULATION_DT_S;
    let reference = build_reference(
        params,
        controller_tree,
        setup,
        esc_config.adaptive_reference,
    )?;
    let mut controller = if esc_enabled {
        Some(EscController::new(*esc_config, reference.clone())?)
    } else {
        None
    };

    let mut state = PlantState::at_speed(spec.initial_speed_mps, params, setup);
    let static_loads = wheel_loads(params, 0.0, 0.0)?;
    let mut budgets = [0.0; 4];
    for i in 0..4 {
        let cond = TireConditions::clamped(
            setup.pressures_kpa[i],
            setup.tread_depths_mm[i],
            setup.ambient_c,
            static_loads[i],
        )?
        .0;
        budgets[i] = setup.tree.peak_friction(&cond)? * static_loads[i];
    }
    let mut lateral_forces = [0.0; 4];

    let steer_end_s = LEAD_IN_S + spec.input_duration_s();
    let total_s = steer_end_s + POST_STEER_WINDOW_S;
    let steps = (total_s / dt).round() as usize + 1;
    let mut samples = Vec::with_capacity(steps);
    let mut decisions = Vec::new();
    let mut max_utilization: f64 = 0.0;
    let mut wheel_lift_abort = false;

    for step in 0..steps {
        let time_s = step as f64 * dt;
        let local = time_s - LEAD_IN_S;
        let hand_wheel_deg = spec.hand_wheel_angle_deg(local);
        let road_wheel_rad = hand_wheel_deg.to_radians() / params.steering_ratio;
        let mut torques = [spec.driver_brake_torque_nm(local); 4];
        let mut intervention = false;
        let desired_yaw_rate = if let Some(controller) = controller.as_mut() {
            let measurements = EscMeasurements {
                dt_s: dt,
                speed_mps: state.u,
                yaw_rate_rad_s: state.yaw_rate,
                lateral_acc_mps2: state.ay,
                road_wheel_angle_rad: road_wheel_rad,
                wheel_speeds_rad_s: state.wheel_speeds,
                friction_budgets_n: budgets,
                lateral_forces_n: lateral_forces,
            };
            let decision = controller.esc_step(&measurements)?;
            if let Some(wheel) = decision.braked_wheel {
                torques[wheel.index()] += decision.brake_torque_nm;
                intervention = decision.intervention;
            }
            decisions.push(DecisionRecord::new(time_s, state.yaw_rate, &decision));
            decision.desired_yaw_rate_rad_s
        } else {
            reference.desired_yaw_rate(state.u, road_wheel_rad)
        };

        samples.push(ManeuverSample {
            time_s,
            hand_wheel_deg,
            road_wheel_rad,
            yaw_rate_rad_s: state.yaw_rate,
            desired_yaw_rate_rad_s: desired_yaw_rate,
            sideslip_rad: state.sideslip(),
            speed_mps: state.u,
            brake_torques_nm: torques,
            surface_temps_c: state.surface_temps,
            intervention,
        });
        if step + 1 == steps {
            break;
        }

        match plant_step(params, setup, &state, road_wheel_rad, &torques, dt) {
            Ok((next, diagnostics)) => {
                for i in 0..4 {
                    let combined = (diagnostics.lateral_forces[i].powi(2)
                        + diagnostics.longitudinal_forces[i].powi(2))
                    .sqrt();
                    if diagnostics.friction_budgets[i] > 0.0 {
                        max_utilization =
                            max_utilization.max(combined / diagnostics.friction_budgets[i]);
                    }
                    lateral_forces[i] = diagnostics.lateral_forces[i].abs();
                }
                budgets = diagnostics.friction_budgets;
                state = next;
            }
            Err(Error::WheelLift { .. }) => {
                wheel_lift_abort = true;
                break;
            }
            Err(error) => return Err(error),
        }
    }

    let summary = summarize(&samples, steer_end_s, dt);
    Ok(ManeuverResult {
        samples,
        decisions,
        summary,
        steer_end_s,
        dt_s: dt,
        max_friction_utilization: max_utilization,
        wheel_lift_abort,
    })
}

/// Sweeps the hand wheel amplitude upward without the controller until
/// a run spins out. Returns the first spinning amplitude and its run.
pub fn find_spinout_amplitude(
    spec: &ManeuverSpec,
    params: &VehicleParameters,
    setup: &TireSetup,
    esc_config: &EscConfig,
    controller_tree: &AdaptedMfCoefficients,
) -> Result<Option<(f64, ManeuverResult)>> {
    spec.validate()?;
    let mut amplitude = spec.ramp_start_deg;
    while amplitude <= spec.ramp_stop_deg + 1e-9 {
        let mut swept = *spec;
        swept.hand_wheel_amplitude_deg = amplitude.min(spec.ramp_stop_deg);
        let result = run_maneuver(&swept, params, setup, esc_config, false, controller_tree)?;
        if result.summary.spin_out {
            return Ok(Some((swept.hand_wheel_amplitude_deg, result)));
        }
        amplitude += spec.ramp_step_deg;
    }
    Ok(None)
}

/// Paired runs on the identical plant: the controller with the
/// condition-adapted reference against the one stuck on neutral
/// conditions. Deltas are adaptive minus fixed, so negative is an
/// improvement for every metric.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub adaptive: ManeuverResult,
    pub fixed: ManeuverResult,
    pub yaw_rate_rms_delta: f64,
    pub peak_sideslip_delta: f64,
    pub speed_loss_delta: f64,
    pub intervention_delta: i64,
}

impl ComparisonReport {
    #[must_use]
    pub fn render_text(&self) -> String {
        let row = |metric: &str, adaptive: f64, fixed: f64| {
            format!(
                "metric = {metric} | adaptive = {} | fixed = {} | delta = {}\n",
                format_f64(adaptive),
                format_f64(fixed),
                format_f64(adaptive - fixed)
            )
        };
        let mut text = String::new();
        text.push_str(&row(
            "yaw_rate_tracking_rms",
            self.adaptive.summary.yaw_rate_tracking_rms,
            self.fixed.summary.yaw_rate_tracking_rms,
        ));
        text.push_str(&row(
            "peak_sideslip_rad",
            self.adaptive.summary.peak_sideslip_rad,
            self.fixed.summary.peak_sideslip_rad,
        ));
        text.push_str(&row(
            "speed_loss_mps",
            self.adaptive.summary.speed_loss_mps,
            self.fixed.summary.speed_loss_mps,
        ));
        text.push_str(&format!(
            "metric = intervention_count | adaptive = {} | fixed = {} | delta = {}\n",
            self.adaptive.summary.intervention_count,
            self.fixed.summary.intervention_count,
            self.intervention_delta
        ));
        text
    }
}

/// Runs the controller comparison on one plant configuration.
pub fn compare_adaptive_vs_fixed(
    spec: &ManeuverSpec,
    params: &VehicleParameters,
    setup: &TireSetup,
    esc_config: &EscConfig,
    controller_tree: &AdaptedMfCoefficients,
) -> Result<ComparisonReport> {
    let mut adaptive_config = *esc_config;
    adaptive_config.adaptive_reference = true;
    let mut fixed_config = *esc_config;
    fixed_config.adaptive_reference = false;
    let adaptive = run_maneuver(spec, params, setup, &adaptive_config, true, controller_tree)?;
    let fixed = run_maneuver(spec, params, setup, &fixed_config, true, controller_tree)?;
    let yaw_rate_rms_delta =
        adaptive.summary.yaw_rate_tracking_rms - fixed.summary.yaw_rate_tracking_rms;
    let peak_sideslip_delta =
        adaptive.summary.peak_sideslip_rad - fixed.summary.peak_sideslip_rad;
    let speed_loss_delta = adaptive.summary.speed_loss_mps - fixed.summary.speed_loss_mps;
    let intervention_delta =
        adaptive.summary.intervention_count as i64 - fixed.summary.intervention_count as i64;
    Ok(ComparisonReport {
        adaptive,
        fixed,
        yaw_rate_rms_delta,
        peak_sideslip_delta,
        speed_loss_delta,
        intervention_delta,
    })
}

pub const SERIES_CSV_HEADER: [&str; 16] = [
    "time_s",
    "hand_wheel_deg",
    "road_wheel_rad",
    "yaw_rate",
    "desired_yaw_rate",
    "sideslip_rad",
    "speed_mps",
    "tb_fl",
    "tb_fr",
    "tb_rl",
    "tb_rr",
    "temp_fl",
    "temp_fr",
    "temp_rl",
    "temp_rr",
    "intervention",
];

pub fn write_series_csv(path: &Path, samples: &[ManeuverSample]) -> Result<()> {
    let mut table = CsvTable::new(&SERIES_CSV_HEADER);
    for sample in samples {
        let mut cells = vec![
            format_f64(sample.time_s),
            format_f64(sample.hand_wheel_deg),
            format_f64(sample.road_wheel_rad),
            format_f64(sample.yaw_rate_rad_s),
            format_f64(sample.desired_yaw_rate_rad_s),
            format_f64(sample.sideslip_rad),
            format_f64(sample.speed_mps),
        ];
        cells.extend(sample.brake_torques_nm.iter().copied().map(format_f64));
        cells.extend(sample.surface_temps_c.iter().copied().map(format_f64));
        cells.push(if sample.intervention { "true" } else { "false" }.to_string());
        table.push_row(cells);
    }
    table.write(path)
}

pub fn read_series_csv(path: &Path) -> Result<Vec<ManeuverSample>> {
    let table = CsvTable::read(path)?;
    table.expect_header(&SERIES_CSV_HEADER)?;
    let mut samples = Vec::with_capacity(table.rows.len());
    for (row, cells) in table.rows.iter().enumerate() {
        let mut torques = [0.0; 4];
        let mut temps = [0.0; 4];
        for i in 0..4 {
            torques[i] = table.f64_cell(row, 7 + i)?;
            temps[i] = table.f64_cell(row, 11 + i)?;
        }
        let intervention = match cells[15].as_str() {
            "true" => true,
            "false" => false,
            _ => {
                return Err(Error::Parse {
                    line: row + 2,
                    message: "intervention must be true or false".to_string(),
                })
            }
        };
        samples.push(ManeuverSample {
            time_s: table.f64_cell(row, 0)?,
            hand_wheel_deg: table.f64_cell(row, 1)?,
            road_wheel_rad: table.f64_cell(row, 2)?,
            yaw_rate_rad_s: table.f64_cell(row, 3)?,
            desired_yaw_rate_rad_s: table.f64_cell(row, 4)?,
            sideslip_rad: table.f64_cell(row, 5)?,
            speed_mps: table.f64_cell(row, 6)?,
            brake_torques_nm: torques,
            surface_temps_c: temps,
            intervention,
        });
    }
    Ok(samples)
}

/// Renders the scalar results as a key = value block.
#[must_use]
pub fn render_summary(result: &ManeuverResult) -> String {
    let mut section = KvSection::new("summary");
    section.set_f64("peak_sideslip_rad", result.summary.peak_sideslip_rad);
    section.set_f64("yaw_rate_tracking_rms", result.summary.yaw_rate_tracking_rms);
    section.set_f64("speed_loss_mps", result.summary.speed_loss_mps);
    section.set(
        "intervention_count",
        result.summary.intervention_count.to_string(),
    );
    section.set_f64("heading_deviation_rad", result.summary.heading_deviation_rad);
    section.set("spin_out", if result.summary.spin_out { "true" } else { "false" });
    section.set_f64("steer_end_s", result.steer_end_s);
    section.set_f64("max_friction_utilization", result.max_friction_utilization);
    section.set(
        "wheel_lift_abort",
        if result.wheel_lift_abort { "true" } else { "false" },
    );
    let mut file = KvFile::new();
    file.push(section);
    file.render()
}

/// Writes `<name>_series.csv` and `<name>_summary.txt` under `dir`.
pub fn export_results(result: &ManeuverResult, dir: &Path, name: &str) -> Result<()> {
    write_series_csv(&dir.join(format!("{name}_series.csv")), &result.samples)?;
    std::fs::write(
        dir.join(format!("{name}_summary.txt")),
        render_summary(result),
    )
    .map_err(Error::Io)?;
    Ok(())
}

#[cfg(test)]
mod tests {

    use super::*;
    use crate::fit::synth;
    use approx::assert_relative_eq;

    fn nominal_setup() -> TireSetup {
        TireSetup::uniform(synth::table_truth(), 250.0, 8.0, 25.0)
    }

    fn worn_hot_soft_setup() -> TireSetup {
        TireSetup::uniform(synth::table_truth(), 160.0, 4.8, 120.0)
    }

    #[test]
    fn sine_with_dwell_profile_has_the_documented_shape() {
        let spec = ManeuverSpec::default();
        let period = 1.0 / spec.frequency_hz;
        assert_eq!(spec.hand_wheel_angle_deg(0.0), 0.0);
        assert_relative_eq!(
            spec.hand_wheel_angle_deg(0.25 * period),
            spec.hand_wheel_amplitude_deg,
            max_relative = 1e-12
        );
        let dwell_start = 0.75 * period;
        for i in 0..=50 {
            let t = dwell_start + spec.dwell_duration_s * i as f64 / 50.0;
            assert_relative_eq!(
                spec.hand_wheel_angle_deg(t),
                -spec.hand_wheel_amplitude_deg,
                max_relative = 1e-9
            );
        }
        assert!(spec.hand_wheel_angle_deg(period + spec.dwell_duration_s + 1e-9).abs() < 1e-9);
        assert_eq!(spec.hand_wheel_angle_deg(10.0), 0.0);

        let dt = 1e-4;
        let mut prev = spec.hand_wheel_angle_deg(-dt);
        let mut max_step = 0.0f64;
        let mut t = 0.0;
        while t < period + spec.dwell_duration_s + 0.1 {
            let value = spec.hand_wheel_angle_deg(t);
            max_step = max_step.max((value - prev).abs());
            prev = value;
            t += dt;
        }
        let slew_bound = spec.hand_wheel_amplitude_deg
            * 2.0
            * std::f64::consts::PI
            * spec.frequency_hz
            * dt
            * 1.01;
        assert!(max_step <= slew_bound, "step {max_step} vs bound {slew_bound}");
    }

    #[test]
    fn spec_file_round_trips_and_rejects_nonsense() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("maneuver.txt");
        let spec = ManeuverSpec {
            kind: ManeuverKind::StepSteer,
            hand_wheel_amplitude_deg: 45.0,
            ..ManeuverSpec::default()
        };
        spec.save(&path).unwrap();
        assert_eq!(ManeuverSpec::load(&path).unwrap(), spec);

        let bad = ManeuverSpec {
            hand_wheel_amplitude_deg: 400.0,
            ..ManeuverSpec::default()
        };
        assert!(bad.validate().is_err());
        let bad = ManeuverSpec {
            frequency_hz: 0.0,
            ..ManeuverSpec::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn runs_are_deterministic() {
        let params = VehicleParameters::default();
        let setup = nominal_setup();
        let spec = ManeuverSpec {
            hand_wheel_amplitude_deg: 90.0,
            ..ManeuverSpec::default()
        };
        let config = EscConfig::default();
        let run = || run_maneuver(&spec, &params, &setup, &config, true, &setup.tree).unwrap();
        let first = run();
        let second = run();
        assert_eq!(first, second);
    }

    #[test]
    fn summary_is_recomputable_from_the_series() {
        let params = VehicleParameters::default();
        let setup = nominal_setup();
        let spec = ManeuverSpec {
            hand_wheel_amplitude_deg: 150.0,
            ..ManeuverSpec::default()
        };
        let config = EscConfig::default();
        let result = run_maneuver(&spec, &params, &setup, &config, true, &setup.tree).unwrap();
        let recomputed = summarize(&result.samples, result.steer_end_s, result.dt_s);
        assert_eq!(result.summary, recomputed);
    }

    #[test]
    fn series_csv_round_trips_bit_exactly() {
        let params = VehicleParameters::default();
        let setup = nominal_setup();
        let spec = ManeuverSpec {
            hand_wheel_amplitude_deg: 60.0,
            ..ManeuverSpec::default()
        };
        let config = EscConfig::default();
        let result = run_maneuver(&spec, &params, &setup, &config, true, &setup.tree).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        write_series_csv(&path, &result.samples).unwrap();
        let loaded = read_series_csv(&path).unwrap();
        assert_eq!(result.samples, loaded);
        let empty_path = dir.path().join("empty.csv");
        write_series_csv(&empty_path, &[]).unwrap();
        assert!(read_series_csv(&empty_path).unwrap().is_empty());
    }

    #[test]
    fn moderate_amplitude_stays_stable_without_control() {
        let params = VehicleParameters::default();
        let setup = nominal_setup();
        let spec = ManeuverSpec::default();
        let config = EscConfig::default();
        let result = run_maneuver(&spec, &params, &setup, &config, false, &setup.tree).unwrap();
        assert!(!result.summary.spin_out);
        assert!(!result.wheel_lift_abort);
        assert!(
            result.summary.peak_sideslip_rad < 0.35,
            "sideslip {}",
            result.summary.peak_sideslip_rad
        );
        assert_eq!(result.summary.intervention_count, 0);
        assert!(result.decisions.is_empty());
    }

    #[test]
    fn small_errors_inside_the_dead_band_cause_no_interventions() {
        let params = VehicleParameters::default();
        let setup = nominal_setup();
        let spec = ManeuverSpec {
            hand_wheel_amplitude_deg: 10.0,
            ..ManeuverSpec::default()
        };
        let config = EscConfig::default();
        let result = run_maneuver(&spec, &params, &setup, &config, true, &setup.tree).unwrap();
        let max_sliding = result
            .decisions
            .iter()
            .map(|d| d.sliding_rad_s.abs())
            .fold(0.0f64, f64::max);
        assert!(
            max_sliding <= config.dead_band_rad_per_s,
            "sliding {max_sliding} exceeded the dead band"
        );
        assert_eq!(result.summary.intervention_count, 0);
    }

    #[test]
    fn combined_forces_respect_the_friction_circle() {
        let params = VehicleParameters::default();
        let setup = nominal_setup();
        let spec = ManeuverSpec {
            hand_wheel_amplitude_deg: 240.0,
            ..ManeuverSpec::default()
        };
        let config = EscConfig::default();
        let result = run_maneuver(&spec, &params, &setup, &config, true, &setup.tree).unwrap();
        assert!(
            result.max_friction_utilization <= 1.001,
            "utilization {}",
            result.max_friction_utilization
        );
        assert!(result.summary.intervention_count > 0);
    }

    #[test]
    fn ramp_finds_a_spinout_and_the_controller_prevents_it() {
        let params = VehicleParameters::default();
        let setup = nominal_setup();
        let spec = ManeuverSpec::default();
        let config = EscConfig::default();
        let found = find_spinout_amplitude(&spec, &params, &setup, &config, &setup.tree).unwrap();
        let (amplitude, uncontrolled) = found.expect("no spin out on the amplitude ramp");
        assert!(amplitude <= spec.ramp_stop_deg);
        assert!(uncontrolled.summary.spin_out);

        let mut saved_spec = spec;
        saved_spec.hand_wheel_amplitude_deg = amplitude;
        let saved =
            run_maneuver(&saved_spec, &params, &setup, &config, true, &setup.tree).unwrap();
        assert!(!saved.summary.spin_out, "controller failed to prevent the spin out");
        assert!(saved.summary.intervention_count > 0);
    }

    #[test]
    fn comparison_is_a_no_op_at_neutral_conditions() {
        let params = VehicleParameters::default();
        let setup = nominal_setup();
        let spec = ManeuverSpec {
            hand_wheel_amplitude_deg: 150.0,
            ..ManeuverSpec::default()
        };
        let config = EscConfig::default();
        let report =
            compare_adaptive_vs_fixed(&spec, &params, &setup, &config, &setup.tree).unwrap();
        assert_eq!(report.adaptive.samples, report.fixed.samples);
        assert_eq!(report.yaw_rate_rms_delta, 0.0);
        assert_eq!(report.intervention_delta, 0);
    }

    #[test]
    fn adaptation_wins_on_degraded_tires() {
        let params = VehicleParameters::default();
        let setup = worn_hot_soft_setup();
        let spec = ManeuverSpec {
            hand_wheel_amplitude_deg: 80.0,
            ..ManeuverSpec::default()
        };
        let config = EscConfig::default();
        let report =
            compare_adaptive_vs_fixed(&spec, &params, &setup, &config, &setup.tree).unwrap();
        assert!(
            report.yaw_rate_rms_delta < 0.0,
            "yaw rms delta {}",
            report.yaw_rate_rms_delta
        );
        assert!(
            report.peak_sideslip_delta < 0.0,
            "sideslip delta {}",
            report.peak_sideslip_delta
        );
        assert!(
            report.speed_loss_delta < 0.0,
            "speed loss delta {}",
            report.speed_loss_delta
        );
        assert!(
            report.intervention_delta < 0,
            "intervention delta {}",
            report.intervention_delta
        );
        assert!(report.fixed.summary.intervention_count > 0);
        let text = report.render_text();
        assert!(text.contains("metric = yaw_rate_tracking_rms"));
        assert!(text.contains("metric = intervention_count"));
    }

    #[test]
    fn step_and_brake_profiles_shape_their_inputs() {
        let step = ManeuverSpec {
            kind: ManeuverKind::StepSteer,
            hand_wheel_amplitude_deg: 60.0,
            ..ManeuverSpec::default()
        };
        assert_eq!(step.hand_wheel_angle_deg(-0.1), 0.0);
        assert_relative_eq!(step.hand_wheel_angle_deg(0.125), 30.0, max_relative = 1e-12);
        assert_eq!(step.hand_wheel_angle_deg(0.25), 60.0);
        assert_eq!(step.hand_wheel_angle_deg(5.0), 60.0);
        assert_eq!(step.driver_brake_torque_nm(1.0), 0.0);

        let brake = ManeuverSpec {
            kind: ManeuverKind::StraightBrake,
            ..ManeuverSpec::default()
        };
        assert_eq!(brake.hand_wheel_angle_deg(1.0), 0.0);
        assert_eq!(brake.driver_brake_torque_nm(-0.1), 0.0);
        assert_eq!(brake.driver_brake_torque_nm(0.0), brake.brake_torque_nm);
        assert_eq!(brake.driver_brake_torque_nm(2.9), brake.brake_torque_nm);
        assert_eq!(brake.driver_brake_torque_nm(3.1), 0.0);
    }

    #[test]
    fn straight_braking_slows_the_car_without_turning_it() {
        let params = VehicleParameters::default();
        let setup = nominal_setup();
        let spec = ManeuverSpec {
            kind: ManeuverKind::StraightBrake,
            ..ManeuverSpec::default()
        };
        let config = EscConfig::default();
        let result = run_maneuver(&spec, &params, &setup, &config, false, &setup.tree).unwrap();
        assert!(!result.wheel_lift_abort);
        assert!(!result.summary.spin_out);
        assert!(
            result.summary.speed_loss_mps > 5.0,
            "speed loss {}",
            result.summary.speed_loss_mps
        );
        assert!(result.summary.peak_sideslip_rad < 1e-6);
        assert!(result
            .samples
            .iter()
            .all(|sample| sample.road_wheel_rad == 0.0));
    }

    #[test]
    fn a_lifting_wheel_truncates_the_run_and_flags_it() {
        let params = VehicleParameters {
            track_width_m: 1.2,
            cg_height_m: 0.9,
            ..VehicleParameters::default()
        };
        let setup = nominal_setup();
        let spec = ManeuverSpec {
            hand_wheel_amplitude_deg: 240.0,
            ..ManeuverSpec::default()
        };
        let config = EscConfig::default();
        let result = run_maneuver(&spec, &params, &setup, &config, false, &setup.tree).unwrap();
        assert!(result.wheel_lift_abort);
        let expected_full =
            ((result.steer_end_s + POST_STEER_WINDOW_S) / result.dt_s).round() as usize + 1;
        assert!(result.samples.len() < expected_full);
        assert_eq!(
            result.summary,
            summarize(&result.samples, result.steer_end_s, result.dt_s)
        );
    }

    #[test]
    fn exports_write_series_and_summary_files() {
        let params = VehicleParameters::default();
        let setup = nominal_setup();
        let spec = ManeuverSpec {
            hand_wheel_amplitude_deg: 60.0,
            ..ManeuverSpec::default()
        };
        let config = EscConfig::default();
        let result = run_maneuver(&spec, &params, &setup, &config, true, &setup.tree).unwrap();
        let dir = tempfile::tempdir().unwrap();
        export_results(&result, dir.path(), "run").unwrap();
        let series = read_series_csv(&dir.path().join("run_series.csv")).unwrap();
        assert_eq!(series, result.samples);
        let summary = std::fs::read_to_string(dir.path().join("run_summary.txt")).unwrap();
        assert!(summary.contains("peak_sideslip_rad"));
        assert!(summary.contains("spin_out = false"));
    }
}
