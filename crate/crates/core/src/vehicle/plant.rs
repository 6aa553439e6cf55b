//! Four-wheel planar simulation truth model.
//!
//! Seven mechanical states (body velocities, yaw rate, four wheel speeds)
//! plus pose and four tread surface temperatures. Each step:
//!
//! 1. vertical loads from static weight and the previous step's
//!    accelerations (longitudinal transfer by the cg height, lateral
//!    transfer split between the axles by the roll couple),
//! 2. per-wheel slip angles from the body motion,
//! 3. lateral force from the condition-adapted tire model, combined with
//!    brake force on a friction circle,
//! 4. rigid body and wheel spin integration, explicit Euler,
//! 5. contact patch temperature update from the sliding power.
//!
//! The model deliberately stays planar: no suspension states, no camber.
//! The parts that matter for yaw stability work are the load-sensitive,
//! condition-adapted axle grip and the single-wheel brake forces.

use crate::adapt::{AdaptedMfCoefficients, TireConditions};
use crate::error::{Error, Result};
use crate::mf::{self, TireForceState};
use crate::thermal::{self, ThermalParameters};
use crate::vehicle::VehicleParameters;

pub const WHEEL_NAMES: [&str; 4] = ["front_left", "front_right", "rear_left", "rear_right"];

/// Everything tire-related the plant needs: the coefficient tree plus the
/// slowly varying condition of each corner.
#[derive(Debug, Clone)]
pub struct TireSetup {
    pub tree: AdaptedMfCoefficients,
    pub pressures_kpa: [f64; 4],
    pub tread_depths_mm: [f64; 4],
    pub thermal: ThermalParameters,
    pub ambient_c: f64,
}

impl TireSetup {
    /// The same pressure and tread on all four corners.
    #[must_use]
    pub fn uniform(
        tree: AdaptedMfCoefficients,
        pressure_kpa: f64,
        tread_depth_mm: f64,
        ambient_c: f64,
    ) -> Self {
        Self {
            tree,
            pressures_kpa: [pressure_kpa; 4],
            tread_depths_mm: [tread_depth_mm; 4],
            thermal: ThermalParameters::default(),
            ambient_c,
        }
    }
}

/// Full simulation state. Velocities are body-frame, pose is in a fixed
/// ground frame aligned with the initial heading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    /// Longitudinal velocity, m/s.
    pub u: f64,
    /// Lateral velocity, m/s, positive right.
    pub v: f64,
    /// Yaw rate, rad/s, positive turning right.
    pub yaw_rate: f64,
    /// Heading relative to the initial direction, rad.
    pub heading: f64,
    /// Ground position, m.
    pub x: f64,
    pub y: f64,
    /// Wheel spin speeds, rad/s.
    pub wheel_speeds: [f64; 4],
    /// Tread surface temperatures, C.
    pub surface_temps: [f64; 4],
    /// Sensed accelerations of the previous step, m/s^2. They drive the
    /// load transfer, one step behind the forces that cause them.
    pub ax: f64,
    pub ay: f64,
}

impl PlantState {
    /// Rolling straight at the given speed, tires at ambient temperature.
    #[must_use]
    pub fn at_speed(speed: f64, params: &VehicleParameters, setup: &TireSetup) -> Self {
        Self {
            u: speed,
            v: 0.0,
            yaw_rate: 0.0,
            heading: 0.0,
            x: 0.0,
            y: 0.0,
            wheel_speeds: [speed / params.wheel_radius_m; 4],
            surface_temps: [setup.ambient_c; 4],
            ax: 0.0,
            ay: 0.0,
        }
    }

    /// Body sideslip angle, rad.
    #[must_use]
    pub fn sideslip(&self) -> f64 {
        self.v.atan2(self.u)
    }
}

/// Per-step observables, mostly for tests and logs.
#[derive(Debug, Clone, Copy)]
pub struct PlantDiagnostics {
    pub wheel_loads: [f64; 4],
    pub lateral_forces: [f64; 4],
    pub longitudinal_forces: [f64; 4],
    pub slip_angles: [f64; 4],
    /// Friction circle radius per wheel, N.
    pub friction_budgets: [f64; 4],
    pub friction_powers: [f64; 4],
    /// How many wheels had their conditions clamped into the tire model's
    /// validity box this step.
    pub condition_clamps: usize,
}

/// Vertical loads from static weight plus the previous-step transfer.
pub fn wheel_loads(
    params: &VehicleParameters,
    ax: f64,
    ay: f64,
) -> Result<[f64; 4]> {
    let m = params.mass_kg;
    let h = params.cg_height_m;
    let long_shift = m * ax * h / params.wheelbase_m();
    let front_axle = params.front_axle_load_n() - long_shift;
    let rear_axle = params.rear_axle_load_n() + long_shift;
    let lat = m * ay * h / params.track_width_m;
    let front_delta = params.front_roll_couple * lat;
    let rear_delta = (1.0 - params.front_roll_couple) * lat;
    // Left wheels sit at negative y; positive lateral acceleration (a
    // right turn) loads them.
    let loads = [
        0.5 * front_axle + front_delta,
        0.5 * front_axle - front_delta,
        0.5 * rear_axle + rear_delta,
        0.5 * rear_axle - rear_delta,
    ];
    for (i, &load) in loads.iter().enumerate() {
        if load <= 0.0 {
            return Err(Error::WheelLift {
                wheel: WHEEL_NAMES[i],
                load,
            });
        }
    }
    Ok(loads)
}

/// One explicit Euler step of the whole plant.
pub fn plant_step(
    params: &VehicleParameters,
    setup: &TireSetup,
    state: &PlantState,
    road_wheel_angle: f64,
    brake_torques: &[f64; 4],
    dt: f64,
) -> Result<(PlantState, PlantDiagnostics)> {
    params.validate()?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::NonFinite("time step"));
    }
    let half_track = 0.5 * params.track_width_m;
    let xs = [
        params.front_axle_to_cg_m,
        params.front_axle_to_cg_m,
        -params.rear_axle_to_cg_m,
        -params.rear_axle_to_cg_m,
    ];
    let ys = [-half_track, half_track, -half_track, half_track];
    let rw = params.wheel_radius_m;

    let loads = wheel_loads(params, state.ax, state.ay)?;

    let mut lat = [0.0; 4];
    let mut long = [0.0; 4];
    let mut alphas = [0.0; 4];
    let mut budgets = [0.0; 4];
    let mut powers = [0.0; 4];
    let mut clamps = 0;
    let mut new_wheel_speeds = [0.0; 4];
    let mut new_temps = [0.0; 4];

    for i in 0..4 {
        let vx = state.u - state.yaw_rate * ys[i];
        let vy = state.v + state.yaw_rate * xs[i];
        let steer = if i < 2 { road_wheel_angle } else { 0.0 };
        let alpha = (steer - vy.atan2(vx.max(0.05))).clamp(-1.4, 1.4);
        alphas[i] = alpha;

        let (cond, moved) = TireConditions::clamped(
            setup.pressures_kpa[i],
            setup.tread_depths_mm[i],
            state.surface_temps[i],
            loads[i],
        )?;
        if moved {
            clamps += 1;
        }
        let base = setup.tree.to_base(&cond)?;
        let budget = setup.tree.peak_friction(&cond)? * loads[i];
        budgets[i] = budget;

        let pure_lateral = mf::lateral_force(&base, &TireForceState::new(alpha, loads[i])?)?
            .clamp(-budget, budget);
        let requested_brake = brake_torques[i].max(0.0) / rw;
        let brake_capacity = (budget * budget - pure_lateral * pure_lateral).max(0.0).sqrt();
        let fx = -requested_brake.min(brake_capacity);
        let fy = if budget > 0.0 {
            pure_lateral * (1.0 - (fx / budget).powi(2)).max(0.0).sqrt()
        } else {
            0.0
        };
        long[i] = fx;
        lat[i] = fy;

        // Wheel spin: locking when the brake request exceeds what the
        // contact can transmit, otherwise relaxing to free rolling.
        let omega = state.wheel_speeds[i];
        let free_rolling = vx.max(0.0) / rw;
        new_wheel_speeds[i] = if requested_brake > brake_capacity {
            let torque_excess = brake_torques[i] - fx.abs() * rw;
            (omega - dt * torque_excess / params.wheel_inertia_kgm2).max(0.0)
        } else {
            omega + dt * (free_rolling - omega) / 0.05
        };

        let (slip_vx, slip_vy) = thermal::slip_velocities(vx, rw * omega, alpha);
        let power = thermal::frictional_power(fx, fy, slip_vx, slip_vy);
        powers[i] = power;
        new_temps[i] = thermal::surface_temperature_step(
            &setup.thermal,
            state.surface_temps[i],
            setup.ambient_c,
            power,
            dt,
        )?;
    }

    // Tire forces into the body frame; the front pair acts along the
    // steered direction.
    let (sin_d, cos_d) = road_wheel_angle.sin_cos();
    let rolling = if state.u > 0.01 {
        params.rolling_resistance_n
    } else {
        0.0
    };
    let mut force_x = -params.aero_drag_coeff * state.u * state.u - rolling;
    let mut force_y = 0.0;
    let mut moment_z = 0.0;
    for i in 0..4 {
        let (fx_b, fy_b) = if i < 2 {
            (
                long[i] * cos_d - lat[i] * sin_d,
                long[i] * sin_d + lat[i] * cos_d,
            )
        } else {
            (long[i], lat[i])
        };
        force_x += fx_b;
        force_y += fy_b;
        moment_z += xs[i] * fy_b - ys[i] * fx_b;
    }

    let ax = force_x / params.mass_kg;
    let ay = force_y / params.mass_kg;
    let u_dot = ax + state.yaw_rate * state.v;
    let v_dot = ay - state.yaw_rate * state.u;
    let r_dot = moment_z / params.yaw_inertia_kgm2;

    let (sin_h, cos_h) = state.heading.sin_cos();
    let next = PlantState {
        u: (state.u + dt * u_dot).max(0.0),
        v: state.v + dt * v_dot,
        yaw_rate: state.yaw_rate + dt * r_dot,
        heading: state.heading + dt * state.yaw_rate,
        x: state.x + dt * (state.u * cos_h - state.v * sin_h),
        y: state.y + dt * (state.u * sin_h + state.v * cos_h),
        wheel_speeds: new_wheel_speeds,
        surface_temps: new_temps,
        ax,
        ay,
    };
    let diagnostics = PlantDiagnostics {
        wheel_loads: loads,
        lateral_forces: lat,
        longitudinal_forces: long,
        slip_angles: alphas,
        friction_budgets: budgets,
        friction_powers: powers,
        condition_clamps: clamps,
    };
    Ok((next, diagnostics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::synth;
    use crate::vehicle::BicycleReference;
    use crate::GRAVITY;
    use approx::assert_relative_eq;

    fn default_setup() -> TireSetup {
        TireSetup::uniform(synth::table_truth(), 250.0, 8.0, 25.0)
    }

    fn coast(
        params: &VehicleParameters,
        setup: &TireSetup,
        mut state: PlantState,
        steer: f64,
        seconds: f64,
    ) -> (PlantState, PlantDiagnostics) {
        let dt = 1e-3;
        let mut diag = None;
        for _ in 0..(seconds / dt).round() as usize {
            let (next, d) = plant_step(params, setup, &state, steer, &[0.0; 4], dt).unwrap();
            state = next;
            diag = Some(d);
        }
        (state, diag.unwrap())
    }

    #[test]
    fn straight_running_stays_straight() {
        let params = VehicleParameters::default();
        let setup = default_setup();
        let state = PlantState::at_speed(30.0, &params, &setup);
        let (after, diag) = coast(&params, &setup, state, 0.0, 2.0);
        assert_eq!(after.v, 0.0);
        assert_eq!(after.yaw_rate, 0.0);
        assert_eq!(after.heading, 0.0);
        assert_eq!(after.y, 0.0);
        for alpha in diag.slip_angles {
            assert_eq!(alpha, 0.0);
        }
        // Drag slows the car.
        assert!(after.u < 30.0 && after.u > 28.0, "speed {}", after.u);
    }

    #[test]
    fn static_loads_match_the_axle_split_and_sum_to_weight() {
        let params = VehicleParameters::default();
        let loads = wheel_loads(&params, 0.0, 0.0).unwrap();
        assert_relative_eq!(loads[0], 8175.0 / 2.0, max_relative = 1e-12);
        assert_relative_eq!(loads[2], 6540.0 / 2.0, max_relative = 1e-12);
        assert_relative_eq!(
            loads.iter().sum::<f64>(),
            params.mass_kg * GRAVITY,
            max_relative = 1e-12
        );
    }

    #[test]
    fn load_transfer_conserves_weight_and_loads_the_outside() {
        let params = VehicleParameters::default();
        // Right turn: positive lateral acceleration, left wheels outside.
        let loads = wheel_loads(&params, -2.0, 6.0).unwrap();
        assert_relative_eq!(
            loads.iter().sum::<f64>(),
            params.mass_kg * GRAVITY,
            max_relative = 1e-12
        );
        assert!(loads[0] > loads[1], "front pair {:?}", &loads[..2]);
        assert!(loads[2] > loads[3], "rear pair {:?}", &loads[2..]);
        // Braking loads the front axle.
        assert!(loads[0] + loads[1] > 8175.0);
    }

    #[test]
    fn extreme_transfer_reports_the_lifting_wheel() {
        let mut params = VehicleParameters::default();
        params.cg_height_m = 1.2;
        let err = wheel_loads(&params, 0.0, 9.0).unwrap_err();
        match err {
            Error::WheelLift { wheel, load } => {
                assert_eq!(wheel, "front_right");
                assert!(load <= 0.0);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn steady_cornering_tracks_the_bicycle_prediction() {
        let params = VehicleParameters::default();
        let setup = default_setup();
        let state = PlantState::at_speed(20.0, &params, &setup);
        // Small steer keeps every tire in its linear range.
        let steer = 0.02;
        let (after, diag) = coast(&params, &setup, state, steer, 6.0);

        let axle_stiffness = |load: f64| {
            let cond = TireConditions::clamped(250.0, 8.0, 25.0, load / 2.0).unwrap().0;
            2.0 * setup.tree.cornering_stiffness(&cond).unwrap()
        };
        let reference = BicycleReference {
            params,
            front_stiffness: axle_stiffness(params.front_axle_load_n()),
            rear_stiffness: axle_stiffness(params.rear_axle_load_n()),
            friction: 1.2,
        };
        let predicted = reference.desired_yaw_rate(after.u, steer);
        assert!(
            (after.yaw_rate / predicted - 1.0).abs() < 0.05,
            "plant {} vs bicycle {predicted}",
            after.yaw_rate
        );
        // Right turn: positive yaw rate, outside (left) wheels loaded.
        assert!(after.yaw_rate > 0.0);
        assert!(diag.wheel_loads[0] > diag.wheel_loads[1]);
    }

    #[test]
    fn forces_stay_on_the_friction_circle_under_hard_braking() {
        let params = VehicleParameters::default();
        let setup = default_setup();
        let mut state = PlantState::at_speed(25.0, &params, &setup);
        let dt = 1e-3;
        for step in 0..2000 {
            let brake = if step > 500 { 900.0 } else { 0.0 };
            let (next, diag) =
                plant_step(&params, &setup, &state, 0.06, &[brake; 4], dt).unwrap();
            for i in 0..4 {
                let total = (diag.lateral_forces[i].powi(2)
                    + diag.longitudinal_forces[i].powi(2))
                .sqrt();
                assert!(
                    total <= diag.friction_budgets[i] * 1.001,
                    "wheel {i} exceeds its budget: {total} vs {}",
                    diag.friction_budgets[i]
                );
            }
            state = next;
            if state.u < 5.0 {
                break;
            }
        }
    }

    #[test]
    fn braking_torque_slows_the_car_and_spins_down_the_wheels() {
        let params = VehicleParameters::default();
        let setup = default_setup();
        let mut state = PlantState::at_speed(25.0, &params, &setup);
        let dt = 1e-3;
        for _ in 0..1500 {
            let (next, _) =
                plant_step(&params, &setup, &state, 0.0, &[400.0; 4], dt).unwrap();
            state = next;
        }
        assert!(state.u < 21.0, "speed {}", state.u);
        for speed in state.wheel_speeds {
            assert!(speed < state.u / params.wheel_radius_m + 1.0);
        }
    }

    #[test]
    fn sustained_cornering_heats_the_tread() {
        let params = VehicleParameters::default();
        let setup = default_setup();
        let state = PlantState::at_speed(25.0, &params, &setup);
        let (after, _) = coast(&params, &setup, state, 0.06, 8.0);
        let hottest = after
            .surface_temps
            .iter()
            .fold(f64::NEG_INFINITY, |m, &t| m.max(t));
        assert!(
            hottest > setup.ambient_c + 1.0,
            "temperatures {:?}",
            after.surface_temps
        );
    }

    #[test]
    fn stepping_is_deterministic() {
        let params = VehicleParameters::default();
        let setup = default_setup();
        let state = PlantState::at_speed(22.0, &params, &setup);
        let (a, _) = coast(&params, &setup, state, 0.05, 1.0);
        let (b, _) = coast(&params, &setup, state, 0.05, 1.0);
        assert_eq!(a, b);
    }
}
