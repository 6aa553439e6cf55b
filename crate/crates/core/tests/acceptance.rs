//! Acceptance suite. Each test covers one numbered criterion and prints
//! one `ACCEPTANCE <n> ...: PASS` line when it holds (run with
//! `--nocapture` to see them).

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use adaptire_core::adapt::TireConditions;
use adaptire_core::esc::{
    desired_yaw_moment, select_braked_wheel, sliding_surface, BrakedWheel, EscConfig,
};
use adaptire_core::fit::synth::{
    self, linspace, relative_rms_over_grid, NOMINAL_LOAD_N, SweepGenerator,
};
use adaptire_core::fit::{fit_sweeps, polyfit, PipelineOptions};
use adaptire_core::maneuver::{
    compare_adaptive_vs_fixed, find_spinout_amplitude, run_maneuver, ManeuverKind, ManeuverSpec,
};
use adaptire_core::mf::{self, BaseMfCoefficients, TireForceState};
use adaptire_core::thermal::rnn::{
    gradient_check, prediction_rms, rnn_train, series_from_samples, TrainOptions,
};
use adaptire_core::thermal::{
    equilibrium_temperature, frictional_power, slip_velocities, surface_temperature_step,
    synthetic_thermal_series, ThermalParameters,
};
use adaptire_core::vehicle::plant::TireSetup;
use adaptire_core::vehicle::{BicycleReference, VehicleParameters};

fn fitted_calibrated_tree() -> adaptire_core::AdaptedMfCoefficients {
    let observations = SweepGenerator::calibrated(0.0).generate(0).unwrap();
    let report = fit_sweeps(&observations, &PipelineOptions::default()).unwrap();
    report.best_tree().clone()
}

#[test]
fn acceptance_1_sensitivity_targets_from_the_fitted_tree() {
    let start = Instant::now();
    let tree = fitted_calibrated_tree();

    let cond = |p: f64, d: f64, t: f64, fz: f64| TireConditions::new(p, d, t, fz).unwrap();
    let cs = |p, d, t, fz| tree.cornering_stiffness(&cond(p, d, t, fz)).unwrap();
    let grip = |p, d, t, fz| tree.peak_friction(&cond(p, d, t, fz)).unwrap();

    let heavy = 1.5 * NOMINAL_LOAD_N;
    let pressure_gain = cs(300.0, 8.0, 25.0, heavy) / cs(250.0, 8.0, 25.0, heavy) - 1.0;
    assert!(
        (0.08..=0.12).contains(&pressure_gain),
        "stiffness change for +20% pressure at 1.5x load: {pressure_gain}"
    );

    let tread_gain =
        cs(250.0, 3.2, 25.0, NOMINAL_LOAD_N) / cs(250.0, 8.0, 25.0, NOMINAL_LOAD_N) - 1.0;
    assert!(
        (0.27..=0.33).contains(&tread_gain),
        "stiffness change for -60% tread: {tread_gain}"
    );

    let heat_loss =
        cs(250.0, 8.0, 90.0, NOMINAL_LOAD_N) / cs(250.0, 8.0, 25.0, NOMINAL_LOAD_N) - 1.0;
    assert!(
        (-0.25..=-0.20).contains(&heat_loss),
        "stiffness change cold to hot: {heat_loss}"
    );

    let grip_tread =
        grip(250.0, 3.2, 25.0, NOMINAL_LOAD_N) / grip(250.0, 8.0, 25.0, NOMINAL_LOAD_N) - 1.0;
    assert!(
        (0.08..=0.12).contains(&grip_tread),
        "grip change for -60% tread: {grip_tread}"
    );

    let grip_heat =
        grip(250.0, 8.0, 90.0, NOMINAL_LOAD_N) / grip(250.0, 8.0, 25.0, NOMINAL_LOAD_N) - 1.0;
    assert!(
        (-0.12..=-0.08).contains(&grip_heat),
        "grip change cold to hot: {grip_heat}"
    );

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "sensitivity fit took {elapsed} s");
    println!("ACCEPTANCE 1 fitted tree reproduces the published sensitivities: PASS");
}

#[test]
fn acceptance_2_round_trip_recovery_over_twenty_seeds() {
    let grid = (
        linspace(200.0, 350.0, 5),
        linspace(2.4, 8.0, 5),
        linspace(25.0, 90.0, 5),
        linspace(1320.0, 6680.0, 5),
    );
    for seed in 0..20 {
        let truth = synth::random_truth(seed);

        let mut generator = SweepGenerator::calibrated(0.0);
        generator.truth = truth.clone();
        let clean = generator.generate(seed).unwrap();
        let fitted = fit_sweeps(&clean, &PipelineOptions::default()).unwrap();
        let (cs_rms, grip_rms) =
            relative_rms_over_grid(&truth, fitted.best_tree(), &grid.0, &grid.1, &grid.2, &grid.3)
                .unwrap();
        assert!(
            cs_rms <= 0.001 && grip_rms <= 0.001,
            "seed {seed} zero-noise rms: stiffness {cs_rms}, grip {grip_rms}"
        );

        generator.noise_fraction = 0.02;
        let noisy = generator.generate(seed).unwrap();
        let fitted = fit_sweeps(&noisy, &PipelineOptions::default()).unwrap();
        let (cs_rms, grip_rms) =
            relative_rms_over_grid(&truth, fitted.best_tree(), &grid.0, &grid.1, &grid.2, &grid.3)
                .unwrap();
        assert!(
            cs_rms <= 0.05 && grip_rms <= 0.05,
            "seed {seed} noisy rms: stiffness {cs_rms}, grip {grip_rms}"
        );
    }
    println!("ACCEPTANCE 2 pipeline round-trips twenty random trees: PASS");
}

#[test]
fn acceptance_3_pressure_sensitivity_crosses_over_with_load() {
    let tree = fitted_calibrated_tree();
    let slope = |load: f64| {
        let lo = TireConditions::new(240.0, 8.0, 25.0, load).unwrap();
        let hi = TireConditions::new(260.0, 8.0, 25.0, load).unwrap();
        (tree.cornering_stiffness(&hi).unwrap() - tree.cornering_stiffness(&lo).unwrap()) / 20.0
    };
    let light = slope(0.33 * NOMINAL_LOAD_N);
    let heavy = slope(1.5 * NOMINAL_LOAD_N);
    assert!(light < 0.0, "light-load pressure slope {light} should be negative");
    assert!(heavy > 0.0, "heavy-load pressure slope {heavy} should be positive");
    println!("ACCEPTANCE 3 pressure sensitivity flips sign between light and heavy load: PASS");
}

#[test]
fn acceptance_4_analytic_identities_and_bounds() {
    let tree = synth::table_truth();
    let mut rng = ChaCha8Rng::seed_from_u64(0x41D);

    // Slope of the force curve at zero slip equals the stiffness product.
    for _ in 0..50 {
        let cond = TireConditions::new(
            rng.gen_range(150.0..420.0),
            rng.gen_range(1.0..11.0),
            rng.gen_range(-10.0..140.0),
            rng.gen_range(800.0..7000.0),
        )
        .unwrap();
        let base = tree.to_base(&cond).unwrap();
        let slope = mf::slope_at_origin(&base, cond.normal_load_n).unwrap();
        let stiffness = mf::cornering_stiffness(&base, cond.normal_load_n).unwrap();
        let relative = (slope - stiffness).abs() / stiffness.abs();
        assert!(relative <= 1e-6, "slope vs stiffness mismatch {relative}");
    }

    // The stiffness-vs-load curve peaks exactly where the load equals the
    // shaping coefficient, where its sine factor is exactly one.
    let cond = synth::reference_conditions();
    let base = tree.to_base(&cond).unwrap();
    let at_peak = mf::cornering_stiffness(&base, base.a4).unwrap();
    assert!((at_peak - base.a3).abs() / at_peak < 1e-12);
    for factor in [0.5, 0.8, 0.95, 1.05, 1.3, 2.0] {
        let off = mf::cornering_stiffness(&base, factor * base.a4).unwrap();
        assert!(off < at_peak, "stiffness at {factor} of the peak load not below the peak");
    }

    // Oddness and the sine amplitude bound over ten thousand random states.
    for _ in 0..10_000 {
        let coeffs = BaseMfCoefficients::new(
            rng.gen_range(-2.8e-5..0.0),
            rng.gen_range(0.85..1.4),
            rng.gen_range(20_000.0..90_000.0),
            rng.gen_range(1500.0..6500.0),
            rng.gen_range(1.1..1.8),
            rng.gen_range(-2.0..0.9),
            0.0,
        )
        .unwrap();
        let load = rng.gen_range(800.0..7000.0);
        let slip = rng.gen_range(-0.6..0.6f64);
        let state = TireForceState::new(slip, load).unwrap();
        let mirrored = TireForceState::new(-slip, load).unwrap();
        let force = mf::lateral_force(&coeffs, &state).unwrap();
        let opposite = mf::lateral_force(&coeffs, &mirrored).unwrap();
        assert!(
            (force + opposite).abs() <= 1e-9 * force.abs().max(1.0),
            "lateral force is not odd in slip"
        );
        let amplitude = (coeffs.a1 * load + coeffs.a2) * load;
        assert!(
            force.abs() <= amplitude + 1e-9,
            "lateral force exceeds its sine amplitude"
        );
        let again = mf::lateral_force(&coeffs, &state).unwrap();
        assert_eq!(force, again, "repeated evaluation must be bit identical");
    }
    println!("ACCEPTANCE 4 analytic identities, oddness, and amplitude bound: PASS");
}

#[test]
fn acceptance_5_thermal_equilibrium_and_first_order_convergence() {
    let params = ThermalParameters::default();

    // Worked example: 4000 N of lateral force sliding at 20 m/s with a
    // 0.05 rad slip angle dissipates |Fy V tan(alpha)| close to 4 kW and
    // must settle 20 K above ambient.
    let (slip_vx, slip_vy) = slip_velocities(20.0, 20.0, 0.05);
    let power = frictional_power(0.0, 4000.0, slip_vx, slip_vy);
    let ambient = 25.0;
    let target = equilibrium_temperature(&params, ambient, power);
    assert!((target - ambient - 20.0).abs() < 0.2, "worked example target {target}");
    let mut temp = ambient;
    for _ in 0..400 {
        temp = surface_temperature_step(&params, temp, ambient, power, 1.0).unwrap();
    }
    assert!(
        (temp - target).abs() <= 0.1,
        "settled {temp} C vs equilibrium {target} C"
    );

    // Richardson ratio against a varying power profile: halving the step
    // must roughly halve the integration error.
    let integrate = |dt: f64| {
        let steps = (30.0 / dt).round() as usize;
        let mut temp = ambient;
        for i in 0..steps {
            let t = i as f64 * dt;
            let p = 3000.0 + 1500.0 * (0.3 * t).sin();
            temp = surface_temperature_step(&params, temp, ambient, p, dt).unwrap();
        }
        temp
    };
    let coarse = integrate(0.5);
    let medium = integrate(0.25);
    let fine = integrate(0.125);
    let ratio = (coarse - medium).abs() / (medium - fine).abs();
    assert!(
        (1.8..=2.2).contains(&ratio),
        "Richardson ratio {ratio} outside the first-order band"
    );
    println!("ACCEPTANCE 5 thermal equilibrium and first-order convergence: PASS");
}

#[test]
fn acceptance_6_rnn_gradient_and_held_out_accuracy() {
    let params = ThermalParameters::default();
    let series = [series_from_samples(&synthetic_thermal_series(
        &params, 0, 120.0, 1.0,
    ))];
    let (mut model, _) = rnn_train(
        &series,
        &TrainOptions {
            epochs: 1,
            ..TrainOptions::default()
        },
    )
    .unwrap();
    let worst = gradient_check(&mut model, &series, 50, 1e-6, 9).unwrap();
    assert!(worst < 1e-5, "worst relative gradient error {worst}");

    let train: Vec<_> = (0..6)
        .map(|seed| series_from_samples(&synthetic_thermal_series(&params, seed, 600.0, 2.0)))
        .collect();
    let held_out = series_from_samples(&synthetic_thermal_series(&params, 9, 600.0, 2.0));
    let (model, _) = rnn_train(&train, &TrainOptions::default()).unwrap();
    let rms = prediction_rms(&model, &held_out).unwrap();
    assert!(rms <= 2.0, "held-out rms {rms} C");
    println!("ACCEPTANCE 6 gradient check and held-out temperature accuracy: PASS");
}

#[test]
fn acceptance_7_controller_logic_and_friction_circle() {
    // Exhaustive sign table for the braked wheel choice.
    let rows = [
        (1.0, 1.0, -1.0, Some(BrakedWheel::FrontLeft)),
        (1.0, -1.0, 1.0, Some(BrakedWheel::RearRight)),
        (-1.0, 1.0, -1.0, Some(BrakedWheel::RearLeft)),
        (-1.0, -1.0, 1.0, Some(BrakedWheel::FrontRight)),
        (1.0, 1.0, 1.0, None),
        (1.0, -1.0, -1.0, None),
        (-1.0, 1.0, 1.0, None),
        (-1.0, -1.0, -1.0, None),
    ];
    for (gamma_des, sliding, moment, expected) in rows {
        assert_eq!(
            select_braked_wheel(gamma_des, sliding, moment),
            expected,
            "row ({gamma_des}, {sliding}, {moment})"
        );
    }
    for zeroed in [
        (0.0, 1.0, -1.0),
        (1.0, 0.0, -1.0),
        (1.0, 1.0, 0.0),
        (0.0, 0.0, 0.0),
    ] {
        assert_eq!(select_braked_wheel(zeroed.0, zeroed.1, zeroed.2), None);
    }

    // Friction circle over every shipped maneuver, controller on and off.
    let params = VehicleParameters::default();
    let nominal = TireSetup::uniform(synth::table_truth(), 250.0, 8.0, 25.0);
    let degraded = TireSetup::uniform(synth::table_truth(), 160.0, 4.8, 120.0);
    let config = EscConfig::default();
    let mut specs = vec![
        (ManeuverSpec::default(), true),
        (ManeuverSpec::default(), false),
        (
            ManeuverSpec {
                kind: ManeuverKind::StepSteer,
                hand_wheel_amplitude_deg: 90.0,
                ..ManeuverSpec::default()
            },
            true,
        ),
        (
            ManeuverSpec {
                kind: ManeuverKind::StraightBrake,
                ..ManeuverSpec::default()
            },
            false,
        ),
    ];
    for amplitude in [80.0, 180.0, 240.0] {
        specs.push((
            ManeuverSpec {
                hand_wheel_amplitude_deg: amplitude,
                ..ManeuverSpec::default()
            },
            true,
        ));
    }
    for (spec, esc_on) in &specs {
        for setup in [&nominal, &degraded] {
            let result =
                run_maneuver(spec, &params, setup, &config, *esc_on, &setup.tree).unwrap();
            assert!(
                result.max_friction_utilization <= 1.001,
                "utilization {} on {:?} esc={}",
                result.max_friction_utilization,
                spec.kind,
                esc_on
            );
        }
    }

    // Reaching law: on the linear bicycle plant the sliding variable must
    // decay at the configured gain.
    let reference = BicycleReference {
        params,
        front_stiffness: 120_000.0,
        rear_stiffness: 110_000.0,
        friction: 1.0,
    };
    let (cf, cr) = (reference.front_stiffness, reference.rear_stiffness);
    let (lf, lr) = (params.front_axle_to_cg_m, params.rear_axle_to_cg_m);
    let speed = 20.0;
    let angle = 0.03;
    let desired = reference.desired_yaw_rate(speed, angle);
    let mut yaw_rate = desired + 0.25;
    let mut lateral_velocity = (cf * angle
        - (cf * lf - cr * lr) * desired / speed
        - params.mass_kg * speed * desired)
        * speed
        / (cf + cr);
    let dt = 1e-3;
    let mut times = Vec::new();
    let mut logs = Vec::new();
    for step in 0..1200 {
        let t = step as f64 * dt;
        let front_slip = angle - (lateral_velocity + lf * yaw_rate) / speed;
        let rear_slip = -(lateral_velocity - lr * yaw_rate) / speed;
        let front_force = cf * front_slip;
        let rear_force = cr * rear_slip;
        let sliding = sliding_surface(yaw_rate, desired);
        let moment =
            desired_yaw_moment(&params, front_force, rear_force, sliding, 0.0, angle, &config);
        if (0.2..=1.0).contains(&t) {
            times.push(t);
            logs.push(sliding.abs().ln());
        }
        let yaw_acc = (lf * front_force * angle.cos() - lr * rear_force + moment)
            / params.yaw_inertia_kgm2;
        let lateral_acc = (front_force * angle.cos() + rear_force) / params.mass_kg;
        yaw_rate += dt * yaw_acc;
        lateral_velocity += dt * (lateral_acc - yaw_rate * speed);
    }
    let line = polyfit(&times, &logs, 1).unwrap();
    let decay = -line[0];
    assert!(
        (decay / config.sliding_gain_per_s - 1.0).abs() < 0.05,
        "decay {decay} vs gain {}",
        config.sliding_gain_per_s
    );
    println!("ACCEPTANCE 7 wheel table, friction circle, and reaching law: PASS");
}

#[test]
fn acceptance_8_spinout_rescue_and_adaptation_benefit() {
    let params = VehicleParameters::default();
    let nominal = TireSetup::uniform(synth::table_truth(), 250.0, 8.0, 25.0);
    let config = EscConfig::default();
    let spec = ManeuverSpec::default();

    let found = find_spinout_amplitude(&spec, &params, &nominal, &config, &nominal.tree).unwrap();
    let (amplitude, uncontrolled) = found.expect("no uncontrolled spin-out found on the ramp");
    assert!(amplitude <= 330.0);
    assert!(uncontrolled.summary.spin_out);
    assert!(uncontrolled.summary.heading_deviation_rad.abs() > std::f64::consts::FRAC_PI_2);

    let mut rescue_spec = spec;
    rescue_spec.hand_wheel_amplitude_deg = amplitude;
    let rescued =
        run_maneuver(&rescue_spec, &params, &nominal, &config, true, &nominal.tree).unwrap();
    assert!(
        !rescued.summary.spin_out,
        "controller failed to prevent the {amplitude} deg spin-out"
    );

    let degraded = TireSetup::uniform(synth::table_truth(), 160.0, 4.8, 120.0);
    let compare_spec = ManeuverSpec {
        hand_wheel_amplitude_deg: 80.0,
        ..ManeuverSpec::default()
    };
    let start = Instant::now();
    let report =
        compare_adaptive_vs_fixed(&compare_spec, &params, &degraded, &config, &degraded.tree)
            .unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        report.yaw_rate_rms_delta < 0.0,
        "yaw tracking delta {}",
        report.yaw_rate_rms_delta
    );
    assert!(
        report.peak_sideslip_delta < 0.0,
        "sideslip delta {}",
        report.peak_sideslip_delta
    );
    assert!(
        report.intervention_delta < 0,
        "intervention delta {}",
        report.intervention_delta
    );
    assert!(
        report.speed_loss_delta < 0.0,
        "speed loss delta {}",
        report.speed_loss_delta
    );
    assert!(elapsed < 30.0, "compare run took {elapsed} s");
    println!("ACCEPTANCE 8 spin-out rescue and adaptive-reference benefit: PASS");
}
