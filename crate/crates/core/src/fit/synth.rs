//! Synthetic slip sweep data with a known ground-truth coefficient tree.
//!
//! The default truth tree is calibrated so its condition sensitivities land
//! on round benchmark numbers for a worn-in summer tire:
//!
//! * +20% inflation pressure: +10% cornering stiffness at 1.5x nominal
//!   load, but reduced stiffness at 0.33x nominal load (the pressure
//!   response crosses over with load).
//! * -60% tread depth: +30% cornering stiffness, +10% peak grip.
//! * 25 C -> 90 C tread surface: -22.5% cornering stiffness, -10% grip.
//!
//! The tread and temperature factors multiply the whole stiffness or grip
//! expression, so those ratios hold at every load; only the pressure
//! response is load-dependent.

use crate::adapt::{AdaptedMfCoefficients, LinPoly, QuadPoly, TireConditions};
use crate::error::Result;
use crate::fit::SweepObservation;
use crate::mf::{self, TireForceState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Nominal single-corner load of the calibration tire, N.
pub const NOMINAL_LOAD_N: f64 = 4000.0;

// Pressure response of the truth tree, solved so the stiffness ratios hit
// +10.0% at (x = +0.2, Fz = 1.5 Fnom) and -4.0% at (x = +0.2, Fz = 0.33 Fnom).
const PRESSURE_AMP_SLOPE: f64 = 0.2885212023063915;
const PRESSURE_LOAD_SLOPE: f64 = 0.6247733757455146;

/// Conditions every scaling factor treats as neutral.
#[must_use]
pub fn reference_conditions() -> TireConditions {
    TireConditions {
        pressure_kpa: 250.0,
        tread_depth_mm: 8.0,
        surface_temp_c: 25.0,
        normal_load_n: NOMINAL_LOAD_N,
    }
}

/// Temperature span used to normalize z, degrees C (25 C .. 90 C maps to
/// z in [0, 1]).
pub const TEMPERATURE_SPAN_C: f64 = 65.0;

/// Builds the calibrated ground-truth tree described in the module docs.
#[must_use]
pub fn table_truth() -> AdaptedMfCoefficients {
    let a0 = 60_000.0;
    let l0 = NOMINAL_LOAD_N;
    // Tread factor on stiffness: 1 - 0.35 y + 0.25 y^2 (+30% at y = -0.6).
    let (g1, g2) = (-0.35, 0.25);
    // Temperature factor on stiffness: -22.5% at z = 1 (90 C).
    let stiffness_temp = QuadPoly { c2: -0.05, c1: -0.175, c0: 1.0 };
    // Grip: baseline a1 Fz + a2, tread factor 1 - y/6 (+10% at y = -0.6),
    // temperature factor -10% at z = 1.
    let (a1, a2) = (-2.0e-5, 1.10);
    let w1 = -1.0 / 6.0;
    let grip_temp = QuadPoly { c2: -0.03, c1: -0.07, c0: 1.0 };

    let tread = |scale: f64| QuadPoly { c2: scale * g2, c1: scale * g1, c0: scale };
    AdaptedMfCoefficients {
        stiffness_amplitude: [
            QuadPoly::constant(0.0),
            tread(a0 * PRESSURE_AMP_SLOPE),
            tread(a0),
        ],
        stiffness_load: [
            QuadPoly::constant(l0 * PRESSURE_LOAD_SLOPE),
            QuadPoly::constant(l0),
        ],
        stiffness_temp,
        grip_slope: QuadPoly { c2: 0.0, c1: a1 * w1, c0: a1 },
        grip_offset: LinPoly { c1: a2 * w1, c0: a2 },
        grip_temp,
        shape_c: 1.3,
        curvature_e: -1.0,
        offset_sv: 0.0,
        reference: reference_conditions(),
        temperature_span_c: TEMPERATURE_SPAN_C,
    }
}

/// Measurement grid for a synthetic rig session.
#[derive(Debug, Clone)]
pub struct SweepGrid {
    pub pressures_kpa: Vec<f64>,
    pub tread_depths_mm: Vec<f64>,
    pub surface_temps_c: Vec<f64>,
    pub normal_loads_n: Vec<f64>,
    pub slip_angles_rad: Vec<f64>,
}

impl Default for SweepGrid {
    /// 4 pressures x 3 tread depths x 3 temperatures x 5 loads x 25 slip
    /// angles = 4500 observations.
    fn default() -> Self {
        let deg = std::f64::consts::PI / 180.0;
        Self {
            pressures_kpa: vec![200.0, 250.0, 300.0, 350.0],
            tread_depths_mm: vec![8.0, 4.8, 2.4],
            surface_temps_c: vec![25.0, 57.5, 90.0],
            normal_loads_n: vec![1320.0, 2680.0, 4000.0, 5320.0, 6680.0],
            slip_angles_rad: (0..25).map(|i| (-14.0 + 28.0 * i as f64 / 24.0) * deg).collect(),
        }
    }
}

impl SweepGrid {
    #[must_use]
    pub fn len(&self) -> usize {
        self.pressures_kpa.len()
            * self.tread_depths_mm.len()
            * self.surface_temps_c.len()
            * self.normal_loads_n.len()
            * self.slip_angles_rad.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Generates slip sweeps from a truth tree, optionally with measurement
/// noise.
#[derive(Debug, Clone)]
pub struct SweepGenerator {
    pub truth: AdaptedMfCoefficients,
    pub grid: SweepGrid,
    /// Noise sigma as a fraction of each observation's force magnitude.
    /// Zero disables noise entirely.
    pub noise_fraction: f64,
    /// Additive sigma floor, N, applied only when noise is enabled.
    pub noise_floor_n: f64,
}

impl SweepGenerator {
    #[must_use]
    pub fn calibrated(noise_fraction: f64) -> Self {
        Self {
            truth: table_truth(),
            grid: SweepGrid::default(),
            noise_fraction,
            noise_floor_n: 20.0,
        }
    }

    /// Evaluates the truth tree over the grid in a fixed order
    /// (pressure, tread, temperature, load, slip angle), seeding the noise
    /// stream from `seed`. The same seed always yields the same bytes.
    pub fn generate(&self, seed: u64) -> Result<Vec<SweepObservation>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(self.grid.len());
        for &p in &self.grid.pressures_kpa {
            for &d in &self.grid.tread_depths_mm {
                for &t in &self.grid.surface_temps_c {
                    for &fz in &self.grid.normal_loads_n {
                        let cond = TireConditions::new(p, d, t, fz)?;
                        let base = self.truth.to_base(&cond)?;
                        for &alpha in &self.grid.slip_angles_rad {
                            let clean =
                                mf::lateral_force(&base, &TireForceState::new(alpha, fz)?)?;
                            let force = if self.noise_fraction > 0.0 {
                                let sigma =
                                    self.noise_fraction * clean.abs() + self.noise_floor_n;
                                clean + Normal::new(0.0, sigma).unwrap().sample(&mut rng)
                            } else {
                                clean
                            };
                            out.push(SweepObservation {
                                slip_angle_rad: alpha,
                                conditions: cond,
                                lateral_force_n: force,
                            });
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Draws a random but physically plausible truth tree. Used to exercise the
/// fitting pipeline against many shapes, not just the calibrated one.
#[must_use]
pub fn random_truth(seed: u64) -> AdaptedMfCoefficients {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1));
    let mut sample = |lo: f64, hi: f64| rng.gen_range(lo..hi);

    let a0 = sample(45_000.0, 75_000.0);
    let l0 = sample(3200.0, 5200.0);
    let amp_x1 = sample(0.15, 0.40);
    let amp_x2 = sample(-0.08, 0.08);
    let load_x1 = sample(0.35, 0.75);
    let (g1, g2) = (sample(-0.45, -0.20), sample(0.05, 0.35));
    let (c1, c2) = (sample(-0.22, -0.12), sample(-0.07, -0.01));
    let a1 = sample(-2.8e-5, -1.2e-5);
    let a2 = sample(0.95, 1.25);
    let w1 = sample(-0.25, -0.08);
    let (h1, h2) = (sample(-0.09, -0.04), sample(-0.05, -0.01));

    let tread = |scale: f64| QuadPoly { c2: scale * g2, c1: scale * g1, c0: scale };
    let tree = AdaptedMfCoefficients {
        stiffness_amplitude: [tread(a0 * amp_x2), tread(a0 * amp_x1), tread(a0)],
        stiffness_load: [QuadPoly::constant(l0 * load_x1), QuadPoly::constant(l0)],
        stiffness_temp: QuadPoly { c2, c1, c0: 1.0 },
        grip_slope: QuadPoly { c2: 0.0, c1: a1 * w1, c0: a1 },
        grip_offset: LinPoly { c1: a2 * w1, c0: a2 },
        grip_temp: QuadPoly { c2: h2, c1: h1, c0: 1.0 },
        shape_c: sample(1.15, 1.65),
        curvature_e: sample(-2.0, 0.3),
        offset_sv: 0.0,
        reference: reference_conditions(),
        temperature_span_c: TEMPERATURE_SPAN_C,
    };
    tree.validate(1.05 * 6680.0)
        .expect("sampled truth tree must be valid over the condition box");
    tree
}

/// Relative RMS disagreement in cornering stiffness and peak grip between
/// two trees over a condition/load grid.
pub fn relative_rms_over_grid(
    reference_tree: &AdaptedMfCoefficients,
    candidate: &AdaptedMfCoefficients,
    pressures: &[f64],
    treads: &[f64],
    temps: &[f64],
    loads: &[f64],
) -> Result<(f64, f64)> {
    let mut stiff_sq = 0.0;
    let mut grip_sq = 0.0;
    let mut count = 0.0;
    for &p in pressures {
        for &d in treads {
            for &t in temps {
                for &fz in loads {
                    let cond = TireConditions::new(p, d, t, fz)?;
                    let s_ref = reference_tree.cornering_stiffness(&cond)?;
                    let s_fit = candidate.cornering_stiffness(&cond)?;
                    let g_ref = reference_tree.peak_friction(&cond)?;
                    let g_fit = candidate.peak_friction(&cond)?;
                    stiff_sq += ((s_fit - s_ref) / s_ref).powi(2);
                    grip_sq += ((g_fit - g_ref) / g_ref).powi(2);
                    count += 1.0;
                }
            }
        }
    }
    Ok(((stiff_sq / count).sqrt(), (grip_sq / count).sqrt()))
}

/// `n` equally spaced values covering `[lo, hi]`.
#[must_use]
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}
