//! Staged identification of a full coefficient tree from slip sweeps.
//!
//! The pipeline runs five stages:
//!
//! 1. Curve shape: one six-coefficient fit (a3, a4, a1, a2, C, E) at the
//!    measured condition closest to the reference. C and E are frozen from
//!    here on; they describe the curve family, not the tire state.
//! 2. Per condition: a four-coefficient fit (a3, a4, a1, a2) for every
//!    distinct (pressure, tread, temperature) cell across its load sweep.
//! 3. Pressure trends: per (tread, temperature) pair, a3 fitted quadratic
//!    and a4 linear in normalized pressure; grip coefficients averaged,
//!    since inflation moves the contact patch shape, not the compound.
//! 4. Tread trends: per temperature, the pressure-trend coefficients
//!    fitted as polynomials of normalized tread wear.
//! 5. Temperature scaling: stiffness and grip ratios against the
//!    reference-temperature slice, fitted quadratic in normalized
//!    temperature.
//!
//! With noise-free data from any tree in the representable class the
//! staged result is exact to solver precision, because each stage solves
//! for a projection the class reproduces. A final joint refinement over
//! every coefficient at once tightens the noisy case.

use crate::adapt::{AdaptedMfCoefficients, LinPoly, QuadPoly, TireConditions};
use crate::error::{Error, Result};
use crate::fit::nlls::{nlls_solve, FitOptions, FitProblem, FitStage};
use crate::fit::{axis_levels, polyfit, same_level, AxisLevels, SweepObservation};
use crate::mf::{self, BaseMfCoefficients, TireForceState};
use crate::textio::format_f64;

/// How a sweep data set should be reduced to a coefficient tree.
#[derive(Debug, Clone)]
pub struct PipelineOptions {
    /// Conditions the polynomial arguments are normalized against.
    pub reference: TireConditions,
    /// Temperature span used to normalize the temperature argument, C.
    pub temperature_span_c: f64,
    /// Solver settings shared by every nonlinear stage.
    pub fit: FitOptions,
    /// Run the joint refinement pass after the staged fit.
    pub refine: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            reference: super::synth::reference_conditions(),
            temperature_span_c: super::synth::TEMPERATURE_SPAN_C,
            fit: FitOptions::default(),
            refine: true,
        }
    }
}

/// Summary of one pipeline stage.
#[derive(Debug, Clone)]
pub struct StageReport {
    pub stage: FitStage,
    /// How many independent fits the stage ran.
    pub cells: usize,
    /// Free coefficients per fit.
    pub coefficients: usize,
    /// Root mean square residual across the stage's fits. Force stages
    /// report newtons; trend stages report the unit of the trended
    /// coefficient.
    pub residual_rms: f64,
    /// Largest iteration count any fit in the stage needed.
    pub iterations: usize,
}

/// Everything the pipeline produced.
#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub staged_tree: AdaptedMfCoefficients,
    pub refined_tree: Option<AdaptedMfCoefficients>,
    pub stages: Vec<StageReport>,
    pub observation_count: usize,
    /// Force RMS of the staged tree over the input data, N.
    pub staged_force_rms: f64,
    /// Force RMS of the refined tree over the input data, N.
    pub refined_force_rms: Option<f64>,
}

impl PipelineReport {
    /// The refined tree when refinement ran, otherwise the staged tree.
    #[must_use]
    pub fn best_tree(&self) -> &AdaptedMfCoefficients {
        self.refined_tree.as_ref().unwrap_or(&self.staged_tree)
    }

    #[must_use]
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("observations = {}\n", self.observation_count));
        for s in &self.stages {
            out.push_str(&format!(
                "stage = {} | fits = {} | coefficients = {} | rms = {} | iterations = {}\n",
                s.stage.label(),
                s.cells,
                s.coefficients,
                format_f64(s.residual_rms),
                s.iterations,
            ));
        }
        out.push_str(&format!(
            "staged force rms_n = {}\n",
            format_f64(self.staged_force_rms)
        ));
        if let Some(rms) = self.refined_force_rms {
            out.push_str(&format!("refined force rms_n = {}\n", format_f64(rms)));
        }
        out
    }
}

/// Force RMS of a tree against measured observations, N.
pub fn tree_force_rms(
    tree: &AdaptedMfCoefficients,
    observations: &[SweepObservation],
) -> Result<f64> {
    let mut sq = 0.0;
    for o in observations {
        let base = tree.to_base(&o.conditions)?;
        let model = mf::lateral_force(
            &base,
            &TireForceState::new(o.slip_angle_rad, o.conditions.normal_load_n)?,
        )?;
        sq += (model - o.lateral_force_n).powi(2);
    }
    Ok((sq / observations.len() as f64).sqrt())
}

const BOUNDS_A3: (f64, f64) = (1e3, 1e7);
const BOUNDS_A4: (f64, f64) = (1e2, 1e6);
const BOUNDS_A1: (f64, f64) = (-1e-3, 0.0);
const BOUNDS_A2: (f64, f64) = (0.1, 3.0);
const BOUNDS_C: (f64, f64) = (1.05, 1.95);
const BOUNDS_E: (f64, f64) = (-10.0, 0.99);

/// One (pressure, tread, temperature) cell and its load sweep.
#[derive(Debug, Clone)]
struct Cell {
    pressure_kpa: f64,
    tread_depth_mm: f64,
    surface_temp_c: f64,
    observations: Vec<SweepObservation>,
}

/// Stage-two output for one cell.
#[derive(Debug, Clone)]
struct CellFit {
    x: f64,
    y: f64,
    z: f64,
    a3: f64,
    a4: f64,
    a1: f64,
    a2: f64,
}

/// Stage-three output for one (tread, temperature) pair.
#[derive(Debug, Clone)]
struct PressureTrend {
    y: f64,
    z: f64,
    /// a3 over normalized pressure, highest power first.
    amp_x: [f64; 3],
    /// a4 over normalized pressure, highest power first.
    load_x: [f64; 2],
    a1_mean: f64,
    a2_mean: f64,
}

/// Stage-four output for one temperature level.
#[derive(Debug, Clone)]
struct TreadSlice {
    z: f64,
    amplitude: [QuadPoly; 3],
    load: [QuadPoly; 2],
    grip_slope: QuadPoly,
    grip_offset: LinPoly,
}

fn split_cells(observations: &[SweepObservation]) -> Vec<Cell> {
    let mut sorted: Vec<SweepObservation> = observations.to_vec();
    sorted.sort_by(|a, b| {
        a.conditions
            .pressure_kpa
            .total_cmp(&b.conditions.pressure_kpa)
            .then(a.conditions.tread_depth_mm.total_cmp(&b.conditions.tread_depth_mm))
            .then(a.conditions.surface_temp_c.total_cmp(&b.conditions.surface_temp_c))
    });
    let mut cells: Vec<Cell> = Vec::new();
    for obs in sorted {
        let matches = cells.last().is_some_and(|c| {
            same_level(c.pressure_kpa, obs.conditions.pressure_kpa)
                && same_level(c.tread_depth_mm, obs.conditions.tread_depth_mm)
                && same_level(c.surface_temp_c, obs.conditions.surface_temp_c)
        });
        if matches {
            cells.last_mut().unwrap().observations.push(obs);
        } else {
            cells.push(Cell {
                pressure_kpa: obs.conditions.pressure_kpa,
                tread_depth_mm: obs.conditions.tread_depth_mm,
                surface_temp_c: obs.conditions.surface_temp_c,
                observations: vec![obs],
            });
        }
    }
    cells
}

fn normalized(cond_p: f64, cond_d: f64, cond_t: f64, options: &PipelineOptions) -> (f64, f64, f64) {
    let r = &options.reference;
    (
        (cond_p - r.pressure_kpa) / r.pressure_kpa,
        (cond_d - r.tread_depth_mm) / r.tread_depth_mm,
        (cond_t - r.surface_temp_c) / options.temperature_span_c,
    )
}

/// Slope and peak based starting point for (a3, a4, a1, a2) from one
/// cell's load sweep.
fn heuristic_load_coefficients(cell: &Cell) -> (f64, f64, f64, f64) {
    let mut by_load: Vec<(f64, Vec<SweepObservation>)> = Vec::new();
    let mut sorted = cell.observations.clone();
    sorted.sort_by(|a, b| a.conditions.normal_load_n.total_cmp(&b.conditions.normal_load_n));
    for obs in sorted {
        let fz = obs.conditions.normal_load_n;
        if by_load.last().is_some_and(|(l, _)| same_level(*l, fz)) {
            by_load.last_mut().unwrap().1.push(obs);
        } else {
            by_load.push((fz, vec![obs]));
        }
    }

    // Regression through the origin over the near-linear slip range gives
    // the stiffness at each load; its maximum over load sits at Fz = a4
    // where the sine-of-arctangent factor peaks.
    let linear_range = 3.5_f64.to_radians();
    let mut best_slope = 0.0;
    let mut best_load = 4000.0;
    let mut mu_points: Vec<(f64, f64)> = Vec::new();
    for (fz, group) in &by_load {
        let mut num = 0.0;
        let mut den = 0.0;
        let mut peak_force: f64 = 0.0;
        for o in group {
            if o.slip_angle_rad.abs() <= linear_range {
                num += o.slip_angle_rad * o.lateral_force_n;
                den += o.slip_angle_rad * o.slip_angle_rad;
            }
            peak_force = peak_force.max(o.lateral_force_n.abs());
        }
        if den > 0.0 {
            let slope = num / den;
            if slope > best_slope {
                best_slope = slope;
                best_load = *fz;
            }
        }
        if peak_force > 0.0 && *fz > 0.0 {
            mu_points.push((*fz, peak_force / fz));
        }
    }
    let a3 = if best_slope > 0.0 { best_slope } else { 50_000.0 };
    let a4 = best_load;

    let (mut a1, mut a2) = (-2.0e-5, 1.0);
    if mu_points.len() >= 2 {
        let xs: Vec<f64> = mu_points.iter().map(|(fz, _)| *fz).collect();
        let ys: Vec<f64> = mu_points.iter().map(|(_, mu)| *mu).collect();
        if let Ok(line) = polyfit(&xs, &ys, 1) {
            a1 = line[0];
            a2 = line[1];
        }
    } else if let Some((fz, mu)) = mu_points.first() {
        a2 = mu + 2.0e-5 * fz;
    }

    let a3 = a3.clamp(BOUNDS_A3.0, BOUNDS_A3.1);
    let a4 = a4.clamp(BOUNDS_A4.0, BOUNDS_A4.1);
    let mut a1 = a1.clamp(BOUNDS_A1.0, BOUNDS_A1.1);
    let mut a2 = a2.clamp(BOUNDS_A2.0, BOUNDS_A2.1);
    // Keep the grip bracket clearly positive at the heaviest measured load
    // so the starting point is evaluable everywhere in the cell.
    let max_load = by_load.last().map_or(4000.0, |(fz, _)| *fz);
    a2 = a2.max(0.2);
    a1 = a1.max((0.2 - a2) / max_load);
    (a3, a4, a1, a2)
}

fn cell_residuals(
    observations: &[SweepObservation],
    base: &BaseMfCoefficients,
) -> Result<Vec<f64>> {
    observations
        .iter()
        .map(|o| {
            let model = mf::lateral_force(
                base,
                &TireForceState::new(o.slip_angle_rad, o.conditions.normal_load_n)?,
            )?;
            Ok(model - o.lateral_force_n)
        })
        .collect()
}

/// Stage one: six-coefficient fit at the cell nearest the reference.
fn fit_curve_shape(
    cells: &[Cell],
    options: &PipelineOptions,
) -> Result<(f64, f64, StageReport)> {
    let anchor = cells
        .iter()
        .min_by(|a, b| {
            let da = {
                let (x, y, z) = normalized(a.pressure_kpa, a.tread_depth_mm, a.surface_temp_c, options);
                x * x + y * y + z * z
            };
            let db = {
                let (x, y, z) = normalized(b.pressure_kpa, b.tread_depth_mm, b.surface_temp_c, options);
                x * x + y * y + z * z
            };
            da.total_cmp(&db)
        })
        .expect("cell list is never empty here");

    let (a3, a4, a1, a2) = heuristic_load_coefficients(anchor);
    let problem = FitProblem::new(
        anchor.observations.clone(),
        FitStage::CurveShape,
        vec![a3, a4, a1, a2, 1.3, -1.0],
    )
    .with_bounds(vec![BOUNDS_A3, BOUNDS_A4, BOUNDS_A1, BOUNDS_A2, BOUNDS_C, BOUNDS_E]);
    let result = nlls_solve(
        &problem,
        |obs, theta| {
            let base = BaseMfCoefficients::new(
                theta[2], theta[3], theta[0], theta[1], theta[4], theta[5], 0.0,
            )?;
            cell_residuals(obs, &base)
        },
        &options.fit,
    )?;
    let report = StageReport {
        stage: FitStage::CurveShape,
        cells: 1,
        coefficients: 6,
        residual_rms: result.residual_rms,
        iterations: result.iterations,
    };
    Ok((result.coefficients[4], result.coefficients[5], report))
}

/// Stage two: four-coefficient fit per condition cell, shared C and E.
fn fit_cells(
    cells: &[Cell],
    shape_c: f64,
    curvature_e: f64,
    options: &PipelineOptions,
) -> Result<(Vec<CellFit>, StageReport)> {
    let mut fits = Vec::with_capacity(cells.len());
    let mut sq_sum = 0.0;
    let mut n_sum = 0usize;
    let mut max_iters = 0;
    for cell in cells {
        let (a3, a4, a1, a2) = heuristic_load_coefficients(cell);
        let problem = FitProblem::new(
            cell.observations.clone(),
            FitStage::PerCondition,
            vec![a3, a4, a1, a2],
        )
        .with_bounds(vec![BOUNDS_A3, BOUNDS_A4, BOUNDS_A1, BOUNDS_A2]);
        let result = nlls_solve(
            &problem,
            |obs, theta| {
                let base = BaseMfCoefficients::new(
                    theta[2], theta[3], theta[0], theta[1], shape_c, curvature_e, 0.0,
                )?;
                cell_residuals(obs, &base)
            },
            &options.fit,
        )?;
        let (x, y, z) = normalized(cell.pressure_kpa, cell.tread_depth_mm, cell.surface_temp_c, options);
        sq_sum += result.residual_rms.powi(2) * cell.observations.len() as f64;
        n_sum += cell.observations.len();
        max_iters = max_iters.max(result.iterations);
        fits.push(CellFit {
            x,
            y,
            z,
            a3: result.coefficients[0],
            a4: result.coefficients[1],
            a1: result.coefficients[2],
            a2: result.coefficients[3],
        });
    }
    let report = StageReport {
        stage: FitStage::PerCondition,
        cells: cells.len(),
        coefficients: 4,
        residual_rms: (sq_sum / n_sum as f64).sqrt(),
        iterations: max_iters,
    };
    Ok((fits, report))
}

fn group_by_level<T: Clone>(items: &[T], key: impl Fn(&T) -> f64) -> Vec<(f64, Vec<T>)> {
    let mut sorted: Vec<T> = items.to_vec();
    sorted.sort_by(|a, b| key(a).total_cmp(&key(b)));
    let mut groups: Vec<(f64, Vec<T>)> = Vec::new();
    for item in sorted {
        let k = key(&item);
        if groups.last().is_some_and(|(g, _)| same_level(*g, k)) {
            groups.last_mut().unwrap().1.push(item);
        } else {
            groups.push((k, vec![item]));
        }
    }
    groups
}

fn trend_rms(points: &[(f64, f64)], coeffs: &[f64]) -> f64 {
    let sq: f64 = points
        .iter()
        .map(|(x, y)| {
            let model: f64 = coeffs.iter().fold(0.0, |acc, c| acc * x + c);
            (model - y).powi(2)
        })
        .sum();
    (sq / points.len() as f64).sqrt()
}

/// Stage three: pressure trends per (tread, temperature) pair.
fn fit_pressure_trends(
    cell_fits: &[CellFit],
) -> Result<(Vec<PressureTrend>, StageReport)> {
    let mut trends = Vec::new();
    let mut worst_rms = 0.0f64;
    for (y, at_tread) in group_by_level(cell_fits, |c| c.y) {
        for (z, group) in group_by_level(&at_tread, |c| c.z) {
            let xs: Vec<f64> = group.iter().map(|c| c.x).collect();
            let distinct = group_by_level(&xs, |x| *x).len();
            if distinct < 3 {
                return Err(Error::UnderSampledAxis {
                    axis: "pressure",
                    found: distinct,
                    needed: 3,
                });
            }
            let a3s: Vec<f64> = group.iter().map(|c| c.a3).collect();
            let a4s: Vec<f64> = group.iter().map(|c| c.a4).collect();
            let amp = polyfit(&xs, &a3s, 2)?;
            let load = polyfit(&xs, &a4s, 1)?;
            // Report the worst a3 trend misfit relative to its own scale so
            // the number stays meaningful across tires.
            let points: Vec<(f64, f64)> = xs.iter().copied().zip(a3s.iter().copied()).collect();
            let scale = a3s.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
            worst_rms = worst_rms.max(trend_rms(&points, &amp) / scale);
            let n = group.len() as f64;
            trends.push(PressureTrend {
                y,
                z,
                amp_x: [amp[0], amp[1], amp[2]],
                load_x: [load[0], load[1]],
                a1_mean: group.iter().map(|c| c.a1).sum::<f64>() / n,
                a2_mean: group.iter().map(|c| c.a2).sum::<f64>() / n,
            });
        }
    }
    let report = StageReport {
        stage: FitStage::PressureTrend,
        cells: trends.len(),
        coefficients: 7,
        residual_rms: worst_rms,
        iterations: 0,
    };
    Ok((trends, report))
}

/// Stage four: tread trends per temperature level.
fn fit_tread_trends(trends: &[PressureTrend]) -> Result<(Vec<TreadSlice>, StageReport)> {
    let mut slices = Vec::new();
    let mut worst_rms = 0.0f64;
    for (z, group) in group_by_level(trends, |t| t.z) {
        let ys: Vec<f64> = group.iter().map(|t| t.y).collect();
        let distinct = group_by_level(&ys, |y| *y).len();
        if distinct < 3 {
            return Err(Error::UnderSampledAxis {
                axis: "tread depth",
                found: distinct,
                needed: 3,
            });
        }
        // Misfits are tracked relative to each coefficient's own scale;
        // stiffness rows are in N/rad while grip rows are near unity.
        let mut quad_of = |values: Vec<f64>| -> Result<QuadPoly> {
            let c = polyfit(&ys, &values, 2)?;
            let points: Vec<(f64, f64)> = ys.iter().copied().zip(values.iter().copied()).collect();
            let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
            worst_rms = worst_rms.max(trend_rms(&points, &c) / scale);
            Ok(QuadPoly { c2: c[0], c1: c[1], c0: c[2] })
        };
        let amplitude = [
            quad_of(group.iter().map(|t| t.amp_x[0]).collect())?,
            quad_of(group.iter().map(|t| t.amp_x[1]).collect())?,
            quad_of(group.iter().map(|t| t.amp_x[2]).collect())?,
        ];
        let load = [
            quad_of(group.iter().map(|t| t.load_x[0]).collect())?,
            quad_of(group.iter().map(|t| t.load_x[1]).collect())?,
        ];
        let grip_slope = quad_of(group.iter().map(|t| t.a1_mean).collect())?;
        let a2s: Vec<f64> = group.iter().map(|t| t.a2_mean).collect();
        let line = polyfit(&ys, &a2s, 1)?;
        let grip_offset = LinPoly { c1: line[0], c0: line[1] };
        slices.push(TreadSlice {
            z,
            amplitude,
            load,
            grip_slope,
            grip_offset,
        });
    }
    let report = StageReport {
        stage: FitStage::TreadTrend,
        cells: slices.len(),
        coefficients: 20,
        residual_rms: worst_rms,
        iterations: 0,
    };
    Ok((slices, report))
}

/// Stage five: temperature scaling polynomials from stiffness and grip
/// ratios against the slice nearest the reference temperature.
fn fit_temperature_scaling(
    cell_fits: &[CellFit],
    reference_load_n: f64,
) -> Result<(QuadPoly, QuadPoly, f64, StageReport)> {
    let by_temp = group_by_level(cell_fits, |c| c.z);
    if by_temp.len() < 3 {
        return Err(Error::UnderSampledAxis {
            axis: "temperature",
            found: by_temp.len(),
            needed: 3,
        });
    }
    let z_ref = by_temp
        .iter()
        .map(|(z, _)| *z)
        .min_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap();
    let reference_cells: &[CellFit] = &by_temp
        .iter()
        .find(|(z, _)| same_level(*z, z_ref))
        .unwrap()
        .1;

    let find_mate = |cells: &[CellFit], x: f64, y: f64| -> Option<CellFit> {
        cells
            .iter()
            .find(|c| same_level(c.x, x) && same_level(c.y, y))
            .cloned()
    };

    let mut stiff_points: Vec<(f64, f64)> = Vec::new();
    let mut grip_points: Vec<(f64, f64)> = Vec::new();
    for (z, cells) in &by_temp {
        let mut stiff_sum = 0.0;
        let mut grip_sum = 0.0;
        let mut count = 0.0;
        for cell in cells {
            let Some(mate) = find_mate(reference_cells, cell.x, cell.y) else {
                continue;
            };
            stiff_sum += cell.a3 / mate.a3;
            grip_sum += (cell.a1 * reference_load_n + cell.a2)
                / (mate.a1 * reference_load_n + mate.a2);
            count += 1.0;
        }
        if count == 0.0 {
            return Err(Error::UnderSampledAxis {
                axis: "temperature",
                found: 1,
                needed: 3,
            });
        }
        stiff_points.push((*z, stiff_sum / count));
        grip_points.push((*z, grip_sum / count));
    }

    let fit_quad = |points: &[(f64, f64)]| -> Result<(QuadPoly, f64)> {
        let xs: Vec<f64> = points.iter().map(|(z, _)| *z).collect();
        let ys: Vec<f64> = points.iter().map(|(_, r)| *r).collect();
        let c = polyfit(&xs, &ys, 2)?;
        Ok((
            QuadPoly { c2: c[0], c1: c[1], c0: c[2] },
            trend_rms(points, &c),
        ))
    };
    let (stiffness_temp, rms_a) = fit_quad(&stiff_points)?;
    let (grip_temp, rms_b) = fit_quad(&grip_points)?;
    let report = StageReport {
        stage: FitStage::TemperatureTrend,
        cells: by_temp.len(),
        coefficients: 6,
        residual_rms: rms_a.max(rms_b),
        iterations: 0,
    };
    Ok((stiffness_temp, grip_temp, z_ref, report))
}

/// Checks the fitted tree is evaluable over the hull of the measured
/// conditions (fits are only trusted where data constrained them).
fn validate_over_hull(tree: &AdaptedMfCoefficients, levels: &AxisLevels) -> Result<()> {
    let span = |v: &[f64]| (v[0], v[v.len() - 1]);
    let (p_lo, p_hi) = span(&levels.pressures_kpa);
    let (d_lo, d_hi) = span(&levels.tread_depths_mm);
    let (t_lo, t_hi) = span(&levels.surface_temps_c);
    let (f_lo, f_hi) = span(&levels.normal_loads_n);
    const N: usize = 5;
    let at = |(lo, hi): (f64, f64), i: usize| lo + (hi - lo) * i as f64 / N as f64;
    for i in 0..=N {
        for j in 0..=N {
            for k in 0..=N {
                for &load in &[f_lo, f_hi] {
                    let cond = TireConditions {
                        pressure_kpa: at((p_lo, p_hi), i),
                        tread_depth_mm: at((d_lo, d_hi), j),
                        surface_temp_c: at((t_lo, t_hi), k),
                        normal_load_n: load,
                    };
                    tree.to_base(&cond)?;
                }
            }
        }
    }
    Ok(())
}

// Joint refinement parameter vector layout. The constant terms of both
// temperature polynomials stay frozen at their staged values: scaling all
// amplitude rows up while scaling the temperature polynomial down leaves
// every prediction unchanged, so freeing those two terms would add flat
// directions without adding expressiveness.
//
//  0..9   stiffness amplitude rows, (c2, c1, c0) each
//  9..15  stiffness load rows, (c2, c1, c0) each
// 15..17  stiffness temperature (c2, c1)
// 17..20  grip slope (c2, c1, c0)
// 20..22  grip offset (c1, c0)
// 22..24  grip temperature (c2, c1)
// 24      shape C
// 25      curvature E
const REFINE_PARAMS: usize = 26;

fn pack_tree(tree: &AdaptedMfCoefficients) -> Vec<f64> {
    let mut theta = Vec::with_capacity(REFINE_PARAMS);
    for q in &tree.stiffness_amplitude {
        theta.extend([q.c2, q.c1, q.c0]);
    }
    for q in &tree.stiffness_load {
        theta.extend([q.c2, q.c1, q.c0]);
    }
    theta.extend([tree.stiffness_temp.c2, tree.stiffness_temp.c1]);
    theta.extend([tree.grip_slope.c2, tree.grip_slope.c1, tree.grip_slope.c0]);
    theta.extend([tree.grip_offset.c1, tree.grip_offset.c0]);
    theta.extend([tree.grip_temp.c2, tree.grip_temp.c1]);
    theta.extend([tree.shape_c, tree.curvature_e]);
    theta
}

fn unpack_tree(theta: &[f64], template: &AdaptedMfCoefficients) -> AdaptedMfCoefficients {
    let quad = |i: usize| QuadPoly { c2: theta[i], c1: theta[i + 1], c0: theta[i + 2] };
    AdaptedMfCoefficients {
        stiffness_amplitude: [quad(0), quad(3), quad(6)],
        stiffness_load: [quad(9), quad(12)],
        stiffness_temp: QuadPoly {
            c2: theta[15],
            c1: theta[16],
            c0: template.stiffness_temp.c0,
        },
        grip_slope: quad(17),
        grip_offset: LinPoly { c1: theta[20], c0: theta[21] },
        grip_temp: QuadPoly {
            c2: theta[22],
            c1: theta[23],
            c0: template.grip_temp.c0,
        },
        shape_c: theta[24],
        curvature_e: theta[25],
        offset_sv: template.offset_sv,
        reference: template.reference,
        temperature_span_c: template.temperature_span_c,
    }
}

fn refine_jointly(
    staged: &AdaptedMfCoefficients,
    observations: &[SweepObservation],
    options: &PipelineOptions,
) -> Result<(AdaptedMfCoefficients, StageReport)> {
    let mut bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); REFINE_PARAMS];
    bounds[24] = BOUNDS_C;
    bounds[25] = BOUNDS_E;
    let problem = FitProblem::new(
        observations.to_vec(),
        FitStage::JointRefinement,
        pack_tree(staged),
    )
    .with_bounds(bounds);
    let template = staged.clone();
    let result = nlls_solve(
        &problem,
        move |obs, theta| {
            let tree = unpack_tree(theta, &template);
            obs.iter()
                .map(|o| {
                    let base = tree.to_base(&o.conditions)?;
                    let model = mf::lateral_force(
                        &base,
                        &TireForceState::new(o.slip_angle_rad, o.conditions.normal_load_n)?,
                    )?;
                    Ok(model - o.lateral_force_n)
                })
                .collect()
        },
        &options.fit,
    )?;
    let report = StageReport {
        stage: FitStage::JointRefinement,
        cells: 1,
        coefficients: REFINE_PARAMS,
        residual_rms: result.residual_rms,
        iterations: result.iterations,
    };
    Ok((unpack_tree(&result.coefficients, staged), report))
}

/// Runs the full staged pipeline, optionally with joint refinement.
pub fn fit_sweeps(
    observations: &[SweepObservation],
    options: &PipelineOptions,
) -> Result<PipelineReport> {
    if observations.len() < 2 * REFINE_PARAMS {
        return Err(Error::UnderDetermined {
            observations: observations.len(),
            coefficients: REFINE_PARAMS,
        });
    }
    let levels = axis_levels(observations);
    if levels.normal_loads_n.len() < 4 {
        return Err(Error::UnderSampledAxis {
            axis: "load",
            found: levels.normal_loads_n.len(),
            needed: 4,
        });
    }

    let cells = split_cells(observations);
    let mut stages = Vec::with_capacity(6);

    let (shape_c, curvature_e, report) = fit_curve_shape(&cells, options)?;
    stages.push(report);

    let (cell_fits, report) = fit_cells(&cells, shape_c, curvature_e, options)?;
    stages.push(report);

    let (pressure_trends, report) = fit_pressure_trends(&cell_fits)?;
    stages.push(report);

    let (tread_slices, report) = fit_tread_trends(&pressure_trends)?;
    stages.push(report);

    let (stiffness_temp, grip_temp, z_ref, report) =
        fit_temperature_scaling(&cell_fits, options.reference.normal_load_n)?;
    stages.push(report);

    let base_slice = tread_slices
        .iter()
        .find(|s| same_level(s.z, z_ref))
        .expect("temperature stage grouped the same levels as the tread stage");
    let staged_tree = AdaptedMfCoefficients {
        stiffness_amplitude: base_slice.amplitude,
        stiffness_load: base_slice.load,
        stiffness_temp,
        grip_slope: base_slice.grip_slope,
        grip_offset: base_slice.grip_offset,
        grip_temp,
        shape_c,
        curvature_e,
        offset_sv: 0.0,
        reference: options.reference,
        temperature_span_c: options.temperature_span_c,
    };
    validate_over_hull(&staged_tree, &levels)?;
    let staged_force_rms = tree_force_rms(&staged_tree, observations)?;

    let (refined_tree, refined_force_rms) = if options.refine {
        let (tree, report) = refine_jointly(&staged_tree, observations, options)?;
        validate_over_hull(&tree, &levels)?;
        let rms = tree_force_rms(&tree, observations)?;
        stages.push(report);
        (Some(tree), Some(rms))
    } else {
        (None, None)
    };

    Ok(PipelineReport {
        staged_tree,
        refined_tree,
        stages,
        observation_count: observations.len(),
        staged_force_rms,
        refined_force_rms,
    })
}
