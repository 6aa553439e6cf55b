//! Coefficient identification from slip sweep measurements.
//!
//! A rig session produces lateral force sweeps over slip angle at a grid of
//! inflation pressures, tread depths, surface temperatures, and vertical
//! loads. [`pipeline::fit_sweeps`] turns such a data set into an
//! [`AdaptedMfCoefficients`](crate::adapt::AdaptedMfCoefficients) tree by
//! fitting each condition separately and then fitting polynomial trends
//! across conditions, optionally followed by one joint refinement pass over
//! all coefficients at once.
//!
//! [`synth`] generates such data sets from a known truth tree so the
//! pipeline can be validated end to end, and [`nlls`] holds the
//! Levenberg-Marquardt core shared by every stage.

pub mod nlls;
pub mod pipeline;
pub mod synth;

pub use nlls::{nlls_solve, FitOptions, FitProblem, FitResult, FitStage, Termination};
pub use pipeline::{fit_sweeps, PipelineOptions, PipelineReport, StageReport};
pub use synth::{SweepGenerator, SweepGrid};

use crate::adapt::TireConditions;
use crate::error::{Error, Result};
use crate::textio::{format_f64, CsvTable};
use std::path::Path;

/// One measured point of a slip sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepObservation {
    /// Slip angle, rad.
    pub slip_angle_rad: f64,
    /// Inflation, tread, temperature, and load the point was measured at.
    pub conditions: TireConditions,
    /// Measured lateral force, N.
    pub lateral_force_n: f64,
}

pub const SWEEP_CSV_HEADER: [&str; 6] = [
    "slip_angle_deg",
    "normal_load_n",
    "pressure_kpa",
    "tread_depth_mm",
    "surface_temp_c",
    "lateral_force_n",
];

/// Renders observations as CSV text. Slip angles are stored in degrees;
/// everything else keeps its SI unit.
#[must_use]
pub fn render_sweep_csv(observations: &[SweepObservation]) -> String {
    let mut table = CsvTable::new(&SWEEP_CSV_HEADER);
    for o in observations {
        table.push_row(vec![
            format_f64(o.slip_angle_rad.to_degrees()),
            format_f64(o.conditions.normal_load_n),
            format_f64(o.conditions.pressure_kpa),
            format_f64(o.conditions.tread_depth_mm),
            format_f64(o.conditions.surface_temp_c),
            format_f64(o.lateral_force_n),
        ]);
    }
    table.render()
}

pub fn parse_sweep_csv(text: &str) -> Result<Vec<SweepObservation>> {
    let table = CsvTable::parse(text)?;
    table.expect_header(&SWEEP_CSV_HEADER)?;
    let mut out = Vec::with_capacity(table.rows.len());
    for row in 0..table.rows.len() {
        let conditions = TireConditions::new(
            table.f64_cell(row, 2)?,
            table.f64_cell(row, 3)?,
            table.f64_cell(row, 4)?,
            table.f64_cell(row, 1)?,
        )
        .map_err(|e| Error::Parse {
            line: row + 2,
            message: e.to_string(),
        })?;
        out.push(SweepObservation {
            slip_angle_rad: table.f64_cell(row, 0)?.to_radians(),
            conditions,
            lateral_force_n: table.f64_cell(row, 5)?,
        });
    }
    Ok(out)
}

pub fn write_sweep_csv(path: &Path, observations: &[SweepObservation]) -> Result<()> {
    std::fs::write(path, render_sweep_csv(observations))?;
    Ok(())
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepObservation>> {
    parse_sweep_csv(&std::fs::read_to_string(path)?)
}

/// Distinct values found along each condition axis of a data set, sorted
/// ascending. Two values closer than one part in 1e9 (or 1e-9 absolute)
/// count as the same rig set point.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisLevels {
    pub pressures_kpa: Vec<f64>,
    pub tread_depths_mm: Vec<f64>,
    pub surface_temps_c: Vec<f64>,
    pub normal_loads_n: Vec<f64>,
}

pub(crate) fn same_level(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn distinct_sorted(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut sorted: Vec<f64> = values.collect();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut out: Vec<f64> = Vec::new();
    for v in sorted {
        if out.last().is_none_or(|&last| !same_level(last, v)) {
            out.push(v);
        }
    }
    out
}

#[must_use]
pub fn axis_levels(observations: &[SweepObservation]) -> AxisLevels {
    AxisLevels {
        pressures_kpa: distinct_sorted(observations.iter().map(|o| o.conditions.pressure_kpa)),
        tread_depths_mm: distinct_sorted(
            observations.iter().map(|o| o.conditions.tread_depth_mm),
        ),
        surface_temps_c: distinct_sorted(
            observations.iter().map(|o| o.conditions.surface_temp_c),
        ),
        normal_loads_n: distinct_sorted(observations.iter().map(|o| o.conditions.normal_load_n)),
    }
}

/// Ordinary least squares fit of a polynomial of the given degree,
/// returning coefficients highest power first.
pub fn polyfit(xs: &[f64], ys: &[f64], degree: usize) -> Result<Vec<f64>> {
    assert_eq!(xs.len(), ys.len(), "polyfit inputs must pair up");
    let terms = degree + 1;
    if xs.len() < terms {
        return Err(Error::UnderDetermined {
            observations: xs.len(),
            coefficients: terms,
        });
    }
    let design = nalgebra::DMatrix::from_fn(xs.len(), terms, |r, c| {
        xs[r].powi((degree - c) as i32)
    });
    let rhs = nalgebra::DVector::from_column_slice(ys);
    let solution = design
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|m| Error::InvalidCoefficients(format!("polynomial fit failed: {m}")))?;
    Ok(solution.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample_observations() -> Vec<SweepObservation> {
        SweepGenerator::calibrated(0.0).generate(7).unwrap()
    }

    #[test]
    fn sweep_csv_round_trips_bit_exactly() {
        let original = sample_observations();
        let text = render_sweep_csv(&original);
        let back = parse_sweep_csv(&text).unwrap();
        assert_eq!(original.len(), back.len());
        for (a, b) in original.iter().zip(&back) {
            assert_eq!(a.lateral_force_n.to_bits(), b.lateral_force_n.to_bits());
            assert_eq!(
                a.conditions.normal_load_n.to_bits(),
                b.conditions.normal_load_n.to_bits()
            );
            // Degrees round-trip through shortest-float text, radians are
            // reconstructed within one conversion rounding step.
            assert_relative_eq!(a.slip_angle_rad, b.slip_angle_rad, max_relative = 1e-15);
        }
        assert_eq!(text, render_sweep_csv(&back));
    }

    #[test]
    fn sweep_csv_rejects_wrong_header() {
        let err = parse_sweep_csv("slip_angle_deg,normal_load_n\n1,2\n").unwrap_err();
        assert!(err.to_string().contains("header"), "{err}");
    }

    #[test]
    fn sweep_csv_rejects_out_of_range_conditions() {
        let text = "slip_angle_deg,normal_load_n,pressure_kpa,tread_depth_mm,surface_temp_c,lateral_force_n\n\
                    1,4000,999,8,25,1200\n";
        let err = parse_sweep_csv(text).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn axis_levels_recovers_the_generation_grid() {
        let levels = axis_levels(&sample_observations());
        assert_eq!(levels.pressures_kpa, vec![200.0, 250.0, 300.0, 350.0]);
        assert_eq!(levels.tread_depths_mm, vec![2.4, 4.8, 8.0]);
        assert_eq!(levels.surface_temps_c, vec![25.0, 57.5, 90.0]);
        assert_eq!(
            levels.normal_loads_n,
            vec![1320.0, 2680.0, 4000.0, 5320.0, 6680.0]
        );
    }

    #[test]
    fn polyfit_recovers_exact_polynomials() {
        let xs: Vec<f64> = (0..7).map(|i| -1.0 + i as f64 * 0.4).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x * x - 1.25 * x + 0.75).collect();
        let c = polyfit(&xs, &ys, 2).unwrap();
        assert_relative_eq!(c[0], 2.5, max_relative = 1e-10);
        assert_relative_eq!(c[1], -1.25, max_relative = 1e-10);
        assert_relative_eq!(c[2], 0.75, max_relative = 1e-10);
    }

    #[test]
    fn polyfit_needs_enough_points() {
        let err = polyfit(&[1.0, 2.0], &[1.0, 2.0], 2).unwrap_err();
        assert!(matches!(err, Error::UnderDetermined { .. }));
    }
}
