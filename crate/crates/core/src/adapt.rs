//! Condition adaptation of the baseline Magic Formula coefficients.
//!
//! Inflation pressure, tread depth, and surface temperature enter as
//! normalized deviations from a stored reference condition:
//!
//! ```text
//! x = (p - p_ref) / p_ref        pressure
//! y = (d - d_ref) / d_ref        tread depth
//! z = (T - T_ref) / T_span       surface temperature
//! ```
//!
//! Cornering stiffness generalizes `a3 sin(2 atan(Fz/a4))` by letting both
//! the amplitude and the load term vary with pressure and tread, then
//! scaling the whole expression by a temperature polynomial:
//!
//! ```text
//! BCD = [ (a311 y^2 + a312 y + a313) x^2
//!       + (a321 y^2 + a322 y + a323) x
//!       + (a331 y^2 + a332 y + a333) ]
//!       * sin(2 atan(Fz / ((a411 y^2 + a412 y + a413) x
//!                        + (a421 y^2 + a422 y + a423))))
//!       * (b11 z^2 + b12 z + b13)
//! ```
//!
//! Peak grip does the same to `a1 Fz + a2`; pressure has no measurable
//! effect on grip, so that branch only sees tread and temperature:
//!
//! ```text
//! mu_max = [ (a11 y^2 + a12 y + a13) Fz + (a21 y + a22) ]
//!          * (b11 z^2 + b12 z + b13)
//! ```
//!
//! The temperature polynomial multiplies the entire bracket, so the load
//! slope and offset shift together as the tread surface heats.
//!
//! At the reference condition every polynomial argument is zero, the
//! temperature factors are 1, and the constant terms (`a333`, `a423`,
//! `a13`, `a22`) are exactly the baseline `a3`, `a4`, `a1`, `a2`.

use crate::error::{Error, Result};
use crate::mf::BaseMfCoefficients;
use crate::textio::{KvFile, KvSection};
use std::path::Path;

/// Validity box for tire conditions. Outside it the polynomials are
/// extrapolating beyond anything the fit saw.
pub const PRESSURE_RANGE_KPA: (f64, f64) = (100.0, 450.0);
pub const TREAD_RANGE_MM: (f64, f64) = (0.0, 12.0);
pub const TEMP_RANGE_C: (f64, f64) = (-20.0, 150.0);

/// Measured (or assumed) state of one tire.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TireConditions {
    /// Inflation pressure, kPa.
    pub pressure_kpa: f64,
    /// Remaining tread depth, mm.
    pub tread_depth_mm: f64,
    /// Tread surface temperature, degrees C.
    pub surface_temp_c: f64,
    /// Vertical load, N.
    pub normal_load_n: f64,
}

impl TireConditions {
    pub fn new(
        pressure_kpa: f64,
        tread_depth_mm: f64,
        surface_temp_c: f64,
        normal_load_n: f64,
    ) -> Result<Self> {
        let cond = Self {
            pressure_kpa,
            tread_depth_mm,
            surface_temp_c,
            normal_load_n,
        };
        cond.validate()?;
        Ok(cond)
    }

    pub fn validate(&self) -> Result<()> {
        for (what, value, (min, max)) in [
            ("pressure", self.pressure_kpa, PRESSURE_RANGE_KPA),
            ("tread depth", self.tread_depth_mm, TREAD_RANGE_MM),
            ("surface temperature", self.surface_temp_c, TEMP_RANGE_C),
        ] {
            if !value.is_finite() || value < min || value > max {
                return Err(Error::OutOfRange {
                    what,
                    value,
                    min,
                    max,
                });
            }
        }
        if !self.normal_load_n.is_finite() || self.normal_load_n <= 0.0 {
            return Err(Error::OutOfRange {
                what: "normal load",
                value: self.normal_load_n,
                min: f64::MIN_POSITIVE,
                max: f64::INFINITY,
            });
        }
        Ok(())
    }

    /// Clamps pressure, tread, and temperature into the validity box.
    ///
    /// Returns the clamped conditions and whether anything had to move.
    /// The load is not clamped; a nonpositive or non-finite load is an
    /// error.
    pub fn clamped(
        pressure_kpa: f64,
        tread_depth_mm: f64,
        surface_temp_c: f64,
        normal_load_n: f64,
    ) -> Result<(Self, bool)> {
        if [pressure_kpa, tread_depth_mm, surface_temp_c]
            .iter()
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("tire condition"));
        }
        let cond = Self {
            pressure_kpa: pressure_kpa.clamp(PRESSURE_RANGE_KPA.0, PRESSURE_RANGE_KPA.1),
            tread_depth_mm: tread_depth_mm.clamp(TREAD_RANGE_MM.0, TREAD_RANGE_MM.1),
            surface_temp_c: surface_temp_c.clamp(TEMP_RANGE_C.0, TEMP_RANGE_C.1),
            normal_load_n,
        };
        cond.validate()?;
        let moved = cond.pressure_kpa != pressure_kpa
            || cond.tread_depth_mm != tread_depth_mm
            || cond.surface_temp_c != surface_temp_c;
        Ok((cond, moved))
    }

    /// Same conditions at a different load.
    #[must_use]
    pub fn with_load(&self, normal_load_n: f64) -> Self {
        Self {
            normal_load_n,
            ..*self
        }
    }
}

/// Quadratic `c2 t^2 + c1 t + c0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadPoly {
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl QuadPoly {
    #[must_use]
    pub const fn constant(c0: f64) -> Self {
        Self { c2: 0.0, c1: 0.0, c0 }
    }

    #[must_use]
    pub fn eval(&self, t: f64) -> f64 {
        (self.c2 * t + self.c1) * t + self.c0
    }
}

/// Linear `c1 t + c0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinPoly {
    pub c1: f64,
    pub c0: f64,
}

impl LinPoly {
    #[must_use]
    pub fn eval(&self, t: f64) -> f64 {
        self.c1 * t + self.c0
    }
}

/// The full condition-adaptive coefficient tree.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedMfCoefficients {
    /// Stiffness amplitude rows for x^2, x^1, x^0; each quadratic in y.
    /// Row 0 holds (a311, a312, a313), row 2 holds (a331, a332, a333).
    pub stiffness_amplitude: [QuadPoly; 3],
    /// Stiffness load-term rows for x^1, x^0; each quadratic in y.
    /// Row 0 holds (a411, a412, a413), row 1 holds (a421, a422, a423).
    pub stiffness_load: [QuadPoly; 2],
    /// Stiffness temperature polynomial in z (b11, b12, b13).
    pub stiffness_temp: QuadPoly,
    /// Grip load slope, quadratic in y (a11, a12, a13). Units 1/N.
    pub grip_slope: QuadPoly,
    /// Grip offset, linear in y (a21, a22).
    pub grip_offset: LinPoly,
    /// Grip temperature polynomial in z (b11, b12, b13).
    pub grip_temp: QuadPoly,
    /// Shape factor C, shared with the baseline curve.
    pub shape_c: f64,
    /// Curvature factor E.
    pub curvature_e: f64,
    /// Vertical offset Sv, N.
    pub offset_sv: f64,
    /// Conditions at which all scaling factors equal 1.
    pub reference: TireConditions,
    /// Span used to normalize temperature deviations, degrees C.
    pub temperature_span_c: f64,
}

impl AdaptedMfCoefficients {
    /// Wraps a fixed baseline curve in a tree whose scaling factors are 1
    /// everywhere, so the adapted model ignores conditions entirely.
    #[must_use]
    pub fn from_base(
        base: &BaseMfCoefficients,
        reference: TireConditions,
        temperature_span_c: f64,
    ) -> Self {
        Self {
            stiffness_amplitude: [
                QuadPoly::constant(0.0),
                QuadPoly::constant(0.0),
                QuadPoly::constant(base.a3),
            ],
            stiffness_load: [QuadPoly::constant(0.0), QuadPoly::constant(base.a4)],
            stiffness_temp: QuadPoly::constant(1.0),
            grip_slope: QuadPoly::constant(base.a1),
            grip_offset: LinPoly { c1: 0.0, c0: base.a2 },
            grip_temp: QuadPoly::constant(1.0),
            shape_c: base.shape_c,
            curvature_e: base.curvature_e,
            offset_sv: base.offset_sv,
            reference,
            temperature_span_c,
        }
    }

    /// Normalized polynomial arguments (x, y, z) for the given conditions.
    #[must_use]
    pub fn normalized(&self, cond: &TireConditions) -> (f64, f64, f64) {
        let x = (cond.pressure_kpa - self.reference.pressure_kpa) / self.reference.pressure_kpa;
        let y =
            (cond.tread_depth_mm - self.reference.tread_depth_mm) / self.reference.tread_depth_mm;
        let z = (cond.surface_temp_c - self.reference.surface_temp_c) / self.temperature_span_c;
        (x, y, z)
    }

    fn amplitude(&self, x: f64, y: f64) -> f64 {
        (self.stiffness_amplitude[0].eval(y) * x + self.stiffness_amplitude[1].eval(y)) * x
            + self.stiffness_amplitude[2].eval(y)
    }

    fn load_term(&self, x: f64, y: f64) -> f64 {
        self.stiffness_load[0].eval(y) * x + self.stiffness_load[1].eval(y)
    }

    /// Cornering stiffness at the given conditions, N/rad.
    pub fn cornering_stiffness(&self, cond: &TireConditions) -> Result<f64> {
        cond.validate()?;
        let (x, y, z) = self.normalized(cond);
        let amplitude = self.amplitude(x, y);
        let load_term = self.load_term(x, y);
        let temp = self.stiffness_temp.eval(z);
        if amplitude <= 0.0 || load_term <= 0.0 || temp <= 0.0 {
            return Err(Error::InvalidCoefficients(format!(
                "stiffness factors not positive at p={} kPa d={} mm T={} C: \
                 amplitude {amplitude}, load term {load_term}, temperature factor {temp}",
                cond.pressure_kpa, cond.tread_depth_mm, cond.surface_temp_c
            )));
        }
        Ok(amplitude * (2.0 * (cond.normal_load_n / load_term).atan()).sin() * temp)
    }

    /// Peak friction coefficient at the given conditions.
    pub fn peak_friction(&self, cond: &TireConditions) -> Result<f64> {
        cond.validate()?;
        let (_, y, z) = self.normalized(cond);
        let bracket = self.grip_slope.eval(y) * cond.normal_load_n + self.grip_offset.eval(y);
        let temp = self.grip_temp.eval(z);
        let mu = bracket * temp;
        if temp <= 0.0 || mu <= 0.0 {
            return Err(Error::InvalidCoefficients(format!(
                "grip not positive at d={} mm T={} C load={} N: bracket {bracket}, \
                 temperature factor {temp}",
                cond.tread_depth_mm, cond.surface_temp_c, cond.normal_load_n
            )));
        }
        Ok(mu)
    }

    /// Collapses the tree at fixed conditions into baseline coefficients.
    ///
    /// The returned set reproduces [`Self::cornering_stiffness`] and
    /// [`Self::peak_friction`] at every load, because temperature scales
    /// the whole grip bracket and the stiffness amplitude rather than any
    /// load-dependent part.
    pub fn to_base(&self, cond: &TireConditions) -> Result<BaseMfCoefficients> {
        cond.validate()?;
        let (x, y, z) = self.normalized(cond);
        let stiff_temp = self.stiffness_temp.eval(z);
        let grip_temp = self.grip_temp.eval(z);
        BaseMfCoefficients::new(
            self.grip_slope.eval(y) * grip_temp,
            self.grip_offset.eval(y) * grip_temp,
            self.amplitude(x, y) * stiff_temp,
            self.load_term(x, y),
            self.shape_c,
            self.curvature_e,
            self.offset_sv,
        )
    }

    /// Checks positivity of every scaling branch over the whole condition
    /// box on a dense grid, plus validity of the curve shape parameters.
    ///
    /// Grip positivity is checked for loads up to `max_load_n`.
    pub fn validate(&self, max_load_n: f64) -> Result<()> {
        let probe = BaseMfCoefficients {
            a1: 0.0,
            a2: 1.0,
            a3: 1.0,
            a4: 1.0,
            shape_c: self.shape_c,
            curvature_e: self.curvature_e,
            offset_sv: self.offset_sv,
        };
        probe.validate()?;
        if self.temperature_span_c <= 0.0 || !self.temperature_span_c.is_finite() {
            return Err(Error::InvalidCoefficients(format!(
                "temperature span {} must be positive",
                self.temperature_span_c
            )));
        }
        self.reference.validate()?;
        const N: usize = 9;
        for i in 0..=N {
            let p = lerp(PRESSURE_RANGE_KPA, i as f64 / N as f64);
            for j in 0..=N {
                let d = lerp(TREAD_RANGE_MM, j as f64 / N as f64);
                for k in 0..=N {
                    let t = lerp(TEMP_RANGE_C, k as f64 / N as f64);
                    let cond = TireConditions {
                        pressure_kpa: p,
                        tread_depth_mm: d,
                        surface_temp_c: t,
                        normal_load_n: self.reference.normal_load_n,
                    };
                    self.cornering_stiffness(&cond)?;
                    self.peak_friction(&cond)?;
                    self.peak_friction(&cond.with_load(max_load_n))?;
                }
            }
        }
        Ok(())
    }

    #[must_use]
    pub fn to_kv(&self) -> KvFile {
        let names_amp = [
            ["a311", "a312", "a313"],
            ["a321", "a322", "a323"],
            ["a331", "a332", "a333"],
        ];
        let names_load = [["a411", "a412", "a413"], ["a421", "a422", "a423"]];

        let mut file = KvFile::new();
        let mut s = KvSection::new("stiffness_amplitude");
        for (row, names) in self.stiffness_amplitude.iter().zip(names_amp) {
            s.set_f64(names[0], row.c2);
            s.set_f64(names[1], row.c1);
            s.set_f64(names[2], row.c0);
        }
        file.push(s);

        let mut s = KvSection::new("stiffness_load");
        for (row, names) in self.stiffness_load.iter().zip(names_load) {
            s.set_f64(names[0], row.c2);
            s.set_f64(names[1], row.c1);
            s.set_f64(names[2], row.c0);
        }
        file.push(s);

        let mut s = KvSection::new("stiffness_temperature");
        s.set_f64("b11", self.stiffness_temp.c2);
        s.set_f64("b12", self.stiffness_temp.c1);
        s.set_f64("b13", self.stiffness_temp.c0);
        file.push(s);

        let mut s = KvSection::new("grip");
        s.set_f64("a11", self.grip_slope.c2);
        s.set_f64("a12", self.grip_slope.c1);
        s.set_f64("a13", self.grip_slope.c0);
        s.set_f64("a21", self.grip_offset.c1);
        s.set_f64("a22", self.grip_offset.c0);
        file.push(s);

        let mut s = KvSection::new("grip_temperature");
        s.set_f64("b11", self.grip_temp.c2);
        s.set_f64("b12", self.grip_temp.c1);
        s.set_f64("b13", self.grip_temp.c0);
        file.push(s);

        let mut s = KvSection::new("curve");
        s.set_f64("shape_c", self.shape_c);
        s.set_f64("curvature_e", self.curvature_e);
        s.set_f64("offset_sv", self.offset_sv);
        file.push(s);

        let mut s = KvSection::new("reference");
        s.set_f64("pressure_kpa", self.reference.pressure_kpa);
        s.set_f64("tread_depth_mm", self.reference.tread_depth_mm);
        s.set_f64("surface_temp_c", self.reference.surface_temp_c);
        s.set_f64("normal_load_n", self.reference.normal_load_n);
        s.set_f64("temperature_span_c", self.temperature_span_c);
        file.push(s);

        file
    }

    pub fn from_kv(file: &KvFile) -> Result<Self> {
        let quad = |s: &KvSection, n2: &str, n1: &str, n0: &str| -> Result<QuadPoly> {
            Ok(QuadPoly {
                c2: s.require_f64(n2)?,
                c1: s.require_f64(n1)?,
                c0: s.require_f64(n0)?,
            })
        };

        let amp = file.require_section("stiffness_amplitude")?;
        let load = file.require_section("stiffness_load")?;
        let st = file.require_section("stiffness_temperature")?;
        let grip = file.require_section("grip")?;
        let gt = file.require_section("grip_temperature")?;
        let curve = file.require_section("curve")?;
        let reference = file.require_section("reference")?;

        Ok(Self {
            stiffness_amplitude: [
                quad(amp, "a311", "a312", "a313")?,
                quad(amp, "a321", "a322", "a323")?,
                quad(amp, "a331", "a332", "a333")?,
            ],
            stiffness_load: [
                quad(load, "a411", "a412", "a413")?,
                quad(load, "a421", "a422", "a423")?,
            ],
            stiffness_temp: quad(st, "b11", "b12", "b13")?,
            grip_slope: quad(grip, "a11", "a12", "a13")?,
            grip_offset: LinPoly {
                c1: grip.require_f64("a21")?,
                c0: grip.require_f64("a22")?,
            },
            grip_temp: quad(gt, "b11", "b12", "b13")?,
            shape_c: curve.require_f64("shape_c")?,
            curvature_e: curve.require_f64("curvature_e")?,
            offset_sv: curve.require_f64("offset_sv")?,
            reference: TireConditions {
                pressure_kpa: reference.require_f64("pressure_kpa")?,
                tread_depth_mm: reference.require_f64("tread_depth_mm")?,
                surface_temp_c: reference.require_f64("surface_temp_c")?,
                normal_load_n: reference.require_f64("normal_load_n")?,
            },
            temperature_span_c: reference.require_f64("temperature_span_c")?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_kv().write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_kv(&KvFile::read(path)?)
    }
}

fn lerp((lo, hi): (f64, f64), t: f64) -> f64 {
    lo + (hi - lo) * t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mf;
    use approx::assert_relative_eq;

    pub(crate) fn reference_conditions() -> TireConditions {
        TireConditions::new(250.0, 8.0, 25.0, 4000.0).unwrap()
    }

    /// A hand-built tree with visible pressure, tread, and temperature
    /// response, amplitude 60 kN/rad and load term 4 kN at reference.
    pub(crate) fn bent_tree() -> AdaptedMfCoefficients {
        AdaptedMfCoefficients {
            stiffness_amplitude: [
                QuadPoly { c2: 0.0, c1: 0.0, c0: -1500.0 },
                QuadPoly { c2: 4000.0, c1: -5500.0, c0: 17000.0 },
                QuadPoly { c2: 15000.0, c1: -21000.0, c0: 60000.0 },
            ],
            stiffness_load: [
                QuadPoly { c2: 0.0, c1: 200.0, c0: 2500.0 },
                QuadPoly { c2: 300.0, c1: -150.0, c0: 4000.0 },
            ],
            stiffness_temp: QuadPoly { c2: -0.05, c1: -0.175, c0: 1.0 },
            grip_slope: QuadPoly { c2: -1e-6, c1: 3.4e-6, c0: -2.04e-5 },
            grip_offset: LinPoly { c1: -0.1856, c0: 1.1 },
            grip_temp: QuadPoly { c2: -0.03, c1: -0.07, c0: 1.0 },
            shape_c: 1.3,
            curvature_e: -1.0,
            offset_sv: 0.0,
            reference: reference_conditions(),
            temperature_span_c: 65.0,
        }
    }

    #[test]
    fn reference_condition_reproduces_the_baseline_curve() {
        let tree = bent_tree();
        tree.validate(8000.0).unwrap();
        let at_ref = reference_conditions();
        let bcd = tree.cornering_stiffness(&at_ref).unwrap();
        // a333 sin(2 atan(Fz/a423)) * b13 with Fz = a423 and b13 = 1.
        assert_relative_eq!(bcd, 60000.0, max_relative = 1e-15);
        let mu = tree.peak_friction(&at_ref).unwrap();
        assert_relative_eq!(mu, -2.04e-5 * 4000.0 + 1.1, max_relative = 1e-15);
    }

    #[test]
    fn trivial_tree_ignores_conditions() {
        let base = BaseMfCoefficients::default();
        let tree = AdaptedMfCoefficients::from_base(&base, reference_conditions(), 65.0);
        tree.validate(9000.0).unwrap();
        for cond in [
            TireConditions::new(120.0, 1.0, 140.0, 6500.0).unwrap(),
            TireConditions::new(440.0, 11.5, -15.0, 900.0).unwrap(),
        ] {
            assert_relative_eq!(
                tree.cornering_stiffness(&cond).unwrap(),
                mf::cornering_stiffness(&base, cond.normal_load_n).unwrap(),
                max_relative = 1e-15
            );
            assert_relative_eq!(
                tree.peak_friction(&cond).unwrap(),
                mf::peak_friction(&base, cond.normal_load_n).unwrap(),
                max_relative = 1e-15
            );
        }
    }

    #[test]
    fn collapsed_base_coefficients_match_adapted_model_at_all_loads() {
        let tree = bent_tree();
        for cond in [
            TireConditions::new(210.0, 3.5, 70.0, 1500.0).unwrap(),
            TireConditions::new(310.0, 6.0, 20.0, 4000.0).unwrap(),
            TireConditions::new(250.0, 8.0, 90.0, 6600.0).unwrap(),
        ] {
            let base = tree.to_base(&cond).unwrap();
            for load in [800.0, 2000.0, 4000.0, 6680.0] {
                let at_load = cond.with_load(load);
                assert_relative_eq!(
                    mf::cornering_stiffness(&base, load).unwrap(),
                    tree.cornering_stiffness(&at_load).unwrap(),
                    max_relative = 1e-12
                );
                assert_relative_eq!(
                    mf::peak_friction(&base, load).unwrap(),
                    tree.peak_friction(&at_load).unwrap(),
                    max_relative = 1e-12
                );
            }
        }
    }

    #[test]
    fn tree_file_round_trips_bit_exactly() {
        let mut tree = bent_tree();
        // Inject values with awkward decimal expansions.
        tree.stiffness_amplitude[1].c1 = -5500.000000000001;
        tree.grip_slope.c0 = -2.0400000000000003e-5;
        tree.offset_sv = 0.1 + 0.2;

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tree.tire");
        tree.save(&path).unwrap();
        let back = AdaptedMfCoefficients::load(&path).unwrap();
        assert_eq!(back, tree);
        // And the rendered text itself is stable.
        back.save(&dir.path().join("tree2.tire")).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(dir.path().join("tree2.tire")).unwrap()
        );
    }

    #[test]
    fn out_of_box_conditions_clamp_and_flag() {
        let (cond, moved) = TireConditions::clamped(500.0, 8.0, 25.0, 4000.0).unwrap();
        assert!(moved);
        assert_eq!(cond.pressure_kpa, PRESSURE_RANGE_KPA.1);
        let (cond, moved) = TireConditions::clamped(250.0, 8.0, 25.0, 4000.0).unwrap();
        assert!(!moved);
        assert_eq!(cond.tread_depth_mm, 8.0);
        assert!(TireConditions::clamped(250.0, 8.0, 25.0, -1.0).is_err());
        assert!(TireConditions::new(500.0, 8.0, 25.0, 4000.0).is_err());
    }

    #[test]
    fn validation_rejects_a_tree_that_goes_nonpositive_in_the_box() {
        let mut tree = bent_tree();
        // Strong negative tread slope drives the amplitude negative at low
        // tread depth.
        tree.stiffness_amplitude[2] = QuadPoly { c2: 0.0, c1: 70000.0, c0: 60000.0 };
        assert!(tree.validate(8000.0).is_err());

        let mut tree = bent_tree();
        tree.grip_temp = QuadPoly { c2: 0.0, c1: -0.8, c0: 1.0 };
        assert!(tree.validate(8000.0).is_err());
    }
}
