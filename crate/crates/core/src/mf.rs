//! Baseline Magic Formula lateral force curve.
//!
//! The lateral force at slip angle `alpha` and vertical load `Fz` is
//!
//! ```text
//! Fy   = D sin(C atan(B alpha - E (B alpha - atan(B alpha)))) + Sv
//! D    = mu_max Fz          peak lateral force
//! mu_max = a1 Fz + a2       load-sensitive peak friction coefficient
//! BCD  = a3 sin(2 atan(Fz / a4))   cornering stiffness, dFy/dalpha at 0
//! B    = BCD / (C D)        stiffness factor
//! ```
//!
//! `a3` is the largest attainable cornering stiffness and `a4` the load at
//! which it occurs. The [`crate::adapt`] module rescales `a1..a4` for tire
//! condition; this module only knows about load.

use crate::error::{Error, Result};

/// Coefficients of the baseline lateral force curve at fixed tire condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseMfCoefficients {
    /// Load sensitivity of peak friction, 1/N. Zero or negative: grip per
    /// newton drops as load rises.
    pub a1: f64,
    /// Peak friction coefficient at zero load, dimensionless.
    pub a2: f64,
    /// Maximum cornering stiffness, N/rad.
    pub a3: f64,
    /// Vertical load at maximum cornering stiffness, N.
    pub a4: f64,
    /// Shape factor C. Controls how far past the peak the curve falls.
    pub shape_c: f64,
    /// Curvature factor E. Must not exceed 1 or the curve loses its peak.
    pub curvature_e: f64,
    /// Vertical offset Sv, N. Ply steer and conicity; zero for a symmetric
    /// tire.
    pub offset_sv: f64,
}

impl Default for BaseMfCoefficients {
    /// A summer touring tire on a mid-size sedan, nominal corner load 4 kN.
    fn default() -> Self {
        Self {
            a1: -2.0e-5,
            a2: 1.10,
            a3: 60_000.0,
            a4: 4_000.0,
            shape_c: 1.3,
            curvature_e: -1.0,
            offset_sv: 0.0,
        }
    }
}

impl BaseMfCoefficients {
    pub fn new(
        a1: f64,
        a2: f64,
        a3: f64,
        a4: f64,
        shape_c: f64,
        curvature_e: f64,
        offset_sv: f64,
    ) -> Result<Self> {
        let coeffs = Self {
            a1,
            a2,
            a3,
            a4,
            shape_c,
            curvature_e,
            offset_sv,
        };
        coeffs.validate()?;
        Ok(coeffs)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.a1,
            self.a2,
            self.a3,
            self.a4,
            self.shape_c,
            self.curvature_e,
            self.offset_sv,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Magic Formula coefficient"));
        }
        if self.a3 <= 0.0 {
            return Err(Error::InvalidCoefficients(format!(
                "a3 = {} must be positive",
                self.a3
            )));
        }
        if self.a4 <= 0.0 {
            return Err(Error::InvalidCoefficients(format!(
                "a4 = {} must be positive",
                self.a4
            )));
        }
        if self.a2 <= 0.0 {
            return Err(Error::InvalidCoefficients(format!(
                "a2 = {} must be positive",
                self.a2
            )));
        }
        if self.a1 > 0.0 {
            return Err(Error::InvalidCoefficients(format!(
                "a1 = {} must not be positive (grip cannot grow with load)",
                self.a1
            )));
        }
        if !(1.0..=2.0).contains(&self.shape_c) {
            return Err(Error::InvalidCoefficients(format!(
                "shape factor C = {} must lie in [1, 2]",
                self.shape_c
            )));
        }
        if self.curvature_e > 1.0 {
            return Err(Error::InvalidCoefficients(format!(
                "curvature factor E = {} must not exceed 1",
                self.curvature_e
            )));
        }
        Ok(())
    }
}

/// Slip angle and vertical load at which the force curve is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TireForceState {
    /// Slip angle, rad. Positive slip produces positive lateral force.
    pub slip_angle: f64,
    /// Vertical load, N. Strictly positive; a wheel in the air has no curve.
    pub normal_load: f64,
}

impl TireForceState {
    pub fn new(slip_angle: f64, normal_load: f64) -> Result<Self> {
        if !slip_angle.is_finite() || !normal_load.is_finite() {
            return Err(Error::NonFinite("tire force state"));
        }
        if normal_load <= 0.0 {
            return Err(Error::OutOfRange {
                what: "normal load",
                value: normal_load,
                min: f64::MIN_POSITIVE,
                max: f64::INFINITY,
            });
        }
        if slip_angle.abs() > std::f64::consts::FRAC_PI_2 {
            return Err(Error::OutOfRange {
                what: "slip angle",
                value: slip_angle,
                min: -std::f64::consts::FRAC_PI_2,
                max: std::f64::consts::FRAC_PI_2,
            });
        }
        Ok(Self {
            slip_angle,
            normal_load,
        })
    }
}

/// Cornering stiffness BCD = a3 sin(2 atan(Fz/a4)) in N/rad.
///
/// Rises from zero at zero load to `a3` at `Fz = a4`, then falls again as
/// the contact patch saturates.
pub fn cornering_stiffness(coeffs: &BaseMfCoefficients, normal_load: f64) -> Result<f64> {
    coeffs.validate()?;
    if !normal_load.is_finite() || normal_load < 0.0 {
        return Err(Error::OutOfRange {
            what: "normal load",
            value: normal_load,
            min: 0.0,
            max: f64::INFINITY,
        });
    }
    Ok(coeffs.a3 * (2.0 * (normal_load / coeffs.a4).atan()).sin())
}

/// Peak friction coefficient mu_max = a1 Fz + a2.
///
/// Errors if the linear model predicts zero or negative grip at this load;
/// the coefficients are not valid there.
pub fn peak_friction(coeffs: &BaseMfCoefficients, normal_load: f64) -> Result<f64> {
    coeffs.validate()?;
    if !normal_load.is_finite() || normal_load <= 0.0 {
        return Err(Error::OutOfRange {
            what: "normal load",
            value: normal_load,
            min: f64::MIN_POSITIVE,
            max: f64::INFINITY,
        });
    }
    let mu = coeffs.a1 * normal_load + coeffs.a2;
    if mu <= 0.0 {
        return Err(Error::InvalidCoefficients(format!(
            "peak friction {mu} at load {normal_load} N; a1/a2 not valid at this load"
        )));
    }
    Ok(mu)
}

/// Lateral force, N.
pub fn lateral_force(coeffs: &BaseMfCoefficients, state: &TireForceState) -> Result<f64> {
    let mu = peak_friction(coeffs, state.normal_load)?;
    let d = mu * state.normal_load;
    let bcd = cornering_stiffness(coeffs, state.normal_load)?;
    if d == 0.0 {
        // Unreachable with a positive load and valid mu, but the curve has
        // no meaning without a peak force.
        if state.slip_angle == 0.0 {
            return Ok(coeffs.offset_sv);
        }
        return Err(Error::DegenerateCurve {
            slip_angle: state.slip_angle,
        });
    }
    let b = bcd / (coeffs.shape_c * d);
    let x = b * state.slip_angle;
    let psi = x - coeffs.curvature_e * (x - x.atan());
    Ok(d * (coeffs.shape_c * psi.atan()).sin() + coeffs.offset_sv)
}

/// Slope of the force curve at zero slip, by central difference with
/// h = 1e-7 rad. Matches [`cornering_stiffness`] when `offset_sv` is zero.
pub fn slope_at_origin(coeffs: &BaseMfCoefficients, normal_load: f64) -> Result<f64> {
    coeffs.validate()?;
    if !normal_load.is_finite() || normal_load < 0.0 {
        return Err(Error::OutOfRange {
            what: "normal load",
            value: normal_load,
            min: 0.0,
            max: f64::INFINITY,
        });
    }
    if normal_load == 0.0 {
        // No load, no curve: Fy is identically Sv.
        return Ok(0.0);
    }
    const H: f64 = 1e-7;
    let plus = lateral_force(coeffs, &TireForceState::new(H, normal_load)?)?;
    let minus = lateral_force(coeffs, &TireForceState::new(-H, normal_load)?)?;
    Ok((plus - minus) / (2.0 * H))
}

/// Smallest positive slip angle at which the curve peaks, rad.
///
/// Solves C atan(psi(alpha)) = pi/2 by bisection. Returns `None` when
/// `shape_c == 1`, where the curve rises monotonically and has no finite
/// peak.
pub fn peak_slip_angle(coeffs: &BaseMfCoefficients, normal_load: f64) -> Result<Option<f64>> {
    let mu = peak_friction(coeffs, normal_load)?;
    let d = mu * normal_load;
    let bcd = cornering_stiffness(coeffs, normal_load)?;
    if coeffs.shape_c <= 1.0 || bcd == 0.0 {
        return Ok(None);
    }
    let b = bcd / (coeffs.shape_c * d);
    let psi_peak = (std::f64::consts::FRAC_PI_2 / coeffs.shape_c).tan();
    let psi = |alpha: f64| {
        let x = b * alpha;
        x - coeffs.curvature_e * (x - x.atan())
    };
    // psi is strictly increasing in alpha for E <= 1, so bracket then bisect.
    let mut lo = 0.0;
    let mut hi = 1.0 / b;
    while psi(hi) < psi_peak {
        hi *= 2.0;
        if hi > 1e6 {
            return Ok(None);
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if psi(mid) < psi_peak {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}
