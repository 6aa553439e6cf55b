//! Damped Gauss-Newton (Levenberg-Marquardt) nonlinear least squares.
//!
//! Small dense problems only: tens of coefficients, thousands of residuals.
//! The Jacobian comes from forward differences, the damped normal equations
//! are solved with a Cholesky factorization, and the damping factor follows
//! the classic schedule: shrink on accepted steps, double on rejected ones.

use crate::error::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector};

/// Which part of the staged pipeline a fit problem belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStage {
    /// Global curve shape (C, E) plus one condition's load coefficients.
    CurveShape,
    /// Load coefficients (a3, a4, a1, a2) at one fixed condition.
    PerCondition,
    /// Polynomial trends of stage-one coefficients over pressure.
    PressureTrend,
    /// Polynomial trends over tread depth.
    TreadTrend,
    /// Temperature scaling polynomials.
    TemperatureTrend,
    /// Joint polish of the assembled coefficient tree.
    JointRefinement,
}

impl FitStage {
    #[must_use]
    pub fn label(&self) -> &'static str {
        match self {
            Self::CurveShape => "curve shape",
            Self::PerCondition => "per condition",
            Self::PressureTrend => "pressure trend",
            Self::TreadTrend => "tread trend",
            Self::TemperatureTrend => "temperature trend",
            Self::JointRefinement => "joint refinement",
        }
    }
}

/// A least squares problem over observations of type `D`.
#[derive(Debug, Clone)]
pub struct FitProblem<D> {
    pub observations: Vec<D>,
    pub stage: FitStage,
    pub initial_guess: Vec<f64>,
    /// Inclusive per-coefficient bounds; use infinities for free coefficients.
    pub bounds: Vec<(f64, f64)>,
}

impl<D> FitProblem<D> {
    /// Unbounded problem.
    pub fn new(observations: Vec<D>, stage: FitStage, initial_guess: Vec<f64>) -> Self {
        let n = initial_guess.len();
        Self {
            observations,
            stage,
            initial_guess,
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); n],
        }
    }

    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.initial_guess.len();
        if self.observations.len() < 2 * n {
            return Err(Error::UnderDetermined {
                observations: self.observations.len(),
                coefficients: n,
            });
        }
        if self.bounds.len() != n {
            return Err(Error::InvalidCoefficients(format!(
                "{} bounds for {n} coefficients",
                self.bounds.len()
            )));
        }
        for (&g, &(lo, hi)) in self.initial_guess.iter().zip(&self.bounds) {
            if !g.is_finite() {
                return Err(Error::NonFinite("initial guess"));
            }
            if lo > hi || g < lo || g > hi {
                return Err(Error::OutOfRange {
                    what: "initial guess vs bounds",
                    value: g,
                    min: lo,
                    max: hi,
                });
            }
        }
        Ok(())
    }
}

/// Solver knobs. The defaults are used everywhere in the pipeline.
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Convergence when the scaled gradient infinity norm drops below this.
    pub gradient_tolerance: f64,
    /// Convergence when the relative step length drops below this.
    pub step_tolerance: f64,
    pub initial_lambda: f64,
    pub lambda_decrease: f64,
    pub lambda_increase: f64,
    /// Relative forward-difference step for the Jacobian.
    pub fd_step_relative: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-12,
            initial_lambda: 1e-3,
            lambda_decrease: 0.3,
            lambda_increase: 2.0,
            fd_step_relative: 1e-7,
        }
    }
}

/// Why the solver stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    ZeroResidual,
    GradientTolerance,
    StepTolerance,
    MaxIterations,
    /// Damping grew past any useful value without an acceptable step.
    Stalled,
}

/// Solution summary.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub coefficients: Vec<f64>,
    /// Root mean square of the final residual vector.
    pub residual_rms: f64,
    /// Outer iterations consumed (accepted or rejected steps).
    pub iterations: usize,
    pub converged: bool,
    /// Scaled gradient infinity norm at the solution.
    pub gradient_norm: f64,
    pub termination: Termination,
}

struct Evaluated {
    residuals: DVector<f64>,
    cost: f64,
}

fn evaluate<D, F>(
    observations: &[D],
    theta: &[f64],
    residual_fn: &F,
) -> Result<Option<Evaluated>>
where
    F: Fn(&[D], &[f64]) -> Result<Vec<f64>>,
{
    let raw = match residual_fn(observations, theta) {
        Ok(r) => r,
        // A candidate can wander somewhere the model refuses to evaluate;
        // the caller treats that like an ordinary rejected step.
        Err(_) => return Ok(None),
    };
    if let Some(index) = raw.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteResidual { index });
    }
    let residuals = DVector::from_vec(raw);
    let cost = 0.5 * residuals.norm_squared();
    Ok(Some(Evaluated { residuals, cost }))
}

/// Minimizes `sum residual_fn(observations, theta)^2` over `theta`.
///
/// `residual_fn` returns one residual per observation. Steps are clamped
/// into the problem bounds before evaluation, and the cost never increases
/// across accepted iterations.
pub fn nlls_solve<D, F>(
    problem: &FitProblem<D>,
    residual_fn: F,
    options: &FitOptions,
) -> Result<FitResult>
where
    F: Fn(&[D], &[f64]) -> Result<Vec<f64>>,
{
    problem.validate()?;
    let n = problem.initial_guess.len();
    let obs = &problem.observations;

    let mut theta = problem.initial_guess.clone();
    let mut current = evaluate(obs, &theta, &residual_fn)?.ok_or_else(|| {
        Error::InvalidCoefficients("residual function failed at the initial guess".to_string())
    })?;

    let finish = |theta: Vec<f64>,
                  cost: f64,
                  m: usize,
                  iterations: usize,
                  gradient_norm: f64,
                  termination: Termination| FitResult {
        coefficients: theta,
        residual_rms: (2.0 * cost / m as f64).sqrt(),
        iterations,
        converged: !matches!(termination, Termination::MaxIterations | Termination::Stalled),
        gradient_norm,
        termination,
    };

    let m = current.residuals.len();
    if current.cost == 0.0 {
        return Ok(finish(theta, 0.0, m, 0, 0.0, Termination::ZeroResidual));
    }

    let jacobian = |theta: &[f64], base: &DVector<f64>| -> Result<DMatrix<f64>> {
        let mut j = DMatrix::zeros(m, n);
        let mut probe = theta.to_vec();
        for col in 0..n {
            let mut h = options.fd_step_relative * theta[col].abs().max(1.0);
            // Step away from an active upper bound instead of through it.
            if theta[col] + h > problem.bounds[col].1 {
                h = -h;
            }
            probe[col] = theta[col] + h;
            let shifted = evaluate(obs, &probe, &residual_fn)?.ok_or_else(|| {
                Error::InvalidCoefficients(format!(
                    "residual function failed while differencing coefficient {col}"
                ))
            })?;
            probe[col] = theta[col];
            for row in 0..m {
                j[(row, col)] = (shifted.residuals[row] - base[row]) / h;
            }
        }
        Ok(j)
    };

    // Scaled gradient: infinity norm relative to the cost magnitude, so the
    // tolerance means the same thing for kilonewton and unit-scale problems.
    let scaled_gradient_norm =
        |g: &DVector<f64>, cost: f64| g.amax() / (1.0 + cost);

    let mut jac = jacobian(&theta, &current.residuals)?;
    for col in 0..n {
        if jac.column(col).norm() == 0.0 {
            return Err(Error::SingularAtInitialGuess { index: col });
        }
    }
    let mut gradient = jac.transpose() * &current.residuals;
    let mut gnorm = scaled_gradient_norm(&gradient, current.cost);
    if gnorm < options.gradient_tolerance {
        return Ok(finish(theta, current.cost, m, 0, gnorm, Termination::GradientTolerance));
    }

    let mut lambda = options.initial_lambda;
    for iteration in 1..=options.max_iterations {
        let jtj = jac.transpose() * &jac;
        let mut damped = jtj.clone();
        for i in 0..n {
            let d = jtj[(i, i)].max(1e-30);
            damped[(i, i)] = jtj[(i, i)] + lambda * d;
        }
        let step = match Cholesky::new(damped) {
            Some(chol) => chol.solve(&(-&gradient)),
            None => {
                lambda *= options.lambda_increase;
                if lambda > 1e15 {
                    return Ok(finish(
                        theta,
                        current.cost,
                        m,
                        iteration,
                        gnorm,
                        Termination::Stalled,
                    ));
                }
                continue;
            }
        };

        let mut candidate = theta.clone();
        for i in 0..n {
            candidate[i] = (theta[i] + step[i]).clamp(problem.bounds[i].0, problem.bounds[i].1);
        }

        let accepted = match evaluate(obs, &candidate, &residual_fn)? {
            Some(eval) if eval.cost <= current.cost => Some(eval),
            _ => None,
        };

        match accepted {
            Some(eval) => {
                let step_len: f64 = candidate
                    .iter()
                    .zip(&theta)
                    .map(|(c, t)| (c - t) * (c - t))
                    .sum::<f64>()
                    .sqrt();
                let theta_len: f64 = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
                let relative_step = step_len / (theta_len + options.step_tolerance);

                theta = candidate;
                current = eval;
                lambda = (lambda * options.lambda_decrease).max(1e-12);

                if current.cost == 0.0 {
                    return Ok(finish(theta, 0.0, m, iteration, 0.0, Termination::ZeroResidual));
                }

                jac = jacobian(&theta, &current.residuals)?;
                gradient = jac.transpose() * &current.residuals;
                gnorm = scaled_gradient_norm(&gradient, current.cost);
                if gnorm < options.gradient_tolerance {
                    return Ok(finish(
                        theta,
                        current.cost,
                        m,
                        iteration,
                        gnorm,
                        Termination::GradientTolerance,
                    ));
                }
                if relative_step < options.step_tolerance {
                    return Ok(finish(
                        theta,
                        current.cost,
                        m,
                        iteration,
                        gnorm,
                        Termination::StepTolerance,
                    ));
                }
            }
            None => {
                lambda *= options.lambda_increase;
                if lambda > 1e15 {
                    return Ok(finish(
                        theta,
                        current.cost,
                        m,
                        iteration,
                        gnorm,
                        Termination::Stalled,
                    ));
                }
            }
        }
    }

    Ok(finish(
        theta,
        current.cost,
        m,
        options.max_iterations,
        gnorm,
        Termination::MaxIterations,
    ))
}
