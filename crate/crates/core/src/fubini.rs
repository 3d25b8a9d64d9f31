//! Stochastic Fubini checks: integrating a parameterized jump integral over a
//! finite parameter measure versus integrating the parameter-averaged
//! integrand, on one shared jump stream. On finite samples both orders are
//! finite sums, so any systematic gap exposes integrator bookkeeping bugs
//! (compensator timing, left limits) rather than analysis.

use crate::drivers::{compensated_jump_integral, raw_jump_integral, JumpStream, Mark, MarkSpace};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// A finite measure on a parameter set: points with nonnegative weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamMeasure {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ParamMeasure {
    pub fn new(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::config("parameter points and weights differ in length"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::config("parameter weights must be nonnegative and finite"));
        }
        Ok(ParamMeasure { points, weights })
    }

    pub fn unit(points: Vec<f64>) -> Result<Self> {
        let weights = vec![1.0; points.len()];
        ParamMeasure::new(points, weights)
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `sum_lambda m(lambda) f(lambda)`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.points.iter().zip(&self.weights).map(|(l, w)| w * f(*l)).sum()
    }
}

/// Both orders of the compensated-measure Fubini identity:
/// `lhs = int_Lambda [int int f(t,z,lambda) dpi~] m(dlambda)`,
/// `rhs = int int [int_Lambda f m(dlambda)] dpi~`, on the same path.
pub fn fubini_tilde_check<F>(
    ffun: F,
    pm: &ParamMeasure,
    js: &JumpStream,
    ms: &MarkSpace,
    tg: &TimeGrid,
    t: f64,
) -> Result<(f64, f64)>
where
    F: Fn(f64, &Mark, f64) -> f64 + Sync,
{
    let mut lhs = 0.0;
    for (l, w) in pm.points.iter().zip(&pm.weights) {
        lhs += w * compensated_jump_integral(|z, s| ffun(s, z, *l), js, ms, tg, t)?;
    }
    let rhs = compensated_jump_integral(
        |z, s| pm.integrate(|l| ffun(s, z, l)),
        js,
        ms,
        tg,
        t,
    )?;
    Ok((lhs, rhs))
}

/// Both orders for the raw Poisson measure (plain atom sums, no compensator).
pub fn fubini_pi_check<F>(
    gfun: F,
    pm: &ParamMeasure,
    js: &JumpStream,
    t: f64,
) -> (f64, f64)
where
    F: Fn(f64, &Mark, f64) -> f64 + Sync,
{
    let lhs = pm.integrate(|l| raw_jump_integral(|z, s| gfun(s, z, l), js, t));
    let rhs = raw_jump_integral(|z, s| pm.integrate(|l| gfun(s, z, l)), js, t);
    (lhs, rhs)
}

/// Value of the integrability condition for the compensated identity:
/// `int_Lambda ( int_0^T int_Z |f|^2 mu(dz) dt )^{1/2} m(dlambda)`,
/// by left-endpoint time quadrature and the mark-space cubature.
pub fn fubini_cond_value<F>(ffun: F, pm: &ParamMeasure, ms: &MarkSpace, tg: &TimeGrid) -> f64
where
    F: Fn(f64, &Mark, f64) -> f64,
{
    pm.integrate(|l| {
        let mut sq = 0.0;
        for k in 0..tg.n_steps() {
            let s = tg.points[k];
            sq += tg.step(k)
                * ms.integrate(|z| {
                    let v = ffun(s, z, l);
                    v * v
                });
        }
        sq.sqrt()
    })
}

/// Value of the stronger square-integrated condition:
/// `int_0^T int_Z int_Lambda |f|^2 m(dlambda) mu(dz) dt`.
pub fn protter_cond_value<F>(ffun: F, pm: &ParamMeasure, ms: &MarkSpace, tg: &TimeGrid) -> f64
where
    F: Fn(f64, &Mark, f64) -> f64,
{
    let mut acc = 0.0;
    for k in 0..tg.n_steps() {
        let s = tg.points[k];
        acc += tg.step(k)
            * ms.integrate(|z| {
                pm.integrate(|l| {
                    let v = ffun(s, z, l);
                    v * v
                })
            });
    }
    acc
}
