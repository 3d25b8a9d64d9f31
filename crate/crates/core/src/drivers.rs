//! Elementary stochastic drivers: Wiener increment bundles and finite-activity
//! Poisson random measures with their compensators.
//!
//! A sigma-finite mark measure is represented only through a finite-activity
//! truncation with total mass `lambda`; a ladder of increasing `lambda` values
//! plays the role of an exhaustion of the mark space in convergence studies.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// One point of the mark space.
#[derive(Debug, Clone, PartialEq)]
pub enum Mark {
    /// Element of a finite mark set.
    Index(usize),
    /// Point of a box in R^dim.
    Point(Vec<f64>),
}

#[derive(Debug, Clone)]
pub enum MarkKind {
    /// Finite set with a normalized sampling law over its elements.
    FiniteSet { probs: Vec<f64> },
    /// Axis-aligned box with the uniform law; `resolution` is the per-axis
    /// midpoint-cubature node count for mark-space integrals.
    Box { bounds: Vec<(f64, f64)>, resolution: usize },
}

/// Finite-activity mark space `(Z, mu)` with `mu(Z) = lambda`.
#[derive(Debug, Clone)]
pub struct MarkSpace {
    pub kind: MarkKind,
    /// Total mass of the intensity measure per unit time.
    pub lambda: f64,
}

impl MarkSpace {
    pub fn finite_set(probs: Vec<f64>, lambda: f64) -> Result<Self> {
        let ms = MarkSpace { kind: MarkKind::FiniteSet { probs }, lambda };
        ms.validate()?;
        Ok(ms)
    }

    /// Finite set with the uniform law.
    pub fn finite_uniform(size: usize, lambda: f64) -> Result<Self> {
        if size == 0 {
            return Err(Error::config("finite mark set must be nonempty"));
        }
        Self::finite_set(vec![1.0 / size as f64; size], lambda)
    }

    pub fn boxed(bounds: Vec<(f64, f64)>, resolution: usize, lambda: f64) -> Result<Self> {
        let ms = MarkSpace { kind: MarkKind::Box { bounds, resolution }, lambda };
        ms.validate()?;
        Ok(ms)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::config(format!("lambda must be finite and nonnegative, got {}", self.lambda)));
        }
        match &self.kind {
            MarkKind::FiniteSet { probs } => {
                if probs.is_empty() {
                    return Err(Error::config("finite mark set must be nonempty"));
                }
                if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                    return Err(Error::config("mark law weights must be nonnegative and finite"));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::config(format!("mark law must integrate to 1, got {total}")));
                }
            }
            MarkKind::Box { bounds, resolution } => {
                if bounds.is_empty() {
                    return Err(Error::config("box mark space needs at least one axis"));
                }
                if bounds.iter().any(|&(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
                    return Err(Error::config("box bounds must be finite with lo < hi"));
                }
                if *resolution == 0 {
                    return Err(Error::config("box cubature resolution must be positive"));
                }
            }
        }
        Ok(())
    }

    pub fn sample_mark<R: Rng>(&self, rng: &mut R) -> Mark {
        match &self.kind {
            MarkKind::FiniteSet { probs } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (i, &p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return Mark::Index(i);
                    }
                }
                Mark::Index(probs.len() - 1)
            }
            MarkKind::Box { bounds, .. } => {
                let point = bounds.iter().map(|&(a, b)| a + (b - a) * rng.gen::<f64>()).collect();
                Mark::Point(point)
            }
        }
    }

    /// `\int_Z f(z) mu(dz)`: exact weighted sum for a finite set, tensor
    /// midpoint cubature for a box (the law is uniform, so the integral is
    /// `lambda` times the node average).
    pub fn integrate<F: Fn(&Mark) -> f64>(&self, f: F) -> f64 {
        match &self.kind {
            MarkKind::FiniteSet { probs } => {
                let mut acc = 0.0;
                for (i, &p) in probs.iter().enumerate() {
                    acc += p * f(&Mark::Index(i));
                }
                self.lambda * acc
            }
            MarkKind::Box { bounds, resolution } => {
                let n = *resolution;
                let dim = bounds.len();
                let n_nodes = n.pow(dim as u32);
                let mut acc = 0.0;
                let mut idx = vec![0usize; dim];
                for flat in 0..n_nodes {
                    let mut rem = flat;
                    for a in 0..dim {
                        idx[a] = rem % n;
                        rem /= n;
                    }
                    let point: Vec<f64> = (0..dim)
                        .map(|a| {
                            let (lo, hi) = bounds[a];
                            lo + (hi - lo) * (idx[a] as f64 + 0.5) / n as f64
                        })
                        .collect();
                    acc += f(&Mark::Point(point));
                }
                self.lambda * acc / n_nodes as f64
            }
        }
    }
}

/// Sampled atoms of a finite-activity Poisson random measure on `[0,T] x Z`.
#[derive(Debug, Clone)]
pub struct JumpStream {
    /// Atom (time, mark) pairs, times nondecreasing; an exact floating-point
    /// tie keeps sampling order (tie broken by atom index).
    pub atoms: Vec<(f64, Mark)>,
    pub truncation_level: usize,
}

impl JumpStream {
    pub fn empty() -> Self {
        JumpStream { atoms: Vec::new(), truncation_level: 0 }
    }

    pub fn times(&self) -> Vec<f64> {
        self.atoms.iter().map(|(t, _)| *t).collect()
    }
}

/// Atom count `N ~ Poisson(lambda * T)`, times i.i.d. uniform on `(0, T]`
/// given the count, marks i.i.d. from the mark law.
pub fn sample_jump_stream<R: Rng>(ms: &MarkSpace, tg: &TimeGrid, rng: &mut R) -> Result<JumpStream> {
    ms.validate()?;
    let rate = ms.lambda * tg.horizon;
    if !rate.is_finite() {
        return Err(Error::config(format!("lambda * T must be finite, got {rate}")));
    }
    if rate == 0.0 {
        return Ok(JumpStream::empty());
    }
    let count = Poisson::new(rate)
        .map_err(|e| Error::config(format!("invalid Poisson rate {rate}: {e}")))?
        .sample(rng) as usize;
    let mut times: Vec<f64> = (0..count).map(|_| (1.0 - rng.gen::<f64>()) * tg.horizon).collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let atoms = times.into_iter().map(|t| (t, ms.sample_mark(rng))).collect();
    Ok(JumpStream { atoms, truncation_level: 0 })
}

/// `\int_0^t \int_Z h(z, s) mu(dz) ds` by the left-endpoint rule on the grid
/// and the mark-space cubature. `t` may lie inside a step.
pub fn compensator_integral<F>(hfun: F, ms: &MarkSpace, tg: &TimeGrid, t: f64) -> Result<f64>
where
    F: Fn(&Mark, f64) -> f64,
{
    if !(0.0..=tg.horizon).contains(&t) {
        return Err(Error::domain(format!("t={t} outside [0, {}]", tg.horizon)));
    }
    let mut acc = 0.0;
    for k in 0..tg.n_steps() {
        let lo = tg.points[k];
        if lo >= t {
            break;
        }
        let hi = tg.points[k + 1].min(t);
        acc += (hi - lo) * ms.integrate(|z| hfun(z, lo));
    }
    Ok(acc)
}

/// `\int_0^t \int_Z h dpi~ = sum_{atoms <= t} h(mark, time) - compensator`.
pub fn compensated_jump_integral<F>(
    hfun: F,
    js: &JumpStream,
    ms: &MarkSpace,
    tg: &TimeGrid,
    t: f64,
) -> Result<f64>
where
    F: Fn(&Mark, f64) -> f64,
{
    let mut jumps = 0.0;
    for (tau, mark) in &js.atoms {
        if *tau <= t {
            jumps += hfun(mark, *tau);
        }
    }
    Ok(jumps - compensator_integral(hfun, ms, tg, t)?)
}

/// Raw Poisson integral `\int_0^t \int_Z g dpi`: sum over atoms up to `t`.
pub fn raw_jump_integral<F>(gfun: F, js: &JumpStream, t: f64) -> f64
where
    F: Fn(&Mark, f64) -> f64,
{
    js.atoms
        .iter()
        .filter(|(tau, _)| *tau <= t)
        .map(|(tau, mark)| gfun(mark, *tau))
        .sum()
}

/// Independent Gaussian increments for a finite bundle of Wiener drivers.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerBundle {
    /// `increments[k][r]` is the increment of driver `r` over grid step `k`.
    pub increments: Vec<Vec<f64>>,
}

impl WienerBundle {
    pub fn n_drivers(&self) -> usize {
        self.increments.first().map_or(0, Vec::len)
    }

    pub fn zero(tg: &TimeGrid, n_drivers: usize) -> Self {
        WienerBundle { increments: vec![vec![0.0; n_drivers]; tg.n_steps()] }
    }
}

pub fn sample_wiener<R: Rng>(tg: &TimeGrid, n_drivers: usize, rng: &mut R) -> WienerBundle {
    let increments = (0..tg.n_steps())
        .map(|k| {
            let sd = tg.step(k).sqrt();
            let normal = Normal::new(0.0, sd).unwrap();
            (0..n_drivers).map(|_| normal.sample(rng)).collect()
        })
        .collect();
    WienerBundle { increments }
}

/// Restriction of fine-grid increments to a coarse subgrid: coarse increments
/// are sums of the fine increments between retained points, which couples the
/// driving noise across refinement levels.
pub fn coarsen_wiener(
    fine: &WienerBundle,
    fine_grid: &TimeGrid,
    coarse_grid: &TimeGrid,
) -> Result<WienerBundle> {
    if !fine_grid.refines(coarse_grid) {
        return Err(Error::precondition("coarse grid is not a subgrid of the fine grid"));
    }
    let n_drivers = fine.n_drivers();
    let mut increments = Vec::with_capacity(coarse_grid.n_steps());
    let mut fine_k = 0;
    for k in 0..coarse_grid.n_steps() {
        let hi = coarse_grid.points[k + 1];
        let mut sum = vec![0.0; n_drivers];
        while fine_k < fine_grid.n_steps() && fine_grid.points[fine_k + 1] <= hi {
            for r in 0..n_drivers {
                sum[r] += fine.increments[fine_k][r];
            }
            fine_k += 1;
        }
        increments.push(sum);
    }
    Ok(WienerBundle { increments })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::path_rng;

    fn grid() -> TimeGrid {
        TimeGrid::uniform(1.0, 8).unwrap()
    }

    #[test]
    fn zero_intensity_gives_empty_stream() {
        let ms = MarkSpace::finite_uniform(3, 0.0).unwrap();
        for seed in 0..10 {
            let js = sample_jump_stream(&ms, &grid(), &mut path_rng(seed, 0)).unwrap();
            assert!(js.atoms.is_empty());
        }
    }

    #[test]
    fn degenerate_mark_law_yields_single_point() {
        let ms = MarkSpace::finite_uniform(1, 1.0).unwrap();
        let js = sample_jump_stream(&ms, &grid(), &mut path_rng(3, 0)).unwrap();
        assert!(js.atoms.iter().all(|(_, m)| *m == Mark::Index(0)));
    }

    #[test]
    fn poisson_mean_statistical_oracle() {
        // lambda=2, T=1, 1e5 seeds: sample mean within 2 +- 3*sqrt(2/1e5).
        let ms = MarkSpace::finite_uniform(2, 2.0).unwrap();
        let tg = grid();
        let n = 100_000u64;
        let total: usize = (0..n)
            .map(|i| sample_jump_stream(&ms, &tg, &mut path_rng(11, i)).unwrap().atoms.len())
            .sum();
        let mean = total as f64 / n as f64;
        let band = 3.0 * (2.0f64 / n as f64).sqrt();
        assert!((mean - 2.0).abs() < band, "mean {mean} outside 2 +- {band}");
    }

    #[test]
    fn jump_times_in_range_and_sorted() {
        let ms = MarkSpace::finite_uniform(2, 5.0).unwrap();
        let js = sample_jump_stream(&ms, &grid(), &mut path_rng(1, 2)).unwrap();
        assert!(js.atoms.iter().all(|(t, _)| *t > 0.0 && *t <= 1.0));
        assert!(js.atoms.windows(2).all(|w| w[0].0 <= w[1].0));
    }

    #[test]
    fn reproducibility_bit_identical() {
        let ms = MarkSpace::boxed(vec![(-1.0, 1.0)], 8, 3.0).unwrap();
        let a = sample_jump_stream(&ms, &grid(), &mut path_rng(9, 4)).unwrap();
        let b = sample_jump_stream(&ms, &grid(), &mut path_rng(9, 4)).unwrap();
        assert_eq!(a.atoms, b.atoms);
        let wa = sample_wiener(&grid(), 3, &mut path_rng(9, 4));
        let wb = sample_wiener(&grid(), 3, &mut path_rng(9, 4));
        assert_eq!(wa, wb);
    }

    #[test]
    fn nonfinite_lambda_is_config_error() {
        assert!(MarkSpace::finite_uniform(1, f64::INFINITY).is_err());
        assert!(MarkSpace::finite_uniform(1, f64::NAN).is_err());
    }

    #[test]
    fn compensator_constant_integrand() {
        let ms = MarkSpace::finite_uniform(4, 3.0).unwrap();
        let tg = grid();
        let v = compensator_integral(|_, _| 2.5, &ms, &tg, 0.5).unwrap();
        assert!((v - 2.5 * 3.0 * 0.5).abs() < 1e-14);
        let z = compensator_integral(|_, _| 0.0, &ms, &tg, 1.0).unwrap();
        assert_eq!(z, 0.0);
    }

    #[test]
    fn compensator_time_linear_closed_form() {
        // hfun(z,s)=s, single mark, lambda=3, t=2 -> 3 * 2^2/2 = 6 up to the
        // left-endpoint quadrature defect 3*T*dt/2.
        let ms = MarkSpace::finite_uniform(1, 3.0).unwrap();
        let tg = TimeGrid::uniform(2.0, 512).unwrap();
        let v = compensator_integral(|_, s| s, &ms, &tg, 2.0).unwrap();
        let defect = 3.0 * 2.0 * tg.step(0) / 2.0;
        assert!((v - 6.0).abs() <= defect + 1e-12, "got {v}");
    }

    #[test]
    fn compensator_out_of_domain() {
        let ms = MarkSpace::finite_uniform(1, 1.0).unwrap();
        assert!(compensator_integral(|_, _| 1.0, &ms, &grid(), 2.0).is_err());
        assert!(compensator_integral(|_, _| 1.0, &ms, &grid(), -0.1).is_err());
    }

    #[test]
    fn compensated_integral_no_atoms() {
        let ms = MarkSpace::finite_uniform(1, 2.0).unwrap();
        let js = JumpStream::empty();
        let v = compensated_jump_integral(|_, _| 3.0, &js, &ms, &grid(), 1.0).unwrap();
        assert!((v + 3.0 * 2.0).abs() < 1e-14);
    }

    #[test]
    fn compensated_integral_single_atom_cancels() {
        let ms = MarkSpace::finite_uniform(1, 1.0).unwrap();
        let js = JumpStream { atoms: vec![(0.5, Mark::Index(0))], truncation_level: 0 };
        let v = compensated_jump_integral(|_, _| 1.0, &js, &ms, &grid(), 1.0).unwrap();
        assert!(v.abs() < 1e-14);
    }

    #[test]
    fn compensated_integral_zero_mean_oracle() {
        // Martingale property: the mean over many paths is 0 within 3 SE.
        let ms = MarkSpace::finite_uniform(2, 1.5).unwrap();
        let tg = grid();
        let n = 20_000u64;
        let samples: Vec<f64> = (0..n)
            .map(|i| {
                let mut rng = path_rng(5, i);
                let js = sample_jump_stream(&ms, &tg, &mut rng).unwrap();
                compensated_jump_integral(|_, _| 1.0, &js, &ms, &tg, 1.0).unwrap()
            })
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
        let se = (var / n as f64).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn wiener_zero_drivers() {
        let wb = sample_wiener(&grid(), 0, &mut path_rng(0, 0));
        assert_eq!(wb.n_drivers(), 0);
        assert_eq!(wb.increments.len(), 8);
    }

    #[test]
    fn wiener_variance_oracle() {
        // Single step of length 0.25: sample variance within 5% of 0.25.
        let tg = TimeGrid::uniform(0.25, 1).unwrap();
        let n = 100_000u64;
        let samples: Vec<f64> =
            (0..n).map(|i| sample_wiener(&tg, 1, &mut path_rng(2, i)).increments[0][0]).collect();
        let var = samples.iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!((var - 0.25).abs() < 0.05 * 0.25, "var {var}");
    }

    #[test]
    fn wiener_independence_oracle() {
        let tg = TimeGrid::uniform(1.0, 1).unwrap();
        let n = 100_000u64;
        let pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let wb = sample_wiener(&tg, 2, &mut path_rng(8, i));
                (wb.increments[0][0], wb.increments[0][1])
            })
            .collect();
        let corr = {
            let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n as f64;
            let my = pairs.iter().map(|p| p.1).sum::<f64>() / n as f64;
            let cov = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / n as f64;
            let vx = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>() / n as f64;
            let vy = pairs.iter().map(|p| (p.1 - my).powi(2)).sum::<f64>() / n as f64;
            cov / (vx * vy).sqrt()
        };
        // SE of the sample correlation under independence is ~ 1/sqrt(n).
        assert!(corr.abs() < 3.0 / (n as f64).sqrt(), "corr {corr}");
    }

    #[test]
    fn coarsen_sums_fine_increments() {
        let fine = TimeGrid::uniform(1.0, 8).unwrap();
        let coarse = TimeGrid::uniform(1.0, 4).unwrap();
        let wb = sample_wiener(&fine, 2, &mut path_rng(1, 1));
        let cb = coarsen_wiener(&wb, &fine, &coarse).unwrap();
        for k in 0..4 {
            for r in 0..2 {
                let expect = wb.increments[2 * k][r] + wb.increments[2 * k + 1][r];
                assert!((cb.increments[k][r] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn box_cubature_matches_closed_form() {
        // f(z) = z^2 on [-1,1], uniform law: integral = lambda * 1/3.
        let ms = MarkSpace::boxed(vec![(-1.0, 1.0)], 256, 2.0).unwrap();
        let v = ms.integrate(|m| match m {
            Mark::Point(p) => p[0] * p[0],
            _ => unreachable!(),
        });
        assert!((v - 2.0 / 3.0).abs() < 1e-4, "got {v}");
    }
}
