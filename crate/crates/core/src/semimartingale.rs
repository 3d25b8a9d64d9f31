//! Finite-dimensional jump-diffusion paths and the term-by-term verifier for
//! the p-power Ito identity.
//!
//! A path is driven by a drift `f`, diffusion rows `g` per Wiener driver, a
//! compensated-jump integrand `h` and a raw-jump integrand `hbar`, with the
//! orthogonality requirement that `h` and `hbar` never act at the same
//! (time, mark). Jump times live on the grid, so jump contributions enter
//! exactly; the compensator of `h` is spread continuously over steps by the
//! left-endpoint rule.


use crate::calculus::{i_operator, j_operator, C2Fn, PNormJet};
use crate::drivers::{sample_jump_stream, sample_wiener, JumpStream, Mark, MarkSpace, WienerBundle};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::rng::path_rng;

/// Driver closures for an R^M path.
pub struct DriverFD {
    pub dim: usize,
    pub n_wiener: usize,
    /// Drift `f(t)` in R^M.
    pub drift: Box<dyn Fn(f64) -> Vec<f64> + Sync>,
    /// Diffusion `g(t)`: `M x n_wiener` matrix, row i = loadings of component i.
    pub diffusion: Box<dyn Fn(f64) -> Vec<Vec<f64>> + Sync>,
    /// Compensated-jump integrand `h(t, z)` in R^M.
    pub jump: Box<dyn Fn(f64, &Mark) -> Vec<f64> + Sync>,
    /// Raw-jump integrand `hbar(t, z)` in R^M.
    pub raw_jump: Box<dyn Fn(f64, &Mark) -> Vec<f64> + Sync>,
}

impl DriverFD {
    /// All-zero drivers, useful as a base for sparse configurations.
    pub fn zero(dim: usize, n_wiener: usize) -> Self {
        DriverFD {
            dim,
            n_wiener,
            drift: Box::new(move |_| vec![0.0; dim]),
            diffusion: Box::new(move |_| vec![vec![0.0; n_wiener]; dim]),
            jump: Box::new(move |_, _| vec![0.0; dim]),
            raw_jump: Box::new(move |_, _| vec![0.0; dim]),
        }
    }
}

/// An R^M semimartingale path on a jump-augmented grid.
pub struct PathFD<'a> {
    pub grid: TimeGrid,
    /// Cadlag values at grid points.
    pub x: Vec<Vec<f64>>,
    /// Left limits at grid points (differ from `x` only at atom times).
    pub x_minus: Vec<Vec<f64>>,
    pub jumps: JumpStream,
    pub wiener: WienerBundle,
    pub drivers: &'a DriverFD,
    pub mark_space: MarkSpace,
    pub x0: Vec<f64>,
    /// For each atom, the grid index of its time.
    pub atom_grid_index: Vec<usize>,
}

/// Per-term evaluation of one p-power identity; `residual` is
/// `lhs - initial - sum(terms)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TermBreakdown {
    pub lhs: f64,
    pub initial: f64,
    pub drift_term: f64,
    pub diffusion_qv_term: f64,
    pub wiener_integral: f64,
    pub raw_jump_term: f64,
    pub compensated_jump_term: f64,
    pub remainder_jump_term: f64,
    pub residual: f64,
}

impl TermBreakdown {
    pub fn terms(&self) -> [(&'static str, f64); 6] {
        [
            ("drift_term", self.drift_term),
            ("diffusion_qv_term", self.diffusion_qv_term),
            ("wiener_integral", self.wiener_integral),
            ("raw_jump_term", self.raw_jump_term),
            ("compensated_jump_term", self.compensated_jump_term),
            ("remainder_jump_term", self.remainder_jump_term),
        ]
    }

    fn close(mut self) -> Self {
        let sum: f64 = self.terms().iter().map(|(_, v)| v).sum();
        self.residual = self.lhs - self.initial - sum;
        self
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_orthogonality(drivers: &DriverFD, grid: &TimeGrid, js: &JumpStream) -> Result<()> {
    for &t in &grid.points {
        for (_, mark) in &js.atoms {
            let h = (drivers.jump)(t, mark);
            let hb = (drivers.raw_jump)(t, mark);
            let h_active = h.iter().any(|&v| v != 0.0);
            let hb_active = hb.iter().any(|&v| v != 0.0);
            if h_active && hb_active {
                return Err(Error::precondition(format!(
                    "orthogonality violated at t={t}, z={mark:?}: both h and hbar nonzero"
                )));
            }
        }
    }
    Ok(())
}

/// Euler step between jumps, exact jump application at atom times, compensator
/// of `h` spread over steps by the left-endpoint rule.
pub fn build_path_fd<'a>(
    drivers: &'a DriverFD,
    js: JumpStream,
    wb: WienerBundle,
    x0: Vec<f64>,
    tg: TimeGrid,
    ms: MarkSpace,
) -> Result<PathFD<'a>> {
    let m = drivers.dim;
    if x0.len() != m {
        return Err(Error::config(format!("x0 has dim {}, drivers expect {m}", x0.len())));
    }
    if wb.increments.len() != tg.n_steps() {
        return Err(Error::config("wiener bundle does not match the grid"));
    }
    check_orthogonality(drivers, &tg, &js)?;

    let atom_grid_index: Vec<usize> =
        js.atoms.iter().map(|(t, _)| tg.index_of(*t)).collect::<Result<_>>()?;

    let n = tg.points.len();
    let mut x = Vec::with_capacity(n);
    let mut x_minus = Vec::with_capacity(n);
    x.push(x0.clone());
    x_minus.push(x0.clone());

    for k in 0..tg.n_steps() {
        let t = tg.points[k];
        let dt = tg.step(k);
        let f = (drivers.drift)(t);
        let g = (drivers.diffusion)(t);
        let comp: Vec<f64> = (0..m)
            .map(|i| ms.integrate(|z| (drivers.jump)(t, z)[i]))
            .collect();
        let mut y = x[k].clone();
        for i in 0..m {
            y[i] += f[i] * dt;
            for r in 0..drivers.n_wiener {
                y[i] += g[i][r] * wb.increments[k][r];
            }
            y[i] -= comp[i] * dt;
        }
        x_minus.push(y.clone());
        // Jumps land after the continuous part of the step, at the right
        // endpoint; multiple atoms sharing a timestamp apply in atom order.
        for (a, (tau, mark)) in js.atoms.iter().enumerate() {
            if atom_grid_index[a] == k + 1 {
                let hb = (drivers.raw_jump)(*tau, mark);
                let h = (drivers.jump)(*tau, mark);
                for i in 0..m {
                    y[i] += hb[i] + h[i];
                }
            }
        }
        x.push(y);
    }

    Ok(PathFD { grid: tg, x, x_minus, jumps: js, wiener: wb, drivers, mark_space: ms, x0, atom_grid_index })
}

/// Evaluate every term of the p-power identity (or of the general C^2
/// identity when `phi` is supplied) at grid time `t`.
///
/// ds-integrands are evaluated at left endpoints with the cadlag value; jump
/// integrands use the stored left limits.
pub fn eval_ito_fd<F: C2Fn + ?Sized>(path: &PathFD, phi: &F, t: f64) -> Result<TermBreakdown> {
    let idx = path.grid.index_of(t)?;
    let m = path.drivers.dim;

    let mut out = TermBreakdown {
        lhs: phi.value(&path.x[idx]),
        initial: phi.value(&path.x0),
        drift_term: 0.0,
        diffusion_qv_term: 0.0,
        wiener_integral: 0.0,
        raw_jump_term: 0.0,
        compensated_jump_term: 0.0,
        remainder_jump_term: 0.0,
        residual: 0.0,
    };

    for k in 0..idx {
        let s = path.grid.points[k];
        let dt = path.grid.step(k);
        let xs = &path.x[k];
        let grad = phi.grad(xs);
        let f = (path.drivers.drift)(s);
        let g = (path.drivers.diffusion)(s);
        out.drift_term += dot(&grad, &f) * dt;
        for r in 0..path.drivers.n_wiener {
            let col: Vec<f64> = (0..m).map(|i| g[i][r]).collect();
            out.wiener_integral += dot(&grad, &col) * path.wiener.increments[k][r];
            out.diffusion_qv_term += 0.5 * phi.hess_bilinear(xs, &col, &col) * dt;
        }
        // Compensator of the pi~ term.
        out.compensated_jump_term -=
            dt * path.mark_space.integrate(|z| dot(&grad, &(path.drivers.jump)(s, z)));
    }

    for (a, (tau, mark)) in path.jumps.atoms.iter().enumerate() {
        let k = path.atom_grid_index[a];
        if k > idx {
            continue;
        }
        // Base point for this atom: left limit at tau, advanced past earlier
        // atoms sharing the same timestamp.
        let mut base = path.x_minus[k].clone();
        for (b, (tb, mb)) in path.jumps.atoms.iter().enumerate() {
            if b < a && path.atom_grid_index[b] == k {
                let hb = (path.drivers.raw_jump)(*tb, mb);
                let h = (path.drivers.jump)(*tb, mb);
                for i in 0..m {
                    base[i] += hb[i] + h[i];
                }
            }
        }
        let hb = (path.drivers.raw_jump)(*tau, mark);
        let h = (path.drivers.jump)(*tau, mark);
        out.raw_jump_term += i_operator(phi, &base, &hb);
        out.compensated_jump_term += dot(&phi.grad(&base), &h);
        out.remainder_jump_term += j_operator(phi, &base, &h);
    }

    Ok(out.close())
}

/// Specialization of [`eval_ito_fd`] to `phi = |.|^p`.
pub fn eval_ito_fd_power(path: &PathFD, p: f64, t: f64) -> Result<TermBreakdown> {
    eval_ito_fd(path, &PNormJet::new(p)?, t)
}

/// Configuration for the p=2 energy-identity Monte Carlo check.
pub struct EnergyConfig<'a> {
    pub drivers: &'a DriverFD,
    pub mark_space: MarkSpace,
    pub grid: TimeGrid,
    pub x0: Vec<f64>,
    pub master_seed: u64,
}

/// Mean-over-paths gap of the p=2 identity with the martingale terms dropped:
/// `|X_T|^2 - |X_0|^2 - int(2 X.f + |g|^2) dt - int int |h|^2 mu dz dt
///  - sum_raw (|X_- + hbar|^2 - |X_-|^2)`.
/// Returns `(mc_mean_gap, std_err)`.
pub fn energy_identity_stat(cfg: &EnergyConfig, n_paths: u64) -> Result<(f64, f64)> {
    let mut gaps = Vec::with_capacity(n_paths as usize);
    for i in 0..n_paths {
        let mut rng = path_rng(cfg.master_seed, i);
        let js = sample_jump_stream(&cfg.mark_space, &cfg.grid, &mut rng)?;
        let tg = cfg.grid.with_jump_times(&js.times())?;
        let wb = sample_wiener(&tg, cfg.drivers.n_wiener, &mut rng);
        let path = build_path_fd(cfg.drivers, js, wb, cfg.x0.clone(), tg, cfg.mark_space.clone())?;
        gaps.push(energy_gap(&path)?);
    }
    let n = n_paths as f64;
    let mean = gaps.iter().sum::<f64>() / n;
    let var = gaps.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

fn energy_gap(path: &PathFD) -> Result<f64> {
    let m = path.drivers.dim;
    let t_end = path.grid.horizon;
    let idx = path.grid.index_of(t_end)?;
    let mut gap = dot(&path.x[idx], &path.x[idx]) - dot(&path.x0, &path.x0);
    for k in 0..idx {
        let s = path.grid.points[k];
        let dt = path.grid.step(k);
        let xs = &path.x[k];
        let f = (path.drivers.drift)(s);
        let g = (path.drivers.diffusion)(s);
        let mut g2 = 0.0;
        for row in g.iter().take(m) {
            for &v in row.iter().take(path.drivers.n_wiener) {
                g2 += v * v;
            }
        }
        gap -= (2.0 * dot(xs, &f) + g2) * dt;
        gap -= dt
            * path.mark_space.integrate(|z| {
                let h = (path.drivers.jump)(s, z);
                dot(&h, &h)
            });
    }
    for (a, (tau, mark)) in path.jumps.atoms.iter().enumerate() {
        let k = path.atom_grid_index[a];
        let base = &path.x_minus[k];
        let hb = (path.drivers.raw_jump)(*tau, mark);
        if hb.iter().any(|&v| v != 0.0) {
            let shifted: Vec<f64> = base.iter().zip(&hb).map(|(x, y)| x + y).collect();
            gap -= dot(&shifted, &shifted) - dot(base, base);
        }
    }
    Ok(gap)
}
