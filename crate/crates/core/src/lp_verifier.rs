//! Term-by-term evaluation of the p-power identities for L_p-valued jump
//! processes, the mollified/pointwise dual-route consistency check, the
//! integration-by-parts check, and the Monte Carlo a priori estimate report.

use rayon::prelude::*;

use crate::calculus::{j_operator, C2Fn, PNormJet};
use crate::drivers::{sample_jump_stream, sample_wiener, MarkSpace};
use crate::error::{Error, Result};
use crate::field::{
    build_field_path, fd_derivative, lp_norm_pow, FieldBuildConfig, FieldDrivers, FieldMode,
    FieldPath, SpaceGrid,
};
use crate::grid::TimeGrid;
use crate::mollifier::{mollify_pathwise, MollKernel};
use crate::rng::path_rng;

/// Every named term of the p-power identity for `|u_t|^p_{L_p}`;
/// `residual = lhs - init - sum(terms)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LpTermBreakdown {
    pub lhs: f64,
    pub init: f64,
    pub wiener_term: f64,
    pub drift_term: f64,
    /// `(p/2)(p-2) int |u|^{p-4} |u^i g^{i.}|^2_{l2}`.
    pub qv_cross_term: f64,
    /// `(p/2) int |u|^{p-2} |g|^2_{l2}`.
    pub qv_trace_term: f64,
    pub compensated_jump_term: f64,
    pub remainder_jump_term: f64,
    /// `-p(p-1) int |u|^{p-2} f^i D_i u` (second-theorem mode only).
    pub by_parts_term: f64,
    pub residual: f64,
}

impl LpTermBreakdown {
    pub fn terms(&self) -> [(&'static str, f64); 7] {
        [
            ("wiener_term", self.wiener_term),
            ("drift_term", self.drift_term),
            ("qv_cross_term", self.qv_cross_term),
            ("qv_trace_term", self.qv_trace_term),
            ("compensated_jump_term", self.compensated_jump_term),
            ("remainder_jump_term", self.remainder_jump_term),
            ("by_parts_term", self.by_parts_term),
        ]
    }

    fn close(mut self) -> Self {
        let total: f64 = self.terms().iter().map(|(_, v)| v).sum();
        self.residual = self.lhs - self.init - total;
        self
    }
}

fn vec_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `|u|^{p-2}` with the 0/0 := 0 convention (and = 1 identically at p = 2).
fn pow_p2(r: f64, p: f64) -> f64 {
    if p == 2.0 {
        1.0
    } else if r == 0.0 {
        0.0
    } else {
        r.powf(p - 2.0)
    }
}

/// Left limit at the atom's grid point, advanced past earlier atoms sharing
/// the same timestamp.
fn atom_base(fp: &FieldPath, atom: usize) -> Vec<f64> {
    let k = fp.atom_grid_index[atom];
    let mut base = fp.u_minus[k].clone();
    for b in 0..atom {
        if fp.atom_grid_index[b] == k {
            for (x, h) in base.iter_mut().zip(&fp.h_atoms[b]) {
                *x += *h;
            }
        }
    }
    base
}

/// Evaluate the p-power identity for `|u_t|^p_{L_p}` on a field path.
///
/// In `Thm21` mode the drift term uses the path's full pointwise drift; in
/// `Thm22` mode it uses `f^0` alone and the integration-by-parts term
/// carries the `f^i` contribution.
pub fn eval_ito_lp(fp: &FieldPath, p: f64, t: f64, mode: FieldMode) -> Result<LpTermBreakdown> {
    PNormJet::new(p)?;
    if mode == FieldMode::Thm22 {
        if fp.mode != FieldMode::Thm22 || fp.m != 1 {
            return Err(Error::precondition("second-theorem evaluation requires an M = 1 path built in that mode"));
        }
        if fp.fi.len() != fp.space.dim {
            return Err(Error::precondition("second-theorem evaluation requires f^i drivers for every axis"));
        }
    }
    let idx = fp.grid.index_of(t)?;
    let vol = fp.space.cell_volume();
    let (m, rw, n_cells) = (fp.m, fp.n_wiener, fp.space.n_cells());

    let mut out = LpTermBreakdown {
        lhs: lp_norm_pow(&fp.u[idx], &fp.space, m, p),
        init: lp_norm_pow(&fp.psi, &fp.space, m, p),
        ..Default::default()
    };

    for k in 0..idx {
        let dt = fp.grid.step(k);
        let u = &fp.u[k];
        let drift = match mode {
            FieldMode::Thm21 => &fp.drift_total[k],
            FieldMode::Thm22 => &fp.f0[k],
        };
        let du: Vec<Vec<f64>> = if mode == FieldMode::Thm22 {
            (0..fp.space.dim)
                .map(|axis| fd_derivative(u, &fp.space, 1, axis))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        let mut drift_acc = 0.0;
        let mut cross_acc = 0.0;
        let mut trace_acc = 0.0;
        let mut comp_acc = 0.0;
        let mut bp_acc = 0.0;
        let mut wiener_acc = vec![0.0; rw];
        for c in 0..n_cells {
            let uv = &u[c * m..(c + 1) * m];
            let r = vec_norm(uv);
            let rp2 = pow_p2(r, p);
            drift_acc += rp2 * dot(uv, &drift[c * m..(c + 1) * m]);
            comp_acc += rp2 * dot(uv, &fp.comp_h[k][c * m..(c + 1) * m]);
            let mut gsq = 0.0;
            let mut ug_sq = 0.0;
            for rr in 0..rw {
                let mut ug = 0.0;
                for i in 0..m {
                    let gv = fp.g[k][(c * m + i) * rw + rr];
                    gsq += gv * gv;
                    ug += uv[i] * gv;
                }
                ug_sq += ug * ug;
                wiener_acc[rr] += rp2 * ug;
            }
            trace_acc += rp2 * gsq;
            if p != 2.0 && r != 0.0 {
                cross_acc += r.powf(p - 4.0) * ug_sq;
            }
            if mode == FieldMode::Thm22 {
                for (axis, du_ax) in du.iter().enumerate() {
                    bp_acc += rp2 * fp.fi[axis][k][c] * du_ax[c];
                }
            }
        }
        out.drift_term += p * drift_acc * vol * dt;
        out.qv_cross_term += 0.5 * p * (p - 2.0) * cross_acc * vol * dt;
        out.qv_trace_term += 0.5 * p * trace_acc * vol * dt;
        out.compensated_jump_term -= p * comp_acc * vol * dt;
        out.by_parts_term -= p * (p - 1.0) * bp_acc * vol * dt;
        for rr in 0..rw {
            out.wiener_term += p * wiener_acc[rr] * vol * fp.wiener.increments[k][rr];
        }
    }

    for a in 0..fp.jumps.atoms.len() {
        if fp.atom_grid_index[a] > idx {
            continue;
        }
        let base = atom_base(fp, a);
        let h = &fp.h_atoms[a];
        let mut comp_acc = 0.0;
        let mut rem_acc = 0.0;
        for c in 0..n_cells {
            let bv = &base[c * m..(c + 1) * m];
            let hv = &h[c * m..(c + 1) * m];
            let r = vec_norm(bv);
            let rp2 = pow_p2(r, p);
            let lin = p * rp2 * dot(bv, hv);
            let shifted: Vec<f64> = bv.iter().zip(hv).map(|(x, y)| x + y).collect();
            comp_acc += lin;
            rem_acc += vec_norm(&shifted).powf(p) - r.powf(p) - lin;
        }
        out.compensated_jump_term += comp_acc * vol;
        out.remainder_jump_term += rem_acc * vol;
    }

    Ok(out.close())
}

/// Evaluation of the collapsed single-component display: the two quadratic
/// variation terms combined into `(p/2)(p-1) int |u|^{p-2} |g|^2_{l2}`.
/// Only the combined term differs from [`eval_ito_lp`]; requires `M = 1`.
pub fn eval_ito_lp_simple(fp: &FieldPath, p: f64, t: f64) -> Result<LpTermBreakdown> {
    if fp.m != 1 {
        return Err(Error::precondition("the collapsed display requires M = 1"));
    }
    let mut out = eval_ito_lp(fp, p, t, FieldMode::Thm21)?;
    let idx = fp.grid.index_of(t)?;
    let vol = fp.space.cell_volume();
    let n_cells = fp.space.n_cells();
    let mut combined = 0.0;
    for k in 0..idx {
        let dt = fp.grid.step(k);
        let mut acc = 0.0;
        for c in 0..n_cells {
            let r = fp.u[k][c].abs();
            let mut gsq = 0.0;
            for rr in 0..fp.n_wiener {
                let gv = fp.g[k][c * fp.n_wiener + rr];
                gsq += gv * gv;
            }
            acc += pow_p2(r, p) * gsq;
        }
        combined += 0.5 * p * (p - 1.0) * acc * vol * dt;
    }
    out.qv_cross_term = 0.0;
    out.qv_trace_term = combined;
    Ok(out.close())
}

/// Pointwise-route residual: the one-point Ito residual evaluated per cell
/// with the jet calculus, then integrated over x. Independent arithmetic from
/// [`eval_ito_lp`] (per-cell closure instead of per-term integrals).
pub fn pointwise_residual_integrated(fp: &FieldPath, p: f64, t: f64) -> Result<f64> {
    let jet = PNormJet::new(p)?;
    let idx = fp.grid.index_of(t)?;
    let vol = fp.space.cell_volume();
    let (m, rw, n_cells) = (fp.m, fp.n_wiener, fp.space.n_cells());
    let mut total = 0.0;
    for c in 0..n_cells {
        let at = |slice: &[f64]| slice[c * m..(c + 1) * m].to_vec();
        let mut res = jet.value(&at(&fp.u[idx])) - jet.value(&at(&fp.psi));
        for k in 0..idx {
            let dt = fp.grid.step(k);
            let uv = at(&fp.u[k]);
            let grad = jet.grad(&uv);
            res -= dot(&grad, &at(&fp.drift_total[k])) * dt;
            res += dot(&grad, &at(&fp.comp_h[k])) * dt;
            for rr in 0..rw {
                let g_col: Vec<f64> =
                    (0..m).map(|i| fp.g[k][(c * m + i) * rw + rr]).collect();
                res -= dot(&grad, &g_col) * fp.wiener.increments[k][rr];
                res -= 0.5 * jet.hess_bilinear(&uv, &g_col, &g_col) * dt;
            }
        }
        for a in 0..fp.jumps.atoms.len() {
            if fp.atom_grid_index[a] > idx {
                continue;
            }
            let base = at(&atom_base(fp, a));
            let hv = at(&fp.h_atoms[a]);
            res -= dot(&jet.grad(&base), &hv);
            res -= j_operator(&jet, &base, &hv);
        }
        total += res * vol;
    }
    Ok(total)
}

/// Dual-route consistency of the identity on a mollified path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MollConsistency {
    /// Residual of the L_p identity evaluated on the mollified path.
    pub residual_eps: f64,
    /// Pointwise residual integrated over x on the same mollified path.
    pub fubini_residual: f64,
    pub gap: f64,
}

/// Evaluate the identity on `u^(eps)` along both routes: integrate each term
/// over x (L_p route) versus integrate the pointwise residual (Fubini route).
pub fn ito_lp_mollified_consistency(
    fp: &FieldPath,
    kernel: &MollKernel,
    p: f64,
    t: f64,
) -> Result<MollConsistency> {
    let mfp = mollify_pathwise(fp, kernel)?;
    let residual_eps = eval_ito_lp(&mfp, p, t, FieldMode::Thm21)?.residual;
    let fubini_residual = pointwise_residual_integrated(&mfp, p, t)?;
    Ok(MollConsistency { residual_eps, fubini_residual, gap: residual_eps - fubini_residual })
}

/// Both sides of the integration-by-parts identity at grid time `t`:
/// `int |u|^{p-2} u D_i f^i dx  =  -(p-1) int |u|^{p-2} f^i D_i u dx`.
pub fn by_parts_check(fp: &FieldPath, p: f64, t: f64) -> Result<(f64, f64)> {
    if fp.m != 1 || fp.fi.len() != fp.space.dim {
        return Err(Error::precondition("by-parts check requires M = 1 and f^i drivers for every axis"));
    }
    let k = fp.grid.index_of(t)?;
    if k >= fp.grid.n_steps() {
        return Err(Error::domain("by-parts check needs a grid time with a driver sample, t < T"));
    }
    let u = &fp.u[k];
    let vol = fp.space.cell_volume();
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for axis in 0..fp.space.dim {
        let dfi = fd_derivative(&fp.fi[axis][k], &fp.space, 1, axis)?;
        let du = fd_derivative(u, &fp.space, 1, axis)?;
        for c in 0..fp.space.n_cells() {
            let rp2 = pow_p2(u[c].abs(), p);
            lhs += rp2 * u[c] * dfi[c] * vol;
            rhs -= (p - 1.0) * rp2 * fp.fi[axis][k][c] * du[c] * vol;
        }
    }
    Ok((lhs, rhs))
}

/// Monte Carlo setup for the a priori estimate report.
pub struct AprioriConfig<'a> {
    pub drivers: &'a FieldDrivers,
    pub base_grid: TimeGrid,
    pub space_grid: SpaceGrid,
    pub mark_space: MarkSpace,
    pub p: f64,
    pub master_seed: u64,
}

/// Empirical sides of the a priori bound. Every right-hand component is
/// stored with its horizon weight already applied; `ratio` is
/// `(lhs - psi_term) / (sum of the remaining components)`, zero when that
/// sum vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AprioriReport {
    /// `E sup_t |u_t|^p_{L_p}` (discrete max over grid times).
    pub lhs: f64,
    /// `2 E |psi|^p_{L_p}`.
    pub psi_term: f64,
    /// `T^{p-1} E int |f^0|^p_{L_p}`.
    pub f0_term: f64,
    /// `E int |h|^p_{L_p(L_p)}`.
    pub hp_term: f64,
    /// `T^{(p-2)/2} E int |g|^p_{L_p}`.
    pub g_term: f64,
    /// `T^{(p-2)/2} sum_i E int |f^i|^p_{L_p}`.
    pub fi_term: f64,
    /// `T^{(p-2)/2} E int |Du|^p_{L_p}`.
    pub du_term: f64,
    /// `T^{(p-2)/2} E int |h|^p_{L_p(L_2)}`.
    pub h2_term: f64,
    pub ratio: f64,
}

impl AprioriReport {
    pub fn rhs_remainder(&self) -> f64 {
        self.f0_term + self.hp_term + self.g_term + self.fi_term + self.du_term + self.h2_term
    }
}

/// Per-path raw statistics, before horizon weights.
fn apriori_path_stats(cfg: &AprioriConfig, path_index: u64) -> Result<[f64; 8]> {
    let mut rng = path_rng(cfg.master_seed, path_index);
    let js = sample_jump_stream(&cfg.mark_space, &cfg.base_grid, &mut rng)?;
    let tg = cfg.base_grid.with_jump_times(&js.times())?;
    let wb = sample_wiener(&tg, cfg.drivers.n_wiener, &mut rng);
    let build = FieldBuildConfig {
        time_grid: tg,
        space_grid: cfg.space_grid.clone(),
        mark_space: cfg.mark_space.clone(),
        p: cfg.p,
    };
    let fp = build_field_path(cfg.drivers, js, wb, &build)?;
    let sg = &fp.space;
    let (m, rw, p) = (fp.m, fp.n_wiener, cfg.p);
    let vol = sg.cell_volume();

    let sup = fp
        .u
        .iter()
        .map(|s| lp_norm_pow(s, sg, m, p))
        .fold(0.0f64, f64::max);
    let psi_pow = lp_norm_pow(&fp.psi, sg, m, p);

    let mut f0_int = 0.0;
    let mut hp_int = 0.0;
    let mut g_int = 0.0;
    let mut fi_int = 0.0;
    let mut du_int = 0.0;
    let mut h2_int = 0.0;
    for k in 0..fp.grid.n_steps() {
        let dt = fp.grid.step(k);
        f0_int += lp_norm_pow(&fp.f0[k], sg, m, p) * dt;
        for c in 0..sg.n_cells() {
            hp_int += fp.h_pow_p[k][c] * vol * dt;
            h2_int += fp.h_pow_2[k][c].powf(p / 2.0) * vol * dt;
            let gsq: f64 = (0..m * rw)
                .map(|j| {
                    let v = fp.g[k][c * m * rw + j];
                    v * v
                })
                .sum();
            g_int += gsq.powf(p / 2.0) * vol * dt;
        }
        for axis_samples in &fp.fi {
            fi_int += lp_norm_pow(&axis_samples[k], sg, 1, p) * dt;
        }
        let du_axes: Vec<Vec<f64>> = (0..sg.dim)
            .map(|axis| fd_derivative(&fp.u[k], sg, m, axis))
            .collect::<Result<_>>()?;
        for c in 0..sg.n_cells() {
            let dsq: f64 = du_axes
                .iter()
                .map(|d| {
                    d[c * m..(c + 1) * m].iter().map(|v| v * v).sum::<f64>()
                })
                .sum();
            du_int += dsq.powf(p / 2.0) * vol * dt;
        }
    }
    Ok([sup, psi_pow, f0_int, hp_int, g_int, fi_int, du_int, h2_int])
}

/// Monte Carlo estimate of every side of the a priori bound over `k_paths`
/// independent paths; parallel over paths with a deterministic reduction.
pub fn apriori_estimate_report(cfg: &AprioriConfig, k_paths: u64) -> Result<AprioriReport> {
    if cfg.drivers.mode != FieldMode::Thm22 {
        return Err(Error::precondition("a priori report requires second-theorem drivers"));
    }
    let stats: Vec<[f64; 8]> = (0..k_paths)
        .into_par_iter()
        .map(|i| apriori_path_stats(cfg, i))
        .collect::<Result<_>>()?;
    let n = k_paths as f64;
    let mut mean = [0.0f64; 8];
    for s in &stats {
        for (acc, v) in mean.iter_mut().zip(s) {
            *acc += v / n;
        }
    }
    let t_hor = cfg.base_grid.horizon;
    let p = cfg.p;
    let w_diff = t_hor.powf((p - 2.0) / 2.0);
    let mut rep = AprioriReport {
        lhs: mean[0],
        psi_term: 2.0 * mean[1],
        f0_term: t_hor.powf(p - 1.0) * mean[2],
        hp_term: mean[3],
        g_term: w_diff * mean[4],
        fi_term: w_diff * mean[5],
        du_term: w_diff * mean[6],
        h2_term: w_diff * mean[7],
        ..Default::default()
    };
    let denom = rep.rhs_remainder();
    rep.ratio = if denom == 0.0 { 0.0 } else { (rep.lhs - rep.psi_term) / denom };
    Ok(rep)
}
