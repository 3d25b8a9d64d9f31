//! L_p- and W^1_p-valued processes on a uniform spatial grid: norms, weak
//! pairings, finite-difference derivatives, and the pointwise Euler/jump
//! recursion that builds a field path from its drivers.
//!
//! All spatial integrals use the midpoint/rectangle rule on cell centers, so
//! Hoelder-type inequalities hold exactly at grid level.

use std::io::Write;

use crate::drivers::{JumpStream, Mark, MarkSpace, WienerBundle};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// Uniform grid of cell centers on the box `[-L, L]^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceGrid {
    pub dim: usize,
    pub half_width: f64,
    pub n_cells_axis: usize,
    pub spacing: f64,
}

impl SpaceGrid {
    pub fn new(dim: usize, half_width: f64, n_cells_axis: usize) -> Result<Self> {
        if dim == 0 || dim > 3 {
            return Err(Error::config(format!("spatial dimension must be 1..3, got {dim}")));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::config("box half-width must be positive and finite"));
        }
        if n_cells_axis < 4 {
            return Err(Error::config("need at least 4 cells per axis"));
        }
        let spacing = 2.0 * half_width / n_cells_axis as f64;
        Ok(SpaceGrid { dim, half_width, n_cells_axis, spacing })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells_axis.pow(self.dim as u32)
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    pub fn axis_index(&self, flat: usize, axis: usize) -> usize {
        (flat / self.n_cells_axis.pow(axis as u32)) % self.n_cells_axis
    }

    pub fn center(&self, flat: usize) -> Vec<f64> {
        (0..self.dim)
            .map(|a| -self.half_width + (self.axis_index(flat, a) as f64 + 0.5) * self.spacing)
            .collect()
    }

    /// Flat index shifted by `offset` cells along `axis`; None off-grid.
    pub fn neighbor(&self, flat: usize, axis: usize, offset: isize) -> Option<usize> {
        let i = self.axis_index(flat, axis) as isize + offset;
        if i < 0 || i >= self.n_cells_axis as isize {
            return None;
        }
        let stride = self.n_cells_axis.pow(axis as u32);
        let old = self.axis_index(flat, axis);
        Some(flat - old * stride + i as usize * stride)
    }

    /// True when the cell lies within `margin` cells of the box boundary.
    pub fn in_boundary_layer(&self, flat: usize, margin: usize) -> bool {
        (0..self.dim).any(|a| {
            let i = self.axis_index(flat, a);
            i < margin || i >= self.n_cells_axis - margin
        })
    }
}

/// Euclidean norm of the M-vector stored at `cell`.
fn cell_norm(field: &[f64], m: usize, cell: usize) -> f64 {
    field[cell * m..(cell + 1) * m].iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `int |field(x)|^p dx` by the rectangle rule (the p-th power, no root).
pub fn lp_norm_pow(field: &[f64], grid: &SpaceGrid, m: usize, p: f64) -> f64 {
    let vol = grid.cell_volume();
    (0..grid.n_cells()).map(|c| cell_norm(field, m, c).powf(p) * vol).sum()
}

/// `L_p` norm of an M-vector field sampled on the grid.
pub fn lp_norm(field: &[f64], grid: &SpaceGrid, m: usize, p: f64) -> f64 {
    lp_norm_pow(field, grid, m, p).powf(1.0 / p)
}

/// `W^1_p` seminorm-completed norm: `|u|_Lp + sum_i |D_i u|_Lp`.
pub fn w1p_norm(field: &[f64], grid: &SpaceGrid, m: usize, p: f64) -> Result<f64> {
    let mut total = lp_norm(field, grid, m, p);
    for axis in 0..grid.dim {
        let d = fd_derivative(field, grid, m, axis)?;
        total += lp_norm(&d, grid, m, p);
    }
    Ok(total)
}

/// Componentwise `(field, phi)` with a scalar test function sampled on cells.
///
/// `phi` must vanish on the outermost cell layer (compact support on the
/// grid); anything else is a support overflow.
pub fn weak_pairing(field: &[f64], phi: &[f64], grid: &SpaceGrid, m: usize) -> Result<Vec<f64>> {
    if phi.len() != grid.n_cells() {
        return Err(Error::config("test function not sampled on this grid"));
    }
    for c in 0..grid.n_cells() {
        if grid.in_boundary_layer(c, 1) && phi[c] != 0.0 {
            return Err(Error::config("support overflow: test function touches the boundary layer"));
        }
    }
    let vol = grid.cell_volume();
    let mut out = vec![0.0; m];
    for c in 0..grid.n_cells() {
        for i in 0..m {
            out[i] += field[c * m + i] * phi[c] * vol;
        }
    }
    Ok(out)
}

/// Central difference along `axis`; the field must vanish within one cell of
/// the boundary so the zero extension is exact.
pub fn fd_derivative(field: &[f64], grid: &SpaceGrid, m: usize, axis: usize) -> Result<Vec<f64>> {
    if axis >= grid.dim {
        return Err(Error::config(format!("axis {axis} out of range for dim {}", grid.dim)));
    }
    for c in 0..grid.n_cells() {
        if grid.in_boundary_layer(c, 1) && (0..m).any(|i| field[c * m + i] != 0.0) {
            return Err(Error::precondition("margin violation: field nonzero in the boundary layer"));
        }
    }
    let mut out = vec![0.0; field.len()];
    let inv2h = 1.0 / (2.0 * grid.spacing);
    for c in 0..grid.n_cells() {
        let up = grid.neighbor(c, axis, 1);
        let down = grid.neighbor(c, axis, -1);
        for i in 0..m {
            let hi = up.map_or(0.0, |n| field[n * m + i]);
            let lo = down.map_or(0.0, |n| field[n * m + i]);
            out[c * m + i] = (hi - lo) * inv2h;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldMode {
    /// Drift enters as a plain `L_p` drift `f`.
    Thm21,
    /// Drift enters as `f^0 + D_i f^i` with `M = 1`.
    Thm22,
}

/// Driver closures for a field path.
pub struct FieldDrivers {
    pub m: usize,
    pub n_wiener: usize,
    pub mode: FieldMode,
    pub initial: Box<dyn Fn(&[f64]) -> Vec<f64> + Sync>,
    /// `f^0(t, x)` (the only drift component in Thm21 mode).
    pub f0: Box<dyn Fn(f64, &[f64]) -> Vec<f64> + Sync>,
    /// `f^i(t, x)` per axis, Thm22 mode only (scalar fields, `M = 1`).
    pub fi: Vec<Box<dyn Fn(f64, &[f64]) -> f64 + Sync>>,
    /// `g(t, x)`: `M x n_wiener`.
    pub g: Box<dyn Fn(f64, &[f64]) -> Vec<Vec<f64>> + Sync>,
    /// `h(t, x, z)` in R^M.
    pub h: Box<dyn Fn(f64, &[f64], &Mark) -> Vec<f64> + Sync>,
}

impl FieldDrivers {
    pub fn zero(m: usize, n_wiener: usize, mode: FieldMode) -> Self {
        FieldDrivers {
            m,
            n_wiener,
            mode,
            initial: Box::new(move |_| vec![0.0; m]),
            f0: Box::new(move |_, _| vec![0.0; m]),
            fi: Vec::new(),
            g: Box::new(move |_, _| vec![vec![0.0; n_wiener]; m]),
            h: Box::new(move |_, _, _| vec![0.0; m]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == FieldMode::Thm22 && self.m != 1 {
            return Err(Error::config("Thm22 mode requires M = 1"));
        }
        if self.mode == FieldMode::Thm21 && !self.fi.is_empty() {
            return Err(Error::config("f^i drivers are only meaningful in Thm22 mode"));
        }
        Ok(())
    }
}

/// An L_p-valued path with its drivers sampled on (time grid x cells), so the
/// verifiers and the mollifier work on plain arrays.
pub struct FieldPath {
    pub grid: TimeGrid,
    pub space: SpaceGrid,
    pub m: usize,
    pub n_wiener: usize,
    pub mode: FieldMode,
    /// Cadlag field values per grid time, flattened `cells x M`.
    pub u: Vec<Vec<f64>>,
    /// Left limits per grid time (differ from `u` only at atom times).
    pub u_minus: Vec<Vec<f64>>,
    pub psi: Vec<f64>,
    /// Left-endpoint samples per step.
    pub f0: Vec<Vec<f64>>,
    /// `[axis][step]` samples of `f^i` (empty in Thm21 mode).
    pub fi: Vec<Vec<Vec<f64>>>,
    /// Total pointwise drift per step (`f0` or `f0 + D_i f^i`).
    pub drift_total: Vec<Vec<f64>>,
    /// `[step]` samples flattened `cells x M x n_wiener`.
    pub g: Vec<Vec<f64>>,
    /// `int_Z h(t_k, x, z) mu(dz)` per step, `cells x M`.
    pub comp_h: Vec<Vec<f64>>,
    /// `int_Z |h|^p mu(dz)` and `int_Z |h|^2 mu(dz)` per step and cell.
    pub h_pow_p: Vec<Vec<f64>>,
    pub h_pow_2: Vec<Vec<f64>>,
    /// Jump amplitude per atom, `cells x M`.
    pub h_atoms: Vec<Vec<f64>>,
    pub atom_grid_index: Vec<usize>,
    pub jumps: JumpStream,
    pub wiener: WienerBundle,
    pub mark_space: MarkSpace,
    /// Exponent used when sampling `h_pow_p`.
    pub p_sampled: f64,
}

pub struct FieldBuildConfig {
    pub time_grid: TimeGrid,
    pub space_grid: SpaceGrid,
    pub mark_space: MarkSpace,
    /// Exponent for the sampled `|h|^p` mark-norms.
    pub p: f64,
}

/// Sample the drivers on the grid and run, per cell, the same Euler/jump
/// recursion as the finite-dimensional path builder.
pub fn build_field_path(
    drivers: &FieldDrivers,
    js: JumpStream,
    wb: WienerBundle,
    cfg: &FieldBuildConfig,
) -> Result<FieldPath> {
    drivers.validate()?;
    let tg = &cfg.time_grid;
    let sg = &cfg.space_grid;
    let m = drivers.m;
    let rw = drivers.n_wiener;
    if wb.increments.len() != tg.n_steps() {
        return Err(Error::config("wiener bundle does not match the time grid"));
    }
    let n_cells = sg.n_cells();
    let atom_grid_index: Vec<usize> =
        js.atoms.iter().map(|(t, _)| tg.index_of(*t)).collect::<Result<_>>()?;

    let psi: Vec<f64> = sample_vector_field(sg, m, |x| (drivers.initial)(x));

    let n_steps = tg.n_steps();
    let mut f0 = Vec::with_capacity(n_steps);
    let mut fi: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(n_steps); drivers.fi.len()];
    let mut drift_total = Vec::with_capacity(n_steps);
    let mut g = Vec::with_capacity(n_steps);
    let mut comp_h = Vec::with_capacity(n_steps);
    let mut h_pow_p = Vec::with_capacity(n_steps);
    let mut h_pow_2 = Vec::with_capacity(n_steps);
    for k in 0..n_steps {
        let t = tg.points[k];
        let f0_k = sample_vector_field(sg, m, |x| (drivers.f0)(t, x));
        let mut drift_k = f0_k.clone();
        for (axis, fi_fun) in drivers.fi.iter().enumerate() {
            let fi_k: Vec<f64> = (0..n_cells).map(|c| fi_fun(t, &sg.center(c))).collect();
            let d = fd_derivative(&fi_k, sg, 1, axis)?;
            for c in 0..n_cells {
                drift_k[c * m] += d[c];
            }
            fi[axis].push(fi_k);
        }
        let mut g_k = vec![0.0; n_cells * m * rw];
        for c in 0..n_cells {
            let x = sg.center(c);
            let gv = (drivers.g)(t, &x);
            for i in 0..m {
                for r in 0..rw {
                    g_k[(c * m + i) * rw + r] = gv[i][r];
                }
            }
        }
        let mut comp_k = vec![0.0; n_cells * m];
        let mut hp_k = vec![0.0; n_cells];
        let mut h2_k = vec![0.0; n_cells];
        for c in 0..n_cells {
            let x = sg.center(c);
            for i in 0..m {
                comp_k[c * m + i] = cfg.mark_space.integrate(|z| (drivers.h)(t, &x, z)[i]);
            }
            hp_k[c] = cfg.mark_space.integrate(|z| {
                let hv = (drivers.h)(t, &x, z);
                hv.iter().map(|v| v * v).sum::<f64>().sqrt().powf(cfg.p)
            });
            h2_k[c] = cfg.mark_space.integrate(|z| {
                let hv = (drivers.h)(t, &x, z);
                hv.iter().map(|v| v * v).sum::<f64>()
            });
        }
        f0.push(f0_k);
        drift_total.push(drift_k);
        g.push(g_k);
        comp_h.push(comp_k);
        h_pow_p.push(hp_k);
        h_pow_2.push(h2_k);
    }

    let h_atoms: Vec<Vec<f64>> = js
        .atoms
        .iter()
        .map(|(tau, mark)| sample_vector_field(sg, m, |x| (drivers.h)(*tau, x, mark)))
        .collect();

    let mut u = Vec::with_capacity(n_steps + 1);
    let mut u_minus = Vec::with_capacity(n_steps + 1);
    u.push(psi.clone());
    u_minus.push(psi.clone());
    for k in 0..n_steps {
        let dt = tg.step(k);
        let mut y = u[k].clone();
        for c in 0..n_cells {
            for i in 0..m {
                let j = c * m + i;
                y[j] += drift_total[k][j] * dt;
                for r in 0..rw {
                    y[j] += g[k][j * rw + r] * wb.increments[k][r];
                }
                y[j] -= comp_h[k][j] * dt;
            }
        }
        u_minus.push(y.clone());
        for (a, _) in js.atoms.iter().enumerate() {
            if atom_grid_index[a] == k + 1 {
                for (yj, hj) in y.iter_mut().zip(&h_atoms[a]) {
                    *yj += *hj;
                }
            }
        }
        u.push(y);
    }

    Ok(FieldPath {
        grid: tg.clone(),
        space: sg.clone(),
        m,
        n_wiener: rw,
        mode: drivers.mode,
        u,
        u_minus,
        psi,
        f0,
        fi,
        drift_total,
        g,
        comp_h,
        h_pow_p,
        h_pow_2,
        h_atoms,
        atom_grid_index,
        jumps: js,
        wiener: wb,
        mark_space: cfg.mark_space.clone(),
        p_sampled: cfg.p,
    })
}

pub fn sample_vector_field<F: Fn(&[f64]) -> Vec<f64>>(sg: &SpaceGrid, m: usize, f: F) -> Vec<f64> {
    let mut out = vec![0.0; sg.n_cells() * m];
    for c in 0..sg.n_cells() {
        let v = f(&sg.center(c));
        out[c * m..(c + 1) * m].copy_from_slice(&v);
    }
    out
}

pub fn sample_scalar_field<F: Fn(&[f64]) -> f64>(sg: &SpaceGrid, f: F) -> Vec<f64> {
    (0..sg.n_cells()).map(|c| f(&sg.center(c))).collect()
}

impl FieldPath {
    /// Snapshot export: one `x_index,component,value` row per entry, cells in
    /// flat order (axis 0 fastest), components inner.
    pub fn export_snapshot_csv<W: Write>(&self, time_index: usize, out: &mut W) -> Result<()> {
        if time_index >= self.u.len() {
            return Err(Error::domain(format!("time index {time_index} out of range")));
        }
        writeln!(out, "x_index,component,value")?;
        for c in 0..self.space.n_cells() {
            for i in 0..self.m {
                writeln!(out, "{c},{i},{:.17e}", self.u[time_index][c * self.m + i])?;
            }
        }
        Ok(())
    }
}
