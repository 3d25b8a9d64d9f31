//! Kernel smoothing `u -> u^(eps)` by discrete convolution with a scaled
//! bump kernel. Weights are renormalized on the grid so the unit-mass,
//! nonnegativity, and L_p-contraction properties hold exactly at grid level.

use crate::error::{Error, Result};
use crate::field::{FieldPath, SpaceGrid};

/// Scaled bump kernel `k_eps(y) = eps^-d k(y/eps)` sampled on the grid
/// stencil `|y| < eps`, with weights rescaled to sum to 1 exactly.
#[derive(Debug, Clone)]
pub struct MollKernel {
    pub eps: f64,
    pub dim: usize,
    pub spacing: f64,
    /// Stencil radius in cells; every offset satisfies `|offset| <= radius`.
    pub radius: usize,
    /// `(per-axis cell offsets, weight)`, weights nonnegative, sum exactly 1.
    pub stencil: Vec<(Vec<isize>, f64)>,
}

/// The standard smooth bump `exp(-1/(1-|y|^2))` on `|y| < 1`, else 0.
fn base_kernel(y_sq: f64) -> f64 {
    if y_sq >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - y_sq)).exp()
    }
}

impl MollKernel {
    pub fn new(space: &SpaceGrid, eps: f64) -> Result<Self> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::config("mollifier radius must be positive"));
        }
        if eps < 2.0 * space.spacing {
            return Err(Error::config(format!(
                "mollifier radius {eps} not resolvable on grid with spacing {}",
                space.spacing
            )));
        }
        let radius = (eps / space.spacing).ceil() as usize;
        let mut stencil = Vec::new();
        let side = 2 * radius + 1;
        for flat in 0..side.pow(space.dim as u32) {
            let offsets: Vec<isize> = (0..space.dim)
                .map(|a| ((flat / side.pow(a as u32)) % side) as isize - radius as isize)
                .collect();
            let y_sq: f64 = offsets
                .iter()
                .map(|&o| {
                    let y = o as f64 * space.spacing / eps;
                    y * y
                })
                .sum();
            let w = base_kernel(y_sq);
            if w > 0.0 {
                stencil.push((offsets, w));
            }
        }
        let total: f64 = stencil.iter().map(|(_, w)| w).sum();
        for (_, w) in stencil.iter_mut() {
            *w /= total;
        }
        // Push the rounding slack onto the central weight so the sum is 1
        // bit-exactly; that makes the contraction inequality grid-exact.
        let slack = 1.0 - stencil.iter().map(|(_, w)| w).sum::<f64>();
        let central = stencil
            .iter()
            .position(|(o, _)| o.iter().all(|&v| v == 0))
            .expect("stencil contains the origin");
        stencil[central].1 += slack;
        Ok(MollKernel { eps, dim: space.dim, spacing: space.spacing, radius, stencil })
    }

    /// `L_q` norm of the grid realization of `k_eps` (pointwise values are
    /// `weight / cell_volume`); with `q = p/(p-1)` this is the constant in the
    /// sup-bound `|u^(eps)(x)| <= N_eps |u|_{L_p}`.
    pub fn lq_norm(&self, q: f64) -> f64 {
        let vol = self.spacing.powi(self.dim as i32);
        self.stencil
            .iter()
            .map(|(_, w)| (w / vol).powf(q) * vol)
            .sum::<f64>()
            .powf(1.0 / q)
    }
}

fn check_margin(field: &[f64], space: &SpaceGrid, comps: usize, radius: usize) -> Result<()> {
    for c in 0..space.n_cells() {
        if space.in_boundary_layer(c, radius)
            && field[c * comps..(c + 1) * comps].iter().any(|&v| v != 0.0)
        {
            return Err(Error::precondition(
                "support margin violated: field nonzero within the mollifier radius of the boundary",
            ));
        }
    }
    Ok(())
}

/// Discrete mollification of a field with `comps` values per cell. The field
/// must vanish within `radius` cells of the boundary so the zero extension
/// agrees with true convolution.
pub fn mollify(
    field: &[f64],
    space: &SpaceGrid,
    comps: usize,
    kernel: &MollKernel,
) -> Result<Vec<f64>> {
    if kernel.dim != space.dim || kernel.spacing != space.spacing {
        return Err(Error::config("kernel was built for a different grid"));
    }
    if field.len() != space.n_cells() * comps {
        return Err(Error::config("field length does not match grid"));
    }
    check_margin(field, space, comps, kernel.radius)?;
    let mut out = vec![0.0; field.len()];
    for c in 0..space.n_cells() {
        'stencil: for (offsets, w) in &kernel.stencil {
            let mut src = c;
            for (axis, &o) in offsets.iter().enumerate() {
                match space.neighbor(src, axis, -o) {
                    Some(n) => src = n,
                    None => continue 'stencil,
                }
            }
            for i in 0..comps {
                out[c * comps + i] += w * field[src * comps + i];
            }
        }
    }
    Ok(out)
}

/// Mollify every time slice (values and left limits) and every sampled
/// driver array of a field path, giving the path `u^(eps)` driven by the
/// mollified drivers.
///
/// The sampled mark-norm arrays `h_pow_p` / `h_pow_2` are nonlinear in `h`
/// and are zeroed on the result; a priori estimates are meant to run on
/// unmollified paths.
pub fn mollify_pathwise(fp: &FieldPath, kernel: &MollKernel) -> Result<FieldPath> {
    let sg = &fp.space;
    let m = fp.m;
    let rw = fp.n_wiener;
    let moll_all = |slices: &[Vec<f64>], comps: usize| -> Result<Vec<Vec<f64>>> {
        slices.iter().map(|s| mollify(s, sg, comps, kernel)).collect()
    };
    Ok(FieldPath {
        grid: fp.grid.clone(),
        space: sg.clone(),
        m,
        n_wiener: rw,
        mode: fp.mode,
        u: moll_all(&fp.u, m)?,
        u_minus: moll_all(&fp.u_minus, m)?,
        psi: mollify(&fp.psi, sg, m, kernel)?,
        f0: moll_all(&fp.f0, m)?,
        fi: fp
            .fi
            .iter()
            .map(|axis_slices| moll_all(axis_slices, 1))
            .collect::<Result<_>>()?,
        drift_total: moll_all(&fp.drift_total, m)?,
        g: moll_all(&fp.g, m * rw)?,
        comp_h: moll_all(&fp.comp_h, m)?,
        h_pow_p: vec![vec![0.0; sg.n_cells()]; fp.h_pow_p.len()],
        h_pow_2: vec![vec![0.0; sg.n_cells()]; fp.h_pow_2.len()],
        h_atoms: moll_all(&fp.h_atoms, m)?,
        atom_grid_index: fp.atom_grid_index.clone(),
        jumps: fp.jumps.clone(),
        wiener: fp.wiener.clone(),
        mark_space: fp.mark_space.clone(),
        p_sampled: fp.p_sampled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drivers::{sample_jump_stream, sample_wiener, Mark, MarkSpace};
    use crate::field::{
        build_field_path, lp_norm, sample_scalar_field, FieldBuildConfig, FieldDrivers, FieldMode,
    };
    use crate::grid::TimeGrid;
    use crate::rng::path_rng;
    use rand::Rng;

    fn grid1d(n: usize) -> SpaceGrid {
        SpaceGrid::new(1, 1.0, n).unwrap()
    }

    fn bump(x: &[f64], r: f64, a: f64) -> f64 {
        let q: f64 = x.iter().map(|v| (v / r) * (v / r)).sum();
        if q >= 1.0 {
            0.0
        } else {
            a * (1.0 - 1.0 / (1.0 - q)).exp()
        }
    }

    /// Random field vanishing within `margin` cells of the boundary.
    fn random_interior_field(sg: &SpaceGrid, margin: usize, seed: u64) -> Vec<f64> {
        let mut rng = path_rng(seed, 0);
        (0..sg.n_cells())
            .map(|c| {
                if sg.in_boundary_layer(c, margin) {
                    0.0
                } else {
                    rng.gen_range(-2.0..2.0)
                }
            })
            .collect()
    }

    #[test]
    fn weights_nonnegative_and_sum_to_one_exactly() {
        for dim in 1..=3 {
            let sg = SpaceGrid::new(dim, 1.0, 16).unwrap();
            let k = MollKernel::new(&sg, 4.0 * sg.spacing).unwrap();
            assert!(k.stencil.iter().all(|(_, w)| *w >= 0.0));
            let sum: f64 = k.stencil.iter().map(|(_, w)| w).sum();
            assert_eq!(sum, 1.0, "dim {dim}: sum {sum}");
        }
    }

    #[test]
    fn rejects_unresolvable_radius() {
        let sg = grid1d(16);
        assert!(MollKernel::new(&sg, 1.5 * sg.spacing).is_err());
        assert!(MollKernel::new(&sg, -1.0).is_err());
    }

    #[test]
    fn constant_on_interior_is_preserved_where_covered() {
        let sg = grid1d(32);
        let k = MollKernel::new(&sg, 3.0 * sg.spacing).unwrap();
        let c_val = 2.5;
        let field: Vec<f64> = (0..32)
            .map(|c| if sg.in_boundary_layer(c, k.radius) { 0.0 } else { c_val })
            .collect();
        let out = mollify(&field, &sg, 1, &k).unwrap();
        // Wherever the stencil sees only the constant, the output is the
        // constant to round-off (unit mass).
        for c in 0..32 {
            if !sg.in_boundary_layer(c, 2 * k.radius) {
                assert!((out[c] - c_val).abs() <= 1e-15 * c_val, "cell {c}: {}", out[c]);
            }
        }
    }

    #[test]
    fn margin_violation_is_an_error() {
        let sg = grid1d(16);
        let k = MollKernel::new(&sg, 2.0 * sg.spacing).unwrap();
        assert!(mollify(&vec![1.0; 16], &sg, 1, &k).is_err());
    }

    #[test]
    fn contraction_in_lp_on_random_fields() {
        let sg = grid1d(48);
        for &eps_mult in &[2.0, 4.0, 8.0] {
            let k = MollKernel::new(&sg, eps_mult * sg.spacing).unwrap();
            for seed in 0..5 {
                let field = random_interior_field(&sg, k.radius, seed);
                let out = mollify(&field, &sg, 1, &k).unwrap();
                for &p in &[2.0, 3.0, 4.0, 6.0] {
                    let before = lp_norm(&field, &sg, 1, p);
                    let after = lp_norm(&out, &sg, 1, p);
                    assert!(
                        after <= before + 1e-12,
                        "eps {eps_mult}h seed {seed} p {p}: {after} > {before}"
                    );
                }
            }
        }
    }

    #[test]
    fn convergence_along_shrinking_radius() {
        let sg = grid1d(128);
        let field = sample_scalar_field(&sg, |x| bump(x, 0.6, 1.0));
        for &p in &[2.0, 4.0] {
            let mut last = f64::INFINITY;
            for &mult in &[8.0, 4.0, 2.0] {
                let k = MollKernel::new(&sg, mult * sg.spacing).unwrap();
                let out = mollify(&field, &sg, 1, &k).unwrap();
                let diff: Vec<f64> = out.iter().zip(&field).map(|(a, b)| a - b).collect();
                let err = lp_norm(&diff, &sg, 1, p);
                assert!(err < last, "p {p} eps {mult}h: {err} !< {last}");
                last = err;
            }
        }
    }

    #[test]
    fn sup_bound_with_dual_norm_constant() {
        let sg = grid1d(64);
        let k = MollKernel::new(&sg, 5.0 * sg.spacing).unwrap();
        for seed in 0..5 {
            let field = random_interior_field(&sg, k.radius, 100 + seed);
            let out = mollify(&field, &sg, 1, &k).unwrap();
            for &p in &[2.0, 3.0, 4.0] {
                let n_eps = k.lq_norm(p / (p - 1.0));
                let sup = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let bound = n_eps * lp_norm(&field, &sg, 1, p);
                assert!(sup <= bound * (1.0 + 1e-12), "seed {seed} p {p}: {sup} > {bound}");
            }
        }
    }

    #[test]
    fn mollify_commutes_with_path_recursion() {
        // Mollifying the built path equals re-running the recursion on the
        // mollified sampled drivers, to round-off (linearity).
        let mut d = FieldDrivers::zero(1, 1, FieldMode::Thm21);
        d.initial = Box::new(|x| vec![bump(x, 0.4, 1.0)]);
        d.f0 = Box::new(|t, x| vec![bump(x, 0.35, 0.5 + t)]);
        d.g = Box::new(|_, x| vec![vec![bump(x, 0.3, 0.4)]]);
        d.h = Box::new(|_, x, m| match m {
            Mark::Index(0) => vec![bump(x, 0.3, 0.7)],
            _ => vec![bump(x, 0.3, -0.2)],
        });
        let ms = MarkSpace::finite_uniform(2, 2.0).unwrap();
        let mut rng = path_rng(21, 0);
        let base = TimeGrid::uniform(1.0, 16).unwrap();
        let js = sample_jump_stream(&ms, &base, &mut rng).unwrap();
        let tg = base.with_jump_times(&js.times()).unwrap();
        let wb = sample_wiener(&tg, 1, &mut rng);
        let sg = grid1d(32);
        let cfg = FieldBuildConfig {
            time_grid: tg,
            space_grid: sg.clone(),
            mark_space: ms,
            p: 2.0,
        };
        let fp = build_field_path(&d, js, wb, &cfg).unwrap();
        let k = MollKernel::new(&sg, 3.0 * sg.spacing).unwrap();
        let mfp = mollify_pathwise(&fp, &k).unwrap();

        // Re-run the recursion with the mollified arrays.
        let n_cells = sg.n_cells();
        let mut u = mfp.psi.clone();
        for step in 0..mfp.grid.n_steps() {
            let dt = mfp.grid.step(step);
            for c in 0..n_cells {
                u[c] += mfp.drift_total[step][c] * dt;
                u[c] += mfp.g[step][c] * mfp.wiener.increments[step][0];
                u[c] -= mfp.comp_h[step][c] * dt;
            }
            for (a, _) in mfp.jumps.atoms.iter().enumerate() {
                if mfp.atom_grid_index[a] == step + 1 {
                    for c in 0..n_cells {
                        u[c] += mfp.h_atoms[a][c];
                    }
                }
            }
            let scale = 1.0 + u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for c in 0..n_cells {
                assert!(
                    (u[c] - mfp.u[step + 1][c]).abs() <= 1e-12 * scale,
                    "step {step} cell {c}: {} vs {}",
                    u[c],
                    mfp.u[step + 1][c]
                );
            }
        }
    }

    #[test]
    fn zero_path_mollifies_to_zero_path() {
        let d = FieldDrivers::zero(1, 0, FieldMode::Thm21);
        let sg = grid1d(16);
        let cfg = FieldBuildConfig {
            time_grid: TimeGrid::uniform(1.0, 4).unwrap(),
            space_grid: sg.clone(),
            mark_space: MarkSpace::finite_uniform(1, 0.0).unwrap(),
            p: 2.0,
        };
        let wb = crate::drivers::WienerBundle::zero(&cfg.time_grid, 0);
        let fp = build_field_path(&d, crate::drivers::JumpStream::empty(), wb, &cfg).unwrap();
        let k = MollKernel::new(&sg, 2.0 * sg.spacing).unwrap();
        let mfp = mollify_pathwise(&fp, &k).unwrap();
        assert!(mfp.u.iter().all(|s| s.iter().all(|&v| v == 0.0)));
    }
}
