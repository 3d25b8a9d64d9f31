//! Differential-geometry pieces of the jump Ito formulas: gradients and
//! Hessians of `|x|^p` (with the 0/0 := 0 convention at the origin), the
//! increment operator `I^a`, the Taylor remainder `J^a`, and the remainder
//! bound check.

use crate::error::{Error, Result};

/// A twice continuously differentiable test function with the pieces the
/// verifiers need: value, gradient, and bilinear Hessian evaluation.
pub trait C2Fn: Sync {
    fn value(&self, v: &[f64]) -> f64;
    fn grad(&self, v: &[f64]) -> Vec<f64>;
    /// `sum_ij a_i (D_i D_j phi)(v) b_j`.
    fn hess_bilinear(&self, v: &[f64], a: &[f64], b: &[f64]) -> f64;
}

/// `phi(x) = |x|^p` for `p >= 2`, the jet driving every p-power identity.
#[derive(Debug, Clone, Copy)]
pub struct PNormJet {
    pub p: f64,
}

impl PNormJet {
    pub fn new(p: f64) -> Result<Self> {
        if !p.is_finite() || p < 2.0 {
            return Err(Error::domain(format!("p must be >= 2, got {p}")));
        }
        Ok(PNormJet { p })
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl C2Fn for PNormJet {
    fn value(&self, v: &[f64]) -> f64 {
        norm(v).powf(self.p)
    }

    fn grad(&self, v: &[f64]) -> Vec<f64> {
        let r = norm(v);
        if r == 0.0 {
            return vec![0.0; v.len()];
        }
        let c = self.p * r.powf(self.p - 2.0);
        v.iter().map(|x| c * x).collect()
    }

    fn hess_bilinear(&self, v: &[f64], a: &[f64], b: &[f64]) -> f64 {
        let r = norm(v);
        if r == 0.0 {
            // 0/0 := 0 for the radial part; the delta part survives only at
            // p = 2 where |x|^{p-2} = 1.
            if self.p == 2.0 {
                return 2.0 * dot(a, b);
            }
            return 0.0;
        }
        let trace = self.p * r.powf(self.p - 2.0) * dot(a, b);
        if self.p == 2.0 {
            return trace;
        }
        trace + self.p * (self.p - 2.0) * r.powf(self.p - 4.0) * dot(v, a) * dot(v, b)
    }
}

/// `D|x|^p = p |x|^{p-2} x`, zero vector at the origin.
pub fn p_norm_grad(p: f64, x: &[f64]) -> Result<Vec<f64>> {
    Ok(PNormJet::new(p)?.grad(x))
}

/// Increment operator `I^a phi(v) = phi(v + a) - phi(v)`.
pub fn i_operator<F: C2Fn + ?Sized>(phi: &F, v: &[f64], a: &[f64]) -> f64 {
    let shifted: Vec<f64> = v.iter().zip(a).map(|(x, y)| x + y).collect();
    phi.value(&shifted) - phi.value(v)
}

/// Taylor remainder `J^a phi(v) = I^a phi(v) - Dphi(v) . a`.
pub fn j_operator<F: C2Fn + ?Sized>(phi: &F, v: &[f64], a: &[f64]) -> f64 {
    i_operator(phi, v, a) - dot(&phi.grad(v), a)
}

/// Both sides of the remainder bound `|J^a |v|^p| <= N (|v|^{p-2}|a|^2 + |a|^p)`.
///
/// The constant is not pinned analytically here; instead the right-hand side
/// is the explicit Taylor bound `0.5 sup_seg |D^2 phi|_op |a|^2`, with the sup
/// taken over 64 samples of the segment `v + theta a` (the operator norm
/// `p(p-1)|x|^{p-2}` is convex along the segment, so the endpoint samples
/// already attain it) and inflated by 10%.
pub fn j_bound_check(p: f64, v: &[f64], a: &[f64]) -> Result<(f64, f64)> {
    let jet = PNormJet::new(p)?;
    let lhs = j_operator(&jet, v, a).abs();
    let mut sup = 0.0f64;
    for i in 0..64 {
        let theta = i as f64 / 63.0;
        let x: Vec<f64> = v.iter().zip(a).map(|(x, y)| x + theta * y).collect();
        let r = norm(&x);
        let op = if r == 0.0 && p < 4.0 {
            if p == 2.0 { 2.0 } else { 0.0 }
        } else {
            p * (p - 1.0) * r.powf(p - 2.0)
        };
        sup = sup.max(op);
    }
    let a2 = dot(a, a);
    let rhs = 1.1 * 0.5 * sup * a2;
    Ok((lhs, rhs))
}

/// The effective constant `N` such that rhs = N (|v|^{p-2}|a|^2 + |a|^p),
/// reported alongside the bound check; zero when `a = 0`.
pub fn j_bound_constant(p: f64, v: &[f64], a: &[f64]) -> Result<f64> {
    let (_, rhs) = j_bound_check(p, v, a)?;
    let rv = norm(v);
    let ra = norm(a);
    let denom = rv.powf(p - 2.0) * ra * ra + ra.powf(p);
    Ok(if denom == 0.0 { 0.0 } else { rhs / denom })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fd_grad(p: f64, x: &[f64], step: f64) -> Vec<f64> {
        let jet = PNormJet::new(p).unwrap();
        (0..x.len())
            .map(|i| {
                let mut hi = x.to_vec();
                let mut lo = x.to_vec();
                hi[i] += step;
                lo[i] -= step;
                (jet.value(&hi) - jet.value(&lo)) / (2.0 * step)
            })
            .collect()
    }

    #[test]
    fn grad_p2_is_2x() {
        assert_eq!(p_norm_grad(2.0, &[3.0, 4.0]).unwrap(), vec![6.0, 8.0]);
    }

    #[test]
    fn grad_p4_axis_point() {
        assert_eq!(p_norm_grad(4.0, &[1.0, 0.0]).unwrap(), vec![4.0, 0.0]);
    }

    #[test]
    fn grad_zero_convention() {
        assert_eq!(p_norm_grad(3.0, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn grad_rejects_small_p() {
        assert!(p_norm_grad(1.5, &[1.0]).is_err());
    }

    #[test]
    fn gradient_matches_finite_difference() {
        for &p in &[2.0, 2.5, 3.0, 4.0, 6.0] {
            for &scale in &[0.1, 1.0, 10.0] {
                let x = [0.6 * scale, -0.8 * scale];
                let g = p_norm_grad(p, &x).unwrap();
                let fd = fd_grad(p, &x, 1e-5);
                for (gi, fdi) in g.iter().zip(&fd) {
                    let rel = (gi - fdi).abs() / (1.0 + gi.abs());
                    assert!(rel <= 1e-6, "p={p} scale={scale}: {gi} vs {fdi}");
                }
            }
        }
    }

    #[test]
    fn hessian_matches_finite_difference() {
        for &p in &[2.0, 2.5, 3.0, 4.0, 6.0] {
            let jet = PNormJet::new(p).unwrap();
            let x = [0.7, 1.1];
            let a = [0.3, -0.5];
            let step = 1e-5;
            // Second directional difference of phi along a.
            let plus: Vec<f64> = x.iter().zip(&a).map(|(xi, ai)| xi + step * ai).collect();
            let minus: Vec<f64> = x.iter().zip(&a).map(|(xi, ai)| xi - step * ai).collect();
            let fd = (jet.value(&plus) - 2.0 * jet.value(&x) + jet.value(&minus)) / (step * step);
            let exact = jet.hess_bilinear(&x, &a, &a);
            assert!((fd - exact).abs() / (1.0 + exact.abs()) <= 1e-5, "p={p}: {fd} vs {exact}");
        }
    }

    #[test]
    fn i_operator_examples() {
        let jet2 = PNormJet::new(2.0).unwrap();
        assert_eq!(i_operator(&jet2, &[1.0, 0.0], &[1.0, 0.0]), 3.0);
        assert_eq!(i_operator(&jet2, &[1.0, 2.0], &[0.0, 0.0]), 0.0);
        let jet4 = PNormJet::new(4.0).unwrap();
        assert_eq!(i_operator(&jet4, &[1.0], &[1.0]), 15.0);
    }

    #[test]
    fn j_operator_examples() {
        let jet4 = PNormJet::new(4.0).unwrap();
        assert_eq!(j_operator(&jet4, &[1.0], &[1.0]), 11.0);
        assert_eq!(j_operator(&jet4, &[1.0], &[0.0]), 0.0);
    }

    #[test]
    fn j_is_quadratic_residual_for_p2() {
        let jet2 = PNormJet::new(2.0).unwrap();
        for (v, a) in [([1.0, -2.0], [0.5, 0.25]), ([0.0, 0.0], [3.0, 4.0])] {
            let expect = a.iter().map(|x| x * x).sum::<f64>();
            assert!((j_operator(&jet2, &v, &a) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn j_bound_trivial_and_arith_cases() {
        let (lhs, rhs) = j_bound_check(3.0, &[1.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!((lhs, rhs), (0.0, 0.0));
        let (lhs, rhs) = j_bound_check(2.0, &[1.0], &[2.0]).unwrap();
        assert_eq!(lhs, 4.0);
        assert!(lhs <= rhs);
        let n = j_bound_constant(2.0, &[1.0], &[2.0]).unwrap();
        assert!(n >= 0.5, "N = {n}");
    }

    proptest! {
        #[test]
        fn j_bound_holds_on_random_sweep(
            p in 2.0f64..6.0,
            v in proptest::collection::vec(-5.0f64..5.0, 1..4),
            scale in -3.0f64..3.0,
        ) {
            let a: Vec<f64> = v.iter().rev().map(|x| x * scale * 0.37 + 0.1).collect();
            let (lhs, rhs) = j_bound_check(p, &v, &a).unwrap();
            prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-12, "lhs {lhs} rhs {rhs}");
        }

        #[test]
        fn j_equals_i_minus_grad_dot(
            p in 2.0f64..6.0,
            v in proptest::collection::vec(-3.0f64..3.0, 2..4),
        ) {
            let jet = PNormJet::new(p).unwrap();
            let a: Vec<f64> = v.iter().map(|x| 0.5 - 0.25 * x).collect();
            let direct = j_operator(&jet, &v, &a);
            let composed = i_operator(&jet, &v, &a)
                - jet.grad(&v).iter().zip(&a).map(|(g, ai)| g * ai).sum::<f64>();
            prop_assert_eq!(direct, composed);
        }
    }
}
