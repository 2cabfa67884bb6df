//! Damped LSQR over a [`LinearOperator`].
//!
//! Solves `min ‖y − Gx‖² + damp² ‖x‖²` with the Golub-Kahan bidiagonalization
//! and the plane-rotation updates of Paige & Saunders (ACM TOMS 8(1), 1982),
//! starting from `x₀ = 0`. Each iteration applies `G` once and `Gᴴ` once;
//! setup costs one extra `Gᴴ`. `GᴴG` is never formed.
//!
//! The residual `‖y − Gx_u‖` is tracked through the recurrence estimate
//! `sqrt(‖r̄_u‖² − damp² ‖x_u‖²)`, where `r̄_u` is the residual of the
//! augmented system `[G; damp I]`.

use crate::error::{Error, Result};
use crate::numerics::{axpy, norm, scale, LinearOperator, C64, ZERO};

/// Bidiagonalization vectors shorter than this (relative to the running
/// norm estimate of the operator) mark an invariant Krylov subspace.
const BREAKDOWN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsqrConfig {
    /// Iteration cap `U`.
    pub max_iterations: usize,
    /// Stop once `‖y − Gx‖ / ‖y‖ ≤ tolerance`.
    pub tolerance: f64,
    pub damp: f64,
}

impl LsqrConfig {
    pub fn new(max_iterations: usize, tolerance: f64, damp: f64) -> Result<Self> {
        let cfg = Self {
            max_iterations,
            tolerance,
            damp,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::config("LSQR needs at least one iteration"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::config(format!(
                "LSQR tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if !(self.damp >= 0.0) || !self.damp.is_finite() {
            return Err(Error::config(format!(
                "LSQR damping must be nonnegative, got {}",
                self.damp
            )));
        }
        Ok(())
    }

    pub fn with_damp(self, damp: f64) -> Self {
        Self { damp, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Relative residual reached the tolerance (also returned for `y = 0`).
    Tolerance,
    /// The damped least-squares solution was reached before the tolerance:
    /// the Krylov space became invariant or the normal-equation residual fell
    /// to rounding level.
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct LsqrResult {
    pub x: Vec<C64>,
    pub iterations: usize,
    /// Estimate of `‖y − Gx‖ / ‖y‖` at exit.
    pub relative_residual: f64,
    pub termination: Termination,
}

pub fn lsqr_solve(op: &dyn LinearOperator, y: &[C64], cfg: &LsqrConfig) -> Result<LsqrResult> {
    cfg.validate()?;
    let (rows, cols) = (op.nrows(), op.ncols());
    if y.len() != rows {
        return Err(Error::dim("LSQR right-hand side", rows, y.len()));
    }
    let damp = cfg.damp;
    let mut x = vec![ZERO; cols];

    let ynorm = norm(y);
    if ynorm == 0.0 {
        return Ok(LsqrResult {
            x,
            iterations: 0,
            relative_residual: 0.0,
            termination: Termination::Tolerance,
        });
    }

    let mut u = y.to_vec();
    let mut beta = ynorm;
    scale(1.0 / beta, &mut u);
    let mut v = vec![ZERO; cols];
    op.apply_adjoint_into(&u, &mut v);
    let mut alpha = norm(&v);
    if alpha == 0.0 {
        // Gᴴy = 0: x = 0 already solves the normal equations
        return Ok(LsqrResult {
            x,
            iterations: 0,
            relative_residual: 1.0,
            termination: Termination::Converged,
        });
    }
    scale(1.0 / alpha, &mut v);
    let mut w = v.clone();

    let mut rhobar = alpha;
    let mut phibar = beta;
    let mut anorm_sq = 0.0;
    let mut res2 = 0.0;
    let (mut cs2, mut sn2, mut z, mut xxnorm) = (-1.0, 0.0, 0.0, 0.0);

    let mut gv = vec![ZERO; rows];
    let mut ghu = vec![ZERO; cols];
    let mut prev_residual = f64::INFINITY;

    for iteration in 1..=cfg.max_iterations {
        // bidiagonalization: β u = G v − α u,  α v = Gᴴ u − β v
        op.apply_into(&v, &mut gv);
        for (ui, gi) in u.iter_mut().zip(&gv) {
            *ui = gi - *ui * alpha;
        }
        beta = norm(&u);
        anorm_sq += alpha * alpha + beta * beta + damp * damp;
        let breakdown_u = beta <= BREAKDOWN * anorm_sq.sqrt();
        if !breakdown_u {
            scale(1.0 / beta, &mut u);
            op.apply_adjoint_into(&u, &mut ghu);
            for (vi, gi) in v.iter_mut().zip(&ghu) {
                *vi = gi - *vi * beta;
            }
            alpha = norm(&v);
        } else {
            beta = 0.0;
            alpha = 0.0;
        }
        let breakdown_v = alpha <= BREAKDOWN * anorm_sq.sqrt();
        if !breakdown_v {
            scale(1.0 / alpha, &mut v);
        } else {
            alpha = 0.0;
        }

        // eliminate the damping term
        let rhobar1 = rhobar.hypot(damp);
        let cs1 = rhobar / rhobar1;
        let sn1 = damp / rhobar1;
        let psi = sn1 * phibar;
        phibar *= cs1;

        // eliminate the subdiagonal β
        let rho = rhobar1.hypot(beta);
        let cs = rhobar1 / rho;
        let sn = beta / rho;
        let theta = sn * alpha;
        rhobar = -cs * alpha;
        let phi = cs * phibar;
        phibar *= sn;
        let tau = sn * phi;

        axpy(C64::new(phi / rho, 0.0), &w, &mut x);
        let t2 = -theta / rho;
        for (wi, vi) in w.iter_mut().zip(&v) {
            *wi = vi + *wi * t2;
        }

        // running estimate of ‖x‖²
        let delta = sn2 * rho;
        let gambar = -cs2 * rho;
        let rhs = phi - delta * z;
        let zbar = if gambar != 0.0 { rhs / gambar } else { 0.0 };
        let xnorm_sq = xxnorm + zbar * zbar;
        let gamma = gambar.hypot(theta);
        if gamma > 0.0 {
            cs2 = gambar / gamma;
            sn2 = theta / gamma;
            z = rhs / gamma;
        } else {
            z = 0.0;
        }
        xxnorm += z * z;

        res2 += psi * psi;
        let augmented_sq = phibar * phibar + res2;
        let residual = (augmented_sq - damp * damp * xnorm_sq).max(0.0).sqrt();
        let relative_residual = residual / ynorm;
        debug_assert!(
            residual <= prev_residual * (1.0 + 1e-8) + 1e-12 * ynorm,
            "LSQR residual increased: {prev_residual} -> {residual}"
        );
        prev_residual = residual;

        let normal_residual = alpha * tau.abs();
        let termination = if relative_residual <= cfg.tolerance {
            Some(Termination::Tolerance)
        } else if breakdown_u
            || breakdown_v
            || normal_residual <= f64::EPSILON * anorm_sq.sqrt() * augmented_sq.sqrt()
        {
            Some(Termination::Converged)
        } else if iteration == cfg.max_iterations {
            Some(Termination::MaxIterations)
        } else {
            None
        };
        if let Some(termination) = termination {
            return Ok(LsqrResult {
                x,
                iterations: iteration,
                relative_residual,
                termination,
            });
        }
    }
    unreachable!("the final iteration always terminates")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{
        complex_gaussian, dense_regularized_solve, relative_error, ComplexMatrix, Counting, Identity,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Gaussian elimination with partial pivoting on a dense square system.
    fn gauss_solve(a: &ComplexMatrix, b: &[C64]) -> Vec<C64> {
        let n = a.rows();
        let mut m: Vec<Vec<C64>> = (0..n)
            .map(|r| {
                let mut row: Vec<C64> = (0..n).map(|c| a[(r, c)]).collect();
                row.push(b[r]);
                row
            })
            .collect();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| m[i][k].norm().total_cmp(&m[j][k].norm()))
                .unwrap();
            m.swap(k, p);
            let (top, rest) = m.split_at_mut(k + 1);
            let pivot = &top[k];
            for row in rest {
                let f = row[k] / pivot[k];
                for (a, &b) in row[k..].iter_mut().zip(&pivot[k..]) {
                    *a -= f * b;
                }
            }
        }
        let mut x = vec![ZERO; n];
        for k in (0..n).rev() {
            let s: C64 = (k + 1..n).map(|j| m[k][j] * x[j]).sum();
            x[k] = (m[k][n] - s) / m[k][k];
        }
        x
    }

    fn well_conditioned(rng: &mut ChaCha8Rng, n: usize) -> ComplexMatrix {
        let mut a = ComplexMatrix::random(rng, n, n);
        for i in 0..n {
            a[(i, i)] += C64::new(2.0 * (n as f64).sqrt(), 0.0);
        }
        a
    }

    #[test]
    fn identity_solves_in_one_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = complex_gaussian(&mut rng, 10, 1.0);
        let cfg = LsqrConfig::new(50, 1e-10, 0.0).unwrap();
        let res = lsqr_solve(&Identity(10), &y, &cfg).unwrap();
        assert_eq!(res.iterations, 1);
        assert_eq!(res.termination, Termination::Tolerance);
        assert!(relative_error(&res.x, &y) < 1e-14);
    }

    #[test]
    fn damped_identity_stops_on_invariant_krylov_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = complex_gaussian(&mut rng, 10, 1.0);
        let cfg = LsqrConfig::new(50, 1e-2, 0.5).unwrap();
        let res = lsqr_solve(&Identity(10), &y, &cfg).unwrap();
        assert_eq!((res.iterations, res.termination), (1, Termination::Converged));
        let expected: Vec<C64> = y.iter().map(|v| v / 1.25).collect();
        assert!(relative_error(&res.x, &expected) < 1e-14);
        // ‖y − x‖/‖y‖ = 0.25/1.25
        assert!((res.relative_residual - 0.2).abs() < 1e-12);
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let cfg = LsqrConfig::new(5, 1e-2, 0.1).unwrap();
        let res = lsqr_solve(&Identity(4), &[ZERO; 4], &cfg).unwrap();
        assert_eq!(res.termination, Termination::Tolerance);
        assert_eq!(res.iterations, 0);
        assert!(res.x.iter().all(|v| *v == ZERO));
    }

    #[test]
    fn undamped_matches_elimination() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = LsqrConfig::new(100, 1e-12, 0.0).unwrap();
        for _ in 0..10 {
            let a = well_conditioned(&mut rng, 8);
            let y = complex_gaussian(&mut rng, 8, 1.0);
            let res = lsqr_solve(&a, &y, &cfg).unwrap();
            assert!(relative_error(&res.x, &gauss_solve(&a, &y)) < 1e-8);
        }
    }

    #[test]
    fn undamped_full_rank_matches_inverse_with_enough_iterations() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 24;
        let a = well_conditioned(&mut rng, n);
        let y = complex_gaussian(&mut rng, n, 1.0);
        let cfg = LsqrConfig::new(n, 1e-14, 0.0).unwrap();
        let res = lsqr_solve(&a, &y, &cfg).unwrap();
        assert!(relative_error(&res.x, &gauss_solve(&a, &y)) < 1e-6);
    }

    #[test]
    fn damped_matches_tikhonov_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = LsqrConfig::new(200, 1e-12, 0.3).unwrap();
        for _ in 0..5 {
            let a = ComplexMatrix::random(&mut rng, 16, 16);
            let y = complex_gaussian(&mut rng, 16, 1.0);
            let res = lsqr_solve(&a, &y, &cfg).unwrap();
            let oracle = dense_regularized_solve(&a, &y, 0.3).unwrap();
            assert!(relative_error(&res.x, &oracle) < 1e-8);
            // independent route: eliminate on explicitly formed GᴴG + λ²I
            let gram = a.regularized_gram(0.3);
            let rhs = a.apply_adjoint(&y).unwrap();
            assert!(relative_error(&res.x, &gauss_solve(&gram, &rhs)) < 1e-8);
        }
    }

    #[test]
    fn two_applications_per_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = Counting::new(ComplexMatrix::random(&mut rng, 40, 40));
        let y = complex_gaussian(&mut rng, 40, 1.0);
        let cfg = LsqrConfig::new(7, 1e-14, 0.1).unwrap();
        let res = lsqr_solve(&a, &y, &cfg).unwrap();
        assert_eq!(res.iterations, 7);
        assert_eq!(res.termination, Termination::MaxIterations);
        assert_eq!(a.forward_count(), 7);
        assert_eq!(a.adjoint_count(), 7 + 1);
    }

    #[test]
    fn residual_estimate_tracks_true_residual_and_decreases() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = ComplexMatrix::random(&mut rng, 30, 30);
        let y = complex_gaussian(&mut rng, 30, 1.0);
        let mut prev = f64::INFINITY;
        for u in 1..=25 {
            let cfg = LsqrConfig::new(u, 1e-14, 0.2).unwrap();
            let res = lsqr_solve(&a, &y, &cfg).unwrap();
            let ax = a.apply(&res.x).unwrap();
            let r: Vec<C64> = y.iter().zip(&ax).map(|(p, q)| p - q).collect();
            let actual = norm(&r) / norm(&y);
            // the recurrence drifts slowly once Krylov orthogonality degrades
            assert!(
                (actual - res.relative_residual).abs() < 1e-4 * actual,
                "u={u} {actual} {}",
                res.relative_residual
            );
            assert!(actual <= prev + 1e-12);
            prev = actual;
        }
    }

    #[test]
    fn config_validation() {
        assert!(LsqrConfig::new(0, 1e-2, 0.0).is_err());
        assert!(LsqrConfig::new(5, 0.0, 0.0).is_err());
        assert!(LsqrConfig::new(5, 1e-2, -1.0).is_err());
        let cfg = LsqrConfig::new(5, 1e-2, 0.0).unwrap();
        assert!(lsqr_solve(&Identity(3), &[ZERO; 4], &cfg).is_err());
    }
}
