//! Bottom of the Dirichlet spectrum and Poincaré constants.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use super::domain::DomainSolver;
use super::Generator;
use crate::error::{Error, Result};
use crate::scale::ScaleFunction;

/// Residual tolerance for the ground state, relative to `max(1, lambda1)`.
pub const EIGEN_TOL: f64 = 1e-10;
const INVERSE_ITERATION_CAP: usize = 400;

#[derive(Debug, Clone)]
pub struct SpectrumResult {
    pub lambda1: f64,
    /// Ground state on `D`, positive, normalized in `L^2(D; mu)`.
    pub eigvec: Vec<f64>,
    /// `||(-L_D) v - lambda1 v||_mu` for the returned vector.
    pub residual: f64,
    pub iterations: usize,
    /// Inverse iteration stalled (near-degenerate bottom) and the dense
    /// eigensolver was used instead.
    pub dense_fallback: bool,
}

fn rayleigh(w: &DMatrix<f64>, m: &DVector<f64>, v: &DVector<f64>) -> (f64, f64) {
    let wv = w * v;
    let num = v.dot(&wv);
    let den: f64 = v.iter().zip(m.iter()).map(|(a, b)| a * a * b).sum();
    let lam = num / den;
    // residual of M^{-1} W v - lam v in the mu-norm, relative to ||v||_mu
    let res: f64 = wv
        .iter()
        .zip(v.iter())
        .zip(m.iter())
        .map(|((wvi, vi), mi)| {
            let r = wvi / mi - lam * vi;
            r * r * mi
        })
        .sum::<f64>()
        .sqrt()
        / den.sqrt();
    (lam, res)
}

fn normalize(v: &mut DVector<f64>, m: &DVector<f64>) {
    let norm: f64 = v.iter().zip(m.iter()).map(|(a, b)| a * a * b).sum::<f64>().sqrt();
    let sign = if v.sum() < 0.0 { -1.0 } else { 1.0 };
    *v *= sign / norm;
}

/// Inverse iteration `v <- W_D^{-1} M_D v` from the mean exit time, with a
/// dense fallback when the spectral gap is too small to converge.
pub(super) fn lambda1(solver: &DomainSolver<'_>) -> Result<SpectrumResult> {
    let pts = solver.domain.points();
    let k = pts.len();
    let masses = solver.gen.space().masses();
    let m = DVector::from_iterator(k, pts.iter().map(|&x| masses[x]));
    let w = solver.gen.form();
    let wd = DMatrix::from_fn(k, k, |i, j| w[(pts[i], pts[j])]);

    let mut v = DVector::from_vec(solver.mean_exit_time()?);
    normalize(&mut v, &m);
    let (mut lam, mut res) = rayleigh(&wd, &m, &v);
    let mut iterations = 0;
    while res > EIGEN_TOL * lam.max(1.0) && iterations < INVERSE_ITERATION_CAP {
        let rhs = v.component_mul(&m);
        v = solver.chol.solve(&rhs);
        normalize(&mut v, &m);
        (lam, res) = rayleigh(&wd, &m, &v);
        iterations += 1;
    }
    let mut dense_fallback = false;
    if res > EIGEN_TOL * lam.max(1.0) {
        // M^{-1/2} W M^{-1/2} is symmetric with the same spectrum
        let s = DMatrix::from_fn(k, k, |i, j| wd[(i, j)] / (m[i] * m[j]).sqrt());
        let eig = SymmetricEigen::new(s);
        let (idx, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        v = DVector::from_fn(k, |i, _| eig.eigenvectors[(i, idx)] / m[i].sqrt());
        normalize(&mut v, &m);
        (lam, res) = rayleigh(&wd, &m, &v);
        dense_fallback = true;
        if res > EIGEN_TOL * lam.max(1.0) {
            return Err(Error::NonConvergence {
                iterations,
                residual: res,
            });
        }
    }
    Ok(SpectrumResult {
        lambda1: lam,
        eigvec: v.as_slice().to_vec(),
        residual: res,
        iterations,
        dense_fallback,
    })
}

#[derive(Debug, Clone)]
pub struct PoincareResult {
    /// `C_PI = ratio / phi(x0, r)`.
    pub c_pi: f64,
    /// Largest value of `Var_{B_r}(f) / E_{B_{kappa r}}(f)` over non-constant `f`.
    pub ratio: f64,
    /// Maximizer as a full-length vector; zero outside `B(x0, kappa r)`.
    pub extremal: Vec<f64>,
    pub inner: Vec<usize>,
    pub outer: Vec<usize>,
    pub phi: f64,
}

impl Generator {
    /// `sum_{B_r} m (f - mean_{B_r} f)^2`, the variance form on the ball.
    pub fn variance_form(&self, f: &[f64], set: &[usize]) -> f64 {
        let m = self.space().masses();
        let vol: f64 = set.iter().map(|&x| m[x]).sum();
        let mean: f64 = set.iter().map(|&x| f[x] * m[x]).sum::<f64>() / vol;
        set.iter().map(|&x| (f[x] - mean).powi(2) * m[x]).sum()
    }

    /// Smallest `C` with `Var_{B_r}(f) <= C phi(x0,r) E_{B_{kappa r}}(f)` for
    /// all `f`: the largest generalized eigenvalue of the variance form
    /// against the restricted energy, on the complement of constants.
    pub fn poincare_constant(
        &self,
        sf: &ScaleFunction,
        center: usize,
        r: f64,
        kappa: f64,
    ) -> Result<PoincareResult> {
        if !(kappa >= 1.0) {
            return Err(Error::InvalidParameter(format!("kappa must be >= 1, got {kappa}")));
        }
        let space = self.space();
        let inner = space.ball(center, r)?;
        let outer = space.ball(center, kappa * r)?;
        if outer.len() < 2 {
            return Err(Error::Degenerate(
                "B(x0, kappa r) is a single point".into(),
            ));
        }
        let phi = sf.phi_eval(center, r)?;
        let n = self.len();
        if inner.len() == 1 {
            return Ok(PoincareResult {
                c_pi: 0.0,
                ratio: 0.0,
                extremal: vec![0.0; n],
                inner,
                outer,
                phi,
            });
        }
        let m = space.masses();
        let k = outer.len();
        let mut in_inner = vec![false; n];
        for &x in &inner {
            in_inner[x] = true;
        }
        let vol: f64 = inner.iter().map(|&x| m[x]).sum();

        // restricted energy matrix on the outer ball (a weighted Laplacian)
        let mut energy = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    let w = self.jump(outer[i], outer[j]) * m[outer[i]] * m[outer[j]];
                    energy[(i, j)] = -w;
                    energy[(i, i)] += w;
                }
            }
        }
        // variance form M_r - m_r m_r^T / V on the inner ball
        let variance = DMatrix::from_fn(k, k, |i, j| {
            let (x, y) = (outer[i], outer[j]);
            if !(in_inner[x] && in_inner[y]) {
                return 0.0;
            }
            let diag = if i == j { m[x] } else { 0.0 };
            diag - m[x] * m[y] / vol
        });

        // both forms vanish on constants: pin the last coordinate to zero
        let p = k - 1;
        let energy_p = energy.view((0, 0), (p, p)).into_owned();
        let variance_p = variance.view((0, 0), (p, p)).into_owned();
        let chol = Cholesky::new(energy_p).ok_or(Error::NotPositiveDefinite)?;
        let l = chol.l();
        let linv = l
            .solve_lower_triangular(&DMatrix::identity(p, p))
            .ok_or(Error::NotPositiveDefinite)?;
        let c = &linv * &variance_p * linv.transpose();
        let c = (&c + c.transpose()) * 0.5;
        let eig = SymmetricEigen::new(c);
        let (idx, &ratio) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let w = eig.eigenvectors.column(idx).into_owned();
        let g = l
            .transpose()
            .solve_upper_triangular(&w)
            .ok_or(Error::NotPositiveDefinite)?;
        let mut extremal = vec![0.0; n];
        for i in 0..p {
            extremal[outer[i]] = g[i];
        }
        Ok(PoincareResult {
            c_pi: ratio / phi,
            ratio,
            extremal,
            inner,
            outer,
            phi,
        })
    }
}
