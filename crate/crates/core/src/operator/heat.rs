//! Dense heat semigroups `exp(t L)` on the whole window or killed on exit
//! from a domain.

use nalgebra::{DMatrix, SymmetricEigen};

use super::{Domain, Generator};
use crate::error::{Error, Result};

pub const DEFAULT_DENSE_CAP: usize = 2500;

/// Spectral decomposition of `M^{-1/2} W M^{-1/2}` over an index set; the
/// heat kernel is `p(t,x,y) = sum_k e^{-t l_k} u_k(x) u_k(y) / sqrt(m(x) m(y))`.
#[derive(Debug, Clone)]
pub struct HeatSemigroup {
    points: Vec<usize>,
    masses: Vec<f64>,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
    /// `<u_j, sqrt(m)>`, the expansion of the constant function.
    constant_projection: Vec<f64>,
}

impl HeatSemigroup {
    /// Semigroup of the conservative chain on the whole window.
    pub fn full(gen: &Generator, cap: usize) -> Result<Self> {
        Self::build(gen, (0..gen.len()).collect(), cap)
    }

    /// Semigroup of the chain killed on leaving `domain`.
    pub fn killed(gen: &Generator, domain: &Domain, cap: usize) -> Result<Self> {
        Self::build(gen, domain.points().to_vec(), cap)
    }

    fn build(gen: &Generator, points: Vec<usize>, cap: usize) -> Result<Self> {
        let k = points.len();
        if k > cap {
            return Err(Error::TooLarge { points: k, cap });
        }
        let all = gen.space().masses();
        let masses: Vec<f64> = points.iter().map(|&x| all[x]).collect();
        let w = gen.form();
        let s = DMatrix::from_fn(k, k, |i, j| {
            w[(points[i], points[j])] / (masses[i] * masses[j]).sqrt()
        });
        let eig = SymmetricEigen::new(s);
        let constant_projection = (0..k)
            .map(|j| (0..k).map(|y| eig.eigenvectors[(y, j)] * masses[y].sqrt()).sum())
            .collect();
        Ok(Self {
            points,
            masses,
            eigenvalues: eig.eigenvalues.as_slice().to_vec(),
            eigenvectors: eig.eigenvectors,
            constant_projection,
        })
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    /// Eigenvalues of `-L` on the index set (unsorted).
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    fn check_time(t: f64) -> Result<()> {
        if t > 0.0 && t.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("time must be positive, got {t}")))
        }
    }

    /// Full matrix `p(t, x, y)` with rows/columns following `points()`.
    pub fn density(&self, t: f64) -> Result<DMatrix<f64>> {
        Self::check_time(t)?;
        let k = self.points.len();
        let decay: Vec<f64> = self.eigenvalues.iter().map(|l| (-t * l).exp()).collect();
        let scaled = DMatrix::from_fn(k, k, |i, j| self.eigenvectors[(i, j)] * decay[j]);
        let mut p = scaled * self.eigenvectors.transpose();
        for i in 0..k {
            for j in 0..k {
                p[(i, j)] /= (self.masses[i] * self.masses[j]).sqrt();
            }
        }
        Ok(p)
    }

    /// On-diagonal values `p(t, x, x)`.
    pub fn diagonal(&self, t: f64) -> Result<Vec<f64>> {
        Self::check_time(t)?;
        let k = self.points.len();
        Ok((0..k)
            .map(|i| {
                let s: f64 = (0..k)
                    .map(|j| self.eigenvectors[(i, j)].powi(2) * (-t * self.eigenvalues[j]).exp())
                    .sum();
                s / self.masses[i]
            })
            .collect())
    }

    /// `sum_y p(t, x, y) m(y)`: 1 for the conservative semigroup, the
    /// survival probability `P^x(tau_D > t)` for a killed one. `i` indexes
    /// `points()`.
    pub fn survival(&self, i: usize, t: f64) -> Result<f64> {
        Self::check_time(t)?;
        let k = self.points.len();
        let s: f64 = (0..k)
            .map(|j| {
                self.eigenvectors[(i, j)]
                    * (-t * self.eigenvalues[j]).exp()
                    * self.constant_projection[j]
            })
            .sum();
        Ok(s / self.masses[i].sqrt())
    }
}

impl Generator {
    /// `p(t, x, y) = [exp(t L)]_{x,y} / m(y)` on the whole window.
    pub fn heat_kernel(&self, t: f64, cap: usize) -> Result<DMatrix<f64>> {
        HeatSemigroup::full(self, cap)?.density(t)
    }
}
