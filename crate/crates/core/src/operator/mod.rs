//! The jump generator of a finite symmetric chain and its exact potential
//! theory.
//!
//! `Generator` owns the rate matrix `q(x,y) = J(x,y) m(y)` and the
//! mu-weighted form matrix `W = M (-L)`, which is symmetric with
//! `W[x][y] = -J(x,y) m(x) m(y)` off the diagonal and `W[x][x] = m(x) lambda(x)`.
//! Restricting `W` to a domain gives a symmetric positive-definite matrix;
//! every Dirichlet problem below is a solve against its Cholesky factor.

mod domain;
mod heat;
mod spectrum;

pub use domain::{Capacity, Domain, DomainSolver, GreenData, HarmonicMeasure};
pub use heat::{HeatSemigroup, DEFAULT_DENSE_CAP};
pub use spectrum::{PoincareResult, SpectrumResult};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernel::JumpKernel;
use crate::space::GridSpace;

#[derive(Debug, Clone)]
pub struct Generator {
    space: GridSpace,
    jump: DMatrix<f64>,
    rates: DMatrix<f64>,
    lambda: Vec<f64>,
    form: DMatrix<f64>,
}

impl Generator {
    pub fn assemble(space: &GridSpace, kernel: &JumpKernel) -> Result<Self> {
        let n = space.len();
        if kernel.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: kernel.len(),
            });
        }
        let m = space.masses();
        let jump = kernel.dense();
        let rates = DMatrix::from_fn(n, n, |x, y| jump[(x, y)] * m[y]);
        let lambda: Vec<f64> = (0..n).map(|x| rates.row(x).sum()).collect();
        if let Some(x) = lambda.iter().position(|&l| !(l > 0.0)) {
            return Err(Error::Degenerate(format!(
                "point {x} has zero total jump rate"
            )));
        }
        let form = DMatrix::from_fn(n, n, |x, y| {
            if x == y {
                m[x] * lambda[x]
            } else {
                -jump[(x, y)] * m[x] * m[y]
            }
        });
        Ok(Self {
            space: space.clone(),
            jump,
            rates,
            lambda,
            form,
        })
    }

    pub fn space(&self) -> &GridSpace {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    #[inline]
    pub fn jump(&self, x: usize, y: usize) -> f64 {
        self.jump[(x, y)]
    }

    #[inline]
    pub fn rate(&self, x: usize, y: usize) -> f64 {
        self.rates[(x, y)]
    }

    pub fn rates(&self) -> &DMatrix<f64> {
        &self.rates
    }

    /// Total jump rate `lambda(x) = sum_y q(x,y)`.
    pub fn lambda(&self, x: usize) -> f64 {
        self.lambda[x]
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambda
    }

    /// The symmetric matrix `M (-L)`.
    pub fn form(&self) -> &DMatrix<f64> {
        &self.form
    }

    fn check_len(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: f.len(),
            });
        }
        Ok(())
    }

    /// `L f(x) = sum_y (f(y) - f(x)) q(x,y)`.
    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_len(f)?;
        let n = self.len();
        Ok((0..n)
            .map(|x| {
                let mut s = 0.0;
                for y in 0..n {
                    s += (f[y] - f[x]) * self.rates[(x, y)];
                }
                s
            })
            .collect())
    }

    /// `<f, g>_mu`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        self.check_len(f)?;
        self.check_len(g)?;
        Ok(f.iter()
            .zip(g)
            .zip(self.space.masses())
            .map(|((a, b), m)| a * b * m)
            .sum())
    }

    /// `E(f, g) = 1/2 sum_{x != y} (f(x)-f(y)) (g(x)-g(y)) J(x,y) m(x) m(y)`;
    /// `g = None` evaluates `E(f, f)`.
    pub fn energy(&self, f: &[f64], g: Option<&[f64]>) -> Result<f64> {
        self.check_len(f)?;
        let g = g.unwrap_or(f);
        self.check_len(g)?;
        let m = self.space.masses();
        let n = self.len();
        let mut total = 0.0;
        for x in 0..n {
            let mut row = 0.0;
            for y in 0..n {
                row += (f[x] - f[y]) * (g[x] - g[y]) * self.jump[(x, y)] * m[y];
            }
            total += row * m[x];
        }
        Ok(0.5 * total)
    }

    /// Energy restricted to ordered pairs in `first x second`, with the same
    /// factor 1/2 as [`Generator::energy`].
    pub fn pair_energy(&self, f: &[f64], first: &[usize], second: &[usize]) -> Result<f64> {
        self.check_len(f)?;
        let m = self.space.masses();
        let mut total = 0.0;
        for &x in first {
            let mut row = 0.0;
            for &y in second {
                let d = f[x] - f[y];
                row += d * d * self.jump[(x, y)] * m[y];
            }
            total += row * m[x];
        }
        Ok(0.5 * total)
    }

    /// Carré du champ density `gamma_f(x) = 1/2 sum_y (f(x)-f(y))^2 J(x,y) m(y)`.
    /// The energy measure puts `gamma_f(x) m(x)` on `x`, and its total mass
    /// is `E(f, f)`.
    pub fn carre_du_champ(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_len(f)?;
        let n = self.len();
        Ok((0..n)
            .map(|x| {
                let mut s = 0.0;
                for y in 0..n {
                    let d = f[x] - f[y];
                    s += d * d * self.rates[(x, y)];
                }
                0.5 * s
            })
            .collect())
    }

    pub fn domain(&self, points: Vec<usize>) -> Result<Domain> {
        Domain::new(self.len(), points)
    }

    pub fn ball_domain(&self, center: usize, r: f64) -> Result<Domain> {
        Domain::new(self.len(), self.space.ball(center, r)?)
    }

    pub fn solver(&self, domain: &Domain) -> Result<DomainSolver<'_>> {
        DomainSolver::new(self, domain.clone())
    }

    /// Harmonic extension of `exterior_data` (full-length; entries on `D`
    /// are ignored) into `D`.
    pub fn solve_harmonic(&self, domain: &Domain, exterior_data: &[f64]) -> Result<Vec<f64>> {
        self.solver(domain)?.harmonic_extension(exterior_data)
    }

    pub fn harmonic_measure(&self, domain: &Domain) -> Result<HarmonicMeasure> {
        self.solver(domain)?.harmonic_measure()
    }

    pub fn green(&self, domain: &Domain) -> Result<GreenData> {
        self.solver(domain)?.green()
    }

    /// Solves `(-L_D) u = f` on `D` with `u = 0` off `D`; `f` is indexed
    /// like `domain.points()`.
    pub fn green_apply(&self, domain: &Domain, f: &[f64]) -> Result<Vec<f64>> {
        self.solver(domain)?.green_apply(f)
    }

    pub fn mean_exit_time(&self, domain: &Domain) -> Result<Vec<f64>> {
        self.solver(domain)?.mean_exit_time()
    }

    pub fn lambda1(&self, domain: &Domain) -> Result<SpectrumResult> {
        self.solver(domain)?.lambda1()
    }

    /// Relative capacity `Cap(A, B) = inf { E(u,u) : u = 1 on A, u = 0 off B }`.
    pub fn capacity(&self, a: &[usize], b: &[usize]) -> Result<Capacity> {
        domain::capacity(self, a, b)
    }

    /// `Ext(x, r) = V(x, r) / Cap(B(x, r), B(x, 2r))`.
    pub fn ext(&self, x: usize, r: f64) -> Result<f64> {
        let outer = self.space.ball(x, 2.0 * r)?;
        if outer.len() == self.len() {
            return Err(Error::InvalidDomain(format!(
                "B(x, 2r) with r = {r} covers the whole window; capacity undefined"
            )));
        }
        let inner = self.space.ball(x, r)?;
        let cap = self.capacity(&inner, &outer)?;
        Ok(self.space.volume(x, r)? / cap.value)
    }
}
