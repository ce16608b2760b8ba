//! Dirichlet problems on a proper subset `D` of the window.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{Generator, SpectrumResult};
use crate::error::{Error, Result};

/// A nonempty proper subset of the window, kept sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Domain {
    points: Vec<usize>,
    position: Vec<Option<usize>>,
}

impl Domain {
    pub fn new(n_total: usize, mut points: Vec<usize>) -> Result<Self> {
        points.sort_unstable();
        points.dedup();
        if points.is_empty() {
            return Err(Error::InvalidDomain("domain is empty".into()));
        }
        if let Some(&p) = points.last().filter(|&&p| p >= n_total) {
            return Err(Error::PointOutOfRange {
                index: p,
                len: n_total,
            });
        }
        if points.len() == n_total {
            return Err(Error::InvalidDomain(
                "domain is the whole window; its exterior is empty".into(),
            ));
        }
        let mut position = vec![None; n_total];
        for (k, &p) in points.iter().enumerate() {
            position[p] = Some(k);
        }
        Ok(Self { points, position })
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn n_total(&self) -> usize {
        self.position.len()
    }

    pub fn contains(&self, x: usize) -> bool {
        self.position.get(x).is_some_and(|p| p.is_some())
    }

    /// Position of global index `x` inside `points()`.
    pub fn position(&self, x: usize) -> Option<usize> {
        self.position.get(x).copied().flatten()
    }

    pub fn complement(&self) -> Vec<usize> {
        (0..self.n_total()).filter(|&x| !self.contains(x)).collect()
    }

    pub fn is_subset_of(&self, other: &Domain) -> bool {
        self.points.iter().all(|&x| other.contains(x))
    }
}

/// Cached Cholesky factor of `W_D = (M (-L))|_D` for repeated solves.
pub struct DomainSolver<'g> {
    pub(super) gen: &'g Generator,
    pub(super) domain: Domain,
    pub(super) chol: Cholesky<f64, Dyn>,
}

impl<'g> DomainSolver<'g> {
    pub fn new(gen: &'g Generator, domain: Domain) -> Result<Self> {
        if domain.n_total() != gen.len() {
            return Err(Error::DimensionMismatch {
                expected: gen.len(),
                found: domain.n_total(),
            });
        }
        let pts = domain.points();
        let w = gen.form();
        let wd = DMatrix::from_fn(pts.len(), pts.len(), |i, j| w[(pts[i], pts[j])]);
        let chol = Cholesky::new(wd).ok_or(Error::NotPositiveDefinite)?;
        Ok(Self { gen, domain, chol })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn generator(&self) -> &'g Generator {
        self.gen
    }

    /// `W_D^{-1} rhs`.
    pub fn solve_weighted(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.domain.len() {
            return Err(Error::DimensionMismatch {
                expected: self.domain.len(),
                found: rhs.len(),
            });
        }
        let b = DVector::from_column_slice(rhs);
        Ok(self.chol.solve(&b).as_slice().to_vec())
    }

    /// Solves `(-L_D) u = f`, i.e. `W_D u = M_D f`. Values indexed like
    /// `domain().points()`.
    pub fn green_apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.domain.len() {
            return Err(Error::DimensionMismatch {
                expected: self.domain.len(),
                found: f.len(),
            });
        }
        let m = self.gen.space().masses();
        let rhs: Vec<f64> = self
            .domain
            .points()
            .iter()
            .zip(f)
            .map(|(&x, v)| m[x] * v)
            .collect();
        self.solve_weighted(&rhs)
    }

    /// `E^x tau_D`, the Green potential of the constant 1.
    pub fn mean_exit_time(&self) -> Result<Vec<f64>> {
        self.green_apply(&vec![1.0; self.domain.len()])
    }

    /// `(-L u)(x)` restricted to `D` for a full-length `u`.
    pub fn restricted_generator_apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        let lu = self.gen.apply(u)?;
        Ok(self.domain.points().iter().map(|&x| -lu[x]).collect())
    }

    /// Harmonic extension into `D` of `exterior_data` (full-length vector,
    /// entries on `D` ignored). The result agrees with the data off `D` and
    /// satisfies `L u = 0` on `D`.
    pub fn harmonic_extension(&self, exterior_data: &[f64]) -> Result<Vec<f64>> {
        let n = self.gen.len();
        if exterior_data.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: exterior_data.len(),
            });
        }
        let outside = self.domain.complement();
        if let Some(&z) = outside.iter().find(|&&z| !exterior_data[z].is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "exterior data not finite at point {z}"
            )));
        }
        let w = self.gen.form();
        let rhs: Vec<f64> = self
            .domain
            .points()
            .iter()
            .map(|&x| outside.iter().map(|&z| -w[(x, z)] * exterior_data[z]).sum())
            .collect();
        let inner = self.solve_weighted(&rhs)?;
        let mut u = exterior_data.to_vec();
        for (&x, v) in self.domain.points().iter().zip(inner) {
            u[x] = v;
        }
        Ok(u)
    }

    /// Exit distribution `H[x, z] = P^x(X_{tau_D} = z)`.
    pub fn harmonic_measure(&self) -> Result<HarmonicMeasure> {
        let exterior = self.domain.complement();
        let pts = self.domain.points();
        let w = self.gen.form();
        let rhs = DMatrix::from_fn(pts.len(), exterior.len(), |i, j| -w[(pts[i], exterior[j])]);
        let matrix = self.chol.solve(&rhs);
        Ok(HarmonicMeasure {
            domain: self.domain.clone(),
            exterior,
            matrix,
        })
    }

    /// Green matrix `G_D = W_D^{-1}` assembled as `Z^T Z` with `Z = L^{-1}`
    /// from the Cholesky factor, so the result is symmetric by construction.
    pub fn green(&self) -> Result<GreenData> {
        let k = self.domain.len();
        let l = self.chol.l();
        let z = l
            .solve_lower_triangular(&DMatrix::identity(k, k))
            .ok_or(Error::NotPositiveDefinite)?;
        let mut g = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in i..k {
                // Z is lower triangular: rows below max(i, j) contribute
                let v: f64 = (j..k).map(|r| z[(r, i)] * z[(r, j)]).sum();
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        Ok(GreenData {
            domain: self.domain.clone(),
            matrix: g,
        })
    }

    pub fn lambda1(&self) -> Result<SpectrumResult> {
        super::spectrum::lambda1(self)
    }
}

#[derive(Debug, Clone)]
pub struct HarmonicMeasure {
    pub domain: Domain,
    /// Exit sites, i.e. the complement of the domain in window order.
    pub exterior: Vec<usize>,
    /// `|D| x |exterior|`; rows follow `domain.points()`.
    pub matrix: DMatrix<f64>,
}

impl HarmonicMeasure {
    /// Column for exit site `z` as a full-length harmonic function
    /// (the indicator of `z` off the domain).
    pub fn column_function(&self, col: usize) -> Vec<f64> {
        let mut u = vec![0.0; self.domain.n_total()];
        u[self.exterior[col]] = 1.0;
        for (i, &x) in self.domain.points().iter().enumerate() {
            u[x] = self.matrix[(i, col)];
        }
        u
    }
}

#[derive(Debug, Clone)]
pub struct GreenData {
    pub domain: Domain,
    /// `G_D(x, y)` with rows and columns following `domain.points()`.
    pub matrix: DMatrix<f64>,
}

impl GreenData {
    /// `G_D(x, y)` for global indices; zero when either point is outside `D`.
    pub fn get(&self, x: usize, y: usize) -> f64 {
        match (self.domain.position(x), self.domain.position(y)) {
            (Some(i), Some(j)) => self.matrix[(i, j)],
            _ => 0.0,
        }
    }

    /// `u(x) = sum_y G_D(x,y) f(y) m(y)` with `f` indexed like the domain.
    pub fn apply(&self, masses: &[f64], f: &[f64]) -> Vec<f64> {
        let pts = self.domain.points();
        (0..pts.len())
            .map(|i| {
                (0..pts.len())
                    .map(|j| self.matrix[(i, j)] * f[j] * masses[pts[j]])
                    .sum()
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Capacity {
    pub value: f64,
    /// Equilibrium potential: 1 on `A`, 0 off `B`, harmonic on `B \ A`.
    pub potential: Vec<f64>,
}

pub(super) fn capacity(gen: &Generator, a: &[usize], b: &[usize]) -> Result<Capacity> {
    let n = gen.len();
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidDomain("capacity sets must be nonempty".into()));
    }
    let mut in_b = vec![false; n];
    for &y in b {
        gen.space().check_index(y)?;
        in_b[y] = true;
    }
    if in_b.iter().all(|&v| v) {
        return Err(Error::InvalidDomain(
            "B is the whole window; relative capacity is zero".into(),
        ));
    }
    let mut in_a = vec![false; n];
    for &x in a {
        gen.space().check_index(x)?;
        if !in_b[x] {
            return Err(Error::NotSubset(x));
        }
        in_a[x] = true;
    }
    let data: Vec<f64> = in_a.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
    let free: Vec<usize> = (0..n).filter(|&x| in_b[x] && !in_a[x]).collect();
    let potential = if free.is_empty() {
        data
    } else {
        gen.solve_harmonic(&Domain::new(n, free)?, &data)?
    };
    let value = gen.energy(&potential, None)?;
    Ok(Capacity { value, potential })
}
