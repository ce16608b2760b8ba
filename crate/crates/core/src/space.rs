//! Lattice metric measure spaces: truncated windows and tori.
//!
//! Points are enumerated lexicographically by coordinates (first axis
//! slowest). Balls are closed, `B(x, r) = { y : d(x, y) <= r }`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::log_log_fit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Truncated,
    Torus,
}

#[derive(Debug, Clone)]
pub struct GridSpace {
    dim: usize,
    window: Vec<(f64, f64)>,
    h: f64,
    topology: Topology,
    shape: Vec<usize>,
    coords: Vec<f64>,
    mass: Vec<f64>,
}

/// Relative slack (in units of `h`) when comparing lattice distances to a
/// radius, so that coordinates such as `-2 + 6 * 0.1` still land on the
/// sphere they belong to.
const LATTICE_EPS: f64 = 1e-9;

impl GridSpace {
    pub fn build(dim: usize, window: &[(f64, f64)], h: f64, topology: Topology) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidSpacing(h));
        }
        if dim == 0 || dim > 3 {
            return Err(Error::InvalidGrid {
                axis: 0,
                reason: format!("dimension {dim} not supported (1, 2 or 3)"),
            });
        }
        if window.len() != dim {
            return Err(Error::InvalidGrid {
                axis: window.len().min(dim),
                reason: format!("expected {dim} window intervals, got {}", window.len()),
            });
        }
        let mut shape = Vec::with_capacity(dim);
        for (axis, &(lo, hi)) in window.iter().enumerate() {
            let extent = hi - lo;
            if !(extent > 0.0) {
                return Err(Error::InvalidGrid {
                    axis,
                    reason: format!("empty interval [{lo}, {hi}]"),
                });
            }
            let steps = extent / h;
            let rounded = steps.round();
            if (steps - rounded).abs() > 1e-9 * steps.max(1.0) {
                return Err(Error::InvalidGrid {
                    axis,
                    reason: format!("extent {extent} is not an integer multiple of h = {h}"),
                });
            }
            let steps = rounded as usize;
            let count = match topology {
                Topology::Truncated => steps + 1,
                Topology::Torus => steps,
            };
            if topology == Topology::Torus && count < 2 {
                return Err(Error::InvalidGrid {
                    axis,
                    reason: "torus axis needs at least two points".into(),
                });
            }
            shape.push(count);
        }
        let n: usize = shape.iter().product();
        let mut coords = Vec::with_capacity(n * dim);
        let mut idx = vec![0usize; dim];
        for _ in 0..n {
            for axis in 0..dim {
                coords.push(window[axis].0 + idx[axis] as f64 * h);
            }
            // odometer, last axis fastest
            for axis in (0..dim).rev() {
                idx[axis] += 1;
                if idx[axis] < shape[axis] {
                    break;
                }
                idx[axis] = 0;
            }
        }
        let cell = h.powi(dim as i32);
        Ok(Self {
            dim,
            window: window.to_vec(),
            h,
            topology,
            shape,
            coords,
            mass: vec![cell; n],
        })
    }

    /// Multiply the default `h^dim` masses pointwise, modelling a general
    /// measure with density.
    pub fn with_mass_multiplier(mut self, multiplier: &[f64]) -> Result<Self> {
        if multiplier.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: multiplier.len(),
            });
        }
        if let Some(bad) = multiplier.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "mass multiplier must be positive and finite, got {bad}"
            )));
        }
        for (m, w) in self.mass.iter_mut().zip(multiplier) {
            *m *= w;
        }
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn window(&self) -> &[(f64, f64)] {
        &self.window
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.mass[i]
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn check_index(&self, i: usize) -> Result<()> {
        if i < self.len() {
            Ok(())
        } else {
            Err(Error::PointOutOfRange {
                index: i,
                len: self.len(),
            })
        }
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.point(i), self.point(j));
        let mut s = 0.0;
        for axis in 0..self.dim {
            let mut d = (a[axis] - b[axis]).abs();
            if self.topology == Topology::Torus {
                let extent = self.window[axis].1 - self.window[axis].0;
                d = d.min(extent - d);
            }
            s += d * d;
        }
        s.sqrt()
    }

    /// Closed-ball membership with lattice round-off slack.
    #[inline]
    pub fn within(&self, d: f64, r: f64) -> bool {
        d <= r + LATTICE_EPS * self.h
    }

    pub fn ball(&self, center: usize, r: f64) -> Result<Vec<usize>> {
        self.check_index(center)?;
        if !(r > 0.0) {
            return Err(Error::InvalidRadius(r));
        }
        Ok(self.ball_unchecked(center, r))
    }

    pub(crate) fn ball_unchecked(&self, center: usize, r: f64) -> Vec<usize> {
        (0..self.len())
            .filter(|&y| self.within(self.distance(center, y), r))
            .collect()
    }

    pub fn volume(&self, center: usize, r: f64) -> Result<f64> {
        Ok(self.ball(center, r)?.iter().map(|&y| self.mass[y]).sum())
    }

    /// Index of the lattice point closest to `coords`.
    pub fn nearest(&self, coords: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for i in 0..self.len() {
            let p = self.point(i);
            let mut s = 0.0;
            for axis in 0..self.dim.min(coords.len()) {
                let mut d = (p[axis] - coords[axis]).abs();
                if self.topology == Topology::Torus {
                    let extent = self.window[axis].1 - self.window[axis].0;
                    d = d.rem_euclid(extent);
                    d = d.min(extent - d);
                }
                s += d * d;
            }
            if s < best_d {
                best_d = s;
                best = i;
            }
        }
        best
    }

    pub fn diameter(&self) -> f64 {
        let mut s = 0.0;
        for (lo, hi) in &self.window {
            let e = hi - lo;
            let d = match self.topology {
                Topology::Truncated => e,
                Topology::Torus => e / 2.0,
            };
            s += d * d;
        }
        s.sqrt()
    }

    /// Cumulative volume of balls around `center`, grouped by distinct
    /// distance. Lookup is `O(log n)` afterwards.
    pub fn volume_profile(&self, center: usize) -> VolumeProfile {
        let mut order: Vec<usize> = (0..self.len()).collect();
        let dist: Vec<f64> = (0..self.len()).map(|y| self.distance(center, y)).collect();
        order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
        let tol = LATTICE_EPS * self.h;
        let mut radii = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = 0.0;
        for (k, &y) in order.iter().enumerate() {
            acc += self.mass[y];
            let last_of_shell = order
                .get(k + 1)
                .map_or(true, |&z| dist[z] > dist[y] + tol);
            if last_of_shell {
                radii.push(dist[y]);
                cumulative.push(acc);
            }
        }
        VolumeProfile {
            center,
            order,
            distances: dist,
            radii,
            cumulative,
            tol,
        }
    }

    /// Empirical doubling and reverse-doubling constants over the tested
    /// `(center, radius)` range.
    pub fn doubling_report(&self, centers: &[usize], radii: &[f64]) -> Result<VolumeReport> {
        if centers.is_empty() || radii.is_empty() {
            return Err(Error::EmptySample);
        }
        for &c in centers {
            self.check_index(c)?;
        }
        let mut sorted = radii.to_vec();
        for &r in &sorted {
            if !(r > 0.0) {
                return Err(Error::InvalidRadius(r));
            }
        }
        sorted.sort_by(f64::total_cmp);
        let small_radius_warning = sorted[0] < self.h / 2.0;

        let profiles: Vec<VolumeProfile> = centers.iter().map(|&c| self.volume_profile(c)).collect();
        let mut c_mu_hat = 1.0f64;
        let mut doubling_witness = (centers[0], sorted[0]);
        for p in &profiles {
            for &r in &sorted {
                let ratio = p.volume(2.0 * r) / p.volume(r);
                if ratio > c_mu_hat {
                    c_mu_hat = ratio;
                    doubling_witness = (p.center, r);
                }
            }
        }

        let mut exponents = None;
        if sorted.len() >= 2 {
            let mut d1 = f64::INFINITY;
            let mut d2 = f64::NEG_INFINITY;
            let mut w1 = (centers[0], sorted[0]);
            let mut w2 = w1;
            for p in &profiles {
                let vols: Vec<f64> = sorted.iter().map(|&r| p.volume(r)).collect();
                if let Some(fit) = log_log_fit(&sorted, &vols) {
                    if fit.slope < d1 {
                        d1 = fit.slope;
                        w1 = (p.center, sorted[0]);
                    }
                    if fit.slope > d2 {
                        d2 = fit.slope;
                        w2 = (p.center, sorted[0]);
                    }
                }
            }
            if d1.is_finite() {
                // constants making the power-law envelopes hold on every tested pair
                let mut c_lower = f64::INFINITY;
                let mut c_upper = 0.0f64;
                for p in &profiles {
                    for (i, &r) in sorted.iter().enumerate() {
                        for &big in &sorted[i + 1..] {
                            let ratio = p.volume(big) / p.volume(r);
                            c_lower = c_lower.min(ratio / (big / r).powf(d1));
                            c_upper = c_upper.max(ratio / (big / r).powf(d2));
                        }
                    }
                }
                exponents = Some(VolumeExponents {
                    d1_hat: d1,
                    c_mu_hat: c_lower,
                    d2_hat: d2,
                    c_mu_tilde_hat: c_upper.max(1.0),
                    d1_witness: w1,
                    d2_witness: w2,
                });
            }
        }

        Ok(VolumeReport {
            c_mu_hat,
            doubling_witness,
            exponents,
            small_radius_warning,
        })
    }
}

#[derive(Debug, Clone)]
pub struct VolumeProfile {
    pub center: usize,
    /// All points sorted by distance from `center` (ties by index).
    pub order: Vec<usize>,
    pub distances: Vec<f64>,
    /// Distinct distances in increasing order.
    pub radii: Vec<f64>,
    /// `cumulative[k]` is the mass of the closed ball of radius `radii[k]`.
    pub cumulative: Vec<f64>,
    tol: f64,
}

impl VolumeProfile {
    /// Number of shells fully inside the closed ball of radius `r`.
    pub fn shells_within(&self, r: f64) -> usize {
        self.radii.partition_point(|&d| d <= r + self.tol)
    }

    pub fn volume(&self, r: f64) -> f64 {
        match self.shells_within(r) {
            0 => 0.0,
            k => self.cumulative[k - 1],
        }
    }

    /// Number of points (in `order`) inside the closed ball of radius `r`.
    pub fn count_within(&self, r: f64) -> usize {
        self.order
            .partition_point(|&y| self.distances[y] <= r + self.tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeExponents {
    pub d1_hat: f64,
    pub c_mu_hat: f64,
    pub d2_hat: f64,
    pub c_mu_tilde_hat: f64,
    pub d1_witness: (usize, f64),
    pub d2_witness: (usize, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeReport {
    /// `max V(x, 2r) / V(x, r)` over the tested pairs.
    #[serde(rename = "C_mu_hat")]
    pub c_mu_hat: f64,
    pub doubling_witness: (usize, f64),
    /// Absent when fewer than two radii were supplied.
    pub exponents: Option<VolumeExponents>,
    /// Some radius was below `h/2`, where every ball is a singleton.
    pub small_radius_warning: bool,
}
