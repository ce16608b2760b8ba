//! Symmetric jump kernels `J(x, y)` over the points of a [`GridSpace`].
//!
//! Only the strict upper triangle is stored, so `J(x, y) = J(y, x)` holds
//! by construction and `J(x, x) = 0`.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scale::ScaleFunction;
use crate::space::GridSpace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelProvenance {
    StableLike,
    ConstantOrder,
    Custom,
}

/// How the exponent of a stable-like kernel combines `alpha(x)` and
/// `alpha(y)` on short jumps. Each choice is symmetric and keeps `J`
/// between the `alpha(x) ^ alpha(y)` and `alpha(x) v alpha(y)` kernels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetrization {
    #[default]
    Midpoint,
    Min,
    Max,
}

impl Symmetrization {
    fn combine(self, a: f64, b: f64) -> f64 {
        match self {
            Symmetrization::Midpoint => 0.5 * (a + b),
            Symmetrization::Min => a.min(b),
            Symmetrization::Max => a.max(b),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpKernel {
    n: usize,
    upper: Vec<f64>,
    provenance: KernelProvenance,
    c_low: f64,
    c_high: f64,
    unsupported_rows: Vec<usize>,
}

#[inline]
fn packed_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

impl JumpKernel {
    fn from_upper(n: usize, upper: Vec<f64>, provenance: KernelProvenance, c_low: f64, c_high: f64) -> Self {
        let mut k = Self {
            n,
            upper,
            provenance,
            c_low,
            c_high,
            unsupported_rows: Vec::new(),
        };
        k.unsupported_rows = (0..n)
            .filter(|&x| (0..n).all(|y| x == y || k.get(x, y) == 0.0))
            .collect();
        k
    }

    /// Variable-order stable-like kernel:
    /// `c_low * |x-y|^-(d + a(x,y))` for `|x-y| <= 1` and
    /// `c_low * |x-y|^-(d + alpha1)` beyond, where `a(x,y)` combines the
    /// two orders per `symmetrization`. `c_high` is the declared upper
    /// multiplier and is only recorded.
    pub fn stable_like(
        space: &GridSpace,
        sf: &ScaleFunction,
        c_low: f64,
        c_high: f64,
        symmetrization: Symmetrization,
    ) -> Result<Self> {
        if !(c_low > 0.0 && c_low <= c_high) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < c_low <= c_high, got c_low = {c_low}, c_high = {c_high}"
            )));
        }
        if sf.alphas().len() != space.len() {
            return Err(Error::InvalidParameter(
                "stable-like kernels need a constant- or variable-order scale on the same space".into(),
            ));
        }
        let n = space.len();
        let d = space.dim() as f64;
        let alpha1 = sf.alpha1();
        let alpha = sf.alphas();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (i + 1..n)
                    .map(|j| {
                        let r = space.distance(i, j);
                        let exponent = if r <= 1.0 {
                            d + symmetrization.combine(alpha[i], alpha[j])
                        } else {
                            d + alpha1
                        };
                        c_low * r.powf(-exponent)
                    })
                    .collect()
            })
            .collect();
        let provenance = if sf.alpha1() == sf.alpha2() {
            KernelProvenance::ConstantOrder
        } else {
            KernelProvenance::StableLike
        };
        Ok(Self::from_upper(n, rows.concat(), provenance, c_low, c_high))
    }

    /// Custom kernel from a dense row-major table. The table must be exactly
    /// symmetric, nonnegative and have a zero diagonal.
    pub fn from_dense(values: &[Vec<f64>]) -> Result<Self> {
        let n = values.len();
        for (i, row) in values.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::NegativeKernelEntry { i, j, value: v });
                }
            }
            if row[i] != 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "kernel diagonal must vanish, J({i},{i}) = {}",
                    row[i]
                )));
            }
        }
        let mut upper = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (values[i][j], values[j][i]);
                if a != b {
                    return Err(Error::AsymmetricKernel { i, j, a, b });
                }
                upper.push(a);
            }
        }
        Ok(Self::from_upper(n, upper, KernelProvenance::Custom, f64::NAN, f64::NAN))
    }

    /// Parse a dense comma-separated matrix (no header, row/column order
    /// equal to the grid point order).
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|e| {
                        Error::Parse(format!("line {}: {:?}: {e}", line_no + 1, f.trim()))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Self::from_dense(&rows)
    }

    /// Dense CSV with shortest round-trip float formatting, so
    /// `from_csv_str(k.to_csv())` reproduces `k` bit for bit.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            for j in 0..self.n {
                if j > 0 {
                    out.push(',');
                }
                write!(out, "{}", self.get(i, j)).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Less => self.upper[packed_index(self.n, i, j)],
            std::cmp::Ordering::Greater => self.upper[packed_index(self.n, j, i)],
        }
    }

    pub fn provenance(&self) -> KernelProvenance {
        self.provenance
    }

    pub fn c_low(&self) -> f64 {
        self.c_low
    }

    pub fn c_high(&self) -> f64 {
        self.c_high
    }

    /// Rows with no off-diagonal mass ("not fully supported").
    pub fn unsupported_rows(&self) -> &[usize] {
        &self.unsupported_rows
    }

    pub fn is_fully_supported(&self) -> bool {
        self.upper.iter().all(|&v| v > 0.0)
    }

    pub fn max_entry(&self) -> f64 {
        self.upper.iter().cloned().fold(0.0, f64::max)
    }

    pub fn scaled(&self, t: f64) -> Self {
        let mut k = self.clone();
        for v in &mut k.upper {
            *v *= t;
        }
        k.c_low *= t;
        k.c_high *= t;
        k
    }

    pub fn dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    fn check_space(&self, space: &GridSpace) -> Result<()> {
        if space.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: space.len(),
                found: self.n,
            });
        }
        Ok(())
    }

    /// Two-sided constants of `J(x,y) V(x,d) phi(x,d)` over all pairs `x != y`,
    /// with `d = d(x,y)`.
    pub fn check_j_phi(&self, space: &GridSpace, sf: &ScaleFunction) -> Result<JPhiFit> {
        self.check_space(space)?;
        let n = self.n;
        if n < 2 {
            return Err(Error::Degenerate("J_phi needs at least two points".into()));
        }
        let per_row: Vec<((f64, usize, usize), (f64, usize, usize))> = (0..n)
            .into_par_iter()
            .map(|x| {
                let profile = space.volume_profile(x);
                let mut lo = (f64::INFINITY, x, x);
                let mut hi = (f64::NEG_INFINITY, x, x);
                for y in (0..n).filter(|&y| y != x) {
                    let d = space.distance(x, y);
                    let v = self.get(x, y) * profile.volume(d) * sf.phi(x, d);
                    if v < lo.0 {
                        lo = (v, x, y);
                    }
                    if v > hi.0 {
                        hi = (v, x, y);
                    }
                }
                (lo, hi)
            })
            .collect();
        let lo = per_row
            .iter()
            .map(|p| p.0)
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap();
        let hi = per_row
            .iter()
            .map(|p| p.1)
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap();
        Ok(JPhiFit {
            c1_hat: lo.0,
            c2_hat: hi.0,
            lower_witness: (lo.1, lo.2),
            upper_witness: (hi.1, hi.2),
        })
    }

    /// `c3 = max phi(x,r) * sum_{y outside B(x,r)} J(x,y) m(y)` over all
    /// points and the given radii.
    pub fn check_ij(&self, space: &GridSpace, sf: &ScaleFunction, radii: &[f64]) -> Result<IJFit> {
        self.check_space(space)?;
        if radii.is_empty() {
            return Err(Error::EmptySample);
        }
        if let Some(r) = radii.iter().find(|r| !(**r > 0.0)) {
            return Err(Error::InvalidRadius(*r));
        }
        let best = (0..self.n)
            .into_par_iter()
            .map(|x| {
                let mut best = (0.0f64, x, radii[0]);
                for &r in radii {
                    let v = sf.phi(x, r) * self.exterior_rate(space, x, r);
                    if v > best.0 {
                        best = (v, x, r);
                    }
                }
                best
            })
            .collect::<Vec<_>>()
            .into_iter()
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap();
        Ok(IJFit {
            c3_hat: best.0,
            witness: (best.1, best.2),
        })
    }

    /// `J(x, B(x,r)^c) = sum_{y outside B(x,r)} J(x,y) m(y)`.
    pub fn exterior_rate(&self, space: &GridSpace, x: usize, r: f64) -> f64 {
        (0..self.n)
            .filter(|&y| !space.within(space.distance(x, y), r))
            .map(|y| self.get(x, y) * space.mass(y))
            .sum()
    }

    pub fn report(&self, space: &GridSpace, sf: &ScaleFunction, radii: &[f64]) -> Result<KernelReport> {
        let jphi = self.check_j_phi(space, sf)?;
        let ij = self.check_ij(space, sf, radii)?;
        Ok(KernelReport {
            jphi_lower_hat: jphi.c1_hat,
            jphi_upper_hat: jphi.c2_hat,
            ij_c_hat: ij.c3_hat,
            max_entry: self.max_entry(),
            jphi,
            ij,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JPhiFit {
    pub c1_hat: f64,
    pub c2_hat: f64,
    pub lower_witness: (usize, usize),
    pub upper_witness: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IJFit {
    pub c3_hat: f64,
    /// `(x, r)` attaining the maximum.
    pub witness: (usize, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelReport {
    pub jphi_lower_hat: f64,
    pub jphi_upper_hat: f64,
    pub ij_c_hat: f64,
    /// Largest entry; finite because the closest pair is at distance `h`.
    pub max_entry: f64,
    pub jphi: JPhiFit,
    pub ij: IJFit,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Topology;

    fn g0() -> GridSpace {
        GridSpace::build(1, &[(-2.0, 2.0)], 0.5, Topology::Truncated).unwrap()
    }

    fn g0_kernel() -> (GridSpace, ScaleFunction, JumpKernel) {
        let s = g0();
        let sf = ScaleFunction::constant_order(&s, 1.0).unwrap();
        let k = JumpKernel::stable_like(&s, &sf, 1.0, 1.0, Symmetrization::Midpoint).unwrap();
        (s, sf, k)
    }

    #[test]
    fn stable_like_values() {
        let (s, _, k) = g0_kernel();
        let (zero, half, two) = (s.nearest(&[0.0]), s.nearest(&[0.5]), s.nearest(&[2.0]));
        assert_eq!(k.get(zero, half), 4.0);
        assert_eq!(k.get(zero, two), 0.25);
        assert_eq!(k.get(half, zero), k.get(zero, half));
        assert_eq!(k.get(zero, zero), 0.0);
        assert!(k.is_fully_supported());
        assert_eq!(k.max_entry(), 4.0);
    }

    #[test]
    fn symmetrization_variants_stay_in_band() {
        let s = g0();
        let sf = ScaleFunction::from_alpha(
            (0..9).map(|i| 1.2 + 0.05 * i as f64).collect(),
            1.2,
            1.6,
        )
        .unwrap();
        let mid = JumpKernel::stable_like(&s, &sf, 1.0, 1.0, Symmetrization::Midpoint).unwrap();
        let lo = JumpKernel::stable_like(&s, &sf, 1.0, 1.0, Symmetrization::Min).unwrap();
        let hi = JumpKernel::stable_like(&s, &sf, 1.0, 1.0, Symmetrization::Max).unwrap();
        for i in 0..9 {
            for j in 0..9 {
                if i == j {
                    continue;
                }
                // for r < 1 the kernel r^(-1-a) grows with the exponent
                let r = s.distance(i, j);
                if r < 1.0 {
                    assert!(lo.get(i, j) <= mid.get(i, j) && mid.get(i, j) <= hi.get(i, j));
                } else if r > 1.0 {
                    assert!(hi.get(i, j) <= mid.get(i, j) && mid.get(i, j) <= lo.get(i, j));
                }
                assert_eq!(mid.get(i, j), mid.get(j, i));
            }
        }
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let s = g0();
        let sf = ScaleFunction::from_alpha(
            (0..9).map(|i| 1.2 + 0.037 * i as f64).collect(),
            1.2,
            1.6,
        )
        .unwrap();
        let k = JumpKernel::stable_like(&s, &sf, 0.7, 1.0, Symmetrization::Midpoint).unwrap();
        let back = JumpKernel::from_csv_str(&k.to_csv()).unwrap();
        for i in 0..9 {
            for j in 0..9 {
                assert_eq!(back.get(i, j).to_bits(), k.get(i, j).to_bits());
            }
        }
    }

    #[test]
    fn custom_rejects_bad_tables() {
        let asym = vec![vec![0.0, 1.0], vec![2.0, 0.0]];
        assert!(matches!(JumpKernel::from_dense(&asym), Err(Error::AsymmetricKernel { i: 0, j: 1, .. })));
        let neg = vec![vec![0.0, -1.0], vec![-1.0, 0.0]];
        assert!(matches!(JumpKernel::from_dense(&neg), Err(Error::NegativeKernelEntry { i: 0, j: 1, .. })));
        let ragged = vec![vec![0.0, 1.0], vec![1.0]];
        assert!(JumpKernel::from_dense(&ragged).is_err());
        assert!(JumpKernel::from_csv_str("0,1\n1,x\n").is_err());
    }

    #[test]
    fn custom_flags_isolated_rows() {
        let t = vec![
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0],
        ];
        let k = JumpKernel::from_dense(&t).unwrap();
        assert_eq!(k.unsupported_rows(), &[2]);
        assert!(!k.is_fully_supported());
    }

    #[test]
    fn j_phi_hand_product() {
        let (s, sf, k) = g0_kernel();
        let (zero, half) = (s.nearest(&[0.0]), s.nearest(&[0.5]));
        let d = s.distance(zero, half);
        let v = k.get(zero, half) * s.volume(zero, d).unwrap() * sf.phi(zero, d);
        assert_eq!(v, 3.0);
        let fit = k.check_j_phi(&s, &sf).unwrap();
        assert!(fit.c1_hat > 0.0 && fit.c1_hat <= 3.0 && 3.0 <= fit.c2_hat);
        // witnesses reproduce their constants
        let (a, b) = fit.upper_witness;
        let d = s.distance(a, b);
        assert_eq!(k.get(a, b) * s.volume(a, d).unwrap() * sf.phi(a, d), fit.c2_hat);
    }

    #[test]
    fn j_phi_two_points() {
        let s = GridSpace::build(1, &[(0.0, 0.5)], 0.5, Topology::Truncated).unwrap();
        let sf = ScaleFunction::constant_order(&s, 1.0).unwrap();
        let k = JumpKernel::stable_like(&s, &sf, 1.0, 1.0, Symmetrization::Midpoint).unwrap();
        let fit = k.check_j_phi(&s, &sf).unwrap();
        assert_eq!(fit.c1_hat, fit.c2_hat);
    }

    #[test]
    fn ij_hand_sum() {
        let (s, sf, k) = g0_kernel();
        let zero = s.nearest(&[0.0]);
        let v = sf.phi(zero, 1.0) * k.exterior_rate(&s, zero, 1.0);
        let hand = 0.5 * 2.0 * (1.5f64.powi(-2) + 2f64.powi(-2));
        assert!((v - hand).abs() < 1e-14);
        assert!((hand - 0.694_444_444_444_444_4).abs() < 1e-12);
        assert_eq!(k.exterior_rate(&s, zero, 10.0), 0.0);
        let fit = k.check_ij(&s, &sf, &[0.5, 1.0, 10.0]).unwrap();
        assert!(fit.c3_hat >= v);
    }

    #[test]
    fn scaling_scales_constants() {
        let (s, sf, k) = g0_kernel();
        let t = 2.5;
        let k2 = k.scaled(t);
        let (a, b) = (k.check_j_phi(&s, &sf).unwrap(), k2.check_j_phi(&s, &sf).unwrap());
        assert!((b.c1_hat - t * a.c1_hat).abs() < 1e-12 * b.c1_hat);
        assert!((b.c2_hat - t * a.c2_hat).abs() < 1e-12 * b.c2_hat);
        let radii = [0.5, 1.0];
        let (a, b) = (k.check_ij(&s, &sf, &radii).unwrap(), k2.check_ij(&s, &sf, &radii).unwrap());
        assert!((b.c3_hat - t * a.c3_hat).abs() < 1e-12 * b.c3_hat);
    }

    #[test]
    fn torus_kernel_depends_on_distance_only() {
        let s = GridSpace::build(1, &[(0.0, 4.0)], 0.25, Topology::Torus).unwrap();
        let sf = ScaleFunction::constant_order(&s, 1.0).unwrap();
        let k = JumpKernel::stable_like(&s, &sf, 1.0, 1.0, Symmetrization::Midpoint).unwrap();
        let n = s.len();
        for i in 0..n {
            for j in 0..n {
                let (i2, j2) = ((i + 3) % n, (j + 3) % n);
                assert_eq!(k.get(i, j), k.get(i2, j2));
            }
        }
    }
}
