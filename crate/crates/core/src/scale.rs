//! State-dependent scale functions `phi(x, r)` and checks of their
//! structural conditions (two-sided power scaling, comparability of
//! neighbouring points, log-continuity of the order).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::GridSpace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleKind {
    ConstantOrder,
    VariableOrder,
    Custom,
}

/// Built-in order profiles, evaluated at the first coordinate and clamped
/// to `[alpha1, alpha2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AlphaProfile {
    Constant { alpha: f64 },
    Affine { intercept: f64, slope: f64 },
    Sinusoidal { mean: f64, amplitude: f64, omega: f64 },
}

impl AlphaProfile {
    pub fn eval(&self, x1: f64) -> f64 {
        match *self {
            AlphaProfile::Constant { alpha } => alpha,
            AlphaProfile::Affine { intercept, slope } => intercept + slope * x1,
            AlphaProfile::Sinusoidal {
                mean,
                amplitude,
                omega,
            } => mean + amplitude * (omega * x1).sin(),
        }
    }
}

/// Monotone table `r -> phi(r)` shared by all points, interpolated
/// linearly in log-log coordinates and extrapolated with the end slopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleTable {
    radii: Vec<f64>,
    values: Vec<f64>,
}

impl ScaleTable {
    pub fn new(radii: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if radii.len() != values.len() {
            return Err(Error::InvalidScaleTable(format!(
                "{} radii but {} values",
                radii.len(),
                values.len()
            )));
        }
        if radii.len() < 2 {
            return Err(Error::InvalidScaleTable("need at least two entries".into()));
        }
        for k in 0..radii.len() {
            if !(radii[k] > 0.0) || !(values[k] > 0.0) {
                return Err(Error::InvalidScaleTable(format!(
                    "entry {k} is not positive"
                )));
            }
            if k > 0 && !(radii[k] > radii[k - 1] && values[k] > values[k - 1]) {
                return Err(Error::InvalidScaleTable(format!(
                    "entry {k} breaks strict monotonicity"
                )));
            }
        }
        let table = Self { radii, values };
        let at_one = table.eval(1.0);
        if (at_one - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidScaleTable(format!(
                "phi(1) = {at_one}, normalization requires phi(1) = 1"
            )));
        }
        Ok(table)
    }

    pub fn eval(&self, r: f64) -> f64 {
        let lr = r.ln();
        let n = self.radii.len();
        let k = self.radii.partition_point(|&t| t <= r).clamp(1, n - 1);
        let (r0, r1) = (self.radii[k - 1].ln(), self.radii[k].ln());
        let (v0, v1) = (self.values[k - 1].ln(), self.values[k].ln());
        let slope = (v1 - v0) / (r1 - r0);
        (v0 + slope * (lr - r0)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleFunction {
    kind: ScaleKind,
    /// Order at each grid point (empty for custom tables).
    alpha: Vec<f64>,
    alpha1: f64,
    alpha2: f64,
    table: Option<ScaleTable>,
}

fn check_alpha_range(alpha1: f64, alpha2: f64) -> Result<()> {
    if alpha1 > 0.0 && alpha1 <= alpha2 && alpha2 < 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidAlphaRange { alpha1, alpha2 })
    }
}

impl ScaleFunction {
    pub fn constant_order(space: &GridSpace, alpha: f64) -> Result<Self> {
        check_alpha_range(alpha, alpha)?;
        Ok(Self {
            kind: ScaleKind::ConstantOrder,
            alpha: vec![alpha; space.len()],
            alpha1: alpha,
            alpha2: alpha,
            table: None,
        })
    }

    /// `phi(x, r) = r^alpha(x)` for `r <= 1` and `r^alpha1` beyond.
    pub fn variable_order(
        space: &GridSpace,
        profile: &AlphaProfile,
        alpha1: f64,
        alpha2: f64,
    ) -> Result<Self> {
        check_alpha_range(alpha1, alpha2)?;
        let alpha = (0..space.len())
            .map(|i| profile.eval(space.point(i)[0]).clamp(alpha1, alpha2))
            .collect();
        Ok(Self {
            kind: ScaleKind::VariableOrder,
            alpha,
            alpha1,
            alpha2,
            table: None,
        })
    }

    /// Explicit per-point orders (must lie in `[alpha1, alpha2]`).
    pub fn from_alpha(alpha: Vec<f64>, alpha1: f64, alpha2: f64) -> Result<Self> {
        check_alpha_range(alpha1, alpha2)?;
        if let Some(a) = alpha.iter().find(|a| !(**a >= alpha1 && **a <= alpha2)) {
            return Err(Error::InvalidParameter(format!(
                "alpha value {a} outside [{alpha1}, {alpha2}]"
            )));
        }
        Ok(Self {
            kind: ScaleKind::VariableOrder,
            alpha,
            alpha1,
            alpha2,
            table: None,
        })
    }

    pub fn custom(table: ScaleTable) -> Self {
        Self {
            kind: ScaleKind::Custom,
            alpha: Vec::new(),
            alpha1: f64::NAN,
            alpha2: f64::NAN,
            table: Some(table),
        }
    }

    pub fn kind(&self) -> ScaleKind {
        self.kind
    }

    pub fn alpha1(&self) -> f64 {
        self.alpha1
    }

    pub fn alpha2(&self) -> f64 {
        self.alpha2
    }

    /// Order at grid point `x`; `None` for custom tables.
    pub fn alpha(&self, x: usize) -> Option<f64> {
        self.alpha.get(x).copied()
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }

    /// Unchecked evaluation; `r` must be positive.
    #[inline]
    pub fn phi(&self, x: usize, r: f64) -> f64 {
        debug_assert!(r > 0.0);
        match &self.table {
            Some(t) => t.eval(r),
            None if r <= 1.0 => r.powf(self.alpha[x]),
            None => r.powf(self.alpha1),
        }
    }

    pub fn phi_eval(&self, x: usize, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::InvalidRadius(r));
        }
        if self.table.is_none() && x >= self.alpha.len() {
            return Err(Error::PointOutOfRange {
                index: x,
                len: self.alpha.len(),
            });
        }
        Ok(self.phi(x, r))
    }

    /// Tightest power-law envelope `(R/r)^beta1 <= phi(x,R)/phi(x,r) <=
    /// (R/r)^beta2` with both multiplicative constants normalized to 1.
    pub fn check_scaling(&self, triples: &[(usize, f64, f64)]) -> Result<ScalingFit> {
        if triples.is_empty() {
            return Err(Error::EmptySample);
        }
        let mut fit = ScalingFit {
            beta1_hat: f64::INFINITY,
            beta2_hat: f64::NEG_INFINITY,
            c1_hat: 1.0,
            c2_hat: 1.0,
            beta1_witness: triples[0],
            beta2_witness: triples[0],
        };
        let mut informative = false;
        for &(x, r, big) in triples {
            if !(r > 0.0) || big < r {
                return Err(Error::InvalidParameter(format!(
                    "scaling triple needs 0 < r <= R, got r = {r}, R = {big}"
                )));
            }
            if big == r {
                continue;
            }
            informative = true;
            let ratio = self.phi_eval(x, big)? / self.phi(x, r);
            let exponent = ratio.ln() / (big / r).ln();
            if exponent < fit.beta1_hat {
                fit.beta1_hat = exponent;
                fit.beta1_witness = (x, r, big);
            }
            if exponent > fit.beta2_hat {
                fit.beta2_hat = exponent;
                fit.beta2_witness = (x, r, big);
            }
        }
        if !informative {
            return Err(Error::EmptySample);
        }
        Ok(fit)
    }

    /// `c3 = max phi(y,r)/phi(x,r)` over the samples, both orders of each
    /// pair, never below 1.
    pub fn check_comparability(
        &self,
        space: &GridSpace,
        samples: &[(usize, usize, f64)],
    ) -> Result<ComparabilityFit> {
        if samples.is_empty() {
            return Err(Error::EmptySample);
        }
        let mut out = ComparabilityFit {
            c3_hat: 1.0,
            witness: None,
        };
        for &(x, y, r) in samples {
            space.check_index(x)?;
            space.check_index(y)?;
            let d = space.distance(x, y);
            if !space.within(d, r) {
                return Err(Error::PairTooFar {
                    x,
                    y,
                    distance: d,
                    radius: r,
                });
            }
            let (px, py) = (self.phi_eval(x, r)?, self.phi_eval(y, r)?);
            for (ratio, w) in [(py / px, (x, y, r)), (px / py, (y, x, r))] {
                if ratio > out.c3_hat {
                    out.c3_hat = ratio;
                    out.witness = Some(w);
                }
            }
        }
        Ok(out)
    }

    /// `c = max |alpha(x) - alpha(y)| * log(2 / d(x,y))` over pairs at
    /// distance in `(0, 1)`; other pairs are skipped and counted.
    pub fn check_log_continuity(
        &self,
        space: &GridSpace,
        pairs: &[(usize, usize)],
    ) -> Result<LogContinuityFit> {
        if self.kind == ScaleKind::Custom {
            return Err(Error::InvalidParameter(
                "log-continuity needs a pointwise order".into(),
            ));
        }
        let mut out = LogContinuityFit {
            c_hat: 0.0,
            skipped: 0,
            witness: None,
        };
        for &(x, y) in pairs {
            space.check_index(x)?;
            space.check_index(y)?;
            let d = space.distance(x, y);
            if !(d > 0.0 && d < 1.0) {
                out.skipped += 1;
                continue;
            }
            let c = (self.alpha[x] - self.alpha[y]).abs() * (2.0 / d).ln();
            if c > out.c_hat {
                out.c_hat = c;
                out.witness = Some((x, y));
            }
        }
        Ok(out)
    }

    /// Exhaustive log-continuity scan over all grid pairs.
    pub fn log_continuity_all_pairs(&self, space: &GridSpace) -> Result<LogContinuityFit> {
        let n = space.len();
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|x| (x + 1..n).map(move |y| (x, y)))
            .collect();
        self.check_log_continuity(space, &pairs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub beta1_hat: f64,
    pub beta2_hat: f64,
    pub c1_hat: f64,
    pub c2_hat: f64,
    pub beta1_witness: (usize, f64, f64),
    pub beta2_witness: (usize, f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparabilityFit {
    pub c3_hat: f64,
    /// `(x, y, r)` with `phi(y, r) / phi(x, r) = c3_hat`.
    pub witness: Option<(usize, usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogContinuityFit {
    pub c_hat: f64,
    pub skipped: usize,
    pub witness: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleReport {
    pub beta1_hat: f64,
    pub beta2_hat: f64,
    pub c1_hat: f64,
    pub c2_hat: f64,
    pub c3_hat: f64,
    pub log_continuity_c_hat: Option<f64>,
    pub scaling: ScalingFit,
    pub comparability: ComparabilityFit,
    pub log_continuity: Option<LogContinuityFit>,
}

impl ScaleReport {
    pub fn new(
        scaling: ScalingFit,
        comparability: ComparabilityFit,
        log_continuity: Option<LogContinuityFit>,
    ) -> Self {
        Self {
            beta1_hat: scaling.beta1_hat,
            beta2_hat: scaling.beta2_hat,
            c1_hat: scaling.c1_hat,
            c2_hat: scaling.c2_hat,
            c3_hat: comparability.c3_hat,
            log_continuity_c_hat: log_continuity.as_ref().map(|l| l.c_hat),
            scaling,
            comparability,
            log_continuity,
        }
    }
}
