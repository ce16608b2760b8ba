//! Cutoff Sobolev inequality with one explicit cutoff.
//!
//! CSJ asserts that some cutoff function works. Checking the linear
//! cutoff below yields feasible constants, which is evidence for the
//! inequality; a large constant here is never a refutation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::Generator;
use crate::scale::ScaleFunction;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsjSpec {
    pub center: usize,
    pub big_r: f64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsjRow {
    pub function_id: String,
    /// `int_{B*} f^2 dGamma(cutoff, cutoff)`.
    pub lhs: f64,
    /// Cross energy of `f` over `U x U*`.
    pub t1: f64,
    /// `int_{B*} f^2 dmu / phi(x0, r)`.
    pub t2: f64,
    /// `c1_hat t1 + c2_hat t2 - lhs`, nonnegative by construction.
    pub slack: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub c1: f64,
    /// Smallest feasible `C2` for this `C1`; infinite when none works.
    pub c2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsjReport {
    pub spec: CsjSpec,
    pub c0: f64,
    /// Feasible pair on the diagonal `C1 = C2`.
    pub c1_hat: f64,
    pub c2_hat: f64,
    pub cutoff: String,
    pub rows: Vec<CsjRow>,
    pub frontier: Vec<FrontierPoint>,
}

/// `min(1, max(0, (R + r - d(x0, x)) / r))`: 1 on `B_R`, 0 off `B_{R+r}`.
pub fn linear_cutoff(gen: &Generator, spec: CsjSpec) -> Vec<f64> {
    let space = gen.space();
    (0..space.len())
        .map(|x| ((spec.big_r + spec.r - space.distance(spec.center, x)) / spec.r).clamp(0.0, 1.0))
        .collect()
}

pub fn check_csj(
    gen: &Generator,
    sf: &ScaleFunction,
    spec: CsjSpec,
    c0: f64,
    family: &[(String, Vec<f64>)],
) -> Result<CsjReport> {
    if !(c0 > 0.0 && c0 <= 1.0) {
        return Err(Error::InvalidParameter(format!("C0 = {c0} must lie in (0, 1]")));
    }
    if !(spec.r > 0.0 && spec.big_r > 0.0) {
        return Err(Error::InvalidRadius(spec.r.min(spec.big_r)));
    }
    let space = gen.space();
    let x0 = spec.center;
    let outer_r = spec.big_r + (1.0 + c0) * spec.r;
    let star = space.ball(x0, outer_r)?;
    if star.len() == space.len() {
        return Err(Error::InvalidDomain(format!(
            "B(x0, {outer_r}) covers the whole window"
        )));
    }
    let inside = |x: usize, rad: f64| rad >= 0.0 && space.within(space.distance(x0, x), rad);
    let u: Vec<usize> = (0..space.len())
        .filter(|&x| inside(x, spec.big_r + spec.r) && !inside(x, spec.big_r))
        .collect();
    let u_star: Vec<usize> = star
        .iter()
        .copied()
        .filter(|&x| !inside(x, spec.big_r - c0 * spec.r))
        .collect();
    if u.is_empty() || u_star.is_empty() {
        return Err(Error::InvalidDomain(
            "U or U* is empty at this resolution; increase r or refine h".into(),
        ));
    }
    let cutoff = linear_cutoff(gen, spec);
    let gamma = gen.carre_du_champ(&cutoff)?;
    let phi = sf.phi_eval(x0, spec.r)?;
    let mut rows = Vec::with_capacity(family.len());
    for (id, f) in family {
        if f.len() != space.len() {
            return Err(Error::DimensionMismatch {
                expected: space.len(),
                found: f.len(),
            });
        }
        let lhs: f64 = star.iter().map(|&x| f[x] * f[x] * gamma[x] * space.mass(x)).sum();
        let t1 = gen.pair_energy(f, &u, &u_star)?;
        let t2 = star.iter().map(|&x| f[x] * f[x] * space.mass(x)).sum::<f64>() / phi;
        rows.push(CsjRow {
            function_id: id.clone(),
            lhs,
            t1,
            t2,
            slack: 0.0,
        });
    }
    let c = rows
        .iter()
        .filter(|row| row.lhs > 0.0)
        .map(|row| row.lhs / (row.t1 + row.t2))
        .fold(0.0f64, f64::max);
    for row in &mut rows {
        row.slack = c * row.t1 + c * row.t2 - row.lhs;
    }
    let frontier = if c > 0.0 {
        (-4..=4)
            .map(|k| {
                let c1 = c * 2f64.powi(k);
                FrontierPoint { c1, c2: min_c2(&rows, c1) }
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(CsjReport {
        spec,
        c0,
        c1_hat: c,
        c2_hat: c,
        cutoff: "linear".into(),
        rows,
        frontier,
    })
}

fn min_c2(rows: &[CsjRow], c1: f64) -> f64 {
    let mut c2 = 0.0f64;
    for row in rows {
        let need = row.lhs - c1 * row.t1;
        if need <= 0.0 {
            continue;
        }
        if row.t2 > 0.0 {
            c2 = c2.max(need / row.t2);
        } else {
            return f64::INFINITY;
        }
    }
    c2
}
