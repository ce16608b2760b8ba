//! Two-sided comparability of mean exit times from balls with `phi`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fit::{log_log_fit, LinearFit};
use crate::operator::Generator;
use crate::scale::ScaleFunction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitRow {
    pub center: usize,
    pub r: f64,
    pub e_tau: f64,
    pub phi: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterSlope {
    pub center: usize,
    /// Local order `alpha(x)` when the scale function has one.
    pub alpha: Option<f64>,
    pub fit: Option<LinearFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitReport {
    pub c1_hat: f64,
    /// `max ratio / min ratio` over the table.
    pub envelope: f64,
    pub rows: Vec<ExitRow>,
    pub slopes: Vec<CenterSlope>,
}

/// Radii at most 1 enter the per-center slope fit (the small-scale regime
/// where `phi(x, r) = r^alpha(x)`).
const SLOPE_MAX_RADIUS: f64 = 1.0;

pub fn check_e_phi(
    gen: &Generator,
    sf: &ScaleFunction,
    centers: &[usize],
    radii: &[f64],
) -> Result<ExitReport> {
    let jobs: Vec<(usize, f64)> = centers
        .iter()
        .flat_map(|&c| radii.iter().map(move |&r| (c, r)))
        .collect();
    let rows: Vec<ExitRow> = jobs
        .par_iter()
        .map(|&(center, r)| {
            let domain = gen.ball_domain(center, r)?;
            let solver = gen.solver(&domain)?;
            let e = solver.mean_exit_time()?;
            let e_tau = e[domain.position(center).unwrap()];
            let phi = sf.phi_eval(center, r)?;
            Ok(ExitRow {
                center,
                r,
                e_tau,
                phi,
                ratio: e_tau / phi,
            })
        })
        .collect::<Result<_>>()?;
    let (lo, hi) = rows.iter().fold((f64::INFINITY, 0.0f64), |(a, b), row| {
        (a.min(row.ratio), b.max(row.ratio))
    });
    let c1_hat = if rows.is_empty() { 1.0 } else { hi.max(1.0 / lo) };
    let mut per_center: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for row in rows.iter().filter(|row| row.r <= SLOPE_MAX_RADIUS) {
        let e = per_center.entry(row.center).or_default();
        e.0.push(row.r);
        e.1.push(row.e_tau);
    }
    let mut slopes = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for &c in centers {
        if !seen.insert(c) {
            continue;
        }
        let fit = per_center
            .get(&c)
            .filter(|(rs, _)| rs.len() >= 2)
            .and_then(|(rs, es)| log_log_fit(rs, es));
        slopes.push(CenterSlope {
            center: c,
            alpha: sf.alpha(c),
            fit,
        });
    }
    Ok(ExitReport {
        c1_hat,
        envelope: if rows.is_empty() { 1.0 } else { hi / lo },
        rows,
        slopes,
    })
}
