//! Elliptic Hölder regularity: oscillation decay of harmonic functions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::BallSpec;
use crate::error::{Error, Result};
use crate::fit::{log_log_fit, LinearFit};
use crate::operator::Generator;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscRow {
    pub rho: f64,
    pub osc: f64,
    pub column_id: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EhrColumn {
    pub ball: BallSpec,
    /// Exit site of the harmonic-measure column.
    pub column_id: usize,
    pub fit: LinearFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EhrReport {
    /// Smallest fitted exponent over all columns.
    pub theta_hat: f64,
    pub r_squared: f64,
    pub worst: Option<EhrColumn>,
    /// Oscillation table of the worst column.
    pub table: Vec<OscRow>,
    pub columns: Vec<EhrColumn>,
    pub skipped: usize,
    /// Every column's oscillation is nondecreasing in `rho`, compared exactly.
    pub all_monotone: bool,
}

/// For each ball `B(x0, r)` and each harmonic-measure column `u`, fits
/// `log osc_{B(x0, rho)} u` against `log rho`; the worst (smallest) slope
/// is reported.
pub fn estimate_ehr(gen: &Generator, balls: &[BallSpec], rhos: &[f64]) -> Result<EhrReport> {
    if rhos.len() < 3 {
        return Err(Error::InvalidParameter("rho grid needs at least 3 values".into()));
    }
    let mut rhos = rhos.to_vec();
    rhos.sort_by(f64::total_cmp);
    let space = gen.space();
    let mut columns = Vec::new();
    let mut tables: Vec<Vec<OscRow>> = Vec::new();
    let mut skipped = 0;
    let mut all_monotone = true;
    for &ball in balls {
        if let Some(&bad) = rhos.iter().find(|&&p| !(p > 0.0 && p < ball.r)) {
            return Err(Error::InvalidParameter(format!(
                "rho = {bad} must lie in (0, {})",
                ball.r
            )));
        }
        let domain = gen.ball_domain(ball.center, ball.r)?;
        let hm = gen.harmonic_measure(&domain)?;
        let inner: Vec<Vec<usize>> = rhos
            .iter()
            .map(|&p| space.ball(ball.center, p))
            .collect::<Result<_>>()?;
        let oscillations: Vec<Vec<f64>> = (0..hm.exterior.len())
            .into_par_iter()
            .map(|col| {
                let value = |x: usize| hm.matrix[(domain.position(x).unwrap(), col)];
                inner
                    .iter()
                    .map(|set| {
                        let (lo, hi) = set
                            .iter()
                            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
                                (a.min(value(x)), b.max(value(x)))
                            });
                        hi - lo
                    })
                    .collect()
            })
            .collect();
        let mut results = Vec::with_capacity(oscillations.len());
        for (col, osc) in oscillations.into_iter().enumerate() {
            all_monotone &= osc.windows(2).all(|w| w[0] <= w[1]);
            let z = hm.exterior[col];
            results.push(log_log_fit(&rhos, &osc).map(|fit| {
                let table = rhos
                    .iter()
                    .zip(&osc)
                    .map(|(&rho, &osc)| OscRow { rho, osc, column_id: z })
                    .collect::<Vec<_>>();
                (EhrColumn { ball, column_id: z, fit }, table)
            }));
        }
        for r in results {
            match r {
                Some((c, t)) => {
                    columns.push(c);
                    tables.push(t);
                }
                None => skipped += 1,
            }
        }
    }
    let worst = columns
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.fit.slope.total_cmp(&b.1.fit.slope))
        .map(|(i, _)| i);
    Ok(match worst {
        Some(i) => EhrReport {
            theta_hat: columns[i].fit.slope,
            r_squared: columns[i].fit.r_squared,
            worst: Some(columns[i].clone()),
            table: tables[i].clone(),
            columns,
            skipped,
            all_monotone,
        },
        None => EhrReport {
            theta_hat: f64::NAN,
            r_squared: f64::NAN,
            worst: None,
            table: Vec::new(),
            columns,
            skipped,
            all_monotone,
        },
    })
}
