//! Krylov–Safonov covering `[E]_eta`.
//!
//! `[E]_eta` is the union of `B(x, 5 rho) ∩ B(x0, r)` over centers
//! `x ∈ B(x0, r)` and radii `0 < rho < r` with
//! `mu(E ∩ B(x, 5 rho)) / mu(B(x, rho)) > eta`. Both balls only change
//! when `rho` or `5 rho` crosses a realized distance, so scanning `rho`
//! over `{d, d/5}` (plus one radius below all of them) is exact. For a
//! fixed center the admissible sets are nested, so only the largest
//! admissible `rho` matters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::GridSpace;

/// Slack on the measure branch at lattice scale.
pub const KS_SLACK: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsCover {
    pub set: Vec<usize>,
    pub mu_e: f64,
    pub mu_cover: f64,
    pub mu_ball: f64,
    /// `[E]_eta = B(x0, r)`.
    pub full: bool,
    /// `mu([E]_eta) >= mu(E) / eta`.
    pub measure_raw: bool,
    /// `mu([E]_eta) >= mu(E) / (2 eta)`.
    pub measure_slack: bool,
    pub dichotomy: bool,
}

pub fn ks_cover(space: &GridSpace, e: &[usize], x0: usize, r: f64, eta: f64) -> Result<KsCover> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidParameter(format!("eta = {eta} must lie in (0, 1)")));
    }
    let ball = space.ball(x0, r)?;
    let n = space.len();
    let mut in_e = vec![false; n];
    let mut in_ball = vec![false; n];
    for &x in &ball {
        in_ball[x] = true;
    }
    for &x in e {
        space.check_index(x)?;
        if !in_ball[x] {
            return Err(Error::NotSubset(x));
        }
        in_e[x] = true;
    }
    let mut covered = vec![false; n];
    for &x in &ball {
        // distances from x sorted, with prefix masses of the space and of E
        let mut order: Vec<(f64, usize)> = (0..n).map(|y| (space.distance(x, y), y)).collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut mass = Vec::with_capacity(n);
        let mut mass_e = Vec::with_capacity(n);
        let (mut acc, mut acc_e) = (0.0, 0.0);
        for &(_, y) in &order {
            acc += space.mass(y);
            if in_e[y] {
                acc_e += space.mass(y);
            }
            mass.push(acc);
            mass_e.push(acc_e);
        }
        let upto = |rad: f64| order.partition_point(|&(d, _)| space.within(d, rad));
        let mut candidates: Vec<f64> = order
            .iter()
            .flat_map(|&(d, _)| [d, d / 5.0])
            .filter(|&rho| rho > 0.0 && rho < r && !space.within(rho, 0.0))
            .collect();
        let smallest = candidates.iter().copied().fold(r, f64::min);
        candidates.push(smallest / 2.0);
        candidates.sort_by(|a, b| b.total_cmp(a));
        candidates.dedup();
        let best = candidates.into_iter().find(|&rho| {
            let k_big = upto(5.0 * rho);
            let k_small = upto(rho);
            let num = if k_big == 0 { 0.0 } else { mass_e[k_big - 1] };
            num / mass[k_small - 1] > eta
        });
        if let Some(rho) = best {
            for &(d, y) in order.iter().take(upto(5.0 * rho)) {
                debug_assert!(space.within(d, 5.0 * rho));
                if in_ball[y] {
                    covered[y] = true;
                }
            }
        }
    }
    let set: Vec<usize> = (0..n).filter(|&y| covered[y]).collect();
    let measure = |pts: &[usize]| pts.iter().map(|&y| space.mass(y)).sum::<f64>();
    let mu_e: f64 = (0..n).filter(|&y| in_e[y]).map(|y| space.mass(y)).sum();
    let mu_cover = measure(&set);
    let mu_ball = measure(&ball);
    let full = set.len() == ball.len();
    let measure_raw = mu_cover >= mu_e / eta;
    let measure_slack = mu_cover >= mu_e / (KS_SLACK * eta);
    Ok(KsCover {
        set,
        mu_e,
        mu_cover,
        mu_ball,
        full,
        measure_raw,
        measure_slack,
        dichotomy: full || measure_slack,
    })
}
