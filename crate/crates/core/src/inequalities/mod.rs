//! Empirical constants of the elliptic Harnack family of conditions.
//!
//! Every check returns a report with the measured constant and a witness
//! from which that constant can be recomputed. Harnack-type constants are
//! clamped below at 1 (the defining inequalities only allow `c >= 1`); the
//! witness keeps the raw ratio.

mod covering;
mod csj;
mod ehr;
mod exit;
mod fk;
mod harnack;

pub use covering::{ks_cover, KsCover};
pub use csj::{check_csj, linear_cutoff, CsjRow, CsjSpec, CsjReport, FrontierPoint};
pub use ehr::{estimate_ehr, EhrColumn, EhrReport, OscRow};
pub use exit::{check_e_phi, CenterSlope, ExitReport, ExitRow};
pub use fk::{check_fk, FkReport, FkRow, SubsetSampler};
pub use harnack::{
    check_ehi, check_ehi_phi, check_wehi, check_wehi_plus, default_family, evaluate_member,
    kassmann_sweep, FamilyMember, FamilySpec, HarnackKind, HarnackReport, HarnackWitness,
    KassmannRow, KassmannSweep, TwoBallSpec, INTERIOR_ROUNDOFF,
};

use serde::{Deserialize, Serialize};

use crate::scale::ScaleFunction;
use crate::space::GridSpace;

pub const DEFAULT_DELTA: f64 = 0.5;
pub const DEFAULT_EPSILON: f64 = 0.5;
pub const DEFAULT_KAPPA: f64 = 2.0;
pub const DEFAULT_C0: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallSpec {
    pub center: usize,
    pub r: f64,
}

/// `Tail_phi(u; x0, r) = sum_{z outside B(x0,r)} |u(z)| m(z) / (V(x0,d) phi(x0,d))`
/// with `d = d(x0, z)`.
pub fn tail_phi(space: &GridSpace, sf: &ScaleFunction, u: &[f64], x0: usize, r: f64) -> f64 {
    let profile = space.volume_profile(x0);
    let mut total = 0.0;
    for z in 0..space.len() {
        if u[z] == 0.0 {
            continue;
        }
        let d = space.distance(x0, z);
        if space.within(d, r) {
            continue;
        }
        total += u[z].abs() * space.mass(z) / (profile.volume(d) * sf.phi(x0, d));
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioResult {
    pub sup: f64,
    pub inf: f64,
    /// `sup / inf`, or `+inf` when `inf <= 0`.
    pub ratio: f64,
    pub argmax: usize,
    pub argmin: usize,
    pub infinite: bool,
}

/// Max, min and their ratio of `u` over `set`. Ties resolve to the first
/// index in `set`.
pub fn harnack_ratio(u: &[f64], set: &[usize]) -> RatioResult {
    assert!(!set.is_empty(), "harnack_ratio needs a nonempty set");
    let (mut argmax, mut argmin) = (set[0], set[0]);
    for &x in &set[1..] {
        if u[x] > u[argmax] {
            argmax = x;
        }
        if u[x] < u[argmin] {
            argmin = x;
        }
    }
    let (sup, inf) = (u[argmax], u[argmin]);
    let infinite = !(inf > 0.0);
    RatioResult {
        sup,
        inf,
        ratio: if infinite { f64::INFINITY } else { sup / inf },
        argmax,
        argmin,
        infinite,
    }
}

#[cfg(test)]
mod tests;
