//! Faber–Krahn: `lambda_1(D) >= (C / phi(x, r)) (V(x, r) / mu(D))^nu`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::BallSpec;
use crate::error::{Error, Result};
use crate::fit::{linear_fit, LinearFit};
use crate::operator::Generator;
use crate::scale::ScaleFunction;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SubsetSampler {
    /// `B(y, s) ∩ B(x, r)` with `y` uniform in `B(x, r)` and `s` uniform
    /// in `(0, r)`.
    #[default]
    SubBalls,
    /// Each point of `B(x, r)` kept independently with probability `p`.
    Bernoulli { p: f64 },
    /// Alternates between the two.
    Mixed { p: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FkRow {
    pub center: usize,
    pub r: f64,
    pub points: Vec<usize>,
    pub lambda1: f64,
    pub mu_d: f64,
    pub volume: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FkReport {
    pub nu_hat: f64,
    /// Largest `C` with the bound holding on every row at exponent `nu_hat`.
    pub c_hat: f64,
    pub r_squared: f64,
    pub fit: Option<LinearFit>,
    pub rows: Vec<FkRow>,
}

pub const MIN_SUBSETS: usize = 20;

fn sample(
    rng: &mut ChaCha8Rng,
    gen: &Generator,
    ball: &[usize],
    r: f64,
    sampler: SubsetSampler,
    k: usize,
) -> Vec<usize> {
    let space = gen.space();
    let bernoulli = |rng: &mut ChaCha8Rng, p: f64| -> Vec<usize> {
        loop {
            let d: Vec<usize> = ball.iter().copied().filter(|_| rng.random::<f64>() < p).collect();
            if !d.is_empty() {
                return d;
            }
        }
    };
    let sub_ball = |rng: &mut ChaCha8Rng| -> Vec<usize> {
        let y = ball[rng.random_range(0..ball.len())];
        let s = r * rng.random::<f64>();
        ball.iter()
            .copied()
            .filter(|&z| space.within(space.distance(y, z), s))
            .collect()
    };
    match sampler {
        SubsetSampler::SubBalls => sub_ball(rng),
        SubsetSampler::Bernoulli { p } => bernoulli(rng, p),
        SubsetSampler::Mixed { p } => {
            if k.is_multiple_of(2) {
                sub_ball(rng)
            } else {
                bernoulli(rng, p)
            }
        }
    }
}

/// Per ball: the full ball plus `n_subsets` random subsets. Ball `k` draws
/// from `ChaCha8Rng::seed_from_u64(seed)` on stream `k`.
pub fn check_fk(
    gen: &Generator,
    sf: &ScaleFunction,
    balls: &[BallSpec],
    sampler: SubsetSampler,
    n_subsets: usize,
    seed: u64,
) -> Result<FkReport> {
    if n_subsets < MIN_SUBSETS {
        return Err(Error::InvalidParameter(format!(
            "need at least {MIN_SUBSETS} subsets per ball, got {n_subsets}"
        )));
    }
    if let SubsetSampler::Bernoulli { p } | SubsetSampler::Mixed { p } = sampler {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidParameter(format!("keep probability {p} not in (0, 1]")));
        }
    }
    let space = gen.space();
    let mut jobs = Vec::new();
    for (k, b) in balls.iter().enumerate() {
        let ball = space.ball(b.center, b.r)?;
        let volume = space.volume(b.center, b.r)?;
        let phi = sf.phi_eval(b.center, b.r)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        jobs.push((*b, ball.clone(), volume, phi));
        for i in 0..n_subsets {
            let d = sample(&mut rng, gen, &ball, b.r, sampler, i);
            jobs.push((*b, d, volume, phi));
        }
    }
    let rows: Vec<FkRow> = jobs
        .into_par_iter()
        .map(|(b, points, volume, phi)| {
            let mu_d = points.iter().map(|&x| space.mass(x)).sum();
            let domain = gen.domain(points)?;
            let lambda1 = gen.lambda1(&domain)?.lambda1;
            Ok(FkRow {
                center: b.center,
                r: b.r,
                points: domain.points().to_vec(),
                lambda1,
                mu_d,
                volume,
                phi,
            })
        })
        .collect::<Result<_>>()?;
    let xs: Vec<f64> = rows.iter().map(|row| (row.volume / row.mu_d).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|row| (row.lambda1 * row.phi).ln()).collect();
    let fit = linear_fit(&xs, &ys);
    let (nu_hat, r_squared) = fit.map_or((f64::NAN, f64::NAN), |f| (f.slope, f.r_squared));
    let c_hat = match fit {
        Some(f) => xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - f.slope * x).exp())
            .fold(f64::INFINITY, f64::min),
        None => f64::NAN,
    };
    Ok(FkReport {
        nu_hat,
        c_hat,
        r_squared,
        fit,
        rows,
    })
}
