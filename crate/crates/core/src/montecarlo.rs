//! Event-driven simulation of the jump chain.
//!
//! Holding times are `Exp(lambda(x))` and jump targets are drawn by
//! inverse CDF over per-state cumulative rate tables, so the only error is
//! statistical. Path `i` uses `ChaCha8Rng::seed_from_u64(seed)` on stream
//! `i`; paths are aggregated in fixed-size chunks combined in index order,
//! which makes results bit-identical for any thread count.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{Domain, Generator};

pub const DEFAULT_EVENT_CAP: u64 = 1_000_000;
const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default = "default_cap")]
    pub max_event_cap: u64,
}

fn default_cap() -> u64 {
    DEFAULT_EVENT_CAP
}

impl SimConfig {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        Self {
            n_paths,
            seed,
            max_event_cap: DEFAULT_EVENT_CAP,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_paths == 0 || self.max_event_cap == 0 {
            return Err(Error::InvalidParameter(
                "n_paths and max_event_cap must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn rng(&self, path: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(path as u64);
        rng
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathStats {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n)`; `None` when `n < 2`.
    pub stderr: Option<f64>,
    pub n: usize,
    pub histogram: BTreeMap<usize, u64>,
}

#[derive(Debug, Clone, Default)]
struct Accumulator {
    n: usize,
    sum: f64,
    sum_sq: f64,
    histogram: BTreeMap<usize, u64>,
}

impl Accumulator {
    fn push(&mut self, value: f64, key: usize) {
        self.n += 1;
        self.sum += value;
        self.sum_sq += value * value;
        *self.histogram.entry(key).or_insert(0) += 1;
    }

    fn merge(&mut self, other: Accumulator) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        for (k, v) in other.histogram {
            *self.histogram.entry(k).or_insert(0) += v;
        }
    }

    fn finish(self) -> PathStats {
        let n = self.n;
        let mean = if n == 0 { f64::NAN } else { self.sum / n as f64 };
        let stderr = (n >= 2).then(|| {
            let var = ((self.sum_sq - n as f64 * mean * mean) / (n as f64 - 1.0)).max(0.0);
            (var / n as f64).sqrt()
        });
        PathStats {
            mean,
            stderr,
            n,
            histogram: self.histogram,
        }
    }
}

/// Cumulative jump tables of a generator.
pub struct Simulator<'g> {
    gen: &'g Generator,
    cumulative: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOutcome {
    pub time: f64,
    pub exit_site: usize,
    pub jumps: u64,
    /// Jumps longer than the threshold passed to [`Simulator::run_path`].
    pub long_jumps: u64,
    /// Exit happened before the time horizon.
    pub exited: bool,
}

impl<'g> Simulator<'g> {
    pub fn new(gen: &'g Generator) -> Self {
        let n = gen.len();
        let rates = gen.rates();
        let cumulative = (0..n)
            .into_par_iter()
            .map(|x| {
                let mut acc = 0.0;
                (0..n)
                    .map(|y| {
                        acc += rates[(x, y)];
                        acc
                    })
                    .collect()
            })
            .collect();
        Self { gen, cumulative }
    }

    fn jump(&self, rng: &mut ChaCha8Rng, x: usize) -> usize {
        let row = &self.cumulative[x];
        let target = rng.random::<f64>() * row[row.len() - 1];
        let y = row.partition_point(|&c| c <= target).min(row.len() - 1);
        if y == x {
            // zero-width slot, only reachable through round-off
            if y + 1 < row.len() { y + 1 } else { y - 1 }
        } else {
            y
        }
    }

    /// Runs one path from `start` until it leaves `inside` or the clock
    /// passes `horizon`. Returns `None` when the event cap is hit.
    pub fn run_path(
        &self,
        rng: &mut ChaCha8Rng,
        inside: &[bool],
        start: usize,
        horizon: f64,
        long_jump: f64,
        cap: u64,
    ) -> Option<PathOutcome> {
        let space = self.gen.space();
        let (mut x, mut t, mut jumps, mut long_jumps) = (start, 0.0, 0u64, 0u64);
        loop {
            if jumps >= cap {
                return None;
            }
            let hold: f64 = rng.sample(Exp1);
            t += hold / self.gen.lambda(x);
            if t > horizon {
                return Some(PathOutcome {
                    time: horizon,
                    exit_site: x,
                    jumps,
                    long_jumps,
                    exited: false,
                });
            }
            let y = self.jump(rng, x);
            jumps += 1;
            if space.distance(x, y) > long_jump {
                long_jumps += 1;
            }
            x = y;
            if !inside[x] {
                return Some(PathOutcome {
                    time: t,
                    exit_site: x,
                    jumps,
                    long_jumps,
                    exited: true,
                });
            }
        }
    }

    /// Runs `cfg.n_paths` paths and folds them chunk by chunk in path order.
    fn run_all<T, F>(&self, cfg: &SimConfig, init: impl Fn() -> T + Sync + Send, fold: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&mut T, usize) + Sync + Send,
    {
        let chunks = cfg.n_paths.div_ceil(CHUNK);
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut acc = init();
                for path in c * CHUNK..((c + 1) * CHUNK).min(cfg.n_paths) {
                    fold(&mut acc, path);
                }
                acc
            })
            .collect()
    }
}

fn membership(gen: &Generator, domain: &Domain) -> Vec<bool> {
    let mut inside = vec![false; gen.len()];
    for &x in domain.points() {
        inside[x] = true;
    }
    inside
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitSimulation {
    /// Exit times; histogram keyed by number of jumps.
    pub time: PathStats,
    /// Distance from the start to the exit site; histogram keyed by exit site.
    pub site: PathStats,
    /// Paths that hit the event cap (0 in healthy runs).
    pub aborted: usize,
}

#[derive(Default)]
struct ExitAcc {
    time: Accumulator,
    site: Accumulator,
    aborted: usize,
}

pub fn simulate_exit(
    gen: &Generator,
    domain: &Domain,
    start: usize,
    cfg: &SimConfig,
) -> Result<ExitSimulation> {
    let sim = Simulator::new(gen);
    simulate_exit_with(&sim, domain, start, cfg)
}

pub fn simulate_exit_with(
    sim: &Simulator<'_>,
    domain: &Domain,
    start: usize,
    cfg: &SimConfig,
) -> Result<ExitSimulation> {
    cfg.validate()?;
    if !domain.contains(start) {
        return Err(Error::InvalidParameter(format!("start {start} is not in the domain")));
    }
    let gen = sim.gen;
    let inside = membership(gen, domain);
    let parts = sim.run_all(cfg, ExitAcc::default, |acc, path| {
        let mut rng = cfg.rng(path);
        match sim.run_path(&mut rng, &inside, start, f64::INFINITY, f64::INFINITY, cfg.max_event_cap) {
            Some(o) => {
                acc.time.push(o.time, o.jumps as usize);
                acc.site.push(gen.space().distance(start, o.exit_site), o.exit_site);
            }
            None => acc.aborted += 1,
        }
    });
    let mut total = ExitAcc::default();
    for p in parts {
        total.time.merge(p.time);
        total.site.merge(p.site);
        total.aborted += p.aborted;
    }
    Ok(ExitSimulation {
        time: total.time.finish(),
        site: total.site.finish(),
        aborted: total.aborted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub case: usize,
    pub start: usize,
    pub domain_size: usize,
    pub exact: f64,
    pub mc_mean: f64,
    pub stderr: Option<f64>,
    pub z: Option<f64>,
    /// `None` for flagged rows (undefined standard error).
    pub pass: Option<bool>,
    pub aborted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitValidation {
    pub rows: Vec<ValidationRow>,
    pub z_threshold: f64,
    /// Fraction of unflagged rows with `|z| <= z_threshold`.
    pub pass_rate: f64,
    pub flagged: usize,
}

/// Case `k` is simulated with seed `cfg.seed + k` (wrapping).
pub fn validate_exit_times(
    gen: &Generator,
    cases: &[(Domain, usize)],
    cfg: &SimConfig,
    z_threshold: f64,
) -> Result<ExitValidation> {
    let sim = Simulator::new(gen);
    let mut rows = Vec::with_capacity(cases.len());
    for (k, (domain, start)) in cases.iter().enumerate() {
        let exact = gen.mean_exit_time(domain)?[domain
            .position(*start)
            .ok_or_else(|| Error::InvalidParameter(format!("start {start} is not in the domain")))?];
        let case_cfg = SimConfig {
            seed: cfg.seed.wrapping_add(k as u64),
            ..*cfg
        };
        let out = simulate_exit_with(&sim, domain, *start, &case_cfg)?;
        let z = out
            .time
            .stderr
            .filter(|&s| s > 0.0)
            .map(|s| (out.time.mean - exact) / s);
        rows.push(ValidationRow {
            case: k,
            start: *start,
            domain_size: domain.len(),
            exact,
            mc_mean: out.time.mean,
            stderr: out.time.stderr,
            z,
            pass: z.map(|z| z.abs() <= z_threshold && out.aborted == 0),
            aborted: out.aborted,
        });
    }
    let judged: Vec<bool> = rows.iter().filter_map(|r| r.pass).collect();
    let pass_rate = if judged.is_empty() {
        f64::NAN
    } else {
        judged.iter().filter(|&&p| p).count() as f64 / judged.len() as f64
    };
    Ok(ExitValidation {
        flagged: rows.len() - judged.len(),
        rows,
        z_threshold,
        pass_rate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalEstimate {
    /// Estimate of `P^x(tau_{B(x,r)} <= t)`.
    pub estimate: f64,
    pub stderr: Option<f64>,
    pub n: usize,
    pub aborted: usize,
}

pub fn survival_probability(
    gen: &Generator,
    x: usize,
    r: f64,
    t: f64,
    cfg: &SimConfig,
) -> Result<SurvivalEstimate> {
    cfg.validate()?;
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("time {t} must be nonnegative")));
    }
    let domain = gen.ball_domain(x, r)?;
    let inside = membership(gen, &domain);
    let sim = Simulator::new(gen);
    let parts = sim.run_all(cfg, || (Accumulator::default(), 0usize), |acc, path| {
        let mut rng = cfg.rng(path);
        match sim.run_path(&mut rng, &inside, x, t, f64::INFINITY, cfg.max_event_cap) {
            Some(o) => acc.0.push(if o.exited { 1.0 } else { 0.0 }, o.exited as usize),
            None => acc.1 += 1,
        }
    });
    let mut total = Accumulator::default();
    let mut aborted = 0;
    for (a, b) in parts {
        total.merge(a);
        aborted += b;
    }
    let stats = total.finish();
    Ok(SurvivalEstimate {
        estimate: stats.mean,
        stderr: stats.stderr,
        n: stats.n,
        aborted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevyCheck {
    /// Mean number of jumps longer than `s` up to and including the exit jump.
    pub lhs: f64,
    pub lhs_stderr: Option<f64>,
    /// `G_D b (x0)` with `b(x) = sum_{d(x,y) > s} q(x, y)`.
    pub rhs: f64,
    pub relative_error: f64,
    pub aborted: usize,
}

pub fn levy_system_check(
    gen: &Generator,
    x0: usize,
    r: f64,
    s: f64,
    cfg: &SimConfig,
) -> Result<LevyCheck> {
    cfg.validate()?;
    if !(s > 0.0) {
        return Err(Error::InvalidParameter(format!("jump threshold {s} must be positive")));
    }
    let space = gen.space();
    let domain = gen.ball_domain(x0, r)?;
    let big: Vec<f64> = domain
        .points()
        .iter()
        .map(|&x| {
            (0..gen.len())
                .filter(|&y| space.distance(x, y) > s)
                .map(|y| gen.rate(x, y))
                .sum()
        })
        .collect();
    let rhs = gen.green_apply(&domain, &big)?[domain.position(x0).unwrap()];
    let inside = membership(gen, &domain);
    let sim = Simulator::new(gen);
    let parts = sim.run_all(cfg, || (Accumulator::default(), 0usize), |acc, path| {
        let mut rng = cfg.rng(path);
        match sim.run_path(&mut rng, &inside, x0, f64::INFINITY, s, cfg.max_event_cap) {
            Some(o) => acc.0.push(o.long_jumps as f64, o.long_jumps as usize),
            None => acc.1 += 1,
        }
    });
    let mut total = Accumulator::default();
    let mut aborted = 0;
    for (a, b) in parts {
        total.merge(a);
        aborted += b;
    }
    let stats = total.finish();
    let relative_error = if rhs == 0.0 {
        if stats.mean == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        (stats.mean - rhs).abs() / rhs
    };
    Ok(LevyCheck {
        lhs: stats.mean,
        lhs_stderr: stats.stderr,
        rhs,
        relative_error,
        aborted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{JumpKernel, Symmetrization};
    use crate::operator::HeatSemigroup;
    use crate::scale::ScaleFunction;
    use crate::space::{GridSpace, Topology};

    fn g0() -> Generator {
        let s = GridSpace::build(1, &[(-2.0, 2.0)], 0.5, Topology::Truncated).unwrap();
        let sf = ScaleFunction::constant_order(&s, 1.0).unwrap();
        let k = JumpKernel::stable_like(&s, &sf, 1.0, 1.0, Symmetrization::Midpoint).unwrap();
        Generator::assemble(&s, &k).unwrap()
    }

    fn line(h: f64) -> Generator {
        let s = GridSpace::build(1, &[(-2.0, 2.0)], h, Topology::Truncated).unwrap();
        let sf = ScaleFunction::constant_order(&s, 1.2).unwrap();
        let k = JumpKernel::stable_like(&s, &sf, 1.0, 1.0, Symmetrization::Midpoint).unwrap();
        Generator::assemble(&s, &k).unwrap()
    }

    #[test]
    fn singleton_exit_time_and_site_law() {
        let gen = g0();
        let d = gen.domain(vec![4]).unwrap();
        let cfg = SimConfig::new(10_000, 42);
        let out = simulate_exit(&gen, &d, 4, &cfg).unwrap();
        let se = out.time.stderr.unwrap();
        assert!((out.time.mean - 36.0 / 205.0).abs() <= 3.0 * se);
        assert_eq!(out.aborted, 0);
        assert_eq!(out.time.histogram.get(&1), Some(&10_000));
        let total: u64 = out.site.histogram.values().sum();
        assert_eq!(total, 10_000);
        for (&z, &count) in &out.site.histogram {
            let p = gen.rate(4, z) / gen.lambda(4);
            let freq = count as f64 / 10_000.0;
            let sd = (p * (1.0 - p) / 10_000.0).sqrt();
            assert!((freq - p).abs() <= 3.0 * sd, "site {z}: {freq} vs {p}");
        }
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let gen = line(0.125);
        let d = gen.ball_domain(16, 0.5).unwrap();
        let cfg = SimConfig::new(3000, 9);
        let a = simulate_exit(&gen, &d, 16, &cfg).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| simulate_exit(&gen, &d, 16, &cfg).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.time.mean.to_bits(), b.time.mean.to_bits());
    }

    #[test]
    fn validation_flags_single_path() {
        let gen = g0();
        let d = gen.domain(vec![4]).unwrap();
        let v = validate_exit_times(&gen, &[(d.clone(), 4)], &SimConfig::new(1, 1), 4.0).unwrap();
        assert_eq!(v.flagged, 1);
        assert_eq!(v.rows[0].pass, None);
        let v = validate_exit_times(&gen, &[(d, 4)], &SimConfig::new(10_000, 1), 4.0).unwrap();
        assert_eq!(v.rows[0].pass, Some(true));
    }

    #[test]
    fn survival_limits_and_heat_kernel_cross_check() {
        let gen = line(0.125);
        let x = 16;
        let cfg = SimConfig::new(20_000, 5);
        assert_eq!(survival_probability(&gen, x, 0.5, 0.0, &cfg).unwrap().estimate, 0.0);
        assert_eq!(survival_probability(&gen, x, 0.5, 1e6, &cfg).unwrap().estimate, 1.0);
        let t = 0.05;
        let est = survival_probability(&gen, x, 0.5, t, &cfg).unwrap();
        let d = gen.ball_domain(x, 0.5).unwrap();
        let sg = HeatSemigroup::killed(&gen, &d, 2500).unwrap();
        let exact = 1.0 - sg.survival(d.position(x).unwrap(), t).unwrap();
        assert!((est.estimate - exact).abs() <= 4.0 * est.stderr.unwrap());
    }

    #[test]
    fn levy_system_singleton_and_far_threshold() {
        let gen = g0();
        let cfg = SimConfig::new(20_000, 3);
        let c = levy_system_check(&gen, 4, 0.25, 10.0, &cfg).unwrap();
        assert_eq!((c.lhs, c.rhs, c.relative_error), (0.0, 0.0, 0.0));
        let c = levy_system_check(&gen, 4, 0.25, 0.75, &cfg).unwrap();
        let space = gen.space();
        let far: f64 = (0..9).filter(|&y| space.distance(4, y) > 0.75).map(|y| gen.rate(4, y)).sum();
        assert!((c.rhs - far / gen.lambda(4)).abs() < 1e-14);
        assert!((c.lhs - c.rhs).abs() <= 4.0 * c.lhs_stderr.unwrap());
    }

    #[test]
    fn stderr_halves_with_four_times_the_paths() {
        let gen = line(0.125);
        let d = gen.ball_domain(16, 0.5).unwrap();
        let mut ratios = Vec::new();
        for seed in 0..8 {
            let a = simulate_exit(&gen, &d, 16, &SimConfig::new(2000, seed)).unwrap();
            let b = simulate_exit(&gen, &d, 16, &SimConfig::new(4000, seed + 100)).unwrap();
            ratios.push(a.time.stderr.unwrap() / b.time.stderr.unwrap());
        }
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!((mean / 2f64.sqrt() - 1.0).abs() <= 0.1, "{mean}");
    }
}
