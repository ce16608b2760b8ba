//! Acceptance suite: one `[PASS]`/`[FAIL]` line per criterion, non-zero exit
//! status if any criterion fails. Runs the bundled R1 and R2 configurations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use jumplab_cli::config::{Config, Setup};
use jumplab_cli::ops::csj_family;
use jumplab_cli::{run_config, RunOptions};
use jumplab_core::fit::log_log_fit;
use jumplab_core::inequalities::{self as ineq, BallSpec, CsjSpec, SubsetSampler, TwoBallSpec};
use jumplab_core::montecarlo::{levy_system_check, validate_exit_times, SimConfig};
use jumplab_core::operator::{HeatSemigroup, DEFAULT_DENSE_CAP};
use jumplab_core::Domain;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = anyhow::Result<(bool, String)>;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn load(name: &str) -> anyhow::Result<(Config, Setup)> {
    let (cfg, base) = Config::load(&configs().join(name))?;
    let setup = Setup::build(&cfg, &base)?;
    Ok((cfg, setup))
}

fn x_of(s: &Setup, i: usize) -> f64 {
    s.space.point(i)[0]
}

/// A random proper subset: a ball, a thinned ball, or a union of two balls.
fn random_domain(s: &Setup, rng: &mut ChaCha8Rng, max_r: f64) -> anyhow::Result<Domain> {
    let n = s.space.len();
    loop {
        let c = rng.random_range(n / 8..7 * n / 8);
        let r = rng.random_range(4.0 * s.space.h()..max_r);
        let mut pts = s.space.ball(c, r)?;
        match rng.random_range(0..3) {
            0 => {}
            1 => pts.retain(|_| rng.random::<f64>() < 0.6),
            _ => {
                let c2 = rng.random_range(n / 8..7 * n / 8);
                pts.extend(s.space.ball(c2, r / 2.0)?);
                pts.sort_unstable();
                pts.dedup();
            }
        }
        if !pts.is_empty() {
            return Ok(s.gen.domain(pts)?);
        }
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn ratio_envelope(v: impl IntoIterator<Item = f64>) -> f64 {
    let (lo, hi) = v
        .into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    hi / lo
}

fn sixteen_centers(s: &Setup) -> anyhow::Result<Vec<usize>> {
    (0..16).map(|k| s.point(&[-2.8 + 5.6 * k as f64 / 15.0])).collect()
}

fn exact_inverse(r1: &Setup) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let d = random_domain(r1, &mut rng, 1.0)?;
        let f: Vec<f64> = (0..d.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let solver = r1.gen.solver(&d)?;
        let u_d = solver.green_apply(&f)?;
        let mut u = vec![0.0; r1.space.len()];
        for (&x, v) in d.points().iter().zip(&u_d) {
            u[x] = *v;
        }
        let lu = solver.restricted_generator_apply(&u)?;
        let res: Vec<f64> = lu.iter().zip(&f).map(|(a, b)| a - b).collect();
        worst = worst.max(max_abs(&res) / max_abs(&f));
    }
    Ok((worst <= 1e-10, format!("max relative residual {worst:.2e} (tol 1e-10)")))
}

fn green_symmetry(r1: &Setup) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut asym, mut min): (f64, f64) = (0.0, f64::INFINITY);
    for _ in 0..20 {
        let d = random_domain(r1, &mut rng, 1.0)?;
        let g = r1.gen.green(&d)?.matrix;
        asym = asym.max((&g - g.transpose()).abs().max());
        min = min.min(g.min());
    }
    Ok((
        asym <= 1e-12 && min >= 0.0,
        format!("max |G - G^T| {asym:.2e} (tol 1e-12), min entry {min:.3e} (>= 0)"),
    ))
}

fn lambda_exit(r1: &Setup) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = f64::INFINITY;
    for _ in 0..20 {
        let d = random_domain(r1, &mut rng, 1.0)?;
        let lam = r1.gen.lambda1(&d)?.lambda1;
        let tau = r1.gen.mean_exit_time(&d)?;
        worst = worst.min(lam * tau.iter().copied().fold(0.0, f64::max));
    }
    Ok((worst >= 1.0 - 1e-12, format!("min lambda1 * max E tau {worst:.6} (>= 1 - 1e-12)")))
}

fn monotonicity(r1: &Setup) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut lam_bad, mut cap_a_bad, mut cap_b_bad, mut tau_bad) = (0, 0, 0, 0);
    for _ in 0..50 {
        let small = random_domain(r1, &mut rng, 0.75)?;
        let mut pts = small.points().to_vec();
        let extra = r1.space.ball(pts[rng.random_range(0..pts.len())], rng.random_range(0.1..0.5))?;
        pts.extend(extra);
        pts.sort_unstable();
        pts.dedup();
        let big = r1.gen.domain(pts)?;
        if r1.gen.lambda1(&small)?.lambda1 < r1.gen.lambda1(&big)?.lambda1 {
            lam_bad += 1;
        }
        let (ts, tb) = (r1.gen.mean_exit_time(&small)?, r1.gen.mean_exit_time(&big)?);
        for (i, &x) in small.points().iter().enumerate() {
            if ts[i] > tb[big.position(x).unwrap()] {
                tau_bad += 1;
                break;
            }
        }
        // A1 ⊂ A2 ⊂ B1 ⊂ B2 built around one center.
        let c = small.points()[small.len() / 2];
        let r = rng.random_range(0.25..0.75);
        let a1 = r1.space.ball(c, r / 4.0)?;
        let a2 = r1.space.ball(c, r / 2.0)?;
        let b1 = r1.space.ball(c, r)?;
        let b2 = r1.space.ball(c, r * rng.random_range(1.2..2.0))?;
        let c11 = r1.gen.capacity(&a1, &b1)?.value;
        let c21 = r1.gen.capacity(&a2, &b1)?.value;
        let c12 = r1.gen.capacity(&a1, &b2)?.value;
        if c11 > c21 {
            cap_a_bad += 1;
        }
        if c12 > c11 {
            cap_b_bad += 1;
        }
    }
    let bad = lam_bad + cap_a_bad + cap_b_bad + tau_bad;
    Ok((
        bad == 0,
        format!(
            "violations over 50 nested pairs: lambda1 {lam_bad}, Cap in A {cap_a_bad}, Cap in B {cap_b_bad}, E tau {tau_bad}"
        ),
    ))
}

fn exit_scaling(r1: &Setup) -> Outcome {
    let centers = sixteen_centers(r1)?;
    let radii = [0.125, 0.25, 0.5, 1.0];
    let rep = ineq::check_e_phi(&r1.gen, &r1.sf, &centers, &radii)?;
    let mut worst: f64 = 0.0;
    for s in &rep.slopes {
        let (fit, alpha) = (s.fit.as_ref().unwrap(), s.alpha.unwrap());
        worst = worst.max((fit.slope - alpha).abs());
    }
    Ok((
        worst <= 0.15 && rep.envelope <= 10.0,
        format!("max |slope - alpha(x)| {worst:.4} (tol 0.15), envelope {:.3} (<= 10)", rep.envelope),
    ))
}

fn capacity_scaling(r1: &Setup) -> Outcome {
    let centers = sixteen_centers(r1)?;
    let radii = [0.125, 0.25, 0.5, 1.0];
    let mut normalized = Vec::new();
    let mut worst: f64 = 0.0;
    for &c in &centers {
        let mut caps = Vec::new();
        for &r in &radii {
            let cap = r1.gen.capacity(&r1.space.ball(c, r / 2.0)?, &r1.space.ball(c, r)?)?.value;
            normalized.push(cap * r1.sf.phi_eval(c, r)? / r);
            caps.push(cap);
        }
        let fit = log_log_fit(&radii, &caps).unwrap();
        worst = worst.max((fit.slope - (1.0 - r1.sf.alpha(c).unwrap())).abs());
    }
    let env = ratio_envelope(normalized);
    Ok((
        env <= 10.0 && worst <= 0.15,
        format!("envelope {env:.3} (<= 10), max |slope - (d - alpha(x))| {worst:.4} (tol 0.15)"),
    ))
}

fn monte_carlo(r1: &Setup, r2: &Setup) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut cases = Vec::new();
    while cases.len() < 40 {
        let c = r1.space.nearest(&[rng.random_range(-3.0..3.0)]);
        let r = rng.random_range(0.125..0.5);
        let d = r1.gen.ball_domain(c, r)?;
        let start = d.points()[rng.random_range(0..d.len())];
        cases.push((d, start));
    }
    let v = validate_exit_times(&r1.gen, &cases, &SimConfig::new(10_000, 2024), 4.0)?;
    let x0 = r2.point(&[2.0])?;
    let r = 0.25;
    let levy = levy_system_check(&r2.gen, x0, r, 2.0 * r, &SimConfig::new(100_000, 17))?;
    Ok((
        v.pass_rate >= 0.95 && v.flagged == 0 && levy.relative_error <= 0.05,
        format!(
            "exit-time pass rate {:.3} over {} pairs (>= 0.95, |z| <= 4), Levy relative error {:.4} (<= 0.05)",
            v.pass_rate,
            v.rows.len(),
            levy.relative_error
        ),
    ))
}

fn ehi_scale(r2: &Setup) -> Outcome {
    let c = r2.point(&[2.0])?;
    let r = 0.25;
    assert!(r / 2.0 >= 16.0 * r2.space.h());
    let big = ineq::check_ehi(&r2.gen, &[BallSpec { center: c, r }], ineq::DEFAULT_DELTA)?.c_hat;
    let small = ineq::check_ehi(&r2.gen, &[BallSpec { center: c, r: r / 2.0 }], ineq::DEFAULT_DELTA)?.c_hat;
    let q = big.max(small) / big.min(small);
    Ok((q <= 2.0, format!("C(r) {big:.4}, C(r/2) {small:.4}, ratio {q:.4} (<= 2)")))
}

fn kassmann(r1: &Setup) -> Outcome {
    let c = r1.point(&[0.0])?;
    let ball = TwoBallSpec { center: c, r: 0.5, big_r: 1.0 };
    let eps = [0.1, 0.03, 0.01, 0.003, 0.001, 0.0003, 0.0001];
    let sweep = ineq::kassmann_sweep(&r1.gen, &r1.sf, ball, 2.0, &eps)?;
    let base = sweep.rows[0].c_hat;
    let last = sweep.rows.last().unwrap();
    let drift = sweep
        .rows
        .iter()
        .map(|r| (r.c_hat / base).max(base / r.c_hat))
        .fold(1.0, f64::max);
    Ok((
        last.sup_inf_ratio > 1e3 && drift <= 2.0,
        format!(
            "sup/inf at t = {:.3}: {:.1} (> 1e3), max c_hat drift from baseline {drift:.4} (<= 2)",
            last.t, last.sup_inf_ratio
        ),
    ))
}

fn ehr(r2: &Setup) -> Outcome {
    let c = r2.point(&[2.0])?;
    let rhos = [1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0, 1.0 / 2.0];
    let rep = ineq::estimate_ehr(&r2.gen, &[BallSpec { center: c, r: 1.0 }], &rhos)?;
    Ok((
        rep.theta_hat > 0.0 && rep.theta_hat <= 1.0 && rep.r_squared >= 0.9 && rep.all_monotone,
        format!(
            "theta {:.4} (in (0,1]), r^2 {:.4} (>= 0.9), monotone tables {}",
            rep.theta_hat, rep.r_squared, rep.all_monotone
        ),
    ))
}

fn faber_krahn(r1: &Setup) -> Outcome {
    let balls = [(-2.0, 0.5), (0.0, 0.5), (2.0, 0.5), (-1.0, 1.0), (1.0, 1.0)]
        .iter()
        .map(|&(x, r)| Ok(BallSpec { center: r1.point(&[x])?, r }))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let rep = ineq::check_fk(&r1.gen, &r1.sf, &balls, SubsetSampler::SubBalls, 50, 11)?;
    Ok((
        rep.nu_hat > 0.0 && rep.r_squared >= 0.8,
        format!("nu {:.4} (> 0), r^2 {:.4} (>= 0.8)", rep.nu_hat, rep.r_squared),
    ))
}

fn poincare(r1: &Setup) -> Outcome {
    let mut cs = Vec::new();
    for c in sixteen_centers(r1)? {
        for r in [0.25, 0.5, 1.0] {
            cs.push(r1.gen.poincare_constant(&r1.sf, c, r, 2.0)?.c_pi);
        }
    }
    let env = ratio_envelope(cs.iter().copied());
    Ok((
        cs.iter().all(|c| *c > 0.0) && env <= 10.0,
        format!("envelope {env:.3} over {} balls (<= 10)", cs.len()),
    ))
}

fn csj(cfg: &Config) -> Outcome {
    let centers = [-1.0, 0.0, 1.0];
    let mut per_h: Vec<Vec<f64>> = Vec::new();
    for h in [1.0 / 64.0, 1.0 / 128.0] {
        let mut c = cfg.clone();
        c.grid.window = vec![(-2.0, 2.0)];
        c.grid.h = h;
        let s = Setup::build(&c, Path::new("."))?;
        let mut vals = Vec::new();
        for &x in &centers {
            let p = s.point(&[x])?;
            let fam = csj_family(&s, x_of(&s, p), 0.5, 6);
            let rep = ineq::check_csj(&s.gen, &s.sf, CsjSpec { center: p, big_r: 0.5, r: 0.5 }, 0.5, &fam)?;
            vals.push(rep.c1_hat.max(rep.c2_hat));
            vals.push(rep.c1_hat);
        }
        per_h.push(vals);
    }
    let finite = per_h.iter().flatten().all(|v| v.is_finite());
    let drift = per_h[0]
        .iter()
        .zip(&per_h[1])
        .map(|(a, b)| a.max(*b) / a.min(*b))
        .fold(1.0, f64::max);
    Ok((
        finite && drift <= 2.0,
        format!("all constants finite: {finite}, max ratio under h -> h/2 {drift:.4} (<= 2)"),
    ))
}

fn heat_diagonal(r2: &Setup) -> Outcome {
    let sg = HeatSemigroup::full(&r2.gen, DEFAULT_DENSE_CAP)?;
    let x0 = r2.point(&[2.0])?;
    let t0 = r2.sf.phi_eval(x0, 8.0 * r2.space.h())?;
    let t1 = r2.sf.phi_eval(x0, 1.0)?;
    let exponent = r2.space.dim() as f64 / r2.sf.alpha1();
    let xs: Vec<usize> = (0..8).map(|k| k * r2.space.len() / 8).collect();
    let mut scaled = Vec::new();
    for k in 0..20 {
        let t = t0 * (t1 / t0).powf(k as f64 / 19.0);
        let diag = sg.diagonal(t)?;
        scaled.extend(xs.iter().map(|&x| diag[x] * t.powf(exponent)));
    }
    let sup = scaled.iter().copied().fold(0.0, f64::max);
    let env = ratio_envelope(scaled.iter().copied());
    Ok((
        sup.is_finite() && env <= 10.0,
        format!("{} points, sup p t^(d/alpha1) {sup:.4}, envelope {env:.3} (<= 10)", r2.space.len()),
    ))
}

fn determinism() -> Outcome {
    let cfg = configs().join("reference.json");
    let mut runs: Vec<BTreeMap<String, Vec<u8>>> = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir()?;
        run_config(&cfg, &RunOptions { output: Some(dir.path().into()), ..Default::default() })?;
        let mut files = BTreeMap::new();
        for e in std::fs::read_dir(dir.path())? {
            let e = e?;
            files.insert(e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path())?);
        }
        runs.push(files);
    }
    let same = runs[0] == runs[1];
    Ok((same, format!("{} files byte-identical across two runs: {same}", runs[0].len())))
}

fn report(id: usize, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = f();
    let elapsed = start.elapsed();
    let in_time = limit.is_none_or(|l| elapsed <= l);
    let limit_text = limit.map(|l| format!(", limit {} s", l.as_secs())).unwrap_or_default();
    let (pass, detail) = match outcome {
        Ok((pass, detail)) => (pass && in_time, detail),
        Err(e) => (false, format!("error: {e:#}")),
    };
    let tag = if pass { "[PASS]" } else { "[FAIL]" };
    println!("{tag} {id:>2} {name}: {detail}; {:.2} s{limit_text}", elapsed.as_secs_f64());
    pass
}

fn main() -> ExitCode {
    let (cfg1, r1) = load("reference.json").expect("reference config");
    let (_, r2) = load("torus.json").expect("torus config");
    let secs = Duration::from_secs;
    let results = [
        report(1, "exact inverse identity", Some(secs(30)), || exact_inverse(&r1)),
        report(2, "Green symmetry and positivity", None, || green_symmetry(&r1)),
        report(3, "lambda1 versus mean exit time", None, || lambda_exit(&r1)),
        report(4, "monotonicity suite", None, || monotonicity(&r1)),
        report(5, "exit time scaling", Some(secs(300)), || exit_scaling(&r1)),
        report(6, "capacity scaling", None, || capacity_scaling(&r1)),
        report(7, "Monte Carlo cross-validation", Some(secs(300)), || monte_carlo(&r1, &r2)),
        report(8, "EHI scale stability", None, || ehi_scale(&r2)),
        report(9, "tail term necessity", None, || kassmann(&r1)),
        report(10, "elliptic Holder regularity", None, || ehr(&r2)),
        report(11, "Faber-Krahn", None, || faber_krahn(&r1)),
        report(12, "Poincare envelope", None, || poincare(&r1)),
        report(13, "cutoff Sobolev feasibility", None, || csj(&cfg1)),
        report(14, "heat kernel on-diagonal bound", None, || heat_diagonal(&r2)),
        report(15, "end-to-end determinism", None, determinism),
    ];
    let passed = results.iter().filter(|p| **p).count();
    println!("{passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
