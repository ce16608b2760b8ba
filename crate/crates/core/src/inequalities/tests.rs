use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::kernel::{JumpKernel, Symmetrization};
use crate::operator::Generator;
use crate::scale::{AlphaProfile, ScaleFunction};
use crate::space::{GridSpace, Topology};

fn build(space: GridSpace, sf: ScaleFunction) -> (GridSpace, ScaleFunction, Generator) {
    let k = JumpKernel::stable_like(&space, &sf, 1.0, 1.0, Symmetrization::Midpoint).unwrap();
    let gen = Generator::assemble(&space, &k).unwrap();
    (space, sf, gen)
}

fn g0() -> (GridSpace, ScaleFunction, Generator) {
    let s = GridSpace::build(1, &[(-2.0, 2.0)], 0.5, Topology::Truncated).unwrap();
    let sf = ScaleFunction::constant_order(&s, 1.0).unwrap();
    build(s, sf)
}

fn torus(h: f64) -> (GridSpace, ScaleFunction, Generator) {
    let s = GridSpace::build(1, &[(0.0, 4.0)], h, Topology::Torus).unwrap();
    let sf = ScaleFunction::constant_order(&s, 1.0).unwrap();
    build(s, sf)
}

fn variable_line(h: f64) -> (GridSpace, ScaleFunction, Generator) {
    let s = GridSpace::build(1, &[(-3.0, 3.0)], h, Topology::Truncated).unwrap();
    let sf = ScaleFunction::variable_order(
        &s,
        &AlphaProfile::Sinusoidal {
            mean: 1.4,
            amplitude: 0.2,
            omega: std::f64::consts::FRAC_PI_4,
        },
        1.2,
        1.6,
    )
    .unwrap();
    build(s, sf)
}

fn at(s: &GridSpace, x: f64) -> usize {
    s.nearest(&[x])
}

#[test]
fn tail_hand_sum() {
    let (s, sf, _) = g0();
    let mut u = vec![0.0; s.len()];
    assert_eq!(tail_phi(&s, &sf, &u, at(&s, 0.0), 1.0), 0.0);
    for x in [-2.0, -1.5, 1.5, 2.0] {
        u[at(&s, x)] = 1.0;
    }
    let t = tail_phi(&s, &sf, &u, at(&s, 0.0), 1.0);
    assert!((t - 19.0 / 63.0).abs() < 1e-14);
    assert!(tail_phi(&s, &sf, &u, at(&s, 0.0), 1.6) <= t);
    assert!(tail_phi(&s, &sf, &u, at(&s, 0.0), 0.4) >= t);
}

#[test]
fn harnack_ratio_examples() {
    let u = vec![2.0; 5];
    let r = harnack_ratio(&u, &[0, 1, 2]);
    assert_eq!(r.ratio, 1.0);
    let v = vec![1.0, 0.0, 3.0];
    assert!(harnack_ratio(&v, &[0, 1, 2]).infinite);
    let w = vec![1.0, 0.5, 3.0];
    let base = harnack_ratio(&w, &[0, 1, 2]).ratio;
    let scaled: Vec<f64> = w.iter().map(|x| 0.3 * x).collect();
    assert_eq!(harnack_ratio(&scaled, &[0, 1, 2]).ratio, base);
}

#[test]
fn ehi_singleton_inner_ball() {
    let (s, _, gen) = torus(0.125);
    let rep = check_ehi(&gen, &[BallSpec { center: 3, r: 0.2 }], 0.5).unwrap();
    assert_eq!(rep.c_hat, 1.0);
    assert!(rep.singleton_inner);
    assert!(rep.exact);
    let _ = s;
}

#[test]
fn ehi_column_scan_dominates_random_combinations() {
    let (s, _, gen) = torus(1.0 / 16.0);
    let center = 10;
    let r = 1.0;
    let rep = check_ehi(&gen, &[BallSpec { center, r }], 0.5).unwrap();
    let domain = gen.ball_domain(center, r).unwrap();
    let hm = gen.harmonic_measure(&domain).unwrap();
    let inner = s.ball(center, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut best: f64 = 1.0;
    for _ in 0..1000 {
        let w: Vec<f64> = (0..hm.exterior.len())
            .map(|_| rng.random::<f64>().powi(6))
            .collect();
        let mut u = vec![0.0; s.len()];
        for (i, &x) in domain.points().iter().enumerate() {
            u[x] = (0..w.len()).map(|j| hm.matrix[(i, j)] * w[j]).sum();
        }
        best = best.max(harnack_ratio(&u, &inner).ratio);
    }
    assert!(best <= rep.c_hat * (1.0 + 1e-12));
    assert!(rep.c_hat > 1.0);
    // the witness reproduces the constant
    assert!((rep.reproduce(&gen, &ScaleFunction::constant_order(&s, 1.0).unwrap()).unwrap() - rep.c_hat).abs() < 1e-10);
}

#[test]
fn ehi_constant_function_contributes_one() {
    let (s, sf, gen) = torus(0.125);
    let domain = gen.ball_domain(5, 1.0).unwrap();
    let u = gen.solve_harmonic(&domain, &vec![1.0; s.len()]).unwrap();
    assert!((harnack_ratio(&u, &s.ball(5, 0.5).unwrap()).ratio - 1.0).abs() < 1e-12);
    let member = FamilyMember {
        id: "one".into(),
        exterior: domain.complement().into_iter().map(|z| (z, 1.0)).collect(),
        source: Vec::new(),
    };
    let fam = FamilySpec::Explicit { members: vec![member] };
    let spec = TwoBallSpec { center: 5, r: 0.5, big_r: 1.0 };
    let rep = check_ehi_phi(&gen, &sf, &[spec], &fam).unwrap();
    assert!((rep.c_hat - 1.0).abs() < 1e-12);
    let rep = check_wehi(&gen, &sf, 0.5, &[spec], &fam).unwrap();
    assert!((rep.c_hat - 1.0).abs() < 1e-12);
}

#[test]
fn ehi_phi_on_nonnegative_columns_is_bounded_by_ehi() {
    let (s, sf, gen) = variable_line(1.0 / 16.0);
    let c = at(&s, 0.0);
    let big_r = 1.0;
    let ehi = check_ehi(&gen, &[BallSpec { center: c, r: big_r }], 0.5).unwrap();
    let domain = gen.ball_domain(c, big_r).unwrap();
    let columns: Vec<FamilyMember> = domain.complement().into_iter().map(FamilyMember::column).collect();
    let spec = TwoBallSpec { center: c, r: 0.5, big_r };
    let phi = check_ehi_phi(&gen, &sf, &[spec], &FamilySpec::Explicit { members: columns }).unwrap();
    assert!(phi.c_hat <= ehi.c_hat * (1.0 + 1e-12));
    assert_eq!(phi.skipped, 0);
    assert!(!phi.exact);
}

#[test]
fn ehi_phi_default_family_filters_and_reproduces() {
    let (s, sf, gen) = variable_line(1.0 / 16.0);
    let spec = TwoBallSpec { center: at(&s, 0.3), r: 0.5, big_r: 1.0 };
    let rep = check_ehi_phi(&gen, &sf, &[spec], &FamilySpec::default()).unwrap();
    assert!(rep.skipped > 0, "large t members must violate u >= 0 inside");
    assert!(rep.c_hat >= 1.0);
    let again = rep.reproduce(&gen, &sf).unwrap();
    assert!((again - rep.c_hat).abs() <= 1e-10 * rep.c_hat);
    let rep2 = check_ehi_phi(&gen, &sf, &[spec], &FamilySpec::default()).unwrap();
    assert_eq!(rep, rep2);
}

#[test]
fn kassmann_tail_compensates() {
    let (s, sf, gen) = variable_line(1.0 / 32.0);
    let spec = TwoBallSpec { center: at(&s, 0.0), r: 0.5, big_r: 1.0 };
    let sweep = kassmann_sweep(&gen, &sf, spec, 2.0, &[1e-1, 1e-2, 1e-3]).unwrap();
    assert!(sweep.t_star > 0.0);
    let rows = &sweep.rows;
    assert_eq!(rows[0].t, 0.0);
    for w in rows.windows(2) {
        assert!(w[1].sup_inf_ratio > w[0].sup_inf_ratio);
        assert!(w[1].inf > 0.0);
    }
    assert!(rows.last().unwrap().sup_inf_ratio > 100.0);
    assert!(rows.iter().all(|r| r.c_hat <= 2.0 * rows[0].c_hat));
}

#[test]
fn wehi_plus_extends_wehi() {
    let (s, sf, gen) = variable_line(1.0 / 16.0);
    let spec = TwoBallSpec { center: at(&s, 0.0), r: 0.5, big_r: 1.0 };
    let harmonic = FamilySpec::Default {
        t_grid: vec![0.5, 1.0],
        max_columns: 8,
        max_partners: 4,
        green_sources: 0,
    };
    let with_green = FamilySpec::Default {
        t_grid: vec![0.5, 1.0],
        max_columns: 8,
        max_partners: 4,
        green_sources: 6,
    };
    let w = check_wehi(&gen, &sf, 0.5, &[spec], &harmonic).unwrap();
    let wp = check_wehi_plus(&gen, &sf, 0.5, &[spec], &with_green).unwrap();
    assert!(w.c_hat <= wp.c_hat);
    assert!(wp.family_size > w.family_size);
    assert!((wp.reproduce(&gen, &sf).unwrap() - wp.c_hat).abs() <= 1e-10 * wp.c_hat);

    // a negative source is subharmonic and must be rejected
    let y = spec.center;
    let bad = FamilyMember {
        id: "bad".into(),
        exterior: vec![(at(&s, 2.0), 5.0)],
        source: vec![(y, -1.0)],
    };
    let rep = check_wehi_plus(&gen, &sf, 0.5, &[spec], &FamilySpec::Explicit { members: vec![bad] }).unwrap();
    assert_eq!(rep.skipped, 1);
    assert!(check_wehi(&gen, &sf, 1.0, &[spec], &harmonic).is_err());
}

#[test]
fn ehr_tables_are_monotone() {
    let (s, _, gen) = torus(1.0 / 64.0);
    let c = at(&s, 2.0);
    let rhos: Vec<f64> = (1..=5).map(|k| 1.0 / 2f64.powi(k)).collect();
    let rep = estimate_ehr(&gen, &[BallSpec { center: c, r: 1.0 }], &rhos).unwrap();
    assert!(rep.theta_hat > 0.0 && rep.theta_hat <= 1.0);
    assert!(rep.r_squared >= 0.9);
    assert!(rep.all_monotone);
    for w in rep.table.windows(2) {
        assert!(w[0].rho < w[1].rho && w[0].osc <= w[1].osc);
    }
    assert!(estimate_ehr(&gen, &[BallSpec { center: c, r: 1.0 }], &rhos[..2]).is_err());
}

#[test]
fn e_phi_examples() {
    let (s, sf, gen) = g0();
    let c = at(&s, 0.0);
    let rep = check_e_phi(&gen, &sf, &[c], &[0.25]).unwrap();
    assert!((rep.rows[0].e_tau - 36.0 / 205.0).abs() < 1e-14);
    assert!((rep.rows[0].phi - 0.25).abs() < 1e-15);
    let ratio = rep.rows[0].ratio;
    assert_eq!(rep.c1_hat, ratio.max(1.0 / ratio));

    let (s, sf, gen) = torus(1.0 / 32.0);
    let rep = check_e_phi(&gen, &sf, &[0, 40, 77], &[0.25, 0.5]).unwrap();
    for r in [0.25, 0.5] {
        let vals: Vec<f64> = rep.rows.iter().filter(|row| row.r == r).map(|row| row.ratio).collect();
        assert!(vals.iter().all(|v| (v - vals[0]).abs() <= 1e-10 * vals[0]));
    }
    let _ = s;
}

#[test]
fn fk_rows_reproduce() {
    let (s, sf, gen) = variable_line(1.0 / 16.0);
    let balls = [BallSpec { center: at(&s, 0.0), r: 0.5 }];
    let rep = check_fk(&gen, &sf, &balls, SubsetSampler::SubBalls, 20, 7).unwrap();
    assert_eq!(rep.rows.len(), 21);
    let full = &rep.rows[0];
    assert_eq!(full.mu_d, full.volume);
    assert!(rep.c_hat <= full.lambda1 * full.phi * (1.0 + 1e-12));
    for row in &rep.rows {
        let d = gen.domain(row.points.clone()).unwrap();
        assert_eq!(gen.lambda1(&d).unwrap().lambda1, row.lambda1);
        if row.points.len() == 1 {
            assert!((row.lambda1 - gen.lambda(row.points[0])).abs() < 1e-10 * row.lambda1);
        }
        let bound = rep.c_hat / row.phi * (row.volume / row.mu_d).powf(rep.nu_hat);
        assert!(row.lambda1 >= bound * (1.0 - 1e-12));
    }
    let again = check_fk(&gen, &sf, &balls, SubsetSampler::SubBalls, 20, 7).unwrap();
    assert_eq!(rep, again);
    assert!(check_fk(&gen, &sf, &balls, SubsetSampler::SubBalls, 19, 7).is_err());
}

#[test]
fn csj_rows() {
    let (s, sf, gen) = variable_line(1.0 / 16.0);
    let n = s.len();
    let spec = CsjSpec { center: at(&s, 0.0), big_r: 0.5, r: 0.5 };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pm: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    let family = vec![
        ("zero".to_string(), vec![0.0; n]),
        ("one".to_string(), vec![1.0; n]),
        ("pm".to_string(), pm.clone()),
    ];
    let rep = check_csj(&gen, &sf, spec, 0.5, &family).unwrap();
    assert_eq!(rep.rows[0].lhs, 0.0);
    assert_eq!(rep.rows[1].t1, 0.0);
    assert!(rep.c2_hat >= rep.rows[1].lhs / rep.rows[1].t2);
    assert!(rep.rows.iter().all(|r| r.slack >= -1e-12 * r.lhs.max(1.0)));
    for p in &rep.frontier {
        for row in &rep.rows {
            assert!(row.lhs <= p.c1 * row.t1 + p.c2 * row.t2 + 1e-12 * row.lhs.max(1.0));
        }
    }

    // independent evaluation of the three integrals for the random sign vector
    let cut = linear_cutoff(&gen, spec);
    let x0 = spec.center;
    let d = |x: usize| s.distance(x0, x);
    let outer = 0.5 + 1.5 * 0.5;
    let (mut lhs, mut t1, mut t2) = (0.0, 0.0, 0.0);
    for x in 0..n {
        let in_star = s.within(d(x), outer);
        let in_u = s.within(d(x), 1.0) && !s.within(d(x), 0.5);
        if in_star {
            let mut g = 0.0;
            for y in 0..n {
                g += (cut[x] - cut[y]).powi(2) * gen.jump(x, y) * s.mass(y);
            }
            lhs += pm[x] * pm[x] * 0.5 * g * s.mass(x);
            t2 += pm[x] * pm[x] * s.mass(x);
        }
        if in_u {
            for y in 0..n {
                if s.within(d(y), outer) && !s.within(d(y), 0.25) {
                    t1 += 0.5 * (pm[x] - pm[y]).powi(2) * gen.jump(x, y) * s.mass(x) * s.mass(y);
                }
            }
        }
    }
    t2 /= sf.phi(x0, 0.5);
    let row = &rep.rows[2];
    assert!((row.lhs - lhs).abs() <= 1e-12 * lhs);
    assert!((row.t1 - t1).abs() <= 1e-12 * t1);
    assert!((row.t2 - t2).abs() <= 1e-12 * t2);
    assert!(check_csj(&gen, &sf, spec, 0.0, &family).is_err());
}

/// Brute-force covering over a fine rho grid, independent of the
/// breakpoint scan.
fn ks_brute(s: &GridSpace, e: &[usize], x0: usize, r: f64, eta: f64) -> Vec<usize> {
    let ball = s.ball(x0, r).unwrap();
    let mu = |pts: &[usize]| pts.iter().map(|&y| s.mass(y)).sum::<f64>();
    let mut out = std::collections::BTreeSet::new();
    for &x in &ball {
        let steps = 4000;
        for k in 1..steps {
            let rho = r * k as f64 / steps as f64;
            let big = s.ball(x, 5.0 * rho).unwrap();
            let small = s.ball(x, rho).unwrap();
            let hit: Vec<usize> = big.iter().copied().filter(|y| e.contains(y)).collect();
            if mu(&hit) / mu(&small) > eta {
                out.extend(big.into_iter().filter(|y| ball.contains(y)));
            }
        }
    }
    out.into_iter().collect()
}

#[test]
fn ks_cover_examples() {
    let (s, _, _) = variable_line(1.0 / 8.0);
    let x0 = at(&s, 0.0);
    let ball = s.ball(x0, 1.0).unwrap();
    let full = ks_cover(&s, &ball, x0, 1.0, 0.5).unwrap();
    assert!(full.full && full.dichotomy);
    let empty = ks_cover(&s, &[], x0, 1.0, 0.5).unwrap();
    assert!(empty.set.is_empty() && empty.measure_raw && empty.dichotomy);

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..5 {
        let e: Vec<usize> = ball.iter().copied().filter(|_| rng.random::<f64>() < 0.3).collect();
        let fast = ks_cover(&s, &e, x0, 1.0, 0.6).unwrap();
        assert_eq!(fast.set, ks_brute(&s, &e, x0, 1.0, 0.6));
    }
    assert!(ks_cover(&s, &[at(&s, 2.5)], x0, 1.0, 0.5).is_err());
}

#[test]
fn ks_dichotomy_random_half_density() {
    let (s, _, _) = variable_line(1.0 / 16.0);
    let x0 = at(&s, 0.0);
    let ball = s.ball(x0, 1.0).unwrap();
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e: Vec<usize> = ball.iter().copied().filter(|_| rng.random::<bool>()).collect();
        for eta in [0.3, 0.6, 0.9] {
            let c = ks_cover(&s, &e, x0, 1.0, eta).unwrap();
            assert!(c.dichotomy, "seed {seed} eta {eta}: {c:?}");
        }
    }
}
