//! Operation dispatch: each operation turns its parameters into a full
//! report, a flat table of rows, and a map of summary metrics.

use std::collections::BTreeMap;

use anyhow::{anyhow, bail, Context, Result};
use jumplab_core::fit::log_log_fit;
use jumplab_core::inequalities::{
    self as ineq, BallSpec, CsjSpec, FamilySpec, SubsetSampler, TwoBallSpec,
};
use jumplab_core::montecarlo::{self as mc, SimConfig};
use jumplab_core::operator::{HeatSemigroup, DEFAULT_DENSE_CAP};
use jumplab_core::scale::ScaleReport;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentSpec, Setup};
use crate::output::ResultRow;

pub struct ExperimentOutput {
    pub summary: BTreeMap<String, f64>,
    pub rows: Vec<ResultRow>,
    pub report: serde_json::Value,
}

/// A lattice point given by coordinates; a bare number is a 1-d point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointSpec {
    Scalar(f64),
    Coords(Vec<f64>),
}

impl PointSpec {
    fn coords(&self) -> Vec<f64> {
        match self {
            PointSpec::Scalar(x) => vec![*x],
            PointSpec::Coords(c) => c.clone(),
        }
    }
}

fn params<T: DeserializeOwned>(exp: &ExperimentSpec) -> Result<T> {
    let value = if exp.params.is_null() {
        serde_json::Value::Object(Default::default())
    } else {
        exp.params.clone()
    };
    serde_path_to_error::deserialize(value)
        .map_err(|e| anyhow!("experiment `{}`: params field `{}`: {}", exp.id, e.path(), e.inner()))
}

fn points(setup: &Setup, specs: &[PointSpec]) -> Result<Vec<usize>> {
    specs.iter().map(|p| setup.point(&p.coords())).collect()
}

struct Out {
    id: String,
    rows: Vec<ResultRow>,
    summary: BTreeMap<String, f64>,
}

impl Out {
    fn new(id: &str) -> Self {
        Self {
            id: id.to_string(),
            rows: Vec::new(),
            summary: BTreeMap::new(),
        }
    }

    fn row(&mut self, metrics: &[(&str, f64)], witness: Option<String>) {
        self.rows.push(ResultRow::new(&self.id, "row", metrics, witness));
    }

    fn kind_row(&mut self, kind: &str, metrics: &[(&str, f64)], witness: Option<String>) {
        self.rows.push(ResultRow::new(&self.id, kind, metrics, witness));
    }

    fn metric(&mut self, key: &str, value: f64) {
        self.summary.insert(key.to_string(), value);
    }

    fn finish<T: Serialize>(self, report: &T) -> Result<ExperimentOutput> {
        Ok(ExperimentOutput {
            summary: self.summary,
            rows: self.rows,
            report: serde_json::to_value(report)?,
        })
    }
}

fn coord(setup: &Setup, x: usize) -> String {
    let c = setup.space.point(x);
    let parts: Vec<String> = c.iter().map(|v| format!("{v}")).collect();
    format!("({})", parts.join(" "))
}

fn envelope(values: impl IntoIterator<Item = f64>) -> f64 {
    let (lo, hi) = values
        .into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    hi / lo
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub fn run_experiment(setup: &Setup, exp: &ExperimentSpec, seed: Option<u64>) -> Result<ExperimentOutput> {
    let seed = || seed.ok_or_else(|| anyhow!("experiment `{}` needs a seed", exp.id));
    match exp.operation.as_str() {
        "volume_doubling" => volume_doubling(setup, exp),
        "scale_checks" => scale_checks(setup, exp),
        "kernel_checks" => kernel_checks(setup, exp),
        "exit_times" => exit_times(setup, exp),
        "capacity" => capacity(setup, exp),
        "ehi" => ehi(setup, exp),
        "ehi_phi" | "wehi" | "wehi_plus" => tail_harnack(setup, exp),
        "tail_sweep" => tail_sweep(setup, exp),
        "ehr" => ehr(setup, exp),
        "fk" => fk(setup, exp, seed()?),
        "pi" => pi(setup, exp),
        "csj" => csj(setup, exp),
        "ks_cover" => ks_cover(setup, exp, seed()?),
        "heat_kernel_diag" => heat_kernel_diag(setup, exp),
        "mc_exit" => mc_exit(setup, exp, seed()?),
        "levy" => levy(setup, exp, seed()?),
        "survival" => survival(setup, exp, seed()?),
        other => bail!("unknown operation `{other}`"),
    }
    .with_context(|| format!("experiment `{}` ({})", exp.id, exp.operation))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CentersRadii {
    centers: Vec<PointSpec>,
    radii: Vec<f64>,
}

fn volume_doubling(setup: &Setup, exp: &ExperimentSpec) -> Result<ExperimentOutput> {
    let p: CentersRadii = params(exp)?;
    let centers = points(setup, &p.centers)?;
    let rep = setup.space.doubling_report(&centers, &p.radii)?;
    let mut out = Out::new(&exp.id);
    for &c in &centers {
        for &r in &p.radii {
            let v1 = setup.space.volume(c, r)?;
            let v2 = setup.space.volume(c, 2.0 * r)?;
            out.row(
                &[("center", setup.space.point(c)[0]), ("r", r), ("V_r", v1), ("V_2r", v2), ("ratio", v2 / v1)],
                Some(coord(setup, c)),
            );
        }
    }
    out.metric("C_mu_hat", rep.c_mu_hat);
    if let Some(e) = &rep.exponents {
        out.metric("d1_hat", e.d1_hat);
        out.metric("d2_hat", e.d2_hat);
    }
    out.metric("small_radius_warning", flag(rep.small_radius_warning));
    out.finish(&rep)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScaleParams {
    centers: Vec<PointSpec>,
    radii: Vec<f64>,
    #[serde(default = "default_big_factor")]
    big_factor: f64,
    #[serde(default = "yes")]
    log_continuity: bool,
}

fn default_big_factor() -> f64 {
    4.0
}

fn yes() -> bool {
    true
}

fn scale_checks(setup: &Setup, exp: &ExperimentSpec) -> Result<ExperimentOutput> {
    let p: ScaleParams = params(exp)?;
    let centers = points(setup, &p.centers)?;
    let space = &setup.space;
    let mut triples = Vec::new();
    let mut samples = Vec::new();
    for &c in &centers {
        for &r in &p.radii {
            triples.push((c, r, r * p.big_factor));
            for y in space.ball(c, r)? {
                samples.push((c, y, r));
            }
        }
    }
    let scaling = setup.sf.check_scaling(&triples)?;
    let comparability = setup.sf.check_comparability(space, &samples)?;
    let log_cont = if p.log_continuity {
        Some(setup.sf.log_continuity_all_pairs(space)?)
    } else {
        None
    };
    let rep = ScaleReport::new(scaling, comparability, log_cont);
    let mut out = Out::new(&exp.id);
    out.row(
        &[("beta1_hat", rep.beta1_hat), ("beta2_hat", rep.beta2_hat), ("c3_hat", rep.c3_hat)],
        None,
    );
    out.metric("beta1_hat", rep.beta1_hat);
    out.metric("beta2_hat", rep.beta2_hat);
    out.metric("c3_hat", rep.c3_hat);
    if let Some(c) = rep.log_continuity_c_hat {
        out.metric("log_continuity_c_hat", c);
    }
    out.finish(&rep)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelParams {
    radii: Vec<f64>,
}

fn kernel_checks(setup: &Setup, exp: &ExperimentSpec) -> Result<ExperimentOutput> {
    let p: KernelParams = params(exp)?;
    let rep = setup.kernel.report(&setup.space, &setup.sf, &p.radii)?;
    let mut out = Out::new(&exp.id);
    out.row(
        &[
            ("jphi_lower_hat", rep.jphi_lower_hat),
            ("jphi_upper_hat", rep.jphi_upper_hat),
            ("ij_c_hat", rep.ij_c_hat),
            ("max_entry", rep.max_entry),
        ],
        None,
    );
    out.metric("jphi_lower_hat", rep.jphi_lower_hat);
    out.metric("jphi_upper_hat", rep.jphi_upper_hat);
    out.metric("ij_c_hat", rep.ij_c_hat);
    out.metric("max_entry", rep.max_entry);
    out.finish(&rep)
}

fn exit_times(setup: &Setup, exp: &ExperimentSpec) -> Result<ExperimentOutput> {
    let p: CentersRadii = params(exp)?;
    let centers = points(setup, &p.centers)?;
    let rep = ineq::check_e_phi(&setup.gen, &setup.sf, &centers, &p.radii)?;
    let mut out = Out::new(&exp.id);
    for row in &rep.rows {
        out.row(
            &[
                ("center", setup.space.point(row.center)[0]),
                ("r", row.r),
                ("E_tau", row.e_tau),
                ("phi", row.phi),
                ("ratio", row.ratio),
            ],
            Some(coord(setup, row.center)),
        );
    }
    let mut worst: f64 = 0.0;
    for s in &rep.slopes {
        if let (Some(fit), Some(alpha)) = (&s.fit, s.alpha) {
            worst = worst.max((fit.slope - alpha).abs());
            out.kind_row(
                "slope",
                &[("alpha", alpha), ("slope", fit.slope), ("r_squared", fit.r_squared)],
                Some(coord(setup, s.center)),
            );
        }
    }
    out.metric("c1_hat", rep.c1_hat);
    out.metric("envelope", rep.envelope);
    out.metric("max_slope_deviation", worst);
    out.finish(&rep)
}

#[derive(Serialize)]
struct CapacityRow {
    center: usize,
    r: f64,
    capacity: f64,
    phi: f64,
    normalized: f64,
}

#[derive(Serialize)]
struct CapacityReport {
    rows: Vec<CapacityRow>,
    envelope: f64,
    max_slope_deviation: f64,
}

/// `Cap(B(x, r/2), B(x, r)) * phi(x, r) / r^d` per center and radius, with
/// per-center fits of `log Cap` against `log r` over `r <= 1`.
fn capacity(setup: &Setup, exp: &ExperimentSpec) -> Result<ExperimentOutput> {
    let p: CentersRadii = params(exp)?;
    let centers = points(setup, &p.centers)?;
    let space = &setup.space;
    let d = space.dim() as i32;
    let jobs: Vec<(usize, f64)> = centers
        .iter()
        .flat_map(|&c| p.radii.iter().map(move |&r| (c, r)))
        .collect();
    let rows: Vec<CapacityRow> = jobs
        .par_iter()
        .map(|&(c, r)| -> Result<CapacityRow> {
            let a = space.ball(c, r / 2.0)?;
            let b = space.ball(c, r)?;
            let cap = setup.gen.capacity(&a, &b)?.value;
            let phi = setup.sf.phi_eval(c, r)?;
            Ok(CapacityRow {
                center: c,
                r,
                capacity: cap,
                phi,
                normalized: cap * phi / r.powi(d),
            })
        })
        .collect::<Result<_>>()?;
    let mut out = Out::new(&exp.id);
    for row in &rows {
        out.row(
            &[
                ("center", space.point(row.center)[0]),
                ("r", row.r),
                ("capacity", row.capacity),
                ("phi", row.phi),
                ("normalized", row.normalized),
            ],
            Some(coord(setup, row.center)),
        );
    }
    let mut worst: f64 = 0.0;
    for &c in &centers {
        let sel: Vec<&CapacityRow> = rows.iter().filter(|r| r.center == c && r.r <= 1.0).collect();
        let rs: Vec<f64> = sel.iter().map(|r| r.r).collect();
        let cs: Vec<f64> = sel.iter().map(|r| r.capacity).collect();
        if let (Some(fit), Some(alpha)) = (log_log_fit(&rs, &cs), setup.sf.alpha(c)) {
            let target = d as f64 - alpha;
            worst = worst.max((fit.slope - target).abs());
            out.kind_row(
                "slope",
                &[("target", target), ("slope", fit.slope), ("r_squared", fit.r_squared)],
                Some(coord(setup, c)),
            );
        }
    }
    let env = envelope(rows.iter().map(|r| r.normalized));
    out.metric("envelope", env);
    out.metric("max_slope_deviation", worst);
    let rep = CapacityReport {
        rows,
        envelope: env,
        max_slope_deviation: worst,
    };
    out.finish(&rep)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EhiParams {
    centers: Vec<PointSpec>,
    radii: Vec<f64>,
    #[serde(default = "default_delta")]
    delta: f64,
}

fn default_delta() -> f64 {
    ineq::DEFAULT_DELTA
}

fn ehi(setup: &Setup, exp: &ExperimentSpec) -> Result<ExperimentOutput> {
    let p: EhiParams = params(exp)?;
    let centers = points(setup, &p.centers)?;
    let mut out = Out::new(&exp.id);
    let mut reports = Vec::new();
    for &c in &centers {
        for &r in &p.radii {
            let rep = ineq::check_ehi(&setup.gen, &[BallSpec { center: c, r }], p.delta)?;
            let witness = rep.witness.as_ref().map(|w| {
                format!("{} argmax={} argmin={}", w.member.id, coord(setup, w.argmax), coord(setup, w.argmin))
            });
            out.row(
                &[("center", setup.space.point(c)[0]), ("r", r), ("c_hat", rep.c_hat)],
                witness,
            );
            reports.push(rep);
        }
    }
    let c_hat = reports.iter().map(|r| r.c_hat).fold(1.0, f64::max);
    out.metric("c_hat", c_hat);
    out.metric("c_hat_scale_spread", envelope(reports.iter().map(|r| r.c_hat)));
    out.finish(&reports)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TailHarnackParams {
    centers: Vec<PointSpec>,
    r: f64,
    big_r: f64,
    #[serde(default)]
    epsilon: Option<f64>,
    #[serde(default)]
    family: Option<FamilySpec>,
}

fn tail_harnack(setup: &Setup, exp: &ExperimentSpec) -> Result<ExperimentOutput> {
    let p: TailHarnackParams = params(exp)?;
    let centers = points(setup, &p.centers)?;
    let eps = p.epsilon.unwrap_or(ineq::DEFAULT_EPSILON);
    let family = p.family.unwrap_or_else(|| {
        let mut f = FamilySpec::default();
        if exp.operation == "wehi_plus" {
            if let FamilySpec::Default { green_sources, .. } = &mut f {
                *green_sources = 8;
            }
        }
        f
    });
    let mut out = Out::new(&exp.id);
    let mut reports = Vec::new();
    for &c in &centers {
        let ball = TwoBallSpec {
            center: c,
            r: p.r,
            big_r: p.big_r,
        };
        let (g, sf) = (&setup.gen, &setup.sf);
        let rep = match exp.operation.as_str() {
            "ehi_phi" => ineq::check_ehi_phi(g, sf, &[ball], &family)?,
            "wehi" => ineq::check_wehi(g, sf, eps, &[ball], &family)?,
            _ => ineq::check_wehi_plus(g, sf, eps, &[ball], &family)?,
        };
        out.row(
            &[
                ("center", setup.space.point(c)[0]),
                ("c_hat", rep.c_hat),
                ("family_size", rep.family_size as f64),
                ("skipped", rep.skipped as f64),
            ],
            rep.witness.as_ref().map(|w| w.member.id.clone()),
        );
        reports.push(rep);
    }
    out.metric("c_hat", reports.iter().map(|r| r.c_hat).fold(1.0, f64::max));
    out.metric("skipped", reports.iter().map(|r| r.skipped as f64).sum());
    out.finish(&reports)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TailSweepParams {
    center: PointSpec,
    r: f64,
    big_r: f64,
    positive_outer: f64,
    epsilons: Vec<f64>,
}

fn tail_sweep(setup: &Setup, exp: &ExperimentSpec) -> Result<ExperimentOutput> {
    let p: TailSweepParams = params(exp)?;
    let c = setup.point(&p.center.coords())?;
    let ball = TwoBallSpec { center: c, r: p.r, big_r: p.big_r };
    let sweep = ineq::kassmann_sweep(&setup.gen, &setup.sf, ball, p.positive_outer, &p.epsilons)?;
    let mut out = Out::new(&exp.id);
    for row in &sweep.rows {
        out.row(
            &[
                ("epsilon", row.epsilon),
                ("t", row.t),
                ("sup_inf_ratio", row.sup_inf_ratio),
                ("tail", row.tail),
                ("raw_ratio", row.raw_ratio),
                ("c_hat", row.c_hat),
            ],
            None,
        );
    }
    let base = sweep.rows[0].c_hat;
    let last = sweep.rows.last().unwrap();
    out.metric("t_star", sweep.t_star);
    out.metric("baseline_c_hat", base);
    out.metric("final_sup_inf_ratio", last.sup_inf_ratio);
    out.metric(
        "max_c_hat_growth",
        sweep.rows.iter().map(|r| r.c_hat / base).fold(0.0, f64::max),
    );
    out.finish(&sweep)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EhrParams {
    centers: Vec<PointSpec>,
    r: f64,
    rhos: Vec<f64>,
}

fn ehr(setup: &Setup, exp: &ExperimentSpec) -> Result<ExperimentOutput> {
    let p: EhrParams = params(exp)?;
    let centers = points(setup, &p.centers)?;
    let balls: Vec<BallSpec> = centers.iter().map(|&c| BallSpec { center: c, r: p.r }).collect();
    let rep = ineq::estimate_ehr(&setup.gen, &balls, &p.rhos)?;
    let mut out = Out::new(&exp.id);
    for row in &rep.table {
        out.row(
            &[("rho", row.rho), ("osc", row.osc), ("column_id", row.column_id as f64)],
            Some(coord(setup, row.column_id)),
        );
    }
    out.metric("theta_hat", rep.theta_hat);
    out.metric("r_squared", rep.r_squared);
    out.metric("all_monotone", flag(rep.all_monotone));
    out.finish(&rep)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FkParams {
    centers: Vec<PointSpec>,
    radii: Vec<f64>,
    n_subsets: usize,
    #[serde(default)]
    sampler: SubsetSampler,
}

fn fk(setup: &Setup, exp: &ExperimentSpec, seed: u64) -> Result<ExperimentOutput> {
    let p: FkParams = params(exp)?;
    let centers = points(setup, &p.centers)?;
    if centers.len() != p.radii.len() {
        bail!("fk: centers and radii must have the same length");
    }
    let balls: Vec<BallSpec> = centers
        .iter()
        .zip(&p.radii)
        .map(|(&c, &r)| BallSpec { center: c, r })
        .collect();
    let rep = ineq::check_fk(&setup.gen, &setup.sf, &balls, p.sampler, p.n_subsets, seed)?;
    let mut out = Out::new(&exp.id);
    for row in &rep.rows {
        out.row(
            &[
                ("center", setup.space.point(row.center)[0]),
                ("r", row.r),
                ("size", row.points.len() as f64),
                ("lambda1", row.lambda1),
                ("mu_D", row.mu_d),
                ("V", row.volume),
                ("phi", row.phi),
                ("log_volume_ratio", (row.volume / row.mu_d).ln()),
                ("log_lambda_phi", (row.lambda1 * row.phi).ln()),
            ],
            Some(coord(setup, row.center)),
        );
    }
    out.metric("nu_hat", rep.nu_hat);
    out.metric("C_hat", rep.c_hat);
    out.metric("r_squared", rep.r_squared);
    out.finish(&rep)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PiParams {
    centers: Vec<PointSpec>,
    radii: Vec<f64>,
    #[serde(default = "default_kappa")]
    kappa: f64,
}

fn default_kappa() -> f64 {
    ineq::DEFAULT_KAPPA
}

#[derive(Serialize)]
struct PiRow {
    center: usize,
    r: f64,
    c_pi: f64,
    ratio: f64,
    phi: f64,
}

fn pi(setup: &Setup, exp: &ExperimentSpec) -> Result<ExperimentOutput> {
    let p: PiParams = params(exp)?;
    let centers = points(setup, &p.centers)?;
    let jobs: Vec<(usize, f64)> = centers
        .iter()
        .flat_map(|&c| p.radii.iter().map(move |&r| (c, r)))
        .collect();
    let rows: Vec<PiRow> = jobs
        .par_iter()
        .map(|&(c, r)| -> Result<PiRow> {
            let res = setup.gen.poincare_constant(&setup.sf, c, r, p.kappa)?;
            Ok(PiRow { center: c, r, c_pi: res.c_pi, ratio: res.ratio, phi: res.phi })
        })
        .collect::<Result<_>>()?;
    let mut out = Out::new(&exp.id);
    for row in &rows {
        out.row(
            &[
                ("center", setup.space.point(row.center)[0]),
                ("r", row.r),
                ("C_PI", row.c_pi),
                ("ratio", row.ratio),
                ("phi", row.phi),
            ],
            Some(coord(setup, row.center)),
        );
    }
    let positive: Vec<f64> = rows.iter().map(|r| r.c_pi).filter(|&c| c > 0.0).collect();
    out.metric("envelope", envelope(positive.iter().copied()));
    out.metric("C_PI_max", positive.iter().copied().fold(0.0, f64::max));
    out.finish(&rows)
}

#[derive(Deserialize, Clone, Copy)]
#[serde(deny_unknown_fields)]
struct CsjBall {
    center: f64,
    big_r: f64,
    r: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CsjParams {
    balls: Vec<CsjBall>,
    #[serde(default = "default_c0")]
    c0: f64,
    #[serde(default = "default_modes")]
    n_modes: usize,
}

fn default_c0() -> f64 {
    ineq::DEFAULT_C0
}

fn default_modes() -> usize {
    6
}

/// Test functions defined on the continuum and sampled on the grid: the
/// constant, cosine modes across the window, and indicators of intervals
/// around the ball center.
pub fn csj_family(setup: &Setup, center: f64, big_r: f64, n_modes: usize) -> Vec<(String, Vec<f64>)> {
    let space = &setup.space;
    let (lo, hi) = space.window()[0];
    let xs: Vec<f64> = (0..space.len()).map(|i| space.point(i)[0]).collect();
    let mut fam = vec![("constant".to_string(), vec![1.0; xs.len()])];
    for k in 1..=n_modes {
        let w = k as f64 * std::f64::consts::PI / (hi - lo);
        fam.push((format!("cos{k}"), xs.iter().map(|x| (w * (x - lo)).cos()).collect()));
    }
    for frac in [0.5, 1.0, 1.5] {
        let half = frac * big_r;
        fam.push((
            format!("interval{frac}"),
            xs.iter()
                .map(|x| if (x - center).abs() <= half + 1e-9 { 1.0 } else { 0.0 })
                .collect(),
        ));
    }
    fam
}

fn csj(setup: &Setup, exp: &ExperimentSpec) -> Result<ExperimentOutput> {
    let p: CsjParams = params(exp)?;
    let mut out = Out::new(&exp.id);
    let mut reports = Vec::new();
    for b in &p.balls {
        let c = setup.point(&[b.center])?;
        let spec = CsjSpec { center: c, big_r: b.big_r, r: b.r };
        let family = csj_family(setup, setup.space.point(c)[0], b.big_r, p.n_modes);
        let rep = ineq::check_csj(&setup.gen, &setup.sf, spec, p.c0, &family)?;
        out.row(
            &[
                ("center", setup.space.point(c)[0]),
                ("R", b.big_r),
                ("r", b.r),
                ("C1_hat", rep.c1_hat),
                ("C2_hat", rep.c2_hat),
            ],
            Some(coord(setup, c)),
        );
        for row in &rep.rows {
            out.kind_row(
                "function",
                &[("lhs", row.lhs), ("t1", row.t1), ("t2", row.t2), ("slack", row.slack)],
                Some(format!("{} {}", coord(setup, c), row.function_id)),
            );
        }
        reports.push(rep);
    }
    out.metric("C1_hat_max", reports.iter().map(|r| r.c1_hat).fold(0.0, f64::max));
    out.metric("C2_hat_max", reports.iter().map(|r| r.c2_hat).fold(0.0, f64::max));
    out.finish(&reports)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KsParams {
    center: PointSpec,
    r: f64,
    eta: f64,
    #[serde(default = "default_density")]
    density: f64,
    n_seeds: usize,
}

fn default_density() -> f64 {
    0.5
}

fn ks_cover(setup: &Setup, exp: &ExperimentSpec, seed: u64) -> Result<ExperimentOutput> {
    let p: KsParams = params(exp)?;
    let x0 = setup.point(&p.center.coords())?;
    let ball = setup.space.ball(x0, p.r)?;
    let covers: Vec<ineq::KsCover> = (0..p.n_seeds)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let e: Vec<usize> = ball.iter().copied().filter(|_| rng.random::<f64>() < p.density).collect();
            ineq::ks_cover(&setup.space, &e, x0, p.r, p.eta)
        })
        .collect::<jumplab_core::Result<_>>()?;
    let mut out = Out::new(&exp.id);
    for (k, c) in covers.iter().enumerate() {
        out.row(
            &[
                ("seed_stream", k as f64),
                ("mu_E", c.mu_e),
                ("mu_cover", c.mu_cover),
                ("mu_ball", c.mu_ball),
                ("full", flag(c.full)),
                ("measure_raw", flag(c.measure_raw)),
                ("dichotomy", flag(c.dichotomy)),
            ],
            None,
        );
    }
    let n = covers.len().max(1) as f64;
    out.metric("dichotomy_rate", covers.iter().filter(|c| c.dichotomy).count() as f64 / n);
    out.metric("raw_rate", covers.iter().filter(|c| c.full || c.measure_raw).count() as f64 / n);
    let summary: Vec<(f64, f64, bool)> = covers.iter().map(|c| (c.mu_e, c.mu_cover, c.full)).collect();
    out.finish(&summary)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HeatParams {
    centers: Vec<PointSpec>,
    #[serde(default = "default_n_times")]
    n_times: usize,
    #[serde(default = "default_t_min_steps")]
    t_min_steps: f64,
    #[serde(default = "default_t_max_r")]
    t_max_r: f64,
    #[serde(default = "default_cap")]
    cap: usize,
}

fn default_n_times() -> usize {
    12
}

fn default_t_min_steps() -> f64 {
    8.0
}

fn default_t_max_r() -> f64 {
    1.0
}

fn default_cap() -> usize {
    DEFAULT_DENSE_CAP
}

/// `p(t, x, x) t^{d / alpha1}` over a geometric time grid spanning
/// `[phi(x0, t_min_steps h), phi(x0, t_max_r)]`, `x0` the first center.
fn heat_kernel_diag(setup: &Setup, exp: &ExperimentSpec) -> Result<ExperimentOutput> {
    let p: HeatParams = params(exp)?;
    let centers = points(setup, &p.centers)?;
    if centers.is_empty() || p.n_times < 2 {
        bail!("heat_kernel_diag needs centers and at least 2 times");
    }
    let sg = HeatSemigroup::full(&setup.gen, p.cap)?;
    let x0 = centers[0];
    let t0 = setup.sf.phi_eval(x0, p.t_min_steps * setup.space.h())?;
    let t1 = setup.sf.phi_eval(x0, p.t_max_r)?;
    let d = setup.space.dim() as f64;
    let a1 = setup.sf.alpha1();
    let mut out = Out::new(&exp.id);
    let mut scaled = Vec::new();
    for k in 0..p.n_times {
        let t = t0 * (t1 / t0).powf(k as f64 / (p.n_times - 1) as f64);
        let diag = sg.diagonal(t)?;
        for &x in &centers {
            let v = diag[x] * t.powf(d / a1);
            scaled.push(v);
            out.row(
                &[("x", setup.space.point(x)[0]), ("t", t), ("p", diag[x]), ("scaled", v)],
                Some(coord(setup, x)),
            );
        }
    }
    out.metric("envelope", envelope(scaled.iter().copied()));
    out.metric("sup_scaled", scaled.iter().copied().fold(0.0, f64::max));
    let rows = out.rows.clone();
    out.finish(&rows)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct McExitParams {
    centers: Vec<PointSpec>,
    radii: Vec<f64>,
    n_paths: usize,
    #[serde(default = "default_z")]
    z_threshold: f64,
    #[serde(default)]
    max_event_cap: Option<u64>,
}

fn default_z() -> f64 {
    4.0
}

fn sim_config(n_paths: usize, seed: u64, cap: Option<u64>) -> SimConfig {
    let mut cfg = SimConfig::new(n_paths, seed);
    if let Some(c) = cap {
        cfg.max_event_cap = c;
    }
    cfg
}

fn mc_exit(setup: &Setup, exp: &ExperimentSpec, seed: u64) -> Result<ExperimentOutput> {
    let p: McExitParams = params(exp)?;
    let centers = points(setup, &p.centers)?;
    let mut cases = Vec::new();
    for &c in &centers {
        for &r in &p.radii {
            cases.push((setup.gen.ball_domain(c, r)?, c));
        }
    }
    let cfg = sim_config(p.n_paths, seed, p.max_event_cap);
    let v = mc::validate_exit_times(&setup.gen, &cases, &cfg, p.z_threshold)?;
    let mut out = Out::new(&exp.id);
    for row in &v.rows {
        out.row(
            &[
                ("case", row.case as f64),
                ("start", setup.space.point(row.start)[0]),
                ("exact", row.exact),
                ("mc_mean", row.mc_mean),
                ("stderr", row.stderr.unwrap_or(f64::NAN)),
                ("z", row.z.unwrap_or(f64::NAN)),
                ("pass", row.pass.map_or(f64::NAN, flag)),
            ],
            Some(coord(setup, row.start)),
        );
    }
    out.metric("pass_rate", v.pass_rate);
    out.metric("flagged", v.flagged as f64);
    out.metric("aborted", v.rows.iter().map(|r| r.aborted as f64).sum());
    out.finish(&v)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LevyParams {
    center: PointSpec,
    r: f64,
    s: f64,
    n_paths: usize,
    #[serde(default)]
    max_event_cap: Option<u64>,
}

fn levy(setup: &Setup, exp: &ExperimentSpec, seed: u64) -> Result<ExperimentOutput> {
    let p: LevyParams = params(exp)?;
    let x0 = setup.point(&p.center.coords())?;
    let cfg = sim_config(p.n_paths, seed, p.max_event_cap);
    let c = mc::levy_system_check(&setup.gen, x0, p.r, p.s, &cfg)?;
    let mut out = Out::new(&exp.id);
    out.row(
        &[
            ("lhs", c.lhs),
            ("lhs_stderr", c.lhs_stderr.unwrap_or(f64::NAN)),
            ("rhs", c.rhs),
            ("relative_error", c.relative_error),
        ],
        Some(coord(setup, x0)),
    );
    out.metric("relative_error", c.relative_error);
    out.metric("aborted", c.aborted as f64);
    out.finish(&c)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SurvivalParams {
    centers: Vec<PointSpec>,
    r: f64,
    delta: f64,
    n_paths: usize,
    #[serde(default)]
    max_event_cap: Option<u64>,
}

/// `P^x(tau_{B(x,r)} <= delta phi(x, r))` by simulation, with the exact
/// value from the killed semigroup alongside.
fn survival(setup: &Setup, exp: &ExperimentSpec, seed: u64) -> Result<ExperimentOutput> {
    let p: SurvivalParams = params(exp)?;
    let centers = points(setup, &p.centers)?;
    let mut out = Out::new(&exp.id);
    let mut worst: f64 = 0.0;
    let mut estimates = Vec::new();
    for (k, &x) in centers.iter().enumerate() {
        let t = p.delta * setup.sf.phi_eval(x, p.r)?;
        let cfg = sim_config(p.n_paths, seed.wrapping_add(k as u64), p.max_event_cap);
        let est = mc::survival_probability(&setup.gen, x, p.r, t, &cfg)?;
        let domain = setup.gen.ball_domain(x, p.r)?;
        let sg = HeatSemigroup::killed(&setup.gen, &domain, DEFAULT_DENSE_CAP)?;
        let exact = 1.0 - sg.survival(domain.position(x).unwrap(), t)?;
        worst = worst.max(est.estimate);
        out.row(
            &[
                ("x", setup.space.point(x)[0]),
                ("t", t),
                ("estimate", est.estimate),
                ("stderr", est.stderr.unwrap_or(f64::NAN)),
                ("exact", exact),
            ],
            Some(coord(setup, x)),
        );
        estimates.push(est);
    }
    out.metric("max_estimate", worst);
    out.finish(&estimates)
}
