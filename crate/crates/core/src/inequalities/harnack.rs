//! EHI, EHI(phi), WEHI(phi) and WEHI+(phi).
//!
//! For EHI the worst case over all globally nonnegative harmonic functions
//! is attained on a single harmonic-measure column: `u(x)/u(y)` is
//! linear-fractional in the nonnegative weights of the exit-site columns,
//! so its maximum sits at a vertex of the simplex. The column scan is
//! therefore exact. The tail-corrected variants mix an infimum with a tail
//! term in the denominator, which breaks the vertex argument, so their
//! constants are envelopes over a finite family.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{harnack_ratio, tail_phi, BallSpec};
use crate::error::{Error, Result};
use crate::operator::{DomainSolver, Generator};
use crate::scale::ScaleFunction;

/// Interior values of a family member down to `-INTERIOR_ROUNDOFF` are
/// treated as solver round-off and clamped to zero; anything lower
/// violates the nonnegativity hypothesis and the member is skipped.
pub const INTERIOR_ROUNDOFF: f64 = 1e-12;

/// Tolerance on `L u <= 0`, relative to `lambda(x) * max|u|`.
const SUPERHARMONIC_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HarnackKind {
    #[serde(rename = "EHI")]
    Ehi,
    #[serde(rename = "EHI_phi")]
    EhiPhi,
    #[serde(rename = "WEHI")]
    Wehi,
    #[serde(rename = "WEHI_plus")]
    WehiPlus,
}

/// Inner radius `r` and outer (harmonicity) radius `big_r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoBallSpec {
    pub center: usize,
    pub r: f64,
    pub big_r: f64,
}

/// `u = harmonic extension of the exterior data + G_D f` with `f` given by
/// `source`. Exterior entries must lie outside the domain, source entries
/// inside. Absent entries are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyMember {
    pub id: String,
    pub exterior: Vec<(usize, f64)>,
    #[serde(default)]
    pub source: Vec<(usize, f64)>,
}

impl FamilyMember {
    pub fn column(z: usize) -> Self {
        Self {
            id: format!("col:{z}"),
            exterior: vec![(z, 1.0)],
            source: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FamilySpec {
    /// Harmonic-measure columns and signed two-column combinations
    /// `H[., z] - t H[., z']`, strided down to at most `max_columns`
    /// columns and `max_partners` partners. `green_sources > 0` adds Green
    /// potentials (superharmonic members, WEHI+ only).
    Default {
        t_grid: Vec<f64>,
        max_columns: usize,
        max_partners: usize,
        #[serde(default)]
        green_sources: usize,
    },
    Explicit {
        members: Vec<FamilyMember>,
    },
}

impl Default for FamilySpec {
    fn default() -> Self {
        FamilySpec::Default {
            t_grid: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            max_columns: 24,
            max_partners: 8,
            green_sources: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackWitness {
    pub ball: TwoBallSpec,
    pub member: FamilyMember,
    pub argmax: usize,
    pub argmin: usize,
    /// Unclamped ratio of the two sides.
    pub raw_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackReport {
    pub kind: HarnackKind,
    pub delta: f64,
    pub epsilon: Option<f64>,
    pub c_hat: f64,
    pub witness: Option<HarnackWitness>,
    pub family_size: usize,
    /// Members rejected for negative interior values, failed
    /// superharmonicity, or a vanishing right-hand side.
    pub skipped: usize,
    pub exact: bool,
    pub label: String,
    /// Some inner ball contained a single lattice point.
    pub singleton_inner: bool,
}

impl HarnackReport {
    /// Recomputes the witness ratio from scratch, clamped at 1 like `c_hat`.
    pub fn reproduce(&self, gen: &Generator, sf: &ScaleFunction) -> Result<f64> {
        let Some(w) = &self.witness else {
            return Ok(1.0);
        };
        let sf = (self.kind != HarnackKind::Ehi).then_some(sf);
        let prep = Prepared::new(gen, sf, self.kind, self.delta, w.ball)?;
        let eval = prep.evaluate(&w.member, self.kind, self.epsilon)?;
        Ok(match eval {
            Eval::Value { raw, .. } => raw.max(1.0),
            Eval::Skip => 1.0,
        })
    }
}

struct Prepared<'g> {
    solver: DomainSolver<'g>,
    sf: Option<&'g ScaleFunction>,
    ball: TwoBallSpec,
    inner: Vec<usize>,
    phi_r: f64,
}

enum Eval {
    Value { raw: f64, argmax: usize, argmin: usize },
    Skip,
}

impl<'g> Prepared<'g> {
    fn new(
        gen: &'g Generator,
        sf: Option<&'g ScaleFunction>,
        kind: HarnackKind,
        delta: f64,
        ball: TwoBallSpec,
    ) -> Result<Self> {
        let space = gen.space();
        let domain = gen.ball_domain(ball.center, ball.big_r)?;
        let inner_r = match kind {
            HarnackKind::Ehi => delta * ball.big_r,
            _ => ball.r,
        };
        let inner = space.ball(ball.center, inner_r)?;
        let phi_r = match sf {
            Some(sf) => sf.phi_eval(ball.center, ball.r)?,
            None => 0.0,
        };
        Ok(Self {
            solver: DomainSolver::new(gen, domain)?,
            sf,
            ball,
            inner,
            phi_r,
        })
    }

    fn function(&self, member: &FamilyMember) -> Result<Vec<f64>> {
        evaluate_member(&self.solver, member)
    }

    fn evaluate(&self, member: &FamilyMember, kind: HarnackKind, eps: Option<f64>) -> Result<Eval> {
        let mut u = self.function(member)?;
        let gen = self.solver.generator();
        let domain = self.solver.domain();
        if kind == HarnackKind::WehiPlus {
            let lu = gen.apply(&u)?;
            let scale = u.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
            if domain
                .points()
                .iter()
                .any(|&x| lu[x] > SUPERHARMONIC_TOL * gen.lambda(x) * scale)
            {
                return Ok(Eval::Skip);
            }
        }
        for &x in domain.points() {
            if u[x] < -INTERIOR_ROUNDOFF {
                return Ok(Eval::Skip);
            }
            u[x] = u[x].max(0.0);
        }
        let ratio = harnack_ratio(&u, &self.inner);
        if kind == HarnackKind::Ehi {
            if ratio.infinite {
                return Ok(Eval::Skip);
            }
            return Ok(Eval::Value {
                raw: ratio.ratio,
                argmax: ratio.argmax,
                argmin: ratio.argmin,
            });
        }
        let space = gen.space();
        let negative: Vec<f64> = (0..u.len())
            .map(|z| if domain.contains(z) { 0.0 } else { (-u[z]).max(0.0) })
            .collect();
        let sf = self.sf.expect("tail-corrected checks carry a scale function");
        let tail = tail_phi(space, sf, &negative, self.ball.center, self.ball.big_r);
        let rhs = ratio.inf + self.phi_r * tail;
        if !(rhs > 0.0) {
            return Ok(Eval::Skip);
        }
        let lhs = match kind {
            HarnackKind::EhiPhi => ratio.sup,
            _ => {
                let e = eps.expect("weak Harnack needs epsilon");
                let (mut num, mut den) = (0.0, 0.0);
                for &x in &self.inner {
                    num += u[x].powf(e) * space.mass(x);
                    den += space.mass(x);
                }
                (num / den).powf(1.0 / e)
            }
        };
        Ok(Eval::Value {
            raw: lhs / rhs,
            argmax: ratio.argmax,
            argmin: ratio.argmin,
        })
    }
}

/// Full-length function generated by `member` on the solver's domain.
pub fn evaluate_member(solver: &DomainSolver<'_>, member: &FamilyMember) -> Result<Vec<f64>> {
    let gen = solver.generator();
    let domain = solver.domain();
    let mut data = vec![0.0; gen.len()];
    for &(z, v) in &member.exterior {
        gen.space().check_index(z)?;
        if domain.contains(z) {
            return Err(Error::InvalidParameter(format!(
                "member {}: exterior point {z} lies in the domain",
                member.id
            )));
        }
        data[z] += v;
    }
    let mut u = solver.harmonic_extension(&data)?;
    if !member.source.is_empty() {
        let mut f = vec![0.0; domain.len()];
        for &(y, v) in &member.source {
            let i = domain.position(y).ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "member {}: source point {y} lies outside the domain",
                    member.id
                ))
            })?;
            f[i] += v;
        }
        let g = solver.green_apply(&f)?;
        for (&x, v) in domain.points().iter().zip(g) {
            u[x] += v;
        }
    }
    Ok(u)
}

fn strided(items: &[usize], max: usize) -> Vec<usize> {
    if max == 0 || items.is_empty() {
        return Vec::new();
    }
    if items.len() <= max {
        return items.to_vec();
    }
    (0..max).map(|k| items[k * items.len() / max]).collect()
}

/// Members of the default family for the ball `B(center, big_r)`.
pub fn default_family(
    gen: &Generator,
    ball: TwoBallSpec,
    spec: &FamilySpec,
) -> Result<Vec<FamilyMember>> {
    let (t_grid, max_columns, max_partners, green_sources) = match spec {
        FamilySpec::Explicit { members } => return Ok(members.clone()),
        FamilySpec::Default {
            t_grid,
            max_columns,
            max_partners,
            green_sources,
        } => (t_grid, *max_columns, *max_partners, *green_sources),
    };
    let domain = gen.ball_domain(ball.center, ball.big_r)?;
    let exterior = domain.complement();
    let columns = strided(&exterior, max_columns);
    let partners = strided(&exterior, max_partners);
    let mut out: Vec<FamilyMember> = columns.iter().map(|&z| FamilyMember::column(z)).collect();
    for &z in &columns {
        for &zp in &partners {
            if zp == z {
                continue;
            }
            for &t in t_grid {
                out.push(FamilyMember {
                    id: format!("col:{z}-{t}*col:{zp}"),
                    exterior: vec![(z, 1.0), (zp, -t)],
                    source: Vec::new(),
                });
            }
        }
    }
    for &y in &strided(domain.points(), green_sources) {
        out.push(FamilyMember {
            id: format!("green:{y}"),
            exterior: Vec::new(),
            source: vec![(y, 1.0)],
        });
        for &z in &strided(&exterior, 4) {
            out.push(FamilyMember {
                id: format!("col:{z}+green:{y}"),
                exterior: vec![(z, 1.0)],
                source: vec![(y, 1.0)],
            });
        }
    }
    Ok(out)
}

fn check_in_range(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {v} must lie in (0, 1)")))
    }
}

struct Best {
    raw: f64,
    witness: Option<HarnackWitness>,
    skipped: usize,
    family_size: usize,
    singleton: bool,
}

impl Best {
    fn empty() -> Self {
        Self {
            raw: f64::NEG_INFINITY,
            witness: None,
            skipped: 0,
            family_size: 0,
            singleton: false,
        }
    }

    fn merge(mut self, other: Best) -> Best {
        if other.raw > self.raw {
            self.raw = other.raw;
            self.witness = other.witness;
        }
        self.skipped += other.skipped;
        self.family_size += other.family_size;
        self.singleton |= other.singleton;
        self
    }
}

fn scan(
    gen: &Generator,
    sf: Option<&ScaleFunction>,
    kind: HarnackKind,
    delta: f64,
    epsilon: Option<f64>,
    balls: &[TwoBallSpec],
    family: &FamilySpec,
) -> Result<Best> {
    let mut total = Best::empty();
    for &ball in balls {
        let prep = Prepared::new(gen, sf, kind, delta, ball)?;
        let members = match kind {
            HarnackKind::Ehi => prep
                .solver
                .domain()
                .complement()
                .into_iter()
                .map(FamilyMember::column)
                .collect(),
            _ => default_family(gen, ball, family)?,
        };
        let evals: Vec<Eval> = members
            .par_iter()
            .map(|m| prep.evaluate(m, kind, epsilon))
            .collect::<Result<_>>()?;
        let mut best = Best::empty();
        best.family_size = members.len();
        best.singleton = prep.inner.len() == 1;
        for (m, e) in members.iter().zip(evals) {
            match e {
                Eval::Skip => best.skipped += 1,
                Eval::Value { raw, argmax, argmin } => {
                    if raw > best.raw {
                        best.raw = raw;
                        best.witness = Some(HarnackWitness {
                            ball,
                            member: m.clone(),
                            argmax,
                            argmin,
                            raw_ratio: raw,
                        });
                    }
                }
            }
        }
        total = total.merge(best);
    }
    Ok(total)
}

fn finish(kind: HarnackKind, delta: f64, epsilon: Option<f64>, best: Best) -> HarnackReport {
    let exact = kind == HarnackKind::Ehi;
    HarnackReport {
        kind,
        delta,
        epsilon,
        c_hat: best.raw.max(1.0),
        witness: best.witness,
        family_size: best.family_size,
        skipped: best.skipped,
        exact,
        label: if exact {
            "exact: worst case over all nonnegative harmonic functions (column scan)".into()
        } else {
            "family envelope".into()
        },
        singleton_inner: best.singleton,
    }
}

/// EHI on each ball `B(x0, r)`: worst `sup/inf` over `B(x0, delta r)` among
/// harmonic-measure columns.
pub fn check_ehi(gen: &Generator, balls: &[BallSpec], delta: f64) -> Result<HarnackReport> {
    check_in_range("delta", delta)?;
    let specs: Vec<TwoBallSpec> = balls
        .iter()
        .map(|b| TwoBallSpec {
            center: b.center,
            r: delta * b.r,
            big_r: b.r,
        })
        .collect();
    let best = scan(gen, None, HarnackKind::Ehi, delta, None, &specs, &FamilySpec::default())?;
    Ok(finish(HarnackKind::Ehi, delta, None, best))
}

fn shrink_factor(balls: &[TwoBallSpec]) -> Result<f64> {
    let mut delta: f64 = 0.0;
    for b in balls {
        if !(b.r > 0.0 && b.r < b.big_r) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < r < R, got r = {}, R = {}",
                b.r, b.big_r
            )));
        }
        delta = delta.max(b.r / b.big_r);
    }
    Ok(delta)
}

pub fn check_ehi_phi(
    gen: &Generator,
    sf: &ScaleFunction,
    balls: &[TwoBallSpec],
    family: &FamilySpec,
) -> Result<HarnackReport> {
    let delta = shrink_factor(balls)?;
    let best = scan(gen, Some(sf), HarnackKind::EhiPhi, delta, None, balls, family)?;
    Ok(finish(HarnackKind::EhiPhi, delta, None, best))
}

pub fn check_wehi(
    gen: &Generator,
    sf: &ScaleFunction,
    epsilon: f64,
    balls: &[TwoBallSpec],
    family: &FamilySpec,
) -> Result<HarnackReport> {
    check_in_range("epsilon", epsilon)?;
    let delta = shrink_factor(balls)?;
    let best = scan(gen, Some(sf), HarnackKind::Wehi, delta, Some(epsilon), balls, family)?;
    Ok(finish(HarnackKind::Wehi, delta, Some(epsilon), best))
}

/// As [`check_wehi`] over superharmonic members; every member is checked
/// for `L u <= 0` on the domain before use.
pub fn check_wehi_plus(
    gen: &Generator,
    sf: &ScaleFunction,
    epsilon: f64,
    balls: &[TwoBallSpec],
    family: &FamilySpec,
) -> Result<HarnackReport> {
    check_in_range("epsilon", epsilon)?;
    let delta = shrink_factor(balls)?;
    let best = scan(gen, Some(sf), HarnackKind::WehiPlus, delta, Some(epsilon), balls, family)?;
    Ok(finish(HarnackKind::WehiPlus, delta, Some(epsilon), best))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KassmannRow {
    pub epsilon: f64,
    pub t: f64,
    pub sup: f64,
    pub inf: f64,
    /// Plain `sup/inf` over the inner ball.
    pub sup_inf_ratio: f64,
    pub tail: f64,
    /// `sup / (inf + phi * tail)`.
    pub raw_ratio: f64,
    pub c_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KassmannSweep {
    pub ball: TwoBallSpec,
    pub positive_outer: f64,
    /// Largest `t` keeping `u_t >= 0` on `B(x0, R)`.
    pub t_star: f64,
    pub t_star_point: usize,
    pub rows: Vec<KassmannRow>,
}

/// Growing negative exterior mass: `u_t = h_+ - t h_-` with `h_+` the
/// harmonic extension of the indicator of `R < d <= positive_outer` and
/// `h_-` that of `d > positive_outer`. Rows are `t = t*(1 - eps)` for each
/// `eps`, preceded by the `t = 0` baseline.
pub fn kassmann_sweep(
    gen: &Generator,
    sf: &ScaleFunction,
    ball: TwoBallSpec,
    positive_outer: f64,
    epsilons: &[f64],
) -> Result<KassmannSweep> {
    shrink_factor(&[ball])?;
    let space = gen.space();
    let prep = Prepared::new(gen, Some(sf), HarnackKind::EhiPhi, 0.5, ball)?;
    let exterior = prep.solver.domain().complement();
    let (mut plus, mut minus) = (Vec::new(), Vec::new());
    for &z in &exterior {
        if space.within(space.distance(ball.center, z), positive_outer) {
            plus.push((z, 1.0));
        } else {
            minus.push((z, 1.0));
        }
    }
    if plus.is_empty() || minus.is_empty() {
        return Err(Error::InvalidParameter(
            "both the positive shell and the negative region must be nonempty".into(),
        ));
    }
    let member = |t: f64| FamilyMember {
        id: format!("kassmann:t={t}"),
        exterior: plus
            .iter()
            .copied()
            .chain(minus.iter().map(|&(z, _)| (z, -t)))
            .filter(|&(_, v)| v != 0.0)
            .collect(),
        source: Vec::new(),
    };
    let hp = prep.function(&member(0.0))?;
    let hm = prep.function(&FamilyMember {
        id: "minus".into(),
        exterior: minus.clone(),
        source: Vec::new(),
    })?;
    let (mut t_star, mut t_star_point) = (f64::INFINITY, ball.center);
    for &x in prep.solver.domain().points() {
        let q = hp[x] / hm[x];
        if q < t_star {
            t_star = q;
            t_star_point = x;
        }
    }
    let mut rows = Vec::with_capacity(epsilons.len() + 1);
    for eps in std::iter::once(1.0).chain(epsilons.iter().copied()) {
        let t = t_star * (1.0 - eps);
        let mut u = prep.function(&member(t))?;
        for &x in prep.solver.domain().points() {
            u[x] = u[x].max(0.0);
        }
        let ratio = harnack_ratio(&u, &prep.inner);
        let negative: Vec<f64> = (0..u.len())
            .map(|z| if prep.solver.domain().contains(z) { 0.0 } else { (-u[z]).max(0.0) })
            .collect();
        let tail = tail_phi(space, sf, &negative, ball.center, ball.big_r);
        let raw = ratio.sup / (ratio.inf + prep.phi_r * tail);
        rows.push(KassmannRow {
            epsilon: eps,
            t,
            sup: ratio.sup,
            inf: ratio.inf,
            sup_inf_ratio: ratio.ratio,
            tail,
            raw_ratio: raw,
            c_hat: raw.max(1.0),
        });
    }
    Ok(KassmannSweep {
        ball,
        positive_outer,
        t_star,
        t_star_point,
        rows,
    })
}
