//! Criterion functionals for boundedness and compactness, the weighted
//! maximal function, kernel-exponent verification and norm probes.
//!
//! Suprema over the disc are taken over finite basepoint sets and judged by
//! refinement: a criterion whose supremum over the two deepest dyadic shells
//! (or whose integral) grows by 25% or more when the sampling goes two dyadic
//! levels deeper is reported divergent.
//! Limits at the boundary are judged from tail suprema over `1 - |a| <= delta`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{build_r_lattice, carleson_square, pseudo_disc, DiscPoint, Region};
use crate::measures::{pushforward, pushforward_atoms, Atom, DiscMeasure, QuadratureGrid};
use crate::quad::{gl16, CompensatedSum};
use crate::spaces::{bergman_norm, test_function, AnalyticFunction, OperatorSpec, SelfMap};
use crate::weights::RadialWeight;

/// Relative growth under refinement at which a criterion is called divergent.
pub const DIVERGENCE_GROWTH: f64 = 0.25;
/// Each tail step must shrink the tail supremum by at least this fraction.
pub const TAIL_REDUCTION: f64 = 0.30;
/// Consecutive tail steps required for a vanishing tail.
pub const TAIL_STEPS: usize = 3;
/// Dyadic levels per tail step.
pub const TAIL_STEP_LEVELS: u32 = 2;
/// Smallest `omega(S(z))` treated as representable.
pub const MASS_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CriterionId {
    EmbSup,
    CarlesonSup,
    EmbLs,
    OpPushforwardLs,
    BerezinSup,
    HinfSup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    BoundedConsistent,
    Divergent,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompactVerdict {
    VanishingTail,
    NonVanishing,
    Inconclusive,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CriterionParams {
    pub p: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    pub n: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Integrability exponent `p / (p - q)` of the `L^s` criteria.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub re: f64,
    pub im: f64,
    pub value: f64,
}

/// Supremum over `1 - |a| <= delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailSup {
    pub delta: f64,
    pub sup: f64,
}

/// Supremum over the shell `2^-(k+1) < 1 - |a| <= 2^-k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellSup {
    pub k: u32,
    pub sup: f64,
    pub count: usize,
}

/// Value at one refinement level: the supremum over the two deepest dyadic
/// shells for sup criteria, the integral for `L^s` criteria.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub level: u32,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub criterion_id: CriterionId,
    pub params: CriterionParams,
    pub samples: Vec<Sample>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub global_sup: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ls_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ls_integral: Option<f64>,
    pub tail: Vec<TailSup>,
    pub shells: Vec<ShellSup>,
    pub refinement: Vec<Refinement>,
    pub growth: Option<f64>,
    pub divergence_threshold: f64,
    pub verdict: Verdict,
    pub compact_verdict: CompactVerdict,
    pub truncated: bool,
    pub warnings: Vec<String>,
    pub diagnostics: BTreeMap<String, f64>,
}

impl CriterionReport {
    fn new(id: CriterionId, params: CriterionParams) -> Self {
        CriterionReport {
            criterion_id: id,
            params,
            samples: Vec::new(),
            global_sup: None,
            ls_norm: None,
            ls_integral: None,
            tail: Vec::new(),
            shells: Vec::new(),
            refinement: Vec::new(),
            growth: None,
            divergence_threshold: DIVERGENCE_GROWTH,
            verdict: Verdict::Inconclusive,
            compact_verdict: CompactVerdict::Inconclusive,
            truncated: false,
            warnings: Vec::new(),
            diagnostics: BTreeMap::new(),
        }
    }

    /// The headline number: supremum or `L^s` norm.
    pub fn value(&self) -> f64 {
        self.global_sup.or(self.ls_norm).unwrap_or(f64::NAN)
    }
}

/// Growth verdict from a coarse and a refined value.
pub fn growth_verdict(coarse: f64, fine: f64) -> (Option<f64>, Verdict) {
    if !(coarse.is_finite() && fine.is_finite()) {
        return (None, Verdict::Divergent);
    }
    if fine == 0.0 {
        return (Some(1.0), Verdict::BoundedConsistent);
    }
    if coarse == 0.0 {
        return (None, Verdict::Inconclusive);
    }
    let g = fine / coarse;
    let v = if g >= 1.0 + DIVERGENCE_GROWTH {
        Verdict::Divergent
    } else {
        Verdict::BoundedConsistent
    };
    (Some(g), v)
}

/// Dyadic shell of a gap: `2^-(k+1) < gap <= 2^-k`.
pub fn shell_index(gap: f64) -> u32 {
    if !(gap < 1.0) {
        return 0;
    }
    let x = -gap.log2();
    let k = x.floor();
    // exact powers of two belong to the outer shell
    let k = if k == x && k > 0.0 { k - 1.0 } else { k };
    (k.max(0.0) as u32).min(1100)
}

fn window_sup(points: impl Iterator<Item = (f64, f64)>) -> f64 {
    let shells = shells_of(points);
    window_of(&shells)
}

fn window_of(shells: &[ShellSup]) -> f64 {
    let Some(kmax) = shells.last().map(|s| s.k) else {
        return 0.0;
    };
    let from = (kmax + 1).saturating_sub(TAIL_STEP_LEVELS);
    shells.iter().filter(|s| s.k >= from).fold(0.0, |a, s| a.max(s.sup))
}

fn shells_of(points: impl Iterator<Item = (f64, f64)>) -> Vec<ShellSup> {
    let mut map: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for (gap, v) in points {
        let e = map.entry(shell_index(gap)).or_insert((0.0, 0));
        e.0 = e.0.max(v);
        e.1 += 1;
    }
    map.into_iter().map(|(k, (sup, count))| ShellSup { k, sup, count }).collect()
}

fn tails_of(shells: &[ShellSup]) -> Vec<TailSup> {
    let Some(kmax) = shells.last().map(|s| s.k) else {
        return Vec::new();
    };
    let mut out = Vec::with_capacity(kmax as usize + 1);
    let mut running = 0.0f64;
    let mut idx = shells.len();
    for k in (0..=kmax).rev() {
        while idx > 0 && shells[idx - 1].k >= k {
            running = running.max(shells[idx - 1].sup);
            idx -= 1;
        }
        out.push(TailSup {
            delta: (-(k as f64)).exp2(),
            sup: running,
        });
    }
    out.reverse();
    out
}

/// Vanishing tail: the last `TAIL_STEPS` steps of `TAIL_STEP_LEVELS` levels
/// each shrink the tail by `TAIL_REDUCTION`, or the tail is already zero.
pub fn compact_from_tails(tail: &[TailSup]) -> CompactVerdict {
    let Some(last) = tail.last() else {
        return CompactVerdict::Inconclusive;
    };
    if last.sup == 0.0 {
        return CompactVerdict::VanishingTail;
    }
    let step = TAIL_STEP_LEVELS as usize;
    let need = TAIL_STEPS * step;
    if tail.len() <= need {
        return CompactVerdict::Inconclusive;
    }
    let end = tail.len() - 1;
    let ok = (0..TAIL_STEPS).all(|i| {
        let hi = tail[end - need + i * step].sup;
        let lo = tail[end - need + (i + 1) * step].sup;
        lo <= (1.0 - TAIL_REDUCTION) * hi
    });
    if ok {
        CompactVerdict::VanishingTail
    } else {
        CompactVerdict::NonVanishing
    }
}

// ---------------------------------------------------------------------------
// basepoints

/// Basepoint families for suprema over the disc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Basepoints {
    /// r-lattice truncated at `1 - |a| >= 2^-depth`.
    Lattice { r: f64, depth: u32 },
    /// `|a| = 1 - 2^(-j / per_level)` for `j = 0..=depth * per_level` on one ray.
    Ray { depth: u32, per_level: u32, angle: f64 },
    Explicit { points: Vec<DiscPoint> },
}

/// A basepoint with its orbit label: points sharing an orbit differ by a rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasePoint {
    pub z: DiscPoint,
    pub gap: f64,
    pub orbit: usize,
}

impl Basepoints {
    pub fn realize(&self) -> Result<Vec<BasePoint>> {
        match self {
            Basepoints::Lattice { r, depth } => {
                let lat = build_r_lattice(*r, *depth)?;
                let mut out = Vec::with_capacity(lat.len());
                for (i, ring) in lat.rings.iter().enumerate() {
                    for j in 0..ring.count {
                        let theta = 2.0 * PI * j as f64 / ring.count as f64;
                        out.push(BasePoint {
                            z: DiscPoint::new_unchecked(Complex64::from_polar(ring.radius, theta)),
                            gap: ring.gap,
                            orbit: i,
                        });
                    }
                }
                Ok(out)
            }
            Basepoints::Ray {
                depth,
                per_level,
                angle,
            } => {
                if *per_level == 0 {
                    return Err(Error::domain("ray basepoints need per_level >= 1"));
                }
                Ok((0..=depth * per_level)
                    .map(|j| {
                        let gap = (-(j as f64) / *per_level as f64).exp2();
                        BasePoint {
                            z: DiscPoint::new_unchecked(Complex64::from_polar(1.0 - gap, *angle)),
                            gap,
                            orbit: j as usize,
                        }
                    })
                    .collect())
            }
            Basepoints::Explicit { points } => Ok(points
                .iter()
                .enumerate()
                .map(|(i, z)| BasePoint {
                    z: *z,
                    gap: z.gap(),
                    orbit: i,
                })
                .collect()),
        }
    }

    /// The same family `extra` dyadic levels deeper; `None` for explicit sets.
    pub fn deepened(&self, extra: u32) -> Option<Basepoints> {
        match self {
            Basepoints::Lattice { r, depth } => Some(Basepoints::Lattice {
                r: *r,
                depth: depth + extra,
            }),
            Basepoints::Ray {
                depth,
                per_level,
                angle,
            } => Some(Basepoints::Ray {
                depth: depth + extra,
                per_level: *per_level,
                angle: *angle,
            }),
            Basepoints::Explicit { .. } => None,
        }
    }

    pub fn depth(&self) -> Option<u32> {
        match self {
            Basepoints::Lattice { depth, .. } | Basepoints::Ray { depth, .. } => Some(*depth),
            Basepoints::Explicit { .. } => None,
        }
    }
}

/// Evaluates `f` on every basepoint, once per orbit when `invariant` holds.
/// `None` marks a truncated point.
fn eval_points<F>(points: &[BasePoint], invariant: bool, f: F) -> Result<Vec<Option<f64>>>
where
    F: Fn(&BasePoint) -> Result<Option<f64>> + Sync,
{
    if invariant {
        let mut firsts: Vec<usize> = Vec::new();
        let mut slot = vec![0usize; points.len()];
        let mut last_orbit = usize::MAX;
        for (i, p) in points.iter().enumerate() {
            if p.orbit != last_orbit {
                firsts.push(i);
                last_orbit = p.orbit;
            }
            slot[i] = firsts.len() - 1;
        }
        let vals = firsts
            .par_iter()
            .map(|&i| f(&points[i]))
            .collect::<Result<Vec<_>>>()?;
        Ok(slot.into_iter().map(|s| vals[s]).collect())
    } else {
        points.par_iter().map(&f).collect()
    }
}

struct SupRun {
    values: Vec<Option<f64>>,
    points: Vec<BasePoint>,
}

impl SupRun {
    fn sup(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |a, &b| a.max(b))
    }

    /// Supremum over the deepest `TAIL_STEP_LEVELS` dyadic shells.
    fn window(&self) -> f64 {
        window_sup(self.points.iter().zip(&self.values).filter_map(|(p, v)| v.map(|v| (p.gap, v))))
    }

    fn truncated(&self) -> bool {
        self.values.iter().any(|v| v.is_none())
    }
}

fn assemble_sup_report(
    id: CriterionId,
    params: CriterionParams,
    coarse: SupRun,
    fine: Option<SupRun>,
    levels: (u32, u32),
    invariant: bool,
) -> CriterionReport {
    let mut rep = CriterionReport::new(id, params);
    let deep = fine.as_ref().unwrap_or(&coarse);
    let mut last_orbit = usize::MAX;
    for (p, v) in deep.points.iter().zip(&deep.values) {
        if invariant && p.orbit == last_orbit {
            continue;
        }
        last_orbit = p.orbit;
        if let Some(v) = v {
            rep.samples.push(Sample {
                re: p.z.re(),
                im: p.z.im(),
                value: *v,
            });
        }
    }
    rep.global_sup = Some(deep.sup());
    rep.shells = shells_of(
        deep.points
            .iter()
            .zip(&deep.values)
            .filter_map(|(p, v)| v.map(|v| (p.gap, v))),
    );
    rep.tail = tails_of(&rep.shells);
    rep.truncated = coarse.truncated() || deep.truncated();
    if rep.truncated {
        rep.warnings
            .push("basepoints with underflowing omega(S(a)) were dropped".to_string());
    }
    rep.refinement.push(Refinement {
        level: levels.0,
        value: coarse.window(),
    });
    rep.diagnostics.insert("global_sup_coarse".into(), coarse.sup());
    match &fine {
        Some(f) => {
            rep.refinement.push(Refinement {
                level: levels.1,
                value: f.window(),
            });
            let (g, v) = growth_verdict(coarse.window(), f.window());
            rep.growth = g;
            rep.verdict = v;
        }
        None => {
            rep.warnings
                .push("explicit basepoints cannot be refined; verdict left inconclusive".to_string());
            if coarse.sup() == 0.0 {
                rep.verdict = Verdict::BoundedConsistent;
            }
        }
    }
    rep.compact_verdict = match rep.verdict {
        Verdict::Divergent => CompactVerdict::NonVanishing,
        _ => compact_from_tails(&rep.tail),
    };
    rep
}

fn run_sup<F>(basepoints: &Basepoints, invariant: bool, f: &F) -> Result<(SupRun, Option<SupRun>)>
where
    F: Fn(&BasePoint) -> Result<Option<f64>> + Sync,
{
    let points = basepoints.realize()?;
    let values = eval_points(&points, invariant, f)?;
    let coarse = SupRun { values, points };
    let fine = match basepoints.deepened(TAIL_STEP_LEVELS) {
        Some(b) => {
            let points = b.realize()?;
            let values = eval_points(&points, invariant, f)?;
            Some(SupRun { values, points })
        }
        None => None,
    };
    Ok((coarse, fine))
}

fn check_radius(r: f64) -> Result<()> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::domain(format!("pseudohyperbolic radius {r} outside (0, 1)")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// embedding criteria

/// `sup_z mu(Delta(z, r)) / (omega(S(z))^(q/p) (1 - |z|)^(nq))` for `p <= q`.
pub fn embedding_sup_criterion(
    p: f64,
    q: f64,
    n: u32,
    w: &RadialWeight,
    mu: &DiscMeasure,
    r: f64,
    basepoints: &Basepoints,
) -> Result<CriterionReport> {
    check_radius(r)?;
    let region = |z: DiscPoint| -> Result<Region> { Ok(Region::PseudoDisc(pseudo_disc(z, r)?)) };
    let mut rep = local_sup_criterion(CriterionId::EmbSup, p, q, n, w, mu, basepoints, region)?;
    rep.params.r = Some(r);
    Ok(rep)
}

/// `sup_z mu(S(z)) / (omega(S(z))^(q/p) (1 - |z|)^(nq))` for `p <= q`.
pub fn carleson_criterion(
    p: f64,
    q: f64,
    n: u32,
    w: &RadialWeight,
    mu: &DiscMeasure,
    basepoints: &Basepoints,
) -> Result<CriterionReport> {
    let region = |z: DiscPoint| -> Result<Region> { Ok(Region::CarlesonSquare(carleson_square(z))) };
    local_sup_criterion(CriterionId::CarlesonSup, p, q, n, w, mu, basepoints, region)
}

#[allow(clippy::too_many_arguments)]
fn local_sup_criterion<R>(
    id: CriterionId,
    p: f64,
    q: f64,
    n: u32,
    w: &RadialWeight,
    mu: &DiscMeasure,
    basepoints: &Basepoints,
    region: R,
) -> Result<CriterionReport>
where
    R: Fn(DiscPoint) -> Result<Region> + Sync,
{
    if !(p > 0.0 && p <= q) {
        return Err(Error::domain(format!("sup criterion needs 0 < p <= q, got p={p} q={q}")));
    }
    let nq = n as f64 * q;
    let eval = |b: &BasePoint| -> Result<Option<f64>> {
        let mass = w.carleson_mass_gap(b.z.modulus(), b.gap);
        if !(mass > MASS_FLOOR) {
            return Ok(None);
        }
        let m = mu.measure_of(&region(b.z)?);
        let denom = mass.powf(q / p) * b.gap.powf(nq);
        let v = m / denom;
        Ok(if v.is_finite() { Some(v) } else { None })
    };
    let invariant = mu.is_rotation_invariant();
    let (coarse, fine) = run_sup(basepoints, invariant, &eval)?;
    let depth = basepoints.depth().unwrap_or(0);
    let params = CriterionParams {
        p,
        q: Some(q),
        n,
        ..Default::default()
    };
    Ok(assemble_sup_report(
        id,
        params,
        coarse,
        fine,
        (depth, depth + TAIL_STEP_LEVELS),
        invariant,
    ))
}

/// `M_{omega, alpha}(mu)(z)` over the search basepoints and the origin.
pub fn maximal_function(
    mu: &DiscMeasure,
    w: &RadialWeight,
    alpha: f64,
    z: DiscPoint,
    searchpoints: &[DiscPoint],
) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::domain(format!("maximal function needs alpha > 0, got {alpha}")));
    }
    let whole = mu.measure_of(&Region::WholeDisc) / w.total_mass().powf(alpha);
    let best = searchpoints
        .par_iter()
        .filter_map(|a| {
            let sq = carleson_square(*a);
            if !sq.contains(z.z()) {
                return None;
            }
            let mass = w.carleson_mass(&sq);
            if !(mass > MASS_FLOOR) {
                return None;
            }
            Some(mu.measure_of(&Region::CarlesonSquare(sq)) / mass.powf(alpha))
        })
        .reduce(|| 0.0, f64::max);
    Ok(whole.max(best))
}

/// `B(z) = mu(Delta(z, r)) / (omega(S(z)) (1 - |z|)^(nq))` in `L^s` of
/// `omega_tilde`, `s = p / (p - q)`, for `q < p`.
pub fn embedding_ls_criterion(
    p: f64,
    q: f64,
    n: u32,
    w: &RadialWeight,
    mu: &DiscMeasure,
    r: f64,
    grid: &QuadratureGrid,
) -> Result<CriterionReport> {
    ls_criterion(CriterionId::EmbLs, p, q, n, w, mu, r, grid)
}

struct LsRun {
    integral: f64,
    ring_values: Vec<(Complex64, f64, f64)>,
    truncated: bool,
}

fn ls_run(
    s: f64,
    nq: f64,
    w: &RadialWeight,
    tilde: &RadialWeight,
    mu: &DiscMeasure,
    r: f64,
    grid: &QuadratureGrid,
) -> Result<LsRun> {
    let masses = grid.weight_masses(tilde);
    let rings = grid.rings();
    let denom: Vec<f64> = rings
        .iter()
        .map(|ring| w.carleson_mass_gap(ring.radius, ring.gap) * ring.gap.powf(nq))
        .collect();
    let truncated = denom.iter().any(|d| !(*d > MASS_FLOOR));
    let b_at = |z: Complex64, ring: usize| -> Result<f64> {
        if !(denom[ring] > MASS_FLOOR) {
            return Ok(0.0);
        }
        let d = pseudo_disc(DiscPoint::new_unchecked(z), r)?;
        Ok(mu.measure_of(&Region::PseudoDisc(d)) / denom[ring])
    };
    if mu.is_rotation_invariant() {
        let per_ring = (0..rings.len())
            .into_par_iter()
            .map(|i| b_at(Complex64::new(rings[i].radius, 0.0), i))
            .collect::<Result<Vec<f64>>>()?;
        let mut acc = CompensatedSum::new();
        for (i, b) in per_ring.iter().enumerate() {
            acc.add(masses[i] * rings[i].count as f64 * b.powf(s));
        }
        let ring_values = per_ring
            .iter()
            .enumerate()
            .map(|(i, b)| (Complex64::new(rings[i].radius, 0.0), rings[i].gap, *b))
            .collect();
        return Ok(LsRun {
            integral: acc.value(),
            ring_values,
            truncated,
        });
    }
    let parts = grid.map_chunks(|nodes| -> Result<(f64, Option<(usize, Complex64, f64)>)> {
        let mut acc = CompensatedSum::new();
        let mut best: Option<(usize, Complex64, f64)> = None;
        for node in nodes {
            let b = b_at(node.z, node.ring)?;
            if !b.is_finite() {
                return Err(Error::NonFinite {
                    re: node.z.re,
                    im: node.z.im,
                    value: b,
                });
            }
            acc.add(masses[node.ring] * b.powf(s));
            if best.map_or(true, |(_, _, v)| b > v) {
                best = Some((node.ring, node.z, b));
            }
        }
        Ok((acc.value(), best))
    });
    let mut acc = CompensatedSum::new();
    let mut ring_best: Vec<Option<(Complex64, f64)>> = vec![None; rings.len()];
    for part in parts {
        let (v, best) = part?;
        acc.add(v);
        if let Some((ring, z, b)) = best {
            if ring_best[ring].map_or(true, |(_, old)| b > old) {
                ring_best[ring] = Some((z, b));
            }
        }
    }
    let ring_values = ring_best
        .iter()
        .enumerate()
        .filter_map(|(i, x)| x.map(|(z, b)| (z, rings[i].gap, b)))
        .collect();
    Ok(LsRun {
        integral: acc.value(),
        ring_values,
        truncated,
    })
}

#[allow(clippy::too_many_arguments)]
fn ls_criterion(
    id: CriterionId,
    p: f64,
    q: f64,
    n: u32,
    w: &RadialWeight,
    mu: &DiscMeasure,
    r: f64,
    grid: &QuadratureGrid,
) -> Result<CriterionReport> {
    if !(q > 0.0 && q < p) {
        return Err(Error::domain(format!("L^s criterion needs 0 < q < p, got p={p} q={q}")));
    }
    check_radius(r)?;
    let s = p / (p - q);
    let nq = n as f64 * q;
    let tilde = w.tilde()?;
    let fine_grid = grid.refined(TAIL_STEP_LEVELS)?;
    let coarse = ls_run(s, nq, w, &tilde, mu, r, grid)?;
    let fine = ls_run(s, nq, w, &tilde, mu, r, &fine_grid)?;

    let params = CriterionParams {
        p,
        q: Some(q),
        n,
        r: Some(r),
        s: Some(s),
        ..Default::default()
    };
    let mut rep = CriterionReport::new(id, params);
    rep.ls_integral = Some(fine.integral);
    rep.ls_norm = Some(fine.integral.powf(1.0 / s));
    rep.samples = fine
        .ring_values
        .iter()
        .map(|(z, _, b)| Sample {
            re: z.re,
            im: z.im,
            value: *b,
        })
        .collect();
    rep.shells = shells_of(fine.ring_values.iter().map(|(_, g, b)| (*g, *b)));
    rep.tail = ls_tails(s, &tilde, &fine, &fine_grid);
    rep.refinement = vec![
        Refinement {
            level: grid.level(),
            value: coarse.integral,
        },
        Refinement {
            level: fine_grid.level(),
            value: fine.integral,
        },
    ];
    let (g, v) = growth_verdict(coarse.integral, fine.integral);
    rep.growth = g;
    rep.verdict = v;
    rep.compact_verdict = match v {
        Verdict::Divergent => CompactVerdict::NonVanishing,
        _ => compact_from_tails(&rep.tail),
    };
    rep.truncated = coarse.truncated || fine.truncated;
    rep.diagnostics.insert("ls_norm_coarse".into(), coarse.integral.powf(1.0 / s));
    Ok(rep)
}

/// Tail integrals `int_{1-|z| <= delta} B^s omega_tilde dA`, estimated from
/// the per-ring values.
fn ls_tails(s: f64, tilde: &RadialWeight, run: &LsRun, grid: &QuadratureGrid) -> Vec<TailSup> {
    let masses = grid.weight_masses(tilde);
    let rings = grid.rings();
    let per_ring: Vec<(f64, f64)> = run
        .ring_values
        .iter()
        .filter_map(|(_, gap, b)| {
            let i = rings.iter().position(|r| r.gap == *gap)?;
            Some((*gap, masses[i] * rings[i].count as f64 * b.powf(s)))
        })
        .collect();
    let kmax = per_ring.iter().map(|(g, _)| shell_index(*g)).max().unwrap_or(0);
    (0..=kmax)
        .map(|k| {
            let delta = (-(k as f64)).exp2();
            let sup = crate::quad::compensated_sum(per_ring.iter().filter(|(g, _)| *g <= delta).map(|(_, v)| *v));
            TailSup { delta, sup }
        })
        .collect()
}

/// `phi_*(|u|^q nu)` in the `L^s` criterion with `n = op.n`.
pub fn op_pushforward_criterion(
    op: &OperatorSpec,
    p: f64,
    q: f64,
    w: &RadialWeight,
    nu: &DiscMeasure,
    r: f64,
    grid: &QuadratureGrid,
) -> Result<CriterionReport> {
    op.phi.validate()?;
    let plain = matches!(op.phi, SelfMap::Identity) && is_constant_one(&op.u);
    let pushed;
    let mu = if plain {
        nu
    } else {
        pushed = pushforward(&op.phi, |z| op.u.eval(z).norm().powf(q), nu)?;
        &pushed
    };
    ls_criterion(CriterionId::OpPushforwardLs, p, q, op.n, w, mu, r, grid)
}

fn is_constant_one(u: &AnalyticFunction) -> bool {
    match u {
        AnalyticFunction::Polynomial { coeffs } => {
            !coeffs.is_empty()
                && coeffs[0] == Complex64::new(1.0, 0.0)
                && coeffs[1..].iter().all(|c| *c == Complex64::new(0.0, 0.0))
        }
        _ => false,
    }
}

// ---------------------------------------------------------------------------
// Berezin-type criterion

/// Kernel exponent with its verification status.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelGamma {
    pub gamma: f64,
    pub validated: bool,
}

fn kernel_sum(atoms: &[Atom], a: Complex64, exponent: f64) -> f64 {
    let ac = a.conj();
    let half = -0.5 * exponent;
    let mut acc = CompensatedSum::new();
    for at in atoms {
        let d = (Complex64::new(1.0, 0.0) - ac * at.z()).norm_sqr();
        acc.add(at.mass * d.powf(half));
    }
    acc.value()
}

/// Per-`a` value
/// `(1-|a|)^(gamma q) / omega(S(a))^(q/p) * int |u|^q |1 - conj(a) phi|^(-(gamma+n) q) nu dA`
/// with refinement over basepoints and grid together.
#[allow(clippy::too_many_arguments)]
pub fn berezin_criterion(
    op: &OperatorSpec,
    p: f64,
    q: f64,
    w: &RadialWeight,
    nu_weight: &RadialWeight,
    gamma: KernelGamma,
    basepoints: &Basepoints,
    grid: &QuadratureGrid,
) -> Result<CriterionReport> {
    if !(p > 0.0 && p <= q) {
        return Err(Error::domain(format!("Berezin criterion needs 0 < p <= q, got p={p} q={q}")));
    }
    if !(gamma.gamma > 0.0) {
        return Err(Error::domain(format!("kernel exponent must be positive, got {}", gamma.gamma)));
    }
    op.phi.validate()?;
    let exponent = (gamma.gamma + op.n as f64) * q;
    let run = |bp: &Basepoints, g: &QuadratureGrid| -> Result<SupRun> {
        let nu = DiscMeasure::radial(nu_weight.clone(), std::sync::Arc::new(g.clone()));
        let atoms = pushforward_atoms(&op.phi, |z| op.u.eval(z).norm().powf(q), &nu)?;
        let points = bp.realize()?;
        let values = points
            .par_iter()
            .map(|b| {
                let mass = w.carleson_mass_gap(b.z.modulus(), b.gap);
                if !(mass > MASS_FLOOR) {
                    return None;
                }
                let pre = b.gap.powf(gamma.gamma * q) / mass.powf(q / p);
                let v = pre * kernel_sum(&atoms, b.z.z(), exponent);
                v.is_finite().then_some(v)
            })
            .collect();
        Ok(SupRun { values, points })
    };
    let coarse = run(basepoints, grid)?;
    let fine = match basepoints.deepened(TAIL_STEP_LEVELS) {
        Some(b) => Some(run(&b, &grid.refined(TAIL_STEP_LEVELS)?)?),
        None => None,
    };
    let params = CriterionParams {
        p,
        q: Some(q),
        n: op.n,
        gamma: Some(gamma.gamma),
        ..Default::default()
    };
    let depth = basepoints.depth().unwrap_or(0);
    let mut rep = assemble_sup_report(
        CriterionId::BerezinSup,
        params,
        coarse,
        fine,
        (depth, depth + TAIL_STEP_LEVELS),
        false,
    );
    if !gamma.validated {
        rep.warnings
            .push(format!("kernel exponent gamma = {} was not validated", gamma.gamma));
    }
    rep.diagnostics.insert("grid_level".into(), grid.level() as f64);
    Ok(rep)
}

// ---------------------------------------------------------------------------
// H^infinity criterion

struct HinfRun {
    sup: f64,
    argmax: Option<Complex64>,
    phi_sup: f64,
    shells: BTreeMap<u32, (f64, usize)>,
    ring_best: Vec<Option<(Complex64, f64)>>,
}

fn hinf_run(op: &OperatorSpec, p: f64, w: &RadialWeight, grid: &QuadratureGrid) -> Result<HinfRun> {
    type Part = (f64, Option<Complex64>, f64, BTreeMap<u32, (f64, usize)>, Option<(usize, Complex64, f64)>);
    let parts = grid.map_chunks(|nodes| -> Result<Part> {
        let mut sup = 0.0f64;
        let mut arg = None;
        let mut phi_sup = 0.0f64;
        let mut shells: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
        let mut best: Option<(usize, Complex64, f64)> = None;
        for node in nodes {
            let w_z = op.phi.apply_checked(node.z)?;
            let m = w_z.norm();
            phi_sup = phi_sup.max(m);
            let gap = 1.0 - m;
            let u = op.u.eval(node.z).norm();
            let v = if u == 0.0 {
                0.0
            } else {
                let mass = w.carleson_mass_gap(m, gap);
                u / (mass.powf(1.0 / p) * gap.powi(op.n as i32))
            };
            if v.is_nan() {
                return Err(Error::NonFinite {
                    re: node.z.re,
                    im: node.z.im,
                    value: v,
                });
            }
            if v > sup || arg.is_none() {
                sup = sup.max(v);
                arg = Some(node.z);
            }
            let e = shells.entry(shell_index(gap)).or_insert((0.0, 0));
            e.0 = e.0.max(v);
            e.1 += 1;
            if best.map_or(true, |(_, _, b)| v > b) {
                best = Some((node.ring, node.z, v));
            }
        }
        Ok((sup, arg, phi_sup, shells, best))
    });
    let mut out = HinfRun {
        sup: 0.0,
        argmax: None,
        phi_sup: 0.0,
        shells: BTreeMap::new(),
        ring_best: vec![None; grid.rings().len()],
    };
    for part in parts {
        let (sup, arg, phi_sup, shells, best) = part?;
        if sup > out.sup || out.argmax.is_none() {
            out.sup = out.sup.max(sup);
            out.argmax = arg;
        }
        out.phi_sup = out.phi_sup.max(phi_sup);
        for (k, (s, c)) in shells {
            let e = out.shells.entry(k).or_insert((0.0, 0));
            e.0 = e.0.max(s);
            e.1 += c;
        }
        if let Some((ring, z, v)) = best {
            if out.ring_best[ring].map_or(true, |(_, b)| v > b) {
                out.ring_best[ring] = Some((z, v));
            }
        }
    }
    Ok(out)
}

/// `sup_z |u(z)| / (omega(S(phi(z)))^(1/p) (1 - |phi(z)|)^n)` on the grid.
pub fn hinf_criterion(op: &OperatorSpec, p: f64, w: &RadialWeight, grid: &QuadratureGrid) -> Result<CriterionReport> {
    if !(p > 0.0) {
        return Err(Error::domain(format!("H^inf criterion needs p > 0, got {p}")));
    }
    op.phi.validate()?;
    let fine_grid = grid.refined(TAIL_STEP_LEVELS)?;
    let coarse = hinf_run(op, p, w, grid)?;
    let fine = hinf_run(op, p, w, &fine_grid)?;
    let params = CriterionParams {
        p,
        n: op.n,
        ..Default::default()
    };
    let mut rep = CriterionReport::new(CriterionId::HinfSup, params);
    rep.global_sup = Some(fine.sup);
    rep.samples = fine
        .ring_best
        .iter()
        .flatten()
        .map(|(z, v)| Sample {
            re: z.re,
            im: z.im,
            value: *v,
        })
        .collect();
    rep.shells = fine
        .shells
        .iter()
        .map(|(k, (sup, count))| ShellSup {
            k: *k,
            sup: *sup,
            count: *count,
        })
        .collect();
    rep.tail = tails_of(&rep.shells);
    let window = |run: &HinfRun| {
        let shells: Vec<ShellSup> = run
            .shells
            .iter()
            .map(|(k, (sup, count))| ShellSup {
                k: *k,
                sup: *sup,
                count: *count,
            })
            .collect();
        window_of(&shells)
    };
    let (wc, wf) = (window(&coarse), window(&fine));
    rep.refinement = vec![
        Refinement {
            level: grid.level(),
            value: wc,
        },
        Refinement {
            level: fine_grid.level(),
            value: wf,
        },
    ];
    rep.diagnostics.insert("global_sup_coarse".into(), coarse.sup);
    let (g, v) = growth_verdict(wc, wf);
    rep.growth = g;
    rep.verdict = v;
    let contained = (1.0 - fine.phi_sup) >= 0.5 * (1.0 - coarse.phi_sup) && fine.phi_sup < 1.0;
    rep.compact_verdict = match v {
        Verdict::Divergent => CompactVerdict::NonVanishing,
        _ if fine.sup == 0.0 || contained => CompactVerdict::VanishingTail,
        _ => compact_from_tails(&rep.tail),
    };
    rep.diagnostics.insert("phi_sup".into(), fine.phi_sup);
    rep.diagnostics.insert("phi_sup_coarse".into(), coarse.phi_sup);
    rep.diagnostics
        .insert("strictly_contained".into(), if contained { 1.0 } else { 0.0 });
    if let Some(z) = fine.argmax {
        rep.diagnostics.insert("argmax_re".into(), z.re);
        rep.diagnostics.insert("argmax_im".into(), z.im);
    }
    Ok(rep)
}

// ---------------------------------------------------------------------------
// operator norm probes

/// Target norm of an operator norm probe.
#[derive(Debug, Clone)]
pub enum NormTarget {
    Lq { q: f64, nu: DiscMeasure },
    /// Supremum over the grid nodes.
    Hinf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormLowerBound {
    pub value: f64,
    pub best: Option<usize>,
    pub ratios: Vec<Option<f64>>,
    pub warnings: Vec<String>,
}

/// `max_f ||D f||_target / ||f||_{A^p_omega}` over the family.
pub fn operator_norm_lower_bound(
    op: &OperatorSpec,
    p: f64,
    target: &NormTarget,
    w: &RadialWeight,
    family: &[AnalyticFunction],
    grid: &QuadratureGrid,
) -> Result<NormLowerBound> {
    if family.is_empty() {
        return Err(Error::domain("operator norm probe needs a nonempty family"));
    }
    op.phi.validate()?;
    let mut out = NormLowerBound {
        value: 0.0,
        best: None,
        ratios: Vec::with_capacity(family.len()),
        warnings: Vec::new(),
    };
    for (i, f) in family.iter().enumerate() {
        let norm = bergman_norm(f, p, w, grid)?;
        if !(norm > 0.0 && norm.is_finite()) {
            out.warnings
                .push(format!("family member {i} has norm {norm}; skipped"));
            out.ratios.push(None);
            continue;
        }
        let image = match target {
            NormTarget::Hinf => {
                let best = grid.max_over(|n| match op.apply(f, n.z) {
                    Ok(v) => v.norm(),
                    Err(_) => f64::NAN,
                });
                let v = best.map_or(0.0, |(v, _)| v);
                if v.is_nan() {
                    return Err(Error::domain("operator image is not finite on the grid"));
                }
                v
            }
            NormTarget::Lq { q, nu } => {
                if !(*q > 0.0) {
                    return Err(Error::domain(format!("target exponent q must be positive, got {q}")));
                }
                nu.integrate(|z| match op.apply(f, z) {
                    Ok(v) => v.norm().powf(*q),
                    Err(_) => f64::NAN,
                })?
                .powf(1.0 / q)
            }
        };
        let ratio = image / norm;
        out.ratios.push(Some(ratio));
        if ratio > out.value || out.best.is_none() {
            out.value = out.value.max(ratio);
            out.best = Some(i);
        }
    }
    Ok(out)
}

/// Probe family: `1, z, z^2` and test functions at `a = phi(xi)` for `xi` on
/// the rays at angles `0` and `pi` with `1 - |xi| = 2^(-j/2)`, `j <= 2 depth`,
/// plus `a = phi(xi)` for each anchor `xi`.
pub fn probe_family(
    op: &OperatorSpec,
    p: f64,
    w: &RadialWeight,
    gamma: f64,
    depth: u32,
    anchors: &[Complex64],
) -> Result<Vec<AnalyticFunction>> {
    let mut fam = vec![
        AnalyticFunction::constant(1.0),
        AnalyticFunction::monomial(1),
        AnalyticFunction::monomial(2),
    ];
    let mut xis: Vec<Complex64> = Vec::new();
    for angle in [0.0, PI] {
        for j in 0..=(2 * depth) {
            xis.push(Complex64::from_polar(1.0 - (-(j as f64) / 2.0).exp2(), angle));
        }
    }
    xis.extend_from_slice(anchors);
    for xi in xis {
        let a = op.phi.apply_checked(xi)?;
        let Ok(a) = DiscPoint::from_complex(a) else {
            continue;
        };
        match test_function(a, gamma, p, w) {
            Ok(f) => fam.push(f),
            Err(Error::DegenerateBasepoint { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(fam)
}

// ---------------------------------------------------------------------------
// kernel exponent verification

/// Outcome of the kernel-integral check for a candidate exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaVerification {
    pub passed: bool,
    pub worst_c: f64,
    pub worst_c_coarse: f64,
    pub drift: f64,
    pub boundary_growth: f64,
    /// `(|a|, ratio at level L, ratio at level L + 2)`.
    pub ratios: Vec<(f64, f64, f64)>,
    pub diagnostic: Option<String>,
}

/// Allowed relative drift of the worst constant under refinement.
pub const GAMMA_DRIFT: f64 = 0.10;

/// `|a| = 1 - 2^(-j/2)` for `j = 0..=19` and `|a| = 0.999`.
pub fn gamma_basepoints() -> Vec<DiscPoint> {
    let mut out: Vec<DiscPoint> = (0..=19)
        .map(|j| DiscPoint::new_unchecked(Complex64::new(1.0 - (-(j as f64) / 2.0).exp2(), 0.0)))
        .collect();
    out.push(DiscPoint::new_unchecked(Complex64::new(0.999, 0.0)));
    out
}

/// `(1/pi) int_0^pi (d^2 + 4x sin^2(theta/2))^(-lambda) dtheta` with
/// `d = 1 - x`, i.e. the circle mean of `|1 - x e^(i theta)|^(-2 lambda)`.
pub fn circle_mean_kernel(x: f64, d: f64, lambda: f64) -> f64 {
    let rule = gl16();
    let f = |theta: f64| {
        let s = (0.5 * theta).sin();
        (d * d + 4.0 * x * s * s).powf(-lambda)
    };
    let mut edges = vec![0.0];
    let mut e = (d / 16.0).min(PI);
    while e < PI {
        edges.push(e);
        e *= 2.0;
    }
    edges.push(PI);
    let mut acc = CompensatedSum::new();
    for pair in edges.windows(2) {
        acc.add(rule.integrate(pair[0], pair[1], f));
    }
    acc.value() / PI
}

/// `int omega |1 - conj(a) z|^(-gamma p) dA` on the radial rings of `grid`
/// with exact circle means.
fn kernel_integral(w: &RadialWeight, a: DiscPoint, exponent: f64, grid: &QuadratureGrid) -> f64 {
    let masses = grid.weight_masses(w);
    let (m, t_a) = (a.modulus(), a.gap());
    let mut acc = CompensatedSum::new();
    for (ring, mass) in grid.rings().iter().zip(masses) {
        let x = m * ring.radius;
        let d = t_a + ring.gap - t_a * ring.gap;
        acc.add(mass * ring.count as f64 * circle_mean_kernel(x, d, 0.5 * exponent));
    }
    acc.value()
}

/// Checks `int omega |1 - conj(a) z|^(-gamma p) dA <= C omega_hat(a) / (1-|a|)^(gamma p - 1)`
/// on the basepoints at grid levels `L` and `L + 2`.
///
/// Passes when every ratio is finite, the worst constant drifts by less than
/// 10% under refinement, and the ratio at the deepest basepoint exceeds the
/// ratio at four times its gap by less than 25%.
pub fn verify_gamma(
    w: &RadialWeight,
    p: f64,
    gamma: f64,
    basepoints: &[DiscPoint],
    grid: &QuadratureGrid,
) -> Result<GammaVerification> {
    if !(p > 0.0 && gamma > 0.0) {
        return Err(Error::domain(format!("verify_gamma needs gamma, p > 0 (got {gamma}, {p})")));
    }
    if basepoints.is_empty() {
        return Err(Error::domain("verify_gamma needs basepoints"));
    }
    let exponent = gamma * p;
    let fine_grid = grid.refined(TAIL_STEP_LEVELS)?;
    let ratio = |a: &DiscPoint, g: &QuadratureGrid| {
        let lhs = kernel_integral(w, *a, exponent, g);
        let t = a.gap();
        let rhs = w.omega_hat_gap(t) / t.powf(exponent - 1.0);
        lhs / rhs
    };
    let ratios: Vec<(f64, f64, f64)> = basepoints
        .par_iter()
        .map(|a| (a.modulus(), ratio(a, grid), ratio(a, &fine_grid)))
        .collect();
    let finite = ratios.iter().all(|(_, c, f)| c.is_finite() && f.is_finite());
    let worst_c_coarse = ratios.iter().map(|r| r.1).fold(0.0, f64::max);
    let worst_c = ratios.iter().map(|r| r.2).fold(0.0, f64::max);
    let drift = (worst_c - worst_c_coarse).abs() / worst_c.max(f64::MIN_POSITIVE);

    let deepest = ratios
        .iter()
        .copied()
        .fold(None, |acc: Option<(f64, f64, f64)>, r| match acc {
            Some(b) if b.0 >= r.0 => Some(b),
            _ => Some(r),
        })
        .expect("nonempty");
    let target_gap = 4.0 * (1.0 - deepest.0);
    let partner = ratios
        .iter()
        .copied()
        .filter(|r| r.0 < deepest.0)
        .min_by(|x, y| {
            ((1.0 - x.0).ln() - target_gap.ln())
                .abs()
                .total_cmp(&((1.0 - y.0).ln() - target_gap.ln()).abs())
        });
    let boundary_growth = partner.map_or(1.0, |r| deepest.2 / r.2);

    let mut diagnostic = None;
    if !finite {
        diagnostic = Some("kernel integral or ratio is not finite".to_string());
    } else if drift >= GAMMA_DRIFT {
        diagnostic = Some(format!("worst constant drifts by {:.1}% under refinement", 100.0 * drift));
    } else if boundary_growth >= 1.0 + DIVERGENCE_GROWTH {
        diagnostic = Some(format!("ratio still grows toward the boundary (factor {boundary_growth:.3})"));
    }
    Ok(GammaVerification {
        passed: diagnostic.is_none(),
        worst_c,
        worst_c_coarse,
        drift,
        boundary_growth,
        ratios,
        diagnostic,
    })
}

// ---------------------------------------------------------------------------
// point evaluation bound

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointEvaluationCheck {
    pub sup: f64,
    pub sup_refined: f64,
    pub relative_change: f64,
    pub finite: bool,
}

fn point_eval_sup(f: &AnalyticFunction, n: u32, p: f64, w: &RadialWeight, grid: &QuadratureGrid) -> Result<f64> {
    let norm = bergman_norm(f, p, w, grid)?;
    if !(norm > 0.0) {
        return Err(Error::domain("point evaluation check needs a nonzero function"));
    }
    let factor: Vec<f64> = grid
        .rings()
        .iter()
        .map(|r| w.carleson_mass_gap(r.radius, r.gap).powf(1.0 / p) * r.gap.powi(n as i32))
        .collect();
    let best = grid.max_over(|node| f.deriv_abs(n, node.z) * factor[node.ring]);
    Ok(best.map_or(0.0, |(v, _)| v) / norm)
}

/// `sup_z |f^(n)(z)| omega(S(z))^(1/p) (1 - |z|)^n / ||f||_{A^p_omega}` at
/// levels `L` and `L + 2`.
pub fn point_evaluation_check(
    f: &AnalyticFunction,
    n: u32,
    p: f64,
    w: &RadialWeight,
    grid: &QuadratureGrid,
) -> Result<PointEvaluationCheck> {
    let sup = point_eval_sup(f, n, p, w, grid)?;
    let sup_refined = point_eval_sup(f, n, p, w, &grid.refined(TAIL_STEP_LEVELS)?)?;
    let relative_change = (sup_refined - sup).abs() / sup_refined.max(f64::MIN_POSITIVE);
    Ok(PointEvaluationCheck {
        sup,
        sup_refined,
        relative_change,
        finite: sup.is_finite() && sup_refined.is_finite(),
    })
}
