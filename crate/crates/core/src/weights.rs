//! Radial weights, their tail integrals and doubling-class diagnostics.
//!
//! Everything is computed in the gap variable `t = 1 - r`, so that points
//! very close to the boundary keep full relative precision. The tail integral
//! `omega_hat(r) = int_r^1 omega` is cached on the geometric mesh
//! `t_j = 2^(-j/8)`; doubling behaviour lives on dyadic scales, and eight
//! cells per octave keep a 16-point Gauss rule exact to rounding for the
//! smooth weights in use.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::criteria::{self, GammaVerification};
use crate::error::{Error, Result};
use crate::geometry::{CarlesonConvention, CarlesonSquare, DiscPoint, Region, Tent};
use crate::measures::{DiscMeasure, QuadratureGrid};
use crate::quad::gl16;

/// Cells per octave of the tail-integral cache.
pub const CELLS_PER_OCTAVE: usize = 8;
/// Octaves covered by the cache; below `2^-64` the tail is extrapolated.
pub const CACHE_OCTAVES: usize = 64;
/// Tail integrals below this are treated as underflowed.
pub const UNDERFLOW_FLOOR: f64 = 1e-300;

const CACHE_CELLS: usize = CELLS_PER_OCTAVE * CACHE_OCTAVES;

/// Serializable description of a weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightSpec {
    /// `(1 - r)^alpha`.
    Power { alpha: f64 },
    /// `(1 - r)^alpha (log(e / (1 - r)))^b`.
    LogPower { alpha: f64, b: f64 },
    /// `exp(-c / (1 - r))`, not doubling.
    Exponential {
        #[serde(default = "one")]
        c: f64,
    },
    /// Piecewise-linear interpolation of `(r, w)` samples.
    Table { r: Vec<f64>, w: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

pub type WeightFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum WeightKind {
    Power { alpha: f64 },
    LogPower { alpha: f64, b: f64 },
    Exponential { c: f64 },
    Table { r: Vec<f64>, w: Vec<f64> },
    Tilde(RadialWeight),
    Custom(WeightFn),
}

impl WeightKind {
    #[inline]
    fn density_gap(&self, t: f64) -> f64 {
        match self {
            WeightKind::Power { alpha } => {
                if *alpha == 0.0 {
                    1.0
                } else {
                    t.powf(*alpha)
                }
            }
            WeightKind::LogPower { alpha, b } => t.powf(*alpha) * (1.0 - t.ln()).powf(*b),
            WeightKind::Exponential { c } => (-c / t).exp(),
            WeightKind::Table { r, w } => interpolate(r, w, 1.0 - t),
            WeightKind::Tilde(parent) => parent.omega_hat_gap(t) / t,
            WeightKind::Custom(f) => f(1.0 - t),
        }
    }
}

fn interpolate(r: &[f64], w: &[f64], s: f64) -> f64 {
    if s <= r[0] {
        return w[0];
    }
    let last = r.len() - 1;
    if s >= r[last] {
        return w[last];
    }
    let i = r.partition_point(|&x| x <= s) - 1;
    let f = (s - r[i]) / (r[i + 1] - r[i]);
    w[i] + f * (w[i + 1] - w[i])
}

#[derive(Debug)]
struct HatCache {
    /// `hat0[j] = int_0^{t_j} omega(tau) dtau`, i.e. `omega_hat` at gap `t_j`.
    hat0: Vec<f64>,
    /// `hat1[j] = int_0^{t_j} tau omega(tau) dtau`.
    hat1: Vec<f64>,
    tail_exp0: f64,
    tail_exp1: f64,
}

/// A radial weight with its cached tail integrals. Cheap to clone.
#[derive(Clone)]
pub struct RadialWeight {
    name: Arc<str>,
    kind: Arc<WeightKind>,
    cache: Arc<HatCache>,
}

impl fmt::Debug for RadialWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RadialWeight")
            .field("name", &self.name)
            .field("omega_hat_0", &self.cache.hat0[0])
            .finish()
    }
}

#[inline]
fn mesh_gap(j: usize) -> f64 {
    (-(j as f64) / CELLS_PER_OCTAVE as f64).exp2()
}

impl RadialWeight {
    /// `(1 - r)^alpha`, integrable for `alpha > -1`.
    pub fn power(alpha: f64) -> Result<Self> {
        Self::build(format!("power(alpha={alpha})"), WeightKind::Power { alpha })
    }

    pub fn log_power(alpha: f64, b: f64) -> Result<Self> {
        Self::build(
            format!("log_power(alpha={alpha}, b={b})"),
            WeightKind::LogPower { alpha, b },
        )
    }

    pub fn exponential(c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::domain("exponential weight needs c > 0"));
        }
        Self::build(format!("exponential(c={c})"), WeightKind::Exponential { c })
    }

    pub fn table(r: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        if r.len() < 2 || r.len() != w.len() {
            return Err(Error::Config(
                "table weight needs matching r and w arrays with at least two entries".into(),
            ));
        }
        if r.windows(2).any(|p| p[1] <= p[0]) || r[0] < 0.0 || r[r.len() - 1] > 1.0 {
            return Err(Error::Config(
                "table weight radii must increase strictly within [0, 1]".into(),
            ));
        }
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("table weight values must be finite and nonnegative".into()));
        }
        Self::build("table".to_string(), WeightKind::Table { r, w })
    }

    /// Weight from an arbitrary density `r -> omega(r)` on `[0, 1)`.
    pub fn from_fn(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        Self::build(name.into(), WeightKind::Custom(Arc::new(f)))
    }

    pub fn from_spec(spec: &WeightSpec) -> Result<Self> {
        match spec {
            WeightSpec::Power { alpha } => Self::power(*alpha),
            WeightSpec::LogPower { alpha, b } => Self::log_power(*alpha, *b),
            WeightSpec::Exponential { c } => Self::exponential(*c),
            WeightSpec::Table { r, w } => Self::table(r.clone(), w.clone()),
        }
    }

    /// The weight `omega_tilde(r) = omega_hat(r) / (1 - r)`.
    pub fn tilde(&self) -> Result<Self> {
        Self::build(format!("tilde({})", self.name), WeightKind::Tilde(self.clone()))
    }

    fn build(name: String, kind: WeightKind) -> Result<Self> {
        let rule = gl16();
        let mut c0 = vec![0.0; CACHE_CELLS];
        let mut c1 = vec![0.0; CACHE_CELLS];
        let mut bad: Option<(f64, f64)> = None;
        for j in 0..CACHE_CELLS {
            let (hi, lo) = (mesh_gap(j), mesh_gap(j + 1));
            let mut a0 = 0.0;
            let mut a1 = 0.0;
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                let t = mid + half * x;
                let v = kind.density_gap(t);
                if !(v.is_finite() && v >= 0.0) && bad.is_none() {
                    bad = Some((1.0 - t, v));
                }
                a0 += w * v;
                a1 += w * v * t;
            }
            c0[j] = a0 * half;
            c1[j] = a1 * half;
        }
        if let Some((r, v)) = bad {
            return Err(Error::domain(format!(
                "weight `{name}` has invalid value {v} at r = {r}"
            )));
        }
        let (tail0, tail_exp0) = extrapolate_tail(&name, &c0)?;
        let (tail1, tail_exp1) = extrapolate_tail(&name, &c1)?;
        let mut hat0 = vec![0.0; CACHE_CELLS + 1];
        let mut hat1 = vec![0.0; CACHE_CELLS + 1];
        hat0[CACHE_CELLS] = tail0;
        hat1[CACHE_CELLS] = tail1;
        for j in (0..CACHE_CELLS).rev() {
            hat0[j] = hat0[j + 1] + c0[j];
            hat1[j] = hat1[j + 1] + c1[j];
        }
        if !(hat0[0] > 0.0 && hat0[0].is_finite()) {
            return Err(Error::Integrability {
                weight: name,
                detail: format!("omega_hat(0) = {} is not finite and positive", hat0[0]),
            });
        }
        Ok(RadialWeight {
            name: name.into(),
            kind: Arc::new(kind),
            cache: Arc::new(HatCache {
                hat0,
                hat1,
                tail_exp0,
                tail_exp1,
            }),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// `omega(r)` for `r` in `[0, 1)`.
    #[inline]
    pub fn density(&self, r: f64) -> f64 {
        self.kind.density_gap(1.0 - r)
    }

    /// `omega` at gap `t = 1 - r`.
    #[inline]
    pub fn density_gap(&self, t: f64) -> f64 {
        self.kind.density_gap(t)
    }

    /// `omega_hat(r) = int_r^1 omega(s) ds`.
    pub fn omega_hat(&self, r: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::domain(format!("omega_hat needs r in [0, 1], got {r}")));
        }
        Ok(self.omega_hat_gap(1.0 - r))
    }

    /// `omega_hat` at gap `t`, i.e. `int_0^t omega(1 - tau) dtau`.
    pub fn omega_hat_gap(&self, t: f64) -> f64 {
        self.cumulative(t, &self.cache.hat0, self.cache.tail_exp0, |tau| {
            self.kind.density_gap(tau)
        })
    }

    /// `int_0^t tau omega(1 - tau) dtau`.
    pub fn gap_moment_gap(&self, t: f64) -> f64 {
        self.cumulative(t, &self.cache.hat1, self.cache.tail_exp1, |tau| {
            tau * self.kind.density_gap(tau)
        })
    }

    fn cumulative(&self, t: f64, table: &[f64], tail_exp: f64, f: impl Fn(f64) -> f64) -> f64 {
        if !(t > 0.0) {
            return 0.0;
        }
        if t >= 1.0 {
            return table[0];
        }
        let mut j = (-(t.log2()) * CELLS_PER_OCTAVE as f64).floor() as usize;
        if j >= CACHE_CELLS {
            let last = table[CACHE_CELLS];
            if last == 0.0 {
                return 0.0;
            }
            return last * (t / mesh_gap(CACHE_CELLS)).powf(tail_exp);
        }
        while j > 0 && mesh_gap(j) < t {
            j -= 1;
        }
        while mesh_gap(j + 1) > t {
            j += 1;
        }
        let lo = mesh_gap(j + 1);
        if t == mesh_gap(j) {
            return table[j];
        }
        if t == lo {
            return table[j + 1];
        }
        table[j + 1] + gl16().integrate(lo, t, f)
    }

    /// `omega_tilde(r) = omega_hat(r) / (1 - r)`.
    pub fn omega_tilde(&self, r: f64) -> Result<f64> {
        if !(r < 1.0) || r < 0.0 {
            return Err(Error::domain(format!("omega_tilde needs r in [0, 1), got {r}")));
        }
        Ok(self.omega_tilde_gap(1.0 - r))
    }

    pub fn omega_tilde_gap(&self, t: f64) -> f64 {
        self.omega_hat_gap(t) / t
    }

    /// Moment `omega_x = int_0^1 r^x omega(r) dr`.
    pub fn moment(&self, x: f64) -> Result<f64> {
        if !(x >= 1.0) {
            return Err(Error::domain(format!("moment needs x >= 1, got {x}")));
        }
        let rule = gl16();
        let mut acc = self.cache.hat0[CACHE_CELLS];
        for j in (0..CACHE_CELLS).rev() {
            acc += rule.integrate(mesh_gap(j + 1), mesh_gap(j), |t| {
                (x * (-t).ln_1p()).exp() * self.kind.density_gap(t)
            });
        }
        Ok(acc)
    }

    /// `int s omega(s) ds` over the gap interval `[t_lo, t_hi]`, i.e. over
    /// `s in [1 - t_hi, 1 - t_lo]`.
    pub fn radial_mass(&self, t_lo: f64, t_hi: f64) -> f64 {
        if !(t_hi > t_lo) {
            return 0.0;
        }
        if t_lo <= 0.0 {
            return self.omega_hat_gap(t_hi) - self.gap_moment_gap(t_hi);
        }
        // Split into octaves so a single Gauss rule stays accurate.
        let mut acc = 0.0;
        let mut hi = t_hi;
        while hi > t_lo {
            let lo = (0.5 * hi).max(t_lo);
            acc += gl16().integrate(lo, hi, |t| (1.0 - t) * self.kind.density_gap(t));
            hi = lo;
        }
        acc
    }

    /// `int_{1-t}^1 s omega(s) ds`.
    pub fn first_moment_tail_gap(&self, t: f64) -> f64 {
        self.omega_hat_gap(t) - self.gap_moment_gap(t)
    }

    /// `omega(D) = 2 int_0^1 s omega(s) ds`.
    pub fn total_mass(&self) -> f64 {
        2.0 * (self.cache.hat0[0] - self.cache.hat1[0])
    }

    /// `omega(S(z))` in closed radial form.
    pub fn carleson_mass(&self, square: &CarlesonSquare) -> f64 {
        if square.is_whole_disc() {
            return self.total_mass();
        }
        let width = (2.0 * square.angular_halfwidth()).min(2.0 * PI);
        width / (2.0 * PI) * 2.0 * self.first_moment_tail_gap(square.radial_lower_gap())
    }

    /// `omega(S(z))` for the standard square at a point given by modulus and
    /// gap; avoids recomputing the gap from coordinates.
    pub fn carleson_mass_gap(&self, modulus: f64, gap: f64) -> f64 {
        if modulus == 0.0 {
            return self.total_mass();
        }
        gap / PI * self.first_moment_tail_gap(gap)
    }

    pub fn carleson_mass_at(&self, z: DiscPoint) -> f64 {
        self.carleson_mass(&CarlesonSquare {
            base: z,
            convention: CarlesonConvention::Standard,
        })
    }

    /// `omega(T(z)) = (1/pi) int_{|z|}^1 (s - |z|) omega(s) ds`.
    pub fn tent_mass(&self, tent: &Tent) -> f64 {
        let t = tent.vertex.gap();
        (t * self.omega_hat_gap(t) - self.gap_moment_gap(t)) / PI
    }

    /// Empirical doubling-class diagnostics on `mesh + 1` points `r_j = 1 - 2^(-j/8)`.
    pub fn classify(&self, mesh: usize) -> Result<WeightClassReport> {
        classify(self, mesh)
    }
}

/// `int_region omega dA / pi`. Polar regions reduce to one-dimensional
/// integrals of the tail; pseudohyperbolic discs use a local polar rule.
pub fn weighted_area(w: &RadialWeight, region: &Region, grid: &Arc<QuadratureGrid>) -> f64 {
    DiscMeasure::radial(w.clone(), grid.clone()).measure_of(region)
}

/// Geometric extrapolation of the cell sums below the cache.
fn extrapolate_tail(name: &str, cells: &[f64]) -> Result<(f64, f64)> {
    let n = cells.len();
    let (a, b) = (cells[n - 2], cells[n - 1]);
    if b == 0.0 {
        return Ok((0.0, 0.0));
    }
    let ratio = b / a;
    if !(ratio < 1.0 - 1e-12) || !ratio.is_finite() {
        return Err(Error::Integrability {
            weight: name.to_string(),
            detail: format!("tail cell ratio {ratio} near r = 1 does not decay"),
        });
    }
    let tail = b * ratio / (1.0 - ratio);
    let exponent = ratio.ln() / (-(1.0 / CELLS_PER_OCTAVE as f64) * std::f64::consts::LN_2);
    Ok((tail, exponent))
}

// ---------------------------------------------------------------------------
// classification

/// Relative change under mesh doubling below which a constant counts as stable.
/// Largest growth of the upper doubling constant allowed when the mesh goes
/// deeper, or over its deepest octave.
pub const DHAT_GROWTH: f64 = 0.25;
pub const STABILITY_TOLERANCE: f64 = 0.02;
/// A lower-doubling or moment constant must exceed `1 + MARGIN`.
pub const DCHECK_MARGIN: f64 = 0.05;
pub const DCHECK_K: [f64; 4] = [2.0, 4.0, 8.0, 16.0];
pub const MOMENT_K: [f64; 3] = [2.0, 4.0, 8.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassFlags {
    pub dhat: bool,
    pub dcheck: bool,
    pub d: bool,
    pub m: bool,
}

/// Exponents and constant of the two-sided ratio bound
/// `(1/C) x^alpha <= omega_hat(r) / omega_hat(t) <= C x^beta`, `x = (1-r)/(1-t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FittedExponents {
    pub alpha: f64,
    pub beta: f64,
    pub constant: f64,
    /// Least-squares slope of `log omega_hat` against `log(1 - r)`.
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightClassReport {
    pub weight: String,
    pub dhat_constant: f64,
    pub dhat_constant_refined: f64,
    /// `(K, C)` for the smallest admissible `K`.
    pub dcheck_pair: Option<(f64, f64)>,
    pub dcheck_candidates: Vec<(f64, f64)>,
    pub exponents: Option<FittedExponents>,
    pub moment_pair: Option<(f64, f64)>,
    pub flags: ClassFlags,
    pub mesh_resolution: usize,
    pub truncated: bool,
    /// Smallest gap retained after underflow truncation.
    pub truncated_at_gap: Option<f64>,
}

struct MeshStats {
    dhat: f64,
    /// `dhat` without the deepest valid octave.
    dhat_head: f64,
    dcheck: Vec<f64>,
    valid: Vec<usize>,
    truncated: bool,
}

fn mesh_stats(w: &RadialWeight, mesh: usize) -> MeshStats {
    let mut valid = Vec::new();
    let mut truncated = false;
    let mut dhat = 0.0f64;
    let mut local = Vec::new();
    let mut dcheck = vec![f64::INFINITY; DCHECK_K.len()];
    for j in 0..=mesh {
        let t = mesh_gap(j);
        let h = w.omega_hat_gap(t);
        let deepest = w.omega_hat_gap(t / 16.0);
        if !(deepest >= UNDERFLOW_FLOOR) {
            truncated = true;
            continue;
        }
        valid.push(j);
        let d = h / w.omega_hat_gap(0.5 * t);
        local.push(d);
        dhat = dhat.max(d);
        for (slot, k) in dcheck.iter_mut().zip(DCHECK_K) {
            *slot = slot.min(h / w.omega_hat_gap(t / k));
        }
    }
    let head = local.len().saturating_sub(CELLS_PER_OCTAVE);
    let dhat_head = local[..head].iter().fold(0.0f64, |a, &b| a.max(b));
    MeshStats {
        dhat,
        dhat_head,
        dcheck,
        valid,
        truncated,
    }
}

fn relative_change(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (b - a).abs() / a.abs().max(b.abs())
}

fn classify(w: &RadialWeight, mesh: usize) -> Result<WeightClassReport> {
    if mesh < 64 {
        return Err(Error::domain(format!("classification mesh {mesh} < 64")));
    }
    let coarse = mesh_stats(w, mesh);
    let fine = mesh_stats(w, 2 * mesh);

    let dhat_ok = coarse.dhat.is_finite()
        && fine.dhat.is_finite()
        && !coarse.valid.is_empty()
        && fine.dhat <= (1.0 + DHAT_GROWTH) * coarse.dhat
        && fine.dhat <= (1.0 + DHAT_GROWTH) * fine.dhat_head;

    let mut candidates = Vec::new();
    let mut dcheck_pair = None;
    for (i, k) in DCHECK_K.iter().enumerate() {
        let (c, cf) = (coarse.dcheck[i], fine.dcheck[i]);
        candidates.push((*k, c));
        let ok = c.is_finite()
            && cf.is_finite()
            && c > 1.0 + DCHECK_MARGIN
            && relative_change(c, cf) < STABILITY_TOLERANCE;
        if ok && dcheck_pair.is_none() {
            dcheck_pair = Some((*k, c));
        }
    }

    let exponents = fit_exponents(w, &coarse.valid);

    let moment_pair = moment_constant(w)?;
    let flags = ClassFlags {
        dhat: dhat_ok,
        dcheck: dcheck_pair.is_some(),
        d: dhat_ok && dcheck_pair.is_some(),
        m: moment_pair.is_some(),
    };
    let truncated = coarse.truncated || fine.truncated;
    let truncated_at_gap = if truncated {
        coarse.valid.last().map(|&j| mesh_gap(j))
    } else {
        None
    };
    Ok(WeightClassReport {
        weight: w.name().to_string(),
        dhat_constant: coarse.dhat,
        dhat_constant_refined: fine.dhat,
        dcheck_pair,
        dcheck_candidates: candidates,
        exponents,
        moment_pair,
        flags,
        mesh_resolution: mesh,
        truncated,
        truncated_at_gap,
    })
}

/// Envelope of the local dyadic exponents `log2(omega_hat(t) / omega_hat(t/2))`
/// with the least-squares slope alongside, and the smallest `C` for which the
/// two-sided bound holds on every mesh pair.
fn fit_exponents(w: &RadialWeight, valid: &[usize]) -> Option<FittedExponents> {
    if valid.len() < 2 {
        return None;
    }
    let gaps: Vec<f64> = valid.iter().map(|&j| mesh_gap(j)).collect();
    let hats: Vec<f64> = gaps.iter().map(|&t| w.omega_hat_gap(t)).collect();
    let mut alpha = f64::INFINITY;
    let mut beta = f64::NEG_INFINITY;
    for &t in &gaps {
        let e = (w.omega_hat_gap(t) / w.omega_hat_gap(0.5 * t)).log2();
        alpha = alpha.min(e);
        beta = beta.max(e);
    }
    if !(alpha.is_finite() && beta.is_finite()) {
        return None;
    }

    let n = gaps.len() as f64;
    let xs: Vec<f64> = gaps.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = hats.iter().map(|h| h.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;

    let mut constant = 1.0f64;
    for i in 0..gaps.len() {
        for j in i..gaps.len() {
            let ratio = hats[i] / hats[j];
            let x = gaps[i] / gaps[j];
            constant = constant.max(ratio / x.powf(beta)).max(x.powf(alpha) / ratio);
        }
    }
    Some(FittedExponents {
        alpha,
        beta,
        constant,
        slope,
    })
}

fn moment_constant(w: &RadialWeight) -> Result<Option<(f64, f64)>> {
    let xs: Vec<f64> = (0..=10).map(|k| (1u32 << k) as f64).collect();
    let moments: Vec<f64> = xs.iter().map(|&x| w.moment(x)).collect::<Result<_>>()?;
    for k in MOMENT_K {
        let step = k.log2() as usize;
        let c = (0..moments.len() - step)
            .map(|i| moments[i] / moments[i + step])
            .fold(f64::INFINITY, f64::min);
        if c.is_finite() && c > 1.0 + DCHECK_MARGIN {
            return Ok(Some((k, c)));
        }
    }
    Ok(None)
}

// ---------------------------------------------------------------------------
// gamma selection

/// How `gamma_for` checks its candidate.
#[derive(Debug, Clone)]
pub struct GammaCheck {
    pub basepoints: Vec<DiscPoint>,
    pub grid: QuadratureGrid,
}

impl GammaCheck {
    /// `|a| = 1 - 2^(-j/2)` for `j = 0..=19` plus `|a| = 0.999`, on a level-16 grid.
    pub fn standard() -> Result<Self> {
        Ok(GammaCheck {
            basepoints: criteria::gamma_basepoints(),
            grid: QuadratureGrid::new(16)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaChoice {
    pub gamma: f64,
    pub verified: bool,
    pub attempts: u32,
    pub verification: GammaVerification,
}

/// Exponent of the conformal test functions.
///
/// Starts at `2 (beta + 1) / p`, where `beta` is the fitted upper exponent of
/// `omega_hat`; for `(1 - r)^alpha` this is the classical `2 (alpha + 2) / p`.
/// A candidate that fails verification is multiplied by 1.5, at most three times.
pub fn gamma_for(w: &RadialWeight, p: f64, report: &WeightClassReport) -> Result<GammaChoice> {
    gamma_for_with(w, p, report, &GammaCheck::standard()?)
}

pub fn gamma_for_with(
    w: &RadialWeight,
    p: f64,
    report: &WeightClassReport,
    check: &GammaCheck,
) -> Result<GammaChoice> {
    if !(p > 0.0) {
        return Err(Error::domain(format!("gamma_for needs p > 0, got {p}")));
    }
    if !report.flags.d {
        return Err(Error::domain(format!(
            "gamma_for needs a doubling weight; `{}` was not classified into D",
            report.weight
        )));
    }
    let beta = report
        .exponents
        .ok_or_else(|| Error::domain("exponent fit missing from the class report"))?
        .beta;
    let mut gamma = 2.0 * (beta + 1.0) / p;
    let mut attempts = 0;
    loop {
        attempts += 1;
        let verification = criteria::verify_gamma(w, p, gamma, &check.basepoints, &check.grid)?;
        if verification.passed || attempts > 3 {
            return Ok(GammaChoice {
                gamma,
                verified: verification.passed,
                attempts,
                verification,
            });
        }
        gamma *= 1.5;
    }
}
