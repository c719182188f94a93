//! Disc geometry: pseudohyperbolic distance, pseudohyperbolic discs, Carleson
//! squares, tents, non-tangential regions and r-lattices.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest lattice the sampler will build.
pub const MAX_LATTICE_POINTS: u64 = 10_000_000;

/// A point of the open unit disc.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct DiscPoint(Complex64);

impl DiscPoint {
    pub const ORIGIN: DiscPoint = DiscPoint(Complex64 { re: 0.0, im: 0.0 });

    pub fn new(re: f64, im: f64) -> Result<Self> {
        Self::from_complex(Complex64::new(re, im))
    }

    pub fn from_complex(z: Complex64) -> Result<Self> {
        if !(z.re.is_finite() && z.im.is_finite()) || z.norm_sqr() >= 1.0 {
            return Err(Error::domain(format!(
                "point ({}, {}) is not inside the unit disc",
                z.re, z.im
            )));
        }
        Ok(DiscPoint(z))
    }

    pub fn from_polar(radius: f64, angle: f64) -> Result<Self> {
        Self::from_complex(Complex64::from_polar(radius, angle))
    }

    /// Wraps a value already known to lie in the disc.
    #[inline]
    pub(crate) fn new_unchecked(z: Complex64) -> Self {
        debug_assert!(z.norm_sqr() < 1.0);
        DiscPoint(z)
    }

    #[inline]
    pub fn z(self) -> Complex64 {
        self.0
    }

    #[inline]
    pub fn re(self) -> f64 {
        self.0.re
    }

    #[inline]
    pub fn im(self) -> f64 {
        self.0.im
    }

    #[inline]
    pub fn modulus(self) -> f64 {
        self.0.norm()
    }

    /// Distance to the boundary, `1 - |z|`.
    #[inline]
    pub fn gap(self) -> f64 {
        1.0 - self.0.norm()
    }

    /// Argument in `(-pi, pi]`.
    #[inline]
    pub fn arg(self) -> f64 {
        self.0.arg()
    }
}

impl TryFrom<[f64; 2]> for DiscPoint {
    type Error = Error;
    fn try_from(v: [f64; 2]) -> Result<Self> {
        DiscPoint::new(v[0], v[1])
    }
}

impl From<DiscPoint> for [f64; 2] {
    fn from(p: DiscPoint) -> Self {
        [p.0.re, p.0.im]
    }
}

/// Signed angular difference `a - b` reduced to `(-pi, pi]`.
#[inline]
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let mut d = (a - b) % (2.0 * PI);
    if d > PI {
        d -= 2.0 * PI;
    } else if d <= -PI {
        d += 2.0 * PI;
    }
    d
}

/// Pseudohyperbolic distance `|(a - b) / (1 - conj(a) b)|`.
#[inline]
pub fn rho(a: DiscPoint, b: DiscPoint) -> f64 {
    rho_c(a.0, b.0)
}

#[inline]
pub(crate) fn rho_c(a: Complex64, b: Complex64) -> f64 {
    let num = a - b;
    let den = Complex64::new(1.0, 0.0) - a.conj() * b;
    (num.norm_sqr() / den.norm_sqr()).sqrt()
}

/// The disc automorphism `z -> (z - c) / (1 - conj(c) z)`.
#[inline]
pub fn moebius(c: Complex64, z: Complex64) -> Complex64 {
    (z - c) / (Complex64::new(1.0, 0.0) - c.conj() * z)
}

/// Pseudohyperbolic disc `{z : rho(a, z) < r}` together with its Euclidean
/// description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoDisc {
    pub center: DiscPoint,
    pub radius: f64,
    pub euclid_center: DiscPoint,
    pub euclid_radius: f64,
}

impl PseudoDisc {
    pub fn contains(&self, z: Complex64) -> bool {
        z.norm_sqr() < 1.0 && rho_c(self.center.0, z) < self.radius
    }
}

pub fn pseudo_disc(a: DiscPoint, r: f64) -> Result<PseudoDisc> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::domain(format!(
            "pseudohyperbolic radius {r} outside (0, 1)"
        )));
    }
    let a2 = a.0.norm_sqr();
    let r2 = r * r;
    let den = 1.0 - r2 * a2;
    let euclid_center = DiscPoint::new_unchecked(a.0 * ((1.0 - r2) / den));
    let euclid_radius = (1.0 - a2) * r / den;
    Ok(PseudoDisc {
        center: a,
        radius: r,
        euclid_center,
        euclid_radius,
    })
}

/// Which radial bound a Carleson square uses.
///
/// `Standard` is `|z| <= |zeta|`. `Literal` is `1 - |z| < |zeta|`, kept for
/// comparison runs only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CarlesonConvention {
    #[default]
    Standard,
    Literal,
}

/// Carleson square `S(z)`; `S(0)` is the whole disc.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarlesonSquare {
    pub base: DiscPoint,
    pub convention: CarlesonConvention,
}

impl CarlesonSquare {
    pub fn is_whole_disc(&self) -> bool {
        self.base.0 == Complex64::new(0.0, 0.0)
    }

    /// Inner radius of the radial side.
    pub fn radial_lower(&self) -> f64 {
        match self.convention {
            CarlesonConvention::Standard => self.base.modulus(),
            CarlesonConvention::Literal => self.base.gap(),
        }
    }

    /// Gap `1 - inner radius`, computed without cancellation.
    pub fn radial_lower_gap(&self) -> f64 {
        match self.convention {
            CarlesonConvention::Standard => self.base.gap(),
            CarlesonConvention::Literal => self.base.modulus(),
        }
    }

    pub fn angular_halfwidth(&self) -> f64 {
        if self.is_whole_disc() {
            PI
        } else {
            0.5 * self.base.gap()
        }
    }

    pub fn center_angle(&self) -> f64 {
        self.base.arg()
    }

    pub fn contains(&self, zeta: Complex64) -> bool {
        if zeta.norm_sqr() >= 1.0 {
            return false;
        }
        if self.is_whole_disc() {
            return true;
        }
        let m = zeta.norm();
        let radial_ok = match self.convention {
            CarlesonConvention::Standard => m >= self.base.modulus(),
            CarlesonConvention::Literal => m > self.base.gap(),
        };
        if !radial_ok || m == 0.0 {
            return false;
        }
        let d = angle_diff(zeta.arg(), self.center_angle());
        let hw = self.angular_halfwidth();
        -hw <= d && d < hw
    }
}

pub fn carleson_square(z: DiscPoint) -> CarlesonSquare {
    CarlesonSquare {
        base: z,
        convention: CarlesonConvention::Standard,
    }
}

pub fn carleson_square_with(z: DiscPoint, convention: CarlesonConvention) -> CarlesonSquare {
    CarlesonSquare {
        base: z,
        convention,
    }
}

/// Tent `T(z) = {zeta : z in Gamma(zeta)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tent {
    pub vertex: DiscPoint,
}

impl Tent {
    /// Angular half-width of the tent on the circle `|zeta| = s`; zero for
    /// `s <= |z|`.
    pub fn halfwidth_at(&self, s: f64) -> f64 {
        let m = self.vertex.modulus();
        if s <= m {
            0.0
        } else {
            0.5 * (1.0 - m / s)
        }
    }

    pub fn contains(&self, zeta: Complex64) -> bool {
        if zeta.norm_sqr() >= 1.0 {
            return false;
        }
        let s = zeta.norm();
        let hw = self.halfwidth_at(s);
        hw > 0.0 && angle_diff(self.vertex.arg(), zeta.arg()).abs() < hw
    }
}

/// Non-tangential approach region `Gamma(z)` with vertex `z` in the closed
/// disc minus the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NtRegion {
    pub vertex: Complex64,
}

impl NtRegion {
    pub fn contains(&self, zeta: Complex64) -> bool {
        if zeta.norm_sqr() >= 1.0 {
            return false;
        }
        let r = self.vertex.norm();
        let hw = 0.5 * (1.0 - zeta.norm() / r);
        hw > 0.0 && angle_diff(self.vertex.arg(), zeta.arg()).abs() < hw
    }
}

pub fn tent(z: DiscPoint) -> Result<Tent> {
    if z.0 == Complex64::new(0.0, 0.0) {
        return Err(Error::domain("the tent T(z) is only defined for z != 0"));
    }
    Ok(Tent { vertex: z })
}

pub fn nt_region(z: Complex64) -> Result<NtRegion> {
    let m = z.norm();
    if !(m > 0.0 && m <= 1.0) {
        return Err(Error::domain(format!(
            "non-tangential region needs 0 < |z| <= 1, got {m}"
        )));
    }
    Ok(NtRegion { vertex: z })
}

/// Regions over which measures are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    WholeDisc,
    CarlesonSquare(CarlesonSquare),
    PseudoDisc(PseudoDisc),
    Tent(Tent),
    NtRegion(NtRegion),
    /// `inner <= |z| < outer`.
    Annulus { inner: f64, outer: f64 },
}

impl Region {
    pub fn contains(&self, z: Complex64) -> bool {
        match self {
            Region::WholeDisc => z.norm_sqr() < 1.0,
            Region::CarlesonSquare(s) => s.contains(z),
            Region::PseudoDisc(d) => d.contains(z),
            Region::Tent(t) => t.contains(z),
            Region::NtRegion(g) => g.contains(z),
            Region::Annulus { inner, outer } => {
                let m = z.norm();
                m >= *inner && m < *outer && m < 1.0
            }
        }
    }
}

/// One ring of an r-lattice: points `radius * exp(2 pi i j / count)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeRing {
    pub radius: f64,
    pub gap: f64,
    pub count: usize,
}

/// Dyadic-annulus r-lattice truncated at `1 - |z| >= 2^-depth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RLattice {
    pub r: f64,
    pub depth: u32,
    pub rings_per_octave: u32,
    pub rings: Vec<LatticeRing>,
}

impl RLattice {
    pub fn len(&self) -> usize {
        self.rings.iter().map(|r| r.count).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rings.is_empty()
    }

    pub fn points(&self) -> Vec<DiscPoint> {
        let mut out = Vec::with_capacity(self.len());
        for ring in &self.rings {
            for j in 0..ring.count {
                let theta = 2.0 * PI * j as f64 / ring.count as f64;
                out.push(DiscPoint::new_unchecked(Complex64::from_polar(
                    ring.radius,
                    theta,
                )));
            }
        }
        out
    }
}

/// r-lattice with the default depth of 12 dyadic annuli.
pub fn r_lattice(r: f64) -> Result<Vec<DiscPoint>> {
    Ok(build_r_lattice(r, 12)?.points())
}

/// Builds the lattice ring structure.
///
/// Rings sit at gaps `2^(-i/m)`; `m` is the smallest count for which
/// consecutive rings are at most `B = 0.95 artanh(r)` apart in hyperbolic
/// distance. On each ring the angular half-spacing is at most the angle at
/// which the distance along the ring reaches `B / 2`, so every point of the
/// truncated disc is within `tanh(B) < r` of a node.
pub fn build_r_lattice(r: f64, depth: u32) -> Result<RLattice> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::domain(format!("lattice radius {r} outside (0, 1)")));
    }
    if depth == 0 || depth > 50 {
        return Err(Error::domain(format!("lattice depth {depth} outside 1..=50")));
    }
    let budget = 0.95 * r.atanh();
    let radial_step = budget;
    let angular_step = 0.5 * budget;

    let mut m = 1u32;
    loop {
        let ok = (0..(m * depth)).all(|i| {
            let r0 = 1.0 - (-(i as f64) / m as f64).exp2();
            let r1 = 1.0 - (-((i + 1) as f64) / m as f64).exp2();
            ((r1 - r0) / (1.0 - r0 * r1)).atanh() <= radial_step
        });
        if ok {
            break;
        }
        m += 1;
        if m > 10_000 {
            return Err(Error::Resource {
                what: "lattice rings per octave",
                requested: m as u64,
                limit: 10_000,
            });
        }
    }

    let target = angular_step.tanh();
    let mut rings = Vec::with_capacity((m * depth + 1) as usize);
    let mut total: u64 = 0;
    for i in 0..=(m * depth) {
        let gap = (-(i as f64) / m as f64).exp2();
        let radius = 1.0 - gap;
        let count = ring_count(radius, target);
        total += count as u64;
        if total > MAX_LATTICE_POINTS {
            return Err(Error::Resource {
                what: "r-lattice points",
                requested: total,
                limit: MAX_LATTICE_POINTS,
            });
        }
        rings.push(LatticeRing { radius, gap, count });
    }
    Ok(RLattice {
        r,
        depth,
        rings_per_octave: m,
        rings,
    })
}

fn ring_count(radius: f64, target: f64) -> usize {
    if radius == 0.0 {
        return 1;
    }
    let along = |phi: f64| rho_c(Complex64::new(radius, 0.0), Complex64::from_polar(radius, phi));
    if along(PI) <= target {
        return 1;
    }
    let (mut lo, mut hi) = (0.0f64, PI);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if along(mid) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (PI / lo).ceil() as usize
}
