//! Quadrature grids on the disc, disc measures and weighted pushforwards.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{angle_diff, DiscPoint, Region};
use crate::quad::{gl16, CompensatedSum};
use crate::spaces::SelfMap;
use crate::weights::{RadialWeight, WeightSpec};

/// Radial subdivisions per dyadic annulus.
pub const RINGS_PER_ANNULUS: usize = 8;
/// Angular nodes on the outermost annulus.
pub const BASE_ANGLES: usize = 32;
pub const MAX_GRID_NODES: u64 = 100_000_000;
pub const MAX_GRID_LEVEL: u32 = 24;

const CHUNK: usize = 8192;

/// One ring of grid nodes: `count` equally spaced angles at a fixed radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRing {
    /// Gap interval `[t_lo, t_hi]` covered by the ring.
    pub t_lo: f64,
    pub t_hi: f64,
    pub radius: f64,
    pub gap: f64,
    pub count: usize,
    /// Normalized area of the ring divided by `count`.
    pub area_per_node: f64,
}

/// A quadrature node handed to integrands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub z: Complex64,
    pub gap: f64,
    pub ring: usize,
}

/// Boundary-refined polar grid.
///
/// Dyadic annulus `k` (gaps in `[2^-(k+1), 2^-k]`) is split into eight rings
/// with geometric edges `2^(-k - i/8)`, each carrying `32 * 2^k` angles. The
/// last ring covers `[0, 2^-L]` with `32 * 2^L` angles. Nodes sit at the area
/// centroid radius of their ring, so `|z|^2` integrates exactly.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    level: u32,
    rings: Vec<GridRing>,
    trig: OnceLock<Arc<Vec<(f64, f64)>>>,
}

fn edge_gap(e: usize) -> f64 {
    (-(e as f64) / RINGS_PER_ANNULUS as f64).exp2()
}

fn make_ring(t_lo: f64, t_hi: f64, count: usize) -> GridRing {
    let u = (t_lo + t_hi) - 0.5 * (t_lo * t_lo + t_hi * t_hi);
    let gap = u / (1.0 + (1.0 - u).sqrt());
    GridRing {
        t_lo,
        t_hi,
        radius: 1.0 - gap,
        gap,
        count,
        area_per_node: (t_hi - t_lo) * (2.0 - t_hi - t_lo) / count as f64,
    }
}

impl QuadratureGrid {
    pub fn new(level: u32) -> Result<Self> {
        if !(1..=MAX_GRID_LEVEL).contains(&level) {
            return Err(Error::domain(format!(
                "grid level {level} outside 1..={MAX_GRID_LEVEL}"
            )));
        }
        let nodes = Self::node_count_for(level);
        if nodes > MAX_GRID_NODES {
            return Err(Error::Resource {
                what: "quadrature nodes",
                requested: nodes,
                limit: MAX_GRID_NODES,
            });
        }
        let mut rings = Vec::with_capacity(level as usize * RINGS_PER_ANNULUS + 1);
        for k in 0..level as usize {
            let count = BASE_ANGLES << k;
            for i in 0..RINGS_PER_ANNULUS {
                let e = k * RINGS_PER_ANNULUS + i;
                rings.push(make_ring(edge_gap(e + 1), edge_gap(e), count));
            }
        }
        let max_count = BASE_ANGLES << level;
        rings.push(make_ring(0.0, edge_gap(level as usize * RINGS_PER_ANNULUS), max_count));
        Ok(QuadratureGrid {
            level,
            rings,
            trig: OnceLock::new(),
        })
    }

    /// Cosine and sine of every angle on the finest ring; built on first use.
    fn trig(&self) -> &[(f64, f64)] {
        self.trig.get_or_init(|| {
            let max_count = BASE_ANGLES << self.level;
            Arc::new(
                (0..max_count)
                    .map(|j| {
                        let (s, c) = (2.0 * PI * j as f64 / max_count as f64).sin_cos();
                        (c, s)
                    })
                    .collect(),
            )
        })
    }

    /// Node count of a level-`L` grid, without building it.
    pub fn node_count_for(level: u32) -> u64 {
        let per_annulus: u64 = (0..level as u64)
            .map(|k| RINGS_PER_ANNULUS as u64 * ((BASE_ANGLES as u64) << k))
            .sum();
        per_annulus + ((BASE_ANGLES as u64) << level)
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// The grid `extra` levels deeper.
    pub fn refined(&self, extra: u32) -> Result<Self> {
        Self::new(self.level + extra)
    }

    pub fn rings(&self) -> &[GridRing] {
        &self.rings
    }

    pub fn len(&self) -> usize {
        self.rings.iter().map(|r| r.count).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rings.is_empty()
    }

    /// Smallest node gap.
    pub fn innermost_gap(&self) -> f64 {
        self.rings.last().map_or(1.0, |r| r.gap)
    }

    #[inline]
    fn node(&self, ring: usize, j: usize) -> Node {
        let r = &self.rings[ring];
        let trig = self.trig();
        let stride = trig.len() / r.count;
        let (c, s) = trig[j * stride];
        Node {
            z: Complex64::new(r.radius * c, r.radius * s),
            gap: r.gap,
            ring,
        }
    }

    /// All nodes with their normalized area weights.
    pub fn nodes(&self) -> impl Iterator<Item = (DiscPoint, f64)> + '_ {
        self.rings.iter().enumerate().flat_map(move |(i, r)| {
            (0..r.count).map(move |j| (DiscPoint::new_unchecked(self.node(i, j).z), r.area_per_node))
        })
    }

    fn work_items(&self) -> Vec<(usize, Range<usize>)> {
        let mut items = Vec::new();
        for (i, r) in self.rings.iter().enumerate() {
            let mut start = 0;
            while start < r.count {
                let end = (start + CHUNK).min(r.count);
                items.push((i, start..end));
                start = end;
            }
        }
        items
    }

    /// Maps `f` over fixed chunks of nodes in parallel; results come back in
    /// grid order.
    pub fn map_chunks<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&mut dyn Iterator<Item = Node>) -> T + Sync,
    {
        self.work_items()
            .into_par_iter()
            .map(|(ring, range)| {
                let mut it = range.map(|j| self.node(ring, j));
                f(&mut it)
            })
            .collect()
    }

    /// `sum over nodes of masses[ring] * f(node)`, compensated and in a fixed order.
    pub fn sum_with<F>(&self, masses: &[f64], f: F) -> Result<f64>
    where
        F: Fn(&Node) -> f64 + Sync,
    {
        debug_assert_eq!(masses.len(), self.rings.len());
        let parts = self.map_chunks(|nodes| {
            let mut acc = CompensatedSum::new();
            for node in nodes {
                let m = masses[node.ring];
                if m == 0.0 {
                    continue;
                }
                let v = f(&node);
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        re: node.z.re,
                        im: node.z.im,
                        value: v,
                    });
                }
                acc.add(m * v);
            }
            Ok(acc.value())
        });
        let mut total = CompensatedSum::new();
        for p in parts {
            total.add(p?);
        }
        Ok(total.value())
    }

    pub fn area_masses(&self) -> Vec<f64> {
        self.rings.iter().map(|r| r.area_per_node).collect()
    }

    /// Per-node masses of `omega dA`, exact in the radial direction.
    pub fn weight_masses(&self, w: &RadialWeight) -> Vec<f64> {
        self.rings
            .iter()
            .map(|r| 2.0 * w.radial_mass(r.t_lo, r.t_hi) / r.count as f64)
            .collect()
    }

    /// `int g dA`.
    pub fn integrate<F>(&self, g: F) -> Result<f64>
    where
        F: Fn(Complex64) -> f64 + Sync,
    {
        self.sum_with(&self.area_masses(), |n| g(n.z))
    }

    /// `int g omega dA`.
    pub fn integrate_weighted<F>(&self, w: &RadialWeight, g: F) -> Result<f64>
    where
        F: Fn(&Node) -> f64 + Sync,
    {
        self.sum_with(&self.weight_masses(w), g)
    }

    /// Largest value of `f` over the nodes together with the node attaining it.
    pub fn max_over<F>(&self, f: F) -> Option<(f64, Node)>
    where
        F: Fn(&Node) -> f64 + Sync,
    {
        let parts = self.map_chunks(|nodes| {
            let mut best: Option<(f64, Node)> = None;
            for node in nodes {
                let v = f(&node);
                if best.map_or(true, |(b, _)| v > b) {
                    best = Some((v, node));
                }
            }
            best
        });
        parts.into_iter().flatten().fold(None, |acc, (v, n)| match acc {
            Some((b, _)) if b >= v => acc,
            _ => Some((v, n)),
        })
    }
}

pub fn make_grid(level: u32) -> Result<QuadratureGrid> {
    QuadratureGrid::new(level)
}

pub fn integrate<F>(g: F, grid: &QuadratureGrid) -> Result<f64>
where
    F: Fn(Complex64) -> f64 + Sync,
{
    grid.integrate(g)
}

// ---------------------------------------------------------------------------
// atoms

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub re: f64,
    pub im: f64,
    pub mass: f64,
}

impl Atom {
    pub fn z(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

const MAX_ANNULUS: u32 = 40;
const ANNULUS_SHIFT: u32 = 56;

fn annulus_of(gap: f64) -> u32 {
    if !(gap < 1.0) {
        return 0;
    }
    ((-gap.log2()).floor() as i64).clamp(0, MAX_ANNULUS as i64) as u32
}

fn bins_in(k: u32) -> u64 {
    8u64 << k
}

fn angle_bin(k: u32, theta: f64) -> u64 {
    let bins = bins_in(k);
    let x = ((theta + PI) / (2.0 * PI) * bins as f64).floor();
    (x.max(0.0) as u64).min(bins - 1)
}

fn atom_key(z: Complex64) -> u64 {
    let k = annulus_of(1.0 - z.norm());
    ((k as u64) << ANNULUS_SHIFT) | angle_bin(k, z.arg())
}

/// Atomic measure with a polar bin index.
#[derive(Debug, Clone, Default)]
pub struct AtomCloud {
    atoms: Vec<Atom>,
    keys: Vec<u64>,
}

/// Polar box containing a region: gap range and angular window.
struct PolarBox {
    gap_lo: f64,
    gap_hi: f64,
    /// `(center, halfwidth)`; `None` means every angle.
    window: Option<(f64, f64)>,
}

fn polar_box(region: &Region) -> PolarBox {
    const PAD: f64 = 1e-9;
    let full = |gap_lo: f64, gap_hi: f64| PolarBox {
        gap_lo,
        gap_hi,
        window: None,
    };
    let windowed = |gap_lo: f64, gap_hi: f64, center: f64, hw: f64| PolarBox {
        gap_lo,
        gap_hi,
        window: if hw >= PI { None } else { Some((center, hw + PAD)) },
    };
    match region {
        Region::WholeDisc => full(0.0, 1.0),
        Region::CarlesonSquare(s) => {
            if s.is_whole_disc() {
                full(0.0, 1.0)
            } else {
                windowed(0.0, s.radial_lower_gap() * (1.0 + PAD), s.center_angle(), s.angular_halfwidth())
            }
        }
        Region::Tent(t) => {
            let g = t.vertex.gap();
            windowed(0.0, g * (1.0 + PAD), t.vertex.arg(), 0.5 * g)
        }
        Region::NtRegion(g) => windowed((1.0 - g.vertex.norm()) * (1.0 - PAD), 1.0, g.vertex.arg(), 0.5),
        Region::Annulus { inner, outer } => full(
            ((1.0 - outer) * (1.0 - PAD)).max(0.0),
            ((1.0 - inner) * (1.0 + PAD)).min(1.0),
        ),
        Region::PseudoDisc(d) => {
            let c = d.euclid_center.modulus();
            let r = d.euclid_radius;
            let gap_lo = ((1.0 - c - r) * (1.0 - PAD)).max(0.0);
            let gap_hi = ((1.0 - (c - r).max(0.0)) * (1.0 + PAD)).min(1.0);
            if c > r {
                windowed(gap_lo, gap_hi, d.euclid_center.arg(), (r / c).asin())
            } else {
                full(gap_lo, gap_hi)
            }
        }
    }
}

impl AtomCloud {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        for a in &atoms {
            if !(a.re.is_finite() && a.im.is_finite()) || a.z().norm_sqr() >= 1.0 {
                return Err(Error::domain(format!(
                    "atom ({}, {}) is not inside the unit disc",
                    a.re, a.im
                )));
            }
            if !(a.mass.is_finite() && a.mass >= 0.0) {
                return Err(Error::domain(format!("atom mass {} is not a finite nonnegative number", a.mass)));
            }
        }
        Ok(Self::from_valid(atoms))
    }

    fn from_valid(atoms: Vec<Atom>) -> Self {
        let mut keyed: Vec<(u64, Atom)> = atoms.into_iter().map(|a| (atom_key(a.z()), a)).collect();
        keyed.par_sort_by_key(|(k, _)| *k);
        let (keys, atoms) = keyed.into_iter().unzip();
        AtomCloud { atoms, keys }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        let mut acc = CompensatedSum::new();
        for a in &self.atoms {
            acc.add(a.mass);
        }
        acc.value()
    }

    fn key_ranges(&self, bx: &PolarBox) -> Vec<Range<u64>> {
        let k_lo = annulus_of(bx.gap_hi);
        let k_hi = if bx.gap_lo <= 0.0 {
            MAX_ANNULUS
        } else {
            annulus_of(bx.gap_lo)
        };
        let mut out = Vec::new();
        for k in k_lo..=k_hi {
            let base = (k as u64) << ANNULUS_SHIFT;
            let bins = bins_in(k);
            match bx.window {
                None => out.push(base..base + bins),
                Some((center, hw)) => {
                    let start = angle_diff(center - hw, 0.0);
                    let end = start + 2.0 * hw;
                    let b0 = angle_bin(k, start);
                    if end <= PI {
                        out.push(base + b0..base + angle_bin(k, end) + 1);
                    } else {
                        out.push(base + b0..base + bins);
                        out.push(base..base + angle_bin(k, end - 2.0 * PI) + 1);
                    }
                }
            }
        }
        out
    }

    /// Total mass of the atoms inside `region`.
    pub fn measure_of(&self, region: &Region) -> f64 {
        let bx = polar_box(region);
        let mut acc = CompensatedSum::new();
        for range in self.key_ranges(&bx) {
            let lo = self.keys.partition_point(|&k| k < range.start);
            let hi = self.keys.partition_point(|&k| k < range.end);
            for a in &self.atoms[lo..hi] {
                if region.contains(a.z()) {
                    acc.add(a.mass);
                }
            }
        }
        acc.value()
    }

    pub fn integrate<F: Fn(Complex64) -> f64>(&self, g: F) -> Result<f64> {
        let mut acc = CompensatedSum::new();
        for a in &self.atoms {
            let v = g(a.z());
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    re: a.re,
                    im: a.im,
                    value: v,
                });
            }
            acc.add(a.mass * v);
        }
        Ok(acc.value())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let atoms = rdr.deserialize().collect::<std::result::Result<Vec<Atom>, _>>()?;
        Self::new(atoms)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        for a in &self.atoms {
            wtr.serialize(a)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// measures

pub type DensityFn = Arc<dyn Fn(Complex64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Density {
    /// `omega(|z|)`.
    Radial(RadialWeight),
    Field { name: String, f: DensityFn },
}

impl std::fmt::Debug for Density {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Density::Radial(w) => write!(f, "Radial({})", w.name()),
            Density::Field { name, .. } => write!(f, "Field({name})"),
        }
    }
}

impl Density {
    #[inline]
    pub fn at(&self, z: Complex64) -> f64 {
        match self {
            Density::Radial(w) => w.density_gap(1.0 - z.norm()),
            Density::Field { f, .. } => f(z),
        }
    }
}

/// Positive Borel measure on the disc.
#[derive(Debug, Clone)]
pub enum DiscMeasure {
    Density {
        density: Density,
        grid: Arc<QuadratureGrid>,
    },
    Atoms(AtomCloud),
}

/// Serializable measure description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureSpec {
    /// `(1 - |z|)^beta dA`.
    PowerDensity { beta: f64 },
    /// `omega dA` for a weight spec.
    Weight { weight: WeightSpec },
    /// Atoms from a CSV file with columns `re, im, mass`.
    AtomsCsv { path: PathBuf },
    Zero,
}

impl MeasureSpec {
    pub fn build(&self, grid: Arc<QuadratureGrid>) -> Result<DiscMeasure> {
        match self {
            MeasureSpec::PowerDensity { beta } => Ok(DiscMeasure::radial(RadialWeight::power(*beta)?, grid)),
            MeasureSpec::Weight { weight } => Ok(DiscMeasure::radial(RadialWeight::from_spec(weight)?, grid)),
            MeasureSpec::AtomsCsv { path } => {
                let file = std::fs::File::open(path)?;
                Ok(DiscMeasure::Atoms(AtomCloud::read_csv(file)?))
            }
            MeasureSpec::Zero => Ok(DiscMeasure::zero()),
        }
    }
}

/// Points per axis of the local polar rule used on pseudohyperbolic discs.
const LOCAL_RADIAL: usize = 16;
const LOCAL_ANGULAR: usize = 32;

impl DiscMeasure {
    pub fn radial(w: RadialWeight, grid: Arc<QuadratureGrid>) -> Self {
        DiscMeasure::Density {
            density: Density::Radial(w),
            grid,
        }
    }

    pub fn field(
        name: impl Into<String>,
        f: impl Fn(Complex64) -> f64 + Send + Sync + 'static,
        grid: Arc<QuadratureGrid>,
    ) -> Self {
        DiscMeasure::Density {
            density: Density::Field {
                name: name.into(),
                f: Arc::new(f),
            },
            grid,
        }
    }

    pub fn atoms(atoms: Vec<Atom>) -> Result<Self> {
        Ok(DiscMeasure::Atoms(AtomCloud::new(atoms)?))
    }

    pub fn zero() -> Self {
        DiscMeasure::Atoms(AtomCloud::default())
    }

    /// True when every region measure is invariant under rotations.
    pub fn is_rotation_invariant(&self) -> bool {
        match self {
            DiscMeasure::Density { density, .. } => matches!(density, Density::Radial(_)),
            DiscMeasure::Atoms(c) => c.is_empty(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, DiscMeasure::Atoms(c) if c.atoms.iter().all(|a| a.mass == 0.0))
    }

    /// Per-ring node masses of a density measure.
    fn node_masses(density: &Density, grid: &QuadratureGrid) -> Vec<f64> {
        match density {
            Density::Radial(w) => grid.weight_masses(w),
            Density::Field { .. } => grid.area_masses(),
        }
    }

    pub fn total_mass(&self) -> Result<f64> {
        match self {
            DiscMeasure::Density {
                density: Density::Radial(w),
                ..
            } => Ok(w.total_mass()),
            DiscMeasure::Density { density, grid } => grid.sum_with(&grid.area_masses(), |n| density.at(n.z)),
            DiscMeasure::Atoms(c) => Ok(c.total_mass()),
        }
    }

    /// `int g dmu`.
    pub fn integrate<F>(&self, g: F) -> Result<f64>
    where
        F: Fn(Complex64) -> f64 + Sync,
    {
        match self {
            DiscMeasure::Density { density, grid } => {
                let masses = Self::node_masses(density, grid);
                match density {
                    Density::Radial(_) => grid.sum_with(&masses, |n| g(n.z)),
                    Density::Field { f, .. } => grid.sum_with(&masses, |n| f(n.z) * g(n.z)),
                }
            }
            DiscMeasure::Atoms(c) => c.integrate(g),
        }
    }

    /// `mu(E)` for one of the supported regions.
    pub fn measure_of(&self, region: &Region) -> f64 {
        match self {
            DiscMeasure::Atoms(c) => c.measure_of(region),
            DiscMeasure::Density { density, grid } => {
                if let Region::PseudoDisc(d) = region {
                    return local_disc_integral(d.euclid_center.z(), d.euclid_radius, |z| density.at(z));
                }
                match density {
                    Density::Radial(w) => radial_region_mass(w, region),
                    Density::Field { f, .. } => match region {
                        Region::CarlesonSquare(sq) if !sq.is_whole_disc() => {
                            let h = sq.angular_halfwidth().min(PI);
                            let c = sq.center_angle();
                            polar_box_integral(sq.radial_lower_gap(), 0.0, c - h, c + h, |z| f(z))
                        }
                        Region::Annulus { inner, outer } => {
                            let (lo, hi) = (inner.max(0.0), outer.min(1.0));
                            if hi <= lo {
                                0.0
                            } else {
                                polar_box_integral(1.0 - lo, 1.0 - hi, -PI, PI, |z| f(z))
                            }
                        }
                        _ => grid
                            .sum_with(&grid.area_masses(), |n| if region.contains(n.z) { f(n.z) } else { 0.0 })
                            .unwrap_or(f64::NAN),
                    },
                }
            }
        }
    }

    /// Atomic copy of the measure: grid nodes with their masses, or the atoms themselves.
    pub fn to_atoms(&self) -> Result<AtomCloud> {
        match pushforward(&SelfMap::Identity, |_| 1.0, self)? {
            DiscMeasure::Atoms(c) => Ok(c),
            DiscMeasure::Density { .. } => unreachable!(),
        }
    }
}

/// `(1/pi) int g dA` over `{r e^(i theta) : gap_lo <= 1 - r <= gap_hi, theta0 <= theta <= theta1}`,
/// with dyadic radial cells in the gap and 32 angular panels.
pub fn polar_box_integral<F: Fn(Complex64) -> f64>(gap_hi: f64, gap_lo: f64, theta0: f64, theta1: f64, g: F) -> f64 {
    const PANELS: usize = 32;
    const FLOOR: f64 = 1e-12;
    let rule = gl16();
    let mut edges = vec![gap_hi];
    let mut e = gap_hi;
    while e * 0.5 > gap_lo.max(FLOOR) {
        e *= 0.5;
        edges.push(e);
    }
    edges.push(gap_lo);
    let dth = (theta1 - theta0) / PANELS as f64;
    let mut acc = CompensatedSum::new();
    for cell in edges.windows(2) {
        acc.add(rule.integrate(cell[1], cell[0], |t| {
            let r = 1.0 - t;
            let mut ang = 0.0;
            for k in 0..PANELS {
                let a = theta0 + k as f64 * dth;
                ang += rule.integrate(a, a + dth, |th| g(Complex64::from_polar(r, th)));
            }
            r * ang
        }));
    }
    acc.value() / PI
}

/// `(1/pi) int_{|zeta - c| < radius} g(zeta) dA` by a 16 x 32 polar rule.
pub fn local_disc_integral<F: Fn(Complex64) -> f64>(center: Complex64, radius: f64, g: F) -> f64 {
    let rule = gl16();
    debug_assert_eq!(rule.nodes.len(), LOCAL_RADIAL);
    let mut acc = CompensatedSum::new();
    let dpsi = 2.0 * PI / LOCAL_ANGULAR as f64;
    // nodes symmetric about the ray through the center
    let dirs: Vec<Complex64> = (0..LOCAL_ANGULAR)
        .map(|j| Complex64::from_polar(1.0, center.arg() + j as f64 * dpsi))
        .collect();
    for (x, wx) in rule.nodes.iter().zip(&rule.weights) {
        let rho = 0.5 * radius * (1.0 + x);
        let mut ring = 0.0;
        for d in &dirs {
            ring += g(center + rho * d);
        }
        acc.add(wx * 0.5 * radius * rho * ring * dpsi);
    }
    acc.value() / PI
}

fn radial_region_mass(w: &RadialWeight, region: &Region) -> f64 {
    match region {
        Region::WholeDisc => w.total_mass(),
        Region::CarlesonSquare(s) => w.carleson_mass(s),
        Region::Tent(t) => w.tent_mass(t),
        Region::Annulus { inner, outer } => {
            let inner = inner.clamp(0.0, 1.0);
            let outer = outer.clamp(0.0, 1.0);
            if outer <= inner {
                return 0.0;
            }
            2.0 * w.radial_mass(1.0 - outer, 1.0 - inner)
        }
        Region::NtRegion(g) => {
            // (1 / (pi m)) int_{t_v}^1 (1 - t)(t - t_v) omega dt
            let m = g.vertex.norm();
            let t_v = 1.0 - m;
            let mut acc = 0.0;
            let mut hi = 1.0;
            let floor = t_v.max(2f64.powi(-60));
            while hi > floor {
                let lo = (0.5 * hi).max(floor);
                acc += gl16().integrate(lo, hi, |t| (1.0 - t) * (t - t_v) * w.density_gap(t));
                hi = lo;
            }
            acc / (PI * m)
        }
        Region::PseudoDisc(d) => {
            local_disc_integral(d.euclid_center.z(), d.euclid_radius, |z| w.density_gap(1.0 - z.norm()))
        }
    }
}

/// Atoms `(phi(x), h(x) m)` over the support of `mu`, in grid or storage order.
pub fn pushforward_atoms<H>(phi: &SelfMap, h: H, mu: &DiscMeasure) -> Result<Vec<Atom>>
where
    H: Fn(Complex64) -> f64 + Sync,
{
    let image = |z: Complex64, mass: f64| -> Result<Option<Atom>> {
        let hz = h(z);
        if !(hz.is_finite() && hz >= 0.0) {
            return Err(Error::NonFinite {
                re: z.re,
                im: z.im,
                value: hz,
            });
        }
        let m = hz * mass;
        if m == 0.0 {
            return Ok(None);
        }
        let w = phi.apply_checked(z)?;
        if w.norm_sqr() >= 1.0 {
            return Err(Error::SelfMapViolation {
                re: z.re,
                im: z.im,
                modulus: w.norm(),
            });
        }
        Ok(Some(Atom {
            re: w.re,
            im: w.im,
            mass: m,
        }))
    };
    match mu {
        DiscMeasure::Density { density, grid } => {
            let masses = DiscMeasure::node_masses(density, grid);
            let chunks: Vec<Result<Vec<Atom>>> = grid.map_chunks(|nodes| {
                let mut out = Vec::new();
                for n in nodes {
                    let mut mass = masses[n.ring];
                    if let Density::Field { f, .. } = density {
                        mass *= f(n.z);
                    }
                    if let Some(a) = image(n.z, mass)? {
                        out.push(a);
                    }
                }
                Ok(out)
            });
            let mut atoms = Vec::new();
            for c in chunks {
                atoms.extend(c?);
            }
            Ok(atoms)
        }
        DiscMeasure::Atoms(c) => {
            let mut atoms = Vec::with_capacity(c.len());
            for a in c.atoms() {
                if let Some(b) = image(a.z(), a.mass)? {
                    atoms.push(b);
                }
            }
            Ok(atoms)
        }
    }
}

/// Weighted pushforward `phi_*(h, mu)`, always atomic.
pub fn pushforward<H>(phi: &SelfMap, h: H, mu: &DiscMeasure) -> Result<DiscMeasure>
where
    H: Fn(Complex64) -> f64 + Sync,
{
    Ok(DiscMeasure::Atoms(AtomCloud::from_valid(pushforward_atoms(phi, h, mu)?)))
}
