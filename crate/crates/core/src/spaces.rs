//! Analytic functions with exact derivatives, self-maps, Bergman norms and
//! Hardy means.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{moebius, DiscPoint};
use crate::measures::QuadratureGrid;
use crate::weights::RadialWeight;

/// Angles used by [`hardy_means`].
pub const HARDY_ANGLES: usize = 2048;

const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Analytic functions on the disc with closed-form derivatives of every order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalyticFunction {
    /// `sum c_k z^k`.
    #[serde(rename = "poly")]
    Polynomial { coeffs: Vec<Complex64> },
    /// `scale * ((1 - |a|) / (1 - conj(a) z))^gamma`, principal branch.
    ConformalPower { a: DiscPoint, gamma: f64, scale: f64 },
    Sum { terms: Vec<AnalyticFunction> },
    Scaled { factor: Complex64, inner: Box<AnalyticFunction> },
}

/// Rising factorial `x (x + 1) ... (x + n - 1)`.
fn rising(x: f64, n: u32) -> f64 {
    (0..n).fold(1.0, |acc, k| acc * (x + k as f64))
}

impl AnalyticFunction {
    pub fn constant(c: f64) -> Self {
        AnalyticFunction::Polynomial {
            coeffs: vec![Complex64::new(c, 0.0)],
        }
    }

    pub fn monomial(k: usize) -> Self {
        let mut coeffs = vec![ZERO; k + 1];
        coeffs[k] = ONE;
        AnalyticFunction::Polynomial { coeffs }
    }

    pub fn polynomial(coeffs: Vec<Complex64>) -> Self {
        AnalyticFunction::Polynomial { coeffs }
    }

    pub fn scaled(self, factor: Complex64) -> Self {
        AnalyticFunction::Scaled {
            factor,
            inner: Box::new(self),
        }
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.deriv(0, z)
    }

    /// `f^(n)(z)`.
    pub fn deriv(&self, n: u32, z: Complex64) -> Complex64 {
        match self {
            AnalyticFunction::Polynomial { coeffs } => {
                let n = n as usize;
                if coeffs.len() <= n {
                    return ZERO;
                }
                let mut acc = ZERO;
                for k in (n..coeffs.len()).rev() {
                    let falling = ((k - n + 1)..=k).fold(1.0, |p, j| p * j as f64);
                    acc = acc * z + coeffs[k] * falling;
                }
                acc
            }
            AnalyticFunction::ConformalPower { a, gamma, scale } => {
                let a = a.z();
                let base = ONE - a.conj() * z;
                let pre = scale * (1.0 - a.norm()).powf(*gamma) * rising(*gamma, n);
                let power = (base.ln() * (-gamma - n as f64)).exp();
                a.conj().powu(n) * power * pre
            }
            AnalyticFunction::Sum { terms } => terms.iter().map(|t| t.deriv(n, z)).sum(),
            AnalyticFunction::Scaled { factor, inner } => factor * inner.deriv(n, z),
        }
    }

    /// `|f^(n)(z)|`, with a real-arithmetic path for conformal powers.
    pub fn deriv_abs(&self, n: u32, z: Complex64) -> f64 {
        match self {
            AnalyticFunction::ConformalPower { a, gamma, scale } => {
                let a = a.z();
                let base = (ONE - a.conj() * z).norm_sqr();
                scale
                    * (1.0 - a.norm()).powf(*gamma)
                    * rising(*gamma, n)
                    * a.norm().powi(n as i32)
                    * base.powf(-0.5 * (gamma + n as f64))
            }
            _ => self.deriv(n, z).norm(),
        }
    }
}

/// `f^(n)(z)`.
pub fn deriv_eval(f: &AnalyticFunction, n: u32, z: DiscPoint) -> Complex64 {
    f.deriv(n, z.z())
}

/// Analytic self-maps of the disc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelfMap {
    Identity,
    /// `z -> r z`, `0 < r <= 1`.
    Scale { r: f64 },
    /// `z -> z^k`.
    Power { k: u32 },
    /// `z -> (z - c) / (1 - conj(c) z)`.
    Moebius { c: DiscPoint },
    /// Applied left to right.
    Composition { maps: Vec<SelfMap> },
    /// Arbitrary polynomial; checked on evaluation.
    Polynomial { coeffs: Vec<Complex64> },
}

impl SelfMap {
    pub fn validate(&self) -> Result<()> {
        match self {
            SelfMap::Scale { r } if !(*r > 0.0 && *r <= 1.0) => {
                Err(Error::domain(format!("scale factor {r} outside (0, 1]")))
            }
            SelfMap::Power { k } if *k == 0 => Err(Error::domain("power self-map needs k >= 1")),
            SelfMap::Composition { maps } => maps.iter().try_for_each(|m| m.validate()),
            SelfMap::Polynomial { coeffs } if coeffs.is_empty() => {
                Err(Error::domain("polynomial self-map needs coefficients"))
            }
            _ => Ok(()),
        }
    }

    /// `phi(z)` without the range check.
    pub fn apply(&self, z: Complex64) -> Complex64 {
        match self {
            SelfMap::Identity => z,
            SelfMap::Scale { r } => z * *r,
            SelfMap::Power { k } => z.powu(*k),
            SelfMap::Moebius { c } => moebius(c.z(), z),
            SelfMap::Composition { maps } => maps.iter().fold(z, |w, m| m.apply(w)),
            SelfMap::Polynomial { coeffs } => coeffs.iter().rev().fold(ZERO, |acc, c| acc * z + c),
        }
    }

    /// `phi(z)`, failing when the value leaves the closed disc.
    pub fn apply_checked(&self, z: Complex64) -> Result<Complex64> {
        let w = self.apply(z);
        let m = w.norm();
        if !(m <= 1.0) {
            return Err(Error::SelfMapViolation {
                re: z.re,
                im: z.im,
                modulus: m,
            });
        }
        Ok(w)
    }

    /// `phi'` when it has a representation in [`AnalyticFunction`].
    pub fn derivative(&self) -> Option<AnalyticFunction> {
        match self {
            SelfMap::Identity => Some(AnalyticFunction::constant(1.0)),
            SelfMap::Scale { r } => Some(AnalyticFunction::constant(*r)),
            SelfMap::Power { k } => {
                let mut coeffs = vec![ZERO; *k as usize];
                coeffs[*k as usize - 1] = Complex64::new(*k as f64, 0.0);
                Some(AnalyticFunction::Polynomial { coeffs })
            }
            SelfMap::Moebius { c } => {
                let m = c.modulus();
                Some(AnalyticFunction::ConformalPower {
                    a: *c,
                    gamma: 2.0,
                    scale: (1.0 + m) / (1.0 - m),
                })
            }
            SelfMap::Polynomial { coeffs } => Some(AnalyticFunction::Polynomial {
                coeffs: coeffs
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(k, c)| c * k as f64)
                    .collect(),
            }),
            SelfMap::Composition { .. } => None,
        }
    }
}

/// The operator `f -> u * (f^(n) o phi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub phi: SelfMap,
    pub u: AnalyticFunction,
    pub n: u32,
}

impl OperatorSpec {
    pub fn new(phi: SelfMap, u: AnalyticFunction, n: u32) -> Result<Self> {
        phi.validate()?;
        Ok(OperatorSpec { phi, u, n })
    }

    /// `u(z) f^(n)(phi(z))`.
    pub fn apply(&self, f: &AnalyticFunction, z: Complex64) -> Result<Complex64> {
        let w = self.phi.apply_checked(z)?;
        Ok(self.u.eval(z) * f.deriv(self.n, w))
    }
}

pub fn apply_operator<'a>(
    op: &'a OperatorSpec,
    f: &'a AnalyticFunction,
) -> impl Fn(DiscPoint) -> Result<Complex64> + 'a {
    move |z| op.apply(f, z.z())
}

/// `||f||_{A^p_omega}` on the grid.
pub fn bergman_norm(f: &AnalyticFunction, p: f64, w: &RadialWeight, grid: &QuadratureGrid) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::domain(format!("Bergman norm needs p > 0, got {p}")));
    }
    let s = grid.integrate_weighted(w, |n| f.eval(n.z).norm().powf(p))?;
    Ok(s.powf(1.0 / p))
}

/// Norm on two grid levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub value: f64,
    pub refined: f64,
    pub relative_change: f64,
    pub stable: bool,
}

/// Relative change under refinement above which a norm counts as unbounded.
pub const NORM_STABILITY: f64 = 0.01;

pub fn bergman_norm_checked(
    f: &AnalyticFunction,
    p: f64,
    w: &RadialWeight,
    grid: &QuadratureGrid,
) -> Result<NormEstimate> {
    let value = bergman_norm(f, p, w, grid)?;
    let refined = bergman_norm(f, p, w, &grid.refined(2)?)?;
    let relative_change = (refined - value).abs() / refined.abs().max(f64::MIN_POSITIVE);
    Ok(NormEstimate {
        value,
        refined,
        relative_change,
        stable: relative_change < NORM_STABILITY,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HardyExponent {
    Finite(f64),
    Infinity,
}

/// `M_p(r, f)` on 2048 equally spaced angles.
pub fn hardy_means(f: &AnalyticFunction, p: HardyExponent, r: f64) -> Result<f64> {
    hardy_means_with(f, p, r, HARDY_ANGLES)
}

pub fn hardy_means_with(f: &AnalyticFunction, p: HardyExponent, r: f64, angles: usize) -> Result<f64> {
    if !(0.0..1.0).contains(&r) {
        return Err(Error::domain(format!("Hardy means need r in [0, 1), got {r}")));
    }
    if angles == 0 {
        return Err(Error::domain("Hardy means need at least one angle"));
    }
    let values = (0..angles).map(|j| f.eval(Complex64::from_polar(r, 2.0 * PI * j as f64 / angles as f64)).norm());
    match p {
        HardyExponent::Infinity => Ok(values.fold(0.0, f64::max)),
        HardyExponent::Finite(p) if p > 0.0 => {
            let s = crate::quad::compensated_sum(values.map(|v| v.powf(p)));
            Ok((s / angles as f64).powf(1.0 / p))
        }
        HardyExponent::Finite(p) => Err(Error::domain(format!("Hardy means need p > 0, got {p}"))),
    }
}

/// Conformal test function normalized by `omega(S(a))^(1/p)`.
pub fn test_function(a: DiscPoint, gamma: f64, p: f64, w: &RadialWeight) -> Result<AnalyticFunction> {
    if !(gamma > 0.0 && p > 0.0) {
        return Err(Error::domain(format!("test function needs gamma, p > 0 (got {gamma}, {p})")));
    }
    let mass = w.carleson_mass_at(a);
    let scale = mass.powf(-1.0 / p);
    if !(mass > 1e-300) || !scale.is_finite() {
        return Err(Error::DegenerateBasepoint {
            re: a.re(),
            im: a.im(),
            detail: format!("omega(S(a)) = {mass:e} underflows"),
        });
    }
    Ok(AnalyticFunction::ConformalPower { a, gamma, scale })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Fourth-order central difference of `g` along the real direction.
    fn central_diff(g: &dyn Fn(Complex64) -> Complex64, z: Complex64, h: f64) -> Complex64 {
        let hh = c(h, 0.0);
        (g(z - hh * 2.0) - g(z - hh) * 8.0 + g(z + hh) * 8.0 - g(z + hh * 2.0)) / (12.0 * h)
    }

    #[test]
    fn deriv_examples() {
        let cube = AnalyticFunction::monomial(3);
        assert!((cube.deriv(2, c(0.5, 0.0)) - c(3.0, 0.0)).norm() < 1e-15);
        let f = AnalyticFunction::ConformalPower {
            a: DiscPoint::new(0.5, 0.0).unwrap(),
            gamma: 2.0,
            scale: 1.0,
        };
        assert!((f.deriv(1, c(0.0, 0.0)) - c(0.25, 0.0)).norm() < 1e-15);
        let z = c(0.1, -0.3);
        assert_eq!(f.deriv(0, z), f.eval(z));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = DiscPoint::new(0.4, 0.3).unwrap();
        let funcs = vec![
            AnalyticFunction::polynomial((0..6).map(|k| c(k as f64 * 0.3 - 0.5, 0.2)).collect()),
            AnalyticFunction::ConformalPower { a, gamma: 2.7, scale: 1.3 },
            AnalyticFunction::Sum {
                terms: vec![
                    AnalyticFunction::monomial(4),
                    AnalyticFunction::ConformalPower { a, gamma: 1.5, scale: 0.5 },
                ],
            },
            AnalyticFunction::monomial(2).scaled(c(0.0, 2.0)),
        ];
        for f in &funcs {
            for n in 0..4u32 {
                for _ in 0..100 {
                    let z = Complex64::from_polar(rng.gen_range(0.0..0.9f64), rng.gen_range(-PI..PI));
                    let exact = f.deriv(n + 1, z);
                    let fd = central_diff(&|w| f.deriv(n, w), z, 1e-3);
                    let scale = exact.norm().max(1.0);
                    assert!((exact - fd).norm() < 1e-6 * scale, "n={n} z={z} {exact} vs {fd}");
                    assert!((f.deriv_abs(n, z) - f.deriv(n, z).norm()).abs() < 1e-10 * f.deriv(n, z).norm().max(1.0));
                }
            }
        }
    }

    #[test]
    fn moebius_derivative_matches_difference() {
        let phi = SelfMap::Moebius { c: DiscPoint::new(0.3, -0.5).unwrap() };
        let d = phi.derivative().unwrap();
        for z in [c(0.0, 0.0), c(0.5, 0.2), c(-0.3, 0.7)] {
            let fd = central_diff(&|w| phi.apply(w), z, 1e-3);
            assert!((d.eval(z) - fd).norm() < 1e-8);
        }
    }

    #[test]
    fn operator_examples() {
        let f = AnalyticFunction::polynomial(vec![c(1.0, 0.0), c(0.0, 2.0), c(0.5, 0.0)]);
        let phi = SelfMap::Power { k: 2 };
        let z = c(0.3, 0.4);
        let comp = OperatorSpec::new(phi.clone(), AnalyticFunction::constant(1.0), 0).unwrap();
        assert!((comp.apply(&f, z).unwrap() - f.eval(phi.apply(z))).norm() < 1e-15);
        let u = AnalyticFunction::monomial(1);
        let weighted = OperatorSpec::new(phi.clone(), u.clone(), 0).unwrap();
        assert!((weighted.apply(&f, z).unwrap() - z * f.eval(phi.apply(z))).norm() < 1e-15);

        // n = 1 with u = phi' is the derivative of f o phi
        let dc = OperatorSpec::new(phi.clone(), phi.derivative().unwrap(), 1).unwrap();
        let fd = central_diff(&|w| f.eval(phi.apply(w)), z, 1e-3);
        assert!((dc.apply(&f, z).unwrap() - fd).norm() < 1e-9);
        let g = apply_operator(&dc, &f);
        assert_eq!(g(DiscPoint::new(0.3, 0.4).unwrap()).unwrap(), dc.apply(&f, z).unwrap());
    }

    #[test]
    fn polynomial_self_map_can_fail() {
        let phi = SelfMap::Polynomial { coeffs: vec![c(0.0, 0.0), c(1.5, 0.0)] };
        assert!(matches!(phi.apply_checked(c(0.9, 0.0)), Err(Error::SelfMapViolation { .. })));
        assert!(SelfMap::Scale { r: 0.0 }.validate().is_err());
        assert!(SelfMap::Power { k: 0 }.validate().is_err());
    }

    #[test]
    fn bergman_norm_examples() {
        let g = QuadratureGrid::new(10).unwrap();
        let one = RadialWeight::power(0.0).unwrap();
        for p in [0.5, 1.0, 3.0] {
            assert!((bergman_norm(&AnalyticFunction::constant(1.0), p, &one, &g).unwrap() - 1.0).abs() < 1e-12);
        }
        let z = AnalyticFunction::monomial(1);
        assert!((bergman_norm(&z, 2.0, &one, &g).unwrap() - 0.5f64.sqrt()).abs() < 1e-6);
        assert!(bergman_norm(&z, 0.0, &one, &g).is_err());
        let est = bergman_norm_checked(&z, 2.0, &one, &g).unwrap();
        assert!(est.stable);
    }

    #[test]
    fn hardy_means_examples() {
        let z = AnalyticFunction::monomial(1);
        assert!((hardy_means(&z, HardyExponent::Infinity, 0.7).unwrap() - 0.7).abs() < 1e-15);
        let k = AnalyticFunction::constant(-2.5);
        for p in [HardyExponent::Finite(0.5), HardyExponent::Finite(2.0), HardyExponent::Infinity] {
            assert!((hardy_means(&k, p, 0.3).unwrap() - 2.5).abs() < 1e-12);
        }
        // 1 / (1 - 0.9 z): Parseval gives M_2(r)^2 = 1 / (1 - 0.81 r^2)
        let f = AnalyticFunction::ConformalPower {
            a: DiscPoint::new(0.9, 0.0).unwrap(),
            gamma: 1.0,
            scale: 10.0,
        };
        let mut prev = 0.0;
        for j in 0..20 {
            let r = j as f64 / 20.0;
            let m = hardy_means(&f, HardyExponent::Finite(2.0), r).unwrap();
            let parseval = (1.0 / (1.0 - 0.81 * r * r)).sqrt();
            assert!((m - parseval).abs() < 1e-10);
            assert!(m > prev);
            prev = m;
        }
        assert!(hardy_means(&f, HardyExponent::Finite(2.0), 1.0).is_err());
    }

    #[test]
    fn test_function_examples() {
        let w = RadialWeight::power(1.0).unwrap();
        let f = test_function(DiscPoint::ORIGIN, 2.0, 2.0, &w).unwrap();
        let expected = w.total_mass().powf(-0.5);
        for z in [c(0.0, 0.0), c(0.5, 0.5), c(-0.9, 0.0)] {
            assert!((f.eval(z) - c(expected, 0.0)).norm() < 1e-14);
        }
        // decays on compact sets as |a| -> 1
        let mut prev = f64::INFINITY;
        for m in [0.9, 0.99, 0.999] {
            let f = test_function(DiscPoint::new(m, 0.0).unwrap(), 3.0, 2.0, &w).unwrap();
            let sup = (0..64)
                .map(|j| f.eval(Complex64::from_polar(0.5, j as f64 * PI / 32.0)).norm())
                .fold(0.0, f64::max);
            assert!(sup < prev);
            prev = sup;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn degenerate_basepoint() {
        let w = RadialWeight::power(40.0).unwrap();
        let a = DiscPoint::new(1.0 - 1e-9, 0.0).unwrap();
        assert!(matches!(test_function(a, 1.0, 1.0, &w), Err(Error::DegenerateBasepoint { .. })));
    }
}
