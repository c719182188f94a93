//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero when any
//! criterion fails.

use std::f64::consts::PI;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use bergman_core::criteria::{
    berezin_criterion, embedding_ls_criterion, embedding_sup_criterion, hinf_criterion, operator_norm_lower_bound,
    point_evaluation_check, probe_family, verify_gamma, gamma_basepoints, Basepoints, KernelGamma, NormTarget,
    Verdict,
};
use bergman_core::geometry::{pseudo_disc, rho, DiscPoint};
use bergman_core::measures::{pushforward_atoms, Atom, DiscMeasure, QuadratureGrid};
use bergman_core::spaces::{bergman_norm_checked, test_function, AnalyticFunction, OperatorSpec, SelfMap};
use bergman_core::weights::RadialWeight;
use bergman_core::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = (bool, String);

fn power(alpha: f64) -> RadialWeight {
    RadialWeight::power(alpha).unwrap()
}

fn one() -> AnalyticFunction {
    AnalyticFunction::constant(1.0)
}

fn random_poly(rng: &mut ChaCha8Rng, max_degree: usize) -> AnalyticFunction {
    let d = rng.gen_range(0..=max_degree);
    AnalyticFunction::polynomial(
        (0..=d)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect(),
    )
}

fn within(elapsed: Duration, limit_secs: f64) -> bool {
    elapsed.as_secs_f64() < limit_secs
}

// 1 ----------------------------------------------------------------------

fn ac1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let a = DiscPoint::from_polar(0.999 * rng.gen::<f64>().sqrt(), rng.gen_range(0.0..2.0 * PI)).unwrap();
        let r = rng.gen_range(0.01..0.99);
        let d = pseudo_disc(a, r).unwrap();
        for k in 0..64 {
            let z = d.euclid_center.z() + Complex64::from_polar(d.euclid_radius, 2.0 * PI * k as f64 / 64.0);
            let zeta = DiscPoint::from_complex(z).unwrap();
            worst = worst.max((rho(a, zeta) - r).abs());
        }
    }
    let t = start.elapsed();
    (
        worst < 1e-9 && within(t, 1.0),
        format!("max |rho - r| = {worst:.2e} (< 1e-9), {:.3}s (< 1s)", t.as_secs_f64()),
    )
}

// 2 ----------------------------------------------------------------------

fn ac2() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut notes = Vec::new();
    for alpha in [-0.5, 0.0, 1.0, 3.0] {
        let rep = power(alpha).classify(64).unwrap();
        let e = rep.exponents.unwrap();
        let target = 2f64.powf(alpha + 1.0);
        let good = (e.alpha - (alpha + 1.0)).abs() <= 0.05
            && (e.beta - (alpha + 1.0)).abs() <= 0.05
            && (rep.dhat_constant - target).abs() <= 0.05 * target
            && rep.flags.dhat;
        ok &= good;
        notes.push(format!(
            "alpha={alpha}: ({:.3},{:.3}) dhat={:.3}",
            e.alpha, e.beta, rep.dhat_constant
        ));
    }
    let exp = RadialWeight::exponential(1.0).unwrap().classify(64).unwrap();
    ok &= !exp.flags.dhat;
    let t = start.elapsed();
    notes.push(format!("exp(-1/(1-s)) in dhat: {}", exp.flags.dhat));
    (ok && within(t, 10.0), format!("{}; {:.2}s (< 10s)", notes.join("; "), t.as_secs_f64()))
}

// 3 ----------------------------------------------------------------------

fn ac3() -> Outcome {
    let grid = QuadratureGrid::new(6).unwrap();
    let mut ok = true;
    let mut worst_change = 0.0f64;
    let mut notes = Vec::new();
    for alpha in [0.0, 1.0] {
        let w = power(alpha);
        let tilde = w.tilde().unwrap();
        for p in [0.5, 1.0, 2.0, 4.0] {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for _ in 0..50 {
                let f = random_poly(&mut rng, 20);
                let a = bergman_norm_checked(&f, p, &w, &grid).unwrap();
                let b = bergman_norm_checked(&f, p, &tilde, &grid).unwrap();
                let (coarse, fine) = (b.value / a.value, b.refined / a.refined);
                worst_change = worst_change.max((fine - coarse).abs() / fine);
                lo = lo.min(fine);
                hi = hi.max(fine);
            }
            let c = hi.max(1.0 / lo);
            ok &= c.is_finite();
            notes.push(format!("a={alpha},p={p}: C={c:.4}"));
        }
    }
    ok &= worst_change < 0.01;
    (ok, format!("worst change under refinement {worst_change:.1e} (< 1%); {}", notes.join(" ")))
}

// 4 ----------------------------------------------------------------------

fn ac4() -> Outcome {
    let grid = QuadratureGrid::new(10).unwrap();
    let w = power(1.0);
    let p = 2.0;
    let gamma = 2.0 * 3.0 / p;
    let mut family: Vec<AnalyticFunction> = (0..=6)
        .map(|j| {
            let a = DiscPoint::from_polar(1.0 - (-(j as f64)).exp2(), 0.4 * j as f64).unwrap();
            test_function(a, gamma, p, &w).unwrap()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    family.extend((0..20).map(|_| random_poly(&mut rng, 10)));
    let mut ok = true;
    let mut worst = 0.0f64;
    for f in &family {
        for n in 0..=2 {
            let c = point_evaluation_check(f, n, p, &w, &grid).unwrap();
            ok &= c.finite;
            worst = worst.max(c.relative_change);
        }
    }
    ok &= worst < 0.10;
    (ok, format!("{} functions x n in 0..=2, worst change L10->L12 {worst:.4} (< 10%)", family.len()))
}

// 5 ----------------------------------------------------------------------

fn ac5() -> Outcome {
    let start = Instant::now();
    let mut cells = 0;
    let mut agree = 0;
    let mut growth_ok = true;
    let mut min_halving = f64::INFINITY;
    let mut min_two_level = f64::INFINITY;
    let grid = Arc::new(QuadratureGrid::new(2).unwrap());
    for alpha in [0.0, 1.0] {
        for (p, q) in [(1.0, 1.0), (1.0, 2.0), (2.0, 4.0)] {
            for n in 0..=2u32 {
                let beta0 = (alpha + 2.0) * q / p + n as f64 * q - 2.0;
                for margin in [0.3, -0.3] {
                    let mu = DiscMeasure::radial(power(beta0 + margin), grid.clone());
                    let rep = embedding_sup_criterion(
                        p,
                        q,
                        n,
                        &power(alpha),
                        &mu,
                        0.5,
                        &Basepoints::Lattice { r: 0.5, depth: 10 },
                    )
                    .unwrap();
                    let oracle = if margin > 0.0 {
                        Verdict::BoundedConsistent
                    } else {
                        Verdict::Divergent
                    };
                    cells += 1;
                    agree += (rep.verdict == oracle) as usize;
                    if margin < 0.0 {
                        // sups at scale delta = 2^-k over the deepest four halvings
                        let t = &rep.shells;
                        for k in t.len() - 4..t.len() {
                            let g = t[k].sup / t[k - 1].sup;
                            min_halving = min_halving.min(g);
                            growth_ok &= g >= 1.5;
                        }
                        min_two_level = min_two_level.min(rep.growth.unwrap_or(0.0));
                    }
                }
            }
        }
    }
    let t = start.elapsed();
    (
        agree == cells && cells >= 18 && growth_ok && within(t, 300.0),
        format!(
            "verdicts {agree}/{cells}; divergent side: min shell-sup growth per halving {min_halving:.3} (needs >= 1.5), \
             min refinement growth over two halvings {min_two_level:.3}; {:.1}s",
            t.as_secs_f64()
        ),
    )
}

// 6 ----------------------------------------------------------------------

/// `mu(Delta(m, r))` for `mu = (1 - |z|)^beta dA / pi` by integrating arcs of
/// circles `|zeta| = s` inside the Euclidean disc, `s = c + R cos(psi)`.
fn arc_mass(m: f64, r: f64, beta: f64) -> f64 {
    let c = (1.0 - r * r) * m / (1.0 - r * r * m * m);
    let rad = (1.0 - m * m) * r / (1.0 - r * r * m * m);
    let k = 4000;
    let h = PI / k as f64;
    let f = |psi: f64| {
        let s = c + rad * psi.cos();
        let cos_t = ((s * s + c * c - rad * rad) / (2.0 * s * c)).clamp(-1.0, 1.0);
        (1.0 - s).powf(beta) * 2.0 * cos_t.acos() * s * rad * psi.sin()
    };
    let mut acc = f(0.0) + f(PI);
    for i in 1..k {
        acc += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0 / PI
}

fn ac6() -> Outcome {
    let mut cells = 0;
    let mut agree = 0;
    let grid = QuadratureGrid::new(10).unwrap();
    let support = Arc::new(QuadratureGrid::new(2).unwrap());
    for alpha in [0.0, 1.0] {
        for (p, q) in [(2.0, 1.0), (4.0, 1.0)] {
            for n in 0..=2u32 {
                let s = p / (p - q);
                let beta_star = alpha + n as f64 * q - (alpha + 1.0) / s;
                for margin in [0.3, -0.3] {
                    let beta = beta_star + margin;
                    if beta <= -1.0 {
                        continue;
                    }
                    // closed form: int t^(s (beta - alpha - nq) + alpha) dt near 0
                    let finite = s * (beta - alpha - n as f64 * q) + alpha > -1.0;
                    let mu = DiscMeasure::radial(power(beta), support.clone());
                    let rep = embedding_ls_criterion(p, q, n, &power(alpha), &mu, 0.5, &grid).unwrap();
                    cells += 1;
                    agree += ((rep.verdict == Verdict::BoundedConsistent) == finite) as usize;
                }
            }
        }
    }
    // interior case alpha = 0, beta = 2, n = 1, p = 2, q = 1, omega_tilde = 1
    let (r, beta) = (0.5, 2.0);
    let b = |t: f64| {
        let m = 1.0 - t;
        let s_mass = t / PI * (t - 0.5 * t * t);
        arc_mass(m, r, beta) / (s_mass * t)
    };
    let mut oracle = 0.0;
    let mut hi = 1.0f64 - 1e-12;
    while hi > 1e-9 {
        let lo = 0.5 * hi;
        let k = 200;
        let h = (hi - lo) / k as f64;
        let g = |t: f64| 2.0 * (1.0 - t) * b(t).powi(2);
        let mut acc = g(lo) + g(hi);
        for i in 1..k {
            acc += g(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        oracle += acc * h / 3.0;
        hi = lo;
    }
    let mu = DiscMeasure::radial(power(beta), support);
    let rep = embedding_ls_criterion(2.0, 1.0, 1, &power(0.0), &mu, r, &grid).unwrap();
    let got = rep.ls_integral.unwrap();
    let rel = (got - oracle).abs() / oracle;
    (
        agree == cells && rel < 0.10,
        format!("verdicts {agree}/{cells}; interior integral {got:.6} vs 1-D oracle {oracle:.6} (rel {rel:.3}, < 10%)"),
    )
}

// 7 ----------------------------------------------------------------------

fn ac7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let atoms: Vec<Atom> = (0..100_000)
        .map(|_| {
            let z = Complex64::from_polar(0.99 * rng.gen::<f64>().sqrt(), rng.gen_range(0.0..2.0 * PI));
            Atom {
                re: z.re,
                im: z.im,
                mass: rng.gen_range(0.0..1.0),
            }
        })
        .collect();
    let mu = DiscMeasure::atoms(atoms.clone()).unwrap();
    let h = |z: Complex64| 1.0 + z.re * z.re;
    let g = |w: Complex64| (w.re - 0.3).powi(2) + w.im.abs();
    let moebius = |c: f64, z: Complex64| (z - c) / (1.0 - c * z);
    let maps: [(SelfMap, Box<dyn Fn(Complex64) -> Complex64>); 3] = [
        (SelfMap::Identity, Box::new(|z| z)),
        (SelfMap::Power { k: 2 }, Box::new(|z| z * z)),
        (
            SelfMap::Moebius {
                c: DiscPoint::new(0.3, 0.0).unwrap(),
            },
            Box::new(move |z| moebius(0.3, z)),
        ),
    ];
    let mut worst = 0.0f64;
    for (phi, direct) in &maps {
        let pushed = pushforward_atoms(phi, h, &mu).unwrap();
        let lhs: f64 = pushed.iter().map(|a| g(a.z()) * a.mass).sum();
        let rhs: f64 = atoms.iter().map(|a| g(direct(a.z())) * h(a.z()) * a.mass).sum();
        worst = worst.max((lhs - rhs).abs() / rhs.abs());
    }
    (worst <= 1e-12, format!("10^5 atoms, worst relative difference {worst:.2e} (<= 1e-12)"))
}

// 8 ----------------------------------------------------------------------

fn ac8() -> Outcome {
    let check = QuadratureGrid::new(16).unwrap();
    let grid = QuadratureGrid::new(9).unwrap();
    let bp = Basepoints::Ray {
        depth: 6,
        per_level: 2,
        angle: 0.7,
    };
    let ident = OperatorSpec::new(SelfMap::Identity, one(), 0).unwrap();
    let cells = [
        (0.0, 1.0, 1.0, 0u32),
        (1.0, 1.0, 1.0, 1),
        (0.0, 2.0, 2.0, 1),
        (1.0, 2.0, 2.0, 0),
        (0.0, 1.0, 2.0, 0),
        (1.0, 1.0, 2.0, 1),
    ];
    let mut agree = 0;
    let mut total = 0;
    let mut gamma_ok = true;
    let mut same = true;
    for (alpha, p, q, n) in cells {
        let w = power(alpha);
        let op = OperatorSpec { n, ..ident.clone() };
        let g0 = 2.0 * (alpha + 2.0) / p;
        let mut gammas = Vec::new();
        for g in [g0, 1.5 * g0] {
            let v = verify_gamma(&w, p, g, &gamma_basepoints(), &check).unwrap();
            gamma_ok &= v.passed;
            gammas.push(KernelGamma {
                gamma: g,
                validated: v.passed,
            });
        }
        for margin in [0.3, -0.3] {
            let beta = (alpha + 2.0) * q / p + n as f64 * q - 2.0 + margin;
            let classical = beta + 2.0 >= (alpha + 2.0) * q / p + n as f64 * q;
            let verdicts: Vec<Verdict> = gammas
                .iter()
                .map(|g| berezin_criterion(&op, p, q, &w, &power(beta), *g, &bp, &grid).unwrap().verdict)
                .collect();
            total += 1;
            agree += ((verdicts[0] == Verdict::BoundedConsistent) == classical) as usize;
            same &= verdicts[0] == verdicts[1];
        }
    }
    (
        agree == total && total >= 12 && gamma_ok && same,
        format!(
            "verdicts {agree}/{total} match the classical condition; both gammas validated: {gamma_ok}; \
             identical across gammas: {same}"
        ),
    )
}

// 9 ----------------------------------------------------------------------

fn ac9() -> Outcome {
    let w = power(0.0);
    let p = 2.0;
    let gamma = 2.0 * 2.0 / p;
    let poly = AnalyticFunction::polynomial(vec![Complex64::new(0.5, 0.0), Complex64::new(0.0, 0.5)]);
    let c = DiscPoint::new(0.5, 0.0).unwrap();
    let ops = [
        ("scale(0.5), u=1, n=0", SelfMap::Scale { r: 0.5 }, one(), 0),
        ("scale(0.5), u=poly, n=1", SelfMap::Scale { r: 0.5 }, poly.clone(), 1),
        ("moebius(0.5), u=1, n=0", SelfMap::Moebius { c }, one(), 0),
        ("power(2), u=1, n=0", SelfMap::Power { k: 2 }, one(), 0),
        ("moebius(0.5), u=poly, n=1", SelfMap::Moebius { c }, poly, 1),
    ];
    let grid = QuadratureGrid::new(10).unwrap();
    let mut ok = true;
    let mut ratios = Vec::new();
    let mut notes = Vec::new();
    for (name, phi, u, n) in ops {
        let op = OperatorSpec::new(phi, u, n).unwrap();
        let rep = hinf_criterion(&op, p, &w, &grid).unwrap();
        let anchor = Complex64::new(rep.diagnostics["argmax_re"], rep.diagnostics["argmax_im"]);
        let probe = |depth: u32, anchors: &[Complex64]| {
            let fam = probe_family(&op, p, &w, gamma, depth, anchors).unwrap();
            operator_norm_lower_bound(&op, p, &NormTarget::Hinf, &w, &fam, &grid).unwrap().value
        };
        // the grid argmax is deeper than either ray family, so it only enters the bound
        let (lb, lb_deep) = (probe(6, &[]), probe(8, &[]));
        let probe_growth = lb_deep / lb;
        let probe_divergent = probe_growth >= 1.25;
        let hinf_divergent = rep.verdict == Verdict::Divergent;
        ok &= probe_divergent == hinf_divergent;
        if hinf_divergent {
            notes.push(format!("{name}: divergent (probe growth {probe_growth:.2})"));
        } else {
            let ratio = lb_deep.max(probe(8, &[anchor])) / rep.global_sup.unwrap();
            ratios.push(ratio);
            notes.push(format!("{name}: ratio {ratio:.3}"));
        }
    }
    let c_min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let c_max = ratios.iter().copied().fold(0.0, f64::max);
    ok &= !ratios.is_empty() && c_min >= 0.02 && c_max <= 1.5;
    (ok, format!("{}; bracket [{c_min:.3}, {c_max:.3}]", notes.join("; ")))
}

// 10 ---------------------------------------------------------------------

fn ac10() -> Outcome {
    let grid = QuadratureGrid::new(16).unwrap();
    let bp = gamma_basepoints();
    let mut ok = true;
    let mut worst_drift = 0.0f64;
    for alpha in [0.0, 1.0, 3.0] {
        for p in [1.0, 2.0] {
            let g = 2.0 * (alpha + 2.0) / p;
            let v = verify_gamma(&power(alpha), p, g, &bp, &grid).unwrap();
            ok &= v.passed && v.drift < 0.10;
            worst_drift = worst_drift.max(v.drift);
        }
    }
    let bad = verify_gamma(&power(0.0), 1.0, 1.0, &bp, &grid).unwrap();
    ok &= !bad.passed;
    let max_a = bp.iter().map(|a| a.modulus()).fold(0.0, f64::max);
    (
        ok,
        format!(
            "6 cases pass up to |a| = {max_a}, worst drift {worst_drift:.4} (< 10%); gamma p = 1 rejected: {} ({})",
            !bad.passed,
            bad.diagnostic.unwrap_or_default()
        ),
    )
}

// 11 ---------------------------------------------------------------------

fn ac11() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(
        &cfg,
        r#"{"schema": "bergman-config/1", "weight": {"kind": "power", "alpha": 1},
            "measure": {"kind": "power_density", "beta": 2.5}, "p": 2, "q": 1, "n": 0, "grid_level": 8}"#,
    )
    .unwrap();
    let run = |out: &str| {
        let out = dir.path().join(out);
        let status = Command::new(env!("CARGO_BIN_EXE_bergman"))
            .args(["criterion", "embedding-ls", "--deterministic", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        (status.success(), std::fs::read(out.join("report.json")).unwrap_or_default())
    };
    let (a_ok, a) = run("a");
    let (b_ok, b) = run("b");
    (
        a_ok && b_ok && !a.is_empty() && a == b,
        format!("two runs, {} bytes each, identical: {}", a.len(), a == b),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("pseudohyperbolic geometry", ac1),
        ("weight classification", ac2),
        ("norm equivalence", ac3),
        ("point evaluation bound", ac4),
        ("embedding boundary reproduction", ac5),
        ("q < p criterion", ac6),
        ("pushforward identity", ac7),
        ("Berezin cross-check", ac8),
        ("H-infinity two-sidedness", ac9),
        ("gamma verification", ac10),
        ("determinism", ac11),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = format!("AC{}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|x| x == &id) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = f();
        println!(
            "[{}] {id} {name}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        if !pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("acceptance: failed {}", failed.join(", "));
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
