//! Command-line front end: config ingestion, dispatch and report emission.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::criteria::{
    berezin_criterion, carleson_criterion, embedding_ls_criterion, embedding_sup_criterion, gamma_basepoints,
    hinf_criterion, op_pushforward_criterion, point_evaluation_check, verify_gamma, Basepoints, CriterionReport,
    KernelGamma, Sample,
};
use crate::error::{Error, Result};
use crate::geometry::{pseudo_disc, rho_c, DiscPoint};
use crate::measures::{pushforward_atoms, Atom, DiscMeasure, MeasureSpec, QuadratureGrid};
use crate::spaces::{bergman_norm_checked, test_function, AnalyticFunction, OperatorSpec, SelfMap};
use crate::weights::{gamma_for, GammaCheck, RadialWeight, WeightSpec};

pub const CONFIG_SCHEMA: &str = "bergman-config/1";
pub const REPORT_SCHEMA: &str = "bergman-report/1";

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RESOURCE: i32 = 3;
pub const EXIT_VERIFY_FAILED: i32 = 4;

const DEFAULT_GRID_LEVEL: u32 = 10;
const DEFAULT_RADIUS: f64 = 0.5;
const DEFAULT_DEPTH: u32 = 10;

#[derive(Debug, Parser)]
#[command(name = "bergman", version, about = "Criteria for weighted composition operators on Bergman spaces")]
pub struct Cli {
    /// JSON experiment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for report.json and samples.csv.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Overrides the config grid level.
    #[arg(long, global = true)]
    pub grid_level: Option<u32>,
    /// Worker thread cap.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Omit timestamps and timings from the report.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Doubling-class diagnostics for the config weight.
    ClassifyWeight,
    /// Bergman norm of the config function on two grid levels.
    Norm,
    /// Boundedness and compactness functionals.
    #[command(subcommand)]
    Criterion(CriterionCommand),
    /// Numerical checks of the underlying estimates.
    #[command(subcommand)]
    Verify(VerifyCommand),
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum CriterionCommand {
    /// Local embedding functional over pseudohyperbolic discs.
    EmbeddingSup,
    /// `L^s` norm of the local functional, or of the pushforward when an operator is given.
    EmbeddingLs,
    /// Embedding functional over Carleson boxes.
    Carleson,
    /// Berezin-type transform of the weighted pushforward.
    Berezin,
    /// Supremum of `|u| / ((1 - |phi|)^n omega(S(phi))^(1/p))`.
    Hinf,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum VerifyCommand {
    /// Kernel integral bound for the config or fitted gamma.
    Gamma,
    /// Finite, grid-stable pointwise derivative bounds.
    Lemma21,
    /// Norm comparison between the weight and its tilde weight.
    NormEquiv,
    /// Boundary distance of random pseudohyperbolic discs.
    Pseudodisc,
    /// Pushforward integrals against direct sums.
    Pushforward,
}

impl Command {
    fn name(&self) -> String {
        match self {
            Command::ClassifyWeight => "classify-weight".into(),
            Command::Norm => "norm".into(),
            Command::Criterion(c) => format!("criterion {}", kebab(c)),
            Command::Verify(v) => format!("verify {}", kebab(v)),
        }
    }

    fn needs_config(&self) -> bool {
        !matches!(self, Command::Verify(VerifyCommand::Pseudodisc))
    }
}

fn kebab(x: &impl std::fmt::Debug) -> String {
    let raw = format!("{x:?}");
    let mut out = String::new();
    for (i, ch) in raw.chars().enumerate() {
        if ch.is_ascii_uppercase() {
            if i > 0 {
                out.push('-');
            }
            out.push(ch.to_ascii_lowercase());
        } else {
            out.push(ch);
        }
    }
    out
}

/// Experiment configuration read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    #[serde(default)]
    pub weight: Option<WeightSpec>,
    #[serde(default)]
    pub measure: Option<MeasureSpec>,
    /// Density of the target measure `nu` for operator criteria.
    #[serde(default)]
    pub nu_weight: Option<WeightSpec>,
    #[serde(default)]
    pub operator: Option<OperatorSpec>,
    #[serde(default)]
    pub function: Option<AnalyticFunction>,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub q: Option<f64>,
    /// Derivative order for the embedding criteria.
    #[serde(default)]
    pub n: u32,
    #[serde(default)]
    pub grid_level: Option<u32>,
    /// Pseudohyperbolic radius of the local discs.
    #[serde(default)]
    pub r: Option<f64>,
    #[serde(default)]
    pub basepoints: Option<Basepoints>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Sample count for the randomized verifications.
    #[serde(default)]
    pub samples: Option<usize>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(Error::Config("config is empty".into()));
        }
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config does not parse: {e}")))?;
        if cfg.schema != CONFIG_SCHEMA {
            return Err(Error::Config(format!(
                "unsupported schema `{}`, expected `{CONFIG_SCHEMA}`",
                cfg.schema
            )));
        }
        for (name, v) in [("p", cfg.p), ("q", cfg.q)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::Config(format!("{name} must be positive, got {v}")));
                }
            }
        }
        if let Some(r) = cfg.r {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::Config(format!("r must lie in (0, 1), got {r}")));
            }
        }
        if let Some(op) = &cfg.operator {
            op.phi.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn defaults() -> Self {
        ExperimentConfig {
            schema: CONFIG_SCHEMA.into(),
            weight: None,
            measure: None,
            nu_weight: None,
            operator: None,
            function: None,
            p: None,
            q: None,
            n: 0,
            grid_level: None,
            r: None,
            basepoints: None,
            gamma: None,
            seed: 0,
            samples: None,
        }
    }

    fn weight(&self) -> Result<RadialWeight> {
        let spec = self.weight.as_ref().ok_or_else(|| missing("weight"))?;
        RadialWeight::from_spec(spec)
    }

    fn p(&self) -> Result<f64> {
        self.p.ok_or_else(|| missing("p"))
    }

    fn q(&self) -> Result<f64> {
        self.q.ok_or_else(|| missing("q"))
    }

    fn operator(&self) -> Result<OperatorSpec> {
        self.operator.clone().ok_or_else(|| missing("operator"))
    }

    fn radius(&self) -> f64 {
        self.r.unwrap_or(DEFAULT_RADIUS)
    }

    fn basepoints(&self) -> Basepoints {
        self.basepoints.clone().unwrap_or(Basepoints::Lattice {
            r: DEFAULT_RADIUS,
            depth: DEFAULT_DEPTH,
        })
    }
}

fn missing(field: &str) -> Error {
    Error::Config(format!("config field `{field}` is required for this command"))
}

/// Result of one invocation.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Value,
    pub samples: Vec<Sample>,
    /// `Some` for verifications.
    pub passed: Option<bool>,
    pub summary: String,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Json(_) => EXIT_USAGE,
        Error::Resource { .. } => EXIT_RESOURCE,
        _ => EXIT_ERROR,
    }
}

pub fn error_json(err: &Error) -> Value {
    json!({ "error": { "kind": err.kind(), "message": err.to_string() } })
}

/// Parses arguments, runs the command and writes outputs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            match outcome.passed {
                Some(false) => EXIT_VERIFY_FAILED,
                _ => EXIT_OK,
            }
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            exit_code(&e)
        }
    }
}

/// Runs the command and writes `report.json` and `samples.csv` under `--out`.
pub fn execute(cli: &Cli) -> Result<Outcome> {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    }
    let config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None if cli.command.needs_config() => {
            return Err(Error::Config(format!("`{}` needs --config", cli.command.name())))
        }
        None => ExperimentConfig::defaults(),
    };
    let level = cli.grid_level.or(config.grid_level).unwrap_or(DEFAULT_GRID_LEVEL);
    let start = Instant::now();
    let outcome = run(cli.command, &config, level)?;
    let mut report = json!({
        "schema": REPORT_SCHEMA,
        "command": cli.command.name(),
        "grid_level": level,
        "config": config,
        "result": outcome.report,
    });
    if let Some(passed) = outcome.passed {
        report["passed"] = json!(passed);
    }
    if !cli.deterministic {
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        report["generated_at_unix"] = json!(now);
        report["elapsed_seconds"] = json!(start.elapsed().as_secs_f64());
    }
    fs::create_dir_all(&cli.out)?;
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    fs::write(cli.out.join("report.json"), text)?;
    write_samples(&cli.out.join("samples.csv"), &outcome.samples)?;
    Ok(Outcome { report, ..outcome })
}

fn write_samples(path: &Path, samples: &[Sample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["re", "im", "value"])?;
    for s in samples {
        w.write_record([s.re.to_string(), s.im.to_string(), s.value.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs one command without touching the filesystem for outputs.
pub fn run(command: Command, config: &ExperimentConfig, level: u32) -> Result<Outcome> {
    match command {
        Command::ClassifyWeight => classify_weight(config),
        Command::Norm => norm(config, level),
        Command::Criterion(c) => criterion(c, config, level),
        Command::Verify(v) => verify(v, config, level),
    }
}

fn classify_weight(config: &ExperimentConfig) -> Result<Outcome> {
    let w = config.weight()?;
    let report = w.classify(64)?;
    let mut value = json!({ "classification": report });
    if let (Some(p), true) = (config.p, report.flags.d) {
        value["gamma"] = serde_json::to_value(gamma_for(&w, p, &report)?)?;
    }
    let summary = format!(
        "{}: dhat={} dcheck={} d={} m={}",
        report.weight, report.flags.dhat, report.flags.dcheck, report.flags.d, report.flags.m
    );
    Ok(Outcome {
        report: value,
        samples: Vec::new(),
        passed: None,
        summary,
    })
}

fn norm(config: &ExperimentConfig, level: u32) -> Result<Outcome> {
    let w = config.weight()?;
    let p = config.p()?;
    let f = config.function.as_ref().ok_or_else(|| missing("function"))?;
    let grid = QuadratureGrid::new(level)?;
    let est = bergman_norm_checked(f, p, &w, &grid)?;
    Ok(Outcome {
        summary: format!("norm = {} (refined {}, stable {})", est.value, est.refined, est.stable),
        report: serde_json::to_value(est)?,
        samples: Vec::new(),
        passed: None,
    })
}

fn criterion_outcome(rep: CriterionReport) -> Result<Outcome> {
    let summary = format!(
        "{:?}: value={} verdict={} compact={}",
        rep.criterion_id,
        rep.value(),
        serde_json::to_value(rep.verdict)?.as_str().unwrap_or(""),
        serde_json::to_value(rep.compact_verdict)?.as_str().unwrap_or("")
    );
    Ok(Outcome {
        samples: rep.samples.clone(),
        report: serde_json::to_value(&rep)?,
        passed: None,
        summary,
    })
}

fn measure(config: &ExperimentConfig, grid: &Arc<QuadratureGrid>) -> Result<DiscMeasure> {
    config.measure.as_ref().ok_or_else(|| missing("measure"))?.build(grid.clone())
}

/// Validated kernel exponent: the config value checked by `verify_gamma`,
/// or the automatic choice for the weight.
fn kernel_gamma(config: &ExperimentConfig, w: &RadialWeight, p: f64) -> Result<KernelGamma> {
    let check = GammaCheck::standard()?;
    match config.gamma {
        Some(g) => {
            let v = verify_gamma(w, p, g, &check.basepoints, &check.grid)?;
            Ok(KernelGamma {
                gamma: g,
                validated: v.passed,
            })
        }
        None => {
            let report = w.classify(64)?;
            let choice = gamma_for(w, p, &report)?;
            Ok(KernelGamma {
                gamma: choice.gamma,
                validated: choice.verified,
            })
        }
    }
}

fn criterion(c: CriterionCommand, config: &ExperimentConfig, level: u32) -> Result<Outcome> {
    let w = config.weight()?;
    let p = config.p()?;
    let grid = Arc::new(QuadratureGrid::new(level)?);
    let rep = match c {
        CriterionCommand::EmbeddingSup => {
            let mu = measure(config, &grid)?;
            embedding_sup_criterion(p, config.q()?, config.n, &w, &mu, config.radius(), &config.basepoints())?
        }
        CriterionCommand::Carleson => {
            let mu = measure(config, &grid)?;
            carleson_criterion(p, config.q()?, config.n, &w, &mu, &config.basepoints())?
        }
        CriterionCommand::EmbeddingLs => {
            let mu = measure(config, &grid)?;
            match &config.operator {
                Some(op) => op_pushforward_criterion(op, p, config.q()?, &w, &mu, config.radius(), &grid)?,
                None => embedding_ls_criterion(p, config.q()?, config.n, &w, &mu, config.radius(), &grid)?,
            }
        }
        CriterionCommand::Berezin => {
            let op = config.operator()?;
            let nu = RadialWeight::from_spec(config.nu_weight.as_ref().ok_or_else(|| missing("nu_weight"))?)?;
            let gamma = kernel_gamma(config, &w, p)?;
            let bp = config.basepoints.clone().unwrap_or(Basepoints::Ray {
                depth: 6,
                per_level: 2,
                angle: 0.0,
            });
            berezin_criterion(&op, p, config.q()?, &w, &nu, gamma, &bp, &grid)?
        }
        CriterionCommand::Hinf => hinf_criterion(&config.operator()?, p, &w, &grid)?,
    };
    criterion_outcome(rep)
}

fn verify(v: VerifyCommand, config: &ExperimentConfig, level: u32) -> Result<Outcome> {
    match v {
        VerifyCommand::Gamma => verify_gamma_cmd(config),
        VerifyCommand::Lemma21 => verify_point_evaluation(config, level),
        VerifyCommand::NormEquiv => verify_norm_equiv(config, level),
        VerifyCommand::Pseudodisc => verify_pseudodisc(config),
        VerifyCommand::Pushforward => verify_pushforward(config),
    }
}

fn pass_line(passed: bool, name: &str, detail: String) -> String {
    format!("{} verify {name}: {detail}", if passed { "PASS" } else { "FAIL" })
}

fn verify_gamma_cmd(config: &ExperimentConfig) -> Result<Outcome> {
    let w = config.weight()?;
    let p = config.p()?;
    let check = GammaCheck::standard()?;
    let (gamma, verification) = match config.gamma {
        Some(g) => (g, verify_gamma(&w, p, g, &check.basepoints, &check.grid)?),
        None => {
            let choice = gamma_for(&w, p, &w.classify(64)?)?;
            (choice.gamma, choice.verification)
        }
    };
    let samples = verification
        .ratios
        .iter()
        .map(|(m, _, fine)| Sample {
            re: *m,
            im: 0.0,
            value: *fine,
        })
        .collect();
    let passed = verification.passed;
    Ok(Outcome {
        summary: pass_line(
            passed,
            "gamma",
            format!(
                "gamma={gamma} worst_C={} drift={:.4}",
                verification.worst_c, verification.drift
            ),
        ),
        report: json!({ "gamma": gamma, "basepoints": gamma_basepoints().len(), "verification": verification }),
        samples,
        passed: Some(passed),
    })
}

/// Random polynomial of degree at most `max_degree` with coefficients in the unit square.
pub fn random_polynomial(rng: &mut ChaCha8Rng, max_degree: usize) -> AnalyticFunction {
    let degree = rng.gen_range(0..=max_degree);
    let coeffs = (0..=degree)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    AnalyticFunction::polynomial(coeffs)
}

fn verify_point_evaluation(config: &ExperimentConfig, level: u32) -> Result<Outcome> {
    let w = config.weight()?;
    let p = config.p()?;
    let grid = QuadratureGrid::new(level)?;
    let gamma = config.gamma.unwrap_or(2.0 * 2.0 / p);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut family: Vec<AnalyticFunction> = [0.0, 0.5, 0.9, 0.99]
        .iter()
        .map(|&m| test_function(DiscPoint::new_unchecked(Complex64::new(m, 0.0)), gamma, p, &w))
        .collect::<Result<_>>()?;
    family.extend((0..config.samples.unwrap_or(20)).map(|_| random_polynomial(&mut rng, 10)));
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    let mut passed = true;
    for (i, f) in family.iter().enumerate() {
        for n in 0..=2 {
            let c = point_evaluation_check(f, n, p, &w, &grid)?;
            passed &= c.finite && c.relative_change < 0.1;
            worst = worst.max(c.relative_change);
            rows.push(json!({ "member": i, "n": n, "check": c }));
        }
    }
    Ok(Outcome {
        summary: pass_line(passed, "lemma21", format!("worst relative change {worst:.4}")),
        report: json!({ "gamma": gamma, "checks": rows, "worst_relative_change": worst }),
        samples: Vec::new(),
        passed: Some(passed),
    })
}

fn verify_norm_equiv(config: &ExperimentConfig, level: u32) -> Result<Outcome> {
    let w = config.weight()?;
    let tilde = w.tilde()?;
    let p = config.p()?;
    let grid = QuadratureGrid::new(level)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut ratios = Vec::new();
    let mut worst = 0.0f64;
    for _ in 0..config.samples.unwrap_or(50) {
        let f = random_polynomial(&mut rng, 20);
        let a = bergman_norm_checked(&f, p, &w, &grid)?;
        let b = bergman_norm_checked(&f, p, &tilde, &grid)?;
        let coarse = b.value / a.value;
        let fine = b.refined / a.refined;
        worst = worst.max((fine - coarse).abs() / fine);
        ratios.push(fine);
    }
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    let bracket = hi.max(1.0 / lo);
    let passed = worst < 0.01 && bracket.is_finite();
    Ok(Outcome {
        summary: pass_line(
            passed,
            "norm-equiv",
            format!("ratios in [{lo:.4}, {hi:.4}], C={bracket:.4}, worst change {worst:.2e}"),
        ),
        report: json!({ "ratios": ratios, "min": lo, "max": hi, "bracket_constant": bracket, "worst_relative_change": worst }),
        samples: Vec::new(),
        passed: Some(passed),
    })
}

/// Largest `|rho(a, zeta) - r|` over boundary samples of random pseudohyperbolic discs.
pub fn pseudodisc_deviation(seed: u64, discs: usize, boundary: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..discs {
        let a = DiscPoint::from_polar(0.999 * rng.gen::<f64>().sqrt(), rng.gen_range(0.0..2.0 * PI))?;
        let r = rng.gen_range(0.01..0.99);
        let d = pseudo_disc(a, r)?;
        for k in 0..boundary {
            let zeta = d.euclid_center.z() + Complex64::from_polar(d.euclid_radius, 2.0 * PI * k as f64 / boundary as f64);
            worst = worst.max((rho_c(a.z(), zeta) - r).abs());
        }
    }
    Ok(worst)
}

fn verify_pseudodisc(config: &ExperimentConfig) -> Result<Outcome> {
    let discs = config.samples.unwrap_or(1000);
    let worst = pseudodisc_deviation(config.seed, discs, 64)?;
    let passed = worst < 1e-9;
    Ok(Outcome {
        summary: pass_line(passed, "pseudodisc", format!("max deviation {worst:.3e} over {discs} discs")),
        report: json!({ "discs": discs, "boundary_samples": 64, "max_deviation": worst, "tolerance": 1e-9 }),
        samples: Vec::new(),
        passed: Some(passed),
    })
}

/// Random atoms in `|z| < 0.99` with masses in `(0, 1)`.
pub fn random_atoms(seed: u64, count: usize) -> Vec<Atom> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let z = Complex64::from_polar(0.99 * rng.gen::<f64>().sqrt(), rng.gen_range(0.0..2.0 * PI));
            Atom {
                re: z.re,
                im: z.im,
                mass: rng.gen_range(0.0..1.0),
            }
        })
        .collect()
}

/// `(int g d(phi_*(h mu)), int (g o phi) h dmu)` for atomic `mu`.
pub fn pushforward_sides<G, H>(phi: &SelfMap, h: H, g: G, atoms: &[Atom]) -> Result<(f64, f64)>
where
    G: Fn(Complex64) -> f64,
    H: Fn(Complex64) -> f64 + Sync,
{
    let mu = DiscMeasure::atoms(atoms.to_vec())?;
    let pushed = pushforward_atoms(phi, &h, &mu)?;
    let lhs: f64 = pushed.iter().map(|a| g(a.z()) * a.mass).sum();
    let rhs: f64 = atoms
        .iter()
        .filter(|a| a.mass != 0.0)
        .map(|a| g(phi.apply(a.z())) * h(a.z()) * a.mass)
        .sum();
    Ok((lhs, rhs))
}

fn verify_pushforward(config: &ExperimentConfig) -> Result<Outcome> {
    let atoms = random_atoms(config.seed, config.samples.unwrap_or(100_000));
    let maps = match &config.operator {
        Some(op) => vec![op.phi.clone()],
        None => vec![
            SelfMap::Identity,
            SelfMap::Power { k: 2 },
            SelfMap::Moebius {
                c: DiscPoint::new(0.3, 0.0)?,
            },
        ],
    };
    let h = |z: Complex64| 1.0 + z.norm_sqr();
    let g = |w: Complex64| w.re * w.re - 0.5 * w.im + (1.0 - w.norm_sqr()).sqrt();
    let mut rows = BTreeMap::new();
    let mut worst = 0.0f64;
    for phi in &maps {
        let (lhs, rhs) = pushforward_sides(phi, h, g, &atoms)?;
        let rel = (lhs - rhs).abs() / rhs.abs().max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
        rows.insert(
            serde_json::to_string(phi)?,
            json!({ "pushforward": lhs, "change_of_variable": rhs, "relative_difference": rel }),
        );
    }
    let passed = worst <= 1e-12;
    Ok(Outcome {
        summary: pass_line(passed, "pushforward", format!("worst relative difference {worst:.3e}")),
        report: json!({ "atoms": atoms.len(), "maps": rows, "worst_relative_difference": worst }),
        samples: Vec::new(),
        passed: Some(passed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_names_are_kebab() {
        assert_eq!(Command::Verify(VerifyCommand::NormEquiv).name(), "verify norm-equiv");
        assert_eq!(Command::Criterion(CriterionCommand::EmbeddingSup).name(), "criterion embedding-sup");
        assert_eq!(Command::ClassifyWeight.name(), "classify-weight");
    }

    #[test]
    fn config_validation() {
        assert!(matches!(ExperimentConfig::parse(""), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse("{}"), Err(Error::Config(_))));
        assert!(matches!(
            ExperimentConfig::parse(r#"{"schema": "bergman-config/0"}"#),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            ExperimentConfig::parse(r#"{"schema": "bergman-config/1", "p": -1}"#),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            ExperimentConfig::parse(r#"{"schema": "bergman-config/1", "operator": {"phi": {"kind": "scale", "r": 2.0}, "u": {"kind": "poly", "coeffs": [[1, 0]]}, "n": 0}}"#),
            Err(Error::Config(_))
        ));
        let cfg = ExperimentConfig::parse(
            r#"{"schema": "bergman-config/1", "weight": {"kind": "power", "alpha": 1}, "p": 2, "q": 1}"#,
        )
        .unwrap();
        assert_eq!(cfg.p, Some(2.0));
        assert_eq!(cfg.weight, Some(WeightSpec::Power { alpha: 1.0 }));
    }

    #[test]
    fn missing_fields_are_usage_errors() {
        let cfg = ExperimentConfig::defaults();
        let err = run(Command::Criterion(CriterionCommand::Hinf), &cfg, 6).unwrap_err();
        assert_eq!(exit_code(&err), EXIT_USAGE);
    }

    #[test]
    fn pseudodisc_and_pushforward_pass() {
        assert!(pseudodisc_deviation(7, 200, 64).unwrap() < 1e-9);
        let atoms = random_atoms(3, 2000);
        let (a, b) = pushforward_sides(&SelfMap::Power { k: 2 }, |_| 1.0, |w| w.re, &atoms).unwrap();
        assert!((a - b).abs() <= 1e-12 * b.abs());
    }

    #[test]
    fn resource_errors_map_to_their_code() {
        let err = QuadratureGrid::new(20).unwrap_err();
        assert_eq!(exit_code(&err), EXIT_RESOURCE);
    }
}
