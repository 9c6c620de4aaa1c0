//! Command-line surface: JSON configuration, subcommand dispatch, report
//! serialization, and optional CSV traces.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use num_complex::Complex64 as C;
use num_rational::Rational64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::cover::{abhyankar_lcm, regular_dessin_types, Cover, CoverSpec, RamificationProfile};
use crate::elog::{continue_log_traced, log_branch, principal_log, SectionSpec};
use crate::paths::realize;
use crate::periods::{continue_frame, series_frame, DEFAULT_SNAP_TOL};
use crate::pipeline::{
    masser_demo, run_pipeline, LoopReport, PipelineError, PipelineOptions, PipelineReport,
};
use crate::words::{decompose_kernel, in_kernel, Alphabet, Word};

#[derive(Error, Debug)]
pub enum ShellError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{0}")]
    Stage(String),
}

impl From<crate::cover::CoverError> for ShellError {
    fn from(e: crate::cover::CoverError) -> Self {
        ShellError::Pipeline(e.into())
    }
}
impl From<crate::paths::PathError> for ShellError {
    fn from(e: crate::paths::PathError) -> Self {
        ShellError::Pipeline(e.into())
    }
}
impl From<crate::periods::PeriodError> for ShellError {
    fn from(e: crate::periods::PeriodError) -> Self {
        ShellError::Pipeline(e.into())
    }
}
impl From<crate::elog::ElogError> for ShellError {
    fn from(e: crate::elog::ElogError) -> Self {
        ShellError::Pipeline(e.into())
    }
}
impl From<crate::words::WordError> for ShellError {
    fn from(e: crate::words::WordError) -> Self {
        ShellError::Pipeline(e.into())
    }
}

/// One JSON document per run. Polynomials are lists of monomials: the cover
/// as (lambda-power, w-power, numerator, denominator), the section
/// coordinates as (lambda-power, w-power, re, im).
#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct RunConfig {
    pub cover: Vec<(u32, u32, i64, i64)>,
    pub section_x: Vec<(u32, u32, f64, f64)>,
    pub section_y: Vec<(u32, u32, f64, f64)>,
    pub section_name: String,
    pub basepoint: (f64, f64),
    pub tol: f64,
    pub alpha_max_len: usize,
    pub delta_max_level: u32,
    pub delta_max_len: usize,
    pub denom_bound: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        // The two-sheeted demonstration fixture: w² = 2 − λ, (X, Y) = (2, √2·w).
        let r2 = std::f64::consts::SQRT_2;
        RunConfig {
            cover: vec![(0, 2, 1, 1), (1, 0, 1, 1), (0, 0, -2, 1)],
            section_x: vec![(0, 0, 2.0, 0.0)],
            section_y: vec![(0, 1, r2, 0.0)],
            section_name: "masser".into(),
            basepoint: (0.5, 0.0),
            tol: 1e-8,
            alpha_max_len: 2,
            delta_max_level: 2,
            delta_max_len: 8,
            denom_bound: 24,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ShellError> {
        let text = fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ShellError> {
        if self.tol <= 0.0 {
            return Err(ShellError::Config("tolerance must be positive".into()));
        }
        if self.cover.is_empty() {
            return Err(ShellError::Config("cover polynomial is empty".into()));
        }
        if self.cover.iter().any(|&(_, _, _, den)| den == 0) {
            return Err(ShellError::Config("cover coefficient with zero denominator".into()));
        }
        Ok(())
    }

    pub fn cover_spec(&self) -> Result<CoverSpec, ShellError> {
        let terms = self
            .cover
            .iter()
            .map(|&(i, j, num, den)| (i, j, Rational64::new(num, den)))
            .collect();
        Ok(CoverSpec::new(terms)?)
    }

    pub fn section_spec(&self) -> SectionSpec {
        let conv = |v: &Vec<(u32, u32, f64, f64)>| -> Vec<(u32, u32, C)> {
            v.iter().map(|&(i, j, re, im)| (i, j, C::new(re, im))).collect()
        };
        SectionSpec::new(&self.section_name, conv(&self.section_x), conv(&self.section_y))
    }

    pub fn base(&self) -> C {
        C::new(self.basepoint.0, self.basepoint.1)
    }

    pub fn pipeline_options(&self) -> PipelineOptions {
        PipelineOptions {
            basepoint: self.base(),
            tol: self.tol,
            alpha_max_len: self.alpha_max_len,
            delta_max_level: self.delta_max_level,
            delta_max_len: self.delta_max_len,
            denom_bound: self.denom_bound,
        }
    }

    fn cover_instance(&self) -> Result<Cover, ShellError> {
        Ok(Cover::new(self.cover_spec()?, self.base())?)
    }
}

/// Everything a command emits: the echo of what ran, per-stage details,
/// every residual that backs a numeric claim, and a final verdict.
#[derive(Serialize, Debug)]
pub struct ReportBundle {
    pub command: String,
    pub inputs: Value,
    pub stages: Vec<Value>,
    pub residuals: Vec<(String, f64)>,
    pub verdict: String,
    pub elapsed_seconds: f64,
}

impl ReportBundle {
    pub fn passed(&self) -> bool {
        self.verdict == "pass"
    }
}

fn mat_json(m: &crate::rep::Mat2) -> Value {
    let [a, b, c, d] = m.entries;
    json!([[a as i64, b as i64], [c as i64, d as i64]])
}

fn loop_json(r: &LoopReport) -> Value {
    json!({
        "word": r.word.to_token_string(),
        "period_matrix": mat_json(&r.period_matrix),
        "log_variation": [r.log_variation.0, r.log_variation.1],
        "certificate_level": r.certificate.witness_level(),
        "lift_closed": r.lift_closed,
        "residuals": r.residuals,
    })
}

fn pipeline_json(r: &PipelineReport) -> (Vec<Value>, Vec<(String, f64)>) {
    let mut stages = vec![
        json!({"stage": "cover", "degree": r.degree, "galois": r.galois}),
        json!({
            "stage": "trace normalization",
            "multiplier": r.trace_multiplier,
            "half_shift": [r.half_shift.0, r.half_shift.1],
            "sign_residual": r.sign_residual,
        }),
        json!({
            "stage": "delta words",
            "words": r.deltas.iter().map(|d| d.to_token_string()).collect::<Vec<_>>(),
        }),
        json!({
            "stage": "alpha",
            "word": r.alpha.to_token_string(),
            "variation": [r.omega_alpha.coords.0, r.omega_alpha.coords.1],
            "residual": r.omega_alpha.residual,
        }),
        json!({"stage": "index", "sheet": r.index}),
        json!({"stage": "gamma", "report": loop_json(&r.gamma)}),
        json!({
            "stage": "gamma_prime",
            "zeta_power": r.zeta_power,
            "report": loop_json(&r.gamma_prime),
        }),
        json!({
            "stage": "rank",
            "matrix": r.rank.matrix,
            "determinant": r.rank.determinant,
            "rank_two": r.rank.rank_two,
        }),
    ];
    let mut residuals: Vec<(String, f64)> = Vec::new();
    if let Some(s) = r.sign_residual {
        residuals.push(("delta sign relation".into(), s));
    }
    residuals.push(("alpha variation snap".into(), r.omega_alpha.residual));
    for (name, v) in &r.gamma.residuals {
        residuals.push((format!("gamma {name}"), *v));
    }
    for (name, v) in &r.gamma_prime.residuals {
        residuals.push((format!("gamma_prime {name}"), *v));
    }
    stages.shrink_to_fit();
    (stages, residuals)
}

/// Re-run the logarithm continuation around a loop and write its CSV trace
/// plus the sampled base path.
fn write_traces(
    cfg: &RunConfig,
    word: &Word,
    dir: &Path,
    stem: &str,
) -> Result<Vec<PathBuf>, ShellError> {
    fs::create_dir_all(dir)?;
    let cover = cfg.cover_instance()?;
    let path = realize(word, &cover.plane, cover.radius)?;
    let mut written = Vec::new();
    let path_file = dir.join(format!("{stem}_path.csv"));
    fs::write(&path_file, path.to_csv(512))?;
    written.push(path_file);
    let sec = cfg.section_spec();
    let b1 = cover.base_point(1);
    let frame = series_frame(cfg.base())?;
    let z = principal_log(cfg.base(), &sec.eval(cfg.base(), b1.w), &frame)?;
    let branch = log_branch(b1, z, frame)?;
    let lifted = cover.lift_path(&path, &b1)?;
    let (_, trace) = continue_log_traced(&cover.spec, &sec, &branch, &lifted, cfg.tol)?;
    let log_file = dir.join(format!("{stem}_log.csv"));
    fs::write(&log_file, trace.to_csv())?;
    written.push(log_file);
    Ok(written)
}

pub fn cmd_periods(cfg: &RunConfig, word_str: &str) -> Result<ReportBundle, ShellError> {
    let t = Instant::now();
    let cover = cfg.cover_instance()?;
    let word = Alphabet::new(cover.k()).parse(word_str)?;
    let frame = series_frame(cfg.base())?;
    let path = realize(&word, &cover.plane, cover.radius)?;
    let res = continue_frame(&frame, &path, DEFAULT_SNAP_TOL)?;
    let matrix = res
        .transported_start_basis
        .ok_or_else(|| ShellError::Stage("realized word is not a loop".into()))?;
    let pass = res.residual < DEFAULT_SNAP_TOL;
    Ok(ReportBundle {
        command: "periods".into(),
        inputs: json!({"word": word.to_token_string(), "basepoint": cfg.basepoint}),
        stages: vec![json!({
            "stage": "continue_frame",
            "matrix": mat_json(&matrix),
            "end_omega1": [res.end_frame.omega1.re, res.end_frame.omega1.im],
            "end_omega2": [res.end_frame.omega2.re, res.end_frame.omega2.im],
        })],
        residuals: vec![("period snap".into(), res.residual)],
        verdict: if pass { "pass".into() } else { format!("fail: residual {}", res.residual) },
        elapsed_seconds: t.elapsed().as_secs_f64(),
    })
}

pub fn cmd_kernel(cfg: &RunConfig, word_str: &str) -> Result<ReportBundle, ShellError> {
    let t = Instant::now();
    let cover = cfg.cover_instance()?;
    let word = Alphabet::new(cover.k()).parse(word_str)?;
    let member = in_kernel(&word);
    let mut stages = vec![json!({"stage": "membership", "in_kernel": member})];
    if member {
        let cert = decompose_kernel(&word)?;
        let ok = cert.expand() == word;
        stages.push(json!({
            "stage": "certificate",
            "level": cert.witness_level(),
            "remultiplies": ok,
        }));
        if !ok {
            return Err(ShellError::Stage("certificate does not re-multiply".into()));
        }
    }
    Ok(ReportBundle {
        command: "kernel".into(),
        inputs: json!({"word": word.to_token_string()}),
        stages,
        residuals: vec![],
        verdict: "pass".into(),
        elapsed_seconds: t.elapsed().as_secs_f64(),
    })
}

pub fn cmd_lift(cfg: &RunConfig, word_str: &str, sheet: usize) -> Result<ReportBundle, ShellError> {
    let t = Instant::now();
    let cover = cfg.cover_instance()?;
    let word = Alphabet::new(cover.k()).parse(word_str)?;
    if sheet == 0 || sheet > cover.degree() {
        return Err(ShellError::Config(format!("sheet {sheet} out of range")));
    }
    let path = realize(&word, &cover.plane, cover.radius)?;
    let lifted = cover.lift_path(&path, &cover.base_point(sheet))?;
    let predicted = cover.fiber_monodromy(&word).apply(sheet - 1) + 1;
    let agrees = lifted.end.sheet == predicted;
    Ok(ReportBundle {
        command: "lift".into(),
        inputs: json!({"word": word.to_token_string(), "sheet": sheet}),
        stages: vec![json!({
            "stage": "lift",
            "end_sheet": lifted.end.sheet,
            "closed": lifted.end.sheet == sheet,
            "matches_cached_permutation": agrees,
        })],
        residuals: vec![],
        verdict: if agrees { "pass".into() } else { "fail: permutation mismatch".into() },
        elapsed_seconds: t.elapsed().as_secs_f64(),
    })
}

pub fn cmd_delta(cfg: &RunConfig, from: usize, to: usize) -> Result<ReportBundle, ShellError> {
    let t = Instant::now();
    let cover = cfg.cover_instance()?;
    let word = cover.find_delta(from, to, cfg.delta_max_level, cfg.delta_max_len)?;
    let moved = cover.fiber_monodromy(&word).apply(from - 1) + 1;
    Ok(ReportBundle {
        command: "delta".into(),
        inputs: json!({"from": from, "to": to}),
        stages: vec![json!({
            "stage": "find_delta",
            "word": word.to_token_string(),
            "in_kernel": in_kernel(&word),
            "reaches": moved,
        })],
        residuals: vec![],
        verdict: if moved == to && in_kernel(&word) { "pass".into() } else { "fail".into() },
        elapsed_seconds: t.elapsed().as_secs_f64(),
    })
}

pub fn cmd_gamma(cfg: &RunConfig, trace_dir: Option<&Path>) -> Result<ReportBundle, ShellError> {
    let t = Instant::now();
    let report = run_pipeline(cfg.cover_spec()?, cfg.section_spec(), &cfg.pipeline_options())?;
    finish_pipeline_bundle("gamma", cfg, report, trace_dir, t)
}

pub fn cmd_masser(trace_dir: Option<&Path>) -> Result<ReportBundle, ShellError> {
    let t = Instant::now();
    let cfg = RunConfig::default();
    let report = masser_demo()?;
    finish_pipeline_bundle("masser", &cfg, report, trace_dir, t)
}

fn finish_pipeline_bundle(
    command: &str,
    cfg: &RunConfig,
    report: PipelineReport,
    trace_dir: Option<&Path>,
    t: Instant,
) -> Result<ReportBundle, ShellError> {
    let (mut stages, residuals) = pipeline_json(&report);
    if let Some(dir) = trace_dir {
        let files = write_traces(cfg, &report.gamma.word, dir, "gamma")?;
        stages.push(json!({
            "stage": "traces",
            "files": files.iter().map(|f| f.display().to_string()).collect::<Vec<_>>(),
        }));
    }
    let pass = report.rank.rank_two
        && report.gamma.period_matrix.is_identity()
        && report.gamma.log_variation != (0, 0);
    Ok(ReportBundle {
        command: command.into(),
        inputs: serde_json::to_value(cfg)?,
        stages,
        residuals,
        verdict: if pass { "pass".into() } else { "fail: rank certificate incomplete".into() },
        elapsed_seconds: t.elapsed().as_secs_f64(),
    })
}

pub fn cmd_dessins(max_n: u32) -> Result<ReportBundle, ShellError> {
    let t = Instant::now();
    let types = regular_dessin_types(max_n);
    Ok(ReportBundle {
        command: "dessins".into(),
        inputs: json!({"max_n": max_n}),
        stages: vec![json!({"stage": "regular_dessin_types", "types": types})],
        residuals: vec![],
        verdict: "pass".into(),
        elapsed_seconds: t.elapsed().as_secs_f64(),
    })
}

pub fn cmd_abhyankar(first: &[u32], second: &[u32]) -> Result<ReportBundle, ShellError> {
    let t = Instant::now();
    if first.is_empty() || second.is_empty() {
        return Err(ShellError::Config("both index lists must be nonempty".into()));
    }
    let p1 = RamificationProfile::new("0", first.to_vec());
    let p2 = RamificationProfile::new("0", second.to_vec());
    let table = abhyankar_lcm(&p1, &p2);
    let rows: Vec<Value> = table
        .iter()
        .map(|e| {
            json!({
                "e1": e.e1, "e2": e.e2, "composite": e.composite,
                "rel_over_first": e.rel_over_first, "rel_over_second": e.rel_over_second,
            })
        })
        .collect();
    Ok(ReportBundle {
        command: "abhyankar".into(),
        inputs: json!({"first": first, "second": second}),
        stages: vec![json!({"stage": "abhyankar_lcm", "table": rows})],
        residuals: vec![],
        verdict: "pass".into(),
        elapsed_seconds: t.elapsed().as_secs_f64(),
    })
}

#[derive(Parser, Debug)]
#[command(
    name = "legendre-monodromy",
    about = "Monodromy of periods and elliptic logarithms over the Legendre base"
)]
pub struct Cli {
    /// JSON configuration file; defaults to the built-in two-sheet fixture.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override the verification tolerance from the config.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Directory for CSV traces (written only when given).
    #[arg(long, global = true)]
    pub trace: Option<PathBuf>,
    /// Override the generator search length bound.
    #[arg(long, global = true)]
    pub max_len: Option<usize>,
    /// Emit the full report as JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Continue the period frame around a word and print its integer matrix.
    Periods { word: String },
    /// Kernel membership and certificate for a word.
    Kernel { word: String },
    /// Lift a realized word from a sheet and report where it ends.
    Lift {
        word: String,
        #[arg(long, default_value_t = 1)]
        sheet: usize,
    },
    /// Search for a kernel word moving one sheet to another.
    Delta {
        #[arg(long, default_value_t = 1)]
        from: usize,
        #[arg(long, default_value_t = 2)]
        to: usize,
    },
    /// Full construction on the configured cover and section.
    Gamma,
    /// The built-in two-sheet demonstration.
    Masser,
    /// Uniform types of regular covers branched over three points.
    Dessins {
        #[arg(long, default_value_t = 12)]
        max_n: u32,
    },
    /// Composite ramification indices of two profiles.
    Abhyankar {
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,6")]
        first: Vec<u32>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,5,12")]
        second: Vec<u32>,
    },
}

pub fn run(cli: Cli) -> Result<ReportBundle, ShellError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(tol) = cli.tol {
        cfg.tol = tol;
    }
    if let Some(max_len) = cli.max_len {
        cfg.alpha_max_len = max_len;
        cfg.delta_max_len = max_len.max(cfg.delta_max_len);
    }
    cfg.validate()?;
    let trace_dir = cli.trace.as_deref();
    match &cli.command {
        Command::Periods { word } => cmd_periods(&cfg, word),
        Command::Kernel { word } => cmd_kernel(&cfg, word),
        Command::Lift { word, sheet } => cmd_lift(&cfg, word, *sheet),
        Command::Delta { from, to } => cmd_delta(&cfg, *from, *to),
        Command::Gamma => cmd_gamma(&cfg, trace_dir),
        Command::Masser => cmd_masser(trace_dir),
        Command::Dessins { max_n } => cmd_dessins(*max_n),
        Command::Abhyankar { first, second } => cmd_abhyankar(first, second),
    }
}

fn print_human(bundle: &ReportBundle) {
    println!("command: {}", bundle.command);
    for stage in &bundle.stages {
        println!("  {}", stage);
    }
    for (name, r) in &bundle.residuals {
        println!("  residual {name}: {r:.3e}");
    }
    println!("verdict: {} ({:.2}s)", bundle.verdict, bundle.elapsed_seconds);
}

/// Entry point used by the binary: parse, run, print, and map the outcome to
/// an exit code (nonzero on any stage error or failed verdict).
pub fn main_entry() -> std::process::ExitCode {
    let cli = Cli::parse();
    let json = cli.json;
    match run(cli) {
        Ok(bundle) => {
            if json {
                println!("{}", serde_json::to_string_pretty(&bundle).expect("report serializes"));
            } else {
                print_human(&bundle);
            }
            if bundle.passed() {
                std::process::ExitCode::SUCCESS
            } else {
                std::process::ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::ExitCode::FAILURE
        }
    }
}
