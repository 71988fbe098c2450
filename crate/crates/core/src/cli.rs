//! Command-line experiment runner.
//!
//! Each subcommand resolves its configuration from built-in defaults, then
//! the `[subcommand]` table of an optional TOML file (top-level `seed`
//! applies to every table), then flags. The resolved configuration is
//! echoed into every report. `--threads` and `--out` are not part of it:
//! neither affects the numbers.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::deconvolution::{check_conditions, verify_sandwich, Body1d, DeconvParams, DEFAULT_C0};
use crate::density::{m_tilde_profile, run_ratio_experiment, Bandwidth, MTildeConfig, RatioExperiment};
use crate::error::{Error, Result};
use crate::grassmann::{project, random_subspace};
use crate::model::{BodyKind, BodySpec, ConvolutionSchedule, Validate};
use crate::radial::shell_fraction_of_norms;
use crate::rng::{derive_seed, Purpose};
use crate::samplers::{read_bin, whiten, write_bin_with_config, write_csv, NoiseStep, Pipeline, SampleBatch};
use crate::spherical::{gaussian_density, psi_gaussian_scan};
use crate::suite::{self, Profile};

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_SUITE_FAILED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "clt-lab", version, about = "Experiments on gaussian marginals of convex bodies")]
pub struct Cli {
    /// TOML file with a table per subcommand; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file; stdout when absent (required for `bin`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Bin,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw samples from a catalog body, optionally convolved and whitened.
    Sample(SampleArgs),
    /// Project a binary batch onto a random subspace.
    Project(ProjectArgs),
    /// Projected density over the gaussian density on one random subspace.
    Ratio(RatioArgs),
    /// Fraction of samples outside the thin shell.
    Thinshell(ThinshellArgs),
    /// Sphere-marginal kernel against the gaussian density.
    PsiScan(PsiScanArgs),
    /// Radial density profile averaged over random subspaces.
    Mtilde(MtildeArgs),
    /// Deconvolution certificate.
    Deconv(DeconvArgs),
    /// One-dimensional check of the deconvolution sandwich.
    DeconvVerify(DeconvVerifyArgs),
    /// Acceptance criteria.
    Suite(SuiteArgs),
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Args, Serialize)]
pub struct SampleArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub body: Option<BodyKind>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Add noise of variance `n^(-α/(5α+20))` for this `α`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convolve: Option<f64>,
    /// Divide by `√(1 + v)` after adding noise.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub rescale: bool,
    /// Map to zero empirical mean and identity empirical covariance.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub whiten: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub body: BodyKind,
    pub n: usize,
    pub samples: usize,
    pub seed: u64,
    pub convolve: Option<f64>,
    pub rescale: bool,
    pub whiten: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct ProjectArgs {
    /// Binary batch written by `sample --format bin`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub input: PathBuf,
    pub l: usize,
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct RatioArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub body: Option<BodyKind>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_radius: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_step: Option<f64>,
    /// Directions per radius when `l >= 2`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directions: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convolve: Option<f64>,
    /// Compare `(X + Y)/√(1 + v)` with `γ[1]` instead of `X + Y` with `γ[1 + v]`.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub rescale: bool,
    /// Fixed KDE bandwidth; Scott's rule when absent.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatioConfig {
    pub body: BodyKind,
    pub n: usize,
    pub l: usize,
    pub samples: usize,
    pub seed: u64,
    pub max_radius: f64,
    pub grid_step: f64,
    pub directions: usize,
    pub convolve: Option<f64>,
    pub rescale: bool,
    pub bandwidth: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct ThinshellArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub body: Option<BodyKind>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Comma-separated shell half-widths; defaults to `n^(-1/15)`.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThinshellConfig {
    pub body: BodyKind,
    pub n: usize,
    pub samples: usize,
    pub epsilon: Option<Vec<f64>>,
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct PsiScanArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    /// Largest radius; must be below `n^(1/8)`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tmax: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsiScanConfig {
    pub n: usize,
    pub l: usize,
    pub tmax: Option<f64>,
    pub points: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct MtildeArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub body: Option<BodyKind>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius_max: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius_step: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subspaces: Option<usize>,
    /// Samples per subspace.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directions: Option<usize>,
    /// Convolve with the noise of this schedule parameter before projecting.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MtildeCliConfig {
    pub body: BodyKind,
    pub n: usize,
    pub l: usize,
    pub radius_max: f64,
    pub radius_step: f64,
    pub subspaces: usize,
    pub samples: usize,
    pub directions: usize,
    pub alpha: Option<f64>,
    pub bandwidth: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct DeconvArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[arg(long = "R", visible_alias = "radius")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Body1dKind {
    Gaussian,
    Uniform,
    Laplace,
}

#[derive(Debug, Args, Serialize)]
pub struct DeconvVerifyArgs {
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub body: Option<Body1dKind>,
    /// Variance of the gaussian body.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub params: DeconvArgs,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeconvVerifyConfig {
    pub body: Body1dKind,
    pub variance: f64,
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
    #[serde(alias = "R")]
    pub radius: f64,
    pub c0: f64,
    pub points: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct SuiteArgs {
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<Profile>,
    /// Comma-separated criterion numbers; all when absent.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub only: Option<Vec<u8>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub profile: Profile,
    pub only: Option<Vec<u8>>,
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => EXIT_OK,
                _ => EXIT_INVALID,
            };
        }
    };
    match execute_with_threads(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INVALID
        }
    }
}

fn execute_with_threads(cli: &Cli) -> Result<i32> {
    match cli.threads {
        None => execute(cli),
        Some(0) => Err(Error::Config("--threads must be >= 1".into())),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(|| execute(cli)),
    }
}

fn load_file(path: Option<&Path>) -> Result<Option<toml::Table>> {
    let Some(path) = path else { return Ok(None) };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.parse::<toml::Table>()
        .map(Some)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn merge_into(target: &mut Map<String, Value>, source: Value) {
    if let Value::Object(map) = source {
        for (k, v) in map {
            let key = if k == "R" { "radius".to_string() } else { k };
            target.insert(key, v);
        }
    }
}

/// Defaults, then the file's `[name]` table, then flags.
fn resolve<C: DeserializeOwned>(name: &str, defaults: Value, file: Option<&toml::Table>, flags: &impl Serialize) -> Result<C> {
    let mut merged = Map::new();
    merge_into(&mut merged, defaults);
    if let Some(table) = file {
        if let Some(seed) = table.get("seed") {
            merged.insert("seed".into(), serde_json::to_value(seed)?);
        }
        match table.get(name) {
            Some(toml::Value::Table(section)) => merge_into(&mut merged, serde_json::to_value(section)?),
            Some(_) => return Err(Error::Config(format!("`{name}` in the config file must be a table"))),
            None => {}
        }
    }
    merge_into(&mut merged, serde_json::to_value(flags)?);
    serde_json::from_value(Value::Object(merged)).map_err(|e| Error::Config(format!("{name}: {e}")))
}

/// A resolved run: the report body plus the configuration it came from.
struct Report {
    command: &'static str,
    config: Value,
}

impl Report {
    fn new(command: &'static str, config: &impl Serialize) -> Result<Self> {
        Ok(Self {
            command,
            config: serde_json::to_value(config)?,
        })
    }

    fn header(&self) -> Value {
        json!({
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "config": self.config,
        })
    }

    fn json(&self, result: impl Serialize) -> Result<String> {
        let mut doc = self.header();
        doc["result"] = serde_json::to_value(result)?;
        Ok(serde_json::to_string_pretty(&doc)? + "\n")
    }

    /// `# {header}`, the column names, then one line per row.
    fn csv(&self, columns: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
        let mut s = format!("# {}\n{}\n", serde_json::to_string(&self.header())?, columns.join(","));
        for row in rows {
            s.push_str(&row.join(","));
            s.push('\n');
        }
        Ok(s)
    }
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn reject_format(command: &str, format: Format) -> Error {
    Error::Config(format!("`{command}` does not support --format {format:?}").to_lowercase())
}

fn bandwidth(b: Option<f64>) -> Bandwidth {
    b.map_or(Bandwidth::Scott, Bandwidth::Fixed)
}

fn execute(cli: &Cli) -> Result<i32> {
    let file = load_file(cli.config.as_deref())?;
    let file = file.as_ref();
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Sample(args) => {
            let cfg: SampleConfig = resolve(
                "sample",
                json!({"convolve": null, "rescale": false, "whiten": false}),
                file,
                args,
            )?;
            run_sample(&cfg, cli.format.unwrap_or(Format::Bin), out)
        }
        Command::Project(args) => {
            let cfg: ProjectConfig = resolve("project", json!({}), file, args)?;
            let input = read_bin(&cfg.input)?;
            let basis = random_subspace(input.dimension, cfg.l, cfg.seed)?;
            let projected = project(&input, &basis)?;
            write_batch(&Report::new("project", &cfg)?, &projected, cli.format.unwrap_or(Format::Bin), out)
        }
        Command::Ratio(args) => {
            let cfg: RatioConfig = resolve(
                "ratio",
                json!({
                    "l": 1, "max_radius": 2.0, "grid_step": 0.1, "directions": 8,
                    "convolve": null, "rescale": false, "bandwidth": null,
                }),
                file,
                args,
            )?;
            run_ratio(&cfg, cli.format.unwrap_or(Format::Json), out)
        }
        Command::Thinshell(args) => {
            let mut cfg: ThinshellConfig = resolve("thinshell", json!({"epsilon": null}), file, args)?;
            if cfg.epsilon.is_none() {
                cfg.epsilon = Some(vec![(cfg.n as f64).powf(-1.0 / 15.0)]);
            }
            run_thinshell(&cfg, cli.format.unwrap_or(Format::Csv), out)
        }
        Command::PsiScan(args) => {
            let mut cfg: PsiScanConfig = resolve("psi-scan", json!({"l": 1, "tmax": null, "points": 200}), file, args)?;
            if cfg.tmax.is_none() {
                cfg.tmax = Some((cfg.n as f64).powf(0.125) * (1.0 - 1e-9));
            }
            run_psi_scan(&cfg, cli.format.unwrap_or(Format::Csv), out)
        }
        Command::Mtilde(args) => {
            let cfg: MtildeCliConfig = resolve(
                "mtilde",
                json!({
                    "l": 2, "radius_max": 2.0, "radius_step": 0.1, "subspaces": 32,
                    "samples": 200_000, "directions": 8, "alpha": null, "bandwidth": null,
                }),
                file,
                args,
            )?;
            run_mtilde(&cfg, cli.format.unwrap_or(Format::Json), out)
        }
        Command::Deconv(args) => {
            let p: DeconvParams<f64> = resolve("deconv", json!({"c0": DEFAULT_C0}), file, args)?;
            p.check()?;
            let report = Report::new("deconv", &p)?;
            match cli.format.unwrap_or(Format::Json) {
                Format::Json => emit(out, &report.json(check_conditions(&p))?)?,
                f => return Err(reject_format("deconv", f)),
            }
            Ok(EXIT_OK)
        }
        Command::DeconvVerify(args) => {
            let cfg: DeconvVerifyConfig = resolve(
                "deconv-verify",
                json!({"variance": 1.0, "n": 1, "c0": DEFAULT_C0, "points": 2001}),
                file,
                args,
            )?;
            run_deconv_verify(&cfg, cli.format.unwrap_or(Format::Csv), out)
        }
        Command::Suite(args) => {
            let cfg: SuiteConfig = resolve("suite", json!({"profile": "desk", "only": null}), file, args)?;
            run_suite(&cfg, cli.format, out)
        }
    }
}

fn run_sample(cfg: &SampleConfig, format: Format, out: Option<&Path>) -> Result<i32> {
    let body = BodySpec::new(cfg.body, cfg.n)?;
    let mut pipeline = Pipeline::new(body, cfg.samples, cfg.seed);
    if let Some(alpha) = cfg.convolve {
        let schedule = ConvolutionSchedule::new(alpha, cfg.n)?;
        pipeline = pipeline.with_noise(NoiseStep::from_schedule(&schedule, cfg.rescale, derive_seed(cfg.seed, Purpose::Noise, 0)));
    }
    let mut batch = pipeline.collect()?;
    if cfg.whiten {
        batch = whiten(&batch)?;
    }
    write_batch(&Report::new("sample", cfg)?, &batch, format, out)?;
    Ok(EXIT_OK)
}

fn write_batch(report: &Report, batch: &SampleBatch, format: Format, out: Option<&Path>) -> Result<i32> {
    match format {
        Format::Bin => {
            let path = out.ok_or_else(|| Error::Config("--format bin needs --out".into()))?;
            write_bin_with_config(batch, path, Some(report.header()))?;
        }
        Format::Csv => {
            let mut buf = format!("# {}\n", serde_json::to_string(&report.header())?).into_bytes();
            write_csv(batch, &mut buf)?;
            emit(out, std::str::from_utf8(&buf).expect("csv is utf-8"))?;
        }
        Format::Json => emit(out, &report.json(batch)?)?,
    }
    Ok(EXIT_OK)
}

fn run_ratio(cfg: &RatioConfig, format: Format, out: Option<&Path>) -> Result<i32> {
    let mut exp = RatioExperiment::new(BodySpec::new(cfg.body, cfg.n)?, cfg.l, cfg.samples, cfg.seed);
    exp.max_radius = cfg.max_radius;
    exp.grid_step = cfg.grid_step;
    exp.directions = cfg.directions;
    exp.convolve_alpha = cfg.convolve;
    exp.rescale = cfg.rescale;
    exp.bandwidth = bandwidth(cfg.bandwidth);
    if !(exp.grid_step > 0.0 && exp.max_radius >= 0.0) {
        return Err(Error::invalid("need grid_step > 0 and max_radius >= 0"));
    }
    let outcome = run_ratio_experiment(&exp)?;
    let report = Report::new("ratio", cfg)?;
    match format {
        Format::Json => emit(
            out,
            &report.json(json!({
                "report": outcome.report,
                "reference_variance": outcome.reference_variance,
                "bandwidth": outcome.estimate.bandwidth,
                "sample_count": outcome.estimate.sample_count,
            }))?,
        )?,
        Format::Csv => {
            let est = &outcome.estimate;
            let mut columns: Vec<String> = (0..cfg.l).map(|j| format!("x{j}")).collect();
            columns.extend(["ratio".into(), "stderr".into()]);
            let rows = est.points.iter().zip(&est.values).zip(&est.stderr).map(|((p, f), se)| {
                let r = p.iter().map(|c| c * c).sum::<f64>().sqrt();
                let g = gaussian_density(cfg.l, outcome.reference_variance, r);
                let mut row: Vec<String> = p.iter().copied().map(num).collect();
                row.extend([num(f / g), num(se / g)]);
                row
            });
            emit(out, &report.csv(&columns, rows)?)?;
        }
        f => return Err(reject_format("ratio", f)),
    }
    Ok(EXIT_OK)
}

fn run_thinshell(cfg: &ThinshellConfig, format: Format, out: Option<&Path>) -> Result<i32> {
    let norms = Pipeline::new(BodySpec::new(cfg.body, cfg.n)?, cfg.samples, cfg.seed).norms()?;
    let fractions = cfg
        .epsilon
        .as_deref()
        .unwrap_or_default()
        .iter()
        .map(|&e| shell_fraction_of_norms(&norms, cfg.n, e))
        .collect::<Result<Vec<_>>>()?;
    let report = Report::new("thinshell", cfg)?;
    match format {
        Format::Json => emit(out, &report.json(&fractions)?)?,
        Format::Csv => {
            let columns = ["epsilon", "fraction", "stderr"].map(String::from);
            let rows = fractions.iter().map(|f| vec![num(f.epsilon), num(f.fraction), num(f.stderr)]);
            emit(out, &report.csv(&columns, rows)?)?;
        }
        f => return Err(reject_format("thinshell", f)),
    }
    Ok(EXIT_OK)
}

fn run_psi_scan(cfg: &PsiScanConfig, format: Format, out: Option<&Path>) -> Result<i32> {
    let rows = psi_gaussian_scan(cfg.n, cfg.l, cfg.tmax.unwrap_or_default(), cfg.points)?;
    let report = Report::new("psi-scan", cfg)?;
    match format {
        Format::Json => {
            let sup = rows.iter().map(|r| (r.ratio - 1.0).abs()).fold(0.0, f64::max);
            emit(out, &report.json(json!({"sup_abs_deviation": sup, "rows": rows}))?)?
        }
        Format::Csv => {
            let columns = ["t", "psi", "gaussian", "ratio"].map(String::from);
            let lines = rows.iter().map(|r| vec![num(r.t), num(r.psi), num(r.gaussian), num(r.ratio)]);
            emit(out, &report.csv(&columns, lines)?)?;
        }
        f => return Err(reject_format("psi-scan", f)),
    }
    Ok(EXIT_OK)
}

fn run_mtilde(cfg: &MtildeCliConfig, format: Format, out: Option<&Path>) -> Result<i32> {
    if !(cfg.radius_step > 0.0 && cfg.radius_max >= 0.0) {
        return Err(Error::invalid("need radius_step > 0 and radius_max >= 0"));
    }
    let k = (cfg.radius_max / cfg.radius_step).round() as usize;
    let profile = m_tilde_profile(&MTildeConfig {
        body: BodySpec::new(cfg.body, cfg.n)?,
        schedule_alpha: cfg.alpha,
        subspace_dim: cfg.l,
        radii: (0..=k).map(|i| i as f64 * cfg.radius_step).collect(),
        subspace_count: cfg.subspaces,
        samples_per_subspace: cfg.samples,
        directions: cfg.directions,
        seed: cfg.seed,
        bandwidth: bandwidth(cfg.bandwidth),
    })?;
    let report = Report::new("mtilde", cfg)?;
    match format {
        Format::Json => emit(out, &report.json(&profile)?)?,
        Format::Csv => {
            let mut columns = vec!["t".to_string(), "ratio".to_string()];
            columns.extend((0..profile.per_subspace.len()).map(|s| format!("subspace{s}")));
            let rows = profile.radii.iter().enumerate().map(|(i, &t)| {
                let mut row = vec![num(t), num(profile.ratios[i])];
                row.extend(profile.per_subspace.iter().map(|r| num(r[i])));
                row
            });
            emit(out, &report.csv(&columns, rows)?)?;
        }
        f => return Err(reject_format("mtilde", f)),
    }
    Ok(EXIT_OK)
}

fn run_deconv_verify(cfg: &DeconvVerifyConfig, format: Format, out: Option<&Path>) -> Result<i32> {
    let body = match cfg.body {
        Body1dKind::Gaussian => Body1d::Gaussian { variance: cfg.variance },
        Body1dKind::Uniform => Body1d::Uniform,
        Body1dKind::Laplace => Body1d::Laplace,
    };
    let params = DeconvParams {
        n: cfg.n,
        alpha: cfg.alpha,
        beta: cfg.beta,
        epsilon: cfg.epsilon,
        radius: cfg.radius,
        c0: cfg.c0,
    };
    let rep = verify_sandwich(body, &params, cfg.points)?;
    let report = Report::new("deconv-verify", cfg)?;
    match format {
        Format::Json => emit(out, &report.json(&rep)?)?,
        Format::Csv => {
            let columns = ["x", "density", "lower_margin", "upper_margin"].map(String::from);
            let opt = |m: Option<f64>| m.map(num).unwrap_or_default();
            let rows = rep
                .points
                .iter()
                .map(|p| vec![num(p.x), num(p.density), opt(p.lower_margin), opt(p.upper_margin)]);
            let mut text = report.csv(&columns, rows)?;
            // the outcome travels in the header line when there are no margins
            if rep.points.is_empty() {
                text = format!("# outcome: {}\n{text}", serde_json::to_string(&rep.outcome)?);
            }
            emit(out, &text)?;
        }
        f => return Err(reject_format("deconv-verify", f)),
    }
    Ok(EXIT_OK)
}

fn run_suite(cfg: &SuiteConfig, format: Option<Format>, out: Option<&Path>) -> Result<i32> {
    let results = suite::run_suite(cfg.profile, cfg.only.as_deref());
    let all_passed = results.iter().all(|r| r.passed);
    match format {
        None => emit(out, &suite::format_table(&results))?,
        Some(Format::Json) => {
            print!("{}", suite::format_table(&results));
            emit(out, &Report::new("suite", cfg)?.json(&results)?)?
        }
        Some(f) => return Err(reject_format("suite", f)),
    }
    Ok(if all_passed { EXIT_OK } else { EXIT_SUITE_FAILED })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file: toml::Table = "seed = 3\n[ratio]\nbody = \"simplex\"\nn = 50\nsamples = 20000\nl = 2\n".parse().unwrap();
        let args = RatioArgs {
            body: None,
            n: Some(60),
            l: None,
            samples: None,
            seed: None,
            max_radius: None,
            grid_step: None,
            directions: None,
            convolve: None,
            rescale: false,
            bandwidth: None,
        };
        let cfg: RatioConfig = resolve(
            "ratio",
            json!({"l": 1, "max_radius": 2.0, "grid_step": 0.1, "directions": 8, "convolve": null, "rescale": false, "bandwidth": null}),
            Some(&file),
            &args,
        )
        .unwrap();
        assert_eq!((cfg.body, cfg.n, cfg.l, cfg.seed), (BodyKind::Simplex, 60, 2, 3));
    }

    #[test]
    fn missing_seed_is_a_config_error() {
        let args = ThinshellArgs {
            body: Some(BodyKind::Cube),
            n: Some(3),
            samples: Some(10),
            epsilon: None,
            seed: None,
        };
        let err = resolve::<ThinshellConfig>("thinshell", json!({"epsilon": null}), None, &args).unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
    }

    #[test]
    fn unknown_file_keys_rejected() {
        let file: toml::Table = "[psi-scan]\nn = 100\nbogus = 1\n".parse().unwrap();
        let args = PsiScanArgs {
            n: None,
            l: None,
            tmax: None,
            points: None,
        };
        assert!(resolve::<PsiScanConfig>("psi-scan", json!({"l": 1, "tmax": null, "points": 200}), Some(&file), &args).is_err());
    }

    #[test]
    fn capital_r_in_file() {
        let file: toml::Table = "[deconv]\nn = 8\nalpha = 1e-30\nbeta = 0.5\nepsilon = 0.001\nR = 10.0\n".parse().unwrap();
        let args = DeconvArgs {
            n: None,
            alpha: None,
            beta: None,
            epsilon: None,
            radius: None,
            c0: None,
        };
        let p: DeconvParams<f64> = resolve("deconv", json!({"c0": DEFAULT_C0}), Some(&file), &args).unwrap();
        assert_eq!(p.radius, 10.0);
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["clt-lab", "psi-scan", "--bogus"]), EXIT_INVALID);
        assert_eq!(run(["clt-lab", "frobnicate"]), EXIT_INVALID);
        assert_eq!(run(["clt-lab", "thinshell", "--body", "cube", "--n", "3", "--samples", "10"]), EXIT_INVALID);
    }
}
