//! The `rgg` command line: experiments, verification suites and constants.
//!
//! Configuration is flat `key = value` text with dotted keys (a `[section]`
//! line prefixes the keys below it). `--set key=value` overrides the file and
//! the global flags override both. Every run writes `manifest.json` next to
//! its outputs with the resolved configuration and a SHA-256 per output.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::constants::{beta1, c_constant, MAX_C_DIM};
use crate::error::{Error, Result};
use crate::estimators::{
    fit_variance_scaling, increases_beyond, kolmogorov_to_normal, mecke_check, poincare_catalogue, poincare_check,
    relative_variation, run_experiment, sample_variance, wasserstein1_to_normal, CheckReport, CheckSettings,
    EpsilonRule, EstimateReport, ExperimentOutput, ExperimentSpec, MeckeFn, PoincareFunctional, ScalingFit, TRow,
};
use crate::functionals::{FunctionalSpec, Weight};
use crate::geometry::ConvexBody;
use crate::graphs::Family;
use crate::verify::{run_suites, Scale, SuiteResult, VerifyOptions};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "RGG_CLT_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CAPACITY: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_VERIFY: i32 = 5;

// Stream tags per subcommand; the verification suites use their own range.
const TAG_SIMULATE: u8 = 1;
const TAG_SCAN: u8 = 2;
const TAG_CLT: u8 = 3;
const TAG_MECKE: u8 = 5;
const TAG_POINCARE: u8 = 6;

const KNOWN_KEYS: &[&str] = &[
    "global.seed",
    "global.workers",
    "global.max_points",
    "functional.family",
    "functional.epsilon",
    "functional.k",
    "functional.weight",
    "functional.alpha",
    "functional.a",
    "window.shape",
    "window.dim",
    "window.radius",
    "window.lower",
    "window.upper",
    "experiment.t_grid",
    "experiment.intensity",
    "experiment.epsilon_rule",
    "experiment.theta",
    "experiment.replicates",
    "experiment.bootstrap",
    "scan.samples_file",
    "clt.samples_file",
    "verify.suites",
    "verify.scale",
    "constants.d_min",
    "constants.d_max",
    "constants.tol",
    "check.replicates",
    "check.probes",
    "check.intensity",
    "check.p",
];

#[derive(Debug, Parser)]
#[command(name = "rgg", version, about = "Random geometric graph functionals: simulation and checks")]
pub struct Cli {
    /// Key-value configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a configuration key (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Largest number of points any replicate may draw.
    #[arg(long, global = true)]
    pub max_points: Option<usize>,
    /// Output directory (default: $RGG_CLT_OUT, then ./rgg-out).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-replicate samples and summary statistics over a t grid.
    Simulate,
    /// Log-log variance fit over a t grid, or over samples read from a file.
    VarianceScan,
    /// Kolmogorov and Wasserstein distances to the normal per t.
    CltDistance,
    /// Property suites; exit 5 when any check fails.
    Verify {
        /// Comma-separated subset of suites.
        #[arg(long, value_delimiter = ',')]
        suites: Vec<String>,
        /// Perturb incremental costs to confirm the suites catch it.
        #[arg(long)]
        inject_fault: bool,
        /// Reduced sample sizes.
        #[arg(long)]
        quick: bool,
    },
    /// Table of c(d) and beta1(d) as CSV.
    Constants,
    /// Mecke formula checks.
    Mecke,
    /// p-Poincaré inequality checks.
    Poincare,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::VarianceScan => "variance-scan",
            Command::CltDistance => "clt-distance",
            Command::Verify { .. } => "verify",
            Command::Constants => "constants",
            Command::Mecke => "mecke",
            Command::Poincare => "poincare",
        }
    }
}

/// Resolved key-value configuration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = KvConfig::default();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Parse(format!("line {}: unterminated section", lineno + 1)))?;
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", lineno + 1)))?;
            let key = if section.is_empty() {
                k.trim().to_string()
            } else {
                format!("{section}.{}", k.trim())
            };
            cfg.insert(&key, v.trim())?;
        }
        Ok(cfg)
    }

    pub fn insert(&mut self, key: &str, value: &str) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::Parse(format!("unknown configuration key {key:?}")));
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("--set expects KEY=VALUE, got {assignment:?}")))?;
        self.insert(k.trim(), v.trim())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Parse(format!("cannot parse {key} = {v:?}"))),
        }
    }

    fn parsed_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    fn required<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.parsed(key)?
            .ok_or_else(|| Error::Parse(format!("missing required key {key}")))
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|x| {
                        x.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::Parse(format!("cannot parse {key} entry {x:?}")))
                    })
                    .collect()
            })
            .transpose()
    }
}

/// Global settings after merging file, overrides and flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Globals {
    pub seed: u64,
    pub workers: usize,
    pub max_points: usize,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Argument(_) | Error::Parse(_) | Error::Io(_) => EXIT_CONFIG,
        Error::Capacity { .. } => EXIT_CAPACITY,
        Error::Numeric(_) | Error::Integration { .. } | Error::DegenerateInput(_) => EXIT_NUMERIC,
    }
}

/// Parses `args` and runs the selected subcommand, returning the exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn resolve(cli: &Cli) -> Result<(KvConfig, Globals, PathBuf)> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::Parse(format!("cannot read config {}: {e}", p.display())))?;
            KvConfig::parse(&text)?
        }
        None => KvConfig::default(),
    };
    for s in &cli.set {
        cfg.apply_override(s)?;
    }
    if let Some(s) = cli.seed {
        cfg.insert("global.seed", &s.to_string())?;
    }
    if let Some(w) = cli.workers {
        cfg.insert("global.workers", &w.to_string())?;
    }
    if let Some(m) = cli.max_points {
        cfg.insert("global.max_points", &m.to_string())?;
    }
    let globals = Globals {
        seed: cfg.parsed_or("global.seed", 1)?,
        workers: cfg.parsed_or("global.workers", default_workers())?,
        max_points: cfg.parsed_or("global.max_points", 5_000_000)?,
    };
    if globals.workers == 0 {
        return Err(Error::arg("worker count must be positive"));
    }
    let out = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("rgg-out"));
    Ok((cfg, globals, out))
}

pub fn run(cli: &Cli) -> Result<i32> {
    let (cfg, globals, out) = resolve(cli)?;
    let mut run = Run::new(out, cli.command.name())?;
    let code = match &cli.command {
        Command::Simulate => cmd_simulate(&cfg, &globals, &mut run)?,
        Command::VarianceScan => cmd_variance_scan(&cfg, &globals, &mut run)?,
        Command::CltDistance => cmd_clt_distance(&cfg, &globals, &mut run)?,
        Command::Verify {
            suites,
            inject_fault,
            quick,
        } => cmd_verify(&cfg, &globals, &mut run, suites, *inject_fault, *quick)?,
        Command::Constants => cmd_constants(&cfg, &mut run)?,
        Command::Mecke => cmd_mecke(&cfg, &globals, &mut run)?,
        Command::Poincare => cmd_poincare(&cfg, &globals, &mut run)?,
    };
    run.finish(&cfg, &globals)?;
    Ok(code)
}

/// Output directory bookkeeping for one invocation.
struct Run {
    dir: PathBuf,
    subcommand: &'static str,
    outputs: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    seed: u64,
    workers: usize,
    max_points: usize,
    config: &'a BTreeMap<String, String>,
    /// SHA-256 of each output file.
    outputs: &'a BTreeMap<String, String>,
}

impl Run {
    fn new(dir: PathBuf, subcommand: &'static str) -> Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Run {
            dir,
            subcommand,
            outputs: BTreeMap::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.outputs.insert(name.to_string(), hex::encode(Sha256::digest(bytes)));
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::numeric(e.to_string()))?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(header).map_err(io)?;
        for r in rows {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        self.write(name, &bytes)
    }

    fn finish(self, cfg: &KvConfig, g: &Globals) -> Result<()> {
        let m = Manifest {
            tool: "rgg",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: self.subcommand,
            seed: g.seed,
            workers: g.workers,
            max_points: g.max_points,
            config: cfg.entries(),
            outputs: &self.outputs,
        };
        let mut bytes = serde_json::to_vec_pretty(&m).map_err(|e| Error::numeric(e.to_string()))?;
        bytes.push(b'\n');
        let mut f = fs::File::create(self.dir.join("manifest.json"))?;
        f.write_all(&bytes)?;
        Ok(())
    }
}

fn parse_family(cfg: &KvConfig) -> Result<Family> {
    let name: String = cfg.required("functional.family")?;
    let family = match name.as_str() {
        "onng" => Family::Onng,
        "gilbert" => Family::Gilbert {
            epsilon: cfg.parsed_or("functional.epsilon", 0.2)?,
        },
        "knn" => Family::Knn {
            k: cfg.parsed_or("functional.k", 1)?,
        },
        "rst" => Family::Rst,
        other => return Err(Error::Parse(format!("unknown family {other:?}"))),
    };
    family.validate()?;
    Ok(family)
}

fn parse_functional(cfg: &KvConfig) -> Result<FunctionalSpec> {
    let family = parse_family(cfg)?;
    let weight = match cfg.get("functional.weight").unwrap_or("power") {
        "power" => Weight::Power {
            alpha: cfg.parsed_or("functional.alpha", 1.0)?,
        },
        "phi_power" => Weight::PhiPower {
            a: cfg.parsed_or("functional.a", 1.0)?,
        },
        "phi_exp" => Weight::PhiExp,
        other => return Err(Error::Parse(format!("unknown weight {other:?}"))),
    };
    Ok(FunctionalSpec::new(family, weight))
}

fn parse_window(cfg: &KvConfig) -> Result<ConvexBody> {
    let dim: usize = cfg.parsed_or("window.dim", 2)?;
    if dim == 0 {
        return Err(Error::arg("window.dim must be positive"));
    }
    match cfg.get("window.shape").unwrap_or("unit_cube") {
        "unit_cube" => Ok(ConvexBody::unit_cube(dim)),
        "centered_unit_cube" => Ok(ConvexBody::centered_unit_cube(dim)),
        "ball" => ConvexBody::ball(vec![0.0; dim], cfg.parsed_or("window.radius", 1.0)?),
        "box" => {
            let lo = cfg.list("window.lower")?.ok_or_else(|| Error::Parse("box needs window.lower".into()))?;
            let hi = cfg.list("window.upper")?.ok_or_else(|| Error::Parse("box needs window.upper".into()))?;
            ConvexBody::cuboid(lo, hi)
        }
        other => Err(Error::Parse(format!("unknown window shape {other:?}"))),
    }
}

fn experiment_spec(cfg: &KvConfig, g: &Globals, tag: u8, default_bootstrap: usize) -> Result<ExperimentSpec> {
    let t_grid = cfg
        .list("experiment.t_grid")?
        .ok_or_else(|| Error::Parse("missing required key experiment.t_grid".into()))?;
    let epsilon_rule = match cfg.get("experiment.epsilon_rule") {
        None => None,
        Some("constant") => Some(EpsilonRule::Constant {
            epsilon: cfg.parsed_or("functional.epsilon", 0.2)?,
        }),
        Some("power") => Some(EpsilonRule::Power {
            theta: cfg.required("experiment.theta")?,
        }),
        Some(other) => return Err(Error::Parse(format!("unknown epsilon rule {other:?}"))),
    };
    let spec = ExperimentSpec {
        functional: parse_functional(cfg)?,
        body: parse_window(cfg)?,
        t_grid,
        intensity: cfg.parsed_or("experiment.intensity", 1.0)?,
        epsilon_rule,
        replicates: cfg.parsed_or("experiment.replicates", 100)?,
        base_seed: g.seed,
        stream_tag: tag,
        max_points: g.max_points,
        workers: g.workers,
        bootstrap: cfg.parsed_or("experiment.bootstrap", default_bootstrap)?,
    };
    spec.validate()?;
    for w in spec.functional.warnings(spec.body.dim()) {
        eprintln!("warning: {w}");
    }
    Ok(spec)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

const SUMMARY_HEADER: [&str; 10] = ["t", "epsilon", "n_mean", "mean", "mean_se", "var", "var_se", "dK", "dK_se", "dW"];

fn summary_rows(rows: &[TRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                r.t.to_string(),
                fmt_opt(r.epsilon),
                r.n_mean.to_string(),
                r.mean.to_string(),
                r.mean_se.to_string(),
                r.var.to_string(),
                r.var_se.to_string(),
                r.d_k.to_string(),
                fmt_opt(r.d_k_se),
                r.d_w.to_string(),
            ]
        })
        .collect()
}

fn samples_rows(spec: &ExperimentSpec, out: &ExperimentOutput) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (ti, (vals, counts)) in out.samples.iter().zip(&out.counts).enumerate() {
        for (rep, (v, n)) in vals.iter().zip(counts).enumerate() {
            rows.push(vec![
                ti.to_string(),
                spec.t_grid[ti].to_string(),
                rep.to_string(),
                n.to_string(),
                v.to_string(),
            ]);
        }
    }
    rows
}

fn print_rows(rows: &[TRow]) {
    for r in rows {
        println!(
            "t={} n_mean={:.2} mean={:.6} var={:.6} dK={:.4} dW={:.4}",
            r.t, r.n_mean, r.mean, r.var, r.d_k, r.d_w
        );
    }
}

fn cmd_simulate(cfg: &KvConfig, g: &Globals, run: &mut Run) -> Result<i32> {
    let spec = experiment_spec(cfg, g, TAG_SIMULATE, 0)?;
    let out = run_experiment(&spec)?;
    run.write_csv("samples.csv", &["t_index", "t", "replicate", "n", "value"], &samples_rows(&spec, &out))?;
    run.write_csv("summary.csv", &SUMMARY_HEADER, &summary_rows(&out.report.rows))?;
    run.write_json("report.json", &out.report)?;
    print_rows(&out.report.rows);
    Ok(EXIT_OK)
}

/// Reads `t,value` rows, grouping values by `t` in order of appearance.
pub fn read_samples_file(path: &Path) -> Result<Vec<(f64, Vec<f64>)>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Parse(format!("samples file lacks a {name:?} column")))
    };
    let (tc, vc) = (col("t")?, col("value")?);
    let mut groups: Vec<(f64, Vec<f64>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let num = |i: usize| -> Result<f64> {
            let s = rec.get(i).unwrap_or("").trim();
            s.parse().map_err(|_| Error::Parse(format!("bad number {s:?} in samples file")))
        };
        let (t, v) = (num(tc)?, num(vc)?);
        match groups.iter_mut().find(|(gt, _)| *gt == t) {
            Some((_, vs)) => vs.push(v),
            None => groups.push((t, vec![v])),
        }
    }
    if groups.is_empty() {
        return Err(Error::Parse("samples file has no rows".into()));
    }
    Ok(groups)
}

#[derive(Serialize)]
struct ScanReport {
    t_grid: Vec<f64>,
    var: Vec<f64>,
    fit: ScalingFit,
    /// `(max − min) / max` of the log-corrected ratios.
    log_corrected_variation: f64,
    source: &'static str,
}

fn cmd_variance_scan(cfg: &KvConfig, g: &Globals, run: &mut Run) -> Result<i32> {
    let dim: usize = cfg.parsed_or("window.dim", 2)?;
    let (ts, vars, source) = match cfg.get("scan.samples_file") {
        Some(path) => {
            let groups = read_samples_file(Path::new(path))?;
            let mut ts = Vec::new();
            let mut vars = Vec::new();
            for (t, vs) in groups {
                if vs.len() < 2 {
                    return Err(Error::arg(format!("t={t} has fewer than two samples")));
                }
                ts.push(t);
                vars.push(sample_variance(&vs));
            }
            (ts, vars, "samples_file")
        }
        None => {
            let spec = experiment_spec(cfg, g, TAG_SCAN, 0)?;
            let out = run_experiment(&spec)?;
            run.write_csv("summary.csv", &SUMMARY_HEADER, &summary_rows(&out.report.rows))?;
            let vars = out.report.rows.iter().map(|r| r.var).collect();
            (spec.t_grid.clone(), vars, "simulation")
        }
    };
    let fit = fit_variance_scaling(&ts, &vars, dim)?;
    println!("slope={:.4} (stderr {:.4})", fit.slope, fit.slope_stderr);
    for (t, r) in ts.iter().zip(&fit.log_corrected_ratio) {
        println!("t={t} var/(t^d log t^d)={r:.6}");
    }
    let report = ScanReport {
        log_corrected_variation: relative_variation(&fit.log_corrected_ratio),
        t_grid: ts,
        var: vars,
        fit,
        source,
    };
    run.write_json("scan.json", &report)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct CltRow {
    t: f64,
    d_k: f64,
    d_k_se: Option<f64>,
    d_w: f64,
}

#[derive(Serialize)]
struct CltReport {
    rows: Vec<CltRow>,
    /// Grid indices where dK rises by more than two standard errors.
    increases: Vec<usize>,
    nonincreasing_within_2se: bool,
}

fn cmd_clt_distance(cfg: &KvConfig, g: &Globals, run: &mut Run) -> Result<i32> {
    let rows: Vec<CltRow> = match cfg.get("clt.samples_file") {
        Some(path) => read_samples_file(Path::new(path))?
            .into_iter()
            .map(|(t, vs)| {
                Ok(CltRow {
                    t,
                    d_k: kolmogorov_to_normal(&vs)?,
                    d_k_se: None,
                    d_w: wasserstein1_to_normal(&vs)?,
                })
            })
            .collect::<Result<_>>()?,
        None => {
            let spec = experiment_spec(cfg, g, TAG_CLT, 200)?;
            let out = run_experiment(&spec)?;
            run.write_csv("summary.csv", &SUMMARY_HEADER, &summary_rows(&out.report.rows))?;
            out.report
                .rows
                .iter()
                .map(|r| CltRow {
                    t: r.t,
                    d_k: r.d_k,
                    d_k_se: r.d_k_se,
                    d_w: r.d_w,
                })
                .collect()
        }
    };
    let dks: Vec<f64> = rows.iter().map(|r| r.d_k).collect();
    let ses: Vec<f64> = rows.iter().map(|r| r.d_k_se.unwrap_or(0.0)).collect();
    let increases = increases_beyond(&dks, &ses, 2.0);
    for r in &rows {
        println!("t={} dK={:.5} dW={:.5}", r.t, r.d_k, r.d_w);
    }
    println!(
        "dK nonincreasing within 2 standard errors: {}",
        if increases.is_empty() { "yes" } else { "no" }
    );
    let report = CltReport {
        nonincreasing_within_2se: increases.is_empty(),
        rows,
        increases,
    };
    run.write_json("clt.json", &report)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    pass: bool,
    options: VerifyOptions,
    suites: &'a [SuiteResult],
}

fn cmd_verify(
    cfg: &KvConfig,
    g: &Globals,
    run: &mut Run,
    suites: &[String],
    inject_fault: bool,
    quick: bool,
) -> Result<i32> {
    let mut names: Vec<String> = suites.to_vec();
    if names.is_empty() {
        if let Some(list) = cfg.get("verify.suites") {
            names = list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
        }
    }
    let scale = match (quick, cfg.get("verify.scale")) {
        (true, _) | (false, Some("quick")) => Scale::Quick,
        (false, None) | (false, Some("full")) => Scale::Full,
        (false, Some(other)) => return Err(Error::Parse(format!("unknown verify.scale {other:?}"))),
    };
    let opts = VerifyOptions {
        seed: g.seed,
        workers: g.workers,
        scale,
        inject_fault,
    };
    let results = run_suites(&names, &opts)?;
    let pass = results.iter().all(|r| r.pass);
    for r in &results {
        println!(
            "{:<9} {} ({} checks)",
            r.name,
            if r.pass { "PASS" } else { "FAIL" },
            r.checks
        );
        for n in &r.notes {
            println!("    {n}");
        }
        for f in &r.failures {
            println!("    failure: {f}");
        }
    }
    run.write_json(
        "verify.json",
        &VerifyReport {
            pass,
            options: opts,
            suites: &results,
        },
    )?;
    Ok(if pass { EXIT_OK } else { EXIT_VERIFY })
}

fn cmd_constants(cfg: &KvConfig, run: &mut Run) -> Result<i32> {
    let d_min: usize = cfg.parsed_or("constants.d_min", 1)?;
    let d_max: usize = cfg.parsed_or("constants.d_max", 3)?;
    let tol: f64 = cfg.parsed_or("constants.tol", 1e-6)?;
    if d_min == 0 || d_min > d_max || d_max > MAX_C_DIM {
        return Err(Error::arg(format!(
            "constants need 1 <= d_min <= d_max <= {MAX_C_DIM}, got {d_min}..{d_max}"
        )));
    }
    let mut rows = Vec::new();
    for d in d_min..=d_max {
        let c = c_constant(d, tol)?;
        let b = beta1(d).ok();
        println!("d={d} c={:.10} error={:.2e}", c.value, c.abs_error_estimate);
        rows.push(vec![d.to_string(), c.value.to_string(), c.abs_error_estimate.to_string(), fmt_opt(b)]);
    }
    run.write_csv("constants.csv", &["d", "c", "error", "beta1"], &rows)?;
    Ok(EXIT_OK)
}

fn check_settings(cfg: &KvConfig, g: &Globals, tag: u8) -> Result<CheckSettings> {
    Ok(CheckSettings {
        replicates: cfg.parsed_or("check.replicates", 2000)?,
        probes: cfg.parsed_or("check.probes", 20)?,
        base_seed: g.seed,
        stream_tag: tag,
        workers: g.workers,
    })
}

#[derive(Serialize)]
struct CheckEntry {
    name: String,
    report: CheckReport,
}

fn print_checks(entries: &[CheckEntry]) {
    for e in entries {
        let r = &e.report;
        println!(
            "{:<40} {} lhs={:.6} rhs={:.6} pooled_se={:.6}",
            e.name,
            if r.pass { "PASS" } else { "FAIL" },
            r.lhs,
            r.rhs,
            r.pooled_se
        );
    }
}

fn cmd_mecke(cfg: &KvConfig, g: &Globals, run: &mut Run) -> Result<i32> {
    let body = match cfg.get("window.shape") {
        Some(_) => parse_window(cfg)?,
        None => ConvexBody::ball(vec![0.0, 0.0], 1.0)?,
    };
    let intensity: f64 = cfg.parsed_or("check.intensity", 5.0)?;
    let mut entries = Vec::new();
    for (i, h) in MeckeFn::catalogue().into_iter().enumerate() {
        let settings = check_settings(cfg, g, TAG_MECKE)?;
        let settings = CheckSettings {
            base_seed: g.seed.wrapping_add(i as u64),
            ..settings
        };
        entries.push(CheckEntry {
            name: format!("{h:?}"),
            report: mecke_check(h, &body, intensity, settings)?,
        });
    }
    print_checks(&entries);
    let pass = entries.iter().all(|e| e.report.pass);
    run.write_json("mecke.json", &entries)?;
    Ok(if pass { EXIT_OK } else { EXIT_VERIFY })
}

fn cmd_poincare(cfg: &KvConfig, g: &Globals, run: &mut Run) -> Result<i32> {
    let ps = cfg.list("check.p")?.unwrap_or_else(|| vec![1.5, 2.0]);
    let mut entries = Vec::new();
    for (i, (f, body)) in poincare_catalogue().into_iter().enumerate() {
        let intensity = match f {
            PoincareFunctional::Count => 30.0,
            _ => 1.0,
        };
        for (j, &p) in ps.iter().enumerate() {
            let settings = CheckSettings {
                base_seed: g.seed.wrapping_add((i * ps.len() + j) as u64),
                ..check_settings(cfg, g, TAG_POINCARE)?
            };
            entries.push(CheckEntry {
                name: format!("{f:?} p={p}"),
                report: poincare_check(f, p, &body, intensity, settings)?,
            });
        }
    }
    print_checks(&entries);
    let pass = entries.iter().all(|e| e.report.pass);
    run.write_json("poincare.json", &entries)?;
    Ok(if pass { EXIT_OK } else { EXIT_VERIFY })
}

/// Experiment report for library callers that want the CLI's summary layout.
pub fn summary_csv(report: &EstimateReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(SUMMARY_HEADER).map_err(io)?;
    for r in summary_rows(&report.rows) {
        w.write_record(&r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    String::from_utf8(bytes).map_err(|e| Error::numeric(e.to_string()))
}
