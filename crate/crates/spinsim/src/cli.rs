//! Batch front door: JSON experiment configs in, CSV artifacts and exit
//! codes out.
//!
//! Exit codes: 0 = pass/success, 1 = verification violation, 2 = invalid
//! input, 3 = inconclusive (independent mode). All randomness flows from
//! the single top-level seed; identical (config, seed) pairs produce
//! byte-identical CSVs regardless of the worker count (override workers
//! with the `SPINSIM_WORKERS` environment variable).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::engine::{plan_window, sample_events, simulate_gillespie};
use crate::lattice::InitialCondition;
use crate::rates::{Model, RateSpec};
use crate::verify::{
    estimate_occupation_profile, remark2_sweep, verify_theorem, window_self_check, Mode,
    MonotonicityReport, ProfileOptions, Verdict, VerifyOptions,
};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_INCONCLUSIVE: i32 = 3;

#[derive(Parser)]
#[command(
    name = "spinsim",
    version,
    about = "Simulate and verify one-dimensional attractive spin systems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// List built-in models and emit their rate tables as CSV.
    Models {
        /// Output directory for artifacts.
        #[arg(long, default_value = "spinsim_out")]
        out: PathBuf,
    },
    /// Check attractiveness and the monotone-coupling certificate.
    Check(RunArgs),
    /// Simulate one trajectory and emit the final configuration.
    Simulate(RunArgs),
    /// Estimate the per-site occupation profile with Wilson intervals.
    Profile(RunArgs),
    /// Verify suffix monotonicity from the step initial condition.
    Verify(RunArgs),
    /// Verify the finite-interval case (init must be an interval).
    VerifyRemark2(RunArgs),
    /// Window-doubling truncation self check.
    SelfCheck(RunArgs),
}

#[derive(Args)]
pub struct RunArgs {
    /// Path to the JSON experiment config.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for artifacts.
    #[arg(long, default_value = "spinsim_out")]
    pub out: PathBuf,
    /// Override the config's replica count.
    #[arg(long)]
    pub replicas: Option<u64>,
    /// Override the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the config's mode (coupled|exact|independent).
    #[arg(long)]
    pub mode: Option<String>,
}

/// Experiment configuration; keys match the documented schema. Patterns in
/// custom tables are literal bit strings such as "101".
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    #[serde(default = "default_init")]
    pub init: InitialCondition,
    #[serde(default = "default_t")]
    pub t: f64,
    #[serde(default = "default_z_range")]
    pub z_range: [i64; 2],
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_replicas")]
    pub replicas: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_epsilon")]
    pub epsilon_trunc: f64,
    #[serde(default = "default_mode")]
    pub mode: String,
    /// Simulation backend for `simulate`: uniformized | gillespie.
    #[serde(default = "default_backend")]
    pub backend: String,
    /// Explicit window for exact mode, [lo, hi].
    #[serde(default)]
    pub exact_window: Option<[i64; 2]>,
    /// Interval sweep for verify-remark2; falls back to the init's N.
    #[serde(default)]
    pub n_sweep: Option<Vec<i64>>,
}

fn default_init() -> InitialCondition {
    InitialCondition::Step
}
fn default_t() -> f64 {
    1.0
}
fn default_z_range() -> [i64; 2] {
    [0, 4]
}
fn default_m() -> usize {
    3
}
fn default_replicas() -> u64 {
    1000
}
fn default_epsilon() -> f64 {
    1e-3
}
fn default_mode() -> String {
    "coupled".into()
}
fn default_backend() -> String {
    "uniformized".into()
}

/// Model section of the config; a custom table may be inline or loaded
/// from a `pattern,rate` CSV as emitted by `models`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ModelConfig {
    Contact { lambda: f64, delta: f64 },
    Voter { v: f64 },
    GlauberIsing { beta: f64 },
    PureDeath,
    Custom {
        radius: usize,
        #[serde(default)]
        rates: Option<BTreeMap<String, f64>>,
        #[serde(default)]
        table_csv: Option<PathBuf>,
    },
}

impl ModelConfig {
    pub fn resolve(&self) -> Result<Model, String> {
        match self {
            ModelConfig::Contact { lambda, delta } => Ok(Model::Contact {
                lambda: *lambda,
                delta: *delta,
            }),
            ModelConfig::Voter { v } => Ok(Model::Voter { v: *v }),
            ModelConfig::GlauberIsing { beta } => Ok(Model::GlauberIsing { beta: *beta }),
            ModelConfig::PureDeath => Ok(Model::PureDeath),
            ModelConfig::Custom {
                radius,
                rates,
                table_csv,
            } => {
                let rates = match (rates, table_csv) {
                    (Some(r), None) => r.clone(),
                    (None, Some(path)) => read_rate_table_csv(path)?,
                    (Some(_), Some(_)) => {
                        return Err("custom model: give either `rates` or `table_csv`, not both"
                            .to_string())
                    }
                    (None, None) => {
                        return Err(
                            "custom model: missing field `rates` (or `table_csv`)".to_string()
                        )
                    }
                };
                Ok(Model::Custom {
                    radius: *radius,
                    rates,
                })
            }
        }
    }
}

/// Parse a `pattern,rate` CSV (with header) into a rate table.
pub fn read_rate_table_csv(path: &Path) -> Result<BTreeMap<String, f64>, String> {
    let text =
        fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut lines = text.lines();
    match lines.next() {
        Some("pattern,rate") => {}
        other => {
            return Err(format!(
                "{}: expected header `pattern,rate`, got {:?}",
                path.display(),
                other
            ))
        }
    }
    let mut table = BTreeMap::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let (pattern, rate) = line
            .split_once(',')
            .ok_or_else(|| format!("{}: malformed row {}", path.display(), i + 2))?;
        let rate: f64 = rate
            .parse()
            .map_err(|e| format!("{}: row {}: {e}", path.display(), i + 2))?;
        table.insert(pattern.to_string(), rate);
    }
    Ok(table)
}

/// Emit a rate table in the `models` CSV format.
pub fn write_rate_table_csv(spec: &RateSpec, path: &Path) -> std::io::Result<()> {
    let mut rows = vec!["pattern,rate".to_string()];
    for p in spec.patterns() {
        rows.push(format!("{},{}", p, spec.rate(p)));
    }
    fs::write(path, rows.join("\n") + "\n")
}

pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    if let Ok(workers) = std::env::var("SPINSIM_WORKERS") {
        if let Ok(n) = workers.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    match dispatch(&cli.command) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            EXIT_INVALID
        }
    }
}

fn dispatch(command: &Command) -> Result<i32, String> {
    match command {
        Command::Models { out } => run_models(out),
        Command::Check(args) => with_config(args, "check", run_check),
        Command::Simulate(args) => with_config(args, "simulate", run_simulate),
        Command::Profile(args) => with_config(args, "profile", run_profile),
        Command::Verify(args) => with_config(args, "verify", run_verify),
        Command::VerifyRemark2(args) => with_config(args, "verify-remark2", run_verify_remark2),
        Command::SelfCheck(args) => with_config(args, "self-check", run_self_check),
    }
}

fn with_config(
    args: &RunArgs,
    command: &str,
    run: impl Fn(&ExperimentConfig, &Path) -> Result<i32, String>,
) -> Result<i32, String> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| format!("cannot read {}: {e}", args.config.display()))?;
    let mut config: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| format!("invalid config: {e}"))?;
    if let Some(replicas) = args.replicas {
        config.replicas = replicas;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(mode) = &args.mode {
        config.mode = mode.clone();
    }
    validate(&config)?;
    fs::create_dir_all(&args.out)
        .map_err(|e| format!("cannot create {}: {e}", args.out.display()))?;
    write_manifest(&args.out, command, &config)?;
    run(&config, &args.out)
}

fn validate(config: &ExperimentConfig) -> Result<(), String> {
    if !(config.t >= 0.0) {
        return Err(format!("field `t`: horizon must be >= 0, got {}", config.t));
    }
    if config.z_range[0] > config.z_range[1] {
        return Err(format!(
            "field `z_range`: need z_min <= z_max, got {:?}",
            config.z_range
        ));
    }
    if config.m == 0 {
        return Err("field `m`: suffix width must be >= 1".to_string());
    }
    if config.replicas == 0 {
        return Err("field `replicas`: must be >= 1".to_string());
    }
    if !(config.epsilon_trunc > 0.0 && config.epsilon_trunc < 1.0) {
        return Err(format!(
            "field `epsilon_trunc`: must lie in (0, 1), got {}",
            config.epsilon_trunc
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a ExperimentConfig,
}

fn write_manifest(out: &Path, command: &str, config: &ExperimentConfig) -> Result<(), String> {
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: config.seed,
        config,
    };
    let body = serde_json::to_string_pretty(&manifest).map_err(|e| e.to_string())?;
    fs::write(out.join("run_manifest.json"), body + "\n").map_err(|e| e.to_string())
}

fn build_spec(config: &ExperimentConfig) -> Result<RateSpec, String> {
    config
        .model
        .resolve()?
        .build()
        .map_err(|e| format!("field `model`: {e}"))
}

fn run_models(out: &Path) -> Result<i32, String> {
    fs::create_dir_all(out).map_err(|e| e.to_string())?;
    println!("built-in models:");
    for model in Model::builtins() {
        let spec = model.build().map_err(|e| e.to_string())?;
        let path = out.join(format!("model_{}.csv", model.short_name()));
        write_rate_table_csv(&spec, &path).map_err(|e| e.to_string())?;
        println!(
            "  {} (radius {}, c_max {}) -> {}",
            spec.name(),
            spec.radius(),
            spec.uniformization_bound().map_err(|e| e.to_string())?,
            path.display()
        );
        for p in spec.patterns() {
            println!("    {} -> {}", p, spec.rate(p));
        }
    }
    Ok(EXIT_PASS)
}

fn run_check(config: &ExperimentConfig, out: &Path) -> Result<i32, String> {
    let spec = build_spec(config)?;
    let report = spec.check_attractive();
    let c_max = spec.uniformization_bound().map_err(|e| e.to_string())?;
    let coupling = if report.attractive {
        Some(
            spec.check_coupling_monotone(c_max)
                .map_err(|e| e.to_string())?,
        )
    } else {
        None
    };

    #[derive(Serialize)]
    struct CheckOut {
        model: String,
        attractive: bool,
        c_max: f64,
        violations: Vec<[String; 4]>,
        coupling_monotone: Option<bool>,
    }
    let body = CheckOut {
        model: spec.name().to_string(),
        attractive: report.attractive,
        c_max,
        violations: report
            .violations
            .iter()
            .map(|v| {
                [
                    v.low.to_string(),
                    v.high.to_string(),
                    v.rate_low.to_string(),
                    v.rate_high.to_string(),
                ]
            })
            .collect(),
        coupling_monotone: coupling.as_ref().map(|c| c.pass()),
    };
    write_json(out, "check.json", &body)?;
    println!("model: {}", body.model);
    println!("attractive: {}", body.attractive);
    for v in &report.violations {
        println!(
            "  violation: c({}) = {} vs c({}) = {}",
            v.low, v.rate_low, v.high, v.rate_high
        );
    }
    if let Some(c) = &coupling {
        println!("coupling monotone at c_max = {c_max}: {}", c.pass());
    }
    let ok = body.attractive && coupling.map_or(false, |c| c.pass());
    Ok(if ok { EXIT_PASS } else { EXIT_VIOLATION })
}

fn run_simulate(config: &ExperimentConfig, out: &Path) -> Result<i32, String> {
    let spec = build_spec(config)?;
    let [z_min, z_max] = config.z_range;
    let plan = plan_window(&spec, config.t, z_min, z_max, config.epsilon_trunc)
        .map_err(|e| e.to_string())?;
    let init = config
        .init
        .realize(plan.lo, plan.hi)
        .map_err(|e| format!("field `init`: {e}"))?;
    let final_cfg = match config.backend.as_str() {
        "uniformized" => {
            let c_max = spec.uniformization_bound().map_err(|e| e.to_string())?;
            let events = sample_events(c_max, plan.lo, plan.hi, config.t, config.seed);
            crate::engine::evolve_uniformized(&spec, &init, &events).map_err(|e| e.to_string())?
        }
        "gillespie" => {
            simulate_gillespie(&spec, &init, config.t, config.seed).map_err(|e| e.to_string())?
        }
        other => return Err(format!("field `backend`: unknown backend `{other}`")),
    };
    let mut rows = vec!["x,spin".to_string()];
    for x in plan.lo..=plan.hi {
        rows.push(format!("{x},{}", final_cfg.value(x)));
    }
    write_text(out, "configuration.csv", &rows)?;
    println!("final configuration written for window [{}, {}]", plan.lo, plan.hi);
    Ok(EXIT_PASS)
}

fn run_profile(config: &ExperimentConfig, out: &Path) -> Result<i32, String> {
    let spec = build_spec(config)?;
    if !spec.check_attractive().attractive {
        eprintln!("warning: rate table is not attractive");
    }
    let [z_min, z_max] = config.z_range;
    let profile = estimate_occupation_profile(
        &spec,
        &config.init,
        &ProfileOptions {
            t: config.t,
            z_min,
            z_max,
            replicas: config.replicas,
            seed: config.seed,
            epsilon_trunc: config.epsilon_trunc,
            margin_override: None,
        },
    )
    .map_err(|e| e.to_string())?;
    let mut rows = vec!["z,p_hat,ci_low,ci_high,n".to_string()];
    for r in &profile.rows {
        rows.push(format!(
            "{},{},{},{},{}",
            r.z, r.p_hat, r.ci_low, r.ci_high, r.n
        ));
    }
    write_text(out, "profile.csv", &rows)?;
    println!("profile written: {} sites, {} replicas", profile.rows.len(), config.replicas);
    Ok(EXIT_PASS)
}

fn verify_options(config: &ExperimentConfig) -> Result<VerifyOptions, String> {
    let mode = Mode::parse(&config.mode).map_err(|e| e.to_string())?;
    let [z_min, z_max] = config.z_range;
    Ok(VerifyOptions {
        t: config.t,
        z_min,
        z_max,
        m: config.m,
        replicas: config.replicas,
        seed: config.seed,
        mode,
        epsilon_trunc: config.epsilon_trunc,
        exact_window: config.exact_window.map(|[lo, hi]| (lo, hi)),
    })
}

fn emit_monotonicity(
    out: &Path,
    stem: &str,
    report: &MonotonicityReport,
) -> Result<i32, String> {
    write_json(out, &format!("{stem}.json"), report)?;
    let mut rows = vec!["z,mode,verdict,witness,margin".to_string()];
    for v in &report.per_z {
        rows.push(format!(
            "{},{},{},{},{}",
            v.z,
            report.mode.as_str(),
            match v.verdict {
                Verdict::Pass => "pass",
                Verdict::Fail => "fail",
                Verdict::Inconclusive => "inconclusive",
            },
            v.witness.as_deref().unwrap_or("-"),
            v.margin
        ));
    }
    write_text(out, &format!("{stem}_margins.csv"), &rows)?;
    println!(
        "{} mode ({}): overall {:?}, pathwise violations {}, translation mismatches {}",
        report.mode.as_str(),
        report.evidence,
        report.overall,
        report.pathwise_violations,
        report.translation_mismatches
    );
    Ok(match report.overall {
        Verdict::Pass => EXIT_PASS,
        Verdict::Fail => EXIT_VIOLATION,
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
    })
}

fn run_verify(config: &ExperimentConfig, out: &Path) -> Result<i32, String> {
    let spec = build_spec(config)?;
    let opts = verify_options(config)?;
    let report = verify_theorem(&spec, &opts).map_err(|e| e.to_string())?;
    emit_monotonicity(out, "verify", &report)
}

fn run_verify_remark2(config: &ExperimentConfig, out: &Path) -> Result<i32, String> {
    let spec = build_spec(config)?;
    let opts = verify_options(config)?;
    let ns: Vec<i64> = match (&config.n_sweep, &config.init) {
        (Some(ns), _) if !ns.is_empty() => ns.clone(),
        (_, InitialCondition::Interval { n }) => vec![*n],
        _ => {
            return Err(
                "verify-remark2 needs `init` of kind `interval` or a non-empty `n_sweep`"
                    .to_string(),
            )
        }
    };
    let (smallest_pass, reports) = remark2_sweep(&spec, &ns, &opts).map_err(|e| e.to_string())?;
    #[derive(Serialize)]
    struct SweepOut<'a> {
        smallest_passing_n: Option<i64>,
        reports: &'a [MonotonicityReport],
    }
    write_json(
        out,
        "verify_remark2.json",
        &SweepOut {
            smallest_passing_n: smallest_pass,
            reports: &reports,
        },
    )?;
    let mut rows = vec!["z,mode,verdict,witness,margin".to_string()];
    let mut worst = EXIT_PASS;
    for report in &reports {
        for v in &report.per_z {
            rows.push(format!(
                "{},{},{},{},{}",
                v.z,
                report.mode.as_str(),
                match v.verdict {
                    Verdict::Pass => "pass",
                    Verdict::Fail => "fail",
                    Verdict::Inconclusive => "inconclusive",
                },
                v.witness.as_deref().unwrap_or("-"),
                v.margin
            ));
        }
        println!(
            "N = {}: overall {:?}",
            report.interval_n.unwrap_or(-1),
            report.overall
        );
        let code = match report.overall {
            Verdict::Pass => EXIT_PASS,
            Verdict::Fail => EXIT_VIOLATION,
            Verdict::Inconclusive => EXIT_INCONCLUSIVE,
        };
        worst = worst.max(code);
    }
    write_text(out, "verify_remark2_margins.csv", &rows)?;
    if let Some(n) = smallest_pass {
        println!("smallest tested N that passes: {n}");
    }
    Ok(worst)
}

fn run_self_check(config: &ExperimentConfig, out: &Path) -> Result<i32, String> {
    let spec = build_spec(config)?;
    let [z_min, z_max] = config.z_range;
    let report = window_self_check(
        &spec,
        &config.init,
        &ProfileOptions {
            t: config.t,
            z_min,
            z_max,
            replicas: config.replicas,
            seed: config.seed,
            epsilon_trunc: config.epsilon_trunc,
            margin_override: None,
        },
    )
    .map_err(|e| e.to_string())?;
    write_json(out, "self_check.json", &report)?;
    let mut rows = vec!["z,p_default,p_doubled,abs_diff,combined_se".to_string()];
    for r in &report.rows {
        rows.push(format!(
            "{},{},{},{},{}",
            r.z, r.p_default, r.p_doubled, r.abs_diff, r.combined_se
        ));
    }
    write_text(out, "self_check.csv", &rows)?;
    println!(
        "margins {} vs {}: max per-site difference {} (pass: {})",
        report.margin_default, report.margin_doubled, report.max_abs_diff, report.pass
    );
    Ok(if report.pass { EXIT_PASS } else { EXIT_VIOLATION })
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<(), String> {
    let body = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
    fs::write(out.join(name), body + "\n").map_err(|e| e.to_string())
}

fn write_text(out: &Path, name: &str, rows: &[String]) -> Result<(), String> {
    fs::write(out.join(name), rows.join("\n") + "\n").map_err(|e| e.to_string())
}
