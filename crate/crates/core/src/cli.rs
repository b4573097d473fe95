//! Command-line front end.
//!
//! Every command can be driven by flags or by a JSON config whose `command`
//! field names the command. Artifacts land in `--out` (default `.`); stdout
//! gets one summary line, or the JSON record for `roots`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{estimate_sigma, mle, SufficientStats};
use crate::io::{self, PathMeta};
use crate::limit::{phase_at, sample_limit, LimitConfig};
use crate::model::{ModelParams, Regime};
use crate::montecarlo::{convergence_study, run_experiment, ExperimentConfig};
use crate::regime::regime_info;
use crate::simulate::{simulate, Scheme, SimConfig};

#[derive(Debug, Parser)]
#[command(name = "car2", version, about = "Simulate and estimate the second-order continuous-time Gaussian autoregression")]
pub struct Cli {
    /// Master seed; overrides any seed in the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// JSON config with a `command` field.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Characteristic roots, regime and rates for a drift.
    Roots(DriftArgs),
    /// Simulate one path to path.csv with a path.json sidecar.
    Simulate(SimulateArgs),
    /// Maximum likelihood estimate from a path CSV.
    Estimate(EstimateArgs),
    /// Draw from the limit law of the normalized estimation errors.
    LimitSample(LimitArgs),
    /// Monte Carlo comparison against the limit laws (config file only).
    Experiment,
    /// Median error across horizons (config file only).
    Convergence,
}

fn finite(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err("value must be finite".into()),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Args)]
pub struct DriftArgs {
    #[arg(long, allow_negative_numbers = true, value_parser = finite)]
    pub theta1: Option<f64>,
    #[arg(long, allow_negative_numbers = true, value_parser = finite)]
    pub theta2: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[command(flatten)]
    pub drift: DriftArgs,
    #[arg(long, value_parser = finite)]
    pub sigma: Option<f64>,
    #[arg(long, allow_negative_numbers = true, value_parser = finite, default_value_t = 0.0)]
    pub x0: f64,
    #[arg(long, allow_negative_numbers = true, value_parser = finite, default_value_t = 0.0)]
    pub dx0: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SchemeArg {
    Exact,
    Euler,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_parser = finite)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub n_steps: Option<usize>,
    #[arg(long, value_enum, default_value = "exact")]
    pub scheme: SchemeArg,
    /// Leave the dw column empty.
    #[arg(long)]
    pub no_noise: bool,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Path CSV; a sibling .json sidecar supplies σ when present.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Noise scale, overriding the sidecar.
    #[arg(long, value_parser = finite)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct LimitArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 10_000)]
    pub grid_n: usize,
    /// Phase `2νT mod 2π` for oscillating explosive roots.
    #[arg(long, value_parser = finite)]
    pub phase: Option<f64>,
    /// Horizon from which to derive the phase.
    #[arg(long, value_parser = finite)]
    pub horizon: Option<f64>,
}

/// A whole run described in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum CliConfig {
    Roots(RootsJob),
    Simulate(SimulateJob),
    Estimate(EstimateJob),
    LimitSample(LimitJob),
    Experiment(ExperimentConfig),
    Convergence(ExperimentConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RootsJob {
    pub theta1: f64,
    pub theta2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateJob {
    pub params: ModelParams,
    pub horizon: f64,
    pub n_steps: usize,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "yes")]
    pub record_noise: bool,
    #[serde(default)]
    pub seed: u64,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateJob {
    pub input: PathBuf,
    #[serde(default)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitJob {
    pub params: ModelParams,
    pub n: usize,
    #[serde(default = "default_grid")]
    pub grid_n: usize,
    #[serde(default)]
    pub phase: Option<f64>,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_grid() -> usize {
    10_000
}

impl CliConfig {
    pub fn name(&self) -> &'static str {
        match self {
            CliConfig::Roots(_) => "roots",
            CliConfig::Simulate(_) => "simulate",
            CliConfig::Estimate(_) => "estimate",
            CliConfig::LimitSample(_) => "limit-sample",
            CliConfig::Experiment(_) => "experiment",
            CliConfig::Convergence(_) => "convergence",
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    fn set_seed(&mut self, seed: u64) {
        match self {
            CliConfig::Simulate(j) => j.seed = seed,
            CliConfig::LimitSample(j) => j.seed = seed,
            CliConfig::Experiment(c) | CliConfig::Convergence(c) => c.seed = seed,
            CliConfig::Roots(_) | CliConfig::Estimate(_) => {}
        }
    }
}

/// Exit status for a failed run: 3 for numeric failures, 2 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_numeric() {
        3
    } else {
        2
    }
}

fn need<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("missing --{flag} (or pass --config)")))
}

fn model(m: &ModelArgs) -> Result<ModelParams> {
    let p = ModelParams {
        theta1: need(m.drift.theta1, "theta1")?,
        theta2: need(m.drift.theta2, "theta2")?,
        sigma: need(m.sigma, "sigma")?,
        x0: m.x0,
        dx0: m.dx0,
    };
    p.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(p)
}

/// Turns parsed arguments into a job.
pub fn resolve(cli: &Cli) -> Result<CliConfig> {
    let mut job = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            let job = CliConfig::from_json(&text)?;
            if let Some(cmd) = &cli.command {
                if command_name(cmd) != job.name() {
                    return Err(Error::Config(format!(
                        "config is for `{}` but `{}` was requested",
                        job.name(),
                        command_name(cmd)
                    )));
                }
            }
            job
        }
        None => from_flags(cli.command.as_ref().ok_or_else(|| Error::Config("no command given".into()))?)?,
    };
    if let Some(seed) = cli.seed {
        job.set_seed(seed);
    }
    Ok(job)
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Roots(_) => "roots",
        Command::Simulate(_) => "simulate",
        Command::Estimate(_) => "estimate",
        Command::LimitSample(_) => "limit-sample",
        Command::Experiment => "experiment",
        Command::Convergence => "convergence",
    }
}

fn from_flags(cmd: &Command) -> Result<CliConfig> {
    Ok(match cmd {
        Command::Roots(d) => CliConfig::Roots(RootsJob { theta1: need(d.theta1, "theta1")?, theta2: need(d.theta2, "theta2")? }),
        Command::Simulate(a) => CliConfig::Simulate(SimulateJob {
            params: model(&a.model)?,
            horizon: need(a.horizon, "horizon")?,
            n_steps: need(a.n_steps, "n-steps")?,
            scheme: match a.scheme {
                SchemeArg::Exact => Scheme::Exact,
                SchemeArg::Euler => Scheme::Euler,
            },
            record_noise: !a.no_noise,
            seed: 0,
        }),
        Command::Estimate(a) => CliConfig::Estimate(EstimateJob { input: need(a.input.clone(), "input")?, sigma: a.sigma }),
        Command::LimitSample(a) => CliConfig::LimitSample(LimitJob {
            params: model(&a.model)?,
            n: need(a.n, "n")?,
            grid_n: a.grid_n,
            phase: a.phase,
            horizon: a.horizon,
            seed: 0,
        }),
        Command::Experiment | Command::Convergence => {
            return Err(Error::Config(format!("`{}` needs --config", command_name(cmd))))
        }
    })
}

/// Estimate record written by `estimate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub theta1_hat: f64,
    pub theta2_hat: f64,
    #[serde(rename = "det_D")]
    pub det_d: f64,
    pub psi: [[f64; 2]; 2],
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n: usize,
    pub seed: Option<u64>,
    pub sigma: f64,
    pub sigma_hat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitMeta {
    pub regime: Regime,
    pub p: [f64; 2],
    pub q: [f64; 2],
    pub params: ModelParams,
    pub n: usize,
    pub grid_n: usize,
    pub phase: f64,
    pub seed: u64,
}

pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    let job = resolve(cli)?;
    execute(&job, &cli.out, stdout)
}

pub fn execute(job: &CliConfig, out: &Path, stdout: &mut dyn Write) -> Result<()> {
    match job {
        CliConfig::Roots(j) => {
            let info = regime_info(j.theta1, j.theta2).map_err(|e| Error::Config(e.to_string()))?;
            stdout.write_all(&io::json_bytes(&info)?)?;
        }
        CliConfig::Simulate(j) => {
            let mut sim = SimConfig::new(j.horizon, j.n_steps).with_seed(j.seed, 0).with_scheme(j.scheme);
            sim.record_noise = j.record_noise;
            sim.validate().map_err(|e| Error::Config(e.to_string()))?;
            let path = simulate(&j.params, &sim)?;
            let (csv, meta) = (out.join("path.csv"), out.join("path.json"));
            io::write_atomic(&csv, &io::path_csv(&path)?)?;
            io::write_json(&meta, &PathMeta { params: j.params, sim })?;
            writeln!(stdout, "simulated {} steps to T = {}: {} {}", j.n_steps, j.horizon, csv.display(), meta.display())?;
        }
        CliConfig::Estimate(j) => {
            let record = estimate_file(&j.input, j.sigma)?;
            let dest = out.join("estimate.json");
            io::write_json(&dest, &record)?;
            writeln!(
                stdout,
                "theta1_hat = {} theta2_hat = {}: {}",
                record.theta1_hat,
                record.theta2_hat,
                dest.display()
            )?;
        }
        CliConfig::LimitSample(j) => {
            let params = j.params;
            let roots = params.roots();
            let regime = params.regime();
            let phase = match (j.phase, j.horizon) {
                (Some(p), _) => p,
                (None, Some(t)) => phase_at(&roots, t),
                (None, None) => 0.0,
            };
            let cfg = LimitConfig { n: j.n, grid_n: j.grid_n, seed: j.seed, phase };
            if cfg.n == 0 {
                return Err(Error::Config("n must be at least 1".into()));
            }
            let draws = sample_limit(regime, &roots, &params, &cfg).map_err(config_unless_numeric)?;
            let (csv, meta) = (out.join("limit.csv"), out.join("limit.json"));
            io::write_atomic(&csv, &io::limit_csv(&draws)?)?;
            let grid_n = draws.first().map_or(0, |d| d.grid_n);
            io::write_json(
                &meta,
                &LimitMeta {
                    regime,
                    p: [roots.p.re, roots.p.im],
                    q: [roots.q.re, roots.q.im],
                    params,
                    n: j.n,
                    grid_n,
                    phase,
                    seed: j.seed,
                },
            )?;
            writeln!(stdout, "{} draws for {regime}: {} {}", j.n, csv.display(), meta.display())?;
        }
        CliConfig::Experiment(c) => {
            c.validate().map_err(config_unless_numeric)?;
            let report = run_experiment(c)?;
            let (json, csv) = (out.join("report.json"), out.join("residuals.csv"));
            io::write_json(&json, &report)?;
            io::write_atomic(&csv, &io::residuals_csv(&report)?)?;
            let ks: Vec<String> = report
                .horizons
                .iter()
                .map(|h| {
                    let k = |c: &Option<crate::montecarlo::CoordSummary>| {
                        c.as_ref().and_then(|c| c.ks).map_or("-".to_string(), |k| format!("{k:.4}"))
                    };
                    format!("T={} ks=({}, {})", h.horizon, k(&h.r1), k(&h.r2))
                })
                .collect();
            writeln!(
                stdout,
                "{} in {:.1}s, {}: {} {}",
                report.regime,
                report.wall_time_s,
                ks.join("; "),
                json.display(),
                csv.display()
            )?;
        }
        CliConfig::Convergence(c) => {
            c.validate().map_err(config_unless_numeric)?;
            let report = convergence_study(c)?;
            let dest = out.join("convergence.json");
            io::write_json(&dest, &report)?;
            writeln!(
                stdout,
                "{}: stabilizes {:?}, raw error shrinks {:?}: {}",
                report.regime,
                report.stabilizes,
                report.raw_shrinks,
                dest.display()
            )?;
        }
    }
    Ok(())
}

fn config_unless_numeric(e: Error) -> Error {
    if e.is_numeric() || matches!(e, Error::Config(_)) {
        e
    } else {
        Error::Config(e.to_string())
    }
}

/// Reads a path CSV (and its sidecar when present) and estimates the drift.
pub fn estimate_file(input: &Path, sigma: Option<f64>) -> Result<EstimateRecord> {
    let bytes = fs::read(input).map_err(|e| Error::Config(format!("cannot read {}: {e}", input.display())))?;
    let sidecar = input.with_extension("json");
    let meta: Option<PathMeta> = match fs::read_to_string(&sidecar) {
        Ok(text) => Some(serde_json::from_str(&text).map_err(|e| Error::Config(format!("bad sidecar {}: {e}", sidecar.display())))?),
        Err(_) => None,
    };
    let mut params = match (meta, sigma) {
        (Some(m), _) => m.params,
        (None, Some(s)) => ModelParams::from_drift(0.0, 0.0, s).map_err(|e| Error::Config(e.to_string()))?,
        (None, None) => return Err(Error::Config(format!("no sidecar {}; pass --sigma", sidecar.display()))),
    };
    if let Some(s) = sigma {
        params.sigma = s;
        params.validate().map_err(|e| Error::Config(e.to_string()))?;
    }
    let path = io::read_path_csv(&bytes, params).map_err(|e| match e {
        Error::Csv { .. } => e,
        other => Error::Config(other.to_string()),
    })?;
    let stats = SufficientStats::from_path(&path)?;
    let est = mle(&stats)?;
    Ok(EstimateRecord {
        theta1_hat: est.theta1_hat,
        theta2_hat: est.theta2_hat,
        det_d: est.det_d,
        psi: est.psi,
        horizon: path.horizon(),
        n: path.n_steps(),
        seed: meta.map(|m| m.sim.seed),
        sigma: params.sigma,
        sigma_hat: estimate_sigma(&path)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_discriminator_and_unknown_keys() {
        let ok = r#"{"command":"roots","theta1":3,"theta2":-2}"#;
        assert_eq!(CliConfig::from_json(ok).unwrap(), CliConfig::Roots(RootsJob { theta1: 3.0, theta2: -2.0 }));
        assert!(CliConfig::from_json(r#"{"command":"roots","theta1":3,"theta2":-2,"extra":0}"#).is_err());
        assert!(CliConfig::from_json(r#"{"command":"fly","theta1":3}"#).is_err());
        let exp = r#"{"command":"experiment","params":{"theta1":-3,"theta2":-2,"sigma":1},
                      "horizons":[10],"n_reps":4,"comparison":{"kind":"none"},"typo":1}"#;
        assert!(CliConfig::from_json(exp).is_err());
        let exp = exp.replace(",\"typo\":1", "");
        assert!(matches!(CliConfig::from_json(&exp).unwrap(), CliConfig::Experiment(_)));
    }

    #[test]
    fn seed_flag_overrides_config() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("c.json");
        fs::write(&f, r#"{"command":"simulate","params":{"theta1":0,"theta2":0,"sigma":1},"horizon":1,"n_steps":4,"seed":3}"#).unwrap();
        let cli = Cli::try_parse_from(["car2", "--config", f.to_str().unwrap(), "--seed", "11"]).unwrap();
        let CliConfig::Simulate(j) = resolve(&cli).unwrap() else { panic!() };
        assert_eq!(j.seed, 11);
        let cli = Cli::try_parse_from(["car2", "roots", "--config", f.to_str().unwrap()]).unwrap();
        assert!(matches!(resolve(&cli), Err(Error::Config(_))));
    }

    #[test]
    fn flags_reject_non_finite_and_missing_values() {
        assert!(Cli::try_parse_from(["car2", "roots", "--theta1", "nan", "--theta2", "0"]).is_err());
        let cli = Cli::try_parse_from(["car2", "roots", "--theta1", "-1"]).unwrap();
        assert!(matches!(resolve(&cli), Err(Error::Config(_))));
        let cli = Cli::try_parse_from(["car2", "experiment"]).unwrap();
        assert!(matches!(resolve(&cli), Err(Error::Config(_))));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::SingularDesign { det: 0.0, threshold: 1.0 }), 3);
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
    }
}
