//! Replication harness: simulate, estimate, normalize, compare.
//!
//! Replication `i` uses path stream `i` at every horizon, so with a common
//! step size the shorter paths are prefixes of the longer ones. Results are
//! collected by replication index and never depend on thread scheduling.

use std::time::Instant;

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{mle, SufficientStats};
use crate::limit::{phase_at, sample_limit, LimitConfig};
use crate::model::{ModelParams, Regime, RootPair};
use crate::regime::{checked_roots, nlrr_limit_sd, nlrr_rate, rate_functions, rotation_template, scaling_matrix, Rate};
use crate::rng;
use crate::simulate::{simulate, SimConfig};

/// Quantile levels reported for every coordinate.
pub const QUANTILE_LEVELS: [f64; 9] = [0.01, 0.05, 0.10, 0.25, 0.50, 0.75, 0.90, 0.95, 0.99];

/// Largest `Re(p)·T` accepted, i.e. `e^{pT} < 1e250`.
pub const MAX_GROWTH_EXPONENT: f64 = 575.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `v_i(T)(θ̂_i − θ_i)` with the regime's deterministic rates.
    #[default]
    DeterministicRate,
    /// Path-dependent rates with a normal limit.
    Nlrr,
    /// `B(−u_s, −u_c)·A_T·Ψ_T·(θ̂ − θ)` for complex roots with positive real
    /// part, `u` read off the final state.
    #[serde(rename = "matrix_a_t")]
    MatrixAT,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Comparison {
    /// Reference drawn from the theoretical limit of the chosen normalization.
    LimitSampler {
        #[serde(default = "default_n_ref")]
        n_ref: usize,
        #[serde(default = "default_grid")]
        grid_n: usize,
    },
    /// Independent normal reference per coordinate.
    Normal { mean: [f64; 2], var: [f64; 2], #[serde(default = "default_n_ref")] n_ref: usize },
    None,
}

impl Default for Comparison {
    fn default() -> Self {
        Comparison::LimitSampler { n_ref: default_n_ref(), grid_n: default_grid() }
    }
}

fn default_n_ref() -> usize {
    20_000
}

fn default_grid() -> usize {
    10_000
}

fn default_steps() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub params: ModelParams,
    pub horizons: Vec<f64>,
    #[serde(default = "default_steps")]
    pub n_steps_per_unit_time: usize,
    pub n_reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub comparison: Comparison,
    #[serde(default)]
    pub normalization: Normalization,
}

impl ExperimentConfig {
    pub fn new(params: ModelParams, horizons: Vec<f64>, n_reps: usize) -> Self {
        Self {
            params,
            horizons,
            n_steps_per_unit_time: default_steps(),
            n_reps,
            seed: 0,
            comparison: Comparison::default(),
            normalization: Normalization::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.n_reps < 2 {
            return Err(Error::Config("n_reps must be at least 2".into()));
        }
        if self.n_steps_per_unit_time == 0 {
            return Err(Error::Config("n_steps_per_unit_time must be positive".into()));
        }
        if self.horizons.is_empty() {
            return Err(Error::Config("at least one horizon is required".into()));
        }
        if self.horizons.iter().any(|t| !t.is_finite() || *t <= 0.0) {
            return Err(Error::Config("horizons must be positive and finite".into()));
        }
        if self.horizons.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("horizons must be strictly increasing".into()));
        }
        let growth = self.params.roots().p.re.max(0.0) * self.horizons.last().unwrap();
        if growth >= MAX_GROWTH_EXPONENT {
            return Err(Error::Config(format!("Re(p)·T = {growth} exceeds {MAX_GROWTH_EXPONENT}; shorten the horizon")));
        }
        let regime = self.params.regime();
        match self.normalization {
            Normalization::Nlrr if matches!(regime, Regime::Harmonic | Regime::ZeroDouble | Regime::SmallerRootZero) => {
                return Err(Error::NoNlrr(regime));
            }
            Normalization::Nlrr | Normalization::MatrixAT
                if (regime == Regime::UnstableOscillation) != (self.normalization == Normalization::MatrixAT) =>
            {
                return Err(Error::Config(format!(
                    "normalization {:?} does not apply to the {regime} regime",
                    self.normalization
                )));
            }
            _ => {}
        }
        if let Comparison::LimitSampler { n_ref, .. } | Comparison::Normal { n_ref, .. } = self.comparison {
            if n_ref == 0 {
                return Err(Error::Config("n_ref must be positive".into()));
            }
        }
        if let Comparison::Normal { mean, var, .. } = self.comparison {
            if mean.iter().chain(&var).any(|v| !v.is_finite()) || var.iter().any(|v| *v < 0.0) {
                return Err(Error::Config("normal reference needs finite means and non-negative variances".into()));
            }
        }
        Ok(())
    }

    fn n_steps(&self, horizon: f64) -> usize {
        ((horizon * self.n_steps_per_unit_time as f64).round() as usize).max(1)
    }
}

/// Outcome of one replication at one horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RepOutcome {
    /// Normalized residuals (NaN where a coordinate has no normalization)
    /// and raw errors `θ̂_i − θ_i`.
    Ok { r: [f64; 2], raw: [f64; 2] },
    Overflow,
    Singular,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoordSummary {
    pub quantiles: [f64; 9],
    pub median_abs: f64,
    pub ks: Option<f64>,
    pub reference_quantiles: Option<[f64; 9]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonReport {
    pub horizon: f64,
    pub n_steps: usize,
    pub n_ok: usize,
    pub n_overflow: usize,
    pub n_singular: usize,
    pub exclusion_fraction: f64,
    pub r1: Option<CoordSummary>,
    pub r2: Option<CoordSummary>,
    /// Median of `|θ̂_1 − θ_1|` and `|θ̂_2 − θ_2|`.
    pub raw_median_abs: [f64; 2],
    #[serde(skip)]
    pub outcomes: Vec<RepOutcome>,
    #[serde(skip)]
    pub reference: Option<[Vec<f64>; 2]>,
}

impl HorizonReport {
    /// Normalized residuals of successful replications, with their indices.
    pub fn residuals(&self) -> impl Iterator<Item = (usize, [f64; 2])> + '_ {
        self.outcomes.iter().enumerate().filter_map(|(i, o)| match o {
            RepOutcome::Ok { r, .. } => Some((i, *r)),
            _ => None,
        })
    }

    pub fn coordinate(&self, k: usize) -> Vec<f64> {
        self.residuals().map(|(_, r)| r[k]).filter(|v| !v.is_nan()).collect()
    }

    pub fn raw_errors(&self) -> Vec<[f64; 2]> {
        self.outcomes
            .iter()
            .filter_map(|o| match o {
                RepOutcome::Ok { raw, .. } => Some(*raw),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub regime: Regime,
    pub p: [f64; 2],
    pub q: [f64; 2],
    pub params: ModelParams,
    pub normalization: Normalization,
    pub comparison: Comparison,
    pub n_reps: usize,
    pub n_steps_per_unit_time: usize,
    pub seed: u64,
    pub horizons: Vec<HorizonReport>,
    /// Kept out of the JSON so reruns are byte-identical.
    #[serde(skip)]
    pub wall_time_s: f64,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let regime = cfg.params.regime();
    let roots = checked_roots(regime, &cfg.params.roots())?;
    let mut horizons = Vec::with_capacity(cfg.horizons.len());
    for &t in &cfg.horizons {
        horizons.push(run_horizon(cfg, regime, &roots, t)?);
    }
    Ok(ExperimentReport {
        regime,
        p: [roots.p.re, roots.p.im],
        q: [roots.q.re, roots.q.im],
        params: cfg.params,
        normalization: cfg.normalization,
        comparison: cfg.comparison,
        n_reps: cfg.n_reps,
        n_steps_per_unit_time: cfg.n_steps_per_unit_time,
        seed: cfg.seed,
        horizons,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

fn run_horizon(cfg: &ExperimentConfig, regime: Regime, roots: &RootPair, horizon: f64) -> Result<HorizonReport> {
    let n_steps = cfg.n_steps(horizon);
    let outcomes: Vec<RepOutcome> = (0..cfg.n_reps as u64)
        .into_par_iter()
        .map(|rep| replicate(cfg, regime, roots, horizon, n_steps, rep))
        .collect::<Result<_>>()?;
    let n_ok = outcomes.iter().filter(|o| matches!(o, RepOutcome::Ok { .. })).count();
    let n_overflow = outcomes.iter().filter(|o| matches!(o, RepOutcome::Overflow)).count();
    let n_singular = outcomes.len() - n_ok - n_overflow;
    if n_ok == 0 {
        return Err(Error::AllReplicationsFailed { reps: cfg.n_reps, horizon });
    }
    let mut report = HorizonReport {
        horizon,
        n_steps,
        n_ok,
        n_overflow,
        n_singular,
        exclusion_fraction: (n_overflow + n_singular) as f64 / outcomes.len() as f64,
        r1: None,
        r2: None,
        raw_median_abs: [0.0; 2],
        outcomes,
        reference: None,
    };
    let raw = report.raw_errors();
    for k in 0..2 {
        let abs: Vec<f64> = raw.iter().map(|r| r[k].abs()).collect();
        report.raw_median_abs[k] = quantile(&sorted(abs), 0.5);
    }
    let reference = reference_sample(cfg, regime, roots, horizon)?;
    let mut summaries = [None, None];
    for (k, slot) in summaries.iter_mut().enumerate() {
        let sample = report.coordinate(k);
        if sample.is_empty() {
            continue;
        }
        let s = sorted(sample);
        let reference_k = reference.as_ref().map(|r| sorted(r[k].clone()));
        let ks = match &reference_k {
            Some(r) if !r.is_empty() => Some(ks_sorted(&s, r)),
            _ => None,
        };
        *slot = Some(CoordSummary {
            quantiles: QUANTILE_LEVELS.map(|p| quantile(&s, p)),
            median_abs: quantile(&sorted(s.iter().map(|v| v.abs()).collect()), 0.5),
            ks,
            reference_quantiles: reference_k.filter(|r| !r.is_empty()).map(|r| QUANTILE_LEVELS.map(|p| quantile(&r, p))),
        });
    }
    let [r1, r2] = summaries;
    report.r1 = r1;
    report.r2 = r2;
    report.reference = reference;
    Ok(report)
}

fn replicate(
    cfg: &ExperimentConfig,
    regime: Regime,
    roots: &RootPair,
    horizon: f64,
    n_steps: usize,
    rep: u64,
) -> Result<RepOutcome> {
    let mut sim = SimConfig::new(horizon, n_steps).with_seed(cfg.seed, rep);
    sim.record_noise = false;
    let path = match simulate(&cfg.params, &sim) {
        Ok(p) => p,
        Err(Error::Overflow { .. }) | Err(Error::NonFinite(_)) => return Ok(RepOutcome::Overflow),
        Err(e) => return Err(e),
    };
    let stats = match SufficientStats::from_path(&path) {
        Ok(s) => s,
        Err(Error::NonFinite(_)) => return Ok(RepOutcome::Overflow),
        Err(e) => return Err(e),
    };
    let est = match mle(&stats) {
        Ok(e) => e,
        Err(Error::SingularDesign { .. }) => return Ok(RepOutcome::Singular),
        Err(Error::NonFinite(_)) => return Ok(RepOutcome::Overflow),
        Err(e) => return Err(e),
    };
    let raw = [est.theta1_hat - cfg.params.theta1, est.theta2_hat - cfg.params.theta2];
    let r = match cfg.normalization {
        Normalization::DeterministicRate => {
            let spec = rate_functions(regime, roots)?;
            [spec.v1.apply(horizon, raw[0]), spec.v2.apply(horizon, raw[1])]
        }
        Normalization::Nlrr => {
            let rate = nlrr_rate(regime, roots, &stats)?;
            if !rate.usable() {
                return Ok(RepOutcome::Singular);
            }
            let (a, b) = rate.rates();
            [a.map_or(f64::NAN, |a| a * raw[0]), b.map_or(f64::NAN, |b| b * raw[1])]
        }
        Normalization::MatrixAT => {
            let a_t = scaling_matrix(regime, roots, horizon)?;
            let (lambda, nu) = (roots.p.re, roots.p.im);
            let (x, y) = (stats.x_t, (stats.v_t - lambda * stats.x_t) / nu);
            let decay = (-lambda * horizon).exp();
            let (s, c) = (nu * horizon).sin_cos();
            let u_c = decay * (x * s + y * c);
            let u_s = decay * (y * s - x * c);
            let err = Vector2::new(raw[1], raw[0]);
            let z = rotation_template(-u_s, -u_c) * (a_t * stats.psi() * err);
            [z[0], z[1]]
        }
    };
    if r.iter().any(|v| v.is_infinite()) {
        return Ok(RepOutcome::Overflow);
    }
    Ok(RepOutcome::Ok { r, raw })
}

fn reference_sample(cfg: &ExperimentConfig, regime: Regime, roots: &RootPair, horizon: f64) -> Result<Option<[Vec<f64>; 2]>> {
    let sigma = cfg.params.sigma;
    match (cfg.comparison, cfg.normalization) {
        (Comparison::None, _) => Ok(None),
        (Comparison::Normal { mean, var, n_ref }, _) => {
            Ok(Some(normal_reference(cfg.seed, n_ref, mean, [var[0].sqrt(), var[1].sqrt()])))
        }
        (Comparison::LimitSampler { n_ref, grid_n }, Normalization::DeterministicRate) => {
            let lc = LimitConfig { n: n_ref, grid_n, seed: cfg.seed, phase: phase_at(roots, horizon) };
            let draws = sample_limit(regime, roots, &cfg.params, &lc)?;
            Ok(Some([draws.iter().map(|d| d.l1).collect(), draws.iter().map(|d| d.l2).collect()]))
        }
        (Comparison::LimitSampler { n_ref, .. }, Normalization::Nlrr) => {
            let sd = nlrr_limit_sd(regime, roots, sigma)?;
            let mut r = normal_reference(cfg.seed, n_ref, [0.0; 2], [sd.0, sd.1.unwrap_or(0.0)]);
            if sd.1.is_none() {
                r[1].clear();
            }
            Ok(Some(r))
        }
        (Comparison::LimitSampler { n_ref, .. }, Normalization::MatrixAT) => {
            let cov = matrix_limit_cov(roots, sigma, phase_at(roots, horizon));
            Ok(Some(normal_reference(cfg.seed, n_ref, [0.0; 2], [cov[(0, 0)].sqrt(), cov[(1, 1)].sqrt()])))
        }
    }
}

/// Limit covariance of the matrix normalization at phase `2νT mod 2π`.
pub fn matrix_limit_cov(roots: &RootPair, sigma: f64, phase: f64) -> Matrix2<f64> {
    let (lambda, nu) = (roots.p.re, roots.p.im);
    let rho = lambda.hypot(nu);
    let arg = phase - nu.atan2(lambda);
    let cc = 1.0 / (4.0 * lambda) + arg.cos() / (4.0 * rho);
    let ss = 1.0 / (4.0 * lambda) - arg.cos() / (4.0 * rho);
    let sc = arg.sin() / (4.0 * rho);
    Matrix2::new(cc, sc, sc, ss) * (sigma * nu).powi(2)
}

fn normal_reference(seed: u64, n: usize, mean: [f64; 2], sd: [f64; 2]) -> [Vec<f64>; 2] {
    let mut out = [Vec::with_capacity(n), Vec::with_capacity(n)];
    for k in 0..2 {
        let mut rng = rng::stream(seed, rng::DOMAIN_REFERENCE, k as u64);
        out[k].extend((0..n).map(|_| mean[k] + sd[k] * rng.sample::<f64, _>(StandardNormal)));
    }
    out
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// Linearly interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let w = pos - lo as f64;
    if w == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + w * (sorted[hi] - sorted[lo])
    }
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::NonFinite("KS sample"));
    }
    Ok(ks_sorted(&sorted(a.to_vec()), &sorted(b.to_vec())))
}

fn ks_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub horizon: f64,
    pub n_ok: usize,
    pub raw_median_abs: [f64; 2],
    /// `v_i(T)·median|θ̂_i − θ_i|`
    pub normalized_median: [f64; 2],
    /// Same with the control rate, when one applies.
    pub control_median: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub regime: Regime,
    pub v1_expr: String,
    pub v2_expr: String,
    /// `exp(p*T)` for two distinct positive roots: the larger root's rate.
    pub control_expr: Option<String>,
    pub rows: Vec<ConvergenceRow>,
    /// Consecutive ratios of the normalized medians all lie in `[1/3, 3]`.
    pub stabilizes: [bool; 2],
    /// Largest over smallest normalized median across horizons.
    pub spread: [f64; 2],
    /// Raw median at the last horizon is below the first.
    pub raw_shrinks: [bool; 2],
    /// Last over first control median.
    pub control_growth: Option<[f64; 2]>,
}

pub fn convergence_study(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    if cfg.horizons.len() < 3 {
        return Err(Error::Config("a convergence study needs at least 3 horizons".into()));
    }
    let mut cfg = cfg.clone();
    cfg.comparison = Comparison::None;
    cfg.normalization = Normalization::DeterministicRate;
    let report = run_experiment(&cfg)?;
    let roots = checked_roots(report.regime, &cfg.params.roots())?;
    let spec = rate_functions(report.regime, &roots)?;
    let control = (report.regime == Regime::DistinctPositive).then_some(Rate::Exp(roots.p.re));
    let rows: Vec<ConvergenceRow> = report
        .horizons
        .iter()
        .map(|h| {
            let m = h.raw_median_abs;
            ConvergenceRow {
                horizon: h.horizon,
                n_ok: h.n_ok,
                raw_median_abs: m,
                normalized_median: [spec.v1.apply(h.horizon, m[0]), spec.v2.apply(h.horizon, m[1])],
                control_median: control.map(|c| [c.apply(h.horizon, m[0]), c.apply(h.horizon, m[1])]),
            }
        })
        .collect();
    let per = |f: &dyn Fn(usize) -> bool| [f(0), f(1)];
    let stabilizes = per(&|k| {
        rows.windows(2).all(|w| {
            let r = w[1].normalized_median[k] / w[0].normalized_median[k];
            (1.0 / 3.0..=3.0).contains(&r)
        })
    });
    let spread = [0, 1].map(|k| {
        let v = rows.iter().map(|r| r.normalized_median[k]);
        v.clone().fold(f64::MIN, f64::max) / v.fold(f64::MAX, f64::min)
    });
    let (first, last) = (&rows[0], &rows[rows.len() - 1]);
    let raw_shrinks = per(&|k| last.raw_median_abs[k] < first.raw_median_abs[k]);
    let control_growth = match (first.control_median, last.control_median) {
        (Some(a), Some(b)) => Some([b[0] / a[0], b[1] / a[1]]),
        _ => None,
    };
    Ok(ConvergenceReport {
        regime: report.regime,
        v1_expr: spec.v1.expr(),
        v2_expr: spec.v2.expr(),
        control_expr: control.map(|c| c.expr()),
        rows,
        stabilizes,
        spread,
        raw_shrinks,
        control_growth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_edge_cases() {
        assert_eq!(ks_two_sample(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(ks_two_sample(&[0.0], &[1.0]).unwrap(), 1.0);
        assert!(matches!(ks_two_sample(&[], &[1.0]), Err(Error::EmptySample)));
        assert!(ks_two_sample(&[f64::NAN], &[1.0]).is_err());
        // ties across samples must not create a spurious jump
        assert_eq!(ks_two_sample(&[1.0, 1.0, 2.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((ks_two_sample(&[1.0, 2.0], &[1.5]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ks_matches_brute_force() {
        let mut rng = rng::stream(1, 99, 0);
        for _ in 0..50 {
            let a: Vec<f64> = (0..rng.random_range(1..30)).map(|_| (rng.random_range(0..8) as f64) * 0.5).collect();
            let b: Vec<f64> = (0..rng.random_range(1..30)).map(|_| (rng.random_range(0..8) as f64) * 0.5).collect();
            let ecdf = |s: &[f64], x: f64| s.iter().filter(|v| **v <= x).count() as f64 / s.len() as f64;
            let brute = a.iter().chain(&b).map(|&x| (ecdf(&a, x) - ecdf(&b, x)).abs()).fold(0.0, f64::max);
            assert!((ks_two_sample(&a, &b).unwrap() - brute).abs() < 1e-15);
        }
    }

    #[test]
    fn ks_null_distribution() {
        let mut exceed = 0;
        for trial in 0..200u64 {
            let [a, b] = normal_reference(trial, 2000, [0.0; 2], [1.0; 2]);
            if ks_two_sample(&a, &b).unwrap() >= 0.061 {
                exceed += 1;
            }
        }
        // P(D ≥ 0.061) ≈ 0.1% at these sizes
        assert!(exceed <= 2, "{exceed}");
    }

    #[test]
    fn quantiles_interpolate() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&s, 0.5), 3.0);
        assert_eq!(quantile(&s, 0.0), 1.0);
        assert_eq!(quantile(&s, 1.0), 5.0);
        assert!((quantile(&s, 0.1) - 1.4).abs() < 1e-15);
    }

    fn small_ergodic() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(ModelParams::from_drift(-3.0, -2.0, 1.0).unwrap(), vec![20.0, 40.0], 64);
        cfg.seed = 5;
        cfg.comparison = Comparison::LimitSampler { n_ref: 2000, grid_n: 1000 };
        cfg
    }

    #[test]
    fn experiment_is_deterministic_and_monotone() {
        let cfg = small_ergodic();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        for h in &a.horizons {
            assert_eq!(h.n_ok, 64);
            for c in [&h.r1, &h.r2].into_iter().flatten() {
                assert!(c.quantiles.windows(2).all(|w| w[0] <= w[1]));
                let ks = c.ks.unwrap();
                assert!((0.0..=1.0).contains(&ks));
            }
        }
    }

    #[test]
    fn replication_matches_direct_estimate() {
        let cfg = small_ergodic();
        let report = run_experiment(&cfg).unwrap();
        let h = &report.horizons[0];
        let mut sim = SimConfig::new(20.0, 2000).with_seed(5, 7);
        sim.record_noise = false;
        let est = mle(&SufficientStats::from_path(&simulate(&cfg.params, &sim).unwrap()).unwrap()).unwrap();
        let RepOutcome::Ok { r, raw } = h.outcomes[7] else { panic!() };
        assert_eq!(raw[0], est.theta1_hat + 3.0);
        assert!((r[0] - (60.0f64).sqrt() * raw[0]).abs() < 1e-12 * r[0].abs().max(1e-300));
    }

    #[test]
    fn config_guards() {
        let base = small_ergodic();
        let mut c = base.clone();
        c.n_reps = 1;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.horizons = vec![40.0, 20.0];
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.params = ModelParams::from_drift(0.0, -1.0, 1.0).unwrap();
        c.normalization = Normalization::Nlrr;
        assert!(matches!(c.validate(), Err(Error::NoNlrr(Regime::Harmonic))));
        let mut c = base.clone();
        c.normalization = Normalization::MatrixAT;
        assert!(c.validate().is_err());
        let mut c = base;
        c.params = ModelParams::from_drift(3.0, -2.0, 1.0).unwrap();
        c.horizons = vec![300.0];
        assert!(c.validate().is_err());
        let json = r#"{"params":{"theta1":-1,"theta2":-1,"sigma":1},"horizons":[1],"n_reps":2,"bogus":1}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(json).is_err());
    }

    #[test]
    fn degenerate_paths_are_counted() {
        let mut cfg = ExperimentConfig::new(ModelParams::new(0.0, 0.0, 0.0, 1.0, 0.0).unwrap(), vec![1.0], 4);
        cfg.comparison = Comparison::None;
        assert!(matches!(run_experiment(&cfg), Err(Error::AllReplicationsFailed { reps: 4, .. })));
    }

    #[test]
    fn nlrr_reference_spread() {
        let (sd, sd2) = nlrr_limit_sd(Regime::Ergodic, &RootPair::real(-1.0, -2.0), 0.7).unwrap();
        assert_eq!((sd, sd2), (0.7, Some(0.7)));
        let (sd, sd2) = nlrr_limit_sd(Regime::LargerRootZero, &RootPair::real(0.0, -2.0), 1.3).unwrap();
        assert_eq!(sd, 1.3);
        assert!(sd2.is_none());
    }

    #[test]
    fn matrix_limit_cov_is_positive_definite() {
        let roots = RootPair::complex(0.5, 3.0);
        for k in 0..16 {
            let c = matrix_limit_cov(&roots, 1.3, k as f64 * 0.4);
            assert!(c[(0, 0)] > 0.0 && c[(1, 1)] > 0.0 && c.determinant() > 0.0);
        }
    }

    #[test]
    fn convergence_needs_three_horizons() {
        assert!(convergence_study(&small_ergodic()).is_err());
    }
}
