//! End-to-end acceptance checks. Each check prints one PASS/FAIL line; the
//! process exits non-zero when any check fails.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use car2::cli::{execute, CliConfig, EstimateJob, LimitJob, RootsJob, SimulateJob};
use car2::estimate::{
    det_functional, mle, num_functional, reconstructed_increments, residual_oracle, SufficientStats,
};
use car2::model::transition;
use car2::montecarlo::{
    convergence_study, ks_two_sample, quantile, run_experiment, Comparison, ExperimentConfig, HorizonReport,
    Normalization,
};
use car2::simulate::{simulate, state_moments, Scheme, SimConfig};
use car2::{ModelParams, Regime};
use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = (bool, String);

fn rel_err(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.max(f64::MIN_POSITIVE)
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn reference(h: &HorizonReport, k: usize) -> Vec<f64> {
    h.reference.as_ref().expect("experiment ran with a reference")[k].clone()
}

fn ks_of(h: &HorizonReport, k: usize) -> f64 {
    let c = if k == 0 { &h.r1 } else { &h.r2 };
    c.as_ref().and_then(|c| c.ks).expect("coordinate has a KS statistic")
}

fn identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for i in 0..100u64 {
        let regime = Regime::ALL[i as usize % 9];
        let (t1, t2) = regime.reference_drift();
        let sigma = rng.random_range(0.5..1.5);
        let params = ModelParams::new(t1, t2, sigma, rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).unwrap();
        let path = simulate(&params, &SimConfig::new(4.0, 800).with_seed(11, i)).unwrap();
        let theta = Vector2::new(t2, t1);
        let dv = reconstructed_increments(&path, theta).unwrap();
        let e = mle(&SufficientStats::ito_sums_with(&path, &dv).unwrap()).unwrap();
        let r = residual_oracle(&path).unwrap();
        let scale = r[0].abs().max(r[1].abs());
        worst = worst.max(rel_err(e.theta1_hat - t1, r[0], scale)).max(rel_err(e.theta2_hat - t2, r[1], scale));
    }

    let mut worst_bilinear: f64 = 0.0;
    for _ in 0..20 {
        let n = 400;
        let mut draw = |s: f64| -> Vec<f64> { (0..n).map(|_| rng.random_range(-s..s)).collect() };
        let (f, g, w) = (draw(1.0), draw(1.0), draw(0.1));
        let h = 0.01;
        let [a, b, c, k]: [f64; 4] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
        let af: Vec<f64> = (0..n).map(|i| a * f[i] + b * g[i]).collect();
        let cg: Vec<f64> = (0..n).map(|i| c * f[i] + k * g[i]).collect();
        let det_rhs = (a * k - b * c).powi(2) * det_functional(&f, &g, h);
        let scale = (a * k - b * c).powi(2) * (det_functional(&f, &f, h).abs() + det_functional(&f, &g, h).abs()) + 1e-300;
        worst_bilinear = worst_bilinear.max(rel_err(det_functional(&af, &cg, h), det_rhs, det_rhs.abs().max(scale * 1e-3)));
        let n_fg = num_functional(&f, &g, &w, h);
        let n_gf = num_functional(&g, &f, &w, h);
        let n_rhs = (a * a * k - a * b * c) * n_fg + (b * b * c - a * b * k) * n_gf;
        let n_scale = (a * a * k - a * b * c).abs() * n_fg.abs() + (b * b * c - a * b * k).abs() * n_gf.abs();
        worst_bilinear = worst_bilinear.max(rel_err(num_functional(&af, &cg, &w, h), n_rhs, n_scale));
    }

    let mut worst_rescale: f64 = 0.0;
    for (i, regime) in Regime::ALL.iter().enumerate() {
        let (t1, t2) = regime.reference_drift();
        let params = ModelParams::new(t1, t2, 1.0, 0.4, -0.3).unwrap();
        let path = simulate(&params, &SimConfig::new(3.0, 600).with_seed(12, i as u64)).unwrap();
        let e = mle(&SufficientStats::from_path(&path).unwrap()).unwrap();
        for alpha in [0.25, 3.0] {
            let r = mle(&SufficientStats::from_path(&path.rescale_time(alpha).unwrap()).unwrap()).unwrap();
            let s1 = (alpha * e.theta1_hat).abs().max(1e-300);
            let s2 = (alpha * alpha * e.theta2_hat).abs().max(1e-300);
            worst_rescale = worst_rescale
                .max(rel_err(r.theta1_hat, alpha * e.theta1_hat, s1))
                .max(rel_err(r.theta2_hat, alpha * alpha * e.theta2_hat, s2));
        }
    }
    let ok = worst < 1e-9 && worst_bilinear < 1e-9 && worst_rescale < 1e-10;
    (ok, format!("oracle {worst:.1e}, bilinearity {worst_bilinear:.1e}, rescaling {worst_rescale:.1e}"))
}

fn noiseless_recovery() -> Outcome {
    let cases = [
        Regime::Ergodic,
        Regime::OppositeSign,
        Regime::DistinctPositive,
        Regime::Harmonic,
        Regime::UnstableOscillation,
    ];
    let mut worst: f64 = 0.0;
    for regime in cases {
        let (t1, t2) = regime.reference_drift();
        let params = ModelParams::new(t1, t2, 0.0, 1.0, 0.5).unwrap();
        let path = simulate(&params, &SimConfig::new(5.0, 1_000_000)).unwrap();
        let e = mle(&SufficientStats::from_path(&path).unwrap()).unwrap();
        let scale = t1.abs().max(t2.abs());
        worst = worst.max(rel_err(e.theta1_hat, t1, scale)).max(rel_err(e.theta2_hat, t2, scale));
    }
    (worst < 1e-4, format!("largest relative error {worst:.2e} over {} regimes", cases.len()))
}

fn simulator_moments() -> Outcome {
    let mut worst: f64 = 0.0;
    for regime in Regime::ALL {
        let (t1, t2) = regime.reference_drift();
        let params = ModelParams::new(t1, t2, 0.8, 0.7, -0.4).unwrap();
        let (horizon, m) = (2.0, 50);
        let k = transition(&params, horizon / m as f64).unwrap();
        let (mut mean, mut cov) = (params.initial_state(), Matrix2::zeros());
        for _ in 0..m {
            mean = k.mean * mean;
            cov = k.mean * cov * k.mean.transpose() + k.state_cov();
        }
        let (mean_t, cov_t) = state_moments(&params, horizon).unwrap();
        let ms = mean_t.amax().max(1e-300);
        let cs = cov_t.amax().max(1e-300);
        worst = worst.max((mean - mean_t).amax() / ms).max((cov - cov_t).amax() / cs);
    }

    let n = 100_000u64;
    let params = ModelParams::new(0.0, 0.0, 1.0, 0.0, 0.0).unwrap();
    let (mut sx, mut sxx, mut sv, mut svv) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let path = simulate(&params, &SimConfig::new(1.0, 4).with_seed(13, i).with_scheme(Scheme::Exact)).unwrap();
        let (x, v) = (path.x[4], path.v[4]);
        sx += x;
        sxx += x * x;
        sv += v;
        svv += v * v;
    }
    let nf = n as f64;
    let var_x = (sxx - sx * sx / nf) / (nf - 1.0);
    let var_v = (svv - sv * sv / nf) / (nf - 1.0);
    let se = |s2: f64| s2 * (2.0 / (nf - 1.0)).sqrt();
    let zx = (var_x - 1.0 / 3.0) / se(1.0 / 3.0);
    let zv = (var_v - 1.0) / se(1.0);
    let ok = worst < 1e-9 && zx.abs() < 4.0 && zv.abs() < 4.0;
    (ok, format!("composition {worst:.1e}, Var X(1) = {var_x:.5} (z {zx:+.2}), Var V(1) = {var_v:.5} (z {zv:+.2})"))
}

fn experiment(t1: f64, t2: f64, horizon: f64, steps: usize, n: usize, seed: u64, norm: Normalization) -> HorizonReport {
    let params = ModelParams::new(t1, t2, 1.0, 0.0, 0.0).unwrap();
    let mut cfg = ExperimentConfig::new(params, vec![horizon], n);
    cfg.n_steps_per_unit_time = steps;
    cfg.seed = seed;
    cfg.normalization = norm;
    cfg.comparison = Comparison::LimitSampler { n_ref: 20_000, grid_n: 10_000 };
    let mut report = run_experiment(&cfg).unwrap();
    report.horizons.remove(0)
}

fn ergodic_clt() -> Outcome {
    let h = experiment(-3.0, -2.0, 200.0, 100, 2000, 4, Normalization::DeterministicRate);
    let (k1, k2) = (ks_of(&h, 0), ks_of(&h, 1));
    (k1 < 0.06 && k2 < 0.06, format!("KS {k1:.4} and {k2:.4} (n_ok {})", h.n_ok))
}

fn ergodic_nlrr() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, (t1, t2)) in [(-3.0, -2.0), (-1.0, -4.0)].into_iter().enumerate() {
        let h = experiment(t1, t2, 200.0, 100, 2000, 5 + i as u64, Normalization::Nlrr);
        let k = ks_of(&h, 0);
        ok &= k < 0.06;
        parts.push(format!("theta = ({t1}, {t2}): KS {k:.4}"));
    }
    (ok, parts.join(", "))
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn neutral_root() -> Outcome {
    let h = experiment(-2.0, 0.0, 500.0, 100, 2000, 6, Normalization::DeterministicRate);
    let k = ks_of(&h, 1);
    let (a, b) = (h.coordinate(0), h.coordinate(1));
    let rho = correlation(&a, &b);
    let se = 1.0 / (a.len() as f64).sqrt();
    let ok = k < 0.08 && rho.abs() < 4.0 * se;
    (ok, format!("KS {k:.4}, correlation {rho:+.4} (4 SE = {:.4})", 4.0 * se))
}

/// Standard error of a sample median from the density near it.
fn median_se(sorted: &[f64]) -> f64 {
    let width = quantile(sorted, 0.55) - quantile(sorted, 0.45);
    let density = 0.1 / width;
    1.0 / (2.0 * density * (sorted.len() as f64).sqrt())
}

fn cauchy_type() -> Outcome {
    let (p, q) = (2.0, 0.5);
    let h = experiment(p + q, -p * q, 12.0, 1000, 2000, 7, Normalization::DeterministicRate);
    let sim = sorted(h.coordinate(0));
    let refr = sorted(reference(&h, 0));
    let (m_sim, m_ref) = (quantile(&sim, 0.5), quantile(&refr, 0.5));
    let band = 4.0 * (median_se(&sim).powi(2) + median_se(&refr).powi(2)).sqrt();
    let iqr = |s: &[f64]| quantile(s, 0.75) - quantile(s, 0.25);
    let iqr_ratio = iqr(&sim) / iqr(&refr);
    let coupled: Vec<f64> = refr.iter().map(|l| -p * l).collect();
    let k = ks_two_sample(&h.coordinate(1), &coupled).unwrap();
    let ok = (m_sim - m_ref).abs() <= band && (iqr_ratio - 1.0).abs() <= 0.15 && k < 0.08;
    (
        ok,
        format!(
            "median {m_sim:+.3} vs {m_ref:+.3} (band {band:.3}), IQR ratio {iqr_ratio:.3}, coupled KS {k:.4}, n_ok {}",
            h.n_ok
        ),
    )
}

fn zero_double() -> Outcome {
    let h = experiment(0.0, 0.0, 10.0, 100, 2000, 8, Normalization::DeterministicRate);
    let (k1, k2) = (ks_of(&h, 0), ks_of(&h, 1));
    (k1 < 0.06 && k2 < 0.06, format!("KS {k1:.4} and {k2:.4}"))
}

fn harmonic() -> Outcome {
    let h = experiment(0.0, -1.0, 500.0, 100, 2000, 9, Normalization::DeterministicRate);
    let (k1, k2) = (ks_of(&h, 0), ks_of(&h, 1));
    (k1 < 0.08 && k2 < 0.08, format!("KS {k1:.4} and {k2:.4}"))
}

fn wrong_rate_control() -> Outcome {
    let params = ModelParams::new(3.0, -2.0, 1.0, 0.0, 0.0).unwrap();
    let mut cfg = ExperimentConfig::new(params, vec![6.0, 8.0, 10.0], 1000);
    cfg.n_steps_per_unit_time = 1000;
    cfg.seed = 10;
    let r = convergence_study(&cfg).unwrap();
    let growth = r.control_growth.unwrap();
    let ok = r.spread[0] <= 3.0 && growth[0] >= 10.0;
    (
        ok,
        format!(
            "e^(qT) spread {:.2} / {:.2}, e^(pT) growth {:.1} / {:.1}",
            r.spread[0], r.spread[1], growth[0], growth[1]
        ),
    )
}

fn run_suite(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut stdout = Vec::new();
    let params = ModelParams::new(-1.0, -2.0, 0.7, 0.5, 0.0).unwrap();
    let mut exp = ExperimentConfig::new(params, vec![10.0, 20.0], 200);
    exp.seed = 21;
    exp.comparison = Comparison::LimitSampler { n_ref: 2000, grid_n: 1000 };
    let mut conv = ExperimentConfig::new(ModelParams::new(3.0, -2.0, 1.0, 0.0, 0.0).unwrap(), vec![4.0, 5.0, 6.0], 100);
    conv.seed = 22;
    let jobs = [
        CliConfig::Roots(RootsJob { theta1: 1.0, theta2: -2.25 }),
        CliConfig::Simulate(SimulateJob {
            params,
            horizon: 5.0,
            n_steps: 500,
            scheme: Scheme::Exact,
            record_noise: true,
            seed: 23,
        }),
        CliConfig::Estimate(EstimateJob { input: dir.join("path.csv"), sigma: None }),
        CliConfig::LimitSample(LimitJob {
            params: ModelParams::new(0.0, -1.0, 1.0, 0.0, 0.0).unwrap(),
            n: 500,
            grid_n: 1000,
            phase: None,
            horizon: None,
            seed: 24,
        }),
        CliConfig::Experiment(exp),
        CliConfig::Convergence(conv),
    ];
    for job in &jobs {
        execute(job, dir, &mut stdout).unwrap();
    }
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    // Stdout carries wall times and directory names; keep only the roots JSON.
    let roots_json = stdout.split(|&b| b == b'\n').take_while(|l| !l.starts_with(b"simulated")).collect::<Vec<_>>().join(&b'\n');
    files.push(("roots stdout".into(), roots_json));
    files
}

fn reproducibility() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (fa, fb) = (run_suite(a.path()), run_suite(b.path()));
    let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    let same = fa == fb && fa.len() >= 9;
    (same, format!("{} artifacts compared: {}", fa.len(), names.join(", ")))
}

fn main() -> ExitCode {
    let checks: [(&str, fn() -> Outcome); 11] = [
        ("algebraic identities", identities),
        ("noiseless recovery", noiseless_recovery),
        ("simulator moments", simulator_moments),
        ("ergodic CLT", ergodic_clt),
        ("ergodic NLRR", ergodic_nlrr),
        ("neutrally stable root", neutral_root),
        ("Cauchy-type limit", cauchy_type),
        ("zero double root", zero_double),
        ("harmonic oscillator", harmonic),
        ("wrong-rate control", wrong_rate_control),
        ("reproducibility", reproducibility),
    ];
    let mut failures = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = check();
        failures += usize::from(!ok);
        println!(
            "{} [{:>2}] {name}: {detail} ({:.1}s)",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} acceptance checks passed", checks.len() - failures, checks.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
