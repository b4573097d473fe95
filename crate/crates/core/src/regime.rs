//! Per-regime asymptotics: deterministic rates `v1(T), v2(T)` with their
//! limit families, random normalizations for the cases admitting a normal
//! limit, and the local scaling matrices `A_T` of the likelihood ratio.

use std::fmt;

use nalgebra::Matrix2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::SufficientStats;
use crate::model::{classify, default_tol, snap, Regime, RootPair};

/// A deterministic normalization `T ↦ v(T)`, evaluated in log space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Rate {
    /// `√(aT)`
    SqrtLinear(f64),
    /// `aT`
    Linear(f64),
    /// `T²`
    Square,
    /// `e^{aT}`
    Exp(f64),
    /// `e^{aT}/(aT)`
    ExpOverLinear(f64),
}

impl Rate {
    pub fn ln(&self, t: f64) -> f64 {
        match *self {
            Rate::SqrtLinear(a) => 0.5 * (a * t).ln(),
            Rate::Linear(a) => (a * t).ln(),
            Rate::Square => 2.0 * t.ln(),
            Rate::Exp(a) => a * t,
            Rate::ExpOverLinear(a) => a * t - (a * t).ln(),
        }
    }

    /// May overflow to infinity for explosive rates; use [`Rate::ln`] when
    /// the value only feeds a product.
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Rate::SqrtLinear(a) => (a * t).sqrt(),
            Rate::Linear(a) => a * t,
            Rate::Square => t * t,
            Rate::Exp(_) | Rate::ExpOverLinear(_) => self.ln(t).exp(),
        }
    }

    /// `v(T)·x` computed as `sign(x)·exp(ln v + ln|x|)`.
    pub fn apply(&self, t: f64, x: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        x.signum() * (self.ln(t) + x.abs().ln()).exp()
    }

    pub fn expr(&self) -> String {
        match *self {
            Rate::SqrtLinear(a) => format!("sqrt({a}*T)"),
            Rate::Linear(1.0) => "T".to_string(),
            Rate::Linear(a) => format!("{a}*T"),
            Rate::Square => "T^2".to_string(),
            Rate::Exp(a) => format!("exp({a}*T)"),
            Rate::ExpOverLinear(a) => format!("exp({a}*T)/({a}*T)"),
        }
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.expr())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LimitFamily {
    Normal,
    CauchyType,
    /// Functional of one Brownian motion.
    F1,
    /// Functional of two Brownian motions.
    F2,
    /// Several partial limits.
    Many,
}

impl LimitFamily {
    pub fn short(self) -> &'static str {
        match self {
            LimitFamily::Normal => "N",
            LimitFamily::CauchyType => "Ch",
            LimitFamily::F1 => "F1",
            LimitFamily::F2 => "F2",
            LimitFamily::Many => "Many",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NlrrAvailability {
    Yes,
    Theta1Only,
    No,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LlrLabel {
    #[serde(rename = "LAN")]
    Lan,
    #[serde(rename = "DLAMN")]
    Dlamn,
    #[serde(rename = "LABF/LAN")]
    LabfLan,
    #[serde(rename = "LABF")]
    Labf,
    #[serde(rename = "LAMN-family")]
    LamnFamily,
}

impl LlrLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            LlrLabel::Lan => "LAN",
            LlrLabel::Dlamn => "DLAMN",
            LlrLabel::LabfLan => "LABF/LAN",
            LlrLabel::Labf => "LABF",
            LlrLabel::LamnFamily => "LAMN-family",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateSpec {
    pub regime: Regime,
    pub v1: Rate,
    pub v2: Rate,
    pub ld1: LimitFamily,
    pub ld2: LimitFamily,
    pub nlrr: NlrrAvailability,
    pub llr_label: LlrLabel,
}

/// The fixed part of each row: limit families, NLRR column, LLR label.
pub fn table_row(regime: Regime) -> (LimitFamily, LimitFamily, NlrrAvailability, LlrLabel) {
    use LimitFamily::*;
    use NlrrAvailability::*;
    match regime {
        Regime::Ergodic => (Normal, Normal, Yes, LlrLabel::Lan),
        Regime::OppositeSign => (Normal, Normal, Yes, LlrLabel::Dlamn),
        Regime::DistinctPositive => (CauchyType, CauchyType, Yes, LlrLabel::Dlamn),
        Regime::PositiveDouble => (CauchyType, CauchyType, Yes, LlrLabel::Dlamn),
        Regime::LargerRootZero => (Normal, F1, Theta1Only, LlrLabel::LabfLan),
        Regime::SmallerRootZero => (F1, F1, No, LlrLabel::Dlamn),
        Regime::ZeroDouble => (F1, F1, No, LlrLabel::Labf),
        Regime::Harmonic => (F2, F2, No, LlrLabel::Labf),
        Regime::UnstableOscillation => (Many, Many, Yes, LlrLabel::LamnFamily),
    }
}

/// Roots after the classification snap, or an error when they do not fall
/// in `regime`.
pub fn checked_roots(regime: Regime, roots: &RootPair) -> Result<RootPair> {
    let t1 = roots.theta1();
    let t2 = roots.theta2();
    let tol = default_tol(t1, t2);
    if classify(roots, tol) != regime {
        return Err(Error::InconsistentRegime { regime, p: roots.p.to_string(), q: roots.q.to_string() });
    }
    Ok(snap(roots, tol))
}

pub fn rate_functions(regime: Regime, roots: &RootPair) -> Result<RateSpec> {
    let r = checked_roots(regime, roots)?;
    let (p, q) = (r.p.re, r.q.re);
    let (v1, v2) = match regime {
        Regime::Ergodic => {
            let a = (p + q).abs();
            (Rate::SqrtLinear(a), Rate::SqrtLinear(a))
        }
        Regime::OppositeSign => (Rate::SqrtLinear(q.abs()), Rate::SqrtLinear(q.abs())),
        Regime::DistinctPositive => (Rate::Exp(q), Rate::Exp(q)),
        Regime::PositiveDouble => (Rate::ExpOverLinear(q), Rate::ExpOverLinear(q)),
        Regime::LargerRootZero => (Rate::SqrtLinear(q.abs()), Rate::Linear(1.0)),
        Regime::SmallerRootZero => (Rate::Linear(p), Rate::Linear(1.0)),
        Regime::ZeroDouble => (Rate::Linear(1.0), Rate::Square),
        Regime::Harmonic => (Rate::Linear(1.0), Rate::Linear(1.0)),
        Regime::UnstableOscillation => (Rate::Exp(p), Rate::Exp(p)),
    };
    let (ld1, ld2, nlrr, llr_label) = table_row(regime);
    Ok(RateSpec { regime, v1, v2, ld1, ld2, nlrr, llr_label })
}

/// A path-dependent normalization and the normal limit it produces.
/// Residuals are `(θ̂1 − θ1, θ̂2 − θ2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum NlrrRate {
    /// `r1(θ̂1 − θ1) → sd1·η1`, `r2(θ̂2 − θ2) → sd2·η2`.
    Separate { r1: f64, r2: f64, sd1: f64, sd2: f64 },
    /// `r(θ̂1 − θ1) → sd·η` and `r(θ̂2 − θ2) → coupling·sd·η`.
    Coupled { r: f64, sd: f64, coupling: f64 },
    /// Only `θ̂1` has a normal limit.
    FirstOnly { r1: f64, sd1: f64 },
    /// `B(u_s, u_c)·A_T·Ψ_T·(θ̂ − θ)` in the `(θ2, θ1)` ordering; the
    /// rotation needs draws from the limit-law sampler.
    Matrix { a_t: [[f64; 2]; 2] },
}

impl NlrrRate {
    /// Rate for each coordinate; `None` where no scalar rate applies.
    pub fn rates(&self) -> (Option<f64>, Option<f64>) {
        match *self {
            NlrrRate::Separate { r1, r2, .. } => (Some(r1), Some(r2)),
            NlrrRate::Coupled { r, .. } => (Some(r), Some(r)),
            NlrrRate::FirstOnly { r1, .. } => (Some(r1), None),
            NlrrRate::Matrix { .. } => (None, None),
        }
    }

    /// Standard deviations of the normal limits.
    pub fn limit_sd(&self) -> (Option<f64>, Option<f64>) {
        match *self {
            NlrrRate::Separate { sd1, sd2, .. } => (Some(sd1), Some(sd2)),
            NlrrRate::Coupled { sd, coupling, .. } => (Some(sd), Some(sd * coupling.abs())),
            NlrrRate::FirstOnly { sd1, .. } => (Some(sd1), None),
            NlrrRate::Matrix { .. } => (None, None),
        }
    }

    /// False when a scalar rate vanished (degenerate path).
    pub fn usable(&self) -> bool {
        let (a, b) = self.rates();
        [a, b].iter().flatten().all(|r| r.is_finite() && *r > 0.0)
    }
}

pub fn nlrr_rate(regime: Regime, roots: &RootPair, stats: &SufficientStats) -> Result<NlrrRate> {
    let r = checked_roots(regime, roots)?;
    let p = r.p.re;
    let t = stats.horizon;
    let (sd1, sd2) = nlrr_limit_sd(regime, &r, stats.sigma_used)?;
    Ok(match regime {
        Regime::Ergodic => NlrrRate::Separate { r1: stats.svv.sqrt(), r2: stats.sxx.sqrt(), sd1, sd2: sd2.unwrap_or(sd1) },
        Regime::DistinctPositive | Regime::OppositeSign => {
            NlrrRate::Coupled { r: stats.residual_energy(p).sqrt(), sd: sd1, coupling: -p }
        }
        Regime::PositiveDouble => NlrrRate::Coupled { r: stats.sxx.sqrt() / (t * t), sd: sd1, coupling: -p },
        Regime::LargerRootZero => NlrrRate::FirstOnly { r1: stats.svv.sqrt(), sd1 },
        Regime::UnstableOscillation => {
            let a = scaling_matrix(regime, &r, t)?;
            NlrrRate::Matrix { a_t: [[a[(0, 0)], a[(0, 1)]], [a[(1, 0)], a[(1, 1)]]] }
        }
        Regime::Harmonic | Regime::ZeroDouble | Regime::SmallerRootZero => return Err(Error::NoNlrr(regime)),
    })
}

/// Standard deviations of the normal limits under [`nlrr_rate`]; they
/// depend only on σ and the roots. `NaN` for the matrix form.
pub fn nlrr_limit_sd(regime: Regime, roots: &RootPair, sigma: f64) -> Result<(f64, Option<f64>)> {
    let r = checked_roots(regime, roots)?;
    let (p, q) = (r.p.re, r.q.re);
    Ok(match regime {
        Regime::Ergodic => (sigma, Some(sigma)),
        Regime::DistinctPositive => {
            let sd = (p + q) / (p - q) * sigma;
            (sd, Some(sd * p))
        }
        Regime::OppositeSign => (sigma, Some(sigma * p)),
        Regime::PositiveDouble => {
            let sd = 2.0 * p * sigma;
            (sd, Some(sd * p))
        }
        Regime::LargerRootZero => (sigma, None),
        Regime::UnstableOscillation => (f64::NAN, None),
        Regime::Harmonic | Regime::ZeroDouble | Regime::SmallerRootZero => return Err(Error::NoNlrr(regime)),
    })
}

/// `B(x, y) = (x² + y²)⁻¹·[[x, y], [−y, x]]`.
pub fn rotation_template(x: f64, y: f64) -> Matrix2<f64> {
    let n = x * x + y * y;
    Matrix2::new(x, y, -y, x) / n
}

/// `A_T` for `ℓ_T(u) = L_T(θ + A_T u)` with θ in the `(θ2, θ1)` ordering.
pub fn scaling_matrix(regime: Regime, roots: &RootPair, t: f64) -> Result<Matrix2<f64>> {
    if !t.is_finite() || t <= 0.0 {
        return Err(Error::InvalidParameter(format!("T = {t} must be positive")));
    }
    let r = checked_roots(regime, roots)?;
    let p = r.p.re;
    let bb = |p: f64| Matrix2::new(1.0, p, p, p * p);
    Ok(match regime {
        Regime::Ergodic => Matrix2::from_diagonal_element(t.powf(-0.5)),
        Regime::OppositeSign | Regime::DistinctPositive | Regime::SmallerRootZero => bb(p) * (-p * t).exp(),
        Regime::LargerRootZero => Matrix2::new(1.0 / t, 0.0, 0.0, t.powf(-0.5)),
        Regime::PositiveDouble => bb(p) * ((-p * t).exp() / t),
        Regime::ZeroDouble => Matrix2::new(t.powi(-2), 0.0, 0.0, 1.0 / t),
        Regime::Harmonic => Matrix2::from_diagonal_element(1.0 / t),
        Regime::UnstableOscillation => Matrix2::new(r.p.im, 0.0, p, -1.0) * (-p * t).exp(),
    })
}

/// Everything the `roots` command reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeInfo {
    pub p: [f64; 2],
    pub q: [f64; 2],
    pub regime: Regime,
    pub v1_expr: String,
    pub v2_expr: String,
    pub ld1: &'static str,
    pub ld2: &'static str,
    pub nlrr: NlrrAvailability,
    pub llr_label: &'static str,
}

pub fn regime_info(theta1: f64, theta2: f64) -> Result<RegimeInfo> {
    if !theta1.is_finite() || !theta2.is_finite() {
        return Err(Error::NonFinite("theta"));
    }
    let roots = crate::model::char_roots(theta1, theta2);
    let regime = classify(&roots, default_tol(theta1, theta2));
    let spec = rate_functions(regime, &roots)?;
    Ok(RegimeInfo {
        p: [roots.p.re, roots.p.im],
        q: [roots.q.re, roots.q.im],
        regime,
        v1_expr: spec.v1.expr(),
        v2_expr: spec.v2.expr(),
        ld1: spec.ld1.short(),
        ld2: spec.ld2.short(),
        nlrr: spec.nlrr,
        llr_label: spec.llr_label.as_str(),
    })
}
