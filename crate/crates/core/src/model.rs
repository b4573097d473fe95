//! Parameter algebra for the CAR(2) model
//!
//! ```text
//! dX = Ẋ dt,   dẊ = (θ2 X + θ1 Ẋ) dt + σ dW
//! ```
//!
//! Characteristic roots, the nine-way regime classification, the
//! fundamental system of solutions of `ẍ − θ1 ẋ − θ2 x = 0`, and the exact
//! one-step Gaussian transition of the state `(X, Ẋ)`.

use std::fmt;

use nalgebra::{Matrix2, Matrix3, SymmetricEigen, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Unknown drift coefficients, noise scale and initial state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Coefficient on Ẋ, units `[t]⁻¹`.
    pub theta1: f64,
    /// Coefficient on X, units `[t]⁻²`.
    pub theta2: f64,
    /// Noise scale, units `[t]⁻³ᐟ²`.
    pub sigma: f64,
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub dx0: f64,
}

impl ModelParams {
    pub fn new(theta1: f64, theta2: f64, sigma: f64, x0: f64, dx0: f64) -> Result<Self> {
        let p = Self { theta1, theta2, sigma, x0, dx0 };
        p.validate()?;
        Ok(p)
    }

    /// Zero initial state.
    pub fn from_drift(theta1: f64, theta2: f64, sigma: f64) -> Result<Self> {
        Self::new(theta1, theta2, sigma, 0.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.theta1, self.theta2, self.sigma, self.x0, self.dx0];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        if self.sigma < 0.0 {
            return Err(Error::InvalidParameter(format!("sigma = {} < 0", self.sigma)));
        }
        Ok(())
    }

    pub fn roots(&self) -> RootPair {
        char_roots(self.theta1, self.theta2)
    }

    pub fn default_tol(&self) -> f64 {
        default_tol(self.theta1, self.theta2)
    }

    pub fn regime(&self) -> Regime {
        classify(&self.roots(), self.default_tol())
    }

    pub fn initial_state(&self) -> Vector2<f64> {
        Vector2::new(self.x0, self.dx0)
    }
}

/// Roots of `r² − θ1 r − θ2 = 0`. `p` has the larger real part; a complex
/// pair is stored with `p.im > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootPair {
    pub p: Complex64,
    pub q: Complex64,
}

impl RootPair {
    pub fn real(p: f64, q: f64) -> Self {
        let (p, q) = if p >= q { (p, q) } else { (q, p) };
        Self { p: Complex64::new(p, 0.0), q: Complex64::new(q, 0.0) }
    }

    /// `λ ± iν`, `ν > 0`.
    pub fn complex(lambda: f64, nu: f64) -> Self {
        let nu = nu.abs();
        Self { p: Complex64::new(lambda, nu), q: Complex64::new(lambda, -nu) }
    }

    pub fn is_complex(&self) -> bool {
        self.p.im != 0.0
    }

    /// `p + q`
    pub fn theta1(&self) -> f64 {
        (self.p + self.q).re
    }

    /// `−p q`
    pub fn theta2(&self) -> f64 {
        -(self.p * self.q).re
    }
}

/// Stable quadratic solve: the larger-magnitude root comes from the usual
/// formula, the other from `p q = −θ2`.
pub fn char_roots(theta1: f64, theta2: f64) -> RootPair {
    let disc = theta1 * theta1 + 4.0 * theta2;
    if disc < 0.0 {
        return RootPair::complex(0.5 * theta1, 0.5 * (-disc).sqrt());
    }
    let s = disc.sqrt();
    let big = if theta1 >= 0.0 { 0.5 * (theta1 + s) } else { 0.5 * (theta1 - s) };
    let small = if big == 0.0 { 0.0 } else { -theta2 / big };
    RootPair::real(big, small)
}

/// Default classification tolerance `1e-9·(1 + |θ1| + |θ2|)`.
pub fn default_tol(theta1: f64, theta2: f64) -> f64 {
    1e-9 * (1.0 + theta1.abs() + theta2.abs())
}

/// The nine asymptotic regimes of the drift estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// Both roots in the open left half-plane.
    Ergodic,
    /// `q < 0 < p`
    OppositeSign,
    /// `0 < q < p`
    DistinctPositive,
    /// `p = q > 0`
    PositiveDouble,
    /// `q < 0 = p`
    LargerRootZero,
    /// `0 = q < p`
    SmallerRootZero,
    /// `p = q = 0`
    ZeroDouble,
    /// `p = iν`
    Harmonic,
    /// `p = λ + iν`, `λ > 0`
    UnstableOscillation,
}

impl Regime {
    pub const ALL: [Regime; 9] = [
        Regime::Ergodic,
        Regime::OppositeSign,
        Regime::DistinctPositive,
        Regime::PositiveDouble,
        Regime::LargerRootZero,
        Regime::SmallerRootZero,
        Regime::ZeroDouble,
        Regime::Harmonic,
        Regime::UnstableOscillation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Regime::Ergodic => "Ergodic",
            Regime::OppositeSign => "OppositeSign",
            Regime::DistinctPositive => "DistinctPositive",
            Regime::PositiveDouble => "PositiveDouble",
            Regime::LargerRootZero => "LargerRootZero",
            Regime::SmallerRootZero => "SmallerRootZero",
            Regime::ZeroDouble => "ZeroDouble",
            Regime::Harmonic => "Harmonic",
            Regime::UnstableOscillation => "UnstableOscillation",
        }
    }

    /// Representative drift `(θ1, θ2)` for the regime, used by examples and
    /// tests.
    pub fn reference_drift(self) -> (f64, f64) {
        match self {
            Regime::Ergodic => (-3.0, -2.0),
            Regime::OppositeSign => (1.0, 2.0),
            Regime::DistinctPositive => (3.0, -2.0),
            Regime::PositiveDouble => (2.0, -1.0),
            Regime::LargerRootZero => (-2.0, 0.0),
            Regime::SmallerRootZero => (1.0, 0.0),
            Regime::ZeroDouble => (0.0, 0.0),
            Regime::Harmonic => (0.0, -1.0),
            Regime::UnstableOscillation => (1.0, -2.25),
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Assigns the regime after snapping root components with `|v| ≤ tol` to
/// zero and merging roots with `|p − q| ≤ tol·(1 + |p| + |q|)`.
pub fn classify(roots: &RootPair, tol: f64) -> Regime {
    let snapped = snap(roots, tol);
    let (p, q) = (snapped.p, snapped.q);
    if snapped.is_complex() {
        return match p.re.partial_cmp(&0.0) {
            Some(std::cmp::Ordering::Less) => Regime::Ergodic,
            Some(std::cmp::Ordering::Equal) => Regime::Harmonic,
            _ => Regime::UnstableOscillation,
        };
    }
    let (p, q) = (p.re, q.re);
    if p < 0.0 {
        Regime::Ergodic
    } else if p == q {
        if p == 0.0 {
            Regime::ZeroDouble
        } else {
            Regime::PositiveDouble
        }
    } else if p == 0.0 {
        Regime::LargerRootZero
    } else if q < 0.0 {
        Regime::OppositeSign
    } else if q == 0.0 {
        Regime::SmallerRootZero
    } else {
        Regime::DistinctPositive
    }
}

/// Root pair after the tolerance snap used by [`classify`].
pub fn snap(roots: &RootPair, tol: f64) -> RootPair {
    let z = |v: f64| if v.abs() <= tol { 0.0 } else { v };
    let (p, q) = (roots.p, roots.q);
    if (p - q).norm() <= tol * (1.0 + p.norm() + q.norm()) {
        let r = z(0.5 * (p.re + q.re));
        return RootPair::real(r, r);
    }
    if roots.is_complex() {
        let nu = z(p.im);
        if nu == 0.0 {
            return RootPair::real(z(p.re), z(q.re));
        }
        return RootPair::complex(z(p.re), nu);
    }
    RootPair::real(z(p.re), z(q.re))
}

/// `x1, x2` and their derivatives at one time point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalValues {
    pub x1: f64,
    pub x2: f64,
    pub dx1: f64,
    pub dx2: f64,
}

impl FundamentalValues {
    pub fn wronskian(&self) -> f64 {
        self.x1 * self.dx2 - self.x2 * self.dx1
    }

    /// State propagator `[[x1, x2], [ẋ1, ẋ2]]`.
    pub fn matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.x1, self.x2, self.dx1, self.dx2)
    }
}

/// Roots closer than this (scaled by `max(t, 1)`) use the double-root form.
pub const DOUBLE_ROOT_SWITCH: f64 = 1e-6;

pub fn fundamental_solutions(roots: &RootPair, t: f64) -> FundamentalValues {
    if roots.is_complex() {
        return complex_form(roots.p.re, roots.p.im, t);
    }
    let (p, q) = (roots.p.re, roots.q.re);
    let gap = p - q;
    if gap * t.max(1.0) < DOUBLE_ROOT_SWITCH {
        double_root_form(0.5 * (p + q), t)
    } else if gap * t < 1.0 {
        hyperbolic_form(p, q, t)
    } else {
        distinct_root_form(p, q, t)
    }
}

pub(crate) fn distinct_root_form(p: f64, q: f64, t: f64) -> FundamentalValues {
    let (ep, eq) = ((p * t).exp(), (q * t).exp());
    let d = p - q;
    let x2 = (ep - eq) / d;
    FundamentalValues {
        x1: (p * eq - q * ep) / d,
        x2,
        dx1: -p * q * x2,
        dx2: (p * ep - q * eq) / d,
    }
}

pub(crate) fn double_root_form(r: f64, t: f64) -> FundamentalValues {
    let e = (r * t).exp();
    FundamentalValues {
        x1: (1.0 - r * t) * e,
        x2: t * e,
        dx1: -r * r * t * e,
        dx2: (1.0 + r * t) * e,
    }
}

// Same functions written around the midpoint m = (p+q)/2 with half-gap δ;
// avoids the cancellation in (e^{pt} − e^{qt})/(p − q) for small δt.
fn hyperbolic_form(p: f64, q: f64, t: f64) -> FundamentalValues {
    let m = 0.5 * (p + q);
    let delta = 0.5 * (p - q);
    let e = (m * t).exp();
    let s = (delta * t).sinh() / delta;
    let c = (delta * t).cosh();
    let x2 = e * s;
    FundamentalValues {
        x1: e * (c - m * s),
        x2,
        dx1: -p * q * x2,
        dx2: e * (m * s + c),
    }
}

fn complex_form(lambda: f64, nu: f64, t: f64) -> FundamentalValues {
    let e = (lambda * t).exp();
    let s = (nu * t).sin() / nu;
    let c = (nu * t).cos();
    let x2 = e * s;
    FundamentalValues {
        x1: e * (c - lambda * s),
        x2,
        dx1: -(lambda * lambda + nu * nu) * x2,
        dx2: e * (lambda * s + c),
    }
}

/// How the covariance integrals of a kernel were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KernelMethod {
    /// Term-by-term integration of the Taylor series of `x2`.
    Series,
    /// Exponential-polynomial antiderivatives for `p = q`.
    DoubleRoot,
    /// Divided differences of `∫₀ʰ e^{at} dt` over the roots.
    Exponential,
    /// Adaptive Gauss–Kronrod.
    Quadrature,
}

/// Exact Gaussian transition of `(X, Ẋ)` over one step of length `h`.
///
/// `cov` is the joint covariance of
/// `(ΔW, σ∫₀ʰ x2(h−s) dW(s), σ∫₀ʰ ẋ2(h−s) dW(s))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionKernel {
    pub h: f64,
    pub mean: Matrix2<f64>,
    pub cov: Matrix3<f64>,
    pub method: KernelMethod,
}

impl TransitionKernel {
    /// Covariance of the state noise (lower-right 2×2 block).
    pub fn state_cov(&self) -> Matrix2<f64> {
        self.cov.fixed_view::<2, 2>(1, 1).into_owned()
    }

    /// `F` with `F Fᵀ = cov`, from the symmetric eigendecomposition with
    /// eigenvalues below zero clipped.
    pub fn noise_factor(&self) -> Matrix3<f64> {
        let eig = SymmetricEigen::new(self.cov);
        let mut root = Matrix3::zeros();
        for i in 0..3 {
            root[(i, i)] = eig.eigenvalues[i].max(0.0).sqrt();
        }
        eig.eigenvectors * root
    }
}

/// Integrals of `x2`, `x2²` and `ẋ2²` over `[0, h]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct KernelIntegrals {
    pub int_x2: f64,
    pub int_x2_sq: f64,
    pub int_dx2_sq: f64,
}

// Closed forms are accepted when their estimated relative cancellation error
// stays below this.
const CLOSED_FORM_CANCELLATION: f64 = 1e-11;

pub fn transition(params: &ModelParams, h: f64) -> Result<TransitionKernel> {
    if !h.is_finite() || h <= 0.0 {
        return Err(Error::InvalidParameter(format!("step h = {h} must be positive and finite")));
    }
    params.validate()?;
    let roots = params.roots();
    let (ints, method) = kernel_integrals(&roots, h);
    Ok(assemble(&roots, params.sigma, h, ints, method))
}

/// Same kernel with the integrals forced through adaptive quadrature.
pub fn transition_by_quadrature(params: &ModelParams, h: f64) -> Result<TransitionKernel> {
    if !h.is_finite() || h <= 0.0 {
        return Err(Error::InvalidParameter(format!("step h = {h} must be positive and finite")));
    }
    params.validate()?;
    let roots = params.roots();
    let ints = quadrature_integrals(&roots, h);
    Ok(assemble(&roots, params.sigma, h, ints, KernelMethod::Quadrature))
}

fn assemble(roots: &RootPair, sigma: f64, h: f64, ints: KernelIntegrals, method: KernelMethod) -> TransitionKernel {
    let fv = fundamental_solutions(roots, h);
    let s2 = sigma * sigma;
    let cross = 0.5 * fv.x2 * fv.x2;
    let cov = Matrix3::new(
        h,
        sigma * ints.int_x2,
        sigma * fv.x2,
        sigma * ints.int_x2,
        s2 * ints.int_x2_sq,
        s2 * cross,
        sigma * fv.x2,
        s2 * cross,
        s2 * ints.int_dx2_sq,
    );
    TransitionKernel { h, mean: fv.matrix(), cov, method }
}

pub(crate) fn kernel_integrals(roots: &RootPair, h: f64) -> (KernelIntegrals, KernelMethod) {
    let rho = roots.p.norm().max(roots.q.norm());
    if rho * h <= 1.0 {
        return (series_integrals(roots, h), KernelMethod::Series);
    }
    let gap = (roots.p - roots.q).norm();
    if !roots.is_complex() && gap * h.max(1.0) < DOUBLE_ROOT_SWITCH {
        return (double_root_integrals(0.5 * (roots.p.re + roots.q.re), h), KernelMethod::DoubleRoot);
    }
    if let Some(ints) = exponential_integrals(roots, h) {
        return (ints, KernelMethod::Exponential);
    }
    (quadrature_integrals(roots, h), KernelMethod::Quadrature)
}

fn series_integrals(roots: &RootPair, h: f64) -> KernelIntegrals {
    const TERMS: usize = 48;
    let theta1 = roots.theta1();
    let theta2 = roots.theta2();
    // b[k] = a_k h^k for x2(t) = Σ a_k t^k
    let mut b = [0.0; TERMS];
    b[1] = h;
    for k in 0..TERMS - 2 {
        let kf = k as f64;
        b[k + 2] = (theta1 * (kf + 1.0) * b[k + 1] * h + theta2 * b[k] * h * h) / ((kf + 1.0) * (kf + 2.0));
    }
    // derivative coefficients scaled the same way: ẋ2 = Σ (k+1) a_{k+1} t^k
    let mut d = [0.0; TERMS];
    for k in 0..TERMS - 1 {
        d[k] = (k as f64 + 1.0) * b[k + 1] / h;
    }
    let int_x2 = h * (0..TERMS).map(|k| b[k] / (k as f64 + 1.0)).sum::<f64>();
    let mut int_x2_sq = 0.0;
    let mut int_dx2_sq = 0.0;
    for k in (0..TERMS).rev() {
        let mut cx = 0.0;
        let mut cd = 0.0;
        for i in 0..=k {
            cx += b[i] * b[k - i];
            cd += d[i] * d[k - i];
        }
        int_x2_sq += cx / (k as f64 + 1.0);
        int_dx2_sq += cd / (k as f64 + 1.0);
    }
    KernelIntegrals { int_x2, int_x2_sq: h * int_x2_sq, int_dx2_sq: h * int_dx2_sq }
}

/// `∫₀ʰ tᵏ e^{at} dt` for k = 0..=K-1.
fn exp_moments<const K: usize>(a: f64, h: f64) -> [f64; K] {
    let mut g = [0.0; K];
    if a == 0.0 {
        for (k, gk) in g.iter_mut().enumerate() {
            *gk = h.powi(k as i32 + 1) / (k as f64 + 1.0);
        }
        return g;
    }
    let eah = (a * h).exp();
    g[0] = (a * h).exp_m1() / a;
    for k in 1..K {
        g[k] = (h.powi(k as i32) * eah - k as f64 * g[k - 1]) / a;
    }
    g
}

fn double_root_integrals(r: f64, h: f64) -> KernelIntegrals {
    let g1 = exp_moments::<2>(r, h);
    let g2 = exp_moments::<3>(2.0 * r, h);
    KernelIntegrals {
        int_x2: g1[1],
        int_x2_sq: g2[2],
        int_dx2_sq: g2[0] + 2.0 * r * g2[1] + r * r * g2[2],
    }
}

// ∫₀ʰ e^{zt} dt with a cancellation-free e^{zh} − 1.
fn exp_integral(z: Complex64, h: f64) -> Complex64 {
    if z.norm() == 0.0 {
        return Complex64::new(h, 0.0);
    }
    let w = z * h;
    let em1 = Complex64::new(
        w.re.exp_m1() * w.im.cos() - 2.0 * (0.5 * w.im).sin().powi(2),
        w.re.exp() * w.im.sin(),
    );
    em1 / z
}

fn exponential_integrals(roots: &RootPair, h: f64) -> Option<KernelIntegrals> {
    let (p, q) = (roots.p, roots.q);
    let d = p - q;
    let f_p = exp_integral(p, h);
    let f_q = exp_integral(q, h);
    let f_2p = exp_integral(2.0 * p, h);
    let f_2q = exp_integral(2.0 * q, h);
    let f_pq = exp_integral(p + q, h);

    let int_x2 = (f_p - f_q) / d;
    let int_x2_sq = (f_2p - 2.0 * f_pq + f_2q) / (d * d);
    let int_dx2_sq = (p * p * f_2p - 2.0 * p * q * f_pq + q * q * f_2q) / (d * d);

    let eps = f64::EPSILON;
    let c1 = (f_p.norm() + f_q.norm()) / (d.norm() * int_x2.norm());
    let c2 = (f_2p.norm() + 2.0 * f_pq.norm() + f_2q.norm()) / (d.norm_sqr() * int_x2_sq.norm());
    let c3 = ((p * p * f_2p).norm() + 2.0 * (p * q * f_pq).norm() + (q * q * f_2q).norm())
        / (d.norm_sqr() * int_dx2_sq.norm());
    let worst = c1.max(c2).max(c3) * eps;
    if !(worst <= CLOSED_FORM_CANCELLATION) {
        return None;
    }
    Some(KernelIntegrals { int_x2: int_x2.re, int_x2_sq: int_x2_sq.re, int_dx2_sq: int_dx2_sq.re })
}

pub(crate) fn quadrature_integrals(roots: &RootPair, h: f64) -> KernelIntegrals {
    let roots = *roots;
    let [a, b, c] = quad::integrate_many::<3>(
        &|t, out: &mut [f64; 3]| {
            let fv = fundamental_solutions(&roots, t);
            out[0] = fv.x2;
            out[1] = fv.x2 * fv.x2;
            out[2] = fv.dx2 * fv.dx2;
        },
        0.0,
        h,
        1e-13,
    );
    KernelIntegrals { int_x2: a, int_x2_sq: b, int_dx2_sq: c }
}
