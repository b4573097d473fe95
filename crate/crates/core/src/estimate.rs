//! Maximum likelihood estimation of `(θ1, θ2)` from an observed path.
//!
//! The normal equations are solved in the basis `(X, U)` with
//! `U = Ẋ − cX`, where `c` is the least-squares coefficient of Ẋ on X. In
//! explosive regimes X and Ẋ become almost collinear and
//! `SXX·SVV − SXV²` is a difference of two numbers agreeing to 15 or more
//! digits; in the `(X, U)` basis the same determinant is a sum of
//! well-scaled products. The textbook statistics are still reported, as the
//! exact images of the basis quantities.

use nalgebra::{Matrix2, Vector2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::simulate::SamplePath;

/// Default relative singularity threshold for `D`.
pub const SINGULAR_TOL: f64 = 1e-24;

/// How the path integrals were discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StatsRule {
    /// `dt`-integrals by the trapezoid rule with fourth-order end
    /// corrections; stochastic integrals from the endpoint identities with
    /// the quadratic variation `σ²T`.
    EndCorrected,
    /// Left-point sums throughout, with caller-supplied increments of Ẋ.
    ItoSums,
}

/// Path functionals in the `(X, U = Ẋ − cX)` basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Basis {
    pub pivot: f64,
    pub sxu: f64,
    pub suu: f64,
    /// `∫X dẊ`
    pub bx: f64,
    /// `∫U dẊ`
    pub bu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SufficientStats {
    pub sxx: f64,
    pub svv: f64,
    pub sxv: f64,
    pub ixdv: f64,
    pub ivdv: f64,
    pub horizon: f64,
    pub n_steps: usize,
    pub x0: f64,
    pub v0: f64,
    pub x_t: f64,
    pub v_t: f64,
    pub sigma_used: f64,
    pub rule: StatsRule,
    pub basis: Basis,
}

impl SufficientStats {
    /// End-corrected statistics of a path, using `path.sigma` in `∫Ẋ dẊ`.
    pub fn from_path(path: &SamplePath) -> Result<Self> {
        Self::with_sigma(path, path.sigma)
    }

    pub fn with_sigma(path: &SamplePath, sigma: f64) -> Result<Self> {
        check_path(path)?;
        let n = path.n_steps();
        let h = path.step();
        let big_t = path.horizon();
        let (x, v) = (&path.x, &path.v);
        let trap = |f: &dyn Fn(usize) -> f64| -> f64 { h * (0..=n).map(|i| dt_weight(i, n) * f(i)).sum::<f64>() };
        let sxx = trap(&|i| x[i] * x[i]);
        let c = refine_pivot(sxx, |c| trap(&|i| x[i] * (v[i] - c * x[i])));
        let u = |i: usize| v[i] - c * x[i];
        let sxu = trap(&|i| x[i] * u(i));
        let suu = trap(&|i| u(i) * u(i));
        let (u0, ut) = (u(0), u(n));
        let bu = 0.5 * (ut * ut - u0 * u0 - sigma * sigma * big_t) + c * (suu + c * sxu);
        let bx = x[n] * ut - x[0] * u0 - suu + c * c * sxx;
        let basis = Basis { pivot: c, sxu, suu, bx, bu };
        Ok(Self::assemble(path, sxx, basis, sigma, StatsRule::EndCorrected))
    }

    /// Left-point sums with the observed increments `Ẋ(t_{i+1}) − Ẋ(t_i)`.
    pub fn ito_sums(path: &SamplePath) -> Result<Self> {
        let dv: Vec<f64> = path.v.windows(2).map(|w| w[1] - w[0]).collect();
        Self::ito_sums_with(path, &dv)
    }

    /// Left-point sums with caller-supplied increments of Ẋ.
    pub fn ito_sums_with(path: &SamplePath, dv: &[f64]) -> Result<Self> {
        check_path(path)?;
        let n = path.n_steps();
        if dv.len() != n {
            return Err(Error::InvalidParameter(format!("{} increments for {n} steps", dv.len())));
        }
        let h = path.step();
        let (x, v) = (&path.x, &path.v);
        let sum = |f: &dyn Fn(usize) -> f64| -> f64 { (0..n).map(f).sum::<f64>() };
        let sxx = h * sum(&|i| x[i] * x[i]);
        let c = refine_pivot(sxx, |c| h * sum(&|i| x[i] * (v[i] - c * x[i])));
        let u = |i: usize| v[i] - c * x[i];
        let basis = Basis {
            pivot: c,
            sxu: h * sum(&|i| x[i] * u(i)),
            suu: h * sum(&|i| u(i) * u(i)),
            bx: sum(&|i| x[i] * dv[i]),
            bu: sum(&|i| u(i) * dv[i]),
        };
        Ok(Self::assemble(path, sxx, basis, path.sigma, StatsRule::ItoSums))
    }

    fn assemble(path: &SamplePath, sxx: f64, b: Basis, sigma: f64, rule: StatsRule) -> Self {
        let n = path.n_steps();
        let c = b.pivot;
        Self {
            sxx,
            svv: b.suu + 2.0 * c * b.sxu + c * c * sxx,
            sxv: c * sxx + b.sxu,
            ixdv: b.bx,
            ivdv: b.bu + c * b.bx,
            horizon: path.horizon(),
            n_steps: n,
            x0: path.x[0],
            v0: path.v[0],
            x_t: path.x[n],
            v_t: path.v[n],
            sigma_used: sigma,
            rule,
            basis: b,
        }
    }

    /// `(X²(T) − X²(0))/2`, the continuous-time value of `∫XẊ dt`.
    pub fn sxv_endpoint(&self) -> f64 {
        0.5 * (self.x_t * self.x_t - self.x0 * self.x0)
    }

    /// `Ψ_T` in the `(θ2, θ1)` ordering.
    pub fn psi(&self) -> Matrix2<f64> {
        Matrix2::new(self.sxx, self.sxv, self.sxv, self.svv)
    }

    /// `D = SXX·SVV − SXV²`, evaluated in the stable basis.
    pub fn det(&self) -> f64 {
        self.sxx * self.basis.suu - self.basis.sxu * self.basis.sxu
    }

    /// `∫(Ẋ − aX)² dt`.
    pub fn residual_energy(&self, a: f64) -> f64 {
        let d = self.basis.pivot - a;
        (self.basis.suu + 2.0 * d * self.basis.sxu + d * d * self.sxx).max(0.0)
    }
}

const END_WEIGHTS: [f64; 4] = [17.0 / 48.0, 59.0 / 48.0, 43.0 / 48.0, 49.0 / 48.0];

/// Quadrature weight of sample `i` of `0..=n`, in units of `h`. Interior
/// weights are 1 as in the trapezoid rule; the four points at each end are
/// reweighted so smooth integrands are integrated to `O(h⁴)`. In explosive
/// regimes the trapezoid's `O(h²)` error on the dominant mode otherwise
/// swamps the estimation error.
pub(crate) fn dt_weight(i: usize, n: usize) -> f64 {
    if n < 8 {
        return if i == 0 || i == n { 0.5 } else { 1.0 };
    }
    let from_end = i.min(n - i);
    if from_end < 4 {
        END_WEIGHTS[from_end]
    } else {
        1.0
    }
}

// c = ∫XẊ/∫X², followed by one more projection to clean up rounding.
fn refine_pivot(sxx: f64, cross_after: impl Fn(f64) -> f64) -> f64 {
    if !(sxx > 0.0) {
        return 0.0;
    }
    let c0 = cross_after(0.0) / sxx;
    c0 + cross_after(c0) / sxx
}

fn check_path(path: &SamplePath) -> Result<()> {
    if path.n_steps() < 2 {
        return Err(Error::InvalidParameter(format!("path has {} steps, need at least 2", path.n_steps())));
    }
    if path.x.iter().chain(&path.v).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("path samples"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub theta1_hat: f64,
    pub theta2_hat: f64,
    pub det_d: f64,
    /// `Ψ_T` rows in the `(θ2, θ1)` ordering.
    pub psi: [[f64; 2]; 2],
    /// `D / (SXX·SVV)`; near zero means X and Ẋ are nearly collinear.
    pub cond_flag: f64,
}

pub fn mle(stats: &SufficientStats) -> Result<Estimate> {
    mle_with_tol(stats, SINGULAR_TOL)
}

pub fn mle_with_tol(stats: &SufficientStats, tol_singular: f64) -> Result<Estimate> {
    let b = &stats.basis;
    let d = stats.det();
    let scale = stats.sxx * stats.svv;
    let threshold = tol_singular * scale.max(stats.horizon * stats.horizon * f64::EPSILON);
    if !d.is_finite() || !scale.is_finite() {
        return Err(Error::NonFinite("sufficient statistics"));
    }
    if !(d > threshold) {
        return Err(Error::SingularDesign { det: d, threshold });
    }
    let theta1_hat = (stats.sxx * b.bu - b.sxu * b.bx) / d;
    let beta_x = (b.suu * b.bx - b.sxu * b.bu) / d;
    Ok(Estimate {
        theta1_hat,
        theta2_hat: beta_x - b.pivot * theta1_hat,
        det_d: d,
        psi: [[stats.sxx, stats.sxv], [stats.sxv, stats.svv]],
        cond_flag: d / scale,
    })
}

/// `σ̂ = √(Σ(ΔẊ)²/T)`.
pub fn estimate_sigma(path: &SamplePath) -> Result<f64> {
    check_path(path)?;
    let qv: f64 = path.v.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    Ok((qv / path.horizon()).sqrt())
}

/// Log-likelihood ratio `L_T(ϑ)` of the law with drift `theta_alt` against
/// `theta_ref`; both in the `(θ2, θ1)` ordering.
pub fn log_likelihood_ratio(stats: &SufficientStats, theta_ref: Vector2<f64>, theta_alt: Vector2<f64>) -> Result<f64> {
    let s2 = stats.sigma_used * stats.sigma_used;
    if s2 == 0.0 {
        return Err(Error::ZeroSigma);
    }
    let b = &stats.basis;
    // (θ2, θ1)·(X, Ẋ) = (θ2 + cθ1)·X + θ1·U
    let linear = |t: Vector2<f64>| (t[0] + b.pivot * t[1]) * b.bx + t[1] * b.bu;
    let quad = |t: Vector2<f64>| {
        let beta = t[0] + b.pivot * t[1];
        beta * beta * stats.sxx + 2.0 * beta * t[1] * b.sxu + t[1] * t[1] * b.suu
    };
    let diff = theta_alt - theta_ref;
    Ok(linear(diff) / s2 - (quad(theta_alt) - quad(theta_ref)) / (2.0 * s2))
}

/// `ℓ_T(u) = L_T(θ + A_T u)`.
pub fn normalized_llr(stats: &SufficientStats, theta: Vector2<f64>, a_t: &Matrix2<f64>, u: Vector2<f64>) -> Result<f64> {
    log_likelihood_ratio(stats, theta, theta + a_t * u)
}

/// `D(T; f, g)` with left-point `dt` sums.
pub fn det_functional(f: &[f64], g: &[f64], h: f64) -> f64 {
    let (ff, gg, fg) = gram(f, g, h);
    ff * gg - fg * fg
}

/// `N(T; f, g)` with `noise[i] = σ·ΔW_i` and left-point sums.
pub fn num_functional(f: &[f64], g: &[f64], noise: &[f64], h: f64) -> f64 {
    let (ff, _, fg) = gram(f, g, h);
    let gw: f64 = g.iter().zip(noise).map(|(a, b)| a * b).sum();
    let fw: f64 = f.iter().zip(noise).map(|(a, b)| a * b).sum();
    ff * gw - fg * fw
}

fn gram(f: &[f64], g: &[f64], h: f64) -> (f64, f64, f64) {
    let n = f.len().min(g.len());
    let (mut ff, mut gg, mut fg) = (0.0, 0.0, 0.0);
    for i in 0..n {
        ff += f[i] * f[i];
        gg += g[i] * g[i];
        fg += f[i] * g[i];
    }
    (h * ff, h * gg, h * fg)
}

/// Increments of Ẋ rebuilt from the drift `theta = (θ2, θ1)` and the
/// recorded noise.
pub fn reconstructed_increments(path: &SamplePath, theta: Vector2<f64>) -> Result<Vec<f64>> {
    let dw = path.dw.as_ref().ok_or(Error::MissingNoise)?;
    let h = path.step();
    Ok((0..path.n_steps())
        .map(|i| (theta[0] * path.x[i] + theta[1] * path.v[i]) * h + path.sigma * dw[i])
        .collect())
}

/// `(N(T;X,Ẋ)/D, N(T;Ẋ,X)/D)` from the recorded noise. Equals the MLE
/// residual `(θ̂1 − θ1, θ̂2 − θ2)` of [`SufficientStats::ito_sums_with`] on
/// the increments from [`reconstructed_increments`].
///
/// Evaluated with `U = Ẋ − cX` in place of Ẋ, where bilinearity gives
/// `D(X,Ẋ) = D(X,U)`, `N(X,Ẋ) = N(X,U)` and `N(Ẋ,X) = N(U,X) − c·N(X,U)`;
/// the raw products cancel badly on explosive paths.
pub fn residual_oracle(path: &SamplePath) -> Result<Vector2<f64>> {
    let dw = path.dw.as_ref().ok_or(Error::MissingNoise)?;
    let n = path.n_steps();
    let h = path.step();
    let (x, v) = (&path.x[..n], &path.v[..n]);
    let noise: Vec<f64> = dw.iter().map(|w| path.sigma * w).collect();
    let sxx = h * x.iter().map(|a| a * a).sum::<f64>();
    let c = refine_pivot(sxx, |c| h * x.iter().zip(v).map(|(a, b)| a * (b - c * a)).sum::<f64>());
    let u: Vec<f64> = x.iter().zip(v).map(|(a, b)| b - c * a).collect();
    let d = det_functional(x, &u, h);
    let (ff, gg, _) = gram(x, v, h);
    let threshold = SINGULAR_TOL * (ff * gg).max(path.horizon().powi(2) * f64::EPSILON);
    if !(d > threshold) {
        return Err(Error::SingularDesign { det: d, threshold });
    }
    let n_xu = num_functional(x, &u, &noise, h);
    let n_ux = num_functional(&u, x, &noise, h);
    Ok(Vector2::new(n_xu / d, (n_ux - c * n_xu) / d))
}
