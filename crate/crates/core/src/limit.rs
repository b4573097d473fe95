//! Samplers for the limit laws of the normalized estimation errors.
//!
//! Each draw is the pair `(l1, l2)`: the limit of `v1(T)(θ̂1 − θ1)` and of
//! `v2(T)(θ̂2 − θ2)` with the rates from [`crate::regime::rate_functions`].
//! Brownian functionals are simulated on a uniform grid over `[0, 1]`.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, Regime, RootPair};
use crate::regime::checked_roots;
use crate::rng;

/// Smallest Brownian grid accepted for functional limits.
pub const MIN_GRID: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitSample {
    pub l1: f64,
    pub l2: f64,
    pub regime: Regime,
    /// Brownian grid used; 0 for closed-form draws.
    pub grid_n: usize,
}

/// Functionals of a second, independent Brownian motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairFunctionals {
    pub w2_end: f64,
    /// `∫w1 dw2 − ∫w2 dw1`
    pub levy: f64,
    /// `∫w1 dw1 + ∫w2 dw2`
    pub q11: f64,
    /// `∫(w1² + w2²) dt`
    pub s2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrownianFunctionals {
    pub w_end: f64,
    /// `∫w`
    pub z1: f64,
    /// `∫w²`
    pub z2: f64,
    /// `∫(∫₀ᵗ w)² dt`
    pub z3: f64,
    /// `∫w dw` as a left-point sum.
    pub ito_w_dw: f64,
    pub pair: Option<PairFunctionals>,
}

/// One draw of the functionals, with its own stream.
pub fn brownian_functionals(grid_n: usize, seed: u64, index: u64, two_bm: bool) -> Result<BrownianFunctionals> {
    if grid_n < 2 {
        return Err(Error::GridTooSmall { grid_n, min: 2 });
    }
    let mut rng = rng::stream(seed, rng::DOMAIN_LIMIT, index);
    Ok(functionals_from(&mut rng, grid_n, two_bm))
}

fn functionals_from(rng: &mut ChaCha8Rng, n: usize, two_bm: bool) -> BrownianFunctionals {
    let h = 1.0 / n as f64;
    let sh = h.sqrt();
    let (mut w, mut w2) = (0.0f64, 0.0f64);
    // trapezoid accumulators; `cum` is ∫₀ᵗ w
    let (mut z1, mut z2, mut z3, mut cum) = (0.0, 0.0, 0.0, 0.0);
    let (mut ito, mut levy, mut ito2, mut s2b) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..n {
        let d1 = sh * rng.sample::<f64, _>(StandardNormal);
        let next = w + d1;
        ito += w * d1;
        z1 += 0.5 * h * (w + next);
        z2 += 0.5 * h * (w * w + next * next);
        let next_cum = cum + 0.5 * h * (w + next);
        z3 += 0.5 * h * (cum * cum + next_cum * next_cum);
        cum = next_cum;
        if two_bm {
            let d2 = sh * rng.sample::<f64, _>(StandardNormal);
            let next2 = w2 + d2;
            levy += w * d2 - w2 * d1;
            ito2 += w2 * d2;
            s2b += 0.5 * h * (w2 * w2 + next2 * next2);
            w2 = next2;
        }
        w = next;
    }
    BrownianFunctionals {
        w_end: w,
        z1,
        z2,
        z3,
        ito_w_dw: ito,
        pair: two_bm.then_some(PairFunctionals { w2_end: w2, levy, q11: ito + ito2, s2: z2 + s2b }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitConfig {
    pub n: usize,
    #[serde(default = "default_grid")]
    pub grid_n: usize,
    #[serde(default)]
    pub seed: u64,
    /// `2νT mod 2π`, used only for complex roots with positive real part.
    #[serde(default)]
    pub phase: f64,
}

fn default_grid() -> usize {
    10_000
}

impl LimitConfig {
    pub fn new(n: usize, grid_n: usize, seed: u64) -> Self {
        Self { n, grid_n, seed, phase: 0.0 }
    }
}

/// Phase `2νT mod 2π` of the oscillating limit at horizon T.
pub fn phase_at(roots: &RootPair, horizon: f64) -> f64 {
    (2.0 * roots.p.im * horizon).rem_euclid(2.0 * PI)
}

pub fn uses_functionals(regime: Regime) -> bool {
    matches!(regime, Regime::LargerRootZero | Regime::SmallerRootZero | Regime::ZeroDouble | Regime::Harmonic)
}

pub fn sample_limit(regime: Regime, roots: &RootPair, params: &ModelParams, cfg: &LimitConfig) -> Result<Vec<LimitSample>> {
    let draw = LimitDraw::new(regime, roots, params, cfg)?;
    Ok((0..cfg.n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(cfg.seed, rng::DOMAIN_LIMIT, i);
            draw.sample(&mut rng)
        })
        .collect())
}

/// A validated sampler; `sample` is the per-draw kernel.
#[derive(Debug, Clone, Copy)]
pub struct LimitDraw {
    regime: Regime,
    p: f64,
    q: f64,
    nu: f64,
    params: ModelParams,
    grid_n: usize,
    phase: f64,
}

impl LimitDraw {
    pub fn new(regime: Regime, roots: &RootPair, params: &ModelParams, cfg: &LimitConfig) -> Result<Self> {
        params.validate()?;
        let r = checked_roots(regime, roots)?;
        if uses_functionals(regime) && cfg.grid_n < MIN_GRID {
            return Err(Error::GridTooSmall { grid_n: cfg.grid_n, min: MIN_GRID });
        }
        let needs_sigma = matches!(regime, Regime::DistinctPositive | Regime::PositiveDouble | Regime::UnstableOscillation);
        if needs_sigma && params.sigma == 0.0 {
            return Err(Error::ZeroSigma);
        }
        if !cfg.phase.is_finite() {
            return Err(Error::NonFinite("phase"));
        }
        Ok(Self {
            regime,
            p: r.p.re,
            q: r.q.re,
            nu: r.p.im,
            params: *params,
            grid_n: if uses_functionals(regime) { cfg.grid_n } else { 0 },
            phase: cfg.phase,
        })
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> LimitSample {
        let (l1, l2) = self.pair(rng);
        LimitSample { l1, l2, regime: self.regime, grid_n: self.grid_n }
    }

    fn pair(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let mut normal = || rng.sample::<f64, _>(StandardNormal);
        let (p, q) = (self.p, self.q);
        let prm = &self.params;
        match self.regime {
            Regime::Ergodic => {
                let t1 = prm.theta1.abs();
                let (e1, e2) = (normal(), normal());
                (SQRT_2 * t1 * e1, (2.0 * prm.theta2.abs()).sqrt() * t1 * e2)
            }
            Regime::OppositeSign => {
                let l1 = SQRT_2 * q.abs() * normal();
                (l1, -p * l1)
            }
            Regime::DistinctPositive => {
                let c = (2.0 * q).sqrt() * (prm.dx0 - p * prm.x0) / prm.sigma;
                let (eta, xi) = (normal(), normal());
                let l1 = 2.0 * (p + q) * q / (p - q) * eta / (xi + c);
                (l1, -p * l1)
            }
            Regime::PositiveDouble => {
                let c = (2.0 * q).sqrt() * (prm.dx0 - p * prm.x0) / prm.sigma;
                let (eta, xi) = (normal(), normal());
                let l1 = 4.0 * q * eta / (xi + c);
                (l1, -q * l1)
            }
            Regime::LargerRootZero => {
                let a = q.abs();
                let l1 = SQRT_2 * a * normal();
                let f = functionals_from(rng, self.grid_n, false);
                (l1, a * unit_root_ratio(&f))
            }
            Regime::SmallerRootZero => {
                let f = functionals_from(rng, self.grid_n, false);
                let l1 = p * unit_root_ratio(&f);
                (l1, -l1)
            }
            Regime::ZeroDouble => {
                let f = functionals_from(rng, self.grid_n, false);
                zero_double(&f)
            }
            Regime::Harmonic => {
                let f = functionals_from(rng, self.grid_n, true);
                harmonic(&f, self.nu)
            }
            Regime::UnstableOscillation => self.unstable(rng),
        }
    }

    // e^{λT}(θ̂ − θ) ≈ σ K^{-T} M⁻¹ g in the (θ2, θ1) ordering, with
    // X ≈ u_c V_s − u_s V_c and (Ẋ − λX)/ν ≈ u_s V_s + u_c V_c.
    fn unstable(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let (lambda, nu) = (self.p, self.nu);
        let prm = &self.params;
        let rho2 = lambda * lambda + nu * nu;
        let rho = rho2.sqrt();
        let s = prm.sigma / nu;
        let u_cov = Matrix2::new(
            1.0 / (4.0 * lambda) + lambda / (4.0 * rho2),
            nu / (4.0 * rho2),
            nu / (4.0 * rho2),
            1.0 / (4.0 * lambda) - lambda / (4.0 * rho2),
        ) * (s * s);
        let u_mean = Vector2::new((prm.dx0 - prm.x0 * lambda) / nu, -prm.x0);
        let u = u_mean + gaussian2(rng, &u_cov);
        let arg = self.phase - nu.atan2(lambda);
        let cc = 1.0 / (4.0 * lambda) + arg.cos() / (4.0 * rho);
        let ss = 1.0 / (4.0 * lambda) - arg.cos() / (4.0 * rho);
        let sc = arg.sin() / (4.0 * rho);
        let hv = gaussian2(rng, &Matrix2::new(cc, sc, sc, ss));
        let (uc, us) = (u[0], u[1]);
        let (hc, hs) = (hv[0], hv[1]);
        let m = Matrix2::new(
            uc * uc * ss - 2.0 * uc * us * sc + us * us * cc,
            uc * us * (ss - cc) + (uc * uc - us * us) * sc,
            uc * us * (ss - cc) + (uc * uc - us * us) * sc,
            us * us * ss + 2.0 * us * uc * sc + uc * uc * cc,
        );
        let g = Vector2::new(uc * hs - us * hc, us * hs + uc * hc);
        let k = Matrix2::new(1.0, 0.0, lambda, nu);
        let z = m.lu().solve(&g).unwrap_or_else(|| Vector2::repeat(f64::NAN));
        let e = k.transpose().lu().solve(&z).unwrap_or_else(|| Vector2::repeat(f64::NAN)) * prm.sigma;
        (e[1], e[0])
    }
}

fn gaussian2(rng: &mut ChaCha8Rng, cov: &Matrix2<f64>) -> Vector2<f64> {
    let a = cov[(0, 0)].max(0.0).sqrt();
    let b = if a > 0.0 { cov[(0, 1)] / a } else { 0.0 };
    let c = (cov[(1, 1)] - b * b).max(0.0).sqrt();
    let (z1, z2): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
    Vector2::new(a * z1, b * z1 + c * z2)
}

/// `(w²(1) − 1) / (2∫w²)`
pub fn unit_root_ratio(f: &BrownianFunctionals) -> f64 {
    (f.w_end * f.w_end - 1.0) / (2.0 * f.z2)
}

/// Limits of `(Tθ̂1, T²θ̂2)` for a double root at zero.
pub fn zero_double(f: &BrownianFunctionals) -> (f64, f64) {
    let (w, z1, z2, z3) = (f.w_end, f.z1, f.z2, f.z3);
    let den = 4.0 * z2 * z3 - z1.powi(4);
    let a = w * w - 1.0;
    let b = w * z1 - z2;
    ((2.0 * z3 * a - 2.0 * z1 * z1 * b) / den, (4.0 * z2 * b - z1 * z1 * a) / den)
}

/// Limits of `(Tθ̂1, T(θ̂2 − θ2))` for roots `±iν`.
pub fn harmonic(f: &BrownianFunctionals, nu: f64) -> (f64, f64) {
    let pair = f.pair.expect("harmonic limit needs two Brownian motions");
    let r2 = f.w_end * f.w_end + pair.w2_end * pair.w2_end;
    ((r2 - 2.0) / pair.s2, 2.0 * nu * pair.levy / pair.s2)
}
