//! Sample paths of `(X, Ẋ)` on a uniform grid.
//!
//! The exact scheme steps with the Gaussian transition kernel and keeps the
//! Brownian increment that drove each step, so estimators and the residual
//! oracle can be checked against the very noise that produced the path.

use nalgebra::{Matrix2, Vector2, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{transition, ModelParams};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Scheme {
    #[default]
    Exact,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub horizon: f64,
    pub n_steps: usize,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "default_record")]
    pub record_noise: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub replication_index: u64,
}

fn default_record() -> bool {
    true
}

impl SimConfig {
    pub fn new(horizon: f64, n_steps: usize) -> Self {
        Self { horizon, n_steps, scheme: Scheme::Exact, record_noise: true, seed: 0, replication_index: 0 }
    }

    pub fn with_seed(mut self, seed: u64, replication_index: u64) -> Self {
        self.seed = seed;
        self.replication_index = replication_index;
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.horizon.is_finite() || self.horizon <= 0.0 {
            return Err(Error::InvalidParameter(format!("horizon T = {} must be positive", self.horizon)));
        }
        if self.n_steps == 0 {
            return Err(Error::InvalidParameter("n_steps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }
}

/// A path sampled at `t_i = T·i/n`, `i = 0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    /// `dw[i]` is the increment of W over `[t_i, t_{i+1}]`.
    pub dw: Option<Vec<f64>>,
    pub sigma: f64,
    pub params: ModelParams,
}

impl SamplePath {
    /// Builds a path from raw samples on the uniform grid `T·i/n`.
    pub fn from_samples(horizon: f64, x: Vec<f64>, v: Vec<f64>, dw: Option<Vec<f64>>, params: ModelParams) -> Result<Self> {
        if x.len() != v.len() || x.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "need matching x and v with at least 2 points, got {} and {}",
                x.len(),
                v.len()
            )));
        }
        if let Some(dw) = &dw {
            if dw.len() + 1 != x.len() {
                return Err(Error::InvalidParameter(format!("dw has {} entries for {} points", dw.len(), x.len())));
            }
        }
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(Error::InvalidParameter(format!("horizon T = {horizon} must be positive")));
        }
        let n = x.len() - 1;
        let t = uniform_grid(horizon, n);
        Ok(Self { t, x, v, dw, sigma: params.sigma, params })
    }

    pub fn n_steps(&self) -> usize {
        self.x.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.t[self.n_steps()]
    }

    pub fn step(&self) -> f64 {
        self.horizon() / self.n_steps() as f64
    }

    /// Time-changed path `X̃(t) = X(αt)` on the grid `t_i/α`, with velocity
    /// `αẊ(αt_i)`. The drift becomes `(αθ1, α²θ2)` and the noise scale
    /// `α^{3/2}σ`, driven by `W̃(t) = W(αt)/√α`.
    pub fn rescale_time(&self, alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::InvalidParameter(format!("alpha = {alpha} must be positive")));
        }
        let scale_sigma = alpha * alpha.sqrt();
        let params = ModelParams {
            theta1: alpha * self.params.theta1,
            theta2: alpha * alpha * self.params.theta2,
            sigma: scale_sigma * self.params.sigma,
            x0: self.params.x0,
            dx0: alpha * self.params.dx0,
        };
        let root = alpha.sqrt();
        Ok(Self {
            t: self.t.iter().map(|t| t / alpha).collect(),
            x: self.x.clone(),
            v: self.v.iter().map(|v| alpha * v).collect(),
            dw: self.dw.as_ref().map(|dw| dw.iter().map(|d| d / root).collect()),
            sigma: scale_sigma * self.sigma,
            params,
        })
    }
}

pub(crate) fn uniform_grid(horizon: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| if i == n { horizon } else { horizon * i as f64 / n as f64 }).collect()
}

pub fn simulate(params: &ModelParams, cfg: &SimConfig) -> Result<SamplePath> {
    params.validate()?;
    cfg.validate()?;
    let n = cfg.n_steps;
    let h = cfg.step();
    let mut rng = rng::stream(cfg.seed, rng::DOMAIN_PATH, cfg.replication_index);
    let mut x = Vec::with_capacity(n + 1);
    let mut v = Vec::with_capacity(n + 1);
    let mut dw = Vec::with_capacity(if cfg.record_noise { n } else { 0 });
    let mut state = params.initial_state();
    x.push(state[0]);
    v.push(state[1]);
    let noisy = params.sigma > 0.0;

    match cfg.scheme {
        Scheme::Exact => {
            let kernel = transition(params, h)?;
            let m = kernel.mean;
            let f = kernel.noise_factor();
            for step in 0..n {
                state = m * state;
                let mut w = 0.0;
                if noisy {
                    let z = Vector3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
                    let e = f * z;
                    w = e[0];
                    state += Vector2::new(e[1], e[2]);
                }
                push_state(&mut x, &mut v, state, step)?;
                if cfg.record_noise {
                    dw.push(w);
                }
            }
        }
        Scheme::Euler => {
            let sh = h.sqrt();
            let drift = Matrix2::new(1.0, h, params.theta2 * h, 1.0 + params.theta1 * h);
            for step in 0..n {
                let w = if noisy { sh * rng.sample::<f64, _>(StandardNormal) } else { 0.0 };
                state = drift * state;
                state[1] += params.sigma * w;
                push_state(&mut x, &mut v, state, step)?;
                if cfg.record_noise {
                    dw.push(w);
                }
            }
        }
    }
    let t = uniform_grid(cfg.horizon, n);
    Ok(SamplePath { t, x, v, dw: cfg.record_noise.then_some(dw), sigma: params.sigma, params: *params })
}

fn push_state(x: &mut Vec<f64>, v: &mut Vec<f64>, state: Vector2<f64>, step: usize) -> Result<()> {
    if !state[0].is_finite() || !state[1].is_finite() {
        return Err(Error::Overflow { step: step + 1 });
    }
    x.push(state[0]);
    v.push(state[1]);
    Ok(())
}

/// Mean and covariance of `(X(T), Ẋ(T))` from a single kernel of length T.
pub fn state_moments(params: &ModelParams, horizon: f64) -> Result<(Vector2<f64>, Matrix2<f64>)> {
    let k = transition(params, horizon)?;
    Ok((k.mean * params.initial_state(), k.state_cov()))
}
