//! Contextual variance reduction for contrast estimation.
//!
//! A strictly-past-measurable predictor produces `y_hat` for the upcoming
//! round from the round's context and all earlier data; the residual
//! `y - y_hat` is then fed through the usual contrast update. The prediction
//! terms cancel in the contrast, so the point estimate stays unbiased while
//! the variance sum shrinks whenever the predictor has signal.
//!
//! The residual path exists only for contrasts: for a single arm mean the
//! prediction does not cancel, so no arm-mean residual API is offered.

use crate::confidence::{
    asymptotic_cs_half_width, ci_half_width, CsConfig, Interval, Method,
};
use crate::error::{Error, Result};
use crate::estimators::ContrastEstimatorState;
use crate::log::{ArmId, Observation, ObservationLog};

/// A streaming reward predictor. Call order per round is a contract:
/// `predict` with the round's context first, then `observe` with the
/// realized reward — predictions must never see the current reward.
pub trait RewardPredictor {
    /// Prediction for the upcoming round given its context (if any).
    fn predict(&self, x: Option<&[f64]>) -> Result<f64>;
    /// Folds the revealed round into the predictor state.
    fn observe(&mut self, x: Option<&[f64]>, reward: f64) -> Result<()>;
}

/// Intercept-only predictor: the running mean of all observed rewards.
#[derive(Debug, Clone, Default)]
pub struct ConstantMeanPredictor {
    n: u64,
    sum: f64,
}

impl RewardPredictor for ConstantMeanPredictor {
    fn predict(&self, _x: Option<&[f64]>) -> Result<f64> {
        Ok(if self.n == 0 { 0.0 } else { self.sum / self.n as f64 })
    }

    fn observe(&mut self, _x: Option<&[f64]>, reward: f64) -> Result<()> {
        self.n += 1;
        self.sum += reward;
        Ok(())
    }
}

/// Streaming least squares of reward on context (with intercept), via
/// accumulated normal equations. Predictions are clamped to
/// `clamp_factor * max(1, running max |reward|)` so they stay bounded on
/// every trajectory.
#[derive(Debug, Clone)]
pub struct LeastSquaresPredictor {
    /// Feature dimension including the intercept; fixed by the first round.
    dim: Option<usize>,
    xtx: Vec<f64>, // row-major (dim x dim), symmetric
    xty: Vec<f64>,
    n: u64,
    max_abs_reward: f64,
    clamp_factor: f64,
}

impl Default for LeastSquaresPredictor {
    fn default() -> Self {
        Self::new(10.0)
    }
}

impl LeastSquaresPredictor {
    pub fn new(clamp_factor: f64) -> Self {
        Self {
            dim: None,
            xtx: Vec::new(),
            xty: Vec::new(),
            n: 0,
            max_abs_reward: 0.0,
            clamp_factor,
        }
    }

    fn features(x: Option<&[f64]>) -> Vec<f64> {
        let mut f = vec![1.0];
        if let Some(x) = x {
            f.extend_from_slice(x);
        }
        f
    }

    fn check_dim(&self, p: usize) -> Result<()> {
        match self.dim {
            Some(d) if d != p => Err(Error::DimensionMismatch {
                expected: d - 1,
                got: p - 1,
            }),
            _ => Ok(()),
        }
    }

    fn clamp_bound(&self) -> f64 {
        self.clamp_factor * self.max_abs_reward.max(1.0)
    }

    /// Solves the accumulated normal equations by Gaussian elimination with
    /// partial pivoting. A tiny ridge is added only when the unregularized
    /// system is singular (cold start, collinear contexts).
    fn coefficients(&self) -> Option<Vec<f64>> {
        let d = self.dim?;
        let scale = (0..d).map(|i| self.xtx[i * d + i]).fold(0.0f64, f64::max);
        if scale == 0.0 {
            return None;
        }
        solve_symmetric(&self.xtx, &self.xty, d, 0.0).or_else(|| {
            solve_symmetric(&self.xtx, &self.xty, d, 1e-6 * scale)
        })
    }
}

fn solve_symmetric(a: &[f64], b: &[f64], d: usize, ridge: f64) -> Option<Vec<f64>> {
    let mut m = vec![0.0; d * (d + 1)];
    for i in 0..d {
        for j in 0..d {
            m[i * (d + 1) + j] = a[i * d + j] + if i == j { ridge } else { 0.0 };
        }
        m[i * (d + 1) + d] = b[i];
    }
    let scale = (0..d).map(|i| a[i * d + i].abs()).fold(1.0f64, f64::max);
    for col in 0..d {
        let pivot_row = (col..d)
            .max_by(|&r1, &r2| {
                m[r1 * (d + 1) + col]
                    .abs()
                    .partial_cmp(&m[r2 * (d + 1) + col].abs())
                    .unwrap()
            })
            .unwrap();
        if m[pivot_row * (d + 1) + col].abs() < 1e-12 * scale {
            return None;
        }
        if pivot_row != col {
            for j in 0..=d {
                m.swap(pivot_row * (d + 1) + j, col * (d + 1) + j);
            }
        }
        let pivot = m[col * (d + 1) + col];
        for row in 0..d {
            if row == col {
                continue;
            }
            let factor = m[row * (d + 1) + col] / pivot;
            for j in col..=d {
                m[row * (d + 1) + j] -= factor * m[col * (d + 1) + j];
            }
        }
    }
    Some((0..d).map(|i| m[i * (d + 1) + d] / m[i * (d + 1) + i]).collect())
}

impl RewardPredictor for LeastSquaresPredictor {
    fn predict(&self, x: Option<&[f64]>) -> Result<f64> {
        let f = Self::features(x);
        self.check_dim(f.len())?;
        if self.n == 0 {
            return Ok(0.0);
        }
        let Some(beta) = self.coefficients() else {
            return Ok(0.0);
        };
        let raw: f64 = beta.iter().zip(&f).map(|(b, v)| b * v).sum();
        let bound = self.clamp_bound();
        Ok(raw.clamp(-bound, bound))
    }

    fn observe(&mut self, x: Option<&[f64]>, reward: f64) -> Result<()> {
        let f = Self::features(x);
        self.check_dim(f.len())?;
        let d = f.len();
        if self.dim.is_none() {
            self.dim = Some(d);
            self.xtx = vec![0.0; d * d];
            self.xty = vec![0.0; d];
        }
        for i in 0..d {
            for j in 0..d {
                self.xtx[i * d + j] += f[i] * f[j];
            }
            self.xty[i] += f[i] * reward;
        }
        self.n += 1;
        self.max_abs_reward = self.max_abs_reward.max(reward.abs());
        Ok(())
    }
}

/// Contrast estimator over residualized outcomes. Identical update algebra
/// to [`ContrastEstimatorState`] with the reward replaced by `y - y_hat`;
/// the prediction cancels between the two arms, so the point estimate
/// targets the same contrast with a (typically smaller) variance sum `S^X`.
#[derive(Debug, Clone, Copy)]
pub struct ResidualContrastState {
    inner: ContrastEstimatorState,
}

impl ResidualContrastState {
    pub fn new(w: ArmId, w_prime: ArmId) -> Self {
        Self {
            inner: ContrastEstimatorState::new(w, w_prime),
        }
    }

    pub fn arms(&self) -> (ArmId, ArmId) {
        self.inner.arms()
    }

    pub fn rounds(&self) -> u64 {
        self.inner.rounds()
    }

    /// Folds one observation in. `y_hat` must have been produced before the
    /// round's action and reward were revealed.
    pub fn update(&mut self, obs: &Observation, y_hat: f64) -> Result<()> {
        let mut residual_obs = obs.clone();
        residual_obs.reward = obs.reward - y_hat;
        self.inner.update(&residual_obs)
    }

    pub fn tau_hat(&self) -> Result<f64> {
        self.inner.tau_hat()
    }

    /// Residualized conservative variance sum `S^X`.
    pub fn s_residual(&self) -> f64 {
        self.inner.s_contrast()
    }
}

/// Interval for a residualized contrast. Only the fixed-time CI and the
/// asymptotic CS are supported on the residual path: the exact sequences
/// need an a-priori bound on the outcome, which residualization does not
/// preserve.
pub fn contextual_interval(
    state: &ResidualContrastState,
    method: Method,
    cfg: &CsConfig,
) -> Result<Interval> {
    let half_width = match method {
        Method::Ci => ci_half_width(state.s_residual(), state.rounds(), cfg.alpha)?,
        Method::AsymptoticCs => {
            asymptotic_cs_half_width(state.s_residual(), state.rounds(), cfg.alpha, cfg.eta)?
        }
        other => {
            return Err(Error::ConfigError(format!(
                "method `{}` is not available on the residualized path",
                other.label()
            )));
        }
    };
    Interval::new(state.tau_hat()?, half_width, cfg.alpha)
}

/// Per-round residualized bounds over a full log: for each round, predict
/// from strictly-past data (plus the round's context), residualize, update,
/// then reveal the round to the predictor.
pub fn residual_bound_series<P: RewardPredictor>(
    log: &ObservationLog,
    predictor: &mut P,
    w: ArmId,
    w_prime: ArmId,
    method: Method,
    cfg: &CsConfig,
) -> Result<crate::confidence::BoundSeries> {
    let mut state = ResidualContrastState::new(w, w_prime);
    let mut rows = Vec::with_capacity(log.len());
    for obs in log.observations() {
        let y_hat = predictor.predict(obs.context.as_deref())?;
        state.update(obs, y_hat)?;
        predictor.observe(obs.context.as_deref(), obs.reward)?;
        let interval = contextual_interval(&state, method, cfg)?;
        rows.push(crate::confidence::BoundRow {
            t: state.rounds(),
            center: interval.center,
            lower: interval.lower(),
            upper: interval.upper(),
        });
    }
    Ok(crate::confidence::BoundSeries {
        method,
        estimand: crate::confidence::Estimand::Contrast(w, w_prime),
        rows,
    })
}
