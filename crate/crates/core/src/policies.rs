//! Adaptive allocation policies emitting assumption-compliant propensities.
//!
//! Two rules ship: uniform assignment and a mean-proportional rule that
//! up-weights arms with higher sample means after an initial exploration
//! phase. Both always emit propensity vectors with entries bounded away
//! from 0 and 1, so downstream IPW estimation is well-defined on every
//! trajectory the policy can produce.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::log::{ArmId, PropensityVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Uniform,
    MeanProportional,
}

/// Static policy parameters, fixed for a whole trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Fraction of the horizon spent on uniform exploration.
    pub explore_fraction: f64,
    /// Planned trajectory length T.
    pub horizon: u64,
    /// Hard floor on every emitted propensity entry.
    pub p_floor: f64,
    /// Sample means are floored at `mean_floor * max(1, running max |mean|)`
    /// before normalization; the proportional rule is otherwise undefined
    /// for non-positive means.
    pub mean_floor: f64,
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind, horizon: u64) -> Result<Self> {
        Self::with_params(kind, horizon, 0.1, 0.01, 0.05)
    }

    pub fn with_params(
        kind: PolicyKind,
        horizon: u64,
        explore_fraction: f64,
        p_floor: f64,
        mean_floor: f64,
    ) -> Result<Self> {
        if !(explore_fraction > 0.0 && explore_fraction <= 1.0) {
            return Err(Error::ConfigError(format!(
                "explore_fraction must lie in (0, 1], got {explore_fraction}"
            )));
        }
        if horizon == 0 {
            return Err(Error::ConfigError("horizon must be positive".into()));
        }
        if explore_fraction * (horizon as f64) < 1.0 {
            return Err(Error::ConfigError(format!(
                "exploration phase is empty: explore_fraction {explore_fraction} * horizon {horizon} < 1"
            )));
        }
        if !(p_floor > 0.0) {
            return Err(Error::ConfigError(format!(
                "p_floor must be positive, got {p_floor}"
            )));
        }
        if !(mean_floor > 0.0) {
            return Err(Error::ConfigError(format!(
                "mean_floor must be positive, got {mean_floor}"
            )));
        }
        Ok(Self {
            kind,
            explore_fraction,
            horizon,
            p_floor,
            mean_floor,
        })
    }

    /// Number of initial uniform-exploration rounds.
    pub fn explore_rounds(&self) -> u64 {
        (self.explore_fraction * self.horizon as f64).ceil() as u64
    }
}

/// Per-trajectory mutable policy state: pull counts and reward sums.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyState {
    counts: Vec<u64>,
    reward_sums: Vec<f64>,
    rounds: u64,
}

impl PolicyState {
    pub fn new(arm_count: usize, cfg: &PolicyConfig) -> Result<Self> {
        if arm_count < 2 {
            return Err(Error::ConfigError(format!(
                "arm count must be at least 2, got {arm_count}"
            )));
        }
        if arm_count as f64 * cfg.p_floor >= 1.0 {
            return Err(Error::ConfigError(format!(
                "p_floor {} infeasible for {arm_count} arms",
                cfg.p_floor
            )));
        }
        Ok(Self {
            counts: vec![0; arm_count],
            reward_sums: vec![0.0; arm_count],
            rounds: 0,
        })
    }

    pub fn arm_count(&self) -> usize {
        self.counts.len()
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    /// Records the realized (action, reward) pair for the round just played.
    pub fn record(&mut self, action: ArmId, reward: f64) {
        self.counts[action.index()] += 1;
        self.reward_sums[action.index()] += reward;
        self.rounds += 1;
    }

    fn sample_mean(&self, w: usize) -> f64 {
        if self.counts[w] == 0 {
            0.0
        } else {
            self.reward_sums[w] / self.counts[w] as f64
        }
    }
}

/// Action probabilities for the upcoming round (round `rounds + 1`).
///
/// Uniform during the exploration phase (and always, for the uniform
/// policy); afterwards each arm's sample mean is floored, normalized, and
/// projected onto `[p_floor, 1 - (K-1) p_floor]` so the output satisfies
/// the probabilistic-assignment invariants by construction.
pub fn action_probs(state: &PolicyState, cfg: &PolicyConfig) -> PropensityVector {
    let k = state.arm_count();
    let uniform = || PropensityVector::new(vec![1.0 / k as f64; k]).expect("uniform is valid");
    match cfg.kind {
        PolicyKind::Uniform => uniform(),
        PolicyKind::MeanProportional => {
            if state.rounds < cfg.explore_rounds() {
                return uniform();
            }
            let means: Vec<f64> = (0..k).map(|w| state.sample_mean(w)).collect();
            let max_abs = means.iter().fold(0.0f64, |acc, m| acc.max(m.abs()));
            let floor = cfg.mean_floor * max_abs.max(1.0);
            let floored: Vec<f64> = means.iter().map(|&m| m.max(floor)).collect();
            let total: f64 = floored.iter().sum();
            let raw: Vec<f64> = floored.iter().map(|&m| m / total).collect();
            let probs = project_to_box(&raw, cfg.p_floor);
            PropensityVector::new(probs).expect("projection output is valid")
        }
    }
}

/// Projects a probability vector onto `{p : sum p = 1, lo <= p_w <= hi}`
/// with `lo = p_floor`, `hi = 1 - (K-1) p_floor`, scaling the free entries
/// proportionally. Entries hitting a bound are frozen and the rest rescaled;
/// terminates in at most K passes.
fn project_to_box(raw: &[f64], p_floor: f64) -> Vec<f64> {
    let k = raw.len();
    let lo = p_floor;
    let hi = 1.0 - (k - 1) as f64 * p_floor;
    let mut probs = raw.to_vec();
    let mut fixed = vec![false; k];
    for _ in 0..k {
        let fixed_mass: f64 = (0..k).filter(|&w| fixed[w]).map(|w| probs[w]).sum();
        let free_mass: f64 = (0..k).filter(|&w| !fixed[w]).map(|w| probs[w]).sum();
        let target = 1.0 - fixed_mass;
        let mut changed = false;
        for w in 0..k {
            if fixed[w] {
                continue;
            }
            let scaled = if free_mass > 0.0 {
                probs[w] / free_mass * target
            } else {
                target / (0..k).filter(|&v| !fixed[v]).count() as f64
            };
            if scaled < lo {
                probs[w] = lo;
                fixed[w] = true;
                changed = true;
            } else if scaled > hi {
                probs[w] = hi;
                fixed[w] = true;
                changed = true;
            } else {
                probs[w] = scaled;
            }
        }
        if !changed {
            break;
        }
    }
    // Absorb any residual float drift into the largest entry.
    let sum: f64 = probs.iter().sum();
    let argmax = (0..k)
        .max_by(|&a, &b| probs[a].partial_cmp(&probs[b]).unwrap())
        .unwrap();
    probs[argmax] += 1.0 - sum;
    probs
}

/// Draws one arm from the categorical distribution. The caller must log the
/// same vector used here (propensity fidelity).
pub fn sample_action<R: Rng + ?Sized>(probs: &PropensityVector, rng: &mut R) -> ArmId {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    for (w, &p) in probs.as_slice().iter().enumerate() {
        cum += p;
        if u < cum {
            return ArmId(w);
        }
    }
    ArmId(probs.len() - 1)
}
