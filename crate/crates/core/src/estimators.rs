//! Streaming inverse-propensity-weighted estimators for arm means and
//! pairwise contrasts, with running conservative variance sums.
//!
//! Each state is O(1): it carries only the round count and two compensated
//! running sums. IPW summands can reach magnitude `M / p_min^2`, so naive
//! summation loses digits over long horizons; Kahan compensation keeps the
//! streaming path equal to a from-scratch recomputation to ~1e-15.
//!
//! No weight truncation or clipping is applied anywhere: the estimators'
//! exact conditional unbiasedness is load-bearing (the test suite asserts it
//! by exhaustive enumeration) and clipping would break it.

use crate::error::{Error, Result};
use crate::log::{ArmId, Observation};

/// Kahan compensated accumulator.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    pub(crate) fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum
    }
}

/// Running state for the IPW estimate of one arm's cumulative mean and its
/// variance sum.
#[derive(Debug, Clone, Copy)]
pub struct ArmEstimatorState {
    arm: ArmId,
    t: u64,
    sum_tau: Kahan,
    s: Kahan,
}

impl ArmEstimatorState {
    pub fn new(arm: ArmId) -> Self {
        Self {
            arm,
            t: 0,
            sum_tau: Kahan::default(),
            s: Kahan::default(),
        }
    }

    pub fn arm(&self) -> ArmId {
        self.arm
    }

    pub fn rounds(&self) -> u64 {
        self.t
    }

    /// Folds one observation in. Adds `reward / p(w)` to the point-estimate
    /// sum and `reward^2 (1 - p(w)) / p(w)^2` to the variance sum when the
    /// tracked arm was chosen; otherwise both summands are zero.
    pub fn update(&mut self, obs: &Observation) -> Result<()> {
        if obs.t != self.t + 1 {
            return Err(Error::OrderViolation {
                expected: self.t + 1,
                got: obs.t,
            });
        }
        if obs.action == self.arm {
            let p = obs.propensities.prob(self.arm);
            self.sum_tau.add(obs.reward / p);
            self.s.add(obs.reward * obs.reward * (1.0 - p) / (p * p));
        }
        self.t += 1;
        Ok(())
    }

    /// Point estimate of the cumulative mean through the current round.
    pub fn q_hat(&self) -> Result<f64> {
        if self.t == 0 {
            return Err(Error::EmptyState);
        }
        Ok(self.sum_tau.value() / self.t as f64)
    }

    /// Running conservative variance sum `S_t(w)`.
    pub fn s(&self) -> f64 {
        self.s.value()
    }
}

/// Running state for the IPW estimate of a pairwise contrast and its
/// conservative variance sum.
#[derive(Debug, Clone, Copy)]
pub struct ContrastEstimatorState {
    arms: (ArmId, ArmId),
    t: u64,
    sum_diff: Kahan,
    s: Kahan,
}

impl ContrastEstimatorState {
    pub fn new(w: ArmId, w_prime: ArmId) -> Self {
        Self {
            arms: (w, w_prime),
            t: 0,
            sum_diff: Kahan::default(),
            s: Kahan::default(),
        }
    }

    pub fn arms(&self) -> (ArmId, ArmId) {
        self.arms
    }

    pub fn rounds(&self) -> u64 {
        self.t
    }

    pub fn update(&mut self, obs: &Observation) -> Result<()> {
        if obs.t != self.t + 1 {
            return Err(Error::OrderViolation {
                expected: self.t + 1,
                got: obs.t,
            });
        }
        let (w, w_prime) = self.arms;
        if obs.action == w {
            let p = obs.propensities.prob(w);
            self.sum_diff.add(obs.reward / p);
            self.s.add(obs.reward * obs.reward / (p * p));
        }
        if obs.action == w_prime {
            let p = obs.propensities.prob(w_prime);
            self.sum_diff.add(-obs.reward / p);
            self.s.add(obs.reward * obs.reward / (p * p));
        }
        self.t += 1;
        Ok(())
    }

    /// Point estimate of the contrast through the current round.
    pub fn tau_hat(&self) -> Result<f64> {
        if self.t == 0 {
            return Err(Error::EmptyState);
        }
        Ok(self.sum_diff.value() / self.t as f64)
    }

    /// Running conservative variance sum `S_t(w, w')`.
    pub fn s_contrast(&self) -> f64 {
        self.s.value()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::log::PropensityVector;

    fn obs(t: u64, probs: Vec<f64>, action: usize, reward: f64) -> Observation {
        Observation {
            t,
            propensities: PropensityVector::new(probs).unwrap(),
            action: ArmId(action),
            reward,
            context: None,
        }
    }

    #[test]
    fn arm_update_hand_values() {
        // Hand evaluation of the per-round summands:
        // t=1: action=1, y=2, p(1)=0.5 -> sum_tau = 2/0.5 = 4, S = 4*0.5/0.25 = 8.
        let mut state = ArmEstimatorState::new(ArmId(1));
        state.update(&obs(1, vec![0.5, 0.5], 1, 2.0)).unwrap();
        assert_eq!(state.sum_tau.value(), 4.0);
        assert_eq!(state.s(), 8.0);

        // Same observation tracked for arm 0: indicator zero.
        let mut other = ArmEstimatorState::new(ArmId(0));
        other.update(&obs(1, vec![0.5, 0.5], 1, 2.0)).unwrap();
        assert_eq!(other.sum_tau.value(), 0.0);
        assert_eq!(other.s(), 0.0);

        // t=2: action=1, y=1, p(1)=0.25 -> adds 1/0.25 = 4 and 0.75/0.0625 = 12.
        state.update(&obs(2, vec![0.75, 0.25], 1, 1.0)).unwrap();
        assert_eq!(state.sum_tau.value(), 8.0);
        assert_eq!(state.s(), 20.0);

        // Third round, arm not chosen: q_hat = 8/3.
        state.update(&obs(3, vec![0.5, 0.5], 0, 5.0)).unwrap();
        assert!((state.q_hat().unwrap() - 8.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn arm_never_chosen_is_exactly_zero() {
        let mut state = ArmEstimatorState::new(ArmId(1));
        for t in 1..=5 {
            state.update(&obs(t, vec![0.5, 0.5], 0, 3.0)).unwrap();
        }
        assert_eq!(state.q_hat().unwrap(), 0.0);
        assert_eq!(state.s(), 0.0);
    }

    #[test]
    fn constant_summands() {
        // Every round chooses w with p = 1 - eps, y = c: each summand is
        // c/(1-eps), so the mean is c/(1-eps).
        let eps = 0.125;
        let c = 3.0;
        let mut state = ArmEstimatorState::new(ArmId(0));
        for t in 1..=7 {
            state.update(&obs(t, vec![1.0 - eps, eps], 0, c)).unwrap();
        }
        assert!((state.q_hat().unwrap() - c / (1.0 - eps)).abs() < 1e-12);
    }

    #[test]
    fn empty_state_errors() {
        let state = ArmEstimatorState::new(ArmId(0));
        assert!(matches!(state.q_hat(), Err(Error::EmptyState)));
        let contrast = ContrastEstimatorState::new(ArmId(0), ArmId(1));
        assert!(matches!(contrast.tau_hat(), Err(Error::EmptyState)));
    }

    #[test]
    fn order_violation_detected() {
        let mut state = ArmEstimatorState::new(ArmId(0));
        state.update(&obs(1, vec![0.5, 0.5], 0, 1.0)).unwrap();
        let err = state.update(&obs(3, vec![0.5, 0.5], 0, 1.0)).unwrap_err();
        assert!(matches!(err, Error::OrderViolation { expected: 2, got: 3 }));
    }

    #[test]
    fn contrast_hand_values_and_antisymmetry() {
        // t=1, action=1, y=2, p=[0.5,0.5], contrast (1,0): tau_hat = 4, S = 16.
        let o = obs(1, vec![0.5, 0.5], 1, 2.0);
        let mut c10 = ContrastEstimatorState::new(ArmId(1), ArmId(0));
        c10.update(&o).unwrap();
        assert_eq!(c10.tau_hat().unwrap(), 4.0);
        assert_eq!(c10.s_contrast(), 16.0);

        let mut c01 = ContrastEstimatorState::new(ArmId(0), ArmId(1));
        c01.update(&o).unwrap();
        assert_eq!(c01.tau_hat().unwrap(), -4.0);
        assert_eq!(c01.s_contrast(), 16.0);
    }

    #[test]
    fn identical_arm_contrast_is_zero() {
        let mut c = ContrastEstimatorState::new(ArmId(1), ArmId(1));
        for t in 1..=4 {
            c.update(&obs(t, vec![0.5, 0.5], (t % 2) as usize, 1.5)).unwrap();
        }
        assert_eq!(c.tau_hat().unwrap(), 0.0);
    }
}
