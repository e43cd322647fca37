//! Interval and confidence-sequence constructors.
//!
//! Three width families share the running statistics `(t, center, S)`:
//!
//! * fixed-time CI: `z_{1-alpha/2} sqrt(S) / t`,
//! * exact (non-asymptotic) CS: the closed form
//!   `m(m+1)/t log(2/alpha) + (S/t)((m+1)/m log(1 + 1/m) - 1/m)`,
//! * asymptotic CS: `(1/t) sqrt((S eta^2 + 1)/eta^2 log((S eta^2 + 1)/alpha^2))`.
//!
//! A fourth, the truncated-gamma mixture CS, has no closed form and lives in
//! [`gamma_mixture`]. All operations here are pure functions of their inputs.

pub mod gamma_mixture;
pub mod special;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{ArmEstimatorState, ContrastEstimatorState};
use crate::log::{ArmId, ObservationLog};

pub use gamma_mixture::gamma_mixture_cs;
pub use special::{inv_normal_cdf, kummer_1f1_a1, lambert_w_minus1, trunc_gamma_norm, tune_eta};

/// A symmetric interval around a point estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub center: f64,
    pub half_width: f64,
    pub alpha: f64,
}

impl Interval {
    pub fn new(center: f64, half_width: f64, alpha: f64) -> Result<Self> {
        if !(half_width >= 0.0) {
            return Err(Error::DomainError(format!(
                "half width must be non-negative, got {half_width}"
            )));
        }
        check_alpha(alpha)?;
        Ok(Self {
            center,
            half_width,
            alpha,
        })
    }

    pub fn lower(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.center + self.half_width
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.lower() && value <= self.upper()
    }
}

/// Interval/sequence construction method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Fixed-time confidence interval.
    Ci,
    /// Closed-form exact confidence sequence.
    ExactCs,
    /// Truncated-gamma mixture confidence sequence (root finding).
    GammaMixCs,
    /// Asymptotic confidence sequence.
    AsymptoticCs,
}

impl Method {
    pub fn is_sequence(self) -> bool {
        !matches!(self, Method::Ci)
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::Ci => "ci",
            Method::ExactCs => "exact-cs",
            Method::GammaMixCs => "gamma-cs",
            Method::AsymptoticCs => "asymp-cs",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ci" => Ok(Method::Ci),
            "exact-cs" => Ok(Method::ExactCs),
            "gamma-cs" => Ok(Method::GammaMixCs),
            "asymp-cs" => Ok(Method::AsymptoticCs),
            other => Err(Error::ConfigError(format!("unknown method `{other}`"))),
        }
    }
}

/// What a bound series estimates: a single arm mean or a pairwise contrast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Estimand {
    Arm(ArmId),
    Contrast(ArmId, ArmId),
}

impl std::fmt::Display for Estimand {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Estimand::Arm(w) => write!(f, "arm:{w}"),
            Estimand::Contrast(w, wp) => write!(f, "contrast:{w},{wp}"),
        }
    }
}

/// Shared configuration for the interval constructors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsConfig {
    pub alpha: f64,
    /// Asymptotic-CS tuning constant; defaults to the closed-form optimum
    /// at round 10 for the configured alpha.
    pub eta: f64,
    /// `M / p_min`, required by the exact and gamma-mixture sequences.
    pub m: Option<f64>,
    /// Truncated-gamma mixture parameter; default 1.
    pub rho_mix: Option<f64>,
}

impl CsConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self {
            alpha,
            eta: special::tune_eta(alpha, 10)?,
            m: None,
            rho_mix: None,
        })
    }

    pub fn with_eta(mut self, eta: f64) -> Result<Self> {
        if !(eta > 0.0) {
            return Err(Error::DomainError(format!("eta must be positive, got {eta}")));
        }
        self.eta = eta;
        Ok(self)
    }

    pub fn with_m(mut self, m: f64) -> Result<Self> {
        if !(m > 0.0) {
            return Err(Error::DomainError(format!("m must be positive, got {m}")));
        }
        self.m = Some(m);
        Ok(self)
    }

    pub fn with_rho_mix(mut self, rho: f64) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::DomainError(format!(
                "rho_mix must be positive, got {rho}"
            )));
        }
        self.rho_mix = Some(rho);
        Ok(self)
    }

    pub fn require_m(&self) -> Result<f64> {
        self.m.ok_or_else(|| {
            Error::MissingBound("m = M / p_min must be configured for this method".into())
        })
    }

    pub fn rho_mix_or_default(&self) -> f64 {
        self.rho_mix.unwrap_or(1.0)
    }
}

impl Default for CsConfig {
    fn default() -> Self {
        Self::new(0.05).expect("0.05 is a valid alpha")
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::DomainError(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

fn check_s_t(s: f64, t: u64) -> Result<()> {
    if !(s >= 0.0) {
        return Err(Error::DomainError(format!(
            "variance sum must be non-negative, got {s}"
        )));
    }
    if t == 0 {
        return Err(Error::DomainError("t must be at least 1".into()));
    }
    Ok(())
}

/// Fixed-time CI half width `z_{1-alpha/2} sqrt(S) / t`. Applies to both
/// the arm (`S_t(w)`) and contrast (`S_t(w, w')`) variance sums.
pub fn ci_half_width(s: f64, t: u64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_s_t(s, t)?;
    let z = special::inv_normal_cdf(1.0 - alpha / 2.0)?;
    Ok(z * s.sqrt() / t as f64)
}

/// Exact (non-asymptotic) CS half width, valid at every round.
pub fn exact_cs_half_width(s: f64, t: u64, alpha: f64, m: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_s_t(s, t)?;
    if !(m > 0.0) {
        return Err(Error::MissingBound(format!(
            "exact CS requires m = M / p_min > 0, got {m}"
        )));
    }
    let tf = t as f64;
    let fixed = m * (m + 1.0) / tf * (2.0 / alpha).ln();
    let slope = (m + 1.0) / m * (1.0 + 1.0 / m).ln() - 1.0 / m;
    Ok(fixed + s / tf * slope)
}

/// Asymptotic CS half width.
pub fn asymptotic_cs_half_width(s: f64, t: u64, alpha: f64, eta: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_s_t(s, t)?;
    if !(eta > 0.0) {
        return Err(Error::DomainError(format!("eta must be positive, got {eta}")));
    }
    let tf = t as f64;
    let v = s * eta * eta + 1.0;
    Ok((v / (eta * eta) * (v / (alpha * alpha)).ln()).sqrt() / tf)
}

/// One row of a bound series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub t: u64,
    pub center: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Per-round point estimate and bounds for one method and estimand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSeries {
    pub method: Method,
    pub estimand: Estimand,
    pub rows: Vec<BoundRow>,
}

/// Computes the interval at a given round from running statistics.
pub fn interval_at(
    method: Method,
    t: u64,
    center: f64,
    s: f64,
    cfg: &CsConfig,
) -> Result<Interval> {
    let half_width = match method {
        Method::Ci => ci_half_width(s, t, cfg.alpha)?,
        Method::ExactCs => exact_cs_half_width(s, t, cfg.alpha, cfg.require_m()?)?,
        Method::AsymptoticCs => asymptotic_cs_half_width(s, t, cfg.alpha, cfg.eta)?,
        Method::GammaMixCs => {
            return gamma_mixture_cs(t, center, s, cfg);
        }
    };
    Interval::new(center, half_width, cfg.alpha)
}

/// Walks a log in round order and emits one bound row per round for the
/// requested method and estimand. For the exact and gamma-mixture sequences
/// `m` must be configured up front.
pub fn bound_series(
    log: &ObservationLog,
    estimand: Estimand,
    method: Method,
    cfg: &CsConfig,
) -> Result<BoundSeries> {
    if matches!(method, Method::ExactCs | Method::GammaMixCs) {
        cfg.require_m()?;
    }
    let mut rows = Vec::with_capacity(log.len());
    match estimand {
        Estimand::Arm(w) => {
            if w.index() >= log.arm_count() {
                return Err(Error::OutOfRange(format!(
                    "arm {w} exceeds arm count {}",
                    log.arm_count()
                )));
            }
            let mut state = ArmEstimatorState::new(w);
            for obs in log.observations() {
                state.update(obs)?;
                let interval =
                    interval_at(method, state.rounds(), state.q_hat()?, state.s(), cfg)?;
                rows.push(BoundRow {
                    t: state.rounds(),
                    center: interval.center,
                    lower: interval.lower(),
                    upper: interval.upper(),
                });
            }
        }
        Estimand::Contrast(w, wp) => {
            if w.index() >= log.arm_count() || wp.index() >= log.arm_count() {
                return Err(Error::OutOfRange(format!(
                    "contrast ({w}, {wp}) exceeds arm count {}",
                    log.arm_count()
                )));
            }
            let mut state = ContrastEstimatorState::new(w, wp);
            for obs in log.observations() {
                state.update(obs)?;
                let interval = interval_at(
                    method,
                    state.rounds(),
                    state.tau_hat()?,
                    state.s_contrast(),
                    cfg,
                )?;
                rows.push(BoundRow {
                    t: state.rounds(),
                    center: interval.center,
                    lower: interval.lower(),
                    upper: interval.upper(),
                });
            }
        }
    }
    Ok(BoundSeries {
        method,
        estimand,
        rows,
    })
}
