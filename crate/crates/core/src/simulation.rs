//! Data-generating processes, potential-outcome bookkeeping, and the
//! seeded Monte Carlo harness.
//!
//! Every round's full set of potential outcomes is generated and recorded
//! *before* the action is drawn, from an RNG stream separate from the
//! policy's: actions can never influence potentials, and rerunning with a
//! different policy seed leaves the truth table bit-identical.
//!
//! Replications are embarrassingly parallel. Replication `i` of a run with
//! master seed `s` draws its potentials from stream `2i` and its policy
//! randomness from stream `2i + 1` of a ChaCha generator seeded with `s`,
//! so every reported number is a pure function of `(s, i)` regardless of
//! thread count or scheduling.

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confidence::{
    asymptotic_cs_half_width, ci_half_width, exact_cs_half_width, gamma_mixture,
    inv_normal_cdf, interval_at, CsConfig, Estimand, Method,
};
use crate::contextual::{LeastSquaresPredictor, ResidualContrastState, RewardPredictor};
use crate::error::{Error, Result};
use crate::estimators::{ArmEstimatorState, ContrastEstimatorState, Kahan};
use crate::log::{ArmId, DeclaredBounds, Observation, ObservationLog};
use crate::policies::{action_probs, sample_action, PolicyConfig, PolicyState};

/// Reward-generating process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DgpVariant {
    /// Independent Bernoulli rewards with per-arm success probabilities.
    BernoulliIid { mu: Vec<f64> },
    /// AR(1) baseline with a Bernoulli context regressor:
    /// `Y_t(0) = rho_ar Y_{t-1}(0) + beta X_t + eps_t`, `eps_t ~ N(mu[0], 1)`,
    /// `Y_t(w) = Y_t(0) + N(mu[w], 1)` for `w > 0`, `Y_0(0) = 0`.
    Ar1Context {
        rho_ar: f64,
        beta: f64,
        mu: Vec<f64>,
        x_bernoulli_p: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub variant: DgpVariant,
}

impl DgpSpec {
    pub fn arm_count(&self) -> usize {
        match &self.variant {
            DgpVariant::BernoulliIid { mu } => mu.len(),
            DgpVariant::Ar1Context { mu, .. } => mu.len(),
        }
    }

    pub fn has_context(&self) -> bool {
        matches!(self.variant, DgpVariant::Ar1Context { .. })
    }

    /// A-priori reward bound, when the process has one.
    pub fn reward_bound(&self) -> Option<f64> {
        match self.variant {
            DgpVariant::BernoulliIid { .. } => Some(1.0),
            DgpVariant::Ar1Context { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.arm_count() < 2 {
            return Err(Error::ConfigError(format!(
                "DGP must define at least 2 arms, got {}",
                self.arm_count()
            )));
        }
        match &self.variant {
            DgpVariant::BernoulliIid { mu } => {
                for &m in mu {
                    if !(0.0..=1.0).contains(&m) {
                        return Err(Error::ConfigError(format!(
                            "Bernoulli mean {m} outside [0, 1]"
                        )));
                    }
                }
            }
            DgpVariant::Ar1Context {
                rho_ar,
                x_bernoulli_p,
                ..
            } => {
                if !(rho_ar.abs() <= 1.0) {
                    return Err(Error::ConfigError(format!(
                        "|rho_ar| must be at most 1, got {rho_ar}"
                    )));
                }
                if !(0.0..=1.0).contains(x_bernoulli_p) {
                    return Err(Error::ConfigError(format!(
                        "x_bernoulli_p {x_bernoulli_p} outside [0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Simulation-only table of all potential outcomes with running true
/// cumulative means.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthTrack {
    arm_count: usize,
    potentials: Vec<Vec<f64>>,
    contexts: Vec<Option<Vec<f64>>>,
    q_sums: Vec<Kahan>,
    q_rows: Vec<Vec<f64>>,
}

impl TruthTrack {
    pub fn new(arm_count: usize) -> Self {
        Self {
            arm_count,
            potentials: Vec::new(),
            contexts: Vec::new(),
            q_sums: vec![Kahan::default(); arm_count],
            q_rows: Vec::new(),
        }
    }

    pub fn arm_count(&self) -> usize {
        self.arm_count
    }

    /// Number of generated rounds.
    pub fn len(&self) -> usize {
        self.potentials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.potentials.is_empty()
    }

    pub fn push_round(&mut self, potentials: Vec<f64>, context: Option<Vec<f64>>) {
        debug_assert_eq!(potentials.len(), self.arm_count);
        let t = self.potentials.len() as f64 + 1.0;
        let mut row = Vec::with_capacity(self.arm_count);
        for (w, &y) in potentials.iter().enumerate() {
            self.q_sums[w].add(y);
            row.push(self.q_sums[w].value() / t);
        }
        self.q_rows.push(row);
        self.potentials.push(potentials);
        self.contexts.push(context);
    }

    pub fn potentials_at(&self, t: u64) -> Result<&[f64]> {
        self.check_t(t)?;
        Ok(&self.potentials[t as usize - 1])
    }

    pub fn context_at(&self, t: u64) -> Result<Option<&[f64]>> {
        self.check_t(t)?;
        Ok(self.contexts[t as usize - 1].as_deref())
    }

    /// True cumulative mean `Q_t(w)`.
    pub fn true_q(&self, t: u64, w: ArmId) -> Result<f64> {
        self.check_t(t)?;
        if w.index() >= self.arm_count {
            return Err(Error::OutOfRange(format!(
                "arm {w} exceeds arm count {}",
                self.arm_count
            )));
        }
        Ok(self.q_rows[t as usize - 1][w.index()])
    }

    /// True contrast `tau_t(w, w')`.
    pub fn true_tau(&self, t: u64, w: ArmId, w_prime: ArmId) -> Result<f64> {
        Ok(self.true_q(t, w)? - self.true_q(t, w_prime)?)
    }

    fn check_t(&self, t: u64) -> Result<()> {
        if t == 0 || t as usize > self.potentials.len() {
            return Err(Error::OutOfRange(format!(
                "round {t} outside generated horizon {}",
                self.potentials.len()
            )));
        }
        Ok(())
    }
}

/// True estimand pair at round `t`.
pub fn true_estimands(truth: &TruthTrack, t: u64, w: ArmId, w_prime: ArmId) -> Result<(f64, f64)> {
    Ok((truth.true_q(t, w)?, truth.true_tau(t, w, w_prime)?))
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    inv_normal_cdf(u).expect("Open01 draws are inside (0, 1)")
}

/// Generates the next round's full potential-outcome vector (and context)
/// and appends it to the truth table.
pub fn generate_round<R: Rng + ?Sized>(
    dgp: &DgpSpec,
    truth: &mut TruthTrack,
    rng: &mut R,
) -> (Vec<f64>, Option<Vec<f64>>) {
    match &dgp.variant {
        DgpVariant::BernoulliIid { mu } => {
            let potentials: Vec<f64> = mu
                .iter()
                .map(|&m| if rng.gen::<f64>() < m { 1.0 } else { 0.0 })
                .collect();
            truth.push_round(potentials.clone(), None);
            (potentials, None)
        }
        DgpVariant::Ar1Context {
            rho_ar,
            beta,
            mu,
            x_bernoulli_p,
        } => {
            let x = if rng.gen::<f64>() < *x_bernoulli_p { 1.0 } else { 0.0 };
            let prev_y0 = truth
                .potentials
                .last()
                .map(|row| row[0])
                .unwrap_or(0.0); // Y_0(0) = 0
            let eps = mu[0] + standard_normal(rng);
            let y0 = rho_ar * prev_y0 + beta * x + eps;
            let mut potentials = Vec::with_capacity(mu.len());
            potentials.push(y0);
            for &mu_w in &mu[1..] {
                potentials.push(y0 + mu_w + standard_normal(rng));
            }
            let context = Some(vec![x]);
            truth.push_round(potentials.clone(), context.clone());
            (potentials, context)
        }
    }
}

/// Runs one trajectory of `rounds` rounds: generate potentials, form action
/// probabilities from the policy state, draw the action, log the realized
/// reward, feed the policy. Potentials come from `dgp_rng`, action draws
/// from `policy_rng`.
pub fn run_trajectory<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    dgp: &DgpSpec,
    policy: &PolicyConfig,
    rounds: u64,
    dgp_rng: &mut R1,
    policy_rng: &mut R2,
) -> Result<(ObservationLog, TruthTrack)> {
    dgp.validate()?;
    let k = dgp.arm_count();
    let bounds = DeclaredBounds {
        m: dgp.reward_bound(),
        p_min: Some(policy.p_floor),
    };
    let mut log = ObservationLog::new(k, bounds)?;
    let mut truth = TruthTrack::new(k);
    let mut policy_state = PolicyState::new(k, policy)?;
    for t in 1..=rounds {
        let (potentials, context) = generate_round(dgp, &mut truth, dgp_rng);
        let probs = action_probs(&policy_state, policy);
        let action = sample_action(&probs, policy_rng);
        let reward = potentials[action.index()];
        log.append_observation(Observation {
            t,
            propensities: probs,
            action,
            reward,
            context,
        })?;
        policy_state.record(action, reward);
    }
    Ok((log, truth))
}

/// One scored method: an interval family, optionally on the residualized
/// (contextual) path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub method: Method,
    pub contextual: bool,
}

impl MethodSpec {
    pub fn plain(method: Method) -> Self {
        Self {
            method,
            contextual: false,
        }
    }

    pub fn with_context(method: Method) -> Self {
        Self {
            method,
            contextual: true,
        }
    }

    pub fn label(&self) -> String {
        if self.contextual {
            format!("{}-x", self.method.label())
        } else {
            self.method.label().to_string()
        }
    }
}

/// Full Monte Carlo study configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub dgp: DgpSpec,
    pub policy: PolicyConfig,
    pub cs: CsConfig,
    pub methods: Vec<MethodSpec>,
    pub estimand: Estimand,
    pub n_reps: u64,
    pub seed: u64,
    /// Trajectory length used for stopping-time measurement; defaults to
    /// four times the policy horizon. Must be at least the horizon.
    pub stopping_horizon: Option<u64>,
    /// Confidence sequences are scored for uniform coverage over
    /// `t in (cs_check_from, horizon]`; default 10.
    pub cs_check_from: u64,
}

impl McConfig {
    fn resolved_stopping_horizon(&self) -> u64 {
        self.stopping_horizon.unwrap_or(4 * self.policy.horizon)
    }

    pub fn validate(&self) -> Result<()> {
        self.dgp.validate()?;
        if self.n_reps == 0 {
            return Err(Error::ConfigError("n_reps must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::ConfigError("no methods configured".into()));
        }
        let any_cs = self.methods.iter().any(|m| m.method.is_sequence());
        if any_cs && self.resolved_stopping_horizon() < self.policy.horizon {
            return Err(Error::ConfigError(format!(
                "stopping_horizon {} is shorter than the horizon {}",
                self.resolved_stopping_horizon(),
                self.policy.horizon
            )));
        }
        for spec in &self.methods {
            if spec.contextual {
                if !matches!(spec.method, Method::Ci | Method::AsymptoticCs) {
                    return Err(Error::ConfigError(format!(
                        "method `{}` is not available on the residualized path",
                        spec.method.label()
                    )));
                }
                if !matches!(self.estimand, Estimand::Contrast(_, _)) {
                    return Err(Error::ConfigError(
                        "contextual scoring requires a contrast estimand".into(),
                    ));
                }
            }
            if matches!(spec.method, Method::ExactCs | Method::GammaMixCs) {
                self.cs.require_m()?;
            }
        }
        match self.estimand {
            Estimand::Arm(w) => {
                if w.index() >= self.dgp.arm_count() {
                    return Err(Error::ConfigError(format!(
                        "estimand arm {w} exceeds arm count {}",
                        self.dgp.arm_count()
                    )));
                }
            }
            Estimand::Contrast(w, wp) => {
                let k = self.dgp.arm_count();
                if w.index() >= k || wp.index() >= k {
                    return Err(Error::ConfigError(format!(
                        "estimand contrast ({w}, {wp}) exceeds arm count {k}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Aggregates for one method over all replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub estimand: String,
    pub coverage: f64,
    pub coverage_se: f64,
    pub mean_width: f64,
    pub stop_mean: Option<f64>,
    pub stop_censored: u64,
    pub power: f64,
    pub n_reps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub seed: u64,
    pub n_reps: u64,
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, Copy)]
struct RepStats {
    covered: bool,
    width: f64,
    stopped: Option<u64>,
    power: bool,
}

enum Tracker {
    Arm(ArmEstimatorState),
    Contrast(ContrastEstimatorState),
    Residual(ResidualContrastState, LeastSquaresPredictor),
}

impl Tracker {
    fn new(spec: &MethodSpec, estimand: Estimand) -> Self {
        match (spec.contextual, estimand) {
            (true, Estimand::Contrast(w, wp)) => Tracker::Residual(
                ResidualContrastState::new(w, wp),
                LeastSquaresPredictor::default(),
            ),
            (false, Estimand::Arm(w)) => Tracker::Arm(ArmEstimatorState::new(w)),
            (false, Estimand::Contrast(w, wp)) => {
                Tracker::Contrast(ContrastEstimatorState::new(w, wp))
            }
            (true, Estimand::Arm(_)) => unreachable!("validated: contextual requires contrast"),
        }
    }

    fn update(&mut self, obs: &Observation) -> Result<()> {
        match self {
            Tracker::Arm(s) => s.update(obs),
            Tracker::Contrast(s) => s.update(obs),
            Tracker::Residual(s, predictor) => {
                let y_hat = predictor.predict(obs.context.as_deref())?;
                s.update(obs, y_hat)?;
                predictor.observe(obs.context.as_deref(), obs.reward)
            }
        }
    }

    fn center_and_s(&self) -> Result<(f64, f64)> {
        match self {
            Tracker::Arm(s) => Ok((s.q_hat()?, s.s())),
            Tracker::Contrast(s) => Ok((s.tau_hat()?, s.s_contrast())),
            Tracker::Residual(s, _) => Ok((s.tau_hat()?, s.s_residual())),
        }
    }
}

fn true_value(truth: &TruthTrack, t: u64, estimand: Estimand) -> Result<f64> {
    match estimand {
        Estimand::Arm(w) => truth.true_q(t, w),
        Estimand::Contrast(w, wp) => truth.true_tau(t, w, wp),
    }
}

/// Whether the method's set at round `t` contains `value`. For the gamma
/// mixture this is a single statistic evaluation, not a root find.
fn contains_value(
    method: Method,
    t: u64,
    center: f64,
    s: f64,
    cfg: &CsConfig,
    value: f64,
) -> Result<bool> {
    match method {
        Method::GammaMixCs => gamma_mixture::covers(t, center, s, cfg, value),
        Method::Ci => Ok((center - value).abs() <= ci_half_width(s, t, cfg.alpha)?),
        Method::ExactCs => {
            Ok((center - value).abs()
                <= exact_cs_half_width(s, t, cfg.alpha, cfg.require_m()?)?)
        }
        Method::AsymptoticCs => {
            Ok((center - value).abs()
                <= asymptotic_cs_half_width(s, t, cfg.alpha, cfg.eta)?)
        }
    }
}

fn score_method(
    log: &ObservationLog,
    truth: &TruthTrack,
    spec: &MethodSpec,
    estimand: Estimand,
    cs: &CsConfig,
    horizon: u64,
    check_from: u64,
) -> Result<RepStats> {
    let mut tracker = Tracker::new(spec, estimand);
    let mut covered = true;
    let mut stopped = None;
    let mut width = f64::NAN;
    let mut power = false;
    let is_cs = spec.method.is_sequence();
    for obs in log.observations() {
        tracker.update(obs)?;
        let t = obs.t;
        // CI methods are scored only at the reporting horizon.
        if !is_cs && t != horizon {
            continue;
        }
        let (center, s) = tracker.center_and_s()?;
        if is_cs {
            if t > check_from && t <= horizon && covered {
                let truth_t = true_value(truth, t, estimand)?;
                covered = contains_value(spec.method, t, center, s, cs, truth_t)?;
            }
            if stopped.is_none() && !contains_value(spec.method, t, center, s, cs, 0.0)? {
                stopped = Some(t);
            }
        }
        if t == horizon {
            let interval = interval_at(spec.method, t, center, s, cs)?;
            width = 2.0 * interval.half_width;
            power = !interval.contains(0.0);
            if !is_cs {
                covered = interval.contains(true_value(truth, t, estimand)?);
            }
        }
    }
    Ok(RepStats {
        covered,
        width,
        stopped,
        power,
    })
}

fn run_rep(cfg: &McConfig, rep: u64, rounds: u64) -> Result<Vec<RepStats>> {
    let mut dgp_rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    dgp_rng.set_stream(2 * rep);
    let mut policy_rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    policy_rng.set_stream(2 * rep + 1);
    let (log, truth) = run_trajectory(&cfg.dgp, &cfg.policy, rounds, &mut dgp_rng, &mut policy_rng)?;
    cfg.methods
        .iter()
        .map(|spec| {
            score_method(
                &log,
                &truth,
                spec,
                cfg.estimand,
                &cfg.cs,
                cfg.policy.horizon,
                cfg.cs_check_from,
            )
        })
        .collect()
}

/// Runs the full replicated study and aggregates the four reported metrics
/// per method. Deterministic in `(seed, n_reps)` regardless of thread count.
pub fn run_monte_carlo(cfg: &McConfig) -> Result<MonteCarloReport> {
    cfg.validate()?;
    let any_cs = cfg.methods.iter().any(|m| m.method.is_sequence());
    let rounds = if any_cs {
        cfg.resolved_stopping_horizon()
    } else {
        cfg.policy.horizon
    };
    let per_rep: Vec<Vec<RepStats>> = (0..cfg.n_reps)
        .into_par_iter()
        .map(|rep| run_rep(cfg, rep, rounds))
        .collect::<Result<Vec<_>>>()?;

    let n = cfg.n_reps as f64;
    let rows = cfg
        .methods
        .iter()
        .enumerate()
        .map(|(idx, spec)| {
            let stats: Vec<&RepStats> = per_rep.iter().map(|r| &r[idx]).collect();
            let coverage = stats.iter().filter(|s| s.covered).count() as f64 / n;
            let coverage_se = (coverage * (1.0 - coverage) / n).sqrt();
            let mean_width = stats.iter().map(|s| s.width).sum::<f64>() / n;
            let stop_times: Vec<u64> = stats.iter().filter_map(|s| s.stopped).collect();
            let stop_censored = if spec.method.is_sequence() {
                cfg.n_reps - stop_times.len() as u64
            } else {
                0
            };
            let stop_mean = if stop_times.is_empty() {
                None
            } else {
                Some(stop_times.iter().sum::<u64>() as f64 / stop_times.len() as f64)
            };
            let power = stats.iter().filter(|s| s.power).count() as f64 / n;
            ReportRow {
                method: spec.label(),
                estimand: cfg.estimand.to_string(),
                coverage,
                coverage_se,
                mean_width,
                stop_mean: if spec.method.is_sequence() { stop_mean } else { None },
                stop_censored,
                power,
                n_reps: cfg.n_reps,
            }
        })
        .collect();

    Ok(MonteCarloReport {
        seed: cfg.seed,
        n_reps: cfg.n_reps,
        rows,
    })
}

/// One grid point of the robustness sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoSweepRow {
    pub rho: f64,
    pub coverage: f64,
    pub coverage_se: f64,
}

/// Coverage of the fixed-time CI for `Q_T(0)` under the AR(1) process as
/// the autocorrelation varies (with the context effect switched off).
pub fn rho_sweep(base: &McConfig, grid: &[f64]) -> Result<Vec<RhoSweepRow>> {
    let DgpVariant::Ar1Context {
        mu, x_bernoulli_p, ..
    } = &base.dgp.variant
    else {
        return Err(Error::ConfigError(
            "rho sweep requires the AR(1) context process".into(),
        ));
    };
    let mut rows = Vec::with_capacity(grid.len());
    for (i, &rho) in grid.iter().enumerate() {
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::ConfigError(format!(
                "rho grid values must lie in [0, 1), got {rho}"
            )));
        }
        let cfg = McConfig {
            dgp: DgpSpec {
                variant: DgpVariant::Ar1Context {
                    rho_ar: rho,
                    beta: 0.0,
                    mu: mu.clone(),
                    x_bernoulli_p: *x_bernoulli_p,
                },
            },
            policy: base.policy,
            cs: base.cs,
            methods: vec![MethodSpec::plain(Method::Ci)],
            estimand: Estimand::Arm(ArmId(0)),
            n_reps: base.n_reps,
            seed: base.seed.wrapping_add(i as u64),
            stopping_horizon: Some(base.policy.horizon),
            cs_check_from: base.cs_check_from,
        };
        let report = run_monte_carlo(&cfg)?;
        rows.push(RhoSweepRow {
            rho,
            coverage: report.rows[0].coverage,
            coverage_se: report.rows[0].coverage_se,
        });
    }
    Ok(rows)
}
