//! Canonical data model for adaptively collected bandit data.
//!
//! A log stores, per round, the *full* propensity vector the policy used,
//! the chosen arm, the realized reward, and an optional context vector.
//! The full vector is kept because contrast estimators need the propensity
//! of both arms of a pair even when only one was pulled.
//!
//! On-disk format is JSON lines: a header record followed by one record per
//! observation (see [`serialize_log`] / [`parse_log`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the propensity-vector sum check. Wide enough to absorb
/// decimal round-trip noise, tight enough to catch real normalization bugs.
pub const PROPENSITY_SUM_TOL: f64 = 1e-9;

/// Index of an arm, in `{0, ..., K-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArmId(pub usize);

impl ArmId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl std::fmt::Display for ArmId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Full action-probability vector for one round. Every entry is strictly
/// inside (0, 1) and the entries sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PropensityVector {
    probs: Vec<f64>,
}

impl PropensityVector {
    /// Validates the probabilistic-assignment invariants and wraps the vector.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        Self::validate(&probs, 0)?;
        Ok(Self { probs })
    }

    fn validate(probs: &[f64], t: u64) -> Result<()> {
        if probs.len() < 2 {
            return Err(Error::PropensityViolation {
                t,
                detail: format!("need at least 2 arms, got {}", probs.len()),
            });
        }
        for (w, &p) in probs.iter().enumerate() {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::PropensityViolation {
                    t,
                    detail: format!("entry for arm {w} is {p}, must lie strictly in (0, 1)"),
                });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROPENSITY_SUM_TOL {
            return Err(Error::PropensityViolation {
                t,
                detail: format!("entries sum to {sum}, expected 1 within {PROPENSITY_SUM_TOL}"),
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, arm: ArmId) -> f64 {
        self.probs[arm.index()]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }
}

/// One logged round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// 1-based round index.
    pub t: u64,
    pub propensities: PropensityVector,
    pub action: ArmId,
    pub reward: f64,
    pub context: Option<Vec<f64>>,
}

/// Optional a-priori bounds declared for a log. Both are user-declared,
/// never inferred from the data: the exact confidence sequence requires
/// them to be fixed before the experiment starts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DeclaredBounds {
    /// Bound on |reward|.
    pub m: Option<f64>,
    /// Floor on every propensity entry.
    pub p_min: Option<f64>,
}

/// An ordered, validated sequence of observations from one experiment.
///
/// Immutable once built (single writer while appending); safe to share
/// read-only across concurrent analysis tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationLog {
    arm_count: usize,
    bounds: DeclaredBounds,
    observations: Vec<Observation>,
    context_dim: Option<usize>,
}

impl ObservationLog {
    pub fn new(arm_count: usize, bounds: DeclaredBounds) -> Result<Self> {
        if arm_count < 2 {
            return Err(Error::ConfigError(format!(
                "arm count must be at least 2, got {arm_count}"
            )));
        }
        if let Some(m) = bounds.m {
            if !(m > 0.0) {
                return Err(Error::ConfigError(format!("declared M must be positive, got {m}")));
            }
        }
        if let Some(p_min) = bounds.p_min {
            if !(p_min > 0.0 && p_min < 1.0) {
                return Err(Error::ConfigError(format!(
                    "declared p_min must lie in (0, 1), got {p_min}"
                )));
            }
        }
        Ok(Self {
            arm_count,
            bounds,
            observations: Vec::new(),
            context_dim: None,
        })
    }

    pub fn arm_count(&self) -> usize {
        self.arm_count
    }

    pub fn bounds(&self) -> DeclaredBounds {
        self.bounds
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    /// Appends one observation, re-verifying every type invariant:
    /// consecutive round index, matching dimensions, propensities strictly
    /// inside (0, 1) (and above any declared floor), reward within any
    /// declared bound.
    pub fn append_observation(&mut self, obs: Observation) -> Result<()> {
        let expected = self.observations.len() as u64 + 1;
        if obs.t != expected {
            return Err(Error::OrderViolation {
                expected,
                got: obs.t,
            });
        }
        PropensityVector::validate(obs.propensities.as_slice(), obs.t)?;
        if obs.propensities.len() != self.arm_count {
            return Err(Error::DimensionMismatch {
                expected: self.arm_count,
                got: obs.propensities.len(),
            });
        }
        if obs.action.index() >= self.arm_count {
            return Err(Error::OutOfRange(format!(
                "action {} at t={} exceeds arm count {}",
                obs.action, obs.t, self.arm_count
            )));
        }
        if let Some(p_min) = self.bounds.p_min {
            for (w, &p) in obs.propensities.as_slice().iter().enumerate() {
                if p < p_min {
                    return Err(Error::PropensityViolation {
                        t: obs.t,
                        detail: format!("entry for arm {w} is {p}, below declared p_min {p_min}"),
                    });
                }
            }
        }
        if let Some(m) = self.bounds.m {
            if obs.reward.abs() > m {
                return Err(Error::RewardBoundViolation {
                    t: obs.t,
                    reward: obs.reward,
                    bound: m,
                });
            }
        }
        if !obs.reward.is_finite() {
            return Err(Error::OutOfRange(format!(
                "reward at t={} is not finite",
                obs.t
            )));
        }
        match (&self.context_dim, &obs.context) {
            (None, Some(x)) => {
                if self.observations.is_empty() {
                    self.context_dim = Some(x.len());
                } else {
                    return Err(Error::DimensionMismatch {
                        expected: 0,
                        got: x.len(),
                    });
                }
            }
            (Some(d), Some(x)) if *d != x.len() => {
                return Err(Error::DimensionMismatch {
                    expected: *d,
                    got: x.len(),
                });
            }
            (Some(d), None) => {
                return Err(Error::DimensionMismatch {
                    expected: *d,
                    got: 0,
                });
            }
            _ => {}
        }
        self.observations.push(obs);
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// JSON-lines serialization
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct HeaderRecord {
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "M", skip_serializing_if = "Option::is_none")]
    m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p_min: Option<f64>,
}

#[derive(Serialize)]
struct RowRecord<'a> {
    t: u64,
    p: &'a [f64],
    a: usize,
    y: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    x: Option<&'a [f64]>,
}

#[derive(Deserialize)]
struct RawRow {
    t: Option<u64>,
    p: Option<Vec<f64>>,
    a: Option<usize>,
    y: Option<f64>,
    x: Option<Vec<f64>>,
}

/// Writes a log as UTF-8 JSON lines: header line then one record per round.
/// `serde_json` emits shortest round-trip float representations, so
/// `parse_log(serialize_log(log))` reproduces the log bit-for-bit.
pub fn serialize_log(log: &ObservationLog) -> Vec<u8> {
    let mut out = Vec::new();
    let header = HeaderRecord {
        k: log.arm_count,
        m: log.bounds.m,
        p_min: log.bounds.p_min,
    };
    out.extend_from_slice(serde_json::to_string(&header).expect("header serializes").as_bytes());
    out.push(b'\n');
    for obs in &log.observations {
        let row = RowRecord {
            t: obs.t,
            p: obs.propensities.as_slice(),
            a: obs.action.index(),
            y: obs.reward,
            x: obs.context.as_deref(),
        };
        out.extend_from_slice(serde_json::to_string(&row).expect("row serializes").as_bytes());
        out.push(b'\n');
    }
    out
}

/// Parses the JSON-lines format written by [`serialize_log`], re-running all
/// ingestion validation. Error messages carry 1-based line numbers.
pub fn parse_log(bytes: &[u8]) -> Result<ObservationLog> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::ParseError {
        line: 0,
        detail: format!("input is not valid UTF-8: {e}"),
    })?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (header_no, header_line) = lines.next().ok_or(Error::ParseError {
        line: 1,
        detail: "empty input, expected header line".into(),
    })?;
    let header: HeaderRecord =
        serde_json::from_str(header_line).map_err(|e| Error::ParseError {
            line: header_no + 1,
            detail: format!("bad header: {e}"),
        })?;
    let mut log = ObservationLog::new(
        header.k,
        DeclaredBounds {
            m: header.m,
            p_min: header.p_min,
        },
    )?;
    for (idx, line) in lines {
        let line_no = idx + 1;
        let raw: RawRow = serde_json::from_str(line).map_err(|e| Error::ParseError {
            line: line_no,
            detail: e.to_string(),
        })?;
        let missing = |field: &str| Error::SchemaError {
            line: line_no,
            field: field.into(),
        };
        let t = raw.t.ok_or_else(|| missing("t"))?;
        let p = raw.p.ok_or_else(|| missing("p"))?;
        let a = raw.a.ok_or_else(|| missing("a"))?;
        let y = raw.y.ok_or_else(|| missing("y"))?;
        let obs = Observation {
            t,
            propensities: PropensityVector::new(p).map_err(|e| match e {
                Error::PropensityViolation { detail, .. } => Error::PropensityViolation {
                    t: line_no as u64,
                    detail: format!("line {line_no}: {detail}"),
                },
                other => other,
            })?,
            action: ArmId(a),
            reward: y,
            context: raw.x,
        };
        log.append_observation(obs)?;
    }
    Ok(log)
}
