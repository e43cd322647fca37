//! Special functions backing the interval constructors: inverse normal
//! quantile, Kummer's confluent hypergeometric function specialized to a
//! first parameter of 1, the truncated-gamma mixture normalizer, and the
//! lower branch of the Lambert W function.

use crate::error::{Error, Result};

const TERM_CAP: usize = 1_000_000;
const SERIES_RTOL: f64 = 1e-12;

/// Standard normal density.
fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal CDF via the complementary error function.
fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Inverse standard normal CDF.
///
/// Acklam's rational approximation (absolute error ~1.15e-9) refined by one
/// Halley step on the normal CDF, giving roughly full double precision.
pub fn inv_normal_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::DomainError(format!(
            "inverse normal CDF requires p in (0, 1), got {p}"
        )));
    }

    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    // One Halley refinement on Phi(x) - p = 0.
    let e = normal_cdf(x) - p;
    let u = e / normal_pdf(x);
    Ok(x - u / (1.0 + x * u / 2.0))
}

/// Kummer's confluent hypergeometric function `1F1(1, b, z)` for `b > 0`.
///
/// With unit first parameter the series collapses to `sum_k z^k / (b)_k`,
/// all terms positive for `z >= 0`. For negative `z` the direct series
/// alternates, so moderate arguments go through the Kummer transform
/// `1F1(1, b, z) = e^z 1F1(b-1, b, -z)` (again a positive-term series) and
/// deeply negative arguments use the large-|z| asymptotic expansion.
pub fn kummer_1f1_a1(b: f64, z: f64) -> Result<f64> {
    if !(b > 0.0) {
        return Err(Error::DomainError(format!(
            "1F1(1, b, z) requires b > 0, got b={b}"
        )));
    }
    if z == 0.0 {
        return Ok(1.0);
    }
    if z > 0.0 {
        // Direct series: term_{k+1} = term_k * z / (b + k).
        let mut term = 1.0f64;
        let mut sum = 1.0f64;
        for k in 0..TERM_CAP {
            term *= z / (b + k as f64);
            sum += term;
            if sum.is_infinite() {
                // Monotone overflow: the true value exceeds f64 range.
                return Ok(f64::INFINITY);
            }
            if term < SERIES_RTOL * sum && (k as f64) > z - b {
                return Ok(sum);
            }
        }
        Err(Error::NonConvergence(format!(
            "1F1(1, {b}, {z}) exceeded {TERM_CAP} terms"
        )))
    } else if z > -50.0 {
        // Kummer transform; the transformed series has positive terms.
        let zp = -z;
        let mut term = 1.0f64;
        let mut sum = 1.0f64;
        for k in 0..TERM_CAP {
            let kf = k as f64;
            term *= (b - 1.0 + kf) / (b + kf) * zp / (kf + 1.0);
            sum += term;
            if term < SERIES_RTOL * sum && kf > zp {
                return Ok(z.exp() * sum);
            }
        }
        Err(Error::NonConvergence(format!(
            "1F1(1, {b}, {z}) transform exceeded {TERM_CAP} terms"
        )))
    } else {
        // Asymptotic expansion for z -> -inf:
        //   1F1(1, b, z) ~ ((b-1)/(-z)) * sum_k (2-b)_k / (-z)^k,
        // truncated at the smallest term.
        let zp = -z;
        let mut term = 1.0f64;
        let mut sum = 1.0f64;
        let mut prev = f64::INFINITY;
        for k in 0..1000usize {
            let kf = k as f64;
            let next = term * (2.0 - b + kf) / zp;
            if next.abs() >= prev.abs() || next.abs() < SERIES_RTOL * sum.abs() {
                break;
            }
            prev = next;
            term = next;
            sum += term;
        }
        Ok((b - 1.0) / zp * sum)
    }
}

/// Lower incomplete gamma function `gamma(a, x)` via the regularized series.
fn lower_incomplete_gamma(a: f64, x: f64) -> Result<f64> {
    debug_assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return Ok(0.0);
    }
    // gamma(a, x) = x^a e^{-x} sum_{n>=0} x^n / (a (a+1) ... (a+n)).
    let mut term = 1.0 / a;
    let mut sum = term;
    for n in 0..TERM_CAP {
        term *= x / (a + n as f64 + 1.0);
        sum += term;
        // Terms shrink geometrically once n > x, so running to machine
        // precision is cheap and keeps the normalizer fully accurate.
        if term < f64::EPSILON * sum {
            let log_scale = a * x.ln() - x;
            return Ok(sum * log_scale.exp());
        }
    }
    Err(Error::NonConvergence(format!(
        "lower incomplete gamma({a}, {x}) exceeded {TERM_CAP} terms"
    )))
}

/// Normalizer of the truncated gamma mixing density: `Gamma(rho) -
/// Gamma(rho, rho)`, i.e. the lower incomplete gamma function at cutoff
/// `rho`.
pub fn trunc_gamma_norm(rho: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::DomainError(format!(
            "truncated-gamma normalizer requires rho > 0, got {rho}"
        )));
    }
    lower_incomplete_gamma(rho, rho)
}

/// Lower branch `W_{-1}` of the Lambert W function on `[-1/e, 0)`.
///
/// Halley iteration on `w e^w = x`; residual accurate to ~1e-14.
pub fn lambert_w_minus1(x: f64) -> Result<f64> {
    let branch_point = -(-1.0f64).exp();
    if !(x >= branch_point && x < 0.0) {
        return Err(Error::DomainError(format!(
            "W_{{-1}} requires x in [-1/e, 0), got {x}"
        )));
    }
    if x == branch_point {
        return Ok(-1.0);
    }

    // Initial guess: series around the branch point for x near -1/e,
    // log-log approximation for x near 0^-.
    let mut w = if x > -0.25 {
        let l1 = (-x).ln();
        let l2 = (-l1).ln();
        l1 - l2 + l2 / l1
    } else {
        let p = -(2.0 * (1.0 + std::f64::consts::E * x)).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    };
    if w > -1.0 {
        w = -1.0 - 1e-12;
    }

    for _ in 0..60 {
        let ew = w.exp();
        let f = w * ew - x;
        if f == 0.0 {
            break;
        }
        let fp = ew * (1.0 + w);
        let fpp = ew * (2.0 + w);
        let delta = f / (fp - f * fpp / (2.0 * fp));
        let next = w - delta;
        // Stay on the lower branch.
        let next = if next >= -1.0 { (w - 1.0) / 2.0 - 0.5 } else { next };
        if (next - w).abs() <= 1e-15 * w.abs() {
            w = next;
            break;
        }
        w = next;
    }
    Ok(w)
}

/// Closed-form tuning of the asymptotic-CS parameter: the value of `eta`
/// minimizing the (variance-free) sequence width at round `t_star`.
pub fn tune_eta(alpha: f64, t_star: u64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::DomainError(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if t_star == 0 {
        return Err(Error::DomainError("t_star must be at least 1".into()));
    }
    let arg = -alpha * alpha * std::f64::consts::E;
    let w = lambert_w_minus1(arg)?;
    Ok(((-w - 1.0) / t_star as f64).sqrt())
}
