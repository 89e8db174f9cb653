//! Trial aggregation and Welch's t-test.
//!
//! Repeated trials of one benchmark cell are summarized by [`aggregate`];
//! two cells are compared with [`welch`], which declares a winner only when
//! the two-sided p-value clears the significance level. The t-distribution
//! CDF is evaluated through the regularized incomplete beta function with a
//! continued-fraction expansion; [`integrate_t_two_sided_p`] is a slow
//! quadrature reference used by the test suites to cross-check it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("cannot aggregate an empty sample set")]
    EmptyInput,
    #[error("sample contains a non-finite value at index {0}")]
    NonFinite(usize),
    #[error("need at least 2 samples per side, got {a} and {b}")]
    TooFewSamples { a: usize, b: usize },
    #[error("alpha must lie in (0, 1), got {0}")]
    BadAlpha(f64),
}

/// Summary of one metric over repeated trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator); 0 when n = 1.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

/// Outcome of a two-sided Welch comparison at significance `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    ABetter,
    BBetter,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub t_statistic: f64,
    /// Welch–Satterthwaite degrees of freedom (real-valued).
    pub degrees_of_freedom: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    pub alpha: f64,
    pub verdict: Verdict,
}

pub fn aggregate(metric: &str, values: &[f64]) -> Result<Aggregate, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite(i));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n == 1 {
        0.0
    } else {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (n - 1) as f64).sqrt()
    };
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(Aggregate { metric: metric.to_string(), n, mean, std, min, max })
}

/// Welch's two-sample t-test, two-sided.
///
/// The degenerate case where both samples have zero variance and equal means
/// carries no information: it reports t = 0, p = 1, inconclusive. Zero
/// variance with distinct means yields an infinite statistic and p = 0.
pub fn welch(a: &[f64], b: &[f64], alpha: f64) -> Result<TestResult, StatsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatsError::TooFewSamples { a: a.len(), b: b.len() });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::BadAlpha(alpha));
    }
    for (i, v) in a.iter().chain(b.iter()).enumerate() {
        if !v.is_finite() {
            return Err(StatsError::NonFinite(i));
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mean_a = a.iter().sum::<f64>() / na;
    let mean_b = b.iter().sum::<f64>() / nb;
    let var_a = a.iter().map(|v| (v - mean_a) * (v - mean_a)).sum::<f64>() / (na - 1.0);
    let var_b = b.iter().map(|v| (v - mean_b) * (v - mean_b)).sum::<f64>() / (nb - 1.0);

    let sa = var_a / na;
    let sb = var_b / nb;
    let se2 = sa + sb;

    let (t, df, p) = if se2 == 0.0 {
        // Both variances are exactly zero; fall back to pooled df for report.
        let df = na + nb - 2.0;
        if mean_a == mean_b {
            (0.0, df, 1.0)
        } else {
            let t = if mean_a > mean_b { f64::INFINITY } else { f64::NEG_INFINITY };
            (t, df, 0.0)
        }
    } else {
        let t = (mean_a - mean_b) / se2.sqrt();
        let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
        (t, df, t_two_sided_p(t, df))
    };

    let verdict = if p < alpha {
        if t > 0.0 {
            Verdict::ABetter
        } else {
            Verdict::BBetter
        }
    } else {
        Verdict::Inconclusive
    };
    Ok(TestResult { t_statistic: t, degrees_of_freedom: df, p_value: p, alpha, verdict })
}

/// Two-sided p-value of a t statistic: P(|T_df| ≥ |t|) = I_x(df/2, 1/2) with
/// x = df/(df + t²).
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    assert!(df > 0.0, "degrees of freedom must be positive");
    if t == 0.0 {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    reg_inc_beta(0.5 * df, 0.5, x)
}

/// CDF of the t-distribution with `df` degrees of freedom.
pub fn t_cdf(t: f64, df: f64) -> f64 {
    let half_p = 0.5 * t_two_sided_p(t, df);
    if t >= 0.0 {
        1.0 - half_p
    } else {
        half_p
    }
}

/// Regularized incomplete beta function I_x(a, b).
///
/// Continued-fraction evaluation (modified Lentz), switched through the
/// symmetry I_x(a, b) = 1 − I_{1−x}(b, a) so the fraction always converges
/// fast.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "beta parameters must be positive");
    assert!((0.0..=1.0).contains(&x), "x must lie in [0, 1]");
    if x == 0.0 {
        return 0.0;
    }
    if x == 1.0 {
        return 1.0;
    }
    // ln(1 − x) via ln_1p to avoid cancellation for small x.
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (-x).ln_1p();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Continued fraction for the incomplete beta (Lentz's method).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 400;
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        // Even step.
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        // Odd step.
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            return h;
        }
    }
    // Convergence is fast for all df this crate produces; reaching here means
    // parameters far outside the tested envelope.
    h
}

/// ln Γ(x) by the Lanczos approximation (g = 7, 9 terms), |rel err| < 1e-13.
pub fn ln_gamma(x: f64) -> f64 {
    assert!(x > 0.0, "ln_gamma defined for positive arguments only");
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection: Γ(x)Γ(1−x) = π / sin(πx).
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Slow reference for the two-sided t-test p-value: adaptive Simpson
/// quadrature of the t density over [0, |t|]. Used by the test suites to
/// cross-check the continued-fraction path; orders of magnitude slower.
pub fn integrate_t_two_sided_p(t: f64, df: f64, tol: f64) -> f64 {
    assert!(df > 0.0 && tol > 0.0);
    let t = t.abs();
    if t == 0.0 {
        return 1.0;
    }
    // Density normalization 1 / (√df · B(1/2, df/2)).
    let ln_norm = -(0.5 * df.ln() + ln_gamma(0.5) + ln_gamma(0.5 * df) - ln_gamma(0.5 * (df + 1.0)));
    let pdf = |x: f64| (ln_norm - 0.5 * (df + 1.0) * (x * x / df).ln_1p()).exp();
    let integral = adaptive_simpson(&pdf, 0.0, t, tol, 64);
    (1.0 - 2.0 * integral).max(0.0)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}
