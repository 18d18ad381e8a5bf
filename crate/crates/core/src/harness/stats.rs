//! Goodness-of-fit and interval helpers for Monte-Carlo summaries.

use serde::Serialize;
use statrs::distribution::{Beta, ContinuousCDF, Gamma};

use crate::error::{Error, Result};

/// Result of a Kolmogorov–Smirnov test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KsResult {
    /// Supremum distance between the CDFs.
    pub statistic: f64,
    /// Asymptotic p-value (Stephens' small-sample correction).
    pub p_value: f64,
    /// Effective sample size.
    pub effective_n: f64,
}

/// Kolmogorov survival function `Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn p_value(d: f64, n: f64) -> f64 {
    let sn = n.sqrt();
    kolmogorov_q((sn + 0.12 + 0.11 / sn) * d)
}

/// One-sample KS test of `sample` against a continuous `cdf`.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    if sample.is_empty() {
        return Err(Error::Domain("KS test needs a non-empty sample".into()));
    }
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let d = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    Ok(KsResult {
        statistic: d,
        p_value: p_value(d, n),
        effective_n: n,
    })
}

/// Two-sample KS test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Domain("KS test needs non-empty samples".into()));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n1, n2) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n1 - j as f64 / n2).abs());
    }
    let ne = n1 * n2 / (n1 + n2);
    Ok(KsResult {
        statistic: d,
        p_value: p_value(d, ne),
        effective_n: ne,
    })
}

/// Wilson score interval at 95% for `successes` out of `n`.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let nf = n as f64;
    let p = successes as f64 / nf;
    let denom = 1.0 + z * z / nf;
    let center = (p + z * z / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Sample mean and unbiased variance.
pub fn mean_variance(sample: &[f64]) -> (f64, f64) {
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let var = sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var)
}

/// Beta parameters matching a sample's first two moments.
pub fn beta_moment_match(sample: &[f64]) -> (f64, f64) {
    let (m, v) = mean_variance(sample);
    let common = m * (1.0 - m) / v - 1.0;
    (m * common, (1.0 - m) * common)
}

/// Analytic null distributions of the statistics that have one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Reference {
    /// `Beta(a, b)`.
    Beta { a: f64, b: f64 },
    /// `−ln(1 − B)` with `B ~ Beta(a, b)`: density `e^{−x} Beta(1 − e^{−x})`.
    LogBeta { a: f64, b: f64 },
    /// `Gamma(shape, rate)`.
    Gamma { shape: f64, rate: f64 },
    /// Every draw equals `value`.
    PointMass { value: f64 },
}

impl Reference {
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Reference::Beta { a, b } => {
                let d = Beta::new(a, b).expect("validated parameters");
                d.cdf(x.clamp(0.0, 1.0))
            }
            Reference::LogBeta { a, b } => {
                let d = Beta::new(a, b).expect("validated parameters");
                if x <= 0.0 {
                    0.0
                } else {
                    d.cdf(-(-x).exp_m1())
                }
            }
            Reference::Gamma { shape, rate } => {
                let d = Gamma::new(shape, rate).expect("validated parameters");
                if x <= 0.0 {
                    0.0
                } else {
                    d.cdf(x)
                }
            }
            Reference::PointMass { value } => {
                if x >= value {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Mean and variance.
    pub fn moments(&self) -> (f64, f64) {
        match *self {
            Reference::Beta { a, b } => {
                let s = a + b;
                (a / s, a * b / (s * s * (s + 1.0)))
            }
            Reference::Gamma { shape, rate } => (shape / rate, shape / (rate * rate)),
            Reference::PointMass { value } => (value, 0.0),
            Reference::LogBeta { a, b } => {
                // −ln(1−B) with 1−B ~ Beta(b, a): E = ψ(a+b) − ψ(b), Var = ψ'(b) − ψ'(a+b).
                use statrs::function::gamma::digamma;
                (digamma(a + b) - digamma(b), trigamma(b) - trigamma(a + b))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Reference::Beta { a, b } | Reference::LogBeta { a, b } => a > 0.0 && b > 0.0,
            Reference::Gamma { shape, rate } => shape > 0.0 && rate > 0.0,
            Reference::PointMass { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid reference distribution {self:?}")))
        }
    }
}

/// `ψ'(x)` by recurrence and asymptotic series.
fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    acc + 1.0 / x + x2 / 2.0 + (1.0 / x) * x2 * (1.0 / 6.0 - x2 * (1.0 / 30.0 - x2 * (1.0 / 42.0 - x2 / 30.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kolmogorov_tail_values() {
        // Q(1.3581) ≈ 0.05, Q(1.6276) ≈ 0.01.
        assert!((kolmogorov_q(1.3581) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_q(1.6276) - 0.01).abs() < 1e-3);
        assert_eq!(kolmogorov_q(0.0), 1.0);
    }

    #[test]
    fn wilson_contains_estimate() {
        let (lo, hi) = wilson_interval(100, 1000);
        assert!(lo < 0.1 && hi > 0.1);
        assert!((lo - 0.0829).abs() < 1e-3 && (hi - 0.1203).abs() < 1e-3);
        assert_eq!(wilson_interval(0, 0), (0.0, 1.0));
    }

    #[test]
    fn ks_uniform_grid_is_tight() {
        let x: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let r = ks_one_sample(&x, |v| v.clamp(0.0, 1.0)).unwrap();
        assert!(r.statistic <= 0.0005 + 1e-12);
        assert!(r.p_value > 0.99);
    }

    #[test]
    fn two_sample_identical_is_zero() {
        let x: Vec<f64> = (0..50).map(|i| i as f64).collect();
        assert_eq!(ks_two_sample(&x, &x).unwrap().statistic, 0.0);
    }

    #[test]
    fn trigamma_matches_known_values() {
        // ψ'(1) = π²/6, ψ'(1/2) = π²/2.
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((trigamma(1.0) - pi2 / 6.0).abs() < 1e-10);
        assert!((trigamma(0.5) - pi2 / 2.0).abs() < 1e-10);
    }

    #[test]
    fn log_beta_cdf_is_transformed_beta() {
        let r = Reference::LogBeta { a: 4.0, b: 28.0 };
        let b = Reference::Beta { a: 4.0, b: 28.0 };
        for x in [0.05, 0.1, 0.2, 0.5] {
            assert!((r.cdf(x) - b.cdf(1.0 - (-x as f64).exp())).abs() < 1e-14);
        }
    }
}
