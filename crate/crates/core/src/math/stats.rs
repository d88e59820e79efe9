//! Small-sample statistics used by diagnostics and the test suites:
//! log-sum-exp, moments, Kolmogorov-Smirnov tests and a chi-square
//! goodness-of-fit helper.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// log(sum(exp(v))), stable against overflow; -inf when all entries are -inf.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Sample mean and unbiased variance.
pub fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (mean, ss / (n - 1) as f64)
}

/// Kolmogorov distribution tail Q_KS(lambda) = 2 sum (-1)^{k-1} e^{-2 k^2 lambda^2}.
fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = sign * (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov test; returns (statistic, approximate p).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a: Vec<f64> = a.to_vec();
    let mut b: Vec<f64> = b.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n as f64 * m as f64) / (n as f64 + m as f64);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, kolmogorov_tail(lambda))
}

/// One-sample KS test against a CDF; returns (statistic, approximate p).
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> (f64, f64) {
    let mut s: Vec<f64> = samples.to_vec();
    s.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let n = s.len();
    let mut d: f64 = 0.0;
    for (i, x) in s.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((f - i as f64 / n as f64).abs());
        d = d.max(((i + 1) as f64 / n as f64 - f).abs());
    }
    let ne = n as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, kolmogorov_tail(lambda))
}

/// Chi-square goodness-of-fit p-value from observed counts and cell
/// probabilities (cells with expected count below 5 should be merged by the
/// caller).
pub fn chi_square_p(observed: &[u64], probs: &[f64], n: u64) -> f64 {
    assert_eq!(observed.len(), probs.len());
    let mut stat = 0.0;
    for (o, p) in observed.iter().zip(probs) {
        let e = p * n as f64;
        stat += (*o as f64 - e) * (*o as f64 - e) / e;
    }
    let dof = (observed.len() - 1) as f64;
    let chi = ChiSquared::new(dof).unwrap();
    1.0 - chi.cdf(stat)
}
