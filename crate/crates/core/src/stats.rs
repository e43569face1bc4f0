//! Small descriptive and goodness-of-fit helpers shared by the diagnostics.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Type-7 quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of empty data");
    let h = (n - 1) as f64 * prob.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sorted(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

pub fn quantile(x: &[f64], prob: f64) -> f64 {
    quantile_sorted(&sorted(x), prob)
}

pub fn median(x: &[f64]) -> f64 {
    quantile(x, 0.5)
}

/// Survival function of the Kolmogorov distribution, `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.18 {
        // theta-function form converges fast for small x
        let pi2 = std::f64::consts::PI.powi(2);
        let s: f64 = (1..=20)
            .map(|k| {
                let m = (2 * k - 1) as f64;
                (-m * m * pi2 / (8.0 * x * x)).exp()
            })
            .sum();
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * s).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=20)
            .map(|k| {
                let k = k as f64;
                let sign = if k as i64 % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * k * k * x * x).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
pub fn ks_one_sample(x: &[f64], cdf: impl Fn(f64) -> f64) -> TestResult {
    let s = sorted(x);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in s.iter().enumerate() {
        let f = cdf(v);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let en = n.sqrt();
    TestResult { statistic: d, p_value: kolmogorov_sf((en + 0.12 + 0.11 / en) * d) }
}

/// Two-sample Kolmogorov-Smirnov test (asymptotic p-value; conservative under ties).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> TestResult {
    let (a, b) = (sorted(a), sorted(b));
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = a[i].min(b[j]);
        while i < n && a[i] <= v {
            i += 1;
        }
        while j < m && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    TestResult { statistic: d, p_value: kolmogorov_sf((en + 0.12 + 0.11 / en) * d) }
}

/// Two-sided normal tail probability of `z`.
pub fn two_sided_p(z: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    2.0 * n.sf(z.abs())
}

/// Welch z-test for equal means of two independent samples.
pub fn mean_z_test(a: &[f64], b: &[f64]) -> TestResult {
    let se = (variance(a) / a.len() as f64 + variance(b) / b.len() as f64).sqrt();
    let z = if se > 0.0 { (mean(a) - mean(b)) / se } else { 0.0 };
    TestResult { statistic: z, p_value: two_sided_p(z) }
}

/// Batch-means t-test of the mean of an autocorrelated series against `mu`.
pub fn batch_means_t_test(x: &[f64], mu: f64, batches: usize) -> TestResult {
    let size = x.len() / batches;
    let means: Vec<f64> = x.chunks_exact(size.max(1)).take(batches).map(mean).collect();
    let se = (variance(&means) / means.len() as f64).sqrt();
    let t = if se > 0.0 { (mean(&means) - mu) / se } else { 0.0 };
    let dist = StudentsT::new(0.0, 1.0, (means.len() - 1) as f64).expect("batches >= 2");
    TestResult { statistic: t, p_value: 2.0 * dist.sf(t.abs()) }
}

/// z-test of a sample proportion against a known probability.
pub fn proportion_z_test(successes: usize, n: usize, p0: f64) -> TestResult {
    let phat = successes as f64 / n as f64;
    let se = (p0 * (1.0 - p0) / n as f64).sqrt();
    let z = if se > 0.0 { (phat - p0) / se } else { 0.0 };
    TestResult { statistic: z, p_value: two_sided_p(z) }
}
