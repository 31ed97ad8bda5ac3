//! Goodness-of-fit statistics used by the diagnostic suites.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Result of a two-sample Kolmogorov-Smirnov comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsTest {
    /// Supremum distance between the two empirical CDFs.
    pub statistic: f64,
    /// Asymptotic critical value at the requested level.
    pub critical: f64,
}

impl KsTest {
    pub fn passes(&self) -> bool {
        self.statistic <= self.critical
    }
}

/// Two-sample Kolmogorov-Smirnov test at significance `level`, using the
/// asymptotic critical value `sqrt(-ln(level/2)/2) * sqrt((n+m)/(n m))`.
pub fn ks_two_sample(a: &[f64], b: &[f64], level: f64) -> KsTest {
    assert!(!a.is_empty() && !b.is_empty(), "KS test needs two non-empty samples");
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let t = a[i].min(b[j]);
        while i < n && a[i] <= t {
            i += 1;
        }
        while j < m && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let (nf, mf) = (n as f64, m as f64);
    let c = (-(level / 2.0).ln() / 2.0).sqrt();
    KsTest {
        statistic: d,
        critical: c * ((nf + mf) / (nf * mf)).sqrt(),
    }
}

/// Result of a Pearson chi-square goodness-of-fit test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub critical: f64,
}

impl ChiSquareTest {
    pub fn passes(&self) -> bool {
        self.statistic <= self.critical
    }
}

/// Pearson chi-square test of observed counts against probabilities.
///
/// Cells with zero expected probability must have zero counts; they are
/// dropped from the statistic and the degrees of freedom. A positive count in
/// such a cell makes the statistic infinite.
pub fn chi_square_gof(counts: &[u64], probabilities: &[f64], level: f64) -> ChiSquareTest {
    assert_eq!(counts.len(), probabilities.len());
    let total: u64 = counts.iter().sum();
    let n = total as f64;
    let mut statistic = 0.0;
    let mut cells = 0usize;
    for (&c, &p) in counts.iter().zip(probabilities) {
        if p <= 0.0 {
            if c > 0 {
                statistic = f64::INFINITY;
            }
            continue;
        }
        cells += 1;
        let expected = n * p;
        let diff = c as f64 - expected;
        statistic += diff * diff / expected;
    }
    let degrees_of_freedom = cells.saturating_sub(1).max(1);
    let critical = ChiSquared::new(degrees_of_freedom as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(1.0 - level);
    ChiSquareTest {
        statistic,
        degrees_of_freedom,
        critical,
    }
}

/// Sample mean and unbiased sample variance.
pub fn mean_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let (mx, _) = mean_variance(x);
    let (my, _) = mean_variance(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
