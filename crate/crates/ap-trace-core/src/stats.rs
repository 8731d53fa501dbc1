//! Small statistics toolbox: online moments, weighted log-log fits,
//! quantiles, and the geometric-tail estimator.

use serde::{Deserialize, Serialize};

/// Welford accumulator for mean and variance.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn add(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Welford) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n1 = self.n as f64;
        let n2 = other.n as f64;
        let d = other.mean - self.mean;
        let n = n1 + n2;
        self.mean += d * n2 / n;
        self.m2 += other.m2 + d * d * n1 * n2 / n;
        self.n = other.n + self.n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample variance (n - 1 denominator).
    pub fn variance(&self) -> f64 {
        if self.n > 1 {
            self.m2 / (self.n - 1) as f64
        } else {
            0.0
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        if self.n > 0 {
            (self.variance() / self.n as f64).sqrt()
        } else {
            f64::NAN
        }
    }
}

/// Weighted least-squares line fit y = a + b x; weights are 1/var(y_i).
/// Returns (slope, intercept, slope_stderr).
pub fn wls_line(points: &[(f64, f64, f64)]) -> (f64, f64, f64) {
    assert!(points.len() >= 2, "need at least two points to fit");
    let mut sw = 0.0;
    let mut swx = 0.0;
    let mut swy = 0.0;
    for &(x, y, w) in points {
        sw += w;
        swx += w * x;
        swy += w * y;
    }
    let xbar = swx / sw;
    let ybar = swy / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(x, y, w) in points {
        sxx += w * (x - xbar) * (x - xbar);
        sxy += w * (x - xbar) * (y - ybar);
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let slope_stderr = (1.0 / sxx).sqrt();
    (slope, intercept, slope_stderr)
}

/// Log-log slope of (x, y, y_stderr) data: fits log2 y against log2 x with
/// delta-method weights. Points with y <= 0 are rejected.
pub fn loglog_slope(points: &[(f64, f64, f64)]) -> Option<(f64, f64)> {
    if points.len() < 2 || points.iter().any(|&(x, y, _)| x <= 0.0 || y <= 0.0) {
        return None;
    }
    let ln2 = std::f64::consts::LN_2;
    let pts: Vec<(f64, f64, f64)> = points
        .iter()
        .map(|&(x, y, se)| {
            let lx = x.ln() / ln2;
            let ly = y.ln() / ln2;
            // var(log2 y) ~ (se / y)^2 / ln(2)^2; floor keeps weights finite
            let v = ((se / y) / ln2).powi(2).max(1e-12);
            (lx, ly, 1.0 / v)
        })
        .collect();
    let (slope, _, se) = wls_line(&pts);
    Some((slope, se))
}

/// Quantile of a sorted slice by linear interpolation.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let q = q.clamp(0.0, 1.0);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = pos - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}

/// Maximum-likelihood geometric ratio for counts M >= 1 with
/// P(M >= m) = rho^(m-1): rho_hat = 1 - 1/mean(M), with a delta-method
/// standard error.
pub fn geometric_ratio(counts: &[u32]) -> Option<(f64, f64)> {
    if counts.is_empty() {
        return None;
    }
    let mut w = Welford::default();
    for &m in counts {
        w.add(m as f64);
    }
    let mbar = w.mean();
    if mbar <= 0.0 {
        return None;
    }
    let rho = 1.0 - 1.0 / mbar;
    let se = w.stderr() / (mbar * mbar);
    Some((rho, se))
}

/// Bernoulli proportion and its standard error.
pub fn proportion(hits: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (f64::NAN, f64::NAN);
    }
    let p = hits as f64 / trials as f64;
    let se = (p * (1.0 - p) / trials as f64).sqrt();
    (p, se)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welford_basics_and_merge() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut all = Welford::default();
        for &x in &xs {
            all.add(x);
        }
        let mut a = Welford::default();
        let mut b = Welford::default();
        for &x in &xs[..3] {
            a.add(x);
        }
        for &x in &xs[3..] {
            b.add(x);
        }
        a.merge(&b);
        assert!((a.mean() - all.mean()).abs() < 1e-12);
        assert!((a.variance() - all.variance()).abs() < 1e-12);
        assert!((all.mean() - 3.5).abs() < 1e-12);
        assert!((all.variance() - 3.5).abs() < 1e-12);
    }

    #[test]
    fn synthetic_slopes() {
        // y = 1/x -> slope -1
        let pts: Vec<(f64, f64, f64)> = [0.125, 0.0625, 0.03125, 0.015625]
            .iter()
            .map(|&e| (e, 1.0 / e, 0.01 / e))
            .collect();
        let (s, _) = loglog_slope(&pts).unwrap();
        assert!((s + 1.0).abs() < 1e-9, "slope {s}");
        // constant series -> slope 0
        let flat: Vec<(f64, f64, f64)> = [0.125, 0.0625, 0.03125]
            .iter()
            .map(|&e| (e, 7.0, 0.1))
            .collect();
        let (s0, _) = loglog_slope(&flat).unwrap();
        assert!(s0.abs() < 1e-9);
    }

    #[test]
    fn geometric_fit_on_exact_data() {
        // counts following P(M >= m) = (1/2)^(m-1) exactly in proportion
        let mut counts = Vec::new();
        for (m, reps) in [(1u32, 512usize), (2, 256), (3, 128), (4, 64), (5, 32), (6, 16)] {
            counts.extend(std::iter::repeat(m).take(reps));
        }
        let (rho, se) = geometric_ratio(&counts).unwrap();
        assert!((rho - 0.5).abs() < 3.0 * se + 0.02, "rho {rho} se {se}");
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert!((quantile_sorted(&v, 0.5) - 2.5).abs() < 1e-12);
    }
}
