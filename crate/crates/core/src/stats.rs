//! Ensemble accumulators and the few statistical tests the checks rely on.
//!
//! Accumulators keep raw power sums so that partial results from independent
//! workers can be merged in a fixed order; merging is plain addition and is
//! therefore bit-reproducible for a fixed merge order.

/// Mean and variance of a scalar sample.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Scalar {
    pub n: usize,
    sum: f64,
    sum_sq: f64,
}

impl Scalar {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, other: &Scalar) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let n = self.n as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }

    pub fn stderr(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }
}

impl FromIterator<f64> for Scalar {
    fn from_iter<T: IntoIterator<Item = f64>>(iter: T) -> Self {
        let mut acc = Scalar::default();
        for x in iter {
            acc.push(x);
        }
        acc
    }
}

/// Estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0 }
    }

    /// `|value - target| <= k stderr`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.stderr
    }
}

/// Second-moment accumulator for a pair of ensemble variables `(x, p)`:
/// variances and covariance with delta-method standard errors.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnsembleStats {
    n: usize,
    // x, p, x2, p2, xp, x3, p3, x4, p4, x2p, xp2, x2p2
    s: [f64; 12],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMoments {
    pub mean_x: Estimate,
    pub mean_p: Estimate,
    pub var_x: Estimate,
    pub var_p: Estimate,
    pub cov_xp: Estimate,
}

impl EnsembleStats {
    pub fn push(&mut self, x: f64, p: f64) {
        self.n += 1;
        let (x2, p2) = (x * x, p * p);
        let terms = [
            x,
            p,
            x2,
            p2,
            x * p,
            x2 * x,
            p2 * p,
            x2 * x2,
            p2 * p2,
            x2 * p,
            x * p2,
            x2 * p2,
        ];
        for (s, t) in self.s.iter_mut().zip(terms) {
            *s += t;
        }
    }

    pub fn merge(&mut self, other: &EnsembleStats) {
        self.n += other.n;
        for (s, o) in self.s.iter_mut().zip(other.s) {
            *s += o;
        }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn moments(&self) -> PairMoments {
        let n = self.n as f64;
        let e: Vec<f64> = self.s.iter().map(|s| s / n).collect();
        let [ex, ep, ex2, ep2, exp, ex3, ep3, ex4, ep4, ex2p, exp2, ex2p2] =
            <[f64; 12]>::try_from(e).expect("twelve sums");
        let (a, b) = (ex, ep);
        let var_x = ex2 - a * a;
        let var_p = ep2 - b * b;
        let cov = exp - a * b;
        let m4x = ex4 - 4.0 * a * ex3 + 6.0 * a * a * ex2 - 3.0 * a.powi(4);
        let m4p = ep4 - 4.0 * b * ep3 + 6.0 * b * b * ep2 - 3.0 * b.powi(4);
        let m22 = ex2p2 - 2.0 * b * ex2p - 2.0 * a * exp2 + b * b * ex2 + 4.0 * a * b * exp
            + a * a * ep2
            - 3.0 * a * a * b * b;
        let bessel = n / (n - 1.0);
        let se = |m: f64| (m.max(0.0) / n).sqrt();
        PairMoments {
            mean_x: Estimate {
                value: a,
                stderr: se(var_x * bessel),
            },
            mean_p: Estimate {
                value: b,
                stderr: se(var_p * bessel),
            },
            var_x: Estimate {
                value: var_x * bessel,
                stderr: se(m4x - var_x * var_x),
            },
            var_p: Estimate {
                value: var_p * bessel,
                stderr: se(m4p - var_p * var_p),
            },
            cov_xp: Estimate {
                value: cov * bessel,
                stderr: se(m22 - cov * cov),
            },
        }
    }
}

/// Ordinary least-squares line `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> LineFit {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 2);
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_stderr = if x.len() > 2 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (b - intercept - slope * a).powi(2))
            .sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    LineFit {
        slope,
        intercept,
        slope_stderr,
    }
}

/// Kolmogorov-Smirnov test of `samples` against the unit exponential.
/// Returns `(D, p-value)`.
pub fn ks_exponential(samples: &[f64]) -> (f64, f64) {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in sorted.iter().enumerate() {
        let cdf = 1.0 - (-x.max(0.0)).exp();
        d = d.max((i as f64 + 1.0) / n - cdf).max(cdf - i as f64 / n);
    }
    (d, kolmogorov_survival((n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d))
}

/// `P(K > t)` for the Kolmogorov distribution.
fn kolmogorov_survival(t: f64) -> f64 {
    if t < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let j = j as f64;
        let term = 2.0 * (-1f64).powf(j - 1.0) * (-2.0 * j * j * t * t).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseStream;

    #[test]
    fn scalar_moments() {
        let acc: Scalar = [1.0, 2.0, 3.0, 4.0].into_iter().collect();
        assert_eq!(acc.mean(), 2.5);
        assert!((acc.variance() - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn pair_moments_of_correlated_gaussians() {
        let mut s = NoiseStream::new(1, 0);
        let mut acc = EnsembleStats::default();
        let n = 200_000;
        for _ in 0..n {
            let (a, b) = (s.standard_normal(), s.standard_normal());
            acc.push(2.0 * a, a + b);
        }
        let m = acc.moments();
        assert!(m.var_x.within(4.0, 4.0));
        assert!(m.var_p.within(2.0, 4.0));
        assert!(m.cov_xp.within(2.0, 4.0));
        // Gaussian: se(var) = var sqrt(2/n), se(cov) = sqrt((vx vp + c^2)/n).
        let n = n as f64;
        assert!((m.var_x.stderr / (4.0 * (2.0 / n).sqrt()) - 1.0).abs() < 0.05);
        assert!((m.cov_xp.stderr / ((8.0 + 4.0) / n).sqrt() - 1.0).abs() < 0.05);
    }

    #[test]
    fn merge_equals_single_pass() {
        let mut s = NoiseStream::new(2, 0);
        let data: Vec<(f64, f64)> = (0..100).map(|_| (s.standard_normal(), s.uniform())).collect();
        let mut whole = EnsembleStats::default();
        data.iter().for_each(|&(x, p)| whole.push(x, p));
        let mut left = EnsembleStats::default();
        let mut right = EnsembleStats::default();
        data[..40].iter().for_each(|&(x, p)| left.push(x, p));
        data[40..].iter().for_each(|&(x, p)| right.push(x, p));
        left.merge(&right);
        let (a, b) = (whole.moments(), left.moments());
        assert!((a.var_x.value - b.var_x.value).abs() < 1e-12);
        assert!((a.cov_xp.value - b.cov_xp.value).abs() < 1e-12);
    }

    #[test]
    fn line_fit_recovers_slope() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 1.5 - 0.5 * v).collect();
        let fit = fit_line(&x, &y);
        assert!((fit.slope + 0.5).abs() < 1e-14);
        assert!((fit.intercept - 1.5).abs() < 1e-14);
    }

    #[test]
    fn ks_accepts_exponential_rejects_uniform() {
        let mut s = NoiseStream::new(3, 0);
        let exp: Vec<f64> = (0..1000).map(|_| s.exponential()).collect();
        assert!(ks_exponential(&exp).1 > 0.01);
        let uni: Vec<f64> = (0..1000).map(|_| 2.0 * s.uniform()).collect();
        assert!(ks_exponential(&uni).1 < 0.01);
    }
}
