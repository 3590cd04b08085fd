//! Small statistics helpers shared by the Monte Carlo estimators.

use serde::{Deserialize, Serialize};

/// Two-sided 95% standard normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Sample mean with a normal-approximation 95% confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub n: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub half_width: f64,
    pub low: f64,
    pub high: f64,
}

impl MeanCi {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return MeanCi {
                n,
                mean: f64::NAN,
                std_dev: f64::NAN,
                half_width: f64::NAN,
                low: f64::NAN,
                high: f64::NAN,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let std_dev = var.sqrt();
        let half_width = Z95 * std_dev / (n as f64).sqrt();
        MeanCi {
            n,
            mean,
            std_dev,
            half_width,
            low: mean - half_width,
            high: mean + half_width,
        }
    }

    /// Interval for `mean / d`.
    pub fn scaled(&self, d: f64) -> MeanCi {
        MeanCi {
            n: self.n,
            mean: self.mean / d,
            std_dev: self.std_dev / d,
            half_width: self.half_width / d,
            low: self.low / d,
            high: self.high / d,
        }
    }
}

/// Ordinary least squares fit `y = slope * x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn least_squares(xs: &[f64], ys: &[f64]) -> LineFit {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r_squared = if sxx > 0.0 && syy > 0.0 {
        sxy * sxy / (sxx * syy)
    } else {
        0.0
    };
    LineFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    }
}

/// Runs `f(i)` for `i in 0..n` and returns the results in index order.
/// Parallel when the `parallel` feature is enabled.
pub fn map_replications<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sample_has_zero_width() {
        let ci = MeanCi::from_samples(&[3.0; 10]);
        assert_eq!(ci.mean, 3.0);
        assert_eq!(ci.half_width, 0.0);
    }

    #[test]
    fn known_interval() {
        let ci = MeanCi::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert!((ci.mean - 2.5).abs() < 1e-15);
        // sample sd = sqrt(5/3)
        let hw = Z95 * (5.0f64 / 3.0).sqrt() / 2.0;
        assert!((ci.half_width - hw).abs() < 1e-12);
    }

    #[test]
    fn exact_line() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 1.0).collect();
        let fit = least_squares(&xs, &ys);
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!((fit.intercept + 1.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn replications_keep_order() {
        let v = map_replications(100, |i| i * i);
        assert_eq!(v, (0..100).map(|i| i * i).collect::<Vec<_>>());
    }
}
