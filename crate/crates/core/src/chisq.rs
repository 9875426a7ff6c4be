//! Chi-square calibration of the EL statistic.

use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF};

fn dist(df: usize) -> ChiSquared {
    ChiSquared::new(df as f64).expect("degrees of freedom must be positive")
}

/// Upper-tail probability `P(X > stat)` for `X ~ chi2(df)`; `+inf` maps to 0.
pub fn upper_tail(stat: f64, df: usize) -> f64 {
    if stat.is_infinite() {
        return 0.0;
    }
    if stat <= 0.0 {
        return 1.0;
    }
    dist(df).sf(stat).clamp(0.0, 1.0)
}

/// The `prob` quantile of `chi2(df)`, polished with Newton steps on the CDF.
pub fn quantile(prob: f64, df: usize) -> f64 {
    assert!(prob > 0.0 && prob < 1.0, "probability must lie in (0, 1)");
    let d = dist(df);
    let mut x = d.inverse_cdf(prob);
    for _ in 0..8 {
        let f = d.pdf(x);
        if !(f > 0.0) {
            break;
        }
        let step = (d.cdf(x) - prob) / f;
        let next = (x - step).max(x * 0.5);
        if (next - x).abs() <= 4.0 * f64::EPSILON * x {
            x = next;
            break;
        }
        x = next;
    }
    x
}

/// Rejection threshold for a test at significance `level`.
pub fn critical_value(level: f64, df: usize) -> f64 {
    quantile(1.0 - level, df)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_quantiles() {
        // Reference values from scipy.stats.chi2.ppf.
        assert!((critical_value(0.05, 1) - 3.841458820694124).abs() < 1e-12);
        assert!((critical_value(0.05, 3) - 7.814727903251178).abs() < 1e-12);
        assert!((critical_value(0.05, 7) - 14.067140449340169).abs() < 1e-11);
        assert!((critical_value(0.01, 2) - 9.210340371976182).abs() < 1e-11);
    }

    #[test]
    fn tail_edges() {
        assert_eq!(upper_tail(f64::INFINITY, 2), 0.0);
        assert_eq!(upper_tail(0.0, 2), 1.0);
        assert!((upper_tail(3.841458820694124, 1) - 0.05).abs() < 1e-12);
    }
}
