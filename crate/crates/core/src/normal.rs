//! Standard normal distribution helpers.
//!
//! The CDF goes through `erfc` rather than `erf` so the lower tail keeps
//! relative precision: `Φ(x) = erfc(-x/√2) / 2`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Standard normal cumulative distribution function.
#[inline]
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal density.
#[inline]
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// CDF of `N(mean, std²)` evaluated at `x`.
#[inline]
pub fn normal_cdf(x: f64, mean: f64, std: f64) -> f64 {
    std_normal_cdf((x - mean) / std)
}

/// Density of `N(mean, std²)` evaluated at `x`.
#[inline]
pub fn normal_pdf(x: f64, mean: f64, std: f64) -> f64 {
    std_normal_pdf((x - mean) / std) / std
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent erf: Maclaurin series for |x| < 3, Laplace continued fraction
    /// for erfc beyond.
    fn oracle_cdf(x: f64) -> f64 {
        let z = x.abs() / std::f64::consts::SQRT_2;
        let upper_tail = if z < 3.0 {
            // erf(z) = 2/√π Σ (-1)^n z^(2n+1) / (n! (2n+1))
            let mut term = z;
            let mut sum = z;
            for n in 1..200 {
                term *= -z * z / n as f64;
                let add = term / (2 * n + 1) as f64;
                sum += add;
                if add.abs() < 1e-18 && n > 30 {
                    break;
                }
            }
            let erf = 2.0 / PI.sqrt() * sum;
            0.5 * (1.0 - erf)
        } else {
            // erfc(z) = exp(-z²)/√π · 1/(z + 1/2/(z + 1/(z + 3/2/(z + ...))))
            let mut frac = z;
            for k in (1..120).rev() {
                frac = z + (k as f64 / 2.0) / frac;
            }
            0.5 * (-z * z).exp() / PI.sqrt() / frac
        };
        if x >= 0.0 {
            1.0 - upper_tail
        } else {
            upper_tail
        }
    }

    #[test]
    fn known_values() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        assert!((std_normal_cdf(40.0) - 1.0).abs() <= 1e-12);
        assert!(std_normal_cdf(-40.0).abs() <= 1e-12);
        let v = std_normal_cdf(1.0);
        assert!((v - oracle_cdf(1.0)).abs() < 1e-12, "{v}");
        assert!((v - 0.841_344_746_068_542_9).abs() < 1e-12);
    }

    #[test]
    fn matches_series_oracle_on_grid() {
        let mut x = -9.0;
        while x <= 9.0 {
            let err = (std_normal_cdf(x) - oracle_cdf(x)).abs();
            assert!(err <= 1e-10, "x={x} err={err}");
            x += 0.01;
        }
    }

    #[test]
    fn monotone_and_symmetric() {
        let mut prev = 0.0;
        let mut x = -12.0;
        while x <= 12.0 {
            let v = std_normal_cdf(x);
            assert!(v >= prev);
            assert!((std_normal_cdf(-x) - (1.0 - v)).abs() <= 1e-12);
            prev = v;
            x += 0.003;
        }
    }

    #[test]
    fn pdf_integrates_to_one() {
        let h = 1e-3;
        let total: f64 = (-12_000..=12_000)
            .map(|i| std_normal_pdf(i as f64 * h) * h)
            .sum();
        assert!((total - 1.0).abs() < 1e-10);
        assert!((normal_pdf(1.0, 1.0, 2.0) - std_normal_pdf(0.0) / 2.0).abs() < 1e-16);
    }
}
