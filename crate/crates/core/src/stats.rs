//! Small numerical helpers: Gaussian densities, moments, and the
//! Kolmogorov–Smirnov test used to check distributional claims.

use statrs::function::erf::erfc;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Log-density of `N(mean, variance)` at `x`.
#[inline]
pub fn normal_log_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let z = x - mean;
    -0.5 * z * z / variance - 0.5 * variance.ln() - LN_SQRT_2PI
}

#[inline]
pub fn normal_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    normal_log_pdf(x, mean, variance).exp()
}

/// CDF of `N(mean, variance)` at `x`.
pub fn normal_cdf(x: f64, mean: f64, variance: f64) -> f64 {
    0.5 * erfc(-(x - mean) / (2.0 * variance).sqrt())
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Median of a slice; `NaN` entries are not allowed, `+inf` is.
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        let (a, b) = (v[n / 2 - 1], v[n / 2]);
        if a == b {
            a
        } else {
            0.5 * (a + b)
        }
    }
}

// ── Affine Gaussian regression ──────────────────────────────────────────

/// Maximum-likelihood fit of `y ~ N(intercept + slopes·x, variance)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineGaussianFit {
    pub intercept: f64,
    pub slopes: Vec<f64>,
    /// Mean squared residual (the MLE of the variance).
    pub variance: f64,
}

fn standardise(column: impl Iterator<Item = f64> + Clone, n: f64) -> (f64, f64) {
    let shift = column.clone().sum::<f64>() / n;
    let var = column.map(|v| (v - shift) * (v - shift)).sum::<f64>() / n;
    let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
    (shift, scale)
}

/// Gaussian negative log-likelihood minimised by gradient descent.
///
/// With a constant variance the likelihood profiles out: the mean map
/// minimises squared error (solved by full-batch descent on standardised
/// features with step `1/(p+1)`, which is always stable), and the variance
/// is the mean squared residual. Requires at least one row.
pub fn fit_affine_gaussian(
    features: &[Vec<f64>],
    targets: &[f64],
    max_iterations: usize,
) -> AffineGaussianFit {
    let n = targets.len();
    let p = features.first().map(Vec::len).unwrap_or(0);
    let nf = n as f64;
    let cols: Vec<(f64, f64)> = (0..p)
        .map(|j| standardise(features.iter().map(move |x| x[j]), nf))
        .collect();
    let (y_shift, y_scale) = standardise(targets.iter().copied(), nf);
    let z: Vec<Vec<f64>> = features
        .iter()
        .map(|x| x.iter().zip(&cols).map(|(v, (m, s))| (v - m) / s).collect())
        .collect();
    let y: Vec<f64> = targets.iter().map(|t| (t - y_shift) / y_scale).collect();

    // Standardised targets have mean zero, so the intercept stays at zero.
    let mut beta = vec![0.0; p];
    let step = 1.0 / (p as f64 + 1.0);
    let mut grad = vec![0.0; p];
    for _ in 0..max_iterations {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (zi, yi) in z.iter().zip(&y) {
            let resid = zi.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() - yi;
            for (g, a) in grad.iter_mut().zip(zi) {
                *g += resid * a;
            }
        }
        let mut largest: f64 = 0.0;
        for (b, g) in beta.iter_mut().zip(&grad) {
            let g = g / nf;
            largest = largest.max(g.abs());
            *b -= step * g;
        }
        if largest < 1e-13 {
            break;
        }
    }

    let slopes: Vec<f64> = beta
        .iter()
        .zip(&cols)
        .map(|(b, (_, s))| b * y_scale / s)
        .collect();
    let intercept = y_shift
        - slopes
            .iter()
            .zip(&cols)
            .map(|(b, (m, _))| b * m)
            .sum::<f64>();
    let variance = features
        .iter()
        .zip(targets)
        .map(|(x, t)| {
            let r = t - intercept - slopes.iter().zip(x).map(|(b, v)| b * v).sum::<f64>();
            r * r
        })
        .sum::<f64>()
        / nf;
    AffineGaussianFit {
        intercept,
        slopes,
        variance,
    }
}

/// Complementary Kolmogorov distribution `Q(λ) = 2 Σ (-1)^{k-1} e^{-2k²λ²}`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = sign * (-2.0 * kf * kf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Result of a Kolmogorov–Smirnov test.
#[derive(Debug, Clone, Copy)]
pub struct KsOutcome {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample KS test with the asymptotic p-value (Stephens' small-sample
/// correction on the effective size).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsOutcome {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(|p, q| p.total_cmp(q));
    y.sort_by(|p, q| p.total_cmp(q));
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let sq = ne.sqrt();
    KsOutcome {
        statistic: d,
        p_value: kolmogorov_q((sq + 0.12 + 0.11 / sq) * d),
    }
}

/// One-sample KS test against a continuous CDF.
pub fn ks_one_sample(a: &[f64], cdf: impl Fn(f64) -> f64) -> KsOutcome {
    let mut x = a.to_vec();
    x.sort_by(|p, q| p.total_cmp(q));
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (i, v) in x.iter().enumerate() {
        let f = cdf(*v);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sq = n.sqrt();
    KsOutcome {
        statistic: d,
        p_value: kolmogorov_q((sq + 0.12 + 0.11 / sq) * d),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_cdf_values() {
        assert!((normal_cdf(0.0, 0.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.959_963_984_540_054, 0.0, 1.0) - 0.975).abs() < 1e-10);
        assert!((normal_cdf(2.0, 0.0, 4.0) - normal_cdf(1.0, 0.0, 1.0)).abs() < 1e-15);
    }

    #[test]
    fn normal_pdf_peak() {
        let peak = normal_pdf(0.0, 0.0, 4.0);
        assert!((peak - 1.0 / (2.0 * (2.0 * std::f64::consts::PI).sqrt())).abs() < 1e-15);
    }

    #[test]
    fn kolmogorov_tail_reference() {
        // Q(1.3581) ≈ 0.05 and Q(1.6276) ≈ 0.01.
        assert!((kolmogorov_q(1.3581) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_q(1.6276) - 0.01).abs() < 1e-3);
    }

    #[test]
    fn ks_identical_samples_do_not_reject() {
        let a: Vec<f64> = (0..500).map(|i| i as f64).collect();
        let out = ks_two_sample(&a, &a);
        assert_eq!(out.statistic, 0.0);
        assert!(out.p_value > 0.99);
    }

    #[test]
    fn ks_shifted_samples_reject() {
        let a: Vec<f64> = (0..500).map(|i| i as f64 / 500.0).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 0.5).collect();
        assert!(ks_two_sample(&a, &b).p_value < 1e-6);
    }

    #[test]
    fn median_handles_infinity() {
        assert_eq!(median(&[1.0, f64::INFINITY, 3.0]), 3.0);
        assert_eq!(median(&[f64::INFINITY, f64::INFINITY]), f64::INFINITY);
        assert_eq!(median(&[1.0, 2.0]), 1.5);
    }

    fn det3(m: [[f64; 3]; 3]) -> f64 {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    #[test]
    fn affine_fit_matches_normal_equations() {
        let mut rng = crate::rng::Rng::new(3);
        let n = 500;
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let s = rng.normal(0.0, 4.0);
                let a = rng.normal(s / 4.0, 4.0);
                vec![s, a]
            })
            .collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| 0.7 + v[0] - 2.0 * v[1] + rng.normal(0.0, 9.0))
            .collect();
        let fit = fit_affine_gaussian(&x, &y, 20_000);

        // Cramer's rule on the 3x3 normal equations.
        let mut g = [[0.0; 3]; 3];
        let mut b = [0.0; 3];
        for (v, t) in x.iter().zip(&y) {
            let row = [1.0, v[0], v[1]];
            for i in 0..3 {
                b[i] += row[i] * t;
                for j in 0..3 {
                    g[i][j] += row[i] * row[j];
                }
            }
        }
        let d = det3(g);
        let coef: Vec<f64> = (0..3)
            .map(|c| {
                let mut m = g;
                for i in 0..3 {
                    m[i][c] = b[i];
                }
                det3(m) / d
            })
            .collect();
        assert!((fit.intercept - coef[0]).abs() < 1e-9);
        assert!((fit.slopes[0] - coef[1]).abs() < 1e-9);
        assert!((fit.slopes[1] - coef[2]).abs() < 1e-9);
        assert!((fit.variance - 9.0).abs() < 1.5);
    }

    #[test]
    fn affine_fit_constant_columns() {
        let x = vec![vec![1.0], vec![1.0], vec![1.0]];
        let fit = fit_affine_gaussian(&x, &[2.0, 2.0, 2.0], 100);
        assert_eq!(
            (fit.intercept, fit.slopes[0], fit.variance),
            (2.0, 0.0, 0.0)
        );
    }
}
