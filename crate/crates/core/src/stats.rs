//! Statistical acceptance helpers shared by the verification harness and the
//! test suites: Kolmogorov–Smirnov and chi-square tests, z-scores, and
//! batch-mean errors for correlated chains.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Two-sided KS statistic between a sample and a reference CDF.
pub fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    d
}

/// Two-sample KS statistic; both slices must be sorted.
pub fn ks_statistic_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let (mut i, mut j) = (0usize, 0usize);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic KS p-value (Kolmogorov distribution tail) for effective sample
/// size `n_eff`; for two samples use `n_eff = na nb / (na + nb)`.
pub fn ks_pvalue(d: f64, n_eff: f64) -> f64 {
    let lambda = (n_eff.sqrt() + 0.12 + 0.11 / n_eff.sqrt()) * d;
    if lambda < 0.2 {
        // the alternating series is numerically useless here; Q(0.2) differs
        // from 1 by < 1e-8
        return 1.0;
    }
    let mut p = 0.0;
    for j in 1..=100 {
        let term = 2.0 * (-1.0f64).powi(j - 1) * (-2.0 * (j as f64 * lambda).powi(2)).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

/// Pearson chi-square p-value of observed counts against expected counts.
pub fn chi_square_pvalue(observed: &[f64], expected: &[f64]) -> f64 {
    assert_eq!(observed.len(), expected.len());
    let mut stat = 0.0;
    let mut dof = 0usize;
    for (&o, &e) in observed.iter().zip(expected) {
        if e > 0.0 {
            stat += (o - e) * (o - e) / e;
            dof += 1;
        }
    }
    if dof <= 1 {
        return 1.0;
    }
    let chi = ChiSquared::new((dof - 1) as f64).expect("positive dof");
    1.0 - chi.cdf(stat)
}

/// Two-sample chi-square p-value on category counts (homogeneity test).
pub fn chi_square_two_sample_pvalue(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let na: f64 = a.iter().sum();
    let nb: f64 = b.iter().sum();
    let mut stat = 0.0;
    let mut dof = 0usize;
    for (&oa, &ob) in a.iter().zip(b) {
        let tot = oa + ob;
        if tot > 0.0 {
            let ea = tot * na / (na + nb);
            let eb = tot * nb / (na + nb);
            stat += (oa - ea) * (oa - ea) / ea + (ob - eb) * (ob - eb) / eb;
            dof += 1;
        }
    }
    if dof <= 1 {
        return 1.0;
    }
    let chi = ChiSquared::new((dof - 1) as f64).expect("positive dof");
    1.0 - chi.cdf(stat)
}

/// Sample mean and (i.i.d.) standard error.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ks_pvalue_reference_points() {
        // Kolmogorov distribution: Q(0.828) ~ 0.5 at large n (lambda = d sqrt(n))
        let p = ks_pvalue(0.0828, 100.0 * 100.0 / 200.0 * 2.0);
        assert!(p > 0.3 && p < 0.7, "p = {p}");
        assert!(ks_pvalue(0.5, 1000.0) < 1e-10);
        assert!(ks_pvalue(1e-6, 1000.0) > 0.999);
    }

    #[test]
    fn ks_uniform_sample_accepts_uniform_cdf() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut xs: Vec<f64> = (0..20_000).map(|_| rng.gen_range(0.0..1.0)).collect();
        xs.sort_by(|a, b| a.total_cmp(b));
        let d = ks_statistic(&xs, |x| x.clamp(0.0, 1.0));
        assert!(ks_pvalue(d, xs.len() as f64) > 0.01);
        let d_bad = ks_statistic(&xs, |x| (x * x).clamp(0.0, 1.0));
        assert!(ks_pvalue(d_bad, xs.len() as f64) < 1e-10);
    }

    #[test]
    fn two_sample_ks_same_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut a: Vec<f64> = (0..5_000).map(|_| rng.gen_range(0.0f64..1.0).powi(2)).collect();
        let mut b: Vec<f64> = (0..5_000).map(|_| rng.gen_range(0.0f64..1.0).powi(2)).collect();
        a.sort_by(|x, y| x.total_cmp(y));
        b.sort_by(|x, y| x.total_cmp(y));
        let d = ks_statistic_two_sample(&a, &b);
        let n_eff = 5_000.0 * 5_000.0 / 10_000.0;
        assert!(ks_pvalue(d, n_eff) > 0.01);
    }

    #[test]
    fn chi_square_obvious_cases() {
        let p = chi_square_pvalue(&[100.0, 100.0], &[100.0, 100.0]);
        assert_relative_eq!(p, 1.0, epsilon = 1e-12);
        let p = chi_square_pvalue(&[150.0, 50.0], &[100.0, 100.0]);
        assert!(p < 1e-10);
        let p = chi_square_two_sample_pvalue(&[100.0, 100.0], &[95.0, 108.0]);
        assert!(p > 0.05);
    }

    #[test]
    fn mean_stderr_shrinks() {
        let xs = vec![1.0, 2.0, 3.0, 4.0];
        let (m, se) = mean_stderr(&xs);
        assert_relative_eq!(m, 2.5);
        assert_relative_eq!(se, (5.0f64 / 3.0 / 4.0).sqrt(), max_relative = 1e-12);
    }
}
