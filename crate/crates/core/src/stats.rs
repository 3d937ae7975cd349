//! Small statistics toolkit: two-sample tests and time-series error bars.

use crate::error::{LabError, Result};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation with the `n - 1` denominator.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(LabError::SampleTooSmall { got: a.len().min(b.len()), needed: 1 });
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.total_cmp(y));
    b.sort_by(|x, y| x.total_cmp(y));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Asymptotic p-value of a two-sample KS statistic.
pub fn ks_p_value(d: f64, na: usize, nb: usize) -> f64 {
    let ne = (na * nb) as f64 / (na + nb) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = 2.0 * (-1f64).powi(k - 1) * (-2.0 * kf * kf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn thin(xs: &[Vec<f64>], cap: usize) -> Vec<&Vec<f64>> {
    if xs.len() <= cap {
        return xs.iter().collect();
    }
    let step = xs.len() as f64 / cap as f64;
    (0..cap).map(|k| &xs[(k as f64 * step) as usize]).collect()
}

/// Energy distance `2E|X-Y| - E|X-X'| - E|Y-Y'|` between two multivariate
/// samples. Samples larger than `cap` are thinned deterministically.
pub fn energy_distance(a: &[Vec<f64>], b: &[Vec<f64>], cap: usize) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(LabError::SampleTooSmall { got: a.len().min(b.len()), needed: 2 });
    }
    let a = thin(a, cap);
    let b = thin(b, cap);
    let cross: f64 = a.iter().map(|x| b.iter().map(|y| dist(x, y)).sum::<f64>()).sum::<f64>()
        / (a.len() * b.len()) as f64;
    let within = |s: &[&Vec<f64>]| {
        let mut t = 0.0;
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                t += dist(s[i], s[j]);
            }
        }
        2.0 * t / (s.len() * s.len()) as f64
    };
    Ok(2.0 * cross - within(&a) - within(&b))
}

/// Half-width of a 95% confidence interval for the mean of a correlated
/// series, from the means of `blocks` disjoint consecutive blocks.
pub fn batch_means_halfwidth(xs: &[f64], blocks: usize) -> f64 {
    if blocks < 2 || xs.len() < blocks {
        return f64::INFINITY;
    }
    let size = xs.len() / blocks;
    let means: Vec<f64> = (0..blocks).map(|b| mean(&xs[b * size..(b + 1) * size])).collect();
    student_t975(blocks - 1) * std_dev(&means) / (blocks as f64).sqrt()
}

/// Two-sided 95% Student t quantile for small degrees of freedom.
pub fn student_t975(dof: usize) -> f64 {
    const TABLE: [f64; 30] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179,
        2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064,
        2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
    ];
    match dof {
        0 => f64::INFINITY,
        d if d <= 30 => TABLE[d - 1],
        _ => 1.96,
    }
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let mx = mean(x);
    let my = mean(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn ks_identical_and_disjoint() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_two_sample(&a, &a).unwrap(), 0.0);
        assert_eq!(ks_two_sample(&a, &[10.0, 11.0]).unwrap(), 1.0);
    }

    #[test]
    fn ks_matches_quadratic_oracle() {
        let mut r = RngStream::new(2, 0);
        let a: Vec<f64> = (0..200).map(|_| r.uniform()).collect();
        let b: Vec<f64> = (0..150).map(|_| r.uniform().powf(1.3)).collect();
        let ecdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
        let oracle = a
            .iter()
            .chain(&b)
            .map(|&x| (ecdf(&a, x) - ecdf(&b, x)).abs())
            .fold(0.0, f64::max);
        assert!((ks_two_sample(&a, &b).unwrap() - oracle).abs() < 1e-15);
    }

    #[test]
    fn ks_p_value_is_large_for_same_law() {
        let mut r = RngStream::new(4, 0);
        let a: Vec<f64> = (0..2000).map(|_| r.uniform()).collect();
        let b: Vec<f64> = (0..2000).map(|_| r.uniform()).collect();
        let d = ks_two_sample(&a, &b).unwrap();
        assert!(ks_p_value(d, 2000, 2000) > 0.001);
        assert!(ks_p_value(0.2, 2000, 2000) < 1e-10);
    }

    #[test]
    fn energy_distance_separates_shifted_samples() {
        let mut r = RngStream::new(6, 0);
        let a: Vec<Vec<f64>> = (0..300).map(|_| vec![r.uniform(), r.uniform()]).collect();
        let b: Vec<Vec<f64>> = (0..300).map(|_| vec![r.uniform(), r.uniform()]).collect();
        let c: Vec<Vec<f64>> = (0..300).map(|_| vec![r.uniform() + 1.0, r.uniform()]).collect();
        let same = energy_distance(&a, &b, 1000).unwrap();
        let diff = energy_distance(&a, &c, 1000).unwrap();
        assert!(same.abs() < 0.05);
        assert!(diff > 0.5);
    }

    #[test]
    fn batch_means_of_iid_noise() {
        let mut r = RngStream::new(8, 0);
        let xs: Vec<f64> = (0..10_000).map(|_| r.uniform()).collect();
        let hw = batch_means_halfwidth(&xs, 10);
        // Standard error of the mean of U(0,1) is 0.2887 / 100.
        assert!(hw > 0.002 && hw < 0.012, "{hw}");
    }

    #[test]
    fn linear_fit_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let (m, c) = linear_fit(&x, &y);
        assert!((m - 2.0).abs() < 1e-14 && (c + 1.0).abs() < 1e-14);
    }
}
