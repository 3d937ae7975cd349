//! Dirichlet improvability, its dynamical reformulation, logarithmic
//! densities along orbits, and the unipotent invariance diagnostic.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::exact::Dyadic;
use crate::flow::{curve_tangent, flow_matrix, top_row_unipotent, FlowSpec, OrbitTracker, PolynomialCurve};
use crate::lattice::{first_two_minima, node_budget, shortest_vector, NormKind, UnimodularBasis};
use crate::rng::RngStream;
use crate::stats::{batch_means_halfwidth, mean, std_dev};

/// Relative slack applied to every "at most mu" comparison so that boundary
/// cases are decided the same way by all code paths.
pub const BOUNDARY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ImprovabilityMethod {
    Dynamical,
    Direct,
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(LabError::InvalidParameter(format!("mu = {mu} outside (0, 1]")));
    }
    Ok(())
}

/// Whether `|p + q.xi| <= mu N^{-d}`, `max |q_i| <= mu N` has a nonzero
/// integer solution.
pub fn improvable_at(xi: &[f64], n: f64, mu: f64, method: ImprovabilityMethod) -> Result<bool> {
    check_mu(mu)?;
    if n < 1.0 || xi.is_empty() {
        return Err(LabError::InvalidParameter("need N >= 1 and d >= 1".into()));
    }
    match method {
        ImprovabilityMethod::Dynamical => {
            let d = xi.len();
            let t = n.ln();
            let a = flow_matrix(&FlowSpec::dirichlet_flow(d), t)?;
            let mut u = DMatrix::identity(d + 1, d + 1);
            for (j, &x) in xi.iter().enumerate() {
                u[(0, j + 1)] = x;
            }
            let b = UnimodularBasis::new(a * u)?;
            Ok(shortest_vector(&b, NormKind::Sup, Some(mu * (1.0 + BOUNDARY_SLACK)))?.is_some())
        }
        ImprovabilityMethod::Direct => improvable_direct(xi, n, mu),
    }
}

fn improvable_direct(xi: &[f64], n: f64, mu: f64) -> Result<bool> {
    let d = xi.len();
    let qmax = (mu * n * (1.0 + BOUNDARY_SLACK)).floor() as i64;
    let small = mu * n.powi(-(d as i32)) * (1.0 + BOUNDARY_SLACK);
    if small >= 1.0 {
        return Ok(true);
    }
    let count = (2 * qmax as u128 + 1).pow(d as u32);
    if count > node_budget() as u128 {
        return Err(LabError::EnumerationBudgetExceeded { budget: node_budget() });
    }
    // Half of the box suffices since (p, q) and (-p, -q) are both solutions.
    let mut q = vec![-qmax; d];
    q[0] = 0;
    loop {
        let first_nonzero = q.iter().find(|&&v| v != 0);
        if first_nonzero.is_some_and(|&v| v > 0) {
            let s: f64 = q.iter().zip(xi).map(|(&a, &x)| a as f64 * x).sum();
            if (s - s.round()).abs() <= small {
                return Ok(true);
            }
        }
        let mut i = d;
        loop {
            if i == 0 {
                return Ok(false);
            }
            i -= 1;
            q[i] += 1;
            if q[i] <= qmax {
                break;
            }
            q[i] = -qmax;
            if i == 0 {
                return Ok(false);
            }
        }
    }
}

/// Time average of the indicator of `X(mu)` with confidence information.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    /// Point estimate: final running average, or ensemble mean.
    pub mean: f64,
    /// Proxy for the lower density.
    pub lower: f64,
    /// Proxy for the upper density.
    pub upper: f64,
    pub n_samples: usize,
    pub ci_halfwidth: f64,
}

impl DensityEstimate {
    pub fn from_series(xs: &[f64]) -> Self {
        let n = xs.len();
        let mut run = Vec::with_capacity(n);
        let mut acc = 0.0;
        for (k, &x) in xs.iter().enumerate() {
            acc += x;
            run.push(acc / (k + 1) as f64);
        }
        let tail = &run[(n * 4) / 5..];
        let lower = tail.iter().cloned().fold(f64::INFINITY, f64::min);
        let upper = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let hw = batch_means_halfwidth(xs, 10);
        Self { mean: run[n - 1], lower, upper, n_samples: n, ci_halfwidth: hw }
    }
}

/// Indicator of `X(mu)`: some nonzero vector of sup norm at most `mu`.
pub fn in_x_mu(basis: &UnimodularBasis, mu: f64) -> Result<bool> {
    Ok(shortest_vector(basis, NormKind::Sup, Some(mu * (1.0 + BOUNDARY_SLACK)))?.is_some())
}

/// The `X(mu)` indicator along `a_t g_0 Z^{d+1}` on the grid
/// `t_min < k t_step <= t_max`.
pub fn indicator_series(
    mut tracker: OrbitTracker,
    mu: f64,
    t_min: f64,
    t_max: f64,
    t_step: f64,
) -> Result<Vec<f64>> {
    check_mu(mu)?;
    if t_step <= 0.0 || t_max <= t_min {
        return Err(LabError::InvalidParameter("need t_step > 0 and t_max > t_min".into()));
    }
    let k_max = (t_max / t_step + 1e-9).floor() as usize;
    let mut out = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let t = k as f64 * t_step;
        tracker.advance_mut(t - tracker.t())?;
        if t > t_min + 1e-12 {
            out.push(if in_x_mu(tracker.basis(), mu)? { 1.0 } else { 0.0 });
        }
    }
    if out.is_empty() {
        return Err(LabError::SampleTooSmall { got: 0, needed: 1 });
    }
    Ok(out)
}

/// Logarithmic density of `N` for which the improved inequalities are
/// solvable, estimated along the orbit of `u(xi)`.
pub fn log_density_profile(xi: &[Dyadic], mu: f64, t_max: f64, t_step: f64) -> Result<DensityEstimate> {
    let spec = FlowSpec::dirichlet_flow(xi.len());
    let tracker = OrbitTracker::new(spec, &top_row_unipotent(xi))?;
    Ok(DensityEstimate::from_series(&indicator_series(tracker, mu, 0.0, t_max, t_step)?))
}

/// Same as [`log_density_profile`] for the point `phi(s)` of a curve.
pub fn log_density_profile_on_curve(
    curve: &PolynomialCurve,
    s: &Dyadic,
    mu: f64,
    t_max: f64,
    t_step: f64,
) -> Result<DensityEstimate> {
    let spec = FlowSpec::dirichlet_flow(curve.dim() - 1);
    let tracker = OrbitTracker::from_curve(spec, curve, s)?;
    Ok(DensityEstimate::from_series(&indicator_series(tracker, mu, 0.0, t_max, t_step)?))
}

#[derive(Debug, Clone)]
pub enum EstimateMethod {
    CurveEnsemble(PolynomialCurve),
    LebesgueEnsemble,
    SiegelAsymptotic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleParams {
    pub samples: usize,
    pub t_max: f64,
    pub t_step: f64,
    pub seed: u64,
}

impl Default for EnsembleParams {
    fn default() -> Self {
        Self { samples: 64, t_max: 60.0, t_step: 0.05, seed: 1 }
    }
}

/// Riemann zeta at an integer `k >= 2`.
pub fn zeta(k: u32) -> f64 {
    let n = 1000u32;
    let kf = k as f64;
    let head: f64 = (1..n).map(|m| (m as f64).powf(-kf)).sum();
    let nf = n as f64;
    head + nf.powf(1.0 - kf) / (kf - 1.0) + 0.5 * nf.powf(-kf) + kf * nf.powf(-kf - 1.0) / 12.0
}

/// Per-sample density estimates of an ensemble, in sample order.
pub fn ensemble_profiles(
    d: usize,
    mu: f64,
    method: &EstimateMethod,
    params: &EnsembleParams,
) -> Result<Vec<(Vec<Dyadic>, DensityEstimate)>> {
    let spec = FlowSpec::dirichlet_flow(d);
    let bits = spec.bits_for_horizon(params.t_max);
    (0..params.samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(params.seed, i as u64);
            match method {
                EstimateMethod::CurveEnsemble(curve) => {
                    let s = Dyadic::random_unit(&mut rng, bits);
                    let e = log_density_profile_on_curve(curve, &s, mu, params.t_max, params.t_step)?;
                    Ok((vec![s], e))
                }
                EstimateMethod::LebesgueEnsemble => {
                    let bits = spec.bits_for_horizon_free(params.t_max, d);
                    let xi: Vec<Dyadic> = (0..d).map(|_| Dyadic::random_unit(&mut rng, bits)).collect();
                    let e = log_density_profile(&xi, mu, params.t_max, params.t_step)?;
                    Ok((xi, e))
                }
                EstimateMethod::SiegelAsymptotic => unreachable!(),
            }
        })
        .collect()
}

/// Estimate of the density function `f(mu)`.
pub fn estimate_f(d: usize, mu: f64, method: &EstimateMethod, params: &EnsembleParams) -> Result<DensityEstimate> {
    check_mu(mu)?;
    if let EstimateMethod::SiegelAsymptotic = method {
        if mu > 0.15 {
            return Err(LabError::InvalidMethodForMu {
                mu,
                reason: "the small-mu term is only used for mu <= 0.15".into(),
            });
        }
        let v = (2.0 * mu).powi(d as i32 + 1) / (2.0 * zeta(d as u32 + 1));
        return Ok(DensityEstimate { mean: v, lower: v, upper: v, n_samples: 0, ci_halfwidth: 0.0 });
    }
    if let EstimateMethod::CurveEnsemble(c) = method {
        if !c.is_nondegenerate() || c.dim() != d + 1 {
            return Err(LabError::UnsupportedCurveShape(
                "ensemble over a curve needs a nondegenerate graph of matching dimension".into(),
            ));
        }
    }
    if params.samples < 2 {
        return Err(LabError::SampleTooSmall { got: params.samples, needed: 2 });
    }
    let profiles = ensemble_profiles(d, mu, method, params)?;
    let means: Vec<f64> = profiles.iter().map(|p| p.1.mean).collect();
    let m = mean(&means);
    Ok(DensityEstimate {
        mean: m,
        lower: mean(&profiles.iter().map(|p| p.1.lower).collect::<Vec<_>>()).min(m),
        upper: mean(&profiles.iter().map(|p| p.1.upper).collect::<Vec<_>>()).max(m),
        n_samples: profiles.len(),
        ci_halfwidth: 1.96 * std_dev(&means) / (means.len() as f64).sqrt(),
    })
}

/// Bounded test function of a lattice built from its first two minima.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    /// Which minimum (1 or 2) the bump reads.
    pub minimum: usize,
    /// Center of the bump in `log lambda`.
    pub center: f64,
    pub width: f64,
}

impl Observable {
    pub fn eval(&self, l1: f64, l2: f64) -> f64 {
        let l = if self.minimum == 1 { l1 } else { l2 };
        let z = (l.ln() - self.center) / self.width;
        (-z * z).exp()
    }
}

/// Four smooth bumps reading `lambda_1` and `lambda_2`.
pub fn default_observables() -> Vec<Observable> {
    vec![
        Observable { minimum: 1, center: 0.6f64.ln(), width: 0.3 },
        Observable { minimum: 1, center: 0.9f64.ln(), width: 0.3 },
        Observable { minimum: 2, center: 1.0f64.ln(), width: 0.3 },
        Observable { minimum: 2, center: 1.3f64.ln(), width: 0.3 },
    ]
}

/// Largest gap, at each checkpoint time `T`, between the orbit averages of an
/// observable on `a_t phi(s) Z^n` and on its translate by `exp(x Y_s)`, over
/// all shifts `x` and observables.
pub fn unipotent_discrepancy_profile(
    curve: &PolynomialCurve,
    s: &Dyadic,
    t_step: f64,
    checkpoints: &[f64],
    shifts: &[f64],
    observables: &[Observable],
) -> Result<Vec<f64>> {
    let n = curve.dim();
    let tangent = curve_tangent(curve, s.to_f64())?;
    let t_max = checkpoints.iter().cloned().fold(0.0, f64::max);
    let spec = FlowSpec::main_flow(1, n - 1);
    let mut tracker = OrbitTracker::from_curve(spec, curve, s)?;
    let shears: Vec<DMatrix<f64>> = shifts
        .iter()
        .map(|&x| {
            let mut e = DMatrix::identity(n, n);
            for (j, v) in tangent.iter().enumerate() {
                e[(0, j + 1)] = x * v;
            }
            e
        })
        .collect();
    let nobs = observables.len();
    let mut base_sum = vec![0.0; nobs];
    let mut shift_sum = vec![vec![0.0; nobs]; shifts.len()];
    let mut out = Vec::with_capacity(checkpoints.len());
    let k_max = (t_max / t_step + 1e-9).floor() as usize;
    let mut cps: Vec<(usize, f64)> = checkpoints.iter().cloned().enumerate().collect();
    cps.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut results = vec![0.0; checkpoints.len()];
    let mut next = 0;
    for k in 1..=k_max {
        let t = k as f64 * t_step;
        tracker.advance_mut(t - tracker.t())?;
        let b = tracker.basis();
        let (l1, l2) = first_two_minima(b)?;
        for (o, ob) in observables.iter().enumerate() {
            base_sum[o] += ob.eval(l1, l2);
        }
        for (i, e) in shears.iter().enumerate() {
            let sb = UnimodularBasis::new(e * b.matrix())?;
            let (m1, m2) = first_two_minima(&sb)?;
            for (o, ob) in observables.iter().enumerate() {
                shift_sum[i][o] += ob.eval(m1, m2);
            }
        }
        while next < cps.len() && t + 1e-9 >= cps[next].1 {
            let mut gap = 0.0f64;
            for row in &shift_sum {
                for o in 0..nobs {
                    gap = gap.max((row[o] - base_sum[o]).abs() / k as f64);
                }
            }
            results[cps[next].0] = gap;
            next += 1;
        }
    }
    out.extend(results);
    Ok(out)
}

/// Discrepancy at the single horizon `t_max`.
pub fn unipotent_invariance_check(
    curve: &PolynomialCurve,
    s: &Dyadic,
    t_max: f64,
    t_step: f64,
    shifts: &[f64],
    observables: &[Observable],
) -> Result<f64> {
    Ok(unipotent_discrepancy_profile(curve, s, t_step, &[t_max], shifts, observables)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn one_third_is_improvable_at_ten() {
        for m in [ImprovabilityMethod::Dynamical, ImprovabilityMethod::Direct] {
            assert!(improvable_at(&[1.0 / 3.0], 10.0, 0.5, m).unwrap());
        }
    }

    #[test]
    fn mu_one_always_improvable() {
        let mut r = RngStream::new(3, 0);
        for _ in 0..50 {
            let xi = [r.uniform(), r.uniform()];
            let n = 1.0 + r.below(300) as f64;
            assert!(improvable_at(&xi, n, 1.0, ImprovabilityMethod::Dynamical).unwrap());
            assert!(improvable_at(&xi, n, 1.0, ImprovabilityMethod::Direct).unwrap());
        }
    }

    #[test]
    fn dynamical_agrees_with_direct_on_random_cases() {
        let mut r = RngStream::new(17, 0);
        for case in 0..300 {
            let d = 1 + case % 2;
            let xi: Vec<f64> = (0..d).map(|_| r.uniform()).collect();
            let n = 1.0 + r.below(200) as f64;
            let mu = [0.3, 0.5, 0.8][case % 3];
            let a = improvable_at(&xi, n, mu, ImprovabilityMethod::Dynamical).unwrap();
            let b = improvable_at(&xi, n, mu, ImprovabilityMethod::Direct).unwrap();
            assert_eq!(a, b, "xi={xi:?} N={n} mu={mu}");
        }
    }

    #[test]
    fn rational_point_diverges() {
        let xi = [Dyadic::from_f64(1.0 / 3.0).unwrap()];
        // The double nearest to 1/3 has a huge denominator, but
        // (0, 3 e^{-t}) is already short by t = 30 only for the exact
        // rational; the dyadic approximation still yields the 3e^{-t}
        // vector up to e^{-t} * 2^{-54} effects, far below the threshold.
        let e = log_density_profile(&xi, 0.5, 30.0, 0.05).unwrap();
        assert!(e.upper > 0.9 && e.lower > 0.9, "{e:?}");
    }

    #[test]
    fn mu_one_density_is_one() {
        let xi = [Dyadic::from_f64(0.1234).unwrap(), Dyadic::from_f64(0.777).unwrap()];
        let e = log_density_profile(&xi, 1.0, 10.0, 0.1).unwrap();
        assert_eq!((e.lower, e.upper, e.mean), (1.0, 1.0, 1.0));
    }

    #[test]
    fn siegel_term_value() {
        let e = estimate_f(1, 0.1, &EstimateMethod::SiegelAsymptotic, &EnsembleParams::default()).unwrap();
        assert_relative_eq!(e.mean, 0.04 / (std::f64::consts::PI.powi(2) / 3.0), epsilon = 1e-12);
        assert_relative_eq!(e.mean, 0.0121585, epsilon = 1e-7);
        assert!(matches!(
            estimate_f(1, 0.3, &EstimateMethod::SiegelAsymptotic, &EnsembleParams::default()),
            Err(LabError::InvalidMethodForMu { .. })
        ));
    }

    #[test]
    fn zeta_values() {
        assert_relative_eq!(zeta(2), std::f64::consts::PI.powi(2) / 6.0, epsilon = 1e-13);
        assert_relative_eq!(zeta(4), std::f64::consts::PI.powi(4) / 90.0, epsilon = 1e-13);
        assert_relative_eq!(zeta(3), 1.2020569031595942, epsilon = 1e-13);
    }

    #[test]
    fn degenerate_curve_is_rejected() {
        let line = PolynomialCurve::top_row_graph(vec![
            crate::poly::Poly::monomial(1),
            crate::poly::Poly::monomial(1),
        ])
        .unwrap();
        let r = estimate_f(2, 0.5, &EstimateMethod::CurveEnsemble(line), &EnsembleParams::default());
        assert!(r.is_err());
    }

    #[test]
    fn zero_shift_gives_zero_discrepancy() {
        let c = PolynomialCurve::moment(2).unwrap();
        let s = Dyadic::from_f64(0.4321).unwrap();
        let d = unipotent_invariance_check(&c, &s, 10.0, 0.1, &[0.0], &default_observables()).unwrap();
        assert_eq!(d, 0.0);
        let tiny = 1e-8 / 1.0;
        let d = unipotent_invariance_check(&c, &s, 10.0, 0.1, &[tiny / 2.0], &default_observables())
            .unwrap();
        assert!(d <= 1e-6, "{d}");
    }
}
