//! Best approximations, their displacements and projected lattices, exact
//! returns to the cylinder cross-section, and ensemble comparison.

use nalgebra::DMatrix;
use num_bigint::BigInt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::exact::gcd_i64;
use crate::lattice::{
    enumerate_ball, first_two_minima, hnf_basis_rational, lll_columns, node_budget, NormKind,
    UnimodularBasis, Visit,
};
use crate::stats::{energy_distance, ks_two_sample};

/// One best approximation `(p, q)` of `xi`.
#[derive(Debug, Clone, PartialEq)]
pub struct BestApproxRecord {
    pub p: Vec<i64>,
    pub q: u64,
    pub err: f64,
    pub disp: Vec<f64>,
    pub proj_basis: Option<UnimodularBasis>,
    /// Set when some `q xi_i` was exactly half-integral, so that rounding
    /// had to break a tie.
    pub tie_flag: bool,
}

/// Nearest integer vector to `q xi` (ties to even) and the residual
/// `p - q xi`. Every code path that compares errors goes through here.
pub fn nearest(xi: &[f64], q: u64) -> (Vec<i64>, Vec<f64>, bool) {
    let qf = q as f64;
    let mut tie = false;
    let mut p = Vec::with_capacity(xi.len());
    let mut r = Vec::with_capacity(xi.len());
    for &x in xi {
        let y = qf * x;
        if (y - y.trunc()).abs() == 0.5 {
            tie = true;
        }
        let pi = y.round_ties_even();
        p.push(pi as i64);
        r.push(pi - y);
    }
    (p, r, tie)
}

/// Residual `p - q xi` for an arbitrary `p`.
pub fn residual(xi: &[f64], p: &[i64], q: i64) -> Vec<f64> {
    let qf = q as f64;
    p.iter().zip(xi).map(|(&pi, &x)| pi as f64 - qf * x).collect()
}

fn dim_root(q: u64, d: usize) -> f64 {
    (q as f64).powf(1.0 / d as f64)
}

/// Cheap necessary test for `q` to improve on `best`; never rejects a
/// denominator that the exact comparison would accept.
#[inline]
fn may_beat(xi: &[f64], q: u64, norm: NormKind, best: f64) -> bool {
    let qf = q as f64;
    match norm {
        NormKind::Sup => xi.iter().all(|&x| {
            let y = qf * x;
            (y.round_ties_even() - y).abs() < best
        }),
        NormKind::Euclidean => {
            let cap = best * best * (1.0 + 1e-9);
            let mut acc = 0.0;
            for &x in xi {
                let y = qf * x;
                let r = y.round_ties_even() - y;
                acc += r * r;
                if acc > cap {
                    return false;
                }
            }
            true
        }
    }
}

/// Best approximations with denominator up to `q_max`.
pub fn best_approximations(xi: &[f64], norm: NormKind, q_max: u64) -> Vec<BestApproxRecord> {
    let d = xi.len();
    let mut out = Vec::new();
    let mut best = f64::INFINITY;
    for q in 1..=q_max {
        if !may_beat(xi, q, norm, best) {
            continue;
        }
        let (p, r, tie) = nearest(xi, q);
        let err = norm.of(&r);
        if err < best {
            best = err;
            let s = dim_root(q, d);
            out.push(BestApproxRecord {
                disp: r.iter().map(|x| x * s).collect(),
                p,
                q,
                err,
                proj_basis: None,
                tie_flag: tie,
            });
            if err == 0.0 {
                break;
            }
        }
    }
    out
}

/// Fill in the displacement and the rescaled projected lattice of a record.
pub fn displacement_and_projection(xi: &[f64], rec: &BestApproxRecord) -> Result<BestApproxRecord> {
    let d = xi.len();
    let mut all = rec.p.clone();
    all.push(rec.q as i64);
    let g = gcd_i64(&all);
    if g != 1 {
        return Err(LabError::NonPrimitiveVector { gcd: g.to_string() });
    }
    let q = rec.q as i64;
    let s = dim_root(rec.q, d);
    let disp: Vec<f64> = residual(xi, &rec.p, q).iter().map(|x| x * s).collect();
    let mut gens: Vec<Vec<BigInt>> = (0..d)
        .map(|i| (0..d).map(|j| BigInt::from(if i == j { q } else { 0 })).collect())
        .collect();
    gens.push(rec.p.iter().map(|&x| BigInt::from(x)).collect());
    let lat = hnf_basis_rational(&gens, &BigInt::from(q))?;
    let cols: Vec<Vec<f64>> =
        lat.basis_f64().into_iter().map(|v| v.into_iter().map(|x| x * s).collect()).collect();
    let basis = UnimodularBasis::from_columns(&cols)?;
    Ok(BestApproxRecord { disp, proj_basis: Some(basis), ..rec.clone() })
}

/// Volume of the unit ball of the given norm in `R^d`.
pub fn unit_ball_volume(norm: NormKind, d: usize) -> f64 {
    match norm {
        NormKind::Sup => 2f64.powi(d as i32),
        NormKind::Euclidean => {
            let mut v = [1.0, 2.0];
            for k in 2..=d {
                let next = v[0] * 2.0 * std::f64::consts::PI / k as f64;
                v = [v[1], next];
            }
            if d == 0 {
                1.0
            } else {
                v[1]
            }
        }
    }
}

/// Cross-section parameters: cylinder radius, dimension and norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionConfig {
    pub r0: f64,
    pub d: usize,
    pub norm: NormKind,
}

impl SectionConfig {
    /// Smallest radius whose cylinder `{|x| <= r, |x_{d+1}| <= 1}` has
    /// volume `2^{d+1}`. By Minkowski's theorem every best approximation
    /// then has displacement norm at most this radius.
    pub fn default_for(d: usize, norm: NormKind) -> Self {
        let r0 = (2f64.powi(d as i32) / unit_ball_volume(norm, d)).powf(1.0 / d as f64);
        Self { r0, d, norm }
    }

    /// Smallest radius whose cylinder has volume `2^d`.
    pub fn minimal_for(d: usize, norm: NormKind) -> Self {
        let r0 = (2f64.powi(d as i32 - 1) / unit_ball_volume(norm, d)).powf(1.0 / d as f64);
        Self { r0, d, norm }
    }

    pub fn cylinder_volume(&self) -> f64 {
        2.0 * unit_ball_volume(self.norm, self.d) * self.r0.powi(self.d as i32)
    }
}

/// A hit of the orbit `a_t u(xi) Z^{d+1}` on the top of the cylinder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionReturn {
    pub t: f64,
    pub p: Vec<i64>,
    pub q: u64,
    pub v_lambda: Vec<f64>,
    pub in_b: bool,
}

/// Whether `(p, q)` is the only primitive pair, up to sign, among all
/// integer vectors `(m, n)` with `|n| <= q` and error at most its own. The
/// search enumerates the lattice `a_t u(-xi) Z^{d+1}` at `t = log(q)/d`.
pub fn unique_in_cylinder(xi: &[f64], norm: NormKind, p: &[i64], q: u64) -> Result<bool> {
    let d = xi.len();
    let s = dim_root(q, d);
    let qi = q as i64;
    let own = norm.of(&residual(xi, p, qi));
    let n = d + 1;
    let mut m = DMatrix::zeros(n, n);
    for i in 0..d {
        m[(i, i)] = s;
        m[(i, d)] = -s * xi[i];
    }
    m[(d, d)] = 1.0 / q as f64;
    let basis = UnimodularBasis::new(m)?;
    let (b, t) = lll_columns(&basis, 0.99)?;
    let r = own * s;
    let euclid = match norm {
        NormKind::Sup => d as f64 * r * r,
        NormKind::Euclidean => r * r,
    };
    let r2 = (euclid + 1.0) * (1.0 + 1e-6) + 1e-9;
    let mut unique = true;
    enumerate_ball(&b, r2, node_budget(), |x, _| {
        let coeffs: Vec<i64> = (0..n).map(|i| (0..n).map(|j| t[j][i] * x[j]).sum()).collect();
        let (mut mm, mut nn) = (coeffs[..d].to_vec(), coeffs[d]);
        if nn < 0 {
            mm.iter_mut().for_each(|v| *v = -*v);
            nn = -nn;
        }
        if nn > qi || (nn == qi && mm == p) {
            return Visit::Continue;
        }
        let mut all = mm.clone();
        all.push(nn);
        if gcd_i64(&all) != 1 {
            return Visit::Continue;
        }
        let e = if nn == 0 {
            norm.of(&mm.iter().map(|&v| v as f64).collect::<Vec<_>>())
        } else {
            norm.of(&residual(xi, &mm, nn))
        };
        if e <= own {
            unique = false;
            return Visit::Stop;
        }
        Visit::Continue
    })?;
    Ok(unique)
}

/// All returns of the orbit to the cross-section for `q <= q_max`.
pub fn section_returns(xi: &[f64], cfg: &SectionConfig, q_max: u64) -> Result<Vec<SectionReturn>> {
    let d = xi.len();
    if d != cfg.d {
        return Err(LabError::InvalidParameter("dimension of xi and section differ".into()));
    }
    let mut out = Vec::new();
    for q in 1..=q_max {
        let s = dim_root(q, d);
        let reach = cfg.r0 / s * (1.0 + 1e-12);
        let qf = q as f64;
        let ranges: Vec<(i64, i64)> = xi
            .iter()
            .map(|&x| ((qf * x - reach).ceil() as i64, (qf * x + reach).floor() as i64))
            .collect();
        if ranges.iter().any(|&(lo, hi)| lo > hi) {
            continue;
        }
        let mut p: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        loop {
            let r = residual(xi, &p, q as i64);
            let v: Vec<f64> = r.iter().map(|x| x * s).collect();
            let mut all = p.clone();
            all.push(q as i64);
            if cfg.norm.of(&v) <= cfg.r0 && gcd_i64(&all) == 1 {
                let in_b = unique_in_cylinder(xi, cfg.norm, &p, q)?;
                out.push(SectionReturn { t: qf.ln() / d as f64, p: p.clone(), q, v_lambda: v, in_b });
            }
            let mut i = 0;
            while i < d {
                p[i] += 1;
                if p[i] <= ranges[i].1 {
                    break;
                }
                p[i] = ranges[i].0;
                i += 1;
            }
            if i == d {
                break;
            }
        }
    }
    Ok(out)
}

/// Smallest `k` such that the denominators of `best` after the first `k`
/// coincide with the denominators in `returns` beyond `best[k-1]`. `None` if
/// the two sequences never settle into agreement.
pub fn agreement_offset(best: &[u64], returns: &[u64]) -> Option<usize> {
    (0..=best.len()).find(|&k| {
        let floor = if k == 0 { 0 } else { best[k - 1] };
        let tail: Vec<u64> = returns.iter().copied().filter(|&q| k == 0 || q > floor).collect();
        tail == best[k..]
    })
}

/// Statistics of one best approximation used for ensemble comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledRecord {
    pub q: u64,
    pub disp: Vec<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
}

/// Best approximations of `xi` with `q_min <= q <= q_max`, reduced to
/// their displacement and the minima of the projected lattice.
pub fn pooled_records(xi: &[f64], norm: NormKind, q_min: u64, q_max: u64) -> Result<Vec<PooledRecord>> {
    best_approximations(xi, norm, q_max)
        .into_iter()
        .filter(|r| r.q >= q_min && r.err > 0.0)
        .map(|r| {
            let full = displacement_and_projection(xi, &r)?;
            let (l1, l2) = first_two_minima(full.proj_basis.as_ref().unwrap())?;
            Ok(PooledRecord { q: r.q, disp: full.disp, lambda1: l1, lambda2: l2 })
        })
        .collect()
}

/// Pool records over many points, in input order.
pub fn pool_ensemble(
    points: &[Vec<f64>],
    norm: NormKind,
    q_min: u64,
    q_max: u64,
) -> Result<Vec<PooledRecord>> {
    let parts: Result<Vec<Vec<PooledRecord>>> =
        points.par_iter().map(|xi| pooled_records(xi, norm, q_min, q_max)).collect();
    Ok(parts?.into_iter().flatten().collect())
}

/// Two-sample comparison of pooled statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquidistReport {
    pub n_a: usize,
    pub n_b: usize,
    /// Kolmogorov-Smirnov statistic per marginal, labelled.
    pub ks: Vec<(String, f64)>,
    pub energy: f64,
}

impl EquidistReport {
    pub fn max_ks(&self) -> f64 {
        self.ks.iter().map(|k| k.1).fold(0.0, f64::max)
    }
}

pub const MIN_POOLED: usize = 500;

pub fn ensemble_statistics(a: &[PooledRecord], b: &[PooledRecord]) -> Result<EquidistReport> {
    let n = a.len().min(b.len());
    if n < MIN_POOLED {
        return Err(LabError::SampleTooSmall { got: n, needed: MIN_POOLED });
    }
    let d = a[0].disp.len();
    let mut ks = Vec::new();
    for i in 0..d {
        let xa: Vec<f64> = a.iter().map(|r| r.disp[i]).collect();
        let xb: Vec<f64> = b.iter().map(|r| r.disp[i]).collect();
        ks.push((format!("disp{}", i + 1), ks_two_sample(&xa, &xb)?));
    }
    let l1a: Vec<f64> = a.iter().map(|r| r.lambda1).collect();
    let l1b: Vec<f64> = b.iter().map(|r| r.lambda1).collect();
    ks.push(("lambda1".into(), ks_two_sample(&l1a, &l1b)?));
    if d >= 2 {
        let l2a: Vec<f64> = a.iter().map(|r| r.lambda2).collect();
        let l2b: Vec<f64> = b.iter().map(|r| r.lambda2).collect();
        ks.push(("lambda2".into(), ks_two_sample(&l2a, &l2b)?));
    }
    let feat = |r: &PooledRecord| {
        let mut v = r.disp.clone();
        v.push(r.lambda1);
        v.push(r.lambda2);
        v
    };
    let fa: Vec<Vec<f64>> = a.iter().map(feat).collect();
    let fb: Vec<Vec<f64>> = b.iter().map(feat).collect();
    let energy = energy_distance(&fa, &fb, 2000)?;
    Ok(EquidistReport { n_a: a.len(), n_b: b.len(), ks, energy })
}
