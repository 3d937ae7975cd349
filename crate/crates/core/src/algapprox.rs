//! Algebraic approximation through lattice points of `a_t phi(s) Z^{d+1}`
//! in the region `M_{s,mu}` and its `eps`-inflations.
//!
//! Points are written `(eta, c_1, ..., c_d)`. For an integer vector
//! `b = (b_0, ..., b_d)` the lattice point is `eta = e^t P(s)`,
//! `c_i = e^{-t/d} b_i` where `P(x) = sum b_i x^i`.

use std::collections::HashMap;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dirichlet::DensityEstimate;
use crate::error::{LabError, Result};
use crate::lattice::{node_budget, shortest_vector, NormKind, UnimodularBasis};
use crate::poly::Poly;
use crate::rng::RngStream;

/// Absolute slack on every defining inequality, measured along its normal.
pub const MEMBERSHIP_SLACK: f64 = 1e-12;

/// Largest admissible `e^{t/d}` for lattice point enumeration.
pub const MAX_SCALE: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionParams {
    pub d: usize,
    pub s: f64,
    pub mu: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionMode {
    Exact,
    Inflate,
    Deflate,
}

/// Halfspace `a . x <= b` in `(eta, c)` coordinates.
#[derive(Debug, Clone)]
struct Halfspace {
    a: Vec<f64>,
    b: f64,
    norm: f64,
}

impl Halfspace {
    fn new(a: Vec<f64>, b: f64) -> Self {
        let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        Self { a, b, norm }
    }

    /// Signed distance-like excess, positive outside.
    fn excess(&self, x: &[f64]) -> f64 {
        (self.a.iter().zip(x).map(|(a, x)| a * x).sum::<f64>() - self.b) / self.norm
    }
}

/// `M` is the union of the two convex pieces where the derivative
/// functional is nonnegative and nonpositive respectively.
fn pieces(p: &RegionParams) -> [Vec<Halfspace>; 2] {
    let d = p.d;
    let n = d + 1;
    let mut common = Vec::new();
    for i in 1..=d {
        let mut a = vec![0.0; n];
        a[i] = 1.0;
        common.push(Halfspace::new(a.clone(), 1.0));
        a[i] = -1.0;
        common.push(Halfspace::new(a, 1.0));
    }
    let pw: Vec<f64> = (0..=d).map(|i| p.s.powi(i as i32)).collect();
    let mut a = vec![0.0; n];
    a[1..=d].copy_from_slice(&pw[1..=d]);
    common.push(Halfspace::new(a.clone(), 1.0));
    common.push(Halfspace::new(a.iter().map(|x| -x).collect(), 1.0));
    // L(c) = sum i c_i s^{i-1}
    let mut l = vec![0.0; n];
    for i in 1..=d {
        l[i] = i as f64 * pw[i - 1];
    }
    let piece = |sign: f64| {
        let mut hs = common.clone();
        for eta_sign in [1.0, -1.0] {
            let mut a: Vec<f64> = l.iter().map(|x| -sign * p.mu * x).collect();
            a[0] = eta_sign;
            hs.push(Halfspace::new(a, 0.0));
        }
        hs
    };
    [piece(1.0), piece(-1.0)]
}

fn inside(hs: &[Halfspace], x: &[f64], margin: f64) -> bool {
    hs.iter().all(|h| h.excess(x) <= margin)
}

/// Euclidean distance from `x` to a polyhedron, by enumerating candidate
/// active sets and keeping the nearest feasible projection.
fn distance_to_polyhedron(hs: &[Halfspace], x: &[f64]) -> f64 {
    if inside(hs, x, MEMBERSHIP_SLACK) {
        return 0.0;
    }
    let n = x.len();
    let m = hs.len();
    let mut best = f64::INFINITY;
    let mut subset = Vec::new();
    fn rec(
        hs: &[Halfspace],
        x: &[f64],
        start: usize,
        subset: &mut Vec<usize>,
        n: usize,
        m: usize,
        best: &mut f64,
    ) {
        if !subset.is_empty() {
            if let Some(y) = project_affine(hs, subset, x) {
                if inside(hs, &y, 1e-10) {
                    let dist = y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                    *best = best.min(dist);
                }
            }
        }
        if subset.len() == n {
            return;
        }
        for i in start..m {
            subset.push(i);
            rec(hs, x, i + 1, subset, n, m, best);
            subset.pop();
        }
    }
    rec(hs, x, 0, &mut subset, n, m, &mut best);
    best
}

fn project_affine(hs: &[Halfspace], idx: &[usize], x: &[f64]) -> Option<Vec<f64>> {
    let n = x.len();
    let k = idx.len();
    let a = DMatrix::from_fn(k, n, |r, c| hs[idx[r]].a[c]);
    let gram = &a * a.transpose();
    let xv = DVector::from_column_slice(x);
    let rhs = DVector::from_fn(k, |r, _| hs[idx[r]].b) - &a * &xv;
    let lu = gram.lu();
    let det = lu.determinant();
    let scale: f64 = idx.iter().map(|&i| hs[i].norm * hs[i].norm).product();
    if det.abs() <= 1e-12 * scale {
        return None;
    }
    let lam = lu.solve(&rhs)?;
    Some((xv + a.transpose() * lam).iter().copied().collect())
}

/// Euclidean distance from `(eta, c)` to `M_{s,mu}`.
pub fn distance_to_region(point: &[f64], params: &RegionParams) -> f64 {
    let [p, m] = pieces(params);
    distance_to_polyhedron(&p, point).min(distance_to_polyhedron(&m, point))
}

pub fn region_membership(point: &[f64], params: &RegionParams, mode: RegionMode) -> bool {
    assert_eq!(point.len(), params.d + 1, "point must be (eta, c_1..c_d)");
    let pcs = pieces(params);
    match mode {
        RegionMode::Exact => pcs.iter().any(|hs| inside(hs, point, MEMBERSHIP_SLACK)),
        // A ball in the union of two closed convex sets that meet in
        // codimension two lies in one of them.
        RegionMode::Deflate => pcs.iter().any(|hs| inside(hs, point, -params.eps)),
        RegionMode::Inflate => {
            let reach = params.eps + MEMBERSHIP_SLACK;
            pcs.iter().any(|hs| {
                inside(hs, point, reach) && distance_to_polyhedron(hs, point) <= reach
            })
        }
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// `P(x)` for integer coefficients by compensated Horner evaluation.
pub fn eval_int_poly(b: &[i64], x: f64) -> f64 {
    let n = b.len();
    let mut s = b[n - 1] as f64;
    let mut c = 0.0f64;
    for i in (0..n - 1).rev() {
        let p = s * x;
        let pe = s.mul_add(x, -p);
        let (ns, se) = two_sum(p, b[i] as f64);
        s = ns;
        c = c.mul_add(x, pe + se);
    }
    s + c
}

/// The lattice point `a_t phi(s) b`.
pub fn lattice_map(b: &[i64], s: f64, t: f64) -> Vec<f64> {
    let d = b.len() - 1;
    let shrink = (-t / d as f64).exp();
    let mut v = vec![t.exp() * eval_int_poly(b, s)];
    v.extend(b[1..].iter().map(|&x| x as f64 * shrink));
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPoint {
    pub b: Vec<i64>,
    pub point: Vec<f64>,
}

/// Nonzero points of `Lambda_{s,t}` in the region for the given mode. With
/// `first_only` the scan stops at the first hit.
pub fn lattice_points_in_region(
    params: &RegionParams,
    t: f64,
    mode: RegionMode,
    first_only: bool,
) -> Result<Vec<RegionPoint>> {
    let d = params.d;
    if d == 0 {
        return Err(LabError::InvalidParameter("d must be positive".into()));
    }
    let scale = (t / d as f64).exp();
    if scale > MAX_SCALE {
        return Err(LabError::EnumerationBudgetExceeded { budget: node_budget() });
    }
    let grow = if mode == RegionMode::Inflate { params.eps } else { 0.0 };
    let bmax = (scale * (1.0 + grow) * (1.0 + 1e-12)).floor() as i64;
    let count = (2.0 * bmax as f64 + 1.0).powi(d as i32);
    if count > node_budget() as f64 {
        return Err(LabError::EnumerationBudgetExceeded { budget: node_budget() });
    }
    let k: f64 = (1..=d).map(|i| i as f64 * params.s.abs().powi(i as i32 - 1)).sum();
    let eta_max = params.mu * k * (1.0 + grow) + grow + 1e-9;
    let reach = eta_max * (-t).exp();
    let pw: Vec<f64> = (0..=d).map(|i| params.s.powi(i as i32)).collect();
    let mut out = Vec::new();
    let mut b = vec![0i64; d + 1];
    for v in b[1..].iter_mut() {
        *v = -bmax;
    }
    loop {
        let tail: f64 = (1..=d).map(|i| b[i] as f64 * pw[i]).sum();
        let slack = 1e-9 * (1.0 + tail.abs());
        let lo = (-tail - reach - slack).ceil() as i64;
        let hi = (-tail + reach + slack).floor() as i64;
        for b0 in lo..=hi {
            b[0] = b0;
            if b.iter().all(|&x| x == 0) {
                continue;
            }
            let point = lattice_map(&b, params.s, t);
            if region_membership(&point, params, mode) {
                out.push(RegionPoint { b: b.clone(), point });
                if first_only {
                    return Ok(out);
                }
            }
        }
        let mut i = 1;
        while i <= d {
            b[i] += 1;
            if b[i] <= bmax {
                break;
            }
            b[i] = -bmax;
            i += 1;
        }
        if i > d {
            break;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyApprox {
    pub b: Vec<i64>,
    pub root: f64,
    /// Largest absolute coefficient of the primitive part of `P`.
    pub height: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootMatch {
    pub approx: PolyApprox,
    pub distance: f64,
    /// `|s' - s| < mu e^{-t(1 + 1/d)}`
    pub within_bound: bool,
}

fn int_poly(b: &[i64]) -> Poly {
    Poly::new(b.iter().map(|&x| x as f64).collect())
}

fn primitive_height(b: &[i64]) -> i64 {
    let g = crate::exact::gcd_i64(b).max(1);
    b.iter().map(|x| (x / g).abs()).max().unwrap_or(0)
}

/// Locate the root of `P` next to `s` within the Newton-doubled bracket.
/// Both orientations of the bracket are tried.
pub fn root_correspondence(b: &[i64], s: f64, mu: f64, t: f64) -> Result<Option<RootMatch>> {
    let d = b.len() - 1;
    let p = int_poly(b);
    let dp = p.derivative();
    let scale = b.iter().map(|x| x.abs()).max().unwrap_or(0).max(1) as f64;
    let ps = eval_int_poly(b, s);
    let dps = dp.eval(s);
    if dps.abs() <= 1e-12 * scale {
        return Err(LabError::DerivativeVanishes);
    }
    let finish = |root: f64| {
        let distance = (root - s).abs();
        let bound = mu * (-t * (1.0 + 1.0 / d as f64)).exp();
        RootMatch {
            approx: PolyApprox { b: b.to_vec(), root, height: primitive_height(b) },
            distance,
            within_bound: distance < bound,
        }
    };
    if ps == 0.0 {
        return Ok(Some(finish(s)));
    }
    let step = 2.0 * ps / dps;
    for cand in [s - step, s + step] {
        let pc = eval_int_poly(b, cand);
        if pc == 0.0 {
            return Ok(Some(finish(cand)));
        }
        if pc.signum() != ps.signum() {
            return Ok(Some(finish(safeguarded_newton(b, &dp, s, ps, cand))));
        }
    }
    Ok(None)
}

fn safeguarded_newton(b: &[i64], dp: &Poly, a: f64, fa: f64, c: f64) -> f64 {
    let (mut lo, mut hi) = if a < c { (a, c) } else { (c, a) };
    let neg_at_lo = if a < c { fa < 0.0 } else { fa > 0.0 };
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fx = eval_int_poly(b, x);
        if fx == 0.0 {
            return x;
        }
        if (fx < 0.0) == neg_at_lo {
            lo = x;
        } else {
            hi = x;
        }
        let dfx = dp.eval(x);
        let newton = x - fx / dfx;
        x = if dfx != 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= 4.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    x
}

fn product_maxcoef(q1: &[f64], q2: &[f64]) -> f64 {
    let mut m = 0.0f64;
    for k in 0..q1.len() + q2.len() - 1 {
        let mut c = 0.0;
        for i in 0..q1.len() {
            if k >= i && k - i < q2.len() {
                c += q1[i] * q2[k - i];
            }
        }
        m = m.max(c.abs());
    }
    m
}

fn minimize_product(k: usize, l: usize) -> f64 {
    let mut best = f64::INFINITY;
    let mut rng = RngStream::new(0x5eed, (k * 16 + l) as u64);
    for pin1 in 0..=k {
        for pin2 in 0..=l {
            let free = k + l;
            let build = |v: &[f64]| {
                let mut q1 = vec![0.0; k + 1];
                let mut q2 = vec![0.0; l + 1];
                let mut it = v.iter();
                for (i, c) in q1.iter_mut().enumerate() {
                    *c = if i == pin1 { 1.0 } else { *it.next().unwrap() };
                }
                for (i, c) in q2.iter_mut().enumerate() {
                    *c = if i == pin2 { 1.0 } else { *it.next().unwrap() };
                }
                product_maxcoef(&q1, &q2)
            };
            let grid = 9usize;
            let mut starts: Vec<(f64, Vec<f64>)> = Vec::new();
            let total = grid.pow(free as u32);
            for idx in 0..total {
                let mut r = idx;
                let v: Vec<f64> = (0..free)
                    .map(|_| {
                        let g = r % grid;
                        r /= grid;
                        -1.0 + 2.0 * g as f64 / (grid - 1) as f64
                    })
                    .collect();
                starts.push((build(&v), v));
            }
            for _ in 0..32 {
                let v: Vec<f64> = (0..free).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
                starts.push((build(&v), v));
            }
            starts.sort_by(|a, b| a.0.total_cmp(&b.0));
            for (f0, v0) in starts.into_iter().take(12) {
                let (f, _) = pattern_search(&build, v0, f0, &mut rng);
                best = best.min(f);
            }
        }
    }
    best
}

fn pattern_search(
    f: &dyn Fn(&[f64]) -> f64,
    mut x: Vec<f64>,
    mut fx: f64,
    rng: &mut RngStream,
) -> (f64, Vec<f64>) {
    let n = x.len();
    let mut step = 0.25;
    while step > 1e-10 {
        let mut improved = false;
        let mut dirs: Vec<Vec<f64>> = (0..n)
            .flat_map(|i| {
                [1.0, -1.0].into_iter().map(move |sg| {
                    let mut e = vec![0.0; n];
                    e[i] = sg;
                    e
                })
            })
            .collect();
        for _ in 0..2 * n {
            let v: Vec<f64> = (0..n).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
            let len = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-300);
            dirs.push(v.into_iter().map(|a| a / len).collect());
        }
        for dvec in &dirs {
            let y: Vec<f64> = x.iter().zip(dvec).map(|(a, b)| (a + step * b).clamp(-1.0, 1.0)).collect();
            let fy = f(&y);
            if fy < fx {
                x = y;
                fx = fy;
                improved = true;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (fx, x)
}

/// `C(k, l)`: the best constant in
/// `maxcoef(Q1) maxcoef(Q2) <= C maxcoef(Q1 Q2)` for degrees `k` and `l`,
/// found by minimizing `maxcoef(Q1 Q2)` over `maxcoef(Q1) = maxcoef(Q2) = 1`.
pub fn product_constant(k: usize, l: usize) -> f64 {
    static CACHE: OnceLock<std::sync::Mutex<HashMap<(usize, usize), f64>>> = OnceLock::new();
    let key = (k.min(l), k.max(l));
    let cache = CACHE.get_or_init(Default::default);
    if let Some(&v) = cache.lock().unwrap().get(&key) {
        return v;
    }
    let v = 1.0 / minimize_product(key.0, key.1);
    cache.lock().unwrap().insert(key, v);
    v
}

/// Height bound `c(d', d)` for a degree-`d'` divisor of a degree-`d` polynomial.
pub fn divisor_height_constant(dp: usize, d: usize) -> f64 {
    product_constant(dp, d - dp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegreeVerdict {
    pub is_degree_d: bool,
    /// `c(d', d) height(P)` for the largest divisor degree searched.
    pub height_bound: f64,
}

fn divisors(n: &BigInt) -> Vec<BigInt> {
    let n = n.abs();
    let mut out = Vec::new();
    let nn = n.to_u64().expect("coefficient too large for divisor search");
    let mut i = 1u64;
    while i * i <= nn {
        if nn.is_multiple_of(i) {
            out.push(BigInt::from(i));
            if i * i != nn {
                out.push(BigInt::from(nn / i));
            }
        }
        i += 1;
    }
    out
}

/// Whether `q` divides `p` over the integers (ascending coefficients).
pub fn divides(q: &[BigInt], p: &[BigInt]) -> bool {
    let dq = q.len() - 1;
    if p.len() < q.len() {
        return p.iter().all(|c| c.is_zero());
    }
    let lead = &q[dq];
    let mut rem = p.to_vec();
    for top in (dq..rem.len()).rev() {
        let (quo, r) = rem[top].div_rem(lead);
        if !r.is_zero() {
            return false;
        }
        if quo.is_zero() {
            continue;
        }
        for j in 0..=dq {
            let idx = top - dq + j;
            rem[idx] = &rem[idx] - &quo * &q[j];
        }
    }
    rem.iter().all(|c| c.is_zero())
}

fn eval_big(p: &[BigInt], num: &BigInt, den: &BigInt) -> BigInt {
    let d = p.len() - 1;
    let mut acc = BigInt::zero();
    let mut np = BigInt::from(1);
    let mut dp: Vec<BigInt> = vec![BigInt::from(1); d + 1];
    for i in 1..=d {
        dp[i] = &dp[i - 1] * den;
    }
    for (i, c) in p.iter().enumerate() {
        acc += c * &np * &dp[d - i];
        np *= num;
    }
    acc
}

/// Whether the polynomial `sum b_i x^i` of nominal degree `d = len - 1`
/// is irreducible over the rationals, i.e. its roots have degree exactly `d`.
pub fn degree_filter(b: &[i64]) -> Result<DegreeVerdict> {
    let d = b.len().saturating_sub(1);
    if d > 4 {
        return Err(LabError::UnsupportedDegree(d));
    }
    if d == 0 || b[d] == 0 {
        return Ok(DegreeVerdict { is_degree_d: false, height_bound: 0.0 });
    }
    let h = b.iter().map(|x| x.abs()).max().unwrap() as f64;
    let p: Vec<BigInt> = b.iter().map(|&x| BigInt::from(x)).collect();
    let linear_bound = if d >= 2 { divisor_height_constant(1, d) * h } else { h };
    if d == 1 {
        return Ok(DegreeVerdict { is_degree_d: true, height_bound: linear_bound });
    }
    if p[0].is_zero() {
        return Ok(DegreeVerdict { is_degree_d: false, height_bound: linear_bound });
    }
    let lead_divs = divisors(&p[d]);
    let const_divs = divisors(&p[0]);
    for q in &lead_divs {
        for r in &const_divs {
            for num in [r.clone(), -r.clone()] {
                if eval_big(&p, &num, q).is_zero() {
                    return Ok(DegreeVerdict { is_degree_d: false, height_bound: linear_bound });
                }
            }
        }
    }
    if d < 4 {
        return Ok(DegreeVerdict { is_degree_d: true, height_bound: linear_bound });
    }
    let bound = divisor_height_constant(2, 4) * h;
    let limit = BigInt::from(bound.ceil() as i64);
    let p1: BigInt = p.iter().sum();
    let p1_divs = divisors(&p1);
    for a in &lead_divs {
        for c0 in &const_divs {
            for c in [c0.clone(), -c0.clone()] {
                for e0 in &p1_divs {
                    for e in [e0.clone(), -e0.clone()] {
                        let m = &e - a - &c;
                        if m.abs() > limit {
                            continue;
                        }
                        let q = vec![c.clone(), m, a.clone()];
                        if divides(&q, &p) {
                            return Ok(DegreeVerdict { is_degree_d: false, height_bound: bound });
                        }
                    }
                }
            }
        }
    }
    Ok(DegreeVerdict { is_degree_d: true, height_bound: bound })
}

/// Heuristic test for `s` being a root of a nonzero integer polynomial of
/// degree at most `d` with small coefficients.
pub fn looks_algebraic(s: f64, d: usize) -> Result<bool> {
    let n = d + 1;
    let k = 1e12;
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(0, i)] = k * s.powi(i as i32);
        if i > 0 {
            m[(i, i)] = 1.0;
        }
    }
    let basis = UnimodularBasis::new(m)?;
    let v = shortest_vector(&basis, NormKind::Euclidean, None)?;
    Ok(match v {
        Some(v) => v.length < 50.0,
        None => false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgProfile {
    pub estimate: DensityEstimate,
    pub times: Vec<f64>,
    pub has_point: Vec<bool>,
    pub n_points: Vec<usize>,
    pub degenerate: bool,
}

/// Time series of `Lambda_{s,t} cap M_{s,mu} != {0}` on `(0, t_max]` and
/// its running average.
pub fn alg_density_profile(d: usize, s: f64, mu: f64, t_max: f64, t_step: f64) -> Result<AlgProfile> {
    if t_step <= 0.0 || t_max < t_step {
        return Err(LabError::InvalidParameter("need 0 < t_step <= t_max".into()));
    }
    let params = RegionParams { d, s, mu, eps: 0.0 };
    let steps = (t_max / t_step).floor() as usize;
    let times: Vec<f64> = (1..=steps).map(|k| k as f64 * t_step).collect();
    let hits: Result<Vec<usize>> = times
        .par_iter()
        .map(|&t| lattice_points_in_region(&params, t, RegionMode::Exact, false).map(|v| v.len()))
        .collect();
    let n_points = hits?;
    let has_point: Vec<bool> = n_points.iter().map(|&n| n > 0).collect();
    let xs: Vec<f64> = has_point.iter().map(|&h| if h { 1.0 } else { 0.0 }).collect();
    Ok(AlgProfile {
        estimate: DensityEstimate::from_series(&xs),
        times,
        has_point,
        n_points,
        degenerate: looks_algebraic(s, d)?,
    })
}

/// One time of the two-way correspondence audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub t: f64,
    /// Integer polynomials with a root close to `s`, found by direct search.
    pub forward_pairs: usize,
    /// Of those, lattice points outside the inflated region.
    pub forward_failures: usize,
    /// Lattice points in the deflated region.
    pub backward_points: usize,
    /// Of those, points without a close root or with a large coefficient.
    pub backward_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub rows: Vec<AuditRow>,
    /// Smallest audited time from which on no failures occur.
    pub threshold: Option<f64>,
}

/// Integer `b` with `|b_i| < e^{t/d}` whose polynomial has a real root
/// within `mu e^{-t(1+1/d)}` of `s`, found without using the lattice.
pub fn close_root_polynomials(d: usize, s: f64, mu: f64, t: f64) -> Result<Vec<(Vec<i64>, f64)>> {
    let scale = (t / d as f64).exp();
    if scale > MAX_SCALE {
        return Err(LabError::EnumerationBudgetExceeded { budget: node_budget() });
    }
    let r = mu * (-t * (1.0 + 1.0 / d as f64)).exp();
    let bmax = if scale.fract() == 0.0 { scale as i64 - 1 } else { scale.floor() as i64 };
    let mut out = Vec::new();
    let mut b = vec![0i64; d + 1];
    for v in b[1..].iter_mut() {
        *v = -bmax;
    }
    loop {
        let tail: f64 = (1..=d).map(|i| b[i] as f64 * s.powi(i as i32)).sum();
        let slope: f64 =
            (0..=d).map(|i| i as f64 * bmax as f64 * (s.abs() + r).powi(i as i32 - 1)).sum();
        let reach = r * slope + 1e-9 * (1.0 + tail.abs());
        let lo = ((-tail - reach).ceil() as i64).max(-bmax);
        let hi = ((-tail + reach).floor() as i64).min(bmax);
        for b0 in lo..=hi {
            b[0] = b0;
            if b[1..].iter().all(|&x| x == 0) {
                continue;
            }
            let p = int_poly(&b);
            for root in p.roots_in(s - r, s + r, 0.0) {
                if (root - s).abs() < r {
                    out.push((b.clone(), root));
                    break;
                }
            }
        }
        let mut i = 1;
        while i <= d {
            b[i] += 1;
            if b[i] <= bmax {
                break;
            }
            b[i] = -bmax;
            i += 1;
        }
        if i > d {
            break;
        }
    }
    Ok(out)
}

pub fn correspondence_audit(d: usize, s: f64, mu: f64, eps: f64, times: &[f64]) -> Result<AuditReport> {
    let params = RegionParams { d, s, mu, eps };
    let rows: Result<Vec<AuditRow>> = times
        .par_iter()
        .map(|&t| {
            let pairs = close_root_polynomials(d, s, mu, t)?;
            let forward_failures = pairs
                .iter()
                .filter(|(b, _)| !region_membership(&lattice_map(b, s, t), &params, RegionMode::Inflate))
                .count();
            let pts = lattice_points_in_region(&params, t, RegionMode::Deflate, false)?;
            let scale = (t / d as f64).exp();
            let mut backward_failures = 0;
            for p in &pts {
                let ok = p.b.iter().all(|&x| (x.abs() as f64) < scale)
                    && matches!(root_correspondence(&p.b, s, mu, t), Ok(Some(m)) if m.within_bound);
                if !ok {
                    backward_failures += 1;
                }
            }
            Ok(AuditRow {
                t,
                forward_pairs: pairs.len(),
                forward_failures,
                backward_points: pts.len(),
                backward_failures,
            })
        })
        .collect();
    let rows = rows?;
    let mut threshold = None;
    for row in rows.iter().rev() {
        if row.forward_failures + row.backward_failures > 0 {
            break;
        }
        threshold = Some(row.t);
    }
    Ok(AuditReport { rows, threshold })
}
