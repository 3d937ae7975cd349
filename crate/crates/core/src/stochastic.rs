//! Finite-sample checks for (C, α)-good functions, sparse interval families
//! and supermartingale growth.
//!
//! Sublevel measures are counted on uniform grids. Statements that hold almost
//! surely are turned into quantiles over independent trials.

use num_bigint::Sign;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::{LabError, Result};
use crate::exact::Dyadic;
use crate::rng::RngStream;

/// Grid points per tested subinterval.
pub const MIN_GRID: usize = 10_000;

/// Grid used to walk towards the boundary of a sublevel component before
/// refining it by bisection.
const LOCATE_GRID: usize = 100_000;

const CONTAINMENT_TOL: f64 = 1e-9;

/// A closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi < self.lo
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Centered dilation by `gamma`.
    pub fn dilate(&self, gamma: f64) -> Self {
        let c = self.center();
        let h = 0.5 * self.len() * gamma;
        Self::new(c - h, c + h)
    }

    pub fn intersect(&self, other: &Self) -> Option<Self> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then(|| Self::new(lo, hi))
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    fn contains_interval(&self, other: &Self, tol: f64) -> bool {
        self.lo <= other.lo + tol && other.hi <= self.hi + tol
    }

    /// A random subinterval with both endpoints uniform.
    pub fn random_sub(&self, rng: &mut RngStream) -> Self {
        let a = rng.uniform_in(self.lo, self.hi);
        let b = rng.uniform_in(self.lo, self.hi);
        Self::new(a.min(b), a.max(b))
    }
}

/// Constants of the goodness inequality
/// `|{x ∈ J : |f(x)| < ε}| ≤ C (ε / sup_J |f|)^α |J|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoodnessParams {
    pub c: f64,
    pub alpha: f64,
}

impl GoodnessParams {
    /// The classical constants `C = 2n (n+1)^{1/n}`, `α = 1/n` valid for every
    /// real polynomial of degree at most `n` on every interval.
    pub fn polynomial(degree: usize) -> Self {
        let n = degree.max(1) as f64;
        Self { c: 2.0 * n * (n + 1.0).powf(1.0 / n), alpha: 1.0 / n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodnessViolation {
    pub j: Interval,
    pub eps: f64,
    pub measured: f64,
    pub bound: f64,
}

/// `|f|` on a uniform grid of `J`, sorted.
struct SampledAbs {
    values: Vec<f64>,
    sup: f64,
    len: f64,
}

impl SampledAbs {
    fn new(f: &dyn Fn(f64) -> f64, j: Interval, grid: usize) -> Self {
        let grid = grid.max(2);
        let step = j.len() / (grid - 1) as f64;
        let mut values: Vec<f64> = (0..grid).map(|i| f(j.lo + step * i as f64).abs()).collect();
        values.sort_by(f64::total_cmp);
        let sup = values.last().copied().unwrap_or(0.0);
        Self { values, sup, len: j.len() }
    }

    fn cell(&self) -> f64 {
        self.len / self.values.len() as f64
    }

    /// Grid estimate of `|{x ∈ J : |f(x)| < eps}|`.
    fn sublevel(&self, eps: f64) -> f64 {
        self.values.partition_point(|&v| v < eps) as f64 * self.cell()
    }
}

fn random_ratio(rng: &mut RngStream) -> f64 {
    10f64.powf(rng.uniform_in(-4.0, 0.0))
}

const EPS_PER_INTERVAL: usize = 8;

/// Tests the goodness inequality on `trials` random subintervals of `domain`
/// (the first trial uses `domain` itself), each with several thresholds
/// `ε ≤ sup_J |f|`. A two-cell slack absorbs the grid resolution.
pub fn goodness_check(
    f: &dyn Fn(f64) -> f64,
    domain: Interval,
    params: GoodnessParams,
    trials: usize,
    rng: &mut RngStream,
) -> Vec<GoodnessViolation> {
    let mut out = Vec::new();
    for trial in 0..trials {
        let j = if trial == 0 { domain } else { domain.random_sub(rng) };
        if j.len() <= 0.0 {
            continue;
        }
        let s = SampledAbs::new(f, j, MIN_GRID);
        if s.sup == 0.0 {
            continue;
        }
        for _ in 0..EPS_PER_INTERVAL {
            let ratio = random_ratio(rng);
            let eps = s.sup * ratio;
            let measured = s.sublevel(eps);
            let bound = params.c * ratio.powf(params.alpha) * j.len() + 2.0 * s.cell();
            if measured > bound {
                out.push(GoodnessViolation { j, eps, measured, bound });
            }
        }
    }
    out
}

/// Largest observed ratio `|{|f| < ε}| / ((ε/sup)^α |J|)` over random
/// subintervals and thresholds; a lower estimate of the best constant `C`.
pub fn empirical_goodness_constant(
    f: &dyn Fn(f64) -> f64,
    domain: Interval,
    alpha: f64,
    trials: usize,
    rng: &mut RngStream,
) -> f64 {
    let mut best = 0.0f64;
    for trial in 0..trials {
        let j = if trial == 0 { domain } else { domain.random_sub(rng) };
        if j.len() <= 0.0 {
            continue;
        }
        let s = SampledAbs::new(f, j, MIN_GRID);
        if s.sup == 0.0 {
            continue;
        }
        for _ in 0..EPS_PER_INTERVAL {
            let ratio = random_ratio(rng);
            let measured = s.sublevel(s.sup * ratio);
            best = best.max(measured / (ratio.powf(alpha) * j.len()));
        }
    }
    best
}

/// Log-log regression slope of the sublevel measure of `f` on `j` against the
/// threshold, over the thresholds in `eps`.
pub fn sublevel_exponent(f: &dyn Fn(f64) -> f64, j: Interval, eps: &[f64], grid: usize) -> Result<f64> {
    let s = SampledAbs::new(f, j, grid.max(MIN_GRID));
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &e in eps {
        let m = s.sublevel(e);
        if m > 0.0 && e > 0.0 {
            xs.push(e.ln());
            ys.push(m.ln());
        }
    }
    if xs.len() < 2 {
        return Err(LabError::SampleTooSmall { got: xs.len(), needed: 2 });
    }
    Ok(crate::stats::linear_fit(&xs, &ys).0)
}

/// Connected component of `{x ∈ within : |f(x)| ≤ level}` containing `s0`.
/// Boundaries are found by a grid walk followed by bisection.
pub fn sublevel_component(f: &dyn Fn(f64) -> f64, s0: f64, level: f64, within: Interval) -> Option<Interval> {
    let inside = |x: f64| f(x).abs() <= level;
    if !within.contains(s0) || !inside(s0) {
        return None;
    }
    let h = within.len() / LOCATE_GRID as f64;
    let edge = |dir: f64, stop: f64| -> f64 {
        let mut a = s0;
        loop {
            let b = a + dir * h;
            if (dir < 0.0 && b <= stop) || (dir > 0.0 && b >= stop) {
                if inside(stop) {
                    return stop;
                }
                return bisect(&inside, a, stop);
            }
            if !inside(b) {
                return bisect(&inside, a, b);
            }
            a = b;
        }
    };
    Some(Interval::new(edge(-1.0, within.lo), edge(1.0, within.hi)))
}

/// Last point of the segment from `a` (inside) towards `b` (outside) that
/// tests inside.
fn bisect(inside: &dyn Fn(f64) -> bool, mut a: f64, mut b: f64) -> f64 {
    for _ in 0..64 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        if inside(m) {
            a = m;
        } else {
            b = m;
        }
    }
    a
}

/// Whether `(1/(C ε^α)).J ∩ [0,1] ⊆ I`.
pub fn dilation_contained(i: Interval, j: Interval, eps: f64, params: GoodnessParams) -> bool {
    let factor = 1.0 / (params.c * eps.powf(params.alpha));
    match j.dilate(factor).intersect(&Interval::new(0.0, 1.0)) {
        Some(d) => i.contains_interval(&d, CONTAINMENT_TOL),
        None => true,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DilationCase {
    pub i: Interval,
    pub j: Interval,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DilationReport {
    pub checked: usize,
    pub skipped: usize,
    pub violations: Vec<DilationCase>,
}

/// Samples `I` as a maximal component of `{|f| ≤ 1}` in `[0,1]`, a threshold
/// `ε`, and `J ⊆ I` inside a component of `{|f| ≤ ε}`, then tests the
/// dilation containment. Draws that find no such `J` are counted as skipped.
pub fn dilation_check(
    f: &dyn Fn(f64) -> f64,
    params: GoodnessParams,
    trials: usize,
    rng: &mut RngStream,
) -> DilationReport {
    let unit = Interval::new(0.0, 1.0);
    let mut report = DilationReport { checked: 0, skipped: 0, violations: Vec::new() };
    for _ in 0..trials {
        let Some(case) = sample_dilation_case(f, unit, rng) else {
            report.skipped += 1;
            continue;
        };
        report.checked += 1;
        if !dilation_contained(case.i, case.j, case.eps, params) {
            report.violations.push(case);
        }
    }
    report
}

fn sample_dilation_case(f: &dyn Fn(f64) -> f64, unit: Interval, rng: &mut RngStream) -> Option<DilationCase> {
    let s0 = (0..100).map(|_| rng.uniform()).find(|&s| f(s).abs() <= 1.0)?;
    let i = sublevel_component(f, s0, 1.0, unit)?;
    let eps = 10f64.powf(rng.uniform_in(-3.0, 0.0));
    const SCAN: usize = 1000;
    let step = i.len() / SCAN as f64;
    let low: Vec<f64> = (0..=SCAN).map(|k| i.lo + step * k as f64).filter(|&x| f(x).abs() <= eps).collect();
    if low.is_empty() {
        return None;
    }
    let s1 = low[rng.below(low.len() as u64) as usize];
    let k = sublevel_component(f, s1, eps, i)?;
    let j = if rng.uniform() < 0.5 { k } else { k.random_sub(rng) };
    Some(DilationCase { i, j, eps })
}

/// The constant `C^k k (|I|/η)^{k-1}` for a cover by `k` intervals.
pub fn composite_constant(c: f64, k: usize, hull_len: f64, eta: f64) -> f64 {
    c.powi(k as i32) * k as f64 * (hull_len / eta).powi(k as i32 - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalityReport {
    pub k: usize,
    pub eta: f64,
    pub composite: GoodnessParams,
    pub violations: Vec<GoodnessViolation>,
}

/// Given `params` valid on every interval of `cover`, tests the composite
/// constant on the hull of the cover.
pub fn locality_check(
    f: &dyn Fn(f64) -> f64,
    cover: &[Interval],
    params: GoodnessParams,
    trials: usize,
    rng: &mut RngStream,
) -> Result<LocalityReport> {
    if cover.is_empty() {
        return Err(LabError::InvalidParameter("empty cover".into()));
    }
    let mut sorted = cover.to_vec();
    sorted.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    let hull = Interval::new(sorted[0].lo, sorted.iter().map(|i| i.hi).fold(f64::MIN, f64::max));
    let mut reach = sorted[0].hi;
    for i in &sorted[1..] {
        if i.lo > reach {
            return Err(LabError::InvalidParameter(format!("cover has a gap at {reach}")));
        }
        reach = reach.max(i.hi);
    }
    let mut eta = hull.len();
    for (a, i) in cover.iter().enumerate() {
        for j in &cover[a + 1..] {
            if let Some(x) = i.intersect(j) {
                eta = eta.min(x.len());
            }
        }
    }
    let k = cover.len();
    let composite = GoodnessParams { c: composite_constant(params.c, k, hull.len(), eta), alpha: params.alpha };
    let violations = goodness_check(f, hull, composite, trials, rng);
    Ok(LocalityReport { k, eta, composite, violations })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DilationLocalityReport {
    pub dilation: DilationReport,
    pub locality: LocalityReport,
}

/// Runs [`dilation_check`] on `[0,1]` and [`locality_check`] on `cover`.
pub fn dilation_locality_check(
    f: &dyn Fn(f64) -> f64,
    params: GoodnessParams,
    cover: &[Interval],
    trials: usize,
    rng: &mut RngStream,
) -> Result<DilationLocalityReport> {
    let dilation = dilation_check(f, params, trials, rng);
    let locality = locality_check(f, cover, params, trials, rng)?;
    Ok(DilationLocalityReport { dilation, locality })
}

/// Intervals of `A_n` for a given level `n`.
pub type LevelIntervals = Arc<dyn Fn(usize) -> Vec<Interval> + Send + Sync>;

/// How the interval sets `A_n` are produced.
#[derive(Clone)]
pub enum PackingSource {
    Empty,
    /// Explicit intervals in `[-1, 1]`; limited to levels whose lengths are
    /// representable as doubles.
    Explicit(LevelIntervals),
    /// `[-1, 1]` is cut into dyadic blocks at a level-dependent depth. Each
    /// block holds, with probability `fill`, one interval whose dilation
    /// stays inside the block. Block contents are a hash of
    /// `(seed, n, block index)`, so the packing is fixed while membership of a
    /// point can be decided exactly at any depth.
    RandomBlocks { seed: u64, fill: f64 },
}

#[derive(Clone)]
pub struct IntervalFamily {
    pub beta: f64,
    pub gamma: f64,
    pub f_growth: fn(usize) -> usize,
    pub source: PackingSource,
}

/// `f(n) = ⌊√n⌋`.
pub fn sqrt_growth(n: usize) -> usize {
    n.isqrt()
}

/// Block depth and admissible `log2` lengths at one level.
#[derive(Debug, Clone, Copy)]
struct LevelGeometry {
    depth: usize,
    log2_min: f64,
    log2_max: f64,
}

impl IntervalFamily {
    fn length_bounds(&self, n: usize) -> (f64, f64) {
        let f = (self.f_growth)(n) as f64;
        let lb = self.beta.log2();
        ((n as f64 + f) * lb, (n as f64 - f) * lb)
    }

    fn geometry(&self, n: usize) -> Option<LevelGeometry> {
        let (lo, hi) = self.length_bounds(n);
        let lg = self.gamma.log2();
        let depth = (1.0 - lg - hi).ceil().max(0.0) as usize;
        let cap = 1.0 - depth as f64 - lg;
        let hi = hi.min(cap);
        (lo <= hi).then_some(LevelGeometry { depth, log2_min: lo, log2_max: hi })
    }

    /// Checks the length window and the disjointness of dilations at every
    /// level `1..=n_max`.
    pub fn validate(&self, n_max: usize) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) || self.gamma <= 1.0 || !self.gamma.is_finite() {
            return Err(LabError::InvalidFamily(format!("need 0 < beta < 1 < gamma, got {} and {}", self.beta, self.gamma)));
        }
        match &self.source {
            PackingSource::Empty => Ok(()),
            PackingSource::Explicit(gen) => {
                for n in 1..=n_max {
                    self.validate_explicit(n, &gen(n))?;
                }
                Ok(())
            }
            PackingSource::RandomBlocks { fill, .. } => {
                if !(0.0..=1.0).contains(fill) {
                    return Err(LabError::InvalidFamily(format!("fill {fill} outside [0, 1]")));
                }
                let lg = self.gamma.log2();
                for n in 1..=n_max {
                    if let Some(g) = self.geometry(n) {
                        let (lo, hi) = self.length_bounds(n);
                        if g.log2_min < lo || g.log2_max > hi || g.log2_max + lg > 1.0 - g.depth as f64 {
                            return Err(LabError::InvalidFamily(format!("level {n}: block geometry {g:?}")));
                        }
                    }
                }
                Ok(())
            }
        }
    }

    fn validate_explicit(&self, n: usize, intervals: &[Interval]) -> Result<()> {
        let (lo, hi) = self.length_bounds(n);
        let tol = 1e-12 * lo.abs().max(1.0);
        for i in intervals {
            let len = i.len();
            let ok_box = i.lo >= -1.0 && i.hi <= 1.0;
            let ok_len = len > 0.0 && len.log2() >= lo - tol && len.log2() <= hi + tol;
            if !ok_box || !ok_len {
                return Err(LabError::InvalidFamily(format!(
                    "level {n}: interval [{}, {}] violates the length window [2^{lo}, 2^{hi}] or leaves [-1, 1]",
                    i.lo, i.hi
                )));
            }
        }
        dilations_disjoint(intervals, self.gamma).map_err(|e| match e {
            LabError::DilationOverlap { level } => LabError::InvalidFamily(format!(
                "level {n}: dilation of interval [{}, {}] overlaps a neighbour",
                intervals[level].lo, intervals[level].hi
            )),
            other => other,
        })
    }
}

/// A uniform point of `[-1, 1]` stored as the binary digits of `(x+1)/2`.
struct BitPoint {
    words: Vec<u64>,
    prefix: Vec<u64>,
    x: f64,
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

impl BitPoint {
    fn random(rng: &mut RngStream, bits: usize) -> Self {
        let words: Vec<u64> = (0..bits.div_ceil(64) + 1).map(|_| rng.next_u64()).collect();
        let mut prefix = vec![0u64; words.len() + 1];
        for (i, w) in words.iter().enumerate() {
            prefix[i + 1] = mix(prefix[i] ^ mix(*w ^ GOLDEN));
        }
        let u = (words[0] >> 11) as f64 / (1u64 << 53) as f64;
        Self { words, prefix, x: 2.0 * u - 1.0 }
    }

    /// Bits `start .. start+len` (most significant first), `len ≤ 64`.
    fn bits(&self, start: usize, len: u32) -> u64 {
        if len == 0 {
            return 0;
        }
        let w = start / 64;
        let off = (start % 64) as u32;
        let hi = self.words[w] << off;
        let lo = if off == 0 { 0 } else { self.words[w + 1] >> (64 - off) };
        (hi | lo) >> (64 - len)
    }

    /// Hash of the first `k` bits, i.e. of the depth-`k` block index.
    fn block_hash(&self, k: usize) -> u64 {
        let full = k / 64;
        let rest = (k % 64) as u32;
        mix(self.prefix[full] ^ mix(self.bits(full * 64, rest) ^ ((k as u64) << 8)))
    }

    /// Position of the point inside its depth-`k` block, in `[0, 1)`.
    fn relative(&self, k: usize) -> f64 {
        self.bits(k, 53) as f64 / (1u64 << 53) as f64
    }
}

/// Interval of the block holding `p` at level `n`, in block coordinates.
fn block_interval(fam: &IntervalFamily, seed: u64, fill: f64, n: usize, p: &BitPoint) -> Option<Interval> {
    let g = fam.geometry(n)?;
    let mut state = mix(seed ^ mix((n as u64).wrapping_mul(GOLDEN)) ^ p.block_hash(g.depth));
    let mut next = || {
        state = mix(state.wrapping_add(GOLDEN));
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let (u1, u2, u3) = (next(), next(), next());
    if u1 >= fill {
        return None;
    }
    let floor = g.log2_min.max(g.log2_max - 1.0);
    let log2_len = floor + u2 * (g.log2_max - floor);
    let w = (log2_len - (1.0 - g.depth as f64)).exp2();
    let half_span = 0.5 * fam.gamma * w;
    let c = half_span + u3 * (1.0 - 2.0 * half_span).max(0.0);
    Some(Interval::new(c - 0.5 * w, c + 0.5 * w))
}

fn in_level(fam: &IntervalFamily, n: usize, p: &BitPoint) -> bool {
    match &fam.source {
        PackingSource::Empty => false,
        PackingSource::Explicit(gen) => gen(n).iter().any(|i| i.contains(p.x)),
        PackingSource::RandomBlocks { seed, fill } => match fam.geometry(n) {
            Some(g) => block_interval(fam, *seed, *fill, n, p).is_some_and(|i| i.contains(p.relative(g.depth))),
            None => false,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyReport {
    pub n: usize,
    pub limit: f64,
    pub frequencies: Vec<f64>,
}

impl FrequencyReport {
    /// Fraction of trials whose frequency is at most `threshold`.
    pub fn fraction_within(&self, threshold: f64) -> f64 {
        if self.frequencies.is_empty() {
            return 1.0;
        }
        self.frequencies.iter().filter(|&&f| f <= threshold).count() as f64 / self.frequencies.len() as f64
    }
}

/// For `trials` uniform points `x ∈ [-1, 1]`, the visit frequency
/// `(1/N) #{1 ≤ n ≤ N : x ∈ B_n}`. Trial `i` draws its point from stream
/// `(seed, i)`.
pub fn short_intervals_simulate(fam: &IntervalFamily, n: usize, trials: usize, seed: u64) -> Result<FrequencyReport> {
    if n == 0 {
        return Err(LabError::InvalidParameter("N must be positive".into()));
    }
    fam.validate(n)?;
    let bits = (1..=n).filter_map(|k| fam.geometry(k)).map(|g| g.depth).max().unwrap_or(0) + 64;
    let frequencies = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = RngStream::new(seed, t as u64);
            let p = BitPoint::random(&mut rng, bits);
            (1..=n).filter(|&k| in_level(fam, k, &p)).count() as f64 / n as f64
        })
        .collect();
    Ok(FrequencyReport { n, limit: 1.0 / fam.gamma, frequencies })
}

/// Draws the increment `M_n - M_{n-1}` given `n` and `M_{n-1}`.
pub type IncrementSampler = Arc<dyn Fn(usize, f64, &mut RngStream) -> f64 + Send + Sync>;
/// The bound `c_n`.
pub type IncrementBound = Arc<dyn Fn(usize) -> f64 + Send + Sync>;

/// A supermartingale given by its increment law and increment bounds. The
/// supermartingale property itself is the caller's responsibility.
#[derive(Clone)]
pub struct MartingaleSpec {
    pub increment: IncrementSampler,
    pub bound: IncrementBound,
}

impl MartingaleSpec {
    pub fn zero() -> Self {
        Self { increment: Arc::new(|_, _, _| 0.0), bound: Arc::new(|_| 1.0) }
    }

    /// Simple random walk with `c_n = 1`.
    pub fn coin_walk() -> Self {
        Self { increment: Arc::new(|_, _, r| r.sign()), bound: Arc::new(|_| 1.0) }
    }

    /// Simple random walk minus `drift` per step.
    pub fn drifting_walk(drift: f64) -> Self {
        Self { increment: Arc::new(move |_, _, r| r.sign() - drift), bound: Arc::new(move |_| 1.0 + drift.abs()) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AzumaReport {
    pub n: usize,
    pub proxies: Vec<f64>,
}

impl AzumaReport {
    pub fn fraction_within(&self, threshold: f64) -> f64 {
        if self.proxies.is_empty() {
            return 1.0;
        }
        self.proxies.iter().filter(|&&p| p <= threshold).count() as f64 / self.proxies.len() as f64
    }
}

/// Per trial, `max_{N/2 ≤ n ≤ N} M_n / sqrt(2 (c_1² + … + c_n²) log n)`.
pub fn azuma_simulate(spec: &MartingaleSpec, n: usize, trials: usize, seed: u64) -> Result<AzumaReport> {
    if n < 4 {
        return Err(LabError::InvalidParameter(format!("N = {n} is too small")));
    }
    let proxies = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = RngStream::new(seed, t as u64);
            let (mut m, mut s2) = (0.0f64, 0.0f64);
            let mut proxy = f64::NEG_INFINITY;
            for step in 1..=n {
                let c = (spec.bound)(step);
                if c <= 0.0 || !c.is_finite() {
                    return Err(LabError::InvalidParameter(format!("c_{step} = {c} is not positive")));
                }
                let inc = (spec.increment)(step, m, &mut rng);
                if inc.abs() > c {
                    return Err(LabError::IncrementBoundViolated { step, increment: inc, bound: c });
                }
                m += inc;
                s2 += c * c;
                if step >= n / 2 {
                    proxy = proxy.max(m / (2.0 * s2 * (step as f64).ln()).sqrt());
                }
            }
            Ok(proxy)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(AzumaReport { n, proxies })
}

fn dy(x: f64) -> Result<Dyadic> {
    Dyadic::from_f64(x)
}

fn le(a: &Dyadic, b: &Dyadic) -> bool {
    b.sub(a).mant.sign() != Sign::Minus
}

/// Exact check that the centered `gamma`-dilations of `a` have pairwise
/// disjoint interiors. The error carries the index (in `a`) of an offending
/// interval.
pub fn dilations_disjoint(a: &[Interval], gamma: f64) -> Result<()> {
    let g = dy(gamma)?;
    let mut order: Vec<usize> = (0..a.len()).collect();
    order.sort_by(|&i, &j| a[i].center().total_cmp(&a[j].center()));
    // Twice the dilated endpoints: (lo + hi) ± γ (hi - lo).
    let ends = |i: &Interval| -> Result<(Dyadic, Dyadic)> {
        let (lo, hi) = (dy(i.lo)?, dy(i.hi)?);
        let s = lo.add(&hi);
        let r = g.mul(&hi.sub(&lo));
        Ok((s.sub(&r), s.add(&r)))
    };
    for w in order.windows(2) {
        let (_, right) = ends(&a[w[0]])?;
        let (left, _) = ends(&a[w[1]])?;
        if !le(&right, &left) {
            return Err(LabError::DilationOverlap { level: w[1] });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseCover {
    pub measured: f64,
    pub bound: f64,
    /// Exact verdict of `measured ≤ bound`.
    pub holds: bool,
}

/// `|J ∩ ∪A|` against `|J|/γ + 2 max_{I∈A} |I|`, computed exactly in dyadic
/// arithmetic on the given endpoints.
pub fn sparse_cover_bound(a: &[Interval], j: Interval, gamma: f64) -> Result<SparseCover> {
    if gamma.is_nan() || gamma <= 0.0 || j.is_empty() || a.iter().any(Interval::is_empty) {
        return Err(LabError::InvalidParameter("need gamma > 0 and nonempty intervals".into()));
    }
    dilations_disjoint(a, gamma)?;
    let mut clipped: Vec<Interval> = a.iter().filter_map(|i| i.intersect(&j)).collect();
    clipped.sort_by(|x, y| x.lo.total_cmp(&y.lo));
    let mut measured = Dyadic::zero();
    let mut cur: Option<(f64, f64)> = None;
    for i in clipped {
        cur = match cur {
            Some((lo, hi)) if i.lo <= hi => Some((lo, hi.max(i.hi))),
            Some((lo, hi)) => {
                measured = measured.add(&dy(hi)?.sub(&dy(lo)?));
                Some((i.lo, i.hi))
            }
            None => Some((i.lo, i.hi)),
        };
    }
    if let Some((lo, hi)) = cur {
        measured = measured.add(&dy(hi)?.sub(&dy(lo)?));
    }
    let mut longest = Dyadic::zero();
    for i in a {
        let l = dy(i.hi)?.sub(&dy(i.lo)?);
        if le(&longest, &l) {
            longest = l;
        }
    }
    let jlen = dy(j.hi)?.sub(&dy(j.lo)?);
    // measured ≤ |J|/γ + 2 max  ⇔  γ (measured − 2 max) ≤ |J|
    let lhs = dy(gamma)?.mul(&measured.sub(&longest.add(&longest)));
    let holds = le(&lhs, &jlen);
    Ok(SparseCover { measured: measured.to_f64(), bound: jlen.to_f64() / gamma + 2.0 * longest.to_f64(), holds })
}

/// A random configuration of intervals in `[-1, 1]` with disjoint
/// `gamma`-dilations, together with a random window `J`.
pub fn random_sparse_configuration(rng: &mut RngStream, gamma: f64, max_count: usize) -> (Vec<Interval>, Interval) {
    let count = rng.below(max_count as u64 + 1) as usize;
    let mut out = Vec::with_capacity(count);
    let mut cursor = -1.0;
    for _ in 0..count {
        let len = 10f64.powf(rng.uniform_in(-4.0, -1.0));
        let gap = rng.uniform_in(0.0, 0.05);
        let lo = cursor + gap + 0.5 * (gamma - 1.0) * len;
        let hi = lo + len;
        if hi + 0.5 * (gamma - 1.0) * len > 1.0 {
            break;
        }
        out.push(Interval::new(lo, hi));
        cursor = hi + 0.5 * (gamma - 1.0) * len;
    }
    let j = Interval::new(-1.0, 1.0).random_sub(rng);
    (out, j)
}

/// Coefficients (constant term first) of a random polynomial of exact
/// degree `degree`: half the time a product of linear factors with roots near
/// `[0, 1]`, otherwise uniform coefficients.
pub fn random_polynomial(rng: &mut RngStream, degree: usize) -> Vec<f64> {
    if rng.uniform() < 0.5 {
        let mut c = vec![1.0];
        for _ in 0..degree {
            let root = rng.uniform_in(-0.2, 1.2);
            let mut next = vec![0.0; c.len() + 1];
            for (i, a) in c.iter().enumerate() {
                next[i + 1] += a;
                next[i] -= root * a;
            }
            c = next;
        }
        c
    } else {
        let mut c: Vec<f64> = (0..=degree).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        c[degree] += c[degree].signum() * 0.1;
        c
    }
}

pub fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, a| acc * x + a)
}

/// Fitted sublevel exponent of `x^n` on `[0, 1]` for `n = 1..=max_degree`.
pub fn monomial_exponents(max_degree: usize) -> Result<Vec<(usize, f64)>> {
    let eps: Vec<f64> = (0..30).map(|i| 10f64.powf(-3.0 + 3.0 * i as f64 / 29.0)).collect();
    (1..=max_degree)
        .map(|n| {
            let f = move |x: f64| x.powi(n as i32);
            sublevel_exponent(&f, Interval::new(0.0, 1.0), &eps, 1_000_000).map(|s| (n, s))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeGoodness {
    pub degree: usize,
    pub params: GoodnessParams,
    pub violations: usize,
    pub fitted_c: f64,
}

/// Goodness of `per_degree` random polynomials of each degree up to
/// `max_degree` against the classical constants, with the largest fitted
/// constant. Degree `n` uses stream `(seed, n)`.
pub fn polynomial_goodness_suite(seed: u64, per_degree: usize, max_degree: usize) -> Vec<DegreeGoodness> {
    (1..=max_degree)
        .into_par_iter()
        .map(|degree| {
            let mut rng = RngStream::new(seed, degree as u64);
            let params = GoodnessParams::polynomial(degree);
            let unit = Interval::new(0.0, 1.0);
            let (mut violations, mut fitted_c) = (0, 0.0f64);
            for _ in 0..per_degree {
                let c = random_polynomial(&mut rng, degree);
                let f = |x: f64| horner(&c, x);
                violations += goodness_check(&f, unit, params, 10, &mut rng).len();
                fitted_c = fitted_c.max(empirical_goodness_constant(&f, unit, params.alpha, 10, &mut rng));
            }
            DegreeGoodness { degree, params, violations, fitted_c }
        })
        .collect()
}

/// Dilation checks on random polynomials of degrees cycling through `1..=5`
/// until `target` cases have been checked.
pub fn dilation_suite(seed: u64, target: usize) -> DilationReport {
    let mut rng = RngStream::new(seed, 0);
    let mut total = DilationReport { checked: 0, skipped: 0, violations: Vec::new() };
    let mut degree = 1;
    while total.checked < target {
        let c: Vec<f64> = (0..=degree).map(|_| rng.uniform_in(-3.0, 3.0)).collect();
        let f = |x: f64| horner(&c, x);
        let rep = dilation_check(&f, GoodnessParams::polynomial(degree), (target - total.checked).min(10), &mut rng);
        total.checked += rep.checked;
        total.skipped += rep.skipped;
        total.violations.extend(rep.violations);
        degree = degree % 5 + 1;
    }
    total
}

/// Number of random admissible configurations, out of `configs`, on which the
/// sparse cover bound fails.
pub fn sparse_cover_suite(seed: u64, configs: usize) -> Result<usize> {
    let mut rng = RngStream::new(seed, 0);
    let mut failures = 0;
    for _ in 0..configs {
        let gamma = rng.uniform_in(1.0, 6.0);
        let (a, j) = random_sparse_configuration(&mut rng, gamma, 40);
        if !sparse_cover_bound(&a, j, gamma)?.holds {
            failures += 1;
        }
    }
    Ok(failures)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(i: u64) -> RngStream {
        RngStream::new(77, i)
    }

    #[test]
    fn monomials_are_tight() {
        let unit = Interval::new(0.0, 1.0);
        for n in 1..=5 {
            let f = move |x: f64| x.powi(n);
            let exact = GoodnessParams { c: 1.0, alpha: 1.0 / n as f64 };
            assert!(goodness_check(&f, unit, exact, 1, &mut rng(n as u64)).is_empty());
            // On [0, 1] itself the ratio is exactly 1, so any smaller constant fails.
            let loose = GoodnessParams { c: 0.9, alpha: 1.0 / n as f64 };
            assert!(!goodness_check(&f, unit, loose, 1, &mut rng(n as u64)).is_empty());
            let eps: Vec<f64> = (0..30).map(|i| 10f64.powf(-3.0 + 3.0 * i as f64 / 29.0)).collect();
            let slope = sublevel_exponent(&f, unit, &eps, 1_000_000).unwrap();
            assert!((slope - 1.0 / n as f64).abs() < 0.02, "n = {n}: {slope}");
        }
    }

    #[test]
    fn linear_and_constant_functions() {
        let lin = |x: f64| 3.0 * x - 1.0;
        let p = GoodnessParams { c: 2.0, alpha: 1.0 };
        assert!(goodness_check(&lin, Interval::new(-2.0, 2.0), p, 50, &mut rng(10)).is_empty());
        let id = |x: f64| x;
        let one = GoodnessParams { c: 1.0, alpha: 1.0 };
        assert!(goodness_check(&id, Interval::new(0.0, 5.0), one, 50, &mut rng(11)).is_empty());
        let konst = |_: f64| 0.7;
        let tiny = GoodnessParams { c: 1e-3, alpha: 7.0 };
        assert!(goodness_check(&konst, Interval::new(0.0, 1.0), tiny, 50, &mut rng(12)).is_empty());
    }

    #[test]
    fn random_polynomials_meet_classical_constants() {
        let mut r = rng(20);
        for degree in 1..=5 {
            let params = GoodnessParams::polynomial(degree);
            for _ in 0..20 {
                let c = random_polynomial(&mut r, degree);
                let f = |x: f64| horner(&c, x);
                let v = goodness_check(&f, Interval::new(0.0, 1.0), params, 10, &mut r);
                assert!(v.is_empty(), "degree {degree}: {v:?}");
                let fitted = empirical_goodness_constant(&f, Interval::new(0.0, 1.0), params.alpha, 10, &mut r);
                assert!(fitted <= params.c);
            }
        }
    }

    #[test]
    fn sublevel_component_of_a_parabola() {
        // |x² − 1/4| ≤ 1/8 on [0, 1] has the component [√(1/8), √(3/8)].
        let f = |x: f64| x * x - 0.25;
        let k = sublevel_component(&f, 0.5, 0.125, Interval::new(0.0, 1.0)).unwrap();
        assert!((k.lo - 0.125f64.sqrt()).abs() < 1e-12 && (k.hi - 0.375f64.sqrt()).abs() < 1e-12);
        let id = |x: f64| x;
        let all = sublevel_component(&id, 0.3, 1.0, Interval::new(0.0, 1.0)).unwrap();
        assert_eq!(all, Interval::new(0.0, 1.0));
        assert!(sublevel_component(&f, 1.0, 0.1, Interval::new(0.0, 1.0)).is_none());
    }

    #[test]
    fn dilation_examples() {
        let one = GoodnessParams { c: 1.0, alpha: 1.0 };
        for eps in [0.5, 0.1, 1e-3] {
            assert!(dilation_contained(Interval::new(0.0, 1.0), Interval::new(0.0, eps), eps, one));
        }
        // f = 2x: I = [0, 1/2], J = [0.2, 0.3] has sup 0.6.
        let i = Interval::new(0.0, 0.5);
        let j = Interval::new(0.2, 0.3);
        assert!(dilation_contained(i, j, 0.6, one));
        assert!(!dilation_contained(i, j, 0.6, GoodnessParams { c: 0.1, alpha: 1.0 }));
    }

    #[test]
    fn dilation_holds_for_random_polynomials() {
        let mut r = rng(30);
        let mut checked = 0;
        for degree in 1..=4 {
            let params = GoodnessParams::polynomial(degree);
            for _ in 0..10 {
                let mut c = random_polynomial(&mut r, degree);
                c.iter_mut().for_each(|a| *a *= 3.0);
                let f = |x: f64| horner(&c, x);
                let rep = dilation_check(&f, params, 10, &mut r);
                assert!(rep.violations.is_empty(), "{:?}", rep.violations);
                checked += rep.checked;
            }
        }
        assert!(checked > 200, "{checked}");
    }

    #[test]
    fn composite_constant_formula() {
        assert_eq!(composite_constant(3.0, 1, 10.0, 0.1), 3.0);
        assert!((composite_constant(2.0, 2, 1.0, 0.2) - 40.0).abs() < 1e-12);
        assert!((composite_constant(2.0, 3, 1.0, 0.5) - 96.0).abs() < 1e-12);
    }

    #[test]
    fn locality_on_piecewise_polynomial() {
        let mut r = rng(40);
        for _ in 0..5 {
            let a = random_polynomial(&mut r, 3);
            let mut b = random_polynomial(&mut r, 2);
            b[0] += horner(&a, 0.5) - horner(&b, 0.5);
            let f = move |x: f64| if x < 0.5 { horner(&a, x) } else { horner(&b, x) };
            let cover = [Interval::new(0.0, 0.6), Interval::new(0.4, 1.0)];
            let alpha = 1.0 / 3.0;
            let c = cover
                .iter()
                .map(|&i| empirical_goodness_constant(&f, i, alpha, 50, &mut r))
                .fold(1.0 + 1e-9, f64::max);
            let rep = locality_check(&f, &cover, GoodnessParams { c, alpha }, 100, &mut r).unwrap();
            assert!((rep.eta - 0.2).abs() < 1e-12);
            assert!(rep.violations.is_empty());
        }
        let gap = [Interval::new(0.0, 0.3), Interval::new(0.4, 1.0)];
        assert!(locality_check(&|x: f64| x, &gap, GoodnessParams { c: 2.0, alpha: 1.0 }, 5, &mut r).is_err());
    }

    fn packing(seed: u64) -> IntervalFamily {
        IntervalFamily { beta: 0.5, gamma: 4.0, f_growth: sqrt_growth, source: PackingSource::RandomBlocks { seed, fill: 1.0 } }
    }

    #[test]
    fn empty_and_shrinking_families() {
        let empty = IntervalFamily { beta: 0.5, gamma: 4.0, f_growth: sqrt_growth, source: PackingSource::Empty };
        let rep = short_intervals_simulate(&empty, 500, 10, 1).unwrap();
        assert!(rep.frequencies.iter().all(|&f| f == 0.0));
        let single = IntervalFamily {
            beta: 0.5,
            gamma: 4.0,
            f_growth: sqrt_growth,
            source: PackingSource::Explicit(Arc::new(|n| {
                let h = 0.5f64.powi(n as i32) / 2.0;
                vec![Interval::new(-h, h)]
            })),
        };
        let rep = short_intervals_simulate(&single, 1000, 20, 2).unwrap();
        assert!(rep.frequencies.iter().all(|&f| f < 0.03), "{:?}", rep.frequencies);
    }

    #[test]
    fn invalid_families_are_rejected() {
        let too_long = IntervalFamily {
            beta: 0.5,
            gamma: 2.0,
            f_growth: |_| 0,
            source: PackingSource::Explicit(Arc::new(|n| if n == 3 { vec![Interval::new(0.0, 0.5)] } else { vec![] })),
        };
        match short_intervals_simulate(&too_long, 10, 1, 0) {
            Err(LabError::InvalidFamily(w)) => assert!(w.contains("level 3")),
            other => panic!("{other:?}"),
        }
        let crowded = IntervalFamily {
            beta: 0.5,
            gamma: 2.0,
            f_growth: |_| 0,
            source: PackingSource::Explicit(Arc::new(|n| {
                let l = 0.5f64.powi(n as i32);
                vec![Interval::new(0.0, l), Interval::new(1.5 * l, 2.5 * l)]
            })),
        };
        assert!(matches!(crowded.validate(5), Err(LabError::InvalidFamily(_))));
    }

    #[test]
    fn block_membership_agrees_with_absolute_coordinates() {
        // At shallow depths the block interval can be mapped back to [-1, 1]
        // in floating point and tested against the leading digits of x.
        let fam = packing(5);
        let PackingSource::RandomBlocks { seed, fill } = fam.source else { unreachable!() };
        let mut r = rng(50);
        let mut hits = 0;
        for _ in 0..2000 {
            let p = BitPoint::random(&mut r, 256);
            for n in 1..=30 {
                let Some(g) = fam.geometry(n) else { continue };
                let width = 2f64.powi(1 - g.depth as i32);
                let index = p.bits(0, g.depth as u32) as f64;
                let expected = block_interval(&fam, seed, fill, n, &p).is_some_and(|i| {
                    let abs = Interval::new(-1.0 + width * (index + i.lo), -1.0 + width * (index + i.hi));
                    abs.contains(p.x)
                });
                assert_eq!(in_level(&fam, n, &p), expected);
                hits += expected as usize;
            }
        }
        assert!(hits > 1000);
    }

    #[test]
    fn packing_levels_are_sparse() {
        // Level n, read off as explicit intervals over all blocks, has
        // disjoint dilations and density at most 1/γ.
        let fam = packing(6);
        let PackingSource::RandomBlocks { seed, fill } = fam.source else { unreachable!() };
        for n in 1..=9 {
            let Some(g) = fam.geometry(n) else { continue };
            let blocks = 1usize << g.depth;
            let width = 2.0 / blocks as f64;
            let mut a = Vec::new();
            for b in 0..blocks {
                let mut words = vec![(b as u64) << (64 - g.depth.max(1)) as u32; 3];
                if g.depth == 0 {
                    words[0] = 0;
                }
                words[1] = 0;
                words[2] = 0;
                let mut prefix = vec![0u64; words.len() + 1];
                for (i, w) in words.iter().enumerate() {
                    prefix[i + 1] = mix(prefix[i] ^ mix(*w ^ GOLDEN));
                }
                let p = BitPoint { words, prefix, x: 0.0 };
                if let Some(i) = block_interval(&fam, seed, fill, n, &p) {
                    a.push(Interval::new(-1.0 + width * (b as f64 + i.lo), -1.0 + width * (b as f64 + i.hi)));
                }
            }
            dilations_disjoint(&a, fam.gamma).unwrap();
            let (lo, hi) = fam.length_bounds(n);
            for i in &a {
                assert!(i.len().log2() >= lo - 1e-9 && i.len().log2() <= hi + 1e-9);
            }
            let density: f64 = a.iter().map(Interval::len).sum::<f64>() / 2.0;
            assert!(density <= 1.0 / fam.gamma + 1e-12);
        }
    }

    #[test]
    fn random_packing_frequency() {
        let rep = short_intervals_simulate(&packing(7), 2000, 40, 3).unwrap();
        assert!(rep.fraction_within(0.30) >= 0.95, "{:?}", rep.frequencies);
        assert!(rep.frequencies.iter().any(|&f| f > 0.05));
    }

    #[test]
    fn azuma_examples() {
        let zero = azuma_simulate(&MartingaleSpec::zero(), 1000, 5, 0).unwrap();
        assert!(zero.proxies.iter().all(|&p| p == 0.0));
        let walk = azuma_simulate(&MartingaleSpec::coin_walk(), 10_000, 40, 1).unwrap();
        assert!(walk.fraction_within(1.1) >= 0.95);
        let drift = azuma_simulate(&MartingaleSpec::drifting_walk(0.01), 10_000, 40, 1).unwrap();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&drift.proxies) < mean(&walk.proxies));
        let bad = MartingaleSpec { increment: Arc::new(|_, _, _| 2.0), bound: Arc::new(|_| 1.0) };
        assert!(matches!(azuma_simulate(&bad, 100, 2, 0), Err(LabError::IncrementBoundViolated { step: 1, .. })));
    }

    #[test]
    fn sparse_cover_examples() {
        let j = Interval::new(0.0, 1.0);
        let empty = sparse_cover_bound(&[], j, 3.0).unwrap();
        assert_eq!((empty.measured, empty.bound, empty.holds), (0.0, 1.0 / 3.0, true));
        let single = sparse_cover_bound(&[Interval::new(0.25, 0.5)], j, 3.0).unwrap();
        assert_eq!(single.measured, 0.25);
        assert!(single.holds);
        let overlapping = [Interval::new(0.0, 0.25), Interval::new(0.5, 0.75)];
        assert!(matches!(sparse_cover_bound(&overlapping, j, 3.0), Err(LabError::DilationOverlap { .. })));
        // Touching dilations are allowed: centres 1/8 and 5/8, half-dilations 1/4.
        assert!(sparse_cover_bound(&overlapping, j, 2.0).unwrap().holds);
    }

    #[test]
    fn sparse_cover_on_random_configurations() {
        let mut r = rng(60);
        for _ in 0..1000 {
            let gamma = r.uniform_in(1.0, 6.0);
            let (a, j) = random_sparse_configuration(&mut r, gamma, 40);
            let rep = sparse_cover_bound(&a, j, gamma).unwrap();
            assert!(rep.holds);
            let brute: f64 = a.iter().filter_map(|i| i.intersect(&j)).map(|i| i.len()).sum();
            assert!((rep.measured - brute).abs() < 1e-12);
        }
    }
}
