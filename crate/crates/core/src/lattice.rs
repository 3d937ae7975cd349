//! Lattice reduction, enumeration and sublattice bookkeeping.

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{LabError, Result};
use crate::exact::{canonical_sign, gcd_all, IntMatrix};

/// Default cap on enumeration tree nodes.
pub const DEFAULT_NODE_BUDGET: u64 = 100_000_000;

/// Node budget, overridable through the `HOROLAB_BUDGET` environment variable.
pub fn node_budget() -> u64 {
    std::env::var("HOROLAB_BUDGET")
        .ok()
        .and_then(|s| s.trim().parse::<u64>().ok())
        .filter(|&b| b > 0)
        .unwrap_or(DEFAULT_NODE_BUDGET)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormKind {
    Sup,
    Euclidean,
}

impl NormKind {
    pub fn of(self, v: &[f64]) -> f64 {
        match self {
            NormKind::Sup => v.iter().fold(0.0, |m, x| m.max(x.abs())),
            NormKind::Euclidean => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }
}

/// A full-rank lattice in `R^n` given by basis columns.
///
/// Orbit points of the flow are unimodular; general full-rank bases are also
/// accepted so that rescaled and projected lattices can reuse the machinery.
#[derive(Debug, Clone, PartialEq)]
pub struct UnimodularBasis {
    columns: DMatrix<f64>,
}

impl UnimodularBasis {
    pub fn new(columns: DMatrix<f64>) -> Result<Self> {
        if columns.nrows() != columns.ncols() || columns.nrows() == 0 {
            return Err(LabError::NonInvertibleBasis { det: 0.0 });
        }
        if columns.iter().any(|x| !x.is_finite()) {
            return Err(LabError::NumericalBreakdown("non-finite basis entry".into()));
        }
        let det = columns.determinant();
        let scale: f64 = columns
            .column_iter()
            .map(|c| c.norm())
            .product::<f64>()
            .max(f64::MIN_POSITIVE);
        if det == 0.0 || !det.is_finite() || (det.abs() / scale) < 1e-200 {
            return Err(LabError::NonInvertibleBasis { det });
        }
        Ok(Self { columns })
    }

    /// Basis from column vectors.
    pub fn from_columns(cols: &[Vec<f64>]) -> Result<Self> {
        let n = cols.len();
        if n == 0 || cols.iter().any(|c| c.len() != n) {
            return Err(LabError::NonInvertibleBasis { det: 0.0 });
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| cols[j][i]))
    }

    pub fn identity(n: usize) -> Self {
        Self { columns: DMatrix::identity(n, n) }
    }

    pub fn dim(&self) -> usize {
        self.columns.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn det(&self) -> f64 {
        self.columns.determinant()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.columns.column(j).iter().copied().collect()
    }

    pub fn columns_vec(&self) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|j| self.column(j)).collect()
    }

    /// Image of an integer coefficient vector.
    pub fn apply(&self, coeffs: &[i64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| (0..n).map(|j| self.columns[(i, j)] * coeffs[j] as f64).sum())
            .collect()
    }
}

/// A lattice vector with its coefficients relative to a given basis.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeVector {
    pub coeffs: Vec<i64>,
    pub vector: Vec<f64>,
    pub length: f64,
}

struct Gso {
    mu: Vec<Vec<f64>>,
    bn: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gso(b: &[Vec<f64>]) -> Gso {
    let n = b.len();
    let mut star: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut mu = vec![vec![0.0; n]; n];
    let mut bn = vec![0.0; n];
    for i in 0..n {
        let mut v = b[i].clone();
        for j in 0..i {
            let m = if bn[j] > 0.0 { dot(&v, &star[j]) / bn[j] } else { 0.0 };
            mu[i][j] = m;
            for (vi, sj) in v.iter_mut().zip(&star[j]) {
                *vi -= m * sj;
            }
        }
        for j in 0..i {
            mu[i][j] = if bn[j] > 0.0 { dot(&b[i], &star[j]) / bn[j] } else { 0.0 };
        }
        bn[i] = dot(&v, &v);
        mu[i][i] = 1.0;
        star.push(v);
    }
    Gso { mu, bn }
}

fn overflow() -> LabError {
    LabError::NumericalBreakdown("integer transform overflow".into())
}

/// In-place LLL on column vectors `b`; `t[j]` tracks the coefficients of
/// `b[j]` in the input basis.
fn lll_in_place(b: &mut [Vec<f64>], t: &mut [Vec<i64>], delta: f64) -> Result<()> {
    let n = b.len();
    if n <= 1 {
        return Ok(());
    }
    let mut g = gso(b);
    let mut k = 1;
    let mut iters = 0u64;
    while k < n {
        iters += 1;
        if iters > 1_000_000 {
            return Err(LabError::NumericalBreakdown("LLL did not terminate".into()));
        }
        for _pass in 0..8 {
            let mut changed = false;
            for j in (0..k).rev() {
                let r = g.mu[k][j].round();
                if r != 0.0 {
                    if r.abs() > 9.0e15 {
                        return Err(overflow());
                    }
                    let ri = r as i64;
                    let (head, tail) = b.split_at_mut(k);
                    for (x, y) in tail[0].iter_mut().zip(&head[j]) {
                        *x -= r * y;
                    }
                    let (th, tt) = t.split_at_mut(k);
                    for (x, y) in tt[0].iter_mut().zip(&th[j]) {
                        *x = y
                            .checked_mul(ri)
                            .and_then(|p| x.checked_sub(p))
                            .ok_or_else(overflow)?;
                    }
                    for i in 0..j {
                        g.mu[k][i] -= r * g.mu[j][i];
                    }
                    g.mu[k][j] -= r;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
            g = gso(b);
            if (0..k).all(|j| g.mu[k][j].abs() <= 0.501) {
                break;
            }
        }
        let m = g.mu[k][k - 1];
        if g.bn[k] >= (delta - m * m) * g.bn[k - 1] {
            k += 1;
        } else {
            b.swap(k, k - 1);
            t.swap(k, k - 1);
            g = gso(b);
            k = (k - 1).max(1);
        }
    }
    Ok(())
}

/// LLL-reduce a basis. Returns the reduced basis and the integer unimodular
/// transform `T` with `reduced = basis * T`.
pub fn lll_reduce(basis: &UnimodularBasis, delta: f64) -> Result<(UnimodularBasis, IntMatrix)> {
    let (cols, t) = lll_columns(basis, delta)?;
    let n = basis.dim();
    let mut flat = vec![0i64; n * n];
    for (j, tj) in t.iter().enumerate() {
        for i in 0..n {
            flat[i * n + j] = tj[i];
        }
    }
    Ok((UnimodularBasis::from_columns(&cols)?, IntMatrix::from_i64(n, n, &flat)))
}

/// LLL on the columns of a basis, returning reduced columns and transform
/// columns.
pub fn lll_columns(basis: &UnimodularBasis, delta: f64) -> Result<(Vec<Vec<f64>>, Vec<Vec<i64>>)> {
    let n = basis.dim();
    let mut b = basis.columns_vec();
    let mut t: Vec<Vec<i64>> = (0..n)
        .map(|j| (0..n).map(|i| i64::from(i == j)).collect())
        .collect();
    lll_in_place(&mut b, &mut t, delta)?;
    Ok((b, t))
}

/// What an enumeration visitor wants next.
pub enum Visit {
    Continue,
    /// Continue with a smaller squared radius.
    Shrink(f64),
    Stop,
}

struct Enumerator<'a, F> {
    b: &'a [Vec<f64>],
    g: Gso,
    x: Vec<i64>,
    r2: f64,
    nodes: u64,
    budget: u64,
    visit: F,
    stopped: bool,
}

impl<F: FnMut(&[i64], &[f64]) -> Visit> Enumerator<'_, F> {
    fn rec(&mut self, k: usize, partial: f64) -> Result<()> {
        let n = self.b.len();
        let c: f64 = -(k + 1..n).map(|j| self.x[j] as f64 * self.g.mu[j][k]).sum::<f64>();
        let bk = self.g.bn[k];
        let x0 = c.round();
        let mut step = 0i64;
        let mut dead_up = false;
        let mut dead_down = false;
        let dir: i64 = if c >= x0 { 1 } else { -1 };
        while !(dead_up && dead_down) {
            // Zig-zag around the center: x0, x0+dir, x0-dir, x0+2dir, ...
            let off = if step == 0 {
                0
            } else if step % 2 == 1 {
                dir * ((step + 1) / 2)
            } else {
                -dir * (step / 2)
            };
            step += 1;
            let up = off * dir >= 0;
            if (up && dead_up) || (!up && dead_down) {
                continue;
            }
            let xk = x0 + off as f64;
            let d = xk - c;
            let np = partial + bk * d * d;
            if np > self.r2 {
                if off == 0 {
                    dead_up = true;
                    dead_down = true;
                } else if up {
                    dead_up = true;
                } else {
                    dead_down = true;
                }
                continue;
            }
            self.nodes += 1;
            if self.nodes > self.budget {
                return Err(LabError::EnumerationBudgetExceeded { budget: self.budget });
            }
            self.x[k] = xk as i64;
            if k == 0 {
                if self.x.iter().any(|&v| v != 0) {
                    let dim = self.b[0].len();
                    let mut v = vec![0.0; dim];
                    for (j, &xj) in self.x.iter().enumerate() {
                        if xj != 0 {
                            for (vi, bj) in v.iter_mut().zip(&self.b[j]) {
                                *vi += xj as f64 * bj;
                            }
                        }
                    }
                    match (self.visit)(&self.x, &v) {
                        Visit::Continue => {}
                        Visit::Shrink(r2) => self.r2 = self.r2.min(r2),
                        Visit::Stop => {
                            self.stopped = true;
                        }
                    }
                }
            } else {
                self.rec(k - 1, np)?;
            }
            if self.stopped {
                return Ok(());
            }
        }
        self.x[k] = 0;
        Ok(())
    }
}

/// Fincke-Pohst enumeration of all nonzero lattice vectors `sum x_j b_j` with
/// Euclidean norm squared at most `radius2`. Works best on a reduced basis.
///
/// The visitor receives the coefficient vector and the lattice vector.
pub fn enumerate_ball<F>(b: &[Vec<f64>], radius2: f64, budget: u64, visit: F) -> Result<u64>
where
    F: FnMut(&[i64], &[f64]) -> Visit,
{
    let n = b.len();
    if n == 0 {
        return Ok(0);
    }
    let mut e = Enumerator {
        b,
        g: gso(b),
        x: vec![0; n],
        r2: radius2,
        nodes: 0,
        budget,
        visit,
        stopped: false,
    };
    if e.g.bn.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
        return Err(LabError::NonInvertibleBasis { det: 0.0 });
    }
    e.rec(n - 1, 0.0)?;
    Ok(e.nodes)
}

fn map_coeffs(t: &[Vec<i64>], x: &[i64]) -> Vec<i64> {
    let n = x.len();
    (0..n)
        .map(|i| (0..n).map(|j| t[j][i] * x[j]).sum())
        .collect()
}

/// Shortest nonzero vector in the given norm.
///
/// With `early_exit_bound = Some(b)` the search stops at the first vector of
/// norm at most `b` and returns `None` when there is none.
pub fn shortest_vector(
    basis: &UnimodularBasis,
    norm: NormKind,
    early_exit_bound: Option<f64>,
) -> Result<Option<LatticeVector>> {
    shortest_vector_with_budget(basis, norm, early_exit_bound, node_budget())
}

pub fn shortest_vector_with_budget(
    basis: &UnimodularBasis,
    norm: NormKind,
    early_exit_bound: Option<f64>,
    budget: u64,
) -> Result<Option<LatticeVector>> {
    let (b, t) = lll_columns(basis, 0.99)?;
    let n = b.len();
    let dimf = b[0].len() as f64;
    let radius_for = |len: f64| match norm {
        NormKind::Euclidean => len * len * (1.0 + 1e-9),
        NormKind::Sup => dimf * len * len * (1.0 + 1e-9),
    };
    let mut best: Option<(Vec<i64>, Vec<f64>, f64)> = None;
    let r2;
    if let Some(bound) = early_exit_bound {
        for j in 0..n {
            let l = norm.of(&b[j]);
            if l <= bound {
                let mut x = vec![0; n];
                x[j] = 1;
                return Ok(Some(LatticeVector {
                    coeffs: map_coeffs(&t, &x),
                    vector: b[j].clone(),
                    length: l,
                }));
            }
        }
        r2 = radius_for(bound);
    } else {
        let (j, l) = (0..n)
            .map(|j| (j, norm.of(&b[j])))
            .min_by(|a, c| a.1.partial_cmp(&c.1).unwrap())
            .unwrap();
        let mut x = vec![0; n];
        x[j] = 1;
        best = Some((x, b[j].clone(), l));
        r2 = radius_for(l);
    }
    let mut found_early: Option<(Vec<i64>, Vec<f64>, f64)> = None;
    enumerate_ball(&b, r2, budget, |x, v| {
        let l = norm.of(v);
        if let Some(bound) = early_exit_bound {
            if l <= bound {
                found_early = Some((x.to_vec(), v.to_vec(), l));
                return Visit::Stop;
            }
            return Visit::Continue;
        }
        let cur = best.as_ref().map_or(f64::INFINITY, |b| b.2);
        if l < cur {
            best = Some((x.to_vec(), v.to_vec(), l));
            return Visit::Shrink(radius_for(l));
        }
        Visit::Continue
    })?;
    let pick = if early_exit_bound.is_some() { found_early } else { best };
    Ok(pick.map(|(x, v, l)| LatticeVector { coeffs: map_coeffs(&t, &x), vector: v, length: l }))
}

/// First two successive minima in the Euclidean norm.
pub fn first_two_minima(basis: &UnimodularBasis) -> Result<(f64, f64)> {
    let (b, _) = lll_columns(basis, 0.99)?;
    let n = b.len();
    if n < 2 {
        let l = NormKind::Euclidean.of(&b[0]);
        return Ok((l, l));
    }
    let mut norms: Vec<f64> = b.iter().map(|c| dot(c, c)).collect();
    norms.sort_by(|a, c| a.partial_cmp(c).unwrap());
    let r2 = norms[1] * (1.0 + 1e-9);
    let mut found: Vec<(Vec<i64>, f64)> = Vec::new();
    enumerate_ball(&b, r2, node_budget(), |x, v| {
        found.push((x.to_vec(), dot(v, v)));
        Visit::Continue
    })?;
    found.sort_by(|a, c| a.1.partial_cmp(&c.1).unwrap());
    let (x1, l1) = found[0].clone();
    let l2 = found
        .iter()
        .find(|(x, _)| {
            (0..n).any(|i| (i + 1..n).any(|j| x1[i] * x[j] - x1[j] * x[i] != 0))
        })
        .map(|(_, l)| *l)
        .unwrap_or(norms[1]);
    Ok((l1.sqrt(), l2.sqrt()))
}

/// Reciprocal of the shortest Euclidean vector length.
pub fn height(basis: &UnimodularBasis) -> Result<f64> {
    let v = shortest_vector(basis, NormKind::Euclidean, None)?.expect("full search always finds");
    Ok(1.0 / v.length)
}

/// Volume of the parallelepiped spanned by the columns of `gens`.
pub fn covolume(gens: &DMatrix<f64>) -> Result<f64> {
    if gens.ncols() == 0 {
        return Err(LabError::ZeroInput);
    }
    let gram = gens.transpose() * gens;
    let det = gram.determinant();
    let scale: f64 = gens.column_iter().map(|c| c.norm_squared()).product();
    if det <= 0.0 || det <= 1e-24 * scale {
        return Err(LabError::RankDeficient);
    }
    Ok(det.sqrt())
}

/// Index subsets of size `k` of `0..n`, in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k <= n {
        go(0, n, k, &mut Vec::new(), &mut out);
    }
    out
}

/// The `k`-th exterior power of a square matrix in the lexicographic
/// subset basis.
pub fn exterior_power(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let n = m.nrows();
    let s = subsets(n, k);
    DMatrix::from_fn(s.len(), s.len(), |a, b| {
        DMatrix::from_fn(k, k, |i, j| m[(s[a][i], s[b][j])]).determinant()
    })
}

/// Row-style Hermite normal form: nonzero rows in echelon form with positive
/// pivots and entries above each pivot reduced into `[0, pivot)`.
pub fn hnf_rows(gens: &[Vec<BigInt>]) -> Vec<Vec<BigInt>> {
    let mut rows: Vec<Vec<BigInt>> = gens.to_vec();
    if rows.is_empty() {
        return rows;
    }
    let ncols = rows[0].len();
    let mut r = 0;
    for col in 0..ncols {
        if r == rows.len() {
            break;
        }
        loop {
            let nz: Vec<usize> = (r..rows.len()).filter(|&i| !rows[i][col].is_zero()).collect();
            if nz.is_empty() {
                break;
            }
            let piv = *nz.iter().min_by_key(|&&i| rows[i][col].abs()).unwrap();
            rows.swap(r, piv);
            if nz.len() == 1 {
                break;
            }
            for i in r + 1..rows.len() {
                if rows[i][col].is_zero() {
                    continue;
                }
                let q = rows[i][col].div_floor(&rows[r][col]);
                let pr = rows[r].clone();
                for (x, y) in rows[i].iter_mut().zip(&pr) {
                    *x -= &q * y;
                }
            }
        }
        if rows[r][col].is_zero() {
            continue;
        }
        if rows[r][col].is_negative() {
            for x in rows[r].iter_mut() {
                *x = -x.clone();
            }
        }
        let pr = rows[r].clone();
        for i in 0..r {
            let q = rows[i][col].div_floor(&pr[col]);
            if !q.is_zero() {
                for (x, y) in rows[i].iter_mut().zip(&pr) {
                    *x -= &q * y;
                }
            }
        }
        r += 1;
    }
    rows.truncate(r);
    rows.retain(|row| row.iter().any(|x| !x.is_zero()));
    rows
}

/// A sublattice of `Z^dim` given by a basis.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IntegerLattice {
    pub dim: usize,
    #[serde(with = "bigint_rows")]
    pub basis: Vec<Vec<BigInt>>,
}

mod bigint_rows {
    use num_bigint::BigInt;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(rows: &[Vec<BigInt>], s: S) -> Result<S::Ok, S::Error> {
        let strs: Vec<Vec<String>> =
            rows.iter().map(|r| r.iter().map(|x| x.to_string()).collect()).collect();
        strs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<BigInt>>, D::Error> {
        let strs: Vec<Vec<String>> = Vec::deserialize(d)?;
        strs.into_iter()
            .map(|r| {
                r.into_iter()
                    .map(|x| x.parse::<BigInt>().map_err(serde::de::Error::custom))
                    .collect()
            })
            .collect()
    }
}

impl IntegerLattice {
    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn from_i64(dim: usize, basis: &[Vec<i64>]) -> Self {
        Self {
            dim,
            basis: basis.iter().map(|v| v.iter().map(|&x| BigInt::from(x)).collect()).collect(),
        }
    }

    /// Plücker coordinates: the maximal minors of the basis, indexed by
    /// lexicographic row subsets.
    pub fn plucker(&self) -> Vec<BigInt> {
        let k = self.rank();
        subsets(self.dim, k)
            .iter()
            .map(|rows| {
                let mut m = IntMatrix::zeros(k, k);
                for (a, &r) in rows.iter().enumerate() {
                    for b in 0..k {
                        m.set(a, b, self.basis[b][r].clone());
                    }
                }
                m.det()
            })
            .collect()
    }

    /// Plücker vector with its first nonzero entry made positive.
    pub fn plucker_canonical(&self) -> Vec<BigInt> {
        let mut p = self.plucker();
        canonical_sign(&mut p);
        p
    }

    /// Covolume of the image of the lattice under a real linear map.
    pub fn covolume_under(&self, m: &DMatrix<f64>) -> Result<f64> {
        let k = self.rank();
        let gens = DMatrix::from_fn(self.dim, k, |i, j| {
            (0..self.dim)
                .map(|l| m[(i, l)] * self.basis[j][l].to_f64().unwrap_or(f64::NAN))
                .sum()
        });
        covolume(&gens)
    }

    /// Covolume in the standard embedding.
    pub fn covolume(&self) -> Result<f64> {
        self.covolume_under(&DMatrix::identity(self.dim, self.dim))
    }

    /// Index in `Z^dim` of a full-rank lattice.
    pub fn index(&self) -> Option<BigInt> {
        if self.rank() != self.dim {
            return None;
        }
        let mut m = IntMatrix::zeros(self.dim, self.dim);
        for (j, v) in self.basis.iter().enumerate() {
            for (i, x) in v.iter().enumerate() {
                m.set(i, j, x.clone());
            }
        }
        Some(m.det().abs())
    }

    /// Whether the lattice equals its saturation in `Z^dim`.
    pub fn is_primitive(&self) -> bool {
        gcd_all(&self.plucker()).is_one()
    }

    /// Whether this lattice is contained in `other` (both saturated or not).
    pub fn is_sublattice_of(&self, other: &IntegerLattice) -> bool {
        let mut gens = other.basis.clone();
        let r0 = hnf_rows(&gens).len();
        gens.extend(self.basis.iter().cloned());
        let h = hnf_rows(&gens);
        if h.len() != r0 {
            return false;
        }
        // Equal rank of span; lattice containment needs equal index as well.
        let a = IntegerLattice { dim: self.dim, basis: hnf_rows(&other.basis) };
        let b = IntegerLattice { dim: self.dim, basis: h };
        a.plucker_canonical() == b.plucker_canonical()
    }
}

/// Hermite normal form basis of the lattice generated by integer vectors.
pub fn hnf_basis(gens: &[Vec<BigInt>]) -> Result<IntegerLattice> {
    let dim = gens.first().map(|g| g.len()).ok_or(LabError::ZeroInput)?;
    let rows = hnf_rows(gens);
    if rows.is_empty() {
        return Err(LabError::ZeroInput);
    }
    Ok(IntegerLattice { dim, basis: rows })
}

/// Lattice `numer / den` with `numer` an integer lattice in Hermite form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalLattice {
    pub numer: IntegerLattice,
    pub den: BigInt,
}

impl RationalLattice {
    pub fn covolume(&self) -> Result<f64> {
        let d = self.den.to_f64().unwrap_or(f64::NAN);
        Ok(self.numer.covolume()? / d.powi(self.numer.rank() as i32))
    }

    pub fn basis_f64(&self) -> Vec<Vec<f64>> {
        let d = self.den.to_f64().unwrap_or(f64::NAN);
        self.numer
            .basis
            .iter()
            .map(|v| v.iter().map(|x| x.to_f64().unwrap_or(f64::NAN) / d).collect())
            .collect()
    }
}

/// Hermite basis of the lattice generated by `gens / den`.
pub fn hnf_basis_rational(gens: &[Vec<BigInt>], den: &BigInt) -> Result<RationalLattice> {
    if den.is_zero() {
        return Err(LabError::ZeroInput);
    }
    Ok(RationalLattice { numer: hnf_basis(gens)?, den: den.abs() })
}

/// Integer kernel basis of `x -> A x` where `a` is given by rows.
pub fn integer_kernel(a: &[Vec<BigInt>], n: usize) -> Vec<Vec<BigInt>> {
    let m = a.len();
    let aug: Vec<Vec<BigInt>> = (0..n)
        .map(|i| {
            let mut row: Vec<BigInt> = (0..m).map(|r| a[r][i].clone()).collect();
            row.extend((0..n).map(|j| if i == j { BigInt::one() } else { BigInt::zero() }));
            row
        })
        .collect();
    hnf_rows(&aug)
        .into_iter()
        .filter(|row| row[..m].iter().all(|x| x.is_zero()))
        .map(|row| row[m..].to_vec())
        .collect()
}

/// Matrix of `x -> x ^ w` for `w` in the `k`-th exterior power.
fn wedge_map(w: &[BigInt], n: usize, k: usize) -> Vec<Vec<BigInt>> {
    let sk: Vec<Vec<usize>> = subsets(n, k);
    let index: BTreeMap<Vec<usize>, usize> =
        sk.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
    subsets(n, k + 1)
        .iter()
        .map(|s| {
            (0..n)
                .map(|i| {
                    if let Some(pos) = s.iter().position(|&x| x == i) {
                        let rest: Vec<usize> = s.iter().copied().filter(|&x| x != i).collect();
                        let v = &w[index[&rest]];
                        if pos % 2 == 0 {
                            v.clone()
                        } else {
                            -v.clone()
                        }
                    } else {
                        BigInt::zero()
                    }
                })
                .collect()
        })
        .collect()
}

/// The primitive sublattice with Plücker vector `w`, if `w` is a primitive
/// decomposable vector.
pub fn lattice_from_plucker(w: &[BigInt], n: usize, k: usize) -> Option<IntegerLattice> {
    if !gcd_all(w).is_one() {
        return None;
    }
    let kernel = if k == n {
        (0..n)
            .map(|i| (0..n).map(|j| BigInt::from(i64::from(i == j))).collect())
            .collect()
    } else {
        integer_kernel(&wedge_map(w, n, k), n)
    };
    if kernel.len() != k {
        return None;
    }
    let lat = IntegerLattice { dim: n, basis: hnf_rows(&kernel) };
    let mut want = w.to_vec();
    canonical_sign(&mut want);
    (lat.plucker_canonical() == want).then_some(lat)
}

/// All primitive rank-`rank` sublattices `L` of `Z^dim` whose image under at
/// least one of `transforms` has norm at most `bound`, where the norm of a
/// sublattice is the chosen norm of its transformed Plücker vector. For the
/// Euclidean norm this is the covolume.
///
/// Results are sorted by canonical Plücker vector and deduplicated.
pub fn enumerate_primitive(
    dim: usize,
    rank: usize,
    bound: f64,
    norm: NormKind,
    transforms: &[DMatrix<f64>],
) -> Result<Vec<IntegerLattice>> {
    if rank == 0 || rank > dim {
        return Err(LabError::InvalidParameter(format!("rank {rank} in dimension {dim}")));
    }
    let mut found: BTreeMap<Vec<BigInt>, IntegerLattice> = BTreeMap::new();
    let budget = node_budget();
    for t in transforms {
        if t.nrows() != dim || t.ncols() != dim {
            return Err(LabError::NonInvertibleBasis { det: 0.0 });
        }
        let w = exterior_power(t, rank);
        let nn = w.nrows();
        let basis = UnimodularBasis::new(w)?;
        let (b, tr) = lll_columns(&basis, 0.99)?;
        let r2 = match norm {
            NormKind::Euclidean => bound * bound,
            NormKind::Sup => nn as f64 * bound * bound,
        } * (1.0 + 1e-9);
        let mut cands: Vec<Vec<i64>> = Vec::new();
        enumerate_ball(&b, r2, budget, |x, v| {
            if norm.of(v) <= bound * (1.0 + 1e-9) {
                cands.push(map_coeffs(&tr, x));
            }
            Visit::Continue
        })?;
        for c in cands {
            let mut wv: Vec<BigInt> = c.iter().map(|&x| BigInt::from(x)).collect();
            canonical_sign(&mut wv);
            if found.contains_key(&wv) {
                continue;
            }
            if let Some(lat) = lattice_from_plucker(&wv, dim, rank) {
                found.insert(wv, lat);
            }
        }
    }
    Ok(found.into_values().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bi(v: &[i64]) -> Vec<BigInt> {
        v.iter().map(|&x| BigInt::from(x)).collect()
    }

    #[test]
    fn shortest_vector_of_half_integer_basis() {
        let b = UnimodularBasis::from_columns(&[vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        let v = shortest_vector(&b, NormKind::Euclidean, None).unwrap().unwrap();
        assert_relative_eq!(v.length, 2f64.sqrt() / 2.0, epsilon = 1e-15);
        let img = b.apply(&v.coeffs);
        assert_relative_eq!(NormKind::Euclidean.of(&img), v.length, epsilon = 1e-15);
        // Four vectors tie: +-b2 and +-(b2 - b1).
        let ties = [vec![0, 1], vec![0, -1], vec![-1, 1], vec![1, -1]];
        assert!(ties.contains(&v.coeffs), "{:?}", v.coeffs);
    }

    #[test]
    fn sup_norm_early_exit_on_z2() {
        let b = UnimodularBasis::identity(2);
        assert!(shortest_vector(&b, NormKind::Sup, Some(0.99)).unwrap().is_none());
        let v = shortest_vector(&b, NormKind::Sup, Some(1.0)).unwrap().unwrap();
        assert_eq!(v.length, 1.0);
    }

    /// Brute force over a coefficient box as an independent oracle.
    fn brute_min(b: &UnimodularBasis, norm: NormKind, r: i64) -> f64 {
        let n = b.dim();
        let mut best = f64::INFINITY;
        let mut x = vec![-r; n];
        loop {
            if x.iter().any(|&c| c != 0) {
                best = best.min(norm.of(&b.apply(&x)));
            }
            let mut i = 0;
            while i < n {
                x[i] += 1;
                if x[i] <= r {
                    break;
                }
                x[i] = -r;
                i += 1;
            }
            if i == n {
                break;
            }
        }
        best
    }

    #[test]
    fn shortest_vector_matches_brute_force() {
        let mut rng = crate::rng::RngStream::new(11, 0);
        for _ in 0..40 {
            let n = 2 + rng.below(2) as usize;
            let cols: Vec<Vec<f64>> =
                (0..n).map(|_| (0..n).map(|_| rng.uniform_in(-2.0, 2.0)).collect()).collect();
            let Ok(b) = UnimodularBasis::from_columns(&cols) else { continue };
            if b.det().abs() < 0.3 {
                continue;
            }
            for norm in [NormKind::Euclidean, NormKind::Sup] {
                let v = shortest_vector(&b, norm, None).unwrap().unwrap();
                let bf = brute_min(&b, norm, 12);
                assert!((v.length - bf).abs() < 1e-9, "{} vs {}", v.length, bf);
            }
        }
    }

    #[test]
    fn lll_transform_is_unimodular_and_consistent() {
        let b = UnimodularBasis::from_columns(&[
            vec![1.0, 0.0, 0.0],
            vec![1000.3, 1.0, 0.0],
            vec![-77.1, 500.2, 1.0],
        ])
        .unwrap();
        let (r, t) = lll_reduce(&b, 0.99).unwrap();
        assert_eq!(t.det().abs(), BigInt::one());
        let tf = DMatrix::from_row_slice(3, 3, &t.to_f64());
        let prod = b.matrix() * tf;
        assert!((prod - r.matrix()).abs().max() < 1e-8);
    }

    #[test]
    fn height_examples() {
        let b = UnimodularBasis::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5])).unwrap();
        assert_relative_eq!(height(&b).unwrap(), 2.0, epsilon = 1e-14);
        // a_t u(1/3) at t = ln 10 with a_t = diag(e^t, e^-t).
        let m = DMatrix::from_row_slice(2, 2, &[10.0, 10.0 / 3.0, 0.0, 0.1]);
        let b = UnimodularBasis::new(m).unwrap();
        assert_relative_eq!(height(&b).unwrap(), 10.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn covolume_examples() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 2.0]);
        assert_relative_eq!(covolume(&g).unwrap(), 2.0, epsilon = 1e-14);
        let v = DMatrix::from_column_slice(2, 1, &[3.0, 4.0]);
        assert_relative_eq!(covolume(&v).unwrap(), 5.0, epsilon = 1e-14);
        let dep = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 1.0, 2.0]);
        assert_eq!(covolume(&dep), Err(LabError::RankDeficient));
    }

    #[test]
    fn hnf_example() {
        let l = hnf_basis(&[bi(&[2, 0]), bi(&[1, 1]), bi(&[0, 2])]).unwrap();
        assert_eq!(l.basis, vec![bi(&[1, 1]), bi(&[0, 2])]);
        assert_eq!(l.index(), Some(BigInt::from(2)));
        let half = hnf_basis_rational(&[bi(&[2, 0]), bi(&[0, 2]), bi(&[1, 1])], &BigInt::from(2)).unwrap();
        assert_relative_eq!(half.covolume().unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(hnf_basis(&[bi(&[0, 0])]), Err(LabError::ZeroInput));
    }

    #[test]
    fn enumerate_primitive_rank_one_sup_ball() {
        let got =
            enumerate_primitive(2, 1, 1.0, NormKind::Sup, &[DMatrix::identity(2, 2)]).unwrap();
        let mut vecs: Vec<Vec<BigInt>> = got.iter().map(|l| l.basis[0].clone()).collect();
        vecs.iter_mut().for_each(|v| canonical_sign(v));
        vecs.sort();
        let mut want = vec![bi(&[1, 0]), bi(&[0, 1]), bi(&[1, 1]), bi(&[1, -1])];
        want.sort();
        assert_eq!(vecs, want);
    }

    #[test]
    fn enumerate_primitive_planes_in_r3() {
        let got = enumerate_primitive(3, 2, 1.0, NormKind::Euclidean, &[DMatrix::identity(3, 3)])
            .unwrap();
        assert_eq!(got.len(), 3);
        for l in &got {
            assert_relative_eq!(l.covolume().unwrap(), 1.0, epsilon = 1e-14);
            assert!(l.is_primitive());
        }
        let none = enumerate_primitive(3, 2, 0.5, NormKind::Euclidean, &[DMatrix::identity(3, 3)])
            .unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn enumerate_primitive_matches_brute_force_planes() {
        // Oracle: all planes spanned by pairs of small integer vectors,
        // saturated through their Plücker vectors.
        let t = DMatrix::from_row_slice(3, 3, &[1.0, 0.4, -0.2, 0.0, 1.3, 0.5, 0.3, 0.0, 0.8]);
        let bound = 1.6;
        let got = enumerate_primitive(3, 2, bound, NormKind::Euclidean, std::slice::from_ref(&t)).unwrap();
        let mut oracle = std::collections::BTreeSet::new();
        let r = 3i64;
        let mut vs = Vec::new();
        for a in -r..=r {
            for b in -r..=r {
                for c in -r..=r {
                    if (a, b, c) != (0, 0, 0) {
                        vs.push([a, b, c]);
                    }
                }
            }
        }
        for u in &vs {
            for v in &vs {
                let cross = [
                    u[0] * v[1] - u[1] * v[0],
                    u[0] * v[2] - u[2] * v[0],
                    u[1] * v[2] - u[2] * v[1],
                ];
                let g = crate::exact::gcd_i64(&cross);
                if g == 0 {
                    continue;
                }
                let mut w: Vec<BigInt> = cross.iter().map(|&x| BigInt::from(x / g)).collect();
                canonical_sign(&mut w);
                let lat = lattice_from_plucker(&w, 3, 2).unwrap();
                if lat.covolume_under(&t).unwrap() <= bound {
                    oracle.insert(w);
                }
            }
        }
        let mine: std::collections::BTreeSet<Vec<BigInt>> =
            got.iter().map(|l| l.plucker_canonical()).collect();
        assert_eq!(mine, oracle);
    }

    #[test]
    fn kernel_recovers_line_and_hyperplane() {
        let l = lattice_from_plucker(&bi(&[2, 3, 0]), 3, 1).unwrap();
        assert_eq!(l.basis, vec![bi(&[2, 3, 0])]);
        let h = lattice_from_plucker(&bi(&[1, 0, 0]), 3, 2).unwrap();
        assert_eq!(h.plucker_canonical(), bi(&[1, 0, 0]));
        assert!(lattice_from_plucker(&bi(&[2, 4, 0]), 3, 1).is_none());
    }

    #[test]
    fn first_two_minima_of_diagonal() {
        let b = UnimodularBasis::new(DMatrix::from_row_slice(
            3,
            3,
            &[0.5, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 2.0 / 3.0],
        ))
        .unwrap();
        let (l1, l2) = first_two_minima(&b).unwrap();
        assert_relative_eq!(l1, 0.5, epsilon = 1e-14);
        assert_relative_eq!(l2, 2.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn budget_is_enforced() {
        let b = UnimodularBasis::identity(4);
        let r = shortest_vector_with_budget(&b, NormKind::Sup, Some(0.5), 3);
        assert!(matches!(r, Err(LabError::EnumerationBudgetExceeded { .. })));
    }
}
