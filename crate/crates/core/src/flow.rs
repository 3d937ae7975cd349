//! Diagonal flows, polynomial curves in `SL_n`, and exact orbit tracking.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::exact::{Dyadic, IntMatrix, RowScaledMatrix};
use crate::lattice::{lll_columns, UnimodularBasis};
use crate::poly::Poly;

/// A one-parameter diagonal flow `a_t = diag(exp(w_i t))` with weights
/// summing to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub weights: Vec<f64>,
}

impl FlowSpec {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !w.is_finite()) {
            return Err(LabError::InvalidParameter("flow weights must be finite".into()));
        }
        let sum: f64 = weights.iter().sum();
        let scale = weights.iter().fold(0.0f64, |m, w| m.max(w.abs())).max(1.0);
        if sum.abs() > 1e-12 * scale * weights.len() as f64 {
            return Err(LabError::InvalidParameter(format!("flow weights sum to {sum}")));
        }
        Ok(Self { weights })
    }

    /// `diag(e^{t/m} (m times), e^{-t/n} (n times))`.
    pub fn main_flow(m: usize, n: usize) -> Self {
        let mut w = vec![1.0 / m as f64; m];
        w.extend(std::iter::repeat_n(-1.0 / n as f64, n));
        Self { weights: w }
    }

    /// `diag(e^{dt}, e^{-t}, ..., e^{-t})` acting on `R^{d+1}`.
    pub fn dirichlet_flow(d: usize) -> Self {
        let mut w = vec![d as f64];
        w.extend(std::iter::repeat_n(-1.0, d));
        Self { weights: w }
    }

    /// `diag(e^t, ..., e^t, e^{-dt})` acting on `R^{d+1}`.
    pub fn transposed_dirichlet_flow(d: usize) -> Self {
        let mut w = vec![1.0; d];
        w.push(-(d as f64));
        Self { weights: w }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn max_abs_weight(&self) -> f64 {
        self.weights.iter().fold(0.0, |m, w| m.max(w.abs()))
    }

    /// Spread between the largest and smallest weight, which is the top
    /// expansion rate of the adjoint action.
    pub fn expansion_rate(&self) -> f64 {
        let max = self.weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = self.weights.iter().cloned().fold(f64::INFINITY, f64::min);
        max - min
    }

    /// Most negative weight in absolute value; sets the precision a starting
    /// point needs to survive until a given time.
    pub fn contraction_rate(&self) -> f64 {
        -self.weights.iter().cloned().fold(0.0, f64::min)
    }

    /// Random binary digits needed for a starting point on a curve whose
    /// orbit is followed up to time `t_max`.
    pub fn bits_for_horizon(&self, t_max: f64) -> u32 {
        (self.contraction_rate() * t_max.abs() / std::f64::consts::LN_2).ceil() as u32 + 64
    }

    /// Binary digits per coordinate for a point `xi` of `R^d` whose
    /// coordinates are independent dyadics. Integer relations among `d`
    /// such numbers with `b` digits have size about `2^{b/d}`, so each
    /// coordinate needs `d` times the curve budget.
    pub fn bits_for_horizon_free(&self, t_max: f64, d: usize) -> u32 {
        let base = (self.contraction_rate() * t_max.abs() / std::f64::consts::LN_2).ceil() as u32;
        base * d as u32 + 64
    }
}

/// The matrix `a_t`.
pub fn flow_matrix(spec: &FlowSpec, t: f64) -> Result<DMatrix<f64>> {
    let mw = spec.max_abs_weight();
    if mw * t.abs() > 650.0 {
        return Err(LabError::DynamicRangeExceeded { dt: t, max_weight: mw });
    }
    Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        spec.dim(),
        spec.weights.iter().map(|w| (w * t).exp()),
    )))
}

/// A polynomial map `s -> phi(s)` into `SL_n(R)`, entry-wise polynomial.
///
/// Curves of the form `u(psi(s))`, with `psi` placed in the top row right of
/// the diagonal, keep `psi` so that their tangent direction is available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialCurve {
    dim: usize,
    entries: Vec<Poly>,
    graph: Option<Vec<Poly>>,
}

impl PolynomialCurve {
    /// `u(psi(s))`: identity with `psi_1(s), ..., psi_d(s)` to the right of the
    /// top-left entry.
    pub fn top_row_graph(psi: Vec<Poly>) -> Result<Self> {
        let d = psi.len();
        if d == 0 {
            return Err(LabError::UnsupportedCurveShape("empty graph".into()));
        }
        let n = d + 1;
        let mut entries = vec![Poly::zero(); n * n];
        for i in 0..n {
            entries[i * n + i] = Poly::constant(1.0);
        }
        for (j, p) in psi.iter().enumerate() {
            entries[j + 1] = p.clone();
        }
        Ok(Self { dim: n, entries, graph: Some(psi) })
    }

    /// The curve with top row `(1, s, s^2, ..., s^d)`.
    pub fn moment(d: usize) -> Result<Self> {
        Self::top_row_graph((1..=d).map(Poly::monomial).collect())
    }

    /// A curve from arbitrary polynomial entries given row-major. The
    /// determinant must be identically one.
    pub fn from_entries(dim: usize, entries: Vec<Poly>) -> Result<Self> {
        if entries.len() != dim * dim || dim == 0 {
            return Err(LabError::UnsupportedCurveShape("entry count mismatch".into()));
        }
        let c = Self { dim, entries, graph: None };
        for k in 0..7 {
            let s = -1.5 + 0.5 * k as f64;
            let det = c.eval(s).determinant();
            if (det - 1.0).abs() > 1e-9 * (1.0 + c.eval(s).abs().max().powi(dim as i32)) {
                return Err(LabError::UnsupportedCurveShape(format!(
                    "det phi({s}) = {det}, not 1"
                )));
            }
        }
        Ok(c)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn graph(&self) -> Option<&[Poly]> {
        self.graph.as_deref()
    }

    pub fn degree(&self) -> usize {
        self.entries.iter().map(|p| p.degree()).max().unwrap_or(0)
    }

    pub fn eval(&self, s: f64) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.entries[i * self.dim + j].eval(s))
    }

    /// Exact evaluation at a dyadic point, row-major.
    pub fn eval_exact(&self, s: &Dyadic) -> Result<Vec<Dyadic>> {
        self.entries
            .iter()
            .map(|p| {
                let mut acc = Dyadic::zero();
                for &c in p.coeffs.iter().rev() {
                    acc = acc.mul(s).add(&Dyadic::from_f64(c)?);
                }
                Ok(acc)
            })
            .collect()
    }

    /// Entries as polynomials, row-major.
    pub fn entries(&self) -> &[Poly] {
        &self.entries
    }

    /// Whether `psi` avoids every proper affine subspace: the non-constant
    /// coefficients of its components are linearly independent.
    pub fn is_nondegenerate(&self) -> bool {
        let Some(psi) = &self.graph else { return false };
        let deg = psi.iter().map(|p| p.degree()).max().unwrap_or(0);
        if deg == 0 {
            return false;
        }
        let m = DMatrix::from_fn(psi.len(), deg, |i, k| {
            psi[i].coeffs.get(k + 1).copied().unwrap_or(0.0)
        });
        m.rank(1e-12) == psi.len()
    }
}

/// Derivative `psi'(s)` of a graph-form curve.
pub fn curve_tangent(curve: &PolynomialCurve, s: f64) -> Result<Vec<f64>> {
    let psi = curve
        .graph()
        .ok_or_else(|| LabError::UnsupportedCurveShape("tangent needs a graph-form curve".into()))?;
    Ok(psi.iter().map(|p| p.derivative().eval(s)).collect())
}

/// Exact upper unipotent `u(xi)` with `xi` in the top row, row-major.
pub fn top_row_unipotent(xi: &[Dyadic]) -> Vec<Dyadic> {
    let n = xi.len() + 1;
    let mut m = vec![Dyadic::zero(); n * n];
    for i in 0..n {
        m[i * n + i] = Dyadic::one();
    }
    for (j, x) in xi.iter().enumerate() {
        m[j + 1] = x.clone();
    }
    m
}

/// Exact unipotent with `xi` in the last column above the diagonal,
/// row-major.
pub fn last_column_unipotent(xi: &[Dyadic]) -> Vec<Dyadic> {
    let n = xi.len() + 1;
    let mut m = vec![Dyadic::zero(); n * n];
    for i in 0..n {
        m[i * n + i] = Dyadic::one();
    }
    for (i, x) in xi.iter().enumerate() {
        m[i * n + n - 1] = x.clone();
    }
    m
}

/// Follows `a_t g_0 Z^n` along the flow, keeping a reduced basis.
///
/// The exact state `g_0 U` (with `U` integral unimodular) is stored with
/// arbitrary precision; only the scaled, already reduced basis is ever
/// rounded, so the error does not grow with `t`.
#[derive(Debug, Clone)]
pub struct OrbitTracker {
    spec: FlowSpec,
    t: f64,
    start: RowScaledMatrix,
    state: RowScaledMatrix,
    transform: IntMatrix,
    basis: UnimodularBasis,
}

impl OrbitTracker {
    /// Start at `g_0` given exactly, row-major.
    pub fn new(spec: FlowSpec, start: &[Dyadic]) -> Result<Self> {
        let n = spec.dim();
        if start.len() != n * n {
            return Err(LabError::InvalidParameter("start matrix has wrong size".into()));
        }
        let start = RowScaledMatrix::from_dyadics(n, n, start);
        let basis = basis_of(&start, &spec.weights, 0.0)?;
        let mut tr = Self {
            spec,
            t: 0.0,
            state: start.clone(),
            start,
            transform: IntMatrix::identity(n),
            basis,
        };
        tr.reduce()?;
        Ok(tr)
    }

    /// Start at `phi(s)` for a curve evaluated exactly at `s`.
    pub fn from_curve(spec: FlowSpec, curve: &PolynomialCurve, s: &Dyadic) -> Result<Self> {
        if curve.dim() != spec.dim() {
            return Err(LabError::InvalidParameter("curve and flow dimensions differ".into()));
        }
        let m = curve.eval_exact(s)?;
        Self::new(spec, &m)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn spec(&self) -> &FlowSpec {
        &self.spec
    }

    /// Current reduced basis of `a_t g_0 Z^n`.
    pub fn basis(&self) -> &UnimodularBasis {
        &self.basis
    }

    /// Integer matrix `U` with `basis = a_t g_0 U`.
    pub fn transform(&self) -> &IntMatrix {
        &self.transform
    }

    /// Functional advance: returns the tracker at time `t + dt`.
    pub fn advance(&self, dt: f64) -> Result<Self> {
        let mut next = self.clone();
        next.advance_mut(dt)?;
        Ok(next)
    }

    pub fn advance_mut(&mut self, dt: f64) -> Result<()> {
        let mw = self.spec.max_abs_weight();
        if dt.abs() * mw > 50.0 {
            return Err(LabError::DynamicRangeExceeded { dt, max_weight: mw });
        }
        let spread = self.spec.expansion_rate();
        let steps = ((dt.abs() * spread).ceil() as usize).max(1);
        let t0 = self.t;
        for k in 1..=steps {
            self.t = t0 + dt * k as f64 / steps as f64;
            self.basis = basis_of(&self.state, &self.spec.weights, self.t)?;
            self.reduce()?;
        }
        Ok(())
    }

    fn reduce(&mut self) -> Result<()> {
        let n = self.spec.dim();
        for _ in 0..4 {
            let (_, cols) = lll_columns(&self.basis, 0.99)?;
            let mut flat = vec![0i64; n * n];
            let mut ident = true;
            for (j, c) in cols.iter().enumerate() {
                for i in 0..n {
                    flat[i * n + j] = c[i];
                    if c[i] != i64::from(i == j) {
                        ident = false;
                    }
                }
            }
            if ident {
                break;
            }
            self.state = self.state.mul_small(&flat, n);
            self.transform = self.transform.mul_small(&flat, n);
            self.state.compact();
            self.basis = basis_of(&self.state, &self.spec.weights, self.t)?;
        }
        if self.basis.det() < 0.0 {
            let mut flip = vec![0i64; n * n];
            for i in 0..n {
                flip[i * n + i] = if i == 0 { -1 } else { 1 };
            }
            self.state = self.state.mul_small(&flip, n);
            self.transform = self.transform.mul_small(&flip, n);
            self.basis = basis_of(&self.state, &self.spec.weights, self.t)?;
        }
        Ok(())
    }

    /// Largest relative deviation between the tracked basis and
    /// `a_t g_0 U` recomputed from the stored start and transform.
    pub fn reconstruction_error(&self) -> f64 {
        let direct = self.start.mul_int(&self.transform);
        let n = self.spec.dim();
        let want = direct.scaled_f64(&self.spec.weights, self.t);
        let got = self.basis.matrix();
        let scale = want.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
        let mut err = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                err = err.max((got[(i, j)] - want[i * n + j]).abs());
            }
        }
        err / scale
    }
}

fn basis_of(state: &RowScaledMatrix, weights: &[f64], t: f64) -> Result<UnimodularBasis> {
    let n = state.rows();
    let flat = state.scaled_f64(weights, t);
    UnimodularBasis::new(DMatrix::from_row_slice(n, n, &flat))
}

/// Weights and exponent of a diagonal flow that contracts the orbit of a
/// nilpotent matrix uniformly over long intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct JordanContraction {
    /// Jordan block sizes, in the order the weights are listed.
    pub block_sizes: Vec<usize>,
    /// Diagonal weights `b'`, one per coordinate of the Jordan basis.
    pub weights: Vec<f64>,
    pub delta: f64,
}

/// Jordan block layout of a matrix already in Jordan normal form.
fn jordan_layout(h: &DMatrix<f64>) -> Option<Vec<usize>> {
    let n = h.nrows();
    for i in 0..n {
        for j in 0..n {
            let v = h[(i, j)];
            let ok = if j == i + 1 { v == 0.0 || v == 1.0 } else { v == 0.0 };
            if !ok {
                return None;
            }
        }
    }
    let mut sizes = vec![];
    let mut cur = 1;
    for i in 0..n - 1 {
        if h[(i, i + 1)] == 1.0 {
            cur += 1;
        } else {
            sizes.push(cur);
            cur = 1;
        }
    }
    sizes.push(cur);
    Some(sizes)
}

/// Contracting weights for a nilpotent `h`.
///
/// When `h` is literally in Jordan normal form the weights follow its block
/// layout; otherwise blocks are listed by decreasing size.
pub fn jordan_contraction(h: &DMatrix<f64>) -> Result<JordanContraction> {
    let n = h.nrows();
    if n == 0 || h.ncols() != n {
        return Err(LabError::InvalidParameter("h must be square".into()));
    }
    let scale = h.abs().max();
    if scale == 0.0 {
        return Err(LabError::NotNilpotent);
    }
    let hn = (0..n).fold(DMatrix::identity(n, n), |acc, _| &acc * h);
    if hn.abs().max() > 1e-9 * scale.powi(n as i32) {
        return Err(LabError::NotNilpotent);
    }
    let sizes = match jordan_layout(h) {
        Some(s) => s,
        None => {
            let tol = 1e-9 * scale;
            let mut ranks = vec![n];
            let mut p = DMatrix::identity(n, n);
            for k in 1..=n {
                p = &p * h;
                ranks.push(p.rank(tol * scale.powi(k as i32 - 1)));
            }
            let at_least: Vec<usize> = (1..=n).map(|k| ranks[k - 1] - ranks[k]).collect();
            let mut sizes = vec![];
            for k in (1..=n).rev() {
                let exact = at_least[k - 1] - at_least.get(k).copied().unwrap_or(0);
                sizes.extend(std::iter::repeat_n(k, exact));
            }
            sizes
        }
    };
    let delta = sizes.iter().map(|&m| m as f64 * (m as f64 - 1.0) / 2.0).sum::<f64>() / n as f64;
    let mut weights = Vec::with_capacity(n);
    for &m in &sizes {
        let di = (m as f64 - 1.0) / 2.0;
        for j in 0..m {
            weights.push((1.0 - m as f64) / 2.0 + j as f64 - (delta - di));
        }
    }
    Ok(JordanContraction { block_sizes: sizes, weights, delta })
}

/// Both sides of the comparison between the size of a polynomial on `[0, s]`
/// and its scaled coefficients. Coefficients are given from the leading one
/// down: `P(x) = a_0 x^n + ... + a_n`.
pub fn poly_sup_equiv(coeffs: &[f64], s: f64) -> Result<(f64, f64)> {
    if coeffs.is_empty() {
        return Err(LabError::ZeroInput);
    }
    if s <= 0.0 {
        return Err(LabError::InvalidParameter("s must be positive".into()));
    }
    let n = coeffs.len() - 1;
    let asc: Vec<f64> = coeffs.iter().rev().copied().collect();
    let lhs = Poly::new(asc).max_abs_on(0.0, s);
    let rhs = coeffs
        .iter()
        .enumerate()
        .map(|(k, a)| (a * s.powi((n - k) as i32)).abs())
        .fold(0.0, f64::max);
    Ok((lhs, rhs))
}
