//! Real univariate polynomials with robust root isolation on intervals.

use serde::{Deserialize, Serialize};

/// Polynomial with coefficients in ascending order: `c[0] + c[1] x + ...`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Poly {
    pub coeffs: Vec<f64>,
}

impl Poly {
    pub fn new(coeffs: Vec<f64>) -> Self {
        let mut p = Self { coeffs };
        p.trim();
        p
    }

    pub fn zero() -> Self {
        Self { coeffs: vec![] }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c])
    }

    /// The monomial `x^k`.
    pub fn monomial(k: usize) -> Self {
        let mut c = vec![0.0; k + 1];
        c[k] = 1.0;
        Self { coeffs: c }
    }

    fn trim(&mut self) {
        while matches!(self.coeffs.last(), Some(&c) if c == 0.0) {
            self.coeffs.pop();
        }
    }

    /// Degree, with the zero polynomial reported as degree 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Poly {
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        )
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.coeffs.len().max(other.coeffs.len());
        Poly::new(
            (0..n)
                .map(|k| {
                    self.coeffs.get(k).copied().unwrap_or(0.0)
                        + other.coeffs.get(k).copied().unwrap_or(0.0)
                })
                .collect(),
        )
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, a: f64) -> Poly {
        Poly::new(self.coeffs.iter().map(|c| c * a).collect())
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.is_zero() || other.is_zero() {
            return Poly::zero();
        }
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }

    /// Largest absolute coefficient.
    pub fn max_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Real roots in `[a, b]`, sorted, found by recursion on the derivative.
    ///
    /// Roots of even multiplicity are reported when the polynomial value at a
    /// critical point is within `touch_tol` of zero.
    pub fn roots_in(&self, a: f64, b: f64, touch_tol: f64) -> Vec<f64> {
        if self.degree() == 0 {
            return vec![];
        }
        let crit = if self.degree() >= 2 {
            self.derivative().roots_in(a, b, 0.0)
        } else {
            vec![]
        };
        let mut knots = vec![a];
        knots.extend(crit.iter().copied().filter(|&c| c > a && c < b));
        knots.push(b);
        let mut roots: Vec<f64> = Vec::new();
        let push = |roots: &mut Vec<f64>, x: f64| {
            if roots.last().is_none_or(|&l| (x - l).abs() > 1e-14 * (1.0 + x.abs())) {
                roots.push(x);
            }
        };
        for w in knots.windows(2) {
            let (l, r) = (w[0], w[1]);
            let (fl, fr) = (self.eval(l), self.eval(r));
            if fl == 0.0 || fl.abs() <= touch_tol {
                push(&mut roots, l);
            }
            if fl.signum() * fr.signum() < 0.0 && fl != 0.0 && fr != 0.0 {
                push(&mut roots, bisect(self, l, r, fl));
            }
        }
        let fb = self.eval(b);
        if fb == 0.0 || fb.abs() <= touch_tol {
            push(&mut roots, b);
        }
        roots
    }

    /// Maximum of `|p|` over `[a, b]`.
    pub fn max_abs_on(&self, a: f64, b: f64) -> f64 {
        let mut m = self.eval(a).abs().max(self.eval(b).abs());
        for c in self.derivative().roots_in(a, b, 0.0) {
            m = m.max(self.eval(c).abs());
        }
        m
    }

    /// Minimum of `p` over `[a, b]`.
    pub fn min_on(&self, a: f64, b: f64) -> f64 {
        let mut m = self.eval(a).min(self.eval(b));
        for c in self.derivative().roots_in(a, b, 0.0) {
            m = m.min(self.eval(c));
        }
        m
    }

    /// Connected components of `{x in [a, b] : p(x) <= threshold}`.
    ///
    /// A critical value that meets the threshold within a relative tolerance
    /// of `1e-9` produces a degenerate component `[x, x]`.
    pub fn sublevel_components(&self, threshold: f64, a: f64, b: f64) -> Vec<(f64, f64)> {
        let q = self.sub(&Poly::constant(threshold));
        let tol = 1e-9 * threshold.abs().max(1e-300);
        let mut knots = vec![a];
        if q.degree() >= 1 {
            for r in q.roots_in(a, b, 0.0) {
                knots.push(r);
            }
            if q.degree() >= 2 {
                for c in q.derivative().roots_in(a, b, 0.0) {
                    knots.push(c);
                }
            }
        }
        knots.push(b);
        knots.retain(|&x| x >= a && x <= b);
        knots.sort_by(|x, y| x.partial_cmp(y).unwrap());
        knots.dedup_by(|x, y| (*x - *y).abs() <= 1e-15 * (1.0 + y.abs()));
        if knots.len() == 1 {
            return if q.eval(a) <= tol { vec![(a, a)] } else { vec![] };
        }
        let pieces: Vec<bool> = knots
            .windows(2)
            .map(|w| q.eval(0.5 * (w[0] + w[1])) <= 0.0)
            .collect();
        let mut comps: Vec<(f64, f64)> = Vec::new();
        let mut open: Option<f64> = None;
        for (i, &x) in knots.iter().enumerate() {
            let left = i > 0 && pieces[i - 1];
            let right = i < pieces.len() && pieces[i];
            let point = left || right || q.eval(x) <= tol;
            match (open, point) {
                (None, true) if right => open = Some(x),
                (None, true) => comps.push((x, x)),
                (Some(s), true) if !right => {
                    comps.push((s, x));
                    open = None;
                }
                _ => {}
            }
        }
        if let Some(s) = open {
            comps.push((s, b));
        }
        comps
    }
}

fn bisect(p: &Poly, mut l: f64, mut r: f64, fl: f64) -> f64 {
    let sl = fl.signum();
    for _ in 0..200 {
        let m = 0.5 * (l + r);
        if m <= l || m >= r {
            break;
        }
        let fm = p.eval(m);
        if fm == 0.0 {
            return m;
        }
        if fm.signum() == sl {
            l = m;
        } else {
            r = m;
        }
    }
    0.5 * (l + r)
}
