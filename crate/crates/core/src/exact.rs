//! Exact dyadic rationals and integer matrices.
//!
//! Long orbit segments amplify every rounding error exponentially, so the
//! orbit tracker keeps its state in these types and only converts to floating
//! point for lattice reduction.

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::fmt;

use crate::error::{LabError, Result};
use crate::rng::RngStream;

/// The number `mant * 2^exp`.
#[derive(Clone, PartialEq, Eq)]
pub struct Dyadic {
    pub mant: BigInt,
    pub exp: i64,
}

impl fmt::Debug for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dyadic({} * 2^{})", self.mant, self.exp)
    }
}

impl Dyadic {
    pub fn zero() -> Self {
        Self { mant: BigInt::zero(), exp: 0 }
    }

    pub fn one() -> Self {
        Self::from_int(1)
    }

    pub fn from_int(n: i64) -> Self {
        Self { mant: BigInt::from(n), exp: 0 }
    }

    /// Exact conversion of a finite double.
    pub fn from_f64(x: f64) -> Result<Self> {
        if !x.is_finite() {
            return Err(LabError::InvalidParameter(format!("non-finite value {x}")));
        }
        if x == 0.0 {
            return Ok(Self::zero());
        }
        let bits = x.to_bits();
        let sign = if bits >> 63 == 0 { 1i64 } else { -1 };
        let raw_exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (m, e) = if raw_exp == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), raw_exp - 1075)
        };
        Ok(Self { mant: BigInt::from(m) * sign, exp: e }.normalized())
    }

    /// Uniform random number in `[0, 1)` with `bits` random binary digits.
    pub fn random_unit(rng: &mut RngStream, bits: u32) -> Self {
        let nbytes = bits.div_ceil(8) as usize;
        let mut buf = vec![0u8; nbytes];
        rng.fill_bytes(&mut buf);
        let mut m = BigUint::from_bytes_le(&buf);
        let excess = nbytes as u32 * 8 - bits;
        m >>= excess;
        Self { mant: BigInt::from_biguint(Sign::Plus, m), exp: -(bits as i64) }.normalized()
    }

    /// Strip trailing binary zeros from the mantissa.
    pub fn normalized(mut self) -> Self {
        if self.mant.is_zero() {
            self.exp = 0;
            return self;
        }
        if let Some(tz) = self.mant.trailing_zeros() {
            if tz > 0 {
                self.mant >>= tz as usize;
                self.exp += tz as i64;
            }
        }
        self
    }

    pub fn is_zero(&self) -> bool {
        self.mant.is_zero()
    }

    pub fn neg(&self) -> Self {
        Self { mant: -self.mant.clone(), exp: self.exp }
    }

    pub fn add(&self, other: &Self) -> Self {
        if self.is_zero() {
            return other.clone();
        }
        if other.is_zero() {
            return self.clone();
        }
        let e = self.exp.min(other.exp);
        let a = &self.mant << (self.exp - e) as usize;
        let b = &other.mant << (other.exp - e) as usize;
        Self { mant: a + b, exp: e }.normalized()
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self { mant: &self.mant * &other.mant, exp: self.exp + other.exp }.normalized()
    }

    /// Nearest double (truncating below 64 significant bits, which is far
    /// beyond double precision).
    pub fn to_f64(&self) -> f64 {
        let (f, e) = split_bigint(&self.mant);
        ldexp(f, e + self.exp)
    }

    /// Integer mantissa as a signed value, if it fits.
    pub fn mant_i64(&self) -> Option<i64> {
        self.mant.to_i64()
    }
}

/// Write `n = f * 2^e` with `|f|` in `[0.5, 1)`, using the top 64 bits of `n`.
pub fn split_bigint(n: &BigInt) -> (f64, i64) {
    let bits = n.bits() as i64;
    if bits == 0 {
        return (0.0, 0);
    }
    let shift = (bits - 64).max(0);
    let top = if shift > 0 { n >> shift as usize } else { n.clone() };
    let f = top.to_f64().unwrap_or(0.0);
    let f = ldexp(f, -(bits - shift));
    (f, bits)
}

/// `x * 2^e` without intermediate overflow.
pub fn ldexp(mut x: f64, mut e: i64) -> f64 {
    while e > 1000 {
        x *= 2f64.powi(1000);
        e -= 1000;
        if x.is_infinite() {
            return x;
        }
    }
    while e < -1000 {
        x *= 2f64.powi(-1000);
        e += 1000;
        if x == 0.0 {
            return x;
        }
    }
    x * 2f64.powi(e as i32)
}

/// `n * 2^a * exp(b)` evaluated in log space, so huge mantissas and huge
/// flow factors can cancel without overflow.
pub fn scaled_bigint(n: &BigInt, a: i64, b: f64) -> f64 {
    let (f, e) = split_bigint(n);
    if f == 0.0 {
        return 0.0;
    }
    let log = (e + a) as f64 * std::f64::consts::LN_2 + b;
    f * log.exp()
}

/// Dense integer matrix in row-major order.
#[derive(Clone, PartialEq, Eq)]
pub struct IntMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<BigInt>,
}

impl fmt::Debug for IntMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IntMatrix[")?;
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|j| self.get(i, j).to_string()).collect();
            write!(f, "[{}]", row.join(", "))?;
        }
        write!(f, "]")
    }
}

impl IntMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![BigInt::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = BigInt::one();
        }
        m
    }

    pub fn from_i64(rows: usize, cols: usize, entries: &[i64]) -> Self {
        assert_eq!(entries.len(), rows * cols);
        Self { rows, cols, data: entries.iter().map(|&x| BigInt::from(x)).collect() }
    }

    pub fn get(&self, i: usize, j: usize) -> &BigInt {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: BigInt) {
        self.data[i * self.cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<BigInt> {
        (0..self.rows).map(|i| self.get(i, j).clone()).collect()
    }

    pub fn mul(&self, other: &IntMatrix) -> IntMatrix {
        assert_eq!(self.cols, other.rows);
        let mut out = IntMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let b = other.get(k, j);
                    if !b.is_zero() {
                        out.data[i * other.cols + j] += a * b;
                    }
                }
            }
        }
        out
    }

    /// Product with a small integer matrix given row-major.
    pub fn mul_small(&self, v: &[i64], vcols: usize) -> IntMatrix {
        assert_eq!(v.len(), self.cols * vcols);
        let mut out = IntMatrix::zeros(self.rows, vcols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..vcols {
                    let b = v[k * vcols + j];
                    if b != 0 {
                        out.data[i * vcols + j] += a * b;
                    }
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[BigInt]) -> Vec<BigInt> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j) * &x[j]).sum())
            .collect()
    }

    /// Determinant by fraction-free elimination.
    pub fn det(&self) -> BigInt {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        if n == 0 {
            return BigInt::one();
        }
        let mut a: Vec<Vec<BigInt>> =
            (0..n).map(|i| (0..n).map(|j| self.get(i, j).clone()).collect()).collect();
        let mut sign = BigInt::one();
        let mut prev = BigInt::one();
        for k in 0..n - 1 {
            if a[k][k].is_zero() {
                match (k + 1..n).find(|&r| !a[r][k].is_zero()) {
                    Some(r) => {
                        a.swap(k, r);
                        sign = -sign;
                    }
                    None => return BigInt::zero(),
                }
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    let v = &a[i][j] * &a[k][k] - &a[i][k] * &a[k][j];
                    a[i][j] = v / &prev;
                }
            }
            prev = a[k][k].clone();
        }
        sign * &a[n - 1][n - 1]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect()
    }

    pub fn max_bits(&self) -> u64 {
        self.data.iter().map(|x| x.bits()).max().unwrap_or(0)
    }
}

/// Square matrix whose row `i` is `mant[i][..] * 2^exp[i]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RowScaledMatrix {
    pub mant: IntMatrix,
    pub exp: Vec<i64>,
}

impl RowScaledMatrix {
    /// Exact representation of a matrix of dyadic numbers given row-major.
    pub fn from_dyadics(rows: usize, cols: usize, entries: &[Dyadic]) -> Self {
        assert_eq!(entries.len(), rows * cols);
        let mut mant = IntMatrix::zeros(rows, cols);
        let mut exp = vec![0i64; rows];
        for i in 0..rows {
            let row = &entries[i * cols..(i + 1) * cols];
            let e = row.iter().filter(|d| !d.is_zero()).map(|d| d.exp).min().unwrap_or(0);
            exp[i] = e;
            for (j, d) in row.iter().enumerate() {
                if !d.is_zero() {
                    mant.set(i, j, &d.mant << (d.exp - e) as usize);
                }
            }
        }
        Self { mant, exp }
    }

    pub fn rows(&self) -> usize {
        self.mant.rows
    }

    pub fn cols(&self) -> usize {
        self.mant.cols
    }

    /// Right multiplication by an integer matrix keeps the row scales.
    pub fn mul_int(&self, v: &IntMatrix) -> Self {
        Self { mant: self.mant.mul(v), exp: self.exp.clone() }
    }

    pub fn mul_small(&self, v: &[i64], vcols: usize) -> Self {
        Self { mant: self.mant.mul_small(v, vcols), exp: self.exp.clone() }
    }

    pub fn entry(&self, i: usize, j: usize) -> Dyadic {
        Dyadic { mant: self.mant.get(i, j).clone(), exp: self.exp[i] }.normalized()
    }

    /// Entries scaled row-wise by `exp(w_i * t)`, row-major.
    pub fn scaled_f64(&self, weights: &[f64], t: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                out.push(scaled_bigint(self.mant.get(i, j), self.exp[i], weights[i] * t));
            }
        }
        out
    }

    /// Remove common powers of two from each row.
    pub fn compact(&mut self) {
        for i in 0..self.rows() {
            let mut tz: Option<u64> = None;
            for j in 0..self.cols() {
                if let Some(z) = self.mant.get(i, j).trailing_zeros() {
                    tz = Some(tz.map_or(z, |t: u64| t.min(z)));
                }
            }
            if let Some(z) = tz {
                if z > 0 {
                    for j in 0..self.cols() {
                        let v = self.mant.get(i, j) >> z as usize;
                        self.mant.set(i, j, v);
                    }
                    self.exp[i] += z as i64;
                }
            }
        }
    }
}

/// Greatest common divisor of a list of integers (non-negative).
pub fn gcd_all(xs: &[BigInt]) -> BigInt {
    xs.iter().fold(BigInt::zero(), |g, x| g.gcd(x))
}

pub fn gcd_i64(xs: &[i64]) -> i64 {
    xs.iter().fold(0i64, |g, &x| g.gcd(&x)).abs()
}

/// Whether a vector is zero.
pub fn is_zero_vec(xs: &[BigInt]) -> bool {
    xs.iter().all(|x| x.is_zero())
}

/// Make the first nonzero entry positive.
pub fn canonical_sign(xs: &mut [BigInt]) {
    if let Some(first) = xs.iter().find(|x| !x.is_zero()) {
        if first.is_negative() {
            for x in xs.iter_mut() {
                *x = -x.clone();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dyadic_roundtrip_f64() {
        for &x in &[0.0, 1.0, -2.5, 1e-300, 3.25, 1e300, 5e-324] {
            let d = Dyadic::from_f64(x).unwrap();
            assert_eq!(d.to_f64(), x);
        }
    }

    #[test]
    fn dyadic_arithmetic_is_exact() {
        let a = Dyadic::from_f64(0.1).unwrap();
        let b = Dyadic::from_f64(0.2).unwrap();
        let s = a.add(&b);
        // 0.1 + 0.2 in exact arithmetic differs from the rounded double sum.
        assert_ne!(Dyadic::from_f64(0.1 + 0.2).unwrap(), s);
        assert_eq!(s.sub(&b), a);
        let p = a.mul(&b);
        assert!((p.to_f64() - 0.02).abs() < 1e-17);
    }

    #[test]
    fn random_unit_in_range_and_has_bits() {
        let mut rng = RngStream::new(5, 0);
        let d = Dyadic::random_unit(&mut rng, 500);
        let x = d.to_f64();
        assert!((0.0..1.0).contains(&x));
        assert!(d.exp >= -500);
    }

    #[test]
    fn determinant_matches_cofactor_expansion() {
        let m = IntMatrix::from_i64(3, 3, &[2, -1, 0, 4, 3, 7, -5, 1, 1]);
        // Cofactor expansion by hand: 2*(3-7) - (-1)*(4+35) + 0 = -8 + 39 = 31.
        assert_eq!(m.det(), BigInt::from(31));
        let z = IntMatrix::from_i64(2, 2, &[0, 1, 0, 2]);
        assert_eq!(z.det(), BigInt::zero());
        let swap = IntMatrix::from_i64(2, 2, &[0, 1, 1, 0]);
        assert_eq!(swap.det(), BigInt::from(-1));
    }

    #[test]
    fn scaled_bigint_handles_huge_cancellation() {
        let n = BigInt::one() << 3000usize;
        let v = scaled_bigint(&n, -3000, 0.0);
        assert!((v - 1.0).abs() < 1e-15);
        let v = scaled_bigint(&BigInt::from(3), -1, 2.0f64.ln());
        assert!((v - 3.0).abs() < 1e-15);
    }

    #[test]
    fn row_scaled_from_dyadics() {
        let e: Vec<Dyadic> = [0.5, 0.25, 3.0, 1.0]
            .iter()
            .map(|&x| Dyadic::from_f64(x).unwrap())
            .collect();
        let m = RowScaledMatrix::from_dyadics(2, 2, &e);
        let f = m.scaled_f64(&[0.0, 0.0], 0.0);
        assert_eq!(f, vec![0.5, 0.25, 3.0, 1.0]);
        assert_eq!(m.entry(0, 1), e[1]);
    }
}
