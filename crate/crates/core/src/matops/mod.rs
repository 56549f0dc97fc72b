//! Dense real matrix kernels sized for desk-scale problems (dimension <= 32).
//!
//! Everything here is deterministic and dependency-free: the exponential uses
//! scaling-and-squaring around a truncated series, the eigensolvers are
//! classic Householder + shifted-QR iterations, and the Lyapunov solve works
//! on the vectorized operator. No BLAS, no threads, bitwise-reproducible
//! results across runs.

mod eig;
mod lyap;

pub use eig::{eig_general, eig_sym, sym_eigen_decomp};
pub use lyap::solve_lyapunov;

pub(crate) use eig::complex_rank;

use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Relative asymmetry tolerated before a matrix is rejected as non-symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Dense row-major matrix of finite `f64` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension("matrix must have at least one row and column".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "expected {} entries for a {}x{} matrix, got {}",
                rows * cols,
                rows,
                cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("matrix entries must be finite".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Dimension("matrix must have at least one row".into()));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self.data[i * self.cols + k];
                if aik == 0.0 {
                    continue;
                }
                let row = k * other.cols;
                let dst = i * other.cols;
                for j in 0..other.cols {
                    out.data[dst + j] += aik * other.data[row + j];
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::Dimension(format!(
                "vector of length {} against {}x{} matrix",
                x.len(),
                self.rows,
                self.cols
            )));
        }
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            let row = i * self.cols;
            let mut acc = 0.0;
            for j in 0..self.cols {
                acc += self.data[row + j] * x[j];
            }
            out[i] = acc;
        }
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Dimension(format!(
                "shape mismatch: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        let mut best = 0.0f64;
        for j in 0..self.cols {
            let mut s = 0.0;
            for i in 0..self.rows {
                s += self.data[i * self.cols + j].abs();
            }
            best = best.max(s);
        }
        best
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Symmetric within `SYMMETRY_TOL` relative to the largest entry.
    pub fn is_symmetric(&self) -> bool {
        if !self.is_square() {
            return false;
        }
        let scale = self.max_abs();
        if scale == 0.0 {
            return true;
        }
        let n = self.rows;
        for i in 0..n {
            for j in (i + 1)..n {
                if (self.data[i * n + j] - self.data[j * n + i]).abs() > SYMMETRY_TOL * scale {
                    return false;
                }
            }
        }
        true
    }

    /// (A + A^T) / 2. Panics on non-square input.
    pub fn symmetrized(&self) -> Self {
        assert!(self.is_square(), "symmetrized requires a square matrix");
        let n = self.rows;
        let mut out = self.clone();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                out.data[i * n + j] = v;
                out.data[j * n + i] = v;
            }
        }
        out
    }

    /// Order-independent content hash, used to tie derived artifacts back to
    /// their inputs.
    pub fn fingerprint(&self) -> u64 {
        let mut h = fnv_init();
        h = fnv_u64(h, self.rows as u64);
        h = fnv_u64(h, self.cols as u64);
        for v in &self.data {
            h = fnv_u64(h, v.to_bits());
        }
        h
    }
}

pub(crate) fn fnv_init() -> u64 {
    0xcbf29ce484222325
}

pub(crate) fn fnv_u64(mut h: u64, v: u64) -> u64 {
    for b in v.to_le_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

impl Serialize for RealMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<&[f64]> =
            (0..self.rows).map(|i| &self.data[i * self.cols..(i + 1) * self.cols]).collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for RealMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        RealMatrix::from_rows(&rows).map_err(D::Error::custom)
    }
}

/// Eigenvalues of a real matrix.
///
/// For a symmetric source the values are real and sorted ascending; for a
/// general source they are sorted by real part then imaginary part, which
/// keeps conjugate pairs adjacent.
#[derive(Debug, Clone)]
pub struct Spectrum {
    values: Vec<Complex64>,
    symmetric_source: bool,
}

impl Spectrum {
    pub(crate) fn general(mut values: Vec<Complex64>) -> Self {
        values.sort_by(|a, b| {
            a.re.partial_cmp(&b.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap())
        });
        Self { values, symmetric_source: false }
    }

    pub(crate) fn symmetric(mut values: Vec<f64>) -> Self {
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Self {
            values: values.into_iter().map(|v| Complex64::new(v, 0.0)).collect(),
            symmetric_source: true,
        }
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn symmetric_source(&self) -> bool {
        self.symmetric_source
    }

    pub fn max_real(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.re))
    }

    /// Real eigenvalues ascending. Only available for symmetric sources.
    pub fn real_values(&self) -> Result<Vec<f64>> {
        if !self.symmetric_source {
            return Err(Error::Domain("real_values requires a symmetric source".into()));
        }
        Ok(self.values.iter().map(|v| v.re).collect())
    }

    pub fn min_real_symmetric(&self) -> Result<f64> {
        Ok(*self
            .real_values()?
            .first()
            .expect("spectrum of a nonempty matrix is nonempty"))
    }

    pub fn max_real_symmetric(&self) -> Result<f64> {
        Ok(*self
            .real_values()?
            .last()
            .expect("spectrum of a nonempty matrix is nonempty"))
    }
}

/// Matrix exponential of `A * t` by scaling-and-squaring.
///
/// The scaled matrix is brought below one-norm 0.5, run through a
/// degree-18 truncated series evaluated in Horner form, then squared back.
/// Relative accuracy stays near machine precision for `||A t|| <= 50`,
/// which covers every hold duration this crate produces.
pub fn expm(a: &RealMatrix, t: f64) -> Result<RealMatrix> {
    if !a.is_square() {
        return Err(Error::Dimension(format!("expm requires a square matrix, got {}x{}", a.rows, a.cols)));
    }
    if !t.is_finite() {
        return Err(Error::Domain("expm requires a finite time".into()));
    }
    let n = a.rows;
    let mut b = a.scale(t);
    let norm = b.norm_one();
    if norm == 0.0 {
        return Ok(RealMatrix::identity(n));
    }
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    b = b.scale(0.5f64.powi(squarings as i32));

    // Horner: E = I + B(I + B/2 (I + B/3 (... (I + B/18))))
    const ORDER: usize = 18;
    let ident = RealMatrix::identity(n);
    let mut acc = ident.clone();
    for k in (1..=ORDER).rev() {
        acc = ident.add(&b.matmul(&acc)?.scale(1.0 / k as f64))?;
    }
    for _ in 0..squarings {
        acc = acc.matmul(&acc)?;
    }
    Ok(acc)
}

/// Largest singular value, computed as sqrt of the top eigenvalue of `A^T A`.
pub fn spectral_norm(a: &RealMatrix) -> Result<f64> {
    let gram = a.transpose().matmul(a)?;
    // Tiny negative eigenvalues of the Gram matrix are roundoff.
    let top = eig_sym(&gram.symmetrized())?.max_real_symmetric()?;
    Ok(top.max(0.0).sqrt())
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
///
/// A non-positive pivot aborts with the offending row; this doubles as the
/// positive-definiteness test everywhere else in the crate.
pub fn cholesky(p: &RealMatrix) -> Result<RealMatrix> {
    if !p.is_square() {
        return Err(Error::Dimension("cholesky requires a square matrix".into()));
    }
    if !p.is_symmetric() {
        return Err(Error::NotSymmetric(format!(
            "asymmetry exceeds {SYMMETRY_TOL:e} relative tolerance"
        )));
    }
    let n = p.rows;
    let mut l = RealMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = p.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::NotPositiveDefinite { row: i, pivot: s });
                }
                l.set(i, j, s.sqrt());
            } else {
                l.set(i, j, s / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// Forward-substitution solve `L X = B` for lower-triangular `L`.
pub(crate) fn solve_lower_triangular(l: &RealMatrix, b: &RealMatrix) -> Result<RealMatrix> {
    let n = l.rows;
    if b.rows != n {
        return Err(Error::Dimension("triangular solve shape mismatch".into()));
    }
    let mut x = b.clone();
    for col in 0..b.cols {
        for i in 0..n {
            let mut s = x.get(i, col);
            for k in 0..i {
                s -= l.get(i, k) * x.get(k, col);
            }
            x.set(i, col, s / l.get(i, i));
        }
    }
    Ok(x)
}

/// Determinant via LU with partial pivoting. Used for rank screening.
pub(crate) fn determinant(a: &RealMatrix) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::Dimension("determinant requires a square matrix".into()));
    }
    let n = a.rows;
    let mut m = a.data.clone();
    let mut det = 1.0f64;
    for k in 0..n {
        let mut piv = k;
        let mut best = m[k * n + k].abs();
        for i in (k + 1)..n {
            let v = m[i * n + k].abs();
            if v > best {
                best = v;
                piv = i;
            }
        }
        if best == 0.0 {
            return Ok(0.0);
        }
        if piv != k {
            for j in 0..n {
                m.swap(k * n + j, piv * n + j);
            }
            det = -det;
        }
        let d = m[k * n + k];
        det *= d;
        for i in (k + 1)..n {
            let f = m[i * n + k] / d;
            if f == 0.0 {
                continue;
            }
            for j in k..n {
                m[i * n + j] -= f * m[k * n + j];
            }
        }
    }
    Ok(det)
}
