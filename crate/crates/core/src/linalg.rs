//! Dense linear-algebra kernels.
//!
//! Everything in this crate works on small, dense, row-major matrices: the
//! decision dimension and state dimension of a condensed MPC problem are a few
//! dozen at most. The only tall object is the constraint matrix, whose rows we
//! slice a lot, so row-major storage is the natural fit.

use std::fmt;
use std::ops::{Index, IndexMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Relative symmetry tolerance used by [`cholesky`].
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Pivot threshold relative to the largest diagonal entry.
pub const PIVOT_TOL: f64 = 1e-12;
/// Default relative tolerance for [`spectral_norm`].
pub const POWER_ITER_TOL: f64 = 1e-10;
/// Default iteration cap for [`spectral_norm`].
pub const POWER_ITER_MAX: usize = 10_000;

const RESTART_SEED: u64 = 0x5eed_cafe;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },
    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("power iteration did not converge in {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("matrix is empty")]
    Empty,
    #[error("row {row} is identically zero")]
    ZeroRow { row: usize },
}

impl LinalgError {
    pub(crate) fn dims(expected: impl fmt::Display, found: impl fmt::Display) -> Self {
        LinalgError::DimensionMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}

/// A dense row-major matrix with finite entries.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::dims(
                format!("{} entries", rows * cols),
                format!("{} entries", data.len()),
            ));
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite {
                row: k / cols.max(1),
                col: k % cols.max(1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from a slice of rows. All rows must share a length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(LinalgError::dims(
                    format!("row {i} of length {cols}"),
                    format!("length {}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diag(&vec![1.0; n])
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// A single-column matrix.
    pub fn column(v: &[f64]) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn column_vec(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<Self, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::dims(
                format!("{} rows on the right operand", self.cols),
                format!("{}", other.rows),
            ));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    fn zip_with(&self, other: &DenseMatrix, f: impl Fn(f64, f64) -> f64) -> Result<Self, LinalgError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(LinalgError::dims(
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<Self, LinalgError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<Self, LinalgError> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// Scales row `i` by `factors[i]`, i.e. `diag(factors) * self`.
    pub fn scale_rows(&self, factors: &[f64]) -> Result<Self, LinalgError> {
        if factors.len() != self.rows {
            return Err(LinalgError::dims(self.rows, factors.len()));
        }
        let mut out = self.clone();
        for (i, &f) in factors.iter().enumerate() {
            out.row_mut(i).iter_mut().for_each(|v| *v *= f);
        }
        Ok(out)
    }

    /// `self * v`
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if v.len() != self.cols {
            return Err(LinalgError::dims(
                format!("vector of length {}", self.cols),
                v.len(),
            ));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    /// `selfᵀ * v`
    pub fn tr_mul_vec(&self, v: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if v.len() != self.rows {
            return Err(LinalgError::dims(
                format!("vector of length {}", self.rows),
                v.len(),
            ));
        }
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            axpy(vi, self.row(i), &mut out);
        }
        Ok(out)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest `|m_ij - m_ji|`. Panics if the matrix is not square.
    pub fn asymmetry(&self) -> f64 {
        assert!(self.is_square());
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        self.is_square() && self.asymmetry() <= rel_tol * self.max_abs()
    }

    /// Gram matrix of the smaller side: `M Mᵀ` when rows ≤ cols, else `Mᵀ M`.
    pub fn small_gram(&self) -> DenseMatrix {
        if self.rows <= self.cols {
            let mut g = Self::zeros(self.rows, self.rows);
            for i in 0..self.rows {
                for j in i..self.rows {
                    let v = dot(self.row(i), self.row(j));
                    g[(i, j)] = v;
                    g[(j, i)] = v;
                }
            }
            g
        } else {
            let mut g = Self::zeros(self.cols, self.cols);
            for i in 0..self.rows {
                let r = self.row(i);
                for a in 0..self.cols {
                    if r[a] == 0.0 {
                        continue;
                    }
                    for b in a..self.cols {
                        g.data[a * self.cols + b] += r[a] * r[b];
                    }
                }
            }
            for a in 0..self.cols {
                for b in 0..a {
                    g.data[a * self.cols + b] = g.data[b * self.cols + a];
                }
            }
            g
        }
    }

    /// Copies the `rows x cols` block starting at `(r0, c0)` from `src`.
    pub fn set_block(&mut self, r0: usize, c0: usize, src: &DenseMatrix) {
        for i in 0..src.rows {
            self.row_mut(r0 + i)[c0..c0 + src.cols].copy_from_slice(src.row(i));
        }
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = M`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    lower: DenseMatrix,
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.lower.rows()
    }

    pub fn lower(&self) -> &DenseMatrix {
        &self.lower
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        self.lower
            .matmul(&self.lower.transpose())
            .expect("square factor")
    }

    /// Solves `L y = b` in place.
    pub fn forward_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(b.len(), n);
        for i in 0..n {
            let row = self.lower.row(i);
            let s = dot(&row[..i], &b[..i]);
            b[i] = (b[i] - s) / row[i];
        }
    }

    /// Solves `Lᵀ x = y` in place.
    pub fn backward_in_place(&self, y: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(y.len(), n);
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.lower[(k, i)] * y[k];
            }
            y[i] = s / self.lower[(i, i)];
        }
    }

    /// Solves `M x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.forward_in_place(b);
        self.backward_in_place(b);
    }

    pub fn solve_vec(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if b.len() != self.dim() {
            return Err(LinalgError::dims(self.dim(), b.len()));
        }
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        Ok(x)
    }

    /// `vᵀ M⁻¹ v`, computed as `‖L⁻¹ v‖²`.
    pub fn inv_quad_form(&self, v: &[f64]) -> f64 {
        let mut y = v.to_vec();
        self.forward_in_place(&mut y);
        dot(&y, &y)
    }
}

/// Cholesky factorization of a symmetric positive definite matrix.
pub fn cholesky(m: &DenseMatrix) -> Result<CholeskyFactor, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let n = m.rows();
    let asym = m.asymmetry();
    if asym > SYMMETRY_TOL * m.max_abs() {
        return Err(LinalgError::NotSymmetric { asymmetry: asym });
    }
    let max_diag = (0..n).map(|i| m[(i, i)]).fold(f64::NEG_INFINITY, f64::max);
    let threshold = PIVOT_TOL * max_diag.max(0.0);
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let lj = l.row(j);
        let d = m[(j, j)] - dot(&lj[..j], &lj[..j]);
        if !(d > threshold) {
            return Err(LinalgError::NotPositiveDefinite { pivot: j, value: d });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let s = m[(i, j)] - dot(&l.row(i)[..j], &l.row(j)[..j]);
            l[(i, j)] = s / djj;
        }
    }
    Ok(CholeskyFactor { lower: l })
}

/// Solves `M X = rhs` column by column given the factor of `M`.
pub fn solve_spd(fact: &CholeskyFactor, rhs: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    if rhs.rows() != fact.dim() {
        return Err(LinalgError::dims(
            format!("{} rows", fact.dim()),
            format!("{} rows", rhs.rows()),
        ));
    }
    let mut out = DenseMatrix::zeros(rhs.rows(), rhs.cols());
    let mut col = vec![0.0; rhs.rows()];
    for j in 0..rhs.cols() {
        for i in 0..rhs.rows() {
            col[i] = rhs[(i, j)];
        }
        fact.solve_in_place(&mut col);
        for i in 0..rhs.rows() {
            out[(i, j)] = col[i];
        }
    }
    Ok(out)
}

/// Largest singular value of `m` by power iteration on the Gram matrix of its
/// smaller side.
///
/// Runs from the normalized all-ones vector, then once more from a fixed
/// pseudo-random vector so a start orthogonal to the dominant eigenvector
/// cannot hide it. The larger converged estimate is returned.
pub fn spectral_norm(m: &DenseMatrix, tol: f64, max_iter: usize) -> Result<f64, LinalgError> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(LinalgError::Empty);
    }
    assert!(tol > 0.0, "tolerance must be positive");
    if m.max_abs() == 0.0 {
        return Ok(0.0);
    }
    let gram = m.small_gram();
    let n = gram.rows();

    let ones = vec![1.0; n];
    let mut rng = ChaCha8Rng::seed_from_u64(RESTART_SEED);
    let random: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let first = dominant_eigenvalue(&gram, ones, tol, max_iter);
    let second = dominant_eigenvalue(&gram, random, tol, max_iter);
    let lambda = match (first, second) {
        (Ok(a), Ok(b)) => a.max(b),
        (Ok(a), Err(_)) | (Err(_), Ok(a)) => a,
        (Err(e), Err(_)) => return Err(e),
    };
    Ok(lambda.max(0.0).sqrt())
}

fn dominant_eigenvalue(
    gram: &DenseMatrix,
    mut v: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<f64, LinalgError> {
    let nv = norm2(&v);
    if nv == 0.0 {
        return Ok(0.0);
    }
    v.iter_mut().for_each(|x| *x /= nv);
    let mut prev = f64::NAN;
    for _ in 0..max_iter {
        let w = gram.mul_vec(&v).expect("square gram");
        let rho = dot(&v, &w);
        let nw = norm2(&w);
        if nw == 0.0 {
            return Ok(0.0);
        }
        let residual = w
            .iter()
            .zip(&v)
            .map(|(wi, vi)| (wi - rho * vi).powi(2))
            .sum::<f64>()
            .sqrt();
        // Rayleigh quotients converge twice as fast as the residual, so a
        // tiny change in rho is accepted as convergence as well.
        if residual <= tol * rho.abs() || (rho - prev).abs() <= 1e-2 * tol * rho.abs() {
            return Ok(rho);
        }
        prev = rho;
        v = w.into_iter().map(|x| x / nw).collect();
    }
    Err(LinalgError::NoConvergence {
        iterations: max_iter,
    })
}

/// Smallest `G_j M⁻¹ G_jᵀ` over the rows of `g`, with `fact` the factor of `M`.
pub fn min_row_gram(g: &DenseMatrix, fact: &CholeskyFactor) -> Result<f64, LinalgError> {
    Ok(row_grams(g, fact)?.into_iter().fold(f64::INFINITY, f64::min))
}

/// `G_j M⁻¹ G_jᵀ` for every row of `g`.
pub fn row_grams(g: &DenseMatrix, fact: &CholeskyFactor) -> Result<Vec<f64>, LinalgError> {
    if g.cols() != fact.dim() {
        return Err(LinalgError::dims(
            format!("{} columns", fact.dim()),
            format!("{} columns", g.cols()),
        ));
    }
    if g.rows() == 0 {
        return Err(LinalgError::Empty);
    }
    (0..g.rows())
        .map(|j| {
            let row = g.row(j);
            if row.iter().all(|&v| v == 0.0) {
                Err(LinalgError::ZeroRow { row: j })
            } else {
                Ok(fact.inv_quad_form(row))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    /// Cyclic Jacobi sweep; used as an independent eigenvalue oracle.
    fn jacobi_eigenvalues(a: &DenseMatrix) -> Vec<f64> {
        let n = a.rows();
        let mut a = a.clone();
        for _ in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[(i, j)].powi(2))
                .sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if a[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        (0..n).map(|i| a[(i, i)]).collect()
    }

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
        let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        DenseMatrix::new(rows, cols, data).unwrap()
    }

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DenseMatrix {
        let a = random_matrix(rng, n, n);
        a.transpose().matmul(&a).unwrap().add(&DenseMatrix::identity(n)).unwrap()
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(matches!(
            DenseMatrix::new(2, 2, vec![1.0; 3]),
            Err(LinalgError::DimensionMismatch { .. })
        ));
        assert_eq!(
            DenseMatrix::new(2, 2, vec![1.0, f64::NAN, 0.0, 1.0]),
            Err(LinalgError::NonFinite { row: 0, col: 1 })
        );
        assert!(DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    #[test]
    fn cholesky_identity() {
        let f = cholesky(&DenseMatrix::identity(2)).unwrap();
        assert_eq!(f.lower(), &DenseMatrix::identity(2));
    }

    #[test]
    fn cholesky_two_by_two() {
        let f = cholesky(&m(&[&[4.0, 2.0], &[2.0, 3.0]])).unwrap();
        let l = f.lower();
        assert!((l[(0, 0)] - 2.0).abs() < 1e-15);
        assert_eq!(l[(0, 1)], 0.0);
        assert!((l[(1, 0)] - 1.0).abs() < 1e-15);
        assert!((l[(1, 1)] - 2f64.sqrt()).abs() < 1e-15);
        let r = f.reconstruct();
        assert!(r.sub(&m(&[&[4.0, 2.0], &[2.0, 3.0]])).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn cholesky_rejects_indefinite_and_asymmetric() {
        assert!(matches!(
            cholesky(&m(&[&[1.0, 2.0], &[2.0, 1.0]])),
            Err(LinalgError::NotPositiveDefinite { pivot: 1, .. })
        ));
        assert!(matches!(
            cholesky(&m(&[&[1.0, 2.0], &[0.0, 1.0]])),
            Err(LinalgError::NotSymmetric { .. })
        ));
        assert!(matches!(
            cholesky(&DenseMatrix::zeros(2, 3)),
            Err(LinalgError::NotSquare { .. })
        ));
    }

    #[test]
    fn solve_spd_examples() {
        let f = cholesky(&DenseMatrix::identity(3)).unwrap();
        let v = m(&[&[1.0, -2.0], &[3.0, 0.5], &[7.0, 1.0]]);
        assert_eq!(solve_spd(&f, &v).unwrap(), v);

        let f = cholesky(&m(&[&[4.0, 2.0], &[2.0, 3.0]])).unwrap();
        let x = solve_spd(&f, &DenseMatrix::column(&[1.0, 0.0])).unwrap();
        assert!((x[(0, 0)] - 0.375).abs() < 1e-15);
        assert!((x[(1, 0)] + 0.25).abs() < 1e-15);

        assert!(matches!(
            solve_spd(&f, &DenseMatrix::column(&[1.0, 0.0, 0.0])),
            Err(LinalgError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn spectral_norm_simple() {
        let n = spectral_norm(&DenseMatrix::identity(4), POWER_ITER_TOL, POWER_ITER_MAX).unwrap();
        assert!((n - 1.0).abs() < 1e-12);
        let n = spectral_norm(&DenseMatrix::from_diag(&[3.0, 1.0]), POWER_ITER_TOL, POWER_ITER_MAX)
            .unwrap();
        assert!((n - 3.0).abs() < 1e-9);
        assert_eq!(
            spectral_norm(&DenseMatrix::zeros(0, 3), 1e-10, 10),
            Err(LinalgError::Empty)
        );
    }

    #[test]
    fn spectral_norm_start_orthogonal_to_dominant_direction() {
        // all-ones lies in the null space of this matrix
        let a = m(&[&[1.0, -1.0], &[-1.0, 1.0]]);
        let n = spectral_norm(&a, POWER_ITER_TOL, POWER_ITER_MAX).unwrap();
        assert!((n - 2.0).abs() < 1e-9);
    }

    #[test]
    fn spectral_norm_matches_jacobi_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let a = random_matrix(&mut rng, 5, 3);
            let gram = a.transpose().matmul(&a).unwrap();
            let oracle = jacobi_eigenvalues(&gram)
                .into_iter()
                .fold(0.0_f64, f64::max)
                .sqrt();
            let got = spectral_norm(&a, POWER_ITER_TOL, POWER_ITER_MAX).unwrap();
            assert!((got - oracle).abs() <= 1e-8 * oracle, "{got} vs {oracle}");
        }
    }

    #[test]
    fn min_row_gram_examples() {
        let f = cholesky(&DenseMatrix::identity(2)).unwrap();
        assert_eq!(min_row_gram(&DenseMatrix::identity(2), &f).unwrap(), 1.0);

        let f = cholesky(&DenseMatrix::from_diag(&[2.0, 1.0])).unwrap();
        let g = m(&[&[1.0, 0.0], &[2.0, 0.0]]);
        assert!((min_row_gram(&g, &f).unwrap() - 0.5).abs() < 1e-15);

        let g = m(&[&[1.0, 0.0], &[0.0, 0.0]]);
        assert_eq!(min_row_gram(&g, &f), Err(LinalgError::ZeroRow { row: 1 }));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn cholesky_reconstructs(n in 1usize..=20, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_spd(&mut rng, n);
            let f = cholesky(&a).unwrap();
            let err = f.reconstruct().sub(&a).unwrap().max_abs();
            prop_assert!(err <= 1e-10 * a.max_abs());
            prop_assert!((0..n).all(|i| f.lower()[(i, i)] > 0.0));
        }

        #[test]
        fn spectral_norm_transpose_invariant(r in 1usize..8, c in 1usize..8, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut rng, r, c);
            let s1 = spectral_norm(&a, POWER_ITER_TOL, POWER_ITER_MAX).unwrap();
            let s2 = spectral_norm(&a.transpose(), POWER_ITER_TOL, POWER_ITER_MAX).unwrap();
            prop_assert!((s1 - s2).abs() <= 1e-8 * s1.max(1e-300));
        }

        #[test]
        fn spectral_norm_submultiplicative(n in 1usize..7, k in 1usize..7, p in 1usize..7, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut rng, n, k);
            let b = random_matrix(&mut rng, k, p);
            let ab = a.matmul(&b).unwrap();
            let sab = spectral_norm(&ab, POWER_ITER_TOL, POWER_ITER_MAX).unwrap();
            let sa = spectral_norm(&a, POWER_ITER_TOL, POWER_ITER_MAX).unwrap();
            let sb = spectral_norm(&b, POWER_ITER_TOL, POWER_ITER_MAX).unwrap();
            prop_assert!(sab <= sa * sb * (1.0 + 1e-8));
        }
    }

    #[test]
    fn solve_spd_residual_up_to_200() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &n in &[1usize, 5, 50, 200] {
            let a = random_spd(&mut rng, n);
            let f = cholesky(&a).unwrap();
            let rhs = random_matrix(&mut rng, n, 2);
            let x = solve_spd(&f, &rhs).unwrap();
            let res = a.matmul(&x).unwrap().sub(&rhs).unwrap();
            let fro = |m: &DenseMatrix| norm2(m.as_slice());
            assert!(fro(&res) <= 1e-9 * fro(&rhs), "n={n}");
        }
    }
}
