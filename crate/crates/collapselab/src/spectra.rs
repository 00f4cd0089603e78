//! Dense symmetric linear algebra at desk scale.
//!
//! Everything here is O(n^3) dense arithmetic on matrices of dimension at
//! most [`MAX_DIM`]. Eigendecomposition uses cyclic Jacobi rotations, which
//! are slow compared to tridiagonal methods but robust and dependency-free
//! at these sizes. Eigenvalues are always returned in descending order with
//! a stable tie-break on the original index, and eigenvector signs are
//! fixed so that repeated runs produce identical output.

use thiserror::Error;

/// Hard cap on matrix dimension.
pub const MAX_DIM: usize = 512;

const MAX_JACOBI_SWEEPS: usize = 100;

/// Relative off-diagonal threshold for Jacobi convergence.
const JACOBI_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SpectraError {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("dimension error: {0}")]
    DimensionError(String),
    #[error("singular matrix: {0}")]
    SingularMatrix(String),
    #[error("Jacobi iteration did not converge")]
    NoConvergence,
}

type Result<T> = std::result::Result<T, SpectraError>;

/// Dense rectangular matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Mat {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Build from nested rows; panics if the rows are ragged.
    pub fn from_rows(rows: &[Vec<f64>]) -> Mat {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Mat {
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn mul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        out
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        out
    }

    pub fn scale(&self, s: f64) -> Mat {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a *= s;
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frob(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Sum of elementwise products; the Frobenius inner product.
    pub fn dot(&self, other: &Mat) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }
}

/// Dense real symmetric matrix. Symmetrized on construction and validated
/// for finiteness and the desk-scale dimension cap.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<SymMatrix> {
        if dim == 0 || dim > MAX_DIM {
            return Err(SpectraError::DimensionError(format!(
                "dim {dim} outside 1..={MAX_DIM}"
            )));
        }
        if entries.len() != dim * dim {
            return Err(SpectraError::DimensionError(format!(
                "expected {} entries, got {}",
                dim * dim,
                entries.len()
            )));
        }
        if !entries.iter().all(|v| v.is_finite()) {
            return Err(SpectraError::InvalidMatrix("non-finite entry".into()));
        }
        let mut data = entries;
        for i in 0..dim {
            for j in (i + 1)..dim {
                let avg = 0.5 * (data[i * dim + j] + data[j * dim + i]);
                data[i * dim + j] = avg;
                data[j * dim + i] = avg;
            }
        }
        Ok(SymMatrix { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<SymMatrix> {
        let m = Mat::from_rows(rows);
        if m.rows() != m.cols() {
            return Err(SpectraError::DimensionError("not square".into()));
        }
        SymMatrix::new(m.rows(), m.data().to_vec())
    }

    /// Symmetrize an arbitrary square `Mat` as (M + M^T)/2.
    pub fn from_mat(m: &Mat) -> Result<SymMatrix> {
        if m.rows() != m.cols() {
            return Err(SpectraError::DimensionError("not square".into()));
        }
        SymMatrix::new(m.rows(), m.data().to_vec())
    }

    pub fn zeros(dim: usize) -> SymMatrix {
        SymMatrix::new(dim, vec![0.0; dim * dim]).expect("valid dims")
    }

    pub fn identity(dim: usize) -> SymMatrix {
        SymMatrix::diagonal(&vec![1.0; dim])
    }

    pub fn diagonal(values: &[f64]) -> SymMatrix {
        let n = values.len();
        let mut data = vec![0.0; n * n];
        for (i, v) in values.iter().enumerate() {
            data[i * n + i] = *v;
        }
        SymMatrix::new(n, data).expect("valid diagonal")
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn to_mat(&self) -> Mat {
        Mat {
            rows: self.dim,
            cols: self.dim,
            data: self.data.clone(),
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        assert_eq!(self.dim, other.dim);
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        SymMatrix { dim: self.dim, data }
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        assert_eq!(self.dim, other.dim);
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        SymMatrix { dim: self.dim, data }
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        let data = self.data.iter().map(|a| a * s).collect();
        SymMatrix { dim: self.dim, data }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Smallest eigenvalue is above `-tol * (1 + max |eigenvalue|)`.
    pub fn is_psd(&self, tol: f64) -> Result<bool> {
        let pair = eig_sym(self)?;
        let scale = 1.0 + pair.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(pair.eigenvalues.iter().all(|&l| l >= -tol * scale))
    }
}

/// Eigendecomposition of a symmetric matrix: eigenvalues sorted descending,
/// eigenvector `i` in column `i` of an orthonormal matrix.
#[derive(Debug, Clone)]
pub struct SpectralPair {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Mat,
}

impl SpectralPair {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// U diag(f(lambda)) U^T.
    pub fn reconstruct_with(&self, f: impl Fn(usize, f64) -> f64) -> SymMatrix {
        let n = self.dim();
        let u = &self.eigenvectors;
        let mut data = vec![0.0; n * n];
        for (k, &l) in self.eigenvalues.iter().enumerate() {
            let fl = f(k, l);
            if fl == 0.0 {
                continue;
            }
            for i in 0..n {
                let ui = u.get(i, k);
                if ui == 0.0 {
                    continue;
                }
                for j in 0..n {
                    data[i * n + j] += fl * ui * u.get(j, k);
                }
            }
        }
        SymMatrix::new(n, data).expect("reconstruction is finite")
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.reconstruct_with(|_, l| l)
    }
}

/// 0/1 eigenmode selection. Bit `i` refers to mode `i` in the descending
/// eigenvalue order of whatever spectrum the mask is applied to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(bits: Vec<bool>) -> Mask {
        Mask { bits }
    }

    pub fn all(dim: usize) -> Mask {
        Mask { bits: vec![true; dim] }
    }

    pub fn none(dim: usize) -> Mask {
        Mask { bits: vec![false; dim] }
    }

    pub fn from_indices(dim: usize, idx: &[usize]) -> Mask {
        let mut bits = vec![false; dim];
        for &i in idx {
            bits[i] = true;
        }
        Mask { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.popcount() == 0
    }

    pub fn bit(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| if b { Some(i) } else { None })
            .collect()
    }

    /// Integer encoding with bit i = mode i; used for deterministic ordering.
    pub fn encoding(&self) -> u64 {
        self.bits
            .iter()
            .enumerate()
            .fold(0u64, |acc, (i, &b)| if b { acc | (1 << i) } else { acc })
    }
}

impl std::fmt::Display for Mask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for &b in &self.bits {
            write!(f, "{}", if b { '1' } else { '0' })?;
        }
        Ok(())
    }
}

fn off_diag_frob(a: &Mat) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a.get(i, j) * a.get(i, j);
            }
        }
    }
    s.sqrt()
}

fn diag_frob(a: &Mat) -> f64 {
    let n = a.rows();
    (0..n).map(|i| a.get(i, i) * a.get(i, i)).sum::<f64>().sqrt()
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Deterministic for a given input: sweeps always run in row order, the
/// spectrum is sorted descending with ties broken by the original diagonal
/// position, and each eigenvector's sign is fixed by making its largest
/// component positive.
pub fn eig_sym(m: &SymMatrix) -> Result<SpectralPair> {
    let n = m.dim();
    let mut a = m.to_mat();
    let mut v = Mat::identity(n);

    let mut converged = false;
    for _ in 0..MAX_JACOBI_SWEEPS {
        let off = off_diag_frob(&a);
        let diag = diag_frob(&a);
        if off == 0.0 || off <= JACOBI_TOL * diag {
            converged = true;
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // A <- J^T A J with J the rotation in the (p, q) plane.
                for r in 0..n {
                    let arp = a.get(r, p);
                    let arq = a.get(r, q);
                    a.set(r, p, c * arp - s * arq);
                    a.set(r, q, s * arp + c * arq);
                }
                for r in 0..n {
                    let apr = a.get(p, r);
                    let aqr = a.get(q, r);
                    a.set(p, r, c * apr - s * aqr);
                    a.set(q, r, s * apr + c * aqr);
                }
                for r in 0..n {
                    let vrp = v.get(r, p);
                    let vrq = v.get(r, q);
                    v.set(r, p, c * vrp - s * vrq);
                    v.set(r, q, s * vrp + c * vrq);
                }
            }
        }
    }
    if !converged {
        let off = off_diag_frob(&a);
        let diag = diag_frob(&a);
        if !(off == 0.0 || off <= JACOBI_TOL * diag) {
            return Err(SpectraError::NoConvergence);
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a.get(j, j)
            .partial_cmp(&a.get(i, i))
            .expect("finite eigenvalues")
            .then(i.cmp(&j))
    });

    let eigenvalues: Vec<f64> = order.iter().map(|&k| a.get(k, k)).collect();
    let mut eigenvectors = Mat::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        // Fix the sign so the component of largest magnitude is positive.
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for r in 0..n {
            let x = v.get(r, k).abs();
            if x > best_abs {
                best_abs = x;
                best = r;
            }
        }
        let sign = if v.get(best, k) < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            eigenvectors.set(r, col, sign * v.get(r, k));
        }
    }

    Ok(SpectralPair {
        eigenvalues,
        eigenvectors,
    })
}

/// Reconstruct with masked eigenvalues: U (M . Lambda) U^T. Masked-out
/// modes contribute exactly zero.
pub fn masked(pair: &SpectralPair, mask: &Mask) -> Result<SymMatrix> {
    if mask.len() != pair.dim() {
        return Err(SpectraError::DimensionError(format!(
            "mask length {} vs dim {}",
            mask.len(),
            pair.dim()
        )));
    }
    Ok(pair.reconstruct_with(|k, l| if mask.bit(k) { l } else { 0.0 }))
}

/// U Lambda^p U^T.
///
/// Negative powers require all eigenvalues above 1e-12. Fractional
/// non-negative powers are defined for singular PSD input: eigenvalues in
/// [-tol, 1e-12] are treated as zero, so covariance square roots of
/// rank-deficient matrices work.
pub fn mat_pow(m: &SymMatrix, p: f64) -> Result<SymMatrix> {
    let pair = eig_sym(m)?;
    let scale = 1.0 + pair.eigenvalues.iter().fold(0.0f64, |mx, v| mx.max(v.abs()));
    let fractional = p.fract() != 0.0;
    if p < 0.0 {
        if pair.eigenvalues.iter().any(|&l| l <= 1e-12) {
            return Err(SpectraError::SingularMatrix(format!(
                "eigenvalue {:.3e} too small for power {p}",
                pair.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
            )));
        }
    } else if fractional && pair.eigenvalues.iter().any(|&l| l < -1e-10 * scale) {
        return Err(SpectraError::SingularMatrix(format!(
            "negative eigenvalue {:.3e} under fractional power {p}",
            pair.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
        )));
    }
    Ok(pair.reconstruct_with(|_, l| {
        if fractional && p > 0.0 && l <= 1e-12 {
            0.0
        } else {
            l.powf(p)
        }
    }))
}

/// True iff `||AB - BA||_max <= tol * (1 + ||A||_max * ||B||_max)`.
pub fn commutes(a: &SymMatrix, b: &SymMatrix, tol: f64) -> Result<bool> {
    if a.dim() != b.dim() {
        return Err(SpectraError::DimensionError(format!(
            "dims {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let am = a.to_mat();
    let bm = b.to_mat();
    let comm = am.mul(&bm).sub(&bm.mul(&am));
    Ok(comm.max_abs() <= tol * (1.0 + a.max_abs() * b.max_abs()))
}

/// Simultaneous diagonalization of a commuting symmetric pair.
///
/// Returns a shared orthonormal basis (columns) with the per-mode values of
/// `a` and `b` in that basis, ordered by descending `a` value and, within
/// degenerate blocks of `a`, by descending `b` value. Degenerate blocks of
/// `a` are resolved by diagonalizing `b` restricted to the block, which is
/// valid exactly because the matrices commute.
pub fn joint_eig(a: &SymMatrix, b: &SymMatrix, tol: f64) -> Result<(Mat, Vec<f64>, Vec<f64>)> {
    if !commutes(a, b, tol)? {
        return Err(SpectraError::InvalidMatrix(
            "joint_eig requires a commuting pair".into(),
        ));
    }
    let n = a.dim();
    let pa = eig_sym(a)?;
    let scale = 1.0 + pa.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let block_tol = 1e-8 * scale;

    let mut basis = pa.eigenvectors.clone();
    let a_vals = pa.eigenvalues.clone();
    let mut b_vals = vec![0.0; n];
    let bm = b.to_mat();

    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (a_vals[start] - a_vals[end]).abs() <= block_tol {
            end += 1;
        }
        let k = end - start;
        if k == 1 {
            let u = basis.col(start);
            b_vals[start] = quad_vec(&bm, &u, &u);
        } else {
            // Diagonalize b inside the degenerate block of a.
            let mut blk = vec![0.0; k * k];
            let cols: Vec<Vec<f64>> = (start..end).map(|c| basis.col(c)).collect();
            for i in 0..k {
                for j in 0..k {
                    blk[i * k + j] = quad_vec(&bm, &cols[i], &cols[j]);
                }
            }
            let blk_sym = SymMatrix::new(k, blk)?;
            let pb = eig_sym(&blk_sym)?;
            for j in 0..k {
                let mut newcol = vec![0.0; n];
                for (i, ci) in cols.iter().enumerate() {
                    let w = pb.eigenvectors.get(i, j);
                    for r in 0..n {
                        newcol[r] += w * ci[r];
                    }
                }
                for r in 0..n {
                    basis.set(r, start + j, newcol[r]);
                }
                b_vals[start + j] = pb.eigenvalues[j];
            }
        }
        start = end;
    }
    Ok((basis, a_vals, b_vals))
}

fn quad_vec(m: &Mat, x: &[f64], y: &[f64]) -> f64 {
    let n = m.rows();
    let mut s = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += m.get(i, j) * y[j];
        }
        s += x[i] * row;
    }
    s
}

/// A `d1 x d0` matrix `W` with `W^T W` equal to the given PSD Gram matrix.
/// Row `r` carries the r-th retained eigenmode, so `rank(W) = rank(gram)`.
pub fn lift_gram(gram: &SymMatrix, d1: usize) -> Result<Mat> {
    let pair = eig_sym(gram)?;
    let scale = 1.0 + pair.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut selected = Vec::new();
    for (k, &l) in pair.eigenvalues.iter().enumerate() {
        if l > 1e-12 * scale {
            selected.push((k, l));
        } else if l < -1e-9 * scale {
            return Err(SpectraError::InvalidMatrix(format!(
                "gram matrix has negative eigenvalue {l:.3e}"
            )));
        }
    }
    if selected.len() > d1 {
        return Err(SpectraError::DimensionError(format!(
            "gram rank {} exceeds output dimension {}",
            selected.len(),
            d1
        )));
    }
    let d0 = gram.dim();
    let mut w = Mat::zeros(d1, d0);
    for (r, (k, l)) in selected.into_iter().enumerate() {
        let root = l.sqrt();
        for j in 0..d0 {
            w.set(r, j, root * pair.eigenvectors.get(j, k));
        }
    }
    Ok(w)
}

/// Largest principal angle (radians) between the column spans of two
/// orthonormal `n x k` matrices. Computed through the sine,
/// `||(I - U1 U1^T) U2||_2`, which stays accurate for near-identical
/// subspaces where the cosine form loses all precision.
pub fn principal_angle(u1: &Mat, u2: &Mat) -> Result<f64> {
    if u1.rows() != u2.rows() || u1.cols() != u2.cols() {
        return Err(SpectraError::DimensionError(
            "subspace bases must have equal shapes".into(),
        ));
    }
    let overlap = u1.transpose().mul(u2);
    let residual = u2.sub(&u1.mul(&overlap));
    let gram = SymMatrix::from_mat(&residual.transpose().mul(&residual))?;
    let pair = eig_sym(&gram)?;
    let largest = pair
        .eigenvalues
        .iter()
        .cloned()
        .fold(0.0f64, f64::max)
        .clamp(0.0, 1.0);
    Ok(largest.sqrt().clamp(0.0, 1.0).asin())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_sym(dim: usize, seed: u64, scale: f64) -> SymMatrix {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut data = vec![0.0; dim * dim];
        for v in data.iter_mut() {
            *v = rng.gen_range(-scale..scale);
        }
        SymMatrix::new(dim, data).unwrap()
    }

    fn random_psd(dim: usize, seed: u64) -> SymMatrix {
        let m = random_sym(dim, seed, 1.0).to_mat();
        SymMatrix::from_mat(&m.transpose().mul(&m)).unwrap()
    }

    fn max_diff(a: &SymMatrix, b: &SymMatrix) -> f64 {
        a.sub(b).max_abs()
    }

    #[test]
    fn identity_eigenvalues_are_ones() {
        let pair = eig_sym(&SymMatrix::identity(3)).unwrap();
        for l in &pair.eigenvalues {
            assert!((l - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn diagonal_matrix_sorted_descending_with_axis_vectors() {
        let m = SymMatrix::diagonal(&[3.0, 1.0]);
        let pair = eig_sym(&m).unwrap();
        assert_eq!(pair.eigenvalues, vec![3.0, 1.0]);
        // Axis vectors up to sign; sign convention makes them positive.
        assert!((pair.eigenvectors.get(0, 0) - 1.0).abs() < 1e-14);
        assert!((pair.eigenvectors.get(1, 1) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn random_8x8_reconstructs() {
        let m = random_sym(8, 7, 2.0);
        let pair = eig_sym(&m).unwrap();
        let scale = 1.0 + pair.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(max_diff(&pair.reconstruct(), &m) <= 1e-9 * scale);
        // Orthonormality.
        let u = &pair.eigenvectors;
        let utu = u.transpose().mul(u);
        assert!(utu.sub(&Mat::identity(8)).max_abs() <= 1e-10);
    }

    #[test]
    fn non_finite_entries_rejected() {
        let err = SymMatrix::new(2, vec![1.0, f64::NAN, f64::NAN, 1.0]).unwrap_err();
        assert!(matches!(err, SpectraError::InvalidMatrix(_)));
    }

    #[test]
    fn masked_zeroes_selected_modes() {
        let m = SymMatrix::diagonal(&[3.0, 1.0]);
        let pair = eig_sym(&m).unwrap();
        let out = masked(&pair, &Mask::new(vec![true, false])).unwrap();
        assert!(max_diff(&out, &SymMatrix::diagonal(&[3.0, 0.0])) < 1e-12);
    }

    #[test]
    fn all_ones_mask_reproduces_input() {
        let m = random_sym(5, 3, 1.5);
        let pair = eig_sym(&m).unwrap();
        let out = masked(&pair, &Mask::all(5)).unwrap();
        assert!(max_diff(&out, &m) < 1e-9);
    }

    #[test]
    fn masked_rejects_length_mismatch() {
        let pair = eig_sym(&SymMatrix::identity(3)).unwrap();
        let err = masked(&pair, &Mask::all(2)).unwrap_err();
        assert!(matches!(err, SpectraError::DimensionError(_)));
    }

    #[test]
    fn mat_pow_inverse_sqrt_of_diagonal() {
        let m = SymMatrix::diagonal(&[4.0, 1.0]);
        let out = mat_pow(&m, -0.5).unwrap();
        assert!(max_diff(&out, &SymMatrix::diagonal(&[0.5, 1.0])) < 1e-12);
    }

    #[test]
    fn mat_pow_sqrt_then_square_recovers_psd() {
        let m = random_psd(6, 11);
        let root = mat_pow(&m, 0.5).unwrap();
        let back = SymMatrix::from_mat(&root.to_mat().mul(&root.to_mat())).unwrap();
        let scale = 1.0 + m.max_abs();
        assert!(max_diff(&back, &m) < 1e-9 * scale);
    }

    #[test]
    fn mat_pow_negative_power_of_singular_fails() {
        let m = SymMatrix::diagonal(&[0.0, 1.0]);
        assert!(matches!(
            mat_pow(&m, -1.0).unwrap_err(),
            SpectraError::SingularMatrix(_)
        ));
    }

    #[test]
    fn mat_pow_sqrt_of_singular_psd_is_fine() {
        let m = SymMatrix::diagonal(&[0.0, 4.0]);
        let out = mat_pow(&m, 0.5).unwrap();
        assert!(max_diff(&out, &SymMatrix::diagonal(&[0.0, 2.0])) < 1e-12);
    }

    #[test]
    fn diagonal_matrices_commute() {
        let a = SymMatrix::diagonal(&[1.0, 2.0]);
        let b = SymMatrix::diagonal(&[5.0, -3.0]);
        assert!(commutes(&a, &b, 1e-12).unwrap());
    }

    #[test]
    fn rotated_spectra_do_not_commute() {
        // diag(1,2) against a 45-degree-rotated diag(1,3).
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let r = Mat::from_rows(&[vec![c, -c], vec![c, c]]);
        let d = SymMatrix::diagonal(&[1.0, 3.0]).to_mat();
        let rotated = SymMatrix::from_mat(&r.mul(&d).mul(&r.transpose())).unwrap();
        let a = SymMatrix::diagonal(&[1.0, 2.0]);
        assert!(!commutes(&a, &rotated, 1e-10).unwrap());
        // Direct multiplication oracle.
        let am = a.to_mat();
        let bm = rotated.to_mat();
        let resid = am.mul(&bm).sub(&bm.mul(&am)).max_abs();
        assert!(resid > 0.5);
    }

    #[test]
    fn identity_commutes_with_anything() {
        let a = random_sym(4, 9, 2.0);
        assert!(commutes(&a, &SymMatrix::identity(4), 1e-12).unwrap());
    }

    #[test]
    fn commutes_rejects_dim_mismatch() {
        let a = SymMatrix::identity(2);
        let b = SymMatrix::identity(3);
        assert!(matches!(
            commutes(&a, &b, 1e-8).unwrap_err(),
            SpectraError::DimensionError(_)
        ));
    }

    #[test]
    fn joint_eig_handles_degenerate_blocks() {
        // a = I has a fully degenerate spectrum; the basis must come from b.
        let a = SymMatrix::identity(3);
        let b = random_sym(3, 21, 1.0);
        let (u, av, bv) = joint_eig(&a, &b, 1e-8).unwrap();
        for v in &av {
            assert!((v - 1.0).abs() < 1e-12);
        }
        // u diag(bv) u^T must reconstruct b.
        let mut recon = SymMatrix::zeros(3);
        for k in 0..3 {
            let col = u.col(k);
            let outer = Mat::from_fn(3, 3, |i, j| bv[k] * col[i] * col[j]);
            recon = recon.add(&SymMatrix::from_mat(&outer).unwrap());
        }
        assert!(max_diff(&recon, &b) < 1e-9);
    }

    #[test]
    fn lift_gram_round_trips() {
        let g = random_psd(4, 31);
        let w = lift_gram(&g, 6).unwrap();
        let back = SymMatrix::from_mat(&w.transpose().mul(&w)).unwrap();
        assert!(max_diff(&back, &g) < 1e-9 * (1.0 + g.max_abs()));
    }

    #[test]
    fn lift_gram_rejects_insufficient_rows() {
        let g = SymMatrix::diagonal(&[1.0, 2.0, 3.0]);
        assert!(lift_gram(&g, 2).is_err());
    }

    #[test]
    fn principal_angle_of_identical_spans_is_zero() {
        let u = Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]);
        assert!(principal_angle(&u, &u).unwrap() < 1e-9);
    }

    #[test]
    fn principal_angle_of_orthogonal_vectors_is_right_angle() {
        let u1 = Mat::from_rows(&[vec![1.0], vec![0.0]]);
        let u2 = Mat::from_rows(&[vec![0.0], vec![1.0]]);
        let angle = principal_angle(&u1, &u2).unwrap();
        assert!((angle - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn dimension_guard_enforced() {
        assert!(SymMatrix::new(MAX_DIM + 1, vec![0.0; (MAX_DIM + 1) * (MAX_DIM + 1)]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn eig_of_masked_full_matches_spectrum(seed in 0u64..1000) {
            let m = random_sym(5, seed, 1.0);
            let pair = eig_sym(&m).unwrap();
            let again = eig_sym(&masked(&pair, &Mask::all(5)).unwrap()).unwrap();
            for (x, y) in pair.eigenvalues.iter().zip(&again.eigenvalues) {
                prop_assert!((x - y).abs() < 1e-8);
            }
        }

        #[test]
        fn mat_pow_is_a_homomorphism_on_psd(seed in 0u64..1000) {
            let m = random_psd(4, seed);
            // Shift away from singular so negative powers are defined.
            let m = m.add(&SymMatrix::identity(4).scale(0.5));
            let scale = 1.0 + m.max_abs();
            for (a, b) in [(-1.0, 1.0), (-0.5, 0.5), (0.5, 0.5), (0.5, 1.0)] {
                let lhs = mat_pow(&m, a + b).unwrap();
                let pa = mat_pow(&m, a).unwrap();
                let pb = mat_pow(&m, b).unwrap();
                let rhs = SymMatrix::from_mat(&pa.to_mat().mul(&pb.to_mat())).unwrap();
                prop_assert!(lhs.sub(&rhs).max_abs() < 1e-8 * scale * scale);
            }
        }
    }
}
