//! Dense complex matrices and the multipartite operations used everywhere else:
//! Kronecker products, partial traces and transposes, factor permutations,
//! dephasing, and a Hermitian eigensolver.
//!
//! Multipartite operators are addressed by a list of factor dimensions; factor
//! `0` is the most significant index (row-major Kronecker convention).

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LosrError, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Row-major dense complex matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl TryFrom<MatrixRepr> for CMatrix {
    type Error = LosrError;

    fn try_from(r: MatrixRepr) -> Result<Self> {
        if r.rows == 0 || r.cols == 0 {
            return Err(LosrError::Parse("matrix dimensions must be positive".into()));
        }
        let n = r.rows * r.cols;
        if r.re.len() != n || r.im.len() != n {
            return Err(LosrError::Parse(format!(
                "matrix {}x{} needs {} entries, got re={} im={}",
                r.rows,
                r.cols,
                n,
                r.re.len(),
                r.im.len()
            )));
        }
        if r.re.iter().chain(&r.im).any(|v| !v.is_finite()) {
            return Err(LosrError::Parse("matrix entries must be finite".into()));
        }
        let data = r
            .re
            .iter()
            .zip(&r.im)
            .map(|(&re, &im)| C64::new(re, im))
            .collect();
        Ok(CMatrix {
            rows: r.rows,
            cols: r.cols,
            data,
        })
    }
}

impl From<CMatrix> for MatrixRepr {
    fn from(m: CMatrix) -> Self {
        MatrixRepr {
            rows: m.rows,
            cols: m.cols,
            re: m.data.iter().map(|z| z.re).collect(),
            im: m.data.iter().map(|z| z.im).collect(),
        }
    }
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(LosrError::DimensionMismatch(format!(
                "{} entries for a {}x{} matrix",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(CMatrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        CMatrix { rows, cols, data }
    }

    /// Build from real row slices.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        Self::from_fn(r, c, |i, j| C64::new(rows[i][j], 0.0))
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        Self::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(diag[i], 0.0)
            } else {
                ZERO
            }
        })
    }

    /// |v><v|
    pub fn projector(v: &[C64]) -> Self {
        let n = v.len();
        Self::from_fn(n, n, |i, j| v[i] * v[j].conj())
    }

    /// |k><k| in dimension `d`.
    pub fn basis_projector(d: usize, k: usize) -> Self {
        let mut m = Self::zeros(d, d);
        m[(k, k)] = ONE;
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

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        self.scale_c(C64::new(s, 0.0))
    }

    pub fn scale_c(&self, s: C64) -> Self {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    /// self += s * other
    pub fn add_scaled(&mut self, other: &CMatrix, s: f64) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * s;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Largest |M - M^dagger| entry; infinite for non-square input.
    pub fn hermiticity_error(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut err: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                err = err.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        err
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    /// (M + M^dagger) / 2
    pub fn hermitian_part(&self) -> Self {
        let n = self.rows;
        Self::from_fn(n, n, |i, j| (self[(i, j)] + self[(j, i)].conj()) * 0.5)
    }

    /// Re Tr(self * other)
    pub fn trace_product_re(&self, other: &CMatrix) -> f64 {
        assert_eq!(self.cols, other.rows);
        assert_eq!(self.rows, other.cols);
        let mut acc = 0.0;
        for i in 0..self.rows {
            for k in 0..self.cols {
                acc += (self[(i, k)] * other[(k, i)]).re;
            }
        }
        acc
    }

    pub fn matmul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = CMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                let row = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diagonal_re(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)].re).collect()
    }

    pub fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_nalgebra(m: &DMatrix<C64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }

    /// Distance to `other` in Frobenius norm.
    pub fn dist(&self, other: &CMatrix) -> f64 {
        (self - other).frobenius_norm()
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs)
    }
}

/// Kronecker product, `a`'s indices major.
pub fn tensor(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac, br, bc) = (a.rows, a.cols, b.rows, b.cols);
    CMatrix::from_fn(ar * br, ac * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

pub fn tensor_all(ms: &[&CMatrix]) -> CMatrix {
    let mut acc = CMatrix::identity(1);
    for m in ms {
        acc = tensor(&acc, m);
    }
    acc
}

pub fn kron_vec(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            out.push(x * y);
        }
    }
    out
}

fn check_square_dims(m: &CMatrix, dims: &[usize]) -> Result<usize> {
    let total: usize = dims.iter().product();
    if !m.is_square() || m.rows != total {
        return Err(LosrError::DimensionMismatch(format!(
            "matrix {}x{} vs factor dims {:?} (product {})",
            m.rows, m.cols, dims, total
        )));
    }
    Ok(total)
}

/// Split a flat index into per-factor digits.
#[inline]
pub(crate) fn digits(mut idx: usize, dims: &[usize], out: &mut [usize]) {
    for k in (0..dims.len()).rev() {
        out[k] = idx % dims[k];
        idx /= dims[k];
    }
}

/// Trace out every factor not listed in `keep`. The kept factors appear in
/// their original relative order.
pub fn partial_trace(m: &CMatrix, dims: &[usize], keep: &[usize]) -> Result<CMatrix> {
    let total = check_square_dims(m, dims)?;
    if keep.iter().any(|&k| k >= dims.len()) {
        return Err(LosrError::DimensionMismatch(format!(
            "keep {:?} out of range for {} factors",
            keep,
            dims.len()
        )));
    }
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    let kdims: Vec<usize> = kept.iter().map(|&k| dims[k]).collect();
    let kout: usize = kdims.iter().product();
    let traced: Vec<usize> = (0..dims.len()).filter(|k| !kept.contains(k)).collect();
    let tdims: Vec<usize> = traced.iter().map(|&k| dims[k]).collect();
    let tcount: usize = tdims.iter().product();

    // offset of each kept / traced multi-index in the full index space
    let strides = strides_of(dims);
    let kept_off: Vec<usize> = offsets(&kept, &kdims, &strides);
    let traced_off: Vec<usize> = offsets(&traced, &tdims, &strides);
    debug_assert_eq!(kept_off.len() * traced_off.len(), total);

    let mut out = CMatrix::zeros(kout, kout);
    for (i, &ri) in kept_off.iter().enumerate() {
        for (j, &cj) in kept_off.iter().enumerate() {
            let mut acc = ZERO;
            for &t in &traced_off {
                acc += m[(ri + t, cj + t)];
            }
            out[(i, j)] = acc;
        }
    }
    let _ = tcount;
    Ok(out)
}

pub(crate) fn strides_of(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

/// Flat offsets of every multi-index over the listed factors (in list order,
/// first listed factor most significant).
pub(crate) fn offsets(factors: &[usize], fdims: &[usize], strides: &[usize]) -> Vec<usize> {
    let count: usize = fdims.iter().product();
    let mut out = Vec::with_capacity(count);
    let mut dig = vec![0; factors.len()];
    for idx in 0..count {
        digits(idx, fdims, &mut dig);
        out.push(
            factors
                .iter()
                .zip(&dig)
                .map(|(&f, &d)| d * strides[f])
                .sum(),
        );
    }
    out
}

/// Transpose the indices of one tensor factor.
pub fn partial_transpose(m: &CMatrix, dims: &[usize], factor: usize) -> Result<CMatrix> {
    let total = check_square_dims(m, dims)?;
    if factor >= dims.len() {
        return Err(LosrError::DimensionMismatch(format!(
            "factor {} out of range for {} factors",
            factor,
            dims.len()
        )));
    }
    let stride = strides_of(dims)[factor];
    let d = dims[factor];
    let mut out = CMatrix::zeros(total, total);
    for i in 0..total {
        let di = (i / stride) % d;
        let bi = i - di * stride;
        for j in 0..total {
            let dj = (j / stride) % d;
            let bj = j - dj * stride;
            out[(bi + dj * stride, bj + di * stride)] = m[(i, j)];
        }
    }
    Ok(out)
}

/// Reorder tensor factors: factor `perm[k]` of the input becomes factor `k` of the output.
pub fn permute_factors(m: &CMatrix, dims: &[usize], perm: &[usize]) -> Result<CMatrix> {
    let total = check_square_dims(m, dims)?;
    let mut seen = vec![false; dims.len()];
    if perm.len() != dims.len() || perm.iter().any(|&p| p >= dims.len() || std::mem::replace(&mut seen[p], true)) {
        return Err(LosrError::DimensionMismatch(format!(
            "{:?} is not a permutation of {} factors",
            perm,
            dims.len()
        )));
    }
    let strides = strides_of(dims);
    let new_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let map = offsets(perm, &new_dims, &strides);
    Ok(CMatrix::from_fn(total, total, |i, j| m[(map[i], map[j])]))
}

/// Apply the computational-basis dephasing channel to one factor.
pub fn dephase(m: &CMatrix, dims: &[usize], factor: usize) -> Result<CMatrix> {
    let total = check_square_dims(m, dims)?;
    let stride = strides_of(dims)[factor];
    let d = dims[factor];
    let mut out = m.clone();
    for i in 0..total {
        for j in 0..total {
            if (i / stride) % d != (j / stride) % d {
                out[(i, j)] = ZERO;
            }
        }
    }
    Ok(out)
}

/// Ascending eigen-decomposition of a Hermitian matrix. Column `k` of the
/// returned matrix is the eigenvector of the `k`-th eigenvalue.
pub fn eigh(m: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let err = m.hermiticity_error();
    let scale = m.max_abs().max(1.0);
    if err > 1e-8 * scale {
        return Err(LosrError::NotHermitian(err));
    }
    let h = m.hermitian_part().to_nalgebra();
    let eig = h.symmetric_eigen();
    let n = m.rows;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let vals: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vecs = CMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok((vals, vecs))
}

/// Real eigenvalues of a Hermitian matrix, ascending.
pub fn herm_eigvals(m: &CMatrix) -> Result<Vec<f64>> {
    eigh(m).map(|(v, _)| v)
}

pub fn min_eigenvalue(m: &CMatrix) -> Result<f64> {
    Ok(herm_eigvals(m)?.first().copied().unwrap_or(0.0))
}

/// Apply a real function to the spectrum of a Hermitian matrix.
pub fn spectral_map(m: &CMatrix, f: impl Fn(f64) -> f64) -> Result<CMatrix> {
    let (vals, vecs) = eigh(m)?;
    let n = m.rows;
    let mut out = CMatrix::zeros(n, n);
    for (k, &lam) in vals.iter().enumerate() {
        let w = f(lam);
        if w == 0.0 {
            continue;
        }
        for i in 0..n {
            let vi = vecs[(i, k)] * w;
            for j in 0..n {
                out[(i, j)] += vi * vecs[(j, k)].conj();
            }
        }
    }
    Ok(out)
}

/// Nearest PSD matrix in Frobenius norm.
pub fn project_psd(m: &CMatrix) -> Result<CMatrix> {
    spectral_map(m, |l| l.max(0.0))
}

/// M^{-1/2} for positive definite M.
pub fn inv_sqrt(m: &CMatrix) -> Result<CMatrix> {
    let vals = herm_eigvals(m)?;
    if vals.first().is_none_or(|&v| v <= 0.0) {
        return Err(LosrError::Numerical(format!(
            "inverse square root of a matrix with eigenvalue {:?}",
            vals.first()
        )));
    }
    spectral_map(m, |l| 1.0 / l.sqrt())
}

pub fn psd_sqrt(m: &CMatrix) -> Result<CMatrix> {
    spectral_map(m, |l| l.max(0.0).sqrt())
}

/// Moore-Penrose pseudo-inverse of a real matrix.
pub fn real_pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eps = 1e-12 * m.amax().max(1.0);
    m.clone()
        .pseudo_inverse(eps)
        .expect("pseudo-inverse with nonnegative epsilon")
}

/// Pauli matrices and generalized (clock and shift) operators.
pub mod paulis {
    use super::*;

    pub fn sigma_x() -> CMatrix {
        CMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]])
    }

    pub fn sigma_y() -> CMatrix {
        CMatrix::from_fn(2, 2, |i, j| match (i, j) {
            (0, 1) => C64::new(0.0, -1.0),
            (1, 0) => C64::new(0.0, 1.0),
            _ => ZERO,
        })
    }

    pub fn sigma_z() -> CMatrix {
        CMatrix::from_real_diag(&[1.0, -1.0])
    }

    /// X|j> = |j+1 mod d>
    pub fn shift(d: usize) -> CMatrix {
        CMatrix::from_fn(d, d, |i, j| if i == (j + 1) % d { ONE } else { ZERO })
    }

    /// Z|j> = exp(2 pi i j / d)|j>
    pub fn clock(d: usize) -> CMatrix {
        CMatrix::from_fn(d, d, |i, j| {
            if i == j {
                C64::from_polar(1.0, 2.0 * std::f64::consts::PI * i as f64 / d as f64)
            } else {
                ZERO
            }
        })
    }

    pub fn power(m: &CMatrix, k: usize) -> CMatrix {
        let mut acc = CMatrix::identity(m.rows());
        for _ in 0..k {
            acc = acc.matmul(m);
        }
        acc
    }

    /// X^a Z^b
    pub fn weyl(d: usize, a: usize, b: usize) -> CMatrix {
        power(&shift(d), a).matmul(&power(&clock(d), b))
    }
}

/// Common pure states.
pub mod states {
    use super::*;

    /// sum_i |ii> (unnormalized).
    pub fn omega(d: usize) -> Vec<C64> {
        let mut v = vec![ZERO; d * d];
        for i in 0..d {
            v[i * d + i] = ONE;
        }
        v
    }

    /// |Phi+> = (|00> + |11>)/sqrt 2 as a density matrix.
    pub fn phi_plus() -> CMatrix {
        let s = 1.0 / 2f64.sqrt();
        CMatrix::projector(&omega(2).iter().map(|z| z * s).collect::<Vec<_>>())
    }

    /// |Psi-> = (|01> - |10>)/sqrt 2 as a density matrix.
    pub fn singlet() -> CMatrix {
        let s = 1.0 / 2f64.sqrt();
        CMatrix::projector(&[ZERO, C64::new(s, 0.0), C64::new(-s, 0.0), ZERO])
    }

    /// p |Psi-><Psi-| + (1-p) I/4
    pub fn werner(p: f64) -> CMatrix {
        let mut m = singlet().scale(p);
        m.add_scaled(&CMatrix::identity(4), (1.0 - p) / 4.0);
        m
    }

    /// Real qubit state cos(t/2)|0> + sin(t/2)|1>, i.e. Bloch vector in the x-z plane at angle t.
    pub fn qubit_xz(theta: f64) -> Vec<C64> {
        vec![
            C64::new((theta / 2.0).cos(), 0.0),
            C64::new((theta / 2.0).sin(), 0.0),
        ]
    }

    pub fn ket(d: usize, k: usize) -> Vec<C64> {
        let mut v = vec![ZERO; d];
        v[k] = ONE;
        v
    }
}
