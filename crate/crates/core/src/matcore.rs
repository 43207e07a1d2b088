//! Dense complex linear algebra.
//!
//! Everything here works on [`CMatrix`], a square row-major matrix of
//! `Complex64`. Products and additions go through a thread-local tally so the
//! per-step cost of a time stepper can be measured exactly (see [`op_tally`]).

use std::cell::Cell;
use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use nalgebra::{DMatrix, SymmetricEigen, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

thread_local! {
    static MATMULS: Cell<u64> = const { Cell::new(0) };
    static MATADDS: Cell<u64> = const { Cell::new(0) };
}

/// Matrix products and matrix additions performed on the current thread.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpTally {
    pub matmuls: u64,
    pub adds: u64,
}

impl Sub for OpTally {
    type Output = OpTally;
    fn sub(self, rhs: OpTally) -> OpTally {
        OpTally {
            matmuls: self.matmuls - rhs.matmuls,
            adds: self.adds - rhs.adds,
        }
    }
}

pub fn op_tally() -> OpTally {
    OpTally {
        matmuls: MATMULS.with(Cell::get),
        adds: MATADDS.with(Cell::get),
    }
}

fn count_mul() {
    MATMULS.with(|c| c.set(c.get() + 1));
}

fn count_add() {
    MATADDS.with(|c| c.set(c.get() + 1));
}

/// Dense square complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix({}x{}) [", self.dim, self.dim)?;
        for i in 0..self.dim {
            write!(f, "  ")?;
            for j in 0..self.dim {
                let z = self[(i, j)];
                write!(f, "{:+.4e}{:+.4e}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl CMatrix {
    pub fn zeros(dim: usize) -> Self {
        CMatrix {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = ONE;
        }
        m
    }

    /// Builds a matrix from row-major entries, rejecting wrong lengths and
    /// non-finite values.
    pub fn from_row_major(dim: usize, data: Vec<C64>) -> Result<Self> {
        if dim == 0 || data.len() != dim * dim || data.iter().any(|z| !z.is_finite()) {
            return Err(Error::InvalidEntries);
        }
        Ok(CMatrix { dim, data })
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let dim = rows.len();
        let data = rows
            .iter()
            .flat_map(|r| r.iter().map(|&x| C64::new(x, 0.0)))
            .collect();
        Self::from_row_major(dim, data)
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        CMatrix { dim, data }
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(d, 0.0);
        }
        m
    }

    /// `|u><v|`
    pub fn outer(u: &[C64], v: &[C64]) -> Self {
        assert_eq!(u.len(), v.len());
        Self::from_fn(u.len(), |i, j| u[i] * v[j].conj())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.dim).map(|i| self[(i, i)]).collect()
    }

    pub fn dagger(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        CMatrix {
            dim: self.dim,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scale(&self, c: C64) -> Self {
        CMatrix {
            dim: self.dim,
            data: self.data.iter().map(|&z| z * c).collect(),
        }
    }

    pub fn scale_real(&self, c: f64) -> Self {
        CMatrix {
            dim: self.dim,
            data: self.data.iter().map(|&z| z * c).collect(),
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        (0..self.dim)
            .map(|j| (0..self.dim).map(|i| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.is_finite())
    }

    /// `‖A − A†‖_F`
    pub fn hermiticity_residual(&self) -> f64 {
        let n = self.dim;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += (self[(i, j)] - self[(j, i)].conj()).norm_sqr();
            }
        }
        acc.sqrt()
    }

    /// `(A + A†)/2`
    pub fn hermitian_part(&self) -> Self {
        Self::from_fn(self.dim, |i, j| (self[(i, j)] + self[(j, i)].conj()) * 0.5)
    }

    /// Matrix product; counted in the op tally.
    pub fn matmul(&self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim, "matmul dimension mismatch");
        count_mul();
        gemm(self, rhs)
    }

    /// `self += alpha * x`; counted as one matrix addition.
    pub fn axpy(&mut self, alpha: C64, x: &CMatrix) {
        assert_eq!(self.dim, x.dim, "axpy dimension mismatch");
        count_add();
        for (y, &v) in self.data.iter_mut().zip(&x.data) {
            *y += alpha * v;
        }
    }

    /// `self += alpha * x` for real `alpha`.
    pub fn axpy_real(&mut self, alpha: f64, x: &CMatrix) {
        assert_eq!(self.dim, x.dim, "axpy dimension mismatch");
        count_add();
        for (y, &v) in self.data.iter_mut().zip(&x.data) {
            *y += v * alpha;
        }
    }

    /// `self + c·Id`, not counted (a diagonal shift, not a matrix addition).
    pub fn shift_diag(&self, c: C64) -> CMatrix {
        let mut out = self.clone();
        for i in 0..self.dim {
            out.data[i * self.dim + i] += c;
        }
        out
    }

    pub fn matvec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.dim, v.len());
        (0..self.dim)
            .map(|i| {
                self.data[i * self.dim..(i + 1) * self.dim]
                    .iter()
                    .zip(v)
                    .map(|(&a, &b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// Kronecker product `A ⊗ B`.
    pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
        let (na, nb) = (a.dim, b.dim);
        CMatrix::from_fn(na * nb, |i, j| {
            a[(i / nb, j / nb)] * b[(i % nb, j % nb)]
        })
    }

    /// Column-stacking vectorization: `vec[i + j·dim] = A[i, j]`.
    pub fn vec_columns(&self) -> Vec<C64> {
        let n = self.dim;
        let mut v = vec![ZERO; n * n];
        for j in 0..n {
            for i in 0..n {
                v[i + j * n] = self[(i, j)];
            }
        }
        v
    }

    pub fn unvec_columns(v: &[C64]) -> Result<CMatrix> {
        let n = (v.len() as f64).sqrt().round() as usize;
        if n * n != v.len() || n == 0 {
            return Err(Error::InvalidEntries);
        }
        Ok(CMatrix::from_fn(n, |i, j| v[i + j * n]))
    }

    /// Frobenius distance.
    pub fn distance(&self, other: &CMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }

    fn from_nalgebra(m: &DMatrix<C64>) -> CMatrix {
        CMatrix::from_fn(m.nrows(), |i, j| m[(i, j)])
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs)
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        let mut out = self.clone();
        out.axpy(ONE, rhs);
        out
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        let mut out = self.clone();
        out.axpy(-ONE, rhs);
        out
    }
}

/// `C = A·B`, i-k-j order. Zero entries of `A` are skipped and each row of `B`
/// is only visited over its nonzero column span, so banded operators such as
/// truncated ladder operators cost O(dim²·bandwidth).
fn gemm(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let n = a.dim;
    let spans: Vec<(usize, usize)> = (0..n)
        .map(|k| {
            let row = &b.data[k * n..(k + 1) * n];
            match row.iter().position(|z| *z != ZERO) {
                None => (0, 0),
                Some(lo) => {
                    let hi = n - row.iter().rev().position(|z| *z != ZERO).unwrap_or(0);
                    (lo, hi)
                }
            }
        })
        .collect();
    let mut out = vec![ZERO; n * n];
    for i in 0..n {
        let crow = &mut out[i * n..(i + 1) * n];
        for (k, &(lo, hi)) in spans.iter().enumerate() {
            let aik = a.data[i * n + k];
            if aik == ZERO {
                continue;
            }
            if lo >= hi {
                continue;
            }
            let brow = &b.data[k * n + lo..k * n + hi];
            for (c, &bv) in crow[lo..hi].iter_mut().zip(brow) {
                *c += aik * bv;
            }
        }
    }
    CMatrix { dim: n, data: out }
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct EigDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Columns are orthonormal eigenvectors.
    pub eigenvectors: CMatrix,
}

impl EigDecomposition {
    /// `V f(Λ) V†`
    pub fn apply_fn(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let v = &self.eigenvectors;
        let n = v.dim;
        let fl: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let mut out = CMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = ZERO;
                for k in 0..n {
                    acc += v[(i, k)] * v[(j, k)].conj() * fl[k];
                }
                out[(i, j)] = acc;
            }
        }
        out
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.apply_fn(|l| l)
    }
}

/// Hermitian eigendecomposition. The input is symmetrized as `(A + A†)/2`
/// after checking `‖A − A†‖_F ≤ 1e-8‖A‖_F`.
pub fn herm_eig(a: &CMatrix) -> Result<EigDecomposition> {
    let norm = a.frobenius_norm();
    let residual = a.hermiticity_residual();
    let threshold = 1e-8 * norm;
    if residual > threshold {
        return Err(Error::NonHermitian {
            residual,
            threshold,
        });
    }
    let n = a.dim;
    // Entries far below working precision (for example subnormal tails of a
    // decaying state) stall the QR deflation test; they are flushed to zero.
    let tiny = f64::EPSILON * f64::EPSILON * a.max_abs();
    let mut sym = a.hermitian_part().to_nalgebra();
    for z in sym.iter_mut() {
        if z.norm() < tiny {
            *z = C64::new(0.0, 0.0);
        }
    }
    // The QR sweep can stall at machine precision on matrices with a very
    // wide spectrum; a slightly looser stopping rule is retried before failing.
    let eig = [1.0, 16.0, 256.0]
        .iter()
        .find_map(|&k| SymmetricEigen::try_new(sym.clone(), k * f64::EPSILON, 1000 * n.max(30)))
        .ok_or(Error::ConvergenceFailure { dim: n })?;
    if eig.eigenvalues.iter().any(|l| !l.is_finite()) {
        return Err(Error::ConvergenceFailure { dim: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vecs = CMatrix::from_nalgebra(&eig.eigenvectors);
    let eigenvectors = CMatrix::from_fn(n, |i, j| vecs[(i, order[j])]);
    Ok(EigDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Default eigenvalue floor for [`inv_sqrt_pd`]. Normalizers of the form
/// `Id + positive` never legitimately fall below it.
pub const INV_SQRT_FLOOR: f64 = 0.5;

/// `A^{-1/2}` for Hermitian positive-definite `A` whose spectrum lies above `floor`.
pub fn inv_sqrt_pd(a: &CMatrix, floor: f64) -> Result<CMatrix> {
    let eig = herm_eig(a)?;
    let min_eigenvalue = eig.eigenvalues[0];
    if min_eigenvalue <= floor {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue,
            floor,
        });
    }
    Ok(eig.apply_fn(|l| 1.0 / l.sqrt()))
}

/// Normalizes a list of operators to `M_k (Σ_j M_j† M_j)^{-1/2}`.
///
/// With the stacked operators `[M_0; M_1; …] = U Σ V†` the result is the block
/// split of the isometry `U V†`, which keeps `Σ_k M̃_k† M̃_k = Id` to machine
/// precision even when the sum is badly conditioned. Fails with
/// `NotPositiveDefinite` when the smallest eigenvalue of the sum is not above
/// `floor`.
pub fn normalize_gram(ops: &[CMatrix], floor: f64) -> Result<Vec<CMatrix>> {
    let n = match ops.first() {
        Some(m) => m.dim,
        None => return Err(Error::InvalidArgument("empty operator list".into())),
    };
    if let Some(bad) = ops.iter().find(|m| m.dim != n) {
        return Err(Error::DimMismatch {
            expected: n,
            found: bad.dim,
        });
    }
    if ops.iter().any(|m| !m.is_finite()) {
        return Err(Error::InvalidEntries);
    }
    let stacked = DMatrix::from_fn(ops.len() * n, n, |r, c| ops[r / n][(r % n, c)]);
    let svd = SVD::try_new(stacked, true, true, f64::EPSILON, 1000 * n.max(30))
        .ok_or(Error::ConvergenceFailure { dim: n })?;
    let min_eigenvalue = svd
        .singular_values
        .iter()
        .map(|s| s * s)
        .fold(f64::INFINITY, f64::min);
    if !(min_eigenvalue > floor) {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue,
            floor,
        });
    }
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::ConvergenceFailure { dim: n }),
    };
    let polar = u * v_t;
    Ok((0..ops.len())
        .map(|k| CMatrix::from_fn(n, |i, j| polar[(k * n + i, j)]))
        .collect())
}

/// Relative Hermiticity level below which [`trace_norm`] takes the
/// eigenvalue route.
const HERMITIAN_ROUTE_TOL: f64 = 1e-10;

/// Sum of singular values.
pub fn trace_norm(a: &CMatrix) -> Result<f64> {
    let norm = a.frobenius_norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    if a.hermiticity_residual() <= HERMITIAN_ROUTE_TOL * norm {
        let eig = herm_eig(a)?;
        Ok(eig.eigenvalues.iter().map(|l| l.abs()).sum())
    } else {
        singular_value_sum(a)
    }
}

/// `Σ √λ(A†A)`, the generic route of [`trace_norm`].
pub fn singular_value_sum(a: &CMatrix) -> Result<f64> {
    let gram = gemm(&a.dagger(), a);
    let eig = herm_eig(&gram)?;
    Ok(eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum())
}

/// Largest singular value.
pub fn spectral_norm(a: &CMatrix) -> Result<f64> {
    let gram = gemm(&a.dagger(), a);
    let eig = herm_eig(&gram)?;
    Ok(eig.eigenvalues.last().copied().unwrap_or(0.0).max(0.0).sqrt())
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
pub fn expm(a: &CMatrix) -> Result<CMatrix> {
    if !a.is_finite() {
        return Err(Error::Overflow);
    }
    let n = a.dim;
    let norm = a.norm_one();
    let mut squarings = 0u32;
    if norm > 0.5 {
        squarings = (norm / 0.5).log2().ceil() as u32;
    }
    let scaled = a.scale_real(0.5f64.powi(squarings as i32));

    let mut sum = CMatrix::identity(n);
    let mut term = CMatrix::identity(n);
    for k in 1..=40 {
        term = gemm(&term, &scaled).scale_real(1.0 / k as f64);
        for (s, t) in sum.data.iter_mut().zip(&term.data) {
            *s += t;
        }
        if term.norm_one() <= 1e-17 * sum.norm_one() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = gemm(&sum, &sum);
        if !sum.is_finite() {
            return Err(Error::Overflow);
        }
    }
    Ok(sum)
}

/// LU factorization with partial pivoting.
#[derive(Debug, Clone)]
pub struct LuFactor {
    lu: CMatrix,
    perm: Vec<usize>,
}

impl LuFactor {
    pub fn new(a: &CMatrix) -> Result<Self> {
        let n = a.dim;
        let threshold = 1e-14 * a.frobenius_norm();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let (piv_row, piv_abs) = (col..n)
                .map(|r| (r, lu[(r, col)].norm()))
                .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if piv_abs <= threshold || piv_abs == 0.0 {
                return Err(Error::Singular {
                    pivot: piv_abs,
                    column: col,
                });
            }
            if piv_row != col {
                perm.swap(piv_row, col);
                for j in 0..n {
                    let tmp = lu[(col, j)];
                    lu[(col, j)] = lu[(piv_row, j)];
                    lu[(piv_row, j)] = tmp;
                }
            }
            let pivot = lu[(col, col)];
            for r in col + 1..n {
                let factor = lu[(r, col)] / pivot;
                lu[(r, col)] = factor;
                if factor == ZERO {
                    continue;
                }
                for j in col + 1..n {
                    let u = lu[(col, j)];
                    lu[(r, j)] -= factor * u;
                }
            }
        }
        Ok(LuFactor { lu, perm })
    }

    /// Solves `A X = B` for all columns of `B` at once.
    pub fn solve(&self, b: &CMatrix) -> Result<CMatrix> {
        let n = self.lu.dim;
        if b.dim != n {
            return Err(Error::DimMismatch {
                expected: n,
                found: b.dim,
            });
        }
        let mut x = CMatrix::from_fn(n, |i, j| b[(self.perm[i], j)]);
        for j in 0..n {
            for i in 1..n {
                let mut acc = x[(i, j)];
                for k in 0..i {
                    acc -= self.lu[(i, k)] * x[(k, j)];
                }
                x[(i, j)] = acc;
            }
            for i in (0..n).rev() {
                let mut acc = x[(i, j)];
                for k in i + 1..n {
                    acc -= self.lu[(i, k)] * x[(k, j)];
                }
                x[(i, j)] = acc / self.lu[(i, i)];
            }
        }
        Ok(x)
    }
}

/// Solves `A X = B`.
pub fn solve_linear(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    LuFactor::new(a)?.solve(b)
}
