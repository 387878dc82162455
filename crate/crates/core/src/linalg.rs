//! Dense complex linear algebra for small Hermitian matrices.
//!
//! Everything here is sized for a handful of qubits: matrices are stored
//! row-major in a flat `Vec`, and the eigensolver is a cyclic complex Jacobi
//! sweep, which is accurate to machine precision at these dimensions.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Eigenvalues at or below this are treated as a rank deficiency by
/// [`matrix_log`].
pub const DEFAULT_EIGEN_FLOOR: f64 = 1e-12;

/// Relative tolerance for the Hermiticity check.
pub const HERMITIAN_TOL: f64 = 1e-10;

const JACOBI_MAX_SWEEPS: usize = 64;

/// Square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "matrix dimension must be positive");
        ComplexMatrix {
            dim,
            data: vec![C64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.data[i * dim + j] = f(i, j);
            }
        }
        m
    }

    /// Builds a matrix from a flat row-major buffer of length `dim²`.
    pub fn from_vec(dim: usize, data: Vec<C64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("matrix dimension must be positive".into()));
        }
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: data.len(),
            });
        }
        Ok(ComplexMatrix { dim, data })
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_vec(dim, data)
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = C64::new(d, 0.0);
        }
        m
    }

    /// Outer product `|v⟩⟨w|`.
    pub fn outer(v: &[C64], w: &[C64]) -> Result<Self> {
        if v.len() != w.len() {
            return Err(Error::DimensionMismatch {
                expected: v.len(),
                found: w.len(),
            });
        }
        Ok(Self::from_fn(v.len(), |i, j| v[i] * w[j].conj()))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: C64) {
        self.data[i * self.dim + j] = value;
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn matmul(&self, other: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, other.dim, "matmul dimension mismatch");
        let n = self.dim;
        let mut out = ComplexMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn add(&self, other: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, other.dim, "add dimension mismatch");
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, other.dim, "sub dimension mismatch");
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> ComplexMatrix {
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    pub fn adjoint(&self) -> ComplexMatrix {
        Self::from_fn(self.dim, |i, j| self.get(j, i).conj())
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &ComplexMatrix) -> ComplexMatrix {
        let (n, m) = (self.dim, other.dim);
        Self::from_fn(n * m, |i, j| {
            self.get(i / m, j / m) * other.get(i % m, j % m)
        })
    }

    /// Largest deviation from Hermiticity, `max |A_ij − conj(A_ji)|`.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in i..self.dim {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }
}

/// A complex matrix that is Hermitian within [`HERMITIAN_TOL`].
///
/// Construction symmetrizes the input, so the stored matrix is exactly
/// Hermitian.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    inner: ComplexMatrix,
}

impl HermitianMatrix {
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        let defect = m.hermitian_defect();
        let tol = HERMITIAN_TOL * (1.0 + m.max_abs());
        if !(defect <= tol) {
            return Err(Error::Validation(format!(
                "matrix is not Hermitian (defect {defect:e} > {tol:e})"
            )));
        }
        Ok(Self::symmetrized(m))
    }

    /// Projects onto the Hermitian part, `(A + A†)/2`, without checking.
    pub(crate) fn symmetrized(m: ComplexMatrix) -> Self {
        let n = m.dim;
        let mut out = m;
        for i in 0..n {
            let d = out.get(i, i);
            out.set(i, i, C64::new(d.re, 0.0));
            for j in (i + 1)..n {
                let avg = (out.get(i, j) + out.get(j, i).conj()) * 0.5;
                out.set(i, j, avg);
                out.set(j, i, avg.conj());
            }
        }
        HermitianMatrix { inner: out }
    }

    pub fn zeros(dim: usize) -> Self {
        HermitianMatrix {
            inner: ComplexMatrix::zeros(dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        HermitianMatrix {
            inner: ComplexMatrix::identity(dim),
        }
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        HermitianMatrix {
            inner: ComplexMatrix::from_real_diag(diag),
        }
    }

    /// Rank-one projector-like matrix `|v⟩⟨v|`.
    pub fn projector(v: &[C64]) -> Self {
        Self::symmetrized(ComplexMatrix::outer(v, v).expect("same vector"))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.inner.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.inner.get(i, j)
    }

    pub fn as_matrix(&self) -> &ComplexMatrix {
        &self.inner
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.inner
    }

    pub fn trace(&self) -> f64 {
        self.inner.trace().re
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.frobenius_norm()
    }

    pub fn add(&self, other: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix {
            inner: self.inner.add(&other.inner),
        }
    }

    pub fn sub(&self, other: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix {
            inner: self.inner.sub(&other.inner),
        }
    }

    pub fn scale(&self, s: f64) -> HermitianMatrix {
        HermitianMatrix {
            inner: self.inner.scale(s),
        }
    }

    pub fn kron(&self, other: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix {
            inner: self.inner.kron(&other.inner),
        }
    }

    /// `A²`, which is again Hermitian.
    pub fn square(&self) -> HermitianMatrix {
        Self::symmetrized(self.inner.matmul(&self.inner))
    }

    /// Symmetrized product `(AB + BA)/2`.
    pub fn jordan_product(&self, other: &HermitianMatrix) -> HermitianMatrix {
        let ab = self.inner.matmul(&other.inner);
        let ba = other.inner.matmul(&self.inner);
        Self::symmetrized(ab.add(&ba).scale(0.5))
    }

    /// Expectation `⟨v|A|v⟩` for a (not necessarily normalized) vector.
    pub fn expectation(&self, v: &[C64]) -> f64 {
        let n = self.dim();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                acc += v[i].conj() * self.get(i, j) * v[j];
            }
        }
        acc.re
    }

    /// Largest entrywise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &HermitianMatrix) -> f64 {
        self.inner.sub(&other.inner).max_abs()
    }
}

/// Spectral decomposition `A = V Λ V†` with ascending real eigenvalues.
#[derive(Debug, Clone)]
pub struct EigDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Unitary matrix whose columns are the eigenvectors.
    pub eigenvectors: ComplexMatrix,
}

impl EigDecomposition {
    pub fn eigenvector(&self, k: usize) -> Vec<C64> {
        let n = self.eigenvectors.dim();
        (0..n).map(|i| self.eigenvectors.get(i, k)).collect()
    }

    /// Applies a scalar function to the spectrum: `V f(Λ) V†`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> HermitianMatrix {
        let n = self.eigenvectors.dim();
        let fl: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let v = &self.eigenvectors;
        let m = ComplexMatrix::from_fn(n, |i, j| {
            (0..n).map(|k| v.get(i, k) * fl[k] * v.get(j, k).conj()).sum()
        });
        HermitianMatrix::symmetrized(m)
    }

    pub fn reconstruct(&self) -> HermitianMatrix {
        self.map_spectrum(|l| l)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigenvalues.last().expect("nonempty spectrum")
    }
}

/// Hermitian eigendecomposition by cyclic complex Jacobi rotations.
pub fn eigh(a: &HermitianMatrix) -> EigDecomposition {
    let n = a.dim();
    let mut m = a.inner.clone();
    let mut v = ComplexMatrix::identity(n);

    if n > 1 {
        let scale = m.frobenius_norm().max(f64::MIN_POSITIVE);
        for _ in 0..JACOBI_MAX_SWEEPS {
            let off: f64 = (0..n)
                .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
                .map(|(i, j)| m.get(i, j).norm_sqr())
                .sum::<f64>()
                .sqrt();
            if off <= 1e-17 * scale {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    jacobi_rotate(&mut m, &mut v, p, q);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m.get(i, i).re).collect();
    order.sort_by(|&x, &y| diag[x].total_cmp(&diag[y]));

    let eigenvalues = order.iter().map(|&k| diag[k]).collect();
    let eigenvectors = ComplexMatrix::from_fn(n, |i, j| v.get(i, order[j]));
    EigDecomposition {
        eigenvalues,
        eigenvectors,
    }
}

/// Zeroes the (p, q) entry of `m` with the unitary `W = diag-phase · Givens`,
/// updating `m ← W† m W` and `v ← v W`.
fn jacobi_rotate(m: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize) {
    let apq = m.get(p, q);
    let mag = apq.norm();
    if mag == 0.0 {
        return;
    }
    let app = m.get(p, p).re;
    let aqq = m.get(q, q).re;
    // phase e^{-iφ} turns a_pq into |a_pq|
    let phase = (apq / mag).conj();

    let tau = (aqq - app) / (2.0 * mag);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;

    // W restricted to span{e_p, e_q}:
    //   W_pp = c, W_pq = s, W_qp = -s·phase, W_qq = c·phase
    let w_pp = C64::new(c, 0.0);
    let w_pq = C64::new(s, 0.0);
    let w_qp = -phase * s;
    let w_qq = phase * c;

    let n = m.dim();
    // columns: m ← m W
    for k in 0..n {
        let mkp = m.get(k, p);
        let mkq = m.get(k, q);
        m.set(k, p, mkp * w_pp + mkq * w_qp);
        m.set(k, q, mkp * w_pq + mkq * w_qq);
    }
    // rows: m ← W† m
    for k in 0..n {
        let mpk = m.get(p, k);
        let mqk = m.get(q, k);
        m.set(p, k, w_pp.conj() * mpk + w_qp.conj() * mqk);
        m.set(q, k, w_pq.conj() * mpk + w_qq.conj() * mqk);
    }
    m.set(p, q, C64::new(0.0, 0.0));
    m.set(q, p, C64::new(0.0, 0.0));
    let dp = m.get(p, p).re;
    let dq = m.get(q, q).re;
    m.set(p, p, C64::new(dp, 0.0));
    m.set(q, q, C64::new(dq, 0.0));

    for k in 0..n {
        let vkp = v.get(k, p);
        let vkq = v.get(k, q);
        v.set(k, p, vkp * w_pp + vkq * w_qp);
        v.set(k, q, vkp * w_pq + vkq * w_qq);
    }
}

/// Principal matrix logarithm of a positive definite matrix.
///
/// Fails with [`Error::RankDeficientState`] when the smallest eigenvalue is
/// at or below `eigen_floor`.
pub fn matrix_log(p: &HermitianMatrix, eigen_floor: f64) -> Result<HermitianMatrix> {
    log_from_eig(&eigh(p), eigen_floor)
}

pub fn log_from_eig(eig: &EigDecomposition, eigen_floor: f64) -> Result<HermitianMatrix> {
    let min = eig.min_eigenvalue();
    if !(min > eigen_floor) {
        return Err(Error::RankDeficientState {
            min_eigenvalue: min,
            floor: eigen_floor,
        });
    }
    Ok(eig.map_spectrum(f64::ln))
}

pub fn matrix_exp(a: &HermitianMatrix) -> HermitianMatrix {
    eigh(a).map_spectrum(f64::exp)
}

/// `A^power` for positive semidefinite `A`. Negative powers require full rank.
pub fn matrix_power(a: &HermitianMatrix, power: f64, eigen_floor: f64) -> Result<HermitianMatrix> {
    let eig = eigh(a);
    let min = eig.min_eigenvalue();
    if power < 0.0 && !(min > eigen_floor) {
        return Err(Error::RankDeficientState {
            min_eigenvalue: min,
            floor: eigen_floor,
        });
    }
    if min < -HERMITIAN_TOL * (1.0 + eig.max_eigenvalue().abs()) {
        return Err(Error::Validation(format!(
            "fractional power of an indefinite matrix (min eigenvalue {min:e})"
        )));
    }
    Ok(eig.map_spectrum(|l| l.max(0.0).powf(power)))
}

/// `Re Tr(AB)`. For Hermitian pairs the imaginary part is round-off only.
pub fn trace_product(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<f64> {
    let n = a.dim();
    if b.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: b.dim(),
        });
    }
    let (x, y) = (a.inner.as_slice(), b.inner.as_slice());
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += x[i * n + j] * y[j * n + i];
        }
    }
    debug_assert!(
        acc.im.abs() <= 1e-10 * (1.0 + acc.re.abs()),
        "Tr(AB) of Hermitian pair has imaginary part {}",
        acc.im
    );
    Ok(acc.re)
}
