//! States, measurements and the divergences between them.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{eigh, log_from_eig, trace_product, ComplexMatrix, HermitianMatrix, C64};

/// Tolerance for density-matrix and POVM validation.
pub const STATE_TOL: f64 = 1e-10;

/// Born probabilities in `[-PROB_CLIP, 0)` are clipped to zero; anything more
/// negative is an error.
pub const PROB_CLIP: f64 = 1e-12;

const COMPLETENESS_RANK_TOL: f64 = 1e-8;

/// Positive semidefinite, unit-trace Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: HermitianMatrix,
}

impl DensityMatrix {
    pub fn new(mat: HermitianMatrix) -> Result<Self> {
        let tr = mat.trace();
        if !((tr - 1.0).abs() <= STATE_TOL) {
            return Err(Error::Validation(format!("density matrix trace {tr} != 1")));
        }
        let min = eigh(&mat).min_eigenvalue();
        if min < -STATE_TOL {
            return Err(Error::Validation(format!(
                "density matrix is not positive semidefinite (min eigenvalue {min:e})"
            )));
        }
        Ok(DensityMatrix { mat })
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityMatrix {
            mat: HermitianMatrix::identity(dim).scale(1.0 / dim as f64),
        }
    }

    /// Pure state `|ψ⟩⟨ψ|`; the vector is normalized first.
    pub fn pure(psi: &[C64]) -> Result<Self> {
        let norm = psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::Validation("zero state vector".into()));
        }
        let v: Vec<C64> = psi.iter().map(|a| a / norm).collect();
        Self::new(HermitianMatrix::projector(&v))
    }

    pub fn dim(&self) -> usize {
        self.mat.dim()
    }

    pub fn as_hermitian(&self) -> &HermitianMatrix {
        &self.mat
    }

    pub fn into_hermitian(self) -> HermitianMatrix {
        self.mat
    }

    /// Uniform convex combination of states of equal dimension.
    pub fn mixture(states: &[DensityMatrix]) -> Result<Self> {
        let first = states.first().ok_or(Error::EmptyInput("mixture of no states"))?;
        let mut acc = HermitianMatrix::zeros(first.dim());
        for s in states {
            if s.dim() != first.dim() {
                return Err(Error::DimensionMismatch {
                    expected: first.dim(),
                    found: s.dim(),
                });
            }
            acc = acc.add(&s.mat);
        }
        Self::new(acc.scale(1.0 / states.len() as f64))
    }
}

/// A measurement: PSD elements summing to the identity, each with a label.
#[derive(Debug, Clone)]
pub struct Povm {
    elements: Vec<HermitianMatrix>,
    labels: Vec<String>,
}

impl Povm {
    pub fn new(elements: Vec<HermitianMatrix>, labels: Vec<String>) -> Result<Self> {
        let first = elements.first().ok_or(Error::EmptyInput("POVM with no elements"))?;
        if labels.len() != elements.len() {
            return Err(Error::DimensionMismatch {
                expected: elements.len(),
                found: labels.len(),
            });
        }
        let dim = first.dim();
        let mut sum = HermitianMatrix::zeros(dim);
        for (e, label) in elements.iter().zip(&labels) {
            if e.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: e.dim(),
                });
            }
            let min = eigh(e).min_eigenvalue();
            if min < -STATE_TOL {
                return Err(Error::Validation(format!(
                    "POVM element `{label}` is not PSD (min eigenvalue {min:e})"
                )));
            }
            sum = sum.add(e);
        }
        let defect = sum.sub(&HermitianMatrix::identity(dim)).frobenius_norm();
        if defect > STATE_TOL {
            return Err(Error::Validation(format!(
                "POVM elements do not sum to identity (defect {defect:e})"
            )));
        }
        Ok(Povm { elements, labels })
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[HermitianMatrix] {
        &self.elements
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Born-rule distribution `Tr(Π_m ρ)` for a Hermitian operator that is
/// expected to be a state. Used directly on model outputs in hot loops.
pub(crate) fn born_from_hermitian(rho: &HermitianMatrix, povm: &Povm) -> Result<Vec<f64>> {
    if rho.dim() != povm.dim() {
        return Err(Error::DimensionMismatch {
            expected: povm.dim(),
            found: rho.dim(),
        });
    }
    let mut probs = Vec::with_capacity(povm.len());
    for (e, label) in povm.elements.iter().zip(&povm.labels) {
        let p = trace_product(e, rho)?;
        if p < -PROB_CLIP {
            return Err(Error::Validation(format!(
                "negative Born probability {p:e} for outcome `{label}`"
            )));
        }
        probs.push(p.clamp(0.0, 1.0));
    }
    Ok(probs)
}

pub fn born_probabilities(rho: &DensityMatrix, povm: &Povm) -> Result<Vec<f64>> {
    let probs = born_from_hermitian(&rho.mat, povm)?;
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > STATE_TOL {
        return Err(Error::Validation(format!("Born probabilities sum to {total}")));
    }
    Ok(probs)
}

/// Random full-rank state `GG†/Tr(GG†)` from a complex Ginibre matrix `G`.
pub fn random_density_matrix<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DensityMatrix {
    let g = ComplexMatrix::from_fn(dim, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let gg = g.matmul(&g.adjoint());
    let tr = gg.trace().re;
    DensityMatrix {
        mat: HermitianMatrix::symmetrized(gg.scale(1.0 / tr)),
    }
}

/// Von Neumann entropy `−Tr ρ log ρ` with `0·log 0 = 0`.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> f64 {
    -eigh(&rho.mat)
        .eigenvalues
        .iter()
        .filter(|&&l| l > 0.0)
        .map(|&l| l * l.ln())
        .sum::<f64>()
}

/// `D(ρ‖σ) = Tr ρ(log ρ − log σ)`. Zero eigenvalues of `ρ` contribute nothing;
/// `σ` must be full rank above `eigen_floor`.
pub fn quantum_relative_entropy(
    rho: &DensityMatrix,
    sigma: &DensityMatrix,
    eigen_floor: f64,
) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: sigma.dim(),
        });
    }
    let log_sigma = log_from_eig(&eigh(&sigma.mat), eigen_floor)?;
    let cross = trace_product(&rho.mat, &log_sigma)?;
    Ok(-von_neumann_entropy(rho) - cross)
}

/// `KL(q‖p) = Σ q_i log(q_i/p_i)` with `0·log 0 = 0`.
pub fn kl_divergence(q: &[f64], p: &[f64]) -> Result<f64> {
    if q.len() != p.len() {
        return Err(Error::DimensionMismatch {
            expected: q.len(),
            found: p.len(),
        });
    }
    let mut acc = 0.0;
    for (index, (&qi, &pi)) in q.iter().zip(p).enumerate() {
        if qi <= 0.0 {
            continue;
        }
        if pi <= 0.0 {
            return Err(Error::SupportViolation { index });
        }
        acc += qi * (qi / pi).ln();
    }
    Ok(acc)
}

/// Coordinates of a Hermitian matrix in an orthonormal real basis of the
/// `D²`-dimensional Hermitian space.
fn hermitian_coordinates(a: &HermitianMatrix) -> Vec<f64> {
    let n = a.dim();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        out.push(a.get(i, i).re);
    }
    let s = std::f64::consts::SQRT_2;
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(s * a.get(i, j).re);
            out.push(s * a.get(i, j).im);
        }
    }
    out
}

/// True iff the POVM elements span the full space of Hermitian operators.
pub fn is_tomographically_complete(povm: &Povm) -> bool {
    let d2 = povm.dim() * povm.dim();
    let coords: Vec<Vec<f64>> = povm.elements.iter().map(hermitian_coordinates).collect();
    // frame operator Σ v vᵀ, D² × D²
    let frame = ComplexMatrix::from_fn(d2, |i, j| {
        C64::new(coords.iter().map(|v| v[i] * v[j]).sum(), 0.0)
    });
    let eig = eigh(&HermitianMatrix::symmetrized(frame));
    let top = eig.max_eigenvalue();
    if !(top > 0.0) {
        return false;
    }
    let rank = eig
        .eigenvalues
        .iter()
        .filter(|&&l| l > COMPLETENESS_RANK_TOL * top)
        .count();
    rank == d2
}
