//! Random Pauli-basis measurements and their classical-shadow snapshots.
//!
//! A single qubit is measured in one of the Z, X, Y eigenbases chosen
//! uniformly, which is the same as the six-outcome POVM with elements
//! `(1/3)|v⟩⟨v|`. The snapshot of an outcome with eigenvector `|v⟩` is the
//! inverted measurement channel applied to it, `3|v⟩⟨v| − I`. For several
//! qubits the POVM and the snapshots are tensor products, with the first qubit
//! as the most significant factor.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{HermitianMatrix, C64};
use crate::quantum::{born_probabilities, DensityMatrix, Povm};

/// Single-qubit outcome labels in POVM order.
pub const QUBIT_LABELS: [&str; 6] = ["Z+", "Z-", "X+", "X-", "Y+", "Y-"];

fn qubit_eigenvector(k: usize) -> [C64; 2] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let r = |x: f64| C64::new(x, 0.0);
    match k {
        0 => [r(1.0), r(0.0)],
        1 => [r(0.0), r(1.0)],
        2 => [r(s), r(s)],
        3 => [r(s), r(-s)],
        4 => [r(s), C64::new(0.0, s)],
        5 => [r(s), C64::new(0.0, -s)],
        _ => unreachable!("qubit outcome index {k}"),
    }
}

/// Classical-shadow snapshot. Unit trace, Hermitian, generally not PSD.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub mat: HermitianMatrix,
    /// Index of the outcome in the scheme alphabet.
    pub outcome: usize,
}

#[derive(Debug, Clone)]
pub struct PauliShadowScheme {
    n_qubits: usize,
    povm: Povm,
    snapshot_table: Vec<Snapshot>,
}

impl PauliShadowScheme {
    pub fn new(n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::Validation("scheme needs at least one qubit".into()));
        }
        let qubit_elements: Vec<HermitianMatrix> = (0..6)
            .map(|k| HermitianMatrix::projector(&qubit_eigenvector(k)).scale(1.0 / 3.0))
            .collect();
        let qubit_snapshots: Vec<HermitianMatrix> = (0..6)
            .map(|k| {
                HermitianMatrix::projector(&qubit_eigenvector(k))
                    .scale(3.0)
                    .sub(&HermitianMatrix::identity(2))
            })
            .collect();

        let count = 6usize.pow(n_qubits as u32);
        let mut elements = Vec::with_capacity(count);
        let mut labels = Vec::with_capacity(count);
        let mut snapshot_table = Vec::with_capacity(count);
        for index in 0..count {
            let digits = Self::digits(index, n_qubits);
            let mut elem = qubit_elements[digits[0]].clone();
            let mut snap = qubit_snapshots[digits[0]].clone();
            for &d in &digits[1..] {
                elem = elem.kron(&qubit_elements[d]);
                snap = snap.kron(&qubit_snapshots[d]);
            }
            elements.push(elem);
            labels.push(
                digits
                    .iter()
                    .map(|&d| QUBIT_LABELS[d])
                    .collect::<Vec<_>>()
                    .join(","),
            );
            snapshot_table.push(Snapshot {
                mat: snap,
                outcome: index,
            });
        }
        Ok(PauliShadowScheme {
            n_qubits,
            povm: Povm::new(elements, labels)?,
            snapshot_table,
        })
    }

    /// Base-6 digits of an outcome index, most significant (first qubit) first.
    fn digits(mut index: usize, n_qubits: usize) -> Vec<usize> {
        let mut out = vec![0; n_qubits];
        for slot in out.iter_mut().rev() {
            *slot = index % 6;
            index /= 6;
        }
        out
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn povm(&self) -> &Povm {
        &self.povm
    }

    pub fn alphabet_size(&self) -> usize {
        self.snapshot_table.len()
    }

    pub fn label(&self, outcome: usize) -> Result<&str> {
        self.povm
            .labels()
            .get(outcome)
            .map(String::as_str)
            .ok_or_else(|| Error::UnknownOutcome(outcome.to_string()))
    }

    /// Parses a serialized label. Accepts `-` or the Unicode minus sign.
    pub fn parse_label(&self, label: &str) -> Result<usize> {
        let normalized = label.trim().replace('\u{2212}', "-").replace(' ', "");
        self.povm
            .index_of(&normalized)
            .ok_or_else(|| Error::UnknownOutcome(label.to_string()))
    }

    pub fn snapshot(&self, outcome: usize) -> Result<&Snapshot> {
        self.snapshot_table
            .get(outcome)
            .ok_or_else(|| Error::UnknownOutcome(outcome.to_string()))
    }

    pub fn snapshot_table(&self) -> &[Snapshot] {
        &self.snapshot_table
    }

    /// Overwrites one snapshot without validation. Negative-control hook for
    /// the unbiasedness check.
    #[doc(hidden)]
    pub fn corrupt_snapshot(&mut self, outcome: usize, mat: HermitianMatrix) {
        self.snapshot_table[outcome].mat = mat;
    }

    /// `Σ_m Tr(Π_m ρ) ρ̂_m`, the exact expectation of a snapshot under `ρ`.
    pub fn exact_average(&self, rho: &DensityMatrix) -> Result<HermitianMatrix> {
        let q = born_probabilities(rho, &self.povm)?;
        let mut acc = HermitianMatrix::zeros(self.dim());
        for (p, snap) in q.iter().zip(&self.snapshot_table) {
            acc = acc.add(&snap.mat.scale(*p));
        }
        Ok(acc)
    }

    /// Largest entrywise deviation of [`Self::exact_average`] from `ρ`.
    pub fn unbiasedness_error(&self, rho: &DensityMatrix) -> Result<f64> {
        Ok(self.exact_average(rho)?.max_abs_diff(rho.as_hermitian()))
    }
}

/// Draws `n` i.i.d. outcomes from the Born distribution of `rho`.
pub fn sample_outcomes<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    scheme: &PauliShadowScheme,
    n: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::EmptyInput("cannot sample zero outcomes"));
    }
    let q = born_probabilities(rho, scheme.povm())?;
    let mut cumulative = Vec::with_capacity(q.len());
    let mut acc = 0.0;
    for p in &q {
        acc += p;
        cumulative.push(acc);
    }
    let total = acc;
    let last_nonzero = q.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    Ok((0..n)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * total;
            // first index with cumulative > u; zero-probability outcomes are never hit
            let k = cumulative.partition_point(|&c| c <= u);
            k.min(last_nonzero)
        })
        .collect())
}

pub fn snapshot(outcome: usize, scheme: &PauliShadowScheme) -> Result<Snapshot> {
    scheme.snapshot(outcome).cloned()
}

pub fn snapshots_for(outcomes: &[usize], scheme: &PauliShadowScheme) -> Result<Vec<Snapshot>> {
    outcomes.iter().map(|&o| snapshot(o, scheme)).collect()
}

/// Arithmetic mean of snapshots: the linear-inversion estimate of the state.
pub fn mean_snapshot(snapshots: &[Snapshot]) -> Result<HermitianMatrix> {
    let first = snapshots
        .first()
        .ok_or(Error::EmptyInput("mean of no snapshots"))?;
    let dim = first.mat.dim();
    let mut acc = HermitianMatrix::zeros(dim);
    for s in snapshots {
        if s.mat.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: s.mat.dim(),
            });
        }
        acc = acc.add(&s.mat);
    }
    Ok(acc.scale(1.0 / snapshots.len() as f64))
}
