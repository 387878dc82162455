//! Generalization and training losses and the information criteria built on
//! them: the quantum pair `G_n^Q`, `T_n^Q` with the covariance correction
//! `C_n^Q` (together QWAIC), the classical `G_n`, `T_n`, WAIC, and the
//! maximum-likelihood comparison criterion QAIC_LL.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigh, log_from_eig, matrix_log, trace_product, HermitianMatrix, DEFAULT_EIGEN_FLOOR};
use crate::models::ParametricModel;
use crate::posterior::{posterior_cov, PosteriorSamples};
use crate::quantum::{DensityMatrix, Povm};
use crate::shadows::Snapshot;
use crate::theory::{self, RealMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriteriaReport {
    pub n: usize,
    pub g_n_q: f64,
    pub t_n_q: f64,
    pub c_n_q: f64,
    pub qwaic: f64,
    pub g_n: f64,
    pub t_n: f64,
    pub waic: f64,
    pub qaic_ll: Option<f64>,
}

fn log_state(sigma: &DensityMatrix) -> Result<HermitianMatrix> {
    log_from_eig(&eigh(sigma.as_hermitian()), DEFAULT_EIGEN_FLOOR)
}

/// `G_n^Q = −Tr(ρ log σ_B)`.
pub fn quantum_generalization_loss(rho_true: &DensityMatrix, sigma_b: &DensityMatrix) -> Result<f64> {
    Ok(-trace_product(rho_true.as_hermitian(), &log_state(sigma_b)?)?)
}

/// `T_n^Q = −(1/n) Σ_i Tr(ρ̂_i log σ_B)`. Snapshots are not PSD, so this can
/// be negative.
pub fn quantum_training_loss(snapshots: &[Snapshot], sigma_b: &DensityMatrix) -> Result<f64> {
    if snapshots.is_empty() {
        return Err(Error::EmptyInput("training loss over no snapshots"));
    }
    let log_b = log_state(sigma_b)?;
    let mut acc = 0.0;
    for s in snapshots {
        acc += trace_product(&s.mat, &log_b)?;
    }
    Ok(-acc / snapshots.len() as f64)
}

/// `C_n^Q = (1/n) Σ_i Cov_θ[log p(x_i|θ), Tr(ρ̂_i log σ(θ))]`.
///
/// The covariance depends on `i` only through the outcome, so it is
/// evaluated once per distinct outcome and weighted by its count. The
/// snapshot matrices themselves are used, not the scheme's table.
pub fn c_n_q(samples: &PosteriorSamples, outcomes: &[usize], snapshots: &[Snapshot]) -> Result<f64> {
    if outcomes.len() != snapshots.len() {
        return Err(Error::DimensionMismatch {
            expected: outcomes.len(),
            found: snapshots.len(),
        });
    }
    if outcomes.is_empty() {
        return Err(Error::EmptyInput("covariance term over no outcomes"));
    }
    let alphabet = samples.alphabet_size();
    let mut representative: Vec<Option<&Snapshot>> = vec![None; alphabet];
    let mut counts = vec![0usize; alphabet];
    for (&x, snap) in outcomes.iter().zip(snapshots) {
        if x >= alphabet {
            return Err(Error::UnknownOutcome(x.to_string()));
        }
        if snap.outcome != x {
            return Err(Error::Validation(format!(
                "snapshot for outcome {} misaligned with outcome {x}",
                snap.outcome
            )));
        }
        match representative[x] {
            None => representative[x] = Some(snap),
            Some(first) if first.mat != snap.mat => {
                return Err(Error::Validation(format!(
                    "outcome {x} has differing snapshot matrices"
                )))
            }
            Some(_) => {}
        }
        counts[x] += 1;
    }

    let mut acc = 0.0;
    for x in 0..alphabet {
        let Some(snap) = representative[x] else { continue };
        let quantum: Vec<f64> = samples
            .log_sigma()
            .iter()
            .map(|l| trace_product(&snap.mat, l))
            .collect::<Result<_>>()?;
        acc += counts[x] as f64 * posterior_cov(samples.log_lik(x), &quantum)?;
    }
    Ok(acc / outcomes.len() as f64)
}

/// `QWAIC = T_n^Q + C_n^Q`.
pub fn qwaic(t_n_q: f64, c_n_q: f64) -> f64 {
    t_n_q + c_n_q
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalLosses {
    pub g_n: f64,
    pub t_n: f64,
    pub waic: f64,
    /// `(1/n) Σ_i V_θ[log p(x_i|θ)]`, so that `waic = t_n + functional_variance`.
    pub functional_variance: f64,
}

/// Classical `G_n` (exact sum over the alphabet against `q_true`), `T_n`
/// and WAIC.
pub fn classical_losses(
    samples: &PosteriorSamples,
    outcomes: &[usize],
    q_true: &[f64],
) -> Result<ClassicalLosses> {
    let tables: Vec<&[f64]> = (0..samples.alphabet_size()).map(|x| samples.log_lik(x)).collect();
    classical_from_tables(&tables, outcomes, q_true)
}

/// `tables[x][s] = log p(x|θ_s)`.
pub(crate) fn classical_from_tables(
    tables: &[&[f64]],
    outcomes: &[usize],
    q_true: &[f64],
) -> Result<ClassicalLosses> {
    if outcomes.is_empty() {
        return Err(Error::EmptyInput("classical losses over no outcomes"));
    }
    let alphabet = tables.len();
    if q_true.len() != alphabet {
        return Err(Error::DimensionMismatch {
            expected: alphabet,
            found: q_true.len(),
        });
    }
    let mut log_pred = Vec::with_capacity(alphabet);
    let mut variance = Vec::with_capacity(alphabet);
    for &ll in tables {
        if ll.is_empty() {
            return Err(Error::EmptyInput("classical losses over no samples"));
        }
        let s = ll.len() as f64;
        let pred = ll.iter().map(|l| l.exp()).sum::<f64>() / s;
        log_pred.push(if pred > 0.0 { pred.ln() } else { f64::NEG_INFINITY });
        variance.push(posterior_cov(ll, ll)?);
    }
    let mut g_n = 0.0;
    for (index, &q) in q_true.iter().enumerate() {
        if q > 0.0 {
            if !log_pred[index].is_finite() {
                return Err(Error::SupportViolation { index });
            }
            g_n -= q * log_pred[index];
        }
    }
    let n = outcomes.len() as f64;
    let mut t_n = 0.0;
    let mut fv = 0.0;
    for &x in outcomes {
        let lp = *log_pred
            .get(x)
            .ok_or_else(|| Error::UnknownOutcome(x.to_string()))?;
        if !lp.is_finite() {
            return Err(Error::SupportViolation { index: x });
        }
        t_n -= lp;
        fv += variance[x];
    }
    t_n /= n;
    fv /= n;
    Ok(ClassicalLosses {
        g_n,
        t_n,
        waic: t_n + fv,
        functional_variance: fv,
    })
}

/// Grid points per dimension for the maximum-likelihood search.
pub const ML_GRID_POINTS: usize = 401;

/// Maximum-likelihood point by a dense grid followed by coordinate-wise
/// golden-section refinement around the best grid point.
pub fn maximum_likelihood(
    model: &ParametricModel,
    outcomes: &[usize],
    povm: &Povm,
) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; povm.len()];
    for &x in outcomes {
        *counts
            .get_mut(x)
            .ok_or_else(|| Error::UnknownOutcome(x.to_string()))? += 1;
    }
    let objective = |t: &[f64]| -> f64 {
        match model.outcome_log_probs(t, povm) {
            Ok(lp) => {
                let v: f64 = counts
                    .iter()
                    .zip(&lp)
                    .filter(|(c, _)| **c > 0)
                    .map(|(&c, l)| c as f64 * l)
                    .sum();
                if v.is_nan() {
                    f64::NEG_INFINITY
                } else {
                    v
                }
            }
            Err(_) => f64::NEG_INFINITY,
        }
    };

    let bounds = model.domain().bounds().to_vec();
    let d = bounds.len();
    let cell: Vec<f64> = bounds
        .iter()
        .map(|(lo, hi)| (hi - lo) / (ML_GRID_POINTS - 1) as f64)
        .collect();
    let mut best = Vec::new();
    let mut best_v = f64::NEG_INFINITY;
    let mut index = vec![0usize; d];
    let mut point = vec![0.0; d];
    loop {
        for k in 0..d {
            point[k] = bounds[k].0 + cell[k] * index[k] as f64;
        }
        let v = objective(&point);
        if v > best_v {
            best_v = v;
            best = point.clone();
        }
        // odometer over the grid
        let mut k = 0;
        while k < d {
            index[k] += 1;
            if index[k] < ML_GRID_POINTS {
                break;
            }
            index[k] = 0;
            k += 1;
        }
        if k == d {
            break;
        }
    }
    if !best_v.is_finite() {
        return Err(Error::Validation("likelihood is zero on the whole grid".into()));
    }

    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    for _ in 0..3 {
        for k in 0..d {
            let lo = (best[k] - cell[k]).max(bounds[k].0);
            let hi = (best[k] + cell[k]).min(bounds[k].1);
            let eval = |x: f64, base: &[f64]| {
                let mut t = base.to_vec();
                t[k] = x;
                objective(&t)
            };
            let (mut a, mut b) = (lo, hi);
            let mut c = b - INV_PHI * (b - a);
            let mut e = a + INV_PHI * (b - a);
            let (mut fc, mut fe) = (eval(c, &best), eval(e, &best));
            for _ in 0..60 {
                if fc > fe {
                    b = e;
                    e = c;
                    fe = fc;
                    c = b - INV_PHI * (b - a);
                    fc = eval(c, &best);
                } else {
                    a = c;
                    c = e;
                    fc = fe;
                    e = a + INV_PHI * (b - a);
                    fe = eval(e, &best);
                }
            }
            let x = 0.5 * (a + b);
            let v = eval(x, &best);
            if v >= best_v {
                best_v = v;
                best[k] = x;
            }
        }
    }
    Ok(best)
}

/// `QAIC_LL = −(1/n) Σ log p(x_i|θ̂) + (d + Tr(Ĵ^Q Î⁻¹)) / (2n)`.
///
/// `i_hat` must be positive definite.
pub fn qaic_ll(
    model: &ParametricModel,
    outcomes: &[usize],
    povm: &Povm,
    theta_hat: &[f64],
    j_q_hat: &RealMatrix,
    i_hat: &RealMatrix,
) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::EmptyInput("QAIC_LL over no outcomes"));
    }
    let n = outcomes.len() as f64;
    let nll = -model.log_likelihood(theta_hat, outcomes, povm)? / n;
    Ok(nll + qaic_penalty(theta_hat.len(), j_q_hat, i_hat, outcomes.len())?)
}

/// The penalty `(d + Tr(Ĵ^Q Î⁻¹)) / (2n)`.
pub fn qaic_penalty(d: usize, j_q_hat: &RealMatrix, i_hat: &RealMatrix, n: usize) -> Result<f64> {
    if j_q_hat.len() != d || i_hat.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: i_hat.len(),
        });
    }
    let min = theory::min_eigenvalue(i_hat);
    if !(min > 0.0) {
        return Err(Error::SingularHessian {
            condition: f64::INFINITY,
        });
    }
    let i_inv = theory::symmetric_inverse(i_hat)?;
    let ratio = theory::trace(&theory::matmul(j_q_hat, &i_inv));
    Ok((d as f64 + ratio) / (2.0 * n as f64))
}

/// QAIC_LL with plug-in Hessians evaluated at the maximum-likelihood state.
pub fn qaic_ll_plugin(model: &ParametricModel, outcomes: &[usize], povm: &Povm) -> Result<f64> {
    let theta_hat = maximum_likelihood(model, outcomes, povm)?;
    let rho_hat = model.sigma(&theta_hat)?;
    let report = theory::numerical_hessians(model, &rho_hat, povm, &theta_hat, None)?;
    qaic_ll(model, outcomes, povm, &theta_hat, &report.j_q, &report.i)
}

/// Von Neumann entropy lower bound check helper: `G_n^Q − S(ρ) = D(ρ‖σ_B)`.
pub fn generalization_excess(rho_true: &DensityMatrix, sigma_b: &DensityMatrix) -> Result<f64> {
    Ok(quantum_generalization_loss(rho_true, sigma_b)? - crate::quantum::von_neumann_entropy(rho_true))
}

/// Exact snapshot average as a pseudo-data set: `Σ_x q(x) ρ̂_x`, used to check
/// that the training loss transfers unbiasedness.
pub fn expected_training_loss(
    snapshot_table: &[Snapshot],
    q_true: &[f64],
    sigma_b: &DensityMatrix,
) -> Result<f64> {
    let log_b = matrix_log(sigma_b.as_hermitian(), DEFAULT_EIGEN_FLOOR)?;
    let mut acc = 0.0;
    for (s, q) in snapshot_table.iter().zip(q_true) {
        acc += q * trace_product(&s.mat, &log_b)?;
    }
    Ok(-acc)
}
