//! Average log losses `K`, `K^Q`, their finite-difference Hessians and Fisher
//! matrices, the regular-case coefficients built from them, and a table of
//! published reference constants for the built-in models.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{eigh, matrix_log, ComplexMatrix, HermitianMatrix, C64, DEFAULT_EIGEN_FLOOR};
use crate::models::{log_probs, ParametricModel};
use crate::quantum::{
    born_from_hermitian, born_probabilities, kl_divergence, quantum_relative_entropy,
    DensityMatrix, Povm,
};

/// Default finite-difference step as a fraction of each domain width.
pub const DEFAULT_FD_REL_STEP: f64 = 1e-4;

/// Condition number at which `J` is treated as singular.
pub const MAX_CONDITION: f64 = 1e8;

pub type RealMatrix = Vec<Vec<f64>>;

/// `K(θ) = KL(q ‖ p(·|θ))` with `q` the Born distribution of `rho_true`.
pub fn eval_k(
    model: &ParametricModel,
    rho_true: &DensityMatrix,
    povm: &Povm,
    theta: &[f64],
) -> Result<f64> {
    let q = born_probabilities(rho_true, povm)?;
    let sigma = model.sigma(theta)?;
    let p = born_probabilities(&sigma, povm)?;
    kl_divergence(&q, &p)
}

/// `K^Q(θ) = D(ρ ‖ σ(θ))`.
pub fn eval_kq(model: &ParametricModel, rho_true: &DensityMatrix, theta: &[f64]) -> Result<f64> {
    let sigma = model.sigma(theta)?;
    quantum_relative_entropy(rho_true, &sigma, DEFAULT_EIGEN_FLOOR)
}

#[derive(Debug, Clone, Serialize)]
pub struct FisherReport {
    pub model_id: String,
    pub theta0: Vec<f64>,
    pub fd_step: Vec<f64>,
    /// Classical Fisher information `E_q[∂log p ∂log pᵀ]`.
    pub i: RealMatrix,
    /// Hessian of `K`.
    pub j: RealMatrix,
    /// `Tr(ρ ∂log σ ∂log σᵀ)`.
    pub i_q: RealMatrix,
    /// Hessian of `K^Q`.
    pub j_q: RealMatrix,
    pub lambda_q: Option<f64>,
    pub nu_q: Option<f64>,
    pub nu_prime_q: Option<f64>,
    /// Why the coefficients are missing, when they are.
    pub note: Option<String>,
}

impl FisherReport {
    /// `Tr(J^Q J⁻¹)`, i.e. `2λ^Q`.
    pub fn trace_jq_jinv(&self) -> Option<f64> {
        self.lambda_q.map(|l| 2.0 * l)
    }
}

fn check_stencil(model: &ParametricModel, theta0: &[f64], steps: &[f64]) -> Result<()> {
    let d = theta0.len();
    let mut probe = theta0.to_vec();
    for k in 0..d {
        for sign in [-2.0, 2.0] {
            probe[k] = theta0[k] + sign * steps[k];
            if !model.domain_contains(&probe)? {
                return Err(Error::BoundaryTooClose { dim: k, step: steps[k] });
            }
        }
        probe[k] = theta0[k];
    }
    for a in 0..d {
        for b in (a + 1)..d {
            for (sa, sb) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                probe[a] = theta0[a] + sa * steps[a];
                probe[b] = theta0[b] + sb * steps[b];
                if !model.domain_contains(&probe)? {
                    return Err(Error::BoundaryTooClose { dim: a, step: steps[a] });
                }
            }
            probe[a] = theta0[a];
            probe[b] = theta0[b];
        }
    }
    Ok(())
}

fn shifted(x: &[f64], moves: &[(usize, f64)]) -> Vec<f64> {
    let mut y = x.to_vec();
    for &(k, dx) in moves {
        y[k] += dx;
    }
    y
}

fn central_hessian(
    f: &impl Fn(&[f64]) -> Result<f64>,
    x0: &[f64],
    h: &[f64],
) -> Result<RealMatrix> {
    let d = x0.len();
    let f0 = f(x0)?;
    let mut out = vec![vec![0.0; d]; d];
    for i in 0..d {
        let fp = f(&shifted(x0, &[(i, h[i])]))?;
        let fm = f(&shifted(x0, &[(i, -h[i])]))?;
        out[i][i] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in (i + 1)..d {
            let fpp = f(&shifted(x0, &[(i, h[i]), (j, h[j])]))?;
            let fpm = f(&shifted(x0, &[(i, h[i]), (j, -h[j])]))?;
            let fmp = f(&shifted(x0, &[(i, -h[i]), (j, h[j])]))?;
            let fmm = f(&shifted(x0, &[(i, -h[i]), (j, -h[j])]))?;
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    Ok(out)
}

/// Central-difference Hessian with one Richardson level, `(4H(h/2) − H(h))/3`.
pub fn richardson_hessian(
    f: impl Fn(&[f64]) -> Result<f64>,
    x0: &[f64],
    h: &[f64],
    quantity: &'static str,
) -> Result<RealMatrix> {
    let coarse = central_hessian(&f, x0, h)?;
    let half: Vec<f64> = h.iter().map(|s| s / 2.0).collect();
    let fine = central_hessian(&f, x0, &half)?;
    let out: RealMatrix = fine
        .iter()
        .zip(&coarse)
        .map(|(rf, rc)| rf.iter().zip(rc).map(|(a, b)| (4.0 * a - b) / 3.0).collect())
        .collect();
    if out.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteDerivative { quantity });
    }
    Ok(out)
}

/// Richardson-extrapolated central gradient of a vector-valued function:
/// `out[k]` is the derivative along coordinate `k`.
pub fn richardson_jacobian(
    f: impl Fn(&[f64]) -> Result<Vec<f64>>,
    x0: &[f64],
    h: &[f64],
    quantity: &'static str,
) -> Result<Vec<Vec<f64>>> {
    let diff = |k: usize, step: f64| -> Result<Vec<f64>> {
        let p = f(&shifted(x0, &[(k, step)]))?;
        let m = f(&shifted(x0, &[(k, -step)]))?;
        Ok(p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * step)).collect())
    };
    let mut out = Vec::with_capacity(x0.len());
    for k in 0..x0.len() {
        let coarse = diff(k, h[k])?;
        let fine = diff(k, h[k] / 2.0)?;
        let g: Vec<f64> = fine
            .iter()
            .zip(&coarse)
            .map(|(a, b)| (4.0 * a - b) / 3.0)
            .collect();
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteDerivative { quantity });
        }
        out.push(g);
    }
    Ok(out)
}

fn flatten(m: &HermitianMatrix) -> Vec<f64> {
    m.as_matrix().as_slice().iter().flat_map(|z| [z.re, z.im]).collect()
}

fn unflatten(dim: usize, v: &[f64]) -> HermitianMatrix {
    let data = v.chunks(2).map(|c| C64::new(c[0], c[1])).collect();
    // difference quotients of Hermitian matrices are Hermitian up to round-off
    HermitianMatrix::symmetrized(ComplexMatrix::from_vec(dim, data).expect("square buffer"))
}

/// Finite-difference `I, J, I^Q, J^Q` at `theta0`, plus the regular-case
/// coefficients when `J` is invertible.
pub fn numerical_hessians(
    model: &ParametricModel,
    rho_true: &DensityMatrix,
    povm: &Povm,
    theta0: &[f64],
    fd_rel_step: Option<f64>,
) -> Result<FisherReport> {
    let rel = fd_rel_step.unwrap_or(DEFAULT_FD_REL_STEP);
    let steps: Vec<f64> = model.domain().widths().iter().map(|w| w * rel).collect();
    if theta0.len() != model.param_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.param_dim(),
            found: theta0.len(),
        });
    }
    check_stencil(model, theta0, &steps)?;

    let q = born_probabilities(rho_true, povm)?;
    let j = richardson_hessian(
        |t| {
            let p = born_from_hermitian(&model.state_unchecked(t), povm)?;
            kl_divergence(&q, &p)
        },
        theta0,
        &steps,
        "J",
    )?;
    let j_q = richardson_hessian(
        |t| {
            let s = DensityMatrix::new(model.state_unchecked(t))?;
            quantum_relative_entropy(rho_true, &s, DEFAULT_EIGEN_FLOOR)
        },
        theta0,
        &steps,
        "J_q",
    )?;

    let scores = richardson_jacobian(
        |t| Ok(log_probs(&born_from_hermitian(&model.state_unchecked(t), povm)?)),
        theta0,
        &steps,
        "I",
    )?;
    let d = theta0.len();
    let mut i = vec![vec![0.0; d]; d];
    for a in 0..d {
        for b in 0..d {
            i[a][b] = q
                .iter()
                .enumerate()
                .filter(|(_, &qx)| qx > 0.0)
                .map(|(x, qx)| qx * scores[a][x] * scores[b][x])
                .sum();
        }
    }
    if i.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteDerivative { quantity: "I" });
    }

    let hd = model.hilbert_dim();
    let dlog = richardson_jacobian(
        |t| Ok(flatten(&matrix_log(&model.state_unchecked(t), DEFAULT_EIGEN_FLOOR)?)),
        theta0,
        &steps,
        "I_q",
    )?;
    let dlog: Vec<HermitianMatrix> = dlog.iter().map(|v| unflatten(hd, v)).collect();
    let mut i_q = vec![vec![0.0; d]; d];
    for a in 0..d {
        for b in a..d {
            let v = crate::linalg::trace_product(rho_true.as_hermitian(), &dlog[a].jordan_product(&dlog[b]))?;
            i_q[a][b] = v;
            i_q[b][a] = v;
        }
    }

    let mut report = FisherReport {
        model_id: model.id().to_string(),
        theta0: theta0.to_vec(),
        fd_step: steps,
        i,
        j,
        i_q,
        j_q,
        lambda_q: None,
        nu_q: None,
        nu_prime_q: None,
        note: None,
    };
    match regular_coefficients(&report) {
        Ok(c) => {
            report.lambda_q = Some(c.lambda_q);
            report.nu_q = Some(c.nu_q);
            report.nu_prime_q = Some(c.nu_prime_q);
        }
        Err(Error::SingularHessian { condition }) => {
            report.note = Some(format!(
                "J is singular at theta0 (condition number {condition:.3e}); the model is not regular and the regular-case coefficients are undefined"
            ));
        }
        Err(e) => return Err(e),
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegularCoefficients {
    pub lambda_q: f64,
    pub nu_q: f64,
    pub nu_prime_q: f64,
}

/// `λ^Q = ½Tr(J^Q J⁻¹)`, `ν^Q = ½Tr(I^Q J⁻¹)`, `ν'^Q = ½Tr(J^Q J⁻¹ I J⁻¹)`.
pub fn regular_coefficients(report: &FisherReport) -> Result<RegularCoefficients> {
    let j_inv = symmetric_inverse(&report.j)?;
    let half_trace = |m: &RealMatrix| 0.5 * trace(m);
    let jq_jinv = matmul(&report.j_q, &j_inv);
    Ok(RegularCoefficients {
        lambda_q: half_trace(&jq_jinv),
        nu_q: half_trace(&matmul(&report.i_q, &j_inv)),
        nu_prime_q: half_trace(&matmul(&matmul(&jq_jinv, &report.i), &j_inv)),
    })
}

pub(crate) fn matmul(a: &RealMatrix, b: &RealMatrix) -> RealMatrix {
    let n = a.len();
    let m = b[0].len();
    (0..n)
        .map(|i| (0..m).map(|j| (0..b.len()).map(|k| a[i][k] * b[k][j]).sum()).collect())
        .collect()
}

pub(crate) fn trace(a: &RealMatrix) -> f64 {
    (0..a.len()).map(|i| a[i][i]).sum()
}

fn symmetric_eig(a: &RealMatrix) -> crate::linalg::EigDecomposition {
    let n = a.len();
    let m = ComplexMatrix::from_fn(n, |i, j| C64::new(0.5 * (a[i][j] + a[j][i]), 0.0));
    eigh(&HermitianMatrix::new(m).expect("symmetrized"))
}

/// Inverse of a symmetric matrix through its spectrum.
pub(crate) fn symmetric_inverse(a: &RealMatrix) -> Result<RealMatrix> {
    let eig = symmetric_eig(a);
    let largest = eig.eigenvalues.iter().map(|l| l.abs()).fold(0.0, f64::max);
    let smallest = eig.eigenvalues.iter().map(|l| l.abs()).fold(f64::INFINITY, f64::min);
    let condition = if smallest > 0.0 { largest / smallest } else { f64::INFINITY };
    if !(condition < MAX_CONDITION) {
        return Err(Error::SingularHessian { condition });
    }
    let inv = eig.map_spectrum(|l| 1.0 / l);
    let n = a.len();
    Ok((0..n).map(|i| (0..n).map(|j| inv.get(i, j).re).collect()).collect())
}

/// Smallest eigenvalue of a symmetric matrix.
pub(crate) fn min_eigenvalue(a: &RealMatrix) -> f64 {
    symmetric_eig(a).min_eigenvalue()
}

/// A published constant together with where it comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceValue {
    pub value: f64,
    pub source: &'static str,
}

const fn rv(value: f64, source: &'static str) -> Option<ReferenceValue> {
    Some(ReferenceValue { value, source })
}

/// Read-only reference constants for a built-in model.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ReferenceConstants {
    pub model_id: String,
    /// Real log canonical threshold.
    pub lambda: Option<ReferenceValue>,
    /// Singular fluctuation.
    pub nu: Option<ReferenceValue>,
    pub r_cq: Option<ReferenceValue>,
    pub multiplicity: Option<ReferenceValue>,
    pub lambda_q: Option<ReferenceValue>,
    pub nu_q: Option<ReferenceValue>,
    pub nu_prime_q: Option<ReferenceValue>,
    /// `λ^Q + ν'^Q − ν^Q`.
    pub learning_coefficient: Option<ReferenceValue>,
    pub j: Option<ReferenceValue>,
    pub j_q: Option<ReferenceValue>,
    /// `Tr(J^Q J⁻¹)`.
    pub trace_jq_jinv: Option<ReferenceValue>,
}

pub fn reference(model_id: &str) -> Result<ReferenceConstants> {
    let base = ReferenceConstants {
        model_id: model_id.to_string(),
        ..Default::default()
    };
    let analytic = "analytic value for the regular classical example";
    Ok(match model_id {
        "ex41_regular" => ReferenceConstants {
            lambda: rv(0.5, "RLCT of a one-parameter regular model"),
            nu: rv(0.5, "singular fluctuation equals the RLCT in the regular realizable case"),
            lambda_q: rv(3.0, analytic),
            nu_prime_q: rv(3.0, analytic),
            nu_q: rv(4.0, analytic),
            learning_coefficient: rv(2.0, analytic),
            ..base
        },
        "ex42_singular" => ReferenceConstants {
            lambda: rv(0.5, "RLCT from the normal-crossing form x^2 b(x, y)"),
            r_cq: rv(3.0, "K^Q = 3K makes the ratio function constant"),
            ..base
        },
        "sec42_regular" => ReferenceConstants {
            lambda: rv(0.5, "RLCT of a one-parameter regular model"),
            j: rv(1.308, "reported classical Hessian at pi/4"),
            j_q: rv(10.565, "reported quantum Hessian at pi/4"),
            trace_jq_jinv: rv(8.08, "reported ratio of quantum and classical Fisher information"),
            ..base
        },
        "ex43_quadratic" => ReferenceConstants {
            lambda: rv(0.25, "RLCT after blowing up the origin of f = t1^2 + t2^2"),
            ..base
        },
        "ex43_cusp" => ReferenceConstants {
            lambda: rv(5.0 / 48.0, "RLCT from the resolution of the cusp (t1^2 - t2^3)^2"),
            multiplicity: rv(1.0, "multiplicity of the cusp RLCT"),
            ..base
        },
        other => return Err(Error::UnknownModel(other.to_string())),
    })
}

/// A computed value that disagrees with a reported one.
#[derive(Debug, Clone, Serialize)]
pub struct Discrepancy {
    pub quantity: &'static str,
    pub computed: f64,
    pub reported: f64,
    pub relative_gap: f64,
    pub flagged: bool,
}

/// Compares computed Hessian-derived quantities with the reported ones.
/// Gaps above 1% are flagged.
pub fn discrepancies(report: &FisherReport, reference: &ReferenceConstants) -> Vec<Discrepancy> {
    let scalar = |m: &RealMatrix| (m.len() == 1).then(|| m[0][0]);
    let pairs: [(&'static str, Option<f64>, Option<ReferenceValue>); 6] = [
        ("lambda_q", report.lambda_q, reference.lambda_q),
        ("nu_q", report.nu_q, reference.nu_q),
        ("nu_prime_q", report.nu_prime_q, reference.nu_prime_q),
        ("j", scalar(&report.j), reference.j),
        ("j_q", scalar(&report.j_q), reference.j_q),
        ("trace_jq_jinv", report.trace_jq_jinv(), reference.trace_jq_jinv),
    ];
    let mut out: Vec<Discrepancy> = pairs
        .into_iter()
        .filter_map(|(quantity, computed, reported)| {
            let (computed, reported) = (computed?, reported?.value);
            let relative_gap = (computed - reported).abs() / reported.abs().max(1e-300);
            Some(Discrepancy {
                quantity,
                computed,
                reported,
                relative_gap,
                flagged: relative_gap > 1e-2,
            })
        })
        .collect();
    if let (Some(l), Some(np), Some(n), Some(r)) = (
        report.lambda_q,
        report.nu_prime_q,
        report.nu_q,
        reference.learning_coefficient,
    ) {
        let computed = l + np - n;
        let relative_gap = (computed - r.value).abs() / r.value.abs();
        out.push(Discrepancy {
            quantity: "learning_coefficient",
            computed,
            reported: r.value,
            relative_gap,
            flagged: relative_gap > 1e-2,
        });
    }
    out
}
