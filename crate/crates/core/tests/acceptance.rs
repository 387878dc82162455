//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Tolerances are pinned below.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use qsing::experiment::{run_experiment, write_outputs, AggregateRow, ExperimentConfig, RunRecord};
use qsing::linalg::{eigh, matrix_exp, matrix_log, ComplexMatrix, HermitianMatrix, C64, DEFAULT_EIGEN_FLOOR};
use qsing::models::{ex41_regular, ex42_singular, sec42_regular, ParametricModel};
use qsing::quantum::{born_probabilities, kl_divergence, quantum_relative_entropy, random_density_matrix};
use qsing::shadows::PauliShadowScheme;
use qsing::stats::ols_slope;
use qsing::theory::{eval_k, eval_kq, numerical_hessians};
use qsing::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const SHADOW_TOL: f64 = 1e-12;
const LINALG_TOL: f64 = 1e-10;
const LOSS_RELATION_TOL: f64 = 1e-10;
const SEC42_J: (f64, f64) = (1.308, 0.01);
const SEC42_JQ: (f64, f64) = (10.565, 0.01);
const SEC42_RATIO: (f64, f64) = (8.08, 0.05);
const EX41_J: (f64, f64) = (4.0 / 3.0, 1e-4);
const EX41_JQ: (f64, f64) = (4.0, 1e-4);
const GAP_SE_MULTIPLE: f64 = 2.0;
const SEC42_NC_BAND: (f64, f64) = (0.5 * 8.08, 1.5 * 8.08);
const EX42_NC_BAND: (f64, f64) = (2.0, 4.0);
const SLOPE: (f64, f64) = (-1.0, 0.25);
const DETERMINISM_THREADS: [usize; 3] = [1, 4, 8];

/// Fixed before any experiment was run.
const MASTER_SEED: u64 = 20240601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(x: f64, (center, tol): (f64, f64)) -> bool {
    (x - center).abs() <= tol
}

fn default_config(model_id: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(&format!("model_id = \"{model_id}\"\nmaster_seed = {MASTER_SEED}\n"))
        .expect("default config parses")
}

fn at_n(aggs: &[AggregateRow], n: usize) -> &AggregateRow {
    aggs.iter().find(|a| a.n == n).expect("grid point present")
}

fn random_hermitian(dim: usize, rng: &mut ChaCha8Rng) -> HermitianMatrix {
    let m = ComplexMatrix::from_fn(dim, |_, _| {
        C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    });
    HermitianMatrix::new(m.add(&m.adjoint()).scale(0.5)).expect("symmetrized")
}

fn shadow_unbiasedness() -> Outcome {
    let scheme = PauliShadowScheme::new(1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let rho = random_density_matrix(2, &mut rng);
        worst = worst.max(scheme.unbiasedness_error(&rho).unwrap());
    }
    outcome(worst <= SHADOW_TOL, format!("20 states, max entrywise error {worst:.2e} (tol {SHADOW_TOL:e})"))
}

/// Interior grid where every state is full rank.
fn kl_grid(model: &ParametricModel) -> Vec<Vec<f64>> {
    if model.param_dim() == 1 {
        (1..100).map(|k| vec![FRAC_PI_2 * k as f64 / 100.0]).collect()
    } else {
        let mut pts = Vec::new();
        for a in 0..10 {
            for b in 0..10 {
                let t1 = -1.0 + 0.2 * a as f64;
                pts.push(vec![t1, t1 - (-PI / 3.0 + 0.05 + 0.12 * b as f64)]);
            }
        }
        pts
    }
}

fn linear_algebra_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_recon = 0.0f64;
    let mut worst_unitary = 0.0f64;
    let mut worst_exp_log = 0.0f64;
    let mut worst_inverse = 0.0f64;
    for dim in [2, 4] {
        for _ in 0..25 {
            let a = random_hermitian(dim, &mut rng);
            let eig = eigh(&a);
            let scale = 1.0 + a.frobenius_norm();
            worst_recon = worst_recon.max(eig.reconstruct().sub(&a).frobenius_norm() / scale);
            let v = &eig.eigenvectors;
            let vv = v.adjoint().matmul(v).sub(&ComplexMatrix::identity(dim)).frobenius_norm();
            worst_unitary = worst_unitary.max(vv);
            let prod = matrix_exp(&a)
                .as_matrix()
                .matmul(matrix_exp(&a.scale(-1.0)).as_matrix())
                .sub(&ComplexMatrix::identity(dim))
                .frobenius_norm();
            worst_inverse = worst_inverse.max(prod);

            let rho = random_density_matrix(dim, &mut rng);
            let back = matrix_exp(&matrix_log(rho.as_hermitian(), DEFAULT_EIGEN_FLOOR).unwrap());
            let scale = 1.0 + rho.as_hermitian().frobenius_norm();
            worst_exp_log = worst_exp_log.max(back.sub(rho.as_hermitian()).frobenius_norm() / scale);
        }
    }

    let mut worst_self = 0.0f64;
    let mut min_d = f64::INFINITY;
    for _ in 0..50 {
        let rho = random_density_matrix(2, &mut rng);
        let sigma = random_density_matrix(2, &mut rng);
        worst_self = worst_self.max(quantum_relative_entropy(&rho, &rho, DEFAULT_EIGEN_FLOOR).unwrap().abs());
        min_d = min_d.min(quantum_relative_entropy(&rho, &sigma, DEFAULT_EIGEN_FLOOR).unwrap());
    }

    let povm = PauliShadowScheme::new(1).unwrap().povm().clone();
    let mut worst_dpi = f64::NEG_INFINITY;
    let mut grid_points = 0;
    for model in [ex41_regular(), ex42_singular()] {
        let rho = model.true_state().unwrap();
        let q = born_probabilities(&rho, &povm).unwrap();
        for theta in kl_grid(&model) {
            if !model.domain_contains(&theta).unwrap() {
                continue;
            }
            let sigma = model.sigma(&theta).unwrap();
            let p = born_probabilities(&sigma, &povm).unwrap();
            let d = match quantum_relative_entropy(&rho, &sigma, DEFAULT_EIGEN_FLOOR) {
                Ok(d) => d,
                Err(Error::RankDeficientState { .. }) => continue,
                Err(e) => panic!("{e}"),
            };
            worst_dpi = worst_dpi.max(kl_divergence(&q, &p).unwrap() - d);
            grid_points += 1;
        }
    }

    let pass = worst_recon <= LINALG_TOL
        && worst_unitary <= LINALG_TOL
        && worst_exp_log <= LINALG_TOL
        && worst_inverse <= LINALG_TOL
        && worst_self <= LINALG_TOL
        && min_d >= -LINALG_TOL
        && worst_dpi <= LINALG_TOL;
    outcome(
        pass,
        format!(
            "recon {worst_recon:.1e}, V'V-I {worst_unitary:.1e}, exp(log) {worst_exp_log:.1e}, \
             exp(A)exp(-A)-I {worst_inverse:.1e}, |D(r||r)| {worst_self:.1e}, min D {min_d:.3e}, \
             max KL-D {worst_dpi:.2e} over {grid_points} grid points (tol {LINALG_TOL:e})"
        ),
    )
}

fn loss_relations() -> Outcome {
    let povm = PauliShadowScheme::new(1).unwrap().povm().clone();
    let ex41 = ex41_regular();
    let rho41 = ex41.true_state().unwrap();
    let mut worst41 = 0.0f64;
    for k in 1..=100 {
        let theta = [FRAC_PI_2 * k as f64 / 101.0];
        let kk = eval_k(&ex41, &rho41, &povm, &theta).unwrap();
        let kq = eval_kq(&ex41, &rho41, &theta).unwrap();
        worst41 = worst41.max((kq - 3.0 * kk).abs());
    }
    let ex42 = ex42_singular();
    let rho42 = ex42.true_state().unwrap();
    let mut worst42 = 0.0f64;
    let mut count = 0;
    for theta in kl_grid(&ex42) {
        if !ex42.domain_contains(&theta).unwrap() {
            continue;
        }
        let kk = eval_k(&ex42, &rho42, &povm, &theta).unwrap();
        let kq = eval_kq(&ex42, &rho42, &theta).unwrap();
        worst42 = worst42.max((kk - kq / 3.0).abs());
        count += 1;
    }
    outcome(
        worst41 <= LOSS_RELATION_TOL && worst42 <= LOSS_RELATION_TOL && count == 100,
        format!(
            "ex41 max|K^Q-3K| {worst41:.1e} (100 pts), ex42 max|K-K^Q/3| {worst42:.1e} ({count} pts), tol {LOSS_RELATION_TOL:e}"
        ),
    )
}

fn fisher_numerics() -> Outcome {
    let povm = PauliShadowScheme::new(1).unwrap().povm().clone();
    let sec = sec42_regular();
    let r = numerical_hessians(&sec, &sec.true_state().unwrap(), &povm, &[FRAC_PI_4], None).unwrap();
    let (j, jq) = (r.j[0][0], r.j_q[0][0]);
    let ratio = jq / j;
    let ex = ex41_regular();
    let r41 = numerical_hessians(&ex, &ex.true_state().unwrap(), &povm, &[FRAC_PI_4], None).unwrap();
    let (j41, jq41) = (r41.j[0][0], r41.j_q[0][0]);
    outcome(
        within(j, SEC42_J)
            && within(jq, SEC42_JQ)
            && within(ratio, SEC42_RATIO)
            && within(j41, EX41_J)
            && within(jq41, EX41_JQ),
        format!(
            "sec42 J {j:.5} (1.308±0.01), J^Q {jq:.5} (10.565±0.01), Tr(J^Q J^-1) {ratio:.4} (8.08±0.05); \
             ex41 J {j41:.7} (4/3±1e-4), J^Q {jq41:.7} (4±1e-4)"
        ),
    )
}

fn c_slope(aggs: &[AggregateRow]) -> f64 {
    let xs: Vec<f64> = aggs.iter().map(|a| (a.n as f64).ln()).collect();
    let ys: Vec<f64> = aggs.iter().map(|a| a.get("c_n_q").unwrap().mean.ln()).collect();
    ols_slope(&xs, &ys)
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, &str, Outcome, f64)> = Vec::new();
    let mut timed = |id: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        results.push((id, name, o, start.elapsed().as_secs_f64()));
    };

    timed(1, "shadow unbiasedness", &mut shadow_unbiasedness);
    timed(2, "linear-algebra oracle suite", &mut linear_algebra_suite);
    timed(3, "closed-form loss relations", &mut loss_relations);
    timed(4, "Fisher numerics", &mut fisher_numerics);

    let scratch = tempfile::tempdir().expect("temp dir");
    let sec_config = default_config("sec42_regular");
    let start = Instant::now();
    let (sec_records, sec_aggs) = run_experiment(&sec_config, Some(DETERMINISM_THREADS[0])).expect("sec42 experiment");
    let sec_secs = start.elapsed().as_secs_f64();

    timed(5, "QWAIC unbiasedness, regular model", &mut || {
        let g8 = at_n(&sec_aggs, 8000).get("qwaic_gap").unwrap();
        let g2 = at_n(&sec_aggs, 2000).get("qwaic_gap").unwrap();
        let pass = g8.mean.abs() <= GAP_SE_MULTIPLE * g8.stderr && g8.mean.abs() < g2.mean.abs();
        outcome(
            pass,
            format!(
                "n=8000 gap {:.3e} ± {:.3e} (|gap| <= 2 SE), n=2000 gap {:.3e}; experiment {sec_secs:.1}s",
                g8.mean, g8.stderr, g2.mean
            ),
        )
    });
    timed(6, "C_n^Q magnitude, regular model", &mut || {
        let nc = at_n(&sec_aggs, 8000).get("n_c_n_q").unwrap().mean;
        outcome(
            nc >= SEC42_NC_BAND.0 && nc <= SEC42_NC_BAND.1,
            format!("sec42 mean n*C_n^Q at 8000 = {nc:.4} (band [{:.2}, {:.2}])", SEC42_NC_BAND.0, SEC42_NC_BAND.1),
        )
    });

    let (_, ex42_aggs) = run_experiment(&default_config("ex42_singular"), None).expect("ex42 experiment");
    timed(7, "C_n^Q magnitude, singular model", &mut || {
        let nc = at_n(&ex42_aggs, 8000).get("n_c_n_q").unwrap().mean;
        outcome(
            nc >= EX42_NC_BAND.0 && nc <= EX42_NC_BAND.1,
            format!("ex42 mean n*C_n^Q at 8000 = {nc:.4} (band [2, 4])"),
        )
    });
    timed(8, "1/n scaling of C_n^Q", &mut || {
        let (s1, s2) = (c_slope(&sec_aggs), c_slope(&ex42_aggs));
        outcome(
            within(s1, SLOPE) && within(s2, SLOPE),
            format!("log-log slope sec42 {s1:.3}, ex42 {s2:.3} (-1 ± 0.25)"),
        )
    });

    let (_, ex41_aggs) = run_experiment(&default_config("ex41_regular"), None).expect("ex41 experiment");
    timed(9, "classical WAIC sanity", &mut || {
        let g = at_n(&ex41_aggs, 8000).get("waic_gap").unwrap();
        outcome(
            g.mean.abs() <= GAP_SE_MULTIPLE * g.stderr,
            format!("ex41 n=8000 G_n - WAIC {:.3e} ± {:.3e} (|gap| <= 2 SE)", g.mean, g.stderr),
        )
    });

    timed(10, "determinism across thread counts", &mut || {
        let write = |records: &[RunRecord], aggs: &[AggregateRow], dir: &Path| {
            write_outputs(&sec_config, records, aggs, dir).expect("write outputs");
            fs::read(dir.join("runs.csv")).expect("runs.csv")
        };
        let reference = write(&sec_records, &sec_aggs, &scratch.path().join("t1"));
        let mut identical = true;
        for &t in &DETERMINISM_THREADS[1..] {
            let (r, a) = run_experiment(&sec_config, Some(t)).expect("rerun");
            identical &= write(&r, &a, &scratch.path().join(format!("t{t}"))) == reference;
        }
        outcome(
            identical,
            format!("sec42 default runs.csv ({} bytes) identical for threads {DETERMINISM_THREADS:?}", reference.len()),
        )
    });

    let mut failed = 0;
    for (id, name, o, secs) in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} [{id:>2}] {name}: {} [{secs:.2}s]", o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
