//! Metropolis-Hastings sampling of the posterior `p(θ|xⁿ)` and posterior
//! functionals of the sampled states.
//!
//! The chain is a Gaussian random walk. During burn-in the step sizes are
//! tuned by a Robbins-Monro update toward a target acceptance rate; they are
//! frozen afterwards so the retained samples come from a fixed kernel.
//! Proposals outside the domain, or at rank-deficient states, are rejected.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigh, log_from_eig, HermitianMatrix, DEFAULT_EIGEN_FLOOR};
use crate::models::{log_probs, ParametricModel};
use crate::quantum::{born_from_hermitian, DensityMatrix, Povm};

/// Random-walk step: one value for every dimension, or one per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepScale {
    Uniform(f64),
    PerDimension(Vec<f64>),
}

impl StepScale {
    pub fn resolve(&self, dim: usize) -> Result<Vec<f64>> {
        let steps = match self {
            StepScale::Uniform(s) => vec![*s; dim],
            StepScale::PerDimension(v) if v.len() == dim => v.clone(),
            StepScale::PerDimension(v) => {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.len(),
                })
            }
        };
        if steps.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Config(format!("step_scale must be positive, got {steps:?}")));
        }
        Ok(steps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MhConfig {
    /// Total chain length, burn-in included.
    pub n_samples: usize,
    pub burn_in: usize,
    pub step_scale: StepScale,
    pub adapt_during_burn_in: bool,
    pub target_acceptance: f64,
    /// Prior draws screened for the starting point (the best one is used).
    pub init_draws: usize,
}

impl Default for MhConfig {
    fn default() -> Self {
        MhConfig {
            n_samples: 5000,
            burn_in: 500,
            step_scale: StepScale::Uniform(0.05),
            adapt_during_burn_in: true,
            target_acceptance: 0.3,
            init_draws: 256,
        }
    }
}

impl MhConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.n_samples {
            return Err(Error::Config(format!(
                "burn_in ({}) must be smaller than n_samples ({})",
                self.burn_in, self.n_samples
            )));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::Config("target_acceptance must lie in (0, 1)".into()));
        }
        if self.init_draws == 0 {
            return Err(Error::Config("init_draws must be positive".into()));
        }
        if let StepScale::Uniform(s) = self.step_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config("step_scale must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Retained chain with cached per-sample quantities.
#[derive(Debug, Clone)]
pub struct PosteriorSamples {
    thetas: Vec<Vec<f64>>,
    acceptance_rate: f64,
    burn_in_acceptance: f64,
    step_scale: Vec<f64>,
    log_sigma_cache: Vec<HermitianMatrix>,
    /// `[outcome][sample]` table of `log p(x|θ_s)`.
    log_lik_cache: Vec<Vec<f64>>,
}

impl PosteriorSamples {
    /// Builds caches for an explicit list of parameters. Acceptance
    /// diagnostics are NaN since no chain was run.
    pub fn from_thetas(model: &ParametricModel, thetas: Vec<Vec<f64>>, povm: &Povm) -> Result<Self> {
        if thetas.is_empty() {
            return Err(Error::EmptyInput("posterior with no samples"));
        }
        let mut log_sigma_cache = Vec::with_capacity(thetas.len());
        let mut per_sample = Vec::with_capacity(thetas.len());
        for t in &thetas {
            let sigma = model.sigma(t)?;
            let eig = eigh(sigma.as_hermitian());
            log_sigma_cache.push(log_from_eig(&eig, DEFAULT_EIGEN_FLOOR)?);
            per_sample.push(log_probs(&born_from_hermitian(sigma.as_hermitian(), povm)?));
        }
        Ok(PosteriorSamples {
            log_lik_cache: transpose(&per_sample, povm.len()),
            thetas,
            acceptance_rate: f64::NAN,
            burn_in_acceptance: f64::NAN,
            step_scale: Vec::new(),
            log_sigma_cache,
        })
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn thetas(&self) -> &[Vec<f64>] {
        &self.thetas
    }

    /// Post-burn-in acceptance rate.
    pub fn acceptance_rate(&self) -> f64 {
        self.acceptance_rate
    }

    pub fn burn_in_acceptance(&self) -> f64 {
        self.burn_in_acceptance
    }

    /// Step sizes used for the retained samples.
    pub fn step_scale(&self) -> &[f64] {
        &self.step_scale
    }

    pub fn log_sigma(&self) -> &[HermitianMatrix] {
        &self.log_sigma_cache
    }

    /// `log p(x|θ_s)` for every retained sample.
    pub fn log_lik(&self, outcome: usize) -> &[f64] {
        &self.log_lik_cache[outcome]
    }

    pub fn alphabet_size(&self) -> usize {
        self.log_lik_cache.len()
    }

    /// Posterior mean of each parameter coordinate.
    pub fn mean_theta(&self) -> Vec<f64> {
        let d = self.thetas[0].len();
        let s = self.thetas.len() as f64;
        (0..d)
            .map(|k| self.thetas.iter().map(|t| t[k]).sum::<f64>() / s)
            .collect()
    }

    /// Every `step`-th sample, caches included.
    pub fn thinned(&self, step: usize) -> Self {
        let step = step.max(1);
        let pick = |len: usize| (0..len).step_by(step);
        PosteriorSamples {
            thetas: pick(self.len()).map(|i| self.thetas[i].clone()).collect(),
            acceptance_rate: self.acceptance_rate,
            burn_in_acceptance: self.burn_in_acceptance,
            step_scale: self.step_scale.clone(),
            log_sigma_cache: pick(self.len())
                .map(|i| self.log_sigma_cache[i].clone())
                .collect(),
            log_lik_cache: self
                .log_lik_cache
                .iter()
                .map(|row| pick(row.len()).map(|i| row[i]).collect())
                .collect(),
        }
    }
}

fn transpose(per_sample: &[Vec<f64>], alphabet: usize) -> Vec<Vec<f64>> {
    (0..alphabet)
        .map(|x| per_sample.iter().map(|row| row[x]).collect())
        .collect()
}

/// Unnormalized log posterior; `−∞` off the domain or at rank-deficient states.
struct Target<'a> {
    model: &'a ParametricModel,
    povm: &'a Povm,
    counts: Vec<usize>,
}

impl Target<'_> {
    fn log_density(&self, theta: &[f64]) -> f64 {
        if !matches!(self.model.domain_contains(theta), Ok(true)) {
            return f64::NEG_INFINITY;
        }
        let sigma = self.model.state_unchecked(theta);
        if !(eigh(&sigma).min_eigenvalue() > DEFAULT_EIGEN_FLOOR) {
            return f64::NEG_INFINITY;
        }
        let probs = match born_from_hermitian(&sigma, self.povm) {
            Ok(p) => p,
            Err(_) => return f64::NEG_INFINITY,
        };
        let mut ll = self.model.log_prior(theta);
        for (&c, lp) in self.counts.iter().zip(log_probs(&probs)) {
            if c > 0 {
                ll += c as f64 * lp;
            }
        }
        if ll.is_nan() {
            f64::NEG_INFINITY
        } else {
            ll
        }
    }
}

fn draw_from_box<R: Rng + ?Sized>(model: &ParametricModel, rng: &mut R) -> Vec<f64> {
    model
        .domain()
        .bounds()
        .iter()
        .map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
        .collect()
}

/// Runs a random-walk Metropolis-Hastings chain on `π(θ)·Πᵢ p(xᵢ|θ)`.
pub fn run_mh<R: Rng + ?Sized>(
    model: &ParametricModel,
    outcomes: &[usize],
    povm: &Povm,
    config: &MhConfig,
    rng: &mut R,
) -> Result<PosteriorSamples> {
    config.validate()?;
    if outcomes.is_empty() {
        return Err(Error::EmptyInput("posterior sampling needs at least one outcome"));
    }
    if model.hilbert_dim() != povm.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.hilbert_dim(),
            found: povm.dim(),
        });
    }
    let mut counts = vec![0usize; povm.len()];
    for &x in outcomes {
        *counts
            .get_mut(x)
            .ok_or_else(|| Error::UnknownOutcome(x.to_string()))? += 1;
    }
    let target = Target {
        model,
        povm,
        counts,
    };
    let dim = model.param_dim();
    let base_steps = config.step_scale.resolve(dim)?;

    // starting point: best of a batch of uniform draws inside the domain
    let mut current = Vec::new();
    let mut current_lp = f64::NEG_INFINITY;
    for _ in 0..config.init_draws {
        let cand = draw_from_box(model, rng);
        let lp = target.log_density(&cand);
        if lp > current_lp {
            current_lp = lp;
            current = cand;
        }
    }
    if !current_lp.is_finite() {
        return Err(Error::InitializationFailed {
            tried: config.init_draws,
        });
    }

    let mut log_factor = 0.0f64;
    let mut burn_accepts = 0usize;
    let mut kept_accepts = 0usize;
    let kept = config.n_samples - config.burn_in;
    let mut thetas = Vec::with_capacity(kept);
    let mut proposal = vec![0.0; dim];

    for t in 0..config.n_samples {
        let factor = log_factor.exp();
        for k in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            proposal[k] = current[k] + base_steps[k] * factor * z;
        }
        let lp = target.log_density(&proposal);
        let log_ratio = lp - current_lp;
        let u: f64 = rng.random::<f64>();
        let accepted = lp.is_finite() && u.ln() < log_ratio;
        if accepted {
            current.copy_from_slice(&proposal);
            current_lp = lp;
        }

        if t < config.burn_in {
            burn_accepts += accepted as usize;
            if config.adapt_during_burn_in {
                let alpha = if lp.is_finite() { log_ratio.min(0.0).exp() } else { 0.0 };
                let gain = ((t + 1) as f64).powf(-0.6);
                log_factor += gain * (alpha - config.target_acceptance);
            }
            if t + 1 == config.burn_in {
                let rate = burn_accepts as f64 / config.burn_in as f64;
                if rate < 1e-3 {
                    return Err(Error::AllProposalsRejected { acceptance: rate });
                }
            }
        } else {
            kept_accepts += accepted as usize;
            thetas.push(current.clone());
        }
    }

    // caches; consecutive repeats share one evaluation
    let mut log_sigma_cache: Vec<HermitianMatrix> = Vec::with_capacity(kept);
    let mut per_sample: Vec<Vec<f64>> = Vec::with_capacity(kept);
    for (i, theta) in thetas.iter().enumerate() {
        if i > 0 && thetas[i - 1] == *theta {
            log_sigma_cache.push(log_sigma_cache[i - 1].clone());
            per_sample.push(per_sample[i - 1].clone());
            continue;
        }
        let sigma = model.state_unchecked(theta);
        log_sigma_cache.push(log_from_eig(&eigh(&sigma), DEFAULT_EIGEN_FLOOR)?);
        per_sample.push(log_probs(&born_from_hermitian(&sigma, povm)?));
    }

    let factor = log_factor.exp();
    Ok(PosteriorSamples {
        log_lik_cache: transpose(&per_sample, povm.len()),
        thetas,
        acceptance_rate: kept_accepts as f64 / kept as f64,
        burn_in_acceptance: if config.burn_in > 0 {
            burn_accepts as f64 / config.burn_in as f64
        } else {
            f64::NAN
        },
        step_scale: base_steps.iter().map(|s| s * factor).collect(),
        log_sigma_cache,
    })
}

/// Posterior predictive state `σ_B = (1/S) Σ_s σ(θ_s)`.
pub fn bayes_mean_state(model: &ParametricModel, samples: &PosteriorSamples) -> Result<DensityMatrix> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("posterior with no samples"));
    }
    let mut acc = HermitianMatrix::zeros(model.hilbert_dim());
    for theta in &samples.thetas {
        acc = acc.add(&model.state_unchecked(theta));
    }
    DensityMatrix::new(acc.scale(1.0 / samples.len() as f64))
}

/// `E_θ[log σ(θ)]` over the retained samples.
pub fn posterior_matrix_mean_log(samples: &PosteriorSamples) -> HermitianMatrix {
    let dim = samples.log_sigma_cache[0].dim();
    let sum = samples
        .log_sigma_cache
        .iter()
        .fold(HermitianMatrix::zeros(dim), |acc, l| acc.add(l));
    sum.scale(1.0 / samples.len() as f64)
}

/// `V_θ[log σ(θ)] = E_θ[(log σ)²] − E_θ[log σ]²`.
pub fn posterior_matrix_var_log(samples: &PosteriorSamples) -> HermitianMatrix {
    let dim = samples.log_sigma_cache[0].dim();
    let s = samples.len() as f64;
    let mean = posterior_matrix_mean_log(samples);
    let second = samples
        .log_sigma_cache
        .iter()
        .fold(HermitianMatrix::zeros(dim), |acc, l| acc.add(&l.square()))
        .scale(1.0 / s);
    second.sub(&mean.square())
}

/// Posterior covariance `E[fg] − E[f]E[g]` over samples, computed centered.
pub fn posterior_cov(f_values: &[f64], g_values: &[f64]) -> Result<f64> {
    if f_values.len() != g_values.len() {
        return Err(Error::DimensionMismatch {
            expected: f_values.len(),
            found: g_values.len(),
        });
    }
    if f_values.is_empty() {
        return Err(Error::EmptyInput("covariance of no samples"));
    }
    // shifting by the first sample keeps a constant chain at exactly zero
    let (f0, g0) = (f_values[0], g_values[0]);
    let s = f_values.len() as f64;
    let mf = f_values.iter().map(|f| f - f0).sum::<f64>() / s;
    let mg = g_values.iter().map(|g| g - g0).sum::<f64>() / s;
    Ok(f_values
        .iter()
        .zip(g_values)
        .map(|(f, g)| ((f - f0) - mf) * ((g - g0) - mg))
        .sum::<f64>()
        / s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{matrix_log, trace_product};
    use crate::models::{ex41_regular, ex42_singular};
    use crate::shadows::{sample_outcomes, PauliShadowScheme};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_4;

    fn ex41_chain(n: usize, seed: u64) -> (ParametricModel, Povm, PosteriorSamples) {
        let model = ex41_regular();
        let scheme = PauliShadowScheme::new(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let outcomes =
            sample_outcomes(&model.true_state().unwrap(), &scheme, n, &mut rng).unwrap();
        let samples =
            run_mh(&model, &outcomes, scheme.povm(), &MhConfig::default(), &mut rng).unwrap();
        (model, scheme.povm().clone(), samples)
    }

    #[test]
    fn config_validation() {
        let mut c = MhConfig::default();
        assert!(c.validate().is_ok());
        c.burn_in = c.n_samples;
        assert!(c.validate().is_err());
        let c = MhConfig {
            step_scale: StepScale::Uniform(0.0),
            ..MhConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(StepScale::PerDimension(vec![0.1]).resolve(2).is_err());
    }

    #[test]
    fn ex41_posterior_concentrates() {
        let (model, povm, samples) = ex41_chain(4000, 1);
        assert_eq!(samples.len(), 4500);
        let m = samples.mean_theta()[0];
        assert!((m - FRAC_PI_4).abs() < 0.05, "posterior mean {m}");
        let rate = samples.acceptance_rate();
        assert!(rate > 0.1 && rate < 0.6, "acceptance {rate}");
        for t in samples.thetas() {
            assert!(model.domain_contains(t).unwrap());
        }
        // cache spot checks
        for i in [0, 1000, 4499] {
            let direct =
                matrix_log(model.sigma(&samples.thetas()[i]).unwrap().as_hermitian(), 1e-12).unwrap();
            assert!(direct.max_abs_diff(&samples.log_sigma()[i]) < 1e-10);
            let lp = model.outcome_log_probs(&samples.thetas()[i], &povm).unwrap();
            assert_eq!(samples.log_lik(2)[i], lp[2]);
        }
    }

    #[test]
    fn chain_is_deterministic() {
        let (_, _, a) = ex41_chain(500, 42);
        let (_, _, b) = ex41_chain(500, 42);
        assert_eq!(a.thetas(), b.thetas());
    }

    #[test]
    fn empty_outcomes_rejected() {
        let model = ex41_regular();
        let scheme = PauliShadowScheme::new(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            run_mh(&model, &[], scheme.povm(), &MhConfig::default(), &mut rng),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn hopeless_step_scale_is_reported() {
        let model = ex41_regular();
        let scheme = PauliShadowScheme::new(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let outcomes =
            sample_outcomes(&model.true_state().unwrap(), &scheme, 8000, &mut rng).unwrap();
        let config = MhConfig {
            step_scale: StepScale::Uniform(1e3),
            adapt_during_burn_in: false,
            ..MhConfig::default()
        };
        assert!(matches!(
            run_mh(&model, &outcomes, scheme.povm(), &config, &mut rng),
            Err(Error::AllProposalsRejected { .. })
        ));
    }

    #[test]
    fn bayes_mean_state_properties() {
        let model = ex41_regular();
        let povm = PauliShadowScheme::new(1).unwrap().povm().clone();
        let single = PosteriorSamples::from_thetas(&model, vec![vec![0.3]; 5], &povm).unwrap();
        let sb = bayes_mean_state(&model, &single).unwrap();
        assert!(sb.as_hermitian().max_abs_diff(model.sigma(&[0.3]).unwrap().as_hermitian()) < 1e-15);

        let (model, _, samples) = ex41_chain(8000, 5);
        let sb = bayes_mean_state(&model, &samples).unwrap();
        assert!(eigh(sb.as_hermitian()).min_eigenvalue() >= -1e-10);
        let err = sb
            .as_hermitian()
            .sub(DensityMatrix::maximally_mixed(2).as_hermitian())
            .frobenius_norm();
        assert!(err <= 0.03, "‖σ_B − I/2‖ = {err}");
    }

    #[test]
    fn degenerate_chain_has_zero_log_variance() {
        let model = ex42_singular();
        let povm = PauliShadowScheme::new(1).unwrap().povm().clone();
        let samples =
            PosteriorSamples::from_thetas(&model, vec![vec![0.1, 0.2]; 7], &povm).unwrap();
        assert!(posterior_matrix_var_log(&samples).frobenius_norm() < 1e-14);
        let direct = matrix_log(model.sigma(&[0.1, 0.2]).unwrap().as_hermitian(), 1e-12).unwrap();
        assert!(posterior_matrix_mean_log(&samples).max_abs_diff(&direct) < 1e-14);
    }

    #[test]
    fn covariance_properties() {
        assert_eq!(posterior_cov(&[2.0; 4], &[1.0, 5.0, -3.0, 0.5]).unwrap(), 0.0);
        let f = [0.3, -1.2, 4.0, 2.2, 0.0];
        let g = [1.0, 0.5, -0.7, 3.3, 2.0];
        assert!(posterior_cov(&f, &f).unwrap() >= 0.0);
        assert_eq!(posterior_cov(&f, &g).unwrap(), posterior_cov(&g, &f).unwrap());
        let raw = f.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() / 5.0
            - (f.iter().sum::<f64>() / 5.0) * (g.iter().sum::<f64>() / 5.0);
        assert!((posterior_cov(&f, &g).unwrap() - raw).abs() < 1e-12);
        assert!(posterior_cov(&f, &g[..3]).is_err());
    }

    #[test]
    fn thinning_preserves_posterior_mean() {
        let (_, _, samples) = ex41_chain(4000, 8);
        let full = samples.mean_theta()[0];
        let thin = samples.thinned(2).mean_theta()[0];
        // Monte-Carlo standard error with a generous autocorrelation allowance
        let xs: Vec<f64> = samples.thetas().iter().map(|t| t[0]).collect();
        let sd = crate::stats::sample_std(&xs);
        let ess = xs.len() as f64 / 20.0;
        assert!((full - thin).abs() < 2.0 * sd / ess.sqrt());
    }

    #[test]
    fn quantum_posterior_variance_trace_nonnegative() {
        let (model, _, samples) = ex41_chain(2000, 9);
        let v = posterior_matrix_var_log(&samples);
        let rho = model.true_state().unwrap();
        assert!(trace_product(rho.as_hermitian(), &v).unwrap() >= -1e-8);
    }
}
