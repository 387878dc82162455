//! Parametric state models `θ ↦ σ(θ)` on compact domains, and the registry of
//! built-in one-qubit models.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, PI};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{HermitianMatrix, C64};
use crate::quantum::{born_from_hermitian, DensityMatrix, Povm};

/// Outcome probabilities at or below this give a log-likelihood of `−∞`.
pub const MIN_PROBABILITY: f64 = 1e-300;

pub type StateFn = Arc<dyn Fn(&[f64]) -> HermitianMatrix + Send + Sync>;
pub type LogPriorFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// `lower ≤ Σ coefficients·θ ≤ upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub coefficients: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
}

impl LinearConstraint {
    fn holds(&self, theta: &[f64]) -> bool {
        let v: f64 = self.coefficients.iter().zip(theta).map(|(c, t)| c * t).sum();
        v >= self.lower && v <= self.upper
    }
}

/// Closed box, optionally cut by linear inequalities.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterDomain {
    bounds: Vec<(f64, f64)>,
    constraints: Vec<LinearConstraint>,
    volume: f64,
}

impl ParameterDomain {
    pub fn new_box(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::Validation("domain needs at least one dimension".into()));
        }
        for &(lo, hi) in &bounds {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Validation(format!("invalid interval [{lo}, {hi}]")));
            }
        }
        let volume = bounds.iter().map(|(lo, hi)| hi - lo).product();
        Ok(ParameterDomain {
            bounds,
            constraints: Vec::new(),
            volume,
        })
    }

    /// Adds linear cuts; `volume` is the Lebesgue measure of the cut domain.
    pub fn with_constraints(mut self, constraints: Vec<LinearConstraint>, volume: f64) -> Result<Self> {
        for c in &constraints {
            if c.coefficients.len() != self.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.dim(),
                    found: c.coefficients.len(),
                });
            }
        }
        self.constraints = constraints;
        self.volume = volume;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn constraints(&self) -> &[LinearConstraint] {
        &self.constraints
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn widths(&self) -> Vec<f64> {
        self.bounds.iter().map(|(lo, hi)| hi - lo).collect()
    }

    pub fn contains(&self, theta: &[f64]) -> Result<bool> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: theta.len(),
            });
        }
        let in_box = theta
            .iter()
            .zip(&self.bounds)
            .all(|(t, (lo, hi))| *t >= *lo && *t <= *hi);
        Ok(in_box && self.constraints.iter().all(|c| c.holds(theta)))
    }
}

#[derive(Clone)]
pub struct ParametricModel {
    id: String,
    description: String,
    hilbert_dim: usize,
    domain: ParameterDomain,
    state_fn: StateFn,
    log_prior_fn: Option<LogPriorFn>,
    optimal_theta: Option<Vec<f64>>,
    true_theta: Option<Vec<f64>>,
}

impl fmt::Debug for ParametricModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParametricModel")
            .field("id", &self.id)
            .field("param_dim", &self.param_dim())
            .field("hilbert_dim", &self.hilbert_dim)
            .field("domain", &self.domain)
            .finish_non_exhaustive()
    }
}

impl ParametricModel {
    /// A user model with a uniform prior. `state_fn` must return a valid
    /// density matrix everywhere on `domain`.
    pub fn new(
        id: impl Into<String>,
        hilbert_dim: usize,
        domain: ParameterDomain,
        state_fn: impl Fn(&[f64]) -> HermitianMatrix + Send + Sync + 'static,
    ) -> Self {
        ParametricModel {
            id: id.into(),
            description: String::new(),
            hilbert_dim,
            domain,
            state_fn: Arc::new(state_fn),
            log_prior_fn: None,
            optimal_theta: None,
            true_theta: None,
        }
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }

    pub fn with_log_prior(mut self, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.log_prior_fn = Some(Arc::new(f));
        self
    }

    /// Registers the optimal parameter `θ₀` and the parameter of the true state.
    pub fn with_reference_points(mut self, optimal: Vec<f64>, truth: Vec<f64>) -> Self {
        self.optimal_theta = Some(optimal);
        self.true_theta = Some(truth);
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn param_dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn hilbert_dim(&self) -> usize {
        self.hilbert_dim
    }

    pub fn domain(&self) -> &ParameterDomain {
        &self.domain
    }

    pub fn optimal_theta(&self) -> Option<&[f64]> {
        self.optimal_theta.as_deref()
    }

    pub fn true_theta(&self) -> Option<&[f64]> {
        self.true_theta.as_deref()
    }

    pub fn domain_contains(&self, theta: &[f64]) -> Result<bool> {
        self.domain.contains(theta)
    }

    fn check_domain(&self, theta: &[f64]) -> Result<()> {
        if self.domain.contains(theta)? {
            Ok(())
        } else {
            Err(Error::OutOfDomain {
                theta: theta.to_vec(),
            })
        }
    }

    /// Model state without domain or validity checks.
    pub fn state_unchecked(&self, theta: &[f64]) -> HermitianMatrix {
        (self.state_fn)(theta)
    }

    pub fn sigma(&self, theta: &[f64]) -> Result<DensityMatrix> {
        self.check_domain(theta)?;
        DensityMatrix::new(self.state_unchecked(theta))
    }

    /// Uniform over the domain unless a custom prior was supplied.
    pub fn log_prior(&self, theta: &[f64]) -> f64 {
        match &self.log_prior_fn {
            Some(f) => f(theta),
            None => -self.domain.volume().ln(),
        }
    }

    /// `log Tr(Π_x σ(θ))` for every outcome of the POVM.
    pub fn outcome_log_probs(&self, theta: &[f64], povm: &Povm) -> Result<Vec<f64>> {
        self.check_domain(theta)?;
        Ok(log_probs(&born_from_hermitian(&self.state_unchecked(theta), povm)?))
    }

    /// `Σ_i log Tr(Π_{x_i} σ(θ))`; `−∞` if any observed outcome is impossible.
    pub fn log_likelihood(&self, theta: &[f64], outcomes: &[usize], povm: &Povm) -> Result<f64> {
        let table = self.outcome_log_probs(theta, povm)?;
        outcomes.iter().try_fold(0.0, |acc, &x| {
            table
                .get(x)
                .map(|lp| acc + lp)
                .ok_or_else(|| Error::UnknownOutcome(x.to_string()))
        })
    }

    /// The registered true state, `σ(θ_true)`.
    pub fn true_state(&self) -> Result<DensityMatrix> {
        let theta = self
            .true_theta
            .as_deref()
            .ok_or_else(|| Error::Config(format!("model `{}` has no registered true state", self.id)))?;
        self.sigma(theta)
    }
}

pub(crate) fn log_probs(probs: &[f64]) -> Vec<f64> {
    probs
        .iter()
        .map(|&p| if p <= MIN_PROBABILITY { f64::NEG_INFINITY } else { p.ln() })
        .collect()
}

/// `|φ(t)⟩ = (cos t, sin t)ᵀ`.
fn real_qubit_vector(t: f64) -> [C64; 2] {
    [C64::new(t.cos(), 0.0), C64::new(t.sin(), 0.0)]
}

/// `w|φ(t)⟩⟨φ(t)| + (1 − w)·I/2`.
fn depolarized_real_state(t: f64, w: f64) -> HermitianMatrix {
    HermitianMatrix::projector(&real_qubit_vector(t))
        .scale(w)
        .add(&HermitianMatrix::identity(2).scale((1.0 - w) / 2.0))
}

/// Depolarizing-family singular function of the noise parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepolVariant {
    /// `f(θ) = θ₁² + θ₂²`
    Quadratic,
    /// `f(θ) = (θ₁² − θ₂³)²`
    Cusp,
}

impl DepolVariant {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "quadratic" => Ok(DepolVariant::Quadratic),
            "cusp" => Ok(DepolVariant::Cusp),
            other => Err(Error::UnknownModel(format!("ex43_depol variant `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DepolVariant::Quadratic => "quadratic",
            DepolVariant::Cusp => "cusp",
        }
    }

    pub fn eval(self, theta: &[f64]) -> f64 {
        match self {
            DepolVariant::Quadratic => theta.iter().map(|t| t * t).sum(),
            DepolVariant::Cusp => (theta[0].powi(2) - theta[1].powi(3)).powi(2),
        }
    }
}

/// Ids accepted by [`builtin`].
pub const BUILTIN_IDS: [&str; 5] = [
    "ex41_regular",
    "ex42_singular",
    "sec42_regular",
    "ex43_quadratic",
    "ex43_cusp",
];

/// Looks up a built-in model. `ex43_depol` needs a variant (`quadratic` or
/// `cusp`); the other ids take none.
pub fn lookup(id: &str, variant: Option<&str>) -> Result<ParametricModel> {
    match (id, variant) {
        ("ex43_depol", Some(v)) => Ok(ex43_depol(DepolVariant::parse(v)?)),
        ("ex43_depol", None) => Err(Error::UnknownModel(
            "ex43_depol requires a variant (quadratic | cusp)".into(),
        )),
        (_, Some(v)) => Err(Error::UnknownModel(format!("{id} has no variant `{v}`"))),
        (_, None) => builtin(id),
    }
}

pub fn builtin(id: &str) -> Result<ParametricModel> {
    match id {
        "ex41_regular" => Ok(ex41_regular()),
        "ex42_singular" => Ok(ex42_singular()),
        "sec42_regular" => Ok(sec42_regular()),
        "ex43_quadratic" => Ok(ex43_depol(DepolVariant::Quadratic)),
        "ex43_cusp" => Ok(ex43_depol(DepolVariant::Cusp)),
        other => Err(Error::UnknownModel(other.to_string())),
    }
}

/// `σ(θ) = diag(cos²θ, sin²θ)` on `[0, π/2]`; truth `I/2 = σ(π/4)`.
pub fn ex41_regular() -> ParametricModel {
    let domain = ParameterDomain::new_box(vec![(0.0, FRAC_PI_2)]).expect("valid box");
    ParametricModel::new("ex41_regular", 2, domain, |t: &[f64]| {
        HermitianMatrix::from_real_diag(&[t[0].cos().powi(2), t[0].sin().powi(2)])
    })
    .with_description("regular classical model diag(cos^2 t, sin^2 t), truth I/2")
    .with_reference_points(vec![FRAC_PI_4], vec![FRAC_PI_4])
}

/// `σ(θ) = diag(cos²(θ₁−θ₂+π/3), sin²(θ₁−θ₂+π/3))` on
/// `{−π/3 ≤ θ₁−θ₂ ≤ π/2, −π ≤ θ₁ ≤ π}`; truth `σ(0, 0)`.
pub fn ex42_singular() -> ParametricModel {
    let domain = ParameterDomain::new_box(vec![(-PI, PI), (-PI - FRAC_PI_2, PI + FRAC_PI_3)])
        .and_then(|d| {
            // θ₁ spans 2π and θ₁ − θ₂ spans 5π/6
            d.with_constraints(
                vec![LinearConstraint {
                    coefficients: vec![1.0, -1.0],
                    lower: -FRAC_PI_3,
                    upper: FRAC_PI_2,
                }],
                2.0 * PI * (5.0 * PI / 6.0),
            )
        })
        .expect("valid domain");
    ParametricModel::new("ex42_singular", 2, domain, |t: &[f64]| {
        let u = t[0] - t[1] + FRAC_PI_3;
        HermitianMatrix::from_real_diag(&[u.cos().powi(2), u.sin().powi(2)])
    })
    .with_description("singular classical model depending on t1 - t2 only, truth sigma(0, 0)")
    .with_reference_points(vec![0.0, 0.0], vec![0.0, 0.0])
}

/// `σ(θ) = cos²(π/32)|φ(θ)⟩⟨φ(θ)| + sin²(π/32)·I/2` on `[0, π/2]`; truth `σ(π/4)`.
pub fn sec42_regular() -> ParametricModel {
    let weight = (PI / 32.0).cos().powi(2);
    let domain = ParameterDomain::new_box(vec![(0.0, FRAC_PI_2)]).expect("valid box");
    ParametricModel::new("sec42_regular", 2, domain, move |t: &[f64]| {
        depolarized_real_state(t[0], weight)
    })
    .with_description("regular quantum model: slightly depolarized real pure state, truth sigma(pi/4)")
    .with_reference_points(vec![FRAC_PI_4], vec![FRAC_PI_4])
}

/// `σ(θ) = sin²(f(θ))|0⟩⟨0| + cos²(f(θ))·I/2` on `[−1/2, 1/2]²`, with the
/// pure-state direction held fixed; truth `I/2` at `θ = 0`.
pub fn ex43_depol(variant: DepolVariant) -> ParametricModel {
    let domain = ParameterDomain::new_box(vec![(-0.5, 0.5), (-0.5, 0.5)]).expect("valid box");
    ParametricModel::new(
        format!("ex43_{}", variant.name()),
        2,
        domain,
        move |t: &[f64]| depolarized_real_state(0.0, variant.eval(t).sin().powi(2)),
    )
    .with_description(format!(
        "singular depolarizing model with {} noise function, truth I/2",
        variant.name()
    ))
    .with_reference_points(vec![0.0, 0.0], vec![0.0, 0.0])
}
