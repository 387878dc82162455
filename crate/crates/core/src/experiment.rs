//! Reproducible experiment harness: for every `(n, rep)` pair draw fresh
//! shadow data from the true state, sample the posterior, evaluate all
//! criteria, then aggregate per `n` and persist CSV, JSON and plot tables.
//!
//! Each run owns a random stream seeded from `(master_seed, n, rep)`, so the
//! results do not depend on the thread count or the order runs finish in.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{
    c_n_q, classical_losses, qaic_ll_plugin, quantum_generalization_loss, quantum_training_loss,
    qwaic, CriteriaReport,
};
use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, HermitianMatrix, C64};
use crate::models::{lookup, ParametricModel};
use crate::posterior::{bayes_mean_state, run_mh, MhConfig};
use crate::quantum::{born_probabilities, DensityMatrix};
use crate::shadows::{sample_outcomes, snapshots_for, PauliShadowScheme};
use crate::stats::{mean, sample_std};

/// Where the data come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrueState {
    /// `σ(θ)` of the experiment's own model.
    ModelPoint { theta: Vec<f64> },
    /// An explicit density matrix, row-major real and imaginary parts.
    Matrix {
        real: Vec<Vec<f64>>,
        #[serde(default)]
        imag: Option<Vec<Vec<f64>>>,
    },
}

fn default_n_grid() -> Vec<usize> {
    vec![2000, 4000, 6000, 8000]
}

fn default_repetitions() -> usize {
    100
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model_id: String,
    /// Only for `ex43_depol`: `quadratic` or `cusp`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_variant: Option<String>,
    /// Defaults to the model's registered true parameter.
    #[serde(default)]
    pub true_state: Option<TrueState>,
    #[serde(default = "default_n_grid")]
    pub n_grid: Vec<usize>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub mh: MhConfig,
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Adds the maximum-likelihood QAIC_LL column (grid search per run).
    #[serde(default)]
    pub compute_qaic_ll: bool,
    /// Wall time breaks byte-identical output, so it is recorded as 0 unless asked for.
    #[serde(default)]
    pub record_wall_time: bool,
}

impl ExperimentConfig {
    /// Parses TOML, or JSON when the file name ends in `.json`.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn model(&self) -> Result<ParametricModel> {
        lookup(&self.model_id, self.model_variant.as_deref())
    }

    /// Checks invariants and fills in the true state, returning the config
    /// exactly as it will be run.
    pub fn resolved(&self) -> Result<Self> {
        if self.n_grid.is_empty() {
            return Err(Error::Config("n_grid must not be empty".into()));
        }
        if self.n_grid[0] == 0 || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "n_grid must be positive and strictly ascending, got {:?}",
                self.n_grid
            )));
        }
        if self.n_grid.iter().any(|&n| n > u32::MAX as usize) {
            return Err(Error::Config("n_grid entries must fit in 32 bits".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.repetitions > u32::MAX as usize {
            return Err(Error::Config("repetitions must fit in 32 bits".into()));
        }
        self.mh.validate()?;
        let model = self.model()?;
        self.mh.step_scale.resolve(model.param_dim())?;
        let mut out = self.clone();
        if out.true_state.is_none() {
            let theta = model.true_theta().ok_or_else(|| {
                Error::Config(format!("model `{}` has no default true state; set true_state", model.id()))
            })?;
            out.true_state = Some(TrueState::ModelPoint {
                theta: theta.to_vec(),
            });
        }
        out.true_density(&model)?;
        Ok(out)
    }

    fn true_density(&self, model: &ParametricModel) -> Result<DensityMatrix> {
        match &self.true_state {
            None => model.true_state(),
            Some(TrueState::ModelPoint { theta }) => model.sigma(theta),
            Some(TrueState::Matrix { real, imag }) => {
                let dim = real.len();
                if dim != model.hilbert_dim() {
                    return Err(Error::DimensionMismatch {
                        expected: model.hilbert_dim(),
                        found: dim,
                    });
                }
                let zero = vec![vec![0.0; dim]; dim];
                let imag = imag.as_ref().unwrap_or(&zero);
                if imag.len() != dim || real.iter().chain(imag).any(|r| r.len() != dim) {
                    return Err(Error::Config("true_state matrix must be square".into()));
                }
                let m = ComplexMatrix::from_fn(dim, |i, j| C64::new(real[i][j], imag[i][j]));
                DensityMatrix::new(HermitianMatrix::new(m)?)
            }
        }
    }
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for one run. `(n, rep)` is packed into one word (both fit in
/// 32 bits), mixed, combined with the master seed and mixed again.
pub fn derive_child_seed(master_seed: u64, n: usize, rep: usize) -> u64 {
    let packed = ((n as u64) << 32) | (rep as u64 & 0xffff_ffff);
    mix64(master_seed ^ mix64(packed ^ 0x9e37_79b9_7f4a_7c15))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model_id: String,
    pub n: usize,
    pub rep: usize,
    pub seed: u64,
    pub report: CriteriaReport,
    pub acceptance_rate: f64,
    pub wall_time_ms: u64,
}

/// Per-record metrics, raw columns first, then derived ones.
pub const METRICS: [&str; 12] = [
    "g_n_q",
    "t_n_q",
    "c_n_q",
    "qwaic",
    "g_n",
    "t_n",
    "waic",
    "acceptance_rate",
    "qwaic_gap",
    "waic_gap",
    "n_c_n_q",
    "qaic_ll",
];

impl RunRecord {
    /// Value of a column in [`METRICS`]. `qwaic_gap = g_n_q − qwaic`,
    /// `waic_gap = g_n − waic`, `n_c_n_q = n·c_n_q`.
    pub fn metric(&self, name: &str) -> Option<f64> {
        let r = &self.report;
        Some(match name {
            "g_n_q" => r.g_n_q,
            "t_n_q" => r.t_n_q,
            "c_n_q" => r.c_n_q,
            "qwaic" => r.qwaic,
            "g_n" => r.g_n,
            "t_n" => r.t_n,
            "waic" => r.waic,
            "acceptance_rate" => self.acceptance_rate,
            "qwaic_gap" => r.g_n_q - r.qwaic,
            "waic_gap" => r.g_n - r.waic,
            "n_c_n_q" => self.n as f64 * r.c_n_q,
            "qaic_ll" => r.qaic_ll?,
            _ => return None,
        })
    }
}

pub fn is_metric(name: &str) -> bool {
    METRICS.contains(&name)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub stderr: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let std = sample_std(values);
        Summary {
            mean: mean(values),
            std,
            stderr: std / (values.len() as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub n: usize,
    pub repetitions: usize,
    /// In the order of [`METRICS`], skipping metrics absent from the records.
    pub metrics: Vec<(String, Summary)>,
}

impl AggregateRow {
    pub fn get(&self, metric: &str) -> Option<Summary> {
        self.metrics.iter().find(|(m, _)| m == metric).map(|(_, s)| *s)
    }
}

/// Per-`n` summaries of every metric present in all records, in ascending `n`.
pub fn aggregate(records: &[RunRecord]) -> Vec<AggregateRow> {
    let mut ns: Vec<usize> = records.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    ns.into_iter()
        .map(|n| {
            let group: Vec<&RunRecord> = records.iter().filter(|r| r.n == n).collect();
            let metrics = METRICS
                .iter()
                .filter_map(|&m| {
                    let vals: Option<Vec<f64>> = group.iter().map(|r| r.metric(m)).collect();
                    vals.map(|v| (m.to_string(), Summary::of(&v)))
                })
                .collect();
            AggregateRow {
                n,
                repetitions: group.len(),
                metrics,
            }
        })
        .collect()
}

/// One full pipeline for a single `(n, rep)`.
fn run_one(
    config: &ExperimentConfig,
    model: &ParametricModel,
    scheme: &PauliShadowScheme,
    rho_true: &DensityMatrix,
    q_true: &[f64],
    n: usize,
    rep: usize,
) -> Result<RunRecord> {
    let start = Instant::now();
    let seed = derive_child_seed(config.master_seed, n, rep);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let povm = scheme.povm();

    let outcomes = sample_outcomes(rho_true, scheme, n, &mut rng)?;
    let snapshots = snapshots_for(&outcomes, scheme)?;
    let samples = run_mh(model, &outcomes, povm, &config.mh, &mut rng)?;
    let sigma_b = bayes_mean_state(model, &samples)?;

    let g_n_q = quantum_generalization_loss(rho_true, &sigma_b)?;
    let t_n_q = quantum_training_loss(&snapshots, &sigma_b)?;
    let c = c_n_q(&samples, &outcomes, &snapshots)?;
    let classical = classical_losses(&samples, &outcomes, q_true)?;
    let qaic = if config.compute_qaic_ll {
        Some(qaic_ll_plugin(model, &outcomes, povm)?)
    } else {
        None
    };

    let wall_time_ms = if config.record_wall_time {
        start.elapsed().as_millis() as u64
    } else {
        0
    };
    Ok(RunRecord {
        model_id: model.id().to_string(),
        n,
        rep,
        seed,
        report: CriteriaReport {
            n,
            g_n_q,
            t_n_q,
            c_n_q: c,
            qwaic: qwaic(t_n_q, c),
            g_n: classical.g_n,
            t_n: classical.t_n,
            waic: classical.waic,
            qaic_ll: qaic,
        },
        acceptance_rate: samples.acceptance_rate(),
        wall_time_ms,
    })
}

/// Runs every `(n, rep)` pair on a pool of `threads` workers (all cores when
/// `None`). Records come back sorted by `(n, rep)`; the first failing run in
/// that order aborts the experiment.
pub fn run_experiment(
    config: &ExperimentConfig,
    threads: Option<usize>,
) -> Result<(Vec<RunRecord>, Vec<AggregateRow>)> {
    let config = config.resolved()?;
    let model = config.model()?;
    let rho_true = config.true_density(&model)?;
    let n_qubits = model.hilbert_dim().trailing_zeros() as usize;
    if 1 << n_qubits != model.hilbert_dim() {
        return Err(Error::Config(format!(
            "Hilbert dimension {} is not a qubit register",
            model.hilbert_dim()
        )));
    }
    let scheme = PauliShadowScheme::new(n_qubits)?;
    let q_true = born_probabilities(&rho_true, scheme.povm())?;

    let tasks: Vec<(usize, usize)> = config
        .n_grid
        .iter()
        .flat_map(|&n| (0..config.repetitions).map(move |rep| (n, rep)))
        .collect();

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<RunRecord>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(n, rep)| {
                run_one(&config, &model, &scheme, &rho_true, &q_true, n, rep).map_err(|e| Error::Run {
                    n,
                    rep,
                    source: Box::new(e),
                })
            })
            .collect()
    });
    let records = results.into_iter().collect::<Result<Vec<_>>>()?;
    let aggregates = aggregate(&records);
    Ok((records, aggregates))
}

fn runs_header(with_qaic: bool) -> Vec<&'static str> {
    let mut h = vec![
        "model_id",
        "n",
        "rep",
        "seed",
        "g_n_q",
        "t_n_q",
        "c_n_q",
        "qwaic",
        "g_n",
        "t_n",
        "waic",
        "acceptance_rate",
        "wall_time_ms",
    ];
    if with_qaic {
        h.push("qaic_ll");
    }
    h
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Data {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn write_runs_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    let with_qaic = records.iter().any(|r| r.report.qaic_ll.is_some());
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(runs_header(with_qaic)).map_err(|e| csv_error(path, e))?;
    for r in records {
        let p = &r.report;
        let mut row = vec![
            r.model_id.clone(),
            r.n.to_string(),
            r.rep.to_string(),
            r.seed.to_string(),
        ];
        row.extend(
            [p.g_n_q, p.t_n_q, p.c_n_q, p.qwaic, p.g_n, p.t_n, p.waic, r.acceptance_rate]
                .iter()
                .map(|v| v.to_string()),
        );
        row.push(r.wall_time_ms.to_string());
        if with_qaic {
            row.push(p.qaic_ll.map(|v| v.to_string()).unwrap_or_default());
        }
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_runs_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let data_err = |message: String| Error::Data {
        path: path.to_path_buf(),
        message,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let required: Vec<usize> = runs_header(false)
        .iter()
        .map(|h| col(h).ok_or_else(|| data_err(format!("missing column `{h}`"))))
        .collect::<Result<_>>()?;
    let qaic_col = col("qaic_ll");

    let mut records = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let field = |k: usize| row.get(required[k]).unwrap_or("");
        let num = |k: usize| -> Result<f64> {
            field(k)
                .parse()
                .map_err(|_| data_err(format!("row {}: bad number `{}`", line + 1, field(k))))
        };
        let int = |k: usize| -> Result<u64> {
            field(k)
                .parse()
                .map_err(|_| data_err(format!("row {}: bad integer `{}`", line + 1, field(k))))
        };
        let n = int(1)? as usize;
        let qaic_ll = match qaic_col.and_then(|c| row.get(c)) {
            Some(s) if !s.is_empty() => Some(
                s.parse()
                    .map_err(|_| data_err(format!("row {}: bad number `{s}`", line + 1)))?,
            ),
            _ => None,
        };
        records.push(RunRecord {
            model_id: field(0).to_string(),
            n,
            rep: int(2)? as usize,
            seed: int(3)?,
            report: CriteriaReport {
                n,
                g_n_q: num(4)?,
                t_n_q: num(5)?,
                c_n_q: num(6)?,
                qwaic: num(7)?,
                g_n: num(8)?,
                t_n: num(9)?,
                waic: num(10)?,
                qaic_ll,
            },
            acceptance_rate: num(11)?,
            wall_time_ms: int(12)?,
        });
    }
    Ok(records)
}

pub fn write_aggregate_csv(aggregates: &[AggregateRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let Some(first) = aggregates.first() else {
        return w.flush().map_err(|e| Error::io(path, e));
    };
    let mut header = vec!["n".to_string(), "repetitions".to_string()];
    for (m, _) in &first.metrics {
        for s in ["mean", "std", "stderr"] {
            header.push(format!("{m}_{s}"));
        }
    }
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for a in aggregates {
        let mut row = vec![a.n.to_string(), a.repetitions.to_string()];
        for (_, s) in &a.metrics {
            row.extend([s.mean, s.std, s.stderr].iter().map(|v| v.to_string()));
        }
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_aggregate_csv(path: &Path) -> Result<Vec<AggregateRow>> {
    let data_err = |message: String| Error::Data {
        path: path.to_path_buf(),
        message,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.get(0) != Some("n") || headers.get(1) != Some("repetitions") || (headers.len() - 2) % 3 != 0 {
        return Err(data_err("unexpected aggregate header".into()));
    }
    let names: Vec<String> = (2..headers.len())
        .step_by(3)
        .map(|i| headers[i].trim_end_matches("_mean").to_string())
        .collect();
    let mut rows = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let num = |i: usize| -> Result<f64> {
            row[i]
                .parse()
                .map_err(|_| data_err(format!("bad number `{}`", &row[i])))
        };
        let metrics = names
            .iter()
            .enumerate()
            .map(|(k, m)| {
                let i = 2 + 3 * k;
                Ok((
                    m.clone(),
                    Summary {
                        mean: num(i)?,
                        std: num(i + 1)?,
                        stderr: num(i + 2)?,
                    },
                ))
            })
            .collect::<Result<_>>()?;
        rows.push(AggregateRow {
            n: num(0)? as usize,
            repetitions: num(1)? as usize,
            metrics,
        });
    }
    Ok(rows)
}

/// `(n, mean, stderr[, overlay / n])` rows for one metric.
pub fn plot_table(records: &[RunRecord], metric: &str, overlay: Option<f64>) -> Result<String> {
    if !is_metric(metric) {
        return Err(Error::Config(format!(
            "unknown metric `{metric}`; expected one of {}",
            METRICS.join(", ")
        )));
    }
    if records.is_empty() {
        return Err(Error::EmptyInput("no run records"));
    }
    let mut out = String::from("# n mean stderr");
    if overlay.is_some() {
        out.push_str(" overlay");
    }
    out.push('\n');
    for row in aggregate(records) {
        let s = row
            .get(metric)
            .ok_or_else(|| Error::Config(format!("metric `{metric}` is absent from the records")))?;
        write!(out, "{} {} {}", row.n, s.mean, s.stderr).unwrap();
        if let Some(c) = overlay {
            write!(out, " {}", c / row.n as f64).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

/// Writes `runs.csv`, `aggregate.csv`, `config.json` and one
/// `plot_<metric>.dat` per metric into `output_dir`, creating it if needed.
pub fn write_outputs(
    config: &ExperimentConfig,
    records: &[RunRecord],
    aggregates: &[AggregateRow],
    output_dir: &Path,
) -> Result<()> {
    fs::create_dir_all(output_dir).map_err(|e| Error::io(output_dir, e))?;
    write_runs_csv(records, &output_dir.join("runs.csv"))?;
    write_aggregate_csv(aggregates, &output_dir.join("aggregate.csv"))?;
    let config_path = output_dir.join("config.json");
    fs::write(&config_path, config.resolved()?.to_json_pretty() + "\n").map_err(|e| Error::io(&config_path, e))?;
    if let Some(first) = aggregates.first() {
        for (m, _) in &first.metrics {
            let path = output_dir.join(format!("plot_{m}.dat"));
            fs::write(&path, plot_table(records, m, None)?).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}

/// Fixed-width text table of means ± standard errors for standard output.
pub fn format_aggregate_table(aggregates: &[AggregateRow]) -> String {
    let cols = ["g_n_q", "qwaic", "qwaic_gap", "n_c_n_q", "g_n", "waic", "waic_gap", "acceptance_rate"];
    let mut out = format!("{:>7} {:>5}", "n", "reps");
    for c in cols {
        write!(out, " {c:>26}").unwrap();
    }
    out.push('\n');
    for a in aggregates {
        write!(out, "{:>7} {:>5}", a.n, a.repetitions).unwrap();
        for c in cols {
            match a.get(c) {
                Some(s) => write!(out, " {:>13.6e} ±{:>11.4e}", s.mean, s.stderr).unwrap(),
                None => write!(out, " {:>26}", "-").unwrap(),
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny(model_id: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml_str(&format!(
            "model_id = \"{model_id}\"\nmaster_seed = 7\nn_grid = [200, 400]\nrepetitions = 2\n\
             [mh]\nn_samples = 600\nburn_in = 100\n"
        ))
        .unwrap()
    }

    #[test]
    fn seeds_are_stable_and_distinct() {
        assert_eq!(derive_child_seed(1, 2000, 3), derive_child_seed(1, 2000, 3));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10_000 {
            let s: u64 = rng.random();
            let base = derive_child_seed(s, 2000, 0);
            assert_ne!(base, derive_child_seed(s, 2000, 1));
            assert_ne!(base, derive_child_seed(s, 4000, 0));
        }
    }

    #[test]
    fn config_defaults_and_errors() {
        let c = ExperimentConfig::from_toml_str("model_id = \"sec42_regular\"\nmaster_seed = 1\n").unwrap();
        assert_eq!(c.n_grid, vec![2000, 4000, 6000, 8000]);
        assert_eq!(c.repetitions, 100);
        assert_eq!(c.mh, MhConfig::default());
        assert!(!c.record_wall_time);
        let r = c.resolved().unwrap();
        assert!(matches!(r.true_state, Some(TrueState::ModelPoint { .. })));

        let e = ExperimentConfig::from_toml_str("master_seed = 1\n").unwrap_err();
        assert!(e.to_string().contains("model_id"), "{e}");
        assert!(ExperimentConfig::from_toml_str("model_id = \"x\"\nmaster_seed = 1\nbogus = 2\n").is_err());

        let mut bad = c.clone();
        bad.n_grid = vec![4000, 2000];
        assert!(bad.resolved().is_err());
        bad.n_grid = vec![];
        assert!(bad.resolved().is_err());
        let mut bad = c.clone();
        bad.repetitions = 0;
        assert!(bad.resolved().is_err());
        let mut bad = c;
        bad.model_id = "nope".into();
        assert!(matches!(bad.resolved(), Err(Error::UnknownModel(_))));
    }

    #[test]
    fn explicit_matrix_true_state() {
        let c = ExperimentConfig::from_toml_str(
            "model_id = \"ex41_regular\"\nmaster_seed = 1\n\
             [true_state]\nkind = \"matrix\"\nreal = [[0.5, 0.0], [0.0, 0.5]]\n",
        )
        .unwrap();
        let rho = c.true_density(&c.model().unwrap()).unwrap();
        assert!(rho.as_hermitian().max_abs_diff(DensityMatrix::maximally_mixed(2).as_hermitian()) < 1e-15);
        let c = ExperimentConfig::from_toml_str(
            "model_id = \"ex41_regular\"\nmaster_seed = 1\n\
             [true_state]\nkind = \"matrix\"\nreal = [[0.9, 0.0], [0.0, 0.9]]\n",
        )
        .unwrap();
        assert!(c.resolved().is_err());
    }

    #[test]
    fn run_is_deterministic_and_sorted() {
        let c = tiny("sec42_regular");
        let (a, agg) = run_experiment(&c, Some(1)).unwrap();
        let (b, _) = run_experiment(&c, Some(3)).unwrap();
        assert_eq!(a, b);
        let keys: Vec<(usize, usize)> = a.iter().map(|r| (r.n, r.rep)).collect();
        assert_eq!(keys, vec![(200, 0), (200, 1), (400, 0), (400, 1)]);
        assert!(a.iter().all(|r| r.wall_time_ms == 0));
        assert_eq!(agg.len(), 2);
        let m = agg[0].get("g_n_q").unwrap().mean;
        assert!((m - (a[0].report.g_n_q + a[1].report.g_n_q) / 2.0).abs() <= 1e-12);
        let gap = agg[1].get("qwaic_gap").unwrap().mean;
        let direct = a[2..].iter().map(|r| r.report.g_n_q - r.report.qwaic).sum::<f64>() / 2.0;
        assert!((gap - direct).abs() <= 1e-12);
    }

    #[test]
    fn failed_run_carries_context() {
        let mut c = tiny("ex41_regular");
        c.mh.step_scale = crate::posterior::StepScale::Uniform(1e3);
        c.mh.adapt_during_burn_in = false;
        match run_experiment(&c, Some(2)) {
            Err(Error::Run { n, rep, source }) => {
                assert_eq!((n, rep), (200, 0));
                assert!(matches!(*source, Error::AllProposalsRejected { .. }));
            }
            other => panic!("expected a run error, got {other:?}"),
        }
    }

    #[test]
    fn outputs_round_trip() {
        let mut c = tiny("ex41_regular");
        c.compute_qaic_ll = true;
        let (records, agg) = run_experiment(&c, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("nested/out");
        write_outputs(&c, &records, &agg, &out).unwrap();
        let back = read_runs_csv(&out.join("runs.csv")).unwrap();
        assert_eq!(back, records);
        let recomputed = aggregate(&back);
        let stored = read_aggregate_csv(&out.join("aggregate.csv")).unwrap();
        assert_eq!(recomputed.len(), stored.len());
        for (a, b) in recomputed.iter().zip(&stored) {
            assert_eq!(a.n, b.n);
            for ((ma, sa), (mb, sb)) in a.metrics.iter().zip(&b.metrics) {
                assert_eq!(ma, mb);
                assert!((sa.mean - sb.mean).abs() <= 1e-9);
                assert!((sa.std - sb.std).abs() <= 1e-9);
                assert!((sa.stderr - sb.stderr).abs() <= 1e-9);
            }
        }
        let plot = fs::read_to_string(out.join("plot_qaic_ll.dat")).unwrap();
        assert_eq!(plot.lines().count(), 3);
        let config = ExperimentConfig::from_path(&out.join("config.json")).unwrap();
        assert_eq!(config, c.resolved().unwrap());
    }

    #[test]
    fn plot_table_shapes() {
        let rec = |n: usize, c: f64| RunRecord {
            model_id: "m".into(),
            n,
            rep: 0,
            seed: 0,
            report: CriteriaReport {
                n,
                g_n_q: 1.0,
                t_n_q: 0.9,
                c_n_q: c,
                qwaic: 0.9 + c,
                g_n: 2.0,
                t_n: 1.9,
                waic: 2.1,
                qaic_ll: None,
            },
            acceptance_rate: 0.3,
            wall_time_ms: 0,
        };
        let records: Vec<RunRecord> = [2000, 4000, 6000, 8000]
            .iter()
            .flat_map(|&n| [rec(n, 1e-3), rec(n, 2e-3)])
            .collect();
        let t = plot_table(&records, "c_n_q", Some(8.08)).unwrap();
        let rows: Vec<&str> = t.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.split_whitespace().count() == 4));
        assert!(rows[0].ends_with(&(8.08 / 2000.0).to_string()));
        let t = plot_table(&records, "qwaic_gap", None).unwrap();
        assert_eq!(t.lines().count(), 5);
        assert!(plot_table(&records, "nope", None).is_err());
        assert!(plot_table(&records, "qaic_ll", None).is_err());
        assert!(plot_table(&[], "c_n_q", None).is_err());
    }
}
