//! Experiment plumbing: run configurations, baselines, seeded sweeps written
//! as CSV, and the verification suites behind the `verify` command.

use std::io::Write;
use web_time::Instant;

use ndarray::{Array1, Array2, Axis};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ellipsoid::{estimate_functional, EllipsoidConfig, EstimatorConfig, WeightVector};
use crate::error::{Error, Result};
use crate::model::{accuracy_delta, Dataset, Label, Link, ModelAdapter, ModelKind, DEFAULT_C_PRUNE};
use crate::oracle::evaluate_oracle;
use crate::simulator::{sample_contaminated, ContaminationSpec, QFamily};
use crate::spca::{SpcaProblem, SpcaSolver, SpcaOptions};
use crate::testkit::{
    check_conditions, mean_completeness_c_sep, monte_carlo_cov_check, sparse_opnorm_exact,
    sparse_restricted_l2_exact, ConditionConstants, MomentReport,
};
use crate::thresholding::{sparse_restricted_l2, top_k};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Robust,
    NaiveThreshold,
    PruneOnly,
    OracleWeights,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Robust => "robust",
            Method::NaiveThreshold => "naive_threshold",
            Method::PruneOnly => "prune_only",
            Method::OracleWeights => "oracle_weights",
        }
    }
}

fn one() -> f64 {
    1.0
}

fn default_methods() -> Vec<Method> {
    vec![Method::Robust, Method::NaiveThreshold]
}

fn one_usize() -> usize {
    1
}

fn default_tau() -> f64 {
    0.01
}

fn default_c_prune() -> f64 {
    DEFAULT_C_PRUNE
}

fn default_spca_tol() -> f64 {
    1e-3
}

fn default_spca_iters() -> usize {
    2000
}

fn default_oracle_calls() -> usize {
    200
}

/// Model choice. Without an explicit `signal`, the sparse parameter puts
/// `magnitude` with alternating signs on s evenly spaced coordinates; the
/// covariance model instead fills s/2 disjoint symmetric off-diagonal pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// μ or β (length d), or vec(S) in row-major order (length d²).
    #[serde(default)]
    pub signal: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub magnitude: f64,
    /// Norm bound for response models; defaults to ‖β‖₂.
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub link: Option<Link>,
}

/// One experiment: a model, a contamination regime, estimator knobs and the
/// methods to compare.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub n: usize,
    pub d: usize,
    pub s: usize,
    pub epsilon: f64,
    /// Overall failure probability; pruning uses it unless `tau_prune` is set.
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub tau_prune: Option<f64>,
    pub q_family: QFamily,
    #[serde(default = "one")]
    pub c_sep: f64,
    #[serde(default = "default_c_prune")]
    pub c_prune: f64,
    #[serde(default = "default_spca_tol")]
    pub spca_tol: f64,
    #[serde(default = "default_spca_iters")]
    pub spca_max_iters: usize,
    #[serde(default = "default_oracle_calls")]
    pub max_oracle_calls: usize,
    #[serde(default)]
    pub max_iters: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one_usize")]
    pub trials: usize,
    /// Defaults to robust and naive_threshold.
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Record wall-clock time per run. Off by default so output is
    /// reproducible byte for byte.
    #[serde(default)]
    pub timing: bool,
}

impl RunConfig {
    pub fn tau_prune(&self) -> f64 {
        self.tau_prune.unwrap_or(self.tau)
    }

    pub fn build_model(&self) -> Result<ModelAdapter> {
        let (d, s) = (self.d, self.s);
        if d == 0 || s == 0 {
            return Err(Error::Config("d and s must be positive".into()));
        }
        let m = &self.model;
        let model = match m.kind {
            ModelKind::Covariance => {
                let s_vec = match &m.signal {
                    Some(v) => v.clone(),
                    None => {
                        if s % 2 != 0 || s / 2 > d / 2 {
                            return Err(Error::Config(format!(
                                "default covariance signal needs an even s ≤ d, got s = {s}, d = {d}"
                            )));
                        }
                        let mut v = vec![0.0; d * d];
                        for k in 0..s / 2 {
                            v[(2 * k) * d + 2 * k + 1] = m.magnitude;
                            v[(2 * k + 1) * d + 2 * k] = m.magnitude;
                        }
                        v
                    }
                };
                if s_vec.len() != d * d {
                    return Err(Error::Config(format!("covariance signal needs {} entries", d * d)));
                }
                ModelAdapter::covariance(Array2::from_shape_vec((d, d), s_vec).expect("length checked"), s)?
            }
            kind => {
                let v = match &m.signal {
                    Some(v) => v.clone(),
                    None => {
                        if s > d {
                            return Err(Error::Config(format!("s = {s} exceeds d = {d}")));
                        }
                        let step = d / s;
                        let mut v = vec![0.0; d];
                        for k in 0..s {
                            v[k * step] = if k % 2 == 0 { m.magnitude } else { -m.magnitude };
                        }
                        v
                    }
                };
                if v.len() != d {
                    return Err(Error::Config(format!("signal needs {d} entries, got {}", v.len())));
                }
                let rho = m.rho.unwrap_or_else(|| v.iter().map(|x| x * x).sum::<f64>().sqrt());
                match kind {
                    ModelKind::Mean => ModelAdapter::mean(v, s)?,
                    ModelKind::LinearRegression => ModelAdapter::regression(v, rho, s)?,
                    ModelKind::Glm => ModelAdapter::glm(v, rho, m.link.unwrap_or(Link::Tanh), s)?,
                    ModelKind::Logistic => ModelAdapter::logistic(v, rho, m.link.unwrap_or(Link::Sigmoid), s)?,
                    ModelKind::Covariance => unreachable!(),
                }
            }
        };
        Ok(model.with_c_prune(self.c_prune))
    }

    pub fn contamination(&self, seed: u64) -> ContaminationSpec {
        ContaminationSpec { epsilon: self.epsilon, q_family: self.q_family.clone(), seed }
    }

    /// Dataset seed of a trial. It does not depend on the grid point, so
    /// grid points that differ only in ε share their clean draws.
    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.seed.wrapping_add(trial as u64)
    }

    pub fn estimator_config(&self) -> EstimatorConfig {
        EstimatorConfig {
            tau_prune: self.tau_prune(),
            c_sep: self.c_sep,
            tau_sep: None,
            spca_tol: self.spca_tol,
            spca_max_iters: self.spca_max_iters,
            ellipsoid: EllipsoidConfig {
                max_iters: self.max_iters,
                max_oracle_calls: self.max_oracle_calls,
                ..EllipsoidConfig::default()
            },
        }
    }

    /// Checks every field and returns the model it describes.
    pub fn validate(&self) -> Result<ModelAdapter> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if !(0.0..0.5).contains(&self.epsilon) {
            return bad(format!("epsilon must lie in [0, 1/2), got {}", self.epsilon));
        }
        for (name, v) in [("tau", self.tau), ("tau_prune", self.tau_prune())] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {v}"));
            }
        }
        for (name, v) in [("c_sep", self.c_sep), ("c_prune", self.c_prune), ("spca_tol", self.spca_tol)] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.spca_max_iters == 0 || self.max_oracle_calls == 0 || self.max_iters == Some(0) {
            return bad("iteration caps must be positive".into());
        }
        if self.trials == 0 {
            return bad("trials must be positive".into());
        }
        if !self.model.magnitude.is_finite() {
            return bad("model magnitude must be finite".into());
        }
        let model = self.build_model()?;
        self.contamination(self.seed).validate(&model)?;
        Ok(model)
    }
}

/// A sweep file is either a single run configuration or a base
/// configuration plus a list of partial overrides, one per grid point.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub grid: Vec<RunConfig>,
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let serde_json::Value::Object(obj) = &value else {
            return Err(Error::Config("sweep config must be a JSON object".into()));
        };
        if !obj.contains_key("base") {
            let cfg: RunConfig = serde_json::from_value(value)?;
            return Ok(SweepConfig { grid: vec![cfg] });
        }
        if let Some(extra) = obj.keys().find(|k| *k != "base" && *k != "grid") {
            return Err(Error::Config(format!("unknown top-level field `{extra}`")));
        }
        let serde_json::Value::Object(base) = &obj["base"] else {
            return Err(Error::Config("`base` must be an object".into()));
        };
        let overrides = match obj.get("grid") {
            None => vec![serde_json::Value::Object(Default::default())],
            Some(serde_json::Value::Array(items)) => items.clone(),
            Some(_) => return Err(Error::Config("`grid` must be an array of objects".into())),
        };
        if overrides.is_empty() {
            return Err(Error::Config("grid must be nonempty".into()));
        }
        let mut grid = Vec::with_capacity(overrides.len());
        for (i, item) in overrides.into_iter().enumerate() {
            let serde_json::Value::Object(patch) = item else {
                return Err(Error::Config(format!("grid entry {i} is not an object")));
            };
            let mut merged = base.clone();
            merged.extend(patch);
            let cfg: RunConfig = serde_json::from_value(serde_json::Value::Object(merged))
                .map_err(|e| Error::Config(format!("grid entry {i}: {e}")))?;
            grid.push(cfg);
        }
        Ok(SweepConfig { grid })
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Config("grid must be nonempty".into()));
        }
        for (i, cfg) in self.grid.iter().enumerate() {
            cfg.validate().map_err(|e| Error::Config(format!("grid entry {i}: {e}")))?;
        }
        Ok(())
    }
}

pub const CSV_HEADER: [&str; 16] = [
    "grid_point",
    "trial",
    "method",
    "model",
    "n",
    "d",
    "s",
    "epsilon",
    "l2_error",
    "frob_error",
    "support_recall",
    "lambda_best",
    "oracle_calls",
    "runtime_ms",
    "terminated_by",
    "error",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRecord {
    pub grid_point: usize,
    pub trial: usize,
    pub method: Method,
    pub model: ModelKind,
    pub n: usize,
    pub d: usize,
    pub s: usize,
    pub epsilon: f64,
    pub l2_error: Option<f64>,
    /// ‖Σ̂ − Σ‖_F, covariance model only.
    pub frob_error: Option<f64>,
    pub support_recall: Option<f64>,
    pub lambda_best: Option<f64>,
    pub oracle_calls: usize,
    pub runtime_ms: f64,
    pub terminated_by: Option<&'static str>,
    pub error: Option<String>,
}

/// |supp(θ̂) ∩ supp(θ)| / |supp(θ)|, and 1 when θ = 0.
pub fn support_recall(estimate: &Array1<f64>, truth: &Array1<f64>) -> f64 {
    let support: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] != 0.0).collect();
    if support.is_empty() {
        return 1.0;
    }
    support.iter().filter(|&&i| estimate[i] != 0.0).count() as f64 / support.len() as f64
}

/// θ̂ for each requested non-robust method, in request order:
/// `naive_threshold` thresholds the plain average of g, `prune_only` does the
/// same after pruning, `oracle_weights` averages only the samples labelled
/// good.
pub fn baseline_estimators(
    data: &Dataset,
    model: &ModelAdapter,
    methods: &[Method],
    tau_prune: f64,
) -> Result<Vec<(Method, Array1<f64>)>> {
    let k = 2 * model.sparsity;
    let mean_of = |rows: &Dataset| -> Result<Array1<f64>> {
        let g = model.functional_points(rows)?;
        Ok(top_k(g.mean_axis(Axis(0)).expect("nonempty").view(), k).values)
    };
    let mut out = Vec::new();
    for &method in methods {
        let est = match method {
            Method::Robust => continue,
            Method::NaiveThreshold => mean_of(data)?,
            Method::PruneOnly => mean_of(&model.prune(data, tau_prune)?.dataset)?,
            Method::OracleWeights => {
                let labels = data
                    .labels
                    .as_ref()
                    .ok_or_else(|| Error::Config("oracle_weights needs hidden labels".into()))?;
                let w = WeightVector::ideal(labels)?.w;
                let g = model.functional_points(data)?;
                top_k(g.t().dot(&w).view(), k).values
            }
        };
        out.push((method, est));
    }
    Ok(out)
}

struct Outcome {
    theta_hat: Array1<f64>,
    lambda_best: Option<f64>,
    oracle_calls: usize,
    terminated_by: Option<&'static str>,
}

fn run_method(cfg: &RunConfig, model: &ModelAdapter, data: &Dataset, method: Method) -> Result<Outcome> {
    if method == Method::Robust {
        let b = estimate_functional(data, model, &cfg.estimator_config())?;
        return Ok(Outcome {
            theta_hat: b.theta_hat,
            lambda_best: Some(b.best_lambda),
            oracle_calls: b.oracle_calls,
            terminated_by: Some(b.terminated_by.name()),
        });
    }
    let (_, theta_hat) = baseline_estimators(data, model, &[method], cfg.tau_prune())?
        .pop()
        .expect("one baseline requested");
    Ok(Outcome { theta_hat, lambda_best: None, oracle_calls: 0, terminated_by: None })
}

fn trial_records(grid_point: usize, cfg: &RunConfig, trial: usize) -> Vec<ResultRecord> {
    let blank = |method: Method| ResultRecord {
        grid_point,
        trial,
        method,
        model: cfg.model.kind,
        n: cfg.n,
        d: cfg.d,
        s: cfg.s,
        epsilon: cfg.epsilon,
        l2_error: None,
        frob_error: None,
        support_recall: None,
        lambda_best: None,
        oracle_calls: 0,
        runtime_ms: 0.0,
        terminated_by: None,
        error: None,
    };
    let prepared = cfg
        .validate()
        .and_then(|model| Ok((sample_contaminated(&model, cfg.n, &cfg.contamination(cfg.trial_seed(trial)))?, model)));
    let (data, model) = match prepared {
        Ok(v) => v,
        Err(e) => {
            return cfg.methods.iter().map(|&m| ResultRecord { error: Some(e.to_string()), ..blank(m) }).collect();
        }
    };
    let truth = model.true_theta();
    cfg.methods
        .iter()
        .map(|&method| {
            let started = Instant::now();
            let outcome = run_method(cfg, &model, &data, method);
            let runtime_ms = if cfg.timing { started.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
            let mut rec = ResultRecord { runtime_ms, ..blank(method) };
            match outcome {
                Ok(o) => {
                    let diff = &o.theta_hat - &truth;
                    rec.l2_error = Some(diff.dot(&diff).sqrt());
                    if model.kind() == ModelKind::Covariance {
                        rec.frob_error = model
                            .covariance_from_theta(o.theta_hat.view())
                            .ok()
                            .map(|est| {
                                let truth_sigma =
                                    model.covariance_from_theta(truth.view()).expect("true parameter is valid");
                                crate::linalg::frobenius((&est - &truth_sigma).view())
                            });
                    }
                    rec.support_recall = Some(support_recall(&o.theta_hat, &truth));
                    rec.lambda_best = o.lambda_best;
                    rec.oracle_calls = o.oracle_calls;
                    rec.terminated_by = o.terminated_by;
                }
                Err(e) => rec.error = Some(e.to_string()),
            }
            rec
        })
        .collect()
}

/// Runs every (grid point, trial, method) combination. Records come back
/// ordered by grid point, then trial, then method, whatever the number of
/// threads. Each trial draws one dataset shared by all methods.
pub fn run_sweep(sweep: &SweepConfig, threads: usize) -> Result<Vec<ResultRecord>> {
    if sweep.grid.is_empty() {
        return Err(Error::Config("grid must be nonempty".into()));
    }
    let jobs: Vec<(usize, usize)> =
        sweep.grid.iter().enumerate().flat_map(|(g, cfg)| (0..cfg.trials).map(move |t| (g, t))).collect();
    let run = |&(g, t): &(usize, usize)| trial_records(g, &sweep.grid[g], t);
    let chunks: Vec<Vec<ResultRecord>> = if threads <= 1 {
        jobs.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| jobs.par_iter().map(run).collect())
    };
    Ok(chunks.into_iter().flatten().collect())
}

pub fn write_records<W: Write>(out: W, records: &[ResultRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Lemmas,
    Moments,
    Spca,
    Oracle,
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lemmas" => Ok(Suite::Lemmas),
            "moments" => Ok(Suite::Moments),
            "spca" => Ok(Suite::Spca),
            "oracle" => Ok(Suite::Oracle),
            other => Err(Error::Config(format!("unknown suite `{other}` (expected lemmas, moments, spca or oracle)"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SandwichStats {
    pub instances: usize,
    pub lower_violations: usize,
    pub upper_violations: usize,
    /// Extremes of ‖P_s(Δ̃)‖₂ / ‖Δ̂‖₂ over instances with Δ̂ ≠ 0.
    pub min_ratio: f64,
    pub max_ratio: f64,
}

/// Random instances of the thresholding sandwich: θ is s-sparse,
/// θ̃ = θ + noise of a log-uniform random scale, Δ̂ = P_2s(θ̃) − θ and
/// Δ̃ = θ̃ − θ. Checks ‖Δ̂‖₂/5 ≤ ‖P_s(Δ̃)‖₂ ≤ 4‖Δ̂‖₂.
pub fn thresholding_sandwich(instances: usize, d: usize, s: usize, seed: u64) -> SandwichStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats =
        SandwichStats { instances, lower_violations: 0, upper_violations: 0, min_ratio: f64::INFINITY, max_ratio: 0.0 };
    for _ in 0..instances {
        let mut theta = Array1::<f64>::zeros(d);
        for i in sample_indices(&mut rng, d, s) {
            theta[i] = rng.sample::<f64, _>(StandardNormal) * 3.0;
        }
        let scale = 10f64.powf(rng.random_range(-3.0..1.5));
        let noise = Array1::from_iter((0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)));
        let tilde = &theta + &noise;
        let hat = top_k(tilde.view(), 2 * s).values - &theta;
        let hat_norm = hat.dot(&hat).sqrt();
        let mid = sparse_restricted_l2(noise.view(), s);
        if hat_norm / 5.0 > mid {
            stats.lower_violations += 1;
        }
        if mid > 4.0 * hat_norm {
            stats.upper_violations += 1;
        }
        if hat_norm > 0.0 {
            stats.min_ratio = stats.min_ratio.min(mid / hat_norm);
            stats.max_ratio = stats.max_ratio.max(mid / hat_norm);
        }
    }
    stats
}

#[derive(Debug, Clone, Serialize)]
pub struct SpcaSoundness {
    pub instances: usize,
    pub failures: usize,
    /// max over instances of (brute-force sparse λ_max − relaxation value).
    pub worst_shortfall: f64,
    pub max_solve_ms: f64,
    pub unconverged: usize,
}

/// Relaxation value against the enumerated sparse maximum eigenvalue on
/// random symmetrized Gaussian matrices, p ∈ {6, 10, 12} and s ∈ {1, 2, 3}.
pub fn spca_soundness(instances: usize, tol: f64, slack: f64, seed: u64) -> Result<SpcaSoundness> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SpcaSoundness { instances, failures: 0, worst_shortfall: f64::NEG_INFINITY, max_solve_ms: 0.0, unconverged: 0 };
    for k in 0..instances {
        let p = [6, 10, 12][k % 3];
        let s = 1 + (k / 3) % 3;
        let raw = Array2::from_shape_fn((p, p), |_| rng.sample::<f64, _>(StandardNormal));
        let e = (&raw + &raw.t()) / 2.0;
        let (_, brute) = sparse_opnorm_exact(e.view(), s)?;
        let started = Instant::now();
        let problem = SpcaProblem::new(e, s as f64, tol, 200_000)?;
        let sol = SpcaSolver::new(SpcaOptions::default()).solve(&problem)?;
        out.max_solve_ms = out.max_solve_ms.max(started.elapsed().as_secs_f64() * 1e3);
        let shortfall = brute - sol.lambda_star;
        out.worst_shortfall = out.worst_shortfall.max(shortfall);
        if shortfall > slack {
            out.failures += 1;
        }
        if !sol.converged {
            out.unconverged += 1;
        }
    }
    Ok(out)
}

/// Moment checks for the response models: regression at β = 0 and β = e₁,
/// a tanh GLM and a logistic model.
pub fn moment_reports(samples: usize, seed: u64) -> Result<Vec<(String, MomentReport)>> {
    let e1 = |d: usize, a: f64| {
        let mut v = vec![0.0; d];
        v[0] = a;
        v
    };
    let models = [
        ("regression beta=0", ModelAdapter::regression(vec![0.0; 5], 0.0, 1)?),
        ("regression beta=e1", ModelAdapter::regression(e1(5, 1.0), 1.0, 1)?),
        ("glm tanh beta=e1", ModelAdapter::glm(e1(5, 1.0), 1.0, Link::Tanh, 1)?),
        ("logistic sigmoid beta=e1", ModelAdapter::logistic(e1(5, 1.0), 1.0, Link::Sigmoid, 1)?),
    ];
    models
        .iter()
        .enumerate()
        .map(|(i, (name, m))| Ok((name.to_string(), monte_carlo_cov_check(m, samples, seed.wrapping_add(i as u64))?)))
        .collect()
}

/// Acceptance multiplier fitted to clean data: `multiplier` times the
/// largest relaxation value seen at uniform weights over `trials` clean
/// samples of size n, divided by (L_F² + L_cov)·δ(ε). The worst-case
/// regularity constants can overshoot the clean relaxation value by orders
/// of magnitude, in which case c_sep = 1 accepts contaminated weightings.
pub fn calibrate_c_sep(model: &ModelAdapter, n: usize, epsilon: f64, trials: usize, multiplier: f64, seed: u64) -> Result<f64> {
    let base = (model.lipschitz_f.powi(2) + model.cov_bound) * accuracy_delta(model.kind(), epsilon);
    if !(base > 0.0) || trials == 0 {
        return Err(Error::Config("calibration needs ε > 0 and at least one trial".into()));
    }
    let probe = crate::oracle::OracleConfig { tau_sep: 1e-12, sparsity: model.sparsity, spca_tol: 1e-4, spca_max_iters: 5000 };
    let mut worst = f64::NEG_INFINITY;
    for t in 0..trials {
        let clean = model.sample_clean(n, seed.wrapping_add(t as u64))?;
        let points = model.functional_points(&clean)?;
        let w = WeightVector::uniform(n).w;
        worst = worst.max(evaluate_oracle(w.view(), points.view(), model, &probe)?.lambda_star());
    }
    Ok(multiplier * worst.max(0.0) / base)
}

/// Constant applied to the deterministic conditions in the oracle replay.
/// At n = 400, d = 20 the unit constant is never met (the ℓ∞ conditions
/// measure 2–5× their unit thresholds), so the replay uses a constant at
/// which roughly half the seeds pass.
pub const REPLAY_CONDITION_CONSTANT: f64 = 3.5;

#[derive(Debug, Clone, Serialize)]
pub struct ReplayRun {
    pub seed: u64,
    pub conditions_pass: bool,
    pub oracle_yes_at_ideal: bool,
    pub lambda_at_ideal: f64,
    pub cuts: usize,
    pub violating_cuts: usize,
    pub max_cut_value_at_ideal: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplayStats {
    pub c_sep: f64,
    pub tau_sep: f64,
    pub runs: Vec<ReplayRun>,
}

impl ReplayStats {
    pub fn passing_runs(&self) -> usize {
        self.runs.iter().filter(|r| r.conditions_pass).count()
    }

    /// Runs that pass the conditions but where the oracle rejects w*.
    pub fn completeness_failures(&self) -> usize {
        self.runs.iter().filter(|r| r.conditions_pass && !r.oracle_yes_at_ideal).count()
    }

    pub fn total_cuts(&self) -> usize {
        self.runs.iter().map(|r| r.cuts).sum()
    }

    pub fn violating_cuts(&self) -> usize {
        self.runs.iter().map(|r| r.violating_cuts).sum()
    }
}

/// Mean model, d = 20, s = 3, n = 400, ε = 0.1, outliers at 5·e₁. Per seed:
/// check the deterministic conditions, query the oracle at the ideal
/// weights, then run the estimator and evaluate every oracle cut at the
/// ideal weights of the retained samples.
pub fn oracle_replay(seeds: std::ops::Range<u64>, constant: f64) -> Result<ReplayStats> {
    let (d, s, n, eps) = (20, 3, 400, 0.1);
    let mut mu = vec![0.0; d];
    mu[3] = 1.0;
    mu[7] = -1.0;
    mu[11] = 1.0;
    let model = ModelAdapter::mean(mu, s)?;
    let mut shift = vec![0.0; d];
    shift[0] = 5.0;
    let delta = accuracy_delta(model.kind(), eps);
    let constants = ConditionConstants { mean: constant, cov: constant };
    let c_sep = mean_completeness_c_sep(constants, delta, s);
    let mut cfg = EstimatorConfig { c_sep, ..EstimatorConfig::default() };
    cfg.ellipsoid.record_cuts = true;
    let oracle_cfg = cfg.oracle_config(&model, eps);
    let mut runs = Vec::new();
    for seed in seeds {
        let spec = ContaminationSpec { epsilon: eps, q_family: QFamily::PointMass { shift: shift.clone(), response: None }, seed };
        let data = sample_contaminated(&model, n, &spec)?;
        let labels = data.labels.as_ref().expect("simulated data is labelled");
        let report = check_conditions(&data, &model, delta, 50, constants, seed)?;
        let points = model.functional_points(&data)?;
        let w_star = WeightVector::ideal(labels)?.w;
        let verdict = evaluate_oracle(w_star.view(), points.view(), &model, &oracle_cfg)?;

        let bundle = estimate_functional(&data, &model, &cfg)?;
        let kept = bundle.kept.as_ref().expect("estimator reports retained samples");
        let kept_labels: Vec<Label> = kept.iter().map(|&i| labels[i]).collect();
        let w_kept = WeightVector::ideal(&kept_labels)?.w;
        let values: Vec<f64> = bundle
            .diagnostics
            .as_ref()
            .expect("cuts were recorded")
            .cuts
            .iter()
            .filter_map(|c| c.coefficients.as_ref().map(|a| a.dot(&w_kept) + c.offset))
            .collect();
        runs.push(ReplayRun {
            seed,
            conditions_pass: report.passes(),
            oracle_yes_at_ideal: verdict.is_yes(),
            lambda_at_ideal: verdict.lambda_star(),
            cuts: values.len(),
            violating_cuts: values.iter().filter(|&&v| v >= 0.0).count(),
            max_cut_value_at_ideal: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        });
    }
    Ok(ReplayStats { c_sep, tau_sep: oracle_cfg.tau_sep, runs })
}

fn check(name: &str, measured: f64, tolerance: f64, passed: bool, detail: String) -> Check {
    Check { name: name.to_string(), measured, tolerance, passed, detail }
}

/// Runs one verification suite at its full size.
pub fn verify(suite: Suite) -> Result<VerifyReport> {
    let checks = match suite {
        Suite::Lemmas => {
            let st = thresholding_sandwich(10_000, 50, 5, 17);
            let mut rng = ChaCha8Rng::seed_from_u64(18);
            let mut worst = 0.0f64;
            for k in 0..500 {
                let p = 1 + k % 20;
                let v = Array1::from_iter((0..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
                let s = 1 + k % 4;
                worst = worst.max((sparse_restricted_l2(v.view(), s) - sparse_restricted_l2_exact(v.view(), s)?).abs());
            }
            vec![
                check(
                    "thresholding sandwich violations",
                    (st.lower_violations + st.upper_violations) as f64,
                    0.0,
                    st.lower_violations + st.upper_violations == 0,
                    format!("{} instances, ratio range [{:.3}, {:.3}]", st.instances, st.min_ratio, st.max_ratio),
                ),
                check(
                    "restricted l2 vs enumeration",
                    worst,
                    1e-12,
                    worst <= 1e-12,
                    "500 random vectors, p ≤ 20".into(),
                ),
            ]
        }
        Suite::Moments => moment_reports(200_000, 29)?
            .into_iter()
            .map(|(name, r)| {
                let z = r.mean_max_z.max(r.cov_max_z);
                check(&name, z, r.z_tolerance, r.passes, format!(
                    "max standard-error multiple over mean and covariance entries; rel op error {:.4}, mean rel error {:.4}",
                    r.cov_rel_op_error, r.mean_rel_error
                ))
            })
            .collect(),
        Suite::Spca => {
            let st = spca_soundness(200, 1e-6, 1e-5, 5)?;
            vec![
                check(
                    "relaxation ≥ sparse eigenvalue",
                    st.worst_shortfall,
                    1e-5,
                    st.failures == 0,
                    format!("{} instances, {} failures, {} unconverged", st.instances, st.failures, st.unconverged),
                ),
                check("max solve time (ms)", st.max_solve_ms, 1000.0, st.max_solve_ms < 1000.0, String::new()),
            ]
        }
        Suite::Oracle => {
            let st = oracle_replay(0..20, REPLAY_CONDITION_CONSTANT)?;
            vec![
                check(
                    "oracle accepts w* when conditions pass",
                    st.completeness_failures() as f64,
                    0.0,
                    st.completeness_failures() == 0,
                    format!("{} of {} runs pass the conditions (constant {REPLAY_CONDITION_CONSTANT}, c_sep {:.3})", st.passing_runs(), st.runs.len(), st.c_sep),
                ),
                check(
                    "cuts keep w* strictly feasible",
                    st.violating_cuts() as f64,
                    0.0,
                    st.violating_cuts() == 0,
                    format!("{} oracle cuts", st.total_cuts()),
                ),
            ]
        }
    };
    Ok(VerifyReport { suite, checks })
}
