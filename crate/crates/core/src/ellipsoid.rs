//! Ellipsoid method over the capped-simplex weight polytope, driven by the
//! separation oracle, and the end-to-end estimators built on it.

use web_time::Instant;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::inv_sqrt_psd;
use crate::model::{Dataset, Label, ModelAdapter};
use crate::oracle::{weighted_functional, OracleConfig, OracleVerdict, SeparationOracle};
use crate::spca::SpcaOptions;
use crate::thresholding::top_k;

pub const FEASIBILITY_TOL: f64 = 1e-8;
/// Shallowest usable cut depth, as a multiple of −1/q.
const SHALLOW_LIMIT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub w: Array1<f64>,
}

impl WeightVector {
    pub fn uniform(m: usize) -> Self {
        WeightVector { w: Array1::from_elem(m, 1.0 / m as f64) }
    }

    /// Uniform weights on the samples labelled good.
    pub fn ideal(labels: &[Label]) -> Result<Self> {
        let good = labels.iter().filter(|&&l| l == Label::Good).count();
        if good == 0 {
            return Err(Error::InvalidInput("no good samples".into()));
        }
        let v = 1.0 / good as f64;
        Ok(WeightVector { w: labels.iter().map(|&l| if l == Label::Good { v } else { 0.0 }).collect() })
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn is_feasible(&self, polytope: &WeightPolytope, tol: f64) -> bool {
        self.w.len() == polytope.m
            && (self.w.sum() - 1.0).abs() <= tol
            && self.w.iter().all(|&x| x >= -tol && x <= polytope.cap + tol)
    }
}

/// Orthonormal basis of the sum-zero subspace of ℝᵐ (Helmert contrasts),
/// applied in O(m) without materialising the m × (m−1) matrix. Column k
/// (1-based) is (1, …, 1, −k, 0, …, 0)/√(k(k+1)) with k leading ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SumZeroBasis {
    pub m: usize,
}

impl SumZeroBasis {
    /// B z.
    pub fn apply(&self, z: ArrayView1<f64>) -> Array1<f64> {
        let m = self.m;
        let mut out = Array1::zeros(m);
        let mut suffix = 0.0;
        for j in (0..m).rev() {
            // suffix holds Σ_{k > j} z_k / √(k(k+1)) with 1-based k.
            let own = if j >= 1 {
                let k = j as f64;
                -k * z[j - 1] / (k * (k + 1.0)).sqrt()
            } else {
                0.0
            };
            out[j] = suffix + own;
            if j >= 1 {
                let k = j as f64;
                suffix += z[j - 1] / (k * (k + 1.0)).sqrt();
            }
        }
        out
    }

    /// Bᵀ a.
    pub fn apply_transpose(&self, a: ArrayView1<f64>) -> Array1<f64> {
        let m = self.m;
        let mut out = Array1::zeros(m.saturating_sub(1));
        let mut prefix = 0.0;
        for k in 1..m {
            prefix += a[k - 1];
            let kf = k as f64;
            out[k - 1] = (prefix - kf * a[k]) / (kf * (kf + 1.0)).sqrt();
        }
        out
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let q = self.m.saturating_sub(1);
        let mut b = Array2::zeros((self.m, q));
        for k in 0..q {
            let mut e = Array1::zeros(q);
            e[k] = 1.0;
            b.column_mut(k).assign(&self.apply(e.view()));
        }
        b
    }
}

/// {w : Σ wᵢ = 1, 0 ≤ wᵢ ≤ 1/((1−2ε)m)}.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightPolytope {
    pub m: usize,
    pub epsilon: f64,
    pub cap: f64,
    pub basis: SumZeroBasis,
}

impl WeightPolytope {
    pub fn new(m: usize, epsilon: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidInput("weight polytope needs at least one sample".into()));
        }
        if !(0.0..0.5).contains(&epsilon) {
            return Err(Error::InvalidInput(format!("epsilon must lie in [0, 1/2), got {epsilon}")));
        }
        Ok(WeightPolytope { m, epsilon, cap: 1.0 / ((1.0 - 2.0 * epsilon) * m as f64), basis: SumZeroBasis { m } })
    }

    /// True when the polytope is the single point of uniform weights.
    pub fn is_singleton(&self) -> bool {
        self.m == 1 || self.cap * self.m as f64 <= 1.0 + 1e-12
    }

    pub fn weights_at(&self, z: ArrayView1<f64>) -> Array1<f64> {
        self.basis.apply(z) + 1.0 / self.m as f64
    }

    /// Distance from uniform weights to the farthest vertex.
    pub fn circumradius(&self) -> f64 {
        let m = self.m as f64;
        let k = (1.0 / self.cap).floor().min(m);
        let rest = 1.0 - k * self.cap;
        let filled = if rest > 0.0 { 1.0 } else { 0.0 };
        let zeros = (m - k - filled).max(0.0);
        (k * (self.cap - 1.0 / m).powi(2) + filled * (rest - 1.0 / m).powi(2) + zeros / (m * m)).sqrt()
    }

    /// Euclidean projection onto the polytope.
    pub fn project(&self, w: ArrayView1<f64>) -> Array1<f64> {
        let cap = self.cap;
        let mass = |t: f64| w.iter().map(|&x| (x - t).clamp(0.0, cap)).sum::<f64>();
        let mut lo = w.iter().fold(f64::INFINITY, |a, &b| a.min(b)) - cap;
        let mut hi = w.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mass(mid) > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-17 * (1.0 + hi.abs()) {
                break;
            }
        }
        let t = 0.5 * (lo + hi);
        let mut out = w.mapv(|x| (x - t).clamp(0.0, cap));
        // Spread the bisection residue over coordinates strictly inside the box.
        let residue = 1.0 - out.sum();
        let free: Vec<usize> = (0..self.m).filter(|&i| out[i] > 0.0 && out[i] < cap).collect();
        if !free.is_empty() {
            let share = residue / free.len() as f64;
            for i in free {
                out[i] = (out[i] + share).clamp(0.0, cap);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolytopeCheck {
    Feasible,
    /// ℓ(w′) = ⟨a, w′⟩ + b with ℓ(w) > 0 and ℓ ≤ 0 on the polytope.
    ViolatedCut { a: Array1<f64>, b: f64 },
}

/// Returns the most violated box constraint. Assumes Σ wᵢ = 1, which holds by
/// construction for every center in reduced coordinates.
pub fn polytope_check(w: ArrayView1<f64>, polytope: &WeightPolytope) -> Result<PolytopeCheck> {
    crate::error::check_len(polytope.m, w.len())?;
    let mut worst: Option<(f64, usize, bool)> = None;
    for (i, &x) in w.iter().enumerate() {
        let (viol, upper) = if -x > x - polytope.cap { (-x, false) } else { (x - polytope.cap, true) };
        if viol > FEASIBILITY_TOL && worst.is_none_or(|(v, _, _)| viol > v) {
            worst = Some((viol, i, upper));
        }
    }
    Ok(match worst {
        None => PolytopeCheck::Feasible,
        Some((_, i, upper)) => {
            let mut a = Array1::zeros(polytope.m);
            a[i] = if upper { 1.0 } else { -1.0 };
            PolytopeCheck::ViolatedCut { a, b: if upper { -polytope.cap } else { 0.0 } }
        }
    })
}

/// Ellipsoid {z : (z − c)ᵀ P⁻¹ (z − c) ≤ 1} in reduced coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidState {
    pub center: Array1<f64>,
    pub shape: Array2<f64>,
    pub iteration: usize,
    /// log det P relative to the initial ellipsoid.
    pub log_det: f64,
    pub trace: f64,
}

impl EllipsoidState {
    pub fn ball(q: usize, radius: f64) -> Self {
        let r2 = radius * radius;
        EllipsoidState {
            center: Array1::zeros(q),
            shape: Array2::eye(q) * r2,
            iteration: 0,
            log_det: 0.0,
            trace: q as f64 * r2,
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Cut keeping {z : ĝᵀ(z − c) ≤ −α √(ĝᵀPĝ)}; α = 0 is the central cut,
    /// α > 0 a deep cut and α < 0 a shallow one. α is clamped to
    /// [−1/(2q), 0.99] so the volume always shrinks. Returns
    /// log(det P′ / det P).
    pub fn cut(&mut self, g: ArrayView1<f64>, depth: f64) -> Result<f64> {
        let q = self.dim();
        if g.len() != q {
            return Err(Error::DimensionMismatch { expected: q, found: g.len() });
        }
        let pg = self.shape.dot(&g);
        let gpg = g.dot(&pg);
        if !(gpg > 0.0) || !gpg.is_finite() {
            return Err(Error::StateCorruption {
                iteration: self.iteration,
                reason: format!("gᵀPg = {gpg:e} is not positive"),
            });
        }
        let qf = q as f64;
        let alpha = depth.clamp(-SHALLOW_LIMIT / qf, 0.99);
        let root = gpg.sqrt();
        let log_ratio = if q == 1 {
            let step = (1.0 + alpha) / 2.0;
            self.center.scaled_add(-step / root, &pg);
            let c = ((1.0 - alpha) / 2.0).powi(2);
            self.shape *= c;
            c.ln()
        } else {
            let step = (1.0 + qf * alpha) / (qf + 1.0);
            self.center.scaled_add(-step / root, &pg);
            let c = qf * qf * (1.0 - alpha * alpha) / (qf * qf - 1.0);
            let beta = 2.0 * (1.0 + qf * alpha) / ((qf + 1.0) * (1.0 + alpha));
            let coef = beta / gpg;
            let pgs = pg.as_slice().expect("contiguous");
            for (i, mut row) in self.shape.axis_iter_mut(Axis(0)).enumerate() {
                let pi = coef * pgs[i];
                for (v, &pj) in row.iter_mut().zip(pgs) {
                    *v = c * (*v - pi * pj);
                }
            }
            self.trace = c * (self.trace - beta * pg.dot(&pg) / gpg);
            qf * c.ln() + (1.0 - beta).ln()
        };
        if q == 1 {
            self.trace = self.shape[[0, 0]];
        }
        if !(log_ratio < 0.0) {
            return Err(Error::StateCorruption {
                iteration: self.iteration,
                reason: format!("volume did not decrease (log ratio {log_ratio})"),
            });
        }
        self.log_det += log_ratio;
        self.iteration += 1;
        Ok(log_ratio)
    }
}

/// Central-cut update returning a new state.
pub fn ellipsoid_update(state: &EllipsoidState, cut: ArrayView1<f64>) -> Result<EllipsoidState> {
    let mut next = state.clone();
    next.cut(cut, 0.0)?;
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    OracleYes,
    IterationCap,
    VolumeFloor,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::OracleYes => "oracle_yes",
            Termination::IterationCap => "iteration_cap",
            Termination::VolumeFloor => "volume_floor",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CutSource {
    Oracle,
    Polytope,
}

#[derive(Debug, Clone)]
pub struct CutRecord {
    pub iteration: usize,
    pub source: CutSource,
    /// Coefficients in weight space; kept for oracle cuts only.
    pub coefficients: Option<Array1<f64>>,
    pub offset: f64,
    pub lambda: Option<f64>,
    pub log_det_ratio: f64,
    /// Reduced coordinates of the query point.
    pub query: Option<Array1<f64>>,
}

#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    pub cuts: Vec<CutRecord>,
    pub spca_unconverged: usize,
}

#[derive(Debug, Clone)]
pub struct EllipsoidConfig {
    /// Total iterations including feasibility cuts; `None` means 500·m².
    pub max_iters: Option<usize>,
    pub max_oracle_calls: usize,
    /// Stop once √trace(P) falls below this; `None` derives it from the model.
    pub volume_floor: Option<f64>,
    /// Initial radius in reduced coordinates; `None` uses
    /// min(1.5·√q·R, 2) with R the polytope circumradius.
    pub initial_radius: Option<f64>,
    pub record_cuts: bool,
    pub spca: SpcaOptions,
}

impl Default for EllipsoidConfig {
    fn default() -> Self {
        EllipsoidConfig {
            max_iters: None,
            max_oracle_calls: 200,
            volume_floor: None,
            initial_radius: None,
            record_cuts: false,
            spca: SpcaOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EstimateBundle {
    pub theta_tilde: Array1<f64>,
    pub theta_hat: Array1<f64>,
    pub weights: WeightVector,
    pub best_lambda: f64,
    pub oracle_calls: usize,
    pub iterations: usize,
    pub terminated_by: Termination,
    /// Rows of the input dataset that survived pruning, when pruning ran.
    pub kept: Option<Vec<usize>>,
    pub diagnostics: Option<Diagnostics>,
    pub runtime_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BundleSummary {
    pub theta_hat: Vec<f64>,
    pub support: Vec<usize>,
    pub best_lambda: f64,
    pub oracle_calls: usize,
    pub iterations: usize,
    pub terminated_by: Termination,
    pub samples_used: usize,
    pub max_weight: f64,
    pub min_weight: f64,
}

impl EstimateBundle {
    pub fn summary(&self) -> BundleSummary {
        BundleSummary {
            theta_hat: self.theta_hat.to_vec(),
            support: (0..self.theta_hat.len()).filter(|&i| self.theta_hat[i] != 0.0).collect(),
            best_lambda: self.best_lambda,
            oracle_calls: self.oracle_calls,
            iterations: self.iterations,
            terminated_by: self.terminated_by,
            samples_used: self.weights.len(),
            max_weight: self.weights.w.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)),
            min_weight: self.weights.w.iter().fold(f64::INFINITY, |a, &b| a.min(b)),
        }
    }
}

fn finish_bundle(
    points: ArrayView2<f64>,
    sparsity: usize,
    weights: Array1<f64>,
    best_lambda: f64,
    oracle_calls: usize,
    iterations: usize,
    terminated_by: Termination,
    diagnostics: Option<Diagnostics>,
    started: Instant,
) -> Result<EstimateBundle> {
    let theta_tilde = weighted_functional(weights.view(), points)?;
    let theta_hat = top_k(theta_tilde.view(), 2 * sparsity).values;
    Ok(EstimateBundle {
        theta_tilde,
        theta_hat,
        weights: WeightVector { w: weights },
        best_lambda,
        oracle_calls,
        iterations,
        terminated_by,
        kept: None,
        diagnostics,
        runtime_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

/// Runs the ellipsoid method over the weight polytope of `points`.
///
/// Every iteration queries the oracle at the center, or at its projection
/// onto the polytope when the center is infeasible; the returned cut passes
/// through the query point and is applied at the center as a central, deep or
/// shallow cut. Cuts that would be too shallow are replaced by a deep cut
/// toward the projection. When the oracle never accepts, the feasible weights
/// with the smallest relaxation value are returned.
pub fn run_ellipsoid(
    points: ArrayView2<f64>,
    model: &ModelAdapter,
    oracle_config: &OracleConfig,
    config: &EllipsoidConfig,
    epsilon: f64,
) -> Result<EstimateBundle> {
    let started = Instant::now();
    let m = points.nrows();
    if m == 0 {
        return Err(Error::InvalidInput("no points to weight".into()));
    }
    let polytope = WeightPolytope::new(m, epsilon)?;
    let mut oracle =
        SeparationOracle::new(model, points, oracle_config.clone())?.with_spca_options(config.spca.clone());
    let mut diagnostics = config.record_cuts.then(Diagnostics::default);

    if polytope.is_singleton() {
        let w = Array1::from_elem(m, 1.0 / m as f64);
        let verdict = oracle.evaluate(w.view())?;
        let term = if verdict.is_yes() { Termination::OracleYes } else { Termination::VolumeFloor };
        return finish_bundle(points, model.sparsity, w, verdict.lambda_star(), 1, 1, term, diagnostics, started);
    }

    let q = m - 1;
    let radius = config.initial_radius.unwrap_or_else(|| (1.5 * (q as f64).sqrt() * polytope.circumradius()).min(2.0));
    let max_iters = config.max_iters.unwrap_or_else(|| 500usize.saturating_mul(m).saturating_mul(m));
    let floor = config.volume_floor.unwrap_or_else(|| {
        let d = model.radius_d.unwrap_or_else(|| {
            points.rows().into_iter().map(|r| r.dot(&r).sqrt()).fold(0.0, f64::max).max(1e-300)
        });
        epsilon * (model.cov_bound.sqrt() + model.lipschitz_f) / (m as f64 * d)
    });
    let mut state = EllipsoidState::ball(q, radius);
    let mut best: Option<(f64, Array1<f64>)> = None;
    let mut oracle_calls = 0;
    let mut termination = Termination::IterationCap;

    while state.iteration < max_iters {
        if state.trace.max(0.0).sqrt() < floor {
            termination = Termination::VolumeFloor;
            break;
        }
        if oracle_calls >= config.max_oracle_calls {
            break;
        }
        let w = polytope.weights_at(state.center.view());
        let feasible = w.iter().all(|&x| x >= -FEASIBILITY_TOL && x <= polytope.cap + FEASIBILITY_TOL);
        // Infeasible centers are queried at their projection; the cut through
        // the projection becomes a shallow or deep cut at the center.
        let query = if feasible { w.clone() } else { polytope.project(w.view()) };
        oracle_calls += 1;
        let verdict = oracle.evaluate(query.view())?;
        let lambda = verdict.lambda_star();
        if best.as_ref().is_none_or(|(l, _)| lambda < *l) {
            best = Some((lambda, query.clone()));
        }
        match verdict {
            OracleVerdict::Yes { .. } => {
                best = Some((lambda, query));
                termination = Termination::OracleYes;
                break;
            }
            OracleVerdict::Cut { coefficients, offset, converged, .. } => {
                let g = polytope.basis.apply_transpose(coefficients.view());
                if g.iter().all(|&x| x == 0.0) {
                    return Err(Error::StateCorruption {
                        iteration: state.iteration,
                        reason: "oracle returned a cut parallel to the simplex".into(),
                    });
                }
                let gpg = g.dot(&state.shape.dot(&g)).max(f64::MIN_POSITIVE);
                let depth = coefficients.dot(&(&w - &query)) / gpg.sqrt();
                if let (Some(diag), false) = (diagnostics.as_mut(), converged) {
                    diag.spca_unconverged += 1;
                }
                if depth >= -SHALLOW_LIMIT / q as f64 {
                    let reduced = polytope.basis.apply_transpose((&query - 1.0 / m as f64).view());
                    let ratio = state.cut(g.view(), depth)?;
                    if let Some(diag) = diagnostics.as_mut() {
                        diag.cuts.push(CutRecord {
                            iteration: state.iteration,
                            source: CutSource::Oracle,
                            coefficients: Some(coefficients),
                            offset,
                            lambda: Some(lambda),
                            log_det_ratio: ratio,
                            query: Some(reduced),
                        });
                    }
                    continue;
                }
            }
        }
        // Too shallow to use: cut toward the polytope instead.
        let a = &w - &query;
        let violation = a.dot(&a);
        let g = polytope.basis.apply_transpose(a.view());
        let gpg = g.dot(&state.shape.dot(&g));
        let depth = violation / gpg.max(f64::MIN_POSITIVE).sqrt();
        let ratio = state.cut(g.view(), depth)?;
        if let Some(diag) = diagnostics.as_mut() {
            diag.cuts.push(CutRecord {
                iteration: state.iteration,
                source: CutSource::Polytope,
                coefficients: None,
                offset: -a.dot(&query),
                lambda: None,
                log_det_ratio: ratio,
                query: None,
            });
        }
    }

    let (best_lambda, w) = best.ok_or_else(|| {
        Error::Estimation(format!("no feasible weights visited in {} iterations", state.iteration))
    })?;
    let w = polytope.project(w.view());
    finish_bundle(points, model.sparsity, w, best_lambda, oracle_calls, state.iteration, termination, diagnostics, started)
}

#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    pub tau_prune: f64,
    pub c_sep: f64,
    /// Overrides the model-derived acceptance threshold.
    pub tau_sep: Option<f64>,
    pub spca_tol: f64,
    pub spca_max_iters: usize,
    pub ellipsoid: EllipsoidConfig,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            tau_prune: 0.01,
            c_sep: 1.0,
            tau_sep: None,
            spca_tol: 1e-3,
            spca_max_iters: 2000,
            ellipsoid: EllipsoidConfig::default(),
        }
    }
}

impl EstimatorConfig {
    pub fn oracle_config(&self, model: &ModelAdapter, epsilon: f64) -> OracleConfig {
        let mut cfg = OracleConfig::for_model(model, epsilon, self.c_sep);
        if let Some(t) = self.tau_sep {
            cfg.tau_sep = t;
        }
        cfg.spca_tol = self.spca_tol;
        cfg.spca_max_iters = self.spca_max_iters;
        cfg
    }
}

/// Prune, map through g, weight with the ellipsoid method, threshold.
pub fn estimate_functional(data: &Dataset, model: &ModelAdapter, config: &EstimatorConfig) -> Result<EstimateBundle> {
    let pruned = model.prune(data, config.tau_prune)?;
    let model = model.clone().with_radius_d(pruned.radius_d);
    let points = model.functional_points(&pruned.dataset)?;
    let oracle = config.oracle_config(&model, data.epsilon);
    let mut bundle = run_ellipsoid(points.view(), &model, &oracle, &config.ellipsoid, data.epsilon)?;
    bundle.kept = Some(pruned.kept);
    Ok(bundle)
}

#[derive(Debug, Clone)]
pub struct JointConfig {
    pub mean_sparsity: usize,
    pub cov_sparsity: usize,
    pub estimator: EstimatorConfig,
}

#[derive(Debug, Clone)]
pub struct JointEstimate {
    pub mu_hat: Array1<f64>,
    pub sigma_hat: Array2<f64>,
    /// True when Σ̂ had eigenvalues below 10⁻⁶ and was lifted.
    pub regularized: bool,
    pub covariance: EstimateBundle,
    pub mean: EstimateBundle,
}

/// Joint sparse mean and covariance estimation. Differences of two batches
/// are mean-free with covariance Σ; the covariance estimate then whitens a
/// third batch for the mean estimate.
pub fn joint_mean_cov_estimate(data: &Dataset, config: &JointConfig) -> Result<JointEstimate> {
    let n = data.len();
    let d = data.dim();
    let third = n / 3;
    if third == 0 {
        return Err(Error::InvalidInput("joint estimation needs at least three samples".into()));
    }
    let eps_pairs = (2.0 * data.epsilon).min(0.49);
    let mut diffs = Array2::zeros((third, d));
    let mut diff_labels = data.labels.as_ref().map(|_| Vec::with_capacity(third));
    for i in 0..third {
        let row = (&data.x.row(i) - &data.x.row(third + i)) / std::f64::consts::SQRT_2;
        diffs.row_mut(i).assign(&row);
        if let (Some(out), Some(labels)) = (diff_labels.as_mut(), data.labels.as_ref()) {
            let good = labels[i] == Label::Good && labels[third + i] == Label::Good;
            out.push(if good { Label::Good } else { Label::Bad });
        }
    }
    let diff_data = Dataset { x: diffs, y: None, labels: diff_labels, epsilon: eps_pairs, seed: data.seed };
    let cov_model = ModelAdapter::covariance(Array2::zeros((d, d)), config.cov_sparsity)?;
    let covariance = estimate_functional(&diff_data, &cov_model, &config.estimator)?;
    let sigma_raw = cov_model.covariance_from_theta(covariance.theta_hat.view())?;
    let (inv_sqrt, sqrt, regularized) = inv_sqrt_psd(sigma_raw.view(), 1e-6)?;
    let sigma_hat = sqrt.dot(&sqrt);

    let rows: Vec<usize> = (2 * third..n).collect();
    let mut batch = data.select(&rows);
    batch.x = batch.x.dot(&inv_sqrt);
    let mean_model = ModelAdapter::mean(vec![0.0; d], config.mean_sparsity)?;
    let mean = estimate_functional(&batch, &mean_model, &config.estimator)?;
    let mu_hat = sqrt.dot(&mean.theta_hat);
    Ok(JointEstimate { mu_hat, sigma_hat, regularized, covariance, mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cholesky;
    use ndarray::array;

    #[test]
    fn helmert_basis_is_orthonormal_and_sum_zero() {
        for m in [2, 3, 7] {
            let b = SumZeroBasis { m }.to_dense();
            let gram = b.t().dot(&b);
            for i in 0..m - 1 {
                for j in 0..m - 1 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((gram[[i, j]] - want).abs() < 1e-14);
                }
                assert!(b.column(i).sum().abs() < 1e-14);
            }
            let a = Array1::from_iter((0..m).map(|i| (i as f64 * 1.3).sin()));
            let bt = SumZeroBasis { m }.apply_transpose(a.view());
            assert!((&bt - &b.t().dot(&a)).iter().all(|x| x.abs() < 1e-14));
        }
    }

    #[test]
    fn polytope_check_examples() {
        let p = WeightPolytope::new(4, 0.1).unwrap();
        assert_eq!(polytope_check(Array1::from_elem(4, 0.25).view(), &p).unwrap(), PolytopeCheck::Feasible);
        let PolytopeCheck::ViolatedCut { a, b } =
            polytope_check(array![-0.1, 0.35, 0.35, 0.4].view(), &p).unwrap()
        else {
            panic!("expected a cut")
        };
        assert_eq!(a, array![-1.0, 0.0, 0.0, 0.0]);
        assert_eq!(b, 0.0);
        let w0 = p.cap + 0.05;
        let rest = (1.0 - w0) / 3.0;
        let PolytopeCheck::ViolatedCut { a, b } = polytope_check(array![w0, rest, rest, rest].view(), &p).unwrap()
        else {
            panic!("expected a cut")
        };
        assert_eq!(a, array![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(b, -p.cap);
    }

    #[test]
    fn central_cut_example() {
        let s = ellipsoid_update(&EllipsoidState::ball(2, 1.0), array![1.0, 0.0].view()).unwrap();
        assert!((s.center[0] + 1.0 / 3.0).abs() < 1e-15 && s.center[1] == 0.0);
        let want = array![[4.0 / 9.0, 0.0], [0.0, 4.0 / 3.0]];
        assert!((&s.shape - &want).iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn interval_is_halved_in_one_dimension() {
        let mut s = EllipsoidState::ball(1, 2.0);
        s.cut(array![3.0].view(), 0.0).unwrap();
        assert!((s.center[0] + 1.0).abs() < 1e-15);
        assert!((s.shape[[0, 0]] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tracked_log_det_matches_cholesky() {
        let mut s = EllipsoidState::ball(4, 1.0);
        for k in 0..12 {
            let g = Array1::from_iter((0..4).map(|i| ((i * 3 + k * 5) as f64).cos()));
            s.cut(g.view(), if k % 3 == 0 { 0.2 } else { 0.0 }).unwrap();
        }
        let l = cholesky(s.shape.view()).unwrap();
        let exact: f64 = (0..4).map(|i| 2.0 * l[[i, i]].ln()).sum();
        assert!((exact - s.log_det).abs() < 1e-9);
        let tr: f64 = (0..4).map(|i| s.shape[[i, i]]).sum();
        assert!((tr - s.trace).abs() < 1e-12 * tr.max(1.0));
    }

    #[test]
    fn projection_lands_in_polytope() {
        let p = WeightPolytope::new(5, 0.2).unwrap();
        let w = p.project(array![0.9, -0.3, 0.2, 0.1, 0.1].view());
        assert!(WeightVector { w }.is_feasible(&p, 1e-12));
    }

    #[test]
    fn circumradius_matches_vertex_distance() {
        let p = WeightPolytope::new(10, 0.1).unwrap();
        // cap = 1/8: eight coordinates at the cap and two at zero.
        let mut v = Array1::<f64>::zeros(10);
        v.slice_mut(ndarray::s![..8]).fill(0.125);
        let d = (&v - 0.1).mapv(|x| x * x).sum().sqrt();
        assert!((p.circumradius() - d).abs() < 1e-14);
    }

    #[test]
    fn ideal_weights() {
        let w = WeightVector::ideal(&[Label::Good, Label::Bad, Label::Good]).unwrap();
        assert_eq!(w.w, array![0.5, 0.0, 0.5]);
        assert!(WeightVector::ideal(&[Label::Bad]).is_err());
    }
}
