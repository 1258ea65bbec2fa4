//! Statistical models exposed as interchangeable adapters: functional map,
//! covariance map, regularity constants, clean samplers and pruning rules.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{cholesky, sym_eigen};

pub const DEFAULT_C_PRUNE: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Mean,
    Covariance,
    LinearRegression,
    Glm,
    Logistic,
}

impl ModelKind {
    pub fn has_response(self) -> bool {
        !matches!(self, ModelKind::Mean | ModelKind::Covariance)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mean => "mean",
            ModelKind::Covariance => "covariance",
            ModelKind::LinearRegression => "linear_regression",
            ModelKind::Glm => "glm",
            ModelKind::Logistic => "logistic",
        }
    }
}

/// Accuracy parameter used to scale the acceptance threshold of the oracle.
pub fn accuracy_delta(kind: ModelKind, epsilon: f64) -> f64 {
    if epsilon <= 0.0 {
        return 0.0;
    }
    let l = (1.0 / epsilon).ln();
    match kind {
        ModelKind::Mean => epsilon * l.sqrt(),
        ModelKind::Covariance | ModelKind::LinearRegression | ModelKind::Glm => epsilon * l * l,
        ModelKind::Logistic => epsilon * l,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Identity,
    Tanh,
    Sigmoid,
}

impl Link {
    pub fn value(self, t: f64) -> f64 {
        match self {
            Link::Identity => t,
            Link::Tanh => t.tanh(),
            Link::Sigmoid => 1.0 / (1.0 + (-t).exp()),
        }
    }

    pub fn d1(self, t: f64) -> f64 {
        match self {
            Link::Identity => 1.0,
            Link::Tanh => 1.0 - t.tanh().powi(2),
            Link::Sigmoid => {
                let u = self.value(t);
                u * (1.0 - u)
            }
        }
    }

    pub fn d2(self, t: f64) -> f64 {
        match self {
            Link::Identity => 0.0,
            Link::Tanh => {
                let u = t.tanh();
                -2.0 * u * (1.0 - u * u)
            }
            Link::Sigmoid => {
                let u = self.value(t);
                u * (1.0 - u) * (1.0 - 2.0 * u)
            }
        }
    }

    /// Bound on |u(0)|.
    pub fn c1(self) -> f64 {
        self.value(0.0).abs()
    }

    /// Lipschitz constant of u.
    pub fn c2(self) -> f64 {
        match self {
            Link::Identity | Link::Tanh => 1.0,
            Link::Sigmoid => 0.25,
        }
    }
}

/// Nodes and weights for expectations under the standard normal
/// (probabilists' Gauss–Hermite rule via Golub–Welsch).
pub fn gauss_hermite(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut j = Array2::<f64>::zeros((order, order));
    for k in 0..order.saturating_sub(1) {
        let b = ((k + 1) as f64).sqrt();
        j[[k, k + 1]] = b;
        j[[k + 1, k]] = b;
    }
    let eig = sym_eigen(j.view())?;
    let nodes = eig.values.to_vec();
    let weights = (0..order).map(|i| eig.vectors[[0, i]].powi(2)).collect();
    Ok((nodes, weights))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanParams {
    pub mu: Vec<f64>,
}

/// Sparse perturbation of the identity covariance: Σ = I + S.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceParams {
    pub s_mat: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionParams {
    pub beta: Vec<f64>,
    pub rho: f64,
    pub noise_sd: f64,
}

/// Parameters shared by the generalized linear and logistic-type models.
///
/// `slope` is E[u'(⟨x, β⟩)], the divisor that makes E[g] = β. `kappa1` and
/// `kappa2` are the coefficients of cov(g) = κ₁ I + κ₂ ββᵀ for the
/// normalized functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmParams {
    pub beta: Vec<f64>,
    pub rho: f64,
    pub link: Link,
    pub slope: f64,
    pub kappa1: f64,
    pub kappa2: f64,
}

impl GlmParams {
    /// Computes the moment constants of y = u(⟨x, β⟩) + N(0, 1) by quadrature.
    pub fn glm(beta: Vec<f64>, rho: f64, link: Link) -> Result<Self> {
        let m = LinkMoments::compute(link, norm(&beta))?;
        let slope = m.d1;
        if slope.abs() < 1e-12 {
            return Err(Error::DegenerateModel("E[u'] vanishes; the functional is undefined".into()));
        }
        let a = 1.0 + m.u2;
        let b = 2.0 * m.d1_sq + 2.0 * m.u_d2 - slope * slope;
        Ok(GlmParams { beta, rho, link, slope, kappa1: a / (slope * slope), kappa2: b / (slope * slope) })
    }

    /// Computes the moment constants of y ~ Bernoulli(u(⟨x, β⟩)).
    pub fn logistic(beta: Vec<f64>, rho: f64, link: Link) -> Result<Self> {
        let m = LinkMoments::compute(link, norm(&beta))?;
        let slope = m.d1;
        if slope.abs() < 1e-12 {
            return Err(Error::DegenerateModel("E[u'] vanishes; the functional is undefined".into()));
        }
        let a = m.u;
        let b = m.d2 - slope * slope;
        Ok(GlmParams { beta, rho, link, slope, kappa1: a / (slope * slope), kappa2: b / (slope * slope) })
    }
}

struct LinkMoments {
    u: f64,
    u2: f64,
    d1: f64,
    d1_sq: f64,
    d2: f64,
    u_d2: f64,
}

impl LinkMoments {
    fn compute(link: Link, scale: f64) -> Result<Self> {
        let (nodes, weights) = gauss_hermite(80)?;
        let mut m = LinkMoments { u: 0.0, u2: 0.0, d1: 0.0, d1_sq: 0.0, d2: 0.0, u_d2: 0.0 };
        for (t, w) in nodes.iter().zip(&weights) {
            let t = scale * t;
            let (u, d1, d2) = (link.value(t), link.d1(t), link.d2(t));
            m.u += w * u;
            m.u2 += w * u * u;
            m.d1 += w * d1;
            m.d1_sq += w * d1 * d1;
            m.d2 += w * d2;
            m.u_d2 += w * u * d2;
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    Mean(MeanParams),
    Covariance(CovarianceParams),
    LinearRegression(RegressionParams),
    Glm(GlmParams),
    Logistic(GlmParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Good,
    Bad,
}

/// A sample of raw observations. Response models store `y`; the hidden
/// labels are only consulted by diagnostics and baselines that are told the
/// truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Option<Array1<f64>>,
    pub labels: Option<Vec<Label>>,
    pub epsilon: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub x: ArrayView1<'a, f64>,
    pub y: Option<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn sample(&self, i: usize) -> Sample<'_> {
        Sample { x: self.x.row(i), y: self.y.as_ref().map(|y| y[i]) }
    }

    /// Keeps the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), rows),
            y: self.y.as_ref().map(|y| y.select(Axis(0), rows)),
            labels: self.labels.as_ref().map(|l| rows.iter().map(|&i| l[i]).collect()),
            epsilon: self.epsilon,
            seed: self.seed,
        }
    }

    pub fn good_indices(&self) -> Option<Vec<usize>> {
        self.labels
            .as_ref()
            .map(|l| l.iter().enumerate().filter(|(_, &lab)| lab == Label::Good).map(|(i, _)| i).collect())
    }

    pub fn bad_count(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| l.iter().filter(|&&lab| lab == Label::Bad).count())
    }
}

#[derive(Debug, Clone)]
pub struct Pruned {
    pub dataset: Dataset,
    /// Indices into the input dataset of the surviving samples.
    pub kept: Vec<usize>,
    pub radius_d: f64,
}

#[derive(Debug, Clone)]
pub struct ModelAdapter {
    pub dim: usize,
    pub functional_dim: usize,
    pub sparsity: usize,
    pub lipschitz_f: f64,
    pub cov_bound: f64,
    pub radius_d: Option<f64>,
    pub c_prune: f64,
    pub params: ModelParams,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn nnz(v: impl IntoIterator<Item = f64>) -> usize {
    v.into_iter().filter(|x| *x != 0.0).count()
}

impl ModelAdapter {
    pub fn new(params: ModelParams, sparsity: usize) -> Result<Self> {
        let (dim, functional_dim) = match &params {
            ModelParams::Mean(p) => (p.mu.len(), p.mu.len()),
            ModelParams::Covariance(p) => (p.s_mat.nrows(), p.s_mat.nrows() * p.s_mat.nrows()),
            ModelParams::LinearRegression(p) => (p.beta.len(), p.beta.len()),
            ModelParams::Glm(p) | ModelParams::Logistic(p) => (p.beta.len(), p.beta.len()),
        };
        if dim == 0 {
            return Err(Error::ModelConfig("dimension must be positive".into()));
        }
        if sparsity == 0 || sparsity > functional_dim {
            return Err(Error::ModelConfig(format!("sparsity {sparsity} outside 1..={functional_dim}")));
        }
        match &params {
            ModelParams::Mean(p) => {
                if nnz(p.mu.iter().copied()) > sparsity {
                    return Err(Error::ModelConfig("mean has more than s nonzero entries".into()));
                }
            }
            ModelParams::Covariance(p) => {
                let s = &p.s_mat;
                if s.ncols() != dim {
                    return Err(Error::ModelConfig("S must be square".into()));
                }
                for i in 0..dim {
                    if s[[i, i]] != 0.0 {
                        return Err(Error::ModelConfig(
                            "S must have a zero diagonal: the functional only sees off-diagonal entries".into(),
                        ));
                    }
                    for j in 0..dim {
                        if s[[i, j]] != s[[j, i]] {
                            return Err(Error::ModelConfig("S must be symmetric".into()));
                        }
                    }
                }
                if nnz(s.iter().copied()) > sparsity {
                    return Err(Error::ModelConfig("S has more than s nonzero entries".into()));
                }
                let sigma = Array2::<f64>::eye(dim) + s;
                if cholesky(sigma.view()).is_none() {
                    return Err(Error::ModelConfig("I + S is not positive definite".into()));
                }
            }
            ModelParams::LinearRegression(p) => {
                check_beta(&p.beta, p.rho, sparsity)?;
                if !(p.noise_sd > 0.0) {
                    return Err(Error::ModelConfig("noise_sd must be positive".into()));
                }
            }
            ModelParams::Glm(p) | ModelParams::Logistic(p) => {
                check_beta(&p.beta, p.rho, sparsity)?;
                if !(p.kappa1 > 0.0) || !p.kappa2.is_finite() {
                    return Err(Error::ModelConfig("kappa1 must be positive and kappa2 finite".into()));
                }
                if p.slope.abs() < 1e-12 {
                    return Err(Error::DegenerateModel("E[u'] is zero".into()));
                }
            }
        }
        let mut adapter = ModelAdapter {
            dim,
            functional_dim,
            sparsity,
            lipschitz_f: 0.0,
            cov_bound: 1.0,
            radius_d: None,
            c_prune: DEFAULT_C_PRUNE,
            params,
        };
        let (lf, lc) = adapter.regularity_constants();
        adapter.lipschitz_f = lf;
        adapter.cov_bound = lc;
        Ok(adapter)
    }

    pub fn mean(mu: Vec<f64>, sparsity: usize) -> Result<Self> {
        Self::new(ModelParams::Mean(MeanParams { mu }), sparsity)
    }

    pub fn covariance(s_mat: Array2<f64>, sparsity: usize) -> Result<Self> {
        Self::new(ModelParams::Covariance(CovarianceParams { s_mat }), sparsity)
    }

    pub fn regression(beta: Vec<f64>, rho: f64, sparsity: usize) -> Result<Self> {
        Self::new(ModelParams::LinearRegression(RegressionParams { beta, rho, noise_sd: 1.0 }), sparsity)
    }

    pub fn glm(beta: Vec<f64>, rho: f64, link: Link, sparsity: usize) -> Result<Self> {
        Self::new(ModelParams::Glm(GlmParams::glm(beta, rho, link)?), sparsity)
    }

    pub fn logistic(beta: Vec<f64>, rho: f64, link: Link, sparsity: usize) -> Result<Self> {
        Self::new(ModelParams::Logistic(GlmParams::logistic(beta, rho, link)?), sparsity)
    }

    pub fn with_c_prune(mut self, c_prune: f64) -> Self {
        self.c_prune = c_prune;
        self
    }

    pub fn with_radius_d(mut self, radius: f64) -> Self {
        self.radius_d = Some(radius);
        self
    }

    pub fn kind(&self) -> ModelKind {
        match self.params {
            ModelParams::Mean(_) => ModelKind::Mean,
            ModelParams::Covariance(_) => ModelKind::Covariance,
            ModelParams::LinearRegression(_) => ModelKind::LinearRegression,
            ModelParams::Glm(_) => ModelKind::Glm,
            ModelParams::Logistic(_) => ModelKind::Logistic,
        }
    }

    /// The population value of the functional.
    pub fn true_theta(&self) -> Array1<f64> {
        match &self.params {
            ModelParams::Mean(p) => Array1::from(p.mu.clone()),
            ModelParams::Covariance(p) => Array1::from_iter(p.s_mat.iter().copied()),
            ModelParams::LinearRegression(p) => Array1::from(p.beta.clone()),
            ModelParams::Glm(p) | ModelParams::Logistic(p) => Array1::from(p.beta.clone()),
        }
    }

    /// Norm bound on the parameter used by the regularity constants.
    pub fn norm_bound(&self) -> f64 {
        match &self.params {
            ModelParams::Mean(p) => norm(&p.mu),
            ModelParams::Covariance(p) => p.s_mat.iter().map(|x| x * x).sum::<f64>().sqrt(),
            ModelParams::LinearRegression(p) => p.rho,
            ModelParams::Glm(p) | ModelParams::Logistic(p) => p.rho,
        }
    }

    /// (L_F, L_cov): Lipschitz constant of the covariance map around the true
    /// parameter and a bound on the operator norm of cov(g).
    pub fn regularity_constants(&self) -> (f64, f64) {
        match &self.params {
            ModelParams::Mean(_) => (0.0, 1.0),
            ModelParams::Covariance(p) => {
                let r = p.s_mat.iter().map(|x| x * x).sum::<f64>().sqrt();
                (4.0 * (1.0 + r), 2.0 * (1.0 + r).powi(2))
            }
            ModelParams::LinearRegression(p) => (4.0 * p.rho, 2.0 * p.rho * p.rho + 1.0),
            ModelParams::Glm(p) | ModelParams::Logistic(p) => {
                (2.0 * p.kappa2.abs() * p.rho, p.kappa1 + p.kappa2.max(0.0) * p.rho * p.rho)
            }
        }
    }

    fn check_sample(&self, sample: &Sample<'_>) -> Result<()> {
        check_len(self.dim, sample.x.len())?;
        if self.kind().has_response() && sample.y.is_none() {
            return Err(Error::InvalidInput(format!("{} model needs a response", self.kind().name())));
        }
        Ok(())
    }

    pub fn apply_g(&self, sample: Sample<'_>) -> Result<Array1<f64>> {
        self.check_sample(&sample)?;
        let mut out = Array1::zeros(self.functional_dim);
        self.write_g(sample, out.view_mut().into_slice().expect("contiguous"));
        Ok(out)
    }

    fn write_g(&self, sample: Sample<'_>, out: &mut [f64]) {
        let x = sample.x;
        match &self.params {
            ModelParams::Mean(_) => {
                for (o, v) in out.iter_mut().zip(x.iter()) {
                    *o = *v;
                }
            }
            ModelParams::Covariance(_) => {
                let d = self.dim;
                for i in 0..d {
                    for j in 0..d {
                        out[i * d + j] = if i == j { 0.0 } else { x[i] * x[j] };
                    }
                }
            }
            ModelParams::LinearRegression(_) => {
                let y = sample.y.unwrap_or(0.0);
                for (o, v) in out.iter_mut().zip(x.iter()) {
                    *o = y * v;
                }
            }
            ModelParams::Glm(p) | ModelParams::Logistic(p) => {
                let y = sample.y.unwrap_or(0.0) / p.slope;
                for (o, v) in out.iter_mut().zip(x.iter()) {
                    *o = y * v;
                }
            }
        }
    }

    /// Functional points g(z_i) as the rows of an m × d_g matrix.
    pub fn functional_points(&self, data: &Dataset) -> Result<Array2<f64>> {
        check_len(self.dim, data.dim())?;
        if self.kind().has_response() {
            match &data.y {
                Some(y) => check_len(data.len(), y.len())?,
                None => {
                    return Err(Error::InvalidInput(format!(
                        "{} model needs responses",
                        self.kind().name()
                    )))
                }
            }
        }
        let mut g = Array2::zeros((data.len(), self.functional_dim));
        for (i, mut row) in g.axis_iter_mut(Axis(0)).enumerate() {
            self.write_g(data.sample(i), row.as_slice_mut().expect("contiguous"));
        }
        Ok(g)
    }

    /// Covariance of g as a function of the functional's value.
    pub fn covariance_map(&self, theta: ArrayView1<f64>) -> Result<Array2<f64>> {
        check_len(self.functional_dim, theta.len())?;
        let dg = self.functional_dim;
        let out = match &self.params {
            ModelParams::Mean(_) => Array2::eye(dg),
            ModelParams::Covariance(_) => {
                let d = self.dim;
                let mut sigma = Array2::<f64>::eye(d);
                for i in 0..d {
                    for j in 0..d {
                        if i != j {
                            sigma[[i, j]] += 0.5 * (theta[i * d + j] + theta[j * d + i]);
                        }
                    }
                }
                let mut f = Array2::zeros((dg, dg));
                for i in 0..d {
                    for j in 0..d {
                        if i == j {
                            continue;
                        }
                        for k in 0..d {
                            for l in 0..d {
                                if k != l {
                                    f[[i * d + j, k * d + l]] =
                                        sigma[[i, k]] * sigma[[j, l]] + sigma[[i, l]] * sigma[[j, k]];
                                }
                            }
                        }
                    }
                }
                f
            }
            ModelParams::LinearRegression(_) => {
                let nb = theta.dot(&theta);
                let mut f = outer(theta, theta);
                for i in 0..dg {
                    f[[i, i]] += nb + 1.0;
                }
                f
            }
            ModelParams::Glm(p) | ModelParams::Logistic(p) => {
                let mut f = outer(theta, theta) * p.kappa2;
                for i in 0..dg {
                    f[[i, i]] += p.kappa1;
                }
                f
            }
        };
        Ok(out)
    }

    fn log_term(n: usize, tau: f64) -> f64 {
        (n as f64 / tau).ln().max(0.0)
    }

    /// Removes samples that are implausibly far from the rest under the
    /// clean model. The output keeps input order.
    pub fn prune(&self, data: &Dataset, tau_prune: f64) -> Result<Pruned> {
        if data.is_empty() {
            return Err(Error::InvalidInput("cannot prune an empty dataset".into()));
        }
        if !(tau_prune > 0.0 && tau_prune < 1.0) {
            return Err(Error::InvalidInput(format!("tau_prune must lie in (0, 1), got {tau_prune}")));
        }
        check_len(self.dim, data.dim())?;
        let n = data.len();
        let d = self.dim as f64;
        let lt = Self::log_term(n, tau_prune);
        let c = self.c_prune;
        let row_norms: Vec<f64> = data.x.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
        let response = |i: usize| data.y.as_ref().map(|y| y[i]).unwrap_or(0.0);
        let (kept, radius): (Vec<usize>, f64) = match &self.params {
            ModelParams::Mean(_) => {
                let thr = c * (d * lt).sqrt();
                let sq: Vec<f64> = row_norms.iter().map(|r| r * r).collect();
                let gram = data.x.dot(&data.x.t());
                let limit = 2.0 * data.epsilon * n as f64;
                let thr2 = thr * thr;
                let kept = (0..n)
                    .filter(|&i| {
                        let far = (0..n)
                            .filter(|&j| j != i && sq[i] + sq[j] - 2.0 * gram[[i, j]] >= thr2)
                            .count();
                        far as f64 <= limit
                    })
                    .collect();
                (kept, thr)
            }
            ModelParams::Covariance(_) => {
                let thr = c * d * lt.sqrt();
                ((0..n).filter(|&i| row_norms[i] < thr).collect(), thr)
            }
            ModelParams::LinearRegression(p) => {
                let tx = c * d * lt.sqrt();
                let ty = c * (p.rho * p.rho + 1.0) * lt.sqrt();
                ((0..n).filter(|&i| row_norms[i] < tx && response(i).abs() < ty).collect(), tx * ty)
            }
            ModelParams::Glm(p) => {
                let tx = c * d * lt.sqrt();
                let ty = p.link.c1() + c * (p.rho * p.rho + 1.0) * lt.sqrt();
                let radius = tx * ty / p.slope.abs();
                ((0..n).filter(|&i| row_norms[i] < tx && response(i).abs() < ty).collect(), radius)
            }
            ModelParams::Logistic(p) => {
                let thr = c * p.slope.abs() * (d * lt).sqrt();
                let radius = thr / p.slope.abs();
                ((0..n).filter(|&i| response(i).abs() * row_norms[i] < thr).collect(), radius)
            }
        };
        if kept.is_empty() {
            return Err(Error::Estimation("pruning removed every sample".into()));
        }
        Ok(Pruned { dataset: data.select(&kept), kept, radius_d: radius })
    }

    /// Draws `n` clean observations from the model using `rng`.
    pub fn draw_clean(&self, rng: &mut ChaCha8Rng, n: usize) -> Result<(Array2<f64>, Option<Array1<f64>>)> {
        let d = self.dim;
        let mut x = Array2::<f64>::zeros((n, d));
        for v in x.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let y = match &self.params {
            ModelParams::Mean(p) => {
                let mu = ArrayView1::from(&p.mu[..]);
                x += &mu;
                None
            }
            ModelParams::Covariance(p) => {
                let sigma = Array2::<f64>::eye(d) + &p.s_mat;
                let l = cholesky(sigma.view())
                    .ok_or_else(|| Error::ModelConfig("I + S is not positive definite".into()))?;
                x = x.dot(&l.t());
                None
            }
            ModelParams::LinearRegression(p) => {
                let beta = ArrayView1::from(&p.beta[..]);
                let lin = x.dot(&beta);
                Some(Array1::from_iter(lin.iter().map(|t| t + p.noise_sd * rng.sample::<f64, _>(StandardNormal))))
            }
            ModelParams::Glm(p) => {
                let beta = ArrayView1::from(&p.beta[..]);
                let lin = x.dot(&beta);
                Some(Array1::from_iter(
                    lin.iter().map(|&t| p.link.value(t) + rng.sample::<f64, _>(StandardNormal)),
                ))
            }
            ModelParams::Logistic(p) => {
                let beta = ArrayView1::from(&p.beta[..]);
                let lin = x.dot(&beta);
                let mut y = Array1::zeros(n);
                for (i, &t) in lin.iter().enumerate() {
                    let u = p.link.value(t);
                    if !(-1e-9..=1.0 + 1e-9).contains(&u) {
                        return Err(Error::ModelConfig(format!(
                            "link value {u} at {t} is not a probability"
                        )));
                    }
                    let prob = u.clamp(0.0, 1.0);
                    y[i] = if rng.random::<f64>() < prob { 1.0 } else { 0.0 };
                }
                Some(y)
            }
        };
        Ok((x, y))
    }

    pub fn sample_clean(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::InvalidInput("sample size must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y) = self.draw_clean(&mut rng, n)?;
        Ok(Dataset { x, y, labels: Some(vec![Label::Good; n]), epsilon: 0.0, seed })
    }

    /// Builds a Σ̂ = I + sym(reshape θ) estimate from a covariance-model
    /// functional vector.
    pub fn covariance_from_theta(&self, theta: ArrayView1<f64>) -> Result<Array2<f64>> {
        let d = self.dim;
        check_len(d * d, theta.len())?;
        let mut sigma = Array2::<f64>::eye(d);
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    sigma[[i, j]] = 0.5 * (theta[i * d + j] + theta[j * d + i]);
                }
            }
        }
        Ok(sigma)
    }
}

fn check_beta(beta: &[f64], rho: f64, sparsity: usize) -> Result<()> {
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::ModelConfig("rho must be finite and nonnegative".into()));
    }
    if norm(beta) > rho * (1.0 + 1e-12) {
        return Err(Error::ModelConfig(format!("‖beta‖₂ = {} exceeds rho = {rho}", norm(beta))));
    }
    if nnz(beta.iter().copied()) > sparsity {
        return Err(Error::ModelConfig("beta has more than s nonzero entries".into()));
    }
    Ok(())
}

pub(crate) fn outer(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let col = a.insert_axis(Axis(1));
    let row = b.insert_axis(Axis(0));
    &col * &row
}
