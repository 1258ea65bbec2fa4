//! Independent reference computations: brute-force sparse norms, Monte Carlo
//! checks of the covariance maps, and a checker for the deterministic
//! conditions under which the estimator is guaranteed to work.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ellipsoid::{WeightPolytope, WeightVector};
use crate::error::{Error, Result};
use crate::linalg::jacobi_eigen;
use crate::model::{Dataset, ModelAdapter};
use crate::thresholding::top_k;

pub const MAX_ENUM_DIM: usize = 20;
pub const MAX_ENUM_SUBSETS: u64 = 1_000_000;

fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc.saturating_mul((n - i) as u64) / (i as u64 + 1))
}

/// Calls `visit` on every k-subset of 0..p in lexicographic order.
pub fn for_each_subset(p: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    if k > p {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        visit(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] < p - k + i) else { return };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn enumeration_guard(p: usize, k: usize) -> Result<()> {
    let count = binomial(p, k);
    if p > MAX_ENUM_DIM || count > MAX_ENUM_SUBSETS {
        return Err(Error::EnumerationGuard(format!(
            "refusing to enumerate C({p}, {k}) = {count} subsets (limits: p ≤ {MAX_ENUM_DIM}, {MAX_ENUM_SUBSETS} subsets)"
        )));
    }
    Ok(())
}

/// Exact s-sparse operator norm by enumeration. Returns the largest
/// |eigenvalue| and the largest signed eigenvalue over all principal
/// submatrices of size at most s. Both are monotone in the subset by
/// interlacing, so subsets of size exactly min(s, p) suffice.
pub fn sparse_opnorm_exact(m: ArrayView2<f64>, s: usize) -> Result<(f64, f64)> {
    let p = m.nrows();
    if p == 0 || m.ncols() != p {
        return Err(Error::InvalidInput(format!("expected a nonempty square matrix, got {:?}", m.shape())));
    }
    if s == 0 {
        return Err(Error::InvalidInput("sparsity must be at least 1".into()));
    }
    let k = s.min(p);
    enumeration_guard(p, k)?;
    let mut best = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut failure = None;
    for_each_subset(p, k, |set| {
        let sub = m.select(Axis(0), set).select(Axis(1), set);
        match jacobi_eigen(sub.view(), 100) {
            Ok(eig) => {
                let lo = eig.values[0];
                let hi = eig.values[k - 1];
                best.0 = best.0.max(lo.abs().max(hi.abs()));
                best.1 = best.1.max(hi);
            }
            Err(e) => failure = Some(e),
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(best),
    }
}

/// max over |S| = s of ‖v_S‖₂ by enumeration.
pub fn sparse_restricted_l2_exact(v: ArrayView1<f64>, s: usize) -> Result<f64> {
    let p = v.len();
    let k = s.min(p);
    enumeration_guard(p, k)?;
    let mut best = 0.0f64;
    for_each_subset(p, k, |set| {
        best = best.max(set.iter().map(|&i| v[i] * v[i]).sum::<f64>().sqrt());
    });
    Ok(best)
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub samples: usize,
    pub theta_true: Vec<f64>,
    pub theta_empirical: Vec<f64>,
    /// max |empirical − true| over coordinates of the functional.
    pub mean_max_dev: f64,
    /// Largest coordinate deviation in units of its standard error.
    pub mean_max_z: f64,
    pub cov_max_dev: f64,
    pub cov_max_z: f64,
    /// Relative ℓ₂ error of the empirical functional; absolute when θ = 0.
    pub mean_rel_error: f64,
    /// ‖F̂ − F(θ)‖_op / ‖F(θ)‖_op.
    pub cov_rel_op_error: f64,
    /// max_i |F̂ᵢᵢ − F(θ)ᵢᵢ| / |F(θ)ᵢᵢ| over nonzero diagonal entries.
    pub diag_rel_error: f64,
    pub z_tolerance: f64,
    pub passes: bool,
}

/// Draws `n` clean samples and compares the empirical mean and covariance of
/// g against θ_g and F(θ_g). Second moments are centered at the true θ_g so
/// each entry is an unbiased average with a directly estimable standard
/// error; entries pass when they lie within `z_tolerance` standard errors.
pub fn monte_carlo_cov_check(model: &ModelAdapter, n: usize, seed: u64) -> Result<MomentReport> {
    const BATCH: usize = 10_000;
    const Z_TOL: f64 = 5.0;
    if n < 10_000 {
        return Err(Error::InvalidInput(format!("Monte Carlo check needs at least 10^4 samples, got {n}")));
    }
    let p = model.functional_dim;
    let theta = model.true_theta();
    let f_true = model.covariance_map(theta.view())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = Array1::<f64>::zeros(p);
    let mut sum_sq = Array1::<f64>::zeros(p);
    let mut cross = Array2::<f64>::zeros((p, p));
    let mut cross_sq = Array2::<f64>::zeros((p, p));
    let mut done = 0;
    while done < n {
        let b = BATCH.min(n - done);
        let (x, y) = model.draw_clean(&mut rng, b)?;
        let batch = Dataset { x, y, labels: None, epsilon: 0.0, seed };
        let g = model.functional_points(&batch)?;
        let dev = &g - &theta.view().insert_axis(Axis(0));
        sum += &dev.sum_axis(Axis(0));
        sum_sq += &dev.mapv(|v| v * v).sum_axis(Axis(0));
        cross += &dev.t().dot(&dev);
        let dev_sq = dev.mapv(|v| v * v);
        cross_sq += &dev_sq.t().dot(&dev_sq);
        done += b;
    }
    let nf = n as f64;
    let mean_dev = &sum / nf;
    let f_emp = &cross / nf;
    let mut mean_max_dev = 0.0f64;
    let mut mean_max_z = 0.0f64;
    for i in 0..p {
        let var = (sum_sq[i] / nf - mean_dev[i].powi(2)).max(0.0);
        let se = (var / nf).sqrt();
        mean_max_dev = mean_max_dev.max(mean_dev[i].abs());
        mean_max_z = mean_max_z.max(mean_dev[i].abs() / se.max(1e-300));
    }
    let mut cov_max_dev = 0.0f64;
    let mut cov_max_z = 0.0f64;
    for i in 0..p {
        for j in 0..p {
            let dev = (f_emp[[i, j]] - f_true[[i, j]]).abs();
            let var = (cross_sq[[i, j]] / nf - f_emp[[i, j]].powi(2)).max(0.0);
            let se = (var / nf).sqrt();
            cov_max_dev = cov_max_dev.max(dev);
            // A degenerate entry (zero variance) must match exactly.
            let z = if se > 0.0 { dev / se } else if dev > 1e-12 { f64::INFINITY } else { 0.0 };
            cov_max_z = cov_max_z.max(z);
        }
    }
    let theta_emp = &theta + &mean_dev;
    let theta_norm = theta.dot(&theta).sqrt();
    let err_norm = mean_dev.dot(&mean_dev).sqrt();
    let mean_rel_error = if theta_norm > 0.0 { err_norm / theta_norm } else { err_norm };
    let op = |a: ArrayView2<f64>| -> Result<f64> {
        let eig = jacobi_eigen(a, 100)?;
        Ok(eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs())))
    };
    let f_norm = op(f_true.view())?;
    let diff = &f_emp - &f_true;
    let cov_rel_op_error = if f_norm > 0.0 { op(diff.view())? / f_norm } else { op(diff.view())? };
    let diag_rel_error = (0..p)
        .filter(|&i| f_true[[i, i]].abs() > 1e-12)
        .map(|i| (f_emp[[i, i]] - f_true[[i, i]]).abs() / f_true[[i, i]].abs())
        .fold(0.0f64, f64::max);
    Ok(MomentReport {
        samples: n,
        theta_true: theta.to_vec(),
        theta_empirical: theta_emp.to_vec(),
        mean_max_dev,
        mean_max_z,
        cov_max_dev,
        cov_max_z,
        mean_rel_error,
        cov_rel_op_error,
        diag_rel_error,
        z_tolerance: Z_TOL,
        passes: mean_max_z <= Z_TOL && cov_max_z <= Z_TOL,
    })
}

/// Multipliers on the deterministic-condition thresholds. The mean
/// conditions are scaled by (L_F + √L_cov)·δ and the covariance conditions
/// by (L_F² + L_cov)·δ.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConditionConstants {
    pub mean: f64,
    pub cov: f64,
}

impl Default for ConditionConstants {
    fn default() -> Self {
        ConditionConstants { mean: 1.0, cov: 1.0 }
    }
}

/// Acceptance multiplier c_sep under which passing the conditions with
/// `constants` forces λ*(w*) ≤ c_sep·δ in the mean model (where L_F = 0 and
/// L_cov = 1). Every feasible H has ‖H‖₁,₁ ≤ s, so λ* ≤ s‖E(w*)‖∞, and E(w*)
/// differs from 𝓔(w*) by cross terms in Δ̃(w*) and θ̂ − θ. Hard thresholding
/// at 2s gives ‖θ̂ − θ‖∞ ≤ 2‖Δ̃(w*)‖∞, so the cross terms add at most
/// 8s‖Δ̃(w*)‖∞².
pub fn mean_completeness_c_sep(constants: ConditionConstants, delta: f64, s: usize) -> f64 {
    constants.cov + 8.0 * constants.mean * constants.mean * delta / s as f64
}

#[derive(Debug, Clone, Serialize)]
pub struct Measured {
    pub value: f64,
    pub threshold: f64,
}

impl Measured {
    fn new(value: f64, threshold: f64) -> Self {
        Measured { value, threshold }
    }

    pub fn ok(&self) -> bool {
        self.value <= self.threshold
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    /// |bad| ≤ 2εn.
    pub bad_count_ok: bool,
    /// ‖Δ̃(w*)‖∞ within threshold.
    pub linf_mean_ok: bool,
    /// max over sampled w of ‖P_s(Δ̃(wᵍ))‖₂ within threshold.
    pub sparse_l2_ok_samples: bool,
    /// ‖𝓔(w*)‖∞ within threshold.
    pub linf_cov_ok: bool,
    /// max over sampled w of the s-sparse operator norm of 𝓔(wᵍ) within threshold.
    pub sparse_op_ok_samples: bool,
    pub bad_count: Measured,
    pub linf_mean: Measured,
    pub sparse_l2: Measured,
    pub linf_cov: Measured,
    pub sparse_op: Measured,
    pub weight_samples: usize,
    pub spot_check_note: &'static str,
    pub w_good: Vec<f64>,
    /// Restriction wᵍ of the sampled weighting that maximized the sparse
    /// operator norm.
    pub w_g_restricted: Vec<f64>,
}

impl ConditionReport {
    pub fn passes(&self) -> bool {
        self.bad_count_ok && self.linf_mean_ok && self.sparse_l2_ok_samples && self.linf_cov_ok && self.sparse_op_ok_samples
    }
}

/// Σ wᵢ (gᵢ − θ)(gᵢ − θ)ᵀ − F(θ) at the true functional θ.
fn weighted_cov_error(w: ArrayView1<f64>, g: ArrayView2<f64>, theta: ArrayView1<f64>, f: &Array2<f64>) -> Array2<f64> {
    let dev = &g - &theta.insert_axis(Axis(0));
    let scaled = &dev * &w.insert_axis(Axis(1));
    scaled.t().dot(&dev) - f
}

/// Random point of the weight polytope: a uniform random convex combination
/// of three random vertices. A vertex puts the cap on ⌊1/cap⌋ random samples
/// and the leftover mass on one more.
fn sample_polytope_weights(polytope: &WeightPolytope, rng: &mut ChaCha8Rng) -> Array1<f64> {
    let m = polytope.m;
    let mut w = Array1::<f64>::zeros(m);
    let mix: Vec<f64> = {
        let raw: Vec<f64> = (0..3).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|r| r / total).collect()
    };
    let mut order: Vec<usize> = (0..m).collect();
    for coef in mix {
        order.shuffle(rng);
        let full = ((1.0 / polytope.cap).floor() as usize).min(m);
        for &i in &order[..full] {
            w[i] += coef * polytope.cap;
        }
        if full < m {
            w[order[full]] += coef * (1.0 - full as f64 * polytope.cap).max(0.0);
        }
    }
    w
}

/// Checks the deterministic conditions on a labelled dataset: the bad count,
/// ℓ∞ bounds at the ideal weights, and sparse bounds at the good-restricted
/// versions of `weight_samples` random feasible weightings. The last two are
/// quantified over the whole polytope, so sampling only spot-checks them.
pub fn check_conditions(
    data: &Dataset,
    model: &ModelAdapter,
    delta: f64,
    weight_samples: usize,
    constants: ConditionConstants,
    seed: u64,
) -> Result<ConditionReport> {
    let labels = data
        .labels
        .as_ref()
        .ok_or_else(|| Error::Config("condition checker needs hidden labels".into()))?;
    let n = data.len();
    let s = model.sparsity;
    let bad = data.bad_count().unwrap_or(0);
    let w_star = WeightVector::ideal(labels)?.w;
    let good = data.good_indices().unwrap_or_default();
    let g = model.functional_points(data)?;
    let theta = model.true_theta();
    let f = model.covariance_map(theta.view())?;
    let (lf, lcov) = (model.lipschitz_f, model.cov_bound);
    let mean_scale = constants.mean * (lf + lcov.sqrt()) * delta;
    let cov_scale = constants.cov * (lf * lf + lcov) * delta;

    let delta_star = g.t().dot(&w_star) - &theta;
    let linf_mean = delta_star.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let e_star = weighted_cov_error(w_star.view(), g.view(), theta.view(), &f);
    let linf_cov = e_star.iter().fold(0.0f64, |a, v| a.max(v.abs()));

    let polytope = WeightPolytope::new(n, data.epsilon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_l2 = 0.0f64;
    let mut worst_op = 0.0f64;
    let mut worst_w = w_star.clone();
    for _ in 0..weight_samples {
        let w = sample_polytope_weights(&polytope, &mut rng);
        let mut wg = Array1::<f64>::zeros(n);
        let mass: f64 = good.iter().map(|&i| w[i]).sum();
        if mass <= 0.0 {
            continue;
        }
        for &i in &good {
            wg[i] = w[i] / mass;
        }
        let dev = g.t().dot(&wg) - &theta;
        worst_l2 = worst_l2.max(top_k(dev.view(), s).norm());
        let e = weighted_cov_error(wg.view(), g.view(), theta.view(), &f);
        let (op, _) = sparse_opnorm_exact(e.view(), s)?;
        if op >= worst_op {
            worst_op = op;
            worst_w = wg;
        }
    }

    let bad_count = Measured::new(bad as f64, 2.0 * data.epsilon * n as f64);
    let linf_mean = Measured::new(linf_mean, mean_scale / s as f64);
    let sparse_l2 = Measured::new(worst_l2, mean_scale);
    let linf_cov = Measured::new(linf_cov, cov_scale / s as f64);
    let sparse_op = Measured::new(worst_op, cov_scale);
    Ok(ConditionReport {
        bad_count_ok: bad_count.ok(),
        linf_mean_ok: linf_mean.ok(),
        sparse_l2_ok_samples: sparse_l2.ok(),
        linf_cov_ok: linf_cov.ok(),
        sparse_op_ok_samples: sparse_op.ok(),
        bad_count,
        linf_mean,
        sparse_l2,
        linf_cov,
        sparse_op,
        weight_samples,
        spot_check_note: "sparse conditions hold for all feasible weights in theory; only sampled weightings were checked",
        w_good: w_star.to_vec(),
        w_g_restricted: worst_w.to_vec(),
    })
}
