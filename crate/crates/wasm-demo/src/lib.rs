//! Browser bindings for a few interactive operations. Every entry point takes
//! and returns a JSON string; the plain `run_*` functions hold the logic so it
//! can be exercised natively.

use ndarray::{Array1, Axis};
use robust_sparse::ellipsoid::{estimate_functional, EstimatorConfig};
use robust_sparse::model::{Label, ModelAdapter};
use robust_sparse::simulator::{sample_contaminated, ContaminationSpec, QFamily};
use robust_sparse::thresholding::{sparse_restricted_l2, top_k};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

fn default_calls() -> usize {
    60
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanDemoInput {
    pub d: usize,
    pub n: usize,
    pub s: usize,
    pub epsilon: f64,
    /// Distance of the outlier point mass from the clean mean, along e₁.
    pub outlier_distance: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_calls")]
    pub max_oracle_calls: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MeanDemoOutput {
    pub truth: Vec<f64>,
    pub robust: Vec<f64>,
    pub naive: Vec<f64>,
    pub robust_error: f64,
    pub naive_error: f64,
    /// Total weight the robust estimator left on outliers that survived pruning.
    pub outlier_weight: f64,
    pub outliers: usize,
    pub pruned: usize,
    pub oracle_calls: usize,
    pub terminated_by: &'static str,
}

fn demo_model(d: usize, s: usize) -> Result<ModelAdapter, String> {
    if s == 0 || s > d {
        return Err(format!("need 1 ≤ s ≤ d, got s = {s}, d = {d}"));
    }
    let step = d / s;
    let mut mu = vec![0.0; d];
    for k in 0..s {
        mu[k * step] = if k % 2 == 0 { 1.0 } else { -1.0 };
    }
    ModelAdapter::mean(mu, s).map_err(|e| e.to_string())
}

fn l2(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let d = a - b;
    d.dot(&d).sqrt()
}

fn mean_demo(input: &MeanDemoInput) -> Result<MeanDemoOutput, String> {
    if input.d > 400 || input.n > 2000 {
        return Err("the demo is limited to d ≤ 400 and n ≤ 2000".into());
    }
    let model = demo_model(input.d, input.s)?;
    let mut shift = vec![0.0; input.d];
    shift[0] = input.outlier_distance;
    let spec = ContaminationSpec {
        epsilon: input.epsilon,
        q_family: QFamily::PointMass { shift, response: None },
        seed: input.seed,
    };
    let data = sample_contaminated(&model, input.n, &spec).map_err(|e| e.to_string())?;
    let mut cfg = EstimatorConfig::default();
    cfg.ellipsoid.max_oracle_calls = input.max_oracle_calls.max(1);
    let bundle = estimate_functional(&data, &model, &cfg).map_err(|e| e.to_string())?;
    let truth = model.true_theta();
    let g = model.functional_points(&data).map_err(|e| e.to_string())?;
    let naive = top_k(g.mean_axis(Axis(0)).expect("n > 0").view(), 2 * input.s).values;
    let labels = data.labels.as_ref().expect("simulated data is labelled");
    let kept = bundle.kept.as_ref().expect("estimator reports retained samples");
    let outlier_weight =
        kept.iter().zip(bundle.weights.w.iter()).filter(|(&i, _)| labels[i] == Label::Bad).map(|(_, &w)| w).sum();
    Ok(MeanDemoOutput {
        robust_error: l2(&bundle.theta_hat, &truth),
        naive_error: l2(&naive, &truth),
        truth: truth.to_vec(),
        robust: bundle.theta_hat.to_vec(),
        naive: naive.to_vec(),
        outlier_weight,
        outliers: labels.iter().filter(|&&l| l == Label::Bad).count(),
        pruned: data.len() - kept.len(),
        oracle_calls: bundle.oracle_calls,
        terminated_by: bundle.terminated_by.name(),
    })
}

pub fn run_mean_demo(json: &str) -> Result<String, String> {
    let input: MeanDemoInput = serde_json::from_str(json).map_err(|e| e.to_string())?;
    serde_json::to_string(&mean_demo(&input)?).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdInput {
    pub values: Vec<f64>,
    pub k: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdOutput {
    pub thresholded: Vec<f64>,
    pub support: Vec<usize>,
    /// Largest ℓ₂ norm over k-subsets of the input.
    pub sparse_norm: f64,
}

pub fn run_threshold(json: &str) -> Result<String, String> {
    let input: ThresholdInput = serde_json::from_str(json).map_err(|e| e.to_string())?;
    if input.values.iter().any(|v| !v.is_finite()) {
        return Err("values must be finite".into());
    }
    let v = Array1::from(input.values);
    let t = top_k(v.view(), input.k);
    let out = ThresholdOutput {
        thresholded: t.values.to_vec(),
        support: t.support,
        sparse_norm: sparse_restricted_l2(v.view(), input.k),
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepInput {
    pub base: MeanDemoInput,
    pub epsilons: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub epsilon: f64,
    pub robust_error: f64,
    pub naive_error: f64,
}

/// Robust and naive errors over a list of contamination levels, all drawn
/// from the same seed.
pub fn run_epsilon_sweep(json: &str) -> Result<String, String> {
    let input: SweepInput = serde_json::from_str(json).map_err(|e| e.to_string())?;
    if input.epsilons.len() > 8 {
        return Err("at most 8 contamination levels".into());
    }
    let mut points = Vec::with_capacity(input.epsilons.len());
    for &epsilon in &input.epsilons {
        let out = mean_demo(&MeanDemoInput { epsilon, ..input.base.clone() })?;
        points.push(SweepPoint { epsilon, robust_error: out.robust_error, naive_error: out.naive_error });
    }
    serde_json::to_string(&points).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn mean_demo_json(input: &str) -> Result<String, JsValue> {
    run_mean_demo(input).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn threshold_json(input: &str) -> Result<String, JsValue> {
    run_threshold(input).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn epsilon_sweep_json(input: &str) -> Result<String, JsValue> {
    run_epsilon_sweep(input).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_round_trip() {
        let out = run_threshold(r#"{"values": [0.5, -3.0, 1.0, 2.0], "k": 2}"#).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["support"], serde_json::json!([1, 3]));
        assert_eq!(v["thresholded"], serde_json::json!([0.0, -3.0, 0.0, 2.0]));
    }

    #[test]
    fn mean_demo_beats_naive() {
        let out = run_mean_demo(r#"{"d": 10, "n": 200, "s": 2, "epsilon": 0.1, "outlier_distance": 8.0, "seed": 1}"#)
            .unwrap();
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!(v["robust_error"].as_f64().unwrap() < v["naive_error"].as_f64().unwrap());
    }

    #[test]
    fn sweep_rejects_unknown_fields() {
        assert!(run_epsilon_sweep(r#"{"base": {"d": 4, "n": 20, "s": 1, "epsilon": 0.1, "outlier_distance": 1, "x": 1}, "epsilons": []}"#).is_err());
    }
}
