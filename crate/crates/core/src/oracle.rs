//! Separation oracle over sample weights: accept a weighting whose induced
//! covariance looks clean on every sparse direction, or return a hyperplane
//! that separates it from the ideal weights.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::model::{accuracy_delta, ModelAdapter};
use crate::spca::{SpcaOptions, SpcaProblem, SpcaSolver};
use crate::thresholding::top_k;

#[derive(Debug, Clone, Serialize)]
pub struct OracleConfig {
    pub tau_sep: f64,
    pub sparsity: usize,
    pub spca_tol: f64,
    pub spca_max_iters: usize,
}

impl OracleConfig {
    /// Threshold c_sep·(L_F² + L_cov)·δ(ε) for the given model.
    pub fn for_model(model: &ModelAdapter, epsilon: f64, c_sep: f64) -> Self {
        let delta = accuracy_delta(model.kind(), epsilon);
        let tau = c_sep * (model.lipschitz_f.powi(2) + model.cov_bound) * delta;
        OracleConfig { tau_sep: tau.max(1e-12), sparsity: model.sparsity, spca_tol: 1e-3, spca_max_iters: 2000 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_sep > 0.0) || self.sparsity == 0 || !(self.spca_tol > 0.0) || self.spca_max_iters == 0 {
            return Err(Error::Config(format!("invalid oracle configuration {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum OracleVerdict {
    Yes {
        lambda_star: f64,
        theta_hat: Array1<f64>,
        spca_iterations: usize,
    },
    Cut {
        coefficients: Array1<f64>,
        offset: f64,
        lambda_star: f64,
        theta_hat: Array1<f64>,
        spca_iterations: usize,
        /// False when the relaxation stopped before meeting its tolerance.
        converged: bool,
    },
}

impl OracleVerdict {
    pub fn is_yes(&self) -> bool {
        matches!(self, OracleVerdict::Yes { .. })
    }

    pub fn lambda_star(&self) -> f64 {
        match self {
            OracleVerdict::Yes { lambda_star, .. } | OracleVerdict::Cut { lambda_star, .. } => *lambda_star,
        }
    }

    pub fn theta_hat(&self) -> &Array1<f64> {
        match self {
            OracleVerdict::Yes { theta_hat, .. } | OracleVerdict::Cut { theta_hat, .. } => theta_hat,
        }
    }

    /// ℓ(w) = ⟨a, w⟩ + b for a cut; `None` for an acceptance.
    pub fn evaluate_cut(&self, w: ArrayView1<f64>) -> Option<f64> {
        match self {
            OracleVerdict::Cut { coefficients, offset, .. } => Some(coefficients.dot(&w) + offset),
            OracleVerdict::Yes { .. } => None,
        }
    }
}

/// Σ wᵢ g(zᵢ): the weighted functional estimate before thresholding.
pub fn weighted_functional(weights: ArrayView1<f64>, points: ArrayView2<f64>) -> Result<Array1<f64>> {
    check_len(points.nrows(), weights.len())?;
    Ok(points.t().dot(&weights))
}

/// Σᵢ wᵢ (g(zᵢ) − θ̂)(g(zᵢ) − θ̂)ᵀ − F(θ̂), exactly symmetric.
pub fn weighted_deviation_matrix(
    weights: ArrayView1<f64>,
    points: ArrayView2<f64>,
    model: &ModelAdapter,
    theta_hat: ArrayView1<f64>,
) -> Result<Array2<f64>> {
    check_len(points.nrows(), weights.len())?;
    check_len(model.functional_dim, points.ncols())?;
    check_len(model.functional_dim, theta_hat.len())?;
    let dev = &points - &theta_hat.insert_axis(Axis(0));
    let scaled = &dev * &weights.insert_axis(Axis(1));
    let mut e = scaled.t().dot(&dev);
    e -= &model.covariance_map(theta_hat)?;
    crate::linalg::symmetrize(&mut e);
    Ok(e)
}

/// Oracle bound to one set of functional points. It keeps the relaxation
/// solver between calls so consecutive queries warm-start.
#[derive(Debug, Clone)]
pub struct SeparationOracle<'a> {
    model: &'a ModelAdapter,
    points: ArrayView2<'a, f64>,
    pub config: OracleConfig,
    solver: SpcaSolver,
}

impl<'a> SeparationOracle<'a> {
    pub fn new(model: &'a ModelAdapter, points: ArrayView2<'a, f64>, config: OracleConfig) -> Result<Self> {
        config.validate()?;
        check_len(model.functional_dim, points.ncols())?;
        if points.nrows() == 0 {
            return Err(Error::InvalidInput("no functional points".into()));
        }
        let mut solver = SpcaSolver::new(SpcaOptions::default());
        solver.decision_threshold = Some(config.tau_sep);
        Ok(SeparationOracle { model, points, config, solver })
    }

    pub fn with_spca_options(mut self, options: SpcaOptions) -> Self {
        self.solver = SpcaSolver::new(options);
        self.solver.decision_threshold = Some(self.config.tau_sep);
        self
    }

    pub fn evaluate(&mut self, weights: ArrayView1<f64>) -> Result<OracleVerdict> {
        check_len(self.points.nrows(), weights.len())?;
        let total: f64 = weights.sum();
        if (total - 1.0).abs() > 1e-8 || weights.iter().any(|&w| w < -1e-8) {
            return Err(Error::InvalidInput(format!(
                "oracle queried at infeasible weights (sum {total}, min {})",
                weights.iter().fold(f64::INFINITY, |a, &b| a.min(b))
            )));
        }
        let theta_tilde = weighted_functional(weights, self.points)?;
        let theta_hat = top_k(theta_tilde.view(), 2 * self.config.sparsity).values;
        let e = weighted_deviation_matrix(weights, self.points, self.model, theta_hat.view())?;
        let problem = SpcaProblem::new(e, self.config.sparsity as f64, self.config.spca_tol, self.config.spca_max_iters)?;
        let sol = self.solver.solve(&problem)?;
        let lambda_star = sol.lambda_star;
        if sol.converged && lambda_star <= self.config.tau_sep {
            return Ok(OracleVerdict::Yes { lambda_star, theta_hat, spca_iterations: sol.iterations });
        }
        let h = &sol.h_star;
        let support: Vec<usize> = (0..h.nrows()).filter(|&i| h.row(i).iter().any(|&v| v != 0.0)).collect();
        let dev = self.points.select(Axis(1), &support) - &theta_hat.select(Axis(0), &support).insert_axis(Axis(0));
        let h_sub = h.select(Axis(0), &support).select(Axis(1), &support);
        let coefficients = (&dev.dot(&h_sub) * &dev).sum_axis(Axis(1));
        let f = self.model.covariance_map(theta_hat.view())?;
        let tr_fh: f64 = f.iter().zip(h.iter()).map(|(a, b)| a * b).sum();
        Ok(OracleVerdict::Cut {
            coefficients,
            offset: -tr_fh - lambda_star,
            lambda_star,
            theta_hat,
            spca_iterations: sol.iterations,
            converged: sol.converged,
        })
    }
}

/// One-shot oracle evaluation from a cold solver.
pub fn evaluate_oracle(
    weights: ArrayView1<f64>,
    points: ArrayView2<f64>,
    model: &ModelAdapter,
    config: &OracleConfig,
) -> Result<OracleVerdict> {
    SeparationOracle::new(model, points, config.clone())?.evaluate(weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn mean_model(d: usize) -> ModelAdapter {
        ModelAdapter::mean(vec![0.0; d], 1).unwrap()
    }

    #[test]
    fn deviation_matrix_examples() {
        let m = mean_model(2);
        let e = weighted_deviation_matrix(array![1.0].view(), array![[0.3, -0.2]].view(), &m, array![0.3, -0.2].view())
            .unwrap();
        assert_eq!(e, -Array2::<f64>::eye(2));
        let e = weighted_deviation_matrix(
            array![0.5, 0.5].view(),
            array![[1.0, 0.0], [-1.0, 0.0]].view(),
            &m,
            array![0.0, 0.0].view(),
        )
        .unwrap();
        assert_eq!(e, array![[0.0, 0.0], [0.0, -1.0]]);
    }

    #[test]
    fn zero_deviation_accepts() {
        // Four points ±e₁, ±e₂ with equal weights: the weighted scatter is
        // I/2 and θ̂ = 0, so E = -I/2 and λ* < 0.
        let m = mean_model(2);
        let pts = array![[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]];
        let cfg = OracleConfig { tau_sep: 0.1, sparsity: 1, spca_tol: 1e-6, spca_max_iters: 5000 };
        let v = evaluate_oracle(Array1::from_elem(4, 0.25).view(), pts.view(), &m, &cfg).unwrap();
        assert!(v.is_yes());
        assert!(v.lambda_star() < 0.0);
    }

    #[test]
    fn rank_one_cut_coefficients() {
        let m = mean_model(3);
        let pts = array![[4.0, 0.0, 0.0], [0.0, 0.1, 0.0], [0.0, 0.0, -0.1], [0.1, 0.1, 0.0]];
        let w = Array1::from_elem(4, 0.25);
        let cfg = OracleConfig { tau_sep: 0.1, sparsity: 1, spca_tol: 1e-7, spca_max_iters: 20000 };
        let v = evaluate_oracle(w.view(), pts.view(), &m, &cfg).unwrap();
        let OracleVerdict::Cut { coefficients, theta_hat, .. } = &v else { panic!("expected a cut") };
        // s = 1 forces a diagonal solution, here e₁e₁ᵀ.
        for i in 0..4 {
            let dev = pts[[i, 0]] - theta_hat[0];
            assert!((coefficients[i] - dev * dev).abs() < 1e-4);
        }
        assert!(v.evaluate_cut(w.view()).unwrap().abs() < 2e-7);
    }

    #[test]
    fn rejects_infeasible_query() {
        let m = mean_model(2);
        let cfg = OracleConfig::for_model(&m, 0.1, 1.0);
        let pts = array![[1.0, 0.0], [0.0, 1.0]];
        assert!(evaluate_oracle(array![0.9, 0.3].view(), pts.view(), &m, &cfg).is_err());
    }
}
