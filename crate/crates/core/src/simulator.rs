//! ε-contaminated samples: clean draws mixed with an oblivious outlier
//! distribution, with hidden labels.

use std::io::{BufRead, Write};

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::cholesky;
use crate::model::{Dataset, Label, ModelAdapter, ModelParams};

/// Outlier distributions. Locations are relative to the clean mean (μ for
/// the mean model, 0 otherwise).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum QFamily {
    /// Every outlier sits at the same point; response models get the given
    /// response (default ‖shift‖₂).
    PointMass {
        shift: Vec<f64>,
        #[serde(default)]
        response: Option<f64>,
    },
    /// Gaussian cloud around `center` with standard deviation `spread`.
    ClusteredShift { center: Vec<f64>, spread: f64 },
    /// Clean distribution with covariance scaled by `factor`.
    VarianceInflation { factor: f64 },
    /// Covariates pushed along `direction` by `leverage` with the response
    /// negated (labels flipped for binary responses).
    ResponseFlip { direction: Vec<f64>, leverage: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationSpec {
    pub epsilon: f64,
    pub q_family: QFamily,
    pub seed: u64,
}

impl ContaminationSpec {
    pub fn validate(&self, model: &ModelAdapter) -> Result<()> {
        if !(0.0..0.5).contains(&self.epsilon) {
            return Err(Error::InvalidInput(format!("epsilon must lie in [0, 1/2), got {}", self.epsilon)));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match &self.q_family {
            QFamily::PointMass { shift, response } => {
                check_len(model.dim, shift.len())?;
                if !finite(shift) || response.is_some_and(|r| !r.is_finite()) {
                    return Err(Error::InvalidInput("point mass must be finite".into()));
                }
            }
            QFamily::ClusteredShift { center, spread } => {
                check_len(model.dim, center.len())?;
                if !finite(center) || !(*spread >= 0.0) || !spread.is_finite() {
                    return Err(Error::InvalidInput("cluster center and spread must be finite".into()));
                }
            }
            QFamily::VarianceInflation { factor } => {
                if !(*factor > 0.0) || !factor.is_finite() {
                    return Err(Error::InvalidInput("inflation factor must be positive".into()));
                }
            }
            QFamily::ResponseFlip { direction, leverage } => {
                check_len(model.dim, direction.len())?;
                if !model.kind().has_response() {
                    return Err(Error::ModelConfig(format!(
                        "response flip needs a response model, not {}",
                        model.kind().name()
                    )));
                }
                let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
                if !finite(direction) || !leverage.is_finite() || norm == 0.0 {
                    return Err(Error::InvalidInput("flip direction must be finite and nonzero".into()));
                }
            }
        }
        Ok(())
    }
}

fn clean_center(model: &ModelAdapter) -> Array1<f64> {
    match &model.params {
        ModelParams::Mean(p) => Array1::from(p.mu.clone()),
        _ => Array1::zeros(model.dim),
    }
}

/// Response the clean model would attach to covariates `x`.
fn clean_response(model: &ModelAdapter, x: ArrayView1<f64>, rng: &mut ChaCha8Rng) -> f64 {
    let noise: f64 = rng.sample(StandardNormal);
    let uniform: f64 = rng.random();
    match &model.params {
        ModelParams::Mean(_) | ModelParams::Covariance(_) => 0.0,
        ModelParams::LinearRegression(p) => x.dot(&ArrayView1::from(&p.beta[..])) + p.noise_sd * noise,
        ModelParams::Glm(p) => p.link.value(x.dot(&ArrayView1::from(&p.beta[..]))) + noise,
        ModelParams::Logistic(p) => {
            let prob = p.link.value(x.dot(&ArrayView1::from(&p.beta[..]))).clamp(0.0, 1.0);
            if uniform < prob {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Draws n points, each from the outlier distribution with probability ε.
///
/// Clean draws use the same stream as [`ModelAdapter::sample_clean`], and the
/// outlier indicator and outlier draws use a second stream that is consumed
/// identically for every ε. Datasets with the same seed and increasing ε
/// therefore have nested outlier sets on otherwise identical inliers.
pub fn sample_contaminated(model: &ModelAdapter, n: usize, spec: &ContaminationSpec) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidInput("sample size must be at least 1".into()));
    }
    spec.validate(model)?;
    let mut clean_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (mut x, mut y) = model.draw_clean(&mut clean_rng, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    let d = model.dim;
    let center = clean_center(model);
    let chol = match &model.params {
        ModelParams::Covariance(p) => cholesky((Array2::<f64>::eye(d) + &p.s_mat).view()),
        _ => None,
    };
    let mut labels = Vec::with_capacity(n);
    let mut z = Array1::<f64>::zeros(d);
    for i in 0..n {
        let is_bad = rng.random::<f64>() < spec.epsilon;
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let (xq, yq) = match &spec.q_family {
            QFamily::PointMass { shift, response } => {
                let s = ArrayView1::from(&shift[..]);
                let r = response.unwrap_or_else(|| s.dot(&s).sqrt());
                (&center + &s, r)
            }
            QFamily::ClusteredShift { center: c, spread } => {
                let xq = &center + &ArrayView1::from(&c[..]) + &(&z * *spread);
                let r = clean_response(model, xq.view(), &mut rng);
                (xq, r)
            }
            QFamily::VarianceInflation { factor } => {
                let shaped = match &chol {
                    Some(l) => l.dot(&z),
                    None => z.clone(),
                };
                let xq = &center + &(shaped * factor.sqrt());
                let r = clean_response(model, xq.view(), &mut rng) * factor.sqrt();
                (xq, r)
            }
            QFamily::ResponseFlip { direction, leverage } => {
                let dir = ArrayView1::from(&direction[..]);
                let xq = &z + &(&dir * (*leverage / dir.dot(&dir).sqrt()));
                let r = clean_response(model, xq.view(), &mut rng);
                let flipped = if matches!(model.params, ModelParams::Logistic(_)) { 1.0 - r } else { -r };
                (xq, flipped)
            }
        };
        if is_bad {
            x.row_mut(i).assign(&xq);
            if let Some(y) = y.as_mut() {
                y[i] = yq;
            }
            labels.push(Label::Bad);
        } else {
            labels.push(Label::Good);
        }
    }
    Ok(Dataset { x, y, labels: Some(labels), epsilon: spec.epsilon, seed: spec.seed })
}

/// One sample per line: `y,x1,…,xd` for response models, `x1,…,xd`
/// otherwise, with a trailing `good`/`bad` column when requested.
pub fn write_dataset<W: Write>(mut out: W, data: &Dataset, with_labels: bool) -> Result<()> {
    if with_labels && data.labels.is_none() {
        return Err(Error::Config("dataset has no labels to write".into()));
    }
    let mut line = String::new();
    for i in 0..data.len() {
        line.clear();
        let mut fields: Vec<String> = Vec::with_capacity(data.dim() + 2);
        if let Some(y) = &data.y {
            fields.push(format!("{}", y[i]));
        }
        fields.extend(data.x.row(i).iter().map(|v| format!("{v}")));
        if with_labels {
            let l = data.labels.as_ref().expect("checked")[i];
            fields.push(if l == Label::Good { "good".into() } else { "bad".into() });
        }
        line.push_str(&fields.join(","));
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}

/// Parses the format written by [`write_dataset`].
pub fn read_dataset<R: BufRead>(input: R, has_response: bool, epsilon: f64) -> Result<Dataset> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<Label> = Vec::new();
    let mut labelled: Option<bool> = None;
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let label = match fields.last() {
            Some(&"good") => Some(Label::Good),
            Some(&"bad") => Some(Label::Bad),
            _ => None,
        };
        if labelled.is_some_and(|l| l != label.is_some()) {
            return Err(Error::InvalidInput(format!("line {}: inconsistent label column", lineno + 1)));
        }
        labelled = Some(label.is_some());
        if let Some(l) = label {
            labels.push(l);
            fields.pop();
        }
        let row = fields
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| Error::InvalidInput(format!("line {}: {e}", lineno + 1))))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::InvalidInput(format!("line {}: ragged row", lineno + 1)));
            }
        }
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 {
        return Err(Error::InvalidInput("dataset is empty".into()));
    }
    let width = rows[0].len();
    let d = if has_response { width.checked_sub(1) } else { Some(width) }
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::InvalidInput("rows have no covariates".into()))?;
    let offset = usize::from(has_response);
    let x = Array2::from_shape_fn((n, d), |(i, j)| rows[i][j + offset]);
    let y = has_response.then(|| Array1::from_iter(rows.iter().map(|r| r[0])));
    Ok(Dataset { x, y, labels: (!labels.is_empty()).then_some(labels), epsilon, seed: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(eps: f64, seed: u64, d: usize) -> ContaminationSpec {
        let mut shift = vec![0.0; d];
        shift[0] = 5.0;
        ContaminationSpec { epsilon: eps, q_family: QFamily::PointMass { shift, response: None }, seed }
    }

    #[test]
    fn zero_epsilon_equals_clean_sample() {
        let m = ModelAdapter::mean(vec![1.0, 0.0, 0.0], 1).unwrap();
        let a = sample_contaminated(&m, 40, &spec(0.0, 11, 3)).unwrap();
        let b = m.sample_clean(40, 11).unwrap();
        assert_eq!(a.x, b.x);
        assert!(a.labels.unwrap().iter().all(|&l| l == Label::Good));
    }

    #[test]
    fn outlier_sets_are_nested_in_epsilon() {
        let m = ModelAdapter::mean(vec![0.0; 3], 1).unwrap();
        let lo = sample_contaminated(&m, 300, &spec(0.05, 4, 3)).unwrap();
        let hi = sample_contaminated(&m, 300, &spec(0.2, 4, 3)).unwrap();
        for (i, (a, b)) in lo.labels.unwrap().iter().zip(hi.labels.unwrap().iter()).enumerate() {
            if *a == Label::Bad {
                assert_eq!(*b, Label::Bad);
            }
            if *b == Label::Good {
                assert_eq!(lo.x.row(i), hi.x.row(i));
            }
        }
    }

    #[test]
    fn round_trip_serialisation() {
        let m = ModelAdapter::regression(vec![0.5, 0.0], 1.0, 1).unwrap();
        let data = sample_contaminated(&m, 25, &spec(0.2, 3, 2)).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &data, true).unwrap();
        let back = read_dataset(&buf[..], true, 0.2).unwrap();
        assert_eq!(back.x, data.x);
        assert_eq!(back.y, data.y);
        assert_eq!(back.labels, data.labels);
        let mut plain = Vec::new();
        write_dataset(&mut plain, &data, false).unwrap();
        assert!(!String::from_utf8(plain).unwrap().contains("good"));
    }

    #[test]
    fn flip_requires_response_model() {
        let m = ModelAdapter::mean(vec![0.0; 2], 1).unwrap();
        let s = ContaminationSpec {
            epsilon: 0.1,
            q_family: QFamily::ResponseFlip { direction: vec![1.0, 0.0], leverage: 3.0 },
            seed: 1,
        };
        assert!(sample_contaminated(&m, 10, &s).is_err());
        assert!(sample_contaminated(&m, 0, &spec(0.1, 1, 2)).is_err());
    }
}
