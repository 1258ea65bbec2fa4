//! Convex relaxation of sparse PCA:
//! maximize tr(E H) over H ⪰ 0, tr H = 1, ‖H‖₁,₁ ≤ s.
//!
//! Solved with two-block ADMM: one block projects onto the spectraplex
//! {H ⪰ 0, tr H = 1} after a gradient step on the linear objective, the other
//! onto the ℓ1,1 ball. Large problems are handled by solving on a working set
//! of coordinates and growing it until a dual bound for the full problem
//! closes.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::linalg::{lanczos_max, sym_eigen, symmetrize};

#[derive(Debug, Clone)]
pub struct SpcaProblem {
    pub e: Array2<f64>,
    pub sparsity: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl SpcaProblem {
    pub fn new(e: Array2<f64>, sparsity: f64, tol: f64, max_iters: usize) -> Result<Self> {
        if e.nrows() != e.ncols() || e.nrows() == 0 {
            return Err(Error::InvalidInput(format!("E must be square and nonempty, got {:?}", e.shape())));
        }
        if !(sparsity >= 1.0) {
            return Err(Error::InvalidInput(format!("sparsity must be at least 1, got {sparsity}")));
        }
        if !(tol > 0.0) || max_iters == 0 {
            return Err(Error::InvalidInput("tol and max_iters must be positive".into()));
        }
        if e.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("E has non-finite entries".into()));
        }
        let mut e = e;
        symmetrize(&mut e);
        Ok(SpcaProblem { e, sparsity, tol, max_iters })
    }
}

#[derive(Debug, Clone)]
pub struct SpcaSolution {
    pub h_star: Array2<f64>,
    pub lambda_star: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Upper bound on the optimal value from the ADMM dual variable, when
    /// one was computed.
    pub dual_bound: Option<f64>,
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (k, &x) in u.iter().enumerate() {
        css += x;
        let t = (css - 1.0) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Frobenius-nearest point of {H ⪰ 0, tr H = 1}.
pub fn project_spectraplex(m: ArrayView2<f64>) -> Result<Array2<f64>> {
    let eig = sym_eigen(m)?;
    let w = project_simplex(eig.values.as_slice().expect("contiguous"));
    Ok(rebuild(&eig.vectors, &w))
}

fn rebuild(vectors: &Array2<f64>, weights: &[f64]) -> Array2<f64> {
    let cols: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 0.0).collect();
    let v = vectors.select(Axis(1), &cols);
    let scale = Array1::from_iter(cols.iter().map(|&i| weights[i]));
    let mut h = (&v * &scale.insert_axis(Axis(0))).dot(&v.t());
    symmetrize(&mut h);
    h
}

/// Projection onto {‖H‖₁,₁ ≤ s} by entrywise soft thresholding. The level is
/// bracketed by bisection and then solved exactly on the active set.
pub fn project_l11_ball(m: ArrayView2<f64>, s: f64) -> Array2<f64> {
    let total: f64 = m.iter().map(|x| x.abs()).sum();
    if total <= s {
        return m.to_owned();
    }
    let excess = |t: f64| m.iter().map(|x| (x.abs() - t).max(0.0)).sum::<f64>();
    let (mut lo, mut hi) = (0.0, m.iter().fold(0.0f64, |a, x| a.max(x.abs())));
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) > s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // On (lo, hi] the active set is fixed, so the level is linear in s there.
    let (sum, count) = m.iter().filter(|x| x.abs() > lo).fold((0.0, 0usize), |(a, c), x| (a + x.abs(), c + 1));
    let t = if count > 0 { ((sum - s) / count as f64).clamp(lo, hi) } else { hi };
    let mut out = m.mapv(|x| x.signum() * (x.abs() - t).max(0.0));
    symmetrize(&mut out);
    out
}

fn l11(m: ArrayView2<f64>) -> f64 {
    m.iter().map(|x| x.abs()).sum()
}

fn frob_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn trace_product(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Moves a spectraplex point into the ℓ1,1 ball by mixing it with its own
/// diagonal, which keeps trace and positive semidefiniteness.
fn restore_feasibility(h: &mut Array2<f64>, s: f64) {
    let p = h.nrows();
    let total = l11(h.view());
    if total <= s {
        return;
    }
    let diag: f64 = (0..p).map(|i| h[[i, i]].abs()).sum();
    let off = total - diag;
    if off <= 0.0 {
        return;
    }
    let keep = ((s - diag) / off).clamp(0.0, 1.0);
    for i in 0..p {
        for j in 0..p {
            if i != j {
                h[[i, j]] *= keep;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpcaOptions {
    /// Above this dimension the working-set strategy is used.
    pub working_set_threshold: usize,
    pub initial_working_set: usize,
    pub max_working_set: usize,
    pub max_rounds: usize,
    pub grow_by: usize,
    /// Duality gap accepted by the working-set strategy.
    pub gap_tol: f64,
    pub lanczos_steps: usize,
}

impl Default for SpcaOptions {
    fn default() -> Self {
        SpcaOptions {
            working_set_threshold: 96,
            initial_working_set: 24,
            max_working_set: 160,
            max_rounds: 6,
            grow_by: 16,
            gap_tol: 5e-3,
            lanczos_steps: 60,
        }
    }
}

#[derive(Debug, Clone)]
struct AdmmState {
    z: Array2<f64>,
    u: Array2<f64>,
    rho: f64,
}

impl AdmmState {
    fn cold(p: usize) -> Self {
        AdmmState { z: Array2::eye(p) / p as f64, u: Array2::zeros((p, p)), rho: 1.0 }
    }
}

struct AdmmOutcome {
    h: Array2<f64>,
    primal: f64,
    dual: f64,
    iterations: usize,
    converged: bool,
}

const ADAPT_EVERY: usize = 10;
const ADAPT_UNTIL: usize = 5000;

fn admm(e: ArrayView2<f64>, s: f64, tol: f64, max_iters: usize, state: &mut AdmmState) -> Result<AdmmOutcome> {
    let mut h = state.z.clone();
    let (mut primal, mut dual) = (f64::INFINITY, f64::INFINITY);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        iterations += 1;
        let v = &state.z - &state.u + &e / state.rho;
        h = project_spectraplex(v.view())?;
        let z_old = std::mem::replace(&mut state.z, project_l11_ball((&h + &state.u).view(), s));
        state.u += &h;
        state.u -= &state.z;
        primal = frob_diff(&h, &state.z);
        dual = state.rho * frob_diff(&state.z, &z_old);
        if primal < tol && dual < tol {
            converged = true;
            break;
        }
        // Penalty updates can cycle forever; adapt sparingly, then freeze.
        if iterations % ADAPT_EVERY != 0 || iterations > ADAPT_UNTIL {
            continue;
        }
        if primal > 10.0 * dual {
            state.rho *= 2.0;
            state.u /= 2.0;
        } else if dual > 10.0 * primal {
            state.rho /= 2.0;
            state.u *= 2.0;
        }
    }
    Ok(AdmmOutcome { h, primal, dual, iterations, converged })
}

fn finish(e: ArrayView2<f64>, s: f64, out: AdmmOutcome, dual_bound: Option<f64>) -> SpcaSolution {
    let mut h = out.h;
    restore_feasibility(&mut h, s);
    let lambda_star = trace_product(e, h.view());
    SpcaSolution {
        h_star: h,
        lambda_star,
        primal_residual: out.primal,
        dual_residual: out.dual,
        iterations: out.iterations,
        converged: out.converged,
        dual_bound,
    }
}

/// Upper bound λ_max(E − Y) + s‖Y‖_∞, valid for any symmetric Y.
fn dual_value(e: ArrayView2<f64>, y: &Array2<f64>, s: f64) -> Result<f64> {
    let m = &e - y;
    let top = if m.nrows() <= 200 {
        sym_eigen(m.view())?.max_value()
    } else {
        lanczos_max(m.nrows(), 120, |v| m.dot(v))?.0
    };
    Ok(top + s * y.iter().fold(0.0f64, |a, x| a.max(x.abs())))
}

/// Solves one relaxation from a cold start.
pub fn solve_relaxation(problem: &SpcaProblem) -> Result<SpcaSolution> {
    SpcaSolver::new(SpcaOptions::default()).solve(problem)
}

/// Reusable solver that warm-starts from the previous solve when the next
/// problem has the same dimension, which is the common case inside the
/// ellipsoid loop where consecutive weight vectors are close.
#[derive(Debug, Clone)]
pub struct SpcaSolver {
    pub options: SpcaOptions,
    /// When set, a working-set solve stops as soon as a feasible point beats
    /// this value, since only the comparison against it is needed.
    pub decision_threshold: Option<f64>,
    full: Option<AdmmState>,
    working: Option<(Vec<usize>, AdmmState)>,
}

impl SpcaSolver {
    pub fn new(options: SpcaOptions) -> Self {
        SpcaSolver { options, decision_threshold: None, full: None, working: None }
    }

    pub fn solve(&mut self, problem: &SpcaProblem) -> Result<SpcaSolution> {
        let p = problem.e.nrows();
        if p > self.options.working_set_threshold {
            return self.solve_working_set(problem);
        }
        let mut state = match self.full.take() {
            Some(st) if st.z.nrows() == p => st,
            _ => AdmmState::cold(p),
        };
        let out = admm(problem.e.view(), problem.sparsity, problem.tol, problem.max_iters, &mut state)?;
        let y = &state.u * state.rho;
        let bound = dual_value(problem.e.view(), &y, problem.sparsity)?;
        self.full = Some(state);
        Ok(finish(problem.e.view(), problem.sparsity, out, Some(bound)))
    }

    fn initial_set(&self, e: &Array2<f64>, s: f64) -> Vec<usize> {
        let p = e.nrows();
        let k = s.ceil() as usize;
        let mut score: Vec<(f64, usize)> = (0..p)
            .map(|i| {
                let mut row: Vec<f64> = (0..p).filter(|&j| j != i).map(|j| e[[i, j]].abs()).collect();
                row.sort_by(|a, b| b.total_cmp(a));
                (e[[i, i]] + row.iter().take(k.saturating_sub(1)).sum::<f64>(), i)
            })
            .collect();
        score.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut set: Vec<usize> = score.iter().take(self.options.initial_working_set.min(p)).map(|x| x.1).collect();
        if let Some((prev, _)) = &self.working {
            for &i in prev {
                if i < p && !set.contains(&i) {
                    set.push(i);
                }
            }
        }
        set.sort_unstable();
        set
    }

    fn solve_working_set(&mut self, problem: &SpcaProblem) -> Result<SpcaSolution> {
        let e = &problem.e;
        let p = e.nrows();
        let s = problem.sparsity;
        let mut set = self.initial_set(e, s);
        let mut state = match self.working.take() {
            Some((prev, st)) => remap_state(&prev, &st, &set),
            None => AdmmState::cold(set.len()),
        };
        let mut total_iters = 0;
        let mut rounds = 0;
        loop {
            rounds += 1;
            let sub = e.select(Axis(0), &set).select(Axis(1), &set);
            let out = admm(sub.view(), s, problem.tol, problem.max_iters, &mut state)?;
            total_iters += out.iterations;
            let inner_converged = out.converged;
            let restricted = finish(sub.view(), s, out, None);

            // A feasible point above the threshold already settles the
            // decision, so the full-problem bound is not needed.
            if let Some(thr) = self.decision_threshold {
                if inner_converged && restricted.lambda_star > thr {
                    let mut sol = restricted;
                    sol.h_star = embed(&sol.h_star, &set, p);
                    sol.iterations = total_iters;
                    self.working = Some((set, state));
                    return Ok(sol);
                }
            }

            // Dual certificate on the full problem: the ADMM dual on the
            // working block, and entries clipped at the same level elsewhere.
            let y_block = &state.u * state.rho;
            let mu = y_block.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            let mut in_set = vec![usize::MAX; p];
            for (k, &i) in set.iter().enumerate() {
                in_set[i] = k;
            }
            let mut y = Array2::<f64>::zeros((p, p));
            for i in 0..p {
                for j in 0..p {
                    y[[i, j]] = match (in_set[i], in_set[j]) {
                        (a, b) if a != usize::MAX && b != usize::MAX => y_block[[a, b]],
                        _ if i == j => mu,
                        _ => e[[i, j]].clamp(-mu, mu),
                    };
                }
            }
            let reduced = e - &y;
            let (top, v) = lanczos_max(p, self.options.lanczos_steps, |x| reduced.dot(x))?;
            let bound = top + s * mu;

            let mut sol = restricted;
            sol.dual_bound = Some(bound);
            let gap = bound - sol.lambda_star;
            let closed = inner_converged && gap <= self.options.gap_tol;
            let exhausted = rounds >= self.options.max_rounds || set.len() >= self.options.max_working_set.min(p);
            if closed || exhausted {
                sol.h_star = embed(&sol.h_star, &set, p);
                sol.iterations = total_iters;
                sol.converged = closed;
                self.working = Some((set, state));
                return Ok(sol);
            }

            let mut candidates: Vec<(f64, usize)> =
                (0..p).filter(|&i| in_set[i] == usize::MAX).map(|i| (v[i].abs(), i)).collect();
            candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let room = self.options.max_working_set.min(p) - set.len();
            let mut grown: Vec<usize> = set
                .iter()
                .copied()
                .chain(candidates.iter().take(self.options.grow_by.min(room)).map(|c| c.1))
                .collect();
            grown.sort_unstable();
            state = remap_state(&set, &state, &grown);
            set = grown;
        }
    }
}

fn embed(block: &Array2<f64>, set: &[usize], p: usize) -> Array2<f64> {
    let mut full = Array2::<f64>::zeros((p, p));
    for (a, &i) in set.iter().enumerate() {
        for (b, &j) in set.iter().enumerate() {
            full[[i, j]] = block[[a, b]];
        }
    }
    full
}

/// Carries ADMM variables from one index set to another; new coordinates
/// start at zero.
fn remap_state(from: &[usize], st: &AdmmState, to: &[usize]) -> AdmmState {
    let k = to.len();
    let pos: Vec<Option<usize>> = to.iter().map(|i| from.iter().position(|j| j == i)).collect();
    let mut z = Array2::zeros((k, k));
    let mut u = Array2::zeros((k, k));
    for a in 0..k {
        for b in 0..k {
            if let (Some(x), Some(y)) = (pos[a], pos[b]) {
                z[[a, b]] = st.z[[x, y]];
                u[[a, b]] = st.u[[x, y]];
            }
        }
    }
    let tr: f64 = (0..k).map(|i| z[[i, i]]).sum();
    if tr <= 0.0 {
        z = Array2::eye(k) / k as f64;
    }
    AdmmState { z, u, rho: st.rho }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn close(a: &Array2<f64>, b: &Array2<f64>, tol: f64) -> bool {
        frob_diff(a, b) < tol
    }

    #[test]
    fn spectraplex_examples() {
        let id = Array2::<f64>::eye(4) / 4.0;
        assert!(close(&project_spectraplex(id.view()).unwrap(), &id, 1e-12));
        let out = project_spectraplex(array![[2.0, 0.0], [0.0, 0.0]].view()).unwrap();
        assert!(close(&out, &array![[1.0, 0.0], [0.0, 0.0]], 1e-12));
        let out = project_spectraplex(array![[0.8, 0.0], [0.0, 0.8]].view()).unwrap();
        assert!(close(&out, &array![[0.5, 0.0], [0.0, 0.5]], 1e-12));
    }

    #[test]
    fn l11_examples() {
        let m = array![[0.1, -0.2], [-0.2, 0.3]];
        assert_eq!(project_l11_ball(m.view(), 1.0), m);
        let out = project_l11_ball(array![[2.0, 0.0], [0.0, 0.0]].view(), 1.0);
        assert!(close(&out, &array![[1.0, 0.0], [0.0, 0.0]], 1e-12));
        let out = project_l11_ball(array![[2.0, 2.0], [2.0, 2.0]].view(), 2.0);
        assert!(close(&out, &Array2::from_elem((2, 2), 0.5), 1e-12));
    }

    #[test]
    fn simplex_projection() {
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        let w = project_simplex(&[0.3, -1.0, 0.3, 0.9]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(w.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn identity_objective_is_one() {
        let pr = SpcaProblem::new(Array2::eye(4), 2.0, 1e-6, 5000).unwrap();
        let sol = solve_relaxation(&pr).unwrap();
        assert!((sol.lambda_star - 1.0).abs() < 1e-6);
    }

    #[test]
    fn diagonal_objective_picks_top_coordinate() {
        let e = Array2::from_diag(&array![5.0, 1.0, 0.0]);
        let sol = solve_relaxation(&SpcaProblem::new(e, 1.0, 1e-6, 5000).unwrap()).unwrap();
        assert!(sol.converged);
        assert!((sol.lambda_star - 5.0).abs() < 1e-5);
        assert!((sol.h_star[[0, 0]] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn restoration_keeps_trace_and_psd() {
        let mut h = array![[0.5, 0.5], [0.5, 0.5]];
        restore_feasibility(&mut h, 1.5);
        assert!((l11(h.view()) - 1.5).abs() < 1e-12);
        assert!((h[[0, 0]] + h[[1, 1]] - 1.0).abs() < 1e-15);
        let eig = sym_eigen(h.view()).unwrap();
        assert!(eig.values[0] >= 0.0);
    }

    #[test]
    fn rejects_bad_problems() {
        assert!(SpcaProblem::new(Array2::zeros((2, 3)), 1.0, 1e-6, 10).is_err());
        assert!(SpcaProblem::new(Array2::eye(2), 0.5, 1e-6, 10).is_err());
    }
}
