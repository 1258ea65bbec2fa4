//! Dense symmetric linear algebra helpers.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Eigendecomposition of a symmetric matrix with eigenvalues in ascending
/// order and eigenvectors stored as columns.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

impl SymEigen {
    pub fn max_value(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

pub fn symmetrize(a: &mut Array2<f64>) {
    let p = a.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            let v = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
}

fn check_square(a: &ArrayView2<f64>) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidInput(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    Ok(a.nrows())
}

/// Householder tridiagonalisation followed by implicit QR.
pub fn sym_eigen(a: ArrayView2<f64>) -> Result<SymEigen> {
    let p = check_square(&a)?;
    if p == 0 {
        return Ok(SymEigen { values: Array1::zeros(0), vectors: Array2::zeros((0, 0)) });
    }
    let m = nalgebra::DMatrix::from_fn(p, p, |i, j| 0.5 * (a[[i, j]] + a[[j, i]]));
    let eig = nalgebra::SymmetricEigen::try_new(m, f64::EPSILON, 10_000).ok_or_else(|| {
        Error::Numerical(format!("symmetric QR did not converge on a {p}x{p} matrix"))
    })?;
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = Array1::from_iter(order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Array2::zeros((p, p));
    for (col, &k) in order.iter().enumerate() {
        for r in 0..p {
            vectors[[r, col]] = eig.eigenvectors[(r, k)];
        }
    }
    Ok(SymEigen { values, vectors })
}

/// Cyclic Jacobi eigensolver. Slow for large matrices but simple and
/// accurate to working precision, so it is used where exactness matters
/// more than speed (whitening, brute-force checks).
pub fn jacobi_eigen(a: ArrayView2<f64>, max_sweeps: usize) -> Result<SymEigen> {
    let p = check_square(&a)?;
    let mut m = a.to_owned();
    symmetrize(&mut m);
    let mut v = Array2::<f64>::eye(p);
    let scale = m.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let mut sweeps = 0;
    loop {
        let off: f64 = (0..p)
            .flat_map(|i| (0..p).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[[i, j]] * m[[i, j]])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        if sweeps == max_sweeps {
            return Err(Error::Numerical(format!(
                "Jacobi did not converge after {sweeps} sweeps (off-diagonal norm {off:.3e})"
            )));
        }
        sweeps += 1;
        for i in 0..p {
            for j in (i + 1)..p {
                let aij = m[[i, j]];
                if aij.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[[j, j]] - m[[i, i]]) / (2.0 * aij);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..p {
                    let mki = m[[k, i]];
                    let mkj = m[[k, j]];
                    m[[k, i]] = c * mki - s * mkj;
                    m[[k, j]] = s * mki + c * mkj;
                }
                for k in 0..p {
                    let mik = m[[i, k]];
                    let mjk = m[[j, k]];
                    m[[i, k]] = c * mik - s * mjk;
                    m[[j, k]] = s * mik + c * mjk;
                }
                for k in 0..p {
                    let vki = v[[k, i]];
                    let vkj = v[[k, j]];
                    v[[k, i]] = c * vki - s * vkj;
                    v[[k, j]] = s * vki + c * vkj;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| m[[i, i]].total_cmp(&m[[j, j]]));
    let values = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let vectors = v.select(Axis(1), &order);
    Ok(SymEigen { values, vectors })
}

/// Rebuilds `V diag(f(values)) Vᵀ`.
pub fn spectral_apply(eig: &SymEigen, f: impl Fn(f64) -> f64) -> Array2<f64> {
    let scaled = &eig.vectors * &eig.values.mapv(f).insert_axis(Axis(0));
    let mut out = scaled.dot(&eig.vectors.t());
    symmetrize(&mut out);
    out
}

/// Symmetric inverse square root. Eigenvalues below `floor` are raised to
/// `floor`; the flag reports whether that happened.
pub fn inv_sqrt_psd(a: ArrayView2<f64>, floor: f64) -> Result<(Array2<f64>, Array2<f64>, bool)> {
    let eig = jacobi_eigen(a, 100)?;
    let regularized = eig.values.iter().any(|&l| l < floor);
    let inv = spectral_apply(&eig, |l| 1.0 / l.max(floor).sqrt());
    let sqrt = spectral_apply(&eig, |l| l.max(floor).sqrt());
    Ok((inv, sqrt, regularized))
}

/// Lower Cholesky factor, or `None` when the matrix is not positive definite.
pub fn cholesky(a: ArrayView2<f64>) -> Option<Array2<f64>> {
    let p = a.nrows();
    let mut l = Array2::<f64>::zeros((p, p));
    for j in 0..p {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in (j + 1)..p {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / d;
        }
    }
    Some(l)
}

/// Largest eigenvalue and a unit eigenvector of a symmetric operator given by
/// its matrix-vector product, using Lanczos with full reorthogonalisation.
/// The start vector is fixed so results are deterministic.
pub fn lanczos_max<F>(p: usize, steps: usize, matvec: F) -> Result<(f64, Array1<f64>)>
where
    F: Fn(&Array1<f64>) -> Array1<f64>,
{
    if p == 0 {
        return Err(Error::InvalidInput("empty operator".into()));
    }
    let k_max = steps.min(p).max(1);
    let mut basis: Vec<Array1<f64>> = Vec::with_capacity(k_max);
    let mut alpha = Vec::with_capacity(k_max);
    let mut beta: Vec<f64> = Vec::with_capacity(k_max);
    let mut q = Array1::from_iter((0..p).map(|i| 1.0 + 0.1 * ((i * 7919 % 104_729) as f64 / 104_729.0)));
    q /= q.dot(&q).sqrt();
    for k in 0..k_max {
        let mut r = matvec(&q);
        let a = q.dot(&r);
        alpha.push(a);
        basis.push(q.clone());
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&r);
                r.scaled_add(-c, b);
            }
        }
        let bnorm = r.dot(&r).sqrt();
        if k + 1 == k_max || bnorm < 1e-12 * (a.abs() + 1.0) {
            break;
        }
        beta.push(bnorm);
        q = r / bnorm;
    }
    let k = alpha.len();
    let mut t = Array2::<f64>::zeros((k, k));
    for i in 0..k {
        t[[i, i]] = alpha[i];
        if i + 1 < k {
            t[[i, i + 1]] = beta[i];
            t[[i + 1, i]] = beta[i];
        }
    }
    let eig = sym_eigen(t.view())?;
    let y = eig.vectors.column(k - 1);
    let mut v = Array1::<f64>::zeros(p);
    for (i, b) in basis.iter().enumerate() {
        v.scaled_add(y[i], b);
    }
    let n = v.dot(&v).sqrt();
    if n > 0.0 {
        v /= n;
    }
    Ok((eig.max_value(), v))
}

pub fn frobenius(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn qr_and_jacobi_agree() {
        let a = array![[4.0, 1.0, -2.0], [1.0, 2.0, 0.5], [-2.0, 0.5, 3.0]];
        let e1 = sym_eigen(a.view()).unwrap();
        let e2 = jacobi_eigen(a.view(), 50).unwrap();
        for i in 0..3 {
            assert!((e1.values[i] - e2.values[i]).abs() < 1e-12);
        }
        let rebuilt = spectral_apply(&e2, |l| l);
        assert!(frobenius((&rebuilt - &a).view()) < 1e-12);
    }

    #[test]
    fn inverse_square_root() {
        let a = array![[4.0, 1.0], [1.0, 3.0]];
        let (inv, sqrt, reg) = inv_sqrt_psd(a.view(), 1e-6).unwrap();
        assert!(!reg);
        let id = inv.dot(&a).dot(&inv);
        assert!(frobenius((&id - &Array2::<f64>::eye(2)).view()) < 1e-12);
        assert!(frobenius((&sqrt.dot(&sqrt) - &a).view()) < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        assert!(cholesky(array![[1.0, 2.0], [2.0, 1.0]].view()).is_none());
        let l = cholesky(array![[4.0, 2.0], [2.0, 3.0]].view()).unwrap();
        assert!((l[[0, 0]] - 2.0).abs() < 1e-15 && (l[[1, 0]] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lanczos_finds_top_eigenvalue() {
        let p = 40;
        let a = Array2::from_shape_fn((p, p), |(i, j)| {
            let (i, j) = (i.min(j) as f64, i.max(j) as f64);
            ((i + 1.0) * (j + 2.0)).sin()
        });
        let exact = sym_eigen(a.view()).unwrap().max_value();
        let (val, v) = lanczos_max(p, p, |x| a.dot(x)).unwrap();
        assert!((val - exact).abs() < 1e-9);
        let r = a.dot(&v) - &v * val;
        assert!(r.dot(&r).sqrt() < 1e-6);
    }
}
