use super::matrix::{dot, norm2, DenseMatrix};
use super::LinalgError;

/// Top left singular pair of a matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SingularPair {
    /// Unit-norm left singular vector; the entry of largest magnitude is positive.
    pub u: Vec<f64>,
    /// Largest singular value.
    pub sigma: f64,
    pub iterations: usize,
}

/// Power iteration on `M M^T` from the normalized all-ones vector.
///
/// Stops once `‖MM^T u − σ²u‖ ≤ tol·σ²` with `σ²` the Rayleigh quotient.
pub fn top_singular_left(m: &DenseMatrix, max_iter: usize, tol: f64) -> Result<SingularPair, LinalgError> {
    if m.frobenius_norm() == 0.0 {
        return Err(LinalgError::ZeroMatrix);
    }
    let h = m.rows();
    // M M^T is h x h; forming it is cheaper than two matvecs per step once iterations exceed h/2.
    let g = m.gram_rows();
    let mut u = vec![1.0 / (h as f64).sqrt(); h];
    let mut w = g.matvec(&u)?;
    if norm2(&w) == 0.0 {
        // all-ones vector lies in the null space; restart on the dominant diagonal entry
        let k = (0..h)
            .max_by(|&a, &b| g.get(a, a).total_cmp(&g.get(b, b)))
            .unwrap_or(0);
        u = vec![0.0; h];
        u[k] = 1.0;
        w = g.matvec(&u)?;
    }
    let mut best = (u.clone(), f64::INFINITY, 0.0);
    for it in 1..=max_iter.max(1) {
        let lambda = dot(&u, &w);
        let resid: f64 = w
            .iter()
            .zip(&u)
            .map(|(wi, ui)| (wi - lambda * ui).powi(2))
            .sum::<f64>()
            .sqrt();
        let rel = if lambda > 0.0 { resid / lambda } else { f64::INFINITY };
        if rel < best.1 {
            best = (u.clone(), rel, lambda);
        }
        if rel <= tol {
            return Ok(finish(u, lambda, it));
        }
        let nw = norm2(&w);
        u = w.iter().map(|v| v / nw).collect();
        w = g.matvec(&u)?;
    }
    let (u, _, lambda) = best;
    Err(LinalgError::NoConvergence {
        iterations: max_iter,
        best: Box::new(finish(u, lambda, max_iter)),
    })
}

fn finish(mut u: Vec<f64>, lambda: f64, iterations: usize) -> SingularPair {
    let nu = norm2(&u);
    u.iter_mut().for_each(|v| *v /= nu);
    let k = (0..u.len())
        .max_by(|&a, &b| u[a].abs().total_cmp(&u[b].abs()))
        .unwrap_or(0);
    if u[k] < 0.0 {
        u.iter_mut().for_each(|v| *v = -*v);
    }
    SingularPair {
        u,
        sigma: lambda.max(0.0).sqrt(),
        iterations,
    }
}

/// Spectral norm of an arbitrary matrix via [`top_singular_left`].
pub fn spectral_norm(m: &DenseMatrix) -> f64 {
    match top_singular_left(m, 5000, 1e-10) {
        Ok(p) => p.sigma,
        Err(LinalgError::ZeroMatrix) => 0.0,
        Err(LinalgError::NoConvergence { best, .. }) => best.sigma,
        Err(_) => f64::NAN,
    }
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching eigenvectors as columns.
pub fn symmetric_eigen(a: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix), LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::DimensionMismatch {
            expected: a.rows(),
            found: a.cols(),
        });
    }
    let n = a.rows();
    let mut m = a.clone();
    let mut v = DenseMatrix::identity(n);
    let scale = a.frobenius_norm().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m.get(i, j).powi(2))
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(i, i).total_cmp(&m.get(j, j)));
    let values = order.iter().map(|&i| m.get(i, i)).collect();
    let vectors = DenseMatrix::from_fn(n, n, |r, c| v.get(r, order[c]));
    Ok((values, vectors))
}

/// Largest absolute eigenvalue of a symmetric matrix.
pub fn spectral_norm_sym(a: &DenseMatrix) -> Result<f64, LinalgError> {
    let (vals, _) = symmetric_eigen(a)?;
    Ok(vals.iter().fold(0.0, |m, v| m.max(v.abs())))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DenseMatrix) -> Result<f64, LinalgError> {
    let (vals, _) = symmetric_eigen(a)?;
    vals.first().copied().ok_or(LinalgError::Empty)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_one_unit() {
        let m = DenseMatrix::from_diag(&[1.0, 0.0, 0.0]);
        let p = top_singular_left(&m, 100, 1e-12).unwrap();
        assert_eq!(p.u, vec![1.0, 0.0, 0.0]);
        assert!((p.sigma - 1.0).abs() < 1e-12);
    }

    #[test]
    fn padded_diagonal() {
        let mut m = DenseMatrix::zeros(2, 5);
        m.set(0, 0, 3.0);
        m.set(1, 1, 1.0);
        let p = top_singular_left(&m, 1000, 1e-12).unwrap();
        assert!((p.u[0] - 1.0).abs() < 1e-9 && p.u[1].abs() < 1e-6);
        assert!((p.sigma - 3.0).abs() < 1e-9);
    }

    #[test]
    fn ones_in_null_space_restarts() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![-1.0, -1.0]]).unwrap();
        // M M^T = [[2,-2],[-2,2]] kills the ones vector
        let p = top_singular_left(&m, 100, 1e-12).unwrap();
        assert!((p.sigma - 2.0).abs() < 1e-9);
        assert!((p.u[0].abs() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn zero_matrix_error() {
        assert!(matches!(
            top_singular_left(&DenseMatrix::zeros(2, 3), 10, 1e-9),
            Err(LinalgError::ZeroMatrix)
        ));
    }

    #[test]
    fn no_convergence_returns_best() {
        // nearly degenerate top pair converges slowly
        let m = DenseMatrix::from_diag(&[1.0, 0.999_999, 0.5]);
        match top_singular_left(&m, 3, 1e-14) {
            Err(LinalgError::NoConvergence { best, .. }) => assert!(best.sigma > 0.9),
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    #[test]
    fn jacobi_diagonalizes() {
        let a = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let (vals, _) = symmetric_eigen(&a).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-12 && (vals[1] - 3.0).abs() < 1e-12);
    }
}
