//! Symmetric positive (semi)definite solves and minimum-norm least squares.

use super::matrix::{dot, DenseMatrix};
use super::LinalgError;

/// Lower-triangular factor `P A P^T = L L^T`, with an optional symmetric permutation.
#[derive(Clone, Debug)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
    perm: Option<Vec<usize>>,
    min_pivot: f64,
    jitter: f64,
}

impl Cholesky {
    /// Plain factorization of `A + jitter·I`. Fails on the first pivot `<= floor`.
    pub fn factor(a: &DenseMatrix, jitter: f64, floor: f64) -> Result<Self, LinalgError> {
        let n = check_square(a)?;
        let mut l = vec![0.0; n * n];
        let mut min_pivot = f64::INFINITY;
        for j in 0..n {
            let lj = j * n;
            let s = dot(&l[lj..lj + j], &l[lj..lj + j]);
            let pivot = a.get(j, j) + jitter - s;
            if !(pivot > floor) {
                return Err(LinalgError::NotPositiveDefinite { index: j, pivot });
            }
            min_pivot = min_pivot.min(pivot);
            let d = pivot.sqrt();
            l[lj + j] = d;
            for i in j + 1..n {
                let li = i * n;
                let s = dot(&l[li..li + j], &l[lj..lj + j]);
                l[li + j] = (a.get(i, j) - s) / d;
            }
        }
        Ok(Self {
            n,
            l,
            perm: None,
            min_pivot,
            jitter,
        })
    }

    /// Factorization with diagonal pivoting: at each step the largest remaining
    /// diagonal of the Schur complement is eliminated first.
    pub fn factor_pivoted(a: &DenseMatrix, jitter: f64, floor: f64) -> Result<Self, LinalgError> {
        let n = check_square(a)?;
        let mut work: Vec<f64> = a.data().to_vec();
        for i in 0..n {
            work[i * n + i] += jitter;
        }
        let mut perm: Vec<usize> = (0..n).collect();
        let mut l = vec![0.0; n * n];
        let mut min_pivot = f64::INFINITY;
        for j in 0..n {
            // choose pivot among remaining
            let (best, _) = (j..n)
                .map(|k| (k, schur_diag(&work, &l, n, k, j)))
                .fold((j, f64::NEG_INFINITY), |acc, (k, v)| if v > acc.1 { (k, v) } else { acc });
            if best != j {
                perm.swap(j, best);
                swap_sym(&mut work, n, j, best);
                for c in 0..j {
                    l.swap(j * n + c, best * n + c);
                }
            }
            let lj = j * n;
            let pivot = work[lj + j] - dot(&l[lj..lj + j], &l[lj..lj + j]);
            if !(pivot > floor) {
                return Err(LinalgError::NotPositiveDefinite { index: j, pivot });
            }
            min_pivot = min_pivot.min(pivot);
            let d = pivot.sqrt();
            l[lj + j] = d;
            for i in j + 1..n {
                let li = i * n;
                let s = dot(&l[li..li + j], &l[lj..lj + j]);
                l[li + j] = (work[li + j] - s) / d;
            }
        }
        Ok(Self {
            n,
            l,
            perm: Some(perm),
            min_pivot,
            jitter,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Smallest Schur-complement pivot encountered (the squared diagonal of `L`).
    pub fn min_pivot(&self) -> f64 {
        self.min_pivot
    }

    /// Jitter that was added to the diagonal before factoring.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let n = self.n;
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        let mut z: Vec<f64> = match &self.perm {
            Some(p) => p.iter().map(|&k| b[k]).collect(),
            None => b.to_vec(),
        };
        for i in 0..n {
            let li = i * n;
            let s = dot(&self.l[li..li + i], &z[..i]);
            z[i] = (z[i] - s) / self.l[li + i];
        }
        for i in (0..n).rev() {
            let mut s = 0.0;
            for k in i + 1..n {
                s += self.l[k * n + i] * z[k];
            }
            z[i] = (z[i] - s) / self.l[i * n + i];
        }
        Ok(match &self.perm {
            Some(p) => {
                let mut x = vec![0.0; n];
                for (pos, &k) in p.iter().enumerate() {
                    x[k] = z[pos];
                }
                x
            }
            None => z,
        })
    }
}

fn check_square(a: &DenseMatrix) -> Result<usize, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::DimensionMismatch {
            expected: a.rows(),
            found: a.cols(),
        });
    }
    if a.rows() == 0 {
        return Err(LinalgError::Empty);
    }
    Ok(a.rows())
}

fn schur_diag(work: &[f64], l: &[f64], n: usize, k: usize, j: usize) -> f64 {
    let lk = k * n;
    work[lk + k] - dot(&l[lk..lk + j], &l[lk..lk + j])
}

fn swap_sym(a: &mut [f64], n: usize, p: usize, q: usize) {
    for c in 0..n {
        a.swap(p * n + c, q * n + c);
    }
    for r in 0..n {
        a.swap(r * n + p, r * n + q);
    }
}

/// Solves `(A + jitter·I) x = b` for symmetric PSD `A`.
///
/// Tries a plain factorization first. If a pivot is not positive, retries once with
/// diagonal pivoting and an extra `1e-10·trace(A)/n` on the diagonal before giving up.
pub fn solve_psd(a: &DenseMatrix, b: &[f64], jitter: f64) -> Result<Vec<f64>, LinalgError> {
    psd_factor(a, jitter)?.solve(b)
}

/// Factor used by [`solve_psd`], exposed so callers can reuse it for several right-hand sides.
pub fn psd_factor(a: &DenseMatrix, jitter: f64) -> Result<Cholesky, LinalgError> {
    let n = check_square(a)?;
    if jitter < 0.0 || !jitter.is_finite() {
        return Err(LinalgError::InvalidArgument("jitter must be finite and >= 0"));
    }
    if !a.is_symmetric(1e-10) {
        return Err(LinalgError::NotSymmetric);
    }
    match Cholesky::factor(a, jitter, 0.0) {
        Ok(f) => Ok(f),
        Err(LinalgError::NotPositiveDefinite { .. }) => {
            let extra = 1e-10 * a.trace().abs() / n as f64;
            Cholesky::factor_pivoted(a, jitter + extra, 0.0)
        }
        Err(e) => Err(e),
    }
}

/// Output of [`min_norm_fit`].
#[derive(Clone, Debug)]
pub struct MinNormSolution {
    /// `Φ^T (ΦΦ^T + λI)^{-1} y`.
    pub theta: Vec<f64>,
    /// `(ΦΦ^T + λI)^{-1} y`.
    pub dual: Vec<f64>,
    /// Smallest Cholesky pivot of `ΦΦ^T + λI`.
    pub min_pivot: f64,
}

/// Ridge / minimum-norm interpolating fit in the dual form, for `n <= p`.
///
/// With `lambda = 0` the result is the minimum Euclidean norm solution of `Φθ = y`.
pub fn min_norm_fit(phi: &DenseMatrix, y: &[f64], lambda: f64) -> Result<MinNormSolution, LinalgError> {
    let n = phi.rows();
    if y.len() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            found: y.len(),
        });
    }
    if n == 0 {
        return Err(LinalgError::Empty);
    }
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(LinalgError::InvalidArgument("lambda must be finite and >= 0"));
    }
    let mut gram = phi.gram_rows();
    gram.add_diagonal(lambda);
    let floor = 1e-12 * gram.trace() / n as f64;
    let chol = match Cholesky::factor(&gram, 0.0, floor) {
        Ok(c) => c,
        Err(LinalgError::NotPositiveDefinite { index, pivot }) => {
            return Err(LinalgError::SingularGram { index, pivot, floor })
        }
        Err(e) => return Err(e),
    };
    let dual = chol.solve(y)?;
    let theta = phi.tr_matvec(&dual)?;
    Ok(MinNormSolution {
        theta,
        dual,
        min_pivot: chol.min_pivot(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{gauss_matrix, matrix::sub_vec, norm2, RngStream};

    #[test]
    fn identity_and_diagonal_solves() {
        let x = solve_psd(&DenseMatrix::identity(3), &[1.0, 2.0, 3.0], 0.0).unwrap();
        assert_eq!(x, vec![1.0, 2.0, 3.0]);
        let x = solve_psd(&DenseMatrix::from_diag(&[2.0, 4.0]), &[2.0, 4.0], 0.0).unwrap();
        assert!(x.iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn random_psd_residual() {
        let g = gauss_matrix(RngStream::new(7, 1), 20, 20, 1.0).unwrap();
        let mut a = g.gram_rows();
        a.add_diagonal(1.0);
        let b: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        let x = solve_psd(&a, &b, 0.0).unwrap();
        let r = sub_vec(&a.matvec(&x).unwrap(), &b);
        assert!(norm2(&r) <= 1e-8 * norm2(&b));
    }

    #[test]
    fn semidefinite_matrix_uses_jitter_retry() {
        // rank-1, numerically semidefinite
        let v = [1.0, 2.0, 3.0];
        let a = DenseMatrix::from_fn(3, 3, |i, j| v[i] * v[j]);
        let f = psd_factor(&a, 0.0).unwrap();
        assert!(f.jitter() > 0.0);
    }

    #[test]
    fn negative_definite_is_rejected() {
        let a = DenseMatrix::from_diag(&[1.0, -1.0]);
        assert!(matches!(
            solve_psd(&a, &[1.0, 1.0], 0.0),
            Err(LinalgError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn dimension_and_symmetry_errors() {
        let a = DenseMatrix::identity(2);
        assert!(matches!(solve_psd(&a, &[1.0], 0.0), Err(LinalgError::DimensionMismatch { .. })));
        let b = DenseMatrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(solve_psd(&b, &[1.0, 1.0], 0.0), Err(LinalgError::NotSymmetric)));
    }

    #[test]
    fn pivoted_matches_plain() {
        let g = gauss_matrix(RngStream::new(3, 9), 6, 6, 1.0).unwrap();
        let mut a = g.gram_rows();
        a.add_diagonal(0.5);
        let b = [1.0, -1.0, 2.0, 0.0, 3.0, 0.25];
        let x1 = Cholesky::factor(&a, 0.0, 0.0).unwrap().solve(&b).unwrap();
        let x2 = Cholesky::factor_pivoted(&a, 0.0, 0.0).unwrap().solve(&b).unwrap();
        assert!(norm2(&sub_vec(&x1, &x2)) < 1e-10 * norm2(&x1));
    }

    #[test]
    fn min_norm_identity_and_infinite_ridge() {
        let y = [0.3, -1.0, 2.5, 0.0];
        let s = min_norm_fit(&DenseMatrix::identity(4), &y, 0.0).unwrap();
        assert_eq!(s.theta, y.to_vec());
        let s = min_norm_fit(&DenseMatrix::identity(4), &y, 1e12).unwrap();
        assert!(norm2(&s.theta) <= 1e-9 * norm2(&y));
    }

    #[test]
    fn singular_gram_detected() {
        let phi = DenseMatrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![2.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(
            min_norm_fit(&phi, &[1.0, 1.0], 0.0),
            Err(LinalgError::SingularGram { .. })
        ));
    }
}
