//! Small dense helpers: Cholesky solves for the ridge systems and a few
//! reductions used across modules.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    let k = a.nrows();
    if a.ncols() != k {
        return Err(Error::DimensionMismatch(format!(
            "cholesky of a non-square {}x{} matrix",
            k,
            a.ncols()
        )));
    }
    let mut l = Array2::<f64>::zeros((k, k));
    for i in 0..k {
        for j in 0..=i {
            let mut sum = a[[i, j]];
            for p in 0..j {
                sum -= l[[i, p]] * l[[j, p]];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return Err(Error::NumericalFailure(format!(
                        "matrix is not positive definite (pivot {i} = {sum})"
                    )));
                }
                l[[i, i]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Solves `A X = B` for symmetric positive-definite `A` (`k × k`), `B` `k × r`.
pub fn spd_solve(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    let l = cholesky(a)?;
    let k = l.nrows();
    if b.nrows() != k {
        return Err(Error::DimensionMismatch(format!(
            "right-hand side has {} rows, system has {k}",
            b.nrows()
        )));
    }
    let mut x = b.to_owned();
    for col in 0..x.ncols() {
        // forward: L y = b
        for i in 0..k {
            let mut s = x[[i, col]];
            for p in 0..i {
                s -= l[[i, p]] * x[[p, col]];
            }
            x[[i, col]] = s / l[[i, i]];
        }
        // backward: Lᵀ x = y
        for i in (0..k).rev() {
            let mut s = x[[i, col]];
            for p in i + 1..k {
                s -= l[[p, i]] * x[[p, col]];
            }
            x[[i, col]] = s / l[[i, i]];
        }
    }
    Ok(x)
}

/// Ridge solve in right-multiplied form: returns `T H (HᵀH + λI)⁻¹`, where
/// `T` is `c × n` and `H` is `n × k`.
pub fn ridge_right(
    target: ArrayView2<f64>,
    h: ArrayView2<f64>,
    lambda: f64,
) -> Result<Array2<f64>> {
    let k = h.ncols();
    let mut gram = h.t().dot(&h);
    for i in 0..k {
        gram[[i, i]] += lambda;
    }
    let rhs = target.dot(&h); // c × k
                              // G is symmetric, so B G = R  <=>  G Bᵀ = Rᵀ.
    let bt = spd_solve(gram.view(), rhs.t())?;
    Ok(bt.reversed_axes())
}

pub fn frobenius_sq(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Entry-wise `max(0, x)`.
pub fn project_nonneg(a: &mut Array2<f64>) {
    a.mapv_inplace(|x| x.max(0.0));
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cholesky_reconstructs_matrix() {
        let a = array![[4.0, 2.0, 0.4], [2.0, 5.0, 1.0], [0.4, 1.0, 3.0]];
        let l = cholesky(a.view()).unwrap();
        let back = l.dot(&l.t());
        for (x, y) in back.iter().zip(a.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn spd_solve_matches_known_solution() {
        let a = array![[2.0, 1.0], [1.0, 3.0]];
        let x_true = array![[1.0, -2.0], [0.5, 4.0]];
        let b = a.dot(&x_true);
        let x = spd_solve(a.view(), b.view()).unwrap();
        for (p, q) in x.iter().zip(x_true.iter()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn indefinite_matrix_is_a_numerical_failure() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(matches!(
            cholesky(a.view()),
            Err(Error::NumericalFailure(_))
        ));
    }

    #[test]
    fn ridge_with_empty_factor_is_empty() {
        let t = Array2::<f64>::ones((3, 5));
        let h = Array2::<f64>::zeros((5, 0));
        let b = ridge_right(t.view(), h.view(), 1e-6).unwrap();
        assert_eq!(b.dim(), (3, 0));
    }
}
