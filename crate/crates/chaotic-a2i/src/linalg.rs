//! Small dense linear algebra used by the solver and the identifiability
//! statistics.
//!
//! Problem sizes here are at most a few hundred rows and ~100 columns, so
//! textbook Householder QR, Cholesky, and Jacobi iterations are plenty and
//! keep the crate generic over the scalar type. One-sided Jacobi is chosen
//! for singular values because it resolves sigma near zero to machine
//! precision (a Gram-matrix eigensolve squares away exactly the digits the
//! rank checks need).

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::num::Scalar;

/// Solve min ||a x - b||_2 by Householder QR. `a` is n x m with n >= m and is
/// consumed as workspace; `b` must have length n. Fails as `SingularSystem`
/// when a diagonal of R falls below 8 * eps * max_j |R_jj|.
pub fn lstsq_qr<T: Scalar>(a: &mut Array2<T>, b: &mut Array1<T>) -> Result<Array1<T>> {
    let (n, m) = a.dim();
    if n < m {
        return Err(Error::invalid("a", format!("need rows >= cols, got {n} x {m}")));
    }
    if b.len() != n {
        return Err(Error::DimensionMismatch { what: "lstsq rhs", expected: n, actual: b.len() });
    }

    for k in 0..m {
        // Householder vector for column k below the diagonal.
        let mut norm_sq = T::zero();
        for i in k..n {
            let v = a[[i, k]];
            norm_sq += v * v;
        }
        let norm = norm_sq.sqrt();
        if norm == T::zero() {
            return Err(Error::SingularSystem);
        }
        let alpha = if a[[k, k]] >= T::zero() { -norm } else { norm };
        let v0 = a[[k, k]] - alpha;
        a[[k, k]] = alpha;
        // v = (v0, a[k+1..n, k]); beta = 2 / ||v||^2
        let mut vnorm_sq = v0 * v0;
        for i in (k + 1)..n {
            let v = a[[i, k]];
            vnorm_sq += v * v;
        }
        if vnorm_sq == T::zero() {
            continue;
        }
        let beta = T::lit(2.0) / vnorm_sq;
        // Apply H = I - beta v v^T to the trailing columns and to b.
        for j in (k + 1)..m {
            let mut dot = v0 * a[[k, j]];
            for i in (k + 1)..n {
                dot += a[[i, k]] * a[[i, j]];
            }
            let scale = beta * dot;
            a[[k, j]] = a[[k, j]] - scale * v0;
            for i in (k + 1)..n {
                let vik = a[[i, k]];
                a[[i, j]] = a[[i, j]] - scale * vik;
            }
        }
        let mut dot = v0 * b[k];
        for i in (k + 1)..n {
            dot += a[[i, k]] * b[i];
        }
        let scale = beta * dot;
        b[k] = b[k] - scale * v0;
        for i in (k + 1)..n {
            b[i] = b[i] - scale * a[[i, k]];
        }
    }

    let mut max_diag = T::zero();
    for k in 0..m {
        max_diag = max_diag.max(a[[k, k]].abs());
    }
    let tol = T::epsilon() * T::lit(8.0) * max_diag;
    let mut x = Array1::zeros(m);
    for k in (0..m).rev() {
        if a[[k, k]].abs() <= tol {
            return Err(Error::SingularSystem);
        }
        let mut s = b[k];
        for j in (k + 1)..m {
            s -= a[[k, j]] * x[j];
        }
        x[k] = s / a[[k, k]];
    }
    Ok(x)
}

/// Solve a x = b for symmetric positive definite `a` (consumed as workspace).
pub fn solve_spd<T: Scalar>(a: &mut Array2<T>, b: &Array1<T>) -> Result<Array1<T>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::invalid("a", "matrix must be square"));
    }
    if b.len() != n {
        return Err(Error::DimensionMismatch { what: "spd rhs", expected: n, actual: b.len() });
    }
    // In-place lower Cholesky.
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            let l = a[[j, k]];
            d -= l * l;
        }
        if d <= T::zero() {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d.to_f64_lossy() });
        }
        let dj = d.sqrt();
        a[[j, j]] = dj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= a[[i, k]] * a[[j, k]];
            }
            a[[i, j]] = s / dj;
        }
    }
    // Forward then backward substitution.
    let mut y = b.clone();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= a[[i, k]] * y[k];
        }
        y[i] = s / a[[i, i]];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= a[[k, i]] * y[k];
        }
        y[i] = s / a[[i, i]];
    }
    Ok(y)
}

/// Singular values of `a` (consumed), descending, via one-sided Jacobi.
pub fn singular_values<T: Scalar>(a: &mut Array2<T>) -> Array1<T> {
    let (_, m) = a.dim();
    if m == 0 {
        return Array1::zeros(0);
    }
    let eps = T::epsilon();
    let max_sweeps = 60;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for p in 0..m {
            for q in (p + 1)..m {
                let mut app = T::zero();
                let mut aqq = T::zero();
                let mut apq = T::zero();
                for i in 0..a.nrows() {
                    let x = a[[i, p]];
                    let y = a[[i, q]];
                    app += x * x;
                    aqq += y * y;
                    apq += x * y;
                }
                if app == T::zero() || aqq == T::zero() {
                    continue;
                }
                if apq.abs() <= eps * (app * aqq).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (aqq - app) / (T::lit(2.0) * apq);
                let t = if zeta >= T::zero() {
                    T::one() / (zeta + (T::one() + zeta * zeta).sqrt())
                } else {
                    -T::one() / (-zeta + (T::one() + zeta * zeta).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for i in 0..a.nrows() {
                    let x = a[[i, p]];
                    let y = a[[i, q]];
                    a[[i, p]] = c * x - s * y;
                    a[[i, q]] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<T> = (0..m)
        .map(|j| {
            let mut s = T::zero();
            for i in 0..a.nrows() {
                let v = a[[i, j]];
                s += v * v;
            }
            s.sqrt()
        })
        .collect();
    sv.sort_by(|x, y| y.partial_cmp(x).unwrap());
    Array1::from_vec(sv)
}

/// Count of singular values above `rel_tol * sigma_max`.
pub fn numerical_rank<T: Scalar>(sv: &Array1<T>, rel_tol: T) -> usize {
    match sv.first() {
        None => 0,
        Some(&smax) if smax == T::zero() => 0,
        Some(&smax) => sv.iter().filter(|&&s| s > rel_tol * smax).count(),
    }
}

/// Eigenvalues of a symmetric matrix (consumed), descending, via cyclic
/// two-sided Jacobi.
pub fn sym_eigenvalues<T: Scalar>(a: &mut Array2<T>) -> Result<Array1<T>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::invalid("a", "matrix must be square"));
    }
    let eps = T::epsilon();
    let max_sweeps = 60;
    for _ in 0..max_sweeps {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(a[[p, q]].abs());
            }
        }
        let mut diag_scale = T::zero();
        for p in 0..n {
            diag_scale = diag_scale.max(a[[p, p]].abs());
        }
        if off <= eps * diag_scale.max(T::one()) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq.abs() <= eps * diag_scale.max(T::one()) {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (T::lit(2.0) * apq);
                let t = if theta >= T::zero() {
                    T::one() / (theta + (T::one() + theta * theta).sqrt())
                } else {
                    -T::one() / (-theta + (T::one() + theta * theta).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for i in 0..n {
                    let aip = a[[i, p]];
                    let aiq = a[[i, q]];
                    a[[i, p]] = c * aip - s * aiq;
                    a[[i, q]] = s * aip + c * aiq;
                }
                for i in 0..n {
                    let api = a[[p, i]];
                    let aqi = a[[q, i]];
                    a[[p, i]] = c * api - s * aqi;
                    a[[q, i]] = s * api + c * aqi;
                }
            }
        }
    }
    let mut eig: Vec<T> = (0..n).map(|i| a[[i, i]]).collect();
    eig.sort_by(|x, y| y.partial_cmp(x).unwrap());
    Ok(Array1::from_vec(eig))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Prng;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn qr_matches_exact_solution_on_square_system() {
        let mut a = array![[2.0, 1.0], [1.0, 3.0]];
        let mut b = array![5.0, 10.0];
        let x = lstsq_qr(&mut a, &mut b).unwrap();
        // Solve by hand: x = (1, 3).
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(x[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn qr_least_squares_satisfies_normal_equations() {
        let mut rng = Prng::seed_from(2);
        for _ in 0..20 {
            let n = 12;
            let m = 5;
            let a = Array2::from_shape_fn((n, m), |_| rng.normal::<f64>());
            let b = Array1::from_shape_fn(n, |_| rng.normal::<f64>());
            let mut aw = a.clone();
            let mut bw = b.clone();
            let x = lstsq_qr(&mut aw, &mut bw).unwrap();
            let resid = &a.dot(&x) - &b;
            let grad = a.t().dot(&resid);
            for g in grad.iter() {
                assert!(g.abs() < 1e-10, "gradient {g}");
            }
        }
    }

    #[test]
    fn qr_detects_rank_deficiency() {
        let mut a = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]];
        let mut b = array![1.0, 2.0, 3.0];
        assert!(matches!(lstsq_qr(&mut a, &mut b), Err(Error::SingularSystem)));
    }

    #[test]
    fn spd_solve_round_trips() {
        let mut rng = Prng::seed_from(5);
        for _ in 0..20 {
            let n = 8;
            let r = Array2::from_shape_fn((n, n), |_| rng.normal::<f64>());
            let a = r.t().dot(&r) + Array2::<f64>::eye(n);
            let x_true = Array1::from_shape_fn(n, |_| rng.normal::<f64>());
            let b = a.dot(&x_true);
            let mut aw = a.clone();
            let x = solve_spd(&mut aw, &b).unwrap();
            for i in 0..n {
                assert_relative_eq!(x[i], x_true[i], epsilon = 1e-9, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn spd_rejects_indefinite() {
        let mut a = array![[1.0, 2.0], [2.0, 1.0]];
        let b = array![1.0, 1.0];
        assert!(matches!(
            solve_spd(&mut a, &b),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn singular_values_of_shear_are_golden_ratio() {
        // A = [[1,1],[0,1]] has singular values phi and 1/phi.
        let mut a = array![[1.0, 1.0], [0.0, 1.0]];
        let sv = singular_values(&mut a);
        let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
        assert_relative_eq!(sv[0], phi, epsilon = 1e-12);
        assert_relative_eq!(sv[1], 1.0 / phi, epsilon = 1e-12);
    }

    #[test]
    fn duplicate_columns_produce_a_zero_singular_value() {
        let mut rng = Prng::seed_from(7);
        let n = 20;
        let col = Array1::from_shape_fn(n, |_| rng.normal::<f64>());
        let mut a = Array2::zeros((n, 3));
        a.column_mut(0).assign(&col);
        a.column_mut(1).assign(&col);
        let other = Array1::from_shape_fn(n, |_| rng.normal::<f64>());
        a.column_mut(2).assign(&other);
        let sv = singular_values(&mut a);
        assert!(sv[2] <= 1e-12 * sv[0], "sigma_min {} vs {}", sv[2], sv[0]);
        assert_eq!(numerical_rank(&sv, 1e-10), 2);
    }

    #[test]
    fn singular_values_match_gram_eigenvalues() {
        let mut rng = Prng::seed_from(9);
        for _ in 0..10 {
            let a = Array2::from_shape_fn((15, 6), |_| rng.normal::<f64>());
            let mut aw = a.clone();
            let sv = singular_values(&mut aw);
            let mut gram = a.t().dot(&a);
            let eig = sym_eigenvalues(&mut gram).unwrap();
            for j in 0..6 {
                assert_relative_eq!(sv[j] * sv[j], eig[j], max_relative = 1e-8, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn sym_eigenvalues_of_diagonal() {
        let mut a = array![[3.0, 0.0], [0.0, -1.0]];
        let eig = sym_eigenvalues(&mut a).unwrap();
        assert_relative_eq!(eig[0], 3.0, epsilon = 1e-14);
        assert_relative_eq!(eig[1], -1.0, epsilon = 1e-14);
    }

    #[test]
    fn rank_of_zero_matrix_is_zero() {
        let mut a = Array2::<f64>::zeros((4, 3));
        let sv = singular_values(&mut a);
        assert_eq!(numerical_rank(&sv, 1e-10), 0);
    }
}
