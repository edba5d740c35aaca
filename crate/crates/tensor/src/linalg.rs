//! Small dense linear algebra: one-sided Jacobi SVD and helpers.
//!
//! Sized for the matrices this workspace actually produces (probe token
//! matrices, sketched gradient stacks); no attempt at large-scale routines.

use crate::{Result, Scalar, Tensor, TensorError};

/// Top-k left singular vectors and singular values of a 2-D matrix.
///
/// `U` has orthonormal columns (m x k), `S` is descending.
pub fn svd_topk<T: Scalar>(x: &Tensor<T>, k: usize) -> Result<(Tensor<T>, Vec<T>)> {
    if x.rank() != 2 {
        return Err(TensorError::BadShape {
            op: "svd_topk",
            expected: "2-D matrix".into(),
            got: x.shape().to_vec(),
        });
    }
    let (m, n) = (x.shape()[0], x.shape()[1]);
    if k == 0 || k > m.min(n) {
        return Err(TensorError::Invalid {
            op: "svd_topk",
            msg: format!("k = {k} out of range for {m}x{n} matrix"),
        });
    }
    let (u_cols, mut sv) = if m >= n {
        jacobi_left(x.data(), m, n)
    } else {
        // A = (A^T)^T: left vectors of A are right vectors of A^T.
        let xt = x.transpose2()?;
        let (_, sv, v) = jacobi_full(xt.data(), n, m);
        (v, sv)
    };
    // Sort descending by singular value.
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).unwrap());
    let mut u = vec![T::zero(); m * k];
    let mut s_out = Vec::with_capacity(k);
    for (col, &src) in order.iter().take(k).enumerate() {
        for r in 0..m {
            u[r * k + col] = u_cols[r * sv.len() + src];
        }
        s_out.push(sv[src]);
    }
    sv.truncate(k);
    Ok((Tensor::from_vec(vec![m, k], u)?, s_out))
}

/// Singular values only (descending), for small matrices.
pub fn singular_values<T: Scalar>(x: &Tensor<T>) -> Result<Vec<T>> {
    let k = x.shape()[0].min(x.shape()[1]);
    let (_, s) = svd_topk(x, k)?;
    Ok(s)
}

/// One-sided Jacobi on the columns of A (m x n, m >= n): returns the
/// normalized columns (left singular vectors, m x n) and singular values.
fn jacobi_left<T: Scalar>(a: &[T], m: usize, n: usize) -> (Vec<T>, Vec<T>) {
    let (u, s, _) = jacobi_full(a, m, n);
    (u, s)
}

/// Full one-sided Jacobi: A = U diag(S) V^T with U (m x n), V (n x n).
fn jacobi_full<T: Scalar>(a: &[T], m: usize, n: usize) -> (Vec<T>, Vec<T>, Vec<T>) {
    // Column-major working copy for cheap column access.
    let mut w = vec![T::zero(); m * n];
    for r in 0..m {
        for c in 0..n {
            w[c * m + r] = a[r * n + c];
        }
    }
    let mut v = vec![T::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = T::one();
    }
    let eps = T::of_f64(1e-14);
    for _sweep in 0..64 {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                let (mut app, mut aqq, mut apq) = (T::zero(), T::zero(), T::zero());
                for r in 0..m {
                    let (x, y) = (w[p * m + r], w[q * m + r]);
                    app = app + x * x;
                    aqq = aqq + y * y;
                    apq = apq + x * y;
                }
                let denom = (app * aqq).sqrt();
                if denom > T::zero() && apq.abs() > eps * denom {
                    off = off.max(apq.abs() / denom);
                    // Jacobi rotation zeroing the (p, q) inner product.
                    let tau = (aqq - app) / (T::of_f64(2.0) * apq);
                    let t = if tau >= T::zero() {
                        T::one() / (tau + (T::one() + tau * tau).sqrt())
                    } else {
                        -T::one() / (-tau + (T::one() + tau * tau).sqrt())
                    };
                    let c = T::one() / (T::one() + t * t).sqrt();
                    let s = c * t;
                    for r in 0..m {
                        let (x, y) = (w[p * m + r], w[q * m + r]);
                        w[p * m + r] = c * x - s * y;
                        w[q * m + r] = s * x + c * y;
                    }
                    for r in 0..n {
                        let (x, y) = (v[p * n + r], v[q * n + r]);
                        v[p * n + r] = c * x - s * y;
                        v[q * n + r] = s * x + c * y;
                    }
                }
            }
        }
        if off <= eps {
            break;
        }
    }
    // Column norms are the singular values; normalize columns into U.
    let mut s = vec![T::zero(); n];
    let mut u = vec![T::zero(); m * n];
    let mut zero_cols = Vec::new();
    for c in 0..n {
        let mut norm = T::zero();
        for r in 0..m {
            norm = norm + w[c * m + r] * w[c * m + r];
        }
        let norm = norm.sqrt();
        s[c] = norm;
        if norm > T::of_f64(1e-300) {
            for r in 0..m {
                u[r * n + c] = w[c * m + r] / norm;
            }
        } else {
            zero_cols.push(c);
        }
    }
    // Null columns: fill with canonical vectors orthogonalized against the rest
    // so U keeps orthonormal columns even for rank-deficient input.
    for &c in &zero_cols {
        'cand: for cand in 0..m {
            let mut col = vec![T::zero(); m];
            col[cand] = T::one();
            for other in 0..n {
                if other == c {
                    continue;
                }
                let mut dot = T::zero();
                for r in 0..m {
                    dot = dot + col[r] * u[r * n + other];
                }
                for r in 0..m {
                    col[r] = col[r] - dot * u[r * n + other];
                }
            }
            let norm = col.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt();
            if norm > T::of_f64(1e-6) {
                for r in 0..m {
                    u[r * n + c] = col[r] / norm;
                }
                break 'cand;
            }
        }
    }
    // V is accumulated as row-major n x n with columns matching U's.
    let mut v_rm = vec![T::zero(); n * n];
    for r in 0..n {
        for c in 0..n {
            v_rm[r * n + c] = v[c * n + r];
        }
    }
    (u, s, v_rm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::RngStream;

    type T64 = Tensor<f64>;

    fn ortho_residual(u: &T64) -> f64 {
        let g = u.transpose2().unwrap().matmul(u).unwrap();
        let k = g.shape()[0];
        let mut worst = 0.0f64;
        for i in 0..k {
            for j in 0..k {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g.at(&[i, j]) - want).abs());
            }
        }
        worst
    }

    #[test]
    fn identity_singular_values() {
        let eye = T64::from_vec(
            vec![3, 3],
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        let (u, s) = svd_topk(&eye, 2).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-12 && (s[1] - 1.0).abs() < 1e-12);
        assert!(ortho_residual(&u) < 1e-8);
    }

    #[test]
    fn rank_one_singular_value() {
        let u = [1.0, -2.0, 0.5];
        let v = [3.0, 4.0];
        let mut data = Vec::new();
        for &ui in &u {
            for &vj in &v {
                data.push(ui * vj);
            }
        }
        let a = T64::from_vec(vec![3, 2], data).unwrap();
        let (_, s) = svd_topk(&a, 1).unwrap();
        let unorm: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let vnorm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((s[0] - unorm * vnorm).abs() < 1e-10, "{} vs {}", s[0], unorm * vnorm);
    }

    /// Power-iteration with deflation as an independent oracle for the
    /// dominant subspace reconstruction error.
    fn power_iteration_basis(a: &T64, k: usize) -> T64 {
        let (m, n) = (a.shape()[0], a.shape()[1]);
        let at = a.transpose2().unwrap();
        let gram = a.matmul(&at).unwrap(); // m x m
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let mut rng = RngStream::new(4242);
        for _ in 0..k {
            let mut v: Vec<f64> = (0..m).map(|_| rng.normal_f64()).collect();
            for _ in 0..500 {
                // Orthogonalize against found directions, then multiply.
                for b in &basis {
                    let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                    for (x, y) in v.iter_mut().zip(b) {
                        *x -= dot * y;
                    }
                }
                let vt = T64::from_vec(vec![m, 1], v.clone()).unwrap();
                let nv = gram.matmul(&vt).unwrap();
                let norm = nv.norm2().max(1e-300);
                v = nv.data().iter().map(|x| x / norm).collect();
            }
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= dot * y;
                }
            }
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in v.iter_mut() {
                *x /= norm;
            }
            basis.push(v);
        }
        let mut data = vec![0.0; m * k];
        for (c, b) in basis.iter().enumerate() {
            for r in 0..m {
                data[r * k + c] = b[r];
            }
        }
        let _ = n;
        T64::from_vec(vec![m, k], data).unwrap()
    }

    fn reconstruction_error(a: &T64, u: &T64) -> f64 {
        // ||A - U U^T A||_F
        let proj = u.matmul(&u.transpose2().unwrap()).unwrap().matmul(a).unwrap();
        let diff = a.zip_map(&proj, |x, y| x - y, "sub").unwrap();
        diff.norm2()
    }

    #[test]
    fn random_matrix_matches_power_iteration_oracle() {
        let mut rng = RngStream::new(17);
        let a = T64::from_vec(vec![10, 6], (0..60).map(|_| rng.normal_f64()).collect()).unwrap();
        let (u, s) = svd_topk(&a, 3).unwrap();
        assert!(ortho_residual(&u) < 1e-8);
        assert!(s[0] >= s[1] && s[1] >= s[2]);
        let oracle_u = power_iteration_basis(&a, 3);
        let e_impl = reconstruction_error(&a, &u);
        let e_oracle = reconstruction_error(&a, &oracle_u);
        assert!(
            (e_impl - e_oracle).abs() < 1e-6,
            "impl {e_impl} vs oracle {e_oracle}"
        );
    }

    #[test]
    fn k_out_of_range_rejected() {
        let a = T64::zeros(&[3, 2]);
        assert!(svd_topk(&a, 3).is_err());
        assert!(svd_topk(&a, 0).is_err());
    }

    #[test]
    fn wide_matrix_left_vectors() {
        let mut rng = RngStream::new(23);
        let a = T64::from_vec(vec![4, 9], (0..36).map(|_| rng.normal_f64()).collect()).unwrap();
        let (u, s) = svd_topk(&a, 4).unwrap();
        assert!(ortho_residual(&u) < 1e-8);
        assert!(s.windows(2).all(|w| w[0] >= w[1]));
    }
}
