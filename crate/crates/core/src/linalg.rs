//! Dense solvers for the small systems that show up in model fitting.
//! Matrices are row-major `Vec<f64>` of size `n * n`.

/// Solves `a x = b` for symmetric positive-definite `a` via Cholesky.
/// Returns `None` if `a` is not numerically positive definite.
pub fn cholesky_solve(a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    debug_assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k * n + i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i * n + i];
    }
    Some(x)
}

/// Least squares by modified Gram-Schmidt QR over `columns`.
///
/// A column whose residual after orthogonalization falls below `rel_tol`
/// times its own norm is reported as dependent; the error lists every such
/// column index.
pub fn least_squares_qr(columns: &[Vec<f64>], y: &[f64], rel_tol: f64) -> Result<Vec<f64>, Vec<usize>> {
    let p = columns.len();
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(p);
    let mut r = vec![0.0; p * p];
    let mut dependent = Vec::new();
    for (j, col) in columns.iter().enumerate() {
        let norm0 = dot(col, col).sqrt();
        let mut v = col.clone();
        // two passes of MGS for orthogonality at working precision
        for _ in 0..2 {
            for (k, qk) in q.iter().enumerate() {
                let c = dot(qk, &v);
                r[k * p + j] += c;
                axpy(-c, qk, &mut v);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm0 == 0.0 || norm <= rel_tol * norm0 {
            dependent.push(j);
            // keep indices aligned; a zero column contributes nothing
            q.push(vec![0.0; v.len()]);
            continue;
        }
        r[j * p + j] = norm;
        v.iter_mut().for_each(|x| *x /= norm);
        q.push(v);
    }
    if !dependent.is_empty() {
        return Err(dependent);
    }
    let qty: Vec<f64> = q.iter().map(|qk| dot(qk, y)).collect();
    let mut beta = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|k| r[i * p + k] * beta[k]).sum();
        beta[i] = (qty[i] - s) / r[i * p + i];
    }
    Ok(beta)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_2x2() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let x = cholesky_solve(&a, &[2.0, 1.0]).unwrap();
        assert!((4.0 * x[0] + 2.0 * x[1] - 2.0).abs() < 1e-14);
        assert!((2.0 * x[0] + 3.0 * x[1] - 1.0).abs() < 1e-14);
        assert!(cholesky_solve(&[1.0, 2.0, 2.0, 1.0], &[1.0, 1.0]).is_none());
    }

    #[test]
    fn qr_exact_fit_and_dependency() {
        let ones = vec![1.0; 4];
        let x = vec![0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let beta = least_squares_qr(&[ones.clone(), x.clone()], &y, 1e-10).unwrap();
        assert!((beta[0] - 2.0).abs() < 1e-12 && (beta[1] + 0.5).abs() < 1e-12);
        let twice: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert_eq!(least_squares_qr(&[ones, x, twice], &y, 1e-10), Err(vec![2]));
    }
}
