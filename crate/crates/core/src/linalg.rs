//! Dense kernels for the small symmetric systems the Newton solvers produce.

/// In-place Cholesky factorization of an `n x n` row-major SPD matrix.
///
/// On success the lower triangle holds `L` with `A = L L^T`. Returns `false`
/// when a pivot is not strictly positive.
pub fn cholesky_in_place(a: &mut [f64], n: usize) -> bool {
    debug_assert_eq!(a.len(), n * n);
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return false;
        }
        let ljj = diag.sqrt();
        a[j * n + j] = ljj;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / ljj;
        }
    }
    true
}

/// Solves `L L^T x = b` given the factor from [`cholesky_in_place`].
pub fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solves the SPD system `a x = b`, overwriting `b` with `x`.
pub fn solve_spd(a: &mut [f64], n: usize, b: &mut [f64]) -> bool {
    if !cholesky_in_place(a, n) {
        return false;
    }
    cholesky_solve(a, n, b);
    true
}
