//! Small linear-algebra kernels tailored to this crate's operators: everything
//! here is either tridiagonal or matrix-free symmetric, so conjugate gradients,
//! Sturm-sequence bisection and Lanczos cover all needs without a dense library.

use crate::{lit, Real};

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum LinalgError {
    #[error("conjugate gradient did not reach relative residual {target:e} in {iters} iterations (reached {reached:e})")]
    CgNoConvergence { iters: usize, target: f64, reached: f64 },
    #[error("matrix is numerically singular")]
    Singular,
    #[error("non-finite value encountered during solve")]
    NonFinite,
}

/// Conjugate gradients for a symmetric positive definite operator, matrix-free.
///
/// `dot` must be the inner product in which `apply` is self-adjoint (the flow
/// passes its quadrature-weighted product). Converges when
/// `||r|| <= rel_tol * ||b||`; returns the iteration count used.
pub fn cg_solve<T: Real>(
    apply: &mut dyn FnMut(&[T], &mut [T]),
    b: &[T],
    x: &mut [T],
    dot: &dyn Fn(&[T], &[T]) -> T,
    rel_tol: T,
    max_iter: usize,
) -> Result<usize, LinalgError> {
    let n = b.len();
    let norm_b = dot(b, b).sqrt();
    if norm_b == T::zero() {
        x.iter_mut().for_each(|v| *v = T::zero());
        return Ok(0);
    }
    let mut r = vec![T::zero(); n];
    let mut ap = vec![T::zero(); n];
    apply(x, &mut ap);
    for i in 0..n {
        r[i] = b[i] - ap[i];
    }
    let mut p = r.clone();
    let mut rs = dot(&r, &r);
    let target = rel_tol * norm_b;
    if rs.sqrt() <= target {
        return Ok(0);
    }
    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            return Err(if pap.is_finite() {
                LinalgError::Singular
            } else {
                LinalgError::NonFinite
            });
        }
        let alpha = rs / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new = dot(&r, &r);
        if !rs_new.is_finite() {
            return Err(LinalgError::NonFinite);
        }
        if rs_new.sqrt() <= target {
            return Ok(it);
        }
        let beta = rs_new / rs;
        rs = rs_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(LinalgError::CgNoConvergence {
        iters: max_iter,
        target: target.to_f64().unwrap_or(f64::NAN),
        reached: rs.sqrt().to_f64().unwrap_or(f64::NAN),
    })
}

/// LU solve with partial pivoting for a general tridiagonal system.
///
/// `sub[i]` couples row `i+1` to column `i`, `sup[i]` row `i` to column `i+1`.
/// Pivoting introduces one extra superdiagonal of fill-in; safe for the
/// indefinite shifted systems inverse iteration produces.
pub fn tridiag_solve<T: Real>(
    sub: &[T],
    diag: &[T],
    sup: &[T],
    rhs: &[T],
) -> Result<Vec<T>, LinalgError> {
    let n = diag.len();
    assert!(sub.len() + 1 == n && sup.len() + 1 == n && rhs.len() == n);
    let dl = sub.to_vec();
    let mut d = diag.to_vec();
    let mut du = sup.to_vec();
    let mut du2 = vec![T::zero(); n.saturating_sub(2)];
    let mut b = rhs.to_vec();
    for i in 0..n - 1 {
        if dl[i] == T::zero() {
            if d[i] == T::zero() {
                return Err(LinalgError::Singular);
            }
        } else if d[i].abs() >= dl[i].abs() {
            let fact = dl[i] / d[i];
            d[i + 1] -= fact * du[i];
            let bi = b[i];
            b[i + 1] -= fact * bi;
        } else {
            // swap rows i and i+1, then eliminate
            let fact = d[i] / dl[i];
            d[i] = dl[i];
            let tmp = d[i + 1];
            d[i + 1] = du[i] - fact * tmp;
            if i + 2 < n {
                du2[i] = du[i + 1];
                du[i + 1] = -fact * du2[i];
            }
            du[i] = tmp;
            let tb = b[i];
            let tb1 = b[i + 1];
            b[i] = tb1;
            b[i + 1] = tb - fact * tb1;
        }
    }
    if d[n - 1] == T::zero() {
        return Err(LinalgError::Singular);
    }
    let mut x = vec![T::zero(); n];
    x[n - 1] = b[n - 1] / d[n - 1];
    if n >= 2 {
        x[n - 2] = (b[n - 2] - du[n - 2] * x[n - 1]) / d[n - 2];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        x[i] = (b[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / d[i];
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    Ok(x)
}

/// Number of eigenvalues of the symmetric tridiagonal `(diag, off)` strictly
/// below `x`, by the Sturm sign-count of the `LDL^T` recurrence.
pub fn sturm_count<T: Real>(diag: &[T], off: &[T], x: T) -> usize {
    let n = diag.len();
    let tiny = T::min_positive_value() / T::epsilon();
    let mut count = 0usize;
    let mut q = diag[0] - x;
    if q < T::zero() {
        count += 1;
    }
    for i in 1..n {
        if q == T::zero() {
            q = tiny;
        }
        q = diag[i] - x - off[i - 1] * off[i - 1] / q;
        if q < T::zero() {
            count += 1;
        }
    }
    count
}

/// The `k` smallest eigenvalues of a symmetric tridiagonal matrix, ascending,
/// by bisection on Sturm counts. Robust for clustered and degenerate spectra.
pub fn sym_tridiag_smallest<T: Real>(diag: &[T], off: &[T], k: usize) -> Vec<T> {
    let n = diag.len();
    let k = k.min(n);
    // Gershgorin bounds
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for i in 0..n {
        let mut r = T::zero();
        if i > 0 {
            r += off[i - 1].abs();
        }
        if i + 1 < n {
            r += off[i].abs();
        }
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    let span = (hi - lo).max(T::min_positive_value());
    (0..k)
        .map(|j| {
            // smallest x with sturm_count(x) >= j+1
            let mut a = lo;
            let mut b = hi;
            for _ in 0..200 {
                let mid = (a + b) * lit(0.5);
                if mid <= a || mid >= b {
                    break;
                }
                if sturm_count(diag, off, mid) >= j + 1 {
                    b = mid;
                } else {
                    a = mid;
                }
                if b - a <= span * T::epsilon() * lit(4.0) {
                    break;
                }
            }
            (a + b) * lit(0.5)
        })
        .collect()
}

/// Eigenvector of a symmetric tridiagonal matrix for (an approximation of) the
/// eigenvalue `lambda`, by shifted inverse iteration. Returned 2-normalized,
/// sign fixed so the entry of largest magnitude is positive.
pub fn sym_tridiag_eigenvector<T: Real>(diag: &[T], off: &[T], lambda: T) -> Vec<T> {
    let n = diag.len();
    let scale: T = diag.iter().fold(T::zero(), |m, &d| m.max(d.abs()));
    let mut shift = lambda;
    let mut v: Vec<T> = (0..n)
        .map(|i| lit::<T>(1.0) + lit::<T>(0.5) * lit::<T>((i as f64 * 1.618_033).sin()))
        .collect();
    normalize(&mut v);
    for attempt in 0..6 {
        let d: Vec<T> = diag.iter().map(|&x| x - shift).collect();
        match tridiag_solve(off, &d, off, &v) {
            Ok(mut w) => {
                normalize(&mut w);
                v = w;
            }
            Err(_) => {
                // sitting exactly on the eigenvalue: nudge the shift
                shift = lambda + scale * T::epsilon() * lit(f64::from(attempt as u32 + 1));
            }
        }
    }
    let mut imax = 0;
    for i in 1..n {
        if v[i].abs() > v[imax].abs() {
            imax = i;
        }
    }
    if v[imax] < T::zero() {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

fn normalize<T: Real>(v: &mut [T]) {
    let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
    if norm > T::zero() {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Lanczos with full reorthogonalization for a symmetric operator, returning
/// the `num_eigs` smallest Ritz values.
///
/// `project`, when given, is applied to the start vector and to every new
/// Krylov vector; passing an orthogonal-projection (onto a constraint subspace
/// or a symmetry sector) restricts the spectrum computation to that subspace.
pub fn lanczos_smallest<T: Real>(
    apply: &mut dyn FnMut(&[T], &mut [T]),
    n: usize,
    num_eigs: usize,
    max_iters: usize,
    project: Option<&dyn Fn(&mut [T])>,
) -> Vec<T> {
    let mut basis: Vec<Vec<T>> = Vec::new();
    let mut alphas: Vec<T> = Vec::new();
    let mut betas: Vec<T> = Vec::new();
    // Deterministic pseudo-random start vector.
    let mut v: Vec<T> = (0..n)
        .map(|i| lit::<T>(((i as f64 * 2.399_963 + 0.7).sin() + 1.3).recip() - 0.4))
        .collect();
    if let Some(p) = project {
        p(&mut v);
    }
    normalize(&mut v);
    let mut w = vec![T::zero(); n];
    let mut prev_ritz: Vec<T> = Vec::new();
    let mut stable_rounds = 0usize;
    for it in 0..max_iters {
        apply(&v, &mut w);
        if let Some(p) = project {
            p(&mut w);
        }
        let alpha = dot_plain(&v, &w);
        alphas.push(alpha);
        for i in 0..n {
            w[i] -= alpha * v[i];
        }
        if let Some(prev) = basis.last() {
            let beta_prev = *betas.last().unwrap();
            for i in 0..n {
                w[i] -= beta_prev * prev[i];
            }
        }
        // full reorthogonalization (twice for safety)
        for _pass in 0..2 {
            for q in &basis {
                let c = dot_plain(q, &w);
                for i in 0..n {
                    w[i] -= c * q[i];
                }
            }
            let c = dot_plain(&v, &w);
            for i in 0..n {
                w[i] -= c * v[i];
            }
        }
        basis.push(std::mem::replace(&mut v, Vec::new()));
        let beta = dot_plain(&w, &w).sqrt();
        if beta <= T::epsilon() * lit(16.0) {
            // Invariant subspace exhausted: restart with a fresh direction.
            let mut fresh: Vec<T> = (0..n)
                .map(|i| lit::<T>(((i as f64 * 1.112_41 + (it as f64)).cos()) * 0.5))
                .collect();
            if let Some(p) = project {
                p(&mut fresh);
            }
            for q in &basis {
                let c = dot_plain(q, &fresh);
                for i in 0..n {
                    fresh[i] -= c * q[i];
                }
            }
            let nrm = dot_plain(&fresh, &fresh).sqrt();
            if nrm <= T::epsilon() * lit(16.0) {
                break; // whole (projected) space spanned
            }
            fresh.iter_mut().for_each(|x| *x /= nrm);
            v = fresh;
            betas.push(T::zero());
            continue;
        }
        v = w.iter().map(|&x| x / beta).collect();
        // Re-project the new direction: when the operator does not preserve
        // the constraint subspace, roundoff leakage divided by a small beta
        // would otherwise grow and pull in out-of-subspace eigenvalues.
        if let Some(p) = project {
            p(&mut v);
            normalize(&mut v);
        }
        betas.push(beta);
        // Convergence check on the bottom Ritz values every few iterations.
        if alphas.len() >= num_eigs + 2 && it % 5 == 0 {
            let ritz = sym_tridiag_smallest(&alphas, &betas[..alphas.len() - 1], num_eigs);
            if ritz_stable(&prev_ritz, &ritz) {
                stable_rounds += 1;
                if stable_rounds >= 3 {
                    return ritz;
                }
            } else {
                stable_rounds = 0;
            }
            prev_ritz = ritz;
        }
    }
    let m = alphas.len();
    if m == 0 {
        return Vec::new();
    }
    sym_tridiag_smallest(&alphas, &betas[..m - 1], num_eigs.min(m))
}

fn ritz_stable<T: Real>(prev: &[T], cur: &[T]) -> bool {
    if prev.len() != cur.len() || cur.is_empty() {
        return false;
    }
    let scale = cur.iter().fold(lit::<T>(1e-12), |m, &x| m.max(x.abs()));
    prev.iter()
        .zip(cur)
        .all(|(&a, &b)| (a - b).abs() <= scale * lit(1e-11))
}

fn dot_plain<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Cholesky factor `B = L L^T` of a symmetric positive definite tridiagonal
/// matrix; `L` is lower bidiagonal, returned as `(diagonal, subdiagonal)`.
pub fn tridiag_cholesky<T: Real>(diag: &[T], off: &[T]) -> Result<(Vec<T>, Vec<T>), LinalgError> {
    let n = diag.len();
    assert_eq!(off.len() + 1, n);
    let mut ld = vec![T::zero(); n];
    let mut ls = vec![T::zero(); n - 1];
    for i in 0..n {
        let s = if i == 0 { T::zero() } else { ls[i - 1] * ls[i - 1] };
        let v = diag[i] - s;
        if !(v > T::zero()) {
            return Err(if v.is_finite() { LinalgError::Singular } else { LinalgError::NonFinite });
        }
        ld[i] = v.sqrt();
        if i + 1 < n {
            ls[i] = off[i] / ld[i];
        }
    }
    Ok((ld, ls))
}

/// Solve `L x = b` with the lower bidiagonal factor from [`tridiag_cholesky`].
pub fn bidiag_solve_lower<T: Real>(ld: &[T], ls: &[T], b: &[T], x: &mut [T]) {
    let n = ld.len();
    x[0] = b[0] / ld[0];
    for i in 1..n {
        x[i] = (b[i] - ls[i - 1] * x[i - 1]) / ld[i];
    }
}

/// Solve `L^T x = b` with the lower bidiagonal factor from [`tridiag_cholesky`].
pub fn bidiag_solve_upper<T: Real>(ld: &[T], ls: &[T], b: &[T], x: &mut [T]) {
    let n = ld.len();
    x[n - 1] = b[n - 1] / ld[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = (b[i] - ls[i] * x[i + 1]) / ld[i];
    }
}

/// Gaussian elimination with partial pivoting for small dense systems,
/// returning the solution and a 1-norm condition estimate (via the explicit
/// inverse; intended for M x M weight systems with M <= ~12).
pub fn solve_dense_small<T: Real>(a: &[Vec<T>], b: &[T]) -> Result<(Vec<T>, T), LinalgError> {
    let n = a.len();
    assert!(a.iter().all(|row| row.len() == n) && b.len() == n);
    // Augment with rhs and identity to get solution + inverse in one sweep.
    let mut m: Vec<Vec<T>> = (0..n)
        .map(|i| {
            let mut row = a[i].clone();
            row.push(b[i]);
            for j in 0..n {
                row.push(if i == j { T::one() } else { T::zero() });
            }
            row
        })
        .collect();
    let cols = 2 * n + 1;
    for k in 0..n {
        let mut piv = k;
        for i in k + 1..n {
            if m[i][k].abs() > m[piv][k].abs() {
                piv = i;
            }
        }
        if m[piv][k].abs() == T::zero() {
            return Err(LinalgError::Singular);
        }
        m.swap(k, piv);
        let d = m[k][k];
        for j in k..cols {
            m[k][j] /= d;
        }
        for i in 0..n {
            if i != k {
                let factor = m[i][k];
                if factor != T::zero() {
                    for j in k..cols {
                        let sub = factor * m[k][j];
                        m[i][j] -= sub;
                    }
                }
            }
        }
    }
    let x: Vec<T> = (0..n).map(|i| m[i][n]).collect();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let norm1 = |get: &dyn Fn(usize, usize) -> T| -> T {
        (0..n)
            .map(|j| (0..n).map(|i| get(i, j).abs()).sum::<T>())
            .fold(T::zero(), |acc, s| acc.max(s))
    };
    let a_norm = norm1(&|i, j| a[i][j]);
    let inv_norm = norm1(&|i, j| m[i][n + 1 + j]);
    Ok((x, a_norm * inv_norm))
}
