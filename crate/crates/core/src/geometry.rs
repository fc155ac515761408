//! Quantitative point separation.
//!
//! For any finite set of distinct points there is a point `y` of the set and
//! a unit direction `e` seeing every other point inside a cone:
//! `(x_i - y)·e >= |x_i - y| / D`. [`separate`] builds such a pair
//! constructively, one point at a time, and certifies the constant two ways:
//! the a-priori recursion bound accumulated along the construction path and
//! the sharper per-instance worst ratio actually verified. The certificate
//! is stable under small displacements of the base point, which
//! [`neighborhood_cert`] checks with the degraded constant `D2`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lit;
use crate::Real;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("need at least two points, got {m}")]
    TooFewPoints { m: usize },
    #[error("point {index} has {got} coordinates, expected {expected}")]
    DimensionMismatch { index: usize, got: usize, expected: usize },
    #[error("points {i} and {j} coincide")]
    DuplicatePoints { i: usize, j: usize },
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("constructed direction failed verification: worst ratio {ratio:e}")]
    CertificateFailed { ratio: f64 },
}

/// Cone certificate for a point set: every `x_i != y` satisfies
/// `(x_i - y)·e >= |x_i - y| / d`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SeparationCert<T> {
    pub points: Vec<Vec<T>>,
    pub y_index: usize,
    pub e: Vec<T>,
    /// Certified per-instance constant (reciprocal of the worst verified
    /// ratio, padded by one part in 1e12 so the inequality is closed).
    pub d: T,
    /// A-priori constant accumulated by the recursion along this
    /// construction path; always an upper bound for `d`.
    pub d_bound: T,
    /// Recursion constant after each insertion, starting from the two-point
    /// base. Nondecreasing by construction.
    pub bound_path: Vec<T>,
    /// Degraded constant valid for base points displaced within `l_prime`.
    pub d2: T,
    /// Minimum pairwise separation of the input.
    pub l: T,
    /// Radius of guaranteed displacement: `l / (2 d)`.
    pub l_prime: T,
    /// Verified ratio `(x_i - y)·e / |x_i - y|` per point (1 at `y` itself).
    pub ratios: Vec<T>,
}

impl<T: Real> SeparationCert<T> {
    pub fn y(&self) -> &[T] {
        &self.points[self.y_index]
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

fn sub<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Build a cone certificate for `points` in dimension `n`.
///
/// Points are inserted in order of decreasing distance from the centroid
/// (any order is sound; far-out points first keeps the constant small). Each
/// insertion either reuses the current direction — swapping the base point
/// to the new point when it lies on the negative side — or tilts the
/// direction toward a nearly orthogonal newcomer. With `d` the constant so
/// far and `K = max(4d, 2)`, the two branches certify `K` and `2K`
/// respectively.
pub fn separate<T: Real>(
    points: &[Vec<T>],
    n: usize,
) -> Result<SeparationCert<T>, GeometryError> {
    let m = points.len();
    if m < 2 {
        return Err(GeometryError::TooFewPoints { m });
    }
    if n == 0 {
        return Err(GeometryError::ZeroDimension);
    }
    for (i, p) in points.iter().enumerate() {
        if p.len() != n {
            return Err(GeometryError::DimensionMismatch {
                index: i,
                got: p.len(),
                expected: n,
            });
        }
    }
    let mut l = T::infinity();
    for i in 0..m {
        for j in i + 1..m {
            let d = norm(&sub(&points[i], &points[j]));
            if d == T::zero() {
                return Err(GeometryError::DuplicatePoints { i, j });
            }
            l = l.min(d);
        }
    }

    // Insertion order: decreasing distance from the centroid, ties kept in
    // input order.
    let mut centroid = vec![T::zero(); n];
    for p in points {
        for (c, &v) in centroid.iter_mut().zip(p) {
            *c = *c + v;
        }
    }
    let mf = lit::<T>(m as f64);
    for c in &mut centroid {
        *c = *c / mf;
    }
    let mut order: Vec<usize> = (0..m).collect();
    let dist: Vec<T> = points.iter().map(|p| norm(&sub(p, &centroid))).collect();
    order.sort_by(|&a, &b| dist[b].partial_cmp(&dist[a]).unwrap());

    // Two-point base: the direction from the first point toward the second
    // certifies the pair with constant 1.
    let mut y = order[0];
    let mut e = sub(&points[order[1]], &points[y]);
    let en = norm(&e);
    for v in &mut e {
        *v = *v / en;
    }
    let mut d_bound = T::one();
    let mut bound_path = vec![d_bound];

    let two = lit::<T>(2.0);
    let four = lit::<T>(4.0);
    for &idx in &order[2..] {
        let k = (four * d_bound).max(two);
        let sep = sub(&points[idx], &points[y]);
        let sep_len = norm(&sep);
        let along = dot(&sep, &e);
        if along.abs() / sep_len >= T::one() / k {
            // The newcomer is safely off the orthogonal hyperplane: keep the
            // direction, and make the newcomer the base point if it sits on
            // the negative side.
            if along < T::zero() {
                y = idx;
            }
            d_bound = k;
        } else {
            // Nearly orthogonal newcomer: tilt the direction toward it.
            let alpha = two / k;
            let mut tilted: Vec<T> = e
                .iter()
                .zip(&sep)
                .map(|(&e0, &s)| e0 + alpha * s / sep_len)
                .collect();
            let tn = norm(&tilted);
            for v in &mut tilted {
                *v = *v / tn;
            }
            e = tilted;
            d_bound = two * k;
        }
        bound_path.push(d_bound);
    }

    // Exhaustive verification; the certified constant is the worst ratio.
    let mut worst = T::infinity();
    let mut ratios = Vec::with_capacity(m);
    for (i, p) in points.iter().enumerate() {
        if i == y {
            ratios.push(T::one());
            continue;
        }
        let sep = sub(p, &points[y]);
        let ratio = dot(&sep, &e) / norm(&sep);
        if !(ratio > T::zero()) {
            return Err(GeometryError::CertificateFailed {
                ratio: ratio.to_f64().unwrap_or(f64::NAN),
            });
        }
        ratios.push(ratio);
        worst = worst.min(ratio);
    }
    let pad = T::one() + lit(1e-12);
    let d = (pad / worst).max(T::one());
    let d2 = two * d * (T::one() + T::one() / (two * d));
    let l_prime = l / (two * d);
    Ok(SeparationCert {
        points: points.to_vec(),
        y_index: y,
        e,
        d,
        d_bound,
        bound_path,
        d2,
        l,
        l_prime,
        ratios,
    })
}

/// Whether the certificate's cone inequality survives moving the base point
/// to `z`, at the degraded constant `d2`. Guaranteed to hold whenever
/// `|z - y| <= l_prime`; outside that ball the answer is reported honestly.
pub fn neighborhood_cert<T: Real>(
    cert: &SeparationCert<T>,
    z: &[T],
) -> Result<bool, GeometryError> {
    let n = cert.e.len();
    if z.len() != n {
        return Err(GeometryError::DimensionMismatch {
            index: 0,
            got: z.len(),
            expected: n,
        });
    }
    for (i, p) in cert.points.iter().enumerate() {
        if i == cert.y_index {
            continue;
        }
        let sep = sub(p, z);
        let len = norm(&sep);
        if len == T::zero() {
            return Ok(false);
        }
        if dot(&sep, &cert.e) < len / cert.d2 {
            return Ok(false);
        }
    }
    Ok(true)
}
