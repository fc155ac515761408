//! Radial ground states of `Lap xi = f(xi)` by shooting.
//!
//! The radial equation is `xi'' + (n-1)/r xi' = f(xi)` with `xi'(0) = 0`,
//! integrated by fixed-step RK4 from a series start at the center. The shooting
//! parameter `xi(0)` is bisected on the dichotomy: trajectories that cross zero
//! start above the ground-state value, trajectories that turn upward while
//! positive start below it. Profiles decay like `e^{-m r} r^{-(n-1)/2}` with
//! `m = sqrt(f'(0))`.

use crate::reaction::Nonlinearity;
use crate::{lit, sphere_area, Real};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum GroundStateError {
    #[error("dimension must be >= 1, got {0}")]
    BadDimension(usize),
    #[error("r_max = {r_max} too short; need at least 20 decay lengths ({need})")]
    DomainTooShort { r_max: f64, need: f64 },
    #[error("step h = {h} too coarse; need at most decay_length/50 = {need}")]
    StepTooCoarse { h: f64, need: f64 },
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("no shooting bracket found in scan range (up to {scanned_to}); the profile family may admit no ground state here")]
    NoBracket { scanned_to: f64 },
    #[error("truncated profile covers only {covered} of requested {r_max}")]
    TruncatedTooShort { covered: f64, r_max: f64 },
    #[error("ODE residual {residual:e} exceeds cap {cap:e}; step size too coarse for this family")]
    ResidualTooLarge { residual: f64, cap: f64 },
    #[error("decay report needs r_lo >= 2 decay lengths and >= 50 nodes beyond it")]
    DecayWindowInvalid,
    #[error("Emden-Fowler reduction needs n >= 2")]
    EmdenFowlerDimension,
    #[error("profile file malformed: {0}")]
    Parse(String),
}

/// A shot radial profile on the uniform grid `r_i = i h`, `i = 0..len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RadialProfile<T> {
    pub n: usize,
    pub h: T,
    pub xi: Vec<T>,
    pub dxi: Vec<T>,
    /// Shooting parameter `xi(0)` the bisection settled on.
    pub xi0: T,
    /// Decay rate `m = sqrt(f'(0))`.
    pub m: T,
    /// Tail-law constant: beyond the grid, `xi(r) ~ tail_coeff * e^{-m r} r^{-(n-1)/2}`.
    pub tail_coeff: T,
    /// Bisection tolerance the profile was produced with.
    pub tol: T,
}

pub struct ShootOpts<T> {
    pub r_max: T,
    pub h: T,
    /// Relative bracket-width target for the bisection; the iteration also
    /// stops when the bracket can no longer shrink in floating point.
    pub tol: T,
    /// Scan upper cap for the shooting parameter, as a multiple of the positive
    /// zero of `f`. Mostly useful to force the no-bracket error path in tests.
    pub scan_cap: Option<T>,
    /// Cap on the relative interior ODE residual of the accepted profile.
    pub residual_cap: Option<T>,
    /// Minimum radius the truncated profile must reach (default 10 decay
    /// lengths; single precision may need less).
    pub min_coverage: Option<T>,
}

impl<T: Real> ShootOpts<T> {
    pub fn new(r_max: T, h: T, tol: T) -> Self {
        Self { r_max, h, tol, scan_cap: None, residual_cap: None, min_coverage: None }
    }
}

enum Outcome {
    /// `xi` went negative: shooting parameter above the ground-state value.
    Crossed,
    /// `xi' > 0` while `xi > 0`: parameter below the ground-state value.
    Turned,
    /// Reached `r_max` positive and decreasing (treated as "not crossed").
    Reached,
}

struct Trajectory<T> {
    xi: Vec<T>,
    dxi: Vec<T>,
    outcome: Outcome,
}

/// Shoot the ground-state profile. See [`shoot_opts`] for knobs.
pub fn shoot<T: Real>(
    nl: &Nonlinearity<T>,
    n: usize,
    r_max: T,
    h: T,
    tol: T,
) -> Result<RadialProfile<T>, GroundStateError> {
    shoot_opts(nl, n, ShootOpts::new(r_max, h, tol))
}

pub fn shoot_opts<T: Real>(
    nl: &Nonlinearity<T>,
    n: usize,
    opts: ShootOpts<T>,
) -> Result<RadialProfile<T>, GroundStateError> {
    if n == 0 {
        return Err(GroundStateError::BadDimension(n));
    }
    let ShootOpts { r_max, h, tol, scan_cap, residual_cap, min_coverage } = opts;
    let ell = nl.decay_length();
    if !(r_max >= lit::<T>(20.0) * ell) {
        return Err(GroundStateError::DomainTooShort {
            r_max: r_max.to_f64().unwrap_or(f64::NAN),
            need: (lit::<T>(20.0) * ell).to_f64().unwrap_or(f64::NAN),
        });
    }
    if !(h > T::zero()) || h > ell / lit(50.0) {
        return Err(GroundStateError::StepTooCoarse {
            h: h.to_f64().unwrap_or(f64::NAN),
            need: (ell / lit::<T>(50.0)).to_f64().unwrap_or(f64::NAN),
        });
    }
    if !(tol > T::zero()) {
        return Err(GroundStateError::BadTolerance(tol.to_f64().unwrap_or(f64::NAN)));
    }
    let steps = (r_max / h).to_f64().unwrap().round() as usize;

    // Scan a geometric grid of shooting parameters above the positive zero of f
    // until a crossing trajectory brackets the dichotomy from above.
    let t1 = nl.positive_zero();
    let cap = t1 * scan_cap.unwrap_or_else(|| lit(1e4));
    let growth = lit::<T>(1.15);
    let mut lo = t1 * lit(1.02);
    let mut hi = None;
    let mut s = lo;
    loop {
        match integrate(nl, n, s, h, steps).outcome {
            Outcome::Crossed => {
                hi = Some(s);
                break;
            }
            _ => lo = s,
        }
        s = s * growth;
        if s > cap {
            break;
        }
    }
    let mut hi = hi.ok_or(GroundStateError::NoBracket {
        scanned_to: cap.to_f64().unwrap_or(f64::NAN),
    })?;

    for _ in 0..400 {
        if hi - lo <= tol * hi {
            break;
        }
        let mid = (lo + hi) * lit(0.5);
        if mid <= lo || mid >= hi {
            break; // bracket exhausted in floating point
        }
        match integrate(nl, n, mid, h, steps).outcome {
            Outcome::Crossed => hi = mid,
            _ => lo = mid,
        }
    }
    let xi0 = (lo + hi) * lit(0.5);
    let traj = integrate(nl, n, xi0, h, steps);

    // Truncate at the last node where the profile is positive and decreasing,
    // then cut back a further 5 decay lengths: near the monotonicity failure
    // the trajectory is dominated by the unstable mode (deviation grows like
    // e^{+mr}), and the retreat shrinks that contamination to ~e^{-10}.
    let mut cut = traj.xi.len();
    for i in 1..traj.xi.len() {
        if traj.xi[i] <= T::zero() || traj.xi[i] > traj.xi[i - 1] {
            cut = i;
            break;
        }
    }
    let min_cov = min_coverage.unwrap_or_else(|| lit::<T>(10.0) * ell);
    let covered_raw = h * lit::<T>((cut - 1) as f64);
    let guard = (lit::<T>(5.0) * ell).min((covered_raw - min_cov).max(T::zero()));
    cut -= (guard / h).to_f64().unwrap().floor() as usize;
    let xi = traj.xi[..cut].to_vec();
    let dxi = traj.dxi[..cut].to_vec();
    let covered = h * lit::<T>((cut - 1) as f64);
    if covered < min_cov {
        return Err(GroundStateError::TruncatedTooShort {
            covered: covered.to_f64().unwrap_or(f64::NAN),
            r_max: r_max.to_f64().unwrap_or(f64::NAN),
        });
    }

    let m = nl.decay_rate();
    let r_last = covered;
    let a = lit::<T>((n - 1) as f64 / 2.0);
    let tail_coeff = xi[cut - 1] * (m * r_last).exp() * r_last.powf(a);
    let profile = RadialProfile { n, h, xi, dxi, xi0, m, tail_coeff, tol };

    let residual = profile.ode_residual_rel_max(nl);
    let a0 = nl.a0();
    let kappa = T::one() + a0 + T::one() / a0;
    let cap = residual_cap.unwrap_or(lit::<T>(1e3) * h * h * kappa);
    if residual > cap {
        return Err(GroundStateError::ResidualTooLarge {
            residual: residual.to_f64().unwrap_or(f64::NAN),
            cap: cap.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(profile)
}

/// Fixed-step RK4 for `xi'' + (n-1)/r xi' = f(xi)`, with the center handled by
/// the series `xi(r) = s + f(s) r^2/(2n) + f'(s) f(s) r^4/(8n(n+2)) + O(r^6)`.
fn integrate<T: Real>(nl: &Nonlinearity<T>, n: usize, s: T, h: T, steps: usize) -> Trajectory<T> {
    let nm1 = lit::<T>((n - 1) as f64);
    let nf = lit::<T>(n as f64);
    let rhs = |r: T, x: T, v: T| -> (T, T) {
        let xp = x.max(T::zero()); // f only evaluated on the physical range
        let acc = if r == T::zero() {
            nl.f_raw(xp) / nf
        } else {
            nl.f_raw(xp) - nm1 * v / r
        };
        (v, acc)
    };
    let mut xi = Vec::with_capacity(steps + 1);
    let mut dxi = Vec::with_capacity(steps + 1);
    xi.push(s);
    dxi.push(T::zero());

    // series first node
    let fs = nl.f_raw(s);
    let c2 = fs / (lit::<T>(2.0) * nf);
    let c4 = nl.df_raw(s) * fs / (lit::<T>(8.0) * nf * (nf + lit(2.0)));
    let mut x = s + c2 * h * h + c4 * h * h * h * h;
    let mut v = lit::<T>(2.0) * c2 * h + lit::<T>(4.0) * c4 * h * h * h;
    xi.push(x);
    dxi.push(v);

    let mut outcome = Outcome::Reached;
    let half = lit::<T>(0.5);
    let sixth = lit::<T>(1.0 / 6.0);
    let two = lit::<T>(2.0);
    for i in 1..steps {
        let r = h * lit::<T>(i as f64);
        let (k1x, k1v) = rhs(r, x, v);
        let (k2x, k2v) = rhs(r + half * h, x + half * h * k1x, v + half * h * k1v);
        let (k3x, k3v) = rhs(r + half * h, x + half * h * k2x, v + half * h * k2v);
        let (k4x, k4v) = rhs(r + h, x + h * k3x, v + h * k3v);
        x = x + h * sixth * (k1x + two * k2x + two * k3x + k4x);
        v = v + h * sixth * (k1v + two * k2v + two * k3v + k4v);
        xi.push(x);
        dxi.push(v);
        if x <= T::zero() {
            outcome = Outcome::Crossed;
            break;
        }
        if v > T::zero() {
            outcome = Outcome::Turned;
            break;
        }
    }
    Trajectory { xi, dxi, outcome }
}

/// Diagnostics of the tail decay law, computed on grid nodes with `r >= r_lo`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DecayReport<T> {
    pub r_lo: T,
    pub r_hi: T,
    pub nodes: usize,
    /// Extremes of `xi(r) e^{m r} max(r,1)^{(n-1)/2}` over the window.
    pub band_min: T,
    pub band_max: T,
    /// `band_max / band_min`.
    pub band_ratio: T,
    /// Extremes of the logarithmic derivative `-xi'/xi` over the window.
    pub logderiv_min: T,
    pub logderiv_max: T,
}

impl<T: Real> RadialProfile<T> {
    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    pub fn r_last(&self) -> T {
        self.h * lit((self.xi.len() - 1) as f64)
    }

    pub fn decay_length(&self) -> T {
        T::one() / self.m
    }

    fn tail_value(&self, r: T) -> T {
        let a = lit::<T>((self.n - 1) as f64 / 2.0);
        self.tail_coeff * (-self.m * r).exp() * r.powf(-a)
    }

    /// Profile value at arbitrary radius: cubic (4-point Lagrange)
    /// interpolation on the grid, even reflection at the center, tail law
    /// beyond the last node.
    pub fn sample(&self, r: T) -> T {
        let r = r.abs();
        if r > self.r_last() {
            return self.tail_value(r);
        }
        interp4(&self.xi, self.h, r, true)
    }

    /// Radial derivative at arbitrary radius (odd at the center, tail law beyond).
    pub fn sample_deriv(&self, r: T) -> T {
        let r = r.abs();
        if r > self.r_last() {
            let a = lit::<T>((self.n - 1) as f64 / 2.0);
            return -self.tail_value(r) * (self.m + a / r);
        }
        interp4(&self.dxi, self.h, r, false)
    }

    /// `||xi||_{L^2(R^n)}^2` by trapezoid quadrature with surface-measure weights.
    pub fn l2_norm_squared(&self) -> T {
        let sigma = sphere_area::<T>(self.n);
        let mut sum = T::zero();
        for i in 0..self.xi.len() {
            let r = self.h * lit::<T>(i as f64);
            let w = if i == 0 || i + 1 == self.xi.len() { lit::<T>(0.5) } else { T::one() };
            sum += w * self.xi[i] * self.xi[i] * r.powi(self.n as i32 - 1);
        }
        sigma * sum * self.h
    }

    /// Max over interior nodes of the relative ODE residual
    /// `|D2 xi + (n-1)/r D xi - f(xi)| / (|f(xi)| + a0 xi + eps)`,
    /// with the centered second/first differences of the stored values.
    pub fn ode_residual_rel_max(&self, nl: &Nonlinearity<T>) -> T {
        let n = self.xi.len();
        if n < 3 {
            return T::zero();
        }
        let h2 = self.h * self.h;
        let nm1 = lit::<T>((self.n - 1) as f64);
        let a0 = nl.a0();
        let floor = T::epsilon() * self.xi0.max(T::one());
        let mut worst = T::zero();
        for i in 1..n - 1 {
            let r = self.h * lit::<T>(i as f64);
            let d2 = (self.xi[i + 1] - lit::<T>(2.0) * self.xi[i] + self.xi[i - 1]) / h2;
            let d1 = (self.xi[i + 1] - self.xi[i - 1]) / (lit::<T>(2.0) * self.h);
            let f = nl.f_raw(self.xi[i].max(T::zero()));
            let res = (d2 + nm1 * d1 / r - f).abs();
            let scale = f.abs() + a0 * self.xi[i].abs() + floor;
            worst = worst.max(res / scale);
        }
        worst
    }

    /// Tail decay diagnostics on `r >= r_lo`. Needs `r_lo >= 2/m` and at least
    /// 50 grid nodes beyond `r_lo`.
    pub fn decay_report(&self, r_lo: T) -> Result<DecayReport<T>, GroundStateError> {
        if r_lo < lit::<T>(2.0) * self.decay_length() {
            return Err(GroundStateError::DecayWindowInvalid);
        }
        let start = (r_lo / self.h).to_f64().unwrap().ceil() as usize;
        if start + 50 > self.xi.len() {
            return Err(GroundStateError::DecayWindowInvalid);
        }
        let a = lit::<T>((self.n - 1) as f64 / 2.0);
        let mut band_min = T::infinity();
        let mut band_max = T::neg_infinity();
        let mut ld_min = T::infinity();
        let mut ld_max = T::neg_infinity();
        for i in start..self.xi.len() {
            let r = self.h * lit::<T>(i as f64);
            let band = self.xi[i] * (self.m * r).exp() * r.powf(a);
            band_min = band_min.min(band);
            band_max = band_max.max(band);
            let ld = -self.dxi[i] / self.xi[i];
            ld_min = ld_min.min(ld);
            ld_max = ld_max.max(ld);
        }
        Ok(DecayReport {
            r_lo,
            r_hi: self.r_last(),
            nodes: self.xi.len() - start,
            band_min,
            band_max,
            band_ratio: band_max / band_min,
            logderiv_min: ld_min,
            logderiv_max: ld_max,
        })
    }

    /// Max absolute residual of the Emden-Fowler reduction
    /// `w'' = w (a(a-1)/r^2 + f(xi)/xi)`, `w = r^a xi`, `a = (n-1)/2`,
    /// over interior nodes with `r >= 1`. Needs `n >= 2`.
    pub fn emden_fowler_residual(&self, nl: &Nonlinearity<T>) -> Result<T, GroundStateError> {
        if self.n < 2 {
            return Err(GroundStateError::EmdenFowlerDimension);
        }
        Ok(self.emden_fowler_residual_with(&|xi: T| nl.f_raw(xi.max(T::zero())) / xi))
    }

    /// Same reduction with an explicit coefficient function `xi -> f(xi)/xi`
    /// (lets manufactured closed-form profiles serve as oracles).
    pub fn emden_fowler_residual_with(&self, coeff: &dyn Fn(T) -> T) -> T {
        let a = lit::<T>((self.n - 1) as f64 / 2.0);
        let w: Vec<T> = (0..self.xi.len())
            .map(|i| {
                let r = self.h * lit::<T>(i as f64);
                r.powf(a) * self.xi[i]
            })
            .collect();
        let h2 = self.h * self.h;
        let mut worst = T::zero();
        for i in 1..w.len() - 1 {
            let r = self.h * lit::<T>(i as f64);
            if r < T::one() {
                continue;
            }
            let d2 = (w[i + 1] - lit::<T>(2.0) * w[i] + w[i - 1]) / h2;
            let pot = a * (a - T::one()) / (r * r) + coeff(self.xi[i]);
            worst = worst.max((d2 - w[i] * pot).abs());
        }
        worst
    }

    /// Write the profile as two-column CSV with a `#`-prefixed header.
    pub fn write_csv<W: Write>(&self, mut w: W, extra: &[(&str, String)]) -> std::io::Result<()> {
        writeln!(w, "# n = {}", self.n)?;
        writeln!(w, "# m = {:e}", self.m)?;
        writeln!(w, "# h = {:e}", self.h)?;
        writeln!(w, "# xi0 = {:e}", self.xi0)?;
        writeln!(w, "# tol = {:e}", self.tol)?;
        for (k, v) in extra {
            writeln!(w, "# {} = {}", k, v)?;
        }
        writeln!(w, "r,xi")?;
        for i in 0..self.xi.len() {
            let r = self.h * lit::<T>(i as f64);
            writeln!(w, "{:e},{:e}", r, self.xi[i])?;
        }
        Ok(())
    }

    /// Parse a profile written by [`write_csv`]. The derivative column is not
    /// stored on disk; it is reconstructed by fourth-order finite differences.
    pub fn read_csv<R: BufRead>(n_hint: Option<usize>, r: R) -> Result<Self, GroundStateError> {
        let mut n: Option<usize> = n_hint;
        let mut m: Option<T> = None;
        let mut h: Option<T> = None;
        let mut xi0: Option<T> = None;
        let mut tol: Option<T> = None;
        let mut xi: Vec<T> = Vec::new();
        let mut saw_header = false;
        for line in r.lines() {
            let line = line.map_err(|e| GroundStateError::Parse(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.split_once('=') {
                    let (k, v) = (k.trim(), v.trim());
                    let parse = |v: &str| -> Option<T> {
                        v.parse::<f64>().ok().and_then(T::from_f64)
                    };
                    match k {
                        "n" => n = v.parse().ok(),
                        "m" => m = parse(v),
                        "h" => h = parse(v),
                        "xi0" => xi0 = parse(v),
                        "tol" => tol = parse(v),
                        _ => {}
                    }
                }
                continue;
            }
            if line == "r,xi" {
                saw_header = true;
                continue;
            }
            let (_, b) = line
                .split_once(',')
                .ok_or_else(|| GroundStateError::Parse(format!("bad row: {line}")))?;
            let v = b
                .trim()
                .parse::<f64>()
                .ok()
                .and_then(T::from_f64)
                .ok_or_else(|| GroundStateError::Parse(format!("bad value: {b}")))?;
            xi.push(v);
        }
        if !saw_header || xi.len() < 8 {
            return Err(GroundStateError::Parse("missing header or too few rows".into()));
        }
        let n = n.ok_or_else(|| GroundStateError::Parse("missing n".into()))?;
        let m = m.ok_or_else(|| GroundStateError::Parse("missing m".into()))?;
        let h = h.ok_or_else(|| GroundStateError::Parse("missing h".into()))?;
        let xi0 = xi0.unwrap_or(xi[0]);
        let tol = tol.unwrap_or_else(|| lit(1e-12));

        // dxi by 4th-order centered differences; odd symmetry at the center.
        let len = xi.len();
        let mut dxi = vec![T::zero(); len];
        let c12 = lit::<T>(12.0) * h;
        let at = |i: isize| -> T {
            if i < 0 {
                xi[(-i) as usize] // even reflection
            } else {
                xi[i as usize]
            }
        };
        for i in 0..len {
            let ii = i as isize;
            if i + 2 < len {
                dxi[i] = (at(ii - 2) - lit::<T>(8.0) * at(ii - 1) + lit::<T>(8.0) * at(ii + 1)
                    - at(ii + 2))
                    / c12;
            } else {
                // one-sided second-order at the right edge
                let hm = lit::<T>(2.0) * h;
                dxi[i] = if i + 1 < len {
                    (xi[i + 1] - xi[i - 1]) / hm
                } else {
                    (xi[i] - xi[i - 1]) / h
                };
            }
        }
        dxi[0] = T::zero();

        let r_last = h * lit::<T>((len - 1) as f64);
        let a = lit::<T>((n - 1) as f64 / 2.0);
        let tail_coeff = xi[len - 1] * (m * r_last).exp() * r_last.powf(a);
        Ok(RadialProfile { n, h, xi, dxi, xi0, m, tail_coeff, tol })
    }
}

/// 4-point Lagrange interpolation on a uniform grid starting at 0. `even`
/// reflects across the origin (value data); otherwise reflection is odd
/// (derivative data).
fn interp4<T: Real>(vals: &[T], h: T, r: T, even: bool) -> T {
    let len = vals.len();
    let pos = (r / h).to_f64().unwrap();
    let i = (pos.floor() as isize).clamp(0, len as isize - 2);
    let t = lit::<T>(pos) - lit::<T>(i as f64); // in [0,1]
    let get = |j: isize| -> T {
        if j < 0 {
            if even {
                vals[(-j) as usize]
            } else {
                -vals[(-j) as usize]
            }
        } else {
            let j = (j as usize).min(len - 1);
            vals[j]
        }
    };
    // nodes i-1, i, i+1, i+2 at local coordinates -1, 0, 1, 2
    let (p0, p1, p2, p3) = (get(i - 1), get(i), get(i + 1), get(i + 2));
    let one = T::one();
    let two = lit::<T>(2.0);
    let six = lit::<T>(6.0);
    let l0 = -(t * (t - one) * (t - two)) / six;
    let l1 = (t + one) * (t - one) * (t - two) / two;
    let l2 = -(t + one) * t * (t - two) / two;
    let l3 = (t + one) * t * (t - one) / six;
    p0 * l0 + p1 * l1 + p2 * l2 + p3 * l3
}
