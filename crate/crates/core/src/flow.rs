//! Time integration of the gradient flow `du/dt = Lap u - f(u)`.
//!
//! Each step treats the linear part implicitly and the superlinear sink
//! explicitly:
//!
//! ```text
//! (I - dt (Lap - a0)) u_{k+1} = u_k + dt sum_l a_l u_k^{p_l}
//! ```
//!
//! The implicit system is solved matrix-free by conjugate gradients in the
//! mass-weighted inner product, where the discrete Laplacian is self-adjoint.
//! Negative undershoots (CG tolerance level for nonnegative data) are clamped
//! to zero and the clamped mass is accounted. The module also finds discrete
//! stationary profiles on radial grids by damped Newton iteration; these are
//! exact fixed points of the scheme above, up to solver tolerance.

use crate::field::{Geometry, Grid, RadialGrid};
use crate::linalg::{self, LinalgError};
use crate::reaction::Nonlinearity;
use crate::{lit, Real};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum FlowError {
    #[error("dt = {dt} exceeds the stability budget 0.1/a0 = {cap}")]
    StepTooLarge { dt: f64, cap: f64 },
    #[error("initial data has {got} values, grid has {want}")]
    LengthMismatch { got: usize, want: usize },
    #[error("linear solve failed: {0}")]
    Linalg(#[from] LinalgError),
    #[error("state became non-finite at t = {t}")]
    NonFinite { t: f64 },
    #[error("stationary-profile Newton stalled at residual {residual:e}")]
    NewtonStall { residual: f64 },
    #[error("window [{t1}, {t2}] is reversed or not covered by samples up to t = {hi}")]
    BadWindow { t1: f64, t2: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "kind",
    rename_all = "snake_case",
    bound = "T: Real"
)]
pub enum FlowEvent<T> {
    /// `||du/dt|| <= conv_tol ||u||` held for 50 consecutive steps. The
    /// relative form matters: a vanishing trajectory has `||du/dt|| -> 0` in
    /// absolute terms but keeps `||du/dt|| / ||u||` near `a0`, so it is not
    /// mistaken for a stationary limit.
    Converged { t: T },
    /// Sup norm below `vanish_sup` and energy below `vanish_energy`.
    Vanished { t: T },
    /// Sup norm reached `blowup_sup`.
    BlownUp { t: T },
    /// Ran to `t_end` without a verdict.
    TimeExhausted { t: T },
}

impl<T: Real> FlowEvent<T> {
    pub fn time(&self) -> T {
        match *self {
            FlowEvent::Converged { t }
            | FlowEvent::Vanished { t }
            | FlowEvent::BlownUp { t }
            | FlowEvent::TimeExhausted { t } => t,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            FlowEvent::Converged { .. } => "converged",
            FlowEvent::Vanished { .. } => "vanished",
            FlowEvent::BlownUp { .. } => "blown_up",
            FlowEvent::TimeExhausted { .. } => "running",
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FlowSample<T> {
    pub t: T,
    pub sup: T,
    pub l2: T,
    pub energy: T,
    /// `||(u_k - u_{k-1})/dt||_{L^2}` of the most recent step (0 at t = 0).
    pub du_l2: T,
    /// Cumulative `sum dt ||du/dt||^2` up to this sample.
    pub dissipated: T,
}

#[derive(Debug, Clone)]
pub struct FlowParams<T> {
    pub dt: T,
    pub t_end: T,
    /// Record a sample every this many steps (initial and final state are
    /// always recorded).
    pub sample_every: usize,
    /// Keep a full state snapshot every this many steps, if set.
    pub snapshot_every: Option<usize>,
    /// Convergence threshold for `||du/dt|| / ||u||`.
    pub conv_tol: T,
    pub vanish_sup: T,
    pub vanish_energy: T,
    pub blowup_sup: T,
    pub cg_tol: T,
    pub cg_max_iter: usize,
}

impl<T: Real> FlowParams<T> {
    pub fn new(dt: T, t_end: T) -> Self {
        Self {
            dt,
            t_end,
            sample_every: 10,
            snapshot_every: None,
            conv_tol: lit(1e-6),
            vanish_sup: lit(1e-8),
            vanish_energy: lit(1e-10),
            blowup_sup: lit(1e6),
            cg_tol: lit(1e-10),
            cg_max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FlowResult<T> {
    pub event: FlowEvent<T>,
    pub steps: usize,
    pub samples: Vec<FlowSample<T>>,
    pub snapshots: Vec<(T, Vec<T>)>,
    pub final_values: Vec<T>,
    /// Total mass removed by negativity clamps over the run.
    pub clamped_mass: T,
    pub cg_iters_total: usize,
}

/// Evolve `u0` under the flow until an event fires or `t_end` is reached.
pub fn run<T: Real>(
    grid: &Grid<T>,
    nl: &Nonlinearity<T>,
    u0: &[T],
    params: &FlowParams<T>,
) -> Result<FlowResult<T>, FlowError> {
    let cap = lit::<T>(0.1) / nl.a0();
    if params.dt > cap {
        return Err(FlowError::StepTooLarge {
            dt: params.dt.to_f64().unwrap_or(f64::NAN),
            cap: cap.to_f64().unwrap_or(f64::NAN),
        });
    }
    let n = grid.len();
    if u0.len() != n {
        return Err(FlowError::LengthMismatch { got: u0.len(), want: n });
    }
    let dt = params.dt;
    let a0 = nl.a0();
    let total_steps = (params.t_end / dt).to_f64().unwrap().ceil() as usize;

    let mut u = u0.to_vec();
    let mut b = vec![T::zero(); n];
    let mut prev = vec![T::zero(); n];
    let mut lap = vec![T::zero(); n];
    let mut samples = Vec::new();
    let mut snapshots = Vec::new();
    let mut clamped_mass = T::zero();
    let mut cg_iters_total = 0usize;
    let mut dissipated = T::zero();
    let mut du_l2 = T::zero();
    let mut conv_streak = 0usize;
    let dot = |x: &[T], y: &[T]| grid.dot(x, y);

    let record = |u: &[T], t: T, du: T, dis: T, samples: &mut Vec<FlowSample<T>>| {
        let sup = u.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let field = crate::field::Field { grid: grid.clone(), values: u.to_vec() };
        samples.push(FlowSample {
            t,
            sup,
            l2: field.l2_norm(),
            energy: field.energy(nl),
            du_l2: du,
            dissipated: dis,
        });
    };
    record(&u, T::zero(), T::zero(), T::zero(), &mut samples);
    if params.snapshot_every.is_some() {
        snapshots.push((T::zero(), u.clone()));
    }

    let mut event = None;
    let mut steps_taken = 0usize;
    for k in 0..total_steps {
        let t_next = dt * lit::<T>((k + 1) as f64);
        prev.copy_from_slice(&u);

        // explicit source, pinned boundary
        for i in 0..n {
            b[i] = if grid.is_boundary(i) {
                T::zero()
            } else {
                u[i] + dt * nl.sink_raw(u[i].max(T::zero()))
            };
        }
        let mut apply = |x: &[T], out: &mut [T]| {
            grid.laplacian(x, &mut lap);
            for i in 0..n {
                out[i] = if grid.is_boundary(i) {
                    x[i]
                } else {
                    x[i] - dt * (lap[i] - a0 * x[i])
                };
            }
        };
        cg_iters_total +=
            linalg::cg_solve(&mut apply, &b, &mut u, &dot, params.cg_tol, params.cg_max_iter)?;

        for i in 0..n {
            if u[i] < T::zero() {
                clamped_mass += grid.mass(i) * (-u[i]);
                u[i] = T::zero();
            }
        }
        steps_taken = k + 1;

        let mut diff2 = T::zero();
        for i in 0..n {
            let d = u[i] - prev[i];
            diff2 += grid.mass(i) * d * d;
        }
        du_l2 = diff2.sqrt() / dt;
        dissipated += diff2 / dt;
        if !du_l2.is_finite() {
            return Err(FlowError::NonFinite { t: t_next.to_f64().unwrap_or(f64::NAN) });
        }

        let sup = u.iter().fold(T::zero(), |m, v| m.max(*v));
        if sup >= params.blowup_sup {
            event = Some(FlowEvent::BlownUp { t: t_next });
        } else if sup <= params.vanish_sup {
            let field = crate::field::Field { grid: grid.clone(), values: u.clone() };
            if field.energy(nl) <= params.vanish_energy {
                event = Some(FlowEvent::Vanished { t: t_next });
            }
        }
        if event.is_none() {
            let l2 = dot(&u, &u).sqrt();
            if du_l2 <= params.conv_tol * l2 {
                conv_streak += 1;
                if conv_streak >= 50 {
                    event = Some(FlowEvent::Converged { t: t_next });
                }
            } else {
                conv_streak = 0;
            }
        }

        let last = event.is_some() || k + 1 == total_steps;
        if (k + 1) % params.sample_every == 0 || last {
            record(&u, t_next, du_l2, dissipated, &mut samples);
        }
        if let Some(every) = params.snapshot_every {
            if (k + 1) % every == 0 || last {
                snapshots.push((t_next, u.clone()));
            }
        }
        if event.is_some() {
            break;
        }
    }
    let _ = du_l2;

    let t_final = dt * lit::<T>(steps_taken as f64);
    Ok(FlowResult {
        event: event.unwrap_or(FlowEvent::TimeExhausted { t: t_final }),
        steps: steps_taken,
        samples,
        snapshots,
        final_values: u,
        clamped_mass,
        cg_iters_total,
    })
}

/// Relative residual of the energy balance over one window:
/// `|J(t1) - J(t2) - int_{t1}^{t2} ||du/dt||^2 dt| / max(|J(t1) - J(t2)|, eps)`,
/// read off the recorded samples nearest to `t1` and `t2`. First-order in
/// `dt` for this scheme, so halving the step should shrink it by ~2.
pub fn dissipation_residual<T: Real>(
    samples: &[FlowSample<T>],
    window: (T, T),
) -> Result<T, FlowError> {
    let (t1, t2) = window;
    let bad = |hi: f64| FlowError::BadWindow {
        t1: t1.to_f64().unwrap_or(f64::NAN),
        t2: t2.to_f64().unwrap_or(f64::NAN),
        hi,
    };
    let last = samples.last().ok_or_else(|| bad(f64::NAN))?.t;
    if !(t2 > t1) || t1 < T::zero() || t2 > last {
        return Err(bad(last.to_f64().unwrap_or(f64::NAN)));
    }
    let nearest = |t: T| {
        samples
            .iter()
            .min_by(|a, b| (a.t - t).abs().partial_cmp(&(b.t - t).abs()).unwrap())
            .expect("samples nonempty")
    };
    let (s1, s2) = (nearest(t1), nearest(t2));
    let drop = s1.energy - s2.energy;
    let integral = s2.dissipated - s1.dissipated;
    Ok((drop - integral).abs() / drop.abs().max(lit(1e-30)))
}

/// Largest defect of the energy balance `J(t_b) - J(t_a) = -int ||du/dt||^2`
/// between consecutive samples, relative to the total scale. First-order in
/// `dt` for this scheme, so halving the step should shrink it by ~2.
pub fn dissipation_defect<T: Real>(samples: &[FlowSample<T>]) -> T {
    let scale = samples
        .iter()
        .fold(T::zero(), |m, s| m.max(s.energy.abs()))
        .max(lit(1e-30));
    let mut worst = T::zero();
    for w in samples.windows(2) {
        let defect =
            (w[1].energy - w[0].energy + (w[1].dissipated - w[0].dissipated)).abs();
        worst = worst.max(defect);
    }
    worst / scale
}

/// Discrete stationary profile on a radial grid: damped Newton for
/// `Lap_h u = f(u)` with pinned outer boundary. The result is a fixed point
/// of [`run`] up to the linear-solver tolerance.
pub fn radial_stationary<T: Real>(
    grid: &RadialGrid<T>,
    nl: &Nonlinearity<T>,
    guess: &[T],
    tol: T,
) -> Result<Vec<T>, FlowError> {
    let n = Geometry::<T>::len(grid);
    if guess.len() != n {
        return Err(FlowError::LengthMismatch { got: guess.len(), want: n });
    }
    let (sub, diag, sup) = radial_laplacian_tridiag(grid);
    let mut u: Vec<T> = guess.to_vec();
    u[n - 1] = T::zero();

    let residual = |u: &[T], out: &mut Vec<T>| {
        out.clear();
        // interior rows only; the boundary value is pinned
        for i in 0..n - 1 {
            let lap = if i == 0 {
                diag[0] * u[0] + sup[0] * u[1]
            } else {
                sub[i - 1] * u[i - 1] + diag[i] * u[i] + sup[i] * u[i + 1]
            };
            out.push(lap - nl.f_raw(u[i].max(T::zero())));
        }
    };
    let norm = |g: &[T]| g.iter().fold(T::zero(), |m, v| m.max(v.abs()));

    let mut g = Vec::with_capacity(n - 1);
    let mut g_try = Vec::with_capacity(n - 1);
    residual(&u, &mut g);
    let mut best = norm(&g);
    for _ in 0..60 {
        if best <= tol {
            return Ok(u);
        }
        // Newton system on the n-1 interior unknowns
        let jd: Vec<T> = (0..n - 1)
            .map(|i| diag[i] - nl.df_raw(u[i].max(T::zero())))
            .collect();
        let jsub: Vec<T> = sub[..n - 2].to_vec();
        let jsup: Vec<T> = sup[..n - 2].to_vec();
        let rhs: Vec<T> = g.iter().map(|v| -*v).collect();
        let delta = linalg::tridiag_solve(&jsub, &jd, &jsup, &rhs)?;

        let mut lambda = T::one();
        let mut improved = false;
        for _ in 0..30 {
            let mut u_try = u.clone();
            for i in 0..n - 1 {
                u_try[i] += lambda * delta[i];
            }
            residual(&u_try, &mut g_try);
            let nt = norm(&g_try);
            if nt < best {
                u = u_try;
                std::mem::swap(&mut g, &mut g_try);
                best = nt;
                improved = true;
                break;
            }
            lambda *= lit(0.5);
        }
        if !improved {
            break;
        }
    }
    if best <= tol {
        Ok(u)
    } else {
        Err(FlowError::NewtonStall { residual: best.to_f64().unwrap_or(f64::NAN) })
    }
}

/// Tridiagonal rows of the radial flux-form Laplacian (all nodes; the last
/// row belongs to the pinned boundary and is zero).
pub fn radial_laplacian_tridiag<T: Real>(grid: &RadialGrid<T>) -> (Vec<T>, Vec<T>, Vec<T>) {
    let n = grid.len;
    let h2 = grid.h * grid.h;
    let dim = grid.n as i32;
    let nf = lit::<T>(grid.n as f64);
    let mut sub = vec![T::zero(); n - 1];
    let mut diag = vec![T::zero(); n];
    let mut sup = vec![T::zero(); n - 1];
    let two_n = lit::<T>(2.0 * grid.n as f64);
    diag[0] = -two_n / h2;
    sup[0] = two_n / h2;
    for i in 1..n - 1 {
        let fi = lit::<T>(i as f64);
        let area_hi = (fi + lit(0.5)).powi(dim - 1);
        let area_lo = (fi - lit(0.5)).powi(dim - 1);
        let vol = ((fi + lit(0.5)).powi(dim) - (fi - lit(0.5)).powi(dim)) / nf;
        sub[i - 1] = area_lo / (vol * h2);
        diag[i] = -(area_hi + area_lo) / (vol * h2);
        sup[i] = area_hi / (vol * h2);
    }
    (sub, diag, sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Field, Grid, RadialGrid};
    use crate::ground_state::shoot;

    fn quadratic() -> Nonlinearity<f64> {
        Nonlinearity::new(1.0, &[(1.0, 2.0)]).unwrap()
    }

    fn profile_field(scale: f64, h: f64, len: usize) -> (Grid<f64>, Vec<f64>) {
        let nl = quadratic();
        let p = shoot(&nl, 1, 20.0, 2e-3, 1e-13).unwrap();
        let grid = RadialGrid::new(1, h, len).unwrap();
        let mut f = Field::radial_profile(grid, &p);
        f.scale(scale);
        (f.grid, f.values)
    }

    #[test]
    fn tridiagonal_rows_reproduce_flux_laplacian() {
        let g = RadialGrid::<f64>::new(3, 0.05, 64).unwrap();
        let u: Vec<f64> = (0..64).map(|i| ((i as f64) * 0.37).sin()).collect();
        let mut lap = vec![0.0; 64];
        g.laplacian(&u, &mut lap);
        let (sub, diag, sup) = radial_laplacian_tridiag(&g);
        for i in 0..63 {
            let row = if i == 0 {
                diag[0] * u[0] + sup[0] * u[1]
            } else {
                sub[i - 1] * u[i - 1] + diag[i] * u[i] + sup[i] * u[i + 1]
            };
            assert!((row - lap[i]).abs() < 1e-9 * lap[i].abs().max(1.0), "row {i}");
        }
    }

    #[test]
    fn sampled_profile_drifts_slowly() {
        // The continuum stationary profile is an O(h^2) quasi-fixed point.
        let (grid, u0) = profile_field(1.0, 5e-3, 4001);
        let mut params = FlowParams::new(1e-3, 0.5);
        params.conv_tol = 1e-9; // the O(h^2) defect should register as motion
        let res = run(&grid, &quadratic(), &u0, &params).unwrap();
        let mut drift = 0.0f64;
        for i in 0..u0.len() {
            drift = drift.max((res.final_values[i] - u0[i]).abs());
        }
        assert!(drift < 1e-3, "drift {drift}");
        assert!(matches!(res.event, FlowEvent::TimeExhausted { .. }));
    }

    #[test]
    fn newton_profile_is_a_fixed_point() {
        let (grid, guess) = profile_field(1.0, 5e-3, 4001);
        let rg = match &grid {
            Grid::Radial(g) => g.clone(),
            _ => unreachable!(),
        };
        let nl = quadratic();
        // residual floor is roundoff on lap rows, ~eps * sup|u| / h^2 ~ 1e-11
        let star = radial_stationary(&rg, &nl, &guess, 1e-10).unwrap();
        // Newton refines the sampled profile by O(h^2), no further
        let mut shift = 0.0f64;
        for i in 0..guess.len() {
            shift = shift.max((star[i] - guess[i]).abs());
        }
        assert!(shift < 1e-3, "Newton moved the profile by {shift}");
        assert!(shift > 1e-9, "suspiciously exact discrete profile");

        let mut params = FlowParams::new(1e-2, 1.0);
        params.conv_tol = 1e-6;
        let res = run(&grid, &nl, &star, &params).unwrap();
        assert!(
            matches!(res.event, FlowEvent::Converged { .. }),
            "event {:?}",
            res.event
        );
        assert!(res.clamped_mass < 1e-8, "clamped {}", res.clamped_mass);
    }

    #[test]
    fn small_data_vanishes_with_monotone_energy() {
        let (grid, u0) = profile_field(0.1, 1e-2, 2001);
        let params = FlowParams::new(1e-2, 40.0);
        let res = run(&grid, &quadratic(), &u0, &params).unwrap();
        assert!(matches!(res.event, FlowEvent::Vanished { .. }), "event {:?}", res.event);
        for w in res.samples.windows(2) {
            assert!(w[1].energy <= w[0].energy + 1e-12, "energy rose at t = {}", w[1].t);
        }
        assert!(res.clamped_mass < 1e-8);
    }

    #[test]
    fn large_data_blows_up() {
        let (grid, u0) = profile_field(3.0, 1e-2, 2001);
        let params = FlowParams::new(1e-2, 40.0);
        let res = run(&grid, &quadratic(), &u0, &params).unwrap();
        let t = match res.event {
            FlowEvent::BlownUp { t } => t,
            other => panic!("event {other:?}"),
        };
        assert!(t < 5.0, "blowup too late: {t}");
        let last = res.samples.last().unwrap();
        assert!(last.sup >= 1e6);
    }

    #[test]
    fn dissipation_defect_shrinks_with_dt() {
        let (grid, u0) = profile_field(0.8, 1e-2, 2001);
        let nl = quadratic();
        let mut coarse = FlowParams::new(2e-2, 1.0);
        coarse.sample_every = 5;
        let mut fine = FlowParams::new(1e-2, 1.0);
        fine.sample_every = 10; // same physical cadence
        let dc = dissipation_defect(&run(&grid, &nl, &u0, &coarse).unwrap().samples);
        let df = dissipation_defect(&run(&grid, &nl, &u0, &fine).unwrap().samples);
        assert!(dc < 5e-3, "coarse defect {dc}");
        assert!(dc / df > 1.5, "no first-order gain: {dc} vs {df}");
    }

    #[test]
    fn windowed_residual_small_and_window_validated() {
        let (grid, u0) = profile_field(0.8, 1e-2, 2001);
        let nl = quadratic();
        let mut params = FlowParams::new(1e-2, 1.0);
        params.sample_every = 10;
        let res = run(&grid, &nl, &u0, &params).unwrap();
        let r = dissipation_residual(&res.samples, (0.2, 0.8)).unwrap();
        assert!(r < 5e-2, "windowed residual {r}");
        params.dt = 5e-3;
        params.sample_every = 20; // same physical cadence
        let fine = run(&grid, &nl, &u0, &params).unwrap();
        let rf = dissipation_residual(&fine.samples, (0.2, 0.8)).unwrap();
        assert!(r / rf > 1.5, "no first-order gain: {r} vs {rf}");
        assert!(matches!(
            dissipation_residual(&res.samples, (0.8, 0.2)),
            Err(FlowError::BadWindow { .. })
        ));
        assert!(matches!(
            dissipation_residual(&res.samples, (0.2, 7.0)),
            Err(FlowError::BadWindow { .. })
        ));
        assert!(matches!(
            dissipation_residual::<f64>(&[], (0.2, 0.8)),
            Err(FlowError::BadWindow { .. })
        ));
    }

    #[test]
    fn oversized_step_is_rejected() {
        let (grid, u0) = profile_field(1.0, 1e-2, 2001);
        let params = FlowParams::new(0.2, 1.0);
        assert!(matches!(
            run(&grid, &quadratic(), &u0, &params),
            Err(FlowError::StepTooLarge { .. })
        ));
    }

    #[test]
    fn event_times_serialize_with_labels() {
        let e = FlowEvent::Vanished { t: 1.25f64 };
        let s = serde_json::to_string(&e).unwrap();
        assert_eq!(s, r#"{"kind":"vanished","t":1.25}"#);
        assert_eq!(e.label(), "vanished");
        assert_eq!(e.time(), 1.25);
    }
}
