//! Scaling-threshold bisection.
//!
//! For fixed nonnegative initial data `u0` the rescaled flows from `alpha·u0`
//! split into three regimes: small `alpha` vanishes, large `alpha` blows up,
//! and a single critical `alpha(u0)` in between converges to a nonzero
//! stationary state. [`bisect_threshold`] brackets that critical value by
//! classifying flow runs, and [`near_threshold_profile_check`] verifies that
//! the near-critical orbit hovers close to a single ground-state bubble.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bubbles::{best_match, BubblesError};
use crate::field::{Field, FieldError, Grid};
use crate::flow::{run, FlowError, FlowEvent, FlowParams, FlowResult};
use crate::ground_state::RadialProfile;
use crate::lit;
use crate::reaction::Nonlinearity;
use crate::Real;

#[derive(Debug, Error)]
pub enum ThresholdError {
    #[error("bracket ({lo}, {hi}) is not ordered positive")]
    BadBracket { lo: f64, hi: f64 },
    #[error(
        "no vanish/blow-up bracket after {expansions} geometric expansions \
         (last tried ({lo}, {hi}))"
    )]
    BracketNotFound { lo: f64, hi: f64, expansions: usize },
    #[error("probe at alpha = {alpha} still running at t = {horizon}; horizon too short")]
    UnclassifiableProbe { alpha: f64, horizon: f64 },
    #[error("retained run has no plateau: best relative rate {rel_min:e} over {window} samples")]
    NoPlateau { rel_min: f64, window: usize },
    #[error("retained run kept no state snapshots")]
    NoSnapshots,
    #[error("flow run failed: {0}")]
    Flow(#[from] FlowError),
    #[error("bubble fit failed: {0}")]
    Bubbles(#[from] BubblesError),
    #[error("field error: {0}")]
    Field(#[from] FieldError),
}

/// Knobs for one bisection. `horizon` and `dt` drive every probe run; the
/// vanish/blow-up cutoffs are looser than the flow defaults because a probe
/// only needs a verdict, not a tight asymptotic state.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ThresholdParams<T> {
    /// Relative bracket width at which bisection stops.
    pub tol_alpha: T,
    /// Classification horizon per probe; still-running probes get one retry
    /// at twice this before the search errors out.
    pub horizon: T,
    pub dt: T,
    pub vanish_sup: T,
    pub vanish_energy: T,
    pub blowup_sup: T,
    pub conv_tol: T,
    pub sample_every: usize,
    /// Target number of state snapshots kept on the retained midpoint run.
    pub retained_snapshots: usize,
}

impl<T: Real> ThresholdParams<T> {
    pub fn new(dt: T, horizon: T) -> Self {
        Self {
            tol_alpha: lit(1e-3),
            horizon,
            dt,
            vanish_sup: lit(1e-6),
            vanish_energy: lit(1e-9),
            blowup_sup: lit(1e3),
            conv_tol: lit(1e-6),
            sample_every: 10,
            retained_snapshots: 100,
        }
    }

    fn flow_params(&self, t_end: T, snapshots: bool) -> FlowParams<T> {
        let mut p = FlowParams::new(self.dt, t_end);
        p.vanish_sup = self.vanish_sup;
        p.vanish_energy = self.vanish_energy;
        p.blowup_sup = self.blowup_sup;
        p.conv_tol = self.conv_tol;
        p.sample_every = self.sample_every;
        if snapshots {
            let steps = (t_end / self.dt).to_f64().unwrap_or(1.0).ceil() as usize;
            p.snapshot_every = Some((steps / self.retained_snapshots.max(1)).max(1));
        }
        p
    }
}

/// One classified run at a given scale.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ProbeRecord<T> {
    pub alpha: T,
    pub event: FlowEvent<T>,
    /// Horizon the verdict was reached under (doubles on a retry).
    pub horizon: T,
}

#[derive(Debug, Clone)]
pub struct ThresholdResult<T> {
    /// Largest scale observed to vanish.
    pub alpha_lo: T,
    /// Smallest scale observed to blow up.
    pub alpha_hi: T,
    /// Every classified run, in the order probed.
    pub probes: Vec<ProbeRecord<T>>,
    /// `(lo, hi)` after each accepted bisection probe.
    pub bracket_history: Vec<(T, T)>,
    /// Grid the runs lived on.
    pub grid: Grid<T>,
    /// Full run at the final midpoint, with state snapshots for later fitting.
    pub near_threshold_run: FlowResult<T>,
    /// Scale of the retained run.
    pub alpha_mid: T,
}

/// Serializable digest: bracket plus probe table, without the retained state.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ThresholdSummary<T> {
    pub alpha_lo: T,
    pub alpha_hi: T,
    pub alpha_estimate: T,
    pub probes: Vec<ProbeRecord<T>>,
    pub retained_alpha: T,
    pub retained_event: FlowEvent<T>,
}

impl<T: Real> ThresholdResult<T> {
    pub fn alpha_estimate(&self) -> T {
        (self.alpha_lo + self.alpha_hi) / lit(2.0)
    }

    pub fn summary(&self) -> ThresholdSummary<T> {
        ThresholdSummary {
            alpha_lo: self.alpha_lo,
            alpha_hi: self.alpha_hi,
            alpha_estimate: self.alpha_estimate(),
            probes: self.probes.clone(),
            retained_alpha: self.alpha_mid,
            retained_event: self.near_threshold_run.event,
        }
    }
}

enum Verdict<T> {
    Vanish(ProbeRecord<T>),
    Blowup(ProbeRecord<T>),
    /// The probe itself settled on a nonzero stationary state: it sits on the
    /// threshold to within the convergence tolerance.
    Stationary(ProbeRecord<T>),
}

/// Run `alpha·u0` to a verdict, retrying once at twice the horizon if the
/// first run times out.
fn classify<T: Real>(
    u0: &Field<T>,
    nl: &Nonlinearity<T>,
    alpha: T,
    params: &ThresholdParams<T>,
) -> Result<Verdict<T>, ThresholdError> {
    let scaled: Vec<T> = u0.values.iter().map(|&v| alpha * v).collect();
    let mut horizon = params.horizon;
    for attempt in 0..2 {
        let res = run(&u0.grid, nl, &scaled, &params.flow_params(horizon, false))?;
        let rec = ProbeRecord { alpha, event: res.event, horizon };
        match res.event {
            FlowEvent::Vanished { .. } => return Ok(Verdict::Vanish(rec)),
            FlowEvent::BlownUp { .. } => return Ok(Verdict::Blowup(rec)),
            FlowEvent::Converged { .. } => return Ok(Verdict::Stationary(rec)),
            FlowEvent::TimeExhausted { .. } if attempt == 0 => horizon = horizon * lit(2.0),
            FlowEvent::TimeExhausted { .. } => {}
        }
    }
    Err(ThresholdError::UnclassifiableProbe {
        alpha: alpha.to_f64().unwrap_or(f64::NAN),
        horizon: horizon.to_f64().unwrap_or(f64::NAN),
    })
}

/// Bracket and bisect the critical scale of `u0`.
///
/// The endpoints of `bracket0` are validated first (the low end must vanish,
/// the high end must blow up) and expanded geometrically up to
/// [`MAX_EXPANSIONS`] times per side when they do not. Bisection then halves
/// the bracket until its width drops below `tol_alpha` relative to the
/// midpoint, and the final midpoint is re-run with snapshots retained.
pub fn bisect_threshold<T: Real>(
    u0: &Field<T>,
    nl: &Nonlinearity<T>,
    bracket0: (T, T),
    params: &ThresholdParams<T>,
) -> Result<ThresholdResult<T>, ThresholdError> {
    let (mut lo, mut hi) = bracket0;
    if !(lo > T::zero() && hi > lo) {
        return Err(ThresholdError::BadBracket {
            lo: lo.to_f64().unwrap_or(f64::NAN),
            hi: hi.to_f64().unwrap_or(f64::NAN),
        });
    }
    let mut probes = Vec::new();
    let two = lit::<T>(2.0);

    // Validate / expand the low end. A blow-up at `lo` is kept as the new
    // high end, since it is a tighter bound than anything tried so far.
    let mut expansions = 0usize;
    let lo = loop {
        match classify(u0, nl, lo, params)? {
            Verdict::Vanish(rec) => {
                probes.push(rec);
                break lo;
            }
            Verdict::Stationary(rec) => {
                probes.push(rec);
                return finish_on_stationary(u0, nl, lo, params, probes);
            }
            Verdict::Blowup(rec) => {
                probes.push(rec);
                hi = lo;
                lo = lo / two;
                expansions += 1;
                if expansions > MAX_EXPANSIONS {
                    return Err(ThresholdError::BracketNotFound {
                        lo: lo.to_f64().unwrap_or(f64::NAN),
                        hi: hi.to_f64().unwrap_or(f64::NAN),
                        expansions: MAX_EXPANSIONS,
                    });
                }
            }
        }
    };

    // Validate / expand the high end; a vanish at `hi` tightens the low end.
    let mut lo = lo;
    let mut expansions = 0usize;
    let hi = loop {
        if hi <= lo {
            hi = lo * two;
        }
        match classify(u0, nl, hi, params)? {
            Verdict::Blowup(rec) => {
                probes.push(rec);
                break hi;
            }
            Verdict::Stationary(rec) => {
                probes.push(rec);
                return finish_on_stationary(u0, nl, hi, params, probes);
            }
            Verdict::Vanish(rec) => {
                probes.push(rec);
                lo = hi;
                hi = hi * two;
                expansions += 1;
                if expansions > MAX_EXPANSIONS {
                    return Err(ThresholdError::BracketNotFound {
                        lo: lo.to_f64().unwrap_or(f64::NAN),
                        hi: hi.to_f64().unwrap_or(f64::NAN),
                        expansions: MAX_EXPANSIONS,
                    });
                }
            }
        }
    };

    let mut lo = lo;
    let mut hi = hi;
    let mut bracket_history = vec![(lo, hi)];
    loop {
        let mid = (lo + hi) / two;
        if hi - lo <= params.tol_alpha * mid {
            break;
        }
        match classify(u0, nl, mid, params)? {
            Verdict::Vanish(rec) => {
                probes.push(rec);
                lo = mid;
            }
            Verdict::Blowup(rec) => {
                probes.push(rec);
                hi = mid;
            }
            Verdict::Stationary(rec) => {
                probes.push(rec);
                return finish_on_stationary(u0, nl, mid, params, probes);
            }
        }
        bracket_history.push((lo, hi));
    }

    retain_midpoint(u0, nl, lo, hi, params, probes, bracket_history)
}

/// Cap on geometric bracket expansions per side.
pub const MAX_EXPANSIONS: usize = 10;

/// A probe converged to a nonzero stationary state, so it *is* the critical
/// scale. Wrap it in a tolerance-wide bracket and verify the endpoints
/// classify the way the trichotomy demands.
fn finish_on_stationary<T: Real>(
    u0: &Field<T>,
    nl: &Nonlinearity<T>,
    alpha: T,
    params: &ThresholdParams<T>,
    mut probes: Vec<ProbeRecord<T>>,
) -> Result<ThresholdResult<T>, ThresholdError> {
    let lo = alpha * (T::one() - params.tol_alpha);
    let hi = alpha * (T::one() + params.tol_alpha);
    let alpha_f = alpha.to_f64().unwrap_or(f64::NAN);
    match classify(u0, nl, lo, params)? {
        Verdict::Vanish(rec) => probes.push(rec),
        _ => return Err(ThresholdError::UnclassifiableProbe {
            alpha: alpha_f,
            horizon: params.horizon.to_f64().unwrap_or(f64::NAN),
        }),
    }
    match classify(u0, nl, hi, params)? {
        Verdict::Blowup(rec) => probes.push(rec),
        _ => return Err(ThresholdError::UnclassifiableProbe {
            alpha: alpha_f,
            horizon: params.horizon.to_f64().unwrap_or(f64::NAN),
        }),
    }
    retain_midpoint(u0, nl, lo, hi, params, probes, vec![(lo, hi)])
}

fn retain_midpoint<T: Real>(
    u0: &Field<T>,
    nl: &Nonlinearity<T>,
    lo: T,
    hi: T,
    params: &ThresholdParams<T>,
    mut probes: Vec<ProbeRecord<T>>,
    bracket_history: Vec<(T, T)>,
) -> Result<ThresholdResult<T>, ThresholdError> {
    let mid = (lo + hi) / lit(2.0);
    let scaled: Vec<T> = u0.values.iter().map(|&v| mid * v).collect();
    let fp = params.flow_params(params.horizon, true);
    let res = run(&u0.grid, nl, &scaled, &fp)?;
    probes.push(ProbeRecord { alpha: mid, event: res.event, horizon: params.horizon });
    Ok(ThresholdResult {
        alpha_lo: lo,
        alpha_hi: hi,
        probes,
        bracket_history,
        grid: u0.grid.clone(),
        near_threshold_run: res,
        alpha_mid: mid,
    })
}

/// Fraction of the running-max relative rate below which a sample counts as
/// part of a plateau, and the number of consecutive samples required.
pub const PLATEAU_REL_TOL: f64 = 0.05;
pub const MIN_PLATEAU_SAMPLES: usize = 10;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PlateauReport<T> {
    /// Time window of the detected plateau.
    pub t_start: T,
    pub t_end: T,
    pub samples_in_window: usize,
    /// Smallest `‖du/dt‖ / ‖u‖` seen inside the window.
    pub rel_min: T,
    /// Time of the snapshot the bubble was fitted to.
    pub t_fit: T,
    /// Residual of the single-bubble fit relative to the state norm.
    pub gamma_over_norm: T,
    /// Distance between fitted centers at the first and last snapshot inside
    /// the window (zero on radial grids, whose fits are pinned to the origin).
    pub center_drift: T,
    pub weight: T,
    pub success: bool,
}

/// Detect the hovering phase of the retained near-critical run and fit a
/// single bubble to it.
///
/// A sample belongs to the plateau when its relative rate `‖du/dt‖ / ‖u‖`
/// is at most [`PLATEAU_REL_TOL`]; at least [`MIN_PLATEAU_SAMPLES`]
/// consecutive such samples are required. Runs that vanish or blow up
/// without hovering never produce such a window: a vanishing state keeps its
/// relative rate near the linear decay rate, and an escaping one grows it.
pub fn near_threshold_profile_check<T: Real>(
    res: &ThresholdResult<T>,
    profile: &RadialProfile<T>,
    nl: &Nonlinearity<T>,
) -> Result<PlateauReport<T>, ThresholdError> {
    let run = &res.near_threshold_run;
    let tol = lit::<T>(PLATEAU_REL_TOL);

    // Relative rates, skipping the first sample whose du is identically zero.
    let rel: Vec<(T, T)> = run
        .samples
        .iter()
        .skip(1)
        .filter(|s| s.l2 > T::zero())
        .map(|s| (s.t, s.du_l2 / s.l2))
        .collect();

    let mut best: Option<(usize, usize)> = None;
    let mut start = None;
    for (k, &(_, r)) in rel.iter().enumerate() {
        if r <= tol {
            let s = *start.get_or_insert(k);
            let len = k - s + 1;
            if best.map_or(true, |(bs, be)| len > be - bs + 1) {
                best = Some((s, k));
            }
        } else {
            start = None;
        }
    }
    let (ws, we) = match best {
        Some((s, e)) if e - s + 1 >= MIN_PLATEAU_SAMPLES => (s, e),
        _ => {
            let rel_min = rel
                .iter()
                .map(|&(_, r)| r)
                .fold(T::infinity(), T::min)
                .to_f64()
                .unwrap_or(f64::NAN);
            let window = best.map_or(0, |(s, e)| e - s + 1);
            return Err(ThresholdError::NoPlateau { rel_min, window });
        }
    };
    let (t_start, t_end) = (rel[ws].0, rel[we].0);
    let rel_min = rel[ws..=we].iter().map(|&(_, r)| r).fold(T::infinity(), T::min);

    // Snapshots inside the window; fall back to the nearest one if sampling
    // and snapshotting cadences miss each other.
    if run.snapshots.is_empty() {
        return Err(ThresholdError::NoSnapshots);
    }
    let inside: Vec<&(T, Vec<T>)> = run
        .snapshots
        .iter()
        .filter(|(t, _)| *t >= t_start && *t <= t_end)
        .collect();
    let t_mid = (t_start + t_end) / lit(2.0);
    let nearest = run
        .snapshots
        .iter()
        .min_by(|a, b| {
            (a.0 - t_mid).abs().partial_cmp(&(b.0 - t_mid).abs()).unwrap()
        })
        .unwrap();
    let (first, last) = match (inside.first(), inside.last()) {
        (Some(&f), Some(&l)) => (f, l),
        _ => (nearest, nearest),
    };

    let fit_at = |snap: &(T, Vec<T>)| -> Result<_, ThresholdError> {
        let field = Field::from_values(res.grid.clone(), snap.1.clone())?;
        let fit = best_match(&field, profile, nl, 1, None)?;
        let norm = field.l2_norm();
        Ok((fit, norm))
    };
    let (fit_first, _) = fit_at(first)?;
    let (fit_last, norm) = fit_at(last)?;
    let drift = {
        let a = fit_first.bubble.centers[0];
        let b = fit_last.bubble.centers[0];
        let mut s = T::zero();
        for k in 0..3 {
            s = s + (a[k] - b[k]) * (a[k] - b[k]);
        }
        s.sqrt()
    };
    let gamma_over_norm = if norm > T::zero() { fit_last.gamma / norm } else { T::zero() };
    Ok(PlateauReport {
        t_start,
        t_end,
        samples_in_window: we - ws + 1,
        rel_min,
        t_fit: last.0,
        gamma_over_norm,
        center_drift: drift,
        weight: fit_last.bubble.weights[0],
        success: gamma_over_norm <= tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::RadialGrid;
    use crate::flow::radial_stationary;
    use crate::ground_state::shoot;

    fn quad3d() -> (Nonlinearity<f64>, RadialProfile<f64>) {
        let nl = Nonlinearity::new(1.0, &[(1.0, 2.0)]).unwrap();
        let p = shoot(&nl, 3, 20.0, 5e-3, 1e-13).unwrap();
        (nl, p)
    }

    /// Sampled profile on a grid of the given spacing and extent.
    fn sampled(p: &RadialProfile<f64>, h: f64, r_max: f64) -> Field<f64> {
        let len = (r_max / h).round() as usize + 1;
        Field::radial_profile(RadialGrid::new(3, h, len).unwrap(), p)
    }

    /// Discrete stationary state: an exact fixed point of the stepper, so the
    /// critical scale of this data is exactly 1 at any resolution.
    fn discrete_ground_state(
        nl: &Nonlinearity<f64>,
        p: &RadialProfile<f64>,
        h: f64,
        r_max: f64,
    ) -> Field<f64> {
        let len = (r_max / h).round() as usize + 1;
        let g = RadialGrid::new(3, h, len).unwrap();
        let guess = Field::radial_profile(g.clone(), p);
        let vals = radial_stationary(&g, nl, &guess.values, 1e-10).unwrap();
        Field::from_values(Grid::Radial(g), vals).unwrap()
    }

    fn assert_ordering(res: &ThresholdResult<f64>) {
        let max_vanish = res
            .probes
            .iter()
            .filter(|p| matches!(p.event, FlowEvent::Vanished { .. }))
            .map(|p| p.alpha)
            .fold(f64::NEG_INFINITY, f64::max);
        let min_blowup = res
            .probes
            .iter()
            .filter(|p| matches!(p.event, FlowEvent::BlownUp { .. }))
            .map(|p| p.alpha)
            .fold(f64::INFINITY, f64::min);
        assert!(
            max_vanish < min_blowup,
            "vanish at {max_vanish} above blow-up at {min_blowup}"
        );
    }

    #[test]
    fn critical_scale_of_stationary_state_is_unity() {
        let (nl, p) = quad3d();
        let u0 = discrete_ground_state(&nl, &p, 0.02, 16.0);
        let params = ThresholdParams::new(5e-3, 40.0);
        let res = bisect_threshold(&u0, &nl, (0.5, 2.0), &params).unwrap();
        let est = res.alpha_estimate();
        assert!((est - 1.0).abs() <= 1e-3, "estimate {est}");
        assert!(res.alpha_lo < 1.0 && res.alpha_hi > 1.0, "{} {}", res.alpha_lo, res.alpha_hi);
        assert_ordering(&res);
        // Accepted probes cut the bracket exactly in half.
        for w in res.bracket_history.windows(2) {
            let (w0, w1) = (w[0].1 - w[0].0, w[1].1 - w[1].0);
            assert!((w1 - 0.5 * w0).abs() <= 1e-12 * w0, "widths {w0} {w1}");
        }
        let width = res.alpha_hi - res.alpha_lo;
        assert!(width <= params.tol_alpha * est, "width {width}");
    }

    #[test]
    fn critical_scale_is_covariant_under_data_scaling() {
        let (nl, p) = quad3d();
        let u0 = discrete_ground_state(&nl, &p, 0.02, 16.0);
        let mut u1 = u0.clone();
        for v in &mut u1.values {
            *v *= 1.25;
        }
        let params = ThresholdParams::new(5e-3, 40.0);
        let res = bisect_threshold(&u1, &nl, (0.4, 1.6), &params).unwrap();
        let est = res.alpha_estimate();
        assert!(
            (est * 1.25 - 1.0).abs() <= 2.0 * params.tol_alpha,
            "estimate {est}, expected 0.8"
        );
        assert_ordering(&res);
    }

    #[test]
    fn bracket_expands_to_find_both_verdicts() {
        let (nl, p) = quad3d();
        let u0 = sampled(&p, 0.02, 16.0);
        let params = ThresholdParams::new(5e-3, 40.0);
        // Both endpoints vanish: the high side must walk up geometrically.
        let res = bisect_threshold(&u0, &nl, (0.05, 0.1), &params).unwrap();
        assert!((res.alpha_estimate() - 1.0).abs() <= 0.01, "{}", res.alpha_estimate());
        assert_ordering(&res);
        let first_blowup = res
            .probes
            .iter()
            .position(|p| matches!(p.event, FlowEvent::BlownUp { .. }))
            .unwrap();
        assert!(first_blowup >= 2, "expected several vanishing probes first");
        // Both endpoints blow up: the low side walks down.
        let res = bisect_threshold(&u0, &nl, (5.0, 10.0), &params).unwrap();
        assert!((res.alpha_estimate() - 1.0).abs() <= 0.01, "{}", res.alpha_estimate());
        assert_ordering(&res);
        // Digest serializes with the probe table intact.
        let json = serde_json::to_string(&res.summary()).unwrap();
        let back: ThresholdSummary<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back.probes.len(), res.probes.len());
        assert!(json.contains("alpha_estimate"));
    }

    #[test]
    fn expansion_cap_is_an_error_when_everything_vanishes() {
        let nl = Nonlinearity::new(1.0, &[(1.0, 2.0)]).unwrap();
        let g = RadialGrid::new(3, 0.05, 201).unwrap();
        let mut u0 = Field::zeros(Grid::Radial(g));
        for i in 0..u0.values.len() - 1 {
            let r = 0.05 * i as f64;
            u0.values[i] = 1e-4 * (-r * r / 4.0).exp();
        }
        let params = ThresholdParams::new(5e-3, 30.0);
        match bisect_threshold(&u0, &nl, (1e-6, 2e-6), &params) {
            Err(ThresholdError::BracketNotFound { expansions, .. }) => {
                assert_eq!(expansions, MAX_EXPANSIONS);
            }
            other => panic!("expected bracket failure, got {other:?}"),
        }
    }

    #[test]
    fn short_horizon_is_an_unclassifiable_probe() {
        let (nl, p) = quad3d();
        let u0 = sampled(&p, 0.05, 10.0);
        let params = ThresholdParams::new(1e-3, 0.05);
        match bisect_threshold(&u0, &nl, (0.5, 2.0), &params) {
            Err(ThresholdError::UnclassifiableProbe { alpha, horizon }) => {
                assert_eq!(alpha, 0.5);
                assert!((horizon - 0.1).abs() <= 1e-12);
            }
            other => panic!("expected unclassifiable probe, got {other:?}"),
        }
    }

    #[test]
    fn gaussian_plateau_fits_a_single_bubble() {
        let (nl, p) = quad3d();
        let g = RadialGrid::new(3, 0.02, 801).unwrap();
        let mut u0 = Field::zeros(Grid::Radial(g));
        for i in 0..u0.values.len() - 1 {
            let r = 0.02 * i as f64;
            u0.values[i] = (-r * r / 4.0).exp();
        }
        let params = ThresholdParams::new(5e-3, 40.0);
        let res = bisect_threshold(&u0, &nl, (0.5, 4.0), &params).unwrap();
        assert_ordering(&res);
        let rep = near_threshold_profile_check(&res, &p, &nl).unwrap();
        assert!(rep.success, "gamma/norm = {}", rep.gamma_over_norm);
        assert!(rep.gamma_over_norm <= 0.05);
        assert_eq!(rep.center_drift, 0.0);
        assert!((rep.weight - 1.0).abs() <= 0.05, "weight {}", rep.weight);
        assert!(rep.samples_in_window >= MIN_PLATEAU_SAMPLES);
    }

    #[test]
    fn runs_without_hovering_report_no_plateau() {
        let (nl, p) = quad3d();
        let u0 = sampled(&p, 0.05, 12.0);
        let params = ThresholdParams::new(5e-3, 30.0);
        let fake = |alpha: f64| {
            let scaled: Vec<f64> = u0.values.iter().map(|v| alpha * v).collect();
            let fp = params.flow_params(30.0, true);
            let run_res = run(&u0.grid, &nl, &scaled, &fp).unwrap();
            ThresholdResult {
                alpha_lo: alpha * 0.99,
                alpha_hi: alpha * 1.01,
                probes: vec![],
                bracket_history: vec![],
                grid: u0.grid.clone(),
                near_threshold_run: run_res,
                alpha_mid: alpha,
            }
        };
        // Direct blow-up: the relative rate only grows.
        match near_threshold_profile_check(&fake(3.0), &p, &nl) {
            Err(ThresholdError::NoPlateau { .. }) => {}
            other => panic!("expected no plateau for blow-up, got {other:?}"),
        }
        // Direct vanishing: the relative rate stays near the linear decay rate.
        match near_threshold_profile_check(&fake(0.3), &p, &nl) {
            Err(ThresholdError::NoPlateau { .. }) => {}
            other => panic!("expected no plateau for vanishing, got {other:?}"),
        }
    }
}
