//! End-to-end acceptance checks: one pinned scenario per guarantee the crate
//! ships, each producing a pass/fail verdict with measured wall-clock time.
//!
//! Every check carries its tolerances inline and gates only on numerical
//! conditions; the time budget next to each verdict is informational (wall
//! clock depends on machine load and carries no correctness signal). The
//! `acceptance` integration test runs each check as its own test and prints
//! one verdict line per criterion; the CLI exposes the same suite under
//! `verify`.

use std::error::Error;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bubbles::{
    best_match, interaction_g, solve_weights, tail_concavity_check, tail_remainder_fraction,
    MBubble,
};
use crate::field::{BoxGrid, Field, Geometry, Grid, RadialGrid};
use crate::flow::{
    radial_laplacian_tridiag, radial_stationary, run, FlowEvent, FlowParams,
};
use crate::geometry::{neighborhood_cert, separate};
use crate::ground_state::shoot;
use crate::linalg::{sym_tridiag_eigenvector, sym_tridiag_smallest};
use crate::reaction::Nonlinearity;
use crate::spectral::{kernel_tolerance, radial_sector, sector_coercivity, translation_pairings};
use crate::threshold::{bisect_threshold, near_threshold_profile_check, ThresholdParams};

/// Verdict of one acceptance check.
#[derive(Debug, Clone)]
pub struct CriterionOutcome {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub runtime_s: f64,
    /// Informational time budget; not part of the pass/fail decision.
    pub budget_s: f64,
    pub details: String,
}

impl CriterionOutcome {
    /// One-line report: `[ 3] PASS energy dissipation balance (12.1s / 30s) ...`.
    pub fn line(&self) -> String {
        format!(
            "[{:2}] {} {} ({:.1}s / {:.0}s) {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.runtime_s,
            self.budget_s,
            self.details
        )
    }
}

fn guarded(
    id: usize,
    name: &'static str,
    budget_s: f64,
    body: impl FnOnce() -> Result<(bool, String), Box<dyn Error>>,
) -> CriterionOutcome {
    let start = Instant::now();
    let (passed, details) = match body() {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    CriterionOutcome { id, name, passed, runtime_s: start.elapsed().as_secs_f64(), budget_s, details }
}

fn quadratic() -> Nonlinearity<f64> {
    Nonlinearity::new(1.0, &[(1.0, 2.0)]).expect("valid reaction term")
}

fn cubic() -> Nonlinearity<f64> {
    Nonlinearity::new(1.0, &[(1.0, 3.0)]).expect("valid reaction term")
}

/// Least-squares line through `(xs, ys)`: returns `(slope, intercept, r^2)`.
fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, my - slope * mx, r2)
}

fn std_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn unit_direction(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| std_normal(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// 1. The two line profiles with closed forms: `1.5 sech^2(r/2)` for the
/// quadratic term and `sqrt(2) sech(r)` for the cubic one, compared on a
/// 1e-3 lattice over [0, 20].
pub fn closed_form_profiles() -> CriterionOutcome {
    guarded(1, "closed-form soliton match", 2.0, || {
        let cases: [(&str, Nonlinearity<f64>, fn(f64) -> f64); 2] = [
            ("quadratic", quadratic(), |r: f64| 1.5 / (r / 2.0).cosh().powi(2)),
            ("cubic", cubic(), |r: f64| std::f64::consts::SQRT_2 / r.cosh()),
        ];
        let mut ok = true;
        let mut details = String::new();
        for (label, nl, exact) in cases {
            let t0 = Instant::now();
            let p = shoot(&nl, 1, 20.0, 1e-3, 1e-13)?;
            let mut sup = 0.0f64;
            for i in 0..=20_000usize {
                let r = i as f64 * 1e-3;
                sup = sup.max((p.sample(r) - exact(r)).abs());
            }
            ok &= sup <= 1e-6;
            details += &format!("{label} sup {:.1e} in {:.2}s; ", sup, t0.elapsed().as_secs_f64());
        }
        Ok((ok, details))
    })
}

/// 2. The 3d profile decays like `e^{-r}/r`: the compensated value
/// `xi(r) e^r r` stays in a narrow band on [8, 16] and the log-derivative
/// `-xi'/xi` sits in [0.8, 1.3] there.
///
/// Shooting cannot compute this range directly: a 1-ulp error in xi(0) grows
/// like e^{2r} along the trajectory and the profile is truncated near r = 13
/// at any step size, with only the calibrated tail law beyond. Checking the
/// tail law against its own extrapolation would be circular, so the far range
/// comes from the independent boundary-value route: the Newton solve for the
/// discrete stationary state on [0, 20], seeded by the shot profile, which is
/// stable out to the boundary. A cross-route agreement gate on the shared
/// range ties the two computations together.
pub fn radial_decay_envelope() -> CriterionOutcome {
    guarded(2, "radial decay envelope", 1.0, || {
        let nl = quadratic();
        let p = shoot(&nl, 3, 20.0, 5e-3, 1e-13)?;
        let h = 2e-3;
        let g = RadialGrid::new(3, h, 10_001)?;
        let guess = Field::radial_profile(g.clone(), &p);
        let xi = radial_stationary(&g, &nl, &guess.values, 5e-9)?;
        let shared = (p.r_last().min(13.0) / h).floor() as usize;
        let cross = (0..=shared)
            .map(|i| (xi[i] - guess.values[i]).abs())
            .fold(0.0f64, f64::max);
        let (i0, i1) = ((8.0 / h).round() as usize, (16.0 / h).round() as usize);
        let mut vmin = f64::INFINITY;
        let mut vmax = 0.0f64;
        let mut ld_min = f64::INFINITY;
        let mut ld_max = f64::NEG_INFINITY;
        for i in i0..=i1 {
            let r = i as f64 * h;
            let v = xi[i] * r.exp() * r;
            vmin = vmin.min(v);
            vmax = vmax.max(v);
            let ld = -(xi[i + 1] - xi[i - 1]) / (2.0 * h * xi[i]);
            ld_min = ld_min.min(ld);
            ld_max = ld_max.max(ld);
        }
        let band = vmax / vmin;
        let ok = band <= 1.5 && ld_min >= 0.8 && ld_max <= 1.3 && cross <= 1e-3;
        Ok((
            ok,
            format!(
                "xi e^r r band {band:.4}, -xi'/xi in [{ld_min:.3}, {ld_max:.3}], cross-route dev {cross:.1e}"
            ),
        ))
    })
}

/// 3. The energy ledger balances: the drop `J(1) - J(5)` along a moving
/// trajectory matches the accumulated `int ||du/dt||^2 dt` to 1e-3 relative,
/// and halving the step improves the residual by at least 1.5x.
pub fn dissipation_balance() -> CriterionOutcome {
    guarded(3, "energy dissipation balance", 30.0, || {
        let nl = quadratic();
        let p = shoot(&nl, 3, 20.0, 5e-3, 1e-13)?;
        let g = RadialGrid::new(3, 1e-2, 1601)?;
        let grid = Grid::Radial(g.clone());
        let u0: Vec<f64> =
            Field::radial_profile(g, &p).values.iter().map(|v| 0.9 * v).collect();
        let mut resid = [0.0f64; 2];
        for (k, dt) in [1e-3f64, 5e-4].into_iter().enumerate() {
            let mut params = FlowParams::new(dt, 5.0);
            params.sample_every = (0.01 / dt).round() as usize;
            params.conv_tol = 1e-14;
            let res = run(&grid, &nl, &u0, &params)?;
            resid[k] = crate::flow::dissipation_residual(&res.samples, (1.0, 5.0))?;
        }
        let gain = resid[0] / resid[1];
        let ok = resid[0] <= 1e-3 && gain >= 1.5;
        Ok((ok, format!("rel residual {:.2e} at dt 1e-3, {:.2e} at dt 5e-4 (gain {gain:.2})", resid[0], resid[1])))
    })
}

/// 4. Sampled stationary data stays put: the line profile, fed back into the
/// flow on a fine grid, drifts by at most 1e-4 in sup norm up to t = 5.
///
/// The grid and solver tolerances matter here. The linearization at the
/// profile has one negative eigenvalue (-1.25 on the line), so the O(h^2)
/// sampling defect grows like e^{1.25 t} ~ 518 by t = 5; h = 2e-3 keeps the
/// seeded defect small enough. `cg_tol` is tightened because a looser inner
/// solve would return the previous iterate unchanged once the defect falls
/// under its relative tolerance, freezing the state and faking stationarity;
/// with these settings the run honestly reports "running" at t = 5.
pub fn stationary_persistence() -> CriterionOutcome {
    guarded(4, "stationary data stays put", 30.0, || {
        let nl = quadratic();
        let p = shoot(&nl, 1, 25.0, 1e-3, 1e-13)?;
        let g = RadialGrid::new(1, 2e-3, 7001)?;
        let grid = Grid::Radial(g.clone());
        let u0 = Field::radial_profile(g, &p);
        let mut params = FlowParams::new(4e-3, 5.0);
        params.conv_tol = 1e-14;
        params.cg_tol = 1e-12;
        let res = run(&grid, &nl, &u0.values, &params)?;
        let drift = res
            .final_values
            .iter()
            .zip(&u0.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        let honest = matches!(res.event, FlowEvent::TimeExhausted { .. });
        Ok((
            drift <= 1e-4 && honest,
            format!("sup drift {drift:.2e} at t = 5 (event: {})", res.event.label()),
        ))
    })
}

/// 5. The linearized operator at the 3d profile has the advertised spectral
/// picture: exactly one negative radial eigenvalue, a translation kernel in
/// the l = 1 sector, negative/positive translation pairings with the identity
/// between them, and positive constrained coercivity. The line operator for
/// the cubic term, whose bottom eigenvalue is exactly -3, pins the scheme.
pub fn linearized_spectrum() -> CriterionOutcome {
    guarded(5, "linearized spectrum and pairings", 60.0, || {
        let nl = quadratic();
        let p = shoot(&nl, 3, 20.0, 5e-3, 1e-14)?;
        let (h, r_max) = (5e-3, 16.0);
        let ktol = kernel_tolerance(&nl, &p, h);
        let s0 = radial_sector(&nl, &p, 0, h, r_max)?;
        let negatives = s0.count_below(0.0);
        let bottom = s0.smallest_eigenvalues(1)[0];
        let s1 = radial_sector(&nl, &p, 1, h, r_max)?;
        let kernel = s1.smallest_eigenvalues(1)[0];
        let pair = translation_pairings(&nl, &p);
        let coer = sector_coercivity(&nl, &p, 0, h, r_max, 42)?;
        let pc = shoot(&cubic(), 1, 20.0, 2e-3, 1e-14)?;
        let line_bottom = radial_sector(&cubic(), &pc, 0, 5e-3, 20.0)?.smallest_eigenvalues(1)[0];
        let ok = negatives == 1
            && kernel.abs() <= ktol
            && pair.q_deriv_deriv < 0.0
            && pair.q_deriv_profile > 0.0
            && pair.identity_rel_err <= 1e-4
            && coer.constrained_min > 0.0
            && (line_bottom + 3.0).abs() <= 1e-3;
        Ok((
            ok,
            format!(
                "negatives {negatives} (bottom {bottom:.4}), |l=1 bottom| {:.1e} <= {:.1e}, \
                 pairings ({:.3}, {:.3}) identity rel {:.1e}, constrained min {:.3}, \
                 line bottom {line_bottom:.5}",
                kernel.abs(),
                ktol,
                pair.q_deriv_deriv,
                pair.q_deriv_profile,
                pair.identity_rel_err,
                coer.constrained_min
            ),
        ))
    })
}

/// 6. A weighted two-hump field is recovered exactly: centers to grid
/// resolution, weights to 1e-3; and the decoupled single-hump quotients
/// approach 1 monotonically as the separation grows through 6, 8, 10, 12
/// decay lengths.
pub fn pair_recovery() -> CriterionOutcome {
    guarded(6, "two-hump recovery and decoupling", 120.0, || {
        let nl = cubic();
        let p = shoot(&nl, 1, 25.0, 2e-3, 1e-13)?;
        let h = 0.01f64;
        let g = BoxGrid::new(1, 16.0, (2.0 * 16.0 / h).round() as usize + 1)?;
        let grid = Grid::Cartesian(g);
        let truth = MBubble::new(vec![[-5.0, 0.0, 0.0], [5.0, 0.0, 0.0]], vec![1.2, 0.8])?;
        let u = truth.render(&grid, &p)?;
        let fit = best_match(&u, &p, &nl, 2, None)?;
        let mut pairs: Vec<(f64, f64)> = fit
            .bubble
            .centers
            .iter()
            .zip(&fit.bubble.weights)
            .map(|(c, &w)| (c[0], w))
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let centers_ok = (pairs[0].0 + 5.0).abs() <= h && (pairs[1].0 - 5.0).abs() <= h;
        let weights_ok = (pairs[0].1 - 1.2).abs() <= 1e-3 && (pairs[1].1 - 0.8).abs() <= 1e-3;
        let mut devs = Vec::new();
        for half_sep in [3.0, 4.0, 5.0, 6.0] {
            let b = MBubble::simple(vec![[-half_sep, 0.0, 0.0], [half_sep, 0.0, 0.0]])?;
            let ub = b.render(&grid, &p)?;
            let ws = solve_weights(&ub, &b.centers, &p, &nl)?;
            let dev = ws.decoupled.iter().map(|w| (w - 1.0).abs()).fold(0.0f64, f64::max);
            devs.push(dev);
        }
        let trend = devs.windows(2).all(|w| w[1] < w[0]);
        let ok = centers_ok && weights_ok && trend;
        Ok((
            ok,
            format!(
                "centers ({:.4}, {:.4}), weights ({:.5}, {:.5}), decoupled deviations {:?}",
                pairs[0].0,
                pairs[1].0,
                pairs[0].1,
                pairs[1].1,
                devs.iter().map(|d| format!("{d:.1e}")).collect::<Vec<_>>()
            ),
        ))
    })
}

/// 7. The pair interaction integral tracks the profile tail: `g(x)/xi(x)`
/// stays within a 10x band on separations [10, 20], `g` is strictly
/// decreasing there, and the fraction of the interaction carried outside
/// radius r from both centers shrinks as r grows through 4, 6, 8.
pub fn interaction_envelope() -> CriterionOutcome {
    guarded(7, "interaction integral envelope", 30.0, || {
        let p = shoot(&quadratic(), 3, 20.0, 5e-3, 1e-13)?;
        let mut gs = Vec::new();
        let mut ratios = Vec::new();
        for k in 10..=20 {
            let x = k as f64;
            let gv = interaction_g(&p, x);
            if gv.extrapolated {
                return Ok((false, format!("interaction at x = {x} left the computed range")));
            }
            gs.push(gv.value);
            ratios.push(gv.value / p.sample(x));
        }
        let band = ratios.iter().cloned().fold(0.0f64, f64::max)
            / ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let decreasing = gs.windows(2).all(|w| w[1] < w[0]);
        let tails: Vec<f64> =
            [4.0, 6.0, 8.0].iter().map(|&r| tail_remainder_fraction(&p, 10.0, r)).collect();
        let tails_ok = tails.windows(2).all(|w| w[1] < w[0]);
        let ok = band <= 10.0 && decreasing && tails_ok;
        Ok((
            ok,
            format!(
                "g/xi band {band:.2}, g decreasing {decreasing}, tail fractions {:?}",
                tails.iter().map(|t| format!("{t:.2e}")).collect::<Vec<_>>()
            ),
        ))
    })
}

/// 8. The scaling threshold behaves like a sharp interface: for sampled
/// stationary data the critical amplitude is 1 to 2e-3 with every vanishing
/// probe below every blow-up probe; for Gaussian data the bisection brackets
/// the threshold to an absolute width of 1e-3 and the near-critical
/// trajectory hovers near the profile family (fit residual below 5%).
pub fn critical_scaling() -> CriterionOutcome {
    guarded(8, "critical amplitude bisection", 600.0, || {
        let nl = quadratic();
        let p = shoot(&nl, 3, 20.0, 5e-3, 1e-13)?;
        let g = RadialGrid::new(3, 1e-2, 1601)?;
        let u0 = Field::radial_profile(g.clone(), &p);
        let params = ThresholdParams::new(1e-3, 40.0);
        let res = bisect_threshold(&u0, &nl, (0.5, 2.0), &params)?;
        let est = res.alpha_estimate();
        let max_vanish = res
            .probes
            .iter()
            .filter(|pr| matches!(pr.event, FlowEvent::Vanished { .. }))
            .map(|pr| pr.alpha)
            .fold(f64::NEG_INFINITY, f64::max);
        let min_blowup = res
            .probes
            .iter()
            .filter(|pr| matches!(pr.event, FlowEvent::BlownUp { .. }))
            .map(|pr| pr.alpha)
            .fold(f64::INFINITY, f64::min);
        let ordered = max_vanish.is_finite() && min_blowup.is_finite() && max_vanish < min_blowup;

        let grid = Grid::Radial(g);
        let gauss: Vec<f64> = (0..grid.len())
            .map(|i| {
                let r = grid.position(i)[0];
                (-r * r / 4.0).exp()
            })
            .collect();
        let gauss = Field::from_values(grid, gauss)?;
        let mut gparams = ThresholdParams::new(1e-3, 40.0);
        gparams.tol_alpha = 3e-4;
        let gres = bisect_threshold(&gauss, &nl, (0.5, 4.0), &gparams)?;
        let width = gres.alpha_hi - gres.alpha_lo;
        let plateau = near_threshold_profile_check(&gres, &p, &nl)?;
        let ok = (est - 1.0).abs() <= 2e-3 && ordered && width <= 1e-3 && plateau.success;
        Ok((
            ok,
            format!(
                "profile threshold {est:.5} (vanish <= {max_vanish:.5} < blow-up >= {min_blowup:.5}), \
                 gaussian bracket width {width:.1e} at {:.4}, hover residual {:.3}",
                gres.alpha_estimate(),
                plateau.gamma_over_norm
            ),
        ))
    })
}

/// 9. Near the stationary state the energy excess decays exponentially:
/// perturbing the exact discrete profile along its second linearized mode
/// gives `log(J - J_inf)` a straight tail (R^2 >= 0.99, negative slope) and
/// keeps the quotient `(J - J_inf)/||du/dt||^2` within 10x of its median.
pub fn energy_decay_rate() -> CriterionOutcome {
    guarded(9, "exponential energy decay", 300.0, || {
        let nl = quadratic();
        let p = shoot(&nl, 3, 20.0, 5e-3, 1e-13)?;
        let g = RadialGrid::new(3, 1e-2, 1601)?;
        let guess = Field::radial_profile(g.clone(), &p);
        let xi = radial_stationary(&g, &nl, &guess.values, 1e-10)?;
        let grid = Grid::Radial(g.clone());

        // Second mode of the symmetrized linearization on the interior block.
        let (sub, diag, sup) = radial_laplacian_tridiag(&g);
        let m = xi.len() - 1;
        let d: Vec<f64> = (0..m).map(|i| -diag[i] + nl.df_raw(xi[i])).collect();
        let off: Vec<f64> = (0..m - 1).map(|i| -(sub[i] * sup[i]).sqrt()).collect();
        let eigs = sym_tridiag_smallest(&d, &off, 2);
        let lambda2 = eigs[1];
        if eigs[0] >= 0.0 || lambda2 <= 0.0 {
            return Ok((false, format!("unexpected bottom spectrum {eigs:?}")));
        }
        let mut v = sym_tridiag_eigenvector(&d, &off, lambda2);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut v {
            *x /= norm;
        }
        let eps = 1e-3;
        let mut u0 = xi.clone();
        for i in 0..m {
            u0[i] += eps * v[i] / grid.mass(i).sqrt();
        }

        let mut params = FlowParams::new(1e-3, 1.5);
        params.conv_tol = 1e-14;
        params.cg_tol = 1e-12;
        let res = run(&grid, &nl, &u0, &params)?;
        let j_inf = Field::from_values(grid.clone(), xi)?.energy(&nl);
        let mut ts = Vec::new();
        let mut logs = Vec::new();
        let mut quotients = Vec::new();
        for s in &res.samples {
            if s.t < 0.2 || s.t > 1.4 {
                continue;
            }
            let excess = s.energy - j_inf;
            if excess <= 0.0 {
                return Ok((false, format!("energy excess not positive at t = {:.2}", s.t)));
            }
            ts.push(s.t);
            logs.push(excess.ln());
            quotients.push(excess / (s.du_l2 * s.du_l2));
        }
        let (slope, _, r2) = linear_fit(&ts, &logs);
        let mut sorted = quotients.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = sorted[sorted.len() / 2];
        let spread = sorted.last().unwrap() / median;
        let ok = r2 >= 0.99 && slope < 0.0 && spread <= 10.0;
        Ok((
            ok,
            format!(
                "slope {slope:.3} (2*lambda2 = {:.3}), R^2 {r2:.5}, quotient max/median {spread:.2}",
                2.0 * lambda2
            ),
        ))
    })
}

/// 10. Splitting mass across far-apart humps never pays at the level of the
/// potential: the superposition inequality holds with margin 1e-12 on 10^4
/// random nonnegative tuples of up to 5 entries.
pub fn concavity_margin() -> CriterionOutcome {
    guarded(10, "superposition concavity margin", 1.0, || {
        let nl = quadratic();
        let delta = 10.0;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut failures = 0usize;
        for _ in 0..10_000 {
            let m = rng.gen_range(1..=5usize);
            let xs: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..(9.9 / m as f64))).collect();
            if !tail_concavity_check(&nl, &xs, delta)? {
                failures += 1;
            }
        }
        Ok((failures == 0, format!("10000 tuples, {failures} margin violations")))
    })
}

/// 11. Separation certificates hold up under independent attack: on 10^3
/// random instances (up to 6 points in up to 4 dimensions) the certified
/// cone inequality verifies exhaustively, 10^3 sampled displacements of the
/// base point inside the guaranteed ball keep the certificate valid, and a
/// sampled direction search finds nothing beating the certified constant by
/// more than the sampling slack.
pub fn separation_certificates() -> CriterionOutcome {
    guarded(11, "separating direction certificates", 60.0, || {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut worst_margin = f64::INFINITY;
        let mut worst_oracle_gap = f64::NEG_INFINITY;
        for _ in 0..1000 {
            let n = rng.gen_range(1..=4usize);
            let m = rng.gen_range(2..=6usize);
            let scale = 10f64.powf(rng.gen_range(-1.0..1.0));
            let points: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..n).map(|_| scale * rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let cert = separate(&points, n)?;
            let y = cert.points[cert.y_index].clone();

            // Independent exhaustive re-check of the cone inequality, keeping
            // the unit displacement directions for the oracle below.
            let mut units: Vec<Vec<f64>> = Vec::with_capacity(m - 1);
            let mut achieved = f64::INFINITY;
            for (i, x) in cert.points.iter().enumerate() {
                if i == cert.y_index {
                    continue;
                }
                let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
                let dist = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
                let along: f64 = diff.iter().zip(&cert.e).map(|(a, b)| a * b).sum();
                achieved = achieved.min(along / dist);
                let margin = along / dist - 1.0 / cert.d;
                worst_margin = worst_margin.min(margin);
                if margin < -1e-12 {
                    return Ok((false, format!("cone inequality failed by {margin:.2e}")));
                }
                units.push(diff.iter().map(|d| d / dist).collect());
            }

            // Sampled displacements inside the guaranteed ball.
            for _ in 0..1000 {
                let dir = unit_direction(&mut rng, n);
                let radius = cert.l_prime * rng.gen::<f64>().powf(1.0 / n as f64) * 0.999;
                let z: Vec<f64> = y.iter().zip(&dir).map(|(a, b)| a + radius * b).collect();
                if !neighborhood_cert(&cert, &z)? {
                    return Ok((false, "displacement inside the guaranteed ball rejected".into()));
                }
            }

            // Brute-force direction oracle: the best of 10^4 sampled unit
            // vectors (by worst cosine against the displacement directions)
            // must not beat the certified direction by more than the a-priori
            // factor d, and dense sampling should come close to the
            // guaranteed 1/d itself.
            let mut best = f64::NEG_INFINITY;
            for _ in 0..10_000 {
                let w = unit_direction(&mut rng, n);
                let mut min_cos = f64::INFINITY;
                for u in &units {
                    let along: f64 = u.iter().zip(&w).map(|(a, b)| a * b).sum();
                    min_cos = min_cos.min(along);
                }
                best = best.max(min_cos);
            }
            worst_oracle_gap = worst_oracle_gap.max(1.0 / cert.d - best);
            if best > cert.d * achieved + 1e-9 {
                return Ok((
                    false,
                    format!(
                        "oracle best {best:.3} beats certified ratio {achieved:.3} by more than d = {}",
                        cert.d
                    ),
                ));
            }
            if best < 1.0 / cert.d - 0.1 {
                return Ok((
                    false,
                    format!("sampled directions all fall short: best {best:.3} vs 1/d {:.3}", 1.0 / cert.d),
                ));
            }
        }
        Ok((
            true,
            format!(
                "1000 instances verified; worst cone margin {worst_margin:.1e}, worst oracle gap {worst_oracle_gap:.3}"
            ),
        ))
    })
}

/// Runs all eleven checks in order.
pub fn run_all() -> Vec<CriterionOutcome> {
    vec![
        closed_form_profiles(),
        radial_decay_envelope(),
        dissipation_balance(),
        stationary_persistence(),
        linearized_spectrum(),
        pair_recovery(),
        interaction_envelope(),
        critical_scaling(),
        energy_decay_rate(),
        concavity_margin(),
        separation_certificates(),
    ]
}
