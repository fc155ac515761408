//! One function per subcommand. Each builds its inputs from the validated
//! config, drives the core library, and writes machine-readable outputs that
//! embed the config digest and seed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use gsflow_core::acceptance::{self, CriterionOutcome};
use gsflow_core::bubbles::{best_match, FitSummary, MBubble};
use gsflow_core::field::{BoxGrid, Field, Geometry, Grid, RadialGrid};
use gsflow_core::flow::{dissipation_residual, run as flow_run, FlowEvent, FlowParams};
use gsflow_core::geometry::{neighborhood_cert, separate, SeparationCert};
use gsflow_core::ground_state::{shoot, DecayReport, RadialProfile};
use gsflow_core::reaction::Nonlinearity;
use gsflow_core::spectral::{kernel_tolerance, radial_sector, spectral_report, SpectralReport};
use gsflow_core::threshold::{
    bisect_threshold, near_threshold_profile_check, PlateauReport, ThresholdParams,
    ThresholdSummary,
};

use crate::config::{ExperimentConfig, GridKind, InitialKind};
use crate::RunError;

/// Everything a command needs besides its own config section.
pub struct Ctx<'a> {
    pub cfg: &'a ExperimentConfig,
    pub hash: &'a str,
    pub seed: u64,
    pub out: PathBuf,
}

impl Ctx<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn nl(&self) -> Result<Nonlinearity<f64>, RunError> {
        Nonlinearity::new(self.cfg.reaction.a0, &self.cfg.reaction.terms)
            .map_err(|e| RunError::Usage(format!("invalid reaction term: {e}")))
    }

    fn profile(&self, nl: &Nonlinearity<f64>) -> Result<RadialProfile<f64>, RunError> {
        let pc = &self.cfg.profile;
        shoot(nl, self.cfg.grid.dimension, pc.r_max, pc.h, pc.tol).map_err(failed)
    }

    fn grid(&self) -> Result<Grid<f64>, RunError> {
        let gc = &self.cfg.grid;
        match gc.kind {
            GridKind::Radial => RadialGrid::from_extent(gc.dimension, gc.r_max, gc.h)
                .map(Grid::Radial)
                .map_err(|e| RunError::Usage(format!("grid: {e}"))),
            GridKind::Box => {
                let side = (2.0 * gc.r_max / gc.h).round() as usize + 1;
                BoxGrid::new(gc.dimension, gc.r_max, side)
                    .map(Grid::Cartesian)
                    .map_err(|e| RunError::Usage(format!("grid: {e}")))
            }
        }
    }

    /// Initial data per the `[initial]` section, sampled on `grid`.
    fn initial(
        &self,
        grid: &Grid<f64>,
        profile: &RadialProfile<f64>,
    ) -> Result<Field<f64>, RunError> {
        let ic = &self.cfg.initial;
        let mut field = match ic.kind {
            InitialKind::ScaledProfile => {
                MBubble::new(vec![[0.0; 3]], vec![ic.scale])
                    .and_then(|b| b.render(grid, profile))
                    .map_err(failed)?
            }
            InitialKind::Gaussian => {
                let values = (0..grid.len())
                    .map(|i| {
                        let r = grid.radius(i);
                        ic.amplitude * (-r * r / (2.0 * ic.width * ic.width)).exp()
                    })
                    .collect();
                Field::from_values(grid.clone(), values).map_err(failed)?
            }
            InitialKind::Bubbles => {
                if matches!(grid, Grid::Radial(_)) {
                    return Err(RunError::Usage(
                        "initial.kind = \"bubbles\" needs a box grid".into(),
                    ));
                }
                if ic.centers.is_empty() {
                    return Err(RunError::Usage(
                        "initial.kind = \"bubbles\" needs initial.centers".into(),
                    ));
                }
                MBubble::new(ic.centers.clone(), ic.weights.clone())
                    .and_then(|b| b.render(grid, profile))
                    .map_err(failed)?
            }
        };
        if ic.noise > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            for i in 0..field.values.len() {
                if !field.grid.is_boundary(i) {
                    field.values[i] += ic.noise * rng.gen_range(-1.0..1.0);
                }
            }
        }
        Ok(field)
    }

    fn flow_params(&self) -> FlowParams<f64> {
        let fc = &self.cfg.flow;
        let mut p = FlowParams::new(fc.dt, fc.t_final);
        p.conv_tol = fc.conv_tol;
        p.cg_tol = fc.cg_tol;
        p.sample_every = fc.sample_every.max(1);
        p.snapshot_every = fc.snapshot_every;
        p
    }
}

fn failed(e: impl std::fmt::Display) -> RunError {
    RunError::Failed(e.to_string())
}

fn write_json<S: Serialize>(path: &Path, payload: &S) -> Result<(), RunError> {
    let text = serde_json::to_string_pretty(payload)
        .map_err(|e| RunError::Failed(format!("serialize {}: {e}", path.display())))?;
    std::fs::write(path, text + "\n")
        .map_err(|e| RunError::Failed(format!("write {}: {e}", path.display())))
}

/// Least-squares line through `(xs, ys)`: `(slope, intercept, r^2)`.
fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, my - slope * mx, r2)
}

// ---------------------------------------------------------------------------
// ground-state

#[derive(Serialize)]
struct GroundStateReport {
    config_hash: String,
    seed: u64,
    n: usize,
    xi0: f64,
    decay_rate: f64,
    r_last: f64,
    nodes: usize,
    /// Max relative residual of the radial ODE over interior nodes.
    ode_residual_rel_max: f64,
    /// Residual of the `w = r^{(n-1)/2} xi` reduction (dimensions >= 2).
    emden_fowler_residual: Option<f64>,
    decay: DecayReport<f64>,
    /// Sup-distance to the closed-form solution when one exists
    /// (line soliton families only).
    analytic_sup_error: Option<f64>,
}

/// Closed-form line solitons for `a0 = 1`: `t - t^2` and `t - t^3`.
fn closed_form_error(cfg: &ExperimentConfig, p: &RadialProfile<f64>) -> Option<f64> {
    if p.n != 1 || cfg.reaction.a0 != 1.0 || cfg.reaction.terms.len() != 1 {
        return None;
    }
    let (c, q) = cfg.reaction.terms[0];
    if c != 1.0 {
        return None;
    }
    let reference: fn(f64) -> f64 = if q == 2.0 {
        |r| 1.5 / (0.5 * r).cosh().powi(2)
    } else if q == 3.0 {
        |r| std::f64::consts::SQRT_2 / r.cosh()
    } else {
        return None;
    };
    let sup = (0..p.len())
        .map(|i| (p.xi[i] - reference(p.h * i as f64)).abs())
        .fold(0.0f64, f64::max);
    Some(sup)
}

pub fn ground_state(ctx: &Ctx) -> Result<(), RunError> {
    let nl = ctx.nl()?;
    let p = ctx.profile(&nl)?;
    let decay = p.decay_report(ctx.cfg.profile.decay_r_lo).map_err(failed)?;

    let file = File::create(ctx.path("profile.csv")).map_err(failed)?;
    p.write_csv(
        BufWriter::new(file),
        &[("config_hash", ctx.hash.to_string()), ("seed", ctx.seed.to_string())],
    )
    .map_err(failed)?;

    let report = GroundStateReport {
        config_hash: ctx.hash.to_string(),
        seed: ctx.seed,
        n: p.n,
        xi0: p.xi0,
        decay_rate: p.m,
        r_last: p.r_last(),
        nodes: p.len(),
        ode_residual_rel_max: p.ode_residual_rel_max(&nl),
        emden_fowler_residual: p.emden_fowler_residual(&nl).ok(),
        decay,
        analytic_sup_error: closed_form_error(ctx.cfg, &p),
    };
    write_json(&ctx.path("report.json"), &report)
}

// ---------------------------------------------------------------------------
// flow

#[derive(Serialize)]
struct FlowReport {
    config_hash: String,
    seed: u64,
    event: FlowEvent<f64>,
    steps: usize,
    energy_initial: f64,
    energy_final: f64,
    dissipated_total: f64,
    /// Relative defect of the energy balance over the full sampled window.
    balance_residual: Option<f64>,
    clamped_mass: f64,
    cg_iters_total: usize,
}

#[derive(Serialize)]
struct SnapshotFit {
    t: f64,
    fit: FitSummary<f64>,
}

#[derive(Serialize)]
struct FitsFile {
    config_hash: String,
    seed: u64,
    fits: Vec<SnapshotFit>,
}

#[derive(Serialize)]
struct RateFit {
    window: (f64, f64),
    points: usize,
    j_inf: f64,
    slope: f64,
    intercept: f64,
    r2: f64,
}

#[derive(Serialize)]
struct RateFile {
    config_hash: String,
    seed: u64,
    /// Set when the spectral preconditions for a rate claim do not hold.
    refused: Option<String>,
    fit: Option<RateFit>,
}

/// A decay-rate claim presumes the linearization at the profile is
/// nondegenerate: exactly one unstable radial mode, and (for n >= 2) a
/// translation kernel at the first angular sector. When these fail the rate
/// file records the refusal instead of a slope.
fn rate_gate(
    nl: &Nonlinearity<f64>,
    p: &RadialProfile<f64>,
    cfg: &ExperimentConfig,
) -> Result<(), String> {
    let sc = &cfg.spectrum;
    let sec0 = radial_sector(nl, p, 0, sc.h, sc.r_max).map_err(|e| e.to_string())?;
    let negatives = sec0.count_below(0.0);
    if negatives != 1 {
        return Err(format!("expected exactly one unstable radial mode, found {negatives}"));
    }
    if p.n >= 2 {
        let sec1 = radial_sector(nl, p, 1, sc.h, sc.r_max).map_err(|e| e.to_string())?;
        let lambda = sec1.smallest_eigenvalues(1)[0];
        let tol = kernel_tolerance(nl, p, sc.h);
        if lambda.abs() > tol {
            return Err(format!(
                "translation mode off zero: lambda = {lambda:e} exceeds tolerance {tol:e}"
            ));
        }
    }
    Ok(())
}

pub fn flow(ctx: &Ctx) -> Result<(), RunError> {
    let nl = ctx.nl()?;
    let p = ctx.profile(&nl)?;
    let grid = ctx.grid()?;
    if matches!(grid, Grid::Radial(_)) && ctx.cfg.fit.m != 1 {
        return Err(RunError::Usage("radial grids admit only fit.m = 1".into()));
    }
    let u0 = ctx.initial(&grid, &p)?;
    let res = flow_run(&grid, &nl, &u0.values, &ctx.flow_params()).map_err(failed)?;

    let mut csv = BufWriter::new(File::create(ctx.path("run.csv")).map_err(failed)?);
    writeln!(csv, "# config_hash = {}", ctx.hash).map_err(failed)?;
    writeln!(csv, "# seed = {}", ctx.seed).map_err(failed)?;
    writeln!(csv, "t,sup,l2,energy,du_l2,dissipated").map_err(failed)?;
    for s in &res.samples {
        writeln!(csv, "{},{},{},{},{},{}", s.t, s.sup, s.l2, s.energy, s.du_l2, s.dissipated)
            .map_err(failed)?;
    }
    csv.flush().map_err(failed)?;

    if !res.snapshots.is_empty() {
        let mut fits = Vec::new();
        for (t, values) in &res.snapshots {
            let field = Field::from_values(grid.clone(), values.clone()).map_err(failed)?;
            let fit = best_match(&field, &p, &nl, ctx.cfg.fit.m, None).map_err(failed)?;
            fits.push(SnapshotFit { t: *t, fit: fit.summary() });
        }
        let payload =
            FitsFile { config_hash: ctx.hash.to_string(), seed: ctx.seed, fits };
        write_json(&ctx.path("fits.json"), &payload)?;
    }

    if let Some(rc) = &ctx.cfg.rate {
        let payload = match rate_gate(&nl, &p, ctx.cfg) {
            Err(reason) => RateFile {
                config_hash: ctx.hash.to_string(),
                seed: ctx.seed,
                refused: Some(reason),
                fit: None,
            },
            Ok(()) => {
                let one = MBubble::new(vec![[0.0; 3]], vec![1.0])
                    .and_then(|b| b.render(&grid, &p))
                    .map_err(failed)?;
                let j_inf = rc.bubbles as f64 * one.energy(&nl);
                let (mut xs, mut ys) = (Vec::new(), Vec::new());
                for s in &res.samples {
                    if s.t >= rc.window.0 && s.t <= rc.window.1 && s.energy > j_inf {
                        xs.push(s.t);
                        ys.push((s.energy - j_inf).ln());
                    }
                }
                if xs.len() < 3 {
                    return Err(RunError::Failed(format!(
                        "rate window {:?} holds only {} usable samples",
                        rc.window,
                        xs.len()
                    )));
                }
                let (slope, intercept, r2) = linear_fit(&xs, &ys);
                RateFile {
                    config_hash: ctx.hash.to_string(),
                    seed: ctx.seed,
                    refused: None,
                    fit: Some(RateFit {
                        window: rc.window,
                        points: xs.len(),
                        j_inf,
                        slope,
                        intercept,
                        r2,
                    }),
                }
            }
        };
        write_json(&ctx.path("rate.json"), &payload)?;
    }

    let (first, last) = match (res.samples.first(), res.samples.last()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(RunError::Failed("run recorded no samples".into())),
    };
    let report = FlowReport {
        config_hash: ctx.hash.to_string(),
        seed: ctx.seed,
        event: res.event,
        steps: res.steps,
        energy_initial: first.energy,
        energy_final: last.energy,
        dissipated_total: last.dissipated,
        balance_residual: dissipation_residual(&res.samples, (first.t, last.t)).ok(),
        clamped_mass: res.clamped_mass,
        cg_iters_total: res.cg_iters_total,
    };
    write_json(&ctx.path("report.json"), &report)
}

// ---------------------------------------------------------------------------
// fit

#[derive(Serialize)]
struct FitFile {
    config_hash: String,
    seed: u64,
    fit: FitSummary<f64>,
}

pub fn fit(ctx: &Ctx) -> Result<(), RunError> {
    let nl = ctx.nl()?;
    let p = ctx.profile(&nl)?;
    let grid = ctx.grid()?;
    if matches!(grid, Grid::Radial(_)) && ctx.cfg.fit.m != 1 {
        return Err(RunError::Usage("radial grids admit only fit.m = 1".into()));
    }
    let u = ctx.initial(&grid, &p)?;
    let fit = best_match(&u, &p, &nl, ctx.cfg.fit.m, None).map_err(failed)?;
    let payload =
        FitFile { config_hash: ctx.hash.to_string(), seed: ctx.seed, fit: fit.summary() };
    write_json(&ctx.path("fit.json"), &payload)
}

// ---------------------------------------------------------------------------
// spectrum

#[derive(Serialize)]
struct SpectrumFile {
    config_hash: String,
    seed: u64,
    report: SpectralReport<f64>,
}

pub fn spectrum(ctx: &Ctx) -> Result<(), RunError> {
    let nl = ctx.nl()?;
    let p = ctx.profile(&nl)?;
    let sc = &ctx.cfg.spectrum;
    let report = spectral_report(&nl, &p, sc.h, sc.r_max, ctx.seed).map_err(failed)?;
    let payload =
        SpectrumFile { config_hash: ctx.hash.to_string(), seed: ctx.seed, report };
    write_json(&ctx.path("spectrum.json"), &payload)
}

// ---------------------------------------------------------------------------
// threshold

#[derive(Serialize)]
struct ThresholdFile {
    config_hash: String,
    seed: u64,
    summary: ThresholdSummary<f64>,
    plateau: Option<PlateauReport<f64>>,
    plateau_refused: Option<String>,
}

pub fn threshold(ctx: &Ctx) -> Result<(), RunError> {
    let nl = ctx.nl()?;
    let p = ctx.profile(&nl)?;
    let grid = ctx.grid()?;
    let u0 = ctx.initial(&grid, &p)?;
    let tc = &ctx.cfg.threshold;
    let mut params = ThresholdParams::new(ctx.cfg.flow.dt, tc.horizon);
    params.tol_alpha = tc.tol_alpha;
    params.conv_tol = ctx.cfg.flow.conv_tol;
    let res = bisect_threshold(&u0, &nl, tc.bracket, &params).map_err(failed)?;
    let (plateau, plateau_refused) = if tc.plateau_check {
        match near_threshold_profile_check(&res, &p, &nl) {
            Ok(rep) => (Some(rep), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, None)
    };
    let payload = ThresholdFile {
        config_hash: ctx.hash.to_string(),
        seed: ctx.seed,
        summary: res.summary(),
        plateau,
        plateau_refused,
    };
    write_json(&ctx.path("threshold.json"), &payload)
}

// ---------------------------------------------------------------------------
// separate

#[derive(Serialize)]
struct NeighborhoodSummary {
    samples: usize,
    all_pass: bool,
}

#[derive(Serialize)]
struct SeparateFile {
    config_hash: String,
    seed: u64,
    cert: SeparationCert<f64>,
    /// Worst re-checked slack of `(x_i - y)·e / |x_i - y| >= 1/d`.
    worst_margin: f64,
    neighborhood: NeighborhoodSummary,
}

fn unit_direction(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n)
            .map(|_| {
                let (u1, u2) = (rng.gen::<f64>().max(1e-300), rng.gen::<f64>());
                (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            })
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

pub fn separate_points(ctx: &Ctx) -> Result<(), RunError> {
    let sc = &ctx.cfg.separate;
    if sc.points.len() < 2 {
        return Err(RunError::Usage(
            "separate needs at least two rows in separate.points".into(),
        ));
    }
    let n = sc.points[0].len();
    if n == 0 || sc.points.iter().any(|p| p.len() != n) {
        return Err(RunError::Usage(
            "separate.points rows must share one nonzero length".into(),
        ));
    }
    let cert = separate(&sc.points, n).map_err(failed)?;

    let y = cert.y().to_vec();
    let mut worst = f64::INFINITY;
    for (i, x) in cert.points.iter().enumerate() {
        if i == cert.y_index {
            continue;
        }
        let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let dist = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
        let along: f64 = diff.iter().zip(&cert.e).map(|(a, b)| a * b).sum();
        worst = worst.min(along / dist - 1.0 / cert.d);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut all_pass = true;
    for _ in 0..sc.neighborhood_samples {
        let dir = unit_direction(&mut rng, n);
        let radius = cert.l_prime * rng.gen::<f64>().powf(1.0 / n as f64) * 0.999;
        let z: Vec<f64> = y.iter().zip(&dir).map(|(a, b)| a + radius * b).collect();
        all_pass &= neighborhood_cert(&cert, &z).map_err(failed)?;
    }

    let payload = SeparateFile {
        config_hash: ctx.hash.to_string(),
        seed: ctx.seed,
        cert,
        worst_margin: worst,
        neighborhood: NeighborhoodSummary { samples: sc.neighborhood_samples, all_pass },
    };
    write_json(&ctx.path("cert.json"), &payload)
}

// ---------------------------------------------------------------------------
// verify

#[derive(Serialize)]
struct VerdictRow {
    id: usize,
    name: String,
    passed: bool,
    details: String,
}

#[derive(Serialize)]
struct VerifyFile {
    config_hash: String,
    seed: u64,
    passed: usize,
    total: usize,
    criteria: Vec<VerdictRow>,
}

/// Runtime-free verdict line (the timed variant goes to stdout only, so the
/// written summary stays bit-identical across runs).
fn row_text(o: &CriterionOutcome) -> String {
    format!(
        "[{:2}] {} {} — {}",
        o.id,
        if o.passed { "PASS" } else { "FAIL" },
        o.name,
        o.details
    )
}

fn run_criteria(threads: usize) -> Vec<CriterionOutcome> {
    if threads <= 1 {
        return acceptance::run_all();
    }
    let jobs: Vec<fn() -> CriterionOutcome> = vec![
        acceptance::closed_form_profiles,
        acceptance::radial_decay_envelope,
        acceptance::dissipation_balance,
        acceptance::stationary_persistence,
        acceptance::linearized_spectrum,
        acceptance::pair_recovery,
        acceptance::interaction_envelope,
        acceptance::critical_scaling,
        acceptance::energy_decay_rate,
        acceptance::concavity_margin,
        acceptance::separation_certificates,
    ];
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<CriterionOutcome>>> =
        jobs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..threads.min(jobs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let outcome = jobs[i]();
                *slots[i].lock().unwrap() = Some(outcome);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().unwrap().expect("every criterion ran"))
        .collect()
}

pub fn verify(out: &Path, hash: &str, seed: u64, threads: usize) -> Result<(), RunError> {
    let outcomes = run_criteria(threads);
    let mut lines = Vec::new();
    for o in &outcomes {
        println!("{}", o.line());
        lines.push(row_text(o));
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    println!("{passed}/{} criteria passed", outcomes.len());

    let mut text = format!("# config_hash = {hash}\n# seed = {seed}\n");
    text.push_str(&lines.join("\n"));
    text.push('\n');
    std::fs::write(out.join("verify.txt"), text).map_err(failed)?;

    let payload = VerifyFile {
        config_hash: hash.to_string(),
        seed,
        passed,
        total: outcomes.len(),
        criteria: outcomes
            .iter()
            .map(|o| VerdictRow {
                id: o.id,
                name: o.name.to_string(),
                passed: o.passed,
                details: o.details.clone(),
            })
            .collect(),
    };
    write_json(&out.join("verify.json"), &payload)?;

    if passed < outcomes.len() {
        let names: Vec<&str> =
            outcomes.iter().filter(|o| !o.passed).map(|o| o.name).collect();
        return Err(RunError::Failed(format!(
            "{} of {} criteria failed: {}",
            outcomes.len() - passed,
            outcomes.len(),
            names.join(", ")
        )));
    }
    Ok(())
}
