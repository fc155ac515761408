//! Experiment configuration: one TOML file of flat key-value sections.
//!
//! Every field has a serviceable default except the reaction term list, so a
//! config states only what a run actually pins down. Unknown keys are
//! rejected — a typo should be a loud usage error, not a silently ignored
//! setting. The raw file bytes are hashed (FNV-1a, 64-bit) and the digest is
//! embedded in every output file so results stay traceable to the exact
//! configuration that produced them.

use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub reaction: ReactionCfg,
    #[serde(default)]
    pub grid: GridCfg,
    #[serde(default)]
    pub profile: ProfileCfg,
    #[serde(default)]
    pub flow: FlowCfg,
    #[serde(default)]
    pub task: TaskCfg,
    #[serde(default)]
    pub initial: InitialCfg,
    #[serde(default)]
    pub fit: FitCfg,
    #[serde(default)]
    pub threshold: ThresholdCfg,
    #[serde(default)]
    pub spectrum: SpectrumCfg,
    #[serde(default)]
    pub separate: SeparateCfg,
    #[serde(default)]
    pub rate: Option<RateCfg>,
}

/// Reaction term `f(t) = a0 t - sum_l a_l t^{p_l}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactionCfg {
    pub a0: f64,
    /// Sink terms as `(coefficient, exponent)` pairs, e.g. `[[1.0, 2.0]]`.
    pub terms: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    Radial,
    Box,
}

/// PDE grid: radial `[0, r_max]` or a Cartesian box `[-r_max, r_max]^n`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridCfg {
    pub kind: GridKind,
    pub dimension: usize,
    pub r_max: f64,
    pub h: f64,
}

impl Default for GridCfg {
    fn default() -> Self {
        Self { kind: GridKind::Radial, dimension: 3, r_max: 16.0, h: 0.01 }
    }
}

/// Shooting controls for the stationary profile underlying most tasks.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileCfg {
    pub r_max: f64,
    pub h: f64,
    pub tol: f64,
    /// Left edge of the decay-law window in the ground-state report.
    pub decay_r_lo: f64,
}

impl Default for ProfileCfg {
    fn default() -> Self {
        Self { r_max: 20.0, h: 1e-3, tol: 1e-13, decay_r_lo: 8.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowCfg {
    pub dt: f64,
    pub t_final: f64,
    pub conv_tol: f64,
    pub cg_tol: f64,
    pub sample_every: usize,
    /// Keep a full state snapshot every this many steps (enables per-snapshot
    /// bubble fits in the `flow` task).
    pub snapshot_every: Option<usize>,
}

impl Default for FlowCfg {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_final: 5.0,
            conv_tol: 1e-6,
            cg_tol: 1e-10,
            sample_every: 10,
            snapshot_every: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    /// The sampled stationary profile times `scale`.
    ScaledProfile,
    /// `amplitude * exp(-r^2 / (2 width^2))`.
    Gaussian,
    /// Sum of translated profiles with the given centers and weights
    /// (Cartesian grids only).
    Bubbles,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialCfg {
    pub kind: InitialKind,
    pub scale: f64,
    pub amplitude: f64,
    pub width: f64,
    pub centers: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    /// Uniform `[-noise, noise]` perturbation on interior nodes, seeded.
    pub noise: f64,
}

impl Default for InitialCfg {
    fn default() -> Self {
        Self {
            kind: InitialKind::ScaledProfile,
            scale: 1.0,
            amplitude: 1.0,
            width: 2.0,
            centers: Vec::new(),
            weights: Vec::new(),
            noise: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitCfg {
    /// Number of bubbles to fit (radial grids admit only 1).
    pub m: usize,
}

impl Default for FitCfg {
    fn default() -> Self {
        Self { m: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdCfg {
    pub bracket: (f64, f64),
    pub tol_alpha: f64,
    pub horizon: f64,
    /// Fit a single bubble to the retained near-threshold plateau.
    pub plateau_check: bool,
}

impl Default for ThresholdCfg {
    fn default() -> Self {
        Self { bracket: (0.5, 2.0), tol_alpha: 1e-3, horizon: 40.0, plateau_check: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumCfg {
    pub h: f64,
    pub r_max: f64,
}

impl Default for SpectrumCfg {
    fn default() -> Self {
        Self { h: 5e-3, r_max: 16.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeparateCfg {
    /// Point set to certify; all rows must share one length (the dimension).
    pub points: Vec<Vec<f64>>,
    /// Seeded displacement samples inside the guaranteed ball.
    pub neighborhood_samples: usize,
}

impl Default for SeparateCfg {
    fn default() -> Self {
        Self { points: Vec::new(), neighborhood_samples: 100 }
    }
}

/// Exponential-rate fit of `log(J(u(t)) - bubbles * J(profile))`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateCfg {
    pub window: (f64, f64),
    /// Stationary bubbles in the expected limit state (0 for vanishing runs).
    #[serde(default = "one")]
    pub bubbles: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskCfg {
    /// Task to run when no subcommand is given on the command line.
    pub name: Option<String>,
    pub seed: u64,
    pub out_dir: String,
}

impl Default for TaskCfg {
    fn default() -> Self {
        Self { name: None, seed: 0, out_dir: "out".into() }
    }
}

pub const TASK_NAMES: [&str; 7] =
    ["ground-state", "flow", "fit", "spectrum", "threshold", "separate", "verify"];

impl ExperimentConfig {
    /// Structural checks that do not need a grid or reaction term built yet.
    pub fn validate(&self) -> Result<(), String> {
        let positive: [(&str, f64); 10] = [
            ("reaction.a0", self.reaction.a0),
            ("grid.h", self.grid.h),
            ("grid.r_max", self.grid.r_max),
            ("profile.h", self.profile.h),
            ("profile.tol", self.profile.tol),
            ("flow.dt", self.flow.dt),
            ("flow.conv_tol", self.flow.conv_tol),
            ("flow.cg_tol", self.flow.cg_tol),
            ("threshold.tol_alpha", self.threshold.tol_alpha),
            ("spectrum.h", self.spectrum.h),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(format!("{name} must be positive (got {v})"));
            }
        }
        if let Some(name) = &self.task.name {
            if !TASK_NAMES.contains(&name.as_str()) {
                return Err(format!(
                    "unknown task {name:?}; expected one of {}",
                    TASK_NAMES.join(", ")
                ));
            }
        }
        if let Some(rate) = &self.rate {
            if !(rate.window.1 > rate.window.0) {
                return Err(format!(
                    "rate.window must be increasing (got {:?})",
                    rate.window
                ));
            }
        }
        Ok(())
    }
}

/// A parsed config plus the digest of the exact bytes it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub cfg: ExperimentConfig,
    pub hash: String,
}

pub fn load(path: &Path) -> Result<LoadedConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let cfg: ExperimentConfig = toml::from_str(&text)
        .map_err(|e| format!("cannot parse config {}: {e}", path.display()))?;
    cfg.validate()?;
    Ok(LoadedConfig { cfg, hash: format!("{:016x}", fnv1a64(text.as_bytes())) })
}

/// FNV-1a, 64-bit: tiny, stable across platforms, good enough to fingerprint
/// a config file (this is a provenance tag, not a security boundary).
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
