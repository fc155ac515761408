//! Library side of the `gsflow` binary: config loading, task dispatch, and
//! the command implementations. Exposed as a library so integration tests can
//! drive full runs in-process.

pub mod cmds;
pub mod config;

use std::path::PathBuf;

/// Failure classes, mapped to exit codes by the binary: usage/config problems
/// exit 2, failed computations or failed verification criteria exit 1.
#[derive(Debug)]
pub enum RunError {
    Usage(String),
    Failed(String),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Usage(m) | RunError::Failed(m) => f.write_str(m),
        }
    }
}

/// A resolved command-line invocation (flags already parsed).
#[derive(Debug, Clone, Default)]
pub struct Invocation {
    /// Subcommand; falls back to `task.name` from the config.
    pub task: Option<String>,
    pub config: Option<PathBuf>,
    /// Overrides the config's `task.out_dir`.
    pub out: Option<PathBuf>,
    /// Overrides the config's `task.seed`.
    pub seed: Option<u64>,
    /// Worker threads for `verify`; other tasks are single-process.
    pub threads: usize,
}

pub fn run(inv: &Invocation) -> Result<(), RunError> {
    let loaded = match &inv.config {
        Some(path) => Some(config::load(path).map_err(RunError::Usage)?),
        None => None,
    };
    let task = inv
        .task
        .clone()
        .or_else(|| loaded.as_ref().and_then(|l| l.cfg.task.name.clone()))
        .ok_or_else(|| {
            RunError::Usage(
                "no task selected: pass a subcommand or set task.name in the config".into(),
            )
        })?;

    // The digest of an absent config is the digest of zero bytes; outputs
    // stay traceable either way.
    let hash = loaded
        .as_ref()
        .map(|l| l.hash.clone())
        .unwrap_or_else(|| format!("{:016x}", config::fnv1a64(b"")));
    let seed = inv
        .seed
        .unwrap_or_else(|| loaded.as_ref().map(|l| l.cfg.task.seed).unwrap_or(0));
    let out = inv
        .out
        .clone()
        .or_else(|| loaded.as_ref().map(|l| PathBuf::from(&l.cfg.task.out_dir)))
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out)
        .map_err(|e| RunError::Usage(format!("cannot create {}: {e}", out.display())))?;

    if task == "verify" {
        return cmds::verify(&out, &hash, seed, inv.threads.max(1));
    }

    let loaded = loaded.ok_or_else(|| {
        RunError::Usage(format!("task {task:?} needs --config (only verify runs without one)"))
    })?;
    let ctx = cmds::Ctx { cfg: &loaded.cfg, hash: &loaded.hash, seed, out };
    match task.as_str() {
        "ground-state" => cmds::ground_state(&ctx),
        "flow" => cmds::flow(&ctx),
        "fit" => cmds::fit(&ctx),
        "spectrum" => cmds::spectrum(&ctx),
        "threshold" => cmds::threshold(&ctx),
        "separate" => cmds::separate_points(&ctx),
        other => Err(RunError::Usage(format!(
            "unknown task {other:?}; expected one of {}",
            config::TASK_NAMES.join(", ")
        ))),
    }
}
