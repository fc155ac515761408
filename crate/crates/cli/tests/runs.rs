//! End-to-end runs of the lighter subcommands through the library entry
//! point: determinism of outputs, exit-class mapping, and the shipped
//! example configs staying parseable.

use std::fs;
use std::path::{Path, PathBuf};

use gsflow_cli::{config, run, Invocation, RunError};
use tempfile::TempDir;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn invoke(task: &str, config: &Path, out: &Path, seed: Option<u64>) -> Result<(), RunError> {
    run(&Invocation {
        task: Some(task.into()),
        config: Some(config.to_path_buf()),
        out: Some(out.to_path_buf()),
        seed,
        threads: 1,
    })
}

const LINE_CUBIC: &str = r#"
[reaction]
a0 = 1.0
terms = [[1.0, 3.0]]

[grid]
kind = "radial"
dimension = 1
r_max = 14.0
h = 0.002

[profile]
r_max = 20.0
h = 0.001
tol = 1e-13
decay_r_lo = 6.0
"#;

#[test]
fn ground_state_outputs_are_bit_identical_across_runs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), LINE_CUBIC);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    invoke("ground-state", &cfg, &a, Some(3)).unwrap();
    invoke("ground-state", &cfg, &b, Some(3)).unwrap();
    for name in ["profile.csv", "report.json"] {
        let left = fs::read(a.join(name)).unwrap();
        let right = fs::read(b.join(name)).unwrap();
        assert_eq!(left, right, "{name} differs between identical runs");
        assert!(!left.is_empty());
    }
}

#[test]
fn ground_state_report_records_the_analytic_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), LINE_CUBIC);
    let out = tmp.path().join("out");
    invoke("ground-state", &cfg, &out, None).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let sup = report["analytic_sup_error"].as_f64().expect("recorded for t - t^3 on the line");
    assert!(sup <= 1e-6, "analytic sup error {sup}");
    assert_eq!(report["config_hash"], hash_of(&cfg));
}

fn hash_of(path: &Path) -> String {
    format!("{:016x}", config::fnv1a64(&fs::read(path).unwrap()))
}

#[test]
fn flow_run_writes_log_fits_and_balanced_report() {
    let text = format!(
        "{LINE_CUBIC}
[flow]
dt = 0.001
t_final = 1.0
sample_every = 10
snapshot_every = 500

[initial]
kind = \"scaled-profile\"
scale = 0.8

[fit]
m = 1
"
    );
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("out");
    invoke("flow", &cfg, &out, None).unwrap();

    let csv = fs::read_to_string(out.join("run.csv")).unwrap();
    assert!(csv.starts_with(&format!("# config_hash = {}", hash_of(&cfg))));
    assert!(csv.lines().count() > 50, "expected a sample per 10 steps");

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let residual = report["balance_residual"].as_f64().unwrap();
    assert!(residual < 0.05, "energy ledger out of balance: {residual}");

    let fits: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("fits.json")).unwrap()).unwrap();
    let fits = fits["fits"].as_array().unwrap();
    assert!(!fits.is_empty());
    for f in fits {
        let w = f["fit"]["weights"][0].as_f64().unwrap();
        assert!(w > 0.0 && w < 1.0, "decaying run should keep weight in (0,1): {w}");
    }
}

#[test]
fn spectrum_reproduces_the_line_oracle_through_the_cli() {
    let text = format!(
        "{LINE_CUBIC}
[spectrum]
h = 0.005
r_max = 16.0
"
    );
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("out");
    invoke("spectrum", &cfg, &out, None).unwrap();
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("spectrum.json")).unwrap()).unwrap();
    let bottom = json["report"]["sectors"][0]["smallest"][0].as_f64().unwrap();
    assert!((bottom + 3.0).abs() < 1e-3, "even-sector bottom {bottom}");
}

#[test]
fn separate_outputs_are_seed_stable() {
    let text = r#"
[reaction]
a0 = 1.0
terms = [[1.0, 2.0]]

[separate]
points = [[0.0, 0.0], [1.0, 0.1], [-0.4, 0.9], [0.6, -0.8]]
neighborhood_samples = 150
"#;
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), text);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    invoke("separate", &cfg, &a, Some(11)).unwrap();
    invoke("separate", &cfg, &b, Some(11)).unwrap();
    let left = fs::read(a.join("cert.json")).unwrap();
    assert_eq!(left, fs::read(b.join("cert.json")).unwrap());
    let json: serde_json::Value = serde_json::from_slice(&left).unwrap();
    assert!(json["neighborhood"]["all_pass"].as_bool().unwrap());
    assert!(json["worst_margin"].as_f64().unwrap() >= -1e-12);
}

#[test]
fn usage_problems_are_classified_as_usage_errors() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");

    // No task anywhere.
    let bare = write_config(tmp.path(), "[reaction]\na0 = 1.0\nterms = [[1.0, 2.0]]\n");
    let err = run(&Invocation {
        task: None,
        config: Some(bare.clone()),
        out: Some(out.clone()),
        seed: None,
        threads: 1,
    })
    .unwrap_err();
    assert!(matches!(err, RunError::Usage(_)), "{err}");

    // Unknown key.
    let typo = write_config(
        &tmp.path().join("."),
        "[reaction]\na0 = 1.0\nterms = [[1.0, 2.0]]\nbogus = 1\n",
    );
    assert!(matches!(
        invoke("ground-state", &typo, &out, None),
        Err(RunError::Usage(_))
    ));

    // Task that needs a config, without one.
    let err = run(&Invocation {
        task: Some("flow".into()),
        config: None,
        out: Some(out.clone()),
        seed: None,
        threads: 1,
    })
    .unwrap_err();
    assert!(matches!(err, RunError::Usage(_)), "{err}");

    // Structurally valid config but an impossible request.
    let radial_two = write_config(
        tmp.path(),
        "[reaction]\na0 = 1.0\nterms = [[1.0, 3.0]]\n[grid]\nkind = \"radial\"\ndimension = 1\n[fit]\nm = 2\n",
    );
    assert!(matches!(invoke("fit", &radial_two, &out, None), Err(RunError::Usage(_))));
}

#[test]
fn shipped_example_configs_parse_and_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let loaded = config::load(&path)
                .unwrap_or_else(|e| panic!("{} does not load: {e}", path.display()));
            assert!(loaded.cfg.task.name.is_some(), "{} lacks a task", path.display());
            seen += 1;
        }
    }
    assert_eq!(seen, 7, "one example per subcommand");
}
