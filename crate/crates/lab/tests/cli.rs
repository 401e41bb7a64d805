use std::path::Path;
use std::process::Command;

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_mtrl");

const SMALL_BANDIT: &str = r#"
kind = "bandit"
seed = 4
horizon = 10
tasks = 1
runs = 1

[env]
name = "latent"
categories = 4
actions = 3
decoys = 2
"#;

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn mtrl(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) {
    let out = mtrl(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bandit_run_writes_one_row_per_step_and_task() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL_BANDIT);
    let out = tmp.path().join("out");
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 11);
    assert_eq!(
        trace.lines().next().unwrap(),
        "run_id,t,task,action,reward,inst_regret,cum_regret,beta,width,contained"
    );
    assert!(out.join("summary.csv").exists());
    let svg = std::fs::read_to_string(out.join("plot.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polyline"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let text = format!("{SMALL_BANDIT}\n[baseline]\nepsilon = 0.1\n").replace("runs = 1", "runs = 3");
    let cfg = write_config(tmp.path(), &text);
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    for (dir, workers) in [(&a, "1"), (&b, "1"), (&c, "3")] {
        run_ok(&["run", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap(), "--workers", workers]);
    }
    for file in ["trace.csv", "summary.csv", "plot.svg"] {
        let x = std::fs::read(a.join(file)).unwrap();
        assert_eq!(x, std::fs::read(b.join(file)).unwrap(), "{file}");
        assert_eq!(x, std::fs::read(c.join(file)).unwrap(), "{file} with workers");
    }
}

#[test]
fn seed_override_changes_output() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL_BANDIT);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap(), "--seed", "99"]);
    assert_ne!(std::fs::read(a.join("trace.csv")).unwrap(), std::fs::read(b.join("trace.csv")).unwrap());
}

#[test]
fn sweep_writes_one_summary_row_per_key() {
    let tmp = TempDir::new().unwrap();
    let text = format!("{SMALL_BANDIT}\n[sweep]\ntasks = [10, 1, 5]\n");
    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("out");
    run_ok(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--no-svg"]);
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let keys: Vec<&str> = summary.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(keys, ["tasks=1", "tasks=5", "tasks=10"]);
    assert!(summary.lines().skip(1).all(|l| l.split(',').nth(4) == Some("1")));
    assert!(!out.join("plot.svg").exists());
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 10 * (1 + 5 + 10));
}

#[test]
fn invalid_config_exits_nonzero() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "kind = \"bandit\"\nhorizon = 10\nsurprise = true\n");
    let out = mtrl(&["run", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("surprise"));

    let missing = mtrl(&["run", "--config", "/nonexistent/config.toml"]);
    assert!(!missing.status.success());

    let cfg = write_config(tmp.path(), SMALL_BANDIT);
    let no_sweep = mtrl(&["sweep", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert!(!no_sweep.status.success());
}

#[test]
fn containment_subcommand_reports_frequency() {
    let tmp = TempDir::new().unwrap();
    // An unbounded radius keeps every candidate, so containment is certain.
    let text = SMALL_BANDIT.replace("runs = 1", "runs = 5\nbeta = { mode = \"fixed\", value = inf }");
    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("out");
    run_ok(&["containment", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().nth(1).unwrap(), "1,10,5,5,1");
}

#[test]
fn eluder_subcommand() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "kind = \"eluder\"\n[eluder]\nclass = \"linear_grid\"\ndim = 3\nstep = 0.5\neps = [0.5, 0.25]\n",
    );
    let out = tmp.path().join("out");
    run_ok(&["eluder", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let rows: Vec<Vec<&str>> = summary.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "0.25");
    for r in &rows {
        let (ex, gr): (usize, usize) = (r[3].parse().unwrap(), r[4].parse().unwrap());
        assert!(ex >= 3 && gr <= ex);
    }
}

#[test]
fn mdp_and_transfer_runs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "kind = \"mdp\"\nhorizon = 6\ntasks = 2\nruns = 2\n[env]\nname = \"linear_mdp\"\nk = 2\nstates = 4\nactions = 2\nhorizon = 3\ndecoys = 1\n",
    );
    let out = tmp.path().join("mdp");
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 2 * 6 * 2);
    // MDP traces carry no width or containment.
    assert!(trace.lines().skip(1).all(|l| l.ends_with(",,")));

    let cfg = write_config(
        tmp.path(),
        "kind = \"transfer\"\nhorizon = 30\ntasks = 2\nruns = 2\n[env]\nname = \"latent\"\ncategories = 4\nactions = 3\ndecoys = 2\n[transfer]\nsteps = 20\n",
    );
    let out = tmp.path().join("transfer");
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let algos: Vec<&str> = summary.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(algos, ["pretrained", "decoy"]);
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 2 * 20);
}

#[test]
fn diagnostics_subcommand() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "kind = \"diagnostics\"\ntasks = 2\nruns = 2\n[env]\nname = \"latent\"\ncategories = 4\nactions = 3\ndecoys = 2\n[diagnostic]\ntraining_sizes = [10, 40]\nheldout = 12\n",
    );
    let out = tmp.path().join("out");
    run_ok(&["diagnostics", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    let kernel = std::fs::read_to_string(out.join("kernel.csv")).unwrap();
    assert_eq!(kernel.lines().count(), 1 + 16);
    let bonus = std::fs::read_to_string(out.join("bonus.csv")).unwrap();
    assert_eq!(bonus.lines().count(), 1 + 2 * 2 * 2 * 12);
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            mtrl_lab::config::ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 6);
}
