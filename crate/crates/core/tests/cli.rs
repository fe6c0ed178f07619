use cmaflow::diagnostics::read_diagnostics;
use cmaflow::field_io::read_field;
use cmaflow::identities::read_identity_reports;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn cmaflow(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmaflow"))
        .args(args)
        .current_dir(cwd)
        .env("CMAFLOW_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

const SMALL: &str = "n = 1\nN = 16\n[speed]\nkind = \"log\"\n[[f]]\nk = [1, 0]\namplitude = 0.3\n";

#[test]
fn flat_run_converges_at_step_zero() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "flat.toml", "n = 1\nN = 16\n[speed]\nkind = \"linear\"\n");
    let o = cmaflow(&["run", "flat.toml", "--output", "out"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("CONVERGED"));
    let records = read_diagnostics(&tmp.path().join("out/diagnostics.csv")).unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].t, 0.0);
    assert!(stdout(&o).contains("decay fit skipped"));
}

#[test]
fn run_writes_fields_and_resolved_config() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "c.toml", &format!("dump_every = 50\nchecks = true\n{SMALL}"));
    let o = cmaflow(&["run", "c.toml", "--output", "out"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = tmp.path().join("out");
    for name in ["u_final", "phi_final", "det_h", "trace_h", "lambda_min", "lambda_max", "residual", "u_000000", "u_000050"] {
        let field = read_field(&out.join(format!("{name}.cmaf"))).unwrap();
        assert_eq!(field.values().len(), 256, "{name}");
    }
    let residual = read_field(&out.join("residual.cmaf")).unwrap();
    assert!(residual.sup_norm() < 1e-8);
    let resolved = fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(resolved.contains("cfl_safety"));
    let reports = read_identity_reports(&out.join("identities.csv")).unwrap();
    assert!(reports.iter().any(|r| r.name == "evol_logTrh"));
}

#[test]
fn budget_exhaustion_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "c.toml", &format!("{SMALL}[policy]\nmax_steps = 3\n"));
    let o = cmaflow(&["run", "c.toml", "--output", "out"], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stdout(&o).contains("NOT_CONVERGED"));
}

#[test]
fn malformed_config_names_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "bad.toml", &format!("{SMALL}[policy]\ndt_max = -1.0\n"));
    let o = cmaflow(&["run", "bad.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("policy.dt_max"), "{}", stderr(&o));

    write_config(tmp.path(), "bad2.toml", "n = 1\nN = 16\n[speed]\nkind = \"power\"\n");
    let o = cmaflow(&["run", "bad2.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("speed.a"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(cmaflow(&["frobnicate"], tmp.path()).status.code(), Some(1));
    assert_eq!(cmaflow(&["run"], tmp.path()).status.code(), Some(1));
    assert_eq!(cmaflow(&["run", "missing.toml"], tmp.path()).status.code(), Some(1));
    assert_eq!(cmaflow(&["--help"], tmp.path()).status.code(), Some(0));
}

#[test]
fn dump_info_prints_header() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "c.toml", SMALL);
    assert_eq!(cmaflow(&["run", "c.toml", "--output", "out"], tmp.path()).status.code(), Some(0));
    let o = cmaflow(&["dump-info", "out/phi_final.cmaf"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "n=1 N=16 count=256");

    fs::write(tmp.path().join("junk.cmaf"), b"not a field").unwrap();
    assert_eq!(cmaflow(&["dump-info", "junk.cmaf"], tmp.path()).status.code(), Some(1));
}

#[test]
fn oracle_matches_flow_limit() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "c.toml", SMALL);
    assert_eq!(cmaflow(&["run", "c.toml", "--output", "flow"], tmp.path()).status.code(), Some(0));
    let o = cmaflow(&["oracle", "c.toml", "--output", "oracle"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let flow = read_field(&tmp.path().join("flow/phi_final.cmaf")).unwrap();
    let oracle = read_field(&tmp.path().join("oracle/phi_oracle.cmaf")).unwrap();
    assert!(flow.sup_distance(&oracle).unwrap() < 1e-7);
}

#[test]
fn oracle_uses_newton_in_dimension_two() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(
        tmp.path(),
        "c.toml",
        "n = 2\nN = 8\n[speed]\nkind = \"log\"\n[[f]]\nk = [1, 0, 0, 0]\namplitude = 0.3\n",
    );
    let o = cmaflow(&["oracle", "c.toml", "--output", "oracle"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("method: newton"));
    let residual = read_field(&tmp.path().join("oracle/residual_oracle.cmaf")).unwrap();
    assert!(residual.sup_norm() < 1e-9);
}

#[test]
fn compare_reports_pairwise_differences() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "c.toml", SMALL);
    let o = cmaflow(&["compare", "c.toml", "--speeds", "log,linear,power:2", "--output", "cmp"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let line = text.lines().find(|l| l.starts_with("max pairwise")).unwrap();
    let worst: f64 = line.rsplit(' ').next().unwrap().parse().unwrap();
    assert!(worst < 1e-7, "{line}");
    for sub in ["log", "linear", "power_2"] {
        assert!(tmp.path().join("cmp").join(sub).join("diagnostics.csv").exists(), "{sub}");
    }
    let bad = cmaflow(&["compare", "c.toml", "--speeds", "log,cubic"], tmp.path());
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn check_writes_identity_table() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "c.toml", SMALL);
    let o = cmaflow(&["check", "c.toml", "--output", "chk"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let reports = read_identity_reports(&tmp.path().join("chk/identities.csv")).unwrap();
    for name in ["evol_u", "evol_phi", "evol_F", "evol_F2", "evol_F2_routes", "evol_logTrh"] {
        assert!(reports.iter().any(|r| r.name == name), "{name}");
    }
    assert!(reports.iter().all(|r| r.residual_sup < 1e-6));
    assert!(stdout(&o).contains("precursor_consistency"));
}

#[test]
fn diagnostics_are_deterministic_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "c.toml", SMALL);
    let run = |threads: &str, out: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_cmaflow"))
            .args(["run", "c.toml", "--output", out])
            .current_dir(tmp.path())
            .env("CMAFLOW_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
        fs::read(tmp.path().join(out).join("diagnostics.csv")).unwrap()
    };
    assert_eq!(run("1", "a"), run("4", "b"));
}

#[test]
fn bad_thread_count_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "c.toml", SMALL);
    let o = Command::new(env!("CARGO_BIN_EXE_cmaflow"))
        .args(["run", "c.toml"])
        .current_dir(tmp.path())
        .env("CMAFLOW_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("CMAFLOW_THREADS"));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            cmaflow::config::RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 3);
}
