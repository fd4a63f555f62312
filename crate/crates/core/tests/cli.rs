use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use pmelab::cli::{cmd_check, cmd_oracle, cmd_simulate, cmd_sweep, CliError, Overrides, MANIFEST};
use tempfile::TempDir;

const BASE: &str = "\
dim = 1
L = 2
n = 48
T = 0.2
a = 1
b = 1
phi = 1 - p
u0 = 0.9*max(0, 1 - (x/0.5)^2)
lambda = 1
p_M = 1
Lambda = 1
tilde_lambda = 1
m_list = 10, 20
snapshots = 4
";

fn write_config(dir: &TempDir, text: &str) -> PathBuf {
    let path = dir.path().join("exp.cfg");
    fs::write(&path, text).unwrap();
    path
}

fn out(dir: &TempDir, name: &str) -> Overrides {
    Overrides { outdir: Some(dir.path().join(name)), ..Default::default() }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pmelab"))
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST)).unwrap()).unwrap()
}

fn csv_files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut found = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "csv") {
                found.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    found
}

#[test]
fn check_passes_for_constant_coefficients() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, BASE);
    let status = bin().arg("check").arg(&cfg).arg("--outdir").arg(dir.path().join("o")).output().unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stdout));
    assert!(dir.path().join("o/assumptions.txt").exists());
    assert_eq!(fs::read_to_string(dir.path().join("o/config.txt")).unwrap(), BASE);
}

#[test]
fn check_flags_growing_reaction() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, &BASE.replace("phi = 1 - p", "phi = p"));
    let output = bin().arg("check").arg(&cfg).arg("--outdir").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(output.status.code(), Some(1));
    let table = String::from_utf8(output.stdout).unwrap();
    assert!(table.lines().any(|l| l.contains("FAIL")), "{table}");
}

#[test]
fn config_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, &BASE.replace("p_M = 1\n", ""));
    let output = bin().arg("check").arg(&cfg).output().unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("p_M"));

    let cfg = write_config(&dir, &format!("{BASE}lamda = 3\n"));
    let output = bin().arg("simulate").arg(&cfg).output().unwrap();
    assert_eq!(output.status.code(), Some(1));
    let err = String::from_utf8_lossy(&output.stderr).to_string();
    assert!(err.contains("line 15") && err.contains("lamda"), "{err}");
}

#[test]
fn zero_horizon_writes_initial_snapshot_only() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, &BASE.replace("T = 0.2", "T = 0"));
    let run = cmd_simulate(&cfg, &out(&dir, "sim"), &mut Vec::new()).unwrap();
    let snaps: Vec<_> = fs::read_dir(run.join("m10"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("u_m10_t"))
        .collect();
    assert_eq!(snaps, vec!["u_m10_t0.000000.csv".to_string()]);

    let oracle = cmd_oracle(&cfg, &out(&dir, "oracle"), &mut Vec::new()).unwrap();
    let front = fs::read_to_string(oracle.join("oracle_front.csv")).unwrap();
    assert_eq!(front.lines().count(), 2, "{front}");
}

#[test]
fn refuses_without_force() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, &BASE.replace("phi = 1 - p", "phi = 0.5*(1 - p) + 0.2*p"));
    let report = cmd_check(&cfg, &out(&dir, "c"), &mut Vec::new()).unwrap();
    assert!(!report.all_passed());
    let err = cmd_simulate(&cfg, &out(&dir, "s"), &mut Vec::new()).unwrap_err();
    assert!(matches!(err, CliError::Refused));
    assert_eq!(err.exit_code(), 1);
    let forced = Overrides { force: true, ..out(&dir, "s") };
    let run = cmd_simulate(&cfg, &forced, &mut Vec::new()).unwrap();
    assert_eq!(manifest(&run)["forced"], true);
}

#[test]
fn sweep_needs_two_exponents() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, &BASE.replace("m_list = 10, 20", "m_list = 10"));
    let err = cmd_sweep(&cfg, &out(&dir, "s"), &mut Vec::new()).unwrap_err();
    assert!(matches!(err, CliError::Validation(_)));
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn sweep_is_deterministic_across_job_counts() {
    let dir = TempDir::new().unwrap();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/smoke.cfg");
    let first = cmd_sweep(&cfg, &Overrides { jobs: Some(2), ..out(&dir, "a") }, &mut Vec::new()).unwrap();
    let second = cmd_sweep(&cfg, &Overrides { jobs: Some(1), ..out(&dir, "b") }, &mut Vec::new()).unwrap();
    let (a, b) = (csv_files(&first), csv_files(&second));
    assert!(a.len() > 10);
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (name, bytes) in &a {
        assert!(bytes == &b[name], "{} differs", name.display());
    }
}

#[test]
fn manifest_lists_existing_files() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, BASE);
    let run = cmd_sweep(&cfg, &out(&dir, "s"), &mut Vec::new()).unwrap();
    let m = manifest(&run);
    assert_eq!(m["status"], "complete");
    let runs = m["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    let all = m["files"].as_array().unwrap().iter().chain(runs.iter().flat_map(|r| r["files"].as_array().unwrap()));
    for f in all {
        let f = f.as_str().unwrap();
        assert!(run.join(f).exists(), "{f}");
    }
    let summary = fs::read_to_string(run.join("sweep_summary.csv")).unwrap();
    assert_eq!(summary.lines().next(), Some("m,sup_p,comp_residual,L4_gradp,L3_wneg,front_err"));
    let cauchy = fs::read_to_string(run.join("cauchy.csv")).unwrap();
    assert_eq!(cauchy.lines().count(), 2);
}

#[test]
fn oracle_compares_against_sweep() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, BASE);
    let sweep = cmd_sweep(&cfg, &out(&dir, "s"), &mut Vec::new()).unwrap();
    let ov = Overrides { sweep: Some(sweep), ..out(&dir, "o") };
    let run = cmd_oracle(&cfg, &ov, &mut Vec::new()).unwrap();
    let front = fs::read_to_string(run.join("oracle_front.csv")).unwrap();
    assert_eq!(front.lines().next(), Some("t,R,relerr_m10,relerr_m20"));
    let profile = fs::read_to_string(run.join("oracle_profile.csv")).unwrap();
    assert_eq!(profile.lines().next(), Some("x,p"));
}

#[test]
fn oracle_rejects_heterogeneous_coefficients() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, &BASE.replace("a = 1\n", "a = 1 + 0.1*x^2\n").replace("Lambda = 1", "Lambda = 2"));
    let output = bin().arg("oracle").arg(&cfg).arg("--outdir").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(output.status.code(), Some(1), "{}", String::from_utf8_lossy(&output.stderr));
}
