use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn crnir(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crnir")).args(args).arg("--out").arg(out).output().unwrap()
}

fn cfg(name: &str) -> String {
    configs().join(name).to_str().unwrap().to_string()
}

#[test]
fn verify_passes_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = crnir(&["verify"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let report = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(report.lines().count() > 12);
    assert!(report.lines().skip(1).all(|l| l.ends_with(",true") || l.contains(",true,")));
    assert!(dir.path().join("summary.txt").exists());
}

#[test]
fn wrong_c0_fails_audit() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[verify]\nc0 = 2.2\npoints = 50\nmc_samples = 20000\n").unwrap();
    let o = crnir(&["verify", "--config", path.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(crnir(&["verify", "--config", "/no/such/file.toml"], dir.path()).status.code(), Some(1));
    assert_eq!(crnir(&["frobnicate"], dir.path()).status.code(), Some(1));
    let path = dir.path().join("typo.toml");
    std::fs::write(&path, "sed = 3\n").unwrap();
    assert_eq!(crnir(&["solve", "--config", path.to_str().unwrap()], dir.path()).status.code(), Some(1));
}

#[test]
fn single_bump_reaches_the_level() {
    let dir = tempfile::tempdir().unwrap();
    let o = crnir(&["solve", "--config", &cfg("constant.toml")], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let w: toml::Table = std::fs::read_to_string(dir.path().join("witness.toml")).unwrap().parse().unwrap();
    let e = w["energy"].as_float().unwrap();
    assert!((e / (PI * PI) - 1.0).abs() < 0.02, "{e}");
    assert_eq!(w["final_tau"].as_float(), Some(0.0));
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("step,tau,energy,grad_norm,alpha_1,x1_1,y1_1,t_1,lambda_1\n"));
    assert!(trace.lines().count() > 2);
    for f in ["energy.dat", "centers_1.dat"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn close_wells_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = crnir(&["solve", "--config", &cfg("close_wells.toml")], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bump escape"));
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1);
    let w = std::fs::read_to_string(dir.path().join("witness.toml")).unwrap();
    assert!(w.contains("closer than 1"));
}

#[test]
fn solve_is_deterministic_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    crnir(&["solve", "--config", &cfg("constant.toml"), "--threads", "1"], &a);
    crnir(&["solve", "--config", &cfg("constant.toml"), "--threads", "3"], &b);
    assert_eq!(std::fs::read(a.join("trace.csv")).unwrap(), std::fs::read(b.join("trace.csv")).unwrap());
}

#[test]
fn kappa_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let o = crnir(&["sweep", "--config", &cfg("kappa_sweep.toml")], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let s = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(s.starts_with("param,value,quantity\n"));
    let k3: f64 = s
        .lines()
        .find(|l| l.starts_with("beta=3e0,") && l.ends_with(",kappa"))
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!((k3 / (2f64.sqrt() / 4.0) - 1.0).abs() < 0.01, "{k3}");
    assert!(s.contains(",refinement_stable"));
}

#[test]
fn xi0_sweep_reports_min_norm() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("xi.toml");
    std::fs::write(&path, "[sweep]\nparam = \"xi0\"\npoints = [[0.0, 0.0, 0.0], [0.5, 0.0, 0.0]]\nrule = [16, 12, 12]\n").unwrap();
    let o = crnir(&["sweep", "--config", path.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(s.lines().filter(|l| l.ends_with(",norm")).count(), 2);
    assert_eq!(s.lines().filter(|l| l.ends_with(",min_norm")).count(), 1);
}

#[test]
fn empty_sweep_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.toml");
    std::fs::write(&path, "[sweep]\nparam = \"beta\"\nvalues = []\n").unwrap();
    let o = crnir(&["sweep", "--config", path.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
}
