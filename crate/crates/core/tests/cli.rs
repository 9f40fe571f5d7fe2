use std::path::Path;
use std::process::{Command, Output};

use plugplay::io::{read_cov, read_trace};

fn plugplay(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plugplay"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("PLUGPLAY_WORKERS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], out: &Path) -> serde_json::Value {
    let o = plugplay(args, out);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    let line = String::from_utf8(o.stdout).unwrap();
    assert_eq!(line.trim().lines().count(), 1);
    serde_json::from_str(line.trim()).unwrap()
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn simul_is_byte_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    ok(&["simul", "--seed", "42"], a.path());
    ok(&["simul", "--seed", "42", "-P", "3"], b.path());
    for f in ["data.csv", "latent.csv"] {
        assert_eq!(read(a.path().join(f)), read(b.path().join(f)));
    }
}

#[test]
fn pipeline_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let s = ok(&["lhs", "-m", "40", "--seed", "1"], d);
    assert_eq!(s["points"], 40);
    let s = ok(&["ksimplex", "--theta0", d.join("lhs_ranked.csv").to_str().unwrap()], d);
    assert_eq!(s["command"], "ksimplex");
    let map = d.join("theta_map.json");
    ok(&["kmcmc", "-M", "1500", "--theta0", map.to_str().unwrap(), "--seed", "2"], d);
    assert_eq!(read_cov(&d.join("cov_1000.json")).unwrap().nrows(), 3);
    let cov = d.join("cov_final.json");
    let p = d.join("p");
    let s = ok(&["pmcmc", "-M", "120", "-J", "100", "-P", "2", "--theta0", map.to_str().unwrap(), "--cov0", cov.to_str().unwrap()], &p);
    assert_eq!(s["iterations"], 120);
    let trace = read_trace(&p.join("trace.csv")).unwrap();
    assert_eq!(trace.rows.len(), 120);
    assert_eq!(trace.names, ["r0_1", "r0_2", "v"]);

    let diag = d.join("diag");
    ok(&["diag", "--trace", d.join("trace.csv").to_str().unwrap()], &diag);
    let hist = std::fs::read_to_string(diag.join("posterior_v.csv")).unwrap();
    let mut lines = hist.lines();
    assert_eq!(lines.next(), Some("bin_left,bin_right,count"));
    let counts: usize = lines.map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(counts, 1500);
    let summary: serde_json::Value = serde_json::from_slice(&read(diag.join("summary.json"))).unwrap();
    assert_eq!(summary["params"].as_array().unwrap().len(), 3);
    for f in ["traceplot_r0_1.csv", "diag_ess.csv", "diag_acceptance.csv", "diag_quantiles.csv", "diag_histogram.csv"] {
        assert!(diag.join(f).exists(), "{f}");
    }
}

#[test]
fn smc_backends_write_frame_files() {
    let dir = tempfile::tempdir().unwrap();
    let s = ok(&["smc", "--backend", "ekf"], dir.path());
    assert!(s["loglik"].as_f64().unwrap().is_finite());
    let head = std::fs::read_to_string(dir.path().join("ekf_trace.csv")).unwrap();
    assert!(head.starts_with("time,stream,pred_mean,pred_var,innovation,loglik_inc\n"));
    ok(&["smc", "--backend", "pf", "-J", "200"], dir.path());
    let head = std::fs::read_to_string(dir.path().join("pf_diag.csv")).unwrap();
    assert!(head.starts_with("time,weight_ess,loglik_inc\n"));
}

#[test]
fn worker_flag_and_environment() {
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    ok(&["smc", "--backend", "pf", "-J", "150", "--seed", "3", "-P", "1"], dirs[0].path());
    let o = Command::new(env!("CARGO_BIN_EXE_plugplay"))
        .args(["smc", "--backend", "pf", "-J", "150", "--seed", "3", "--out"])
        .arg(dirs[1].path())
        .env("PLUGPLAY_WORKERS", "4")
        .output()
        .unwrap();
    assert!(o.status.success());
    // the flag wins over a bad environment value
    let o = Command::new(env!("CARGO_BIN_EXE_plugplay"))
        .args(["smc", "--backend", "pf", "-J", "150", "--seed", "3", "-P", "2", "--out"])
        .arg(dirs[2].path())
        .env("PLUGPLAY_WORKERS", "0")
        .output()
        .unwrap();
    assert!(o.status.success());
    let first = read(dirs[0].path().join("pf_diag.csv"));
    assert_eq!(first, read(dirs[1].path().join("pf_diag.csv")));
    assert_eq!(first, read(dirs[2].path().join("pf_diag.csv")));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(plugplay(&["--help"], d).status.code(), Some(0));
    assert_eq!(plugplay(&["kmcmc", "--help"], d).status.code(), Some(0));
    assert_eq!(plugplay(&["frobnicate"], d).status.code(), Some(1));
    assert_eq!(plugplay(&["kmcmc", "-M", "ten"], d).status.code(), Some(1));
    assert_eq!(plugplay(&["diag", "--trace", "/no/such/trace.csv"], d).status.code(), Some(1));

    let bad = d.join("bad.json");
    std::fs::write(&bad, "[1000000000, 1.6, 7]").unwrap();
    let o = plugplay(&["smc", "--backend", "ekf", "--theta0", bad.to_str().unwrap()], d);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("1000000000"));
}

#[test]
fn json_model_route() {
    let dir = tempfile::tempdir().unwrap();
    let b = plugplay::model::config::bundled_dir();
    let arg = |n: &str| b.join(n).to_str().unwrap().to_string();
    let (p, c, l) = (arg("process.json"), arg("context.json"), arg("link.json"));
    let json = ok(&["--process", &p, "--context", &c, "--link", &l, "smc", "--backend", "ekf"], dir.path());
    let native = ok(&["smc", "--backend", "ekf"], dir.path());
    let (a, b) = (json["loglik"].as_f64().unwrap(), native["loglik"].as_f64().unwrap());
    assert!((a - b).abs() < 1e-4 * a.abs());
    assert_eq!(plugplay(&["--process", &p, "smc"], dir.path()).status.code(), Some(1));
}
