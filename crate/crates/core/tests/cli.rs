use std::fs;
use std::path::Path;
use std::process::Command;

use floquet_scatter::cli::{run, validate, RunConfig};

const SMALL: &str = r#"
[potential]
v0 = 4.1
sigma_v = 10.0
omega = 0.057
phi = 0.3

[packet]
e0 = 3.67
sigma_k = 0.0005
sigma_theta = 0.05
l_max = 200

[solver]
kind = "rmatrix"
n_max = 2
n_splines = 40
a0 = 50.0
l_max = 45
grid_points = 600
"#;

fn config(extra: &str) -> RunConfig {
    RunConfig::from_toml(&format!("{SMALL}\n{extra}")).unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn outputs_identical_across_worker_counts() {
    let c = validate(config("")).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = run(&c, a.path(), 1).unwrap();
    let mb = run(&c, b.path(), 4).unwrap();
    assert_eq!(ma.outputs, mb.outputs);
    for name in ma.outputs.iter().filter(|n| n.ends_with(".csv")) {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
    let spectrum = read(a.path(), "spectrum.csv");
    assert!(spectrum.starts_with("E_f,direct,scattered,interference,total\n"));
    assert_eq!(read(a.path(), "channels.csv").lines().count(), 1 + 5);
    assert_eq!(ma.parameter_hash, mb.parameter_hash);
    assert!(!ma.partial);
}

#[test]
fn manifest_records_parameters_and_cache() {
    let c = validate(config("")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    run(&c, dir.path(), 2).unwrap();
    let m: serde_json::Value = serde_json::from_str(&read(dir.path(), "manifest.json")).unwrap();
    assert_eq!(m["schema_version"], 1);
    assert_eq!(m["config"]["potential"]["phi"], 0.3);
    assert_eq!(m["cache"]["diagonalizations"], 46);
    let p = &m["points"][0]["rmatrix"];
    assert!((p["window_half_width"].as_f64().unwrap() - 0.0285).abs() < 1e-12);
    assert!((p["integral"].as_f64().unwrap() - 1.0).abs() < 0.05);
    assert!(m["timings_s"]["total"].as_f64().unwrap() > 0.0);
}

#[test]
fn warm_cache_skips_diagonalizations() {
    let cache = tempfile::tempdir().unwrap();
    let extra = format!(
        "[scan]\naxis = \"v0\"\nvalues = [1.0, 2.0, 3.0]\n[output]\ncache_dir = \"{}\"\n",
        cache.path().display()
    );
    let c = validate(config(&extra)).unwrap();
    let cold_dir = tempfile::tempdir().unwrap();
    let warm_dir = tempfile::tempdir().unwrap();
    let cold = run(&c, cold_dir.path(), 2).unwrap();
    assert_eq!(cold.cache.diagonalizations, 3 * 46);
    assert_eq!(cold.cache.store_hits, 0);
    let warm = run(&c, warm_dir.path(), 2).unwrap();
    assert_eq!(warm.cache.diagonalizations, 0);
    for point in &warm.points {
        assert_eq!(point.rmatrix.as_ref().unwrap().cache.store_hits, 46);
    }
    assert_eq!(read(cold_dir.path(), "scan.csv"), read(warm_dir.path(), "scan.csv"));
    let header = read(warm_dir.path(), "scan.csv").lines().next().unwrap().to_string();
    assert_eq!(header, "v0,P(-2),P(-1),P(0),P(1),P(2),mean_k,total,status");
}

#[test]
fn eikonal_run_writes_all_channels() {
    let mut c = config("");
    c.solver.kind = floquet_scatter::cli::config::SolverKind::Eikonal;
    c.solver.n_max = 10;
    let dir = tempfile::tempdir().unwrap();
    let m = run(&validate(c).unwrap(), dir.path(), 2).unwrap();
    let text = read(dir.path(), "eikonal_channels.csv");
    assert_eq!(text.lines().count(), 1 + 21);
    let total: f64 = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-8);
    assert_eq!(m.cache.diagonalizations, 0);
}

#[test]
fn both_solvers_write_comparison() {
    let mut c = config("[eikonal]\nn_max = 6\n");
    c.solver.kind = floquet_scatter::cli::config::SolverKind::Both;
    let dir = tempfile::tempdir().unwrap();
    run(&validate(c).unwrap(), dir.path(), 2).unwrap();
    let text = read(dir.path(), "comparison.csv");
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "n,P_rmatrix(n),P_rmatrix(-n),P_rmatrix_mean,P_eikonal,rel_diff");
    assert_eq!(lines.count(), 5);
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_floquet-scatter"))
}

#[test]
fn binary_validates_presets_and_rejects_bad_configs() {
    let out = binary().args(["validate", "--preset", "fig5"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("T = 110.2"), "{text}");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, SMALL.replace("e0 = 3.67", "e0 = 0.1").replace("a0 = 50.0", "a0 = 20.0")).unwrap();
    let out = binary().arg("validate").arg(&bad).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("closed") && err.contains("5 sigma_v"), "{err}");
}

#[test]
fn binary_cache_commands() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, format!("{SMALL}\n[output]\ncache_dir = \"{}\"\n", cache.display())).unwrap();
    let out = binary().arg("run").arg(&cfg).arg("--out").arg(dir.path().join("out")).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ls = binary().args(["cache", "ls", "--dir"]).arg(&cache).output().unwrap();
    assert!(String::from_utf8_lossy(&ls.stdout).contains("46 entries"));
    let clear = binary().args(["cache", "clear", "--dir"]).arg(&cache).output().unwrap();
    assert!(String::from_utf8_lossy(&clear.stdout).contains("removed 46"));
}
