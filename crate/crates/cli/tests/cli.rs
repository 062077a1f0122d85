use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fv3::config::{parse_config, GridSpec, Scenario};
use fv3::output::GridDump;

fn fv3(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fv3"));
    c.args(args);
    for (k, v) in envs {
        c.env(k, v);
    }
    c.output().expect("spawn fv3")
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

const SHORT_1D: &str = "[run]\nscenario = advection1d\nt_end = 0.1\n[grid]\nkind = perturbed\nn = 40\nc1 = 0.02\nc2 = 5\n[output]\nevery = 2\n";

#[test]
fn checked_in_configs_validate() {
    let mut seen = Vec::new();
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "cfg") {
            let out = fv3(&["validate-config", path.to_str().unwrap()], &[]);
            assert!(out.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
            let cfg = parse_config(&fs::read_to_string(&path).unwrap()).unwrap();
            seen.push((cfg.scenario, cfg.grid));
        }
    }
    for s in Scenario::ALL {
        assert!(seen.iter().any(|(k, _)| *k == s), "no config for {}", s.name());
    }
    assert!(seen.iter().any(|(_, g)| matches!(g, GridSpec::Amr { block: (36, 12), .. })));
}

#[test]
fn invalid_config_reports_line_and_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write_cfg(tmp.path(), "bad.cfg", "[run]\nscenario = vortex\n\nkernel = minmod\n");
    let out = fv3(&["validate-config", p.to_str().unwrap()], &[]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4"), "{err}");
    assert!(err.contains("h3lc"), "{err}");
    let out = fv3(&["run", p.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn one_dimensional_run_writes_csv_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write_cfg(tmp.path(), "a.cfg", SHORT_1D);
    let out_dir = tmp.path().join("out");
    let out = fv3(&["run", p.to_str().unwrap(), "--out", out_dir.to_str().unwrap()], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&out_dir);
    assert_eq!(m["status"], "ok");
    assert_eq!(m["config"]["kernel"], "h3lc");
    assert_eq!(m["resolved"]["cfl"], 0.95);
    assert_eq!(m["t_final"], 0.1);
    let steps = m["steps"].as_u64().unwrap() as usize;
    assert!(steps > 0);
    let snaps = m["diagnostics"]["snapshots"].as_array().unwrap();
    assert_eq!(snaps.len(), steps.div_ceil(2) + 1);
    let last = fs::read_to_string(out_dir.join(snaps.last().unwrap().as_str().unwrap())).unwrap();
    let lines: Vec<_> = last.lines().collect();
    assert_eq!(lines[0], "x,q0");
    assert_eq!(lines.len(), 41);
    let errors = fs::read_to_string(out_dir.join("errors.csv")).unwrap();
    assert!(errors.starts_with("N,L1,EOC1,Linf,EOCinf\n40,"));
    assert!(out_dir.join("errors.gp").exists());
}

fn numeric_outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = walk(dir)
        .into_iter()
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| (p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "[run]\nscenario = double-mach\nt_end = 0.01\n[grid]\nkind = amr\nblock = 12x4\nlevels = 1..2\ndelta0 = 50\nregrid_every = 2\n[output]\nevery = 3\n";
    let p = write_cfg(tmp.path(), "d.cfg", text);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(fv3(&["run", p.to_str().unwrap(), "--out", a.to_str().unwrap()], &[("FV3_THREADS", "1")]).status.success());
    assert!(fv3(&["run", p.to_str().unwrap(), "--out", b.to_str().unwrap()], &[("FV3_THREADS", "2")]).status.success());
    let (fa, fb) = (numeric_outputs(&a), numeric_outputs(&b));
    assert!(!fa.is_empty());
    assert_eq!(fa, fb);
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert_eq!(ma["diagnostics"], mb["diagnostics"]);
    assert!(ma["diagnostics"]["regrids"].as_u64().unwrap() > 0);
}

#[test]
fn adaptive_snapshots_tile_the_domain() {
    let tmp = tempfile::tempdir().unwrap();
    let text =
        "[run]\nscenario = double-mach\nt_end = 0.005\n[grid]\nkind = amr\nblock = 12x4\nlevels = 1..3\ndelta0 = 50\n";
    let p = write_cfg(tmp.path(), "d.cfg", text);
    let out_dir = tmp.path().join("o");
    assert!(fv3(&["run", p.to_str().unwrap(), "--out", out_dir.to_str().unwrap()], &[]).status.success());
    let snap = out_dir.join("snap_00000");
    let layout = fs::read_to_string(snap.join("forest.csv")).unwrap();
    let mut lines = layout.lines();
    assert_eq!(lines.next(), Some("level,bi,bj,x0,x1,y0,y1"));
    let mut area = 0.0;
    let mut blocks = 0;
    for row in lines {
        let f: Vec<&str> = row.split(',').collect();
        let v: Vec<f64> = f[3..].iter().map(|s| s.parse().unwrap()).collect();
        area += (v[1] - v[0]) * (v[3] - v[2]);
        let d =
            GridDump::decode(&fs::read(snap.join(format!("block_{}_{}_{}.bin", f[0], f[1], f[2]))).unwrap()).unwrap();
        assert_eq!((d.nx, d.ny, d.k), (12, 4, 4));
        assert_eq!(d.xb[0], v[0]);
        assert!((d.xb[12] - v[1]).abs() < 1e-14);
        assert!(d.values.chunks(4).all(|q| q[0] > 0.0));
        blocks += 1;
    }
    assert!((area - 3.0).abs() < 1e-12);
    let m = manifest(&out_dir);
    let hist: usize = m["diagnostics"]["levels"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap() as usize).sum();
    assert_eq!(hist, blocks);
}

#[test]
fn binary_snapshot_round_trips_the_state() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "[run]\nscenario = riemann2d\nt_end = 0.01\n[grid]\nn = 16\n";
    let p = write_cfg(tmp.path(), "r.cfg", text);
    let out_dir = tmp.path().join("o");
    assert!(fv3(&["run", p.to_str().unwrap(), "--out", out_dir.to_str().unwrap()], &[]).status.success());
    let d = GridDump::decode(&fs::read(out_dir.join("snap_00000.bin")).unwrap()).unwrap();
    assert_eq!((d.nx, d.ny, d.k), (16, 16, 4));
    assert_eq!(d.t, 0.01);
    assert_eq!(d.xb.first(), Some(&0.0));
    assert_eq!(d.yb.last(), Some(&1.0));
    let m = manifest(&out_dir);
    let total: f64 = d.values.chunks(4).map(|q| q[0] / 256.0).sum();
    let reported = m["diagnostics"]["final_total"][0].as_f64().unwrap();
    assert!((total - reported).abs() < 1e-13, "{total} vs {reported}");
    assert!(m["errors"].is_null());
    assert!(!out_dir.join("errors.csv").exists());
}

#[test]
fn solver_failure_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "[run]\nscenario = double-mach\nkernel = h3\ncfl = 1\nt_end = 0.05\n[grid]\nn = 24\n";
    let p = write_cfg(tmp.path(), "f.cfg", text);
    let out_dir = tmp.path().join("o");
    let out = fv3(&["run", p.to_str().unwrap(), "--out", out_dir.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));
    let m = manifest(&out_dir);
    assert_eq!(m["status"], "failed");
    let t = m["failure"]["time"].as_f64().unwrap();
    assert!(t > 0.0 && t < 0.05);
    assert_eq!(m["failure"]["cell"].as_array().unwrap().len(), 2);
    assert!(m["failure"]["message"].as_str().unwrap().contains("unphysical"));
}

#[test]
fn convergence_writes_a_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fs::read_to_string(configs_dir().join("table2_x.cfg")).unwrap();
    let p = write_cfg(tmp.path(), "t2.cfg", &cfg);
    let out_dir = tmp.path().join("o");
    let out = fv3(&["convergence", p.to_str().unwrap(), "--out", out_dir.to_str().unwrap()], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("errors.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let labels: Vec<&str> = rows.iter().map(|r| r[0]).collect();
    assert_eq!(labels, ["10x10", "20x20", "30x30", "50x50"]);
    assert!(rows[0][2].is_empty());
    let last: f64 = rows[3][2].parse().unwrap();
    assert!(last > 2.5, "{csv}");
    let dat = fs::read_to_string(out_dir.join("errors.dat")).unwrap();
    assert_eq!(dat.lines().count(), 5);
    let gp = fs::read_to_string(out_dir.join("errors.gp")).unwrap();
    assert!(gp.contains("'errors.dat'"));
}

#[test]
fn convergence_rejects_scenarios_without_exact_solution() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write_cfg(tmp.path(), "r.cfg", "[run]\nscenario = riemann2d\n[convergence]\nsizes = 8, 16\n");
    let out = fv3(&["convergence", p.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("exact"));
}

#[test]
fn thread_variable_is_checked() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write_cfg(tmp.path(), "a.cfg", SHORT_1D);
    let out = fv3(&["validate-config", p.to_str().unwrap()], &[("FV3_THREADS", "zero")]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("FV3_THREADS"));
}
