use std::path::Path;
use std::process::{Command, Output};

use dwdg::sparse::CsrMatrix;

fn dwdg(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dwdg"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn solve_writes_vtk_csv_profile_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dwdg(
        &["solve", "--example", "smooth", "--level", "4", "--sigma", "5", "--profile", "x2=1"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let vtk = read(&dir.path().join("solution.vtk"));
    let lines: Vec<&str> = vtk.lines().collect();
    assert_eq!(lines[0], "# vtk DataFile Version 3.0");
    assert_eq!(lines[2], "ASCII");
    assert_eq!(lines[3], "DATASET UNSTRUCTURED_GRID");
    // [1,3]x[0,2] at h = 1/4: 8x8 cells, 128 triangles, 384 duplicated points
    assert_eq!(lines[4], "POINTS 384 double");
    assert!(vtk.contains("CELLS 128 512"));
    assert!(vtk.contains("POINT_DATA 384"));

    let report: serde_json::Value = serde_json::from_str(&read(&dir.path().join("report.json"))).unwrap();
    assert_eq!(report["solve"]["unknowns"], 384);
    let l2 = report["errors"]["report"]["l2"].as_f64().unwrap();
    assert!(l2 > 0.0 && l2 < 1e-2, "{l2}");

    let profile = read(&dir.path().join("profile_x2_1.csv"));
    assert!(profile.starts_with("s,element,value\n"));
    assert_eq!(profile.lines().count(), 1 + 2 * 16);
}

#[test]
fn dumped_system_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dwdg(
        &["solve", "--example", "boundary-layer", "--level", "2", "--dump-system", "--dump-operator"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = CsrMatrix::from_matrix_market(&read(&dir.path().join("system.mtx"))).unwrap();
    assert_eq!((a.nrows(), a.ncols()), (24, 24));
    let rhs = read(&dir.path().join("rhs.txt"));
    assert_eq!(rhs.lines().count(), 24);
    let u: Vec<f64> = read(&dir.path().join("solution.csv"))
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    let b: Vec<f64> = rhs.lines().map(|l| l.parse().unwrap()).collect();
    let r = a.mul_vec(&u);
    let worst = r.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-10, "{worst}");
    for name in ["mass", "partial_x1_plus", "partial_x2_minus", "div_zeta_average"] {
        let m = CsrMatrix::from_matrix_market(&read(&dir.path().join(format!("{name}.mtx")))).unwrap();
        assert_eq!(m.nrows(), 24, "{name}");
    }
}

#[test]
fn convergence_csv_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["convergence", "--example", "interior-arctan", "--levels", "2,4", "--sigma", "0,5", "--mask", "0,0.625,1,1"];
    for d in [&a, &b] {
        let out = dwdg(&args, d.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let csv = read(&a.path().join("convergence.csv"));
    assert_eq!(csv, read(&b.path().join("convergence.csv")));
    assert!(csv.starts_with("example,eps,h,sigma,norm,error,rate\n"));
    // 2 levels x 2 penalties x 10 norms
    assert_eq!(csv.lines().count(), 1 + 40);
    assert!(read(&a.path().join("convergence.md")).contains("mask: [0, 1] x [0.625, 1]"));
    assert!(a.path().join("timing.txt").exists());
}

#[test]
fn config_file_problem_solves() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("p.json");
    std::fs::write(
        &cfg,
        r#"{"name":"plane","domain":[0,0,1,1],"eps":0.01,"zeta":["1","0.5"],"div_zeta":"0","gamma":"1",
            "u":"1 + x1 - 2*x2","grad_u":["1","-2"],"laplacian_u":"0"}"#,
    )
    .unwrap();
    let out = dwdg(&["solve", "--config", cfg.to_str().unwrap(), "--level", "4", "--sigma", "1"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&read(&dir.path().join("report.json"))).unwrap();
    assert_eq!(report["problem"], "plane");
    // affine solutions are reproduced by the full scheme
    assert!(report["errors"]["report"]["l2"].as_f64().unwrap() < 1e-9);
}

#[test]
fn failures_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let too_fine = dwdg(&["solve", "--example", "smooth", "--level", "128"], dir.path());
    assert!(!too_fine.status.success());
    assert!(String::from_utf8_lossy(&too_fine.stderr).contains("--max-level"));

    let missing = dwdg(&["solve", "--config", "/nonexistent/p.json"], dir.path());
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("/nonexistent/p.json"));

    let bad_mask = dwdg(&["convergence", "--example", "smooth", "--mask", "0,0,1"], dir.path());
    assert!(!bad_mask.status.success());
}

#[test]
fn quick_validation_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dwdg(&["validate", "--scale", "quick"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let lines = read(&dir.path().join("validate.jsonl"));
    for l in lines.lines() {
        let v: serde_json::Value = serde_json::from_str(l).unwrap();
        assert_eq!(v["passed"], true, "{l}");
    }
}
