use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ptycho_core::eval;
use ptycho_core::io;
use ptycho_core::lattice::ScanLattice;
use ptycho_core::solvers::{initial_image, initial_probe, TRACE_HEADER};
use ptycho_core::transform::{ForwardModel, RealStack};
use serde_json::Value;

const SMALL: &str = "image_side = 32\nframe_side = 8\ndist = 4\nlattice = \"square\"\n";

fn ptycho(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ptycho"))
        .args(args)
        .current_dir(cwd)
        .env_remove("PTYCHO_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn ok(out: Output) -> Output {
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

/// Temp dir with `small.toml` and a simulated dataset in `ds/`.
fn small_dataset() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    ok(ptycho(&["simulate", "--config", "small.toml", "--out", "ds"], dir.path()));
    dir
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn files_in(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn simulate_is_byte_identical() {
    let dir = small_dataset();
    ok(ptycho(&["simulate", "--config", "small.toml", "--out", "again"], dir.path()));
    let a = files_in(&dir.path().join("ds"));
    let b = files_in(&dir.path().join("again"));
    assert_eq!(a.len(), 13);
    assert_eq!(a, b);
}

#[test]
fn noiseless_intensities_are_squared_magnitudes() {
    let dir = small_dataset();
    let ds = dir.path().join("ds");
    let (f, _) = io::read_real_stack(&ds.join("intensities")).unwrap();
    let (a, _) = io::read_real_stack(&ds.join("magnitudes")).unwrap();
    assert_eq!(f.as_slice(), a.map(|v| v * v).as_slice());
}

#[test]
fn noisy_dataset_records_its_noise() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    ok(ptycho(&["simulate", "--config", "small.toml", "--eta", "1", "--seed", "5", "--out", "ds"], dir.path()));
    let m = read_json(&dir.path().join("ds/manifest.json"));
    assert_eq!(m["config"]["eta"], 1.0);
    assert_eq!(m["config"]["seed"], 5);
    assert!(m["snr_intensity_db"].as_f64().unwrap().is_finite());
    let (f, _) = io::read_real_stack(&dir.path().join("ds/intensities")).unwrap();
    assert!(f.as_slice().iter().all(|v| v.fract() == 0.0 && *v >= 0.0));
}

#[test]
fn zero_iterations_write_the_initialization() {
    let dir = small_dataset();
    ok(ptycho(&["reconstruct", "--data", "ds", "--max-iters", "0", "--out", "r"], dir.path()));
    let r = dir.path().join("r");
    let lattice = io::read_lattice(&dir.path().join("ds/lattice.json")).unwrap();
    let model = ForwardModel::new(lattice);
    let (f, _) = io::read_real_stack(&dir.path().join("ds/intensities")).unwrap();
    assert_eq!(io::read_field(&r.join("u")).unwrap(), initial_image(&model));
    assert_eq!(io::read_field(&r.join("omega")).unwrap(), initial_probe(&model, &f).unwrap());
    assert_eq!(fs::read_to_string(r.join("trace.csv")).unwrap(), format!("{TRACE_HEADER}\n"));
    let m = read_json(&r.join("manifest.json"));
    assert_eq!(m["iterations"], 0);
}

#[test]
fn reconstruct_is_reproducible_from_its_manifest() {
    let dir = small_dataset();
    ok(ptycho(&["reconstruct", "--data", "ds", "--max-iters", "15", "--pgm", "--out", "a"], dir.path()));
    ok(ptycho(&["reconstruct", "--data", "ds", "--max-iters", "15", "--pgm", "--out", "b"], dir.path()));
    assert_eq!(files_in(&dir.path().join("a")), files_in(&dir.path().join("b")));
    ok(ptycho(&["reconstruct", "--config", "a/config.toml", "--out", "c"], dir.path()));
    let trace = |d: &str| fs::read(dir.path().join(d).join("trace.csv")).unwrap();
    assert_eq!(trace("a"), trace("c"));
    let csv = String::from_utf8(trace("a")).unwrap();
    assert_eq!(csv.lines().count(), 16);
    let m = read_json(&dir.path().join("a/manifest.json"));
    for key in ["u_abs", "u_phase", "omega_abs"] {
        assert!(m["pgm"][key]["max"].as_f64().unwrap() >= m["pgm"][key]["min"].as_f64().unwrap());
    }
    let pgm = fs::read(dir.path().join("a/u_abs.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n32 32\n255\n"));
}

#[test]
fn evaluate_truth_against_itself_is_capped() {
    let dir = small_dataset();
    let out = ok(ptycho(&["evaluate", "ds", "ds"], dir.path()));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["r_factor"], 0.0);
    assert_eq!(v["snr_u_db"], eval::SNR_CAP_DB);
    assert_eq!(v["snr_probe_db"], eval::SNR_CAP_DB);
    assert_eq!(v["alignment"]["zeta_re"], 1.0);
    assert_eq!(v["alignment"]["zeta_im"], 0.0);
    assert_eq!(v["alignment"]["shift"], serde_json::json!([0, 0]));
}

#[test]
fn evaluate_matches_library() {
    let dir = small_dataset();
    ok(ptycho(&["reconstruct", "--data", "ds", "--max-iters", "10", "--out", "r"], dir.path()));
    ok(ptycho(&["evaluate", "r", "ds", "--out", "report.json"], dir.path()));
    let v = read_json(&dir.path().join("report.json"));
    let ds = dir.path().join("ds");
    let model = ForwardModel::new(io::read_lattice(&ds.join("lattice.json")).unwrap());
    let (f, _) = io::read_real_stack(&ds.join("intensities")).unwrap();
    let u = io::read_field(&dir.path().join("r/u")).unwrap();
    let omega = io::read_field(&dir.path().join("r/omega")).unwrap();
    let (snr, al) = eval::snr_aligned(&u, &io::read_field(&ds.join("image_true")).unwrap()).unwrap();
    assert_eq!(v["r_factor"].as_f64().unwrap(), eval::r_factor(&model, &omega, &u, &f).unwrap());
    assert_eq!(v["snr_u_db"].as_f64().unwrap(), snr);
    assert_eq!(v["alignment"]["zeta_re"].as_f64().unwrap(), al.zeta.re);
    let m = read_json(&dir.path().join("r/manifest.json"));
    assert_eq!(m["snr_u_db"], v["snr_u_db"]);
}

#[test]
fn evaluate_rejects_mismatched_dimensions() {
    let dir = small_dataset();
    fs::write(dir.path().join("big.toml"), "image_side = 64\nframe_side = 8\nlattice = \"square\"\n").unwrap();
    ok(ptycho(&["simulate", "--config", "big.toml", "--out", "big"], dir.path()));
    assert_eq!(code(&ptycho(&["evaluate", "big", "ds"], dir.path())), 3);
}

#[test]
fn compare_single_entry_matches_reconstruct() {
    let dir = small_dataset();
    ok(ptycho(&["reconstruct", "--data", "ds", "--preset", "desk-dr", "--max-iters", "12", "--out", "r"], dir.path()));
    ok(ptycho(&["compare", "--data", "ds", "--max-iters", "12", "--out", "c", "desk-dr"], dir.path()));
    let trace = fs::read_to_string(dir.path().join("r/trace.csv")).unwrap();
    let merged = fs::read_to_string(dir.path().join("c/compare.csv")).unwrap();
    let header: Vec<String> = TRACE_HEADER
        .split(',')
        .enumerate()
        .map(|(i, c)| if i == 0 { c.to_string() } else { format!("desk-dr:{c}") })
        .collect();
    let expected: Vec<String> = std::iter::once(header.join(","))
        .chain(trace.lines().skip(1).map(str::to_string))
        .collect();
    assert_eq!(merged.lines().collect::<Vec<_>>(), expected);
    assert_eq!(
        fs::read(dir.path().join("c/desk-dr/trace.csv")).unwrap(),
        trace.as_bytes()
    );
}

#[test]
fn compare_keeps_entry_order_and_all_traces() {
    let dir = small_dataset();
    fs::write(dir.path().join("prox.toml"), "inner_iters = 3\n").unwrap();
    let args = ["compare", "--data", "ds", "--max-iters", "8", "--out", "c", "plain=paper-noiseless-pagm", "prox.toml", "desk-palm"];
    ok(ptycho(&args, dir.path()));
    let merged = fs::read_to_string(dir.path().join("c/compare.csv")).unwrap();
    let header = merged.lines().next().unwrap();
    let groups: Vec<&str> = header
        .split(',')
        .skip(1)
        .filter(|c| c.ends_with(":r_factor"))
        .collect();
    assert_eq!(groups, ["plain:r_factor", "prox:r_factor", "desk-palm:r_factor"]);
    assert_eq!(merged.lines().count(), 9);
    for line in merged.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        let per = TRACE_HEADER.split(',').count() - 1;
        for g in 0..3 {
            assert!(!cells[1 + g * per].is_empty(), "{line}");
        }
    }
    ok(ptycho(&args.map(|a| if a == "c" { "c2" } else { a }), dir.path()));
    assert_eq!(merged, fs::read_to_string(dir.path().join("c2/compare.csv")).unwrap());
}

#[test]
fn compare_records_partial_failure() {
    let dir = small_dataset();
    fs::write(dir.path().join("wild.toml"), "metric = \"igm\"\nprox_step = 1e6\n").unwrap();
    let out = ptycho(&["compare", "--data", "ds", "--max-iters", "6", "--out", "c", "desk-dr", "wild.toml"], dir.path());
    assert_eq!(code(&out), 4);
    let m = read_json(&dir.path().join("c/manifest.json"));
    assert_eq!(m["runs"][0]["exit_code"], 0);
    assert_eq!(m["runs"][1]["exit_code"], 4);
    let merged = fs::read_to_string(dir.path().join("c/compare.csv")).unwrap();
    assert_eq!(merged.lines().count(), 7);
}

#[test]
fn exit_codes() {
    let dir = small_dataset();
    let p = dir.path();
    fs::write(p.join("typo.toml"), "betta = 1.0\n").unwrap();
    assert_eq!(code(&ptycho(&["reconstruct", "--config", "typo.toml", "--out", "x"], p)), 2);
    assert_eq!(code(&ptycho(&["reconstruct", "--preset", "nope", "--out", "x"], p)), 2);
    assert_eq!(code(&ptycho(&["reconstruct", "--data", "ds", "--dist", "8", "--out", "x"], p)), 2);
    assert_eq!(code(&ptycho(&["reconstruct", "--data", "missing", "--out", "x"], p)), 3);
    fs::write(p.join("wild.toml"), "metric = \"igm\"\nprox_step = 1e6\n").unwrap();
    assert_eq!(
        code(&ptycho(&["reconstruct", "--data", "ds", "--config", "wild.toml", "--out", "x"], p)),
        4
    );
}

#[test]
fn uncovered_pixels_are_an_overlap_violation() {
    // One frame on a larger image: without preconditioning the image update
    // has a zero denominator outside the frame.
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    fs::create_dir(&ds).unwrap();
    let mut lattice = ScanLattice::square(16, 8, 8).unwrap();
    lattice.positions.truncate(1);
    io::write_lattice(&ds.join("lattice.json"), &lattice).unwrap();
    let f = RealStack::from_vec(1, 8, vec![1.0; 64]).unwrap();
    io::write_real_stack(&ds.join("intensities"), &f, io::Content::Intensity).unwrap();
    fs::write(dir.path().join("raw.toml"), "precond = \"none\"\n").unwrap();
    let out = ptycho(&["reconstruct", "--data", "ds", "--config", "raw.toml", "--out", "r"], dir.path());
    assert_eq!(code(&out), 5, "{}", String::from_utf8_lossy(&out.stderr));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("overlap violation"), "{err}");
}

#[test]
fn lattice_prints_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(ptycho(&["lattice", "--lattice", "hex", "--dist", "8"], dir.path()));
    let lattice = ScanLattice::from_json(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!(lattice.dist, 8);
    assert!(lattice.validate().is_ok());
}
