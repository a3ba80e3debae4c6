use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn srp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srp")).args(args).output().expect("srp runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

const SMALL: &str = "[lattice]\nside = 8\n\n[chain]\nalpha = 0.8\nseed = 11\nthermalization_sweeps = 50\nsweeps_between_samples = 5\n";

fn data_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().filter(|l| !l.starts_with('#')).map(str::to_string).collect()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let full = write_config(dir.path(), "full.toml", &format!("{SMALL}sweeps = 200\n"));
    let half = write_config(dir.path(), "half.toml", &format!("{SMALL}sweeps = 100\n"));
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));

    assert!(srp(&["simulate", "--config", arg(&full), "--out", arg(&a)]).status.success());
    assert!(srp(&["simulate", "--config", arg(&half), "--out", arg(&b)]).status.success());
    let checkpoint = b.join("cell_000/checkpoint.json");
    let resumed = srp(&["simulate", "--config", arg(&full), "--out", arg(&c), "--resume", arg(&checkpoint)]);
    assert!(resumed.status.success(), "{}", String::from_utf8_lossy(&resumed.stderr));

    for file in ["trace.csv", "samples.csv"] {
        let whole = data_lines(&a.join("cell_000").join(file));
        let first = data_lines(&b.join("cell_000").join(file));
        let second = data_lines(&c.join("cell_000").join(file));
        assert_eq!(first[0], second[0], "{file} headers");
        let joined: Vec<String> = first.iter().chain(&second[1..]).cloned().collect();
        assert_eq!(joined, whole, "{file}");
    }
    assert_eq!(data_lines(&a.join("cell_000/trace.csv")).len(), 201);
    assert_eq!(
        fs::read(a.join("cell_000/checkpoint.json")).unwrap(),
        fs::read(c.join("cell_000/checkpoint.json")).unwrap()
    );
}

#[test]
fn fixed_seed_gives_byte_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "c.toml",
        &format!("{SMALL}alphas = [0.3, 0.8, 1.5]\nsamples = 8\n\n[run]\nworkers = 3\n"),
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(srp(&["simulate", "--config", arg(&config), "--out", arg(&a)]).status.success());
    assert!(srp(&["simulate", "--config", arg(&config), "--out", arg(&b), "--workers", "1"]).status.success());
    let mut compared = 0;
    for cell in ["cell_000", "cell_001", "cell_002"] {
        for file in ["trace.csv", "samples.csv", "checkpoint.json"] {
            let (x, y) = (a.join(cell).join(file), b.join(cell).join(file));
            assert_eq!(fs::read(&x).unwrap(), fs::read(&y).unwrap(), "{}", x.display());
            compared += 1;
        }
    }
    assert_eq!(fs::read(a.join("simulate.csv")).unwrap(), fs::read(b.join("simulate.csv")).unwrap());
    assert_eq!(compared, 9);

    let other = dir.path().join("other");
    assert!(srp(&["simulate", "--config", arg(&config), "--out", arg(&other), "--seed", "12"]).status.success());
    assert_ne!(fs::read(a.join("cell_000/trace.csv")).unwrap(), fs::read(other.join("cell_000/trace.csv")).unwrap());
}

#[test]
fn csv_outputs_carry_hash_and_header() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "c.toml", &format!("{SMALL}samples = 3\n"));
    let out = dir.path().join("o");
    assert!(srp(&["simulate", "--config", arg(&config), "--out", arg(&out)]).status.success());
    let text = fs::read_to_string(out.join("cell_000/samples.csv")).unwrap();
    let mut lines = text.lines();
    let comment = lines.next().unwrap();
    assert!(comment.starts_with("# srp simulate config_hash="), "{comment}");
    assert!(lines.next().unwrap().starts_with("sweep,avg_jump_len"));
    assert!(!text.contains('\r'));
}

#[test]
fn config_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "bad.toml", "[chain]\nalpha = 0.5\nbogus = 3\n");
    let out = srp(&["simulate", "--config", arg(&config), "--out", arg(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("bad.toml:3"), "{stderr}");
}

#[test]
fn malformed_fit_input_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_config(dir.path(), "p.csv", "alpha,p\n0.3,0.1\n0.4,x\n");
    let out = srp(&["fit", "--model", "crossing", "--input", arg(&input), "--out", arg(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("p.csv:3"), "{stderr}");
}

#[test]
fn validate_exit_status_reflects_failures() {
    let clean = srp(&["validate"]);
    let stdout = String::from_utf8_lossy(&clean.stdout);
    assert!(clean.status.success(), "{stdout}");
    assert!(stdout.lines().any(|l| l.starts_with("PASS kernel")));
    assert!(!stdout.contains("FAIL"));

    let corrupt = srp(&["validate", "--corrupt-acceptance"]);
    assert_eq!(corrupt.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&corrupt.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("FAIL kernel 2x2 alpha=1")), "{stdout}");
}

#[test]
fn enumerate_refuses_more_than_nine_sites() {
    let dir = tempfile::tempdir().unwrap();
    let out = srp(&["enumerate", "--L", "4", "--out", arg(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("16"), "{stderr}");

    let ok = srp(&["enumerate", "--L", "3", "--alpha", "1", "--out", arg(&dir.path().join("p"))]);
    assert!(ok.status.success());
    assert!(dir.path().join("p/cycle_length.csv").exists());
}

#[test]
fn boxdim_calibration_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "c.toml", "[boxdim]\ncalibration = \"sierpinski\"\n");
    let out = dir.path().join("o");
    let run = srp(&["boxdim", "--config", arg(&config), "--out", arg(&out)]);
    assert!(run.status.success());
    let text = fs::read_to_string(out.join("calibration_summary.csv")).unwrap();
    let slope: f64 = text.lines().nth(2).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((slope - 1.585).abs() <= 0.02, "{slope}");
}
