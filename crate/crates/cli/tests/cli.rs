use std::path::Path;
use std::process::{Command, Output};

use hkc_core::{build_hkc, Kind, WaveVector};
use tempfile::TempDir;

fn hkc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hkc")).args(args).output().expect("spawn hkc")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

/// Data rows of a CSV file, skipping the banner and header.
fn rows(text: &str) -> Vec<Vec<String>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    r.records().map(|x| x.unwrap().iter().map(str::to_string).collect()).collect()
}

fn stderr_value(o: &Output, key: &str) -> f64 {
    let text = stderr(o);
    let tok = text
        .split_whitespace()
        .find_map(|t| t.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing from {text}"));
    tok.parse().unwrap()
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

#[test]
fn generate_writes_specs() {
    let dir = TempDir::new().unwrap();
    let one = path(&dir, "hkc1.json");
    let o = hkc(&["generate", "-M", "1", "-o", &one]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("dimension 6"));
    assert!(stderr(&o).contains("energy=true"));
    let v: serde_json::Value = serde_json::from_str(&read(Path::new(&one))).unwrap();
    assert_eq!(v["layout"].as_array().unwrap().len(), 6);
    let o = hkc(&["generate", "-M", "21"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["layout"].as_array().unwrap().len(), 86);
    assert_eq!(code(&hkc(&["generate", "-M", "0"])), 2);
    assert_eq!(code(&hkc(&["generate"])), 2);
}

#[test]
fn simulate_defaults_and_errors() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "traj.csv");
    let o = hkc(&["simulate", "--t-final", "1", "-o", &out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("params R=1.89e2 S=0e0 P=10"));
    let text = read(Path::new(&out));
    assert!(text.starts_with("# hkc "));
    assert!(text.lines().nth(1).unwrap().starts_with("t,u_0_1,u_1_1,w_0_1,w_1_1,th_0_2,th_1_1"));
    assert!(rows(&text).len() > 10);
    assert_eq!(code(&hkc(&["simulate", "--t-final", "0", "-o", &out])), 2);
    assert_eq!(code(&hkc(&["simulate", "-R", "-1", "--t-final", "1", "-o", &out])), 2);
    assert_eq!(code(&hkc(&["simulate", "--model", &path(&dir, "missing.json")])), 1);
}

#[test]
fn inconsistent_model_needs_override_and_blows_up() {
    let dir = TempDir::new().unwrap();
    let spec = build_hkc(1).unwrap().without(Kind::Theta, WaveVector::new(0, 2)).unwrap();
    let model = path(&dir, "broken.json");
    std::fs::write(&model, spec.to_json().unwrap()).unwrap();
    let out = path(&dir, "traj.csv");
    let args = ["simulate", "--model", &model, "-R", "500", "--amplitude", "1", "--t-final", "100", "-o", &out];
    assert_eq!(code(&hkc(&args)), 4);
    let mut forced = args.to_vec();
    forced.push("--allow-inconsistent");
    let o = hkc(&forced);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("blow-up"));
    let partial = rows(&read(Path::new(&out)));
    assert!(partial.len() > 1);
    let t_last: f64 = partial.last().unwrap()[0].parse().unwrap();
    assert!(t_last < 100.0);
}

#[test]
fn nusselt_of_runs() {
    let dir = TempDir::new().unwrap();
    let traj = path(&dir, "zero.csv");
    std::fs::write(&traj, "t,u_0_1,u_1_1,w_0_1,w_1_1,th_0_2,th_1_1\n0,0,0,0,0,0,0\n1,0,0,0,0,0,0\n").unwrap();
    let o = hkc(&["nusselt", &traj, "--no-banner"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout.clone()).unwrap();
    assert!(text.starts_with("t,nu,nu_flux\n"));
    assert!(rows(&text).iter().all(|r| r[1].parse::<f64>().unwrap() == 1.0));
    assert_eq!(stderr_value(&o, "nu"), 1.0);

    // a settled run at R = 100 approaches the fixed point of the Lorenz-type
    // reduction, Nu = 1 + 2 (r - 1) / r with r = R / 6.75
    let r = 100.0 / 6.75;
    let want = 1.0 + 2.0 * (r - 1.0) / r;
    let run = path(&dir, "fp.csv");
    let o = hkc(&["simulate", "-R", "100", "--t-final", "400", "--stride", "20", "-o", &run]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = hkc(&["nusselt", &run]);
    let nu = stderr_value(&o, "nu");
    assert!((nu - want).abs() < 0.02 * want, "{nu} vs {want}");
    assert!(stderr(&o).contains("converged=true"));

    // decay from the uniform state below onset: unsettled early, settled once extended
    let run = path(&dir, "decay.csv");
    assert_eq!(code(&hkc(&["simulate", "-R", "5", "--t-final", "3", "-o", &run])), 0);
    let o = hkc(&["nusselt", &run]);
    assert!(stderr(&o).contains("converged=false"), "{}", stderr(&o));
    assert_eq!(code(&hkc(&["simulate", "-R", "5", "--t-final", "50", "-o", &run])), 0);
    let o = hkc(&["nusselt", &run]);
    assert!(stderr(&o).contains("converged=true"), "{}", stderr(&o));
    assert_eq!(code(&hkc(&["nusselt", &path(&dir, "missing.csv")])), 1);
}

#[test]
fn sweep_outputs_and_determinism() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "one.csv");
    let fast = ["--burn-time", "1", "--extension-time", "5", "--max-extensions", "1"];
    let mut args = vec!["sweep", "--R", "20", "--S", "0", "-o", &out];
    args.extend(fast);
    let o = hkc(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = read(Path::new(&out));
    assert!(text.lines().nth(1).unwrap().starts_with("R,S,M,seed,replicate,nu"));
    assert_eq!(rows(&text).len(), 1);

    let (a, b, hist) = (path(&dir, "a.csv"), path(&dir, "b.csv"), path(&dir, "h.csv"));
    let grid = ["--R", "0:50:100", "--S", "0,5", "--ensemble", "2", "--seed", "3", "--no-banner"];
    let mut serial = vec!["sweep", "--serial", "-o", &a, "--histogram", &hist];
    serial.extend(grid);
    serial.extend(fast);
    let mut parallel = vec!["sweep", "--threads", "2", "-o", &b];
    parallel.extend(grid);
    parallel.extend(fast);
    assert_eq!(code(&hkc(&serial)), 0);
    assert_eq!(code(&hkc(&parallel)), 0);
    let (ta, tb) = (read(Path::new(&a)), read(Path::new(&b)));
    assert_eq!(ta, tb);
    assert_eq!(rows(&ta).len(), 3 * 2 * 2);
    let h = read(Path::new(&hist));
    assert!(h.starts_with("bin_center,count\n"));
    let total: usize = rows(&h).iter().map(|r| r[1].parse::<usize>().unwrap()).sum();
    assert_eq!(total, 12);

    assert_eq!(code(&hkc(&["sweep", "--R", "5:1:1"])), 2);
    assert_eq!(code(&hkc(&["sweep", "--R", "5", "--ensemble", "0"])), 2);
}

#[test]
fn bracketed_grid_strings_parse() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "grid.csv");
    let o = hkc(&[
        "sweep",
        "--R",
        "[0:50:500, 600:100:1000, 1250:250:3000]",
        "--S",
        "0:50:300",
        "--burn-time",
        "0.01",
        "--extension-time",
        "0.01",
        "--max-extensions",
        "1",
        "--min-extensions",
        "0",
        "-o",
        &out,
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(rows(&read(Path::new(&out))).len(), 24 * 7);
}

#[test]
fn stability_around_onset() {
    let below = hkc(&["stability", "-R", "6.7499", "--max-shell", "10", "--no-banner"]);
    assert_eq!(code(&below), 0, "{}", stderr(&below));
    assert_eq!(stderr_value(&below, "d_unstable"), 0.0);
    let above = hkc(&["stability", "-R", "6.7501", "--max-shell", "10", "--no-banner"]);
    assert_eq!(stderr_value(&above, "d_unstable"), 1.0);
    let c = stderr_value(&above, "hausdorff_constant");
    assert!((c - 180.40).abs() < 0.01);
    let text = String::from_utf8(above.stdout).unwrap();
    assert!(text.starts_with("m1,m3,R1,R2,Rc,S_threshold,crossing_type,n_unstable\n"));
    let o = hkc(&["stability", "-R", "1e6", "--max-shell", "2"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn presets_and_overrides() {
    let o = hkc(&["stability", "--preset", "troposphere-equator", "-R", "100", "--max-shell", "20"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let e = stderr(&o);
    assert!(e.contains("WARNING"));
    assert!(e.contains("params R=1e2 S=0e0 P=1 "), "{e}");
    let o = hkc(&["stability", "--preset", "troposphere-pole", "-R", "100", "--max-shell", "20"]);
    assert!(stderr(&o).contains("params R=1e2 S=1e15 P=1 "), "{}", stderr(&o));
    let o = hkc(&["stability", "--preset", "troposphere-pole", "-R", "100", "-S", "2", "--max-shell", "20"]);
    assert!(stderr(&o).contains("S=2e0"));
    assert_eq!(code(&hkc(&["stability", "--preset", "mars"])), 2);
}

#[test]
fn field_reconstruction() {
    let dir = TempDir::new().unwrap();
    let traj = path(&dir, "zero.csv");
    std::fs::write(&traj, "# banner\nt,u_0_1,u_1_1,w_0_1,w_1_1,th_0_2,th_1_1\n0,0,0,0,0,0,0\n1,0,0,0,0,0,0\n").unwrap();
    let out = path(&dir, "field.csv");
    let o = hkc(&["field", &traj, "--time", "0.5", "--grid", "128x64", "-o", &out, "--no-banner"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = read(Path::new(&out));
    assert!(text.starts_with("x1,x3,u1,u2,u3,theta,T\n"));
    let r = rows(&text);
    assert_eq!(r.len(), 128 * 64);
    for row in &r {
        let v: Vec<f64> = row.iter().map(|s| s.parse().unwrap()).collect();
        assert!(v[2..6].iter().all(|x| *x == 0.0));
        assert!((v[6] - (1.0 - v[1] / std::f64::consts::PI)).abs() < 1e-14);
    }
    assert_eq!(code(&hkc(&["field", &traj, "--time", "2"])), 2);
    assert_eq!(code(&hkc(&["field", &traj, "--time", "0.5", "--grid", "12by4"])), 2);
}

#[test]
fn reruns_are_byte_identical_without_banner() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (path(&dir, "a.csv"), path(&dir, "b.csv"));
    for p in [&a, &b] {
        let o = hkc(&["simulate", "-M", "3", "--t-final", "2", "--seed", "9", "--no-banner", "-o", p]);
        assert_eq!(code(&o), 0);
    }
    assert_eq!(read(Path::new(&a)), read(Path::new(&b)));
}
