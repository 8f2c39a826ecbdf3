use std::path::Path;
use std::process::Command;

const SMALL: &str = r#"
seed = 7

[solver]
tol = 1e-12

[timedep]
grid = { dim = 1, nx = 7, nt = 8 }
sigma = "1"
kappa = "1"
f = ["1 + 0.5*x1", "sin(pi*x1)*exp(-t)"]
g = ["1 + 0.5*cos(pi*x1)", "0.5 + 0.25*x1"]
mesh = { space = 2, time = 2 }
perturbations = [
  { h = "t*(1 - x1) + 0.5*t*x1", g = "(1 + 0.5*cos(pi*x1))*((1 - x1) + 0.5*x1)*t^2 + 0.2*sin(pi*t)" },
  { h = "(t + 0.3*sin(pi*t))*x1", g = "(1 + 0.5*cos(pi*x1))*x1*t^2 - 0.2*sin(pi*t)" },
]

[stationary]
grid = { dim = 3, nx = 7 }
f1 = "1 + 0.4*cos(2*pi*x1)"
radii = [2.0]
"#;

fn mfg(args: &[&str], dir: &Path) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_mfg")).args(args).current_dir(dir).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), SMALL).unwrap();
    dir
}

#[test]
fn serial_forward_is_byte_identical() {
    let dir = setup();
    let p = dir.path();
    for out in ["a", "b"] {
        let (code, err) = mfg(&["forward", "--config", "run.toml", "--out", out, "--serial"], p);
        assert_eq!(code, 0, "{err}");
    }
    for f in ["v.mfgf", "m.mfgf", "v0.mfgf", "m0.mfgf"] {
        let a = std::fs::read(p.join("a/forward").join(f)).unwrap();
        let b = std::fs::read(p.join("b/forward").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn measure_then_reconstruct() {
    let dir = setup();
    let p = dir.path();
    let (code, err) = mfg(&["measure", "--config", "run.toml", "--out", "o"], p);
    assert_eq!(code, 0, "{err}");
    assert!(p.join("o/archive/manifest.json").exists());
    let manifest = std::fs::read_to_string(p.join("o/archive/manifest.json")).unwrap();
    assert!(!manifest.contains("sin(pi*x1)*exp(-t)"), "ground truth leaked into the archive");

    let (code, err) = mfg(&["reconstruct", "--config", "run.toml", "--out", "o", "--ground-truth", "o/ground_truth.json"], p);
    assert_eq!(code, 0, "{err}");
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(p.join("o/reconstruct/report.json")).unwrap()).unwrap();
    assert!(report["stationary"][0]["error"].as_f64().unwrap() < 0.1);
    assert!(report["g1_error"].as_f64().unwrap() < 0.2);
    assert!(p.join("o/reconstruct/f2.mfgf").exists());
}

#[test]
fn mismatched_configuration_is_refused() {
    let dir = setup();
    let p = dir.path();
    assert_eq!(mfg(&["measure", "--config", "run.toml", "--out", "o"], p).0, 0);
    let (code, err) = mfg(&["reconstruct", "--config", "run.toml", "--out", "o", "--seed", "8"], p);
    assert_eq!(code, 2);
    assert!(err.contains("hash"), "{err}");
}

#[test]
fn bad_configs_exit_with_config_code() {
    let dir = setup();
    let p = dir.path();
    std::fs::write(p.join("bad.toml"), SMALL.replace("seed = 7", "seed = 7\nbogus = 1")).unwrap();
    let (code, err) = mfg(&["forward", "--config", "bad.toml", "--out", "o"], p);
    assert_eq!(code, 2);
    assert!(err.contains("bogus"), "{err}");
    assert_eq!(mfg(&["forward", "--out", "o"], p).0, 2);
    assert_eq!(mfg(&["forward", "--config", "missing.toml"], p).0, 2);
}

#[test]
fn incompatible_perturbations_are_rejected() {
    let dir = setup();
    let p = dir.path();
    let bad = SMALL.replace("{ h = \"t*(1 - x1) + 0.5*t*x1\"", "{ h = \"1 + t\"");
    std::fs::write(p.join("bad.toml"), bad).unwrap();
    let (code, err) = mfg(&["linearize", "--config", "bad.toml", "--out", "o"], p);
    assert_eq!(code, 2);
    assert!(err.contains("perturbations[0]"), "{err}");
}
