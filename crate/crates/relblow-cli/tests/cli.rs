use serde_json::Value;
use std::path::Path;
use std::process::Command;

fn relblow(args: &[&str], out: &Path) -> (i32, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_relblow"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs");
    (
        o.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&o.stderr).into_owned(),
    )
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn identity_suite_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let args = [
        "verify-identities",
        "--seed",
        "7",
        "--set",
        "verify.samples=20",
    ];
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(relblow(&args, &a).0, 0);
    assert_eq!(relblow(&args, &b).0, 0);
    for f in ["identities.json", "identities.txt"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let m = read_json(&a.join("manifest.json"));
    assert_eq!(m["config"]["seed"], 7);
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    // Every defaulted field is echoed.
    assert!(m["config"]["criteria"]["thresholds"]["grid"].is_u64());
}

#[test]
fn compression_preset_is_finite_time() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, err) = relblow(&["criteria", "--preset", "iso-compression"], tmp.path());
    assert_eq!(code, 0, "{err}");
    let r = read_json(&tmp.path().join("criteria.json"));
    assert_eq!(r["iso_verdict"], "finite-time");
    let t = r["predicted_window"]["t_riccati"].as_f64().unwrap();
    assert!((t - 10.0 / std::f64::consts::PI).abs() < 1e-3, "{t}");
}

#[test]
fn toml_config_with_flag_override_simulates() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(
        &cfg,
        r#"
mode = "simulate"
[grid]
x_min = 0.0
x_max = 1.0
cells = 512
boundary = "periodic"
[time]
t_end = 0.2
cfl = 0.4
output_interval = 0.1
max_steps = 100000
"#,
    )
    .unwrap();
    let out = tmp.path().join("out");
    let (code, err) = relblow(
        &["--config", cfg.to_str().unwrap(), "--set", "grid.cells=64"],
        &out,
    );
    assert_eq!(code, 0, "{err}");
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["config"]["grid"]["cells"], 64);
    let fields = std::fs::read_to_string(out.join("fields.csv")).unwrap();
    assert!(fields.starts_with("t,x,rho,u,S,w,z,dxw,dxz\n"));
    assert_eq!(fields.lines().count(), 1 + 3 * 64);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, err) = relblow(
        &["criteria", "--set", "grid.celz=10"],
        &tmp.path().join("bad"),
    );
    assert_eq!(code, 1);
    assert!(err.contains("grid.celz"), "{err}");
    // Range-wide gap above the sonic bound: outside the theory.
    let (code, _) = relblow(
        &[
            "criteria",
            "--set",
            r#"initial={"kind":"primitive","rho":{"family":"constant","value":0.1},"u":{"family":"sine","base":0.0,"amplitude":0.99,"wavelength":1.0},"S":{"family":"constant","value":0.0}}"#,
        ],
        &tmp.path().join("outside"),
    );
    assert_eq!(code, 3);
    let m = read_json(&tmp.path().join("outside").join("manifest.json"));
    assert_eq!(m["exit_code"], 3);
}

#[test]
fn sweep_writes_one_directory_per_value() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, err) = relblow(
        &[
            "sweep",
            "--preset",
            "iso-compression",
            "--set",
            "sweep.key=grid.cells",
            "--set",
            "sweep.values=[64, 128, 256]",
            "--set",
            "sweep.workers=2",
        ],
        tmp.path(),
    );
    assert_eq!(code, 0, "{err}");
    let index = read_json(&tmp.path().join("sweep.json"));
    assert_eq!(index.as_array().unwrap().len(), 3);
    for i in 0..3 {
        let m = read_json(&tmp.path().join(format!("run-{i:03}")).join("manifest.json"));
        assert_eq!(m["config"]["grid"]["cells"], 64 << i);
        assert_eq!(m["config"]["mode"], "criteria");
    }
}
