// Copyright 2026 heqsim contributors
// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use heqsim::hydrogenic::{HydrogenicBasis, HydrogenicBasisSpec};
use serde_json::Value;

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn heqsim(args: &[&str], out: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_heqsim"));
    cmd.args(args).arg("--out").arg(out);
    cmd.output().expect("binary runs")
}

fn ok(args: &[&str], out: &Path) -> Output {
    let o = heqsim(args, out);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

/// Paths printed on `wrote` lines.
fn written(o: &Output) -> Vec<PathBuf> {
    String::from_utf8_lossy(&o.stdout)
        .lines()
        .filter_map(|l| l.strip_prefix("wrote "))
        .map(PathBuf::from)
        .collect()
}

fn json_output(o: &Output) -> Value {
    let path = written(o).into_iter().find(|p| p.extension().is_some_and(|e| e == "json")).unwrap();
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

#[test]
fn spectrum_endpoints_match_library() {
    let dir = tempfile::tempdir().unwrap();
    let o = ok(&["spectrum", "--config", repo("configs/spectrum.json").to_str().unwrap(), "--set", "spectrum.points=3"], dir.path());
    let csv = std::fs::read_to_string(&written(&o)[0]).unwrap();
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 3);
    let spec = HydrogenicBasisSpec::helium();
    let basis = std::sync::Arc::new(HydrogenicBasis::new(HydrogenicBasisSpec::new(spec.lambda, 30)).unwrap());
    for row in [&rows[0], &rows[2]] {
        let sol = basis.solve(row[0]).unwrap();
        assert_eq!(row[col("f12_GHz")].to_bits(), sol.transition_ghz(1, 2).to_bits());
        assert_eq!(row[col("f13_GHz")].to_bits(), sol.transition_ghz(1, 3).to_bits());
        assert_eq!(row[col("E1_K")].to_bits(), sol.energy_k(1).to_bits());
        assert_eq!(row[col("z22_cm")].to_bits(), sol.z_cm(2, 2).to_bits());
    }
    assert_eq!(rows[2][0], 50.0);
}

#[test]
fn demo_swap_reaches_full_transfer() {
    let dir = tempfile::tempdir().unwrap();
    let o = ok(&["demo-swap", "--config", repo("configs/demo_swap.json").to_str().unwrap()], dir.path());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("target sin α"), "{stdout}");
    let report = &json_output(&o)["result"]["report"];
    let fidelity = num(&report["fidelity"]);
    assert!(fidelity > 1.0 - 1e-4, "fidelity {fidelity}");
    let moved = report["moved_amplitude"].as_array().unwrap();
    assert!(num(&moved[0]).hypot(num(&moved[1])) > 1.0 - 1e-4);
}

#[test]
fn decoherence_t2_at_device_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = ok(&["decoherence", "--set", "device.d_um=0.5", "--set", "device.sites=[[0,0],[1,0]]", "--set", "device.E_perp=0",
        "--set", "device.B_T=1.5", "--set", "device.T_K=0.01"], dir.path());
    let t2 = num(&json_output(&o)["result"]["t2_s"]);
    assert!(t2 > 1e-4 / 3.0 && t2 < 3e-4, "T2 = {t2}");
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["readout", "--set", "device.d_um=1.5", "--set", "device.sites=[[0,0],[1,0]]", "--set", "device.E_perp=0",
        "--set", "device.B_T=1.5", "--set", "device.T_K=0.01", "--set", "voltages_V=[0,1e-4]", "--set", "evolution.excited=[0]",
        "--set", "readout.shots=3000", "--set", "readout.records=true", "--set", "seed=11"];
    let first = written(&ok(&args, a.path()));
    let second = written(&ok(&args, b.path()));
    assert_eq!(first.len(), 2);
    for (x, y) in first.iter().zip(&second) {
        assert_eq!(x.file_name(), y.file_name());
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{}", x.display());
    }
    let mut reseeded = args.to_vec();
    reseeded.extend(["--set", "seed=12"]);
    let third = written(&ok(&reseeded, c.path()));
    assert_ne!(first[1].file_name(), third[1].file_name());
    let shots = |p: &Path| serde_json::from_str::<Value>(&std::fs::read_to_string(p).unwrap()).unwrap()["result"]["shots"]["records"].clone();
    assert_ne!(shots(&first[1]), shots(&third[1]));
}

#[test]
fn outputs_embed_hash_version_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let o = ok(&["build", "--set", "voltages_V=[0,1e-4]", "--set", "voltages_V=[0,2e-4]"], dir.path());
    let path = &written(&o)[0];
    let v = json_output(&o);
    let hash = v["config_sha256"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    assert!(path.file_name().unwrap().to_str().unwrap().contains(&hash[..16]));
    assert_eq!(v["artifact_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["overrides"], serde_json::json!(["voltages_V=[0,1e-4]", "voltages_V=[0,2e-4]"]));
    // last override wins
    assert_eq!(num(&v["result"]["hamiltonian"]["voltages_v"][1]), 2e-4);

    let o = ok(&["spectrum", "--set", "spectrum.points=2", "--set", "spectrum.E_perp_V_per_cm=[0,1]"], dir.path());
    let csv = std::fs::read_to_string(&written(&o)[0]).unwrap();
    let first = csv.lines().next().unwrap();
    assert!(first.starts_with(&format!("# heqsim {}", env!("CARGO_PKG_VERSION"))), "{first}");
    assert!(first.contains("config_sha256=") && first.contains("overrides=spectrum.points=2;"), "{first}");
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"readout": {"wait_s": 1e-6, "colour": "red"}}"#).unwrap();
    let o = heqsim(&["readout", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("readout") && err.contains("colour"), "{err}");

    std::fs::write(&cfg, "{ not json").unwrap();
    assert_eq!(heqsim(&["build", "--config", cfg.to_str().unwrap()], dir.path()).status.code(), Some(2));
    assert_eq!(heqsim(&["evolve"], dir.path()).status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = heqsim(&["spectrum", "--set", "basis_size=20", "--set", "spectrum.E_perp_V_per_cm=[0,80]", "--set", "spectrum.points=2"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not converged"));
    assert!(written(&o).is_empty());
}

#[test]
fn shipped_configs_match_schema() {
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(repo("schema/experiment.schema.json")).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut seen = 0;
    for entry in std::fs::read_dir(repo("configs")).unwrap() {
        let path = entry.unwrap().path();
        let cfg: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let errors: Vec<String> = validator.iter_errors(&cfg).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{}: {errors:?}", path.display());
        // and the binary accepts it
        ok(&["decoherence", "--config", path.to_str().unwrap()], dir.path());
        seen += 1;
    }
    assert!(seen >= 4);
    assert!(!validator.is_valid(&serde_json::json!({"readout": {"colour": 1}})));
    assert!(!validator.is_valid(&serde_json::json!({"schedule": {"swap": {"alpha": 1.0}, "rabi": {"E_rf_V_per_cm": 1.0}}})));
}

#[test]
fn calibrate_refine_shortens_dwell_for_ramps() {
    let dir = tempfile::tempdir().unwrap();
    let o = ok(&["calibrate", "--refine", "--config", repo("configs/demo_swap.json").to_str().unwrap(),
        "--set", "schedule.swap.rise_s=2e-10", "--set", "schedule.swap.fall_s=2e-10"], dir.path());
    let cal = &json_output(&o)["result"]["calibration"];
    assert_eq!(cal["recipe"], "swap");
    let refined = &cal["refined"];
    assert!(num(&refined["dwell_s"]) < num(&refined["ideal_dwell_s"]));
    assert!(num(&refined["transfer"]) > 0.99);
}
