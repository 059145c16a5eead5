use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mcdist::estimators::sat_estimate;
use mcdist::rng::{stream, StreamPurpose};
use mcdist::{expected_count, EnvironmentParams};

fn mcdist(args: &[&str]) -> Output {
    mcdist_with_threads(args, None)
}

fn mcdist_with_threads(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mcdist"));
    cmd.args(args);
    match threads {
        Some(n) => cmd.env("MCDIST_THREADS", n),
        None => cmd.env_remove("MCDIST_THREADS"),
    };
    cmd.output().expect("binary runs")
}

fn repo_config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL_EXPERIMENT: &str = "\
[environment]
n_emitted = 100000
r_rx_um = 0.5

[simulation]
seed = 5
mode = poisson
realizations = 40

[protocols]
sat_t_ms = 2.5
rtt_tau = 2
envd_window = 7
ml = true

[sweep]
distance_um = 2, 4
";

#[test]
fn crlb_table_has_golden_header_and_full_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = mcdist(&["crlb", "--config", &repo_config("system1_crlb.cfg"), "--out", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("crlb_curve.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "d_um,t_ms,crlb_um2");
    assert_eq!(lines.len(), 1 + 5 * 200);
    assert!(lines[1].starts_with("2,0.1,"));

    let again = dir.path().join("again");
    mcdist(&["crlb", "--config", &repo_config("system1_crlb.cfg"), "--out", path(&again)]);
    assert_eq!(text, fs::read_to_string(again.join("crlb_curve.csv")).unwrap());

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_digest"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["toolkit_version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn manifest_digest_is_stable_under_key_reordering() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.cfg", "[environment]\nd_um = 4\nk_per_s = 0\n[crlb]\nt_count = 3\n");
    let b = write(dir.path(), "b.cfg", "[crlb]\nt_count=3\n\n[environment]\nk_per_s = 0 # none\nd_um = 4\n");
    let digest = |cfg: &str, name: &str| {
        let out = dir.path().join(name);
        assert!(mcdist(&["crlb", "--config", cfg, "--out", path(&out)]).status.success());
        let m: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        m["config_digest"].as_str().unwrap().to_string()
    };
    assert_eq!(digest(&a, "ra"), digest(&b, "rb"));
}

#[test]
fn config_errors_exit_2_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let cases = [
        ("[crlb]\nd_um = 4\nt_ms =\n", ":3:"),
        ("[crlb]\nt_count = 0\n", ":1:"),
        ("[environment]\nd_um = 4\nspeed = 2\n", ":3:"),
        ("[environment]\nr_rx_um = abc\n", ":2:"),
    ];
    for (text, anchor) in cases {
        let cfg = write(dir.path(), "bad.cfg", text);
        let o = mcdist(&["crlb", "--config", &cfg, "--out", path(&out)]);
        assert_eq!(o.status.code(), Some(2), "{text}");
        assert!(stderr(&o).contains(anchor), "{text}: {}", stderr(&o));
    }
    let o = mcdist(&["crlb", "--config", "/nonexistent.cfg", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn experiment_outputs_are_golden_and_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "exp.cfg", SMALL_EXPERIMENT);
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let o = mcdist_with_threads(&["experiment", "--config", &cfg, "--out", path(&out)], Some(threads));
        assert!(o.status.success(), "{}", stderr(&o));
        (
            fs::read(out.join("mse_sweep.csv")).unwrap(),
            fs::read(out.join("crlb.csv")).unwrap(),
        )
    };
    let (mse, crlb) = run("one", "1");
    assert_eq!((mse.clone(), crlb.clone()), run("three", "3"));

    let mse = String::from_utf8(mse).unwrap();
    let lines: Vec<&str> = mse.lines().collect();
    assert_eq!(lines[0], "sweep_value,protocol,mse_um2,bias_um,var_um2,stderr_um2,n_corrections,n_cointoss");
    assert_eq!(lines.len(), 1 + 2 * 4);
    let protocols: Vec<&str> = lines[1..5].iter().map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(protocols, ["SAT(2.5ms)", "RTT(2)", "ENVD(7)", "ML"]);
    let crlb = String::from_utf8(crlb).unwrap();
    assert_eq!(crlb.lines().next().unwrap(), "sweep_value,crlb_m1_um2,crlb_full_um2");
    assert_eq!(crlb.lines().count(), 3);
}

#[test]
fn experiment_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "exp.cfg", SMALL_EXPERIMENT);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let base = ["experiment", "--config", &cfg, "--realizations", "10"];
    assert!(mcdist(&[&base[..], &["--out", path(&out_a)]].concat()).status.success());
    assert!(mcdist(&[&base[..], &["--out", path(&out_b), "--seed", "6"]].concat()).status.success());
    assert_ne!(
        fs::read(out_a.join("mse_sweep.csv")).unwrap(),
        fs::read(out_b.join("mse_sweep.csv")).unwrap()
    );
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_b.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 6);
}

#[test]
fn experiment_rejects_time_outside_window() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "exp.cfg", &SMALL_EXPERIMENT.replace("sat_t_ms = 2.5", "sat_t_ms = 25"));
    let o = mcdist(&["experiment", "--config", &cfg, "--out", path(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("outside the simulated window"));
}

#[test]
fn simulate_writes_a_series() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let o = mcdist(&["simulate", "--config", &repo_config("system1_distance.cfg"), "--out", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("series.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t_ms,count");
    assert_eq!(text.lines().count(), 201);
    assert!(out.join("manifest.json").exists());
}

fn estimate(series: &str, protocol: &str) -> Output {
    mcdist(&["estimate", "--series", series, "--protocol", protocol])
}

#[test]
fn estimate_sat_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let series = write(dir.path(), "one.csv", "t_ms,count\n2.5,11\n");
    let o = estimate(&series, "sat");
    assert!(o.status.success(), "{}", stderr(&o));
    let env = EnvironmentParams::system1(4e-6);
    let rec = sat_estimate(&env, 11.0, 2.5e-3, &mut stream(1, StreamPurpose::Estimator(0), 0)).unwrap();
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(
        stdout,
        format!("protocol,d_hat_um,corrections,samples_used\nSAT,{},none,1\n", rec.d_hat * 1e6)
    );
}

#[test]
fn estimate_ml_on_noiseless_series() {
    let dir = tempfile::tempdir().unwrap();
    let env = EnvironmentParams::system1(4e-6);
    let mut text = String::from("t_ms,count\n");
    for i in 1..=200 {
        let t = i as f64 * 1e-4;
        text += &format!("{},{}\n", t * 1e3, expected_count(&env, 4e-6, t).unwrap());
    }
    let series = write(dir.path(), "noiseless.csv", &text);
    let o = estimate(&series, "ml");
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let row: Vec<&str> = stdout.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "ML");
    let d: f64 = row[1].parse().unwrap();
    assert!((d - 4.0).abs() < 1e-6, "{d}");
    assert_eq!(row[3], "200");
}

#[test]
fn estimate_input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "good.csv", "t_ms,count\n2.5,11\n");
    assert_eq!(estimate(&good, "magic").status.code(), Some(2));
    let missing = write(dir.path(), "missing.csv", "time,count\n2.5,11\n");
    let o = estimate(&missing, "sat");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing column `t_ms`"));
    let negative = write(dir.path(), "neg.csv", "t_ms,count\n2.5,-3\n");
    assert_eq!(estimate(&negative, "sat").status.code(), Some(2));
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let o = mcdist_with_threads(
        &["crlb", "--config", &repo_config("system1_crlb.cfg"), "--out", "/tmp/unused"],
        Some("zero"),
    );
    assert_eq!(o.status.code(), Some(2));
}
