use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn phidiv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phidiv")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = phidiv(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn estimate_matches_the_exponential_mle() {
    let dir = tempfile::tempdir().unwrap();
    let xs: Vec<f64> = (1..=40).map(|i| 0.05 * i as f64 + 0.3 * ((i * 7 % 11) as f64)).collect();
    let data = dir.path().join("obs.csv");
    let body: String = xs.iter().map(|x| format!("{x}\n")).collect();
    fs::write(&data, format!("x\n{body}")).unwrap();
    let cfg = dir.path().join("est.toml");
    fs::write(
        &cfg,
        "data = \"obs.csv\"\nmodel = { name = \"exponential\" }\ndivergence = { family = \"power\", gamma = 0.0 }\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let stdout = ok(&["estimate", "--config", path(&cfg), "--out", path(&out)]);
    let line = stdout.lines().find(|l| l.starts_with("theta_hat = ")).unwrap();
    let value: f64 = line.trim_start_matches("theta_hat = [").trim_end_matches(']').parse().unwrap();
    let mle = xs.len() as f64 / xs.iter().sum::<f64>();
    assert!((value - mle).abs() < 1e-6, "{value} vs {mle}");
    let csv = fs::read_to_string(out.join("estimate.csv")).unwrap();
    assert!(csv.starts_with("coordinate,estimate,std_error,companion,divergence,converged\n"));
}

#[test]
fn runs_are_deterministic_and_replay_from_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    let cfg = dir.path().join("glr.toml");
    fs::write(&cfg, "sample_sizes = [100, 200]\nreps = 60\n").unwrap();
    ok(&["glr-ecdf", "--config", path(&cfg), "--seed", "9", "--out", path(&a)]);
    ok(&["glr-ecdf", "--config", path(&cfg), "--seed", "9", "--out", path(&b)]);
    ok(&["glr-ecdf", "--config", path(&a.join("manifest.toml")), "--out", path(&c)]);
    for f in ["glr_ecdf_n100.csv", "glr_ecdf_n200.csv", "glr_ecdf_summary.csv", "manifest.toml", "plot.gp"] {
        let first = fs::read(a.join(f)).unwrap();
        assert!(first == fs::read(b.join(f)).unwrap(), "{f} differs between identical runs");
        assert!(first == fs::read(c.join(f)).unwrap(), "{f} differs after manifest replay");
    }
    // Seeds 9 and 10 would share all but one replication.
    ok(&["glr-ecdf", "--config", path(&cfg), "--seed", "5000", "--out", path(&b)]);
    assert!(fs::read(a.join("glr_ecdf_n100.csv")).unwrap() != fs::read(b.join("glr_ecdf_n100.csv")).unwrap());
}

#[test]
fn glr_ecdf_defaults_put_half_the_mass_at_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("glr");
    ok(&["glr-ecdf", "--out", path(&out)]);
    let text = fs::read_to_string(out.join("glr_ecdf_n1000.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("statistic,ecdf,limit_cdf"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 1001);
    assert!(rows[1000].starts_with("KS,"));
    let zeros = rows[..1000].iter().filter(|r| r.starts_with("0.0,")).count() as f64 / 1000.0;
    assert!((zeros - 0.5).abs() <= 0.04, "mass at zero {zeros}");
    let plot = fs::read_to_string(out.join("plot.gp")).unwrap();
    for n in [200, 500, 1000] {
        assert!(plot.contains(&format!("plot \"glr_ecdf_n{n}.csv\"")));
    }
}

#[test]
fn power_curve_holds_its_level_at_the_null() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("pc.toml");
    fs::write(&cfg, "sample_sizes = [100]\ngrid = { start = 0.9, stop = 1.1, step = 0.1 }\n").unwrap();
    let out = dir.path().join("pc");
    ok(&["power-curve", "--config", path(&cfg), "--reps", "1000", "--out", path(&out)]);
    let text = fs::read_to_string(out.join("power_curve_n100.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    let null = rows.iter().find(|r| r[0] == "1.0").unwrap();
    let rate: f64 = null[1].parse().unwrap();
    assert!((rate - 0.05).abs() <= 0.02, "{rate}");
    assert_eq!(null[2], "NaN");
    let plot = fs::read_to_string(out.join("plot.gp")).unwrap();
    assert!(plot.contains("dashtype 1 title \"empirical\""));
    assert!(plot.contains("dashtype 2 title \"approximation\""));
}

#[test]
fn plot_script_lists_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = phidiv(&["plot-script", "--out", path(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing output files"));

    let run = dir.path().join("run");
    let cfg = dir.path().join("d.toml");
    fs::write(&cfg, "sample_sizes = [50]\nreps = 20\n").unwrap();
    ok(&["dualchi2-ecdf", "--config", path(&cfg), "--out", path(&run)]);
    fs::remove_file(run.join("dualchi2_ecdf_n50.csv")).unwrap();
    let out = phidiv(&["plot-script", "--out", path(&run)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("dualchi2_ecdf_n50.csv"));
}

#[test]
fn invalid_configs_fail_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    assert!(!phidiv(&["test-simple", "--level", "1.5", "--out", path(&out)]).status.success());
    assert!(!out.exists());
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "theta0 = [-1.0]\n").unwrap();
    assert!(!phidiv(&["test-simple", "--config", path(&cfg), "--out", path(&out)]).status.success());
    fs::write(&cfg, "no_such_key = 1\n").unwrap();
    assert!(!phidiv(&["estimate", "--config", path(&cfg), "--out", path(&out)]).status.success());

    let run = dir.path().join("plan");
    ok(&["power-plan", "--out", path(&run)]);
    let replay = phidiv(&["estimate", "--config", path(&run.join("manifest.toml")), "--out", path(&out)]);
    assert!(!replay.status.success());
}

#[test]
fn single_run_commands_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("test-simple", "test.csv"),
        ("test-composite", "test.csv"),
        ("power-plan", "plan.csv"),
        ("mixture-test", "test.csv"),
        ("confreg", "confreg.csv"),
    ];
    for (cmd, file) in cases {
        let out = dir.path().join(cmd);
        ok(&[cmd, "--out", path(&out)]);
        let text = fs::read_to_string(out.join(file)).unwrap();
        assert!(text.lines().count() >= 2, "{cmd}");
        assert!(out.join("manifest.toml").is_file());
    }
    let plan = fs::read_to_string(dir.path().join("power-plan/plan.csv")).unwrap();
    // KL_m(P_1, P_2) = log 2 − ½ and σ = ½ give n* = 28 at power 0.9.
    assert!(plan.lines().nth(1).unwrap().ends_with(",28"));
}
