use std::path::Path;
use std::process::{Command, Output};

use bermudan_bench::{Algorithm, RunError};

const TINY: &str = "\
[experiment]
name = tiny
seed = 5

[model]
x0 = 100
rate = 0.05
vols = 0.25
steps = 4

[payoff]
kind = put
strikes = 100

[algo]
name = ekt, ls, tr
n = 300
n_l = 180
n_t = 60
n_v = 60
degrees = 0, 1
knot_distances = 50, 25
domain_bound = 300
poly_degree = 2

[eval]
n_eval = 2000
replicates = 2
";

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bermudan-bench"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_tiny(dir: &Path, out: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("tiny.ini");
    std::fs::write(&cfg, TINY).unwrap();
    let out = dir.join(out);
    let mut args = vec!["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    bench(&args)
}

#[test]
fn run_writes_results_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_tiny(dir.path(), "res", &["--no-timing"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.starts_with("experiment,algorithm,count,min,q1,median,q3,max,mean,se\n"));
    assert_eq!(stdout.lines().count(), 4);

    let res = dir.path().join("res");
    for file in [
        "tiny.resolved.ini",
        "tiny_ekt.csv",
        "tiny_ls.csv",
        "tiny_tr.csv",
        "tiny_ekt_windows.csv",
        "tiny_ekt_params.csv",
    ] {
        assert!(res.join(file).exists(), "{file}");
    }
    let ekt = std::fs::read_to_string(res.join("tiny_ekt.csv")).unwrap();
    let header = ekt.lines().next().unwrap();
    assert!(header.starts_with(
        "experiment,algorithm,replicate,price,stderr,n,n_eval,seed,elapsed_ms,w_t0,M_t0,alpha_t0"
    ));
    assert!(header.ends_with("alpha_t3"));
    assert_eq!(ekt.lines().count(), 3);
    for line in ekt.lines().skip(1) {
        assert_eq!(line.split(',').nth(8), Some("0"));
    }
    let meta = std::fs::read_to_string(res.join("tiny_ls.meta")).unwrap();
    assert!(meta.contains("# poly_degree = 2"));
    assert!(meta.contains("nearest-rank"));

    // the summary from the written files matches the one printed by run
    let csvs: Vec<String> = ["ekt", "ls", "tr"]
        .iter()
        .map(|a| {
            res.join(format!("tiny_{a}.csv"))
                .to_str()
                .unwrap()
                .to_string()
        })
        .collect();
    let mut args = vec!["summarize"];
    args.extend(csvs.iter().map(String::as_str));
    let s = bench(&args);
    assert!(s.status.success());
    assert_eq!(String::from_utf8(s.stdout).unwrap(), stdout);
}

#[test]
fn reruns_are_byte_identical_without_timing() {
    let dir = tempfile::tempdir().unwrap();
    assert!(
        run_tiny(dir.path(), "a", &["--no-timing", "--threads", "1"])
            .status
            .success()
    );
    assert!(
        run_tiny(dir.path(), "b", &["--no-timing", "--threads", "3"])
            .status
            .success()
    );
    for file in [
        "tiny_ekt.csv",
        "tiny_ls.csv",
        "tiny_tr.csv",
        "tiny_ekt_windows.csv",
    ] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
}

#[test]
fn seed_override_changes_prices() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_tiny(dir.path(), "a", &["--no-timing", "--replicates", "1"]);
    let b = run_tiny(
        dir.path(),
        "b",
        &["--no-timing", "--replicates", "1", "--seed", "6"],
    );
    assert!(a.status.success() && b.status.success());
    assert_ne!(a.stdout, b.stdout);
}

#[test]
fn bad_config_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.ini");
    std::fs::write(&cfg, TINY.replace("n_v = 60", "n_v = 61")).unwrap();
    let o = bench(&[
        "run",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(&cfg, TINY.replace("kind = put", "kind = swaption")).unwrap();
    let o = bench(&[
        "run",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_config_exits_with_1() {
    let o = bench(&["run", "/nonexistent/config.ini"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn numeric_failures_map_to_3() {
    let e = RunError::Numeric {
        replicate: 0,
        algorithm: Algorithm::Ekt,
        source: bermudan::Error::NonFinite {
            t: 1,
            w: 0,
            degree: 0,
            knot_distance: 1.0,
        },
    };
    assert_eq!(e.exit_code(), 3);
}

#[test]
fn oracle_put_prints_report() {
    let o = bench(&[
        "oracle", "put", "--x0", "100", "--strike", "90", "--rate", "0.05", "--vol", "0.25",
        "--dates", "12",
    ]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("steps,price,price_2n,difference,extrapolated")
    );
    let fields: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(fields[0], 1440.0);
    assert!(fields[3] < 1e-3);
    assert!((fields[4] - 3.9314).abs() < 2e-3);
}

#[test]
fn oracle_chain_prints_tables() {
    let fixture =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/two_state.chain");
    let o = bench(&["oracle", "chain", fixture.to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("t,state,reward,q,v\n"));
    assert!(text.lines().count() > 2);
}
