use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qubo-gcs"))
        .args(args)
        .current_dir(dir)
        .env("QUBO_GCS_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn value<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("no {key}= in output:\n{text}"))
}

#[test]
fn generate_then_solve_and_exact_agree() {
    let dir = tempfile::tempdir().unwrap();
    let g = run(
        dir.path(),
        &[
            "generate", "--dims", "2x2x3", "--seed", "5", "--out", "i.qubo",
        ],
    );
    assert!(g.status.success(), "{g:?}");
    let out = stdout(&g);
    assert_eq!(value(&out, "n"), "12");
    assert_eq!(value(&out, "config.threads"), "2");
    let text = std::fs::read_to_string(dir.path().join("i.qubo")).unwrap();
    assert!(text.starts_with("# tool=qubo-gcs version="));
    assert!(text.lines().next().unwrap().contains("config_digest="));

    let e = run(dir.path(), &["exact", "i.qubo"]);
    assert!(e.status.success());
    let e0: f64 = value(&stdout(&e), "e0").parse().unwrap();

    for method in ["gcs", "product", "sa"] {
        let s = run(
            dir.path(),
            &[
                "solve", "i.qubo", "--method", method, "--nt", "100", "--sweeps", "200", "--out",
                "r.json",
            ],
        );
        assert!(s.status.success(), "{method}: {s:?}");
        let out = stdout(&s);
        let energy: f64 = value(&out, "energy").parse().unwrap();
        assert!(energy >= e0 - 1e-9, "{method} beat the exact minimum");
        assert_eq!(value(&out, "config.method"), method);
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap())
                .unwrap();
        assert_eq!(json["method"], method);
        assert_eq!(json["spins"].as_array().unwrap().len(), 12);
        assert_eq!(json["config_digest"].as_str().unwrap().len(), 64);
    }
}

#[test]
fn solve_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    run(
        dir.path(),
        &["generate", "--l", "2", "--seed", "1", "--out", "i.qubo"],
    );
    let a = run(
        dir.path(),
        &["solve", "i.qubo", "--nt", "60", "--seed", "4"],
    );
    let b = run(
        dir.path(),
        &[
            "--threads",
            "1",
            "solve",
            "i.qubo",
            "--nt",
            "60",
            "--seed",
            "4",
        ],
    );
    assert_eq!(value(&stdout(&a), "energy"), value(&stdout(&b), "energy"));
    assert_eq!(value(&stdout(&a), "spins"), value(&stdout(&b), "spins"));
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = run(dir.path(), &["verify", "--n", "3", "--trials", "2"]);
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(value(&stdout(&ok), "status"), "pass");
    for fault in ["zz-shift", "m-gradient-scale", "y-gradient-sign"] {
        let bad = run(
            dir.path(),
            &[
                "verify",
                "--n",
                "3",
                "--trials",
                "2",
                "--inject-fault",
                fault,
            ],
        );
        assert_eq!(bad.status.code(), Some(1), "{fault}");
        assert_eq!(value(&stdout(&bad), "status"), "fail");
    }
    let big = run(dir.path(), &["verify", "--n", "40"]);
    assert_eq!(big.status.code(), Some(2));
}

#[test]
fn usage_and_input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.qubo"), "qubo 2 1 none 0\nw 0 5 1.0\n").unwrap();
    for args in [
        &["generate", "--l", "1"][..],
        &["solve", "missing.qubo"],
        &["solve", "bad.qubo"],
        &["solve"],
        &["frobnicate"],
        &["--threads", "0", "verify"],
        &["verify", "--inject-fault", "nonsense"],
    ] {
        let o = run(dir.path(), args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {o:?}");
    }
}

#[test]
fn bench_writes_tables_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("spec.txt"),
        "sizes = 2x2x2, 2x2x3\nmethods = product, sa\niterations = 40\ninstances = 2\nseed = 9\n",
    )
    .unwrap();
    let first = run(dir.path(), &["bench", "spec.txt", "--out", "o"]);
    assert!(first.status.success(), "{first:?}");
    assert_eq!(value(&stdout(&first), "computed"), "8");
    for f in ["records.csv", "summary.csv", "plot.csv", "timings.csv"] {
        let text = std::fs::read_to_string(dir.path().join("o").join(f)).unwrap();
        assert!(text.starts_with("# tool=qubo-gcs"), "{f}");
    }
    let records = std::fs::read(dir.path().join("o/records.csv")).unwrap();
    let again = run(dir.path(), &["bench", "spec.txt", "--out", "o"]);
    assert_eq!(value(&stdout(&again), "computed"), "0");
    assert_eq!(
        records,
        std::fs::read(dir.path().join("o/records.csv")).unwrap()
    );

    std::fs::write(
        dir.path().join("other.txt"),
        "sizes = 2\nmethods = sa\ninstances = 1\n",
    )
    .unwrap();
    let clash = run(dir.path(), &["bench", "other.txt", "--out", "o"]);
    assert_eq!(clash.status.code(), Some(2));
}

#[test]
fn generate_is_deterministic_and_solve_writes_default_result() {
    let dir = tempfile::tempdir().unwrap();
    run(
        dir.path(),
        &["generate", "--l", "3", "--seed", "7", "--out", "a.qubo"],
    );
    run(
        dir.path(),
        &["generate", "--l", "3", "--seed", "7", "--out", "b.qubo"],
    );
    let a = std::fs::read(dir.path().join("a.qubo")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.qubo")).unwrap());

    let s = run(
        dir.path(),
        &["solve", "a.qubo", "--method", "product", "--nt", "20"],
    );
    assert!(s.status.success());
    assert_eq!(value(&stdout(&s), "mode"), "product");
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a.qubo.product.json")).unwrap())
            .unwrap();
    assert_eq!(json["config"]["mode"], "product");
}
