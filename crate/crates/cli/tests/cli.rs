use std::path::Path;
use std::process::{Command, Output};

const SMALL: &[&str] = &[
    "data.train_samples=200",
    "data.test_samples=100",
    "stage1.epochs=2",
    "stage2.epochs=2",
    "eval.probe_steps=40",
    "eval.probe_decay_steps=20",
    "mi.every=0",
];

fn ctclab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctclab"))
        .args(args)
        .env_remove("CTCLAB_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn train(mode: &str, out: &Path, extra: &[&str]) -> Output {
    let out = out.to_str().unwrap();
    let mut args = vec!["train", "--mode", mode, "--out", out, "--quiet"];
    for s in SMALL.iter().chain(extra) {
        args.extend(["--set", s]);
    }
    ctclab(&args)
}

fn parse_nats(line: &str, prefix: &str) -> f64 {
    let rest = line.trim().strip_prefix(prefix).unwrap_or_else(|| panic!("unexpected output {line:?}"));
    rest.split_whitespace().next().unwrap().parse().unwrap()
}

#[test]
fn gen_writes_four_reproducible_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = ctclab(&["gen", "--preset", "small", "--seed", "5", "--out", d.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for name in ["source_train.csv", "source_test.csv", "target_train.csv", "target_test.csv"] {
        let x = std::fs::read(a.join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, std::fs::read(b.join(name)).unwrap(), "{name} differs");
    }
    assert!(a.join("manifest.json").exists());

    let bad = ctclab(&["gen", "--shared-dim", "0", "--out", dir.path().join("c").to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2), "{}", stderr(&bad));
}

#[test]
fn train_writes_trajectory_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = train("ctc", &out, &["stage1.alpha=0.5"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("epoch,stage,train_loss,test_loss,r_at_1,nmi"));
    assert_eq!(lines.count(), 5);

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["config"]["loss"]["alpha"], 0.5);

    let bad = train("ctc", &dir.path().join("bad"), &["stage1.bogus=1"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains("bogus"));
}

#[test]
fn mi_gaussian_and_oracle() {
    let common = ["--samples", "4000", "--steps", "1500", "--batch", "500", "--lr", "1e-3", "--hidden", "64"];
    let zero = ctclab(&[&["mi", "--gaussian", "0"][..], &common].concat());
    assert!(zero.status.success(), "{}", stderr(&zero));
    let v = parse_nats(&stdout(&zero), "MINE I =");
    assert!(v.abs() <= 0.05, "rho 0 gave {v}");

    let high = ctclab(&[&["mi", "--gaussian", "0.9"][..], &common].concat());
    let v = parse_nats(&stdout(&high), "MINE I =");
    let exact = 0.5 * (1.0 / (1.0f64 - 0.81)).ln();
    assert!((v - exact).abs() <= 0.1, "rho 0.9 gave {v}, exact {exact}");

    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("joint.csv");
    std::fs::write(&table, "y0,y1\n0.4,0.1\n0.1,0.4\n").unwrap();
    let o = ctclab(&["mi", "--oracle", "discrete", table.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let expected: f64 = [(0.4, 0.25), (0.1, 0.25), (0.1, 0.25), (0.4, 0.25)]
        .iter()
        .map(|&(p, q): &(f64, f64)| p * (p / q).ln())
        .sum();
    assert!((parse_nats(&stdout(&o), "exact I =") - expected).abs() < 1e-6);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("mi.json")).unwrap()).unwrap();
    assert!((report["value"].as_f64().unwrap() - expected).abs() < 1e-12);

    let bad = ctclab(&["mi", "--gaussian", "1.0"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn report_summarizes_and_compares() {
    let dir = tempfile::tempdir().unwrap();
    let (v, c) = (dir.path().join("vanilla"), dir.path().join("ctc"));
    assert!(train("vanilla", &v, &[]).status.success());
    assert!(train("ctc", &c, &[]).status.success());

    let one = ctclab(&["report", v.to_str().unwrap()]);
    assert!(one.status.success(), "{}", stderr(&one));
    assert!(stdout(&one).contains("target"));

    let two = ctclab(&["report", v.to_str().unwrap(), c.to_str().unwrap()]);
    assert!(two.status.success());
    assert!(stdout(&two).lines().count() > stdout(&one).lines().count());

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "epoch,stage,train_loss,test_loss,r_at_1,nmi,probe_target\n").unwrap();
    let o = ctclab(&["report", empty.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("no evaluated epochs"));

    let broken = dir.path().join("broken.csv");
    std::fs::write(&broken, "epoch,stage,train_loss,test_loss,r_at_1,nmi,probe_target\n0,1,oops,1,1,1,1\n").unwrap();
    let o = ctclab(&["report", broken.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("broken.csv"));
}
