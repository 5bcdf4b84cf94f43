use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const CONFIG: &str = r#"
policies = ["fedfair3", "random"]
seeds = [0, 1, 2]

[dataset]
kind = "synthetic"
samples = 600
features = 5
classes = 3
separation = 2.0

[partition]
kind = "dirichlet"
alpha = 0.5

[population]
clients = 12

[training]
clients_per_round = 4
max_rounds = 6
eta = 0.5
tau = 2
batch_size = 16
"#;

fn fedfair(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedfair")).args(args).output().unwrap()
}

fn setup() -> (tempfile::TempDir, String) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, CONFIG).unwrap();
    (dir, cfg.to_str().unwrap().to_string())
}

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn ok(out: &Output) {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn exit_codes_signal_failure() {
    let (dir, cfg) = setup();
    let out = dir.path().join("o");
    let o = out.to_str().unwrap();
    ok(&fedfair(&["run", "-c", &cfg, "--out", o, "--seeds", "0"]));
    assert_eq!(fedfair(&["presets"]).status.code(), Some(0));

    let bad = fedfair(&["run", "-c", "/no/such/file.toml", "--out", o]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).starts_with("error:"));

    let unknown = fedfair(&["compare", "-c", &cfg, "--out", o, "--policy", "fedfair3,greedy"]);
    assert_eq!(unknown.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("greedy"));

    let typo = dir.path().join("typo.toml");
    fs::write(&typo, format!("{CONFIG}\nbogus = 1\n")).unwrap();
    let t = typo.to_str().unwrap();
    assert_eq!(fedfair(&["run", "-c", t, "--out", o]).status.code(), Some(1));
    let lenient = fedfair(&["run", "-c", t, "--out", o, "--seeds", "0", "--lenient"]);
    ok(&lenient);
    assert!(String::from_utf8_lossy(&lenient.stderr).contains("warning: training.bogus"));

    assert_eq!(fedfair(&["sweep", "-c", &cfg, "--out", o, "--param", "nope", "--values", "1"]).status.code(), Some(1));
}

#[test]
fn compare_writes_shared_scenarios_and_reports() {
    let (dir, cfg) = setup();
    let out = dir.path().join("cmp");
    ok(&fedfair(&["compare", "-c", &cfg, "--out", out.to_str().unwrap()]));

    let seeds: Vec<_> = fs::read_dir(out.join("scenarios")).unwrap().collect();
    assert_eq!(seeds.len(), 3);
    for s in 0..3 {
        for p in ["fedfair3", "random"] {
            assert!(out.join(format!("runs/{p}_seed{s}.json")).exists());
            assert!(out.join(format!("runs/{p}_seed{s}.ckpt")).exists());
        }
    }
    // A single-policy run draws the same shards.
    let solo = dir.path().join("solo");
    ok(&fedfair(&["run", "-c", &cfg, "--policy", "random", "--out", solo.to_str().unwrap()]));
    for s in 0..3 {
        let rel = format!("scenarios/seed{s}/shards.json");
        assert_eq!(fs::read(out.join(&rel)).unwrap(), fs::read(solo.join(&rel)).unwrap());
    }

    let csv = fs::read_to_string(out.join("rounds.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "round,policy,seed,global_acc,acc_variance,cosine_unif,jain_participation,sim_clock_s"
    );
    assert_eq!(lines.count(), 2 * 3 * 6);

    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    for p in summary["policies"].as_array().unwrap() {
        assert_eq!(p["global_accuracy"]["n"], 3);
        assert!(p["global_accuracy"]["std"].is_number());
    }

    for svg in ["variance_by_round.svg", "accuracy_by_clock.svg"] {
        let text = fs::read_to_string(out.join(svg)).unwrap();
        let doc = roxmltree::Document::parse(&text).unwrap();
        assert_eq!(doc.root_element().tag_name().name(), "svg");
        assert!(doc.descendants().filter(|n| n.has_tag_name("polyline")).count() >= 2);
    }
    let resolved = fs::read_to_string(out.join("config.resolved.toml")).unwrap();
    assert!(resolved.contains("eta = 0.5"));
}

#[test]
fn reruns_are_byte_identical_at_any_parallelism() {
    let (dir, cfg) = setup();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&fedfair(&["compare", "-c", &cfg, "--out", a.to_str().unwrap()]));
    ok(&fedfair(&["compare", "-c", &cfg, "--out", b.to_str().unwrap(), "--parallel", "3"]));
    let (fa, fb) = (files(&a), files(&b));
    assert!(fa.len() > 10);
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (k, v) in &fa {
        assert!(v == &fb[k], "{} differs", k.display());
    }
}

#[test]
fn sweep_labels_cells_by_value() {
    let (dir, cfg) = setup();
    let out = dir.path().join("sw");
    ok(&fedfair(&[
        "sweep", "-c", &cfg, "--out", out.to_str().unwrap(), "--param", "q", "--values", "0,2", "--policy", "fedfair3",
        "--seeds", "4",
    ]));
    for q in [0, 2] {
        let r: serde_json::Value =
            serde_json::from_slice(&fs::read(out.join(format!("runs/fedfair3_q_{q}__seed4.json"))).unwrap()).unwrap();
        assert_eq!(r["label"], format!("fedfair3[q={q}]"));
        assert_eq!(r["config"]["q"], f64::from(q));
        assert_eq!(r["seed"], 4);
    }
}
