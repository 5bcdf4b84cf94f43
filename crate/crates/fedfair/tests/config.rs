use std::path::Path;

use fedfair::config::{self, parse_str, preset, set_parameter, DatasetSpec, PRESETS};
use fedfair::Error;
use fedfair_core::data::PartitionSpec;
use fedfair_core::selection::{client_weight, PolicyKind};

fn parse(text: &str, lenient: bool) -> fedfair::Result<config::Loaded> {
    parse_str(text, Path::new("test.toml"), Path::new("/cfg"), lenient)
}

const MINIMAL: &str = r#"
seeds = [1]
[dataset]
kind = "synthetic"
samples = 500
features = 4
classes = 3
separation = 2.0
"#;

#[test]
fn missing_eta_defaults_and_is_dumped() {
    let cfg = parse(MINIMAL, false).unwrap().config;
    assert_eq!(cfg.training.eta, 0.1);
    let dumped = config::dump(&cfg).unwrap();
    assert!(dumped.contains("eta = 0.1"), "{dumped}");
    let again = parse(&dumped, false).unwrap().config;
    assert_eq!(again, cfg);
}

#[test]
fn invalid_values_name_their_field() {
    let e = parse(&format!("{MINIMAL}\n[training]\nq = -1.0\n"), false).unwrap_err();
    assert!(e.to_string().contains("training.q"), "{e}");
    let e = parse(&format!("{MINIMAL}\n[training]\neta = \"fast\"\n"), false).unwrap_err();
    assert!(e.to_string().contains("training.eta"), "{e}");
    let e = parse(&MINIMAL.replace("seeds = [1]", "seeds = [1, 1]"), false).unwrap_err();
    assert!(e.to_string().contains("seeds"), "{e}");
}

#[test]
fn unknown_keys_are_strict_by_default() {
    let text = format!("{MINIMAL}\n[training]\netaa = 0.3\n");
    let e = parse(&text, false).unwrap_err();
    assert!(matches!(&e, Error::Invalid(keys) if keys.iter().any(|k| k.contains("training.etaa"))), "{e}");
    let loaded = parse(&text, true).unwrap();
    assert!(loaded.warnings.iter().any(|k| k.contains("training.etaa")));
    assert_eq!(loaded.config.training.eta, 0.1);
}

#[test]
fn mnist_preset_matches_published_setup() {
    let cfg = preset("mnist-iid").unwrap();
    assert_eq!(cfg.population.clients, 100);
    assert_eq!(cfg.training.clients_per_round, 10);
    assert_eq!(cfg.training.batch_size, 100);
    assert_eq!(cfg.training.max_rounds, 100);
    assert_eq!(cfg.training.q, 2.0);
    assert_eq!(cfg.partition, PartitionSpec::Iid);
    assert!(matches!(cfg.dataset, DatasetSpec::Idx { .. }));
    let fm = preset("fmnist-noniid").unwrap();
    assert_eq!(fm.training.clients_per_round, 6);
    assert!(matches!(fm.partition, PartitionSpec::Dirichlet { .. }));
}

#[test]
fn every_preset_validates_and_round_trips() {
    for (name, _) in PRESETS {
        let cfg = preset(name).unwrap();
        let problems = config::validate(&cfg);
        if let DatasetSpec::Idx { images, .. } = &cfg.dataset {
            // Only the data files may be missing.
            if !images.exists() {
                assert!(problems.iter().all(|p| p.starts_with("dataset.")), "{name}: {problems:?}");
            }
            continue;
        }
        assert!(problems.is_empty(), "{name}: {problems:?}");
        let dumped = config::dump(&cfg).unwrap();
        assert_eq!(parse(&dumped, false).unwrap().config, cfg, "{name}");
    }
    assert!(matches!(preset("nope"), Err(Error::UnknownPreset(_))));
}

#[test]
fn files_can_extend_a_preset() {
    let cfg = parse("preset = \"straggler\"\n[training]\nmax_rounds = 7\n", false).unwrap().config;
    let base = preset("straggler").unwrap();
    assert_eq!(cfg.training.max_rounds, 7);
    assert_eq!(cfg.training.decay, base.training.decay);
    assert_eq!(cfg.population, base.population);
}

#[test]
fn relative_idx_paths_resolve_against_the_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("d")).unwrap();
    std::fs::write(dir.path().join("d/img"), b"").unwrap();
    let labels = dir.path().join("lbl");
    std::fs::write(&labels, b"").unwrap();
    let text = format!("[dataset]\nkind = \"idx\"\nimages = \"d/img\"\nlabels = {:?}\n", labels);
    let cfg = parse_str(&text, Path::new("t.toml"), dir.path(), false).unwrap().config;
    assert_eq!(cfg.dataset, DatasetSpec::Idx { images: dir.path().join("d/img"), labels, limit: None });

    let e = parse_str("[dataset]\nkind = \"idx\"\nimages = \"no\"\nlabels = \"no\"\n", Path::new("t.toml"), dir.path(), false)
        .unwrap_err();
    assert!(e.to_string().contains("dataset.images"), "{e}");
}

#[test]
fn sweeping_q_to_zero_gives_uniform_weights() {
    let mut training = preset("synthetic-noniid").unwrap().training;
    set_parameter(&mut training, "q", 0.0).unwrap();
    assert_eq!(training.q, 0.0);
    let n = 300;
    for p in [0.0, 1e-4, 0.3, 1.0] {
        assert_eq!(client_weight(p, training.policy_params().q, n), 1.0 / n as f64);
    }
    assert!(matches!(set_parameter(&mut training, "bogus", 1.0), Err(Error::UnknownParameter(_))));
    assert!(set_parameter(&mut training, "tau", 2.5).is_err());
}

#[test]
fn policy_names_parse() {
    for kind in PolicyKind::ALL {
        assert_eq!(kind.name().parse::<PolicyKind>().unwrap(), kind);
    }
}
