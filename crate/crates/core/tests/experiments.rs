//! Config handling, run directories and code CSVs.

use stylemapper::experiments::*;
use stylemapper::model::StyleCode;
use stylemapper::transforms::Family;
use stylemapper::Error;

#[test]
fn config_text_round_trips() {
    let cfg = ExperimentConfig::parse(
        "data.phantoms=10,3,6\ndata.seed=9\neval.n_targets=1,3\nexp.exclude_sobel=true\nlr=0.0005\narch.base_channels=4\n\
         excluded_families=log,powerlaw\n",
    )
    .unwrap();
    assert_eq!(cfg.data, DataSource::Phantoms { train: 10, validation: 3, test: 6, seed: 9 });
    assert_eq!(cfg.n_targets, vec![1, 3]);
    assert!(cfg.exp_exclude_sobel);
    assert_eq!(cfg.train.arch.base_channels, 4);
    assert_eq!(cfg.train.excluded_families, vec![Family::Log, Family::PowerLaw]);
    let again = ExperimentConfig::parse(&cfg.to_text()).unwrap();
    assert_eq!(again, cfg);
    assert_eq!(again.hash(), cfg.hash());
    assert_ne!(ExperimentConfig::default().hash(), cfg.hash());
}

#[test]
fn bad_configs_name_the_key() {
    for (text, key) in [
        ("learning_rate=1", "learning_rate"),
        ("data.phantoms=1,2", "data.phantoms"),
        ("eval.n_targets=0,1", "eval.n_targets"),
        ("exp.exclude_sobel=maybe", "exp.exclude_sobel"),
        ("data.manifest=/definitely/not/here.tsv", "data.manifest"),
        ("arch.base_channels=x", "arch.base_channels"),
    ] {
        match ExperimentConfig::parse(text) {
            Err(Error::Config { key: k, .. }) => assert_eq!(k, key),
            other => panic!("{text}: {other:?}"),
        }
    }
}

#[test]
fn experiment_names_and_hold_outs() {
    for e in Experiment::ALL {
        assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
    }
    assert!("oneshot-foo".parse::<Experiment>().is_err());
    let cfg = Experiment::OneshotGamma.configure(ExperimentConfig::default());
    assert_eq!(cfg.train.excluded_families, vec![Family::PowerLaw]);
    assert!(Experiment::Similarity.configure(ExperimentConfig::default()).train.excluded_families.is_empty());
}

#[test]
fn phantom_splits_are_disjoint_and_sized() {
    let ds = phantom_dataset::<f64>((5, 2, 4), 32, 3).unwrap();
    assert_eq!((ds.train.len(), ds.validation.len(), ds.test.len()), (5, 2, 4));
    let all: Vec<_> = ds.train.iter().chain(&ds.validation).chain(&ds.test).collect();
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            assert_ne!(all[i], all[j]);
        }
    }
    assert_eq!(phantom_dataset::<f64>((5, 2, 4), 32, 3).unwrap().test, ds.test);
}

#[test]
fn run_directory_holds_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::default();
    let dir = RunDir::create(tmp.path(), "similarity", &cfg).unwrap();
    let name = dir.path.file_name().unwrap().to_string_lossy().into_owned();
    assert_eq!(name, format!("similarity-{}-s{}", cfg.hash(), cfg.train.seed));
    let manifest = std::fs::read_to_string(dir.path.join("manifest.txt")).unwrap();
    let body = manifest.split_once("# config\n").unwrap().1;
    assert_eq!(ExperimentConfig::parse(body).unwrap(), cfg);
}

#[test]
fn code_csv_round_trips() {
    let codes: Vec<StyleCode<f64>> =
        (0..3).map(|i| StyleCode::new((0..8).map(|k| (i * 8 + k) as f64 * 0.37 - 4.0).collect()).unwrap()).collect();
    let labels: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let text = codes_to_csv(&labels, &codes);
    assert_eq!(codes_from_csv(&text).unwrap(), codes);
    assert!(codes_from_csv("label,s0\nx,1,2\n").is_err());
    assert!(codes_from_csv("x,1,2,3,4,5,6,7,8\n").is_err());
}
