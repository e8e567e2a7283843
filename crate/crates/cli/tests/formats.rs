use std::path::PathBuf;
use std::process::Command;

use bnsurrogate::config::ExperimentConfig;
use bnsurrogate::experiment::{self, load_network};
use bnsurrogate::{checkpoint, dataset_io};
use bnsurrogate_core::dataset::{generate_dataset, EncodingLayout, GenerationConfig};
use bnsurrogate_core::nn::{Model, ModelConfig};
use bnsurrogate_core::rng::RngSeed;
use bnsurrogate_core::Network;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn asia() -> Network {
    load_network(&root().join("networks/asia.bif")).unwrap()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bnsurrogate"))
}

fn small_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::load(&root().join("recipes/asia.toml")).unwrap();
    c.data.n = 200;
    c.model.hidden = vec![8];
    c.model.max_epochs = 5;
    c.model.learning_rate = 0.01;
    c.eval.subset = 20;
    c.eval.lws_samples = 50;
    c
}

#[test]
fn parallel_generation_matches_sequential() {
    let net = asia();
    let config = GenerationConfig::new(300, 17);
    let a = dataset_io::generate_parallel(&net, &config).unwrap();
    let b = generate_dataset(&net, &config).unwrap();
    assert_eq!(a.train, b.train);
    assert_eq!(a.test, b.test);
}

#[test]
fn dataset_files_round_trip_and_are_byte_stable() {
    let net = asia();
    let split = dataset_io::generate_parallel(&net, &GenerationConfig::new(120, 3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (d1, d2) = (dir.path().join("a"), dir.path().join("b"));
    let m = dataset_io::write_split(&d1, &net, &split, "fp").unwrap();
    dataset_io::write_split(&d2, &net, &split, "fp").unwrap();
    for f in [dataset_io::TRAIN_FILE, dataset_io::TEST_FILE, dataset_io::MANIFEST_FILE] {
        assert_eq!(std::fs::read(d1.join(f)).unwrap(), std::fs::read(d2.join(f)).unwrap());
    }
    assert_eq!((m.train_count, m.test_count), (60, 60));
    let (back, manifest) = dataset_io::read_split(&d1, &net).unwrap();
    assert_eq!(manifest, m);
    assert_eq!(back.train, split.train);
    assert_eq!(back.test, split.test);
}

#[test]
fn tampered_dataset_rejected() {
    let net = asia();
    let split = dataset_io::generate_parallel(&net, &GenerationConfig::new(20, 3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    dataset_io::write_split(dir.path(), &net, &split, "").unwrap();
    let path = dir.path().join(dataset_io::TEST_FILE);
    let text = std::fs::read_to_string(&path)
        .unwrap()
        .replacen("\"p_evidence\":", "\"p_evidence\":0.5e0,\"x\":", 1);
    std::fs::write(&path, text).unwrap();
    assert!(dataset_io::read_split(dir.path(), &net).is_err());
}

#[test]
fn dataset_for_other_network_rejected() {
    let net = asia();
    let split = dataset_io::generate_parallel(&net, &GenerationConfig::new(20, 3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    dataset_io::write_split(dir.path(), &net, &split, "").unwrap();
    let survey = load_network(&root().join("networks/survey.bif")).unwrap();
    assert!(dataset_io::read_split(dir.path(), &survey).is_err());
}

#[test]
fn checkpoint_round_trip() {
    let net = asia();
    let layout = EncodingLayout::for_network(&net);
    let config = ModelConfig::with_hidden(layout.total_dim(), &[5, 4]);
    let mut model = Model::init(&layout, &config, &mut RngSeed(8).rng()).unwrap();
    model.metadata.best_epoch = 3;
    model.metadata.best_validation_loss = 0.25;
    let bytes = checkpoint::to_bytes(&model, "abc");
    let (back, header) = checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back, model);
    assert_eq!(header.config_fingerprint, "abc");
    assert_eq!(checkpoint::to_bytes(&back, "abc"), bytes);
    assert!(checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    assert!(checkpoint::from_bytes(b"garbage").is_err());
}

#[test]
fn holdout_takes_the_tail() {
    let net = asia();
    let split = dataset_io::generate_parallel(&net, &GenerationConfig::new(200, 1)).unwrap();
    let (fit, val) = experiment::holdout(&split.train, 0.1).unwrap();
    assert_eq!((fit.len(), val.len()), (90, 10));
    assert_eq!(val[0], split.train[90]);
    assert!(experiment::holdout(&split.train[..1], 0.1).is_err());
}

#[test]
fn bench_scores_both_methods_on_one_subset() {
    let net = asia();
    let dir = tempfile::tempdir().unwrap();
    let config = small_config();
    let split = dataset_io::generate_parallel(&net, &config.generation()).unwrap();
    let r = experiment::bench(&config, &net, &split, Some(dir.path()), |_| {}).unwrap();
    assert_eq!(r.dnn_subset.n_examples, 20);
    assert_eq!(r.lws_subset.n_examples, 20);
    assert_eq!(r.dnn_subset.dataset, r.lws_subset.dataset);
    assert_eq!(r.subset.ids, split.test[..20].iter().map(|e| e.id).collect::<Vec<_>>());
    assert!(dir.path().join("bench.csv").exists());
    assert!(dir.path().join("model.ckpt").exists());
    // A second run reuses the checkpoint.
    let again = experiment::bench(&config, &net, &split, Some(dir.path()), |_| panic!("retrained")).unwrap();
    assert_eq!(again.model, r.model);

    let mut zero = config.clone();
    zero.eval.subset = 0;
    assert!(experiment::bench(&zero, &net, &split, None, |_| {}).is_err());
}

#[test]
fn sweep_rejects_oversized_and_matches_bench_at_full_size() {
    let net = asia();
    let config = small_config();
    let split = dataset_io::generate_parallel(&net, &config.generation()).unwrap();
    assert!(experiment::sweep(&config, &net, &split, &[101], |_, _| {}).is_err());
    let full = split.train.len();
    let swept = experiment::sweep(&config, &net, &split, &[full], |_, _| {}).unwrap();
    let bench = experiment::bench(&config, &net, &split, None, |_| {}).unwrap();
    assert_eq!(swept[0].1.avg_kl, bench.dnn_test.avg_kl);
    assert_eq!(swept[0].1.mta, bench.dnn_test.mta);
}

#[test]
fn cli_query_and_validate() {
    let net = root().join("networks/asia.bif");
    let out = bin().args(["validate", "--net"]).arg(&net).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("variables       8"), "{text}");

    let out = bin()
        .args(["query", "-e", "smoke=yes", "--net"])
        .arg(&net)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("smoke") && text.contains("(observed)"), "{text}");
}

#[test]
fn cli_errors_exit_nonzero() {
    let net = root().join("networks/asia.bif");
    let cases: Vec<Vec<std::ffi::OsString>> = vec![
        vec!["validate".into(), "--net".into(), "/no/such/file.bif".into()],
        vec![
            "query".into(),
            "-e".into(),
            "smoke=maybe".into(),
            "--net".into(),
            net.clone().into(),
        ],
        vec![
            "query".into(),
            "-e".into(),
            "smoke".into(),
            "--net".into(),
            net.clone().into(),
        ],
        vec![
            "query".into(),
            "-e".into(),
            "tub=yes".into(),
            "-e".into(),
            "either=no".into(),
            "--net".into(),
            net.clone().into(),
        ],
        vec![
            "gen".into(),
            "--p-obs".into(),
            "1.5".into(),
            "--net".into(),
            net.clone().into(),
        ],
        vec![
            "gen".into(),
            "--mode".into(),
            "sideways".into(),
            "--net".into(),
            net.into(),
        ],
    ];
    for args in cases {
        let out = bin().args(&args).output().unwrap();
        assert!(!out.status.success(), "{args:?} succeeded");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error"), "{args:?}");
    }
}

#[test]
fn cli_gen_train_predict_eval() {
    let dir = tempfile::tempdir().unwrap();
    let net = root().join("networks/asia.bif");
    let data = dir.path().join("data");
    let ckpt = dir.path().join("m.ckpt");
    let run = |args: &[&std::ffi::OsStr]| {
        let out = bin().args(args).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    };
    run(&[
        "gen".as_ref(),
        "--n".as_ref(),
        "100".as_ref(),
        "--net".as_ref(),
        net.as_ref(),
        "--out".as_ref(),
        data.as_ref(),
    ]);
    run(&[
        "train".as_ref(),
        "--net".as_ref(),
        net.as_ref(),
        "--data".as_ref(),
        data.as_ref(),
        "--hidden".as_ref(),
        "6,6".as_ref(),
        "--epochs".as_ref(),
        "3".as_ref(),
        "--no-bias".as_ref(),
        "--out".as_ref(),
        ckpt.as_ref(),
    ]);
    let (model, _) = checkpoint::load(&ckpt).unwrap();
    assert!(!model.use_bias());
    assert_eq!(model.layer_sizes(), [16, 6, 6, 16]);
    let text = run(&[
        "predict".as_ref(),
        "--net".as_ref(),
        net.as_ref(),
        "--model".as_ref(),
        ckpt.as_ref(),
        "-e".as_ref(),
        "asia=yes".as_ref(),
    ]);
    assert!(text.contains("asia"));
    let csv = dir.path().join("r.csv");
    let text = run(&[
        "eval".as_ref(),
        "--net".as_ref(),
        net.as_ref(),
        "--data".as_ref(),
        data.as_ref(),
        "--model".as_ref(),
        ckpt.as_ref(),
        "--out".as_ref(),
        csv.as_ref(),
    ]);
    assert!(text.contains("dnn"));
    let reports = bnsurrogate::report::from_csv(&std::fs::read_to_string(&csv).unwrap()).unwrap();
    assert_eq!(reports[0].n_examples, 50);

    let out = bin()
        .args(["eval", "--subset", "0", "--net"])
        .arg(&net)
        .arg("--data")
        .arg(&data)
        .output()
        .unwrap();
    assert!(!out.status.success());
}
