//! End-to-end pipelines: data preparation, training, and the DNN vs LWS
//! comparisons.

use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use bnsurrogate_core::bif::parse_network;
use bnsurrogate_core::dataset::{DatasetSplit, EncodingLayout, Example};
use bnsurrogate_core::eval::EvalReport;
use bnsurrogate_core::nn::{train_with, EpochReport, Model};
use bnsurrogate_core::rng::RngSeed;
use bnsurrogate_core::sampler::lws_posteriors_seeded;
use bnsurrogate_core::{Error, Network, PosteriorSet};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::{checkpoint, dataset_io, report, timing};

pub fn load_network(path: &Path) -> Result<Network> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_network(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Loads the dataset in `dir` if it was produced by this recipe, otherwise
/// generates and writes it.
pub fn prepare_data(config: &ExperimentConfig, net: &Network, dir: &Path) -> Result<DatasetSplit> {
    let fp = config.data_fingerprint();
    if let Ok(manifest) = dataset_io::read_manifest(dir) {
        if manifest.config_fingerprint == fp {
            return Ok(dataset_io::read_split(dir, net)?.0);
        }
    }
    let split = dataset_io::generate_parallel(net, &config.generation())?;
    dataset_io::write_split(dir, net, &split, &fp)?;
    Ok(split)
}

/// Splits a training set into fitting and early-stopping parts; the last
/// `ceil(fraction * n)` examples (at least one) are held out.
pub fn holdout(train: &[Example], fraction: f64) -> Result<(&[Example], &[Example])> {
    let held = ((train.len() as f64 * fraction).ceil() as usize).max(1);
    ensure!(
        held < train.len(),
        "training set of {} examples is too small to hold out validation data",
        train.len()
    );
    Ok(train.split_at(train.len() - held))
}

/// Trains on the first `model.train_size` training examples (all by
/// default) with part of them held out for early stopping.
pub fn train_model(
    config: &ExperimentConfig,
    net: &Network,
    train: &[Example],
    on_epoch: impl FnMut(&EpochReport),
) -> Result<Model> {
    let size = config.model.train_size.unwrap_or(train.len());
    if size > train.len() {
        bail!(
            "requested {size} training examples but only {} are available",
            train.len()
        );
    }
    let (fit, val) = holdout(&train[..size], config.model.validation_fraction)?;
    let layout = EncodingLayout::for_network(net);
    let model_config = config.model_config(layout.total_dim());
    let mut rng = RngSeed(config.seed).derive_named(b"train").rng();
    Ok(train_with(&layout, &model_config, fit, val, &mut rng, on_epoch)?)
}

fn targets(layout: &EncodingLayout, examples: &[Example]) -> Result<Vec<PosteriorSet>> {
    Ok(examples
        .iter()
        .map(|e| layout.unflatten(&e.target))
        .collect::<Result<_, _>>()?)
}

pub fn evaluate_dnn(model: &Model, examples: &[Example], dataset: &str, thresholds: &[f64]) -> Result<EvalReport> {
    ensure!(!examples.is_empty(), "no examples to evaluate");
    let layout = model.layout();
    let compiled = model.compile();
    let (preds, per_call) = timing::time_per_call(examples, timing::DEFAULT_PASSES, |e| compiled.predict(&e.evidence));
    let preds = preds.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut r = EvalReport::score("dnn", dataset, &targets(layout, examples)?, &preds, thresholds)?;
    r.time_per_inference_seconds = per_call;
    Ok(r)
}

/// Seed of the sampler stream for one example.
pub fn lws_seed(seed: u64, example_id: usize) -> RngSeed {
    RngSeed(seed).derive_named(b"lws").derive(example_id as u64)
}

/// Likelihood weighting on every example. Queries whose samples all have
/// zero weight are counted as failures; their unobserved variables get an
/// all-zero estimate, which the KL floor then penalizes.
pub fn evaluate_lws(
    net: &Network,
    examples: &[Example],
    samples: usize,
    seed: u64,
    dataset: &str,
    thresholds: &[f64],
) -> Result<EvalReport> {
    ensure!(!examples.is_empty(), "no examples to evaluate");
    let layout = EncodingLayout::for_network(net);
    let (preds, per_call) = timing::time_per_call(examples, timing::DEFAULT_PASSES, |e| {
        lws_posteriors_seeded(net, &e.evidence, samples, lws_seed(seed, e.id))
    });
    let mut failures = 0;
    let preds = preds
        .into_iter()
        .zip(examples)
        .map(|(p, e)| match p {
            Ok(p) => Ok(p),
            Err(Error::ZeroWeightTotal { .. }) => {
                failures += 1;
                Ok(zero_estimate(net, e))
            }
            Err(err) => Err(err),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut r = EvalReport::score(
        format!("lws-{samples}"),
        dataset,
        &targets(&layout, examples)?,
        &preds,
        thresholds,
    )?;
    r.time_per_inference_seconds = per_call;
    r.failures = failures;
    Ok(r)
}

fn zero_estimate(net: &Network, e: &Example) -> PosteriorSet {
    PosteriorSet::new(
        (0..net.num_variables())
            .map(|i| {
                let k = net.cardinality(i);
                match e.evidence.get(i) {
                    Some(v) => PosteriorSet::degenerate(k, v),
                    None => vec![0.0; k],
                }
            })
            .collect(),
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubsetManifest {
    pub network: String,
    pub data_fingerprint: String,
    /// Ids of the test examples both methods were scored on, in order.
    pub ids: Vec<usize>,
}

pub struct BenchResult {
    /// DNN on the full test split.
    pub dnn_test: EvalReport,
    /// DNN and LWS on the shared subset.
    pub dnn_subset: EvalReport,
    pub lws_subset: EvalReport,
    pub subset: SubsetManifest,
    pub model: Model,
}

impl BenchResult {
    pub fn reports(&self) -> Vec<EvalReport> {
        vec![self.dnn_test.clone(), self.dnn_subset.clone(), self.lws_subset.clone()]
    }
}

/// The first `config.eval.subset` test examples.
pub fn subset<'a>(config: &ExperimentConfig, test: &'a [Example]) -> Result<&'a [Example]> {
    let k = config.eval.subset;
    if k == 0 || k > test.len() {
        bail!("subset size {k} must be between 1 and the test size {}", test.len());
    }
    Ok(&test[..k])
}

/// Trains a model (or reuses a compatible checkpoint in `out`) and scores
/// it against likelihood weighting on the same test subset.
pub fn bench(
    config: &ExperimentConfig,
    net: &Network,
    split: &DatasetSplit,
    out: Option<&Path>,
    on_epoch: impl FnMut(&EpochReport),
) -> Result<BenchResult> {
    let sub = subset(config, &split.test)?;
    let fp = config.model_fingerprint();
    let ckpt = out.map(|d| d.join("model.ckpt"));
    let cached = ckpt
        .as_deref()
        .filter(|p| p.exists())
        .and_then(|p| checkpoint::load(p).ok())
        .filter(|(m, h)| h.config_fingerprint == fp && m.layout().matches(net))
        .map(|(m, _)| m);
    let model = match cached {
        Some(m) => m,
        None => {
            let m = train_model(config, net, &split.train, on_epoch)?;
            if let Some(p) = &ckpt {
                checkpoint::save(p, &m, &fp)?;
            }
            m
        }
    };
    let th = &config.eval.thresholds;
    let name = &config.name;
    let mut dnn_test = evaluate_dnn(&model, &split.test, &format!("{name}/test"), th)?;
    let sub_name = format!("{name}/subset{}", sub.len());
    let mut dnn_subset = evaluate_dnn(&model, sub, &sub_name, th)?;
    let mut lws_subset = evaluate_lws(net, sub, config.eval.lws_samples, config.seed, &sub_name, th)?;
    for r in [&mut dnn_test, &mut dnn_subset, &mut lws_subset] {
        r.config_fingerprint = config.fingerprint();
    }
    let subset = SubsetManifest {
        network: net.name().to_string(),
        data_fingerprint: config.data_fingerprint(),
        ids: sub.iter().map(|e| e.id).collect(),
    };
    let result = BenchResult {
        dnn_test,
        dnn_subset,
        lws_subset,
        subset,
        model,
    };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        report::write_csv(&dir.join("bench.csv"), &result.reports())?;
        std::fs::write(dir.join("subset.json"), serde_json::to_vec_pretty(&result.subset)?)?;
    }
    Ok(result)
}

/// One model per training-set size, each trained on a prefix of the
/// training split and scored on the full test split.
pub fn sweep(
    config: &ExperimentConfig,
    net: &Network,
    split: &DatasetSplit,
    sizes: &[usize],
    mut on_epoch: impl FnMut(usize, &EpochReport),
) -> Result<Vec<(usize, EvalReport)>> {
    ensure!(!sizes.is_empty(), "no sweep sizes given");
    if let Some(&s) = sizes.iter().find(|&&s| s > split.train.len()) {
        bail!(
            "sweep size {s} exceeds the {} available training examples",
            split.train.len()
        );
    }
    let mut out = Vec::new();
    for &size in sizes {
        let mut c = config.clone();
        c.model.train_size = Some(size);
        let model = train_model(&c, net, &split.train, |r| on_epoch(size, r))?;
        let mut r = evaluate_dnn(
            &model,
            &split.test,
            &format!("{}/test", config.name),
            &config.eval.thresholds,
        )?;
        r.method = format!("dnn-{size}");
        r.config_fingerprint = c.fingerprint();
        out.push((size, r));
    }
    Ok(out)
}
