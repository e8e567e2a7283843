//! Acceptance checks. Prints one PASS/FAIL line per criterion and a summary.
//!
//! Criteria 7-9 form the extended suite (Alarm end to end, a few minutes on
//! one core). `BNSURROGATE_ACCEPTANCE=quick` skips them.
//! `BNSURROGATE_ACCEPTANCE=strict` exits non-zero if any criterion fails;
//! by default failures are reported but do not stop the rest of
//! `cargo test`.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{ensure, Result};
use bnsurrogate::config::ExperimentConfig;
use bnsurrogate::experiment::{self, load_network};
use bnsurrogate::{checkpoint, dataset_io};
use bnsurrogate_core::dataset::{
    sample_evidence, DatasetSplit, EncodingLayout, EvidenceMode, Example, GenerationConfig,
};
use bnsurrogate_core::eval::{kl_divergence, mta, DEFAULT_THRESHOLDS, KL_PROBABILITY_FLOOR};
use bnsurrogate_core::exact::exact_posteriors;
use bnsurrogate_core::nn::{loss, train, Model, ModelConfig};
use bnsurrogate_core::rng::RngSeed;
use bnsurrogate_core::sampler::lws_posteriors_seeded;
use bnsurrogate_core::{Error, Evidence, Network, PosteriorSet};
use rand::Rng;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn network(name: &str) -> Network {
    load_network(&root().join(format!("networks/{name}.bif"))).expect("shipped network parses")
}

fn recipe(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&root().join(format!("recipes/{name}.toml"))).expect("shipped recipe loads")
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome {
        pass,
        detail: detail.into(),
    })
}

fn within(elapsed: Duration, budget_secs: u64) -> bool {
    elapsed <= Duration::from_secs(budget_secs)
}

// ---------------------------------------------------------------- oracles

fn brute_joint(net: &Network, x: &[usize]) -> f64 {
    let mut p = 1.0;
    for i in 0..net.num_variables() {
        let row = net.parents(i).iter().fold(0, |r, &pa| r * net.cardinality(pa) + x[pa]);
        p *= net.cpt(i)[row * net.cardinality(i) + x[i]];
    }
    p
}

/// Marginals and P(O) by summing the whole joint table.
fn enumerate(net: &Network, ev: &Evidence) -> (Vec<Vec<f64>>, f64) {
    let cards = net.cardinalities();
    let mut marg: Vec<Vec<f64>> = cards.iter().map(|&c| vec![0.0; c]).collect();
    let mut total = 0.0;
    let mut x = vec![0usize; cards.len()];
    loop {
        if ev.consistent_with(&x) {
            let p = brute_joint(net, &x);
            total += p;
            for (i, &xi) in x.iter().enumerate() {
                marg[i][xi] += p;
            }
        }
        let mut k = cards.len();
        loop {
            if k == 0 {
                marg.iter_mut().flatten().for_each(|v| *v /= total);
                return (marg, total);
            }
            k -= 1;
            x[k] += 1;
            if x[k] < cards[k] {
                break;
            }
            x[k] = 0;
        }
    }
}

fn evidence_sets(net: &Network, count: usize, seed: u64) -> Vec<Evidence> {
    (0..count)
        .map(|i| {
            sample_evidence(
                net,
                0.3,
                EvidenceMode::Uniform,
                &mut RngSeed(seed).derive(i as u64).rng(),
            )
        })
        .collect()
}

// --------------------------------------------------------------- criteria

fn exact_matches_enumeration() -> Result<Outcome> {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for name in ["asia", "survey"] {
        let net = network(name);
        for ev in evidence_sets(&net, 100, 1) {
            let (marg, p) = enumerate(&net, &ev);
            match exact_posteriors(&net, &ev) {
                Ok((post, pe)) => {
                    ensure!(p > 0.0, "{name}: exact answered evidence the joint rules out");
                    worst = worst.max((pe - p).abs());
                    worst = worst.max(post.max_abs_diff(&PosteriorSet::new(marg)).unwrap());
                    compared += 1;
                }
                Err(Error::ImpossibleEvidence { .. }) => ensure!(p < 1e-12, "{name}: P(O) = {p} reported impossible"),
                Err(e) => return Err(e.into()),
            }
        }
    }
    let t = start.elapsed();
    outcome(
        worst <= 1e-9 && within(t, 10),
        format!(
            "{compared} evidence sets, max error {worst:.2e}, {:.2}s",
            t.as_secs_f64()
        ),
    )
}

fn random_gradient_setup(seed: u64) -> (Model, Vec<Example>, f64) {
    let mut rng = RngSeed(seed).derive_named(b"gradcheck").rng();
    let cards: Vec<usize> = (0..rng.random_range(1..5)).map(|_| rng.random_range(2..5)).collect();
    let layout = EncodingLayout::new("random", cards);
    let hidden: Vec<usize> = (0..rng.random_range(1..3)).map(|_| rng.random_range(2..7)).collect();
    let mut config = ModelConfig::with_hidden(layout.total_dim(), &hidden);
    config.use_bias = seed.is_multiple_of(2);
    let mut model = Model::init(&layout, &config, &mut rng).unwrap();
    for p in model.params_mut() {
        *p += rng.random_range(-0.3..0.3);
    }
    let batch = (0..rng.random_range(1..6))
        .map(|id| {
            let mut ev = Evidence::new();
            for (v, &c) in layout.cardinalities().iter().enumerate() {
                if rng.random::<f64>() < 0.4 {
                    ev.observe(v, rng.random_range(0..c));
                }
            }
            let mut target = Vec::new();
            for &c in layout.cardinalities() {
                let raw: Vec<f64> = (0..c).map(|_| rng.random::<f64>() + 0.01).collect();
                let s: f64 = raw.iter().sum();
                target.extend(raw.iter().map(|r| r / s));
            }
            Example {
                id,
                input: layout.encode_evidence(&ev),
                evidence: ev,
                target,
                evidence_probability: 1.0,
            }
        })
        .collect();
    (model, batch, rng.random_range(0.0..0.05))
}

fn gradient_check() -> Result<Outcome> {
    let start = Instant::now();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let (mut model, batch, l2) = random_gradient_setup(seed);
        let refs: Vec<&Example> = batch.iter().collect();
        let analytic = loss(&model, l2, &refs)?.gradient;
        for (k, &g) in analytic.iter().enumerate() {
            let orig = model.params()[k];
            model.params_mut()[k] = orig + h;
            let up = loss(&model, l2, &refs)?.loss;
            model.params_mut()[k] = orig - h;
            let down = loss(&model, l2, &refs)?.loss;
            model.params_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max((numeric - g).abs() / numeric.abs().max(g.abs()).max(1e-3));
        }
    }
    let t = start.elapsed();
    outcome(
        worst <= 1e-4 && within(t, 30),
        format!("20 models, max relative error {worst:.2e}, {:.2}s", t.as_secs_f64()),
    )
}

fn lws_converges() -> Result<Outcome> {
    let start = Instant::now();
    let net = network("asia");
    let mut sets = Vec::new();
    let mut i = 0;
    while sets.len() < 50 {
        let ev = sample_evidence(&net, 0.3, EvidenceMode::Uniform, &mut RngSeed(3).derive(i).rng());
        i += 1;
        if let Ok((post, _)) = exact_posteriors(&net, &ev) {
            sets.push((ev, post));
        }
    }
    let mut errors = Vec::new();
    for samples in [1_000, 4_000, 16_000, 64_000] {
        let mut total = 0.0;
        for (k, (ev, exact)) in sets.iter().enumerate() {
            let est = lws_posteriors_seeded(&net, ev, samples, RngSeed(samples as u64).derive(k as u64))?;
            let (sum, n) = exact
                .iter()
                .zip(est.iter())
                .flat_map(|(a, b)| a.iter().zip(b))
                .fold((0.0, 0), |(s, n), (a, b)| (s + (a - b).abs(), n + 1));
            total += sum / n as f64;
        }
        errors.push(total / sets.len() as f64);
    }
    let decreasing = errors.windows(2).all(|w| w[1] <= 1.1 * w[0]);
    let t = start.elapsed();
    let shown: Vec<String> = errors.iter().map(|e| format!("{e:.2e}")).collect();
    outcome(
        decreasing && within(t, 300),
        format!(
            "mean abs error at 1k/4k/16k/64k: {}, {:.1}s",
            shown.join(" "),
            t.as_secs_f64()
        ),
    )
}

fn alarm_parameter_count() -> Result<Outcome> {
    let net = network("alarm");
    let config = recipe("alarm").model_config(net.evidence_dim());
    let weights = config.weight_count();
    outcome(
        weights == 50_750,
        format!("layers {:?}, {weights} weights", config.layer_sizes),
    )
}

/// Generates the recipe's data and trains a model on it.
fn end_to_end(name: &str) -> Result<(Network, ExperimentConfig, DatasetSplit, Model, Duration)> {
    let config = recipe(name);
    let net = load_network(&config.network)?;
    let start = Instant::now();
    let split = dataset_io::generate_parallel(&net, &config.generation())?;
    let model = experiment::train_model(&config, &net, &split.train, |_| {})?;
    Ok((net, config, split, model, start.elapsed()))
}

fn small_end_to_end(name: &str, max_kl: f64, min_mta: f64) -> Result<Outcome> {
    let (_, config, split, model, elapsed) = end_to_end(name)?;
    let r = experiment::evaluate_dnn(&model, &split.test, name, &config.eval.thresholds)?;
    let acc = r.mta.at(0.1).unwrap_or(0.0);
    outcome(
        r.avg_kl <= max_kl && acc >= min_mta && within(elapsed, 15 * 60),
        format!(
            "avg KL {:.4} (<= {max_kl}), MTA@0.1 {acc:.4} (>= {min_mta}), {} epochs, {:.0}s",
            r.avg_kl,
            model.metadata.epochs_run,
            elapsed.as_secs_f64()
        ),
    )
}

struct AlarmRun {
    bench: experiment::BenchResult,
    sweep: Vec<(usize, bnsurrogate_core::eval::EvalReport)>,
    build_time: Duration,
}

fn alarm_run() -> Result<AlarmRun> {
    let config = recipe("alarm");
    let net = load_network(&config.network)?;
    let start = Instant::now();
    let split = dataset_io::generate_parallel(&net, &config.generation())?;
    let bench = experiment::bench(&config, &net, &split, None, |_| {})?;
    let build_time = start.elapsed();
    let sweep = experiment::sweep(&config, &net, &split, &[100, 500], |_, _| {})?;
    Ok(AlarmRun {
        bench,
        sweep,
        build_time,
    })
}

fn alarm_accuracy(run: &AlarmRun) -> Result<Outcome> {
    let b = &run.bench;
    let acc = b.dnn_test.mta.at(0.1).unwrap_or(0.0);
    let (dk, lk) = (b.dnn_subset.avg_kl, b.lws_subset.avg_kl);
    let (da, la) = (
        b.dnn_subset.mta.at(0.1).unwrap_or(0.0),
        b.lws_subset.mta.at(0.1).unwrap_or(0.0),
    );
    let pass = b.dnn_test.avg_kl <= 0.15 && acc >= 0.95 && dk < lk && da > la && within(run.build_time, 2 * 3600);
    outcome(
        pass,
        format!(
            "test avg KL {:.4} (<= 0.15), MTA@0.1 {acc:.4} (>= 0.95); subset of {}: DNN KL {dk:.4} / MTA {da:.4} vs LWS KL {lk:.4} / MTA {la:.4}; {:.0}s",
            b.dnn_test.avg_kl,
            b.subset.ids.len(),
            run.build_time.as_secs_f64()
        ),
    )
}

fn alarm_speed(run: &AlarmRun) -> Result<Outcome> {
    let dnn = run.bench.dnn_subset.time_per_inference_seconds;
    let lws = run.bench.lws_subset.time_per_inference_seconds;
    outcome(
        dnn * 100.0 <= lws,
        format!(
            "DNN {dnn:.3e}s vs LWS {lws:.3e}s per query, ratio {:.0}x (>= 100x)",
            lws / dnn
        ),
    )
}

fn alarm_sweep(run: &AlarmRun) -> Result<Outcome> {
    let at = |size: usize| {
        run.sweep
            .iter()
            .find(|(s, _)| *s == size)
            .and_then(|(_, r)| r.mta.at(0.1))
            .unwrap_or(0.0)
    };
    let (m100, m500) = (at(100), at(500));
    let m5000 = run.bench.dnn_test.mta.at(0.1).unwrap_or(0.0);
    outcome(
        (m500 - m5000).abs() <= 0.02 && m100 < m500,
        format!("MTA@0.1 at 100/500/5000 examples: {m100:.4} / {m500:.4} / {m5000:.4}"),
    )
}

fn properties() -> Result<Outcome> {
    let start = Instant::now();
    let mut checked = 0;
    for name in ["asia", "survey", "alarm", "insurance"] {
        let net = network(name);
        let layout = EncodingLayout::for_network(&net);
        let config = ModelConfig::with_hidden(layout.total_dim(), &[16]);
        let model = Model::init(&layout, &config, &mut RngSeed(5).rng())?;
        for ev in evidence_sets(&net, 20, 9) {
            ensure!(
                layout.decode_evidence(&layout.encode_evidence(&ev))? == ev,
                "{name}: encode/decode"
            );
            let Ok((exact, _)) = exact_posteriors(&net, &ev) else {
                continue;
            };
            let lws = lws_posteriors_seeded(&net, &ev, 200, RngSeed(1)).ok();
            let dnn = model.predict(&ev)?;
            for p in [Some(&exact), lws.as_ref(), Some(&dnn)].into_iter().flatten() {
                ensure!(
                    p.max_normalization_error() <= 1e-6,
                    "{name}: posterior does not sum to 1"
                );
            }
            ensure!(kl_divergence(&exact, &dnn)? >= 0.0, "{name}: negative KL");
            // Entries below the floor contribute at most floor/e each.
            let bound = exact.len() as f64 * KL_PROBABILITY_FLOOR;
            ensure!(kl_divergence(&exact, &exact)?.abs() <= bound, "{name}: KL(p, p) != 0");
            let curve = mta(std::slice::from_ref(&exact), &[dnn], &DEFAULT_THRESHOLDS)?;
            ensure!(curve.is_monotone(), "{name}: MTA not monotone");
            checked += 1;
        }
    }

    let net = network("asia");
    let gen = GenerationConfig::new(200, 11);
    let dir = tempfile::tempdir()?;
    let mut data_bytes = Vec::new();
    let mut ckpt_bytes = Vec::new();
    for run in 0..2 {
        let split = dataset_io::generate_parallel(&net, &gen)?;
        let d = dir.path().join(format!("data{run}"));
        dataset_io::write_split(&d, &net, &split, "")?;
        let files: Vec<Vec<u8>> = [dataset_io::TRAIN_FILE, dataset_io::TEST_FILE, dataset_io::MANIFEST_FILE]
            .iter()
            .map(|f| std::fs::read(d.join(f)))
            .collect::<Result<_, _>>()?;
        data_bytes.push(files);
        let layout = EncodingLayout::for_network(&net);
        let mut config = ModelConfig::with_hidden(layout.total_dim(), &[8]);
        config.max_epochs = 5;
        config.learning_rate = 0.01;
        let (fit, val) = experiment::holdout(&split.train, 0.1)?;
        let model = train(&layout, &config, fit, val, &mut RngSeed(2).rng())?;
        ckpt_bytes.push(checkpoint::to_bytes(&model, ""));
    }
    ensure!(
        data_bytes[0] == data_bytes[1],
        "dataset files differ between identical runs"
    );
    ensure!(
        ckpt_bytes[0] == ckpt_bytes[1],
        "checkpoints differ between identical runs"
    );
    let t = start.elapsed();
    outcome(
        within(t, 60),
        format!(
            "{checked} evidence sets over 4 networks, dataset and checkpoint bytes reproducible, {:.1}s",
            t.as_secs_f64()
        ),
    )
}

// ------------------------------------------------------------------ runner

fn report(id: u32, title: &str, result: Result<Outcome>) -> bool {
    let (pass, detail) = match result {
        Ok(o) => (o.pass, o.detail),
        Err(e) => (false, format!("error: {e:#}")),
    };
    println!("{} {id:>2}. {title}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn main() -> ExitCode {
    let mode = std::env::var("BNSURROGATE_ACCEPTANCE").unwrap_or_default();
    let quick = mode == "quick";
    let mut results = Vec::new();
    let mut skipped = 0;
    results.push(report(
        1,
        "exact inference equals enumeration (Asia, Survey)",
        exact_matches_enumeration(),
    ));
    results.push(report(2, "loss gradient equals central differences", gradient_check()));
    results.push(report(3, "LWS error shrinks with more samples (Asia)", lws_converges()));
    results.push(report(4, "Alarm model has 50750 weights", alarm_parameter_count()));
    results.push(report(5, "Survey end to end", small_end_to_end("survey", 0.05, 0.97)));
    results.push(report(6, "Asia end to end", small_end_to_end("asia", 0.15, 0.90)));
    if quick {
        for (id, title) in [
            (7, "Alarm end to end"),
            (8, "Alarm speed ratio"),
            (9, "Alarm training-size sweep"),
        ] {
            println!("SKIP {id:>2}. {title} [extended]: BNSURROGATE_ACCEPTANCE=quick");
            skipped += 1;
        }
    } else {
        match alarm_run() {
            Ok(run) => {
                results.push(report(7, "Alarm end to end [extended]", alarm_accuracy(&run)));
                results.push(report(
                    8,
                    "Alarm DNN at least 100x faster than LWS-1000 [extended]",
                    alarm_speed(&run),
                ));
                results.push(report(9, "Alarm training-size sweep [extended]", alarm_sweep(&run)));
            }
            Err(e) => {
                for (id, title) in [
                    (7, "Alarm end to end"),
                    (8, "Alarm speed ratio"),
                    (9, "Alarm training-size sweep"),
                ] {
                    results.push(report(id, title, Err(anyhow::anyhow!("{e:#}"))));
                }
            }
        }
    }
    results.push(report(10, "property suites", properties()));
    let failed = results.iter().filter(|&&p| !p).count();
    println!(
        "acceptance: {} passed, {failed} failed, {skipped} skipped",
        results.len() - failed
    );
    if failed == 0 || mode != "strict" {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
