use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bnsurrogate::config::ExperimentConfig;
use bnsurrogate::experiment::{self, load_network};
use bnsurrogate::{checkpoint, dataset_io, report};
use bnsurrogate_core::exact::{exact_posteriors_with, EliminationOrder};
use bnsurrogate_core::nn::EpochReport;
use bnsurrogate_core::rng::RngSeed;
use bnsurrogate_core::sampler::lws_posteriors_seeded;
use bnsurrogate_core::{Evidence, Network, PosteriorSet};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "bnsurrogate",
    version,
    about = "Neural surrogates for Bayesian-network posterior inference"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// BIF network file.
    #[arg(long)]
    net: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// TOML recipe; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
struct DataArgs {
    /// Number of examples to generate.
    #[arg(long)]
    n: Option<usize>,
    /// Probability that each variable is observed.
    #[arg(long)]
    p_obs: Option<f64>,
    /// Evidence mode: uniform or consistent.
    #[arg(long)]
    mode: Option<String>,
}

#[derive(Args, Clone, Default)]
struct ModelArgs {
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    /// Learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// L2 coefficient on weights.
    #[arg(long)]
    l2: Option<f64>,
    /// Momentum.
    #[arg(long)]
    momentum: Option<f64>,
    /// Mini-batch size.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Maximum epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Epochs without validation improvement before stopping.
    #[arg(long)]
    patience: Option<usize>,
    /// Train on only the first N training examples.
    #[arg(long)]
    train_size: Option<usize>,
    /// Drop bias terms.
    #[arg(long)]
    no_bias: bool,
    /// Print per-epoch losses.
    #[arg(long, short)]
    verbose: bool,
}

#[derive(Args, Clone, Default)]
struct EvalArgs {
    /// Likelihood-weighting sample count.
    #[arg(long)]
    samples: Option<usize>,
    /// Number of test examples to score.
    #[arg(long)]
    subset: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a network and print its statistics.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Exact posteriors for one evidence set.
    Query {
        #[command(flatten)]
        common: Common,
        /// Evidence as NAME=VALUE; repeatable.
        #[arg(short, long = "evidence")]
        evidence: Vec<String>,
        /// Elimination order: min-degree, random, or a comma-separated list of variable names.
        #[arg(long, default_value = "min-degree")]
        order: String,
    },
    /// Generate a labelled dataset.
    Gen {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Likelihood-weighting posteriors for one evidence set.
    Lws {
        #[command(flatten)]
        common: Common,
        #[arg(short, long = "evidence")]
        evidence: Vec<String>,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Train a model on a generated dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset directory.
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Posteriors from a trained model.
    Predict {
        #[command(flatten)]
        common: Common,
        /// Checkpoint file.
        #[arg(long)]
        model: PathBuf,
        #[arg(short, long = "evidence")]
        evidence: Vec<String>,
    },
    /// Score a model or likelihood weighting on a test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint to evaluate; likelihood weighting when absent.
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Generate data, train, and compare against likelihood weighting.
    Bench {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Train one model per training-set size.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Training-set sizes, comma separated.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
    },
}

fn resolve(common: &Common, data: &DataArgs, model: &ModelArgs, eval: &EvalArgs) -> Result<ExperimentConfig> {
    let mut c = match (&common.config, &common.net) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(net)) => ExperimentConfig::for_network(net),
        (None, None) => bail!("either --config or --net is required"),
    };
    if let Some(net) = &common.net {
        c.network = net.clone();
    }
    if let Some(s) = common.seed {
        c.seed = s;
    }
    if let Some(n) = data.n {
        c.data.n = n;
    }
    if let Some(p) = data.p_obs {
        c.data.p_obs = p;
    }
    if let Some(m) = &data.mode {
        c.data.mode = m.clone();
    }
    let m = &mut c.model;
    if let Some(h) = &model.hidden {
        m.hidden = h.clone();
    }
    if let Some(v) = model.lr {
        m.learning_rate = v;
    }
    if let Some(v) = model.l2 {
        m.l2_lambda = v;
    }
    if let Some(v) = model.momentum {
        m.momentum = v;
    }
    if let Some(v) = model.batch_size {
        m.batch_size = v;
    }
    if let Some(v) = model.epochs {
        m.max_epochs = v;
    }
    if let Some(v) = model.patience {
        m.early_stop_patience = v;
    }
    if model.train_size.is_some() {
        m.train_size = model.train_size;
    }
    if model.no_bias {
        m.use_bias = false;
    }
    if let Some(v) = eval.samples {
        c.eval.lws_samples = v;
    }
    if let Some(v) = eval.subset {
        c.eval.subset = v;
    }
    c.mode()?;
    c.validate()?;
    Ok(c)
}

fn network_path(common: &Common) -> Result<PathBuf> {
    Ok(match (&common.net, &common.config) {
        (Some(p), _) => p.clone(),
        (None, Some(c)) => ExperimentConfig::load(c)?.network,
        (None, None) => bail!("--net is required"),
    })
}

fn network_arg(common: &Common) -> Result<Network> {
    load_network(&network_path(common)?)
}

/// Report label: the recipe name, else the network file name. Bundled BIF
/// files all call themselves "unknown".
fn network_label(common: &Common) -> Result<String> {
    match &common.config {
        Some(c) => Ok(ExperimentConfig::load(c)?.name),
        None => Ok(ExperimentConfig::for_network(network_path(common)?).name),
    }
}

fn parse_evidence(net: &Network, pairs: &[String]) -> Result<Evidence> {
    let split = pairs
        .iter()
        .map(|p| {
            p.split_once('=')
                .with_context(|| format!("evidence `{p}` is not NAME=VALUE"))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Evidence::from_labels(net, split)?)
}

fn print_posteriors(net: &Network, ev: &Evidence, post: &PosteriorSet) {
    let width = net.variables().iter().map(|v| v.name.len()).max().unwrap_or(0);
    for (i, var) in net.variables().iter().enumerate() {
        let cells: Vec<String> = var
            .values
            .iter()
            .zip(post.get(i))
            .map(|(name, p)| format!("{name}={p:.6}"))
            .collect();
        let mark = if ev.is_observed(i) { "  (observed)" } else { "" };
        println!("{:<width$}  {}{mark}", var.name, cells.join(" "));
    }
}

fn epoch_printer(verbose: bool) -> impl FnMut(&EpochReport) {
    move |r: &EpochReport| {
        if verbose {
            eprintln!(
                "epoch {:>4}  train {:.6}  validation {:.6}{}",
                r.epoch,
                r.train_loss,
                r.validation_loss,
                if r.improved { "  *" } else { "" }
            );
        }
    }
}

fn out_dir(common: &Common, default: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { common } => {
            let net = network_arg(&common)?;
            println!("network         {}", net.name());
            println!("variables       {}", net.num_variables());
            println!("edges           {}", net.edge_count());
            println!("free parameters {}", net.free_parameters());
            println!("input width     {}", net.evidence_dim());
        }
        Command::Query {
            common,
            evidence,
            order,
        } => {
            let net = network_arg(&common)?;
            let ev = parse_evidence(&net, &evidence)?;
            let order = match order.as_str() {
                "min-degree" => EliminationOrder::MinDegree,
                "random" => EliminationOrder::Random(RngSeed(common.seed.unwrap_or(0))),
                list => EliminationOrder::Fixed(
                    list.split(',')
                        .map(|n| {
                            net.index_of(n.trim())
                                .with_context(|| format!("unknown variable `{n}`"))
                        })
                        .collect::<Result<_>>()?,
                ),
            };
            let (post, p) = exact_posteriors_with(&net, &ev, &order)?;
            println!("P(evidence) = {p:.6e}");
            print_posteriors(&net, &ev, &post);
        }
        Command::Gen { common, data } => {
            let config = resolve(&common, &data, &ModelArgs::default(), &EvalArgs::default())?;
            let net = load_network(&config.network)?;
            let dir = out_dir(&common, "data");
            let split = dataset_io::generate_parallel(&net, &config.generation())?;
            let m = dataset_io::write_split(&dir, &net, &split, &config.data_fingerprint())?;
            println!(
                "wrote {} train and {} test examples to {} (overlap {:.4})",
                m.train_count,
                m.test_count,
                dir.display(),
                m.overlap_rate
            );
        }
        Command::Lws {
            common,
            evidence,
            samples,
        } => {
            let net = network_arg(&common)?;
            let ev = parse_evidence(&net, &evidence)?;
            let post = lws_posteriors_seeded(&net, &ev, samples, RngSeed(common.seed.unwrap_or(0)))?;
            print_posteriors(&net, &ev, &post);
        }
        Command::Train { common, data, model } => {
            let mut common = common;
            if common.config.is_none() && common.net.is_none() {
                bail!("either --config or --net is required");
            }
            let out = out_dir(&common, "model.ckpt");
            common.out = None;
            let config = resolve(&common, &DataArgs::default(), &model, &EvalArgs::default())?;
            let net = load_network(&config.network)?;
            let (split, _) = dataset_io::read_split(&data, &net)?;
            let m = experiment::train_model(&config, &net, &split.train, epoch_printer(model.verbose))?;
            checkpoint::save(&out, &m, &config.model_fingerprint())?;
            println!(
                "trained {} epochs, best validation loss {:.6} at epoch {}; saved {}",
                m.metadata.epochs_run,
                m.metadata.best_validation_loss,
                m.metadata.best_epoch,
                out.display()
            );
        }
        Command::Predict {
            common,
            model,
            evidence,
        } => {
            let net = network_arg(&common)?;
            let m = checkpoint::load_for(&model, &net)?;
            let ev = parse_evidence(&net, &evidence)?;
            print_posteriors(&net, &ev, &m.predict(&ev)?);
        }
        Command::Eval {
            common,
            data,
            model,
            eval,
        } => {
            let net = network_arg(&common)?;
            let (split, manifest) = dataset_io::read_split(&data, &net)?;
            let k = eval.subset.unwrap_or(split.test.len());
            if k == 0 || k > split.test.len() {
                bail!(
                    "subset size {k} must be between 1 and the test size {}",
                    split.test.len()
                );
            }
            let examples = &split.test[..k];
            let th = bnsurrogate_core::eval::DEFAULT_THRESHOLDS;
            let name = format!(
                "{}/test{}",
                network_label(&common)?,
                if k < split.test.len() {
                    format!("[..{k}]")
                } else {
                    String::new()
                }
            );
            let mut r = match model {
                Some(path) => experiment::evaluate_dnn(&checkpoint::load_for(&path, &net)?, examples, &name, &th)?,
                None => experiment::evaluate_lws(
                    &net,
                    examples,
                    eval.samples.unwrap_or(1000),
                    common.seed.unwrap_or(manifest.seed),
                    &name,
                    &th,
                )?,
            };
            r.config_fingerprint = manifest.config_fingerprint;
            print!("{}", report::table(std::slice::from_ref(&r)));
            if let Some(out) = &common.out {
                report::write_csv(out, std::slice::from_ref(&r))?;
            }
        }
        Command::Bench {
            common,
            data,
            model,
            eval,
        } => {
            let config = resolve(&common, &data, &model, &eval)?;
            let net = load_network(&config.network)?;
            let dir = out_dir(&common, &format!("runs/{}", config.name));
            let split = experiment::prepare_data(&config, &net, &dir.join("data"))?;
            let r = experiment::bench(&config, &net, &split, Some(&dir), epoch_printer(model.verbose))?;
            print!("{}", report::table(&r.reports()));
            let speedup = r.lws_subset.time_per_inference_seconds / r.dnn_subset.time_per_inference_seconds;
            println!("DNN is {speedup:.0}x faster per query; results in {}", dir.display());
        }
        Command::Sweep {
            common,
            data,
            model,
            sizes,
        } => {
            let config = resolve(&common, &data, &model, &EvalArgs::default())?;
            let net = load_network(&config.network)?;
            let dir = out_dir(&common, &format!("runs/{}", config.name));
            let split = experiment::prepare_data(&config, &net, &dir.join("data"))?;
            let sizes = sizes.unwrap_or_else(|| config.sweep.sizes.clone());
            let verbose = model.verbose;
            let results = experiment::sweep(&config, &net, &split, &sizes, |size, r| {
                if verbose {
                    eprintln!("[{size}] epoch {:>4}  validation {:.6}", r.epoch, r.validation_loss);
                }
            })?;
            let reports: Vec<_> = results.into_iter().map(|(_, r)| r).collect();
            report::write_csv(&dir.join("sweep.csv"), &reports)?;
            print!("{}", report::table(&reports));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
