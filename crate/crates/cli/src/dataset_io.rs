//! Datasets on disk: `train.jsonl`, `test.jsonl` and a `manifest.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use bnsurrogate_core::dataset::{generate_example, DatasetSplit, EncodingLayout, Example, GenerationConfig};
use bnsurrogate_core::rng::RngSeed;
use bnsurrogate_core::{Evidence, Network};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::sha256_hex;

pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Same examples and split as the core generator, computed in parallel.
pub fn generate_parallel(net: &Network, config: &GenerationConfig) -> Result<DatasetSplit> {
    config.validate()?;
    let layout = EncodingLayout::for_network(net);
    let examples = (0..config.n)
        .into_par_iter()
        .map(|i| generate_example(net, &layout, config, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DatasetSplit::from_examples(examples, *config))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: usize,
    pub evidence: BTreeMap<String, String>,
    pub p_evidence: f64,
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

impl Record {
    pub fn from_example(net: &Network, ex: &Example) -> Self {
        let evidence = ex
            .evidence
            .iter()
            .map(|(i, v)| {
                let var = net.variable(i);
                (var.name.clone(), var.values[v].clone())
            })
            .collect();
        Record {
            id: ex.id,
            evidence,
            p_evidence: ex.evidence_probability,
            input: ex.input.clone(),
            target: ex.target.clone(),
        }
    }

    pub fn into_example(self, net: &Network, layout: &EncodingLayout) -> Result<Example> {
        let evidence = Evidence::from_labels(net, self.evidence.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
        ensure!(
            layout.encode_evidence(&evidence) == self.input,
            "record {}: input does not match its evidence",
            self.id
        );
        ensure!(
            self.target.len() == layout.total_dim(),
            "record {}: target has length {}, expected {}",
            self.id,
            self.target.len(),
            layout.total_dim()
        );
        Ok(Example {
            id: self.id,
            evidence,
            input: self.input,
            target: self.target,
            evidence_probability: self.p_evidence,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub network: String,
    pub cardinalities: Vec<usize>,
    pub n: usize,
    pub p_obs: f64,
    pub mode: String,
    pub seed: u64,
    pub train_count: usize,
    pub test_count: usize,
    pub overlap_rate: f64,
    /// SHA-256 of each data file.
    pub checksums: BTreeMap<String, String>,
    /// Fingerprint of the recipe that produced the data, if any.
    #[serde(default)]
    pub config_fingerprint: String,
}

impl Manifest {
    pub fn generation(&self) -> Result<GenerationConfig> {
        Ok(GenerationConfig {
            n: self.n,
            p_obs: self.p_obs,
            mode: self.mode.parse()?,
            seed: RngSeed(self.seed),
        })
    }
}

fn to_jsonl(net: &Network, examples: &[Example]) -> Vec<u8> {
    let mut out = Vec::new();
    for ex in examples {
        serde_json::to_writer(&mut out, &Record::from_example(net, ex)).expect("record serializes");
        out.push(b'\n');
    }
    out
}

/// Writes both splits and the manifest into `dir`, creating it if needed.
pub fn write_split(dir: &Path, net: &Network, split: &DatasetSplit, config_fingerprint: &str) -> Result<Manifest> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut checksums = BTreeMap::new();
    for (name, examples) in [(TRAIN_FILE, &split.train), (TEST_FILE, &split.test)] {
        let bytes = to_jsonl(net, examples);
        checksums.insert(name.to_string(), sha256_hex(&bytes));
        fs::write(dir.join(name), bytes).with_context(|| format!("writing {name}"))?;
    }
    let manifest = Manifest {
        network: net.name().to_string(),
        cardinalities: net.cardinalities(),
        n: split.config.n,
        p_obs: split.config.p_obs,
        mode: split.config.mode.to_string(),
        seed: split.config.seed.0,
        train_count: split.train.len(),
        test_count: split.test.len(),
        overlap_rate: split.overlap_rate(),
        checksums,
        config_fingerprint: config_fingerprint.to_string(),
    };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    fs::write(dir.join(MANIFEST_FILE), json)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_jsonl(
    path: &Path,
    net: &Network,
    layout: &EncodingLayout,
    expected_sha: Option<&String>,
) -> Result<Vec<Example>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if let Some(sha) = expected_sha {
        ensure!(
            &sha256_hex(&bytes) == sha,
            "{} does not match its manifest checksum",
            path.display()
        );
    }
    let text = std::str::from_utf8(&bytes)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let record: Record =
                serde_json::from_str(line).with_context(|| format!("{}:{}: bad record", path.display(), n + 1))?;
            record.into_example(net, layout)
        })
        .collect()
}

/// Loads a dataset written by [`write_split`], checking checksums and that
/// it was generated for `net`.
pub fn read_split(dir: &Path, net: &Network) -> Result<(DatasetSplit, Manifest)> {
    let manifest = read_manifest(dir)?;
    if manifest.network != net.name() || manifest.cardinalities != net.cardinalities() {
        bail!(
            "dataset in {} was generated for network `{}`, not `{}`",
            dir.display(),
            manifest.network,
            net.name()
        );
    }
    let layout = EncodingLayout::for_network(net);
    let train = read_jsonl(&dir.join(TRAIN_FILE), net, &layout, manifest.checksums.get(TRAIN_FILE))?;
    let test = read_jsonl(&dir.join(TEST_FILE), net, &layout, manifest.checksums.get(TEST_FILE))?;
    ensure!(
        train.len() == manifest.train_count && test.len() == manifest.test_count,
        "record counts disagree with the manifest"
    );
    let config = manifest.generation()?;
    Ok((DatasetSplit { train, test, config }, manifest))
}
