//! Training corpora: random evidence labelled with exact posteriors, encoded
//! as one-hot inputs and concatenated target distributions.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::exact::exact_posteriors;
use crate::network::{Evidence, Network, PosteriorSet};
use crate::rng::RngSeed;
use crate::sampler::forward_sample;

pub const DEFAULT_P_OBS: f64 = 0.3;

/// Where each variable's block sits in the flat `sum_i |V_i|` vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodingLayout {
    network: String,
    cardinalities: Vec<usize>,
    offsets: Vec<usize>,
    total_dim: usize,
}

impl EncodingLayout {
    pub fn new(network: impl Into<String>, cardinalities: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(cardinalities.len());
        let mut total_dim = 0;
        for &c in &cardinalities {
            offsets.push(total_dim);
            total_dim += c;
        }
        EncodingLayout {
            network: network.into(),
            cardinalities,
            offsets,
            total_dim,
        }
    }

    pub fn for_network(net: &Network) -> Self {
        Self::new(net.name(), net.cardinalities())
    }

    pub fn network_name(&self) -> &str {
        &self.network
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn num_variables(&self) -> usize {
        self.cardinalities.len()
    }

    pub fn block(&self, variable: usize) -> Range<usize> {
        self.offsets[variable]..self.offsets[variable] + self.cardinalities[variable]
    }

    /// True when `net` has the same name and cardinalities.
    pub fn matches(&self, net: &Network) -> bool {
        self.network == net.name() && self.cardinalities == net.cardinalities()
    }

    pub fn check_network(&self, net: &Network) -> Result<()> {
        if self.matches(net) {
            Ok(())
        } else {
            Err(Error::LayoutMismatch(format!(
                "layout is for `{}` {:?}, network is `{}` {:?}",
                self.network,
                self.cardinalities,
                net.name(),
                net.cardinalities()
            )))
        }
    }

    /// One-hot blocks for observed variables, zeros elsewhere.
    pub fn encode_evidence(&self, ev: &Evidence) -> Vec<f64> {
        let mut x = vec![0.0; self.total_dim];
        for (var, value) in ev.iter() {
            x[self.offsets[var] + value] = 1.0;
        }
        x
    }

    /// Inverse of [`encode_evidence`](Self::encode_evidence).
    pub fn decode_evidence(&self, input: &[f64]) -> Result<Evidence> {
        if input.len() != self.total_dim {
            return Err(Error::DimensionMismatch {
                expected: self.total_dim,
                found: input.len(),
            });
        }
        let mut ev = Evidence::new();
        for var in 0..self.num_variables() {
            let block = &input[self.block(var)];
            let mut hot = None;
            for (j, &x) in block.iter().enumerate() {
                if x == 1.0 && hot.is_none() {
                    hot = Some(j);
                } else if x != 0.0 {
                    return Err(Error::InvalidArgument(format!("block {var} is not one-hot or empty")));
                }
            }
            if let Some(value) = hot {
                ev.observe(var, value);
            }
        }
        Ok(ev)
    }

    pub fn flatten(&self, posteriors: &PosteriorSet) -> Result<Vec<f64>> {
        let flat = posteriors.flatten();
        if posteriors.len() != self.num_variables() || flat.len() != self.total_dim {
            return Err(Error::DimensionMismatch {
                expected: self.total_dim,
                found: flat.len(),
            });
        }
        Ok(flat)
    }

    pub fn unflatten(&self, flat: &[f64]) -> Result<PosteriorSet> {
        PosteriorSet::from_flat(flat, &self.cardinalities)
    }
}

/// How observed values are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvidenceMode {
    /// Value uniform over the variable's labels; may be impossible.
    #[default]
    Uniform,
    /// Values read off one forward sample; always possible.
    Consistent,
}

impl fmt::Display for EvidenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvidenceMode::Uniform => "uniform",
            EvidenceMode::Consistent => "consistent",
        })
    }
}

impl FromStr for EvidenceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(EvidenceMode::Uniform),
            "consistent" => Ok(EvidenceMode::Consistent),
            other => Err(Error::InvalidArgument(format!(
                "unknown evidence mode `{other}` (expected uniform or consistent)"
            ))),
        }
    }
}

/// Each variable is observed independently with probability `p_obs`.
pub fn sample_evidence<R: Rng + ?Sized>(net: &Network, p_obs: f64, mode: EvidenceMode, rng: &mut R) -> Evidence {
    let reference = match mode {
        EvidenceMode::Consistent => Some(forward_sample(net, rng)),
        EvidenceMode::Uniform => None,
    };
    let mut ev = Evidence::new();
    for var in 0..net.num_variables() {
        if rng.random::<f64>() < p_obs {
            let value = match &reference {
                Some(sample) => sample[var],
                None => rng.random_range(0..net.cardinality(var)),
            };
            ev.observe(var, value);
        }
    }
    ev
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    /// Generation index; unique within a dataset.
    pub id: usize,
    pub evidence: Evidence,
    pub input: Vec<f64>,
    pub target: Vec<f64>,
    pub evidence_probability: f64,
}

impl Example {
    pub fn new(
        layout: &EncodingLayout,
        id: usize,
        evidence: Evidence,
        posteriors: &PosteriorSet,
        p: f64,
    ) -> Result<Self> {
        Ok(Example {
            id,
            input: layout.encode_evidence(&evidence),
            target: layout.flatten(posteriors)?,
            evidence,
            evidence_probability: p,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationConfig {
    pub n: usize,
    pub p_obs: f64,
    pub mode: EvidenceMode,
    pub seed: RngSeed,
}

impl GenerationConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        GenerationConfig {
            n,
            p_obs: DEFAULT_P_OBS,
            mode: EvidenceMode::Uniform,
            seed: RngSeed(seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidArgument(format!(
                "dataset size must be at least 2, got {}",
                self.n
            )));
        }
        if !(0.0..=1.0).contains(&self.p_obs) {
            return Err(Error::InvalidArgument(format!(
                "p_obs must lie in [0, 1], got {}",
                self.p_obs
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<Example>,
    pub test: Vec<Example>,
    pub config: GenerationConfig,
}

impl DatasetSplit {
    /// Shuffles `examples` with a stream derived from the config seed and
    /// assigns the first half (rounded up) to training.
    pub fn from_examples(mut examples: Vec<Example>, config: GenerationConfig) -> Self {
        examples.shuffle(&mut config.seed.derive_named(b"split").rng());
        let test = examples.split_off(examples.len().div_ceil(2));
        DatasetSplit {
            train: examples,
            test,
            config,
        }
    }

    /// Fraction of test examples whose evidence set also occurs in training.
    pub fn overlap_rate(&self) -> f64 {
        if self.test.is_empty() {
            return 0.0;
        }
        let train: BTreeSet<&Evidence> = self.train.iter().map(|e| &e.evidence).collect();
        let hits = self.test.iter().filter(|e| train.contains(&e.evidence)).count();
        hits as f64 / self.test.len() as f64
    }
}

/// Example `index` of a dataset: evidence is redrawn from the example's own
/// stream until it is possible.
pub fn generate_example(
    net: &Network,
    layout: &EncodingLayout,
    config: &GenerationConfig,
    index: usize,
) -> Result<Example> {
    let mut rng = config.seed.derive(index as u64).rng();
    let limit = config.n.saturating_mul(100).max(100);
    for _ in 0..limit {
        let ev = sample_evidence(net, config.p_obs, config.mode, &mut rng);
        match exact_posteriors(net, &ev) {
            Ok((post, p)) => return Example::new(layout, index, ev, &post, p),
            Err(Error::ImpossibleEvidence { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::GenerationStalled { attempts: limit })
}

/// Generates `config.n` labelled examples and splits them 50/50.
pub fn generate_dataset(net: &Network, config: &GenerationConfig) -> Result<DatasetSplit> {
    config.validate()?;
    let layout = EncodingLayout::for_network(net);
    let examples = (0..config.n)
        .map(|i| generate_example(net, &layout, config, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(DatasetSplit::from_examples(examples, *config))
}
