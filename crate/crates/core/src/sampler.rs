//! Forward sampling and likelihood weighting.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::network::{Evidence, Network, PosteriorSet};
use crate::rng::{sample_categorical, RngSeed};

/// Sample count used by the likelihood-weighting baseline.
pub const DEFAULT_LWS_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    pub assignment: Vec<usize>,
    pub weight: f64,
}

/// Draws a full assignment from the joint, visiting variables in
/// topological order.
pub fn forward_sample<R: Rng + ?Sized>(net: &Network, rng: &mut R) -> Vec<usize> {
    let mut assignment = vec![0usize; net.num_variables()];
    for &i in net.topo_order() {
        assignment[i] = sample_categorical(rng, net.cpt_row(i, &assignment));
    }
    assignment
}

/// One likelihood-weighted sample: observed variables are clamped, the rest
/// drawn from their CPTs, and the weight is the product of
/// `P(observed value | sampled parents)` over observed variables.
pub fn lws_sample<R: Rng + ?Sized>(net: &Network, ev: &Evidence, rng: &mut R) -> WeightedSample {
    let mut assignment = vec![0usize; net.num_variables()];
    let mut weight = 1.0;
    for &i in net.topo_order() {
        let row = net.cpt_row(i, &assignment);
        match ev.get(i) {
            Some(value) => {
                assignment[i] = value;
                weight *= row[value];
            }
            None => assignment[i] = sample_categorical(rng, row),
        }
    }
    WeightedSample { assignment, weight }
}

/// Likelihood-weighting estimate of every posterior from `n_samples`
/// samples, normalized by the total weight.
pub fn lws_posteriors<R: Rng + ?Sized>(
    net: &Network,
    ev: &Evidence,
    n_samples: usize,
    rng: &mut R,
) -> Result<PosteriorSet> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    ev.validate(net)?;
    let mut counts: Vec<Vec<f64>> = net.variables().iter().map(|v| vec![0.0; v.cardinality()]).collect();
    let mut total = 0.0;
    for _ in 0..n_samples {
        let s = lws_sample(net, ev, rng);
        if s.weight == 0.0 {
            continue;
        }
        total += s.weight;
        for (i, &value) in s.assignment.iter().enumerate() {
            counts[i][value] += s.weight;
        }
    }
    if !(total > 0.0) {
        return Err(Error::ZeroWeightTotal { samples: n_samples });
    }
    for (i, c) in counts.iter_mut().enumerate() {
        match ev.get(i) {
            Some(value) => *c = PosteriorSet::degenerate(c.len(), value),
            None => c.iter_mut().for_each(|x| *x /= total),
        }
    }
    Ok(PosteriorSet::new(counts))
}

/// [`lws_posteriors`] with a generator seeded from `seed`.
pub fn lws_posteriors_seeded(net: &Network, ev: &Evidence, n_samples: usize, seed: RngSeed) -> Result<PosteriorSet> {
    lws_posteriors(net, ev, n_samples, &mut seed.rng())
}
