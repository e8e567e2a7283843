//! Accuracy metrics for posterior approximations: average K-L divergence
//! and multi-threshold accuracy (MTA).

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::network::PosteriorSet;

/// Predictions are clamped to at least this before taking logs.
pub const KL_PROBABILITY_FLOOR: f64 = 1e-6;

/// Thresholds reported by default.
pub const DEFAULT_THRESHOLDS: [f64; 7] = [0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.3];

/// `sum_i sum_j y_ij log(y_ij / max(p_ij, floor))` for one example.
pub fn kl_divergence(target: &PosteriorSet, prediction: &PosteriorSet) -> Result<f64> {
    check_shapes(target, prediction)?;
    let mut total = 0.0;
    for (y, p) in target.iter().zip(prediction.iter()) {
        for (&yj, &pj) in y.iter().zip(p) {
            if yj > 0.0 {
                total += yj * libm::log(yj / pj.max(KL_PROBABILITY_FLOOR));
            }
        }
    }
    Ok(total)
}

/// Mean over examples of the summed per-variable K-L divergence.
pub fn avg_kl(targets: &[PosteriorSet], predictions: &[PosteriorSet]) -> Result<f64> {
    check_alignment(targets, predictions)?;
    if targets.is_empty() {
        return Ok(0.0);
    }
    let mut sum = KahanSum::default();
    for (t, p) in targets.iter().zip(predictions) {
        sum.add(kl_divergence(t, p)?);
    }
    Ok(sum.total() / targets.len() as f64)
}

/// Accuracy at each threshold: per example, the mean over variables of the
/// fraction of values with `|y - p| < threshold`; then the mean over
/// examples.
pub fn mta(targets: &[PosteriorSet], predictions: &[PosteriorSet], thresholds: &[f64]) -> Result<MtaCurve> {
    check_alignment(targets, predictions)?;
    if let Some(&t) = thresholds.iter().find(|&&t| !(t > 0.0 && t <= 1.0)) {
        return Err(Error::InvalidArgument(alloc::format!("threshold {t} outside (0, 1]")));
    }
    let mut sums: Vec<KahanSum> = thresholds.iter().map(|_| KahanSum::default()).collect();
    for (t, p) in targets.iter().zip(predictions) {
        check_shapes(t, p)?;
        let vars = t.len().max(1) as f64;
        for (k, &threshold) in thresholds.iter().enumerate() {
            let mut per_example = 0.0;
            for (y, q) in t.iter().zip(p.iter()) {
                let hits = y.iter().zip(q).filter(|(a, b)| (*a - *b).abs() < threshold).count();
                per_example += hits as f64 / y.len() as f64;
            }
            sums[k].add(per_example / vars);
        }
    }
    let n = targets.len().max(1) as f64;
    Ok(MtaCurve {
        points: thresholds
            .iter()
            .zip(&sums)
            .map(|(&t, s)| (t, if targets.is_empty() { 0.0 } else { s.total() / n }))
            .collect(),
    })
}

/// `(threshold, accuracy)` pairs in the order requested.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MtaCurve {
    pub points: Vec<(f64, f64)>,
}

impl MtaCurve {
    pub fn at(&self, threshold: f64) -> Option<f64> {
        self.points.iter().find(|(t, _)| *t == threshold).map(|(_, a)| *a)
    }

    pub fn is_monotone(&self) -> bool {
        let mut pts = self.points.clone();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts.windows(2).all(|w| w[0].1 <= w[1].1)
    }
}

/// Accuracy and timing summary for one method on one workload.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub dataset: String,
    pub n_examples: usize,
    pub avg_kl: f64,
    pub mta: MtaCurve,
    pub time_per_inference_seconds: f64,
    pub config_fingerprint: String,
    /// Examples the method could not answer (e.g. zero total LWS weight).
    pub failures: usize,
}

impl EvalReport {
    /// Scores `predictions` against `targets`.
    pub fn score(
        method: impl Into<String>,
        dataset: impl Into<String>,
        targets: &[PosteriorSet],
        predictions: &[PosteriorSet],
        thresholds: &[f64],
    ) -> Result<Self> {
        Ok(EvalReport {
            method: method.into(),
            dataset: dataset.into(),
            n_examples: targets.len(),
            avg_kl: avg_kl(targets, predictions)?,
            mta: mta(targets, predictions, thresholds)?,
            time_per_inference_seconds: 0.0,
            config_fingerprint: String::new(),
            failures: 0,
        })
    }
}

fn check_alignment(targets: &[PosteriorSet], predictions: &[PosteriorSet]) -> Result<()> {
    if targets.len() != predictions.len() {
        return Err(Error::AlignmentMismatch {
            left: targets.len(),
            right: predictions.len(),
        });
    }
    Ok(())
}

fn check_shapes(a: &PosteriorSet, b: &PosteriorSet) -> Result<()> {
    if a.len() != b.len() || a.iter().zip(b.iter()).any(|(x, y)| x.len() != y.len()) {
        return Err(Error::AlignmentMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

/// Compensated summation.
#[derive(Debug, Clone, Copy, Default)]
struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum
    }
}
