//! Class-frequency estimation and repeat-factor up-sampling.
//!
//! Samples containing rare classes are repeated `r = max(1, sqrt(t / f))`
//! times, where `f` is the fraction of samples containing the class and `t`
//! the up-sampling threshold. A sample's repeat factor is the max over its
//! classes; fractional parts are realized by seeded stochastic rounding, so
//! the expected copy count equals the repeat factor exactly.
//!
//! Two frequency notions are kept distinct on purpose: repeat factors use
//! *sample-level* frequencies (fraction of samples containing the class),
//! while margin priors use *instance-level* counts (total occurrences).

use std::io::Write;

use rand::Rng;

use crate::error::{Error, Result};
use crate::loss::ClassPrior;
use crate::seeds;

/// Default up-sampling threshold (20-class detection-style tasks).
pub const DEFAULT_REPEAT_THRESHOLD: f64 = 0.01;
/// Up-sampling threshold for very long-tailed (1000-class-scale) tasks.
pub const LONG_TAIL_REPEAT_THRESHOLD: f64 = 0.001;

/// Per-class occurrence statistics over a labeled dataset.
///
/// `dataset_labels` holds, for every sample, the list of class indices it
/// contains (duplicates count as multiple instances).
#[derive(Debug, Clone)]
pub struct FrequencyTable {
    instance_counts: Vec<u64>,
    containing_samples: Vec<u64>,
    num_samples: u64,
}

impl FrequencyTable {
    pub fn from_labels(dataset_labels: &[Vec<usize>], num_classes: usize) -> Result<Self> {
        if dataset_labels.is_empty() {
            return Err(Error::EmptyDataset("no samples".into()));
        }
        if num_classes == 0 {
            return Err(Error::InvalidArgument("num_classes must be >= 1".into()));
        }
        let mut instance_counts = vec![0u64; num_classes];
        let mut containing_samples = vec![0u64; num_classes];
        let mut seen = vec![false; num_classes];
        for labels in dataset_labels {
            seen.iter_mut().for_each(|s| *s = false);
            for &c in labels {
                if c >= num_classes {
                    return Err(Error::InvalidArgument(format!(
                        "class index {c} out of range ({num_classes} classes)"
                    )));
                }
                instance_counts[c] += 1;
                if !seen[c] {
                    seen[c] = true;
                    containing_samples[c] += 1;
                }
            }
        }
        if instance_counts.iter().all(|&c| c == 0) {
            return Err(Error::EmptyDataset("no class annotations".into()));
        }
        Ok(Self {
            instance_counts,
            containing_samples,
            num_samples: dataset_labels.len() as u64,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.instance_counts.len()
    }

    pub fn instance_count(&self, class: usize) -> u64 {
        self.instance_counts[class]
    }

    /// Fraction of samples containing `class`.
    pub fn sample_frequency(&self, class: usize) -> f64 {
        self.containing_samples[class] as f64 / self.num_samples as f64
    }
}

/// `max(1, sqrt(threshold / frequency))`; equals 1 iff `frequency >= threshold`.
pub fn class_repeat_factor(frequency: f64, threshold: f64) -> Result<f64> {
    if !(frequency > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "frequency must be > 0, got {frequency}"
        )));
    }
    if !(threshold > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must be > 0, got {threshold}"
        )));
    }
    Ok((threshold / frequency).sqrt().max(1.0))
}

/// Per-sample repeat factors plus the materialized index multiset.
#[derive(Debug, Clone)]
pub struct RepeatPlan {
    repeat_factors: Vec<f64>,
    materialized_counts: Vec<u64>,
    indices: Vec<usize>,
}

impl RepeatPlan {
    pub fn repeat_factor(&self, sample: usize) -> f64 {
        self.repeat_factors[sample]
    }

    pub fn materialized_count(&self, sample: usize) -> u64 {
        self.materialized_counts[sample]
    }

    /// Materialized sample indices, grouped by original order.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// True when every sample appears exactly once.
    pub fn is_identity(&self) -> bool {
        self.materialized_counts.iter().all(|&c| c == 1)
    }

    /// CSV export: `sample_index,repeat_factor,materialized_count`.
    pub fn write_csv<W: Write>(&self, writer: &mut W) -> Result<()> {
        writeln!(writer, "sample_index,repeat_factor,materialized_count")?;
        for (i, (&r, &c)) in self
            .repeat_factors
            .iter()
            .zip(&self.materialized_counts)
            .enumerate()
        {
            writeln!(writer, "{i},{r},{c}")?;
        }
        Ok(())
    }
}

/// Compute per-sample repeat factors (max over contained classes) and
/// materialize `floor(r)` copies plus one more with probability `frac(r)`.
/// Deterministic per seed.
pub fn build_repeat_plan(
    dataset_labels: &[Vec<usize>],
    threshold: f64,
    seed: u64,
) -> Result<RepeatPlan> {
    if dataset_labels.is_empty() {
        return Err(Error::EmptyDataset("no samples to plan".into()));
    }
    let num_classes = dataset_labels
        .iter()
        .flat_map(|l| l.iter())
        .max()
        .map_or(0, |&m| m + 1);

    let class_factors: Vec<f64> = if num_classes == 0 {
        Vec::new()
    } else {
        let table = FrequencyTable::from_labels(dataset_labels, num_classes)?;
        (0..num_classes)
            .map(|c| {
                let f = table.sample_frequency(c);
                if f > 0.0 {
                    class_repeat_factor(f, threshold)
                } else {
                    // Class absent from every sample; it cannot force repeats.
                    Ok(1.0)
                }
            })
            .collect::<Result<_>>()?
    };

    let mut rng = seeds::stream_rng(seed, "repeat-plan");
    let mut repeat_factors = Vec::with_capacity(dataset_labels.len());
    let mut materialized_counts = Vec::with_capacity(dataset_labels.len());
    let mut indices = Vec::with_capacity(dataset_labels.len());
    for (i, labels) in dataset_labels.iter().enumerate() {
        let r = labels
            .iter()
            .map(|&c| class_factors[c])
            .fold(1.0f64, f64::max);
        let mut count = r.floor() as u64;
        let frac = r - r.floor();
        if frac > 0.0 && rng.random::<f64>() < frac {
            count += 1;
        }
        for _ in 0..count {
            indices.push(i);
        }
        repeat_factors.push(r);
        materialized_counts.push(count);
    }

    Ok(RepeatPlan {
        repeat_factors,
        materialized_counts,
        indices,
    })
}

/// Foreground prior probabilities proportional to instance counts, rescaled
/// so they sum to `1 - background_prob`.
///
/// A class with zero instances is an error: its margin would be infinite.
pub fn estimate_priors(
    dataset_labels: &[Vec<usize>],
    num_classes: usize,
    background_prob: f64,
) -> Result<ClassPrior> {
    if !(background_prob > 0.0 && background_prob < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "background_prob must be in (0, 1), got {background_prob}"
        )));
    }
    let table = FrequencyTable::from_labels(dataset_labels, num_classes)?;
    let total: u64 = (0..num_classes).map(|c| table.instance_count(c)).sum();
    let mut foreground = Vec::with_capacity(num_classes);
    for c in 0..num_classes {
        let count = table.instance_count(c);
        if count == 0 {
            return Err(Error::InvalidArgument(format!(
                "class {c} has no instances; its margin would be infinite"
            )));
        }
        foreground.push((1.0 - background_prob) * count as f64 / total as f64);
    }
    ClassPrior::new(foreground, background_prob)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeat_factor_worked_values() {
        assert_eq!(class_repeat_factor(0.5, 0.01).unwrap(), 1.0);
        assert!((class_repeat_factor(1e-4, 0.01).unwrap() - 10.0).abs() < 1e-12);
        assert!(class_repeat_factor(0.0, 0.01).is_err());
        assert!(class_repeat_factor(-0.2, 0.01).is_err());
    }

    #[test]
    fn repeat_factor_is_one_iff_frequent() {
        assert_eq!(class_repeat_factor(0.01, 0.01).unwrap(), 1.0);
        assert!(class_repeat_factor(0.009, 0.01).unwrap() > 1.0);
    }

    #[test]
    fn default_thresholds_are_wired() {
        assert_eq!(DEFAULT_REPEAT_THRESHOLD, 0.01);
        assert_eq!(LONG_TAIL_REPEAT_THRESHOLD, 0.001);
    }

    #[test]
    fn frequent_classes_give_identity_plan() {
        let labels: Vec<Vec<usize>> = (0..20).map(|i| vec![i % 2]).collect();
        let plan = build_repeat_plan(&labels, 0.01, 0).unwrap();
        assert!(plan.is_identity());
        assert_eq!(plan.len(), 20);
        assert_eq!(plan.indices()[3], 3);
    }

    #[test]
    fn integral_factor_repeats_exactly() {
        // Class 0 appears in 1 of 400 samples: f = t/4 at t = 0.01 -> r = 2.
        let mut labels: Vec<Vec<usize>> = vec![vec![1]; 399];
        labels.push(vec![0]);
        let plan = build_repeat_plan(&labels, 0.01, 7).unwrap();
        assert_eq!(plan.repeat_factor(399), 2.0);
        assert_eq!(plan.materialized_count(399), 2);
        assert_eq!(plan.repeat_factor(0), 1.0);
    }

    #[test]
    fn mixed_sample_takes_max_rule() {
        // f0 = 1/9 -> r0 = 3 at t = 1.0; f1 = 1 -> r1 = 1. The sample
        // containing both classes repeats 3 times.
        let mut labels: Vec<Vec<usize>> = vec![vec![1]; 8];
        labels.push(vec![0, 1]);
        let plan = build_repeat_plan(&labels, 1.0, 3).unwrap();
        assert_eq!(plan.repeat_factor(8), 3.0);
        assert_eq!(plan.materialized_count(8), 3);
        assert_eq!(plan.materialized_count(0), 1);
        assert_eq!(plan.len(), 8 + 3);
    }

    #[test]
    fn background_only_samples_are_kept_once() {
        let labels: Vec<Vec<usize>> = vec![vec![], vec![0], vec![]];
        let plan = build_repeat_plan(&labels, 0.01, 0).unwrap();
        assert_eq!(plan.repeat_factor(0), 1.0);
        assert_eq!(plan.materialized_count(2), 1);
    }

    #[test]
    fn stochastic_rounding_matches_expectation() {
        // One rare sample with fractional r (f = 1/250 at t = 0.01 gives
        // r = sqrt(2.5)); over many seeds the mean count must track r within
        // 2% (brute-force expectation over 10^4 seeds).
        let mut labels: Vec<Vec<usize>> = vec![vec![1]; 249];
        labels.push(vec![0]);
        let r = class_repeat_factor(1.0 / 250.0, 0.01).unwrap();
        assert!(r > 1.0 && r < 2.0);
        let trials = 10_000u64;
        let mut total = 0u64;
        for seed in 0..trials {
            let plan = build_repeat_plan(&labels, 0.01, seed).unwrap();
            total += plan.materialized_count(249);
        }
        let mean = total as f64 / trials as f64;
        assert!(
            (mean - r).abs() / r < 0.02,
            "mean count {mean} vs expected {r}"
        );
    }

    #[test]
    fn plan_is_seed_reproducible() {
        let mut labels: Vec<Vec<usize>> = vec![vec![1]; 49];
        labels.push(vec![0]);
        let a = build_repeat_plan(&labels, 0.01, 5).unwrap();
        let b = build_repeat_plan(&labels, 0.01, 5).unwrap();
        assert_eq!(a.indices(), b.indices());
    }

    #[test]
    fn empty_dataset_is_rejected() {
        assert!(build_repeat_plan(&[], 0.01, 0).is_err());
        assert!(estimate_priors(&[], 1, 0.5).is_err());
    }

    #[test]
    fn priors_worked_values() {
        // counts [3, 1], bg 0.5 -> p = [0.375, 0.125].
        let labels = vec![vec![0], vec![0], vec![0], vec![1]];
        let prior = estimate_priors(&labels, 2, 0.5).unwrap();
        assert!((prior.foreground()[0] - 0.375).abs() < 1e-12);
        assert!((prior.foreground()[1] - 0.125).abs() < 1e-12);
        assert_eq!(prior.background(), 0.5);
    }

    #[test]
    fn priors_equal_counts_are_uniform() {
        let labels = vec![vec![0], vec![1], vec![2], vec![3]];
        let prior = estimate_priors(&labels, 4, 0.2).unwrap();
        for &p in prior.foreground() {
            assert!((p - 0.8 / 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn priors_long_tail_worked_value() {
        // 15 base classes x 1000 instances + 5 novel x 5, bg 0.5:
        // novel p = 0.5 * 5 / 15025 (arithmetic oracle 1.66389e-4).
        let mut labels: Vec<Vec<usize>> = Vec::new();
        for c in 0..15 {
            labels.push(vec![c; 1000]);
        }
        for c in 15..20 {
            labels.push(vec![c; 5]);
        }
        let prior = estimate_priors(&labels, 20, 0.5).unwrap();
        assert!((prior.foreground()[17] - 1.6638935108153079e-4).abs() < 1e-12);
    }

    #[test]
    fn priors_reject_zero_count_class() {
        let labels = vec![vec![0], vec![0]];
        assert!(estimate_priors(&labels, 2, 0.5).is_err());
    }

    #[test]
    fn plan_csv_has_row_per_sample() {
        let labels = vec![vec![0], vec![0], vec![1]];
        let plan = build_repeat_plan(&labels, 0.01, 0).unwrap();
        let mut buf = Vec::new();
        plan.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("sample_index,repeat_factor,materialized_count"));
    }
}
