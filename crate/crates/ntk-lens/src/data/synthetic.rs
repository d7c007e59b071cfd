//! Synthetic Gaussian-cluster classification tasks with controlled
//! geometry: unit-norm class means that are mutually orthogonal (drawn at
//! random, then orthonormalized), so every pair of means is separated by
//! 90° and task difficulty is set by the cluster width alone.
//!
//! The task identity (the means) and the sampling noise are seeded
//! independently: pools that must share a task — a training set and the
//! test set it is scored against — share `task_seed` while drawing their
//! samples from different `seed`s.

use super::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Parameters of a synthetic clustered classification task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTaskSpec {
    /// Number of classes (and of orthonormal cluster means).
    pub n_classes: usize,
    /// Input dimensionality; must be at least `n_classes`.
    pub input_dim: usize,
    /// Isotropic Gaussian cluster width around each mean.
    pub cluster_std: f64,
    /// Seed fixing the orthonormal class means — the task identity.
    pub task_seed: u64,
    /// Seed driving the per-sample noise draws.
    pub seed: u64,
}

/// Draw `count` samples from the task, split as evenly as possible across
/// classes, with rows blocked by class (all of class 0 first, then class 1,
/// and so on). Deterministic for a given spec and count.
///
/// # Errors
/// Fails when the spec is degenerate (`n_classes` of zero, more classes
/// than dimensions, negative width) or `count` is zero.
pub fn make_synthetic(spec: &SyntheticTaskSpec, count: usize) -> Result<Dataset> {
    if spec.n_classes == 0 {
        return Err(Error::InvalidSpec {
            reason: "synthetic task needs at least one class".to_string(),
        });
    }
    if spec.input_dim < spec.n_classes {
        return Err(Error::InvalidSpec {
            reason: format!(
                "cannot place {} orthogonal class means in {} dimensions",
                spec.n_classes, spec.input_dim
            ),
        });
    }
    if !(spec.cluster_std >= 0.0) {
        return Err(Error::InvalidSpec {
            reason: format!("cluster_std must be nonnegative, got {}", spec.cluster_std),
        });
    }
    if count == 0 {
        return Err(Error::EmptyBatch {
            op: "make_synthetic",
        });
    }
    let mut task_rng = ChaCha8Rng::seed_from_u64(spec.task_seed);
    let means = orthonormal_means(spec.n_classes, spec.input_dim, &mut task_rng)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut rows = Vec::with_capacity(count);
    let mut labels = Matrix::zeros(count, spec.n_classes);
    let mut row_index = 0;
    for (class, mean) in means.iter().enumerate() {
        let class_count = count / spec.n_classes + usize::from(class < count % spec.n_classes);
        for _ in 0..class_count {
            let mut sample = mean.clone();
            for v in &mut sample {
                let noise: f64 = StandardNormal.sample(&mut rng);
                *v += spec.cluster_std * noise;
            }
            rows.push(sample);
            labels.set(row_index, class, 1.0);
            row_index += 1;
        }
    }
    Ok(Dataset {
        inputs: Matrix::from_rows(&rows)?,
        labels,
        name: "synthetic".to_string(),
        class_names: (0..spec.n_classes).map(|c| format!("class_{c}")).collect(),
    })
}

/// Draw Gaussian vectors and Gram–Schmidt them into unit-norm, mutually
/// orthogonal class means. A near-dependent draw (vanishing residual) is
/// retried; with `dim ≥ n` this has probability zero and the retry loop is
/// purely defensive.
fn orthonormal_means(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    const MAX_ATTEMPTS: usize = 16;
    const RESIDUAL_FLOOR: f64 = 1e-8;
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(n);
    while means.len() < n {
        let mut attempts = 0;
        loop {
            attempts += 1;
            let mut candidate: Vec<f64> =
                (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            for prev in &means {
                let proj: f64 = candidate.iter().zip(prev).map(|(a, b)| a * b).sum();
                for (c, p) in candidate.iter_mut().zip(prev) {
                    *c -= proj * p;
                }
            }
            let norm = candidate.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > RESIDUAL_FLOOR {
                for v in &mut candidate {
                    *v /= norm;
                }
                means.push(candidate);
                break;
            }
            if attempts >= MAX_ATTEMPTS {
                return Err(Error::InvalidSpec {
                    reason: format!(
                        "could not draw {n} independent class means in {dim} dimensions"
                    ),
                });
            }
        }
    }
    Ok(means)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n_classes: usize, input_dim: usize, cluster_std: f64) -> SyntheticTaskSpec {
        SyntheticTaskSpec {
            n_classes,
            input_dim,
            cluster_std,
            task_seed: 7,
            seed: 42,
        }
    }

    #[test]
    fn zero_width_samples_sit_on_unit_orthogonal_means() {
        let ds = make_synthetic(&spec(3, 8, 0.0), 9).unwrap();
        assert_eq!(ds.len(), 9);
        ds.validate().unwrap();
        // Class-blocked rows: 3 per class, all equal to their class mean.
        for class in 0..3 {
            let mean = ds.inputs.row(class * 3);
            for i in 0..3 {
                assert_eq!(ds.inputs.row(class * 3 + i), mean);
                assert_eq!(ds.label_index(class * 3 + i), class);
            }
            let norm: f64 = mean.iter().map(|v| v * v).sum::<f64>();
            assert!((norm - 1.0).abs() < 1e-12, "mean norm² = {norm}");
        }
        for a in 0..3 {
            for b in (a + 1)..3 {
                let dot: f64 = ds
                    .inputs
                    .row(a * 3)
                    .iter()
                    .zip(ds.inputs.row(b * 3))
                    .map(|(x, y)| x * y)
                    .sum();
                assert!(dot.abs() < 1e-12, "means {a},{b} not orthogonal: {dot}");
            }
        }
    }

    #[test]
    fn uneven_counts_split_as_evenly_as_possible() {
        let ds = make_synthetic(&spec(3, 4, 0.1), 10).unwrap();
        let counts: Vec<usize> = (0..3)
            .map(|c| (0..ds.len()).filter(|&i| ds.label_index(i) == c).count())
            .collect();
        assert_eq!(counts, vec![4, 3, 3]);
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let a = make_synthetic(&spec(2, 6, 0.2), 40).unwrap();
        let b = make_synthetic(&spec(2, 6, 0.2), 40).unwrap();
        assert_eq!(a, b);
        let mut other = spec(2, 6, 0.2);
        other.seed = 43;
        let c = make_synthetic(&other, 40).unwrap();
        assert_ne!(a.inputs, c.inputs);
    }

    #[test]
    fn sample_seed_changes_noise_but_not_the_task() {
        // Zero-width pools expose the means directly: varying the sample
        // seed must leave them untouched, varying the task seed must not.
        let base = spec(3, 8, 0.0);
        let mut resampled = base.clone();
        resampled.seed = 999;
        assert_eq!(
            make_synthetic(&base, 3).unwrap().inputs,
            make_synthetic(&resampled, 3).unwrap().inputs,
        );
        let mut retasked = base.clone();
        retasked.task_seed = 8;
        assert_ne!(
            make_synthetic(&base, 3).unwrap().inputs,
            make_synthetic(&retasked, 3).unwrap().inputs,
        );
    }

    #[test]
    fn nearest_mean_classifier_separates_narrow_clusters() {
        // At cluster_std 0.1 with orthogonal unit means, the nearest-mean
        // rule recovers nearly all labels.
        let task = spec(4, 8, 0.1);
        let ds = make_synthetic(&task, 400).unwrap();
        let reference = make_synthetic(
            &SyntheticTaskSpec {
                cluster_std: 0.0,
                ..task
            },
            4,
        )
        .unwrap();
        let mut correct = 0;
        for i in 0..ds.len() {
            let x = ds.inputs.row(i);
            let best = (0..4)
                .min_by(|&a, &b| {
                    let da: f64 = x
                        .iter()
                        .zip(reference.inputs.row(a))
                        .map(|(u, v)| (u - v) * (u - v))
                        .sum();
                    let db: f64 = x
                        .iter()
                        .zip(reference.inputs.row(b))
                        .map(|(u, v)| (u - v) * (u - v))
                        .sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            if best == ds.label_index(i) {
                correct += 1;
            }
        }
        let accuracy = f64::from(correct) / 400.0;
        assert!(accuracy >= 0.95, "nearest-mean accuracy {accuracy}");
    }

    #[test]
    fn degenerate_specs_are_rejected() {
        assert!(make_synthetic(&spec(0, 4, 0.1), 10).is_err());
        assert!(make_synthetic(&spec(5, 4, 0.1), 10).is_err());
        assert!(make_synthetic(&spec(2, 4, -0.1), 10).is_err());
        assert!(make_synthetic(&spec(2, 4, 0.1), 0).is_err());
    }
}
