//! Sweep execution: seed derivation, data preparation, single training
//! runs with kernel instrumentation, ensembling, and aggregation.
//!
//! Seed policy. Every RNG seed derives from the config's master seed via
//! [`mix_seed`]. Member `j` always initializes its network with
//! `mix_seed(master, "init", j)`, so a member's initialization is constant
//! across sweep values. What varies between members depends on the axis:
//! a width sweep fixes one training draw (`"data", 0`) and lets members
//! differ in initialization; a train-size sweep gives member `j` its own
//! training draw (`"data", j`); a keep-fraction sweep fixes the base
//! training draw and gives member `j` its own noise realization
//! (`"noise", j`). The test pool (`"test"`) and the probe subset
//! (`"probe"`) are fixed for the whole experiment and never augmented.
//! Synthetic tasks additionally share one class-mean frame (`"task", 0`)
//! across every pool, so a member's training set and the test pool it is
//! scored against always describe the same classification problem.

use crate::data::{
    filter_classes, load_cifar_binary, load_idx, make_synthetic, noisy_replacement, subsample,
    Dataset, SyntheticTaskSpec,
};
use crate::dynamics::{
    adaptation_rate, label_alignment, locate_min_test_loss, ntk_misalignment, trace_ratio,
    DynamicsTrace, KeyQuantities, LossPoint, NtkObservation, SnapshotSummary,
};
use crate::error::{Error, Result};
use crate::experiments::config::{
    DatasetConfig, DatasetKind, ExperimentConfig, OptimizerConfig, OptimizerKind, SweepAxis,
};
use crate::experiments::persist::RunRecord;
use crate::linalg::Matrix;
use crate::nn::{
    forward, init_params, loss_gradients, softmax_cross_entropy, AdamState, NetworkSpec,
    ParameterSet, SgdMomentumState,
};
use crate::ntk::compute_snapshot_pair;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

/// Derive a named seed from a master seed: a splitmix64 chain over the tag
/// bytes and index. Distinct (tag, k) pairs give independent streams.
pub fn mix_seed(master: u64, tag: &str, k: u64) -> u64 {
    let mut state = master ^ 0x9E37_79B9_7F4A_7C15;
    for &byte in tag.as_bytes() {
        state = splitmix64(state ^ u64::from(byte));
    }
    splitmix64(state ^ k)
}

fn splitmix64(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Dataset root resolution: config `data_dir`, then the `NTK_LENS_DATA_DIR`
/// environment variable, then the current directory.
pub fn data_root(dataset: &DatasetConfig) -> PathBuf {
    dataset
        .data_dir
        .clone()
        .or_else(|| std::env::var_os("NTK_LENS_DATA_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn resolve_data_file(dataset: &DatasetConfig, relative: &str) -> Result<PathBuf> {
    let path = data_root(dataset).join(relative);
    if !path.exists() {
        return Err(Error::DatasetNotFound { path });
    }
    Ok(path)
}

/// Train/test/probe triple for one run. The probe is a fixed subset of the
/// test pool; kernels are evaluated on it.
struct PreparedData {
    train: Dataset,
    test: Dataset,
    probe: Dataset,
}

/// Build the datasets for one (sweep point, member) job per the seed
/// policy in the module docs.
fn prepare_data(
    config: &ExperimentConfig,
    sweep_index: usize,
    member: usize,
) -> Result<PreparedData> {
    let master = config.ensemble.master_seed;
    let value = config.sweep.values[sweep_index];
    let member_u64 = member as u64;
    let data_seed = match config.sweep.axis {
        SweepAxis::TrainSizes => mix_seed(master, "data", member_u64),
        SweepAxis::Widths | SweepAxis::KeepFractions => mix_seed(master, "data", 0),
    };
    let train_size = match config.sweep.axis {
        SweepAxis::TrainSizes => value as usize,
        _ => config
            .dataset
            .train_size
            .expect("validated: train_size present unless swept"),
    };
    let (mut train, test_pool) = match config.dataset.kind {
        DatasetKind::Synthetic => {
            let base = SyntheticTaskSpec {
                n_classes: config.dataset.n_classes.expect("validated"),
                input_dim: config.dataset.input_dim.expect("validated"),
                cluster_std: config.dataset.cluster_std.expect("validated"),
                task_seed: mix_seed(master, "task", 0),
                seed: data_seed,
            };
            let train = make_synthetic(&base, train_size)?;
            let test_spec = SyntheticTaskSpec {
                seed: mix_seed(master, "test", 0),
                ..base
            };
            let test = make_synthetic(&test_spec, config.dataset.test_size)?;
            (train, test)
        }
        DatasetKind::Idx => {
            let field = |value: &Option<String>| -> String {
                value.clone().expect("validated: idx paths present")
            };
            let train_pool = load_idx(
                &resolve_data_file(&config.dataset, &field(&config.dataset.train_images))?,
                &resolve_data_file(&config.dataset, &field(&config.dataset.train_labels))?,
            )?;
            let test_pool = load_idx(
                &resolve_data_file(&config.dataset, &field(&config.dataset.test_images))?,
                &resolve_data_file(&config.dataset, &field(&config.dataset.test_labels))?,
            )?;
            subsample_pools(config, train_pool, test_pool, train_size, data_seed, master)?
        }
        DatasetKind::Cifar => {
            let resolve_all = |names: &Option<Vec<String>>| -> Result<Vec<PathBuf>> {
                names
                    .as_ref()
                    .expect("validated: cifar batches present")
                    .iter()
                    .map(|n| resolve_data_file(&config.dataset, n))
                    .collect()
            };
            let train_pool = load_cifar_binary(&resolve_all(&config.dataset.train_batches)?)?;
            let test_pool = load_cifar_binary(&resolve_all(&config.dataset.test_batches)?)?;
            subsample_pools(config, train_pool, test_pool, train_size, data_seed, master)?
        }
    };
    if config.sweep.axis == SweepAxis::KeepFractions {
        let noise_seed = mix_seed(master, "noise", member_u64);
        train = noisy_replacement(&train, value, config.dataset.noise_sigma, noise_seed)?;
    }
    let probe = if config.run.probe_size < test_pool.len() {
        subsample(&test_pool, config.run.probe_size, mix_seed(master, "probe", 0))?
    } else {
        test_pool.clone()
    };
    Ok(PreparedData {
        train,
        test: test_pool,
        probe,
    })
}

/// File-dataset path: optional class filter, then subsample the train pool
/// with the member's data seed and the test pool with the fixed test seed.
fn subsample_pools(
    config: &ExperimentConfig,
    mut train_pool: Dataset,
    mut test_pool: Dataset,
    train_size: usize,
    data_seed: u64,
    master: u64,
) -> Result<(Dataset, Dataset)> {
    if let Some(classes) = &config.dataset.classes {
        train_pool = filter_classes(&train_pool, classes)?;
        test_pool = filter_classes(&test_pool, classes)?;
    }
    let train = subsample(&train_pool, train_size, data_seed)?;
    let test = if config.dataset.test_size < test_pool.len() {
        subsample(&test_pool, config.dataset.test_size, mix_seed(master, "test", 0))?
    } else {
        test_pool
    };
    Ok((train, test))
}

/// Network spec for one sweep point: a width sweep replaces every hidden
/// width with the sweep value; other axes use the template as-is.
fn build_network_spec(
    config: &ExperimentConfig,
    sweep_index: usize,
    input_dim: usize,
    output_dim: usize,
    init_seed: u64,
) -> NetworkSpec {
    let hidden_widths = match config.sweep.axis {
        SweepAxis::Widths => {
            let width = config.sweep.values[sweep_index] as usize;
            vec![width; config.model.hidden_widths.len()]
        }
        _ => config.model.hidden_widths.clone(),
    };
    NetworkSpec {
        input_dim,
        hidden_widths,
        output_dim,
        activation: config.model.activation,
        parametrization: config.model.parametrization,
        init: config.model.init,
        seed: init_seed,
    }
}

enum Optimizer {
    Adam(AdamState),
    Sgd(SgdMomentumState),
}

impl Optimizer {
    fn new(config: &OptimizerConfig, dim: usize) -> Optimizer {
        match config.name {
            OptimizerKind::Adam => Optimizer::Adam(AdamState::new(dim)),
            OptimizerKind::Sgd => Optimizer::Sgd(SgdMomentumState::new(dim, config.momentum)),
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        match self {
            Optimizer::Adam(state) => state.step(params, grads, lr),
            Optimizer::Sgd(state) => state.step(params, grads, lr),
        }
    }
}

/// Mean cross-entropy loss of the network on a labeled batch.
fn batch_loss(
    spec: &NetworkSpec,
    params: &ParameterSet,
    inputs: &Matrix,
    labels: &Matrix,
) -> Result<f64> {
    let (logits, _) = forward(spec, params, inputs)?;
    let (loss, _) = softmax_cross_entropy(&logits, labels)?;
    Ok(loss)
}

/// Everything kept from one kernel snapshot: headline scalars plus the
/// raw-kernel eigenvectors needed for the misalignment chain.
struct EpochSnapshot {
    epoch: usize,
    trace: f64,
    gamma_raw: f64,
    gamma_norm: f64,
    label_alignment: f64,
    eigenvectors: Matrix,
}

fn take_snapshot(
    spec: &NetworkSpec,
    params: &ParameterSet,
    probe: &Dataset,
    epoch: usize,
) -> Result<EpochSnapshot> {
    let tag = format!("epoch_{epoch}");
    let pair = compute_snapshot_pair(spec, params, &probe.inputs, &tag)?;
    let alignment = label_alignment(&pair.raw.kernel, &probe.labels)?;
    Ok(EpochSnapshot {
        epoch,
        trace: pair.raw.trace,
        gamma_raw: pair.raw.effective_rank,
        gamma_norm: pair.normalized.effective_rank,
        label_alignment: alignment,
        eigenvectors: pair.raw.eigenvectors,
    })
}

fn summarize(snapshot: &EpochSnapshot, tag: &str) -> SnapshotSummary {
    SnapshotSummary {
        epoch: snapshot.epoch,
        epoch_tag: tag.to_string(),
        trace: snapshot.trace,
        effective_rank_raw: snapshot.gamma_raw,
        effective_rank: snapshot.gamma_norm,
        label_alignment: snapshot.label_alignment,
    }
}

/// Largest smoothing window used by the adaptation-rate pipeline.
pub const ADAPTATION_WINDOW_CAP: usize = 20;

/// Floor applied to train losses before taking logarithms, so a loss that
/// underflows to zero cannot poison the adaptation-rate series.
const LOG_LOSS_FLOOR: f64 = 1e-300;

/// Signed adaptation-rate series over recorded kernel observations, using
/// the same smoothing recipe as the run itself: window `min(20, n/2)`,
/// `None` where the centered windows do not fit or the loss plateaued.
///
/// # Errors
/// Propagates smoothing failures (structurally impossible for series
/// produced by [`run_single`], since the window is derived from the length).
pub fn observation_adaptation_series(
    observations: &[crate::dynamics::NtkObservation],
) -> Result<Vec<Option<f64>>> {
    let trace_series: Vec<f64> = observations.iter().map(|o| o.trace).collect();
    let log_loss_series: Vec<f64> = observations
        .iter()
        .map(|o| o.train_loss.max(LOG_LOSS_FLOOR).ln())
        .collect();
    let window = (observations.len() / 2).min(ADAPTATION_WINDOW_CAP);
    if window >= 1 {
        adaptation_rate(&trace_series, &log_loss_series, window)
    } else {
        Ok(vec![None; observations.len()])
    }
}

/// Train one member at one sweep point and record its full dynamics.
///
/// Training is full-batch; losses are recorded every epoch (epoch 0 is the
/// pre-training evaluation) and kernel snapshots every `ntk_every` epochs
/// plus epoch 0. The minimum-test-loss parameters are checkpointed during
/// the run and their kernel is computed post hoc at the exact argmin, then
/// merged into the observation series. A non-finite loss flags the record
/// failed and truncates the series at the last finite epoch.
///
/// # Errors
/// Fails on invalid configs/indices or hard numerical errors outside the
/// divergence protocol (for example a non-finite loss at initialization).
pub fn run_single(
    config: &ExperimentConfig,
    sweep_index: usize,
    member: usize,
) -> Result<RunRecord> {
    let started = Instant::now();
    config.validate()?;
    if sweep_index >= config.sweep.values.len() {
        return Err(Error::InvalidArgument {
            op: "run_single",
            reason: format!(
                "sweep index {sweep_index} out of range for {} values",
                config.sweep.values.len()
            ),
        });
    }
    if member >= config.ensemble.count {
        return Err(Error::InvalidArgument {
            op: "run_single",
            reason: format!(
                "member {member} out of range for ensemble of {}",
                config.ensemble.count
            ),
        });
    }
    let master = config.ensemble.master_seed;
    let data = prepare_data(config, sweep_index, member)?;
    let init_seed = mix_seed(master, "init", member as u64);
    let spec = build_network_spec(
        config,
        sweep_index,
        data.train.input_dim(),
        data.train.n_classes(),
        init_seed,
    );
    let mut params = init_params(&spec)?;
    let mut optimizer = Optimizer::new(&config.optimizer, params.len());
    let lr = config.lr_for_point(sweep_index);

    let initial_train_loss = batch_loss(&spec, &params, &data.train.inputs, &data.train.labels)?;
    let initial_test_loss = batch_loss(&spec, &params, &data.test.inputs, &data.test.labels)?;
    if !initial_train_loss.is_finite() || !initial_test_loss.is_finite() {
        return Err(Error::NonFinite {
            context: "loss at initialization".to_string(),
        });
    }
    let mut losses = vec![LossPoint {
        epoch: 0,
        train_loss: initial_train_loss,
        test_loss: initial_test_loss,
    }];
    let mut snapshots = vec![take_snapshot(&spec, &params, &data.probe, 0)?];
    let mut best_test_loss = initial_test_loss;
    let mut best_epoch = 0usize;
    let mut best_params = params.clone();
    let mut failed = false;

    for epoch in 1..=config.run.epochs {
        let (_, grads) = loss_gradients(&spec, &params, &data.train.inputs, &data.train.labels)?;
        optimizer.step(&mut params.values, &grads, lr);
        let train_loss = batch_loss(&spec, &params, &data.train.inputs, &data.train.labels)?;
        let test_loss = batch_loss(&spec, &params, &data.test.inputs, &data.test.labels)?;
        if !train_loss.is_finite() || !test_loss.is_finite() {
            failed = true;
            break;
        }
        losses.push(LossPoint {
            epoch,
            train_loss,
            test_loss,
        });
        if test_loss < best_test_loss {
            best_test_loss = test_loss;
            best_epoch = epoch;
            best_params = params.clone();
        }
        if epoch % config.run.ntk_every == 0 {
            snapshots.push(take_snapshot(&spec, &params, &data.probe, epoch)?);
        }
    }

    let min_epoch = locate_min_test_loss(&losses)?;
    debug_assert_eq!(min_epoch, best_epoch);
    if !snapshots.iter().any(|s| s.epoch == min_epoch) {
        let min_snapshot = take_snapshot(&spec, &best_params, &data.probe, min_epoch)?;
        let position = snapshots.partition_point(|s| s.epoch < min_epoch);
        snapshots.insert(position, min_snapshot);
    }

    let mut observations = Vec::with_capacity(snapshots.len());
    for (i, snapshot) in snapshots.iter().enumerate() {
        let misalignment = if i == 0 {
            0.0
        } else {
            let previous = &snapshots[i - 1];
            let k = (previous.gamma_norm.round() as usize)
                .max(1)
                .min(previous.eigenvectors.cols());
            ntk_misalignment(&previous.eigenvectors, &snapshot.eigenvectors, k)?
        };
        let loss_point = &losses[snapshot.epoch];
        observations.push(NtkObservation {
            epoch: snapshot.epoch,
            train_loss: loss_point.train_loss,
            test_loss: loss_point.test_loss,
            trace: snapshot.trace,
            effective_rank: snapshot.gamma_norm,
            label_alignment: snapshot.label_alignment,
            misalignment,
        });
    }

    let min_position = snapshots
        .iter()
        .position(|s| s.epoch == min_epoch)
        .expect("minimum snapshot merged above");
    let chi_series = observation_adaptation_series(&observations)?;
    let adaptation_rate_min = chi_series[..=min_position]
        .iter()
        .rev()
        .flatten()
        .copied()
        .next()
        .or_else(|| chi_series.iter().flatten().copied().next());

    let init_summary = summarize(&snapshots[0], "init");
    let min_summary = summarize(&snapshots[min_position], "min_test_loss");
    let key_quantities = KeyQuantities {
        trace_init: init_summary.trace,
        adaptation_rate_min,
        effective_rank_min: min_summary.effective_rank,
        trace_min: min_summary.trace,
        trace_ratio: trace_ratio(init_summary.trace, min_summary.trace)?,
    };
    let trace = DynamicsTrace {
        losses,
        observations,
        init: init_summary,
        min_test_loss: min_summary,
    };
    trace.validate()?;
    Ok(RunRecord {
        config_hash: config.hash(),
        sweep_value: config.sweep.values[sweep_index],
        member,
        seed: mix_seed(master, "member", member as u64),
        failed,
        trace,
        key_quantities,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        version: crate::VERSION.to_string(),
    })
}

/// Mean, standard error, and sample count of one aggregated metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricStat {
    /// Sample mean over non-failed members.
    pub mean: f64,
    /// Standard error of the mean (sample std / √n; zero for n = 1).
    pub stderr: f64,
    /// Number of members contributing.
    pub n: usize,
}

fn metric_stat(values: &[f64]) -> MetricStat {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let stderr = if n > 1 {
        let variance =
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
        (variance / n as f64).sqrt()
    } else {
        0.0
    };
    MetricStat { mean, stderr, n }
}

/// Ensemble aggregate for one sweep point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsemblePoint {
    /// Sweep-axis value.
    pub sweep_value: f64,
    /// Members attempted (failed ones included).
    pub member_count: usize,
    /// Members excluded for divergence.
    pub failed_count: usize,
    /// Test loss at the argmin epoch.
    pub min_test_loss: MetricStat,
    /// Kernel trace at initialization.
    pub trace_init: MetricStat,
    /// Kernel trace at minimum test loss.
    pub trace_min: MetricStat,
    /// Trace ratio β.
    pub beta: MetricStat,
    /// Effective rank at minimum test loss.
    pub gamma_min: MetricStat,
    /// Signed adaptation rate at minimum test loss, over members where it
    /// is defined; absent when no member defines it.
    pub chi_min: Option<MetricStat>,
    /// Kernel–label alignment at minimum test loss.
    pub label_alignment_min: MetricStat,
    /// Argmin epoch.
    pub epochs_to_min: MetricStat,
}

/// Aggregate one sweep point's member records: failed members are excluded
/// from the statistics but counted. Records are keyed by seed before
/// folding, so aggregation is invariant to input order.
///
/// # Errors
/// Fails when `records` is empty, mixes sweep values, or contains no
/// non-failed member.
pub fn aggregate_ensemble(records: &[RunRecord]) -> Result<EnsemblePoint> {
    let first = records.first().ok_or_else(|| Error::Records {
        message: "cannot aggregate an empty ensemble".to_string(),
    })?;
    let sweep_value = first.sweep_value;
    if records.iter().any(|r| r.sweep_value != sweep_value) {
        return Err(Error::Records {
            message: "ensemble mixes sweep values".to_string(),
        });
    }
    let mut ok_records: Vec<&RunRecord> = records.iter().filter(|r| !r.failed).collect();
    let failed_count = records.len() - ok_records.len();
    if ok_records.is_empty() {
        return Err(Error::Records {
            message: format!("all {} members failed at sweep value {sweep_value}", records.len()),
        });
    }
    ok_records.sort_by_key(|r| r.seed);
    let collect = |f: &dyn Fn(&RunRecord) -> f64| -> Vec<f64> {
        ok_records.iter().map(|r| f(r)).collect()
    };
    let min_losses: Result<Vec<f64>> = ok_records
        .iter()
        .map(|r| {
            r.min_test_loss().ok_or_else(|| Error::Records {
                message: format!("record for seed {} lacks its argmin loss point", r.seed),
            })
        })
        .collect();
    let chi_values: Vec<f64> = ok_records
        .iter()
        .filter_map(|r| r.key_quantities.adaptation_rate_min)
        .collect();
    Ok(EnsemblePoint {
        sweep_value,
        member_count: records.len(),
        failed_count,
        min_test_loss: metric_stat(&min_losses?),
        trace_init: metric_stat(&collect(&|r| r.key_quantities.trace_init)),
        trace_min: metric_stat(&collect(&|r| r.key_quantities.trace_min)),
        beta: metric_stat(&collect(&|r| r.key_quantities.trace_ratio)),
        gamma_min: metric_stat(&collect(&|r| r.key_quantities.effective_rank_min)),
        chi_min: if chi_values.is_empty() {
            None
        } else {
            Some(metric_stat(&chi_values))
        },
        label_alignment_min: metric_stat(&collect(&|r| r.trace.min_test_loss.label_alignment)),
        epochs_to_min: metric_stat(&collect(&|r| r.trace.min_test_loss.epoch as f64)),
    })
}

/// Group records by sweep value and aggregate each group, ordered by value.
///
/// # Errors
/// Propagates [`aggregate_ensemble`] errors for any group.
pub fn aggregate_sweep(records: &[RunRecord]) -> Result<Vec<EnsemblePoint>> {
    let mut by_value: Vec<(u64, Vec<RunRecord>)> = Vec::new();
    for record in records {
        let key = record.sweep_value.to_bits();
        match by_value.iter_mut().find(|(k, _)| *k == key) {
            Some((_, group)) => group.push(record.clone()),
            None => by_value.push((key, vec![record.clone()])),
        }
    }
    by_value.sort_by(|a, b| f64::from_bits(a.0).total_cmp(&f64::from_bits(b.0)));
    by_value
        .iter()
        .map(|(_, group)| aggregate_ensemble(group))
        .collect()
}

/// Run all members of one sweep point sequentially and aggregate them.
///
/// # Errors
/// Propagates run and aggregation errors (including "all members failed").
pub fn run_ensemble(
    config: &ExperimentConfig,
    sweep_index: usize,
) -> Result<(Vec<RunRecord>, EnsemblePoint)> {
    let mut records = Vec::with_capacity(config.ensemble.count);
    for member in 0..config.ensemble.count {
        records.push(run_single(config, sweep_index, member)?);
    }
    let point = aggregate_ensemble(&records)?;
    Ok((records, point))
}

/// Run every (sweep point, member) job not in `skip`, with up to `jobs`
/// worker threads. `skip` holds `(sweep_value.to_bits(), seed)` pairs of
/// already-completed runs. `on_record` is called once per finished record;
/// calls are serialized, so the callback may write to shared state without
/// its own locking. Returned records are sorted by (sweep value, member)
/// regardless of completion order.
///
/// # Errors
/// Propagates the first job or callback error; remaining jobs are
/// cancelled at the next job boundary.
pub fn run_sweep(
    config: &ExperimentConfig,
    jobs: usize,
    skip: &HashSet<(u64, u64)>,
    on_record: &(dyn Fn(&RunRecord) -> Result<()> + Sync),
) -> Result<Vec<RunRecord>> {
    config.validate()?;
    let master = config.ensemble.master_seed;
    let mut job_list = Vec::new();
    for sweep_index in 0..config.sweep.values.len() {
        for member in 0..config.ensemble.count {
            let key = (
                config.sweep.values[sweep_index].to_bits(),
                mix_seed(master, "member", member as u64),
            );
            if !skip.contains(&key) {
                job_list.push((sweep_index, member));
            }
        }
    }
    if job_list.is_empty() {
        return Ok(Vec::new());
    }
    let workers = jobs.max(1).min(job_list.len());
    let mut records = if workers == 1 {
        let mut records = Vec::with_capacity(job_list.len());
        for &(sweep_index, member) in &job_list {
            let record = run_single(config, sweep_index, member)?;
            on_record(&record)?;
            records.push(record);
        }
        records
    } else {
        run_jobs_parallel(config, &job_list, workers, on_record)?
    };
    records.sort_by(|a, b| {
        a.sweep_value
            .total_cmp(&b.sweep_value)
            .then(a.member.cmp(&b.member))
    });
    Ok(records)
}

fn run_jobs_parallel(
    config: &ExperimentConfig,
    job_list: &[(usize, usize)],
    workers: usize,
    on_record: &(dyn Fn(&RunRecord) -> Result<()> + Sync),
) -> Result<Vec<RunRecord>> {
    let next_job = AtomicUsize::new(0);
    let cancelled = AtomicBool::new(false);
    let output: Mutex<(Vec<RunRecord>, Option<Error>)> = Mutex::new((Vec::new(), None));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if cancelled.load(Ordering::Relaxed) {
                    break;
                }
                let index = next_job.fetch_add(1, Ordering::Relaxed);
                let Some(&(sweep_index, member)) = job_list.get(index) else {
                    break;
                };
                match run_single(config, sweep_index, member) {
                    Ok(record) => {
                        let mut guard = output.lock().expect("runner mutex");
                        if let Err(e) = on_record(&record) {
                            guard.1.get_or_insert(e);
                            cancelled.store(true, Ordering::Relaxed);
                            break;
                        }
                        guard.0.push(record);
                    }
                    Err(e) => {
                        output.lock().expect("runner mutex").1.get_or_insert(e);
                        cancelled.store(true, Ordering::Relaxed);
                        break;
                    }
                }
            });
        }
    });
    let (records, error) = output.into_inner().expect("runner mutex");
    match error {
        Some(e) => Err(e),
        None => Ok(records),
    }
}

/// Fraction of the epoch budget below which an argmin epoch draws a
/// warning (the protocol expects the minimum late in training).
pub const BUDGET_WARNING_FRACTION: f64 = 0.4;

/// Warnings for runs whose minimum test loss falls outside
/// `[0.4, 1.0] ×` the epoch budget — a sign the learning rate or budget
/// needs retuning for that sweep point.
pub fn budget_warnings(config: &ExperimentConfig, records: &[RunRecord]) -> Vec<String> {
    let budget = config.run.epochs as f64;
    records
        .iter()
        .filter(|r| !r.failed)
        .filter(|r| (r.trace.min_test_loss.epoch as f64) < BUDGET_WARNING_FRACTION * budget)
        .map(|r| {
            format!(
                "sweep value {} member {}: minimum test loss at epoch {} of {} (outside [{}, 1.0] x budget)",
                r.sweep_value,
                r.member,
                r.trace.min_test_loss.epoch,
                config.run.epochs,
                BUDGET_WARNING_FRACTION
            )
        })
        .collect()
}
