use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bptt::{accuracy, clip_gradients, forward_sequence, loss, loss_and_gradients, Network, NetworkConfig, SequenceBatch, Targets};
use crate::error::{Error, Result};
use crate::numerics::{RngStream, Scalar};
use crate::optim::{apply_update, initialize, OptimState};

use super::checkpoint::save_checkpoint;
use super::config::{ExperimentConfig, Precision};
use super::data::{load_task, TaskData};
use super::metrics::{MetricsWriter, RunMetrics};

pub const CONFIG_ECHO: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const STATUS_FILE: &str = "status.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const PERMUTATION_FILE: &str = "permutation.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    EarlyStopped { best_epoch: usize },
    Diverged { epoch: usize, batch: Option<usize>, reason: String },
}

impl RunStatus {
    pub fn is_failure(&self) -> bool {
        matches!(self, RunStatus::Diverged { .. })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub metrics: RunMetrics,
    pub epochs_completed: usize,
    pub out_dir: PathBuf,
}

#[derive(Serialize)]
struct StatusFile<'a> {
    #[serde(flatten)]
    status: &'a RunStatus,
    epochs_completed: usize,
    seeds: super::config::Seeds,
    precision: Precision,
    parameter_count: usize,
}

/// Test-set metrics. `accuracy` is present for classification.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalMetrics {
    pub loss: f64,
    pub accuracy: Option<f64>,
    pub count: usize,
}

/// Loss (and accuracy) pooled over every sequence of every batch.
pub fn evaluate<S: Scalar>(net: &Network<S>, batches: &[SequenceBatch<S>]) -> Result<EvalMetrics> {
    if batches.is_empty() {
        return Err(Error::Config("evaluation needs at least one test sequence".into()));
    }
    let kind = net.head.loss_kind();
    let (mut weighted, mut correct, mut count) = (0.0, 0.0, 0usize);
    let mut classify = false;
    for b in batches {
        let (outputs, _) = forward_sequence(net, b)?;
        let n = b.batch_size();
        weighted += loss(kind, &outputs, b.targets())?.as_f64() * n as f64;
        if let Targets::Classes(labels) = b.targets() {
            classify = true;
            correct += (accuracy(&outputs, labels)?.as_f64() * n as f64).round();
        }
        count += n;
    }
    Ok(EvalMetrics {
        loss: weighted / count as f64,
        accuracy: classify.then(|| correct / count as f64),
        count,
    })
}

/// [`evaluate`] over consecutive slices of at most `chunk` sequences.
pub fn evaluate_split<S: Scalar>(net: &Network<S>, data: &SequenceBatch<S>, chunk: usize) -> Result<EvalMetrics> {
    let order: Vec<usize> = (0..data.batch_size()).collect();
    evaluate(net, &data.chunks(&order, chunk)?)
}

fn record_eval(sink: &mut MetricsWriter, epoch: usize, m: &EvalMetrics) -> Result<()> {
    match m.accuracy {
        None => sink.record(epoch, "test", "mse", m.loss),
        Some(acc) => {
            sink.record(epoch, "test", "loss", m.loss)?;
            sink.record(epoch, "test", "accuracy", acc)
        }
    }
}

/// Refuses to reuse a directory that already holds a run.
pub fn check_output_dir(dir: &Path) -> Result<()> {
    if dir.join(METRICS_FILE).exists() {
        return Err(Error::Config(format!("{} already holds a run", dir.display())));
    }
    Ok(())
}

/// Trains on `cfg` and writes the config echo, metrics, timings, status and
/// final checkpoint into `cfg.output.dir`.
pub fn run_experiment(cfg: &ExperimentConfig, config_text: &str) -> Result<RunOutcome> {
    cfg.validate()?;
    check_output_dir(&cfg.output.dir)?;
    match cfg.model.precision {
        Precision::F64 => run_typed::<f64>(cfg, config_text),
        Precision::F32 => run_typed::<f32>(cfg, config_text),
    }
}

fn network_config(cfg: &ExperimentConfig, input_dim: usize) -> NetworkConfig {
    let mut net = NetworkConfig::new(cfg.model.arch, input_dim, cfg.model.hidden, cfg.model.layers, cfg.head());
    if let Some(a) = cfg.model.transform_activation {
        net.transform_activation = a;
    }
    net
}

/// The network a run starts from.
pub fn initial_network<S: Scalar>(cfg: &ExperimentConfig, input_dim: usize) -> Result<Network<S>> {
    let mut rng = RngStream::new(cfg.seeds.model).fork(0);
    initialize(&network_config(cfg, input_dim), &cfg.init_plan()?, &mut rng)
}

fn run_typed<S: Scalar>(cfg: &ExperimentConfig, config_text: &str) -> Result<RunOutcome> {
    let data: TaskData<S> = load_task(cfg)?;
    let out = &cfg.output.dir;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join(CONFIG_ECHO), config_text)?;
    if let Some(p) = &data.permutation {
        let json = serde_json::to_string(p).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(out.join(PERMUTATION_FILE), json + "\n")?;
    }
    let mut sink = MetricsWriter::create(&out.join(METRICS_FILE))?;
    let mut timing = MetricsWriter::create(&out.join(TIMING_FILE))?;

    let mut net: Network<S> = initial_network(cfg, data.input_dim())?;
    let mut state = OptimState::new(&net);
    let shuffles = RngStream::new(cfg.seeds.model).fork(1);
    let train_cfg = &cfg.train;
    let clip = train_cfg.clip.map(S::of);
    let n_train = data.train.batch_size();
    let test_order: Vec<usize> = (0..data.test.batch_size()).collect();
    let test_batches = data.test.chunks(&test_order, train_cfg.eval_batch_size)?;

    let first = evaluate(&net, &test_batches)?;
    record_eval(&mut sink, 0, &first)?;
    let mut best = (first.loss, 0usize);
    let mut status = RunStatus::Completed;
    let mut epochs_completed = 0;

    'epochs: for epoch in 1..=train_cfg.max_epochs {
        let started = Instant::now();
        let order = shuffles.fork(epoch as u64).permutation(n_train);
        let batches = data.train.chunks(&order, cfg.optim.batch_size)?;
        let (mut loss_sum, mut norm_sum, mut norm_max) = (0.0, 0.0, 0.0f64);
        for (bi, batch) in batches.iter().enumerate() {
            let (value, grads, _) = loss_and_gradients(&net, batch)?;
            let norm = grads.norm().as_f64();
            if !value.is_finite() || !grads.is_finite() {
                let reason = if value.is_finite() { "non-finite gradient" } else { "non-finite loss" };
                status = RunStatus::Diverged {
                    epoch,
                    batch: Some(bi),
                    reason: reason.into(),
                };
                sink.record(epoch, "train", "diverged", 1.0)?;
                break 'epochs;
            }
            let grads = match clip {
                Some(c) => clip_gradients(grads, c)?,
                None => grads,
            };
            apply_update(&mut net, &grads, &mut state, &cfg.optim)?;
            loss_sum += value.as_f64() * batch.batch_size() as f64;
            norm_sum += norm;
            norm_max = norm_max.max(norm);
        }
        sink.record(epoch, "train", "loss", loss_sum / n_train as f64)?;
        sink.record(epoch, "train", "grad_norm_mean", norm_sum / batches.len() as f64)?;
        sink.record(epoch, "train", "grad_norm_max", norm_max)?;
        epochs_completed = epoch;

        if epoch % train_cfg.eval_every == 0 || epoch == train_cfg.max_epochs {
            let m = evaluate(&net, &test_batches)?;
            if !m.loss.is_finite() {
                status = RunStatus::Diverged {
                    epoch,
                    batch: None,
                    reason: "non-finite test loss".into(),
                };
                sink.record(epoch, "test", "diverged", 1.0)?;
                break;
            }
            record_eval(&mut sink, epoch, &m)?;
            if m.loss < best.0 {
                best = (m.loss, epoch);
            } else if let Some(p) = train_cfg.patience {
                if epoch - best.1 >= p * train_cfg.eval_every {
                    status = RunStatus::EarlyStopped { best_epoch: best.1 };
                    timing.record(epoch, "train", "seconds", started.elapsed().as_secs_f64())?;
                    break;
                }
            }
        }
        timing.record(epoch, "train", "seconds", started.elapsed().as_secs_f64())?;
    }

    if cfg.output.checkpoint && !status.is_failure() {
        save_checkpoint(&out.join(CHECKPOINT_FILE), &net, epochs_completed, Some((&cfg.optim, &state)))?;
    }
    let status_json = serde_json::to_string_pretty(&StatusFile {
        status: &status,
        epochs_completed,
        seeds: cfg.seeds,
        precision: cfg.model.precision,
        parameter_count: net.parameter_count(),
    })
    .map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(out.join(STATUS_FILE), status_json + "\n")?;
    Ok(RunOutcome {
        status,
        metrics: sink.into_metrics(),
        epochs_completed,
        out_dir: out.clone(),
    })
}
