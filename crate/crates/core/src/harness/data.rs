use crate::bptt::SequenceBatch;
use crate::error::{Error, Result};
use crate::numerics::Scalar;
use crate::tasks::{downsample, gen_adding, load_idx_images, to_pixel_sequence, ImageSet, Permutation};

use super::config::{ExperimentConfig, TaskConfig};

/// Materialized splits of one task.
#[derive(Clone, Debug)]
pub struct TaskData<S> {
    pub train: SequenceBatch<S>,
    pub test: SequenceBatch<S>,
    pub permutation: Option<Permutation>,
}

impl<S: Scalar> TaskData<S> {
    pub fn input_dim(&self) -> usize {
        self.train.input_dim()
    }
}

/// Train and test image subsets after downsampling.
pub fn pixel_splits(cfg: &ExperimentConfig) -> Result<(ImageSet, ImageSet)> {
    let TaskConfig::Pixel {
        images,
        labels,
        downsample: factor,
        train_size,
        test_size,
        ..
    } = &cfg.task
    else {
        return Err(Error::Config("not a pixel task".into()));
    };
    let all = load_idx_images(images, labels)?;
    let n = all.len();
    if train_size + test_size > n {
        return Err(Error::Config(format!(
            "{train_size} train + {test_size} test images requested, {n} available"
        )));
    }
    let train = downsample(&all.slice(0..*train_size)?, *factor)?;
    let test = downsample(&all.slice(n - test_size..n)?, *factor)?;
    Ok((train, test))
}

pub fn permutation_for(cfg: &ExperimentConfig, side: usize) -> Option<Permutation> {
    match cfg.task {
        TaskConfig::Pixel {
            permuted: true,
            permutation_seed: Some(seed),
            ..
        } => Some(Permutation::random(side * side, seed)),
        _ => None,
    }
}

pub fn load_task<S: Scalar>(cfg: &ExperimentConfig) -> Result<TaskData<S>> {
    if let Some(spec) = cfg.adding_spec() {
        let (train, test) = gen_adding(&spec)?;
        return Ok(TaskData {
            train,
            test,
            permutation: None,
        });
    }
    let (train, test) = pixel_splits(cfg)?;
    let permutation = permutation_for(cfg, train.rows);
    Ok(TaskData {
        train: to_pixel_sequence(&train, permutation.as_ref())?,
        test: to_pixel_sequence(&test, permutation.as_ref())?,
        permutation,
    })
}
