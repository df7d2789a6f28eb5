use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bptt::{SequenceBatch, Targets};
use crate::error::{Error, Result};
use crate::numerics::{read_matrix, write_matrix, Matrix, RngStream, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AddingSpec {
    pub sequence_length: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

impl AddingSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sequence_length < 2 {
            return Err(Error::Config(format!(
                "adding problem needs T >= 2, got {}",
                self.sequence_length
            )));
        }
        if self.train_size == 0 || self.test_size == 0 {
            return Err(Error::Config("adding problem split sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Raw samples: `values[n][t]` and the two marked positions of sample `n`.
struct Samples {
    values: Vec<Vec<f64>>,
    marks: Vec<(usize, usize)>,
}

fn draw(rng: &mut RngStream, t: usize, n: usize) -> Samples {
    let mut values = Vec::with_capacity(n);
    let mut marks = Vec::with_capacity(n);
    for _ in 0..n {
        values.push((0..t).map(|_| rng.uniform()).collect());
        let a = rng.below(t);
        let mut b = rng.below(t - 1);
        if b >= a {
            b += 1;
        }
        marks.push((a.min(b), a.max(b)));
    }
    Samples { values, marks }
}

fn to_batch<S: Scalar>(s: &Samples, t: usize) -> Result<SequenceBatch<S>> {
    let n = s.values.len();
    let marked = |i: usize, step: usize| s.marks[i].0 == step || s.marks[i].1 == step;
    let inputs = (0..t)
        .map(|step| {
            Matrix::from_fn(n, 2, |i, c| {
                if c == 0 {
                    S::of(s.values[i][step])
                } else if marked(i, step) {
                    S::one()
                } else {
                    S::zero()
                }
            })
        })
        .collect();
    let mask = Matrix::from_fn(t, n, |step, i| if marked(i, step) { S::one() } else { S::zero() });
    let targets = Matrix::from_fn(n, 1, |i, _| {
        let (a, b) = s.marks[i];
        S::of(s.values[i][a] + s.values[i][b])
    });
    SequenceBatch::new(inputs, Some(mask), Targets::Regression(targets))
}

/// Train and test splits, each from its own sub-stream of `spec.seed`.
/// Every step carries `[value, mark]`; the target is the sum of the two
/// marked values.
pub fn gen_adding<S: Scalar>(spec: &AddingSpec) -> Result<(SequenceBatch<S>, SequenceBatch<S>)> {
    spec.validate()?;
    let root = RngStream::new(spec.seed);
    let t = spec.sequence_length;
    let train = draw(&mut root.fork(0), t, spec.train_size);
    let test = draw(&mut root.fork(1), t, spec.test_size);
    Ok((to_batch(&train, t)?, to_batch(&test, t)?))
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    format: String,
    spec: AddingSpec,
    rng: String,
    files: Vec<String>,
}

const SIDECAR: &str = "adding.json";
const SPLITS: [&str; 2] = ["train.bin", "test.bin"];

fn write_split<S: Scalar>(path: &Path, batch: &SequenceBatch<S>) -> Result<()> {
    let (n, t) = (batch.batch_size(), batch.len());
    let values = Matrix::from_fn(n, t, |i, step| batch.inputs()[step].get(i, 0));
    let marks = Matrix::from_fn(n, t, |i, step| batch.inputs()[step].get(i, 1));
    let Targets::Regression(targets) = batch.targets() else {
        return Err(Error::Config("adding cache holds regression batches only".into()));
    };
    let mut w = BufWriter::new(File::create(path)?);
    write_matrix(&mut w, &values)?;
    write_matrix(&mut w, &marks)?;
    write_matrix(&mut w, targets)?;
    w.flush()?;
    Ok(())
}

fn read_split<S: Scalar>(path: &Path) -> Result<SequenceBatch<S>> {
    let mut r = BufReader::new(File::open(path)?);
    let values: Matrix<S> = read_matrix(&mut r)?;
    let marks: Matrix<S> = read_matrix(&mut r)?;
    let targets: Matrix<S> = read_matrix(&mut r)?;
    if marks.shape() != values.shape() || targets.shape() != (values.rows(), 1) {
        return Err(Error::Format(format!("{}: inconsistent adding split", path.display())));
    }
    let (n, t) = values.shape();
    let inputs = (0..t)
        .map(|step| Matrix::from_fn(n, 2, |i, c| if c == 0 { values.get(i, step) } else { marks.get(i, step) }))
        .collect();
    SequenceBatch::new(inputs, Some(marks.transpose()), Targets::Regression(targets))
}

/// Writes both splits as binary matrices (values, marks, targets) and a
/// JSON sidecar with the generation parameters.
pub fn save_adding<S: Scalar>(dir: &Path, spec: &AddingSpec, train: &SequenceBatch<S>, test: &SequenceBatch<S>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_split(&dir.join(SPLITS[0]), train)?;
    write_split(&dir.join(SPLITS[1]), test)?;
    let sidecar = Sidecar {
        format: "adding-v1".into(),
        spec: *spec,
        rng: RngStream::ALGORITHM.into(),
        files: SPLITS.iter().map(|s| s.to_string()).collect(),
    };
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(dir.join(SIDECAR), json + "\n")?;
    Ok(())
}

pub fn load_adding<S: Scalar>(dir: &Path) -> Result<(AddingSpec, SequenceBatch<S>, SequenceBatch<S>)> {
    let text = std::fs::read_to_string(dir.join(SIDECAR))?;
    let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| Error::Format(format!("{SIDECAR}: {e}")))?;
    if sidecar.format != "adding-v1" {
        return Err(Error::Format(format!("unknown adding cache format {:?}", sidecar.format)));
    }
    let train = read_split(&dir.join(SPLITS[0]))?;
    let test = read_split(&dir.join(SPLITS[1]))?;
    let spec = sidecar.spec;
    if train.batch_size() != spec.train_size || test.batch_size() != spec.test_size || train.len() != spec.sequence_length {
        return Err(Error::Format("adding cache does not match its sidecar".into()));
    }
    Ok((spec, train, test))
}
