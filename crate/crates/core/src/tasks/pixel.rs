use serde::{Deserialize, Serialize};

use super::idx::ImageSet;
use crate::bptt::{SequenceBatch, Targets};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream, Scalar};

/// A bijection on `0..n`; applying it reads position `indices[k]` into
/// position `k`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutation {
    seed: Option<u64>,
    indices: Vec<usize>,
}

impl Permutation {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; indices.len()];
        for &i in &indices {
            if i >= seen.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Domain(format!("not a permutation of 0..{}", seen.len())));
            }
        }
        Ok(Permutation { seed: None, indices })
    }

    pub fn identity(n: usize) -> Self {
        Permutation {
            seed: None,
            indices: (0..n).collect(),
        }
    }

    pub fn random(n: usize, seed: u64) -> Self {
        Permutation {
            seed: Some(seed),
            indices: RngStream::new(seed).permutation(n),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.len()];
        for (k, &i) in self.indices.iter().enumerate() {
            inv[i] = k;
        }
        Permutation {
            seed: None,
            indices: inv,
        }
    }

    pub fn apply<T: Clone>(&self, items: &[T]) -> Result<Vec<T>> {
        if items.len() != self.len() {
            return Err(Error::shape(
                "Permutation::apply",
                format!("{} items for a permutation of {}", items.len(), self.len()),
            ));
        }
        Ok(self.indices.iter().map(|&i| items[i].clone()).collect())
    }
}

/// One pixel per step in row-major order (after `perm`, if given), with the
/// digit as class target.
pub fn to_pixel_sequence<S: Scalar>(images: &ImageSet, perm: Option<&Permutation>) -> Result<SequenceBatch<S>> {
    if images.rows != images.cols {
        return Err(Error::shape(
            "to_pixel_sequence",
            format!("images are {}x{}, expected square", images.rows, images.cols),
        ));
    }
    let t = images.rows * images.cols;
    let order: Vec<usize> = match perm {
        Some(p) if p.len() != t => {
            return Err(Error::shape(
                "to_pixel_sequence",
                format!("permutation of {} for {t} pixels", p.len()),
            ))
        }
        Some(p) => p.indices().to_vec(),
        None => (0..t).collect(),
    };
    let n = images.len();
    let inputs = order
        .iter()
        .map(|&px| Matrix::from_fn(n, 1, |i, _| S::of(images.pixels.get(i, px))))
        .collect();
    SequenceBatch::new(inputs, None, Targets::Classes(images.labels.clone()))
}

/// Block means over `factor x factor` tiles.
pub fn downsample(images: &ImageSet, factor: usize) -> Result<ImageSet> {
    if factor == 0 || !images.rows.is_multiple_of(factor) || !images.cols.is_multiple_of(factor) {
        return Err(Error::Config(format!(
            "downsample factor {factor} does not divide {}x{}",
            images.rows, images.cols
        )));
    }
    let (rows, cols) = (images.rows / factor, images.cols / factor);
    let area = (factor * factor) as f64;
    let pixels = Matrix::from_fn(images.len(), rows * cols, |i, k| {
        let (r, c) = (k / cols, k % cols);
        let src = images.pixels.row(i);
        let mut sum = 0.0;
        for dr in 0..factor {
            let base = (r * factor + dr) * images.cols + c * factor;
            sum += src[base..base + factor].iter().sum::<f64>();
        }
        sum / area
    });
    Ok(ImageSet {
        rows,
        cols,
        pixels,
        labels: images.labels.clone(),
    })
}
