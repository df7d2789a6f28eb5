//! Benchmark data: the adding problem and pixel-by-pixel digit sequences.

mod adding;
mod idx;
mod pixel;

pub use adding::{gen_adding, load_adding, save_adding, AddingSpec};
pub use idx::{load_idx_images, write_idx_images, write_idx_labels, ImageSet, IMAGE_MAGIC, LABEL_MAGIC};
pub use pixel::{downsample, to_pixel_sequence, Permutation};
