//! IDX files: a big-endian `u32` magic (`0x803` images, `0x801` labels),
//! big-endian `u32` dimensions, then unsigned bytes. Gzip input is detected
//! by its signature.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Labelled grayscale images, one flattened row-major image per row of
/// `pixels`, scaled to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSet {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Matrix<f64>,
    pub labels: Vec<usize>,
}

impl ImageSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Image `i` as a `rows x cols` matrix.
    pub fn image(&self, i: usize) -> Matrix<f64> {
        Matrix::from_vec(self.rows, self.cols, self.pixels.row(i).to_vec()).unwrap()
    }

    /// The images at `range`, in order.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.end > self.len() || range.start >= range.end {
            return Err(Error::Config(format!("image range {range:?} of {}", self.len())));
        }
        let width = self.rows * self.cols;
        let data = self.pixels.as_slice()[range.start * width..range.end * width].to_vec();
        Ok(ImageSet {
            rows: self.rows,
            cols: self.cols,
            pixels: Matrix::from_vec(range.len(), width, data)?,
            labels: self.labels[range].to_vec(),
        })
    }
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)?.read_to_end(&mut raw)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        return Ok(out);
    }
    Ok(raw)
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<usize> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]) as usize)
        .ok_or_else(|| Error::Format(format!("{}: truncated header", path.display())))
}

fn parse(bytes: &[u8], magic: u32, dims: usize, path: &Path) -> Result<(Vec<usize>, Vec<u8>)> {
    let found = be_u32(bytes, 0, path)?;
    if found != magic as usize {
        return Err(Error::Format(format!(
            "{}: magic {found:#010x}, expected {magic:#010x}",
            path.display()
        )));
    }
    let shape = (0..dims).map(|i| be_u32(bytes, 4 + 4 * i, path)).collect::<Result<Vec<_>>>()?;
    let payload = &bytes[4 + 4 * dims..];
    let expected = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
    if expected != Some(payload.len()) {
        return Err(Error::Format(format!(
            "{}: header {shape:?} promises {expected:?} bytes, payload has {}",
            path.display(),
            payload.len()
        )));
    }
    Ok((shape, payload.to_vec()))
}

/// Reads an image file and its label file; bytes are divided by 255.
pub fn load_idx_images(images: &Path, labels: &Path) -> Result<ImageSet> {
    let (shape, pixels) = parse(&read_all(images)?, IMAGE_MAGIC, 3, images)?;
    let (lshape, lbytes) = parse(&read_all(labels)?, LABEL_MAGIC, 1, labels)?;
    let (n, rows, cols) = (shape[0], shape[1], shape[2]);
    if lshape[0] != n {
        return Err(Error::Format(format!("{n} images but {} labels", lshape[0])));
    }
    let data = pixels.iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok(ImageSet {
        rows,
        cols,
        pixels: Matrix::from_vec(n, rows * cols, data)?,
        labels: lbytes.into_iter().map(usize::from).collect(),
    })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let gz = path.extension().is_some_and(|e| e == "gz");
    let file = File::create(path)?;
    if gz {
        let mut enc = GzEncoder::new(file, Compression::default());
        enc.write_all(bytes)?;
        enc.finish()?;
    } else {
        let mut file = file;
        file.write_all(bytes)?;
    }
    Ok(())
}

/// Writes raw bytes in IDX layout; gzip when the path ends in `.gz`.
pub fn write_idx_images(path: &Path, rows: usize, cols: usize, images: &[Vec<u8>]) -> Result<()> {
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    out.extend(IMAGE_MAGIC.to_be_bytes());
    for d in [images.len(), rows, cols] {
        out.extend(u32::try_from(d).map_err(|_| Error::Domain("IDX dimension overflow".into()))?.to_be_bytes());
    }
    for img in images {
        if img.len() != rows * cols {
            return Err(Error::shape("write_idx_images", format!("image of {} bytes", img.len())));
        }
        out.extend_from_slice(img);
    }
    write_bytes(path, &out)
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend(LABEL_MAGIC.to_be_bytes());
    out.extend(
        u32::try_from(labels.len())
            .map_err(|_| Error::Domain("IDX dimension overflow".into()))?
            .to_be_bytes(),
    );
    out.extend_from_slice(labels);
    write_bytes(path, &out)
}
