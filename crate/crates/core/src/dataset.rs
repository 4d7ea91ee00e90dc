//! MNIST IDX parsing, digit-subset extraction and label-balanced batching.
//!
//! IDX files are big-endian. Images carry magic `0x00000803` followed by
//! count, rows and cols; labels carry magic `0x00000801` followed by count.
//! Pixels and labels are unsigned bytes.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::SeededRng;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// The digits studied throughout this crate.
pub const DEFAULT_DIGITS: [u8; 3] = [1, 2, 6];

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawIdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl RawIdxImages {
    pub fn pixels_per_image(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let p = self.pixels_per_image();
        &self.pixels[i * p..(i + 1) * p]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawIdxLabels {
    pub labels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IdxFile {
    Images(RawIdxImages),
    Labels(RawIdxLabels),
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(Error::TruncatedPayload {
            expected: at + 4,
            found: bytes.len(),
        })
}

/// Decodes either kind of IDX file, dispatching on the magic number.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxFile> {
    match be_u32(bytes, 0)? {
        IMAGES_MAGIC => parse_idx_images(bytes).map(IdxFile::Images),
        LABELS_MAGIC => parse_idx_labels(bytes).map(IdxFile::Labels),
        found => Err(Error::BadMagic {
            expected: IMAGES_MAGIC,
            found,
        }),
    }
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<RawIdxImages> {
    let magic = be_u32(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::BadMagic {
            expected: IMAGES_MAGIC,
            found: magic,
        });
    }
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let payload = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::DatasetTooSmall("IDX dimensions overflow".into()))?;
    let expected = 16 + payload;
    if bytes.len() != expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: bytes.len(),
        });
    }
    Ok(RawIdxImages {
        count,
        rows,
        cols,
        pixels: bytes[16..].to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<RawIdxLabels> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(Error::BadMagic {
            expected: LABELS_MAGIC,
            found: magic,
        });
    }
    let count = be_u32(bytes, 4)? as usize;
    let expected = 8 + count;
    if bytes.len() != expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: bytes.len(),
        });
    }
    Ok(RawIdxLabels {
        labels: bytes[8..].to_vec(),
    })
}

/// Scaled inputs with contiguous class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    /// One example per row, components in `[0, 1]`.
    pub inputs: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    /// `digits[c]` is the original digit behind class index `c`.
    pub digits: Vec<u8>,
}

impl LabeledDataset {
    pub fn new(inputs: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::CountMismatch {
                images: inputs.rows(),
                labels: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Config(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Self {
            inputs,
            labels,
            num_classes,
            digits: (0..num_classes as u8).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Inputs and labels of the listed examples.
    pub fn gather(&self, idx: &[usize]) -> (Matrix, Vec<usize>) {
        (
            self.inputs.select_rows(idx),
            idx.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

/// Keeps only the digits in `keep`, relabels them `0..keep.len()` in sorted
/// digit order and scales pixels by `1/255`.
pub fn build_subset(
    images: &RawIdxImages,
    labels: &RawIdxLabels,
    keep: &[u8],
) -> Result<LabeledDataset> {
    if images.count != labels.labels.len() {
        return Err(Error::CountMismatch {
            images: images.count,
            labels: labels.labels.len(),
        });
    }
    let mut digits = keep.to_vec();
    digits.sort_unstable();
    digits.dedup();
    if digits.is_empty() {
        return Err(Error::Config("digit subset is empty".into()));
    }

    let dim = images.pixels_per_image();
    let mut data = Vec::new();
    let mut out_labels = Vec::new();
    for (i, &digit) in labels.labels.iter().enumerate() {
        if let Ok(class) = digits.binary_search(&digit) {
            data.extend(images.image(i).iter().map(|&p| f64::from(p) / 255.0));
            out_labels.push(class);
        }
    }
    let inputs = Matrix::from_vec(out_labels.len(), dim, data)?;
    Ok(LabeledDataset {
        inputs,
        labels: out_labels,
        num_classes: digits.len(),
        digits,
    })
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Loads the train and test subsets from the four standard IDX files in `dir`.
pub fn load_mnist_subset(dir: &Path, keep: &[u8]) -> Result<(LabeledDataset, LabeledDataset)> {
    let load = |img: &str, lab: &str| -> Result<LabeledDataset> {
        let images = parse_idx_images(&read(&dir.join(img))?)?;
        let labels = parse_idx_labels(&read(&dir.join(lab))?)?;
        build_subset(&images, &labels, keep)
    };
    Ok((
        load(TRAIN_IMAGES, TRAIN_LABELS)?,
        load(TEST_IMAGES, TEST_LABELS)?,
    ))
}

/// Serves minibatches whose per-class counts differ by at most one.
///
/// Each epoch reshuffles every class pool; a batch takes the next unused
/// examples of each class and the epoch ends as soon as some pool cannot fill
/// its share, so the trailing partial batch is dropped. Which classes receive
/// the extra example when `batch_size % K != 0` rotates from batch to batch.
#[derive(Debug, Clone)]
pub struct BalancedBatcher {
    batch_size: usize,
    rng: SeededRng,
    pools: Vec<Vec<usize>>,
    cursors: Vec<usize>,
    batch_in_epoch: usize,
    epoch: usize,
}

impl BalancedBatcher {
    pub fn new(data: &LabeledDataset, batch_size: usize, rng: SeededRng) -> Result<Self> {
        let k = data.num_classes;
        if batch_size < k {
            return Err(Error::Config(format!(
                "batch size {batch_size} is smaller than the class count {k}"
            )));
        }
        let mut pools = vec![Vec::new(); k];
        for (i, &l) in data.labels.iter().enumerate() {
            pools[l].push(i);
        }
        let per_class_max = batch_size.div_ceil(k);
        if let Some(c) = pools.iter().position(|p| p.len() < per_class_max) {
            return Err(Error::DatasetTooSmall(format!(
                "class {c} has {} examples, a batch needs up to {per_class_max}",
                pools[c].len()
            )));
        }
        let mut batcher = Self {
            batch_size,
            rng,
            cursors: vec![0; k],
            pools,
            batch_in_epoch: 0,
            epoch: 0,
        };
        batcher.shuffle_pools();
        Ok(batcher)
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Number of completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    fn shuffle_pools(&mut self) {
        for pool in &mut self.pools {
            self.rng.shuffle(pool);
        }
        self.cursors.iter_mut().for_each(|c| *c = 0);
        self.batch_in_epoch = 0;
    }

    fn quotas(&self) -> Vec<usize> {
        let k = self.pools.len();
        let base = self.batch_size / k;
        let extra = self.batch_size % k;
        let offset = self.batch_in_epoch % k;
        (0..k)
            .map(|c| base + usize::from((c + k - offset) % k < extra))
            .collect()
    }

    fn fits(&self, quotas: &[usize]) -> bool {
        self.pools
            .iter()
            .zip(&self.cursors)
            .zip(quotas)
            .all(|((p, &c), &q)| c + q <= p.len())
    }

    /// Indices of the next batch; starts a new epoch when the current one is
    /// exhausted.
    pub fn next_indices(&mut self) -> Vec<usize> {
        let mut quotas = self.quotas();
        if !self.fits(&quotas) {
            self.epoch += 1;
            self.shuffle_pools();
            quotas = self.quotas();
        }
        let mut idx = Vec::with_capacity(self.batch_size);
        for (c, &q) in quotas.iter().enumerate() {
            let start = self.cursors[c];
            idx.extend_from_slice(&self.pools[c][start..start + q]);
            self.cursors[c] += q;
        }
        self.batch_in_epoch += 1;
        idx
    }

    /// All full batches of one epoch, starting from a freshly shuffled pool.
    pub fn next_epoch(&mut self) -> Vec<Vec<usize>> {
        if self.batch_in_epoch > 0 {
            self.epoch += 1;
            self.shuffle_pools();
        }
        let mut out = Vec::new();
        loop {
            let quotas = self.quotas();
            if !self.fits(&quotas) {
                break;
            }
            out.push(self.next_indices());
        }
        out
    }

    pub fn next_batch(&mut self, data: &LabeledDataset) -> (Matrix, Vec<usize>) {
        let idx = self.next_indices();
        data.gather(&idx)
    }
}
