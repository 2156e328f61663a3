//! Binary MNIST: IDX ingestion, 0/1 filtering, class balancing, batching.
//!
//! The prepared-data cache is a flat little-endian file:
//!
//! ```text
//! offset  size           field
//! 0       8              magic  b"QGANMN01"
//! 8       4   u32        record count N
//! 12      4   u32        pixels per record (784)
//! 16      N   u8         labels
//! 16+N    N*784*4 f32    normalized pixels, record-major
//! ```

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const IMAGE_MAGIC: u32 = 2051;
pub const LABEL_MAGIC: u32 = 2049;
pub const IMAGE_SIDE: usize = 28;
pub const PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;
pub const CACHE_MAGIC: &[u8; 8] = b"QGANMN01";

const PIXEL_MIN: f64 = 0.0;
const PIXEL_MAX: f64 = 255.0;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("wrong magic in {path}: expected {expected}, found {found}")]
    WrongMagic { path: PathBuf, expected: u32, found: u32 },
    #[error("truncated file {path}: need {needed} bytes, have {actual}")]
    Truncated {
        path: PathBuf,
        needed: usize,
        actual: usize,
    },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("images are {rows}x{cols}, expected 28x28")]
    ImageShape { rows: usize, cols: usize },
    #[error("no samples with label {0}")]
    EmptyClass(u8),
    #[error("batch size {batch} exceeds dataset size {len}")]
    BatchTooLarge { batch: usize, len: usize },
    #[error("batch size must be at least 1")]
    ZeroBatch,
    #[error("malformed dataset cache {path}: {reason}")]
    BadCache { path: PathBuf, reason: String },
}

/// Raw IDX contents: `count` images of 28×28 bytes plus labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawMnist {
    pub images: Vec<u8>,
    pub labels: Vec<u8>,
}

impl RawMnist {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        &self.images[i * PIXELS..(i + 1) * PIXELS]
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, DatasetError> {
    fs::read(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32, DatasetError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| DatasetError::Truncated {
            path: path.to_path_buf(),
            needed: offset + 4,
            actual: bytes.len(),
        })
}

/// Parses an IDX image file body; returns (count, pixel bytes).
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<(usize, Vec<u8>), DatasetError> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IMAGE_MAGIC {
        return Err(DatasetError::WrongMagic {
            path: path.to_path_buf(),
            expected: IMAGE_MAGIC,
            found: magic,
        });
    }
    let count = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    if rows != IMAGE_SIDE || cols != IMAGE_SIDE {
        return Err(DatasetError::ImageShape { rows, cols });
    }
    let needed = 16 + count * PIXELS;
    if bytes.len() < needed {
        return Err(DatasetError::Truncated {
            path: path.to_path_buf(),
            needed,
            actual: bytes.len(),
        });
    }
    Ok((count, bytes[16..needed].to_vec()))
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>, DatasetError> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != LABEL_MAGIC {
        return Err(DatasetError::WrongMagic {
            path: path.to_path_buf(),
            expected: LABEL_MAGIC,
            found: magic,
        });
    }
    let count = be_u32(bytes, 4, path)? as usize;
    let needed = 8 + count;
    if bytes.len() < needed {
        return Err(DatasetError::Truncated {
            path: path.to_path_buf(),
            needed,
            actual: bytes.len(),
        });
    }
    Ok(bytes[8..needed].to_vec())
}

pub fn parse_idx(images_path: &Path, labels_path: &Path) -> Result<RawMnist, DatasetError> {
    let (count, images) = parse_idx_images(&read_file(images_path)?, images_path)?;
    let labels = parse_idx_labels(&read_file(labels_path)?, labels_path)?;
    if count != labels.len() {
        return Err(DatasetError::CountMismatch {
            images: count,
            labels: labels.len(),
        });
    }
    Ok(RawMnist { images, labels })
}

/// Maps a pixel byte onto `[-1, 1]` with the fixed MNIST range 0..=255.
pub fn normalize(pixel: u8) -> f64 {
    (pixel as f64 - PIXEL_MIN) / (PIXEL_MAX - PIXEL_MIN) * 2.0 - 1.0
}

pub fn denormalize(x: f64) -> f64 {
    (x + 1.0) / 2.0 * (PIXEL_MAX - PIXEL_MIN) + PIXEL_MIN
}

/// Nearest byte for a (possibly out-of-range) normalized value.
pub fn to_byte(x: f64) -> u8 {
    denormalize(x).round().clamp(0.0, 255.0) as u8
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub pixels: Vec<f32>,
    pub label: u8,
}

/// Equal numbers of zeros and ones, pixels normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct BalancedDataset {
    records: Vec<ImageRecord>,
}

impl BalancedDataset {
    fn from_records(records: Vec<ImageRecord>) -> Self {
        Self { records }
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `[count(0), count(1)]`.
    pub fn class_counts(&self) -> [usize; 2] {
        let ones = self.records.iter().filter(|r| r.label == 1).count();
        [self.records.len() - ones, ones]
    }

    fn subset_indices(&self, per_class: usize, seed: u64) -> Result<Vec<usize>, DatasetError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut keep = Vec::with_capacity(2 * per_class);
        for label in [0u8, 1] {
            let idx: Vec<usize> = (0..self.records.len())
                .filter(|&i| self.records[i].label == label)
                .collect();
            if idx.is_empty() || idx.len() < per_class {
                return Err(DatasetError::EmptyClass(label));
            }
            keep.extend(
                rand::seq::index::sample(&mut rng, idx.len(), per_class)
                    .into_iter()
                    .map(|j| idx[j]),
            );
        }
        keep.sort_unstable();
        Ok(keep)
    }

    fn select(&self, indices: impl IntoIterator<Item = usize>) -> Self {
        Self::from_records(indices.into_iter().map(|i| self.records[i].clone()).collect())
    }

    /// A balanced subset with `per_class` records of each label, drawn
    /// without replacement.
    pub fn balanced_subset(&self, per_class: usize, seed: u64) -> Result<Self, DatasetError> {
        Ok(self.select(self.subset_indices(per_class, seed)?))
    }

    /// Splits off `per_class` records of each label; returns `(rest, taken)`.
    pub fn split_per_class(&self, per_class: usize, seed: u64) -> Result<(Self, Self), DatasetError> {
        let taken = self.subset_indices(per_class, seed)?;
        let rest = (0..self.records.len()).filter(|i| taken.binary_search(i).is_err());
        Ok((self.select(rest), self.select(taken)))
    }

    /// All records as one `len × 784` matrix.
    pub fn pixel_matrix(&self) -> DMatrix<f64> {
        self.rows_matrix(&(0..self.records.len()).collect::<Vec<_>>())
    }

    fn rows_matrix(&self, rows: &[usize]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(rows.len(), PIXELS);
        for (r, &i) in rows.iter().enumerate() {
            for (c, &v) in self.records[i].pixels.iter().enumerate() {
                m[(r, c)] = v as f64;
            }
        }
        m
    }

    /// Shuffled full batches for one epoch. The permutation depends only on
    /// `(seed, epoch)`; the final partial batch is dropped.
    pub fn epoch_batches(&self, batch_size: usize, seed: u64, epoch: u64) -> Result<EpochBatches<'_>, DatasetError> {
        if batch_size == 0 {
            return Err(DatasetError::ZeroBatch);
        }
        if batch_size > self.records.len() {
            return Err(DatasetError::BatchTooLarge {
                batch: batch_size,
                len: self.records.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch);
        let mut order: Vec<usize> = (0..self.records.len()).collect();
        order.shuffle(&mut rng);
        Ok(EpochBatches {
            data: self,
            order,
            batch_size,
            next: 0,
        })
    }

    pub fn batches_per_epoch(&self, batch_size: usize) -> usize {
        self.records.len().checked_div(batch_size).unwrap_or(0)
    }

    pub fn write_cache(&self, path: &Path) -> Result<(), DatasetError> {
        let io_err = |source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err)?;
        }
        let mut buf = Vec::with_capacity(16 + self.records.len() * (1 + PIXELS * 4));
        buf.extend_from_slice(CACHE_MAGIC);
        buf.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        buf.extend_from_slice(&(PIXELS as u32).to_le_bytes());
        buf.extend(self.records.iter().map(|r| r.label));
        for r in &self.records {
            for v in &r.pixels {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut file = fs::File::create(path).map_err(io_err)?;
        file.write_all(&buf).map_err(io_err)
    }

    pub fn read_cache(path: &Path) -> Result<Self, DatasetError> {
        let bytes = read_file(path)?;
        let bad = |reason: String| DatasetError::BadCache {
            path: path.to_path_buf(),
            reason,
        };
        if bytes.len() < 16 || &bytes[..8] != CACHE_MAGIC {
            return Err(bad("missing QGANMN01 header".into()));
        }
        let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        if dim != PIXELS {
            return Err(bad(format!("record width {dim}, expected {PIXELS}")));
        }
        let needed = 16 + count + count * PIXELS * 4;
        if bytes.len() != needed {
            return Err(bad(format!("expected {needed} bytes, found {}", bytes.len())));
        }
        let labels = &bytes[16..16 + count];
        let body = &bytes[16 + count..];
        let records = labels
            .iter()
            .enumerate()
            .map(|(i, &label)| ImageRecord {
                label,
                pixels: body[i * PIXELS * 4..(i + 1) * PIXELS * 4]
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            })
            .collect();
        let ds = Self::from_records(records);
        let [zeros, ones] = ds.class_counts();
        if zeros != ones {
            return Err(bad(format!("unbalanced classes {zeros} / {ones}")));
        }
        Ok(ds)
    }
}

pub struct EpochBatches<'a> {
    data: &'a BalancedDataset,
    order: Vec<usize>,
    batch_size: usize,
    next: usize,
}

impl EpochBatches<'_> {
    /// Record indices in this epoch's visiting order (full batches only).
    pub fn order(&self) -> &[usize] {
        let full = self.order.len() / self.batch_size * self.batch_size;
        &self.order[..full]
    }
}

impl Iterator for EpochBatches<'_> {
    type Item = DMatrix<f64>;

    fn next(&mut self) -> Option<Self::Item> {
        let end = self.next + self.batch_size;
        if end > self.order.len() {
            return None;
        }
        let rows = &self.order[self.next..end];
        self.next = end;
        Some(self.data.rows_matrix(rows))
    }
}

/// Keeps labels 0 and 1 and undersamples the majority class (without
/// replacement) down to the minority count. Original file order is kept.
pub fn filter_and_balance(raw: &RawMnist, seed: u64) -> Result<BalancedDataset, DatasetError> {
    let zeros: Vec<usize> = (0..raw.len()).filter(|&i| raw.labels[i] == 0).collect();
    let ones: Vec<usize> = (0..raw.len()).filter(|&i| raw.labels[i] == 1).collect();
    if zeros.is_empty() {
        return Err(DatasetError::EmptyClass(0));
    }
    if ones.is_empty() {
        return Err(DatasetError::EmptyClass(1));
    }
    let target = zeros.len().min(ones.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut undersample = |idx: Vec<usize>| -> Vec<usize> {
        if idx.len() == target {
            idx
        } else {
            rand::seq::index::sample(&mut rng, idx.len(), target)
                .into_iter()
                .map(|j| idx[j])
                .collect()
        }
    };
    let mut keep = undersample(zeros);
    keep.extend(undersample(ones));
    keep.sort_unstable();
    let records = keep
        .into_iter()
        .map(|i| ImageRecord {
            label: raw.labels[i],
            pixels: raw.image(i).iter().map(|&p| normalize(p) as f32).collect(),
        })
        .collect();
    Ok(BalancedDataset::from_records(records))
}

/// Binary PGM (P5) of one 28×28 normalized image.
pub fn write_pgm(path: &Path, pixels: &[f64]) -> io::Result<()> {
    assert_eq!(pixels.len(), PIXELS, "PGM export expects 784 pixels");
    let mut buf = format!("P5\n{IMAGE_SIDE} {IMAGE_SIDE}\n255\n").into_bytes();
    buf.extend(pixels.iter().map(|&v| to_byte(v)));
    fs::write(path, buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn idx_images(count: u32, pixels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [IMAGE_MAGIC, count, 28, 28] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend_from_slice(pixels);
        b
    }

    fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
        b.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        b.extend_from_slice(labels);
        b
    }

    fn synthetic(labels: &[u8]) -> RawMnist {
        let images = labels
            .iter()
            .enumerate()
            .flat_map(|(i, _)| std::iter::repeat_n((i % 256) as u8, PIXELS))
            .collect();
        RawMnist {
            images,
            labels: labels.to_vec(),
        }
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(0), -1.0);
        assert_eq!(normalize(255), 1.0);
        assert!((normalize(51) - (-0.6)).abs() < 1e-15);
    }

    #[test]
    fn normalize_round_trips() {
        for x in 0..=255u8 {
            assert!((denormalize(normalize(x)) - x as f64).abs() < 1e-12);
            assert_eq!(to_byte(normalize(x)), x);
        }
    }

    #[test]
    fn parse_rejects_swapped_magic() {
        let path = Path::new("labels");
        let mut bytes = idx_labels(&[0, 1]);
        bytes[..4].copy_from_slice(&IMAGE_MAGIC.to_be_bytes());
        let err = parse_idx_labels(&bytes, path).unwrap_err();
        assert!(err.to_string().contains("wrong magic"), "{err}");
    }

    #[test]
    fn parse_rejects_truncated_images() {
        let path = Path::new("images");
        let bytes = idx_images(2, &vec![0u8; PIXELS + 100]);
        let err = parse_idx_images(&bytes, path).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
        assert!(matches!(
            parse_idx_images(&bytes[..10], path),
            Err(DatasetError::Truncated { .. })
        ));
    }

    #[test]
    fn parse_reports_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("i");
        let lp = dir.path().join("l");
        fs::write(&ip, idx_images(2, &vec![7u8; 2 * PIXELS])).unwrap();
        fs::write(&lp, idx_labels(&[0, 1, 1])).unwrap();
        assert!(matches!(
            parse_idx(&ip, &lp),
            Err(DatasetError::CountMismatch { images: 2, labels: 3 })
        ));
        fs::write(&lp, idx_labels(&[0, 1])).unwrap();
        let raw = parse_idx(&ip, &lp).unwrap();
        assert_eq!(raw.len(), 2);
        assert_eq!(raw.image(1), &[7u8; PIXELS][..]);
        let missing = parse_idx(&dir.path().join("nope"), &lp).unwrap_err();
        assert!(missing.to_string().contains("nope"));
    }

    #[test]
    fn balance_examples() {
        let mut labels = vec![0u8; 10];
        labels.extend([1u8; 4]);
        labels.extend([7u8; 3]);
        let ds = filter_and_balance(&synthetic(&labels), 3).unwrap();
        assert_eq!(ds.class_counts(), [4, 4]);
        assert!(ds.records().iter().all(|r| r.label <= 1));
        assert!(ds.records().iter().all(|r| r.pixels.len() == PIXELS));

        let equal = synthetic(&[1, 0, 1, 0]);
        let ds = filter_and_balance(&equal, 3).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.records()[0].label, 1);

        assert!(matches!(
            filter_and_balance(&synthetic(&[1, 1, 2]), 0),
            Err(DatasetError::EmptyClass(0))
        ));
        assert!(matches!(
            filter_and_balance(&synthetic(&[0, 2]), 0),
            Err(DatasetError::EmptyClass(1))
        ));
    }

    #[test]
    fn undersampling_never_repeats() {
        let mut labels = vec![0u8; 200];
        labels.extend([1u8; 57]);
        let ds = filter_and_balance(&synthetic(&labels), 99).unwrap();
        // Each synthetic image is tagged by its index mod 256, unique here.
        let tags: HashSet<u32> = ds.records().iter().map(|r| r.pixels[0].to_bits()).collect();
        assert_eq!(tags.len(), ds.len());
        assert_eq!(ds.class_counts(), [57, 57]);
    }

    #[test]
    fn batches_drop_partial_and_cover_once() {
        let ds = filter_and_balance(&synthetic(&[0u8, 1].repeat(50)), 0).unwrap();
        let it = ds.epoch_batches(16, 5, 0).unwrap();
        let order = it.order().to_vec();
        let batches: Vec<_> = it.collect();
        assert_eq!(batches.len(), 6);
        assert!(batches.iter().all(|b| b.shape() == (16, PIXELS)));
        let unique: HashSet<_> = order.iter().collect();
        assert_eq!(unique.len(), 96);

        let full = ds.epoch_batches(100, 5, 0).unwrap().collect::<Vec<_>>();
        assert_eq!(full.len(), 1);
        assert_eq!(full[0].nrows(), 100);

        assert!(matches!(
            ds.epoch_batches(101, 5, 0),
            Err(DatasetError::BatchTooLarge { .. })
        ));
        assert!(matches!(ds.epoch_batches(0, 5, 0), Err(DatasetError::ZeroBatch)));
    }

    #[test]
    fn epoch_shuffles_are_reproducible_and_distinct() {
        let ds = filter_and_balance(&synthetic(&[0u8, 1].repeat(40)), 0).unwrap();
        let e0 = ds.epoch_batches(8, 42, 0).unwrap().order().to_vec();
        let e1 = ds.epoch_batches(8, 42, 1).unwrap().order().to_vec();
        assert_ne!(e0, e1);
        assert_eq!(e0, ds.epoch_batches(8, 42, 0).unwrap().order().to_vec());
    }

    #[test]
    fn batch_count_for_full_split() {
        // 11,846 balanced records at batch 64.
        assert_eq!(11_846 / 64, 185);
        assert_eq!(185 * 64, 11_840);
    }

    #[test]
    fn cache_round_trip_and_corruption() {
        let ds = filter_and_balance(&synthetic(&[0u8, 1, 1, 0, 0]), 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/train.bin");
        ds.write_cache(&path).unwrap();
        assert_eq!(BalancedDataset::read_cache(&path).unwrap(), ds);

        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            BalancedDataset::read_cache(&path),
            Err(DatasetError::BadCache { .. })
        ));
        fs::write(&path, b"nonsense").unwrap();
        assert!(matches!(
            BalancedDataset::read_cache(&path),
            Err(DatasetError::BadCache { .. })
        ));
    }

    #[test]
    fn subsets_are_balanced_and_disjoint() {
        let mut labels = vec![0u8; 30];
        labels.extend([1u8; 40]);
        let ds = filter_and_balance(&synthetic(&labels), 0).unwrap();
        let (rest, taken) = ds.split_per_class(10, 4).unwrap();
        assert_eq!(taken.class_counts(), [10, 10]);
        assert_eq!(rest.class_counts(), [20, 20]);
        assert!(ds.balanced_subset(31, 0).is_err());
    }

    proptest! {
        #[test]
        fn balancing_always_equalizes(zeros in 1usize..40, ones in 1usize..40, seed in any::<u64>()) {
            let mut labels = vec![0u8; zeros];
            labels.extend(std::iter::repeat_n(1u8, ones));
            let ds = filter_and_balance(&synthetic(&labels), seed).unwrap();
            let m = zeros.min(ones);
            prop_assert_eq!(ds.class_counts(), [m, m]);
        }
    }
}
