//! Image datasets (IDX / CIFAR-10 binary) and client partitioning.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed;

/// Both supported dataset families have ten classes.
pub const N_CLASSES: usize = 10;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const CIFAR_RECORD: usize = 1 + 3072;

/// Row-major sample matrix with pixel intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f32>,
    labels: Vec<usize>,
    n_features: usize,
    n_classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f32>, n_features: usize, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Contract("dataset has no samples".into()));
        }
        if n_features == 0 || features.len() != labels.len() * n_features {
            return Err(Error::Contract(format!(
                "feature buffer of length {} does not hold {} samples of {} features",
                features.len(),
                labels.len(),
                n_features
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::Contract(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("non-finite feature value".into()));
        }
        Ok(Self {
            features,
            labels,
            n_features,
            n_classes,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Keeps the first `n` samples (no-op when `n >= n_samples`).
    pub fn truncated(mut self, n: usize) -> Self {
        if n < self.n_samples() && n > 0 {
            self.labels.truncate(n);
            self.features.truncate(n * self.n_features);
        }
        self
    }

    /// Samples `start..end` as a new dataset.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n_samples() {
            return Err(Error::Contract(format!(
                "sample range {start}..{end} invalid for {} samples",
                self.n_samples()
            )));
        }
        Self::new(
            self.features[start * self.n_features..end * self.n_features].to_vec(),
            self.n_features,
            self.labels[start..end].to_vec(),
            self.n_classes,
        )
    }
}

/// Rows of a dataset owned by one client.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataShard {
    pub owner_id: usize,
    pub indices: Vec<usize>,
    /// Sample count the owner reports to the server.
    pub reported_size: usize,
}

impl DataShard {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::format(path, format!("corrupt gzip stream: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(path, "truncated IDX header"))
}

/// Loads an IDX image/label file pair (MNIST, Fashion-MNIST). Files may be
/// gzip-compressed.
pub fn load_idx_dataset(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = read_maybe_gz(images_path)?;
    let labels = read_maybe_gz(labels_path)?;

    let magic = be_u32(&images, 0, images_path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(
            images_path,
            format!("bad IDX image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        ));
    }
    let n_images = be_u32(&images, 4, images_path)? as usize;
    let rows = be_u32(&images, 8, images_path)? as usize;
    let cols = be_u32(&images, 12, images_path)? as usize;
    let n_features = rows * cols;
    let body = &images[16..];
    if n_features == 0 || body.len() != n_images * n_features {
        return Err(Error::format(
            images_path,
            format!(
                "expected {} pixel bytes for {n_images} images of {rows}x{cols}, found {}",
                n_images * n_features,
                body.len()
            ),
        ));
    }

    let magic = be_u32(&labels, 0, labels_path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(
            labels_path,
            format!("bad IDX label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        ));
    }
    let n_labels = be_u32(&labels, 4, labels_path)? as usize;
    let label_bytes = &labels[8..];
    if label_bytes.len() != n_labels {
        return Err(Error::format(
            labels_path,
            format!("header announces {n_labels} labels, found {}", label_bytes.len()),
        ));
    }
    if n_labels != n_images {
        return Err(Error::format(
            labels_path,
            format!("{n_labels} labels for {n_images} images"),
        ));
    }
    if n_images == 0 {
        return Err(Error::format(images_path, "file holds 0 samples"));
    }
    if let Some(&bad) = label_bytes.iter().find(|&&l| l as usize >= N_CLASSES) {
        return Err(Error::format(labels_path, format!("label {bad} out of range")));
    }

    let features = body.iter().map(|&p| f32::from(p) / 255.0).collect();
    let labels = label_bytes.iter().map(|&l| l as usize).collect();
    Dataset::new(features, n_features, labels, N_CLASSES)
}

/// Loads and concatenates CIFAR-10 binary batches (1 label byte + 3072 pixel
/// bytes per record).
pub fn load_cifar10<P: AsRef<Path>>(batch_paths: &[P]) -> Result<Dataset> {
    if batch_paths.is_empty() {
        return Err(Error::Config("no CIFAR-10 batch files given".into()));
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for path in batch_paths {
        let path = path.as_ref();
        let bytes = read_maybe_gz(path)?;
        if bytes.is_empty() {
            return Err(Error::format(path, "file holds 0 samples"));
        }
        if bytes.len() % CIFAR_RECORD != 0 {
            return Err(Error::format(
                path,
                format!(
                    "length {} is not a multiple of the {CIFAR_RECORD}-byte record",
                    bytes.len()
                ),
            ));
        }
        for record in bytes.chunks_exact(CIFAR_RECORD) {
            let label = record[0] as usize;
            if label >= N_CLASSES {
                return Err(Error::format(path, format!("label {label} out of range")));
            }
            labels.push(label);
            features.extend(record[1..].iter().map(|&p| f32::from(p) / 255.0));
        }
    }
    Dataset::new(features, CIFAR_RECORD - 1, labels, N_CLASSES)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionScheme {
    /// Seeded shuffle, near-equal contiguous split.
    Iid,
    /// Samples sorted by label before the split, so each client sees few
    /// classes.
    LabelSorted,
}

pub fn partition(dataset: &Dataset, n_clients: usize, seed: u64, scheme: PartitionScheme) -> Result<Vec<DataShard>> {
    if n_clients == 0 {
        return Err(Error::Config("number of clients must be at least 1".into()));
    }
    let n = dataset.n_samples();
    if n_clients > n {
        return Err(Error::Config(format!(
            "cannot split {n} samples across {n_clients} clients"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed, &[seed::PARTITION]));
    if scheme == PartitionScheme::LabelSorted {
        order.sort_by_key(|&i| dataset.label(i));
    }

    let base = n / n_clients;
    let extra = n % n_clients;
    let mut shards = Vec::with_capacity(n_clients);
    let mut start = 0;
    for owner_id in 0..n_clients {
        let size = base + usize::from(owner_id < extra);
        let indices = order[start..start + size].to_vec();
        start += size;
        shards.push(DataShard {
            owner_id,
            reported_size: indices.len(),
            indices,
        });
    }
    Ok(shards)
}

pub fn partition_iid(dataset: &Dataset, n_clients: usize, seed: u64) -> Result<Vec<DataShard>> {
    partition(dataset, n_clients, seed, PartitionScheme::Iid)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;
    use std::io::Write;

    use super::*;

    fn toy(n: usize) -> Dataset {
        Dataset::new(vec![0.5; n * 2], 2, (0..n).map(|i| i % 3).collect(), 3).unwrap()
    }

    fn write(dir: &Path, name: &str, bytes: &[u8]) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::File::create(&p).unwrap().write_all(bytes).unwrap();
        p
    }

    fn idx_images(n: u32, pixels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        for x in [IDX_IMAGES_MAGIC, n, 2, 2] {
            v.extend(x.to_be_bytes());
        }
        v.extend(pixels);
        v
    }

    fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend(IDX_LABELS_MAGIC.to_be_bytes());
        v.extend((labels.len() as u32).to_be_bytes());
        v.extend(labels);
        v
    }

    #[test]
    fn idx_zero_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let im = write(dir.path(), "im", &idx_images(3, &[0; 12]));
        let lb = write(dir.path(), "lb", &idx_labels(&[0, 1, 2]));
        let ds = load_idx_dataset(&im, &lb).unwrap();
        assert_eq!(ds.n_samples(), 3);
        assert_eq!(ds.n_features(), 4);
        assert_eq!(ds.labels(), &[0, 1, 2]);
        assert!((0..3).all(|i| ds.sample(i).iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn idx_scales_pixels_and_reads_gzip() {
        let dir = tempfile::tempdir().unwrap();
        let mut gz = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
        gz.write_all(&idx_images(1, &[0, 255, 51, 102])).unwrap();
        let im = write(dir.path(), "im.gz", &gz.finish().unwrap());
        let lb = write(dir.path(), "lb", &idx_labels(&[9]));
        let ds = load_idx_dataset(&im, &lb).unwrap();
        assert_eq!(ds.sample(0), &[0.0, 1.0, 0.2, 0.4]);
    }

    #[test]
    fn idx_bad_magic_names_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = idx_images(1, &[0; 4]);
        bytes[3] = 0x01;
        let im = write(dir.path(), "images.idx", &bytes);
        let lb = write(dir.path(), "labels.idx", &idx_labels(&[0]));
        let err = load_idx_dataset(&im, &lb).unwrap_err();
        assert!(matches!(err, Error::Format { ref path, .. } if path.ends_with("images.idx")));
    }

    #[test]
    fn idx_truncated_and_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let im = write(dir.path(), "im", &idx_images(2, &[0; 5]));
        let lb = write(dir.path(), "lb", &idx_labels(&[0, 1]));
        assert!(matches!(load_idx_dataset(&im, &lb), Err(Error::Format { .. })));

        let im = write(dir.path(), "im2", &idx_images(2, &[0; 8]));
        let lb = write(dir.path(), "lb2", &idx_labels(&[0, 1, 2]));
        let err = load_idx_dataset(&im, &lb).unwrap_err();
        assert!(matches!(err, Error::Format { ref path, .. } if path.ends_with("lb2")));

        let short = write(dir.path(), "short", &[0, 0]);
        assert!(load_idx_dataset(&short, &lb).is_err());
    }

    #[test]
    fn cifar_fixture_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = vec![3u8];
        bytes.extend(vec![255u8; 3072]);
        bytes.push(7);
        bytes.extend(vec![0u8; 3072]);
        let p = write(dir.path(), "batch.bin", &bytes);
        let ds = load_cifar10(&[&p]).unwrap();
        assert_eq!(ds.labels(), &[3, 7]);
        assert_eq!(ds.n_features(), 3072);
        assert!(ds.sample(0).iter().all(|&v| v == 1.0));

        let empty = write(dir.path(), "empty.bin", &[]);
        assert!(matches!(load_cifar10(&[&empty]), Err(Error::Format { .. })));
        let ragged = write(dir.path(), "ragged.bin", &bytes[..3000]);
        assert!(matches!(load_cifar10(&[&ragged]), Err(Error::Format { .. })));
    }

    #[test]
    fn partition_even_split() {
        let shards = partition_iid(&toy(10), 5, 1).unwrap();
        assert!(shards.iter().all(|s| s.len() == 2 && s.reported_size == 2));
    }

    #[test]
    fn partition_remainder() {
        let shards = partition_iid(&toy(11), 5, 1).unwrap();
        let mut sizes: Vec<_> = shards.iter().map(|s| s.len()).collect();
        sizes.sort();
        assert_eq!(sizes, vec![2, 2, 2, 2, 3]);
        let all: BTreeSet<_> = shards.iter().flat_map(|s| s.indices.clone()).collect();
        assert_eq!(all.len(), 11);
    }

    #[test]
    fn partition_is_seeded() {
        let ds = toy(40);
        assert_eq!(partition_iid(&ds, 4, 9).unwrap(), partition_iid(&ds, 4, 9).unwrap());
        assert_ne!(partition_iid(&ds, 4, 9).unwrap(), partition_iid(&ds, 4, 10).unwrap());
    }

    #[test]
    fn partition_too_many_clients() {
        assert!(matches!(partition_iid(&toy(3), 4, 0), Err(Error::Config(_))));
        assert!(matches!(partition_iid(&toy(3), 0, 0), Err(Error::Config(_))));
    }

    #[test]
    fn label_sorted_groups_classes() {
        let shards = partition(&toy(9), 3, 0, PartitionScheme::LabelSorted).unwrap();
        let ds = toy(9);
        for s in &shards {
            let labels: BTreeSet<_> = s.indices.iter().map(|&i| ds.label(i)).collect();
            assert_eq!(labels.len(), 1);
        }
    }
}
