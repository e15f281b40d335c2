//! Datasets with stable sample identities: IDX ingestion, a seeded Gaussian
//! mixture generator, and train/test splitting.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::rng::{seeded, streams};
use crate::scalar::Scalar;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Per-sample supervision.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets<T> {
    /// Class ids in `0..classes`.
    Classes { classes: usize, labels: Vec<u32> },
    /// Real-valued targets, `dim` per sample, row-major.
    Values { dim: usize, values: Vec<T> },
}

/// Feature matrix plus targets; sample `i` keeps id `i` for the dataset's lifetime.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexedDataset<T> {
    name: String,
    dim: usize,
    features: Vec<T>,
    targets: Targets<T>,
    origin: Vec<usize>,
}

impl<T: Scalar> IndexedDataset<T> {
    pub fn new(name: impl Into<String>, dim: usize, features: Vec<T>, targets: Targets<T>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("feature dimension must be positive"));
        }
        if !features.len().is_multiple_of(dim) {
            return Err(invalid(format!("feature buffer of length {} is not a multiple of dim {dim}", features.len())));
        }
        let n = features.len() / dim;
        if n == 0 {
            return Err(invalid("dataset is empty"));
        }
        if let Some(pos) = features.iter().position(|x| !x.is_finite()) {
            return Err(invalid(format!("non-finite feature in sample {}", pos / dim)));
        }
        match &targets {
            Targets::Classes { classes, labels } => {
                if labels.len() != n {
                    return Err(invalid(format!("{} labels for {n} samples", labels.len())));
                }
                if *classes == 0 {
                    return Err(invalid("class count must be positive"));
                }
                if let Some(i) = labels.iter().position(|&y| y as usize >= *classes) {
                    return Err(invalid(format!("label {} of sample {i} outside 0..{classes}", labels[i])));
                }
            }
            Targets::Values { dim: td, values } => {
                if *td == 0 || values.len() != n * td {
                    return Err(invalid(format!("{} target values for {n} samples of width {td}", values.len())));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("non-finite target value"));
                }
            }
        }
        Ok(Self { name: name.into(), dim, features, targets, origin: (0..n).collect() })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.origin.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origin.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of classes, or target width for regression data.
    pub fn output_dim(&self) -> usize {
        match &self.targets {
            Targets::Classes { classes, .. } => *classes,
            Targets::Values { dim, .. } => *dim,
        }
    }

    pub fn targets(&self) -> &Targets<T> {
        &self.targets
    }

    pub fn features(&self) -> &[T] {
        &self.features
    }

    #[inline]
    pub fn row(&self, id: usize) -> &[T] {
        &self.features[id * self.dim..(id + 1) * self.dim]
    }

    pub fn label(&self, id: usize) -> Option<u32> {
        match &self.targets {
            Targets::Classes { labels, .. } => labels.get(id).copied(),
            Targets::Values { .. } => None,
        }
    }

    /// Ids of this dataset's samples in the dataset it was derived from.
    pub fn origin_ids(&self) -> &[usize] {
        &self.origin
    }

    pub fn ids(&self) -> std::ops::Range<usize> {
        0..self.len()
    }

    /// Copies the given samples into a new dataset with ids `0..ids.len()`.
    fn subset(&self, name: String, ids: &[usize]) -> Self {
        let mut features = Vec::with_capacity(ids.len() * self.dim);
        for &i in ids {
            features.extend_from_slice(self.row(i));
        }
        let targets = match &self.targets {
            Targets::Classes { classes, labels } => {
                Targets::Classes { classes: *classes, labels: ids.iter().map(|&i| labels[i]).collect() }
            }
            Targets::Values { dim, values } => {
                let mut out = Vec::with_capacity(ids.len() * dim);
                for &i in ids {
                    out.extend_from_slice(&values[i * dim..(i + 1) * dim]);
                }
                Targets::Values { dim: *dim, values: out }
            }
        };
        Self { name, dim: self.dim, features, targets, origin: ids.iter().map(|&i| self.origin[i]).collect() }
    }
}

/// Borrowed view of some samples of a dataset.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a, T> {
    dataset: &'a IndexedDataset<T>,
    ids: &'a [usize],
}

impl<'a, T: Scalar> Batch<'a, T> {
    pub fn new(dataset: &'a IndexedDataset<T>, ids: &'a [usize]) -> Result<Self> {
        if let Some(&bad) = ids.iter().find(|&&i| i >= dataset.len()) {
            return Err(invalid(format!("batch id {bad} out of range (n = {})", dataset.len())));
        }
        Ok(Self { dataset, ids })
    }

    pub fn dataset(&self) -> &'a IndexedDataset<T> {
        self.dataset
    }

    pub fn ids(&self) -> &'a [usize] {
        self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'a str,
}

impl<'a> Cursor<'a> {
    fn u32(&mut self) -> Result<u32> {
        let end = self.pos + 4;
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Format(format!("{} file truncated in header", self.what)))?;
        self.pos = end;
        Ok(u32::from_be_bytes(chunk.try_into().expect("4-byte slice")))
    }

    fn rest(&self) -> &'a [u8] {
        &self.bytes[self.pos..]
    }
}

/// Loads an IDX image/label pair (the MNIST container format).
///
/// Pixels are divided by 255; each image is flattened row-major. With
/// `limit`, only the first `limit` samples in file order are kept.
pub fn load_idx<T: Scalar>(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    limit: Option<usize>,
) -> Result<IndexedDataset<T>> {
    let images = fs::read(images_path.as_ref())?;
    let labels = fs::read(labels_path.as_ref())?;
    parse_idx(&images, &labels, limit, &images_path.as_ref().display().to_string())
}

/// Parses in-memory IDX bytes; see [`load_idx`].
pub fn parse_idx<T: Scalar>(
    images: &[u8],
    labels: &[u8],
    limit: Option<usize>,
    name: &str,
) -> Result<IndexedDataset<T>> {
    let mut img = Cursor { bytes: images, pos: 0, what: "images" };
    let magic = img.u32()?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!("images file has magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}")));
    }
    let count = img.u32()? as usize;
    let rows = img.u32()? as usize;
    let cols = img.u32()? as usize;

    let mut lab = Cursor { bytes: labels, pos: 0, what: "labels" };
    let magic = lab.u32()?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!("labels file has magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}")));
    }
    let label_count = lab.u32()? as usize;
    if label_count != count {
        return Err(Error::Format(format!("images file holds {count} samples but labels file holds {label_count}")));
    }

    let dim = rows * cols;
    if dim == 0 {
        return Err(Error::Format("images have zero size".into()));
    }
    let pixel_bytes = img.rest();
    if pixel_bytes.len() < count * dim {
        return Err(Error::Format(format!(
            "images file truncated: {} pixel bytes for {count} images of {rows}x{cols}",
            pixel_bytes.len()
        )));
    }
    let label_bytes = lab.rest();
    if label_bytes.len() < count {
        return Err(Error::Format(format!("labels file truncated: {} bytes for {count} labels", label_bytes.len())));
    }

    let n = limit.map_or(count, |l| l.min(count));
    let features: Vec<T> = pixel_bytes[..n * dim].iter().map(|&p| T::lit(p as f64 / 255.0)).collect();
    let labels: Vec<u32> = label_bytes[..n].iter().map(|&y| y as u32).collect();
    let classes = labels.iter().copied().max().map_or(1, |m| m as usize + 1);
    IndexedDataset::new(name, dim, features, Targets::Classes { classes, labels })
}

/// Writes a classification dataset as an IDX pair, quantizing features to
/// bytes via `round(255 x)` clamped to `[0, 255]`.
pub fn write_idx<T: Scalar>(
    dataset: &IndexedDataset<T>,
    rows: usize,
    cols: usize,
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<()> {
    if rows * cols != dataset.dim() {
        return Err(invalid(format!("{rows}x{cols} does not match dim {}", dataset.dim())));
    }
    let Targets::Classes { labels, .. } = dataset.targets() else {
        return Err(invalid("IDX labels need a classification dataset"));
    };
    if labels.iter().any(|&y| y > 255) {
        return Err(invalid("IDX labels must fit in a byte"));
    }
    let n = dataset.len() as u32;
    let mut img = Vec::with_capacity(16 + dataset.features().len());
    for word in [IDX_IMAGES_MAGIC, n, rows as u32, cols as u32] {
        img.extend_from_slice(&word.to_be_bytes());
    }
    img.extend(dataset.features().iter().map(|&x| (x.as_f64() * 255.0).round().clamp(0.0, 255.0) as u8));
    let mut lab = Vec::with_capacity(8 + labels.len());
    for word in [IDX_LABELS_MAGIC, n] {
        lab.extend_from_slice(&word.to_be_bytes());
    }
    lab.extend(labels.iter().map(|&y| y as u8));
    fs::write(images_path, img)?;
    fs::write(labels_path, lab)?;
    Ok(())
}

/// Isotropic Gaussian classes around seeded means at distance `separation`
/// from the origin. Labels cycle `0, 1, .., C-1` so classes are balanced.
pub fn gen_gaussian_mixture<T: Scalar>(
    n: usize,
    dim: usize,
    classes: usize,
    separation: f64,
    seed: u64,
) -> Result<IndexedDataset<T>> {
    if classes < 2 || n < classes {
        return Err(invalid(format!("need n >= classes >= 2, got n = {n}, classes = {classes}")));
    }
    if dim == 0 {
        return Err(invalid("dim must be positive"));
    }
    if !(separation >= 0.0) || !separation.is_finite() {
        return Err(invalid(format!("separation must be finite and non-negative, got {separation}")));
    }
    let mut rng = seeded(seed, streams::DATA);
    let mut means = Vec::with_capacity(classes * dim);
    for _ in 0..classes {
        let dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        means.extend(dir.iter().map(|x| x / norm * separation));
    }
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        labels.push(c as u32);
        for j in 0..dim {
            let z: f64 = StandardNormal.sample(&mut rng);
            features.push(T::lit(means[c * dim + j] + z));
        }
    }
    IndexedDataset::new(
        format!("gaussian_mixture(n={n},d={dim},C={classes},sep={separation},seed={seed})"),
        dim,
        features,
        Targets::Classes { classes, labels },
    )
}

/// Seeded shuffle, then the first `round((1 - f) n)` samples train and the
/// rest test. Both halves are re-indexed from zero and remember their origin.
pub fn split<T: Scalar>(
    dataset: &IndexedDataset<T>,
    test_fraction: f64,
    seed: u64,
) -> Result<(IndexedDataset<T>, IndexedDataset<T>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(invalid(format!("test_fraction must lie in (0, 1), got {test_fraction}")));
    }
    let n = dataset.len();
    let n_test = (n as f64 * test_fraction).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(invalid(format!("test_fraction {test_fraction} leaves an empty split of {n}")));
    }
    let mut order: Vec<usize> = dataset.ids().collect();
    order.shuffle(&mut seeded(seed, streams::SPLIT));
    let (train_ids, test_ids) = order.split_at(n - n_test);
    Ok((
        dataset.subset(format!("{}/train", dataset.name()), train_ids),
        dataset.subset(format!("{}/test", dataset.name()), test_ids),
    ))
}
