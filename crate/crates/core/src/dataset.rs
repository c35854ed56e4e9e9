//! Labeled datasets: MNIST IDX and CIFAR-10 binary loaders, synthetic
//! Gaussian clusters, scalar normalization, class-balanced subsampling and
//! label randomization.

use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{seeded, standard_normal};
use crate::scalar::Real;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const CIFAR_IMAGE_BYTES: usize = 3072;
pub const CIFAR_RECORD_BYTES: usize = CIFAR_IMAGE_BYTES + 1;
const IMAGE_CLASSES: usize = 10;

/// Feature matrix with one integer class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset<T> {
    features: Matrix<T>,
    labels: Vec<usize>,
    num_classes: usize,
    pub name: String,
}

impl<T: Real> LabeledDataset<T> {
    pub fn new(
        features: Matrix<T>,
        labels: Vec<usize>,
        num_classes: usize,
        name: impl Into<String>,
    ) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::Consistency("dataset has no samples".into()));
        }
        if features.cols() == 0 {
            return Err(Error::Consistency(
                "dataset has zero feature dimension".into(),
            ));
        }
        if labels.len() != features.rows() {
            return Err(Error::Consistency(format!(
                "{} labels for {} feature rows",
                labels.len(),
                features.rows()
            )));
        }
        if num_classes < 2 {
            return Err(Error::arg(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= num_classes) {
            return Err(Error::Consistency(format!(
                "label {y} at row {i} outside [0, {num_classes})"
            )));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
            name: name.into(),
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    /// Always false: construction rejects empty datasets.
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    #[inline]
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    #[inline]
    pub fn features(&self) -> &Matrix<T> {
        &self.features
    }

    #[inline]
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    #[inline]
    pub fn sample(&self, i: usize) -> (&[T], usize) {
        (self.features.row(i), self.labels[i])
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.num_classes];
        for &y in &self.labels {
            h[y] += 1;
        }
        h
    }

    /// Row indices of each class, ascending.
    pub fn class_members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.num_classes];
        for (i, &y) in self.labels.iter().enumerate() {
            m[y].push(i);
        }
        m
    }

    /// New dataset made of the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let d = self.dim();
        let mut data = Vec::with_capacity(rows.len() * d);
        let mut labels = Vec::with_capacity(rows.len());
        for &i in rows {
            if i >= self.len() {
                return Err(Error::arg(format!("row {i} out of range")));
            }
            data.extend_from_slice(self.features.row(i));
            labels.push(self.labels[i]);
        }
        Self::new(
            Matrix::from_vec(rows.len(), d, data)?,
            labels,
            self.num_classes,
            self.name.clone(),
        )
    }

    /// Same features, replacement labels.
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Self> {
        Self::new(
            self.features.clone(),
            labels,
            self.num_classes,
            self.name.clone(),
        )
    }

    /// Concatenates the rows of two datasets with matching shape.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() || self.num_classes != other.num_classes {
            return Err(Error::Consistency(
                "cannot concatenate mismatched datasets".into(),
            ));
        }
        let mut data = self.features.as_slice().to_vec();
        data.extend_from_slice(other.features.as_slice());
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Self::new(
            Matrix::from_vec(labels.len(), self.dim(), data)?,
            labels,
            self.num_classes,
            self.name.clone(),
        )
    }
}

// ---------------------------------------------------------------------------
// Binary formats
// ---------------------------------------------------------------------------

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

struct ByteReader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn new(path: &'a Path, bytes: &'a [u8]) -> Self {
        Self {
            path,
            bytes,
            pos: 0,
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated {
                path: self.path.to_path_buf(),
                offset: self.pos,
                needed: n,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32_be(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn parse_idx_images(path: &Path, bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    let mut r = ByteReader::new(path, bytes);
    let magic = r.u32_be()?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Magic {
            path: path.to_path_buf(),
            expected: IDX_IMAGES_MAGIC,
            actual: magic,
        });
    }
    let count = r.u32_be()? as usize;
    let rows = r.u32_be()? as usize;
    let cols = r.u32_be()? as usize;
    let pixels = r.take(count * rows * cols)?.to_vec();
    Ok((count, rows, cols, pixels))
}

fn parse_idx_labels(path: &Path, bytes: &[u8]) -> Result<Vec<u8>> {
    let mut r = ByteReader::new(path, bytes);
    let magic = r.u32_be()?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Magic {
            path: path.to_path_buf(),
            expected: IDX_LABELS_MAGIC,
            actual: magic,
        });
    }
    let count = r.u32_be()? as usize;
    Ok(r.take(count)?.to_vec())
}

/// Loads an MNIST-style IDX image/label pair. Pixels are kept as raw values in `[0, 255]`.
pub fn load_mnist_idx<T: Real>(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<LabeledDataset<T>> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let image_bytes = read_file(images_path)?;
    let label_bytes = read_file(labels_path)?;
    let (count, rows, cols, pixels) = parse_idx_images(images_path, &image_bytes)?;
    let labels = parse_idx_labels(labels_path, &label_bytes)?;
    if labels.len() != count {
        return Err(Error::Consistency(format!(
            "{} images but {} labels",
            count,
            labels.len()
        )));
    }
    if let Some((i, &y)) = labels
        .iter()
        .enumerate()
        .find(|(_, &y)| y as usize >= IMAGE_CLASSES)
    {
        return Err(Error::Format(format!(
            "{}: label {y} at index {i} outside [0, 10)",
            labels_path.display()
        )));
    }
    let features = Matrix::from_vec(
        count,
        rows * cols,
        pixels.iter().map(|&b| T::lit(b as f64)).collect(),
    )?;
    LabeledDataset::new(
        features,
        labels.into_iter().map(usize::from).collect(),
        IMAGE_CLASSES,
        "mnist",
    )
}

/// Serializes integer-valued features as an IDX image file plus an IDX label file.
pub fn encode_mnist_idx<T: Real>(
    ds: &LabeledDataset<T>,
    rows: usize,
    cols: usize,
) -> Result<(Vec<u8>, Vec<u8>)> {
    if rows * cols != ds.dim() {
        return Err(Error::arg(format!(
            "{rows}x{cols} images do not match feature width {}",
            ds.dim()
        )));
    }
    let mut img = Vec::with_capacity(16 + ds.len() * ds.dim());
    img.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    for v in [ds.len(), rows, cols] {
        img.extend_from_slice(&(v as u32).to_be_bytes());
    }
    for &v in ds.features().as_slice() {
        img.push(pixel_byte(v)?);
    }
    let mut lab = Vec::with_capacity(8 + ds.len());
    lab.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    for &y in ds.labels() {
        lab.push(label_byte(y)?);
    }
    Ok((img, lab))
}

fn pixel_byte<T: Real>(v: T) -> Result<u8> {
    let f = v.to_f64_lossy();
    if f.fract() != 0.0 || !(0.0..=255.0).contains(&f) {
        return Err(Error::arg(format!("feature {f} is not a pixel byte")));
    }
    Ok(f as u8)
}

fn label_byte(y: usize) -> Result<u8> {
    u8::try_from(y).map_err(|_| Error::arg(format!("label {y} does not fit a byte")))
}

/// Loads CIFAR-10 binary batches, concatenating records across files in order.
pub fn load_cifar10_bin<T: Real, P: AsRef<Path>>(paths: &[P]) -> Result<LabeledDataset<T>> {
    if paths.is_empty() {
        return Err(Error::arg("no CIFAR-10 batch files given"));
    }
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let bytes = read_file(path)?;
        if bytes.len() % CIFAR_RECORD_BYTES != 0 {
            return Err(Error::Format(format!(
                "{}: size {} is not a multiple of {CIFAR_RECORD_BYTES}",
                path.display(),
                bytes.len()
            )));
        }
        for (r, rec) in bytes.chunks_exact(CIFAR_RECORD_BYTES).enumerate() {
            let y = rec[0] as usize;
            if y >= IMAGE_CLASSES {
                return Err(Error::Format(format!(
                    "{}: record {r} has label byte {y}",
                    path.display()
                )));
            }
            labels.push(y);
            data.extend(rec[1..].iter().map(|&b| T::lit(b as f64)));
        }
    }
    let n = labels.len();
    LabeledDataset::new(
        Matrix::from_vec(n, CIFAR_IMAGE_BYTES, data)?,
        labels,
        IMAGE_CLASSES,
        "cifar10",
    )
}

/// Serializes integer-valued 3072-wide features as CIFAR-10 records.
pub fn encode_cifar10<T: Real>(ds: &LabeledDataset<T>) -> Result<Vec<u8>> {
    if ds.dim() != CIFAR_IMAGE_BYTES {
        return Err(Error::arg(format!(
            "feature width {} is not 3072",
            ds.dim()
        )));
    }
    let mut out = Vec::with_capacity(ds.len() * CIFAR_RECORD_BYTES);
    for i in 0..ds.len() {
        let (x, y) = ds.sample(i);
        out.push(label_byte(y)?);
        for &v in x {
            out.push(pixel_byte(v)?);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Gaussian clusters centred on scaled coordinate axes.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    pub cluster_separation: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.dim == 0 || self.samples_per_class == 0 {
            return Err(Error::arg(
                "synthetic data needs >= 2 classes and positive dim and samples per class",
            ));
        }
        if self.num_classes > 2 * self.dim {
            return Err(Error::arg(format!(
                "cannot place {} axis-aligned centres in {} dimensions",
                self.num_classes, self.dim
            )));
        }
        if !(self.noise_std >= 0.0) || !(self.cluster_separation > 0.0) {
            return Err(Error::arg("noise_std must be >= 0 and separation > 0"));
        }
        Ok(())
    }

    /// Centre of class `c`: `±(sep/√2)·e_i`, using +axes first, then -axes.
    /// Any two centres are at least `cluster_separation` apart.
    pub fn center(&self, c: usize) -> Vec<f64> {
        let s = self.cluster_separation / std::f64::consts::SQRT_2;
        let mut v = vec![0.0; self.dim];
        if c < self.dim {
            v[c] = s;
        } else {
            v[c - self.dim] = -s;
        }
        v
    }
}

/// Draws `samples_per_class` points per class, class-major order.
pub fn make_synthetic<T: Real>(spec: &SyntheticSpec) -> Result<LabeledDataset<T>> {
    spec.validate()?;
    let mut rng = seeded(spec.seed);
    let n = spec.num_classes * spec.samples_per_class;
    let mut data = Vec::with_capacity(n * spec.dim);
    let mut labels = Vec::with_capacity(n);
    for c in 0..spec.num_classes {
        let center = spec.center(c);
        for _ in 0..spec.samples_per_class {
            for &mu in &center {
                let z: f64 = standard_normal(&mut rng);
                data.push(T::lit(mu + spec.noise_std * z));
            }
            labels.push(c);
        }
    }
    LabeledDataset::new(
        Matrix::from_vec(n, spec.dim, data)?,
        labels,
        spec.num_classes,
        "synthetic",
    )
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Scalar mean / standard deviation over every feature entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization<T> {
    pub mean: T,
    pub std: T,
}

pub const STD_FLOOR: f64 = 1e-12;

impl<T: Real> Normalization<T> {
    pub fn fit(ds: &LabeledDataset<T>) -> Result<Self> {
        if ds.len() < 2 {
            return Err(Error::arg("normalization needs at least 2 samples"));
        }
        let vals = ds.features().as_slice();
        let count = T::from_usize_lossy(vals.len());
        let mean = vals.iter().copied().sum::<T>() / count;
        let var = vals.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / count;
        Ok(Self {
            mean,
            std: var.sqrt().max(T::lit(STD_FLOOR)),
        })
    }

    pub fn apply(&self, ds: &LabeledDataset<T>) -> LabeledDataset<T> {
        let mut out = ds.clone();
        for v in out.features.as_mut_slice() {
            *v = (*v - self.mean) / self.std;
        }
        out
    }
}

/// Standardizes with the dataset's own scalar statistics.
pub fn normalize<T: Real>(ds: &LabeledDataset<T>) -> Result<LabeledDataset<T>> {
    Ok(Normalization::fit(ds)?.apply(ds))
}

// ---------------------------------------------------------------------------
// Label noise and subsampling
// ---------------------------------------------------------------------------

/// Which rows get a fresh label, and what they get.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelNoise {
    pub rows: Vec<usize>,
    pub new_labels: Vec<usize>,
}

impl LabelNoise {
    /// Per class, picks `round(r · class_count)` members uniformly without
    /// replacement and assigns each a label uniform over all classes.
    pub fn draw<T: Real>(ds: &LabeledDataset<T>, r: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::arg(format!(
                "randomness fraction {r} outside [0, 1]"
            )));
        }
        let mut rng = seeded(seed);
        let k = ds.num_classes();
        let mut rows = Vec::new();
        let mut new_labels = Vec::new();
        for members in ds.class_members() {
            let m = (r * members.len() as f64).round() as usize;
            if m == 0 {
                continue;
            }
            let mut picked: Vec<usize> = index::sample(&mut rng, members.len(), m)
                .into_iter()
                .map(|j| members[j])
                .collect();
            picked.sort_unstable();
            for row in picked {
                rows.push(row);
                new_labels.push(rng.random_range(0..k));
            }
        }
        Ok(Self { rows, new_labels })
    }

    pub fn apply<T: Real>(&self, ds: &LabeledDataset<T>) -> Result<LabeledDataset<T>> {
        let mut labels = ds.labels().to_vec();
        for (&row, &y) in self.rows.iter().zip(&self.new_labels) {
            labels[row] = y;
        }
        ds.with_labels(labels)
    }
}

pub fn randomize_labels<T: Real>(
    ds: &LabeledDataset<T>,
    r: f64,
    seed: u64,
) -> Result<LabeledDataset<T>> {
    LabelNoise::draw(ds, r, seed)?.apply(ds)
}

/// Exactly `n / k` rows per class, uniform without replacement, original row order kept.
pub fn balanced_subsample<T: Real>(
    ds: &LabeledDataset<T>,
    n: usize,
    seed: u64,
) -> Result<LabeledDataset<T>> {
    let k = ds.num_classes();
    if n == 0 || !n.is_multiple_of(k) {
        return Err(Error::arg(format!(
            "subsample size {n} is not a positive multiple of {k} classes"
        )));
    }
    let per_class = n / k;
    let mut rng = seeded(seed);
    let mut rows = Vec::with_capacity(n);
    for (c, members) in ds.class_members().iter().enumerate() {
        if members.len() < per_class {
            return Err(Error::arg(format!(
                "class {c} has {} rows, {per_class} requested",
                members.len()
            )));
        }
        rows.extend(
            index::sample(&mut rng, members.len(), per_class)
                .into_iter()
                .map(|j| members[j]),
        );
    }
    rows.sort_unstable();
    ds.select(&rows)
}

/// Seeded row permutation, used by the trainer.
pub(crate) fn shuffled_rows<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(rng);
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_images(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [IDX_IMAGES_MAGIC, count, rows, cols] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend_from_slice(pixels);
        b
    }

    fn idx_labels(count: u32, labels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [IDX_LABELS_MAGIC, count] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend_from_slice(labels);
        b
    }

    fn write(dir: &tempfile::TempDir, name: &str, bytes: &[u8]) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, bytes).unwrap();
        p
    }

    fn small(features: Vec<f64>, labels: Vec<usize>, k: usize) -> LabeledDataset<f64> {
        let n = labels.len();
        let d = features.len() / n;
        LabeledDataset::new(Matrix::from_vec(n, d, features).unwrap(), labels, k, "t").unwrap()
    }

    #[test]
    fn mnist_two_image_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let px = [0u8, 17, 128, 255, 1, 2, 3, 4];
        let img = write(&dir, "img", &idx_images(2, 2, 2, &px));
        let lab = write(&dir, "lab", &idx_labels(2, &[3, 9]));
        let ds: LabeledDataset<f64> = load_mnist_idx(&img, &lab).unwrap();
        assert_eq!((ds.len(), ds.dim(), ds.num_classes()), (2, 4, 10));
        assert_eq!(ds.features().row(0), &[0.0, 17.0, 128.0, 255.0]);
        assert_eq!(ds.features().row(1), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(ds.labels(), &[3, 9]);

        let (img2, lab2) = encode_mnist_idx(&ds, 2, 2).unwrap();
        assert_eq!(img2, std::fs::read(&img).unwrap());
        assert_eq!(lab2, std::fs::read(&lab).unwrap());
    }

    #[test]
    fn mnist_errors() {
        let dir = tempfile::tempdir().unwrap();
        let img = write(&dir, "img", &idx_images(3, 1, 1, &[1, 2, 3]));
        let lab = write(&dir, "lab", &idx_labels(2, &[0, 1]));
        assert!(matches!(
            load_mnist_idx::<f64>(&img, &lab),
            Err(Error::Consistency(_))
        ));

        let empty_img = write(&dir, "e_img", &idx_images(0, 2, 2, &[]));
        let empty_lab = write(&dir, "e_lab", &idx_labels(0, &[]));
        assert!(load_mnist_idx::<f64>(&empty_img, &empty_lab).is_err());

        // labels file passed as images
        match load_mnist_idx::<f64>(&lab, &lab) {
            Err(Error::Magic {
                expected, actual, ..
            }) => assert_eq!((expected, actual), (0x803, 0x801)),
            other => panic!("expected magic error, got {other:?}"),
        }

        let mut trunc = idx_images(2, 2, 2, &[0; 8]);
        trunc.truncate(20);
        let t = write(&dir, "trunc", &trunc);
        let lab2 = write(&dir, "lab2", &idx_labels(2, &[0, 1]));
        match load_mnist_idx::<f64>(&t, &lab2) {
            Err(Error::Truncated { offset, needed, .. }) => assert_eq!((offset, needed), (16, 8)),
            other => panic!("expected truncation, got {other:?}"),
        }
    }

    fn cifar_record(label: u8, fill: u8) -> Vec<u8> {
        let mut r = vec![label];
        r.extend((0..CIFAR_IMAGE_BYTES).map(|i| fill.wrapping_add(i as u8)));
        r
    }

    #[test]
    fn cifar_records() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(&dir, "a", &cifar_record(7, 0));
        let b = write(&dir, "b", &cifar_record(2, 5));
        let one: LabeledDataset<f64> = load_cifar10_bin(&[&a]).unwrap();
        assert_eq!((one.len(), one.dim(), one.labels()[0]), (1, 3072, 7));
        assert_eq!(one.features().row(0)[3], 3.0);

        let two: LabeledDataset<f64> = load_cifar10_bin(&[&a, &b]).unwrap();
        assert_eq!(two.labels(), &[7, 2]);
        let mut both = std::fs::read(&a).unwrap();
        both.extend(std::fs::read(&b).unwrap());
        assert_eq!(encode_cifar10(&two).unwrap(), both);

        let mut bad = cifar_record(1, 0);
        bad.push(0);
        let bad = write(&dir, "bad", &bad);
        assert!(matches!(
            load_cifar10_bin::<f64, _>(&[&bad]),
            Err(Error::Format(_))
        ));
        let badlab = write(&dir, "badlab", &cifar_record(10, 0));
        assert!(matches!(
            load_cifar10_bin::<f64, _>(&[&badlab]),
            Err(Error::Format(_))
        ));
    }

    fn spec(k: usize, per: usize, noise: f64, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            num_classes: k,
            dim: 5,
            samples_per_class: per,
            cluster_separation: 3.0,
            noise_std: noise,
            seed,
        }
    }

    #[test]
    fn synthetic_counts_determinism_and_zero_noise() {
        let ds: LabeledDataset<f64> = make_synthetic(&spec(3, 10, 0.5, 1)).unwrap();
        assert_eq!(ds.len(), 30);
        assert_eq!(ds.class_histogram(), vec![10, 10, 10]);
        let again: LabeledDataset<f64> = make_synthetic(&spec(3, 10, 0.5, 1)).unwrap();
        assert_eq!(ds, again);

        let s = spec(3, 4, 0.0, 9);
        let clean: LabeledDataset<f64> = make_synthetic(&s).unwrap();
        for i in 0..clean.len() {
            let (x, y) = clean.sample(i);
            assert_eq!(x, s.center(y).as_slice());
        }
    }

    #[test]
    fn synthetic_centres_are_separated() {
        let s = SyntheticSpec {
            num_classes: 6,
            dim: 3,
            ..spec(6, 1, 0.0, 0)
        };
        for a in 0..6 {
            for b in 0..a {
                let d: f64 = s
                    .center(a)
                    .iter()
                    .zip(s.center(b))
                    .map(|(x, y)| (x - y).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(d >= s.cluster_separation - 1e-12);
            }
        }
        assert!(make_synthetic::<f64>(&SyntheticSpec {
            num_classes: 7,
            ..s
        })
        .is_err());
    }

    #[test]
    fn normalization_cases() {
        let constant = small(vec![4.0; 6], vec![0, 1, 0], 2);
        let z = normalize(&constant).unwrap();
        assert!(z.features().as_slice().iter().all(|&v| v == 0.0));

        let two = small(vec![0.0, 255.0, 255.0, 0.0], vec![0, 1], 2);
        let nz = normalize(&two).unwrap();
        assert_eq!(nz.features().as_slice(), &[-1.0, 1.0, 1.0, -1.0]);

        let unit = small(vec![-1.0, 1.0, 1.0, -1.0], vec![0, 1], 2);
        let same = normalize(&unit).unwrap();
        for (a, b) in same
            .features()
            .as_slice()
            .iter()
            .zip(unit.features().as_slice())
        {
            assert!((a - b).abs() < 1e-12);
        }

        let one = small(vec![1.0, 2.0], vec![0], 2);
        assert!(normalize(&one).is_err());
    }

    #[test]
    fn randomize_zero_and_exact_counts() {
        let ds: LabeledDataset<f64> = make_synthetic(&spec(2, 4, 1.0, 3)).unwrap();
        assert_eq!(randomize_labels(&ds, 0.0, 5).unwrap(), ds);
        let noise = LabelNoise::draw(&ds, 0.5, 5).unwrap();
        assert_eq!(noise.rows.len(), 4);
        for members in ds.class_members() {
            let hit = noise.rows.iter().filter(|r| members.contains(r)).count();
            assert_eq!(hit, 2);
        }
        let out = noise.apply(&ds).unwrap();
        for i in 0..ds.len() {
            if !noise.rows.contains(&i) {
                assert_eq!(out.labels()[i], ds.labels()[i]);
            }
        }
        assert!(randomize_labels(&ds, 1.5, 0).is_err());
    }

    #[test]
    fn full_randomization_is_uniform() {
        // r = 1 on 10 classes of 1000: each class's new labels are multinomial(1000, 1/10);
        // every bin must be within 4 standard deviations of 100.
        let n_per = 1000;
        let labels: Vec<usize> = (0..10 * n_per).map(|i| i / n_per).collect();
        let ds = small(vec![0.0; 10 * n_per], labels, 10);
        let out = randomize_labels(&ds, 1.0, 77).unwrap();
        let sd = (n_per as f64 * 0.1 * 0.9).sqrt();
        let mut chi2 = 0.0;
        for c in 0..10 {
            let mut h = [0usize; 10];
            for i in c * n_per..(c + 1) * n_per {
                h[out.labels()[i]] += 1;
            }
            for &count in &h {
                assert!((count as f64 - 100.0).abs() <= 4.0 * sd, "{h:?}");
                chi2 += (count as f64 - 100.0).powi(2) / 100.0;
            }
        }
        // 90 degrees of freedom; 99.99th percentile is about 145.
        assert!(chi2 < 145.0, "chi2 = {chi2}");
    }

    #[test]
    fn balanced_subsample_counts() {
        let ds: LabeledDataset<f64> = make_synthetic(&SyntheticSpec {
            num_classes: 10,
            dim: 10,
            ..spec(10, 120, 1.0, 4)
        })
        .unwrap();
        let sub = balanced_subsample(&ds, 1000, 8).unwrap();
        assert_eq!(sub.class_histogram(), vec![100; 10]);
        assert_eq!(sub, balanced_subsample(&ds, 1000, 8).unwrap());
        assert!(balanced_subsample(&ds, 7, 0).is_err());
        assert!(balanced_subsample(&ds, 1210, 0).is_err());

        let full = balanced_subsample(&ds, 1200, 1).unwrap();
        assert_eq!(full, ds);
    }
}
