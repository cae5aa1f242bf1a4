//! Dataset container, labeled/unlabeled pool bookkeeping, simulated
//! oracle, and class-anchor construction.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;

use crate::classifier::ClassifierHead;
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::seeding;

const DATA_MAGIC: &[u8; 8] = b"DCRNDATA";
const DATA_VERSION: u32 = 1;

/// Embeddings with ground-truth labels; the externalized encoder output.
///
/// Labels stay hidden behind [`Oracle`] during an experiment. The optional
/// test split holds held-out embeddings used only for evaluation.
#[derive(Debug, Clone)]
pub struct FeatureDataset {
    embeddings: Matrix,
    labels: Vec<u32>,
    n_classes: usize,
    test: Option<(Matrix, Vec<u32>)>,
}

impl FeatureDataset {
    pub fn new(embeddings: Matrix, labels: Vec<u32>, n_classes: usize) -> Result<Self> {
        let ds = Self {
            embeddings,
            labels,
            n_classes,
            test: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn with_test(mut self, embeddings: Matrix, labels: Vec<u32>) -> Result<Self> {
        if embeddings.cols() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "test dimension {} does not match train dimension {}",
                embeddings.cols(),
                self.dim()
            )));
        }
        if embeddings.rows() != labels.len() {
            return Err(Error::InvalidInput("test labels length mismatch".into()));
        }
        self.test = Some((embeddings, labels));
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if self.embeddings.rows() != self.labels.len() {
            return Err(Error::InvalidInput(format!(
                "{} embeddings but {} labels",
                self.embeddings.rows(),
                self.labels.len()
            )));
        }
        if self.n_classes == 0 {
            return Err(Error::InvalidInput("class count must be positive".into()));
        }
        let mut seen = vec![false; self.n_classes];
        let test_labels = self.test.iter().flat_map(|(_, l)| l.iter());
        for &y in self.labels.iter().chain(test_labels) {
            let y = y as usize;
            if y >= self.n_classes {
                return Err(Error::InvalidInput(format!(
                    "label {y} out of range for {} classes",
                    self.n_classes
                )));
            }
            seen[y] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidInput(format!(
                "class {missing} has no samples"
            )));
        }
        if !self.embeddings.is_finite() {
            return Err(Error::InvalidInput("non-finite embedding values".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn embeddings(&self) -> &Matrix {
        &self.embeddings
    }

    /// Ground-truth labels; experiment code must go through [`Oracle`].
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn test_split(&self) -> Option<(&Matrix, &[u32])> {
        self.test.as_ref().map(|(m, l)| (m, l.as_slice()))
    }

    /// Write one pool in the versioned little-endian binary layout:
    /// magic, u32 version, u64 N, u32 d, u32 N_c, row-major f64
    /// embeddings, u32 labels.
    pub fn save_binary<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        write_pool(path, &self.embeddings, &self.labels, self.n_classes)
    }

    /// Read a pool written by [`FeatureDataset::save_binary`]. A sibling
    /// `<stem>.test.dcrn` file, when present, becomes the test split.
    pub fn load_binary<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        let (embeddings, labels, n_classes) = read_pool(path)?;
        let ds = Self::new(embeddings, labels, n_classes)?;
        let sibling = test_sibling(path);
        if sibling.exists() {
            let (te, tl, tc) = read_pool(&sibling)?;
            if tc != ds.n_classes {
                return Err(Error::Format(format!(
                    "test split declares {tc} classes, train declares {}",
                    ds.n_classes
                )));
            }
            return ds.with_test(te, tl);
        }
        Ok(ds)
    }

    /// Attach a test split loaded from an explicit binary or CSV file.
    pub fn load_test_split<P: AsRef<Path>>(self, path: P) -> Result<Self> {
        let path = path.as_ref();
        if path.extension().is_some_and(|e| e == "csv") {
            let (te, tl, _) = read_pool_csv(path)?;
            self.with_test(te, tl)
        } else {
            let (te, tl, tc) = read_pool(path)?;
            if tc != self.n_classes {
                return Err(Error::Format(format!(
                    "test split declares {tc} classes, train declares {}",
                    self.n_classes
                )));
            }
            self.with_test(te, tl)
        }
    }

    /// Read the CSV fixture form: header row, one f64 column per feature,
    /// label column last. The class count is inferred as max(label) + 1.
    pub fn load_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let (embeddings, labels, n_classes) = read_pool_csv(path.as_ref())?;
        Self::new(embeddings, labels, n_classes)
    }
}

/// Path of the conventional test-split sibling for a dataset file.
pub fn test_sibling(path: &Path) -> std::path::PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    path.with_file_name(format!("{stem}.test.dcrn"))
}

fn write_pool<P: AsRef<Path>>(
    path: P,
    embeddings: &Matrix,
    labels: &[u32],
    n_classes: usize,
) -> Result<()> {
    let n = embeddings.rows();
    let d = embeddings.cols();
    let mut buf = Vec::with_capacity(28 + n * d * 8 + n * 4);
    buf.extend_from_slice(DATA_MAGIC);
    buf.extend_from_slice(&DATA_VERSION.to_le_bytes());
    buf.extend_from_slice(&(n as u64).to_le_bytes());
    buf.extend_from_slice(&(d as u32).to_le_bytes());
    buf.extend_from_slice(&(n_classes as u32).to_le_bytes());
    for &x in embeddings.as_slice() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    for &y in labels {
        buf.extend_from_slice(&y.to_le_bytes());
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

fn read_pool(path: &Path) -> Result<(Matrix, Vec<u32>, usize)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 28 || &bytes[..8] != DATA_MAGIC {
        return Err(Error::Format(format!(
            "{} is not a DCRNDATA file",
            path.display()
        )));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != DATA_VERSION {
        return Err(Error::Format(format!("unsupported data version {version}")));
    }
    let n = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[20..24].try_into().unwrap()) as usize;
    let n_classes = u32::from_le_bytes(bytes[24..28].try_into().unwrap()) as usize;
    let expected = 28 + n * d * 8 + n * 4;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "file size {} does not match header (expected {expected})",
            bytes.len()
        )));
    }
    let mut values = Vec::with_capacity(n * d);
    let mut off = 28;
    for _ in 0..n * d {
        values.push(f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()));
        off += 8;
    }
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        labels.push(u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()));
        off += 4;
    }
    Ok((Matrix::from_vec(n, d, values)?, labels, n_classes))
}

fn read_pool_csv(path: &Path) -> Result<(Matrix, Vec<u32>, usize)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty csv".into()))?;
    let cols = header.split(',').count();
    if cols < 2 {
        return Err(Error::Format("csv needs features plus a label column".into()));
    }
    let d = cols - 1;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols {
            return Err(Error::Format(format!(
                "csv line {} has {} fields, expected {cols}",
                lineno + 2,
                fields.len()
            )));
        }
        for f in &fields[..d] {
            values.push(f.trim().parse::<f64>().map_err(|_| {
                Error::Format(format!("bad float {f:?} on csv line {}", lineno + 2))
            })?);
        }
        labels.push(fields[d].trim().parse::<u32>().map_err(|_| {
            Error::Format(format!("bad label on csv line {}", lineno + 2))
        })?);
    }
    let n = labels.len();
    let n_classes = labels.iter().max().map_or(0, |&m| m as usize + 1);
    Ok((Matrix::from_vec(n, d, values)?, labels, n_classes))
}

/// Disjoint labeled/unlabeled index sets, kept sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolState {
    labeled: Vec<usize>,
    unlabeled: Vec<usize>,
    cycle: usize,
}

impl PoolState {
    /// All train indices start unlabeled.
    pub fn new(n: usize) -> Self {
        Self {
            labeled: Vec::new(),
            unlabeled: (0..n).collect(),
            cycle: 0,
        }
    }

    pub fn labeled(&self) -> &[usize] {
        &self.labeled
    }

    pub fn unlabeled(&self) -> &[usize] {
        &self.unlabeled
    }

    pub fn cycle(&self) -> usize {
        self.cycle
    }

    /// Move `selected` from the unlabeled pool to the labeled pool and
    /// advance the cycle counter.
    pub fn update(&mut self, selected: &[usize]) -> Result<()> {
        let mut chosen = selected.to_vec();
        chosen.sort_unstable();
        for w in chosen.windows(2) {
            if w[0] == w[1] {
                return Err(Error::InvalidInput(format!(
                    "duplicate selection: index {}",
                    w[0]
                )));
            }
        }
        for &i in &chosen {
            if self.labeled.binary_search(&i).is_ok() {
                return Err(Error::InvalidInput(format!(
                    "duplicate selection: index {i} is already labeled"
                )));
            }
            if self.unlabeled.binary_search(&i).is_err() {
                return Err(Error::InvalidInput(format!(
                    "index {i} is not in the unlabeled pool"
                )));
            }
        }
        self.unlabeled.retain(|i| chosen.binary_search(i).is_err());
        self.labeled.extend_from_slice(&chosen);
        self.labeled.sort_unstable();
        self.cycle += 1;
        Ok(())
    }
}

/// Labeling authority. Reveals ground truth on demand and records how many
/// annotations were spent; each sample may be revealed exactly once.
#[derive(Debug, Clone)]
pub struct Oracle {
    revealed: Vec<bool>,
    reveal_count: usize,
}

impl Oracle {
    pub fn new(n: usize) -> Self {
        Self {
            revealed: vec![false; n],
            reveal_count: 0,
        }
    }

    pub fn reveal_count(&self) -> usize {
        self.reveal_count
    }

    pub fn label(&mut self, dataset: &FeatureDataset, indices: &[usize]) -> Result<Vec<u32>> {
        let mut out = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= dataset.len() {
                return Err(Error::InvalidInput(format!(
                    "oracle index {i} out of range ({} samples)",
                    dataset.len()
                )));
            }
            if self.revealed[i] {
                return Err(Error::InvalidInput(format!(
                    "sample {i} was already annotated"
                )));
            }
            self.revealed[i] = true;
            self.reveal_count += 1;
            out.push(dataset.labels()[i]);
        }
        Ok(out)
    }
}

/// Draw `budget` distinct indices uniformly without replacement.
pub fn initial_seed_selection(
    dataset: &FeatureDataset,
    budget: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if budget > dataset.len() {
        return Err(Error::Infeasible(format!(
            "budget {budget} exceeds pool size {}",
            dataset.len()
        )));
    }
    let mut rng = seeding::rng(seed);
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    indices.shuffle(&mut rng);
    indices.truncate(budget);
    indices.sort_unstable();
    Ok(indices)
}

/// Per-class mean embedding and mean predicted probability over the
/// labeled samples. Classes without a labeled sample are flagged absent.
#[derive(Debug, Clone)]
pub struct AnchorSet {
    z_anchor: Matrix,
    p_anchor: Matrix,
    present: Vec<bool>,
}

impl AnchorSet {
    pub fn n_classes(&self) -> usize {
        self.present.len()
    }

    pub fn is_present(&self, class: usize) -> bool {
        self.present[class]
    }

    pub fn present_classes(&self) -> Vec<usize> {
        (0..self.present.len()).filter(|&j| self.present[j]).collect()
    }

    pub fn embedding(&self, class: usize) -> &[f64] {
        debug_assert!(self.present[class]);
        self.z_anchor.row(class)
    }

    pub fn probability(&self, class: usize) -> &[f64] {
        debug_assert!(self.present[class]);
        self.p_anchor.row(class)
    }
}

/// Build anchors by ascending-index summation over the labeled set.
pub fn build_anchors(
    head: &ClassifierHead,
    dataset: &FeatureDataset,
    labeled: &[usize],
) -> Result<AnchorSet> {
    if labeled.is_empty() {
        return Err(Error::InvalidInput("empty labeled set".into()));
    }
    let n_classes = dataset.n_classes();
    let d = dataset.dim();
    let mut z_anchor = Matrix::zeros(n_classes, d);
    let mut p_anchor = Matrix::zeros(n_classes, n_classes);
    let mut counts = vec![0usize; n_classes];

    let mut order: Vec<usize> = labeled.to_vec();
    order.sort_unstable();
    for &i in &order {
        let y = dataset.labels()[i] as usize;
        counts[y] += 1;
        let z = dataset.embeddings().row(i);
        let zr = z_anchor.row_mut(y);
        for (a, &b) in zr.iter_mut().zip(z.iter()) {
            *a += b;
        }
        let p = head.predict_proba(z)?;
        let pr = p_anchor.row_mut(y);
        for (a, &b) in pr.iter_mut().zip(p.iter()) {
            *a += b;
        }
    }
    let mut present = vec![false; n_classes];
    for j in 0..n_classes {
        if counts[j] > 0 {
            present[j] = true;
            let inv = 1.0 / counts[j] as f64;
            z_anchor.row_mut(j).iter_mut().for_each(|x| *x *= inv);
            p_anchor.row_mut(j).iter_mut().for_each(|x| *x *= inv);
        }
    }
    Ok(AnchorSet {
        z_anchor,
        p_anchor,
        present,
    })
}
