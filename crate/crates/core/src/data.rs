//! Domains: feature matrices, labels, loading, synthetic generation and the
//! label-distribution-shift protocol.
//!
//! Features are stored samples-as-columns (`m × n`), matching the usual
//! `X ∈ R^{m×n}` convention. Files on disk are the transpose: one sample per
//! line, comma-separated.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// Real `m × n` matrix, one sample per column.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(DMatrix<f64>);

impl FeatureMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::Validation(format!(
                "feature matrix must be non-empty, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (row, col) = (pos % values.nrows(), pos / values.nrows());
            return Err(Error::Validation(format!(
                "non-finite feature value at dim {row}, sample {col}"
            )));
        }
        Ok(Self(values))
    }

    /// Builds from per-sample rows (the on-disk orientation).
    pub fn from_sample_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != m) {
            return Err(Error::Validation(format!(
                "sample {bad} has {} values, expected {m}",
                rows[bad].len()
            )));
        }
        Self::new(DMatrix::from_fn(m, n, |i, j| rows[j][i]))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.0.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// Columns `[start, start + len)`.
    pub fn columns(&self, start: usize, len: usize) -> FeatureMatrix {
        FeatureMatrix(self.0.columns(start, len).into_owned())
    }

    pub fn select(&self, samples: &[usize]) -> FeatureMatrix {
        FeatureMatrix(self.0.select_columns(samples))
    }

    /// `self ∥ other` along the sample axis.
    pub fn concat(&self, other: &FeatureMatrix) -> Result<FeatureMatrix> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension(format!(
                "feature dimensions differ: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        let (m, a, b) = (self.dim(), self.n_samples(), other.n_samples());
        let mut out = DMatrix::zeros(m, a + b);
        out.columns_mut(0, a).copy_from(&self.0);
        out.columns_mut(a, b).copy_from(&other.0);
        Ok(FeatureMatrix(out))
    }
}

/// Hard class assignments in `[0, classes)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HardLabels {
    ids: Vec<usize>,
    classes: usize,
}

impl HardLabels {
    pub fn new(ids: Vec<usize>, classes: usize) -> Result<Self> {
        if classes == 0 {
            return Err(Error::Validation("class count must be positive".into()));
        }
        if let Some((i, &id)) = ids.iter().enumerate().find(|(_, &id)| id >= classes) {
            return Err(Error::Validation(format!(
                "label {id} at position {i} is out of range for {classes} classes"
            )));
        }
        Ok(Self { ids, classes })
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn counts(&self) -> ClassCounts {
        class_counts(self)
    }

    pub fn select(&self, samples: &[usize]) -> HardLabels {
        HardLabels {
            ids: samples.iter().map(|&i| self.ids[i]).collect(),
            classes: self.classes,
        }
    }

    pub fn one_hot(&self) -> SoftLabels {
        let mut probs = DMatrix::zeros(self.classes, self.ids.len());
        for (j, &c) in self.ids.iter().enumerate() {
            probs[(c, j)] = 1.0;
        }
        SoftLabels(probs)
    }

    /// Fraction of positions where `self` and `other` agree.
    pub fn agreement(&self, other: &HardLabels) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::Dimension(format!(
                "label lengths differ: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        if self.is_empty() {
            return Ok(0.0);
        }
        let hits = self.ids.iter().zip(&other.ids).filter(|(a, b)| a == b).count();
        Ok(hits as f64 / self.len() as f64)
    }
}

/// Column-stochastic `C × n` class-probability matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabels(DMatrix<f64>);

impl SoftLabels {
    pub fn new(probs: DMatrix<f64>) -> Result<Self> {
        if probs.nrows() == 0 {
            return Err(Error::Validation("soft labels need at least one class".into()));
        }
        for (j, col) in probs.column_iter().enumerate() {
            if col.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Validation(format!(
                    "soft label column {j} has an entry outside [0, 1]"
                )));
            }
            let total: f64 = col.sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Validation(format!(
                    "soft label column {j} sums to {total}, expected 1"
                )));
            }
        }
        Ok(Self(probs))
    }

    pub fn classes(&self) -> usize {
        self.0.nrows()
    }

    pub fn len(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.0.ncols() == 0
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Per-column argmax; ties go to the lowest class index.
pub fn harden(soft: &SoftLabels) -> HardLabels {
    let ids = soft
        .0
        .column_iter()
        .map(|col| {
            let mut best = 0;
            for (c, &p) in col.iter().enumerate() {
                if p > col[best] {
                    best = c;
                }
            }
            best
        })
        .collect();
    HardLabels {
        ids,
        classes: soft.classes(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassCounts {
    counts: Vec<usize>,
    total: usize,
}

impl ClassCounts {
    pub fn get(&self, class: usize) -> usize {
        self.counts[class]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.total
    }
}

pub fn class_counts(labels: &HardLabels) -> ClassCounts {
    let mut counts = vec![0; labels.classes];
    for &c in &labels.ids {
        counts[c] += 1;
    }
    ClassCounts {
        counts,
        total: labels.len(),
    }
}

/// Labeled source, unlabeled target and optional held-out target truth.
///
/// The truth is evaluation-only: nothing in [`crate::pipeline`] that learns a
/// projection or pseudo-labels ever receives it.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainPair {
    source_features: FeatureMatrix,
    source_labels: HardLabels,
    target_features: FeatureMatrix,
    target_truth: Option<HardLabels>,
}

impl DomainPair {
    pub fn new(
        source_features: FeatureMatrix,
        source_labels: HardLabels,
        target_features: FeatureMatrix,
        target_truth: Option<HardLabels>,
    ) -> Result<Self> {
        if source_features.dim() != target_features.dim() {
            return Err(Error::Dimension(format!(
                "source has {} feature dims, target has {}",
                source_features.dim(),
                target_features.dim()
            )));
        }
        if source_labels.len() != source_features.n_samples() {
            return Err(Error::Validation(format!(
                "{} source labels for {} source samples",
                source_labels.len(),
                source_features.n_samples()
            )));
        }
        if let Some(truth) = &target_truth {
            if truth.len() != target_features.n_samples() {
                return Err(Error::Validation(format!(
                    "{} target labels for {} target samples",
                    truth.len(),
                    target_features.n_samples()
                )));
            }
            if truth.classes() != source_labels.classes() {
                return Err(Error::Validation(format!(
                    "source has {} classes, target truth has {}",
                    source_labels.classes(),
                    truth.classes()
                )));
            }
        }
        Ok(Self {
            source_features,
            source_labels,
            target_features,
            target_truth,
        })
    }

    pub fn source_features(&self) -> &FeatureMatrix {
        &self.source_features
    }

    pub fn source_labels(&self) -> &HardLabels {
        &self.source_labels
    }

    pub fn target_features(&self) -> &FeatureMatrix {
        &self.target_features
    }

    pub fn target_truth(&self) -> Option<&HardLabels> {
        self.target_truth.as_ref()
    }

    pub fn n_s(&self) -> usize {
        self.source_features.n_samples()
    }

    pub fn n_t(&self) -> usize {
        self.target_features.n_samples()
    }

    pub fn n_st(&self) -> usize {
        self.n_s() + self.n_t()
    }

    pub fn classes(&self) -> usize {
        self.source_labels.classes()
    }

    pub fn dim(&self) -> usize {
        self.source_features.dim()
    }

    /// `source ∥ target` feature columns.
    pub fn all_features(&self) -> FeatureMatrix {
        self.source_features
            .concat(&self.target_features)
            .expect("dimensions checked on construction")
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Loads a feature file (one comma-separated sample per line) and an optional
/// labels file (one 0-based class id per line).
pub fn load_domain(
    features_path: &Path,
    labels_path: Option<&Path>,
    classes: usize,
) -> Result<(FeatureMatrix, Option<HardLabels>)> {
    let text = read_to_string(features_path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: features_path.to_path_buf(),
            line: lineno + 1,
            message,
        };
        let row = line
            .split(',')
            .map(|tok| {
                let tok = tok.trim();
                match tok.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    Ok(_) => Err(parse_err(format!("non-finite value {tok:?}"))),
                    Err(_) => Err(parse_err(format!("invalid number {tok:?}"))),
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(parse_err(format!(
                    "ragged row: {} values, expected {}",
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: features_path.to_path_buf(),
            line: 0,
            message: "no samples".into(),
        });
    }
    let features = FeatureMatrix::from_sample_rows(&rows)?;

    let labels = match labels_path {
        None => None,
        Some(path) => {
            let text = read_to_string(path)?;
            let mut ids = Vec::new();
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() {
                    continue;
                }
                let id = line.parse::<usize>().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    message: format!("invalid label {line:?}"),
                })?;
                ids.push(id);
            }
            if ids.len() != features.n_samples() {
                return Err(Error::Validation(format!(
                    "{} has {} labels but {} has {} samples",
                    path.display(),
                    ids.len(),
                    features_path.display(),
                    features.n_samples()
                )));
            }
            Some(HardLabels::new(ids, classes)?)
        }
    };
    Ok((features, labels))
}

/// Writes features in the format read by [`load_domain`]. Values use the
/// shortest representation that re-parses to the same `f64`.
pub fn save_features(path: &Path, features: &FeatureMatrix) -> Result<()> {
    let mut out = String::new();
    for col in features.0.column_iter() {
        let line: Vec<String> = col.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

pub fn save_labels(path: &Path, labels: &HardLabels) -> Result<()> {
    let mut out = String::new();
    for id in &labels.ids {
        out.push_str(&id.to_string());
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Isotropic unit-variance Gaussian blobs, one per class.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class_source: Vec<usize>,
    pub per_class_target: Vec<usize>,
    pub dim: usize,
    /// Pairwise distance between class means.
    pub class_separation: f64,
    /// Norm of the translation applied to every target class mean.
    pub domain_shift: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Same count for every class in both domains.
    pub fn balanced(
        classes: usize,
        per_class: usize,
        dim: usize,
        class_separation: f64,
        domain_shift: f64,
        seed: u64,
    ) -> Self {
        Self {
            classes,
            per_class_source: vec![per_class; classes],
            per_class_target: vec![per_class; classes],
            dim,
            class_separation,
            domain_shift,
            seed,
        }
    }
}

const STREAM_MEANS: u64 = 0;
const STREAM_SHIFT: u64 = 1;
const STREAM_SOURCE: u64 = 2;
const STREAM_TARGET: u64 = 3;

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian_vector(rng: &mut ChaCha8Rng, dim: usize) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.sample(StandardNormal))
}

/// Draws a [`DomainPair`] from `spec`. Class means sit on scaled coordinate
/// axes when `classes ≤ dim` (pairwise distance exactly `class_separation`),
/// otherwise on random directions of the same radius. Target means are the
/// source means plus one random vector of norm `domain_shift`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<DomainPair> {
    let c = spec.classes;
    if c < 2 {
        return Err(Error::Config(format!("need at least 2 classes, got {c}")));
    }
    if spec.dim < 2 {
        return Err(Error::Config(format!("need dim >= 2, got {}", spec.dim)));
    }
    if spec.per_class_source.len() != c || spec.per_class_target.len() != c {
        return Err(Error::Config(format!(
            "per-class counts must have {c} entries (source {}, target {})",
            spec.per_class_source.len(),
            spec.per_class_target.len()
        )));
    }
    if let Some(k) = (0..c).find(|&k| spec.per_class_source[k] + spec.per_class_target[k] == 0) {
        return Err(Error::Config(format!("class {k} has no samples in either domain")));
    }
    if spec.per_class_source.iter().sum::<usize>() == 0 || spec.per_class_target.iter().sum::<usize>() == 0 {
        return Err(Error::Config("both domains need at least one sample".into()));
    }
    if !(spec.class_separation.is_finite() && spec.domain_shift.is_finite()) {
        return Err(Error::Config("separation and shift must be finite".into()));
    }

    let radius = spec.class_separation / std::f64::consts::SQRT_2;
    let mut mean_rng = stream(spec.seed, STREAM_MEANS);
    let means: Vec<DVector<f64>> = (0..c)
        .map(|k| {
            if c <= spec.dim {
                let mut v = DVector::zeros(spec.dim);
                v[k] = radius;
                v
            } else {
                let g = gaussian_vector(&mut mean_rng, spec.dim);
                g.normalize() * radius
            }
        })
        .collect();

    let mut shift_rng = stream(spec.seed, STREAM_SHIFT);
    let direction = gaussian_vector(&mut shift_rng, spec.dim).normalize();
    let shift = direction * spec.domain_shift;

    let draw = |rng: &mut ChaCha8Rng, counts: &[usize], offset: &DVector<f64>| {
        let mut rows = Vec::new();
        let mut ids = Vec::new();
        for (k, &count) in counts.iter().enumerate() {
            for _ in 0..count {
                let x = &means[k] + offset + gaussian_vector(rng, spec.dim);
                rows.push(x.iter().copied().collect::<Vec<f64>>());
                ids.push(k);
            }
        }
        (rows, ids)
    };

    let zero = DVector::zeros(spec.dim);
    let (src_rows, src_ids) = draw(&mut stream(spec.seed, STREAM_SOURCE), &spec.per_class_source, &zero);
    let (tgt_rows, tgt_ids) = draw(&mut stream(spec.seed, STREAM_TARGET), &spec.per_class_target, &shift);

    DomainPair::new(
        FeatureMatrix::from_sample_rows(&src_rows)?,
        HardLabels::new(src_ids, c)?,
        FeatureMatrix::from_sample_rows(&tgt_rows)?,
        Some(HardLabels::new(tgt_ids, c)?),
    )
}

/// Indices kept after dropping `⌊fraction · n_c⌋` random members of every
/// class in `affected`. Survivors keep their original order.
fn drop_per_class(
    labels: &HardLabels,
    affected: impl Fn(usize) -> bool,
    fraction: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let mut dropped = vec![false; labels.len()];
    for c in 0..labels.classes {
        if !affected(c) {
            continue;
        }
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels.ids[i] == c).collect();
        let n_drop = (fraction * members.len() as f64).floor() as usize;
        for pick in index::sample(rng, members.len(), n_drop) {
            dropped[members[pick]] = true;
        }
    }
    (0..labels.len()).filter(|&i| !dropped[i]).collect()
}

/// Label-distribution shift: drops `⌊drop_fraction · n_c⌋` random samples from
/// every class `c < ⌊C/2⌋` in the source and every class `c ≥ ⌊C/2⌋` in the
/// target.
pub fn simulate_label_shift(pair: &DomainPair, drop_fraction: f64, seed: u64) -> Result<DomainPair> {
    if !(0.0..1.0).contains(&drop_fraction) {
        return Err(Error::Config(format!(
            "drop fraction must lie in [0, 1), got {drop_fraction}"
        )));
    }
    let truth = pair.target_truth().ok_or_else(|| {
        Error::Validation("label shift needs target ground truth to drop target samples by class".into())
    })?;
    let half = pair.classes() / 2;

    let keep_source = drop_per_class(pair.source_labels(), |c| c < half, drop_fraction, &mut stream(seed, 0));
    let keep_target = drop_per_class(truth, |c| c >= half, drop_fraction, &mut stream(seed, 1));

    let source_labels = pair.source_labels().select(&keep_source);
    if let Some(c) = source_labels.counts().as_slice().iter().position(|&n| n == 0) {
        return Err(Error::Validation(format!(
            "class {c} has no source samples after the label shift"
        )));
    }
    if keep_target.is_empty() {
        return Err(Error::Validation("label shift removed every target sample".into()));
    }

    DomainPair::new(
        pair.source_features().select(&keep_source),
        source_labels,
        pair.target_features().select(&keep_target),
        Some(truth.select(&keep_target)),
    )
}
