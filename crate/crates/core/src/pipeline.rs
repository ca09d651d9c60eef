//! Iterative pseudo-label domain adaptation and its diagnostics.
//!
//! One round: build `K_yy` from source labels and current target
//! pseudo-labels, assemble the objective with `M_j − δ M_h`, solve for `B`,
//! embed both domains with `Bᵀ K_xx` and re-label the target by k-NN against
//! the embedded source. `K_xx` depends only on features and is built once.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{simulate_label_shift, DomainPair, FeatureMatrix, HardLabels};
use crate::kernels::{feature_kernel, label_kernel, KernelMatrix, KernelSpec, LabelKernel};
use crate::mmd::{hsi_metric, jmmd_distance, mmd_marginal, DeltaWeight};
use crate::solver::{build_objective, build_pca_objective, embed, solve_projection, ObjectiveParams};
use crate::{Error, Result};

/// Euclidean k-NN majority vote over embedding columns. Vote ties go to the
/// class of the nearest tied neighbor; distance ties go to the lower training
/// index.
pub fn knn_predict(
    train: &FeatureMatrix,
    train_labels: &HardLabels,
    test: &FeatureMatrix,
    k: usize,
) -> Result<HardLabels> {
    let n_train = train.n_samples();
    if k == 0 || k > n_train {
        return Err(Error::Config(format!("k must satisfy 1 <= k <= {n_train}, got {k}")));
    }
    if train.dim() != test.dim() {
        return Err(Error::Dimension(format!(
            "train embeddings have {} dims, test embeddings {}",
            train.dim(),
            test.dim()
        )));
    }
    if train_labels.len() != n_train {
        return Err(Error::Dimension(format!(
            "{} labels for {n_train} training samples",
            train_labels.len()
        )));
    }
    let (tr, te) = (train.values(), test.values());
    let classes = train_labels.classes();
    let mut dists: Vec<(f64, usize)> = Vec::with_capacity(n_train);
    let mut votes = vec![0usize; classes];
    let ids = test
        .values()
        .column_iter()
        .enumerate()
        .map(|(j, _)| {
            dists.clear();
            dists.extend((0..n_train).map(|i| {
                let d: f64 = tr
                    .column(i)
                    .iter()
                    .zip(te.column(j).iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d, i)
            }));
            if k == 1 {
                let nearest = dists
                    .iter()
                    .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                    .unwrap();
                return train_labels.ids()[nearest.1];
            }
            dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            votes.iter_mut().for_each(|v| *v = 0);
            for &(_, i) in &dists[..k] {
                votes[train_labels.ids()[i]] += 1;
            }
            let top = *votes.iter().max().unwrap();
            dists[..k]
                .iter()
                .map(|&(_, i)| train_labels.ids()[i])
                .find(|&c| votes[c] == top)
                .unwrap()
        })
        .collect();
    HardLabels::new(ids, classes)
}

/// Feature preprocessing applied to both domains before anything else,
/// including the baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Normalization {
    /// Features are used as given.
    None,
    /// Every sample is scaled to unit Euclidean norm.
    #[default]
    UnitNorm,
    /// Every feature is standardized with the mean and standard deviation of
    /// the pooled source and target samples (no labels involved).
    ZScore,
}

impl Normalization {
    pub const ALL: [Normalization; 3] = [Normalization::None, Normalization::UnitNorm, Normalization::ZScore];

    pub fn name(self) -> &'static str {
        match self {
            Normalization::None => "none",
            Normalization::UnitNorm => "unit",
            Normalization::ZScore => "zscore",
        }
    }

    /// Returns the normalized `(source, target)`.
    pub fn apply(self, source: &FeatureMatrix, target: &FeatureMatrix) -> Result<(FeatureMatrix, FeatureMatrix)> {
        let all = source.concat(target)?;
        let mut x = all.into_inner();
        match self {
            Normalization::None => {}
            Normalization::UnitNorm => {
                for mut col in x.column_iter_mut() {
                    let norm = col.norm();
                    if norm > 0.0 {
                        col /= norm;
                    }
                }
            }
            Normalization::ZScore => {
                let n = x.ncols() as f64;
                for mut row in x.row_iter_mut() {
                    let mean = row.sum() / n;
                    row.add_scalar_mut(-mean);
                    let std = (row.norm_squared() / n).sqrt();
                    if std > 0.0 {
                        row /= std;
                    }
                }
            }
        }
        let x = FeatureMatrix::new(x)?;
        let (n_s, n_t) = (source.n_samples(), target.n_samples());
        Ok((x.columns(0, n_s), x.columns(n_s, n_t)))
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Normalization::ALL
            .into_iter()
            .find(|n| n.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown normalization {s:?}; expected none, unit or zscore")))
    }
}

/// What the projection learns from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// k-NN on raw features, no projection.
    Baseline,
    /// Kernel PCA: the objective without any MMD term.
    Pca,
    /// Unified JMMD with the given label kernel.
    Jmmd(LabelKernel),
}

/// Named configurations. Unstarred presets use `δ = 0`; starred ones use the
/// hyperparameter set's `δ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Preset {
    KnnBaseline,
    Pca,
    M,
    MStar,
    C,
    CStar,
    Wc,
    WcStar,
    Wwc,
    WwcStar,
}

impl Preset {
    /// Canonical report order.
    pub const ALL: [Preset; 10] = [
        Preset::KnnBaseline,
        Preset::Pca,
        Preset::M,
        Preset::MStar,
        Preset::C,
        Preset::CStar,
        Preset::Wc,
        Preset::WcStar,
        Preset::Wwc,
        Preset::WwcStar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::KnnBaseline => "KNN-baseline",
            Preset::Pca => "PCA",
            Preset::M => "M",
            Preset::MStar => "M*",
            Preset::C => "C",
            Preset::CStar => "C*",
            Preset::Wc => "WC",
            Preset::WcStar => "WC*",
            Preset::Wwc => "WWC",
            Preset::WwcStar => "WWC*",
        }
    }

    pub fn method(self) -> Method {
        match self {
            Preset::KnnBaseline => Method::Baseline,
            Preset::Pca => Method::Pca,
            Preset::M | Preset::MStar => Method::Jmmd(LabelKernel::Marginal),
            Preset::C | Preset::CStar => Method::Jmmd(LabelKernel::ClassConditional),
            Preset::Wc | Preset::WcStar => Method::Jmmd(LabelKernel::Weighted),
            Preset::Wwc | Preset::WwcStar => Method::Jmmd(LabelKernel::ShiftCorrected),
        }
    }

    pub fn starred(self) -> bool {
        matches!(self, Preset::MStar | Preset::CStar | Preset::WcStar | Preset::WwcStar)
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Preset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let valid: Vec<&str> = Preset::ALL.iter().map(|p| p.name()).collect();
                Error::Config(format!("unknown preset {s:?}; valid presets: {}", valid.join(", ")))
            })
    }
}

/// `λ`, `d`, `T` and the starred-preset `δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub lambda: f64,
    pub dim: usize,
    pub iters: usize,
    pub delta: f64,
}

impl HyperParams {
    /// Small-benchmark setting (10-class SURF tasks).
    pub const SMALL: HyperParams = HyperParams {
        lambda: 0.1,
        dim: 20,
        iters: 5,
        delta: 0.1,
    };

    /// Large-benchmark setting (31/65-class deep-feature tasks).
    pub const LARGE: HyperParams = HyperParams {
        lambda: 1.0,
        dim: 100,
        iters: 5,
        delta: 0.5,
    };
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams::SMALL
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    /// Name written into results.
    pub label: String,
    pub method: Method,
    pub delta: DeltaWeight,
    pub lambda: f64,
    pub dim: usize,
    pub iters: usize,
    pub kernel: KernelSpec,
    pub knn_k: usize,
    /// `None` uses the solver's relative default.
    pub ridge: Option<f64>,
    pub normalize_mmd: bool,
    pub normalization: Normalization,
}

impl MethodSpec {
    pub fn from_preset(preset: Preset, hp: &HyperParams) -> Result<Self> {
        let delta = if preset.starred() {
            DeltaWeight::new(hp.delta)?
        } else {
            DeltaWeight::ZERO
        };
        let spec = MethodSpec {
            label: preset.name().to_string(),
            method: preset.method(),
            delta,
            lambda: hp.lambda,
            dim: hp.dim,
            iters: hp.iters,
            kernel: KernelSpec::Linear,
            knn_k: 1,
            ridge: None,
            normalize_mmd: false,
            normalization: Normalization::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.iters == 0 {
            return Err(Error::Config("iteration count must be >= 1".into()));
        }
        if self.dim == 0 {
            return Err(Error::Config("projection dimension must be >= 1".into()));
        }
        if self.knn_k == 0 {
            return Err(Error::Config("knn k must be >= 1".into()));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        self.kernel.validate()
    }
}

/// Outcome of the learning loop. Produced without access to target truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Adaptation {
    /// Final representation of `source ∥ target` (raw features for the
    /// baseline).
    pub embedding: FeatureMatrix,
    /// Target predictions after each round.
    pub pseudo_labels: Vec<HardLabels>,
}

/// Runs the adaptation loop on source features/labels and target features.
pub fn adapt(
    source: &FeatureMatrix,
    source_labels: &HardLabels,
    target: &FeatureMatrix,
    method: &MethodSpec,
) -> Result<Adaptation> {
    method.validate()?;
    let (n_s, n_t) = (source.n_samples(), target.n_samples());
    if n_t == 0 {
        return Err(Error::Validation("target domain is empty".into()));
    }
    let classes = source_labels.classes();
    let (source, target) = method.normalization.apply(source, target)?;
    let (source, target) = (&source, &target);
    let all = source.concat(target)?;
    let raw_predictions = knn_predict(source, source_labels, target, method.knn_k)?;

    let split = |z: &FeatureMatrix| (z.columns(0, n_s), z.columns(n_s, n_t));
    match method.method {
        Method::Baseline => Ok(Adaptation {
            embedding: all,
            pseudo_labels: vec![raw_predictions; method.iters],
        }),
        Method::Pca => {
            let kxx = feature_kernel(&all, &method.kernel)?;
            let obj = build_pca_objective(&kxx, method.lambda)?;
            let z = embed(&solve_projection(&obj, method.dim, method.ridge)?, &kxx)?;
            let (zs, zt) = split(&z);
            let predictions = knn_predict(&zs, source_labels, &zt, method.knn_k)?;
            Ok(Adaptation {
                embedding: z,
                pseudo_labels: vec![predictions; method.iters],
            })
        }
        Method::Jmmd(variant) => {
            let kxx = feature_kernel(&all, &method.kernel)?;
            let params = ObjectiveParams {
                delta: method.delta,
                lambda: method.lambda,
                normalize_mmd: method.normalize_mmd,
            };
            let mut pseudo = raw_predictions;
            let mut history = Vec::with_capacity(method.iters);
            let mut embedding = None;
            for _ in 0..method.iters {
                let kyy = label_kernel(variant, source_labels, &pseudo, classes)?;
                let obj = build_objective(&kxx, &kyy, params, n_s, n_t)?;
                let z = embed(&solve_projection(&obj, method.dim, method.ridge)?, &kxx)?;
                let (zs, zt) = split(&z);
                pseudo = knn_predict(&zs, source_labels, &zt, method.knn_k)?;
                history.push(pseudo.clone());
                embedding = Some(z);
            }
            Ok(Adaptation {
                embedding: embedding.expect("at least one iteration"),
                pseudo_labels: history,
            })
        }
    }
}

/// Aggregate class-conditional feature distance and feature-label dependence
/// of an embedding, measured with a linear kernel on the embedding and the
/// weighted label kernel built from ground-truth labels.
pub fn embedding_diagnostics(
    embedding: &FeatureMatrix,
    source_labels: &HardLabels,
    target_truth: &HardLabels,
) -> Result<(f64, f64)> {
    let (n_s, n_t) = (source_labels.len(), target_truth.len());
    if embedding.n_samples() != n_s + n_t {
        return Err(Error::Dimension(format!(
            "embedding has {} samples, labels cover {}",
            embedding.n_samples(),
            n_s + n_t
        )));
    }
    let kz = KernelMatrix::linear(embedding);
    let kyy = label_kernel(
        LabelKernel::Weighted,
        source_labels,
        target_truth,
        source_labels.classes(),
    )?;
    let distance = jmmd_distance(&kz, &kyy, &mmd_marginal(n_s, n_t)?)?;
    let hsi = hsi_metric(&kz, &kyy, n_s, n_t)?;
    Ok((distance, hsi))
}

/// Record of one adaptation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub preset: String,
    pub seed: u64,
    /// Target accuracy after each round; empty without target truth.
    pub per_iteration_accuracy: Vec<f64>,
    pub final_accuracy: Option<f64>,
    #[serde(rename = "feature_distance")]
    pub final_feature_distance: Option<f64>,
    #[serde(rename = "hsi")]
    pub final_hsi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pseudo_label_history: Option<Vec<Vec<usize>>>,
}

/// Runs [`adapt`] and scores it against the pair's target truth, if any.
///
/// The loop itself only ever sees source features, source labels and target
/// features. `seed` is recorded; the loop is deterministic.
pub fn run_da(pair: &DomainPair, method: &MethodSpec, seed: u64) -> Result<RunResult> {
    let adaptation = adapt(
        pair.source_features(),
        pair.source_labels(),
        pair.target_features(),
        method,
    )?;
    let mut result = RunResult {
        preset: method.label.clone(),
        seed,
        per_iteration_accuracy: Vec::new(),
        final_accuracy: None,
        final_feature_distance: None,
        final_hsi: None,
        pseudo_label_history: Some(adaptation.pseudo_labels.iter().map(|p| p.ids().to_vec()).collect()),
    };
    if let Some(truth) = pair.target_truth() {
        result.per_iteration_accuracy = adaptation
            .pseudo_labels
            .iter()
            .map(|p| p.agreement(truth))
            .collect::<Result<_>>()?;
        result.final_accuracy = result.per_iteration_accuracy.last().copied();
        let (distance, hsi) = embedding_diagnostics(&adaptation.embedding, pair.source_labels(), truth)?;
        result.final_feature_distance = Some(distance);
        result.final_hsi = Some(hsi);
    }
    Ok(result)
}

/// `(feature_distance, hsi)` on the final embedding, measured with
/// ground-truth target labels.
pub fn evaluate_ablation(pair: &DomainPair, method: &MethodSpec, seed: u64) -> Result<(f64, f64)> {
    if pair.target_truth().is_none() {
        return Err(Error::Validation("ablation needs target ground truth".into()));
    }
    let result = run_da(pair, method, seed)?;
    Ok((
        result.final_feature_distance.expect("truth present"),
        result.final_hsi.expect("truth present"),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSummary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub per_run: Vec<RunResult>,
}

/// Mean and population standard deviation of `values`.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Repeats the 50%-drop label-shift protocol with seeds
/// `base_seed .. base_seed + repeats` and summarizes final accuracy.
pub fn run_label_shift_experiment(
    pair: &DomainPair,
    method: &MethodSpec,
    repeats: usize,
    base_seed: u64,
) -> Result<ShiftSummary> {
    if repeats == 0 {
        return Err(Error::Config("repeats must be >= 1".into()));
    }
    if pair.target_truth().is_none() {
        return Err(Error::Validation(
            "label shift experiment needs target ground truth".into(),
        ));
    }
    let per_run = (0..repeats as u64)
        .map(|r| {
            let seed = base_seed + r;
            let shifted = simulate_label_shift(pair, 0.5, seed)?;
            run_da(&shifted, method, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let accuracies: Vec<f64> = per_run
        .iter()
        .map(|r| r.final_accuracy.expect("truth present"))
        .collect();
    let (mean, std) = mean_std(&accuracies);
    Ok(ShiftSummary { mean, std, per_run })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use nalgebra::DMatrix;

    fn features(m: usize, vals: &[f64]) -> FeatureMatrix {
        FeatureMatrix::new(DMatrix::from_column_slice(m, vals.len() / m, vals)).unwrap()
    }

    fn labels(ids: &[usize], c: usize) -> HardLabels {
        HardLabels::new(ids.to_vec(), c).unwrap()
    }

    #[test]
    fn knn_exact_match() {
        let train = features(2, &[0.0, 0.0, 5.0, 5.0, -3.0, 1.0]);
        let y = labels(&[2, 0, 1], 3);
        let test = features(2, &[5.0, 5.0, -3.0, 1.0]);
        assert_eq!(knn_predict(&train, &y, &test, 1).unwrap().ids(), &[0, 1]);
    }

    #[test]
    fn knn_tie_goes_to_first_index() {
        let train = features(1, &[-1.0, 1.0]);
        let y = labels(&[1, 0], 2);
        let test = features(1, &[0.0]);
        assert_eq!(knn_predict(&train, &y, &test, 2).unwrap().ids(), &[1]);
        assert_eq!(knn_predict(&train, &y, &test, 1).unwrap().ids(), &[1]);
    }

    #[test]
    fn knn_vote_tie_goes_to_nearest() {
        let train = features(1, &[0.5, -0.4, 2.0, -2.5]);
        let y = labels(&[0, 1, 0, 1], 2);
        let test = features(1, &[0.0]);
        assert_eq!(knn_predict(&train, &y, &test, 4).unwrap().ids(), &[1]);
        assert_eq!(knn_predict(&train, &y, &test, 3).unwrap().ids(), &[0]);
    }

    #[test]
    fn knn_errors() {
        let train = features(1, &[0.0, 1.0]);
        let y = labels(&[0, 1], 2);
        assert!(knn_predict(&train, &y, &features(1, &[0.0]), 3).is_err());
        assert!(knn_predict(&train, &y, &features(2, &[0.0, 0.0]), 1).is_err());
    }

    #[test]
    fn knn_unshifted_blobs() {
        let pair = generate_synthetic(&SyntheticSpec::balanced(4, 30, 6, 8.0, 0.0, 2)).unwrap();
        let pred = knn_predict(pair.source_features(), pair.source_labels(), pair.target_features(), 1).unwrap();
        assert!(pred.agreement(pair.target_truth().unwrap()).unwrap() >= 0.9);
    }

    #[test]
    fn preset_names_round_trip() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        let err = "XYZ".parse::<Preset>().unwrap_err().to_string();
        assert!(err.contains("WWC*") && err.contains("KNN-baseline"));
    }

    #[test]
    fn preset_mapping() {
        let hp = HyperParams::SMALL;
        let wc = MethodSpec::from_preset(Preset::Wc, &hp).unwrap();
        let wcs = MethodSpec::from_preset(Preset::WcStar, &hp).unwrap();
        assert_eq!(wc.method, Method::Jmmd(LabelKernel::Weighted));
        assert_eq!(wc.delta.get(), 0.0);
        assert_eq!(wcs.delta.get(), 0.1);
        assert_eq!(
            MethodSpec::from_preset(Preset::WwcStar, &hp).unwrap().method,
            Method::Jmmd(LabelKernel::ShiftCorrected)
        );
        assert_eq!((hp.lambda, hp.dim, hp.iters), (0.1, 20, 5));
        assert_eq!(
            (
                HyperParams::LARGE.lambda,
                HyperParams::LARGE.dim,
                HyperParams::LARGE.delta
            ),
            (1.0, 100, 0.5)
        );
    }

    #[test]
    fn identical_domains_are_fully_recovered() {
        let pair = generate_synthetic(&SyntheticSpec::balanced(3, 10, 5, 2.0, 0.0, 4)).unwrap();
        let same = DomainPair::new(
            pair.source_features().clone(),
            pair.source_labels().clone(),
            pair.source_features().clone(),
            Some(pair.source_labels().clone()),
        )
        .unwrap();
        let mut spec = MethodSpec::from_preset(Preset::Wc, &HyperParams::SMALL).unwrap();
        spec.dim = 4;
        let result = run_da(&same, &spec, 0).unwrap();
        assert_eq!(result.final_accuracy, Some(1.0));
        assert_eq!(result.per_iteration_accuracy.len(), spec.iters);
        let (distance, _) = evaluate_ablation(&same, &spec, 0).unwrap();
        assert!(distance.abs() < 1e-9, "distance {distance}");
    }

    #[test]
    fn run_without_truth_has_no_scores() {
        let pair = generate_synthetic(&SyntheticSpec::balanced(3, 8, 5, 4.0, 1.0, 4)).unwrap();
        let blind = DomainPair::new(
            pair.source_features().clone(),
            pair.source_labels().clone(),
            pair.target_features().clone(),
            None,
        )
        .unwrap();
        let mut spec = MethodSpec::from_preset(Preset::CStar, &HyperParams::SMALL).unwrap();
        spec.dim = 4;
        let r = run_da(&blind, &spec, 3).unwrap();
        assert!(r.per_iteration_accuracy.is_empty());
        assert_eq!(r.final_accuracy, None);
        assert_eq!(r.pseudo_label_history.as_ref().unwrap().len(), spec.iters);
        assert!(evaluate_ablation(&blind, &spec, 0).is_err());
    }

    #[test]
    fn shift_experiment_single_repeat_has_zero_std() {
        let pair = generate_synthetic(&SyntheticSpec::balanced(4, 10, 6, 4.0, 1.0, 8)).unwrap();
        let mut spec = MethodSpec::from_preset(Preset::Wwc, &HyperParams::SMALL).unwrap();
        spec.dim = 5;
        let one = run_label_shift_experiment(&pair, &spec, 1, 3).unwrap();
        assert_eq!(one.std, 0.0);
        let a = run_label_shift_experiment(&pair, &spec, 3, 3).unwrap();
        let b = run_label_shift_experiment(&pair, &spec, 3, 3).unwrap();
        assert_eq!(a, b);
        assert!(run_label_shift_experiment(&pair, &spec, 0, 3).is_err());
    }

    #[test]
    fn mean_std_population() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 1.0));
    }

    #[test]
    fn run_result_json_field_names() {
        let r = RunResult {
            preset: "WC".into(),
            seed: 3,
            per_iteration_accuracy: vec![0.5, 0.75],
            final_accuracy: Some(0.75),
            final_feature_distance: Some(0.1),
            final_hsi: Some(0.2),
            pseudo_label_history: None,
        };
        let value = serde_json::to_value(&r).unwrap();
        let mut keys: Vec<&str> = value.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort_unstable();
        assert_eq!(
            keys,
            [
                "feature_distance",
                "final_accuracy",
                "hsi",
                "per_iteration_accuracy",
                "preset",
                "seed"
            ]
        );
        let back: RunResult = serde_json::from_value(value).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn normalization_names_round_trip() {
        for n in Normalization::ALL {
            assert_eq!(n.name().parse::<Normalization>().unwrap(), n);
        }
        assert!("l1".parse::<Normalization>().is_err());
    }

    #[test]
    fn unit_and_zscore_normalization() {
        let xs = features(2, &[3.0, 4.0, 0.0, 2.0]);
        let xt = features(2, &[1.0, 0.0]);
        let (s, t) = Normalization::UnitNorm.apply(&xs, &xt).unwrap();
        for col in s.values().column_iter().chain(t.values().column_iter()) {
            assert!((col.norm() - 1.0).abs() < 1e-15);
        }
        let (s, t) = Normalization::ZScore.apply(&xs, &xt).unwrap();
        let all = s.concat(&t).unwrap();
        for row in all.values().row_iter() {
            assert!(row.mean().abs() < 1e-15);
            assert!((row.variance() - 1.0).abs() < 1e-12);
        }
        let (s, _) = Normalization::None.apply(&xs, &xt).unwrap();
        assert_eq!(s, xs);
    }
}
