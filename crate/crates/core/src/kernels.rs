//! Feature kernels over `source ∥ target` samples and the four label kernels.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::{FeatureMatrix, HardLabels};
use crate::numeric::{is_symmetric, symmetrize};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bandwidth {
    Fixed(f64),
    /// Median pairwise Euclidean distance, see [`median_bandwidth`].
    Median,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub enum KernelSpec {
    #[default]
    Linear,
    Rbf {
        bandwidth: Bandwidth,
    },
    Polynomial {
        degree: u32,
        offset: f64,
    },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Rbf {
                bandwidth: Bandwidth::Fixed(s),
            } if !(s > 0.0 && s.is_finite()) => Err(Error::Config(format!("rbf bandwidth must be positive, got {s}"))),
            KernelSpec::Rbf { .. } => Ok(()),
            KernelSpec::Polynomial { degree: 0, .. } => Err(Error::Config("polynomial degree must be >= 1".into())),
            KernelSpec::Polynomial { offset, .. } if !offset.is_finite() => {
                Err(Error::Config("polynomial offset must be finite".into()))
            }
            KernelSpec::Polynomial { .. } => Ok(()),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    /// `linear`, `rbf` (median heuristic), `rbf:<sigma>`, `poly` (degree 2,
    /// offset 1) or `poly:<degree>:<offset>`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let bad = || {
            Error::Config(format!(
                "unknown kernel {s:?}; expected linear, rbf[:sigma] or poly[:degree:offset]"
            ))
        };
        let spec = match parts.as_slice() {
            ["linear"] => KernelSpec::Linear,
            ["rbf"] => KernelSpec::Rbf {
                bandwidth: Bandwidth::Median,
            },
            ["rbf", sigma] => KernelSpec::Rbf {
                bandwidth: Bandwidth::Fixed(sigma.parse().map_err(|_| bad())?),
            },
            ["poly"] => KernelSpec::Polynomial { degree: 2, offset: 1.0 },
            ["poly", degree, offset] => KernelSpec::Polynomial {
                degree: degree.parse().map_err(|_| bad())?,
                offset: offset.parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Linear => write!(f, "linear"),
            KernelSpec::Rbf {
                bandwidth: Bandwidth::Median,
            } => write!(f, "rbf"),
            KernelSpec::Rbf {
                bandwidth: Bandwidth::Fixed(s),
            } => write!(f, "rbf:{s}"),
            KernelSpec::Polynomial { degree, offset } => write!(f, "poly:{degree}:{offset}"),
        }
    }
}

/// Label-kernel variants. Paired with the marginal MMD matrix they reproduce
/// marginal MMD (1), class-wise MMD (2), weighted class-wise MMD (3) and the
/// label-shift corrected weighting (4).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabelKernel {
    Marginal,
    ClassConditional,
    Weighted,
    ShiftCorrected,
}

impl LabelKernel {
    pub const ALL: [LabelKernel; 4] = [
        LabelKernel::Marginal,
        LabelKernel::ClassConditional,
        LabelKernel::Weighted,
        LabelKernel::ShiftCorrected,
    ];

    pub fn from_variant(variant: u8) -> Result<Self> {
        match variant {
            1 => Ok(LabelKernel::Marginal),
            2 => Ok(LabelKernel::ClassConditional),
            3 => Ok(LabelKernel::Weighted),
            4 => Ok(LabelKernel::ShiftCorrected),
            v => Err(Error::Config(format!("label kernel variant must be 1..=4, got {v}"))),
        }
    }

    pub fn variant(self) -> u8 {
        match self {
            LabelKernel::Marginal => 1,
            LabelKernel::ClassConditional => 2,
            LabelKernel::Weighted => 3,
            LabelKernel::ShiftCorrected => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    Feature,
    Label(LabelKernel),
}

/// Symmetric `n_st × n_st` Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    values: DMatrix<f64>,
    kind: KernelKind,
}

impl KernelMatrix {
    /// Wraps an arbitrary square matrix, symmetrizing it. Fails if the input is
    /// not square, not finite, or asymmetric beyond `1e-8` relative.
    pub fn from_values(mut values: DMatrix<f64>, kind: KernelKind) -> Result<Self> {
        if !values.is_square() {
            return Err(Error::Dimension(format!(
                "kernel matrix must be square, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("kernel matrix has non-finite entries".into()));
        }
        let scale = values.amax().max(1.0);
        if !is_symmetric(&values, 1e-8 * scale) {
            return Err(Error::Validation("kernel matrix is not symmetric".into()));
        }
        symmetrize(&mut values);
        Ok(Self { values, kind })
    }

    /// Linear kernel of an embedding, `Zᵀ Z`.
    pub fn linear(z: &FeatureMatrix) -> Self {
        let mut values = z.values().tr_mul(z.values());
        symmetrize(&mut values);
        Self {
            values,
            kind: KernelKind::Feature,
        }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn size(&self) -> usize {
        self.values.nrows()
    }
}

fn squared_distances(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.ncols();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (x.column(i) - x.column(j)).norm_squared();
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Median of pairwise Euclidean distances over all `i < j`.
pub fn median_bandwidth(x: &FeatureMatrix) -> Result<f64> {
    let n = x.n_samples();
    if n < 2 {
        return Err(Error::Validation("median bandwidth needs at least two samples".into()));
    }
    let v = x.values();
    let mut dists: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            dists.push((v.column(i) - v.column(j)).norm());
        }
    }
    dists.sort_by(f64::total_cmp);
    let k = dists.len();
    let median = if k % 2 == 1 {
        dists[k / 2]
    } else {
        0.5 * (dists[k / 2 - 1] + dists[k / 2])
    };
    if median <= 0.0 {
        return Err(Error::Numerical(
            "median pairwise distance is zero (duplicate points); set an explicit rbf bandwidth".into(),
        ));
    }
    Ok(median)
}

/// Feature kernel `K_xx` over the columns of `x`.
pub fn feature_kernel(x: &FeatureMatrix, spec: &KernelSpec) -> Result<KernelMatrix> {
    spec.validate()?;
    let v = x.values();
    let mut values = match *spec {
        KernelSpec::Linear => v.tr_mul(v),
        KernelSpec::Polynomial { degree, offset } => v.tr_mul(v).map(|g| (g + offset).powi(degree as i32)),
        KernelSpec::Rbf { bandwidth } => {
            let sigma = match bandwidth {
                Bandwidth::Fixed(s) => s,
                Bandwidth::Median => median_bandwidth(x)?,
            };
            let scale = 1.0 / (2.0 * sigma * sigma);
            squared_distances(v).map(|d| (-d * scale).exp())
        }
    };
    symmetrize(&mut values);
    Ok(KernelMatrix {
        values,
        kind: KernelKind::Feature,
    })
}

/// Label kernel over `source ∥ target` labels.
///
/// Variants 2–4 are block-structured: `K_ij = w_i · w_j` when samples `i` and
/// `j` share a class and zero otherwise, with per-sample weights
///
/// | variant | source weight | target weight |
/// |---------|---------------|---------------|
/// | 2 | `n_s / n_s^(c)` | `n_t / n_t^(c)` |
/// | 3 | `1` | `1` |
/// | 4 | `n_t^(c) n_s / (n_t n_s^(c))` | `1` |
///
/// A class whose required counts are zero (variant 2: absent from either
/// domain; variant 4: absent from the source) contributes zero entries.
pub fn label_kernel(
    variant: LabelKernel,
    source: &HardLabels,
    target: &HardLabels,
    classes: usize,
) -> Result<KernelMatrix> {
    if source.classes() != classes || target.classes() != classes {
        return Err(Error::Validation(format!(
            "label class counts ({}, {}) do not match C = {classes}",
            source.classes(),
            target.classes()
        )));
    }
    let (n_s, n_t) = (source.len(), target.len());
    let n = n_s + n_t;
    let kind = KernelKind::Label(variant);
    if variant == LabelKernel::Marginal {
        return Ok(KernelMatrix {
            values: DMatrix::from_element(n, n, 1.0),
            kind,
        });
    }

    let cs = source.counts();
    let ct = target.counts();
    // Ratios are formed from exact integer products so that equal class
    // proportions give weights of exactly 1.
    let ratio = |num: usize, den: usize| num as f64 / den as f64;
    let source_weight = |c: usize| -> f64 {
        let (ns_c, nt_c) = (cs.get(c), ct.get(c));
        match variant {
            LabelKernel::ClassConditional if ns_c > 0 && nt_c > 0 => ratio(n_s, ns_c),
            LabelKernel::Weighted => 1.0,
            LabelKernel::ShiftCorrected if ns_c > 0 => ratio(nt_c * n_s, n_t * ns_c),
            _ => 0.0,
        }
    };
    let target_weight = |c: usize| -> f64 {
        let (ns_c, nt_c) = (cs.get(c), ct.get(c));
        match variant {
            LabelKernel::ClassConditional if ns_c > 0 && nt_c > 0 => ratio(n_t, nt_c),
            LabelKernel::Weighted => 1.0,
            LabelKernel::ShiftCorrected if ns_c > 0 => 1.0,
            _ => 0.0,
        }
    };

    let ids: Vec<usize> = source.ids().iter().chain(target.ids()).copied().collect();
    let weights: Vec<f64> = ids
        .iter()
        .enumerate()
        .map(|(i, &c)| if i < n_s { source_weight(c) } else { target_weight(c) })
        .collect();
    let values = DMatrix::from_fn(
        n,
        n,
        |i, j| {
            if ids[i] == ids[j] {
                weights[i] * weights[j]
            } else {
                0.0
            }
        },
    );
    Ok(KernelMatrix { values, kind })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdReport {
    pub min_eigenvalue: f64,
    pub passed: bool,
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// Smallest eigenvalue of `k`; passes iff it is at least `-tol`.
pub fn psd_report(k: &DMatrix<f64>, tol: f64) -> PsdReport {
    let min_eigenvalue = min_eigenvalue(k);
    PsdReport {
        min_eigenvalue,
        passed: min_eigenvalue >= -tol,
    }
}
