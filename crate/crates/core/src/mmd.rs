//! MMD coefficient matrices and the joint distances built from them.
//!
//! Every distance is evaluated as `tr((K_xx ⊙ K_yy) · M)`, the exact
//! expansion of the squared Hilbert–Schmidt norm between the two empirical
//! joint embeddings. [`brute_force_jmmd`] computes the same norm from explicit
//! (linear-kernel) embeddings and serves as the independent oracle.

use nalgebra::DMatrix;

use crate::data::{FeatureMatrix, HardLabels, SoftLabels};
use crate::kernels::KernelMatrix;
use crate::numeric::CompensatedSum;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MmdKind {
    Marginal,
    Classwise(usize),
    WeightedClasswise(usize),
    Hsi,
    Novel(f64),
}

/// Symmetric `n_st × n_st` coefficient matrix over `source ∥ target` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct MmdMatrix {
    values: DMatrix<f64>,
    kind: MmdKind,
}

impl MmdMatrix {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn kind(&self) -> MmdKind {
        self.kind
    }

    pub fn size(&self) -> usize {
        self.values.nrows()
    }

    pub(crate) fn with_values(&self, values: DMatrix<f64>) -> MmdMatrix {
        MmdMatrix {
            values,
            kind: self.kind,
        }
    }

    /// Entrywise sum of matrices of equal size, e.g. `Σ_c M_c^(c)`.
    pub fn sum<'a>(parts: impl IntoIterator<Item = &'a MmdMatrix>) -> Option<DMatrix<f64>> {
        let mut iter = parts.into_iter();
        let mut acc = iter.next()?.values.clone();
        for m in iter {
            acc += &m.values;
        }
        Some(acc)
    }
}

/// Trade-off `δ ≥ 0` between the joint distance and the domain-specific
/// independence term. The usual operating range is `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, serde::Serialize, serde::Deserialize)]
pub struct DeltaWeight(f64);

impl DeltaWeight {
    pub const ZERO: DeltaWeight = DeltaWeight(0.0);

    pub fn new(delta: f64) -> Result<Self> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::Config(format!(
                "delta must be a finite non-negative number, got {delta}"
            )));
        }
        Ok(Self(delta))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

fn check_counts(n_s: usize, n_t: usize) -> Result<()> {
    if n_s == 0 || n_t == 0 {
        return Err(Error::Validation(format!(
            "both domains need samples, got n_s = {n_s}, n_t = {n_t}"
        )));
    }
    Ok(())
}

/// Fills a matrix from per-sample block coefficients: source-source `ss`,
/// target-target `tt`, cross `st`, restricted to samples where `member` holds.
fn block_matrix(n_s: usize, n_t: usize, ss: f64, tt: f64, st: f64, member: impl Fn(usize) -> bool) -> DMatrix<f64> {
    let n = n_s + n_t;
    DMatrix::from_fn(n, n, |i, j| {
        if !(member(i) && member(j)) {
            return 0.0;
        }
        match (i < n_s, j < n_s) {
            (true, true) => ss,
            (false, false) => tt,
            _ => st,
        }
    })
}

/// Marginal MMD matrix: `1/n_s²`, `1/n_t²` on the diagonal blocks and
/// `-1/(n_s n_t)` across.
pub fn mmd_marginal(n_s: usize, n_t: usize) -> Result<MmdMatrix> {
    check_counts(n_s, n_t)?;
    let (s, t) = (n_s as f64, n_t as f64);
    Ok(MmdMatrix {
        values: block_matrix(n_s, n_t, 1.0 / (s * s), 1.0 / (t * t), -1.0 / (s * t), |_| true),
        kind: MmdKind::Marginal,
    })
}

fn class_members(source: &HardLabels, target: &HardLabels, c: usize) -> Vec<bool> {
    source.ids().iter().chain(target.ids()).map(|&id| id == c).collect()
}

/// Class-wise MMD matrix for class `c`. Zero when `c` is missing from either
/// domain.
pub fn mmd_classwise(source: &HardLabels, target: &HardLabels, c: usize) -> MmdMatrix {
    let (n_s, n_t) = (source.len(), target.len());
    let kind = MmdKind::Classwise(c);
    let ns_c = source.ids().iter().filter(|&&id| id == c).count();
    let nt_c = target.ids().iter().filter(|&&id| id == c).count();
    if ns_c == 0 || nt_c == 0 {
        return MmdMatrix {
            values: DMatrix::zeros(n_s + n_t, n_s + n_t),
            kind,
        };
    }
    let (s, t) = (ns_c as f64, nt_c as f64);
    let members = class_members(source, target, c);
    MmdMatrix {
        values: block_matrix(n_s, n_t, 1.0 / (s * s), 1.0 / (t * t), -1.0 / (s * t), |i| members[i]),
        kind,
    }
}

/// Weighted class-wise MMD matrix for class `c`: the marginal coefficients
/// restricted to class-`c` pairs.
pub fn mmd_weighted_classwise(source: &HardLabels, target: &HardLabels, c: usize) -> MmdMatrix {
    let (n_s, n_t) = (source.len(), target.len());
    let kind = MmdKind::WeightedClasswise(c);
    if n_s == 0 || n_t == 0 {
        return MmdMatrix {
            values: DMatrix::zeros(n_s + n_t, n_s + n_t),
            kind,
        };
    }
    let (s, t) = (n_s as f64, n_t as f64);
    let members = class_members(source, target, c);
    MmdMatrix {
        values: block_matrix(n_s, n_t, 1.0 / (s * s), 1.0 / (t * t), -1.0 / (s * t), |i| members[i]),
        kind,
    }
}

/// Domain-specific independence matrix: the diagonal blocks of the marginal
/// matrix with a zero cross block.
pub fn mmd_hsi(n_s: usize, n_t: usize) -> Result<MmdMatrix> {
    check_counts(n_s, n_t)?;
    let (s, t) = (n_s as f64, n_t as f64);
    Ok(MmdMatrix {
        values: block_matrix(n_s, n_t, 1.0 / (s * s), 1.0 / (t * t), 0.0, |_| true),
        kind: MmdKind::Hsi,
    })
}

/// `M_m - δ M_h`.
pub fn mmd_novel(n_s: usize, n_t: usize, delta: DeltaWeight) -> Result<MmdMatrix> {
    let mut values = mmd_marginal(n_s, n_t)?.values;
    if delta.get() != 0.0 {
        values -= mmd_hsi(n_s, n_t)?.values * delta.get();
    }
    Ok(MmdMatrix {
        values,
        kind: MmdKind::Novel(delta.get()),
    })
}

fn check_square(name: &str, m: &DMatrix<f64>, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::Dimension(format!(
            "{name} is {}x{}, expected {n}x{n}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// `tr((A ⊙ B) · M) = Σ_ij A_ij B_ij M_ji`, compensated, without forming the
/// Hadamard product.
pub fn hadamard_trace(a: &DMatrix<f64>, b: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<f64> {
    let n = a.nrows();
    check_square("first factor", a, n)?;
    check_square("second factor", b, n)?;
    check_square("MMD matrix", m, n)?;
    let mut acc = CompensatedSum::default();
    for j in 0..n {
        for i in 0..n {
            acc.add(a[(i, j)] * b[(i, j)] * m[(j, i)]);
        }
    }
    Ok(acc.value())
}

/// Joint distance `tr((K_xx ⊙ K_yy) · M)`.
pub fn jmmd_distance(kxx: &KernelMatrix, kyy: &KernelMatrix, m: &MmdMatrix) -> Result<f64> {
    hadamard_trace(kxx.values(), kyy.values(), m.values())
}

fn check_projection(kxx: &KernelMatrix, b: &DMatrix<f64>) -> Result<()> {
    if b.nrows() != kxx.size() {
        return Err(Error::Dimension(format!(
            "projection has {} rows, kernel has size {}",
            b.nrows(),
            kxx.size()
        )));
    }
    Ok(())
}

/// Joint distance in the projected space,
/// `tr(((K_xx B Bᵀ K_xx) ⊙ K_yy) · M)`.
pub fn projected_jmmd(kxx: &KernelMatrix, kyy: &KernelMatrix, m: &MmdMatrix, b: &DMatrix<f64>) -> Result<f64> {
    check_projection(kxx, b)?;
    let kb = kxx.values() * b;
    let gram = &kb * kb.transpose();
    hadamard_trace(&gram, kyy.values(), m.values())
}

/// The same quantity rearranged as `tr(Bᵀ K_xx (M ⊙ K_yy) K_xx B)`, the form
/// used to assemble the eigenproblem.
pub fn projected_jmmd_quadratic(
    kxx: &KernelMatrix,
    kyy: &KernelMatrix,
    m: &MmdMatrix,
    b: &DMatrix<f64>,
) -> Result<f64> {
    check_projection(kxx, b)?;
    let n = kxx.size();
    check_square("label kernel", kyy.values(), n)?;
    check_square("MMD matrix", m.values(), n)?;
    let inner = m.values().component_mul(kyy.values());
    let kb = kxx.values() * b;
    Ok((kb.transpose() * inner * &kb).trace())
}

/// Domain-specific feature-label dependence `‖C_s‖² + ‖C_t‖²` as
/// `tr((K_xx ⊙ K_yy) · M_h)`.
pub fn hsi_metric(kxx: &KernelMatrix, kyy: &KernelMatrix, n_s: usize, n_t: usize) -> Result<f64> {
    let mh = mmd_hsi(n_s, n_t)?;
    hadamard_trace(kxx.values(), kyy.values(), mh.values())
}

/// Explicit empirical joint embeddings with identity feature map and one-hot
/// label map: `Ĉ = (1/n) Σ x_i y_iᵀ` (an `m × C` matrix) per domain.
pub fn explicit_embeddings(
    x_all: &FeatureMatrix,
    labels: &SoftLabels,
    n_s: usize,
    n_t: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_counts(n_s, n_t)?;
    if x_all.n_samples() != n_s + n_t || labels.len() != n_s + n_t {
        return Err(Error::Dimension(format!(
            "expected {} samples, got {} features and {} labels",
            n_s + n_t,
            x_all.n_samples(),
            labels.len()
        )));
    }
    let x = x_all.values();
    let y = labels.values();
    let embed = |start: usize, len: usize| {
        let xs = x.columns(start, len);
        let ys = y.columns(start, len);
        (xs * ys.transpose()) / len as f64
    };
    Ok((embed(0, n_s), embed(n_s, n_t)))
}

/// `‖Ĉ_s − Ĉ_t‖²_F` from explicit embeddings. Equals [`jmmd_distance`] with a
/// linear feature kernel, the one-hot Gram label kernel and `M_m`.
pub fn brute_force_jmmd(x_all: &FeatureMatrix, one_hot: &SoftLabels, n_s: usize, n_t: usize) -> Result<f64> {
    let (cs, ct) = explicit_embeddings(x_all, one_hot, n_s, n_t)?;
    Ok((cs - ct).norm_squared())
}

/// `‖Ĉ_s‖²_F + ‖Ĉ_t‖²_F` from explicit embeddings.
pub fn brute_force_hsi(x_all: &FeatureMatrix, one_hot: &SoftLabels, n_s: usize, n_t: usize) -> Result<f64> {
    let (cs, ct) = explicit_embeddings(x_all, one_hot, n_s, n_t)?;
    Ok(cs.norm_squared() + ct.norm_squared())
}
