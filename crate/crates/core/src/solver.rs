//! Objective assembly and the generalized eigenproblem
//!
//! ```text
//! (K_xx ((M_j − δ M_h) ⊙ K_yy) K_xx + λ I) B = (K_xx H K_xx + ridge I) B Θ
//! ```
//!
//! solved for the `d` smallest eigenvalues. The right-hand matrix is singular
//! (`H` annihilates constants), so a small ridge makes the pencil definite.
//! The pencil is reduced to a standard symmetric problem with a Cholesky
//! factor `L` of the right-hand side: `L⁻¹ A L⁻ᵀ y = θ y`, `b = L⁻ᵀ y`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::data::FeatureMatrix;
use crate::kernels::KernelMatrix;
use crate::mmd::{mmd_novel, DeltaWeight};
use crate::numeric::symmetrize;
use crate::{Error, Result};

/// `I − (1/n) 1 1ᵀ`.
pub fn centering_matrix(n: usize) -> DMatrix<f64> {
    let off = 1.0 / n as f64;
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 - off } else { -off })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveParams {
    pub delta: DeltaWeight,
    pub lambda: f64,
    /// Scale `(M_j − δ M_h) ⊙ K_yy` to unit Frobenius norm before assembly.
    pub normalize_mmd: bool,
}

impl ObjectiveParams {
    pub fn new(delta: DeltaWeight, lambda: f64) -> Self {
        Self {
            delta,
            lambda,
            normalize_mmd: false,
        }
    }
}

/// Symmetric pencil `(A, C)` of the subspace objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    a: DMatrix<f64>,
    c: DMatrix<f64>,
    /// Optional `F` with `C = Fᵀ F`, used to evaluate `Bᵀ C B` without the
    /// cancellation that direct multiplication suffers along near-null
    /// directions of `C`.
    c_factor: Option<DMatrix<f64>>,
    lambda: f64,
    delta: DeltaWeight,
}

impl Objective {
    /// Wraps an arbitrary symmetric pencil; both matrices are symmetrized.
    pub fn from_pencil(mut a: DMatrix<f64>, mut c: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() || a.shape() != c.shape() {
            return Err(Error::Dimension(format!(
                "pencil matrices must be square and equal-sized, got {:?} and {:?}",
                a.shape(),
                c.shape()
            )));
        }
        symmetrize(&mut a);
        symmetrize(&mut c);
        Ok(Self {
            a,
            c,
            c_factor: None,
            lambda: 0.0,
            delta: DeltaWeight::ZERO,
        })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn delta(&self) -> DeltaWeight {
        self.delta
    }

    pub fn size(&self) -> usize {
        self.a.nrows()
    }

    /// `Bᵀ (C + ridge I) B`.
    pub fn constraint_gram(&self, b: &DMatrix<f64>, ridge: f64) -> DMatrix<f64> {
        let mut gram = match &self.c_factor {
            Some(f) => {
                let fb = f * b;
                fb.transpose() * fb
            }
            None => b.transpose() * (&self.c * b),
        };
        gram += b.transpose() * b * ridge;
        symmetrize(&mut gram);
        gram
    }

    /// Modified Gram–Schmidt in the `C + ridge I` inner product. Column `j`
    /// depends only on columns `0..=j`, so truncating before or after gives
    /// identical leading columns.
    fn orthonormalize(&self, b: &mut DMatrix<f64>, ridge: f64) {
        let transform = |v: &DVector<f64>| match &self.c_factor {
            Some(f) => f * v,
            None => &self.c * v,
        };
        let inner = |u: &DVector<f64>, tu: &DVector<f64>, v: &DVector<f64>, tv: &DVector<f64>| {
            let c_part = match &self.c_factor {
                Some(_) => tu.dot(tv),
                None => u.dot(tv),
            };
            c_part + ridge * u.dot(v)
        };
        let mut done: Vec<(DVector<f64>, DVector<f64>)> = Vec::with_capacity(b.ncols());
        for j in 0..b.ncols() {
            let mut v = b.column(j).into_owned();
            let mut tv = transform(&v);
            for (u, tu) in &done {
                let coef = inner(u, tu, &v, &tv);
                v.axpy(-coef, u, 1.0);
                tv.axpy(-coef, tu, 1.0);
            }
            let norm = inner(&v, &tv, &v, &tv).sqrt();
            if norm > 0.0 && norm.is_finite() {
                v /= norm;
                tv /= norm;
            }
            b.set_column(j, &v);
            done.push((v, tv));
        }
    }

    /// `1e-9 · tr(C) / n`.
    pub fn default_ridge(&self) -> f64 {
        1e-9 * self.c.trace() / self.size() as f64
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
    }
    Ok(())
}

/// `C = K H K` together with its factor `H K` (`H` is idempotent).
fn constraint_matrix(kxx: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = kxx.nrows();
    let factor = centering_matrix(n) * kxx;
    let mut c = factor.transpose() * &factor;
    symmetrize(&mut c);
    (c, factor)
}

/// `A = K_xx ((M_j − δ M_h) ⊙ K_yy) K_xx + λ I`, `C = K_xx H K_xx`.
pub fn build_objective(
    kxx: &KernelMatrix,
    kyy: &KernelMatrix,
    params: ObjectiveParams,
    n_s: usize,
    n_t: usize,
) -> Result<Objective> {
    check_lambda(params.lambda)?;
    let n = n_s + n_t;
    if kxx.size() != n || kyy.size() != n {
        return Err(Error::Dimension(format!(
            "kernels have sizes {} and {}, expected n_s + n_t = {n}",
            kxx.size(),
            kyy.size()
        )));
    }
    let m = mmd_novel(n_s, n_t, params.delta)?;
    let mut inner = m.values().component_mul(kyy.values());
    if params.normalize_mmd {
        let norm = inner.norm();
        if norm > 0.0 {
            inner /= norm;
        }
    }
    let k = kxx.values();
    let mut a = k * inner * k;
    for i in 0..n {
        a[(i, i)] += params.lambda;
    }
    symmetrize(&mut a);
    let (c, factor) = constraint_matrix(k);
    Ok(Objective {
        a,
        c,
        c_factor: Some(factor),
        lambda: params.lambda,
        delta: params.delta,
    })
}

/// The no-adaptation limit `λ → ∞`: `A = λ I`, whose smallest generalized
/// eigenvectors are the leading kernel principal components.
pub fn build_pca_objective(kxx: &KernelMatrix, lambda: f64) -> Result<Objective> {
    check_lambda(lambda)?;
    let n = kxx.size();
    let (c, factor) = constraint_matrix(kxx.values());
    Ok(Objective {
        a: DMatrix::identity(n, n) * lambda,
        c,
        c_factor: Some(factor),
        lambda,
        delta: DeltaWeight::ZERO,
    })
}

/// `n_st × d` coefficients `B` with ascending eigenvalues `Θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    b: DMatrix<f64>,
    theta: DVector<f64>,
    ridge: f64,
}

impl Projection {
    pub fn from_parts(b: DMatrix<f64>, theta: DVector<f64>, ridge: f64) -> Result<Self> {
        if b.ncols() != theta.len() {
            return Err(Error::Dimension(format!(
                "{} projection columns but {} eigenvalues",
                b.ncols(),
                theta.len()
            )));
        }
        Ok(Self { b, theta, ridge })
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn dim(&self) -> usize {
        self.b.ncols()
    }

    /// First `d` columns.
    pub fn truncate(&self, d: usize) -> Projection {
        let d = d.min(self.dim());
        Projection {
            b: self.b.columns(0, d).into_owned(),
            theta: self.theta.rows(0, d).into_owned(),
            ridge: self.ridge,
        }
    }

    /// Per-column `‖A b − θ (C + ridge I) b‖ / (‖A‖ + |θ| ‖C‖)`.
    pub fn relative_residuals(&self, obj: &Objective) -> Vec<f64> {
        let rhs = ridged(obj.c(), self.ridge);
        let (norm_a, norm_c) = (obj.a().norm(), obj.c().norm());
        self.b
            .column_iter()
            .zip(self.theta.iter())
            .map(|(b, &theta)| {
                let r = obj.a() * b - (&rhs * b) * theta;
                r.norm() / (norm_a + theta.abs() * norm_c).max(f64::MIN_POSITIVE)
            })
            .collect()
    }

    /// `Bᵀ (C + ridge I) B`, the identity for an exact solution.
    pub fn gram(&self, obj: &Objective) -> DMatrix<f64> {
        obj.constraint_gram(&self.b, self.ridge)
    }
}

fn ridged(c: &DMatrix<f64>, ridge: f64) -> DMatrix<f64> {
    let mut out = c.clone();
    for i in 0..out.nrows() {
        out[(i, i)] += ridge;
    }
    out
}

/// Solves the pencil for its `d` smallest eigenpairs. `ridge` defaults to
/// [`Objective::default_ridge`]. Each column is sign-fixed so that its
/// largest-magnitude entry is positive.
pub fn solve_projection(obj: &Objective, d: usize, ridge: Option<f64>) -> Result<Projection> {
    let n = obj.size();
    if d == 0 || d >= n {
        return Err(Error::Config(format!(
            "projection dimension must satisfy 1 <= d < {n}, got {d}"
        )));
    }
    let ridge = ridge.unwrap_or_else(|| obj.default_ridge());
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::Config(format!(
            "ridge must be a finite non-negative number, got {ridge}"
        )));
    }

    let chol = Cholesky::new(ridged(obj.c(), ridge)).ok_or_else(|| {
        Error::Numerical(format!(
            "constraint matrix plus ridge {ridge:e} is not positive definite; increase the ridge"
        ))
    })?;
    let l = chol.l();
    // S = L⁻¹ A L⁻ᵀ
    let mut tmp = obj.a().clone();
    if !l.solve_lower_triangular_mut(&mut tmp) {
        return Err(Error::Numerical("singular Cholesky factor".into()));
    }
    let mut s = tmp.transpose();
    if !l.solve_lower_triangular_mut(&mut s) {
        return Err(Error::Numerical("singular Cholesky factor".into()));
    }
    symmetrize(&mut s);

    let eig = SymmetricEigen::new(s);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]).then(i.cmp(&j)));
    order.truncate(d);

    let theta = DVector::from_iterator(d, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut b = eig.eigenvectors.select_columns(&order);
    // b = L⁻ᵀ y
    if !l.tr_solve_lower_triangular_mut(&mut b) {
        return Err(Error::Numerical("singular Cholesky factor".into()));
    }
    obj.orthonormalize(&mut b, ridge);
    for mut col in b.column_iter_mut() {
        let pivot = col.iamax();
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
    }
    Ok(Projection { b, theta, ridge })
}

/// Embeddings `Z = Bᵀ K_xx` (`d × n_st`); the first `n_s` columns are the
/// source samples.
pub fn embed(proj: &Projection, kxx: &KernelMatrix) -> Result<FeatureMatrix> {
    if proj.b.nrows() != kxx.size() {
        return Err(Error::Dimension(format!(
            "projection has {} rows, kernel has size {}",
            proj.b.nrows(),
            kxx.size()
        )));
    }
    FeatureMatrix::new(proj.b.tr_mul(kxx.values()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::HardLabels;
    use crate::kernels::{label_kernel, KernelKind, LabelKernel};
    use approx::assert_abs_diff_eq;

    fn kernel(m: DMatrix<f64>) -> KernelMatrix {
        KernelMatrix::from_values(m, KernelKind::Feature).unwrap()
    }

    #[test]
    fn diagonal_pencil() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0]));
        let obj = Objective::from_pencil(a, DMatrix::identity(3, 3)).unwrap();
        let p = solve_projection(&obj, 1, Some(0.0)).unwrap();
        assert_abs_diff_eq!(p.theta()[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(
            p.b().column(0).into_owned(),
            DVector::from_vec(vec![1.0, 0.0, 0.0]),
            epsilon = 1e-14
        );
    }

    #[test]
    fn identity_pencil() {
        let obj = Objective::from_pencil(DMatrix::identity(4, 4), DMatrix::identity(4, 4)).unwrap();
        let p = solve_projection(&obj, 2, Some(0.0)).unwrap();
        assert_abs_diff_eq!(p.theta()[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(p.theta()[1], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(p.b().tr_mul(p.b()), DMatrix::identity(2, 2), epsilon = 1e-14);
    }

    #[test]
    fn rejects_bad_dimension_and_indefinite_rhs() {
        let obj = Objective::from_pencil(DMatrix::identity(3, 3), DMatrix::identity(3, 3)).unwrap();
        assert!(solve_projection(&obj, 0, None).is_err());
        assert!(solve_projection(&obj, 3, None).is_err());
        let c = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0, 1.0]));
        let obj = Objective::from_pencil(DMatrix::identity(3, 3), c).unwrap();
        assert!(matches!(solve_projection(&obj, 1, Some(0.0)), Err(Error::Numerical(_))));
    }

    #[test]
    fn build_objective_with_identity_kernel() {
        let y = HardLabels::new(vec![0, 1], 2).unwrap();
        let t = HardLabels::new(vec![1], 2).unwrap();
        let kyy = label_kernel(LabelKernel::Marginal, &y, &t, 2).unwrap();
        let k = kernel(DMatrix::identity(3, 3));
        let obj = build_objective(&k, &kyy, ObjectiveParams::new(DeltaWeight::ZERO, 0.5), 2, 1).unwrap();
        assert_abs_diff_eq!(obj.c(), &centering_matrix(3), epsilon = 1e-15);
        let mut want = crate::mmd::mmd_marginal(2, 1).unwrap().values().clone();
        want += DMatrix::identity(3, 3) * 0.5;
        assert_abs_diff_eq!(obj.a(), &want, epsilon = 1e-15);
        assert!(build_objective(&k, &kyy, ObjectiveParams::new(DeltaWeight::ZERO, 0.0), 2, 1).is_err());
        assert!(build_objective(&k, &kyy, ObjectiveParams::new(DeltaWeight::ZERO, 1.0), 1, 1).is_err());
    }

    #[test]
    fn normalized_inner_matrix_has_unit_norm() {
        let y = HardLabels::new(vec![0, 1, 1], 2).unwrap();
        let t = HardLabels::new(vec![1, 0], 2).unwrap();
        let kyy = label_kernel(LabelKernel::Weighted, &y, &t, 2).unwrap();
        let k = kernel(DMatrix::identity(5, 5));
        let mut params = ObjectiveParams::new(DeltaWeight::new(0.3).unwrap(), 1.0);
        params.normalize_mmd = true;
        let obj = build_objective(&k, &kyy, params, 3, 2).unwrap();
        let inner = obj.a() - DMatrix::identity(5, 5);
        assert_abs_diff_eq!(inner.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn pca_objective_recovers_leading_component() {
        // Points spread along the first axis.
        let x = DMatrix::from_column_slice(2, 4, &[-3.0, 0.1, -1.0, -0.1, 1.0, 0.1, 3.0, -0.1]);
        let k = kernel(x.tr_mul(&x));
        let obj = build_pca_objective(&k, 1.0).unwrap();
        let p = solve_projection(&obj, 1, None).unwrap();
        let z = embed(&p, &k).unwrap();
        let direction = z.values().row(0).transpose();
        let first_axis = x.row(0).transpose();
        let cos = direction.dot(&first_axis) / (direction.norm() * first_axis.norm());
        assert!(cos.abs() > 0.999, "cosine {cos}");
    }

    #[test]
    fn sign_rule_makes_largest_entry_positive() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let obj = Objective::from_pencil(a, DMatrix::identity(2, 2)).unwrap();
        let p = solve_projection(&obj, 1, Some(0.0)).unwrap();
        let col = p.b().column(0);
        assert!(col[col.iamax()] > 0.0);
    }

    #[test]
    fn embed_with_basis_column() {
        let k = kernel(DMatrix::from_row_slice(
            3,
            3,
            &[2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0],
        ));
        let mut b = DMatrix::zeros(3, 1);
        b[(0, 0)] = 1.0;
        let p = Projection::from_parts(b, DVector::from_element(1, 0.0), 0.0).unwrap();
        let z = embed(&p, &k).unwrap();
        assert_eq!(z.values().row(0), k.values().row(0));
        assert!(embed(&p, &kernel(DMatrix::identity(2, 2))).is_err());
    }
}
