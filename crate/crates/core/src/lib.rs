//! Unified joint maximum mean discrepancy (JMMD) for kernel subspace domain
//! adaptation.
//!
//! The joint distance between a labeled source domain and an unlabeled target
//! domain is evaluated without any explicit tensor-product embedding:
//!
//! ```text
//! D(P_s(X, Y), P_t(X, Y)) = tr((K_xx ⊙ K_yy) · M)
//! ```
//!
//! where `K_xx` is a feature kernel over the concatenated samples
//! `source ∥ target`, `K_yy` is one of four label kernels and `M` an MMD
//! coefficient matrix. Marginal, class-wise and weighted class-wise MMD are
//! recovered by the label kernels [`kernels::LabelKernel::Marginal`],
//! [`kernels::LabelKernel::ClassConditional`] and
//! [`kernels::LabelKernel::Weighted`]; [`kernels::LabelKernel::ShiftCorrected`]
//! re-weights source classes by the target/source class-prior ratio.
//!
//! Subtracting `δ·M_h` (the domain-specific Hilbert–Schmidt independence
//! matrix) from `M` preserves feature-label dependence while aligning the
//! domains. The resulting objective is minimized over a kernel projection by
//! a symmetric-definite generalized eigendecomposition ([`solver`]) and wrapped
//! in an iterative pseudo-labeling loop ([`pipeline`]).
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`data`] | domain loading, synthetic generation, label-shift protocol |
//! | [`kernels`] | feature and label kernels, PSD reports |
//! | [`mmd`] | MMD matrices, joint distances, the explicit-embedding oracle |
//! | [`solver`] | objective assembly and the generalized eigenproblem |
//! | [`pipeline`] | k-NN, adaptation loop, ablation diagnostics |
//! | [`checks`] | executable property suite |

pub mod checks;
pub mod data;
mod error;
pub mod io;
pub mod kernels;
pub mod mmd;
mod numeric;
pub mod pipeline;
pub mod solver;

pub use error::{Error, Result};

pub use nalgebra::{DMatrix, DVector};
