//! Approximation of a zero-mean Gaussian correlation matrix by a cascade of
//! tree-structured linear transforms.
//!
//! Each stage fits a tree (Chow-Liu or star) to the current residual
//! correlation, factors the tree covariance with a Cholesky factor taken in a
//! parent-first ordering so that its inverse keeps the tree's sparsity, and
//! whitens the residual with that inverse. The KL divergence between the
//! source and the assembled model is tracked per stage, and every stage can
//! be exported as a loop-free factor graph.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cascade;
pub mod error;
pub mod iogen;
pub mod matrix;
pub mod ordering;
pub mod scalar;
pub mod symcore;
pub mod treemodel;

pub use cascade::{
    cam_update, compare_policies, run_cascade, star_exact_cascade, CamState, CascadeFailure,
    CascadeOptions, PolicyTrace, StageSummary, TreePolicy,
};
pub use error::{Error, Result};
pub use iogen::{
    empirical_correlation, generate_synthetic, read_matrix, sparsity_dump, write_matrix,
    write_trace, SyntheticSpec,
};
pub use matrix::Matrix;
pub use ordering::{
    build_stage, connected_ordering, stage_transform, to_factor_graph, FactorGraphDoc,
    FactorizationKind, StageTransform,
};
pub use scalar::Scalar;
pub use symcore::{
    cholesky_lower, cholesky_upper, kl_gauss, log_det, permute_spd, symmetric_sqrt, validate_corr,
    LowerTriangular, Permutation, SpdMatrix,
};
pub use treemodel::{best_star, chow_liu, star_tree, tree_covariance, TreeEdge, TreeModel};

pub type CorrMatrix<T = f64> = symcore::CorrMatrix<T>;

pub type MatrixF64 = Matrix<f64>;
pub type MatrixF32 = Matrix<f32>;
pub type CorrMatrixF64 = symcore::CorrMatrix<f64>;
pub type CorrMatrixF32 = symcore::CorrMatrix<f32>;
pub type SpdMatrixF64 = SpdMatrix<f64>;
pub type TreeModelF64 = TreeModel<f64>;
pub type StageTransformF64 = StageTransform<f64>;
pub type CascadeModelF64 = cascade::CascadeModel<f64>;
pub type CascadeModelF32 = cascade::CascadeModel<f32>;
pub type FactorGraphDocF64 = FactorGraphDoc<f64>;

pub use cascade::CascadeModel;
