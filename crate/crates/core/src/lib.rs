//! Multi-view discriminant non-negative matrix factorization.
//!
//! Each view of a multi-view dataset is factorized into common and
//! view-specific parts, each split into discriminative and
//! non-discriminative blocks. The discriminative coefficients feed a linear
//! softmax classifier trained with a cross-entropy (or squared-error) label
//! loss, and all blocks are fitted jointly by projected block coordinate
//! descent.
//!
//! The crate's `examples/` directory has one runnable program per major
//! capability; start with `fit_synthetic`.

pub mod cli;
pub mod error;
pub mod eval;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod model;
pub mod objective;
pub mod solver;
pub mod synthetic;

pub use error::{Error, Result};
pub use model::{
    init_model, validate, BlockDims, BlockId, BlockKind, CoefBlock, Coefficients, FactorModel,
    FitInfo, FitStatus, Hyperparams, LossMode, MultiViewDataset, ProjBlock, Projection, ViewBases,
    Violation, UNLABELED,
};
pub use objective::{total_objective, ObjectiveBreakdown};
