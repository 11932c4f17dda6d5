//! Kernel-based identification of truncated Volterra series with structured
//! Wiener / Wiener–Hammerstein priors.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimator;
pub mod kernels;
pub mod linalg;
pub mod metrics;
pub mod multi_index;
pub mod optim;
pub mod output_kernel;
pub mod separable;
pub mod simulator;

pub use error::{Result, VolterraError};
pub use estimator::{
    decompose_wiener, eb_objective, extract_map, fit, predict, Anchor, FitConfig, FittedModel,
    KernelVariant, OptimizerConfig, SolverPath, TrainingData,
};
pub use kernels::{BlockStructure, DcParams, Kappa2, KernelHyper, ZetaSpec, ZetaVariant};
pub use multi_index::VolterraMap;
pub use output_kernel::InitPolicy;
pub use simulator::{BankKind, BankSpec, Dataset, LtiSystem, WhSystem};
