//! Gaussian process regression with grid-structured eigenfunctions.
//!
//! The kernel is approximated by `p` Nyström eigenfunctions computed from a
//! Cartesian product grid of inducing points. Product kernels on a grid give a
//! Kronecker-structured inducing covariance, and the train/inducing
//! cross-covariance is a row-partitioned Khatri-Rao product. Together these let
//! the `n x p` eigenfunction matrix be formed without ever expanding the grid,
//! so the number of inducing points `m` can be astronomically large.
//!
//! Once `Phi` is built, the log marginal likelihood and its `p + 1` derivatives
//! with respect to the eigenfunction weights and the noise variance cost
//! `O(p^3)`, or `O(p)` after orthogonalizing the basis on the training data.
//!
//! Module map:
//!
//! * [`tensor`]: Kronecker / Khatri-Rao algebra and the top-`p` eigenvalue search.
//! * [`kernels`]: one-dimensional base kernels and their product composition.
//! * [`basis`]: inducing grid, per-dimension eigendecompositions and `Phi`.
//! * [`model`]: marginal likelihood, gradients, orthogonal fast path, prediction.
//! * [`inference`]: hyperparameter initialization, type-II optimization, MALA.
//! * [`precond`]: Woodbury preconditioner and preconditioned conjugate gradients.
//! * [`exact`]: dense exact-GP reference used for initialization and baselines.
//! * [`studies`]: reconstruction, preconditioning and 2D demo harnesses.

pub mod basis;
pub mod error;
pub mod exact;
pub mod inference;
pub mod kernels;
pub mod model;
pub mod optim;
pub mod precond;
pub mod studies;
pub mod tensor;

pub use error::{GriefError, Result};
