//! Black-soil segmentation in plain Rust: a selective state-space (Mamba)
//! vision backbone paired with a convolutional branch, plus the data
//! handling needed to run it on survey imagery end to end.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`]: dense row-major tensors and the NN primitives over them
//! - [`ssm`]: zero-order-hold discretization and the selective scan kernels
//! - [`scan`]: 2D-to-1D token orderings and the direction-merge attention
//! - [`smb`]: the spatial Mamba block and the patch embed/merge stem
//! - [`encoder`] / [`decoder`]: the two-branch pyramid and its refinement
//! - [`model`]: configuration, seeded init, checkpoints, whole-image runs
//! - [`loss`]: training losses and mask metrics
//! - [`data`]: netpbm I/O, scene tiling, augmentation, checkpoint bytes

pub mod data;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod loss;
pub mod model;
pub mod scan;
pub mod selftest;
pub mod smb;
pub mod ssm;
pub mod tensor;

pub use error::{Error, Result};
