//! Compressible weight coding.
//!
//! Train weights with the L1/L2 compressibility loss, check its critical
//! point structure numerically, then prune, k-means quantize and pack the
//! result into a compact container.

pub mod codec;
pub mod error;
pub mod kmeans;
pub mod loss;
pub mod nn;
pub mod pipeline;
pub mod prune;
pub mod tensor_io;
pub mod theory;

pub use error::*;
pub use loss::{
    compressibility_grad, compressibility_loss, critical_point_c, diagnose_critical_point,
    CriticalPointReport, WeightVector,
};
