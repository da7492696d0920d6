//! Supervised tensor dimension reduction for incomplete degradation image
//! streams, and (log-)location-scale failure-time prognostics built on it.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod heat_sim;
pub mod linalg;
pub mod lls;
pub mod mpca;
pub mod prognostics;
pub mod supervised;
pub mod tensor;

pub use error::{Error, Result};
pub use linalg::DenseMatrix;
pub use lls::{FamilyKind, LlsModel, ReparamCoefficients};
pub use supervised::{CoreTensor, FactorSet, FitConfig, FitState, SubspaceDims};
pub use tensor::{MaskPattern, MaskedTensor4, Mode, Tensor4};
