//! Dense tensor-network engine.
//!
//! - [`tensor`]: row-major tensors, leg permutation/grouping, delta tensors, Kronecker products
//! - [`einsum`]: expression parsing, pairwise and path-driven contraction, environments
//! - [`path`]: contraction-order planning with a multiply-add cost model
//! - [`decomp`]: SVD, truncated/tensor SVD, CP-ALS, Tucker (HOSVD + HOOI)
//! - [`tt`]: tensor trains with canonical forms, truncation and gauge transforms
//! - [`circuits`]: linearized attention-only transformer pieces and a toy induction head
//! - [`cli`]: spec-file loading and the commands behind the `tnet` binary

pub mod circuits;
pub mod cli;
pub mod decomp;
pub mod einsum;
pub mod error;
pub mod path;
pub mod tensor;
pub mod tt;

pub use einsum::{einsum, EinsumSpec};
pub use error::{Error, Result};
pub use path::{ContractionPath, CostReport};
pub use tensor::Tensor;
