//! Matrix and tensor decompositions: SVD (with truncation and leg
//! bipartitions), CP by alternating least squares, and Tucker via HOSVD
//! followed by HOOI sweeps.

mod cp;
mod svd;
mod tucker;

pub use cp::{cp_als, cp_reconstruct, CpFit, CpForm, CpOptions};
pub use svd::{qr, svd, truncated_svd, SvdResult, JACOBI_TOL};
pub use tucker::{mode_product, tucker, tucker_reconstruct, unfold, TuckerFit, TuckerForm};

pub(crate) use svd::discarded_weight;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Truncated SVD of a tensor across a bipartition of its legs.
#[derive(Debug, Clone)]
pub struct TensorSvd {
    pub svd: SvdResult,
    /// Frobenius norm of the discarded part.
    pub error: f64,
    pub left_legs: Vec<usize>,
    pub right_legs: Vec<usize>,
    left_dims: Vec<usize>,
    right_dims: Vec<usize>,
}

impl TensorSvd {
    /// `U` with its row leg split back into the left legs: shape `left_dims ++ [k]`.
    pub fn left_tensor(&self) -> Tensor {
        let mut shape = self.left_dims.clone();
        shape.push(self.svd.rank());
        self.svd.u.reshape(&shape).expect("sizes agree")
    }

    /// `Vt` with its column leg split: shape `[k] ++ right_dims`.
    pub fn right_tensor(&self) -> Tensor {
        let mut shape = vec![self.svd.rank()];
        shape.extend_from_slice(&self.right_dims);
        self.svd.vt.reshape(&shape).expect("sizes agree")
    }

    /// Rank-k approximation with legs in the original order.
    pub fn reconstruct(&self) -> Tensor {
        let mut shape = self.left_dims.clone();
        shape.extend_from_slice(&self.right_dims);
        let grouped = self.svd.reconstruct().reshape(&shape).expect("sizes agree");
        let order: Vec<usize> = self
            .left_legs
            .iter()
            .chain(&self.right_legs)
            .copied()
            .collect();
        let mut inv = vec![0; order.len()];
        for (pos, &leg) in order.iter().enumerate() {
            inv[leg] = pos;
        }
        grouped.permute(&inv).expect("valid permutation")
    }
}

/// Group `left_legs` against the remaining legs (in ascending order) and keep
/// the top `k` singular triples.
pub fn tensor_svd(t: &Tensor, left_legs: &[usize], k: usize) -> Result<TensorSvd> {
    let n = t.order();
    let mut seen = vec![false; n];
    for &l in left_legs {
        if l >= n || std::mem::replace(&mut seen[l], true) {
            return Err(Error::InvalidPartition(format!(
                "left legs {left_legs:?} invalid for order {n}"
            )));
        }
    }
    if left_legs.is_empty() || left_legs.len() == n {
        return Err(Error::InvalidPartition(
            "bipartition needs legs on both sides".into(),
        ));
    }
    let right_legs: Vec<usize> = (0..n).filter(|l| !seen[*l]).collect();
    let m = t.group_legs(&[left_legs.to_vec(), right_legs.clone()])?;
    let (svd, error) = truncated_svd(&m, k)?;
    Ok(TensorSvd {
        svd,
        error,
        left_dims: left_legs.iter().map(|&l| t.shape()[l]).collect(),
        right_dims: right_legs.iter().map(|&l| t.shape()[l]).collect(),
        left_legs: left_legs.to_vec(),
        right_legs,
    })
}
