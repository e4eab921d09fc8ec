//! Tensor trains (matrix product states).
//!
//! Cores are order-3 tensors with legs `(left bond, physical, right bond)`;
//! the outer bonds of the first and last core have dimension 1.

use rand::Rng;

use crate::decomp::{discarded_weight, qr, svd};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Largest dense tensor `tt_to_dense` will materialize.
pub const DENSE_LIMIT: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorTrain {
    cores: Vec<Tensor>,
    center: Option<usize>,
}

impl TensorTrain {
    /// Validate bond compatibility. The result has no orthogonality center.
    pub fn new(cores: Vec<Tensor>) -> Result<Self> {
        if cores.is_empty() {
            return Err(Error::InvalidArgument(
                "tensor train needs at least one core".into(),
            ));
        }
        for (i, c) in cores.iter().enumerate() {
            if c.order() != 3 {
                return Err(Error::WrongOrder {
                    expected: 3,
                    got: c.order(),
                });
            }
            if i > 0 && cores[i - 1].shape()[2] != c.shape()[0] {
                return Err(Error::ShapeMismatch(format!(
                    "bond {} : {} vs {}",
                    i - 1,
                    cores[i - 1].shape()[2],
                    c.shape()[0]
                )));
            }
        }
        if cores[0].shape()[0] != 1 || cores[cores.len() - 1].shape()[2] != 1 {
            return Err(Error::ShapeMismatch(
                "boundary bonds must have dimension 1".into(),
            ));
        }
        Ok(TensorTrain {
            cores,
            center: None,
        })
    }

    /// Random signed cores; each bond is capped by the smaller side's physical size.
    pub fn random<R: Rng + ?Sized>(phys: &[usize], bond: usize, rng: &mut R) -> Result<Self> {
        if phys.is_empty() || bond == 0 {
            return Err(Error::InvalidArgument(
                "need legs and a positive bond".into(),
            ));
        }
        let bonds = bond_ceiling(phys, bond);
        let cores = phys
            .iter()
            .enumerate()
            .map(|(i, &d)| Tensor::random_signed(&[bonds[i], d, bonds[i + 1]], rng))
            .collect();
        TensorTrain::new(cores)
    }

    pub fn cores(&self) -> &[Tensor] {
        &self.cores
    }

    pub fn center(&self) -> Option<usize> {
        self.center
    }

    pub fn len(&self) -> usize {
        self.cores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cores.is_empty()
    }

    pub fn phys_dims(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.shape()[1]).collect()
    }

    /// All `len + 1` bond dimensions, boundaries included.
    pub fn bond_dims(&self) -> Vec<usize> {
        let mut b = vec![1];
        b.extend(self.cores.iter().map(|c| c.shape()[2]));
        b
    }

    /// Frobenius norm of the dense tensor, read off the center core.
    pub fn center_norm(&self) -> Option<f64> {
        self.center.map(|c| self.cores[c].frobenius_norm())
    }

    /// Largest deviation from isometry among cores away from the center.
    pub fn isometry_defect(&self) -> Option<f64> {
        let c = self.center?;
        let mut worst = 0.0f64;
        for (i, core) in self.cores.iter().enumerate() {
            let s = core.shape();
            let m = if i < c {
                core.reshape(&[s[0] * s[1], s[2]]).ok()?
            } else if i > c {
                core.reshape(&[s[0], s[1] * s[2]]).ok()?
            } else {
                continue;
            };
            let gram = if i < c {
                m.transpose().ok()?.matmul(&m).ok()?
            } else {
                m.matmul(&m.transpose().ok()?).ok()?
            };
            let id = Tensor::identity(gram.rows());
            worst = worst.max(gram.max_abs_diff(&id).ok()?);
        }
        Some(worst)
    }
}

fn bond_ceiling(phys: &[usize], bond: usize) -> Vec<usize> {
    let n = phys.len();
    (0..=n)
        .map(|b| {
            if b == 0 || b == n {
                return 1;
            }
            let left = phys[..b].iter().fold(1usize, |a, &d| a.saturating_mul(d));
            let right = phys[b..].iter().fold(1usize, |a, &d| a.saturating_mul(d));
            bond.min(left).min(right)
        })
        .collect()
}

/// Number of singular values kept: those above `tol · s_max`, at most `max_bond`, at least one.
fn kept(s: &[f64], max_bond: usize, tol: f64) -> usize {
    let smax = s.first().copied().unwrap_or(0.0);
    let above = s.iter().filter(|&&x| x > tol * smax).count();
    above.min(max_bond).max(1)
}

fn check_bond(max_bond: usize) -> Result<()> {
    if max_bond < 1 {
        return Err(Error::InvalidArgument("max_bond must be at least 1".into()));
    }
    Ok(())
}

/// Left-to-right SVD sweep. Pass `usize::MAX` for an unbounded bond.
pub fn tt_decompose(t: &Tensor, max_bond: usize, tol: f64) -> Result<TensorTrain> {
    check_bond(max_bond)?;
    if t.order() < 2 {
        return Err(Error::WrongOrder {
            expected: 2,
            got: t.order(),
        });
    }
    let phys = t.shape().to_vec();
    let n = phys.len();
    let mut cores = Vec::with_capacity(n);
    let mut rank = 1;
    let mut rest = t.clone();
    for (b, &d) in phys.iter().enumerate().take(n - 1) {
        let m = rest.reshape(&[rank * d, rest.len() / (rank * d)])?;
        let full = svd(&m)?;
        let k = kept(&full.s, max_bond, tol);
        let trunc = full.truncated(k);
        cores.push(trunc.u.reshape(&[rank, d, k])?);
        let mut svt = trunc.vt;
        let cols = svt.cols();
        for (i, v) in svt.data_mut().iter_mut().enumerate() {
            *v *= trunc.s[i / cols];
        }
        rest = svt;
        rank = k;
        debug_assert!(b + 1 < n);
    }
    cores.push(rest.reshape(&[rank, phys[n - 1], 1])?);
    let mut tt = TensorTrain::new(cores)?;
    tt.center = Some(n - 1);
    Ok(tt)
}

/// Contract the train into a dense tensor over the physical legs.
pub fn tt_to_dense(tt: &TensorTrain) -> Result<Tensor> {
    let phys = tt.phys_dims();
    let total = phys.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
    match total {
        Some(t) if t <= DENSE_LIMIT => {}
        _ => {
            return Err(Error::TooLarge(format!(
                "dense size of {phys:?} exceeds {DENSE_LIMIT}"
            )))
        }
    }
    let first = &tt.cores[0];
    let mut acc = first.reshape(&[first.shape()[1], first.shape()[2]])?;
    for core in &tt.cores[1..] {
        let s = core.shape();
        let m = core.reshape(&[s[0], s[1] * s[2]])?;
        let prod = acc.matmul(&m)?;
        acc = prod.reshape(&[prod.len() / s[2], s[2]])?;
    }
    acc.reshape(&phys)
}

fn absorb_left(r: &Tensor, core: &Tensor) -> Result<Tensor> {
    let s = core.shape();
    let m = core.reshape(&[s[0], s[1] * s[2]])?;
    r.matmul(&m)?.reshape(&[r.rows(), s[1], s[2]])
}

fn absorb_right(core: &Tensor, r: &Tensor) -> Result<Tensor> {
    let s = core.shape();
    let m = core.reshape(&[s[0] * s[1], s[2]])?;
    m.matmul(r)?.reshape(&[s[0], s[1], r.cols()])
}

/// QR sweeps from both ends toward `center`.
pub fn canonicalize(tt: &TensorTrain, center: usize) -> Result<TensorTrain> {
    let n = tt.len();
    if center >= n {
        return Err(Error::IndexOutOfBounds {
            index: vec![center],
            shape: vec![n],
        });
    }
    let mut cores = tt.cores.clone();
    for i in 0..center {
        let s = cores[i].shape().to_vec();
        let (q, r) = qr(&cores[i].reshape(&[s[0] * s[1], s[2]])?)?;
        cores[i] = q.reshape(&[s[0], s[1], q.cols()])?;
        cores[i + 1] = absorb_left(&r, &cores[i + 1])?;
    }
    for i in (center + 1..n).rev() {
        let s = cores[i].shape().to_vec();
        // M = Rᵀ Qᵀ from the QR of Mᵀ
        let (q, r) = qr(&cores[i].reshape(&[s[0], s[1] * s[2]])?.transpose()?)?;
        cores[i] = q.transpose()?.reshape(&[q.cols(), s[1], s[2]])?;
        cores[i - 1] = absorb_right(&cores[i - 1], &r.transpose()?)?;
    }
    let mut out = TensorTrain::new(cores)?;
    out.center = Some(center);
    Ok(out)
}

/// Right-to-left SVD truncation sweep. Returns the train (center 0) and the
/// bound `sqrt(Σ_b w_b)` on the dense Frobenius error.
pub fn tt_truncate(tt: &TensorTrain, max_bond: usize, tol: f64) -> Result<(TensorTrain, f64)> {
    check_bond(max_bond)?;
    let n = tt.len();
    let mut cores = canonicalize(tt, n - 1)?.cores;
    let mut weight = 0.0;
    for i in (1..n).rev() {
        let s = cores[i].shape().to_vec();
        let full = svd(&cores[i].reshape(&[s[0], s[1] * s[2]])?)?;
        let k = kept(&full.s, max_bond, tol);
        weight += discarded_weight(&full.s, k);
        let trunc = full.truncated(k);
        cores[i] = trunc.vt.reshape(&[k, s[1], s[2]])?;
        let mut us = trunc.u;
        let cols = us.cols();
        for (j, v) in us.data_mut().iter_mut().enumerate() {
            *v *= trunc.s[j % cols];
        }
        cores[i - 1] = absorb_right(&cores[i - 1], &us)?;
    }
    let mut out = TensorTrain::new(cores)?;
    out.center = Some(0);
    Ok((out, weight.sqrt()))
}

/// Insert `X · X_inv` on internal bond `bond` (between cores `bond` and `bond + 1`).
pub fn gauge_transform(
    tt: &TensorTrain,
    bond: usize,
    x: &Tensor,
    x_inv: &Tensor,
) -> Result<TensorTrain> {
    if bond + 1 >= tt.len() {
        return Err(Error::IndexOutOfBounds {
            index: vec![bond],
            shape: vec![tt.len().saturating_sub(1)],
        });
    }
    x.expect_order(2)?;
    x_inv.expect_order(2)?;
    let dim = tt.cores[bond].shape()[2];
    if x.rows() != dim || x_inv.cols() != dim || x.cols() != x_inv.rows() {
        return Err(Error::ShapeMismatch(format!(
            "X {:?} and X_inv {:?} do not fit bond of dim {dim}",
            x.shape(),
            x_inv.shape()
        )));
    }
    let defect = x.matmul(x_inv)?.max_abs_diff(&Tensor::identity(dim))?;
    if defect > 1e-10 {
        return Err(Error::InvalidArgument(format!(
            "X · X_inv differs from identity by {defect:e}"
        )));
    }
    let mut cores = tt.cores.clone();
    cores[bond] = absorb_right(&cores[bond], x)?;
    cores[bond + 1] = absorb_left(x_inv, &cores[bond + 1])?;
    TensorTrain::new(cores)
}
