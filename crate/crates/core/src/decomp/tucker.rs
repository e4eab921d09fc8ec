//! Tucker decomposition: HOSVD initialization refined by HOOI sweeps.

use crate::decomp::svd::svd;
use crate::einsum::einsum;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `T ≈ core ×_0 U_0 ×_1 U_1 …` with isometric `U_k` (`dim_k × rank_k`).
#[derive(Debug, Clone, PartialEq)]
pub struct TuckerForm {
    pub core: Tensor,
    pub factors: Vec<Tensor>,
}

#[derive(Debug, Clone)]
pub struct TuckerFit {
    pub form: TuckerForm,
    /// Relative error after HOSVD, then after each HOOI sweep.
    pub errors: Vec<f64>,
}

impl TuckerFit {
    pub fn relative_error(&self) -> f64 {
        *self.errors.last().expect("at least the HOSVD error")
    }
}

/// Mode-`mode` unfolding: that leg first, remaining legs in ascending order.
pub fn unfold(t: &Tensor, mode: usize) -> Result<Tensor> {
    if mode >= t.order() {
        return Err(Error::IndexOutOfBounds {
            index: vec![mode],
            shape: t.shape().to_vec(),
        });
    }
    let rest: Vec<usize> = (0..t.order()).filter(|&l| l != mode).collect();
    if rest.is_empty() {
        return t.reshape(&[t.shape()[0], 1]);
    }
    t.group_legs(&[vec![mode], rest])
}

/// `(T ×_mode M)[.., i, ..] = Σ_j M[i, j] T[.., j, ..]`.
pub fn mode_product(t: &Tensor, m: &Tensor, mode: usize) -> Result<Tensor> {
    m.expect_order(2)?;
    let unfolded = unfold(t, mode)?;
    if m.cols() != unfolded.rows() {
        return Err(Error::ShapeMismatch(format!(
            "matrix {:?} cannot act on leg {mode} of {:?}",
            m.shape(),
            t.shape()
        )));
    }
    let prod = m.matmul(&unfolded)?;
    let mut front_shape = vec![m.rows()];
    front_shape.extend(
        t.shape()
            .iter()
            .enumerate()
            .filter(|&(l, _)| l != mode)
            .map(|(_, &d)| d),
    );
    let front = prod.reshape(&front_shape)?;
    // leg `mode` sits at position 0; move it back
    let perm: Vec<usize> = (0..t.order())
        .map(|l| match l.cmp(&mode) {
            std::cmp::Ordering::Less => l + 1,
            std::cmp::Ordering::Equal => 0,
            std::cmp::Ordering::Greater => l,
        })
        .collect();
    front.permute(&perm)
}

/// Lift the core back with the factors.
pub fn tucker_reconstruct(form: &TuckerForm) -> Result<Tensor> {
    let n = form.core.order();
    if form.factors.len() != n {
        return Err(Error::ArityMismatch {
            expected: n,
            got: form.factors.len(),
        });
    }
    let core_labels: Vec<String> = (0..n).map(|k| format!("c{k}")).collect();
    let out_labels: Vec<String> = (0..n).map(|k| format!("o{k}")).collect();
    let mut expr = core_labels.join(" ");
    for k in 0..n {
        expr.push_str(&format!(", {} {}", out_labels[k], core_labels[k]));
    }
    expr.push_str(" -> ");
    expr.push_str(&out_labels.join(" "));
    let mut ts = vec![form.core.clone()];
    ts.extend(form.factors.iter().cloned());
    einsum(&expr, &ts)
}

/// Project `t` onto the factor column spaces, skipping leg `skip`.
fn project(t: &Tensor, factors: &[Tensor], skip: Option<usize>) -> Result<Tensor> {
    let mut y = t.clone();
    for (k, u) in factors.iter().enumerate() {
        if Some(k) != skip {
            y = mode_product(&y, &u.transpose()?, k)?;
        }
    }
    Ok(y)
}

fn leading_vectors(t: &Tensor, mode: usize, r: usize) -> Result<Tensor> {
    let s = svd(&unfold(t, mode)?)?;
    Ok(s.u.col_block(0, r))
}

/// Tucker with HOSVD start and `hooi_iters` HOOI sweeps.
///
/// HOSVD is deterministic; `seed` is carried for interface symmetry with
/// `cp_als` and does not affect the result.
pub fn tucker(t: &Tensor, ranks: &[usize], hooi_iters: usize, seed: u64) -> Result<TuckerFit> {
    let _ = seed;
    if ranks.len() != t.order() {
        return Err(Error::ArityMismatch {
            expected: t.order(),
            got: ranks.len(),
        });
    }
    if t.order() == 0 {
        return Err(Error::InvalidArgument("Tucker of a scalar".into()));
    }
    for (k, (&r, &d)) in ranks.iter().zip(t.shape()).enumerate() {
        if r == 0 || r > d {
            return Err(Error::InvalidArgument(format!(
                "rank {r} for leg {k} outside 1..={d}"
            )));
        }
    }
    let norm = match t.frobenius_norm() {
        n if n > 0.0 => n,
        _ => 1.0,
    };
    let mut factors = (0..t.order())
        .map(|k| leading_vectors(t, k, ranks[k]))
        .collect::<Result<Vec<_>>>()?;
    let fit_error = |factors: &[Tensor]| -> Result<(Tensor, f64)> {
        let core = project(t, factors, None)?;
        let form = TuckerForm {
            core: core.clone(),
            factors: factors.to_vec(),
        };
        let err = tucker_reconstruct(&form)?.distance(t)? / norm;
        Ok((core, err))
    };
    let (mut core, e0) = fit_error(&factors)?;
    let mut errors = vec![e0];
    for _ in 0..hooi_iters {
        for k in 0..t.order() {
            let y = project(t, &factors, Some(k))?;
            factors[k] = leading_vectors(&y, k, ranks[k])?;
        }
        let (c, e) = fit_error(&factors)?;
        core = c;
        errors.push(e);
    }
    Ok(TuckerFit {
        form: TuckerForm { core, factors },
        errors,
    })
}
