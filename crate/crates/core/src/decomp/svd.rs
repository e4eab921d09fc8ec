//! One-sided Jacobi SVD, Householder QR, and SVD truncation.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Rotations stop once every column pair satisfies
/// `|a_p·a_q| <= JACOBI_TOL * |a_p| |a_q|`.
pub const JACOBI_TOL: f64 = 1e-14;
const MAX_SWEEPS: usize = 80;

/// `M = U · diag(s) · Vt` with `s` descending.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    /// m×r, orthonormal columns.
    pub u: Tensor,
    pub s: Vec<f64>,
    /// r×n, orthonormal rows.
    pub vt: Tensor,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn reconstruct(&self) -> Tensor {
        let r = self.s.len();
        let mut us = self.u.clone();
        let cols = us.cols();
        for (k, v) in us.data_mut().iter_mut().enumerate() {
            *v *= self.s[k % cols];
        }
        debug_assert_eq!(cols, r);
        us.matmul(&self.vt).expect("consistent factors")
    }

    /// Keep the leading `k` triples.
    pub fn truncated(&self, k: usize) -> SvdResult {
        SvdResult {
            u: self.u.col_block(0, k),
            s: self.s[..k].to_vec(),
            vt: self.vt.row_block(0, k),
        }
    }
}

/// Thin SVD of a matrix by one-sided Jacobi rotations.
///
/// Sign convention: the largest-magnitude entry of each column of `U` is
/// nonnegative (first such entry on ties).
pub fn svd(m: &Tensor) -> Result<SvdResult> {
    m.expect_order(2)?;
    let (rows, cols) = (m.rows(), m.cols());
    let mut out = if rows >= cols {
        jacobi_tall(m)?
    } else {
        // Mᵀ = U' S V'ᵀ  =>  M = V' S U'ᵀ
        let t = jacobi_tall(&m.transpose()?)?;
        SvdResult {
            u: t.vt.transpose()?,
            s: t.s,
            vt: t.u.transpose()?,
        }
    };
    fix_signs(&mut out);
    Ok(out)
}

fn fix_signs(res: &mut SvdResult) {
    let (m, r) = (res.u.rows(), res.u.cols());
    let n = res.vt.cols();
    for k in 0..r {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for i in 0..m {
            let v = res.u.at(i, k);
            if v.abs() > best {
                best = v.abs();
                sign = v.signum();
            }
        }
        if sign < 0.0 {
            let ud = res.u.data_mut();
            for i in 0..m {
                ud[i * r + k] = -ud[i * r + k];
            }
            let vd = res.vt.data_mut();
            for j in 0..n {
                vd[k * n + j] = -vd[k * n + j];
            }
        }
    }
}

/// Jacobi SVD for rows >= cols. Works on columns stored contiguously.
fn jacobi_tall(m: &Tensor) -> Result<SvdResult> {
    let (rows, n) = (m.rows(), m.cols());
    // column-major copies
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..rows).map(|i| m.at(i, j)).collect())
        .collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&a[p], &a[p]);
                let beta = dot(&a[q], &a[q]);
                let gamma = dot(&a[p], &a[q]);
                if alpha == 0.0 || beta == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt()
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (lo, hi) = a.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], c, s);
                let (lo, hi) = v.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "Jacobi SVD did not converge in {MAX_SWEEPS} sweeps"
        )));
    }

    let norms: Vec<f64> = a.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let smax = norms.iter().copied().fold(0.0, f64::max);

    let mut ucols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    for &k in &order {
        let sk = norms[k];
        s.push(sk);
        let col = if sk > 0.0 && sk >= smax * JACOBI_TOL {
            a[k].iter().map(|x| x / sk).collect()
        } else {
            complete_basis(&ucols, (sk > 0.0).then(|| a[k].as_slice()), rows)
        };
        ucols.push(col);
    }
    let u = Tensor::from_fn(&[rows, n], |ix| ucols[ix[1]][ix[0]]);
    let vt = Tensor::from_fn(&[n, n], |ix| v[order[ix[0]]][ix[1]]);
    Ok(SvdResult { u, s, vt })
}

#[inline]
fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (p, q) in x.iter_mut().zip(y.iter_mut()) {
        let (xp, yq) = (*p, *q);
        *p = c * xp - s * yq;
        *q = s * xp + c * yq;
    }
}

/// Unit vector orthogonal to `basis`, tried from `hint` then coordinate axes.
fn complete_basis(basis: &[Vec<f64>], hint: Option<&[f64]>, dim: usize) -> Vec<f64> {
    let axes = (0..dim).map(|i| {
        let mut e = vec![0.0; dim];
        e[i] = 1.0;
        e
    });
    for cand in hint.map(<[f64]>::to_vec).into_iter().chain(axes) {
        let n0 = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n0 == 0.0 {
            continue;
        }
        let mut w: Vec<f64> = cand.iter().map(|x| x / n0).collect();
        for _ in 0..2 {
            for b in basis {
                let d: f64 = w.iter().zip(b).map(|(x, y)| x * y).sum();
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= d * bi;
                }
            }
        }
        let nw = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nw > 0.5 {
            return w.into_iter().map(|x| x / nw).collect();
        }
    }
    unreachable!("fewer basis vectors than dimensions")
}

/// Thin Householder QR: `M = Q R` with `Q` m×k isometric, `R` k×n upper
/// triangular with nonnegative diagonal, `k = min(m, n)`.
pub fn qr(m: &Tensor) -> Result<(Tensor, Tensor)> {
    m.expect_order(2)?;
    let (rows, cols) = (m.rows(), m.cols());
    let k = rows.min(cols);
    let mut r: Vec<f64> = m.data().to_vec();
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(k);
    for j in 0..k {
        let norm: f64 = (j..rows)
            .map(|i| r[i * cols + j].powi(2))
            .sum::<f64>()
            .sqrt();
        let mut v: Vec<f64> = (j..rows).map(|i| r[i * cols + j]).collect();
        if norm == 0.0 {
            vs.push(vec![0.0; rows - j]);
            continue;
        }
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vn: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if vn > 0.0 {
            v.iter_mut().for_each(|x| *x /= vn);
        }
        for c in j..cols {
            let d: f64 = (j..rows).map(|i| v[i - j] * r[i * cols + c]).sum();
            for i in j..rows {
                r[i * cols + c] -= 2.0 * v[i - j] * d;
            }
        }
        vs.push(v);
    }
    // Q = H_0 H_1 ... H_{k-1} applied to the first k columns of the identity.
    let mut q = vec![0.0; rows * k];
    for i in 0..k {
        q[i * k + i] = 1.0;
    }
    for j in (0..k).rev() {
        let v = &vs[j];
        for c in 0..k {
            let d: f64 = (j..rows).map(|i| v[i - j] * q[i * k + c]).sum();
            for i in j..rows {
                q[i * k + c] -= 2.0 * v[i - j] * d;
            }
        }
    }
    let mut rk: Vec<f64> = (0..k)
        .flat_map(|i| (0..cols).map(move |c| (i, c)))
        .map(|(i, c)| if c >= i { r[i * cols + c] } else { 0.0 })
        .collect();
    for i in 0..k {
        if rk[i * cols + i] < 0.0 {
            for c in 0..cols {
                rk[i * cols + c] = -rk[i * cols + c];
            }
            for row in 0..rows {
                q[row * k + i] = -q[row * k + i];
            }
        }
    }
    Ok((
        Tensor::from_parts(vec![rows, k], q),
        Tensor::from_parts(vec![k, cols], rk),
    ))
}

/// Best rank-`k` approximation and its Frobenius error `sqrt(Σ_{i>k} s_i²)`.
pub fn truncated_svd(m: &Tensor, k: usize) -> Result<(SvdResult, f64)> {
    m.expect_order(2)?;
    let full = m.rows().min(m.cols());
    if k < 1 || k > full {
        return Err(Error::InvalidArgument(format!(
            "kept rank {k} outside 1..={full}"
        )));
    }
    let res = svd(m)?;
    let err = discarded_weight(&res.s, k).sqrt();
    Ok((res.truncated(k), err))
}

/// `Σ_{i>=k} s_i²`, summed smallest first.
pub(crate) fn discarded_weight(s: &[f64], k: usize) -> f64 {
    s[k..].iter().rev().fold(0.0, |acc, x| acc + x * x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{diag_embed, is_isometry};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn check(m: &Tensor, res: &SvdResult) {
        assert!(is_isometry(&res.u, 1e-10).unwrap());
        assert!(is_isometry(&res.vt, 1e-10).unwrap());
        assert!(res.s.windows(2).all(|w| w[0] >= w[1]));
        assert!(res.s.iter().all(|&x| x >= 0.0));
        assert!(res.reconstruct().max_abs_diff(m).unwrap() <= 1e-10);
    }

    #[test]
    fn diagonal_and_identity() {
        let d = diag_embed(&Tensor::vector(vec![3.0, 2.0, 1.0]).unwrap()).unwrap();
        assert_eq!(svd(&d).unwrap().s, vec![3.0, 2.0, 1.0]);
        let d = diag_embed(&Tensor::vector(vec![1.0, 3.0, 2.0]).unwrap()).unwrap();
        let r = svd(&d).unwrap();
        assert_eq!(r.s, vec![3.0, 2.0, 1.0]);
        check(&d, &r);
        assert_eq!(svd(&Tensor::identity(4)).unwrap().s, vec![1.0; 4]);
    }

    #[test]
    fn random_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for &(m, n) in &[(8, 5), (5, 8), (1, 4), (4, 1), (7, 7), (20, 20)] {
            let a = Tensor::random_signed(&[m, n], &mut rng);
            let r = svd(&a).unwrap();
            check(&a, &r);
            let fro2 = a.frobenius_norm().powi(2);
            let s2: f64 = r.s.iter().map(|x| x * x).sum();
            assert!((fro2 - s2).abs() <= 1e-9);
        }
    }

    #[test]
    fn rank_deficient_still_isometric() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let x = Tensor::random_signed(&[6, 2], &mut rng);
        let y = Tensor::random_signed(&[2, 5], &mut rng);
        let a = x.matmul(&y).unwrap();
        let r = svd(&a).unwrap();
        check(&a, &r);
        assert!(r.s[2] < 1e-12);
        let z = Tensor::zeros(&[3, 4]);
        let r = svd(&z).unwrap();
        check(&z, &r);
        assert_eq!(r.s, vec![0.0; 3]);
    }

    #[test]
    fn sign_convention() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let a = Tensor::random_signed(&[5, 3], &mut rng);
        let r = svd(&a).unwrap();
        for k in 0..3 {
            let col: Vec<f64> = (0..5).map(|i| r.u.at(i, k)).collect();
            let big = col
                .iter()
                .copied()
                .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(big >= 0.0);
        }
        assert!(svd(&Tensor::ones(&[3])).is_err());
    }

    #[test]
    fn agrees_with_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let a = Tensor::random_signed(&[9, 6], &mut rng);
        let ours = svd(&a).unwrap();
        let na = nalgebra::DMatrix::from_row_slice(9, 6, a.data());
        let mut theirs: Vec<f64> = na.singular_values().iter().copied().collect();
        theirs.sort_by(|x, y| y.total_cmp(x));
        for (x, y) in ours.s.iter().zip(&theirs) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn truncation() {
        let d = diag_embed(&Tensor::vector(vec![3.0, 2.0, 1.0]).unwrap()).unwrap();
        let (r, e) = truncated_svd(&d, 1).unwrap();
        assert!((e - 5f64.sqrt()).abs() < 1e-15);
        assert_eq!(r.rank(), 1);
        let (_, e) = truncated_svd(&d, 3).unwrap();
        assert_eq!(e, 0.0);
        assert!(truncated_svd(&d, 0).is_err());
        assert!(truncated_svd(&d, 4).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let a = Tensor::random_signed(&[10, 7], &mut rng);
        for k in 1..=7 {
            let (r, e) = truncated_svd(&a, k).unwrap();
            let measured = r.reconstruct().distance(&a).unwrap();
            assert!((measured - e).abs() <= 1e-9);
        }
    }

    #[test]
    fn qr_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        for &(m, n) in &[(6, 3), (3, 6), (4, 4), (1, 3)] {
            let a = Tensor::random_signed(&[m, n], &mut rng);
            let (q, r) = qr(&a).unwrap();
            assert!(is_isometry(&q, 1e-12).unwrap() || q.cols() > q.rows());
            assert!(q.matmul(&r).unwrap().max_abs_diff(&a).unwrap() < 1e-12);
            for i in 0..r.rows() {
                assert!(r.at(i, i) >= 0.0);
                for c in 0..i.min(r.cols()) {
                    assert_eq!(r.at(i, c), 0.0);
                }
            }
        }
        // QR of an isometry returns it unchanged
        let (q, _) = qr(&Tensor::random_signed(&[6, 3], &mut rng)).unwrap();
        let (q2, r2) = qr(&q).unwrap();
        assert!(q2.max_abs_diff(&q).unwrap() < 1e-12);
        assert!(r2.max_abs_diff(&Tensor::identity(3)).unwrap() < 1e-12);
    }
}
