//! CP (canonical polyadic) decomposition by alternating least squares.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{next_index, Tensor};

/// Ridge added to singular ALS normal equations.
pub const CP_RIDGE: f64 = 1e-12;

/// Relative error treated as an exact fit; sweeps below it only stir rounding noise.
const EXACT_FIT: f64 = 1e-10;

/// `T ≈ Σ_r weights[r] · a_r ⊗ b_r ⊗ …` with unit-norm factor columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CpForm {
    pub weights: Vec<f64>,
    /// One `dim_k × rank` matrix per leg.
    pub factors: Vec<Tensor>,
}

impl CpForm {
    pub fn rank(&self) -> usize {
        self.weights.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpOptions {
    pub rank: usize,
    pub max_iter: usize,
    /// Stop when the relative error changes by less than this between sweeps.
    pub tol: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct CpFit {
    pub form: CpForm,
    /// Relative reconstruction error `|T - O| / |T|` after each sweep.
    pub errors: Vec<f64>,
    pub converged: bool,
    /// Some normal equations were singular and solved with a ridge term.
    pub regularized: bool,
}

impl CpFit {
    pub fn iterations(&self) -> usize {
        self.errors.len()
    }

    pub fn relative_error(&self) -> f64 {
        self.errors.last().copied().unwrap_or(f64::NAN)
    }
}

/// Dense tensor `Σ_r λ_r ⊗_k factors[k][:, r]`.
pub fn cp_reconstruct(form: &CpForm) -> Result<Tensor> {
    let rank = form.rank();
    if form.factors.is_empty() {
        return Err(Error::InvalidArgument("CP form without factors".into()));
    }
    for (k, f) in form.factors.iter().enumerate() {
        if f.order() != 2 || f.cols() != rank {
            return Err(Error::ShapeMismatch(format!(
                "factor {k} has shape {:?}, expected (dim, {rank})",
                f.shape()
            )));
        }
    }
    let shape: Vec<usize> = form.factors.iter().map(Tensor::rows).collect();
    Ok(Tensor::from_fn(&shape, |idx| {
        (0..rank)
            .map(|r| {
                form.factors
                    .iter()
                    .zip(idx)
                    .fold(form.weights[r], |acc, (f, &i)| acc * f.at(i, r))
            })
            .sum()
    }))
}

/// Fit a rank-`opts.rank` CP decomposition with seeded uniform initialization.
pub fn cp_als(t: &Tensor, opts: CpOptions) -> Result<CpFit> {
    if opts.rank == 0 {
        return Err(Error::InvalidArgument("CP rank must be at least 1".into()));
    }
    if t.order() == 0 {
        return Err(Error::InvalidArgument("CP of a scalar".into()));
    }
    let rank = opts.rank;
    let order = t.order();
    let norm_t = t.frobenius_norm();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut factors: Vec<Tensor> = t
        .shape()
        .iter()
        .map(|&d| {
            let mut f = Tensor::random(&[d, rank], &mut rng);
            normalize_columns(&mut f);
            f
        })
        .collect();
    let mut weights = vec![1.0; rank];
    let mut errors = Vec::new();
    let mut regularized = false;
    let mut converged = false;

    for _ in 0..opts.max_iter {
        for n in 0..order {
            let mut gram = vec![1.0; rank * rank];
            for (m, f) in factors.iter().enumerate() {
                if m == n {
                    continue;
                }
                for a in 0..rank {
                    for b in 0..rank {
                        let g: f64 = (0..f.rows()).map(|i| f.at(i, a) * f.at(i, b)).sum();
                        gram[a * rank + b] *= g;
                    }
                }
            }
            let mttkrp = mttkrp(t, &factors, n);
            let (sol, reg) = solve_spd_rows(&gram, rank, &mttkrp, t.shape()[n])?;
            regularized |= reg;
            let mut f = Tensor::from_parts(vec![t.shape()[n], rank], sol);
            weights = normalize_columns(&mut f);
            factors[n] = f;
        }
        let form = CpForm {
            weights: weights.clone(),
            factors: factors.clone(),
        };
        let recon = cp_reconstruct(&form)?;
        let err = recon.distance(t)? / if norm_t > 0.0 { norm_t } else { 1.0 };
        let prev = errors.last().copied();
        errors.push(err);
        if let Some(p) = prev {
            if (p - err).abs() < opts.tol {
                converged = true;
                break;
            }
        }
        if err <= EXACT_FIT {
            converged = true;
            break;
        }
    }
    Ok(CpFit {
        form: CpForm { weights, factors },
        errors,
        converged,
        regularized,
    })
}

/// Scale columns to unit norm and return the norms. Zero columns become `e_0`.
fn normalize_columns(f: &mut Tensor) -> Vec<f64> {
    let (rows, cols) = (f.rows(), f.cols());
    let mut norms = Vec::with_capacity(cols);
    let d = f.data_mut();
    for c in 0..cols {
        let n: f64 = (0..rows)
            .map(|i| d[i * cols + c].powi(2))
            .sum::<f64>()
            .sqrt();
        if n > 0.0 {
            for i in 0..rows {
                d[i * cols + c] /= n;
            }
        } else {
            for i in 0..rows {
                d[i * cols + c] = if i == 0 { 1.0 } else { 0.0 };
            }
        }
        norms.push(n);
    }
    norms
}

/// Matricized tensor times Khatri-Rao product for mode `n`: `dim_n × rank`.
fn mttkrp(t: &Tensor, factors: &[Tensor], n: usize) -> Vec<f64> {
    let rank = factors[0].cols();
    let shape = t.shape();
    let mut out = vec![0.0; shape[n] * rank];
    let mut idx = vec![0; shape.len()];
    let mut prod = vec![0.0; rank];
    for &x in t.data() {
        if x != 0.0 {
            prod.iter_mut().for_each(|p| *p = x);
            for (m, f) in factors.iter().enumerate() {
                if m != n {
                    for (r, p) in prod.iter_mut().enumerate() {
                        *p *= f.at(idx[m], r);
                    }
                }
            }
            let row = &mut out[idx[n] * rank..(idx[n] + 1) * rank];
            for (o, p) in row.iter_mut().zip(&prod) {
                *o += p;
            }
        }
        next_index(&mut idx, shape);
    }
    out
}

/// Lower Cholesky factor; `None` if a pivot drops to `rel_floor · max diag` or below.
fn cholesky(a: &[f64], n: usize, rel_floor: f64) -> Option<Vec<f64>> {
    let max_diag = (0..n).map(|i| a[i * n + i]).fold(0.0f64, f64::max);
    let floor = max_diag * rel_floor;
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if d <= floor || d <= 0.0 {
            return None;
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    Some(l)
}

/// Solve `X · A = B` for symmetric positive (semi)definite `A` (n×n), with
/// `B` having `rows` rows. Falls back to `A + ridge·I` when `A` is singular.
fn solve_spd_rows(a: &[f64], n: usize, b: &[f64], rows: usize) -> Result<(Vec<f64>, bool)> {
    let (l, reg) = match cholesky(a, n, 1e-13) {
        Some(l) => (l, false),
        None => {
            let mut ar = a.to_vec();
            for i in 0..n {
                ar[i * n + i] += CP_RIDGE;
            }
            let l = cholesky(&ar, n, 0.0)
                .ok_or_else(|| Error::Numerical("ALS normal equations are indefinite".into()))?;
            (l, true)
        }
    };
    // A symmetric: X A = B  <=>  A Xᵀ = Bᵀ, solved row by row.
    let mut x = vec![0.0; rows * n];
    for r in 0..rows {
        let rhs = &b[r * n..(r + 1) * n];
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = rhs[i];
            for k in 0..i {
                s -= l[i * n + k] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l[k * n + i] * x[r * n + k];
            }
            x[r * n + i] = s / l[i * n + i];
        }
    }
    Ok((x, reg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::einsum::einsum;

    #[test]
    fn reconstruct_single_term() {
        let e =
            |n: usize, i: usize| Tensor::from_fn(&[n, 1], |ix| if ix[0] == i { 1.0 } else { 0.0 });
        let form = CpForm {
            weights: vec![1.0],
            factors: vec![e(2, 1), e(3, 0), e(4, 2)],
        };
        let t = cp_reconstruct(&form).unwrap();
        assert_eq!(t.get(&[1, 0, 2]).unwrap(), 1.0);
        assert_eq!(t.data().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn reconstruct_matches_einsum() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let form = CpForm {
            weights: Tensor::random(&[3], &mut rng).into_data(),
            factors: vec![
                Tensor::random(&[2, 3], &mut rng),
                Tensor::random(&[3, 3], &mut rng),
                Tensor::random(&[4, 3], &mut rng),
            ],
        };
        let direct = cp_reconstruct(&form).unwrap();
        let mut ts = vec![Tensor::vector(form.weights.clone()).unwrap()];
        ts.extend(form.factors.iter().cloned());
        let via = einsum("s, i s, j s, k s -> i j k", &ts).unwrap();
        assert!(direct.max_abs_diff(&via).unwrap() < 1e-14);
    }

    #[test]
    fn reconstruct_rejects_bad_shapes() {
        let form = CpForm {
            weights: vec![1.0, 2.0],
            factors: vec![Tensor::ones(&[2, 2]), Tensor::ones(&[3, 1])],
        };
        assert!(cp_reconstruct(&form).is_err());
    }

    #[test]
    fn exact_rank_one() {
        let a = Tensor::vector(vec![1.0, -2.0]).unwrap();
        let b = Tensor::vector(vec![0.5, 1.0, 3.0]).unwrap();
        let c = Tensor::vector(vec![2.0, 1.0, 0.5, -1.0]).unwrap();
        let t = a.outer(&b).outer(&c);
        let fit = cp_als(
            &t,
            CpOptions {
                rank: 1,
                max_iter: 100,
                tol: 1e-14,
                seed: 3,
            },
        )
        .unwrap();
        let r = cp_reconstruct(&fit.form).unwrap();
        assert!(r.max_abs_diff(&t).unwrap() < 1e-8);
        assert!(fit.form.weights[0] >= 0.0);
    }

    #[test]
    fn errors_monotone_and_columns_unit() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let t = Tensor::random(&[3, 4, 5], &mut rng);
            let fit = cp_als(
                &t,
                CpOptions {
                    rank: 3,
                    max_iter: 200,
                    tol: 1e-10,
                    seed,
                },
            )
            .unwrap();
            for w in fit.errors.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{:?}", fit.errors);
            }
            for f in &fit.form.factors {
                for c in 0..f.cols() {
                    let n: f64 = (0..f.rows()).map(|i| f.at(i, c).powi(2)).sum();
                    assert!((n - 1.0).abs() < 1e-12);
                }
            }
            assert!(fit.form.weights.iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn overcomplete_rank_fits() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = Tensor::random(&[2, 3, 4], &mut rng);
        let opts = CpOptions {
            rank: 9,
            max_iter: 1000,
            tol: 1e-12,
            seed: 0,
        };
        let fit = cp_als(&t, opts).unwrap();
        let o = cp_reconstruct(&fit.form).unwrap();
        for (a, b) in t.data().iter().zip(o.data()) {
            assert!((a - b).abs() <= 1e-8 + 1e-3 * b.abs());
        }
        assert!(fit.regularized);
    }

    #[test]
    fn rank_zero_rejected() {
        let t = Tensor::ones(&[2, 2]);
        let opts = CpOptions {
            rank: 0,
            max_iter: 1,
            tol: 0.0,
            seed: 0,
        };
        assert!(cp_als(&t, opts).is_err());
    }
}
