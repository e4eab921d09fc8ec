//! The toy induction head: a previous-token head feeding a match-based head
//! on a repeated random sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{softmax_rows_masked, Mask};
use crate::einsum::einsum;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Additive penalty applied to keys after the query.
pub const FUTURE_PENALTY: f64 = 1e5;

/// `P[a, b] = 1` iff `a = b + 1`: every position reads its predecessor,
/// and row 0 is empty. Requires `seq_len >= 1`.
pub fn previous_token_pattern(seq_len: usize) -> Tensor {
    assert!(seq_len >= 1, "previous_token_pattern needs seq_len >= 1");
    Tensor::from_fn(&[seq_len, seq_len], |i| {
        f64::from(u8::from(i[0] == i[1] + 1))
    })
}

/// Scores `attn[q, k] = x_k · match · x_{q+1}`, strict upper triangle set to
/// `-1e5`, softmax over keys.
pub fn toy_induction_pattern(x: &Tensor, matcher: &Tensor) -> Result<Tensor> {
    x.expect_order(2)?;
    matcher.expect_order(2)?;
    let (seq, hidden) = (x.rows(), x.cols());
    if matcher.shape() != [hidden, hidden] {
        return Err(Error::ShapeMismatch(format!(
            "match is {:?}, expected [{hidden}, {hidden}]",
            matcher.shape()
        )));
    }
    let prev = previous_token_pattern(seq);
    let scores = einsum(
        "seq0 hidden0, hidden0 hidden1, seq1 hidden1, seq1 seq2 -> seq2 seq0",
        &[x.clone(), matcher.clone(), x.clone(), prev],
    )?;
    Ok(softmax_rows_masked(
        &scores,
        Mask::Additive {
            penalty: FUTURE_PENALTY,
            diag_offset: 1,
        },
    ))
}

#[derive(Debug, Clone)]
pub struct InductionRun {
    pub pattern_len: usize,
    pub repeats: usize,
    /// (pattern_len · repeats) × hidden
    pub x: Tensor,
    pub pattern: Tensor,
}

impl InductionRun {
    /// Per query, the key with the largest weight (first on ties).
    pub fn argmax_keys(&self) -> Vec<usize> {
        let n = self.pattern.cols();
        (0..self.pattern.rows())
            .map(|q| {
                (0..n).fold(0, |best, k| {
                    if self.pattern.at(q, k) > self.pattern.at(q, best) {
                        k
                    } else {
                        best
                    }
                })
            })
            .collect()
    }
}

/// Uniform `[0, 1)` block of `pattern_len` vectors, tiled `repeats` times,
/// scored with the identity match.
pub fn induction_run(
    pattern_len: usize,
    repeats: usize,
    hidden: usize,
    seed: u64,
) -> Result<InductionRun> {
    if pattern_len == 0 || repeats == 0 || hidden == 0 {
        return Err(Error::InvalidArgument(format!(
            "pattern_len, repeats and hidden must be positive (got {pattern_len}, {repeats}, {hidden})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block = Tensor::random(&[pattern_len, hidden], &mut rng);
    let x = Tensor::from_fn(&[pattern_len * repeats, hidden], |i| {
        block.at(i[0] % pattern_len, i[1])
    });
    let pattern = toy_induction_pattern(&x, &Tensor::identity(hidden))?;
    Ok(InductionRun {
        pattern_len,
        repeats,
        x,
        pattern,
    })
}

/// Weight row `q` puts on keys `k <= q` that followed an earlier copy of
/// token `q + 1`, i.e. `k ≡ q + 1 (mod pattern_len)`.
pub fn induction_mass(pattern: &Tensor, q: usize, pattern_len: usize) -> f64 {
    (0..=q.min(pattern.cols() - 1))
        .filter(|&k| (q + 1 - k).is_multiple_of(pattern_len))
        .fold(0.0, |acc, k| acc + pattern.at(q, k))
}

/// One row per line, comma separated, shortest round-trip decimal form.
pub fn pattern_csv(t: &Tensor) -> String {
    let mut out = String::new();
    for r in 0..t.rows() {
        let row: Vec<String> = (0..t.cols()).map(|c| format!("{}", t.at(r, c))).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Binary greymap, `round(255 · |w|)` per entry clamped to `[0, 255]`.
pub fn pattern_pgm(t: &Tensor) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", t.cols(), t.rows()).into_bytes();
    out.extend(
        t.data()
            .iter()
            .map(|v| (255.0 * v.abs().min(1.0)).round() as u8),
    );
    out
}
