//! Two-layer path expansion of `(I + L2)(I + L1) x W_U`.

use super::{frozen_forward, head_pattern, AttentionLayer, FrozenAttention, FrozenHead};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Route a term takes through the two layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PathKind {
    Direct,
    Layer1,
    Layer2,
    QComp,
    KComp,
    VComp,
    QKComp,
    QVComp,
    KVComp,
    QKVComp,
}

impl PathKind {
    /// Number of composition routes used (0 for the three plain terms).
    pub fn composition_order(self) -> usize {
        match self {
            PathKind::Direct | PathKind::Layer1 | PathKind::Layer2 => 0,
            PathKind::QComp | PathKind::KComp | PathKind::VComp => 1,
            PathKind::QKComp | PathKind::QVComp | PathKind::KVComp => 2,
            PathKind::QKVComp => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathTerm {
    pub kind: PathKind,
    /// seq_len × vocab
    pub value: Tensor,
}

/// Second layer of the model: frozen outright, or with its pattern computed
/// from the residual stream it reads.
#[derive(Debug, Clone)]
pub enum SecondLayer {
    Frozen(FrozenAttention),
    Live {
        layer: AttentionLayer,
        scale: Option<f64>,
    },
}

impl SecondLayer {
    fn is_zero_map(&self) -> bool {
        match self {
            SecondLayer::Frozen(f) => f.is_zero_map(),
            SecondLayer::Live { layer, .. } => layer
                .heads
                .iter()
                .all(|h| h.ov().map(|m| m.max_abs() == 0.0).unwrap_or(false)),
        }
    }
}

/// Direct forward pass: `h = x + L1(x)`, then `(h + L2(h)) · W_U`.
pub fn two_layer_forward(
    x: &Tensor,
    layer1: &FrozenAttention,
    layer2: &SecondLayer,
    w_u: &Tensor,
) -> Result<Tensor> {
    let h = x.add(&frozen_forward(x, layer1)?)?;
    let l2 = match layer2 {
        SecondLayer::Frozen(f) => frozen_forward(&h, f)?,
        SecondLayer::Live { layer, scale } => super::attention_forward(&h, layer, *scale)?,
    };
    h.add(&l2)?.matmul(w_u)
}

/// Sum of `A_h · src · OV_h` over heads with per-head patterns.
fn apply_patterns(patterns: &[Tensor], ovs: &[Tensor], src: &Tensor) -> Result<Tensor> {
    let mut out = Tensor::zeros(src.shape());
    for (a, ov) in patterns.iter().zip(ovs) {
        out = out.add(&a.matmul(&src.matmul(ov)?)?)?;
    }
    Ok(out)
}

/// Enumerate path terms. Terms routed through a layer that is identically
/// zero are left out, so the list shrinks to what actually contributes.
///
/// A frozen second layer yields direct, layer-1, layer-2 and V-composition.
/// A live second layer also splits its pattern `A2(h, h)` by whether the
/// query and key sides read `x` or `h = x + L1(x)`: with
/// `ΔQ = A2(h,x) - A2(x,x)`, `ΔK = A2(x,h) - A2(x,x)` and
/// `ΔQK = A2(h,h) - A2(h,x) - A2(x,h) + A2(x,x)`, each difference acts on
/// `x` (Q, K, QK terms) and on `L1(x)` (QV, KV, QKV terms).
pub fn path_expansion_two_layer(
    x: &Tensor,
    layer1: &FrozenAttention,
    layer2: &SecondLayer,
    w_u: &Tensor,
) -> Result<Vec<PathTerm>> {
    x.expect_order(2)?;
    w_u.expect_order(2)?;
    if w_u.rows() != x.cols() {
        return Err(Error::ShapeMismatch(format!(
            "W_U {:?} cannot unembed residual {:?}",
            w_u.shape(),
            x.shape()
        )));
    }
    let delta = frozen_forward(x, layer1)?;
    let l1_live = !layer1.is_zero_map();
    let l2_live = !layer2.is_zero_map();
    let mut terms = vec![PathTerm {
        kind: PathKind::Direct,
        value: x.matmul(w_u)?,
    }];
    let mut push = |kind, v: Tensor| -> Result<()> {
        terms.push(PathTerm {
            kind,
            value: v.matmul(w_u)?,
        });
        Ok(())
    };
    if l1_live {
        push(PathKind::Layer1, delta.clone())?;
    }
    if !l2_live {
        return Ok(terms);
    }
    match layer2 {
        SecondLayer::Frozen(f) => {
            push(PathKind::Layer2, frozen_forward(x, f)?)?;
            if l1_live {
                push(PathKind::VComp, frozen_forward(&delta, f)?)?;
            }
        }
        SecondLayer::Live { layer, scale } => {
            let h = x.add(&delta)?;
            let ovs = layer
                .heads
                .iter()
                .map(|hd| hd.ov())
                .collect::<Result<Vec<_>>>()?;
            let pats = |q: &Tensor, k: &Tensor| -> Result<Vec<Tensor>> {
                layer
                    .heads
                    .iter()
                    .map(|hd| head_pattern(q, k, hd, *scale))
                    .collect()
            };
            let a_xx = pats(x, x)?;
            push(PathKind::Layer2, apply_patterns(&a_xx, &ovs, x)?)?;
            if l1_live {
                let a_hx = pats(&h, x)?;
                let a_xh = pats(x, &h)?;
                let a_hh = pats(&h, &h)?;
                let diff = |a: &[Tensor], b: &[Tensor]| -> Result<Vec<Tensor>> {
                    a.iter().zip(b).map(|(p, q)| p.sub(q)).collect()
                };
                let dq = diff(&a_hx, &a_xx)?;
                let dk = diff(&a_xh, &a_xx)?;
                let dqk = (0..a_xx.len())
                    .map(|i| a_hh[i].sub(&a_hx[i])?.sub(&a_xh[i])?.add(&a_xx[i]))
                    .collect::<Result<Vec<_>>>()?;
                push(PathKind::QComp, apply_patterns(&dq, &ovs, x)?)?;
                push(PathKind::KComp, apply_patterns(&dk, &ovs, x)?)?;
                push(PathKind::VComp, apply_patterns(&a_xx, &ovs, &delta)?)?;
                push(PathKind::QKComp, apply_patterns(&dqk, &ovs, x)?)?;
                push(PathKind::QVComp, apply_patterns(&dq, &ovs, &delta)?)?;
                push(PathKind::KVComp, apply_patterns(&dk, &ovs, &delta)?)?;
                push(PathKind::QKVComp, apply_patterns(&dqk, &ovs, &delta)?)?;
            }
        }
    }
    Ok(terms)
}

/// Single head equivalent to layer-1 head feeding layer-2 head through its
/// values: pattern `A2 · A1`, `W_V = W_V1 · W_O1 · W_V2`, `W_O = W_O2`.
pub fn virtual_head(f1: &FrozenAttention, f2: &FrozenAttention) -> Result<FrozenAttention> {
    if f1.heads.len() != 1 || f2.heads.len() != 1 {
        return Err(Error::InvalidArgument(
            "virtual_head takes single-head layers".into(),
        ));
    }
    let (h1, h2) = (&f1.heads[0], &f2.heads[0]);
    if f1.hidden() != f2.hidden() || f1.seq_len() != f2.seq_len() {
        return Err(Error::ShapeMismatch(format!(
            "layers disagree: seq {} vs {}, hidden {} vs {}",
            f1.seq_len(),
            f2.seq_len(),
            f1.hidden(),
            f2.hidden()
        )));
    }
    FrozenAttention::new(vec![FrozenHead {
        pattern: h2.pattern.matmul(&h1.pattern)?,
        w_v: h1.w_v.matmul(&h1.w_o)?.matmul(&h2.w_v)?,
        w_o: h2.w_o.clone(),
    }])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::{previous_token_pattern, toy_induction_pattern, ModelDims};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dims(heads: usize) -> ModelDims {
        ModelDims {
            seq_len: 5,
            vocab: 7,
            hidden: 6,
            num_heads: heads,
            head_size: 3,
            mlp_dim: 4,
        }
    }

    fn silence(mut f: FrozenAttention) -> FrozenAttention {
        f.heads.iter_mut().for_each(|h| h.w_o = h.w_o.scale(0.0));
        f
    }

    fn sum(terms: &[PathTerm]) -> Tensor {
        terms
            .iter()
            .skip(1)
            .fold(terms[0].value.clone(), |acc, t| acc.add(&t.value).unwrap())
    }

    fn kinds(terms: &[PathTerm]) -> Vec<PathKind> {
        terms.iter().map(|t| t.kind).collect()
    }

    #[test]
    fn zero_layers_leave_direct_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(81);
        let l1 = silence(FrozenAttention::random(&dims(2), &mut rng).unwrap());
        let l2 = SecondLayer::Frozen(silence(
            FrozenAttention::random(&dims(2), &mut rng).unwrap(),
        ));
        let x = Tensor::random(&[5, 6], &mut rng);
        let w_u = Tensor::random(&[6, 7], &mut rng);
        let terms = path_expansion_two_layer(&x, &l1, &l2, &w_u).unwrap();
        assert_eq!(kinds(&terms), vec![PathKind::Direct]);
        assert_eq!(terms[0].value, x.matmul(&w_u).unwrap());
    }

    #[test]
    fn zero_second_layer_leaves_layer1_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(82);
        let l1 = FrozenAttention::random(&dims(2), &mut rng).unwrap();
        let l2 = SecondLayer::Frozen(silence(
            FrozenAttention::random(&dims(2), &mut rng).unwrap(),
        ));
        let x = Tensor::random(&[5, 6], &mut rng);
        let w_u = Tensor::random(&[6, 7], &mut rng);
        let terms = path_expansion_two_layer(&x, &l1, &l2, &w_u).unwrap();
        assert_eq!(kinds(&terms), vec![PathKind::Direct, PathKind::Layer1]);
        let fwd = two_layer_forward(&x, &l1, &l2, &w_u).unwrap();
        assert!(sum(&terms).max_abs_diff(&fwd).unwrap() <= 1e-10);
    }

    #[test]
    fn frozen_terms_sum_to_forward() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(83 + seed);
            let l1 = FrozenAttention::random(&dims(2), &mut rng).unwrap();
            let l2 = SecondLayer::Frozen(FrozenAttention::random(&dims(3), &mut rng).unwrap());
            let x = Tensor::random(&[5, 6], &mut rng);
            let w_u = Tensor::random(&[6, 7], &mut rng);
            let terms = path_expansion_two_layer(&x, &l1, &l2, &w_u).unwrap();
            assert_eq!(terms.len(), 4);
            let fwd = two_layer_forward(&x, &l1, &l2, &w_u).unwrap();
            assert!(sum(&terms).max_abs_diff(&fwd).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn live_terms_census_and_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(90);
        let l1 = FrozenAttention::random(&dims(2), &mut rng).unwrap();
        let layer = AttentionLayer::random(&dims(2), &mut rng).unwrap();
        let l2 = SecondLayer::Live {
            layer,
            scale: Some(0.05),
        };
        let x = Tensor::random(&[5, 6], &mut rng);
        let w_u = Tensor::random(&[6, 7], &mut rng);
        let terms = path_expansion_two_layer(&x, &l1, &l2, &w_u).unwrap();
        let mut census = [0usize; 4];
        for t in &terms {
            census[t.kind.composition_order()] += 1;
        }
        assert_eq!(census, [3, 3, 3, 1]);
        let fwd = two_layer_forward(&x, &l1, &l2, &w_u).unwrap();
        assert!(sum(&terms).max_abs_diff(&fwd).unwrap() <= 1e-10);
        let q = terms.iter().find(|t| t.kind == PathKind::QComp).unwrap();
        assert!(q.value.max_abs() > 0.0);
    }

    #[test]
    fn virtual_head_is_v_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        let f1 = FrozenAttention::random(&dims(1), &mut rng).unwrap();
        let f2 = FrozenAttention::random(&dims(1), &mut rng).unwrap();
        let x = Tensor::random(&[5, 6], &mut rng);
        let w_u = Tensor::random(&[6, 7], &mut rng);
        let v = virtual_head(&f1, &f2).unwrap();
        let terms =
            path_expansion_two_layer(&x, &f1, &SecondLayer::Frozen(f2.clone()), &w_u).unwrap();
        let vcomp = terms.iter().find(|t| t.kind == PathKind::VComp).unwrap();
        let got = frozen_forward(&x, &v).unwrap().matmul(&w_u).unwrap();
        assert!(got.max_abs_diff(&vcomp.value).unwrap() <= 1e-10);

        let mut ident = f1.clone();
        ident.heads[0].pattern = Tensor::identity(5);
        let mut ident2 = f2.clone();
        ident2.heads[0].pattern = Tensor::identity(5);
        assert_eq!(
            virtual_head(&ident, &ident2).unwrap().heads[0].pattern,
            Tensor::identity(5)
        );

        let mut dead = f1.clone();
        dead.heads[0].w_v = dead.heads[0].w_v.scale(0.0);
        assert_eq!(
            frozen_forward(&x, &virtual_head(&dead, &f2).unwrap())
                .unwrap()
                .max_abs(),
            0.0
        );
    }

    #[test]
    fn induction_virtual_head() {
        let mut rng = ChaCha8Rng::seed_from_u64(92);
        let base = Tensor::random(&[3, 6], &mut rng);
        let x = Tensor::from_fn(&[6, 6], |i| base.at(i[0] % 3, i[1]));
        let prev = FrozenAttention::new(vec![FrozenHead {
            pattern: previous_token_causal(6),
            w_v: Tensor::identity(6),
            w_o: Tensor::identity(6),
        }])
        .unwrap();
        let ind = toy_induction_pattern(&x, &Tensor::identity(6)).unwrap();
        let f2 = FrozenAttention::new(vec![FrozenHead {
            pattern: ind,
            w_v: Tensor::identity(6),
            w_o: Tensor::identity(6),
        }])
        .unwrap();
        let w_u = Tensor::identity(6);
        let terms =
            path_expansion_two_layer(&x, &prev, &SecondLayer::Frozen(f2.clone()), &w_u).unwrap();
        let vcomp = terms.iter().find(|t| t.kind == PathKind::VComp).unwrap();
        let v = virtual_head(&prev, &f2).unwrap();
        assert!(
            frozen_forward(&x, &v)
                .unwrap()
                .max_abs_diff(&vcomp.value)
                .unwrap()
                <= 1e-10
        );
        let gap = previous_token_causal(6)
            .sub(&previous_token_pattern(6))
            .unwrap();
        assert_eq!(gap.data().iter().sum::<f64>(), 1.0);
        assert_eq!(gap.at(0, 0), 1.0);
    }

    /// Previous-token attention made row-stochastic: row 0 attends to itself.
    fn previous_token_causal(n: usize) -> Tensor {
        Tensor::from_fn(&[n, n], |i| {
            f64::from(u8::from(i[1] + 1 == i[0] || (i[0] == 0 && i[1] == 0)))
        })
    }

    #[test]
    fn virtual_head_rejects_multihead() {
        let mut rng = ChaCha8Rng::seed_from_u64(93);
        let f = FrozenAttention::random(&dims(2), &mut rng).unwrap();
        assert!(virtual_head(&f, &f).is_err());
    }
}
