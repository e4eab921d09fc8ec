use super::EinsumSpec;
use crate::error::{Error, Result};
use crate::path::{self, ContractionPath};
use crate::tensor::{gemm, next_index, strides_of, Tensor};

/// Largest index space `naive_contract` will enumerate.
pub const NAIVE_LIMIT: u128 = 100_000_000;

/// Reference contraction: sum over every assignment of every label.
///
/// Exponential in the number of labels; meant as an oracle for small networks.
pub fn naive_contract(spec: &EinsumSpec, tensors: &[Tensor]) -> Result<Tensor> {
    let shapes: Vec<&[usize]> = tensors.iter().map(Tensor::shape).collect();
    let dims = spec.bind(&shapes)?;
    let space: u128 = dims.iter().map(|&d| d as u128).product();
    if space > NAIVE_LIMIT {
        return Err(Error::TooLarge(format!(
            "naive contraction over {space} assignments exceeds {NAIVE_LIMIT}"
        )));
    }
    let out_shape: Vec<usize> = spec.output.iter().map(|&l| dims[l]).collect();
    let out_strides = strides_of(&out_shape);
    let in_strides: Vec<Vec<usize>> = shapes.iter().map(|s| strides_of(s)).collect();
    let mut out = Tensor::zeros(&out_shape);
    let mut assign = vec![0usize; dims.len()];
    loop {
        let mut prod = 1.0;
        for (k, ids) in spec.inputs.iter().enumerate() {
            let off: usize = ids
                .iter()
                .zip(&in_strides[k])
                .map(|(&l, &s)| assign[l] * s)
                .sum();
            prod *= tensors[k].data()[off];
        }
        let o: usize = spec
            .output
            .iter()
            .zip(&out_strides)
            .map(|(&l, &s)| assign[l] * s)
            .sum();
        out.data_mut()[o] += prod;
        if !next_index(&mut assign, &dims) {
            break;
        }
    }
    Ok(out)
}

/// Extract diagonals of repeated labels, sum out labels not in `keep`, and
/// order the remaining legs as `keep`.
///
/// Every label in `keep` must occur in `labels`.
fn reduce_to(t: &Tensor, labels: &[usize], keep: &[usize]) -> Tensor {
    if labels == keep {
        return t.clone();
    }
    let mut uniq: Vec<usize> = Vec::new();
    for &l in labels {
        if !uniq.contains(&l) {
            uniq.push(l);
        }
    }
    let dim_of = |l: usize| t.shape()[labels.iter().position(|&x| x == l).unwrap()];
    let udims: Vec<usize> = uniq.iter().map(|&l| dim_of(l)).collect();
    let in_strides = strides_of(t.shape());
    // stride contributed by each unique label to the input offset
    let ustride: Vec<usize> = uniq
        .iter()
        .map(|&u| {
            labels
                .iter()
                .zip(&in_strides)
                .filter(|(&l, _)| l == u)
                .map(|(_, &s)| s)
                .sum()
        })
        .collect();
    let out_shape: Vec<usize> = keep.iter().map(|&l| dim_of(l)).collect();
    let ostrides = strides_of(&out_shape);
    let ostride: Vec<usize> = uniq
        .iter()
        .map(|&u| keep.iter().position(|&k| k == u).map_or(0, |p| ostrides[p]))
        .collect();

    let mut out = Tensor::zeros(&out_shape);
    let mut idx = vec![0usize; uniq.len()];
    loop {
        let mut ioff = 0;
        let mut ooff = 0;
        for k in 0..idx.len() {
            ioff += idx[k] * ustride[k];
            ooff += idx[k] * ostride[k];
        }
        out.data_mut()[ooff] += t.data()[ioff];
        if !next_index(&mut idx, &udims) {
            break;
        }
    }
    out
}

fn label_dims(
    t: &Tensor,
    labels: &[usize],
    dims: &mut std::collections::HashMap<usize, usize>,
) -> Result<()> {
    if t.order() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "tensor of order {} given {} labels",
            t.order(),
            labels.len()
        )));
    }
    for (&l, &d) in labels.iter().zip(t.shape()) {
        match dims.insert(l, d) {
            Some(prev) if prev != d => {
                return Err(Error::ShapeMismatch(format!(
                    "shared label bound to both {prev} and {d}"
                )))
            }
            _ => {}
        }
    }
    Ok(())
}

/// Pairwise contraction over interned label ids.
///
/// Lowered to (batched) matrix multiplication: A is arranged as
/// (batch, left, contracted), B as (batch, contracted, right).
pub(crate) fn contract_pair_ids(
    a: &Tensor,
    la: &[usize],
    b: &Tensor,
    lb: &[usize],
    out: &[usize],
) -> Result<Tensor> {
    let mut dims = std::collections::HashMap::new();
    label_dims(a, la, &mut dims)?;
    label_dims(b, lb, &mut dims)?;
    for (i, l) in out.iter().enumerate() {
        if !dims.contains_key(l) {
            return Err(Error::InvalidArgument(format!(
                "output label {l} not present in either operand"
            )));
        }
        if out[..i].contains(l) {
            return Err(Error::InvalidArgument(format!("output label {l} repeated")));
        }
    }
    let mut batch = Vec::new();
    let mut left = Vec::new();
    let mut contracted = Vec::new();
    let mut right = Vec::new();
    for &l in la {
        if batch.contains(&l) || left.contains(&l) || contracted.contains(&l) {
            continue;
        }
        let in_b = lb.contains(&l);
        let in_out = out.contains(&l);
        match (in_b, in_out) {
            (true, true) => batch.push(l),
            (true, false) => contracted.push(l),
            (false, true) => left.push(l),
            (false, false) => {}
        }
    }
    for &l in lb {
        if !la.contains(&l) && out.contains(&l) && !right.contains(&l) {
            right.push(l);
        }
    }
    let size = |ls: &[usize]| ls.iter().map(|l| dims[l]).product::<usize>();
    let (nb, nl, nc, nr) = (size(&batch), size(&left), size(&contracted), size(&right));

    let a_keep: Vec<usize> = batch
        .iter()
        .chain(&left)
        .chain(&contracted)
        .copied()
        .collect();
    let b_keep: Vec<usize> = batch
        .iter()
        .chain(&contracted)
        .chain(&right)
        .copied()
        .collect();
    let ar = reduce_to(a, la, &a_keep);
    let br = reduce_to(b, lb, &b_keep);

    let mut res = vec![0.0; nb * nl * nr];
    for bi in 0..nb {
        gemm(
            nl,
            nc,
            nr,
            &ar.data()[bi * nl * nc..(bi + 1) * nl * nc],
            &br.data()[bi * nc * nr..(bi + 1) * nc * nr],
            &mut res[bi * nl * nr..(bi + 1) * nl * nr],
        );
    }
    let res_labels: Vec<usize> = batch.iter().chain(&left).chain(&right).copied().collect();
    let res_shape: Vec<usize> = res_labels.iter().map(|l| dims[l]).collect();
    let res = Tensor::from_parts(res_shape, res);
    Ok(reduce_to(&res, &res_labels, out))
}

/// Contract two tensors with string labels, e.g. `["i","j"]`, `["j"]` → `["i"]`.
pub fn contract_pair<S: AsRef<str>>(
    a: &Tensor,
    labels_a: &[S],
    b: &Tensor,
    labels_b: &[S],
    out_labels: &[S],
) -> Result<Tensor> {
    let names = |ls: &[S]| {
        ls.iter()
            .map(|l| l.as_ref().to_string())
            .collect::<Vec<_>>()
    };
    let spec = EinsumSpec::from_labels(&[names(labels_a), names(labels_b)], &names(out_labels))?;
    spec.bind(&[a.shape(), b.shape()])?;
    contract_pair_ids(a, &spec.inputs[0], b, &spec.inputs[1], &spec.output)
}

/// Contract a network by following `path`.
pub fn execute(spec: &EinsumSpec, tensors: &[Tensor], path: &ContractionPath) -> Result<Tensor> {
    let shapes: Vec<&[usize]> = tensors.iter().map(Tensor::shape).collect();
    spec.bind(&shapes)?;
    let n = tensors.len();
    path.validate(n)?;

    let mut ops: Vec<Option<(Tensor, Vec<usize>)>> = tensors
        .iter()
        .zip(&spec.inputs)
        .map(|(t, l)| Some((t.clone(), l.clone())))
        .collect();
    let steps = path.steps();
    for (s, &(i, j)) in steps.iter().enumerate() {
        let (ta, la) = ops[i].take().expect("validated path");
        let (tb, lb) = ops[j].take().expect("validated path");
        let last = s + 1 == steps.len();
        let keep: Vec<usize> = if last {
            spec.output.clone()
        } else {
            let mut keep = Vec::new();
            for &l in la.iter().chain(&lb) {
                if keep.contains(&l) {
                    continue;
                }
                let needed = spec.output.contains(&l)
                    || ops.iter().flatten().any(|(_, other)| other.contains(&l));
                if needed {
                    keep.push(l);
                }
            }
            keep
        };
        let t = contract_pair_ids(&ta, &la, &tb, &lb, &keep)?;
        ops.push(Some((t, keep)));
    }
    let (t, labels) = ops
        .into_iter()
        .flatten()
        .next()
        .expect("a full path leaves one operand");
    Ok(reduce_to(&t, &labels, &spec.output))
}

/// Parse and contract in one call, choosing the path automatically.
pub fn einsum(expr: &str, tensors: &[Tensor]) -> Result<Tensor> {
    let spec = EinsumSpec::parse(expr)?;
    let shapes: Vec<&[usize]> = tensors.iter().map(Tensor::shape).collect();
    let (p, _) = path::auto_path(&spec, &shapes)?;
    execute(&spec, tensors, &p)
}

/// Environment of input `hole` in a scalar-valued network: the network with
/// that tensor removed, shaped like the removed tensor.
///
/// This is the gradient of the network value with respect to `tensors[hole]`.
pub fn environment(spec: &EinsumSpec, tensors: &[Tensor], hole: usize) -> Result<Tensor> {
    if !spec.output.is_empty() {
        return Err(Error::InvalidArgument(
            "environment needs a scalar-valued network".into(),
        ));
    }
    if hole >= tensors.len() {
        return Err(Error::InvalidArgument(format!(
            "hole {hole} out of range for {} inputs",
            tensors.len()
        )));
    }
    let shapes: Vec<&[usize]> = tensors.iter().map(Tensor::shape).collect();
    spec.bind(&shapes)?;

    let reduced = spec.without_input(hole);
    let rest: Vec<Tensor> = tensors
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != hole)
        .map(|(_, t)| t.clone())
        .collect();
    let core = if rest.is_empty() {
        Tensor::scalar(1.0)
    } else {
        let rshapes: Vec<&[usize]> = rest.iter().map(Tensor::shape).collect();
        let (p, _) = path::auto_path(&reduced, &rshapes)?;
        execute(&reduced, &rest, &p)?
    };

    // Broadcast over labels absent from the rest of the network and embed
    // repeated labels diagonally.
    let hole_labels = &spec.inputs[hole];
    let core_strides = strides_of(core.shape());
    Ok(Tensor::from_fn(tensors[hole].shape(), |idx| {
        let mut off = 0;
        for (p, &l) in reduced.output.iter().enumerate() {
            let first = hole_labels.iter().position(|&x| x == l).unwrap();
            off += idx[first] * core_strides[p];
        }
        let consistent = hole_labels.iter().enumerate().all(|(k, &l)| {
            let first = hole_labels.iter().position(|&x| x == l).unwrap();
            idx[k] == idx[first]
        });
        if consistent {
            core.data()[off]
        } else {
            0.0
        }
    }))
}
