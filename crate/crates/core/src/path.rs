//! Contraction-order planning.
//!
//! A [`ContractionPath`] is a list of pairwise steps over a growing working
//! list: inputs take ids `0..n`, and step `s` appends its intermediate as id
//! `n + s`. Costs are computed from shapes alone.

use std::fmt;

use crate::einsum::EinsumSpec;
use crate::error::{Error, Result};

/// Largest input count accepted by [`optimal_path`].
pub const MAX_OPTIMAL_INPUTS: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ContractionPath {
    steps: Vec<(usize, usize)>,
}

impl ContractionPath {
    pub fn new(steps: Vec<(usize, usize)>) -> Self {
        Self { steps }
    }

    pub fn steps(&self) -> &[(usize, usize)] {
        &self.steps
    }

    /// Check that the path fully reduces `n` inputs.
    pub fn validate(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::InvalidPath("no inputs".into()));
        }
        if self.steps.len() != n - 1 {
            return Err(Error::InvalidPath(format!(
                "{} steps for {n} inputs (need {})",
                self.steps.len(),
                n - 1
            )));
        }
        let mut used = vec![false; 2 * n - 1];
        for (s, &(a, b)) in self.steps.iter().enumerate() {
            let avail = n + s;
            for id in [a, b] {
                if id >= avail {
                    return Err(Error::InvalidPath(format!(
                        "step {s} references id {id} which does not exist yet"
                    )));
                }
                if used[id] {
                    return Err(Error::InvalidPath(format!(
                        "step {s} reuses consumed id {id}"
                    )));
                }
                used[id] = true;
            }
            if a == b {
                return Err(Error::InvalidPath(format!(
                    "step {s} contracts {a} with itself"
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for ContractionPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .steps
            .iter()
            .map(|(a, b)| format!("({a},{b})"))
            .collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostReport {
    /// Total scalar multiply-adds over all pairwise steps.
    pub flops: u128,
    pub max_intermediate_size: u128,
    pub max_intermediate_order: usize,
}

impl CostReport {
    /// Flat `key=value` lines.
    pub fn to_kv(&self) -> String {
        format!(
            "flops={}\nmax_intermediate_size={}\nmax_intermediate_order={}\n",
            self.flops, self.max_intermediate_size, self.max_intermediate_order
        )
    }
}

type Mask = u128;

/// Shape-only view of a network: one label bitmask per input.
struct Network {
    dims: Vec<u128>,
    inputs: Vec<Mask>,
    output: Mask,
}

impl Network {
    fn new(spec: &EinsumSpec, shapes: &[&[usize]]) -> Result<Self> {
        let dims = spec.bind(shapes)?;
        if dims.len() > Mask::BITS as usize {
            return Err(Error::TooLarge(format!(
                "{} distinct labels (planner supports {})",
                dims.len(),
                Mask::BITS
            )));
        }
        let mask = |ids: &[usize]| ids.iter().fold(0 as Mask, |m, &l| m | (1 << l));
        let output = mask(spec.output_ids());
        let all: Vec<Mask> = (0..spec.num_inputs())
            .map(|k| mask(spec.input_ids(k)))
            .collect();
        // Labels private to a single input are summed before any pairwise step.
        let inputs = (0..all.len())
            .map(|k| {
                let others = all
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != k)
                    .fold(output, |m, (_, &x)| m | x);
                all[k] & others
            })
            .collect();
        Ok(Self {
            dims: dims.into_iter().map(|d| d as u128).collect(),
            inputs,
            output,
        })
    }

    fn size(&self, m: Mask) -> u128 {
        let mut m = m;
        let mut p: u128 = 1;
        while m != 0 {
            let b = m.trailing_zeros() as usize;
            p = p.saturating_mul(self.dims[b]);
            m &= m - 1;
        }
        p
    }
}

/// Compute the cost of contracting a network along `path`.
pub fn path_cost(
    spec: &EinsumSpec,
    shapes: &[&[usize]],
    path: &ContractionPath,
) -> Result<CostReport> {
    let net = Network::new(spec, shapes)?;
    let n = net.inputs.len();
    path.validate(n)?;
    Ok(simulate(&net, path))
}

fn simulate(net: &Network, path: &ContractionPath) -> CostReport {
    let mut ops: Vec<Option<Mask>> = net.inputs.iter().map(|&m| Some(m)).collect();
    let mut report = CostReport {
        flops: 0,
        max_intermediate_size: net.size(net.output),
        max_intermediate_order: net.output.count_ones() as usize,
    };
    for &(a, b) in path.steps() {
        let ma = ops[a].take().unwrap();
        let mb = ops[b].take().unwrap();
        let union = ma | mb;
        let rest = ops.iter().flatten().fold(net.output, |m, &x| m | x);
        let res = union & rest;
        report.flops = report.flops.saturating_add(net.size(union));
        report.max_intermediate_size = report.max_intermediate_size.max(net.size(res));
        report.max_intermediate_order =
            report.max_intermediate_order.max(res.count_ones() as usize);
        ops.push(Some(res));
    }
    report
}

/// Flop-minimal path by dynamic programming over subsets of inputs.
///
/// Ties are broken by the smaller largest intermediate, then by enumeration
/// order (lower submask first), so results are deterministic.
pub fn optimal_path(
    spec: &EinsumSpec,
    shapes: &[&[usize]],
) -> Result<(ContractionPath, CostReport)> {
    let net = Network::new(spec, shapes)?;
    let n = net.inputs.len();
    if n > MAX_OPTIMAL_INPUTS {
        return Err(Error::TooLarge(format!(
            "{n} inputs exceeds the exhaustive limit of {MAX_OPTIMAL_INPUTS}"
        )));
    }
    if n == 1 {
        let p = ContractionPath::default();
        let r = simulate(&net, &p);
        return Ok((p, r));
    }
    let full: usize = (1 << n) - 1;
    let mut labels = vec![0 as Mask; 1 << n];
    for s in 1..=full {
        let low = s.trailing_zeros() as usize;
        labels[s] = labels[s & (s - 1)] | net.inputs[low];
    }
    let open: Vec<Mask> = (0..=full)
        .map(|s| labels[s] & (labels[full ^ s] | net.output))
        .collect();

    #[derive(Clone, Copy)]
    struct Best {
        flops: u128,
        peak: u128,
        split: usize,
    }
    let mut best: Vec<Option<Best>> = vec![None; 1 << n];
    for i in 0..n {
        best[1 << i] = Some(Best {
            flops: 0,
            peak: 0,
            split: 0,
        });
    }
    // Process subsets by increasing popcount so sub-results exist.
    let mut order: Vec<usize> = (1..=full).filter(|s| s.count_ones() >= 2).collect();
    order.sort_by_key(|s| (s.count_ones(), *s));
    for s in order {
        let low = s & s.wrapping_neg();
        let res_size = net.size(open[s]);
        let mut cur: Option<Best> = None;
        // s1 ranges over proper submasks containing the lowest bit.
        let rest = s ^ low;
        let mut sub = rest;
        loop {
            let s1 = sub | low;
            if s1 != s {
                let s2 = s ^ s1;
                if let (Some(b1), Some(b2)) = (best[s1], best[s2]) {
                    let flops = b1
                        .flops
                        .saturating_add(b2.flops)
                        .saturating_add(net.size(open[s1] | open[s2]));
                    let peak = b1.peak.max(b2.peak).max(res_size);
                    let better = match cur {
                        None => true,
                        Some(c) => (flops, peak) < (c.flops, c.peak),
                    };
                    if better {
                        cur = Some(Best {
                            flops,
                            peak,
                            split: s1,
                        });
                    }
                }
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
        best[s] = cur;
    }

    fn build(s: usize, n: usize, best: &[Option<Best>], steps: &mut Vec<(usize, usize)>) -> usize {
        if s.count_ones() == 1 {
            return s.trailing_zeros() as usize;
        }
        let s1 = best[s].unwrap().split;
        let a = build(s1, n, best, steps);
        let b = build(s ^ s1, n, best, steps);
        steps.push((a, b));
        n + steps.len() - 1
    }
    let mut steps = Vec::with_capacity(n - 1);
    build(full, n, &best, &mut steps);
    let path = ContractionPath::new(steps);
    let report = simulate(&net, &path);
    Ok((path, report))
}

/// Greedy path: repeatedly contract the pair minimizing
/// `size(result) - size(a) - size(b)`, lowest id pair on ties.
pub fn greedy_path(
    spec: &EinsumSpec,
    shapes: &[&[usize]],
) -> Result<(ContractionPath, CostReport)> {
    let net = Network::new(spec, shapes)?;
    let n = net.inputs.len();
    let mut ops: Vec<Option<Mask>> = net.inputs.iter().map(|&m| Some(m)).collect();
    let mut steps = Vec::with_capacity(n.saturating_sub(1));
    for _ in 1..n {
        let alive: Vec<usize> = (0..ops.len()).filter(|&i| ops[i].is_some()).collect();
        let mut pick: Option<(i128, usize, usize, Mask)> = None;
        for (x, &i) in alive.iter().enumerate() {
            for &j in &alive[x + 1..] {
                let (mi, mj) = (ops[i].unwrap(), ops[j].unwrap());
                let rest = alive
                    .iter()
                    .filter(|&&k| k != i && k != j)
                    .fold(net.output, |m, &k| m | ops[k].unwrap());
                let res = (mi | mj) & rest;
                let score = net.size(res) as i128 - net.size(mi) as i128 - net.size(mj) as i128;
                if pick.is_none_or(|(s, ..)| score < s) {
                    pick = Some((score, i, j, res));
                }
            }
        }
        let (_, i, j, res) = pick.expect("at least two operands");
        ops[i] = None;
        ops[j] = None;
        ops.push(Some(res));
        steps.push((i, j));
    }
    let path = ContractionPath::new(steps);
    let report = simulate(&net, &path);
    Ok((path, report))
}

/// Optimal path for small networks, greedy beyond the exhaustive limit.
pub fn auto_path(spec: &EinsumSpec, shapes: &[&[usize]]) -> Result<(ContractionPath, CostReport)> {
    if spec.num_inputs() <= MAX_OPTIMAL_INPUTS {
        optimal_path(spec, shapes)
    } else {
        greedy_path(spec, shapes)
    }
}

/// Every distinct pairwise path over `n` inputs (unordered pairs, `a < b`).
///
/// Grows as `n!(n-1)!/2^(n-1)`; intended for exhaustive checks with `n <= 7`.
pub fn all_paths(n: usize) -> Vec<ContractionPath> {
    fn rec(
        alive: Vec<usize>,
        next: usize,
        steps: &mut Vec<(usize, usize)>,
        out: &mut Vec<ContractionPath>,
    ) {
        if alive.len() <= 1 {
            out.push(ContractionPath::new(steps.clone()));
            return;
        }
        for x in 0..alive.len() {
            for y in x + 1..alive.len() {
                let mut rest: Vec<usize> = alive
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != x && *k != y)
                    .map(|(_, &v)| v)
                    .collect();
                rest.push(next);
                steps.push((alive[x], alive[y]));
                rec(rest, next + 1, steps, out);
                steps.pop();
            }
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        rec((0..n).collect(), n, &mut Vec::new(), &mut out);
    }
    out
}

/// Two-leg ladder network with `rungs` rungs, contracting to a scalar.
///
/// Inputs alternate top/bottom along the ladder: top tensor `t` is input
/// `2t`, bottom tensor `t` is input `2t + 1`. With five rungs this is
/// `i j, i r, j k l, r k s, l m n, s m t, n o p, t o u, p q, u q ->` up to
/// label names.
pub fn ladder_spec(rungs: usize) -> Result<EinsumSpec> {
    if rungs < 2 {
        return Err(Error::InvalidArgument(
            "a ladder needs at least two rungs".into(),
        ));
    }
    let mut inputs: Vec<Vec<String>> = Vec::with_capacity(2 * rungs);
    for t in 0..rungs {
        let mut top = Vec::new();
        let mut bottom = Vec::new();
        if t > 0 {
            top.push(format!("h{}", t - 1));
            bottom.push(format!("g{}", t - 1));
        }
        top.push(format!("v{t}"));
        bottom.push(format!("v{t}"));
        if t + 1 < rungs {
            top.push(format!("h{t}"));
            bottom.push(format!("g{t}"));
        }
        inputs.push(top);
        inputs.push(bottom);
    }
    EinsumSpec::from_labels::<String>(&inputs, &[])
}

/// Path contracting the whole top line first, then absorbing the bottom
/// tensors left to right. Its largest intermediate has `rungs` legs.
pub fn top_line_first_path(rungs: usize) -> ContractionPath {
    let n = 2 * rungs;
    let mut steps = Vec::with_capacity(n - 1);
    let mut acc = 0;
    for t in 1..rungs {
        steps.push((acc, 2 * t));
        acc = n + steps.len() - 1;
    }
    for t in 0..rungs {
        steps.push((acc, 2 * t + 1));
        acc = n + steps.len() - 1;
    }
    ContractionPath::new(steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> (EinsumSpec, Vec<Vec<usize>>) {
        (
            EinsumSpec::parse("i j, j k, k l -> i l").unwrap(),
            vec![vec![2, 3], vec![3, 4], vec![4, 5]],
        )
    }

    fn refs(v: &[Vec<usize>]) -> Vec<&[usize]> {
        v.iter().map(|s| s.as_slice()).collect()
    }

    /// Multiply-adds of a pairwise step counted by explicit loops.
    fn counted_flops(spec: &EinsumSpec, shapes: &[Vec<usize>], path: &ContractionPath) -> u128 {
        let dims = spec.bind(&refs(shapes)).unwrap();
        let mut ops: Vec<Option<Vec<usize>>> = (0..spec.num_inputs())
            .map(|k| Some(spec.input_ids(k).to_vec()))
            .collect();
        let mut total = 0u128;
        for &(a, b) in path.steps() {
            let la = ops[a].take().unwrap();
            let lb = ops[b].take().unwrap();
            let mut union: Vec<usize> = la.clone();
            for l in lb {
                if !union.contains(&l) {
                    union.push(l);
                }
            }
            let mut count = 0u128;
            let udims: Vec<usize> = union.iter().map(|&l| dims[l]).collect();
            let mut idx = vec![0; udims.len()];
            loop {
                count += 1;
                if !crate::tensor::next_index(&mut idx, &udims) {
                    break;
                }
            }
            total += count;
            let rest: Vec<usize> = ops.iter().flatten().flatten().copied().collect();
            let res: Vec<usize> = union
                .into_iter()
                .filter(|l| rest.contains(l) || spec.output_ids().contains(l))
                .collect();
            ops.push(Some(res));
        }
        total
    }

    #[test]
    fn chain_costs() {
        let (spec, shapes) = chain();
        let p1 = ContractionPath::new(vec![(0, 1), (3, 2)]);
        let p2 = ContractionPath::new(vec![(1, 2), (0, 3)]);
        assert_eq!(counted_flops(&spec, &shapes, &p1), 64);
        assert_eq!(counted_flops(&spec, &shapes, &p2), 90);
        assert_eq!(path_cost(&spec, &refs(&shapes), &p1).unwrap().flops, 64);
        assert_eq!(path_cost(&spec, &refs(&shapes), &p2).unwrap().flops, 90);

        let single = EinsumSpec::parse("i j -> j").unwrap();
        let r = path_cost(&single, &[&[2, 3]], &ContractionPath::default()).unwrap();
        assert_eq!(r.flops, 0);
    }

    #[test]
    fn optimal_and_greedy_on_chain() {
        let (spec, shapes) = chain();
        let (p, r) = optimal_path(&spec, &refs(&shapes)).unwrap();
        assert_eq!(p.steps(), &[(0, 1), (3, 2)]);
        assert_eq!(r.flops, 64);
        // (1,2) scores 15-12-20 = -17 against -10 for (0,1), so greedy
        // takes the costlier order on this chain.
        let (gp, g) = greedy_path(&spec, &refs(&shapes)).unwrap();
        assert_eq!(gp.steps(), &[(1, 2), (0, 3)]);
        assert_eq!(g.flops, 90);
        assert!(r.flops <= g.flops);
        let best = all_paths(3)
            .iter()
            .map(|p| path_cost(&spec, &refs(&shapes), p).unwrap().flops)
            .min()
            .unwrap();
        assert_eq!(best, 64);
    }

    #[test]
    fn two_inputs_single_path() {
        let spec = EinsumSpec::parse("i j, j k -> i k").unwrap();
        let shapes = [vec![2, 3], vec![3, 4]];
        let (p, _) = optimal_path(&spec, &refs(&shapes)).unwrap();
        let (g, _) = greedy_path(&spec, &refs(&shapes)).unwrap();
        assert_eq!(p, ContractionPath::new(vec![(0, 1)]));
        assert_eq!(p, g);
    }

    #[test]
    fn validation() {
        assert!(ContractionPath::new(vec![(0, 1)]).validate(2).is_ok());
        assert!(ContractionPath::new(vec![(0, 0)]).validate(2).is_err());
        assert!(ContractionPath::new(vec![(0, 2)]).validate(2).is_err());
        assert!(ContractionPath::new(vec![(0, 1), (0, 2)])
            .validate(3)
            .is_err());
        assert!(ContractionPath::new(vec![]).validate(2).is_err());
        assert!(ContractionPath::new(vec![]).validate(1).is_ok());
    }

    #[test]
    fn too_many_inputs() {
        let inputs: Vec<Vec<String>> = (0..17).map(|k| vec![format!("a{k}")]).collect();
        let spec = EinsumSpec::from_labels::<String>(&inputs, &[]).unwrap();
        let shapes: Vec<Vec<usize>> = vec![vec![2]; 17];
        assert!(matches!(
            optimal_path(&spec, &refs(&shapes)),
            Err(Error::TooLarge(_))
        ));
        assert!(greedy_path(&spec, &refs(&shapes)).is_ok());
    }

    #[test]
    fn all_paths_counts() {
        assert_eq!(all_paths(1).len(), 1);
        assert_eq!(all_paths(2).len(), 1);
        assert_eq!(all_paths(3).len(), 3);
        assert_eq!(all_paths(4).len(), 18);
        for p in all_paths(4) {
            p.validate(4).unwrap();
        }
    }

    #[test]
    fn ladder_matches_written_form() {
        let written =
            EinsumSpec::parse("i j, i r, j k l, r k s, l m n, s m t, n o p, t o u, p q, u q ->")
                .unwrap();
        let ours = ladder_spec(5).unwrap();
        let shapes: Vec<Vec<usize>> = (0..10)
            .map(|k| vec![2; written.input_ids(k).len()])
            .collect();
        for p in [
            top_line_first_path(5),
            optimal_path(&written, &refs(&shapes)).unwrap().0,
        ] {
            assert_eq!(
                path_cost(&written, &refs(&shapes), &p).unwrap(),
                path_cost(&ours, &refs(&shapes), &p).unwrap()
            );
        }
    }

    #[test]
    fn ladder_orders() {
        for k in 3..=6 {
            let spec = ladder_spec(k).unwrap();
            let shapes: Vec<Vec<usize>> = (0..2 * k)
                .map(|i| vec![2; spec.input_ids(i).len()])
                .collect();
            let (_, opt) = optimal_path(&spec, &refs(&shapes)).unwrap();
            let top = path_cost(&spec, &refs(&shapes), &top_line_first_path(k)).unwrap();
            assert!(opt.max_intermediate_order <= 3, "k={k}: {opt:?}");
            assert_eq!(top.max_intermediate_order, k);
            let (_, g) = greedy_path(&spec, &refs(&shapes)).unwrap();
            assert!(g.max_intermediate_order <= 3, "greedy k={k}: {g:?}");
            assert!(opt.flops <= g.flops);
        }
    }
}
