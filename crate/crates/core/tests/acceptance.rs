//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tnet::circuits::{
    collapse_linear, dense_forward, frozen_forward, induction_mass, induction_run,
    path_expansion_two_layer, pattern_pgm, two_layer_forward, FrozenAttention, ModelDims,
    SecondLayer,
};
use tnet::decomp::{
    cp_als, cp_reconstruct, qr, truncated_svd, tucker, tucker_reconstruct, CpOptions, TuckerForm,
};
use tnet::einsum::{environment, execute, naive_contract};
use tnet::path::{ladder_spec, optimal_path, path_cost, top_line_first_path};
use tnet::tensor::{delta, kron};
use tnet::tt::{canonicalize, tt_decompose, tt_to_dense, tt_truncate, TensorTrain};
use tnet::{einsum, EinsumSpec, Tensor};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    ensure(elapsed <= Duration::from_secs(limit_s), || {
        format!("took {:.2}s, limit {limit_s}s", elapsed.as_secs_f64())
    })
}

fn rel_err(got: &Tensor, want: &Tensor) -> f64 {
    let d = got.distance(want).unwrap();
    let n = want.frobenius_norm();
    if n == 0.0 {
        d
    } else {
        d / n
    }
}

/// Random network: up to `max_tensors` inputs of up to four legs over
/// dims 1..=4. With `scalar` the output is empty, otherwise a random subset
/// of the labels in use.
fn random_network(
    rng: &mut ChaCha8Rng,
    max_tensors: usize,
    scalar: bool,
) -> (EinsumSpec, Vec<Tensor>) {
    let pool: Vec<String> = (0..8).map(|i| format!("l{i}")).collect();
    let dims: Vec<usize> = (0..pool.len()).map(|_| rng.gen_range(1..=4)).collect();
    let n = rng.gen_range(1..=max_tensors);
    let mut inputs: Vec<Vec<String>> = Vec::with_capacity(n);
    let mut tensors = Vec::with_capacity(n);
    for _ in 0..n {
        let legs = rng.gen_range(1..=4);
        let mut ids: Vec<usize> = (0..pool.len()).collect();
        ids.shuffle(rng);
        ids.truncate(legs);
        let shape: Vec<usize> = ids.iter().map(|&i| dims[i]).collect();
        inputs.push(ids.iter().map(|&i| pool[i].clone()).collect());
        tensors.push(Tensor::random_signed(&shape, rng));
    }
    let mut used: Vec<String> = inputs.iter().flatten().cloned().collect();
    used.sort();
    used.dedup();
    let output: Vec<String> = if scalar {
        Vec::new()
    } else {
        used.shuffle(rng);
        let k = rng.gen_range(0..=used.len().min(3));
        used[..k].to_vec()
    };
    (EinsumSpec::from_labels(&inputs, &output).unwrap(), tensors)
}

fn shapes_of(ts: &[Tensor]) -> Vec<&[usize]> {
    ts.iter().map(Tensor::shape).collect()
}

fn random_isometry(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    qr(&Tensor::random_signed(&[rows, cols], rng)).unwrap().0
}

fn optimal_matches_naive() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let (spec, ts) = random_network(&mut rng, 5, false);
        let (p, _) =
            optimal_path(&spec, &shapes_of(&ts)).map_err(|e| format!("case {case}: {e}"))?;
        let got = execute(&spec, &ts, &p).map_err(|e| format!("case {case}: {e}"))?;
        let want = naive_contract(&spec, &ts).map_err(|e| format!("case {case}: {e}"))?;
        let e = rel_err(&got, &want);
        worst = worst.max(e);
        ensure(e <= 1e-10, || format!("case {case}: relative error {e:e}"))?;
    }
    within(start.elapsed(), 30)?;
    Ok(format!("200 networks, worst relative error {worst:.2e}"))
}

fn ladder_orders() -> Check {
    let spec = ladder_spec(5).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    let ts: Vec<Tensor> = (0..spec.num_inputs())
        .map(|k| Tensor::random_signed(&vec![2; spec.input_ids(k).len()], &mut rng))
        .collect();
    let shapes = shapes_of(&ts);
    let (opt, opt_cost) = optimal_path(&spec, &shapes).map_err(|e| e.to_string())?;
    let naive = top_line_first_path(5);
    let naive_cost = path_cost(&spec, &shapes, &naive).map_err(|e| e.to_string())?;
    ensure(opt_cost.max_intermediate_order <= 3, || {
        format!("optimal max order {}", opt_cost.max_intermediate_order)
    })?;
    ensure(naive_cost.max_intermediate_order == 5, || {
        format!(
            "top-line-first max order {}",
            naive_cost.max_intermediate_order
        )
    })?;
    let a = execute(&spec, &ts, &opt).unwrap().item().unwrap();
    let b = execute(&spec, &ts, &naive).unwrap().item().unwrap();
    ensure((a - b).abs() <= 1e-10 * a.abs().max(1.0), || {
        format!("values {a} vs {b}")
    })?;
    Ok(format!(
        "max order optimal={} top-line-first={}",
        opt_cost.max_intermediate_order, naive_cost.max_intermediate_order
    ))
}

fn eckart_young() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1003);
    let n = 20;
    for case in 0..50 {
        let m = Tensor::random_signed(&[n, n], &mut rng);
        let probe = rng.gen_range(1..n);
        for k in 1..=n {
            let (t, reported) = truncated_svd(&m, k).map_err(|e| e.to_string())?;
            let measured = m.distance(&t.reconstruct()).unwrap();
            ensure((reported - measured).abs() <= 1e-9, || {
                format!("case {case} k={k}: reported {reported} measured {measured}")
            })?;
            if k != probe {
                continue;
            }
            for trial in 0..100 {
                let q = random_isometry(n, k, &mut rng);
                let proj = q
                    .matmul(&q.transpose().unwrap().matmul(&m).unwrap())
                    .unwrap();
                let other = m.distance(&proj).unwrap();
                ensure(measured <= other + 1e-9, || {
                    format!("case {case} k={k} trial {trial}: svd {measured} > random {other}")
                })?;
            }
        }
    }
    Ok("50 matrices, every k checked, 100 random rank-k projections each".into())
}

fn cp_overcomplete() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let t = Tensor::random(&[2, 3, 4], &mut rng);
    let fit = cp_als(
        &t,
        CpOptions {
            rank: 9,
            max_iter: 1000,
            tol: 1e-12,
            seed: 0,
        },
    )
    .map_err(|e| e.to_string())?;
    let r = cp_reconstruct(&fit.form).unwrap();
    for (a, b) in r.data().iter().zip(t.data()) {
        ensure((a - b).abs() <= 1e-8 + 1e-3 * b.abs(), || {
            format!("entry {a} vs {b}")
        })?;
    }
    within(start.elapsed(), 10)?;
    Ok(format!(
        "relative error {:.2e} after {} sweeps",
        fit.relative_error(),
        fit.iterations()
    ))
}

fn tucker_constructive() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1005);
    let core = Tensor::random_signed(&[5, 5, 5], &mut rng);
    let factors: Vec<Tensor> = (0..3).map(|_| random_isometry(10, 5, &mut rng)).collect();
    let t = tucker_reconstruct(&TuckerForm { core, factors }).unwrap();
    let fit = tucker(&t, &[5, 5, 5], 2, 0).map_err(|e| e.to_string())?;
    let err = tucker_reconstruct(&fit.form)
        .unwrap()
        .max_abs_diff(&t)
        .unwrap();
    ensure(err <= 1e-8, || format!("max abs error {err:e}"))?;
    Ok(format!("max abs error {err:.2e}"))
}

fn tensor_train() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1006);
    let t = Tensor::random_signed(&[2; 6], &mut rng);
    let tt = tt_decompose(&t, usize::MAX, 0.0).map_err(|e| e.to_string())?;
    let err = tt_to_dense(&tt).unwrap().max_abs_diff(&t).unwrap();
    ensure(err <= 1e-10, || format!("round trip error {err:e}"))?;
    for c in 0..tt.len() {
        let cf = canonicalize(&tt, c).map_err(|e| e.to_string())?;
        let d = cf.isometry_defect().unwrap();
        ensure(d <= 1e-8, || format!("center {c}: isometry defect {d:e}"))?;
    }
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let tt = TensorTrain::random(&[2, 3, 2, 3, 2], 4, &mut rng).unwrap();
        let dense = tt_to_dense(&tt).unwrap();
        let max_bond = rng.gen_range(1..=3);
        let (cut, bound) = tt_truncate(&tt, max_bond, 0.0).map_err(|e| e.to_string())?;
        let actual = tt_to_dense(&cut).unwrap().distance(&dense).unwrap();
        ensure(actual <= bound * (1.0 + 1e-10) + 1e-12, || {
            format!("seed {seed}: error {actual} above bound {bound}")
        })?;
    }
    Ok(format!(
        "round trip {err:.2e}; 100 truncations within bound"
    ))
}

fn environment_gradients() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1007);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let (spec, ts) = random_network(&mut rng, 4, true);
        let value = |ts: &[Tensor]| naive_contract(&spec, ts).unwrap().item().unwrap();
        let hole = rng.gen_range(0..ts.len());
        let env = environment(&spec, &ts, hole).map_err(|e| format!("case {case}: {e}"))?;
        let fd = Tensor::from_fn(ts[hole].shape(), |idx| {
            let eval = |shift: f64| {
                let mut moved = ts.to_vec();
                let bumped = Tensor::from_fn(ts[hole].shape(), |j| {
                    ts[hole].get(j).unwrap() + if j == idx { shift } else { 0.0 }
                });
                moved[hole] = bumped;
                value(&moved)
            };
            (eval(h) - eval(-h)) / (2.0 * h)
        });
        let e = rel_err(&env, &fd);
        worst = worst.max(e);
        ensure(e <= 1e-5, || format!("case {case}: relative error {e:e}"))?;
    }
    Ok(format!("50 networks, worst relative error {worst:.2e}"))
}

fn linearity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1008);
    for case in 0..20 {
        let widths: Vec<usize> = (0..5).map(|_| rng.gen_range(2..=6)).collect();
        let layers: Vec<Tensor> = widths
            .windows(2)
            .map(|w| Tensor::random_signed(&[w[0], w[1]], &mut rng))
            .collect();
        let x = Tensor::random_signed(&[widths[0]], &mut rng);
        let seq = dense_forward(&x, &layers, &vec![false; layers.len()]).unwrap();
        let collapsed = x
            .reshape(&[1, widths[0]])
            .unwrap()
            .matmul(&collapse_linear(&layers).unwrap())
            .unwrap()
            .reshape(&[seq.len()])
            .unwrap();
        let e = collapsed.max_abs_diff(&seq).unwrap();
        ensure(e <= 1e-10, || {
            format!("case {case}: collapse differs by {e:e}")
        })?;
    }
    let dims = model_dims(3);
    for case in 0..20 {
        let f = FrozenAttention::random(&dims, &mut rng).unwrap();
        let x = Tensor::random_signed(&[dims.seq_len, dims.hidden], &mut rng);
        let y = Tensor::random_signed(&[dims.seq_len, dims.hidden], &mut rng);
        let a: f64 = rng.gen_range(-3.0..3.0);
        let fx = frozen_forward(&x, &f).unwrap();
        let fy = frozen_forward(&y, &f).unwrap();
        let add = frozen_forward(&x.add(&y).unwrap(), &f).unwrap();
        let e = add.max_abs_diff(&fx.add(&fy).unwrap()).unwrap();
        ensure(e <= 1e-10, || {
            format!("case {case}: additivity off by {e:e}")
        })?;
        let hom = frozen_forward(&x.scale(a), &f).unwrap();
        let e = hom.max_abs_diff(&fx.scale(a)).unwrap();
        ensure(e <= 1e-10, || {
            format!("case {case}: homogeneity off by {e:e}")
        })?;
    }
    Ok("20 dense stacks, 20 frozen layers".to_string())
}

fn model_dims(num_heads: usize) -> ModelDims {
    ModelDims {
        seq_len: 5,
        vocab: 7,
        hidden: 6,
        num_heads,
        head_size: 3,
        mlp_dim: 8,
    }
}

fn path_expansion() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1009);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let d1 = model_dims(rng.gen_range(1..=3));
        let d2 = model_dims(rng.gen_range(1..=3));
        let l1 = FrozenAttention::random(&d1, &mut rng).unwrap();
        let l2 = SecondLayer::Frozen(FrozenAttention::random(&d2, &mut rng).unwrap());
        let x = Tensor::random_signed(&[d1.seq_len, d1.hidden], &mut rng);
        let w_u = Tensor::random_signed(&[d1.hidden, d1.vocab], &mut rng);
        let terms = path_expansion_two_layer(&x, &l1, &l2, &w_u).map_err(|e| e.to_string())?;
        let total = terms
            .iter()
            .skip(1)
            .fold(terms[0].value.clone(), |acc, t| acc.add(&t.value).unwrap());
        let fwd = two_layer_forward(&x, &l1, &l2, &w_u).unwrap();
        let e = total.max_abs_diff(&fwd).unwrap();
        worst = worst.max(e);
        ensure(e <= 1e-10, || format!("case {case}: terms differ by {e:e}"))?;
    }
    Ok(format!("50 models, worst abs error {worst:.2e}"))
}

fn induction() -> Check {
    let start = Instant::now();
    let run = induction_run(6, 3, 768, 0).map_err(|e| e.to_string())?;
    for q in 6..=16 {
        let m = induction_mass(&run.pattern, q, 6);
        ensure(m >= 0.99, || format!("query {q}: mass {m}"))?;
    }
    let golden = std::fs::read(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/induction_default.pgm"),
    )
    .map_err(|e| e.to_string())?;
    ensure(pattern_pgm(&run.pattern) == golden, || {
        "pgm differs from golden".into()
    })?;
    within(start.elapsed(), 5)?;
    Ok("mass >= 0.99 for queries 6..=16, pgm matches golden".into())
}

fn identities() -> Check {
    let k = kron(&Tensor::identity(5), &Tensor::identity(3)).unwrap();
    ensure(k == Tensor::identity(15), || "kron(I5, I3) != I15".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(1011);
    for case in 0..20 {
        let a = Tensor::random_signed(&[3, 4], &mut rng);
        let b = Tensor::random_signed(&[4, 5], &mut rng);
        let c = Tensor::random_signed(&[5, 3], &mut rng);
        let abc = a.matmul(&b).unwrap().matmul(&c).unwrap().trace().unwrap();
        let bca = b.matmul(&c).unwrap().matmul(&a).unwrap().trace().unwrap();
        let cab = c.matmul(&a).unwrap().matmul(&b).unwrap().trace().unwrap();
        ensure(
            (abc - bca).abs() <= 1e-12 && (abc - cab).abs() <= 1e-12,
            || format!("case {case}: traces {abc} {bca} {cab}"),
        )?;

        let m = Tensor::random_signed(&[3, 4], &mut rng);
        let right = einsum("i j, j k -> i k", &[m.clone(), delta(2, 4).unwrap()]).unwrap();
        let left = einsum("i j, j k -> i k", &[delta(2, 3).unwrap(), m.clone()]).unwrap();
        ensure(right == m && left == m, || {
            format!("case {case}: delta not neutral")
        })?;
    }
    Ok("kron exact, 20 trace and delta cases".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        (
            "optimal path matches naive contraction",
            optimal_matches_naive,
        ),
        ("ladder intermediate orders", ladder_orders),
        (
            "truncated SVD is the best rank-k approximation",
            eckart_young,
        ),
        ("CP rank 9 on a 2x3x4 tensor", cp_overcomplete),
        ("Tucker recovers a constructed tensor", tucker_constructive),
        (
            "tensor train round trip, gauges and truncation bound",
            tensor_train,
        ),
        (
            "environments match finite differences",
            environment_gradients,
        ),
        ("linear collapse and frozen attention linearity", linearity),
        ("path expansion sums to the forward pass", path_expansion),
        ("toy induction head", induction),
        ("kron, trace and delta identities", identities),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.2}s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.2}s): {why}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
