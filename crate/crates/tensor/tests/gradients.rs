use hiertag_tensor::{grad_check, sigmoid, Graph, Result, Tensor, TensorError, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Weighted sum so every output element gets a distinct upstream gradient.
fn weighted_sum(g: &mut Graph<'_>, y: Var, seed: u64) -> Result<Var> {
    let shape = g.shape(y).to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    let w = g.constant(random_tensor(&mut rng, shape));
    let p = g.mul(y, w)?;
    Ok(g.sum(p))
}

/// Runs `grad_check` for an op with respect to each of its inputs in turn.
fn check_each_input<F>(name: &str, inputs: Vec<Tensor>, seed: u64, op: F)
where
    F: Fn(&mut Graph<'_>, &[Var]) -> Result<Var>,
{
    for which in 0..inputs.len() {
        let report = grad_check(
            |g, x| {
                let mut vars = Vec::new();
                for (i, t) in inputs.iter().enumerate() {
                    vars.push(if i == which { x } else { g.constant(t.clone()) });
                }
                let y = op(g, &vars)?;
                weighted_sum(g, y, seed)
            },
            &inputs[which],
            EPS,
            TOL,
        )
        .unwrap();
        assert!(
            report.passed(),
            "{name} input {which} seed {seed}: rel error {} at {} (analytic {}, numeric {})",
            report.max_rel_error,
            report.worst,
            report.analytic[report.worst],
            report.numeric[report.worst]
        );
    }
}

#[test]
fn every_op_matches_finite_differences() {
    for seed in 0..24u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.random_range(1..5);
        let k = rng.random_range(1..5);
        let n = rng.random_range(1..5);
        let mut t = |shape: Vec<usize>| random_tensor(&mut rng, shape);

        check_each_input("matmul", vec![t(vec![m, k]), t(vec![k, n])], seed, |g, v| {
            g.matmul(v[0], v[1])
        });
        check_each_input("add", vec![t(vec![m, n]), t(vec![m, n])], seed, |g, v| {
            g.add(v[0], v[1])
        });
        check_each_input("add_row", vec![t(vec![m, n]), t(vec![n])], seed, |g, v| {
            g.add_row(v[0], v[1])
        });
        check_each_input("mul", vec![t(vec![m, n]), t(vec![m, n])], seed, |g, v| {
            g.mul(v[0], v[1])
        });
        check_each_input("scale", vec![t(vec![m, n])], seed, |g, v| Ok(g.scale(v[0], -1.7)));
        check_each_input("concat_cols", vec![t(vec![m, k]), t(vec![m, n])], seed, |g, v| {
            g.concat_cols(&[v[0], v[1]])
        });
        check_each_input("concat_rows", vec![t(vec![m, n]), t(vec![k, n])], seed, |g, v| {
            g.concat_rows(&[v[0], v[1]])
        });
        check_each_input("slice_rows", vec![t(vec![m + 1, n])], seed, |g, v| {
            g.slice_rows(v[0], 1, m + 1)
        });
        check_each_input("slice_cols", vec![t(vec![m, n + 1])], seed, |g, v| {
            g.slice_cols(v[0], 0, n)
        });
        check_each_input("gather_rows", vec![t(vec![4, n])], seed, |g, v| {
            g.gather_rows(v[0], &[3, 0, 3, 1])
        });
        check_each_input("scatter_rows", vec![t(vec![2, n])], seed, |g, v| {
            g.scatter_rows(v[0], &[2, 0], 4)
        });
        check_each_input("sigmoid", vec![t(vec![m, n])], seed, |g, v| Ok(g.sigmoid(v[0])));
        check_each_input("tanh", vec![t(vec![m, n])], seed, |g, v| Ok(g.tanh(v[0])));
        check_each_input("gelu", vec![t(vec![m, n])], seed, |g, v| Ok(g.gelu(v[0])));
        check_each_input("softmax", vec![t(vec![m, n + 1])], seed, |g, v| g.softmax(v[0]));
        check_each_input(
            "layer_norm",
            vec![t(vec![m, n + 1]), t(vec![n + 1]), t(vec![n + 1])],
            seed,
            |g, v| g.layer_norm(v[0], v[1], v[2], 1e-5),
        );
        let heads = rng.random_range(1..3);
        let d = heads * rng.random_range(1..4);
        let rows = 5;
        check_each_input(
            "attention",
            vec![
                random_tensor(&mut rng, vec![rows, d]),
                random_tensor(&mut rng, vec![rows, d]),
                random_tensor(&mut rng, vec![rows, d]),
            ],
            seed,
            move |g, v| g.attention(v[0], v[1], v[2], &[(0, 3), (4, 1)], heads),
        );
        check_each_input("masked_mean", vec![random_tensor(&mut rng, vec![4])], seed, |g, v| {
            g.masked_mean(v[0], &[true, false, true, true])
        });
        let classes = rng.random_range(2..6);
        check_each_input(
            "cross_entropy",
            vec![random_tensor(&mut rng, vec![3, classes])],
            seed,
            move |g, v| g.cross_entropy(v[0], &[Some(classes - 1), None, Some(0)]),
        );
        check_each_input("bce", vec![random_tensor(&mut rng, vec![3])], seed, |g, v| {
            g.bce_with_logits(v[0], &[Some(1.0), None, Some(0.0)])
        });
        let h = rng.random_range(1..4);
        let len = rng.random_range(1..5);
        let reverse = rng.random_bool(0.5);
        check_each_input(
            "gru",
            vec![
                random_tensor(&mut rng, vec![len, 3 * h]),
                random_tensor(&mut rng, vec![h, 2 * h]),
                random_tensor(&mut rng, vec![h, h]),
            ],
            seed,
            move |g, v| g.gru(v[0], v[1], v[2], reverse),
        );
    }
}

#[test]
fn backward_examples() {
    let x = Tensor::scalar(3.0).with_grad();
    let mut g = Graph::new();
    let xv = g.leaf(&x);
    let sq = g.mul(xv, xv).unwrap();
    let root = g.sum(sq);
    assert_eq!(g.backward(root).unwrap().get(xv).unwrap(), &[6.0]);

    let x = Tensor::scalar(0.0).with_grad();
    let mut g = Graph::new();
    let xv = g.leaf(&x);
    let s = g.sigmoid(xv);
    let root = g.sum(s);
    assert_eq!(g.backward(root).unwrap().get(xv).unwrap(), &[0.25]);

    let v = Tensor::vector(vec![0.0, 0.0]).with_grad();
    let mut g = Graph::new();
    let vv = g.leaf(&v);
    let t = g.tanh(vv);
    let root = g.sum(t);
    assert_eq!(g.backward(root).unwrap().get(vv).unwrap(), &[1.0, 1.0]);
}

#[test]
fn non_scalar_root_is_rejected() {
    let v = Tensor::vector(vec![1.0, 2.0]).with_grad();
    let mut g = Graph::new();
    let x = g.leaf(&v);
    let y = g.tanh(x);
    assert!(matches!(g.backward(y), Err(TensorError::NonScalarRoot(_))));
}

#[test]
fn repeated_backward_accumulates_additively() {
    let mut p = Tensor::vector(vec![0.3, -0.8]).with_grad();
    for _ in 0..2 {
        let grads = {
            let mut g = Graph::new();
            let x = g.leaf(&p);
            let y = g.sigmoid(x);
            let root = g.sum(y);
            let grads = g.backward(root).unwrap();
            grads.get(x).unwrap().to_vec()
        };
        p.accumulate_grad(&grads).unwrap();
    }
    let once: Vec<f64> = [0.3f64, -0.8]
        .iter()
        .map(|&x| sigmoid(x) * (1.0 - sigmoid(x)))
        .collect();
    for (a, b) in p.grad().unwrap().iter().zip(&once) {
        assert_eq!(*a, 2.0 * b);
    }
}

#[test]
fn backward_of_sum_equals_sum_of_backwards() {
    let a = Tensor::vector(vec![0.4, -1.2, 2.0]).with_grad();
    let run = |which: u8| -> Vec<f64> {
        let mut g = Graph::new();
        let x = g.leaf(&a);
        let s = g.sigmoid(x);
        let f1 = g.sum(s);
        let sq = g.mul(x, x).unwrap();
        let f2 = g.sum(sq);
        let root = match which {
            0 => f1,
            1 => f2,
            _ => g.add(f1, f2).unwrap(),
        };
        g.backward(root).unwrap().get(x).unwrap().to_vec()
    };
    let (g1, g2, both) = (run(0), run(1), run(2));
    for i in 0..3 {
        assert!((g1[i] + g2[i] - both[i]).abs() < 1e-15);
    }
}

#[test]
fn untracked_branches_receive_no_gradient() {
    let used = Tensor::vector(vec![1.0]).with_grad();
    let unused = Tensor::vector(vec![2.0]).with_grad();
    let mut g = Graph::new();
    let a = g.leaf(&used);
    let b = g.leaf(&unused);
    let _side = g.tanh(b);
    let root = g.sum(a);
    let grads = g.backward(root).unwrap();
    assert!(grads.get(a).is_some());
    assert!(grads.get(b).is_none());
}

#[test]
fn inference_graph_tracks_nothing() {
    let p = Tensor::vector(vec![1.0]).with_grad();
    let mut g = Graph::inference();
    let x = g.leaf(&p);
    let y = g.sum(x);
    assert!(!g.is_tracked(y));
    assert!(g.backward(y).unwrap().get(x).is_none());
}

/// A sigmoid whose registered derivative is deliberately wrong must be
/// flagged by the checker.
#[test]
fn wrong_sigmoid_derivative_is_detected() {
    let report = grad_check(
        |g, x| {
            let value: Vec<f64> = g.value(x).iter().map(|&v| sigmoid(v)).collect();
            let shape = g.shape(x).to_vec();
            let y = g.custom(
                &[x],
                shape,
                value,
                Box::new(|_, out, grad| {
                    // Missing the (1 − σ) factor.
                    vec![out.iter().zip(grad).map(|(y, g)| y * g).collect()]
                }),
            )?;
            Ok(g.sum(y))
        },
        &Tensor::vector(vec![0.5, -1.0, 2.0]),
        EPS,
        TOL,
    )
    .unwrap();
    assert!(report.max_rel_error > 100.0 * TOL, "{}", report.max_rel_error);
    assert!(!report.passed());
}

/// GRU built from primitive ops, following the same equations.
fn composed_gru(g: &mut Graph<'_>, a: Var, ug: Var, uc: Var, reverse: bool) -> Result<Var> {
    let (len, h) = (g.shape(a)[0], g.shape(uc)[0]);
    let mut state = g.constant(Tensor::zeros(vec![1, h]));
    let mut outputs = vec![None; len];
    let steps: Vec<usize> = if reverse { (0..len).rev().collect() } else { (0..len).collect() };
    for t in steps {
        let at = g.slice_rows(a, t, t + 1)?;
        let a_gates = g.slice_cols(at, 0, 2 * h)?;
        let a_cand = g.slice_cols(at, 2 * h, 3 * h)?;
        let hu = g.matmul(state, ug)?;
        let pre = g.add(a_gates, hu)?;
        let gates = g.sigmoid(pre);
        let z = g.slice_cols(gates, 0, h)?;
        let r = g.slice_cols(gates, h, 2 * h)?;
        let rh = g.mul(r, state)?;
        let ru = g.matmul(rh, uc)?;
        let cand_pre = g.add(a_cand, ru)?;
        let cand = g.tanh(cand_pre);
        let keep = g.mul(z, state)?;
        let neg_z = g.scale(z, -1.0);
        let ones = g.constant(Tensor::matrix(1, h, vec![1.0; h])?);
        let one_minus_z = g.add(ones, neg_z)?;
        let fresh = g.mul(one_minus_z, cand)?;
        state = g.add(keep, fresh)?;
        outputs[t] = Some(state);
    }
    let rows: Vec<Var> = outputs.into_iter().map(Option::unwrap).collect();
    g.concat_rows(&rows)
}

#[test]
fn fused_gru_agrees_with_composed_gru() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let h = rng.random_range(1..5);
        let len = rng.random_range(1..7);
        let reverse = seed % 2 == 1;
        let a = random_tensor(&mut rng, vec![len, 3 * h]).with_grad();
        let ug = random_tensor(&mut rng, vec![h, 2 * h]).with_grad();
        let uc = random_tensor(&mut rng, vec![h, h]).with_grad();
        let w = random_tensor(&mut rng, vec![len, h]);

        let run = |fused: bool| -> (Vec<f64>, Vec<Vec<f64>>) {
            let mut g = Graph::new();
            let (av, gv, cv) = (g.leaf(&a), g.leaf(&ug), g.leaf(&uc));
            let out = if fused {
                g.gru(av, gv, cv, reverse).unwrap()
            } else {
                composed_gru(&mut g, av, gv, cv, reverse).unwrap()
            };
            let wv = g.constant(w.clone());
            let p = g.mul(out, wv).unwrap();
            let root = g.sum(p);
            let grads = g.backward(root).unwrap();
            let gs = [av, gv, cv]
                .iter()
                .map(|&v| grads.get(v).unwrap().to_vec())
                .collect();
            (g.value(out).to_vec(), gs)
        };
        let (fv, fg) = run(true);
        let (cv, cg) = run(false);
        for (x, y) in fv.iter().zip(&cv) {
            assert!((x - y).abs() < 1e-12, "seed {seed}: value {x} vs {y}");
        }
        for (gf, gc) in fg.iter().zip(&cg) {
            for (x, y) in gf.iter().zip(gc) {
                assert!((x - y).abs() < 1e-12, "seed {seed}: grad {x} vs {y}");
            }
        }
    }
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn softmax_rows_are_distributions(
            rows in 1usize..4,
            logits in proptest::collection::vec(-10.0f64..10.0, 1..24),
        ) {
            let width = logits.len();
            let data: Vec<f64> = (0..rows).flat_map(|r| logits.iter().map(move |v| v + r as f64)).collect();
            let mut g = Graph::new();
            let x = g.constant(Tensor::matrix(rows, width, data).unwrap());
            let y = g.softmax(x).unwrap();
            for row in g.value(y).chunks(width) {
                let total: f64 = row.iter().sum();
                prop_assert!((total - 1.0).abs() <= 1e-12);
                prop_assert!(row.iter().all(|&p| p > 0.0 && p < 1.0 || width == 1));
            }
        }

        #[test]
        fn ops_do_not_mutate_inputs(data in proptest::collection::vec(-5.0f64..5.0, 6)) {
            let a = Tensor::matrix(2, 3, data.clone()).unwrap().with_grad();
            let b = Tensor::matrix(3, 2, data.clone()).unwrap().with_grad();
            let mut g = Graph::new();
            let (av, bv) = (g.leaf(&a), g.leaf(&b));
            let m = g.matmul(av, bv).unwrap();
            let s = g.softmax(m).unwrap();
            let t = g.tanh(av);
            let gamma = g.constant(Tensor::vector(vec![1.0; 3]));
            let beta = g.constant(Tensor::vector(vec![0.0; 3]));
            let n = g.layer_norm(t, gamma, beta, 1e-5).unwrap();
            let total = g.sum(s);
            let other = g.sum(n);
            let root = g.add(total, other).unwrap();
            g.backward(root).unwrap();
            prop_assert_eq!(g.value(av), &data[..]);
            prop_assert_eq!(a.data(), &data[..]);
            prop_assert_eq!(b.data(), &data[..]);
        }
    }
}
