//! Reverse-mode gradients against central finite differences.

use std::collections::BTreeMap;
use std::sync::Arc;

use onh_autodiff::{evaluate_with_gradients, softmax_cross_entropy, DenseArray, Graph, NeighborFn, NodeId, Op};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-6;

fn random_array(rng: &mut ChaCha8Rng, shape: &[usize]) -> DenseArray {
    let n = shape.iter().product();
    DenseArray::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
}

/// Norm-wise relative error between analytic and central-difference
/// gradients for every named input in `wrt`.
fn fd_check(graph: &Graph, output: NodeId, inputs: &BTreeMap<String, DenseArray>, wrt: &[&str]) -> f64 {
    let (_, grads) = evaluate_with_gradients(graph, output, inputs).unwrap();
    let mut worst: f64 = 0.0;
    for name in wrt {
        let analytic = &grads[*name];
        let mut numeric = vec![0.0; analytic.len()];
        for i in 0..analytic.len() {
            let mut plus = inputs.clone();
            plus.get_mut(*name).unwrap().data_mut()[i] += H;
            let mut minus = inputs.clone();
            minus.get_mut(*name).unwrap().data_mut()[i] -= H;
            let fp = graph.forward(&plus).unwrap().value(output).data()[0];
            let fm = graph.forward(&minus).unwrap().value(output).data()[0];
            numeric[i] = (fp - fm) / (2.0 * H);
        }
        let diff: f64 = analytic.data().iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let na: f64 = analytic.data().iter().map(|a| a * a).sum::<f64>().sqrt();
        let nb: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        let denom = na.max(nb);
        let rel = if denom == 0.0 { 0.0 } else { diff / denom };
        worst = worst.max(rel);
    }
    worst
}

/// Wraps `node` into a scalar with a fixed random projection so every output
/// entry contributes a distinct weight.
fn project(g: &mut Graph, node: NodeId, shape: &[usize], rng: &mut ChaCha8Rng) -> NodeId {
    let r = random_array(rng, shape);
    let c = g.add(Op::Const(r));
    let m = g.add(Op::Mul(node, c));
    g.add(Op::Sum(m))
}

fn brute_knn() -> NeighborFn {
    Arc::new(|m: &DenseArray, k: usize| {
        let (n, d) = (m.shape()[0], m.shape()[1]);
        let mut out = Vec::with_capacity(n * k);
        for i in 0..n {
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let s: f64 = (0..d).map(|c| (m.get2(i, c) - m.get2(j, c)).powi(2)).sum();
                    (s, j)
                })
                .collect();
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            out.extend(cand[..k].iter().map(|c| c.1));
        }
        Ok(out)
    })
}

type Case = (&'static str, fn(&mut ChaCha8Rng) -> (Graph, NodeId, BTreeMap<String, DenseArray>, Vec<&'static str>));

fn bind(pairs: Vec<(&str, DenseArray)>) -> BTreeMap<String, DenseArray> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn cases() -> Vec<Case> {
    vec![
        ("matmul", |rng| {
            let mut g = Graph::new();
            let a = g.input("a");
            let b = g.input("b");
            let c = g.add(Op::MatMul(a, b));
            let out = project(&mut g, c, &[3, 2], rng);
            let inputs = bind(vec![("a", random_array(rng, &[3, 4])), ("b", random_array(rng, &[4, 2]))]);
            (g, out, inputs, vec!["a", "b"])
        }),
        ("add_row_bias", |rng| {
            let mut g = Graph::new();
            let x = g.input("x");
            let b = g.input("b");
            let y = g.add(Op::AddRowBias(x, b));
            let out = project(&mut g, y, &[3, 4], rng);
            let inputs = bind(vec![("x", random_array(rng, &[3, 4])), ("b", random_array(rng, &[4]))]);
            (g, out, inputs, vec!["x", "b"])
        }),
        ("add_sub_mul_scale", |rng| {
            let mut g = Graph::new();
            let a = g.input("a");
            let b = g.input("b");
            let s = g.add(Op::Add(a, b));
            let d = g.add(Op::Sub(s, b));
            let m = g.add(Op::Mul(d, b));
            let sc = g.add(Op::Scale(m, -1.7));
            let out = project(&mut g, sc, &[2, 3], rng);
            let inputs = bind(vec![("a", random_array(rng, &[2, 3])), ("b", random_array(rng, &[2, 3]))]);
            (g, out, inputs, vec!["a", "b"])
        }),
        ("leaky_relu", |rng| {
            let mut g = Graph::new();
            let x = g.input("x");
            let y = g.add(Op::LeakyRelu(x, 0.2));
            let out = project(&mut g, y, &[4, 5], rng);
            (g, out, bind(vec![("x", random_array(rng, &[4, 5]))]), vec!["x"])
        }),
        ("concat_and_slices", |rng| {
            let mut g = Graph::new();
            let a = g.input("a");
            let b = g.input("b");
            let c = g.add(Op::ConcatCols(vec![a, b, a]));
            let r = g.add(Op::SliceRows { input: c, start: 1, end: 3 });
            let s = g.add(Op::SliceCols { input: r, start: 1, end: 6 });
            let out = project(&mut g, s, &[2, 5], rng);
            let inputs = bind(vec![("a", random_array(rng, &[3, 2])), ("b", random_array(rng, &[3, 3]))]);
            (g, out, inputs, vec!["a", "b"])
        }),
        ("reshape_into_pixel_softmax", |rng| {
            let mut g = Graph::new();
            let x = g.input("x");
            let w = g.input("w");
            let h = g.add(Op::MatMul(x, w));
            let r = g.add(Op::Reshape { input: h, shape: vec![6, 3] });
            let t = g.add(Op::Const(DenseArray::vector(vec![0.0, 2.0, 1.0, 1.0, 0.0, 2.0]).unwrap()));
            let out = g.add(Op::SoftmaxCrossEntropy { logits: r, targets: t });
            let inputs = bind(vec![("x", random_array(rng, &[2, 4])), ("w", random_array(rng, &[4, 9]))]);
            (g, out, inputs, vec!["x", "w"])
        }),
        ("matmul_with_constant_operand", |rng| {
            let mut g = Graph::new();
            let c = g.add(Op::Const(random_array(rng, &[3, 4])));
            let w = g.input("w");
            let m = g.add(Op::MatMul(c, w));
            let out = project(&mut g, m, &[3, 2], rng);
            (g, out, bind(vec![("w", random_array(rng, &[4, 2]))]), vec!["w"])
        }),
        ("max_rows", |rng| {
            let mut g = Graph::new();
            let x = g.input("x");
            let m = g.add(Op::MaxRows(x));
            let out = project(&mut g, m, &[1, 4], rng);
            (g, out, bind(vec![("x", random_array(rng, &[6, 4]))]), vec!["x"])
        }),
        ("neighbor_max", |rng| {
            let mut g = Graph::new();
            let p = g.input("p");
            let v = g.input("v");
            let nm = g.add(Op::NeighborMax { metric: p, metric_cols: Some((0, 2)), values: v, k: 2, select: brute_knn() });
            let out = project(&mut g, nm, &[6, 3], rng);
            let inputs = bind(vec![("p", random_array(rng, &[6, 3])), ("v", random_array(rng, &[6, 3]))]);
            (g, out, inputs, vec!["p", "v"])
        }),
        ("softmax_cross_entropy", |rng| {
            let mut g = Graph::new();
            let l = g.input("logits");
            let t = g.input("t");
            let out = g.add(Op::SoftmaxCrossEntropy { logits: l, targets: t });
            let targets = DenseArray::vector((0..3).map(|_| rng.random_range(0..4) as f64).collect()).unwrap();
            (g, out, bind(vec![("logits", random_array(rng, &[3, 4])), ("t", targets)]), vec!["logits"])
        }),
        ("mlp_with_loss", |rng| {
            let mut g = Graph::new();
            let x = g.input("x");
            let w1 = g.input("w1");
            let b1 = g.input("b1");
            let w2 = g.input("w2");
            let t = g.input("t");
            let h = g.add(Op::MatMul(x, w1));
            let h = g.add(Op::AddRowBias(h, b1));
            let h = g.add(Op::LeakyRelu(h, 0.2));
            let pooled = g.add(Op::MaxRows(h));
            let logits = g.add(Op::MatMul(pooled, w2));
            let out = g.add(Op::SoftmaxCrossEntropy { logits, targets: t });
            let inputs = bind(vec![
                ("x", random_array(rng, &[5, 3])),
                ("w1", random_array(rng, &[3, 4])),
                ("b1", random_array(rng, &[4])),
                ("w2", random_array(rng, &[4, 2])),
                ("t", DenseArray::scalar(1.0)),
            ]);
            (g, out, inputs, vec!["x", "w1", "b1", "w2"])
        }),
    ]
}

#[test]
fn every_operation_matches_finite_differences_at_ten_points() {
    for (name, build) in cases() {
        for trial in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
            let (g, out, inputs, wrt) = build(&mut rng);
            let err = fd_check(&g, out, &inputs, &wrt);
            assert!(err <= TOL, "{name} trial {trial}: relative error {err:e}");
        }
    }
}

#[test]
fn evaluation_is_bit_deterministic() {
    for (name, build) in cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (g, out, inputs, _) = build(&mut rng);
        let (v1, g1) = evaluate_with_gradients(&g, out, &inputs).unwrap();
        let (v2, g2) = evaluate_with_gradients(&g, out, &inputs).unwrap();
        assert_eq!(v1.data()[0].to_bits(), v2.data()[0].to_bits(), "{name}");
        for (k, a) in &g1 {
            let b = &g2[k];
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()), "{name}/{k}");
        }
    }
}

#[test]
fn max_reduction_gradient_only_reaches_argmax_entries() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut g = Graph::new();
    let x = g.input("x");
    let m = g.add(Op::MaxRows(x));
    let out = project(&mut g, m, &[1, 8], &mut rng);
    let inputs = bind(vec![("x", random_array(&mut rng, &[20, 8]))]);
    let eval = g.forward(&inputs).unwrap();
    let arg = eval.argmax_rows(m).unwrap().to_vec();
    let grads = eval.gradients(out).unwrap();
    let gx = &grads["x"];
    let mut off_argmax = 0.0;
    for r in 0..20 {
        for c in 0..8 {
            if arg[c] != r {
                off_argmax += gx.get2(r, c).abs();
            }
        }
    }
    assert_eq!(off_argmax, 0.0);
}

proptest! {
    #[test]
    fn cross_entropy_is_shift_invariant(
        logits in proptest::collection::vec(-5.0f64..5.0, 2..6),
        shift in -20.0f64..20.0,
        class_seed in 0usize..100,
    ) {
        let c = class_seed % logits.len();
        let base = softmax_cross_entropy(&DenseArray::vector(logits.clone()).unwrap(), c).unwrap();
        let shifted: Vec<f64> = logits.iter().map(|x| x + shift).collect();
        let moved = softmax_cross_entropy(&DenseArray::vector(shifted).unwrap(), c).unwrap();
        prop_assert!(base >= 0.0);
        prop_assert!((base - moved).abs() <= 1e-12);
    }
}
