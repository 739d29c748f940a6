//! Minimal differentiable-layer toolkit.
//!
//! Only the layer set the fusion models need: linear maps, sigmoid, inverted
//! dropout, concatenation, Kronecker fusion, and attention-gated sum pooling,
//! wired into a [`LayerGraph`] with exact reverse-mode gradients and a
//! finite-difference checker.

mod check;
mod error;
mod graph;
mod layer;
mod loss;
mod param;
mod tensor;

pub use check::{grad_check, LossFn, CHECK_EPS};
pub use error::{GradError, Result};
pub use graph::{Activations, LayerGraph, NodeId, Port};
pub use layer::{Concat, Dropout, GatedSumPool, KroneckerFuse, LayerOp, Linear, Mode, Sigmoid};
pub use loss::{bce_loss, mse_loss, BCE_EPS};
pub use param::Param;
pub use tensor::{Scalar, Tensor};

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn fwd(layer: &mut dyn LayerOp<f64>, inputs: &[&Tensor<f64>]) -> Tensor<f64> {
        layer.forward(inputs, Mode::Eval, &mut rng()).unwrap()
    }

    // -- linear -------------------------------------------------------------

    #[test]
    fn linear_identity() {
        let w = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::vector(vec![0.0, 0.0]);
        let mut lin = Linear::from_params(w, b).unwrap();
        let y = fwd(&mut lin, &[&Tensor::vector(vec![3.0, -1.0])]);
        assert_eq!(y.data(), &[3.0, -1.0]);
    }

    #[test]
    fn linear_row_sum_with_bias() {
        let w = Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap();
        let b = Tensor::vector(vec![0.5]);
        let mut lin = Linear::from_params(w, b).unwrap();
        let y = fwd(&mut lin, &[&Tensor::vector(vec![2.0, 3.0])]);
        assert_eq!(y.data(), &[5.5]);
    }

    #[test]
    fn linear_weight_gradient_of_sum() {
        // d sum(y) / dW for x = [1, 2] and one output row: central differences
        // at eps 1e-5 give [1, 2] exactly up to O(eps²) — the map is linear.
        let x = Tensor::vector(vec![1.0, 2.0]);
        let mut lin = Linear::from_params(
            Tensor::new(vec![1, 2], vec![0.3, -0.7]).unwrap(),
            Tensor::vector(vec![0.1]),
        )
        .unwrap();
        let out = fwd(&mut lin, &[&x]);
        lin.backward(&[&x], &out, &Tensor::vector(vec![1.0])).unwrap();
        let analytic = lin.w.grad.data().to_vec();

        let eps = 1e-5;
        for i in 0..2 {
            let orig = lin.w.value.data()[i];
            lin.w.value.data_mut()[i] = orig + eps;
            let up = fwd(&mut lin, &[&x]).item();
            lin.w.value.data_mut()[i] = orig - eps;
            let dn = fwd(&mut lin, &[&x]).item();
            lin.w.value.data_mut()[i] = orig;
            let fd = (up - dn) / (2.0 * eps);
            assert!((analytic[i] - fd).abs() < 1e-9, "{analytic:?} vs fd {fd}");
        }
        assert!((analytic[0] - 1.0).abs() < 1e-12);
        assert!((analytic[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn linear_rejects_wrong_input_shape() {
        let mut lin = Linear::<f64>::new(3, 2, &mut rng());
        let err = lin
            .forward(&[&Tensor::vector(vec![1.0; 4])], Mode::Eval, &mut rng())
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[3]") && msg.contains("[4]"), "{msg}");
    }

    // -- sigmoid ------------------------------------------------------------

    #[test]
    fn sigmoid_symmetry_saturation_and_slope() {
        let mut s = Sigmoid;
        let y = fwd(&mut s, &[&Tensor::vector(vec![0.0, 50.0])]);
        assert_eq!(y.data()[0], 0.5);
        assert!(y.data()[1] > 1.0 - 1e-20 && y.data()[1] <= 1.0);

        let x = Tensor::vector(vec![0.0]);
        let out = fwd(&mut s, &[&x]);
        let g = s.backward(&[&x], &out, &Tensor::vector(vec![1.0])).unwrap();
        assert_eq!(g[0].data()[0], 0.25);
    }

    // -- dropout ------------------------------------------------------------

    #[test]
    fn dropout_eval_is_identity_and_rate_zero_is_identity() {
        let x = Tensor::vector(vec![1.0, -2.0, 3.5]);
        let mut d = Dropout::new(0.9).unwrap();
        let y = d.forward(&[&x], Mode::Eval, &mut rng()).unwrap();
        assert_eq!(y, x);

        let mut d0 = Dropout::new(0.0).unwrap();
        let y0 = d0.forward(&[&x], Mode::Train, &mut rng()).unwrap();
        assert_eq!(y0, x);
    }

    #[test]
    fn dropout_rejects_rate_one() {
        assert!(Dropout::<f64>::new(1.0).is_err());
        assert!(Dropout::<f64>::new(-0.1).is_err());
    }

    #[test]
    fn dropout_survivor_fraction_concentrates() {
        let n = 100_000;
        let x = Tensor::vector(vec![1.0f64; n]);
        let mut d = Dropout::new(0.9).unwrap();
        let mut r = rng();
        let y = d.forward(&[&x], Mode::Train, &mut r).unwrap();
        let survivors = y.data().iter().filter(|v| **v != 0.0).count();
        let frac = survivors as f64 / n as f64;
        assert!((frac - 0.1).abs() < 0.01, "survivor fraction {frac}");
    }

    #[test]
    fn dropout_train_mode_is_unbiased() {
        // E[output] = input elementwise; check the mean of one element over
        // many draws against a 3-standard-error band.
        let rate = 0.7;
        let x = Tensor::vector(vec![2.0f64]);
        let mut d = Dropout::new(rate).unwrap();
        let mut r = rng();
        let n = 200_000;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += d.forward(&[&x], Mode::Train, &mut r).unwrap().data()[0];
        }
        let mean = sum / n as f64;
        // one draw is 0 w.p. rate, else 2/(1−rate); std of the mean follows
        let keep = 1.0 - rate;
        let var = (2.0 / keep) * (2.0 / keep) * keep - 4.0;
        let se = (var / n as f64).sqrt();
        assert!((mean - 2.0).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn dropout_backward_masks_like_forward() {
        let x = Tensor::vector(vec![1.0f64; 64]);
        let mut d = Dropout::new(0.5).unwrap();
        let mut r = rng();
        let y = d.forward(&[&x], Mode::Train, &mut r).unwrap();
        let g = d
            .backward(&[&x], &y, &Tensor::vector(vec![1.0f64; 64]))
            .unwrap();
        // zeroed forward elements must have zero gradient; survivors carry 1/keep
        for (yo, go) in y.data().iter().zip(g[0].data()) {
            assert_eq!(*yo == 0.0, *go == 0.0);
            if *go != 0.0 {
                assert_eq!(*go, 2.0);
            }
        }
    }

    // -- concat ---------------------------------------------------------

    #[test]
    fn concat_basic_and_single() {
        let mut c = Concat;
        let y = fwd(
            &mut c,
            &[
                &Tensor::vector(vec![1.0, 2.0]),
                &Tensor::vector(vec![3.0]),
            ],
        );
        assert_eq!(y.data(), &[1.0, 2.0, 3.0]);

        let alone = Tensor::vector(vec![4.0, 5.0]);
        assert_eq!(fwd(&mut c, &[&alone]), alone);
    }

    #[test]
    fn concat_rejects_empty_list() {
        let mut c = Concat;
        assert!(matches!(
            c.forward(&[], Mode::Eval, &mut rng()),
            Err(GradError::EmptyConcat)
        ));
    }

    #[test]
    fn concat_offsets_match_index_map() {
        // 128 + 32 + 160 → 320, every element where the index map says
        let parts = [128usize, 32, 160];
        let tensors: Vec<Tensor<f64>> = parts
            .iter()
            .enumerate()
            .map(|(pi, &n)| Tensor::vector((0..n).map(|i| (pi * 1000 + i) as f64).collect()))
            .collect();
        let refs: Vec<&Tensor<f64>> = tensors.iter().collect();
        let mut c = Concat;
        let y = fwd(&mut c, &refs);
        assert_eq!(y.len(), 320);
        let mut offset = 0;
        for (pi, &n) in parts.iter().enumerate() {
            for i in 0..n {
                assert_eq!(y.data()[offset + i], (pi * 1000 + i) as f64);
            }
            offset += n;
        }
    }

    proptest! {
        #[test]
        fn concat_split_roundtrips_gradients_bitexact(
            sizes in proptest::collection::vec(1usize..40, 1..5),
            seed in 0u64..1000,
        ) {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let tensors: Vec<Tensor<f64>> = sizes
                .iter()
                .map(|&n| Tensor::vector((0..n).map(|_| r.random::<f64>() - 0.5).collect()))
                .collect();
            let refs: Vec<&Tensor<f64>> = tensors.iter().collect();
            let mut c = Concat;
            let y = c.forward(&refs, Mode::Eval, &mut r).unwrap();
            let upstream = Tensor::vector((0..y.len()).map(|_| r.random::<f64>()).collect());
            let grads = c.backward(&refs, &y, &upstream).unwrap();
            let mut offset = 0;
            for (t, g) in tensors.iter().zip(&grads) {
                prop_assert_eq!(g.data(), &upstream.data()[offset..offset + t.len()]);
                offset += t.len();
            }
        }
    }

    // -- kronecker fusion ---------------------------------------------------

    #[test]
    fn kronecker_small_example() {
        let mut k = KroneckerFuse;
        let y = fwd(
            &mut k,
            &[
                &Tensor::vector(vec![1.0, 2.0]),
                &Tensor::vector(vec![3.0]),
            ],
        );
        assert_eq!(y.data(), &[3.0, 1.0, 6.0, 2.0, 3.0, 1.0]);
    }

    #[test]
    fn kronecker_zero_inputs_leave_only_trailing_one() {
        let mut k = KroneckerFuse;
        let y = fwd(
            &mut k,
            &[
                &Tensor::vector(vec![0.0; 3]),
                &Tensor::vector(vec![0.0; 2]),
            ],
        );
        assert_eq!(y.len(), 4 * 3);
        assert_eq!(y.data()[y.len() - 1], 1.0);
        assert_eq!(y.data().iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn kronecker_gradient_matches_finite_differences() {
        let a = Tensor::vector(vec![1.0, 2.0]);
        let b = Tensor::vector(vec![3.0]);
        let mut k = KroneckerFuse;
        let y = fwd(&mut k, &[&a, &b]);
        let ones = Tensor::vector(vec![1.0; y.len()]);
        let grads = k.backward(&[&a, &b], &y, &ones).unwrap();
        assert_eq!(grads[0].data(), &[4.0, 4.0]);

        let eps = 1e-5;
        for i in 0..2 {
            let mut up = a.clone();
            up.data_mut()[i] += eps;
            let mut dn = a.clone();
            dn.data_mut()[i] -= eps;
            let s = |t: &Tensor<f64>| fwd(&mut KroneckerFuse, &[t, &b]).data().iter().sum::<f64>();
            let fd = (s(&up) - s(&dn)) / (2.0 * eps);
            assert!((grads[0].data()[i] - fd).abs() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn kronecker_length_and_trailing_one(
            m in 1usize..12,
            n in 1usize..12,
            seed in 0u64..1000,
        ) {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let a = Tensor::vector((0..m).map(|_| r.random::<f64>() * 4.0 - 2.0).collect());
            let b = Tensor::vector((0..n).map(|_| r.random::<f64>() * 4.0 - 2.0).collect());
            let y = KroneckerFuse.forward(&[&a, &b], Mode::Eval, &mut r).unwrap();
            prop_assert_eq!(y.len(), (m + 1) * (n + 1));
            prop_assert_eq!(y.data()[y.len() - 1], 1.0);
        }
    }

    // -- gated sum pooling ----------------------------------------------

    #[test]
    fn gated_pool_single_patch_with_open_gate() {
        // A huge bias saturates every gate at 1, so the output is the patch.
        let dim = 8;
        let w = Tensor::zeros(vec![dim, dim]);
        let b = Tensor::vector(vec![50.0; dim]);
        let mut pool = GatedSumPool::from_params(w, b).unwrap();
        let patch: Vec<f64> = (0..dim).map(|i| i as f64 - 3.0).collect();
        let bag = Tensor::new(vec![1, dim], patch.clone()).unwrap();
        let y = fwd(&mut pool, &[&bag]);
        for (yi, pi) in y.data().iter().zip(&patch) {
            assert!((yi - pi).abs() < 1e-6);
        }
    }

    #[test]
    fn gated_pool_duplicated_patch_doubles_output() {
        let dim = 8;
        let mut pool = GatedSumPool::<f64>::new(dim, &mut rng());
        let patch: Vec<f64> = (0..dim).map(|i| (i as f64).sin()).collect();
        let one = Tensor::new(vec![1, dim], patch.clone()).unwrap();
        let two = Tensor::new(vec![2, dim], [patch.clone(), patch].concat()).unwrap();
        let y1 = fwd(&mut pool, &[&one]);
        let y2 = fwd(&mut pool, &[&two]);
        for (a, b) in y1.data().iter().zip(y2.data()) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn gated_pool_matches_naive_per_patch_loop() {
        let dim = 8;
        let k = 5;
        let mut r = rng();
        let mut pool = GatedSumPool::<f64>::new(dim, &mut r);
        let bag = Tensor::new(
            vec![k, dim],
            (0..k * dim).map(|_| r.random::<f64>() * 2.0 - 1.0).collect(),
        )
        .unwrap();
        let y = fwd(&mut pool, &[&bag]);

        // naive oracle: explicit σ(Wx+b) ⊙ x summed over patches
        let sigma = |z: f64| 1.0 / (1.0 + (-z).exp());
        let w = pool.w.value.data();
        let b = pool.b.value.data();
        let mut expect = vec![0.0f64; dim];
        for patch in 0..k {
            let x = bag.row(patch);
            for o in 0..dim {
                let z: f64 = (0..dim).map(|i| w[o * dim + i] * x[i]).sum::<f64>() + b[o];
                expect[o] += sigma(z) * x[o];
            }
        }
        for (a, e) in y.data().iter().zip(&expect) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn gated_pool_rejects_empty_bag() {
        let mut pool = GatedSumPool::<f64>::new(4, &mut rng());
        let bag = Tensor::new(vec![0, 4], vec![]).unwrap();
        assert!(matches!(
            pool.forward(&[&bag], Mode::Eval, &mut rng()),
            Err(GradError::EmptyBag)
        ));
    }

    proptest! {
        #[test]
        fn gated_pool_is_permutation_invariant(seed in 0u64..500) {
            let dim = 6;
            let k = 7;
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let mut pool = GatedSumPool::<f64>::new(dim, &mut r);
            let rows: Vec<Vec<f64>> = (0..k)
                .map(|_| (0..dim).map(|_| r.random::<f64>() * 2.0 - 1.0).collect())
                .collect();
            let bag = Tensor::new(vec![k, dim], rows.concat()).unwrap();
            let mut shuffled = rows.clone();
            shuffled.reverse();
            shuffled.swap(0, 2);
            let bag2 = Tensor::new(vec![k, dim], shuffled.concat()).unwrap();
            let y1 = pool.forward(&[&bag], Mode::Eval, &mut r).unwrap();
            let y2 = pool.forward(&[&bag2], Mode::Eval, &mut r).unwrap();
            for (a, b) in y1.data().iter().zip(y2.data()) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }
    }

    // -- graph + grad_check -----------------------------------------------

    /// linear → sigmoid → BCE micro-graph, checked end to end.
    #[test]
    fn grad_check_linear_sigmoid_bce() {
        let mut r = rng();
        let mut g = LayerGraph::<f64>::new(1);
        let lin = g
            .add("lin", Box::new(Linear::new(4, 1, &mut r)), vec![Port::External(0)])
            .unwrap();
        let sig = g.add("sig", Box::new(Sigmoid), vec![Port::Node(lin)]).unwrap();
        let x = Tensor::vector(vec![0.4, -1.2, 0.9, 0.1]);
        let loss = move |acts: &Activations<f64>| {
            let (l, dl) = bce_loss(acts.value(sig).item(), 1)?;
            Ok((l, vec![(sig, Tensor::scalar(dl))]))
        };
        let worst = grad_check(&mut g, &[x], &loss, CHECK_EPS).unwrap();
        assert!(worst < 1e-6, "max relative error {worst}");
    }

    /// kronecker fusion composed with a linear head.
    #[test]
    fn grad_check_kronecker_with_head() {
        let mut r = rng();
        let mut g = LayerGraph::<f64>::new(2);
        let ea = g
            .add("enc_a", Box::new(Linear::new(3, 4, &mut r)), vec![Port::External(0)])
            .unwrap();
        let eb = g
            .add("enc_b", Box::new(Linear::new(2, 3, &mut r)), vec![Port::External(1)])
            .unwrap();
        let kron = g
            .add("kron", Box::new(KroneckerFuse), vec![Port::Node(ea), Port::Node(eb)])
            .unwrap();
        let head = g
            .add("head", Box::new(Linear::new(5 * 4, 1, &mut r)), vec![Port::Node(kron)])
            .unwrap();
        let sig = g.add("sig", Box::new(Sigmoid), vec![Port::Node(head)]).unwrap();
        let xa = Tensor::vector(vec![0.2, -0.4, 1.1]);
        let xb = Tensor::vector(vec![-0.3, 0.8]);
        let loss = move |acts: &Activations<f64>| {
            let (l, dl) = bce_loss(acts.value(sig).item(), 0)?;
            Ok((l, vec![(sig, Tensor::scalar(dl))]))
        };
        let worst = grad_check(&mut g, &[xa, xb], &loss, CHECK_EPS).unwrap();
        assert!(worst < 1e-6, "max relative error {worst}");
    }

    /// Fan-out: one node consumed twice must accumulate both branches.
    #[test]
    fn grad_check_shared_node_accumulates() {
        let mut r = rng();
        let mut g = LayerGraph::<f64>::new(1);
        let enc = g
            .add("enc", Box::new(Linear::new(3, 2, &mut r)), vec![Port::External(0)])
            .unwrap();
        let h1 = g
            .add("h1", Box::new(Linear::new(2, 1, &mut r)), vec![Port::Node(enc)])
            .unwrap();
        let h2 = g
            .add("h2", Box::new(Linear::new(2, 1, &mut r)), vec![Port::Node(enc)])
            .unwrap();
        let s1 = g.add("s1", Box::new(Sigmoid), vec![Port::Node(h1)]).unwrap();
        let s2 = g.add("s2", Box::new(Sigmoid), vec![Port::Node(h2)]).unwrap();
        let x = Tensor::vector(vec![0.5, -0.2, 0.7]);
        let loss = move |acts: &Activations<f64>| {
            let (l1, d1) = bce_loss(acts.value(s1).item(), 1)?;
            let (l2, d2) = bce_loss(acts.value(s2).item(), 0)?;
            Ok((
                l1 + l2,
                vec![(s1, Tensor::scalar(d1)), (s2, Tensor::scalar(d2))],
            ))
        };
        let worst = grad_check(&mut g, &[x], &loss, CHECK_EPS).unwrap();
        assert!(worst < 1e-6, "max relative error {worst}");
    }

    #[test]
    fn graph_rejects_forward_references() {
        let mut g = LayerGraph::<f64>::new(1);
        let err = g.add("bad", Box::new(Sigmoid), vec![Port::Node(3)]).unwrap_err();
        assert!(err.to_string().contains("undefined input"));
    }

    #[test]
    fn graph_names_nonfinite_layer() {
        let w = Tensor::new(vec![1, 1], vec![f64::MAX]).unwrap();
        let b = Tensor::vector(vec![0.0]);
        let mut g = LayerGraph::<f64>::new(1);
        g.add("exploder", Box::new(Linear::from_params(w, b).unwrap()), vec![Port::External(0)])
            .unwrap();
        let x = Tensor::vector(vec![f64::MAX]);
        let err = g
            .forward(&[x], Mode::Eval, &mut rng())
            .unwrap_err();
        assert!(err.to_string().contains("exploder"), "{err}");
    }
}
