use grapht::diffcore::{check_gradients, empty_segments, Pointwise, Reduce, Tape, Tensor, TensorError, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type R = Result<Var, TensorError>;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Contracts an arbitrary-shaped output with fixed random weights so the
/// check sees a non-degenerate scalar.
fn probe(t: &mut Tape<f64>, y: Var) -> R {
    let n = t.value(y).len();
    let w: Vec<f64> = (0..n).map(|k| ((k * 7919 % 17) as f64 - 8.0) / 5.0).collect();
    let flat = t.reshape(y, vec![n])?;
    let w = t.constant(Tensor::vector(w));
    let p = t.mul(flat, w)?;
    Ok(t.sum(p))
}

fn assert_grads<F: Fn(&mut Tape<f64>, &[Var]) -> R>(f: F, inputs: &[Tensor<f64>]) {
    let rep = check_gradients(f, inputs, 1e-5).unwrap();
    assert!(rep.max_rel_error < 1e-5, "{rep:?}");
}

#[test]
fn matmul_examples() {
    let mut t = Tape::new();
    let i = t.constant(Tensor::eye(2));
    let a = t.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
    let p = t.matmul(i, a).unwrap();
    assert_eq!(t.value(p).data(), &[1.0, 2.0, 3.0, 4.0]);
    let r = t.constant(Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap());
    let c = t.constant(Tensor::from_rows(&[vec![2.0], vec![5.0]]).unwrap());
    let p = t.matmul(r, c).unwrap();
    assert_eq!(t.value(p).data(), &[2.0]);
    assert!(matches!(t.matmul(r, r), Err(TensorError::Shape { .. })));
}

#[test]
fn matmul_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ins = [rand_tensor(&mut rng, &[3, 4]), rand_tensor(&mut rng, &[4, 2])];
    let rep = check_gradients(
        |t, v| {
            let y = t.matmul(v[0], v[1])?;
            probe(t, y)
        },
        &ins,
        1e-5,
    )
    .unwrap();
    assert!(rep.max_rel_error < 1e-6, "{rep:?}");
}

#[test]
fn segment_reduce_examples() {
    let mut t = Tape::new();
    let x = t.constant(Tensor::from_rows(&[vec![1.0], vec![3.0]]).unwrap());
    let m = t.segment_reduce(x, &[0, 0], 1, Reduce::Mean).unwrap();
    assert_eq!(t.value(m).data(), &[2.0]);
    let m = t.segment_reduce(x, &[0, 1], 2, Reduce::Max).unwrap();
    assert_eq!(t.value(m).data(), &[1.0, 3.0]);
    let m = t.segment_reduce(x, &[0, 2], 3, Reduce::Sum).unwrap();
    assert_eq!(t.value(m).data(), &[1.0, 0.0, 3.0]);
    assert_eq!(empty_segments(&[0, 2], 3), vec![false, true, false]);
    assert!(matches!(t.segment_reduce(x, &[0, 3], 3, Reduce::Sum), Err(TensorError::Index { index: 3, .. })));
}

#[test]
fn segment_reduce_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let seg = [0, 2, 2, 1, 0, 2];
    for mode in [Reduce::Sum, Reduce::Mean, Reduce::Max] {
        let ins = [rand_tensor(&mut rng, &[6, 3])];
        assert_grads(
            |t, v| {
                let y = t.segment_reduce(v[0], &seg, 4, mode)?;
                probe(t, y)
            },
            &ins,
        );
    }
}

#[test]
fn pointwise_examples() {
    let mut t = Tape::new();
    let x = t.constant(Tensor::vector(vec![-2.0, 0.0]));
    let r = t.relu(x);
    let s = t.sigmoid(x);
    assert_eq!(t.value(r).data()[0], 0.0);
    assert_eq!(t.value(s).data()[1], 0.5);
    assert!(matches!(t.log(x), Err(TensorError::Domain { .. })));
}

#[test]
fn pointwise_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for f in [Pointwise::Relu, Pointwise::Sigmoid, Pointwise::Tanh, Pointwise::Exp, Pointwise::Log, Pointwise::Neg] {
        let mut x = rand_tensor(&mut rng, &[2, 5]);
        if f == Pointwise::Log {
            x = x.map(|v| v.abs() + 0.1);
        }
        if f == Pointwise::Relu {
            // keep clear of the kink
            x = x.map(|v| if v.abs() < 0.01 { 0.5 } else { v });
        }
        assert_grads(
            |t, v| {
                let y = t.pointwise(v[0], f)?;
                probe(t, y)
            },
            &[x],
        );
    }
}

#[test]
fn softmax_examples() {
    let mut t = Tape::new();
    let x = t.constant(Tensor::vector(vec![0.0, 0.0]));
    let s = t.softmax(x);
    assert_eq!(t.value(s).data(), &[0.5, 0.5]);
    let x = t.constant(Tensor::vector(vec![1000.0, 0.0]));
    let s = t.softmax(x);
    assert_eq!(t.value(s).data(), &[1.0, 0.0]);
}

#[test]
fn softmax_and_log_softmax_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let ins = [rand_tensor(&mut rng, &[3, 4])];
    assert_grads(
        |t, v| {
            let y = t.softmax(v[0]);
            probe(t, y)
        },
        &ins,
    );
    assert_grads(
        |t, v| {
            let y = t.log_softmax(v[0]);
            probe(t, y)
        },
        &ins,
    );
}

#[test]
fn layer_norm_examples() {
    let eps = 1e-5f64;
    let mut t: Tape<f64> = Tape::new();
    let x = t.constant(Tensor::vector(vec![5.0, 5.0, 5.0]));
    let y = t.layer_norm(x, eps).unwrap();
    assert_eq!(t.value(y).data(), &[0.0, 0.0, 0.0]);
    let x = t.constant(Tensor::vector(vec![1.0, -1.0]));
    let y = t.layer_norm(x, eps).unwrap();
    // std of (1, -1) is 1, so the output is ±1/(1+eps)
    let v = 1.0 / (1.0 + eps);
    assert!((t.value(y).data()[0] - v).abs() < 1e-15);
    assert!((t.value(y).data()[1] + v).abs() < 1e-15);
}

#[test]
fn layer_norm_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let ins = [rand_tensor(&mut rng, &[3, 6])];
    assert_grads(
        |t, v| {
            let y = t.layer_norm(v[0], 1e-5)?;
            probe(t, y)
        },
        &ins,
    );
}

#[test]
fn structural_op_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let ins = [
        rand_tensor(&mut rng, &[4, 3]),
        rand_tensor(&mut rng, &[3]),
        rand_tensor(&mut rng, &[4, 1]),
        rand_tensor(&mut rng, &[5, 6]),
        rand_tensor(&mut rng, &[4, 3]),
    ];
    assert_grads(
        |t, v| {
            let a = t.add_row(v[0], v[1])?;
            let b = t.mul_col(a, v[2])?;
            let tr = t.transpose(b)?;
            let tr = t.transpose(tr)?;
            let g = t.gather_rows(tr, &[3, 0, 0, 2, 1])?;
            let w = t.edge_matvec(v[3], g, 2, 3)?;
            let c = t.concat_cols(&[w, g])?;
            let sl = t.slice_cols(c, 1, 3)?;
            let sq = t.mul(v[0], v[4])?;
            let sq = t.sub(sq, v[4])?;
            let r = t.concat_rows(&[sl, sq])?;
            let e = t.gather_elems(r, &[0, 5, 5, 11, 26])?;
            let sc = t.scale(e, 1.7);
            let sc = t.add_scalar(sc, 0.3);
            let om = t.one_minus(sc);
            let cl = t.clamp(om, -0.5, 10.0);
            let m = t.mean(r);
            let s = probe(t, cl)?;
            let tot = t.add(s, m)?;
            let mm = t.mul(tot, tot)?;
            Ok(mm)
        },
        &ins,
    );
}

#[test]
fn determinism_same_seed_bit_identical() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut t = Tape::new();
        let a = t.param(rand_tensor(&mut rng, &[5, 4]));
        let b = t.param(rand_tensor(&mut rng, &[4, 3]));
        let y = t.matmul(a, b).unwrap();
        let y = t.layer_norm(y, 1e-5).unwrap();
        let y = t.softmax(y);
        let s = t.segment_reduce(y, &[0, 1, 0, 1, 1], 2, Reduce::Max).unwrap();
        let l = t.sum(s);
        let g = t.backward(l).unwrap();
        (t.value(l).item().to_bits(), g.get(a).unwrap().data().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
    };
    assert_eq!(run(), run());
}

#[test]
fn unused_inputs_get_no_gradient() {
    let mut t = Tape::new();
    let a = t.param(Tensor::vector(vec![1.0, 2.0]));
    let b = t.param(Tensor::vector(vec![3.0]));
    let s = t.sum(a);
    let g = t.backward(s).unwrap();
    assert!(g.get(b).is_none());
    assert_eq!(g.get(a).unwrap().data(), &[1.0, 1.0]);
}

#[test]
fn tensor_shape_validation() {
    assert!(Tensor::<f64>::new(vec![2, 3], vec![0.0; 5]).is_err());
    assert_eq!(Tensor::<f32>::zeros(vec![2, 3]).len(), 6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_sum_to_one(xs in prop::collection::vec(-1e4f64..1e4, 1..12), rows in 1usize..4) {
        let n = xs.len() * rows;
        let data: Vec<f64> = (0..n).map(|k| xs[k % xs.len()] * if k / xs.len() % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let mut t = Tape::new();
        let x = t.constant(Tensor::new(vec![rows, xs.len()], data).unwrap());
        let s = t.softmax(x);
        for r in t.value(s).to_rows() {
            prop_assert!(r.iter().all(|&v| v >= 0.0));
            prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_norm_output_is_centred(xs in prop::collection::vec(-100f64..100.0, 2..16)) {
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(xs.clone()));
        let y = t.layer_norm(x, 1e-5).unwrap();
        let out = t.value(y).data();
        let mean = out.iter().sum::<f64>() / out.len() as f64;
        prop_assert!(mean.abs() < 1e-10);
        let m_in = xs.iter().sum::<f64>() / xs.len() as f64;
        let sd_in = (xs.iter().map(|v| (v - m_in).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
        if sd_in > 1e-2 {
            let sd = (out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / out.len() as f64).sqrt();
            prop_assert!((sd - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn random_composite_gradients_match(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ins = [rand_tensor(&mut rng, &[3, 4]), rand_tensor(&mut rng, &[4, 4]), rand_tensor(&mut rng, &[4])];
        let rep = check_gradients(
            |t, v| {
                let y = t.matmul(v[0], v[1])?;
                let y = t.add_row(y, v[2])?;
                let y = t.tanh(y);
                let y = t.layer_norm(y, 1e-5)?;
                let y = t.softmax(y);
                let y = t.segment_reduce(y, &[1, 0, 1], 2, Reduce::Mean)?;
                probe(t, y)
            },
            &ins,
            1e-5,
        ).unwrap();
        prop_assert!(rep.max_rel_error < 1e-5, "{:?}", rep);
    }
}
