use super::*;
use crate::gradcheck::{central_diff_gradient, max_relative_error};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Tape gradient of `build` w.r.t. the single leaf `x`, plus the loss value.
fn tape_grad(
    x: &[f64],
    shape: (usize, usize),
    build: impl Fn(&mut Tape, &Tensor) -> Tensor,
) -> (f64, Vec<f64>) {
    let mut tape = Tape::new();
    let t = Tensor::matrix(shape.0, shape.1, x.to_vec()).unwrap();
    let leaf = tape.leaf(&t);
    let loss = build(&mut tape, &leaf);
    let grads = tape.backward(&loss).unwrap();
    (loss.item(), grads.wrt_or_zeros(&leaf))
}

/// Checks one op against central finite differences with h = 1e-5.
fn check_gradient(
    name: &str,
    x: &[f64],
    shape: (usize, usize),
    build: impl Fn(&mut Tape, &Tensor) -> Tensor + Copy,
) {
    let (_, analytic) = tape_grad(x, shape, build);
    let numeric = central_diff_gradient(|p| tape_grad(p, shape, build).0, x, 1e-5);
    let err = max_relative_error(&analytic, &numeric);
    assert!(err < 1e-4, "{name}: max rel err {err:.3e}");
}

// ── matmul ─────────────────────────────────────────────────────────────

#[test]
fn matmul_identity() {
    let mut tape = Tape::new();
    let eye = Tensor::matrix(3, 3, vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
    let a = Tensor::matrix(3, 2, vec![1., 2., 3., 4., 5., 6.]).unwrap();
    let c = tape.matmul(&eye, &a).unwrap();
    assert_eq!(c.values(), a.values());
}

#[test]
fn matmul_scalar_case() {
    let mut tape = Tape::new();
    let a = Tensor::matrix(1, 1, vec![2.0]).unwrap();
    let b = Tensor::matrix(1, 1, vec![3.0]).unwrap();
    assert_eq!(tape.matmul(&a, &b).unwrap().values(), &[6.0]);
}

#[test]
fn matmul_matches_naive_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = rand_vec(&mut rng, 12, -2.0, 2.0);
    let b = rand_vec(&mut rng, 8, -2.0, 2.0);
    let mut want = vec![0.0; 6];
    for i in 0..3 {
        for j in 0..2 {
            let mut s = 0.0;
            for p in 0..4 {
                s += a[i * 4 + p] * b[p * 2 + j];
            }
            want[i * 2 + j] = s;
        }
    }
    let mut tape = Tape::new();
    let ta = Tensor::matrix(3, 4, a).unwrap();
    let tb = Tensor::matrix(4, 2, b).unwrap();
    let c = tape.matmul(&ta, &tb).unwrap();
    for (x, y) in c.values().iter().zip(want.iter()) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn matmul_shape_mismatch_names_both_shapes() {
    let mut tape = Tape::new();
    let a = Tensor::zeros(2, 3);
    let b = Tensor::zeros(4, 2);
    let err = tape.matmul(&a, &b).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("[2, 3]") && msg.contains("[4, 2]"), "{msg}");
}

// ── row_softmax ────────────────────────────────────────────────────────

#[test]
fn softmax_symmetric_row() {
    let mut tape = Tape::new();
    let a = Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap();
    let s = tape.row_softmax(&a, None).unwrap();
    assert_eq!(s.values(), &[0.5, 0.5]);
}

#[test]
fn softmax_shift_invariance() {
    let mut tape = Tape::new();
    let base = Tensor::matrix(1, 3, vec![0.3, -1.2, 0.8]).unwrap();
    let shifted = Tensor::matrix(1, 3, vec![0.3 + 7.5, -1.2 + 7.5, 0.8 + 7.5]).unwrap();
    let s1 = tape.row_softmax(&base, None).unwrap();
    let s2 = tape.row_softmax(&shifted, None).unwrap();
    for (a, b) in s1.values().iter().zip(s2.values().iter()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn softmax_direct_evaluation() {
    // exp(0) : exp(ln 3) = 1 : 3
    let mut tape = Tape::new();
    let a = Tensor::matrix(1, 2, vec![0.0, 3f64.ln()]).unwrap();
    let s = tape.row_softmax(&a, None).unwrap();
    assert!((s.values()[0] - 0.25).abs() < 1e-12);
    assert!((s.values()[1] - 0.75).abs() < 1e-12);
}

#[test]
fn softmax_mask_zeroes_and_renormalizes() {
    let mut tape = Tape::new();
    let a = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 0.0, 0.0, 0.0]).unwrap();
    let mask = vec![true, false, true, true, true, false];
    let s = tape.row_softmax(&a, Some(&mask)).unwrap();
    assert_eq!(s.values()[1], 0.0);
    assert_eq!(s.values()[5], 0.0);
    let row0: f64 = s.values()[0..3].iter().sum();
    let row1: f64 = s.values()[3..6].iter().sum();
    assert!((row0 - 1.0).abs() < 1e-12 && (row1 - 1.0).abs() < 1e-12);
    assert_eq!(s.values()[3], 0.5);
}

#[test]
fn softmax_fully_masked_row_is_error() {
    let mut tape = Tape::new();
    let a = Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap();
    let err = tape.row_softmax(&a, Some(&[false, false])).unwrap_err();
    assert!(matches!(err, TensorError::DegenerateRow { row: 0 }));
}

// ── pointwise ops ──────────────────────────────────────────────────────

#[test]
fn leaky_relu_values() {
    let mut tape = Tape::new();
    let a = Tensor::matrix(1, 2, vec![1.0, -1.0]).unwrap();
    let y = tape.leaky_relu(&a, 0.2).unwrap();
    assert_eq!(y.values(), &[1.0, -0.2]);
    assert!(matches!(
        tape.leaky_relu(&a, 1.5),
        Err(TensorError::InvalidSlope(_))
    ));
}

#[test]
fn sigmoid_values() {
    let mut tape = Tape::new();
    let a = Tensor::matrix(1, 2, vec![0.0, 50.0]).unwrap();
    let y = tape.sigmoid(&a);
    assert_eq!(y.values()[0], 0.5);
    assert!((y.values()[1] - 1.0).abs() < 1e-9);
}

#[test]
fn sigmoid_derivative_identity() {
    // dσ/dx = σ(x)(1−σ(x)), checked against the tape and finite differences.
    let xs = vec![-1.3, 0.0, 0.7, 2.1];
    let (_, gr) = tape_grad(&xs, (1, 4), |tape, leaf| {
        let s = tape.sigmoid(leaf);
        tape.sum(&s)
    });
    for (&x, &g) in xs.iter().zip(gr.iter()) {
        let s = sigmoid_scalar(x);
        assert!((g - s * (1.0 - s)).abs() < 1e-12);
    }
    check_gradient("sigmoid", &xs, (1, 4), |tape, leaf| {
        let s = tape.sigmoid(leaf);
        tape.sum(&s)
    });
}

// ── l1 distance ────────────────────────────────────────────────────────

#[test]
fn l1_distance_values() {
    let mut tape = Tape::new();
    let a = Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap();
    let b = Tensor::matrix(1, 2, vec![0.0, 1.0]).unwrap();
    assert_eq!(tape.l1_distance(&a, &a).unwrap().item(), 0.0);
    assert_eq!(tape.l1_distance(&a, &b).unwrap().item(), 2.0);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = rand_vec(&mut rng, 12, -2.0, 2.0);
    let y = rand_vec(&mut rng, 12, -2.0, 2.0);
    let oracle: f64 = x.iter().zip(y.iter()).map(|(a, b)| (a - b).abs()).sum();
    let tx = Tensor::matrix(3, 4, x).unwrap();
    let ty = Tensor::matrix(3, 4, y).unwrap();
    assert!((tape.l1_distance(&tx, &ty).unwrap().item() - oracle).abs() < 1e-12);

    let bad = Tensor::zeros(2, 2);
    assert!(tape.l1_distance(&tx, &bad).is_err());
}

#[test]
fn l1_subgradient_at_tie_is_zero() {
    let (_, g) = tape_grad(&[1.0, 2.0], (1, 2), |tape, leaf| {
        let b = Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap();
        tape.l1_distance(leaf, &b).unwrap()
    });
    assert_eq!(g, vec![0.0, 1.0]);
}

// ── cross entropy ──────────────────────────────────────────────────────

#[test]
fn cross_entropy_uniform_logits() {
    for c in [2usize, 3, 5] {
        let mut tape = Tape::new();
        let logits = Tensor::zeros(4, c);
        let loss = tape.cross_entropy_logits(&logits, &[0; 4]).unwrap();
        assert!((loss.item() - (c as f64).ln()).abs() < 1e-12, "C = {c}");
    }
}

#[test]
fn cross_entropy_saturated() {
    let mut tape = Tape::new();
    let logits = Tensor::matrix(2, 3, vec![50.0, 0.0, 0.0, 0.0, 50.0, 0.0]).unwrap();
    let loss = tape.cross_entropy_logits(&logits, &[0, 1]).unwrap();
    assert!(loss.item() < 1e-9);
}

#[test]
fn cross_entropy_label_out_of_range() {
    let mut tape = Tape::new();
    let logits = Tensor::zeros(1, 3);
    assert!(matches!(
        tape.cross_entropy_logits(&logits, &[3]),
        Err(TensorError::LabelOutOfRange { .. })
    ));
}

#[test]
fn cross_entropy_gradient_is_softmax_minus_onehot() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = rand_vec(&mut rng, 6, -2.0, 2.0);
    let labels = vec![2usize, 0];
    let (_, g) = tape_grad(&x, (2, 3), |tape, leaf| {
        tape.cross_entropy_logits(leaf, &labels).unwrap()
    });
    // independent softmax computation
    for i in 0..2 {
        let row = &x[i * 3..(i + 1) * 3];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let denom: f64 = exps.iter().sum();
        for j in 0..3 {
            let one_hot = if labels[i] == j { 1.0 } else { 0.0 };
            let want = (exps[j] / denom - one_hot) / 2.0;
            assert!((g[i * 3 + j] - want).abs() < 1e-12);
        }
    }
    check_gradient("cross_entropy", &x, (2, 3), |tape, leaf| {
        tape.cross_entropy_logits(leaf, &labels).unwrap()
    });
}

// ── backward semantics ─────────────────────────────────────────────────

#[test]
fn unreachable_parameter_gets_no_gradient() {
    let mut tape = Tape::new();
    let p = Tensor::column(vec![1.0, 2.0]);
    let unused = tape.leaf(&p);
    let q = Tensor::column(vec![3.0]);
    let used = tape.leaf(&q);
    let loss = tape.sum(&used);
    let grads = tape.backward(&loss).unwrap();
    assert!(grads.wrt(&unused).is_none());
    assert_eq!(grads.wrt_or_zeros(&unused), vec![0.0, 0.0]);
}

#[test]
fn linear_loss_gradient_is_input() {
    let mut tape = Tape::new();
    let w = Tensor::matrix(1, 3, vec![0.5, -1.0, 2.0]).unwrap();
    let x = Tensor::matrix(3, 1, vec![3.0, 4.0, 5.0]).unwrap();
    let wl = tape.leaf(&w);
    let loss = tape.matmul(&wl, &x).unwrap();
    let grads = tape.backward(&loss).unwrap();
    assert_eq!(grads.wrt(&wl).unwrap(), x.values());
}

#[test]
fn backward_rejects_non_scalar() {
    let mut tape = Tape::new();
    let p = Tensor::zeros(2, 2);
    let leaf = tape.leaf(&p);
    let y = tape.scale(&leaf, 2.0);
    assert!(matches!(
        tape.backward(&y),
        Err(TensorError::NonScalarLoss { .. })
    ));
    assert!(matches!(
        tape.backward(&Tensor::scalar(1.0)),
        Err(TensorError::UntrackedLoss)
    ));
}

#[test]
fn tape_linearity_sum_of_losses() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let x = rand_vec(&mut rng, 6, -2.0, 2.0);

    let build_losses = |tape: &mut Tape, leaf: &Tensor| {
        let s = tape.sigmoid(leaf);
        let l1 = tape.sum(&s);
        let sq = tape.mul(leaf, leaf).unwrap();
        let l2 = tape.sum(&sq);
        (l1, l2)
    };

    let mut tape = Tape::new();
    let t = Tensor::matrix(2, 3, x.clone()).unwrap();
    let leaf = tape.leaf(&t);
    let (l1, l2) = build_losses(&mut tape, &leaf);
    let total = tape.add(&l1, &l2).unwrap();
    let g_total = tape.backward(&total).unwrap().wrt_or_zeros(&leaf);
    let g1 = tape.backward(&l1).unwrap().wrt_or_zeros(&leaf);
    let g2 = tape.backward(&l2).unwrap().wrt_or_zeros(&leaf);
    for i in 0..x.len() {
        assert!((g_total[i] - (g1[i] + g2[i])).abs() < 1e-12);
    }
}

#[test]
fn detach_blocks_gradient_flow() {
    let (_, g) = tape_grad(&[1.0, 2.0], (1, 2), |tape, leaf| {
        let d = leaf.detach();
        let prod = tape.mul(leaf, &d).unwrap(); // x·const(x)
        tape.sum(&prod)
    });
    // with the second factor detached, d(sum x·c)/dx = c = x
    assert_eq!(g, vec![1.0, 2.0]);
}

#[test]
fn untracked_inputs_record_nothing() {
    let mut tape = Tape::new();
    let a = Tensor::zeros(4, 4);
    let b = Tensor::zeros(4, 4);
    let c = tape.matmul(&a, &b).unwrap();
    assert!(!c.is_tracked());
    assert!(tape.is_empty());
}

#[test]
fn forward_and_gradients_are_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let x = rand_vec(&mut rng, 20, -2.0, 2.0);
        let (loss, g) = tape_grad(&x, (4, 5), |tape, leaf| {
            let s = tape.row_softmax(leaf, None).unwrap();
            let e = tape.elu(&s);
            let r = tape.row_abs_sum(&e).unwrap();
            tape.sum(&r)
        });
        (loss, g)
    };
    let (l1, g1) = run();
    let (l2, g2) = run();
    assert_eq!(l1.to_bits(), l2.to_bits());
    assert_eq!(g1.len(), g2.len());
    for (a, b) in g1.iter().zip(g2.iter()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

// ── finite-difference sweep over every differentiable op ──────────────

#[test]
fn gradient_check_every_operation() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let x34 = rand_vec(&mut rng, 12, -2.0, 2.0);
    let x33 = rand_vec(&mut rng, 9, -2.0, 2.0);
    let pos = rand_vec(&mut rng, 9, 0.2, 2.0);
    // keep |x| away from the L1 kink so central differences stay valid
    let off_zero: Vec<f64> = x33.iter().map(|&v| if v.abs() < 0.1 { v + 0.3 } else { v }).collect();
    let col = rand_vec(&mut rng, 3, -2.0, 2.0);
    let weights = Tensor::matrix(3, 4, rand_vec(&mut rng, 12, -1.0, 1.0)).unwrap();
    let wsq = Tensor::matrix(3, 3, rand_vec(&mut rng, 9, -1.0, 1.0)).unwrap();

    let wsum = |tape: &mut Tape, t: &Tensor, w: &Tensor| {
        let p = tape.mul(t, w).unwrap();
        tape.sum(&p)
    };

    check_gradient("matmul_lhs", &x34, (3, 4), |tape, leaf| {
        let other = Tensor::matrix(4, 3, (0..12).map(|i| 0.1 * i as f64).collect()).unwrap();
        let c = tape.matmul(leaf, &other).unwrap();
        wsum(tape, &c, &wsq)
    });
    check_gradient("matmul_rhs", &x34, (4, 3), |tape, leaf| {
        let other = Tensor::matrix(3, 4, (0..12).map(|i| 0.2 * i as f64 - 1.0).collect()).unwrap();
        let c = tape.matmul(&other, leaf).unwrap();
        wsum(tape, &c, &wsq)
    });
    check_gradient("add", &x33, (3, 3), |tape, leaf| {
        let c = tape.add(leaf, &wsq).unwrap();
        wsum(tape, &c, &wsq)
    });
    check_gradient("sub", &x33, (3, 3), |tape, leaf| {
        let c = tape.sub(&wsq, leaf).unwrap();
        wsum(tape, &c, &wsq)
    });
    check_gradient("mul", &x33, (3, 3), |tape, leaf| {
        let c = tape.mul(leaf, &wsq).unwrap();
        wsum(tape, &c, &wsq)
    });
    check_gradient("scale", &x33, (3, 3), |tape, leaf| {
        let c = tape.scale(leaf, -1.7);
        wsum(tape, &c, &wsq)
    });
    check_gradient("transpose", &x34, (3, 4), |tape, leaf| {
        let c = tape.transpose(leaf).unwrap();
        let w = Tensor::matrix(4, 3, (0..12).map(|i| (i as f64).sin()).collect()).unwrap();
        wsum(tape, &c, &w)
    });
    check_gradient("row_softmax", &x34, (3, 4), |tape, leaf| {
        let c = tape.row_softmax(leaf, None).unwrap();
        wsum(tape, &c, &weights)
    });
    let mask = vec![
        true, false, true, true, true, true, false, true, true, true, true, false,
    ];
    check_gradient("row_softmax_masked", &x34, (3, 4), |tape, leaf| {
        let c = tape.row_softmax(leaf, Some(&mask)).unwrap();
        wsum(tape, &c, &weights)
    });
    check_gradient("leaky_relu", &off_zero, (3, 3), |tape, leaf| {
        let c = tape.leaky_relu(leaf, 0.2).unwrap();
        wsum(tape, &c, &wsq)
    });
    check_gradient("elu", &off_zero, (3, 3), |tape, leaf| {
        let c = tape.elu(leaf);
        wsum(tape, &c, &wsq)
    });
    check_gradient("sigmoid_sweep", &x33, (3, 3), |tape, leaf| {
        let c = tape.sigmoid(leaf);
        wsum(tape, &c, &wsq)
    });
    check_gradient("exp", &x33, (3, 3), |tape, leaf| {
        let c = tape.exp(leaf);
        wsum(tape, &c, &wsq)
    });
    check_gradient("ln", &pos, (3, 3), |tape, leaf| {
        let c = tape.ln(leaf);
        wsum(tape, &c, &wsq)
    });
    check_gradient("sum", &x33, (3, 3), |tape, leaf| tape.sum(leaf));
    check_gradient("row_sum", &x34, (3, 4), |tape, leaf| {
        let c = tape.row_sum(leaf).unwrap();
        let w = Tensor::column(vec![0.3, -1.1, 0.9]);
        wsum(tape, &c, &w)
    });
    check_gradient("abs_sum", &off_zero, (3, 3), |tape, leaf| tape.abs_sum(leaf));
    check_gradient("row_abs_sum", &off_zero, (3, 3), |tape, leaf| {
        let c = tape.row_abs_sum(leaf).unwrap();
        let w = Tensor::column(vec![1.0, -0.5, 2.0]);
        wsum(tape, &c, &w)
    });
    check_gradient("concat_cols", &x33, (3, 3), |tape, leaf| {
        let other = Tensor::matrix(3, 2, (0..6).map(|i| i as f64 * 0.4).collect()).unwrap();
        let c = tape.concat_cols(&[leaf, &other]).unwrap();
        let w = Tensor::matrix(3, 5, (0..15).map(|i| (i as f64 * 0.7).cos()).collect()).unwrap();
        wsum(tape, &c, &w)
    });
    check_gradient("gather_rows", &x34, (3, 4), |tape, leaf| {
        let c = tape.gather_rows(leaf, &[2, 0, 2]).unwrap();
        let w = Tensor::matrix(3, 4, (0..12).map(|i| 0.05 * i as f64 - 0.2).collect()).unwrap();
        wsum(tape, &c, &w)
    });
    check_gradient("outer_sum", &col, (3, 1), |tape, leaf| {
        let other = Tensor::column(vec![0.2, -0.8, 1.4]);
        let c = tape.outer_sum(leaf, &other).unwrap();
        wsum(tape, &c, &wsq)
    });
    check_gradient("add_row", &x34, (3, 4), |tape, leaf| {
        let b = Tensor::matrix(1, 4, vec![0.1, -0.2, 0.3, -0.4]).unwrap();
        let c = tape.add_row(leaf, &b).unwrap();
        wsum(tape, &c, &weights)
    });
    check_gradient("row_l2_normalize", &off_zero, (3, 3), |tape, leaf| {
        let c = tape.row_l2_normalize(leaf).unwrap();
        wsum(tape, &c, &wsq)
    });
    check_gradient("diag", &x33, (3, 3), |tape, leaf| {
        let c = tape.diag(leaf).unwrap();
        let w = Tensor::column(vec![0.7, -1.3, 0.5]);
        wsum(tape, &c, &w)
    });
}

#[test]
fn leaky_relu_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let xs: Vec<f64> = (0..8)
        .map(|_| {
            let v: f64 = rng.gen_range(-2.0..2.0);
            if v.abs() < 0.05 {
                v + 0.5
            } else {
                v
            }
        })
        .collect();
    check_gradient("leaky_relu_random", &xs, (2, 4), |tape, leaf| {
        let c = tape.leaky_relu(leaf, 0.2).unwrap();
        tape.sum(&c)
    });
}
