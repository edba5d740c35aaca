//! Gradient soundness for every differentiable primitive, checked against
//! central finite differences, plus the tape's contract cases.

use stratum_tensor::check::check_grad;
use stratum_tensor::{RngStream, Tape64, Tensor64, Var};

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;

/// Build a scalar loss from an op under a fixed random readout weighting,
/// so every output coordinate influences the loss.
fn fd_check(
    name: &str,
    shape: &[usize],
    seed: u64,
    build: impl Fn(&mut Tape64, Var) -> Var,
) {
    let mut rng = RngStream::new(seed);
    let n: usize = shape.iter().product();
    let x0: Vec<f64> = (0..n).map(|_| rng.normal_f64()).collect();

    let eval = |data: &[f64]| -> (f64, Option<Vec<f64>>) {
        let mut tape = Tape64::new();
        let x = tape.leaf(Tensor64::from_vec(shape.to_vec(), data.to_vec()).unwrap(), true);
        let y = build(&mut tape, x);
        // Fixed readout: sum(y * w) with w from a fixed stream.
        let mut wrng = RngStream::with_stream(seed ^ 0xabcdef, 1);
        let w: Vec<f64> = (0..tape.value(y).numel()).map(|_| wrng.normal_f64()).collect();
        let w = tape.constant(Tensor64::from_vec(tape.value(y).shape().to_vec(), w).unwrap());
        let prod = tape.mul(y, w).unwrap();
        let loss = tape.sum_all(prod);
        let lv = tape.value(loss).item();
        let grads = tape.backward(loss).unwrap();
        (lv, grads.get(x).map(|g| g.data().to_vec()))
    };

    let (_, analytic) = eval(&x0);
    let analytic = analytic.expect("no gradient on input leaf");
    let report = check_grad(|d| eval(d).0, &x0, &analytic, STEP, &[]);
    assert!(
        report.passes(TOL),
        "{name}: max rel err {} at coord {} (analytic {} vs numeric {})",
        report.max_rel_err,
        report.worst_coord,
        report.analytic_at_worst,
        report.numeric_at_worst
    );
}

#[test]
fn grad_sum_is_ones() {
    let mut tape = Tape64::new();
    let x = tape.leaf(Tensor64::from_vec(vec![3], vec![1.0, -2.0, 0.5]).unwrap(), true);
    let loss = tape.sum_all(x);
    let grads = tape.backward(loss).unwrap();
    assert_eq!(grads.get(x).unwrap().data(), &[1.0, 1.0, 1.0]);
}

#[test]
fn grad_sum_of_squares() {
    let mut tape = Tape64::new();
    let x = tape.leaf(Tensor64::from_vec(vec![2], vec![1.0, 2.0]).unwrap(), true);
    let sq = tape.square(x);
    let loss = tape.sum_all(sq);
    let grads = tape.backward(loss).unwrap();
    assert_eq!(grads.get(x).unwrap().data(), &[2.0, 4.0]);
}

#[test]
fn grad_of_matmul_sum_is_ones_times_b_transpose() {
    let mut tape = Tape64::new();
    let a = tape.leaf(
        Tensor64::from_vec(vec![2, 3], vec![0.5, 1.0, -1.0, 2.0, 0.0, 3.0]).unwrap(),
        true,
    );
    let b = tape.constant(Tensor64::from_vec(vec![3, 2], (1..=6).map(f64::from).collect()).unwrap());
    let c = tape.matmul(a, b).unwrap();
    let loss = tape.sum_all(c);
    let grads = tape.backward(loss).unwrap();
    // d/dA sum(AB) = ones(2x2) x B^T
    let ones = Tensor64::full(&[2, 2], 1.0);
    let expect = ones.matmul(&tape.value(b).transpose2().unwrap()).unwrap();
    assert_eq!(grads.get(a).unwrap().data(), expect.data());
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let mut tape = Tape64::new();
    let x = tape.leaf(Tensor64::zeros(&[2, 2]), true);
    let y = tape.square(x);
    assert!(tape.backward(y).is_err());
}

#[test]
fn softmax_symmetry_and_stability() {
    let mut tape = Tape64::new();
    let x = tape.constant(Tensor64::from_vec(vec![3], vec![0.0, 0.0, 0.0]).unwrap());
    let y = tape.softmax(x, 0).unwrap();
    for &v in tape.value(y).data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
    let x = tape.constant(Tensor64::from_vec(vec![2], vec![1000.0, 0.0]).unwrap());
    let y = tape.softmax(x, 0).unwrap();
    let d = tape.value(y).data();
    assert!((d[0] - 1.0).abs() < 1e-12 && d[1] < 1e-12);
    assert!(d.iter().all(|v| v.is_finite()));
}

#[test]
fn softmax_matches_high_precision_oracle() {
    // softmax([1,2,3]) computed with 50-digit arithmetic.
    let expect = [
        0.090030573170380457998,
        0.24472847105479765247,
        0.66524095577482188953,
    ];
    let mut tape = Tape64::new();
    let x = tape.constant(Tensor64::from_vec(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
    let y = tape.softmax(x, 0).unwrap();
    for (got, want) in tape.value(y).data().iter().zip(expect) {
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}

#[test]
fn softmax_rows_sum_to_one() {
    let mut rng = RngStream::new(31);
    let mut tape = Tape64::new();
    let x = tape.constant(
        Tensor64::from_vec(vec![4, 7], (0..28).map(|_| rng.normal_f64() * 10.0).collect())
            .unwrap(),
    );
    let y = tape.softmax(x, 1).unwrap();
    let sums = tape.value(y).sum_axis(1).unwrap();
    for &s in sums.data() {
        assert!((s - 1.0).abs() < 1e-12);
    }
}

#[test]
fn layer_and_rms_norm_statistics() {
    let mut rng = RngStream::new(8);
    let mut tape = Tape64::new();
    let x = tape.constant(
        Tensor64::from_vec(vec![5, 32], (0..160).map(|_| rng.normal_f64() * 3.0 + 1.0).collect())
            .unwrap(),
    );
    let y = tape.layer_norm(x, 1e-6).unwrap();
    let yv = tape.value(y);
    for r in 0..5 {
        let row = &yv.data()[r * 32..(r + 1) * 32];
        let mean: f64 = row.iter().sum::<f64>() / 32.0;
        let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 32.0;
        assert!(mean.abs() < 1e-6, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 1e-6, "std {}", var.sqrt());
    }
    let z = tape.rms_norm(x, 1e-6).unwrap();
    let zv = tape.value(z);
    for r in 0..5 {
        let row = &zv.data()[r * 32..(r + 1) * 32];
        let rms: f64 = (row.iter().map(|v| v * v).sum::<f64>() / 32.0).sqrt();
        assert!((rms - 1.0).abs() < 1e-6, "rms {rms}");
    }
    // Constant rows normalize to zero through the epsilon guard.
    let c = tape.constant(Tensor64::full(&[1, 8], 5.0));
    let yc = tape.layer_norm(c, 1e-6).unwrap();
    assert!(tape.value(yc).data().iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn fd_elementwise_ops() {
    fd_check("add_bcast", &[2, 3], 1, |t, x| {
        let b = t.constant(Tensor64::from_vec(vec![3], vec![0.3, -0.7, 1.1]).unwrap());
        t.add(x, b).unwrap()
    });
    fd_check("sub_bcast", &[2, 3], 2, |t, x| {
        let b = t.constant(Tensor64::from_vec(vec![2, 1], vec![0.4, -0.2]).unwrap());
        t.sub(b, x).unwrap()
    });
    fd_check("mul_bcast", &[2, 3], 3, |t, x| {
        let b = t.constant(Tensor64::from_vec(vec![3], vec![1.3, -0.5, 2.0]).unwrap());
        t.mul(x, b).unwrap()
    });
    fd_check("gelu", &[8], 4, |t, x| t.gelu(x));
    fd_check("sigmoid", &[8], 5, |t, x| t.sigmoid(x));
    fd_check("tanh", &[8], 6, |t, x| t.tanh(x));
    fd_check("exp", &[8], 7, |t, x| t.exp(x));
    fd_check("square", &[8], 8, |t, x| t.square(x));
    fd_check("scale_neg", &[8], 9, |t, x| {
        let y = t.scale(x, -1.7);
        t.neg(y)
    });
    fd_check("ln_of_positive", &[8], 10, |t, x| {
        // shift into positive territory before ln
        let y = t.square(x);
        let y = t.add_scalar(y, 0.5);
        t.ln(y)
    });
    fd_check("sqrt_of_positive", &[8], 11, |t, x| {
        let y = t.square(x);
        let y = t.add_scalar(y, 0.5);
        t.sqrt(y)
    });
    fd_check("clamp_min", &[16], 12, |t, x| t.clamp_min(x, 0.1));
}

#[test]
fn fd_matmul_and_shape_ops() {
    fd_check("matmul_lhs", &[2, 3, 4], 13, |t, x| {
        let b = t.constant(Tensor64::from_vec(vec![4, 2], (0..8).map(|i| i as f64 * 0.3 - 1.0).collect()).unwrap());
        t.matmul(x, b).unwrap()
    });
    fd_check("matmul_rhs", &[4, 3], 14, |t, x| {
        let a = t.constant(Tensor64::from_vec(vec![2, 2, 4], (0..16).map(|i| (i as f64).sin()).collect()).unwrap());
        t.matmul(a, x).unwrap()
    });
    fd_check("permute", &[2, 3, 4], 15, |t, x| t.permute(x, &[2, 0, 1]).unwrap());
    fd_check("reshape", &[2, 6], 16, |t, x| t.reshape(x, vec![3, 4]).unwrap());
    fd_check("slice", &[3, 8], 17, |t, x| t.slice(x, 1, 2, 4).unwrap());
    fd_check("concat_self", &[2, 3], 18, |t, x| {
        let y = t.square(x);
        t.concat(1, &[x, y]).unwrap()
    });
    fd_check("broadcast", &[1, 4], 19, |t, x| t.broadcast(x, &[3, 4]).unwrap());
    fd_check("index_select", &[5, 3], 20, |t, x| {
        t.index_select(x, 0, vec![4, 0, 0, 2]).unwrap()
    });
    fd_check("index_add", &[4, 3], 21, |t, x| {
        let base = t.constant(Tensor64::zeros(&[6, 3]));
        t.index_add(base, 0, vec![5, 1, 1, 0], x).unwrap()
    });
    fd_check("stack", &[2, 2], 22, |t, x| {
        let y = t.gelu(x);
        t.stack(0, &[x, y]).unwrap()
    });
}

#[test]
fn fd_reductions_and_norms() {
    fd_check("sum_axis", &[3, 4, 2], 23, |t, x| t.sum_axis(x, 1, false).unwrap());
    fd_check("sum_axis_keep", &[3, 4], 24, |t, x| t.sum_axis(x, 0, true).unwrap());
    fd_check("mean_axis", &[3, 4], 25, |t, x| t.mean_axis(x, 1, false).unwrap());
    fd_check("softmax", &[3, 5], 26, |t, x| t.softmax(x, 1).unwrap());
    fd_check("softmax_axis0", &[3, 5], 27, |t, x| t.softmax(x, 0).unwrap());
    fd_check("log_softmax", &[3, 5], 28, |t, x| t.log_softmax(x, 1).unwrap());
    fd_check("layer_norm", &[4, 6], 29, |t, x| t.layer_norm(x, 1e-6).unwrap());
    fd_check("rms_norm", &[4, 6], 30, |t, x| t.rms_norm(x, 1e-6).unwrap());
}

#[test]
fn fd_conv_rope_fft() {
    fd_check("unfold1d", &[2, 3, 12], 31, |t, x| t.unfold1d(x, 5, 2, 2).unwrap());
    fd_check("conv1d", &[2, 2, 16], 32, |t, x| {
        let mut wrng = RngStream::new(77);
        let w = t.constant(
            Tensor64::from_vec(vec![4, 2 * 3], (0..24).map(|_| wrng.normal_f64()).collect())
                .unwrap(),
        );
        let b = t.constant(Tensor64::from_vec(vec![4], vec![0.1, -0.2, 0.3, 0.0]).unwrap());
        t.conv1d(x, w, b, 3, 2, 1).unwrap()
    });
    fd_check("rope", &[2, 5, 8], 33, |t, x| t.rope(x, 10_000.0).unwrap());
    fd_check("rfft_power", &[3, 16], 34, |t, x| t.rfft_power(x).unwrap());
    fd_check("dropout_fixed_mask", &[4, 4], 35, |t, x| {
        let mut rng = RngStream::with_stream(123, 9);
        t.dropout(x, 0.4, true, &mut rng)
    });
}

#[test]
fn rope_attention_logits_are_shift_invariant() {
    // Rotating q and k by positions then dotting depends only on the
    // position difference: shifting both by s leaves logits unchanged.
    let d = 8;
    let t_len = 6;
    let mut rng = RngStream::new(55);
    let q: Vec<f64> = (0..t_len * d).map(|_| rng.normal_f64()).collect();
    let k: Vec<f64> = (0..t_len * d).map(|_| rng.normal_f64()).collect();

    let logits = |shift: usize| -> Vec<f64> {
        let total = t_len + shift;
        let mut tape = Tape64::new();
        // Embed at shifted positions by zero-padding the front.
        let mut qd = vec![0.0; total * d];
        let mut kd = vec![0.0; total * d];
        qd[shift * d..].copy_from_slice(&q);
        kd[shift * d..].copy_from_slice(&k);
        let qv = tape.constant(Tensor64::from_vec(vec![total, d], qd).unwrap());
        let kv = tape.constant(Tensor64::from_vec(vec![total, d], kd).unwrap());
        let qr = tape.rope(qv, 10_000.0).unwrap();
        let kr = tape.rope(kv, 10_000.0).unwrap();
        let kt = tape.transpose_last(kr).unwrap();
        let l = tape.matmul(qr, kt).unwrap();
        let lv = tape.value(l);
        let mut out = Vec::new();
        for i in 0..t_len {
            for j in 0..t_len {
                out.push(lv.at(&[shift + i, shift + j]));
            }
        }
        out
    };

    let base = logits(0);
    let shifted = logits(3);
    for (a, b) in base.iter().zip(&shifted) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn detach_blocks_gradient() {
    let mut tape = Tape64::new();
    let x = tape.leaf(Tensor64::from_vec(vec![2], vec![1.0, 2.0]).unwrap(), true);
    let d = tape.detach(x);
    let y = tape.mul(x, d).unwrap(); // y = x * sg(x); dy/dx = sg(x)
    let loss = tape.sum_all(y);
    let grads = tape.backward(loss).unwrap();
    assert_eq!(grads.get(x).unwrap().data(), &[1.0, 2.0]);
}
