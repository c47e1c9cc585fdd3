use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f32) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-scale..scale))
}

/// Central differences of an f64 reference objective.
fn finite_diff(x: &[f64], h: f64, f: &dyn Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn assert_grad_close(analytic: &[f32], numeric: &[f64], what: &str) {
    assert_eq!(analytic.len(), numeric.len(), "{what}");
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let err = (a as f64 - n).abs() / (a as f64).abs().max(1.0);
        assert!(err < 1e-3, "{what}[{i}]: analytic {a} vs numeric {n}");
    }
}

fn to64(x: &[f32]) -> Vec<f64> {
    x.iter().map(|&v| v as f64).collect()
}

fn weighted(out: &[f64], w: &[f32]) -> f64 {
    out.iter().zip(w).map(|(o, &w)| o * w as f64).sum()
}

/// Appends `sum(out * w)` to the tape and returns the loss node.
fn weighted_loss(tape: &mut Tape, out: Var, w: &[f32]) -> Var {
    let wv = tape.constant(tape.shape(out).to_vec(), w.to_vec());
    let prod = tape.mul(out, wv).unwrap();
    tape.sum(prod)
}

// ---- 64-bit reference forwards ---------------------------------------------

fn ref_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                c[i * n + j] += a[i * k + p] * b[p * n + j];
            }
        }
    }
    c
}

fn ref_gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

fn ref_softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn ref_layer_norm(x: &[f64], g: &[f64], b: &[f64], eps: f64) -> Vec<f64> {
    let d = g.len();
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks(d) {
        let mu = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / d as f64;
        for i in 0..d {
            out.push((row[i] - mu) / (var + eps).sqrt() * g[i] + b[i]);
        }
    }
    out
}

// ---- matmul ------------------------------------------------------------------

#[test]
fn matmul_identity_and_scalar() {
    let mut tape = Tape::new();
    let i2 = tape.constant(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]);
    let b = tape.constant(vec![2, 2], vec![3.0, 4.0, 5.0, 6.0]);
    let c = tape.matmul(i2, b).unwrap();
    assert_eq!(tape.value(c), &[3.0, 4.0, 5.0, 6.0]);

    let a = tape.constant(vec![1, 1], vec![2.0]);
    let b = tape.constant(vec![1, 1], vec![3.0]);
    let c = tape.matmul(a, b).unwrap();
    assert_eq!(tape.value(c), &[6.0]);
}

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = rand_tensor(&mut rng, &[4, 5], 1.0);
    let b = rand_tensor(&mut rng, &[5, 3], 1.0);
    let mut tape = Tape::new();
    let (va, vb) = (tape.leaf(&a), tape.leaf(&b));
    let c = tape.matmul(va, vb).unwrap();
    let want = ref_matmul(&to64(a.data()), &to64(b.data()), 4, 5, 3);
    for (got, want) in tape.value(c).iter().zip(&want) {
        assert!((*got as f64 - want).abs() < 1e-5);
    }
}

#[test]
fn matmul_shape_error_names_both_shapes() {
    let mut tape = Tape::new();
    let a = tape.constant(vec![2, 3], vec![0.0; 6]);
    let b = tape.constant(vec![2, 3], vec![0.0; 6]);
    let err = tape.matmul(a, b).unwrap_err().to_string();
    assert!(err.contains("[2, 3]") && err.contains("matmul"), "{err}");
}

#[test]
fn matmul_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (m, k, n) = (3, 4, 5);
    let a = rand_tensor(&mut rng, &[m, k], 1.0).trainable();
    let b = rand_tensor(&mut rng, &[k, n], 1.0).trainable();
    let w = rand_tensor(&mut rng, &[m, n], 1.0);
    let mut tape = Tape::new();
    let (va, vb) = (tape.leaf(&a), tape.leaf(&b));
    let c = tape.matmul(va, vb).unwrap();
    let loss = weighted_loss(&mut tape, c, w.data());
    let grads = tape.backward(loss).unwrap();

    let b64 = to64(b.data());
    let a64 = to64(a.data());
    let fa = finite_diff(&a64, 1e-4, &|x| weighted(&ref_matmul(x, &b64, m, k, n), w.data()));
    let fb = finite_diff(&b64, 1e-4, &|x| weighted(&ref_matmul(&a64, x, m, k, n), w.data()));
    assert_grad_close(grads.of(va).unwrap(), &fa, "dA");
    assert_grad_close(grads.of(vb).unwrap(), &fb, "dB");
}

#[test]
fn matmul_nt_and_batched_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (g, m, k, p) = (2, 3, 4, 5);
    let a = rand_tensor(&mut rng, &[g, m, k], 1.0).trainable();
    let bt = rand_tensor(&mut rng, &[g, p, k], 1.0).trainable();
    let bn = rand_tensor(&mut rng, &[g, k, p], 1.0).trainable();
    let w = rand_tensor(&mut rng, &[g, m, p], 1.0);

    let reference = |a: &[f64], b: &[f64], trans: bool| -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..g {
            let ai = &a[i * m * k..(i + 1) * m * k];
            let bi = &b[i * k * p..(i + 1) * k * p];
            let bi: Vec<f64> = if trans {
                // [p×k] -> [k×p]
                (0..k * p).map(|idx| bi[(idx % p) * k + idx / p]).collect()
            } else {
                bi.to_vec()
            };
            out.extend(ref_matmul(ai, &bi, m, k, p));
        }
        out
    };

    for (b, trans) in [(&bt, true), (&bn, false)] {
        let mut tape = Tape::new();
        let (va, vb) = (tape.leaf(&a), tape.leaf(b));
        let c = tape.batch_matmul(va, vb, trans).unwrap();
        let want = reference(&to64(a.data()), &to64(b.data()), trans);
        for (x, y) in tape.value(c).iter().zip(&want) {
            assert!((*x as f64 - y).abs() < 1e-5);
        }
        let loss = weighted_loss(&mut tape, c, w.data());
        let grads = tape.backward(loss).unwrap();
        let (a64, b64) = (to64(a.data()), to64(b.data()));
        let fa = finite_diff(&a64, 1e-4, &|x| weighted(&reference(x, &b64, trans), w.data()));
        let fb = finite_diff(&b64, 1e-4, &|x| weighted(&reference(&a64, x, trans), w.data()));
        assert_grad_close(grads.of(va).unwrap(), &fa, "batched dA");
        assert_grad_close(grads.of(vb).unwrap(), &fb, "batched dB");
    }

    // a · wᵀ with a 2-D weight
    let x = rand_tensor(&mut rng, &[3, 4], 1.0).trainable();
    let wt = rand_tensor(&mut rng, &[2, 4], 1.0).trainable();
    let w2 = rand_tensor(&mut rng, &[3, 2], 1.0);
    let mut tape = Tape::new();
    let (vx, vw) = (tape.leaf(&x), tape.leaf(&wt));
    let z = tape.matmul_nt(vx, vw).unwrap();
    let loss = weighted_loss(&mut tape, z, w2.data());
    let grads = tape.backward(loss).unwrap();
    let nt = |x: &[f64], w: &[f64]| -> Vec<f64> {
        let wt: Vec<f64> = (0..8).map(|idx| w[(idx % 2) * 4 + idx / 2]).collect();
        ref_matmul(x, &wt, 3, 4, 2)
    };
    let (x64, w64) = (to64(x.data()), to64(wt.data()));
    assert_grad_close(grads.of(vx).unwrap(), &finite_diff(&x64, 1e-4, &|v| weighted(&nt(v, &w64), w2.data())), "nt dX");
    assert_grad_close(grads.of(vw).unwrap(), &finite_diff(&w64, 1e-4, &|v| weighted(&nt(&x64, v), w2.data())), "nt dW");
}

// ---- gelu ----------------------------------------------------------------------

#[test]
fn gelu_values() {
    assert_eq!(gelu(0.0), 0.0);
    // 64-bit evaluation of the tanh form at 1.0 gives 0.841191990...
    assert!((ref_gelu(1.0) - 0.841_192).abs() < 1e-6);
    assert!((gelu(1.0) - 0.84119).abs() < 1e-5);
    assert!((gelu(10.0) - 10.0).abs() < 1e-6);
}

#[test]
fn gelu_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = rand_tensor(&mut rng, &[17], 3.0).trainable();
    let w = rand_tensor(&mut rng, &[17], 1.0);
    let mut tape = Tape::new();
    let vx = tape.leaf(&x);
    let y = tape.gelu(vx);
    let loss = weighted_loss(&mut tape, y, w.data());
    let grads = tape.backward(loss).unwrap();
    let f = finite_diff(&to64(x.data()), 1e-4, &|v| {
        weighted(&v.iter().map(|&x| ref_gelu(x)).collect::<Vec<_>>(), w.data())
    });
    assert_grad_close(grads.of(vx).unwrap(), &f, "gelu");
}

// ---- softmax -------------------------------------------------------------------

#[test]
fn softmax_values() {
    let mut tape = Tape::new();
    let x = tape.constant(vec![2], vec![0.0, 0.0]);
    let y = tape.softmax(x);
    assert_eq!(tape.value(y), &[0.5, 0.5]);

    let x = tape.constant(vec![2], vec![1000.0, 0.0]);
    let y = tape.softmax(x);
    assert_eq!(tape.value(y), &[1.0, 0.0]);

    let x = tape.constant(vec![3], vec![MASK_SENTINEL, 0.5, MASK_SENTINEL]);
    let y = tape.softmax(x);
    assert_eq!(tape.value(y), &[0.0, 1.0, 0.0]);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let v = rand_tensor(&mut rng, &[6], 4.0);
    let x = tape.leaf(&v);
    let y = tape.softmax(x);
    let want = ref_softmax(&to64(v.data()));
    for (a, b) in tape.value(y).iter().zip(&want) {
        assert!((*a as f64 - b).abs() < 1e-7);
    }
    assert!((tape.value(y).iter().sum::<f32>() - 1.0).abs() < 1e-6);
}

#[test]
fn softmax_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = rand_tensor(&mut rng, &[3, 5], 2.0).trainable();
    let w = rand_tensor(&mut rng, &[3, 5], 1.0);
    let mut tape = Tape::new();
    let vx = tape.leaf(&x);
    let y = tape.softmax(vx);
    let loss = weighted_loss(&mut tape, y, w.data());
    let grads = tape.backward(loss).unwrap();
    let f = finite_diff(&to64(x.data()), 1e-5, &|v| {
        let out: Vec<f64> = v.chunks(5).flat_map(ref_softmax).collect();
        weighted(&out, w.data())
    });
    assert_grad_close(grads.of(vx).unwrap(), &f, "softmax");
}

// ---- layer norm ----------------------------------------------------------------

#[test]
fn layer_norm_values() {
    let mut tape = Tape::new();
    let ones = tape.constant(vec![2], vec![1.0, 1.0]);
    let zeros = tape.constant(vec![2], vec![0.0, 0.0]);
    let x = tape.constant(vec![2], vec![5.0, 5.0]);
    let y = tape.layer_norm(x, ones, zeros, 1e-5).unwrap();
    assert_eq!(tape.value(y), &[0.0, 0.0]);

    let threes = tape.constant(vec![2], vec![3.0, 3.0]);
    let x = tape.constant(vec![2], vec![0.0, 2.0]);
    let y = tape.layer_norm(x, ones, threes, 0.0).unwrap();
    assert_eq!(tape.value(y), &[2.0, 4.0]);

    let y = tape.layer_norm(x, zeros, threes, 1e-5).unwrap();
    assert_eq!(tape.value(y), &[3.0, 3.0]);
}

#[test]
fn layer_norm_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let d = 6;
    let x = rand_tensor(&mut rng, &[4, d], 2.0).trainable();
    let g = rand_tensor(&mut rng, &[d], 1.5).trainable();
    let b = rand_tensor(&mut rng, &[d], 1.0).trainable();
    let w = rand_tensor(&mut rng, &[4, d], 1.0);
    let eps = 1e-5;
    let mut tape = Tape::new();
    let (vx, vg, vb) = (tape.leaf(&x), tape.leaf(&g), tape.leaf(&b));
    let y = tape.layer_norm(vx, vg, vb, eps as f32).unwrap();
    let loss = weighted_loss(&mut tape, y, w.data());
    let grads = tape.backward(loss).unwrap();
    let (x64, g64, b64) = (to64(x.data()), to64(g.data()), to64(b.data()));
    let ln = |x: &[f64], g: &[f64], b: &[f64]| weighted(&ref_layer_norm(x, g, b, eps), w.data());
    assert_grad_close(grads.of(vx).unwrap(), &finite_diff(&x64, 1e-4, &|v| ln(v, &g64, &b64)), "ln dx");
    assert_grad_close(grads.of(vg).unwrap(), &finite_diff(&g64, 1e-4, &|v| ln(&x64, v, &b64)), "ln dgamma");
    assert_grad_close(grads.of(vb).unwrap(), &finite_diff(&b64, 1e-4, &|v| ln(&x64, &g64, v)), "ln dbeta");
}

// ---- embedding -----------------------------------------------------------------

#[test]
fn embedding_lookup_and_scatter() {
    let table = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap().trainable();
    let mut tape = Tape::new();
    let t = tape.leaf(&table);
    let out = tape.embedding(t, &[1, 0], &[1, 2]).unwrap();
    assert_eq!(tape.shape(out), &[1, 2, 3]);
    assert_eq!(tape.value(out), &[4.0, 5.0, 6.0, 1.0, 2.0, 3.0]);

    let dup = tape.embedding(t, &[0, 0], &[1, 2]).unwrap();
    let w = [1.0, 2.0, 3.0, 10.0, 20.0, 30.0];
    let loss = weighted_loss(&mut tape, dup, &w);
    let grads = tape.backward(loss).unwrap();
    assert_eq!(grads.of(t).unwrap(), &[11.0, 22.0, 33.0, 0.0, 0.0, 0.0]);

    assert!(matches!(tape.embedding(t, &[2], &[1, 1]), Err(Error::Index { index: 2, extent: 2 })));
}

#[test]
fn embedding_matches_copy_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let table = rand_tensor(&mut rng, &[7, 4], 1.0);
    let ids: Vec<usize> = (0..12).map(|_| rng.random_range(0..7)).collect();
    let mut tape = Tape::new();
    let t = tape.leaf(&table);
    let out = tape.embedding(t, &ids, &[3, 4]).unwrap();
    for (pos, &id) in ids.iter().enumerate() {
        for j in 0..4 {
            assert_eq!(tape.value(out)[pos * 4 + j], table.data()[id * 4 + j]);
        }
    }
}

// ---- dropout -------------------------------------------------------------------

#[test]
fn dropout_identity_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut tape = Tape::new();
    let x = tape.constant(vec![4], vec![1.0, 2.0, 3.0, 4.0]);
    assert_eq!(tape.dropout(x, 0.0, Some(&mut rng)).unwrap(), x);
    assert_eq!(tape.dropout::<ChaCha8Rng>(x, 0.7, None).unwrap(), x);
    assert!(matches!(tape.dropout(x, 1.0, Some(&mut rng)), Err(Error::Config(_))));
}

#[test]
fn dropout_statistics_and_reproducibility() {
    let n = 100_000;
    let ones = Tensor::full(&[n], 1.0);
    let run = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tape = Tape::new();
        let x = tape.leaf(&ones);
        let y = tape.dropout(x, 0.5, Some(&mut rng)).unwrap();
        tape.value(y).to_vec()
    };
    let out = run(10);
    let survivors = out.iter().filter(|&&v| v != 0.0).count() as f64 / n as f64;
    let mean = out.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
    assert!((survivors - 0.5).abs() < 0.01, "survivor fraction {survivors}");
    assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    assert_eq!(out, run(10));
    assert_ne!(out, run(11));
}

// ---- losses --------------------------------------------------------------------

#[test]
fn cross_entropy_values_and_gradient() {
    let mut tape = Tape::new();
    let z = tape.constant(vec![1, 2], vec![0.0, 0.0]);
    let l = tape.cross_entropy(z, &[0]).unwrap();
    assert!((tape.value(l)[0] - std::f32::consts::LN_2).abs() < 1e-6);
    let z = tape.constant(vec![1, 2], vec![10.0, -10.0]);
    let l = tape.cross_entropy(z, &[0]).unwrap();
    assert!(tape.value(l)[0] < 1e-4);
    assert!(matches!(tape.cross_entropy(z, &[2]), Err(Error::Contract(_))));

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let logits = rand_tensor(&mut rng, &[4, 3], 3.0).trainable();
    let y = [0usize, 2, 1, 2];
    let reference = |z: &[f64]| -> f64 {
        z.chunks(3).zip(&y).map(|(row, &t)| -ref_softmax(row)[t].ln()).sum::<f64>() / 4.0
    };
    let mut tape = Tape::new();
    let vz = tape.leaf(&logits);
    let l = tape.cross_entropy(vz, &y).unwrap();
    assert!((tape.value(l)[0] as f64 - reference(&to64(logits.data()))).abs() < 1e-6);
    let grads = tape.backward(l).unwrap();
    assert_grad_close(grads.of(vz).unwrap(), &finite_diff(&to64(logits.data()), 1e-5, &reference), "ce");
}

#[test]
fn bce_values_and_gradient() {
    let mut tape = Tape::new();
    let z = tape.constant(vec![1, 1], vec![0.0]);
    let l = tape.bce_with_logits(z, &[1.0]).unwrap();
    assert!((tape.value(l)[0] - std::f32::consts::LN_2).abs() < 1e-6);
    let z = tape.constant(vec![1, 1], vec![20.0]);
    let l = tape.bce_with_logits(z, &[1.0]).unwrap();
    assert!(tape.value(l)[0] < 1e-8);
    let z = tape.constant(vec![1, 1], vec![-20.0]);
    let l = tape.bce_with_logits(z, &[1.0]).unwrap();
    assert!((tape.value(l)[0] - 20.0).abs() < 1e-5);
    assert!(matches!(tape.bce_with_logits(z, &[0.5]), Err(Error::Contract(_))));

    for extreme in [1e4f32, -1e4] {
        let z = tape.constant(vec![1, 2], vec![extreme, extreme]);
        let l = tape.bce_with_logits(z, &[0.0, 1.0]).unwrap();
        assert!(tape.value(l)[0].is_finite());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let logits = rand_tensor(&mut rng, &[3, 2], 4.0).trainable();
    let y = [1.0f32, 0.0, 0.0, 0.0, 1.0, 1.0];
    let reference = |z: &[f64]| -> f64 {
        z.iter()
            .zip(&y)
            .map(|(&z, &y)| {
                let p = 1.0 / (1.0 + (-z).exp());
                -(y as f64 * p.ln() + (1.0 - y as f64) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / 3.0
    };
    let mut tape = Tape::new();
    let vz = tape.leaf(&logits);
    let l = tape.bce_with_logits(vz, &y).unwrap();
    assert!((tape.value(l)[0] as f64 - reference(&to64(logits.data()))).abs() < 1e-6);
    let grads = tape.backward(l).unwrap();
    assert_grad_close(grads.of(vz).unwrap(), &finite_diff(&to64(logits.data()), 1e-5, &reference), "bce");
}

// ---- tape mechanics --------------------------------------------------------------

#[test]
fn sum_of_product_gives_input_as_gradient() {
    let w = Tensor::new(vec![3], vec![0.5, -1.0, 2.0]).unwrap().trainable();
    let x = Tensor::new(vec![3], vec![4.0, 5.0, 6.0]).unwrap();
    let mut tape = Tape::new();
    let (vw, vx) = (tape.leaf(&w), tape.leaf(&x));
    let p = tape.mul(vw, vx).unwrap();
    let loss = tape.sum(p);
    let grads = tape.backward(loss).unwrap();
    assert_eq!(grads.of(vw).unwrap(), x.data());
    assert!(grads.of(vx).is_none());
}

#[test]
fn parameter_gradients_accumulate_across_backward_calls() {
    let mut w = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap().trainable();
    let x = Tensor::new(vec![2], vec![3.0, 4.0]).unwrap();
    for _ in 0..2 {
        let grads = {
            let mut tape = Tape::new();
            let vw = tape.param(0, &w);
            let vx = tape.leaf(&x);
            let p = tape.mul(vw, vx).unwrap();
            let loss = tape.sum(p);
            tape.backward(loss).unwrap().params().map(|(_, g)| g.to_vec()).next().unwrap()
        };
        w.accumulate_grad(&grads).unwrap();
    }
    assert_eq!(w.grad().unwrap(), &[6.0, 8.0]);
}

#[test]
fn non_scalar_loss_is_rejected() {
    let mut tape = Tape::new();
    let x = tape.leaf(&Tensor::zeros(&[2]).trainable());
    assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
}

#[test]
fn frozen_subgraph_is_not_differentiated() {
    let frozen = Tensor::full(&[2, 2], 0.5);
    let w = Tensor::full(&[2, 2], 0.25).trainable();
    let x = Tensor::full(&[1, 2], 1.0);
    let mut tape = Tape::new();
    let (vf, vw, vx) = (tape.param(0, &frozen), tape.param(1, &w), tape.leaf(&x));
    let h = tape.matmul(vx, vf).unwrap();
    assert!(!tape.requires_grad(h));
    let y = tape.matmul(h, vw).unwrap();
    assert!(tape.requires_grad(y));
    let loss = tape.sum(y);
    let grads = tape.backward(loss).unwrap();
    let keys: Vec<usize> = grads.params().map(|(k, _)| k).collect();
    assert_eq!(keys, vec![1]);
    assert!(grads.of(h).is_none());
}

#[test]
fn inference_tape_records_no_gradients() {
    let w = Tensor::full(&[2], 1.0).trainable();
    let mut tape = Tape::inference();
    let vw = tape.param(0, &w);
    let s = tape.sum(vw);
    assert!(!tape.requires_grad(s));
    assert_eq!(tape.backward(s).unwrap().params().count(), 0);
}

#[test]
fn attention_plumbing_round_trips_and_masks() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let x = rand_tensor(&mut rng, &[2, 3, 4], 1.0).trainable();
    let mut tape = Tape::new();
    let vx = tape.leaf(&x);
    let split = tape.split_heads(vx, 2).unwrap();
    assert_eq!(tape.shape(split), &[4, 3, 2]);
    let merged = tape.merge_heads(split, 2).unwrap();
    assert_eq!(tape.value(merged), x.data());

    let scores = tape.constant(vec![2, 3, 3], vec![0.0; 18]);
    let masked = tape.attention_mask(scores, &[true, true, false], 2).unwrap();
    let probs = tape.softmax(masked);
    let p = tape.value(probs);
    // row i attends to keys j <= i that are not padding
    assert_eq!(&p[0..3], &[1.0, 0.0, 0.0]);
    assert_eq!(&p[3..6], &[0.5, 0.5, 0.0]);
    assert_eq!(&p[6..9], &[0.5, 0.5, 0.0]);

    let w = rand_tensor(&mut rng, &[2, 3, 4], 1.0);
    let loss = weighted_loss(&mut tape, merged, w.data());
    let grads = tape.backward(loss).unwrap();
    assert_eq!(grads.of(vx).unwrap(), w.data());
}
