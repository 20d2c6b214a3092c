use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random_mat(rows: usize, cols: usize, seed: u64) -> Mat<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mat::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn features(n: usize, d: usize, seed: u64) -> FeatureSequence {
    FeatureSequence::new(random_mat(n, d, seed)).unwrap()
}

fn dm(m: &Mat<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.data())
}

fn row_vec(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, v.len(), v)
}

// Straight-line transcription with nalgebra matrices.
fn oracle_attention(q: &DMatrix<f64>, k: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let s = q * k.transpose() / (q.ncols() as f64).sqrt();
    let mut p = s.map(f64::exp);
    for mut row in p.row_iter_mut() {
        let total = row.sum();
        row /= total;
    }
    p * v
}

fn oracle_norm(x: &DMatrix<f64>, w: &LayerNormWeights) -> DMatrix<f64> {
    let mut out = x.clone();
    for mut row in out.row_iter_mut() {
        let mean = row.mean();
        let var = row.map(|v| (v - mean).powi(2)).mean();
        for (c, v) in row.iter_mut().enumerate() {
            *v = (*v - mean) / (var + 1e-5).sqrt() * w.gain[c] + w.bias[c];
        }
    }
    out
}

fn oracle_attn(
    q: &DMatrix<f64>,
    k: &DMatrix<f64>,
    v: &DMatrix<f64>,
    w: &AttentionWeights,
) -> DMatrix<f64> {
    oracle_attention(&(q * dm(&w.wq)), &(k * dm(&w.wk)), &(v * dm(&w.wv))) * dm(&w.wo)
}

fn oracle_encoder(x: &DMatrix<f64>, w: &EncoderWeights) -> DMatrix<f64> {
    let h = oracle_norm(x, &w.norm1);
    let y = x + oracle_attn(&h, &h, &h, &w.attn);
    let h = oracle_norm(&y, &w.norm2);
    let ones = DMatrix::from_element(x.nrows(), 1, 1.0);
    let pre = h * dm(&w.ffn.w1) + &ones * row_vec(&w.ffn.b1);
    let act = pre.map(|a| {
        0.5 * a * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (a + 0.044715 * a.powi(3))).tanh())
    });
    y + act * dm(&w.ffn.w2) + ones * row_vec(&w.ffn.b2)
}

fn oracle_mmca(f3d: &DMatrix<f64>, f2d: &DMatrix<f64>, w: &MmcaWeights) -> DMatrix<f64> {
    let e3 = oracle_encoder(f3d, &w.encoder_query);
    let e2 = oracle_encoder(f2d, &w.encoder_context);
    let l1 = oracle_attn(&e3, &e2, &e2, &w.cross1);
    let l2 = oracle_attn(&e3, &l1, &e2, &w.cross2);
    f3d + l2
}

fn assert_close(a: &Mat<f64>, b: &DMatrix<f64>, tol: f64) {
    assert_eq!((a.rows(), a.cols()), b.shape());
    for r in 0..a.rows() {
        for c in 0..a.cols() {
            let (x, y) = (a.get(r, c), b[(r, c)]);
            assert!(
                (x - y).abs() <= tol * (1.0 + y.abs()),
                "({r},{c}): {x} vs {y}"
            );
        }
    }
}

#[test]
fn single_key_returns_its_value() {
    let q = random_mat(5, 3, 1);
    let k = random_mat(1, 3, 2);
    let v = random_mat(1, 4, 3);
    let out = scaled_dot_attention(&q, &k, &v).unwrap();
    for r in 0..5 {
        assert_eq!(out.row(r), v.row(0));
    }
}

#[test]
fn zero_queries_average_the_values() {
    let q = Mat::zeros(2, 3);
    let k = random_mat(4, 3, 4);
    let v = random_mat(4, 3, 5);
    let out = scaled_dot_attention(&q, &k, &v).unwrap();
    for r in 0..2 {
        for c in 0..3 {
            let mean = (0..4).map(|j| v.get(j, c)).sum::<f64>() / 4.0;
            assert!((out.get(r, c) - mean).abs() < 1e-15);
        }
    }
}

#[test]
fn attention_matches_direct_formula() {
    let (q, k, v) = (
        random_mat(3, 4, 6),
        random_mat(5, 4, 7),
        random_mat(5, 4, 8),
    );
    let out = scaled_dot_attention(&q, &k, &v).unwrap();
    assert_close(&out, &oracle_attention(&dm(&q), &dm(&k), &dm(&v)), 1e-12);
}

#[test]
fn attention_rejects_bad_shapes() {
    let q = random_mat(3, 4, 1);
    assert!(scaled_dot_attention(&q, &random_mat(5, 3, 2), &random_mat(5, 4, 3)).is_err());
    assert!(scaled_dot_attention(&q, &random_mat(5, 4, 2), &random_mat(4, 4, 3)).is_err());
    assert!(scaled_dot_attention(&q, &Mat::zeros(0, 4), &Mat::zeros(0, 4)).is_err());
}

#[test]
fn extreme_scores_stay_finite() {
    let q = Mat::from_fn(2, 2, |_, _| 1e3);
    let k = Mat::from_fn(3, 2, |r, _| r as f64 * 1e3);
    let v = random_mat(3, 2, 9);
    let mut probe = RowSumProbe::default();
    let out = attention(&q, &k, &v, &mut probe).unwrap();
    assert!(out.data().iter().all(|x| x.is_finite()));
    assert!(probe.max_deviation < 1e-12);
}

#[test]
fn encoder_with_zero_outputs_is_identity() {
    let mut w = init_weights(6, 3).unwrap();
    w.zero_residual_outputs();
    let x = features(5, 6, 10);
    assert_eq!(encoder_block(&x, &w.encoder_query).unwrap(), x);
}

#[test]
fn encoder_matches_oracle_and_keeps_shape() {
    let w = init_weights(8, 4).unwrap();
    let x = features(7, 8, 11);
    let y = encoder_block(&x, &w.encoder_query).unwrap();
    assert_eq!((y.frames(), y.dim()), (7, 8));
    assert_close(
        y.matrix(),
        &oracle_encoder(&dm(x.matrix()), &w.encoder_query),
        1e-12,
    );
    assert_eq!(encoder_block(&x, &w.encoder_query).unwrap(), y);
}

#[test]
fn mmca_matches_step_by_step_oracle() {
    let w = init_weights(8, 12).unwrap();
    let (a, b) = (features(4, 8, 13), features(4, 8, 14));
    let out = mmca_forward(&a, &b, &w).unwrap();
    assert_close(
        out.matrix(),
        &oracle_mmca(&dm(a.matrix()), &dm(b.matrix()), &w),
        1e-12,
    );
}

#[test]
fn mmca_with_zero_layer_two_output_returns_query() {
    let mut w = init_weights(5, 2).unwrap();
    zero(w.cross2.wo.data_mut());
    let (a, b) = (features(3, 5, 15), features(3, 5, 16));
    assert_eq!(mmca_forward(&a, &b, &w).unwrap(), a);
}

#[test]
fn mmca_rejects_mismatched_inputs() {
    let w = init_weights(4, 0).unwrap();
    assert!(mmca_forward(&features(3, 4, 1), &features(2, 4, 2), &w).is_err());
    assert!(mmca_forward(&features(3, 5, 1), &features(3, 5, 2), &w).is_err());
}

#[test]
fn dual_gradient_matches_central_differences() {
    let w = init_weights(4, 21).unwrap();
    let (a, b) = (features(3, 4, 22), features(3, 4, 23));
    let grad = mmca_gradient_query(&a, &b, &w).unwrap();
    let head = |m: &Mat<f64>| -> f64 {
        let f = FeatureSequence::new(m.clone()).unwrap();
        mmca_forward(&f, &b, &w)
            .unwrap()
            .matrix()
            .data()
            .iter()
            .sum()
    };
    let h = 1e-5;
    for k in 0..12 {
        let mut plus = a.matrix().clone();
        plus.data_mut()[k] += h;
        let mut minus = a.matrix().clone();
        minus.data_mut()[k] -= h;
        let fd = (head(&plus) - head(&minus)) / (2.0 * h);
        let g = grad.data()[k];
        assert!(
            (g - fd).abs() <= 1e-4 * g.abs().max(1e-8),
            "entry {k}: {g} vs {fd}"
        );
    }
}

#[test]
fn tumm_composes_three_units() {
    let w = init_tumm_weights(16, 5).unwrap();
    let (l, r, e) = (
        features(6, 16, 30),
        features(6, 16, 31),
        features(6, 16, 32),
    );
    let out = tumm_forward(&l, &r, &e, &w).unwrap();
    let a = oracle_mmca(&dm(l.matrix()), &dm(r.matrix()), &w.lidar_rgb);
    let b = oracle_mmca(&dm(l.matrix()), &dm(e.matrix()), &w.lidar_event);
    assert_close(out.matrix(), &oracle_mmca(&a, &b, &w.fuse), 1e-11);
}

#[test]
fn tumm_residual_chain_returns_lidar() {
    let mut w = init_tumm_weights(6, 8).unwrap();
    w.zero_residual_outputs();
    let (l, r, e) = (features(4, 6, 40), features(4, 6, 41), features(4, 6, 42));
    assert_eq!(tumm_forward(&l, &r, &e, &w).unwrap(), l);
}

#[test]
fn softmax_rows_sum_to_one() {
    let w = init_tumm_weights(16, 9).unwrap();
    let (l, r, e) = (
        features(6, 16, 50),
        features(6, 16, 51),
        features(6, 16, 52),
    );
    let mut probe = RowSumProbe::default();
    tumm_forward_probed(&l, &r, &e, &w, &mut probe).unwrap();
    // three units, each with two encoders and two cross layers
    assert_eq!(probe.calls, 12);
    assert_eq!(probe.rows, 72);
    assert!(probe.max_deviation <= 1e-9);
}

#[test]
fn init_is_seeded() {
    assert_eq!(init_weights(6, 1).unwrap(), init_weights(6, 1).unwrap());
    assert_ne!(init_weights(6, 1).unwrap(), init_weights(6, 2).unwrap());
    let t = init_tumm_weights(4, 3).unwrap();
    assert_ne!(t.lidar_rgb, t.lidar_event);
    assert!(init_weights(0, 1).is_err());
    t.validate().unwrap();
}

#[test]
fn init_statistics() {
    let d = 177;
    let w = init_weights(d, 77).unwrap();
    let entries: Vec<f64> = [
        &w.encoder_query.attn,
        &w.encoder_context.attn,
        &w.cross1,
        &w.cross2,
    ]
    .iter()
    .flat_map(|a| a.matrices().map(|m| m.data().to_vec()))
    .chain(
        [&w.encoder_query.ffn, &w.encoder_context.ffn]
            .iter()
            .flat_map(|f| [f.w1.data().to_vec(), f.w2.data().to_vec()]),
    )
    .flatten()
    .collect();
    let n = entries.len() as f64;
    assert!(n >= 1e6);
    let var = 1.0 / d as f64;
    let mean = entries.iter().sum::<f64>() / n;
    let sample_var = entries.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!(mean.abs() < 3.0 * (var / n).sqrt(), "mean {mean}");
    // variance of the sample variance of a normal is 2 var^2 / (n - 1)
    assert!(
        (sample_var - var).abs() < 3.0 * var * (2.0 / (n - 1.0)).sqrt(),
        "var {sample_var}"
    );
}

#[test]
fn validation_catches_bad_weights() {
    let mut w = init_weights(3, 0).unwrap();
    w.cross1.wk.data_mut()[0] = f64::NAN;
    assert!(w.validate().is_err());
    let mut w = init_weights(3, 0).unwrap();
    w.encoder_context.ffn.b1.pop();
    assert!(w.validate().is_err());
    assert!(FeatureSequence::from_rows(&[vec![1.0, 2.0], vec![1.0]]).is_err());
    assert!(FeatureSequence::from_rows(&[]).is_err());
}
