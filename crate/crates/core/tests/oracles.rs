mod common;

use common::*;
use crosswise_core::nn::{EncoderBlock, GruLayer, ModelConfig, ModelParams};
use rand::Rng;

const D_IN: usize = 16;
const D_H: usize = 256;
const D_FF: usize = 512;
const T: usize = 5;

fn random_gru(d_in: usize, d_h: usize, rng: &mut rand_chacha::ChaCha8Rng) -> GruLayer<f64> {
    let mut g = GruLayer::xavier(d_in, d_h, rng);
    for b in [&mut g.b_z, &mut g.b_r, &mut g.b_h] {
        for v in b.data_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
    }
    g
}

fn random_block(heads: usize, rng: &mut rand_chacha::ChaCha8Rng) -> EncoderBlock<f64> {
    let mut b = EncoderBlock::xavier(D_H, D_FF, heads, rng).unwrap();
    for t in [&mut b.ff_b1, &mut b.ff_b2, &mut b.ln1_b, &mut b.ln2_b] {
        for v in t.data_mut() {
            *v = rng.random_range(-0.2..0.2);
        }
    }
    for t in [&mut b.ln1_g, &mut b.ln2_g] {
        for v in t.data_mut() {
            *v = rng.random_range(0.5..1.5);
        }
    }
    b
}

#[test]
fn gru_cell_matches_transcription_over_100_seeds() {
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let mut r = rng(seed);
        let layer = random_gru(D_IN, D_H, &mut r);
        let x: Vec<f64> = (0..D_IN).map(|_| r.random_range(-2.0..2.0)).collect();
        let h: Vec<f64> = (0..D_H).map(|_| r.random_range(-1.0..1.0)).collect();
        let got = layer.cell(&x, &h).unwrap();
        let want = gru_cell(&x, &h, &layer);
        worst = worst.max(got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    assert!(worst <= 1e-12, "max deviation {worst:e}");
}

#[test]
fn gru_stack_matches_cell_composition() {
    let mut r = rng(7);
    let cfg = ModelConfig::default();
    let mut p = ModelParams::<f64>::init(cfg, &mut r).unwrap();
    p.gru = vec![random_gru(D_IN, D_H, &mut r), random_gru(D_H, D_H, &mut r)];
    let xs = random_mat(T, D_IN, 1.0, &mut r);
    let got = p.gru_forward(&[tensor(&xs)]).unwrap();
    let want = gru_stack(&xs, &p.gru);
    assert!(max_abs_diff(&mat(&got), &want) <= 1e-12);

    // a single step is one cell per layer from a zero state
    let one = random_mat(1, D_IN, 1.0, &mut r);
    let cfg1 = ModelConfig { seq_len: 1, ..ModelConfig::default() };
    let mut p1 = ModelParams::<f64>::zeros(cfg1).unwrap();
    p1.gru = p.gru.clone();
    let h1 = p1.gru_forward(&[tensor(&one)]).unwrap();
    let zero = vec![0.0; D_H];
    let direct = p.gru[1].cell(&p.gru[0].cell(&one[0], &zero).unwrap(), &zero).unwrap();
    assert!(h1.row(0).iter().zip(&direct).all(|(a, b)| (a - b).abs() <= 1e-12));
}

#[test]
fn gru_output_depends_on_step_order() {
    let mut r = rng(3);
    let p = ModelParams::<f64>::init(ModelConfig::default(), &mut r).unwrap();
    let xs = random_mat(T, D_IN, 1.0, &mut r);
    let mut rev = xs.clone();
    rev.reverse();
    let a = mat(&p.gru_forward(&[tensor(&xs)]).unwrap());
    let b = mat(&p.gru_forward(&[tensor(&rev)]).unwrap());
    assert!(max_abs_diff(&a, &b) > 1e-6);
}

#[test]
fn encoder_matches_transcription_over_100_seeds() {
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let mut r = rng(11 + seed);
        let heads = [1, 2, 4][seed as usize % 3];
        let block = random_block(heads, &mut r);
        // two sequences stacked, to cover the batched layout
        let s0 = random_mat(T, D_H, 1.0, &mut r);
        let s1 = random_mat(T, D_H, 1.0, &mut r);
        let stacked: Mat = s0.iter().chain(&s1).cloned().collect();
        let (y, _) = block.forward(&tensor(&stacked), T, 0.5, None, false).unwrap();
        let y = mat(&y);
        worst = worst.max(max_abs_diff(&y[..T].to_vec(), &encoder_block(&s0, &block)));
        worst = worst.max(max_abs_diff(&y[T..].to_vec(), &encoder_block(&s1, &block)));
    }
    assert!(worst <= 1e-10, "max deviation {worst:e}");
}

#[test]
fn softmax_rows_are_distributions_matching_transcription() {
    for seed in 0..20 {
        let mut r = rng(seed);
        let block = random_block(4, &mut r);
        let h = random_mat(T, D_H, 2.0, &mut r);
        let probs = block.attention_probs(&tensor(&h), T);
        let want = attention_weights(&h, &block);
        assert_eq!(probs.len(), 4);
        for (got, want) in probs.iter().zip(&want) {
            for (i, want_row) in want.iter().enumerate() {
                assert!((got.row(i).iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                for (j, w) in want_row.iter().enumerate() {
                    assert!((got.get(i, j) - w).abs() <= 1e-12);
                }
            }
        }
    }
}

#[test]
fn single_step_attention_passes_value_row_through() {
    let mut r = rng(5);
    let block = random_block(2, &mut r);
    let h = random_mat(1, D_H, 1.0, &mut r);
    let probs = block.attention_probs(&tensor(&h), 1);
    assert!(probs.iter().all(|a| a.get(0, 0) == 1.0));
    // queries and keys cannot matter when each row attends only to itself
    let mut blind = block.clone();
    blind.w_q.fill(0.0);
    blind.w_k.fill(0.0);
    let (y, _) = block.forward(&tensor(&h), 1, 0.0, None, false).unwrap();
    let (y0, _) = blind.forward(&tensor(&h), 1, 0.0, None, false).unwrap();
    assert!(y.max_abs_diff(&y0) <= 1e-12);
    assert!(max_abs_diff(&mat(&y), &encoder_block(&h, &block)) <= 1e-10);
}

#[test]
fn whole_model_matches_transcription() {
    for seed in 0..10 {
        let mut r = rng(100 + seed);
        let cfg = ModelConfig::default().with_heads([1, 2, 4][seed as usize % 3]);
        let p = ModelParams::<f64>::init(cfg, &mut r).unwrap();
        let xs = random_mat(T, D_IN, 1.0, &mut r);
        let got = p.predict_probs(&[tensor(&xs)]).unwrap()[0];
        assert!((got - model_forward(&xs, &p)).abs() <= 1e-12);
        assert!(got > 0.0 && got < 1.0);
    }
}

#[test]
fn scaling_output_weights_pushes_probability_to_the_edge() {
    let mut r = rng(9);
    let p = ModelParams::<f64>::init(ModelConfig::default(), &mut r).unwrap();
    let xs = [tensor(&random_mat(T, D_IN, 1.0, &mut r))];
    let base = p.predict_probs(&xs).unwrap()[0];
    let side = if base >= 0.5 { 1.0 } else { 0.0 };
    let mut last = (base - side).abs();
    for k in [10.0, 100.0] {
        let mut q = p.clone();
        q.fc2_w.scale(k);
        q.fc2_b.scale(k);
        let pk = q.predict_probs(&xs).unwrap()[0];
        assert!((pk - side).abs() < last, "factor {k}: {pk} not closer to {side}");
        last = (pk - side).abs();
    }
}
