//! Straight-line reference implementations on nested `Vec`s, written from the
//! model equations without sharing code with the library.
#![allow(dead_code)]

use crosswise_core::nn::attention::LAYER_NORM_EPS;
use crosswise_core::nn::{EncoderBlock, GruLayer, ModelParams, Tensor2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Mat = Vec<Vec<f64>>;

pub fn mat(t: &Tensor2<f64>) -> Mat {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

pub fn vector(t: &Tensor2<f64>) -> Vec<f64> {
    t.data().to_vec()
}

fn sigma(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `v · M` for a row vector `v`.
fn vm(v: &[f64], m: &Mat) -> Vec<f64> {
    let cols = m[0].len();
    (0..cols).map(|j| v.iter().zip(m).map(|(a, row)| a * row[j]).sum()).collect()
}

fn mm(a: &Mat, b: &Mat) -> Mat {
    a.iter().map(|row| vm(row, b)).collect()
}

pub fn gru_cell(x: &[f64], h: &[f64], p: &GruLayer<f64>) -> Vec<f64> {
    let (wz, wr, wh) = (mat(&p.w_z), mat(&p.w_r), mat(&p.w_h));
    let (uz, ur, uh) = (mat(&p.u_z), mat(&p.u_r), mat(&p.u_h));
    let (bz, br, bh) = (vector(&p.b_z), vector(&p.b_r), vector(&p.b_h));
    let d = h.len();
    let (xz, hz) = (vm(x, &wz), vm(h, &uz));
    let z: Vec<f64> = (0..d).map(|j| sigma(xz[j] + hz[j] + bz[j])).collect();
    let (xr, hr) = (vm(x, &wr), vm(h, &ur));
    let r: Vec<f64> = (0..d).map(|j| sigma(xr[j] + hr[j] + br[j])).collect();
    let rh: Vec<f64> = (0..d).map(|j| r[j] * h[j]).collect();
    let (xh, hh) = (vm(x, &wh), vm(&rh, &uh));
    let cand: Vec<f64> = (0..d).map(|j| (xh[j] + hh[j] + bh[j]).tanh()).collect();
    (0..d).map(|j| (1.0 - z[j]) * h[j] + z[j] * cand[j]).collect()
}

/// Runs every layer from a zero state and returns the top layer's states.
pub fn gru_stack(xs: &Mat, layers: &[GruLayer<f64>]) -> Mat {
    let mut seq = xs.clone();
    for layer in layers {
        let mut h = vec![0.0; layer.u_z.rows()];
        let mut out = Vec::new();
        for x in &seq {
            h = gru_cell(x, &h, layer);
            out.push(h.clone());
        }
        seq = out;
    }
    seq
}

fn layer_norm(x: &[f64], g: &[f64], b: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = (var + LAYER_NORM_EPS).sqrt();
    x.iter().zip(g).zip(b).map(|((v, g), b)| g * (v - mean) / sd + b).collect()
}

/// Per-head softmax matrices of one sequence, `[head][query][key]`.
pub fn attention_weights(h: &Mat, p: &EncoderBlock<f64>) -> Vec<Mat> {
    let q = mm(h, &mat(&p.w_q));
    let k = mm(h, &mat(&p.w_k));
    let d_model = q[0].len();
    let d_k = d_model / p.n_heads;
    let t = h.len();
    (0..p.n_heads)
        .map(|head| {
            let cols = head * d_k..(head + 1) * d_k;
            (0..t)
                .map(|i| {
                    let scores: Vec<f64> = (0..t)
                        .map(|j| cols.clone().map(|c| q[i][c] * k[j][c]).sum::<f64>() / (d_k as f64).sqrt())
                        .collect();
                    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
                    let z: f64 = e.iter().sum();
                    e.iter().map(|v| v / z).collect()
                })
                .collect()
        })
        .collect()
}

/// One post-norm encoder block on a single sequence, inference mode.
pub fn encoder_block(h: &Mat, p: &EncoderBlock<f64>) -> Mat {
    let v = mm(h, &mat(&p.w_v));
    let d_model = v[0].len();
    let d_k = d_model / p.n_heads;
    let t = h.len();
    let weights = attention_weights(h, p);
    let mut concat = vec![vec![0.0; d_model]; t];
    for (head, a) in weights.iter().enumerate() {
        for i in 0..t {
            for c in head * d_k..(head + 1) * d_k {
                concat[i][c] = (0..t).map(|j| a[i][j] * v[j][c]).sum();
            }
        }
    }
    let attn = mm(&concat, &mat(&p.w_o));
    let (g1, b1, g2, b2) = (vector(&p.ln1_g), vector(&p.ln1_b), vector(&p.ln2_g), vector(&p.ln2_b));
    let (w1, fb1, w2, fb2) = (mat(&p.ff_w1), vector(&p.ff_b1), mat(&p.ff_w2), vector(&p.ff_b2));
    (0..t)
        .map(|i| {
            let res: Vec<f64> = (0..d_model).map(|c| attn[i][c] + h[i][c]).collect();
            let y1 = layer_norm(&res, &g1, &b1);
            let hid: Vec<f64> = vm(&y1, &w1).iter().zip(&fb1).map(|(a, b)| (a + b).max(0.0)).collect();
            let ff: Vec<f64> = vm(&hid, &w2).iter().zip(&fb2).map(|(a, b)| a + b).collect();
            let res2: Vec<f64> = (0..d_model).map(|c| ff[c] + y1[c]).collect();
            layer_norm(&res2, &g2, &b2)
        })
        .collect()
}

/// Whole network, mean pooling, inference mode: returns `p_B`.
pub fn model_forward(xs: &Mat, p: &ModelParams<f64>) -> f64 {
    let mut h = gru_stack(xs, &p.gru);
    for block in &p.encoder {
        h = encoder_block(&h, block);
    }
    let t = h.len() as f64;
    let pooled: Vec<f64> = (0..h[0].len()).map(|c| h.iter().map(|row| row[c]).sum::<f64>() / t).collect();
    let hid: Vec<f64> = vm(&pooled, &mat(&p.fc1_w)).iter().zip(p.fc1_b.data()).map(|(a, b)| (a + b).max(0.0)).collect();
    let logit = vm(&hid, &mat(&p.fc2_w))[0] + p.fc2_b.data()[0];
    sigma(logit)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Overwrites every tensor, gains and biases included, with uniform values in ±`scale`.
pub fn randomize(p: &mut ModelParams<f64>, scale: f64, rng: &mut ChaCha8Rng) {
    for (_, t) in p.named_tensors_mut() {
        for v in t.data_mut() {
            *v = rng.random_range(-scale..scale);
        }
    }
}

pub fn random_mat(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Mat {
    (0..rows).map(|_| (0..cols).map(|_| rng.random_range(-scale..scale)).collect()).collect()
}

pub fn tensor(m: &Mat) -> Tensor2<f64> {
    Tensor2::from_fn(m.len(), m[0].len(), |r, c| m[r][c])
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub struct GradCheck {
    pub checked: usize,
    pub tensors_covered: usize,
    pub tensors_total: usize,
    pub max_rel_error: f64,
    pub worst: String,
}

/// Central-difference check of `backward` on the reference-size network in
/// training mode (dropout masks replayed from a fixed seed).
pub fn finite_difference_check(seed: u64, samples: usize, eps: f64) -> GradCheck {
    use crosswise_core::nn::{Mode, ModelConfig};
    // relative error is measured against max(|analytic|, |numeric|, FLOOR)
    const FLOOR: f64 = 1e-6;
    let mut r = rng(seed);
    let cfg = ModelConfig::default();
    let mut p = ModelParams::<f64>::init(cfg.clone(), &mut r).unwrap();
    for (name, t) in p.named_tensors_mut() {
        if name.contains("b_") || name.ends_with("_b") || name.contains("ln") {
            for v in t.data_mut() {
                *v += r.random_range(-0.1..0.1);
            }
        }
    }
    let batch = 3;
    let inputs: Vec<Tensor2<f64>> = (0..batch).map(|_| tensor(&random_mat(cfg.seq_len, cfg.d_in, 1.0, &mut r))).collect();
    let labels = vec![0.0, 1.0, 1.0];
    let mask_seed = seed ^ 0x5eed;
    let loss = |q: &ModelParams<f64>| {
        let mut mr = rng(mask_seed);
        let (_, cache) = q.forward(&inputs, Mode::Train(&mut mr)).unwrap();
        ModelParams::loss(&cache, &labels)
    };
    let mut mr = rng(mask_seed);
    let (_, cache) = p.forward(&inputs, Mode::Train(&mut mr)).unwrap();
    let (_, grads) = p.backward(&cache, &labels).unwrap();
    let analytic: Vec<(String, Vec<f64>)> = grads.named_tensors().into_iter().map(|(n, t)| (n, t.data().to_vec())).collect();

    let n_tensors = analytic.len();
    let mut picks: Vec<(usize, usize)> = (0..n_tensors).map(|ti| (ti, r.random_range(0..analytic[ti].1.len()))).collect();
    while picks.len() < samples {
        let ti = r.random_range(0..n_tensors);
        picks.push((ti, r.random_range(0..analytic[ti].1.len())));
    }
    let mut out = GradCheck { checked: 0, tensors_covered: 0, tensors_total: n_tensors, max_rel_error: 0.0, worst: String::new() };
    let mut seen = vec![false; n_tensors];
    for (ti, ei) in picks {
        let orig = p.named_tensors()[ti].1.data()[ei];
        p.named_tensors_mut()[ti].1.data_mut()[ei] = orig + eps;
        let up = loss(&p);
        p.named_tensors_mut()[ti].1.data_mut()[ei] = orig - eps;
        let down = loss(&p);
        p.named_tensors_mut()[ti].1.data_mut()[ei] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic[ti].1[ei];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
        if rel > out.max_rel_error {
            out.max_rel_error = rel;
            out.worst = format!("{}[{ei}]: analytic {a:e}, numeric {numeric:e}", analytic[ti].0);
        }
        seen[ti] = true;
        out.checked += 1;
    }
    out.tensors_covered = seen.iter().filter(|s| **s).count();
    out
}

/// Checks `metrics` in exact rational arithmetic against hand formulas on
/// `n` random confusion matrices; returns the number that disagreed.
pub fn rational_metric_mismatches(seed: u64, n: usize) -> usize {
    use crosswise_core::eval::{metrics, ConfusionCounts};
    use num_rational::Ratio;
    let mut r = rng(seed);
    let mut bad = 0;
    for _ in 0..n {
        let c = ConfusionCounts::new(r.random_range(1..500), r.random_range(0..500), r.random_range(0..500), r.random_range(0..500));
        let m = metrics::<Ratio<i64>>(&c).unwrap();
        let (tp, tn, fp, fn_) = (c.tp as i64, c.tn as i64, c.fp as i64, c.fn_ as i64);
        let acc = Ratio::new(tp + tn, tp + tn + fp + fn_);
        let p = Ratio::new(tp, tp + fp);
        let rc = Ratio::new(tp, tp + fn_);
        // F1 written as 2TP / (2TP + FP + FN), an algebraically independent form
        let f1 = Ratio::new(2 * tp, 2 * tp + fp + fn_);
        let harmonic = m.precision.zip(m.recall).map(|(p, r)| Ratio::from_integer(2) / (p.recip() + r.recip()));
        if m.accuracy != acc || m.precision != Some(p) || m.recall != Some(rc) || m.f1 != Some(f1) || harmonic != Some(f1) {
            bad += 1;
        }
    }
    bad
}
