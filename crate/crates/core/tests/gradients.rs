mod common;

use common::*;
use crosswise_core::nn::{Mode, ModelConfig, ModelParams, Tensor2};

#[test]
fn backward_matches_central_differences() {
    let check = finite_difference_check(21, 200, 1e-5);
    println!("{} parameters, max relative error {:e} at {}", check.checked, check.max_rel_error, check.worst);
    assert!(check.checked >= 200);
    assert_eq!(check.tensors_covered, check.tensors_total);
    assert!(check.max_rel_error <= 1e-4, "max relative error {:e} at {}", check.max_rel_error, check.worst);
}

#[test]
fn parameters_fed_only_zeros_get_zero_gradient() {
    let mut r = rng(4);
    let cfg = ModelConfig::default();
    let mut p = ModelParams::<f64>::init(cfg.clone(), &mut r).unwrap();
    for layer in &mut p.gru {
        for b in [&mut layer.b_z, &mut layer.b_r, &mut layer.b_h] {
            b.fill(0.0);
        }
    }
    let inputs = vec![Tensor2::<f64>::zeros(cfg.seq_len, cfg.d_in); 2];
    let mut mr = rng(1);
    let (_, cache) = p.forward(&inputs, Mode::Train(&mut mr)).unwrap();
    let (_, g) = p.backward(&cache, &[1.0, 1.0]).unwrap();
    // zero inputs and zero biases keep every GRU state at zero, so nothing
    // upstream of the encoder's first layer norm can receive gradient
    for layer in &g.gru {
        for t in [&layer.w_z, &layer.w_r, &layer.w_h, &layer.u_z, &layer.u_r, &layer.u_h] {
            assert!(t.data().iter().all(|&v| v == 0.0));
        }
    }
    for t in [&g.encoder[0].w_q, &g.encoder[0].w_k, &g.encoder[0].w_v] {
        assert!(t.data().iter().all(|&v| v == 0.0));
    }
    assert!(g.fc2_b.data()[0] != 0.0);
}
