//! The crossing-intention network: stacked GRU, transformer encoder,
//! pooled two-layer classification head with a sigmoid output.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::attention::{EncoderBlock, EncoderCache};
use super::gru::{sigmoid, GruCache, GruLayer};
use super::init::{apply_mask, dropout_mask, xavier_uniform};
use super::tensor::Tensor2;
use crate::error::{Error, Result};
use crate::feat::{FeatureWindow, FEATURE_DIM, LAYOUT_HASH, WINDOW_STEPS};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    Mean,
    Last,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_in: usize,
    pub d_h: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub pooling: Pooling,
    #[serde(default = "default_seq_len")]
    pub seq_len: usize,
    #[serde(default = "default_gru_layers")]
    pub gru_layers: usize,
    #[serde(default = "default_blocks")]
    pub encoder_blocks: usize,
    #[serde(default = "default_head_hidden")]
    pub head_hidden: usize,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
}

fn default_seq_len() -> usize {
    WINDOW_STEPS
}
fn default_gru_layers() -> usize {
    2
}
fn default_blocks() -> usize {
    1
}
fn default_head_hidden() -> usize {
    64
}
fn default_dropout() -> f64 {
    0.5
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_in: FEATURE_DIM,
            d_h: 256,
            n_heads: 2,
            d_ff: 512,
            pooling: Pooling::Mean,
            seq_len: WINDOW_STEPS,
            gru_layers: 2,
            encoder_blocks: 1,
            head_hidden: 64,
            dropout: 0.5,
        }
    }
}

impl ModelConfig {
    pub fn with_heads(mut self, n_heads: usize) -> Self {
        self.n_heads = n_heads;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_in == 0 || self.d_h == 0 || self.d_ff == 0 || self.head_hidden == 0 || self.seq_len == 0 {
            return Err(Error::Config("dimensions must be positive".into()));
        }
        if self.gru_layers == 0 {
            return Err(Error::Config("at least one GRU layer is required".into()));
        }
        if self.n_heads == 0 || !self.d_h.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!("d_h {} is not divisible by {} heads", self.d_h, self.n_heads)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Forward-pass mode. Dropout masks are drawn from the supplied generator in training.
pub enum Mode<'a> {
    Infer,
    Train(&'a mut dyn RngCore),
}

fn reborrow<'s>(rng: &'s mut Option<&mut dyn RngCore>) -> Option<&'s mut dyn RngCore> {
    match rng {
        Some(r) => Some(&mut **r),
        None => None,
    }
}

/// All learnable tensors plus the metadata that travels with them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub layout_hash: String,
    pub gru: Vec<GruLayer<T>>,
    pub encoder: Vec<EncoderBlock<T>>,
    pub fc1_w: Tensor2<T>,
    pub fc1_b: Tensor2<T>,
    pub fc2_w: Tensor2<T>,
    pub fc2_b: Tensor2<T>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    batch: usize,
    gru: Vec<GruCache<T>>,
    /// Dropout masks applied to the outputs of every GRU layer except the last, per step.
    gru_masks: Vec<Vec<Tensor2<T>>>,
    encoder: Vec<EncoderCache<T>>,
    pooled: Tensor2<T>,
    fc1_pre: Tensor2<T>,
    fc1_act: Tensor2<T>,
    head_mask: Option<Tensor2<T>>,
    pub probs: Vec<T>,
    logits: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    #[serde(rename = "track")]
    pub track_id: u64,
    #[serde(rename = "frame")]
    pub end_frame_idx: u64,
    pub p_b: f64,
    pub label: crate::Crosswalk,
}

impl Prediction {
    pub fn new(track_id: u64, p_b: f64, end_frame_idx: u64) -> Self {
        let label = if p_b < 0.5 { crate::Crosswalk::A } else { crate::Crosswalk::B };
        Self { track_id, p_b, label, end_frame_idx }
    }

    /// Probability assigned to `label`.
    pub fn confidence(&self) -> f64 {
        match self.label {
            crate::Crosswalk::A => 1.0 - self.p_b,
            crate::Crosswalk::B => self.p_b,
        }
    }
}

impl<T: Scalar> ModelParams<T> {
    /// All-zero weights; layer-norm gains are one.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut gru = Vec::with_capacity(config.gru_layers);
        for l in 0..config.gru_layers {
            let d_in = if l == 0 { config.d_in } else { config.d_h };
            gru.push(GruLayer::zeros(d_in, config.d_h));
        }
        let encoder = (0..config.encoder_blocks)
            .map(|_| EncoderBlock::zeros(config.d_h, config.d_ff, config.n_heads))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            fc1_w: Tensor2::zeros(config.d_h, config.head_hidden),
            fc1_b: Tensor2::zeros(1, config.head_hidden),
            fc2_w: Tensor2::zeros(config.head_hidden, 1),
            fc2_b: Tensor2::zeros(1, 1),
            layout_hash: LAYOUT_HASH.to_string(),
            gru,
            encoder,
            config,
        })
    }

    /// Xavier-uniform weight matrices, zero biases.
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let d_h = p.config.d_h;
        for (l, layer) in p.gru.iter_mut().enumerate() {
            let d_in = if l == 0 { p.config.d_in } else { d_h };
            *layer = GruLayer::xavier(d_in, d_h, rng);
        }
        for block in p.encoder.iter_mut() {
            *block = EncoderBlock::xavier(d_h, p.config.d_ff, p.config.n_heads, rng)?;
        }
        xavier_uniform(&mut p.fc1_w, rng);
        xavier_uniform(&mut p.fc2_w, rng);
        Ok(p)
    }

    /// Same shapes, every entry zero (gradient accumulator).
    pub fn zeros_like(&self) -> Self {
        let mut g = self.clone();
        for (_, t) in g.named_tensors_mut() {
            t.fill(T::zero());
        }
        g
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor2<T>)> {
        let mut out = Vec::new();
        for (l, layer) in self.gru.iter().enumerate() {
            out.extend(layer.tensors().into_iter().map(|(n, t)| (format!("gru.{l}.{n}"), t)));
        }
        for (b, block) in self.encoder.iter().enumerate() {
            out.extend(block.tensors().into_iter().map(|(n, t)| (format!("encoder.{b}.{n}"), t)));
        }
        out.push(("head.fc1_w".into(), &self.fc1_w));
        out.push(("head.fc1_b".into(), &self.fc1_b));
        out.push(("head.fc2_w".into(), &self.fc2_w));
        out.push(("head.fc2_b".into(), &self.fc2_b));
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor2<T>)> {
        let mut out = Vec::new();
        for (l, layer) in self.gru.iter_mut().enumerate() {
            out.extend(layer.tensors_mut().into_iter().map(|(n, t)| (format!("gru.{l}.{n}"), t)));
        }
        for (b, block) in self.encoder.iter_mut().enumerate() {
            out.extend(block.tensors_mut().into_iter().map(|(n, t)| (format!("encoder.{b}.{n}"), t)));
        }
        out.push(("head.fc1_w".into(), &mut self.fc1_w));
        out.push(("head.fc1_b".into(), &mut self.fc1_b));
        out.push(("head.fc2_w".into(), &mut self.fc2_w));
        out.push(("head.fc2_b".into(), &mut self.fc2_b));
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn check_layout(&self, expected: &str) -> Result<()> {
        if self.layout_hash != expected {
            return Err(Error::LayoutMismatch { expected: expected.to_string(), found: self.layout_hash.clone() });
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let gru = self
            .gru
            .iter()
            .map(|l| GruLayer {
                w_z: l.w_z.cast(),
                w_r: l.w_r.cast(),
                w_h: l.w_h.cast(),
                u_z: l.u_z.cast(),
                u_r: l.u_r.cast(),
                u_h: l.u_h.cast(),
                b_z: l.b_z.cast(),
                b_r: l.b_r.cast(),
                b_h: l.b_h.cast(),
            })
            .collect();
        let encoder = self
            .encoder
            .iter()
            .map(|b| EncoderBlock {
                n_heads: b.n_heads,
                w_q: b.w_q.cast(),
                w_k: b.w_k.cast(),
                w_v: b.w_v.cast(),
                w_o: b.w_o.cast(),
                ff_w1: b.ff_w1.cast(),
                ff_b1: b.ff_b1.cast(),
                ff_w2: b.ff_w2.cast(),
                ff_b2: b.ff_b2.cast(),
                ln1_g: b.ln1_g.cast(),
                ln1_b: b.ln1_b.cast(),
                ln2_g: b.ln2_g.cast(),
                ln2_b: b.ln2_b.cast(),
            })
            .collect();
        ModelParams {
            config: self.config.clone(),
            layout_hash: self.layout_hash.clone(),
            gru,
            encoder,
            fc1_w: self.fc1_w.cast(),
            fc1_b: self.fc1_b.cast(),
            fc2_w: self.fc2_w.cast(),
            fc2_b: self.fc2_b.cast(),
        }
    }

    fn check_inputs(&self, inputs: &[Tensor2<T>]) -> Result<()> {
        if inputs.is_empty() {
            return Err(Error::Shape("empty batch".into()));
        }
        let want = (self.config.seq_len, self.config.d_in);
        if let Some(bad) = inputs.iter().find(|x| x.shape() != want) {
            return Err(Error::Shape(format!(
                "expected {}x{} sequence, got {}x{}",
                want.0,
                want.1,
                bad.rows(),
                bad.cols()
            )));
        }
        Ok(())
    }

    /// Stacked GRU over a batch of `seq_len × d_in` sequences; returns the top
    /// layer's hidden states stacked `sample * seq_len + step`.
    pub fn gru_forward(&self, inputs: &[Tensor2<T>]) -> Result<Tensor2<T>> {
        self.check_inputs(inputs)?;
        Ok(self.run_gru(inputs, None, &mut Vec::new(), &mut Vec::new(), false))
    }

    fn run_gru(
        &self,
        inputs: &[Tensor2<T>],
        mut rng: Option<&mut dyn RngCore>,
        caches: &mut Vec<GruCache<T>>,
        masks: &mut Vec<Vec<Tensor2<T>>>,
        keep_cache: bool,
    ) -> Tensor2<T> {
        let batch = inputs.len();
        let steps = self.config.seq_len;
        let mut xs: Vec<Tensor2<T>> =
            (0..steps).map(|t| Tensor2::from_fn(batch, self.config.d_in, |b, j| inputs[b].get(t, j))).collect();
        let n_layers = self.gru.len();
        for (l, layer) in self.gru.iter().enumerate() {
            let (mut outs, cache) = layer.forward(&xs, keep_cache);
            if let Some(c) = cache {
                caches.push(c);
            }
            if l + 1 < n_layers {
                if let Some(r) = rng.as_deref_mut() {
                    if self.config.dropout > 0.0 {
                        let ms: Vec<Tensor2<T>> =
                            (0..steps).map(|_| dropout_mask(batch, self.config.d_h, self.config.dropout, r)).collect();
                        for (o, m) in outs.iter_mut().zip(&ms) {
                            apply_mask(o, m);
                        }
                        masks.push(ms);
                    }
                }
            }
            xs = outs;
        }
        let d_h = self.config.d_h;
        Tensor2::from_fn(batch * steps, d_h, |r, c| xs[r % steps].get(r / steps, c))
    }

    /// Batched forward pass; returns `p_B` per sample and the activations needed by `backward`.
    pub fn forward(&self, inputs: &[Tensor2<T>], mode: Mode<'_>) -> Result<(Vec<T>, ForwardCache<T>)> {
        self.forward_impl(inputs, mode, true).map(|(p, c)| (p, c.expect("cache requested")))
    }

    /// Inference-mode probabilities without keeping a cache.
    pub fn predict_probs(&self, inputs: &[Tensor2<T>]) -> Result<Vec<T>> {
        self.forward_impl(inputs, Mode::Infer, false).map(|(p, _)| p)
    }

    fn forward_impl(
        &self,
        inputs: &[Tensor2<T>],
        mode: Mode<'_>,
        keep_cache: bool,
    ) -> Result<(Vec<T>, Option<ForwardCache<T>>)> {
        self.check_inputs(inputs)?;
        let mut rng: Option<&mut dyn RngCore> = match mode {
            Mode::Infer => None,
            Mode::Train(r) => Some(r),
        };
        let batch = inputs.len();
        let steps = self.config.seq_len;
        let p_drop = self.config.dropout;

        let mut gru_caches = Vec::new();
        let mut gru_masks = Vec::new();
        let mut h = self.run_gru(inputs, reborrow(&mut rng), &mut gru_caches, &mut gru_masks, keep_cache);

        let mut enc_caches = Vec::new();
        for block in &self.encoder {
            let (y, cache) = block.forward(&h, steps, p_drop, reborrow(&mut rng), keep_cache)?;
            if let Some(c) = cache {
                enc_caches.push(c);
            }
            h = y;
        }

        let d_h = self.config.d_h;
        let pooled = match self.config.pooling {
            Pooling::Mean => {
                let inv = T::one() / T::c(steps as f64);
                Tensor2::from_fn(batch, d_h, |b, c| (0..steps).map(|t| h.get(b * steps + t, c)).sum::<T>() * inv)
            }
            Pooling::Last => Tensor2::from_fn(batch, d_h, |b, c| h.get(b * steps + steps - 1, c)),
        };

        let mut fc1_pre = Tensor2::matmul(&pooled, &self.fc1_w);
        fc1_pre.add_row(self.fc1_b.data());
        let mut fc1_act = fc1_pre.map(|v| v.max(T::zero()));
        let head_mask = match reborrow(&mut rng) {
            Some(r) if p_drop > 0.0 => Some(dropout_mask(batch, self.config.head_hidden, p_drop, r)),
            _ => None,
        };
        if let Some(m) = &head_mask {
            apply_mask(&mut fc1_act, m);
        }
        let mut logit_t = Tensor2::matmul(&fc1_act, &self.fc2_w);
        logit_t.add_row(self.fc2_b.data());
        let logits = logit_t.into_data();
        let probs: Vec<T> = logits.iter().map(|&l| sigmoid(l)).collect();

        let cache = keep_cache.then(|| ForwardCache {
            batch,
            gru: gru_caches,
            gru_masks,
            encoder: enc_caches,
            pooled,
            fc1_pre,
            fc1_act,
            head_mask,
            probs: probs.clone(),
            logits,
        });
        Ok((probs, cache))
    }

    /// Mean binary cross-entropy over the batch, computed from logits.
    pub fn loss(cache: &ForwardCache<T>, labels: &[T]) -> T {
        let n = T::c(cache.batch as f64);
        cache
            .logits
            .iter()
            .zip(labels)
            .map(|(&l, &y)| l.max(T::zero()) - l * y + (T::one() + (-l.abs()).exp()).ln())
            .sum::<T>()
            / n
    }

    /// Exact gradients of the mean binary cross-entropy w.r.t. every parameter.
    pub fn backward(&self, cache: &ForwardCache<T>, labels: &[T]) -> Result<(T, ModelParams<T>)> {
        if labels.len() != cache.batch {
            return Err(Error::Shape(format!("{} labels for a batch of {}", labels.len(), cache.batch)));
        }
        let mut grads = self.zeros_like();
        let batch = cache.batch;
        let steps = self.config.seq_len;
        let d_h = self.config.d_h;
        let inv_n = T::one() / T::c(batch as f64);
        let loss = Self::loss(cache, labels);

        let d_logit =
            Tensor2::from_vec(batch, 1, cache.probs.iter().zip(labels).map(|(&p, &y)| (p - y) * inv_n).collect())?;
        grads.fc2_w.gemm(T::one(), &cache.fc1_act, true, &d_logit, false, T::one());
        d_logit.sum_rows_into(grads.fc2_b.data_mut());
        let mut d_act = Tensor2::matmul_nt(&d_logit, &self.fc2_w);
        if let Some(m) = &cache.head_mask {
            apply_mask(&mut d_act, m);
        }
        for (g, &pre) in d_act.data_mut().iter_mut().zip(cache.fc1_pre.data()) {
            if pre <= T::zero() {
                *g = T::zero();
            }
        }
        grads.fc1_w.gemm(T::one(), &cache.pooled, true, &d_act, false, T::one());
        d_act.sum_rows_into(grads.fc1_b.data_mut());
        let d_pooled = Tensor2::matmul_nt(&d_act, &self.fc1_w);

        let mut d_h_all = Tensor2::zeros(batch * steps, d_h);
        match self.config.pooling {
            Pooling::Mean => {
                let inv = T::one() / T::c(steps as f64);
                for b in 0..batch {
                    for t in 0..steps {
                        for (o, &g) in d_h_all.row_mut(b * steps + t).iter_mut().zip(d_pooled.row(b)) {
                            *o = g * inv;
                        }
                    }
                }
            }
            Pooling::Last => {
                for b in 0..batch {
                    d_h_all.row_mut(b * steps + steps - 1).copy_from_slice(d_pooled.row(b));
                }
            }
        }

        for (i, block) in self.encoder.iter().enumerate().rev() {
            d_h_all = block.backward(&cache.encoder[i], &d_h_all, &mut grads.encoder[i]);
        }

        let mut d_outs: Vec<Tensor2<T>> =
            (0..steps).map(|t| Tensor2::from_fn(batch, d_h, |b, c| d_h_all.get(b * steps + t, c))).collect();
        for l in (0..self.gru.len()).rev() {
            let d_in = self.gru[l].backward(&cache.gru[l], &d_outs, &mut grads.gru[l]);
            if l > 0 {
                d_outs = d_in;
                if let Some(ms) = cache.gru_masks.get(l - 1) {
                    for (d, m) in d_outs.iter_mut().zip(ms) {
                        apply_mask(d, m);
                    }
                }
            }
        }

        for (name, g) in grads.named_tensors() {
            if !g.all_finite() {
                return Err(Error::NonFiniteGradient(name));
            }
        }
        Ok((loss, grads))
    }

    /// Predicts every window; refuses weights built for a different feature layout.
    pub fn predict(&self, windows: &[FeatureWindow]) -> Result<Vec<Prediction>> {
        self.check_layout(LAYOUT_HASH)?;
        if windows.is_empty() {
            return Ok(Vec::new());
        }
        let inputs: Vec<Tensor2<T>> = windows.iter().map(|w| w.to_tensor()).collect();
        let probs = self.predict_probs(&inputs)?;
        Ok(windows
            .iter()
            .zip(probs)
            .map(|(w, p)| Prediction::new(w.track_id, p.f64().clamp(0.0, 1.0), w.end_frame_idx))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> ModelConfig {
        ModelConfig { d_in: 4, d_h: 8, n_heads: 2, d_ff: 12, head_hidden: 6, seq_len: 3, ..ModelConfig::default() }
    }

    fn seqs(n: usize, cfg: &ModelConfig) -> Vec<Tensor2<f64>> {
        (0..n)
            .map(|s| Tensor2::from_fn(cfg.seq_len, cfg.d_in, |t, j| ((s * 31 + t * 7 + j * 3) % 13) as f64 / 6.5 - 1.0))
            .collect()
    }

    #[test]
    fn zero_params_give_even_odds() {
        let p = ModelParams::<f64>::zeros(ModelConfig::default()).unwrap();
        let x = Tensor2::from_fn(5, 16, |t, j| (t + j) as f64);
        assert_eq!(p.predict_probs(&[x]).unwrap(), vec![0.5]);
        assert_eq!(p.gru_forward(&[Tensor2::from_fn(5, 16, |_, _| 1.0)]).unwrap(), Tensor2::zeros(5, 256));
    }

    #[test]
    fn rejects_wrong_window_shape() {
        let p = ModelParams::<f64>::zeros(small()).unwrap();
        assert!(p.predict_probs(&[Tensor2::zeros(2, 4)]).is_err());
        assert!(p.predict_probs(&[Tensor2::zeros(3, 5)]).is_err());
        assert!(p.predict_probs(&[]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(ModelParams::<f64>::zeros(small().with_heads(3)).is_err());
        let bad = ModelConfig { dropout: 1.0, ..small() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn parameter_count_does_not_depend_on_heads() {
        let counts: Vec<usize> = [1, 2, 4]
            .iter()
            .map(|&h| ModelParams::<f32>::zeros(ModelConfig::default().with_heads(h)).unwrap().param_count())
            .collect();
        assert_eq!(counts[0], counts[1]);
        assert_eq!(counts[1], counts[2]);
    }

    #[test]
    fn bce_gradient_vanishes_when_prediction_matches_label() {
        let cfg = small();
        let p = ModelParams::<f64>::zeros(cfg.clone()).unwrap();
        let (probs, cache) = p.forward(&seqs(1, &cfg), Mode::Infer).unwrap();
        assert_eq!(probs[0], 0.5);
        let (_, g) = p.backward(&cache, &[0.5]).unwrap();
        assert_eq!(g.fc2_b.data()[0], 0.0);
        let (_, g) = p.backward(&cache, &[1.0]).unwrap();
        assert_eq!(g.fc2_b.data()[0], -0.5);
    }

    #[test]
    fn train_mode_dropout_is_seed_deterministic() {
        let cfg = small();
        let mut init = ChaCha8Rng::seed_from_u64(1);
        let p = ModelParams::<f64>::init(cfg.clone(), &mut init).unwrap();
        let x = seqs(4, &cfg);
        let run = |seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            p.forward(&x, Mode::Train(&mut r)).unwrap().0
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
        assert_eq!(p.predict_probs(&x).unwrap(), p.predict_probs(&x).unwrap());
    }
}
