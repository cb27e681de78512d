//! A desk-scale MC-dropout classifier.
//!
//! Two-layer rectifier MLP with inverted dropout on the hidden layer, the
//! layer right before the output weights. The same masked forward pass is
//! used during SGD training and at prediction time, which is exactly what
//! turns test-time dropout into posterior sampling. Training minimizes
//! cross-entropy, optionally minus `beta` times the predictive entropy
//! (the confidence-penalty objective); all gradients are hand-derived and
//! checked against finite differences in the tests.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::prob::{LogitSampleSet, LogitVector, PROB_FLOOR};

/// Distance of the synthetic blob centers from the origin.
const BLOB_RADIUS: f64 = 2.0;

/// Two-layer MLP with dropout before the output layer.
///
/// Weight layout is row-major: `w1` is `hidden x input`, `w2` is
/// `classes x hidden`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyNet {
    input_dim: usize,
    hidden_dim: usize,
    classes: usize,
    dropout_p: f64,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

/// Per-parameter gradients of the training loss, same layout as [`ToyNet`].
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Seeded Gaussian-blob mixture standing in for a real dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    inputs: Vec<Vec<f64>>,
    labels: Vec<usize>,
    input_dim: usize,
    classes: usize,
}

/// Generator knobs for [`SyntheticDataset::generate`]. `spread` is the
/// per-class Gaussian sigma; larger values overlap the blobs and create
/// genuinely uncertain regions.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobConfig {
    pub n: usize,
    pub input_dim: usize,
    pub classes: usize,
    pub spread: f64,
    pub seed: u64,
}

/// SGD settings. `cp_beta` is the confidence-penalty weight; zero recovers
/// plain cross-entropy training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub cp_beta: f64,
    pub seed: u64,
}

impl ToyNet {
    /// Fresh net with Glorot-uniform weights drawn from a seeded stream.
    pub fn new(
        input_dim: usize,
        hidden_dim: usize,
        classes: usize,
        dropout_p: f64,
        seed: u64,
    ) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 {
            return Err(Error::InvalidConfig(
                "layer dimensions must be positive".into(),
            ));
        }
        if classes < 2 {
            return Err(Error::TooFewClasses(classes));
        }
        check_dropout_p(dropout_p)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lim1 = (6.0 / (input_dim + hidden_dim) as f64).sqrt();
        let lim2 = (6.0 / (hidden_dim + classes) as f64).sqrt();
        let w1 = (0..hidden_dim * input_dim)
            .map(|_| rng.random_range(-lim1..lim1))
            .collect();
        let w2 = (0..classes * hidden_dim)
            .map(|_| rng.random_range(-lim2..lim2))
            .collect();
        Ok(Self {
            input_dim,
            hidden_dim,
            classes,
            dropout_p,
            w1,
            b1: vec![0.0; hidden_dim],
            w2,
            b2: vec![0.0; classes],
        })
    }

    /// Rebuild a net from raw weight arrays (checkpoint loading).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        input_dim: usize,
        hidden_dim: usize,
        classes: usize,
        dropout_p: f64,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: Vec<f64>,
    ) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 {
            return Err(Error::InvalidConfig(
                "layer dimensions must be positive".into(),
            ));
        }
        if classes < 2 {
            return Err(Error::TooFewClasses(classes));
        }
        check_dropout_p(dropout_p)?;
        if w1.len() != hidden_dim * input_dim
            || b1.len() != hidden_dim
            || w2.len() != classes * hidden_dim
            || b2.len() != classes
        {
            return Err(Error::InvalidConfig(
                "weight array lengths do not match dimensions".into(),
            ));
        }
        for (index, &value) in w1.iter().chain(&b1).chain(&w2).chain(&b2).enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFinite { index, value });
            }
        }
        Ok(Self {
            input_dim,
            hidden_dim,
            classes,
            dropout_p,
            w1,
            b1,
            w2,
            b2,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dropout_p(&self) -> f64 {
        self.dropout_p
    }

    pub fn w1(&self) -> &[f64] {
        &self.w1
    }

    pub fn b1(&self) -> &[f64] {
        &self.b1
    }

    pub fn w2(&self) -> &[f64] {
        &self.w2
    }

    pub fn b2(&self) -> &[f64] {
        &self.b2
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::InvalidConfig(format!(
                "input has {} coordinates, net expects {}",
                x.len(),
                self.input_dim
            )));
        }
        for (index, &value) in x.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFinite { index, value });
            }
        }
        Ok(())
    }

    /// Hidden pre-activations `w1 x + b1`.
    fn preactivations(&self, x: &[f64]) -> Vec<f64> {
        affine(&self.w1, &self.b1, x)
    }

    /// Raw forward pass with an explicit dropout mask. Kept units are
    /// scaled by `1/(1-p)` (inverted dropout), so the masked pass is an
    /// unbiased estimate of the deterministic one.
    fn raw_forward(&self, x: &[f64], mask: &[bool]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let a = self.preactivations(x);
        let inv_keep = 1.0 / (1.0 - self.dropout_p);
        let masked_hidden: Vec<f64> = a
            .iter()
            .zip(mask)
            .map(|(&aj, &keep)| if keep { aj.max(0.0) * inv_keep } else { 0.0 })
            .collect();
        let z = affine(&self.w2, &self.b2, &masked_hidden);
        (a, masked_hidden, z)
    }

    /// Draw one dropout mask: each hidden unit kept with probability
    /// `1 - dropout_p`. With `dropout_p == 0` no randomness is consumed.
    pub fn sample_mask<R: Rng>(&self, rng: &mut R) -> Vec<bool> {
        if self.dropout_p == 0.0 {
            return vec![true; self.hidden_dim];
        }
        (0..self.hidden_dim)
            .map(|_| rng.random_bool(1.0 - self.dropout_p))
            .collect()
    }

    /// Forward pass with the given mask, returning validated logits.
    pub fn forward_with_mask(&self, x: &[f64], mask: &[bool]) -> Result<LogitVector> {
        self.check_input(x)?;
        if mask.len() != self.hidden_dim {
            return Err(Error::InvalidConfig(format!(
                "mask has {} entries, net has {} hidden units",
                mask.len(),
                self.hidden_dim
            )));
        }
        let (_, _, z) = self.raw_forward(x, mask);
        LogitVector::new(z)
    }

    /// One stochastic forward pass: sample a mask, then [`Self::forward_with_mask`].
    pub fn forward_stochastic<R: Rng>(&self, x: &[f64], rng: &mut R) -> Result<LogitVector> {
        let mask = self.sample_mask(rng);
        self.forward_with_mask(x, &mask)
    }

    /// Dropout-free forward pass.
    pub fn forward_deterministic(&self, x: &[f64]) -> Result<LogitVector> {
        self.check_input(x)?;
        let a = self.preactivations(x);
        let hidden: Vec<f64> = a.iter().map(|&aj| aj.max(0.0)).collect();
        LogitVector::new(affine(&self.w2, &self.b2, &hidden))
    }

    /// `n_passes` stochastic forward passes with per-pass derived RNG
    /// streams; deterministic given `seed`.
    pub fn mc_predict(
        &self,
        x: &[f64],
        label: usize,
        n_passes: usize,
        seed: u64,
    ) -> Result<LogitSampleSet> {
        if n_passes == 0 {
            return Err(Error::InvalidConfig(
                "mc_predict needs at least one pass".into(),
            ));
        }
        let mut samples = Vec::with_capacity(n_passes);
        for pass in 0..n_passes {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(pass as u64);
            samples.push(self.forward_stochastic(x, &mut rng)?);
        }
        LogitSampleSet::new(samples, label)
    }

    /// Training loss for one sample under a frozen mask:
    /// `-log p_y - beta * H(p)` with `p = softmax(z)`.
    pub fn loss_with_mask(&self, x: &[f64], label: usize, mask: &[bool], beta: f64) -> Result<f64> {
        self.check_input(x)?;
        if label >= self.classes {
            return Err(Error::LabelOutOfRange {
                label,
                classes: self.classes,
            });
        }
        let (_, _, z) = self.raw_forward(x, mask);
        let p = stable_softmax(&z);
        let entropy: f64 = p
            .iter()
            .filter(|&&pc| pc > 0.0)
            .map(|&pc| -pc * pc.ln())
            .sum();
        Ok(-p[label].max(PROB_FLOOR).ln() - beta * entropy)
    }

    /// Analytic gradients of [`Self::loss_with_mask`] for every parameter.
    ///
    /// At the logits the cross-entropy term contributes `p - onehot(y)` and
    /// the entropy penalty contributes `beta * p_k (log p_k + H(p))`; both
    /// are then backpropagated through the dropout scaling and the
    /// rectifier.
    pub fn grads_with_mask(
        &self,
        x: &[f64],
        label: usize,
        mask: &[bool],
        beta: f64,
    ) -> Result<ParamGrads> {
        self.check_input(x)?;
        if label >= self.classes {
            return Err(Error::LabelOutOfRange {
                label,
                classes: self.classes,
            });
        }
        let (a, masked_hidden, z) = self.raw_forward(x, mask);
        let p = stable_softmax(&z);
        let entropy: f64 = p
            .iter()
            .filter(|&&pc| pc > 0.0)
            .map(|&pc| -pc * pc.ln())
            .sum();

        let dz: Vec<f64> = p
            .iter()
            .enumerate()
            .map(|(k, &pk)| {
                let onehot = if k == label { 1.0 } else { 0.0 };
                let ent_term = if pk > 0.0 {
                    pk * (pk.ln() + entropy)
                } else {
                    0.0
                };
                (pk - onehot) + beta * ent_term
            })
            .collect();

        let mut grad_w2 = vec![0.0; self.classes * self.hidden_dim];
        for k in 0..self.classes {
            for j in 0..self.hidden_dim {
                grad_w2[k * self.hidden_dim + j] = dz[k] * masked_hidden[j];
            }
        }
        let grad_b2 = dz.clone();

        let inv_keep = 1.0 / (1.0 - self.dropout_p);
        let mut da = vec![0.0; self.hidden_dim];
        for j in 0..self.hidden_dim {
            if !mask[j] || a[j] <= 0.0 {
                continue;
            }
            let mut acc = 0.0;
            for (k, &dzk) in dz.iter().enumerate() {
                acc += dzk * self.w2[k * self.hidden_dim + j];
            }
            da[j] = acc * inv_keep;
        }

        let mut grad_w1 = vec![0.0; self.hidden_dim * self.input_dim];
        for j in 0..self.hidden_dim {
            for i in 0..self.input_dim {
                grad_w1[j * self.input_dim + i] = da[j] * x[i];
            }
        }
        let grad_b1 = da;

        Ok(ParamGrads {
            w1: grad_w1,
            b1: grad_b1,
            w2: grad_w2,
            b2: grad_b2,
        })
    }

    /// Share of dataset points whose deterministic argmax matches the label.
    pub fn accuracy_deterministic(&self, data: &SyntheticDataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyInput("accuracy needs a nonempty dataset"));
        }
        let mut correct = 0usize;
        for (x, &y) in data.inputs.iter().zip(&data.labels) {
            if self.forward_deterministic(x)?.argmax() == y {
                correct += 1;
            }
        }
        Ok(correct as f64 / data.len() as f64)
    }

    /// Mean cross-entropy of the dropout-free pass over a dataset.
    pub fn mean_nll_deterministic(&self, data: &SyntheticDataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyInput("nll needs a nonempty dataset"));
        }
        let mut total = 0.0;
        for (x, &y) in data.inputs.iter().zip(&data.labels) {
            let z = self.forward_deterministic(x)?;
            let p = stable_softmax(z.values());
            total -= p[y].max(PROB_FLOOR).ln();
        }
        Ok(total / data.len() as f64)
    }
}

fn check_dropout_p(p: f64) -> Result<()> {
    if !p.is_finite() || !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidConfig(format!(
            "dropout probability must be in [0, 1), got {p}"
        )));
    }
    Ok(())
}

/// `weights * input + bias` for a row-major weight matrix.
fn affine(weights: &[f64], bias: &[f64], input: &[f64]) -> Vec<f64> {
    let cols = input.len();
    bias.iter()
        .enumerate()
        .map(|(row, &b)| {
            let w = &weights[row * cols..(row + 1) * cols];
            b + w.iter().zip(input).map(|(wi, xi)| wi * xi).sum::<f64>()
        })
        .collect()
}

/// Max-shifted softmax on a raw slice; NaN propagates so divergence is
/// visible to the caller instead of being masked.
fn stable_softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let denom: f64 = exps.iter().sum();
    for e in &mut exps {
        *e /= denom;
    }
    exps
}

impl SyntheticDataset {
    /// Gaussian blobs with centers evenly spaced on a circle of radius 2 in
    /// the first two coordinates. Labels are assigned round-robin, so class
    /// counts are balanced to within one point.
    pub fn generate(cfg: &BlobConfig) -> Result<Self> {
        if cfg.n == 0 {
            return Err(Error::EmptyInput("dataset size must be positive"));
        }
        if cfg.input_dim == 0 {
            return Err(Error::InvalidConfig(
                "input dimension must be positive".into(),
            ));
        }
        if cfg.classes < 2 {
            return Err(Error::TooFewClasses(cfg.classes));
        }
        if !cfg.spread.is_finite() || cfg.spread < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "spread must be non-negative, got {}",
                cfg.spread
            )));
        }
        let centers: Vec<Vec<f64>> = (0..cfg.classes)
            .map(|c| {
                let angle = 2.0 * std::f64::consts::PI * c as f64 / cfg.classes as f64;
                let mut center = vec![0.0; cfg.input_dim];
                center[0] = BLOB_RADIUS * angle.cos();
                if cfg.input_dim > 1 {
                    center[1] = BLOB_RADIUS * angle.sin();
                }
                center
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let noise = Normal::new(0.0, cfg.spread.max(f64::MIN_POSITIVE)).unwrap();
        let mut inputs = Vec::with_capacity(cfg.n);
        let mut labels = Vec::with_capacity(cfg.n);
        for i in 0..cfg.n {
            let label = i % cfg.classes;
            let point: Vec<f64> = centers[label]
                .iter()
                .map(|&c| {
                    c + if cfg.spread > 0.0 {
                        noise.sample(&mut rng)
                    } else {
                        0.0
                    }
                })
                .collect();
            inputs.push(point);
            labels.push(label);
        }
        Ok(Self {
            inputs,
            labels,
            input_dim: cfg.input_dim,
            classes: cfg.classes,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        // Zero is allowed as the degenerate no-op update.
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if !self.cp_beta.is_finite() || self.cp_beta < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "confidence-penalty weight must be non-negative, got {}",
                self.cp_beta
            )));
        }
        Ok(())
    }
}

/// Minibatch SGD on `NLL - beta * H(p)` with dropout active, returning the
/// trained net. Bit-reproducible given `(seed, config, dataset)`.
pub fn train(net: ToyNet, data: &SyntheticDataset, cfg: &TrainConfig) -> Result<ToyNet> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput("training needs a nonempty dataset"));
    }
    if data.input_dim() != net.input_dim {
        return Err(Error::InvalidConfig(format!(
            "dataset dimension {} does not match net input {}",
            data.input_dim(),
            net.input_dim
        )));
    }
    if data.labels.iter().any(|&y| y >= net.classes) {
        return Err(Error::InvalidConfig(
            "dataset label outside the net's classes".into(),
        ));
    }

    let mut net = net;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut sum = ParamGrads {
                w1: vec![0.0; net.w1.len()],
                b1: vec![0.0; net.b1.len()],
                w2: vec![0.0; net.w2.len()],
                b2: vec![0.0; net.b2.len()],
            };
            let mut batch_loss = 0.0;
            for &idx in batch {
                let x = &data.inputs[idx];
                let y = data.labels[idx];
                let mask = net.sample_mask(&mut rng);
                batch_loss += net.loss_with_mask(x, y, &mask, cfg.cp_beta)?;
                let g = net.grads_with_mask(x, y, &mask, cfg.cp_beta)?;
                accumulate(&mut sum.w1, &g.w1);
                accumulate(&mut sum.b1, &g.b1);
                accumulate(&mut sum.w2, &g.w2);
                accumulate(&mut sum.b2, &g.b2);
            }
            if !batch_loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            let scale = cfg.learning_rate / batch.len() as f64;
            apply_update(&mut net.w1, &sum.w1, scale);
            apply_update(&mut net.b1, &sum.b1, scale);
            apply_update(&mut net.w2, &sum.w2, scale);
            apply_update(&mut net.b2, &sum.b2, scale);
        }
    }
    // A blown-up final state counts as divergence even if every individual
    // batch loss stayed finite.
    if net
        .w1
        .iter()
        .chain(&net.b1)
        .chain(&net.w2)
        .chain(&net.b2)
        .any(|v| !v.is_finite())
    {
        return Err(Error::TrainingDiverged {
            epoch: cfg.epochs - 1,
        });
    }
    Ok(net)
}

fn accumulate(sum: &mut [f64], grad: &[f64]) {
    for (s, g) in sum.iter_mut().zip(grad) {
        *s += g;
    }
}

fn apply_update(param: &mut [f64], grad_sum: &[f64], scale: f64) {
    for (p, g) in param.iter_mut().zip(grad_sum) {
        *p -= scale * g;
    }
}
