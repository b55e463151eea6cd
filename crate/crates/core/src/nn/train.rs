//! Training loops and gradient entry points.
//!
//! Plain training minimizes mean softmax cross-entropy over user labels.
//! The ensemble-adversarial variant mixes in single-step adversarial
//! samples generated from the model itself or from pretrained auxiliaries;
//! the saddle-point variant trains on inner L2-ball maximizers found by
//! projected gradient ascent. Runs are bit-reproducible for a fixed seed:
//! per-sample work is parallelized but reduced in a fixed order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::net::{softmax_cross_entropy, NetSpec, TrainedNet};
use super::tensor::Tensor;
use super::NnError;
use crate::imageproc::CanonImage;
use crate::scalar::{l2_norm, Scalar};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    SgdMomentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::SgdMomentum { momentum: 0.9 }
    }
}

/// Defense applied during feature learning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Defense {
    None,
    /// Convex mix of clean and single-step adversarial loss; adversarial
    /// samples come from the model under training or a pretrained pool.
    EnsAdv { alpha: f64, epsilon: f64 },
    /// Saddle-point training on worst-case perturbations within an L2 ball.
    Madry { epsilon: f64, pgd_steps: usize, pgd_step_size: f64 },
}

impl Defense {
    pub fn ens_adv_default() -> Self {
        Defense::EnsAdv { alpha: 0.5, epsilon: 5.0 }
    }

    pub fn madry_default() -> Self {
        let epsilon = 2.0;
        Defense::Madry { epsilon, pgd_steps: 10, pgd_step_size: epsilon / 4.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiplied into the learning rate once, at `lr_decay_at * epochs`.
    pub lr_decay: f64,
    pub lr_decay_at: f64,
    pub optimizer: Optimizer,
    pub defense: Defense,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.01,
            lr_decay: 0.1,
            lr_decay_at: 2.0 / 3.0,
            optimizer: Optimizer::default(),
            defense: Defense::None,
            seed: 0,
        }
    }
}

/// Per-run training record.
#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Mean loss of every processed batch, in order.
    pub batch_losses: Vec<f64>,
    /// For mixed objectives, the (clean, adversarial) loss components per
    /// batch; empty otherwise.
    pub batch_loss_components: Vec<(f64, f64)>,
    pub final_train_accuracy: f64,
}

/// Objective whose input gradient is requested.
pub enum InputObjective<'a, T> {
    /// Cross-entropy loss at a fixed label.
    CrossEntropy { label: usize },
    /// A single output logit.
    Logit { index: usize },
    /// An objective composed on top of the embedding; `grad` is its
    /// gradient with respect to the embedding activations.
    EmbeddingSeed { grad: &'a [T] },
}

/// Gradient of the objective with respect to the input image, in pixel
/// units (the internal 1/255 input scaling is undone).
pub fn input_gradient<T: Scalar>(
    net: &TrainedNet<T>,
    img: &CanonImage<T>,
    objective: InputObjective<'_, T>,
) -> Result<Vec<T>, NnError> {
    let acts = net.forward_cached(&TrainedNet::input_tensor(img));
    let (start_layer, seed_grad) = match objective {
        InputObjective::CrossEntropy { label } => {
            let (_, grad) = softmax_cross_entropy(net.logits(&acts), label);
            (net.spec().layers.len() - 1, Tensor::new(vec![grad.len()], grad))
        }
        InputObjective::Logit { index } => {
            let mut grad = vec![T::zero(); net.class_count()];
            grad[index] = T::one();
            (net.spec().layers.len() - 1, Tensor::new(vec![grad.len()], grad))
        }
        InputObjective::EmbeddingSeed { grad } => {
            let layer = net.spec().embedding_layer;
            (layer, Tensor::new(vec![grad.len()], grad.to_vec()))
        }
    };
    let grad_input = net.backward(&acts, start_layer, seed_grad, None);
    let scale = T::cast(1.0 / 255.0);
    let pixel_grad: Vec<T> = grad_input.into_data().into_iter().map(|g| g * scale).collect();
    if pixel_grad.iter().any(|g| !g.is_finite()) {
        return Err(NnError::NonFinite("input gradient"));
    }
    Ok(pixel_grad)
}

/// Mean cross-entropy loss and gradients for every parameter tensor.
pub fn param_gradients<T: Scalar>(
    net: &TrainedNet<T>,
    batch: &[(&CanonImage<T>, usize)],
) -> Result<(T, Vec<Tensor<T>>), NnError> {
    if batch.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    let per_sample: Vec<(T, Vec<Tensor<T>>)> = batch
        .par_iter()
        .map(|&(img, label)| {
            let acts = net.forward_cached(&TrainedNet::input_tensor(img));
            let (loss, grad) = softmax_cross_entropy(net.logits(&acts), label);
            let mut grads = net.zero_grads();
            let seed_grad = Tensor::new(vec![grad.len()], grad);
            net.backward(&acts, net.spec().layers.len() - 1, seed_grad, Some(&mut grads));
            (loss, grads)
        })
        .collect();
    let scale = T::cast(1.0 / batch.len() as f64);
    let mut total_loss = T::zero();
    let mut total = net.zero_grads();
    for (loss, grads) in per_sample {
        total_loss += loss;
        for (acc, g) in total.iter_mut().zip(&grads) {
            acc.add_scaled(g, scale);
        }
    }
    let mean_loss = total_loss * scale;
    if !mean_loss.is_finite() {
        return Err(NnError::NonFinite("batch loss"));
    }
    Ok((mean_loss, total))
}

/// Single normalized gradient step of pixel-domain magnitude `epsilon` in
/// the loss-increasing direction, clipped back into the intensity box.
pub fn fgm_perturb<T: Scalar>(
    net: &TrainedNet<T>,
    img: &CanonImage<T>,
    label: usize,
    epsilon: f64,
) -> Result<CanonImage<T>, NnError> {
    let grad = input_gradient(net, img, InputObjective::CrossEntropy { label })?;
    let norm = l2_norm(&grad);
    if norm <= T::zero() {
        return Err(NnError::ZeroGradient);
    }
    let step = T::cast(epsilon) / norm;
    let pixels = img
        .pixels()
        .iter()
        .zip(&grad)
        .map(|(&p, &g)| p + g * step)
        .collect();
    Ok(CanonImage::from_clamped(pixels)?)
}

/// Inner maximizer of the cross-entropy loss over the L2 ball of radius
/// `epsilon` (pixel domain) intersected with the intensity box. A zero
/// gradient at the start point falls back to a random point on the sphere.
pub fn pgd_l2<T: Scalar>(
    net: &TrainedNet<T>,
    img: &CanonImage<T>,
    label: usize,
    epsilon: f64,
    steps: usize,
    step_size: f64,
    rng: &mut impl Rng,
) -> Result<CanonImage<T>, NnError> {
    let start = img.pixels().to_vec();
    let n = start.len();
    let eps = T::cast(epsilon);
    let mut current = start.clone();

    let project = |current: &mut Vec<T>| {
        // Ball projection first; the box clamp that follows can only
        // shrink coordinates of delta, so the ball bound still holds.
        let mut delta: Vec<T> = current.iter().zip(&start).map(|(&c, &s)| c - s).collect();
        let norm = l2_norm(&delta);
        if norm > eps && norm > T::zero() {
            let scale = eps / norm;
            for d in &mut delta {
                *d *= scale;
            }
        }
        let hi = T::cast(255.0);
        for ((c, &s), &d) in current.iter_mut().zip(&start).zip(&delta) {
            *c = (s + d).max(T::zero()).min(hi);
        }
    };

    let start_grad = input_gradient(net, img, InputObjective::CrossEntropy { label })?;
    if l2_norm(&start_grad) <= T::zero() {
        let mut noise: Vec<T> = (0..n).map(|_| T::standard_normal(rng)).collect();
        let norm = l2_norm(&noise);
        if norm > T::zero() {
            let scale = eps / norm;
            for v in &mut noise {
                *v *= scale;
            }
        }
        for (c, d) in current.iter_mut().zip(&noise) {
            *c += *d;
        }
        project(&mut current);
    }

    for _ in 0..steps {
        let probe = CanonImage::from_clamped(current.clone())?;
        let grad = input_gradient(net, &probe, InputObjective::CrossEntropy { label })?;
        let norm = l2_norm(&grad);
        if norm <= T::zero() {
            break;
        }
        let scale = T::cast(step_size) / norm;
        for (c, &g) in current.iter_mut().zip(&grad) {
            *c += g * scale;
        }
        project(&mut current);
    }
    Ok(CanonImage::from_clamped(current)?)
}

enum TrainMode<'a, T> {
    Plain,
    EnsAdv { alpha: f64, epsilon: f64, pretrained: &'a [TrainedNet<T>] },
    Madry { epsilon: f64, pgd_steps: usize, pgd_step_size: f64 },
}

/// Plain multinomial user classification.
pub fn train_classifier<T: Scalar>(
    spec: NetSpec,
    dataset: &[(CanonImage<T>, usize)],
    config: &TrainConfig,
) -> Result<(TrainedNet<T>, TrainReport), NnError> {
    if config.defense != Defense::None {
        return Err(NnError::DefenseMismatch("plain training requires defense = none".into()));
    }
    train_loop(spec, dataset, config, TrainMode::Plain)
}

/// Ensemble adversarial training: per batch, the adversarial source is
/// drawn uniformly from the current model plus the pretrained pool.
pub fn train_ens_adv<T: Scalar>(
    spec: NetSpec,
    dataset: &[(CanonImage<T>, usize)],
    config: &TrainConfig,
    pretrained: &[TrainedNet<T>],
) -> Result<(TrainedNet<T>, TrainReport), NnError> {
    let Defense::EnsAdv { alpha, epsilon } = config.defense else {
        return Err(NnError::DefenseMismatch("config.defense must be ens_adv".into()));
    };
    if pretrained.is_empty() {
        return Err(NnError::DefenseMismatch("ensemble adversarial training needs at least one pretrained model".into()));
    }
    train_loop(spec, dataset, config, TrainMode::EnsAdv { alpha, epsilon, pretrained })
}

/// Saddle-point training: every batch loss is evaluated at inner L2-ball
/// maximizers of the loss.
pub fn train_madry<T: Scalar>(
    spec: NetSpec,
    dataset: &[(CanonImage<T>, usize)],
    config: &TrainConfig,
) -> Result<(TrainedNet<T>, TrainReport), NnError> {
    let Defense::Madry { epsilon, pgd_steps, pgd_step_size } = config.defense else {
        return Err(NnError::DefenseMismatch("config.defense must be madry".into()));
    };
    train_loop(spec, dataset, config, TrainMode::Madry { epsilon, pgd_steps, pgd_step_size })
}

fn train_loop<T: Scalar>(
    spec: NetSpec,
    dataset: &[(CanonImage<T>, usize)],
    config: &TrainConfig,
    mode: TrainMode<'_, T>,
) -> Result<(TrainedNet<T>, TrainReport), NnError> {
    let classes = spec.classes();
    let distinct = {
        let mut seen = vec![false; classes];
        for &(_, label) in dataset {
            if label >= classes {
                return Err(NnError::BadSpec(format!("label {label} outside {classes} classes")));
            }
            seen[label] = true;
        }
        seen.iter().filter(|&&s| s).count()
    };
    if distinct < 2 {
        return Err(NnError::TooFewClasses);
    }

    let mut init_rng = ChaCha8Rng::seed_from_u64(seed::derive(config.seed, &[0x1717]));
    let mut net = TrainedNet::init(spec, &mut init_rng)?;
    let mut opt = OptimizerState::new(&net, config.optimizer);
    let decay_epoch = ((config.epochs as f64) * config.lr_decay_at).floor() as usize;
    let mut lr = config.learning_rate;
    let mut batch_losses = Vec::new();
    let mut batch_loss_components = Vec::new();

    for epoch in 0..config.epochs {
        if epoch == decay_epoch && epoch > 0 {
            lr *= config.lr_decay;
        }
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed::derive(config.seed, &[0x51f7, epoch as u64]));
        for i in (1..order.len()).rev() {
            order.swap(i, shuffle_rng.gen_range(0..=i));
        }

        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<(&CanonImage<T>, usize)> =
                chunk.iter().map(|&i| (&dataset[i].0, dataset[i].1)).collect();
            let (loss, grads) = match &mode {
                TrainMode::Plain => param_gradients(&net, &batch)?,
                TrainMode::EnsAdv { alpha, epsilon, pretrained } => {
                    let mut pick_rng = ChaCha8Rng::seed_from_u64(seed::derive(
                        config.seed,
                        &[0xe5ad, epoch as u64, batch_idx as u64],
                    ));
                    let source_idx = pick_rng.gen_range(0..=pretrained.len());
                    let adv_batch: Vec<(CanonImage<T>, usize)> = batch
                        .par_iter()
                        .map(|&(img, label)| {
                            let source = if source_idx == 0 { &net } else { &pretrained[source_idx - 1] };
                            let adv = fgm_perturb(source, img, label, *epsilon)
                                .unwrap_or_else(|_| img.clone());
                            (adv, label)
                        })
                        .collect();
                    let adv_refs: Vec<(&CanonImage<T>, usize)> =
                        adv_batch.iter().map(|(img, label)| (img, *label)).collect();
                    let (clean_loss, clean_grads) = param_gradients(&net, &batch)?;
                    let (adv_loss, adv_grads) = param_gradients(&net, &adv_refs)?;
                    batch_loss_components.push((clean_loss.to_f64_lossy(), adv_loss.to_f64_lossy()));
                    let a = T::cast(*alpha);
                    let b = T::one() - a;
                    let mut grads = net.zero_grads();
                    for ((acc, cg), ag) in grads.iter_mut().zip(&clean_grads).zip(&adv_grads) {
                        acc.add_scaled(cg, a);
                        acc.add_scaled(ag, b);
                    }
                    (clean_loss * a + adv_loss * b, grads)
                }
                TrainMode::Madry { epsilon, pgd_steps, pgd_step_size } => {
                    let adv_batch: Vec<(CanonImage<T>, usize)> = batch
                        .par_iter()
                        .enumerate()
                        .map(|(k, &(img, label))| {
                            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(
                                config.seed,
                                &[0x3adf, epoch as u64, batch_idx as u64, k as u64],
                            ));
                            let adv = pgd_l2(&net, img, label, *epsilon, *pgd_steps, *pgd_step_size, &mut rng)
                                .unwrap_or_else(|_| img.clone());
                            (adv, label)
                        })
                        .collect();
                    let adv_refs: Vec<(&CanonImage<T>, usize)> =
                        adv_batch.iter().map(|(img, label)| (img, *label)).collect();
                    param_gradients(&net, &adv_refs)?
                }
            };
            let loss_f64 = loss.to_f64_lossy();
            if !loss_f64.is_finite() {
                return Err(NnError::Divergence { epoch, batch: batch_idx, loss: loss_f64 });
            }
            batch_losses.push(loss_f64);
            opt.step(&mut net, &grads, lr);
        }
    }

    let correct: usize = dataset
        .par_iter()
        .map(|(img, label)| {
            let (logits, _) = net.forward(img);
            usize::from(argmax(&logits) == *label)
        })
        .sum();
    let report = TrainReport {
        batch_losses,
        batch_loss_components,
        final_train_accuracy: correct as f64 / dataset.len() as f64,
    };
    Ok((net, report))
}

pub(crate) fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

struct OptimizerState<T> {
    kind: Optimizer,
    slot_a: Vec<Tensor<T>>,
    slot_b: Vec<Tensor<T>>,
    t: usize,
}

impl<T: Scalar> OptimizerState<T> {
    fn new(net: &TrainedNet<T>, kind: Optimizer) -> Self {
        Self { kind, slot_a: net.zero_grads(), slot_b: net.zero_grads(), t: 0 }
    }

    fn step(&mut self, net: &mut TrainedNet<T>, grads: &[Tensor<T>], lr: f64) {
        self.t += 1;
        match self.kind {
            Optimizer::SgdMomentum { momentum } => {
                let mu = T::cast(momentum);
                let lr = T::cast(lr);
                for ((p, v), g) in net.params_mut().iter_mut().zip(&mut self.slot_a).zip(grads) {
                    for ((pv, vv), &gv) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                        *vv = mu * *vv + gv;
                        *pv -= lr * *vv;
                    }
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let b1 = T::cast(beta1);
                let b2 = T::cast(beta2);
                let eps = T::cast(eps);
                let corr1 = T::one() - T::cast(beta1.powi(self.t as i32));
                let corr2 = T::one() - T::cast(beta2.powi(self.t as i32));
                let lr = T::cast(lr);
                for (((p, m), v), g) in net
                    .params_mut()
                    .iter_mut()
                    .zip(&mut self.slot_a)
                    .zip(&mut self.slot_b)
                    .zip(grads)
                {
                    for (((pv, mv), vv), &gv) in
                        p.data_mut().iter_mut().zip(m.data_mut()).zip(v.data_mut()).zip(g.data())
                    {
                        *mv = b1 * *mv + (T::one() - b1) * gv;
                        *vv = b2 * *vv + (T::one() - b2) * gv * gv;
                        let m_hat = *mv / corr1;
                        let v_hat = *vv / corr2;
                        *pv -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
    }
}
