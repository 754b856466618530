//! Sigmoid belief network, its inference network, and the single-sample ELBO.
//!
//! Layers are indexed bottom-up: latent layer 0 sits directly above the
//! observation y, layer L-1 is the top layer with a factorised prior. Units
//! take values in {-1, +1} and are +1 with probability sigmoid(logit).

use rand::Rng;

use super::net::Affine;
use crate::cube::PROB_FLOOR;
use crate::error::{Error, Result};

pub const MAX_LAYERS: usize = 3;
pub const MAX_WIDTH: usize = 32;

/// Total latent units allowed when enumerating latent configurations.
pub const MAX_ENUM_LATENTS: usize = 16;

#[inline]
pub fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn clamped_prob(a: f64) -> f64 {
    sigmoid(a).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// sum_j log Bernoulli(x_j; sigmoid(a_j)), linear in each x_j so it extends to real x.
pub fn bernoulli_log_prob(x: &[f64], logits: &[f64]) -> f64 {
    x.iter()
        .zip(logits)
        .map(|(&v, &a)| {
            let p = clamped_prob(a);
            0.5 * (1.0 + v) * p.ln() + 0.5 * (1.0 - v) * (1.0 - p).ln()
        })
        .sum()
}

/// d/dx of [`bernoulli_log_prob`]: half the clamped log-odds.
fn log_prob_dx(logits: &[f64]) -> Vec<f64> {
    logits
        .iter()
        .map(|&a| {
            let p = clamped_prob(a);
            0.5 * (p.ln() - (1.0 - p).ln())
        })
        .collect()
}

/// d/da of [`bernoulli_log_prob`]: (1 + x)/2 - sigmoid(a).
pub(crate) fn log_prob_da(x: &[f64], logits: &[f64]) -> Vec<f64> {
    x.iter().zip(logits).map(|(&v, &a)| 0.5 * (1.0 + v) - sigmoid(a)).collect()
}

/// Generative model p(x) p(y | x).
#[derive(Clone, Debug, PartialEq)]
pub struct SbnModel {
    pub obs_width: usize,
    pub widths: Vec<usize>,
    /// `gen[0]` maps layer 0 to observation logits; `gen[l]` maps layer l to layer l-1 logits.
    pub gen: Vec<Affine>,
    /// Logits of the top layer's prior.
    pub prior: Vec<f64>,
}

fn check_shape(obs_width: usize, widths: &[usize]) -> Result<()> {
    if widths.is_empty() || widths.len() > MAX_LAYERS {
        return Err(Error::InvalidArgument(format!("layer count {} not in 1..={MAX_LAYERS}", widths.len())));
    }
    if obs_width == 0 || widths.iter().any(|&w| w == 0 || w > MAX_WIDTH) {
        return Err(Error::InvalidArgument(format!("layer widths {widths:?} must lie in 1..={MAX_WIDTH}")));
    }
    Ok(())
}

impl SbnModel {
    pub fn new<R: Rng + ?Sized>(obs_width: usize, widths: &[usize], rng: &mut R) -> Result<Self> {
        check_shape(obs_width, widths)?;
        let mut gen = vec![Affine::glorot(obs_width, widths[0], 0.5, rng)];
        for l in 1..widths.len() {
            gen.push(Affine::glorot(widths[l - 1], widths[l], 0.5, rng));
        }
        Ok(Self { obs_width, widths: widths.to_vec(), gen, prior: vec![0.0; *widths.last().unwrap()] })
    }

    pub fn layers(&self) -> usize {
        self.widths.len()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            obs_width: self.obs_width,
            widths: self.widths.clone(),
            gen: self.gen.iter().map(Affine::zeros_like).collect(),
            prior: vec![0.0; self.prior.len()],
        }
    }

    /// (log p(y | x), log p(x)).
    pub fn log_joint_terms(&self, y: &[f64], latents: &[Vec<f64>]) -> (f64, f64) {
        let ll = bernoulli_log_prob(y, &self.gen[0].forward(&latents[0]));
        let mut lp = bernoulli_log_prob(&latents[self.layers() - 1], &self.prior);
        for l in 1..self.layers() {
            lp += bernoulli_log_prob(&latents[l - 1], &self.gen[l].forward(&latents[l]));
        }
        (ll, lp)
    }

    /// Pathwise gradient of log p(y, x) at fixed samples, scaled and added into `grad`.
    pub fn accumulate_gradient(&self, y: &[f64], latents: &[Vec<f64>], scale: f64, grad: &mut SbnModel) {
        let d = log_prob_da(y, &self.gen[0].forward(&latents[0]));
        Affine::accumulate(&mut grad.gen[0], &d, &latents[0], scale);
        for l in 1..self.layers() {
            let d = log_prob_da(&latents[l - 1], &self.gen[l].forward(&latents[l]));
            Affine::accumulate(&mut grad.gen[l], &d, &latents[l], scale);
        }
        let top = &latents[self.layers() - 1];
        for ((g, &v), &a) in grad.prior.iter_mut().zip(top).zip(&self.prior) {
            *g += scale * (0.5 * (1.0 + v) - sigmoid(a));
        }
    }

    /// log p(y) by summing over every latent configuration.
    pub fn exact_log_likelihood(&self, y: &[f64]) -> Result<f64> {
        let terms: Vec<f64> = enumerate_latents(&self.widths)?
            .map(|lat| {
                let (ll, lp) = self.log_joint_terms(y, &lat);
                ll + lp
            })
            .collect();
        Ok(log_sum_exp(&terms))
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut t: Vec<&[f64]> = self.gen.iter().flat_map(|a| a.tensors()).collect();
        t.push(&self.prior);
        t
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t: Vec<&mut [f64]> = self.gen.iter_mut().flat_map(|a| a.tensors_mut()).collect();
        t.push(&mut self.prior);
        t
    }
}

/// Approximate posterior q(x | y): `layers[0]` maps y to layer-0 logits, `layers[l]`
/// maps layer l-1 to layer l logits.
#[derive(Clone, Debug, PartialEq)]
pub struct InferenceNet {
    pub layers: Vec<Affine>,
}

impl InferenceNet {
    pub fn new<R: Rng + ?Sized>(obs_width: usize, widths: &[usize], rng: &mut R) -> Result<Self> {
        check_shape(obs_width, widths)?;
        let mut layers = vec![Affine::glorot(widths[0], obs_width, 0.5, rng)];
        for l in 1..widths.len() {
            layers.push(Affine::glorot(widths[l], widths[l - 1], 0.5, rng));
        }
        Ok(Self { layers })
    }

    pub fn zeros_like(&self) -> Self {
        Self { layers: self.layers.iter().map(Affine::zeros_like).collect() }
    }

    /// Logits of layer `l` given its conditioning input (y for layer 0).
    pub fn logits(&self, l: usize, input: &[f64]) -> Vec<f64> {
        self.layers[l].forward(input)
    }

    pub fn log_q(&self, y: &[f64], latents: &[Vec<f64>]) -> f64 {
        (0..self.layers.len())
            .map(|l| bernoulli_log_prob(&latents[l], &self.logits(l, context(y, latents, l))))
            .sum()
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|a| a.tensors()).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(|a| a.tensors_mut()).collect()
    }
}

/// The conditioning input of inference layer `l`: y for layer 0, else layer l-1.
pub(crate) fn context<'a>(y: &'a [f64], latents: &'a [Vec<f64>], l: usize) -> &'a [f64] {
    if l == 0 {
        y
    } else {
        &latents[l - 1]
    }
}

/// One draw of the single-sample ELBO.
#[derive(Clone, Debug, PartialEq)]
pub struct ElboSample {
    /// log p(y | x) + log p(x) - log q(x | y).
    pub elbo: f64,
    /// Sampled layers, values in {-1, +1}.
    pub latents: Vec<Vec<f64>>,
    pub log_likelihood: f64,
    pub log_prior: f64,
    pub log_q: f64,
}

/// Samples x ~ q(x | y) layer by layer and evaluates the ELBO integrand.
pub fn elbo_sample<R: Rng + ?Sized>(model: &SbnModel, qnet: &InferenceNet, y: &[f64], rng: &mut R) -> ElboSample {
    let mut latents: Vec<Vec<f64>> = Vec::with_capacity(model.layers());
    for l in 0..model.layers() {
        let logits = qnet.logits(l, context(y, &latents, l));
        let layer = logits
            .iter()
            .map(|&a| if rng.random::<f64>() < clamped_prob(a) { 1.0 } else { -1.0 })
            .collect();
        latents.push(layer);
    }
    let (log_likelihood, log_prior) = model.log_joint_terms(y, &latents);
    let log_q = qnet.log_q(y, &latents);
    ElboSample { elbo: log_likelihood + log_prior - log_q, latents, log_likelihood, log_prior, log_q }
}

/// The ELBO integrand log p(y, x) - log q(x | y) at given layer values.
pub fn integrand(model: &SbnModel, qnet: &InferenceNet, y: &[f64], values: &[Vec<f64>]) -> f64 {
    let (ll, lp) = model.log_joint_terms(y, values);
    ll + lp - qnet.log_q(y, values)
}

/// Exact ELBO, E_q[log p(y, x) - log q(x | y)], by enumerating latent configurations.
pub fn exact_elbo(model: &SbnModel, qnet: &InferenceNet, y: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for lat in enumerate_latents(&model.widths)? {
        let lq = qnet.log_q(y, &lat);
        total += lq.exp() * integrand(model, qnet, y, &lat);
    }
    Ok(total)
}

/// Partial derivatives of the integrand with respect to each layer's values,
/// holding every other layer fixed.
pub fn integrand_partials(model: &SbnModel, qnet: &InferenceNet, y: &[f64], values: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let layers = model.layers();
    let mut d: Vec<Vec<f64>> = Vec::with_capacity(layers);
    for m in 0..layers {
        let below = context(y, values, m);
        // generative term in which layer m is the conditioning input
        let a = model.gen[m].forward(&values[m]);
        let mut dm = model.gen[m].backward_input(&log_prob_da(below, &a));
        // generative term in which layer m is the observed variable
        let above = if m + 1 == layers { model.prior.clone() } else { model.gen[m + 1].forward(&values[m + 1]) };
        add(&mut dm, &log_prob_dx(&above), 1.0);
        // -log q(layer m | below)
        add(&mut dm, &log_prob_dx(&qnet.logits(m, below)), -1.0);
        // -log q(layer m+1 | layer m)
        if m + 1 < layers {
            let b = qnet.logits(m + 1, &values[m]);
            add(&mut dm, &qnet.layers[m + 1].backward_input(&log_prob_da(&values[m + 1], &b)), -1.0);
        }
        d.push(dm);
    }
    d
}

/// Mean-field surrogate of the integrand as a function of layer `l`:
/// layers below `l` keep their samples, layer `l` is set to `z`, and layers above
/// are replaced by their inference-network means. Returns the value and its gradient in `z`.
///
/// The surrogate depends only on the layers below `l`, so Taylor-expansion baselines built
/// from it keep the layer-`l` estimator unbiased.
pub fn mean_field_surrogate(
    model: &SbnModel,
    qnet: &InferenceNet,
    y: &[f64],
    latents: &[Vec<f64>],
    l: usize,
    z: &[f64],
) -> (f64, Vec<f64>) {
    let layers = model.layers();
    let mut values: Vec<Vec<f64>> = latents[..l].to_vec();
    values.push(z.to_vec());
    let mut probs: Vec<Vec<f64>> = Vec::new();
    for m in l + 1..layers {
        let p: Vec<f64> = qnet.logits(m, &values[m - 1]).iter().map(|&a| sigmoid(a)).collect();
        values.push(p.iter().map(|&pi| 2.0 * pi - 1.0).collect());
        probs.push(p);
    }
    let value = integrand(model, qnet, y, &values);
    let mut d = integrand_partials(model, qnet, y, &values);
    for m in (l + 1..layers).rev() {
        let p = &probs[m - l - 1];
        let delta: Vec<f64> = d[m].iter().zip(p).map(|(g, &pi)| g * 2.0 * pi * (1.0 - pi)).collect();
        let back = qnet.layers[m].backward_input(&delta);
        add(&mut d[m - 1], &back, 1.0);
    }
    (value, d.swap_remove(l))
}

fn add(acc: &mut [f64], v: &[f64], scale: f64) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += scale * b;
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Every assignment of the latent layers, as per-layer {-1, +1} vectors.
pub fn enumerate_latents(widths: &[usize]) -> Result<impl Iterator<Item = Vec<Vec<f64>>> + '_> {
    let total: usize = widths.iter().sum();
    if total > MAX_ENUM_LATENTS {
        return Err(Error::TooLarge { n: total, max: MAX_ENUM_LATENTS });
    }
    Ok((0..1u64 << total).map(move |idx| {
        let mut offset = 0;
        widths
            .iter()
            .map(|&w| {
                let layer = (0..w).map(|j| if idx >> (offset + j) & 1 == 1 { 1.0 } else { -1.0 }).collect();
                offset += w;
                layer
            })
            .collect()
    }))
}
