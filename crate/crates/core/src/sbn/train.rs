//! Estimator-pluggable training loop for [`SbnModel`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::model::{
    clamped_prob, context, elbo_sample, integrand_partials, log_prob_da, mean_field_surrogate, sigmoid, ElboSample,
    InferenceNet, SbnModel,
};
use super::net::{Activation, Affine, Mlp, Momentum};
use crate::cube::{substream, Stream};
use crate::error::{Error, Result};
use crate::estimators::EmaVariance;
use crate::estimators::{EstimatorConfig, EstimatorKind};

const INIT_STREAM: u64 = 0;
const BATCH_STREAM: u64 = 2;
const LATENT_STREAM: u64 = 3;
const NOISE_STREAM: u64 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub batch: usize,
    /// Baseline networks learn at `lr * baseline_lr_mult`.
    pub baseline_lr_mult: f64,
    pub estimator: EstimatorConfig,
    pub steps: usize,
    pub seed: u64,
    /// Decay of the per-layer gradient-variance EMA.
    pub ema_decay: f64,
    /// Latent layer widths, bottom (next to the observation) first.
    pub widths: Vec<usize>,
    /// Subtract observation-conditioned baselines b_l(y) from every score-function signal.
    pub input_baseline: bool,
    /// Regress g toward the residual minus b rather than the residual itself.
    pub center_g_target: bool,
    /// Keep g at its initial value (identically zero).
    pub freeze_g: bool,
    pub baseline_hidden: usize,
    pub g_hidden: usize,
    pub g_activation: Activation,
    /// Metrics CSV keeps every `log_every`-th step.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            momentum: 0.9,
            batch: 24,
            baseline_lr_mult: 0.1,
            estimator: EstimatorConfig::default(),
            steps: 2000,
            seed: 0,
            ema_decay: 0.99,
            widths: vec![12],
            input_baseline: true,
            center_g_target: true,
            freeze_g: false,
            baseline_hidden: 16,
            g_hidden: 32,
            g_activation: Activation::Tanh,
            log_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.estimator.validate()?;
        let positive = [("lr", self.lr), ("baseline_lr_mult", self.baseline_lr_mult)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!("momentum {} not in [0, 1)", self.momentum)));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return Err(Error::InvalidArgument(format!("ema_decay {} not in [0, 1)", self.ema_decay)));
        }
        if self.batch == 0 || self.log_every == 0 || self.baseline_hidden == 0 || self.g_hidden == 0 {
            return Err(Error::InvalidArgument("batch, log_every and hidden widths must be positive".into()));
        }
        Ok(())
    }

    fn uses_g(&self) -> bool {
        match self.estimator.kind {
            EstimatorKind::FourierCv | EstimatorKind::FourierCvAlt => true,
            EstimatorKind::Combined => self.estimator.beta != 0.0,
            _ => false,
        }
    }
}

/// Per-layer observation-conditioned baselines b_l(y) and control-variate networks g_l(x_l, context).
#[derive(Clone, Debug, PartialEq)]
pub struct Baselines {
    pub input: Vec<Mlp>,
    pub sample: Vec<Mlp>,
}

impl Baselines {
    /// Output layers start at zero, so both b and every g_l are initially identically 0.
    pub fn new<R: Rng + ?Sized>(obs_width: usize, widths: &[usize], cfg: &TrainConfig, rng: &mut R) -> Self {
        let input = (0..widths.len())
            .map(|_| Mlp::new(obs_width, &[cfg.baseline_hidden], Activation::Tanh, true, rng))
            .collect();
        let sample = (0..widths.len())
            .map(|l| {
                let ctx = if l == 0 { obs_width } else { widths[l - 1] };
                Mlp::new(widths[l] + ctx, &[cfg.g_hidden, cfg.g_hidden], cfg.g_activation, true, rng)
            })
            .collect();
        Self { input, sample }
    }
}

/// Per-layer quantities produced alongside a q-gradient contribution.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    /// The ELBO integrand at the sample.
    pub f: f64,
    /// f minus the Taylor terms of the estimator, if any; the regression target of b_l.
    pub residual: Vec<f64>,
    /// b_l(y), or 0 without input baselines.
    pub b: Vec<f64>,
    /// (input, value) of g_l at the sample, when g is in use.
    pub g: Vec<Option<(Vec<f64>, f64)>>,
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

/// Mean of g over `k` rho-correlated copies of `x`.
fn noisy_g<R: Rng + ?Sized>(g: &Mlp, x: &[f64], ctx: &[f64], probs: &[f64], rho: f64, k: usize, rng: &mut R) -> f64 {
    let mut total = 0.0;
    let mut xp = vec![0.0; x.len()];
    for _ in 0..k {
        for ((out, &v), &p) in xp.iter_mut().zip(x).zip(probs) {
            *out = if rng.random::<f64>() < rho {
                v
            } else if rng.random::<f64>() < p {
                1.0
            } else {
                -1.0
            };
        }
        total += g.forward(&concat(&xp, ctx));
    }
    total / k as f64
}

/// Accumulates `scale` times the estimated gradient of the ELBO with respect to the
/// inference-network parameters for one observation and its latent sample.
///
/// Layer l is treated as a Boolean function argument: the signal multiplies the score
/// of layer l's units, and logit gradients are chained into the affine parameters.
#[allow(clippy::too_many_arguments)]
pub fn q_gradient<R: Rng + ?Sized>(
    model: &SbnModel,
    qnet: &InferenceNet,
    baselines: &Baselines,
    cfg: &TrainConfig,
    running_c: &[f64],
    y: &[f64],
    sample: &ElboSample,
    noise_rng: &mut R,
    scale: f64,
    grad: &mut InferenceNet,
) -> Signal {
    let est = &cfg.estimator;
    let f = sample.elbo;
    let partials = (est.kind == EstimatorKind::StraightThrough).then(|| integrand_partials(model, qnet, y, &sample.latents));
    let mut signal = Signal { f, residual: Vec::new(), b: Vec::new(), g: Vec::new() };
    for l in 0..model.layers() {
        let b = if cfg.input_baseline { baselines.input[l].forward(y) } else { 0.0 };
        let mut g_record = None;
        let mut taylor = 0.0;
        let ctx = context(y, &sample.latents, l);
        let x = &sample.latents[l];
        let logits = qnet.logits(l, ctx);
        let score = log_prob_da(x, &logits);
        let dp: Vec<f64> = logits.iter().map(|&a| sigmoid(a) * (1.0 - sigmoid(a))).collect();
        let probs: Vec<f64> = logits.iter().map(|&a| clamped_prob(a)).collect();
        let mu: Vec<f64> = logits.iter().map(|&a| 2.0 * sigmoid(a) - 1.0).collect();

        let mut variate = |rho_terms: &[f64], noise_rng: &mut R| -> f64 {
            let g = &baselines.sample[l];
            let input = concat(x, ctx);
            let gv = g.forward(&input);
            let mut v = gv;
            for &r in rho_terms {
                let t = noisy_g(g, x, ctx, &probs, r, est.k, noise_rng);
                v -= if rho_terms.len() == 1 { t / r } else { t };
            }
            g_record = Some((input, gv));
            v
        };

        let mut correction: Option<Vec<f64>> = None;
        let t = match est.kind {
            EstimatorKind::Reinforce => f - b,
            EstimatorKind::ReinforceConstBaseline => f - b - running_c[l],
            EstimatorKind::StraightThrough => {
                let d = &partials.as_ref().expect("partials computed for straight-through")[l];
                correction = Some(d.iter().map(|v| 2.0 * v).collect());
                0.0
            }
            EstimatorKind::Muprop => {
                let (v, gr) = mean_field_surrogate(model, qnet, y, &sample.latents, l, &mu);
                let lin: f64 = gr.iter().zip(x).zip(&mu).map(|((g, xv), m)| g * (xv - m)).sum();
                correction = Some(gr.iter().map(|g| 2.0 * g).collect());
                taylor = v + lin;
                f - b - v - lin
            }
            EstimatorKind::FourierCv => f - b - variate(&[est.rho], noise_rng),
            EstimatorKind::FourierCvAlt => f - b - variate(&[est.rho, 1.0 - est.rho], noise_rng),
            EstimatorKind::Combined => {
                let (v, gr_mu) = mean_field_surrogate(model, qnet, y, &sample.latents, l, &mu);
                let gr = if est.taylor_at_sample {
                    mean_field_surrogate(model, qnet, y, &sample.latents, l, x).1
                } else {
                    gr_mu
                };
                let lin: f64 = gr.iter().zip(x).zip(&mu).map(|((g, xv), m)| g * (xv - m)).sum();
                let cv = if est.beta == 0.0 { 0.0 } else { variate(&[est.rho], noise_rng) };
                if !est.taylor_at_sample {
                    correction = Some(gr.iter().map(|g| 2.0 * est.alpha * g).collect());
                }
                taylor = v + est.alpha * lin;
                f - b - v - est.alpha * lin - est.beta * cv
            }
        };
        // p-space contribution times dp/da gives the logit gradient
        let delta: Vec<f64> = match &correction {
            Some(c) => score.iter().zip(c).zip(&dp).map(|((s, c), w)| t * s + c * w).collect(),
            None => score.iter().map(|s| t * s).collect(),
        };
        Affine::accumulate(&mut grad.layers[l], &delta, ctx, scale);
        signal.residual.push(f - taylor);
        signal.b.push(b);
        signal.g.push(g_record);
    }
    signal
}

/// Metrics recorded after each training step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepMetrics {
    /// 1-based step number.
    pub step: usize,
    /// Minibatch mean of single-sample ELBOs, before the update.
    pub elbo: f64,
    /// ln of the EMA variance of each inference layer's minibatch gradient.
    pub log_var: Vec<f64>,
}

pub fn metrics_header(layers: usize) -> String {
    let mut h = String::from("step,elbo");
    for l in 1..=layers {
        h.push_str(&format!(",log_var_layer{l}"));
    }
    h
}

pub fn metrics_row(m: &StepMetrics) -> String {
    let mut r = format!("{},{}", m.step, m.elbo);
    for v in &m.log_var {
        r.push_str(&format!(",{v}"));
    }
    r
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub model: SbnModel,
    pub qnet: InferenceNet,
    pub baselines: Baselines,
    data: Dataset,
    opt_model: Momentum,
    opt_q: Momentum,
    opt_b: Momentum,
    opt_g: Momentum,
    running_c: Vec<f64>,
    ema: Vec<EmaVariance>,
    step: usize,
    batch_rng: Stream,
    latent_rng: Stream,
    noise_rng: Stream,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, data: Dataset) -> Result<Self> {
        cfg.validate()?;
        let mut init = substream(cfg.seed, INIT_STREAM);
        let model = SbnModel::new(data.width(), &cfg.widths, &mut init)?;
        let qnet = InferenceNet::new(data.width(), &cfg.widths, &mut init)?;
        let baselines = Baselines::new(data.width(), &cfg.widths, &cfg, &mut init);
        let ema = qnet
            .layers
            .iter()
            .map(|a| EmaVariance::new(a.weight.len() + a.bias.len(), cfg.ema_decay))
            .collect::<Result<_>>()?;
        Ok(Self {
            running_c: vec![cfg.estimator.baseline; cfg.widths.len()],
            batch_rng: substream(cfg.seed, BATCH_STREAM),
            latent_rng: substream(cfg.seed, LATENT_STREAM),
            noise_rng: substream(cfg.seed, NOISE_STREAM),
            cfg,
            model,
            qnet,
            baselines,
            data,
            opt_model: Momentum::default(),
            opt_q: Momentum::default(),
            opt_b: Momentum::default(),
            opt_g: Momentum::default(),
            ema,
            step: 0,
        })
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// One momentum-SGD update on a fresh minibatch. A non-finite quantity aborts the
    /// step with an error and leaves every parameter untouched.
    pub fn step(&mut self) -> Result<StepMetrics> {
        let cfg = &self.cfg;
        let batch = cfg.batch;
        let scale = 1.0 / batch as f64;
        let mut g_model = self.model.zeros_like();
        let mut g_q = self.qnet.zeros_like();
        let mut g_b: Vec<Mlp> = self.baselines.input.iter().map(Mlp::zeros_like).collect();
        let mut g_g: Vec<Mlp> = self.baselines.sample.iter().map(Mlp::zeros_like).collect();
        let train_g = cfg.uses_g() && !cfg.freeze_g;
        let mut elbo_sum = 0.0;
        let mut residual_sum = vec![0.0; self.model.layers()];

        for _ in 0..batch {
            let idx = self.batch_rng.random_range(0..self.data.len());
            let y = self.data.row(idx);
            let sample = elbo_sample(&self.model, &self.qnet, y, &mut self.latent_rng);
            if !sample.elbo.is_finite() {
                return Err(Error::NonFinite(format!("ELBO at step {}", self.step + 1)));
            }
            elbo_sum += sample.elbo;
            self.model.accumulate_gradient(y, &sample.latents, scale, &mut g_model);
            let signal = q_gradient(
                &self.model,
                &self.qnet,
                &self.baselines,
                cfg,
                &self.running_c,
                y,
                &sample,
                &mut self.noise_rng,
                scale,
                &mut g_q,
            );
            for l in 0..self.model.layers() {
                let (r, b) = (signal.residual[l], signal.b[l]);
                residual_sum[l] += r - b;
                if cfg.input_baseline {
                    // squared-error descent direction (b - r) grad b
                    self.baselines.input[l].backward(y, scale * (b - r), &mut g_b[l]);
                }
                if let (true, Some((input, value))) = (train_g, &signal.g[l]) {
                    let target = if cfg.center_g_target { r - b } else { r };
                    self.baselines.sample[l].backward(input, scale * (value - target), &mut g_g[l]);
                }
            }
        }

        let finite = |ts: Vec<&[f64]>| ts.iter().all(|t| t.iter().all(|v| v.is_finite()));
        if !(finite(g_model.tensors())
            && finite(g_q.tensors())
            && g_b.iter().all(|g| finite(g.tensors()))
            && g_g.iter().all(|g| finite(g.tensors())))
        {
            return Err(Error::NonFinite(format!("gradient at step {}", self.step + 1)));
        }

        let (lr, mom) = (cfg.lr, cfg.momentum);
        let blr = lr * cfg.baseline_lr_mult;
        self.opt_model.step(self.model.tensors_mut(), g_model.tensors(), lr, mom, true);
        self.opt_q.step(self.qnet.tensors_mut(), g_q.tensors(), lr, mom, true);
        if cfg.input_baseline {
            let params: Vec<&mut [f64]> = self.baselines.input.iter_mut().flat_map(|g| g.tensors_mut()).collect();
            let grads: Vec<&[f64]> = g_b.iter().flat_map(|g| g.tensors()).collect();
            self.opt_b.step(params, grads, blr, mom, false);
        }
        if train_g {
            let params: Vec<&mut [f64]> = self.baselines.sample.iter_mut().flat_map(|g| g.tensors_mut()).collect();
            let grads: Vec<&[f64]> = g_g.iter().flat_map(|g| g.tensors()).collect();
            self.opt_g.step(params, grads, blr, mom, false);
        }
        if cfg.estimator.kind == EstimatorKind::ReinforceConstBaseline {
            let d = cfg.estimator.baseline_decay;
            for (c, r) in self.running_c.iter_mut().zip(&residual_sum) {
                *c = d * *c + (1.0 - d) * r * scale;
            }
        }

        for (ema, layer) in self.ema.iter_mut().zip(&g_q.layers) {
            ema.update(&concat(&layer.weight, &layer.bias));
        }
        self.step += 1;
        Ok(StepMetrics {
            step: self.step,
            elbo: elbo_sum * scale,
            log_var: self.ema.iter().map(EmaVariance::log_mean_variance).collect(),
        })
    }

    /// Runs the remaining configured steps.
    pub fn run(&mut self) -> Result<Vec<StepMetrics>> {
        let mut out = Vec::with_capacity(self.cfg.steps.saturating_sub(self.step));
        while self.step < self.cfg.steps {
            out.push(self.step()?);
        }
        Ok(out)
    }

    /// Metrics CSV, keeping every `log_every`-th step.
    pub fn metrics_csv(&self, history: &[StepMetrics]) -> String {
        let mut s = metrics_header(self.model.layers());
        s.push('\n');
        for m in history.iter().filter(|m| m.step % self.cfg.log_every == 0) {
            s.push_str(&metrics_row(m));
            s.push('\n');
        }
        s
    }
}
