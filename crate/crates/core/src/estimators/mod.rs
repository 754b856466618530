//! Score-function gradient estimators for the parameters p_i of a product
//! distribution, and an exact enumeration oracle for their expectations.
//!
//! Every per-sample estimator returns a length-n contribution vector whose
//! expectation (over x and any internal resampling) targets d E[f] / d p_i.
//! With score_i(x) = 2 phi_i(x) / sigma_i = d log p(x) / d p_i, the estimators are:
//!
//! | kind                       | learning signal t(x)                                  | correction       |
//! |----------------------------|-------------------------------------------------------|------------------|
//! | `reinforce`                | f(x)                                                  |                  |
//! | `reinforce_const_baseline` | f(x) - c                                              |                  |
//! | `straight_through`         | (pathwise) 2 df/dx_i at x                             |                  |
//! | `muprop`                   | f(x) - f(mu) - <grad f(mu), x - mu>                   | 2 df/dmu_i       |
//! | `fourier_cv`               | f(x) - g(x) + T_rho g(x) / rho                        |                  |
//! | `fourier_cv_alt`           | f(x) - g(x) + T_rho g(x) + T_(1-rho) g(x)             |                  |
//! | `combined`                 | f - b - f(mu) - a<grad f(mu), x - mu> - B(g - T_rho g / rho) | 2 a df/dmu_i |

mod bench;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cube::{self, BooleanPoint, ProductDistribution};
use crate::error::{Error, Result};
use crate::fourier::BooleanFunction;
use crate::operators::{self, DerivativeOracle, MultilinearOracle};

pub use bench::{benchmark_variance, EmaVariance, VarianceReport, LOG_VARIANCE_FLOOR};

/// Largest dimension accepted by [`expected_value_by_enumeration`].
pub const MAX_ORACLE_DIM: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Reinforce,
    ReinforceConstBaseline,
    StraightThrough,
    Muprop,
    FourierCv,
    FourierCvAlt,
    Combined,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 7] = [
        EstimatorKind::Reinforce,
        EstimatorKind::ReinforceConstBaseline,
        EstimatorKind::StraightThrough,
        EstimatorKind::Muprop,
        EstimatorKind::FourierCv,
        EstimatorKind::FourierCvAlt,
        EstimatorKind::Combined,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Reinforce => "reinforce",
            EstimatorKind::ReinforceConstBaseline => "reinforce_const_baseline",
            EstimatorKind::StraightThrough => "straight_through",
            EstimatorKind::Muprop => "muprop",
            EstimatorKind::FourierCv => "fourier_cv",
            EstimatorKind::FourierCvAlt => "fourier_cv_alt",
            EstimatorKind::Combined => "combined",
        }
    }

    /// Whether the expectation equals the true gradient for an exact derivative oracle and any g.
    pub fn is_unbiased(self) -> bool {
        self != EstimatorKind::StraightThrough
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown estimator {s:?}")))
    }
}

/// Estimator selection and hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    pub rho: f64,
    /// Weight of the first-order Taylor term in `combined`.
    pub alpha: f64,
    /// Weight of the noise-operator control variate in `combined`.
    pub beta: f64,
    /// Correlated samples used per estimate of T_rho g(x).
    pub k: usize,
    /// Decay of exponential moving averages (variance tracking, running baselines).
    pub baseline_decay: f64,
    /// Constant c for `reinforce_const_baseline`, and the input baseline b for `combined`.
    pub baseline: f64,
    /// Use grad f(x) instead of grad f(mu) in the Taylor term of `combined`, with no
    /// analytic correction. Biased; kept to measure the bias.
    pub taylor_at_sample: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            kind: EstimatorKind::Reinforce,
            rho: 0.5,
            alpha: 1.0,
            beta: 1.0,
            k: 1,
            baseline_decay: 0.99,
            baseline: 0.0,
            taylor_at_sample: false,
        }
    }
}

impl EstimatorConfig {
    pub fn new(kind: EstimatorKind) -> Self {
        Self { kind, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.rho.is_finite() || !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::RhoOutOfRange(self.rho));
        }
        if matches!(self.kind, EstimatorKind::FourierCv | EstimatorKind::Combined) && self.rho == 0.0 {
            return Err(Error::RhoOutOfRange(self.rho));
        }
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return Err(Error::InvalidArgument(format!("baseline_decay {} not in [0, 1)", self.baseline_decay)));
        }
        if ![self.alpha, self.beta, self.baseline].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("estimator coefficient".into()));
        }
        Ok(())
    }
}

/// One gradient estimate averaged over `batch` samples.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientEstimate {
    pub grad: Vec<f64>,
    pub batch: usize,
    pub seed: u64,
}

/// score_i(x) = 2 phi_i(x) / sigma_i.
#[inline]
pub fn score(i: usize, x: &BooleanPoint, dist: &ProductDistribution) -> f64 {
    2.0 * cube::phi(i, x, dist) / dist.sigma(i)
}

/// d log p(x) / d p_i in closed form: 1 / p_i if x_i = +1, else -1 / (1 - p_i).
#[inline]
pub fn log_prob_derivative(i: usize, x: &BooleanPoint, dist: &ProductDistribution) -> f64 {
    let p = dist.prob(i);
    if x.coords()[i] == 1 {
        1.0 / p
    } else {
        -1.0 / (1.0 - p)
    }
}

/// t(x) score(x) + correction, coordinate-wise.
pub fn score_weighted(t: f64, x: &BooleanPoint, dist: &ProductDistribution, correction: Option<&[f64]>) -> Vec<f64> {
    (0..x.dim())
        .map(|i| t * score(i, x, dist) + correction.map_or(0.0, |c| c[i]))
        .collect()
}

fn check_dims(f: &BooleanFunction, x: &BooleanPoint, dist: &ProductDistribution) -> Result<()> {
    if f.dim() != dist.dim() {
        return Err(Error::DimensionMismatch { expected: dist.dim(), found: f.dim() });
    }
    if x.dim() != dist.dim() {
        return Err(Error::DimensionMismatch { expected: dist.dim(), found: x.dim() });
    }
    Ok(())
}

pub fn reinforce(f: &BooleanFunction, x: &BooleanPoint, dist: &ProductDistribution) -> Vec<f64> {
    score_weighted(f.eval(x), x, dist, None)
}

pub fn reinforce_const_baseline(f: &BooleanFunction, x: &BooleanPoint, dist: &ProductDistribution, c: f64) -> Vec<f64> {
    score_weighted(f.eval(x) - c, x, dist, None)
}

/// 2 df/dx_i at the sample. Biased unless the oracle's derivative matches the discrete derivative.
pub fn straight_through(oracle: &dyn DerivativeOracle, x: &BooleanPoint) -> Vec<f64> {
    oracle.gradient(&x.to_f64()).into_iter().map(|g| 2.0 * g).collect()
}

struct Taylor {
    value: f64,
    grad: Vec<f64>,
}

impl Taylor {
    fn at_mean(oracle: &dyn DerivativeOracle, dist: &ProductDistribution) -> Self {
        let mu = dist.means();
        Self { value: oracle.value(&mu), grad: oracle.gradient(&mu) }
    }

    fn linear_term(&self, x: &BooleanPoint, dist: &ProductDistribution) -> f64 {
        self.grad.iter().enumerate().map(|(j, g)| g * (x.get(j) - dist.mean(j))).sum()
    }

    /// d/dp_i of E[<grad, x - mu>] = 2 grad_i.
    fn correction(&self, scale: f64) -> Vec<f64> {
        self.grad.iter().map(|g| 2.0 * scale * g).collect()
    }
}

pub fn muprop(
    f: &BooleanFunction,
    oracle: &dyn DerivativeOracle,
    x: &BooleanPoint,
    dist: &ProductDistribution,
) -> Vec<f64> {
    let taylor = Taylor::at_mean(oracle, dist);
    let t = f.eval(x) - taylor.value - taylor.linear_term(x, dist);
    score_weighted(t, x, dist, Some(&taylor.correction(1.0)))
}

/// Source of T_rho g(x) values: Monte Carlo resampling or exact tables.
trait NoiseSource {
    fn noise(&mut self, g: &BooleanFunction, x: &BooleanPoint, rho: f64) -> Result<f64>;
}

struct MonteCarlo<'r, R: Rng + ?Sized> {
    dist: &'r ProductDistribution,
    k: usize,
    rng: &'r mut R,
}

impl<R: Rng + ?Sized> NoiseSource for MonteCarlo<'_, R> {
    fn noise(&mut self, g: &BooleanFunction, x: &BooleanPoint, rho: f64) -> Result<f64> {
        operators::noise_mc(g, x, rho, self.dist, self.k, self.rng)
    }
}

/// Exact T_rho g tables, one per distinct rho.
struct ExactNoise {
    tables: Vec<(f64, Vec<f64>)>,
}

impl ExactNoise {
    fn new(g: &BooleanFunction, dist: &ProductDistribution, rhos: &[f64]) -> Result<Self> {
        let mut tables = Vec::new();
        for &rho in rhos {
            tables.push((rho, operators::noise_table(g, dist, rho)?));
        }
        Ok(Self { tables })
    }
}

impl NoiseSource for ExactNoise {
    fn noise(&mut self, _g: &BooleanFunction, x: &BooleanPoint, rho: f64) -> Result<f64> {
        self.tables
            .iter()
            .find(|(r, _)| *r == rho)
            .map(|(_, t)| t[x.index() as usize])
            .ok_or_else(|| Error::InvalidArgument(format!("no exact noise table for rho = {rho}")))
    }
}

fn fourier_cv_signal(
    f: &BooleanFunction,
    g: &BooleanFunction,
    x: &BooleanPoint,
    rho: f64,
    noise: &mut dyn NoiseSource,
) -> Result<f64> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::RhoOutOfRange(rho));
    }
    Ok(f.eval(x) - (g.eval(x) - noise.noise(g, x, rho)? / rho))
}

fn fourier_cv_alt_signal(
    f: &BooleanFunction,
    g: &BooleanFunction,
    x: &BooleanPoint,
    rho: f64,
    noise: &mut dyn NoiseSource,
) -> Result<f64> {
    cube::check_rho(rho)?;
    let variate = g.eval(x) - noise.noise(g, x, rho)? - noise.noise(g, x, 1.0 - rho)?;
    Ok(f.eval(x) - variate)
}

/// REINFORCE with the noise-operator control variate g - T_rho g / rho,
/// whose degree-1 coefficients vanish for every g.
pub fn fourier_cv<R: Rng + ?Sized>(
    f: &BooleanFunction,
    g: &BooleanFunction,
    x: &BooleanPoint,
    dist: &ProductDistribution,
    rho: f64,
    k: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_dims(f, x, dist)?;
    check_dims(g, x, dist)?;
    let mut mc = MonteCarlo { dist, k, rng };
    let t = fourier_cv_signal(f, g, x, rho, &mut mc)?;
    Ok(score_weighted(t, x, dist, None))
}

/// REINFORCE with the alternate variate g - T_rho g - T_(1-rho) g.
pub fn fourier_cv_alt<R: Rng + ?Sized>(
    f: &BooleanFunction,
    g: &BooleanFunction,
    x: &BooleanPoint,
    dist: &ProductDistribution,
    rho: f64,
    k: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_dims(f, x, dist)?;
    check_dims(g, x, dist)?;
    let mut mc = MonteCarlo { dist, k, rng };
    let t = fourier_cv_alt_signal(f, g, x, rho, &mut mc)?;
    Ok(score_weighted(t, x, dist, None))
}

fn combined_contribution(
    f: &BooleanFunction,
    b: f64,
    oracle: &dyn DerivativeOracle,
    g: &BooleanFunction,
    x: &BooleanPoint,
    dist: &ProductDistribution,
    cfg: &EstimatorConfig,
    noise: &mut dyn NoiseSource,
) -> Result<Vec<f64>> {
    let taylor = Taylor::at_mean(oracle, dist);
    let cv = if cfg.beta == 0.0 {
        0.0
    } else {
        if !(cfg.rho > 0.0) {
            return Err(Error::RhoOutOfRange(cfg.rho));
        }
        g.eval(x) - noise.noise(g, x, cfg.rho)? / cfg.rho
    };
    if cfg.taylor_at_sample {
        let grad_x = oracle.gradient(&x.to_f64());
        let lin: f64 = grad_x.iter().enumerate().map(|(j, d)| d * (x.get(j) - dist.mean(j))).sum();
        let t = f.eval(x) - b - taylor.value - cfg.alpha * lin - cfg.beta * cv;
        return Ok(score_weighted(t, x, dist, None));
    }
    let t = f.eval(x) - b - taylor.value - cfg.alpha * taylor.linear_term(x, dist) - cfg.beta * cv;
    Ok(score_weighted(t, x, dist, Some(&taylor.correction(cfg.alpha))))
}

/// MuProp terms, an input baseline `b` (independent of x) and the noise-operator variate:
///
/// t(x) = f(x) - b - f(mu) - alpha <grad f(mu), x - mu> - beta (g(x) - T_rho g(x) / rho),
/// contribution_i = t(x) score_i(x) + 2 alpha df(mu)/dmu_i.
#[allow(clippy::too_many_arguments)]
pub fn combined<R: Rng + ?Sized>(
    f: &BooleanFunction,
    b: f64,
    oracle: &dyn DerivativeOracle,
    g: &BooleanFunction,
    x: &BooleanPoint,
    dist: &ProductDistribution,
    cfg: &EstimatorConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_dims(f, x, dist)?;
    check_dims(g, x, dist)?;
    let mut mc = MonteCarlo { dist, k: cfg.k, rng };
    combined_contribution(f, b, oracle, g, x, dist, cfg, &mut mc)
}

/// Everything an estimator needs: the objective f, the control-variate function g,
/// the distribution, and a derivative oracle for f's smooth extension.
#[derive(Clone)]
pub struct GradientProblem {
    pub f: BooleanFunction,
    pub g: BooleanFunction,
    pub dist: ProductDistribution,
    oracle: Arc<dyn DerivativeOracle>,
}

impl fmt::Debug for GradientProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GradientProblem")
            .field("f", &self.f)
            .field("g", &self.g)
            .field("dist", &self.dist)
            .finish_non_exhaustive()
    }
}

impl GradientProblem {
    /// Uses the exact multilinear extension of `f` as derivative oracle (f must be table-backed).
    pub fn new(f: BooleanFunction, g: BooleanFunction, dist: ProductDistribution) -> Result<Self> {
        let oracle = Arc::new(MultilinearOracle::from_function(&f, &dist)?);
        Self::with_oracle(f, g, dist, oracle)
    }

    pub fn with_oracle(
        f: BooleanFunction,
        g: BooleanFunction,
        dist: ProductDistribution,
        oracle: Arc<dyn DerivativeOracle>,
    ) -> Result<Self> {
        for d in [f.dim(), g.dim()] {
            if d != dist.dim() {
                return Err(Error::DimensionMismatch { expected: dist.dim(), found: d });
            }
        }
        Ok(Self { f, g, dist, oracle })
    }

    pub fn dim(&self) -> usize {
        self.dist.dim()
    }

    pub fn oracle(&self) -> &dyn DerivativeOracle {
        self.oracle.as_ref()
    }

    fn contribution_with(&self, cfg: &EstimatorConfig, x: &BooleanPoint, noise: &mut dyn NoiseSource) -> Result<Vec<f64>> {
        let (f, g, dist) = (&self.f, &self.g, &self.dist);
        Ok(match cfg.kind {
            EstimatorKind::Reinforce => reinforce(f, x, dist),
            EstimatorKind::ReinforceConstBaseline => reinforce_const_baseline(f, x, dist, cfg.baseline),
            EstimatorKind::StraightThrough => straight_through(self.oracle(), x),
            EstimatorKind::Muprop => muprop(f, self.oracle(), x, dist),
            EstimatorKind::FourierCv => score_weighted(fourier_cv_signal(f, g, x, cfg.rho, noise)?, x, dist, None),
            EstimatorKind::FourierCvAlt => {
                score_weighted(fourier_cv_alt_signal(f, g, x, cfg.rho, noise)?, x, dist, None)
            }
            EstimatorKind::Combined => combined_contribution(f, cfg.baseline, self.oracle(), g, x, dist, cfg, noise)?,
        })
    }

    /// One single-sample contribution at a given x.
    pub fn contribution<R: Rng + ?Sized>(&self, cfg: &EstimatorConfig, x: &BooleanPoint, rng: &mut R) -> Result<Vec<f64>> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.dim() });
        }
        let mut mc = MonteCarlo { dist: &self.dist, k: cfg.k, rng };
        self.contribution_with(cfg, x, &mut mc)
    }

    /// Draws x from the distribution and returns its contribution.
    pub fn sample_contribution<R: Rng + ?Sized>(&self, cfg: &EstimatorConfig, rng: &mut R) -> Result<Vec<f64>> {
        let x = cube::sample(&self.dist, rng);
        self.contribution(cfg, &x, rng)
    }

    /// Averages `batch` single-sample contributions drawn from a stream seeded by `seed`.
    pub fn estimate(&self, cfg: &EstimatorConfig, batch: usize, seed: u64) -> Result<GradientEstimate> {
        cfg.validate()?;
        if batch == 0 {
            return Err(Error::InvalidArgument("batch must be at least 1".into()));
        }
        let mut rng = cube::stream(seed);
        let mut grad = vec![0.0; self.dim()];
        for _ in 0..batch {
            for (a, c) in grad.iter_mut().zip(self.sample_contribution(cfg, &mut rng)?) {
                *a += c;
            }
        }
        grad.iter_mut().for_each(|a| *a /= batch as f64);
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient estimate".into()));
        }
        Ok(GradientEstimate { grad, batch, seed })
    }
}

/// Exact expectation of the per-sample contribution over x ~ dist.
///
/// Monte Carlo estimates of T_rho g are replaced by the exact noise-operated
/// table, which leaves the expectation unchanged since the estimators are linear in it.
pub fn expected_value_by_enumeration(problem: &GradientProblem, cfg: &EstimatorConfig) -> Result<Vec<f64>> {
    let n = problem.dim();
    if n > MAX_ORACLE_DIM {
        return Err(Error::TooLarge { n, max: MAX_ORACLE_DIM });
    }
    problem.f.require_table()?;
    problem.g.require_table()?;
    let mut noise = ExactNoise::new(&problem.g, &problem.dist, &[cfg.rho, 1.0 - cfg.rho])?;
    let weights = problem.dist.point_weights()?;
    let mut acc = vec![0.0; n];
    for (x, w) in BooleanPoint::all(n).zip(weights) {
        let c = problem.contribution_with(cfg, &x, &mut noise)?;
        for (a, ci) in acc.iter_mut().zip(c) {
            *a += w * ci;
        }
    }
    Ok(acc)
}
