use rayon::prelude::*;

use super::{EstimatorConfig, GradientProblem};
use crate::cube;
use crate::error::{Error, Result};

/// Trials per independent stream; fixed so results do not depend on the thread count.
const CHUNK: usize = 2048;

/// Floor applied to log-variances of a constant stream.
pub const LOG_VARIANCE_FLOOR: f64 = -50.0;

/// Exponential moving estimate of per-coordinate variance.
///
/// Tracks an EMA mean and an EMA of the squared innovation `v - mean_prev`.
/// The first sample initialises the mean and leaves the variance at zero.
#[derive(Clone, Debug, PartialEq)]
pub struct EmaVariance {
    decay: f64,
    mean: Vec<f64>,
    var: Vec<f64>,
    count: usize,
}

impl EmaVariance {
    pub fn new(dim: usize, decay: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&decay) {
            return Err(Error::InvalidArgument(format!("EMA decay {decay} not in [0, 1)")));
        }
        Ok(Self { decay, mean: vec![0.0; dim], var: vec![0.0; dim], count: 0 })
    }

    pub fn update(&mut self, sample: &[f64]) {
        assert_eq!(sample.len(), self.mean.len());
        if self.count == 0 {
            self.mean.copy_from_slice(sample);
        } else {
            let d = self.decay;
            for ((m, v), &s) in self.mean.iter_mut().zip(self.var.iter_mut()).zip(sample) {
                let innov = s - *m;
                *v = d * *v + (1.0 - d) * innov * innov;
                *m = d * *m + (1.0 - d) * s;
            }
        }
        self.count += 1;
    }

    pub fn variance(&self) -> &[f64] {
        &self.var
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// ln of the variance averaged over coordinates, floored at [`LOG_VARIANCE_FLOOR`].
    pub fn log_mean_variance(&self) -> f64 {
        let m = self.var.iter().sum::<f64>() / self.var.len().max(1) as f64;
        if m > 0.0 {
            m.ln().max(LOG_VARIANCE_FLOOR)
        } else {
            LOG_VARIANCE_FLOOR
        }
    }
}

/// Per-coordinate statistics of single-sample gradient estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceReport {
    pub estimator: EstimatorConfig,
    pub seed: u64,
    pub trials: usize,
    pub mean: Vec<f64>,
    /// Unbiased sample variance.
    pub variance: Vec<f64>,
    /// Final value of the EMA variance track, decay `estimator.baseline_decay`.
    pub ema_variance: Vec<f64>,
}

impl VarianceReport {
    pub const CSV_HEADER: &'static str = "coord,mean,variance,ema_variance,trials,seed,estimator";

    /// CSV rows, one per coordinate, without the header line.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for i in 0..self.mean.len() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                i, self.mean[i], self.variance[i], self.ema_variance[i], self.trials, self.seed, self.estimator.kind
            ));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}", Self::CSV_HEADER, self.csv_rows())
    }

    /// Standard error of the mean for each coordinate.
    pub fn standard_error(&self) -> Vec<f64> {
        self.variance.iter().map(|v| (v / self.trials as f64).sqrt()).collect()
    }
}

/// Runs `trials` independent single-sample estimates and summarises them.
///
/// Trials are split into fixed-size chunks, chunk `c` drawing from substream `c`
/// of `seed`; chunks may run in parallel and are merged in order.
pub fn benchmark_variance(
    problem: &GradientProblem,
    cfg: &EstimatorConfig,
    trials: usize,
    seed: u64,
) -> Result<VarianceReport> {
    cfg.validate()?;
    if trials < 2 {
        return Err(Error::InvalidArgument("benchmark needs at least 2 trials".into()));
    }
    let n = problem.dim();
    let chunks = trials.div_ceil(CHUNK);
    let samples: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<Vec<f64>> {
            let mut rng = cube::substream(seed, c as u64);
            let count = CHUNK.min(trials - c * CHUNK);
            let mut out = Vec::with_capacity(count * n);
            for _ in 0..count {
                out.extend(problem.sample_contribution(cfg, &mut rng)?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut mean = vec![0.0; n];
    let mut ema = EmaVariance::new(n, cfg.baseline_decay)?;
    for row in samples.iter().flat_map(|c| c.chunks_exact(n)) {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("estimator contribution".into()));
        }
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
        ema.update(row);
    }
    mean.iter_mut().for_each(|m| *m /= trials as f64);
    let mut variance = vec![0.0; n];
    for row in samples.iter().flat_map(|c| c.chunks_exact(n)) {
        for ((s, v), m) in variance.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    variance.iter_mut().for_each(|s| *s /= (trials - 1) as f64);

    Ok(VarianceReport {
        estimator: cfg.clone(),
        seed,
        trials,
        mean,
        variance,
        ema_variance: ema.variance().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::ProductDistribution;
    use crate::estimators::EstimatorKind;
    use crate::fourier::BooleanFunction;
    use rand::Rng;

    #[test]
    fn constant_function_reinforce_variance() {
        // Var(c score_i) = c^2 4 / sigma_i^2 = 4 c^2 at p = 0.5
        let c = 1.5;
        let p = GradientProblem::new(
            BooleanFunction::constant(2, c).unwrap(),
            BooleanFunction::constant(2, 0.0).unwrap(),
            ProductDistribution::uniform(2, 0.5).unwrap(),
        )
        .unwrap();
        let r = benchmark_variance(&p, &EstimatorConfig::new(EstimatorKind::Reinforce), 100_000, 1).unwrap();
        for i in 0..2 {
            assert!((r.variance[i] - 4.0 * c * c).abs() < 0.05, "{:?}", r.variance);
            assert!(r.mean[i].abs() < 4.0 * r.standard_error()[i]);
        }
    }

    #[test]
    fn muprop_on_linear_function_has_zero_variance() {
        let d = ProductDistribution::new(vec![0.3, 0.8]).unwrap();
        let f = BooleanFunction::tabulate(2, |x| 0.5 * x.get(0) - 2.0 * x.get(1) + 1.0).unwrap();
        let p = GradientProblem::new(f, BooleanFunction::constant(2, 0.0).unwrap(), d).unwrap();
        let r = benchmark_variance(&p, &EstimatorConfig::new(EstimatorKind::Muprop), 5_000, 3).unwrap();
        assert!(r.variance.iter().all(|&v| v < 1e-24), "{:?}", r.variance);
    }

    #[test]
    fn benchmark_is_deterministic_and_validates() {
        let p = GradientProblem::new(
            BooleanFunction::majority(3).unwrap(),
            BooleanFunction::majority(3).unwrap(),
            ProductDistribution::uniform(3, 0.5).unwrap(),
        )
        .unwrap();
        let cfg = EstimatorConfig::new(EstimatorKind::FourierCv);
        let a = benchmark_variance(&p, &cfg, 5_000, 9).unwrap();
        let b = benchmark_variance(&p, &cfg, 5_000, 9).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert!(a.to_csv().starts_with("coord,mean,variance,ema_variance,trials,seed,estimator\n0,"));
        assert!(benchmark_variance(&p, &cfg, 1, 9).is_err());
    }

    #[test]
    fn ema_variance_behaviour() {
        let mut e = EmaVariance::new(1, 0.9).unwrap();
        for _ in 0..100 {
            e.update(&[3.0]);
        }
        assert_eq!(e.variance(), &[0.0]);
        assert_eq!(e.log_mean_variance(), LOG_VARIANCE_FLOOR);

        let mut e = EmaVariance::new(1, 0.0).unwrap();
        e.update(&[1.0]);
        e.update(&[4.0]);
        assert_eq!(e.variance(), &[9.0]);

        let mut rng = crate::cube::stream(5);
        let mut e = EmaVariance::new(2, 0.999).unwrap();
        for _ in 0..200_000 {
            e.update(&[rng.random_range(-1.0..1.0), 2.0 * rng.random_range(-1.0..1.0)]);
        }
        let v = e.variance();
        assert!((v[0] - 1.0 / 3.0).abs() < 0.05 && (v[1] - 4.0 / 3.0).abs() < 0.2, "{v:?}");
        assert!(EmaVariance::new(1, 1.0).is_err());
    }
}
