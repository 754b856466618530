//! Toy sigmoid belief networks trained with the score-function estimators.

pub mod checkpoint;
pub mod data;
pub mod model;
pub mod net;
pub mod train;

pub use data::Dataset;
pub use model::{elbo_sample, exact_elbo, ElboSample, InferenceNet, SbnModel};
pub use net::{Activation, Mlp};
pub use train::{q_gradient, Baselines, StepMetrics, TrainConfig, Trainer};

use crate::error::Result;
use crate::estimators::EmaVariance;

/// ln EMA variance after each sample of a stream of gradient vectors.
pub fn variance_ema_track(history: &[Vec<f64>], decay: f64) -> Result<Vec<f64>> {
    let dim = history.first().map_or(0, Vec::len);
    let mut ema = EmaVariance::new(dim, decay)?;
    Ok(history
        .iter()
        .map(|g| {
            ema.update(g);
            ema.log_mean_variance()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::LOG_VARIANCE_FLOOR;
    use rand::Rng;

    #[test]
    fn constant_stream_hits_the_floor() {
        let t = variance_ema_track(&vec![vec![2.0, -1.0]; 50], 0.9).unwrap();
        assert!(t.iter().all(|&v| v == LOG_VARIANCE_FLOOR));
        assert!(variance_ema_track(&[vec![1.0]], 1.0).is_err());
    }

    #[test]
    fn known_variance_is_recovered() {
        // uniform on [-a, a] has variance a^2 / 3 = 4
        let a = 12f64.sqrt();
        let mut rng = crate::cube::stream(8);
        let h: Vec<Vec<f64>> = (0..100_000).map(|_| vec![rng.random_range(-a..a)]).collect();
        let t = variance_ema_track(&h, 0.99).unwrap();
        let tail = &t[50_000..];
        let mean_var = tail.iter().map(|v| v.exp()).sum::<f64>() / tail.len() as f64;
        assert!((mean_var.ln() - 4f64.ln()).abs() < 0.1 * 4f64.ln(), "{mean_var}");
    }

    #[test]
    fn zero_decay_is_squared_innovation() {
        let t = variance_ema_track(&[vec![1.0], vec![4.0], vec![2.0]], 0.0).unwrap();
        assert_eq!(t[1], 9f64.ln());
        assert_eq!(t[2], 4f64.ln());
    }
}
