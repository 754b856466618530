//! Discrete derivative, the noise operator T_rho, exact gradient oracles and
//! hypercontractivity checks.

use rand::Rng;

use crate::cube::{self, check_rho, BooleanPoint, ProductDistribution, SubsetIndex};
use crate::error::{Error, Result};
use crate::fourier::{self, transform, BooleanFunction, FourierExpansion};

/// Default central-difference step for [`numeric_gradient`].
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// D_i f: for every S containing i, fhat(S) moves to S \ {i}.
pub fn discrete_derivative(e: &FourierExpansion, i: usize) -> Result<FourierExpansion> {
    if i >= e.dim() {
        return Err(Error::CoordinateOutOfRange { index: i, n: e.dim() });
    }
    FourierExpansion::from_terms(e.dim(), e.iter().filter(|(s, _)| s.contains(i)).map(|(s, c)| (s.without(i), c)))
}

/// T_rho f: fhat(S) scaled by rho^|S|.
pub fn noise_exact(e: &FourierExpansion, rho: f64) -> Result<FourierExpansion> {
    check_rho(rho)?;
    Ok(e.map(|s, c| c * rho.powi(s.degree() as i32)))
}

/// Monte Carlo T_rho f(x): the average of f over `k` independent rho-correlated resamples of x.
pub fn noise_mc<R: Rng + ?Sized>(
    f: &BooleanFunction,
    x: &BooleanPoint,
    rho: f64,
    dist: &ProductDistribution,
    k: usize,
    rng: &mut R,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("noise sample count k must be at least 1".into()));
    }
    let mut acc = 0.0;
    for _ in 0..k {
        acc += f.eval(&cube::correlated_sample(x, rho, dist, rng)?);
    }
    Ok(acc / k as f64)
}

/// Truth table of T_rho f, via transform, scaling and inverse transform.
pub fn noise_table(f: &BooleanFunction, dist: &ProductDistribution, rho: f64) -> Result<Vec<f64>> {
    noise_exact(&transform(f, dist)?, rho)?.to_truth_table(dist)
}

/// d E[f] / d p_i = (2 / sigma_i) fhat({i}) for every coordinate.
pub fn exact_gradient(f: &BooleanFunction, dist: &ProductDistribution) -> Result<Vec<f64>> {
    let e = transform(f, dist)?;
    Ok((0..f.dim()).map(|i| 2.0 / dist.sigma(i) * e.coefficient(SubsetIndex::singleton(i))).collect())
}

/// Central difference of the enumerated expectation E_p[f] with respect to p_i.
pub fn numeric_gradient(f: &BooleanFunction, dist: &ProductDistribution, i: usize, h: f64) -> Result<f64> {
    if i >= dist.dim() {
        return Err(Error::CoordinateOutOfRange { index: i, n: dist.dim() });
    }
    let p = dist.prob(i);
    let (lo, hi) = (p - h, p + h);
    if !(h > 0.0) || lo < cube::PROB_FLOOR || hi > 1.0 - cube::PROB_FLOOR {
        return Err(Error::StepOutOfRange { index: i, p, h });
    }
    let up = fourier::expectation(f, &dist.with_prob(i, hi)?)?;
    let down = fourier::expectation(f, &dist.with_prob(i, lo)?)?;
    Ok((up - down) / (2.0 * h))
}

/// Value and gradient of a smooth extension of f to real-valued inputs.
///
/// Estimators that linearize f (MuProp, straight-through) consume this.
pub trait DerivativeOracle: Send + Sync {
    fn value(&self, z: &[f64]) -> f64;
    fn gradient(&self, z: &[f64]) -> Vec<f64>;
}

/// The multilinear extension of an expansion: phi_i evaluated at real z_i.
#[derive(Clone, Debug)]
pub struct MultilinearOracle {
    expansion: FourierExpansion,
    dist: ProductDistribution,
}

impl MultilinearOracle {
    pub fn new(expansion: FourierExpansion, dist: ProductDistribution) -> Result<Self> {
        if expansion.dim() != dist.dim() {
            return Err(Error::DimensionMismatch { expected: expansion.dim(), found: dist.dim() });
        }
        Ok(Self { expansion, dist })
    }

    pub fn from_function(f: &BooleanFunction, dist: &ProductDistribution) -> Result<Self> {
        Self::new(transform(f, dist)?, dist.clone())
    }

    fn phis(&self, z: &[f64]) -> Vec<f64> {
        z.iter().enumerate().map(|(i, &zi)| (zi - self.dist.mean(i)) / self.dist.sigma(i)).collect()
    }
}

impl DerivativeOracle for MultilinearOracle {
    fn value(&self, z: &[f64]) -> f64 {
        let phis = self.phis(z);
        self.expansion.iter().map(|(s, c)| c * s.members().map(|i| phis[i]).product::<f64>()).sum()
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let phis = self.phis(z);
        let mut g = vec![0.0; z.len()];
        for (s, c) in self.expansion.iter() {
            for i in s.members() {
                let rest: f64 = s.without(i).members().map(|j| phis[j]).product();
                g[i] += c * rest / self.dist.sigma(i);
            }
        }
        g
    }
}

/// The admissible noise rate of the hypercontractive inequality ||T_rho f||_q <= ||f||_2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HyperparamBound {
    pub q: f64,
    pub lambda: f64,
    pub rho_max: f64,
}

impl HyperparamBound {
    /// rho_max = (q - 1)^(-1/2) lambda^(1/2 - 1/q).
    pub fn new(q: f64, lambda: f64) -> Result<Self> {
        if !(q > 2.0) || !q.is_finite() {
            return Err(Error::InvalidArgument(format!("norm order q = {q} must exceed 2")));
        }
        if !(lambda > 0.0 && lambda <= 0.5) {
            return Err(Error::InvalidArgument(format!("lambda = {lambda} must lie in (0, 0.5]")));
        }
        let rho_max = lambda.powf(0.5 - 1.0 / q) / (q - 1.0).sqrt();
        Ok(Self { q, lambda, rho_max })
    }

    /// Uses the tightest lambda the distribution admits: min_i min(p_i, 1 - p_i).
    pub fn for_distribution(dist: &ProductDistribution, q: f64) -> Result<Self> {
        Self::new(q, dist.min_outcome_prob())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HypercontractivityReport {
    pub bound: HyperparamBound,
    /// ||T_rho f||_q at rho = rho_max.
    pub lhs: f64,
    /// ||f||_2.
    pub rhs: f64,
    pub holds: bool,
    /// ||T_rho f||_q at rho = rho_max / 2.
    pub lhs_interior: f64,
    pub holds_interior: bool,
}

const HYPER_SLACK: f64 = 1e-10;

pub fn hypercontractivity_check(
    f: &BooleanFunction,
    dist: &ProductDistribution,
    q: f64,
) -> Result<HypercontractivityReport> {
    let bound = HyperparamBound::for_distribution(dist, q)?;
    let e = transform(f, dist)?;
    let rhs = fourier::norm(f, dist, 2.0)?;
    let noised_norm = |rho: f64| -> Result<f64> {
        let t = noise_exact(&e, rho)?.to_function(dist)?;
        fourier::norm(&t, dist, q)
    };
    let lhs = noised_norm(bound.rho_max)?;
    let lhs_interior = noised_norm(bound.rho_max / 2.0)?;
    Ok(HypercontractivityReport {
        bound,
        lhs,
        rhs,
        holds: lhs <= rhs + HYPER_SLACK,
        lhs_interior,
        holds_interior: lhs_interior <= rhs + HYPER_SLACK,
    })
}
