//! Points on the Boolean cube {-1, +1}^n, product distributions over it,
//! seeded sampling and rho-correlated resampling.
//!
//! Coordinates are always -1 or +1. Data stored as {0, 1} is converted at
//! ingestion (see [`BooleanPoint::from_bits`]).
//!
//! A point with `n <= 64` coordinates has a canonical integer index: bit `i`
//! is set exactly when coordinate `i` is +1 (coordinate 0 in the lowest bit).
//! Truth tables throughout the crate are laid out by this index.

use std::cmp::Ordering;
use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Largest dimension for which exhaustive enumeration (truth tables, oracles) is allowed.
pub const MAX_ENUM_DIM: usize = 16;

/// Largest dimension representable by a [`SubsetIndex`] bitmask.
pub const MAX_SUBSET_DIM: usize = 64;

/// Lower clamp for per-coordinate probabilities; the upper clamp is `1 - PROB_FLOOR`.
pub const PROB_FLOOR: f64 = 1e-6;

/// The crate's random stream: ChaCha8, a counter-based generator with 2^64 independent streams.
pub type Stream = ChaCha8Rng;

/// A stream seeded from `seed` (stream id 0).
pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `id` derived from the master `seed`.
pub fn substream(seed: u64, id: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// A point of {-1, +1}^n.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BooleanPoint {
    coords: Vec<i8>,
}

impl BooleanPoint {
    pub fn new(coords: Vec<i8>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidArgument("a point needs at least one coordinate".into()));
        }
        if let Some(&bad) = coords.iter().find(|&&c| c != 1 && c != -1) {
            return Err(Error::InvalidArgument(format!("coordinate value {bad} is not -1 or +1")));
        }
        Ok(Self { coords })
    }

    /// Converts `{0, 1}` data: 1 maps to +1 and 0 to -1.
    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        Self::new(bits.iter().map(|&b| if b { 1 } else { -1 }).collect())
    }

    /// The point whose canonical index is `index`.
    pub fn from_index(n: usize, index: u64) -> Self {
        assert!((1..=MAX_SUBSET_DIM).contains(&n), "dimension {n} not indexable");
        let coords = (0..n).map(|i| if index >> i & 1 == 1 { 1 } else { -1 }).collect();
        Self { coords }
    }

    pub fn index(&self) -> u64 {
        assert!(self.coords.len() <= MAX_SUBSET_DIM);
        self.coords
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 1)
            .fold(0u64, |acc, (i, _)| acc | (1 << i))
    }

    /// Every point of {-1, +1}^n in canonical index order.
    pub fn all(n: usize) -> impl Iterator<Item = BooleanPoint> {
        assert!((1..=MAX_ENUM_DIM).contains(&n), "cannot enumerate dimension {n}");
        (0..1u64 << n).map(move |idx| BooleanPoint::from_index(n, idx))
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[i8] {
        &self.coords
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        f64::from(self.coords[i])
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.coords.iter().map(|&c| f64::from(c)).collect()
    }
}

/// Independent Bernoulli coordinates: coordinate `i` is +1 with probability `p_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductDistribution {
    probs: Vec<f64>,
    clamped: Vec<usize>,
}

impl ProductDistribution {
    /// Builds the distribution, clamping each `p_i` into `[PROB_FLOOR, 1 - PROB_FLOOR]`.
    ///
    /// Coordinates that needed clamping are listed by [`clamped`](Self::clamped); callers that
    /// accept user input should surface them.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidArgument("distribution needs at least one coordinate".into()));
        }
        let mut clamped = Vec::new();
        let mut out = Vec::with_capacity(probs.len());
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidProbability(p));
            }
            let c = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
            if c != p {
                clamped.push(i);
            }
            out.push(c);
        }
        Ok(Self { probs: out, clamped })
    }

    pub fn uniform(n: usize, p: f64) -> Result<Self> {
        Self::new(vec![p; n])
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Indices whose requested probability was moved by clamping.
    pub fn clamped(&self) -> &[usize] {
        &self.clamped
    }

    #[inline]
    pub fn prob(&self, i: usize) -> f64 {
        self.probs[i]
    }

    /// mu_i = 2 p_i - 1.
    #[inline]
    pub fn mean(&self, i: usize) -> f64 {
        2.0 * self.probs[i] - 1.0
    }

    /// sigma_i = 2 sqrt(p_i (1 - p_i)).
    #[inline]
    pub fn sigma(&self, i: usize) -> f64 {
        let p = self.probs[i];
        2.0 * (p * (1.0 - p)).sqrt()
    }

    pub fn means(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.mean(i)).collect()
    }

    /// Minimum outcome probability over all coordinates.
    pub fn min_outcome_prob(&self) -> f64 {
        self.probs.iter().map(|&p| p.min(1.0 - p)).fold(f64::INFINITY, f64::min)
    }

    /// Probability of value `v` (either -1 or +1) at coordinate `i`.
    #[inline]
    pub fn coord_prob(&self, i: usize, v: i8) -> f64 {
        if v == 1 {
            self.probs[i]
        } else {
            1.0 - self.probs[i]
        }
    }

    /// Probability of the whole point under the product measure.
    pub fn point_prob(&self, x: &BooleanPoint) -> f64 {
        x.coords().iter().enumerate().map(|(i, &v)| self.coord_prob(i, v)).product()
    }

    /// Probabilities of all 2^n points, laid out by canonical index.
    pub fn point_weights(&self) -> Result<Vec<f64>> {
        let n = self.dim();
        if n > MAX_ENUM_DIM {
            return Err(Error::TooLarge { n, max: MAX_ENUM_DIM });
        }
        let mut w = vec![1.0; 1 << n];
        for i in 0..n {
            let (p, bit) = (self.probs[i], 1usize << i);
            for (idx, wi) in w.iter_mut().enumerate() {
                *wi *= if idx & bit != 0 { p } else { 1.0 - p };
            }
        }
        Ok(w)
    }

    /// A copy with coordinate `i` set to `p`, clamped like [`new`](Self::new).
    pub fn with_prob(&self, i: usize, p: f64) -> Result<Self> {
        let mut probs = self.probs.clone();
        probs[i] = p;
        Self::new(probs)
    }
}

/// A subset S of coordinates, stored as a bitmask (so n <= 64).
///
/// Ordered by degree first, then lexicographically by sorted members.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct SubsetIndex(u64);

impl SubsetIndex {
    pub const EMPTY: SubsetIndex = SubsetIndex(0);

    pub fn from_mask(mask: u64) -> Self {
        Self(mask)
    }

    /// Builds the subset from member indices; duplicates or indices >= `n` are rejected.
    pub fn from_members(n: usize, members: &[usize]) -> Result<Self> {
        if n > MAX_SUBSET_DIM {
            return Err(Error::TooLarge { n, max: MAX_SUBSET_DIM });
        }
        let mut mask = 0u64;
        for &i in members {
            if i >= n {
                return Err(Error::CoordinateOutOfRange { index: i, n });
            }
            if mask >> i & 1 == 1 {
                return Err(Error::InvalidArgument(format!("duplicate subset member {i}")));
            }
            mask |= 1 << i;
        }
        Ok(Self(mask))
    }

    pub fn singleton(i: usize) -> Self {
        assert!(i < MAX_SUBSET_DIM);
        Self(1 << i)
    }

    pub fn mask(self) -> u64 {
        self.0
    }

    pub fn degree(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, i: usize) -> bool {
        i < MAX_SUBSET_DIM && self.0 >> i & 1 == 1
    }

    pub fn without(self, i: usize) -> Self {
        Self(self.0 & !(1u64 << i))
    }

    /// True when every member is below `n`.
    pub fn fits(self, n: usize) -> bool {
        n >= MAX_SUBSET_DIM || self.0 >> n == 0
    }

    /// Members in increasing order.
    pub fn members(self) -> impl Iterator<Item = usize> {
        let mut rest = self.0;
        std::iter::from_fn(move || {
            if rest == 0 {
                None
            } else {
                let i = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(i)
            }
        })
    }
}

impl Ord for SubsetIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree().cmp(&other.degree()).then_with(|| {
            let diff = self.0 ^ other.0;
            if diff == 0 {
                Ordering::Equal
            } else if self.0 >> diff.trailing_zeros() & 1 == 1 {
                // shared members below the first difference; owning the smaller one sorts first
                Ordering::Less
            } else {
                Ordering::Greater
            }
        })
    }
}

impl PartialOrd for SubsetIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for SubsetIndex {
    /// Comma-separated members, or `-` for the empty set.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("-");
        }
        for (k, i) in self.members().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{i}")?;
        }
        Ok(())
    }
}

/// Draws x from `dist`; coordinate i is +1 with probability p_i, independently.
pub fn sample<R: Rng + ?Sized>(dist: &ProductDistribution, rng: &mut R) -> BooleanPoint {
    let coords = dist
        .probs()
        .iter()
        .map(|&p| if rng.random::<f64>() < p { 1 } else { -1 })
        .collect();
    BooleanPoint { coords }
}

/// Draws x' ~ N_rho(x): each coordinate keeps x_i with probability rho and is
/// otherwise resampled from its marginal.
pub fn correlated_sample<R: Rng + ?Sized>(
    x: &BooleanPoint,
    rho: f64,
    dist: &ProductDistribution,
    rng: &mut R,
) -> Result<BooleanPoint> {
    check_rho(rho)?;
    if x.dim() != dist.dim() {
        return Err(Error::DimensionMismatch { expected: dist.dim(), found: x.dim() });
    }
    let coords = x
        .coords()
        .iter()
        .zip(dist.probs())
        .map(|(&xi, &p)| {
            if rng.random::<f64>() < rho {
                xi
            } else if rng.random::<f64>() < p {
                1
            } else {
                -1
            }
        })
        .collect();
    Ok(BooleanPoint { coords })
}

/// Transition probability of the rho-correlated kernel, P(x' | x).
pub fn correlated_kernel_prob(
    x: &BooleanPoint,
    x_next: &BooleanPoint,
    rho: f64,
    dist: &ProductDistribution,
) -> f64 {
    x.coords()
        .iter()
        .zip(x_next.coords())
        .enumerate()
        .map(|(i, (&a, &b))| {
            let keep = if a == b { rho } else { 0.0 };
            keep + (1.0 - rho) * dist.coord_prob(i, b)
        })
        .product()
}

pub(crate) fn check_rho(rho: f64) -> Result<()> {
    if rho.is_finite() && (0.0..=1.0).contains(&rho) {
        Ok(())
    } else {
        Err(Error::RhoOutOfRange(rho))
    }
}

/// phi_i(x) = (x_i - mu_i) / sigma_i.
#[inline]
pub fn phi(i: usize, x: &BooleanPoint, dist: &ProductDistribution) -> f64 {
    (x.get(i) - dist.mean(i)) / dist.sigma(i)
}

/// phi_S(x), the product of phi_i over the members of S; 1 for the empty set.
pub fn phi_set(s: SubsetIndex, x: &BooleanPoint, dist: &ProductDistribution) -> f64 {
    s.members().map(|i| phi(i, x, dist)).product()
}
