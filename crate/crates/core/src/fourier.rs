//! p-biased Fourier expansions of real-valued functions on the Boolean cube.
//!
//! Given a product distribution with means mu_i and deviations sigma_i, the
//! functions phi_S(x) = prod_{i in S} (x_i - mu_i) / sigma_i form an
//! orthonormal basis, and every f has a unique expansion
//! f = sum_S fhat(S) phi_S with fhat(S) = E[f phi_S].

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::cube::{self, BooleanPoint, ProductDistribution, SubsetIndex, MAX_ENUM_DIM};
use crate::error::{Error, Result};

/// Coefficients below this magnitude are not stored.
pub const DROP_TOLERANCE: f64 = 1e-14;

type Evaluator = Arc<dyn Fn(&BooleanPoint) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Backing {
    Table(Arc<[f64]>),
    Opaque(Evaluator),
}

/// A real-valued function on {-1, +1}^n.
///
/// Table-backed functions store all 2^n values by canonical point index and
/// support every exhaustive operation. Opaque functions can only be evaluated.
#[derive(Clone)]
pub struct BooleanFunction {
    n: usize,
    backing: Backing,
}

impl fmt::Debug for BooleanFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.backing {
            Backing::Table(t) => f.debug_struct("BooleanFunction").field("n", &self.n).field("table", t).finish(),
            Backing::Opaque(_) => f.debug_struct("BooleanFunction").field("n", &self.n).finish_non_exhaustive(),
        }
    }
}

impl BooleanFunction {
    pub fn from_table(n: usize, table: Vec<f64>) -> Result<Self> {
        check_enum_dim(n)?;
        if table.len() != 1 << n {
            return Err(Error::DimensionMismatch { expected: 1 << n, found: table.len() });
        }
        if table.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("truth table entry".into()));
        }
        Ok(Self { n, backing: Backing::Table(table.into()) })
    }

    /// Tabulates `f` over every point.
    pub fn tabulate(n: usize, f: impl Fn(&BooleanPoint) -> f64) -> Result<Self> {
        check_enum_dim(n)?;
        Self::from_table(n, BooleanPoint::all(n).map(|x| f(&x)).collect())
    }

    pub fn opaque(n: usize, f: impl Fn(&BooleanPoint) -> f64 + Send + Sync + 'static) -> Self {
        Self { n, backing: Backing::Opaque(Arc::new(f)) }
    }

    pub fn constant(n: usize, c: f64) -> Result<Self> {
        Self::tabulate(n, |_| c)
    }

    /// x_i.
    pub fn dictator(n: usize, i: usize) -> Result<Self> {
        if i >= n {
            return Err(Error::CoordinateOutOfRange { index: i, n });
        }
        Self::tabulate(n, |x| x.get(i))
    }

    /// sign(sum x_i) for odd n.
    pub fn majority(n: usize) -> Result<Self> {
        if n % 2 == 0 {
            return Err(Error::InvalidArgument("majority requires odd arity".into()));
        }
        Self::tabulate(n, |x| x.coords().iter().map(|&c| f64::from(c)).sum::<f64>().signum())
    }

    /// prod_{i in S} x_i.
    pub fn parity(n: usize, s: SubsetIndex) -> Result<Self> {
        if !s.fits(n) {
            return Err(Error::InvalidArgument(format!("subset {s} does not fit dimension {n}")));
        }
        Self::tabulate(n, |x| s.members().map(|i| x.get(i)).product())
    }

    /// +1 when every coordinate is +1, -1 otherwise.
    pub fn and(n: usize) -> Result<Self> {
        Self::tabulate(n, |x| if x.coords().iter().all(|&c| c == 1) { 1.0 } else { -1.0 })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn table(&self) -> Option<&[f64]> {
        match &self.backing {
            Backing::Table(t) => Some(t),
            Backing::Opaque(_) => None,
        }
    }

    pub fn require_table(&self) -> Result<&[f64]> {
        self.table().ok_or(Error::TruthTableRequired)
    }

    /// Evaluates at `x`. Panics if the dimensions differ.
    #[inline]
    pub fn eval(&self, x: &BooleanPoint) -> f64 {
        assert_eq!(x.dim(), self.n, "point dimension does not match function");
        match &self.backing {
            Backing::Table(t) => t[x.index() as usize],
            Backing::Opaque(f) => f(x),
        }
    }
}

fn check_enum_dim(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::InvalidArgument("dimension must be at least 1".into()))
    } else if n > MAX_ENUM_DIM {
        Err(Error::TooLarge { n, max: MAX_ENUM_DIM })
    } else {
        Ok(())
    }
}

/// A sparse multilinear polynomial in the phi basis: S -> fhat(S).
#[derive(Clone, Debug, PartialEq)]
pub struct FourierExpansion {
    n: usize,
    coeffs: BTreeMap<SubsetIndex, f64>,
}

impl FourierExpansion {
    pub fn empty(n: usize) -> Self {
        Self { n, coeffs: BTreeMap::new() }
    }

    /// Builds an expansion from (subset, coefficient) pairs, summing duplicates.
    pub fn from_terms(n: usize, terms: impl IntoIterator<Item = (SubsetIndex, f64)>) -> Result<Self> {
        let mut e = Self::empty(n);
        for (s, c) in terms {
            if !s.fits(n) {
                return Err(Error::InvalidArgument(format!("subset {s} does not fit dimension {n}")));
            }
            if !c.is_finite() {
                return Err(Error::NonFinite(format!("coefficient of {s}")));
            }
            let v = e.coeffs.get(&s).copied().unwrap_or(0.0) + c;
            e.set(s, v);
        }
        Ok(e)
    }

    /// Dense coefficients indexed by subset mask; entries under the drop tolerance are omitted.
    pub fn from_dense(n: usize, dense: &[f64]) -> Self {
        let coeffs = dense
            .iter()
            .enumerate()
            .filter(|(_, c)| c.abs() >= DROP_TOLERANCE)
            .map(|(m, &c)| (SubsetIndex::from_mask(m as u64), c))
            .collect();
        Self { n, coeffs }
    }

    pub fn to_dense(&self) -> Result<Vec<f64>> {
        check_enum_dim(self.n)?;
        let mut d = vec![0.0; 1 << self.n];
        for (s, &c) in &self.coeffs {
            d[s.mask() as usize] = c;
        }
        Ok(d)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coefficient(&self, s: SubsetIndex) -> f64 {
        self.coeffs.get(&s).copied().unwrap_or(0.0)
    }

    /// Sets a coefficient; values under the drop tolerance remove the entry.
    pub fn set(&mut self, s: SubsetIndex, c: f64) {
        if c.abs() < DROP_TOLERANCE {
            self.coeffs.remove(&s);
        } else {
            self.coeffs.insert(s, c);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (SubsetIndex, f64)> + '_ {
        self.coeffs.iter().map(|(&s, &c)| (s, c))
    }

    /// Applies `f(S, fhat(S))` to every stored coefficient.
    pub fn map(&self, f: impl Fn(SubsetIndex, f64) -> f64) -> Self {
        let mut out = Self::empty(self.n);
        for (s, c) in self.iter() {
            out.set(s, f(s, c));
        }
        out
    }

    /// fhat(empty), the mean under the distribution that produced the expansion.
    pub fn mean(&self) -> f64 {
        self.coefficient(SubsetIndex::EMPTY)
    }

    /// sum over non-empty S of fhat(S)^2 (Parseval).
    pub fn variance(&self) -> f64 {
        self.iter().filter(|(s, _)| !s.is_empty()).map(|(_, c)| c * c).sum()
    }

    /// Spectral weight at each degree 0..=n.
    pub fn degree_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.n + 1];
        for (s, c) in self.iter() {
            w[s.degree()] += c * c;
        }
        w
    }

    /// sum_S fhat(S) phi_S(x).
    pub fn evaluate(&self, x: &BooleanPoint, dist: &ProductDistribution) -> Result<f64> {
        if x.dim() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: x.dim() });
        }
        if dist.dim() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: dist.dim() });
        }
        let phis: Vec<f64> = (0..self.n).map(|i| cube::phi(i, x, dist)).collect();
        Ok(self.iter().map(|(s, c)| c * s.members().map(|i| phis[i]).product::<f64>()).sum())
    }

    /// Values at all 2^n points by canonical index (inverse of [`transform`]).
    pub fn to_truth_table(&self, dist: &ProductDistribution) -> Result<Vec<f64>> {
        if dist.dim() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: dist.dim() });
        }
        let mut v = self.to_dense()?;
        for i in 0..self.n {
            let (mu, sigma) = (dist.mean(i), dist.sigma(i));
            let (phi_minus, phi_plus) = ((-1.0 - mu) / sigma, (1.0 - mu) / sigma);
            let bit = 1usize << i;
            for idx in 0..v.len() {
                if idx & bit == 0 {
                    let (a, b) = (v[idx], v[idx | bit]);
                    v[idx] = a + b * phi_minus;
                    v[idx | bit] = a + b * phi_plus;
                }
            }
        }
        Ok(v)
    }

    pub fn to_function(&self, dist: &ProductDistribution) -> Result<BooleanFunction> {
        BooleanFunction::from_table(self.n, self.to_truth_table(dist)?)
    }

    /// One `members<TAB>coefficient` line per stored coefficient, `-` for the empty set.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (s, c) in self.iter() {
            out.push_str(&format!("{s}\t{c}\n"));
        }
        out
    }

    /// Parses the text format; blank lines and lines starting with `#` are skipped.
    pub fn from_text(n: usize, text: &str) -> Result<Self> {
        let mut terms = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse { line: ln + 1, message };
            let (set, coef) = line.split_once('\t').ok_or_else(|| err("missing tab separator".into()))?;
            let members: Vec<usize> = if set.trim() == "-" || set.trim() == "∅" {
                Vec::new()
            } else {
                set.split(',')
                    .map(|t| t.trim().parse::<usize>().map_err(|e| err(format!("bad index {t:?}: {e}"))))
                    .collect::<Result<_>>()?
            };
            let s = SubsetIndex::from_members(n, &members).map_err(|e| err(e.to_string()))?;
            let c: f64 = coef.trim().parse().map_err(|e| err(format!("bad coefficient {coef:?}: {e}")))?;
            terms.push((s, c));
        }
        Self::from_terms(n, terms)
    }
}

/// The p-biased Fourier transform of a table-backed function, in O(n 2^n).
///
/// Coordinate by coordinate, each pair (f(x_i = -1), f(x_i = +1)) is split into
/// its mean and its phi_i coefficient, which is (sigma_i / 2)(f_+ - f_-).
pub fn transform(f: &BooleanFunction, dist: &ProductDistribution) -> Result<FourierExpansion> {
    let table = f.require_table()?;
    let n = f.dim();
    if dist.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: dist.dim() });
    }
    let mut c = table.to_vec();
    for i in 0..n {
        let (p, half_sigma) = (dist.prob(i), dist.sigma(i) / 2.0);
        let bit = 1usize << i;
        for idx in 0..c.len() {
            if idx & bit == 0 {
                let (lo, hi) = (c[idx], c[idx | bit]);
                c[idx] = (1.0 - p) * lo + p * hi;
                c[idx | bit] = half_sigma * (hi - lo);
            }
        }
    }
    Ok(FourierExpansion::from_dense(n, &c))
}

/// E_dist[f] by enumeration.
pub fn expectation(f: &BooleanFunction, dist: &ProductDistribution) -> Result<f64> {
    let table = f.require_table()?;
    if dist.dim() != f.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), found: dist.dim() });
    }
    Ok(dist.point_weights()?.iter().zip(table).map(|(w, v)| w * v).sum())
}

/// ||f||_order = E[|f|^order]^(1/order), computed exactly.
pub fn norm(f: &BooleanFunction, dist: &ProductDistribution, order: f64) -> Result<f64> {
    if !(order >= 1.0) {
        return Err(Error::InvalidOrder(order));
    }
    let table = f.require_table()?;
    if dist.dim() != f.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), found: dist.dim() });
    }
    let m: f64 = dist.point_weights()?.iter().zip(table).map(|(w, v)| w * v.abs().powf(order)).sum();
    Ok(m.powf(1.0 / order))
}

/// Monte Carlo estimate of fhat(S): the average of f(x) phi_S(x) over `batch` samples.
pub fn coefficient_mc<R: Rng + ?Sized>(
    f: &BooleanFunction,
    s: SubsetIndex,
    dist: &ProductDistribution,
    batch: usize,
    rng: &mut R,
) -> Result<f64> {
    if batch == 0 {
        return Err(Error::InvalidArgument("batch must be at least 1".into()));
    }
    if dist.dim() != f.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), found: dist.dim() });
    }
    if !s.fits(f.dim()) {
        return Err(Error::InvalidArgument(format!("subset {s} does not fit dimension {}", f.dim())));
    }
    let mut acc = 0.0;
    for _ in 0..batch {
        let x = cube::sample(dist, rng);
        acc += f.eval(&x) * cube::phi_set(s, &x, dist);
    }
    Ok(acc / batch as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::stream;
    use rand::Rng;

    /// O(4^n) inner-product transform, kept independent of the butterfly.
    fn transform_direct(f: &BooleanFunction, dist: &ProductDistribution) -> Vec<f64> {
        let n = f.dim();
        (0..1u64 << n)
            .map(|m| {
                BooleanPoint::all(n)
                    .map(|x| dist.point_prob(&x) * f.eval(&x) * cube::phi_set(SubsetIndex::from_mask(m), &x, dist))
                    .sum()
            })
            .collect()
    }

    fn s(members: &[usize]) -> SubsetIndex {
        SubsetIndex::from_members(8, members).unwrap()
    }

    fn random_dist(n: usize, rng: &mut impl Rng) -> ProductDistribution {
        ProductDistribution::new((0..n).map(|_| rng.random_range(0.05..0.95)).collect()).unwrap()
    }

    #[test]
    fn dictator_spectrum() {
        let f = BooleanFunction::dictator(1, 0).unwrap();
        let e = transform(&f, &ProductDistribution::uniform(1, 0.5).unwrap()).unwrap();
        assert_eq!(e.mean(), 0.0);
        assert_eq!(e.coefficient(s(&[0])), 1.0);
        assert_eq!(e.len(), 1);
    }

    #[test]
    fn product_spectrum_biased() {
        let f = BooleanFunction::tabulate(2, |x| x.get(0) * x.get(1)).unwrap();
        let d = ProductDistribution::new(vec![0.75, 0.5]).unwrap();
        let e = transform(&f, &d).unwrap();
        assert!(e.coefficient(s(&[])).abs() < 1e-15);
        assert!(e.coefficient(s(&[0])).abs() < 1e-15);
        assert!((e.coefficient(s(&[1])) - 0.5).abs() < 1e-12);
        assert!((e.coefficient(s(&[0, 1])) - 0.8660254037844386).abs() < 1e-12);
        let direct = transform_direct(&f, &d);
        for (m, c) in direct.iter().enumerate() {
            assert!((e.coefficient(SubsetIndex::from_mask(m as u64)) - c).abs() < 1e-12);
        }
        assert!(e.mean().abs() < 1e-12);
        assert!((e.variance() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn majority_spectrum() {
        let f = BooleanFunction::majority(3).unwrap();
        let d = ProductDistribution::uniform(3, 0.5).unwrap();
        let e = transform(&f, &d).unwrap();
        let expected: BTreeMap<SubsetIndex, f64> =
            [(s(&[0]), 0.5), (s(&[1]), 0.5), (s(&[2]), 0.5), (s(&[0, 1, 2]), -0.5)].into_iter().collect();
        assert_eq!(e.coeffs, expected);
        assert_eq!(e.mean(), 0.0);
        assert_eq!(e.variance(), 1.0);
        let x = BooleanPoint::new(vec![1, 1, -1]).unwrap();
        assert_eq!(e.evaluate(&x, &d).unwrap(), 1.0);
    }

    #[test]
    fn constant_and_empty_expansions() {
        let d = ProductDistribution::uniform(2, 0.3).unwrap();
        let x = BooleanPoint::new(vec![1, -1]).unwrap();
        assert_eq!(FourierExpansion::empty(2).evaluate(&x, &d).unwrap(), 0.0);
        let c = FourierExpansion::from_terms(2, [(SubsetIndex::EMPTY, 2.5)]).unwrap();
        assert_eq!(c.evaluate(&x, &d).unwrap(), 2.5);
        assert_eq!(c.mean(), 2.5);
        assert_eq!(c.variance(), 0.0);
        let short = BooleanPoint::new(vec![1]).unwrap();
        assert!(c.evaluate(&short, &d).is_err());
    }

    #[test]
    fn round_trip_and_parseval_random() {
        let mut rng = stream(101);
        for n in 1..=8 {
            for _ in 0..5 {
                let d = random_dist(n, &mut rng);
                let table: Vec<f64> = (0..1 << n).map(|_| rng.random_range(-3.0..3.0)).collect();
                let f = BooleanFunction::from_table(n, table.clone()).unwrap();
                let e = transform(&f, &d).unwrap();
                for x in BooleanPoint::all(n) {
                    assert!((e.evaluate(&x, &d).unwrap() - f.eval(&x)).abs() < 1e-10);
                }
                let back = e.to_truth_table(&d).unwrap();
                for (a, b) in back.iter().zip(&table) {
                    assert!((a - b).abs() < 1e-10);
                }
                let sq = BooleanFunction::from_table(n, table.iter().map(|v| v * v).collect()).unwrap();
                let energy = expectation(&sq, &d).unwrap();
                let spectral: f64 = e.iter().map(|(_, c)| c * c).sum();
                assert!((energy - spectral).abs() < 1e-10);
                if n <= 5 {
                    let direct = transform_direct(&f, &d);
                    for (m, c) in direct.iter().enumerate() {
                        assert!((e.coefficient(SubsetIndex::from_mask(m as u64)) - c).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn coefficients_depend_on_distribution() {
        let f = BooleanFunction::tabulate(2, |x| x.get(0) * x.get(1)).unwrap();
        let a = transform(&f, &ProductDistribution::uniform(2, 0.5).unwrap()).unwrap();
        let b = transform(&f, &ProductDistribution::uniform(2, 0.7).unwrap()).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn transform_requires_table() {
        let f = BooleanFunction::opaque(2, |x| x.get(0));
        assert_eq!(
            transform(&f, &ProductDistribution::uniform(2, 0.5).unwrap()),
            Err(Error::TruthTableRequired)
        );
    }

    #[test]
    fn norms() {
        let d = ProductDistribution::uniform(2, 0.5).unwrap();
        let parity = BooleanFunction::parity(2, SubsetIndex::from_mask(0b11)).unwrap();
        for q in [1.0, 2.0, 3.5, 8.0] {
            assert!((norm(&parity, &d, q).unwrap() - 1.0).abs() < 1e-15);
        }
        let f = BooleanFunction::from_table(2, vec![2.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((norm(&f, &d, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((norm(&f, &d, 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(norm(&f, &d, 0.5), Err(Error::InvalidOrder(0.5)));

        let mut rng = stream(7);
        for _ in 0..100 {
            let t: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
            let f = BooleanFunction::from_table(3, t).unwrap();
            let d = random_dist(3, &mut rng);
            assert!(norm(&f, &d, 2.0).unwrap() <= norm(&f, &d, 4.0).unwrap() + 1e-12);
        }
    }

    #[test]
    fn coefficient_mc_estimates() {
        let f = BooleanFunction::majority(3).unwrap();
        let d = ProductDistribution::uniform(3, 0.5).unwrap();
        let mut rng = stream(9);
        let est = coefficient_mc(&f, s(&[0]), &d, 100_000, &mut rng).unwrap();
        assert!((est - 0.5).abs() < 0.02);

        let g = BooleanFunction::from_table(2, vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let d2 = ProductDistribution::new(vec![0.3, 0.8]).unwrap();
        let mean = expectation(&g, &d2).unwrap();
        let sd = (expectation(&BooleanFunction::from_table(2, vec![1.0, 4.0, 0.25, 9.0]).unwrap(), &d2).unwrap()
            - mean * mean)
            .sqrt();
        let est = coefficient_mc(&g, SubsetIndex::EMPTY, &d2, 100_000, &mut rng).unwrap();
        assert!((est - mean).abs() < 3.0 * sd / 100_000f64.sqrt());

        let c = BooleanFunction::constant(2, 4.0).unwrap();
        let small = coefficient_mc(&c, s(&[1]), &d2, 1_000, &mut rng).unwrap().abs();
        let large = coefficient_mc(&c, s(&[1]), &d2, 1_000_000, &mut rng).unwrap().abs();
        assert!(large < 0.05 && large < small.max(0.05));
        assert!(coefficient_mc(&c, s(&[1]), &d2, 0, &mut rng).is_err());
    }

    #[test]
    fn coefficient_mc_single_sample_is_unbiased() {
        // exhaustive expectation of the one-sample estimate f(x) phi_S(x)
        let mut rng = stream(31);
        let d = random_dist(4, &mut rng);
        let t: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = BooleanFunction::from_table(4, t).unwrap();
        let e = transform(&f, &d).unwrap();
        for m in 0..16u64 {
            let sidx = SubsetIndex::from_mask(m);
            let exact: f64 =
                BooleanPoint::all(4).map(|x| d.point_prob(&x) * f.eval(&x) * cube::phi_set(sidx, &x, &d)).sum();
            assert!((exact - e.coefficient(sidx)).abs() < 1e-12);
        }
    }

    #[test]
    fn text_format_round_trip() {
        let f = BooleanFunction::majority(3).unwrap();
        let d = ProductDistribution::uniform(3, 0.5).unwrap();
        let e = transform(&f, &d).unwrap();
        let text = e.to_text();
        assert_eq!(text, "0\t0.5\n1\t0.5\n2\t0.5\n0,1,2\t-0.5\n");
        assert_eq!(FourierExpansion::from_text(3, &text).unwrap(), e);
        let c = FourierExpansion::from_text(2, "# comment\n-\t1.25\n").unwrap();
        assert_eq!(c.mean(), 1.25);
        assert!(FourierExpansion::from_text(2, "0 1.0").is_err());
        assert!(FourierExpansion::from_text(2, "5\t1.0").is_err());
    }
}
