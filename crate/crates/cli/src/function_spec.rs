//! The function-spec mini-language.
//!
//! ```text
//! dict(i)                       x_i
//! maj(n)                        sign(x_0 + ... + x_{n-1}), n odd
//! parity(i, j, ...)             x_i x_j ...
//! and(n)                        +1 iff x_0 = ... = x_{n-1} = +1, else -1
//! poly{ c*[i,j]; c*[]; ... }    sum of c * prod x_i in raw coordinates
//! table(hex)                    truth table; hex digit d holds points 4d..4d+3,
//!                               bit j of a digit is the value at point 4d+j (1 -> +1, 0 -> -1)
//! randpoly(n, degree, density, seed)
//! ```
//!
//! Coordinates are 0-based. Whitespace is ignored between tokens.

use std::fmt;

use bfgrad::cube::{stream, MAX_ENUM_DIM, MAX_SUBSET_DIM};
use bfgrad::{BooleanFunction, BooleanPoint, SubsetIndex};
use rand::Rng;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    /// Byte offset into the input.
    pub offset: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at byte {}: {}", self.offset, self.message)
    }
}

impl std::error::Error for ParseError {}

/// A monomial c * prod_{i in vars} x_i, `vars` sorted and distinct.
#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub coeff: f64,
    pub vars: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FunctionSpec {
    Dict(usize),
    Maj(usize),
    Parity(Vec<usize>),
    And(usize),
    Poly(Vec<Term>),
    /// Truth table on `n` coordinates, one bool per point (true -> +1).
    Table { n: usize, bits: Vec<bool> },
    RandPoly { n: usize, degree: usize, density: f64, seed: u64 },
}

impl FunctionSpec {
    /// Smallest dimension on which the function is defined.
    pub fn min_dim(&self) -> usize {
        let dim = match self {
            FunctionSpec::Dict(i) => i + 1,
            FunctionSpec::Maj(n) | FunctionSpec::And(n) => *n,
            FunctionSpec::Parity(s) => s.iter().max().map_or(0, |m| m + 1),
            FunctionSpec::Poly(terms) => terms.iter().flat_map(|t| t.vars.iter()).max().map_or(0, |m| m + 1),
            FunctionSpec::Table { n, .. } | FunctionSpec::RandPoly { n, .. } => *n,
        };
        dim.max(1)
    }

    /// The polynomial terms of `poly` and `randpoly` specs.
    pub fn terms(&self) -> Option<Vec<Term>> {
        match self {
            FunctionSpec::Poly(t) => Some(t.clone()),
            FunctionSpec::RandPoly { n, degree, density, seed } => Some(random_terms(*n, *degree, *density, *seed)),
            _ => None,
        }
    }

    /// Tabulates the function on `n >= min_dim()` coordinates; extra coordinates are ignored.
    pub fn build(&self, n: usize) -> bfgrad::Result<BooleanFunction> {
        if n < self.min_dim() {
            return Err(bfgrad::Error::DimensionMismatch { expected: self.min_dim(), found: n });
        }
        if n > MAX_ENUM_DIM {
            return Err(bfgrad::Error::TooLarge { n, max: MAX_ENUM_DIM });
        }
        let sign = |v: bool| if v { 1.0 } else { -1.0 };
        match self {
            FunctionSpec::Dict(i) => BooleanFunction::dictator(n, *i),
            FunctionSpec::Maj(m) => BooleanFunction::tabulate(n, |x| sign((0..*m).map(|i| x.get(i)).sum::<f64>() > 0.0)),
            FunctionSpec::And(m) => BooleanFunction::tabulate(n, |x| sign((0..*m).all(|i| x.get(i) > 0.0))),
            FunctionSpec::Parity(s) => BooleanFunction::parity(n, SubsetIndex::from_members(n, s)?),
            FunctionSpec::Table { n: m, bits } => {
                let mask = (1u64 << m) - 1;
                BooleanFunction::tabulate(n, |x| sign(bits[(x.index() & mask) as usize]))
            }
            FunctionSpec::Poly(_) | FunctionSpec::RandPoly { .. } => {
                let terms = self.terms().unwrap_or_default();
                BooleanFunction::tabulate(n, |x: &BooleanPoint| {
                    terms.iter().map(|t| t.coeff * t.vars.iter().map(|&i| x.get(i)).product::<f64>()).sum()
                })
            }
        }
    }
}

/// Every subset of size <= degree, in mask order, kept with probability `density`
/// and given a coefficient uniform in [-1, 1).
fn random_terms(n: usize, degree: usize, density: f64, seed: u64) -> Vec<Term> {
    let mut rng = stream(seed);
    let mut out = Vec::new();
    for mask in 0..1u64 << n {
        if mask.count_ones() as usize > degree {
            continue;
        }
        if rng.random::<f64>() < density {
            let coeff = rng.random_range(-1.0..1.0);
            out.push(Term { coeff, vars: SubsetIndex::from_mask(mask).members().collect() });
        }
    }
    out
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl fmt::Display for FunctionSpec {
    /// The canonical form; parsing it gives back an equal spec.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunctionSpec::Dict(i) => write!(f, "dict({i})"),
            FunctionSpec::Maj(n) => write!(f, "maj({n})"),
            FunctionSpec::Parity(s) => write!(f, "parity({})", join(s)),
            FunctionSpec::And(n) => write!(f, "and({n})"),
            FunctionSpec::Poly(terms) => {
                let body: Vec<String> = terms.iter().map(|t| format!("{}*[{}]", t.coeff, join(&t.vars))).collect();
                write!(f, "poly{{{}}}", body.join("; "))
            }
            FunctionSpec::Table { bits, .. } => {
                let hex: String = bits
                    .chunks(4)
                    .map(|c| {
                        let d = c.iter().enumerate().fold(0u32, |acc, (j, &b)| acc | (u32::from(b) << j));
                        char::from_digit(d, 16).unwrap_or('0')
                    })
                    .collect();
                write!(f, "table({hex})")
            }
            FunctionSpec::RandPoly { n, degree, density, seed } => write!(f, "randpoly({n},{degree},{density},{seed})"),
        }
    }
}

struct Cursor<'a> {
    src: &'a [u8],
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

impl<'a> Cursor<'a> {
    fn err<T>(&self, offset: usize, message: impl Into<String>) -> PResult<T> {
        Err(ParseError { offset, message: message.into() })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, b: u8) -> PResult<()> {
        match self.peek() {
            Some(c) if c == b => {
                self.pos += 1;
                Ok(())
            }
            Some(c) => self.err(self.pos, format!("expected '{}', found '{}'", b as char, c.escape_ascii())),
            None => self.err(self.pos, format!("expected '{}', found end of input", b as char)),
        }
    }

    /// Longest run of bytes satisfying `pred`, after whitespace.
    fn token(&mut self, pred: impl Fn(u8) -> bool) -> (usize, &'a str) {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && pred(self.src[self.pos]) {
            self.pos += 1;
        }
        // the predicates only accept ASCII, so this slice is valid UTF-8
        (start, std::str::from_utf8(&self.src[start..self.pos]).unwrap_or(""))
    }

    fn integer(&mut self, what: &str) -> PResult<(usize, u64)> {
        let (start, tok) = self.token(|b| b.is_ascii_digit());
        if tok.is_empty() {
            return self.err(start, format!("expected {what}"));
        }
        match tok.parse::<u64>() {
            Ok(v) => Ok((start, v)),
            Err(_) => self.err(start, format!("{what} is too large")),
        }
    }

    fn index(&mut self) -> PResult<usize> {
        let (start, v) = self.integer("coordinate index")?;
        if v >= MAX_SUBSET_DIM as u64 {
            return self.err(start, format!("coordinate {v} exceeds the limit of {MAX_SUBSET_DIM}"));
        }
        Ok(v as usize)
    }

    fn arity(&mut self) -> PResult<(usize, usize)> {
        let (start, v) = self.integer("arity")?;
        if v == 0 || v > MAX_ENUM_DIM as u64 {
            return self.err(start, format!("arity must lie in 1..={MAX_ENUM_DIM}"));
        }
        Ok((start, v as usize))
    }

    fn real(&mut self, what: &str) -> PResult<(usize, f64)> {
        let (start, tok) = self.token(|b| b.is_ascii_digit() || matches!(b, b'+' | b'-' | b'.' | b'e' | b'E'));
        if tok.is_empty() {
            return self.err(start, format!("expected {what}"));
        }
        match tok.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok((start, v)),
            Ok(_) => self.err(start, format!("{what} must be finite")),
            Err(_) => self.err(start, format!("malformed number {tok:?}")),
        }
    }

    fn index_list(&mut self, close: u8) -> PResult<Vec<usize>> {
        let mut out: Vec<usize> = Vec::new();
        if self.peek() == Some(close) {
            return Ok(out);
        }
        loop {
            self.skip_ws();
            let at = self.pos;
            let i = self.index()?;
            if out.contains(&i) {
                return self.err(at, format!("coordinate {i} repeated"));
            }
            out.push(i);
            match self.peek() {
                Some(b',') => self.pos += 1,
                _ => break,
            }
        }
        out.sort_unstable();
        Ok(out)
    }

    fn spec(&mut self) -> PResult<FunctionSpec> {
        let (start, name) = self.token(|b| b.is_ascii_alphabetic());
        let spec = match name {
            "dict" => {
                self.expect(b'(')?;
                let i = self.index()?;
                self.expect(b')')?;
                FunctionSpec::Dict(i)
            }
            "maj" => {
                self.expect(b'(')?;
                let (at, n) = self.arity()?;
                if n % 2 == 0 {
                    return self.err(at, "majority requires odd arity");
                }
                self.expect(b')')?;
                FunctionSpec::Maj(n)
            }
            "and" => {
                self.expect(b'(')?;
                let (_, n) = self.arity()?;
                self.expect(b')')?;
                FunctionSpec::And(n)
            }
            "parity" => {
                self.expect(b'(')?;
                let s = self.index_list(b')')?;
                self.expect(b')')?;
                FunctionSpec::Parity(s)
            }
            "poly" => {
                self.expect(b'{')?;
                let mut terms = Vec::new();
                while self.peek() != Some(b'}') {
                    let (_, coeff) = self.real("coefficient")?;
                    self.expect(b'*')?;
                    self.expect(b'[')?;
                    let vars = self.index_list(b']')?;
                    self.expect(b']')?;
                    terms.push(Term { coeff, vars });
                    if self.peek() == Some(b';') {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                self.expect(b'}')?;
                FunctionSpec::Poly(terms)
            }
            "table" => {
                self.expect(b'(')?;
                let (at, hex) = self.token(|b| b.is_ascii_hexdigit());
                let len = hex.len();
                if len == 0 || !len.is_power_of_two() || len > (1 << MAX_ENUM_DIM) / 4 {
                    return self.err(at, format!("table needs 2^k hex digits, at most {}", (1 << MAX_ENUM_DIM) / 4));
                }
                let bits = hex
                    .chars()
                    .flat_map(|c| {
                        let d = c.to_digit(16).unwrap_or(0);
                        (0..4).map(move |j| d >> j & 1 == 1)
                    })
                    .collect::<Vec<bool>>();
                self.expect(b')')?;
                FunctionSpec::Table { n: bits.len().trailing_zeros() as usize, bits }
            }
            "randpoly" => {
                self.expect(b'(')?;
                let (_, n) = self.arity()?;
                self.expect(b',')?;
                let (at, degree) = self.integer("degree")?;
                if degree > n as u64 {
                    return self.err(at, "degree exceeds arity");
                }
                self.expect(b',')?;
                let (at, density) = self.real("density")?;
                if !(0.0..=1.0).contains(&density) {
                    return self.err(at, "density must lie in [0, 1]");
                }
                self.expect(b',')?;
                let (_, seed) = self.integer("seed")?;
                self.expect(b')')?;
                FunctionSpec::RandPoly { n, degree: degree as usize, density, seed }
            }
            "" => return self.err(start, "expected a function name"),
            other => return self.err(start, format!("unknown function {other:?}")),
        };
        Ok(spec)
    }
}

pub fn parse_function(text: &str) -> Result<FunctionSpec, ParseError> {
    let mut c = Cursor { src: text.as_bytes(), pos: 0 };
    let spec = c.spec()?;
    c.skip_ws();
    if c.pos != c.src.len() {
        return c.err(c.pos, "trailing input");
    }
    Ok(spec)
}

impl std::str::FromStr for FunctionSpec {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_function(s)
    }
}
