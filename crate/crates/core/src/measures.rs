//! Additive set functions on finite words and the Borel measures on Cantor
//! space they induce: Lebesgue (fair coin), generalized Bernoulli products
//! and two-state Markov chains.
//!
//! A measure is given by its cylinder masses `ρ(τ) = λ([τ])`, which must
//! satisfy `ρ(τ) = ρ(τ0) + ρ(τ1)`. [`verify_additivity`] checks that law
//! exhaustively at shallow depths and by random probing below.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::scalar::Scalar;
use crate::words::{partition, FiniteWord, SequencePrefix, WordError};

/// Depth to which [`verify_additivity`] enumerates every word.
pub const EXHAUSTIVE_DEPTH: usize = 12;
/// Random words probed past [`EXHAUSTIVE_DEPTH`] by default.
pub const DEFAULT_RANDOM_PROBES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeasureError {
    #[error("{field}: value {value} must lie strictly inside (0, 1)")]
    OutOfRange { field: String, value: f64 },
    #[error("{field}: entries sum to {sum}, expected 1")]
    NotStochastic { field: String, sum: f64 },
    #[error("total mass must be positive, got {0}")]
    NonPositiveMass(f64),
    #[error("cylinder [{0}] has zero mass")]
    ZeroMass(FiniteWord),
    #[error("sampling requires a normalized measure, total mass is {0}")]
    Unnormalized(f64),
}

/// Finitely described coordinate probabilities: `head` gives `p_1..p_M`
/// explicitly, `tail` is used for every later coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSequence<T> {
    head: Vec<T>,
    tail: T,
}

fn check_open_unit<T: Scalar>(field: &str, value: &T) -> Result<(), MeasureError> {
    if *value > T::zero() && *value < T::one() {
        Ok(())
    } else {
        Err(MeasureError::OutOfRange { field: field.to_string(), value: value.as_f64() })
    }
}

impl<T: Scalar> ParamSequence<T> {
    pub fn new(head: Vec<T>, tail: T) -> Result<Self, MeasureError> {
        for (i, p) in head.iter().enumerate() {
            check_open_unit(&format!("head[{}]", i + 1), p)?;
        }
        check_open_unit("tail", &tail)?;
        Ok(Self { head, tail })
    }

    pub fn constant(p: T) -> Result<Self, MeasureError> {
        Self::new(Vec::new(), p)
    }

    /// Every coordinate `1/2`: the coin-tossing measure.
    pub fn fair() -> Self {
        Self { head: Vec::new(), tail: T::one() / (T::one() + T::one()) }
    }

    pub fn head(&self) -> &[T] {
        &self.head
    }

    pub fn tail(&self) -> &T {
        &self.tail
    }

    /// `p_i` for 1-based coordinate `i`.
    pub fn value_at(&self, i: usize) -> &T {
        debug_assert!(i >= 1);
        self.head.get(i - 1).unwrap_or(&self.tail)
    }

    /// `λ_i(b)`: `p_i` for `b = 1`, `1 - p_i` for `b = 0`.
    pub fn coordinate_mass(&self, i: usize, bit: bool) -> T {
        let p = self.value_at(i).clone();
        if bit {
            p
        } else {
            T::one() - p
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeasureKind<T> {
    Lebesgue,
    GeneralizedBernoulli(ParamSequence<T>),
    Markov {
        /// `(P[first bit = 0], P[first bit = 1])`
        initial: [T; 2],
        /// Row-stochastic; `transition[a][b] = P[next = b | current = a]`.
        transition: [[T; 2]; 2],
    },
}

/// A cylinder measure `ρ` together with its total mass (1 for every
/// built-in constructor).
#[derive(Debug, Clone, PartialEq)]
pub struct CylinderMeasure<T> {
    kind: MeasureKind<T>,
    total_mass: T,
}

/// Anything that assigns a mass to every finite word. Lets
/// [`verify_additivity`] run on arbitrary set functions, including broken
/// ones.
pub trait CylinderFunction<T> {
    fn mass(&self, w: &FiniteWord) -> T;
}

impl<T: Scalar> CylinderFunction<T> for CylinderMeasure<T> {
    fn mass(&self, w: &FiniteWord) -> T {
        self.measure_of(w)
    }
}

impl<T, F: Fn(&FiniteWord) -> T> CylinderFunction<T> for F {
    fn mass(&self, w: &FiniteWord) -> T {
        self(w)
    }
}

impl<T: Scalar> CylinderMeasure<T> {
    pub fn lebesgue() -> Self {
        Self { kind: MeasureKind::Lebesgue, total_mass: T::one() }
    }

    pub fn bernoulli(params: ParamSequence<T>) -> Self {
        Self { kind: MeasureKind::GeneralizedBernoulli(params), total_mass: T::one() }
    }

    pub fn markov(initial: [T; 2], transition: [[T; 2]; 2]) -> Result<Self, MeasureError> {
        let tol = T::lit(1e-12);
        let check_row = |field: &str, row: &[T; 2]| -> Result<(), MeasureError> {
            for (b, v) in row.iter().enumerate() {
                check_open_unit(&format!("{field}[{b}]"), v)?;
            }
            let sum = row[0].clone() + row[1].clone();
            if (sum.clone() - T::one()).abs() > tol {
                return Err(MeasureError::NotStochastic { field: field.to_string(), sum: sum.as_f64() });
            }
            Ok(())
        };
        check_row("pi", &initial)?;
        check_row("P row 0", &transition[0])?;
        check_row("P row 1", &transition[1])?;
        Ok(Self { kind: MeasureKind::Markov { initial, transition }, total_mass: T::one() })
    }

    /// Same shape, total mass multiplied by `factor`.
    pub fn scaled(mut self, factor: T) -> Result<Self, MeasureError> {
        if factor <= T::zero() {
            return Err(MeasureError::NonPositiveMass(factor.as_f64()));
        }
        self.total_mass = self.total_mass * factor;
        Ok(self)
    }

    pub fn kind(&self) -> &MeasureKind<T> {
        &self.kind
    }

    pub fn total_mass(&self) -> &T {
        &self.total_mass
    }

    pub fn is_normalized(&self) -> bool {
        self.total_mass == T::one()
    }

    /// Coordinate parameters when the measure is a product measure.
    pub fn product_params(&self) -> Option<ParamSequence<T>> {
        match &self.kind {
            MeasureKind::Lebesgue => Some(ParamSequence::fair()),
            MeasureKind::GeneralizedBernoulli(p) => Some(p.clone()),
            MeasureKind::Markov { .. } => None,
        }
    }

    /// `ρ(w)`.
    pub fn measure_of(&self, w: &FiniteWord) -> T {
        self.unnormalized_mass(w.bits()) * self.total_mass.clone()
    }

    pub(crate) fn unnormalized_mass(&self, bits: &[bool]) -> T {
        match &self.kind {
            MeasureKind::Lebesgue => T::half_pow(bits.len()),
            MeasureKind::GeneralizedBernoulli(params) => {
                bits.iter().enumerate().fold(T::one(), |acc, (i, &b)| acc * params.coordinate_mass(i + 1, b))
            }
            MeasureKind::Markov { initial, transition } => match bits.split_first() {
                None => T::one(),
                Some((&first, _)) => bits.windows(2).fold(initial[usize::from(first)].clone(), |acc, pair| {
                    acc * transition[usize::from(pair[0])][usize::from(pair[1])].clone()
                }),
            },
        }
    }

    /// `ρ(w1) / ρ(w)`: probability the next bit is 1 given the prefix `w`.
    pub fn conditional_one(&self, w: &FiniteWord) -> Result<T, MeasureError> {
        if self.measure_of(w).is_zero() {
            return Err(MeasureError::ZeroMass(w.clone()));
        }
        Ok(match &self.kind {
            MeasureKind::Lebesgue => T::one() / (T::one() + T::one()),
            MeasureKind::GeneralizedBernoulli(params) => params.value_at(w.len() + 1).clone(),
            MeasureKind::Markov { initial, transition } => match w.bits().last() {
                None => initial[1].clone(),
                Some(&last) => transition[usize::from(last)][1].clone(),
            },
        })
    }

    /// Largest one-step conditional probability of either symbol. The max
    /// cell mass at depth `k + 1` is at most this factor times the max at
    /// depth `k`, so cell masses decay geometrically and the measure has no
    /// atoms.
    pub fn max_branch_probability(&self) -> T {
        let pick = |a: &T, b: &T| if a >= b { a.clone() } else { b.clone() };
        let branch = |p: &T| pick(p, &(T::one() - p.clone()));
        match &self.kind {
            MeasureKind::Lebesgue => T::one() / (T::one() + T::one()),
            MeasureKind::GeneralizedBernoulli(params) => {
                params.head.iter().fold(branch(&params.tail), |acc, p| pick(&acc, &branch(p)))
            }
            MeasureKind::Markov { initial, transition } => [&initial[0], &initial[1]]
                .into_iter()
                .chain(transition.iter().flatten())
                .fold(T::zero(), |acc, p| pick(&acc, p)),
        }
    }

    /// `Σ_{w ∈ Π_k} ρ(w)`.
    pub fn partition_mass(&self, k: usize) -> Result<T, WordError> {
        Ok(partition(k)?.cells().fold(T::zero(), |acc, c| acc + self.measure_of(&c)))
    }

    /// Sequential sampler for this measure; see [`PrefixSampler`].
    pub fn sampler(&self) -> Result<PrefixSampler, MeasureError> {
        PrefixSampler::new(self)
    }
}

/// Draws prefixes bit by bit, each bit from `Bernoulli(ρ(w1)/ρ(w))` given the
/// prefix `w` drawn so far. Conditional probabilities are tabulated once, as
/// `f64` and as 64-bit thresholds: a bit is 1 when a uniform `u64` falls
/// below the threshold, so a draw costs one RNG word per bit.
#[derive(Debug, Clone)]
pub struct PrefixSampler {
    kernel: Kernel,
}

#[derive(Debug, Clone, Copy)]
struct Threshold {
    p: f64,
    cut: u64,
}

impl Threshold {
    fn new(p: f64) -> Self {
        // p is strictly inside (0, 1), so the product is finite and the cast
        // saturates only at the top end
        Self { p, cut: (p * 18_446_744_073_709_551_616.0) as u64 }
    }

    #[inline]
    fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> bool {
        rng.next_u64() < self.cut
    }
}

#[derive(Debug, Clone)]
enum Kernel {
    Product { head: Vec<Threshold>, tail: Threshold },
    Markov { initial: Threshold, after: [Threshold; 2] },
}

impl PrefixSampler {
    pub fn new<T: Scalar>(m: &CylinderMeasure<T>) -> Result<Self, MeasureError> {
        if !m.is_normalized() {
            return Err(MeasureError::Unnormalized(m.total_mass.as_f64()));
        }
        let t = |p: &T| Threshold::new(p.as_f64());
        let kernel = match &m.kind {
            MeasureKind::Lebesgue => Kernel::Product { head: Vec::new(), tail: Threshold::new(0.5) },
            MeasureKind::GeneralizedBernoulli(p) => {
                Kernel::Product { head: p.head.iter().map(t).collect(), tail: t(&p.tail) }
            }
            MeasureKind::Markov { initial, transition } => {
                Kernel::Markov { initial: t(&initial[1]), after: [t(&transition[0][1]), t(&transition[1][1])] }
            }
        };
        Ok(Self { kernel })
    }

    #[inline]
    fn threshold(&self, position: usize, last: Option<bool>) -> Threshold {
        match &self.kernel {
            Kernel::Product { head, tail } => head.get(position).copied().unwrap_or(*tail),
            Kernel::Markov { initial, after } => last.map_or(*initial, |b| after[usize::from(b)]),
        }
    }

    /// Probability that bit `prefix.len() + 1` is 1.
    pub fn next_one_probability(&self, prefix: &[bool]) -> f64 {
        self.threshold(prefix.len(), prefix.last().copied()).p
    }

    /// Overwrites `buf` with a fresh draw of `length` bits.
    pub fn draw_into<R: Rng + ?Sized>(&self, length: usize, rng: &mut R, buf: &mut Vec<bool>) {
        buf.clear();
        buf.reserve(length);
        let mut last = None;
        for i in 0..length {
            let b = self.threshold(i, last).draw(rng);
            buf.push(b);
            last = Some(b);
        }
    }

    /// Draws `depth ≤ 64` bits and returns them as a big-endian cell index,
    /// consuming the random stream exactly as [`draw_into`](Self::draw_into).
    pub fn draw_index<R: Rng + ?Sized>(&self, depth: usize, rng: &mut R) -> u64 {
        debug_assert!(depth <= 64);
        let mut index = 0u64;
        let mut last = None;
        for i in 0..depth {
            let b = self.threshold(i, last).draw(rng);
            index = (index << 1) | u64::from(b);
            last = Some(b);
        }
        index
    }

    pub fn draw<R: Rng + ?Sized>(&self, length: usize, rng: &mut R) -> SequencePrefix {
        assert!(length >= 1, "prefix length must be positive");
        let mut bits = Vec::new();
        self.draw_into(length, rng, &mut bits);
        SequencePrefix::from_bits_unchecked(bits)
    }
}

/// One draw of the first `length` bits from `m`.
pub fn sample_prefix<T: Scalar, R: Rng + ?Sized>(
    m: &CylinderMeasure<T>,
    length: usize,
    rng: &mut R,
) -> Result<SequencePrefix, MeasureError> {
    Ok(m.sampler()?.draw(length, rng))
}

#[derive(Debug, Clone)]
pub struct AdditivityCheck {
    pub max_depth: usize,
    pub tol: f64,
    pub random_probes: usize,
    pub seed: u64,
}

impl AdditivityCheck {
    pub fn new(max_depth: usize, tol: f64) -> Self {
        Self { max_depth, tol, random_probes: DEFAULT_RANDOM_PROBES, seed: 0x5eed_add1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdditivityReport<T> {
    pub passed: bool,
    pub worst_violation: T,
    /// Word `τ` attaining the worst `|ρ(τ) - ρ(τ0) - ρ(τ1)|`.
    pub worst_word: FiniteWord,
    pub words_checked: usize,
}

pub fn verify_additivity<T: Scalar, M: CylinderFunction<T> + ?Sized>(
    m: &M,
    max_depth: usize,
    tol: f64,
) -> AdditivityReport<T> {
    verify_additivity_with(m, &AdditivityCheck::new(max_depth, tol))
}

/// Checks `|ρ(τ) − ρ(τ0) − ρ(τ1)| ≤ tol` for every `τ` with
/// `|τ| < min(max_depth, 12)` and for `random_probes` random words with
/// lengths in `[12, max_depth)` when `max_depth` exceeds 12.
pub fn verify_additivity_with<T: Scalar, M: CylinderFunction<T> + ?Sized>(
    m: &M,
    check: &AdditivityCheck,
) -> AdditivityReport<T> {
    let mut worst = T::zero();
    let mut worst_word = FiniteWord::empty();
    let mut checked = 0usize;
    let mut probe = |w: FiniteWord| {
        let residual = (m.mass(&w) - m.mass(&w.child(false)) - m.mass(&w.child(true))).abs();
        checked += 1;
        if residual > worst {
            worst = residual;
            worst_word = w;
        }
    };

    let exhaustive = check.max_depth.min(EXHAUSTIVE_DEPTH);
    for depth in 0..exhaustive {
        for j in 0..1u64 << depth {
            probe(FiniteWord::from_index(j, depth).expect("shallow index"));
        }
    }
    if check.max_depth > EXHAUSTIVE_DEPTH {
        let mut rng = ChaCha8Rng::seed_from_u64(check.seed);
        for _ in 0..check.random_probes {
            let len = rng.gen_range(EXHAUSTIVE_DEPTH..check.max_depth);
            probe(FiniteWord::from_bits((0..len).map(|_| rng.gen()).collect()));
        }
    }

    let passed = worst <= T::lit(check.tol);
    AdditivityReport { passed, worst_violation: worst, worst_word, words_checked: checked }
}

/// Error from parsing a measure description; `field` names the piece of the
/// description that was rejected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("measure spec field `{field}`: {message}")]
pub struct MeasureSpecError {
    pub field: String,
    pub message: String,
}

fn spec_err(field: &str, message: impl Into<String>) -> MeasureSpecError {
    MeasureSpecError { field: field.to_string(), message: message.into() }
}

/// Splits `k1=v1,k2=v2a,v2b` into fields; a comma-separated token without
/// `=` continues the previous field's value.
fn split_fields(body: &str) -> Result<Vec<(String, String)>, MeasureSpecError> {
    let mut fields: Vec<(String, String)> = Vec::new();
    for token in body.split(',') {
        let token = token.trim();
        match token.split_once('=') {
            Some((key, value)) => {
                let key = key.trim();
                if fields.iter().any(|(k, _)| k == key) {
                    return Err(spec_err(key, "given more than once"));
                }
                fields.push((key.to_string(), value.trim().to_string()));
            }
            None => match fields.last_mut() {
                Some((_, value)) => {
                    value.push(',');
                    value.push_str(token);
                }
                None => return Err(spec_err(token, "expected key=value")),
            },
        }
    }
    Ok(fields)
}

fn parse_number<T: Scalar>(field: &str, s: &str) -> Result<T, MeasureSpecError> {
    let v: f64 = s.trim().parse().map_err(|_| spec_err(field, format!("`{s}` is not a number")))?;
    T::from_f64(v).filter(|_| v.is_finite()).ok_or_else(|| spec_err(field, format!("`{s}` is not finite")))
}

fn parse_pair<T: Scalar>(field: &str, s: &str) -> Result<[T; 2], MeasureSpecError> {
    let parts: Vec<&str> = s.split(',').collect();
    match parts.as_slice() {
        [a, b] => Ok([parse_number(field, a)?, parse_number(field, b)?]),
        _ => Err(spec_err(field, format!("expected two comma-separated numbers, got `{s}`"))),
    }
}

fn to_spec_error(err: MeasureError) -> MeasureSpecError {
    match &err {
        MeasureError::OutOfRange { field, .. } | MeasureError::NotStochastic { field, .. } => {
            spec_err(field, err.to_string())
        }
        other => spec_err("measure", other.to_string()),
    }
}

/// Parses `lebesgue`, `bernoulli:tail=<p>[,head=<p1;p2;...>]` or
/// `markov:pi=<a,b>,P=<p00,p01;p10,p11>`.
impl<T: Scalar> FromStr for CylinderMeasure<T> {
    type Err = MeasureSpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (name, body) = s.split_once(':').unwrap_or((s, ""));
        let fields = if body.trim().is_empty() { Vec::new() } else { split_fields(body)? };
        let take = |key: &str| fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        let allow_only = |allowed: &[&str]| match fields.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
            Some((k, _)) => Err(spec_err(k, format!("unknown field for `{name}`"))),
            None => Ok(()),
        };

        match name.trim() {
            "lebesgue" => {
                allow_only(&[])?;
                Ok(Self::lebesgue())
            }
            "bernoulli" => {
                allow_only(&["tail", "head"])?;
                let tail = parse_number("tail", take("tail").ok_or_else(|| spec_err("tail", "missing"))?)?;
                let head = match take("head") {
                    None => Vec::new(),
                    Some("") => Vec::new(),
                    Some(list) => list
                        .split(';')
                        .enumerate()
                        .map(|(i, p)| parse_number(&format!("head[{}]", i + 1), p))
                        .collect::<Result<_, _>>()?,
                };
                ParamSequence::new(head, tail).map(Self::bernoulli).map_err(to_spec_error)
            }
            "markov" => {
                allow_only(&["pi", "P"])?;
                let pi = parse_pair("pi", take("pi").ok_or_else(|| spec_err("pi", "missing"))?)?;
                let rows = take("P").ok_or_else(|| spec_err("P", "missing"))?;
                let rows: Vec<&str> = rows.split(';').collect();
                let [r0, r1] = rows.as_slice() else {
                    return Err(spec_err("P", "expected two rows separated by ';'"));
                };
                let transition = [parse_pair("P row 0", r0)?, parse_pair("P row 1", r1)?];
                Self::markov(pi, transition).map_err(to_spec_error)
            }
            other => {
                Err(spec_err("kind", format!("unknown measure `{other}`; expected lebesgue, bernoulli or markov")))
            }
        }
    }
}

impl<T: Scalar> fmt::Display for CylinderMeasure<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            MeasureKind::Lebesgue => write!(f, "lebesgue")?,
            MeasureKind::GeneralizedBernoulli(p) => {
                write!(f, "bernoulli:tail={}", p.tail.as_f64())?;
                if !p.head.is_empty() {
                    let head: Vec<String> = p.head.iter().map(|v| v.as_f64().to_string()).collect();
                    write!(f, ",head={}", head.join(";"))?;
                }
            }
            MeasureKind::Markov { initial, transition } => write!(
                f,
                "markov:pi={},{},P={},{};{},{}",
                initial[0].as_f64(),
                initial[1].as_f64(),
                transition[0][0].as_f64(),
                transition[0][1].as_f64(),
                transition[1][0].as_f64(),
                transition[1][1].as_f64()
            )?,
        }
        if !self.is_normalized() {
            write!(f, " (total mass {})", self.total_mass.as_f64())?;
        }
        Ok(())
    }
}
