//! Finite binary words, observed sequence prefixes, the two compatible
//! ultrametrics, cylinder diameters and the dyadic partitions `Π_k`.
//!
//! Positions are 1-based throughout. Words and prefixes serialize as
//! strings of `'0'`/`'1'`, first bit leftmost.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::scalar::Scalar;

/// Largest partition depth whose cell count `2^k` fits in a `u64` index.
pub const MAX_DEPTH: usize = 63;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WordError {
    #[error("invalid symbol {symbol:?} at position {position}; expected '0' or '1'")]
    InvalidSymbol { symbol: char, position: usize },
    #[error("horizon {horizon} is shorter than the required {required} bits")]
    HorizonTooShort { horizon: usize, required: usize },
    #[error("a sequence prefix needs at least one known bit")]
    EmptyPrefix,
    #[error("partition depth must be at least 1")]
    ZeroDepth,
    #[error("depth {0} exceeds the largest enumerable depth {MAX_DEPTH}")]
    DepthTooLarge(usize),
    #[error("cell index {index} out of range for depth {depth}")]
    IndexOutOfRange { index: u64, depth: usize },
}

fn parse_bits(s: &str) -> Result<Vec<bool>, WordError> {
    s.chars()
        .enumerate()
        .map(|(i, c)| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(WordError::InvalidSymbol { symbol: other, position: i + 1 }),
        })
        .collect()
}

fn write_bits(bits: &[bool], f: &mut fmt::Formatter<'_>) -> fmt::Result {
    for &b in bits {
        f.write_str(if b { "1" } else { "0" })?;
    }
    Ok(())
}

/// Big-endian integer value of `bits` (at most 64 of them).
fn bits_to_index(bits: &[bool]) -> u64 {
    debug_assert!(bits.len() <= 64);
    bits.iter().fold(0u64, |acc, &b| (acc << 1) | u64::from(b))
}

/// A finite binary word `τ`, naming the cylinder `[τ]` of all infinite
/// sequences extending it. The empty word names the whole space.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FiniteWord {
    bits: Vec<bool>,
}

impl FiniteWord {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    /// The `depth`-bit big-endian expansion of `index`.
    pub fn from_index(index: u64, depth: usize) -> Result<Self, WordError> {
        if depth > MAX_DEPTH {
            return Err(WordError::DepthTooLarge(depth));
        }
        if index >= 1u64 << depth {
            return Err(WordError::IndexOutOfRange { index, depth });
        }
        let bits = (0..depth).rev().map(|shift| (index >> shift) & 1 == 1).collect();
        Ok(Self { bits })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Symbol at 1-based `position`.
    pub fn bit(&self, position: usize) -> Option<bool> {
        position.checked_sub(1).and_then(|i| self.bits.get(i).copied())
    }

    /// `τb`, the word extended by one symbol.
    pub fn child(&self, bit: bool) -> Self {
        let mut bits = Vec::with_capacity(self.bits.len() + 1);
        bits.extend_from_slice(&self.bits);
        bits.push(bit);
        Self { bits }
    }

    /// Lexicographic index among words of the same length. Only defined for
    /// words of at most [`MAX_DEPTH`] symbols.
    pub fn index(&self) -> Option<u64> {
        (self.bits.len() <= MAX_DEPTH).then(|| bits_to_index(&self.bits))
    }

    /// True iff `self` is an initial segment of `other`, i.e. `[other] ⊆ [self]`.
    pub fn is_prefix_of(&self, other: &FiniteWord) -> bool {
        prefix_of(self, other)
    }

    /// True iff the observed sequence `x` lies in the cylinder `[self]`.
    /// Errors if the horizon of `x` is too short to decide.
    pub fn contains(&self, x: &SequencePrefix) -> Result<bool, WordError> {
        let head = x.initial_segment(self.len())?;
        Ok(head == self.bits())
    }
}

impl fmt::Display for FiniteWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_bits(&self.bits, f)
    }
}

impl FromStr for FiniteWord {
    type Err = WordError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_bits(s.trim()).map(|bits| Self { bits })
    }
}

/// The first `horizon` bits of an infinite binary sequence. Queries that
/// need bits past the horizon fail rather than guessing.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SequencePrefix {
    bits: Vec<bool>,
}

impl SequencePrefix {
    pub fn new(bits: Vec<bool>) -> Result<Self, WordError> {
        if bits.is_empty() {
            return Err(WordError::EmptyPrefix);
        }
        Ok(Self { bits })
    }

    /// Infinite constant sequence `bbb…` observed to `horizon` bits.
    pub fn constant(bit: bool, horizon: usize) -> Result<Self, WordError> {
        Self::new(vec![bit; horizon])
    }

    /// Extends `word` with `fill` up to `horizon` bits; `horizon` must be at
    /// least the word length.
    pub fn extending(word: &FiniteWord, fill: bool, horizon: usize) -> Result<Self, WordError> {
        if horizon < word.len() {
            return Err(WordError::HorizonTooShort { horizon, required: word.len() });
        }
        let mut bits = word.bits().to_vec();
        bits.resize(horizon, fill);
        Self::new(bits)
    }

    pub fn horizon(&self) -> usize {
        self.bits.len()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Bit at 1-based `position`.
    pub fn bit(&self, position: usize) -> Result<bool, WordError> {
        if position == 0 || position > self.horizon() {
            return Err(WordError::HorizonTooShort { horizon: self.horizon(), required: position });
        }
        Ok(self.bits[position - 1])
    }

    /// `x↾m` as a slice.
    pub fn initial_segment(&self, m: usize) -> Result<&[bool], WordError> {
        self.bits.get(..m).ok_or(WordError::HorizonTooShort { horizon: self.horizon(), required: m })
    }

    /// `x↾m` as a word.
    pub fn truncate(&self, m: usize) -> Result<FiniteWord, WordError> {
        self.initial_segment(m).map(|s| FiniteWord::from_bits(s.to_vec()))
    }

    pub(crate) fn from_bits_unchecked(bits: Vec<bool>) -> Self {
        debug_assert!(!bits.is_empty());
        Self { bits }
    }
}

impl fmt::Display for SequencePrefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_bits(&self.bits, f)
    }
}

impl FromStr for SequencePrefix {
    type Err = WordError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(parse_bits(s.trim())?)
    }
}

/// True iff `a` is an initial segment of `b`.
pub fn prefix_of(a: &FiniteWord, b: &FiniteWord) -> bool {
    b.bits.starts_with(&a.bits)
}

/// Outcome of comparing two prefixes position by position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FirstDifference {
    /// 1-based position of the first disagreement.
    At(usize),
    /// The prefixes agree on every position both of them know.
    IdenticalWithinHorizon,
}

/// `N(a, b) = min{k : a(k) ≠ b(k)}`, restricted to the shared horizon.
pub fn first_difference(a: &SequencePrefix, b: &SequencePrefix) -> FirstDifference {
    a.bits
        .iter()
        .zip(&b.bits)
        .position(|(x, y)| x != y)
        .map_or(FirstDifference::IdenticalWithinHorizon, |i| FirstDifference::At(i + 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    /// `d1 = 1 / N(a, b)`
    D1,
    /// `d2 = 2^-N(a, b)`
    D2,
}

impl Metric {
    /// Metric value for a first disagreement at 1-based `position`.
    pub fn at_position<T: Scalar>(self, position: usize) -> T {
        match self {
            Metric::D1 => T::one() / T::from_count(position as u64),
            Metric::D2 => T::half_pow(position),
        }
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "d1" => Ok(Metric::D1),
            "d2" => Ok(Metric::D2),
            other => Err(format!("unknown metric {other:?}; expected d1 or d2")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Distance<T> {
    pub value: T,
    /// Set when the prefixes never disagree inside their shared horizon; the
    /// value is then the convention `0`.
    pub identical_within_horizon: bool,
}

pub fn distance<T: Scalar>(a: &SequencePrefix, b: &SequencePrefix, metric: Metric) -> Distance<T> {
    match first_difference(a, b) {
        FirstDifference::At(n) => Distance { value: metric.at_position(n), identical_within_horizon: false },
        FirstDifference::IdenticalWithinHorizon => Distance { value: T::zero(), identical_within_horizon: true },
    }
}

/// Exact supremum of pairwise distances inside `[w]`. Two extensions of `w`
/// agree on the first `|w|` positions, so they can first differ at `|w| + 1`.
/// Under `d2` this is half the Lebesgue mass `2^-|w|` of the cylinder.
pub fn cylinder_diameter<T: Scalar>(w: &FiniteWord, metric: Metric) -> T {
    metric.at_position(w.len() + 1)
}

/// The depth-`k` dyadic partition `Π_k = {[τ] : |τ| = k}`, cells in
/// lexicographic order. Cells are generated on demand so large depths never
/// materialize `2^k` words.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Partition {
    depth: usize,
}

impl Partition {
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> u64 {
        1u64 << self.depth
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell(&self, index: u64) -> Result<FiniteWord, WordError> {
        FiniteWord::from_index(index, self.depth)
    }

    pub fn cells(&self) -> impl Iterator<Item = FiniteWord> + '_ {
        (0..self.len()).map(move |j| FiniteWord::from_index(j, self.depth).expect("index in range"))
    }

    /// Largest cell diameter. All cells share length `k`.
    pub fn mesh<T: Scalar>(&self, metric: Metric) -> T {
        metric.at_position(self.depth + 1)
    }
}

pub fn partition(k: usize) -> Result<Partition, WordError> {
    match k {
        0 => Err(WordError::ZeroDepth),
        k if k > MAX_DEPTH => Err(WordError::DepthTooLarge(k)),
        depth => Ok(Partition { depth }),
    }
}

pub fn mesh<T: Scalar>(p: &Partition, metric: Metric) -> T {
    p.mesh(metric)
}

/// Cell of `Π_k` containing `x`: the word `x↾k` and its lexicographic index.
pub fn cell_of(x: &SequencePrefix, k: usize) -> Result<(FiniteWord, u64), WordError> {
    let j = cell_index(x, k)?;
    Ok((x.truncate(k)?, j))
}

/// Index-only variant of [`cell_of`] that does not allocate.
pub fn cell_index(x: &SequencePrefix, k: usize) -> Result<u64, WordError> {
    if k > MAX_DEPTH {
        return Err(WordError::DepthTooLarge(k));
    }
    x.initial_segment(k).map(bits_to_index)
}
