//! Binary-word addressing of the triadic Cantor set.
//!
//! A point of the Cantor set is an infinite binary sequence; everything the
//! crate computes depends on finitely many leading digits, so points are
//! carried around as finite [`Word`]s. A word of level `n` also names the
//! cylinder `[v]` of all sequences starting with `v`.
//!
//! Digits are numbered from 1. Digit 1 is stored in the most significant
//! position of the level-`n` bit pattern, so `Word::index` is the
//! lexicographic rank of the word among all words of its level.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{domain, usage, Error, Result};

/// Longest word representable by the packed encoding.
pub const MAX_WORD_LEVEL: u32 = 64;

#[inline]
pub(crate) fn low_mask(level: u32) -> u64 {
    if level >= 64 {
        u64::MAX
    } else {
        (1u64 << level) - 1
    }
}

/// A finite binary string `(x_1, ..., x_n)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Word {
    bits: u64,
    level: u32,
}

impl Word {
    /// The empty word addressing the whole set.
    pub const EMPTY: Word = Word { bits: 0, level: 0 };

    /// Builds a word from its packed bit pattern (digit 1 most significant).
    pub fn new(bits: u64, level: u32) -> Result<Self> {
        if level > MAX_WORD_LEVEL {
            return Err(Error::Resource {
                what: "word level",
                requested: level as u64,
                limit: MAX_WORD_LEVEL as u64,
            });
        }
        if bits & !low_mask(level) != 0 {
            return Err(usage(format!(
                "bit pattern {bits:#x} does not fit in {level} digits"
            )));
        }
        Ok(Word { bits, level })
    }

    /// Word of rank `index` among the `2^level` words of that level.
    ///
    /// # Panics
    ///
    /// If `index` does not fit in `level` digits.
    pub fn from_index(index: usize, level: u32) -> Self {
        Word::new(index as u64, level).expect("index out of range for level")
    }

    /// The all-zero word `0̄` truncated at `level`.
    pub fn zeros(level: u32) -> Self {
        assert!(level <= MAX_WORD_LEVEL);
        Word { bits: 0, level }
    }

    pub fn from_digits(digits: &[u8]) -> Result<Self> {
        if digits.len() > MAX_WORD_LEVEL as usize {
            return Err(Error::Resource {
                what: "word level",
                requested: digits.len() as u64,
                limit: MAX_WORD_LEVEL as u64,
            });
        }
        let mut bits = 0u64;
        for &d in digits {
            if d > 1 {
                return Err(usage(format!("digit {d} is not binary")));
            }
            bits = (bits << 1) | d as u64;
        }
        Ok(Word {
            bits,
            level: digits.len() as u32,
        })
    }

    #[inline]
    pub fn level(&self) -> u32 {
        self.level
    }

    #[inline]
    pub fn bits(&self) -> u64 {
        self.bits
    }

    /// Lexicographic rank among words of the same level; doubles as the
    /// matrix index of the word.
    #[inline]
    pub fn index(&self) -> usize {
        self.bits as usize
    }

    /// Digit `k`, counted from 1.
    ///
    /// # Panics
    ///
    /// If `k` is 0 or exceeds the level.
    #[inline]
    pub fn digit(&self, k: u32) -> u8 {
        assert!(k >= 1 && k <= self.level, "digit {k} outside 1..={}", self.level);
        ((self.bits >> (self.level - k)) & 1) as u8
    }

    pub fn digits(&self) -> Vec<u8> {
        (1..=self.level).map(|k| self.digit(k)).collect()
    }

    /// `π_m`: the first `m` digits.
    ///
    /// # Panics
    ///
    /// If `m` exceeds the level.
    #[inline]
    pub fn prefix(&self, m: u32) -> Word {
        assert!(m <= self.level, "prefix length {m} exceeds level {}", self.level);
        if m == 0 {
            return Word::EMPTY;
        }
        Word {
            bits: self.bits >> (self.level - m),
            level: m,
        }
    }

    /// The digits after position `m`.
    #[inline]
    pub fn suffix_after(&self, m: u32) -> Word {
        assert!(m <= self.level);
        let level = self.level - m;
        Word {
            bits: self.bits & low_mask(level),
            level,
        }
    }

    /// `v·d`: append one digit.
    #[inline]
    pub fn child(&self, digit: u8) -> Word {
        assert!(self.level < MAX_WORD_LEVEL && digit <= 1);
        Word {
            bits: (self.bits << 1) | digit as u64,
            level: self.level + 1,
        }
    }

    /// Concatenation `self·tail`.
    pub fn concat(&self, tail: &Word) -> Result<Word> {
        let level = self.level + tail.level;
        if level > MAX_WORD_LEVEL {
            return Err(Error::Resource {
                what: "word level",
                requested: level as u64,
                limit: MAX_WORD_LEVEL as u64,
            });
        }
        let head = if tail.level >= 64 { 0 } else { self.bits << tail.level };
        Ok(Word {
            bits: head | tail.bits,
            level,
        })
    }

    /// Flip digit `k` (1-based).
    #[inline]
    pub fn flip(&self, k: u32) -> Word {
        assert!(k >= 1 && k <= self.level);
        Word {
            bits: self.bits ^ (1u64 << (self.level - k)),
            level: self.level,
        }
    }

    /// `v_k(x)`: keep digits `1..k-1`, flip digit `k`, drop the rest.
    pub fn sibling_at(&self, k: u32) -> Word {
        self.prefix(k).flip(k)
    }

    /// Whether `self` is a prefix of `x`, i.e. `x ∈ [self]`.
    #[inline]
    pub fn is_prefix_of(&self, x: &Word) -> bool {
        self.level <= x.level && x.prefix(self.level) == *self
    }

    /// All `2^level` words of a level, in index order.
    pub fn all(level: u32) -> impl ExactSizeIterator<Item = Word> + Clone {
        assert!(level < usize::BITS, "cannot enumerate level {level}");
        (0..1usize << level).map(move |i| Word::from_index(i, level))
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for k in 1..=self.level {
            f.write_str(if self.digit(k) == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Word({self})")
    }
}

impl FromStr for Word {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let digits = s
            .bytes()
            .map(|b| match b {
                b'0' => Ok(0),
                b'1' => Ok(1),
                _ => Err(Error::Parse {
                    input: s.to_owned(),
                    reason: "only '0' and '1' are allowed",
                }),
            })
            .collect::<Result<Vec<u8>>>()?;
        if digits.len() > MAX_WORD_LEVEL as usize {
            return Err(Error::Parse {
                input: s.to_owned(),
                reason: "longer than 64 digits",
            });
        }
        Word::from_digits(&digits)
    }
}

impl Serialize for Word {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Word {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `c(x, y)`: index of the first differing digit, or `Infinite` for `x = y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Separation {
    At(u32),
    Infinite,
}

impl Separation {
    pub fn finite(self) -> Option<u32> {
        match self {
            Separation::At(k) => Some(k),
            Separation::Infinite => None,
        }
    }
}

fn check_same_level(x: &Word, y: &Word) -> Result<()> {
    if x.level != y.level {
        return Err(usage(format!(
            "words of different levels ({} vs {})",
            x.level, y.level
        )));
    }
    Ok(())
}

/// Separation of two distinct-or-equal words of the same level, without the
/// level check. Used on hot paths where levels are known to agree.
#[inline]
pub(crate) fn separation_unchecked(x: Word, y: Word) -> Separation {
    let diff = x.bits ^ y.bits;
    if diff == 0 {
        Separation::Infinite
    } else {
        let highest = 63 - diff.leading_zeros();
        Separation::At(x.level - highest)
    }
}

pub fn separation_index(x: &Word, y: &Word) -> Result<Separation> {
    check_same_level(x, y)?;
    Ok(separation_unchecked(*x, *y))
}

/// `d(x, y) = 3^{-c(x, y)}`, zero on the diagonal.
pub fn ultrametric_distance(x: &Word, y: &Word) -> Result<f64> {
    Ok(match separation_index(x, y)? {
        Separation::At(k) => 3f64.powi(-(k as i32)),
        Separation::Infinite => 0.0,
    })
}

/// The similarity `[v] → C` that drops the prefix `v`. It multiplies
/// distances by `3^{level(v)}`.
pub fn similarity_shift(x: &Word, v: &Word) -> Result<Word> {
    if !v.is_prefix_of(x) {
        return Err(domain(format!("{v} is not a prefix of {x}")));
    }
    Ok(x.suffix_after(v.level))
}

/// A word with independent fair digits (the ½-Bernoulli measure).
pub fn sample_bernoulli_word<R: Rng + ?Sized>(level: u32, rng: &mut R) -> Word {
    assert!(level <= MAX_WORD_LEVEL);
    if level == 0 {
        return Word::EMPTY;
    }
    Word {
        bits: rng.next_u64() >> (64 - level),
        level,
    }
}
