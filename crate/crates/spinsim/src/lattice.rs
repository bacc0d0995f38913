//! Two-sided-infinite spin configurations with eventually-constant tails.
//!
//! A configuration stores a bit-packed finite core on a window `[lo, hi]`
//! plus one constant spin per tail; the value at any site of Z is defined.
//! Tails are frozen during simulation: the truncated process never writes
//! outside its window and edge patterns read the tail spins.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rates::LocalPattern;

#[derive(Debug, Error)]
pub enum LatticeError {
    #[error("window [{lo}, {hi}] is invalid")]
    BadWindow { lo: i64, hi: i64 },
    #[error("site {x} is outside window [{lo}, {hi}]")]
    OutsideWindow { x: i64, lo: i64, hi: i64 },
    #[error("configurations have mismatched windows")]
    WindowMismatch,
    #[error("interval initial condition needs N >= 0, got {0}")]
    NegativeInterval(i64),
    #[error("custom initial condition needs a non-empty core")]
    EmptyCore,
    #[error("`{0}` is not a bit string")]
    BadBitString(String),
}

/// Spin configuration: constant tails and a bit-packed core on `[lo, hi]`.
#[derive(Clone, PartialEq, Eq)]
pub struct Configuration {
    lo: i64,
    len: usize,
    left_tail: u8,
    right_tail: u8,
    words: Vec<u64>,
}

impl Configuration {
    pub fn from_fn(
        lo: i64,
        hi: i64,
        left_tail: u8,
        right_tail: u8,
        f: impl Fn(i64) -> u8,
    ) -> Result<Self, LatticeError> {
        if lo > hi {
            return Err(LatticeError::BadWindow { lo, hi });
        }
        let len = (hi - lo + 1) as usize;
        let mut cfg = Self {
            lo,
            len,
            left_tail: left_tail & 1,
            right_tail: right_tail & 1,
            words: vec![0; (len + 63) / 64],
        };
        for x in lo..=hi {
            cfg.set(x, f(x));
        }
        Ok(cfg)
    }

    /// Step configuration `1_{(-inf, 0]}` truncated to the window.
    pub fn step(lo: i64, hi: i64) -> Result<Self, LatticeError> {
        Self::step_at(lo, hi, 0)
    }

    /// Shifted step `1_{(-inf, edge]}`.
    pub fn step_at(lo: i64, hi: i64, edge: i64) -> Result<Self, LatticeError> {
        Self::from_fn(lo, hi, 1, 0, |x| u8::from(x <= edge))
    }

    /// Interval configuration `1_{[-N, 0]}`. Tails are frozen to the
    /// value just outside the window, so a window that clips the interval
    /// still truncates it faithfully (e.g. a large interval looks like a
    /// step from inside a small window).
    pub fn interval(lo: i64, hi: i64, n: i64) -> Result<Self, LatticeError> {
        if n < 0 {
            return Err(LatticeError::NegativeInterval(n));
        }
        let inside = |x: i64| u8::from(-n <= x && x <= 0);
        Self::from_fn(lo, hi, inside(lo - 1), inside(hi + 1), |x| inside(x))
    }

    pub fn custom(
        lo: i64,
        core: &[u8],
        left_tail: u8,
        right_tail: u8,
    ) -> Result<Self, LatticeError> {
        if core.is_empty() {
            return Err(LatticeError::EmptyCore);
        }
        let hi = lo + core.len() as i64 - 1;
        Self::from_fn(lo, hi, left_tail, right_tail, |x| core[(x - lo) as usize] & 1)
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.len as i64 - 1
    }

    pub fn window(&self) -> (i64, i64) {
        (self.lo, self.hi())
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn left_tail(&self) -> u8 {
        self.left_tail
    }

    pub fn right_tail(&self) -> u8 {
        self.right_tail
    }

    /// Spin at any site of Z; tails supply out-of-window values.
    #[inline]
    pub fn value(&self, x: i64) -> u8 {
        if x < self.lo {
            self.left_tail
        } else if x > self.hi() {
            self.right_tail
        } else {
            let idx = (x - self.lo) as usize;
            ((self.words[idx / 64] >> (idx % 64)) & 1) as u8
        }
    }

    /// In-window write; engines use this through their mutable buffers.
    #[inline]
    pub(crate) fn set(&mut self, x: i64, spin: u8) {
        debug_assert!(x >= self.lo && x <= self.hi());
        let idx = (x - self.lo) as usize;
        let bit = 1u64 << (idx % 64);
        if spin & 1 == 1 {
            self.words[idx / 64] |= bit;
        } else {
            self.words[idx / 64] &= !bit;
        }
    }

    /// Value-semantic single-spin flip; tails are immutable, so flipping an
    /// out-of-window site is a caller bug.
    pub fn flip(&self, x: i64) -> Result<Self, LatticeError> {
        if x < self.lo || x > self.hi() {
            return Err(LatticeError::OutsideWindow {
                x,
                lo: self.lo,
                hi: self.hi(),
            });
        }
        let mut out = self.clone();
        out.set(x, 1 - self.value(x));
        Ok(out)
    }

    /// Read `(value(z), ..., value(z+m-1))`.
    pub fn suffix(&self, z: i64, m: usize) -> SuffixPattern {
        assert!(m >= 1);
        SuffixPattern {
            bits: (z..z + m as i64).map(|x| self.value(x)).collect(),
        }
    }

    /// Suffix encoded as an integer, bit `i` = spin at `z + i`. Only valid
    /// for `m <= 63`.
    #[inline]
    pub fn suffix_code(&self, z: i64, m: usize) -> usize {
        let mut code = 0usize;
        for i in 0..m {
            code |= (self.value(z + i as i64) as usize) << i;
        }
        code
    }

    /// Local pattern of width `2R + 1` centered at `x`.
    pub fn local_pattern(&self, x: i64, radius: usize) -> LocalPattern {
        LocalPattern::new(self.pattern_code(x, radius), radius)
    }

    /// Integer code of the local pattern at `x` (LSB = leftmost site).
    #[inline]
    pub fn pattern_code(&self, x: i64, radius: usize) -> usize {
        let r = radius as i64;
        let mut code = 0usize;
        for (i, y) in (x - r..=x + r).enumerate() {
            code |= (self.value(y) as usize) << i;
        }
        code
    }

    /// Translate the whole configuration by `dx`: the result's value at
    /// `x` is this configuration's value at `x - dx`.
    pub fn shift(&self, dx: i64) -> Self {
        let mut out = self.clone();
        out.lo += dx;
        out
    }

    /// Re-read this configuration onto a different window; tails fill
    /// whatever the old core does not cover.
    pub fn rewindow(&self, lo: i64, hi: i64) -> Result<Self, LatticeError> {
        Self::from_fn(lo, hi, self.left_tail, self.right_tail, |x| self.value(x))
    }

    /// `self >= other` at every site. Requires identical windows so that
    /// the tail comparison covers all of Z; anything else is caller misuse.
    pub fn dominates_pointwise(&self, other: &Self) -> Result<bool, LatticeError> {
        if self.window() != other.window() {
            return Err(LatticeError::WindowMismatch);
        }
        if self.left_tail < other.left_tail || self.right_tail < other.right_tail {
            return Ok(false);
        }
        Ok(self.first_order_violation(other).is_none())
    }

    /// First in-window site where `self < other`, if any.
    pub fn first_order_violation(&self, other: &Self) -> Option<i64> {
        debug_assert_eq!(self.window(), other.window());
        for (i, (a, b)) in self.words.iter().zip(&other.words).enumerate() {
            let viol = !a & b & self.word_mask(i);
            if viol != 0 {
                let idx = i * 64 + viol.trailing_zeros() as usize;
                return Some(self.lo + idx as i64);
            }
        }
        None
    }

    fn word_mask(&self, word_idx: usize) -> u64 {
        let full_words = self.len / 64;
        if word_idx < full_words {
            u64::MAX
        } else {
            let rem = self.len % 64;
            if rem == 0 {
                u64::MAX
            } else {
                (1u64 << rem) - 1
            }
        }
    }
}

impl std::fmt::Debug for Configuration {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}...", self.left_tail)?;
        for x in self.lo..=self.hi() {
            write!(f, "{}", self.value(x))?;
        }
        write!(f, "...{} @[{},{}]", self.right_tail, self.lo, self.hi())
    }
}

/// Finite observation of a configuration from a point onward.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuffixPattern {
    bits: Vec<u8>,
}

impl SuffixPattern {
    pub fn new(bits: Vec<u8>) -> Self {
        assert!(!bits.is_empty());
        Self {
            bits: bits.into_iter().map(|b| b & 1).collect(),
        }
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn width(&self) -> usize {
        self.bits.len()
    }

    /// Integer code, bit `i` = `bits[i]` (leftmost = LSB).
    pub fn code(&self) -> usize {
        self.bits
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &b)| acc | (b as usize) << i)
    }
}

impl std::fmt::Display for SuffixPattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for b in &self.bits {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// Initial-condition family: step `1_{(-inf,0]}`, interval `1_{[-N,0]}`,
/// or an explicit core with tails.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    Step,
    Interval { n: i64 },
    Custom {
        left_tail: u8,
        lo: i64,
        core: String,
        right_tail: u8,
    },
}

impl InitialCondition {
    pub fn realize(&self, lo: i64, hi: i64) -> Result<Configuration, LatticeError> {
        match self {
            InitialCondition::Step => Configuration::step(lo, hi),
            InitialCondition::Interval { n } => Configuration::interval(lo, hi, *n),
            InitialCondition::Custom {
                left_tail,
                lo: core_lo,
                core,
                right_tail,
            } => {
                let bits = parse_bit_string(core)?;
                Configuration::custom(*core_lo, &bits, *left_tail, *right_tail)?
                    .rewindow(lo, hi)
            }
        }
    }

    /// The same initial condition translated by `dx`, realized on a window.
    /// Equivalent to realizing on the window shifted by `-dx` and then
    /// shifting the result, i.e. value at `x` is the original at `x - dx`.
    pub fn realize_shifted(&self, lo: i64, hi: i64, dx: i64) -> Result<Configuration, LatticeError> {
        Ok(self.realize(lo - dx, hi - dx)?.shift(dx))
    }
}

pub fn parse_bit_string(s: &str) -> Result<Vec<u8>, LatticeError> {
    if s.is_empty() {
        return Err(LatticeError::EmptyCore);
    }
    s.bytes()
        .map(|b| match b {
            b'0' => Ok(0),
            b'1' => Ok(1),
            _ => Err(LatticeError::BadBitString(s.to_string())),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_values() {
        let c = Configuration::step(-8, 8).unwrap();
        assert_eq!(c.value(0), 1);
        assert_eq!(c.value(1), 0);
        assert_eq!(c.value(-1_000_000), 1);
        assert_eq!(c.value(1_000_000), 0);
    }

    #[test]
    fn interval_values() {
        let c = Configuration::interval(-10, 10, 3).unwrap();
        assert_eq!(c.value(-3), 1);
        assert_eq!(c.value(-4), 0);
        assert_eq!(c.value(0), 1);
        assert_eq!(c.value(1), 0);
        assert!(Configuration::interval(-10, 10, -1).is_err());
    }

    #[test]
    fn custom_step_equals_step() {
        let c = Configuration::custom(0, &[1, 0], 1, 0).unwrap();
        let s = Configuration::step(0, 1).unwrap();
        assert_eq!(c, s);
    }

    #[test]
    fn suffix_examples() {
        let step = Configuration::step(-4, 4).unwrap();
        assert_eq!(step.suffix(0, 3).bits(), &[1, 0, 0]);
        assert_eq!(step.suffix(1, 3).bits(), &[0, 0, 0]);
        let iv = Configuration::interval(-4, 4, 2).unwrap();
        assert_eq!(iv.suffix(-2, 4).bits(), &[1, 1, 1, 0]);
    }

    #[test]
    fn flip_is_an_involution_in_window() {
        let c = Configuration::step(-3, 3).unwrap();
        let f = c.flip(0).unwrap();
        assert_eq!(f.value(0), 0);
        assert_eq!(f.value(-1), 1);
        assert_eq!(f.flip(0).unwrap(), c);
        let g = c.flip(1).unwrap();
        assert_eq!(g.value(1), 1);
        assert!(matches!(
            c.flip(10),
            Err(LatticeError::OutsideWindow { x: 10, .. })
        ));
    }

    #[test]
    fn local_patterns_read_tails() {
        let step = Configuration::step(-2, 2).unwrap();
        assert_eq!(step.local_pattern(0, 1).to_string(), "110");
        assert_eq!(step.local_pattern(5, 1).to_string(), "000");
        assert_eq!(step.local_pattern(-5, 1).to_string(), "111");
    }

    #[test]
    fn domination_examples() {
        let step = Configuration::step(-4, 4).unwrap();
        let shifted = Configuration::step_at(-4, 4, -1).unwrap();
        assert!(step.dominates_pointwise(&shifted).unwrap());
        assert!(!shifted.dominates_pointwise(&step).unwrap());
        assert_eq!(shifted.first_order_violation(&step), Some(0));
        assert!(step.dominates_pointwise(&step).unwrap());
        let other = Configuration::step(-4, 5).unwrap();
        assert!(matches!(
            step.dominates_pointwise(&other),
            Err(LatticeError::WindowMismatch)
        ));
    }

    #[test]
    fn shift_moves_the_window() {
        let step = Configuration::step(-4, 4).unwrap();
        let sh = step.shift(-1);
        assert_eq!(sh.window(), (-5, 3));
        assert_eq!(sh.value(-1), 1);
        assert_eq!(sh.value(0), 0);
        // suffix/shift identity at the core of the translation argument
        for z in -3..3 {
            assert_eq!(step.suffix(z + 1, 3), sh.suffix(z, 3));
        }
    }

    #[test]
    fn step_suffix_structure() {
        let step = Configuration::step(-64, 64).unwrap();
        let m = 4;
        for z in -10..10i64 {
            let s = step.suffix(z, m);
            if z > 0 {
                assert!(s.bits().iter().all(|&b| b == 0));
            } else if z + m as i64 - 1 <= 0 {
                assert!(s.bits().iter().all(|&b| b == 1));
            } else {
                let one_at = (-z) as usize;
                for (i, &b) in s.bits().iter().enumerate() {
                    assert_eq!(b, u8::from(i <= one_at));
                }
            }
        }
    }

    #[test]
    fn rewindow_preserves_values() {
        let c = Configuration::interval(-3, 3, 2).unwrap();
        let w = c.rewindow(-10, 10).unwrap();
        for x in -12..=12 {
            assert_eq!(c.value(x), w.value(x));
        }
    }

    #[test]
    fn suffix_code_matches_pattern_code() {
        let c = Configuration::step(-4, 4).unwrap();
        assert_eq!(c.suffix_code(-1, 3), c.suffix(-1, 3).code());
        assert_eq!(c.suffix_code(0, 2), 0b01);
    }

    #[test]
    fn realize_shifted_is_a_translate() {
        let init = InitialCondition::Step;
        let direct = init.realize(-5, 5).unwrap();
        let shifted = init.realize_shifted(-5, 5, -1).unwrap();
        assert_eq!(shifted.window(), (-5, 5));
        for x in -7..=7 {
            assert_eq!(shifted.value(x), direct.value(x + 1));
        }
    }
}
