//! Finite-range, translation-invariant flip-rate tables and the exact
//! attractiveness checker.
//!
//! A rate table assigns one non-negative flip rate to every local spin
//! pattern of width `2R + 1`. Attractiveness is decided by exhaustive
//! enumeration of all coordinatewise-comparable pattern pairs with equal
//! center spin: birth rates (center 0) must be non-decreasing and death
//! rates (center 1) non-increasing along the order.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported interaction radius. Comparable-pair enumeration costs
/// 3^(2R+1) pairs, so the checkers stay exhaustive only for small R.
pub const MAX_RADIUS: usize = 3;

/// Slack for floating-point comparisons of flip probabilities in the
/// coupling certificate; absorbs half-ulp rounding of `rate / c_max`.
const PROBABILITY_SLACK: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum RateError {
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("radius {0} exceeds supported maximum {}", MAX_RADIUS)]
    RadiusTooLarge(usize),
    #[error("rate table has {got} entries, expected {want}")]
    IncompleteTable { got: usize, want: usize },
    #[error("rate for pattern `{0}` is negative or non-finite: {1}")]
    BadRate(String, f64),
    #[error("`{0}` is not a valid pattern for radius {1}")]
    BadPattern(String, usize),
    #[error("rate table is identically zero; the process has no events")]
    DegenerateTable,
    #[error("uniformization constant {c_max} is below the maximum table rate {max_rate}")]
    BadUniformization { c_max: f64, max_rate: f64 },
}

/// Local spin pattern of width `2R + 1` around a site, encoded as an
/// integer: bit `i` holds the spin at offset `i - R` from the center, so
/// the leftmost site is the least significant bit.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct LocalPattern {
    code: usize,
    radius: usize,
}

impl LocalPattern {
    pub fn new(code: usize, radius: usize) -> Self {
        debug_assert!(code < 1usize << (2 * radius + 1));
        Self { code, radius }
    }

    /// Parse a literal bit string such as `"101"`, written left to right.
    pub fn parse(s: &str, radius: usize) -> Result<Self, RateError> {
        let width = 2 * radius + 1;
        if s.len() != width || !s.bytes().all(|b| b == b'0' || b == b'1') {
            return Err(RateError::BadPattern(s.to_string(), radius));
        }
        let mut code = 0;
        for (i, b) in s.bytes().enumerate() {
            if b == b'1' {
                code |= 1 << i;
            }
        }
        Ok(Self { code, radius })
    }

    pub fn code(self) -> usize {
        self.code
    }

    pub fn radius(self) -> usize {
        self.radius
    }

    pub fn width(self) -> usize {
        2 * self.radius + 1
    }

    pub fn center(self) -> u8 {
        ((self.code >> self.radius) & 1) as u8
    }

    /// Spin at signed offset from the center, `-R <= offset <= R`.
    pub fn spin_at(self, offset: isize) -> u8 {
        let i = offset + self.radius as isize;
        assert!(i >= 0 && (i as usize) < self.width(), "offset out of range");
        ((self.code >> i) & 1) as u8
    }

    /// Coordinatewise `self <= other`.
    pub fn leq(self, other: Self) -> bool {
        self.radius == other.radius && self.code & other.code == self.code
    }
}

impl fmt::Display for LocalPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.width() {
            write!(f, "{}", (self.code >> i) & 1)?;
        }
        Ok(())
    }
}

impl fmt::Debug for LocalPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LocalPattern(\"{}\")", self)
    }
}

/// Total flip-rate table for a translation-invariant, finite-range spin
/// system: one rate per local pattern, indexed by the pattern code.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSpec {
    name: String,
    radius: usize,
    rates: Vec<f64>,
}

impl RateSpec {
    pub fn new(name: impl Into<String>, radius: usize, rates: Vec<f64>) -> Result<Self, RateError> {
        if radius > MAX_RADIUS {
            return Err(RateError::RadiusTooLarge(radius));
        }
        let want = 1usize << (2 * radius + 1);
        if rates.len() != want {
            return Err(RateError::IncompleteTable {
                got: rates.len(),
                want,
            });
        }
        for (code, &r) in rates.iter().enumerate() {
            if !r.is_finite() || r < 0.0 {
                return Err(RateError::BadRate(
                    LocalPattern::new(code, radius).to_string(),
                    r,
                ));
            }
        }
        Ok(Self {
            name: name.into(),
            radius,
            rates,
        })
    }

    /// Build from `pattern string -> rate` entries; the table must be total.
    pub fn from_table(
        name: impl Into<String>,
        radius: usize,
        entries: &BTreeMap<String, f64>,
    ) -> Result<Self, RateError> {
        if radius > MAX_RADIUS {
            return Err(RateError::RadiusTooLarge(radius));
        }
        let want = 1usize << (2 * radius + 1);
        let mut rates = vec![f64::NAN; want];
        for (pat, &r) in entries {
            let p = LocalPattern::parse(pat, radius)?;
            if !r.is_finite() || r < 0.0 {
                return Err(RateError::BadRate(pat.clone(), r));
            }
            rates[p.code()] = r;
        }
        let got = rates.iter().filter(|r| !r.is_nan()).count();
        if got != want {
            return Err(RateError::IncompleteTable { got, want });
        }
        Self::new(name, radius, rates)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn width(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn table_len(&self) -> usize {
        self.rates.len()
    }

    #[inline]
    pub fn rate_code(&self, code: usize) -> f64 {
        self.rates[code]
    }

    pub fn rate(&self, pattern: LocalPattern) -> f64 {
        assert_eq!(pattern.radius(), self.radius);
        self.rates[pattern.code()]
    }

    pub fn patterns(&self) -> impl Iterator<Item = LocalPattern> + '_ {
        (0..self.rates.len()).map(|code| LocalPattern::new(code, self.radius))
    }

    pub fn max_rate(&self) -> f64 {
        self.rates.iter().cloned().fold(0.0, f64::max)
    }

    /// Maximum birth rate (center spin 0) over the table.
    pub fn birth_max(&self) -> f64 {
        let center_bit = 1usize << self.radius;
        self.rates
            .iter()
            .enumerate()
            .filter(|(code, _)| code & center_bit == 0)
            .map(|(_, &r)| r)
            .fold(0.0, f64::max)
    }

    /// Maximum death rate (center spin 1) over the table.
    pub fn death_max(&self) -> f64 {
        let center_bit = 1usize << self.radius;
        self.rates
            .iter()
            .enumerate()
            .filter(|(code, _)| code & center_bit != 0)
            .map(|(_, &r)| r)
            .fold(0.0, f64::max)
    }

    /// Uniformization constant `c_max = B + D` where `B` is the maximum
    /// birth rate and `D` the maximum death rate. The sum, rather than the
    /// plain maximum, is what keeps the post-event occupation probability
    /// monotone when two coupled configurations disagree at the flipping
    /// site: that case needs `b + d <= c_max`.
    pub fn uniformization_bound(&self) -> Result<f64, RateError> {
        let c_max = self.birth_max() + self.death_max();
        if c_max == 0.0 {
            return Err(RateError::DegenerateTable);
        }
        Ok(c_max)
    }

    /// Probability that the spin at the center is 1 after a uniformized
    /// event with the given local pattern: `rate / c_max` for an empty
    /// center, `1 - rate / c_max` for an occupied one.
    #[inline]
    pub fn occupied_probability(&self, code: usize, c_max: f64) -> f64 {
        if code & (1 << self.radius) == 0 {
            self.rates[code] / c_max
        } else {
            1.0 - self.rates[code] / c_max
        }
    }

    /// Exhaustively decide attractiveness: over every comparable pattern
    /// pair with equal center spin, birth rates must not decrease and
    /// death rates must not increase along the order.
    pub fn check_attractive(&self) -> AttractivenessReport {
        let center_bit = 1usize << self.radius;
        let mut violations = Vec::new();
        for high in 1..self.rates.len() {
            let mut low = (high - 1) & high;
            loop {
                if low & center_bit == high & center_bit {
                    let rate_low = self.rates[low];
                    let rate_high = self.rates[high];
                    let bad = if high & center_bit == 0 {
                        rate_low > rate_high
                    } else {
                        rate_low < rate_high
                    };
                    if bad {
                        violations.push(AttractivenessViolation {
                            low: LocalPattern::new(low, self.radius),
                            high: LocalPattern::new(high, self.radius),
                            rate_low,
                            rate_high,
                        });
                    }
                }
                if low == 0 {
                    break;
                }
                low = (low - 1) & high;
            }
        }
        AttractivenessReport {
            attractive: violations.is_empty(),
            violations,
        }
    }

    /// Exhaustive certificate that the uniformized flip rule is a monotone
    /// coupling: over every comparable pattern pair, the post-event
    /// occupation probability must be ordered the same way. With an
    /// attractive table and `c_max` from [`RateSpec::uniformization_bound`]
    /// this always passes.
    pub fn check_coupling_monotone(&self, c_max: f64) -> Result<CouplingReport, RateError> {
        let max_rate = self.max_rate();
        if !(c_max > 0.0) || c_max < max_rate {
            return Err(RateError::BadUniformization { c_max, max_rate });
        }
        for high in 1..self.rates.len() {
            let mut low = (high - 1) & high;
            loop {
                let p_low = self.occupied_probability(low, c_max);
                let p_high = self.occupied_probability(high, c_max);
                if p_low > p_high + PROBABILITY_SLACK {
                    return Ok(CouplingReport {
                        violation: Some(CouplingViolation {
                            low: LocalPattern::new(low, self.radius),
                            high: LocalPattern::new(high, self.radius),
                            p_low,
                            p_high,
                        }),
                    });
                }
                if low == 0 {
                    break;
                }
                low = (low - 1) & high;
            }
        }
        Ok(CouplingReport { violation: None })
    }
}

/// Outcome of the exhaustive attractiveness check.
#[derive(Debug, Clone)]
pub struct AttractivenessReport {
    pub attractive: bool,
    pub violations: Vec<AttractivenessViolation>,
}

/// A comparable pattern pair (equal center spin) whose rates are ordered
/// the wrong way.
#[derive(Debug, Clone)]
pub struct AttractivenessViolation {
    pub low: LocalPattern,
    pub high: LocalPattern,
    pub rate_low: f64,
    pub rate_high: f64,
}

/// Outcome of the monotone-coupling certificate; passes when no comparable
/// pattern pair has out-of-order occupation probabilities.
#[derive(Debug, Clone)]
pub struct CouplingReport {
    pub violation: Option<CouplingViolation>,
}

impl CouplingReport {
    pub fn pass(&self) -> bool {
        self.violation.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct CouplingViolation {
    pub low: LocalPattern,
    pub high: LocalPattern,
    pub p_low: f64,
    pub p_high: f64,
}

/// Model catalog. Built-ins have radius 1 (radius 0 for pure death);
/// custom tables supply an explicit radius and a total pattern map.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Model {
    Contact { lambda: f64, delta: f64 },
    Voter { v: f64 },
    GlauberIsing { beta: f64 },
    PureDeath,
    Custom {
        radius: usize,
        rates: BTreeMap<String, f64>,
    },
}

impl Model {
    /// Default catalog used by the `models` command.
    pub fn builtins() -> Vec<Model> {
        vec![
            Model::Contact {
                lambda: 2.0,
                delta: 1.0,
            },
            Model::Voter { v: 1.0 },
            Model::GlauberIsing { beta: 1.0 },
            Model::PureDeath,
        ]
    }

    pub fn label(&self) -> String {
        match self {
            Model::Contact { lambda, delta } => format!("contact(lambda={lambda},delta={delta})"),
            Model::Voter { v } => format!("voter(v={v})"),
            Model::GlauberIsing { beta } => format!("glauber_ising(beta={beta})"),
            Model::PureDeath => "pure_death".to_string(),
            Model::Custom { radius, .. } => format!("custom(radius={radius})"),
        }
    }

    pub fn short_name(&self) -> &'static str {
        match self {
            Model::Contact { .. } => "contact",
            Model::Voter { .. } => "voter",
            Model::GlauberIsing { .. } => "glauber_ising",
            Model::PureDeath => "pure_death",
            Model::Custom { .. } => "custom",
        }
    }

    pub fn build(&self) -> Result<RateSpec, RateError> {
        match *self {
            Model::Contact { lambda, delta } => {
                if !lambda.is_finite() || lambda < 0.0 {
                    return Err(RateError::InvalidParameter(format!(
                        "contact birth rate lambda must be >= 0, got {lambda}"
                    )));
                }
                if !delta.is_finite() || delta <= 0.0 {
                    return Err(RateError::InvalidParameter(format!(
                        "contact death rate delta must be > 0, got {delta}"
                    )));
                }
                let rates = radius1_table(|left, center, right| {
                    if center == 0 {
                        lambda * f64::from(left + right)
                    } else {
                        delta
                    }
                });
                RateSpec::new(self.label(), 1, rates)
            }
            Model::Voter { v } => {
                if !v.is_finite() || v <= 0.0 {
                    return Err(RateError::InvalidParameter(format!(
                        "voter speed v must be > 0, got {v}"
                    )));
                }
                let rates = radius1_table(|left, center, right| {
                    let disagree = u8::from(left != center) + u8::from(right != center);
                    v * f64::from(disagree) / 2.0
                });
                RateSpec::new(self.label(), 1, rates)
            }
            Model::GlauberIsing { beta } => {
                // beta < 0 is accepted so the checker can exhibit a
                // non-attractive spec; beta >= 0 gives an attractive one.
                if !beta.is_finite() {
                    return Err(RateError::InvalidParameter(format!(
                        "glauber_ising inverse temperature must be finite, got {beta}"
                    )));
                }
                let rates = radius1_table(|left, center, right| {
                    let s = |spin: u8| 2.0 * f64::from(spin) - 1.0;
                    (-beta * s(center) * (s(left) + s(right))).exp()
                });
                RateSpec::new(self.label(), 1, rates)
            }
            Model::PureDeath => RateSpec::new(self.label(), 0, vec![0.0, 1.0]),
            Model::Custom { radius, ref rates } => RateSpec::from_table("custom", radius, rates),
        }
    }
}

fn radius1_table(rate: impl Fn(u8, u8, u8) -> f64) -> Vec<f64> {
    (0..8usize)
        .map(|code| {
            let left = (code & 1) as u8;
            let center = ((code >> 1) & 1) as u8;
            let right = ((code >> 2) & 1) as u8;
            rate(left, center, right)
        })
        .collect()
}
