//! Exact transient analysis of the truncated system and the exact
//! stochastic-order oracle on suffix distributions.
//!
//! The generator of the truncated window is sparse: each of the `2^n`
//! states has exactly `n` single-flip transitions. The matrix exponential
//! is evaluated by the uniformization series, which preserves
//! non-negativity and carries an explicit Poisson-tail truncation error.
//! Stochastic domination on `{0,1}^m` is decided exhaustively against
//! every up-set; increasing {0,1}-valued functions are exactly up-set
//! indicators, so this is the full test class.

use thiserror::Error;

use crate::lattice::Configuration;
use crate::rates::{RateError, RateSpec};

/// Largest window for exact analysis (2^n states).
pub const MAX_WINDOW: usize = 14;

/// Largest suffix width for up-set enumeration; the count grows as the
/// Dedekind numbers (7581 at m = 5).
pub const MAX_UPSET_WIDTH: usize = 5;

#[derive(Debug, Error)]
pub enum ExactError {
    #[error("window of {n} sites exceeds the exact-analysis cap {}", MAX_WINDOW)]
    WindowTooLarge { n: usize },
    #[error("suffix width {m} exceeds the up-set enumeration cap {}", MAX_UPSET_WIDTH)]
    WidthTooLarge { m: usize },
    #[error("suffix widths differ: {a} vs {b}")]
    WidthMismatch { a: usize, b: usize },
    #[error("suffix [{z}, {z_end}] exceeds window [{lo}, {hi}]")]
    SuffixOutsideWindow { z: i64, z_end: i64, lo: i64, hi: i64 },
    #[error("horizon must be >= 0, got {0}")]
    BadHorizon(f64),
    #[error("tolerance must be > 0, got {0}")]
    BadTolerance(f64),
    #[error("invalid distribution: {0}")]
    BadDistribution(String),
    #[error("configuration window [{cfg_lo}, {cfg_hi}] does not match generator window [{lo}, {hi}]")]
    StateWindowMismatch { cfg_lo: i64, cfg_hi: i64, lo: i64, hi: i64 },
    #[error(transparent)]
    Rate(#[from] RateError),
}

/// Sparse generator of the truncated spin system on a window with frozen
/// tail spins feeding the edge patterns. State bit `j` is the spin at site
/// `lo + j`.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    lo: i64,
    n: usize,
    pub left_tail: u8,
    pub right_tail: u8,
    /// `flip_rates[state * n + j]` = rate of flipping site `lo + j`.
    flip_rates: Vec<f64>,
    /// Row sums of the off-diagonal part, i.e. `-diagonal`.
    total_rates: Vec<f64>,
    uniform_rate: f64,
}

impl GeneratorMatrix {
    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.n as i64 - 1
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn states(&self) -> usize {
        1 << self.n
    }

    /// Off-diagonal rate from `state` to `state ^ (1 << site_idx)`.
    pub fn flip_rate(&self, state: usize, site_idx: usize) -> f64 {
        self.flip_rates[state * self.n + site_idx]
    }

    /// Diagonal entry (negative row sum of the off-diagonals).
    pub fn diagonal(&self, state: usize) -> f64 {
        -self.total_rates[state]
    }

    /// Encode an in-window configuration as a state index. The
    /// configuration must live on exactly this window.
    pub fn state_of(&self, cfg: &Configuration) -> Result<usize, ExactError> {
        if cfg.window() != (self.lo, self.hi()) {
            return Err(ExactError::StateWindowMismatch {
                cfg_lo: cfg.lo(),
                cfg_hi: cfg.hi(),
                lo: self.lo,
                hi: self.hi(),
            });
        }
        Ok(cfg.suffix_code(self.lo, self.n))
    }
}

/// Tabulate all `n * 2^n` single-flip rates of the truncated generator.
pub fn build_generator(
    spec: &RateSpec,
    lo: i64,
    hi: i64,
    left_tail: u8,
    right_tail: u8,
) -> Result<GeneratorMatrix, ExactError> {
    let n = (hi - lo + 1) as usize;
    if hi < lo || n > MAX_WINDOW {
        return Err(ExactError::WindowTooLarge { n });
    }
    let r = spec.radius() as i64;
    let width = spec.width();
    let states = 1usize << n;
    let mut flip_rates = vec![0.0; states * n];
    let mut total_rates = vec![0.0; states];
    for state in 0..states {
        let mut total = 0.0;
        for j in 0..n {
            let mut code = 0usize;
            for k in 0..width {
                let pos = j as i64 + k as i64 - r;
                let spin = if pos < 0 {
                    left_tail
                } else if pos >= n as i64 {
                    right_tail
                } else {
                    ((state >> pos) & 1) as u8
                };
                code |= (spin as usize) << k;
            }
            let rate = spec.rate_code(code);
            flip_rates[state * n + j] = rate;
            total += rate;
        }
        total_rates[state] = total;
    }
    let uniform_rate = total_rates.iter().cloned().fold(0.0, f64::max);
    Ok(GeneratorMatrix {
        lo,
        n,
        left_tail,
        right_tail,
        flip_rates,
        total_rates,
        uniform_rate,
    })
}

/// `exp(tQ)` applied to a point mass, by the uniformization series with
/// the Poisson tail mass below `tol`.
pub fn transient_distribution(
    gen: &GeneratorMatrix,
    init_state: usize,
    t: f64,
    tol: f64,
) -> Result<Vec<f64>, ExactError> {
    let mut dist = vec![0.0; gen.states()];
    dist[init_state] = 1.0;
    transient_from(gen, dist, t, tol)
}

/// Same series applied to an arbitrary initial distribution.
pub fn transient_from(
    gen: &GeneratorMatrix,
    dist: Vec<f64>,
    t: f64,
    tol: f64,
) -> Result<Vec<f64>, ExactError> {
    if !(t >= 0.0) {
        return Err(ExactError::BadHorizon(t));
    }
    if !(tol > 0.0) {
        return Err(ExactError::BadTolerance(tol));
    }
    let lambda = gen.uniform_rate;
    if t == 0.0 || lambda == 0.0 {
        return Ok(dist);
    }
    // keep e^{-lambda t} representable; the semigroup property makes the
    // split exact up to the stacked tolerances
    if lambda * t > 700.0 {
        let half = transient_from(gen, dist, t / 2.0, tol / 2.0)?;
        return transient_from(gen, half, t / 2.0, tol / 2.0);
    }
    let lt = lambda * t;
    let mut weight = (-lt).exp();
    let mut cumulative = weight;
    let mut acc: Vec<f64> = dist.iter().map(|p| p * weight).collect();
    let mut v = dist;
    let mut k = 1u64;
    while cumulative < 1.0 - tol {
        v = apply_uniformized_step(gen, &v, lambda);
        weight *= lt / k as f64;
        cumulative += weight;
        for (a, x) in acc.iter_mut().zip(&v) {
            *a += weight * x;
        }
        k += 1;
    }
    Ok(acc)
}

/// One step of `v P` with `P = I + Q / lambda`.
fn apply_uniformized_step(gen: &GeneratorMatrix, v: &[f64], lambda: f64) -> Vec<f64> {
    let n = gen.n;
    let mut out = vec![0.0; v.len()];
    for (state, &p) in v.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        out[state] += p * (1.0 - gen.total_rates[state] / lambda);
        let row = &gen.flip_rates[state * n..(state + 1) * n];
        for (j, &rate) in row.iter().enumerate() {
            if rate != 0.0 {
                out[state ^ (1 << j)] += p * rate / lambda;
            }
        }
    }
    out
}

/// Per-site occupation probabilities `P(spin at z = 1)` of a full window
/// distribution, returned as `(z, probability)` pairs.
pub fn occupancy(dist: &[f64], lo: i64) -> Vec<(i64, f64)> {
    let n = dist.len().trailing_zeros() as usize;
    let mut probs = vec![0.0; n];
    for (state, &p) in dist.iter().enumerate() {
        for (j, q) in probs.iter_mut().enumerate() {
            if state & (1 << j) != 0 {
                *q += p;
            }
        }
    }
    probs
        .into_iter()
        .enumerate()
        .map(|(j, p)| (lo + j as i64, p))
        .collect()
}

/// Probability distribution over `{0,1}^m` suffix patterns; pattern bit
/// `i` is the spin at offset `i` from the suffix origin.
#[derive(Debug, Clone)]
pub struct SuffixDistribution {
    m: usize,
    weights: Vec<f64>,
}

impl SuffixDistribution {
    pub fn new(m: usize, weights: Vec<f64>) -> Result<Self, ExactError> {
        if weights.len() != 1 << m {
            return Err(ExactError::BadDistribution(format!(
                "expected {} weights, got {}",
                1 << m,
                weights.len()
            )));
        }
        let mut sum = 0.0;
        for &w in &weights {
            if !w.is_finite() || w < -1e-12 {
                return Err(ExactError::BadDistribution(format!("weight {w}")));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ExactError::BadDistribution(format!("weights sum to {sum}")));
        }
        Ok(Self { m, weights })
    }

    pub fn from_counts(m: usize, counts: &[u64]) -> Result<Self, ExactError> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(ExactError::BadDistribution("no samples".into()));
        }
        Self::new(
            m,
            counts.iter().map(|&c| c as f64 / total as f64).collect(),
        )
    }

    pub fn point_mass(m: usize, code: usize) -> Self {
        let mut weights = vec![0.0; 1 << m];
        weights[code] = 1.0;
        Self { m, weights }
    }

    pub fn width(&self) -> usize {
        self.m
    }

    pub fn prob(&self, code: usize) -> f64 {
        self.weights[code]
    }

    pub fn upset_mass(&self, u: &UpSet) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .filter(|(code, _)| u.contains(*code))
            .map(|(_, &w)| w)
            .sum()
    }
}

/// Marginalize a full window distribution onto the suffix coordinates
/// `z .. z + m - 1`.
pub fn suffix_marginal(
    dist: &[f64],
    lo: i64,
    z: i64,
    m: usize,
) -> Result<SuffixDistribution, ExactError> {
    let n = dist.len().trailing_zeros() as usize;
    let hi = lo + n as i64 - 1;
    let z_end = z + m as i64 - 1;
    if z < lo || z_end > hi {
        return Err(ExactError::SuffixOutsideWindow { z, z_end, lo, hi });
    }
    let offset = (z - lo) as usize;
    let mask = (1usize << m) - 1;
    let mut weights = vec![0.0; 1 << m];
    for (state, &p) in dist.iter().enumerate() {
        weights[(state >> offset) & mask] += p;
    }
    SuffixDistribution::new(m, weights)
}

/// Upward-closed subset of `{0,1}^m`, stored as a membership bitmask over
/// the `2^m <= 32` patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpSet {
    m: usize,
    mask: u32,
}

impl UpSet {
    pub fn from_members(
        m: usize,
        members: impl IntoIterator<Item = usize>,
    ) -> Result<Self, ExactError> {
        if m > MAX_UPSET_WIDTH {
            return Err(ExactError::WidthTooLarge { m });
        }
        let mut mask = 0u32;
        for p in members {
            mask |= 1 << p;
        }
        let u = Self { m, mask };
        if !u.is_upward_closed() {
            return Err(ExactError::BadDistribution(format!(
                "{{{}}} is not upward closed",
                u.label()
            )));
        }
        Ok(u)
    }

    /// Smallest up-set containing the given patterns.
    pub fn up_closure(m: usize, members: impl IntoIterator<Item = usize>) -> Self {
        let npat = 1usize << m;
        let mut mask = 0u32;
        for p in members {
            for q in 0..npat {
                if p & q == p {
                    mask |= 1 << q;
                }
            }
        }
        Self { m, mask }
    }

    fn is_upward_closed(self) -> bool {
        let npat = 1usize << self.m;
        for p in 0..npat {
            if self.contains(p) {
                for i in 0..self.m {
                    if p & (1 << i) == 0 && !self.contains(p | (1 << i)) {
                        return false;
                    }
                }
            }
        }
        true
    }

    pub fn width(self) -> usize {
        self.m
    }

    pub fn raw_mask(self) -> u32 {
        self.mask
    }

    #[inline]
    pub fn contains(self, code: usize) -> bool {
        self.mask >> code & 1 == 1
    }

    pub fn members(self) -> Vec<usize> {
        (0..1usize << self.m).filter(|&p| self.contains(p)).collect()
    }

    /// Members as bit strings joined by `|`; `empty` for the empty set.
    pub fn label(self) -> String {
        if self.mask == 0 {
            return "empty".to_string();
        }
        self.members()
            .iter()
            .map(|&p| {
                (0..self.m)
                    .map(|i| if p >> i & 1 == 1 { '1' } else { '0' })
                    .collect::<String>()
            })
            .collect::<Vec<_>>()
            .join("|")
    }
}

/// Every upward-closed subset of `{0,1}^m`, empty and full included.
/// Patterns are branched in decreasing-popcount order so that each
/// inclusion decision only looks at already-decided covers.
pub fn enumerate_upsets(m: usize) -> Result<Vec<UpSet>, ExactError> {
    if m > MAX_UPSET_WIDTH {
        return Err(ExactError::WidthTooLarge { m });
    }
    let npat = 1usize << m;
    let mut order: Vec<usize> = (0..npat).collect();
    order.sort_by_key(|p| std::cmp::Reverse(p.count_ones()));

    let mut masks: Vec<u32> = vec![0];
    for &p in &order {
        let covers: u32 = (0..m)
            .filter(|&i| p & (1 << i) == 0)
            .map(|i| 1u32 << (p | (1 << i)))
            .sum();
        let mut next = Vec::with_capacity(masks.len() * 2);
        for &mask in &masks {
            next.push(mask);
            if mask & covers == covers {
                next.push(mask | 1 << p);
            }
        }
        masks = next;
    }
    masks.sort_unstable();
    Ok(masks.into_iter().map(|mask| UpSet { m, mask }).collect())
}

/// Verdict of the exhaustive stochastic-order test, carrying the worst
/// up-set margin either way.
#[derive(Debug, Clone)]
pub struct DominationVerdict {
    pub holds: bool,
    /// Largest value of `nu(U) - mu(U)` over all up-sets; domination holds
    /// when this does not exceed the tolerance.
    pub worst_margin: f64,
    pub witness: UpSet,
    pub mu_mass: f64,
    pub nu_mass: f64,
}

/// `mu >= nu` in the stochastic order iff `mu(U) >= nu(U) - tol` for every
/// up-set `U` of `{0,1}^m`.
pub fn stochastic_dominates(
    mu: &SuffixDistribution,
    nu: &SuffixDistribution,
    tol: f64,
) -> Result<DominationVerdict, ExactError> {
    if mu.width() != nu.width() {
        return Err(ExactError::WidthMismatch {
            a: mu.width(),
            b: nu.width(),
        });
    }
    let upsets = enumerate_upsets(mu.width())?;
    let mut worst_margin = f64::NEG_INFINITY;
    let mut witness = upsets[0];
    let mut masses = (0.0, 0.0);
    for u in upsets {
        let mu_mass = mu.upset_mass(&u);
        let nu_mass = nu.upset_mass(&u);
        let margin = nu_mass - mu_mass;
        if margin > worst_margin {
            worst_margin = margin;
            witness = u;
            masses = (mu_mass, nu_mass);
        }
    }
    Ok(DominationVerdict {
        holds: worst_margin <= tol,
        worst_margin,
        witness,
        mu_mass: masses.0,
        nu_mass: masses.1,
    })
}
