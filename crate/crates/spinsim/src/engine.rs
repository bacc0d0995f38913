//! Simulation backends on a truncated window.
//!
//! Two backends drive the same generator: Gillespie's direct method, and a
//! uniformized construction that pre-samples per-site Poisson event times
//! with uniform marks. The event stream is the shared randomness that lets
//! several ordered initial conditions evolve under one coupling; with an
//! attractive rate table and `c_max = B + D` the coupling preserves
//! pointwise order at every event.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::lattice::{Configuration, LatticeError};
use crate::rates::{RateError, RateSpec};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("event stream window [{ev_lo}, {ev_hi}] does not match configuration window [{cfg_lo}, {cfg_hi}]")]
    WindowMismatch {
        ev_lo: i64,
        ev_hi: i64,
        cfg_lo: i64,
        cfg_hi: i64,
    },
    #[error("horizon must be >= 0, got {0}")]
    BadHorizon(f64),
    #[error("truncation tolerance must lie in (0, 1), got {0}")]
    BadTolerance(f64),
    #[error("site range [{0}, {1}] is empty")]
    BadSiteRange(i64, i64),
    #[error("initial conditions are not pointwise decreasing at index {0}")]
    UnorderedInitials(usize),
    #[error("coupling order violated at site {site} between trajectories {upper} and {lower}")]
    OrderViolation { site: i64, upper: usize, lower: usize },
}

/// Deterministic seed derivation: every stream in a run descends from the
/// single top-level seed via `derive(parent, tag)`, with documented tags
/// (replica index, then site index as a two's-complement u64).
pub fn derive_seed(parent: u64, tag: u64) -> u64 {
    splitmix64(parent ^ splitmix64(tag))
}

pub fn splitmix64(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One uniformized event: a Poisson ring at `site` at `time` with an
/// independent uniform mark in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub site: i64,
    pub mark: f64,
}

/// Seeded per-site Poisson(c_max) rings with uniform marks, merged into
/// global time order. Fully reproducible from `(seed, window, horizon,
/// c_max)`.
#[derive(Debug, Clone)]
pub struct EventStream {
    pub lo: i64,
    pub hi: i64,
    pub horizon: f64,
    pub c_max: f64,
    pub seed: u64,
    pub events: Vec<Event>,
}

impl EventStream {
    /// Translate every event site (and the window) by `dx`. Used for the
    /// pathwise form of the translation step: evolving a shifted
    /// configuration with a correspondingly shifted stream equals shifting
    /// the evolved configuration.
    pub fn shift(&self, dx: i64) -> EventStream {
        EventStream {
            lo: self.lo + dx,
            hi: self.hi + dx,
            horizon: self.horizon,
            c_max: self.c_max,
            seed: self.seed,
            events: self
                .events
                .iter()
                .map(|e| Event {
                    time: e.time,
                    site: e.site + dx,
                    mark: e.mark,
                })
                .collect(),
        }
    }
}

/// Truncation window with its safety margin. The margin formula is a
/// light-cone heuristic; adequacy is certified empirically by the
/// window-doubling self check, not by the formula alone.
#[derive(Debug, Clone, Copy)]
pub struct WindowPlan {
    pub lo: i64,
    pub hi: i64,
    pub margin: i64,
    pub epsilon_trunc: f64,
}

/// Margin `M = R * ceil(e * c_max * t + ln(1/eps)) + R` around the sites
/// of interest; `M = R` at horizon zero since no event can propagate.
pub fn plan_window(
    spec: &RateSpec,
    t: f64,
    z_min: i64,
    z_max: i64,
    epsilon_trunc: f64,
) -> Result<WindowPlan, EngineError> {
    if !(t >= 0.0) {
        return Err(EngineError::BadHorizon(t));
    }
    if !(epsilon_trunc > 0.0 && epsilon_trunc < 1.0) {
        return Err(EngineError::BadTolerance(epsilon_trunc));
    }
    if z_min > z_max {
        return Err(EngineError::BadSiteRange(z_min, z_max));
    }
    let r = spec.radius() as i64;
    let margin = if t == 0.0 {
        r
    } else {
        let c_max = spec.uniformization_bound()?;
        let reach = std::f64::consts::E * c_max * t + (1.0 / epsilon_trunc).ln();
        r * reach.ceil() as i64 + r
    };
    Ok(WindowPlan {
        lo: z_min - margin,
        hi: z_max + margin,
        margin,
        epsilon_trunc,
    })
}

/// Per-site Poisson(c_max) event times on `(0, t]` with independent
/// uniform marks, merged into time order. Deterministic in
/// `(seed, window, t, c_max)`; per-site sub-streams are keyed by the
/// absolute site index so overlapping windows share their events.
pub fn sample_events(c_max: f64, lo: i64, hi: i64, t: f64, seed: u64) -> EventStream {
    let mut events = Vec::new();
    if t > 0.0 && c_max > 0.0 {
        for site in lo..=hi {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, site as u64));
            let mut time = 0.0;
            loop {
                let u: f64 = rng.gen();
                time += -(1.0 - u).ln() / c_max;
                if time > t {
                    break;
                }
                let mark: f64 = rng.gen();
                events.push(Event { time, site, mark });
            }
        }
        // equal times have probability zero; ties from reproducibility
        // constraints resolve in site order
        events.sort_by(|a, b| {
            a.time
                .partial_cmp(&b.time)
                .expect("event times are finite")
                .then(a.site.cmp(&b.site))
        });
    }
    EventStream {
        lo,
        hi,
        horizon: t,
        c_max,
        seed,
        events,
    }
}

pub fn sample_events_planned(
    spec: &RateSpec,
    plan: &WindowPlan,
    t: f64,
    seed: u64,
) -> Result<EventStream, EngineError> {
    let c_max = spec.uniformization_bound()?;
    Ok(sample_events(c_max, plan.lo, plan.hi, t, seed))
}

/// Apply a uniformized event stream to an initial configuration. At each
/// event `(u, x, v)` the spin at `x` becomes 1 iff `v < p1`, where `p1` is
/// the post-event occupation probability of the current local pattern.
pub fn evolve_uniformized(
    spec: &RateSpec,
    init: &Configuration,
    events: &EventStream,
) -> Result<Configuration, EngineError> {
    if init.window() != (events.lo, events.hi) {
        return Err(EngineError::WindowMismatch {
            ev_lo: events.lo,
            ev_hi: events.hi,
            cfg_lo: init.lo(),
            cfg_hi: init.hi(),
        });
    }
    let radius = spec.radius();
    let mut cfg = init.clone();
    for ev in &events.events {
        let code = cfg.pattern_code(ev.site, radius);
        let p1 = spec.occupied_probability(code, events.c_max);
        cfg.set(ev.site, u8::from(ev.mark < p1));
    }
    Ok(cfg)
}

const GILLESPIE_TAG: u64 = 0x4749_4C4C; // "GILL"

/// Direct-method simulation of the same truncated generator: exponential
/// holding times at the total rate, flip site chosen proportionally to its
/// rate. Rates of the <= 2R+1 affected sites are updated incrementally.
pub fn simulate_gillespie(
    spec: &RateSpec,
    init: &Configuration,
    t: f64,
    seed: u64,
) -> Result<Configuration, EngineError> {
    if !(t >= 0.0) {
        return Err(EngineError::BadHorizon(t));
    }
    let mut cfg = init.clone();
    let (lo, hi) = cfg.window();
    let radius = spec.radius();
    let r = radius as i64;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, GILLESPIE_TAG));

    let mut site_rates: Vec<f64> = (lo..=hi)
        .map(|x| spec.rate_code(cfg.pattern_code(x, radius)))
        .collect();
    let mut total: f64 = site_rates.iter().sum();
    let mut time = 0.0;
    let mut events_since_refresh = 0u32;

    loop {
        if total <= 0.0 {
            break; // absorbing state: fast-forward to the horizon
        }
        let u: f64 = rng.gen();
        time += -(1.0 - u).ln() / total;
        if time > t {
            break;
        }
        let mut target = rng.gen::<f64>() * total;
        let mut x = hi;
        for (i, &rate) in site_rates.iter().enumerate() {
            if target < rate {
                x = lo + i as i64;
                break;
            }
            target -= rate;
        }
        cfg.set(x, 1 - cfg.value(x));
        for y in (x - r).max(lo)..=(x + r).min(hi) {
            let idx = (y - lo) as usize;
            let fresh = spec.rate_code(cfg.pattern_code(y, radius));
            total += fresh - site_rates[idx];
            site_rates[idx] = fresh;
        }
        events_since_refresh += 1;
        if events_since_refresh == 4096 {
            // counter the accumulation drift in the incremental total
            total = site_rates.iter().sum();
            events_since_refresh = 0;
        }
    }
    Ok(cfg)
}

/// Evolve a pointwise-decreasing family of initial conditions under one
/// shared event stream and assert that the outputs stay pairwise ordered.
/// An order violation here means a bug or a non-attractive rate table.
pub fn couple_translates(
    spec: &RateSpec,
    inits: &[Configuration],
    events: &EventStream,
) -> Result<Vec<Configuration>, EngineError> {
    for i in 1..inits.len() {
        if !inits[i - 1].dominates_pointwise(&inits[i])? {
            return Err(EngineError::UnorderedInitials(i));
        }
    }
    let outs: Vec<Configuration> = inits
        .iter()
        .map(|c| evolve_uniformized(spec, c, events))
        .collect::<Result<_, _>>()?;
    for i in 1..outs.len() {
        if let Some(site) = outs[i - 1].first_order_violation(&outs[i]) {
            return Err(EngineError::OrderViolation {
                site,
                upper: i - 1,
                lower: i,
            });
        }
    }
    Ok(outs)
}
