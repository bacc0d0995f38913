//! Desk-scale reproduction of the suffix-monotonicity theorem by three
//! independent methods.
//!
//! * `coupled` — pathwise evidence: the step-at-0 and step-at-(-1)
//!   processes evolve under one shared event stream and must stay
//!   pointwise ordered on every replica; a shifted third run certifies the
//!   translation step as an exact path identity. This is the primary
//!   evidence class: a single violation fails the run.
//! * `exact` — the truncated transient law is computed exactly and
//!   adjacent suffix laws are compared with the exhaustive up-set oracle;
//!   the direct z vs z+1 comparison carries the truncation budget, while
//!   the ordered-initial-condition comparison is exact.
//! * `independent` — a sanity net: suffix statistics at z and z+1 are
//!   estimated from independent replica sets and compared with a one-sided
//!   99% two-proportion rule.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::engine::{
    self, derive_seed, plan_window, sample_events, EngineError, WindowPlan,
};
use crate::exact::{
    build_generator, enumerate_upsets, stochastic_dominates, suffix_marginal,
    transient_distribution, ExactError, UpSet, MAX_UPSET_WIDTH,
};
use crate::lattice::{InitialCondition, LatticeError};
use crate::rates::{RateError, RateSpec};

/// 99% two-sided normal quantile used for all confidence intervals.
pub const Z_99: f64 = 2.575829303548901;

/// Domination tolerance for exact distributions; absorbs the series
/// truncation noise without masking real violations.
pub const EXACT_DOMINATION_TOL: f64 = 1e-9;

/// Poisson-tail tolerance for the exact transient solver.
const TRANSIENT_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("rate table is not attractive ({violations} violating pattern pairs); the coupling guarantee is void")]
    NotAttractive { violations: usize },
    #[error("invalid options: {0}")]
    BadOptions(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Rate(#[from] RateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Coupled,
    Exact,
    Independent,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Mode, VerifyError> {
        match s {
            "coupled" => Ok(Mode::Coupled),
            "exact" => Ok(Mode::Exact),
            "independent" => Ok(Mode::Independent),
            other => Err(VerifyError::BadOptions(format!(
                "mode must be coupled|exact|independent, got `{other}`"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Coupled => "coupled",
            Mode::Exact => "exact",
            Mode::Independent => "independent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// Per-z outcome with its witness: a violating up-set label, a coupling
/// violation site, or the worst confidence margin.
#[derive(Debug, Clone, Serialize)]
pub struct ZVerdict {
    pub z: i64,
    pub verdict: Verdict,
    pub witness: Option<String>,
    /// Mode-specific margin: worst `nu(U) - mu(U)` (exact), worst
    /// `diff - radius` over the battery (independent), or the mismatch
    /// count (coupled).
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityReport {
    pub mode: Mode,
    pub z_min: i64,
    pub z_max: i64,
    pub m: usize,
    pub per_z: Vec<ZVerdict>,
    pub overall: Verdict,
    /// Coupled mode: pointwise order violations across all replicas.
    pub pathwise_violations: u64,
    /// Coupled mode: failures of the pathwise translation identity.
    pub translation_mismatches: u64,
    pub replicas: u64,
    /// Interval half-length N when verifying the finite-interval case.
    pub interval_n: Option<i64>,
    /// Which evidence class produced the verdict.
    pub evidence: String,
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub t: f64,
    pub z_min: i64,
    pub z_max: i64,
    pub m: usize,
    pub replicas: u64,
    pub seed: u64,
    pub mode: Mode,
    pub epsilon_trunc: f64,
    /// Explicit window for exact mode; derived from the z range otherwise.
    pub exact_window: Option<(i64, i64)>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            t: 1.0,
            z_min: 0,
            z_max: 4,
            m: 3,
            replicas: 10_000,
            seed: 0,
            mode: Mode::Coupled,
            epsilon_trunc: 1e-3,
            exact_window: None,
        }
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = (z / denom) * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfileRow {
    pub z: i64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OccupancyProfile {
    pub rows: Vec<ProfileRow>,
}

#[derive(Debug, Clone, Copy)]
pub struct ProfileOptions {
    pub t: f64,
    pub z_min: i64,
    pub z_max: i64,
    pub replicas: u64,
    pub seed: u64,
    pub epsilon_trunc: f64,
    /// Override the planned margin (used by the window self check).
    pub margin_override: Option<i64>,
}

fn plan_with_override(
    spec: &RateSpec,
    t: f64,
    z_min: i64,
    z_max: i64,
    epsilon_trunc: f64,
    margin_override: Option<i64>,
) -> Result<WindowPlan, EngineError> {
    let mut plan = plan_window(spec, t, z_min, z_max, epsilon_trunc)?;
    if let Some(margin) = margin_override {
        plan.margin = margin;
        plan.lo = z_min - margin;
        plan.hi = z_max + margin;
    }
    Ok(plan)
}

/// Per-site occupancy frequencies with 99% Wilson intervals, from
/// independent uniformized replicas. Replica seeds derive from the
/// top-level seed by index, so the result is independent of worker
/// scheduling.
pub fn estimate_occupation_profile(
    spec: &RateSpec,
    init: &InitialCondition,
    opts: &ProfileOptions,
) -> Result<OccupancyProfile, VerifyError> {
    if opts.replicas == 0 {
        return Err(VerifyError::BadOptions("replicas must be >= 1".into()));
    }
    let plan = plan_with_override(
        spec,
        opts.t,
        opts.z_min,
        opts.z_max,
        opts.epsilon_trunc,
        opts.margin_override,
    )?;
    let c_max = spec.uniformization_bound()?;
    let init_cfg = init.realize(plan.lo, plan.hi)?;
    let width = (opts.z_max - opts.z_min + 1) as usize;

    let counts = (0..opts.replicas)
        .into_par_iter()
        .map(|rep| -> Result<Vec<u64>, VerifyError> {
            let events = sample_events(c_max, plan.lo, plan.hi, opts.t, derive_seed(opts.seed, rep));
            let fin = engine::evolve_uniformized(spec, &init_cfg, &events)?;
            Ok((opts.z_min..=opts.z_max)
                .map(|z| u64::from(fin.value(z)))
                .collect())
        })
        .try_reduce(
            || vec![0u64; width],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
                Ok(a)
            },
        )?;

    let rows = counts
        .iter()
        .enumerate()
        .map(|(i, &hits)| {
            let (ci_low, ci_high) = wilson_interval(hits, opts.replicas, Z_99);
            ProfileRow {
                z: opts.z_min + i as i64,
                p_hat: hits as f64 / opts.replicas as f64,
                ci_low,
                ci_high,
                n: opts.replicas,
            }
        })
        .collect();
    Ok(OccupancyProfile { rows })
}

#[derive(Debug, Clone, Serialize)]
pub struct SelfCheckRow {
    pub z: i64,
    pub p_default: f64,
    pub p_doubled: f64,
    pub abs_diff: f64,
    pub combined_se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelfCheckReport {
    pub margin_default: i64,
    pub margin_doubled: i64,
    pub rows: Vec<SelfCheckRow>,
    pub max_abs_diff: f64,
    pub pass: bool,
}

/// Truncation self-consistency: re-estimate the occupancy profile with the
/// margin doubled, under common seeds, and require the per-site difference
/// to stay within 3 combined standard errors.
pub fn window_self_check(
    spec: &RateSpec,
    init: &InitialCondition,
    opts: &ProfileOptions,
) -> Result<SelfCheckReport, VerifyError> {
    let base_plan = plan_with_override(spec, opts.t, opts.z_min, opts.z_max, opts.epsilon_trunc, opts.margin_override)?;
    let default_opts = ProfileOptions {
        margin_override: Some(base_plan.margin),
        ..*opts
    };
    let doubled_opts = ProfileOptions {
        margin_override: Some(2 * base_plan.margin),
        ..*opts
    };
    let default = estimate_occupation_profile(spec, init, &default_opts)?;
    let doubled = estimate_occupation_profile(spec, init, &doubled_opts)?;

    let n = opts.replicas as f64;
    let mut rows = Vec::new();
    let mut pass = true;
    let mut max_abs_diff = 0.0f64;
    for (a, b) in default.rows.iter().zip(&doubled.rows) {
        let abs_diff = (a.p_hat - b.p_hat).abs();
        let se = |p: f64| (p * (1.0 - p) / n).sqrt();
        let combined_se = (se(a.p_hat).powi(2) + se(b.p_hat).powi(2)).sqrt();
        if abs_diff > 3.0 * combined_se {
            pass = false;
        }
        max_abs_diff = max_abs_diff.max(abs_diff);
        rows.push(SelfCheckRow {
            z: a.z,
            p_default: a.p_hat,
            p_doubled: b.p_hat,
            abs_diff,
            combined_se,
        });
    }
    Ok(SelfCheckReport {
        margin_default: base_plan.margin,
        margin_doubled: 2 * base_plan.margin,
        rows,
        max_abs_diff,
        pass,
    })
}

/// Verify suffix monotonicity from the step initial condition.
pub fn verify_theorem(spec: &RateSpec, opts: &VerifyOptions) -> Result<MonotonicityReport, VerifyError> {
    verify_monotonicity(spec, &InitialCondition::Step, None, opts)
}

/// Same checks with the finite-interval initial condition `1_{[-N, 0]}`.
pub fn verify_remark2(
    spec: &RateSpec,
    n: i64,
    opts: &VerifyOptions,
) -> Result<MonotonicityReport, VerifyError> {
    if n < 0 {
        return Err(VerifyError::BadOptions(format!("N must be >= 0, got {n}")));
    }
    verify_monotonicity(spec, &InitialCondition::Interval { n }, Some(n), opts)
}

/// Sweep form of the interval check: the smallest tested N at which every
/// per-z verdict passes, along with all reports.
pub fn remark2_sweep(
    spec: &RateSpec,
    ns: &[i64],
    opts: &VerifyOptions,
) -> Result<(Option<i64>, Vec<MonotonicityReport>), VerifyError> {
    let mut reports = Vec::new();
    let mut smallest_pass = None;
    for &n in ns {
        let report = verify_remark2(spec, n, opts)?;
        if smallest_pass.is_none() && report.overall == Verdict::Pass {
            smallest_pass = Some(n);
        }
        reports.push(report);
    }
    Ok((smallest_pass, reports))
}

fn verify_monotonicity(
    spec: &RateSpec,
    init: &InitialCondition,
    interval_n: Option<i64>,
    opts: &VerifyOptions,
) -> Result<MonotonicityReport, VerifyError> {
    if opts.z_min < 0 || opts.z_min > opts.z_max {
        return Err(VerifyError::BadOptions(format!(
            "need 0 <= z_min <= z_max, got [{}, {}]",
            opts.z_min, opts.z_max
        )));
    }
    if opts.m == 0 {
        return Err(VerifyError::BadOptions("suffix width m must be >= 1".into()));
    }
    match opts.mode {
        Mode::Coupled => verify_coupled(spec, init, interval_n, opts),
        Mode::Exact => verify_exact(spec, init, interval_n, opts),
        Mode::Independent => verify_independent(spec, init, interval_n, opts),
    }
}

/// Accumulator for one coupled replica batch.
#[derive(Clone)]
struct CoupledTally {
    pathwise_violations: u64,
    translation_mismatches: u64,
    per_z_mismatches: Vec<u64>,
    /// Paired up-set indicator sums: diff_sums[z][u] accumulates
    /// 1[suffix_z(bar) in U] - 1[suffix_z(til) in U].
    diff_sums: Vec<Vec<i64>>,
}

impl CoupledTally {
    fn new(z_count: usize, battery: usize) -> Self {
        Self {
            pathwise_violations: 0,
            translation_mismatches: 0,
            per_z_mismatches: vec![0; z_count],
            diff_sums: vec![vec![0; battery]; z_count],
        }
    }

    fn merge(mut self, other: Self) -> Self {
        self.pathwise_violations += other.pathwise_violations;
        self.translation_mismatches += other.translation_mismatches;
        for (a, b) in self.per_z_mismatches.iter_mut().zip(&other.per_z_mismatches) {
            *a += b;
        }
        for (row_a, row_b) in self.diff_sums.iter_mut().zip(&other.diff_sums) {
            for (a, b) in row_a.iter_mut().zip(row_b) {
                *a += b;
            }
        }
        self
    }
}

fn verify_coupled(
    spec: &RateSpec,
    init: &InitialCondition,
    interval_n: Option<i64>,
    opts: &VerifyOptions,
) -> Result<MonotonicityReport, VerifyError> {
    let attractiveness = spec.check_attractive();
    if !attractiveness.attractive {
        return Err(VerifyError::NotAttractive {
            violations: attractiveness.violations.len(),
        });
    }
    let c_max = spec.uniformization_bound()?;
    let coupling = spec.check_coupling_monotone(c_max)?;
    if !coupling.pass() {
        return Err(VerifyError::NotAttractive { violations: 1 });
    }
    // the plan must cover every site read by suffix(z+1, m)
    let plan = plan_window(spec, opts.t, opts.z_min, opts.z_max + opts.m as i64, opts.epsilon_trunc)?;
    let bar_init = init.realize(plan.lo, plan.hi)?;
    let til_init = init.realize_shifted(plan.lo, plan.hi, -1)?;
    // step vs shifted step is pointwise ordered; interval inits are not,
    // so the pathwise assertion only applies in the ordered case
    let ordered = bar_init.dominates_pointwise(&til_init).unwrap_or(false);

    let battery = upset_battery(opts.m)?;
    let z_count = (opts.z_max - opts.z_min + 1) as usize;

    let tally = (0..opts.replicas)
        .into_par_iter()
        .map(|rep| -> Result<CoupledTally, VerifyError> {
            let mut t = CoupledTally::new(z_count, battery.len());
            let events = sample_events(c_max, plan.lo, plan.hi, opts.t, derive_seed(opts.seed, rep));
            let bar = engine::evolve_uniformized(spec, &bar_init, &events)?;
            let til = engine::evolve_uniformized(spec, &til_init, &events)?;
            if ordered {
                for x in plan.lo..=plan.hi {
                    if til.value(x) > bar.value(x) {
                        t.pathwise_violations += 1;
                    }
                }
            }
            // shifted run of the bar process: its suffix at z must equal
            // the til suffix at z pathwise, and bar's suffix at z+1
            let bar_plus = engine::evolve_uniformized(
                spec,
                &init.realize(plan.lo + 1, plan.hi + 1)?,
                &events.shift(1),
            )?;
            for (zi, z) in (opts.z_min..=opts.z_max).enumerate() {
                let til_suffix = til.suffix_code(z, opts.m);
                if til_suffix != bar_plus.suffix_code(z + 1, opts.m) {
                    t.translation_mismatches += 1;
                    t.per_z_mismatches[zi] += 1;
                }
                let bar_suffix = bar.suffix_code(z, opts.m);
                for (ui, u) in battery.iter().enumerate() {
                    t.diff_sums[zi][ui] +=
                        i64::from(u.contains(bar_suffix)) - i64::from(u.contains(til_suffix));
                }
            }
            Ok(t)
        })
        .try_reduce(
            || CoupledTally::new(z_count, battery.len()),
            |a, b| Ok(a.merge(b)),
        )?;

    let n = opts.replicas as f64;
    let mut per_z = Vec::new();
    for (zi, z) in (opts.z_min..=opts.z_max).enumerate() {
        if tally.per_z_mismatches[zi] > 0 {
            per_z.push(ZVerdict {
                z,
                verdict: Verdict::Fail,
                witness: Some("translation identity".into()),
                margin: tally.per_z_mismatches[zi] as f64,
            });
            continue;
        }
        if ordered {
            // pathwise order makes every paired difference non-negative
            per_z.push(ZVerdict {
                z,
                verdict: if tally.pathwise_violations == 0 {
                    Verdict::Pass
                } else {
                    Verdict::Fail
                },
                witness: None,
                margin: 0.0,
            });
            continue;
        }
        // unordered initial conditions (finite intervals): one-sided
        // paired test on each up-set mean difference
        let mut verdict = Verdict::Pass;
        let mut witness = None;
        let mut worst = f64::NEG_INFINITY;
        for (ui, u) in battery.iter().enumerate() {
            let mean = tally.diff_sums[zi][ui] as f64 / n;
            // paired differences live in {-1, 0, 1}; bound the variance by 1
            let radius = Z_99 / n.sqrt();
            let deficit = -mean - radius;
            if deficit > worst {
                worst = deficit;
                witness = Some(u.label());
            }
            if mean < -radius {
                verdict = Verdict::Fail;
            } else if mean < 0.0 && verdict == Verdict::Pass {
                verdict = Verdict::Inconclusive;
            }
        }
        per_z.push(ZVerdict {
            z,
            verdict,
            witness: if verdict == Verdict::Pass { None } else { witness },
            margin: worst,
        });
    }

    let overall = summarize(&per_z, tally.pathwise_violations == 0);
    Ok(MonotonicityReport {
        mode: Mode::Coupled,
        z_min: opts.z_min,
        z_max: opts.z_max,
        m: opts.m,
        per_z,
        overall,
        pathwise_violations: tally.pathwise_violations,
        translation_mismatches: tally.translation_mismatches,
        replicas: opts.replicas,
        interval_n,
        evidence: if ordered {
            "pathwise coupling (exact)".into()
        } else {
            "paired coupling statistics".into()
        },
    })
}

fn verify_exact(
    spec: &RateSpec,
    init: &InitialCondition,
    interval_n: Option<i64>,
    opts: &VerifyOptions,
) -> Result<MonotonicityReport, VerifyError> {
    if opts.m > MAX_UPSET_WIDTH {
        return Err(VerifyError::BadOptions(format!(
            "exact mode needs m <= {MAX_UPSET_WIDTH}, got {}",
            opts.m
        )));
    }
    let (lo, hi) = match opts.exact_window {
        Some(w) => w,
        None => default_exact_window(opts),
    };
    if hi < opts.z_max + opts.m as i64 || lo > opts.z_min {
        return Err(VerifyError::BadOptions(format!(
            "exact window [{lo}, {hi}] does not cover suffixes up to z = {} with m = {}",
            opts.z_max + 1,
            opts.m
        )));
    }
    let bar_init = init.realize(lo, hi)?;
    let til_init = init.realize_shifted(lo, hi, -1)?;
    let ordered = bar_init.dominates_pointwise(&til_init).unwrap_or(false);
    let gen = build_generator(spec, lo, hi, bar_init.left_tail(), bar_init.right_tail())?;
    let dist_bar = transient_distribution(&gen, gen.state_of(&bar_init)?, opts.t, TRANSIENT_TOL)?;
    let dist_til = transient_distribution(&gen, gen.state_of(&til_init)?, opts.t, TRANSIENT_TOL)?;

    let direct_tol = EXACT_DOMINATION_TOL + opts.epsilon_trunc;
    let mut per_z = Vec::new();
    for z in opts.z_min..=opts.z_max {
        let mu_z = suffix_marginal(&dist_bar, lo, z, opts.m)?;
        let mu_next = suffix_marginal(&dist_bar, lo, z + 1, opts.m)?;
        // direct adjacent comparison on one window: true within the
        // truncation budget
        let direct = stochastic_dominates(&mu_z, &mu_next, direct_tol)?;
        // ordered-initial-condition comparison: exactly true on the
        // truncated system when the inits are pointwise ordered
        let coupled_ok = if ordered {
            let nu_z = suffix_marginal(&dist_til, lo, z, opts.m)?;
            let v = stochastic_dominates(&mu_z, &nu_z, EXACT_DOMINATION_TOL)?;
            v.holds
        } else {
            true
        };
        let pass = direct.holds && coupled_ok;
        per_z.push(ZVerdict {
            z,
            verdict: if pass { Verdict::Pass } else { Verdict::Fail },
            witness: if pass {
                None
            } else {
                Some(direct.witness.label())
            },
            margin: direct.worst_margin,
        });
    }
    let overall = summarize(&per_z, true);
    Ok(MonotonicityReport {
        mode: Mode::Exact,
        z_min: opts.z_min,
        z_max: opts.z_max,
        m: opts.m,
        per_z,
        overall,
        pathwise_violations: 0,
        translation_mismatches: 0,
        replicas: 0,
        interval_n,
        evidence: "exact transient law (truncation-limited)".into(),
    })
}

fn default_exact_window(opts: &VerifyOptions) -> (i64, i64) {
    let span = (opts.z_max + opts.m as i64) - opts.z_min + 1;
    let extra = (crate::exact::MAX_WINDOW as i64 - 2 - span).max(0);
    let pad_left = extra - extra / 2;
    let pad_right = extra / 2;
    (opts.z_min - pad_left, opts.z_max + opts.m as i64 + pad_right)
}

fn verify_independent(
    spec: &RateSpec,
    init: &InitialCondition,
    interval_n: Option<i64>,
    opts: &VerifyOptions,
) -> Result<MonotonicityReport, VerifyError> {
    let c_max = spec.uniformization_bound()?;
    let plan = plan_window(spec, opts.t, opts.z_min, opts.z_max + opts.m as i64, opts.epsilon_trunc)?;
    let init_cfg = init.realize(plan.lo, plan.hi)?;
    let battery = upset_battery(opts.m)?;
    let n_patterns = 1usize << opts.m;

    // pattern counts per z, each z from its own independent replica set
    let z_values: Vec<i64> = (opts.z_min..=opts.z_max + 1).collect();
    let mut counts_per_z = Vec::with_capacity(z_values.len());
    for &z in &z_values {
        let z_seed = derive_seed(opts.seed, 0x5A00 + z as u64);
        let counts = (0..opts.replicas)
            .into_par_iter()
            .map(|rep| -> Result<Vec<u64>, VerifyError> {
                let events =
                    sample_events(c_max, plan.lo, plan.hi, opts.t, derive_seed(z_seed, rep));
                let fin = engine::evolve_uniformized(spec, &init_cfg, &events)?;
                let mut counts = vec![0u64; n_patterns];
                counts[fin.suffix_code(z, opts.m)] = 1;
                Ok(counts)
            })
            .try_reduce(
                || vec![0u64; n_patterns],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(&b) {
                        *x += y;
                    }
                    Ok(a)
                },
            )?;
        counts_per_z.push(counts);
    }

    let n = opts.replicas as f64;
    let mass = |counts: &[u64], u: &UpSet| -> f64 {
        counts
            .iter()
            .enumerate()
            .filter(|(code, _)| u.contains(*code))
            .map(|(_, &c)| c as f64)
            .sum::<f64>()
            / n
    };

    let mut per_z = Vec::new();
    for (zi, &z) in z_values[..z_values.len() - 1].iter().enumerate() {
        let mut verdict = Verdict::Pass;
        let mut witness = None;
        let mut worst = f64::NEG_INFINITY;
        for u in &battery {
            let p_here = mass(&counts_per_z[zi], u);
            let p_next = mass(&counts_per_z[zi + 1], u);
            let diff = p_next - p_here;
            let radius = Z_99
                * ((p_here * (1.0 - p_here) + p_next * (1.0 - p_next)) / n).sqrt();
            let excess = diff - radius;
            if excess > worst {
                worst = excess;
                witness = Some(u.label());
            }
            if diff > radius {
                verdict = Verdict::Fail;
            } else if diff > 0.0 && verdict == Verdict::Pass {
                verdict = Verdict::Inconclusive;
            }
        }
        per_z.push(ZVerdict {
            z,
            verdict,
            witness: if verdict == Verdict::Fail { witness } else { None },
            margin: worst,
        });
    }
    let overall = summarize(&per_z, true);
    Ok(MonotonicityReport {
        mode: Mode::Independent,
        z_min: opts.z_min,
        z_max: opts.z_max,
        m: opts.m,
        per_z,
        overall,
        pathwise_violations: 0,
        translation_mismatches: 0,
        replicas: opts.replicas,
        interval_n,
        evidence: "independent Monte Carlo (sanity net)".into(),
    })
}

/// Battery of increasing test functions: every up-set when m is small,
/// otherwise threshold ("at least k occupied") and single-site sets.
fn upset_battery(m: usize) -> Result<Vec<UpSet>, ExactError> {
    if m <= 4 {
        return enumerate_upsets(m);
    }
    if m > MAX_UPSET_WIDTH {
        return Err(ExactError::WidthTooLarge { m });
    }
    let npat = 1usize << m;
    let mut battery = Vec::new();
    for k in 1..=m {
        battery.push(UpSet::from_members(
            m,
            (0..npat).filter(|p| p.count_ones() as usize >= k),
        )?);
    }
    for i in 0..m {
        battery.push(UpSet::from_members(m, (0..npat).filter(|p| p >> i & 1 == 1))?);
    }
    Ok(battery)
}

fn summarize(per_z: &[ZVerdict], global_ok: bool) -> Verdict {
    if !global_ok || per_z.iter().any(|v| v.verdict == Verdict::Fail) {
        Verdict::Fail
    } else if per_z.iter().any(|v| v.verdict == Verdict::Inconclusive) {
        Verdict::Inconclusive
    } else {
        Verdict::Pass
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::Model;

    fn contact() -> RateSpec {
        Model::Contact {
            lambda: 2.0,
            delta: 1.0,
        }
        .build()
        .unwrap()
    }

    #[test]
    fn wilson_interval_brackets_the_estimate() {
        let (lo, hi) = wilson_interval(73, 100, Z_99);
        assert!(lo <= 0.73 && 0.73 <= hi);
        assert!(lo > 0.5 && hi < 0.9);
        assert_eq!(wilson_interval(0, 0, Z_99), (0.0, 1.0));
    }

    #[test]
    fn profile_at_zero_horizon_is_the_initial_condition() {
        let spec = contact();
        let profile = estimate_occupation_profile(
            &spec,
            &InitialCondition::Step,
            &ProfileOptions {
                t: 0.0,
                z_min: -3,
                z_max: 3,
                replicas: 10,
                seed: 1,
                epsilon_trunc: 1e-3,
                margin_override: None,
            },
        )
        .unwrap();
        for row in &profile.rows {
            let expect = if row.z <= 0 { 1.0 } else { 0.0 };
            assert_eq!(row.p_hat, expect);
        }
    }

    #[test]
    fn pure_death_profile_matches_exponential_decay() {
        let spec = Model::PureDeath.build().unwrap();
        let t = 0.7;
        let profile = estimate_occupation_profile(
            &spec,
            &InitialCondition::Step,
            &ProfileOptions {
                t,
                z_min: -2,
                z_max: 2,
                replicas: 20_000,
                seed: 2,
                epsilon_trunc: 1e-3,
                margin_override: None,
            },
        )
        .unwrap();
        for row in &profile.rows {
            let expect = if row.z <= 0 { (-t).exp() } else { 0.0 };
            assert!(
                row.ci_low <= expect && expect <= row.ci_high,
                "z = {}: [{}, {}] vs {expect}",
                row.z,
                row.ci_low,
                row.ci_high
            );
        }
    }

    #[test]
    fn coupled_mode_passes_for_pure_death() {
        let spec = Model::PureDeath.build().unwrap();
        let report = verify_theorem(
            &spec,
            &VerifyOptions {
                t: 0.5,
                replicas: 500,
                seed: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(report.overall, Verdict::Pass);
        assert_eq!(report.pathwise_violations, 0);
        assert_eq!(report.translation_mismatches, 0);
    }

    #[test]
    fn coupled_mode_rejects_non_attractive_specs() {
        let spec = Model::GlauberIsing { beta: -0.8 }.build().unwrap();
        assert!(matches!(
            verify_theorem(
                &spec,
                &VerifyOptions {
                    replicas: 10,
                    ..Default::default()
                }
            ),
            Err(VerifyError::NotAttractive { .. })
        ));
    }

    #[test]
    fn exact_mode_passes_for_contact_on_a_small_window() {
        let spec = contact();
        let report = verify_theorem(
            &spec,
            &VerifyOptions {
                t: 0.5,
                z_min: 0,
                z_max: 3,
                m: 3,
                mode: Mode::Exact,
                exact_window: Some((-5, 6)),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(report.overall, Verdict::Pass, "{:?}", report.per_z);
        assert_eq!(report.per_z.len(), 4);
    }

    #[test]
    fn exact_mode_at_zero_horizon_is_trivially_monotone() {
        let spec = contact();
        let report = verify_remark2(
            &spec,
            2,
            &VerifyOptions {
                t: 0.0,
                z_min: 0,
                z_max: 2,
                m: 2,
                mode: Mode::Exact,
                exact_window: Some((-4, 5)),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(report.overall, Verdict::Pass);
        assert_eq!(report.interval_n, Some(2));
    }

    #[test]
    fn independent_mode_does_not_flag_the_contact_process() {
        let spec = contact();
        let report = verify_theorem(
            &spec,
            &VerifyOptions {
                t: 0.5,
                z_min: 0,
                z_max: 2,
                m: 2,
                replicas: 4000,
                seed: 7,
                mode: Mode::Independent,
                ..Default::default()
            },
        )
        .unwrap();
        assert_ne!(report.overall, Verdict::Fail, "{:?}", report.per_z);
    }

    #[test]
    fn self_check_is_exact_at_zero_horizon() {
        let spec = contact();
        let report = window_self_check(
            &spec,
            &InitialCondition::Step,
            &ProfileOptions {
                t: 0.0,
                z_min: -2,
                z_max: 2,
                replicas: 50,
                seed: 5,
                epsilon_trunc: 1e-3,
                margin_override: None,
            },
        )
        .unwrap();
        assert!(report.pass);
        assert_eq!(report.max_abs_diff, 0.0);
    }

    #[test]
    fn self_check_pure_death_has_no_propagation() {
        let spec = Model::PureDeath.build().unwrap();
        let report = window_self_check(
            &spec,
            &InitialCondition::Step,
            &ProfileOptions {
                t: 1.0,
                z_min: -2,
                z_max: 2,
                replicas: 2000,
                seed: 6,
                epsilon_trunc: 1e-3,
                margin_override: None,
            },
        )
        .unwrap();
        assert!(report.pass);
        assert_eq!(report.max_abs_diff, 0.0);
    }

    #[test]
    fn remark2_sweep_reports_smallest_passing_n() {
        let spec = contact();
        let opts = VerifyOptions {
            t: 0.25,
            z_min: 0,
            z_max: 2,
            m: 2,
            mode: Mode::Exact,
            exact_window: Some((-5, 6)),
            ..Default::default()
        };
        let (smallest, reports) = remark2_sweep(&spec, &[0, 2, 5], &opts).unwrap();
        assert_eq!(reports.len(), 3);
        if let Some(n) = smallest {
            assert!([0, 2, 5].contains(&n));
        }
    }
}
