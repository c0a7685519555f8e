//! Process characteristics: jump rate, transition kernel and censorship.
//!
//! A [`ProcessSpec`] bundles the three characteristics of a non-homogeneous
//! marked renewal process on an open interval. The survival function, the
//! conditional sojourn density and the cumulative rate are derived from the
//! jump rate; the kernel is only ever sampled.

use std::fmt;
use std::sync::Arc;

use rand::RngCore;
use rand_distr::{Distribution, Normal};

use crate::error::{domain, numeric, Error, Result};
use crate::quad::adaptive_simpson;

/// Absolute tolerance used when the cumulative rate has to be integrated.
pub const QUADRATURE_TOL: f64 = 1e-10;

/// Rejection budget for truncated kernels.
pub const MAX_REJECTIONS: usize = 1_000_000;

/// Rate-like function of `(mark, time)`.
pub type RateFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// One draw from the transition kernel started at `mark`.
pub type KernelFn = Arc<dyn Fn(f64, &mut dyn RngCore) -> Result<f64> + Send + Sync>;
/// Function of the mark alone.
pub type MarkFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// The open interval `(lower, upper)` holding the marks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateSpace {
    lower: f64,
    upper: f64,
}

impl StateSpace {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower < upper) {
            return Err(domain(format!(
                "state space needs lower < upper, got ({lower}, {upper})"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower < x && x < self.upper
    }

    pub(crate) fn check(&self, z: f64) -> Result<()> {
        if self.contains(z) {
            Ok(())
        } else {
            Err(domain(format!(
                "mark {z} outside the state space ({}, {})",
                self.lower, self.upper
            )))
        }
    }
}

/// Deterministic censorship time `t*(z)`.
///
/// The shape hint lets [`crate::partition::cell_horizon`] compute the
/// infimum over a cell exactly instead of scanning a grid.
#[derive(Clone)]
pub enum Censorship {
    /// Same horizon for every mark (may be `+inf`).
    Constant(f64),
    /// Nondecreasing in the mark.
    Increasing(MarkFn),
    /// Nonincreasing in the mark.
    Decreasing(MarkFn),
    /// No known shape.
    General(MarkFn),
}

impl Censorship {
    pub fn at(&self, z: f64) -> f64 {
        match self {
            Censorship::Constant(c) => *c,
            Censorship::Increasing(f) | Censorship::Decreasing(f) | Censorship::General(f) => f(z),
        }
    }
}

impl fmt::Debug for Censorship {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Censorship::Constant(c) => write!(f, "Constant({c})"),
            Censorship::Increasing(_) => f.write_str("Increasing(..)"),
            Censorship::Decreasing(_) => f.write_str("Decreasing(..)"),
            Censorship::General(_) => f.write_str("General(..)"),
        }
    }
}

/// A process given by its jump rate, transition kernel and censorship.
///
/// Immutable once built; cloning shares the underlying closures.
#[derive(Clone)]
pub struct ProcessSpec {
    name: String,
    state_space: StateSpace,
    jump_rate: RateFn,
    kernel: KernelFn,
    censorship: Censorship,
    analytic_cumulative: Option<RateFn>,
    cumulative_inverse: Option<RateFn>,
}

impl fmt::Debug for ProcessSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProcessSpec")
            .field("name", &self.name)
            .field("state_space", &self.state_space)
            .field("censorship", &self.censorship)
            .field("analytic_cumulative", &self.analytic_cumulative.is_some())
            .field("cumulative_inverse", &self.cumulative_inverse.is_some())
            .finish()
    }
}

impl ProcessSpec {
    pub fn new(
        name: impl Into<String>,
        state_space: StateSpace,
        jump_rate: RateFn,
        kernel: KernelFn,
        censorship: Censorship,
    ) -> Self {
        Self {
            name: name.into(),
            state_space,
            jump_rate,
            kernel,
            censorship,
            analytic_cumulative: None,
            cumulative_inverse: None,
        }
    }

    /// Attaches a closed form of `Λ(z, t)`; it must vanish at `t = 0` and be
    /// nondecreasing in `t`.
    pub fn with_cumulative(mut self, cumulative: RateFn) -> Self {
        self.analytic_cumulative = Some(cumulative);
        self
    }

    /// Attaches the inverse of `t ↦ Λ(z, t)`: `(z, level) ↦ t`. May return
    /// `+inf` when the level is never reached.
    pub fn with_cumulative_inverse(mut self, inverse: RateFn) -> Self {
        self.cumulative_inverse = Some(inverse);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_space(&self) -> &StateSpace {
        &self.state_space
    }

    pub fn jump_rate(&self, z: f64, t: f64) -> f64 {
        (self.jump_rate)(z, t)
    }

    pub fn censorship(&self, z: f64) -> f64 {
        self.censorship.at(z)
    }

    pub fn censorship_shape(&self) -> &Censorship {
        &self.censorship
    }

    pub fn has_analytic_cumulative(&self) -> bool {
        self.analytic_cumulative.is_some()
    }

    pub(crate) fn cumulative_inverse(&self) -> Option<&RateFn> {
        self.cumulative_inverse.as_ref()
    }

    pub(crate) fn draw_transition(&self, z: f64, rng: &mut dyn RngCore) -> Result<f64> {
        (self.kernel)(z, rng)
    }

    /// `Λ(z, t)`, from the closed form when available and by quadrature otherwise.
    pub fn cumulative_rate(&self, z: f64, t: f64) -> Result<f64> {
        self.state_space.check(z)?;
        check_time(t)?;
        match &self.analytic_cumulative {
            Some(cum) => Ok(cum(z, t)),
            None => self.integrate_rate(z, t),
        }
    }

    /// `Λ(z, t)` by adaptive quadrature of the jump rate, ignoring any closed form.
    pub fn cumulative_rate_quadrature(&self, z: f64, t: f64) -> Result<f64> {
        self.state_space.check(z)?;
        check_time(t)?;
        self.integrate_rate(z, t)
    }

    fn integrate_rate(&self, z: f64, t: f64) -> Result<f64> {
        if t.is_infinite() {
            return Err(numeric("cannot integrate the jump rate up to +inf"));
        }
        adaptive_simpson(|s| self.jump_rate(z, s), 0.0, t, QUADRATURE_TOL).map_err(|e| match e {
            Error::Numeric(msg) => numeric(format!("cumulative rate at mark {z}, time {t}: {msg}")),
            other => other,
        })
    }

    /// Survival function `G(z, t) = exp(-Λ(z, t))`, without censorship.
    pub fn survival(&self, z: f64, t: f64) -> Result<f64> {
        Ok((-self.cumulative_rate(z, t)?).exp())
    }

    /// Conditional sojourn density `f(z, t) = λ(z, t) G(z, t)`.
    pub fn density(&self, z: f64, t: f64) -> Result<f64> {
        let g = self.survival(z, t)?;
        Ok(self.jump_rate(z, t) * g)
    }
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 {
        Ok(())
    } else {
        Err(domain(format!("time must be nonnegative, got {t}")))
    }
}

/// Draws `Normal(mean, sd)` conditioned on the open interval `(low, high)` by
/// plain rejection.
pub fn truncated_normal(
    rng: &mut dyn RngCore,
    mean: f64,
    sd: f64,
    low: f64,
    high: f64,
    max_tries: usize,
) -> Result<f64> {
    let normal = Normal::new(mean, sd)
        .map_err(|e| domain(format!("normal law with sd {sd}: {e}")))?;
    for _ in 0..max_tries {
        let y = normal.sample(rng);
        if low < y && y < high {
            return Ok(y);
        }
    }
    Err(numeric(format!(
        "truncated normal N({mean}, {sd}^2) on ({low}, {high}): no acceptance in {max_tries} tries"
    )))
}

/// Kernel of the machine-temperature model: a normal law centred at 20 with
/// standard deviation `0.5 + |z - 20|`, restricted to `(0, 60)`.
pub fn machine_kernel() -> KernelFn {
    Arc::new(|z: f64, rng: &mut dyn RngCore| {
        truncated_normal(rng, 20.0, 0.5 + (z - 20.0).abs(), 0.0, 60.0, MAX_REJECTIONS)
    })
}

/// Kernel that never moves.
pub fn identity_kernel() -> KernelFn {
    Arc::new(|z: f64, _rng: &mut dyn RngCore| Ok(z))
}

/// Machine-temperature reliability model on `E = (0, 60)`: failure rate
/// `3 + 0.05 z`, horizon `t* = 1`, repairs aimed at 20 °C.
pub fn machine_model() -> ProcessSpec {
    let rate = |z: f64| 3.0 + 0.05 * z;
    ProcessSpec::new(
        "machine",
        StateSpace::new(0.0, 60.0).expect("valid interval"),
        Arc::new(move |z, _t| rate(z)),
        machine_kernel(),
        Censorship::Constant(1.0),
    )
    .with_cumulative(Arc::new(move |z, t| rate(z) * t))
    .with_cumulative_inverse(Arc::new(move |z, level| level / rate(z)))
}

/// Constant jump rate `c` with the machine model's kernel, state space and horizon.
pub fn constant_model(c: f64) -> Result<ProcessSpec> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(domain(format!("constant rate must be finite and >= 0, got {c}")));
    }
    Ok(ProcessSpec::new(
        format!("constant:{c}"),
        StateSpace::new(0.0, 60.0).expect("valid interval"),
        Arc::new(move |_z, _t| c),
        machine_kernel(),
        Censorship::Constant(1.0),
    )
    .with_cumulative(Arc::new(move |_z, t| c * t))
    .with_cumulative_inverse(Arc::new(move |_z, level| {
        if c > 0.0 {
            level / c
        } else {
            f64::INFINITY
        }
    })))
}

/// Resolves a built-in model name: `machine` or `constant:<c>`.
pub fn model_by_name(name: &str) -> Result<ProcessSpec> {
    let name = name.trim();
    if name == "machine" {
        return Ok(machine_model());
    }
    if let Some(value) = name.strip_prefix("constant:") {
        let c: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad constant rate in model name '{name}'")))?;
        return constant_model(c);
    }
    Err(Error::Config(format!(
        "unknown model '{name}' (expected 'machine' or 'constant:<c>')"
    )))
}

/// Grid-level sanity checks on the jump rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    /// Largest finite-difference slope of the rate in the mark.
    pub lipschitz_estimate: f64,
    /// `(time, max over marks of λ(mark, time))` for each grid time.
    pub rate_bound: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
}

impl Diagnostics {
    /// Rate bound at the last grid time not exceeding `t` (first grid time
    /// when `t` precedes the grid).
    pub fn rate_bound_estimate(&self, t: f64) -> f64 {
        let idx = self.rate_bound.partition_point(|&(s, _)| s <= t);
        match idx {
            0 => self.rate_bound.first().map_or(0.0, |&(_, m)| m),
            i => self.rate_bound[i - 1].1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ValidationOptions {
    /// Warn when the rate changes by more than this between adjacent marks.
    pub max_mark_increment: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            max_mark_increment: 0.5,
        }
    }
}

/// Finite-difference diagnostics of the jump rate on a mark × time grid.
/// Never fails; problems are reported as warnings.
pub fn validate_characteristics(
    spec: &ProcessSpec,
    mark_grid: &[f64],
    time_grid: &[f64],
    options: ValidationOptions,
) -> Diagnostics {
    let mut warnings = Vec::new();
    let mut marks: Vec<f64> = mark_grid
        .iter()
        .copied()
        .filter(|&z| {
            let ok = spec.state_space().contains(z);
            if !ok {
                warnings.push(format!("mark {z} outside the state space, skipped"));
            }
            ok
        })
        .collect();
    marks.sort_by(f64::total_cmp);
    marks.dedup();
    let min_horizon = marks
        .iter()
        .map(|&z| spec.censorship(z))
        .fold(f64::INFINITY, f64::min);
    let mut times: Vec<f64> = time_grid
        .iter()
        .copied()
        .filter(|&t| {
            let ok = t >= 0.0 && t < min_horizon;
            if !ok {
                warnings.push(format!("time {t} outside [0, {min_horizon}), skipped"));
            }
            ok
        })
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    if marks.is_empty() || times.is_empty() {
        warnings.push("empty grid after filtering".to_string());
    }

    let mut lipschitz: f64 = 0.0;
    let mut rate_bound = Vec::with_capacity(times.len());
    for &t in &times {
        let rates: Vec<f64> = marks.iter().map(|&z| spec.jump_rate(z, t)).collect();
        if let Some(&bad) = rates.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
            warnings.push(format!("jump rate {bad} is not a finite nonnegative value at time {t}"));
        }
        let max = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        rate_bound.push((t, max));
        for (w, r) in marks.windows(2).zip(rates.windows(2)) {
            let jump = (r[1] - r[0]).abs();
            let slope = jump / (w[1] - w[0]);
            if slope.is_finite() {
                lipschitz = lipschitz.max(slope);
            }
            if jump > options.max_mark_increment {
                warnings.push(format!(
                    "jump rate changes by {jump:.6} between marks {} and {} at time {t}",
                    w[0], w[1]
                ));
            }
        }
    }
    Diagnostics {
        lipschitz_estimate: lipschitz,
        rate_bound,
        warnings,
    }
}
