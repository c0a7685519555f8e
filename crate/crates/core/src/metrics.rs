//! Error metrics, the Monte-Carlo oracle for cell-averaged rates, and
//! replicate summaries.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::counting::StepFunction;
use crate::error::{domain, Error, Result};
use crate::model::ProcessSpec;
use crate::partition::{cell_horizon, Cell};
use crate::simulate::{sample_transition, Seed};
use crate::smooth::SampledCurve;

fn check_interval(a: f64, b: f64, lo: f64, hi: f64) -> Result<()> {
    if a < b && lo <= a && b <= hi {
        Ok(())
    } else {
        Err(domain(format!("interval [{a}, {b}] not inside [{lo}, {hi}]")))
    }
}

/// Trapezoid integral of `(curve - oracle)²` over `[a, b]` using the curve's
/// grid points inside the interval plus the interpolated endpoints.
pub fn integrated_square_error<F>(curve: &SampledCurve, oracle: F, interval: (f64, f64)) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let (a, b) = interval;
    let (lo, hi) = (curve.grid[0], *curve.grid.last().expect("nonempty grid"));
    check_interval(a, b, lo, hi)?;
    let mut nodes: Vec<(f64, f64)> = vec![(a, curve.value_at(a).expect("inside grid"))];
    nodes.extend(
        curve
            .grid
            .iter()
            .zip(&curve.values)
            .filter(|(&t, _)| a < t && t < b)
            .map(|(&t, &v)| (t, v)),
    );
    nodes.push((b, curve.value_at(b).expect("inside grid")));
    let sq: Vec<(f64, f64)> = nodes
        .into_iter()
        .map(|(t, v)| (t, (v - oracle(t)).powi(2)))
        .collect();
    Ok(sq
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum())
}

/// `sup |step - oracle|` over `[a, b]`, checking a uniform grid as well as
/// each jump point of the step function and its left limit.
pub fn sup_distance<F>(step: &StepFunction, oracle: F, interval: (f64, f64), grid_points: usize) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let (a, b) = interval;
    if !(a < b && a >= 0.0) {
        return Err(domain(format!("bad interval [{a}, {b}]")));
    }
    if grid_points < 2 {
        return Err(domain("sup distance needs at least 2 grid points"));
    }
    let mut sup: f64 = 0.0;
    for i in 0..grid_points {
        let t = a + (b - a) * i as f64 / (grid_points - 1) as f64;
        sup = sup.max((step.value(t) - oracle(t)).abs());
    }
    for &t in step.times().iter().filter(|&&t| a <= t && t <= b) {
        let o = oracle(t);
        sup = sup.max((step.value(t) - o).abs());
        if t > a {
            sup = sup.max((step.left_limit(t) - o).abs());
        }
    }
    Ok(sup)
}

/// Brute-force value of the cell-averaged rate
/// `∫_A f(z,t) ν(dz) / ∫_A G(z,t) ν(dz)` with `ν` replaced by the long-run
/// mark distribution of a simulated chain.
///
/// Only the transition kernel is simulated; sojourns are never drawn, so
/// the oracle shares no code with the estimators it checks.
pub fn mc_oracle_l(
    spec: &ProcessSpec,
    cell: &Cell,
    t: f64,
    burn_in: usize,
    samples: usize,
    seed: Seed,
) -> Result<f64> {
    let horizon = cell_horizon(spec, cell)?;
    if !(0.0 <= t && t < horizon) {
        return Err(domain(format!("time {t} not in [0, {horizon})")));
    }
    let visits = oracle_marks(spec, cell, burn_in, samples, seed)?;
    cell_average_rate(spec, &visits, t)
}

/// Post-burn-in marks of a kernel-only chain that land in `cell`. The chain
/// starts at the midpoint of the state space.
pub fn oracle_marks(
    spec: &ProcessSpec,
    cell: &Cell,
    burn_in: usize,
    samples: usize,
    seed: Seed,
) -> Result<Vec<f64>> {
    if samples == 0 {
        return Err(domain("oracle needs at least one sample"));
    }
    let mut rng = seed.rng();
    let space = spec.state_space();
    let mut z = 0.5 * (space.lower() + space.upper());
    for _ in 0..burn_in {
        z = sample_transition(spec, z, &mut rng as &mut dyn RngCore)?;
    }
    let mut visits = Vec::new();
    for _ in 0..samples {
        z = sample_transition(spec, z, &mut rng as &mut dyn RngCore)?;
        if cell.contains(z) {
            visits.push(z);
        }
    }
    Ok(visits)
}

/// `mean f / mean G` over the given marks, written as a `G`-weighted mean of
/// `λ = f / G` around the first rate so that a constant rate comes back
/// exactly.
pub fn cell_average_rate(spec: &ProcessSpec, marks: &[f64], t: f64) -> Result<f64> {
    let Some(&first) = marks.first() else {
        return Err(Error::Degenerate("no post-burn-in visit to the cell".into()));
    };
    let reference = spec.jump_rate(first, t);
    let mut weight = 0.0;
    let mut shift = 0.0;
    for &z in marks {
        let g = spec.survival(z, t)?;
        weight += g;
        shift += g * (spec.jump_rate(z, t) - reference);
    }
    if !(weight > 0.0) {
        return Err(Error::Degenerate(format!("survival underflows at time {t}")));
    }
    Ok(reference + shift / weight)
}

/// Five-number summary with type-7 (linear interpolation) quartiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub values: Vec<f64>,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Type-7 quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn boxplot_summary(values: &[f64]) -> Result<ReplicateSummary> {
    if values.is_empty() {
        return Err(domain("summary of an empty sample"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(domain("summary of a sample containing NaN"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(ReplicateSummary {
        values: values.to_vec(),
        min: sorted[0],
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
    })
}
