//! Nelson-Aalen estimation of the cumulative rate, cell by cell.
//!
//! For a cell `A` the estimator sums `m / Y(A, s)` over the distinct
//! uncensored sojourn times `s` (multiplicity `m`), with `Y` counting every
//! sojourn started in `A` that lasts at least `s`. A cell whose empirical
//! mass does not exceed `n^{-1/2}` is treated as unvisited and estimated by
//! zero. The same formula, applied to a singleton cell of a finite mark
//! space, is the classical discrete-state Nelson-Aalen estimator.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::counting::{cell_events, empirical_measure, CellData, StepFunction};
use crate::error::{domain, Result};
use crate::partition::{cell_horizon, Cell, Partition};
use crate::model::ProcessSpec;
use crate::simulate::Trajectory;

/// Per-distinct-event `(time, multiplicity, at-risk count)`, sorted by time.
fn event_table(cd: &CellData) -> Vec<(f64, f64, f64)> {
    let mut all: Vec<f64> = cd.sojourns.iter().map(|&(s, _)| s).collect();
    all.sort_by(f64::total_cmp);
    let mut events: Vec<f64> = cd.events().collect();
    events.sort_by(f64::total_cmp);

    let mut table: Vec<(f64, f64, f64)> = Vec::new();
    for s in events {
        match table.last_mut() {
            Some(last) if last.0 == s => last.1 += 1.0,
            _ => {
                let at_risk = (all.len() - all.partition_point(|&x| x < s)) as f64;
                table.push((s, 1.0, at_risk));
            }
        }
    }
    table
}

/// `L̂(A, t) = ∫_0^t Y(A, s)^+ dN(A, s)` over uncensored events.
pub fn nelson_aalen(cd: &CellData) -> StepFunction {
    StepFunction::from_jumps(
        0.0,
        event_table(cd).into_iter().map(|(s, m, y)| (s, m / y)),
        0.0,
    )
}

/// Plug-in variance `Σ m / Y²` over uncensored events up to `t`.
pub fn variance_estimate(cd: &CellData) -> StepFunction {
    StepFunction::from_jumps(
        0.0,
        event_table(cd).into_iter().map(|(s, m, y)| (s, m / (y * y))),
        0.0,
    )
}

/// Cumulative-rate estimate of one cell on `[0, t_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeEstimate {
    pub cell: Cell,
    pub lhat: StepFunction,
    pub variance: StepFunction,
    /// Visit count of the cell.
    pub visits: usize,
    pub nu_hat: f64,
    /// Whether `nu_hat > n^{-1/2}`.
    pub threshold_passed: bool,
    pub horizon: f64,
    pub t_max: f64,
}

impl CumulativeEstimate {
    fn check(&self, t: f64) -> Result<()> {
        if 0.0 <= t && t <= self.t_max {
            Ok(())
        } else {
            Err(domain(format!(
                "time {t} outside the estimation window [0, {}]",
                self.t_max
            )))
        }
    }

    /// `L̂(A, t)` for `t` in `[0, t_max]`.
    pub fn value(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        Ok(self.lhat.value(t))
    }

    pub fn variance_at(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        Ok(self.variance.value(t))
    }
}

/// Pointwise normal band `L̂(t) ∓ z σ̂(t)`, lower end floored at 0.
///
/// Asymptotic: validity rests on a rate-of-convergence assumption that cannot
/// be checked from the data.
pub fn confidence_band(ce: &CumulativeEstimate, t: f64, level: f64) -> Result<(f64, f64)> {
    if !(0.0 < level && level < 1.0) {
        return Err(domain(format!("confidence level must lie in (0, 1), got {level}")));
    }
    if !(t < ce.horizon) {
        return Err(domain(format!("time {t} not below the horizon {}", ce.horizon)));
    }
    let estimate = ce.value(t)?;
    let sd = ce.variance_at(t)?.sqrt();
    let z = Normal::standard().inverse_cdf(0.5 * (1.0 + level));
    Ok(((estimate - z * sd).max(0.0), estimate + z * sd))
}

/// Estimates the cumulative rate of `cell` on `[0, t_max]`, `t_max` strictly
/// below the cell horizon.
pub fn estimate_cell(
    traj: &Trajectory,
    cell: &Cell,
    spec: &ProcessSpec,
    t_max: f64,
) -> Result<CumulativeEstimate> {
    let horizon = cell_horizon(spec, cell)?;
    if !(t_max >= 0.0) {
        return Err(domain(format!("t_max must be nonnegative, got {t_max}")));
    }
    let cd = cell_events(traj, cell).with_horizon(horizon);
    cd.check_window(t_max)?;
    let nu_hat = empirical_measure(traj, cell)?;
    let threshold = 1.0 / (cd.n_total as f64).sqrt();
    Ok(CumulativeEstimate {
        cell: *cell,
        lhat: nelson_aalen(&cd).truncated(t_max),
        variance: variance_estimate(&cd).truncated(t_max),
        visits: cd.visits(),
        nu_hat,
        threshold_passed: nu_hat > threshold,
        horizon,
        t_max,
    })
}

/// Piecewise estimate of `Λ(x, t)` over a partition.
#[derive(Debug, Clone)]
pub struct GlobalCumulative {
    pub partition: Partition,
    pub per_cell: Vec<CumulativeEstimate>,
    pub t_max: f64,
}

impl GlobalCumulative {
    /// Estimate at `(x, s)`: the containing cell's `L̂`, or 0 when `x` is
    /// outside the region or its cell fails the visit threshold.
    pub fn evaluate(&self, x: f64, s: f64) -> Result<f64> {
        if !(0.0 <= s && s <= self.t_max) {
            return Err(domain(format!("time {s} outside [0, {}]", self.t_max)));
        }
        Ok(match self.partition.locate(x) {
            Some(k) if self.per_cell[k].threshold_passed => self.per_cell[k].lhat.value(s),
            _ => 0.0,
        })
    }

    pub fn cell_of(&self, x: f64) -> Option<&CumulativeEstimate> {
        self.partition.locate(x).map(|k| &self.per_cell[k])
    }
}

pub fn global_cumulative(
    traj: &Trajectory,
    p: &Partition,
    spec: &ProcessSpec,
    t_max: f64,
) -> Result<GlobalCumulative> {
    let per_cell = p
        .cells()
        .iter()
        .map(|cell| estimate_cell(traj, cell, spec, t_max))
        .collect::<Result<Vec<_>>>()?;
    Ok(GlobalCumulative {
        partition: p.clone(),
        per_cell,
        t_max,
    })
}
