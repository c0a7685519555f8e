//! Kernel smoothing of the cumulative estimate into a jump-rate estimate.
//!
//! The smoothed rate at `u` is `(1/b) Σ K((u - s_i)/b) Δ_i` over the jumps
//! `(s_i, Δ_i)` of `L̂` lying in `[0, t]`. No boundary correction is applied,
//! so values within one bandwidth of either end of the window are biased;
//! they are computed but flagged when they fall outside the report window.

use std::fmt;
use std::io::Write;

use crate::counting::StepFunction;
use crate::error::{domain, Result};
use crate::estimate::{estimate_cell, CumulativeEstimate};
use crate::model::ProcessSpec;
use crate::partition::Partition;
use crate::quad::adaptive_simpson;
use crate::simulate::Trajectory;

const TV_GRID: usize = 20_001;

/// Continuous probability kernel supported on `[-1, 1]`.
#[derive(Clone, Copy)]
pub struct Kernel {
    name: &'static str,
    eval: fn(f64) -> f64,
    total_variation: f64,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel")
            .field("name", &self.name)
            .field("total_variation", &self.total_variation)
            .finish()
    }
}

impl Kernel {
    /// Checks numerically that `eval` integrates to 1 on `[-1, 1]` and that
    /// `total_variation` matches its variation there.
    pub fn new(name: &'static str, eval: fn(f64) -> f64, total_variation: f64) -> Result<Self> {
        let mass = adaptive_simpson(eval, -1.0, 0.0, 1e-13)? + adaptive_simpson(eval, 0.0, 1.0, 1e-13)?;
        if (mass - 1.0).abs() > 1e-9 {
            return Err(domain(format!("kernel '{name}' integrates to {mass}, not 1")));
        }
        let tv = numeric_total_variation(eval);
        if (tv - total_variation).abs() > 1e-6 {
            return Err(domain(format!(
                "kernel '{name}' has total variation {tv}, declared {total_variation}"
            )));
        }
        Ok(Self {
            name,
            eval,
            total_variation,
        })
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    /// `K(v)`, zero outside `[-1, 1]`.
    pub fn eval(&self, v: f64) -> f64 {
        if v.abs() > 1.0 {
            0.0
        } else {
            (self.eval)(v)
        }
    }

    /// `V(K)`.
    pub fn total_variation(&self) -> f64 {
        self.total_variation
    }
}

fn numeric_total_variation(eval: fn(f64) -> f64) -> f64 {
    let k = |v: f64| if v.abs() > 1.0 { 0.0 } else { eval(v) };
    let step = 2.0 / (TV_GRID - 1) as f64;
    let mut prev = k(-1.0 - step);
    let mut tv = 0.0;
    for i in 0..=TV_GRID {
        let v = -1.0 + i as f64 * step;
        let cur = k(v);
        tv += (cur - prev).abs();
        prev = cur;
    }
    tv
}

pub fn epanechnikov() -> Kernel {
    Kernel::new("epanechnikov", |v| 0.75 * (1.0 - v * v), 1.5).expect("valid kernel")
}

pub fn biweight() -> Kernel {
    Kernel::new(
        "biweight",
        |v| {
            let w = 1.0 - v * v;
            0.9375 * w * w
        },
        1.875,
    )
    .expect("valid kernel")
}

pub fn triangular() -> Kernel {
    Kernel::new("triangular", |v| 1.0 - v.abs(), 2.0).expect("valid kernel")
}

pub fn kernel_by_name(name: &str) -> Result<Kernel> {
    match name {
        "epanechnikov" => Ok(epanechnikov()),
        "biweight" => Ok(biweight()),
        "triangular" => Ok(triangular()),
        other => Err(crate::error::Error::Config(format!(
            "unknown kernel '{other}' (expected epanechnikov, biweight or triangular)"
        ))),
    }
}

/// `max(h^{-alpha}, b_min)`.
pub fn bandwidth_from_visits(h: usize, alpha: f64, b_min: f64) -> Result<f64> {
    if h == 0 {
        return Err(domain("bandwidth needs at least one visit"));
    }
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok((h as f64).powf(-alpha).max(b_min))
}

/// Values of a function on a uniform grid of `[0, t_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCurve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl SampledCurve {
    pub fn from_fn<F: FnMut(f64) -> f64>(t_max: f64, points: usize, mut f: F) -> Result<Self> {
        let grid = uniform_grid(t_max, points)?;
        let values = grid.iter().map(|&t| f(t)).collect();
        Ok(Self { grid, values })
    }

    pub fn spacing(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }

    /// Linear interpolation inside the grid range.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        let (first, last) = (self.grid[0], *self.grid.last()?);
        if !(first <= t && t <= last) {
            return None;
        }
        let idx = self.grid.partition_point(|&g| g <= t);
        if idx == self.grid.len() {
            return self.values.last().copied();
        }
        let (g0, g1) = (self.grid[idx - 1], self.grid[idx]);
        let w = (t - g0) / (g1 - g0);
        Some(self.values[idx - 1] * (1.0 - w) + self.values[idx] * w)
    }

    /// Trapezoid integral over the whole grid.
    pub fn trapezoid(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(g, v)| 0.5 * (g[1] - g[0]) * (v[0] + v[1]))
            .sum()
    }
}

pub fn uniform_grid(t_max: f64, points: usize) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(domain(format!("grid needs at least 2 points, got {points}")));
    }
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(domain(format!("grid end must be positive and finite, got {t_max}")));
    }
    let h = t_max / (points - 1) as f64;
    Ok((0..points)
        .map(|i| if i + 1 == points { t_max } else { i as f64 * h })
        .collect())
}

/// Smoothed rate at a single time `u`.
pub fn smooth_at(lhat: &StepFunction, k: &Kernel, b: f64, t_max: f64, u: f64) -> f64 {
    let lo = lhat.times().partition_point(|&s| s < (u - b).max(0.0));
    let hi = lhat.times().partition_point(|&s| s <= (u + b).min(t_max));
    let sum: f64 = lhat.times()[lo..hi]
        .iter()
        .zip(&lhat.increments()[lo..hi])
        .map(|(&s, &d)| k.eval((u - s) / b) * d)
        .sum();
    sum / b
}

/// Smoothed rate on a uniform grid of `[0, t_max]`.
pub fn kernel_smooth(
    lhat: &StepFunction,
    k: &Kernel,
    b: f64,
    t_max: f64,
    grid_points: usize,
) -> Result<SampledCurve> {
    if !(b > 0.0) {
        return Err(domain(format!("bandwidth must be positive, got {b}")));
    }
    SampledCurve::from_fn(t_max, grid_points, |u| smooth_at(lhat, k, b, t_max, u))
}

/// Smoothed rate of one cell.
#[derive(Debug, Clone)]
pub struct CellRate {
    pub estimate: CumulativeEstimate,
    pub bandwidth: f64,
    /// Zero curve when the cell fails the visit threshold.
    pub curve: SampledCurve,
}

/// Rate value with a flag for times outside the report window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateValue {
    pub rate: f64,
    pub edge: bool,
}

/// Piecewise estimate of `λ(x, t)` over a partition.
#[derive(Debug, Clone)]
pub struct GlobalRate {
    pub partition: Partition,
    pub cells: Vec<CellRate>,
    pub kernel: Kernel,
    pub t_max: f64,
    pub report_window: (f64, f64),
}

impl GlobalRate {
    pub fn evaluate(&self, x: f64, s: f64) -> Result<RateValue> {
        if !(0.0 <= s && s <= self.t_max) {
            return Err(domain(format!("time {s} outside [0, {}]", self.t_max)));
        }
        let (r1, r2) = self.report_window;
        let edge = s < r1 || s > r2;
        let rate = match self.partition.locate(x) {
            Some(k) if self.cells[k].estimate.threshold_passed => {
                let cell = &self.cells[k];
                smooth_at(&cell.estimate.lhat, &self.kernel, cell.bandwidth, self.t_max, s)
            }
            _ => 0.0,
        };
        Ok(RateValue { rate, edge })
    }

    pub fn cell_of(&self, x: f64) -> Option<&CellRate> {
        self.partition.locate(x).map(|k| &self.cells[k])
    }
}

/// Writes `time,rate,flag_edge` rows for a curve.
pub fn write_rate_csv<W: Write>(curve: &SampledCurve, report_window: (f64, f64), mut w: W) -> Result<()> {
    writeln!(w, "time,rate,flag_edge")?;
    for (&t, &v) in curve.grid.iter().zip(&curve.values) {
        let edge = t < report_window.0 || t > report_window.1;
        writeln!(w, "{t},{v},{}", u8::from(edge))?;
    }
    Ok(())
}

/// Estimates the jump rate on every cell, each with its own bandwidth
/// `max(h^{-alpha}, 2 Δgrid)` from its visit count `h`.
#[allow(clippy::too_many_arguments)]
pub fn global_rate(
    traj: &Trajectory,
    p: &Partition,
    spec: &ProcessSpec,
    k: &Kernel,
    alpha: f64,
    t_max: f64,
    report_window: (f64, f64),
    grid_points: usize,
) -> Result<GlobalRate> {
    let (r1, r2) = report_window;
    if !(0.0 < r1 && r1 < r2 && r2 < t_max) {
        return Err(domain(format!(
            "report window needs 0 < r1 < r2 < t_max, got ({r1}, {r2}) with t_max {t_max}"
        )));
    }
    let b_min = 2.0 * t_max / (grid_points.max(2) - 1) as f64;
    let cells = p
        .cells()
        .iter()
        .map(|cell| {
            let estimate = estimate_cell(traj, cell, spec, t_max)?;
            let bandwidth = if estimate.visits == 0 {
                1.0f64.max(b_min)
            } else {
                bandwidth_from_visits(estimate.visits, alpha, b_min)?
            };
            let curve = if estimate.threshold_passed {
                kernel_smooth(&estimate.lhat, k, bandwidth, t_max, grid_points)?
            } else {
                SampledCurve::from_fn(t_max, grid_points, |_| 0.0)?
            };
            Ok(CellRate {
                estimate,
                bandwidth,
                curve,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GlobalRate {
        partition: p.clone(),
        cells,
        kernel: *k,
        t_max,
        report_window,
    })
}
