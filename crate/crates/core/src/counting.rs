//! Counting and at-risk processes of a cell.

use std::io::Write;

use crate::error::{domain, Result};
use crate::partition::Cell;
use crate::simulate::Trajectory;

/// Right-continuous pure-jump function: `origin` plus the increments whose
/// times are `<= t`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    times: Vec<f64>,
    increments: Vec<f64>,
    origin: f64,
    levels: Vec<f64>,
}

impl StepFunction {
    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn constant(origin: f64) -> Self {
        Self {
            times: Vec::new(),
            increments: Vec::new(),
            origin,
            levels: Vec::new(),
        }
    }

    /// Builds from unsorted `(time, increment)` pairs. Times closer than
    /// `tie_tol` to the previous distinct time are merged into it.
    pub fn from_jumps<I>(origin: f64, jumps: I, tie_tol: f64) -> Self
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let mut jumps: Vec<(f64, f64)> = jumps.into_iter().collect();
        jumps.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut times: Vec<f64> = Vec::with_capacity(jumps.len());
        let mut increments: Vec<f64> = Vec::with_capacity(jumps.len());
        for (t, d) in jumps {
            match times.last() {
                Some(&last) if t - last <= tie_tol => {
                    *increments.last_mut().expect("paired with times") += d;
                }
                _ => {
                    times.push(t);
                    increments.push(d);
                }
            }
        }
        Self::from_sorted(origin, times, increments)
    }

    fn from_sorted(origin: f64, times: Vec<f64>, increments: Vec<f64>) -> Self {
        let levels = increments
            .iter()
            .scan(origin, |acc, d| {
                *acc += d;
                Some(*acc)
            })
            .collect();
        Self {
            times,
            increments,
            origin,
            levels,
        }
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn jumps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.increments.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Value at `t`, jumps at `t` included.
    pub fn value(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&s| s <= t);
        self.level_before(idx)
    }

    /// Limit from the left at `t`, jumps at `t` excluded.
    pub fn left_limit(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&s| s < t);
        self.level_before(idx)
    }

    fn level_before(&self, idx: usize) -> f64 {
        if idx == 0 {
            self.origin
        } else {
            self.levels[idx - 1]
        }
    }

    pub fn final_value(&self) -> f64 {
        self.levels.last().copied().unwrap_or(self.origin)
    }

    /// Drops the jumps located after `t_max`.
    pub fn truncated(&self, t_max: f64) -> Self {
        let keep = self.times.partition_point(|&s| s <= t_max);
        Self {
            times: self.times[..keep].to_vec(),
            increments: self.increments[..keep].to_vec(),
            origin: self.origin,
            levels: self.levels[..keep].to_vec(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_sorted(
            self.origin * factor,
            self.times.clone(),
            self.increments.iter().map(|d| d * factor).collect(),
        )
    }

    /// Pointwise sum; coinciding jump times are merged.
    pub fn sum(&self, other: &Self) -> Self {
        Self::from_jumps(
            self.origin + other.origin,
            self.jumps().chain(other.jumps()),
            0.0,
        )
    }

    /// Writes `time,value` rows: the value at 0 and then the value at each
    /// positive jump time, after a comment line stating the convention.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(
            writer,
            "# right-continuous step function: value(t) includes the jump at t"
        )?;
        writeln!(writer, "time,value")?;
        writeln!(writer, "0,{}", self.value(0.0))?;
        for (t, v) in self.times.iter().zip(&self.levels) {
            if *t > 0.0 {
                writeln!(writer, "{t},{v}")?;
            }
        }
        Ok(())
    }
}

/// At-risk count `Y(t) = #{S >= t}`; an observation with `S = t` is still
/// at risk at `t`, so evaluation uses left limits of the stored step path.
#[derive(Debug, Clone, PartialEq)]
pub struct AtRisk(StepFunction);

impl AtRisk {
    pub fn at(&self, t: f64) -> f64 {
        self.0.left_limit(t)
    }

    /// Underlying path: origin = visits, `-1` per sojourn at its own time.
    pub fn path(&self) -> &StepFunction {
        &self.0
    }
}

/// Sojourns started from marks inside a cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellData {
    /// Number of sojourns in the whole trajectory.
    pub n_total: usize,
    /// `(S_{i+1}, censored)` for each `i` with `Z_i` in the cell.
    pub sojourns: Vec<(f64, bool)>,
    /// Censorship horizon of the cell; `+inf` until set.
    pub horizon: f64,
}

impl CellData {
    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    /// Visit count of the cell.
    pub fn visits(&self) -> usize {
        self.sojourns.len()
    }

    pub fn events(&self) -> impl Iterator<Item = f64> + '_ {
        self.sojourns.iter().filter(|(_, c)| !c).map(|&(s, _)| s)
    }

    /// Refuses times at or beyond the horizon, where censored sojourns would
    /// start to be counted as events.
    pub fn check_window(&self, t: f64) -> Result<()> {
        if t < self.horizon {
            Ok(())
        } else {
            Err(domain(format!(
                "time {t} is not below the cell horizon {}",
                self.horizon
            )))
        }
    }
}

pub fn cell_events(traj: &Trajectory, cell: &Cell) -> CellData {
    CellData {
        n_total: traj.len(),
        sojourns: traj
            .steps()
            .filter(|(z, _, _)| cell.contains(*z))
            .map(|(_, s, c)| (s, c))
            .collect(),
        horizon: f64::INFINITY,
    }
}

/// `Y(A, t)`, censored sojourns included.
pub fn risk_function(cd: &CellData) -> AtRisk {
    AtRisk(StepFunction::from_jumps(
        cd.visits() as f64,
        cd.sojourns.iter().map(|&(s, _)| (s, -1.0)),
        0.0,
    ))
}

/// `N(A, t) = #{S <= t}` over every retained sojourn, ties aggregated.
pub fn count_function(cd: &CellData) -> StepFunction {
    StepFunction::from_jumps(0.0, cd.sojourns.iter().map(|&(s, _)| (s, 1.0)), 0.0)
}

/// `1/y`, or 0 for an empty risk set.
pub fn generalized_inverse(y: u64) -> f64 {
    if y == 0 {
        0.0
    } else {
        1.0 / y as f64
    }
}

/// Fraction of `Z_0..Z_{n-1}` lying in the cell.
pub fn empirical_measure(traj: &Trajectory, cell: &Cell) -> Result<f64> {
    if traj.is_empty() {
        return Err(domain("empirical measure needs at least one sojourn"));
    }
    let hits = traj.marks()[..traj.len()]
        .iter()
        .filter(|&&z| cell.contains(z))
        .count();
    Ok(hits as f64 / traj.len() as f64)
}
