//! Finite partitions of a compact mark region into half-open cells.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::model::{Censorship, ProcessSpec, StateSpace};

/// Grid size used to approximate the infimum of a censorship function with no
/// known shape.
pub const HORIZON_GRID: usize = 1024;

/// Interval `[low, high)`, or `[low, high]` when `closed_right`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    low: f64,
    high: f64,
    closed_right: bool,
}

impl Cell {
    pub fn new(low: f64, high: f64, closed_right: bool) -> Result<Self> {
        if !(low < high) {
            return Err(domain(format!("cell needs low < high, got [{low}, {high}]")));
        }
        Ok(Self {
            low,
            high,
            closed_right,
        })
    }

    /// The closed interval `[low, high]`.
    pub fn closed(low: f64, high: f64) -> Result<Self> {
        Self::new(low, high, true)
    }

    pub fn low(&self) -> f64 {
        self.low
    }

    pub fn high(&self) -> f64 {
        self.high
    }

    pub fn is_closed_right(&self) -> bool {
        self.closed_right
    }

    pub fn diameter(&self) -> f64 {
        self.high - self.low
    }

    pub fn contains(&self, x: f64) -> bool {
        self.low <= x && (x < self.high || (self.closed_right && x == self.high))
    }

    /// Worst-case gap `t · Lip · diam` between the jump rate integrated at a
    /// point of the cell and its cell average.
    pub fn bias_budget(&self, t: f64, lipschitz: f64) -> f64 {
        t * lipschitz * self.diameter()
    }
}

/// Contiguous cells covering `[region.0, region.1]`; the last cell is closed.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    cells: Vec<Cell>,
    region: (f64, f64),
}

impl Partition {
    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn region(&self) -> (f64, f64) {
        self.region
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Index of the unique cell containing `x`.
    pub fn locate(&self, x: f64) -> Option<usize> {
        let (low, high) = self.region;
        if !(low <= x && x <= high) {
            return None;
        }
        // first cell whose right end lies beyond x
        let idx = self.cells.partition_point(|c| c.high <= x);
        let idx = idx.min(self.cells.len() - 1);
        self.cells[idx].contains(x).then_some(idx)
    }

    /// Cell bounds as `[[low, high], ...]`.
    pub fn to_json(&self) -> String {
        let pairs: Vec<[f64; 2]> = self.cells.iter().map(|c| [c.low, c.high]).collect();
        serde_json::to_string(&pairs).expect("finite pairs serialize")
    }
}

/// Splits `[low, high]` into cells of diameter `width`, the last one possibly
/// narrower. The region must stay at positive distance from the boundary of
/// the state space.
pub fn uniform_partition(space: &StateSpace, low: f64, high: f64, width: f64) -> Result<Partition> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(domain(format!("cell width must be positive, got {width}")));
    }
    if !(low < high) {
        return Err(domain(format!("region needs low < high, got [{low}, {high}]")));
    }
    if !(space.lower() < low && high < space.upper()) {
        return Err(domain(format!(
            "region [{low}, {high}] must lie strictly inside the state space ({}, {})",
            space.lower(),
            space.upper()
        )));
    }
    let ratio = (high - low) / width;
    let count = ((ratio - 1e-9).ceil() as usize).max(1);
    let mut cells = Vec::with_capacity(count);
    for k in 0..count {
        let a = low + k as f64 * width;
        let last = k + 1 == count;
        let b = if last { high } else { low + (k + 1) as f64 * width };
        cells.push(Cell::new(a, b, last)?);
    }
    Ok(Partition {
        cells,
        region: (low, high),
    })
}

/// `t*(A) = inf over the cell of the censorship time`.
pub fn cell_horizon(spec: &ProcessSpec, cell: &Cell) -> Result<f64> {
    let space = spec.state_space();
    if !(space.contains(cell.low) && space.contains(cell.high)) {
        return Err(domain(format!(
            "cell [{}, {}] not inside the state space",
            cell.low, cell.high
        )));
    }
    let horizon = match spec.censorship_shape() {
        Censorship::Constant(c) => *c,
        Censorship::Increasing(f) => f(cell.low),
        Censorship::Decreasing(f) => f(cell.high),
        Censorship::General(f) => (0..HORIZON_GRID)
            .map(|i| {
                let x = cell.low + cell.diameter() * i as f64 / (HORIZON_GRID - 1) as f64;
                f(x)
            })
            .fold(f64::INFINITY, f64::min),
    };
    if !(horizon > 0.0) {
        return Err(domain(format!(
            "censorship horizon of cell [{}, {}] is {horizon}, expected > 0",
            cell.low, cell.high
        )));
    }
    Ok(horizon)
}
