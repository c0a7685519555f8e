//! Config-driven pipelines behind the command-line tool: trajectory
//! simulation, single-trajectory estimation and the replicated
//! reliability experiment.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counting::StepFunction;
use crate::error::{Error, Result};
use crate::estimate::{confidence_band, global_cumulative};
use crate::metrics::{boxplot_summary, integrated_square_error};
use crate::model::{model_by_name, ProcessSpec};
use crate::partition::{cell_horizon, uniform_partition, Partition};
use crate::simulate::{simulate_chain, Seed, Trajectory};
use crate::smooth::{global_rate, kernel_by_name, write_rate_csv, SampledCurve};

/// Note attached to every confidence band written out.
pub const BAND_NOTE: &str = "asymptotic, unverified assumption";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `machine` or `constant:<c>`.
    pub model: String,
    pub z0: f64,
    pub sample_sizes: Vec<usize>,
    pub replicates: usize,
    pub master_seed: Seed,
    /// Partitioned region; `[center_mark - cell_radius, center_mark + cell_radius]` when absent.
    pub region: Option<(f64, f64)>,
    pub partition_width: f64,
    pub center_mark: f64,
    pub cell_radius: f64,
    pub t_max: f64,
    pub report_window: (f64, f64),
    pub kernel: String,
    pub alpha: f64,
    pub grid_points: usize,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: "machine".into(),
            z0: 30.0,
            sample_sizes: vec![200, 300, 400],
            replicates: 100,
            master_seed: Seed(20_120_501),
            region: None,
            partition_width: 4.0,
            center_mark: 20.0,
            cell_radius: 2.0,
            t_max: 0.9,
            report_window: (0.2, 0.8),
            kernel: "epanechnikov".into(),
            alpha: 0.25,
            grid_points: 512,
            output_dir: PathBuf::from("output"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    /// Every field, with the optional region shown as a comment.
    pub fn to_toml_string(&self) -> String {
        let mut text = toml::to_string(self).expect("config serializes");
        if self.region.is_none() {
            text.push_str(
                "# region = [18.0, 22.0]  (defaults to center_mark -/+ cell_radius)\n",
            );
        }
        text
    }

    pub fn region(&self) -> (f64, f64) {
        self.region
            .unwrap_or((self.center_mark - self.cell_radius, self.center_mark + self.cell_radius))
    }

    pub fn spec(&self) -> Result<ProcessSpec> {
        model_by_name(&self.model)
    }

    pub fn partition(&self, spec: &ProcessSpec) -> Result<Partition> {
        let (low, high) = self.region();
        uniform_partition(spec.state_space(), low, high, self.partition_width)
    }

    /// Checks `0 < r1 < r2 < t_max < min horizon` and the scalar ranges.
    pub fn validate(&self, spec: &ProcessSpec) -> Result<Partition> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.replicates == 0 {
            return bad("replicates must be >= 1".into());
        }
        if self.sample_sizes.is_empty() {
            return bad("sample_sizes is empty".into());
        }
        if self.grid_points < 2 {
            return bad(format!("grid_points must be >= 2, got {}", self.grid_points));
        }
        if !(0.0 < self.alpha && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.cell_radius > 0.0) {
            return bad(format!("cell_radius must be positive, got {}", self.cell_radius));
        }
        kernel_by_name(&self.kernel)?;
        let partition = self.partition(spec)?;
        if partition.locate(self.center_mark).is_none() {
            return bad(format!("center_mark {} outside the region", self.center_mark));
        }
        let (r1, r2) = self.report_window;
        if !(0.0 < r1 && r1 < r2 && r2 < self.t_max) {
            return bad(format!(
                "need 0 < r1 < r2 < t_max, got report_window ({r1}, {r2}) and t_max {}",
                self.t_max
            ));
        }
        let min_horizon = partition
            .cells()
            .iter()
            .map(|c| cell_horizon(spec, c))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if !(self.t_max < min_horizon) {
            return Err(Error::Domain(format!(
                "t_max {} must be below the smallest cell horizon {min_horizon}",
                self.t_max
            )));
        }
        spec.state_space().check(self.z0)?;
        Ok(partition)
    }

    /// Seed of replicate `replicate` at sample size `size`.
    pub fn replicate_seed(&self, size: usize, replicate: usize) -> Seed {
        self.master_seed.derive(size as u64).derive(replicate as u64)
    }
}

/// Estimation output for the cell holding `center_mark`.
#[derive(Debug, Clone)]
pub struct CenterEstimate {
    /// `L̂` of the centre cell, zero when the cell fails the threshold.
    pub lhat: StepFunction,
    /// `Λ̂(center, ·)` on the grid (zero when the cell fails the threshold).
    pub cumulative: SampledCurve,
    pub variance: SampledCurve,
    /// `λ̂(center, ·)` on the grid.
    pub rate: SampledCurve,
    pub visits: usize,
    pub nu_hat: f64,
    pub threshold_passed: bool,
    pub bandwidth: f64,
    pub partition: Partition,
}

/// Runs both estimators on a trajectory and samples the centre cell.
pub fn estimate_center(
    traj: &Trajectory,
    spec: &ProcessSpec,
    config: &ExperimentConfig,
    partition: &Partition,
) -> Result<CenterEstimate> {
    let kernel = kernel_by_name(&config.kernel)?;
    let cumulative = global_cumulative(traj, partition, spec, config.t_max)?;
    let rate = global_rate(
        traj,
        partition,
        spec,
        &kernel,
        config.alpha,
        config.t_max,
        config.report_window,
        config.grid_points,
    )?;
    let x = config.center_mark;
    let cell = cumulative
        .cell_of(x)
        .ok_or_else(|| Error::Config(format!("center_mark {x} outside the region")))?;
    let bandwidth = rate.cell_of(x).map_or(f64::NAN, |c| c.bandwidth);
    let passed = cell.threshold_passed;
    let cum_curve = SampledCurve::from_fn(config.t_max, config.grid_points, |s| {
        cumulative.evaluate(x, s).unwrap_or(0.0)
    })?;
    let var_curve = SampledCurve::from_fn(config.t_max, config.grid_points, |s| {
        if passed {
            cell.variance.value(s)
        } else {
            0.0
        }
    })?;
    let rate_curve = SampledCurve::from_fn(config.t_max, config.grid_points, |s| {
        rate.evaluate(x, s).map_or(0.0, |v| v.rate)
    })?;
    Ok(CenterEstimate {
        lhat: if passed { cell.lhat.clone() } else { StepFunction::zero() },
        cumulative: cum_curve,
        variance: var_curve,
        rate: rate_curve,
        visits: cell.visits,
        nu_hat: cell.nu_hat,
        threshold_passed: passed,
        bandwidth,
        partition: partition.clone(),
    })
}

/// Metrics of one simulated replicate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateOutcome {
    pub sample_size: usize,
    pub replicate: usize,
    /// ISE of `Λ̂(center, ·)` on `[0, r2]`.
    pub ise_cumulative: f64,
    /// ISE of `λ̂(center, ·)` on `[r1, r2]`.
    pub ise_rate: f64,
    /// `Λ̂(center, r2)`.
    pub cumulative_at_r2: f64,
    /// Mean of `|λ̂(center, s) - λ(center, s)|` over grid points in `[r1, r2]`.
    pub rate_mae: f64,
    pub visit_fraction: f64,
    pub threshold_passed: bool,
    pub simulate_seconds: f64,
    pub estimate_seconds: f64,
}

pub fn run_replicate(
    spec: &ProcessSpec,
    config: &ExperimentConfig,
    partition: &Partition,
    sample_size: usize,
    replicate: usize,
) -> Result<ReplicateOutcome> {
    let seed = config.replicate_seed(sample_size, replicate);
    let start = Instant::now();
    let traj = simulate_chain(spec, config.z0, sample_size, seed)?;
    let simulate_seconds = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let est = estimate_center(&traj, spec, config, partition)?;
    let estimate_seconds = start.elapsed().as_secs_f64();

    let x = config.center_mark;
    let (r1, r2) = config.report_window;
    let true_cumulative = |t: f64| spec.cumulative_rate(x, t).unwrap_or(f64::NAN);
    let ise_cumulative = integrated_square_error(&est.cumulative, true_cumulative, (0.0, r2))?;
    let ise_rate = integrated_square_error(&est.rate, |t| spec.jump_rate(x, t), (r1, r2))?;
    let (sum, count) = est
        .rate
        .grid
        .iter()
        .zip(&est.rate.values)
        .filter(|(&t, _)| r1 <= t && t <= r2)
        .fold((0.0, 0usize), |(s, n), (&t, &v)| {
            (s + (v - spec.jump_rate(x, t)).abs(), n + 1)
        });
    Ok(ReplicateOutcome {
        sample_size,
        replicate,
        ise_cumulative,
        ise_rate,
        cumulative_at_r2: est.lhat.value(r2),
        rate_mae: sum / count.max(1) as f64,
        visit_fraction: est.nu_hat,
        threshold_passed: est.threshold_passed,
        simulate_seconds,
        estimate_seconds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRecord {
    pub n: usize,
    pub metric: String,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailedReplicate {
    pub sample_size: usize,
    pub replicate: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Runtimes {
    pub simulate_seconds_mean: f64,
    pub estimate_seconds_mean: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub partition: Vec<[f64; 2]>,
    pub summaries: Vec<SummaryRecord>,
    pub visit_fraction_mean: f64,
    pub failures: Vec<FailedReplicate>,
    pub band_note: String,
    pub runtimes: Runtimes,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    /// Successful replicates ordered by `(sample_size, replicate)`.
    pub replicates: Vec<ReplicateOutcome>,
}

impl ExperimentOutcome {
    pub fn for_size(&self, size: usize) -> impl Iterator<Item = &ReplicateOutcome> {
        self.replicates.iter().filter(move |r| r.sample_size == size)
    }

    pub fn summary(&self, size: usize, metric: &str) -> Option<&SummaryRecord> {
        self.report
            .summaries
            .iter()
            .find(|s| s.n == size && s.metric == metric)
    }

    /// `sample_size,replicate,ise_lambda_cum,ise_lambda`.
    pub fn write_ise_csv<W: Write>(&self, mut w: W, size: Option<usize>) -> Result<()> {
        writeln!(w, "sample_size,replicate,ise_lambda_cum,ise_lambda")?;
        for r in &self.replicates {
            if size.is_none_or(|n| n == r.sample_size) {
                writeln!(
                    w,
                    "{},{},{},{}",
                    r.sample_size, r.replicate, r.ise_cumulative, r.ise_rate
                )?;
            }
        }
        Ok(())
    }
}

pub const METRIC_CUMULATIVE: &str = "ISE_Lambda";
pub const METRIC_RATE: &str = "ISE_lambda";

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Simulates and estimates every `(sample_size, replicate)` pair on `jobs`
/// workers and summarises the errors per sample size.
pub fn run_experiment(config: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutcome> {
    let spec = config.spec()?;
    let partition = config.validate(&spec)?;
    let tasks: Vec<(usize, usize)> = config
        .sample_sizes
        .iter()
        .flat_map(|&n| (0..config.replicates).map(move |r| (n, r)))
        .collect();
    let start = Instant::now();
    let results: Vec<(usize, usize, Result<ReplicateOutcome>)> = pool(jobs)?.install(|| {
        tasks
            .par_iter()
            .map(|&(n, r)| (n, r, run_replicate(&spec, config, &partition, n, r)))
            .collect()
    });
    let wall_seconds = start.elapsed().as_secs_f64();

    let mut replicates = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (sample_size, replicate, result) in results {
        match result {
            Ok(outcome) => replicates.push(outcome),
            Err(e) => {
                warn!("replicate {replicate} at n = {sample_size} failed: {e}");
                failures.push(FailedReplicate {
                    sample_size,
                    replicate,
                    error: e.to_string(),
                });
            }
        }
    }

    let mut summaries = Vec::new();
    for &n in &config.sample_sizes {
        let rows: Vec<&ReplicateOutcome> = replicates.iter().filter(|r| r.sample_size == n).collect();
        if rows.is_empty() {
            continue;
        }
        for (metric, values) in [
            (METRIC_CUMULATIVE, rows.iter().map(|r| r.ise_cumulative).collect::<Vec<_>>()),
            (METRIC_RATE, rows.iter().map(|r| r.ise_rate).collect()),
        ] {
            let s = boxplot_summary(&values)?;
            summaries.push(SummaryRecord {
                n,
                metric: metric.to_string(),
                min: s.min,
                q1: s.q1,
                median: s.median,
                q3: s.q3,
                max: s.max,
            });
        }
    }
    let count = replicates.len().max(1) as f64;
    let mean = |f: fn(&ReplicateOutcome) -> f64| replicates.iter().map(f).sum::<f64>() / count;
    let report = ExperimentReport {
        config: config.clone(),
        partition: partition.cells().iter().map(|c| [c.low(), c.high()]).collect(),
        summaries,
        visit_fraction_mean: mean(|r| r.visit_fraction),
        failures,
        band_note: BAND_NOTE.to_string(),
        runtimes: Runtimes {
            simulate_seconds_mean: mean(|r| r.simulate_seconds),
            estimate_seconds_mean: mean(|r| r.estimate_seconds),
            wall_seconds,
        },
    };
    Ok(ExperimentOutcome { report, replicates })
}

fn create_file(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(fs::File::create(path)?))
}

/// Writes `report.json`, `ise.csv` and one `ise_n<size>.csv` per sample size.
pub fn write_experiment(outcome: &ExperimentOutcome, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let report_path = dir.join("report.json");
    let mut w = create_file(&report_path)?;
    serde_json::to_writer_pretty(&mut w, &outcome.report)?;
    writeln!(w)?;
    w.flush()?;
    written.push(report_path);

    let ise_path = dir.join("ise.csv");
    let mut w = create_file(&ise_path)?;
    outcome.write_ise_csv(&mut w, None)?;
    w.flush()?;
    written.push(ise_path);

    for &n in &outcome.report.config.sample_sizes {
        let path = dir.join(format!("ise_n{n}.csv"));
        let mut w = create_file(&path)?;
        outcome.write_ise_csv(&mut w, Some(n))?;
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}

pub fn trajectory_path(dir: &Path, size: usize, replicate: usize) -> PathBuf {
    dir.join(format!("traj_n{size}_r{replicate}.csv"))
}

/// Writes one trajectory CSV per `(sample_size, replicate)`.
pub fn simulate_to_files(config: &ExperimentConfig, dir: &Path, jobs: usize) -> Result<Vec<PathBuf>> {
    let spec = config.spec()?;
    spec.state_space().check(config.z0)?;
    if config.replicates == 0 {
        return Err(Error::Config("replicates must be >= 1".into()));
    }
    fs::create_dir_all(dir)?;
    let tasks: Vec<(usize, usize)> = config
        .sample_sizes
        .iter()
        .flat_map(|&n| (0..config.replicates).map(move |r| (n, r)))
        .collect();
    pool(jobs)?.install(|| {
        tasks
            .par_iter()
            .map(|&(n, r)| {
                let traj = simulate_chain(&spec, config.z0, n, config.replicate_seed(n, r))?;
                let path = trajectory_path(dir, n, r);
                let mut w = create_file(&path)?;
                traj.write_csv(&mut w)?;
                w.flush()?;
                Ok(path)
            })
            .collect()
    })
}

/// Result of estimating from a trajectory file.
#[derive(Debug, Clone)]
pub struct EstimateFiles {
    pub cumulative_csv: PathBuf,
    pub rate_csv: PathBuf,
    pub partition_json: PathBuf,
    pub warnings: Vec<String>,
}

/// Reads a trajectory, estimates the centre cell and writes
/// `cumulative.csv` (`time,estimate,variance,ci_low,ci_high`, 95% band),
/// `rate.csv` (`time,rate,flag_edge`) and `partition.json`.
pub fn estimate_from_file(config: &ExperimentConfig, trajectory: &Path, dir: &Path) -> Result<EstimateFiles> {
    let spec = config.spec()?;
    let partition = config.validate(&spec)?;
    let traj = Trajectory::read_csv(fs::File::open(trajectory)?)?;
    let est = estimate_center(&traj, &spec, config, &partition)?;

    let mut warnings = Vec::new();
    if !est.threshold_passed {
        let msg = format!(
            "cell of mark {} has empirical mass {:.4} <= n^(-1/2); estimates set to zero",
            config.center_mark, est.nu_hat
        );
        warn!("{msg}");
        warnings.push(msg);
    }

    fs::create_dir_all(dir)?;
    let cumulative_csv = dir.join("cumulative.csv");
    let mut w = create_file(&cumulative_csv)?;
    writeln!(w, "# confidence band: 95% pointwise, {BAND_NOTE}")?;
    writeln!(w, "time,estimate,variance,ci_low,ci_high")?;
    let cell = partition.locate(config.center_mark).expect("validated");
    let ce = crate::estimate::estimate_cell(&traj, &partition.cells()[cell], &spec, config.t_max)?;
    for ((&t, &v), &var) in est
        .cumulative
        .grid
        .iter()
        .zip(&est.cumulative.values)
        .zip(&est.variance.values)
    {
        let (lo, hi) = if est.threshold_passed {
            confidence_band(&ce, t, 0.95)?
        } else {
            (0.0, 0.0)
        };
        writeln!(w, "{t},{v},{var},{lo},{hi}")?;
    }
    w.flush()?;

    let rate_csv = dir.join("rate.csv");
    let mut w = create_file(&rate_csv)?;
    write_rate_csv(&est.rate, config.report_window, &mut w)?;
    w.flush()?;

    let partition_json = dir.join("partition.json");
    fs::write(&partition_json, partition.to_json() + "\n")?;

    Ok(EstimateFiles {
        cumulative_csv,
        rate_csv,
        partition_json,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            sample_sizes: vec![100, 200],
            replicates: 3,
            grid_points: 128,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn default_config_round_trips_through_toml() {
        let c = ExperimentConfig::default();
        let text = c.to_toml_string();
        assert!(text.contains("sample_sizes = [200, 300, 400]"));
        assert!(text.contains("replicates = 100"));
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), c);
    }

    #[test]
    fn default_region_is_cell_around_center() {
        let c = ExperimentConfig::default();
        assert_eq!(c.region(), (18.0, 22.0));
        let p = c.validate(&c.spec().unwrap()).unwrap();
        assert_eq!(p.len(), 1);
        assert!(p.cells()[0].is_closed_right());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml_str("bogus = 1").is_err());
        let c = ExperimentConfig::from_toml_str("replicates = 5\nmodel = \"constant:2\"").unwrap();
        assert_eq!(c.replicates, 5);
        assert_eq!(c.t_max, 0.9);
    }

    #[test]
    fn validation_rules() {
        let spec = ExperimentConfig::default().spec().unwrap();
        let mut c = ExperimentConfig {
            t_max: 1.0,
            ..ExperimentConfig::default()
        };
        assert!(matches!(c.validate(&spec), Err(Error::Domain(_))));
        c.t_max = 0.9;
        c.report_window = (0.2, 0.95);
        assert!(c.validate(&spec).is_err());
        c.report_window = (0.2, 0.8);
        c.replicates = 0;
        assert!(c.validate(&spec).is_err());
        c.replicates = 1;
        c.center_mark = 30.0;
        c.region = Some((18.0, 22.0));
        assert!(c.validate(&spec).is_err());
        c.center_mark = 20.0;
        c.kernel = "gaussian".into();
        assert!(c.validate(&spec).is_err());
    }

    #[test]
    fn experiment_is_deterministic_and_order_free() {
        let c = small();
        let a = run_experiment(&c, 1).unwrap();
        let b = run_experiment(&c, 4).unwrap();
        assert_eq!(a.replicates.len(), 6);
        let strip = |o: &ExperimentOutcome| {
            o.replicates
                .iter()
                .map(|r| (r.sample_size, r.replicate, r.ise_cumulative, r.ise_rate))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a), strip(&b));
        assert_eq!(a.report.summaries, b.report.summaries);
        let mut x = Vec::new();
        let mut y = Vec::new();
        a.write_ise_csv(&mut x, None).unwrap();
        b.write_ise_csv(&mut y, None).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn single_replicate_gives_degenerate_boxplot() {
        let c = ExperimentConfig {
            sample_sizes: vec![150],
            replicates: 1,
            grid_points: 64,
            ..ExperimentConfig::default()
        };
        let o = run_experiment(&c, 1).unwrap();
        for metric in [METRIC_CUMULATIVE, METRIC_RATE] {
            let s = o.summary(150, metric).unwrap();
            assert!(s.min == s.q1 && s.q1 == s.median && s.median == s.q3 && s.q3 == s.max);
        }
    }

    #[test]
    fn failed_replicates_are_reported() {
        // zero jumps cannot be estimated (empirical measure undefined)
        let c = ExperimentConfig {
            sample_sizes: vec![0, 50],
            replicates: 2,
            grid_points: 64,
            ..ExperimentConfig::default()
        };
        let o = run_experiment(&c, 2).unwrap();
        assert_eq!(o.report.failures.len(), 2);
        assert!(o.report.failures.iter().all(|f| f.sample_size == 0));
        assert_eq!(o.replicates.len(), 2);
    }
}
