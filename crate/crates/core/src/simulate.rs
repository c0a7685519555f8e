//! Simulation of the embedded chain `(Z_n, S_{n+1})`.
//!
//! Sojourns are drawn by inverting the cumulative rate; a sojourn that would
//! outlast the censorship time of its mark is set to exactly that time and
//! flagged as censored.

use std::io::{Read, Write};

use rand::distr::Open01;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, numeric, Error, Result};
use crate::model::ProcessSpec;

/// Time tolerance of the bisection used when no closed-form inverse exists.
pub const BISECTION_TOL: f64 = 1e-10;

const MAX_BRACKET_DOUBLINGS: u32 = 200;

/// Master seed of a simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

impl Seed {
    /// Child seed for stream `index`, mixed through splitmix64.
    pub fn derive(self, index: u64) -> Seed {
        let mut z = self
            .0
            .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        Seed(z ^ (z >> 31))
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

/// One observed path of the embedded chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    marks: Vec<f64>,
    sojourns: Vec<f64>,
    censored: Vec<bool>,
}

impl Trajectory {
    /// Checks the length relations; marks and sojourns are otherwise taken as given.
    pub fn new(marks: Vec<f64>, sojourns: Vec<f64>, censored: Vec<bool>) -> Result<Self> {
        if marks.len() != sojourns.len() + 1 || censored.len() != sojourns.len() {
            return Err(domain(format!(
                "trajectory needs n+1 marks and n sojourns/flags, got {} marks, {} sojourns, {} flags",
                marks.len(),
                sojourns.len(),
                censored.len()
            )));
        }
        if let Some(s) = sojourns.iter().find(|s| !(**s >= 0.0)) {
            return Err(domain(format!("sojourn {s} is negative or NaN")));
        }
        Ok(Self {
            marks,
            sojourns,
            censored,
        })
    }

    /// `Z_0..Z_n`.
    pub fn marks(&self) -> &[f64] {
        &self.marks
    }

    /// `S_1..S_n`; `sojourns()[i]` is the time spent in `marks()[i]`.
    pub fn sojourns(&self) -> &[f64] {
        &self.sojourns
    }

    pub fn censored(&self) -> &[bool] {
        &self.censored
    }

    /// Number of jumps `n`.
    pub fn len(&self) -> usize {
        self.sojourns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sojourns.is_empty()
    }

    /// `(Z_i, S_{i+1}, censored)` for `i` in `0..n`.
    pub fn steps(&self) -> impl Iterator<Item = (f64, f64, bool)> + '_ {
        self.marks
            .iter()
            .zip(&self.sojourns)
            .zip(&self.censored)
            .map(|((&z, &s), &c)| (z, s, c))
    }

    /// Writes `index,mark,sojourn,censored`. Row 0 carries `Z_0` with empty
    /// sojourn and flag; row `i >= 1` carries `Z_i` together with `S_i`, the
    /// sojourn spent in `Z_{i-1}`, and its censor flag. Reals are written with
    /// 17 significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["index", "mark", "sojourn", "censored"])?;
        for (i, &z) in self.marks.iter().enumerate() {
            let mark = format!("{z:.16e}");
            if i == 0 {
                w.write_record(["0", mark.as_str(), "", ""])?;
            } else {
                let sojourn = format!("{:.16e}", self.sojourns[i - 1]);
                let flag = if self.censored[i - 1] { "1" } else { "0" };
                w.write_record([i.to_string().as_str(), mark.as_str(), sojourn.as_str(), flag])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Parses the format written by [`Trajectory::write_csv`].
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = r.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["index", "mark", "sojourn", "censored"] {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header index,mark,sojourn,censored, got {header:?}"),
            });
        }
        let mut marks = Vec::new();
        let mut sojourns = Vec::new();
        let mut censored = Vec::new();
        for (row, record) in r.records().enumerate() {
            let record = record?;
            let line = record.position().map_or(row as u64 + 2, |p| p.line());
            let parse_err = |message: String| Error::Parse { line, message };
            if record.len() != 4 {
                return Err(parse_err(format!("expected 4 fields, got {}", record.len())));
            }
            let index: usize = record[0]
                .parse()
                .map_err(|_| parse_err(format!("bad index '{}'", &record[0])))?;
            if index != row {
                return Err(parse_err(format!("expected index {row}, got {index}")));
            }
            let mark: f64 = record[1]
                .parse()
                .map_err(|_| parse_err(format!("bad mark '{}'", &record[1])))?;
            marks.push(mark);
            if row == 0 {
                if !record[2].is_empty() || !record[3].is_empty() {
                    return Err(parse_err("row 0 must have empty sojourn and flag".into()));
                }
                continue;
            }
            let s: f64 = record[2]
                .parse()
                .map_err(|_| parse_err(format!("bad sojourn '{}'", &record[2])))?;
            let c = match &record[3] {
                "0" | "false" => false,
                "1" | "true" => true,
                other => return Err(parse_err(format!("bad censor flag '{other}'"))),
            };
            sojourns.push(s);
            censored.push(c);
        }
        if marks.is_empty() {
            return Err(Error::Parse {
                line: 2,
                message: "trajectory has no rows".into(),
            });
        }
        Trajectory::new(marks, sojourns, censored)
    }
}

/// Sojourn with uniform `u`: the solution `s` of `Λ(z, s) = -ln u`, or the
/// censorship time `t*(z)` with the flag set when `s >= t*(z)`.
pub fn sample_sojourn(spec: &ProcessSpec, z: f64, u: f64) -> Result<(f64, bool)> {
    spec.state_space().check(z)?;
    if !(0.0 < u && u < 1.0) {
        return Err(domain(format!("uniform draw must lie in (0, 1), got {u}")));
    }
    let level = -u.ln();
    let horizon = spec.censorship(z);
    if let Some(inverse) = spec.cumulative_inverse() {
        let s = inverse(z, level);
        if s.is_nan() || s < 0.0 {
            return Err(numeric(format!("cumulative-rate inverse returned {s} at mark {z}")));
        }
        return Ok(if s < horizon { (s, false) } else { (horizon, true) });
    }
    let upper = if horizon.is_finite() {
        if spec.cumulative_rate(z, horizon)? <= level {
            return Ok((horizon, true));
        }
        horizon
    } else {
        let mut hi: f64 = 1.0;
        let mut doublings = 0;
        while spec.cumulative_rate(z, hi)? < level {
            hi *= 2.0;
            doublings += 1;
            if doublings > MAX_BRACKET_DOUBLINGS {
                return Err(numeric(format!(
                    "no bracket for the sojourn at mark {z}: cumulative rate stays below {level}"
                )));
            }
        }
        hi
    };
    let (mut lo, mut hi) = (0.0, upper);
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if spec.cumulative_rate(z, mid)? < level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = 0.5 * (lo + hi);
    Ok(if s < horizon { (s, false) } else { (horizon, true) })
}

/// One draw from the transition kernel at `z`.
pub fn sample_transition(spec: &ProcessSpec, z: f64, rng: &mut dyn RngCore) -> Result<f64> {
    spec.state_space().check(z)?;
    let y = spec.draw_transition(z, rng)?;
    if !spec.state_space().contains(y) {
        return Err(numeric(format!("kernel at {z} produced {y} outside the state space")));
    }
    Ok(y)
}

/// Simulates `n_jumps` sojourn/transition pairs from `z0`.
pub fn simulate_chain(spec: &ProcessSpec, z0: f64, n_jumps: usize, seed: Seed) -> Result<Trajectory> {
    spec.state_space().check(z0)?;
    let mut rng = seed.rng();
    let mut marks = Vec::with_capacity(n_jumps + 1);
    let mut sojourns = Vec::with_capacity(n_jumps);
    let mut censored = Vec::with_capacity(n_jumps);
    let mut z = z0;
    marks.push(z);
    for _ in 0..n_jumps {
        let u: f64 = rng.sample(Open01);
        let (s, c) = sample_sojourn(spec, z, u)?;
        sojourns.push(s);
        censored.push(c);
        z = sample_transition(spec, z, &mut rng)?;
        marks.push(z);
    }
    Ok(Trajectory {
        marks,
        sojourns,
        censored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{constant_model, identity_kernel, machine_model, Censorship, StateSpace};
    use std::sync::Arc;

    fn unit_rate_horizon_two(closed_form: bool) -> ProcessSpec {
        let spec = ProcessSpec::new(
            "unit",
            StateSpace::new(0.0, 1.0).unwrap(),
            Arc::new(|_, _| 1.0),
            identity_kernel(),
            Censorship::Constant(2.0),
        );
        if closed_form {
            spec.with_cumulative(Arc::new(|_, t| t))
                .with_cumulative_inverse(Arc::new(|_, l| l))
        } else {
            spec
        }
    }

    #[test]
    fn sojourn_examples() {
        for closed in [true, false] {
            let spec = unit_rate_horizon_two(closed);
            let (s, c) = sample_sojourn(&spec, 0.5, (-1.0f64).exp()).unwrap();
            assert!((s - 1.0).abs() < 1e-9, "{closed}: {s}");
            assert!(!c);
            let (s, c) = sample_sojourn(&spec, 0.5, (-3.0f64).exp()).unwrap();
            assert_eq!(s, 2.0);
            assert!(c);
        }
        let (s, c) = sample_sojourn(&machine_model(), 20.0, 0.5).unwrap();
        assert!((s - 2f64.ln() / 4.0).abs() < 1e-15);
        assert!((s - 0.17329).abs() < 1e-5);
        assert!(!c);
    }

    #[test]
    fn sojourn_bisection_on_time_varying_rate() {
        // Λ(t) = t², so the solution of Λ = -ln u is sqrt(-ln u)
        let spec = ProcessSpec::new(
            "linear",
            StateSpace::new(0.0, 1.0).unwrap(),
            Arc::new(|_, t| 2.0 * t),
            identity_kernel(),
            Censorship::Constant(f64::INFINITY),
        );
        let (s, c) = sample_sojourn(&spec, 0.5, 0.01).unwrap();
        assert!((s - (-(0.01f64).ln()).sqrt()).abs() < 1e-9);
        assert!(!c);
    }

    #[test]
    fn sojourn_without_bracket_fails() {
        let spec = ProcessSpec::new(
            "dead",
            StateSpace::new(0.0, 1.0).unwrap(),
            Arc::new(|_, _| 0.0),
            identity_kernel(),
            Censorship::Constant(f64::INFINITY),
        );
        assert!(matches!(sample_sojourn(&spec, 0.5, 0.5), Err(Error::Numeric(_))));
        // with a finite horizon the zero rate just gives the atom
        let zero = constant_model(0.0).unwrap();
        assert_eq!(sample_sojourn(&zero, 5.0, 0.5).unwrap(), (1.0, true));
    }

    #[test]
    fn sojourn_rejects_bad_uniform() {
        let m = machine_model();
        assert!(sample_sojourn(&m, 20.0, 0.0).is_err());
        assert!(sample_sojourn(&m, 20.0, 1.0).is_err());
        assert!(sample_sojourn(&m, 70.0, 0.5).is_err());
    }

    #[test]
    fn transition_std_near_twenty() {
        let m = machine_model();
        let mut rng = Seed(11).rng();
        let draws: Vec<f64> = (0..100_000)
            .map(|_| sample_transition(&m, 20.0, &mut rng).unwrap())
            .collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        assert!((var.sqrt() - 0.5).abs() < 0.01, "std {}", var.sqrt());
        assert!((mean - 20.0).abs() < 0.01);
    }

    #[test]
    fn identity_transition() {
        let spec = unit_rate_horizon_two(true);
        let mut rng = Seed(3).rng();
        assert_eq!(sample_transition(&spec, 0.25, &mut rng).unwrap(), 0.25);
    }

    #[test]
    fn empty_chain() {
        let t = simulate_chain(&machine_model(), 30.0, 0, Seed(1)).unwrap();
        assert_eq!(t.marks(), &[30.0]);
        assert!(t.sojourns().is_empty());
        assert!(t.censored().is_empty());
    }

    #[test]
    fn chain_is_deterministic() {
        let m = machine_model();
        let a = simulate_chain(&m, 30.0, 500, Seed(99)).unwrap();
        let b = simulate_chain(&m, 30.0, 500, Seed(99)).unwrap();
        assert_eq!(a, b);
        let c = simulate_chain(&m, 30.0, 500, Seed(100)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn chain_invariants() {
        let m = machine_model();
        let t = simulate_chain(&m, 30.0, 2000, Seed(5)).unwrap();
        assert_eq!(t.marks().len(), 2001);
        for (z, s, c) in t.steps() {
            assert!(m.state_space().contains(z));
            assert!(s > 0.0 && s <= m.censorship(z));
            assert_eq!(c, s == m.censorship(z));
        }
    }

    #[test]
    fn visit_fraction_near_reference() {
        let m = machine_model();
        let mut total = 0.0;
        let reps = 50;
        for r in 0..reps {
            let t = simulate_chain(&m, 30.0, 400, Seed(2024).derive(r)).unwrap();
            let visits = t.marks()[..400]
                .iter()
                .filter(|&&z| (18.0..=22.0).contains(&z))
                .count();
            total += visits as f64 / 400.0;
        }
        let mean = total / reps as f64;
        assert!((mean - 0.735).abs() < 0.04, "mean visit fraction {mean}");
    }

    #[test]
    fn derived_seeds_differ() {
        let s = Seed(42);
        let children: Vec<u64> = (0..1000).map(|i| s.derive(i).0).collect();
        let mut sorted = children.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), children.len());
        assert_eq!(s.derive(7), Seed(42).derive(7));
    }

    #[test]
    fn csv_layout_and_round_trip() {
        let t = simulate_chain(&machine_model(), 30.0, 25, Seed(8)).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "index,mark,sojourn,censored");
        assert_eq!(lines.len(), 27);
        assert!(lines[1].starts_with("0,3.0000000000000000e1,,"));
        let back = Trajectory::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn csv_parse_errors_carry_line() {
        let bad = "index,mark,sojourn,censored\n0,30,,\n1,20,oops,0\n";
        match Trajectory::read_csv(bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let bad_header = "i,m\n0,30\n";
        assert!(matches!(
            Trajectory::read_csv(bad_header.as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn trajectory_length_check() {
        assert!(Trajectory::new(vec![1.0], vec![0.5], vec![false]).is_err());
        assert!(Trajectory::new(vec![1.0, 2.0], vec![0.5], vec![false]).is_ok());
    }
}
