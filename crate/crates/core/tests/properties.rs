//! Long-run statistical properties of the machine model.

use mrp_core::counting::{cell_events, risk_function};
use mrp_core::estimate::estimate_cell;
use mrp_core::metrics::{cell_average_rate, oracle_marks};
use mrp_core::model::machine_model;
use mrp_core::partition::Cell;
use mrp_core::simulate::{simulate_chain, Seed};

fn cell() -> Cell {
    Cell::closed(18.0, 22.0).unwrap()
}

#[test]
fn at_risk_fraction_stabilizes() {
    let spec = machine_model();
    let short = simulate_chain(&spec, 30.0, 100_000, Seed(41)).unwrap();
    let long = simulate_chain(&spec, 30.0, 200_000, Seed(42)).unwrap();
    let ys = risk_function(&cell_events(&short, &cell()));
    let yl = risk_function(&cell_events(&long, &cell()));
    for t in [0.2, 0.5, 0.8] {
        let a = ys.at(t) / 100_000.0;
        let b = yl.at(t) / 200_000.0;
        assert!((a - b).abs() < 0.01, "t = {t}: {a} vs {b}");
    }
}

#[test]
fn converged_estimate_within_diameter_envelope() {
    // jump rate at mark 20 integrates to 4s; a cell of diameter 4 with
    // Lipschitz constant 0.05 can shift the average by at most 0.2s
    let spec = machine_model();
    let traj = simulate_chain(&spec, 30.0, 100_000, Seed(43)).unwrap();
    let ce = estimate_cell(&traj, &cell(), &spec, 0.9).unwrap();
    for s in [0.2, 0.5, 0.8] {
        let noise = 3.0 * ce.variance_at(s).unwrap().sqrt();
        let err = (ce.value(s).unwrap() - 4.0 * s).abs();
        assert!(err <= 0.2 * s + noise, "s = {s}: error {err}, envelope {}", 0.2 * s + noise);
    }
}

/// Delete-one-block jackknife standard error of the cell-averaged rate.
fn jackknife_se(marks: &[f64], t: f64, blocks: usize) -> f64 {
    let spec = machine_model();
    let size = marks.len() / blocks;
    let estimates: Vec<f64> = (0..blocks)
        .map(|b| {
            let kept: Vec<f64> = marks[..b * size]
                .iter()
                .chain(&marks[(b + 1) * size..])
                .copied()
                .collect();
            cell_average_rate(&spec, &kept, t).unwrap()
        })
        .collect();
    let mean = estimates.iter().sum::<f64>() / blocks as f64;
    let ss: f64 = estimates.iter().map(|e| (e - mean).powi(2)).sum();
    ((blocks - 1) as f64 / blocks as f64 * ss).sqrt()
}

#[test]
fn oracle_agrees_across_seeds() {
    let spec = machine_model();
    let t = 0.5;
    let a = oracle_marks(&spec, &cell(), 1000, 100_000, Seed(44)).unwrap();
    let b = oracle_marks(&spec, &cell(), 1000, 100_000, Seed(45)).unwrap();
    let (la, lb) = (
        cell_average_rate(&spec, &a, t).unwrap(),
        cell_average_rate(&spec, &b, t).unwrap(),
    );
    let se = jackknife_se(&a, t, 20).hypot(jackknife_se(&b, t, 20));
    assert!(se > 0.0);
    assert!((la - lb).abs() <= 2.0 * se, "{la} vs {lb}, se {se}");
}
