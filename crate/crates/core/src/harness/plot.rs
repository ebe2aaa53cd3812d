//! Seed aggregation for learning-curve charts.

use crate::error::{Error, Result};

use super::run::CurvePoint;

/// Mean with min/max envelope over seeds on a shared step grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub steps: Vec<f64>,
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub runs: usize,
}

/// Splits points into runs, preserving first-seen order.
pub fn group_runs(points: Vec<CurvePoint>) -> Vec<Vec<CurvePoint>> {
    let mut runs: Vec<Vec<CurvePoint>> = Vec::new();
    for p in points {
        match runs.iter_mut().find(|r| r[0].run_id == p.run_id) {
            Some(r) => r.push(p),
            None => runs.push(vec![p]),
        }
    }
    runs
}

/// Last value at or before `x`.
fn value_at(run: &[CurvePoint], x: f64) -> f64 {
    let i = run.partition_point(|p| p.env_steps as f64 <= x);
    run[i.saturating_sub(1)].leader_reward
}

/// Samples every run as a step function on `points` evenly spaced steps over the
/// range all runs cover.
pub fn aggregate(runs: &[Vec<CurvePoint>], points: usize) -> Result<Band> {
    let runs: Vec<&Vec<CurvePoint>> = runs.iter().filter(|r| !r.is_empty()).collect();
    if runs.is_empty() {
        return Err(Error::Empty("seed set"));
    }
    let lo = runs.iter().map(|r| r[0].env_steps).max().unwrap_or(0) as f64;
    let hi = runs.iter().map(|r| r[r.len() - 1].env_steps).min().unwrap_or(0) as f64;
    let points = points.max(2);
    let mut band = Band {
        steps: Vec::with_capacity(points),
        mean: Vec::with_capacity(points),
        min: Vec::with_capacity(points),
        max: Vec::with_capacity(points),
        runs: runs.len(),
    };
    for k in 0..points {
        let x = if hi > lo {
            lo + (hi - lo) * k as f64 / (points - 1) as f64
        } else {
            lo
        };
        let vals: Vec<f64> = runs.iter().map(|r| value_at(r, x)).collect();
        band.steps.push(x);
        band.mean.push(vals.iter().sum::<f64>() / vals.len() as f64);
        band.min.push(vals.iter().copied().fold(f64::INFINITY, f64::min));
        band.max.push(vals.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    Ok(band)
}
