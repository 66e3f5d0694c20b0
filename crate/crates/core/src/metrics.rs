//! Scalar measurements over recorded runs.
//!
//! Naming: `eval_length` is the number of simulated time steps in one
//! evaluation; `temperature` is the per-step mean robot displacement. The two
//! share the symbol `T` in the usual notation.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::grid::{torus_distance, Pose, SensorReading};

/// Prediction accuracy: the fraction of predicted sensor bits that match the
/// sensed bits, over all robots, steps and sensors.
pub fn fitness(predictions: &[SensorReading], sensors: &[SensorReading]) -> Result<f64> {
    if predictions.len() != sensors.len() {
        return Err(Error::DimensionMismatch {
            what: "prediction/sensor records",
            expected: sensors.len(),
            found: predictions.len(),
        });
    }
    let mut correct = 0u64;
    let mut total = 0u64;
    for (p, s) in predictions.iter().zip(sensors) {
        if p.len() != s.len() {
            return Err(Error::DimensionMismatch {
                what: "sensors per reading",
                expected: s.len(),
                found: p.len(),
            });
        }
        correct += u64::from(p.matches(*s));
        total += s.len() as u64;
    }
    if total == 0 {
        return Err(Error::InvalidConfig("fitness over an empty record".into()));
    }
    Ok(correct as f64 / total as f64)
}

/// Sum of the mean wrapped x and y displacement between two consecutive
/// configurations of the same robots (matched by index).
pub fn temperature(before: &[Pose], after: &[Pose], width: usize, height: usize) -> Result<f64> {
    if before.len() != after.len() {
        return Err(Error::DimensionMismatch {
            what: "robots in consecutive configurations",
            expected: before.len(),
            found: after.len(),
        });
    }
    if before.is_empty() {
        return Ok(0.0);
    }
    let (dx, dy) = before.iter().zip(after).fold((0usize, 0usize), |(sx, sy), (a, b)| {
        (
            sx + torus_distance(a.x, b.x, width),
            sy + torus_distance(a.y, b.y, height),
        )
    });
    let n = before.len() as f64;
    Ok(dx as f64 / n + dy as f64 / n)
}

/// Length of the trailing window for movement metrics: half the grid area,
/// rounded up (113 on 15x15, 200 on 20x20).
pub fn tail_window(width: usize, height: usize) -> usize {
    (width * height).div_ceil(2)
}

/// Robot movement: mean temperature over the last `tau` steps.
pub fn movement(temperatures: &[f64], tau: usize) -> Result<f64> {
    if tau == 0 || temperatures.len() < tau {
        return Err(Error::DimensionMismatch {
            what: "temperature series shorter than window",
            expected: tau,
            found: temperatures.len(),
        });
    }
    let tail = &temperatures[temperatures.len() - tau..];
    Ok(tail.iter().sum::<f64>() / tau as f64)
}

/// Intended movement: the fraction of forward-move decisions over the last
/// `tau` steps. `actions[t][n]` is robot `n`'s action value at step `t`.
pub fn intended_movement(actions: &[Vec<bool>], tau: usize) -> Result<f64> {
    if tau == 0 || actions.len() < tau {
        return Err(Error::DimensionMismatch {
            what: "action log shorter than window",
            expected: tau,
            found: actions.len(),
        });
    }
    let tail = &actions[actions.len() - tau..];
    let (forward, total) = tail.iter().fold((0usize, 0usize), |(f, t), step| {
        (f + step.iter().filter(|&&a| a).count(), t + step.len())
    });
    if total == 0 {
        return Ok(0.0);
    }
    Ok(forward as f64 / total as f64)
}

/// Fraction of poses in `after` that also occur in `before`, normalized by
/// `swarm_size`. With `compare_headings` off only cells are compared.
pub fn similarity(after: &[Pose], before: &[Pose], swarm_size: usize, compare_headings: bool) -> f64 {
    if swarm_size == 0 {
        return 0.0;
    }
    let matched = if compare_headings {
        let reference: HashSet<&Pose> = before.iter().collect();
        after.iter().filter(|p| reference.contains(p)).count()
    } else {
        let reference: HashSet<(usize, usize)> = before.iter().map(Pose::cell).collect();
        after.iter().filter(|p| reference.contains(&p.cell())).count()
    };
    matched as f64 / swarm_size as f64
}
