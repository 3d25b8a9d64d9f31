use crate::error::{Error, Result};

/// Partition of `[0, T]`. After jump insertion every jump time is a grid
/// point appearing exactly once, so jumps are handled event-driven rather
/// than binned into steps.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    pub horizon: f64,
    /// Strictly increasing, `points[0] = 0`, `points[last] = horizon`.
    pub points: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(horizon: f64, n_steps: usize) -> Result<Self> {
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(Error::config(format!("horizon must be positive and finite, got {horizon}")));
        }
        if n_steps == 0 {
            return Err(Error::config("n_steps must be positive"));
        }
        let mut points: Vec<f64> = (0..=n_steps)
            .map(|k| horizon * k as f64 / n_steps as f64)
            .collect();
        points[n_steps] = horizon;
        Ok(TimeGrid { horizon, points })
    }

    /// Merge jump times into the grid. Times outside `(0, T]` are rejected;
    /// a time already on the grid is not duplicated.
    pub fn with_jump_times(&self, times: &[f64]) -> Result<Self> {
        let mut points = self.points.clone();
        for &tau in times {
            if !(tau > 0.0 && tau <= self.horizon) {
                return Err(Error::domain(format!("jump time {tau} outside (0, {}]", self.horizon)));
            }
            if let Err(pos) = points.binary_search_by(|p| p.partial_cmp(&tau).unwrap()) {
                points.insert(pos, tau);
            }
        }
        Ok(TimeGrid { horizon: self.horizon, points })
    }

    pub fn n_steps(&self) -> usize {
        self.points.len() - 1
    }

    pub fn step(&self, k: usize) -> f64 {
        self.points[k + 1] - self.points[k]
    }

    /// Exact grid index of `t`, or a domain error when `t` is off-grid.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        self.points
            .binary_search_by(|p| p.partial_cmp(&t).unwrap())
            .map_err(|_| Error::domain(format!("t={t} is not a grid point")))
    }

    /// True when every point of `coarse` appears in `self`.
    pub fn refines(&self, coarse: &TimeGrid) -> bool {
        coarse.points.iter().all(|&p| {
            self.points
                .binary_search_by(|q| q.partial_cmp(&p).unwrap())
                .is_ok()
        })
    }
}
