use crate::error::{Error, Result};
use crate::measure::{heat_evolve, GridMeasure};

/// Time grid `t_0 < t_1 < … < t_N`; stage `q` runs over `[t_q, t_{q+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    times: Vec<f64>,
}

impl Partition {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidPartition("no times".into()));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidPartition("non-finite time".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidPartition("times must be strictly increasing".into()));
        }
        Ok(Self { times })
    }

    /// `n_steps` equal stages over `[start, end]`.
    pub fn uniform(start: f64, end: f64, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::InvalidPartition("at least one stage required".into()));
        }
        let dt = (end - start) / n_steps as f64;
        let mut times: Vec<f64> = (0..=n_steps).map(|q| start + q as f64 * dt).collect();
        times[n_steps] = end;
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, q: usize) -> f64 {
        self.times[q]
    }

    /// Number of stages `N`.
    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn step(&self, q: usize) -> f64 {
        self.times[q + 1] - self.times[q]
    }

    pub fn mesh(&self) -> f64 {
        self.times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// Index of a partition time, matched within 1e-12.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|s| (s - t).abs() <= 1e-12 * (1.0 + t.abs()))
    }

    /// Stage containing `t`, with `t_N` assigned to the last stage.
    pub fn stage_of(&self, t: f64) -> usize {
        let k = self.times.partition_point(|&s| s <= t);
        k.clamp(1, self.n_steps().max(1)) - 1
    }

    /// Heat flow from `t_from` to `t_to`, one partition step at a time.
    pub fn flow(&self, m: &GridMeasure, from: usize, to: usize) -> Result<GridMeasure> {
        if to < from {
            return Err(Error::BackwardTime {
                t: self.times[from],
                s: self.times[to],
            });
        }
        let mut cur = m.clone();
        for q in from..to {
            cur = heat_evolve(&cur, self.times[q], self.times[q + 1])?;
        }
        Ok(cur)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction() {
        assert!(Partition::new(vec![]).is_err());
        assert!(Partition::new(vec![0.0, 0.5, 0.5]).is_err());
        let p = Partition::uniform(0.0, 1.0, 4).unwrap();
        assert_eq!(p.times(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(p.n_steps(), 4);
        assert_eq!(p.mesh(), 0.25);
        assert_eq!(p.stage_of(0.3), 1);
        assert_eq!(p.stage_of(1.0), 3);
        assert_eq!(p.stage_of(0.0), 0);
        assert_eq!(p.index_of(0.75), Some(3));
        let single = Partition::new(vec![1.0]).unwrap();
        assert_eq!(single.n_steps(), 0);
    }
}
