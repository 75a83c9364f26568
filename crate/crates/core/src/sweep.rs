//! Weights as a function of `P{D=1}` with the arm conditionals held fixed.

use std::str::FromStr;

use crate::config::DgpConfig;
use crate::decomposition::{weights, EstimandKind, WeightTable};
use crate::error::{Error, Result};

/// Inclusive grid `start, start + step, ..., stop`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Grid {
    pub fn new(start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::Config(format!("grid step must be positive, got {step}")));
        }
        if !(start > 0.0 && stop < 1.0 && start <= stop) {
            return Err(Error::Config(format!(
                "grid {start}:{stop} must satisfy 0 < start <= stop < 1"
            )));
        }
        Ok(Grid { start, stop, step })
    }

    /// Points rounded to 12 decimals so that `0.1 + 30 * 0.01` prints as 0.4.
    pub fn points(&self) -> Vec<f64> {
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=count)
            .map(|i| ((self.start + i as f64 * self.step) * 1e12).round() / 1e12)
            .collect()
    }
}

impl FromStr for Grid {
    type Err = Error;

    /// Parses `start:stop:step`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::Config(format!("grid `{s}` is not of the form start:stop:step"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let v: Vec<f64> = parts
            .iter()
            .map(|x| x.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        Grid::new(v[0], v[1], v[2])
    }
}

pub fn sweep(cfg: &DgpConfig, kind: EstimandKind, grid: &Grid) -> Result<Vec<(f64, WeightTable)>> {
    grid.points()
        .into_iter()
        .map(|p| {
            let dgp = cfg.build_with_p_treat(p)?;
            Ok((p, weights(&dgp, kind)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_points_are_clean() {
        let g: Grid = "0.1:0.9:0.01".parse().unwrap();
        let pts = g.points();
        assert_eq!(pts.len(), 81);
        assert_eq!(pts[30], 0.4);
        assert_eq!(*pts.last().unwrap(), 0.9);
        assert_eq!("0.5:0.5:0.1".parse::<Grid>().unwrap().points(), vec![0.5]);
    }

    #[test]
    fn grid_rejects_bad_input() {
        for s in ["0:0.5:0.1", "0.2:1:0.1", "0.5:0.2:0.1", "0.1:0.2:0", "0.1:0.2", "a:b:c"] {
            assert!(s.parse::<Grid>().is_err(), "{s}");
        }
    }
}
