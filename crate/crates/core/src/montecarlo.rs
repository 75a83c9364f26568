//! Finite-sample check: draw i.i.d. rows from a DGP, fit the regressions by
//! OLS and compare against the exact population coefficients.

use std::io::{self, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::trial_rng;
use crate::dgp::{ActionSpace, Dgp};
use crate::error::{Error, Result};
use crate::projection::{
    project, solve_cells, Cell, DesignSource, ProjectionResult, RegressionKind, RegressionSpec,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Row {
    pub y: f64,
    pub d: u8,
    /// Index into the support atoms.
    pub atom: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    space: ActionSpace,
    rows: Vec<Row>,
}

impl Dataset {
    pub fn from_rows(space: ActionSpace, rows: Vec<Row>) -> Result<Self> {
        if let Some(r) = rows.iter().find(|r| r.atom >= space.len() || r.d > 1) {
            return Err(Error::Config(format!(
                "row (d={}, atom index {}) lies outside the support",
                r.d, r.atom
            )));
        }
        Ok(Dataset { space, rows })
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn space(&self) -> &ActionSpace {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// CSV with header `y,d,a1,...,aK`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let k = self.space.k();
        let header: Vec<String> = ["y".to_string(), "d".to_string()]
            .into_iter()
            .chain((1..=k).map(|j| format!("a{j}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for r in &self.rows {
            write!(w, "{},{}", r.y, r.d)?;
            for v in &self.space.atoms()[r.atom].0 {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Cell shares and cell means; OLS on these reproduces OLS on the rows.
    pub fn cells(&self) -> Vec<Cell> {
        let n = self.space.len();
        let mut count = vec![0usize; 2 * n];
        let mut sum = vec![0.0; 2 * n];
        for r in &self.rows {
            let c = usize::from(r.d) * n + r.atom;
            count[c] += 1;
            sum[c] += r.y;
        }
        let total = self.rows.len() as f64;
        (0..2 * n)
            .filter(|&c| count[c] > 0)
            .map(|c| Cell {
                d: c / n,
                atom: c % n,
                weight: count[c] as f64 / total,
                y: sum[c] / count[c] as f64,
            })
            .collect()
    }
}

/// Draws `n` rows with `Y = nu(D, D, A) + noise_sd(D, A) * Z`.
pub fn sample_with<R: Rng + ?Sized>(dgp: &Dgp, n: usize, rng: &mut R) -> Dataset {
    let law = dgp.law();
    let atoms = dgp.space().len();
    let probs: Vec<f64> = law.iter().map(|(_, _, p)| p).collect();
    let cell = WeightedIndex::new(&probs).expect("law has positive total mass");
    let out = dgp.outcome();
    let rows = (0..n)
        .map(|_| {
            let c = cell.sample(rng);
            let (d, i) = (c / atoms, c % atoms);
            let z: f64 = rng.sample(StandardNormal);
            Row {
                y: out.observed_mean(d, i) + out.noise_sd(d, i) * z,
                d: d as u8,
                atom: i,
            }
        })
        .collect();
    Dataset {
        space: dgp.space().clone(),
        rows,
    }
}

pub fn sample(dgp: &Dgp, n: usize, seed: u64) -> Dataset {
    sample_with(dgp, n, &mut trial_rng(seed, 0))
}

/// Sample OLS fit.
pub fn estimate(data: &Dataset, kind: RegressionKind) -> Result<ProjectionResult> {
    let spec = RegressionSpec::new(kind, &data.space);
    solve_cells(&spec, &data.space, &data.cells(), DesignSource::Sample)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub kinds: Vec<RegressionKind>,
}

impl SimConfig {
    pub fn new(n: usize, reps: usize, seed: u64) -> Self {
        SimConfig {
            n,
            reps,
            seed,
            kinds: RegressionKind::ALL.to_vec(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n < 1 || self.reps < 1 {
            return Err(Error::Config("n and reps must both be at least 1".into()));
        }
        Ok(())
    }
}

/// Summary for one coefficient across replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEntry {
    pub kind: RegressionKind,
    pub regressor: String,
    pub target: f64,
    pub mean: f64,
    pub sd: f64,
    /// `sd / sqrt(reps)`.
    pub se: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub entries: Vec<SimEntry>,
}

impl SimReport {
    pub fn max_abs_z(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, e| m.max(e.z.abs()))
    }

    pub fn all_within(&self, bound: f64) -> bool {
        self.entries.iter().all(|e| e.z.abs() < bound)
    }
}

/// Runs `reps` independent samples (stream `r` of the seeded generator for
/// replication `r`) and fits every requested regression on each.
pub fn validate(dgp: &Dgp, cfg: &SimConfig) -> Result<SimReport> {
    cfg.validate()?;
    let targets: Vec<ProjectionResult> = cfg
        .kinds
        .iter()
        .map(|&k| project(dgp, k))
        .collect::<Result<_>>()?;
    let fits: Vec<Vec<ProjectionResult>> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| {
            let data = sample_with(dgp, cfg.n, &mut trial_rng(cfg.seed, r as u64));
            cfg.kinds.iter().map(|&k| estimate(&data, k)).collect()
        })
        .collect::<Result<_>>()?;

    let reps = cfg.reps as f64;
    let mut entries = Vec::new();
    for (ki, target) in targets.iter().enumerate() {
        for (ci, label) in target.labels.iter().enumerate() {
            let xs: Vec<f64> = fits.iter().map(|f| f[ki].coefficients[ci]).collect();
            let mean = xs.iter().sum::<f64>() / reps;
            let sd = if cfg.reps > 1 {
                (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1.0)).sqrt()
            } else {
                0.0
            };
            let se = sd / reps.sqrt();
            let gap = mean - target.coefficients[ci];
            let z = if se > 0.0 {
                gap / se
            } else if gap == 0.0 {
                0.0
            } else {
                gap.signum() * f64::INFINITY
            };
            entries.push(SimEntry {
                kind: target.kind,
                regressor: label.clone(),
                target: target.coefficients[ci],
                mean,
                sd,
                se,
                z,
            });
        }
    }
    Ok(SimReport {
        n: cfg.n,
        reps: cfg.reps,
        seed: cfg.seed,
        entries,
    })
}

/// Mean absolute deviation of the estimates from their targets, for each
/// sample size.
pub fn convergence_trend(dgp: &Dgp, ns: &[usize], reps: usize, seed: u64) -> Result<Vec<f64>> {
    ns.iter()
        .map(|&n| {
            let cfg = SimConfig::new(n, reps, seed);
            let targets: Vec<ProjectionResult> = cfg
                .kinds
                .iter()
                .map(|&k| project(dgp, k))
                .collect::<Result<_>>()?;
            let devs: Vec<f64> = (0..reps)
                .into_par_iter()
                .map(|r| -> Result<f64> {
                    let data = sample_with(dgp, n, &mut trial_rng(seed, r as u64));
                    let mut acc = 0.0;
                    let mut count = 0usize;
                    for t in &targets {
                        let fit = estimate(&data, t.kind)?;
                        for (a, b) in fit.coefficients.iter().zip(&t.coefficients) {
                            acc += (a - b).abs();
                            count += 1;
                        }
                    }
                    Ok(acc / count as f64)
                })
                .collect::<Result<_>>()?;
            Ok(devs.iter().sum::<f64>() / reps as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{Assumption, JointLaw};

    fn small() -> Dgp {
        let space = ActionSpace::product(vec![vec![0, 1, 2]]).unwrap();
        let law = JointLaw::new(space, [vec![0.1, 0.2, 0.1], vec![0.2, 0.15, 0.25]], true).unwrap();
        let mu = [vec![0.0, 0.5, -0.3], vec![1.0, 0.2, 0.4]];
        Dgp::new(law, mu, None, Some([vec![0.0; 3], vec![0.0; 3]]), Assumption::Strong).unwrap()
    }

    #[test]
    fn noiseless_rows_equal_cell_means() {
        let g = small();
        let data = sample(&g, 500, 4);
        for r in data.rows() {
            assert_eq!(r.y, g.outcome().mu(usize::from(r.d), r.atom));
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let g = small().with_assumption(Assumption::Weak).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        sample(&g, 200, 9).write_csv(&mut a).unwrap();
        sample(&g, 200, 9).write_csv(&mut b).unwrap();
        assert_eq!(a, b);
        assert!(String::from_utf8(a).unwrap().starts_with("y,d,a1\n"));
    }

    #[test]
    fn cell_aggregation_matches_row_ols() {
        let g = small();
        let data = sample(&g, 400, 1);
        let fit = estimate(&data, RegressionKind::Short).unwrap();
        let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0.0, 0.0, 0.0);
        for r in data.rows() {
            if r.d == 1 {
                s1 += r.y;
                n1 += 1.0;
            } else {
                s0 += r.y;
                n0 += 1.0;
            }
        }
        assert!((fit.delta().unwrap() - (s1 / n1 - s0 / n0)).abs() < 1e-12);
    }

    #[test]
    fn two_identical_rows_are_singular() {
        let space = ActionSpace::product(vec![vec![0, 1]]).unwrap();
        let rows = vec![Row { y: 1.0, d: 1, atom: 0 }, Row { y: 2.0, d: 1, atom: 0 }];
        let data = Dataset::from_rows(space, rows).unwrap();
        for kind in RegressionKind::ALL {
            assert!(matches!(
                estimate(&data, kind),
                Err(Error::SingularSampleDesign { .. })
            ));
        }
    }

    #[test]
    fn zero_reps_rejected() {
        assert!(validate(&small(), &SimConfig::new(10, 0, 1)).is_err());
    }
}
