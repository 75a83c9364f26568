//! Population least squares for the five regressions of `Y` on `D` and the
//! actions.
//!
//! The solver only sees weighted cells `(d, a, weight, mean of Y)`, so the
//! exact population projection and the sample OLS fit share one code path.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dgp::{ActionSpace, Dgp};
use crate::error::{Error, Result};
use crate::moments::{compute_moments, cov_aj_y, mean_y_given_d, min_eigenvalue};

/// Smallest admissible eigenvalue of the design moment matrix.
pub const SINGULAR_TOLERANCE: f64 = 1e-10;

/// Bound on `|E[resid * z]|` enforced for population projections.
pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressionKind {
    /// `Y` on a constant and `D`.
    Short,
    /// Adds the actions `A` linearly.
    Long,
    /// Adds `A` and `A D`.
    Inter,
    /// `D` plus one indicator per support atom.
    Sfe,
    /// One indicator per atom and its interaction with `D`.
    Sat,
}

impl RegressionKind {
    pub const ALL: [RegressionKind; 5] = [
        RegressionKind::Short,
        RegressionKind::Long,
        RegressionKind::Inter,
        RegressionKind::Sfe,
        RegressionKind::Sat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RegressionKind::Short => "short",
            RegressionKind::Long => "long",
            RegressionKind::Inter => "inter",
            RegressionKind::Sfe => "sfe",
            RegressionKind::Sat => "sat",
        }
    }
}

impl fmt::Display for RegressionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for RegressionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RegressionKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown regression kind `{s}`")))
    }
}

/// One column of a design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regressor {
    Const,
    Treat,
    /// `A_j`, zero-based.
    Action(usize),
    /// `A_j D`.
    ActionTreat(usize),
    /// `I{A = a_i}`.
    Stratum(usize),
    /// `I{A = a_i} D`.
    StratumTreat(usize),
}

impl Regressor {
    pub fn value(self, space: &ActionSpace, d: usize, i: usize) -> f64 {
        let d = d as f64;
        let atom = &space.atoms()[i].0;
        match self {
            Regressor::Const => 1.0,
            Regressor::Treat => d,
            Regressor::Action(j) => f64::from(atom[j]),
            Regressor::ActionTreat(j) => f64::from(atom[j]) * d,
            Regressor::Stratum(s) => f64::from(u8::from(s == i)),
            Regressor::StratumTreat(s) => f64::from(u8::from(s == i)) * d,
        }
    }

    pub fn label(self, space: &ActionSpace) -> String {
        match self {
            Regressor::Const => "const".into(),
            Regressor::Treat => "D".into(),
            Regressor::Action(j) => format!("A{}", j + 1),
            Regressor::ActionTreat(j) => format!("A{}D", j + 1),
            Regressor::Stratum(i) => format!("I{{A={}}}", space.atoms()[i]),
            Regressor::StratumTreat(i) => format!("I{{A={}}}D", space.atoms()[i]),
        }
    }
}

/// A regression kind together with its column list on a given space.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSpec {
    pub kind: RegressionKind,
    pub regressors: Vec<Regressor>,
}

impl RegressionSpec {
    /// Columns in a fixed order. The indicator designs carry no constant, so
    /// every atom keeps its own column and nothing needs to be dropped.
    pub fn new(kind: RegressionKind, space: &ActionSpace) -> Self {
        let k = space.k();
        let n = space.len();
        let mut r = Vec::new();
        match kind {
            RegressionKind::Short => r.extend([Regressor::Const, Regressor::Treat]),
            RegressionKind::Long => {
                r.extend([Regressor::Const, Regressor::Treat]);
                r.extend((0..k).map(Regressor::Action));
            }
            RegressionKind::Inter => {
                r.extend([Regressor::Const, Regressor::Treat]);
                r.extend((0..k).map(Regressor::Action));
                r.extend((0..k).map(Regressor::ActionTreat));
            }
            RegressionKind::Sfe => {
                r.push(Regressor::Treat);
                r.extend((0..n).map(Regressor::Stratum));
            }
            RegressionKind::Sat => {
                r.extend((0..n).map(Regressor::Stratum));
                r.extend((0..n).map(Regressor::StratumTreat));
            }
        }
        RegressionSpec {
            kind,
            regressors: r,
        }
    }

    fn has_const(&self) -> bool {
        self.regressors.contains(&Regressor::Const)
    }
}

/// A weighted cell of the design: `weight` is the probability (or sample
/// share) of `(d, atoms[atom])` and `y` the mean outcome there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub d: usize,
    pub atom: usize,
    pub weight: f64,
    pub y: f64,
}

/// Coefficients of one fitted regression.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    pub kind: RegressionKind,
    pub regressors: Vec<Regressor>,
    pub labels: Vec<String>,
    pub coefficients: Vec<f64>,
    /// `E[resid * z]` for each regressor `z`.
    pub orthogonality: Vec<f64>,
    /// Smallest eigenvalue of the matrix that was inverted.
    pub min_eigenvalue: f64,
}

impl ProjectionResult {
    pub fn coefficient(&self, r: Regressor) -> Option<f64> {
        self.regressors
            .iter()
            .position(|&x| x == r)
            .map(|p| self.coefficients[p])
    }

    /// Coefficient on `D`. `None` for the saturated regression, whose
    /// treatment effects are per atom.
    pub fn delta(&self) -> Option<f64> {
        self.coefficient(Regressor::Treat)
    }

    /// Coefficient on `A_j D` in the interaction regression.
    pub fn lambda(&self, j: usize) -> Option<f64> {
        self.coefficient(Regressor::ActionTreat(j))
    }

    /// Coefficient on `A_j`.
    pub fn theta(&self, j: usize) -> Option<f64> {
        self.coefficient(Regressor::Action(j))
    }

    /// Per-atom `D` coefficients of the saturated regression.
    pub fn sat_effects(&self) -> Vec<f64> {
        self.regressors
            .iter()
            .zip(&self.coefficients)
            .filter(|(r, _)| matches!(r, Regressor::StratumTreat(_)))
            .map(|(_, &c)| c)
            .collect()
    }

    pub fn max_orthogonality_residual(&self) -> f64 {
        self.orthogonality.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Which error to raise when the design is rank deficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignSource {
    Population,
    Sample,
}

/// Weighted least squares over cells. With a constant the slopes come from
/// the centered covariance system, otherwise from the raw Gram matrix.
pub fn solve_cells(
    spec: &RegressionSpec,
    space: &ActionSpace,
    cells: &[Cell],
    source: DesignSource,
) -> Result<ProjectionResult> {
    let cols = &spec.regressors;
    let rows: Vec<Vec<f64>> = cells
        .iter()
        .map(|c| cols.iter().map(|r| r.value(space, c.d, c.atom)).collect())
        .collect();
    let total: f64 = cells.iter().map(|c| c.weight).sum();

    let singular = |min_eigenvalue: f64| match source {
        DesignSource::Population => Error::SingularDesign {
            regression: spec.kind.to_string(),
            min_eigenvalue,
        },
        DesignSource::Sample => Error::SingularSampleDesign {
            regression: spec.kind.to_string(),
            min_eigenvalue,
        },
    };

    let (coefficients, min_eig) = if spec.has_const() {
        let slope_cols: Vec<usize> = (0..cols.len())
            .filter(|&c| cols[c] != Regressor::Const)
            .collect();
        let m = slope_cols.len();
        let mean_x: Vec<f64> = slope_cols
            .iter()
            .map(|&c| {
                cells
                    .iter()
                    .zip(&rows)
                    .map(|(cell, x)| cell.weight * x[c])
                    .sum::<f64>()
                    / total
            })
            .collect();
        let mean_y = cells.iter().map(|c| c.weight * c.y).sum::<f64>() / total;
        let mut sxx = DMatrix::zeros(m, m);
        let mut sxy = DVector::zeros(m);
        for (cell, x) in cells.iter().zip(&rows) {
            let xc: Vec<f64> = slope_cols
                .iter()
                .zip(&mean_x)
                .map(|(&c, mx)| x[c] - mx)
                .collect();
            let yc = cell.y - mean_y;
            for r in 0..m {
                sxy[r] += cell.weight * xc[r] * yc;
                for s in 0..m {
                    sxx[(r, s)] += cell.weight * xc[r] * xc[s];
                }
            }
        }
        sxx /= total;
        sxy /= total;
        let min_eig = min_eigenvalue(&sxx);
        if !(min_eig > SINGULAR_TOLERANCE) {
            return Err(singular(min_eig));
        }
        let slopes = sxx
            .full_piv_lu()
            .solve(&sxy)
            .ok_or_else(|| singular(min_eig))?;
        let mut coef = vec![0.0; cols.len()];
        let mut level = mean_y;
        for (s, &c) in slope_cols.iter().enumerate() {
            coef[c] = slopes[s];
            level -= slopes[s] * mean_x[s];
        }
        let pc = cols.iter().position(|&r| r == Regressor::Const).unwrap();
        coef[pc] = level;
        (coef, min_eig)
    } else {
        let m = cols.len();
        let mut g = DMatrix::zeros(m, m);
        let mut b = DVector::zeros(m);
        for (cell, x) in cells.iter().zip(&rows) {
            let w = cell.weight / total;
            for r in 0..m {
                b[r] += w * x[r] * cell.y;
                for s in 0..m {
                    g[(r, s)] += w * x[r] * x[s];
                }
            }
        }
        let min_eig = min_eigenvalue(&g);
        if !(min_eig > SINGULAR_TOLERANCE) {
            return Err(singular(min_eig));
        }
        let sol = g.full_piv_lu().solve(&b).ok_or_else(|| singular(min_eig))?;
        (sol.iter().copied().collect(), min_eig)
    };

    let mut orthogonality = vec![0.0; cols.len()];
    for (cell, x) in cells.iter().zip(&rows) {
        let fitted: f64 = x.iter().zip(&coefficients).map(|(a, b)| a * b).sum();
        let resid = cell.y - fitted;
        for (o, xv) in orthogonality.iter_mut().zip(x) {
            *o += cell.weight / total * resid * xv;
        }
    }

    Ok(ProjectionResult {
        kind: spec.kind,
        regressors: cols.clone(),
        labels: cols.iter().map(|r| r.label(space)).collect(),
        coefficients,
        orthogonality,
        min_eigenvalue: min_eig,
    })
}

/// Population cells of a DGP, carrying the observed means `nu(d, d, a)`.
///
/// Zero-probability cells are skipped since they do not enter any moment.
pub fn population_cells(dgp: &Dgp) -> Vec<Cell> {
    dgp.law()
        .iter()
        .filter(|&(_, _, p)| p > 0.0)
        .map(|(d, i, p)| Cell {
            d,
            atom: i,
            weight: p,
            y: dgp.outcome().observed_mean(d, i),
        })
        .collect()
}

/// Exact population projection.
pub fn project(dgp: &Dgp, kind: RegressionKind) -> Result<ProjectionResult> {
    let spec = RegressionSpec::new(kind, dgp.space());
    solve_cells(&spec, dgp.space(), &population_cells(dgp), DesignSource::Population)
}

/// `Delta_long` from the partialled-out form
/// `(cov(D,Y) - M cov(A,Y)) / (var(D) - M cov(A,D))` with
/// `M = cov(D,A) var(A)^{-1}`.
pub fn delta_long_closed_form(dgp: &Dgp) -> Result<f64> {
    let m = compute_moments(dgp);
    if !(m.min_eig_long > SINGULAR_TOLERANCE) {
        return Err(Error::SingularDesign {
            regression: "long".into(),
            min_eigenvalue: m.min_eig_long,
        });
    }
    let mvec = long_m_vector(&m)?;
    let delta_short = mean_y_given_d(dgp, 1) - mean_y_given_d(dgp, 0);
    let mut num = m.var_d * delta_short;
    let mut den = m.var_d;
    for j in 0..m.k() {
        num -= mvec[j] * cov_aj_y(dgp, j)?;
        den -= mvec[j] * m.cov_da[j];
    }
    Ok(num / den)
}

/// `M = cov(D, A) var(A)^{-1}`.
pub(crate) fn long_m_vector(m: &crate::moments::MomentSet) -> Result<Vec<f64>> {
    let rhs = DVector::from_vec(m.cov_da.clone());
    solve_symmetric(&m.var_a, &rhs, "long")
}

/// `M = cov(D, W) var(W)^{-1}` with `W = (A, A D)`.
pub(crate) fn inter_m_vector(m: &crate::moments::MomentSet) -> Result<Vec<f64>> {
    solve_symmetric(&m.var_w, &m.cov_wd, "inter")
}

fn solve_symmetric(a: &DMatrix<f64>, b: &DVector<f64>, regression: &str) -> Result<Vec<f64>> {
    let min_eig = min_eigenvalue(a);
    let err = || Error::SingularDesign {
        regression: regression.into(),
        min_eigenvalue: min_eig,
    };
    if !(min_eig > SINGULAR_TOLERANCE) {
        return Err(err());
    }
    let x = a.clone().full_piv_lu().solve(b).ok_or_else(err)?;
    Ok(x.iter().copied().collect())
}
