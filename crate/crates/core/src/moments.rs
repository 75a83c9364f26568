//! Exact population moments of `(D, A, AD, Y)`.
//!
//! Every quantity is a finite sum over the support cells. Covariances are
//! accumulated in centered form to keep cancellation error down.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::dgp::Dgp;
use crate::error::{Error, Result};

/// Agreement required between the two routes to `cov(A_j, Y)` and
/// `cov(D A_j, Y)`.
pub const EXPANSION_TOLERANCE: f64 = 1e-10;

/// Population moments of the treatment and action vector.
#[derive(Debug, Clone)]
pub struct MomentSet {
    /// `E[D] = P{D = 1}`.
    pub p_treat: f64,
    /// `pi[d][i] = P{A = a_i | D = d}`.
    pub pi: [Vec<f64>; 2],
    /// `P{A = a_i}`.
    pub p_a: Vec<f64>,
    pub mean_a: Vec<f64>,
    pub mean_a_given_d1: Vec<f64>,
    pub mean_a_given_d0: Vec<f64>,
    pub var_d: f64,
    /// `cov(D, A_j)` for each coordinate.
    pub cov_da: Vec<f64>,
    pub var_a: DMatrix<f64>,
    /// `var(W)` for `W = (A', A'D)'`.
    pub var_w: DMatrix<f64>,
    /// `cov(W, D)`.
    pub cov_wd: DVector<f64>,
    /// Smallest eigenvalue of the covariance matrix of `(D, A)`.
    pub min_eig_long: f64,
    /// Smallest eigenvalue of the covariance matrix of `(D, A, AD)`.
    pub min_eig_inter: f64,
}

impl MomentSet {
    pub fn k(&self) -> usize {
        self.mean_a.len()
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return f64::INFINITY;
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Weighted covariance matrix of the feature vectors `x(d, i)` under the law.
pub(crate) fn covariance_matrix<F>(dgp: &Dgp, dim: usize, features: F) -> DMatrix<f64>
where
    F: Fn(usize, usize) -> Vec<f64>,
{
    let law = dgp.law();
    let mut mean = vec![0.0; dim];
    for (d, i, p) in law.iter() {
        for (m, x) in mean.iter_mut().zip(features(d, i)) {
            *m += p * x;
        }
    }
    let mut cov = DMatrix::zeros(dim, dim);
    for (d, i, p) in law.iter() {
        let x: Vec<f64> = features(d, i)
            .into_iter()
            .zip(&mean)
            .map(|(x, m)| x - m)
            .collect();
        for r in 0..dim {
            for c in r..dim {
                cov[(r, c)] += p * x[r] * x[c];
            }
        }
    }
    for r in 0..dim {
        for c in 0..r {
            cov[(r, c)] = cov[(c, r)];
        }
    }
    cov
}

pub fn compute_moments(dgp: &Dgp) -> MomentSet {
    let law = dgp.law();
    let space = dgp.space();
    let k = space.k();
    let n = space.len();
    let atoms: Vec<Vec<f64>> = space.atoms().iter().map(|a| a.as_f64()).collect();

    let arm_mass = [law.cells()[0].iter().sum::<f64>(), law.cells()[1].iter().sum::<f64>()];
    let total = arm_mass[0] + arm_mass[1];
    let p_treat = arm_mass[1] / total;
    let pi = [
        law.cells()[0].iter().map(|&q| q / arm_mass[0]).collect::<Vec<_>>(),
        law.cells()[1].iter().map(|&q| q / arm_mass[1]).collect::<Vec<_>>(),
    ];
    let p_a: Vec<f64> = (0..n).map(|i| law.p(0, i) + law.p(1, i)).collect();

    let mut mean_a = vec![0.0; k];
    let mut mean1 = vec![0.0; k];
    let mut mean0 = vec![0.0; k];
    for i in 0..n {
        for j in 0..k {
            mean_a[j] += p_a[i] * atoms[i][j];
            mean1[j] += pi[1][i] * atoms[i][j];
            mean0[j] += pi[0][i] * atoms[i][j];
        }
    }

    let mut var_d = 0.0;
    let mut cov_da = vec![0.0; k];
    for (d, i, p) in law.iter() {
        let dc = d as f64 - p_treat;
        var_d += p * dc * dc;
        for j in 0..k {
            cov_da[j] += p * dc * (atoms[i][j] - mean_a[j]);
        }
    }

    let var_a = covariance_matrix(dgp, k, |_, i| atoms[i].clone());
    let w = |d: usize, i: usize| -> Vec<f64> {
        let mut v = atoms[i].clone();
        v.extend(atoms[i].iter().map(|x| x * d as f64));
        v
    };
    let var_w = covariance_matrix(dgp, 2 * k, w);

    let mut mean_w = vec![0.0; 2 * k];
    for (d, i, p) in law.iter() {
        for (m, x) in mean_w.iter_mut().zip(w(d, i)) {
            *m += p * x;
        }
    }
    let mut cov_wd = DVector::zeros(2 * k);
    for (d, i, p) in law.iter() {
        let dc = d as f64 - p_treat;
        for (r, x) in w(d, i).into_iter().enumerate() {
            cov_wd[r] += p * (x - mean_w[r]) * dc;
        }
    }

    let long_cov = covariance_matrix(dgp, k + 1, |d, i| {
        let mut v = vec![d as f64];
        v.extend_from_slice(&atoms[i]);
        v
    });
    let inter_cov = covariance_matrix(dgp, 2 * k + 1, |d, i| {
        let mut v = vec![d as f64];
        v.extend(w(d, i));
        v
    });

    MomentSet {
        p_treat,
        pi,
        p_a,
        mean_a,
        mean_a_given_d1: mean1,
        mean_a_given_d0: mean0,
        var_d,
        cov_da,
        var_a,
        var_w,
        cov_wd,
        min_eig_long: min_eigenvalue(&long_cov),
        min_eig_inter: min_eigenvalue(&inter_cov),
    }
}

/// `E[Y]` under the observed law.
pub fn mean_y(dgp: &Dgp) -> f64 {
    let out = dgp.outcome();
    dgp.law().iter().map(|(d, i, p)| p * out.observed_mean(d, i)).sum()
}

/// `E[Y | D = d]`.
pub fn mean_y_given_d(dgp: &Dgp, d: usize) -> f64 {
    let law = dgp.law();
    let out = dgp.outcome();
    let mass: f64 = law.cells()[d].iter().sum();
    law.cells()[d]
        .iter()
        .enumerate()
        .map(|(i, &p)| p * out.observed_mean(d, i))
        .sum::<f64>()
        / mass
}

fn check_agreement(quantity: String, direct: f64, expansion: f64) -> Result<f64> {
    if (direct - expansion).abs() > EXPANSION_TOLERANCE * (1.0 + direct.abs()) {
        return Err(Error::ExpansionMismatch {
            quantity,
            direct,
            expansion,
        });
    }
    Ok(direct)
}

fn coordinate(dgp: &Dgp, j: usize) -> Result<()> {
    if j >= dgp.k() {
        return Err(Error::Config(format!(
            "action coordinate {j} out of range for K = {}",
            dgp.k()
        )));
    }
    Ok(())
}

/// `cov(A_j, Y)`, computed directly and through its split into treated
/// contrasts, untreated action contrasts, and selection contrasts. The two
/// must agree; a mismatch signals a bug.
pub fn cov_aj_y(dgp: &Dgp, j: usize) -> Result<f64> {
    coordinate(dgp, j)?;
    let m = compute_moments(dgp);
    let space = dgp.space();
    let out = dgp.outcome();
    let z = space.zero_index();
    let ea = m.mean_a[j];

    let direct: f64 = dgp
        .law()
        .iter()
        .map(|(d, i, p)| p * (f64::from(space.atoms()[i].0[j]) - ea) * out.observed_mean(d, i))
        .sum();

    let mut expansion = 0.0;
    for i in 0..space.len() {
        let dev = f64::from(space.atoms()[i].0[j]) - ea;
        let treated = m.pi[1][i] * m.p_treat;
        expansion += (out.nu(1, 1, i) - out.nu(0, 1, i)) * dev * treated;
        expansion += (out.nu(0, 0, i) - out.nu(0, 0, z)) * dev * m.p_a[i];
        expansion += (out.nu(0, 1, i) - out.nu(0, 0, i)) * dev * treated;
    }
    check_agreement(format!("cov(A_{}, Y)", j + 1), direct, expansion)
}

/// `cov(D A_j, Y)`, computed directly and through the same three-way split
/// as [`cov_aj_y`].
pub fn cov_daj_y(dgp: &Dgp, j: usize) -> Result<f64> {
    coordinate(dgp, j)?;
    let m = compute_moments(dgp);
    let space = dgp.space();
    let out = dgp.outcome();
    let z = space.zero_index();
    let p = m.p_treat;
    let e1 = m.mean_a_given_d1[j];
    let mean_da = p * e1;

    let direct: f64 = dgp
        .law()
        .iter()
        .map(|(d, i, q)| {
            let da = d as f64 * f64::from(space.atoms()[i].0[j]);
            q * (da - mean_da) * out.observed_mean(d, i)
        })
        .sum();

    let mut expansion = 0.0;
    for i in 0..space.len() {
        let aj = f64::from(space.atoms()[i].0[j]);
        let pi1 = m.pi[1][i];
        expansion += p * (out.nu(1, 1, i) - out.nu(0, 1, i)) * pi1 * (aj - p * e1);
        expansion += p * (out.nu(0, 1, i) - out.nu(0, 0, i)) * pi1 * (aj - p * e1);
        expansion += p * (out.nu(0, 0, i) - out.nu(0, 0, z)) * (pi1 * aj - m.p_a[i] * e1);
    }
    check_agreement(format!("cov(D A_{}, Y)", j + 1), direct, expansion)
}
