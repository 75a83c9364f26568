//! Closed-form weights and the split of each estimand into a direct term, an
//! indirect term through the actions, and a selection term.
//!
//! Estimand values always come from [`crate::projection`]; the weights here
//! are computed independently and must reconstruct them.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dgp::{Assumption, Atom, Dgp};
use crate::diagnostics::SspVerdict;
use crate::error::{Error, Result};
use crate::moments::{compute_moments, MomentSet};
use crate::projection::{
    inter_m_vector, long_m_vector, project, RegressionKind, SINGULAR_TOLERANCE,
};

/// Bound on `|estimand - (dce + ind + sel)|`.
pub const IDENTITY_TOLERANCE: f64 = 1e-10;

/// Anything that can be decomposed: the five regressions plus the
/// interaction-regression combination `Delta_inter + E[A] lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimandKind {
    #[serde(rename = "short")]
    Short,
    #[serde(rename = "long")]
    Long,
    #[serde(rename = "inter")]
    Inter,
    #[serde(rename = "sfe")]
    Sfe,
    #[serde(rename = "sat")]
    Sat,
    #[serde(rename = "inter-star")]
    InterStar,
}

impl EstimandKind {
    pub const ALL: [EstimandKind; 6] = [
        EstimandKind::Short,
        EstimandKind::Long,
        EstimandKind::Inter,
        EstimandKind::Sfe,
        EstimandKind::Sat,
        EstimandKind::InterStar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimandKind::Short => "short",
            EstimandKind::Long => "long",
            EstimandKind::Inter => "inter",
            EstimandKind::Sfe => "sfe",
            EstimandKind::Sat => "sat",
            EstimandKind::InterStar => "inter-star",
        }
    }

    /// The regression whose coefficients define this estimand.
    pub fn regression(self) -> RegressionKind {
        match self {
            EstimandKind::Short => RegressionKind::Short,
            EstimandKind::Long => RegressionKind::Long,
            EstimandKind::Inter | EstimandKind::InterStar => RegressionKind::Inter,
            EstimandKind::Sfe => RegressionKind::Sfe,
            EstimandKind::Sat => RegressionKind::Sat,
        }
    }
}

impl From<RegressionKind> for EstimandKind {
    fn from(k: RegressionKind) -> Self {
        match k {
            RegressionKind::Short => EstimandKind::Short,
            RegressionKind::Long => EstimandKind::Long,
            RegressionKind::Inter => EstimandKind::Inter,
            RegressionKind::Sfe => EstimandKind::Sfe,
            RegressionKind::Sat => EstimandKind::Sat,
        }
    }
}

impl fmt::Display for EstimandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EstimandKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimandKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown kind `{s}` (expected short, long, inter, sfe, sat or inter-star)"
                ))
            })
    }
}

/// Per-atom weights with the pieces they were built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightTable {
    pub kind: EstimandKind,
    pub atoms: Vec<Atom>,
    pub omega_dce: Vec<f64>,
    /// Absent for the indicator regressions, which have no indirect term.
    pub omega_ind: Option<Vec<f64>>,
    pub dce_numerators: Vec<f64>,
    pub ind_numerators: Option<Vec<f64>>,
    pub denominator: f64,
    /// `cov(D, X) var(X)^{-1}` for the partialled-out controls `X`; empty
    /// when the kind has none.
    pub m_vector: Vec<f64>,
}

impl WeightTable {
    fn from_parts(
        kind: EstimandKind,
        atoms: Vec<Atom>,
        dce_numerators: Vec<f64>,
        ind_numerators: Option<Vec<f64>>,
        denominator: f64,
        m_vector: Vec<f64>,
    ) -> Self {
        let omega_dce = dce_numerators.iter().map(|x| x / denominator).collect();
        let omega_ind = ind_numerators
            .as_ref()
            .map(|v| v.iter().map(|x| x / denominator).collect());
        WeightTable {
            kind,
            atoms,
            omega_dce,
            omega_ind,
            dce_numerators,
            ind_numerators,
            denominator,
            m_vector,
        }
    }

    pub fn dce_sum(&self) -> f64 {
        self.omega_dce.iter().sum()
    }

    pub fn ind_sum(&self) -> Option<f64> {
        self.omega_ind.as_ref().map(|w| w.iter().sum())
    }

    /// `sum_a a_j omega_ind(a)` for each coordinate.
    pub fn ind_first_moment(&self) -> Option<Vec<f64>> {
        let w = self.omega_ind.as_ref()?;
        let k = self.atoms.first().map_or(0, |a| a.0.len());
        let mut out = vec![0.0; k];
        for (atom, wi) in self.atoms.iter().zip(w) {
            for (o, &v) in out.iter_mut().zip(&atom.0) {
                *o += f64::from(v) * wi;
            }
        }
        Some(out)
    }

    /// Largest deviation from `sum omega_dce = 1` and `sum omega_ind = 0`,
    /// plus `sum a omega_ind = 0` for the long and interaction regressions,
    /// whose indirect weights are orthogonal to the actions.
    pub fn normalization_residual(&self) -> f64 {
        let mut r = (self.dce_sum() - 1.0).abs();
        if let Some(s) = self.ind_sum() {
            r = r.max(s.abs());
        }
        if matches!(self.kind, EstimandKind::Long | EstimandKind::Inter) {
            if let Some(m) = self.ind_first_moment() {
                r = m.iter().fold(r, |acc, x| acc.max(x.abs()));
            }
        }
        r
    }

    pub fn min_dce(&self) -> f64 {
        self.omega_dce.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_ind(&self) -> f64 {
        self.omega_ind
            .as_ref()
            .map_or(0.0, |w| w.iter().fold(0.0, |m, x| m.max(x.abs())))
    }
}

/// Per-atom contrasts that the weights multiply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contrasts {
    /// `nu(1,1,a) - nu(0,1,a)`; `mu(1,a) - mu(0,a)` in strong mode.
    pub dce: Vec<f64>,
    /// `nu(0,0,a) - nu(0,0,0)`.
    pub ind: Vec<f64>,
    /// `nu(0,1,a) - nu(0,0,a)`; zero in strong mode.
    pub sel: Vec<f64>,
}

impl Contrasts {
    pub fn of(dgp: &Dgp) -> Self {
        let out = dgp.outcome();
        let n = dgp.space().len();
        let z = dgp.space().zero_index();
        Contrasts {
            dce: (0..n).map(|i| out.nu(1, 1, i) - out.nu(0, 1, i)).collect(),
            ind: (0..n).map(|i| out.nu(0, 0, i) - out.nu(0, 0, z)).collect(),
            sel: (0..n).map(|i| out.nu(0, 1, i) - out.nu(0, 0, i)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub kind: EstimandKind,
    pub assumption: Assumption,
    /// The stratum, for per-atom saturated reports.
    pub atom: Option<Atom>,
    /// Value from the projection solver.
    pub estimand: f64,
    pub dce: f64,
    pub ind: f64,
    pub sel: f64,
    pub weights: WeightTable,
    pub contrasts: Contrasts,
    pub identity_residual: f64,
    pub ssp: Option<SspVerdict>,
}

impl DecompositionReport {
    fn assemble(
        dgp: &Dgp,
        kind: EstimandKind,
        atom: Option<Atom>,
        estimand: f64,
        weights: WeightTable,
    ) -> Self {
        let contrasts = Contrasts::of(dgp);
        let dot = |w: &[f64], c: &[f64]| w.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
        let dce = dot(&weights.omega_dce, &contrasts.dce);
        let ind = weights
            .omega_ind
            .as_ref()
            .map_or(0.0, |w| dot(w, &contrasts.ind));
        let sel = dot(&weights.omega_dce, &contrasts.sel);
        let ssp = match dgp.assumption() {
            Assumption::Strong if atom.is_none() => Some(SspVerdict::new(dgp, estimand)),
            _ => None,
        };
        DecompositionReport {
            kind,
            assumption: dgp.assumption(),
            atom,
            estimand,
            dce,
            ind,
            sel,
            identity_residual: (estimand - (dce + ind + sel)).abs(),
            weights,
            contrasts,
            ssp,
        }
    }

    /// `omega_dce(a) * dce_contrast(a)` per atom.
    pub fn dce_contributions(&self) -> Vec<f64> {
        product(&self.weights.omega_dce, &self.contrasts.dce)
    }

    pub fn ind_contributions(&self) -> Vec<f64> {
        match &self.weights.omega_ind {
            Some(w) => product(w, &self.contrasts.ind),
            None => vec![0.0; self.weights.atoms.len()],
        }
    }

    pub fn sel_contributions(&self) -> Vec<f64> {
        product(&self.weights.omega_dce, &self.contrasts.sel)
    }
}

fn product(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

fn delta_of(dgp: &Dgp, kind: RegressionKind) -> Result<f64> {
    Ok(project(dgp, kind)?
        .delta()
        .expect("regressions other than sat have a D coefficient"))
}

fn atoms_f64(dgp: &Dgp) -> Vec<Vec<f64>> {
    dgp.space().atoms().iter().map(Atom::as_f64).collect()
}

fn require_pd(value: f64, regression: &str) -> Result<()> {
    if value > SINGULAR_TOLERANCE {
        Ok(())
    } else {
        Err(Error::SingularDesign {
            regression: regression.into(),
            min_eigenvalue: value,
        })
    }
}

pub fn weights_short(dgp: &Dgp) -> WeightTable {
    let m = compute_moments(dgp);
    let ind = m.pi[1].iter().zip(&m.pi[0]).map(|(a, b)| a - b).collect();
    WeightTable::from_parts(
        EstimandKind::Short,
        dgp.space().atoms().to_vec(),
        m.pi[1].clone(),
        Some(ind),
        1.0,
        Vec::new(),
    )
}

pub fn decompose_short(dgp: &Dgp) -> Result<DecompositionReport> {
    let w = weights_short(dgp);
    let est = delta_of(dgp, RegressionKind::Short)?;
    Ok(DecompositionReport::assemble(dgp, EstimandKind::Short, None, est, w))
}

fn long_weights_from(dgp: &Dgp, m: &MomentSet) -> Result<WeightTable> {
    require_pd(m.min_eig_long, "long")?;
    let mv = long_m_vector(m)?;
    let atoms = atoms_f64(dgp);
    let p = m.p_treat;
    let denom = m.var_d - mv.iter().zip(&m.cov_da).map(|(a, b)| a * b).sum::<f64>();
    let mut dce = Vec::with_capacity(atoms.len());
    let mut ind = Vec::with_capacity(atoms.len());
    for (i, a) in atoms.iter().enumerate() {
        let proj: f64 = (0..m.k()).map(|j| mv[j] * (a[j] - m.mean_a[j])).sum();
        dce.push(m.pi[1][i] * (m.var_d - p * proj));
        ind.push(m.var_d * (m.pi[1][i] - m.pi[0][i]) - m.p_a[i] * proj);
    }
    Ok(WeightTable::from_parts(
        EstimandKind::Long,
        dgp.space().atoms().to_vec(),
        dce,
        Some(ind),
        denom,
        mv,
    ))
}

pub fn weights_long(dgp: &Dgp) -> Result<WeightTable> {
    long_weights_from(dgp, &compute_moments(dgp))
}

pub fn decompose_long(dgp: &Dgp) -> Result<DecompositionReport> {
    let w = weights_long(dgp)?;
    let est = delta_of(dgp, RegressionKind::Long)?;
    Ok(DecompositionReport::assemble(dgp, EstimandKind::Long, None, est, w))
}

fn inter_weights_from(dgp: &Dgp, m: &MomentSet) -> Result<WeightTable> {
    require_pd(m.min_eig_inter, "inter")?;
    let mv = inter_m_vector(m)?;
    let k = m.k();
    let atoms = atoms_f64(dgp);
    let p = m.p_treat;
    let s2 = m.var_d;
    let denom = s2 - mv.iter().zip(m.cov_wd.iter()).map(|(a, b)| a * b).sum::<f64>();
    let e1 = &m.mean_a_given_d1;
    let mut dce = Vec::with_capacity(atoms.len());
    let mut ind = Vec::with_capacity(atoms.len());
    for (i, a) in atoms.iter().enumerate() {
        let (pi1, pa) = (m.pi[1][i], m.p_a[i]);
        let mut d_acc = s2;
        let mut i_acc = s2 * (pi1 - m.pi[0][i]);
        for j in 0..k {
            let dev = a[j] - m.mean_a[j];
            d_acc -= p * mv[j] * dev + p * mv[j + k] * (a[j] - p * e1[j]);
            i_acc -= mv[j] * pa * dev + p * mv[j + k] * (pi1 * a[j] - pa * e1[j]);
        }
        dce.push(pi1 * d_acc);
        ind.push(i_acc);
    }
    Ok(WeightTable::from_parts(
        EstimandKind::Inter,
        dgp.space().atoms().to_vec(),
        dce,
        Some(ind),
        denom,
        mv,
    ))
}

pub fn weights_inter(dgp: &Dgp) -> Result<WeightTable> {
    inter_weights_from(dgp, &compute_moments(dgp))
}

pub fn decompose_inter(dgp: &Dgp) -> Result<DecompositionReport> {
    let w = weights_inter(dgp)?;
    let est = delta_of(dgp, RegressionKind::Inter)?;
    Ok(DecompositionReport::assemble(dgp, EstimandKind::Inter, None, est, w))
}

/// Weights proportional to `P{D=0|a} P{D=1|a} P{A=a}`, the share of the
/// within-stratum variance of `D` contributed by each atom.
pub fn weights_sfe(dgp: &Dgp) -> Result<WeightTable> {
    dgp.require_full_support()?;
    let law = dgp.law();
    let num: Vec<f64> = (0..dgp.space().len())
        .map(|i| {
            let (q0, q1) = (law.p(0, i), law.p(1, i));
            q0 * q1 / (q0 + q1)
        })
        .collect();
    let denom = num.iter().sum();
    Ok(WeightTable::from_parts(
        EstimandKind::Sfe,
        dgp.space().atoms().to_vec(),
        num,
        None,
        denom,
        Vec::new(),
    ))
}

pub fn decompose_sfe(dgp: &Dgp) -> Result<DecompositionReport> {
    let w = weights_sfe(dgp)?;
    let est = delta_of(dgp, RegressionKind::Sfe)?;
    Ok(DecompositionReport::assemble(dgp, EstimandKind::Sfe, None, est, w))
}

/// One report per atom; each carries the indicator weight of its stratum.
pub fn decompose_sat(dgp: &Dgp) -> Result<Vec<DecompositionReport>> {
    dgp.require_full_support()?;
    let fit = project(dgp, RegressionKind::Sat)?;
    let effects = fit.sat_effects();
    let atoms = dgp.space().atoms().to_vec();
    Ok(effects
        .into_iter()
        .enumerate()
        .map(|(i, est)| {
            let indicator: Vec<f64> = (0..atoms.len()).map(|s| f64::from(u8::from(s == i))).collect();
            let w = WeightTable::from_parts(
                EstimandKind::Sat,
                atoms.clone(),
                indicator,
                None,
                1.0,
                Vec::new(),
            );
            DecompositionReport::assemble(dgp, EstimandKind::Sat, Some(atoms[i].clone()), est, w)
        })
        .collect())
}

/// Decomposition of `Delta_inter + E[A] lambda` for a scalar action, the
/// interaction-regression effect evaluated at the mean action.
pub fn inter_star(dgp: &Dgp) -> Result<DecompositionReport> {
    if dgp.k() != 1 {
        return Err(Error::NotScalarAction { k: dgp.k() });
    }
    let m = compute_moments(dgp);
    let base = inter_weights_from(dgp, &m)?;
    let fit = project(dgp, RegressionKind::Inter)?;
    let ea = m.mean_a[0];
    let est = fit.delta().unwrap_or(0.0) + ea * fit.lambda(0).unwrap_or(0.0);

    let var_a = m.var_w[(0, 0)];
    let var_ad = m.var_w[(1, 1)];
    let cov_a_ad = m.var_w[(0, 1)];
    let cov_a_d = m.cov_wd[0];
    let cov_ad_d = m.cov_wd[1];
    let delta = var_ad * var_a - cov_a_ad * cov_a_ad;
    let scale = ea / delta;
    let psi = 1.0 + scale * (cov_a_ad * cov_a_d - var_a * cov_ad_d);
    let p = m.p_treat;
    let e1 = m.mean_a_given_d1[0];

    let base_ind = base.omega_ind.as_ref().expect("inter weights carry omega_ind");
    let mut dce = Vec::with_capacity(base.omega_dce.len());
    let mut ind = Vec::with_capacity(base.omega_dce.len());
    for (i, atom) in dgp.space().atoms().iter().enumerate() {
        let a = f64::from(atom.0[0]);
        let (pi1, pa) = (m.pi[1][i], m.p_a[i]);
        let dev = a - ea;
        dce.push(
            psi * base.omega_dce[i]
                + scale * (var_a * p * pi1 * (a - p * e1) - cov_a_ad * dev * pi1 * p),
        );
        ind.push(
            psi * base_ind[i] + scale * (var_a * p * (pi1 * a - pa * e1) - cov_a_ad * dev * pa),
        );
    }
    let den = base.denominator;
    let w = WeightTable::from_parts(
        EstimandKind::InterStar,
        dgp.space().atoms().to_vec(),
        dce.iter().map(|x| x * den).collect(),
        Some(ind.iter().map(|x| x * den).collect()),
        den,
        base.m_vector.clone(),
    );
    Ok(DecompositionReport::assemble(dgp, EstimandKind::InterStar, None, est, w))
}

/// Dispatch on kind. Saturated yields one report per atom, every other kind
/// exactly one.
pub fn decompose(dgp: &Dgp, kind: EstimandKind) -> Result<Vec<DecompositionReport>> {
    match kind {
        EstimandKind::Short => decompose_short(dgp).map(|r| vec![r]),
        EstimandKind::Long => decompose_long(dgp).map(|r| vec![r]),
        EstimandKind::Inter => decompose_inter(dgp).map(|r| vec![r]),
        EstimandKind::Sfe => decompose_sfe(dgp).map(|r| vec![r]),
        EstimandKind::Sat => decompose_sat(dgp),
        EstimandKind::InterStar => inter_star(dgp).map(|r| vec![r]),
    }
}

/// Weight table only, for sweeps.
pub fn weights(dgp: &Dgp, kind: EstimandKind) -> Result<WeightTable> {
    match kind {
        EstimandKind::Short => Ok(weights_short(dgp)),
        EstimandKind::Long => weights_long(dgp),
        EstimandKind::Inter => weights_inter(dgp),
        EstimandKind::Sfe => weights_sfe(dgp),
        EstimandKind::InterStar => inter_star(dgp).map(|r| r.weights),
        EstimandKind::Sat => Err(Error::Config(
            "the saturated regression has one indicator weight per atom; use decompose".into(),
        )),
    }
}

/// Mediation comparators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NaturalEffects {
    /// `zeta_bar(d) = sum_a (mu(1,a) - mu(0,a)) pi_d(a)`.
    pub zeta_bar: [f64; 2],
    /// `delta_bar(d) = sum_a (mu(d,a) - mu(d,0)) (pi_1(a) - pi_0(a))`.
    pub delta_bar: [f64; 2],
}

pub fn natural_effects(dgp: &Dgp) -> Result<NaturalEffects> {
    dgp.require_strong("natural effects")?;
    let m = compute_moments(dgp);
    let out = dgp.outcome();
    let z = dgp.space().zero_index();
    let n = dgp.space().len();
    let mut zeta = [0.0; 2];
    let mut delta = [0.0; 2];
    for i in 0..n {
        let contrast = out.mu(1, i) - out.mu(0, i);
        let shift = m.pi[1][i] - m.pi[0][i];
        for d in 0..2 {
            zeta[d] += contrast * m.pi[d][i];
            delta[d] += (out.mu(d, i) - out.mu(d, z)) * shift;
        }
    }
    Ok(NaturalEffects {
        zeta_bar: zeta,
        delta_bar: delta,
    })
}
