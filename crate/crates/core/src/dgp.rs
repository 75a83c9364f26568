//! Discrete data-generating processes for a binary treatment `D` and a vector
//! of post-treatment actions `A`.
//!
//! A [`Dgp`] bundles the joint law of `(D, A)` over an explicitly declared
//! support with the potential-outcome mean tables. Everything downstream
//! (moments, projections, decompositions) is an exact finite sum over the
//! cells `(d, a)` of that support.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a joint law.
pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

/// Tolerance used when checking that a supplied `nu` table agrees with `mu`
/// in strong mode.
pub const STRONG_MODE_TOLERANCE: f64 = 1e-12;

/// Default standard deviation of the additive outcome noise used by the
/// Monte Carlo harness.
pub const DEFAULT_NOISE_SD: f64 = 0.5;

/// One realization `a = (a_1, ..., a_K)` of the action vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Atom(pub Vec<u32>);

impl Atom {
    pub fn zero(k: usize) -> Self {
        Atom(vec![0; k])
    }

    pub fn values(&self) -> &[u32] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0)
    }

    /// Coordinates as floats, for moment computations.
    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&v| f64::from(v)).collect()
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// Which exogeneity assumption the outcome tables are interpreted under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Assumption {
    /// `D` independent of the pooled potential outcomes only. Selection terms
    /// are generally nonzero.
    Weak,
    /// `(D, A)` jointly independent of every `Y(d, a)`. Conditional means
    /// collapse to `mu`.
    Strong,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assumption::Weak => write!(f, "weak"),
            Assumption::Strong => write!(f, "strong"),
        }
    }
}

impl std::str::FromStr for Assumption {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weak" => Ok(Assumption::Weak),
            "strong" => Ok(Assumption::Strong),
            other => Err(Error::Config(format!(
                "unknown assumption `{other}` (expected weak or strong)"
            ))),
        }
    }
}

/// Per-coordinate supports plus the declared joint support of `A`.
///
/// Atoms are stored in lexicographic order, so the zero vector is always the
/// first atom.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpace {
    coords: Vec<Vec<u32>>,
    atoms: Vec<Atom>,
}

impl ActionSpace {
    /// Builds a space with an explicit joint support.
    pub fn new(coords: Vec<Vec<u32>>, atoms: Vec<Atom>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidActionSpace("K must be at least 1".into()));
        }
        let mut clean = Vec::with_capacity(coords.len());
        for (j, support) in coords.into_iter().enumerate() {
            let mut support = support;
            support.sort_unstable();
            let before = support.len();
            support.dedup();
            if support.len() != before {
                return Err(Error::InvalidActionSpace(format!(
                    "support of coordinate {} has duplicate values",
                    j + 1
                )));
            }
            if support.first() != Some(&0) {
                return Err(Error::InvalidActionSpace(format!(
                    "support of coordinate {} must contain 0",
                    j + 1
                )));
            }
            if support.len() == 2 && support != [0, 1] {
                return Err(Error::InvalidActionSpace(format!(
                    "two-point support of coordinate {} must be {{0,1}}, got {:?}",
                    j + 1,
                    support
                )));
            }
            clean.push(support);
        }

        if atoms.is_empty() {
            return Err(Error::InvalidActionSpace("joint support is empty".into()));
        }
        let k = clean.len();
        let mut seen = HashSet::with_capacity(atoms.len());
        for atom in &atoms {
            if atom.0.len() != k {
                return Err(Error::InvalidActionSpace(format!(
                    "atom {atom} has {} coordinates, expected {k}",
                    atom.0.len()
                )));
            }
            for (j, v) in atom.0.iter().enumerate() {
                if clean[j].binary_search(v).is_err() {
                    return Err(Error::InvalidActionSpace(format!(
                        "atom {atom} has coordinate {} = {v} outside its support",
                        j + 1
                    )));
                }
            }
            if !seen.insert(atom.clone()) {
                return Err(Error::InvalidActionSpace(format!("duplicate atom {atom}")));
            }
        }
        let mut atoms = atoms;
        atoms.sort();
        if !atoms[0].is_zero() {
            return Err(Error::InvalidActionSpace(
                "joint support must contain the zero vector".into(),
            ));
        }
        Ok(ActionSpace {
            coords: clean,
            atoms,
        })
    }

    /// Joint support equal to the full Cartesian product of `coords`.
    pub fn product(coords: Vec<Vec<u32>>) -> Result<Self> {
        let mut atoms = vec![Vec::new()];
        for support in &coords {
            let mut next = Vec::with_capacity(atoms.len() * support.len().max(1));
            for prefix in &atoms {
                for &v in support {
                    let mut a = prefix.clone();
                    a.push(v);
                    next.push(a);
                }
            }
            atoms = next;
        }
        ActionSpace::new(coords, atoms.into_iter().map(Atom).collect())
    }

    /// `K` binary actions with at most one of them equal to one: the zero
    /// vector plus the `K` canonical vectors.
    pub fn mutually_exclusive(k: usize) -> Result<Self> {
        let mut atoms = vec![Atom::zero(k)];
        for j in 0..k {
            let mut a = vec![0; k];
            a[j] = 1;
            atoms.push(Atom(a));
        }
        ActionSpace::new(vec![vec![0, 1]; k], atoms)
    }

    /// Number of action coordinates `K`.
    pub fn k(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[Vec<u32>] {
        &self.coords
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn index_of(&self, atom: &[u32]) -> Option<usize> {
        self.atoms.binary_search_by(|a| a.0.as_slice().cmp(atom)).ok()
    }

    /// Index of the zero vector (always 0 given lexicographic storage).
    pub fn zero_index(&self) -> usize {
        0
    }

    /// True iff every coordinate is binary and no atom has two nonzero
    /// coordinates.
    pub fn is_mutually_exclusive_binary(&self) -> bool {
        self.coords.iter().all(|s| s == &[0, 1])
            && self
                .atoms
                .iter()
                .all(|a| a.0.iter().filter(|&&v| v != 0).count() <= 1)
    }
}

/// See [`ActionSpace::is_mutually_exclusive_binary`].
pub fn mutually_exclusive_binary(space: &ActionSpace) -> bool {
    space.is_mutually_exclusive_binary()
}

/// A table indexed by treatment arm `d` and atom index.
pub type ArmTable = [Vec<f64>; 2];

/// Joint law `P{D = d, A = a}` over a declared support.
#[derive(Debug, Clone, PartialEq)]
pub struct JointLaw {
    space: ActionSpace,
    cells: ArmTable,
    full_support: bool,
}

impl JointLaw {
    /// Validates a joint probability table. With `full_support` every cell
    /// must be strictly positive, the precondition of every decomposition.
    pub fn new(space: ActionSpace, cells: ArmTable, full_support: bool) -> Result<Self> {
        let n = space.len();
        for (d, arm) in cells.iter().enumerate() {
            if arm.len() != n {
                return Err(Error::MissingTableEntry {
                    table: "joint_law".into(),
                    cell: format!("D={d}: expected {n} entries, got {}", arm.len()),
                });
            }
        }
        let mut sum = 0.0;
        for (d, arm) in cells.iter().enumerate() {
            for (i, &v) in arm.iter().enumerate() {
                let atom = space.atoms()[i].to_string();
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::NegativeProbability {
                        d: d as u8,
                        atom,
                        value: v,
                    });
                }
                if full_support && v <= 0.0 {
                    return Err(Error::NonPositiveCell {
                        d: d as u8,
                        atom,
                        value: v,
                    });
                }
                sum += v;
            }
        }
        if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
            return Err(Error::ProbabilitySum { sum });
        }
        for d in 0..2 {
            if cells[d].iter().all(|&v| v == 0.0) {
                return Err(Error::NonPositiveCell {
                    d: d as u8,
                    atom: "every atom".into(),
                    value: 0.0,
                });
            }
        }
        Ok(JointLaw {
            space,
            cells,
            full_support,
        })
    }

    /// Law built from `P{D=1}` and the arm conditionals `pi_d(a)`.
    pub fn from_conditionals(
        space: ActionSpace,
        p_treat: f64,
        conditionals: &ArmTable,
        full_support: bool,
    ) -> Result<Self> {
        if !(p_treat > 0.0 && p_treat < 1.0) {
            return Err(Error::Config(format!(
                "p_treat must lie in (0, 1), got {p_treat}"
            )));
        }
        let cells = [
            conditionals[0].iter().map(|&q| q * (1.0 - p_treat)).collect(),
            conditionals[1].iter().map(|&q| q * p_treat).collect(),
        ];
        JointLaw::new(space, cells, full_support)
    }

    pub fn space(&self) -> &ActionSpace {
        &self.space
    }

    pub fn cells(&self) -> &ArmTable {
        &self.cells
    }

    /// `P{D = d, A = atoms[i]}`.
    pub fn p(&self, d: usize, i: usize) -> f64 {
        self.cells[d][i]
    }

    pub fn full_support(&self) -> bool {
        self.full_support
    }

    /// True if every cell has positive mass, whatever mode the law was built in.
    pub fn has_full_support(&self) -> bool {
        self.cells.iter().flatten().all(|&v| v > 0.0)
    }

    /// Iterator over `(d, atom index, probability)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..2).flat_map(move |d| self.cells[d].iter().enumerate().map(move |(i, &p)| (d, i, p)))
    }
}

/// Potential-outcome mean tables.
///
/// `nu[d_potential][d_observed][i]` is `E[Y(d_potential, a) | D = d_observed, A = a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeModel {
    mu: ArmTable,
    nu: [ArmTable; 2],
    noise_sd: ArmTable,
}

impl OutcomeModel {
    pub fn mu(&self, d: usize, i: usize) -> f64 {
        self.mu[d][i]
    }

    pub fn nu(&self, d_potential: usize, d_observed: usize, i: usize) -> f64 {
        self.nu[d_potential][d_observed][i]
    }

    /// Observed conditional mean `E[Y | D = d, A = a] = nu(d, d, a)`.
    pub fn observed_mean(&self, d: usize, i: usize) -> f64 {
        self.nu[d][d][i]
    }

    pub fn noise_sd(&self, d: usize, i: usize) -> f64 {
        self.noise_sd[d][i]
    }

    pub fn mu_table(&self) -> &ArmTable {
        &self.mu
    }

    pub fn nu_table(&self) -> &[ArmTable; 2] {
        &self.nu
    }

    pub fn noise_table(&self) -> &ArmTable {
        &self.noise_sd
    }
}

/// Fully specified discrete data-generating process.
#[derive(Debug, Clone, PartialEq)]
pub struct Dgp {
    law: JointLaw,
    outcome: OutcomeModel,
    assumption: Assumption,
}

impl Dgp {
    /// Validates outcome tables against the law's support.
    ///
    /// When `nu` is omitted it is filled from `mu`, so that
    /// `nu(d', d, a) = mu(d', a)`. In strong mode a supplied `nu` must match
    /// `mu` within [`STRONG_MODE_TOLERANCE`], and is then replaced by `mu`
    /// exactly.
    pub fn new(
        law: JointLaw,
        mu: ArmTable,
        nu: Option<[ArmTable; 2]>,
        noise_sd: Option<ArmTable>,
        assumption: Assumption,
    ) -> Result<Self> {
        let space = law.space();
        let n = space.len();
        check_table("mu", &mu, n)?;
        let nu = match nu {
            None => [
                [mu[0].clone(), mu[0].clone()],
                [mu[1].clone(), mu[1].clone()],
            ],
            Some(nu) => {
                for (dp, t) in nu.iter().enumerate() {
                    check_table(&format!("nu(d'={dp})"), t, n)?;
                }
                if assumption == Assumption::Strong {
                    for dp in 0..2 {
                        for d in 0..2 {
                            for i in 0..n {
                                let gap = (nu[dp][d][i] - mu[dp][i]).abs();
                                if gap > STRONG_MODE_TOLERANCE {
                                    return Err(Error::StrongModeInconsistency {
                                        cell: format!(
                                            "d'={dp}, d={d}, a={}",
                                            space.atoms()[i]
                                        ),
                                        gap,
                                    });
                                }
                            }
                        }
                    }
                    [
                        [mu[0].clone(), mu[0].clone()],
                        [mu[1].clone(), mu[1].clone()],
                    ]
                } else {
                    nu
                }
            }
        };
        let noise_sd = match noise_sd {
            Some(t) => {
                check_table("noise_sd", &t, n)?;
                for (d, arm) in t.iter().enumerate() {
                    for (i, &v) in arm.iter().enumerate() {
                        if v < 0.0 {
                            return Err(Error::InvalidValue {
                                table: "noise_sd".into(),
                                cell: format!("d={d}, a={}", space.atoms()[i]),
                                reason: "standard deviation must be non-negative".into(),
                            });
                        }
                    }
                }
                t
            }
            None => [vec![DEFAULT_NOISE_SD; n], vec![DEFAULT_NOISE_SD; n]],
        };
        Ok(Dgp {
            law,
            outcome: OutcomeModel { mu, nu, noise_sd },
            assumption,
        })
    }

    pub fn law(&self) -> &JointLaw {
        &self.law
    }

    pub fn space(&self) -> &ActionSpace {
        self.law.space()
    }

    pub fn outcome(&self) -> &OutcomeModel {
        &self.outcome
    }

    pub fn assumption(&self) -> Assumption {
        self.assumption
    }

    pub fn k(&self) -> usize {
        self.space().k()
    }

    /// Same law and outcomes, reinterpreted under another assumption.
    ///
    /// Switching to strong mode discards any selection encoded in `nu`.
    pub fn with_assumption(&self, assumption: Assumption) -> Result<Self> {
        let nu = match assumption {
            Assumption::Weak => Some(self.outcome.nu.clone()),
            Assumption::Strong => None,
        };
        Dgp::new(
            self.law.clone(),
            self.outcome.mu.clone(),
            nu,
            Some(self.outcome.noise_sd.clone()),
            assumption,
        )
    }

    /// Same outcome tables on a new joint law over the same support.
    pub fn with_law(&self, law: JointLaw) -> Result<Self> {
        if law.space() != self.space() {
            return Err(Error::Config("replacement law has a different support".into()));
        }
        let nu = match self.assumption {
            Assumption::Weak => Some(self.outcome.nu.clone()),
            Assumption::Strong => None,
        };
        Dgp::new(
            law,
            self.outcome.mu.clone(),
            nu,
            Some(self.outcome.noise_sd.clone()),
            self.assumption,
        )
    }

    /// Rejects laws with empty cells for operations that divide by arm or
    /// stratum probabilities.
    pub fn require_full_support(&self) -> Result<()> {
        for (d, i, p) in self.law.iter() {
            if p <= 0.0 {
                return Err(Error::NonPositiveCell {
                    d: d as u8,
                    atom: self.space().atoms()[i].to_string(),
                    value: p,
                });
            }
        }
        Ok(())
    }

    pub fn require_strong(&self, operation: &str) -> Result<()> {
        match self.assumption {
            Assumption::Strong => Ok(()),
            Assumption::Weak => Err(Error::WeakModeUnsupported {
                operation: operation.into(),
            }),
        }
    }
}

fn check_table(name: &str, table: &ArmTable, n: usize) -> Result<()> {
    for (d, arm) in table.iter().enumerate() {
        if arm.len() != n {
            return Err(Error::MissingTableEntry {
                table: name.into(),
                cell: format!("d={d}: expected {n} entries, got {}", arm.len()),
            });
        }
        if let Some(i) = arm.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidValue {
                table: name.into(),
                cell: format!("d={d}, index {i}"),
                reason: "value is not finite".into(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary_pair() -> ActionSpace {
        ActionSpace::product(vec![vec![0, 1], vec![0, 1]]).unwrap()
    }

    #[test]
    fn product_space_is_lexicographic_with_zero_first() {
        let s = binary_pair();
        let atoms: Vec<_> = s.atoms().iter().map(|a| a.0.clone()).collect();
        assert_eq!(atoms, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
        assert_eq!(s.index_of(&[1, 0]), Some(2));
        assert_eq!(s.index_of(&[2, 0]), None);
    }

    #[test]
    fn space_rejects_bad_supports() {
        assert!(ActionSpace::product(vec![vec![1, 2]]).is_err());
        assert!(ActionSpace::product(vec![vec![0, 2]]).is_err());
        assert!(ActionSpace::new(vec![vec![0, 1]], vec![Atom(vec![1])]).is_err());
        assert!(ActionSpace::new(
            vec![vec![0, 1]],
            vec![Atom(vec![0]), Atom(vec![1]), Atom(vec![1])]
        )
        .is_err());
        assert!(ActionSpace::new(vec![vec![0, 1]], vec![Atom(vec![0]), Atom(vec![3])]).is_err());
    }

    #[test]
    fn mutually_exclusive_detection() {
        let me = ActionSpace::new(
            vec![vec![0, 1], vec![0, 1]],
            vec![Atom(vec![0, 0]), Atom(vec![1, 0]), Atom(vec![0, 1])],
        )
        .unwrap();
        assert!(mutually_exclusive_binary(&me));
        assert!(!mutually_exclusive_binary(&binary_pair()));
        let ternary = ActionSpace::product(vec![vec![0, 1, 2]]).unwrap();
        assert!(!mutually_exclusive_binary(&ternary));
        assert!(mutually_exclusive_binary(&ActionSpace::mutually_exclusive(3).unwrap()));
    }

    #[test]
    fn zero_cell_rejected_in_full_support_mode() {
        let s = ActionSpace::product(vec![vec![0, 1]]).unwrap();
        let cells = [vec![0.5, 0.0], vec![0.25, 0.25]];
        let err = JointLaw::new(s.clone(), cells.clone(), true).unwrap_err();
        assert!(matches!(err, Error::NonPositiveCell { d: 0, .. }));
        assert!(JointLaw::new(s, cells, false).is_ok());
    }

    #[test]
    fn probability_sum_checked() {
        let s = ActionSpace::product(vec![vec![0, 1]]).unwrap();
        let err = JointLaw::new(s, [vec![0.3, 0.2], vec![0.2, 0.2]], true).unwrap_err();
        assert!(matches!(err, Error::ProbabilitySum { .. }));
    }

    #[test]
    fn strong_mode_rejects_inconsistent_nu_and_fills_missing_nu() {
        let s = ActionSpace::product(vec![vec![0, 1]]).unwrap();
        let law = JointLaw::new(s, [vec![0.25, 0.25], vec![0.25, 0.25]], true).unwrap();
        let mu = [vec![0.0, 1.0], vec![2.0, 3.0]];
        let mut nu = [
            [mu[0].clone(), mu[0].clone()],
            [mu[1].clone(), mu[1].clone()],
        ];
        nu[0][1][0] += 0.5;
        let err = Dgp::new(law.clone(), mu.clone(), Some(nu.clone()), None, Assumption::Strong)
            .unwrap_err();
        assert!(matches!(err, Error::StrongModeInconsistency { .. }));

        let weak = Dgp::new(law.clone(), mu.clone(), Some(nu), None, Assumption::Weak).unwrap();
        assert_eq!(weak.outcome().nu(0, 1, 0), 0.5);

        let strong = Dgp::new(law, mu, None, None, Assumption::Strong).unwrap();
        for dp in 0..2 {
            for d in 0..2 {
                for i in 0..2 {
                    assert_eq!(strong.outcome().nu(dp, d, i), strong.outcome().mu(dp, i));
                }
            }
        }
        assert_eq!(strong.outcome().noise_sd(1, 1), DEFAULT_NOISE_SD);
    }

    #[test]
    fn short_tables_report_missing_entries() {
        let s = ActionSpace::product(vec![vec![0, 1]]).unwrap();
        let law = JointLaw::new(s, [vec![0.25, 0.25], vec![0.25, 0.25]], true).unwrap();
        let err = Dgp::new(law, [vec![0.0], vec![1.0, 2.0]], None, None, Assumption::Strong)
            .unwrap_err();
        assert!(matches!(err, Error::MissingTableEntry { .. }));
    }
}
