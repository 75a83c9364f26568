//! JSON configuration for a [`Dgp`].
//!
//! ```json
//! {
//!   "name": "example",
//!   "actions": [{"binomial": {"n": 3, "pi_d0": 0.2, "pi_d1": 0.8}}],
//!   "p_treat": "4/5",
//!   "mu": {"affine": {"intercept": 0.0, "treat": 1.0, "actions": [0.5]}},
//!   "assumption": "strong"
//! }
//! ```
//!
//! Each entry of `actions` is a support list such as `[0, 1, 2]`, a
//! `binomial` shorthand or a `bernoulli` shorthand. The law is either
//! `joint_law` (explicit `{d, a, p}` rows), `conditional_law` with
//! `p_treat`, or, when every coordinate uses a shorthand, `p_treat` alone;
//! coordinates are then independent given `D`. Probabilities accept numbers
//! or `"a/b"` strings.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dgp::{ActionSpace, ArmTable, Assumption, Atom, Dgp, JointLaw, DEFAULT_NOISE_SD};
use crate::error::{Error, Result};

/// A probability written as a number or as an `"a/b"` string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Prob {
    Num(f64),
    Text(String),
}

impl Prob {
    pub fn value(&self) -> Result<f64> {
        match self {
            Prob::Num(x) => Ok(*x),
            Prob::Text(s) => {
                let bad = || Error::Config(format!("cannot parse probability `{s}`"));
                match s.split_once('/') {
                    Some((a, b)) => {
                        let a: f64 = a.trim().parse().map_err(|_| bad())?;
                        let b: f64 = b.trim().parse().map_err(|_| bad())?;
                        if b == 0.0 {
                            return Err(bad());
                        }
                        Ok(a / b)
                    }
                    None => s.trim().parse().map_err(|_| bad()),
                }
            }
        }
    }
}

impl From<f64> for Prob {
    fn from(x: f64) -> Self {
        Prob::Num(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinomialSpec {
    pub n: u32,
    pub pi_d0: Prob,
    pub pi_d1: Prob,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BernoulliSpec {
    pub pi_d0: Prob,
    pub pi_d1: Prob,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ActionSpec {
    Support(Vec<u32>),
    Binomial { binomial: BinomialSpec },
    Bernoulli { bernoulli: BernoulliSpec },
}

impl ActionSpec {
    fn support(&self) -> Vec<u32> {
        match self {
            ActionSpec::Support(s) => s.clone(),
            ActionSpec::Binomial { binomial } => (0..=binomial.n).collect(),
            ActionSpec::Bernoulli { .. } => vec![0, 1],
        }
    }

    /// Marginal pmf over the support for each arm, if this is a shorthand.
    fn pmf(&self) -> Result<Option<[Vec<f64>; 2]>> {
        let check = |q: f64| {
            if (0.0..=1.0).contains(&q) {
                Ok(q)
            } else {
                Err(Error::Config(format!("success probability {q} outside [0, 1]")))
            }
        };
        match self {
            ActionSpec::Support(_) => Ok(None),
            ActionSpec::Binomial { binomial: b } => Ok(Some([
                binomial_pmf(b.n, check(b.pi_d0.value()?)?),
                binomial_pmf(b.n, check(b.pi_d1.value()?)?),
            ])),
            ActionSpec::Bernoulli { bernoulli: b } => {
                let (q0, q1) = (check(b.pi_d0.value()?)?, check(b.pi_d1.value()?)?);
                Ok(Some([vec![1.0 - q0, q0], vec![1.0 - q1, q1]]))
            }
        }
    }
}

/// `P{X = k}` for `X ~ Bi(n, q)`, `k = 0..=n`.
pub fn binomial_pmf(n: u32, q: f64) -> Vec<f64> {
    let mut coef = 1.0;
    (0..=n)
        .map(|k| {
            if k > 0 {
                coef = coef * f64::from(n - k + 1) / f64::from(k);
            }
            coef * q.powi(k as i32) * (1.0 - q).powi((n - k) as i32)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointEntry {
    pub d: u8,
    pub a: Vec<u32>,
    pub p: Prob,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CondEntry {
    pub a: Vec<u32>,
    pub p: Prob,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionalLaw {
    pub d0: Vec<CondEntry>,
    pub d1: Vec<CondEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueEntry {
    pub d: u8,
    pub a: Vec<u32>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NuEntry {
    pub d_potential: u8,
    pub d: u8,
    pub a: Vec<u32>,
    pub value: f64,
}

/// `mu(d, a) = intercept + treat d + actions' a + interaction' a d`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineMu {
    #[serde(default)]
    pub intercept: f64,
    #[serde(default)]
    pub treat: f64,
    #[serde(default)]
    pub actions: Vec<f64>,
    #[serde(default)]
    pub interaction: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MuSpec {
    Table(Vec<ValueEntry>),
    Affine(AffineMu),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseSpec {
    Uniform(f64),
    Table(Vec<ValueEntry>),
}

fn default_true() -> bool {
    true
}

fn default_assumption() -> Assumption {
    Assumption::Strong
}

fn is_true(b: &bool) -> bool {
    *b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub actions: Vec<ActionSpec>,
    /// Explicit joint support; defaults to the Cartesian product.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<Vec<Vec<u32>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_treat: Option<Prob>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint_law: Option<Vec<JointEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditional_law: Option<ConditionalLaw>,
    pub mu: MuSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<Vec<NuEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sd: Option<NoiseSpec>,
    #[serde(default = "default_assumption")]
    pub assumption: Assumption,
    #[serde(default = "default_true", skip_serializing_if = "is_true")]
    pub full_support: bool,
}

/// The law in the form it was given, so that a sweep over `P{D=1}` reuses
/// the arm conditionals untouched.
#[derive(Debug, Clone, PartialEq)]
pub enum LawSpec {
    Joint(ArmTable),
    Conditional { p_treat: f64, pi: ArmTable },
}

fn atom_label(a: &[u32]) -> String {
    Atom(a.to_vec()).to_string()
}

/// Collects sparse `(key, atom) -> value` rows into dense arm tables.
struct TableFiller<'a> {
    space: &'a ActionSpace,
    name: &'a str,
}

impl TableFiller<'_> {
    fn index(&self, a: &[u32], cell: impl Fn() -> String) -> Result<usize> {
        self.space
            .index_of(a)
            .ok_or_else(|| Error::UnknownTableEntry {
                table: self.name.into(),
                cell: cell(),
            })
    }

    fn fill<I>(&self, slots: usize, entries: I) -> Result<Vec<Vec<f64>>>
    where
        I: IntoIterator<Item = (usize, Vec<u32>, Result<f64>)>,
    {
        let n = self.space.len();
        let mut out: Vec<Vec<Option<f64>>> = vec![vec![None; n]; slots];
        for (slot, a, v) in entries {
            let label = || format!("slot {slot}, a={}", atom_label(&a));
            if slot >= slots {
                return Err(Error::UnknownTableEntry {
                    table: self.name.into(),
                    cell: label(),
                });
            }
            let i = self.index(&a, label)?;
            if out[slot][i].is_some() {
                return Err(Error::InvalidValue {
                    table: self.name.into(),
                    cell: label(),
                    reason: "duplicate entry".into(),
                });
            }
            out[slot][i] = Some(v?);
        }
        out.into_iter()
            .enumerate()
            .map(|(slot, row)| {
                row.into_iter()
                    .enumerate()
                    .map(|(i, v)| {
                        v.ok_or_else(|| Error::MissingTableEntry {
                            table: self.name.into(),
                            cell: format!("slot {slot}, a={}", self.space.atoms()[i]),
                        })
                    })
                    .collect()
            })
            .collect()
    }
}

fn arm_pair(mut v: Vec<Vec<f64>>) -> ArmTable {
    let b = v.pop().expect("two arms");
    let a = v.pop().expect("two arms");
    [a, b]
}

impl DgpConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        DgpConfig::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn space(&self) -> Result<ActionSpace> {
        let coords: Vec<Vec<u32>> = self.actions.iter().map(ActionSpec::support).collect();
        match &self.support {
            Some(atoms) => ActionSpace::new(coords, atoms.iter().cloned().map(Atom).collect()),
            None => ActionSpace::product(coords),
        }
    }

    pub fn law_spec(&self, space: &ActionSpace) -> Result<LawSpec> {
        let p_treat = self.p_treat.as_ref().map(Prob::value).transpose()?;
        match (&self.joint_law, &self.conditional_law, p_treat) {
            (Some(_), Some(_), _) => Err(Error::Config(
                "give either joint_law or conditional_law, not both".into(),
            )),
            (Some(_), None, Some(_)) => Err(Error::Config(
                "p_treat is implied by joint_law and must not be given with it".into(),
            )),
            (Some(rows), None, None) => {
                let filler = TableFiller { space, name: "joint_law" };
                let t = filler.fill(
                    2,
                    rows.iter()
                        .map(|r| (usize::from(r.d), r.a.clone(), r.p.value())),
                )?;
                Ok(LawSpec::Joint(arm_pair(t)))
            }
            (None, _, None) => Err(Error::Config(
                "p_treat is required unless joint_law is given".into(),
            )),
            (None, Some(cond), Some(p)) => {
                let filler = TableFiller { space, name: "conditional_law" };
                let rows = cond
                    .d0
                    .iter()
                    .map(|r| (0, r.a.clone(), r.p.value()))
                    .chain(cond.d1.iter().map(|r| (1, r.a.clone(), r.p.value())));
                Ok(LawSpec::Conditional {
                    p_treat: p,
                    pi: arm_pair(filler.fill(2, rows)?),
                })
            }
            (None, None, Some(p)) => {
                let pmfs: Vec<[Vec<f64>; 2]> = self
                    .actions
                    .iter()
                    .map(|a| {
                        a.pmf()?.ok_or_else(|| {
                            Error::Config(
                                "without joint_law or conditional_law every action needs a binomial or bernoulli shorthand".into(),
                            )
                        })
                    })
                    .collect::<Result<_>>()?;
                let pi = [0, 1].map(|d| {
                    space
                        .atoms()
                        .iter()
                        .map(|atom| {
                            atom.0
                                .iter()
                                .zip(&pmfs)
                                .map(|(&v, pmf)| pmf[d][v as usize])
                                .product()
                        })
                        .collect()
                });
                Ok(LawSpec::Conditional { p_treat: p, pi })
            }
        }
    }

    /// Builds the DGP from the configured law.
    pub fn build(&self) -> Result<Dgp> {
        self.build_inner(None)
    }

    /// Same DGP with `P{D=1}` replaced by `p_treat`, keeping the arm
    /// conditionals fixed.
    pub fn build_with_p_treat(&self, p_treat: f64) -> Result<Dgp> {
        self.build_inner(Some(p_treat))
    }

    fn build_inner(&self, p_override: Option<f64>) -> Result<Dgp> {
        let space = self.space()?;
        let law = match (self.law_spec(&space)?, p_override) {
            (LawSpec::Joint(cells), None) => JointLaw::new(space.clone(), cells, self.full_support)?,
            (LawSpec::Joint(cells), Some(p)) => {
                let pi = cells.map(|arm| {
                    let m: f64 = arm.iter().sum();
                    arm.iter().map(|x| x / m).collect()
                });
                JointLaw::from_conditionals(space.clone(), p, &pi, self.full_support)?
            }
            (LawSpec::Conditional { p_treat, pi }, p) => JointLaw::from_conditionals(
                space.clone(),
                p.unwrap_or(p_treat),
                &pi,
                self.full_support,
            )?,
        };
        let n = space.len();

        let mu = match &self.mu {
            MuSpec::Table(rows) => {
                let filler = TableFiller { space: &space, name: "mu" };
                arm_pair(filler.fill(
                    2,
                    rows.iter().map(|r| (usize::from(r.d), r.a.clone(), Ok(r.value))),
                )?)
            }
            MuSpec::Affine(f) => {
                let k = space.k();
                let pad = |v: &Vec<f64>, what: &str| -> Result<Vec<f64>> {
                    match v.len() {
                        0 => Ok(vec![0.0; k]),
                        l if l == k => Ok(v.clone()),
                        l => Err(Error::Config(format!(
                            "affine mu `{what}` has {l} coefficients, expected {k}"
                        ))),
                    }
                };
                let (ca, ci) = (pad(&f.actions, "actions")?, pad(&f.interaction, "interaction")?);
                [0usize, 1].map(|d| {
                    space
                        .atoms()
                        .iter()
                        .map(|atom| {
                            let a = atom.as_f64();
                            let df = d as f64;
                            f.intercept
                                + f.treat * df
                                + a.iter()
                                    .zip(&ca)
                                    .zip(&ci)
                                    .map(|((x, b), g)| b * x + g * x * df)
                                    .sum::<f64>()
                        })
                        .collect()
                })
            }
        };

        let nu = match &self.nu {
            None => None,
            Some(rows) => {
                let filler = TableFiller { space: &space, name: "nu" };
                let flat = filler.fill(
                    4,
                    rows.iter().map(|r| {
                        let slot = if r.d_potential > 1 || r.d > 1 {
                            usize::MAX
                        } else {
                            2 * usize::from(r.d_potential) + usize::from(r.d)
                        };
                        (slot, r.a.clone(), Ok(r.value))
                    }),
                )?;
                let mut it = flat.into_iter();
                let mut next = || it.next().expect("four slots");
                Some([[next(), next()], [next(), next()]])
            }
        };

        let noise = match &self.noise_sd {
            None => None,
            Some(NoiseSpec::Uniform(s)) => Some([vec![*s; n], vec![*s; n]]),
            Some(NoiseSpec::Table(rows)) => {
                let filler = TableFiller { space: &space, name: "noise_sd" };
                Some(arm_pair(filler.fill(
                    2,
                    rows.iter().map(|r| (usize::from(r.d), r.a.clone(), Ok(r.value))),
                )?))
            }
        };
        Dgp::new(law, mu, nu, noise, self.assumption)
    }

    /// Explicit-table config reproducing `dgp` exactly.
    pub fn from_dgp(dgp: &Dgp, name: Option<String>) -> Self {
        let space = dgp.space();
        let atoms = space.atoms();
        let law = dgp.law();
        let out = dgp.outcome();
        let cells = |t: &ArmTable| -> Vec<ValueEntry> {
            (0..2)
                .flat_map(|d| {
                    atoms.iter().enumerate().map(move |(i, a)| ValueEntry {
                        d: d as u8,
                        a: a.0.clone(),
                        value: t[d][i],
                    })
                })
                .collect()
        };
        let joint = law
            .iter()
            .map(|(d, i, p)| JointEntry {
                d: d as u8,
                a: atoms[i].0.clone(),
                p: Prob::Num(p),
            })
            .collect();
        let nu = match dgp.assumption() {
            Assumption::Strong => None,
            Assumption::Weak => {
                let nu = out.nu_table();
                Some(
                    (0..2)
                        .flat_map(|dp| {
                            (0..2).flat_map(move |d| {
                                atoms.iter().enumerate().map(move |(i, a)| NuEntry {
                                    d_potential: dp as u8,
                                    d: d as u8,
                                    a: a.0.clone(),
                                    value: nu[dp][d][i],
                                })
                            })
                        })
                        .collect(),
                )
            }
        };
        let noise = out.noise_table();
        let first = noise[0][0];
        let noise_sd = if noise.iter().flatten().all(|&s| s == first) {
            (first != DEFAULT_NOISE_SD).then_some(NoiseSpec::Uniform(first))
        } else {
            Some(NoiseSpec::Table(cells(noise)))
        };
        let product = ActionSpace::product(space.coords().to_vec()).ok();
        DgpConfig {
            name,
            description: None,
            actions: space.coords().iter().cloned().map(ActionSpec::Support).collect(),
            support: (product.as_ref() != Some(space))
                .then(|| atoms.iter().map(|a| a.0.clone()).collect()),
            p_treat: None,
            joint_law: Some(joint),
            conditional_law: None,
            mu: MuSpec::Table(cells(out.mu_table())),
            nu,
            noise_sd,
            assumption: dgp.assumption(),
            full_support: law.full_support(),
        }
    }
}

pub fn load_dgp(path: &Path) -> Result<Dgp> {
    DgpConfig::from_path(path)?.build()
}

/// Expected values shipped next to a fixture config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expectations {
    #[serde(default)]
    pub description: Option<String>,
    /// Keyed by estimand kind name.
    pub weights: BTreeMap<String, ExpectedWeights>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedWeights {
    /// Omitted atoms are unchecked.
    #[serde(default)]
    pub omega_dce: HashMap<String, f64>,
    #[serde(default)]
    pub omega_ind: HashMap<String, f64>,
    pub tolerance: f64,
}

impl Expectations {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG: &str = r#"{
        "actions": [{"binomial": {"n": 3, "pi_d0": "1/5", "pi_d1": 0.8}}],
        "p_treat": 0.8,
        "mu": {"affine": {"treat": 1.0}}
    }"#;

    #[test]
    fn binomial_shorthand_expands() {
        let g = DgpConfig::from_json_str(FIG).unwrap().build().unwrap();
        assert_eq!(g.space().len(), 4);
        assert!((g.law().p(1, 3) - 0.8 * 0.512).abs() < 1e-15);
        assert!((g.law().p(0, 0) - 0.2 * 0.512).abs() < 1e-15);
        assert_eq!(g.outcome().mu(1, 2), 1.0);
    }

    #[test]
    fn fractions_parse() {
        assert_eq!(Prob::Text("3/4".into()).value().unwrap(), 0.75);
        assert_eq!(Prob::Text(" 0.5 ".into()).value().unwrap(), 0.5);
        assert!(Prob::Text("1/0".into()).value().is_err());
        assert!(Prob::Text("half".into()).value().is_err());
    }

    #[test]
    fn sweep_replaces_only_p() {
        let c = DgpConfig::from_json_str(FIG).unwrap();
        let g = c.build_with_p_treat(0.3).unwrap();
        let m: f64 = g.law().cells()[1].iter().sum();
        assert!((m - 0.3).abs() < 1e-15);
        let again = c.build_with_p_treat(0.8).unwrap();
        assert_eq!(again, c.build().unwrap());
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = DgpConfig::from_json_str(FIG).unwrap();
        let g = c.build().unwrap().with_assumption(Assumption::Weak).unwrap();
        let text = DgpConfig::from_dgp(&g, Some("rt".into())).to_json_pretty();
        let back = DgpConfig::from_json_str(&text).unwrap().build().unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn missing_and_unknown_cells() {
        let missing = r#"{"actions": [[0, 1]], "p_treat": 0.5,
            "conditional_law": {"d0": [{"a": [0], "p": 0.5}, {"a": [1], "p": 0.5}],
                                "d1": [{"a": [0], "p": 1}]},
            "mu": {"affine": {}}}"#;
        let err = DgpConfig::from_json_str(missing).unwrap().build().unwrap_err();
        assert!(matches!(err, Error::MissingTableEntry { .. }), "{err}");

        let unknown = missing.replace(r#"{"a": [0], "p": 1}"#, r#"{"a": [0], "p": 0.5}, {"a": [2], "p": 0.5}"#);
        let err = DgpConfig::from_json_str(&unknown).unwrap().build().unwrap_err();
        assert!(matches!(err, Error::UnknownTableEntry { .. }), "{err}");
    }

    #[test]
    fn malformed_json_is_a_config_error() {
        assert!(matches!(
            DgpConfig::from_json_str("{\"actions\": 3}"),
            Err(Error::Config(_))
        ));
        assert!(DgpConfig::from_json_str(&FIG.replace("\"mu\"", "\"mew\"")).is_err());
    }

    #[test]
    fn joint_law_excludes_p_treat() {
        let c = r#"{"actions": [[0, 1]], "p_treat": 0.5,
            "joint_law": [{"d": 0, "a": [0], "p": 0.25}, {"d": 0, "a": [1], "p": 0.25},
                          {"d": 1, "a": [0], "p": 0.25}, {"d": 1, "a": [1], "p": 0.25}],
            "mu": {"affine": {}}}"#;
        assert!(DgpConfig::from_json_str(c).unwrap().build().is_err());
        let ok = c.replace("\"p_treat\": 0.5,", "");
        assert!(DgpConfig::from_json_str(&ok).unwrap().build().is_ok());
    }
}
