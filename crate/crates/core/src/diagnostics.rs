//! Sign-preservation verdicts, a random DGP sampler, and randomized searches
//! for negative weights and sign reversals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomposition::{decompose, decompose_sfe, weights, EstimandKind, WeightTable};
use crate::dgp::{ActionSpace, ArmTable, Assumption, Dgp, JointLaw};
use crate::error::{Error, Result};

/// Strictness margin for the positive-contrast premise and for signs.
pub const SSP_TOLERANCE: f64 = 1e-12;

/// Mass floor per cell in the random sampler.
pub const CELL_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Positive,
    Zero,
    Negative,
}

impl Sign {
    pub fn of(x: f64) -> Self {
        if x > SSP_TOLERANCE {
            Sign::Positive
        } else if x < -SSP_TOLERANCE {
            Sign::Negative
        } else {
            Sign::Zero
        }
    }
}

/// Whether positive treatment contrasts at every atom produced a positive
/// estimand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SspVerdict {
    /// `mu(1,a) - mu(0,a) > 0` for every atom.
    pub premise_holds: bool,
    pub min_contrast: f64,
    pub estimand: f64,
    pub estimand_sign: Sign,
    pub violated: bool,
}

impl SspVerdict {
    pub fn new(dgp: &Dgp, estimand: f64) -> Self {
        let out = dgp.outcome();
        let min_contrast = (0..dgp.space().len())
            .map(|i| out.mu(1, i) - out.mu(0, i))
            .fold(f64::INFINITY, f64::min);
        let premise_holds = min_contrast > SSP_TOLERANCE;
        let estimand_sign = Sign::of(estimand);
        SspVerdict {
            premise_holds,
            min_contrast,
            estimand,
            estimand_sign,
            violated: premise_holds && estimand_sign != Sign::Positive,
        }
    }
}

/// Verdict for one estimand. The saturated kind is judged by its smallest
/// per-atom effect.
pub fn check_ssp(dgp: &Dgp, kind: EstimandKind) -> Result<SspVerdict> {
    dgp.require_strong("sign-preservation check")?;
    let reports = decompose(dgp, kind)?;
    let estimand = reports
        .iter()
        .map(|r| r.estimand)
        .fold(f64::INFINITY, f64::min);
    Ok(SspVerdict::new(dgp, estimand))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SamplerOptions {
    /// Draw an unrestricted `nu` and mark the DGP weak.
    pub weak: bool,
    /// Force `mu(1,a) > mu(0,a)` at every atom.
    pub positive_contrasts: bool,
}

/// Uniform draw from the simplex over all `(d, a)` cells, shifted so every
/// cell keeps at least [`CELL_FLOOR`] (less if the support is too large for
/// that floor to leave any free mass).
pub fn random_law<R: Rng + ?Sized>(space: &ActionSpace, rng: &mut R) -> JointLaw {
    let n = space.len();
    let cells = 2 * n;
    let floor = CELL_FLOOR.min(0.5 / cells as f64);
    let free = 1.0 - floor * cells as f64;
    let draws: Vec<f64> = (0..cells).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = draws.iter().sum();
    let mut table: ArmTable = [Vec::with_capacity(n), Vec::with_capacity(n)];
    for (c, x) in draws.iter().enumerate() {
        table[c / n].push(floor + free * x / total);
    }
    JointLaw::new(space.clone(), table, true).expect("sampled law is valid")
}

pub fn random_dgp<R: Rng + ?Sized>(space: &ActionSpace, rng: &mut R, opts: SamplerOptions) -> Dgp {
    let law = random_law(space, rng);
    let n = space.len();
    let mu0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let mu1: Vec<f64> = if opts.positive_contrasts {
        mu0.iter().map(|m| m + rng.random_range(0.001..=1.0)).collect()
    } else {
        (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect()
    };
    let mu = [mu0, mu1];
    if opts.weak {
        let mut draw = || -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect() };
        let nu = [[draw(), draw()], [draw(), draw()]];
        Dgp::new(law, mu, Some(nu), None, Assumption::Weak).expect("sampled DGP is valid")
    } else {
        Dgp::new(law, mu, None, None, Assumption::Strong).expect("sampled DGP is valid")
    }
}

/// A random product space with `1..=max_k` coordinates of `2..=max_size`
/// points each.
pub fn random_space<R: Rng + ?Sized>(rng: &mut R, max_k: usize, max_size: u32) -> ActionSpace {
    let k = rng.random_range(1..=max_k);
    let coords = (0..k)
        .map(|_| (0..rng.random_range(2..=max_size)).collect())
        .collect();
    ActionSpace::product(coords).expect("random space is valid")
}

/// Generator for trial `t` of a run seeded with `seed`.
pub fn trial_rng(seed: u64, t: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t);
    rng
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchTarget {
    /// Some `omega_dce(a) < 0`.
    NegativeWeight,
    /// Positive contrasts everywhere with a nonpositive estimand.
    SspViolation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub kind: EstimandKind,
    pub target: SearchTarget,
    /// Number of points of each coordinate's support `{0, ..., s - 1}`.
    pub sizes: Vec<u32>,
    /// Restrict the joint support to mutually exclusive binary atoms.
    pub mutually_exclusive: bool,
    pub trials: u64,
    pub seed: u64,
}

impl SearchConfig {
    pub fn space(&self) -> Result<ActionSpace> {
        if self.mutually_exclusive {
            ActionSpace::mutually_exclusive(self.sizes.len())
        } else {
            ActionSpace::product(self.sizes.iter().map(|&s| (0..s).collect()).collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub trial: u64,
    pub dgp: Dgp,
    pub weights: WeightTable,
    pub min_weight: f64,
    pub verdict: Option<SspVerdict>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub kind: EstimandKind,
    pub target: SearchTarget,
    pub trials: u64,
    pub hits: Vec<Hit>,
    /// Smallest `omega_dce` seen over all trials.
    pub min_weight: f64,
    /// Set when the search was not run because no hit can exist.
    pub refused: Option<String>,
}

impl SearchResult {
    pub fn hit_rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.hits.len() as f64 / self.trials as f64
        }
    }
}

/// Randomized search, deterministic in `seed`. Trial `t` uses stream `t` of
/// a ChaCha8 generator, so results do not depend on thread scheduling.
pub fn search(cfg: &SearchConfig) -> Result<SearchResult> {
    let space = cfg.space()?;
    let refuse = |reason: &str| SearchResult {
        kind: cfg.kind,
        target: cfg.target.clone(),
        trials: 0,
        hits: Vec::new(),
        min_weight: f64::NAN,
        refused: Some(reason.into()),
    };
    if cfg.target == SearchTarget::NegativeWeight {
        if !matches!(cfg.kind, EstimandKind::Long | EstimandKind::Inter) {
            return Err(Error::Config(format!(
                "negative-weight search supports long and inter, not {}",
                cfg.kind
            )));
        }
        if space.is_mutually_exclusive_binary() {
            return Ok(refuse(
                "mutually exclusive binary actions give nonnegative direct weights and zero indirect weights",
            ));
        }
    }
    if cfg.target == SearchTarget::SspViolation
        && matches!(cfg.kind, EstimandKind::Sfe | EstimandKind::Sat)
    {
        return Ok(refuse("this estimand is a nonnegative average of cell contrasts"));
    }

    let outcomes: Vec<(f64, Option<Hit>)> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(cfg.seed, t);
            let dgp = random_dgp(&space, &mut rng, SamplerOptions::default());
            run_trial(cfg, t, dgp)
        })
        .collect();

    let min_weight = outcomes
        .iter()
        .map(|(m, _)| *m)
        .fold(f64::INFINITY, f64::min);
    Ok(SearchResult {
        kind: cfg.kind,
        target: cfg.target.clone(),
        trials: cfg.trials,
        hits: outcomes.into_iter().filter_map(|(_, h)| h).collect(),
        min_weight,
        refused: None,
    })
}

fn run_trial(cfg: &SearchConfig, t: u64, dgp: Dgp) -> (f64, Option<Hit>) {
    let Ok(w) = weights(&dgp, cfg.kind) else {
        return (f64::INFINITY, None);
    };
    let min_weight = w.min_dce();
    let hit = match cfg.target {
        SearchTarget::NegativeWeight => (min_weight < -SSP_TOLERANCE).then(|| Hit {
            trial: t,
            dgp,
            weights: w,
            min_weight,
            verdict: None,
        }),
        SearchTarget::SspViolation => engineer_ssp_violation(&dgp, cfg.kind)
            .ok()
            .flatten()
            .map(|(bad, verdict)| Hit {
                trial: t,
                weights: weights(&bad, cfg.kind).unwrap_or(w),
                dgp: bad,
                min_weight,
                verdict: Some(verdict),
            }),
    };
    (min_weight, hit)
}

/// Rewrites the outcome means of `dgp` (keeping its law) so that every
/// treatment contrast is positive but the estimand is not. Returns `None`
/// when the weights of this law leave no room for a reversal.
pub fn engineer_ssp_violation(
    dgp: &Dgp,
    kind: EstimandKind,
) -> Result<Option<(Dgp, SspVerdict)>> {
    let w = weights(dgp, kind)?;
    let n = dgp.space().len();
    let z = dgp.space().zero_index();
    let (star, w_star) = w
        .omega_dce
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, x)| if x < acc.1 { (i, x) } else { acc });

    let mu = if w_star < -SSP_TOLERANCE {
        let eps = -w_star / (2.0 * (1.0 - w_star));
        let mu1 = (0..n).map(|i| if i == star { 1.0 } else { eps }).collect();
        [vec![0.0; n], mu1]
    } else if w.max_abs_ind() > SSP_TOLERANCE {
        let ind = w.omega_ind.as_ref().expect("checked above");
        let s: f64 = (0..n).filter(|&i| i != z).map(|i| ind[i] * ind[i]).sum();
        let t = 2.0 / s;
        let mu0: Vec<f64> = (0..n)
            .map(|i| if i == z { 0.0 } else { -t * ind[i] })
            .collect();
        let mu1 = mu0.iter().map(|m| m + 1.0).collect();
        [mu0, mu1]
    } else {
        return Ok(None);
    };
    let bad = Dgp::new(
        dgp.law().clone(),
        mu,
        None,
        Some(dgp.outcome().noise_table().clone()),
        Assumption::Strong,
    )?;
    let verdict = check_ssp(&bad, kind)?;
    Ok(verdict.violated.then_some((bad, verdict)))
}

/// Worst-case quantities over random laws on a mutually exclusive binary
/// support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressReport {
    pub trials: u64,
    pub max_abs_ind_long: f64,
    pub max_abs_ind_inter: f64,
    pub min_dce_long: f64,
    pub min_dce_inter: f64,
    /// Largest `|Delta_long - Delta_sfe|`.
    pub max_long_sfe_gap: f64,
    pub max_normalization_residual: f64,
    pub max_identity_residual: f64,
}

pub fn equivalence_stress(k: usize, trials: u64, seed: u64) -> Result<StressReport> {
    let space = ActionSpace::mutually_exclusive(k)?;
    let rows: Vec<Result<[f64; 7]>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let dgp = random_dgp(&space, &mut rng, SamplerOptions::default());
            let long = decompose(&dgp, EstimandKind::Long)?.remove(0);
            let inter = decompose(&dgp, EstimandKind::Inter)?.remove(0);
            let sfe = decompose_sfe(&dgp)?;
            Ok([
                long.weights.max_abs_ind(),
                inter.weights.max_abs_ind(),
                long.weights.min_dce(),
                inter.weights.min_dce(),
                (long.estimand - sfe.estimand).abs(),
                long.weights
                    .normalization_residual()
                    .max(inter.weights.normalization_residual()),
                long.identity_residual.max(inter.identity_residual),
            ])
        })
        .collect();
    let mut r = StressReport {
        trials,
        max_abs_ind_long: 0.0,
        max_abs_ind_inter: 0.0,
        min_dce_long: f64::INFINITY,
        min_dce_inter: f64::INFINITY,
        max_long_sfe_gap: 0.0,
        max_normalization_residual: 0.0,
        max_identity_residual: 0.0,
    };
    for row in rows {
        let x = row?;
        r.max_abs_ind_long = r.max_abs_ind_long.max(x[0]);
        r.max_abs_ind_inter = r.max_abs_ind_inter.max(x[1]);
        r.min_dce_long = r.min_dce_long.min(x[2]);
        r.min_dce_inter = r.min_dce_inter.min(x[3]);
        r.max_long_sfe_gap = r.max_long_sfe_gap.max(x[4]);
        r.max_normalization_residual = r.max_normalization_residual.max(x[5]);
        r.max_identity_residual = r.max_identity_residual.max(x[6]);
    }
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Precondition of the check not met (singular design, empty cells, ...).
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

fn outcome(name: impl Into<String>, ok: bool, detail: String) -> CheckOutcome {
    CheckOutcome {
        name: name.into(),
        status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
        detail,
    }
}

fn skipped(name: impl Into<String>, err: &Error) -> CheckOutcome {
    CheckOutcome {
        name: name.into(),
        status: CheckStatus::Skip,
        detail: err.to_string(),
    }
}

/// Every invariant that applies to `dgp`, one outcome each.
pub fn run_checks(dgp: &Dgp) -> Vec<CheckOutcome> {
    use crate::config::DgpConfig;
    use crate::decomposition::{natural_effects, IDENTITY_TOLERANCE};
    use crate::moments::{compute_moments, cov_aj_y, cov_daj_y};
    use crate::projection::{delta_long_closed_form, project, RegressionKind, ORTHOGONALITY_TOLERANCE};

    let mut out = Vec::new();
    let m = compute_moments(dgp);
    let pi_gap = m.pi.iter().map(|p| (p.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
    out.push(outcome("conditional laws sum to one", pi_gap < 1e-12, format!("max gap {pi_gap:e}")));
    let vd = (m.var_d - m.p_treat * (1.0 - m.p_treat)).abs();
    out.push(outcome("var(D) = p(1 - p)", vd < 1e-12, format!("gap {vd:e}")));
    for j in 0..dgp.k() {
        for (label, r) in [("cov(A_j, Y)", cov_aj_y(dgp, j)), ("cov(D A_j, Y)", cov_daj_y(dgp, j))] {
            let name = format!("{} expansion, j = {}", label, j + 1);
            out.push(match r {
                Ok(v) => outcome(name, true, format!("value {v}")),
                Err(e) => outcome(name, false, e.to_string()),
            });
        }
    }

    for kind in RegressionKind::ALL {
        let name = format!("{kind}: orthogonality of residuals");
        out.push(match project(dgp, kind) {
            Ok(r) => {
                let res = r.max_orthogonality_residual();
                outcome(name, res < ORTHOGONALITY_TOLERANCE, format!("max {res:e}"))
            }
            Err(e) => skipped(name, &e),
        });
    }

    let mut kinds = vec![
        EstimandKind::Short,
        EstimandKind::Long,
        EstimandKind::Inter,
        EstimandKind::Sfe,
        EstimandKind::Sat,
    ];
    if dgp.k() == 1 {
        kinds.push(EstimandKind::InterStar);
    }
    for kind in kinds {
        let reports = match decompose(dgp, kind) {
            Ok(r) => r,
            Err(e) => {
                out.push(skipped(format!("{kind}: decomposition"), &e));
                continue;
            }
        };
        let worst = reports.iter().map(|r| r.identity_residual).fold(0.0, f64::max);
        out.push(outcome(
            format!("{kind}: dce + ind + sel reconstructs the estimand"),
            worst < IDENTITY_TOLERANCE,
            format!("max residual {worst:e}"),
        ));
        if kind != EstimandKind::Sat {
            let r = &reports[0];
            let norm = r.weights.normalization_residual();
            out.push(outcome(
                format!("{kind}: weight normalizations"),
                norm < IDENTITY_TOLERANCE,
                format!("max residual {norm:e}"),
            ));
        }
        if dgp.assumption() == Assumption::Strong {
            let sel = reports.iter().map(|r| r.sel.abs()).fold(0.0, f64::max);
            out.push(outcome(
                format!("{kind}: no selection term under strong exogeneity"),
                sel == 0.0,
                format!("max |sel| {sel:e}"),
            ));
        }
        if kind == EstimandKind::Sfe {
            let min = reports[0].weights.min_dce();
            out.push(outcome("sfe: weights nonnegative", min >= 0.0, format!("min {min}")));
        }
        if dgp.space().is_mutually_exclusive_binary()
            && matches!(kind, EstimandKind::Long | EstimandKind::Inter)
        {
            let w = &reports[0].weights;
            let ok = w.max_abs_ind() < 1e-10 && w.min_dce() >= -SSP_TOLERANCE;
            out.push(outcome(
                format!("{kind}: exclusive actions give direct weights only"),
                ok,
                format!("max |omega_ind| {:e}, min omega_dce {}", w.max_abs_ind(), w.min_dce()),
            ));
        }
    }

    let name = "long: partialled-out form matches solver";
    out.push(match (delta_long_closed_form(dgp), project(dgp, RegressionKind::Long)) {
        (Ok(c), Ok(p)) => {
            let gap = (c - p.delta().unwrap_or(f64::NAN)).abs();
            outcome(name, gap < 1e-10, format!("gap {gap:e}"))
        }
        (Err(e), _) | (_, Err(e)) => skipped(name, &e),
    });

    if dgp.space().is_mutually_exclusive_binary() {
        let name = "exclusive actions: long equals sfe";
        out.push(match (project(dgp, RegressionKind::Long), project(dgp, RegressionKind::Sfe)) {
            (Ok(l), Ok(s)) => {
                let gap = (l.delta().unwrap_or(f64::NAN) - s.delta().unwrap_or(f64::NAN)).abs();
                outcome(name, gap < 1e-10, format!("gap {gap:e}"))
            }
            (Err(e), _) | (_, Err(e)) => skipped(name, &e),
        });
    }

    if dgp.assumption() == Assumption::Strong {
        let name = "natural indirect effect at d = 0 equals short indirect term";
        out.push(match (natural_effects(dgp), decompose(dgp, EstimandKind::Short)) {
            (Ok(ne), Ok(r)) => {
                let gap = (ne.delta_bar[0] - r[0].ind).abs();
                outcome(name, gap < 1e-12, format!("gap {gap:e}"))
            }
            (Err(e), _) | (_, Err(e)) => skipped(name, &e),
        });
    }

    let text = DgpConfig::from_dgp(dgp, None).to_json_pretty();
    let same = DgpConfig::from_json_str(&text).and_then(|c| c.build());
    out.push(outcome(
        "config round trip is exact",
        same.as_ref() == Ok(dgp),
        match same {
            Ok(_) => "identical tables".into(),
            Err(e) => e.to_string(),
        },
    ));
    out
}
