mod common;

use common::{design, seeded_dgp, wls, wls_delta, with_mu};
use estimand_lab::decomposition::{
    decompose_inter, decompose_long, decompose_sat, decompose_sfe, decompose_short, inter_star,
    weights_inter, weights_long, weights_sfe, weights_short,
};
use estimand_lab::diagnostics::SamplerOptions;
use estimand_lab::dgp::{Assumption, Dgp};
use estimand_lab::moments::compute_moments;
use estimand_lab::projection::{delta_long_closed_form, project, RegressionKind};
use proptest::prelude::*;

const KINDS: [(&str, RegressionKind); 5] = [
    ("short", RegressionKind::Short),
    ("long", RegressionKind::Long),
    ("inter", RegressionKind::Inter),
    ("sfe", RegressionKind::Sfe),
    ("sat", RegressionKind::Sat),
];

fn both_modes(t: u64) -> [Dgp; 2] {
    [
        seeded_dgp(101, t, SamplerOptions::default()),
        seeded_dgp(202, t, SamplerOptions { weak: true, ..Default::default() }),
    ]
}

#[test]
fn solver_matches_normal_equations() {
    for t in 0..200 {
        for g in both_modes(t) {
            for (name, kind) in KINDS {
                let lib = project(&g, kind).unwrap();
                let oracle = wls(&g, name);
                assert_eq!(lib.coefficients.len(), oracle.len());
                for (a, b) in lib.coefficients.iter().zip(&oracle) {
                    assert!((a - b).abs() < 1e-9, "{name} trial {t}: {a} vs {b}");
                }
                assert!(lib.max_orthogonality_residual() < 1e-10);
            }
        }
    }
}

#[test]
fn closed_forms_reconstruct_oracle_estimands() {
    for t in 0..200 {
        for g in both_modes(t) {
            let cases = [
                ("short", decompose_short(&g).unwrap()),
                ("long", decompose_long(&g).unwrap()),
                ("inter", decompose_inter(&g).unwrap()),
                ("sfe", decompose_sfe(&g).unwrap()),
            ];
            for (name, r) in cases {
                let sum = r.dce + r.ind + r.sel;
                let want = wls_delta(&g, name);
                assert!((sum - want).abs() < 1e-10, "{name} trial {t}: {sum} vs {want}");
                if g.assumption() == Assumption::Strong {
                    assert_eq!(r.sel, 0.0);
                }
            }
            let beta = wls(&g, "sat");
            let n = g.space().len();
            for (i, r) in decompose_sat(&g).unwrap().iter().enumerate() {
                let sum = r.dce + r.ind + r.sel;
                assert!((sum - beta[n + i]).abs() < 1e-10);
            }
            assert!((delta_long_closed_form(&g).unwrap() - wls_delta(&g, "long")).abs() < 1e-10);
        }
    }
}

#[test]
fn inter_star_matches_oracle_combination() {
    let mut checked = 0;
    for t in 0..300 {
        for g in both_modes(t) {
            if g.k() != 1 {
                continue;
            }
            let beta = wls(&g, "inter");
            let ea = compute_moments(&g).mean_a[0];
            let want = beta[1] + ea * beta[3];
            let r = inter_star(&g).unwrap();
            assert!((r.dce + r.ind + r.sel - want).abs() < 1e-10);
            assert!((r.weights.dce_sum() - 1.0).abs() < 1e-10);
            assert!(r.weights.ind_sum().unwrap().abs() < 1e-10);
            checked += 1;
        }
    }
    assert!(checked > 100);
}

/// A weight is the estimand obtained when the outcome loads on one atom only.
#[test]
fn weights_are_responses_to_single_atom_outcomes() {
    for t in 0..60 {
        let g = seeded_dgp(303, t, SamplerOptions::default());
        let n = g.space().len();
        let unit = |i: usize| (0..n).map(|s| if s == i { 1.0 } else { 0.0 }).collect::<Vec<_>>();
        let tables = [
            ("short", weights_short(&g)),
            ("long", weights_long(&g).unwrap()),
            ("inter", weights_inter(&g).unwrap()),
            ("sfe", weights_sfe(&g).unwrap()),
        ];
        for (name, w) in tables {
            for i in 0..n {
                let direct = with_mu(&g, [vec![0.0; n], unit(i)]);
                let got = wls_delta(&direct, name);
                assert!((w.omega_dce[i] - got).abs() < 1e-10, "{name} dce atom {i}");
                if i == 0 {
                    continue;
                }
                let through = with_mu(&g, [unit(i), unit(i)]);
                let got = wls_delta(&through, name);
                let want = w.omega_ind.as_ref().map_or(0.0, |v| v[i]);
                assert!((want - got).abs() < 1e-10, "{name} ind atom {i}");
            }
        }
    }
}

#[test]
fn moments_match_enumeration() {
    for t in 0..100 {
        let g = seeded_dgp(404, t, SamplerOptions::default());
        let m = compute_moments(&g);
        let k = g.k();
        let mut rows = Vec::new();
        for d in 0..2 {
            for i in 0..g.space().len() {
                let (x, _) = design("inter", g.space(), d, i);
                rows.push((g.law().p(d, i), x));
            }
        }
        let mean = |c: usize| rows.iter().map(|(p, x)| p * x[c]).sum::<f64>();
        let cov = |a: usize, b: usize| {
            let (ma, mb) = (mean(a), mean(b));
            rows.iter().map(|(p, x)| p * (x[a] - ma) * (x[b] - mb)).sum::<f64>()
        };
        assert!((m.p_treat - mean(1)).abs() < 1e-14);
        assert!((m.var_d - m.p_treat * (1.0 - m.p_treat)).abs() < 1e-12);
        for r in 0..2 * k {
            assert!((m.cov_wd[r] - cov(2 + r, 1)).abs() < 1e-12);
            for c in 0..2 * k {
                assert!((m.var_w[(r, c)] - cov(2 + r, 2 + c)).abs() < 1e-12);
                assert_eq!(m.var_w[(r, c)], m.var_w[(c, r)]);
            }
        }
        for j in 0..k {
            let gap = m.p_treat * (m.mean_a_given_d1[j] - m.mean_a[j]);
            assert!((gap - m.cov_da[j]).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn level_shift_moves_only_levels(seed in 0u64..1_000_000, c in -5.0f64..5.0) {
        let g = seeded_dgp(seed, 0, SamplerOptions::default());
        let mu = g.outcome().mu_table().clone().map(|arm| arm.iter().map(|v| v + c).collect());
        let shifted = with_mu(&g, mu);
        for (_, kind) in KINDS {
            let a = project(&g, kind).unwrap();
            let b = project(&shifted, kind).unwrap();
            for (r, (x, y)) in a.regressors.iter().zip(a.coefficients.iter().zip(&b.coefficients)) {
                use estimand_lab::projection::Regressor::*;
                let level = matches!(r, Const | Stratum(_));
                if !level {
                    prop_assert!((x - y).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn explicit_nu_equal_to_mu_changes_nothing(seed in 0u64..1_000_000) {
        let g = seeded_dgp(seed, 1, SamplerOptions::default());
        let mu = g.outcome().mu_table().clone();
        let nu = [[mu[0].clone(), mu[0].clone()], [mu[1].clone(), mu[1].clone()]];
        let explicit = Dgp::new(g.law().clone(), mu, Some(nu), None, Assumption::Strong).unwrap();
        prop_assert_eq!(&explicit, &g);
        prop_assert_eq!(decompose_long(&explicit).unwrap(), decompose_long(&g).unwrap());
    }

    #[test]
    fn sfe_weights_nonnegative(seed in 0u64..1_000_000) {
        let g = seeded_dgp(seed, 2, SamplerOptions::default());
        let w = weights_sfe(&g).unwrap();
        prop_assert!(w.min_dce() >= 0.0);
        prop_assert!((w.dce_sum() - 1.0).abs() < 1e-12);
    }
}
