mod common;

use common::fixture;
use estimand_lab::config::{load_dgp, DgpConfig};
use estimand_lab::decomposition::{decompose_sfe, EstimandKind};
use estimand_lab::diagnostics::{
    check_ssp, equivalence_stress, random_dgp, search, trial_rng, SamplerOptions, SearchConfig,
    SearchTarget,
};
use estimand_lab::dgp::ActionSpace;

fn cfg(kind: EstimandKind, target: SearchTarget, sizes: Vec<u32>, me: bool) -> SearchConfig {
    SearchConfig { kind, target, sizes, mutually_exclusive: me, trials: 200, seed: 3 }
}

#[test]
fn negative_weight_hits_replay_through_config() {
    for kind in [EstimandKind::Long, EstimandKind::Inter] {
        let res = search(&cfg(kind, SearchTarget::NegativeWeight, vec![4], false)).unwrap();
        assert!(!res.hits.is_empty(), "{kind}");
        for h in res.hits.iter().take(10) {
            let text = DgpConfig::from_dgp(&h.dgp, None).to_json_pretty();
            let back = DgpConfig::from_json_str(&text).unwrap().build().unwrap();
            assert_eq!(back, h.dgp);
            let w = estimand_lab::decomposition::weights(&back, kind).unwrap();
            assert_eq!(w.min_dce(), h.min_weight);
            assert!(w.min_dce() < 0.0);
        }
    }
}

#[test]
fn exclusive_support_search_is_refused() {
    let res = search(&cfg(EstimandKind::Long, SearchTarget::NegativeWeight, vec![2, 2], true)).unwrap();
    assert!(res.refused.is_some());
    assert!(res.hits.is_empty());
}

#[test]
fn search_is_deterministic() {
    let c = cfg(EstimandKind::Long, SearchTarget::SspViolation, vec![3, 2], false);
    let a = search(&c).unwrap();
    let b = search(&c).unwrap();
    assert_eq!(a.hits, b.hits);
    assert_eq!(a.min_weight.to_bits(), b.min_weight.to_bits());
}

#[test]
fn stored_violations_replay() {
    for (name, kind) in [
        ("short", EstimandKind::Short),
        ("long", EstimandKind::Long),
        ("inter", EstimandKind::Inter),
    ] {
        let g = load_dgp(&fixture(&format!("search/ssp_{name}"))).unwrap();
        let v = check_ssp(&g, kind).unwrap();
        assert!(v.premise_holds && v.violated, "{name}");
    }
}

#[test]
fn sfe_preserves_sign() {
    let opts = SamplerOptions { positive_contrasts: true, ..Default::default() };
    for t in 0..500 {
        let mut rng = trial_rng(77, t);
        let space = estimand_lab::diagnostics::random_space(&mut rng, 2, 4);
        let g = random_dgp(&space, &mut rng, opts);
        assert!(decompose_sfe(&g).unwrap().estimand > 0.0, "trial {t}");
    }
}

#[test]
fn exclusive_support_stress() {
    for k in 1..=3 {
        let r = equivalence_stress(k, 300, 8).unwrap();
        assert!(r.max_abs_ind_long < 1e-10 && r.max_abs_ind_inter < 1e-10);
        assert!(r.min_dce_long >= -1e-12 && r.min_dce_inter >= -1e-12);
        assert!(r.max_long_sfe_gap < 1e-10);
    }
    assert!(ActionSpace::mutually_exclusive(2).unwrap().is_mutually_exclusive_binary());
}
