//! JSON and CSV renderings of decomposition reports and sweeps.
//!
//! Floats are written in shortest round-trip form, so identical inputs give
//! byte-identical files and parsing a CSV recovers the exact values.

use std::fmt::Write as _;

use serde_json::{json, Value};

use crate::decomposition::{DecompositionReport, NaturalEffects, WeightTable};
use crate::dgp::Atom;

pub const WEIGHTS_CSV_HEADER: &str = "# estimand-lab weights v1";
pub const SWEEP_CSV_HEADER: &str = "# estimand-lab sweep v1";

fn atom_columns(k: usize) -> String {
    (1..=k).map(|j| format!("a{j}")).collect::<Vec<_>>().join(",")
}

fn atom_cells(a: &Atom) -> String {
    a.0.iter().map(u32::to_string).collect::<Vec<_>>().join(",")
}

/// Shortest round-trip form, switching to exponent notation for tiny values.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// One row per atom (per stratum report for the saturated kind).
pub fn weights_csv(reports: &[DecompositionReport]) -> String {
    let k = reports
        .first()
        .and_then(|r| r.weights.atoms.first())
        .map_or(0, |a| a.0.len());
    let mut s = String::new();
    writeln!(s, "{WEIGHTS_CSV_HEADER}").unwrap();
    writeln!(
        s,
        "kind,{},omega_dce,omega_ind,dce_contrast,ind_contrast,sel_contrast,dce_contribution,ind_contribution,sel_contribution",
        atom_columns(k)
    )
    .unwrap();
    for r in reports {
        let dce_c = r.dce_contributions();
        let ind_c = r.ind_contributions();
        let sel_c = r.sel_contributions();
        let w = &r.weights;
        for (i, atom) in w.atoms.iter().enumerate() {
            if r.atom.as_ref().is_some_and(|a| a != atom) {
                continue;
            }
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.kind,
                atom_cells(atom),
                num(w.omega_dce[i]),
                opt(w.omega_ind.as_ref().map(|v| v[i])),
                num(r.contrasts.dce[i]),
                num(r.contrasts.ind[i]),
                num(r.contrasts.sel[i]),
                num(dce_c[i]),
                num(ind_c[i]),
                num(sel_c[i]),
            )
            .unwrap();
        }
    }
    s
}

/// Rows `p,a1..aK,omega_dce,omega_ind`, one per grid point and atom.
pub fn sweep_csv(points: &[(f64, WeightTable)]) -> String {
    let k = points
        .first()
        .and_then(|(_, w)| w.atoms.first())
        .map_or(0, |a| a.0.len());
    let mut s = String::new();
    writeln!(s, "{SWEEP_CSV_HEADER}").unwrap();
    writeln!(s, "p,{},omega_dce,omega_ind", atom_columns(k)).unwrap();
    for (p, w) in points {
        for (i, atom) in w.atoms.iter().enumerate() {
            writeln!(
                s,
                "{},{},{},{}",
                num(*p),
                atom_cells(atom),
                num(w.omega_dce[i]),
                opt(w.omega_ind.as_ref().map(|v| v[i]))
            )
            .unwrap();
        }
    }
    s
}

pub fn reports_json(reports: &[DecompositionReport], natural: Option<&NaturalEffects>) -> Value {
    let mut v = json!({ "reports": reports });
    if let Some(ne) = natural {
        v["natural_effects"] = json!(ne);
    }
    v
}

/// Parses a weights CSV back into `(atom, omega_dce, omega_ind)` rows.
pub fn parse_weights_csv(text: &str) -> Option<Vec<(Vec<u32>, f64, Option<f64>)>> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next()?.split(',').collect();
    let k = header.iter().filter(|h| h.starts_with('a') && h[1..].parse::<usize>().is_ok()).count();
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let atom = f[1..=k].iter().map(|x| x.parse().ok()).collect::<Option<Vec<u32>>>()?;
            let dce = f[k + 1].parse().ok()?;
            let ind = (!f[k + 2].is_empty()).then(|| f[k + 2].parse().ok()).flatten();
            Some((atom, dce, ind))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::{decompose, EstimandKind};
    use crate::dgp::{ActionSpace, Assumption, Dgp, JointLaw};

    fn dgp() -> Dgp {
        let space = ActionSpace::product(vec![vec![0, 1, 2]]).unwrap();
        let law = JointLaw::new(space, [vec![0.1, 0.2, 0.1], vec![0.2, 0.15, 0.25]], true).unwrap();
        Dgp::new(law, [vec![0.0, 0.5, -0.3], vec![1.0, 0.2, 0.4]], None, None, Assumption::Strong)
            .unwrap()
    }

    #[test]
    fn weights_csv_round_trips() {
        let reports = decompose(&dgp(), EstimandKind::Long).unwrap();
        let csv = weights_csv(&reports);
        assert!(csv.starts_with(WEIGHTS_CSV_HEADER));
        let rows = parse_weights_csv(&csv).unwrap();
        assert_eq!(rows.len(), 3);
        for (i, (a, dce, ind)) in rows.iter().enumerate() {
            assert_eq!(a, &vec![i as u32]);
            assert_eq!(*dce, reports[0].weights.omega_dce[i]);
            assert_eq!(ind.unwrap(), reports[0].weights.omega_ind.as_ref().unwrap()[i]);
        }
    }

    #[test]
    fn sat_csv_has_one_row_per_stratum() {
        let reports = decompose(&dgp(), EstimandKind::Sat).unwrap();
        let rows = parse_weights_csv(&weights_csv(&reports)).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.1 == 1.0 && r.2.is_none()));
    }

    #[test]
    fn json_carries_every_report() {
        let reports = decompose(&dgp(), EstimandKind::Sat).unwrap();
        let v = reports_json(&reports, None);
        assert_eq!(v["reports"].as_array().unwrap().len(), 3);
        assert_eq!(v["reports"][0]["kind"], "sat");
    }
}
