#![allow(dead_code)]

use estimand_lab::dgp::{ActionSpace, Assumption, Dgp, JointLaw};
use estimand_lab::diagnostics::{random_dgp, random_space, trial_rng, SamplerOptions};
use std::path::PathBuf;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(format!("{name}.json"))
}

/// Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n)
            .max_by(|&i, &j| a[i][c].abs().partial_cmp(&a[j][c].abs()).unwrap())
            .unwrap();
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Regressor rows built independently of the library: returns the design
/// row for cell `(d, atom)` and the index of the `D` column.
pub fn design(kind: &str, space: &ActionSpace, d: usize, i: usize) -> (Vec<f64>, Option<usize>) {
    let a: Vec<f64> = space.atoms()[i].0.iter().map(|&v| v as f64).collect();
    let df = d as f64;
    let n = space.len();
    let ind: Vec<f64> = (0..n).map(|s| if s == i { 1.0 } else { 0.0 }).collect();
    match kind {
        "short" => (vec![1.0, df], Some(1)),
        "long" => {
            let mut r = vec![1.0, df];
            r.extend(&a);
            (r, Some(1))
        }
        "inter" => {
            let mut r = vec![1.0, df];
            r.extend(&a);
            r.extend(a.iter().map(|x| x * df));
            (r, Some(1))
        }
        "sfe" => {
            let mut r = vec![df];
            r.extend(&ind);
            (r, Some(0))
        }
        "sat" => {
            let mut r = ind.clone();
            r.extend(ind.iter().map(|x| x * df));
            (r, None)
        }
        _ => unreachable!(),
    }
}

/// Weighted least squares on the population cells via raw normal equations.
pub fn wls(dgp: &Dgp, kind: &str) -> Vec<f64> {
    let space = dgp.space();
    let mut xtx: Vec<Vec<f64>> = Vec::new();
    let mut xty: Vec<f64> = Vec::new();
    for d in 0..2 {
        for i in 0..space.len() {
            let p = dgp.law().p(d, i);
            let y = dgp.outcome().nu(d, d, i);
            let (x, _) = design(kind, space, d, i);
            if xtx.is_empty() {
                xtx = vec![vec![0.0; x.len()]; x.len()];
                xty = vec![0.0; x.len()];
            }
            for r in 0..x.len() {
                xty[r] += p * x[r] * y;
                for c in 0..x.len() {
                    xtx[r][c] += p * x[r] * x[c];
                }
            }
        }
    }
    solve(xtx, xty)
}

/// Coefficient on `D` from the oracle.
pub fn wls_delta(dgp: &Dgp, kind: &str) -> f64 {
    let beta = wls(dgp, kind);
    let (_, pos) = design(kind, dgp.space(), 0, 0);
    beta[pos.unwrap()]
}

/// Same law, outcome tables replaced.
pub fn with_mu(dgp: &Dgp, mu: [Vec<f64>; 2]) -> Dgp {
    Dgp::new(dgp.law().clone(), mu, None, None, Assumption::Strong).unwrap()
}

pub fn binomial(n: u32, q: f64) -> Vec<f64> {
    (0..=n)
        .map(|k| {
            let c: f64 = (1..=k).map(|t| f64::from(n - k + t) / f64::from(t)).product();
            c * q.powi(k as i32) * (1.0 - q).powi((n - k) as i32)
        })
        .collect()
}

pub fn scalar_binomial(n: u32, p: f64, q0: f64, q1: f64) -> Dgp {
    let space = ActionSpace::product(vec![(0..=n).collect()]).unwrap();
    let law = JointLaw::from_conditionals(space, p, &[binomial(n, q0), binomial(n, q1)], true)
        .unwrap();
    let n = law.space().len();
    Dgp::new(law, [vec![0.0; n], vec![1.0; n]], None, None, Assumption::Strong).unwrap()
}

/// Seeded DGP on a random space with K <= 2 and supports of at most 4 points.
pub fn seeded_dgp(seed: u64, t: u64, opts: SamplerOptions) -> Dgp {
    let mut rng = trial_rng(seed, t);
    let space = random_space(&mut rng, 2, 4);
    random_dgp(&space, &mut rng, opts)
}
