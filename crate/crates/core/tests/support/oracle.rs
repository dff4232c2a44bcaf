//! Reference solver for small strictly convex programs: enumerate every
//! candidate active set, solve its equality KKT system, keep a point that is
//! primal and dual feasible. That point is the unique optimum when one exists,
//! and none exists exactly when the constraints cannot all be met.

#![allow(dead_code)]

use feasible_cbf::certificates::{LinearRow, Sense};
use feasible_cbf::qp::{QpProblem, RowTag};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Optimal { w: Vec<f64>, objective: f64 },
    Infeasible,
}

fn subsets(m: usize, max_size: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(start: usize, m: usize, max_size: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        f(cur);
        if cur.len() == max_size {
            return;
        }
        for i in start..m {
            cur.push(i);
            rec(i + 1, m, max_size, cur, f);
            cur.pop();
        }
    }
    rec(0, m, max_size, &mut Vec::new(), f);
}

pub fn enumerate(p: &QpProblem) -> Verdict {
    let h = p.hessian();
    let nv = h.len();
    let hm = DMatrix::from_fn(nv, nv, |i, j| h[i][j]);
    let cons = p.stacked_constraints();
    let scale = 1.0 + cons.iter().map(|(_, b)| b.abs()).fold(0.0, f64::max);
    let tol = 1e-9 * scale;
    let mut best: Option<(f64, Vec<f64>)> = None;
    subsets(cons.len(), nv, &mut |act| {
        let k = act.len();
        let mut kkt = DMatrix::zeros(nv + k, nv + k);
        kkt.view_mut((0, 0), (nv, nv)).copy_from(&hm);
        let mut rhs = DVector::zeros(nv + k);
        for (r, &i) in act.iter().enumerate() {
            for j in 0..nv {
                kkt[(nv + r, j)] = cons[i].0[j];
                kkt[(j, nv + r)] = -cons[i].0[j];
            }
            rhs[nv + r] = cons[i].1;
        }
        let svd = kkt.clone().svd(true, true);
        if svd.singular_values.min() < 1e-10 * (1.0 + svd.singular_values.max()) {
            return;
        }
        let Ok(sol) = svd.solve(&rhs, 1e-14) else {
            return;
        };
        let w: Vec<f64> = sol.as_slice()[..nv].to_vec();
        if sol.as_slice()[nv..].iter().any(|&l| l < -tol) {
            return;
        }
        let primal_ok = cons
            .iter()
            .all(|(a, b)| a.iter().zip(&w).map(|(a, w)| a * w).sum::<f64>() >= b - tol);
        if !primal_ok {
            return;
        }
        let q = p.control_dim();
        let obj = p.objective(&w[..q], &w[q..]);
        if best.as_ref().is_none_or(|(o, _)| obj < *o) {
            best = Some((obj, w));
        }
    });
    match best {
        Some((objective, w)) => Verdict::Optimal { w, objective },
        None => Verdict::Infeasible,
    }
}

/// Random program with `q <= 3` controls, a box, and up to 8 rows, some of
/// them relaxed.
pub fn random_problem(rng: &mut ChaCha8Rng) -> QpProblem {
    let q = rng.random_range(1..=3);
    let l: Vec<Vec<f64>> = (0..q).map(|_| (0..q).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let cost: Vec<Vec<f64>> = (0..q)
        .map(|i| {
            (0..q)
                .map(|j| (0..q).map(|k| l[i][k] * l[j][k]).sum::<f64>() + if i == j { 0.2 } else { 0.0 })
                .collect()
        })
        .collect();
    let u_min: Vec<f64> = (0..q).map(|_| rng.random_range(-2.0..-0.1)).collect();
    let u_max: Vec<f64> = (0..q).map(|_| rng.random_range(0.1..2.0)).collect();
    let mut p = QpProblem::new(cost, rng.random_range(0.5..5.0), u_min, u_max);
    let n_rows = rng.random_range(0..=8);
    for i in 0..n_rows {
        let coeff: Vec<f64> = (0..q).map(|_| rng.random_range(-2.0..2.0)).collect();
        let rhs = rng.random_range(-3.0..3.0);
        if i < 3 && rng.random_bool(0.3) {
            p.push_relaxed(
                LinearRow {
                    coeff_u: coeff,
                    coeff_delta: -1.0,
                    rhs,
                    sense: Sense::Leq,
                },
                RowTag::Clf(i),
            );
        } else {
            p.push_hard(LinearRow::geq(coeff, rhs), RowTag::Other);
        }
    }
    p
}
