//! Dense dual active-set method (Goldfarb-Idnani) for strictly convex QPs
//!
//! ```text
//!     minimize    1/2 x' G x + a' x
//!     subject to  n_i' x >= b_i
//! ```
//!
//! Starting from the unconstrained minimizer, the most violated constraint is
//! repeatedly added to the active set while dual feasibility is maintained.
//! When a violated constraint can be neither reached by a primal step nor
//! freed by dropping a constraint, the dual direction is a Farkas certificate:
//! non-negative weights `y` with `sum y_i n_i = 0` and `sum y_i b_i > 0`.

use nalgebra::{DMatrix, DVector};

use super::QpError;

/// Constraint violation (normalized by the row norm) below which a row holds.
pub const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct DenseQp {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    /// Rows `(n_i, b_i)` meaning `n_i' x >= b_i`.
    pub constraints: Vec<(DVector<f64>, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DenseOutcome {
    Optimal {
        x: DVector<f64>,
        /// Lagrange multiplier per constraint (zero when inactive).
        multipliers: Vec<f64>,
        iterations: usize,
    },
    Infeasible {
        /// Non-negative Farkas weights per constraint.
        certificate: Vec<f64>,
        /// `sum y_i b_i` for the certificate normalized to unit `max y_i`.
        gap: f64,
        iterations: usize,
    },
}

struct ActiveSet {
    idx: Vec<usize>,
    duals: Vec<f64>,
}

/// `(N*, H)` of the current active set: `N* = (N' G^-1 N)^-1 N' G^-1` and
/// `H = G^-1 - G^-1 N N*`.
fn projections(
    ginv: &DMatrix<f64>,
    normals: &[&DVector<f64>],
) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let n = ginv.nrows();
    if normals.is_empty() {
        return Some((DMatrix::zeros(0, n), ginv.clone()));
    }
    let cols: Vec<DVector<f64>> = normals.iter().map(|c| (*c).clone()).collect();
    let nmat = DMatrix::from_columns(&cols);
    let gn = ginv * &nmat;
    let m = nmat.transpose() * &gn;
    let minv = m.try_inverse()?;
    let nstar = &minv * gn.transpose();
    let h = ginv - &gn * &nstar;
    Some((nstar, h))
}

pub fn solve_dense(qp: &DenseQp, max_iter: usize) -> Result<DenseOutcome, QpError> {
    let dim = qp.hessian.nrows();
    let chol = qp
        .hessian
        .clone()
        .cholesky()
        .ok_or(QpError::NotPositiveDefinite)?;
    let ginv = chol.inverse();
    let norms: Vec<f64> = qp.constraints.iter().map(|(a, _)| a.norm()).collect();
    let g_norms: Vec<f64> = qp
        .constraints
        .iter()
        .map(|(a, _)| (a.transpose() * &ginv * a)[(0, 0)])
        .collect();

    let mut x = -(&ginv * &qp.linear);
    let mut active = ActiveSet {
        idx: Vec::new(),
        duals: Vec::new(),
    };
    let mut iterations = 0usize;

    loop {
        // most violated inactive constraint, scaled by its norm
        let mut worst: Option<(usize, f64)> = None;
        for (i, (a, b)) in qp.constraints.iter().enumerate() {
            if active.idx.contains(&i) {
                continue;
            }
            let s = a.dot(&x) - b;
            let scaled = if norms[i] > 0.0 { s / norms[i] } else { s };
            if scaled < -FEAS_TOL && worst.is_none_or(|(_, w)| scaled < w) {
                worst = Some((i, scaled));
            }
        }
        let Some((p, _)) = worst else {
            let mut multipliers = vec![0.0; qp.constraints.len()];
            for (&i, &u) in active.idx.iter().zip(&active.duals) {
                multipliers[i] = u;
            }
            return Ok(DenseOutcome::Optimal {
                x,
                multipliers,
                iterations,
            });
        };
        let (np, bp) = (&qp.constraints[p].0, qp.constraints[p].1);
        let mut dual_p = 0.0;

        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(QpError::IterationLimit(max_iter));
            }
            let normals: Vec<&DVector<f64>> =
                active.idx.iter().map(|&i| &qp.constraints[i].0).collect();
            let (nstar, h) = projections(&ginv, &normals).ok_or(QpError::Degenerate)?;
            // a full active set leaves no primal direction
            let z = if active.idx.len() >= dim {
                DVector::zeros(dim)
            } else {
                &h * np
            };
            let r = &nstar * np;

            // largest dual step keeping active multipliers non-negative
            let mut t1 = f64::INFINITY;
            let mut drop = None;
            for (k, &rk) in r.iter().enumerate() {
                if rk > 0.0 {
                    let t = active.duals[k] / rk;
                    if t < t1 {
                        t1 = t;
                        drop = Some(k);
                    }
                }
            }
            let curvature = z.dot(np);
            let t2 = if curvature <= 1e-10 * g_norms[p].max(f64::MIN_POSITIVE) {
                f64::INFINITY
            } else {
                -(np.dot(&x) - bp) / curvature
            };

            if t1.is_infinite() && t2.is_infinite() {
                let mut certificate = vec![0.0; qp.constraints.len()];
                certificate[p] = 1.0;
                for (k, &i) in active.idx.iter().enumerate() {
                    certificate[i] = (-r[k]).max(0.0);
                }
                let scale = certificate.iter().cloned().fold(0.0, f64::max);
                let gap = certificate
                    .iter()
                    .zip(&qp.constraints)
                    .map(|(y, (_, b))| y * b)
                    .sum::<f64>()
                    / scale;
                return Ok(DenseOutcome::Infeasible {
                    certificate,
                    gap,
                    iterations,
                });
            }

            let t = t1.min(t2);
            if t2.is_finite() {
                x += &z * t;
            }
            for (u, rk) in active.duals.iter_mut().zip(r.iter()) {
                *u -= t * rk;
            }
            dual_p += t;

            if t2 <= t1 {
                active.idx.push(p);
                active.duals.push(dual_p);
                break;
            }
            let k = drop.expect("finite t1 has a blocking constraint");
            active.idx.remove(k);
            active.duals.remove(k);
        }
    }
}
