//! Per-step quadratic program over the control `u` and CLF relaxations
//! `delta`:
//!
//! ```text
//!     minimize    u' H u + p0 sum delta_k^2
//!     subject to  u_min <= u <= u_max
//!                 CLF rows      (soft, one delta each)
//!                 HOCBF rows    (one per visible disk)
//!                 speed rows    (degree-one barriers on v)
//!                 feasibility rows (one per visible set with a learned model)
//! ```

pub mod active_set;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certificates::{
    feasibility_row, CertificateError, ClassK, ClfSpec, DiskBarrier, HeadingLyapunov, Hocbf,
    LinearRow, Sense, SpeedBarrier, SpeedLyapunov,
};
use crate::dynamics::{Control, ControlBounds, MovingDisk, State};
use crate::learner::features::{FeatureMap, SetFrame};
use crate::learner::svm::Hypersurface;
use active_set::{solve_dense, DenseOutcome, DenseQp};

pub const MAX_ITER: usize = 500;

#[derive(Debug, Error, PartialEq)]
pub enum QpError {
    #[error("cost matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("active-set iteration cap ({0}) reached")]
    IterationLimit(usize),
    #[error("active set became linearly dependent")]
    Degenerate,
    #[error("malformed problem: {0}")]
    Malformed(String),
}

/// Source of a constraint row, used for logging slacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowTag {
    Clf(usize),
    Hocbf { disk: usize },
    SpeedLower,
    SpeedUpper,
    Feasibility { set: usize },
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpRow {
    pub row: LinearRow,
    /// Index of the relaxation variable this row uses, if any.
    pub relax: Option<usize>,
    pub tag: RowTag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    /// `q x q` symmetric positive definite weight on `u`.
    pub cost: Vec<Vec<f64>>,
    pub relax_penalty: f64,
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
    pub rows: Vec<QpRow>,
    pub n_relax: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub status: QpStatus,
    /// Empty when infeasible.
    pub u: Vec<f64>,
    pub delta: Vec<f64>,
    pub objective: f64,
    /// Multipliers for `[u >= u_min; -u >= -u_max; rows]`, or Farkas weights
    /// over the same list when infeasible.
    pub multipliers: Vec<f64>,
    pub iterations: usize,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }

    pub fn control(&self) -> Option<Control> {
        match (self.status, self.u.as_slice()) {
            (QpStatus::Optimal, [u1, u2]) => Some(Control::new(*u1, *u2)),
            _ => None,
        }
    }
}

impl QpProblem {
    /// Problem with no rows.
    pub fn new(cost: Vec<Vec<f64>>, relax_penalty: f64, u_min: Vec<f64>, u_max: Vec<f64>) -> Self {
        Self {
            cost,
            relax_penalty,
            u_min,
            u_max,
            rows: Vec::new(),
            n_relax: 0,
        }
    }

    pub fn control_dim(&self) -> usize {
        self.u_min.len()
    }

    pub fn num_vars(&self) -> usize {
        self.control_dim() + self.n_relax
    }

    pub fn push_hard(&mut self, row: LinearRow, tag: RowTag) {
        self.rows.push(QpRow {
            row,
            relax: None,
            tag,
        });
    }

    /// Adds a row with its own new relaxation variable.
    pub fn push_relaxed(&mut self, row: LinearRow, tag: RowTag) {
        let k = self.n_relax;
        self.n_relax += 1;
        self.rows.push(QpRow {
            row,
            relax: Some(k),
            tag,
        });
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let q = self.control_dim();
        if self.u_max.len() != q || self.cost.len() != q || self.cost.iter().any(|r| r.len() != q) {
            return Err(QpError::Malformed("dimension mismatch in cost or bounds".into()));
        }
        if self.u_min.iter().zip(&self.u_max).any(|(lo, hi)| !(lo <= hi)) {
            return Err(QpError::Malformed("u_min > u_max".into()));
        }
        if !(self.relax_penalty > 0.0) && self.n_relax > 0 {
            return Err(QpError::Malformed("relaxation penalty must be positive".into()));
        }
        for r in &self.rows {
            if r.row.coeff_u.len() != q {
                return Err(QpError::Malformed(format!(
                    "row has {} control coefficients, expected {q}",
                    r.row.coeff_u.len()
                )));
            }
            if !r.row.is_finite() {
                return Err(QpError::Malformed("non-finite row".into()));
            }
            if r.relax.is_some_and(|k| k >= self.n_relax) {
                return Err(QpError::Malformed("relaxation index out of range".into()));
            }
        }
        Ok(())
    }

    /// All constraints as `a' w >= b` over `w = (u, delta)`: lower bounds,
    /// upper bounds, then rows in order.
    pub fn stacked_constraints(&self) -> Vec<(Vec<f64>, f64)> {
        let q = self.control_dim();
        let nv = self.num_vars();
        let mut out = Vec::with_capacity(2 * q + self.rows.len());
        for i in 0..q {
            let mut a = vec![0.0; nv];
            a[i] = 1.0;
            out.push((a, self.u_min[i]));
        }
        for i in 0..q {
            let mut a = vec![0.0; nv];
            a[i] = -1.0;
            out.push((a, -self.u_max[i]));
        }
        for r in &self.rows {
            let mut a = vec![0.0; nv];
            a[..q].copy_from_slice(&r.row.coeff_u);
            if let Some(k) = r.relax {
                a[q + k] = r.row.coeff_delta;
            }
            let (a, b) = match r.row.sense {
                Sense::Geq => (a, r.row.rhs),
                Sense::Leq => (a.iter().map(|v| -v).collect(), -r.row.rhs),
            };
            out.push((a, b));
        }
        out
    }

    /// Hessian of `w' P w` (that is `2P`).
    pub fn hessian(&self) -> Vec<Vec<f64>> {
        let q = self.control_dim();
        let nv = self.num_vars();
        let mut h = vec![vec![0.0; nv]; nv];
        for i in 0..q {
            for j in 0..q {
                h[i][j] = self.cost[i][j] + self.cost[j][i];
            }
        }
        for k in 0..self.n_relax {
            h[q + k][q + k] = 2.0 * self.relax_penalty;
        }
        h
    }

    pub fn objective(&self, u: &[f64], delta: &[f64]) -> f64 {
        let q = self.control_dim();
        let mut j = 0.0;
        for i in 0..q {
            for k in 0..q {
                j += u[i] * self.cost[i][k] * u[k];
            }
        }
        j + self.relax_penalty * delta.iter().map(|d| d * d).sum::<f64>()
    }

    fn dense(&self, hessian: Vec<Vec<f64>>, constraints: Vec<(Vec<f64>, f64)>) -> DenseQp {
        let nv = hessian.len();
        DenseQp {
            hessian: DMatrix::from_fn(nv, nv, |i, j| hessian[i][j]),
            linear: DVector::zeros(nv),
            constraints: constraints
                .into_iter()
                .map(|(a, b)| (DVector::from_vec(a), b))
                .collect(),
        }
    }
}

/// Solve to optimality or return a certified infeasible verdict.
pub fn solve(p: &QpProblem) -> Result<QpSolution, QpError> {
    p.validate()?;
    let q = p.control_dim();
    let dense = p.dense(p.hessian(), p.stacked_constraints());
    match solve_dense(&dense, MAX_ITER)? {
        DenseOutcome::Optimal {
            x,
            multipliers,
            iterations,
        } => {
            // bounds are hard; remove round-off beyond the box
            let u: Vec<f64> = x.as_slice()[..q]
                .iter()
                .zip(p.u_min.iter().zip(&p.u_max))
                .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
                .collect();
            let delta = x.as_slice()[q..].to_vec();
            Ok(QpSolution {
                status: QpStatus::Optimal,
                objective: p.objective(&u, &delta),
                u,
                delta,
                multipliers,
                iterations,
            })
        }
        DenseOutcome::Infeasible {
            certificate,
            iterations,
            ..
        } => Ok(QpSolution {
            status: QpStatus::Infeasible,
            u: Vec::new(),
            delta: Vec::new(),
            objective: f64::INFINITY,
            multipliers: certificate,
            iterations,
        }),
    }
}

/// Feasibility only: relaxed rows can always be met by their free `delta`, so
/// this searches for the minimum-norm `u` meeting the bounds and hard rows.
pub fn check_feasible(p: &QpProblem) -> Result<bool, QpError> {
    p.validate()?;
    let q = p.control_dim();
    let mut constraints = Vec::with_capacity(2 * q + p.rows.len());
    for i in 0..q {
        let mut lo = vec![0.0; q];
        lo[i] = 1.0;
        constraints.push((lo, p.u_min[i]));
        let mut hi = vec![0.0; q];
        hi[i] = -1.0;
        constraints.push((hi, -p.u_max[i]));
    }
    for r in p.rows.iter() {
        if r.relax.is_some() && r.row.coeff_delta != 0.0 {
            continue;
        }
        let (a, b) = match r.row.sense {
            Sense::Geq => (r.row.coeff_u.clone(), r.row.rhs),
            Sense::Leq => (r.row.coeff_u.iter().map(|v| -v).collect(), -r.row.rhs),
        };
        constraints.push((a, b));
    }
    let identity = (0..q)
        .map(|i| (0..q).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let dense = p.dense(identity, constraints);
    Ok(matches!(
        solve_dense(&dense, MAX_ITER)?,
        DenseOutcome::Optimal { .. }
    ))
}

/// Residuals of the KKT system at an optimal solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal)
            .max(self.dual)
            .max(self.complementarity)
    }
}

/// Stationarity and complementarity are divided by `max(1, mean|lambda| / 100)`
/// (the scaling IPOPT uses), so near-parallel active rows with very large
/// multipliers do not turn rounding in the slacks into a spurious residual.
pub fn kkt_residuals(p: &QpProblem, sol: &QpSolution) -> Option<KktResiduals> {
    if !sol.is_optimal() {
        return None;
    }
    let w: Vec<f64> = sol.u.iter().chain(&sol.delta).cloned().collect();
    let h = p.hessian();
    let cons = p.stacked_constraints();
    let nv = w.len();
    let mut grad: Vec<f64> = (0..nv)
        .map(|i| (0..nv).map(|j| h[i][j] * w[j]).sum())
        .collect();
    let (mut primal, mut dual, mut comp) = (0.0f64, 0.0f64, 0.0f64);
    for ((a, b), &lam) in cons.iter().zip(&sol.multipliers) {
        let s: f64 = a.iter().zip(&w).map(|(a, w)| a * w).sum::<f64>() - b;
        primal = primal.max(-s);
        dual = dual.max(-lam);
        comp = comp.max((lam * s).abs());
        for (g, ai) in grad.iter_mut().zip(a) {
            *g -= lam * ai;
        }
    }
    let n = sol.multipliers.len().max(1) as f64;
    let scale = (sol.multipliers.iter().map(|l| l.abs()).sum::<f64>() / n / 100.0).max(1.0);
    Some(KktResiduals {
        stationarity: grad.iter().fold(0.0f64, |m, g| m.max(g.abs())) / scale,
        primal: primal.max(0.0),
        dual: dual.max(0.0),
        complementarity: comp / scale,
    })
}

/// Gains, bounds and weights that shape the per-step program.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub control_bounds: ControlBounds,
    /// `(V_min, V_max)` enforced as degree-one barrier rows.
    pub speed_limits: Option<(f64, f64)>,
    pub clf_epsilon: f64,
    /// Linear class-K gains `(k1, k2)` of the disk HOCBFs.
    pub hocbf_gains: [f64; 2],
    pub speed_gain: f64,
    /// Extended class-K gain on the learned feasibility rows.
    pub feasibility_gain: f64,
    pub cost: [[f64; 2]; 2],
    pub relax_penalty: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            control_bounds: ControlBounds::symmetric(0.2, 0.5),
            speed_limits: Some((0.0, 2.0)),
            clf_epsilon: 10.0,
            hocbf_gains: [1.0, 1.0],
            speed_gain: 1.0,
            feasibility_gain: 1.0,
            cost: [[1.0, 0.0], [0.0, 1.0]],
            relax_penalty: 1.0,
        }
    }
}

impl ControllerConfig {
    pub fn disk_hocbf(&self, disk: MovingDisk) -> Result<Hocbf<DiskBarrier>, CertificateError> {
        Hocbf::new(
            DiskBarrier::new(disk),
            self.hocbf_gains.iter().map(|&k| ClassK::linear(k)).collect(),
        )
    }

    pub fn speed_hocbfs(&self) -> Vec<(Hocbf<SpeedBarrier>, RowTag)> {
        let Some((lo, hi)) = self.speed_limits else {
            return Vec::new();
        };
        let a = vec![ClassK::linear(self.speed_gain)];
        vec![
            (
                Hocbf::new(SpeedBarrier::lower(lo), a.clone()).expect("degree one"),
                RowTag::SpeedLower,
            ),
            (
                Hocbf::new(SpeedBarrier::upper(hi), a).expect("degree one"),
                RowTag::SpeedUpper,
            ),
        ]
    }
}

/// CLF set-points: heading (omitted when holding station) and speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClfTargets {
    pub heading: Option<f64>,
    pub speed: f64,
}

/// Learned hypersurfaces keyed by unsafe-set type.
pub type ModelBank = BTreeMap<usize, Hypersurface>;

/// Result of assembling one step's program.
#[derive(Debug, Clone)]
pub struct Assembled {
    pub problem: QpProblem,
    /// Sets whose feasibility row was dropped as degenerate.
    pub dropped: Vec<usize>,
}

/// Group disks into unsafe sets by `set_id`, in ascending id order.
pub fn group_sets(obstacles: &[MovingDisk]) -> BTreeMap<usize, Vec<MovingDisk>> {
    let mut sets: BTreeMap<usize, Vec<MovingDisk>> = BTreeMap::new();
    for o in obstacles {
        sets.entry(o.set_id).or_default().push(*o);
    }
    sets
}

/// Stack bounds, CLF rows, one HOCBF row per disk and one feasibility row per
/// unsafe set whose type has a learned model. With an empty bank this is the
/// plain CBF-CLF program.
pub fn assemble(
    state: &State,
    obstacles: &[MovingDisk],
    targets: &ClfTargets,
    models: &ModelBank,
    features: FeatureMap,
    cfg: &ControllerConfig,
) -> Result<Assembled, CertificateError> {
    let x = state.to_array();
    let mut p = QpProblem::new(
        cfg.cost.iter().map(|r| r.to_vec()).collect(),
        cfg.relax_penalty,
        cfg.control_bounds.u_min.to_vec(),
        cfg.control_bounds.u_max.to_vec(),
    );
    let mut clf_idx = 0;
    if let Some(theta_d) = targets.heading {
        let clf = ClfSpec::new(HeadingLyapunov { target: theta_d }, cfg.clf_epsilon);
        p.push_relaxed(clf.row(&x), RowTag::Clf(clf_idx));
        clf_idx += 1;
    }
    let clf = ClfSpec::new(SpeedLyapunov { target: targets.speed }, cfg.clf_epsilon);
    p.push_relaxed(clf.row(&x), RowTag::Clf(clf_idx));

    for (i, disk) in obstacles.iter().enumerate() {
        p.push_hard(cfg.disk_hocbf(*disk)?.row(&x)?, RowTag::Hocbf { disk: i });
    }
    for (h, tag) in cfg.speed_hocbfs() {
        p.push_hard(h.row(&x)?, tag);
    }

    let mut dropped = Vec::new();
    if !models.is_empty() {
        for (set_id, disks) in group_sets(obstacles) {
            let Some(model) = models.get(&disks[0].type_id) else {
                continue;
            };
            let frame = SetFrame::of_disks(&disks).expect("non-empty set");
            match feasibility_row(
                model,
                features,
                state,
                &frame,
                ClassK::extended_linear(cfg.feasibility_gain),
            ) {
                Ok(row) => p.push_hard(row, RowTag::Feasibility { set: set_id }),
                Err(CertificateError::DegenerateRow(c)) => {
                    log::debug!("dropping degenerate feasibility row for set {set_id}: {c:?}");
                    dropped.push(set_id);
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(Assembled {
        problem: p,
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::svm::KernelParams;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn scalar(rows: Vec<LinearRow>) -> QpProblem {
        let mut p = QpProblem::new(vec![vec![1.0]], 1.0, vec![-2.0], vec![2.0]);
        for r in rows {
            p.push_hard(r, RowTag::Other);
        }
        p
    }

    #[test]
    fn active_constraint_example() {
        let p = scalar(vec![LinearRow::geq(vec![1.0], 1.0)]);
        let s = solve(&p).unwrap();
        assert!(s.is_optimal());
        assert_abs_diff_eq!(s.u[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.objective, 1.0, epsilon = 1e-12);
        assert!(kkt_residuals(&p, &s).unwrap().max() <= 1e-9);
        assert!(check_feasible(&p).unwrap());
    }

    #[test]
    fn contradictory_rows_example() {
        let leq = LinearRow {
            coeff_u: vec![1.0],
            coeff_delta: 0.0,
            rhs: 0.0,
            sense: Sense::Leq,
        };
        let p = scalar(vec![LinearRow::geq(vec![1.0], 1.0), leq]);
        let s = solve(&p).unwrap();
        assert_eq!(s.status, QpStatus::Infeasible);
        assert!(s.control().is_none());
        assert!(!check_feasible(&p).unwrap());
        // certificate: non-negative weights cancelling the normals
        let cons = p.stacked_constraints();
        assert!(s.multipliers.iter().all(|&y| y >= 0.0));
        let combo: f64 = cons.iter().zip(&s.multipliers).map(|((a, _), y)| a[0] * y).sum();
        assert_abs_diff_eq!(combo, 0.0, epsilon = 1e-12);
        let rhs: f64 = cons.iter().zip(&s.multipliers).map(|((_, b), y)| b * y).sum();
        assert!(rhs > 0.0);
    }

    #[test]
    fn empty_rows_are_feasible() {
        assert!(check_feasible(&scalar(vec![])).unwrap());
    }

    #[test]
    fn malformed_problem_is_rejected() {
        let p = scalar(vec![LinearRow::geq(vec![1.0, 2.0], 0.0)]);
        assert!(matches!(solve(&p), Err(QpError::Malformed(_))));
        let p = QpProblem::new(vec![vec![1.0]], 1.0, vec![1.0], vec![0.0]);
        assert!(matches!(solve(&p), Err(QpError::Malformed(_))));
    }

    #[test]
    fn assemble_without_obstacles() {
        let s = State::new(0.0, 0.0, 0.0, 1.0);
        let targets = ClfTargets {
            heading: Some(0.5),
            speed: 1.5,
        };
        let cfg = ControllerConfig {
            speed_limits: None,
            ..ControllerConfig::default()
        };
        let a = assemble(&s, &[], &targets, &ModelBank::new(), FeatureMap::Robot, &cfg).unwrap();
        assert_eq!(a.problem.n_relax, 2);
        assert!(a.problem.rows.iter().all(|r| r.relax.is_some()));
        // identity cost and p0 = 1
        assert_abs_diff_eq!(a.problem.objective(&[1.0, 2.0], &[3.0, 4.0]), 30.0, epsilon = 1e-12);
        let sol = solve(&a.problem).unwrap();
        assert!(sol.is_optimal());
        assert!(kkt_residuals(&a.problem, &sol).unwrap().max() <= 1e-6);
    }

    #[test]
    fn one_feasibility_row_per_set_sharing_the_type_model() {
        let s = State::new(0.0, 0.0, 0.3, 1.0);
        let disks = [
            MovingDisk::fixed([20.0, 0.0], 2.0).with_ids(0, 0),
            MovingDisk::fixed([0.0, 20.0], 2.0).with_ids(0, 1),
            MovingDisk::fixed([-20.0, 0.0], 2.0).with_ids(0, 2),
        ];
        let k = KernelParams::new(0.9, 0.4);
        let model = Hypersurface {
            kernel: k,
            feature_dim: 4,
            support_vectors: vec![vec![1.0, 1.0, 1.0, 1.0]],
            dual_coeffs: vec![0.1],
            bias: 1.0,
        };
        let bank = ModelBank::from([(0, model)]);
        let targets = ClfTargets {
            heading: Some(0.0),
            speed: 1.0,
        };
        let a = assemble(&s, &disks, &targets, &bank, FeatureMap::Robot, &ControllerConfig::default()).unwrap();
        let count = |f: fn(&RowTag) -> bool| a.problem.rows.iter().filter(|r| f(&r.tag)).count();
        assert_eq!(count(|t| matches!(t, RowTag::Hocbf { .. })), 3);
        assert_eq!(count(|t| matches!(t, RowTag::Feasibility { .. })), 3);
        assert_eq!(count(|t| matches!(t, RowTag::SpeedLower | RowTag::SpeedUpper)), 2);
    }

    fn arb_problem() -> impl Strategy<Value = QpProblem> {
        let row = (prop::collection::vec(-2.0..2.0f64, 2), -1.5..1.5f64, any::<bool>());
        (prop::collection::vec(row, 0..6), 0usize..3, 0.2..5.0f64).prop_map(|(rows, n_relax, p0)| {
            let mut p = QpProblem::new(
                vec![vec![2.0, 0.3], vec![0.3, 1.0]],
                p0,
                vec![-1.0, -0.5],
                vec![1.0, 0.5],
            );
            for (i, (c, rhs, relaxed)) in rows.into_iter().enumerate() {
                if relaxed && i < n_relax {
                    p.push_relaxed(
                        LinearRow {
                            coeff_u: c,
                            coeff_delta: -1.0,
                            rhs,
                            sense: Sense::Leq,
                        },
                        RowTag::Clf(i),
                    );
                } else {
                    p.push_hard(LinearRow::geq(c, rhs), RowTag::Other);
                }
            }
            p
        })
    }

    proptest! {
        #[test]
        fn optimal_solutions_satisfy_kkt(p in arb_problem()) {
            let s = solve(&p).unwrap();
            if let Some(r) = kkt_residuals(&p, &s) {
                prop_assert!(r.max() <= 1e-6, "{r:?}");
            }
        }

        #[test]
        fn phase_one_verdict_matches_full_solve(p in arb_problem()) {
            prop_assert_eq!(check_feasible(&p).unwrap(), solve(&p).unwrap().is_optimal());
        }

        #[test]
        fn solve_is_deterministic(p in arb_problem()) {
            let a = solve(&p).unwrap();
            let b = solve(&p).unwrap();
            prop_assert_eq!(a.u.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            b.u.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            prop_assert_eq!(a.status, b.status);
        }

        #[test]
        fn larger_penalty_never_grows_relaxation(p in arb_problem(), factor in 1.0..20.0f64) {
            let s1 = solve(&p).unwrap();
            let mut q = p.clone();
            q.relax_penalty *= factor;
            let s2 = solve(&q).unwrap();
            if s1.is_optimal() && s2.is_optimal() {
                let d1: f64 = s1.delta.iter().map(|d| d * d).sum();
                let d2: f64 = s2.delta.iter().map(|d| d * d).sum();
                prop_assert!(d2 <= d1 + 1e-9, "{d1} -> {d2}");
            }
        }
    }
}
