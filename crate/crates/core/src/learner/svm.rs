//! Soft-margin SVM with the inhomogeneous degree-2 polynomial kernel
//! `k(y, z) = (k1 + k2 y.z)^2`. An interior-point estimate of the dual is
//! polished by SMO with second-order working-set selection.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::learner::ipm::{dual_interior_point, feature_map};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SvmError {
    #[error("training data contains a single class")]
    SingleClass,
    #[error("training data is empty")]
    Empty,
    #[error("penalty C must be positive, got {0}")]
    InvalidPenalty(f64),
    #[error("kernel parameters must be positive (k1 = {k1}, k2 = {k2})")]
    InvalidKernel { k1: f64, k2: f64 },
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("SMO did not converge in {iterations} iterations (gap {gap:.3e})")]
    NotConverged { iterations: usize, gap: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Feasible,
    Infeasible,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Feasible => 1.0,
            Label::Infeasible => -1.0,
        }
    }

    pub fn from_sign(s: f64) -> Self {
        if s >= 0.0 {
            Label::Feasible
        } else {
            Label::Infeasible
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: Vec<f64>,
    pub label: Label,
}

impl LabeledSample {
    pub fn new(features: Vec<f64>, label: Label) -> Self {
        Self { features, label }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    pub k1: f64,
    pub k2: f64,
    /// Always 2.
    #[serde(default = "KernelParams::default_degree")]
    pub degree: u32,
}

impl KernelParams {
    pub fn new(k1: f64, k2: f64) -> Self {
        Self { k1, k2, degree: 2 }
    }

    fn default_degree() -> u32 {
        2
    }

    pub fn validate(&self) -> Result<(), SvmError> {
        if self.k1 > 0.0 && self.k2 > 0.0 && self.k1.is_finite() && self.k2.is_finite() && self.degree == 2 {
            Ok(())
        } else {
            Err(SvmError::InvalidKernel {
                k1: self.k1,
                k2: self.k2,
            })
        }
    }

    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let t = self.k1 + self.k2 * dot(a, b);
        t * t
    }
}

impl Default for KernelParams {
    fn default() -> Self {
        Self::new(0.9, 0.4)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Decision function `H(z) = sum_i c_i k(sv_i, z) + bias`, with `c_i = alpha_i y_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypersurface {
    pub kernel: KernelParams,
    pub feature_dim: usize,
    pub support_vectors: Vec<Vec<f64>>,
    pub dual_coeffs: Vec<f64>,
    pub bias: f64,
}

impl Hypersurface {
    /// Constant decision function.
    pub fn constant(kernel: KernelParams, feature_dim: usize, bias: f64) -> Self {
        Self {
            kernel,
            feature_dim,
            support_vectors: Vec::new(),
            dual_coeffs: Vec::new(),
            bias,
        }
    }

    pub fn check_dim(&self, z: &[f64]) -> Result<(), SvmError> {
        if z.len() == self.feature_dim {
            Ok(())
        } else {
            Err(SvmError::Dimension {
                expected: self.feature_dim,
                got: z.len(),
            })
        }
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        debug_assert_eq!(z.len(), self.feature_dim);
        self.support_vectors
            .iter()
            .zip(&self.dual_coeffs)
            .map(|(sv, c)| c * self.kernel.eval(sv, z))
            .sum::<f64>()
            + self.bias
    }

    /// `grad H(z) = sum_i c_i 2 k2 (k1 + k2 sv_i.z) sv_i`.
    pub fn grad(&self, z: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.feature_dim];
        let KernelParams { k1, k2, .. } = self.kernel;
        for (sv, c) in self.support_vectors.iter().zip(&self.dual_coeffs) {
            let w = c * 2.0 * k2 * (k1 + k2 * dot(sv, z));
            for (gi, si) in g.iter_mut().zip(sv) {
                *gi += w * si;
            }
        }
        g
    }

    pub fn try_eval(&self, z: &[f64]) -> Result<f64, SvmError> {
        self.check_dim(z)?;
        Ok(self.eval(z))
    }

    pub fn try_grad(&self, z: &[f64]) -> Result<Vec<f64>, SvmError> {
        self.check_dim(z)?;
        Ok(self.grad(z))
    }

    pub fn classify(&self, z: &[f64]) -> Label {
        Label::from_sign(self.eval(z))
    }

    /// Fraction of samples whose label matches the sign of `H`.
    pub fn accuracy(&self, data: &[LabeledSample]) -> f64 {
        if data.is_empty() {
            return f64::NAN;
        }
        let hits = data
            .iter()
            .filter(|s| self.classify(&s.features) == s.label)
            .count();
        hits as f64 / data.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    /// Soft-margin penalty.
    pub c: f64,
    /// Stopping tolerance on the maximal KKT violation.
    pub tol: f64,
    /// Iteration cap is `max_passes * n` pair updates (at least 10M).
    pub max_passes: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 10.0,
            tol: 1e-3,
            max_passes: 50,
        }
    }
}

/// Full dual solution, kept for diagnostics and tests.
#[derive(Debug, Clone)]
pub struct SvmFit {
    pub hypersurface: Hypersurface,
    pub alphas: Vec<f64>,
    pub labels: Vec<f64>,
    pub iterations: usize,
    pub kkt_gap: f64,
}

/// Kernel rows on demand with FIFO eviction.
struct KernelRows<'a> {
    data: &'a [LabeledSample],
    kernel: KernelParams,
    rows: Vec<Option<Vec<f64>>>,
    order: VecDeque<usize>,
    capacity: usize,
}

impl<'a> KernelRows<'a> {
    fn new(data: &'a [LabeledSample], kernel: KernelParams) -> Self {
        let n = data.len();
        // ~256 MB of cached rows
        let capacity = ((32usize << 20) / n.max(1)).clamp(2, n.max(2));
        Self {
            data,
            kernel,
            rows: vec![None; n],
            order: VecDeque::new(),
            capacity,
        }
    }

    /// Compute row `i` if missing, never evicting `keep`.
    fn ensure(&mut self, i: usize, keep: Option<usize>) {
        if self.rows[i].is_some() {
            return;
        }
        if self.order.len() >= self.capacity {
            if let Some(mut old) = self.order.pop_front() {
                if Some(old) == keep {
                    self.order.push_back(old);
                    old = self.order.pop_front().expect("capacity >= 2");
                }
                self.rows[old] = None;
            }
        }
        let zi = &self.data[i].features;
        let row = self
            .data
            .iter()
            .map(|s| self.kernel.eval(zi, &s.features))
            .collect();
        self.rows[i] = Some(row);
        self.order.push_back(i);
    }

    fn row(&self, i: usize) -> &[f64] {
        self.rows[i].as_deref().expect("row ensured")
    }
}

/// Interior-point estimate of the dual optimum, snapped to the box and
/// repaired so that `y'a = 0` holds exactly enough for SMO to continue from.
fn warm_start(data: &[LabeledSample], y: &[f64], kernel: KernelParams, c: f64) -> Vec<f64> {
    let n = data.len();
    let p = feature_map(&kernel, &data[0].features).len();
    let mut v = DMatrix::zeros(n, p);
    for (i, s) in data.iter().enumerate() {
        for (k, f) in feature_map(&kernel, &s.features).into_iter().enumerate() {
            v[(i, k)] = y[i] * f;
        }
    }
    let Some(mut a) = dual_interior_point(&v, y, c, 200) else {
        return vec![0.0; n];
    };
    for ai in &mut a {
        if *ai < 1e-9 * c {
            *ai = 0.0;
        } else if *ai > c * (1.0 - 1e-9) {
            *ai = c;
        }
    }
    if let Some(exact) = crossover(&v, y, &a, c) {
        a = exact;
    }
    // push the residual of y'a onto components with room to move
    for _ in 0..3 {
        let r: f64 = a.iter().zip(y).map(|(ai, yi)| ai * yi).sum();
        if r == 0.0 {
            break;
        }
        let mut left = r.abs();
        for t in 0..n {
            if left == 0.0 {
                break;
            }
            // decreasing y_t a_t by `left` when r > 0
            let dir = -r.signum() * y[t];
            let room = if dir > 0.0 { c - a[t] } else { a[t] };
            let m = room.min(left);
            if m > 0.0 {
                a[t] += dir * m;
                left -= m;
            }
        }
    }
    a
}

/// Primal active-set refinement of an interior-point estimate: the free set
/// starts from the strictly interior multipliers, each step solves the
/// reduced KKT system `(Q a)_F + y_F b = 1` with the bounded entries held, a
/// ratio test pins entries that would leave the box, and bounded entries that
/// violate their sign condition are released.
fn crossover(v: &DMatrix<f64>, y: &[f64], a: &[f64], c: f64) -> Option<Vec<f64>> {
    const VIOLATION: f64 = 1e-6;
    let n = a.len();
    let mut free: Vec<bool> = (0..n).map(|i| a[i] > 1e-6 * c && a[i] < c * (1.0 - 1e-6)).collect();
    let mut alpha: Vec<f64> = (0..n)
        .map(|i| if free[i] { a[i] } else if a[i] >= c / 2.0 { c } else { 0.0 })
        .collect();
    for _ in 0..(4 * n).max(200) {
        let idx: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
        let nf = idx.len();
        if nf > 400 {
            return None;
        }
        let mut held = alpha.clone();
        for &i in &idx {
            held[i] = 0.0;
        }
        let w_held = v.transpose() * DVector::from_column_slice(&held);
        let vf = DMatrix::from_fn(nf, v.ncols(), |r, k| v[(idx[r], k)]);
        let mut m = DMatrix::zeros(nf + 1, nf + 1);
        m.view_mut((0, 0), (nf, nf)).copy_from(&(&vf * vf.transpose()));
        let mut rhs = DVector::zeros(nf + 1);
        for (r, &i) in idx.iter().enumerate() {
            m[(r, nf)] = y[i];
            m[(nf, r)] = y[i];
            rhs[r] = 1.0 - (vf.row(r) * &w_held)[0];
        }
        rhs[nf] = -held.iter().zip(y).map(|(ai, yi)| ai * yi).sum::<f64>();
        let sol = m.svd(true, true).solve(&rhs, 1e-12).ok()?;

        // ratio test toward the face minimizer
        let mut t = 1.0;
        let mut block = None;
        for (r, &i) in idx.iter().enumerate() {
            let d = sol[r] - alpha[i];
            let room = if d < 0.0 { -alpha[i] / d } else if d > 0.0 { (c - alpha[i]) / d } else { f64::INFINITY };
            if room < t {
                t = room;
                block = Some(i);
            }
        }
        for (r, &i) in idx.iter().enumerate() {
            alpha[i] += t * (sol[r] - alpha[i]);
        }
        if let Some(i) = block {
            alpha[i] = if alpha[i] >= c / 2.0 { c } else { 0.0 };
            free[i] = false;
            continue;
        }
        let b = if nf > 0 { sol[nf] } else { return None };
        let w = v.transpose() * DVector::from_column_slice(&alpha);
        let qa = v * w;
        let mut worst = (VIOLATION, None);
        for i in (0..n).filter(|&i| !free[i]) {
            let g = qa[i] - 1.0 + b * y[i];
            let viol = if alpha[i] == 0.0 { -g } else { g };
            if viol > worst.0 {
                worst = (viol, Some(i));
            }
        }
        match worst.1 {
            Some(i) => free[i] = true,
            None => return Some(alpha),
        }
    }
    None
}

/// Train a soft-margin SVM on `data`.
pub fn train_svm(
    data: &[LabeledSample],
    kernel: KernelParams,
    cfg: &SvmConfig,
) -> Result<SvmFit, SvmError> {
    kernel.validate()?;
    if !(cfg.c > 0.0) {
        return Err(SvmError::InvalidPenalty(cfg.c));
    }
    let n = data.len();
    if n == 0 {
        return Err(SvmError::Empty);
    }
    let dim = data[0].features.len();
    if let Some(bad) = data.iter().find(|s| s.features.len() != dim) {
        return Err(SvmError::Dimension {
            expected: dim,
            got: bad.features.len(),
        });
    }
    let y: Vec<f64> = data.iter().map(|s| s.label.sign()).collect();
    if y.iter().all(|&v| v > 0.0) || y.iter().all(|&v| v < 0.0) {
        return Err(SvmError::SingleClass);
    }

    let c = cfg.c;
    let diag: Vec<f64> = data
        .iter()
        .map(|s| kernel.eval(&s.features, &s.features))
        .collect();
    let mut alpha = warm_start(data, &y, kernel, c);
    // v = -y * grad of 1/2 a'Qa - e'a, so selection works on v directly
    let mut v: Vec<f64> = {
        let phi: Vec<Vec<f64>> = data.iter().map(|s| feature_map(&kernel, &s.features)).collect();
        let mut w = vec![0.0; phi[0].len()];
        for t in 0..n {
            if alpha[t] != 0.0 {
                for (wk, fk) in w.iter_mut().zip(&phi[t]) {
                    *wk += alpha[t] * y[t] * fk;
                }
            }
        }
        (0..n)
            .map(|t| y[t] - phi[t].iter().zip(&w).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    };
    let mut rows = KernelRows::new(data, kernel);
    let max_iter = (cfg.max_passes * n).max(10_000_000);
    const TAU: f64 = 1e-12;

    let in_up = |a: f64, y: f64| (y > 0.0 && a < c) || (y < 0.0 && a > 0.0);
    let in_low = |a: f64, y: f64| (y > 0.0 && a > 0.0) || (y < 0.0 && a < c);
    let mut up: Vec<bool> = (0..n).map(|t| in_up(alpha[t], y[t])).collect();
    let mut low: Vec<bool> = (0..n).map(|t| in_low(alpha[t], y[t])).collect();

    let mut iterations = 0;
    let gap = loop {
        // i: maximal violator in I_up; gmin bounds I_low
        let mut gmax = f64::NEG_INFINITY;
        let mut gmin = f64::INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            let vt = v[t];
            if up[t] && vt > gmax {
                gmax = vt;
                i_sel = t;
            }
            if low[t] && vt < gmin {
                gmin = vt;
            }
        }
        let gap = gmax - gmin;
        if gap < cfg.tol || i_sel == usize::MAX {
            break gap;
        }
        if iterations >= max_iter {
            return Err(SvmError::NotConverged { iterations, gap });
        }
        let i = i_sel;
        rows.ensure(i, None);
        // j: second-order selection in I_low
        let mut j_sel = usize::MAX;
        let mut best = f64::INFINITY;
        {
            let ki = rows.row(i);
            let di = diag[i];
            for t in 0..n {
                let b = gmax - v[t];
                if low[t] && b > 0.0 {
                    let mut a = di + diag[t] - 2.0 * ki[t];
                    if a <= 0.0 {
                        a = TAU;
                    }
                    let score = -(b * b) / a;
                    if score < best {
                        best = score;
                        j_sel = t;
                    }
                }
            }
        }
        if j_sel == usize::MAX {
            break gap;
        }
        let j = j_sel;
        rows.ensure(j, Some(i));
        let (ki, kj) = (rows.row(i), rows.row(j));
        let (gi, gj) = (-y[i] * v[i], -y[j] * v[j]);

        let (old_ai, old_aj) = (alpha[i], alpha[j]);
        let mut quad = diag[i] + diag[j] - 2.0 * ki[j];
        if quad <= 0.0 {
            quad = TAU;
        }
        // LIBSVM two-variable update, clipped to the box while keeping y'a fixed
        let (mut ai, mut aj);
        if y[i] != y[j] {
            let delta = (-gi - gj) / quad;
            let diff = old_ai - old_aj;
            ai = old_ai + delta;
            aj = old_aj + delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let delta = (gi - gj) / quad;
            let sum = old_ai + old_aj;
            ai = old_ai - delta;
            aj = old_aj + delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alpha[i] = ai;
        alpha[j] = aj;
        for k in [i, j] {
            up[k] = in_up(alpha[k], y[k]);
            low[k] = in_low(alpha[k], y[k]);
        }
        // grad_t += y_t (y_i K_it dai + y_j K_jt daj)
        let (wi, wj) = (y[i] * (ai - old_ai), y[j] * (aj - old_aj));
        for ((vt, &a), &b) in v.iter_mut().zip(ki).zip(kj) {
            *vt -= wi * a + wj * b;
        }
        iterations += 1;
    };

    // rho from free vectors, else midpoint of the feasible interval
    let (mut sum, mut count) = (0.0, 0usize);
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in 0..n {
        // y * grad
        let yg = -v[t];
        if alpha[t] > 0.0 && alpha[t] < c {
            sum += yg;
            count += 1;
        } else if (alpha[t] >= c && y[t] < 0.0) || (alpha[t] <= 0.0 && y[t] > 0.0) {
            ub = ub.min(yg);
        } else {
            lb = lb.max(yg);
        }
    }
    let rho = if count > 0 {
        sum / count as f64
    } else {
        (ub + lb) / 2.0
    };

    let mut support_vectors = Vec::new();
    let mut dual_coeffs = Vec::new();
    for t in 0..n {
        if alpha[t] > 1e-8 {
            support_vectors.push(data[t].features.clone());
            dual_coeffs.push(alpha[t] * y[t]);
        }
    }
    Ok(SvmFit {
        hypersurface: Hypersurface {
            kernel,
            feature_dim: dim,
            support_vectors,
            dual_coeffs,
            bias: -rho,
        },
        alphas: alpha,
        labels: y,
        iterations,
        kkt_gap: gap,
    })
}
