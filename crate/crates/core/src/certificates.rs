//! Barrier and Lyapunov certificates compiled to rows that are linear in the
//! control once the state is frozen at the start of a sampling interval.

use crate::dynamics::{wrap_angle, MovingDisk};
use crate::learner::features::{FeatureMap, SetFrame};
use crate::learner::svm::Hypersurface;
use crate::dynamics::State;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Control coefficients below this magnitude make a row degenerate.
pub const DEGENERATE_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum CertificateError {
    #[error("barrier undefined: state coincides with obstacle center")]
    Singular,
    #[error("relative degree {0} unsupported (expected 1 or 2)")]
    UnsupportedDegree(usize),
    #[error("expected {expected} class-K functions, got {got}")]
    AlphaCount { expected: usize, got: usize },
    #[error("class-K gain must be positive and finite, got {0}")]
    InvalidGain(f64),
    #[error("degenerate feasibility row: control coefficients {0:?} below tolerance")]
    DegenerateRow(Vec<f64>),
    #[error("feature dimension mismatch: hypersurface expects {expected}, features have {got}")]
    Dimension { expected: usize, got: usize },
}

/// Linear class-K function `alpha(s) = gain * s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassK {
    pub gain: f64,
    /// Extended class-K functions are defined on the whole real line.
    #[serde(default)]
    pub extended: bool,
}

impl ClassK {
    pub fn linear(gain: f64) -> Self {
        Self {
            gain,
            extended: false,
        }
    }

    pub fn extended_linear(gain: f64) -> Self {
        Self {
            gain,
            extended: true,
        }
    }

    pub fn validate(&self) -> Result<(), CertificateError> {
        if self.gain > 0.0 && self.gain.is_finite() {
            Ok(())
        } else {
            Err(CertificateError::InvalidGain(self.gain))
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.gain * s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Geq,
    Leq,
}

/// `coeff_u . u + coeff_delta * delta  (>= | <=)  rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRow {
    pub coeff_u: Vec<f64>,
    pub coeff_delta: f64,
    pub rhs: f64,
    pub sense: Sense,
}

impl LinearRow {
    pub fn geq(coeff_u: Vec<f64>, rhs: f64) -> Self {
        Self {
            coeff_u,
            coeff_delta: 0.0,
            rhs,
            sense: Sense::Geq,
        }
    }

    pub fn lhs(&self, u: &[f64], delta: f64) -> f64 {
        self.coeff_u.iter().zip(u).map(|(a, u)| a * u).sum::<f64>() + self.coeff_delta * delta
    }

    /// Signed margin, non-negative when the row holds.
    pub fn slack(&self, u: &[f64], delta: f64) -> f64 {
        let lhs = self.lhs(u, delta);
        match self.sense {
            Sense::Geq => lhs - self.rhs,
            Sense::Leq => self.rhs - lhs,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coeff_u.iter().all(|c| c.is_finite()) && self.coeff_delta.is_finite() && self.rhs.is_finite()
    }
}

/// Value of a barrier and its Lie derivatives up to its relative degree `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierJet {
    pub value: f64,
    /// `L_f^i b` for `i = 1..=m`.
    pub lie_drift: Vec<f64>,
    /// `L_g L_f^{m-1} b`.
    pub lie_control: Vec<f64>,
}

/// A constraint `b(x) >= 0` with analytic derivatives along the dynamics.
pub trait Barrier {
    fn relative_degree(&self) -> usize;
    fn jet(&self, x: &[f64]) -> Result<BarrierJet, CertificateError>;
}

/// `b = ||p - c|| - r` for a unicycle against a disk translating at constant
/// velocity. Relative degree two.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiskBarrier {
    pub disk: MovingDisk,
}

impl DiskBarrier {
    pub fn new(disk: MovingDisk) -> Self {
        Self { disk }
    }
}

impl Barrier for DiskBarrier {
    fn relative_degree(&self) -> usize {
        2
    }

    fn jet(&self, x: &[f64]) -> Result<BarrierJet, CertificateError> {
        let (theta, v) = (x[2], x[3]);
        let px = x[0] - self.disk.center[0];
        let py = x[1] - self.disk.center[1];
        let d = px.hypot(py);
        if d < 1e-12 {
            return Err(CertificateError::Singular);
        }
        let (s, c) = theta.sin_cos();
        let wx = v * c - self.disk.velocity[0];
        let wy = v * s - self.disk.velocity[1];
        let pw = px * wx + py * wy;
        let ww = wx * wx + wy * wy;
        let db = pw / d;
        let ddb = ww / d - pw * pw / (d * d * d);
        // d/dt of the robot velocity: (-v s, v c) u1 + (c, s) u2
        let g1 = (px * (-v * s) + py * (v * c)) / d;
        let g2 = (px * c + py * s) / d;
        Ok(BarrierJet {
            value: d - self.disk.radius,
            lie_drift: vec![db, ddb],
            lie_control: vec![g1, g2],
        })
    }
}

/// Degree-one speed limit; `v - bound >= 0` for a lower limit,
/// `bound - v >= 0` for an upper one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedBarrier {
    pub bound: f64,
    pub upper: bool,
}

impl SpeedBarrier {
    pub fn lower(bound: f64) -> Self {
        Self {
            bound,
            upper: false,
        }
    }

    pub fn upper(bound: f64) -> Self {
        Self { bound, upper: true }
    }
}

impl Barrier for SpeedBarrier {
    fn relative_degree(&self) -> usize {
        1
    }

    fn jet(&self, x: &[f64]) -> Result<BarrierJet, CertificateError> {
        let v = x[3];
        let (value, sign) = if self.upper {
            (self.bound - v, -1.0)
        } else {
            (v - self.bound, 1.0)
        };
        Ok(BarrierJet {
            value,
            lie_drift: vec![0.0],
            lie_control: vec![0.0, sign],
        })
    }
}

/// Coefficients of `prod_i (s + k_i)`, lowest power first.
fn characteristic(alphas: &[ClassK]) -> Vec<f64> {
    let mut poly = vec![1.0];
    for a in alphas {
        let mut next = vec![0.0; poly.len() + 1];
        for (i, c) in poly.iter().enumerate() {
            next[i] += a.gain * c;
            next[i + 1] += c;
        }
        poly = next;
    }
    poly
}

/// A barrier of relative degree `m` with its `m` class-K functions.
#[derive(Debug, Clone, PartialEq)]
pub struct Hocbf<B> {
    pub barrier: B,
    pub alphas: Vec<ClassK>,
}

impl<B: Barrier> Hocbf<B> {
    pub fn new(barrier: B, alphas: Vec<ClassK>) -> Result<Self, CertificateError> {
        let m = barrier.relative_degree();
        if !(1..=2).contains(&m) {
            return Err(CertificateError::UnsupportedDegree(m));
        }
        if alphas.len() != m {
            return Err(CertificateError::AlphaCount {
                expected: m,
                got: alphas.len(),
            });
        }
        for a in &alphas {
            a.validate()?;
        }
        Ok(Self { barrier, alphas })
    }

    pub fn relative_degree(&self) -> usize {
        self.alphas.len()
    }

    /// `psi_0 = b`, `psi_i = d/dt psi_{i-1} + alpha_i(psi_{i-1})` for `i < m`.
    pub fn psi_sequence(&self, x: &[f64]) -> Result<Vec<f64>, CertificateError> {
        let jet = self.barrier.jet(x)?;
        let derivs: Vec<f64> = std::iter::once(jet.value).chain(jet.lie_drift).collect();
        let m = self.relative_degree();
        // With linear class-K functions psi_i is prod_{l<=i}(d/dt + k_l) b.
        Ok((0..m)
            .map(|i| {
                characteristic(&self.alphas[..i])
                    .iter()
                    .zip(&derivs)
                    .map(|(c, d)| c * d)
                    .sum()
            })
            .collect())
    }

    /// `L_f^m b + L_g L_f^{m-1} b u + O(b) + alpha_m(psi_{m-1}) >= 0`.
    pub fn row(&self, x: &[f64]) -> Result<LinearRow, CertificateError> {
        let jet = self.barrier.jet(x)?;
        let derivs: Vec<f64> = std::iter::once(jet.value).chain(jet.lie_drift).collect();
        let drift: f64 = characteristic(&self.alphas)
            .iter()
            .zip(&derivs)
            .map(|(c, d)| c * d)
            .sum();
        Ok(LinearRow::geq(jet.lie_control, -drift))
    }
}

/// A Lyapunov candidate with its Lie derivatives.
pub trait Lyapunov {
    fn value(&self, x: &[f64]) -> f64;
    fn lie_drift(&self, x: &[f64]) -> f64;
    fn lie_control(&self, x: &[f64]) -> Vec<f64>;
}

/// `V = wrap(theta - theta_d)^2`; the target is held fixed within a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadingLyapunov {
    pub target: f64,
}

impl Lyapunov for HeadingLyapunov {
    fn value(&self, x: &[f64]) -> f64 {
        wrap_angle(x[2] - self.target).powi(2)
    }

    fn lie_drift(&self, _x: &[f64]) -> f64 {
        0.0
    }

    fn lie_control(&self, x: &[f64]) -> Vec<f64> {
        vec![2.0 * wrap_angle(x[2] - self.target), 0.0]
    }
}

/// `V = (v - v_0)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedLyapunov {
    pub target: f64,
}

impl Lyapunov for SpeedLyapunov {
    fn value(&self, x: &[f64]) -> f64 {
        (x[3] - self.target).powi(2)
    }

    fn lie_drift(&self, _x: &[f64]) -> f64 {
        0.0
    }

    fn lie_control(&self, x: &[f64]) -> Vec<f64> {
        vec![0.0, 2.0 * (x[3] - self.target)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClfSpec<L> {
    pub lyapunov: L,
    /// Exponential decay rate.
    pub epsilon: f64,
}

impl<L: Lyapunov> ClfSpec<L> {
    pub fn new(lyapunov: L, epsilon: f64) -> Self {
        assert!(epsilon > 0.0, "CLF decay rate must be positive");
        Self { lyapunov, epsilon }
    }

    /// `L_f V + L_g V u + eps V <= delta`, stored as
    /// `L_g V u - delta <= -(L_f V + eps V)`.
    pub fn row(&self, x: &[f64]) -> LinearRow {
        let rhs = -(self.lyapunov.lie_drift(x) + self.epsilon * self.lyapunov.value(x));
        LinearRow {
            coeff_u: self.lyapunov.lie_control(x),
            coeff_delta: -1.0,
            rhs,
            sense: Sense::Leq,
        }
    }
}

/// Degree-one barrier row on a learned hypersurface:
/// `grad H . z'(u) + alpha_H(H(z)) >= 0`.
pub fn feasibility_row(
    h: &Hypersurface,
    map: FeatureMap,
    s: &State,
    frame: &SetFrame,
    alpha: ClassK,
) -> Result<LinearRow, CertificateError> {
    let z = map.features(s, frame);
    if z.len() != h.feature_dim {
        return Err(CertificateError::Dimension {
            expected: h.feature_dim,
            got: z.len(),
        });
    }
    let value = h.eval(&z);
    let grad = h.grad(&z);
    let rates = map.feature_rates(s, frame);
    let drift: f64 = grad.iter().zip(&rates.drift).map(|(g, d)| g * d).sum();
    let mut coeff = [0.0; 2];
    for (g, row) in grad.iter().zip(&rates.gain) {
        coeff[0] += g * row[0];
        coeff[1] += g * row[1];
    }
    if coeff.iter().all(|c| c.abs() < DEGENERATE_TOL) {
        return Err(CertificateError::DegenerateRow(coeff.to_vec()));
    }
    Ok(LinearRow::geq(coeff.to_vec(), -(drift + alpha.eval(value))))
}
