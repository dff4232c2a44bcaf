//! Primal-dual interior point for the SVM dual with a low-rank Hessian.
//!
//! The degree-2 kernel factors as `k(a, b) = phi(a).phi(b)` with a short
//! explicit feature vector, so `Q = V V'` with `V = diag(y) Phi` and each
//! Newton system is solved through the Woodbury identity in `O(n p^2)`.

use nalgebra::{DMatrix, DVector};

use crate::learner::svm::KernelParams;

/// Explicit feature vector of the degree-2 polynomial kernel.
pub fn feature_map(kernel: &KernelParams, z: &[f64]) -> Vec<f64> {
    let d = z.len();
    let mut out = Vec::with_capacity(1 + d + d * (d + 1) / 2);
    out.push(kernel.k1);
    let lin = (2.0 * kernel.k1 * kernel.k2).sqrt();
    out.extend(z.iter().map(|v| lin * v));
    let cross = std::f64::consts::SQRT_2 * kernel.k2;
    for i in 0..d {
        out.push(kernel.k2 * z[i] * z[i]);
        for j in i + 1..d {
            out.push(cross * z[i] * z[j]);
        }
    }
    out
}

/// Approximate minimizer of `1/2 a'Qa - e'a` over `0 <= a <= c`, `y'a = 0`.
/// Returns the iterate with the smallest scaled KKT residual.
pub fn dual_interior_point(v: &DMatrix<f64>, y: &[f64], c: f64, max_iter: usize) -> Option<Vec<f64>> {
    let n = v.nrows();
    let p = v.ncols();
    let yv = DVector::from_column_slice(y);
    let mut a = DVector::from_element(n, c / 2.0);
    let mut z = DVector::from_element(n, 1.0);
    let mut u = DVector::from_element(n, 1.0);
    let mut beta = 0.0;

    // late Newton systems lose accuracy, so the best iterate seen is returned
    let mut best: Option<(f64, DVector<f64>)> = None;
    for _ in 0..max_iter {
        let s = a.map(|ai| c - ai);
        let qa = v * (v.transpose() * &a);
        let rd = &qa - DVector::from_element(n, 1.0) + &yv * beta - &z + &u;
        let rp = yv.dot(&a);
        let mu = (a.dot(&z) + s.dot(&u)) / (2.0 * n as f64);
        let scale = 1.0 + qa.amax();
        let merit = (rd.amax() / scale).max(mu / scale).max(rp.abs() / c);
        match &best {
            Some((m, _)) if merit >= *m => {
                if merit > 1e6 * m {
                    break;
                }
            }
            _ => best = Some((merit, a.clone())),
        }
        if mu < 1e-12 * scale && rd.amax() < 1e-8 * scale && rp.abs() < 1e-10 * c {
            break;
        }

        let dg: DVector<f64> = DVector::from_fn(n, |i, _| z[i] / a[i] + u[i] / s[i]);
        let dinv = dg.map(|d| 1.0 / d);
        // G = I + V' D^-1 V
        let mut vd = v.clone();
        for (i, mut row) in vd.row_iter_mut().enumerate() {
            row *= dinv[i];
        }
        let g = DMatrix::identity(p, p) + v.transpose() * &vd;
        let Some(chol) = g.cholesky() else {
            break;
        };
        let minv = |b: &DVector<f64>| -> DVector<f64> {
            let db = b.component_mul(&dinv);
            let corr = chol.solve(&(v.transpose() * &db));
            db - vd.clone() * corr
        };
        let my = minv(&yv);
        let ymy = yv.dot(&my);
        if !(ymy > 0.0) {
            break;
        }

        let direction = |rz: &DVector<f64>, ru: &DVector<f64>| {
            let r = -&rd + rz.component_div(&a) - ru.component_div(&s);
            let mr = minv(&r);
            let db = (yv.dot(&mr) + rp) / ymy;
            let da = mr - &my * db;
            let dz = (rz - z.component_mul(&da)).component_div(&a);
            let du = (ru + u.component_mul(&da)).component_div(&s);
            (da, db, dz, du)
        };
        let step = |da: &DVector<f64>, dz: &DVector<f64>, du: &DVector<f64>| {
            let mut t: f64 = 1.0;
            for i in 0..n {
                if da[i] < 0.0 {
                    t = t.min(-a[i] / da[i]);
                }
                if da[i] > 0.0 {
                    t = t.min(s[i] / da[i]);
                }
                if dz[i] < 0.0 {
                    t = t.min(-z[i] / dz[i]);
                }
                if du[i] < 0.0 {
                    t = t.min(-u[i] / du[i]);
                }
            }
            t
        };

        // Mehrotra predictor-corrector
        let rz0 = -a.component_mul(&z);
        let ru0 = -s.component_mul(&u);
        let (da0, _, dz0, du0) = direction(&rz0, &ru0);
        let t0 = step(&da0, &dz0, &du0);
        let a_aff = &a + &da0 * t0;
        let s_aff = a_aff.map(|ai| c - ai);
        let mu_aff = (a_aff.dot(&(&z + &dz0 * t0)) + s_aff.dot(&(&u + &du0 * t0))) / (2.0 * n as f64);
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);
        let rz = rz0.map(|r| r + sigma * mu) - da0.component_mul(&dz0);
        let ru = ru0.map(|r| r + sigma * mu) + da0.component_mul(&du0);
        let (da, db, dz, du) = direction(&rz, &ru);
        let t = (0.995 * step(&da, &dz, &du)).min(1.0);
        let next = &a + &da * t;
        if !(t > 0.0) || !next.iter().all(|x| x.is_finite()) {
            break;
        }
        a = next;
        beta += db * t;
        z += &dz * t;
        u += &du * t;
    }
    let (_, a) = best?;
    a.iter().all(|x| x.is_finite()).then(|| a.iter().cloned().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn feature_map_reproduces_kernel() {
        let k = KernelParams::new(0.9, 0.4);
        let a = [0.3, -1.2, 2.5, 0.7, -4.0];
        let b = [1.1, 0.4, -0.6, 3.0, 0.2];
        let (fa, fb) = (feature_map(&k, &a), feature_map(&k, &b));
        assert_eq!(fa.len(), 21);
        let dot: f64 = fa.iter().zip(&fb).map(|(x, y)| x * y).sum();
        assert_relative_eq!(dot, k.eval(&a, &b), max_relative = 1e-12);
    }
}
