//! Loss-Hessian diagonal of the realized linear networks and the KL pieces
//! built from it.

use rayon::prelude::*;

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::network::{forward_unchecked, jacobian_from_pass, MlpParams};
use crate::scalar::Real;
use crate::trainer::cross_entropy;

/// Samples per parallel work unit. Partial sums are combined in chunk order,
/// so the result does not depend on the number of threads.
const CHUNK: usize = 32;

/// Gauss-Newton diagonal of one sample, added into `acc`:
/// `Σ_c p_c J[c,j]² − (Σ_c p_c J[c,j])²` for every parameter `j`.
fn add_sample_diag<T: Real>(params: &MlpParams<T>, x: &[T], y: usize, acc: &mut [T]) {
    let pass = forward_unchecked(params, x);
    let (_, probs) = cross_entropy(pass.logits(), y);
    let jac = jacobian_from_pass(params, &pass, x);
    for (j, a) in acc.iter_mut().enumerate() {
        let mut second = T::zero();
        let mut first = T::zero();
        for (c, &p) in probs.iter().enumerate() {
            let g = jac[(c, j)];
            second = second + p * g * g;
            first = first + p * g;
        }
        *a = *a + (second - first * first).max(T::zero());
    }
}

/// `H̃[j,j] = (1/n) Σ_i g_ijᵀ (diag(p_i) − p_i p_iᵀ) g_ij` with `g_ij` the
/// `j`-th Jacobian column of the realized network at `x_i`.
///
/// Each parameter enters a realized linear network linearly, so this
/// Gauss-Newton expression is the exact per-coordinate second derivative of
/// the mean cross-entropy (away from activation boundaries).
pub fn hessian_diag<T: Real>(params: &MlpParams<T>, ds: &LabeledDataset<T>) -> Vec<T> {
    let p = params.num_params();
    let rows: Vec<usize> = (0..ds.len()).collect();
    let partials: Vec<Vec<T>> = rows
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = vec![T::zero(); p];
            for &i in chunk {
                let (x, y) = ds.sample(i);
                add_sample_diag(params, x, y, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = vec![T::zero(); p];
    for part in partials {
        for (t, v) in total.iter_mut().zip(part) {
            *t = *t + v;
        }
    }
    let inv = T::one() / T::from_usize_lossy(ds.len());
    for t in &mut total {
        *t = *t * inv;
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HessianSummary<T> {
    pub max: T,
    pub mean: T,
}

impl<T: Real> HessianSummary<T> {
    pub fn of(hdiag: &[T]) -> Self {
        let max = hdiag.iter().copied().fold(T::zero(), T::max);
        let mean = if hdiag.is_empty() {
            T::zero()
        } else {
            hdiag.iter().copied().sum::<T>() / T::from_usize_lossy(hdiag.len())
        };
        Self { max, mean }
    }
}

fn check_lengths<T>(a: &[T], b: &[T]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::arg(format!(
            "length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

#[inline]
fn above_threshold<T: Real>(h: T, prior_var: T) -> bool {
    h * prior_var > T::one()
}

/// `ν_j² = min{ω_j², 1/H̃[j,j]}`; a zero curvature entry keeps `ν_j² = ω_j²`.
pub fn posterior_variances<T: Real>(hdiag: &[T], prior_vars: &[T]) -> Result<Vec<T>> {
    check_lengths(hdiag, prior_vars)?;
    Ok(hdiag
        .iter()
        .zip(prior_vars)
        .map(|(&h, &w)| {
            if above_threshold(h, w) {
                T::one() / h
            } else {
                w
            }
        })
        .collect())
}

/// `Σ_j ln(max{H̃[j,j], 1/ω_j²} · ω_j²)` and the number `p̃` of entries above
/// the threshold `1/ω_j²`.
pub fn effective_curvature<T: Real>(hdiag: &[T], prior_vars: &[T]) -> Result<(T, usize)> {
    check_lengths(hdiag, prior_vars)?;
    let mut total = T::zero();
    let mut count = 0;
    for (&h, &w) in hdiag.iter().zip(prior_vars) {
        if above_threshold(h, w) {
            total = total + (h * w).ln();
            count += 1;
        }
    }
    Ok((total, count))
}

/// `Σ_j (θ_j − θ0_j)² / ω_j²`.
pub fn l2_term<T: Real>(theta: &[T], theta0: &[T], prior_vars: &[T]) -> Result<T> {
    check_lengths(theta, theta0)?;
    check_lengths(theta, prior_vars)?;
    Ok(theta
        .iter()
        .zip(theta0)
        .zip(prior_vars)
        .map(|((&t, &t0), &w)| (t - t0) * (t - t0) / w)
        .sum())
}

/// KL divergence between diagonal Gaussians `N(μ, diag ν²)` and `N(μ', diag ω²)`:
/// `½ Σ_j [ν_j²/ω_j² + ln(ω_j²/ν_j²) − 1 + (μ_j − μ'_j)²/ω_j²]`.
pub fn kl_diag_gaussian<T: Real>(
    post_mean: &[T],
    post_vars: &[T],
    prior_mean: &[T],
    prior_vars: &[T],
) -> Result<T> {
    check_lengths(post_mean, post_vars)?;
    check_lengths(post_mean, prior_mean)?;
    check_lengths(post_mean, prior_vars)?;
    if post_vars
        .iter()
        .chain(prior_vars)
        .any(|&v| !(v > T::zero()) || !v.is_finite())
    {
        return Err(Error::arg("variances must be positive and finite"));
    }
    let mut total = T::zero();
    for j in 0..post_mean.len() {
        let ratio = post_vars[j] / prior_vars[j];
        let diff = post_mean[j] - prior_mean[j];
        total = total + ratio - ratio.ln() - T::one() + diff * diff / prior_vars[j];
    }
    Ok(T::lit(0.5) * total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::rng::{seeded, standard_normal};
    use rand::Rng;

    #[test]
    fn single_effective_linear_layer() {
        // W1 = [1], W2 = 0 (2x1), x = 1: logits 0, p = (1/2, 1/2);
        // the logit-0 weight has curvature p(1-p)x² = 1/4.
        let net: MlpParams<f64> =
            MlpParams::new(vec![Matrix::identity(1), Matrix::zeros(2, 1)]).unwrap();
        let ds = LabeledDataset::new(Matrix::from_vec(1, 1, vec![1.0]).unwrap(), vec![0], 2, "t")
            .unwrap();
        let h = hessian_diag(&net, &ds);
        assert_eq!(h.len(), 3);
        assert!((h[1] - 0.25).abs() < 1e-15);
        assert!((h[2] - 0.25).abs() < 1e-15);
        assert_eq!(h[0], 0.0);

        // finite-difference oracle on the logit-0 weight
        let loss = |w: f64| {
            let mut t = net.flatten();
            t[1] = w;
            let m = MlpParams::unflatten(&net.widths(), &t).unwrap();
            crate::network::loss_gradient(&m, ds.features(), ds.labels())
                .unwrap()
                .0
        };
        let step = 1e-3;
        let fd = (loss(step) - 2.0 * loss(0.0) + loss(-step)) / (step * step);
        assert!((fd - h[1]).abs() <= 1e-4 * h[1]);
    }

    #[test]
    fn nonnegative_and_duplication_invariant() {
        let mut rng = seeded(3);
        let net: MlpParams<f64> = MlpParams::gaussian(&[3, 6, 3], 1.0, &mut rng).unwrap();
        let data: Vec<f64> = (0..30).map(|_| standard_normal(&mut rng)).collect();
        let labels: Vec<usize> = (0..10).map(|_| rng.random_range(0..3)).collect();
        let ds =
            LabeledDataset::new(Matrix::from_vec(10, 3, data).unwrap(), labels, 3, "t").unwrap();
        let h = hessian_diag(&net, &ds);
        assert!(h.iter().all(|&v| v >= 0.0));
        let twice = ds.concat(&ds).unwrap();
        let h2 = hessian_diag(&net, &twice);
        for (a, b) in h.iter().zip(&h2) {
            assert!((a - b).abs() <= 1e-15 * a.max(1.0));
        }
    }

    #[test]
    fn posterior_variance_rules() {
        let w = [2.0, 4.0, 0.5];
        assert_eq!(posterior_variances(&[0.0; 3], &w).unwrap(), w.to_vec());
        let h: Vec<f64> = w.iter().map(|&v| 2.0 / v).collect();
        let nu = posterior_variances(&h, &w).unwrap();
        for (n, o) in nu.iter().zip(&w) {
            assert!((n - o / 2.0).abs() < 1e-15);
        }
        let mixed = posterior_variances(&[10.0, 0.1, 1.0], &w).unwrap();
        assert!(mixed.iter().zip(&w).all(|(n, o)| n <= o && *n > 0.0));
        assert!(posterior_variances(&[1.0], &w).is_err());
    }

    #[test]
    fn effective_curvature_rules() {
        let w = [1.0, 2.0, 0.25];
        let (ec, pt) = effective_curvature(&[0.5, 0.5, 4.0], &w).unwrap();
        assert_eq!((ec, pt), (0.0, 0));

        let e = std::f64::consts::E;
        let (ec, pt) = effective_curvature(&[0.0, e / 2.0, 0.0], &w).unwrap();
        assert!((ec - 1.0).abs() < 1e-15 && pt == 1);

        let h = [3.0, 7.0, 40.0];
        let (base, _) = effective_curvature(&h, &w).unwrap();
        for c in [0.1, 3.0, 64.0] {
            let hs: Vec<f64> = h.iter().map(|v| v / c).collect();
            let ws: Vec<f64> = w.iter().map(|v| v * c).collect();
            let (scaled, _) = effective_curvature(&hs, &ws).unwrap();
            assert!((scaled - base).abs() < 1e-12);
        }
    }

    #[test]
    fn l2_term_rules() {
        let t = [1.0f64, 2.0, 3.0];
        assert_eq!(l2_term(&t, &t, &[1.0; 3]).unwrap(), 0.0);
        let sigma2 = 0.5;
        let v = l2_term(&[0.0, 1.0, 0.0], &[0.0; 3], &[sigma2; 3]).unwrap();
        assert_eq!(v, 1.0 / sigma2);
        let full = l2_term(&t, &[0.0; 3], &[2.0, 4.0, 8.0]).unwrap();
        let half = l2_term(&t, &[0.0; 3], &[1.0, 2.0, 4.0]).unwrap();
        assert!((half - 2.0 * full).abs() < 1e-14);
    }

    #[test]
    fn kl_rules() {
        let m = [0.3, -1.0];
        let v = [0.5, 2.0];
        assert_eq!(kl_diag_gaussian(&m, &v, &m, &v).unwrap(), 0.0);
        let e = std::f64::consts::E;
        let kl = kl_diag_gaussian(&[0.0], &[1.0], &[0.0], &[e]).unwrap();
        assert!((kl - 1.0 / (2.0 * e)).abs() < 1e-15);
        assert!(kl_diag_gaussian(&m, &[0.0, 1.0], &m, &v).is_err());
        assert!(kl_diag_gaussian(&m, &v, &m, &[1.0, -1.0]).is_err());
    }

    #[test]
    fn kl_matches_numerical_integration() {
        // KL(N(0,1) || N(0,e)) = ∫ q ln(q/p) by the trapezoid rule on [-12, 12].
        let e = std::f64::consts::E;
        let pdf =
            |x: f64, v: f64| (-(x * x) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
        let steps = 200_000;
        let (a, b) = (-12.0, 12.0);
        let h = (b - a) / steps as f64;
        let mut s = 0.0;
        for i in 0..=steps {
            let x = a + i as f64 * h;
            let q = pdf(x, 1.0);
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            s += w * q * (q / pdf(x, e)).ln();
        }
        let kl = kl_diag_gaussian(&[0.0], &[1.0], &[0.0], &[e]).unwrap();
        assert!((s * h - kl).abs() < 1e-9, "{} vs {kl}", s * h);
        assert!((kl - 0.18394).abs() < 1e-5);
    }
}
