//! Sample size sufficient for the de-randomized bound to fall within ε of the
//! empirical margin loss, for a depth `k > 2` network rescaled by `λ`.

use super::{tail_coefficients, AssumptionConstants};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Smallest grid margin with `g(γ) ≥ target`. The curve must be sorted by γ.
pub fn invert_margin_function<T: Real>(curve: &[(T, T)], target: T) -> Result<T> {
    if curve.is_empty() {
        return Err(Error::arg("margin function grid is empty"));
    }
    if curve.windows(2).any(|w| !(w[0].0 <= w[1].0)) {
        return Err(Error::arg("margin function grid must be sorted ascending"));
    }
    match curve.iter().find(|&&(_, g)| g >= target) {
        Some(&(gamma, _)) => Ok(gamma),
        None => Err(Error::MarginUnreachable {
            target: target.to_f64_lossy(),
            max: curve
                .iter()
                .map(|&(_, g)| g.to_f64_lossy())
                .fold(f64::NEG_INFINITY, f64::max),
        }),
    }
}

#[derive(Debug, Clone)]
pub struct SampleComplexityInputs<'a, T> {
    pub epsilon: T,
    pub delta: T,
    pub depth: usize,
    pub sigma2: T,
    pub constants: AssumptionConstants<T>,
    pub theta_norm: T,
    /// Diagonal loss curvature of the unscaled network.
    pub hdiag: &'a [T],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleComplexity<T> {
    /// `⌈n0_real⌉`.
    pub n0: u64,
    pub n0_real: T,
    pub lambda: T,
    /// `g⁻¹(ε/4)` on the grid.
    pub g_inv: T,
    /// `Σ ln(H̃[j,j] σ²)` over entries above `1/σ²`.
    pub effective_curvature: T,
}

/// Computes the rescaling `λ` and the resulting sample size
/// `max{ (4/ε²)(EC + λ²‖θ‖²/(2σ²))², (16/ε²) ln(1/δ) }`.
///
/// `λ` is the largest of
/// `√(ζ_g²/c₂ · ln(24/ε))`, `√(ζ_g/c₁ · ln(24/ε))`, `√(2ζ_g σ² α)`,
/// `(6G‖θ‖/g⁻¹)^{1/(k−1)}` and `(3ζ‖θ‖²/g⁻¹)^{1/(k−2)}`, where
/// `ζ_g = 3/g⁻¹(ε/4)` and `c₁`, `c₂` come from the tail term with the
/// supplied constants.
pub fn sample_complexity<T: Real>(
    margin_fn: &[(T, T)],
    inputs: &SampleComplexityInputs<'_, T>,
) -> Result<SampleComplexity<T>> {
    let SampleComplexityInputs {
        epsilon,
        delta,
        depth,
        sigma2,
        constants,
        theta_norm,
        hdiag,
    } = *inputs;
    if !(epsilon > T::zero() && epsilon < T::one()) {
        return Err(Error::arg("epsilon must lie in (0, 1)"));
    }
    if !(delta > T::zero() && delta < T::one()) {
        return Err(Error::arg("delta must lie in (0, 1)"));
    }
    if depth <= 2 {
        return Err(Error::arg(
            "sample complexity requires depth greater than 2",
        ));
    }
    if !(sigma2 > T::zero()) {
        return Err(Error::arg("sigma2 must be positive"));
    }
    let g_inv = invert_margin_function(margin_fn, epsilon / T::lit(4.0))?;
    if !(g_inv > T::zero()) {
        return Err(Error::arg(
            "margin function must be positive only at positive margins",
        ));
    }

    let zeta_g = T::lit(3.0) / g_inv;
    let (c1, c2) = tail_coefficients(sigma2, &constants, theta_norm);
    let log_term = (T::lit(24.0) / epsilon).ln();
    let k = T::from_usize_lossy(depth);
    let candidates = [
        (zeta_g * zeta_g / c2 * log_term).sqrt(),
        (zeta_g / c1 * log_term).sqrt(),
        (T::lit(2.0) * zeta_g * sigma2 * constants.alpha).sqrt(),
        (T::lit(6.0) * constants.g * theta_norm / g_inv).powf(T::one() / (k - T::one())),
        (T::lit(3.0) * constants.zeta * theta_norm * theta_norm / g_inv)
            .powf(T::one() / (k - T::lit(2.0))),
    ];
    let lambda = candidates
        .iter()
        .copied()
        .filter(|v| !v.is_nan())
        .fold(T::zero(), T::max);

    let threshold = T::one() / sigma2;
    let ec: T = hdiag
        .iter()
        .filter(|&&h| h > threshold)
        .map(|&h| (h * sigma2).ln())
        .sum();
    let eps2 = epsilon * epsilon;
    let first = T::lit(4.0) / eps2
        * (ec + lambda * lambda * theta_norm * theta_norm / (T::lit(2.0) * sigma2)).powi(2);
    let second = T::lit(16.0) / eps2 * (T::one() / delta).ln();
    let n0_real = first.max(second);
    let n0 = n0_real
        .ceil()
        .to_u64()
        .ok_or_else(|| Error::arg(format!("sample size {n0_real} is not representable")))?;
    Ok(SampleComplexity {
        n0,
        n0_real,
        lambda,
        g_inv,
        effective_curvature: ec,
    })
}
