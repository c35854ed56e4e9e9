//! The de-randomized PAC-Bayes margin bound for a trained ReLU network.
//!
//! With probability `1 − δ`, the 0-1 risk of the deterministic network is at most
//!
//! ```text
//! a_η ℓ_γ(ψ, S) + (b_η / 2n) KL(Q‖P) + d_η exp(−min(c₂γ², c₁γ)) + b_η ln(1/δ) / n
//! ```
//!
//! where `Q` is a diagonal Gaussian around the trained weights whose variances
//! shrink along directions of high loss curvature. The KL term is reported
//! both exactly and through its upper bound *effective curvature + weighted
//! L2 distance*, which is the headline quantity.

mod curvature;
mod sample_complexity;
mod spectral;

pub use curvature::{
    effective_curvature, hessian_diag, kl_diag_gaussian, l2_term, posterior_variances,
    HessianSummary,
};
pub use sample_complexity::{
    invert_margin_function, sample_complexity, SampleComplexity, SampleComplexityInputs,
};
pub use spectral::{
    spectral_norm, spectral_norm_product, SpectralEstimate, DEFAULT_MAX_ITERS, DEFAULT_TOL,
};

use std::fmt;

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::network::{forward_unchecked, jacobian_from_pass, logit_margin, MlpParams};
use crate::scalar::{sum_sq, Real};

// ---------------------------------------------------------------------------
// Margins
// ---------------------------------------------------------------------------

/// Per-sample margins `z[y] − max_{c≠y} z[c]`.
pub fn margins<T: Real>(params: &MlpParams<T>, ds: &LabeledDataset<T>) -> Vec<T> {
    (0..ds.len())
        .map(|i| {
            let (x, y) = ds.sample(i);
            logit_margin(forward_unchecked(params, x).logits(), y)
        })
        .collect()
}

fn fraction_at_most<T: Real>(margins: &[T], gamma: T) -> T {
    let hits = margins.iter().filter(|&&m| m <= gamma).count();
    T::from_usize_lossy(hits) / T::from_usize_lossy(margins.len())
}

/// Fraction of samples with `z[y] ≤ max_{c≠y} z[c] + γ` (ties count as losses).
pub fn margin_loss<T: Real>(params: &MlpParams<T>, ds: &LabeledDataset<T>, gamma: T) -> T {
    fraction_at_most(&margins(params, ds), gamma)
}

/// Margin loss at each grid point. The grid must be ascending.
pub fn margin_curve<T: Real>(
    params: &MlpParams<T>,
    ds: &LabeledDataset<T>,
    gamma_grid: &[T],
) -> Result<Vec<(T, T)>> {
    if gamma_grid.is_empty() {
        return Err(Error::arg("margin grid is empty"));
    }
    if gamma_grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::arg("margin grid must be sorted ascending"));
    }
    let mut m = margins(params, ds);
    m.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = T::from_usize_lossy(m.len());
    Ok(gamma_grid
        .iter()
        .map(|&g| {
            let hits = m.partition_point(|&v| v <= g);
            (g, T::from_usize_lossy(hits) / n)
        })
        .collect())
}

/// `g(γ) = ℓ_γ − ℓ_0` on the grid.
pub fn margin_function<T: Real>(
    params: &MlpParams<T>,
    ds: &LabeledDataset<T>,
    gamma_grid: &[T],
) -> Result<Vec<(T, T)>> {
    let base = margin_loss(params, ds, T::zero());
    Ok(margin_curve(params, ds, gamma_grid)?
        .into_iter()
        .map(|(g, l)| (g, l - base))
        .collect())
}

// ---------------------------------------------------------------------------
// Constants
// ---------------------------------------------------------------------------

/// Which `d_η` the tail term uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DEtaVariant {
    /// `6(a_η + 1)`, two-class non-smooth bound.
    NonSmoothTwoClass,
    /// `k(a_η + 1)`, multi-class smooth bound.
    MultiClassSmooth { num_classes: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FastRate<T> {
    pub a: T,
    pub b: T,
    pub d: T,
}

/// `a_η = ln(1/η)/(1−η)`, `b_η = 1/(1−η)` and the selected `d_η`.
pub fn fast_rate_constants<T: Real>(eta: T, variant: DEtaVariant) -> Result<FastRate<T>> {
    if !(eta > T::zero() && eta < T::one()) {
        return Err(Error::arg(format!("eta = {eta} must lie in (0, 1)")));
    }
    let b = T::one() / (T::one() - eta);
    let a = (T::one() / eta).ln() * b;
    let d = match variant {
        DEtaVariant::NonSmoothTwoClass => T::lit(6.0) * (a + T::one()),
        DEtaVariant::MultiClassSmooth { num_classes } => {
            T::from_usize_lossy(num_classes) * (a + T::one())
        }
    };
    Ok(FastRate { a, b, d })
}

/// Gradient and Hessian constants `G`, `ζ`, `κ`, `α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionConstants<T> {
    pub g: T,
    pub zeta: T,
    pub kappa: T,
    pub alpha: T,
}

/// Empirical proxies for the constants:
///
/// * `G`: largest Jacobian row norm over samples and classes;
/// * `ζ`: largest Hessian-diagonal entry (a lower bound on `‖H‖₂`, so a proxy only);
/// * `α = Σ H̃[j,j] / ζ`, `κ = Σ H̃[j,j]² / ζ²`.
///
/// With a zero diagonal, `ζ`, `α` and `κ` are all reported as 0.
pub fn estimate_assumption_constants<T: Real>(
    params: &MlpParams<T>,
    ds: &LabeledDataset<T>,
) -> AssumptionConstants<T> {
    let hdiag = hessian_diag(params, ds);
    let mut g_max = T::zero();
    for i in 0..ds.len() {
        let (x, _) = ds.sample(i);
        let pass = forward_unchecked(params, x);
        let jac = jacobian_from_pass(params, &pass, x);
        for c in 0..jac.rows() {
            g_max = g_max.max(sum_sq(jac.row(c)).sqrt());
        }
    }
    constants_from_parts(g_max, &hdiag)
}

pub(crate) fn constants_from_parts<T: Real>(g: T, hdiag: &[T]) -> AssumptionConstants<T> {
    let zeta = hdiag.iter().copied().fold(T::zero(), T::max);
    if zeta == T::zero() {
        return AssumptionConstants {
            g,
            zeta,
            kappa: T::zero(),
            alpha: T::zero(),
        };
    }
    let trace: T = hdiag.iter().copied().sum();
    let sq: T = hdiag.iter().map(|&h| h * h).sum();
    AssumptionConstants {
        g,
        zeta,
        kappa: sq / (zeta * zeta),
        alpha: trace / zeta,
    }
}

/// Tail coefficients `c₁ = 1/(12σ²ζ)` and
/// `c₂ = min[1/(18σ²G²), 1/(18σ²ζ²‖θ‖²), 1/(72σ⁴κζ²)]`.
pub fn tail_coefficients<T: Real>(
    sigma2: T,
    constants: &AssumptionConstants<T>,
    theta_norm: T,
) -> (T, T) {
    let AssumptionConstants { g, zeta, kappa, .. } = *constants;
    let c1 = T::one() / (T::lit(12.0) * sigma2 * zeta);
    let c2 = (T::one() / (T::lit(18.0) * sigma2 * g * g))
        .min(T::one() / (T::lit(18.0) * sigma2 * zeta * zeta * theta_norm * theta_norm))
        .min(T::one() / (T::lit(72.0) * sigma2 * sigma2 * kappa * zeta * zeta));
    (c1, c2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailTerm<T> {
    pub value: T,
    pub c1: T,
    pub c2: T,
    /// False when `γ ≤ 6σ²ζα`, outside the range where the bound is proven.
    pub precondition_met: bool,
}

/// `d_η exp(−min(c₂γ², c₁γ))`.
pub fn tail_term<T: Real>(
    gamma: T,
    sigma2: T,
    constants: &AssumptionConstants<T>,
    theta_norm: T,
    d_eta: T,
) -> TailTerm<T> {
    let (c1, c2) = tail_coefficients(sigma2, constants, theta_norm);
    let exponent = (c2 * gamma * gamma).min(c1 * gamma);
    let threshold = T::lit(6.0) * sigma2 * constants.zeta * constants.alpha;
    TailTerm {
        value: d_eta * (-exponent).exp(),
        c1,
        c2,
        precondition_met: gamma > threshold,
    }
}

/// Extra margin `ϱ_k` from the non-smooth analysis: `G‖θ‖ + ½ζ‖θ‖²` for
/// depth > 2 and `3/2 · G‖θ‖` for depth 2.
pub fn margin_inflation<T: Real>(
    depth: usize,
    constants: &AssumptionConstants<T>,
    theta_norm: T,
) -> T {
    if depth > 2 {
        constants.g * theta_norm + T::lit(0.5) * constants.zeta * theta_norm * theta_norm
    } else {
        T::lit(1.5) * constants.g * theta_norm
    }
}

// ---------------------------------------------------------------------------
// Configuration and report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum PriorMean<T> {
    Zero,
    Vector(Vec<T>),
}

/// How the KL term entering the total is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KlMode {
    /// Effective curvature + weighted L2 distance (an upper bound on 2·KL).
    #[default]
    CurvaturePlusL2,
    /// Twice the exact diagonal-Gaussian KL.
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundConfig<T> {
    /// Isotropic prior variance σ².
    pub sigma2: T,
    /// Optional per-parameter prior variances `ω_j² ∈ (0, σ²]`; defaults to σ².
    pub prior_variances: Option<Vec<T>>,
    pub prior_mean: PriorMean<T>,
    pub gamma: T,
    pub eta: T,
    pub delta: T,
    pub include_tail: bool,
    /// Constants for the tail term and margin inflation; estimated from the
    /// network and data when absent.
    pub tail_constants: Option<AssumptionConstants<T>>,
    pub d_eta: DEtaVariant,
    /// Shift γ by `2ϱ_k` before measuring the margin loss.
    pub margin_inflation: bool,
    pub kl_mode: KlMode,
}

impl<T: Real> Default for BoundConfig<T> {
    fn default() -> Self {
        Self {
            sigma2: T::lit(100.0),
            prior_variances: None,
            prior_mean: PriorMean::Zero,
            gamma: T::one(),
            eta: T::lit(0.1),
            delta: T::lit(0.1),
            include_tail: false,
            tail_constants: None,
            d_eta: DEtaVariant::NonSmoothTwoClass,
            margin_inflation: false,
            kl_mode: KlMode::CurvaturePlusL2,
        }
    }
}

impl<T: Real> BoundConfig<T> {
    pub fn validate(&self, p: usize) -> Result<()> {
        if !(self.sigma2 > T::zero()) || !self.sigma2.is_finite() {
            return Err(Error::arg("sigma2 must be positive"));
        }
        if !(self.eta > T::zero() && self.eta < T::one()) {
            return Err(Error::arg("eta must lie in (0, 1)"));
        }
        if !(self.delta > T::zero() && self.delta < T::one()) {
            return Err(Error::arg("delta must lie in (0, 1)"));
        }
        if !(self.gamma >= T::zero()) {
            return Err(Error::arg("gamma must be nonnegative"));
        }
        if let Some(w) = &self.prior_variances {
            if w.len() != p {
                return Err(Error::arg(format!(
                    "{} prior variances for {p} parameters",
                    w.len()
                )));
            }
            if w.iter().any(|&v| !(v > T::zero() && v <= self.sigma2)) {
                return Err(Error::arg("prior variances must lie in (0, sigma2]"));
            }
        }
        if let PriorMean::Vector(m) = &self.prior_mean {
            if m.len() != p {
                return Err(Error::arg(format!(
                    "prior mean has {} entries for {p} parameters",
                    m.len()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport<T> {
    pub n: usize,
    pub p: usize,
    pub gamma: T,
    /// Margin actually used for the empirical term (γ, or γ + 2ϱ_k).
    pub gamma_used: T,
    pub sigma2: T,
    pub eta: T,
    pub delta: T,
    pub margin_loss: T,
    pub p_tilde: usize,
    pub hessian: HessianSummary<T>,
    pub effective_curvature: T,
    pub l2_term: T,
    /// Exact `KL(Q‖P)` (with the ½ factor).
    pub kl_exact: T,
    /// KL quantity entering the total, per [`KlMode`].
    pub kl_total: T,
    pub kl_mode: KlMode,
    pub rate: FastRate<T>,
    pub tail: Option<TailTerm<T>>,
    pub confidence_term: T,
    pub total: T,
}

/// `a_η ℓ + (b_η/2n) KL + tail + b_η ln(1/δ)/n`.
pub fn assemble_total<T: Real>(
    rate: &FastRate<T>,
    n: usize,
    margin_loss: T,
    kl_total: T,
    tail: T,
    confidence: T,
) -> T {
    let n = T::from_usize_lossy(n);
    rate.a * margin_loss + rate.b / (T::lit(2.0) * n) * kl_total + tail + confidence
}

/// `b_η ln(1/δ) / n`.
pub fn confidence_term<T: Real>(b_eta: T, delta: T, n: usize) -> T {
    b_eta * (T::one() / delta).ln() / T::from_usize_lossy(n)
}

impl<T: Real> BoundReport<T> {
    pub fn tail_value(&self) -> T {
        self.tail.map_or(T::zero(), |t| t.value)
    }

    pub fn empirical_component(&self) -> T {
        self.rate.a * self.margin_loss
    }

    pub fn kl_component(&self) -> T {
        self.rate.b / (T::lit(2.0) * T::from_usize_lossy(self.n)) * self.kl_total
    }

    /// Recomputes the total from the stored components.
    pub fn recomputed_total(&self) -> T {
        assemble_total(
            &self.rate,
            self.n,
            self.margin_loss,
            self.kl_total,
            self.tail_value(),
            self.confidence_term,
        )
    }

    pub const CSV_HEADER: &'static str = "n,p,gamma,sigma2,eta,delta,margin_loss,p_tilde,effective_curvature,l2_term,kl_exact,tail_term,confidence_term,total";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.n,
            self.p,
            self.gamma,
            self.sigma2,
            self.eta,
            self.delta,
            self.margin_loss,
            self.p_tilde,
            self.effective_curvature,
            self.l2_term,
            self.kl_exact,
            self.tail_value(),
            self.confidence_term,
            self.total
        )
    }
}

impl<T: Real> fmt::Display for BoundReport<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "samples n               {}", self.n)?;
        writeln!(f, "parameters p            {}", self.p)?;
        writeln!(f, "sigma^2                 {}", self.sigma2)?;
        writeln!(f, "eta / delta             {} / {}", self.eta, self.delta)?;
        writeln!(
            f,
            "margin gamma            {} (used {})",
            self.gamma, self.gamma_used
        )?;
        writeln!(f, "margin loss             {}", self.margin_loss)?;
        writeln!(
            f,
            "hessian diag            p~ = {}, max = {}, mean = {}",
            self.p_tilde, self.hessian.max, self.hessian.mean
        )?;
        writeln!(f, "effective curvature     {}", self.effective_curvature)?;
        writeln!(f, "l2 term                 {}", self.l2_term)?;
        writeln!(f, "kl exact                {}", self.kl_exact)?;
        writeln!(f, "kl used ({:?})  {}", self.kl_mode, self.kl_total)?;
        writeln!(
            f,
            "a_eta, b_eta, d_eta     {}, {}, {}",
            self.rate.a, self.rate.b, self.rate.d
        )?;
        writeln!(f, "  a_eta * margin loss   {}", self.empirical_component())?;
        writeln!(f, "  b_eta/(2n) * kl       {}", self.kl_component())?;
        match &self.tail {
            Some(t) => writeln!(
                f,
                "  tail term             {}{}",
                t.value,
                if t.precondition_met {
                    ""
                } else {
                    "  (warning: gamma <= 6 sigma^2 zeta alpha)"
                }
            )?,
            None => writeln!(f, "  tail term             omitted")?,
        }
        writeln!(f, "  confidence term       {}", self.confidence_term)?;
        write!(f, "total bound             {}", self.total)
    }
}

/// Evaluates every bound component for a trained network on its training set.
pub fn evaluate_bound<T: Real>(
    params: &MlpParams<T>,
    ds: &LabeledDataset<T>,
    config: &BoundConfig<T>,
) -> Result<BoundReport<T>> {
    let p = params.num_params();
    config.validate(p)?;
    if params.input_dim() != ds.dim() {
        return Err(Error::arg("network input does not match data dimension"));
    }
    let hdiag = hessian_diag(params, ds);
    evaluate_with_hessian(params, ds, config, &hdiag)
}

/// As [`evaluate_bound`], reusing a precomputed Hessian diagonal (which does
/// not depend on the prior), e.g. across a σ² sweep.
pub fn evaluate_with_hessian<T: Real>(
    params: &MlpParams<T>,
    ds: &LabeledDataset<T>,
    config: &BoundConfig<T>,
    hdiag: &[T],
) -> Result<BoundReport<T>> {
    let p = params.num_params();
    config.validate(p)?;
    if hdiag.len() != p {
        return Err(Error::arg(
            "hessian diagonal length does not match the network",
        ));
    }
    let n = ds.len();
    let theta = params.flatten();
    let prior_vars = config
        .prior_variances
        .clone()
        .unwrap_or_else(|| vec![config.sigma2; p]);
    let theta0 = match &config.prior_mean {
        PriorMean::Zero => vec![T::zero(); p],
        PriorMean::Vector(v) => v.clone(),
    };

    let post_vars = posterior_variances(hdiag, &prior_vars)?;
    let (ec, p_tilde) = effective_curvature(hdiag, &prior_vars)?;
    let l2 = l2_term(&theta, &theta0, &prior_vars)?;
    let kl_exact = kl_diag_gaussian(&theta, &post_vars, &theta0, &prior_vars)?;
    let kl_total = match config.kl_mode {
        KlMode::CurvaturePlusL2 => ec + l2,
        KlMode::Exact => T::lit(2.0) * kl_exact,
    };
    let rate = fast_rate_constants(config.eta, config.d_eta)?;
    let theta_norm = sum_sq(&theta).sqrt();

    let constants = if config.include_tail || config.margin_inflation {
        Some(
            config
                .tail_constants
                .unwrap_or_else(|| estimate_assumption_constants(params, ds)),
        )
    } else {
        None
    };

    let gamma_used = match (&constants, config.margin_inflation) {
        (Some(c), true) => {
            config.gamma + T::lit(2.0) * margin_inflation(params.depth(), c, theta_norm)
        }
        _ => config.gamma,
    };
    let ml = margin_loss(params, ds, gamma_used);

    let tail = match (&constants, config.include_tail) {
        (Some(c), true) => Some(tail_term(
            config.gamma,
            config.sigma2,
            c,
            theta_norm,
            rate.d,
        )),
        _ => None,
    };
    let confidence = confidence_term(rate.b, config.delta, n);
    let total = assemble_total(
        &rate,
        n,
        ml,
        kl_total,
        tail.map_or(T::zero(), |t| t.value),
        confidence,
    );

    Ok(BoundReport {
        n,
        p,
        gamma: config.gamma,
        gamma_used,
        sigma2: config.sigma2,
        eta: config.eta,
        delta: config.delta,
        margin_loss: ml,
        p_tilde,
        hessian: HessianSummary::of(hdiag),
        effective_curvature: ec,
        l2_term: l2,
        kl_exact,
        kl_total,
        kl_mode: config.kl_mode,
        rate,
        tail,
        confidence_term: confidence,
        total,
    })
}
