//! Monte-Carlo checks of the tail inequalities behind the de-randomization:
//! sub-Gaussian bounds for linear forms with history-dependent or ReLU-mask
//! coefficients, and Hanson-Wright style bounds for (masked) Gaussian
//! quadratic forms.
//!
//! Trials are split into fixed-size chunks, each drawing from its own derived
//! seed, and exceedances are summed as integers, so a report depends only on
//! its inputs and seed, never on the thread count.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{check_psd, symmetric_eigenvalues, Matrix};
use crate::network::{activation_mask, ActivationMask, MlpParams};
use crate::rng::{derive_seed, seeded, standard_normal, SeededRng};
use crate::scalar::sum_sq;

const CHUNK_TRIALS: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct TailRow {
    /// τ for linear forms, γ̃ for quadratic forms.
    pub threshold: f64,
    pub empirical: f64,
    pub stderr: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Constants of a quadratic form `H` entering the bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticConstants {
    /// Noise scale σ² (largest per-coordinate variance).
    pub sigma2: f64,
    /// `‖H‖₂`.
    pub zeta: f64,
    /// `tr(H) / ‖H‖₂`.
    pub alpha: f64,
    /// `‖H‖_F² / ‖H‖₂²`.
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailCheckReport {
    pub name: String,
    pub trials: usize,
    pub seed: u64,
    pub rows: Vec<TailRow>,
    pub constants: Option<QuadraticConstants>,
}

impl TailCheckReport {
    pub const CSV_HEADER: &'static str = "threshold,empirical,stderr,bound,pass";

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.threshold, r.empirical, r.stderr, r.bound, r.pass
            );
        }
        out
    }

    fn from_counts(
        name: &str,
        trials: usize,
        seed: u64,
        grid: &[f64],
        counts: &[u64],
        bound: impl Fn(f64) -> f64,
        constants: Option<QuadraticConstants>,
    ) -> Self {
        let rows = grid
            .iter()
            .zip(counts)
            .map(|(&t, &c)| {
                let f = c as f64 / trials as f64;
                let stderr = (f * (1.0 - f) / trials as f64).sqrt();
                let b = bound(t);
                TailRow {
                    threshold: t,
                    empirical: f,
                    stderr,
                    bound: b,
                    pass: f <= b + 3.0 * stderr,
                }
            })
            .collect();
        Self {
            name: name.to_string(),
            trials,
            seed,
            rows,
            constants,
        }
    }
}

/// Counts, per threshold, the trials whose statistic exceeds it.
fn count_exceedances<F>(
    trials: usize,
    seed: u64,
    thresholds: &[f64],
    strict: bool,
    draw: F,
) -> Vec<u64>
where
    F: Fn(&mut SeededRng) -> f64 + Sync,
{
    let chunks = trials.div_ceil(CHUNK_TRIALS);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = seeded(derive_seed(seed, c as u64));
            let len = CHUNK_TRIALS.min(trials - c * CHUNK_TRIALS);
            let mut counts = vec![0u64; thresholds.len()];
            for _ in 0..len {
                let s = draw(&mut rng);
                for (k, &t) in thresholds.iter().enumerate() {
                    if if strict { s > t } else { s >= t } {
                        counts[k] += 1;
                    }
                }
            }
            counts
        })
        .reduce(
            || vec![0u64; thresholds.len()],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        )
}

fn check_run(trials: usize, grid: &[f64]) -> Result<()> {
    if trials == 0 {
        return Err(Error::arg("trials must be positive"));
    }
    if grid.is_empty() || grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::arg("threshold grid must be non-empty and finite"));
    }
    Ok(())
}

/// `2 exp(−τ² / (2κ²‖u‖²))`.
pub fn linear_tail_bound(tau: f64, kappa: f64, u_norm_sq: f64) -> f64 {
    2.0 * (-tau * tau / (2.0 * kappa * kappa * u_norm_sq)).exp()
}

/// `exp(−½ min[α²(γ̃−1)²/κ, α(γ̃−1)])`, and 1 for `γ̃ ≤ 1` or `H = 0`.
pub fn quadratic_tail_bound(gamma: f64, c: &QuadraticConstants) -> f64 {
    if gamma <= 1.0 || c.zeta == 0.0 {
        return 1.0;
    }
    let g = gamma - 1.0;
    let e = (c.alpha * c.alpha * g * g / c.kappa).min(c.alpha * g);
    (-0.5 * e).exp()
}

/// Validates `H` as symmetric PSD and computes its spectral constants with the
/// Jacobi eigen-solver.
pub fn quadratic_constants(h: &Matrix<f64>, sigma2: f64) -> Result<QuadraticConstants> {
    check_psd(h)?;
    let zeta = symmetric_eigenvalues(h)?
        .first()
        .copied()
        .unwrap_or(0.0)
        .max(0.0);
    if zeta == 0.0 {
        return Ok(QuadraticConstants {
            sigma2,
            zeta,
            alpha: 0.0,
            kappa: 0.0,
        });
    }
    Ok(QuadraticConstants {
        sigma2,
        zeta,
        alpha: h.trace() / zeta,
        kappa: h.frobenius_sq() / (zeta * zeta),
    })
}

/// How the coefficient `b_t ∈ {0, 1}` of the t-th term is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientRule {
    AllOnes,
    /// `b_t = 1` iff the partial sum `Σ_{s<t} b_s u_s z_s` is nonnegative.
    RunningSumSign,
}

/// `P(|Σ_t b_t u_t z_t| ≥ τ)` for i.i.d. `z_t ~ N(0, σ²)` against
/// `2 exp(−τ²/(2κ²‖u‖²))`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_mds_linear(
    u: &[f64],
    sigma: f64,
    kappa: f64,
    rule: CoefficientRule,
    trials: usize,
    tau_grid: &[f64],
    seed: u64,
) -> Result<TailCheckReport> {
    check_run(trials, tau_grid)?;
    if !(sigma >= 0.0 && kappa > 0.0) {
        return Err(Error::arg("sigma must be nonnegative and kappa positive"));
    }
    let counts = count_exceedances(trials, seed, tau_grid, false, |rng| {
        let mut s = 0.0;
        for &ut in u {
            let z: f64 = sigma * standard_normal::<f64, _>(rng);
            let on = match rule {
                CoefficientRule::AllOnes => true,
                CoefficientRule::RunningSumSign => s >= 0.0,
            };
            if on {
                s += ut * z;
            }
        }
        s.abs()
    });
    let u2 = sum_sq(u);
    let name = match rule {
        CoefficientRule::AllOnes => "mds_linear_all_ones",
        CoefficientRule::RunningSumSign => "mds_linear_running_sign",
    };
    Ok(TailCheckReport::from_counts(
        name,
        trials,
        seed,
        tau_grid,
        &counts,
        |t| linear_tail_bound(t, kappa, u2),
        None,
    ))
}

/// A fixed network `θ†` and input `x`, perturbed by `δ ~ N(0, diag(ν²))`.
#[derive(Debug, Clone)]
pub struct MaskNet {
    pub params: MlpParams<f64>,
    pub input: Vec<f64>,
    pub variances: Vec<f64>,
    /// Use the all-ones mask instead of the ReLU mask of `θ† + δ`.
    pub linear: bool,
}

impl MaskNet {
    /// Gaussian `θ†` (He-scaled) and standard normal `x`, isotropic `ν² = sigma2`.
    pub fn random(widths: &[usize], sigma2: f64, seed: u64) -> Result<Self> {
        let mut rng = seeded(seed);
        let params = MlpParams::gaussian(widths, 1.0, &mut rng)?;
        let input = (0..widths[0]).map(|_| standard_normal(&mut rng)).collect();
        let variances = vec![sigma2; params.num_params()];
        Self::new(params, input, variances)
    }

    pub fn new(params: MlpParams<f64>, input: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        if input.len() != params.input_dim() {
            return Err(Error::arg("input length does not match the network"));
        }
        if variances.len() != params.num_params() {
            return Err(Error::arg("one variance per parameter is required"));
        }
        if variances.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::arg("variances must be finite and nonnegative"));
        }
        Ok(Self {
            params,
            input,
            variances,
            linear: false,
        })
    }

    pub fn with_linear_activations(mut self) -> Self {
        self.linear = true;
        self
    }

    pub fn num_params(&self) -> usize {
        self.variances.len()
    }

    pub fn max_variance(&self) -> f64 {
        self.variances.iter().copied().fold(0.0, f64::max)
    }

    /// One draw of `δ ⊙ ξ^{θ†+δ}`.
    pub fn masked_perturbation<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let theta = self.params.flatten();
        let delta: Vec<f64> = self
            .variances
            .iter()
            .map(|&v| v.sqrt() * standard_normal::<f64, _>(rng))
            .collect();
        let mask = if self.linear {
            ActivationMask::all_active(&self.params)
        } else {
            let perturbed: Vec<f64> = theta.iter().zip(&delta).map(|(a, b)| a + b).collect();
            let net = MlpParams::unflatten(&self.params.widths(), &perturbed)
                .expect("widths come from a valid network");
            activation_mask(&net, &self.input).expect("input length checked")
        };
        delta
            .iter()
            .zip(mask.edge_mask(&self.params))
            .map(|(&d, on)| if on { d } else { 0.0 })
            .collect()
    }
}

/// `P(|⟨δ ⊙ ξ, u⟩| ≥ τ)` against `2 exp(−τ²/(2κ²‖u‖²))` with `κ = max_j ν_j`.
pub fn simulate_network_mask_linear(
    net: &MaskNet,
    u: &[f64],
    trials: usize,
    tau_grid: &[f64],
    seed: u64,
) -> Result<TailCheckReport> {
    check_run(trials, tau_grid)?;
    if u.len() != net.num_params() {
        return Err(Error::arg(
            "coefficient vector length does not match the network",
        ));
    }
    let counts = count_exceedances(trials, seed, tau_grid, false, |rng| {
        net.masked_perturbation(rng)
            .iter()
            .zip(u)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            .abs()
    });
    let kappa = net.max_variance().sqrt();
    let u2 = sum_sq(u);
    Ok(TailCheckReport::from_counts(
        "network_mask_linear",
        trials,
        seed,
        tau_grid,
        &counts,
        |t| {
            if kappa == 0.0 {
                if t > 0.0 {
                    0.0
                } else {
                    2.0
                }
            } else {
                linear_tail_bound(t, kappa, u2)
            }
        },
        None,
    ))
}

/// `P[(δ⊙ξ)ᵀH(δ⊙ξ) > σ²ζαγ̃]` with `σ² = max_j ν_j²`, against the
/// masked Hanson-Wright bound.
pub fn simulate_masked_quadratic(
    net: &MaskNet,
    h: &Matrix<f64>,
    trials: usize,
    gamma_grid: &[f64],
    seed: u64,
) -> Result<TailCheckReport> {
    check_run(trials, gamma_grid)?;
    if !h.is_square() || h.rows() != net.num_params() {
        return Err(Error::arg(
            "H must be square with one row per network parameter",
        ));
    }
    let c = quadratic_constants(h, net.max_variance())?;
    let thresholds: Vec<f64> = gamma_grid
        .iter()
        .map(|g| c.sigma2 * c.zeta * c.alpha * g)
        .collect();
    let counts = count_exceedances(trials, seed, &thresholds, true, |rng| {
        h.quadratic_form(&net.masked_perturbation(rng))
    });
    Ok(TailCheckReport::from_counts(
        "masked_quadratic",
        trials,
        seed,
        gamma_grid,
        &counts,
        |g| quadratic_tail_bound(g, &c),
        Some(c),
    ))
}

/// `P[δᵀHδ > σ²ζαγ̃]` for `δ ~ N(0, σ²I)`.
pub fn simulate_isotropic_quadratic(
    sigma2: f64,
    h: &Matrix<f64>,
    trials: usize,
    gamma_grid: &[f64],
    seed: u64,
) -> Result<TailCheckReport> {
    check_run(trials, gamma_grid)?;
    if !(sigma2 > 0.0) {
        return Err(Error::arg("sigma2 must be positive"));
    }
    if !h.is_square() {
        return Err(Error::arg("H must be square"));
    }
    let c = quadratic_constants(h, sigma2)?;
    let p = h.rows();
    let sd = sigma2.sqrt();
    let thresholds: Vec<f64> = gamma_grid
        .iter()
        .map(|g| c.sigma2 * c.zeta * c.alpha * g)
        .collect();
    let counts = count_exceedances(trials, seed, &thresholds, true, |rng| {
        let d: Vec<f64> = (0..p)
            .map(|_| sd * standard_normal::<f64, _>(rng))
            .collect();
        h.quadratic_form(&d)
    });
    Ok(TailCheckReport::from_counts(
        "isotropic_quadratic",
        trials,
        seed,
        gamma_grid,
        &counts,
        |g| quadratic_tail_bound(g, &c),
        Some(c),
    ))
}

/// `A Aᵀ / p` for a `p × p` standard Gaussian `A`: a dense, full-rank PSD matrix.
pub fn random_wishart(p: usize, seed: u64) -> Matrix<f64> {
    let mut rng = seeded(seed);
    let a = Matrix::from_fn(p, p, |_, _| standard_normal::<f64, _>(&mut rng));
    let mut w = a.transpose().gram();
    for v in w.as_mut_slice() {
        *v /= p as f64;
    }
    w
}

/// The full battery of checks: isotropic quadratic forms of dense Wishart
/// matrices (p = 16 and 64), a masked quadratic form through a 2-8-2 ReLU
/// network, martingale-difference linear sums under both coefficient rules,
/// and a mask-modulated linear form through the same network.
pub fn standard_suite(trials: usize, seed: u64) -> Result<Vec<TailCheckReport>> {
    let s = |stream: u64| derive_seed(seed, stream);
    let gammas = [2.0, 3.0, 4.0, 6.0];
    let mut reports = Vec::new();
    for (i, p) in [16usize, 64].into_iter().enumerate() {
        let h = random_wishart(p, s(10 + i as u64));
        let mut r = simulate_isotropic_quadratic(1.0, &h, trials, &gammas, s(20 + i as u64))?;
        r.name = format!("isotropic_quadratic_p{p}");
        reports.push(r);
    }
    let net = MaskNet::random(&[2, 8, 2], 1.0, s(30))?;
    let h = random_wishart(net.num_params(), s(31));
    reports.push(simulate_masked_quadratic(&net, &h, trials, &gammas, s(32))?);

    let p = 8;
    let tau: Vec<f64> = (1..=6).map(|i| i as f64 * (p as f64).sqrt()).collect();
    for rule in [CoefficientRule::AllOnes, CoefficientRule::RunningSumSign] {
        reports.push(simulate_mds_linear(
            &vec![1.0; p],
            1.0,
            1.0,
            rule,
            trials,
            &tau,
            s(40),
        )?);
    }
    let mut rng = seeded(s(50));
    let u: Vec<f64> = (0..net.num_params())
        .map(|_| standard_normal(&mut rng))
        .collect();
    let un = sum_sq(&u).sqrt();
    let tau: Vec<f64> = (1..=6).map(|i| i as f64 * un / 2.0).collect();
    reports.push(simulate_network_mask_linear(&net, &u, trials, &tau, s(51))?);
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn assert_monotone(r: &TailCheckReport) {
        for w in r.rows.windows(2) {
            assert!(w[1].empirical <= w[0].empirical);
            assert!(w[1].bound <= w[0].bound);
        }
        for row in &r.rows {
            assert!((0.0..=1.0).contains(&row.empirical));
            assert!(row.bound >= 0.0 && row.bound <= 2.0);
            let f = row.empirical;
            assert_eq!(row.stderr, (f * (1.0 - f) / r.trials as f64).sqrt());
        }
    }

    #[test]
    fn zero_coefficients_never_exceed() {
        let r = simulate_mds_linear(
            &[0.0; 5],
            1.0,
            1.0,
            CoefficientRule::RunningSumSign,
            3000,
            &[0.5, 1.0],
            1,
        )
        .unwrap();
        assert!(r.rows.iter().all(|row| row.empirical == 0.0 && row.pass));
    }

    #[test]
    fn mds_linear_passes_for_both_rules() {
        let p = 8;
        let tau: Vec<f64> = (1..=6).map(|i| i as f64 * (p as f64).sqrt()).collect();
        for rule in [CoefficientRule::AllOnes, CoefficientRule::RunningSumSign] {
            let r = simulate_mds_linear(&vec![1.0; p], 1.0, 1.0, rule, 20_000, &tau, 2).unwrap();
            assert!(r.all_pass(), "{rule:?}\n{}", r.to_csv());
            assert_monotone(&r);
        }
    }

    #[test]
    fn all_ones_matches_gaussian_tail() {
        // Σ z_t ~ N(0, p): P(|N(0,p)| ≥ √p) = 2(1 − Φ(1)) ≈ 0.3173
        let r = simulate_mds_linear(
            &[1.0; 4],
            1.0,
            1.0,
            CoefficientRule::AllOnes,
            40_000,
            &[2.0],
            3,
        )
        .unwrap();
        assert!((r.rows[0].empirical - 0.3173).abs() < 4.0 * r.rows[0].stderr + 1e-3);
    }

    #[test]
    fn deterministic_and_chunking_consistent() {
        let a = simulate_mds_linear(
            &[0.5, -1.0, 2.0],
            1.0,
            1.0,
            CoefficientRule::RunningSumSign,
            5000,
            &[1.0, 2.0],
            7,
        )
        .unwrap();
        let b = simulate_mds_linear(
            &[0.5, -1.0, 2.0],
            1.0,
            1.0,
            CoefficientRule::RunningSumSign,
            5000,
            &[1.0, 2.0],
            7,
        )
        .unwrap();
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let c = pool
            .install(|| {
                simulate_mds_linear(
                    &[0.5, -1.0, 2.0],
                    1.0,
                    1.0,
                    CoefficientRule::RunningSumSign,
                    5000,
                    &[1.0, 2.0],
                    7,
                )
            })
            .unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn zero_variance_network_is_deterministic_zero() {
        let net = MaskNet::random(&[2, 4, 2], 0.0, 1).unwrap();
        let u = vec![1.0; net.num_params()];
        let r = simulate_network_mask_linear(&net, &u, 2000, &[0.1, 1.0], 3).unwrap();
        assert!(r.rows.iter().all(|row| row.empirical == 0.0 && row.pass));
    }

    #[test]
    fn network_mask_linear_passes() {
        for linear in [false, true] {
            let mut net = MaskNet::random(&[2, 4, 2], 1.0, 11).unwrap();
            net.linear = linear;
            let mut rng = seeded(12);
            let u: Vec<f64> = (0..net.num_params())
                .map(|_| standard_normal(&mut rng))
                .collect();
            let un = sum_sq(&u).sqrt();
            let tau: Vec<f64> = (1..=6).map(|i| i as f64 * un / 2.0).collect();
            let r = simulate_network_mask_linear(&net, &u, 20_000, &tau, 13).unwrap();
            assert!(r.all_pass(), "{}", r.to_csv());
            assert_monotone(&r);
        }
    }

    #[test]
    fn quadratic_zero_and_boundary() {
        let z = Matrix::zeros(4, 4);
        let r = simulate_isotropic_quadratic(1.0, &z, 1000, &[1.0, 2.0], 1).unwrap();
        assert!(r
            .rows
            .iter()
            .all(|row| row.empirical == 0.0 && row.bound == 1.0));
        let c = QuadraticConstants {
            sigma2: 1.0,
            zeta: 1.0,
            alpha: 3.0,
            kappa: 2.0,
        };
        assert_eq!(quadratic_tail_bound(1.0, &c), 1.0);
        assert!(quadratic_tail_bound(1.5, &c) < 1.0);
    }

    #[test]
    fn rejects_non_psd() {
        let h = Matrix::from_vec(2, 2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(simulate_isotropic_quadratic(1.0, &h, 100, &[2.0], 1).is_err());
        let asym = Matrix::from_vec(2, 2, vec![1.0, 0.5, 0.0, 1.0]).unwrap();
        assert!(simulate_isotropic_quadratic(1.0, &asym, 100, &[2.0], 1).is_err());
    }

    #[test]
    fn constants_of_identity_and_rank_one() {
        let c = quadratic_constants(&Matrix::identity(5), 2.0).unwrap();
        assert!(
            (c.zeta - 1.0).abs() < 1e-12
                && (c.alpha - 5.0).abs() < 1e-12
                && (c.kappa - 5.0).abs() < 1e-12
        );
        let u = [1.0, 2.0, 2.0];
        let h = Matrix::from_fn(3, 3, |i, j| u[i] * u[j]);
        let c = quadratic_constants(&h, 1.0).unwrap();
        assert!(
            (c.zeta - 9.0).abs() < 1e-10
                && (c.alpha - 1.0).abs() < 1e-10
                && (c.kappa - 1.0).abs() < 1e-10
        );
    }

    #[test]
    fn rank_one_matches_chi_square_one() {
        let u = [1.0, -2.0, 0.5, 0.0];
        let h = Matrix::from_fn(4, 4, |i, j| u[i] * u[j]);
        let grid = [2.0, 3.0, 4.0, 6.0];
        let r = simulate_isotropic_quadratic(0.7, &h, 60_000, &grid, 5).unwrap();
        let chi = ChiSquared::new(1.0).unwrap();
        for row in &r.rows {
            let oracle = 1.0 - chi.cdf(row.threshold);
            assert!(
                (row.empirical - oracle).abs()
                    <= 4.0 * (oracle * (1.0 - oracle) / 60_000.0).sqrt() + 1e-4
            );
        }
        assert!(r.all_pass());
    }

    #[test]
    fn identity_form_follows_chi_square_p() {
        // δᵀδ/σ² ~ χ²_p and the event is χ²_p > pγ̃. The explicit-constant bound
        // is not asserted here; only the simulation is checked against the oracle.
        let p = 16;
        let grid = [2.0, 3.0, 4.0];
        let r = simulate_isotropic_quadratic(1.0, &Matrix::identity(p), 60_000, &grid, 6).unwrap();
        let chi = ChiSquared::new(p as f64).unwrap();
        for row in &r.rows {
            let oracle = 1.0 - chi.cdf(p as f64 * row.threshold);
            assert!(
                (row.empirical - oracle).abs()
                    <= 4.0 * (oracle * (1.0 - oracle) / 60_000.0).sqrt() + 1e-4
            );
        }
        let masked = simulate_masked_quadratic(
            &MaskNet::random(&[2, 4, 2], 1.0, 1)
                .unwrap()
                .with_linear_activations(),
            &Matrix::identity(16),
            60_000,
            &grid,
            6,
        )
        .unwrap();
        for row in &masked.rows {
            let oracle = 1.0 - chi.cdf(p as f64 * row.threshold);
            assert!(
                (row.empirical - oracle).abs()
                    <= 4.0 * (oracle * (1.0 - oracle) / 60_000.0).sqrt() + 1e-4
            );
        }
    }

    #[test]
    fn masked_quadratic_on_relu_net() {
        let net = MaskNet::random(&[2, 4, 2], 1.0, 21).unwrap();
        let h = random_wishart(net.num_params(), 22);
        let r = simulate_masked_quadratic(&net, &h, 20_000, &[2.0, 3.0, 4.0, 6.0], 23).unwrap();
        assert!(r.all_pass(), "{}", r.to_csv());
        assert_monotone(&r);
        assert_eq!(r.to_csv().lines().count(), 5);
    }

    #[test]
    fn wishart_is_symmetric_psd() {
        let w = random_wishart(6, 1);
        assert!(check_psd(&w).is_ok());
        let c = quadratic_constants(&w, 1.0).unwrap();
        assert!(c.alpha > 1.0 && c.kappa >= 1.0 && c.kappa <= 6.0 + 1e-9);
    }
}
