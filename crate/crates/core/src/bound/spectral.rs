//! Product of layer spectral norms by power iteration.

use crate::linalg::Matrix;
use crate::network::MlpParams;
use crate::rng::{seeded, standard_normal};
use crate::scalar::{sum_sq, Real};

pub const DEFAULT_MAX_ITERS: usize = 200;
pub const DEFAULT_TOL: f64 = 1e-10;
const START_SEED: u64 = 0x005E_ED0F_5EC7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralEstimate<T> {
    pub value: T,
    pub converged: bool,
    pub iterations: usize,
}

/// `‖W‖₂` by power iteration on `WᵀW` from a seeded Gaussian start vector.
/// Stops once successive Rayleigh quotients differ by less than `tol` relative.
pub fn spectral_norm<T: Real>(w: &Matrix<T>, max_iters: usize, tol: T) -> SpectralEstimate<T> {
    let mut rng = seeded(START_SEED ^ ((w.rows() as u64) << 32 | w.cols() as u64));
    let mut v: Vec<T> = (0..w.cols()).map(|_| standard_normal(&mut rng)).collect();
    normalize(&mut v);
    let mut prev = None;
    for it in 1..=max_iters.max(1) {
        let wv = w.matvec(&v);
        let rayleigh = sum_sq(&wv);
        if rayleigh == T::zero() {
            return SpectralEstimate {
                value: T::zero(),
                converged: true,
                iterations: it,
            };
        }
        if let Some(p) = prev {
            if (rayleigh - p).abs() < tol * rayleigh {
                return SpectralEstimate {
                    value: rayleigh.sqrt(),
                    converged: true,
                    iterations: it,
                };
            }
        }
        prev = Some(rayleigh);
        v = w.matvec_t(&wv);
        normalize(&mut v);
    }
    SpectralEstimate {
        value: prev.unwrap_or_else(T::zero).sqrt(),
        converged: false,
        iterations: max_iters,
    }
}

fn normalize<T: Real>(v: &mut [T]) {
    let n = sum_sq(v).sqrt();
    if n > T::zero() {
        for x in v.iter_mut() {
            *x = *x / n;
        }
    }
}

/// `Π_h ‖W_h‖₂`; `converged` is false if any factor hit the iteration cap.
pub fn spectral_norm_product<T: Real>(
    params: &MlpParams<T>,
    max_iters: usize,
    tol: T,
) -> SpectralEstimate<T> {
    let mut value = T::one();
    let mut converged = true;
    let mut iterations = 0;
    for w in params.layers() {
        let est = spectral_norm(w, max_iters, tol);
        value = value * est.value;
        converged &= est.converged;
        iterations = iterations.max(est.iterations);
    }
    SpectralEstimate {
        value,
        converged,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::symmetric_eigenvalues;
    use crate::network::{realized_linear_forward, ActivationMask};

    #[test]
    fn identity_and_diagonal_layers() {
        let id = MlpParams::new(vec![Matrix::<f64>::identity(3), Matrix::identity(3)]).unwrap();
        let est = spectral_norm_product(&id, DEFAULT_MAX_ITERS, DEFAULT_TOL);
        assert!((est.value - 1.0).abs() < 1e-15 && est.converged);

        let d = MlpParams::new(vec![Matrix::from_diag(&[3.0, 1.0]), Matrix::identity(2)]).unwrap();
        let est = spectral_norm_product(&d, DEFAULT_MAX_ITERS, DEFAULT_TOL);
        assert!((est.value - 3.0).abs() < 1e-9, "{}", est.value);

        let z = spectral_norm(&Matrix::<f64>::zeros(2, 3), 10, 1e-10);
        assert_eq!(z.value, 0.0);
    }

    #[test]
    fn matches_jacobi_oracle() {
        for seed in 0..10 {
            let mut rng = seeded(seed);
            let w = Matrix::from_fn(8, 8, |_, _| standard_normal::<f64, _>(&mut rng));
            let oracle = symmetric_eigenvalues(&w.gram()).unwrap()[0].sqrt();
            let est = spectral_norm(&w, 5000, 1e-14);
            assert!(
                (est.value - oracle).abs() <= 1e-8 * oracle,
                "seed {seed}: {} vs {oracle}",
                est.value
            );
        }
    }

    #[test]
    fn dominates_end_to_end_linear_map() {
        for seed in 0..10 {
            let net: MlpParams<f64> =
                MlpParams::gaussian(&[4, 6, 5, 3], 1.0, &mut seeded(100 + seed)).unwrap();
            let prod = spectral_norm_product(&net, 2000, 1e-13).value;
            // end-to-end map with every unit active, as an explicit matrix
            let mask = ActivationMask::all_active(&net);
            let cols: Vec<Vec<f64>> = (0..4)
                .map(|j| {
                    let mut e = vec![0.0; 4];
                    e[j] = 1.0;
                    realized_linear_forward(&net, &mask, &e).unwrap()
                })
                .collect();
            let m = Matrix::from_fn(3, 4, |i, j| cols[j][i]);
            let direct = symmetric_eigenvalues(&m.gram()).unwrap()[0].sqrt();
            assert!(prod >= direct * (1.0 - 1e-9));
        }
    }
}
