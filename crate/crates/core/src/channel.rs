//! BPSK transmission over additive Gaussian noise with block-level
//! correlation.
//!
//! # Overview
//!
//! Bits map to symbols as `0 -> +1`, `1 -> -1`. A length-`N` noise block is
//! drawn as `n = sqrt(sigma2) * A * w` where `w` is i.i.d. standard normal
//! and `A A^T = Sigma` is a unit-diagonal correlation matrix, so `sigma2`
//! sets the per-sample noise power regardless of the correlation shape.
//! Three correlation models are supported:
//!
//! - **White**: `Sigma = I`.
//! - **Exponential**: `Sigma[i][j] = eta^|i - j|` for `eta in [-1, 1]`. For
//!   `|eta| < 1` the factor is the closed-form Cholesky factor of this
//!   matrix (the stationary AR(1) recursion); `eta = +-1` degenerates to a
//!   rank-one factor.
//! - **Pink**: power spectral density `P(f) ~ 1 / |f|^alpha` sampled at the
//!   block's DFT frequencies (DC bin set equal to the first nonzero bin),
//!   inverse-transformed to a Toeplitz autocorrelation and normalized to a
//!   unit diagonal. A tiny diagonal ridge (1e-9) is applied if the Cholesky
//!   factorization fails; if it still fails the error reports the minimum
//!   eigenvalue.
//!
//! The signal-to-noise ratio is `snr_db = 10 log10(P / sigma2)` with symbol
//! power `P = 1` for BPSK, so [`snr_db_to_sigma2`] inverts it.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Diagonal ridge added to a pink-noise covariance whose Cholesky
/// factorization fails numerically.
const PINK_RIDGE: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Noise models
// ---------------------------------------------------------------------------

/// The correlation shape of the channel noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum NoiseKind {
    /// Independent samples, `Sigma = I`.
    White,
    /// Exponentially decaying correlation `Sigma[i][j] = eta^|i-j|`.
    Exponential { eta: f64 },
    /// `1/f^alpha` spectral shape.
    Pink { alpha: f64 },
}

impl NoiseKind {
    /// The model's correlation parameter (`eta`, `alpha`, or 0 for white),
    /// as reported in result tables.
    pub fn parameter(&self) -> f64 {
        match self {
            NoiseKind::White => 0.0,
            NoiseKind::Exponential { eta } => *eta,
            NoiseKind::Pink { alpha } => *alpha,
        }
    }

    /// A short human-readable label for logs.
    pub fn label(&self) -> String {
        match self {
            NoiseKind::White => "white".to_string(),
            NoiseKind::Exponential { eta } => format!("exponential(eta={eta})"),
            NoiseKind::Pink { alpha } => format!("pink(alpha={alpha})"),
        }
    }
}

/// A noise model bound to a block length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    #[serde(flatten)]
    pub kind: NoiseKind,
    pub block_len: usize,
}

/// Errors from covariance construction.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    /// `eta` outside `[-1, 1]` has no valid correlation matrix.
    #[error("correlation eta = {eta} is outside [-1, 1]")]
    InvalidCorrelation { eta: f64 },
    /// The pink spectral exponent must be positive.
    #[error("spectral exponent alpha = {alpha} must be > 0")]
    InvalidAlpha { alpha: f64 },
    /// Block length zero cannot carry a block.
    #[error("block length must be positive")]
    EmptyBlock,
    /// The covariance is numerically not positive definite even after the
    /// diagonal ridge.
    #[error("covariance is not positive definite (min eigenvalue {min_eigenvalue:e} after ridge {ridge:e})")]
    NotPositiveDefinite { min_eigenvalue: f64, ridge: f64 },
}

// ---------------------------------------------------------------------------
// Covariance factor
// ---------------------------------------------------------------------------

/// A matrix `A` with `A A^T = Sigma` for a unit-diagonal correlation
/// `Sigma`, used to turn i.i.d. normal draws into correlated noise.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceFactor {
    a: DMatrix<f64>,
    /// True when `A = I`; sampling then skips the matrix product while
    /// producing bit-identical results.
    identity: bool,
}

impl CovarianceFactor {
    /// Builds the factor for a noise model.
    pub fn for_model(model: &NoiseModel) -> Result<Self, ChannelError> {
        match model.kind {
            NoiseKind::White => Self::white(model.block_len),
            NoiseKind::Exponential { eta } => Self::exponential(eta, model.block_len),
            NoiseKind::Pink { alpha } => Self::pink(alpha, model.block_len),
        }
    }

    /// The identity factor for white noise.
    pub fn white(n: usize) -> Result<Self, ChannelError> {
        if n == 0 {
            return Err(ChannelError::EmptyBlock);
        }
        Ok(CovarianceFactor {
            a: DMatrix::identity(n, n),
            identity: true,
        })
    }

    /// Factor for `Sigma[i][j] = eta^|i-j|`.
    ///
    /// For `|eta| < 1` the closed-form Cholesky factor of the exponential
    /// correlation matrix is used: column 0 is `eta^i` and column `j >= 1`
    /// is `eta^(i-j) * sqrt(1 - eta^2)` on and below the diagonal (the
    /// stationary AR(1) recursion). `eta = +-1` yields the rank-one factor
    /// whose first column is `(+-1)^i`. `eta = 0` is exactly the identity
    /// and samples bit-identically to the white model.
    pub fn exponential(eta: f64, n: usize) -> Result<Self, ChannelError> {
        if n == 0 {
            return Err(ChannelError::EmptyBlock);
        }
        if !(-1.0..=1.0).contains(&eta) || eta.is_nan() {
            return Err(ChannelError::InvalidCorrelation { eta });
        }
        if eta == 0.0 {
            return Self::white(n);
        }
        let mut a = DMatrix::zeros(n, n);
        if eta.abs() == 1.0 {
            for i in 0..n {
                a[(i, 0)] = eta.powi(i as i32);
            }
        } else {
            let scale = (1.0 - eta * eta).sqrt();
            for i in 0..n {
                a[(i, 0)] = eta.powi(i as i32);
                for j in 1..=i {
                    a[(i, j)] = eta.powi((i - j) as i32) * scale;
                }
            }
        }
        Ok(CovarianceFactor { a, identity: false })
    }

    /// Factor for the `1/f^alpha` spectral model.
    pub fn pink(alpha: f64, n: usize) -> Result<Self, ChannelError> {
        if n == 0 {
            return Err(ChannelError::EmptyBlock);
        }
        if !(alpha > 0.0) {
            return Err(ChannelError::InvalidAlpha { alpha });
        }
        if n == 1 {
            return Self::white(1);
        }
        // Two-sided sampled PSD at DFT bins; |f| measured as cycles per
        // block, symmetric about n/2. The DC bin copies the first nonzero
        // bin so the spectrum stays finite.
        let psd: Vec<f64> = (0..n)
            .map(|k| {
                let f = k.min(n - k) as f64;
                if k == 0 {
                    1.0 // placeholder, replaced below
                } else {
                    f.powf(alpha).recip()
                }
            })
            .collect();
        let mut psd = psd;
        psd[0] = psd[1];

        // Inverse DFT of the PSD gives the (circular) autocorrelation;
        // normalize to a unit diagonal.
        let nf = n as f64;
        let autocorr: Vec<f64> = (0..n)
            .map(|m| {
                (0..n)
                    .map(|k| psd[k] * (std::f64::consts::TAU * k as f64 * m as f64 / nf).cos())
                    .sum::<f64>()
                    / nf
            })
            .collect();
        let r0 = autocorr[0];
        let sigma = DMatrix::from_fn(n, n, |i, j| autocorr[i.abs_diff(j)] / r0);

        if let Some(chol) = sigma.clone().cholesky() {
            return Ok(CovarianceFactor {
                a: chol.unpack(),
                identity: false,
            });
        }
        // Ridge and renormalize so the diagonal stays exactly 1.
        let ridged = sigma.map(|x| x / (1.0 + PINK_RIDGE))
            + DMatrix::from_diagonal_element(n, n, PINK_RIDGE / (1.0 + PINK_RIDGE));
        match ridged.clone().cholesky() {
            Some(chol) => Ok(CovarianceFactor {
                a: chol.unpack(),
                identity: false,
            }),
            None => {
                let min_eigenvalue = ridged
                    .symmetric_eigen()
                    .eigenvalues
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min);
                Err(ChannelError::NotPositiveDefinite {
                    min_eigenvalue,
                    ridge: PINK_RIDGE,
                })
            }
        }
    }

    /// Block length.
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Reconstructs `Sigma = A A^T` (for diagnostics and tests).
    pub fn sigma(&self) -> DMatrix<f64> {
        &self.a * self.a.transpose()
    }

    /// Draws one noise block `sqrt(sigma2) * A * w`, `w ~ N(0, I)`.
    ///
    /// The `n` standard-normal variates are consumed in index order, so two
    /// factors with the same `A` produce identical blocks from identical RNG
    /// states. `sigma2 = 0` yields an exactly zero block.
    ///
    /// # Panics
    ///
    /// Panics if `sigma2` is negative or not finite.
    pub fn sample<R: rand::Rng + ?Sized>(&self, sigma2: f64, rng: &mut R) -> Vec<f64> {
        assert!(
            sigma2 >= 0.0 && sigma2.is_finite(),
            "noise power must be finite and nonnegative"
        );
        let n = self.dim();
        let std = sigma2.sqrt();
        let w: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        if self.identity {
            return w.into_iter().map(|x| std * x).collect();
        }
        let correlated = &self.a * DVector::from_vec(w);
        correlated.iter().map(|x| std * x).collect()
    }
}

// ---------------------------------------------------------------------------
// Modulation and SNR
// ---------------------------------------------------------------------------

/// Maps bits to BPSK symbols: `0 -> +1.0`, `1 -> -1.0`.
pub fn bpsk_modulate(bits: &[u8]) -> Vec<f64> {
    bits.iter()
        .map(|&b| {
            debug_assert!(b <= 1);
            if b == 0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect()
}

/// Hard symbol decisions: `y >= 0 -> 0`, `y < 0 -> 1` (ties decide 0, the
/// same convention as the decoder's sign rule).
pub fn bpsk_demodulate_hard(symbols: &[f64]) -> Vec<u8> {
    symbols.iter().map(|&y| if y >= 0.0 { 0 } else { 1 }).collect()
}

/// Per-sample noise power for a given SNR: `sigma2 = power / 10^(snr/10)`.
///
/// # Panics
///
/// Panics if `power` is not strictly positive.
pub fn snr_db_to_sigma2(snr_db: f64, power: f64) -> f64 {
    assert!(power > 0.0, "signal power must be positive");
    power / 10f64.powf(snr_db / 10.0)
}

/// Received block `y = s + n`.
///
/// # Panics
///
/// Panics if the lengths differ.
pub fn transmit(symbols: &[f64], noise: &[f64]) -> Vec<f64> {
    assert_eq!(symbols.len(), noise.len(), "symbol/noise length mismatch");
    symbols.iter().zip(noise).map(|(s, n)| s + n).collect()
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
    }

    // 1. Worked example: eta = 0.8, N = 3.
    #[test]
    fn exponential_sigma_example() {
        let f = CovarianceFactor::exponential(0.8, 3).unwrap();
        let expect = DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.8, 0.64, 0.8, 1.0, 0.8, 0.64, 0.8, 1.0],
        );
        assert!(max_abs_diff(&f.sigma(), &expect) < 1e-10);
    }

    // 2. The factor reproduces Sigma to near machine precision for a larger
    //    block and both signs of eta.
    #[test]
    fn exponential_factor_reproduces_sigma() {
        for &eta in &[0.5, 0.8, -0.6] {
            let n = 32;
            let f = CovarianceFactor::exponential(eta, n).unwrap();
            let expect = DMatrix::from_fn(n, n, |i, j| eta.powi(i.abs_diff(j) as i32));
            assert!(max_abs_diff(&f.sigma(), &expect) < 1e-10, "eta={eta}");
        }
    }

    // 3. eta = 0 is exactly the identity and samples bit-identically to the
    //    white model under matched seeds.
    #[test]
    fn eta_zero_matches_white() {
        let exp = CovarianceFactor::exponential(0.0, 16).unwrap();
        let white = CovarianceFactor::white(16).unwrap();
        assert_eq!(exp, white);
        let mut r1 = ChaCha8Rng::seed_from_u64(42);
        let mut r2 = ChaCha8Rng::seed_from_u64(42);
        let a = exp.sample(0.7, &mut r1);
        let b = white.sample(0.7, &mut r2);
        assert_eq!(a, b);
    }

    // 4. eta = +-1 degenerates to the rank-one factor with the right Sigma.
    #[test]
    fn eta_one_rank_one() {
        for &eta in &[1.0, -1.0] {
            let f = CovarianceFactor::exponential(eta, 5).unwrap();
            let expect = DMatrix::from_fn(5, 5, |i, j| eta.powi(i.abs_diff(j) as i32));
            assert!(max_abs_diff(&f.sigma(), &expect) < 1e-12);
        }
    }

    // 5. Out-of-range parameters are rejected.
    #[test]
    fn invalid_parameters() {
        assert!(matches!(
            CovarianceFactor::exponential(1.1, 4),
            Err(ChannelError::InvalidCorrelation { .. })
        ));
        assert!(matches!(
            CovarianceFactor::pink(0.0, 4),
            Err(ChannelError::InvalidAlpha { .. })
        ));
        assert!(matches!(
            CovarianceFactor::white(0),
            Err(ChannelError::EmptyBlock)
        ));
    }

    // 6. SNR conversion: 0 dB -> 1, 3 dB -> 0.50119, -3 dB -> 1.99526.
    #[test]
    fn snr_conversion() {
        assert_eq!(snr_db_to_sigma2(0.0, 1.0), 1.0);
        assert!((snr_db_to_sigma2(3.0, 1.0) - 0.501187233627272).abs() < 1e-12);
        assert!((snr_db_to_sigma2(-3.0, 1.0) - 1.995262314968879).abs() < 1e-12);
        // Power scales linearly.
        assert_eq!(snr_db_to_sigma2(10.0, 2.0), 0.2);
    }

    // 7. Empirical covariance of 1e5 sampled blocks matches sigma2 * Sigma
    //    entrywise within 0.02 (eta = 0.8, N = 8).
    #[test]
    fn sampling_covariance_matches() {
        let n = 8;
        let f = CovarianceFactor::exponential(0.8, n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let blocks = 100_000;
        let mut acc = DMatrix::<f64>::zeros(n, n);
        for _ in 0..blocks {
            let x = f.sample(1.0, &mut rng);
            for i in 0..n {
                for j in 0..n {
                    acc[(i, j)] += x[i] * x[j];
                }
            }
        }
        acc /= blocks as f64;
        assert!(max_abs_diff(&acc, &f.sigma()) < 0.02);
    }

    // 8. sigma2 = 0 gives exactly zero noise; scaling sigma2 by 4 scales
    //    samples by exactly 2 under matched seeds.
    #[test]
    fn noise_power_scaling() {
        let f = CovarianceFactor::exponential(0.5, 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(f.sample(0.0, &mut rng).iter().all(|&x| x == 0.0));
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        let base = f.sample(1.0, &mut r1);
        let scaled = f.sample(4.0, &mut r2);
        for (b, s) in base.iter().zip(&scaled) {
            assert_eq!(*s, 2.0 * *b);
        }
    }

    // 9. Pink covariance: unit diagonal, Toeplitz, and alpha -> 0 tends to
    //    the identity.
    #[test]
    fn pink_structure() {
        let f = CovarianceFactor::pink(1.0, 16).unwrap();
        let sigma = f.sigma();
        for i in 0..16 {
            assert!((sigma[(i, i)] - 1.0).abs() < 1e-9);
        }
        for i in 0..16usize {
            for j in 0..16usize {
                let lag = i.abs_diff(j);
                assert!((sigma[(i, j)] - sigma[(0, lag)]).abs() < 1e-9);
            }
        }
        let nearly_white = CovarianceFactor::pink(1e-8, 16).unwrap();
        assert!(
            max_abs_diff(&nearly_white.sigma(), &DMatrix::identity(16, 16)) < 1e-6
        );
    }

    // 10. Empirical PSD of pink noise follows 1/|f| per bin within 10%
    //     (alpha = 1, N = 64, 1e5 blocks, DC excluded). The periodogram is
    //     an independent oracle: a direct DFT of each sampled block.
    #[test]
    fn pink_psd_shape() {
        let n = 64;
        let f = CovarianceFactor::pink(1.0, n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let blocks = 100_000;
        // Precompute DFT twiddles.
        let mut cos_t = vec![vec![0.0; n]; n];
        let mut sin_t = vec![vec![0.0; n]; n];
        for k in 0..n {
            for t in 0..n {
                let arg = std::f64::consts::TAU * (k * t) as f64 / n as f64;
                cos_t[k][t] = arg.cos();
                sin_t[k][t] = arg.sin();
            }
        }
        let mut power = vec![0.0f64; n];
        for _ in 0..blocks {
            let x = f.sample(1.0, &mut rng);
            for k in 0..n {
                let (mut re, mut im) = (0.0, 0.0);
                for t in 0..n {
                    re += x[t] * cos_t[k][t];
                    im -= x[t] * sin_t[k][t];
                }
                power[k] += re * re + im * im;
            }
        }
        // Compare shapes, both normalized over the non-DC bins.
        let shape: Vec<f64> = (1..n).map(|k| 1.0 / (k.min(n - k) as f64)).collect();
        let shape_sum: f64 = shape.iter().sum();
        let power_sum: f64 = power[1..].iter().sum();
        for k in 1..n {
            let measured = power[k] / power_sum;
            let expected = shape[k - 1] / shape_sum;
            assert!(
                (measured / expected - 1.0).abs() < 0.10,
                "bin {k}: measured {measured:e}, expected {expected:e}"
            );
        }
    }

    // 11. Modulation conventions and the hard-demodulation inverse.
    #[test]
    fn modulation() {
        assert_eq!(bpsk_modulate(&[0, 1, 1, 0]), vec![1.0, -1.0, -1.0, 1.0]);
        let bits = vec![0, 1, 0, 0, 1, 1, 0, 1];
        assert_eq!(bpsk_demodulate_hard(&bpsk_modulate(&bits)), bits);
        // Ties decide 0.
        assert_eq!(bpsk_demodulate_hard(&[0.0, -0.0]), vec![0, 0]);
    }

    // 12. transmit is the elementwise sum.
    #[test]
    fn transmit_adds() {
        assert_eq!(
            transmit(&[1.0, -1.0], &[0.25, -0.5]),
            vec![1.25, -1.5]
        );
    }
}
