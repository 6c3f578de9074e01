//! Denoiser training losses over the residual `r = n - n_tilde` (true noise
//! minus network output), with analytic gradients.
//!
//! Two losses are supported for a length-`N` block:
//!
//! - quadratic: `|r|^2 / N` — the residual noise power;
//! - normality-penalized: `|r|^2 / N + lambda * (S^2 + (C - 3)^2 / 4)`,
//!   where `S` and `C` are the sample skewness and kurtosis of `r`. The
//!   penalty is the Jarque-Bera normality statistic, pushing the residual
//!   toward Gaussian shape so a Gaussian-form LLR stays accurate.
//!
//! Moments use `1/N` normalization about the sample mean. With
//! `lambda = 0` the penalized loss short-circuits to the quadratic one, so
//! it never fails on degenerate (zero-variance) residuals in that case.
//!
//! Gradients are derived by direct differentiation of the central moments;
//! see [`loss_and_gradient`]. They are exact (validated against central
//! finite differences by the test suite).

use serde::{Deserialize, Serialize};

/// Which loss to optimize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Residual power only.
    Quadratic,
    /// Residual power plus the Jarque-Bera normality penalty.
    JbEnhanced,
}

/// Loss selection plus the penalty weight (used only by
/// [`LossKind::JbEnhanced`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    #[serde(default)]
    pub lambda: f64,
}

impl LossSpec {
    /// Residual-power loss.
    pub fn quadratic() -> Self {
        LossSpec {
            kind: LossKind::Quadratic,
            lambda: 0.0,
        }
    }

    /// Normality-penalized loss with weight `lambda`.
    ///
    /// # Panics
    ///
    /// Panics if `lambda` is negative or non-finite.
    pub fn jb_enhanced(lambda: f64) -> Self {
        assert!(
            lambda >= 0.0 && lambda.is_finite(),
            "penalty weight must be finite and non-negative"
        );
        LossSpec {
            kind: LossKind::JbEnhanced,
            lambda,
        }
    }

    /// The penalty weight actually in effect (0 for the quadratic loss).
    pub fn effective_lambda(&self) -> f64 {
        match self.kind {
            LossKind::Quadratic => 0.0,
            LossKind::JbEnhanced => self.lambda,
        }
    }
}

/// Failure computing standardized moments.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LossError {
    /// All residual entries equal: skewness/kurtosis undefined.
    #[error("degenerate residual: sample variance is zero")]
    DegenerateResidual,
    /// Moments need at least two samples.
    #[error("residual too short for moments: length {len}")]
    TooShort { len: usize },
}

/// Mean squared residual `|n - n_tilde|^2 / N`.
///
/// # Panics
///
/// Panics if the lengths differ or the input is empty.
pub fn loss_quadratic(denoised: &[f64], truth: &[f64]) -> f64 {
    assert_eq!(denoised.len(), truth.len(), "residual length mismatch");
    assert!(!denoised.is_empty(), "residual must be non-empty");
    let n = denoised.len() as f64;
    denoised
        .iter()
        .zip(truth)
        .map(|(nt, nn)| {
            let r = nn - nt;
            r * r
        })
        .sum::<f64>()
        / n
}

/// Sample skewness and kurtosis of `r` with `1/N` central moments:
/// `S = m3 / m2^1.5`, `C = m4 / m2^2`. A Gaussian sample has `S ~ 0`,
/// `C ~ 3`.
pub fn skewness_kurtosis(r: &[f64]) -> Result<(f64, f64), LossError> {
    let (_, _, s, c) = central_moments(r)?;
    Ok((s, c))
}

/// The Jarque-Bera-style normality statistic `S^2 + (C - 3)^2 / 4`; zero
/// for exactly Gaussian sample moments.
pub fn jb_statistic(r: &[f64]) -> Result<f64, LossError> {
    let (s, c) = skewness_kurtosis(r)?;
    Ok(s * s + 0.25 * (c - 3.0) * (c - 3.0))
}

/// Normality-penalized loss `|r|^2/N + lambda (S^2 + (C-3)^2/4)`. With
/// `lambda = 0` this is exactly [`loss_quadratic`] and never fails.
///
/// # Panics
///
/// Panics on length mismatch, empty input, or invalid `lambda` (negative
/// or non-finite).
pub fn loss_jb(denoised: &[f64], truth: &[f64], lambda: f64) -> Result<f64, LossError> {
    assert!(
        lambda >= 0.0 && lambda.is_finite(),
        "penalty weight must be finite and non-negative"
    );
    let quad = loss_quadratic(denoised, truth);
    if lambda == 0.0 {
        return Ok(quad);
    }
    let r: Vec<f64> = denoised.iter().zip(truth).map(|(nt, nn)| nn - nt).collect();
    Ok(quad + lambda * jb_statistic(&r)?)
}

/// Loss value under `spec`.
pub fn loss_value(spec: &LossSpec, denoised: &[f64], truth: &[f64]) -> Result<f64, LossError> {
    match spec.kind {
        LossKind::Quadratic => Ok(loss_quadratic(denoised, truth)),
        LossKind::JbEnhanced => loss_jb(denoised, truth, spec.lambda),
    }
}

/// Loss value and its gradient with respect to the *network output*
/// `n_tilde` (note `d r / d n_tilde = -1`).
///
/// Gradient derivation, with `d_i = r_i - mean(r)` and `1/N` moments
/// `m2, m3, m4`:
///
/// ```text
/// d m2 / d r_i = 2 d_i / N
/// d m3 / d r_i = 3 (d_i^2 - m2) / N
/// d m4 / d r_i = 4 (d_i^3 - m3) / N
/// d S  / d r_i = m2^-1.5 dm3_i - 1.5 m3 m2^-2.5 dm2_i
/// d C  / d r_i = m2^-2   dm4_i - 2   m4 m2^-3   dm2_i
/// d L  / d r_i = 2 r_i / N + lambda (2 S dS_i + (C - 3) dC_i / 2)
/// ```
pub fn loss_and_gradient(
    spec: &LossSpec,
    denoised: &[f64],
    truth: &[f64],
) -> Result<(f64, Vec<f64>), LossError> {
    assert_eq!(denoised.len(), truth.len(), "residual length mismatch");
    assert!(!denoised.is_empty(), "residual must be non-empty");
    let n = denoised.len() as f64;
    let r: Vec<f64> = denoised.iter().zip(truth).map(|(nt, nn)| nn - nt).collect();
    let quad = r.iter().map(|x| x * x).sum::<f64>() / n;
    let lambda = spec.effective_lambda();
    if lambda == 0.0 {
        let grad = r.iter().map(|ri| -2.0 * ri / n).collect();
        return Ok((quad, grad));
    }

    let (m2, m3, s, c) = central_moments(&r)?;
    let mean = r.iter().sum::<f64>() / n;
    let loss = quad + lambda * (s * s + 0.25 * (c - 3.0) * (c - 3.0));

    let m2_15 = m2.powf(1.5);
    let m2_25 = m2.powf(2.5);
    let m4 = c * m2 * m2;
    let mut grad = Vec::with_capacity(r.len());
    for &ri in &r {
        let d = ri - mean;
        let dm2 = 2.0 * d / n;
        let dm3 = 3.0 * (d * d - m2) / n;
        let dm4 = 4.0 * (d * d * d - m3) / n;
        let ds = dm3 / m2_15 - 1.5 * m3 / m2_25 * dm2;
        let dc = dm4 / (m2 * m2) - 2.0 * m4 / (m2 * m2 * m2) * dm2;
        let dl_dr = 2.0 * ri / n + lambda * (2.0 * s * ds + 0.5 * (c - 3.0) * dc);
        grad.push(-dl_dr);
    }
    Ok((loss, grad))
}

/// Central moments and standardized moments: `(m2, m3, S, C)`.
fn central_moments(r: &[f64]) -> Result<(f64, f64, f64, f64), LossError> {
    if r.len() < 2 {
        return Err(LossError::TooShort { len: r.len() });
    }
    let n = r.len() as f64;
    let mean = r.iter().sum::<f64>() / n;
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    let mut m4 = 0.0;
    for &x in r {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if m2 <= 0.0 {
        return Err(LossError::DegenerateResidual);
    }
    let s = m3 / m2.powf(1.5);
    let c = m4 / (m2 * m2);
    Ok((m2, m3, s, c))
}
