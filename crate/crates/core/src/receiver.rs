//! The iterative decoding loop: BP, then alternately denoise the noise
//! estimate with the network and decode again.
//!
//! # Overview
//!
//! One decode of a received block `y` with `K` denoiser iterations runs
//! `K + 1` BP stages:
//!
//! ```text
//! stage 0:  LLR = 2 y / sigma2                -> BP -> decisions s_hat
//! stage k:  n_hat = y - s_hat                 (noise estimate)
//!           n_tilde = cnn(n_hat)              (denoised estimate)
//!           y_hat = y - n_tilde               (effective received signal)
//!           LLR = 2 y_hat / sigma_r2[k-1]     -> BP -> new decisions
//! ```
//!
//! `sigma_r2[k-1]` is the power of the stage's residual noise
//! `r = n - n_tilde`, measured offline on a validation stream by
//! [`measure_sigma_r2`] and frozen into the configuration.
//!
//! Decoding exits early once any stage's hard decisions satisfy every
//! parity check; later stages never change the reported bits. The
//! [`DecodeTrace`] still always holds `K + 1` BP records and `K` denoiser
//! records: stages skipped by the early exit get replicated records with
//! `ran == false`.
//!
//! Baseline and enhanced receivers differ only in which model file and
//! `sigma_r2` table the configuration carries — the loop itself is
//! mode-agnostic.

use serde::{Deserialize, Serialize};

use crate::bp::{init_llr_white, BpDecoder, BpResult, BpWorkspace};
use crate::cnn::loss::{jb_statistic, LossError};
use crate::cnn::CnnModel;
use crate::code::{GeneratorMatrix, InfoBits};

/// Which trained artifacts a configuration carries; the decoding loop does
/// not branch on this.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReceiverMode {
    /// Model trained on the plain quadratic loss.
    Baseline,
    /// Model trained with the normality penalty.
    Enhanced,
}

/// Receiver parameters: per-stage BP iteration budgets and noise powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceiverConfig {
    pub mode: ReceiverMode,
    /// Marginal channel noise power, for stage-0 LLRs.
    pub sigma2: f64,
    /// BP iteration budget per stage; the length fixes `K + 1`.
    pub bp_iters: Vec<usize>,
    /// Residual noise power per denoiser stage (length `K`).
    pub sigma_r2: Vec<f64>,
}

impl ReceiverConfig {
    /// The number of denoiser iterations `K` (= BP stages minus one).
    pub fn iterations(&self) -> usize {
        self.bp_iters.len().saturating_sub(1)
    }

    fn validate(&self) -> Result<(), ReceiverError> {
        if self.bp_iters.is_empty() {
            return Err(ReceiverError::NoStages);
        }
        if let Some(stage) = self.bp_iters.iter().position(|&n| n == 0) {
            return Err(ReceiverError::ZeroBpIterations { stage });
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(ReceiverError::NonPositiveSigma2 { value: self.sigma2 });
        }
        if self.sigma_r2.len() != self.iterations() {
            return Err(ReceiverError::StageCountMismatch {
                expected: self.iterations(),
                got: self.sigma_r2.len(),
            });
        }
        for (i, &v) in self.sigma_r2.iter().enumerate() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ReceiverError::NonPositiveSigmaR2 { stage: i + 1, value: v });
            }
        }
        Ok(())
    }
}

/// Receiver construction or usage failure.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReceiverError {
    #[error("receiver needs at least one BP stage")]
    NoStages,
    #[error("BP stage {stage} has a zero iteration budget")]
    ZeroBpIterations { stage: usize },
    #[error("channel noise power must be finite and positive, got {value}")]
    NonPositiveSigma2 { value: f64 },
    #[error("expected {expected} residual noise powers, got {got}")]
    StageCountMismatch { expected: usize, got: usize },
    #[error("residual noise power for stage {stage} must be positive, got {value}")]
    NonPositiveSigmaR2 { stage: usize, value: f64 },
    #[error("a denoiser model is required when iterations > 0")]
    MissingModel,
    #[error("no blocks in the measurement stream")]
    EmptyStream,
    #[error("no residual samples collected")]
    NoSamples,
    #[error("residual samples are degenerate (zero variance)")]
    DegenerateResidual,
    #[error("denoiser stage {stage} is out of range (receiver has {iterations})")]
    StageOutOfRange { stage: usize, iterations: usize },
}

/// Outcome of one BP stage.
#[derive(Debug, Clone, PartialEq)]
pub struct BpStageRecord {
    /// False when this stage was skipped by the early exit and the record
    /// replicates the converged stage's state.
    pub ran: bool,
    pub hard_bits: Vec<u8>,
    pub syndrome_ok: bool,
    pub iterations_used: usize,
}

/// Outcome of one denoiser stage.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnStageRecord {
    /// False when this stage was skipped by the early exit.
    pub ran: bool,
    /// Power of `n_hat - n_tilde` for this block — equal to the true
    /// residual power whenever the previous stage's decisions were correct.
    /// Skipped stages carry the last computed value forward (or the raw
    /// noise-estimate power when no denoiser stage ever ran).
    pub residual_power_estimate: f64,
    /// The denoised noise estimate, kept only when sampling was requested.
    pub denoised: Option<Vec<f64>>,
    /// The effective received signal `y - n_tilde`, kept with sampling.
    pub effective_received: Option<Vec<f64>>,
}

/// Per-stage decode history: always `K + 1` BP records and `K` denoiser
/// records.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeTrace {
    pub bp: Vec<BpStageRecord>,
    pub cnn: Vec<CnnStageRecord>,
    /// First stage whose decisions satisfied the syndrome, if any.
    pub converged_at: Option<usize>,
}

/// The BP-then-denoise receiver. Immutable once built; decode many blocks
/// concurrently by giving each worker its own [`BpWorkspace`].
pub struct IterativeReceiver<'a> {
    decoder: &'a BpDecoder,
    generator: &'a GeneratorMatrix,
    model: Option<&'a CnnModel>,
    config: ReceiverConfig,
}

impl<'a> IterativeReceiver<'a> {
    /// Validates the configuration and binds it to a decoder, the code's
    /// systematic map, and (when `K >= 1`) a denoiser model.
    pub fn new(
        decoder: &'a BpDecoder,
        generator: &'a GeneratorMatrix,
        model: Option<&'a CnnModel>,
        config: ReceiverConfig,
    ) -> Result<Self, ReceiverError> {
        config.validate()?;
        if config.iterations() > 0 && model.is_none() {
            return Err(ReceiverError::MissingModel);
        }
        Ok(IterativeReceiver {
            decoder,
            generator,
            model,
            config,
        })
    }

    /// The bound configuration.
    pub fn config(&self) -> &ReceiverConfig {
        &self.config
    }

    /// Decodes one received block. Early-exits once a stage converges.
    pub fn decode(&self, ws: &mut BpWorkspace, y: &[f64]) -> (InfoBits, DecodeTrace) {
        self.run(ws, y, false, false)
    }

    /// [`IterativeReceiver::decode`] with residual sampling: denoiser
    /// records keep `n_tilde` and `y_hat` for CDF export.
    pub fn decode_traced(
        &self,
        ws: &mut BpWorkspace,
        y: &[f64],
        sample: bool,
    ) -> (InfoBits, DecodeTrace) {
        self.run(ws, y, sample, false)
    }

    /// Runs every stage even after convergence (for offline measurement of
    /// residual statistics). The reported bits still come from the first
    /// converged stage, so forcing never changes the decoding answer.
    pub fn decode_forced(
        &self,
        ws: &mut BpWorkspace,
        y: &[f64],
        sample: bool,
    ) -> (InfoBits, DecodeTrace) {
        self.run(ws, y, sample, true)
    }

    fn run(
        &self,
        ws: &mut BpWorkspace,
        y: &[f64],
        sample: bool,
        force: bool,
    ) -> (InfoBits, DecodeTrace) {
        assert_eq!(
            y.len(),
            self.decoder.num_vars(),
            "received block length must match the code"
        );
        let k_iters = self.config.iterations();
        let llr = init_llr_white(y, self.config.sigma2);
        let mut result = self.decoder.decode_with(ws, &llr, self.config.bp_iters[0]);
        let mut converged_at = if result.syndrome_ok { Some(0) } else { None };

        let mut bp_records = Vec::with_capacity(k_iters + 1);
        let mut cnn_records = Vec::with_capacity(k_iters);
        bp_records.push(stage_record(&result, true));
        let mut symbols = std::mem::take(&mut result.symbols);

        for k in 1..=k_iters {
            if converged_at.is_some() && !force {
                // Early exit: replicate the converged state so the trace
                // keeps its K+1 / K shape.
                let replicated = BpStageRecord {
                    ran: false,
                    ..bp_records.last().unwrap().clone()
                };
                bp_records.push(replicated);
                let carried = cnn_records
                    .last()
                    .map(|r: &CnnStageRecord| r.residual_power_estimate)
                    .unwrap_or_else(|| {
                        mean_square(&difference(y, &symbols))
                    });
                cnn_records.push(CnnStageRecord {
                    ran: false,
                    residual_power_estimate: carried,
                    denoised: None,
                    effective_received: None,
                });
                continue;
            }

            let model = self.model.expect("validated: model present when K >= 1");
            let n_hat = difference(y, &symbols);
            let n_tilde = model.forward_only(&n_hat);
            let residual_power_estimate = mean_square(&difference(&n_hat, &n_tilde));
            let y_hat = difference(y, &n_tilde);
            cnn_records.push(CnnStageRecord {
                ran: true,
                residual_power_estimate,
                denoised: sample.then(|| n_tilde.clone()),
                effective_received: sample.then(|| y_hat.clone()),
            });

            let llr = init_llr_white(&y_hat, self.config.sigma_r2[k - 1]);
            let mut next = self.decoder.decode_with(ws, &llr, self.config.bp_iters[k]);
            if next.syndrome_ok && converged_at.is_none() {
                converged_at = Some(k);
            }
            bp_records.push(stage_record(&next, true));
            symbols = std::mem::take(&mut next.symbols);
        }

        // Report the first converged stage's bits (the last stage when
        // nothing converged). Without forcing, later records replicate the
        // converged stage anyway; with forcing this keeps the answer fixed.
        let report_stage = converged_at.unwrap_or(k_iters);
        let info = self.generator.extract_info(&bp_records[report_stage].hard_bits);
        (
            info,
            DecodeTrace {
                bp: bp_records,
                cnn: cnn_records,
                converged_at,
            },
        )
    }
}

fn stage_record(result: &BpResult, ran: bool) -> BpStageRecord {
    BpStageRecord {
        ran,
        hard_bits: result.hard_bits.clone(),
        syndrome_ok: result.syndrome_ok,
        iterations_used: result.iterations_used,
    }
}

fn difference(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn mean_square(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64
}

// ---------------------------------------------------------------------------
// Residual-noise power measurement
// ---------------------------------------------------------------------------

/// Measures the per-stage residual noise power table on a stream of
/// `(received, true_noise)` blocks, stage by stage: stage `k`'s
/// measurement replays stages `0..k` using the already-measured powers,
/// forces every block through the denoiser, and averages
/// `|n - n_tilde|^2 / N` over the whole stream.
///
/// Returns `K` values given the intended full `bp_iters` schedule
/// (`K = bp_iters.len() - 1`).
pub fn measure_sigma_r2(
    decoder: &BpDecoder,
    generator: &GeneratorMatrix,
    model: &CnnModel,
    mode: ReceiverMode,
    sigma2: f64,
    bp_iters: &[usize],
    blocks: &[(Vec<f64>, Vec<f64>)],
) -> Result<Vec<f64>, ReceiverError> {
    if blocks.is_empty() {
        return Err(ReceiverError::EmptyStream);
    }
    let k_iters = bp_iters.len().saturating_sub(1);
    let mut table: Vec<f64> = Vec::with_capacity(k_iters);
    let mut ws = decoder.workspace();
    for k in 1..=k_iters {
        // Truncated receiver covering stages 0..k-1; stage k's denoiser
        // pass is applied manually below, so its power is not needed yet.
        let config = ReceiverConfig {
            mode,
            sigma2,
            bp_iters: bp_iters[..k].to_vec(),
            sigma_r2: table.clone(),
        };
        let rx = IterativeReceiver::new(decoder, generator, Some(model), config)?;
        let mut total = 0.0;
        for (y, n) in blocks {
            let (_, trace) = rx.decode_forced(&mut ws, y, false);
            let last = trace.bp.last().expect("at least one BP stage");
            let symbols: Vec<f64> = last
                .hard_bits
                .iter()
                .map(|&b| if b == 0 { 1.0 } else { -1.0 })
                .collect();
            let n_hat = difference(y, &symbols);
            let n_tilde = model.forward_only(&n_hat);
            total += mean_square(&difference(n, &n_tilde));
        }
        table.push(total / blocks.len() as f64);
    }
    Ok(table)
}

/// Pools denoiser residuals `r = n - n_tilde` at one denoiser stage
/// (1-based) over a stream of `(received, true_noise)` blocks, forcing
/// every block through the stage.
pub fn collect_residuals(
    receiver: &IterativeReceiver<'_>,
    blocks: &[(Vec<f64>, Vec<f64>)],
    stage: usize,
) -> Result<Vec<f64>, ReceiverError> {
    let iterations = receiver.config().iterations();
    if stage == 0 || stage > iterations {
        return Err(ReceiverError::StageOutOfRange { stage, iterations });
    }
    if blocks.is_empty() {
        return Err(ReceiverError::EmptyStream);
    }
    let mut ws = receiver.decoder.workspace();
    let mut pooled = Vec::with_capacity(blocks.len() * blocks[0].0.len());
    for (y, n) in blocks {
        let (_, trace) = receiver.decode_forced(&mut ws, y, true);
        let record = &trace.cnn[stage - 1];
        let n_tilde = record
            .denoised
            .as_ref()
            .expect("forced decode with sampling keeps denoiser outputs");
        pooled.extend(n.iter().zip(n_tilde).map(|(a, b)| a - b));
    }
    Ok(pooled)
}

// ---------------------------------------------------------------------------
// Residual CDF export
// ---------------------------------------------------------------------------

/// Empirical distribution of pooled residual samples, with the normality
/// statistic precomputed.
#[derive(Debug, Clone)]
pub struct ResidualCdf {
    sorted: Vec<f64>,
    jb: f64,
}

/// Builds the empirical CDF of pooled residual samples.
pub fn export_residual_cdf(samples: &[f64]) -> Result<ResidualCdf, ReceiverError> {
    if samples.is_empty() {
        return Err(ReceiverError::NoSamples);
    }
    let jb = jb_statistic(samples).map_err(|e| match e {
        LossError::DegenerateResidual => ReceiverError::DegenerateResidual,
        LossError::TooShort { .. } => ReceiverError::NoSamples,
    })?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("residual samples must not be NaN"));
    Ok(ResidualCdf { sorted, jb })
}

impl ResidualCdf {
    /// The pooled normality statistic `S^2 + (C - 3)^2 / 4`.
    pub fn jb_statistic(&self) -> f64 {
        self.jb
    }

    /// Number of pooled samples.
    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    /// True when no samples are held (never, by construction).
    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// `(value, cumulative probability)` points with `F(x_i) = (i+1)/n`.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let n = self.sorted.len() as f64;
        self.sorted
            .iter()
            .enumerate()
            .map(move |(i, &x)| (x, (i + 1) as f64 / n))
    }

    /// Largest deviation between the empirical CDF and the Gaussian CDF
    /// fitted by sample mean and variance (two-sided, Kolmogorov-Smirnov
    /// style).
    pub fn max_gaussian_deviation(&self) -> f64 {
        let n = self.sorted.len() as f64;
        let mean = self.sorted.iter().sum::<f64>() / n;
        let var = self.sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!(var > 0.0, "degenerate sample rejected at construction");
        let sd = var.sqrt();
        let mut worst = 0.0f64;
        for (i, &x) in self.sorted.iter().enumerate() {
            let fitted = normal_cdf((x - mean) / sd);
            let above = ((i + 1) as f64 / n - fitted).abs();
            let below = (fitted - i as f64 / n).abs();
            worst = worst.max(above).max(below);
        }
        worst
    }

    /// Writes the CDF as two-column text: `value<TAB>probability`, one
    /// point per line.
    pub fn write_to<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        for (value, prob) in self.points() {
            writeln!(out, "{value:.17e}\t{prob:.17e}")?;
        }
        Ok(())
    }
}

/// Standard normal CDF via a rational erfc approximation (absolute error
/// under 1.3e-7 — far below the statistical resolution of any stream this
/// crate measures).
pub(crate) fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc_approx(-z / std::f64::consts::SQRT_2)
}

/// Complementary error function, Chebyshev-fitted rational approximation.
fn erfc_approx(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z
        - 1.26551223
        + t * (1.00002368
            + t * (0.37409196
                + t * (0.09678418
                    + t * (-0.18628806
                        + t * (0.27886807
                            + t * (-1.13520398
                                + t * (1.48851587
                                    + t * (-0.82215223 + t * 0.17087277))))))));
    let ans = t * poly.exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
