//! Experiment driver: Monte-Carlo bit-error-rate sweeps over channel,
//! SNR, and receiver-variant grids, with CSV and plot-data exports and
//! SNR-gain tables.
//!
//! Every grid point is fully pinned by `(seed, point index, block index)`:
//! block `b` of point `p` draws from `ChaCha8Rng::seed_from_u64(seed)` on
//! stream `((p + 1) << 32) + b`, and all counters are integers, so a plan
//! re-run with the same seed reproduces its report byte for byte no matter
//! how many worker threads run.

use std::collections::BTreeMap;
use std::io;
use std::path::PathBuf;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bp::BpDecoder;
use crate::channel::{
    bpsk_modulate, snr_db_to_sigma2, ChannelError, CovarianceFactor, NoiseKind, NoiseModel,
};
use crate::cnn::io::{load_model, ModelIoError};
use crate::cnn::CnnModel;
use crate::code::{
    random_info_bits, AlistError, CodeError, GeneratorMatrix, ParityCheckMatrix,
};
use crate::receiver::{
    measure_sigma_r2, IterativeReceiver, ReceiverConfig, ReceiverError, ReceiverMode,
};

/// Offset separating a point's residual-power measurement stream from its
/// evaluation blocks (both live under the point's stream base).
const MEASURE_STREAM_OFFSET: u64 = 1 << 31;

/// Largest number of blocks simulated between stopping-rule checks.
const MAX_BATCH_BLOCKS: u64 = 1024;

/// One receiver to evaluate at every grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VariantSpec {
    /// Plain belief propagation.
    PlainBp {
        /// BP iterations.
        iters: usize,
        /// Report label override; default `BP(iters)`.
        #[serde(default)]
        label: Option<String>,
    },
    /// Denoiser-assisted receiver: `cnn_passes` denoiser passes
    /// interleaved between `cnn_passes + 1` BP stages.
    CnnAssisted {
        /// BP iterations per stage.
        bp_iters: usize,
        /// Denoiser passes (the K in `K{BP(n)-CNN}-BP(n)`).
        #[serde(default = "default_cnn_passes")]
        cnn_passes: usize,
        /// Residual-power policy for the post-denoiser LLR scale.
        mode: ReceiverMode,
        /// Trained model file.
        model_file: PathBuf,
        /// Report label override; default `K{BP(n)-CNN}-BP(n)-mode`.
        #[serde(default)]
        label: Option<String>,
    },
}

fn default_cnn_passes() -> usize {
    1
}

impl VariantSpec {
    /// The label used in reports and CSV (commas are avoided so the CSV
    /// needs no quoting).
    pub fn label(&self) -> String {
        match self {
            VariantSpec::PlainBp { iters, label } => label
                .clone()
                .unwrap_or_else(|| format!("BP({iters})")),
            VariantSpec::CnnAssisted {
                bp_iters,
                cnn_passes,
                mode,
                label,
                ..
            } => label.clone().unwrap_or_else(|| {
                let mode = match mode {
                    ReceiverMode::Baseline => "baseline",
                    ReceiverMode::Enhanced => "enhanced",
                };
                format!("{cnn_passes}{{BP({bp_iters})-CNN}}-BP({bp_iters})-{mode}")
            }),
        }
    }
}

/// A full sweep description: which code, which channels, which SNRs, which
/// receivers, and how hard to measure each point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    /// Parity-check matrix file (alist text); the built-in code when
    /// absent.
    #[serde(default)]
    pub code_file: Option<PathBuf>,
    /// Channel grid.
    pub channels: Vec<NoiseKind>,
    /// SNR grid in dB.
    pub snrs_db: Vec<f64>,
    /// Receivers to evaluate.
    pub variants: Vec<VariantSpec>,
    /// Minimum information bits per grid point.
    pub min_info_bits: u64,
    /// After the bit budget is met, keep running until this many bit errors
    /// have been seen — bounded by `max_budget_factor` times the budget.
    #[serde(default = "default_min_bit_errors")]
    pub min_bit_errors: u64,
    /// Hard cap on each point as a multiple of `min_info_bits`.
    #[serde(default = "default_budget_factor")]
    pub max_budget_factor: u64,
    /// Blocks in the residual-power measurement stream of denoiser
    /// variants.
    #[serde(default = "default_measure_blocks")]
    pub measure_blocks: usize,
    /// Master seed.
    pub seed: u64,
    /// Record wall time per point. Off by default so two equal-seed runs
    /// emit byte-identical CSV (the `seconds` column is 0).
    #[serde(default)]
    pub record_timing: bool,
}

fn default_min_bit_errors() -> u64 {
    100
}

fn default_budget_factor() -> u64 {
    10
}

fn default_measure_blocks() -> usize {
    200
}

impl ExperimentPlan {
    /// Checks the cross-field invariants.
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.channels.is_empty() {
            return Err(HarnessError::EmptyChannelGrid);
        }
        if self.snrs_db.is_empty() {
            return Err(HarnessError::EmptySnrGrid);
        }
        if self.variants.is_empty() {
            return Err(HarnessError::NoVariants);
        }
        if self.min_info_bits < 10_000 {
            return Err(HarnessError::BudgetTooSmall(self.min_info_bits));
        }
        if self.min_bit_errors == 0 {
            return Err(HarnessError::ZeroErrorTarget);
        }
        if self.max_budget_factor == 0 {
            return Err(HarnessError::ZeroBudgetFactor);
        }
        if self.measure_blocks == 0 {
            return Err(HarnessError::NoMeasureBlocks);
        }
        for v in &self.variants {
            match v {
                VariantSpec::PlainBp { iters: 0, .. } => {
                    return Err(HarnessError::ZeroBpIters)
                }
                VariantSpec::CnnAssisted { bp_iters: 0, .. } => {
                    return Err(HarnessError::ZeroBpIters)
                }
                VariantSpec::CnnAssisted { cnn_passes: 0, .. } => {
                    return Err(HarnessError::ZeroCnnPasses)
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Sweep failure.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("channel grid is empty")]
    EmptyChannelGrid,
    #[error("SNR grid is empty")]
    EmptySnrGrid,
    #[error("variant list is empty")]
    NoVariants,
    #[error("bit budget per point must be at least 10000, got {0}")]
    BudgetTooSmall(u64),
    #[error("bit-error target must be at least 1")]
    ZeroErrorTarget,
    #[error("budget cap factor must be at least 1")]
    ZeroBudgetFactor,
    #[error("residual-power measurement needs at least one block")]
    NoMeasureBlocks,
    #[error("BP stages must run at least one iteration")]
    ZeroBpIters,
    #[error("denoiser-assisted receiver needs at least one denoiser pass")]
    ZeroCnnPasses,
    #[error(transparent)]
    Alist(#[from] AlistError),
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Receiver(#[from] ReceiverError),
    #[error(transparent)]
    ModelIo(#[from] ModelIoError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Measured outcome of one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    /// Variant label.
    pub variant: String,
    /// Channel parameter (correlation coefficient or spectral exponent;
    /// 0 for white noise).
    pub eta: f64,
    /// Operating SNR in dB.
    pub snr_db: f64,
    /// Information bits tested.
    pub bits: u64,
    /// Information bits decoded wrongly.
    pub bit_errors: u64,
    /// Blocks tested.
    pub blocks: u64,
    /// Blocks with at least one information-bit error.
    pub block_errors: u64,
    /// Fraction of blocks whose syndrome check had passed by the end of
    /// each BP stage (cumulative, so non-decreasing).
    pub stage_pass_rates: Vec<f64>,
    /// Residual-power table measured for this point (empty for plain BP).
    pub sigma_r2: Vec<f64>,
    /// Wall time, or 0 when timing is off.
    pub seconds: f64,
}

impl PointResult {
    /// Bit error rate.
    pub fn ber(&self) -> f64 {
        self.bit_errors as f64 / self.bits as f64
    }
}

/// All grid points of a finished plan, in deterministic grid order
/// (channels, then variants, then SNRs).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BerReport {
    pub points: Vec<PointResult>,
}

/// Runs every grid point of the plan. See [`run_plan_with`].
pub fn run_plan(plan: &ExperimentPlan) -> Result<BerReport, HarnessError> {
    run_plan_with(plan, |_| {})
}

/// Runs every grid point of the plan, invoking `on_point` as each one
/// finishes (for progress reporting).
///
/// Each point simulates fresh random information bits through
/// encode → channel → receiver and counts information-bit errors. A point
/// stops once its bit budget is met **and** either the bit-error target is
/// reached or the 10×-budget cap is hit — low-error points get more bits,
/// bounded. Denoiser variants first measure their per-stage residual-power
/// table on a dedicated stream of `measure_blocks` blocks.
pub fn run_plan_with(
    plan: &ExperimentPlan,
    mut on_point: impl FnMut(&PointResult),
) -> Result<BerReport, HarnessError> {
    plan.validate()?;
    let h = match &plan.code_file {
        Some(path) => ParityCheckMatrix::parse_alist(&std::fs::read_to_string(path)?)?,
        None => crate::code::ldpc_576_432(),
    };
    let generator = GeneratorMatrix::derive(&h)?;
    let decoder = BpDecoder::new(&h);
    let n = decoder.num_vars();

    // Load every referenced model once.
    let mut models: BTreeMap<PathBuf, CnnModel> = BTreeMap::new();
    for v in &plan.variants {
        if let VariantSpec::CnnAssisted { model_file, .. } = v {
            if !models.contains_key(model_file) {
                models.insert(model_file.clone(), load_model(model_file)?);
            }
        }
    }

    let mut points = Vec::new();
    let mut point_index: u64 = 0;
    for kind in &plan.channels {
        let channel = NoiseModel {
            kind: *kind,
            block_len: n,
        };
        let factor = CovarianceFactor::for_model(&channel)?;
        for variant in &plan.variants {
            for &snr_db in &plan.snrs_db {
                let point = run_point(
                    plan,
                    &decoder,
                    &generator,
                    &factor,
                    &models,
                    *kind,
                    variant,
                    snr_db,
                    point_index,
                )?;
                on_point(&point);
                points.push(point);
                point_index += 1;
            }
        }
    }
    Ok(BerReport { points })
}

#[allow(clippy::too_many_arguments)]
fn run_point(
    plan: &ExperimentPlan,
    decoder: &BpDecoder,
    generator: &GeneratorMatrix,
    factor: &CovarianceFactor,
    models: &BTreeMap<PathBuf, CnnModel>,
    kind: NoiseKind,
    variant: &VariantSpec,
    snr_db: f64,
    point_index: u64,
) -> Result<PointResult, HarnessError> {
    let start = Instant::now();
    let sigma2 = snr_db_to_sigma2(snr_db, 1.0);
    let point_base = (point_index + 1) << 32;

    let (bp_iters, mode, model): (Vec<usize>, ReceiverMode, Option<&CnnModel>) = match variant {
        VariantSpec::PlainBp { iters, .. } => (vec![*iters], ReceiverMode::Enhanced, None),
        VariantSpec::CnnAssisted {
            bp_iters,
            cnn_passes,
            mode,
            model_file,
            ..
        } => (
            vec![*bp_iters; cnn_passes + 1],
            *mode,
            Some(&models[model_file]),
        ),
    };

    // Residual-power table for denoiser stages, measured on this point's
    // dedicated stream.
    let sigma_r2 = if bp_iters.len() > 1 {
        let blocks = simulate_blocks(
            generator,
            factor,
            sigma2,
            plan.measure_blocks,
            plan.seed,
            point_base + MEASURE_STREAM_OFFSET,
        );
        measure_sigma_r2(
            decoder,
            generator,
            model.expect("denoiser variants carry a model"),
            mode,
            sigma2,
            &bp_iters,
            &blocks,
        )?
    } else {
        Vec::new()
    };

    let config = ReceiverConfig {
        mode,
        sigma2,
        bp_iters: bp_iters.clone(),
        sigma_r2: sigma_r2.clone(),
    };
    let receiver = IterativeReceiver::new(decoder, generator, model, config)?;

    let k_info = generator.num_info() as u64;
    let stages = bp_iters.len();
    let budget = plan.min_info_bits;
    let cap = plan.min_info_bits.saturating_mul(plan.max_budget_factor);

    let mut bits = 0u64;
    let mut bit_errors = 0u64;
    let mut blocks = 0u64;
    let mut block_errors = 0u64;
    let mut pass_counts = vec![0u64; stages];
    let mut next_block = 0u64;

    while bits < budget || (bit_errors < plan.min_bit_errors && bits < cap) {
        let phase_target = if bits < budget { budget } else { cap };
        let remaining = phase_target - bits;
        let batch = remaining.div_ceil(k_info).clamp(1, MAX_BATCH_BLOCKS);

        let (be, blke, passes) = (next_block..next_block + batch)
            .into_par_iter()
            .map_init(
                || decoder.workspace(),
                |ws, b| {
                    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
                    rng.set_stream(point_base + b);
                    let info = random_info_bits(generator.num_info(), &mut rng);
                    let symbols = bpsk_modulate(&generator.encode(&info));
                    let noise = factor.sample(sigma2, &mut rng);
                    let y: Vec<f64> =
                        symbols.iter().zip(&noise).map(|(s, w)| s + w).collect();
                    let (decoded, trace) = receiver.decode(ws, &y);
                    let errs = info
                        .iter()
                        .zip(&decoded)
                        .filter(|(a, b)| a != b)
                        .count() as u64;
                    let mut pass = vec![0u64; stages];
                    for (s, rec) in trace.bp.iter().enumerate() {
                        pass[s] = u64::from(rec.syndrome_ok);
                    }
                    (errs, u64::from(errs > 0), pass)
                },
            )
            .reduce(
                || (0u64, 0u64, vec![0u64; stages]),
                |mut a, b| {
                    a.0 += b.0;
                    a.1 += b.1;
                    for (x, y) in a.2.iter_mut().zip(&b.2) {
                        *x += y;
                    }
                    a
                },
            );

        bits += batch * k_info;
        blocks += batch;
        bit_errors += be;
        block_errors += blke;
        for (x, y) in pass_counts.iter_mut().zip(&passes) {
            *x += y;
        }
        next_block += batch;
    }

    Ok(PointResult {
        variant: variant.label(),
        eta: kind.parameter(),
        snr_db,
        bits,
        bit_errors,
        blocks,
        block_errors,
        stage_pass_rates: pass_counts
            .iter()
            .map(|&c| c as f64 / blocks as f64)
            .collect(),
        sigma_r2,
        seconds: if plan.record_timing {
            start.elapsed().as_secs_f64()
        } else {
            0.0
        },
    })
}

/// Simulates `count` random-codeword transmissions and returns
/// `(received, true noise)` blocks, one RNG stream per block.
pub fn simulate_blocks(
    generator: &GeneratorMatrix,
    factor: &CovarianceFactor,
    sigma2: f64,
    count: usize,
    seed: u64,
    stream_base: u64,
) -> Vec<(Vec<f64>, Vec<f64>)> {
    (0..count as u64)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream_base + j);
            let info = random_info_bits(generator.num_info(), &mut rng);
            let symbols = bpsk_modulate(&generator.encode(&info));
            let noise = factor.sample(sigma2, &mut rng);
            let y: Vec<f64> = symbols.iter().zip(&noise).map(|(s, w)| s + w).collect();
            (y, noise)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Gain tables
// ---------------------------------------------------------------------------

/// SNR gain of one variant over another at a target BER, per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct GainEntry {
    /// Channel parameter the pair of curves was measured on.
    pub eta: f64,
    /// SNR where the baseline curve crosses the target, if measured.
    pub baseline_snr_db: Option<f64>,
    /// SNR where the enhanced curve crosses the target, if measured.
    pub enhanced_snr_db: Option<f64>,
    /// `baseline − enhanced` when both crossings exist; `None` flags a
    /// target outside a measured range (never extrapolated).
    pub gain_db: Option<f64>,
}

/// Computes the SNR gain of `enhanced` over `baseline` at `target_ber` for
/// every channel in the report, by log-linear interpolation of each
/// BER-vs-SNR curve.
pub fn gain_vs_eta(
    report: &BerReport,
    baseline: &str,
    enhanced: &str,
    target_ber: f64,
) -> Vec<GainEntry> {
    let mut etas: Vec<f64> = Vec::new();
    for p in &report.points {
        if !etas.iter().any(|e| e.to_bits() == p.eta.to_bits()) {
            etas.push(p.eta);
        }
    }
    etas.iter()
        .map(|&eta| {
            let b = snr_at_target_ber(&curve_of(report, eta, baseline), target_ber);
            let e = snr_at_target_ber(&curve_of(report, eta, enhanced), target_ber);
            GainEntry {
                eta,
                baseline_snr_db: b,
                enhanced_snr_db: e,
                gain_db: match (b, e) {
                    (Some(b), Some(e)) => Some(b - e),
                    _ => None,
                },
            }
        })
        .collect()
}

/// The (snr_db, ber) curve of one variant on one channel, sorted by SNR.
fn curve_of(report: &BerReport, eta: f64, variant: &str) -> Vec<(f64, f64)> {
    let mut curve: Vec<(f64, f64)> = report
        .points
        .iter()
        .filter(|p| p.eta.to_bits() == eta.to_bits() && p.variant == variant)
        .map(|p| (p.snr_db, p.ber()))
        .collect();
    curve.sort_by(|a, b| a.0.total_cmp(&b.0));
    curve
}

/// The SNR where a BER-vs-SNR curve crosses `target`, by log-linear
/// interpolation between the bracketing measurements. Returns `None` when
/// the target lies outside the measured range — flagged, never
/// extrapolated. Zero-BER points carry no log-domain information and are
/// ignored.
pub fn snr_at_target_ber(curve: &[(f64, f64)], target: f64) -> Option<f64> {
    assert!(target > 0.0, "target BER must be positive");
    let pts: Vec<(f64, f64)> = curve.iter().copied().filter(|&(_, ber)| ber > 0.0).collect();
    for pair in pts.windows(2) {
        let (s1, b1) = pair[0];
        let (s2, b2) = pair[1];
        if b1 == target {
            return Some(s1);
        }
        if (b1 - target) * (b2 - target) <= 0.0 && b1 != b2 {
            let t = (target.ln() - b1.ln()) / (b2.ln() - b1.ln());
            return Some(s1 + t * (s2 - s1));
        }
    }
    if let Some(&(s, b)) = pts.last() {
        if b == target {
            return Some(s);
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Exports
// ---------------------------------------------------------------------------

/// Writes the report as CSV. The BER column is printed with 15 significant
/// digits; all other numeric columns print exactly (counts are integers,
/// grid values round-trip through shortest-float formatting).
pub fn emit_csv<W: io::Write>(report: &BerReport, out: &mut W) -> io::Result<()> {
    writeln!(
        out,
        "variant,eta,snr_db,bits,bit_errors,ber,blocks,block_errors,seconds"
    )?;
    for p in &report.points {
        writeln!(
            out,
            "{},{},{},{},{},{:.14e},{},{},{}",
            p.variant,
            p.eta,
            p.snr_db,
            p.bits,
            p.bit_errors,
            p.ber(),
            p.blocks,
            p.block_errors,
            p.seconds
        )?;
    }
    Ok(())
}

/// Writes plot-ready columns: one section per (variant, channel) in
/// first-appearance order, titled with a `#` comment line, rows
/// `snr_db<TAB>ber`, sections separated by blank lines. BER is printed in
/// scientific notation for direct log-scale plotting.
pub fn emit_plot_data<W: io::Write>(report: &BerReport, out: &mut W) -> io::Result<()> {
    let mut keys: Vec<(String, u64)> = Vec::new();
    for p in &report.points {
        let key = (p.variant.clone(), p.eta.to_bits());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    for (variant, eta_bits) in &keys {
        writeln!(out, "# {} eta={}", variant, f64::from_bits(*eta_bits))?;
        for p in &report.points {
            if &p.variant == variant && p.eta.to_bits() == *eta_bits {
                writeln!(out, "{}\t{:.14e}", p.snr_db, p.ber())?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}
