//! Denoiser training: mini-batch Adam on stored datasets with
//! validation-based early stopping, plus matched-data penalty-weight sweeps.
//!
//! Training pairs are generated once and kept (in memory or on disk, see
//! [`dataset`]) rather than simulated on the fly. That makes runs exactly
//! reproducible and lets a λ sweep train every candidate on identical data.
//!
//! Mini-batches contain the same number of blocks from every SNR pool.
//! Batches are assembled by cycling each pool in storage order — pairs are
//! already i.i.d. by construction (one independent RNG stream per block), so
//! a deterministic cycle is an unbiased pass and keeps the whole run
//! reproducible under any thread count.

pub mod dataset;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bp::BpDecoder;
use crate::channel::{ChannelError, CovarianceFactor, NoiseModel};
use crate::cnn::adam::{AdamConfig, AdamState};
use crate::cnn::loss::{jb_statistic, loss_and_gradient, loss_value, LossError, LossSpec};
use crate::cnn::{CnnModel, CnnStructure, Gradients};
use crate::code::GeneratorMatrix;
use dataset::{Dataset, VALIDATION_STREAM_BASE};

/// RNG stream for drawing the initial parameters; disjoint from both the
/// training-block streams (from 0) and the validation offset.
pub const PARAMETER_INIT_STREAM: u64 = 1 << 41;

/// Blocks per gradient work unit. Fixed — never derived from the thread
/// count — so the reduction order (chunk by chunk, blocks in order within
/// each chunk) and therefore every rounding decision is identical no matter
/// how many workers run.
const GRADIENT_CHUNK: usize = 16;

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainingConfig {
    /// Training SNR set Γ in dB; every mini-batch draws equally from each.
    pub snrs_db: Vec<f64>,
    /// Training pairs to generate.
    pub blocks_train: usize,
    /// Validation pairs to generate (disjoint noise streams from training).
    pub blocks_val: usize,
    /// Blocks per parameter update; must be divisible by `snrs_db.len()`.
    pub batch_size: usize,
    /// Updates between validation checks.
    pub check_interval: usize,
    /// Consecutive non-improving checks before stopping.
    pub patience: usize,
    /// Optional hard cap on updates; a final validation check still runs, so
    /// the returned model is always validation-selected.
    #[serde(default)]
    pub max_iterations: Option<usize>,
    /// Training objective; validation uses the same objective, and the model
    /// is selected on total loss, not the quadratic term alone.
    pub loss: LossSpec,
    /// Network shape to initialize and train.
    pub structure: CnnStructure,
    /// Optimizer constants.
    #[serde(default)]
    pub adam: AdamConfig,
    /// Master seed for data generation and parameter initialization.
    pub seed: u64,
    /// BP iterations of the data-generating stage. Match this to the first
    /// stage of the receiver the model will serve: the statistics of the
    /// decoder-side noise estimate depend on how hard that stage works.
    pub data_bp_iters: usize,
}

impl TrainingConfig {
    /// Checks the cross-field invariants that the type system cannot.
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.snrs_db.is_empty() {
            return Err(TrainError::EmptySnrSet);
        }
        if self.blocks_train == 0 {
            return Err(TrainError::NoTrainingBlocks);
        }
        if self.blocks_val == 0 {
            return Err(TrainError::NoValidationBlocks);
        }
        if self.batch_size == 0 {
            return Err(TrainError::ZeroBatchSize);
        }
        if self.batch_size % self.snrs_db.len() != 0 {
            return Err(TrainError::BatchNotDivisible {
                batch_size: self.batch_size,
                pools: self.snrs_db.len(),
            });
        }
        if self.check_interval == 0 {
            return Err(TrainError::ZeroCheckInterval);
        }
        if self.patience == 0 {
            return Err(TrainError::ZeroPatience);
        }
        if self.max_iterations == Some(0) {
            return Err(TrainError::ZeroIterationCap);
        }
        let lambda = self.loss.effective_lambda();
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(TrainError::InvalidLambda(lambda));
        }
        if self.data_bp_iters == 0 {
            return Err(TrainError::ZeroDataBpIters);
        }
        Ok(())
    }
}

/// Training failure.
#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("training SNR set is empty")]
    EmptySnrSet,
    #[error("training set must contain at least one block")]
    NoTrainingBlocks,
    #[error("validation set must contain at least one block")]
    NoValidationBlocks,
    #[error("batch size must be positive")]
    ZeroBatchSize,
    #[error(
        "batch size {batch_size} is not divisible by the {pools} SNR pools \
         (equal-proportion batching)"
    )]
    BatchNotDivisible { batch_size: usize, pools: usize },
    #[error("check interval must be at least one update")]
    ZeroCheckInterval,
    #[error("patience must be at least one check")]
    ZeroPatience,
    #[error("iteration cap must allow at least one update")]
    ZeroIterationCap,
    #[error("penalty weight must be finite and non-negative, got {0}")]
    InvalidLambda(f64),
    #[error("data-generating BP stage must run at least one iteration")]
    ZeroDataBpIters,
    #[error("training and validation block lengths differ ({train} vs {val})")]
    BlockLenMismatch { train: usize, val: usize },
    #[error("training diverged at iteration {iteration} (non-finite loss or parameters)")]
    Diverged { iteration: usize },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Why a training run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// `patience` consecutive validation checks without a new minimum.
    ValidationStall,
    /// The configured iteration cap was reached.
    IterationCap,
}

/// One validation check: the update count when it ran and the loss measured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckPoint {
    /// Parameter updates completed when this check ran (1-based counting).
    pub iteration: usize,
    /// Mean per-block validation loss of the model at that point.
    pub val_loss: f64,
}

/// What happened during a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRecord {
    /// Every validation check, in order.
    pub checks: Vec<CheckPoint>,
    /// Index into `checks` of the minimum validation loss; the returned
    /// model is the snapshot taken at exactly this check.
    pub best_check: usize,
    /// Why the run ended.
    pub stop_reason: StopReason,
    /// Total parameter updates performed.
    pub total_iterations: usize,
}

impl TrainingRecord {
    /// The check whose snapshot was returned.
    pub fn best(&self) -> &CheckPoint {
        &self.checks[self.best_check]
    }
}

/// Generates datasets per `cfg` and trains a model from scratch.
///
/// Training blocks use RNG streams `0..blocks_train`, validation blocks
/// `VALIDATION_STREAM_BASE..`, and the parameter draw
/// `PARAMETER_INIT_STREAM` — all under `cfg.seed`, so one seed pins the
/// whole run.
pub fn train(
    cfg: &TrainingConfig,
    generator: &GeneratorMatrix,
    decoder: &BpDecoder,
    channel: &NoiseModel,
) -> Result<(CnnModel, TrainingRecord), TrainError> {
    train_with(cfg, generator, decoder, channel, |_| {})
}

/// [`train`] with a progress callback invoked after every validation
/// check.
pub fn train_with(
    cfg: &TrainingConfig,
    generator: &GeneratorMatrix,
    decoder: &BpDecoder,
    channel: &NoiseModel,
    on_check: impl FnMut(&CheckPoint),
) -> Result<(CnnModel, TrainingRecord), TrainError> {
    cfg.validate()?;
    let factor = CovarianceFactor::for_model(channel)?;
    let train_set = Dataset::generate(
        generator,
        decoder,
        channel,
        &factor,
        &cfg.snrs_db,
        cfg.data_bp_iters,
        cfg.blocks_train,
        cfg.seed,
        0,
    );
    let val_set = Dataset::generate(
        generator,
        decoder,
        channel,
        &factor,
        &cfg.snrs_db,
        cfg.data_bp_iters,
        cfg.blocks_val,
        cfg.seed,
        VALIDATION_STREAM_BASE,
    );
    train_on_with(cfg, &train_set, &val_set, on_check)
}

/// Trains a model on already-generated datasets.
///
/// Runs mini-batch Adam on the batch-mean loss. Every `check_interval`
/// updates the mean validation loss is computed; the run stops after
/// `patience` consecutive checks without a new minimum (or at the iteration
/// cap, after one final check) and returns the snapshot from the best check
/// — never a later, worse iterate.
pub fn train_on(
    cfg: &TrainingConfig,
    train_set: &Dataset,
    val_set: &Dataset,
) -> Result<(CnnModel, TrainingRecord), TrainError> {
    train_on_with(cfg, train_set, val_set, |_| {})
}

/// [`train_on`] with a progress callback invoked after every validation
/// check.
pub fn train_on_with(
    cfg: &TrainingConfig,
    train_set: &Dataset,
    val_set: &Dataset,
    mut on_check: impl FnMut(&CheckPoint),
) -> Result<(CnnModel, TrainingRecord), TrainError> {
    cfg.validate()?;
    if train_set.block_len() != val_set.block_len() {
        return Err(TrainError::BlockLenMismatch {
            train: train_set.block_len(),
            val: val_set.block_len(),
        });
    }
    let pools = train_set.pool_sizes().len();
    if cfg.batch_size % pools != 0 {
        return Err(TrainError::BatchNotDivisible {
            batch_size: cfg.batch_size,
            pools,
        });
    }
    let per_pool = cfg.batch_size / pools;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(PARAMETER_INIT_STREAM);
    let mut model = CnnModel::xavier_init(cfg.structure.clone(), &mut rng);
    let mut adam = AdamState::new(&model, cfg.adam);

    let mut best_model = model.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_check = 0usize;
    let mut stale = 0usize;
    let mut checks: Vec<CheckPoint> = Vec::new();
    let mut iteration = 0usize;
    let stop_reason;

    loop {
        let indices = batch_indices(iteration, per_pool, train_set.pool_sizes());
        let (batch_loss, grads) = batch_loss_and_gradient(&model, train_set, &indices, &cfg.loss)?;
        if !batch_loss.is_finite() {
            return Err(TrainError::Diverged { iteration });
        }
        adam.apply(&mut model, &grads);
        if !model.is_finite() {
            return Err(TrainError::Diverged { iteration });
        }
        iteration += 1;

        let capped = cfg.max_iterations.is_some_and(|cap| iteration >= cap);
        if iteration % cfg.check_interval == 0 || capped {
            let val_loss = mean_loss(&model, val_set, &cfg.loss)?;
            if !val_loss.is_finite() {
                return Err(TrainError::Diverged { iteration });
            }
            let check = CheckPoint {
                iteration,
                val_loss,
            };
            on_check(&check);
            checks.push(check);
            if val_loss < best_loss {
                best_loss = val_loss;
                best_check = checks.len() - 1;
                best_model = model.clone();
                stale = 0;
            } else {
                stale += 1;
            }
            if capped {
                stop_reason = StopReason::IterationCap;
                break;
            }
            if stale >= cfg.patience {
                stop_reason = StopReason::ValidationStall;
                break;
            }
        }
    }

    Ok((
        best_model,
        TrainingRecord {
            checks,
            best_check,
            stop_reason,
            total_iterations: iteration,
        },
    ))
}

/// One trained candidate from a penalty-weight sweep.
#[derive(Debug, Clone)]
pub struct LambdaSweepEntry {
    /// Penalty weight this entry was trained with.
    pub lambda: f64,
    /// The validation-selected model.
    pub model: CnnModel,
    /// Its training trace.
    pub record: TrainingRecord,
    /// Mean residual power ‖n − ñ‖²/N over the validation set.
    pub val_residual_power: f64,
    /// Normality statistic S² + ¼(C − 3)² of the pooled validation
    /// residuals.
    pub val_jb_statistic: f64,
}

/// Trains one model per penalty weight on a single shared pair of datasets
/// (same seed, same blocks, same initial parameters), so the per-λ metrics
/// are a matched comparison. A weight of exactly `0.0` uses the plain
/// quadratic objective.
pub fn run_lambda_sweep(
    cfg: &TrainingConfig,
    lambdas: &[f64],
    generator: &GeneratorMatrix,
    decoder: &BpDecoder,
    channel: &NoiseModel,
) -> Result<Vec<LambdaSweepEntry>, TrainError> {
    run_lambda_sweep_with(cfg, lambdas, generator, decoder, channel, |_, _| {})
}

/// [`run_lambda_sweep`] with a progress callback invoked after every
/// validation check, carrying the penalty weight being trained.
pub fn run_lambda_sweep_with(
    cfg: &TrainingConfig,
    lambdas: &[f64],
    generator: &GeneratorMatrix,
    decoder: &BpDecoder,
    channel: &NoiseModel,
    mut on_check: impl FnMut(f64, &CheckPoint),
) -> Result<Vec<LambdaSweepEntry>, TrainError> {
    cfg.validate()?;
    assert!(!lambdas.is_empty(), "penalty-weight list must be non-empty");
    let factor = CovarianceFactor::for_model(channel)?;
    let train_set = Dataset::generate(
        generator,
        decoder,
        channel,
        &factor,
        &cfg.snrs_db,
        cfg.data_bp_iters,
        cfg.blocks_train,
        cfg.seed,
        0,
    );
    let val_set = Dataset::generate(
        generator,
        decoder,
        channel,
        &factor,
        &cfg.snrs_db,
        cfg.data_bp_iters,
        cfg.blocks_val,
        cfg.seed,
        VALIDATION_STREAM_BASE,
    );

    let mut entries = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let mut run_cfg = cfg.clone();
        run_cfg.loss = if lambda == 0.0 {
            LossSpec::quadratic()
        } else {
            LossSpec::jb_enhanced(lambda)
        };
        let (model, record) =
            train_on_with(&run_cfg, &train_set, &val_set, |c| on_check(lambda, c))?;
        let (val_residual_power, val_jb_statistic) = residual_statistics(&model, &val_set)?;
        entries.push(LambdaSweepEntry {
            lambda,
            model,
            record,
            val_residual_power,
            val_jb_statistic,
        });
    }
    Ok(entries)
}

/// Mean residual power and pooled-residual normality statistic of `model`
/// over a dataset. (With equal-length blocks, the mean of per-block
/// ‖r‖²/N equals the mean square of the pooled residuals.)
pub fn residual_statistics(model: &CnnModel, ds: &Dataset) -> Result<(f64, f64), TrainError> {
    let indices: Vec<usize> = (0..ds.len()).collect();
    let chunks: Vec<Vec<f64>> = indices
        .par_chunks(GRADIENT_CHUNK)
        .map(|chunk| {
            let mut pooled = Vec::with_capacity(chunk.len() * ds.block_len());
            for &i in chunk {
                let denoised = model.forward_only(ds.estimate(i));
                pooled.extend(denoised.iter().zip(ds.truth(i)).map(|(nt, nn)| nn - nt));
            }
            pooled
        })
        .collect();
    let pooled = chunks.concat();
    let power = pooled.iter().map(|x| x * x).sum::<f64>() / pooled.len() as f64;
    let jb = jb_statistic(&pooled)?;
    Ok((power, jb))
}

/// Writes the per-check validation trace as CSV with columns
/// `check_index,val_loss`.
pub fn write_record_csv<W: std::io::Write>(
    record: &TrainingRecord,
    out: &mut W,
) -> std::io::Result<()> {
    writeln!(out, "check_index,val_loss")?;
    for (i, check) in record.checks.iter().enumerate() {
        writeln!(out, "{},{}", i, check.val_loss)?;
    }
    Ok(())
}

/// Dataset indices for mini-batch `iteration`: each SNR pool contributes
/// exactly `per_pool` blocks, taken by cycling through the pool in storage
/// order.
fn batch_indices(iteration: usize, per_pool: usize, pool_sizes: &[usize]) -> Vec<usize> {
    let mut indices = Vec::with_capacity(per_pool * pool_sizes.len());
    let mut offset = 0;
    for &size in pool_sizes {
        for j in 0..per_pool {
            indices.push(offset + (iteration * per_pool + j) % size);
        }
        offset += size;
    }
    indices
}

/// Batch-mean loss and its gradient. Work is split into fixed-size chunks
/// evaluated in parallel; the per-chunk sums are then folded in chunk order,
/// so the result is bit-identical for any thread count.
fn batch_loss_and_gradient(
    model: &CnnModel,
    ds: &Dataset,
    indices: &[usize],
    loss: &LossSpec,
) -> Result<(f64, Gradients), TrainError> {
    let per_chunk: Vec<(f64, Gradients)> = indices
        .par_chunks(GRADIENT_CHUNK)
        .map(|chunk| -> Result<(f64, Gradients), LossError> {
            let mut sum = 0.0;
            let mut grads = Gradients::zeros_like(model);
            for &i in chunk {
                let (denoised, cache) = model.forward(ds.estimate(i));
                let (l, dloss_dout) = loss_and_gradient(loss, &denoised, ds.truth(i))?;
                sum += l;
                grads.accumulate(&model.backward(&cache, &dloss_dout));
            }
            Ok((sum, grads))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let scale = 1.0 / indices.len() as f64;
    let mut total = Gradients::zeros_like(model);
    let mut loss_sum = 0.0;
    for (l, g) in &per_chunk {
        loss_sum += *l;
        total.accumulate(g);
    }
    total.scale(scale);
    Ok((loss_sum * scale, total))
}

/// Mean per-block loss of `model` over a whole dataset, chunk-ordered for
/// thread-count-independent rounding.
fn mean_loss(model: &CnnModel, ds: &Dataset, loss: &LossSpec) -> Result<f64, TrainError> {
    let indices: Vec<usize> = (0..ds.len()).collect();
    let sums: Vec<f64> = indices
        .par_chunks(GRADIENT_CHUNK)
        .map(|chunk| -> Result<f64, LossError> {
            let mut sum = 0.0;
            for &i in chunk {
                let denoised = model.forward_only(ds.estimate(i));
                sum += loss_value(loss, &denoised, ds.truth(i))?;
            }
            Ok(sum)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(sums.iter().sum::<f64>() / ds.len() as f64)
}
