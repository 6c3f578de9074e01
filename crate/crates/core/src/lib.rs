//! Channel-coding laboratory: LDPC belief-propagation decoding concatenated
//! with a learned convolutional noise denoiser, for channels with correlated
//! Gaussian noise.
//!
//! The crate is organized along the signal path:
//!
//! - [`code`] — binary linear codes: alist parsing, GF(2) generator
//!   derivation, encoding and syndrome checks.
//! - [`channel`] — BPSK mapping, correlated-noise covariance models
//!   (exponential, pink, white) and their sampling factors.
//! - [`bp`] — flooding sum-product belief-propagation decoder.
//! - [`cnn`] — a small 1-D convolutional network trained to estimate the
//!   channel noise from the decoder's noise estimate, including losses,
//!   analytic gradients, Adam, and model serialization.
//! - [`receiver`] — the iterative loop that alternates BP decoding and CNN
//!   denoising, plus residual-statistics helpers.
//! - [`trainer`] — dataset generation and the training loop with
//!   validation-based early stopping.
//! - [`harness`] — Monte-Carlo BER experiments, CSV/plot-data emission, and
//!   SNR-gain summaries.

pub mod bp;
pub mod channel;
pub mod cnn;
pub mod code;
pub mod harness;
pub mod receiver;
pub mod trainer;

/// Configures the global worker pool used by parallel loops (Monte-Carlo
/// sweeps, pair generation, batch gradients). Call at most once, before any
/// parallel work; later calls return an error from the underlying pool.
///
/// All parallel reductions in this crate are deterministic regardless of the
/// thread count, so this only affects throughput.
pub fn init_thread_pool(threads: usize) -> Result<(), rayon::ThreadPoolBuildError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
}
