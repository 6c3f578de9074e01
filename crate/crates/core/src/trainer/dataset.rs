//! Training-pair generation and the dataset container/file format.
//!
//! A training pair is `(n_hat, n)`: the decoder-side noise estimate and the
//! true channel noise for one simulated block. Pairs are produced by the
//! full transmit chain — random information bits, encoding, BPSK, correlated
//! noise, one BP stage — exactly the stream the denoiser will see inline.
//!
//! Pairs are grouped into per-SNR pools (the training SNR set Γ), sized as
//! evenly as the total allows. Generation is deterministic and
//! thread-count-independent: block `g` draws from
//! `ChaCha8Rng::seed_from_u64(seed)` on stream `stream_base + g`.
//!
//! # File format
//!
//! All integers little-endian:
//!
//! ```text
//! magic     8 bytes "CNNTRSET"
//! version   u32
//! block_len u32
//! |Γ|       u32
//! Γ         |Γ| x f64
//! pools     |Γ| x u64   (pair count per SNR)
//! digest    u64         (FNV-1a over the generation inputs)
//! data      per pair: estimate block then truth block, f64 x block_len,
//!           pools in Γ order
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bp::{estimate_noise, init_llr_white, BpDecoder};
use crate::channel::{bpsk_modulate, snr_db_to_sigma2, CovarianceFactor, NoiseModel};
use crate::code::GeneratorMatrix;

/// Dataset file signature.
pub const DATASET_MAGIC: [u8; 8] = *b"CNNTRSET";

/// Current dataset format version.
pub const DATASET_VERSION: u32 = 1;

/// Stream offset separating validation blocks from training blocks, so the
/// two sets never share noise realizations under one seed.
pub const VALIDATION_STREAM_BASE: u64 = 1 << 40;

/// In-memory set of training pairs, grouped into per-SNR pools.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    block_len: usize,
    snrs_db: Vec<f64>,
    /// Pair count per SNR pool; pool `p` occupies pair indices
    /// `offsets[p]..offsets[p] + pool_sizes[p]`.
    pool_sizes: Vec<usize>,
    /// Noise estimates, `count * block_len`, pool-major.
    estimated: Vec<f64>,
    /// True noise, same layout.
    truth: Vec<f64>,
    /// Digest of the generation inputs, for cache validation.
    digest: u64,
}

/// Dataset file read failure.
#[derive(Debug, thiserror::Error)]
pub enum DatasetIoError {
    #[error("not a dataset file (bad magic)")]
    BadMagic,
    #[error("unsupported dataset format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("dataset file truncated")]
    Truncated,
    #[error("dataset header is inconsistent: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Dataset {
    /// Generates `count` pairs split as evenly as possible across
    /// `snrs_db`, using one BP stage of `bp_iters` iterations. Blocks use
    /// RNG streams `stream_base..stream_base + count`.
    ///
    /// # Panics
    ///
    /// Panics if the code, channel, and generator dimensions disagree, if
    /// `snrs_db` is empty, or if `count == 0`.
    #[allow(clippy::too_many_arguments)]
    pub fn generate(
        generator: &GeneratorMatrix,
        decoder: &BpDecoder,
        channel: &NoiseModel,
        factor: &CovarianceFactor,
        snrs_db: &[f64],
        bp_iters: usize,
        count: usize,
        seed: u64,
        stream_base: u64,
    ) -> Dataset {
        assert!(!snrs_db.is_empty(), "training SNR set must be non-empty");
        assert!(count > 0, "dataset must contain at least one pair");
        let n = decoder.num_vars();
        assert_eq!(generator.num_vars(), n, "generator/code length mismatch");
        assert_eq!(factor.dim(), n, "channel/code length mismatch");
        assert_eq!(channel.block_len, n, "channel model/code length mismatch");

        let num_snrs = snrs_db.len();
        let pool_sizes: Vec<usize> = (0..num_snrs)
            .map(|p| count / num_snrs + usize::from(p < count % num_snrs))
            .collect();
        // Per-pair SNR in pool-major order.
        let mut pair_snr = Vec::with_capacity(count);
        for (p, &size) in pool_sizes.iter().enumerate() {
            pair_snr.extend(std::iter::repeat(snrs_db[p]).take(size));
        }

        let mut estimated = vec![0.0; count * n];
        let mut truth = vec![0.0; count * n];
        estimated
            .par_chunks_mut(n)
            .zip(truth.par_chunks_mut(n))
            .enumerate()
            .for_each_init(
                || decoder.workspace(),
                |ws, (g, (est, tru))| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(stream_base + g as u64);
                    let sigma2 = snr_db_to_sigma2(pair_snr[g], 1.0);
                    let info = crate::code::random_info_bits(generator.num_info(), &mut rng);
                    let symbols = bpsk_modulate(&generator.encode(&info));
                    let noise = factor.sample(sigma2, &mut rng);
                    let received: Vec<f64> =
                        symbols.iter().zip(&noise).map(|(s, w)| s + w).collect();
                    let llrs = init_llr_white(&received, sigma2);
                    let result = decoder.decode_with(ws, &llrs, bp_iters);
                    est.copy_from_slice(&estimate_noise(&received, &result));
                    tru.copy_from_slice(&noise);
                },
            );

        let digest = generation_digest(channel, snrs_db, bp_iters, count, seed, stream_base);
        Dataset {
            block_len: n,
            snrs_db: snrs_db.to_vec(),
            pool_sizes,
            estimated,
            truth,
            digest,
        }
    }

    /// Block length `N`.
    pub fn block_len(&self) -> usize {
        self.block_len
    }

    /// Total pair count.
    pub fn len(&self) -> usize {
        self.pool_sizes.iter().sum()
    }

    /// True when the dataset holds no pairs (never, by construction).
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The training SNR set Γ.
    pub fn snrs_db(&self) -> &[f64] {
        &self.snrs_db
    }

    /// Pair count per SNR pool.
    pub fn pool_sizes(&self) -> &[usize] {
        &self.pool_sizes
    }

    /// Digest of the generation inputs.
    pub fn digest(&self) -> u64 {
        self.digest
    }

    /// The noise estimate of pair `i`.
    pub fn estimate(&self, i: usize) -> &[f64] {
        &self.estimated[i * self.block_len..(i + 1) * self.block_len]
    }

    /// The true noise of pair `i`.
    pub fn truth(&self, i: usize) -> &[f64] {
        &self.truth[i * self.block_len..(i + 1) * self.block_len]
    }

    /// Writes the dataset to `out`.
    pub fn write_to<W: Write>(&self, out: &mut W) -> io::Result<()> {
        out.write_all(&DATASET_MAGIC)?;
        out.write_all(&DATASET_VERSION.to_le_bytes())?;
        out.write_all(&(self.block_len as u32).to_le_bytes())?;
        out.write_all(&(self.snrs_db.len() as u32).to_le_bytes())?;
        for &snr in &self.snrs_db {
            out.write_all(&snr.to_le_bytes())?;
        }
        for &size in &self.pool_sizes {
            out.write_all(&(size as u64).to_le_bytes())?;
        }
        out.write_all(&self.digest.to_le_bytes())?;
        for i in 0..self.len() {
            for &x in self.estimate(i) {
                out.write_all(&x.to_le_bytes())?;
            }
            for &x in self.truth(i) {
                out.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads a dataset from `input`.
    pub fn read_from<R: Read>(input: &mut R) -> Result<Dataset, DatasetIoError> {
        let mut magic = [0u8; 8];
        read_exact(input, &mut magic)?;
        if magic != DATASET_MAGIC {
            return Err(DatasetIoError::BadMagic);
        }
        let version = read_u32(input)?;
        if version != DATASET_VERSION {
            return Err(DatasetIoError::VersionMismatch {
                found: version,
                expected: DATASET_VERSION,
            });
        }
        let block_len = read_u32(input)? as usize;
        if block_len == 0 {
            return Err(DatasetIoError::Malformed("zero block length".into()));
        }
        let num_snrs = read_u32(input)? as usize;
        if num_snrs == 0 || num_snrs > 4096 {
            return Err(DatasetIoError::Malformed(format!(
                "SNR count {num_snrs} out of range"
            )));
        }
        let mut snrs_db = Vec::with_capacity(num_snrs);
        for _ in 0..num_snrs {
            snrs_db.push(read_f64(input)?);
        }
        let mut pool_sizes = Vec::with_capacity(num_snrs);
        for _ in 0..num_snrs {
            pool_sizes.push(read_u64(input)? as usize);
        }
        let digest = read_u64(input)?;
        let count: usize = pool_sizes.iter().sum();
        if count == 0 {
            return Err(DatasetIoError::Malformed("empty dataset".into()));
        }
        let mut estimated = vec![0.0; count * block_len];
        let mut truth = vec![0.0; count * block_len];
        for i in 0..count {
            for j in 0..block_len {
                estimated[i * block_len + j] = read_f64(input)?;
            }
            for j in 0..block_len {
                truth[i * block_len + j] = read_f64(input)?;
            }
        }
        Ok(Dataset {
            block_len,
            snrs_db,
            pool_sizes,
            estimated,
            truth,
            digest,
        })
    }

    /// Writes the dataset to a file.
    pub fn save(&self, path: &Path) -> Result<(), DatasetIoError> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    /// Reads a dataset from a file.
    pub fn load(path: &Path) -> Result<Dataset, DatasetIoError> {
        let mut input = BufReader::new(File::open(path)?);
        Dataset::read_from(&mut input)
    }
}

/// FNV-1a digest of everything that determines a generated dataset.
pub fn generation_digest(
    channel: &NoiseModel,
    snrs_db: &[f64],
    bp_iters: usize,
    count: usize,
    seed: u64,
    stream_base: u64,
) -> u64 {
    let mut h = Fnv1a::new();
    h.write(channel.kind.label().as_bytes());
    h.write(&channel.kind.parameter().to_le_bytes());
    h.write(&(channel.block_len as u64).to_le_bytes());
    for &snr in snrs_db {
        h.write(&snr.to_le_bytes());
    }
    h.write(&(bp_iters as u64).to_le_bytes());
    h.write(&(count as u64).to_le_bytes());
    h.write(&seed.to_le_bytes());
    h.write(&stream_base.to_le_bytes());
    h.finish()
}

struct Fnv1a(u64);

impl Fnv1a {
    fn new() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

fn read_exact<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<(), DatasetIoError> {
    input.read_exact(buf).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            DatasetIoError::Truncated
        } else {
            DatasetIoError::Io(e)
        }
    })
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32, DatasetIoError> {
    let mut buf = [0u8; 4];
    read_exact(input, &mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64, DatasetIoError> {
    let mut buf = [0u8; 8];
    read_exact(input, &mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(input: &mut R) -> Result<f64, DatasetIoError> {
    let mut buf = [0u8; 8];
    read_exact(input, &mut buf)?;
    Ok(f64::from_le_bytes(buf))
}
