//! Flooding sum-product belief-propagation decoder for binary LDPC codes.
//!
//! # Overview
//!
//! LLRs use the convention `L = log(P(bit=0) / P(bit=1))`, matching BPSK
//! `0 -> +1`: for white Gaussian noise of power `sigma2` the channel LLR is
//! `2 y / sigma2` ([`init_llr_white`]). One decoding iteration is:
//!
//! - check update: `L(c->v) = 2 atanh( prod_{v' != v} tanh(L(v'->c) / 2) )`
//! - variable update: `L(v->c) = channel(v) + sum_{c' != c} L(c'->v)`
//! - posterior: `L(v) = channel(v) + sum_c L(c->v)` — the channel term is
//!   included so variables outside every check remain decidable.
//!
//! Decisions are `bit = 0` iff `L(v) >= 0` (ties decide 0). Decoding stops
//! early as soon as the hard decisions satisfy every parity check.
//!
//! Numerical guards: half-messages entering `tanh` are clamped to
//! [`HALF_LLR_CLAMP`]; each `tanh` output is capped just inside `+-1` so
//! `atanh` stays finite (in `f64`, `tanh(19.07)` already rounds to exactly
//! `1.0`); partial products are floored at [`PRODUCT_FLOOR`] in magnitude so
//! long products cannot underflow to zero and lose their sign.
//!
//! The decoder itself is immutable after construction and can be shared
//! across threads; per-call scratch lives in a caller-owned
//! [`BpWorkspace`].
//!
//! # Example
//!
//! ```
//! use bpcnn::bp::BpDecoder;
//! use bpcnn::code::ParityCheckMatrix;
//!
//! // Single parity check, one unreliable bit: the two confident bits
//! // overrule it in one iteration.
//! let h = ParityCheckMatrix::from_dense(&[vec![1, 1, 1]]);
//! let decoder = BpDecoder::new(&h);
//! let result = decoder.decode(&[4.0, 4.0, -0.5], 10);
//! assert_eq!(result.hard_bits, vec![0, 0, 0]);
//! assert!(result.syndrome_ok);
//! ```

use crate::code::ParityCheckMatrix;

/// Half-message clamp: `tanh` inputs are confined to `[-19.07, 19.07]`.
pub const HALF_LLR_CLAMP: f64 = 19.07;

/// `tanh` outputs and check-node products are capped to this magnitude so
/// `atanh` never sees `+-1` exactly.
pub const TANH_CAP: f64 = 1.0 - 1e-15;

/// Magnitude floor for partial products, preventing sign loss through
/// underflow.
pub const PRODUCT_FLOOR: f64 = 1e-300;

// ---------------------------------------------------------------------------
// Decoder
// ---------------------------------------------------------------------------

/// Immutable decoding structure derived from a parity-check matrix: edges
/// are enumerated check-major, with per-variable lookup of edge ids.
#[derive(Debug, Clone)]
pub struct BpDecoder {
    num_checks: usize,
    num_vars: usize,
    /// Edge -> variable, grouped by check.
    edge_var: Vec<usize>,
    /// Prefix offsets into `edge_var` per check (length `num_checks + 1`).
    check_offsets: Vec<usize>,
    /// Edge ids grouped by variable.
    var_edges: Vec<usize>,
    /// Prefix offsets into `var_edges` per variable (length `num_vars + 1`).
    var_offsets: Vec<usize>,
}

/// Reusable per-call scratch: message arrays sized to the decoder's edge
/// count. Create one per worker thread via [`BpDecoder::workspace`].
#[derive(Debug, Clone)]
pub struct BpWorkspace {
    var_to_check: Vec<f64>,
    check_to_var: Vec<f64>,
    tanh_buf: Vec<f64>,
    prefix: Vec<f64>,
    suffix: Vec<f64>,
    posterior: Vec<f64>,
    hard: Vec<u8>,
}

/// Outcome of one decode call.
#[derive(Debug, Clone, PartialEq)]
pub struct BpResult {
    /// Hard bit decisions.
    pub hard_bits: Vec<u8>,
    /// Posterior LLRs (channel term included).
    pub posteriors: Vec<f64>,
    /// The decided symbols `+-1` (BPSK remodulation of `hard_bits`).
    pub symbols: Vec<f64>,
    /// True when the hard decisions satisfy every parity check.
    pub syndrome_ok: bool,
    /// Iterations actually run (0 if `max_iters = 0`).
    pub iterations_used: usize,
}

impl BpDecoder {
    /// Precomputes the edge structure for `h`.
    pub fn new(h: &ParityCheckMatrix) -> Self {
        let num_checks = h.num_checks();
        let num_vars = h.num_vars();
        let num_edges = h.num_edges();
        let mut edge_var = Vec::with_capacity(num_edges);
        let mut check_offsets = Vec::with_capacity(num_checks + 1);
        check_offsets.push(0);
        for c in 0..num_checks {
            edge_var.extend_from_slice(h.check_vars(c));
            check_offsets.push(edge_var.len());
        }
        let mut var_offsets = vec![0usize; num_vars + 1];
        for &v in &edge_var {
            var_offsets[v + 1] += 1;
        }
        for v in 0..num_vars {
            var_offsets[v + 1] += var_offsets[v];
        }
        let mut cursor = var_offsets.clone();
        let mut var_edges = vec![0usize; num_edges];
        for (e, &v) in edge_var.iter().enumerate() {
            var_edges[cursor[v]] = e;
            cursor[v] += 1;
        }
        BpDecoder {
            num_checks,
            num_vars,
            edge_var,
            check_offsets,
            var_edges,
            var_offsets,
        }
    }

    /// Block length `N`.
    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    /// Number of parity checks.
    pub fn num_checks(&self) -> usize {
        self.num_checks
    }

    /// Allocates scratch sized for this decoder.
    pub fn workspace(&self) -> BpWorkspace {
        let num_edges = self.edge_var.len();
        let max_degree = (0..self.num_checks)
            .map(|c| self.check_offsets[c + 1] - self.check_offsets[c])
            .max()
            .unwrap_or(0);
        BpWorkspace {
            var_to_check: vec![0.0; num_edges],
            check_to_var: vec![0.0; num_edges],
            tanh_buf: vec![0.0; max_degree],
            prefix: vec![0.0; max_degree],
            suffix: vec![0.0; max_degree],
            posterior: vec![0.0; self.num_vars],
            hard: vec![0u8; self.num_vars],
        }
    }

    /// Convenience wrapper that allocates a fresh workspace.
    pub fn decode(&self, channel_llrs: &[f64], max_iters: usize) -> BpResult {
        let mut ws = self.workspace();
        self.decode_with(&mut ws, channel_llrs, max_iters)
    }

    /// Runs up to `max_iters` flooding iterations, stopping early once the
    /// syndrome is satisfied. With `max_iters = 0` the result is the hard
    /// demodulation of the channel LLRs.
    ///
    /// # Panics
    ///
    /// Panics if `channel_llrs` does not have exactly `N` entries.
    pub fn decode_with(
        &self,
        ws: &mut BpWorkspace,
        channel_llrs: &[f64],
        max_iters: usize,
    ) -> BpResult {
        assert_eq!(
            channel_llrs.len(),
            self.num_vars,
            "LLR length must match the code's block length"
        );

        // Initialize variable-to-check messages with the channel LLRs and
        // the posterior with the channel term alone.
        for (e, &v) in self.edge_var.iter().enumerate() {
            ws.var_to_check[e] = channel_llrs[v];
        }
        ws.posterior.copy_from_slice(channel_llrs);
        for (v, p) in ws.posterior.iter().enumerate() {
            ws.hard[v] = if *p >= 0.0 { 0 } else { 1 };
        }

        let mut iterations_used = 0;
        let mut syndrome_ok = self.syndrome_ok(&ws.hard);
        for _ in 0..max_iters {
            if syndrome_ok {
                break;
            }
            self.check_update(ws);
            self.var_update(ws, channel_llrs);
            iterations_used += 1;
            syndrome_ok = self.syndrome_ok(&ws.hard);
        }

        let symbols = ws
            .hard
            .iter()
            .map(|&b| if b == 0 { 1.0 } else { -1.0 })
            .collect();
        BpResult {
            hard_bits: ws.hard.clone(),
            posteriors: ws.posterior.clone(),
            symbols,
            syndrome_ok,
            iterations_used,
        }
    }

    /// Check-node update over all edges (tanh-product rule with guards).
    fn check_update(&self, ws: &mut BpWorkspace) {
        for c in 0..self.num_checks {
            let lo = self.check_offsets[c];
            let hi = self.check_offsets[c + 1];
            let degree = hi - lo;
            for i in 0..degree {
                let half = (ws.var_to_check[lo + i] * 0.5).clamp(-HALF_LLR_CLAMP, HALF_LLR_CLAMP);
                ws.tanh_buf[i] = half.tanh().clamp(-TANH_CAP, TANH_CAP);
            }
            // Exclusive products via prefix/suffix passes, floored so long
            // products keep their sign instead of underflowing to zero.
            let mut acc = 1.0;
            for i in 0..degree {
                ws.prefix[i] = acc;
                acc = floor_product(acc * ws.tanh_buf[i]);
            }
            acc = 1.0;
            for i in (0..degree).rev() {
                ws.suffix[i] = acc;
                acc = floor_product(acc * ws.tanh_buf[i]);
            }
            for i in 0..degree {
                let product =
                    floor_product(ws.prefix[i] * ws.suffix[i]).clamp(-TANH_CAP, TANH_CAP);
                ws.check_to_var[lo + i] = 2.0 * product.atanh();
            }
        }
    }

    /// Variable-node update: posteriors, hard decisions, and extrinsic
    /// variable-to-check messages.
    fn var_update(&self, ws: &mut BpWorkspace, channel_llrs: &[f64]) {
        for v in 0..self.num_vars {
            let lo = self.var_offsets[v];
            let hi = self.var_offsets[v + 1];
            let mut total = channel_llrs[v];
            let edges = &self.var_edges[lo..hi];
            for &e in edges {
                total += ws.check_to_var[e];
            }
            ws.posterior[v] = total;
            ws.hard[v] = if total >= 0.0 { 0 } else { 1 };
            for &e in edges {
                ws.var_to_check[e] = total - ws.check_to_var[e];
            }
        }
    }

    /// Syndrome of the current hard decisions.
    fn syndrome_ok(&self, hard: &[u8]) -> bool {
        (0..self.num_checks).all(|c| {
            let lo = self.check_offsets[c];
            let hi = self.check_offsets[c + 1];
            self.edge_var[lo..hi]
                .iter()
                .fold(0u8, |acc, &v| acc ^ hard[v])
                == 0
        })
    }
}

#[inline]
fn floor_product(p: f64) -> f64 {
    if p.abs() < PRODUCT_FLOOR {
        PRODUCT_FLOOR.copysign(p)
    } else {
        p
    }
}

// ---------------------------------------------------------------------------
// Channel LLRs and noise estimation
// ---------------------------------------------------------------------------

/// White-Gaussian channel LLRs: `2 y / sigma2_eff`.
///
/// # Panics
///
/// Panics unless `sigma2_eff` is finite and strictly positive.
pub fn init_llr_white(received: &[f64], sigma2_eff: f64) -> Vec<f64> {
    assert!(
        sigma2_eff > 0.0 && sigma2_eff.is_finite(),
        "effective noise power must be finite and positive"
    );
    let scale = 2.0 / sigma2_eff;
    received.iter().map(|&y| scale * y).collect()
}

/// The decoder's noise estimate `y - s_hat`, where `s_hat` are the decided
/// symbols. When the decode is error-free this equals the true noise; each
/// symbol error adds `+-2` at its position.
///
/// # Panics
///
/// Panics if the lengths differ.
pub fn estimate_noise(received: &[f64], result: &BpResult) -> Vec<f64> {
    assert_eq!(
        received.len(),
        result.symbols.len(),
        "received/decoded length mismatch"
    );
    received
        .iter()
        .zip(&result.symbols)
        .map(|(y, s)| y - s)
        .collect()
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::{hamming_7_4, GeneratorMatrix, ParityCheckMatrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Independent atanh for use as an oracle.
    fn atanh_ref(x: f64) -> f64 {
        0.5 * ((1.0 + x).ln() - (1.0 - x).ln())
    }

    /// Exhaustive block-MAP oracle: all codewords scored by the LLR metric
    /// `sum_i (1 - 2 u_i) L_i`; returns the argmax set (ties included).
    fn map_codewords(h: &ParityCheckMatrix, llrs: &[f64]) -> Vec<Vec<u8>> {
        let g = GeneratorMatrix::derive(h).unwrap();
        let k = g.num_info();
        assert!(k <= 20, "exhaustive oracle needs a small code");
        let mut best = f64::NEG_INFINITY;
        let mut args: Vec<Vec<u8>> = Vec::new();
        for x in 0u32..(1 << k) {
            let bits: Vec<u8> = (0..k).map(|b| ((x >> b) & 1) as u8).collect();
            let u = g.encode(&bits).into_bits();
            let score: f64 = u
                .iter()
                .zip(llrs)
                .map(|(&bit, &l)| if bit == 0 { l } else { -l })
                .sum();
            if score > best + 1e-9 {
                best = score;
                args = vec![u];
            } else if (score - best).abs() <= 1e-9 {
                args.push(u);
            }
        }
        args
    }

    // 1. Worked single-check example: two confident bits overrule one weak
    //    disagreeing bit; posterior matches the hand-computed tanh rule.
    #[test]
    fn single_check_example() {
        let h = ParityCheckMatrix::from_dense(&[vec![1, 1, 1]]);
        let decoder = BpDecoder::new(&h);
        let result = decoder.decode(&[4.0, 4.0, -0.5], 10);
        assert_eq!(result.hard_bits, vec![0, 0, 0]);
        assert!(result.syndrome_ok);
        assert_eq!(result.iterations_used, 1);
        // Check message into var 2: 2 atanh(tanh(2) * tanh(2)).
        let t = (2.0f64).tanh();
        let expected = -0.5 + 2.0 * atanh_ref(t * t);
        assert!((result.posteriors[2] - expected).abs() < 1e-9);
        // Check message into var 0: 2 atanh(tanh(2) * tanh(-0.25)).
        let expected0 = 4.0 + 2.0 * atanh_ref(t * (-0.25f64).tanh());
        assert!((result.posteriors[0] - expected0).abs() < 1e-9);
        assert_eq!(result.symbols, vec![1.0, 1.0, 1.0]);
    }

    // 2. A clean codeword converges in a single iteration.
    #[test]
    fn clean_codeword_converges_immediately() {
        let h = hamming_7_4();
        let decoder = BpDecoder::new(&h);
        // Codeword 0000000 sent as +1 symbols with confident LLRs.
        let result = decoder.decode(&[3.0; 7], 50);
        assert!(result.syndrome_ok);
        assert_eq!(result.iterations_used, 0);
        assert_eq!(result.hard_bits, vec![0; 7]);
    }

    // 3. A single weakly-wrong bit is corrected.
    #[test]
    fn corrects_single_error() {
        let h = hamming_7_4();
        let decoder = BpDecoder::new(&h);
        let mut llrs = vec![2.5; 7];
        llrs[4] = -1.0; // wrong sign, weaker confidence
        let result = decoder.decode(&llrs, 50);
        assert!(result.syndrome_ok);
        assert_eq!(result.hard_bits, vec![0; 7]);
        assert!(result.iterations_used >= 1);
    }

    // 4. max_iters = 0 returns the hard demodulation of the channel LLRs.
    #[test]
    fn zero_iterations_is_hard_demodulation() {
        let h = hamming_7_4();
        let decoder = BpDecoder::new(&h);
        let llrs = [0.5, -0.1, 0.2, -0.9, 1.4, -0.2, 0.3];
        let result = decoder.decode(&llrs, 0);
        assert_eq!(result.iterations_used, 0);
        assert_eq!(result.hard_bits, vec![0, 1, 0, 1, 0, 1, 0]);
        assert_eq!(result.posteriors.to_vec(), llrs.to_vec());
    }

    // 5. BP vs exhaustive block-MAP on Hamming(7,4): simulated channel LLRs,
    //    agreement >= 90%, and whenever the syndrome passes the BP codeword
    //    is in the MAP argmax set.
    #[test]
    fn map_agreement_on_hamming() {
        let h = hamming_7_4();
        let g = GeneratorMatrix::derive(&h).unwrap();
        let decoder = BpDecoder::new(&h);
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let sigma2 = crate::channel::snr_db_to_sigma2(2.0, 1.0);
        let trials = 200;
        let mut agree = 0;
        for _ in 0..trials {
            let x = crate::code::random_info_bits(g.num_info(), &mut rng);
            let s = crate::channel::bpsk_modulate(&g.encode(&x));
            let y: Vec<f64> = s
                .iter()
                .map(|&si| {
                    let w: f64 = StandardNormal.sample(&mut rng);
                    si + sigma2.sqrt() * w
                })
                .collect();
            let llrs = init_llr_white(&y, sigma2);
            let result = decoder.decode(&llrs, 50);
            let map_set = map_codewords(&h, &llrs);
            if map_set.iter().any(|w| w[..] == result.hard_bits[..]) {
                agree += 1;
            } else {
                assert!(
                    !result.syndrome_ok,
                    "converged BP decision must be a MAP codeword"
                );
            }
        }
        assert!(
            agree * 10 >= trials * 9,
            "agreement {agree}/{trials} below 90%"
        );
    }

    // 6. Check-node output magnitude never exceeds the smallest incoming
    //    message magnitude (sum-product bound), within clamping tolerance.
    #[test]
    fn check_magnitude_bound() {
        let h = hamming_7_4();
        let decoder = BpDecoder::new(&h);
        let mut ws = decoder.workspace();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let llrs: Vec<f64> = (0..7)
                .map(|_| {
                    let w: f64 = StandardNormal.sample(&mut rng);
                    6.0 * w
                })
                .collect();
            for (e, &v) in decoder.edge_var.iter().enumerate() {
                ws.var_to_check[e] = llrs[v];
            }
            decoder.check_update(&mut ws);
            for c in 0..decoder.num_checks {
                let lo = decoder.check_offsets[c];
                let hi = decoder.check_offsets[c + 1];
                for i in lo..hi {
                    let min_other = (lo..hi)
                        .filter(|&j| j != i)
                        .map(|j| ws.var_to_check[j].abs())
                        .fold(f64::INFINITY, f64::min);
                    assert!(
                        ws.check_to_var[i].abs() <= min_other + 1e-9,
                        "check message exceeds min incoming magnitude"
                    );
                }
            }
        }
    }

    // 7. Numerical guards: saturated LLRs decode without NaN or infinity,
    //    and degree-1 checks pin their variable with a finite message.
    #[test]
    fn clamping_keeps_messages_finite() {
        let h = hamming_7_4();
        let decoder = BpDecoder::new(&h);
        let result = decoder.decode(&[1000.0, -1000.0, 1000.0, -1000.0, 1000.0, -1000.0, 1000.0], 50);
        assert!(result.posteriors.iter().all(|p| p.is_finite()));

        let pin = ParityCheckMatrix::from_dense(&[vec![1, 0], vec![0, 1]]);
        let dec = BpDecoder::new(&pin);
        let result = dec.decode(&[-3.0, 4.0], 10);
        assert!(result.posteriors.iter().all(|p| p.is_finite()));
        assert_eq!(result.hard_bits, vec![0, 0]);
        assert!(result.syndrome_ok);
    }

    // 8. All-zero LLRs (total erasure): ties decide 0, which satisfies the
    //    all-zero codeword immediately.
    #[test]
    fn erasure_ties_decide_zero() {
        let h = hamming_7_4();
        let decoder = BpDecoder::new(&h);
        let result = decoder.decode(&[0.0; 7], 5);
        assert_eq!(result.hard_bits, vec![0; 7]);
        assert!(result.syndrome_ok);
    }

    // 9. init_llr_white and estimate_noise conventions.
    #[test]
    fn llr_and_noise_estimate() {
        assert_eq!(init_llr_white(&[0.5, -1.0], 0.5), vec![2.0, -4.0]);
        let h = ParityCheckMatrix::from_dense(&[vec![1, 1, 1]]);
        let decoder = BpDecoder::new(&h);
        let y = [1.25, 0.75, 1.1];
        let result = decoder.decode(&init_llr_white(&y, 1.0), 10);
        assert_eq!(result.hard_bits, vec![0, 0, 0]);
        let est = estimate_noise(&y, &result);
        assert_eq!(est, vec![0.25, -0.25, 0.10000000000000009]);
    }

    // 10. Decoding is deterministic: repeated calls agree bitwise, with or
    //     without a shared workspace.
    #[test]
    fn deterministic_decode() {
        let h = hamming_7_4();
        let decoder = BpDecoder::new(&h);
        let llrs = [0.3, -0.8, 1.9, 0.1, -0.4, 0.6, -1.2];
        let a = decoder.decode(&llrs, 25);
        let mut ws = decoder.workspace();
        let b = decoder.decode_with(&mut ws, &llrs, 25);
        let c = decoder.decode_with(&mut ws, &llrs, 25);
        assert_eq!(a, b);
        assert_eq!(b, c);
    }
}

#[cfg(test)]
mod prop_tests {
    use super::*;
    use crate::code::hamming_7_4;
    use proptest::prelude::*;

    proptest! {
        // Invariant: negating every channel LLR flips every decided bit and
        // negates the posteriors (sign equivariance). LLRs are kept away
        // from zero so no posterior can land on a tie.
        #[test]
        fn sign_equivariance(
            raw in proptest::collection::vec(0.2f64..4.0, 7),
            signs in proptest::collection::vec(proptest::bool::ANY, 7),
        ) {
            let llrs: Vec<f64> = raw
                .iter()
                .zip(&signs)
                .map(|(&m, &s)| if s { m } else { -m })
                .collect();
            let negated: Vec<f64> = llrs.iter().map(|l| -l).collect();
            let h = hamming_7_4();
            let decoder = BpDecoder::new(&h);
            let a = decoder.decode(&llrs, 20);
            let b = decoder.decode(&negated, 20);
            prop_assume!(a.posteriors.iter().all(|p| p.abs() > 1e-9));
            for v in 0..7 {
                prop_assert_eq!(a.hard_bits[v] ^ b.hard_bits[v], 1);
                prop_assert!((a.posteriors[v] + b.posteriors[v]).abs() < 1e-9);
            }
        }

        // Invariant: posteriors are always finite, whatever the inputs.
        #[test]
        fn posteriors_always_finite(
            llrs in proptest::collection::vec(-1e6f64..1e6, 7),
        ) {
            let h = hamming_7_4();
            let decoder = BpDecoder::new(&h);
            let result = decoder.decode(&llrs, 30);
            prop_assert!(result.posteriors.iter().all(|p| p.is_finite()));
        }
    }
}
