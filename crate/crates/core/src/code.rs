//! Binary linear block codes described by sparse parity-check matrices.
//!
//! # Overview
//!
//! A code is defined by an `M x N` parity-check matrix `H` over GF(2): the
//! codewords are exactly the length-`N` bit vectors `u` with `H u^T = 0`.
//! This module provides:
//!
//! - [`ParityCheckMatrix`] — sparse row/column adjacency, built
//!   programmatically or parsed from the standard alist text format.
//! - [`GeneratorMatrix`] — a systematic generator `[I | P]` (up to a recorded
//!   column permutation) derived from `H` by Gaussian elimination over GF(2),
//!   with encoding and information-bit extraction.
//! - [`ParityCheckMatrix::syndrome`] — parity checks for hard decisions.
//!
//! Redundant (linearly dependent) rows of `H` are kept for decoding — extra
//! checks can only help belief propagation — but are excluded from the rank
//! when computing the information length `K = N - rank(H)`.
//!
//! The rate-3/4 code used by the experiments ships with the crate as an
//! alist file; see [`ldpc_576_432`].

use std::fmt::Write as _;

use thiserror::Error;

/// Information bits for one block: a `{0,1}` vector of length `K`.
pub type InfoBits = Vec<u8>;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Errors from alist parsing, reported with 1-based line numbers.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlistError {
    /// A header or degree line is missing or has the wrong shape.
    #[error("line {line}: malformed alist: {what}")]
    Malformed { line: usize, what: String },
    /// A token could not be parsed as a positive integer.
    #[error("line {line}: expected a nonnegative integer, found {token:?}")]
    BadInteger { line: usize, token: String },
    /// An adjacency entry points outside the declared matrix dimensions.
    #[error("line {line}: index {index} out of range (max {max})")]
    IndexOutOfRange { line: usize, index: usize, max: usize },
    /// An adjacency list does not match its declared degree.
    #[error("line {line}: {found} entries but degree list declares {declared}")]
    DegreeMismatch {
        line: usize,
        found: usize,
        declared: usize,
    },
    /// The same entry appears twice in one adjacency list.
    #[error("line {line}: duplicate index {index}")]
    DuplicateIndex { line: usize, index: usize },
    /// Row and column adjacency lists disagree about an entry.
    #[error("line {line}: row/column lists disagree on entry (row {row}, col {col})")]
    Inconsistent { line: usize, row: usize, col: usize },
}

/// Errors from generator derivation.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodeError {
    /// `rank(H) = N`: the code has no information bits.
    #[error("degenerate code: parity checks leave no information bits (rank {rank} = N)")]
    NoInformationBits { rank: usize },
}

// ---------------------------------------------------------------------------
// Parity-check matrix
// ---------------------------------------------------------------------------

/// Sparse binary parity-check matrix with both row and column adjacency.
///
/// Adjacency lists are kept sorted ascending, so two matrices with the same
/// entries compare equal regardless of construction order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParityCheckMatrix {
    num_checks: usize,
    num_vars: usize,
    /// For each check (row), the sorted variable indices it involves.
    check_to_var: Vec<Vec<usize>>,
    /// For each variable (column), the sorted check indices involving it.
    var_to_check: Vec<Vec<usize>>,
}

impl ParityCheckMatrix {
    /// Builds a matrix from per-check variable lists.
    ///
    /// # Panics
    ///
    /// Panics if any index is out of range, any list contains duplicates, or
    /// any row or column ends up empty (each check must test at least one
    /// variable and each variable must be covered by at least one check).
    pub fn from_sparse(num_checks: usize, num_vars: usize, rows: Vec<Vec<usize>>) -> Self {
        assert_eq!(rows.len(), num_checks, "row count mismatch");
        let mut check_to_var: Vec<Vec<usize>> = Vec::with_capacity(num_checks);
        let mut var_to_check: Vec<Vec<usize>> = vec![Vec::new(); num_vars];
        for (c, mut vars) in rows.into_iter().enumerate() {
            vars.sort_unstable();
            assert!(!vars.is_empty(), "check {c} has no variables");
            for pair in vars.windows(2) {
                assert_ne!(pair[0], pair[1], "check {c} lists variable {} twice", pair[0]);
            }
            for &v in &vars {
                assert!(v < num_vars, "check {c} references variable {v} >= {num_vars}");
                var_to_check[v].push(c);
            }
            check_to_var.push(vars);
        }
        for (v, checks) in var_to_check.iter().enumerate() {
            assert!(!checks.is_empty(), "variable {v} is covered by no check");
        }
        ParityCheckMatrix {
            num_checks,
            num_vars,
            check_to_var,
            var_to_check,
        }
    }

    /// Builds a matrix from dense `{0,1}` rows.
    ///
    /// # Panics
    ///
    /// Panics on ragged rows, entries outside `{0,1}`, or empty rows/columns
    /// (see [`ParityCheckMatrix::from_sparse`]).
    pub fn from_dense(rows: &[Vec<u8>]) -> Self {
        assert!(!rows.is_empty(), "matrix has no rows");
        let num_vars = rows[0].len();
        let sparse = rows
            .iter()
            .enumerate()
            .map(|(c, row)| {
                assert_eq!(row.len(), num_vars, "row {c} has inconsistent length");
                row.iter()
                    .enumerate()
                    .filter(|(_, &bit)| {
                        assert!(bit <= 1, "row {c} has an entry outside {{0,1}}");
                        bit == 1
                    })
                    .map(|(v, _)| v)
                    .collect()
            })
            .collect();
        Self::from_sparse(rows.len(), num_vars, sparse)
    }

    /// Parses the standard alist text format.
    ///
    /// Layout: `N M`, then `max_col_degree max_row_degree`, then the `N`
    /// column degrees, the `M` row degrees, `N` column adjacency lines and
    /// `M` row adjacency lines (1-based indices). Zero entries used as
    /// padding in fixed-width files are ignored. Every structural problem is
    /// reported with the offending line number.
    pub fn parse_alist(text: &str) -> Result<Self, AlistError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !l.trim().is_empty());
        let mut next_line = move |what: &str| {
            lines.next().ok_or_else(|| AlistError::Malformed {
                line: 0,
                what: format!("file ended before {what}"),
            })
        };
        fn ints(line: usize, text: &str) -> Result<Vec<usize>, AlistError> {
            text.split_whitespace()
                .map(|tok| {
                    tok.parse::<usize>().map_err(|_| AlistError::BadInteger {
                        line,
                        token: tok.to_string(),
                    })
                })
                .collect()
        }
        fn exactly(
            line: usize,
            text: &str,
            n: usize,
            what: &str,
        ) -> Result<Vec<usize>, AlistError> {
            let vals = ints(line, text)?;
            if vals.len() != n {
                return Err(AlistError::Malformed {
                    line,
                    what: format!("expected {n} {what}, found {}", vals.len()),
                });
            }
            Ok(vals)
        }

        let (line, text) = next_line("the size header")?;
        let header = exactly(line, text, 2, "integers (N M)")?;
        let (num_vars, num_checks) = (header[0], header[1]);
        if num_vars == 0 || num_checks == 0 {
            return Err(AlistError::Malformed {
                line,
                what: "matrix dimensions must be positive".into(),
            });
        }
        let (line, text) = next_line("the max-degree header")?;
        exactly(line, text, 2, "integers (max degrees)")?;
        let (line, text) = next_line("the column degree list")?;
        let col_degrees = exactly(line, text, num_vars, "column degrees")?;
        let (line, text) = next_line("the row degree list")?;
        let row_degrees = exactly(line, text, num_checks, "row degrees")?;

        // Adjacency lines: 1-based indices, zero padding tolerated.
        let mut read_adjacency = |count: usize,
                                  degrees: &[usize],
                                  max: usize,
                                  what: &str|
         -> Result<Vec<Vec<usize>>, AlistError> {
            let mut lists = Vec::with_capacity(count);
            for (i, degree) in degrees.iter().enumerate() {
                let (line, text) = next_line(&format!("{what} {i}"))?;
                let mut entries: Vec<usize> = Vec::new();
                for raw in ints(line, text)? {
                    if raw == 0 {
                        continue; // padding
                    }
                    if raw > max {
                        return Err(AlistError::IndexOutOfRange {
                            line,
                            index: raw,
                            max,
                        });
                    }
                    entries.push(raw - 1);
                }
                if entries.len() != *degree {
                    return Err(AlistError::DegreeMismatch {
                        line,
                        found: entries.len(),
                        declared: *degree,
                    });
                }
                entries.sort_unstable();
                for pair in entries.windows(2) {
                    if pair[0] == pair[1] {
                        return Err(AlistError::DuplicateIndex {
                            line,
                            index: pair[0] + 1,
                        });
                    }
                }
                lists.push((line, entries));
            }
            Ok(lists.into_iter().map(|(_, l)| l).collect())
        };

        // Column lists first (per format), then row lists.
        let col_lists = read_adjacency(num_vars, &col_degrees, num_checks, "column list")?;
        let row_lists = read_adjacency(num_checks, &row_degrees, num_vars, "row list")?;

        // Cross-check: the row and column lists must describe the same matrix.
        let mut from_cols: Vec<Vec<usize>> = vec![Vec::new(); num_checks];
        for (v, checks) in col_lists.iter().enumerate() {
            for &c in checks {
                from_cols[c].push(v);
            }
        }
        for (c, vars) in row_lists.iter().enumerate() {
            if from_cols[c] != *vars {
                let col = vars
                    .iter()
                    .find(|v| !from_cols[c].contains(v))
                    .or_else(|| from_cols[c].iter().find(|v| !vars.contains(v)))
                    .copied()
                    .unwrap_or(0);
                return Err(AlistError::Inconsistent {
                    // Row adjacency starts after the 4 header/degree lines and
                    // the N column lines.
                    line: 4 + num_vars + c + 1,
                    row: c + 1,
                    col: col + 1,
                });
            }
        }
        for (v, checks) in col_lists.iter().enumerate() {
            if checks.is_empty() {
                return Err(AlistError::Malformed {
                    line: 3,
                    what: format!("variable {} is covered by no check", v + 1),
                });
            }
        }
        for (c, vars) in row_lists.iter().enumerate() {
            if vars.is_empty() {
                return Err(AlistError::Malformed {
                    line: 4,
                    what: format!("check {} tests no variable", c + 1),
                });
            }
        }

        Ok(ParityCheckMatrix {
            num_checks,
            num_vars,
            check_to_var: row_lists,
            var_to_check: col_lists,
        })
    }

    /// Emits the canonical alist text for this matrix (sorted adjacency, no
    /// zero padding). `parse_alist` of the result reproduces the matrix.
    pub fn to_alist(&self) -> String {
        let mut out = String::new();
        let max_col = self.var_to_check.iter().map(Vec::len).max().unwrap_or(0);
        let max_row = self.check_to_var.iter().map(Vec::len).max().unwrap_or(0);
        let _ = writeln!(out, "{} {}", self.num_vars, self.num_checks);
        let _ = writeln!(out, "{max_col} {max_row}");
        let degrees = |lists: &[Vec<usize>]| {
            lists
                .iter()
                .map(|l| l.len().to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        let _ = writeln!(out, "{}", degrees(&self.var_to_check));
        let _ = writeln!(out, "{}", degrees(&self.check_to_var));
        let entries = |list: &[usize]| {
            list.iter()
                .map(|i| (i + 1).to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        for checks in &self.var_to_check {
            let _ = writeln!(out, "{}", entries(checks));
        }
        for vars in &self.check_to_var {
            let _ = writeln!(out, "{}", entries(vars));
        }
        out
    }

    /// Number of parity checks (rows), including redundant ones.
    pub fn num_checks(&self) -> usize {
        self.num_checks
    }

    /// Number of code bits (columns).
    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    /// Variables tested by check `c`, sorted ascending.
    pub fn check_vars(&self, c: usize) -> &[usize] {
        &self.check_to_var[c]
    }

    /// Checks covering variable `v`, sorted ascending.
    pub fn var_checks(&self, v: usize) -> &[usize] {
        &self.var_to_check[v]
    }

    /// Total number of edges (ones in the matrix).
    pub fn num_edges(&self) -> usize {
        self.check_to_var.iter().map(Vec::len).sum()
    }

    /// Computes the syndrome `H u^T` over GF(2), one bit per check.
    ///
    /// # Panics
    ///
    /// Panics if `word` does not have exactly `num_vars` entries.
    pub fn syndrome(&self, word: &[u8]) -> Vec<u8> {
        assert_eq!(word.len(), self.num_vars, "word length mismatch");
        self.check_to_var
            .iter()
            .map(|vars| vars.iter().fold(0u8, |acc, &v| acc ^ (word[v] & 1)))
            .collect()
    }

    /// True when every parity check is satisfied.
    pub fn syndrome_is_zero(&self, word: &[u8]) -> bool {
        assert_eq!(word.len(), self.num_vars, "word length mismatch");
        self.check_to_var
            .iter()
            .all(|vars| vars.iter().fold(0u8, |acc, &v| acc ^ (word[v] & 1)) == 0)
    }
}

// ---------------------------------------------------------------------------
// Generator matrix
// ---------------------------------------------------------------------------

/// A valid codeword: `H u^T = 0` by construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codeword(Vec<u8>);

impl Codeword {
    /// The code bits.
    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    /// Consumes the codeword, returning the raw bits.
    pub fn into_bits(self) -> Vec<u8> {
        self.0
    }
}

impl std::ops::Deref for Codeword {
    type Target = [u8];
    fn deref(&self) -> &[u8] {
        &self.0
    }
}

/// Dense systematic generator in `[I | P]` form up to a recorded column
/// permutation: information bits are placed at `info_cols` (where the
/// identity lives) and the remaining positions carry parity.
///
/// Rows are bit-packed for fast XOR encoding.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    num_info: usize,
    num_vars: usize,
    rank: usize,
    /// One bit-packed length-`N` row per information bit.
    rows: Vec<Vec<u64>>,
    /// Codeword positions that carry the information bits, ascending.
    info_cols: Vec<usize>,
}

impl GeneratorMatrix {
    /// Derives a generator from `H` by Gaussian elimination over GF(2).
    ///
    /// Pivot columns are chosen from the right, so information bits occupy
    /// the earliest possible codeword positions. Redundant rows of `H`
    /// reduce the rank (and thus enlarge `K`) but are otherwise harmless.
    pub fn derive(h: &ParityCheckMatrix) -> Result<Self, CodeError> {
        let n = h.num_vars();
        let m = h.num_checks();
        let words = n.div_ceil(64);
        let bit = |row: &[u64], col: usize| (row[col / 64] >> (col % 64)) & 1 == 1;

        let mut rows: Vec<Vec<u64>> = vec![vec![0u64; words]; m];
        for c in 0..m {
            for &v in h.check_vars(c) {
                rows[c][v / 64] ^= 1u64 << (v % 64);
            }
        }

        // Reduced row echelon form with pivots scanned right-to-left.
        let mut pivot_cols: Vec<usize> = Vec::new();
        let mut rank = 0usize;
        for col in (0..n).rev() {
            if rank == m {
                break;
            }
            let Some(pivot_row) = (rank..m).find(|&r| bit(&rows[r], col)) else {
                continue;
            };
            rows.swap(rank, pivot_row);
            let pivot = rows[rank].clone();
            for (r, row) in rows.iter_mut().enumerate() {
                if r != rank && bit(row, col) {
                    for (w, p) in row.iter_mut().zip(&pivot) {
                        *w ^= p;
                    }
                }
            }
            pivot_cols.push(col);
            rank += 1;
        }

        if rank == n {
            return Err(CodeError::NoInformationBits { rank });
        }

        let mut is_pivot = vec![false; n];
        for &c in &pivot_cols {
            is_pivot[c] = true;
        }
        let info_cols: Vec<usize> = (0..n).filter(|&c| !is_pivot[c]).collect();

        // Row j of G: identity at info_cols[j], plus the parity positions
        // read off the reduced form (pivot row t fixes pivot_cols[t] as the
        // XOR of the free columns present in that row).
        let gen_rows: Vec<Vec<u64>> = info_cols
            .iter()
            .map(|&fc| {
                let mut g = vec![0u64; words];
                g[fc / 64] ^= 1u64 << (fc % 64);
                for (t, &pc) in pivot_cols.iter().enumerate() {
                    if bit(&rows[t], fc) {
                        g[pc / 64] ^= 1u64 << (pc % 64);
                    }
                }
                g
            })
            .collect();

        Ok(GeneratorMatrix {
            num_info: n - rank,
            num_vars: n,
            rank,
            rows: gen_rows,
            info_cols,
        })
    }

    /// Information length `K = N - rank(H)`.
    pub fn num_info(&self) -> usize {
        self.num_info
    }

    /// Codeword length `N`.
    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    /// Rank of the parity-check matrix (redundant rows excluded).
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Codeword positions holding the information bits, ascending.
    pub fn info_cols(&self) -> &[usize] {
        &self.info_cols
    }

    /// Encodes `K` information bits into an `N`-bit codeword.
    ///
    /// # Panics
    ///
    /// Panics if `info` does not have exactly `K` entries in `{0,1}`.
    pub fn encode(&self, info: &[u8]) -> Codeword {
        assert_eq!(info.len(), self.num_info, "info length mismatch");
        let words = self.num_vars.div_ceil(64);
        let mut acc = vec![0u64; words];
        for (bit, row) in info.iter().zip(&self.rows) {
            assert!(*bit <= 1, "information bits must be 0 or 1");
            if *bit == 1 {
                for (a, r) in acc.iter_mut().zip(row) {
                    *a ^= r;
                }
            }
        }
        Codeword(
            (0..self.num_vars)
                .map(|c| ((acc[c / 64] >> (c % 64)) & 1) as u8)
                .collect(),
        )
    }

    /// Reads the information bits back out of a codeword-length bit vector.
    ///
    /// # Panics
    ///
    /// Panics if `word` does not have exactly `N` entries.
    pub fn extract_info(&self, word: &[u8]) -> InfoBits {
        assert_eq!(word.len(), self.num_vars, "word length mismatch");
        self.info_cols.iter().map(|&c| word[c] & 1).collect()
    }
}

/// Draws `k` uniform random information bits.
pub fn random_info_bits<R: rand::Rng + ?Sized>(k: usize, rng: &mut R) -> InfoBits {
    use rand::RngExt as _;
    (0..k).map(|_| rng.random_range(0..2u8)).collect()
}

// ---------------------------------------------------------------------------
// Shipped codes
// ---------------------------------------------------------------------------

/// The rate-3/4 LDPC code used by the experiments: N=576, M=144, K=432.
///
/// A progressive-edge-growth construction with column degree 3, check
/// degrees 11-13, girth at least 6, and full row rank. The alist file is
/// pinned in the crate so results are reproducible bit for bit.
pub fn ldpc_576_432() -> ParityCheckMatrix {
    ParityCheckMatrix::parse_alist(include_str!("../data/ldpc_576_432.alist"))
        .expect("shipped alist file is valid")
}

/// The (7,4) Hamming code, handy for exhaustive-oracle tests: its 16
/// codewords can be enumerated and compared against block-MAP decisions.
pub fn hamming_7_4() -> ParityCheckMatrix {
    ParityCheckMatrix::from_dense(&[
        vec![1, 0, 1, 0, 1, 0, 1],
        vec![0, 1, 1, 0, 0, 1, 1],
        vec![0, 0, 0, 1, 1, 1, 1],
    ])
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_alist() -> &'static str {
        // H = [[1,1,0],[0,1,1]] in alist form.
        "3 2\n2 2\n1 2 1\n2 2\n1\n1 2\n2\n1 2\n2 3\n"
    }

    // 1. Alist parsing transcribes adjacency exactly.
    #[test]
    fn parse_small_alist() {
        let h = ParityCheckMatrix::parse_alist(small_alist()).unwrap();
        assert_eq!(h.num_vars(), 3);
        assert_eq!(h.num_checks(), 2);
        assert_eq!(h.check_vars(0), &[0, 1]);
        assert_eq!(h.check_vars(1), &[1, 2]);
        assert_eq!(h.var_checks(0), &[0]);
        assert_eq!(h.var_checks(1), &[0, 1]);
        assert_eq!(h.var_checks(2), &[1]);
    }

    // 2. Zero padding in adjacency lines is ignored.
    #[test]
    fn parse_tolerates_zero_padding() {
        let padded = "3 2\n2 2\n1 2 1\n2 2\n1 0\n1 2\n2 0\n1 2\n2 3\n";
        assert_eq!(
            ParityCheckMatrix::parse_alist(padded).unwrap(),
            ParityCheckMatrix::parse_alist(small_alist()).unwrap()
        );
    }

    // 3. A wrong degree is reported with its line number.
    #[test]
    fn parse_degree_mismatch_has_line_number() {
        // Variable 1's list (line 5) claims degree 1 but lists two checks.
        let bad = "3 2\n2 2\n1 2 1\n2 2\n1 2\n1 2\n2\n1 2\n2 3\n";
        match ParityCheckMatrix::parse_alist(bad) {
            Err(AlistError::DegreeMismatch { line, found, declared }) => {
                assert_eq!(line, 5);
                assert_eq!((found, declared), (2, 1));
            }
            other => panic!("expected DegreeMismatch, got {other:?}"),
        }
    }

    // 4. Out-of-range and inconsistent files are rejected.
    #[test]
    fn parse_rejects_bad_indices() {
        let out_of_range = "3 2\n2 2\n1 2 1\n2 2\n3\n1 2\n2\n1 2\n2 3\n";
        assert!(matches!(
            ParityCheckMatrix::parse_alist(out_of_range),
            Err(AlistError::IndexOutOfRange { line: 5, index: 3, max: 2 })
        ));
        // Row list disagrees with column list.
        let inconsistent = "3 2\n2 2\n1 2 1\n2 2\n1\n1 2\n2\n1 3\n2 3\n";
        assert!(matches!(
            ParityCheckMatrix::parse_alist(inconsistent),
            Err(AlistError::Inconsistent { .. })
        ));
    }

    // 5. Emission round-trips through the parser.
    #[test]
    fn alist_round_trip() {
        let h = ParityCheckMatrix::parse_alist(small_alist()).unwrap();
        let emitted = h.to_alist();
        assert_eq!(ParityCheckMatrix::parse_alist(&emitted).unwrap(), h);
        // Emission of a parse of an emission is a fixed point.
        assert_eq!(
            ParityCheckMatrix::parse_alist(&emitted).unwrap().to_alist(),
            emitted
        );
    }

    // 6. The shipped file has the advertised shape.
    #[test]
    fn shipped_code_shape() {
        let h = ldpc_576_432();
        assert_eq!(h.num_vars(), 576);
        assert_eq!(h.num_checks(), 144);
        assert_eq!(h.num_edges(), 576 * 3);
        assert!((0..576).all(|v| h.var_checks(v).len() == 3));
        assert!((0..144).all(|c| (11..=13).contains(&h.check_vars(c).len())));
        let emitted = h.to_alist();
        assert_eq!(ParityCheckMatrix::parse_alist(&emitted).unwrap(), h);
    }

    // 7. Syndrome of the worked 2x3 example.
    #[test]
    fn syndrome_example() {
        let h = ParityCheckMatrix::from_dense(&[vec![1, 1, 0], vec![0, 1, 1]]);
        assert_eq!(h.syndrome(&[1, 1, 0]), vec![0, 1]);
        assert_eq!(h.syndrome(&[0, 0, 0]), vec![0, 0]);
        assert!(!h.syndrome_is_zero(&[1, 0, 0]));
        assert!(h.syndrome_is_zero(&[1, 1, 1]));
    }

    // 8. Generator for the single-check code, derived by hand:
    //    H = [1 1 1] forces even parity; pivoting from the right puts the
    //    information bits first, G = [[1,0,1],[0,1,1]].
    #[test]
    fn derive_single_check_code() {
        let h = ParityCheckMatrix::from_dense(&[vec![1, 1, 1]]);
        let g = GeneratorMatrix::derive(&h).unwrap();
        assert_eq!(g.num_info(), 2);
        assert_eq!(g.info_cols(), &[0, 1]);
        assert_eq!(g.encode(&[1, 0]).bits(), &[1, 0, 1]);
        assert_eq!(g.encode(&[0, 1]).bits(), &[0, 1, 1]);
        assert_eq!(g.encode(&[1, 1]).bits(), &[1, 1, 0]);
        assert_eq!(g.encode(&[0, 0]).bits(), &[0, 0, 0]);
    }

    // 9. Redundant rows are kept for decoding but excluded from the rank.
    #[test]
    fn redundant_rows_do_not_change_rank() {
        let h = ParityCheckMatrix::from_dense(&[
            vec![1, 1, 0],
            vec![0, 1, 1],
            vec![1, 0, 1], // sum of the first two
        ]);
        assert_eq!(h.num_checks(), 3);
        let g = GeneratorMatrix::derive(&h).unwrap();
        assert_eq!(g.rank(), 2);
        assert_eq!(g.num_info(), 1);
    }

    // 10. A full-rank square matrix leaves no information bits.
    #[test]
    fn degenerate_code_is_an_error() {
        let h = ParityCheckMatrix::from_dense(&[vec![1, 0], vec![0, 1]]);
        assert!(matches!(
            GeneratorMatrix::derive(&h),
            Err(CodeError::NoInformationBits { rank: 2 })
        ));
    }

    // 11. Shipped code: K = 432 and G H^T = 0 for every generator row.
    #[test]
    fn shipped_code_generator() {
        let h = ldpc_576_432();
        let g = GeneratorMatrix::derive(&h).unwrap();
        assert_eq!(g.num_info(), 432);
        assert_eq!(g.rank(), 144);
        let mut unit = vec![0u8; 432];
        for j in 0..432 {
            unit[j] = 1;
            assert!(h.syndrome_is_zero(&g.encode(&unit)));
            unit[j] = 0;
        }
    }

    // 12. Random encodes satisfy all checks; systematic extraction inverts.
    #[test]
    fn encode_syndrome_and_extract() {
        let h = ldpc_576_432();
        let g = GeneratorMatrix::derive(&h).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let x = random_info_bits(g.num_info(), &mut rng);
            let u = g.encode(&x);
            assert!(h.syndrome_is_zero(&u));
            assert_eq!(g.extract_info(&u), x);
        }
    }

    // 13. Encoding is linear: enc(x ^ y) = enc(x) ^ enc(y).
    #[test]
    fn encode_linearity() {
        let h = ldpc_576_432();
        let g = GeneratorMatrix::derive(&h).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let x = random_info_bits(g.num_info(), &mut rng);
            let y = random_info_bits(g.num_info(), &mut rng);
            let xy: Vec<u8> = x.iter().zip(&y).map(|(a, b)| a ^ b).collect();
            let lhs = g.encode(&xy);
            let rhs: Vec<u8> = g
                .encode(&x)
                .iter()
                .zip(g.encode(&y).iter())
                .map(|(a, b)| a ^ b)
                .collect();
            assert_eq!(lhs.bits(), &rhs[..]);
        }
    }

    // 14. Hamming(7,4) sanity: 16 codewords, distinct, all pass the checks.
    #[test]
    fn hamming_codebook() {
        let h = hamming_7_4();
        let g = GeneratorMatrix::derive(&h).unwrap();
        assert_eq!(g.num_info(), 4);
        let mut words: Vec<Vec<u8>> = Vec::new();
        for x in 0u8..16 {
            let bits: Vec<u8> = (0..4).map(|b| (x >> b) & 1).collect();
            let u = g.encode(&bits).into_bits();
            assert!(h.syndrome_is_zero(&u));
            words.push(u);
        }
        words.sort();
        words.dedup();
        assert_eq!(words.len(), 16);
    }
}
