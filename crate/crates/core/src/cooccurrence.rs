//! Windowed co-occurrence counting and the signal matrices built from it.

use std::collections::HashMap;
use std::io::{self, Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{TokenizedCorpus, Vocabulary};
use crate::error::{Error, Result};

/// Magic prefix of the binary co-occurrence format.
pub const COOC_MAGIC: &[u8; 8] = b"COOC0001";

/// Sentence shards used by [`count_cooccurrences`]. Results are bit-identical
/// for a fixed shard count.
pub const DEFAULT_SHARDS: usize = 8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// Every pair within the window adds 1.
    #[default]
    Flat,
    /// A pair at distance d adds 1/d.
    Harmonic,
}

impl std::str::FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(Weighting::Flat),
            "harmonic" => Ok(Weighting::Harmonic),
            other => Err(Error::param(format!("unknown weighting {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoocConfig {
    pub window: usize,
    pub weighting: Weighting,
}

impl Default for CoocConfig {
    fn default() -> Self {
        CoocConfig {
            window: 5,
            weighting: Weighting::Flat,
        }
    }
}

/// One stored cell of a sparse symmetric matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub row: u32,
    pub col: u32,
    pub weight: f64,
}

/// Symmetric co-occurrence weights, both triangles stored, sorted by
/// (row, col).
#[derive(Clone, Debug, PartialEq)]
pub struct SparseCooccurrence {
    n: usize,
    cells: Vec<Cell>,
    total_weight: f64,
}

impl SparseCooccurrence {
    /// Validates and wraps a cell list.
    ///
    /// Cells must be sorted by (row, col) without duplicates, in range, with
    /// non-negative finite weights, and the matrix must be symmetric.
    pub fn from_cells(n: usize, cells: Vec<Cell>) -> Result<Self> {
        for w in cells.windows(2) {
            if (w[0].row, w[0].col) >= (w[1].row, w[1].col) {
                return Err(Error::format("cells not strictly sorted by (row, col)"));
            }
        }
        let mut lookup = HashMap::with_capacity(cells.len());
        for c in &cells {
            if c.row as usize >= n || c.col as usize >= n {
                return Err(Error::format(format!("cell ({}, {}) outside order {n}", c.row, c.col)));
            }
            if !(c.weight.is_finite() && c.weight >= 0.0) {
                return Err(Error::format(format!("bad weight {} at ({}, {})", c.weight, c.row, c.col)));
            }
            lookup.insert((c.row, c.col), c.weight);
        }
        for c in &cells {
            if lookup.get(&(c.col, c.row)).map(|w| w.to_bits()) != Some(c.weight.to_bits()) {
                return Err(Error::format(format!("matrix not symmetric at ({}, {})", c.row, c.col)));
            }
        }
        let total_weight = cells.iter().map(|c| c.weight).sum();
        Ok(SparseCooccurrence {
            n,
            cells,
            total_weight,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    /// Sum of all stored weights (W).
    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    /// Weight at (row, col), zero when not stored.
    pub fn weight(&self, row: usize, col: usize) -> f64 {
        let key = (row as u32, col as u32);
        self.cells
            .binary_search_by(|c| (c.row, c.col).cmp(&key))
            .map(|i| self.cells[i].weight)
            .unwrap_or(0.0)
    }

    /// Row sums; equal to the column sums by symmetry.
    pub fn marginals(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n];
        for c in &self.cells {
            sums[c.row as usize] += c.weight;
        }
        sums
    }

    /// Returns a copy with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let cells = self
            .cells
            .iter()
            .map(|c| Cell {
                weight: c.weight * factor,
                ..*c
            })
            .collect();
        Self::from_cells(self.n, cells)
    }

    /// Writes the `COOC0001` binary layout: magic, u64 n, u64 nnz, then
    /// (u32 row, u32 col, f64 weight) records, all little-endian.
    pub fn write_binary<W: Write>(&self, mut out: W) -> io::Result<()> {
        out.write_all(COOC_MAGIC)?;
        out.write_all(&(self.n as u64).to_le_bytes())?;
        out.write_all(&(self.cells.len() as u64).to_le_bytes())?;
        for c in &self.cells {
            out.write_all(&c.row.to_le_bytes())?;
            out.write_all(&c.col.to_le_bytes())?;
            out.write_all(&c.weight.to_le_bytes())?;
        }
        out.flush()
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(&mut input, &mut magic, "magic")?;
        if &magic != COOC_MAGIC {
            return Err(Error::format(format!(
                "bad co-occurrence magic {:?}",
                String::from_utf8_lossy(&magic)
            )));
        }
        let n = read_u64(&mut input, "order")?;
        let nnz = read_u64(&mut input, "nnz")?;
        let n = usize::try_from(n).map_err(|_| Error::format("order does not fit in memory"))?;
        if n > u32::MAX as usize + 1 {
            return Err(Error::format(format!("order {n} exceeds u32 index range")));
        }
        let nnz = usize::try_from(nnz).map_err(|_| Error::format("nnz does not fit in memory"))?;
        let mut cells = Vec::with_capacity(nnz.min(1 << 24));
        let mut rec = [0u8; 16];
        for _ in 0..nnz {
            read_exact(&mut input, &mut rec, "record")?;
            cells.push(Cell {
                row: u32::from_le_bytes(rec[0..4].try_into().unwrap()),
                col: u32::from_le_bytes(rec[4..8].try_into().unwrap()),
                weight: f64::from_le_bytes(rec[8..16].try_into().unwrap()),
            });
        }
        let mut probe = [0u8; 1];
        if input.read(&mut probe)? != 0 {
            return Err(Error::format("trailing bytes after co-occurrence records"));
        }
        Self::from_cells(n, cells)
    }
}

pub(crate) fn read_exact<R: Read>(input: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    input.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::format(format!("truncated input while reading {what}")),
        _ => Error::Io(e),
    })
}

pub(crate) fn read_u64<R: Read>(input: &mut R, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(input, &mut b, what)?;
    Ok(u64::from_le_bytes(b))
}

/// Counts co-occurrences with the default shard count.
pub fn count_cooccurrences(
    corpus: &TokenizedCorpus,
    vocab: &Vocabulary,
    config: &CoocConfig,
) -> Result<SparseCooccurrence> {
    count_cooccurrences_sharded(corpus, vocab, config, DEFAULT_SHARDS)
}

/// Counts co-occurrences within `config.window` positions of the same
/// sentence.
///
/// Out-of-vocabulary tokens keep their positions but contribute nothing.
/// Sentences are split into `shards` contiguous blocks counted in parallel
/// and merged in block order.
pub fn count_cooccurrences_sharded(
    corpus: &TokenizedCorpus,
    vocab: &Vocabulary,
    config: &CoocConfig,
    shards: usize,
) -> Result<SparseCooccurrence> {
    if config.window == 0 {
        return Err(Error::param("window must be at least 1"));
    }
    let mapping: Vec<Option<u32>> = corpus
        .token_types()
        .iter()
        .map(|t| vocab.index_of(t).map(|i| i as u32))
        .collect();
    let sentences = corpus.sentence_ids();
    let shard_len = sentences.len().div_ceil(shards.max(1)).max(1);

    let partials: Vec<HashMap<(u32, u32), f64>> = sentences
        .par_chunks(shard_len)
        .map(|chunk| {
            let mut acc: HashMap<(u32, u32), f64> = HashMap::new();
            let mut row: Vec<Option<u32>> = Vec::new();
            for sentence in chunk {
                row.clear();
                row.extend(sentence.iter().map(|&id| mapping[id as usize]));
                for (t, center) in row.iter().enumerate() {
                    let Some(center) = *center else { continue };
                    for d in 1..=config.window {
                        let Some(Some(context)) = row.get(t + d).copied() else {
                            continue;
                        };
                        let w = match config.weighting {
                            Weighting::Flat => 1.0,
                            Weighting::Harmonic => 1.0 / d as f64,
                        };
                        *acc.entry((center, context)).or_insert(0.0) += w;
                        *acc.entry((context, center)).or_insert(0.0) += w;
                    }
                }
            }
            acc
        })
        .collect();

    let mut merged: HashMap<(u32, u32), f64> = HashMap::new();
    for partial in partials {
        let mut keys: Vec<_> = partial.into_iter().collect();
        keys.sort_unstable_by_key(|&(k, _)| k);
        for (key, w) in keys {
            *merged.entry(key).or_insert(0.0) += w;
        }
    }
    let mut cells: Vec<Cell> = merged
        .into_iter()
        .map(|((row, col), weight)| Cell { row, col, weight })
        .collect();
    cells.sort_unstable_by_key(|c| (c.row, c.col));
    let total_weight = cells.iter().map(|c| c.weight).sum();
    Ok(SparseCooccurrence {
        n: vocab.size(),
        cells,
        total_weight,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    /// max(0, PMI - log(shift)); the matrix behind Word2Vec.
    ShiftedPpmi,
    /// log(1 + count); the matrix behind GloVe.
    LogCount,
}

impl std::str::FromStr for SignalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ppmi" | "shifted_ppmi" => Ok(SignalKind::ShiftedPpmi),
            "logcount" | "log_count" => Ok(SignalKind::LogCount),
            other => Err(Error::param(format!("unknown signal kind {other:?}"))),
        }
    }
}

/// Sparse symmetric non-negative matrix in CSR layout. Zero entries are never
/// stored.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalMatrix {
    n: usize,
    kind: SignalKind,
    shift_ns: u32,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

impl SignalMatrix {
    fn from_sorted_cells(n: usize, kind: SignalKind, shift_ns: u32, cells: impl Iterator<Item = Cell>) -> Self {
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for c in cells {
            if c.weight == 0.0 {
                continue;
            }
            row_ptr[c.row as usize + 1] += 1;
            col_idx.push(c.col);
            values.push(c.weight);
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        SignalMatrix {
            n,
            kind,
            shift_ns,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> SignalKind {
        self.kind
    }

    /// Negative-sample shift; 1 for log-count matrices.
    pub fn shift_ns(&self) -> u32 {
        self.shift_ns
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let span = self.row_ptr[row]..self.row_ptr[row + 1];
        match self.col_idx[span.clone()].binary_search(&(col as u32)) {
            Ok(i) => self.values[span.start + i],
            Err(_) => 0.0,
        }
    }

    /// Stored entries of one row as (column, value).
    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[row]..self.row_ptr[row + 1];
        self.col_idx[span.clone()]
            .iter()
            .zip(&self.values[span])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }
}

/// Shifted positive PMI: max(0, log(w_ij W / (r_i c_j)) - log(shift_ns)).
pub fn build_shifted_ppmi(cooc: &SparseCooccurrence, shift_ns: u32) -> Result<SignalMatrix> {
    if shift_ns == 0 {
        return Err(Error::param("shift_ns must be at least 1"));
    }
    if cooc.total_weight().is_nan() || cooc.total_weight() <= 0.0 {
        return Err(Error::EmptyMatrix);
    }
    let total = cooc.total_weight();
    let marginals = cooc.marginals();
    let shift = f64::from(shift_ns).ln();
    // (w W) / (r_i r_j) is evaluated with commutative products only, so
    // (i, j) and (j, i) produce bit-identical values.
    let cells = cooc.cells().iter().map(|c| {
        let denom = marginals[c.row as usize] * marginals[c.col as usize];
        let pmi = ((c.weight * total) / denom).ln();
        Cell {
            weight: (pmi - shift).max(0.0),
            ..*c
        }
    });
    Ok(SignalMatrix::from_sorted_cells(
        cooc.n(),
        SignalKind::ShiftedPpmi,
        shift_ns,
        cells,
    ))
}

/// log(1 + w_ij) on stored entries.
pub fn build_logcount(cooc: &SparseCooccurrence) -> Result<SignalMatrix> {
    if cooc.total_weight().is_nan() || cooc.total_weight() <= 0.0 {
        return Err(Error::EmptyMatrix);
    }
    let cells = cooc.cells().iter().map(|c| Cell {
        weight: c.weight.ln_1p(),
        ..*c
    });
    Ok(SignalMatrix::from_sorted_cells(cooc.n(), SignalKind::LogCount, 1, cells))
}

/// Dispatches on `kind`; `shift_ns` is ignored for log-count.
pub fn build_signal(cooc: &SparseCooccurrence, kind: SignalKind, shift_ns: u32) -> Result<SignalMatrix> {
    match kind {
        SignalKind::ShiftedPpmi => build_shifted_ppmi(cooc, shift_ns),
        SignalKind::LogCount => build_logcount(cooc),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocabulary, tokenize_corpus};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn setup(text: &str) -> (TokenizedCorpus, Vocabulary) {
        let c = tokenize_corpus(text.as_bytes()).unwrap();
        let v = build_vocabulary(&c, 100, 1).unwrap();
        (c, v)
    }

    #[test]
    fn abab_window_one() {
        let (c, v) = setup("a b a b");
        let m = count_cooccurrences(&c, &v, &CoocConfig { window: 1, weighting: Weighting::Flat }).unwrap();
        let (a, b) = (v.index_of("a").unwrap(), v.index_of("b").unwrap());
        assert_eq!(m.weight(a, b), 3.0);
        assert_eq!(m.weight(b, a), 3.0);
        assert_eq!(m.weight(a, a), 0.0);
        assert_eq!(m.weight(b, b), 0.0);
        assert_eq!(m.total_weight(), 6.0);
    }

    #[test]
    fn single_token_sentence_contributes_nothing() {
        let (c, v) = setup("a\nb");
        let m = count_cooccurrences(&c, &v, &CoocConfig::default()).unwrap();
        assert_eq!(m.nnz(), 0);
        assert!(matches!(build_shifted_ppmi(&m, 1), Err(Error::EmptyMatrix)));
        assert!(matches!(build_logcount(&m), Err(Error::EmptyMatrix)));
    }

    #[test]
    fn oov_tokens_hold_their_position() {
        let c = tokenize_corpus(b"a x b\na a b b").unwrap();
        let v = build_vocabulary(&c, 2, 1).unwrap();
        assert_eq!(v.index_of("x"), None);
        let single = tokenize_corpus(b"a x b").unwrap();
        let m = count_cooccurrences(&single, &v, &CoocConfig { window: 2, weighting: Weighting::Harmonic }).unwrap();
        let (a, b) = (v.index_of("a").unwrap(), v.index_of("b").unwrap());
        assert_eq!(m.weight(a, b), 0.5);
        assert_eq!(m.weight(b, a), 0.5);
        let m = count_cooccurrences(&single, &v, &CoocConfig { window: 1, weighting: Weighting::Flat }).unwrap();
        assert_eq!(m.nnz(), 0);
    }

    #[test]
    fn ppmi_of_abab() {
        let (c, v) = setup("a b a b");
        let m = count_cooccurrences(&c, &v, &CoocConfig { window: 1, weighting: Weighting::Flat }).unwrap();
        let s = build_shifted_ppmi(&m, 1).unwrap();
        let (a, b) = (v.index_of("a").unwrap(), v.index_of("b").unwrap());
        assert_relative_eq!(s.get(a, b), 2f64.ln(), epsilon = 1e-12);
        assert_eq!(s.get(a, a), 0.0);
        assert_eq!(s.kind(), SignalKind::ShiftedPpmi);
    }

    #[test]
    fn large_shift_clamps_everything() {
        let (c, v) = setup("a b c a b c d a");
        let m = count_cooccurrences(&c, &v, &CoocConfig::default()).unwrap();
        let s = build_shifted_ppmi(&m, 1_000_000).unwrap();
        assert_eq!(s.nnz(), 0);
    }

    #[test]
    fn logcount_values() {
        let (c, v) = setup("a b a b");
        let m = count_cooccurrences(&c, &v, &CoocConfig { window: 1, weighting: Weighting::Flat }).unwrap();
        let s = build_logcount(&m).unwrap();
        let (a, b) = (v.index_of("a").unwrap(), v.index_of("b").unwrap());
        assert_relative_eq!(s.get(a, b), 4f64.ln(), epsilon = 1e-12);
        assert_eq!(s.get(b, b), 0.0);
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let (c, v) = setup("the cat sat on the mat\nthe dog sat\na cat and a dog");
        let m = count_cooccurrences(&c, &v, &CoocConfig { window: 3, weighting: Weighting::Harmonic }).unwrap();
        let mut buf = Vec::new();
        m.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..8], COOC_MAGIC);
        assert_eq!(buf.len(), 24 + 16 * m.nnz());
        let back = SparseCooccurrence::read_binary(&buf[..]).unwrap();
        assert_eq!(back.total_weight().to_bits(), m.total_weight().to_bits());
        assert_eq!(back, m);
    }

    #[test]
    fn binary_rejects_bad_headers() {
        assert!(matches!(SparseCooccurrence::read_binary(&b"COOC0002"[..]), Err(Error::Format(_))));
        assert!(matches!(SparseCooccurrence::read_binary(&b"COOC0001\x01"[..]), Err(Error::Format(_))));
        let mut buf = Vec::new();
        buf.extend_from_slice(COOC_MAGIC);
        buf.extend_from_slice(&2u64.to_le_bytes());
        buf.extend_from_slice(&1u64.to_le_bytes());
        buf.extend_from_slice(&0u32.to_le_bytes());
        buf.extend_from_slice(&1u32.to_le_bytes());
        buf.extend_from_slice(&1f64.to_le_bytes());
        // (0, 1) without (1, 0)
        assert!(matches!(SparseCooccurrence::read_binary(&buf[..]), Err(Error::Format(_))));
    }

    #[test]
    fn shard_count_does_not_change_flat_counts() {
        let text: Vec<String> = (0..200).map(|i| format!("w{} w{} w{} w{}", i % 7, i % 5, i % 3, i % 11)).collect();
        let (c, v) = setup(&text.join("\n"));
        let cfg = CoocConfig { window: 2, weighting: Weighting::Flat };
        let one = count_cooccurrences_sharded(&c, &v, &cfg, 1).unwrap();
        let many = count_cooccurrences_sharded(&c, &v, &cfg, 13).unwrap();
        assert_eq!(one, many);
    }

    #[test]
    fn harmonic_is_run_to_run_identical() {
        let text: Vec<String> = (0..300).map(|i| format!("w{} w{} w{} w{} w{}", i % 7, i % 5, i % 3, i % 11, i % 2)).collect();
        let (c, v) = setup(&text.join("\n"));
        let cfg = CoocConfig { window: 4, weighting: Weighting::Harmonic };
        let a = count_cooccurrences(&c, &v, &cfg).unwrap();
        let b = count_cooccurrences(&c, &v, &cfg).unwrap();
        assert!(a.cells().iter().zip(b.cells()).all(|(x, y)| x.weight.to_bits() == y.weight.to_bits()));
    }

    proptest! {
        #[test]
        fn ppmi_is_symmetric_nonnegative_and_scale_free(
            sentences in prop::collection::vec(prop::collection::vec(0u8..6, 1..12), 1..30),
            window in 1usize..4,
            factor in 0.01f64..100.0,
        ) {
            let text: Vec<String> = sentences
                .iter()
                .map(|s| s.iter().map(|t| format!("t{t}")).collect::<Vec<_>>().join(" "))
                .collect();
            let (c, v) = setup(&text.join("\n"));
            let m = count_cooccurrences(&c, &v, &CoocConfig { window, weighting: Weighting::Harmonic }).unwrap();
            prop_assume!(m.total_weight() > 0.0);
            let s = build_shifted_ppmi(&m, 1).unwrap();
            let l = build_logcount(&m).unwrap();
            for i in 0..s.n() {
                for (j, val) in s.row(i) {
                    prop_assert!(val >= 0.0);
                    prop_assert_eq!(val.to_bits(), s.get(j, i).to_bits());
                    prop_assert!(m.weight(i, j) > 0.0);
                }
                for (j, val) in l.row(i) {
                    prop_assert_eq!(val.to_bits(), l.get(j, i).to_bits());
                }
            }
            let scaled = build_shifted_ppmi(&m.scaled(factor).unwrap(), 1).unwrap();
            for i in 0..s.n() {
                for j in 0..s.n() {
                    prop_assert!((s.get(i, j) - scaled.get(i, j)).abs() <= 1e-12 * s.get(i, j).abs().max(1.0));
                }
            }
        }

        #[test]
        fn logcount_is_monotone(a in 0.0f64..1e6, b in 0.0f64..1e6) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(lo.ln_1p() <= hi.ln_1p());
        }
    }
}
