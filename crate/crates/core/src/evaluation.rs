//! Word-similarity scoring, nearest-neighbor lookup, and the oracle grid
//! search for the empirically best dimension.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::criteria::Grid;
use crate::error::{Error, Result};
use crate::spectral::{oracle_matrix, OracleParams, SpectralDecomposition};

/// Maps tokens to embedding rows.
pub trait Lexicon {
    fn index_of(&self, token: &str) -> Option<usize>;
    fn token(&self, i: usize) -> &str;
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Lexicon for Vocabulary {
    fn index_of(&self, token: &str) -> Option<usize> {
        Vocabulary::index_of(self, token)
    }

    fn token(&self, i: usize) -> &str {
        Vocabulary::token(self, i)
    }

    fn len(&self) -> usize {
        self.size()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityBenchmark {
    name: String,
    pairs: Vec<(String, String, f64)>,
}

impl SimilarityBenchmark {
    pub fn new(name: impl Into<String>, pairs: Vec<(String, String, f64)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InsufficientData("benchmark has no pairs".into()));
        }
        if let Some((a, b, _)) = pairs.iter().find(|p| !p.2.is_finite()) {
            return Err(Error::NonFinite(format!("score of pair ({a}, {b})")));
        }
        Ok(SimilarityBenchmark { name: name.into(), pairs })
    }

    /// Reads `word1<TAB>word2<TAB>score` lines. Blank lines and lines starting
    /// with `#` are skipped; words are lowercased.
    pub fn read_tsv<R: BufRead>(name: impl Into<String>, input: R) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let bad = || Error::format(format!("benchmark line {}: expected word1<TAB>word2<TAB>score", lineno + 1));
            if fields.len() != 3 {
                return Err(bad());
            }
            let score: f64 = fields[2].trim().parse().map_err(|_| bad())?;
            pairs.push((fields[0].trim().to_lowercase(), fields[1].trim().to_lowercase(), score));
        }
        Self::new(name, pairs)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn pairs(&self) -> &[(String, String, f64)] {
        &self.pairs
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub benchmark: String,
    #[serde(rename = "rho")]
    pub spearman_rho: f64,
    pub pairs_used: usize,
    pub pairs_skipped_oov: usize,
}

/// Fractional ranks starting at 1; tied values share the mean of their positions.
pub fn fractional_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Spearman rank correlation.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::dim(format!("lengths differ: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 observations, got {}", x.len())));
    }
    if let Some(v) = x.iter().chain(y).find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("correlation input ({v})")));
    }
    let constant = |s: &[f64]| s.iter().all(|v| *v == s[0]);
    if constant(x) || constant(y) {
        return Err(Error::UndefinedCorrelation("a sequence is constant".into()));
    }
    Ok(pearson(&fractional_ranks(x), &fractional_ranks(y)))
}

fn cosine(embedding: &DMatrix<f64>, i: usize, j: usize, norms: &[f64]) -> f64 {
    let (a, b) = (embedding.row(i), embedding.row(j));
    if a == b {
        return 1.0;
    }
    (a.dot(&b) / (norms[i] * norms[j])).clamp(-1.0, 1.0)
}

fn row_norms(embedding: &DMatrix<f64>) -> Vec<f64> {
    embedding.row_iter().map(|r| r.norm()).collect()
}

fn check_rows<L: Lexicon + ?Sized>(embedding: &DMatrix<f64>, lexicon: &L) -> Result<()> {
    if embedding.nrows() != lexicon.len() {
        return Err(Error::dim(format!(
            "embedding has {} rows but the vocabulary has {} tokens",
            embedding.nrows(),
            lexicon.len()
        )));
    }
    Ok(())
}

/// Spearman correlation between row cosines and human scores.
///
/// Pairs with a word missing from the vocabulary, or whose row is all zero,
/// are skipped and counted in `pairs_skipped_oov`.
pub fn evaluate_similarity<L: Lexicon + ?Sized>(
    embedding: &DMatrix<f64>,
    lexicon: &L,
    benchmark: &SimilarityBenchmark,
) -> Result<EvalResult> {
    check_rows(embedding, lexicon)?;
    let norms = row_norms(embedding);
    let usable = |w: &str| lexicon.index_of(w).filter(|&i| norms[i] > 0.0);
    let mut sims = Vec::new();
    let mut human = Vec::new();
    let mut skipped = 0;
    for (a, b, score) in &benchmark.pairs {
        match (usable(a), usable(b)) {
            (Some(i), Some(j)) => {
                sims.push(cosine(embedding, i, j, &norms));
                human.push(*score);
            }
            _ => skipped += 1,
        }
    }
    if sims.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "only {} of {} pairs of {} are in the vocabulary",
            sims.len(),
            benchmark.pairs.len(),
            benchmark.name
        )));
    }
    Ok(EvalResult {
        benchmark: benchmark.name.clone(),
        spearman_rho: spearman(&sims, &human)?,
        pairs_used: sims.len(),
        pairs_skipped_oov: skipped,
    })
}

/// The `top` tokens closest to `query` by cosine, excluding the query.
/// Ties go to the token with the smaller vocabulary index; zero rows are
/// never returned.
pub fn nearest_neighbors<L: Lexicon + ?Sized>(
    embedding: &DMatrix<f64>,
    lexicon: &L,
    query: &str,
    top: usize,
) -> Result<Vec<(String, f64)>> {
    check_rows(embedding, lexicon)?;
    let q = lexicon.index_of(query).ok_or_else(|| Error::OutOfVocabulary(query.to_string()))?;
    let norms = row_norms(embedding);
    if norms[q] == 0.0 {
        return Err(Error::Domain(format!("`{query}` has an all-zero vector")));
    }
    let mut scored: Vec<(usize, f64)> = (0..embedding.nrows())
        .filter(|&i| i != q && norms[i] > 0.0)
        .map(|i| (i, cosine(embedding, q, i, &norms)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored
        .into_iter()
        .take(top)
        .map(|(i, c)| (lexicon.token(i).to_string(), c))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub grid: Vec<usize>,
    pub rho_curve: Vec<f64>,
    pub k_plus: usize,
}

impl GridSearchResult {
    /// Argmax of `rho_curve`, smallest k on ties.
    pub fn from_curve(grid: Vec<usize>, rho_curve: Vec<f64>) -> Option<Self> {
        let mut best: Option<(usize, f64)> = None;
        for (&k, &rho) in grid.iter().zip(&rho_curve) {
            if best.map_or(true, |(_, b)| rho > b) {
                best = Some((k, rho));
            }
        }
        best.map(|(k_plus, _)| GridSearchResult { grid, rho_curve, k_plus })
    }

    pub fn rho_at(&self, k: usize) -> Option<f64> {
        self.grid.iter().position(|&g| g == k).map(|i| self.rho_curve[i])
    }

    pub fn max_rho(&self) -> f64 {
        self.rho_at(self.k_plus).expect("k_plus is on the grid")
    }
}

/// Scores the oracle matrix at every grid point and returns the best k.
pub fn oracle_grid_search<L: Lexicon + Sync + ?Sized>(
    decomp: &SpectralDecomposition,
    lexicon: &L,
    benchmark: &SimilarityBenchmark,
    grid: &Grid,
    alpha_exponent: f64,
) -> Result<GridSearchResult> {
    let points = grid.checked_points(decomp.rank())?;
    let rho_curve = points
        .par_iter()
        .map(|&k| {
            let x = oracle_matrix(decomp, &OracleParams::new(alpha_exponent, k))?;
            Ok(evaluate_similarity(&x, lexicon, benchmark)?.spearman_rho)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(GridSearchResult::from_curve(points, rho_curve).expect("grid is non-empty"))
}

/// Word vectors with their tokens, as read from or written to the word2vec
/// text format.
#[derive(Clone, Debug, PartialEq)]
pub struct WordVectors {
    words: Vec<String>,
    index: HashMap<String, usize>,
    vectors: DMatrix<f64>,
}

impl WordVectors {
    pub fn new(words: Vec<String>, vectors: DMatrix<f64>) -> Result<Self> {
        if words.len() != vectors.nrows() {
            return Err(Error::dim(format!("{} words but {} vectors", words.len(), vectors.nrows())));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::format(format!("duplicate word `{w}`")));
            }
        }
        Ok(WordVectors { words, index, vectors })
    }

    pub fn from_vocabulary(vocab: &Vocabulary, vectors: DMatrix<f64>) -> Result<Self> {
        Self::new(vocab.entries().iter().map(|(w, _)| w.clone()).collect(), vectors)
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    /// Header `n k`, then one `word v₁ … v_k` line per row with six decimals.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.words.len(), self.dim())?;
        for (w, row) in self.words.iter().zip(self.vectors.row_iter()) {
            write!(out, "{w}")?;
            for v in row.iter() {
                write!(out, " {v:.6}")?;
            }
            writeln!(out)?;
        }
        out.flush()
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| Error::format("empty vectors file"))??;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|f| f.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::format(format!("bad vectors header `{header}`")))?;
        let [n, k] = dims[..] else {
            return Err(Error::format(format!("bad vectors header `{header}`")));
        };
        let mut words = Vec::with_capacity(n);
        let mut data = Vec::with_capacity(n * k);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let word = fields.next().expect("non-empty line");
            let before = data.len();
            for f in fields {
                data.push(f.parse::<f64>().map_err(|_| Error::format(format!("bad value `{f}` for `{word}`")))?);
            }
            if data.len() - before != k {
                return Err(Error::format(format!("`{word}` has {} values, expected {k}", data.len() - before)));
            }
            words.push(word.to_string());
        }
        if words.len() != n {
            return Err(Error::format(format!("header announces {n} words, found {}", words.len())));
        }
        Self::new(words, DMatrix::from_row_slice(n, k, &data))
    }
}

impl Lexicon for WordVectors {
    fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    fn token(&self, i: usize) -> &str {
        &self.words[i]
    }

    fn len(&self) -> usize {
        self.words.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn words(n: usize) -> WordVectors {
        let vectors = DMatrix::from_fn(n, 2, |i, j| ((i * 7 + j * 3) % 5) as f64 - 1.5);
        WordVectors::new((0..n).map(|i| format!("w{i}")).collect(), vectors).unwrap()
    }

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_relative_eq!(spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap(), 0.94868, epsilon = 1e-5);
        assert_eq!(fractional_ranks(&[1.0, 2.0, 2.0, 3.0]), vec![1.0, 2.5, 2.5, 4.0]);
    }

    #[test]
    fn spearman_errors() {
        assert!(matches!(spearman(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::UndefinedCorrelation(_))));
        assert!(matches!(spearman(&[1.0], &[1.0]), Err(Error::InsufficientData(_))));
        assert!(matches!(spearman(&[1.0, 2.0], &[1.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn benchmark_loader() {
        let text = "# header\n# Word 1\tWord 2\tHuman\nLove\tsex\t6.77\n\ntiger\tCat\t7.35\n";
        let b = SimilarityBenchmark::read_tsv("ws", text.as_bytes()).unwrap();
        assert_eq!(b.pairs()[0], ("love".into(), "sex".into(), 6.77));
        assert_eq!(b.pairs()[1], ("tiger".into(), "cat".into(), 7.35));
        assert!(SimilarityBenchmark::read_tsv("ws", "a\tb\n".as_bytes()).is_err());
        assert!(SimilarityBenchmark::read_tsv("ws", "a\tb\tx\n".as_bytes()).is_err());
        assert!(SimilarityBenchmark::read_tsv("ws", "# nothing\n".as_bytes()).is_err());
        assert!(SimilarityBenchmark::new("ws", vec![("a".into(), "b".into(), f64::NAN)]).is_err());
    }

    #[test]
    fn identical_rows_give_constant_similarities() {
        let wv = WordVectors::new(
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            DMatrix::from_row_slice(4, 2, &[0.3, 0.7, 0.3, 0.7, 1.1, -0.2, 1.1, -0.2]),
        )
        .unwrap();
        let bench = SimilarityBenchmark::new("t", vec![("a".into(), "b".into(), 1.0), ("c".into(), "d".into(), 2.0)]).unwrap();
        assert!(matches!(evaluate_similarity(wv.vectors(), &wv, &bench), Err(Error::UndefinedCorrelation(_))));
    }

    #[test]
    fn orthogonal_rows_and_oov_accounting() {
        let wv = WordVectors::new(
            vec!["x".into(), "y".into(), "z".into(), "zero".into()],
            DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0]),
        )
        .unwrap();
        let bench = SimilarityBenchmark::new(
            "t",
            vec![
                ("x".into(), "y".into(), 0.5),
                ("x".into(), "z".into(), 9.0),
                ("x".into(), "missing".into(), 3.0),
                ("zero".into(), "x".into(), 3.0),
            ],
        )
        .unwrap();
        let r = evaluate_similarity(wv.vectors(), &wv, &bench).unwrap();
        assert_eq!(r.spearman_rho, 1.0);
        assert_eq!((r.pairs_used, r.pairs_skipped_oov), (2, 2));
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["rho"], 1.0);
        let tiny = SimilarityBenchmark::new("t", vec![("x".into(), "y".into(), 0.5)]).unwrap();
        assert!(matches!(evaluate_similarity(wv.vectors(), &wv, &tiny), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn scores_equal_to_cosines_give_rho_one() {
        let wv = words(12);
        let norms = row_norms(wv.vectors());
        let mut pairs = Vec::new();
        for i in 0..12 {
            for j in (i + 1)..12 {
                if wv.vectors().row(i) != wv.vectors().row(j) {
                    pairs.push((format!("w{i}"), format!("w{j}"), cosine(wv.vectors(), i, j, &norms)));
                }
            }
        }
        let bench = SimilarityBenchmark::new("self", pairs).unwrap();
        assert_relative_eq!(evaluate_similarity(wv.vectors(), &wv, &bench).unwrap().spearman_rho, 1.0, epsilon = 1e-12);
        let scaled = wv.vectors() * 3.5;
        assert_relative_eq!(
            evaluate_similarity(&scaled, &wv, &bench).unwrap().spearman_rho,
            evaluate_similarity(wv.vectors(), &wv, &bench).unwrap().spearman_rho,
            epsilon = 1e-12
        );
    }

    #[test]
    fn neighbors_match_brute_force() {
        let wv = WordVectors::new(
            (0..5).map(|i| format!("t{i}")).collect(),
            DMatrix::from_row_slice(5, 3, &[1.0, 0.0, 0.2, 0.9, 0.1, 0.3, -1.0, 0.5, 0.0, 0.0, 1.0, 1.0, 2.0, 0.0, 0.4]),
        )
        .unwrap();
        let got = nearest_neighbors(wv.vectors(), &wv, "t0", 4).unwrap();
        let q = wv.vectors().row(0);
        let mut brute: Vec<(String, f64)> = (1..5)
            .map(|i| {
                let r = wv.vectors().row(i);
                (format!("t{i}"), q.dot(&r) / (q.norm() * r.norm()))
            })
            .collect();
        brute.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        assert_eq!(got.len(), 4);
        for (g, b) in got.iter().zip(&brute) {
            assert_eq!(g.0, b.0);
            assert_relative_eq!(g.1, b.1, epsilon = 1e-12);
        }
        // t4 = 2·t0, so it is first with cosine exactly 1.
        assert_eq!(got[0], ("t4".to_string(), 1.0));
        assert!(nearest_neighbors(wv.vectors(), &wv, "t0", 0).unwrap().is_empty());
        assert!(matches!(nearest_neighbors(wv.vectors(), &wv, "nope", 3), Err(Error::OutOfVocabulary(t)) if t == "nope"));
    }

    #[test]
    fn neighbor_ties_follow_vocabulary_order() {
        let wv = WordVectors::new(
            vec!["q".into(), "b".into(), "a".into()],
            DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, -1.0]),
        )
        .unwrap();
        let got = nearest_neighbors(wv.vectors(), &wv, "q", 2).unwrap();
        assert_eq!(got[0].0, "b");
        assert_eq!(got[1].0, "a");
    }

    #[test]
    fn grid_argmax_and_ties() {
        let r = GridSearchResult::from_curve(vec![100, 200, 300], vec![0.1, 0.5, 0.2]).unwrap();
        assert_eq!(r.k_plus, 200);
        assert_eq!(r.max_rho(), 0.5);
        let flat = GridSearchResult::from_curve(vec![20, 30, 40], vec![0.3; 3]).unwrap();
        assert_eq!(flat.k_plus, 20);
        let v = serde_json::to_value(&flat).unwrap();
        assert!(v.get("grid").is_some() && v.get("rho_curve").is_some() && v.get("k_plus").is_some());
    }

    #[test]
    fn word2vec_text_round_trip() {
        let wv = WordVectors::new(vec!["a".into(), "b".into()], DMatrix::from_row_slice(2, 3, &[0.5, -1.25, 2.0, 0.0, 1.0 / 3.0, 7.0])).unwrap();
        let mut buf = Vec::new();
        wv.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "2 3\na 0.500000 -1.250000 2.000000\nb 0.000000 0.333333 7.000000\n");
        let back = WordVectors::read_text(buf.as_slice()).unwrap();
        assert_eq!(back.words, wv.words);
        assert!((back.vectors() - wv.vectors()).amax() <= 5e-7);
        assert!(WordVectors::read_text("2 3\na 1 2 3\n".as_bytes()).is_err());
        assert!(WordVectors::read_text("1 3\na 1 2\n".as_bytes()).is_err());
        assert!(WordVectors::read_text("x\n".as_bytes()).is_err());
    }

    fn brute_spearman(x: &[f64], y: &[f64]) -> f64 {
        let rank = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .map(|a| {
                    let less = v.iter().filter(|b| *b < a).count() as f64;
                    let equal = v.iter().filter(|b| *b == a).count() as f64;
                    less + (equal + 1.0) / 2.0
                })
                .collect()
        };
        let (rx, ry) = (rank(x), rank(y));
        let n = x.len() as f64;
        let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
        let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
        cov / (vx * vy).sqrt()
    }

    proptest! {
        #[test]
        fn spearman_matches_brute_force(pairs in proptest::collection::vec((0u8..6, -50i32..50), 3..40)) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64 / 7.0).collect();
            prop_assume!(x.iter().any(|v| *v != x[0]) && y.iter().any(|v| *v != y[0]));
            let got = spearman(&x, &y).unwrap();
            prop_assert!((got - brute_spearman(&x, &y)).abs() <= 1e-12);
        }

        #[test]
        fn spearman_monotone_invariance(x in proptest::collection::vec(0.01f64..100.0, 3..40), y in proptest::collection::vec(0.01f64..100.0, 3..40)) {
            let n = x.len().min(y.len());
            let (x, y) = (&x[..n], &y[..n]);
            prop_assume!(x.iter().any(|v| *v != x[0]) && y.iter().any(|v| *v != y[0]));
            let base = spearman(x, y).unwrap();
            let affine: Vec<f64> = x.iter().map(|v| 2.0 * v + 7.0).collect();
            let cubed: Vec<f64> = x.iter().map(|v| v.powi(3)).collect();
            prop_assert!((spearman(&affine, y).unwrap() - base).abs() <= 1e-12);
            prop_assert!((spearman(&cubed, y).unwrap() - base).abs() <= 1e-12);
            let y_cubed: Vec<f64> = y.iter().map(|v| v.powi(3)).collect();
            prop_assert!((spearman(x, &y_cubed).unwrap() - base).abs() <= 1e-12);
        }

        #[test]
        fn neighbors_are_deterministic(seed in 0u64..1000) {
            let n = 20;
            let vectors = DMatrix::from_fn(n, 3, |i, j| (((i as u64 * 31 + j as u64 * 17 + seed) % 7) as f64) - 3.0);
            let wv = WordVectors::new((0..n).map(|i| format!("w{i}")).collect(), vectors).unwrap();
            prop_assume!(wv.vectors().row(0).norm() > 0.0);
            let a = nearest_neighbors(wv.vectors(), &wv, "w0", 10).unwrap();
            let b = nearest_neighbors(wv.vectors(), &wv, "w0", 10).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
