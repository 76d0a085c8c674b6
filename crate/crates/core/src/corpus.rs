//! Corpus ingestion: tokenization, vocabulary construction, the two-way
//! corpus split, and duplicate-sentence frequency distortion.
//!
//! Tokens are interned: a [`TokenizedCorpus`] stores each distinct token
//! string once and represents sentences as id sequences. Corpora derived by
//! [`split_corpus`] or [`distort_corpus`] share the token table of their
//! source.

use std::collections::HashMap;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sentences of lowercase, whitespace-free tokens.
#[derive(Clone, Default)]
pub struct TokenizedCorpus {
    types: Arc<Vec<String>>,
    sentences: Vec<Vec<u32>>,
}

/// Borrowed view of one sentence.
#[derive(Clone, Copy)]
pub struct SentenceRef<'a> {
    ids: &'a [u32],
    types: &'a [String],
}

impl<'a> SentenceRef<'a> {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &'a str> + 'a {
        let types = self.types;
        self.ids.iter().map(move |&id| types[id as usize].as_str())
    }

    pub fn to_vec(&self) -> Vec<String> {
        self.tokens().map(str::to_owned).collect()
    }
}

impl fmt::Debug for SentenceRef<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.tokens()).finish()
    }
}

impl TokenizedCorpus {
    /// Builds a corpus from explicit token lists.
    ///
    /// Tokens must be non-empty and free of whitespace. Sentences may not be
    /// empty.
    pub fn from_sentences<S, T>(sentences: S) -> Result<Self>
    where
        S: IntoIterator<Item = T>,
        T: IntoIterator,
        T::Item: AsRef<str>,
    {
        let mut interner = Interner::default();
        let mut out = Vec::new();
        for sentence in sentences {
            let mut ids = Vec::new();
            for token in sentence {
                let token = token.as_ref();
                if token.is_empty() || token.chars().any(char::is_whitespace) {
                    return Err(Error::param(format!("invalid token {token:?}")));
                }
                ids.push(interner.intern(token));
            }
            if ids.is_empty() {
                return Err(Error::param("empty sentence"));
            }
            out.push(ids);
        }
        Ok(TokenizedCorpus {
            types: Arc::new(interner.types),
            sentences: out,
        })
    }

    /// The number of sentences (N).
    pub fn sentence_count(&self) -> usize {
        self.sentences.len()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    pub fn sentence(&self, i: usize) -> SentenceRef<'_> {
        SentenceRef {
            ids: &self.sentences[i],
            types: &self.types,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = SentenceRef<'_>> + '_ {
        self.sentences.iter().map(move |ids| SentenceRef {
            ids,
            types: &self.types,
        })
    }

    pub fn to_vecs(&self) -> Vec<Vec<String>> {
        self.iter().map(|s| s.to_vec()).collect()
    }

    /// Distinct token strings, indexed by the ids used in `sentence_ids`.
    pub fn token_types(&self) -> &[String] {
        &self.types
    }

    pub(crate) fn sentence_ids(&self) -> &[Vec<u32>] {
        &self.sentences
    }

    fn with_sentences(&self, sentences: Vec<Vec<u32>>) -> Self {
        TokenizedCorpus {
            types: Arc::clone(&self.types),
            sentences,
        }
    }

    /// Writes one sentence per line, tokens separated by a single space.
    pub fn write_text<W: Write>(&self, mut out: W) -> io::Result<()> {
        for sentence in self.iter() {
            let mut first = true;
            for token in sentence.tokens() {
                if !first {
                    out.write_all(b" ")?;
                }
                out.write_all(token.as_bytes())?;
                first = false;
            }
            out.write_all(b"\n")?;
        }
        out.flush()
    }
}

impl PartialEq for TokenizedCorpus {
    fn eq(&self, other: &Self) -> bool {
        if Arc::ptr_eq(&self.types, &other.types) {
            return self.sentences == other.sentences;
        }
        self.sentence_count() == other.sentence_count()
            && self
                .iter()
                .zip(other.iter())
                .all(|(a, b)| a.len() == b.len() && a.tokens().eq(b.tokens()))
    }
}

impl fmt::Debug for TokenizedCorpus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TokenizedCorpus")
            .field("sentence_count", &self.sentence_count())
            .field("token_count", &self.token_count())
            .finish()
    }
}

#[derive(Default)]
struct Interner {
    ids: HashMap<String, u32>,
    types: Vec<String>,
}

impl Interner {
    fn intern(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.ids.get(token) {
            return id;
        }
        let id = u32::try_from(self.types.len()).expect("more than u32::MAX distinct tokens");
        self.ids.insert(token.to_owned(), id);
        self.types.push(token.to_owned());
        id
    }
}

/// Tokenizes UTF-8 text with one sentence per line.
///
/// Each line is lowercased and split on Unicode whitespace; surrounding ASCII
/// punctuation is stripped from every token. Lines left without tokens are
/// dropped.
pub fn tokenize_corpus(raw: &[u8]) -> Result<TokenizedCorpus> {
    let text = std::str::from_utf8(raw).map_err(|e| Error::Decode {
        offset: e.valid_up_to(),
    })?;
    let mut interner = Interner::default();
    let mut sentences = Vec::new();
    for line in text.lines() {
        let lowered = line.to_lowercase();
        let ids: Vec<u32> = lowered
            .split_whitespace()
            .map(|t| t.trim_matches(|c: char| c.is_ascii_punctuation()))
            .filter(|t| !t.is_empty())
            .map(|t| interner.intern(t))
            .collect();
        if !ids.is_empty() {
            sentences.push(ids);
        }
    }
    Ok(TokenizedCorpus {
        types: Arc::new(interner.types),
        sentences,
    })
}

/// Rank-ordered token list with counts.
///
/// Entries are sorted by count descending, ties lexicographically ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    entries: Vec<(String, u64)>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from entries that already satisfy the ordering
    /// invariant.
    pub fn from_entries(entries: Vec<(String, u64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyVocabulary { min_count: 1 });
        }
        for pair in entries.windows(2) {
            let ((ta, ca), (tb, cb)) = (&pair[0], &pair[1]);
            if ca < cb || (ca == cb && ta >= tb) {
                return Err(Error::format(format!(
                    "vocabulary entries out of order at {ta:?}/{tb:?}"
                )));
            }
        }
        let mut index = HashMap::with_capacity(entries.len());
        for (i, (token, count)) in entries.iter().enumerate() {
            if *count == 0 {
                return Err(Error::format(format!("token {token:?} has zero count")));
            }
            if token.is_empty() || token.chars().any(char::is_whitespace) {
                return Err(Error::format(format!("invalid token {token:?}")));
            }
            index.insert(token.clone(), i);
        }
        Ok(Vocabulary { entries, index })
    }

    /// n, the number of retained tokens.
    pub fn size(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(String, u64)] {
        &self.entries
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, i: usize) -> &str {
        &self.entries[i].0
    }

    pub fn count(&self, i: usize) -> u64 {
        self.entries[i].1
    }

    /// Writes `token<TAB>count` lines in rank order.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (token, count) in &self.entries {
            writeln!(out, "{token}\t{count}")?;
        }
        out.flush()
    }

    pub fn read_tsv<R: BufRead>(input: R) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let (token, count) = line
                .split_once('\t')
                .ok_or_else(|| Error::format(format!("vocabulary line {}: missing tab", lineno + 1)))?;
            let count: u64 = count.parse().map_err(|_| {
                Error::format(format!("vocabulary line {}: bad count {count:?}", lineno + 1))
            })?;
            entries.push((token.to_owned(), count));
        }
        Self::from_entries(entries)
    }
}

/// Keeps the `max_vocab` most frequent tokens whose count is at least
/// `min_count`.
pub fn build_vocabulary(corpus: &TokenizedCorpus, max_vocab: usize, min_count: u64) -> Result<Vocabulary> {
    if max_vocab == 0 {
        return Err(Error::param("max_vocab must be at least 1"));
    }
    let mut counts = vec![0u64; corpus.token_types().len()];
    for ids in corpus.sentence_ids() {
        for &id in ids {
            counts[id as usize] += 1;
        }
    }
    let mut entries: Vec<(String, u64)> = corpus
        .token_types()
        .iter()
        .zip(counts)
        .filter(|&(_, c)| c >= min_count.max(1))
        .map(|(t, c)| (t.clone(), c))
        .collect();
    if entries.is_empty() {
        return Err(Error::EmptyVocabulary { min_count });
    }
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    entries.truncate(max_vocab);
    Vocabulary::from_entries(entries)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Even-indexed sentences to the first part, odd-indexed to the second.
    #[default]
    Interleave,
    /// The first ceil(N/2) sentences to the first part.
    Halves,
}

impl std::str::FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interleave" => Ok(SplitMode::Interleave),
            "halves" => Ok(SplitMode::Halves),
            other => Err(Error::param(format!("unknown split mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSplit {
    pub part_a: TokenizedCorpus,
    pub part_b: TokenizedCorpus,
    pub mode: SplitMode,
}

/// Divides a corpus into two disjoint parts whose sizes differ by at most one.
pub fn split_corpus(corpus: &TokenizedCorpus, mode: SplitMode) -> Result<CorpusSplit> {
    let n = corpus.sentence_count();
    if n < 2 {
        return Err(Error::CorpusTooSmall { found: n, needed: 2 });
    }
    let (a, b) = match mode {
        SplitMode::Interleave => {
            let mut a = Vec::with_capacity(n.div_ceil(2));
            let mut b = Vec::with_capacity(n / 2);
            for (i, s) in corpus.sentence_ids().iter().enumerate() {
                if i % 2 == 0 {
                    a.push(s.clone());
                } else {
                    b.push(s.clone());
                }
            }
            (a, b)
        }
        SplitMode::Halves => {
            let (a, b) = corpus.sentence_ids().split_at(n.div_ceil(2));
            (a.to_vec(), b.to_vec())
        }
    };
    Ok(CorpusSplit {
        part_a: corpus.with_sentences(a),
        part_b: corpus.with_sentences(b),
        mode,
    })
}

/// Parameters of the duplicate-sentence distortion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionSpec {
    /// Duplicates added, as a fraction of N. Must lie in (0, 1].
    pub rate: f64,
    /// Only sentences strictly longer than this are eligible.
    pub min_sentence_len: usize,
    pub seed: u64,
}

impl DistortionSpec {
    pub fn new(rate: f64, seed: u64) -> Self {
        DistortionSpec {
            rate,
            min_sentence_len: 20,
            seed,
        }
    }

    /// round(rate * N)
    pub fn duplicate_count(&self, sentence_count: usize) -> usize {
        (self.rate * sentence_count as f64).round() as usize
    }
}

/// Picks one eligible sentence at random, appends round(rate * N) copies of
/// it and shuffles the result.
pub fn distort_corpus(corpus: &TokenizedCorpus, spec: &DistortionSpec) -> Result<TokenizedCorpus> {
    if !(spec.rate > 0.0 && spec.rate <= 1.0) {
        return Err(Error::param(format!("distortion rate {} not in (0, 1]", spec.rate)));
    }
    let eligible: Vec<usize> = corpus
        .sentence_ids()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.len() > spec.min_sentence_len)
        .map(|(i, _)| i)
        .collect();
    if eligible.is_empty() {
        return Err(Error::NoCandidate {
            min_len: spec.min_sentence_len,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let chosen = eligible[rng.gen_range(0..eligible.len())];
    let copies = spec.duplicate_count(corpus.sentence_count());

    let mut sentences = corpus.sentence_ids().to_vec();
    let duplicate = sentences[chosen].clone();
    sentences.extend(std::iter::repeat(duplicate).take(copies));
    sentences.shuffle(&mut rng);
    Ok(corpus.with_sentences(sentences))
}
