//! Corpus ingestion: text normalization, tercet files, prose/verse line files,
//! and seeded train/validation/test splits.
//!
//! A tercet corpus is UTF-8 text with three lines per tercet and tercets
//! separated by blank lines. Prose and verse corpora carry one sentence (or
//! one verse) per line.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unicode_general_category::{get_general_category, GeneralCategory};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// What a corpus file contains, which decides how it is parsed and encoded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusKind {
    Prose,
    Verse,
    Tercets,
}

impl std::str::FromStr for CorpusKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prose" => Ok(CorpusKind::Prose),
            "verse" => Ok(CorpusKind::Verse),
            "tercets" => Ok(CorpusKind::Tercets),
            other => Err(Error::InvalidConfig(format!(
                "unknown corpus kind `{other}` (expected prose, verse or tercets)"
            ))),
        }
    }
}

/// A line-oriented corpus (prose sentences or standalone verses).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawCorpus {
    kind: CorpusKind,
    documents: Vec<String>,
}

impl RawCorpus {
    /// Builds a corpus from text blocks, dropping blocks that are blank.
    pub fn new(kind: CorpusKind, documents: impl IntoIterator<Item = String>) -> Result<Self> {
        let documents: Vec<String> = documents
            .into_iter()
            .map(|d| d.trim().to_string())
            .filter(|d| !d.is_empty())
            .collect();
        if documents.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Ok(RawCorpus { kind, documents })
    }

    /// One document per non-blank line.
    pub fn from_lines(kind: CorpusKind, text: &str) -> Result<Self> {
        Self::new(kind, text.lines().map(str::to_string))
    }

    pub fn read_lines(kind: CorpusKind, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_lines(kind, &text)
    }

    pub fn kind(&self) -> CorpusKind {
        self.kind
    }

    pub fn documents(&self) -> &[String] {
        &self.documents
    }

    pub fn into_documents(self) -> Vec<String> {
        self.documents
    }
}

fn is_apostrophe(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}' | '\u{02BC}')
}

fn is_punctuation(c: char) -> bool {
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
    )
}

/// Lowercases, strips punctuation and collapses whitespace.
///
/// Apostrophes touching a letter mark elision (`'l`, `s'apparve`, `tant'`)
/// and are kept as ASCII `'`; every other punctuation character becomes a
/// word break. Accented letters are kept (composed to NFC).
pub fn normalize(text: &str) -> String {
    let chars: Vec<char> = text.nfc().flat_map(char::to_lowercase).collect();
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for (i, &c) in chars.iter().enumerate() {
        let keep = if is_apostrophe(c) {
            let before = i.checked_sub(1).map(|j| chars[j].is_alphabetic());
            let after = chars.get(i + 1).map(|c| c.is_alphabetic());
            before == Some(true) || after == Some(true)
        } else {
            !c.is_whitespace() && !is_punctuation(c)
        };
        if !keep {
            pending_space = true;
            continue;
        }
        if pending_space && !out.is_empty() {
            out.push(' ');
        }
        pending_space = false;
        out.push(if is_apostrophe(c) { '\'' } else { c });
    }
    out
}

/// Three verses of raw (trimmed, not normalized) text.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TercetText {
    verses: [String; 3],
}

impl TercetText {
    /// Fails if any verse is empty after normalization.
    pub fn new(verses: [String; 3]) -> Result<Self> {
        let verses = verses.map(|v| v.trim().to_string());
        for v in &verses {
            if normalize(v).is_empty() {
                return Err(Error::EmptyVerse { line: 0 });
            }
        }
        Ok(TercetText { verses })
    }

    pub fn verses(&self) -> &[String; 3] {
        &self.verses
    }

    pub fn normalized(&self) -> [String; 3] {
        self.verses.clone().map(|v| normalize(&v))
    }
}

impl fmt::Display for TercetText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\n{}\n{}",
            self.verses[0], self.verses[1], self.verses[2]
        )
    }
}

/// A run of consecutive non-blank lines, with the 1-based number of its first line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub first_line: usize,
    pub lines: Vec<String>,
}

/// Splits text into blank-line-separated blocks of trimmed lines.
pub fn parse_blocks(text: &str) -> Vec<Block> {
    let mut blocks = Vec::new();
    let mut current: Option<Block> = None;
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            blocks.extend(current.take());
            continue;
        }
        current
            .get_or_insert_with(|| Block {
                first_line: idx + 1,
                lines: Vec::new(),
            })
            .lines
            .push(line.to_string());
    }
    blocks.extend(current);
    blocks
}

/// Parses a tercet corpus. Every block must hold exactly three non-empty verses.
pub fn parse_tercets(text: &str) -> Result<Vec<TercetText>> {
    parse_blocks(text)
        .into_iter()
        .map(|block| {
            let found = block.lines.len();
            if let Some(offset) = block.lines.iter().position(|l| normalize(l).is_empty()) {
                return Err(Error::EmptyVerse {
                    line: block.first_line + offset,
                });
            }
            let lines: [String; 3] =
                block
                    .lines
                    .try_into()
                    .map_err(|_| Error::BlockNotThreeLines {
                        line: block.first_line,
                        found,
                    })?;
            TercetText::new(lines)
        })
        .collect()
}

pub fn read_tercets(path: impl AsRef<Path>) -> Result<Vec<TercetText>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tercets(&text)
}

/// Inverse of [`parse_tercets`] on well-formed corpora.
pub fn serialize_tercets(tercets: &[TercetText]) -> String {
    let mut out = String::new();
    for (i, t) in tercets.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&t.to_string());
        out.push('\n');
    }
    out
}

/// Train/validation/test partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

impl<T> Split<T> {
    pub fn map<U>(self, mut f: impl FnMut(T) -> U) -> Split<U> {
        Split {
            train: self.train.into_iter().map(&mut f).collect(),
            val: self.val.into_iter().map(&mut f).collect(),
            test: self.test.into_iter().map(&mut f).collect(),
        }
    }

    pub fn sizes(&self) -> [usize; 3] {
        [self.train.len(), self.val.len(), self.test.len()]
    }
}

/// Partition sizes by the largest-remainder rule. Ties in the remainder go to
/// the earlier part.
pub fn split_sizes(n: usize, fractions: [f64; 3]) -> Result<[usize; 3]> {
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| !(0.0..=1.0 + 1e-9).contains(f)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidFractions(fractions));
    }
    let quotas = fractions.map(|f| f * n as f64);
    // the epsilon absorbs products like 0.7 * 10 = 6.999999...
    let mut sizes = quotas.map(|q| (q + 1e-9).floor() as usize);
    let assigned: usize = sizes.iter().sum();
    let mut order = [0usize, 1, 2];
    let rem = |i: usize| quotas[i] - sizes[i] as f64;
    order.sort_by(|&a, &b| rem(b).total_cmp(&rem(a)).then(a.cmp(&b)));
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    Ok(sizes)
}

/// Seeded uniform shuffle followed by a largest-remainder partition.
pub fn make_splits<T>(items: Vec<T>, seed: u64, fractions: [f64; 3]) -> Result<Split<T>> {
    if items.len() < 3 {
        return Err(Error::DegenerateSplit { count: items.len() });
    }
    let [n_train, n_val, _] = split_sizes(items.len(), fractions)?;
    let mut items = items;
    items.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut rest = items.split_off(n_train);
    let test = rest.split_off(n_val);
    Ok(Split {
        train: items,
        val: rest,
        test,
    })
}

/// Record of how a split was drawn, written next to the data it describes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub fractions: [f64; 3],
    pub counts: SplitCounts,
    pub hashes: SplitHashes,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// SHA-256 (hex) of each part's items, each rendered with `Display` and
/// followed by a blank line.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitHashes {
    pub train: String,
    pub val: String,
    pub test: String,
}

fn hash_items<T: fmt::Display>(items: &[T]) -> String {
    let mut hasher = Sha256::new();
    for item in items {
        hasher.update(item.to_string().as_bytes());
        hasher.update(b"\n\n");
    }
    hex::encode(hasher.finalize())
}

impl SplitManifest {
    pub fn new<T: fmt::Display>(seed: u64, fractions: [f64; 3], split: &Split<T>) -> Self {
        SplitManifest {
            seed,
            fractions,
            counts: SplitCounts {
                train: split.train.len(),
                val: split.val.len(),
                test: split.test.len(),
            },
            hashes: SplitHashes {
                train: hash_items(&split.train),
                val: hash_items(&split.val),
                test: hash_items(&split.test),
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize("Nel mezzo del cammin,"), "nel mezzo del cammin");
        assert_eq!(normalize("che 'l s'apparve"), "che 'l s'apparve");
        assert_eq!(normalize(""), "");
        assert_eq!(
            normalize("  Tant’ è amara  che poco è più morte;"),
            "tant' è amara che poco è più morte"
        );
        assert_eq!(normalize("«Ahi quanto a dir!»"), "ahi quanto a dir");
        assert_eq!(normalize("selva--oscura"), "selva oscura");
        assert_eq!(normalize("a ' b"), "a b");
    }

    #[test]
    fn normalize_composes_accents() {
        assert_eq!(normalize("pie\u{300}"), "piè");
        assert_eq!(normalize("PERCHÉ"), "perché");
    }

    #[test]
    fn parse_two_blocks() {
        let text = "a b c\nd e\nf g\n\nh i\nj k\nl m\n";
        let tercets = parse_tercets(text).unwrap();
        assert_eq!(tercets.len(), 2);
        assert_eq!(tercets[1].verses()[2], "l m");
    }

    #[test]
    fn parse_rejects_four_line_block() {
        let text = "a\nb\nc\n\nd\ne\nf\ng\n";
        match parse_tercets(text) {
            Err(Error::BlockNotThreeLines { line, found }) => {
                assert_eq!(line, 5);
                assert_eq!(found, 4);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_empty_file() {
        assert!(parse_tercets("").unwrap().is_empty());
        assert!(parse_tercets("\n\n").unwrap().is_empty());
    }

    #[test]
    fn parse_rejects_punctuation_only_verse() {
        assert!(matches!(
            parse_tercets("a\n...\nc\n"),
            Err(Error::EmptyVerse { line: 2 })
        ));
    }

    #[test]
    fn raw_corpus_requires_content() {
        assert!(matches!(
            RawCorpus::from_lines(CorpusKind::Prose, "\n  \n"),
            Err(Error::EmptyCorpus)
        ));
        let c = RawCorpus::from_lines(CorpusKind::Prose, "uno\n\n due \n").unwrap();
        assert_eq!(c.documents(), ["uno", "due"]);
    }

    #[test]
    fn split_sizes_examples() {
        assert_eq!(split_sizes(10, [0.8, 0.1, 0.1]).unwrap(), [8, 1, 1]);
        assert_eq!(
            split_sizes(4711, [0.8, 0.1, 0.1]).unwrap(),
            [3769, 471, 471]
        );
        assert!(split_sizes(10, [0.5, 0.1, 0.1]).is_err());
    }

    /// Brute force: among all (a, b, c) with a + b + c = n, the one closest to
    /// the quotas in squared distance; ties resolved towards earlier parts.
    fn brute_force_sizes(n: usize, f: [f64; 3]) -> [usize; 3] {
        let mut best = [0, 0, 0];
        let mut best_cost = f64::INFINITY;
        for a in (0..=n).rev() {
            for b in (0..=n - a).rev() {
                let c = n - a - b;
                let cost: f64 = [a, b, c]
                    .iter()
                    .zip(f)
                    .map(|(&k, fi)| (k as f64 - fi * n as f64).powi(2))
                    .sum();
                if cost < best_cost - 1e-9 {
                    best_cost = cost;
                    best = [a, b, c];
                }
            }
        }
        best
    }

    #[test]
    fn split_sizes_match_brute_force() {
        let fractions = [
            [0.8, 0.1, 0.1],
            [0.6, 0.2, 0.2],
            [0.5, 0.3, 0.2],
            [0.7, 0.15, 0.15],
        ];
        for f in fractions {
            for n in 3..150 {
                assert_eq!(
                    split_sizes(n, f).unwrap(),
                    brute_force_sizes(n, f),
                    "n={n} f={f:?}"
                );
            }
        }
    }

    #[test]
    fn degenerate_split() {
        assert!(matches!(
            make_splits(vec![1, 2], 0, [0.8, 0.1, 0.1]),
            Err(Error::DegenerateSplit { count: 2 })
        ));
    }

    #[test]
    fn manifest_records_counts() {
        let split = make_splits((0..10).collect::<Vec<_>>(), 3, [0.8, 0.1, 0.1]).unwrap();
        let m = SplitManifest::new(3, [0.8, 0.1, 0.1], &split);
        assert_eq!((m.counts.train, m.counts.val, m.counts.test), (8, 1, 1));
        let back: SplitManifest = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(back, m);
    }

    fn verse_text() -> impl Strategy<Value = String> {
        "[a-zàèéìòù]{1,8}( [a-zàèéìòù]{1,8}){0,5}"
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "\\PC{0,40}") {
            let once = normalize(&s);
            prop_assert_eq!(normalize(&once), once);
        }

        #[test]
        fn tercet_round_trip(raw in prop::collection::vec([verse_text(), verse_text(), verse_text()], 0..6)) {
            let tercets: Vec<TercetText> = raw.into_iter().map(|v| TercetText::new(v).unwrap()).collect();
            let parsed = parse_tercets(&serialize_tercets(&tercets)).unwrap();
            prop_assert_eq!(parsed, tercets);
        }

        #[test]
        fn splits_are_reproducible_and_disjoint(n in 3usize..200, seed in any::<u64>()) {
            let items: Vec<usize> = (0..n).collect();
            let a = make_splits(items.clone(), seed, [0.8, 0.1, 0.1]).unwrap();
            let b = make_splits(items, seed, [0.8, 0.1, 0.1]).unwrap();
            prop_assert_eq!(&a, &b);
            let mut all: Vec<usize> = a.train.iter().chain(&a.val).chain(&a.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }
}
