//! Syllable vocabulary and token sequences.
//!
//! Index layout: the five special tokens occupy ids 0..5 in a fixed order,
//! followed by syllables sorted by descending corpus frequency (ties broken
//! lexicographically). The on-disk form is one token per line after a header
//! `#terzina-vocab<TAB>count<TAB>sha256`.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::corpus::{normalize, CorpusKind, TercetText};
use crate::error::{Error, Result};
use crate::syllabifier::Syllabifier;

pub type TokenId = u32;

const HEADER_TAG: &str = "#terzina-vocab";

/// Longest prose/verse sequence (including `<go>` and `<eot>`) fed to the model.
pub const MAX_LINE_TOKENS: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SpecialToken {
    Sep,
    Go,
    Eov,
    Eot,
    Unk,
}

impl SpecialToken {
    pub const ALL: [SpecialToken; 5] = [
        SpecialToken::Sep,
        SpecialToken::Go,
        SpecialToken::Eov,
        SpecialToken::Eot,
        SpecialToken::Unk,
    ];

    pub const fn id(self) -> TokenId {
        self as TokenId
    }

    pub const fn as_str(self) -> &'static str {
        match self {
            SpecialToken::Sep => "<sep>",
            SpecialToken::Go => "<go>",
            SpecialToken::Eov => "<eov>",
            SpecialToken::Eot => "<eot>",
            SpecialToken::Unk => "<unk>",
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn from_str(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }

    pub fn from_id(id: TokenId) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }
}

pub const SEP: TokenId = SpecialToken::Sep.id();
pub const GO: TokenId = SpecialToken::Go.id();
pub const EOV: TokenId = SpecialToken::Eov.id();
pub const EOT: TokenId = SpecialToken::Eot.id();
pub const UNK: TokenId = SpecialToken::Unk.id();

/// Whether a token id denotes a syllable for counting purposes. `<unk>`
/// replaces one unknown syllable and so counts.
pub fn is_syllable(id: TokenId) -> bool {
    id == UNK || id as usize >= SpecialToken::ALL.len()
}

/// SHA-256 of the token list; checkpoints record it to pin their vocabulary.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct VocabHash(pub [u8; 32]);

impl VocabHash {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for VocabHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VocabHash({})", self.to_hex())
    }
}

impl fmt::Display for VocabHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// A sequence of vocabulary ids.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct TokenSeq(pub Vec<TokenId>);

impl TokenSeq {
    pub fn ids(&self) -> &[TokenId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Syllable tokens in the sequence.
    pub fn syllable_count(&self) -> usize {
        self.0.iter().filter(|&&id| is_syllable(id)).count()
    }
}

impl From<Vec<TokenId>> for TokenSeq {
    fn from(ids: Vec<TokenId>) -> Self {
        TokenSeq(ids)
    }
}

/// Decoded text of a token sequence, one entry per verse.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct DecodedText {
    pub verses: Vec<String>,
}

#[derive(Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, TokenId>,
    hash: VocabHash,
}

impl fmt::Debug for Vocabulary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Vocabulary")
            .field("len", &self.tokens.len())
            .field("hash", &self.hash)
            .finish()
    }
}

fn content_hash(tokens: &[String]) -> VocabHash {
    let mut hasher = Sha256::new();
    for t in tokens {
        hasher.update(t.as_bytes());
        hasher.update(b"\n");
    }
    VocabHash(hasher.finalize().into())
}

/// String tokens of a tercet: `<go>`, three verses each closed by `<eov>`, `<eot>`.
pub fn tercet_tokens(tercet: &TercetText, syllabifier: &Syllabifier) -> Vec<String> {
    let mut out = vec![SpecialToken::Go.as_str().to_string()];
    for verse in tercet.normalized() {
        out.extend(syllabifier.syllabify_verse(&verse));
        out.push(SpecialToken::Eov.as_str().to_string());
    }
    out.push(SpecialToken::Eot.as_str().to_string());
    out
}

/// String tokens of one prose sentence or standalone verse. Long lines are
/// cut at word separators so no piece exceeds [`MAX_LINE_TOKENS`].
///
/// Prose: `<go> ... <eot>`; verse: `<go> ... <eov> <eot>`.
pub fn line_tokens(line: &str, kind: CorpusKind, syllabifier: &Syllabifier) -> Vec<Vec<String>> {
    let body = syllabifier.syllabify_verse(&normalize(line));
    if body.is_empty() {
        return Vec::new();
    }
    let closing: &[SpecialToken] = match kind {
        CorpusKind::Verse | CorpusKind::Tercets => &[SpecialToken::Eov, SpecialToken::Eot],
        CorpusKind::Prose => &[SpecialToken::Eot],
    };
    let budget = MAX_LINE_TOKENS - 1 - closing.len();
    let sep = SpecialToken::Sep.as_str();

    let mut pieces = Vec::new();
    let mut rest = &body[..];
    while !rest.is_empty() {
        let take = if rest.len() <= budget {
            rest.len()
        } else {
            // cut at the last separator that fits; a giant word is cut hard
            rest[..=budget]
                .iter()
                .rposition(|t| t == sep)
                .filter(|&p| p > 0)
                .unwrap_or(budget)
        };
        let mut piece = vec![SpecialToken::Go.as_str().to_string()];
        piece.extend(rest[..take].iter().cloned());
        piece.extend(closing.iter().map(|t| t.as_str().to_string()));
        pieces.push(piece);
        rest = &rest[take..];
        if rest.first().is_some_and(|t| t == sep) {
            rest = &rest[1..];
        }
    }
    pieces
}

impl Vocabulary {
    /// Builds the vocabulary from the core corpus (string tokens, specials
    /// allowed and ignored). Syllables seen only elsewhere are not added.
    pub fn build<S: AsRef<str>>(core: &[Vec<S>]) -> Result<Self> {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for seq in core {
            for tok in seq {
                let tok = tok.as_ref();
                if SpecialToken::from_str(tok).is_none() {
                    *counts.entry(tok).or_default() += 1;
                }
            }
        }
        if counts.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut syllables: Vec<(&str, usize)> = counts.into_iter().collect();
        syllables.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let tokens = SpecialToken::ALL
            .iter()
            .map(|t| t.as_str().to_string())
            .chain(syllables.into_iter().map(|(s, _)| s.to_string()))
            .collect();
        Self::from_tokens(tokens)
    }

    /// Builds the vocabulary of a tercet corpus.
    pub fn from_tercets(tercets: &[TercetText], syllabifier: &Syllabifier) -> Result<Self> {
        let seqs: Vec<Vec<String>> = tercets
            .iter()
            .map(|t| tercet_tokens(t, syllabifier))
            .collect();
        Self::build(&seqs)
    }

    /// Builds the vocabulary of a corpus file: tercet blocks, or one
    /// sentence or verse per line.
    pub fn from_corpus_file(
        path: impl AsRef<Path>,
        kind: CorpusKind,
        syllabifier: &Syllabifier,
    ) -> Result<Self> {
        match kind {
            CorpusKind::Tercets => {
                Self::from_tercets(&crate::corpus::read_tercets(path)?, syllabifier)
            }
            _ => {
                let corpus = crate::corpus::RawCorpus::read_lines(kind, path)?;
                let pieces: Vec<Vec<String>> = corpus
                    .documents()
                    .iter()
                    .flat_map(|l| line_tokens(l, kind, syllabifier))
                    .collect();
                Self::build(&pieces)
            }
        }
    }

    /// Wraps an explicit index-ordered token list, checking the special layout.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        for (i, special) in SpecialToken::ALL.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(special.as_str()) {
                return Err(Error::VocabFormat(format!(
                    "index {i} must hold {}",
                    special.as_str()
                )));
            }
        }
        if tokens.len() > TokenId::MAX as usize {
            return Err(Error::VocabFormat("too many tokens".into()));
        }
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.contains(char::is_whitespace) {
                return Err(Error::VocabFormat(format!(
                    "invalid token {t:?} at index {i}"
                )));
            }
            if ids.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::VocabFormat(format!("duplicate token {t:?}")));
            }
        }
        let hash = content_hash(&tokens);
        Ok(Vocabulary { tokens, ids, hash })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn hash(&self) -> VocabHash {
        self.hash
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.ids.get(token).copied()
    }

    /// # Panics
    /// If `id` is out of range.
    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id as usize]
    }

    /// Maps string tokens to ids; unknown tokens become `<unk>`.
    pub fn encode_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> TokenSeq {
        TokenSeq(
            tokens
                .iter()
                .map(|t| self.id(t.as_ref()).unwrap_or(UNK))
                .collect(),
        )
    }

    pub fn encode_tercet(&self, tercet: &TercetText, syllabifier: &Syllabifier) -> TokenSeq {
        self.encode_tokens(&tercet_tokens(tercet, syllabifier))
    }

    pub fn encode_line(
        &self,
        line: &str,
        kind: CorpusKind,
        syllabifier: &Syllabifier,
    ) -> Vec<TokenSeq> {
        line_tokens(line, kind, syllabifier)
            .iter()
            .map(|piece| self.encode_tokens(piece))
            .collect()
    }

    /// Reads and encodes a corpus file (see [`Vocabulary::from_corpus_file`]).
    pub fn encode_corpus_file(
        &self,
        path: impl AsRef<Path>,
        kind: CorpusKind,
        syllabifier: &Syllabifier,
    ) -> Result<Vec<TokenSeq>> {
        Ok(match kind {
            CorpusKind::Tercets => crate::corpus::read_tercets(path)?
                .iter()
                .map(|t| self.encode_tercet(t, syllabifier))
                .collect(),
            _ => crate::corpus::RawCorpus::read_lines(kind, path)?
                .documents()
                .iter()
                .flat_map(|l| self.encode_line(l, kind, syllabifier))
                .collect(),
        })
    }

    /// Words of a sequence grouped by verse: syllables merge until `<sep>`,
    /// verses end at `<eov>`, and everything after `<eot>` is dropped. A final
    /// verse without `<eov>` is kept.
    pub fn decode_words(&self, seq: &[TokenId]) -> Vec<Vec<String>> {
        let mut verses: Vec<Vec<String>> = Vec::new();
        let mut verse: Vec<String> = Vec::new();
        let mut word = String::new();
        let mut open = false;
        for &id in seq {
            match SpecialToken::from_id(id) {
                Some(SpecialToken::Eot) => break,
                Some(SpecialToken::Go) => {}
                Some(SpecialToken::Sep) => {
                    if !word.is_empty() {
                        verse.push(std::mem::take(&mut word));
                    }
                    open = true;
                }
                Some(SpecialToken::Eov) => {
                    if !word.is_empty() {
                        verse.push(std::mem::take(&mut word));
                    }
                    verses.push(std::mem::take(&mut verse));
                    open = false;
                }
                Some(SpecialToken::Unk) | None => {
                    word.push_str(self.tokens.get(id as usize).map_or("<unk>", String::as_str));
                    open = true;
                }
            }
        }
        if !word.is_empty() {
            verse.push(word);
        }
        if open || !verse.is_empty() {
            verses.push(verse);
        }
        verses
    }

    pub fn decode(&self, seq: &TokenSeq) -> DecodedText {
        DecodedText {
            verses: self
                .decode_words(seq.ids())
                .into_iter()
                .map(|words| words.join(" "))
                .collect(),
        }
    }

    pub fn to_file_string(&self) -> String {
        let mut out = format!("{HEADER_TAG}\t{}\t{}\n", self.len(), self.hash);
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::VocabFormat("missing header".into()))?;
        let fields: Vec<&str> = header.split('\t').collect();
        let [tag, count, hash] = fields[..] else {
            return Err(Error::VocabFormat(format!("bad header {header:?}")));
        };
        if tag != HEADER_TAG {
            return Err(Error::VocabFormat(format!("bad header tag {tag:?}")));
        }
        let count: usize = count
            .parse()
            .map_err(|_| Error::VocabFormat(format!("bad token count {count:?}")))?;
        let vocab = Self::from_tokens(lines.map(str::to_string).collect())?;
        if vocab.len() != count {
            return Err(Error::VocabFormat(format!(
                "header declares {count} tokens, file has {}",
                vocab.len()
            )));
        }
        if vocab.hash.to_hex() != hash {
            return Err(Error::VocabFormat("content hash mismatch".into()));
        }
        Ok(vocab)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}
