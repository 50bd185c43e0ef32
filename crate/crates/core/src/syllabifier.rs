//! Rule-based Italian syllabification.
//!
//! Words are split by orthographic rules: a single consonant between vowels
//! opens the next syllable, double consonants split, `s` + consonant and
//! obstruent + `l`/`r` clusters stay together as an onset, `ch gh gn gl sc`
//! never break, unstressed `i`/`u` form diphthongs with an adjacent vowel and
//! two strong vowels are in hiatus. Words the rules get wrong are listed in an
//! exception lexicon (`word<TAB>syl-syl-syl`).

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::LazyLock;

use thiserror::Error;

use crate::error::{Error, Result};
use crate::vocab::SpecialToken;

const DEFAULT_EXCEPTIONS: &str = include_str!("../data/exceptions.tsv");

static DEFAULT: LazyLock<Syllabifier> = LazyLock::new(Syllabifier::new);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("`{0}` has no vowel")]
pub struct NoVowel(pub String);

/// A word and its syllables; the syllables concatenate back to the word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyllableBreakdown {
    pub word: String,
    pub syllables: Vec<String>,
}

impl SyllableBreakdown {
    /// The conventional `syl-syl-syl` rendering.
    pub fn hyphenated(&self) -> String {
        self.syllables.join("-")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Vowel {
    Strong,
    Weak,
}

fn vowel_class(c: char) -> Option<Vowel> {
    match c {
        'i' | 'u' => Some(Vowel::Weak),
        'a' | 'e' | 'o' | 'à' | 'á' | 'â' | 'è' | 'é' | 'ê' | 'ì' | 'í' | 'î' | 'ï' | 'ò' | 'ó'
        | 'ô' | 'ù' | 'ú' | 'û' | 'ü' => Some(Vowel::Strong),
        _ => None,
    }
}

pub(crate) fn is_vowel(c: char) -> bool {
    vowel_class(c).is_some()
}

fn is_apostrophe(c: char) -> bool {
    c == '\''
}

/// Whether a consonant cluster can open a syllable.
fn legal_onset(cluster: &[char]) -> bool {
    match cluster {
        [] => false,
        [_] => true,
        ['c' | 'g', 'h'] | ['g', 'n'] | ['g', 'l'] => true,
        ['c' | 'g', 'h', 'l' | 'r'] => true,
        ['b' | 'c' | 'd' | 'f' | 'g' | 'p' | 't' | 'v', 'r'] => true,
        ['b' | 'c' | 'f' | 'p' | 'v', 'l'] => true,
        ['s', rest @ ..] => legal_onset(rest),
        _ => false,
    }
}

/// How many consonants of an intervocalic cluster stay with the previous syllable.
fn coda_len(cluster: &[char]) -> usize {
    match cluster {
        [] | [_] => 0,
        [a, b, ..] if a == b || (*a == 'c' && *b == 'q') => 1,
        _ => (0..cluster.len())
            .find(|&k| legal_onset(&cluster[k..]))
            .unwrap_or(cluster.len() - 1),
    }
}

/// Splits a run of adjacent vowels into syllable nuclei, returning the
/// offsets within the run where a new nucleus begins.
fn nucleus_breaks(run: &[char]) -> Vec<usize> {
    let mut breaks = Vec::new();
    for j in 1..run.len() {
        let prev = vowel_class(run[j - 1]);
        let cur = vowel_class(run[j]);
        let hiatus = prev == Some(Vowel::Strong) && cur == Some(Vowel::Strong);
        // intervocalic i is a glide opening the next syllable: no-ia, a-iuo-la
        let glide = run[j] == 'i' && j + 1 < run.len() && prev == Some(Vowel::Strong);
        if hiatus || glide {
            breaks.push(j);
        }
    }
    breaks
}

/// Syllabifies a fragment that contains at least one vowel.
fn syllabify_fragment(chars: &[char]) -> Vec<String> {
    // nuclei as [start, end) char ranges
    let mut nuclei: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !is_vowel(chars[i]) {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && is_vowel(chars[i]) {
            i += 1;
        }
        let mut s = start;
        for b in nucleus_breaks(&chars[start..i]) {
            nuclei.push((s, start + b));
            s = start + b;
        }
        nuclei.push((s, i));
    }
    debug_assert!(!nuclei.is_empty());

    // syllable boundaries: each syllable after the first starts at a cut
    let mut cuts = Vec::with_capacity(nuclei.len());
    for pair in nuclei.windows(2) {
        let (_, prev_end) = pair[0];
        let (next_start, _) = pair[1];
        cuts.push(prev_end + coda_len(&chars[prev_end..next_start]));
    }

    let mut syllables = Vec::with_capacity(nuclei.len());
    let mut from = 0;
    for cut in cuts {
        syllables.push(chars[from..cut].iter().collect());
        from = cut;
    }
    syllables.push(chars[from..].iter().collect());
    syllables
}

/// Splits a word after each apostrophe, keeping a leading apostrophe with
/// what follows it (`'ntelletto`, `'l`).
fn elision_fragments(chars: &[char]) -> Vec<&[char]> {
    let mut fragments = Vec::new();
    let mut start = 0;
    for (i, &c) in chars.iter().enumerate() {
        if is_apostrophe(c) && i > start {
            fragments.push(&chars[start..=i]);
            start = i + 1;
        }
    }
    if start < chars.len() {
        fragments.push(&chars[start..]);
    }
    fragments
}

/// Syllabifier with an exception lexicon.
#[derive(Debug, Clone, Default)]
pub struct Syllabifier {
    exceptions: HashMap<String, Vec<String>>,
}

impl Syllabifier {
    /// Rules plus the built-in exception lexicon.
    pub fn new() -> Self {
        let mut s = Self::rules_only();
        s.load_exceptions(DEFAULT_EXCEPTIONS)
            .expect("built-in exception lexicon is well formed");
        s
    }

    pub fn rules_only() -> Self {
        Syllabifier::default()
    }

    /// Merges exceptions from `word<TAB>syl-syl-syl` lines. Blank lines and
    /// lines starting with `#` are skipped.
    pub fn load_exceptions(&mut self, text: &str) -> Result<()> {
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: &str| Error::ExceptionFormat {
                line: idx + 1,
                reason: reason.to_string(),
            };
            let (word, hyphenated) = line.split_once('\t').ok_or_else(|| bad("missing tab"))?;
            let syllables: Vec<String> = hyphenated.trim().split('-').map(str::to_string).collect();
            if syllables.iter().any(String::is_empty) {
                return Err(bad("empty syllable"));
            }
            if syllables.concat() != word {
                return Err(bad("syllables do not spell the word"));
            }
            self.exceptions.insert(word.to_string(), syllables);
        }
        Ok(())
    }

    pub fn load_exceptions_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.load_exceptions(&text)
    }

    pub fn exception_count(&self) -> usize {
        self.exceptions.len()
    }

    pub fn syllabify(&self, word: &str) -> Result<SyllableBreakdown, NoVowel> {
        if let Some(syllables) = self.exceptions.get(word) {
            return Ok(SyllableBreakdown {
                word: word.to_string(),
                syllables: syllables.clone(),
            });
        }
        let chars: Vec<char> = word.chars().collect();
        if !chars.iter().copied().any(is_vowel) {
            // a bare clitic such as 'l stays one token
            if chars.len() > 1 && chars.iter().copied().any(is_apostrophe) {
                return Ok(SyllableBreakdown {
                    word: word.to_string(),
                    syllables: vec![word.to_string()],
                });
            }
            return Err(NoVowel(word.to_string()));
        }

        let mut syllables: Vec<String> = Vec::new();
        let mut carry = String::new();
        for fragment in elision_fragments(&chars) {
            if fragment.iter().copied().any(is_vowel) {
                let mut parts = syllabify_fragment(fragment);
                parts[0].insert_str(0, &carry);
                carry.clear();
                syllables.extend(parts);
            } else {
                carry.extend(fragment);
            }
        }
        if !carry.is_empty() {
            // vowelless tail with nothing after it joins the last syllable
            syllables
                .last_mut()
                .expect("word has a vowel")
                .push_str(&carry);
        }
        Ok(SyllableBreakdown {
            word: word.to_string(),
            syllables,
        })
    }

    /// Syllable tokens of a normalized verse, with `<sep>` between words.
    /// Words without a vowel are kept whole as a single token.
    pub fn syllabify_verse(&self, verse: &str) -> Vec<String> {
        let mut tokens = Vec::new();
        for (i, word) in verse.split_whitespace().enumerate() {
            if i > 0 {
                tokens.push(SpecialToken::Sep.as_str().to_string());
            }
            match self.syllabify(word) {
                Ok(b) => tokens.extend(b.syllables),
                Err(NoVowel(w)) => {
                    log::debug!("keeping vowelless word `{w}` as one token");
                    tokens.push(w);
                }
            }
        }
        tokens
    }
}

/// Shared instance with the built-in exception lexicon.
pub fn default_syllabifier() -> &'static Syllabifier {
    &DEFAULT
}

/// Syllabifies with the default rules and exception lexicon.
pub fn syllabify(word: &str) -> Result<SyllableBreakdown, NoVowel> {
    DEFAULT.syllabify(word)
}

pub fn syllabify_verse(verse: &str) -> Vec<String> {
    DEFAULT.syllabify_verse(verse)
}

/// Number of syllable tokens in a verse. Structural tokens count zero;
/// `<unk>` stands in for one unknown syllable and counts one.
pub fn count_verse_syllables<S: AsRef<str>>(tokens: &[S]) -> usize {
    tokens
        .iter()
        .filter(|t| match SpecialToken::from_str(t.as_ref()) {
            None | Some(SpecialToken::Unk) => true,
            Some(_) => false,
        })
        .count()
}
