//! Monte-Carlo sampling of tercets and ranking by the four structural scores.
//!
//! A sample is scored on its completed verses, i.e. the segments closed by
//! `<eov>`. Material after the last `<eov>` is decoded for display but
//! takes no part in scoring.

use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{normalize, TercetText};
use crate::error::{Error, Result};
use crate::neural::{step, LmState, ModelParams, Real};
use crate::syllabifier::{count_verse_syllables, Syllabifier};
use crate::trainer::mix_seed;
use crate::vocab::{is_syllable, TokenId, TokenSeq, Vocabulary, EOT, EOV, GO, SEP};

pub const HENDECASYLLABLE: usize = 11;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GenConfig {
    pub max_syllables: usize,
    pub batch: usize,
    pub top_k: usize,
    pub temperature: f64,
    pub seed: u64,
    /// Reward per in-lexicon word.
    pub a: f64,
    /// Penalty per out-of-lexicon word.
    pub b: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            max_syllables: 75,
            batch: 2000,
            top_k: 1,
            temperature: 1.0,
            seed: 0,
            a: 0.05,
            b: 1.0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.max_syllables == 0 {
            return bad("max_syllables must be at least 1");
        }
        if self.top_k == 0 || self.batch < self.top_k {
            return bad("need batch >= top_k >= 1");
        }
        if !(self.a > 0.0 && self.b > 0.0) {
            return bad("lexicon weights a and b must be positive");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be positive");
        }
        Ok(())
    }

    /// Upper bound on emitted tokens, so a model that only ever emits
    /// separators still stops.
    pub fn max_tokens(&self) -> usize {
        4 * self.max_syllables + 8
    }
}

/// Draws one tercet: starts from `<go>` with a zero state and samples until
/// `<eot>` or until `max_syllables` syllable tokens have been emitted.
/// `<go>` itself is never drawn.
pub fn sample_tercet<T: Real>(p: &ModelParams<T>, cfg: &GenConfig, rng: &mut impl Rng) -> TokenSeq {
    let mut ids = vec![GO];
    let mut syllables = 0;
    let mut out = step(GO, &LmState::zeros(p.dims().hidden), p);
    let inv_temp = 1.0 / cfg.temperature;
    let mut weights = vec![0.0f64; out.logits.len()];
    while ids.len() <= cfg.max_tokens() {
        let next = draw(&out.logits, inv_temp, &mut weights, rng.random::<f64>());
        ids.push(next);
        if next == EOT {
            break;
        }
        if is_syllable(next) {
            syllables += 1;
            if syllables >= cfg.max_syllables {
                break;
            }
        }
        out = step(next, &out.state, p);
    }
    TokenSeq(ids)
}

/// Inverse-CDF draw from `softmax(logits / temperature)` with `<go>` masked.
fn draw<T: Real>(logits: &[T], inv_temp: f64, weights: &mut [f64], u: f64) -> TokenId {
    let max = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != GO as usize)
        .map(|(_, l)| l.to_f64_lossy() * inv_temp)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (i, (w, l)) in weights.iter_mut().zip(logits).enumerate() {
        *w = if i == GO as usize {
            0.0
        } else {
            (l.to_f64_lossy() * inv_temp - max).exp()
        };
        total += *w;
    }
    let target = u * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if acc > target {
                return i as TokenId;
            }
        }
    }
    last as TokenId
}

/// Greedy decoding: the most probable non-`<go>` token at every step.
pub fn greedy_tercet<T: Real>(p: &ModelParams<T>, cfg: &GenConfig) -> TokenSeq {
    let mut ids = vec![GO];
    let mut syllables = 0;
    let mut out = step(GO, &LmState::zeros(p.dims().hidden), p);
    while ids.len() <= cfg.max_tokens() {
        let next = out
            .logits
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != GO as usize)
            .fold((0usize, T::neg_infinity()), |best, (i, &l)| {
                if l > best.1 {
                    (i, l)
                } else {
                    best
                }
            })
            .0 as TokenId;
        ids.push(next);
        if next == EOT {
            break;
        }
        if is_syllable(next) {
            syllables += 1;
            if syllables >= cfg.max_syllables {
                break;
            }
        }
        out = step(next, &out.state, p);
    }
    TokenSeq(ids)
}

/// Whole-word lexicon used by the word score.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Lexicon {
    words: BTreeSet<String>,
}

impl Lexicon {
    pub fn from_words<S: AsRef<str>>(words: impl IntoIterator<Item = S>) -> Self {
        Lexicon {
            words: words.into_iter().map(|w| w.as_ref().to_string()).collect(),
        }
    }

    /// Every whitespace-separated word of the normalized verses.
    pub fn from_tercets(tercets: &[TercetText]) -> Self {
        let words = tercets
            .iter()
            .flat_map(|t| t.normalized())
            .flat_map(|v| v.split_whitespace().map(str::to_string).collect::<Vec<_>>());
        Lexicon {
            words: words.collect(),
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// One word per line, sorted.
    pub fn to_file_string(&self) -> String {
        self.words.iter().map(|w| format!("{w}\n")).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_words(
            text.lines().map(str::trim).filter(|l| !l.is_empty()),
        ))
    }
}

/// A verse reduced to what the scores look at.
#[derive(Clone, Debug, PartialEq)]
pub struct Verse {
    pub words: Vec<String>,
    pub syllables: usize,
}

/// Completed verses of a tercet candidate.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TercetView {
    pub verses: Vec<Verse>,
}

impl TercetView {
    /// Reads a generated token sequence. Words are rebuilt by joining the
    /// syllables between separators; syllable counts come from the tokens.
    pub fn from_tokens(ids: &[TokenId], vocab: &Vocabulary) -> Self {
        let mut verses = Vec::new();
        let mut words = Vec::new();
        let mut word = String::new();
        let mut syllables = 0;
        for &id in ids {
            match id {
                GO => {}
                SEP | EOV => {
                    if !word.is_empty() {
                        words.push(std::mem::take(&mut word));
                    }
                    if id == EOV {
                        verses.push(Verse {
                            words: std::mem::take(&mut words),
                            syllables: std::mem::replace(&mut syllables, 0),
                        });
                    }
                }
                EOT => break,
                _ => {
                    word.push_str(vocab.token(id));
                    if is_syllable(id) {
                        syllables += 1;
                    }
                }
            }
        }
        TercetView { verses }
    }

    /// Scores plain verses; syllables are counted with `syllabifier`.
    pub fn from_verses<S: AsRef<str>>(verses: &[S], syllabifier: &Syllabifier) -> Self {
        let verses = verses
            .iter()
            .map(|v| {
                let norm = normalize(v.as_ref());
                Verse {
                    words: norm.split_whitespace().map(str::to_string).collect(),
                    syllables: count_verse_syllables(&syllabifier.syllabify_verse(&norm)),
                }
            })
            .collect();
        TercetView { verses }
    }

    fn last_word(&self, verse: usize) -> Option<&str> {
        self.verses.get(verse)?.words.last().map(String::as_str)
    }
}

/// `1 − |verses − 3|`
pub fn score_r1(verse_count: usize) -> f64 {
    1.0 - (verse_count as f64 - 3.0).abs()
}

/// `1 − Σ |syllables − 11|` over the verses present.
pub fn score_r2(syllable_counts: &[usize]) -> f64 {
    1.0 - syllable_counts
        .iter()
        .map(|&n| n.abs_diff(HENDECASYLLABLE) as f64)
        .sum::<f64>()
}

/// +1 when the last words of the first and third verse rhyme, −1 otherwise
/// (including when there are fewer than three verses).
pub fn score_r3(view: &TercetView, syllabifier: &Syllabifier) -> f64 {
    match (view.last_word(0), view.last_word(2)) {
        (Some(a), Some(b)) if rhymes_with(a, b, syllabifier) => 1.0,
        _ => -1.0,
    }
}

/// `a` for every word found in the lexicon, `−b` for every other word.
pub fn score_r4<S: AsRef<str>>(words: &[S], lexicon: &Lexicon, a: f64, b: f64) -> f64 {
    words
        .iter()
        .map(|w| if lexicon.contains(w.as_ref()) { a } else { -b })
        .sum()
}

fn accent_rank(c: char) -> Option<char> {
    Some(match c {
        'à' | 'á' | 'â' => 'a',
        'è' | 'é' | 'ê' => 'e',
        'ì' | 'í' | 'î' => 'i',
        'ò' | 'ó' | 'ô' => 'o',
        'ù' | 'ú' | 'û' => 'u',
        _ => return None,
    })
}

fn fold(c: char) -> char {
    match c {
        'ï' => 'i',
        'ü' => 'u',
        _ => accent_rank(c).unwrap_or(c),
    }
}

fn is_vowel(c: char) -> bool {
    matches!(fold(c), 'a' | 'e' | 'i' | 'o' | 'u')
}

/// Byte offset of the stressed vowel inside a syllable: an accented vowel if
/// present, else the first of a/e/o, else the last i/u.
fn nucleus_stress(syllable: &str) -> Option<usize> {
    let vowels: Vec<(usize, char)> = syllable
        .char_indices()
        .filter(|&(_, c)| is_vowel(c))
        .collect();
    vowels
        .iter()
        .find(|&&(_, c)| accent_rank(c).is_some())
        .or_else(|| {
            vowels
                .iter()
                .find(|&&(_, c)| matches!(fold(c), 'a' | 'e' | 'o'))
        })
        .or_else(|| vowels.last())
        .map(|&(i, _)| i)
}

/// The part of `word` from its stressed vowel onward, accents folded. Stress
/// falls on an accented vowel when there is one, otherwise on the
/// penultimate syllable (the only one for monosyllables).
pub fn rhyme_suffix(word: &str, syllabifier: &Syllabifier) -> Option<String> {
    let word: String = normalize(word)
        .chars()
        .filter(|&c| c != '\'' && c != ' ')
        .collect();
    if word.is_empty() || !word.chars().all(char::is_alphabetic) {
        return None;
    }
    let start = match word
        .char_indices()
        .rfind(|&(_, c)| accent_rank(c).is_some())
    {
        Some((i, _)) => i,
        None => {
            let syl = syllabifier.syllabify(&word).ok()?.syllables;
            let k = syl.len().saturating_sub(2);
            let offset: usize = syl[..k].iter().map(String::len).sum();
            offset + nucleus_stress(&syl[k])?
        }
    };
    Some(word[start..].chars().map(fold).collect())
}

pub fn rhymes_with(w1: &str, w2: &str, syllabifier: &Syllabifier) -> bool {
    match (rhyme_suffix(w1, syllabifier), rhyme_suffix(w2, syllabifier)) {
        (Some(a), Some(b)) => a == b,
        _ => false,
    }
}

/// Rhyme test with the built-in syllabifier.
pub fn rhymes(w1: &str, w2: &str) -> bool {
    rhymes_with(w1, w2, crate::syllabifier::default_syllabifier())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Scores {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub r4: f64,
    pub r: f64,
}

impl Scores {
    pub fn of(
        view: &TercetView,
        lexicon: &Lexicon,
        a: f64,
        b: f64,
        syllabifier: &Syllabifier,
    ) -> Self {
        let r1 = score_r1(view.verses.len());
        let counts: Vec<usize> = view.verses.iter().map(|v| v.syllables).collect();
        let r2 = score_r2(&counts);
        let r3 = score_r3(view, syllabifier);
        let words: Vec<&str> = view
            .verses
            .iter()
            .flat_map(|v| v.words.iter().map(String::as_str))
            .collect();
        let r4 = score_r4(&words, lexicon, a, b);
        Scores {
            r1,
            r2,
            r3,
            r4,
            r: (r1 + r2 + r3 + r4) / 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScoredTercet {
    /// Position in the sampled batch.
    pub index: usize,
    #[serde(serialize_with = "ser_ids")]
    pub tokens: TokenSeq,
    /// Decoded verses, including a trailing unfinished one if present.
    pub text: Vec<String>,
    #[serde(flatten)]
    pub scores: Scores,
}

fn ser_ids<S: serde::Serializer>(t: &TokenSeq, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(t.ids())
}

/// Scores a token sequence against the lexicon.
pub fn score_tokens(
    index: usize,
    tokens: TokenSeq,
    vocab: &Vocabulary,
    lexicon: &Lexicon,
    cfg: &GenConfig,
    syllabifier: &Syllabifier,
) -> ScoredTercet {
    let view = TercetView::from_tokens(tokens.ids(), vocab);
    let scores = Scores::of(&view, lexicon, cfg.a, cfg.b, syllabifier);
    let text = vocab.decode(&tokens).verses;
    ScoredTercet {
        index,
        tokens,
        text,
        scores,
    }
}

/// Draws `cfg.batch` samples in parallel; sample `i` uses a generator
/// seeded with `mix_seed(cfg.seed, i)`, so batches for different seeds
/// share no samples.
pub fn sample_batch<T: Real>(p: &ModelParams<T>, cfg: &GenConfig) -> Vec<TokenSeq> {
    (0..cfg.batch)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, i as u64));
            sample_tercet(p, cfg, &mut rng)
        })
        .collect()
}

/// Orders by descending `r` (earlier index first on ties) and keeps `top_k`.
pub fn select_top(mut scored: Vec<ScoredTercet>, top_k: usize) -> Vec<ScoredTercet> {
    scored.sort_by(|x, y| {
        y.scores
            .r
            .total_cmp(&x.scores.r)
            .then(x.index.cmp(&y.index))
    });
    scored.truncate(top_k);
    scored
}

/// Samples a batch, scores every candidate and returns the `top_k` best.
pub fn generate_best<T: Real>(
    p: &ModelParams<T>,
    vocab: &Vocabulary,
    lexicon: &Lexicon,
    cfg: &GenConfig,
    syllabifier: &Syllabifier,
) -> Result<Vec<ScoredTercet>> {
    cfg.validate()?;
    if p.dims().vocab != vocab.len() {
        return Err(Error::DimensionMismatch {
            expected: (vocab.len(), p.dims().embed, p.dims().hidden),
            found: p.dims().as_tuple(),
        });
    }
    let scored: Vec<ScoredTercet> = sample_batch(p, cfg)
        .into_par_iter()
        .enumerate()
        .map(|(i, t)| score_tokens(i, t, vocab, lexicon, cfg, syllabifier))
        .collect();
    Ok(select_top(scored, cfg.top_k))
}

/// Six decimals with trailing zeros removed.
pub fn fmt_num(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        &s
    };
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Verses one per line, candidates separated by a blank line.
pub fn format_tercets(items: &[ScoredTercet]) -> String {
    items
        .iter()
        .map(|t| t.text.iter().map(|v| format!("{v}\n")).collect::<String>())
        .collect::<Vec<_>>()
        .join("\n")
}

pub const SCORE_HEADER: &str = "index\tr1\tr2\tr3\tr4\tr";

pub fn score_row(index: usize, s: &Scores) -> String {
    format!(
        "{index}\t{}\t{}\t{}\t{}\t{}",
        fmt_num(s.r1),
        fmt_num(s.r2),
        fmt_num(s.r3),
        fmt_num(s.r4),
        fmt_num(s.r)
    )
}

/// Tab-separated scores with a header line.
pub fn format_scores(items: &[ScoredTercet]) -> String {
    let mut out = format!("{SCORE_HEADER}\n");
    for t in items {
        out.push_str(&score_row(t.index, &t.scores));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Dims;

    fn syl() -> Syllabifier {
        Syllabifier::new()
    }

    #[test]
    fn r1_to_r4_examples() {
        assert_eq!(score_r1(3), 1.0);
        assert_eq!(score_r1(5), -1.0);
        assert_eq!(score_r1(0), -2.0);
        assert_eq!(score_r2(&[11, 11, 11]), 1.0);
        assert_eq!(score_r2(&[10, 11, 12]), -1.0);
        assert_eq!(score_r2(&[11]), 1.0);
        let lex = Lexicon::from_words((0..10).map(|i| format!("w{i}")));
        let ten: Vec<String> = (0..10).map(|i| format!("w{i}")).collect();
        assert!((score_r4(&ten, &lex, 0.05, 1.0) - 0.5).abs() < 1e-12);
        let mut nine = ten[..9].to_vec();
        nine.push("zzz".into());
        assert!((score_r4(&nine, &lex, 0.05, 1.0) + 0.55).abs() < 1e-12);
        assert_eq!(score_r4::<&str>(&[], &lex, 0.05, 1.0), 0.0);
    }

    #[test]
    fn rhyme_examples() {
        let s = syl();
        assert_eq!(rhyme_suffix("mondo", &s).as_deref(), Some("ondo"));
        assert_eq!(rhyme_suffix("parole", &s).as_deref(), Some("ole"));
        assert_eq!(rhyme_suffix("virtù", &s).as_deref(), Some("u"));
        assert!(rhymes_with("mondo", "fondo", &s));
        assert!(rhymes_with("parole", "sole", &s));
        assert!(rhymes_with("virtù", "più", &s));
        assert!(!rhymes_with("novo", "fondo", &s));
        assert!(rhymes_with("selva", "selva", &s));
        assert!(!rhymes_with("<unk>", "<unk>", &s));
        assert!(!rhymes_with("'l", "mondo", &s));
        assert!(rhymes("smarrita", "partita"));
    }

    #[test]
    fn stress_inside_diphthongs() {
        let s = syl();
        assert_eq!(rhyme_suffix("cuore", &s).as_deref(), Some("ore"));
        assert_eq!(rhyme_suffix("fiume", &s).as_deref(), Some("ume"));
        assert_eq!(rhyme_suffix("guida", &s).as_deref(), Some("ida"));
        assert_eq!(rhyme_suffix("mai", &s).as_deref(), Some("ai"));
    }

    #[test]
    fn view_from_tokens_keeps_completed_verses() {
        let vocab = Vocabulary::build(&[vec!["la", "se", "va", "mon", "do"]]).unwrap();
        let id = |t: &str| vocab.id(t).unwrap();
        let ids = vec![
            GO,
            id("mon"),
            id("do"),
            SEP,
            id("la"),
            EOV,
            id("se"),
            id("va"),
            SEP,
            id("la"),
        ];
        let view = TercetView::from_tokens(&ids, &vocab);
        assert_eq!(view.verses.len(), 1);
        assert_eq!(view.verses[0].words, ["mondo", "la"]);
        assert_eq!(view.verses[0].syllables, 3);
    }

    #[test]
    fn fmt_num_trims() {
        assert_eq!(fmt_num(0.9375), "0.9375");
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(-0.55), "-0.55");
        assert_eq!(fmt_num(-0.0000001), "0");
        assert_eq!(fmt_num(2.0 / 3.0), "0.666667");
    }

    #[test]
    fn config_validation() {
        assert!(GenConfig::default().validate().is_ok());
        let bad = [
            GenConfig {
                max_syllables: 0,
                ..Default::default()
            },
            GenConfig {
                top_k: 0,
                ..Default::default()
            },
            GenConfig {
                batch: 2,
                top_k: 3,
                ..Default::default()
            },
            GenConfig {
                a: 0.0,
                ..Default::default()
            },
            GenConfig {
                temperature: 0.0,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn sampling_is_seeded_and_never_emits_go() {
        let p = ModelParams::<f32>::uniform(Dims::new(30, 6, 5), 0.8, 4);
        let cfg = GenConfig {
            max_syllables: 20,
            ..Default::default()
        };
        for seed in 0..50u64 {
            let a = sample_tercet(&p, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
            let b = sample_tercet(&p, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
            assert_eq!(a, b);
            assert!(!a.ids()[1..].contains(&GO));
            assert!(a.syllable_count() <= 20);
        }
    }

    #[test]
    fn low_temperature_is_greedy() {
        let p = ModelParams::<f64>::uniform(Dims::new(25, 6, 5), 1.0, 9);
        let cfg = GenConfig {
            temperature: 1e-6,
            max_syllables: 30,
            ..Default::default()
        };
        let greedy = greedy_tercet(&p, &cfg);
        for seed in 0..5 {
            assert_eq!(
                sample_tercet(&p, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)),
                greedy
            );
        }
    }

    #[test]
    fn go_masked_draw() {
        let logits = [0.0f64, 100.0, 0.0];
        let mut w = [0.0; 3];
        for u in [0.0, 0.3, 0.49, 0.51, 0.99] {
            assert_ne!(draw(&logits, 1.0, &mut w, u), GO);
        }
        assert_eq!(draw(&logits, 1.0, &mut w, 0.0), 0);
        assert_eq!(draw(&logits, 1.0, &mut w, 0.99), 2);
    }

    #[test]
    fn selection_orders_and_breaks_ties_by_index() {
        let mk = |index, r| ScoredTercet {
            index,
            tokens: TokenSeq(vec![GO]),
            text: vec![],
            scores: Scores {
                r1: 0.0,
                r2: 0.0,
                r3: 0.0,
                r4: 0.0,
                r,
            },
        };
        let top = select_top(vec![mk(0, 0.5), mk(1, 0.9), mk(2, 0.9), mk(3, -1.0)], 3);
        let idx: Vec<usize> = top.iter().map(|t| t.index).collect();
        assert_eq!(idx, [1, 2, 0]);
    }
}
