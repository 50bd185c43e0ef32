//! Seeded generator of Italian-like text: prose sentences and rhymed
//! eleven-syllable tercets drawn from one small word list and one phrase
//! grammar, so that the prose carries information useful for the tercets.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use terzina::{Syllabifier, TercetText};

const ARTICLES: &[&str] = &[
    "il", "la", "lo", "le", "i", "gli", "un", "una", "quel", "questa",
];

const NOUNS: &[&str] = &[
    "selva", "cammino", "strada", "notte", "giorno", "luna", "monte", "valle", "terra", "cielo",
    "pianeta", "colle", "riva", "acqua", "lago", "passo", "piaggia", "sonno", "pensiero", "tempo",
    "anima", "corpo", "fiume", "vento", "fuoco", "spalle", "raggi", "parte", "lena", "voce",
    "mente", "porta", "gente", "ombra", "bestia", "lupa", "lonza", "leone", "maestro", "poeta",
];

const ADJECTIVES: &[&str] = &[
    "oscura",
    "diritta",
    "amara",
    "selvaggia",
    "aspra",
    "verace",
    "lasso",
    "queta",
    "perigliosa",
    "diserta",
    "fermo",
    "dolce",
    "antico",
    "grave",
    "lieta",
    "nuova",
    "bianca",
    "nera",
    "lunga",
    "piena",
    "alto",
    "basso",
    "vivo",
    "stanco",
];

const VERBS: &[&str] = &[
    "era", "vidi", "trovai", "ripresi", "volse", "guarda", "mena", "fugge", "torna", "parla",
    "canta", "sente", "tace", "muove", "disse", "venne", "giunse", "rimase", "corre", "piange",
];

const PREPOSITIONS: &[&str] = &[
    "di", "a", "da", "in", "con", "per", "tra", "su", "del", "della", "nel", "nella", "al", "alla",
    "dal", "sopra", "sotto", "verso",
];

const ADVERBS: &[&str] = &[
    "poi", "ancor", "sempre", "mai", "già", "ora", "qui", "così", "allor", "quindi",
];

const RHYMES: &[&[&str]] = &[
    &["mondo", "fondo", "tondo", "giocondo", "profondo"],
    &["vita", "smarrita", "partita", "salita", "infinita"],
    &["oscura", "dura", "paura", "natura", "pura"],
    &["forte", "morte", "sorte", "corte", "scorte"],
    &["amore", "cuore", "dolore", "valore", "onore"],
    &["stella", "bella", "quella", "favella", "novella"],
    &["sole", "parole", "vuole", "suole", "viole"],
    &["mare", "amare", "andare", "pare", "chiare"],
    &["luce", "conduce", "duce", "riluce", "adduce"],
    &["valle", "calle", "spalle", "gialle", "stalle"],
];

#[derive(Clone, Copy)]
enum Cat {
    Art,
    Noun,
    Adj,
    Verb,
    Prep,
    Adv,
    End,
}

fn words(cat: Cat) -> &'static [&'static str] {
    match cat {
        Cat::Art => ARTICLES,
        Cat::Noun => NOUNS,
        Cat::Adj => ADJECTIVES,
        Cat::Verb => VERBS,
        Cat::Prep => PREPOSITIONS,
        Cat::Adv => ADVERBS,
        Cat::End => &[],
    }
}

fn next(cat: Cat, rng: &mut ChaCha8Rng) -> Cat {
    let choices: &[Cat] = match cat {
        Cat::Art => &[Cat::Noun, Cat::Noun, Cat::Adj],
        Cat::Noun => &[Cat::Adj, Cat::Verb, Cat::Prep, Cat::Verb, Cat::End],
        Cat::Adj => &[Cat::Noun, Cat::Verb, Cat::Prep, Cat::End],
        Cat::Verb => &[Cat::Art, Cat::Prep, Cat::Adv, Cat::Art],
        Cat::Prep => &[Cat::Art, Cat::Noun, Cat::Art],
        Cat::Adv => &[Cat::Verb, Cat::Art, Cat::End],
        Cat::End => &[Cat::End],
    };
    *choices.choose(rng).expect("non-empty")
}

/// One grammatical phrase of at most `max_words` words.
fn phrase(rng: &mut ChaCha8Rng, max_words: usize) -> Vec<&'static str> {
    let mut cat = *[Cat::Art, Cat::Prep, Cat::Adv, Cat::Art]
        .choose(rng)
        .expect("non-empty");
    let mut out = Vec::new();
    while out.len() < max_words {
        if let Cat::End = cat {
            break;
        }
        out.push(*words(cat).choose(rng).expect("non-empty"));
        cat = next(cat, rng);
    }
    out
}

pub struct Synth {
    rng: ChaCha8Rng,
    syllabifier: Syllabifier,
}

impl Synth {
    pub fn new(seed: u64) -> Self {
        Synth {
            rng: ChaCha8Rng::seed_from_u64(seed),
            syllabifier: Syllabifier::new(),
        }
    }

    fn syllables(&self, word: &str) -> usize {
        self.syllabifier
            .syllabify(word)
            .map(|b| b.syllables.len())
            .unwrap_or(1)
    }

    /// A verse of exactly eleven syllables ending with `last`, when the
    /// grammar produces one within a bounded number of attempts.
    fn verse(&mut self, last: &str) -> String {
        let need = 11usize.saturating_sub(self.syllables(last));
        let mut best: Option<Vec<&str>> = None;
        for _ in 0..400 {
            let mut words = Vec::new();
            let mut count = 0;
            while count < need {
                for w in phrase(&mut self.rng, 4) {
                    words.push(w);
                    count += self.syllables(w);
                }
            }
            if count == need {
                best = Some(words);
                break;
            }
            if best.is_none() {
                best = Some(words);
            }
        }
        let mut words = best.unwrap_or_default();
        words.push(last);
        words.join(" ")
    }

    pub fn tercet(&mut self) -> TercetText {
        let a = *RHYMES.choose(&mut self.rng).expect("non-empty");
        let b = *RHYMES.choose(&mut self.rng).expect("non-empty");
        let mut pair = a.choose_multiple(&mut self.rng, 2);
        let (first, third) = (*pair.next().expect("two"), *pair.next().expect("two"));
        let middle = *b.choose(&mut self.rng).expect("non-empty");
        let verses = [self.verse(first), self.verse(middle), self.verse(third)];
        TercetText::new(verses).expect("non-empty verses")
    }

    pub fn tercets(&mut self, n: usize) -> Vec<TercetText> {
        (0..n).map(|_| self.tercet()).collect()
    }

    /// A sentence of two to four phrases; rhyme words also occur in prose.
    pub fn sentence(&mut self) -> String {
        let phrases = self.rng.random_range(2..=4);
        let mut words: Vec<&str> = Vec::new();
        for _ in 0..phrases {
            words.extend(phrase(&mut self.rng, 6));
            if self.rng.random_bool(0.4) {
                let class = *RHYMES.choose(&mut self.rng).expect("non-empty");
                words.push(*class.choose(&mut self.rng).expect("non-empty"));
            }
        }
        let mut s = words.join(" ");
        s.push('.');
        s
    }

    /// Prose lines until at least `syllables` syllables have been produced.
    pub fn prose(&mut self, syllables: usize) -> Vec<String> {
        let mut out = Vec::new();
        let mut total = 0;
        while total < syllables {
            let s = self.sentence();
            total += s
                .split_whitespace()
                .map(|w| self.syllables(w.trim_end_matches('.')))
                .sum::<usize>();
            out.push(s);
        }
        out
    }
}
