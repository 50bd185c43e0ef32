use terzina::syllabifier::{syllabify, Syllabifier};

fn golden() -> Vec<(String, Vec<String>)> {
    include_str!("data/golden_hyphenation.tsv")
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| {
            let (word, syl) = l.split_once('\t').expect("word<TAB>syllables");
            (word.to_string(), syl.split('-').map(String::from).collect())
        })
        .collect()
}

fn is_vowel(c: char) -> bool {
    "aeiouàáèéìíòóùúïü".contains(c)
}

fn is_strong(c: char) -> bool {
    is_vowel(c) && c != 'i' && c != 'u'
}

/// Char offsets at which a new syllable starts.
fn boundaries(syllables: &[String]) -> Vec<usize> {
    let mut at = 0;
    let mut out = Vec::new();
    for s in &syllables[..syllables.len() - 1] {
        at += s.chars().count();
        out.push(at);
    }
    out
}

#[test]
fn golden_list_accuracy() {
    let list = golden();
    assert!(list.len() >= 100, "golden list has {} entries", list.len());
    let mut misses = Vec::new();
    for (word, expected) in &list {
        let got = syllabify(word).unwrap().syllables;
        if &got != expected {
            misses.push(format!(
                "{word}: expected {}, got {}",
                expected.join("-"),
                got.join("-")
            ));
        }
    }
    let accuracy = 1.0 - misses.len() as f64 / list.len() as f64;
    println!("golden accuracy {:.4} ({} words)", accuracy, list.len());
    for m in &misses {
        println!("  miss {m}");
    }
    assert!(accuracy >= 0.95);
}

#[test]
fn golden_concatenation() {
    for (word, expected) in golden() {
        assert_eq!(expected.concat(), word, "golden entry is inconsistent");
        assert_eq!(syllabify(&word).unwrap().syllables.concat(), word);
    }
}

/// Checks the orthographic rules on the syllabifier's output for every
/// golden word outside the exception lexicon.
#[test]
fn rule_sanity_over_golden_list() {
    let rules = Syllabifier::rules_only();
    for (word, _) in golden() {
        let out = rules.syllabify(&word).unwrap().syllables;
        let b = boundaries(&out);
        let c: Vec<char> = word.chars().collect();
        for i in 1..c.len() {
            let split_before = b.contains(&i);
            // single consonant between vowels opens the next syllable
            if i + 1 < c.len() && !is_vowel(c[i]) && is_vowel(c[i - 1]) && is_vowel(c[i + 1]) {
                assert!(split_before, "{word}: V-CV at {i}");
            }
            // double consonants split between them
            if !is_vowel(c[i]) && c[i] == c[i - 1] {
                assert!(split_before, "{word}: double at {i}");
            }
            // s + other consonant after a vowel goes with the next syllable
            if i + 1 < c.len()
                && c[i] == 's'
                && !is_vowel(c[i + 1])
                && c[i + 1] != 's'
                && is_vowel(c[i - 1])
            {
                assert!(split_before, "{word}: s-cluster at {i}");
            }
            // unbreakable digraphs
            let pair = (c[i - 1], c[i]);
            if matches!(pair, ('c', 'h') | ('g', 'h') | ('g', 'n')) {
                assert!(!split_before, "{word}: digraph split at {i}");
            }
            if pair == ('g', 'l') && c.get(i + 1) == Some(&'i') {
                assert!(!split_before, "{word}: gli split at {i}");
            }
            if pair == ('s', 'c') && matches!(c.get(i + 1), Some('e' | 'i')) {
                assert!(!split_before, "{word}: sc split at {i}");
            }
            // diphthong: unstressed i/u before a vowel
            if matches!(c[i - 1], 'i' | 'u') && is_vowel(c[i]) {
                assert!(!split_before, "{word}: diphthong split at {i}");
            }
            // hiatus: two strong vowels
            if is_strong(c[i - 1]) && is_strong(c[i]) {
                assert!(split_before, "{word}: hiatus kept at {i}");
            }
        }
    }
}
