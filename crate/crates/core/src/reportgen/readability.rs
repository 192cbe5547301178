use serde::{Deserialize, Serialize};

use super::ReportError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadabilityCounts {
    pub sentences: usize,
    pub words: usize,
    pub syllables: usize,
    /// Words of three or more syllables.
    pub complex_words: usize,
    pub polysyllables: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadabilityScores {
    pub flesch_reading_ease: f64,
    pub flesch_kincaid_grade: f64,
    pub gunning_fog: f64,
    pub smog: f64,
    pub counts: ReadabilityCounts,
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

/// Vowel groups (aeiouy), minus a trailing silent `e` unless the word ends
/// in consonant + "le"; at least one.
pub fn count_syllables(word: &str) -> usize {
    let w: Vec<char> = word
        .chars()
        .filter(|c| c.is_alphabetic())
        .flat_map(char::to_lowercase)
        .collect();
    if w.is_empty() {
        return 0;
    }
    let mut groups = 0;
    let mut prev_vowel = false;
    for &c in &w {
        let v = is_vowel(c);
        if v && !prev_vowel {
            groups += 1;
        }
        prev_vowel = v;
    }
    let n = w.len();
    if w[n - 1] == 'e' {
        let consonant_le = n >= 3 && w[n - 2] == 'l' && !is_vowel(w[n - 3]);
        if !consonant_le {
            groups -= 1;
        }
    }
    groups.max(1)
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn has_letters(s: &str) -> bool {
    s.chars().any(char::is_alphabetic)
}

/// A sentence ends at `.`, `!` or `?` followed by whitespace or the end of
/// the text; a trailing fragment with words counts as one more sentence.
fn count_sentences(text: &str) -> usize {
    let chars: Vec<char> = text.chars().collect();
    let mut sentences = 0;
    let mut pending_words = false;
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        current.push(c);
        let at_boundary = is_terminator(c) && chars.get(i + 1).is_none_or(|n| n.is_whitespace());
        if at_boundary {
            if has_letters(&current) {
                sentences += 1;
            }
            current.clear();
            pending_words = false;
        } else if c.is_alphabetic() {
            pending_words = true;
        }
    }
    if pending_words {
        sentences += 1;
    }
    sentences
}

pub fn readability_scores(text: &str) -> Result<ReadabilityScores, ReportError> {
    let words: Vec<&str> = text.split_whitespace().filter(|w| has_letters(w)).collect();
    if words.is_empty() {
        return Err(ReportError::EmptyText("words"));
    }
    let sentences = count_sentences(text);
    if sentences == 0 {
        return Err(ReportError::EmptyText("sentences"));
    }
    let syl: Vec<usize> = words.iter().map(|w| count_syllables(w)).collect();
    let complex = syl.iter().filter(|&&s| s >= 3).count();
    let counts = ReadabilityCounts {
        sentences,
        words: words.len(),
        syllables: syl.iter().sum(),
        complex_words: complex,
        polysyllables: complex,
    };
    let w = counts.words as f64;
    let s = counts.sentences as f64;
    let wps = w / s;
    let spw = counts.syllables as f64 / w;
    Ok(ReadabilityScores {
        flesch_reading_ease: 206.835 - 1.015 * wps - 84.6 * spw,
        flesch_kincaid_grade: 0.39 * wps + 11.8 * spw - 15.59,
        gunning_fog: 0.4 * (wps + 100.0 * counts.complex_words as f64 / w),
        smog: 1.0430 * (counts.polysyllables as f64 * 30.0 / s).sqrt() + 3.1291,
        counts,
    })
}
