use super::bleu::bleu4_tokens;

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

fn word_syllables(word: &str) -> usize {
    let w: Vec<char> = word.to_lowercase().chars().filter(|c| c.is_alphabetic()).collect();
    if w.is_empty() {
        return 0;
    }
    let mut groups: usize = 0;
    let mut prev_vowel = false;
    for &c in &w {
        let v = is_vowel(c);
        if v && !prev_vowel {
            groups += 1;
        }
        prev_vowel = v;
    }
    let n = w.len();
    if n >= 2 && w[n - 1] == 'e' && !is_vowel(w[n - 2]) {
        // "-le" after a consonant is its own syllable ("table")
        let consonant_le = n >= 3 && w[n - 2] == 'l' && !is_vowel(w[n - 3]);
        if !consonant_le {
            groups = groups.saturating_sub(1);
        }
    }
    groups.max(1)
}

/// Heuristic syllable count: vowel groups per word, silent final `e` dropped,
/// at least one per word. Tokens without letters count zero.
pub fn syllable_count(text: &str) -> usize {
    text.split_whitespace().map(word_syllables).sum()
}

/// Non-empty segments separated by newlines or `/`.
pub fn haiku_lines(text: &str) -> usize {
    text.split(['\n', '/']).filter(|s| !s.trim().is_empty()).count()
}

fn haiku_words(text: &str) -> Vec<String> {
    text.split(|c: char| c.is_whitespace() || c == '/')
        .map(|t| {
            t.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

/// Per-component breakdown of the haiku score, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HaikuComponents {
    pub lines: f64,
    pub syllables: f64,
    pub bleu: f64,
    pub topic: f64,
}

pub fn haiku_components(prediction: &str, gold: &str, topic: &str) -> HaikuComponents {
    let line_gap = haiku_lines(prediction).abs_diff(haiku_lines(gold)) as f64;
    let syl_gap = syllable_count(prediction).abs_diff(syllable_count(gold)) as f64;
    let p = haiku_words(prediction);
    let g = haiku_words(gold);
    let pref: Vec<&str> = p.iter().map(String::as_str).collect();
    let gref: Vec<&str> = g.iter().map(String::as_str).collect();
    let topic = crate::text::normalize(topic);
    let topic_hit = topic.is_empty() || crate::text::normalize(prediction).contains(&topic);
    HaikuComponents {
        lines: (1.0 - line_gap / 3.0).max(0.0),
        syllables: (1.0 - syl_gap / 17.0).max(0.0),
        bleu: bleu4_tokens(&pref, &[gref]),
        topic: if topic_hit { 1.0 } else { 0.0 },
    }
}

/// Composite haiku score on a 0..100 scale: mean of line-count agreement,
/// syllable-count agreement, BLEU-4 against the gold haiku, and topic presence.
///
/// BLEU here runs over lowercased words with punctuation and `/` removed, so
/// the score ignores trailing punctuation and whitespace.
pub fn haiku_score(prediction: &str, gold: &str, topic: &str) -> f64 {
    let c = haiku_components(prediction, gold, topic);
    100.0 * (c.lines + c.syllables + c.bleu + c.topic) / 4.0
}
