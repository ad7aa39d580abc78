use rand::seq::SliceRandom;

use super::types::{Constraint, Position};
use crate::error::{Error, Result};
use crate::text;

/// Articles, prepositions, conjunctions and auxiliaries skipped when picking a `contain` keyword.
pub const STOPWORDS: &[&str] = &[
    "a", "an", "the", "of", "in", "on", "at", "to", "for", "from", "by", "with", "as", "into",
    "onto", "over", "under", "about", "after", "before", "and", "or", "but", "is", "are", "was",
    "were", "be", "been", "being", "am", "has", "have", "had", "do", "does", "did", "will",
    "would", "can", "could", "shall", "should", "may", "might", "must",
];

pub fn is_stopword(word: &str) -> bool {
    STOPWORDS.contains(&word.to_lowercase().as_str())
}

/// Whitespace tokens with surrounding punctuation stripped, empties dropped.
///
/// This is the token view shared by keyword derivation and constraint checking,
/// so a keyword derived from a text always satisfies its own position check.
pub fn word_tokens(text: &str) -> Vec<&str> {
    text::tokens(text)
        .into_iter()
        .map(text::strip_punct)
        .filter(|t| !t.is_empty())
        .collect()
}

pub const HEADLINE_HEAD: &str = "Make a title for this article";

/// The instruction fragment for a headline constraint, e.g.
/// `Make a title for this article, starting with "protesters"`.
pub fn headline_fragment(keyword: &str, position: Position) -> String {
    let connective = match position {
        Position::Start => "starting with",
        Position::End => "ending with",
        Position::Contain => "that contains",
    };
    format!("{HEADLINE_HEAD}, {connective} \"{keyword}\"")
}

/// Picks a keyword from the gold title for the given position.
///
/// `start`/`end` take the first/last word; `contain` draws uniformly (seeded)
/// among non-stopwords, falling back to all words when every word is a stopword.
pub fn derive_headline_constraint(
    reference_title: &str,
    position: Position,
    seed: u64,
) -> Result<(Constraint, String)> {
    let words = word_tokens(reference_title);
    if words.is_empty() {
        return Err(Error::invalid("reference title has no content tokens"));
    }
    let keyword = match position {
        Position::Start => words[0],
        Position::End => words[words.len() - 1],
        Position::Contain => {
            let content: Vec<&str> = words.iter().copied().filter(|w| !is_stopword(w)).collect();
            let pool = if content.is_empty() { &words } else { &content };
            let mut rng = text::rng(seed, "headline-contain");
            *pool.choose(&mut rng).expect("pool is non-empty")
        }
    };
    Ok((
        Constraint::new(keyword, position),
        headline_fragment(keyword, position),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn start_keyword() {
        let (c, frag) =
            derive_headline_constraint("protesters target french research ship", Position::Start, 11)
                .unwrap();
        assert_eq!(c.keyword, "protesters");
        assert_eq!(frag, "Make a title for this article, starting with \"protesters\"");
    }

    #[test]
    fn end_keyword() {
        let (c, frag) = derive_headline_constraint(
            "sri lanka closes schools as war with tamils escalates",
            Position::End,
            0,
        )
        .unwrap();
        assert_eq!(c.keyword, "escalates");
        assert!(frag.ends_with("ending with \"escalates\""));
    }

    #[test]
    fn contain_is_seeded() {
        let a = derive_headline_constraint("a b c", Position::Contain, 7).unwrap();
        let b = derive_headline_constraint("a b c", Position::Contain, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn contain_skips_stopwords_when_possible() {
        for seed in 0..50 {
            let (c, _) =
                derive_headline_constraint("the war of the worlds", Position::Contain, seed).unwrap();
            assert!(c.keyword == "war" || c.keyword == "worlds", "{}", c.keyword);
        }
        let (c, _) = derive_headline_constraint("of the", Position::Contain, 1).unwrap();
        assert!(c.keyword == "of" || c.keyword == "the");
    }

    #[test]
    fn empty_title_is_rejected() {
        assert!(derive_headline_constraint("   ", Position::Start, 0).is_err());
        assert!(derive_headline_constraint(" ... ", Position::End, 0).is_err());
    }
}
