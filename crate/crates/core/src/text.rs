//! Tokenization and hashing helpers shared by every module.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Whitespace tokenization. All word-level machinery in the crate goes through this.
pub fn tokens(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Lowercases and collapses internal whitespace.
pub fn normalize(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Strips terminal punctuation (`.`, `!`, `?`, `,`, `;`, `:`) and surrounding quotes from a token.
pub fn strip_punct(token: &str) -> &str {
    token.trim_matches(|c: char| {
        matches!(c, '.' | '!' | '?' | ',' | ';' | ':' | '"' | '\'' | '`')
    })
}

/// Tweet tokenization: lowercase words, `#` and `@` stay attached to their word,
/// other punctuation is a separator.
pub fn tweet_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() || c == '#' || c == '@' || c == '_' || c == '\'' {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// 64-bit FNV-1a. Stable across platforms and releases, unlike `DefaultHasher`.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derives an independent sub-seed for a named purpose.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    splitmix64(seed ^ fnv1a(label.as_bytes()))
}

/// The RNG used by every sampling operation.
pub fn rng(seed: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, label))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tweet_tokens_keep_hash_and_at() {
        assert_eq!(
            tweet_tokens("GUYS. #WelcomeToNewYork @taylor, GO!"),
            vec!["guys", "#welcometonewyork", "@taylor", "go"]
        );
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn strip_punct_trims_both_ends() {
        assert_eq!(strip_punct("\"escalates\"."), "escalates");
        assert_eq!(strip_punct("ship"), "ship");
    }
}
