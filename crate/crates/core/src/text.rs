//! Tokenization and normalization shared by every module.

use alloc::string::String;
use alloc::vec::Vec;

/// Number of whitespace-delimited tokens.
pub fn word_count(s: &str) -> usize {
    s.split_whitespace().count()
}

/// Lowercase, trim, and collapse internal whitespace runs to a single space.
///
/// This is the normalization used for answer-in-context matching, Exact
/// Match, and revision validation.
pub fn normalize(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for (i, tok) in s.split_whitespace().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.extend(tok.chars().flat_map(char::to_lowercase));
    }
    out
}

/// Strip non-alphanumeric characters glued to either edge of a token.
pub fn strip_edge_punct(tok: &str) -> &str {
    tok.trim_matches(|c: char| !c.is_alphanumeric())
}

/// Tokens used by all similarity computations: lowercased, whitespace
/// split, edge punctuation stripped, empty tokens dropped.
pub fn sim_tokens(s: &str) -> Vec<String> {
    s.split_whitespace()
        .map(strip_edge_punct)
        .filter(|t| !t.is_empty())
        .map(|t| t.chars().flat_map(char::to_lowercase).collect())
        .collect()
}

/// Round half away from zero to `decimals` places.
pub fn round_to(x: f64, decimals: i32) -> f64 {
    let scale = libm::pow(10.0, f64::from(decimals));
    libm::round(x * scale) / scale
}

pub fn round1(x: f64) -> f64 {
    round_to(x, 1)
}

/// 64-bit FNV-1a, used for content fingerprints and seed derivation.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Fold another chunk into an existing FNV-1a state.
pub fn fnv1a_extend(mut h: u64, bytes: &[u8]) -> u64 {
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}
