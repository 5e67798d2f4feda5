//! Text normalization and tokenization shared by validation, judging, and the encoder.

use std::collections::BTreeSet;

use unicode_normalization::UnicodeNormalization;

/// Canonical form used for every equality and containment check.
///
/// NFC, lowercase, trimmed, internal whitespace collapsed to single spaces,
/// trailing `.`, `!` and `?` removed (so "In 1992." and "in 1992" compare equal).
pub fn normalize(s: &str) -> String {
    let lowered: String = s.nfc().collect::<String>().to_lowercase();
    let mut out = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    loop {
        let trimmed = out.trim_end_matches(['.', '!', '?']).trim_end();
        if trimmed.len() == out.len() {
            break;
        }
        out = trimmed.to_string();
    }
    out
}

/// Lowercased alphanumeric word tokens, punctuation dropped.
pub fn word_tokens(s: &str) -> Vec<String> {
    let norm = normalize(s);
    norm.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Encoder tokenizer: lowercase, split on whitespace, every punctuation
/// character becomes its own token.
pub fn encoder_tokens(s: &str) -> Vec<String> {
    let lowered: String = s.nfc().collect::<String>().to_lowercase();
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for c in lowered.chars() {
        if c.is_alphanumeric() {
            cur.push(c);
        } else {
            if !cur.is_empty() {
                tokens.push(std::mem::take(&mut cur));
            }
            if !c.is_whitespace() {
                tokens.push(c.to_string());
            }
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

/// Jaccard overlap of the word-token sets. Two empty sets count as identical.
pub fn token_jaccard(a: &str, b: &str) -> f64 {
    let sa: BTreeSet<String> = word_tokens(a).into_iter().collect();
    let sb: BTreeSet<String> = word_tokens(b).into_iter().collect();
    if sa.is_empty() && sb.is_empty() {
        return 1.0;
    }
    let inter = sa.intersection(&sb).count();
    let union = sa.union(&sb).count();
    inter as f64 / union as f64
}

/// Whole-word containment of `needle` inside `haystack`, both normalized.
pub fn contains_normalized(haystack: &str, needle: &str) -> bool {
    let h = word_tokens(haystack);
    let n = word_tokens(needle);
    if n.is_empty() {
        return false;
    }
    h.windows(n.len()).any(|w| w == n.as_slice())
}

/// 64-bit FNV-1a. Stable across platforms and releases, unlike `DefaultHasher`.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Derive a named substream seed from a root seed.
pub fn substream_seed(root: u64, name: &str) -> u64 {
    let mut buf = root.to_le_bytes().to_vec();
    buf.extend_from_slice(name.as_bytes());
    // splitmix finalizer spreads nearby roots apart
    let mut z = fnv1a(&buf).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
