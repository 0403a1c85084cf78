use unicode_normalization::UnicodeNormalization;

const DANDA: char = '\u{0964}';
const DOUBLE_DANDA: char = '\u{0965}';

fn is_detached(c: char) -> bool {
    c.is_ascii_punctuation() || c == DANDA || c == DOUBLE_DANDA
}

/// NFC-normalizes, splits on Unicode whitespace, detaches ASCII punctuation
/// and dandas as single-character tokens, and lowercases ASCII letters.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.nfc() {
        if c.is_whitespace() || is_detached(c) {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            if !c.is_whitespace() {
                out.push(c.to_string());
            }
        } else {
            cur.push(c.to_ascii_lowercase());
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}
