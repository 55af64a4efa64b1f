//! Text normalization: lowercasing, URL and digit-run placeholders,
//! punctuation as separators.

pub const URL_TOKEN: &str = "<url>";
pub const NUM_TOKEN: &str = "<num>";

fn is_url(chunk: &str) -> bool {
    let lower = chunk.to_lowercase();
    lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")
}

/// Tokenize raw text: whitespace-split, URLs collapse to `<url>`, maximal
/// digit runs collapse to `<num>`, punctuation separates, letters lowercase.
/// Empty input yields an empty list.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        if is_url(chunk) {
            out.push(URL_TOKEN.to_string());
            continue;
        }
        let mut cur = String::new();
        let mut chars = chunk.chars().peekable();
        while let Some(c) = chars.next() {
            if c.is_alphabetic() {
                cur.extend(c.to_lowercase());
            } else if c.is_ascii_digit() {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                while chars.peek().is_some_and(|n| n.is_ascii_digit()) {
                    chars.next();
                }
                out.push(NUM_TOKEN.to_string());
            } else {
                // punctuation and symbols act as separators
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}
