//! Lexical normalization shared by answer extraction and refinement.

/// Characters treated as markdown decoration and dropped before comparison.
pub fn is_markdown_symbol(c: char) -> bool {
    matches!(c, '*' | '#' | '`')
}

pub fn strip_markdown(s: &str) -> String {
    s.chars().filter(|c| !is_markdown_symbol(*c)).collect()
}

/// Case-folded, markdown-stripped, whitespace-collapsed, left-trimmed form
/// used for pattern comparison.
pub fn normalize_for_match(s: &str) -> String {
    let folded = strip_markdown(s).to_lowercase();
    let mut out = String::with_capacity(folded.len());
    let mut pending_space = false;
    for c in folded.chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
        } else {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.push(c);
        }
    }
    out
}

/// Normalized form of a single whitespace-delimited token: lowercase
/// alphanumerics only. Pure punctuation normalizes to the empty string.
pub fn normalize_token(token: &str) -> String {
    token.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect()
}

/// Normalized, non-empty word sequence of a phrase.
pub fn word_sequence(text: &str) -> Vec<String> {
    text.split_whitespace().map(normalize_token).filter(|t| !t.is_empty()).collect()
}

pub const ARTICLES: [&str; 3] = ["the", "a", "an"];

pub fn is_article(word: &str) -> bool {
    ARTICLES.contains(&word)
}

/// Word sequence with leading articles removed. An all-article phrase keeps
/// its words so the result is never empty for non-empty input.
pub fn answer_words(text: &str) -> Vec<String> {
    let words = word_sequence(text);
    let start = words.iter().take_while(|w| is_article(w)).count();
    if start == words.len() {
        words
    } else {
        words[start..].to_vec()
    }
}

/// True when `needle` occurs as a contiguous run inside `haystack`.
pub fn contains_run(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

/// Letters used to enumerate options, `A` through `H`.
pub fn option_letter(index: usize) -> char {
    assert!(index < crate::record::MAX_OPTIONS, "option index {index} out of range");
    (b'A' + index as u8) as char
}

/// Lettered option list, `(A) x (B) y ...`.
pub fn lettered_options(options: &[String]) -> String {
    options.iter().enumerate().map(|(i, o)| format!("({}) {}", option_letter(i), o)).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_strips_markdown_and_case() {
        assert_eq!(normalize_for_match("  **Answer**:   C"), "answer: c");
        assert_eq!(normalize_for_match("###Conclusion:\tX"), "conclusion: x");
    }

    #[test]
    fn answer_words_drop_leading_articles() {
        assert_eq!(answer_words("The blanket"), vec!["blanket"]);
        assert_eq!(answer_words("a red cup."), vec!["red", "cup"]);
        assert_eq!(answer_words("The"), vec!["the"]);
        assert_eq!(answer_words("The closet/cabinet"), vec!["closetcabinet"]);
    }

    #[test]
    fn lettering() {
        let opts = vec!["X".to_string(), "Y".to_string()];
        assert_eq!(lettered_options(&opts), "(A) X (B) Y");
    }
}
