//! Canonical text keys shared by deduplication, split exclusivity and the
//! hallucination filter.

/// Default terminal characters marking a question.
pub const DEFAULT_QUESTION_MARKS: &[char] = &['?', '\u{061F}'];

/// Trim, collapse internal whitespace runs to a single space, and casefold.
pub fn normalize_key(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

/// True when the last non-whitespace character is one of `marks`.
pub fn ends_with_question(text: &str, marks: &[char]) -> bool {
    text.trim_end()
        .chars()
        .next_back()
        .is_some_and(|c| marks.contains(&c))
}
