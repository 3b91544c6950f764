//! Tokens, the closed question grammar and vocabularies.

mod grammar;
mod vocab;

pub use grammar::{
    all_semantics, parse_question, realize, templates, templates_for, QuestionKind,
    QuestionSemantics, Region, Template, Unparseable,
};
pub use vocab::{build_vocabulary, read_vocabulary, write_vocabulary, Vocabulary, VocabEntry};

/// Lowercases, splits on whitespace and peels leading/trailing punctuation
/// off each chunk as single-character tokens. Chunks of the form `<word>`
/// are kept whole so special symbols survive a round trip.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let chunk = chunk.to_lowercase();
        if is_special_form(&chunk) {
            tokens.push(chunk);
            continue;
        }
        let chars: Vec<char> = chunk.chars().collect();
        let mut start = 0;
        while start < chars.len() && chars[start].is_ascii_punctuation() {
            start += 1;
        }
        let mut end = chars.len();
        while end > start && chars[end - 1].is_ascii_punctuation() {
            end -= 1;
        }
        tokens.extend(chars[..start].iter().map(char::to_string));
        if start < end {
            tokens.push(chars[start..end].iter().collect());
        }
        tokens.extend(chars[end..].iter().map(char::to_string));
    }
    tokens
}

pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let parts: Vec<&str> = tokens.iter().map(AsRef::as_ref).collect();
    parts.join(" ")
}

/// Canonical form used for verbatim comparisons between questions.
pub fn normalize(text: &str) -> String {
    detokenize(&tokenize(text))
}

fn is_special_form(chunk: &str) -> bool {
    chunk.len() > 2
        && chunk.starts_with('<')
        && chunk.ends_with('>')
        && chunk[1..chunk.len() - 1].chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}
