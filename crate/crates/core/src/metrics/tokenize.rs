use alloc::string::{String, ToString};
use alloc::vec::Vec;

use unicode_properties::{GeneralCategoryGroup, UnicodeGeneralCategory};

use crate::{Error, Result};

/// Ordered tokens; never contains an empty token.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.iter().any(|t| t.is_empty()) {
            return Err(Error::EmptyToken);
        }
        Ok(Self(tokens))
    }

    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }
}

impl AsRef<[String]> for TokenSequence {
    fn as_ref(&self) -> &[String] {
        &self.0
    }
}

/// Deterministic text-to-token mapping. `name` is recorded in reports.
pub trait Tokenizer {
    fn name(&self) -> &str;
    fn tokenize(&self, text: &str) -> TokenSequence;
}

/// Splits on Unicode whitespace, then peels leading and trailing punctuation
/// off each word as standalone single-character tokens.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespacePunct;

fn is_punct(c: char) -> bool {
    c.general_category_group() == GeneralCategoryGroup::Punctuation
}

impl Tokenizer for WhitespacePunct {
    fn name(&self) -> &str {
        "whitespace-punct"
    }

    fn tokenize(&self, text: &str) -> TokenSequence {
        let mut out = Vec::new();
        for word in text.split_whitespace() {
            let lead_end = word
                .char_indices()
                .find(|(_, c)| !is_punct(*c))
                .map_or(word.len(), |(i, _)| i);
            out.extend(word[..lead_end].chars().map(|c| c.to_string()));
            let rest = &word[lead_end..];
            let core_end = rest
                .char_indices()
                .rev()
                .find(|(_, c)| !is_punct(*c))
                .map_or(0, |(i, c)| i + c.len_utf8());
            if core_end > 0 {
                out.push(rest[..core_end].to_string());
            }
            out.extend(rest[core_end..].chars().map(|c| c.to_string()));
        }
        TokenSequence(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn toks(s: &str) -> Vec<String> {
        WhitespacePunct.tokenize(s).into_inner()
    }

    #[test]
    fn splits_edge_punctuation() {
        assert_eq!(toks("Hello, world!"), vec!["Hello", ",", "world", "!"]);
        assert_eq!(toks("(quoted)..."), vec!["(", "quoted", ")", ".", ".", "."]);
        assert_eq!(toks("don't stop"), vec!["don't", "stop"]);
        assert_eq!(toks("«Bonjour»"), vec!["«", "Bonjour", "»"]);
        assert_eq!(toks("!!!"), vec!["!", "!", "!"]);
    }

    #[test]
    fn empty_and_whitespace() {
        assert!(toks("").is_empty());
        assert!(toks(" \t\n ").is_empty());
    }

    #[test]
    fn keeps_combining_marks_attached() {
        // Devanagari virama is a nonspacing mark, not punctuation.
        assert_eq!(toks("नमस्\u{94D}"), vec!["नमस्\u{94D}"]);
        assert_eq!(toks("你好。"), vec!["你好", "。"]);
    }

    #[test]
    fn deterministic_on_long_input() {
        let text: String = "lorem, ipsum! dolor? ".repeat(500);
        assert!(text.len() >= 10_000);
        assert_eq!(toks(&text), toks(&text));
    }

    #[test]
    fn rejects_empty_tokens() {
        assert_eq!(
            TokenSequence::new(vec!["a".into(), String::new()]),
            Err(Error::EmptyToken)
        );
    }
}
