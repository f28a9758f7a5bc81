use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::token::Token;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerScheme {
    /// One token per byte, vocabulary 256.
    Bytes,
    /// Whitespace-separated decimal token ids.
    Ints,
}

pub fn tokenize(text: &[u8], scheme: TokenizerScheme, vocab_size: usize) -> Result<Vec<Token>> {
    match scheme {
        TokenizerScheme::Bytes => {
            if vocab_size < 256 {
                if let Some(&b) = text.iter().find(|&&b| b as usize >= vocab_size) {
                    return Err(Error::TokenOutOfRange {
                        token: b as Token,
                        vocab_size,
                    });
                }
            }
            Ok(text.iter().map(|&b| b as Token).collect())
        }
        TokenizerScheme::Ints => {
            let mut tokens = Vec::new();
            let mut field = 0;
            let mut i = 0;
            while i < text.len() {
                if text[i].is_ascii_whitespace() {
                    i += 1;
                    continue;
                }
                let start = i;
                while i < text.len() && !text[i].is_ascii_whitespace() {
                    i += 1;
                }
                field += 1;
                let raw = &text[start..i];
                let parse_err = |message: String| Error::Parse {
                    field,
                    offset: start,
                    message,
                };
                let s = std::str::from_utf8(raw)
                    .map_err(|_| parse_err("field is not valid UTF-8".into()))?;
                let id: Token = s
                    .parse()
                    .map_err(|_| parse_err(format!("`{s}` is not a token id")))?;
                if id as usize >= vocab_size {
                    return Err(parse_err(format!(
                        "token {id} out of range for vocabulary {vocab_size}"
                    )));
                }
                tokens.push(id);
            }
            Ok(tokens)
        }
    }
}

/// Renders tokens as one line of text. Bytes are decoded lossily with
/// `\n`, `\r` and `\\` escaped so the result never spans lines.
pub fn detokenize(tokens: &[Token], scheme: TokenizerScheme) -> String {
    match scheme {
        TokenizerScheme::Bytes => {
            let bytes: Vec<u8> = tokens.iter().map(|&t| t as u8).collect();
            String::from_utf8_lossy(&bytes)
                .replace('\\', "\\\\")
                .replace('\n', "\\n")
                .replace('\r', "\\r")
        }
        TokenizerScheme::Ints => tokens
            .iter()
            .map(Token::to_string)
            .collect::<Vec<_>>()
            .join(" "),
    }
}
