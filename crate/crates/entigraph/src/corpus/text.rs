//! Documents, tokenization, shingle normalization, and JSONL corpus IO.

use std::io;

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// Splits text into tokens for counting and n-gram metrics.
///
/// Implementations must be pure: the same text always produces the same
/// token sequence.
pub trait Tokenizer: Send + Sync {
    /// Splits `text` into tokens.
    fn tokenize(&self, text: &str) -> Vec<String>;

    /// Number of tokens in `text`.
    fn token_count(&self, text: &str) -> usize {
        self.tokenize(text).len()
    }
}

/// Default tokenizer: lowercases and splits on whitespace and
/// punctuation, keeping alphanumeric runs as tokens.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DefaultTokenizer;

impl Tokenizer for DefaultTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        let mut tokens = Vec::new();
        let mut current = String::new();
        for ch in text.chars() {
            if ch.is_alphanumeric() {
                current.extend(ch.to_lowercase());
            } else if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
        }
        if !current.is_empty() {
            tokens.push(current);
        }
        tokens
    }
}

/// A corpus document: stable id, text, and the token count of the text
/// under the tokenizer it was constructed with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    id: String,
    text: String,
    token_count: usize,
}

impl Document {
    /// Builds a document, counting tokens with `tokenizer`.
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        tokenizer: &dyn Tokenizer,
    ) -> Self {
        let text = text.into();
        let token_count = tokenizer.token_count(&text);
        Document { id: id.into(), text, token_count }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn token_count(&self) -> usize {
        self.token_count
    }
}

#[derive(Serialize)]
struct DocumentLineRef<'a> {
    id: &'a str,
    text: &'a str,
}

#[derive(Deserialize)]
struct DocumentLine {
    id: String,
    text: String,
}

/// Writes documents as JSONL, one `{"id": ..., "text": ...}` per line.
pub fn write_jsonl<W: io::Write>(writer: &mut W, documents: &[Document]) -> io::Result<()> {
    for doc in documents {
        let line = serde_json::to_string(&DocumentLineRef { id: &doc.id, text: &doc.text })
            .expect("document fields serialize");
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a JSONL corpus, recomputing token counts with `tokenizer`.
pub fn read_jsonl<R: io::BufRead>(
    reader: R,
    tokenizer: &dyn Tokenizer,
) -> Result<Vec<Document>, CorpusError> {
    let mut documents = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CorpusError::Io(e.to_string()))?;
        let parsed: DocumentLine = serde_json::from_str(&line).map_err(|e| {
            CorpusError::MalformedJsonl { line: index + 1, reason: e.to_string() }
        })?;
        documents.push(Document::new(parsed.id, parsed.text, tokenizer));
    }
    Ok(documents)
}

/// Normalizes text for shingling: lowercases, deletes punctuation and
/// digits, and collapses whitespace runs to single spaces.
///
/// Idempotent: normalizing already-normalized text returns it unchanged.
pub fn normalize(text: &str) -> String {
    let mut cleaned = String::with_capacity(text.len());
    for ch in text.chars() {
        if ch.is_alphabetic() {
            // Some lowercase expansions carry combining marks; only the
            // alphabetic part survives normalization.
            cleaned.extend(ch.to_lowercase().filter(|c| c.is_alphabetic()));
        } else if ch.is_whitespace() {
            cleaned.push(' ');
        }
    }
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}
