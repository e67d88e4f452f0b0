use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const UNK: u16 = 0;
pub const PAD: u16 = 1;
pub const UNK_TOKEN: &str = "<unk>";
pub const PAD_TOKEN: &str = "<pad>";

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\''
}

/// Splits text into word-level pieces. A single space in front of a word or
/// punctuation mark belongs to that piece; newlines and any other whitespace
/// are pieces of their own. Concatenating the pieces gives back the input.
pub fn tokenize(text: &str) -> Vec<&str> {
    let mut pieces = Vec::new();
    let mut iter = text.char_indices().peekable();
    while let Some((start, c)) = iter.next() {
        let mut head = (start, c);
        if c == ' ' {
            if let Some(&(i, n)) = iter.peek() {
                if !n.is_whitespace() {
                    head = (i, n);
                    iter.next();
                }
            }
        }
        let mut end = head.0 + head.1.len_utf8();
        if is_word_char(head.1) {
            while let Some(&(i, n)) = iter.peek() {
                if !is_word_char(n) {
                    break;
                }
                end = i + n.len_utf8();
                iter.next();
            }
        }
        pieces.push(&text[start..end]);
    }
    pieces
}

/// Token strings and their ids. Ids 0 and 1 are the unknown and padding
/// tokens; the rest are ordered by descending corpus frequency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u16>,
}

impl Vocab {
    /// Keeps the `max_vocab - 2` most frequent pieces of `text`, breaking
    /// frequency ties by byte order of the token string.
    pub fn build(text: &str, max_vocab: usize) -> Result<Self> {
        if text.is_empty() {
            return Err(Error::config("cannot build a vocabulary from empty text"));
        }
        if !(3..=u16::MAX as usize + 1).contains(&max_vocab) {
            return Err(Error::config(format!("max_vocab {max_vocab} outside 3..=65536")));
        }
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for piece in tokenize(text) {
            *counts.entry(piece).or_default() += 1;
        }
        let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_vocab - 2);
        Self::from_tokens(ranked.into_iter().map(|(t, _)| t.to_string()))
    }

    /// Builds a vocabulary from non-special tokens in id order (starting at 2).
    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Result<Self> {
        let mut all = vec![UNK_TOKEN.to_string(), PAD_TOKEN.to_string()];
        all.extend(tokens);
        if all.len() > u16::MAX as usize + 1 {
            return Err(Error::config("vocabulary exceeds 65536 entries"));
        }
        let mut index = HashMap::with_capacity(all.len());
        for (i, t) in all.iter().enumerate() {
            if index.insert(t.clone(), i as u16).is_some() {
                return Err(Error::input(format!("duplicate vocabulary entry {t:?}")));
            }
        }
        Ok(Vocab { tokens: all, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> Option<u16> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u16) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_special(id: u16) -> bool {
        id == UNK || id == PAD
    }

    pub fn encode(&self, text: &str) -> Vec<u16> {
        tokenize(text).into_iter().map(|p| self.id(p).unwrap_or(UNK)).collect()
    }

    /// Concatenates token strings; padding disappears and unknown ids print
    /// as `<unk>`.
    pub fn decode(&self, ids: &[u16]) -> String {
        ids.iter()
            .filter(|&&i| i != PAD)
            .map(|&i| self.token(i).unwrap_or(UNK_TOKEN))
            .collect()
    }

    /// One token per line with `\` and newline escaped; line number = id.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(&escape(t));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() < 2 || lines[0] != UNK_TOKEN || lines[1] != PAD_TOKEN {
            return Err(Error::format(origin, "vocabulary must start with <unk> and <pad>"));
        }
        let tokens = lines[2..]
            .iter()
            .enumerate()
            .map(|(i, l)| unescape(l).ok_or_else(|| Error::format(origin, format!("bad escape on line {}", i + 3))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_tokens(tokens)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }
}

pub(crate) fn escape(token: &str) -> String {
    let mut s = String::with_capacity(token.len());
    for c in token.chars() {
        match c {
            '\\' => s.push_str("\\\\"),
            '\n' => s.push_str("\\n"),
            '\t' => s.push_str("\\t"),
            '\r' => s.push_str("\\r"),
            c => s.push(c),
        }
    }
    s
}

pub(crate) fn unescape(line: &str) -> Option<String> {
    let mut s = String::with_capacity(line.len());
    let mut chars = line.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            s.push(c);
            continue;
        }
        s.push(match chars.next()? {
            '\\' => '\\',
            'n' => '\n',
            't' => '\t',
            'r' => '\r',
            _ => return None,
        });
    }
    Some(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pieces_keep_their_leading_space() {
        assert_eq!(
            tokenize("The cat's hat, on\nthe  mat."),
            vec!["The", " cat's", " hat", ",", " on", "\n", "the", " ", " mat", "."]
        );
        assert_eq!(tokenize(" a b a"), vec![" a", " b", " a"]);
    }

    #[test]
    fn tokenize_is_lossless() {
        let text = "Hello, world!\n\tTabs  and  “quotes” … ünïcode 42 \n";
        assert_eq!(tokenize(text).concat(), text);
    }

    #[test]
    fn frequency_then_lexicographic() {
        let v = Vocab::build("a b a", 4).unwrap();
        assert_eq!(v.tokens(), &["<unk>", "<pad>", " a", " b"]);
        let v = Vocab::build("x x x y", 10).unwrap();
        assert_eq!(v.token(2), Some(" x"));
        assert_eq!(v.encode("x"), vec![v.id("x").unwrap()]);
    }

    #[test]
    fn file_round_trip_with_awkward_tokens() {
        let v = Vocab::from_tokens(["\n".into(), " a\\b".into(), "\t".into()]).unwrap();
        let back = Vocab::from_text(&v.to_text(), Path::new("v")).unwrap();
        assert_eq!(v, back);
    }

    #[test]
    fn empty_text_is_rejected() {
        assert!(matches!(Vocab::build("", 10), Err(Error::Config(_))));
    }
}
