use std::path::Path;

use serde::{Deserialize, Serialize};
use wordtrust::corpus::tokenize_spans;
use wordtrust::oracle::TrustVerdict;

/// Number of explanation words shown to annotators.
pub const SHOWN_WORDS: usize = 10;

/// One instance to be labelled, as written by `wordtrust sample`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolItem {
    pub id: String,
    pub text: String,
    pub classes: Vec<String>,
    pub predicted: String,
    /// (word, score), most important first.
    pub explanation: Vec<(String, f64)>,
    pub oracle: TrustVerdict,
}

/// An explanation word with the spans of its occurrences in the text, in
/// UTF-16 code units so that a browser can slice the string directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShownWord {
    pub word: String,
    pub score: f64,
    pub offsets: Vec<(usize, usize)>,
}

fn utf16_offset(text: &str, byte: usize) -> usize {
    text[..byte].encode_utf16().count()
}

pub fn shown_words(item: &PoolItem) -> Vec<ShownWord> {
    let tokens = tokenize_spans(&item.text);
    item.explanation
        .iter()
        .take(SHOWN_WORDS)
        .map(|(word, score)| ShownWord {
            word: word.clone(),
            score: *score,
            offsets: tokens
                .iter()
                .filter(|t| &t.text == word)
                .map(|t| (utf16_offset(&item.text, t.start), utf16_offset(&item.text, t.end)))
                .collect(),
        })
        .collect()
}

pub fn load_pool(path: &Path) -> wordtrust::Result<Vec<PoolItem>> {
    wordtrust::jsonl::read(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_are_utf16_and_cover_every_occurrence() {
        let item = PoolItem {
            id: "a".into(),
            text: "Café goal, then GOAL again 😀 goal".into(),
            classes: vec!["sport".into(), "food".into()],
            predicted: "sport".into(),
            explanation: vec![("goal".into(), 0.4), ("café".into(), 0.1)],
            oracle: TrustVerdict::Trustworthy,
        };
        let shown = shown_words(&item);
        assert_eq!(shown[0].offsets, vec![(5, 9), (16, 20), (30, 34)]);
        assert_eq!(shown[1].offsets, vec![(0, 4)]);
        let units: Vec<u16> = item.text.encode_utf16().collect();
        assert_eq!(String::from_utf16(&units[30..34]).unwrap(), "goal");
    }

    #[test]
    fn at_most_ten_words() {
        let item = PoolItem {
            id: "a".into(),
            text: (0..15).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" "),
            classes: vec!["x".into(), "y".into()],
            predicted: "x".into(),
            explanation: (0..15).map(|i| (format!("w{i}"), 1.0 / (i + 1) as f64)).collect(),
            oracle: TrustVerdict::Undefined,
        };
        assert_eq!(shown_words(&item).len(), 10);
    }
}
