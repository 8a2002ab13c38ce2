//! Tokenizer shared by indexing and querying: lowercase, split on anything
//! that is not alphanumeric, drop empties. No stemming, no stopwords.

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}
