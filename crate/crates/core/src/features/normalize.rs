use std::sync::OnceLock;

use rust_stemmers::{Algorithm, Stemmer as Snowball};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stemmer {
    #[default]
    None,
    GermanSnowball,
    /// Strips a small set of common inflection suffixes.
    #[serde(alias = "identity-suffix-stripper", alias = "identity_suffix_stripper")]
    SuffixStripper,
}

const SUFFIXES: [&str; 10] = ["ungen", "ung", "heit", "keit", "en", "er", "es", "e", "s", "n"];

impl Stemmer {
    pub fn stem(self, token: &str) -> String {
        match self {
            Stemmer::None => token.to_string(),
            Stemmer::GermanSnowball => {
                static GERMAN: OnceLock<Snowball> = OnceLock::new();
                GERMAN
                    .get_or_init(|| Snowball::create(Algorithm::German))
                    .stem(token)
                    .into_owned()
            }
            Stemmer::SuffixStripper => {
                let len = token.chars().count();
                for suffix in SUFFIXES {
                    if token.ends_with(suffix) && len - suffix.chars().count() >= 3 {
                        return token[..token.len() - suffix.len()].to_string();
                    }
                }
                token.to_string()
            }
        }
    }
}

/// Deterministic text-to-token pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextNormalizer {
    pub lowercase: bool,
    pub strip_punct: bool,
    pub strip_digits: bool,
    pub stemmer: Stemmer,
}

impl Default for TextNormalizer {
    fn default() -> Self {
        TextNormalizer {
            lowercase: true,
            strip_punct: true,
            strip_digits: true,
            stemmer: Stemmer::None,
        }
    }
}

impl TextNormalizer {
    /// All transforms on; German snowball stemming for `de`.
    pub fn for_language(tag: &str) -> Self {
        let primary = tag.split(['-', '_']).next().unwrap_or_default();
        TextNormalizer {
            stemmer: if primary.eq_ignore_ascii_case("de") {
                Stemmer::GermanSnowball
            } else {
                Stemmer::SuffixStripper
            },
            ..TextNormalizer::default()
        }
    }

    pub fn raw() -> Self {
        TextNormalizer {
            lowercase: false,
            strip_punct: false,
            strip_digits: false,
            stemmer: Stemmer::None,
        }
    }

    /// Punctuation becomes a token boundary, digits are deleted in place.
    pub fn normalize(&self, text: &str) -> Vec<String> {
        let mut cleaned = String::with_capacity(text.len());
        for c in text.chars() {
            if self.strip_digits && c.is_numeric() {
                continue;
            }
            if self.strip_punct && !c.is_alphanumeric() && !c.is_whitespace() {
                cleaned.push(' ');
            } else if self.lowercase {
                cleaned.extend(c.to_lowercase());
            } else {
                cleaned.push(c);
            }
        }
        cleaned
            .split_whitespace()
            .map(|t| self.stemmer.stem(t))
            .filter(|t| !t.is_empty())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn all_transforms() {
        let n = TextNormalizer::default();
        assert_eq!(n.normalize("CO2 Emissionen stiegen 2021!"), vec!["co", "emissionen", "stiegen"]);
    }

    #[test]
    fn empty_input() {
        assert!(TextNormalizer::default().normalize("").is_empty());
    }

    #[test]
    fn lowercase_only() {
        let n = TextNormalizer {
            lowercase: true,
            ..TextNormalizer::raw()
        };
        assert_eq!(n.normalize("Energie"), vec!["energie"]);
        assert_eq!(n.normalize("CO2-Bilanz!"), vec!["co2-bilanz!"]);
    }

    #[test]
    fn german_stemming() {
        let n = TextNormalizer::for_language("de-DE");
        assert_eq!(n.stemmer, Stemmer::GermanSnowball);
        let tokens = n.normalize("Emissionen Emission");
        assert_eq!(tokens[0], tokens[1]);
    }

    #[test]
    fn suffix_stripper() {
        assert_eq!(Stemmer::SuffixStripper.stem("messungen"), "mess");
        assert_eq!(Stemmer::SuffixStripper.stem("daten"), "dat");
        assert_eq!(Stemmer::SuffixStripper.stem("ein"), "ein");
    }

    proptest! {
        #[test]
        fn normalize_is_deterministic(text in "\\PC{0,60}") {
            for n in [TextNormalizer::default(), TextNormalizer::for_language("de"), TextNormalizer::raw()] {
                let a = n.normalize(&text);
                prop_assert_eq!(&a, &n.normalize(&text));
                prop_assert!(a.iter().all(|t| !t.is_empty() && !t.contains(char::is_whitespace)));
            }
        }
    }
}
