//! Seeded synthetic corpora for tests, demos and benchmarks.
//!
//! Words are pronounceable letter strings (no digits, so normalization keeps
//! them intact). Each requirement owns a few keywords; relevant segments
//! carry keywords of their requirement among generic filler words.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotationSet, Document, Requirement, RequirementCatalog, Segment, SegmentKind, SourceFormat};
use crate::dataset::{Dataset, LabeledDocument};
use crate::error::Result;

const ONSETS: [&str; 16] = ["b", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "z"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

/// Distinct three-syllable words, shuffled by `rng`.
fn word_pool(rng: &mut ChaCha8Rng, count: usize) -> Vec<String> {
    let syllables: Vec<String> = ONSETS
        .iter()
        .flat_map(|o| VOWELS.iter().map(move |v| format!("{o}{v}")))
        .collect();
    let mut words = Vec::with_capacity(count);
    let mut seen = std::collections::HashSet::new();
    while words.len() < count {
        let w: String = (0..3).map(|_| syllables[rng.gen_range(0..syllables.len())].as_str()).collect::<String>() + "n";
        if seen.insert(w.clone()) {
            words.push(w);
        }
    }
    words
}

fn sentence(words: &[String]) -> String {
    let mut s = words.join(" ");
    if let Some(first) = s.get_mut(0..1) {
        first.make_ascii_uppercase();
    }
    s.push('.');
    s
}

fn catalog_from(keywords: &[Vec<String>], categories: &[&str], name: &str) -> RequirementCatalog {
    let reqs = keywords
        .iter()
        .enumerate()
        .map(|(j, kw)| {
            let mut r = Requirement::new(
                format!("R{:02}", j + 1),
                categories[j % categories.len()],
                kw[0].clone(),
            );
            r.description = format!("Angaben zu {}", kw.join(", "));
            r
        })
        .collect();
    RequirementCatalog::new(name, reqs).expect("generated ids are unique")
}

/// Reports where a small share of segments is relevant, marked by planted keywords.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordCorpusConfig {
    pub documents: usize,
    pub requirements: usize,
    pub segments_per_document: usize,
    /// Probability that a segment is relevant to at least one requirement.
    pub positive_rate: f64,
    pub keywords_per_requirement: usize,
    pub filler_vocabulary: usize,
    pub seed: u64,
}

impl Default for KeywordCorpusConfig {
    fn default() -> Self {
        KeywordCorpusConfig {
            documents: 200,
            requirements: 10,
            segments_per_document: 30,
            positive_rate: 0.09,
            keywords_per_requirement: 4,
            filler_vocabulary: 600,
            seed: 42,
        }
    }
}

pub fn keyword_corpus(cfg: &KeywordCorpusConfig) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let kw_total = cfg.requirements * cfg.keywords_per_requirement;
    let pool = word_pool(&mut rng, kw_total + cfg.filler_vocabulary);
    let keywords: Vec<Vec<String>> = pool[..kw_total]
        .chunks(cfg.keywords_per_requirement)
        .map(<[String]>::to_vec)
        .collect();
    let filler = &pool[kw_total..];
    let catalog = catalog_from(&keywords, &["economy", "environment", "social"], "keyword-corpus");

    let mut docs = Vec::with_capacity(cfg.documents);
    for d in 0..cfg.documents {
        let doc_id = format!("doc{d:04}");
        let mut annotations = AnnotationSet::new(doc_id.clone());
        let mut segments = Vec::with_capacity(cfg.segments_per_document);
        for s in 0..cfg.segments_per_document {
            let seg_id = format!("s{s}");
            let mut words: Vec<String> = (0..rng.gen_range(8..20))
                .map(|_| filler[rng.gen_range(0..filler.len())].clone())
                .collect();
            if rng.gen_bool(cfg.positive_rate) {
                let linked = if rng.gen_bool(0.1) { 2 } else { 1 };
                let mut reqs: Vec<usize> = (0..cfg.requirements).collect();
                reqs.shuffle(&mut rng);
                for &j in reqs.iter().take(linked.min(cfg.requirements)) {
                    annotations.insert(seg_id.clone(), catalog.requirements()[j].req_id.clone());
                    for _ in 0..rng.gen_range(1..=2) {
                        let kw = keywords[j].choose(&mut rng).expect("keywords").clone();
                        let at = rng.gen_range(0..=words.len());
                        words.insert(at, kw);
                    }
                }
            }
            let kind = if rng.gen_bool(0.1) { SegmentKind::Enumeration } else { SegmentKind::Paragraph };
            segments.push(Segment::new(seg_id, kind, sentence(&words)));
        }
        let document = Document::new(doc_id, "de", SourceFormat::Json, segments)?;
        docs.push(LabeledDocument { document, annotations });
    }
    Ok(Dataset { catalog, docs })
}

/// Reports organized in sections, one per addressed requirement, where every
/// segment belongs to its section's requirement. Topic vocabularies of
/// neighbouring requirements overlap and many words are generic, so the
/// signal is noisy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionCorpusConfig {
    pub documents: usize,
    pub requirements: usize,
    pub topic_words: usize,
    /// Topic words shared with the next requirement.
    pub shared_words: usize,
    /// Share of topic words among a segment's words.
    pub topic_share: f64,
    pub filler_vocabulary: usize,
    pub seed: u64,
}

impl Default for SectionCorpusConfig {
    fn default() -> Self {
        SectionCorpusConfig {
            documents: 120,
            requirements: 12,
            topic_words: 12,
            shared_words: 4,
            topic_share: 0.25,
            filler_vocabulary: 800,
            seed: 42,
        }
    }
}

pub fn section_corpus(cfg: &SectionCorpusConfig) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let own = cfg.topic_words - cfg.shared_words;
    let pool = word_pool(&mut rng, cfg.requirements * own + cfg.filler_vocabulary);
    let own_words: Vec<&[String]> = pool[..cfg.requirements * own].chunks(own).collect();
    let filler = &pool[cfg.requirements * own..];
    let topics: Vec<Vec<String>> = (0..cfg.requirements)
        .map(|j| {
            let next = own_words[(j + 1) % cfg.requirements];
            own_words[j].iter().chain(next.iter().take(cfg.shared_words)).cloned().collect()
        })
        .collect();
    let catalog = catalog_from(&topics, &["strategie", "prozesse", "umwelt", "gesellschaft"], "section-corpus");

    let mut docs = Vec::with_capacity(cfg.documents);
    for d in 0..cfg.documents {
        let doc_id = format!("dnk{d:04}");
        let mut annotations = AnnotationSet::new(doc_id.clone());
        let mut segments = Vec::new();
        let mut addressed: Vec<usize> = (0..cfg.requirements).filter(|_| rng.gen_bool(0.8)).collect();
        if addressed.is_empty() {
            addressed.push(rng.gen_range(0..cfg.requirements));
        }
        for j in addressed {
            for _ in 0..rng.gen_range(1..=4) {
                let seg_id = format!("s{}", segments.len());
                let len = rng.gen_range(8..24);
                let words: Vec<String> = (0..len)
                    .map(|_| {
                        if rng.gen_bool(cfg.topic_share) {
                            topics[j].choose(&mut rng).expect("topic").clone()
                        } else {
                            filler[rng.gen_range(0..filler.len())].clone()
                        }
                    })
                    .collect();
                annotations.insert(seg_id.clone(), catalog.requirements()[j].req_id.clone());
                segments.push(Segment::new(seg_id, SegmentKind::Paragraph, sentence(&words)));
            }
        }
        let document = Document::new(doc_id, "de", SourceFormat::DnkHtml, segments)?;
        docs.push(LabeledDocument { document, annotations });
    }
    Ok(Dataset { catalog, docs })
}

/// Renders a labeled document as section-structured HTML whose headings are
/// the requirement titles.
pub fn render_section_html(doc: &LabeledDocument, catalog: &RequirementCatalog) -> String {
    let mut html = String::from("<html><body>\n");
    let mut current: Option<&str> = None;
    for seg in &doc.document.segments {
        let req = doc
            .annotations
            .links
            .iter()
            .find(|(s, _)| s == &seg.id)
            .map(|(_, r)| r.as_str());
        if req != current {
            if let Some(r) = req.and_then(|r| catalog.index_of(r)).and_then(|i| catalog.get(i)) {
                html.push_str(&format!("<h2>{}</h2>\n", escape(&r.title)));
            }
            current = req;
        }
        html.push_str(&format!("<p>{}</p>\n", escape(&seg.text)));
    }
    html.push_str("</body></html>\n");
    html
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_dnk_html, HeadingMap};

    #[test]
    fn keyword_corpus_shape() {
        let ds = keyword_corpus(&KeywordCorpusConfig::default()).unwrap();
        assert_eq!(ds.docs.len(), 200);
        assert_eq!(ds.catalog.len(), 10);
        let rate = ds.positive_rate();
        assert!((0.07..0.11).contains(&rate), "positive rate {rate}");
        for d in &ds.docs {
            d.annotations.validate(&d.document, &ds.catalog).unwrap();
        }
    }

    #[test]
    fn generation_is_seeded() {
        let cfg = KeywordCorpusConfig {
            documents: 5,
            ..KeywordCorpusConfig::default()
        };
        assert_eq!(keyword_corpus(&cfg).unwrap(), keyword_corpus(&cfg).unwrap());
        let other = KeywordCorpusConfig { seed: 7, ..cfg.clone() };
        assert_ne!(keyword_corpus(&cfg).unwrap(), keyword_corpus(&other).unwrap());
    }

    #[test]
    fn section_corpus_is_fully_matched() {
        let ds = section_corpus(&SectionCorpusConfig {
            documents: 10,
            ..SectionCorpusConfig::default()
        })
        .unwrap();
        for d in &ds.docs {
            assert_eq!(d.annotations.len(), d.document.len());
        }
        assert_eq!(ds.positive_rate(), 1.0);
    }

    #[test]
    fn section_html_round_trips_through_parser() {
        let ds = section_corpus(&SectionCorpusConfig {
            documents: 3,
            ..SectionCorpusConfig::default()
        })
        .unwrap();
        let headings = HeadingMap::from_catalog(&ds.catalog);
        for d in &ds.docs {
            let html = render_section_html(d, &ds.catalog);
            let parsed = parse_dnk_html(html.as_bytes(), &d.document.doc_id, &headings).unwrap();
            assert_eq!(parsed.document.len(), d.document.len());
            assert_eq!(parsed.annotations.len(), d.annotations.len());
            assert!(parsed.unknown_headings.is_empty());
        }
    }
}
