//! Top-K modified sensitivity and average precision, and their means over
//! (document, requirement) pairs.
//!
//! For a ranking with relevance flags `rel(1..)` and `L` relevant
//! annotations:
//!
//! ```text
//! S(K)  = |top-K ∩ relevant| / min(K, L)
//! P(i)  = |top-i ∩ relevant| / i
//! AP(K) = Σ_{i=1..K} P(i)·rel(i) / min(K, L)
//! ```
//!
//! Pairs with `L = 0` are skipped and counted separately.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::AnnotationSet;
use crate::error::{Error, Result};
use crate::ranking::{ranked_rows, ScoreMatrix};

pub const DEFAULT_KS: [usize; 2] = [3, 5];

/// Relevance flags of a ranking plus the number of relevant annotations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceJudgment {
    ranked_rel: Vec<bool>,
    relevant_total: usize,
}

impl RelevanceJudgment {
    pub fn new(ranked_rel: Vec<bool>, relevant_total: usize) -> Result<Self> {
        let hits = ranked_rel.iter().filter(|&&r| r).count();
        if hits > relevant_total {
            return Err(Error::InvalidInput(format!(
                "{hits} relevant items ranked but only {relevant_total} annotations"
            )));
        }
        Ok(RelevanceJudgment {
            ranked_rel,
            relevant_total,
        })
    }

    pub fn ranked_rel(&self) -> &[bool] {
        &self.ranked_rel
    }

    pub fn relevant_total(&self) -> usize {
        self.relevant_total
    }
}

/// `None` when the pair has no relevant annotations.
pub fn sensitivity(j: &RelevanceJudgment, k: usize) -> Option<f64> {
    if j.relevant_total == 0 || k == 0 {
        return None;
    }
    let hits = j.ranked_rel.iter().take(k).filter(|&&r| r).count();
    Some(hits as f64 / k.min(j.relevant_total) as f64)
}

/// `None` when the pair has no relevant annotations.
pub fn average_precision(j: &RelevanceJudgment, k: usize) -> Option<f64> {
    if j.relevant_total == 0 || k == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &rel) in j.ranked_rel.iter().take(k).enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Some(sum / k.min(j.relevant_total) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMetrics {
    pub ms: f64,
    pub map: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_k: BTreeMap<usize, KMetrics>,
    pub evaluated: usize,
    pub skipped: usize,
}

impl MetricsReport {
    pub fn ms(&self, k: usize) -> Option<f64> {
        self.per_k.get(&k).map(|m| m.ms)
    }

    pub fn map(&self, k: usize) -> Option<f64> {
        self.per_k.get(&k).map(|m| m.map)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}

/// Unweighted mean of S(K) and AP(K) over pairs with at least one relevant
/// annotation.
pub fn mean_metrics(judgments: &[RelevanceJudgment], ks: &[usize]) -> Result<MetricsReport> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::InvalidInput("K values must be positive".into()));
    }
    let scored: Vec<&RelevanceJudgment> = judgments.iter().filter(|j| j.relevant_total > 0).collect();
    if scored.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let n = scored.len() as f64;
    let per_k = ks
        .iter()
        .map(|&k| {
            let ms = scored.iter().filter_map(|j| sensitivity(j, k)).sum::<f64>() / n;
            let map = scored.iter().filter_map(|j| average_precision(j, k)).sum::<f64>() / n;
            (k, KMetrics { ms, map })
        })
        .collect();
    Ok(MetricsReport {
        per_k,
        evaluated: scored.len(),
        skipped: judgments.len() - scored.len(),
    })
}

/// One judgment per requirement column: the top `depth` segments by score
/// against the document's annotations.
pub fn judge_document(scores: &ScoreMatrix, annotations: &AnnotationSet, depth: usize) -> Vec<RelevanceJudgment> {
    let mut relevant: HashMap<&str, Vec<&str>> = HashMap::new();
    for (seg, req) in &annotations.links {
        relevant.entry(req.as_str()).or_default().push(seg.as_str());
    }
    scores
        .req_ids()
        .iter()
        .enumerate()
        .map(|(col, req)| {
            let gold = relevant.get(req.as_str()).map(Vec::as_slice).unwrap_or_default();
            let ranked_rel = ranked_rows(scores, col, depth)
                .into_iter()
                .map(|r| gold.contains(&scores.segment_ids()[r].as_str()))
                .collect();
            let l = gold.iter().filter(|g| scores.segment_ids().iter().any(|s| s == *g)).count();
            RelevanceJudgment::new(ranked_rel, l).expect("ranked hits are a subset of annotations")
        })
        .collect()
}

/// Scores many documents at once.
pub fn evaluate<'a>(
    docs: impl IntoIterator<Item = (&'a ScoreMatrix, &'a AnnotationSet)>,
    ks: &[usize],
) -> Result<MetricsReport> {
    let depth = ks.iter().copied().max().unwrap_or(0);
    let judgments: Vec<RelevanceJudgment> = docs
        .into_iter()
        .flat_map(|(s, a)| judge_document(s, a, depth))
        .collect();
    mean_metrics(&judgments, ks)
}

/// Plain-text table with one row per model and MS/MAP columns per K, in percent.
pub fn render_table(rows: &[(&str, &MetricsReport)]) -> String {
    let mut ks: Vec<usize> = rows.iter().flat_map(|(_, r)| r.per_k.keys().copied()).collect();
    ks.sort_unstable();
    ks.dedup();
    let name_width = rows.iter().map(|(n, _)| n.chars().count()).max().unwrap_or(0).max(5);

    let mut out = String::new();
    let _ = write!(out, "{:<name_width$}", "Model");
    for metric in ["MS", "MAP"] {
        for k in &ks {
            let _ = write!(out, "  {:>7}", format!("{metric}@{k}"));
        }
    }
    out.push('\n');
    for (name, report) in rows {
        let _ = write!(out, "{name:<name_width$}");
        for pick in [MetricsReport::ms as fn(&MetricsReport, usize) -> Option<f64>, MetricsReport::map] {
            for &k in &ks {
                match pick(report, k) {
                    Some(v) => {
                        let _ = write!(out, "  {:>7.1}", v * 100.0);
                    }
                    None => {
                        let _ = write!(out, "  {:>7}", "-");
                    }
                }
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn j(rel: &[u8], l: usize) -> RelevanceJudgment {
        RelevanceJudgment::new(rel.iter().map(|&r| r == 1).collect(), l).unwrap()
    }

    #[test]
    fn sensitivity_examples() {
        assert_eq!(sensitivity(&j(&[1, 0, 1], 2), 3), Some(1.0));
        assert_eq!(sensitivity(&j(&[0, 0, 0], 4), 3), Some(0.0));
        assert_eq!(sensitivity(&j(&[1, 1, 1], 5), 3), Some(1.0));
        assert_eq!(sensitivity(&j(&[0, 0], 0), 3), None);
    }

    #[test]
    fn average_precision_examples() {
        assert!((average_precision(&j(&[1, 0, 1], 2), 3).unwrap() - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(average_precision(&j(&[1, 1], 2), 2), Some(1.0));
        assert_eq!(average_precision(&j(&[0, 1], 1), 2), Some(0.5));
        assert_eq!(average_precision(&j(&[], 0), 2), None);
    }

    #[test]
    fn judgment_rejects_impossible_hits() {
        assert!(RelevanceJudgment::new(vec![true, true], 1).is_err());
    }

    #[test]
    fn mean_of_two_pairs() {
        let report = mean_metrics(&[j(&[1, 1, 0], 2), j(&[0, 1, 0], 1), j(&[0, 0, 0], 0)], &[3]).unwrap();
        assert_eq!(report.map(3), Some(0.75));
        assert_eq!(report.evaluated, 2);
        assert_eq!(report.skipped, 1);
    }

    #[test]
    fn singleton_mean_equals_pair() {
        let pair = j(&[0, 1, 1, 0, 1], 4);
        let report = mean_metrics(std::slice::from_ref(&pair), &DEFAULT_KS).unwrap();
        for k in DEFAULT_KS {
            assert_eq!(report.ms(k), sensitivity(&pair, k));
            assert_eq!(report.map(k), average_precision(&pair, k));
        }
    }

    #[test]
    fn all_skipped_is_error() {
        assert!(matches!(mean_metrics(&[j(&[0], 0)], &[3]), Err(Error::EmptyEvaluation)));
        assert!(matches!(mean_metrics(&[], &[3]), Err(Error::EmptyEvaluation)));
        assert!(mean_metrics(&[j(&[1], 1)], &[0]).is_err());
    }

    #[test]
    fn judge_document_uses_ranking() {
        let scores = ScoreMatrix::new(
            "d",
            vec!["a".into(), "b".into(), "c".into()],
            vec!["r1".into(), "r2".into()],
            vec![vec![0.9, 0.1], vec![0.2, 0.3], vec![0.8, 0.2]],
        )
        .unwrap();
        let mut ann = AnnotationSet::new("d");
        ann.insert("c", "r1");
        let js = judge_document(&scores, &ann, 3);
        assert_eq!(js[0].ranked_rel(), &[false, true, false]);
        assert_eq!(js[0].relevant_total(), 1);
        assert_eq!(js[1].relevant_total(), 0);
        let report = evaluate([(&scores, &ann)], &[3]).unwrap();
        assert_eq!(report.map(3), Some(0.5));
        assert_eq!(report.skipped, 1);
    }

    #[test]
    fn table_layout() {
        let report = mean_metrics(&[j(&[1, 0, 1, 0, 0], 2)], &DEFAULT_KS).unwrap();
        let table = render_table(&[("tfidf+lr", &report)]);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("Model"));
        assert!(lines[0].contains("MS@3") && lines[0].contains("MAP@5"));
        let numbers: Vec<&str> = lines[1].split_whitespace().skip(1).collect();
        assert_eq!(numbers, vec!["100.0", "100.0", "83.3", "83.3"]);
    }
}
