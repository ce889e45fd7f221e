//! Requirement-to-segments ranking over a document's score matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// N×M relevance scores; rows follow segment order, columns catalog order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    doc_id: String,
    segment_ids: Vec<String>,
    req_ids: Vec<String>,
    values: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(
        doc_id: impl Into<String>,
        segment_ids: Vec<String>,
        req_ids: Vec<String>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if rows.len() != segment_ids.len() {
            return Err(Error::Shape {
                expected: segment_ids.len(),
                actual: rows.len(),
            });
        }
        let m = req_ids.len();
        let mut values = Vec::with_capacity(rows.len() * m);
        for row in rows {
            if row.len() != m {
                return Err(Error::Shape {
                    expected: m,
                    actual: row.len(),
                });
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
                return Err(Error::Numerical(format!("score {v} outside [0, 1]")));
            }
            values.extend(row);
        }
        Ok(ScoreMatrix {
            doc_id: doc_id.into(),
            segment_ids,
            req_ids,
            values,
        })
    }

    pub fn doc_id(&self) -> &str {
        &self.doc_id
    }

    pub fn segment_ids(&self) -> &[String] {
        &self.segment_ids
    }

    pub fn req_ids(&self) -> &[String] {
        &self.req_ids
    }

    pub fn n_segments(&self) -> usize {
        self.segment_ids.len()
    }

    pub fn n_requirements(&self) -> usize {
        self.req_ids.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.req_ids.len() + col]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_segments()).map(|r| self.get(r, col)).collect()
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let m = self.req_ids.len();
        &self.values[row * m..(row + 1) * m]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendedItem {
    pub segment_id: String,
    pub score: f64,
}

/// Top-K segments for one requirement, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationList {
    pub req_id: String,
    pub items: Vec<RecommendedItem>,
}

/// Row indices of the top `k` segments for column `col`: score descending,
/// ties in reading order.
pub fn ranked_rows(scores: &ScoreMatrix, col: usize, k: usize) -> Vec<usize> {
    let mut rows: Vec<usize> = (0..scores.n_segments()).collect();
    // Stable sort keeps reading order among equal scores.
    rows.sort_by(|&a, &b| scores.get(b, col).total_cmp(&scores.get(a, col)));
    rows.truncate(k);
    rows
}

pub fn rank(scores: &ScoreMatrix, req_index: usize, k: usize) -> Result<RecommendationList> {
    if req_index >= scores.n_requirements() {
        return Err(Error::NotFound(format!(
            "requirement index {req_index} (catalog has {})",
            scores.n_requirements()
        )));
    }
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let items = ranked_rows(scores, req_index, k)
        .into_iter()
        .map(|r| RecommendedItem {
            segment_id: scores.segment_ids[r].clone(),
            score: scores.get(r, req_index),
        })
        .collect();
    Ok(RecommendationList {
        req_id: scores.req_ids[req_index].clone(),
        items,
    })
}

pub fn rank_all(scores: &ScoreMatrix, k: usize) -> Result<Vec<RecommendationList>> {
    (0..scores.n_requirements()).map(|j| rank(scores, j, k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix(cols: Vec<Vec<f64>>) -> ScoreMatrix {
        let n = cols[0].len();
        let m = cols.len();
        let rows = (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
        ScoreMatrix::new(
            "d",
            (0..n).map(|i| format!("s{i}")).collect(),
            (0..m).map(|j| format!("r{j}")).collect(),
            rows,
        )
        .unwrap()
    }

    fn ids(list: &RecommendationList) -> Vec<&str> {
        list.items.iter().map(|i| i.segment_id.as_str()).collect()
    }

    #[test]
    fn ties_follow_reading_order() {
        let s = matrix(vec![vec![0.2, 0.9, 0.9, 0.1]]);
        assert_eq!(ids(&rank(&s, 0, 2).unwrap()), vec!["s1", "s2"]);
    }

    #[test]
    fn k_saturates_at_n() {
        let s = matrix(vec![vec![0.2, 0.9, 0.5]]);
        assert_eq!(ids(&rank(&s, 0, 10).unwrap()), vec!["s1", "s2", "s0"]);
    }

    #[test]
    fn all_equal_scores() {
        let s = matrix(vec![vec![0.4; 6]]);
        assert_eq!(ids(&rank(&s, 0, 3).unwrap()), vec!["s0", "s1", "s2"]);
    }

    #[test]
    fn errors() {
        let s = matrix(vec![vec![0.4; 2]]);
        assert!(matches!(rank(&s, 1, 3), Err(Error::NotFound(_))));
        assert!(matches!(rank(&s, 0, 0), Err(Error::InvalidInput(_))));
        assert!(ScoreMatrix::new("d", vec!["a".into()], vec!["r".into()], vec![vec![1.5]]).is_err());
        assert!(ScoreMatrix::new("d", vec!["a".into()], vec!["r".into()], vec![vec![f64::NAN]]).is_err());
        assert!(ScoreMatrix::new("d", vec!["a".into()], vec!["r".into()], vec![vec![0.1, 0.2]]).is_err());
    }

    #[test]
    fn one_list_per_requirement() {
        let s = matrix(vec![vec![0.5]; 33]);
        let lists = rank_all(&s, 3).unwrap();
        assert_eq!(lists.len(), 33);
        assert!(lists.iter().all(|l| ids(l) == vec!["s0"]));
    }

    #[test]
    fn columns_are_independent() {
        let a = matrix(vec![vec![0.1, 0.7, 0.3], vec![0.9, 0.2, 0.4]]);
        let b = matrix(vec![vec![0.1, 0.7, 0.3], vec![0.0, 1.0, 0.5]]);
        assert_eq!(rank(&a, 0, 2).unwrap(), rank(&b, 0, 2).unwrap());
    }

    #[test]
    fn serializes_to_public_shape() {
        let s = matrix(vec![vec![0.25, 0.75]]);
        let json = serde_json::to_value(rank(&s, 0, 1).unwrap()).unwrap();
        assert_eq!(json, serde_json::json!({"req_id": "r0", "items": [{"segment_id": "s1", "score": 0.75}]}));
    }

    proptest! {
        #[test]
        fn monotone_transform_preserves_order(col in proptest::collection::vec(0.0f64..=1.0, 1..30), k in 1usize..35) {
            let s = matrix(vec![col.clone()]);
            let squashed = matrix(vec![col.iter().map(|v| v.powi(3) * 0.5 + 0.1).collect()]);
            let (a, b) = (rank(&s, 0, k).unwrap(), rank(&squashed, 0, k).unwrap());
            prop_assert_eq!(ids(&a), ids(&b));
        }

        #[test]
        fn full_rank_is_permutation(col in proptest::collection::vec(0.0f64..=1.0, 1..30)) {
            let s = matrix(vec![col.clone()]);
            let list = rank(&s, 0, col.len()).unwrap();
            let mut got = ids(&list);
            prop_assert!(list.items.windows(2).all(|w| w[0].score >= w[1].score));
            got.sort_unstable();
            got.dedup();
            prop_assert_eq!(got.len(), col.len());
        }
    }
}
