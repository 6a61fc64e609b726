use serde::{Deserialize, Serialize};

use crate::attribution::ShapMatrix;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Features ordered by mean absolute attribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRanking {
    /// Feature indices, most important first.
    pub order: Vec<usize>,
    /// Mean |phi| per feature, indexed by feature.
    pub scores: Vec<f64>,
    pub feature_names: Vec<String>,
    pub method: String,
}

impl ImportanceRanking {
    pub fn from_phi(phi: &Matrix, feature_names: &[String], method: &str) -> Result<Self> {
        if phi.rows() == 0 || phi.cols() == 0 {
            return Err(Error::Empty("attribution matrix"));
        }
        let n = phi.rows() as f64;
        let mut scores = vec![0.0; phi.cols()];
        for row in phi.iter_rows() {
            for (s, v) in scores.iter_mut().zip(row) {
                *s += v.abs();
            }
        }
        scores.iter_mut().for_each(|s| *s /= n);
        let mut order: Vec<usize> = (0..phi.cols()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        Ok(Self {
            order,
            scores,
            feature_names: feature_names.to_vec(),
            method: method.to_owned(),
        })
    }

    /// Scores in rank order.
    pub fn ranked_scores(&self) -> Vec<f64> {
        self.order.iter().map(|&j| self.scores[j]).collect()
    }

    /// The `k` highest-ranked features, in rank order.
    pub fn top_k(&self, k: usize) -> &[usize] {
        &self.order[..k.min(self.order.len())]
    }

    /// Rank position of each feature.
    pub fn rank_of(&self) -> Vec<usize> {
        let mut rank = vec![0; self.order.len()];
        for (r, &j) in self.order.iter().enumerate() {
            rank[j] = r;
        }
        rank
    }
}

pub fn global_importance(shap: &ShapMatrix) -> Result<ImportanceRanking> {
    ImportanceRanking::from_phi(&shap.phi, &shap.feature_names, shap.config.method.as_str())
}
