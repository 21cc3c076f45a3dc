//! Per-device poison identification: bias-feature mining plus a supervised
//! classifier, with recall-weighted evaluation.

mod features;
mod forest;

pub use features::{
    create_feature, feature_names, kl_divergence, mine_features, Aggregation, BiasFeature,
    BiasFeatureMatrix, BiasFeatureSpec, ReferenceStats, HISTOGRAM_BINS,
};
pub use forest::{
    predict, predict_scores, train_forest, train_forest_with_oob, ForestModel, ForestParams,
    MODEL_VERSION,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A supervised device classifier over bias-feature rows.
pub trait Classifier: Send + Sync {
    fn name(&self) -> &'static str;
    fn fit(&mut self, features: &BiasFeatureMatrix) -> Result<()>;
    fn predict(&self, features: &BiasFeatureMatrix) -> Result<Vec<bool>>;
    /// Poison score per row in [0, 1].
    fn scores(&self, features: &BiasFeatureMatrix) -> Result<Vec<f64>>;
}

/// The shipped default: the random forest.
pub struct ForestClassifier {
    params: ForestParams,
    model: Option<ForestModel>,
}

impl ForestClassifier {
    pub fn new(params: ForestParams) -> Self {
        ForestClassifier { params, model: None }
    }

    pub fn model(&self) -> Option<&ForestModel> {
        self.model.as_ref()
    }
}

impl Classifier for ForestClassifier {
    fn name(&self) -> &'static str {
        "forest"
    }

    fn fit(&mut self, features: &BiasFeatureMatrix) -> Result<()> {
        self.model = Some(train_forest(features, &self.params)?);
        Ok(())
    }

    fn predict(&self, features: &BiasFeatureMatrix) -> Result<Vec<bool>> {
        let model = self.model.as_ref().ok_or_else(|| Error::invalid("classifier not fitted"))?;
        predict(model, features)
    }

    fn scores(&self, features: &BiasFeatureMatrix) -> Result<Vec<f64>> {
        let model = self.model.as_ref().ok_or_else(|| Error::invalid("classifier not fitted"))?;
        predict_scores(model, features)
    }
}

pub fn classifier_names() -> &'static [&'static str] {
    &["forest"]
}

/// Build a classifier by registry name. Only the forest ships; the trait is
/// the extension point for other algorithms.
pub fn create_classifier(name: &str, forest: ForestParams) -> Result<Box<dyn Classifier>> {
    match name {
        "forest" | "random-forest" => Ok(Box::new(ForestClassifier::new(forest))),
        other => Err(Error::config(format!(
            "unknown classifier {other:?}; known: {:?}",
            classifier_names()
        ))),
    }
}

/// Identification quality of one prediction set.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IdentificationMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f2: f64,
    /// Predicted-positive fraction; the indirect attack-ratio estimate.
    pub estimated_ratio: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

/// Precision/recall/F2 and the estimated attack ratio. With no positive
/// truth labels and no positive predictions, F2 is defined as 1 (perfect
/// vacuous agreement).
pub fn evaluate(predictions: &[bool], truth: &[bool]) -> Result<IdentificationMetrics> {
    if predictions.len() != truth.len() {
        return Err(Error::invalid("prediction and truth lengths differ"));
    }
    if predictions.is_empty() {
        return Err(Error::invalid("cannot evaluate empty label vectors"));
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fne = 0usize;
    for (&p, &t) in predictions.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fne += 1,
            (false, false) => {}
        }
    }
    let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fne == 0 { 1.0 } else { tp as f64 / (tp + fne) as f64 };
    let f2 = if 4.0 * precision + recall == 0.0 {
        0.0
    } else {
        5.0 * precision * recall / (4.0 * precision + recall)
    };
    Ok(IdentificationMetrics {
        precision,
        recall,
        f2,
        estimated_ratio: predictions.iter().filter(|&&p| p).count() as f64
            / predictions.len() as f64,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fne,
    })
}

/// Pool several runs' counts into one F2 (micro average).
pub fn pool_metrics(parts: &[IdentificationMetrics]) -> IdentificationMetrics {
    let tp: usize = parts.iter().map(|m| m.true_positives).sum();
    let fp: usize = parts.iter().map(|m| m.false_positives).sum();
    let fne: usize = parts.iter().map(|m| m.false_negatives).sum();
    let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fne == 0 { 1.0 } else { tp as f64 / (tp + fne) as f64 };
    let f2 = if 4.0 * precision + recall == 0.0 {
        0.0
    } else {
        5.0 * precision * recall / (4.0 * precision + recall)
    };
    let ratio = if parts.is_empty() {
        0.0
    } else {
        parts.iter().map(|m| m.estimated_ratio).sum::<f64>() / parts.len() as f64
    };
    IdentificationMetrics {
        precision,
        recall,
        f2,
        estimated_ratio: ratio,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fne,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn f2_formula_arithmetic() {
        // P = 0.5, R = 1.0 -> F2 = 2.5/3
        let predictions = [true, true, false, false];
        let truth = [true, false, false, false];
        let m = evaluate(&predictions, &truth).unwrap();
        assert_relative_eq!(m.precision, 0.5, epsilon = 1e-12);
        assert_relative_eq!(m.recall, 1.0, epsilon = 1e-12);
        assert_relative_eq!(m.f2, 2.5 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(m.estimated_ratio, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn perfect_predictions_score_one() {
        let truth = [true, false, true, false, false];
        let m = evaluate(&truth, &truth).unwrap();
        assert_eq!(m.f2, 1.0);
        assert_relative_eq!(m.estimated_ratio, 0.4, epsilon = 1e-12);
    }

    #[test]
    fn vacuous_agreement_is_perfect() {
        let none = [false, false, false];
        let m = evaluate(&none, &none).unwrap();
        assert_eq!(m.f2, 1.0);

        // missed positives are not vacuous
        let m = evaluate(&none, &[true, false, false]).unwrap();
        assert_eq!(m.f2, 0.0);
    }

    #[test]
    fn ratio_counting_example() {
        // 3 predicted positives over 56 devices
        let mut predictions = vec![false; 56];
        predictions[3] = true;
        predictions[17] = true;
        predictions[42] = true;
        let truth = vec![false; 56];
        let m = evaluate(&predictions, &truth).unwrap();
        assert_relative_eq!(m.estimated_ratio, 3.0 / 56.0, epsilon = 1e-12);
        assert!((m.estimated_ratio - 0.0536).abs() < 1e-3);
    }
}
