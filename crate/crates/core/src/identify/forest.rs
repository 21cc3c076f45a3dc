//! Random forest over bias-feature rows: Gini-split decision trees on
//! bootstrap row samples with per-split feature subsampling.

use serde::{Deserialize, Serialize};

use super::features::BiasFeatureMatrix;
use crate::error::{Error, Result};
use crate::rng::stream;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestParams {
    pub trees: usize,
    pub max_depth: usize,
    /// Features considered per split; None means ceil(sqrt(width)).
    #[serde(default)]
    pub features_per_split: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { trees: 100, max_depth: 8, features_per_split: None, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Node {
    Leaf { poisoned: bool },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, row: &[f64]) -> bool {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { poisoned } => return *poisoned,
                Node::Split { feature, threshold, left, right } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

/// Versioned, persistable forest. Predictions are deterministic given
/// (model, input).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestModel {
    pub version: u32,
    pub width: usize,
    pub params: ForestParams,
    trees: Vec<Tree>,
}

pub const MODEL_VERSION: u32 = 1;

impl ForestModel {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Stable content fingerprint (FNV-1a over the serialized form).
    pub fn fingerprint(&self) -> u64 {
        let bytes = serde_json::to_vec(self).expect("model serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x100_0000_01b3);
        }
        h
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: ForestModel =
            serde_json::from_str(text).map_err(|e| Error::invalid(e.to_string()))?;
        if model.version != MODEL_VERSION {
            return Err(Error::invalid(format!(
                "model version {} unsupported (expected {MODEL_VERSION})",
                model.version
            )));
        }
        Ok(model)
    }
}

/// Train a forest on labeled rows. Both classes must be present.
pub fn train_forest(features: &BiasFeatureMatrix, params: &ForestParams) -> Result<ForestModel> {
    Ok(train_forest_with_oob(features, params)?.0)
}

/// Train and also return out-of-bag poison scores per training row (mean
/// vote over the trees whose bootstrap sample excluded the row). Rows seen
/// by every tree fall back to the full-forest vote.
pub fn train_forest_with_oob(
    features: &BiasFeatureMatrix,
    params: &ForestParams,
) -> Result<(ForestModel, Vec<f64>)> {
    let labels = features
        .labels
        .as_ref()
        .ok_or_else(|| Error::invalid("training requires labels"))?;
    if params.trees == 0 {
        return Err(Error::config("at least one tree required"));
    }
    if features.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite feature value"));
    }
    let n = features.n_devices;
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == n {
        return Err(Error::invalid(
            "training labels contain a single class; both classes are required",
        ));
    }
    let per_split = params
        .features_per_split
        .unwrap_or_else(|| (features.width as f64).sqrt().ceil() as usize)
        .clamp(1, features.width);

    let mut trees = Vec::with_capacity(params.trees);
    let mut oob_votes = vec![0usize; n];
    let mut oob_counts = vec![0usize; n];
    for t in 0..params.trees {
        let mut rng = stream(params.seed, "identify/tree", &[t as u64]);
        use rand::Rng;
        let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let mut in_bag = vec![false; n];
        for &r in &rows {
            in_bag[r] = true;
        }
        let mut nodes = Vec::new();
        grow(
            features,
            labels,
            &rows,
            params.max_depth,
            per_split,
            &mut rng,
            &mut nodes,
        );
        let tree = Tree { nodes };
        for r in 0..n {
            if !in_bag[r] {
                oob_counts[r] += 1;
                if tree.predict(features.row(r)) {
                    oob_votes[r] += 1;
                }
            }
        }
        trees.push(tree);
    }
    let model = ForestModel {
        version: MODEL_VERSION,
        width: features.width,
        params: params.clone(),
        trees,
    };
    let full = predict_scores(&model, features)?;
    let oob = (0..n)
        .map(|r| {
            if oob_counts[r] > 0 {
                oob_votes[r] as f64 / oob_counts[r] as f64
            } else {
                full[r]
            }
        })
        .collect();
    Ok((model, oob))
}

fn majority(labels: &[bool], rows: &[usize]) -> bool {
    let pos = rows.iter().filter(|&&r| labels[r]).count();
    // ties break toward clean
    2 * pos > rows.len()
}

fn gini(pos: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = pos as f64 / total as f64;
    2.0 * p * (1.0 - p)
}

fn grow(
    features: &BiasFeatureMatrix,
    labels: &[bool],
    rows: &[usize],
    depth_left: usize,
    per_split: usize,
    rng: &mut impl rand::Rng,
    nodes: &mut Vec<Node>,
) -> usize {
    let pos = rows.iter().filter(|&&r| labels[r]).count();
    let here = nodes.len();
    if depth_left == 0 || pos == 0 || pos == rows.len() || rows.len() < 2 {
        nodes.push(Node::Leaf { poisoned: majority(labels, rows) });
        return here;
    }

    // Feature subset for this split (partial Fisher-Yates, stable order).
    let mut candidates: Vec<usize> = (0..features.width).collect();
    for s in 0..per_split.min(features.width) {
        let r = s + rng.gen_range(0..candidates.len() - s);
        candidates.swap(s, r);
    }
    candidates.truncate(per_split);
    candidates.sort_unstable();

    let parent_impurity = gini(pos, rows.len());
    let mut best: Option<(f64, usize, f64)> = None; // (score, feature, threshold)
    let mut sorted: Vec<(f64, bool)> = Vec::with_capacity(rows.len());
    for &f in &candidates {
        sorted.clear();
        sorted.extend(rows.iter().map(|&r| (features.value(r, f), labels[r])));
        sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let total_pos = pos;
        let mut left_pos = 0usize;
        for i in 0..sorted.len() - 1 {
            if sorted[i].1 {
                left_pos += 1;
            }
            if sorted[i].0 == sorted[i + 1].0 {
                continue;
            }
            let left_n = i + 1;
            let right_n = sorted.len() - left_n;
            let score = (left_n as f64 * gini(left_pos, left_n)
                + right_n as f64 * gini(total_pos - left_pos, right_n))
                / sorted.len() as f64;
            let threshold = 0.5 * (sorted[i].0 + sorted[i + 1].0);
            let better = match &best {
                None => true,
                Some((s, bf, bt)) => {
                    score < s - 1e-15
                        || ((score - s).abs() <= 1e-15 && (f, threshold) < (*bf, *bt))
                }
            };
            if better {
                best = Some((score, f, threshold));
            }
        }
    }

    match best {
        Some((score, feature, threshold)) if score < parent_impurity - 1e-12 => {
            let (mut left_rows, mut right_rows) = (Vec::new(), Vec::new());
            for &r in rows {
                if features.value(r, feature) <= threshold {
                    left_rows.push(r);
                } else {
                    right_rows.push(r);
                }
            }
            nodes.push(Node::Leaf { poisoned: false }); // placeholder
            let left = grow(features, labels, &left_rows, depth_left - 1, per_split, rng, nodes);
            let right = grow(features, labels, &right_rows, depth_left - 1, per_split, rng, nodes);
            nodes[here] = Node::Split { feature, threshold, left, right };
            here
        }
        _ => {
            nodes.push(Node::Leaf { poisoned: majority(labels, rows) });
            here
        }
    }
}

/// Majority vote across trees; ties break toward clean.
pub fn predict(model: &ForestModel, features: &BiasFeatureMatrix) -> Result<Vec<bool>> {
    Ok(predict_scores(model, features)?.into_iter().map(|s| s > 0.5).collect())
}

/// Fraction of trees voting poisoned, per device row.
pub fn predict_scores(model: &ForestModel, features: &BiasFeatureMatrix) -> Result<Vec<f64>> {
    if features.width != model.width {
        return Err(Error::invalid(format!(
            "feature width {} does not match training width {}",
            features.width, model.width
        )));
    }
    let mut scores = Vec::with_capacity(features.n_devices);
    for i in 0..features.n_devices {
        let row = features.row(i);
        let votes = model.trees.iter().filter(|t| t.predict(row)).count();
        scores.push(votes as f64 / model.trees.len() as f64);
    }
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(values: Vec<f64>, width: usize, labels: Vec<bool>) -> BiasFeatureMatrix {
        let n = values.len() / width;
        BiasFeatureMatrix {
            feature: "mean".into(),
            window_start: 0,
            n_devices: n,
            width,
            values,
            labels: Some(labels),
        }
    }

    fn separable(n: usize) -> BiasFeatureMatrix {
        let labels: Vec<bool> = (0..n).map(|i| i % 4 == 0).collect();
        let values: Vec<f64> = labels
            .iter()
            .flat_map(|&l| {
                let v = if l { 1.0 } else { 0.0 };
                vec![v, v]
            })
            .collect();
        matrix(values, 2, labels)
    }

    #[test]
    fn separable_fixture_is_learned_exactly() {
        let m = separable(40);
        let model = train_forest(&m, &ForestParams { trees: 20, seed: 3, ..Default::default() })
            .unwrap();
        let pred = predict(&model, &m).unwrap();
        assert_eq!(&pred, m.labels.as_ref().unwrap());
    }

    #[test]
    fn single_class_labels_are_rejected() {
        let m = matrix(vec![0.0, 0.0, 1.0, 1.0], 2, vec![false, false]);
        let err = train_forest(&m, &ForestParams::default()).unwrap_err();
        assert!(err.to_string().contains("single class"), "{err}");
    }

    #[test]
    fn training_is_deterministic() {
        let m = separable(32);
        let p = ForestParams { trees: 15, seed: 11, ..Default::default() };
        let a = train_forest(&m, &p).unwrap();
        let b = train_forest(&m, &p).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        let c = train_forest(&m, &ForestParams { seed: 12, ..p }).unwrap();
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let m = separable(16);
        let model = train_forest(&m, &ForestParams { trees: 5, seed: 1, ..Default::default() })
            .unwrap();
        let wrong = matrix(vec![0.0; 16 * 3], 3, vec![false; 16]);
        assert!(predict(&model, &wrong).is_err());
    }

    #[test]
    fn identical_rows_get_identical_predictions() {
        let m = separable(24);
        let model = train_forest(&m, &ForestParams { trees: 9, seed: 2, ..Default::default() })
            .unwrap();
        let same = matrix(vec![0.5, 0.5, 0.5, 0.5, 0.5, 0.5], 2, vec![false; 3]);
        let pred = predict(&model, &same).unwrap();
        assert!(pred.iter().all(|&p| p == pred[0]));
    }

    #[test]
    fn row_locality_of_predictions() {
        let m = separable(24);
        let model = train_forest(&m, &ForestParams { trees: 9, seed: 2, ..Default::default() })
            .unwrap();
        let mut probe = separable(8);
        let before = predict(&model, &probe).unwrap();
        probe.values[0] = 42.0; // change row 0 only
        probe.values[1] = 42.0;
        let after = predict(&model, &probe).unwrap();
        assert_eq!(before[1..], after[1..]);
    }

    #[test]
    fn model_round_trips_through_json() {
        let m = separable(20);
        let model = train_forest(&m, &ForestParams { trees: 7, seed: 5, ..Default::default() })
            .unwrap();
        let back = ForestModel::from_json(&model.to_json()).unwrap();
        assert_eq!(model.fingerprint(), back.fingerprint());
    }
}
