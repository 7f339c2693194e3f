//! Probability-machine random forests over public item descriptors.
//!
//! A forest estimates the conditional distribution of ratings given the
//! descriptors of an item. Each tree is grown on a bootstrap resample with
//! Gini splits and stores class proportions in its leaves; the forest
//! prediction is the average of the leaf vectors the descriptor falls into.

mod io;
mod tree;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{ItemId, Label, LabelSet};
use crate::rng::{rng_for, TAG_TREE};

pub use io::{read_forest, write_forest, FOREST_FORMAT, FOREST_VERSION};
pub use tree::{Node, Tree};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BenchmarkError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("descriptor does not match schema: {0}")]
    SchemaMismatch(String),
    #[error("invalid forest configuration: {0}")]
    InvalidConfig(String),
    #[error("epsilon must lie in (0, 1/{labels}], got {value}")]
    InvalidEpsilon { value: f64, labels: usize },
    #[error("forest file line {line}: {message}")]
    Format { line: usize, message: String },
}

/// Arity and kinds of descriptor features. Categorical features carry their
/// number of categories.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescriptorSchema {
    #[serde(default)]
    pub numeric: usize,
    #[serde(default)]
    pub categorical: Vec<u32>,
}

impl DescriptorSchema {
    pub fn feature_count(&self) -> usize {
        self.numeric + self.categorical.len()
    }

    pub fn check(&self, d: &DescriptorVector) -> Result<(), BenchmarkError> {
        if d.numeric.len() != self.numeric {
            return Err(BenchmarkError::SchemaMismatch(format!(
                "expected {} numeric features, got {}",
                self.numeric,
                d.numeric.len()
            )));
        }
        if d.categorical.len() != self.categorical.len() {
            return Err(BenchmarkError::SchemaMismatch(format!(
                "expected {} categorical features, got {}",
                self.categorical.len(),
                d.categorical.len()
            )));
        }
        if let Some(x) = d.numeric.iter().find(|x| !x.is_finite()) {
            return Err(BenchmarkError::SchemaMismatch(format!(
                "numeric feature is not finite: {x}"
            )));
        }
        for (i, (&c, &card)) in d.categorical.iter().zip(&self.categorical).enumerate() {
            if c >= card {
                return Err(BenchmarkError::SchemaMismatch(format!(
                    "categorical feature {i} has value {c} but only {card} categories"
                )));
            }
        }
        Ok(())
    }
}

/// Publicly observable features of an item (word count, field, stage, ...).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescriptorVector {
    #[serde(default)]
    pub numeric: Vec<f64>,
    #[serde(default)]
    pub categorical: Vec<u32>,
}

impl DescriptorVector {
    pub fn new(numeric: Vec<f64>, categorical: Vec<u32>) -> Self {
        Self { numeric, categorical }
    }

    /// Value of flattened feature `f` (numeric features first).
    pub(crate) fn feature(&self, f: usize) -> f64 {
        if f < self.numeric.len() {
            self.numeric[f]
        } else {
            self.categorical[f - self.numeric.len()] as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRow {
    pub item: ItemId,
    pub descriptors: DescriptorVector,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    schema: DescriptorSchema,
    labels: LabelSet,
    rows: Vec<TrainingRow>,
}

impl TrainingSet {
    pub fn new(schema: DescriptorSchema, labels: LabelSet) -> Self {
        Self {
            schema,
            labels,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: TrainingRow) -> Result<(), BenchmarkError> {
        self.schema.check(&row.descriptors)?;
        if !self.labels.contains(row.label) {
            return Err(BenchmarkError::SchemaMismatch(format!(
                "label index {} outside a set of {}",
                row.label.0,
                self.labels.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn schema(&self) -> &DescriptorSchema {
        &self.schema
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn rows(&self) -> &[TrainingRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Empirical label frequencies.
    pub fn marginal(&self) -> Vec<f64> {
        let mut counts = vec![0.0; self.labels.len()];
        for row in &self.rows {
            counts[row.label.index()] += 1.0;
        }
        let n = self.rows.len().max(1) as f64;
        counts.iter_mut().for_each(|c| *c /= n);
        counts
    }

    /// Copy without the rows that came from `item`.
    pub fn without_item(&self, item: ItemId) -> TrainingSet {
        TrainingSet {
            schema: self.schema.clone(),
            labels: self.labels.clone(),
            rows: self.rows.iter().filter(|r| r.item != item).cloned().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub tree_count: usize,
    /// `None` grows trees until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_leaf_size: usize,
    /// `None` means `ceil(sqrt(feature count))`.
    pub features_per_split: Option<usize>,
    pub bootstrap_fraction: f64,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            tree_count: 200,
            max_depth: None,
            min_leaf_size: 5,
            features_per_split: None,
            bootstrap_fraction: 1.0,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<(), BenchmarkError> {
        if self.tree_count == 0 {
            return Err(BenchmarkError::InvalidConfig("tree_count must be at least 1".into()));
        }
        if self.min_leaf_size == 0 {
            return Err(BenchmarkError::InvalidConfig("min_leaf_size must be at least 1".into()));
        }
        if !(self.bootstrap_fraction > 0.0 && self.bootstrap_fraction <= 1.0) {
            return Err(BenchmarkError::InvalidConfig(format!(
                "bootstrap_fraction must lie in (0, 1], got {}",
                self.bootstrap_fraction
            )));
        }
        if self.features_per_split == Some(0) {
            return Err(BenchmarkError::InvalidConfig("features_per_split must be at least 1".into()));
        }
        Ok(())
    }

    pub(crate) fn resolved_features_per_split(&self, feature_count: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| (feature_count as f64).sqrt().ceil() as usize)
            .max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub(crate) schema: DescriptorSchema,
    pub(crate) labels: LabelSet,
    pub(crate) config: ForestConfig,
    pub(crate) trees: Vec<Tree>,
}

pub fn train_forest(data: &TrainingSet, config: &ForestConfig) -> Result<Forest, BenchmarkError> {
    config.validate()?;
    if data.is_empty() {
        return Err(BenchmarkError::EmptyTrainingSet);
    }
    let matrix = tree::Matrix::from_training_set(data);
    let trees = (0..config.tree_count)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_for(config.seed, &[TAG_TREE, t as u64]);
            tree::grow(&matrix, config, &mut rng)
        })
        .collect();
    Ok(Forest {
        schema: data.schema().clone(),
        labels: data.labels().clone(),
        config: config.clone(),
        trees,
    })
}

/// Trains on every row that did not originate from `item`, keeping the
/// benchmark for `item` independent of the reports being scored.
pub fn train_excluding(
    data: &TrainingSet,
    config: &ForestConfig,
    item: ItemId,
) -> Result<Forest, BenchmarkError> {
    train_forest(&data.without_item(item), config)
}

impl Forest {
    pub fn predict_proba(&self, d: &DescriptorVector) -> Result<Vec<f64>, BenchmarkError> {
        self.schema.check(d)?;
        let mut acc = vec![0.0; self.labels.len()];
        for tree in &self.trees {
            for (a, p) in acc.iter_mut().zip(tree.leaf_for(d)) {
                *a += p;
            }
        }
        let n = self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(acc)
    }

    pub fn schema(&self) -> &DescriptorSchema {
        &self.schema
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }
}

/// Lower bound on benchmark probabilities; `0 < value <= 1/m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Epsilon(f64);

impl Epsilon {
    pub const DEFAULT: f64 = 0.05;

    pub fn new(value: f64, label_count: usize) -> Result<Self, BenchmarkError> {
        if value > 0.0 && value <= 1.0 / label_count as f64 {
            Ok(Self(value))
        } else {
            Err(BenchmarkError::InvalidEpsilon {
                value,
                labels: label_count,
            })
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Benchmark distribution floored at epsilon. Not renormalized: it is only
/// ever used as a score denominator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regularized {
    values: Vec<f64>,
    epsilon: f64,
}

impl Regularized {
    pub fn get(&self, label: Label) -> f64 {
        self.values[label.index()]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

pub fn regularize(q: &[f64], eps: Epsilon) -> Regularized {
    Regularized {
        values: q.iter().map(|&p| p.max(eps.0)).collect(),
        epsilon: eps.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use proptest::prelude::*;
    use rand::Rng;

    fn labels() -> LabelSet {
        LabelSet::referee()
    }

    fn categorical_schema() -> DescriptorSchema {
        DescriptorSchema {
            numeric: 0,
            categorical: vec![3, 3],
        }
    }

    /// Truthful-rating generator: latent state t uniform over 3, each
    /// categorical descriptor equals t with probability 0.8 (else uniform over
    /// the other two), the label equals t with probability 0.7.
    struct Generator;

    impl Generator {
        fn emission(t: usize, v: usize) -> f64 {
            if t == v { 0.8 } else { 0.1 }
        }

        fn confusion(t: usize, x: usize) -> f64 {
            if t == x { 0.7 } else { 0.15 }
        }

        /// Exact P(label | descriptors) by Bayes over the latent state.
        fn truth(d: &DescriptorVector) -> Vec<f64> {
            let post: Vec<f64> = (0..3)
                .map(|t| d.categorical.iter().map(|&v| Self::emission(t, v as usize)).product::<f64>())
                .collect();
            let z: f64 = post.iter().sum();
            (0..3)
                .map(|x| (0..3).map(|t| post[t] / z * Self::confusion(t, x)).sum())
                .collect()
        }

        fn draw(rng: &mut impl Rng, item: u64) -> TrainingRow {
            let t = rng.random_range(0..3usize);
            let mut cat = Vec::new();
            for _ in 0..2 {
                cat.push(pick(rng, |v| Self::emission(t, v)) as u32);
            }
            let label = pick(rng, |x| Self::confusion(t, x));
            TrainingRow {
                item: ItemId(item),
                descriptors: DescriptorVector::new(vec![], cat),
                label: Label(label as u16),
            }
        }

        fn dataset(n: usize, seed: u64) -> TrainingSet {
            let mut rng = rng_for(seed, &[]);
            let mut ts = TrainingSet::new(categorical_schema(), labels());
            for i in 0..n {
                ts.push(Self::draw(&mut rng, i as u64)).unwrap();
            }
            ts
        }
    }

    fn pick(rng: &mut impl Rng, p: impl Fn(usize) -> f64) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for k in 0..3 {
            acc += p(k);
            if u < acc {
                return k;
            }
        }
        2
    }

    fn l1(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
    }

    fn held_out_l1(forest: &Forest, seed: u64) -> f64 {
        let mut rng = rng_for(seed, &[]);
        let n = 2000;
        (0..n)
            .map(|i| {
                let row = Generator::draw(&mut rng, i);
                l1(&forest.predict_proba(&row.descriptors).unwrap(), &Generator::truth(&row.descriptors))
            })
            .sum::<f64>()
            / n as f64
    }

    fn small_config(seed: u64) -> ForestConfig {
        ForestConfig {
            tree_count: 50,
            seed,
            ..ForestConfig::default()
        }
    }

    #[test]
    fn single_class_corpus_propagates() {
        let mut ts = TrainingSet::new(categorical_schema(), labels());
        let mut rng = rng_for(1, &[]);
        for i in 0..100 {
            let mut row = Generator::draw(&mut rng, i);
            row.label = Label(1);
            ts.push(row).unwrap();
        }
        let forest = train_forest(&ts, &small_config(1)).unwrap();
        for tree in forest.trees() {
            for node in tree.nodes() {
                if let Node::Leaf { p } = node {
                    assert_eq!(p, &vec![0.0, 1.0, 0.0]);
                }
            }
        }
        let d = DescriptorVector::new(vec![], vec![2, 0]);
        assert_eq!(forest.predict_proba(&d).unwrap(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn empty_training_set_rejected() {
        let ts = TrainingSet::new(categorical_schema(), labels());
        assert_eq!(train_forest(&ts, &small_config(0)), Err(BenchmarkError::EmptyTrainingSet));
    }

    #[test]
    fn schema_mismatch_rejected() {
        let mut ts = TrainingSet::new(categorical_schema(), labels());
        let bad = TrainingRow {
            item: ItemId(0),
            descriptors: DescriptorVector::new(vec![1.0], vec![0, 0]),
            label: Label(0),
        };
        assert!(matches!(ts.push(bad), Err(BenchmarkError::SchemaMismatch(_))));
        let out_of_range = TrainingRow {
            item: ItemId(0),
            descriptors: DescriptorVector::new(vec![], vec![3, 0]),
            label: Label(0),
        };
        assert!(ts.push(out_of_range).is_err());
        let forest = train_forest(&Generator::dataset(200, 2), &small_config(0)).unwrap();
        assert!(forest.predict_proba(&DescriptorVector::new(vec![], vec![0])).is_err());
    }

    #[test]
    fn config_validation() {
        for bad in [
            ForestConfig { tree_count: 0, ..ForestConfig::default() },
            ForestConfig { min_leaf_size: 0, ..ForestConfig::default() },
            ForestConfig { bootstrap_fraction: 0.0, ..ForestConfig::default() },
            ForestConfig { bootstrap_fraction: 1.5, ..ForestConfig::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn recovers_known_conditional_distribution() {
        let forest = train_forest(&Generator::dataset(10_000, 3), &ForestConfig { seed: 3, ..ForestConfig::default() }).unwrap();
        let err = held_out_l1(&forest, 1234);
        assert!(err < 0.05, "held-out L1 {err}");
    }

    #[test]
    fn descriptor_free_schema_predicts_marginal() {
        let mut ts = TrainingSet::new(DescriptorSchema::default(), labels());
        let mut rng = rng_for(4, &[]);
        for i in 0..1000 {
            let label = pick(&mut rng, |x| [0.2, 0.5, 0.3][x]);
            ts.push(TrainingRow {
                item: ItemId(i),
                descriptors: DescriptorVector::default(),
                label: Label(label as u16),
            })
            .unwrap();
        }
        let marginal = ts.marginal();
        let forest = train_forest(&ts, &ForestConfig { seed: 4, ..ForestConfig::default() }).unwrap();
        let p = forest.predict_proba(&DescriptorVector::default()).unwrap();
        // Average of 200 bootstrap marginals around the sample marginal.
        for (a, b) in p.iter().zip(&marginal) {
            assert!((a - b).abs() < 0.01, "{p:?} vs {marginal:?}");
        }
    }

    #[test]
    fn xor_cells_are_recovered() {
        // Two binary numeric features; label distribution depends only on x1 xor x2,
        // so neither feature alone carries any signal.
        let cell_truth = |x1: bool, x2: bool| -> [f64; 3] {
            if x1 ^ x2 { [0.1, 0.2, 0.7] } else { [0.7, 0.2, 0.1] }
        };
        let schema = DescriptorSchema { numeric: 2, categorical: vec![] };
        let mut ts = TrainingSet::new(schema, labels());
        let mut rng = rng_for(5, &[]);
        let mut brute = [[0usize; 3]; 4];
        for i in 0..10_000u64 {
            let x1 = rng.random::<bool>();
            let x2 = rng.random::<bool>();
            let truth = cell_truth(x1, x2);
            let label = pick(&mut rng, |x| truth[x]);
            brute[(x1 as usize) * 2 + x2 as usize][label] += 1;
            ts.push(TrainingRow {
                item: ItemId(i),
                descriptors: DescriptorVector::new(vec![x1 as u8 as f64, x2 as u8 as f64], vec![]),
                label: Label(label as u16),
            })
            .unwrap();
        }
        let forest = train_forest(&ts, &ForestConfig { seed: 5, ..ForestConfig::default() }).unwrap();
        for (cell, counts) in brute.iter().enumerate() {
            let (x1, x2) = (cell / 2 == 1, cell % 2 == 1);
            let d = DescriptorVector::new(vec![x1 as u8 as f64, x2 as u8 as f64], vec![]);
            let p = forest.predict_proba(&d).unwrap();
            let total: usize = counts.iter().sum();
            let empirical: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
            assert!(l1(&p, &cell_truth(x1, x2)) < 0.05, "cell {cell}: {p:?}");
            assert!(l1(&p, &empirical) < 0.05, "cell {cell}: {p:?} vs {empirical:?}");
        }
    }

    #[test]
    fn error_shrinks_with_training_size() {
        let errs: Vec<f64> = [1000, 5000, 20_000]
            .iter()
            .map(|&n| {
                let forest = train_forest(&Generator::dataset(n, 6), &ForestConfig { seed: 6, tree_count: 100, ..ForestConfig::default() }).unwrap();
                held_out_l1(&forest, 77)
            })
            .collect();
        assert!(errs[0] >= errs[1] && errs[1] >= errs[2], "{errs:?}");
    }

    #[test]
    fn regularize_examples() {
        let eps = Epsilon::new(0.05, 3).unwrap();
        assert_eq!(regularize(&[0.0, 1.0, 0.0], eps).values(), &[0.05, 1.0, 0.05]);
        assert_eq!(regularize(&[0.3, 0.3, 0.4], eps).values(), &[0.3, 0.3, 0.4]);
        assert_eq!(regularize(&[0.01, 0.99, 0.0], eps).values(), &[0.05, 0.99, 0.05]);
        assert!(Epsilon::new(0.0, 3).is_err());
        assert!(Epsilon::new(0.34, 3).is_err());
        assert!(Epsilon::new(1.0 / 3.0, 3).is_ok());
    }

    #[test]
    fn excluding_an_item_trains_on_the_rest() {
        let schema = DescriptorSchema { numeric: 0, categorical: vec![2] };
        let mut ts = TrainingSet::new(schema, labels());
        for k in 0..20 {
            ts.push(TrainingRow { item: ItemId(1), descriptors: DescriptorVector::new(vec![], vec![0]), label: Label(0) }).unwrap();
            ts.push(TrainingRow { item: ItemId(2), descriptors: DescriptorVector::new(vec![], vec![k % 2]), label: Label(2) }).unwrap();
        }
        let config = small_config(9);
        let reduced = train_excluding(&ts, &config, ItemId(1)).unwrap();
        let direct = train_forest(&ts.without_item(ItemId(1)), &config).unwrap();
        assert_eq!(reduced, direct);
        assert_eq!(reduced.predict_proba(&DescriptorVector::new(vec![], vec![0])).unwrap(), vec![0.0, 0.0, 1.0]);

        let only_one = {
            let mut t = TrainingSet::new(DescriptorSchema::default(), labels());
            t.push(TrainingRow { item: ItemId(1), descriptors: DescriptorVector::default(), label: Label(0) }).unwrap();
            t
        };
        assert_eq!(train_excluding(&only_one, &config, ItemId(1)), Err(BenchmarkError::EmptyTrainingSet));
    }

    #[test]
    fn excluding_a_unique_cell_reverts_toward_marginal() {
        // Item 7 is the only one in category 2, always labelled u; everything
        // else is labelled e. Without item 7 the cell falls back to what the
        // remaining corpus says.
        let schema = DescriptorSchema { numeric: 0, categorical: vec![3] };
        let mut ts = TrainingSet::new(schema, labels());
        for i in 0..200u64 {
            ts.push(TrainingRow { item: ItemId(100 + i), descriptors: DescriptorVector::new(vec![], vec![(i % 2) as u32]), label: Label(2) }).unwrap();
        }
        for _ in 0..20 {
            ts.push(TrainingRow { item: ItemId(7), descriptors: DescriptorVector::new(vec![], vec![2]), label: Label(0) }).unwrap();
        }
        let config = small_config(11);
        let cell = DescriptorVector::new(vec![], vec![2]);
        let full = train_forest(&ts, &config).unwrap().predict_proba(&cell).unwrap();
        let reduced = train_excluding(&ts, &config, ItemId(7)).unwrap().predict_proba(&cell).unwrap();
        let marginal = ts.without_item(ItemId(7)).marginal();
        assert!(full[0] > 0.9, "{full:?}");
        assert!(l1(&reduced, &marginal) < l1(&full, &marginal));
        assert_eq!(reduced, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn training_is_seed_deterministic() {
        let ts = Generator::dataset(500, 8);
        let a = train_forest(&ts, &small_config(8)).unwrap();
        let b = train_forest(&ts, &small_config(8)).unwrap();
        assert_eq!(a, b);
        let c = train_forest(&ts, &small_config(9)).unwrap();
        assert_ne!(a, c);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn predictions_are_distributions(seed in any::<u64>(), n in 1usize..120, x in -5.0f64..5.0, c in 0u32..4) {
            let schema = DescriptorSchema { numeric: 1, categorical: vec![4] };
            let mut ts = TrainingSet::new(schema, labels());
            let mut rng = rng_for(seed, &[]);
            for i in 0..n {
                ts.push(TrainingRow {
                    item: ItemId(i as u64),
                    descriptors: DescriptorVector::new(vec![rng.random_range(-3.0..3.0)], vec![rng.random_range(0..4)]),
                    label: Label(rng.random_range(0..3)),
                }).unwrap();
            }
            let forest = train_forest(&ts, &ForestConfig { tree_count: 10, min_leaf_size: 1, seed, ..ForestConfig::default() }).unwrap();
            let p = forest.predict_proba(&DescriptorVector::new(vec![x], vec![c])).unwrap();
            prop_assert!(p.iter().all(|&v| v >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let eps = Epsilon::new(0.05, 3).unwrap();
            prop_assert!(regularize(&p, eps).values().iter().all(|&v| v >= 0.05));
        }
    }
}
