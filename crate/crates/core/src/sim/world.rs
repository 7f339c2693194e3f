//! Synthetic worlds: latent item quality, public descriptors and private
//! rater signals.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::benchmark::{DescriptorSchema, DescriptorVector};
use crate::ids::{ItemId, Label, LabelSet, RaterId, UserId};
use crate::rng::{rng_for, TAG_WORLD};

const TOLERANCE: f64 = 1e-9;

/// How one descriptor feature depends on the latent state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSpec {
    /// `emission[t][v]` is the probability of value `v` in state `t`.
    Categorical { emission: Vec<Vec<f64>> },
    /// Normal with a per-state mean.
    Numeric { means: Vec<f64>, sd: f64 },
}

impl FeatureSpec {
    /// Value `v` with probability `accuracy` in state `v`, the rest spread evenly.
    pub fn categorical(states: usize, accuracy: f64) -> Self {
        let off = (1.0 - accuracy) / (states - 1) as f64;
        FeatureSpec::Categorical {
            emission: (0..states)
                .map(|t| (0..states).map(|v| if v == t { accuracy } else { off }).collect())
                .collect(),
        }
    }

    /// Likelihood of `value` given state `t` (a density for numeric features).
    fn likelihood(&self, t: usize, value: f64) -> f64 {
        match self {
            FeatureSpec::Categorical { emission } => emission[t][value as usize],
            FeatureSpec::Numeric { means, sd } => {
                let z = (value - means[t]) / sd;
                (-0.5 * z * z).exp()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub labels: LabelSet,
    /// Prior over latent quality states; states are ordered from worst to best.
    pub prior: Vec<f64>,
    /// `confusion[t][x]`: probability that a rater of a state-`t` item observes signal `x`.
    pub confusion: Vec<Vec<f64>>,
    pub features: Vec<FeatureSpec>,
    pub items: usize,
    /// Size of the rater pool.
    pub raters: usize,
    pub ratings_per_item: usize,
    /// Probability that an item's success event occurs, per state.
    pub success_prob: Vec<f64>,
    pub seed: u64,
}

fn symmetric_confusion(states: usize, diagonal: f64) -> Vec<Vec<f64>> {
    let off = (1.0 - diagonal) / (states - 1) as f64;
    (0..states)
        .map(|t| (0..states).map(|x| if x == t { diagonal } else { off }).collect())
        .collect()
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            labels: LabelSet::referee(),
            prior: vec![1.0 / 3.0; 3],
            confusion: symmetric_confusion(3, 0.7),
            features: vec![FeatureSpec::categorical(3, 0.8), FeatureSpec::categorical(3, 0.8)],
            items: 500,
            raters: 50,
            ratings_per_item: 5,
            success_prob: vec![0.1, 0.5, 0.9],
            seed: 0,
        }
    }
}

impl WorldConfig {
    /// Default world plus a numeric `length` feature with state means 10, 20, 30.
    pub fn with_length_feature() -> Self {
        let mut w = Self::default();
        w.features.insert(
            0,
            FeatureSpec::Numeric {
                means: vec![10.0, 20.0, 30.0],
                sd: 6.0,
            },
        );
        w
    }

    pub fn states(&self) -> usize {
        self.prior.len()
    }

    /// Structural checks. Zero probabilities are allowed here; see
    /// [`SelfPredictingReport::fully_mixed`].
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidWorld(m));
        let m = self.labels.len();
        let states = self.states();
        if states == 0 {
            return bad("prior is empty".into());
        }
        check_distribution("prior", &self.prior)?;
        if self.confusion.len() != states {
            return bad(format!("confusion has {} rows for {states} states", self.confusion.len()));
        }
        for (t, row) in self.confusion.iter().enumerate() {
            if row.len() != m {
                return bad(format!("confusion row {t} has {} entries for {m} labels", row.len()));
            }
            check_distribution(&format!("confusion row {t}"), row)?;
        }
        for (f, spec) in self.features.iter().enumerate() {
            match spec {
                FeatureSpec::Categorical { emission } => {
                    if emission.len() != states {
                        return bad(format!("feature {f} has {} emission rows for {states} states", emission.len()));
                    }
                    let values = emission[0].len();
                    if values == 0 || emission.iter().any(|r| r.len() != values) {
                        return bad(format!("feature {f} emission rows must share a nonzero length"));
                    }
                    for (t, row) in emission.iter().enumerate() {
                        check_distribution(&format!("feature {f} emission row {t}"), row)?;
                    }
                }
                FeatureSpec::Numeric { means, sd } => {
                    if means.len() != states {
                        return bad(format!("feature {f} has {} means for {states} states", means.len()));
                    }
                    if !(*sd > 0.0 && sd.is_finite()) || means.iter().any(|x| !x.is_finite()) {
                        return bad(format!("feature {f} needs finite means and a positive sd"));
                    }
                }
            }
        }
        if self.success_prob.len() != states || self.success_prob.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad(format!("success_prob needs {states} probabilities in [0, 1]"));
        }
        if self.items == 0 {
            return bad("items must be positive".into());
        }
        if self.ratings_per_item == 0 || self.ratings_per_item > self.raters {
            return bad(format!(
                "ratings_per_item must lie in 1..={} (the rater pool)",
                self.raters
            ));
        }
        Ok(())
    }

    pub fn descriptor_schema(&self) -> DescriptorSchema {
        let mut schema = DescriptorSchema::default();
        for spec in &self.features {
            match spec {
                FeatureSpec::Numeric { .. } => schema.numeric += 1,
                FeatureSpec::Categorical { emission } => schema.categorical.push(emission[0].len() as u32),
            }
        }
        schema
    }

    /// `P(t | signal = x)` for every state; `None` when the signal has probability 0.
    fn posterior(&self, prior: &[f64], x: Label) -> Option<Vec<f64>> {
        let joint: Vec<f64> = prior
            .iter()
            .zip(&self.confusion)
            .map(|(p, row)| p * row[x.index()])
            .collect();
        let z: f64 = joint.iter().sum();
        (z > 0.0).then(|| joint.iter().map(|j| j / z).collect())
    }

    /// `P(peer signal = x | own signal = y)` under `prior`.
    pub fn peer_signal_probability(&self, prior: &[f64], own: Label, peer: Label) -> Option<f64> {
        self.posterior(prior, own).map(|post| {
            post.iter()
                .zip(&self.confusion)
                .map(|(p, row)| p * row[peer.index()])
                .sum()
        })
    }

    /// Probability of the success event given a signal.
    pub fn success_given_signal(&self, x: Label) -> f64 {
        match self.posterior(&self.prior, x) {
            Some(post) => post.iter().zip(&self.success_prob).map(|(p, s)| p * s).sum(),
            None => self.prior.iter().zip(&self.success_prob).map(|(p, s)| p * s).sum(),
        }
    }

    /// `P(signal = x | D)` for every label, the quantity a benchmark forest
    /// trained on truthful ratings estimates.
    pub fn label_given_descriptors(&self, d: &DescriptorVector) -> Vec<f64> {
        let (mut num, mut cat) = (d.numeric.iter(), d.categorical.iter());
        let point: Vec<f64> = self
            .features
            .iter()
            .map(|f| match f {
                FeatureSpec::Numeric { .. } => *num.next().expect("descriptor matches schema"),
                FeatureSpec::Categorical { .. } => *cat.next().expect("descriptor matches schema") as f64,
            })
            .collect();
        let post = self.prior_given(&point);
        (0..self.labels.len())
            .map(|x| post.iter().zip(&self.confusion).map(|(p, row)| p * row[x]).sum())
            .collect()
    }

    /// Prior conditioned on a descriptor vector.
    fn prior_given(&self, d: &[f64]) -> Vec<f64> {
        let mut p: Vec<f64> = self.prior.clone();
        for (spec, &value) in self.features.iter().zip(d) {
            for (t, pt) in p.iter_mut().enumerate() {
                *pt *= spec.likelihood(t, value);
            }
        }
        let z: f64 = p.iter().sum();
        if z > 0.0 {
            p.iter_mut().for_each(|x| *x /= z);
        }
        p
    }
}

fn check_distribution(name: &str, p: &[f64]) -> Result<(), SimError> {
    if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(SimError::InvalidWorld(format!("{name} has a negative or non-finite entry")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > TOLERANCE {
        return Err(SimError::InvalidWorld(format!("{name} sums to {s}, not 1")));
    }
    Ok(())
}

/// Margin of the self-predicting condition for each label:
/// `P(peer = x | own = x) - max_{y != x} P(peer = x | own = y)`.
fn margins(config: &WorldConfig, prior: &[f64]) -> Vec<f64> {
    let labels: Vec<Label> = config.labels.labels().collect();
    labels
        .iter()
        .map(|&x| {
            let own = config.peer_signal_probability(prior, x, x).unwrap_or(0.0);
            let best_other = labels
                .iter()
                .filter(|&&y| y != x)
                .filter_map(|&y| config.peer_signal_probability(prior, y, x))
                .fold(f64::NEG_INFINITY, f64::max);
            own - best_other
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    /// Descriptor point: categorical values, with numeric features at a state mean.
    pub point: Vec<f64>,
    pub margins: Vec<f64>,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfPredictingReport {
    pub margins: Vec<f64>,
    pub holds: bool,
    pub cells: Vec<CellReport>,
    /// Every prior, confusion and emission entry is strictly positive.
    pub fully_mixed: bool,
}

impl SelfPredictingReport {
    /// Holds unconditionally and in every descriptor cell.
    pub fn holds_everywhere(&self) -> bool {
        self.holds && self.cells.iter().all(|c| c.holds)
    }
}

/// Checks the self-predicting condition from the prior and confusion matrix,
/// both unconditionally and after conditioning on each descriptor cell.
pub fn check_self_predicting(config: &WorldConfig) -> Result<SelfPredictingReport, SimError> {
    config.validate()?;
    let margins_all = margins(config, &config.prior);
    let mut axes: Vec<Vec<f64>> = Vec::new();
    for spec in &config.features {
        axes.push(match spec {
            FeatureSpec::Categorical { emission } => (0..emission[0].len()).map(|v| v as f64).collect(),
            FeatureSpec::Numeric { means, .. } => means.clone(),
        });
    }
    let mut cells = Vec::new();
    for point in cartesian(&axes) {
        let m = margins(config, &config.prior_given(&point));
        cells.push(CellReport {
            holds: m.iter().all(|&x| x > 0.0),
            point,
            margins: m,
        });
    }
    let fully_mixed = config.prior.iter().all(|&p| p > 0.0)
        && config.confusion.iter().flatten().all(|&p| p > 0.0)
        && config.features.iter().all(|f| match f {
            FeatureSpec::Categorical { emission } => emission.iter().flatten().all(|&p| p > 0.0),
            FeatureSpec::Numeric { .. } => true,
        });
    Ok(SelfPredictingReport {
        holds: margins_all.iter().all(|&x| x > 0.0),
        margins: margins_all,
        cells,
        fully_mixed,
    })
}

fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    axes.iter().fold(vec![Vec::new()], |acc, axis| {
        acc.iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldItem {
    pub id: ItemId,
    pub state: usize,
    pub descriptors: DescriptorVector,
    /// Assigned raters and their private signals, raters ascending.
    pub signals: Vec<(RaterId, Label)>,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub config: WorldConfig,
    pub items: Vec<WorldItem>,
}

/// Draws a world from `config.seed`.
pub fn generate_world(config: &WorldConfig) -> Result<World, SimError> {
    generate_world_seeded(config, config.seed)
}

/// Draws a world with an explicit seed. Items are independent; each
/// assigned rater's signal is an independent draw from the confusion row of
/// the item's state.
pub fn generate_world_seeded(config: &WorldConfig, seed: u64) -> Result<World, SimError> {
    config.validate()?;
    let mut rng = rng_for(seed, &[TAG_WORLD]);
    let prior = WeightedIndex::new(&config.prior).map_err(|e| SimError::InvalidWorld(e.to_string()))?;
    let confusion: Vec<Option<WeightedIndex<f64>>> =
        config.confusion.iter().map(|row| WeightedIndex::new(row).ok()).collect();
    let mut items = Vec::with_capacity(config.items);
    for i in 0..config.items {
        let state = prior.sample(&mut rng);
        let descriptors = draw_descriptors(config, state, &mut rng)?;
        let mut raters = sample_indices(&mut rng, config.raters, config.ratings_per_item).into_vec();
        raters.sort_unstable();
        let row = confusion[state]
            .as_ref()
            .ok_or_else(|| SimError::InvalidWorld(format!("confusion row {state} is all zero")))?;
        let signals = raters
            .into_iter()
            .map(|r| (UserId(r as u64), Label(row.sample(&mut rng) as u16)))
            .collect();
        let success = rng.random_bool(config.success_prob[state]);
        items.push(WorldItem {
            id: ItemId(i as u64),
            state,
            descriptors,
            signals,
            success,
        });
    }
    Ok(World {
        config: config.clone(),
        items,
    })
}

fn draw_descriptors<R: Rng + ?Sized>(config: &WorldConfig, state: usize, rng: &mut R) -> Result<DescriptorVector, SimError> {
    let mut d = DescriptorVector::default();
    for spec in &config.features {
        match spec {
            FeatureSpec::Categorical { emission } => {
                let dist = WeightedIndex::new(&emission[state]).map_err(|e| SimError::InvalidWorld(e.to_string()))?;
                d.categorical.push(dist.sample(rng) as u32);
            }
            FeatureSpec::Numeric { means, sd } => {
                let dist = Normal::new(means[state], *sd).map_err(|e| SimError::InvalidWorld(e.to_string()))?;
                d.numeric.push(dist.sample(rng));
            }
        }
    }
    Ok(d)
}
