//! Rater reporting strategies.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::benchmark::{DescriptorSchema, DescriptorVector};
use crate::ids::{Label, LabelSet, RaterId};

/// Maps descriptors to a label without looking at the item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum DescriptorRule {
    /// `above` when numeric feature `feature` exceeds `threshold`, else `below`.
    Threshold {
        feature: usize,
        threshold: f64,
        below: String,
        above: String,
    },
    /// `labels[v]` for value `v` of categorical feature `feature`.
    Categorical { feature: usize, labels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    Truthful,
    Constant { label: String },
    DescriptorMap { map: DescriptorRule },
    /// Reports a uniformly random label with probability `gamma`, the signal otherwise.
    NoisyTruthful { gamma: f64 },
}

impl Strategy {
    pub fn default_name(&self) -> String {
        match self {
            Strategy::Truthful => "truthful".into(),
            Strategy::Constant { label } => format!("constant({label})"),
            Strategy::DescriptorMap { .. } => "descriptor_map".into(),
            Strategy::NoisyTruthful { gamma } => format!("noisy({gamma})"),
        }
    }

    /// Resolves label names and checks the rule against the descriptor schema.
    pub fn compile(&self, labels: &LabelSet, schema: &DescriptorSchema) -> Result<CompiledStrategy, SimError> {
        let get = |name: &str| {
            labels
                .get(name)
                .map_err(|e| SimError::InvalidStrategy(e.to_string()))
        };
        Ok(match self {
            Strategy::Truthful => CompiledStrategy::Truthful,
            Strategy::Constant { label } => CompiledStrategy::Constant(get(label)?),
            Strategy::NoisyTruthful { gamma } => {
                if !(0.0..=1.0).contains(gamma) {
                    return Err(SimError::InvalidStrategy(format!("gamma must lie in [0, 1], got {gamma}")));
                }
                CompiledStrategy::Noisy(*gamma, labels.len())
            }
            Strategy::DescriptorMap { map } => match map {
                DescriptorRule::Threshold {
                    feature,
                    threshold,
                    below,
                    above,
                } => {
                    if *feature >= schema.numeric {
                        return Err(SimError::InvalidStrategy(format!(
                            "numeric feature {feature} does not exist"
                        )));
                    }
                    CompiledStrategy::Threshold(*feature, *threshold, get(below)?, get(above)?)
                }
                DescriptorRule::Categorical { feature, labels: names } => {
                    let card = *schema.categorical.get(*feature).ok_or_else(|| {
                        SimError::InvalidStrategy(format!("categorical feature {feature} does not exist"))
                    })?;
                    if names.len() != card as usize {
                        return Err(SimError::InvalidStrategy(format!(
                            "descriptor map covers {} of {card} categories",
                            names.len()
                        )));
                    }
                    CompiledStrategy::Categorical(*feature, names.iter().map(|n| get(n)).collect::<Result<_, _>>()?)
                }
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CompiledStrategy {
    Truthful,
    Constant(Label),
    Threshold(usize, f64, Label, Label),
    Categorical(usize, Vec<Label>),
    Noisy(f64, usize),
}

impl CompiledStrategy {
    pub fn report<R: Rng + ?Sized>(&self, signal: Label, d: &DescriptorVector, rng: &mut R) -> Label {
        match self {
            CompiledStrategy::Truthful => signal,
            CompiledStrategy::Constant(l) => *l,
            CompiledStrategy::Threshold(f, t, below, above) => {
                if d.numeric[*f] > *t {
                    *above
                } else {
                    *below
                }
            }
            CompiledStrategy::Categorical(f, labels) => labels[d.categorical[*f] as usize],
            CompiledStrategy::Noisy(gamma, m) => {
                if rng.random_bool(*gamma) {
                    Label(rng.random_range(0..*m) as u16)
                } else {
                    signal
                }
            }
        }
    }
}

/// One group of raters sharing a strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyShare {
    #[serde(default)]
    pub name: Option<String>,
    pub strategy: Strategy,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

impl StrategyShare {
    pub fn new(strategy: Strategy) -> Self {
        Self {
            name: None,
            strategy,
            weight: 1.0,
        }
    }

    pub fn named(name: impl Into<String>, strategy: Strategy, weight: f64) -> Self {
        Self {
            name: Some(name.into()),
            strategy,
            weight,
        }
    }

    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.strategy.default_name())
    }
}

/// Strategies assigned to a rater pool. Raters are split into contiguous
/// blocks proportional to the weights, so the assignment is deterministic.
#[derive(Debug, Clone)]
pub struct Profile {
    pub names: Vec<String>,
    pub strategies: Vec<CompiledStrategy>,
    /// Strategy index per rater.
    pub assignment: Vec<usize>,
}

impl Profile {
    pub fn new(shares: &[StrategyShare], raters: usize, labels: &LabelSet, schema: &DescriptorSchema) -> Result<Self, SimError> {
        if shares.is_empty() {
            return Err(SimError::InvalidStrategy("strategy profile is empty".into()));
        }
        if shares.iter().any(|s| !(s.weight > 0.0 && s.weight.is_finite())) {
            return Err(SimError::InvalidStrategy("strategy weights must be positive".into()));
        }
        let total: f64 = shares.iter().map(|s| s.weight).sum();
        let mut bounds = Vec::with_capacity(shares.len());
        let mut acc = 0.0;
        for s in shares {
            acc += s.weight;
            bounds.push(((acc / total) * raters as f64).round() as usize);
        }
        let assignment = (0..raters)
            .map(|r| bounds.iter().position(|&b| r < b).unwrap_or(shares.len() - 1))
            .collect::<Vec<usize>>();
        if let Some(empty) = (0..shares.len()).find(|i| !assignment.contains(i)) {
            return Err(SimError::InvalidStrategy(format!(
                "strategy `{}` receives no raters out of {raters}",
                shares[empty].display_name()
            )));
        }
        let mut names: Vec<String> = Vec::new();
        for s in shares {
            let name = s.display_name();
            if names.contains(&name) {
                return Err(SimError::InvalidStrategy(format!("strategy name `{name}` is used twice")));
            }
            names.push(name);
        }
        Ok(Self {
            names,
            strategies: shares
                .iter()
                .map(|s| s.strategy.compile(labels, schema))
                .collect::<Result<_, _>>()?,
            assignment,
        })
    }

    pub fn of(&self, rater: RaterId) -> usize {
        self.assignment[rater.0 as usize]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    fn schema() -> DescriptorSchema {
        DescriptorSchema { numeric: 1, categorical: vec![3] }
    }

    #[test]
    fn strategies_report_as_described() {
        let labels = LabelSet::referee();
        let d = DescriptorVector::new(vec![25.0], vec![1]);
        let mut rng = rng_for(0, &[]);
        let signal = Label(0);
        let report = |s: Strategy, rng: &mut crate::rng::DetRng| s.compile(&labels, &schema()).unwrap().report(signal, &d, rng);
        assert_eq!(report(Strategy::Truthful, &mut rng), signal);
        assert_eq!(report(Strategy::Constant { label: "e".into() }, &mut rng), Label(2));
        let threshold = DescriptorRule::Threshold { feature: 0, threshold: 20.0, below: "s".into(), above: "e".into() };
        assert_eq!(report(Strategy::DescriptorMap { map: threshold }, &mut rng), Label(2));
        let cat = DescriptorRule::Categorical { feature: 0, labels: vec!["u".into(), "s".into(), "e".into()] };
        assert_eq!(report(Strategy::DescriptorMap { map: cat }, &mut rng), Label(1));
        assert_eq!(report(Strategy::NoisyTruthful { gamma: 0.0 }, &mut rng), signal);
    }

    #[test]
    fn noisy_strategy_mixes_in_uniform_labels() {
        let labels = LabelSet::referee();
        let s = Strategy::NoisyTruthful { gamma: 0.5 }.compile(&labels, &schema()).unwrap();
        let mut rng = rng_for(4, &[]);
        let d = DescriptorVector::new(vec![0.0], vec![0]);
        let n = 60_000;
        let kept = (0..n).filter(|_| s.report(Label(1), &d, &mut rng) == Label(1)).count();
        // 0.5 + 0.5 / 3
        assert!((kept as f64 / n as f64 - 2.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn invalid_strategies_are_rejected() {
        let labels = LabelSet::referee();
        assert!(Strategy::Constant { label: "x".into() }.compile(&labels, &schema()).is_err());
        assert!(Strategy::NoisyTruthful { gamma: 1.5 }.compile(&labels, &schema()).is_err());
        let partial = DescriptorRule::Categorical { feature: 0, labels: vec!["u".into()] };
        assert!(Strategy::DescriptorMap { map: partial }.compile(&labels, &schema()).is_err());
        let missing = DescriptorRule::Threshold { feature: 3, threshold: 0.0, below: "u".into(), above: "e".into() };
        assert!(Strategy::DescriptorMap { map: missing }.compile(&labels, &schema()).is_err());
    }

    #[test]
    fn profile_splits_raters_by_weight() {
        let shares = vec![
            StrategyShare::named("a", Strategy::Truthful, 1.0),
            StrategyShare::named("b", Strategy::NoisyTruthful { gamma: 0.5 }, 3.0),
        ];
        let p = Profile::new(&shares, 40, &LabelSet::referee(), &schema()).unwrap();
        assert_eq!(p.assignment.iter().filter(|&&s| s == 0).count(), 10);
        assert_eq!(p.of(crate::ids::UserId(39)), 1);
        let dup = vec![StrategyShare::new(Strategy::Truthful), StrategyShare::new(Strategy::Truthful)];
        assert!(Profile::new(&dup, 10, &LabelSet::referee(), &schema()).is_err());
    }
}
