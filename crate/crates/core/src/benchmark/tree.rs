use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DescriptorVector, ForestConfig, TrainingSet};

/// Categorical features with at most this many categories split by subset
/// membership; larger ones split by threshold on the category index.
pub const MAX_SUBSET_CATEGORIES: u32 = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "snake_case")]
pub enum Node {
    Leaf { p: Vec<f64> },
    /// `feature <= value` goes left.
    Threshold { f: usize, v: f64, l: u32, r: u32 },
    /// Category `c` goes left when bit `c` of `mask` is set.
    Subset { f: usize, mask: u32, l: u32, r: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub(crate) fn leaf_for(&self, d: &DescriptorVector) -> &[f64] {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { p } => return p,
                Node::Threshold { f, v, l, r } => {
                    at = if d.feature(*f) <= *v { *l } else { *r } as usize;
                }
                Node::Subset { f, mask, l, r } => {
                    let c = d.feature(*f) as u32;
                    at = if c < 32 && mask & (1 << c) != 0 { *l } else { *r } as usize;
                }
            }
        }
    }

    /// Structural check for trees read from disk.
    pub(crate) fn validate(&self, classes: usize, features: usize) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        for (i, node) in self.nodes.iter().enumerate() {
            match node {
                Node::Leaf { p } => {
                    if p.len() != classes || p.iter().any(|&x| x.is_nan() || x < 0.0) {
                        return Err(format!("node {i}: malformed leaf"));
                    }
                    if (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                        return Err(format!("node {i}: leaf does not sum to one"));
                    }
                }
                Node::Threshold { f, l, r, .. } | Node::Subset { f, l, r, .. } => {
                    if *f >= features {
                        return Err(format!("node {i}: feature {f} out of range"));
                    }
                    // Children are always stored after their parent.
                    if *l as usize <= i || *r as usize <= i || *l as usize >= self.nodes.len() || *r as usize >= self.nodes.len() {
                        return Err(format!("node {i}: bad child index"));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FeatureKind {
    Ordered,
    Subset(u32),
}

/// Column-major copy of a training set.
pub(crate) struct Matrix {
    columns: Vec<Vec<f64>>,
    kinds: Vec<FeatureKind>,
    labels: Vec<u16>,
    classes: usize,
}

impl Matrix {
    pub(crate) fn from_training_set(data: &TrainingSet) -> Self {
        let schema = data.schema();
        let mut kinds = vec![FeatureKind::Ordered; schema.numeric];
        kinds.extend(schema.categorical.iter().map(|&card| {
            if card <= MAX_SUBSET_CATEGORIES {
                FeatureKind::Subset(card)
            } else {
                FeatureKind::Ordered
            }
        }));
        let columns = (0..kinds.len())
            .map(|f| data.rows().iter().map(|r| r.descriptors.feature(f)).collect())
            .collect();
        Self {
            columns,
            kinds,
            labels: data.rows().iter().map(|r| r.label.0).collect(),
            classes: data.labels().len(),
        }
    }

    fn rows(&self) -> usize {
        self.labels.len()
    }
}

#[derive(Debug, Clone, Copy)]
enum Rule {
    Threshold(f64),
    Subset(u32),
}

impl Rule {
    fn goes_left(self, x: f64) -> bool {
        match self {
            Rule::Threshold(v) => x <= v,
            Rule::Subset(mask) => mask & (1 << (x as u32)) != 0,
        }
    }
}

struct Candidate {
    feature: usize,
    rule: Rule,
    /// Sum over children of `sum_k count_k^2 / n_child`; larger is purer.
    purity: f64,
}

struct Grower<'a, R> {
    m: &'a Matrix,
    min_leaf: usize,
    max_depth: Option<usize>,
    per_split: usize,
    rng: &'a mut R,
    nodes: Vec<Node>,
}

pub(crate) fn grow<R: Rng>(m: &Matrix, config: &ForestConfig, rng: &mut R) -> Tree {
    let draws = ((config.bootstrap_fraction * m.rows() as f64).round() as usize).max(1);
    let mut idx: Vec<usize> = (0..draws).map(|_| rng.random_range(0..m.rows())).collect();
    let mut g = Grower {
        m,
        min_leaf: config.min_leaf_size,
        max_depth: config.max_depth,
        per_split: config.resolved_features_per_split(m.kinds.len()),
        rng,
        nodes: Vec::new(),
    };
    g.grow(&mut idx, 0);
    Tree { nodes: g.nodes }
}

impl<R: Rng> Grower<'_, R> {
    fn grow(&mut self, idx: &mut [usize], depth: usize) -> u32 {
        let at = self.nodes.len() as u32;
        let counts = self.class_counts(idx);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let too_small = idx.len() < 2 * self.min_leaf;
        let too_deep = self.max_depth.is_some_and(|d| depth >= d);
        let split = if pure || too_small || too_deep {
            None
        } else {
            self.best_split(idx)
        };
        let Some(split) = split else {
            self.nodes.push(leaf(&counts, idx.len()));
            return at;
        };
        // Reserve the slot; children are appended after it.
        self.nodes.push(Node::Leaf { p: Vec::new() });
        let col = &self.m.columns[split.feature];
        let mut boundary = 0;
        for i in 0..idx.len() {
            if split.rule.goes_left(col[idx[i]]) {
                idx.swap(i, boundary);
                boundary += 1;
            }
        }
        let (left, right) = idx.split_at_mut(boundary);
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[at as usize] = match split.rule {
            Rule::Threshold(v) => Node::Threshold { f: split.feature, v, l, r },
            Rule::Subset(mask) => Node::Subset { f: split.feature, mask, l, r },
        };
        at
    }

    fn class_counts(&self, idx: &[usize]) -> Vec<u64> {
        let mut counts = vec![0u64; self.m.classes];
        for &i in idx {
            counts[self.m.labels[i] as usize] += 1;
        }
        counts
    }

    fn best_split(&mut self, idx: &[usize]) -> Option<Candidate> {
        let varying: Vec<usize> = (0..self.m.kinds.len())
            .filter(|&f| {
                let col = &self.m.columns[f];
                let first = col[idx[0]];
                idx.iter().any(|&i| col[i] != first)
            })
            .collect();
        if varying.is_empty() {
            return None;
        }
        let k = self.per_split.min(varying.len());
        let mut chosen: Vec<usize> = sample_indices(self.rng, varying.len(), k)
            .into_iter()
            .map(|i| varying[i])
            .collect();
        chosen.sort_unstable();
        let mut best: Option<Candidate> = None;
        for f in chosen {
            let cand = match self.m.kinds[f] {
                FeatureKind::Ordered => self.best_threshold(f, idx),
                FeatureKind::Subset(card) => self.best_subset(f, card, idx),
            };
            if let Some(c) = cand {
                // Strict improvement only: ties keep the lower feature index.
                if best.as_ref().is_none_or(|b| c.purity > b.purity) {
                    best = Some(c);
                }
            }
        }
        best
    }

    fn best_threshold(&self, f: usize, idx: &[usize]) -> Option<Candidate> {
        let col = &self.m.columns[f];
        let mut pairs: Vec<(f64, u16)> = idx.iter().map(|&i| (col[i], self.m.labels[i])).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let n = pairs.len();
        let mut right = vec![0u64; self.m.classes];
        for &(_, l) in &pairs {
            right[l as usize] += 1;
        }
        let mut left = vec![0u64; self.m.classes];
        let mut left_sq: u64 = 0;
        let mut right_sq: u64 = right.iter().map(|c| c * c).sum();
        let mut best: Option<(f64, f64)> = None;
        for i in 0..n - 1 {
            let c = pairs[i].1 as usize;
            left_sq += 2 * left[c] + 1;
            right_sq -= 2 * right[c] - 1;
            left[c] += 1;
            right[c] -= 1;
            let nl = i + 1;
            let nr = n - nl;
            if pairs[i].0 == pairs[i + 1].0 || nl < self.min_leaf || nr < self.min_leaf {
                continue;
            }
            let purity = left_sq as f64 / nl as f64 + right_sq as f64 / nr as f64;
            if best.is_none_or(|(p, _)| purity > p) {
                let (a, b) = (pairs[i].0, pairs[i + 1].0);
                let mid = a + (b - a) / 2.0;
                best = Some((purity, if mid < b { mid } else { a }));
            }
        }
        best.map(|(purity, v)| Candidate {
            feature: f,
            rule: Rule::Threshold(v),
            purity,
        })
    }

    fn best_subset(&self, f: usize, card: u32, idx: &[usize]) -> Option<Candidate> {
        let col = &self.m.columns[f];
        let classes = self.m.classes;
        let mut table = vec![0u64; card as usize * classes];
        for &i in idx {
            table[col[i] as usize * classes + self.m.labels[i] as usize] += 1;
        }
        let total: Vec<u64> = (0..classes)
            .map(|k| (0..card as usize).map(|c| table[c * classes + k]).sum())
            .collect();
        let n: u64 = total.iter().sum();
        let mut best: Option<(f64, u32)> = None;
        // The highest category always stays right, so each partition is seen once.
        for mask in 1u32..(1 << (card - 1)) {
            let mut left = vec![0u64; classes];
            for c in 0..card as usize {
                if mask & (1 << c) != 0 {
                    for k in 0..classes {
                        left[k] += table[c * classes + k];
                    }
                }
            }
            let nl: u64 = left.iter().sum();
            let nr = n - nl;
            if (nl as usize) < self.min_leaf || (nr as usize) < self.min_leaf {
                continue;
            }
            let left_sq: u64 = left.iter().map(|c| c * c).sum();
            let right_sq: u64 = left.iter().zip(&total).map(|(l, t)| (t - l) * (t - l)).sum();
            let purity = left_sq as f64 / nl as f64 + right_sq as f64 / nr as f64;
            if best.is_none_or(|(p, _)| purity > p) {
                best = Some((purity, mask));
            }
        }
        best.map(|(purity, mask)| Candidate {
            feature: f,
            rule: Rule::Subset(mask),
            purity,
        })
    }
}

fn leaf(counts: &[u64], n: usize) -> Node {
    Node::Leaf {
        p: counts.iter().map(|&c| c as f64 / n as f64).collect(),
    }
}
