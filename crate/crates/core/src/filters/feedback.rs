//! Post-fusion pruning and routing of fused components back to IMM modes.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::gaussian::{GaussianDensity, GaussianMixture};

use super::imm::{ImmConfig, ImmState};

/// Indices of the `target_count` highest-weight components, ties broken by
/// lower covariance trace, in descending order of weight.
pub fn prune_indices(m: &GaussianMixture, target_count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..m.len()).collect();
    order.sort_by(|&i, &j| {
        m.weights()[j]
            .partial_cmp(&m.weights()[i])
            .unwrap_or(Ordering::Equal)
            .then_with(|| {
                let ti = m.components()[i].cov().trace();
                let tj = m.components()[j].cov().trace();
                ti.partial_cmp(&tj).unwrap_or(Ordering::Equal)
            })
            .then(i.cmp(&j))
    });
    order.truncate(target_count.max(1));
    order
}

/// Keeps the `target_count` highest-weight components and renormalises.
/// Returns the input unchanged when it is already small enough.
pub fn prune_mixture(m: &GaussianMixture, target_count: usize) -> GaussianMixture {
    if m.len() <= target_count {
        return m.clone();
    }
    let keep = prune_indices(m, target_count);
    let weights = keep.iter().map(|&i| m.weights()[i]).collect();
    let comps = keep.iter().map(|&i| m.components()[i].clone()).collect();
    GaussianMixture::new(weights, comps).expect("pruned weights are positive")
}

/// A mixture whose components carry the index of the motion mode they
/// descend from.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedMixture {
    pub mixture: GaussianMixture,
    pub tags: Vec<usize>,
}

impl TaggedMixture {
    pub fn new(mixture: GaussianMixture, tags: Vec<usize>) -> Result<Self> {
        if tags.len() != mixture.len() {
            return Err(Error::FeedbackMismatch(format!(
                "{} tags for {} components",
                tags.len(),
                mixture.len()
            )));
        }
        Ok(Self { mixture, tags })
    }

    /// Output of an IMM, tagged by mode index.
    pub fn from_imm(state: &ImmState, cfg: &ImmConfig) -> Self {
        let mixture = state.mixture(cfg);
        let tags = (0..mixture.len()).collect();
        Self { mixture, tags }
    }

    pub fn prune(&self, target_count: usize) -> Self {
        if self.mixture.len() <= target_count {
            return self.clone();
        }
        let keep = prune_indices(&self.mixture, target_count);
        let weights = keep.iter().map(|&i| self.mixture.weights()[i]).collect();
        let comps = keep
            .iter()
            .map(|&i| self.mixture.components()[i].clone())
            .collect();
        Self {
            mixture: GaussianMixture::new(weights, comps).expect("pruned weights are positive"),
            tags: keep.iter().map(|&i| self.tags[i]).collect(),
        }
    }

    /// Keeps the best component of each tag in `0..modes`, falling back to
    /// the overall best component for a tag that did not survive fusion.
    pub fn select_per_mode(&self, modes: usize) -> Self {
        let order = prune_indices(&self.mixture, self.mixture.len());
        let best = order[0];
        let keep: Vec<usize> = (0..modes)
            .map(|t| {
                order
                    .iter()
                    .copied()
                    .find(|&i| self.tags[i] == t)
                    .unwrap_or(best)
            })
            .collect();
        let weights = keep.iter().map(|&i| self.mixture.weights()[i]).collect();
        let comps = keep
            .iter()
            .map(|&i| self.mixture.components()[i].clone())
            .collect();
        Self {
            mixture: GaussianMixture::new(weights, comps).expect("selected weights are positive"),
            tags: (0..modes).collect(),
        }
    }
}

/// Tag of a pairwise-fused component: shared tag if the parents agree,
/// otherwise that of the heavier parent (first parent on ties).
pub fn pair_tag(tag_a: usize, weight_a: f64, tag_b: usize, weight_b: f64) -> usize {
    if tag_a == tag_b || weight_a >= weight_b {
        tag_a
    } else {
        tag_b
    }
}

/// Tags for the `i·N + j` component layout of pairwise mixture fusion.
pub fn pair_tags(a: &TaggedMixture, b: &TaggedMixture) -> Vec<usize> {
    let mut tags = Vec::with_capacity(a.tags.len() * b.tags.len());
    for (i, &ta) in a.tags.iter().enumerate() {
        for (j, &tb) in b.tags.iter().enumerate() {
            tags.push(pair_tag(
                ta,
                a.mixture.weights()[i],
                tb,
                b.mixture.weights()[j],
            ));
        }
    }
    tags
}

/// Replaces each mode density by the fed component with the matching tag
/// (marginalised to the mode's dimension) and takes mode probabilities from
/// the fed weights.
pub fn apply_feedback(local: &ImmState, cfg: &ImmConfig, fed: &TaggedMixture) -> Result<ImmState> {
    let m = cfg.mode_count();
    if fed.mixture.len() != m || local.modes.len() != m {
        return Err(Error::FeedbackMismatch(format!(
            "{} fed components for {} modes",
            fed.mixture.len(),
            m
        )));
    }
    let mut modes: Vec<Option<GaussianDensity>> = vec![None; m];
    let mut probs = vec![0.0; m];
    for ((comp, &w), &tag) in fed
        .mixture
        .components()
        .iter()
        .zip(fed.mixture.weights())
        .zip(&fed.tags)
    {
        if tag >= m || modes[tag].is_some() {
            return Err(Error::FeedbackMismatch(format!(
                "tag {tag} missing or repeated"
            )));
        }
        let dim = cfg.models[tag].state_dim();
        if comp.dim() < dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: comp.dim(),
            });
        }
        modes[tag] = Some(comp.marginal_head(dim));
        probs[tag] = w;
    }
    ImmState::new(modes.into_iter().map(|g| g.unwrap()).collect(), probs, cfg)
}
