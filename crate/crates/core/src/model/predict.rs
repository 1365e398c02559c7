use std::cmp::Ordering;

use serde::Serialize;

use super::Model;
use crate::corpus::{encode_window, ActionRecord};
use crate::error::{Error, Result};
use crate::tokenizer::ActionKind;
use crate::vocab::{ActionVocabulary, RESERVED};

/// Probabilities are floored at this value before taking the logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionDistribution {
    probs: Vec<f64>,
}

impl PredictionDistribution {
    pub fn new(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Indices ranked by descending probability, ties by lower index.
    pub fn ranked(&self) -> Vec<(usize, f64)> {
        let mut order: Vec<(usize, f64)> = self.probs.iter().copied().enumerate().collect();
        order.sort_by(rank_order);
        order
    }

    pub fn topk(&self, k: usize) -> Vec<(usize, f64)> {
        let mut r = self.ranked();
        r.truncate(k);
        r
    }

    /// Highest-probability index among those accepted by `allowed`.
    pub fn argmax_where(&self, allowed: impl Fn(usize) -> bool) -> Option<usize> {
        self.probs
            .iter()
            .copied()
            .enumerate()
            .filter(|(i, _)| allowed(*i))
            .min_by(rank_order)
            .map(|(i, _)| i)
    }
}

fn rank_order(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

pub fn cross_entropy(dist: &PredictionDistribution, target: usize) -> f64 {
    -dist.probs[target].max(PROB_FLOOR).ln()
}

/// Zeroes every entry outside `keep` and rescales the rest to sum to one.
pub fn filter_renormalize(dist: &PredictionDistribution, keep: &[usize]) -> Result<PredictionDistribution> {
    let mut mask = vec![false; dist.len()];
    for &i in keep {
        if let Some(m) = mask.get_mut(i) {
            *m = true;
        }
    }
    let mass: f64 = dist.probs.iter().zip(&mask).filter(|(_, &m)| m).map(|(p, _)| p).sum();
    if !(mass > 0.0) {
        return Err(Error::FilterEmpty);
    }
    let probs = dist
        .probs
        .iter()
        .zip(&mask)
        .map(|(p, &m)| if m { p / mass } else { 0.0 })
        .collect();
    Ok(PredictionDistribution { probs })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedAction {
    pub index: usize,
    pub action: ActionKind,
    pub prob: f64,
}

/// The `k` most likely next actions after `history`.
///
/// Actions the vocabulary does not know are dropped from the history before
/// the last `n_past` entries are taken. PAD and UNK are never returned.
pub fn predict_topk(
    history: &[ActionRecord],
    model: &Model,
    vocab: &ActionVocabulary,
    k: usize,
    keep: Option<&[usize]>,
) -> Result<Vec<RankedAction>> {
    if k < 1 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if model.n_actions() != vocab.len() || model.n_apps() != vocab.app_count() {
        return Err(Error::Dimension(format!(
            "model built for {} actions / {} apps, vocabulary has {} / {}",
            model.n_actions(),
            model.n_apps(),
            vocab.len(),
            vocab.app_count()
        )));
    }
    let window = encode_window(history, vocab, model.config().n_past);
    let refs: Vec<&[f64]> = window.iter().map(Vec::as_slice).collect();
    let mut dist = model.forward(&refs)?;
    if let Some(keep) = keep {
        dist = filter_renormalize(&dist, keep)?;
    }
    let filtered = keep.is_some();
    Ok(dist
        .ranked()
        .into_iter()
        .filter(|(i, p)| *i >= RESERVED && (!filtered || *p > 0.0))
        .take(k)
        .map(|(index, prob)| RankedAction {
            index,
            action: vocab.decode(index).expect("non-reserved index decodes").clone(),
            prob,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cross_entropy_values() {
        let uniform = PredictionDistribution::new(vec![0.125; 8]);
        assert!((cross_entropy(&uniform, 3) - 8f64.ln()).abs() < 1e-15);
        let sure = PredictionDistribution::new(vec![0.0, 1.0]);
        assert_eq!(cross_entropy(&sure, 1), 0.0);
        assert!((cross_entropy(&sure, 0) - 1e12f64.ln()).abs() < 1e-9);
        let quarter = PredictionDistribution::new(vec![0.25, 0.75]);
        assert!((cross_entropy(&quarter, 0) - 1.3862943611198906).abs() < 1e-15);
    }

    #[test]
    fn renormalization_example() {
        let d = PredictionDistribution::new(vec![0.5, 0.3, 0.2]);
        let f = filter_renormalize(&d, &[1, 2]).unwrap();
        assert_eq!(f.probs(), &[0.0, 0.3 / 0.5, 0.2 / 0.5]);
        assert!((f.probs()[1] - 0.6).abs() < 1e-15 && (f.probs()[2] - 0.4).abs() < 1e-15);
        assert_eq!(filter_renormalize(&d, &[0, 1, 2]).unwrap(), d);
        let z = PredictionDistribution::new(vec![1.0, 0.0, 0.0]);
        assert!(matches!(filter_renormalize(&z, &[1, 2]), Err(Error::FilterEmpty)));
        assert!(matches!(filter_renormalize(&z, &[]), Err(Error::FilterEmpty)));
    }

    #[test]
    fn ranking_breaks_ties_by_index() {
        let d = PredictionDistribution::new(vec![0.2, 0.3, 0.2, 0.3]);
        assert_eq!(d.topk(3), vec![(1, 0.3), (3, 0.3), (0, 0.2)]);
        assert_eq!(d.argmax_where(|i| i != 1), Some(3));
    }

    proptest! {
        #[test]
        fn filtering_preserves_relative_order(
            raw in prop::collection::vec(0.001f64..1.0, 2..30),
            mask_bits in prop::collection::vec(any::<bool>(), 30),
        ) {
            let total: f64 = raw.iter().sum();
            let d = PredictionDistribution::new(raw.iter().map(|p| p / total).collect());
            let keep: Vec<usize> = (0..raw.len()).filter(|&i| mask_bits[i]).collect();
            prop_assume!(!keep.is_empty());
            let f = filter_renormalize(&d, &keep).unwrap();
            let sum: f64 = f.probs().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            let before: Vec<usize> = d.ranked().into_iter().map(|(i, _)| i).filter(|i| keep.contains(i)).collect();
            let after: Vec<usize> = f.ranked().into_iter().map(|(i, _)| i).take(keep.len()).collect();
            prop_assert_eq!(before, after);
        }
    }
}
