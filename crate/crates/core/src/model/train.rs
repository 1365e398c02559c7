use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{adam_step, AdamState, Checkpoint, Model, TrainingConfig};
use crate::corpus::{EncodedCorpus, FeatureTable};
use crate::error::{Error, Result};
use crate::vocab::{ActionVocabulary, RESERVED};

/// Keeps the shuffling stream independent of the initialization stream.
const SHUFFLE_STREAM: u64 = 0x5eed_5aff_1e00;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
    /// Wall-clock seconds since training started.
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    /// Parameters from the epoch with the highest validation accuracy.
    pub best: Checkpoint,
    pub best_epoch: usize,
    pub metrics: Vec<EpochMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositionRecord {
    pub session: usize,
    pub position: usize,
    pub predicted: usize,
    pub actual: usize,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub records: Vec<PositionRecord>,
}

/// Scores a top-1 predictor on every target position of `corpus`.
/// `predict` receives the padded window and returns an action index.
pub fn evaluate_with<F>(corpus: &EncodedCorpus, vocab: &ActionVocabulary, n_past: usize, mut predict: F) -> Result<Evaluation>
where
    F: FnMut(&[&[f64]]) -> Result<usize>,
{
    let table = FeatureTable::new(corpus, vocab, n_past);
    let mut records = Vec::new();
    for (s, t) in corpus.targets() {
        let window = table.window(s, t);
        let predicted = predict(&window)?;
        let actual = corpus.sessions[s][t].index;
        records.push(PositionRecord { session: s, position: t, predicted, actual, correct: predicted == actual });
    }
    let correct = records.iter().filter(|r| r.correct).count();
    let total = records.len();
    let accuracy = if total == 0 { 0.0 } else { correct as f64 / total as f64 };
    Ok(Evaluation { accuracy, correct, total, records })
}

/// Top-1 accuracy of `model` on every position that has a predecessor.
pub fn evaluate(corpus: &EncodedCorpus, model: &Model, vocab: &ActionVocabulary) -> Result<Evaluation> {
    evaluate_with(corpus, vocab, model.config().n_past, |w| {
        let dist = model.forward(w)?;
        Ok(dist.argmax_where(|i| i >= RESERVED).unwrap_or(RESERVED))
    })
}

fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(format!("{what}[{i}]"))),
        None => Ok(()),
    }
}

/// Mini-batch Adam training over all sliding windows of `train_corpus`.
///
/// Every position with at least one predecessor in its session is a target;
/// its window is the `n_past` preceding actions, left-padded with PAD.
/// Pairs are reshuffled each epoch from a seeded stream, so the whole run is
/// a deterministic function of the inputs and `config.seed`.
pub fn train(
    train_corpus: &EncodedCorpus,
    val_corpus: &EncodedCorpus,
    vocab: &ActionVocabulary,
    config: &TrainingConfig,
) -> Result<TrainingRun> {
    config.validate()?;
    if train_corpus.len() < 2 {
        return Err(Error::CorpusTooShort(format!("{} training actions", train_corpus.len())));
    }
    let mut pairs = train_corpus.targets();
    if pairs.is_empty() {
        return Err(Error::CorpusTooShort("no session has two actions".into()));
    }
    let started = Instant::now();
    let mut model = Model::new(config.clone(), vocab.len(), vocab.app_count())?;
    let mut adam = AdamState::new(model.params().len());
    let table = FeatureTable::new(train_corpus, vocab, config.n_past);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ SHUFFLE_STREAM);
    let mut grad = vec![0.0; model.params().len()];

    let mut metrics = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, Model, AdamState)> = None;
    for epoch in 1..=config.epochs {
        pairs.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in pairs.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &(s, t) in batch {
                let window = table.window(s, t);
                let target = train_corpus.sessions[s][t].index;
                loss_sum += model.accumulate_gradient(&window, target, scale, &mut grad)?;
            }
            adam_step(model.params_mut(), &grad, &mut adam, config)?;
        }
        let train_loss = loss_sum / pairs.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss in epoch {epoch}")));
        }
        ensure_finite(model.params(), "parameters")?;
        let val_accuracy = if val_corpus.is_empty() {
            0.0
        } else {
            evaluate(val_corpus, &model, vocab)?.accuracy
        };
        log::info!("epoch {epoch}: loss {train_loss:.5} val_acc {val_accuracy:.4}");
        metrics.push(EpochMetrics {
            epoch,
            train_loss,
            val_accuracy,
            seconds: started.elapsed().as_secs_f64(),
        });
        if best.as_ref().map_or(true, |b| val_accuracy > b.1) {
            best = Some((epoch, val_accuracy, model.clone(), adam.clone()));
        }
    }
    let (best_epoch, _, model, adam) = match best {
        Some(b) => b,
        None => (0, 0.0, model, adam),
    };
    Ok(TrainingRun {
        best: Checkpoint { vocab_hash: vocab.hash(), model, adam },
        best_epoch,
        metrics,
    })
}

/// Metrics as CSV (`epoch,train_loss,val_accuracy,seconds`). The seconds
/// column is left empty unless `wallclock` is set, so that reruns with the
/// same seed produce identical files.
pub fn metrics_csv(metrics: &[EpochMetrics], wallclock: bool) -> String {
    let mut out = String::from("epoch,train_loss,val_accuracy,seconds\n");
    for m in metrics {
        let secs = if wallclock { format!("{:.3}", m.seconds) } else { String::new() };
        out.push_str(&format!("{},{:.10},{:.6},{}\n", m.epoch, m.train_loss, m.val_accuracy, secs));
    }
    out
}
