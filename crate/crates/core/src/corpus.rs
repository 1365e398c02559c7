//! Tokenized action sequences and their dense encoding.
//!
//! The actions file is JSONL with one action per line
//! (`{"t":..,"action":"CTRL+C","app":..,"rel_x":..,"rel_y":..,"elapsed_bucket":..}`);
//! like event logs, a blank line separates sessions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::InputEvent;
use crate::patch::PatchId;
use crate::tokenizer::{tokenize_with_sources, ActionKind, ContextFeatures, RawContext, UserAction};
use crate::vocab::{ActionVocabulary, PAD, UNK};

#[derive(Debug, Clone, PartialEq)]
pub struct ActionRecord {
    pub action: UserAction,
    pub context: RawContext,
}

#[derive(Serialize, Deserialize)]
struct WireRecord {
    t: i64,
    action: ActionKind,
    app: String,
    rel_x: f64,
    rel_y: f64,
    elapsed_bucket: u8,
}

/// Tokenizes one session and attaches the context of each producing event.
pub fn records_from_events<F>(events: &[InputEvent], resolve_patch: F) -> Result<Vec<ActionRecord>>
where
    F: FnMut(&InputEvent) -> Option<PatchId>,
{
    let tokens = tokenize_with_sources(events, resolve_patch)?;
    let mut prev = None;
    Ok(tokens
        .into_iter()
        .map(|tok| {
            let context = RawContext::from_event(prev, &events[tok.event_index]);
            prev = Some(tok.action.timestamp_ms);
            ActionRecord { action: tok.action, context }
        })
        .collect())
}

pub fn write_actions(sessions: &[Vec<ActionRecord>]) -> String {
    let mut out = String::new();
    for (i, session) in sessions.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for r in session {
            let wire = WireRecord {
                t: r.action.timestamp_ms,
                action: r.action.kind.clone(),
                app: r.context.app.clone(),
                rel_x: r.context.rel_x,
                rel_y: r.context.rel_y,
                elapsed_bucket: r.context.elapsed_bucket,
            };
            out.push_str(&serde_json::to_string(&wire).expect("record serializes"));
            out.push('\n');
        }
    }
    out
}

pub fn parse_actions(text: &str) -> Result<Vec<Vec<ActionRecord>>> {
    let mut sessions = Vec::new();
    let mut current = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                sessions.push(std::mem::take(&mut current));
            }
            continue;
        }
        let w: WireRecord = serde_json::from_str(line).map_err(|e| Error::MalformedInput {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        current.push(ActionRecord {
            action: UserAction::new(w.action, w.t),
            context: RawContext {
                app: w.app,
                rel_x: w.rel_x.clamp(0.0, 1.0),
                rel_y: w.rel_y.clamp(0.0, 1.0),
                elapsed_bucket: w.elapsed_bucket,
            },
        });
    }
    if !current.is_empty() {
        sessions.push(current);
    }
    Ok(sessions)
}

/// `[action one-hot | app one-hot | rel_x | rel_y | elapsed_bucket]`.
pub fn feature_vector(action: usize, ctx: &ContextFeatures, n_actions: usize) -> Vec<f64> {
    let mut v = vec![0.0; n_actions + ctx.app_count + 3];
    v[action] = 1.0;
    if let Some(a) = ctx.app_index {
        v[n_actions + a] = 1.0;
    }
    let base = n_actions + ctx.app_count;
    v[base] = ctx.rel_x;
    v[base + 1] = ctx.rel_y;
    v[base + 2] = f64::from(ctx.elapsed_bucket);
    v
}

pub fn pad_vector(vocab: &ActionVocabulary) -> Vec<f64> {
    feature_vector(PAD, &ContextFeatures::empty(vocab.app_count()), vocab.len())
}

/// An action known to the vocabulary, with its encoded context.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedStep {
    pub index: usize,
    pub context: ContextFeatures,
}

impl EncodedStep {
    pub fn features(&self, n_actions: usize) -> Vec<f64> {
        feature_vector(self.index, &self.context, n_actions)
    }
}

/// Encodes a record, or `None` if the vocabulary does not know its action.
pub fn encode_record(record: &ActionRecord, vocab: &ActionVocabulary) -> Option<EncodedStep> {
    let index = vocab.encode(&record.action.kind);
    (index != UNK).then(|| EncodedStep {
        index,
        context: record.context.encode(vocab.app_index_of(), vocab.app_count()),
    })
}

/// Feature vectors for the last `n_past` known actions of `history`,
/// left-padded with PAD vectors. Unknown actions are skipped entirely.
pub fn encode_window(history: &[ActionRecord], vocab: &ActionVocabulary, n_past: usize) -> Vec<Vec<f64>> {
    let mut known: Vec<EncodedStep> = history
        .iter()
        .rev()
        .filter_map(|r| encode_record(r, vocab))
        .take(n_past)
        .collect();
    known.reverse();
    let mut window = vec![pad_vector(vocab); n_past - known.len()];
    window.extend(known.iter().map(|s| s.features(vocab.len())));
    window
}

/// Sessions of encoded steps; actions outside the vocabulary are removed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EncodedCorpus {
    pub sessions: Vec<Vec<EncodedStep>>,
}

impl EncodedCorpus {
    pub fn encode(sessions: &[Vec<ActionRecord>], vocab: &ActionVocabulary) -> Self {
        Self {
            sessions: sessions
                .iter()
                .map(|s| s.iter().filter_map(|r| encode_record(r, vocab)).collect::<Vec<_>>())
                .filter(|s| !s.is_empty())
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.sessions.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(session, position)` of every step that has at least one predecessor
    /// in its session; each is a prediction target.
    pub fn targets(&self) -> Vec<(usize, usize)> {
        self.sessions
            .iter()
            .enumerate()
            .flat_map(|(s, steps)| (1..steps.len()).map(move |t| (s, t)))
            .collect()
    }
}

/// Pre-computed feature vectors for a corpus, so that training windows are
/// slices rather than fresh allocations.
pub struct FeatureTable {
    pub pad: Vec<f64>,
    pub sessions: Vec<Vec<Vec<f64>>>,
    pub n_past: usize,
}

impl FeatureTable {
    pub fn new(corpus: &EncodedCorpus, vocab: &ActionVocabulary, n_past: usize) -> Self {
        Self {
            pad: pad_vector(vocab),
            sessions: corpus
                .sessions
                .iter()
                .map(|s| s.iter().map(|step| step.features(vocab.len())).collect())
                .collect(),
            n_past,
        }
    }

    /// The window preceding position `t` of session `s`.
    pub fn window(&self, s: usize, t: usize) -> Vec<&[f64]> {
        let start = t.saturating_sub(self.n_past);
        let mut w: Vec<&[f64]> = Vec::with_capacity(self.n_past);
        for _ in 0..self.n_past - (t - start) {
            w.push(&self.pad);
        }
        w.extend(self.sessions[s][start..t].iter().map(Vec::as_slice));
        w
    }
}
