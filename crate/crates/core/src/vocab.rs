//! Dense indexing of user actions and applications.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::patch::PatchId;
use crate::tokenizer::{ActionKind, UserAction};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const RESERVED: usize = 2;

/// Widgets clicked fewer times than this are treated as rare and dropped.
pub const DEFAULT_MIN_CLICK_COUNT: u64 = 6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionVocabulary {
    actions: Vec<ActionKind>,
    index_of: HashMap<ActionKind, usize>,
    apps: Vec<String>,
    app_index_of: HashMap<String, usize>,
    min_click_count: u64,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    min_click_count: u64,
    actions: Vec<ActionKind>,
    apps: Vec<String>,
}

/// Builds the vocabulary. Keystrokes, generic clicks and scrolls are kept if
/// seen at all; a widget click is kept only if its patch was clicked at least
/// `min_click_count` times. `patch_click_counts` wins over the counts observed
/// in `actions` when it has an entry for the patch.
pub fn build_vocabulary<'a, I>(
    actions: I,
    patch_click_counts: &HashMap<PatchId, u64>,
    min_click_count: u64,
) -> ActionVocabulary
where
    I: IntoIterator<Item = &'a UserAction>,
{
    let mut seen = BTreeSet::new();
    let mut observed: HashMap<PatchId, u64> = HashMap::new();
    for a in actions {
        if let Some(id) = a.kind.patch_id() {
            *observed.entry(id).or_default() += 1;
        }
        seen.insert(a.kind.clone());
    }
    let kept = seen.into_iter().filter(|kind| match kind.patch_id() {
        Some(id) => {
            let count = patch_click_counts
                .get(&id)
                .or_else(|| observed.get(&id))
                .copied()
                .unwrap_or(0);
            count >= min_click_count
        }
        None => true,
    });
    ActionVocabulary::from_parts(kept.collect(), Vec::new(), min_click_count)
}

impl ActionVocabulary {
    fn from_parts(actions: Vec<ActionKind>, apps: Vec<String>, min_click_count: u64) -> Self {
        let index_of = actions
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i + RESERVED))
            .collect();
        let app_index_of = apps.iter().enumerate().map(|(i, a)| (a.clone(), i)).collect();
        Self { actions, index_of, apps, app_index_of, min_click_count }
    }

    /// Replaces the application vocabulary with the sorted distinct `apps`.
    pub fn with_apps<I, S>(self, apps: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let apps: BTreeSet<String> = apps.into_iter().map(Into::into).collect();
        Self::from_parts(self.actions, apps.into_iter().collect(), self.min_click_count)
    }

    /// Number of output classes, including PAD and UNK.
    pub fn len(&self) -> usize {
        self.actions.len() + RESERVED
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn app_count(&self) -> usize {
        self.apps.len()
    }

    pub fn apps(&self) -> &[String] {
        &self.apps
    }

    pub fn app_index_of(&self) -> &HashMap<String, usize> {
        &self.app_index_of
    }

    pub fn min_click_count(&self) -> u64 {
        self.min_click_count
    }

    pub fn encode(&self, action: &ActionKind) -> usize {
        self.index_of.get(action).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, action: &ActionKind) -> bool {
        self.index_of.contains_key(action)
    }

    /// `None` for PAD, UNK, and out-of-range indices.
    pub fn decode(&self, index: usize) -> Option<&ActionKind> {
        index.checked_sub(RESERVED).and_then(|i| self.actions.get(i))
    }

    pub fn label(&self, index: usize) -> String {
        match index {
            PAD => "<pad>".to_string(),
            UNK => "<unk>".to_string(),
            i => self.decode(i).map_or_else(|| format!("<{i}?>"), ToString::to_string),
        }
    }

    /// Non-reserved entries in index order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &ActionKind)> {
        self.actions.iter().enumerate().map(|(i, a)| (i + RESERVED, a))
    }

    pub fn to_json(&self) -> String {
        let file = VocabFile {
            min_click_count: self.min_click_count,
            actions: self.actions.clone(),
            apps: self.apps.clone(),
        };
        serde_json::to_string_pretty(&file).expect("vocabulary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: VocabFile = serde_json::from_str(text)?;
        Ok(Self::from_parts(file.actions, file.apps, file.min_click_count))
    }

    /// Hex SHA-256 over the canonical JSON form; binds checkpoints to vocabularies.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}
