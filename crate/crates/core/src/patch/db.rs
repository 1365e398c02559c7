use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patch::{ncc, prefilter_compatible, ImagePatch, PatchFeatures, PatchId, PrefilterTolerance};

/// Matching parameters for the patch database.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    /// Minimum correlation for two patches to count as the same widget.
    pub threshold: f64,
    /// Pixels of edge-replicated padding added around the larger patch.
    pub margin_px: usize,
    pub prefilter: PrefilterTolerance,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self { threshold: 0.97, margin_px: 4, prefilter: PrefilterTolerance::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchEntry {
    pub patch: ImagePatch,
    pub features: PatchFeatures,
    pub click_count: u64,
    pub created_ms: i64,
}

/// Best correlation of `a` against `b` with the larger of the two padded by
/// `margin_px`. `None` when the smaller patch does not fit inside the padded
/// larger one.
pub fn margin_correlation(a: &ImagePatch, b: &ImagePatch, margin_px: usize) -> Option<f64> {
    let area = |p: &ImagePatch| p.width() * p.height();
    let (small, large) = if area(a) <= area(b) { (a, b) } else { (b, a) };
    let padded = large.pad_replicate(margin_px);
    if small.width() > padded.width() || small.height() > padded.height() {
        return None;
    }
    ncc(small, &padded).ok().map(|m| m.max().2)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PatchDb {
    entries: BTreeMap<PatchId, PatchEntry>,
    next_id: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    id: u64,
    file: String,
    w: u32,
    h: u32,
    mean_rgb: [f64; 3],
    clicks: u64,
    created_ms: i64,
}

pub const MANIFEST: &str = "manifest.json";

impl PatchDb {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: PatchId) -> Option<&PatchEntry> {
        self.entries.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (PatchId, &PatchEntry)> {
        self.entries.iter().map(|(id, e)| (*id, e))
    }

    pub fn click_counts(&self) -> HashMap<PatchId, u64> {
        self.entries.iter().map(|(id, e)| (*id, e.click_count)).collect()
    }

    /// Entries in scan order: most clicked first, then by id.
    fn scan_order(&self) -> Vec<(PatchId, &PatchEntry)> {
        let mut order: Vec<_> = self.iter().collect();
        order.sort_by(|a, b| b.1.click_count.cmp(&a.1.click_count).then(a.0.cmp(&b.0)));
        order
    }

    /// First entry (in scan order) that passes the prefilter and correlates
    /// with `candidate` at or above the threshold.
    pub fn match_patch(&self, candidate: &ImagePatch, cfg: &MatchConfig) -> Option<PatchId> {
        let features = candidate.features();
        self.scan_order().into_iter().find_map(|(id, entry)| {
            if !prefilter_compatible(&features, &entry.features, cfg.prefilter) {
                return None;
            }
            let score = margin_correlation(candidate, &entry.patch, cfg.margin_px)?;
            (score >= cfg.threshold).then_some(id)
        })
    }

    /// Adds a new entry with one click. Callers are expected to have checked
    /// [`match_patch`](Self::match_patch) first.
    pub fn insert_patch(&mut self, patch: ImagePatch, created_ms: i64) -> PatchId {
        let id = PatchId(self.next_id);
        self.next_id += 1;
        let features = patch.features();
        self.entries.insert(id, PatchEntry { patch, features, click_count: 1, created_ms });
        id
    }

    /// Attributes a click to the matching entry, inserting one if none matches.
    pub fn resolve_or_insert(&mut self, patch: ImagePatch, cfg: &MatchConfig, now_ms: i64) -> PatchId {
        match self.match_patch(&patch, cfg) {
            Some(id) => {
                self.entries.get_mut(&id).expect("matched id exists").click_count += 1;
                id
            }
            None => self.insert_patch(patch, now_ms),
        }
    }

    /// Writes `<id>.ppm` per entry and an atomically replaced `manifest.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut manifest = Vec::with_capacity(self.entries.len());
        for (id, e) in &self.entries {
            let file = format!("{}.ppm", id.0);
            let path = dir.join(&file);
            let bytes = e.patch.to_ppm();
            if fs::read(&path).ok().as_deref() != Some(bytes.as_slice()) {
                fs::write(&path, &bytes)?;
            }
            manifest.push(ManifestEntry {
                id: id.0,
                file,
                w: e.features.width,
                h: e.features.height,
                mean_rgb: e.features.mean_rgb,
                clicks: e.click_count,
                created_ms: e.created_ms,
            });
        }
        let tmp = dir.join(format!("{MANIFEST}.tmp"));
        fs::write(&tmp, serde_json::to_vec_pretty(&manifest)?)?;
        fs::rename(&tmp, dir.join(MANIFEST))?;
        Ok(())
    }

    /// Loads a store written by [`save`](Self::save). A missing directory is an empty store.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST);
        if !manifest_path.exists() {
            return Ok(Self::new());
        }
        let manifest: Vec<ManifestEntry> = serde_json::from_slice(&fs::read(&manifest_path)?)?;
        let mut db = Self::new();
        for m in manifest {
            let patch = ImagePatch::from_ppm(&fs::read(dir.join(&m.file))?)?;
            if patch.width() as u32 != m.w || patch.height() as u32 != m.h {
                return Err(Error::MalformedInput {
                    line: 0,
                    reason: format!("patch {} size disagrees with manifest", m.id),
                });
            }
            let features = patch.features();
            db.entries.insert(
                PatchId(m.id),
                PatchEntry { patch, features, click_count: m.clicks, created_ms: m.created_ms },
            );
            db.next_id = db.next_id.max(m.id + 1);
        }
        Ok(db)
    }
}

/// Shared store: many concurrent readers, one writer. Resolve-or-insert is
/// atomic with respect to other resolves.
#[derive(Debug, Default)]
pub struct SharedPatchDb {
    inner: RwLock<PatchDb>,
}

impl SharedPatchDb {
    pub fn new(db: PatchDb) -> Self {
        Self { inner: RwLock::new(db) }
    }

    pub fn read(&self) -> std::sync::RwLockReadGuard<'_, PatchDb> {
        self.inner.read().expect("patch db lock poisoned")
    }

    pub fn match_patch(&self, candidate: &ImagePatch, cfg: &MatchConfig) -> Option<PatchId> {
        self.read().match_patch(candidate, cfg)
    }

    pub fn resolve_or_insert(&self, patch: ImagePatch, cfg: &MatchConfig, now_ms: i64) -> PatchId {
        let mut db = self.inner.write().expect("patch db lock poisoned");
        db.resolve_or_insert(patch, cfg, now_ms)
    }

    pub fn into_inner(self) -> PatchDb {
        self.inner.into_inner().expect("patch db lock poisoned")
    }
}
