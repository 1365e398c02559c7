use serde::{Deserialize, Serialize};

use crate::geom::{Point, Rect};
use crate::patch::{normalize_dpi, ImagePatch, MatchConfig, PatchId, SharedPatchDb};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidgetKind {
    Button,
    Link,
    TextField,
}

/// A widget box reported by a detector, in screenshot pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorBox {
    pub rect: Rect,
    pub kind: WidgetKind,
}

/// Source of widget boxes for a screenshot. The production object detector
/// lives outside this crate; anything that can produce boxes plugs in here.
pub trait Detector {
    fn detect(&self, screenshot: &ImagePatch, cursor: Point) -> Vec<DetectorBox>;
}

impl<D: Detector + ?Sized> Detector for &D {
    fn detect(&self, screenshot: &ImagePatch, cursor: Point) -> Vec<DetectorBox> {
        (**self).detect(screenshot, cursor)
    }
}

/// Detector that returns a fixed list of boxes, e.g. scene ground truth.
#[derive(Debug, Clone, Default)]
pub struct StaticDetector {
    pub boxes: Vec<DetectorBox>,
}

impl Detector for StaticDetector {
    fn detect(&self, _screenshot: &ImagePatch, _cursor: Point) -> Vec<DetectorBox> {
        self.boxes.clone()
    }
}

/// Smallest box containing `cursor` (edges inclusive); the earliest wins ties.
pub fn select_clicked_region(boxes: &[DetectorBox], cursor: Point) -> Option<DetectorBox> {
    boxes
        .iter()
        .filter(|b| b.rect.is_valid() && b.rect.contains(cursor))
        .fold(None, |best: Option<&DetectorBox>, b| match best {
            Some(cur) if cur.rect.area() <= b.rect.area() => Some(cur),
            _ => Some(b),
        })
        .copied()
}

/// Click-to-widget pipeline over a shared patch store.
pub struct ClickResolver<'a, D: Detector> {
    pub detector: D,
    pub db: &'a SharedPatchDb,
    pub config: MatchConfig,
}

impl<'a, D: Detector> ClickResolver<'a, D> {
    pub fn new(detector: D, db: &'a SharedPatchDb, config: MatchConfig) -> Self {
        Self { detector, db, config }
    }

    /// Crops the clicked widget and normalizes it to 96 DPI.
    pub fn extract(&self, screenshot: &ImagePatch, cursor: Point) -> Option<ImagePatch> {
        let boxes = self.detector.detect(screenshot, cursor);
        let region = select_clicked_region(&boxes, cursor)?;
        let crop = screenshot.crop(region.rect)?;
        Some(normalize_dpi(&crop, screenshot.dpi()))
    }

    /// Resolves a click to a widget id, adding the widget if it is new.
    /// `None` when no detected widget contains the cursor.
    pub fn resolve(&self, screenshot: &ImagePatch, cursor: Point, now_ms: i64) -> Option<PatchId> {
        let patch = self.extract(screenshot, cursor)?;
        Some(self.db.resolve_or_insert(patch, &self.config, now_ms))
    }

    /// Like [`resolve`](Self::resolve) but never modifies the store.
    pub fn lookup(&self, screenshot: &ImagePatch, cursor: Point) -> Option<PatchId> {
        let patch = self.extract(screenshot, cursor)?;
        self.db.match_patch(&patch, &self.config)
    }
}
