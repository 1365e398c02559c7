//! Identification of clicked widgets by their image patch.
//!
//! A click is resolved by detecting widget boxes on the screenshot, picking
//! the smallest box containing the cursor, cropping and DPI-normalizing it,
//! and looking it up in a [`PatchDb`] of previously clicked widgets. Unknown
//! widgets are added on the fly.

mod db;
mod detect;
mod image;
mod ncc;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use db::{margin_correlation, MatchConfig, PatchDb, PatchEntry, SharedPatchDb, MANIFEST};
pub use detect::{select_clicked_region, ClickResolver, Detector, DetectorBox, StaticDetector, WidgetKind};
pub use image::{
    normalize_dpi, prefilter_compatible, resize_bilinear, ImagePatch, PatchFeatures, PrefilterTolerance,
    DEFAULT_DPI,
};
pub use ncc::{locate_on_screen, ncc, CorrelationMap, Location};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PatchId(pub u64);

impl fmt::Display for PatchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
