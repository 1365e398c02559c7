use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Point, Rect};
use crate::patch::{Detector, DetectorBox, ImagePatch, WidgetKind};

/// Height of the window's title strip, which holds no buttons.
pub const TITLE_BAR_PX: i32 = 24;
const CELL_W: i32 = 150;
const CELL_H: i32 = 56;
const GLYPH_CELL: i32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneButton {
    pub id: u64,
    /// Relative to the window's top-left corner.
    pub rect: Rect,
    pub fill: [u8; 3],
    /// Rows of `#` (inverted block) and `.` (fill), 3 px per cell.
    pub glyph: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub width: i32,
    pub height: i32,
    pub window: Rect,
    pub desktop: [u8; 3],
    pub window_fill: [u8; 3],
    pub buttons: Vec<SceneButton>,
}

fn random_button(id: u64, rect: Rect, rng: &mut ChaCha8Rng) -> SceneButton {
    let fill = [rng.gen(), rng.gen(), rng.gen()];
    let cols = ((rect.w - 4) / GLYPH_CELL).max(0) as usize;
    let rows = ((rect.h - 4) / GLYPH_CELL).max(0) as usize;
    let glyph = (0..rows)
        .map(|_| (0..cols).map(|_| if rng.gen_bool(0.5) { '#' } else { '.' }).collect())
        .collect();
    SceneButton { id, rect, fill, glyph }
}

impl SyntheticScene {
    /// A window holding one randomly drawn button per id, laid out on a grid
    /// of `columns` cells. The canvas leaves `slack` pixels for moving the
    /// window around.
    pub fn random(ids: &[u64], columns: usize, slack: (i32, i32), seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let columns = columns.max(1) as i32;
        let rows = (ids.len() as i32 + columns - 1) / columns;
        let (ww, wh) = (columns * CELL_W + 16, TITLE_BAR_PX + 16 + rows.max(1) * CELL_H + 16);
        let buttons = ids
            .iter()
            .enumerate()
            .map(|(i, &id)| {
                let (col, row) = (i as i32 % columns, i as i32 / columns);
                let w = rng.gen_range(60..=120);
                let h = rng.gen_range(24..=40);
                let x = 8 + col * CELL_W + rng.gen_range(4..=CELL_W - w - 4);
                let y = TITLE_BAR_PX + 16 + row * CELL_H + rng.gen_range(4..=CELL_H - h - 4);
                random_button(id, Rect::new(x, y, w, h), &mut rng)
            })
            .collect();
        Self {
            width: ww + slack.0,
            height: wh + slack.1,
            window: Rect::new(0, 0, ww, wh),
            desktop: [40, 60, 90],
            window_fill: [236, 236, 236],
            buttons,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let canvas = Rect::new(0, 0, self.width, self.height);
        let inside = |r: Rect| r.is_valid() && r.x >= 0 && r.y >= 0 && r.x + r.w <= canvas.w && r.y + r.h <= canvas.h;
        if !inside(self.window) {
            return Err(Error::Profile(format!("window {:?} outside the canvas", self.window)));
        }
        let mut ids = std::collections::HashSet::new();
        for b in &self.buttons {
            if !inside(self.absolute(b)) {
                return Err(Error::Profile(format!("button {} outside the canvas", b.id)));
            }
            if !ids.insert(b.id) {
                return Err(Error::Profile(format!("duplicate button id {}", b.id)));
            }
        }
        Ok(())
    }

    /// The same scene with the window moved to `(x, y)`.
    pub fn with_window_at(&self, x: i32, y: i32) -> Self {
        let mut s = self.clone();
        s.window.x = x;
        s.window.y = y;
        s
    }

    pub fn absolute(&self, b: &SceneButton) -> Rect {
        b.rect.translate(self.window.x, self.window.y)
    }

    pub fn button(&self, id: u64) -> Option<&SceneButton> {
        self.buttons.iter().find(|b| b.id == id)
    }

    pub fn button_at(&self, p: Point) -> Option<&SceneButton> {
        self.buttons.iter().find(|b| self.absolute(b).contains(p))
    }

    /// Exact screen rectangles of all buttons.
    pub fn boxes(&self) -> Vec<DetectorBox> {
        self.buttons
            .iter()
            .map(|b| DetectorBox { rect: self.absolute(b), kind: WidgetKind::Button })
            .collect()
    }

    /// Strip of the window where clicks hit no button.
    pub fn title_bar(&self) -> Rect {
        Rect::new(self.window.x, self.window.y, self.window.w, TITLE_BAR_PX)
    }
}

pub fn render_scene(scene: &SyntheticScene) -> ImagePatch {
    let mut img = ImagePatch::filled(scene.width as usize, scene.height as usize, scene.desktop);
    img.fill_rect(scene.window, scene.window_fill);
    let title = scene.title_bar();
    img.fill_rect(title, [70, 90, 130]);
    for b in &scene.buttons {
        let r = scene.absolute(b);
        img.fill_rect(r, b.fill);
        let ink = [255 - b.fill[0], 255 - b.fill[1], 255 - b.fill[2]];
        for (row, line) in b.glyph.iter().enumerate() {
            for (col, c) in line.chars().enumerate() {
                if c == '#' {
                    let cell = Rect::new(r.x + 2 + col as i32 * GLYPH_CELL, r.y + 2 + row as i32 * GLYPH_CELL, GLYPH_CELL, GLYPH_CELL);
                    img.fill_rect(cell, ink);
                }
            }
        }
    }
    img
}

/// Detector backed by scene ground truth.
///
/// [`SceneDetector::exact`] reports the button rectangles as they are. The
/// noisy variant grows each box by `pad_px` and shifts it by up to
/// `jitter_px` in each axis, seeded by the click position, to mimic a learned
/// detector's loose boxes.
#[derive(Debug, Clone)]
pub struct SceneDetector {
    boxes: Vec<DetectorBox>,
    pad_px: i32,
    jitter_px: i32,
    seed: u64,
}

impl SceneDetector {
    pub fn exact(scene: &SyntheticScene) -> Self {
        Self { boxes: scene.boxes(), pad_px: 0, jitter_px: 0, seed: 0 }
    }

    pub fn noisy(scene: &SyntheticScene, pad_px: i32, jitter_px: i32, seed: u64) -> Self {
        Self { boxes: scene.boxes(), pad_px, jitter_px, seed }
    }
}

impl Detector for SceneDetector {
    fn detect(&self, _screenshot: &ImagePatch, cursor: Point) -> Vec<DetectorBox> {
        let key = (cursor.x as u64) << 32 ^ (cursor.y as u32 as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ key.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        self.boxes
            .iter()
            .map(|b| {
                let (dx, dy) = if self.jitter_px > 0 {
                    (rng.gen_range(-self.jitter_px..=self.jitter_px), rng.gen_range(-self.jitter_px..=self.jitter_px))
                } else {
                    (0, 0)
                };
                let r = b.rect;
                DetectorBox {
                    rect: Rect::new(r.x - self.pad_px + dx, r.y - self.pad_px + dy, r.w + 2 * self.pad_px, r.h + 2 * self.pad_px),
                    kind: b.kind,
                }
            })
            .collect()
    }
}
