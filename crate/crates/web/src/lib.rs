//! WebAssembly bindings for the single-page demo in `www/`.
//!
//! Three operations: sampling the cursor attraction field, locating a clicked
//! widget on a synthetic screen by NCC, and tokenizing live keyboard input.

use acf_core::attraction::{sample_grid, AttractionTarget, FieldConfig, Vec2};
use acf_core::events::{EventKind, InputEvent};
use acf_core::geom::{Point, Rect};
use acf_core::patch::{locate_on_screen, ClickResolver, ImagePatch, MatchConfig, SharedPatchDb};
use acf_core::synth::{render_scene, SceneDetector, SyntheticScene};
use acf_core::tokenizer::tokenize_events;
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

#[derive(Debug, Deserialize)]
struct TargetSpec {
    rect: Rect,
    confidence: f64,
}

/// Samples the field of `targets_json` (`[{"rect":{x,y,w,h},"confidence"}]`)
/// on a `cols` x `rows` grid from the origin. Flat `[x, y, dx, dy, ...]`.
#[wasm_bindgen]
pub fn field_grid(
    targets_json: &str,
    cols: usize,
    rows: usize,
    step: f64,
    gain: f64,
    softening_px: f64,
    max_pull_px: f64,
    dead_zone: bool,
) -> Result<Vec<f64>, JsError> {
    let specs: Vec<TargetSpec> = serde_json::from_str(targets_json).map_err(js_err)?;
    let targets: Vec<AttractionTarget> = specs.iter().map(|t| AttractionTarget::from_rect(t.rect, t.confidence)).collect();
    for t in &targets {
        t.validate().map_err(js_err)?;
    }
    let cfg = FieldConfig { gain, softening_px, max_pull_px, dead_zone };
    cfg.validate().map_err(js_err)?;
    Ok(sample_grid(Vec2::ZERO, cols, rows, step, &targets, &cfg)
        .into_iter()
        .flat_map(|(p, v)| [p.x, p.y, v.x, v.y])
        .collect())
}

#[derive(Debug, Serialize)]
struct Hit {
    x: i32,
    y: i32,
    w: usize,
    h: usize,
    score: f64,
}

/// A synthetic window whose last button repeats the first one, so a click on
/// either finds two matches.
#[wasm_bindgen]
pub struct SceneDemo {
    scene: SyntheticScene,
    shot: ImagePatch,
}

#[wasm_bindgen]
impl SceneDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64, buttons: u32) -> SceneDemo {
        let ids: Vec<u64> = (0..u64::from(buttons.max(2))).collect();
        let mut scene = SyntheticScene::random(&ids, 4, (0, 0), seed);
        let first = scene.buttons[0].clone();
        if let Some(last) = scene.buttons.last_mut() {
            last.rect.w = first.rect.w;
            last.rect.h = first.rect.h;
            last.fill = first.fill;
            last.glyph = first.glyph;
        }
        let shot = render_scene(&scene);
        SceneDemo { scene, shot }
    }

    pub fn width(&self) -> usize {
        self.shot.width()
    }

    pub fn height(&self) -> usize {
        self.shot.height()
    }

    /// Screenshot as RGBA bytes for `ImageData`.
    pub fn rgba(&self) -> Vec<u8> {
        self.shot.pixels().chunks_exact(3).flat_map(|p| [p[0], p[1], p[2], 255]).collect()
    }

    /// Crops the button under `(x, y)` and locates it on the whole screen.
    /// JSON `{"patch": rect | null, "matches": [...]}`.
    pub fn locate_at(&self, x: i32, y: i32, threshold: f64) -> Result<String, JsError> {
        let db = SharedPatchDb::default();
        let resolver = ClickResolver::new(SceneDetector::exact(&self.scene), &db, MatchConfig::default());
        let cursor = Point::new(x, y);
        let Some(patch) = resolver.extract(&self.shot, cursor) else {
            return Ok(serde_json::json!({ "patch": null, "matches": [] }).to_string());
        };
        let rect = self.scene.button_at(cursor).map(|b| self.scene.absolute(b));
        let hits: Vec<Hit> = locate_on_screen(&patch, &self.shot, threshold)
            .map_err(js_err)?
            .into_iter()
            .map(|l| Hit { x: l.x, y: l.y, w: patch.width(), h: patch.height(), score: l.score })
            .collect();
        Ok(serde_json::json!({ "patch": rect, "matches": hits }).to_string())
    }
}

/// Browser `KeyboardEvent.key` to the tokenizer's key names.
pub fn browser_key(key: &str) -> String {
    match key {
        " " => "SPACE".into(),
        "Delete" => "DEL".into(),
        "Escape" => "ESC".into(),
        "OS" => "META".into(),
        k => k.to_ascii_uppercase(),
    }
}

/// Accumulates raw input and re-tokenizes it on every event.
#[wasm_bindgen]
#[derive(Default)]
pub struct LiveTokenizer {
    events: Vec<InputEvent>,
}

#[wasm_bindgen]
impl LiveTokenizer {
    #[wasm_bindgen(constructor)]
    pub fn new() -> LiveTokenizer {
        LiveTokenizer::default()
    }

    pub fn key_down(&mut self, key: &str, t_ms: f64) -> Result<String, JsError> {
        self.push(t_ms, EventKind::KeyDown(browser_key(key)))
    }

    pub fn key_up(&mut self, key: &str, t_ms: f64) -> Result<String, JsError> {
        self.push(t_ms, EventKind::KeyUp(browser_key(key)))
    }

    /// Positive `dy` scrolls up.
    pub fn scroll(&mut self, dy: i32, t_ms: f64) -> Result<String, JsError> {
        self.push(t_ms, EventKind::Scroll(dy))
    }

    pub fn clear(&mut self) {
        self.events.clear();
    }

    /// Actions so far as a JSON array of labels.
    pub fn actions(&self) -> Result<String, JsError> {
        let actions = tokenize_events(&self.events, |_| None).map_err(js_err)?;
        let labels: Vec<String> = actions.iter().map(|a| a.kind.to_string()).collect();
        serde_json::to_string(&labels).map_err(js_err)
    }

    fn push(&mut self, t_ms: f64, kind: EventKind) -> Result<String, JsError> {
        let t = self.events.last().map_or(t_ms as i64, |e| e.timestamp_ms.max(t_ms as i64));
        self.events.push(InputEvent::new(t, kind));
        self.actions()
    }
}
