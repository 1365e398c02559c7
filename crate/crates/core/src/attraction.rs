//! Cursor attraction toward predicted buttons.
//!
//! Each target pulls with `gain * confidence / (d^2 + softening^2)` along the
//! unit vector toward its center. The summed displacement is clamped to
//! `max_pull_px`, and with `dead_zone` set the cursor is left alone while it
//! is inside any target's rectangle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Rect;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }

    pub fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }

    pub fn scale(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttractionTarget {
    pub center: Vec2,
    pub rect: Rect,
    pub confidence: f64,
}

impl AttractionTarget {
    /// Target centered on `rect`.
    pub fn from_rect(rect: Rect, confidence: f64) -> Self {
        let (x, y) = rect.center();
        Self { center: Vec2::new(x, y), rect, confidence }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.confidence >= 0.0 && self.confidence.is_finite()) {
            return Err(Error::InvalidArgument(format!("confidence {} must be finite and >= 0", self.confidence)));
        }
        if !self.rect.is_valid() {
            return Err(Error::InvalidArgument(format!("degenerate target rect {:?}", self.rect)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    /// px^3
    pub gain: f64,
    pub softening_px: f64,
    pub max_pull_px: f64,
    pub dead_zone: bool,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self { gain: 40.0, softening_px: 20.0, max_pull_px: 8.0, dead_zone: true }
    }
}

impl FieldConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("gain", self.gain), ("softening_px", self.softening_px), ("max_pull_px", self.max_pull_px)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

fn in_dead_zone(pos: Vec2, targets: &[AttractionTarget], cfg: &FieldConfig) -> bool {
    cfg.dead_zone && targets.iter().any(|t| t.rect.contains_f(pos.x, pos.y))
}

/// Pull before clamping.
pub fn raw_pull_at(pos: Vec2, targets: &[AttractionTarget], cfg: &FieldConfig) -> Vec2 {
    let s2 = cfg.softening_px * cfg.softening_px;
    targets.iter().fold(Vec2::ZERO, |acc, t| {
        let to = t.center.sub(pos);
        let d = to.norm();
        if d == 0.0 {
            return acc;
        }
        let mag = cfg.gain * t.confidence / (d * d + s2);
        acc.add(to.scale(mag / d))
    })
}

/// Cursor displacement at `pos`.
pub fn pull_at(pos: Vec2, targets: &[AttractionTarget], cfg: &FieldConfig) -> Vec2 {
    if in_dead_zone(pos, targets, cfg) {
        return Vec2::ZERO;
    }
    let v = raw_pull_at(pos, targets, cfg);
    let n = v.norm();
    if n > cfg.max_pull_px {
        v.scale(cfg.max_pull_px / n)
    } else {
        v
    }
}

/// Moves the cursor to `raw_to` plus the pull there, kept inside `screen`.
/// `raw_from` is accepted for callers that track motion; the law ignores it.
pub fn apply_motion(_raw_from: Vec2, raw_to: Vec2, targets: &[AttractionTarget], cfg: &FieldConfig, screen: Rect) -> Vec2 {
    let p = raw_to.add(pull_at(raw_to, targets, cfg));
    let (x0, y0) = (f64::from(screen.x), f64::from(screen.y));
    Vec2::new(
        p.x.clamp(x0, x0 + f64::from(screen.w)),
        p.y.clamp(y0, y0 + f64::from(screen.h)),
    )
}

/// Lipschitz constant of [`pull_at`] between points outside every dead zone
/// that are at most 1 px apart. Only defined with `dead_zone` on and every
/// center inside its rectangle more than half a pixel from the edge.
///
/// A target at distance `d` contributes a Jacobian of norm
/// `gain * c / (d (d^2 + s^2))`; such a segment stays at least `r - 0.5` from
/// the center, where `r` is the center's distance to the rectangle edge. The
/// clamp is a projection onto a ball and does not increase the constant.
pub fn lipschitz_bound(targets: &[AttractionTarget], cfg: &FieldConfig) -> Option<f64> {
    if !cfg.dead_zone {
        return None;
    }
    let s2 = cfg.softening_px * cfg.softening_px;
    targets.iter().try_fold(0.0, |acc, t| {
        let r = t.rect;
        let inner = [
            t.center.x - f64::from(r.x),
            f64::from(r.x + r.w) - t.center.x,
            t.center.y - f64::from(r.y),
            f64::from(r.y + r.h) - t.center.y,
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min);
        let rho = inner - 0.5;
        (rho > 0.0).then(|| acc + cfg.gain * t.confidence / (rho * (rho * rho + s2)))
    })
}

/// Samples the field on a grid starting at `origin` with `cols` x `rows`
/// points spaced `step_px`; row-major.
pub fn sample_grid(
    origin: Vec2,
    cols: usize,
    rows: usize,
    step_px: f64,
    targets: &[AttractionTarget],
    cfg: &FieldConfig,
) -> Vec<(Vec2, Vec2)> {
    let mut out = Vec::with_capacity(cols * rows);
    for j in 0..rows {
        for i in 0..cols {
            let p = Vec2::new(origin.x + i as f64 * step_px, origin.y + j as f64 * step_px);
            out.push((p, pull_at(p, targets, cfg)));
        }
    }
    out
}

/// Grid as CSV (`x,y,dx,dy`).
pub fn grid_csv(samples: &[(Vec2, Vec2)]) -> String {
    let mut out = String::from("x,y,dx,dy\n");
    for (p, v) in samples {
        out.push_str(&format!("{},{},{:.9},{:.9}\n", p.x, p.y, v.x, v.y));
    }
    out
}
