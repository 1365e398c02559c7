//! Normalized cross-correlation of RGB images.
//!
//! Each cell is the Pearson correlation between the template and the image
//! window at that offset, computed per channel and averaged over the channels
//! where at least one side varies. A channel that is flat on only one side
//! contributes 0; a cell where every channel is flat on both sides is 0.
//!
//! All sums are exact integers (8-bit inputs), so the only rounding happens in
//! the final normalization.

use crate::error::{Error, Result};
use crate::geom::Rect;
use crate::patch::ImagePatch;

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl CorrelationMap {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Highest cell, ties broken by scan order. `(x, y, score)`.
    pub fn max(&self) -> (usize, usize, f64) {
        let (idx, &best) = self
            .values
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        (idx % self.width, idx / self.width, best)
    }
}

/// Channel-planar copy of an image, widened for integer dot products.
struct Planes {
    width: usize,
    height: usize,
    data: [Vec<u16>; 3],
}

impl Planes {
    fn new(img: &ImagePatch) -> Self {
        let mut data = [Vec::new(), Vec::new(), Vec::new()];
        for plane in &mut data {
            plane.reserve(img.width() * img.height());
        }
        for px in img.pixels().chunks_exact(3) {
            for c in 0..3 {
                data[c].push(u16::from(px[c]));
            }
        }
        Self { width: img.width(), height: img.height(), data }
    }
}

/// Summed-area tables of values and squared values, one per channel.
struct Integral {
    stride: usize,
    sum: [Vec<i64>; 3],
    sq: [Vec<i64>; 3],
}

impl Integral {
    fn new(p: &Planes) -> Self {
        let stride = p.width + 1;
        let size = stride * (p.height + 1);
        let mut sum = [vec![0i64; size], vec![0i64; size], vec![0i64; size]];
        let mut sq = [vec![0i64; size], vec![0i64; size], vec![0i64; size]];
        for c in 0..3 {
            for y in 0..p.height {
                let mut row_sum = 0i64;
                let mut row_sq = 0i64;
                for x in 0..p.width {
                    let v = i64::from(p.data[c][y * p.width + x]);
                    row_sum += v;
                    row_sq += v * v;
                    let i = (y + 1) * stride + x + 1;
                    sum[c][i] = sum[c][i - stride] + row_sum;
                    sq[c][i] = sq[c][i - stride] + row_sq;
                }
            }
        }
        Self { stride, sum, sq }
    }

    fn window(&self, c: usize, x: usize, y: usize, w: usize, h: usize) -> (i64, i64) {
        let s = self.stride;
        let at = |t: &Vec<i64>| t[(y + h) * s + x + w] - t[y * s + x + w] - t[(y + h) * s + x] + t[y * s + x];
        (at(&self.sum[c]), at(&self.sq[c]))
    }
}

fn row_dot(a: &[u16], b: &[u16]) -> u64 {
    u64::from(a.iter().zip(b).map(|(&x, &y)| u32::from(x) * u32::from(y)).sum::<u32>())
}

/// Correlation from exact integer moments over `n` samples.
#[inline]
fn pearson(n: i64, st: i64, stt: i64, sw: i64, sww: i64, stw: i64) -> Option<f64> {
    let var_t = n * stt - st * st;
    let var_w = n * sww - sw * sw;
    if var_t == 0 && var_w == 0 {
        return None;
    }
    if var_t == 0 || var_w == 0 {
        return Some(0.0);
    }
    let cov = (n * stw - st * sw) as f64;
    Some(cov / ((var_t as f64).sqrt() * (var_w as f64).sqrt()))
}

/// Correlation map of `template` slid over every position of `image`.
pub fn ncc(template: &ImagePatch, image: &ImagePatch) -> Result<CorrelationMap> {
    if template.width() > image.width() || template.height() > image.height() {
        return Err(Error::Dimension(format!(
            "template {}x{} does not fit in image {}x{}",
            template.width(),
            template.height(),
            image.width(),
            image.height()
        )));
    }
    let tp = Planes::new(template);
    let ip = Planes::new(image);
    let integral = Integral::new(&ip);
    let (tw, th) = (tp.width, tp.height);
    let n = (tw * th) as i64;

    let t_stats: [(i64, i64); 3] = std::array::from_fn(|c| {
        tp.data[c].iter().fold((0i64, 0i64), |(s, q), &v| {
            let v = i64::from(v);
            (s + v, q + v * v)
        })
    });

    let out_w = ip.width - tw + 1;
    let out_h = ip.height - th + 1;
    let mut values = Vec::with_capacity(out_w * out_h);
    for oy in 0..out_h {
        for ox in 0..out_w {
            let mut total = 0.0;
            let mut used = 0u32;
            for c in 0..3 {
                let (sw, sww) = integral.window(c, ox, oy, tw, th);
                let (st, stt) = t_stats[c];
                if n * stt == st * st && n * sww == sw * sw {
                    continue;
                }
                let mut stw = 0u64;
                for ty in 0..th {
                    let trow = &tp.data[c][ty * tw..(ty + 1) * tw];
                    let start = (oy + ty) * ip.width + ox;
                    stw += row_dot(trow, &ip.data[c][start..start + tw]);
                }
                if let Some(r) = pearson(n, st, stt, sw, sww, stw as i64) {
                    total += r;
                    used += 1;
                }
            }
            let v = if used == 0 { 0.0 } else { total / f64::from(used) };
            values.push(v.clamp(-1.0, 1.0));
        }
    }
    Ok(CorrelationMap { width: out_w, height: out_h, values })
}

/// A located occurrence: the top-left corner of the match and its score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    pub x: i32,
    pub y: i32,
    pub score: f64,
}

/// Finds every placement of `patch` in `screenshot` whose correlation is a
/// local maximum at or above `threshold`. Overlapping hits are suppressed
/// greedily so that no two returned rectangles share more than half their
/// area. Sorted by descending score.
pub fn locate_on_screen(patch: &ImagePatch, screenshot: &ImagePatch, threshold: f64) -> Result<Vec<Location>> {
    let map = ncc(patch, screenshot)?;
    let (w, h) = (map.width, map.height);
    let mut peaks = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = map.get(x, y);
            if v < threshold {
                continue;
            }
            let is_peak = (y.saturating_sub(1)..(y + 2).min(h)).all(|ny| {
                (x.saturating_sub(1)..(x + 2).min(w)).all(|nx| map.get(nx, ny) <= v)
            });
            if is_peak {
                peaks.push(Location { x: x as i32, y: y as i32, score: v });
            }
        }
    }
    peaks.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.y.cmp(&b.y)).then(a.x.cmp(&b.x)));

    let (pw, ph) = (patch.width() as i32, patch.height() as i32);
    let area = i64::from(pw) * i64::from(ph);
    let mut kept: Vec<Location> = Vec::new();
    for p in peaks {
        let rect = Rect::new(p.x, p.y, pw, ph);
        let overlaps = kept
            .iter()
            .any(|k| 2 * rect.intersection_area(&Rect::new(k.x, k.y, pw, ph)) > area);
        if !overlaps {
            kept.push(p);
        }
    }
    Ok(kept)
}
