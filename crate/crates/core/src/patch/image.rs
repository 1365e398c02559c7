use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Rect;

pub const DEFAULT_DPI: u32 = 96;

/// Row-major 8-bit RGB image. Screenshots and widget patches share this type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImagePatch {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
    dpi: u32,
}

impl ImagePatch {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>, dpi: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!("empty image {width}x{height}")));
        }
        if pixels.len() != width * height * 3 {
            return Err(Error::Dimension(format!(
                "{} bytes for a {width}x{height} RGB image",
                pixels.len()
            )));
        }
        if dpi == 0 {
            return Err(Error::Dimension("dpi must be positive".into()));
        }
        Ok(Self { width, height, pixels, dpi })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let pixels = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self::new(width, height, pixels, DEFAULT_DPI).expect("filled image is well formed")
    }

    /// Drops the alpha channel of RGBA data.
    pub fn from_rgba(width: usize, height: usize, rgba: &[u8], dpi: u32) -> Result<Self> {
        if rgba.len() != width * height * 4 {
            return Err(Error::Dimension("RGBA buffer size mismatch".into()));
        }
        let pixels = rgba.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect();
        Self::new(width, height, pixels, dpi)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dpi(&self) -> u32 {
        self.dpi
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn with_dpi(mut self, dpi: u32) -> Self {
        assert!(dpi > 0);
        self.dpi = dpi;
        self
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn fill_rect(&mut self, rect: Rect, rgb: [u8; 3]) {
        let Some(r) = self.clip(rect) else { return };
        for y in r.y as usize..(r.y + r.h) as usize {
            for x in r.x as usize..(r.x + r.w) as usize {
                self.set_pixel(x, y, rgb);
            }
        }
    }

    /// Intersection of `rect` with the image bounds.
    pub fn clip(&self, rect: Rect) -> Option<Rect> {
        let x0 = rect.x.max(0);
        let y0 = rect.y.max(0);
        let x1 = (rect.x + rect.w).min(self.width as i32);
        let y1 = (rect.y + rect.h).min(self.height as i32);
        (x1 > x0 && y1 > y0).then(|| Rect::new(x0, y0, x1 - x0, y1 - y0))
    }

    /// Copies the part of `rect` that lies inside the image.
    pub fn crop(&self, rect: Rect) -> Option<ImagePatch> {
        let r = self.clip(rect)?;
        let (x0, w) = (r.x as usize, r.w as usize);
        let mut pixels = Vec::with_capacity(w * r.h as usize * 3);
        for y in r.y as usize..(r.y + r.h) as usize {
            let start = (y * self.width + x0) * 3;
            pixels.extend_from_slice(&self.pixels[start..start + w * 3]);
        }
        Some(ImagePatch { width: w, height: r.h as usize, pixels, dpi: self.dpi })
    }

    /// Copies `src` with its top-left corner at (`x`, `y`), clipping at the borders.
    pub fn blit(&mut self, src: &ImagePatch, x: i32, y: i32) {
        for sy in 0..src.height {
            for sx in 0..src.width {
                let (tx, ty) = (x + sx as i32, y + sy as i32);
                if tx >= 0 && ty >= 0 && (tx as usize) < self.width && (ty as usize) < self.height {
                    self.set_pixel(tx as usize, ty as usize, src.pixel(sx, sy));
                }
            }
        }
    }

    /// Extends the image by `margin` pixels on every side, replicating edge pixels.
    pub fn pad_replicate(&self, margin: usize) -> ImagePatch {
        if margin == 0 {
            return self.clone();
        }
        let (w, h) = (self.width + 2 * margin, self.height + 2 * margin);
        let mut pixels = Vec::with_capacity(w * h * 3);
        for y in 0..h {
            let sy = y.saturating_sub(margin).min(self.height - 1);
            for x in 0..w {
                let sx = x.saturating_sub(margin).min(self.width - 1);
                pixels.extend_from_slice(&self.pixel(sx, sy));
            }
        }
        ImagePatch { width: w, height: h, pixels, dpi: self.dpi }
    }

    pub fn features(&self) -> PatchFeatures {
        let mut sums = [0u64; 3];
        for px in self.pixels.chunks_exact(3) {
            for c in 0..3 {
                sums[c] += u64::from(px[c]);
            }
        }
        let n = (self.width * self.height) as f64;
        PatchFeatures {
            width: self.width as u32,
            height: self.height as u32,
            mean_rgb: sums.map(|s| s as f64 / n),
        }
    }

    pub fn write_ppm<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "P6\n{} {}\n255\n", self.width, self.height)?;
        out.write_all(&self.pixels)
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(self.pixels.len() + 20);
        self.write_ppm(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// Reads a binary PPM (P6, maxval 255). PPM carries no DPI, so the result is 96.
    pub fn read_ppm<R: Read>(mut input: R) -> Result<Self> {
        let mut data = Vec::new();
        input.read_to_end(&mut data)?;
        Self::from_ppm(&data)
    }

    pub fn from_ppm(data: &[u8]) -> Result<Self> {
        let bad = |reason: &str| Error::MalformedInput { line: 0, reason: format!("ppm: {reason}") };
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < data.len() && (data[pos].is_ascii_whitespace() || data[pos] == b'#') {
                if data[pos] == b'#' {
                    while pos < data.len() && data[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < data.len() && !data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&data[start..pos]).map_err(|_| bad("header not ascii"))?);
        }
        if fields[0] != "P6" {
            return Err(bad("not a P6 file"));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
        let (w, h, maxval) = (parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
        if maxval != 255 {
            return Err(bad("only maxval 255 is supported"));
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let body = data.get(pos..pos + w * h * 3).ok_or_else(|| bad("truncated raster"))?;
        Self::new(w, h, body.to_vec(), DEFAULT_DPI)
    }
}

/// Cheap descriptors compared before running a full correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchFeatures {
    pub width: u32,
    pub height: u32,
    pub mean_rgb: [f64; 3],
}

/// Tolerances for [`prefilter_compatible`]. `color_tol` is in 8-bit channel units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrefilterTolerance {
    pub size_px: u32,
    pub color: f64,
}

impl Default for PrefilterTolerance {
    fn default() -> Self {
        Self { size_px: 6, color: 12.0 }
    }
}

pub fn prefilter_compatible(a: &PatchFeatures, b: &PatchFeatures, tol: PrefilterTolerance) -> bool {
    a.width.abs_diff(b.width) <= tol.size_px
        && a.height.abs_diff(b.height) <= tol.size_px
        && a.mean_rgb
            .iter()
            .zip(&b.mean_rgb)
            .all(|(x, y)| (x - y).abs() <= tol.color)
}

/// Rescales to 96 DPI with bilinear interpolation (pixel-center aligned).
pub fn normalize_dpi(patch: &ImagePatch, source_dpi: u32) -> ImagePatch {
    assert!(source_dpi > 0, "source dpi must be positive");
    if source_dpi == DEFAULT_DPI {
        return patch.clone().with_dpi(DEFAULT_DPI);
    }
    let scale = f64::from(DEFAULT_DPI) / f64::from(source_dpi);
    let out_w = ((patch.width as f64 * scale).round() as usize).max(1);
    let out_h = ((patch.height as f64 * scale).round() as usize).max(1);
    resize_bilinear(patch, out_w, out_h).with_dpi(DEFAULT_DPI)
}

pub fn resize_bilinear(src: &ImagePatch, out_w: usize, out_h: usize) -> ImagePatch {
    let sx = src.width as f64 / out_w as f64;
    let sy = src.height as f64 / out_h as f64;
    let sample_axis = |o: usize, scale: f64, len: usize| {
        let pos = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
        let i0 = pos.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, pos - i0 as f64)
    };
    let mut pixels = Vec::with_capacity(out_w * out_h * 3);
    for oy in 0..out_h {
        let (y0, y1, fy) = sample_axis(oy, sy, src.height);
        for ox in 0..out_w {
            let (x0, x1, fx) = sample_axis(ox, sx, src.width);
            let (p00, p10, p01, p11) =
                (src.pixel(x0, y0), src.pixel(x1, y0), src.pixel(x0, y1), src.pixel(x1, y1));
            for c in 0..3 {
                let top = f64::from(p00[c]) * (1.0 - fx) + f64::from(p10[c]) * fx;
                let bottom = f64::from(p01[c]) * (1.0 - fx) + f64::from(p11[c]) * fx;
                pixels.push((top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    ImagePatch { width: out_w, height: out_h, pixels, dpi: src.dpi }
}
