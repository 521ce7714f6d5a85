//! Grayscale glyph rasters and the raster operations everything else builds on.
//!
//! Pixels are 8-bit grayscale with ink dark: 0 is full ink, 255 is background.
//! A pixel counts as ink when its value is strictly below the binarization
//! threshold (default [`DEFAULT_INK_THRESHOLD`]). Boxes are half-open pixel
//! rectangles, so `BBox { x1: 0, y1: 0, x2: w, y2: h }` covers a whole `w x h`
//! image.

use std::io::Cursor;
use std::path::Path;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::dictionary::{RadicalId, StructureKind};

/// Pixel values strictly below this count as ink.
pub const DEFAULT_INK_THRESHOLD: u8 = 128;

/// Background (paper) pixel value.
pub const BACKGROUND: u8 = 255;

#[derive(Debug, Error)]
pub enum GlyphError {
    #[error("glyph dimensions {width}x{height} are invalid: {reason}")]
    Dimensions { width: u32, height: u32, reason: &'static str },
    #[error("box [{x1},{y1},{x2},{y2}] is empty or inverted")]
    InvalidBox { x1: u32, y1: u32, x2: u32, y2: u32 },
    #[error("box [{x1},{y1},{x2},{y2}] exceeds glyph bounds {width}x{height}")]
    OutOfBounds { x1: u32, y1: u32, x2: u32, y2: u32, width: u32, height: u32 },
    #[error("paste of {gw}x{gh} at ({x},{y}) exceeds target bounds {width}x{height}")]
    PasteOutOfBounds { gw: u32, gh: u32, x: u32, y: u32, width: u32, height: u32 },
    #[error("glyph has no ink at threshold {threshold}")]
    EmptyGlyph { threshold: u8 },
    #[error("scale factor {0} is not a positive finite number")]
    InvalidScale(f64),
    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Half-open pixel rectangle: x in [x1, x2), y in [y1, y2), with x1 < x2 and
/// y1 < y2. Serialized as the 4-element array `[x1, y1, x2, y2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BBox {
    pub x1: u32,
    pub y1: u32,
    pub x2: u32,
    pub y2: u32,
}

impl BBox {
    pub fn new(x1: u32, y1: u32, x2: u32, y2: u32) -> Result<Self, GlyphError> {
        if x1 >= x2 || y1 >= y2 {
            return Err(GlyphError::InvalidBox { x1, y1, x2, y2 });
        }
        Ok(BBox { x1, y1, x2, y2 })
    }

    pub fn width(&self) -> u32 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> u32 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> u64 {
        u64::from(self.width()) * u64::from(self.height())
    }

    /// Center in continuous pixel coordinates.
    pub fn center(&self) -> (f64, f64) {
        (
            (f64::from(self.x1) + f64::from(self.x2)) / 2.0,
            (f64::from(self.y1) + f64::from(self.y2)) / 2.0,
        )
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let x1 = self.x1.max(other.x1);
        let y1 = self.y1.max(other.y1);
        let x2 = self.x2.min(other.x2);
        let y2 = self.y2.min(other.y2);
        if x1 < x2 && y1 < y2 {
            Some(BBox { x1, y1, x2, y2 })
        } else {
            None
        }
    }

    /// Intersection over union. 0.0 for disjoint boxes, 1.0 for identical ones.
    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = match self.intersection(other) {
            Some(b) => b.area(),
            None => return 0.0,
        };
        let union = self.area() + other.area() - inter;
        inter as f64 / union as f64
    }

    pub fn translate(&self, dx: u32, dy: u32) -> BBox {
        BBox {
            x1: self.x1 + dx,
            y1: self.y1 + dy,
            x2: self.x2 + dx,
            y2: self.y2 + dy,
        }
    }

    fn check_within(&self, width: u32, height: u32) -> Result<(), GlyphError> {
        if self.x2 > width || self.y2 > height {
            return Err(GlyphError::OutOfBounds {
                x1: self.x1,
                y1: self.y1,
                x2: self.x2,
                y2: self.y2,
                width,
                height,
            });
        }
        Ok(())
    }
}

impl Serialize for BBox {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.x1, self.y1, self.x2, self.y2].serialize(s)
    }
}

impl<'de> Deserialize<'de> for BBox {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [x1, y1, x2, y2] = <[u32; 4]>::deserialize(d)?;
        BBox::new(x1, y1, x2, y2).map_err(D::Error::custom)
    }
}

/// An 8-bit grayscale raster, row-major, ink dark on light background.
#[derive(Clone, PartialEq, Eq)]
pub struct Glyph {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for Glyph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Glyph")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl Glyph {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, GlyphError> {
        if width == 0 || height == 0 {
            return Err(GlyphError::Dimensions { width, height, reason: "zero-sized" });
        }
        let expected = width as usize * height as usize;
        if pixels.len() != expected {
            return Err(GlyphError::Dimensions {
                width,
                height,
                reason: "pixel buffer length does not match",
            });
        }
        Ok(Glyph { width, height, pixels })
    }

    /// All-background glyph.
    pub fn blank(width: u32, height: u32) -> Result<Self, GlyphError> {
        Glyph::new(width, height, vec![BACKGROUND; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        debug_assert!(x < self.width && y < self.height);
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: u8) {
        debug_assert!(x < self.width && y < self.height);
        self.pixels[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn is_blank(&self, threshold: u8) -> bool {
        self.pixels.iter().all(|&v| v >= threshold)
    }

    /// Tight box around all ink pixels (value < threshold).
    pub fn ink_bounding_box(&self, threshold: u8) -> Result<BBox, GlyphError> {
        let mut x1 = u32::MAX;
        let mut y1 = u32::MAX;
        let mut x2 = 0u32;
        let mut y2 = 0u32;
        for y in 0..self.height {
            let row = &self.pixels[y as usize * self.width as usize..][..self.width as usize];
            for (x, &v) in row.iter().enumerate() {
                if v < threshold {
                    let x = x as u32;
                    x1 = x1.min(x);
                    y1 = y1.min(y);
                    x2 = x2.max(x + 1);
                    y2 = y2.max(y + 1);
                }
            }
        }
        if x1 == u32::MAX {
            return Err(GlyphError::EmptyGlyph { threshold });
        }
        Ok(BBox { x1, y1, x2, y2 })
    }

    pub fn crop(&self, b: &BBox) -> Result<Glyph, GlyphError> {
        b.check_within(self.width, self.height)?;
        let mut pixels = Vec::with_capacity(b.area() as usize);
        for y in b.y1..b.y2 {
            let start = y as usize * self.width as usize + b.x1 as usize;
            pixels.extend_from_slice(&self.pixels[start..start + b.width() as usize]);
        }
        Glyph::new(b.width(), b.height(), pixels)
    }

    /// Blend `other` onto a copy of `self` at offset (x, y), darker pixel wins.
    /// Ink composes over ink instead of erasing it.
    pub fn paste(&self, other: &Glyph, x: u32, y: u32) -> Result<Glyph, GlyphError> {
        if x.checked_add(other.width).map_or(true, |r| r > self.width)
            || y.checked_add(other.height).map_or(true, |r| r > self.height)
        {
            return Err(GlyphError::PasteOutOfBounds {
                gw: other.width,
                gh: other.height,
                x,
                y,
                width: self.width,
                height: self.height,
            });
        }
        let mut out = self.clone();
        for sy in 0..other.height {
            for sx in 0..other.width {
                let v = other.get(sx, sy);
                let tx = x + sx;
                let ty = y + sy;
                if v < out.get(tx, ty) {
                    out.set(tx, ty, v);
                }
            }
        }
        Ok(out)
    }

    /// Nearest-neighbor resize to exact dimensions. Resizing to the current
    /// dimensions is pixel-identical.
    pub fn scale_to(&self, width: u32, height: u32) -> Result<Glyph, GlyphError> {
        if width == 0 || height == 0 {
            return Err(GlyphError::Dimensions { width, height, reason: "zero-sized" });
        }
        let mut pixels = Vec::with_capacity(width as usize * height as usize);
        let sx = f64::from(self.width) / f64::from(width);
        let sy = f64::from(self.height) / f64::from(height);
        for y in 0..height {
            let src_y = (((f64::from(y) + 0.5) * sy - 0.5).round().max(0.0) as u32)
                .min(self.height - 1);
            for x in 0..width {
                let src_x = (((f64::from(x) + 0.5) * sx - 0.5).round().max(0.0) as u32)
                    .min(self.width - 1);
                pixels.push(self.get(src_x, src_y));
            }
        }
        Glyph::new(width, height, pixels)
    }

    /// Uniform rescale by `factor` (dimensions rounded, at least 1 pixel).
    /// A factor of exactly 1.0 is the identity.
    pub fn scale(&self, factor: f64) -> Result<Glyph, GlyphError> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(GlyphError::InvalidScale(factor));
        }
        let w = ((f64::from(self.width) * factor).round() as u32).max(1);
        let h = ((f64::from(self.height) * factor).round() as u32).max(1);
        self.scale_to(w, h)
    }

    /// Rotate by `degrees` about the raster center (nearest-neighbor inverse
    /// mapping, background fill, dimensions unchanged). 0 degrees is the
    /// identity. Positive angles turn the content clockwise on screen.
    pub fn rotate(&self, degrees: f64) -> Glyph {
        if degrees == 0.0 {
            return self.clone();
        }
        let theta = degrees.to_radians();
        let (sin, cos) = theta.sin_cos();
        let cx = f64::from(self.width - 1) / 2.0;
        let cy = f64::from(self.height - 1) / 2.0;
        let mut pixels = vec![BACKGROUND; self.pixels.len()];
        for y in 0..self.height {
            for x in 0..self.width {
                let dx = f64::from(x) - cx;
                let dy = f64::from(y) - cy;
                let src_x = (cx + dx * cos + dy * sin).round();
                let src_y = (cy - dx * sin + dy * cos).round();
                if src_x >= 0.0
                    && src_y >= 0.0
                    && (src_x as u32) < self.width
                    && (src_y as u32) < self.height
                {
                    pixels[y as usize * self.width as usize + x as usize] =
                        self.get(src_x as u32, src_y as u32);
                }
            }
        }
        Glyph { width: self.width, height: self.height, pixels }
    }

    /// Horizontal shear about the raster center (background fill, dimensions
    /// unchanged). 0.0 is the identity.
    pub fn shear(&self, factor: f64) -> Glyph {
        if factor == 0.0 {
            return self.clone();
        }
        let cy = f64::from(self.height - 1) / 2.0;
        let mut pixels = vec![BACKGROUND; self.pixels.len()];
        for y in 0..self.height {
            let shift = factor * (f64::from(y) - cy);
            for x in 0..self.width {
                let src_x = (f64::from(x) + shift).round();
                if src_x >= 0.0 && (src_x as u32) < self.width {
                    pixels[y as usize * self.width as usize + x as usize] =
                        self.get(src_x as u32, y);
                }
            }
        }
        Glyph { width: self.width, height: self.height, pixels }
    }

    /// Add a uniform background margin of `margin` pixels on every side.
    pub fn pad(&self, margin: u32) -> Glyph {
        if margin == 0 {
            return self.clone();
        }
        let out = Glyph::blank(self.width + 2 * margin, self.height + 2 * margin)
            .expect("padded dimensions are nonzero");
        out.paste(self, margin, margin).expect("padded glyph always fits")
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>, GlyphError> {
        let img = image::GrayImage::from_raw(self.width, self.height, self.pixels.clone())
            .expect("buffer length matches dimensions");
        let mut buf = Vec::new();
        img.write_to(&mut Cursor::new(&mut buf), image::ImageFormat::Png)?;
        Ok(buf)
    }

    pub fn from_png_bytes(bytes: &[u8]) -> Result<Glyph, GlyphError> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?
            .into_luma8();
        Glyph::new(img.width(), img.height(), img.into_raw())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), GlyphError> {
        std::fs::write(path, self.to_png_bytes()?)?;
        Ok(())
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Glyph, GlyphError> {
        Glyph::from_png_bytes(&std::fs::read(path)?)
    }
}

/// A composite image together with its full label: character, structure, and
/// per-slot radical labels and boxes in slot order.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedImage {
    pub glyph: Glyph,
    pub character_label: String,
    pub structure_label: StructureKind,
    pub radical_labels: Vec<RadicalId>,
    pub radical_boxes: Vec<BBox>,
}

#[derive(Debug, Error)]
pub enum AnnotatedImageError {
    #[error("{labels} radical labels but {boxes} boxes")]
    SlotMismatch { labels: usize, boxes: usize },
    #[error("structure {structure} expects {expected} radicals, found {actual}")]
    SingleArity { structure: String, expected: usize, actual: usize },
    #[error("radical box {index} exceeds image bounds")]
    BoxOutOfBounds { index: usize },
}

impl AnnotatedImage {
    pub fn validate(&self) -> Result<(), AnnotatedImageError> {
        if self.radical_labels.len() != self.radical_boxes.len() {
            return Err(AnnotatedImageError::SlotMismatch {
                labels: self.radical_labels.len(),
                boxes: self.radical_boxes.len(),
            });
        }
        let single = self.structure_label.is_single();
        if single != (self.radical_labels.len() == 1) {
            return Err(AnnotatedImageError::SingleArity {
                structure: self.structure_label.to_string(),
                expected: if single { 1 } else { 2 },
                actual: self.radical_labels.len(),
            });
        }
        for (i, b) in self.radical_boxes.iter().enumerate() {
            if b.check_within(self.glyph.width(), self.glyph.height()).is_err() {
                return Err(AnnotatedImageError::BoxOutOfBounds { index: i });
            }
        }
        Ok(())
    }

    /// Label-only view for the JSON sidecar next to a saved PNG.
    pub fn to_sidecar(&self, image_name: impl Into<String>) -> AnnotationSidecar {
        AnnotationSidecar {
            image: image_name.into(),
            character_label: self.character_label.clone(),
            structure_label: self.structure_label.clone(),
            radicals: self
                .radical_labels
                .iter()
                .zip(&self.radical_boxes)
                .map(|(label, bbox)| RadicalBox { label: label.clone(), bbox: *bbox })
                .collect(),
        }
    }
}

/// One labeled radical box inside an image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadicalBox {
    pub label: RadicalId,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

/// JSON sidecar stored next to each generated PNG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSidecar {
    pub image: String,
    pub character_label: String,
    pub structure_label: StructureKind,
    pub radicals: Vec<RadicalBox>,
}

impl AnnotationSidecar {
    pub fn radical_labels(&self) -> Vec<RadicalId> {
        self.radicals.iter().map(|r| r.label.clone()).collect()
    }

    pub fn radical_boxes(&self) -> Vec<BBox> {
        self.radicals.iter().map(|r| r.bbox).collect()
    }
}
