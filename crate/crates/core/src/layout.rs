//! Slot geometry for structure kinds.
//!
//! A [`StructureLayout`] places each decomposition slot as a normalized
//! rectangle on the unit square. Slot order in the layout is the decomposition
//! slot order from the dictionary; the standard set lists slots in reading
//! order (top to bottom, then left to right), with the enclosing slot first
//! for surrounding kinds.
//!
//! Layout files are JSON:
//!
//! ```json
//! {
//!   "canvas": [256, 256],
//!   "layouts": [
//!     {"kind": "UD", "slots": [[0.0, 0.0, 1.0, 0.5], [0.0, 0.5, 1.0, 1.0]]}
//!   ]
//! }
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::dictionary::StructureKind;
use crate::glyph::BBox;

#[derive(Debug, Error)]
pub enum LayoutError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("canvas dimensions must be positive")]
    EmptyCanvas,
    #[error("layout file declares no layouts")]
    NoLayouts,
    #[error("structure {0} declared twice")]
    DuplicateKind(StructureKind),
    #[error("structure {kind}: {reason}")]
    BadLayout { kind: StructureKind, reason: String },
    #[error("unknown structure {0}")]
    UnknownStructure(StructureKind),
}

/// Normalized rectangle on the unit square: 0 <= x1 < x2 <= 1, same for y.
/// Serialized as `[x1, y1, x2, y2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotRect {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl SlotRect {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, String> {
        let all_finite = [x1, y1, x2, y2].iter().all(|v| v.is_finite());
        if !all_finite || x1 < 0.0 || y1 < 0.0 || x2 > 1.0 || y2 > 1.0 || x1 >= x2 || y1 >= y2 {
            return Err(format!("bad slot rect [{x1},{y1},{x2},{y2}]"));
        }
        Ok(SlotRect { x1, y1, x2, y2 })
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn contains(&self, other: &SlotRect) -> bool {
        self.x1 <= other.x1 && self.y1 <= other.y1 && self.x2 >= other.x2 && self.y2 >= other.y2
    }

    /// Area of overlap between interiors.
    pub fn overlap_area(&self, other: &SlotRect) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w > 0.0 && h > 0.0 {
            w * h
        } else {
            0.0
        }
    }

    /// Project onto a pixel canvas. Edges round to the nearest pixel; the
    /// result is clamped to the canvas and never empty.
    pub fn to_pixels(&self, width: u32, height: u32) -> BBox {
        let px = |v: f64, extent: u32| ((v * f64::from(extent)).round() as u32).min(extent);
        let mut x1 = px(self.x1, width);
        let mut x2 = px(self.x2, width);
        let mut y1 = px(self.y1, height);
        let mut y2 = px(self.y2, height);
        if x2 <= x1 {
            if x1 >= width {
                x1 = width - 1;
            }
            x2 = x1 + 1;
        }
        if y2 <= y1 {
            if y1 >= height {
                y1 = height - 1;
            }
            y2 = y1 + 1;
        }
        BBox { x1, y1, x2, y2 }
    }
}

impl Serialize for SlotRect {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.x1, self.y1, self.x2, self.y2].serialize(s)
    }
}

impl<'de> Deserialize<'de> for SlotRect {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [x1, y1, x2, y2] = <[f64; 4]>::deserialize(d)?;
        SlotRect::new(x1, y1, x2, y2).map_err(D::Error::custom)
    }
}

/// Slot geometry for one structure kind. `surround` marks kinds whose first
/// slot encloses the others, which exempts them from the disjointness check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureLayout {
    pub kind: StructureKind,
    pub slots: Vec<SlotRect>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub surround: bool,
}

impl StructureLayout {
    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    fn validate(&self) -> Result<(), LayoutError> {
        let bad = |reason: String| LayoutError::BadLayout { kind: self.kind.clone(), reason };
        let single_ok = self.kind.is_single() == (self.slots.len() == 1);
        if self.slots.is_empty() || !single_ok {
            return Err(bad(format!(
                "{} slots; Single needs exactly 1, other kinds at least 2",
                self.slots.len()
            )));
        }
        if self.surround {
            let outer = &self.slots[0];
            for (i, s) in self.slots.iter().enumerate().skip(1) {
                if !outer.contains(s) {
                    return Err(bad(format!("slot {i} escapes the enclosing slot")));
                }
            }
        } else {
            for i in 0..self.slots.len() {
                for j in i + 1..self.slots.len() {
                    if self.slots[i].overlap_area(&self.slots[j]) > 1e-9 {
                        return Err(bad(format!("slots {i} and {j} overlap")));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct LayoutFile {
    canvas: [u32; 2],
    layouts: Vec<StructureLayout>,
}

/// A validated collection of structure layouts sharing one canvas size.
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutSet {
    canvas: (u32, u32),
    layouts: BTreeMap<StructureKind, StructureLayout>,
}

impl LayoutSet {
    pub fn from_layouts(
        canvas: (u32, u32),
        layouts: Vec<StructureLayout>,
    ) -> Result<LayoutSet, LayoutError> {
        if canvas.0 == 0 || canvas.1 == 0 {
            return Err(LayoutError::EmptyCanvas);
        }
        if layouts.is_empty() {
            return Err(LayoutError::NoLayouts);
        }
        let mut map = BTreeMap::new();
        for layout in layouts {
            layout.validate()?;
            let kind = layout.kind.clone();
            if map.insert(kind.clone(), layout).is_some() {
                return Err(LayoutError::DuplicateKind(kind));
            }
        }
        Ok(LayoutSet { canvas, layouts: map })
    }

    pub fn canvas(&self) -> (u32, u32) {
        self.canvas
    }

    pub fn kinds(&self) -> impl Iterator<Item = &StructureKind> {
        self.layouts.keys()
    }

    pub fn len(&self) -> usize {
        self.layouts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layouts.is_empty()
    }

    pub fn get(&self, kind: &StructureKind) -> Option<&StructureLayout> {
        self.layouts.get(kind)
    }

    pub fn require(&self, kind: &StructureKind) -> Result<&StructureLayout, LayoutError> {
        self.get(kind).ok_or_else(|| LayoutError::UnknownStructure(kind.clone()))
    }

    pub fn slot_count(&self, kind: &StructureKind) -> Option<usize> {
        self.get(kind).map(StructureLayout::slot_count)
    }

    /// Slot rectangles of a kind projected onto a pixel canvas.
    pub fn pixel_slots(
        &self,
        kind: &StructureKind,
        width: u32,
        height: u32,
    ) -> Result<Vec<BBox>, LayoutError> {
        Ok(self
            .require(kind)?
            .slots
            .iter()
            .map(|s| s.to_pixels(width, height))
            .collect())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<LayoutSet, LayoutError> {
        let file: LayoutFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        LayoutSet::from_layouts((file.canvas[0], file.canvas[1]), file.layouts)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LayoutError> {
        let file = LayoutFile {
            canvas: [self.canvas.0, self.canvas.1],
            layouts: self.layouts.values().cloned().collect(),
        };
        let mut text = serde_json::to_string_pretty(&file)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    /// The standard layout set: 14 structure kinds on a 256x256 canvas.
    ///
    /// Partitioning kinds: `Single`, `UD`, `LR`, `UMD` (upper/middle/lower),
    /// `LMR` (left/middle/right), `Pyramid`, `Quad`, and `Cross` (five slots,
    /// reading order top, left, center, right, bottom). Surrounding kinds put
    /// the enclosing radical in slot 0 and the enclosed one inside: `SA`
    /// (surround on all sides), `SLR` (open at the bottom), `SD` (open at the
    /// top), `SUL`, `SUR`, `SLL` (corner surrounds named by the closed
    /// corner).
    pub fn standard() -> LayoutSet {
        let r = |x1, y1, x2, y2| SlotRect::new(x1, y1, x2, y2).expect("standard rect");
        let t = 1.0 / 3.0;
        let tt = 2.0 / 3.0;
        let plain = |kind: &str, slots: Vec<SlotRect>| StructureLayout {
            kind: StructureKind::new(kind).expect("standard kind"),
            slots,
            surround: false,
        };
        let surround = |kind: &str, inner: SlotRect| StructureLayout {
            kind: StructureKind::new(kind).expect("standard kind"),
            slots: vec![r(0.0, 0.0, 1.0, 1.0), inner],
            surround: true,
        };
        let layouts = vec![
            plain("Single", vec![r(0.0, 0.0, 1.0, 1.0)]),
            plain("UD", vec![r(0.0, 0.0, 1.0, 0.5), r(0.0, 0.5, 1.0, 1.0)]),
            plain("LR", vec![r(0.0, 0.0, 0.5, 1.0), r(0.5, 0.0, 1.0, 1.0)]),
            plain("UMD", vec![r(0.0, 0.0, 1.0, t), r(0.0, t, 1.0, tt), r(0.0, tt, 1.0, 1.0)]),
            plain("LMR", vec![r(0.0, 0.0, t, 1.0), r(t, 0.0, tt, 1.0), r(tt, 0.0, 1.0, 1.0)]),
            plain(
                "Pyramid",
                vec![r(0.25, 0.0, 0.75, 0.5), r(0.0, 0.5, 0.5, 1.0), r(0.5, 0.5, 1.0, 1.0)],
            ),
            plain(
                "Quad",
                vec![
                    r(0.0, 0.0, 0.5, 0.5),
                    r(0.5, 0.0, 1.0, 0.5),
                    r(0.0, 0.5, 0.5, 1.0),
                    r(0.5, 0.5, 1.0, 1.0),
                ],
            ),
            plain(
                "Cross",
                vec![
                    r(t, 0.0, tt, t),
                    r(0.0, t, t, tt),
                    r(t, t, tt, tt),
                    r(tt, t, 1.0, tt),
                    r(t, tt, tt, 1.0),
                ],
            ),
            surround("SA", r(0.3, 0.3, 0.7, 0.7)),
            surround("SLR", r(0.3, 0.45, 0.7, 0.95)),
            surround("SD", r(0.3, 0.05, 0.7, 0.55)),
            surround("SUL", r(0.45, 0.45, 0.95, 0.95)),
            surround("SUR", r(0.05, 0.45, 0.55, 0.95)),
            surround("SLL", r(0.45, 0.05, 0.95, 0.55)),
        ];
        LayoutSet::from_layouts((256, 256), layouts).expect("standard layout set is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kind(s: &str) -> StructureKind {
        StructureKind::new(s).unwrap()
    }

    #[test]
    fn standard_set_has_fourteen_valid_kinds() {
        let set = LayoutSet::standard();
        assert_eq!(set.len(), 14);
        assert_eq!(set.canvas(), (256, 256));
        for name in [
            "Single", "UD", "LR", "UMD", "LMR", "Pyramid", "Quad", "Cross", "SA", "SLR", "SD",
            "SUL", "SUR", "SLL",
        ] {
            assert!(set.get(&kind(name)).is_some(), "missing {name}");
        }
        assert_eq!(set.slot_count(&kind("Single")), Some(1));
        assert_eq!(set.slot_count(&kind("Cross")), Some(5));
        assert_eq!(set.slot_count(&kind("Quad")), Some(4));
        assert_eq!(set.slot_count(&kind("SLR")), Some(2));
    }

    #[test]
    fn standard_slots_follow_reading_order() {
        let set = LayoutSet::standard();
        for layout in set.kinds().map(|k| set.get(k).unwrap()) {
            let centers: Vec<(f64, f64)> = layout.slots.iter().map(SlotRect::center).collect();
            let skip = if layout.surround { 1 } else { 0 };
            let mut sorted = centers[skip..].to_vec();
            sorted.sort_by(|a, b| (a.1, a.0).partial_cmp(&(b.1, b.0)).unwrap());
            assert_eq!(&centers[skip..], sorted.as_slice(), "kind {}", layout.kind);
        }
    }

    #[test]
    fn pixel_projection_partitions_the_canvas() {
        let set = LayoutSet::standard();
        let slots = set.pixel_slots(&kind("UD"), 256, 256).unwrap();
        assert_eq!(slots, [BBox::new(0, 0, 256, 128).unwrap(), BBox::new(0, 128, 256, 256).unwrap()]);
        // thirds on an awkward canvas still cover without overlap
        let slots = set.pixel_slots(&kind("LMR"), 100, 60).unwrap();
        assert_eq!(
            slots,
            [
                BBox::new(0, 0, 33, 60).unwrap(),
                BBox::new(33, 0, 67, 60).unwrap(),
                BBox::new(67, 0, 100, 60).unwrap(),
            ]
        );
    }

    #[test]
    fn tiny_canvas_never_yields_empty_slots() {
        let set = LayoutSet::standard();
        for k in set.kinds() {
            for b in set.pixel_slots(k, 3, 3).unwrap() {
                assert!(b.x1 < b.x2 && b.y1 < b.y2, "kind {k} on 3x3");
                assert!(b.x2 <= 3 && b.y2 <= 3);
            }
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("layouts.json");
        let set = LayoutSet::standard();
        set.save(&path).unwrap();
        let back = LayoutSet::load(&path).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn validation_rejects_overlap_and_arity_errors() {
        let r = |a, b, c, d| SlotRect::new(a, b, c, d).unwrap();
        let overlapping = StructureLayout {
            kind: kind("UD"),
            slots: vec![r(0.0, 0.0, 1.0, 0.6), r(0.0, 0.4, 1.0, 1.0)],
            surround: false,
        };
        assert!(matches!(
            LayoutSet::from_layouts((64, 64), vec![overlapping.clone()]),
            Err(LayoutError::BadLayout { .. })
        ));
        // same geometry is accepted for a surrounding kind only if contained
        let escaped = StructureLayout {
            kind: kind("SA"),
            slots: vec![r(0.1, 0.1, 0.9, 0.9), r(0.5, 0.5, 1.0, 1.0)],
            surround: true,
        };
        assert!(matches!(
            LayoutSet::from_layouts((64, 64), vec![escaped]),
            Err(LayoutError::BadLayout { .. })
        ));
        let single_two_slots = StructureLayout {
            kind: kind("Single"),
            slots: vec![r(0.0, 0.0, 0.5, 1.0), r(0.5, 0.0, 1.0, 1.0)],
            surround: false,
        };
        assert!(matches!(
            LayoutSet::from_layouts((64, 64), vec![single_two_slots]),
            Err(LayoutError::BadLayout { .. })
        ));
        let dup = LayoutSet::from_layouts(
            (64, 64),
            vec![
                StructureLayout { kind: kind("X2"), slots: vec![r(0.0, 0.0, 0.5, 1.0), r(0.5, 0.0, 1.0, 1.0)], surround: false },
                StructureLayout { kind: kind("X2"), slots: vec![r(0.0, 0.0, 1.0, 0.5), r(0.0, 0.5, 1.0, 1.0)], surround: false },
            ],
        );
        assert!(matches!(dup, Err(LayoutError::DuplicateKind(_))));
        assert!(matches!(
            LayoutSet::from_layouts((0, 64), vec![]),
            Err(LayoutError::EmptyCanvas)
        ));
        assert!(matches!(
            LayoutSet::from_layouts((64, 64), vec![]),
            Err(LayoutError::NoLayouts)
        ));
    }

    #[test]
    fn slot_rect_rejects_out_of_range_values() {
        assert!(SlotRect::new(0.0, 0.0, 1.2, 1.0).is_err());
        assert!(SlotRect::new(-0.1, 0.0, 1.0, 1.0).is_err());
        assert!(SlotRect::new(0.5, 0.0, 0.5, 1.0).is_err());
        assert!(SlotRect::new(0.0, 0.0, f64::NAN, 1.0).is_err());
        assert!(serde_json::from_str::<SlotRect>("[0.0,0.0,0.5,1.5]").is_err());
    }
}
