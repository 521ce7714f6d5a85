//! Splicing-based synthesis of labeled composite images.
//!
//! Radicals are drawn from a [`RadicalImageSet`], augmented within configured
//! bounds, scaled into the slots of a structure layout, and pasted onto a
//! blank canvas. Every output carries full labels: radical ids and boxes in
//! slot order plus the structure kind.
//!
//! Generation is deterministic and scheduling-independent: image (kind, j)
//! uses the RNG stream `stream_rng(seed, kind, j)`, and the exact sequence of
//! draws per image (radical picks, then augmentation ops per radical in slot
//! order) is part of the reproducibility contract.

use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dictionary::{CharacterEntry, Dictionary, RadicalId, StructureKind};
use crate::glyph::{
    AnnotatedImage, AnnotationSidecar, BBox, Glyph, GlyphError, DEFAULT_INK_THRESHOLD,
};
use crate::layout::{LayoutError, LayoutSet, StructureLayout};
use crate::rng::stream_rng;

/// Background margin kept on each side of a slot, as a fraction of the slot
/// dimensions, so radical ink never touches slot borders.
pub const SLOT_MARGIN: f64 = 0.04;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("radical set is empty")]
    EmptySet,
    #[error("radical directory entry {0:?} contains no PNG images")]
    NoExemplars(String),
    #[error("radical {0} is not in the radical set")]
    UnknownRadical(RadicalId),
    #[error("Single is not spliceable; synthesis covers multi-radical structures only")]
    SingleNotAllowed,
    #[error("structure {0} listed twice")]
    DuplicateStructure(StructureKind),
    #[error("{count} radicals for structure {kind} with {slots} slots")]
    SlotMismatch { kind: StructureKind, count: usize, slots: usize },
    #[error("augmentation bounds invalid: {0}")]
    BadBounds(String),
    #[error("no dictionary entry uses structure {0}")]
    NoEntryForStructure(StructureKind),
    #[error("radical {id} has no ink to splice")]
    EmptyRadical { id: RadicalId },
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Glyph(#[from] GlyphError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Source radical exemplars, keyed by radical id (Set_R).
#[derive(Debug, Clone, Default)]
pub struct RadicalImageSet {
    exemplars: std::collections::BTreeMap<RadicalId, Vec<Glyph>>,
}

impl RadicalImageSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: RadicalId, glyph: Glyph) {
        self.exemplars.entry(id).or_default().push(glyph);
    }

    /// Load from a directory. Each subdirectory `<id>/` contributes its PNG
    /// files (sorted by name) as exemplars of radical `<id>`; a top-level
    /// `<id>.png` contributes a single exemplar.
    pub fn from_dir(path: impl AsRef<Path>) -> Result<RadicalImageSet, SynthesisError> {
        let mut set = RadicalImageSet::new();
        let mut entries: Vec<_> = std::fs::read_dir(path)?.collect::<Result<_, _>>()?;
        entries.sort_by_key(|e| e.file_name());
        for entry in entries {
            let p = entry.path();
            let name = entry.file_name().to_string_lossy().into_owned();
            if p.is_dir() {
                let id = RadicalId::new(&name)
                    .map_err(|_| SynthesisError::NoExemplars(name.clone()))?;
                let mut files: Vec<_> = std::fs::read_dir(&p)?
                    .collect::<Result<Vec<_>, _>>()?
                    .into_iter()
                    .map(|e| e.path())
                    .filter(|f| f.extension().is_some_and(|e| e == "png"))
                    .collect();
                files.sort();
                if files.is_empty() {
                    return Err(SynthesisError::NoExemplars(name));
                }
                for f in files {
                    set.insert(id.clone(), Glyph::load_png(f)?);
                }
            } else if p.extension().is_some_and(|e| e == "png") {
                let stem = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                let id = RadicalId::new(&stem)
                    .map_err(|_| SynthesisError::NoExemplars(stem.clone()))?;
                set.insert(id, Glyph::load_png(&p)?);
            }
        }
        Ok(set)
    }

    pub fn ids(&self) -> impl Iterator<Item = &RadicalId> {
        self.exemplars.keys()
    }

    pub fn exemplars(&self, id: &RadicalId) -> Option<&[Glyph]> {
        self.exemplars.get(id).map(Vec::as_slice)
    }

    pub fn contains(&self, id: &RadicalId) -> bool {
        self.exemplars.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.exemplars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.is_empty()
    }
}

/// Bounds for the augmentation pool. Zoom-in draws its factor from
/// `[1, scale_max]`, zoom-out from `[scale_min, 1]`; rotation and shear are
/// symmetric around zero; padding draws an integer margin up to `max_pad`.
/// The default is the identity: no op changes any pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentBounds {
    pub scale_min: f64,
    pub scale_max: f64,
    pub max_rotate_deg: f64,
    pub max_shear: f64,
    pub max_pad: u32,
}

impl Default for AugmentBounds {
    fn default() -> Self {
        AugmentBounds::identity()
    }
}

impl AugmentBounds {
    pub fn identity() -> Self {
        AugmentBounds {
            scale_min: 1.0,
            scale_max: 1.0,
            max_rotate_deg: 0.0,
            max_shear: 0.0,
            max_pad: 0,
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == AugmentBounds::identity()
    }

    pub fn validate(&self) -> Result<(), SynthesisError> {
        let ok = self.scale_min.is_finite()
            && self.scale_max.is_finite()
            && self.max_rotate_deg.is_finite()
            && self.max_shear.is_finite()
            && self.scale_min > 0.0
            && self.scale_min <= 1.0
            && self.scale_max >= 1.0
            && self.max_rotate_deg >= 0.0
            && self.max_shear >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(SynthesisError::BadBounds(format!("{self:?}")))
        }
    }
}

/// Configuration of one synthesis run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    /// Images generated per structure kind (n).
    pub per_structure: usize,
    pub seed: u64,
    #[serde(default)]
    pub bounds: AugmentBounds,
}

/// Draw `num` radicals: uniform over radical ids, then uniform over that
/// radical's exemplars. Draws are independent, so repeats are possible.
pub fn get_radicals(
    set_r: &RadicalImageSet,
    num: usize,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<(RadicalId, Glyph)>, SynthesisError> {
    if set_r.is_empty() {
        return Err(SynthesisError::EmptySet);
    }
    let ids: Vec<&RadicalId> = set_r.ids().collect();
    let mut out = Vec::with_capacity(num);
    for _ in 0..num {
        let id = ids[rng.random_range(0..ids.len())].clone();
        let exemplars = set_r.exemplars(&id).expect("listed id");
        let glyph = exemplars[rng.random_range(0..exemplars.len())].clone();
        out.push((id, glyph));
    }
    Ok(out)
}

fn pick_exemplar(
    set_r: &RadicalImageSet,
    id: &RadicalId,
    rng: &mut ChaCha12Rng,
) -> Result<Glyph, SynthesisError> {
    let exemplars = set_r
        .exemplars(id)
        .ok_or_else(|| SynthesisError::UnknownRadical(id.clone()))?;
    Ok(exemplars[rng.random_range(0..exemplars.len())].clone())
}

/// Augment one radical: each op from {zoom-in, zoom-out, rotate, distort,
/// pad} is independently included with probability 1/2, parameters drawn
/// within bounds. Identity bounds leave the glyph pixel-identical.
pub fn augment_radical(
    glyph: &Glyph,
    bounds: &AugmentBounds,
    rng: &mut ChaCha12Rng,
) -> Result<Glyph, SynthesisError> {
    let mut g = glyph.clone();
    if rng.random_bool(0.5) {
        g = g.scale(rng.random_range(1.0..=bounds.scale_max))?;
    }
    if rng.random_bool(0.5) {
        g = g.scale(rng.random_range(bounds.scale_min..=1.0))?;
    }
    if rng.random_bool(0.5) {
        g = g.rotate(rng.random_range(-bounds.max_rotate_deg..=bounds.max_rotate_deg));
    }
    if rng.random_bool(0.5) {
        g = g.shear(rng.random_range(-bounds.max_shear..=bounds.max_shear));
    }
    if rng.random_bool(0.5) && bounds.max_pad > 0 {
        g = g.pad(rng.random_range(0..=bounds.max_pad));
    }
    Ok(g)
}

/// Augment a radical list in order with one shared RNG stream.
pub fn augment_img(
    radicals: Vec<Glyph>,
    bounds: &AugmentBounds,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<Glyph>, SynthesisError> {
    bounds.validate()?;
    radicals.iter().map(|g| augment_radical(g, bounds, rng)).collect()
}

/// Scale a glyph to fit a pixel slot (aspect preserved, [`SLOT_MARGIN`]
/// background border, centered). Returns the fitted glyph and its paste
/// offset.
pub fn fit_into_slot(glyph: &Glyph, slot: &BBox) -> Result<(Glyph, u32, u32), SynthesisError> {
    let mx = (f64::from(slot.width()) * SLOT_MARGIN).round() as u32;
    let my = (f64::from(slot.height()) * SLOT_MARGIN).round() as u32;
    let inner_w = slot.width().saturating_sub(2 * mx).max(1);
    let inner_h = slot.height().saturating_sub(2 * my).max(1);
    let s = (f64::from(inner_w) / f64::from(glyph.width()))
        .min(f64::from(inner_h) / f64::from(glyph.height()));
    let tw = ((f64::from(glyph.width()) * s).round() as u32).clamp(1, inner_w);
    let th = ((f64::from(glyph.height()) * s).round() as u32).clamp(1, inner_h);
    let scaled = glyph.scale_to(tw, th)?;
    let x = slot.x1 + (slot.width() - tw) / 2;
    let y = slot.y1 + (slot.height() - th) / 2;
    Ok((scaled, x, y))
}

/// Splice radicals into a layout's slots on a blank canvas. Emitted boxes are
/// the actual pasted ink bounding boxes, so cropping a box out of the result
/// recovers the fitted radical's ink exactly (for non-overlapping slots).
pub fn generate_img(
    radicals: &[(RadicalId, Glyph)],
    layout: &StructureLayout,
    canvas: (u32, u32),
) -> Result<AnnotatedImage, SynthesisError> {
    if radicals.len() != layout.slot_count() {
        return Err(SynthesisError::SlotMismatch {
            kind: layout.kind.clone(),
            count: radicals.len(),
            slots: layout.slot_count(),
        });
    }
    let (w, h) = canvas;
    let mut img = Glyph::blank(w, h)?;
    let mut labels = Vec::with_capacity(radicals.len());
    let mut boxes = Vec::with_capacity(radicals.len());
    for (rect, (id, glyph)) in layout.slots.iter().zip(radicals) {
        let slot = rect.to_pixels(w, h);
        let (fitted, x, y) = fit_into_slot(glyph, &slot)?;
        let ink = fitted
            .ink_bounding_box(DEFAULT_INK_THRESHOLD)
            .map_err(|_| SynthesisError::EmptyRadical { id: id.clone() })?;
        img = img.paste(&fitted, x, y)?;
        labels.push(id.clone());
        boxes.push(ink.translate(x, y));
    }
    let ids: Vec<&str> = labels.iter().map(RadicalId::as_str).collect();
    Ok(AnnotatedImage {
        glyph: img,
        character_label: format!("SYN:{}:{}", layout.kind, ids.join("+")),
        structure_label: layout.kind.clone(),
        radical_labels: labels,
        radical_boxes: boxes,
    })
}

/// Generate the single image (kind, index) of a run. This is the unit
/// [`gen_img_set`] parallelizes over; calling it directly reproduces any one
/// output image. With a dictionary, radical draws are restricted to entries
/// of that structure (the label stays synthetic either way).
pub fn synth_one(
    set_r: &RadicalImageSet,
    kind: &StructureKind,
    layouts: &LayoutSet,
    config: &SynthesisConfig,
    dictionary: Option<&Dictionary>,
    index: u64,
) -> Result<AnnotatedImage, SynthesisError> {
    let mut rng = stream_rng(config.seed, kind.as_str(), index);
    let layout = layouts.require(kind)?;
    let picks = match dictionary {
        None => get_radicals(set_r, layout.slot_count(), &mut rng)?,
        Some(dict) => {
            let entries: Vec<&CharacterEntry> =
                dict.entries().iter().filter(|e| &e.structure == kind).collect();
            if entries.is_empty() {
                return Err(SynthesisError::NoEntryForStructure(kind.clone()));
            }
            let entry = entries[rng.random_range(0..entries.len())];
            let mut picks = Vec::with_capacity(entry.radicals.len());
            for rid in &entry.radicals {
                picks.push((rid.clone(), pick_exemplar(set_r, rid, &mut rng)?));
            }
            picks
        }
    };
    let (ids, glyphs): (Vec<_>, Vec<_>) = picks.into_iter().unzip();
    let augmented = augment_img(glyphs, &config.bounds, &mut rng)?;
    let radicals: Vec<(RadicalId, Glyph)> = ids.into_iter().zip(augmented).collect();
    generate_img(&radicals, layout, layouts.canvas())
}

/// Generate `config.per_structure` images for every listed structure kind
/// (Set_syn). Output order is canonical (structure list order, then index)
/// and independent of thread scheduling. Image ids are `<kind>_<index:05>`.
pub fn gen_img_set(
    set_r: &RadicalImageSet,
    set_s: &[StructureKind],
    layouts: &LayoutSet,
    config: &SynthesisConfig,
    dictionary: Option<&Dictionary>,
) -> Result<Vec<(String, AnnotatedImage)>, SynthesisError> {
    config.bounds.validate()?;
    let mut seen = BTreeSet::new();
    for kind in set_s {
        if kind.is_single() {
            return Err(SynthesisError::SingleNotAllowed);
        }
        if !seen.insert(kind) {
            return Err(SynthesisError::DuplicateStructure(kind.clone()));
        }
        layouts.require(kind)?;
    }
    let jobs: Vec<(&StructureKind, u64)> = set_s
        .iter()
        .flat_map(|kind| (0..config.per_structure as u64).map(move |j| (kind, j)))
        .collect();
    jobs.into_par_iter()
        .map(|(kind, j)| {
            let img = synth_one(set_r, kind, layouts, config, dictionary, j)?;
            Ok((format!("{kind}_{j:05}"), img))
        })
        .collect()
}

/// Render one dictionary entry as an image: exemplars drawn per slot,
/// augmented within bounds, spliced by the entry's structure layout. Unlike
/// [`gen_img_set`] this covers Single entries and labels the image with the
/// real character.
pub fn render_entry(
    set_r: &RadicalImageSet,
    entry: &CharacterEntry,
    layouts: &LayoutSet,
    bounds: &AugmentBounds,
    rng: &mut ChaCha12Rng,
) -> Result<AnnotatedImage, SynthesisError> {
    let layout = layouts.require(&entry.structure)?;
    if entry.radicals.len() != layout.slot_count() {
        return Err(SynthesisError::SlotMismatch {
            kind: entry.structure.clone(),
            count: entry.radicals.len(),
            slots: layout.slot_count(),
        });
    }
    let mut picks = Vec::with_capacity(entry.radicals.len());
    for rid in &entry.radicals {
        picks.push(pick_exemplar(set_r, rid, rng)?);
    }
    let augmented = augment_img(picks, bounds, rng)?;
    let radicals: Vec<(RadicalId, Glyph)> =
        entry.radicals.iter().cloned().zip(augmented).collect();
    let mut img = generate_img(&radicals, layout, layouts.canvas())?;
    img.character_label = entry.character.clone();
    Ok(img)
}

/// Manifest listing every record of a generated image set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub records: Vec<AnnotationSidecar>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Manifest, SynthesisError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SynthesisError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Load the PNGs referenced by the manifest, reattaching labels.
    /// `dir` is the directory the manifest's image names are relative to.
    pub fn load_images(&self, dir: impl AsRef<Path>) -> Result<Vec<AnnotatedImage>, SynthesisError> {
        let dir = dir.as_ref();
        self.records
            .iter()
            .map(|rec| {
                let glyph = Glyph::load_png(dir.join(&rec.image))?;
                Ok(AnnotatedImage {
                    glyph,
                    character_label: rec.character_label.clone(),
                    structure_label: rec.structure_label.clone(),
                    radical_labels: rec.radical_labels(),
                    radical_boxes: rec.radical_boxes(),
                })
            })
            .collect()
    }
}

/// Write a generated set as `<id>.png` + `<id>.json` sidecars plus
/// `manifest.json`, all under `dir`. Returns the manifest.
pub fn save_set(
    records: &[(String, AnnotatedImage)],
    dir: impl AsRef<Path>,
) -> Result<Manifest, SynthesisError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut sidecars = Vec::with_capacity(records.len());
    for (id, img) in records {
        let image_name = format!("{id}.png");
        img.glyph.save_png(dir.join(&image_name))?;
        let sidecar = img.to_sidecar(image_name);
        let mut text = serde_json::to_string_pretty(&sidecar)?;
        text.push('\n');
        std::fs::write(dir.join(format!("{id}.json")), text)?;
        sidecars.push(sidecar);
    }
    let manifest = Manifest { schema_version: MANIFEST_SCHEMA_VERSION, records: sidecars };
    manifest.save(dir.join("manifest.json"))?;
    Ok(manifest)
}
