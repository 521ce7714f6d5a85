//! Radical-decomposition toolkit for zero-shot glyph recognition.
//!
//! Characters are modeled as spatial arrangements of radicals: a decomposition
//! dictionary maps each character to an ordered radical list plus a structure
//! kind, and the rest of the crate builds on that contract.
//!
//! - [`glyph`]: grayscale rasters, ink bounding boxes, raster ops, sidecar JSON.
//! - [`dictionary`]: the decomposition dictionary, its text format, and lookups.
//! - [`layout`]: normalized slot geometry for each structure kind.
//! - [`synthesis`]: deterministic splicing of radical exemplars into labeled
//!   composite images.
//! - [`annotation`]: two-annotator merge with senior arbitration and
//!   Krippendorff's alpha agreement reports.
//! - [`detection`]: template-bank radical detector plus an ingestion path for
//!   external predictions (raw grid tensors included).
//! - [`reasoner`]: confidence-ranked dictionary matching that turns radical and
//!   structure candidates into character predictions.
//! - [`evaluation`]: top-k accuracy, per-category averages, AP at IoU 0.5, and
//!   zero-shot category splits.
//! - [`pipeline`]: end-to-end synthesize/train/detect/reason/evaluate runs and
//!   a toy dataset generator.

pub mod annotation;
pub mod detection;
pub mod dictionary;
pub mod evaluation;
pub mod glyph;
pub mod layout;
pub mod pipeline;
pub mod reasoner;
pub mod rng;
pub mod synthesis;

pub use dictionary::{Dictionary, RadicalId, StructureKind};
pub use glyph::{BBox, Glyph};
