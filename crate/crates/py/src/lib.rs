//! Python bindings for the radglyph toolkit.
//!
//! Thin wrappers over the core types plus file-based entry points for the
//! batch operations. Structured results (detections, recognitions, reports)
//! cross the boundary as plain dicts and lists, converted through JSON, so
//! the Python side never sees opaque handles for data it will inspect.

use std::collections::BTreeMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde_json::json;

use radglyph::annotation::{self, AnnotationError, AnnotationRecord};
use radglyph::detection::{self, DetectorConfig};
use radglyph::dictionary::{RadicalId, StructureKind};
use radglyph::evaluation::{self, SplitSpec};
use radglyph::glyph::{BBox, GlyphError, DEFAULT_INK_THRESHOLD};
use radglyph::pipeline::{self, PipelineConfig, ToySpec};
use radglyph::reasoner::{self, ReasonerConfig};
use radglyph::synthesis::{self, AugmentBounds, RadicalImageSet, SynthesisConfig};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Convert any serializable value into the matching Python object by
/// round-tripping through the stdlib `json` module.
fn to_py<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Convert a Python object into a deserializable value the same way.
fn from_py<T: serde::de::DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(err)
}

fn radical_ids(ids: Vec<String>) -> PyResult<Vec<RadicalId>> {
    ids.into_iter().map(|id| RadicalId::new(id).map_err(err)).collect()
}

/// A character decomposition dictionary.
#[pyclass(frozen)]
struct Dictionary {
    inner: radglyph::Dictionary,
}

#[pymethods]
impl Dictionary {
    /// Load a dictionary file, rejecting it when validation finds violations.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: radglyph::Dictionary::load(path).map_err(err)? })
    }

    /// Parse dictionary text without enforcing validation; pair with
    /// `validate()` to inspect what is wrong.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(Self { inner: radglyph::Dictionary::parse_str(text).map_err(err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    /// Violation descriptions; empty means the dictionary is sound.
    fn validate(&self) -> Vec<String> {
        self.inner.validate().iter().map(|v| v.to_string()).collect()
    }

    fn characters(&self) -> Vec<String> {
        self.inner.characters().map(str::to_string).collect()
    }

    fn radicals(&self) -> Vec<String> {
        self.inner.radical_ids().map(|id| id.to_string()).collect()
    }

    /// Structure kinds mapped to their slot counts.
    fn structures(&self) -> BTreeMap<String, usize> {
        self.inner.structures().iter().map(|(k, &v)| (k.to_string(), v)).collect()
    }

    /// The entry for a character as `{"structure", "radicals"}`, or None.
    fn entry(&self, py: Python<'_>, character: &str) -> PyResult<Option<Py<PyAny>>> {
        match self.inner.entry(character) {
            Some(entry) => Ok(Some(to_py(
                py,
                &json!({
                    "structure": entry.structure.to_string(),
                    "radicals": entry.radicals.iter().map(|r| r.to_string()).collect::<Vec<_>>(),
                }),
            )?)),
            None => Ok(None),
        }
    }

    /// Characters whose decomposition is exactly this radical list and
    /// structure, in dictionary order (all homographs).
    fn search(&self, radicals: Vec<String>, structure: &str) -> PyResult<Vec<String>> {
        let ids = radical_ids(radicals)?;
        let kind = StructureKind::new(structure).map_err(err)?;
        Ok(self.inner.search(&ids, &kind).to_vec())
    }

    fn characters_with_radical(&self, radical: &str) -> PyResult<Vec<String>> {
        let id = RadicalId::new(radical).map_err(err)?;
        Ok(self.inner.characters_with_radical(&id).to_vec())
    }

    fn __len__(&self) -> usize {
        self.inner.entries().len()
    }
}

/// An 8-bit grayscale raster (0 = ink, 255 = background).
#[pyclass]
struct Glyph {
    inner: radglyph::Glyph,
}

#[pymethods]
impl Glyph {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: radglyph::Glyph::load_png(path).map_err(err)? })
    }

    /// A background-filled glyph of the given size.
    #[staticmethod]
    fn blank(width: u32, height: u32) -> PyResult<Self> {
        Ok(Self { inner: radglyph::Glyph::blank(width, height).map_err(err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save_png(path).map_err(err)
    }

    #[getter]
    fn width(&self) -> u32 {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> u32 {
        self.inner.height()
    }

    fn get(&self, x: u32, y: u32) -> u8 {
        self.inner.get(x, y)
    }

    fn set(&mut self, x: u32, y: u32, value: u8) {
        self.inner.set(x, y, value);
    }

    /// Tight `(x1, y1, x2, y2)` box around the ink, or None for a blank
    /// glyph.
    #[pyo3(signature = (threshold = DEFAULT_INK_THRESHOLD))]
    fn ink_box(&self, threshold: u8) -> PyResult<Option<(u32, u32, u32, u32)>> {
        match self.inner.ink_bounding_box(threshold) {
            Ok(b) => Ok(Some((b.x1, b.y1, b.x2, b.y2))),
            Err(GlyphError::EmptyGlyph { .. }) => Ok(None),
            Err(e) => Err(err(e)),
        }
    }

    fn crop(&self, bbox: (u32, u32, u32, u32)) -> PyResult<Glyph> {
        let (x1, y1, x2, y2) = bbox;
        let b = BBox::new(x1, y1, x2, y2).map_err(err)?;
        Ok(Glyph { inner: self.inner.crop(&b).map_err(err)? })
    }
}

/// Normalized slot geometry per structure kind.
#[pyclass(frozen)]
struct LayoutSet {
    inner: radglyph::layout::LayoutSet,
}

#[pymethods]
impl LayoutSet {
    /// The built-in layouts.
    #[staticmethod]
    fn standard() -> Self {
        Self { inner: radglyph::layout::LayoutSet::standard() }
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: radglyph::layout::LayoutSet::load(path).map_err(err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    fn kinds(&self) -> Vec<String> {
        self.inner.kinds().map(|k| k.to_string()).collect()
    }

    fn slot_count(&self, kind: &str) -> PyResult<Option<usize>> {
        let kind = StructureKind::new(kind).map_err(err)?;
        Ok(self.inner.slot_count(&kind))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Per-radical centroid templates plus the detector settings used to build
/// and apply them.
#[pyclass(frozen)]
struct TemplateBank {
    bank: detection::TemplateBank,
    config: DetectorConfig,
}

#[pymethods]
impl TemplateBank {
    /// Build templates from a directory of radical exemplars
    /// (`<id>.png` or `<id>/<k>.png`).
    #[staticmethod]
    #[pyo3(signature = (
        radicals_dir,
        patch_size = detection::DEFAULT_PATCH_SIZE,
        candidates_per_slot = detection::DEFAULT_CANDIDATES_PER_SLOT,
        ink_threshold = DEFAULT_INK_THRESHOLD,
    ))]
    fn build(
        radicals_dir: &str,
        patch_size: u32,
        candidates_per_slot: usize,
        ink_threshold: u8,
    ) -> PyResult<Self> {
        let config = DetectorConfig { patch_size, candidates_per_slot, ink_threshold };
        let set = RadicalImageSet::from_dir(radicals_dir).map_err(err)?;
        let bank = detection::TemplateBank::build(&set, &config).map_err(err)?;
        Ok(Self { bank, config })
    }

    fn labels(&self) -> Vec<String> {
        self.bank.labels().iter().map(|id| id.to_string()).collect()
    }

    /// Detect radicals and structures in one glyph; returns the result dict
    /// `{"image_id", "slots", "structures"}`.
    #[pyo3(signature = (glyph, layouts, image_id = "image"))]
    fn detect(
        &self,
        py: Python<'_>,
        glyph: &Glyph,
        layouts: &LayoutSet,
        image_id: &str,
    ) -> PyResult<Py<PyAny>> {
        let result = detection::detect(image_id, &glyph.inner, &self.bank, &layouts.inner, &self.config)
            .map_err(err)?;
        to_py(py, &result)
    }

    fn __len__(&self) -> usize {
        self.bank.len()
    }
}

/// Splice radical exemplars into `n` composite images per structure kind and
/// write them (plus sidecars and a manifest) under `out_dir`. Returns the
/// image count. Passing a dictionary restricts the radical draws to its
/// decompositions; `noise=True` applies the default augmentation bounds.
#[pyfunction]
#[pyo3(signature = (radicals_dir, out_dir, structures, n, seed, layouts = None, dictionary = None, noise = false))]
#[allow(clippy::too_many_arguments)]
fn synthesize(
    radicals_dir: &str,
    out_dir: &str,
    structures: Vec<String>,
    n: usize,
    seed: u64,
    layouts: Option<&LayoutSet>,
    dictionary: Option<&Dictionary>,
    noise: bool,
) -> PyResult<usize> {
    let set = RadicalImageSet::from_dir(radicals_dir).map_err(err)?;
    let kinds: Vec<StructureKind> = structures
        .into_iter()
        .map(|s| StructureKind::new(s).map_err(err))
        .collect::<PyResult<_>>()?;
    let standard;
    let layouts = match layouts {
        Some(set) => &set.inner,
        None => {
            standard = radglyph::layout::LayoutSet::standard();
            &standard
        }
    };
    let config = SynthesisConfig {
        per_structure: n,
        seed,
        bounds: if noise { pipeline::default_noise_bounds() } else { AugmentBounds::identity() },
    };
    let records = synthesis::gen_img_set(&set, &kinds, layouts, &config, dictionary.map(|d| &d.inner))
        .map_err(err)?;
    synthesis::save_set(&records, out_dir).map_err(err)?;
    Ok(records.len())
}

/// Parse a prediction file (direct results or raw grids, JSON lines) into a
/// list of detection-result dicts.
#[pyfunction]
#[pyo3(signature = (path, candidates_per_slot = detection::DEFAULT_CANDIDATES_PER_SLOT))]
fn ingest_predictions(py: Python<'_>, path: &str, candidates_per_slot: usize) -> PyResult<Py<PyAny>> {
    let results = detection::load_predictions(path, candidates_per_slot).map_err(err)?;
    to_py(py, &results)
}

/// Rank dictionary characters for every detection result in a prediction
/// file. Returns a list of `{"image_id", "predictions"}` dicts.
#[pyfunction]
#[pyo3(signature = (
    dictionary,
    predictions_path,
    t = reasoner::DEFAULT_TOP_T,
    theta = reasoner::DEFAULT_THETA,
    top_k = 5,
    layouts = None,
))]
fn reason(
    py: Python<'_>,
    dictionary: &Dictionary,
    predictions_path: &str,
    t: usize,
    theta: f64,
    top_k: usize,
    layouts: Option<&LayoutSet>,
) -> PyResult<Py<PyAny>> {
    let config = ReasonerConfig { t, theta };
    config.validate().map_err(err)?;
    let standard;
    let layouts = match layouts {
        Some(set) => &set.inner,
        None => {
            standard = radglyph::layout::LayoutSet::standard();
            &standard
        }
    };
    let results = detection::load_predictions(predictions_path, detection::DEFAULT_CANDIDATES_PER_SLOT)
        .map_err(err)?;
    let records = reasoner::reason_batch(&dictionary.inner, &results, &config, Some(layouts), top_k)
        .map_err(err)?;
    to_py(py, &records)
}

/// Krippendorff's alpha (nominal) over items of ratings, or None when no
/// item carries two or more ratings.
#[pyfunction]
fn krippendorff_alpha(items: Vec<Vec<String>>) -> PyResult<Option<f64>> {
    match annotation::krippendorff_alpha(&items) {
        Ok(alpha) => Ok(Some(alpha)),
        Err(AnnotationError::InsufficientData) => Ok(None),
        Err(e) => Err(err(e)),
    }
}

/// Per-field agreement report over an annotation-record file (JSON lines).
#[pyfunction]
fn agreement_report(py: Python<'_>, path: &str) -> PyResult<Py<PyAny>> {
    let records = annotation::read_records(path).map_err(err)?;
    to_py(py, &annotation::agreement_report(&records).map_err(err)?)
}

/// Merge two annotators' records of one image under senior arbitration.
/// Records are dicts shaped like annotation-file lines; returns the merge
/// result dict with provenance fields.
#[pyfunction]
#[pyo3(signature = (e1, e2, senior, iou = annotation::DEFAULT_MERGE_IOU))]
fn merge_annotations(
    py: Python<'_>,
    e1: &Bound<'_, PyAny>,
    e2: &Bound<'_, PyAny>,
    senior: &Bound<'_, PyAny>,
    iou: f64,
) -> PyResult<Py<PyAny>> {
    let e1: AnnotationRecord = from_py(e1)?;
    let e2: AnnotationRecord = from_py(e2)?;
    let senior: AnnotationRecord = from_py(senior)?;
    to_py(py, &annotation::merge_annotations(&e1, &e2, &senior, iou).map_err(err)?)
}

/// Top-k accuracy of a recognition file against a truth file.
#[pyfunction]
fn top_k_accuracy(truth_path: &str, predictions_path: &str, k: usize) -> PyResult<f64> {
    let truths = evaluation::read_truth(truth_path).map_err(err)?;
    let recognitions = reasoner::read_recognitions(predictions_path).map_err(err)?;
    let samples = evaluation::join_samples(&truths, &recognitions);
    evaluation::top_k_accuracy(&samples, k).map_err(err)
}

/// Mean per-category top-1 accuracy of a recognition file.
#[pyfunction]
fn cat_avg(truth_path: &str, predictions_path: &str) -> PyResult<f64> {
    let truths = evaluation::read_truth(truth_path).map_err(err)?;
    let recognitions = reasoner::read_recognitions(predictions_path).map_err(err)?;
    let samples = evaluation::join_samples(&truths, &recognitions);
    evaluation::cat_avg(&samples).map_err(err)
}

/// AP at IoU 0.5 over a detection-eval file; returns
/// `{"mean", "per_category"}`.
#[pyfunction]
fn ap50(py: Python<'_>, path: &str) -> PyResult<Py<PyAny>> {
    let records = evaluation::read_detection_eval(path).map_err(err)?;
    to_py(py, &evaluation::ap50(&records).map_err(err)?)
}

/// Zero-shot split in dictionary order: the first `n_seen` characters and
/// the last `m_unseen`.
#[pyfunction]
fn zero_shot_split(
    dictionary: &Dictionary,
    n_seen: usize,
    m_unseen: usize,
) -> PyResult<(Vec<String>, Vec<String>)> {
    let split = evaluation::make_zero_shot_split(&dictionary.inner, SplitSpec { n_seen, m_unseen })
        .map_err(err)?;
    Ok((split.seen, split.unseen))
}

/// Write the bundled toy corpus (dictionary, layouts, radical exemplars)
/// under `dir`.
#[pyfunction]
#[pyo3(signature = (dir, characters = 30, exemplars_per_radical = 3, glyph_size = 64, seed = 11))]
fn generate_toy_dataset(
    dir: &str,
    characters: usize,
    exemplars_per_radical: usize,
    glyph_size: u32,
    seed: u64,
) -> PyResult<()> {
    let spec = ToySpec { characters, exemplars_per_radical, glyph_size, seed };
    pipeline::generate_toy_dataset(dir, &spec).map_err(err)?;
    Ok(())
}

/// Run the full synthesize/train/detect/reason/evaluate pipeline from a TOML
/// config file and return the metrics report dict.
#[pyfunction]
fn run_pipeline(py: Python<'_>, config_path: &str) -> PyResult<Py<PyAny>> {
    let config = PipelineConfig::load(config_path).map_err(err)?;
    to_py(py, &pipeline::run_end_to_end(&config).map_err(err)?)
}

#[pymodule]
fn radglyph_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dictionary>()?;
    m.add_class::<Glyph>()?;
    m.add_class::<LayoutSet>()?;
    m.add_class::<TemplateBank>()?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(ingest_predictions, m)?)?;
    m.add_function(wrap_pyfunction!(reason, m)?)?;
    m.add_function(wrap_pyfunction!(krippendorff_alpha, m)?)?;
    m.add_function(wrap_pyfunction!(agreement_report, m)?)?;
    m.add_function(wrap_pyfunction!(merge_annotations, m)?)?;
    m.add_function(wrap_pyfunction!(top_k_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(cat_avg, m)?)?;
    m.add_function(wrap_pyfunction!(ap50, m)?)?;
    m.add_function(wrap_pyfunction!(zero_shot_split, m)?)?;
    m.add_function(wrap_pyfunction!(generate_toy_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
