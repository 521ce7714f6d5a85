//! The character decomposition dictionary.
//!
//! Each entry maps a character label to an ordered list of radicals plus a
//! structure kind describing their spatial arrangement. Slot order is
//! significant: the same radicals in a different order are a different
//! decomposition. Distinct characters may share one decomposition
//! (homographs), so decomposition lookups return every matching label.
//!
//! # Text format
//!
//! Line-oriented UTF-8. `#` starts a comment line, blank lines are ignored.
//!
//! ```text
//! !structure UD 2          # declares a structure kind and its slot count
//! !radical swine swine     # declares a radical id and its display name
//! chase<TAB>UD<TAB>swine,toe
//! ```
//!
//! Entry lines are `character<TAB>structure<TAB>r1,r2,...`. Entry order is
//! preserved by load and save; category splits depend on it.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier of a radical category. Non-empty, no whitespace or commas.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RadicalId(String);

impl RadicalId {
    pub fn new(id: impl Into<String>) -> Result<Self, DictionaryError> {
        let id = id.into();
        if id.is_empty() || id.chars().any(|c| c.is_whitespace() || c == ',') {
            return Err(DictionaryError::BadIdentifier { kind: "radical id", value: id });
        }
        Ok(RadicalId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for RadicalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for RadicalId {
    type Error = DictionaryError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        RadicalId::new(s)
    }
}

impl From<RadicalId> for String {
    fn from(id: RadicalId) -> String {
        id.0
    }
}

/// Name of a structure kind, e.g. `UD` or `Single`. Non-empty, no whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct StructureKind(String);

/// The one structure kind with reserved semantics: exactly one radical whose
/// id equals the character label.
pub const SINGLE: &str = "Single";

impl StructureKind {
    pub fn new(kind: impl Into<String>) -> Result<Self, DictionaryError> {
        let kind = kind.into();
        if kind.is_empty() || kind.chars().any(|c| c.is_whitespace()) {
            return Err(DictionaryError::BadIdentifier { kind: "structure kind", value: kind });
        }
        Ok(StructureKind(kind))
    }

    pub fn single() -> Self {
        StructureKind(SINGLE.to_string())
    }

    pub fn is_single(&self) -> bool {
        self.0 == SINGLE
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for StructureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for StructureKind {
    type Error = DictionaryError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        StructureKind::new(s)
    }
}

impl From<StructureKind> for String {
    fn from(kind: StructureKind) -> String {
        kind.0
    }
}

/// One dictionary entry: a character and its ordered decomposition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharacterEntry {
    pub character: String,
    pub structure: StructureKind,
    pub radicals: Vec<RadicalId>,
}

impl CharacterEntry {
    pub fn new(
        character: impl Into<String>,
        structure: StructureKind,
        radicals: Vec<RadicalId>,
    ) -> Result<Self, DictionaryError> {
        let character = character.into();
        if character.is_empty() || character.contains(['\t', '\n', '\r']) {
            return Err(DictionaryError::BadIdentifier {
                kind: "character label",
                value: character,
            });
        }
        Ok(CharacterEntry { character, structure, radicals })
    }
}

#[derive(Debug, Error)]
pub enum DictionaryError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid {kind}: {value:?}")]
    BadIdentifier { kind: &'static str, value: String },
    #[error("dictionary failed validation with {} violation(s); first: {}", .0.len(), .0[0])]
    Validation(Vec<Violation>),
    #[error("unknown character {0:?}")]
    UnknownCharacter(String),
}

/// One structural problem found by [`Dictionary::validate`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("structure {kind} declared with {slots} slots; Single must have exactly 1 and other kinds at least 2")]
    InvalidStructureDecl { kind: StructureKind, slots: usize },
    #[error("entry {character:?} uses undeclared structure {structure}")]
    UndeclaredStructure { character: String, structure: StructureKind },
    #[error("entry {character:?} uses undeclared radical {radical}")]
    UndeclaredRadical { character: String, radical: RadicalId },
    #[error("entry {character:?} has {actual} radicals but structure {structure} has {expected} slots")]
    SlotCountMismatch {
        character: String,
        structure: StructureKind,
        expected: usize,
        actual: usize,
    },
    #[error("Single entry {character:?} must decompose to the radical of the same id, found {radical}")]
    SingleRadicalMismatch { character: String, radical: RadicalId },
    #[error("entry {character:?} is an exact duplicate")]
    DuplicateEntry { character: String },
    #[error("character {character:?} has conflicting decompositions")]
    ConflictingDecomposition { character: String },
}

/// Non-blocking corpus-scale summary: at corpus scale the radical vocabulary
/// is expected to be smaller than the character vocabulary, but tiny
/// dictionaries legitimately break that, so this is reported rather than
/// enforced at load time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ScaleReport {
    pub radical_categories: usize,
    pub character_categories: usize,
    pub radicals_within_characters: bool,
}

/// The decomposition dictionary. Preserves entry order from the source file.
#[derive(Debug, Clone, Default)]
pub struct Dictionary {
    entries: Vec<CharacterEntry>,
    radicals: BTreeMap<RadicalId, String>,
    structures: BTreeMap<StructureKind, usize>,
    by_character: HashMap<String, usize>,
    by_decomposition: HashMap<(StructureKind, Vec<RadicalId>), Vec<String>>,
    by_radical: HashMap<RadicalId, Vec<String>>,
}

impl PartialEq for Dictionary {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
            && self.radicals == other.radicals
            && self.structures == other.structures
    }
}

impl Dictionary {
    pub fn new() -> Self {
        Dictionary::default()
    }

    /// Declare a structure kind with its slot count. Later declarations of the
    /// same kind overwrite earlier ones.
    pub fn add_structure(&mut self, kind: StructureKind, slots: usize) {
        self.structures.insert(kind, slots);
    }

    /// Declare a radical id with a display name.
    pub fn add_radical(&mut self, id: RadicalId, display_name: impl Into<String>) {
        self.radicals.insert(id, display_name.into());
    }

    /// Append an entry, keeping the lookup indexes in sync. No validation
    /// happens here; call [`Dictionary::validate`] when the build is complete.
    pub fn add_entry(&mut self, entry: CharacterEntry) {
        let idx = self.entries.len();
        self.by_character.entry(entry.character.clone()).or_insert(idx);
        self.by_decomposition
            .entry((entry.structure.clone(), entry.radicals.clone()))
            .or_default()
            .push(entry.character.clone());
        for rid in &entry.radicals {
            let chars = self.by_radical.entry(rid.clone()).or_default();
            if chars.last().map(String::as_str) != Some(entry.character.as_str())
                && !chars.contains(&entry.character)
            {
                chars.push(entry.character.clone());
            }
        }
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[CharacterEntry] {
        &self.entries
    }

    /// Character labels in entry order.
    pub fn characters(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.character.as_str())
    }

    pub fn entry(&self, character: &str) -> Option<&CharacterEntry> {
        self.by_character.get(character).map(|&i| &self.entries[i])
    }

    /// Number of radicals of a character's decomposition.
    pub fn get_num(&self, character: &str) -> Result<usize, DictionaryError> {
        self.entry(character)
            .map(|e| e.radicals.len())
            .ok_or_else(|| DictionaryError::UnknownCharacter(character.to_string()))
    }

    /// All character labels whose decomposition is exactly this ordered
    /// radical list under this structure, in entry order. Empty when nothing
    /// matches; several labels when homographs share the decomposition.
    pub fn search(&self, radicals: &[RadicalId], structure: &StructureKind) -> &[String] {
        // allocation-free miss would need a borrowed key; lookups are rare
        // enough that building the owned key is fine
        let key = (structure.clone(), radicals.to_vec());
        self.by_decomposition.get(&key).map_or(&[], Vec::as_slice)
    }

    /// Characters whose decomposition contains the radical, in entry order,
    /// each listed once.
    pub fn characters_with_radical(&self, radical: &RadicalId) -> &[String] {
        self.by_radical.get(radical).map_or(&[], Vec::as_slice)
    }

    pub fn radical_ids(&self) -> impl Iterator<Item = &RadicalId> {
        self.radicals.keys()
    }

    pub fn radical_display(&self, id: &RadicalId) -> Option<&str> {
        self.radicals.get(id).map(String::as_str)
    }

    pub fn num_radicals(&self) -> usize {
        self.radicals.len()
    }

    pub fn structures(&self) -> &BTreeMap<StructureKind, usize> {
        &self.structures
    }

    pub fn slot_count(&self, kind: &StructureKind) -> Option<usize> {
        self.structures.get(kind).copied()
    }

    pub fn scale_report(&self) -> ScaleReport {
        let radical_categories = self.radicals.len();
        let character_categories = self.by_character.len();
        ScaleReport {
            radical_categories,
            character_categories,
            radicals_within_characters: radical_categories <= character_categories,
        }
    }

    /// Parse the text format without validating cross-references.
    pub fn parse_str(text: &str) -> Result<Dictionary, DictionaryError> {
        let mut dict = Dictionary::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line_num = lineno + 1;
            let line = raw.trim_end_matches('\r');
            let err = |message: String| DictionaryError::Parse { line: line_num, message };
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("!radical ") {
                let rest = rest.trim();
                let (id, display) = match rest.split_once(char::is_whitespace) {
                    Some((id, display)) => (id, display.trim()),
                    None => (rest, rest),
                };
                let id = RadicalId::new(id).map_err(|e| err(e.to_string()))?;
                if dict.radicals.contains_key(&id) {
                    return Err(err(format!("radical {id} declared twice")));
                }
                dict.add_radical(id, display);
            } else if let Some(rest) = line.strip_prefix("!structure ") {
                let mut parts = rest.split_whitespace();
                let kind = parts
                    .next()
                    .ok_or_else(|| err("missing structure kind".into()))?;
                let slots = parts
                    .next()
                    .ok_or_else(|| err("missing slot count".into()))?;
                if parts.next().is_some() {
                    return Err(err("trailing tokens after slot count".into()));
                }
                let kind = StructureKind::new(kind).map_err(|e| err(e.to_string()))?;
                let slots: usize = slots
                    .parse()
                    .map_err(|_| err(format!("slot count {slots:?} is not a number")))?;
                if dict.structures.contains_key(&kind) {
                    return Err(err(format!("structure {kind} declared twice")));
                }
                dict.add_structure(kind, slots);
            } else if line.starts_with('!') {
                return Err(err(format!("unknown directive {:?}", line.split_whitespace().next().unwrap_or(line))));
            } else {
                let mut fields = line.split('\t');
                let (character, structure, radicals) =
                    match (fields.next(), fields.next(), fields.next(), fields.next()) {
                        (Some(c), Some(s), Some(r), None) => (c, s, r),
                        _ => {
                            return Err(err(
                                "entry needs exactly 3 tab-separated fields: character, structure, radicals".into(),
                            ))
                        }
                    };
                let structure =
                    StructureKind::new(structure).map_err(|e| err(e.to_string()))?;
                let radicals = radicals
                    .split(',')
                    .map(|r| RadicalId::new(r.trim()))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| err(e.to_string()))?;
                let entry = CharacterEntry::new(character, structure, radicals)
                    .map_err(|e| err(e.to_string()))?;
                dict.add_entry(entry);
            }
        }
        Ok(dict)
    }

    /// Structural validation. An empty report means the dictionary is sound.
    pub fn validate(&self) -> Vec<Violation> {
        let mut violations = Vec::new();
        for (kind, &slots) in &self.structures {
            let ok = if kind.is_single() { slots == 1 } else { slots >= 2 };
            if !ok {
                violations.push(Violation::InvalidStructureDecl { kind: kind.clone(), slots });
            }
        }
        let mut seen_exact: HashMap<(&str, &StructureKind, &[RadicalId]), ()> = HashMap::new();
        let mut decomposition_of: HashMap<&str, (&StructureKind, &[RadicalId])> = HashMap::new();
        for entry in &self.entries {
            let character = entry.character.clone();
            match self.structures.get(&entry.structure) {
                None => violations.push(Violation::UndeclaredStructure {
                    character: character.clone(),
                    structure: entry.structure.clone(),
                }),
                Some(&expected) => {
                    if entry.radicals.len() != expected {
                        violations.push(Violation::SlotCountMismatch {
                            character: character.clone(),
                            structure: entry.structure.clone(),
                            expected,
                            actual: entry.radicals.len(),
                        });
                    }
                }
            }
            for rid in &entry.radicals {
                if !self.radicals.contains_key(rid) {
                    violations.push(Violation::UndeclaredRadical {
                        character: character.clone(),
                        radical: rid.clone(),
                    });
                }
            }
            if entry.structure.is_single() {
                if entry.radicals.len() == 1 && entry.radicals[0].as_str() != entry.character {
                    violations.push(Violation::SingleRadicalMismatch {
                        character: character.clone(),
                        radical: entry.radicals[0].clone(),
                    });
                }
            }
            let exact_key = (entry.character.as_str(), &entry.structure, entry.radicals.as_slice());
            if seen_exact.insert(exact_key, ()).is_some() {
                violations.push(Violation::DuplicateEntry { character: character.clone() });
            }
            match decomposition_of.get(entry.character.as_str()) {
                None => {
                    decomposition_of.insert(
                        entry.character.as_str(),
                        (&entry.structure, entry.radicals.as_slice()),
                    );
                }
                Some(&(s, r)) => {
                    if s != &entry.structure || r != entry.radicals.as_slice() {
                        violations.push(Violation::ConflictingDecomposition { character });
                    }
                }
            }
        }
        violations
    }

    /// Canonical text serialization: structures sorted by kind, radicals
    /// sorted by id, entries in stored order. `parse_str` of the result
    /// reconstructs an equal dictionary.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (kind, slots) in &self.structures {
            out.push_str(&format!("!structure {kind} {slots}\n"));
        }
        for (id, display) in &self.radicals {
            out.push_str(&format!("!radical {id} {display}\n"));
        }
        for e in &self.entries {
            let radicals: Vec<&str> = e.radicals.iter().map(RadicalId::as_str).collect();
            out.push_str(&format!("{}\t{}\t{}\n", e.character, e.structure, radicals.join(",")));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DictionaryError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Load and validate. Fails with [`DictionaryError::Validation`] when the
    /// file parses but is structurally unsound.
    pub fn load(path: impl AsRef<Path>) -> Result<Dictionary, DictionaryError> {
        let text = std::fs::read_to_string(path)?;
        let dict = Dictionary::parse_str(&text)?;
        let violations = dict.validate();
        if !violations.is_empty() {
            return Err(DictionaryError::Validation(violations));
        }
        Ok(dict)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn rid(s: &str) -> RadicalId {
        RadicalId::new(s).unwrap()
    }

    fn kind(s: &str) -> StructureKind {
        StructureKind::new(s).unwrap()
    }

    const TOY: &str = "\
# tiny worked example
!structure UD 2
!structure SLR 2
!structure Cross 5
!radical swine swine
!radical toe toe
!radical house house
!radical city city
chase\tUD\tswine,toe
cage\tSLR\thouse,swine
guard\tCross\ttoe,toe,city,toe,toe
";

    fn toy() -> Dictionary {
        let d = Dictionary::parse_str(TOY).unwrap();
        assert!(d.validate().is_empty());
        d
    }

    #[test]
    fn parses_the_worked_example() {
        let d = toy();
        assert_eq!(d.entries().len(), 3);
        assert_eq!(d.num_radicals(), 4);
        assert_eq!(d.get_num("chase").unwrap(), 2);
        assert_eq!(d.get_num("guard").unwrap(), 5);
        assert!(matches!(
            d.get_num("missing"),
            Err(DictionaryError::UnknownCharacter(_))
        ));
        assert_eq!(d.slot_count(&kind("Cross")), Some(5));
        assert_eq!(d.entry("cage").unwrap().radicals, vec![rid("house"), rid("swine")]);
    }

    #[test]
    fn search_is_order_sensitive_and_returns_all_matches() {
        let d = toy();
        assert_eq!(d.search(&[rid("swine"), rid("toe")], &kind("UD")), ["chase"]);
        // order matters: reversed radicals match nothing
        assert!(d.search(&[rid("toe"), rid("swine")], &kind("UD")).is_empty());
        // structure matters too
        assert!(d.search(&[rid("swine"), rid("toe")], &kind("SLR")).is_empty());
        assert_eq!(d.search(&[rid("house"), rid("swine")], &kind("SLR")), ["cage"]);
    }

    #[test]
    fn homographs_share_a_decomposition() {
        let text = "!structure LR 2\n!radical a a\n!radical b b\nx\tLR\ta,b\ny\tLR\ta,b\n";
        let d = Dictionary::parse_str(text).unwrap();
        assert!(d.validate().is_empty());
        assert_eq!(d.search(&[rid("a"), rid("b")], &kind("LR")), ["x", "y"]);
    }

    #[test]
    fn reverse_index_matches_brute_force() {
        let d = toy();
        for id in ["swine", "toe", "house", "city"] {
            let id = rid(id);
            let mut expected: Vec<String> = Vec::new();
            for e in d.entries() {
                if e.radicals.contains(&id) && !expected.contains(&e.character) {
                    expected.push(e.character.clone());
                }
            }
            assert_eq!(d.characters_with_radical(&id), expected.as_slice(), "radical {id}");
        }
        assert_eq!(d.characters_with_radical(&rid("swine")), ["chase", "cage"]);
        assert_eq!(d.characters_with_radical(&rid("toe")), ["chase", "guard"]);
    }

    #[test]
    fn save_load_round_trip_preserves_everything() {
        let mut d = toy();
        // exercise homographs, Single entries, and a display name with spaces
        d.add_structure(kind("Single"), 1);
        d.add_radical(rid("well"), "the old well");
        d.add_entry(CharacterEntry::new("well", kind("Single"), vec![rid("well")]).unwrap());
        d.add_entry(CharacterEntry::new("trap", kind("UD"), vec![rid("swine"), rid("toe")]).unwrap());
        assert!(d.validate().is_empty());

        let text = d.to_text();
        let back = Dictionary::parse_str(&text).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.to_text(), text);
        assert_eq!(back.radical_display(&rid("well")), Some("the old well"));
        // homograph of chase survives the trip
        assert_eq!(back.search(&[rid("swine"), rid("toe")], &kind("UD")), ["chase", "trap"]);
        // entry order is preserved verbatim
        let labels: Vec<&str> = back.characters().collect();
        assert_eq!(labels, ["chase", "cage", "guard", "well", "trap"]);
    }

    #[test]
    fn canonical_text_is_stable() {
        let d = toy();
        let expected = "\
!structure Cross 5
!structure SLR 2
!structure UD 2
!radical city city
!radical house house
!radical swine swine
!radical toe toe
chase\tUD\tswine,toe
cage\tSLR\thouse,swine
guard\tCross\ttoe,toe,city,toe,toe
";
        assert_eq!(d.to_text(), expected);
    }

    #[test]
    fn validation_flags_each_violation_kind() {
        let text = "\
!structure Single 2
!structure UD 2
!radical a a
!radical b b
one\tUD\ta,b,b
two\tLR\ta,b
three\tUD\ta,c
a\tSingle\ta
four\tSingle\tb
one\tUD\ta,b,b
one\tUD\ta,b
";
        let d = Dictionary::parse_str(text).unwrap();
        let v = d.validate();
        assert!(v.contains(&Violation::InvalidStructureDecl { kind: kind("Single"), slots: 2 }));
        assert!(v.contains(&Violation::SlotCountMismatch {
            character: "one".into(),
            structure: kind("UD"),
            expected: 2,
            actual: 3,
        }));
        assert!(v.contains(&Violation::UndeclaredStructure {
            character: "two".into(),
            structure: kind("LR"),
        }));
        assert!(v.contains(&Violation::UndeclaredRadical {
            character: "three".into(),
            radical: rid("c"),
        }));
        assert!(v.contains(&Violation::SingleRadicalMismatch {
            character: "four".into(),
            radical: rid("b"),
        }));
        assert!(v.contains(&Violation::DuplicateEntry { character: "one".into() }));
        assert!(v.contains(&Violation::ConflictingDecomposition { character: "one".into() }));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        for (text, line) in [
            ("!structure UD\n", 1),
            ("# ok\n!structure UD two\n", 2),
            ("!radical\n", 1),
            ("!bogus x\n", 1),
            ("chase\tUD\n", 1),
            ("chase\tUD\tswine,\n", 1),
            ("!structure UD 2\n!structure UD 2\n", 2),
            ("!radical a a\n!radical a b\n", 2),
        ] {
            match Dictionary::parse_str(text) {
                Err(DictionaryError::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("expected parse error for {text:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn identifier_rules_are_enforced() {
        assert!(RadicalId::new("").is_err());
        assert!(RadicalId::new("a b").is_err());
        assert!(RadicalId::new("a,b").is_err());
        assert!(RadicalId::new("swine").is_ok());
        assert!(StructureKind::new("U D").is_err());
        assert!(StructureKind::new("UD").is_ok());
        assert!(CharacterEntry::new("a\tb", kind("UD"), vec![]).is_err());
    }

    #[test]
    fn scale_report_is_informational() {
        let d = toy();
        let r = d.scale_report();
        assert_eq!(r.radical_categories, 4);
        assert_eq!(r.character_categories, 3);
        // tiny dictionaries legitimately have more radicals than characters
        assert!(!r.radicals_within_characters);
        assert!(d.validate().is_empty());
    }

    #[test]
    fn json_newtypes_serialize_transparently() {
        let id: RadicalId = serde_json::from_str("\"swine\"").unwrap();
        assert_eq!(id, rid("swine"));
        assert_eq!(serde_json::to_string(&id).unwrap(), "\"swine\"");
        assert!(serde_json::from_str::<RadicalId>("\"a b\"").is_err());
        let k: StructureKind = serde_json::from_str("\"UD\"").unwrap();
        assert_eq!(k, kind("UD"));
    }
}
