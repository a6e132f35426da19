//! Label schemes: ordered catalogs of codes, names and provenance.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::Label;

pub const REF_8: &str = "REF_8";
pub const ALL_45: &str = "ALL_45";
pub const TS_117: &str = "TS_117";
pub const PANORAMA: &str = "PANORAMA";
pub const AMOS_16: &str = "AMOS_16";

/// Pancreas parenchyma in REF_8 and ALL_45.
pub const PANCREAS: Label = 44;
/// Pancreas in the AMOS22 ground truth.
pub const AMOS_PANCREAS: Label = 10;
/// Pancreas in the TotalSegmentator total task.
pub const TS_PANCREAS: Label = 7;
/// Aorta in the TotalSegmentator total task.
pub const TS_AORTA: Label = 52;
pub const AORTA: Label = 40;
pub const ARTERIES: Label = 43;

/// Codes carried over from PANORAMA annotations in REF_8 and ALL_45.
pub const PANORAMA_CODES: [Label; 6] = [38, 39, 41, 42, 43, 44];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Background,
    Panorama,
    Ts,
    Derived,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeEntry {
    pub code: Label,
    pub name: String,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabelScheme {
    name: String,
    entries: Vec<SchemeEntry>,
}

impl LabelScheme {
    /// Codes must be unique and code 0 must be present and named background.
    pub fn new(name: impl Into<String>, entries: Vec<SchemeEntry>) -> Result<Self> {
        let name = name.into();
        let mut seen = std::collections::BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.code) {
                return Err(Error::Recipe(format!("scheme {name}: duplicate code {}", e.code)));
            }
        }
        match entries.iter().find(|e| e.code == 0) {
            Some(e) if e.name.eq_ignore_ascii_case("background") => {}
            _ => {
                return Err(Error::Recipe(format!(
                    "scheme {name}: code 0 must be present and named background"
                )))
            }
        }
        Ok(LabelScheme { name, entries })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn entries(&self) -> &[SchemeEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, code: Label) -> bool {
        self.entries.iter().any(|e| e.code == code)
    }

    pub fn codes(&self) -> impl Iterator<Item = Label> + '_ {
        self.entries.iter().map(|e| e.code)
    }

    pub fn max_code(&self) -> Label {
        self.codes().max().unwrap_or(0)
    }

    pub fn entry(&self, code: Label) -> Option<&SchemeEntry> {
        self.entries.iter().find(|e| e.code == code)
    }

    pub fn code_of(&self, name: &str) -> Option<Label> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.code)
    }
}

/// The set of schemes known to a recipe, keyed by name.
#[derive(Debug, Clone, Default)]
pub struct Schemes(BTreeMap<String, LabelScheme>);

impl Schemes {
    pub fn builtin() -> Self {
        crate::harmonize::RecipeBook::builtin().schemes().clone()
    }

    pub(crate) fn insert(&mut self, scheme: LabelScheme) {
        self.0.insert(scheme.name.clone(), scheme);
    }

    pub fn get(&self, name: &str) -> Result<&LabelScheme> {
        self.0
            .get(name)
            .ok_or_else(|| Error::Recipe(format!("unknown scheme {name}")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    fn must(&self, name: &str) -> &LabelScheme {
        self.get(name).expect("builtin scheme present")
    }

    pub fn ref8(&self) -> &LabelScheme {
        self.must(REF_8)
    }

    pub fn all45(&self) -> &LabelScheme {
        self.must(ALL_45)
    }

    pub fn ts(&self) -> &LabelScheme {
        self.must(TS_117)
    }

    pub fn panorama(&self) -> &LabelScheme {
        self.must(PANORAMA)
    }

    pub fn amos(&self) -> &LabelScheme {
        self.must(AMOS_16)
    }
}
