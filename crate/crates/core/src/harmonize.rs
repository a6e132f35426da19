//! Label harmonization: remap tables, mask-out and precedence merges, and
//! the recipe interpreter that composes them into REF_8 / ALL_45 volumes.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scheme::{LabelScheme, SchemeEntry, Schemes, Source, ALL_45, REF_8};
use crate::volume::{ensure_compatible, validate_against_scheme, Label, LabelVolume, DEFAULT_REL_TOL};

/// Recipe shipped with the crate, transcribed from the published structure table.
pub const BUILTIN_RECIPE: &str = include_str!("../recipes/harmonize_v1.toml");

static BUILTIN: LazyLock<RecipeBook> =
    LazyLock::new(|| RecipeBook::from_toml(BUILTIN_RECIPE).expect("builtin recipe is valid"));

/// A total source-code → target-code mapping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemapTable {
    map: BTreeMap<Label, Label>,
    default: Option<Label>,
}

impl RemapTable {
    pub fn new(map: BTreeMap<Label, Label>, default: Option<Label>) -> Self {
        RemapTable { map, default }
    }

    pub fn identity(codes: impl IntoIterator<Item = Label>) -> Self {
        RemapTable::new(codes.into_iter().map(|c| (c, c)).collect(), None)
    }

    pub fn get(&self, code: Label) -> Option<Label> {
        self.map.get(&code).copied().or(self.default)
    }

    pub fn entries(&self) -> &BTreeMap<Label, Label> {
        &self.map
    }

    pub fn default_code(&self) -> Option<Label> {
        self.default
    }

    /// Every code this table can emit.
    pub fn image(&self) -> BTreeSet<Label> {
        self.map.values().copied().chain(self.default).collect()
    }
}

/// Relabels every voxel through `table`. Fails on a code the table does not cover.
pub fn group_remap(vol: &LabelVolume, table: &RemapTable) -> Result<LabelVolume> {
    let max = vol.max_code() as usize;
    let mut lut: Vec<Option<Label>> = vec![None; max + 1];
    for (code, slot) in lut.iter_mut().enumerate() {
        *slot = table.get(code as Label);
    }
    let mut out = Vec::with_capacity(vol.voxels().len());
    for &v in vol.voxels() {
        match lut[v as usize] {
            Some(t) => out.push(t),
            None => return Err(Error::UnmappedCode(v)),
        }
    }
    Ok(vol.with_voxels(out))
}

/// Voxels equal to `victim_code` where `mask` equals `mask_code` become `replacement`.
pub fn mask_out(
    victim: &LabelVolume,
    victim_code: Label,
    mask: &LabelVolume,
    mask_code: Label,
    replacement: Label,
) -> Result<LabelVolume> {
    ensure_compatible(victim.grid(), mask.grid(), DEFAULT_REL_TOL)?;
    let out = victim
        .voxels()
        .iter()
        .zip(mask.voxels())
        .map(|(&v, &m)| {
            if v == victim_code && m == mask_code {
                replacement
            } else {
                v
            }
        })
        .collect();
    Ok(victim.with_voxels(out))
}

/// Overlay voxels carrying one of `overlay_codes` replace the base voxel.
///
/// An overlay code that also occurs in `base` is a recipe bug and is rejected,
/// unless it is listed in `shared_codes` (codes the overlay is documented to win).
pub fn precedence_merge(
    base: &LabelVolume,
    overlay: &LabelVolume,
    overlay_codes: &[Label],
    shared_codes: &[Label],
) -> Result<LabelVolume> {
    ensure_compatible(base.grid(), overlay.grid(), DEFAULT_REL_TOL)?;
    let max = overlay_codes.iter().copied().max().unwrap_or(0) as usize;
    let mut wins = vec![false; max + 1];
    for &c in overlay_codes {
        wins[c as usize] = true;
    }
    let in_overlay = |c: Label| (c as usize) <= max && wins[c as usize];

    let mut seen = vec![false; max + 1];
    for &b in base.voxels() {
        if in_overlay(b) {
            seen[b as usize] = true;
        }
    }
    if let Some(code) = (0..=max)
        .filter(|&c| seen[c])
        .map(|c| c as Label)
        .find(|c| !shared_codes.contains(c))
    {
        return Err(Error::CodeCollision(code));
    }

    let out = base
        .voxels()
        .iter()
        .zip(overlay.voxels())
        .map(|(&b, &o)| if in_overlay(o) { o } else { b })
        .collect();
    Ok(base.with_voxels(out))
}

/// One step of a [`HarmonizationRecipe`], operating on named volume slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Rule {
    GroupRemap {
        input: String,
        table: String,
        output: String,
    },
    MaskOut {
        victim: String,
        victim_code: Label,
        mask: String,
        mask_code: Label,
        replacement: Label,
        output: String,
    },
    PrecedenceMerge {
        base: String,
        overlay: String,
        overlay_codes: Vec<Label>,
        #[serde(default)]
        shared_codes: Vec<Label>,
        output: String,
    },
}

impl Rule {
    fn output(&self) -> &str {
        match self {
            Rule::GroupRemap { output, .. }
            | Rule::MaskOut { output, .. }
            | Rule::PrecedenceMerge { output, .. } => output,
        }
    }

    fn inputs(&self) -> Vec<&str> {
        match self {
            Rule::GroupRemap { input, .. } => vec![input],
            Rule::MaskOut { victim, mask, .. } => vec![victim, mask],
            Rule::PrecedenceMerge { base, overlay, .. } => vec![base, overlay],
        }
    }

    fn describe(&self) -> String {
        match self {
            Rule::GroupRemap { input, table, output } => {
                format!("group_remap {input} via {table} -> {output}")
            }
            Rule::MaskOut {
                victim,
                victim_code,
                mask,
                mask_code,
                replacement,
                output,
            } => format!(
                "mask_out {victim}[{victim_code}] where {mask}=={mask_code} -> {replacement} into {output}"
            ),
            Rule::PrecedenceMerge {
                base,
                overlay,
                output,
                ..
            } => format!("precedence_merge {overlay} over {base} -> {output}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HarmonizationRecipe {
    pub target: String,
    pub rules: Vec<Rule>,
}

/// How many voxels one rule changed relative to its primary input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RuleLog {
    pub rule: String,
    pub changed_voxels: usize,
}

#[derive(Debug, Clone)]
pub struct Harmonized {
    pub volume: LabelVolume,
    pub log: Vec<RuleLog>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecipeFile {
    version: String,
    inputs: BTreeMap<String, String>,
    schemes: BTreeMap<String, SchemeDef>,
    tables: BTreeMap<String, TableDef>,
    recipes: BTreeMap<String, RecipeDef>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemeDef {
    entries: Vec<(Label, String, Source)>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TableDef {
    source: String,
    target: String,
    #[serde(default)]
    entries: Vec<(Label, Label)>,
    #[serde(default)]
    groups: Vec<(Label, Vec<String>)>,
    default: Option<Label>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecipeDef {
    target: String,
    rules: Vec<Rule>,
}

/// A parsed and statically checked recipe file: schemes, tables and recipes.
#[derive(Debug, Clone)]
pub struct RecipeBook {
    version: String,
    inputs: BTreeMap<String, String>,
    schemes: Schemes,
    tables: BTreeMap<String, RemapTable>,
    recipes: BTreeMap<String, HarmonizationRecipe>,
}

impl RecipeBook {
    pub fn builtin() -> &'static RecipeBook {
        &BUILTIN
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: RecipeFile = toml::from_str(text)?;

        let mut schemes = Schemes::default();
        for (name, def) in file.schemes {
            let entries = def
                .entries
                .into_iter()
                .map(|(code, name, source)| SchemeEntry { code, name, source })
                .collect();
            schemes.insert(LabelScheme::new(name, entries)?);
        }
        for (slot, scheme) in &file.inputs {
            schemes
                .get(scheme)
                .map_err(|_| Error::Recipe(format!("input {slot}: unknown scheme {scheme}")))?;
        }

        let mut tables = BTreeMap::new();
        for (name, def) in file.tables {
            tables.insert(name.clone(), build_table(&name, def, &schemes)?);
        }

        let mut recipes = BTreeMap::new();
        for (name, def) in file.recipes {
            let recipe = HarmonizationRecipe {
                target: def.target,
                rules: def.rules,
            };
            check_recipe(&name, &recipe, &file.inputs, &schemes, &tables)?;
            recipes.insert(name, recipe);
        }

        Ok(RecipeBook {
            version: file.version,
            inputs: file.inputs,
            schemes,
            tables,
            recipes,
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn schemes(&self) -> &Schemes {
        &self.schemes
    }

    pub fn table(&self, name: &str) -> Result<&RemapTable> {
        self.tables
            .get(name)
            .ok_or_else(|| Error::Recipe(format!("unknown table {name}")))
    }

    pub fn recipe(&self, name: &str) -> Result<&HarmonizationRecipe> {
        self.recipes
            .get(name)
            .ok_or_else(|| Error::Recipe(format!("unknown recipe {name}")))
    }

    /// Scheme expected for each named input slot.
    pub fn inputs(&self) -> &BTreeMap<String, String> {
        &self.inputs
    }

    /// Runs a recipe over the given input slots. The result is validated
    /// against the recipe's target scheme.
    pub fn apply(&self, recipe: &str, inputs: &[(&str, &LabelVolume)]) -> Result<Harmonized> {
        let recipe = self.recipe(recipe)?;
        let mut slots: BTreeMap<&str, Cow<'_, LabelVolume>> = BTreeMap::new();
        for (name, vol) in inputs {
            slots.insert(name, Cow::Borrowed(*vol));
        }
        let mut log = Vec::with_capacity(recipe.rules.len());
        for rule in &recipe.rules {
            let get = |name: &str| {
                slots
                    .get(name)
                    .map(|c| c.as_ref())
                    .ok_or_else(|| Error::Recipe(format!("slot {name} not available")))
            };
            let (primary, produced) = match rule {
                Rule::GroupRemap { input, table, .. } => {
                    let src = get(input)?;
                    (src, group_remap(src, self.table(table)?)?)
                }
                Rule::MaskOut {
                    victim,
                    victim_code,
                    mask,
                    mask_code,
                    replacement,
                    ..
                } => {
                    let v = get(victim)?;
                    (v, mask_out(v, *victim_code, get(mask)?, *mask_code, *replacement)?)
                }
                Rule::PrecedenceMerge {
                    base,
                    overlay,
                    overlay_codes,
                    shared_codes,
                    ..
                } => {
                    let b = get(base)?;
                    (b, precedence_merge(b, get(overlay)?, overlay_codes, shared_codes)?)
                }
            };
            let changed = primary
                .voxels()
                .iter()
                .zip(produced.voxels())
                .filter(|(a, b)| a != b)
                .count();
            log.push(RuleLog {
                rule: rule.describe(),
                changed_voxels: changed,
            });
            slots.insert(rule.output(), Cow::Owned(produced));
        }

        let volume = slots
            .remove("out")
            .ok_or_else(|| Error::Recipe("recipe produced no `out` slot".into()))?
            .into_owned();
        let scheme = self.schemes.get(&recipe.target)?;
        let report = validate_against_scheme(&volume, scheme);
        if !report.is_ok() {
            return Err(Error::Recipe(format!(
                "output does not validate against {}: {:?}",
                recipe.target, report.offending
            )));
        }
        Ok(Harmonized { volume, log })
    }

    pub fn build_ref8(&self, panorama: &LabelVolume, ts: &LabelVolume) -> Result<Harmonized> {
        self.apply(REF_8, &[("panorama", panorama), ("ts", ts)])
    }

    pub fn build_all45(&self, panorama: &LabelVolume, ts: &LabelVolume) -> Result<Harmonized> {
        self.apply(ALL_45, &[("panorama", panorama), ("ts", ts)])
    }
}

fn build_table(name: &str, def: TableDef, schemes: &Schemes) -> Result<RemapTable> {
    let source = schemes.get(&def.source)?;
    let target = schemes.get(&def.target)?;
    let err = |msg: String| Error::Recipe(format!("table {name}: {msg}"));

    let mut map = BTreeMap::new();
    let mut put = |src: Label, dst: Label| -> Result<()> {
        if !source.contains(src) {
            return Err(err(format!("source code {src} not in {}", source.name())));
        }
        if !target.contains(dst) {
            return Err(err(format!("target code {dst} not in {}", target.name())));
        }
        if map.insert(src, dst).is_some() {
            return Err(err(format!("source code {src} mapped twice")));
        }
        Ok(())
    };
    for (src, dst) in def.entries {
        put(src, dst)?;
    }
    for (dst, names) in def.groups {
        for n in names {
            let src = source
                .code_of(&n)
                .ok_or_else(|| err(format!("unknown structure {n:?} in {}", source.name())))?;
            put(src, dst)?;
        }
    }
    if let Some(d) = def.default {
        if !target.contains(d) {
            return Err(err(format!("default code {d} not in {}", target.name())));
        }
    } else if let Some(missing) = source.codes().find(|c| !map.contains_key(c)) {
        let label = source.entry(missing).map(|e| e.name.as_str()).unwrap_or("?");
        return Err(err(format!("source code {missing} ({label}) is not mapped")));
    }
    Ok(RemapTable::new(map, def.default))
}

fn check_recipe(
    name: &str,
    recipe: &HarmonizationRecipe,
    inputs: &BTreeMap<String, String>,
    schemes: &Schemes,
    tables: &BTreeMap<String, RemapTable>,
) -> Result<()> {
    let err = |msg: String| Error::Recipe(format!("recipe {name}: {msg}"));
    let target = schemes.get(&recipe.target)?;
    let mut defined: BTreeSet<&str> = inputs.keys().map(String::as_str).collect();
    let mut produced: BTreeSet<Label> = BTreeSet::new();

    for rule in &recipe.rules {
        for slot in rule.inputs() {
            if !defined.contains(slot) {
                return Err(err(format!("slot {slot} used before it is defined")));
            }
        }
        match rule {
            Rule::GroupRemap { table, .. } => {
                let t = tables
                    .get(table)
                    .ok_or_else(|| err(format!("unknown table {table}")))?;
                let image = t.image();
                if let Some(c) = image.iter().find(|c| !target.contains(**c)) {
                    return Err(err(format!("table {table} emits {c}, not in {}", target.name())));
                }
                produced.extend(image);
            }
            Rule::MaskOut { replacement, .. } => {
                produced.insert(*replacement);
            }
            Rule::PrecedenceMerge { .. } => {}
        }
        defined.insert(rule.output());
    }
    if !defined.contains("out") {
        return Err(err("no rule writes the `out` slot".into()));
    }
    if let Some(c) = target.codes().find(|c| *c != 0 && !produced.contains(c)) {
        return Err(err(format!("target code {c} is produced by no rule")));
    }
    Ok(())
}

/// REF_8 from PANORAMA + TotalSegmentator volumes using the builtin recipe.
pub fn build_ref8(panorama: &LabelVolume, ts: &LabelVolume) -> Result<LabelVolume> {
    RecipeBook::builtin().build_ref8(panorama, ts).map(|h| h.volume)
}

/// ALL_45 from PANORAMA + TotalSegmentator volumes using the builtin recipe.
pub fn build_all45(panorama: &LabelVolume, ts: &LabelVolume) -> Result<LabelVolume> {
    RecipeBook::builtin().build_all45(panorama, ts).map(|h| h.volume)
}
