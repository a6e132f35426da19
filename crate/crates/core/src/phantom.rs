//! Synthetic label phantoms with analytically predictable metrics.
//!
//! Randomness comes from `ChaCha8Rng` (rand_chacha 0.9). A phantom seeds it
//! with `seed_from_u64(seed)`; study case `i` additionally selects stream `i`
//! via `set_stream(i)`, so cases can be generated in any order.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{write_manifest, CaseRecord};
use crate::error::{Error, Result};
use crate::nifti::write_label_volume_auto;
use crate::scheme::{AMOS_PANCREAS, PANCREAS, TS_AORTA};
use crate::volume::{GridSpec, Label, LabelVolume};

const MEMBERSHIP_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// Axis-aligned box; `radii_mm` are half-extents.
    Cuboid,
    Ellipsoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    #[default]
    None,
    /// Translate by whole voxels per axis.
    Shift { voxels: [i64; 3] },
    /// `radius` rounds of 6-neighbour dilation.
    Dilate { radius: usize },
    /// `radius` rounds of 6-neighbour erosion.
    Erode { radius: usize },
    /// Remove the organ with the given probability.
    Drop { probability: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Organ {
    pub code: Label,
    pub shape: Shape,
    pub center_mm: [f64; 3],
    pub radii_mm: [f64; 3],
    #[serde(default)]
    pub perturbation: Perturbation,
}

impl Organ {
    fn contains(&self, p: [f64; 3]) -> bool {
        let d: Vec<f64> = (0..3).map(|a| p[a] - self.center_mm[a]).collect();
        match self.shape {
            Shape::Cuboid => (0..3).all(|a| d[a].abs() <= self.radii_mm[a] + MEMBERSHIP_EPS),
            Shape::Ellipsoid => {
                (0..3).map(|a| (d[a] / self.radii_mm[a]).powi(2)).sum::<f64>()
                    <= 1.0 + MEMBERSHIP_EPS
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub grid: GridSpec,
    #[serde(default)]
    pub seed: u64,
    pub organs: Vec<Organ>,
}

impl PhantomSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: PhantomSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        for (i, o) in self.organs.iter().enumerate() {
            if o.code == 0 {
                return Err(Error::InvalidArgument(format!("organ {i} uses background code 0")));
            }
            if o.radii_mm.iter().any(|r| !r.is_finite() || *r <= 0.0) {
                return Err(Error::InvalidArgument(format!("organ {i} radii must be positive")));
            }
            if o.center_mm.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidArgument(format!("organ {i} center must be finite")));
            }
            if let Perturbation::Drop { probability } = o.perturbation {
                if !(0.0..=1.0).contains(&probability) {
                    return Err(Error::InvalidArgument(format!(
                        "organ {i} drop probability {probability} outside [0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Axis-aligned ellipsoid/box with half-extents `radii_mm` that just
    /// covers `n` voxel centers per axis starting at voxel `start`.
    pub fn box_covering(grid: &GridSpec, start: [usize; 3], n: [usize; 3]) -> ([f64; 3], [f64; 3]) {
        let mut center = [0.0; 3];
        let mut radii = [0.0; 3];
        for a in 0..3 {
            let lo = grid.origin[a] + start[a] as f64 * grid.spacing[a];
            let half = (n[a] as f64 - 1.0) / 2.0 * grid.spacing[a];
            center[a] = lo + half;
            radii[a] = half.max(0.25 * grid.spacing[a]);
        }
        (center, radii)
    }
}

fn warn_if_clipped(grid: &GridSpec, index: usize, organ: &Organ) {
    for a in 0..3 {
        let lo = grid.origin[a];
        let hi = lo + (grid.dims[a] - 1) as f64 * grid.spacing[a];
        if organ.center_mm[a] - organ.radii_mm[a] < lo - 0.5 * grid.spacing[a]
            || organ.center_mm[a] + organ.radii_mm[a] > hi + 0.5 * grid.spacing[a]
        {
            log::warn!("organ {index} (code {}) extends outside the grid and is clipped", organ.code);
            return;
        }
    }
}

/// Per-organ masks by voxel-center membership; a voxel inside several organs
/// belongs to the lowest-indexed one.
fn organ_masks(spec: &PhantomSpec) -> Vec<Vec<bool>> {
    let grid = &spec.grid;
    let mut owner: Vec<Option<usize>> = vec![None; grid.len()];
    for (idx, slot) in owner.iter_mut().enumerate() {
        let p = grid.world(grid.coords(idx));
        *slot = spec.organs.iter().position(|o| o.contains(p));
    }
    (0..spec.organs.len())
        .map(|i| owner.iter().map(|&o| o == Some(i)).collect())
        .collect()
}

fn paint(grid: &GridSpec, layers: &[(Label, Vec<bool>)]) -> Result<LabelVolume> {
    let mut voxels = vec![0; grid.len()];
    for (code, mask) in layers {
        for (v, &m) in voxels.iter_mut().zip(mask) {
            if m && *v == 0 {
                *v = *code;
            }
        }
    }
    LabelVolume::new(*grid, voxels)
}

pub fn rasterize(spec: &PhantomSpec) -> Result<LabelVolume> {
    spec.validate()?;
    for (i, o) in spec.organs.iter().enumerate() {
        warn_if_clipped(&spec.grid, i, o);
    }
    let masks = organ_masks(spec);
    let layers: Vec<(Label, Vec<bool>)> =
        spec.organs.iter().map(|o| o.code).zip(masks).collect();
    paint(&spec.grid, &layers)
}

const NEIGHBOURS: [[i64; 3]; 6] = [
    [1, 0, 0],
    [-1, 0, 0],
    [0, 1, 0],
    [0, -1, 0],
    [0, 0, 1],
    [0, 0, -1],
];

fn offset(grid: &GridSpec, idx: usize, d: [i64; 3]) -> Option<usize> {
    let c = grid.coords(idx);
    let mut out = [0usize; 3];
    for a in 0..3 {
        let v = c[a] as i64 + d[a];
        if v < 0 || v >= grid.dims[a] as i64 {
            return None;
        }
        out[a] = v as usize;
    }
    Some(grid.index(out[0], out[1], out[2]))
}

pub fn shift_mask(grid: &GridSpec, mask: &[bool], voxels: [i64; 3]) -> Vec<bool> {
    let mut out = vec![false; mask.len()];
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        if let Some(j) = offset(grid, i, voxels) {
            out[j] = true;
        }
    }
    out
}

pub fn dilate_mask(grid: &GridSpec, mask: &[bool], radius: usize) -> Vec<bool> {
    let mut cur = mask.to_vec();
    for _ in 0..radius {
        let mut next = cur.clone();
        for (i, _) in cur.iter().enumerate().filter(|(_, &m)| m) {
            for d in NEIGHBOURS {
                if let Some(j) = offset(grid, i, d) {
                    next[j] = true;
                }
            }
        }
        cur = next;
    }
    cur
}

/// Erosion treats voxels outside the grid as background.
pub fn erode_mask(grid: &GridSpec, mask: &[bool], radius: usize) -> Vec<bool> {
    let mut cur = mask.to_vec();
    for _ in 0..radius {
        let next: Vec<bool> = (0..cur.len())
            .map(|i| {
                cur[i]
                    && NEIGHBOURS
                        .iter()
                        .all(|&d| offset(grid, i, d).is_some_and(|j| cur[j]))
            })
            .collect();
        cur = next;
    }
    cur
}

fn perturb(grid: &GridSpec, mask: Vec<bool>, p: Perturbation, rng: &mut ChaCha8Rng) -> Vec<bool> {
    match p {
        Perturbation::None => mask,
        Perturbation::Shift { voxels } => shift_mask(grid, &mask, voxels),
        Perturbation::Dilate { radius } => dilate_mask(grid, &mask, radius),
        Perturbation::Erode { radius } => erode_mask(grid, &mask, radius),
        Perturbation::Drop { probability } => {
            if rng.random::<f64>() < probability {
                vec![false; mask.len()]
            } else {
                mask
            }
        }
    }
}

/// Reference rasterization plus a prediction with every organ's perturbation applied.
pub fn generate(spec: &PhantomSpec) -> Result<(LabelVolume, LabelVolume)> {
    let reference = rasterize(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let layers: Vec<(Label, Vec<bool>)> = spec
        .organs
        .iter()
        .zip(organ_masks(spec))
        .map(|(o, m)| (o.code, perturb(&spec.grid, m, o.perturbation, &mut rng)))
        .collect();
    let prediction = paint(&spec.grid, &layers)?;
    Ok((reference, prediction))
}

/// How one simulated model distorts the target organ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub name: String,
    #[serde(default)]
    pub perturbation: Perturbation,
    /// Extra dilation of 0..=`dilate_jitter` rounds, drawn per case.
    #[serde(default)]
    pub dilate_jitter: usize,
    /// Case indices whose prediction is empty.
    #[serde(default)]
    pub drop_cases: Vec<usize>,
}

impl ModelProfile {
    pub fn exact(name: &str) -> Self {
        ModelProfile {
            name: name.to_owned(),
            perturbation: Perturbation::None,
            dilate_jitter: 0,
            drop_cases: Vec::new(),
        }
    }
}

fn default_target_code() -> Label {
    AMOS_PANCREAS
}

fn default_prediction_code() -> Label {
    PANCREAS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySpec {
    pub n_cases: usize,
    pub base: PhantomSpec,
    pub profiles: Vec<ModelProfile>,
    pub seed: u64,
    /// Organ code evaluated in the reference volumes.
    #[serde(default = "default_target_code")]
    pub target_code: Label,
    /// Code the simulated models write for the target organ.
    #[serde(default = "default_prediction_code")]
    pub prediction_code: Label,
    /// Organ centers move by up to this many mm per axis per case.
    #[serde(default)]
    pub jitter_mm: f64,
}

impl StudySpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: StudySpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.n_cases == 0 {
            return Err(Error::InvalidArgument("n_cases must be at least 1".into()));
        }
        if self.profiles.is_empty() {
            return Err(Error::InvalidArgument("at least one model profile is required".into()));
        }
        if !self.base.organs.iter().any(|o| o.code == self.target_code) {
            return Err(Error::InvalidArgument(format!(
                "no organ with target code {}",
                self.target_code
            )));
        }
        for (i, p) in self.profiles.iter().enumerate() {
            if p.name.is_empty() || self.profiles[..i].iter().any(|q| q.name == p.name) {
                return Err(Error::InvalidArgument(format!("bad or duplicate profile name {:?}", p.name)));
            }
        }
        if !self.jitter_mm.is_finite() || self.jitter_mm < 0.0 {
            return Err(Error::InvalidArgument("jitter_mm must be >= 0".into()));
        }
        Ok(())
    }
}

/// One generated case: the reference and one prediction per profile.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyCase {
    pub case_id: String,
    pub reference: LabelVolume,
    pub predictions: Vec<LabelVolume>,
}

pub fn case_id(index: usize) -> String {
    format!("case_{index:04}")
}

/// Generates case `index` of a study in memory.
pub fn generate_case(spec: &StudySpec, index: usize) -> Result<StudyCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);

    let mut phantom = spec.base.clone();
    for organ in &mut phantom.organs {
        for c in &mut organ.center_mm {
            *c += rng.random_range(-1.0..=1.0) * spec.jitter_mm;
        }
    }
    let reference = rasterize(&phantom)?;
    let target = phantom
        .organs
        .iter()
        .position(|o| o.code == spec.target_code)
        .expect("validated target organ");
    let target_mask = organ_masks(&phantom).swap_remove(target);

    let mut predictions = Vec::with_capacity(spec.profiles.len());
    for profile in &spec.profiles {
        let extra = if profile.dilate_jitter > 0 {
            rng.random_range(0..=profile.dilate_jitter)
        } else {
            0
        };
        let mut mask = perturb(&phantom.grid, target_mask.clone(), profile.perturbation, &mut rng);
        mask = dilate_mask(&phantom.grid, &mask, extra);
        if profile.drop_cases.contains(&index) {
            mask.iter_mut().for_each(|m| *m = false);
        }
        predictions.push(paint(&phantom.grid, &[(spec.prediction_code, mask)])?);
    }
    Ok(StudyCase {
        case_id: case_id(index),
        reference,
        predictions,
    })
}

/// Files written by [`generate_study`].
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedStudy {
    pub manifest: PathBuf,
    pub cases: Vec<CaseRecord>,
    /// `(model name, manifest column)` per profile.
    pub models: Vec<(String, String)>,
}

pub fn prediction_column(model: &str) -> String {
    format!("pred_{model}")
}

/// Writes `reference/<case>.nii.gz`, `<model>/<case>.nii.gz` and `manifest.csv`
/// under `out_dir`. Cases are generated in parallel.
pub fn generate_study(spec: &StudySpec, out_dir: impl AsRef<Path>) -> Result<GeneratedStudy> {
    spec.validate()?;
    let out_dir = out_dir.as_ref();
    let mut dirs = vec![out_dir.join("reference")];
    dirs.extend(spec.profiles.iter().map(|p| out_dir.join(&p.name)));
    for d in &dirs {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }

    let cases: Vec<CaseRecord> = (0..spec.n_cases)
        .into_par_iter()
        .map(|i| {
            let case = generate_case(spec, i)?;
            let file = format!("{}.nii.gz", case.case_id);
            let ref_path = dirs[0].join(&file);
            write_label_volume_auto(&case.reference, &ref_path)?;
            let mut paths = vec![("reference".to_owned(), ref_path)];
            for ((profile, dir), vol) in spec.profiles.iter().zip(&dirs[1..]).zip(&case.predictions) {
                let p = dir.join(&file);
                write_label_volume_auto(vol, &p)?;
                paths.push((prediction_column(&profile.name), p));
            }
            Ok(CaseRecord {
                case_id: case.case_id,
                pdac: i % 2 == 0,
                paths,
            })
        })
        .collect::<Result<_>>()?;

    let manifest = out_dir.join("manifest.csv");
    write_manifest(&cases, &manifest, Some(out_dir))?;
    Ok(GeneratedStudy {
        manifest,
        cases,
        models: spec
            .profiles
            .iter()
            .map(|p| (p.name.clone(), prediction_column(&p.name)))
            .collect(),
    })
}

/// A small abdomen: pancreas (target), liver, spleen and a kidney as ellipsoids
/// on an anisotropic grid, in reference-scheme codes.
pub fn default_abdomen(seed: u64) -> PhantomSpec {
    let grid = GridSpec::new([40, 32, 24], [1.5, 1.5, 2.5], [0.0; 3]).expect("valid grid");
    let organ = |code, center_mm, radii_mm| Organ {
        code,
        shape: Shape::Ellipsoid,
        center_mm,
        radii_mm,
        perturbation: Perturbation::None,
    };
    PhantomSpec {
        grid,
        seed,
        organs: vec![
            organ(AMOS_PANCREAS, [30.0, 24.0, 30.0], [12.0, 5.0, 7.0]),
            organ(6, [16.0, 20.0, 28.0], [12.0, 14.0, 18.0]),
            organ(1, [46.0, 30.0, 30.0], [7.0, 7.0, 12.0]),
            organ(2, [44.0, 14.0, 25.0], [5.0, 6.0, 10.0]),
        ],
    }
}

/// A PANORAMA + TS source pair whose arteries and TS aorta overlap in exactly
/// `overlap` voxels, for exercising harmonization.
///
/// PANORAMA codes: 1 PDAC, 2 veins, 3 arteries, 4 pancreas, 5 duct, 6 CBD.
/// The TS volume holds random TS codes outside the arteries block, and inside
/// it only aorta on the chosen overlap voxels.
pub fn harmonization_pair(overlap: usize, seed: u64) -> Result<(LabelVolume, LabelVolume)> {
    let grid = GridSpec::new([24, 20, 16], [0.75, 0.75, 1.5], [0.0; 3])?;
    let mut panorama = vec![0 as Label; grid.len()];
    let blocks: [(Label, [usize; 3], [usize; 3]); 6] = [
        (4, [4, 4, 4], [10, 6, 6]),
        (1, [6, 5, 5], [3, 3, 3]),
        (5, [10, 6, 6], [3, 2, 2]),
        (6, [14, 4, 4], [2, 2, 6]),
        (2, [4, 12, 4], [10, 3, 6]),
        (3, [4, 16, 2], [12, 3, 10]),
    ];
    for (code, start, size) in blocks {
        for z in start[2]..start[2] + size[2] {
            for y in start[1]..start[1] + size[1] {
                for x in start[0]..start[0] + size[0] {
                    panorama[grid.index(x, y, z)] = code;
                }
            }
        }
    }
    let arteries: Vec<usize> = (0..grid.len()).filter(|&i| panorama[i] == 3).collect();
    if overlap > arteries.len() {
        return Err(Error::InvalidArgument(format!(
            "overlap {overlap} exceeds arteries size {}",
            arteries.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = rand::seq::index::sample(&mut rng, arteries.len(), overlap);
    let mut ts = vec![0 as Label; grid.len()];
    for (i, t) in ts.iter_mut().enumerate() {
        if panorama[i] != 3 && rng.random_bool(0.4) {
            *t = rng.random_range(1..=117);
        }
    }
    for i in chosen.iter() {
        ts[arteries[i]] = TS_AORTA;
    }
    Ok((LabelVolume::new(grid, panorama)?, LabelVolume::new(grid, ts)?))
}
