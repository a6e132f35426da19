//! Volumetric data model shared by every other module.
//!
//! Voxels are stored densely with x varying fastest, then y, then z:
//! `index = x + nx * (y + ny * z)`. All I/O converts into this layout.
//! Grids are axis-aligned; the world coordinate of voxel `i` along axis `a`
//! is `origin[a] + i * spacing[a]` (voxel centers, millimetres).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scheme::LabelScheme;

/// Integer label code. 0 is background in every scheme.
pub type Label = u32;

/// Default relative tolerance for [`grids_compatible`].
pub const DEFAULT_REL_TOL: f64 = 1e-3;

/// Tolerance used when deciding that two voxel centers are equidistant.
const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl GridSpec {
    /// Builds a grid after checking positive dims and positive finite spacing.
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        let grid = GridSpec {
            dims,
            spacing,
            origin,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Unit spacing, zero origin.
    pub fn unit(dims: [usize; 3]) -> Result<Self> {
        Self::new(dims, [1.0; 3], [0.0; 3])
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::InvalidGrid(format!("zero dimension in {:?}", self.dims)));
        }
        if self.spacing.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::InvalidGrid(format!(
                "spacing must be positive and finite, got {:?}",
                self.spacing
            )));
        }
        if self.origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "origin must be finite, got {:?}",
                self.origin
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    /// World position (mm) of a voxel center.
    pub fn world(&self, ijk: [usize; 3]) -> [f64; 3] {
        [
            self.origin[0] + ijk[0] as f64 * self.spacing[0],
            self.origin[1] + ijk[1] as f64 * self.spacing[1],
            self.origin[2] + ijk[2] as f64 * self.spacing[2],
        ]
    }

    /// Length in mm of the diagonal between the first and last voxel centers.
    pub fn diagonal_mm(&self) -> f64 {
        (0..3)
            .map(|a| ((self.dims[a] - 1) as f64 * self.spacing[a]).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// A dense 3D grid of label codes. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    grid: GridSpec,
    voxels: Vec<Label>,
}

impl LabelVolume {
    pub fn new(grid: GridSpec, voxels: Vec<Label>) -> Result<Self> {
        grid.validate()?;
        if voxels.len() != grid.len() {
            return Err(Error::VoxelCount {
                expected: grid.len(),
                actual: voxels.len(),
            });
        }
        Ok(LabelVolume { grid, voxels })
    }

    /// All-background volume.
    pub fn zeros(grid: GridSpec) -> Result<Self> {
        let n = grid.len();
        Self::new(grid, vec![0; n])
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims
    }

    pub fn voxels(&self) -> &[Label] {
        &self.voxels
    }

    pub fn into_voxels(self) -> Vec<Label> {
        self.voxels
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> Label {
        self.voxels[self.grid.index(x, y, z)]
    }

    pub fn max_code(&self) -> Label {
        self.voxels.iter().copied().max().unwrap_or(0)
    }

    pub fn count(&self, code: Label) -> usize {
        self.voxels.iter().filter(|&&v| v == code).count()
    }

    /// Voxel count per code present in the volume.
    pub fn histogram(&self) -> BTreeMap<Label, usize> {
        let mut counts = BTreeMap::new();
        for &v in &self.voxels {
            *counts.entry(v).or_insert(0) += 1;
        }
        counts
    }

    /// Builds a volume with the same grid and new voxel data.
    pub(crate) fn with_voxels(&self, voxels: Vec<Label>) -> Self {
        debug_assert_eq!(voxels.len(), self.voxels.len());
        LabelVolume {
            grid: self.grid,
            voxels,
        }
    }
}

/// Outcome of [`validate_against_scheme`]. Validation failure is data, not an error.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct ValidationReport {
    /// Codes not present in the scheme, with their voxel counts, sorted by code.
    pub offending: Vec<(Label, usize)>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.offending.is_empty()
    }
}

pub fn validate_against_scheme(vol: &LabelVolume, scheme: &LabelScheme) -> ValidationReport {
    let offending = vol
        .histogram()
        .into_iter()
        .filter(|(code, _)| !scheme.contains(*code))
        .collect();
    ValidationReport { offending }
}

/// Dims must match exactly; spacing within `rel_tol` relative, origin within
/// `rel_tol * spacing` absolute.
pub fn grids_compatible(a: &GridSpec, b: &GridSpec, rel_tol: f64) -> bool {
    if a.dims != b.dims {
        return false;
    }
    (0..3).all(|i| {
        let (sa, sb) = (a.spacing[i], b.spacing[i]);
        let scale = sa.abs().max(sb.abs());
        (sa - sb).abs() <= rel_tol * scale
            && (a.origin[i] - b.origin[i]).abs() <= rel_tol * scale
    })
}

pub(crate) fn ensure_compatible(a: &GridSpec, b: &GridSpec, rel_tol: f64) -> Result<()> {
    if grids_compatible(a, b, rel_tol) {
        Ok(())
    } else {
        Err(Error::IncompatibleGrids(format!(
            "dims {:?}/{:?}, spacing {:?}/{:?}, origin {:?}/{:?}",
            a.dims, b.dims, a.spacing, b.spacing, a.origin, b.origin
        )))
    }
}

/// For each target index along one axis, the nearest source index.
/// Exact ties go to the lower index; points outside clamp to the edge voxel.
fn nearest_lookup(src_origin: f64, src_spacing: f64, src_n: usize, tgt_origin: f64, tgt_spacing: f64, tgt_n: usize) -> Vec<usize> {
    (0..tgt_n)
        .map(|t| {
            let world = tgt_origin + t as f64 * tgt_spacing;
            let s = (world - src_origin) / src_spacing;
            let idx = (s - 0.5 - TIE_EPS).ceil();
            idx.clamp(0.0, (src_n - 1) as f64) as usize
        })
        .collect()
}

/// Nearest-neighbour resampling of a label volume onto `target`.
///
/// The nearest center in 3D is the nearest center per axis on an axis-aligned
/// grid, so the lookup is separable.
pub fn resample_nearest(vol: &LabelVolume, target: &GridSpec) -> Result<LabelVolume> {
    target.validate()?;
    let src = vol.grid();
    let lookups: Vec<Vec<usize>> = (0..3)
        .map(|a| {
            nearest_lookup(
                src.origin[a],
                src.spacing[a],
                src.dims[a],
                target.origin[a],
                target.spacing[a],
                target.dims[a],
            )
        })
        .collect();
    let mut out = Vec::with_capacity(target.len());
    for &sz in &lookups[2] {
        for &sy in &lookups[1] {
            let row = src.index(0, sy, sz);
            out.extend(lookups[0].iter().map(|&sx| vol.voxels[row + sx]));
        }
    }
    LabelVolume::new(*target, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::Schemes;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn vol(dims: [usize; 3], voxels: Vec<Label>) -> LabelVolume {
        LabelVolume::new(GridSpec::unit(dims).unwrap(), voxels).unwrap()
    }

    #[test]
    fn rejects_bad_voxel_count_and_spacing() {
        let grid = GridSpec::unit([2, 2, 2]).unwrap();
        assert!(matches!(
            LabelVolume::new(grid, vec![0; 7]),
            Err(Error::VoxelCount { expected: 8, actual: 7 })
        ));
        assert!(GridSpec::new([2, 2, 2], [1.0, 0.0, 1.0], [0.0; 3]).is_err());
        assert!(GridSpec::new([2, 2, 2], [1.0, f64::NAN, 1.0], [0.0; 3]).is_err());
        assert!(GridSpec::new([0, 2, 2], [1.0; 3], [0.0; 3]).is_err());
    }

    #[test]
    fn linearization_is_x_fastest() {
        let g = GridSpec::unit([3, 4, 5]).unwrap();
        assert_eq!(g.index(1, 0, 0), 1);
        assert_eq!(g.index(0, 1, 0), 3);
        assert_eq!(g.index(0, 0, 1), 12);
        assert_eq!(g.coords(g.index(2, 3, 4)), [2, 3, 4]);
    }

    #[test]
    fn validation_against_schemes() {
        let schemes = Schemes::builtin();
        assert!(validate_against_scheme(&vol([2, 2, 2], vec![0; 8]), schemes.ref8()).is_ok());

        let mut v = vec![0; 8];
        v[3] = 44;
        assert!(validate_against_scheme(&vol([2, 2, 2], v), schemes.ref8()).is_ok());

        let mut v = vec![0; 27];
        for i in [1, 5, 9, 26] {
            v[i] = 99;
        }
        v[4] = 12;
        let report = validate_against_scheme(&vol([3, 3, 3], v.clone()), schemes.all45());
        let expected = v.iter().filter(|&&c| c == 99).count();
        assert_eq!(report.offending, vec![(99, expected)]);
        assert!(!report.is_ok());
    }

    #[test]
    fn grid_compatibility() {
        let a = GridSpec::unit([10, 10, 10]).unwrap();
        assert!(grids_compatible(&a, &a, DEFAULT_REL_TOL));
        let b = GridSpec::new([10, 10, 10], [1.0005, 1.0, 1.0], [0.0; 3]).unwrap();
        assert!(grids_compatible(&a, &b, 1e-3));
        let c = GridSpec::unit([10, 10, 11]).unwrap();
        assert!(!grids_compatible(&a, &c, 1e-3));
        let d = GridSpec::new([10, 10, 10], [1.0; 3], [0.01, 0.0, 0.0]).unwrap();
        assert!(!grids_compatible(&a, &d, 1e-3));
    }

    #[test]
    fn resample_identity() {
        let v = vol([3, 2, 2], (0..12).collect());
        let out = resample_nearest(&v, v.grid()).unwrap();
        assert_eq!(out, v);
    }

    #[test]
    fn resample_upsample_two_voxels() {
        let v = vol([2, 1, 1], vec![5, 7]);
        let target = GridSpec::new([4, 1, 1], [0.5, 0.5, 0.5], [0.0; 3]).unwrap();
        let out = resample_nearest(&v, &target).unwrap();
        assert_eq!(out.voxels(), &[5, 5, 7, 7]);
    }

    #[test]
    fn resample_rejects_non_finite_spacing() {
        let v = vol([2, 1, 1], vec![5, 7]);
        let target = GridSpec {
            dims: [2, 1, 1],
            spacing: [f64::INFINITY, 1.0, 1.0],
            origin: [0.0; 3],
        };
        assert!(resample_nearest(&v, &target).is_err());
    }

    fn arb_volume() -> impl Strategy<Value = LabelVolume> {
        (1usize..6, 1usize..6, 1usize..6, 0.3f64..3.0, 0.3f64..3.0, 0.3f64..3.0)
            .prop_flat_map(|(nx, ny, nz, sx, sy, sz)| {
                proptest::collection::vec(0u32..6, nx * ny * nz).prop_map(move |vox| {
                    LabelVolume::new(
                        GridSpec::new([nx, ny, nz], [sx, sy, sz], [0.0; 3]).unwrap(),
                        vox,
                    )
                    .unwrap()
                })
            })
    }

    proptest! {
        #[test]
        fn resample_never_invents_codes(
            v in arb_volume(),
            dims in (1usize..8, 1usize..8, 1usize..8),
            spacing in (0.2f64..4.0, 0.2f64..4.0, 0.2f64..4.0),
            origin in (-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0),
        ) {
            let target = GridSpec::new(
                [dims.0, dims.1, dims.2],
                [spacing.0, spacing.1, spacing.2],
                [origin.0, origin.1, origin.2],
            ).unwrap();
            let out = resample_nearest(&v, &target).unwrap();
            let input: BTreeSet<_> = v.voxels().iter().copied().collect();
            prop_assert!(out.voxels().iter().all(|c| input.contains(c)));
        }

        #[test]
        fn resample_up_then_down_round_trips(v in arb_volume(), factor in 1usize..4) {
            let g = *v.grid();
            let f = factor as f64;
            let fine = GridSpec::new(
                [g.dims[0] * factor, g.dims[1] * factor, g.dims[2] * factor],
                [g.spacing[0] / f, g.spacing[1] / f, g.spacing[2] / f],
                g.origin,
            ).unwrap();
            let up = resample_nearest(&v, &fine).unwrap();
            let down = resample_nearest(&up, &g).unwrap();
            prop_assert_eq!(down, v);
        }
    }
}
