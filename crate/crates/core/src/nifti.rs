//! NIfTI-1 single-file (`.nii`, `.nii.gz`) reading and writing for label volumes.
//!
//! Only integer label datatypes are handled (uint8, int16, uint16, int32).
//! Orientation is reduced at load time to an axis permutation plus flips so the
//! returned grid is axis-aligned with positive spacing in NIfTI world
//! coordinates. When both are present, the sform wins over the qform. Oblique
//! affines are rejected.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::volume::{GridSpec, Label, LabelVolume};

pub const HEADER_SIZE: usize = 348;
/// Header plus the 4-byte extension flag.
pub const DEFAULT_VOX_OFFSET: usize = 352;
pub const MAGIC_SINGLE: &[u8; 4] = b"n+1\0";
pub const MAGIC_PAIR: &[u8; 4] = b"ni1\0";
const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

/// Off-axis matrix entries up to this fraction of the axis entry are treated as zero.
const AXIS_TOL: f64 = 1e-4;

mod offset {
    pub const SIZEOF_HDR: usize = 0;
    pub const DIM: usize = 40;
    pub const DATATYPE: usize = 70;
    pub const BITPIX: usize = 72;
    pub const PIXDIM: usize = 76;
    pub const VOX_OFFSET: usize = 108;
    pub const SCL_SLOPE: usize = 112;
    pub const SCL_INTER: usize = 116;
    pub const XYZT_UNITS: usize = 123;
    pub const DESCRIP: usize = 148;
    pub const QFORM_CODE: usize = 252;
    pub const SFORM_CODE: usize = 254;
    pub const QUATERN_B: usize = 256;
    pub const QOFFSET_X: usize = 268;
    pub const SROW_X: usize = 280;
    pub const MAGIC: usize = 344;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NiftiDatatype {
    Uint8,
    Int16,
    Uint16,
    Int32,
}

impl NiftiDatatype {
    pub const ALL: [NiftiDatatype; 4] = [
        NiftiDatatype::Uint8,
        NiftiDatatype::Int16,
        NiftiDatatype::Uint16,
        NiftiDatatype::Int32,
    ];

    pub fn code(self) -> i16 {
        match self {
            NiftiDatatype::Uint8 => 2,
            NiftiDatatype::Int16 => 4,
            NiftiDatatype::Int32 => 8,
            NiftiDatatype::Uint16 => 512,
        }
    }

    pub fn from_code(code: i16) -> Result<Self> {
        match code {
            2 => Ok(NiftiDatatype::Uint8),
            4 => Ok(NiftiDatatype::Int16),
            8 => Ok(NiftiDatatype::Int32),
            512 => Ok(NiftiDatatype::Uint16),
            other => Err(Error::UnsupportedDatatype(other)),
        }
    }

    pub fn bitpix(self) -> i16 {
        (self.bytes() * 8) as i16
    }

    pub fn bytes(self) -> usize {
        match self {
            NiftiDatatype::Uint8 => 1,
            NiftiDatatype::Int16 | NiftiDatatype::Uint16 => 2,
            NiftiDatatype::Int32 => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NiftiDatatype::Uint8 => "uint8",
            NiftiDatatype::Int16 => "int16",
            NiftiDatatype::Uint16 => "uint16",
            NiftiDatatype::Int32 => "int32",
        }
    }

    pub fn max_code(self) -> Label {
        match self {
            NiftiDatatype::Uint8 => u8::MAX as Label,
            NiftiDatatype::Int16 => i16::MAX as Label,
            NiftiDatatype::Uint16 => u16::MAX as Label,
            NiftiDatatype::Int32 => i32::MAX as Label,
        }
    }

    /// uint8 when every code fits, otherwise uint16.
    pub fn for_max_code(max: Label) -> Self {
        if max <= u8::MAX as Label {
            NiftiDatatype::Uint8
        } else {
            NiftiDatatype::Uint16
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endian {
    Little,
    Big,
}

/// The header fields needed to decode a label volume and recover its geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeaderSubset {
    pub endian: Endian,
    pub dim: [i16; 8],
    pub datatype: NiftiDatatype,
    pub bitpix: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub qform_code: i16,
    pub sform_code: i16,
    pub quatern: [f32; 3],
    pub qoffset: [f32; 3],
    pub srow: [[f32; 4]; 3],
    pub magic: [u8; 4],
}

struct Cursor<'a> {
    bytes: &'a [u8],
    endian: Endian,
}

impl Cursor<'_> {
    fn raw<const N: usize>(&self, at: usize) -> [u8; N] {
        let mut b = [0u8; N];
        b.copy_from_slice(&self.bytes[at..at + N]);
        b
    }

    fn i16(&self, at: usize) -> i16 {
        match self.endian {
            Endian::Little => i16::from_le_bytes(self.raw(at)),
            Endian::Big => i16::from_be_bytes(self.raw(at)),
        }
    }

    fn f32(&self, at: usize) -> f32 {
        match self.endian {
            Endian::Little => f32::from_le_bytes(self.raw(at)),
            Endian::Big => f32::from_be_bytes(self.raw(at)),
        }
    }
}

impl NiftiHeaderSubset {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_SIZE {
            return Err(Error::MalformedHeader(format!(
                "{} bytes, expected at least {HEADER_SIZE}",
                bytes.len()
            )));
        }
        let sizeof: [u8; 4] = bytes[offset::SIZEOF_HDR..4].try_into().unwrap();
        let endian = if i32::from_le_bytes(sizeof) == HEADER_SIZE as i32 {
            Endian::Little
        } else if i32::from_be_bytes(sizeof) == HEADER_SIZE as i32 {
            Endian::Big
        } else {
            return Err(Error::MalformedHeader("sizeof_hdr is not 348".into()));
        };
        let c = Cursor { bytes, endian };

        let magic: [u8; 4] = c.raw(offset::MAGIC);
        if &magic != MAGIC_SINGLE && &magic != MAGIC_PAIR {
            return Err(Error::MalformedHeader(format!("bad magic {magic:?}")));
        }

        let mut dim = [0i16; 8];
        for (i, d) in dim.iter_mut().enumerate() {
            *d = c.i16(offset::DIM + 2 * i);
        }
        let mut pixdim = [0f32; 8];
        for (i, p) in pixdim.iter_mut().enumerate() {
            *p = c.f32(offset::PIXDIM + 4 * i);
        }
        let datatype = NiftiDatatype::from_code(c.i16(offset::DATATYPE))?;
        let bitpix = c.i16(offset::BITPIX);
        if bitpix != datatype.bitpix() {
            return Err(Error::MalformedHeader(format!(
                "bitpix {bitpix} inconsistent with {}",
                datatype.name()
            )));
        }
        let mut srow = [[0f32; 4]; 3];
        for (r, row) in srow.iter_mut().enumerate() {
            for (k, v) in row.iter_mut().enumerate() {
                *v = c.f32(offset::SROW_X + 16 * r + 4 * k);
            }
        }
        let f3 = |at: usize| [c.f32(at), c.f32(at + 4), c.f32(at + 8)];
        let header = NiftiHeaderSubset {
            endian,
            dim,
            datatype,
            bitpix,
            pixdim,
            vox_offset: c.f32(offset::VOX_OFFSET),
            scl_slope: c.f32(offset::SCL_SLOPE),
            scl_inter: c.f32(offset::SCL_INTER),
            qform_code: c.i16(offset::QFORM_CODE),
            sform_code: c.i16(offset::SFORM_CODE),
            quatern: f3(offset::QUATERN_B),
            qoffset: f3(offset::QOFFSET_X),
            srow,
            magic,
        };
        header.check()?;
        Ok(header)
    }

    fn check(&self) -> Result<()> {
        let ndim = self.dim[0];
        if !(1..=7).contains(&ndim) {
            return Err(Error::MalformedHeader(format!("dim[0] = {ndim}")));
        }
        for i in 1..=ndim as usize {
            if self.dim[i] < 1 {
                return Err(Error::MalformedHeader(format!("dim[{i}] = {}", self.dim[i])));
            }
            if i > 3 && self.dim[i] != 1 {
                return Err(Error::MalformedHeader(format!(
                    "only 3D label volumes are supported, dim[{i}] = {}",
                    self.dim[i]
                )));
            }
        }
        let slope_ok = self.scl_slope == 0.0 || self.scl_slope == 1.0;
        if !slope_ok || self.scl_inter != 0.0 {
            return Err(Error::NonIdentityScaling {
                slope: self.scl_slope,
                inter: self.scl_inter,
            });
        }
        if &self.magic == MAGIC_SINGLE && self.vox_offset < DEFAULT_VOX_OFFSET as f32 {
            return Err(Error::MalformedHeader(format!(
                "vox_offset {} below {DEFAULT_VOX_OFFSET}",
                self.vox_offset
            )));
        }
        Ok(())
    }

    /// Voxel counts along the three spatial axes.
    pub fn dims3(&self) -> [usize; 3] {
        let ndim = self.dim[0] as usize;
        let mut out = [1usize; 3];
        for (i, o) in out.iter_mut().enumerate() {
            if i < ndim {
                *o = self.dim[i + 1] as usize;
            }
        }
        out
    }

    /// Voxel-to-world affine as a 3x3 matrix (columns are voxel axes) plus translation.
    pub fn affine(&self) -> ([[f64; 3]; 3], [f64; 3]) {
        if self.sform_code > 0 {
            let mut m = [[0.0; 3]; 3];
            let mut t = [0.0; 3];
            for (r, row) in m.iter_mut().enumerate() {
                for (k, v) in row.iter_mut().enumerate() {
                    *v = self.srow[r][k] as f64;
                }
                t[r] = self.srow[r][3] as f64;
            }
            (m, t)
        } else if self.qform_code > 0 {
            let [b, c, d] = self.quatern.map(|v| v as f64);
            let a = (1.0 - (b * b + c * c + d * d)).max(0.0).sqrt();
            let rot = [
                [a * a + b * b - c * c - d * d, 2.0 * (b * c - a * d), 2.0 * (b * d + a * c)],
                [2.0 * (b * c + a * d), a * a + c * c - b * b - d * d, 2.0 * (c * d - a * b)],
                [2.0 * (b * d - a * c), 2.0 * (c * d + a * b), a * a + d * d - c * c - b * b],
            ];
            let qfac = if self.pixdim[0] < 0.0 { -1.0 } else { 1.0 };
            let scale = [
                self.pixdim[1] as f64,
                self.pixdim[2] as f64,
                qfac * self.pixdim[3] as f64,
            ];
            let mut m = [[0.0; 3]; 3];
            for r in 0..3 {
                for k in 0..3 {
                    m[r][k] = rot[r][k] * scale[k];
                }
            }
            (m, self.qoffset.map(|v| v as f64))
        } else {
            let mut m = [[0.0; 3]; 3];
            for (k, row) in m.iter_mut().enumerate() {
                row[k] = self.pixdim[k + 1] as f64;
            }
            (m, [0.0; 3])
        }
    }
}

/// For each world axis: source voxel axis, whether it runs backwards, spacing.
struct Reorientation {
    axis: [usize; 3],
    flip: [bool; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
}

fn reorientation(m: &[[f64; 3]; 3], t: &[f64; 3], dims: &[usize; 3]) -> Result<Reorientation> {
    let mut axis = [usize::MAX; 3];
    let mut flip = [false; 3];
    let mut spacing = [0.0; 3];
    let mut origin = *t;
    for k in 0..3 {
        let col = [m[0][k], m[1][k], m[2][k]];
        let (row, big) = col
            .iter()
            .enumerate()
            .map(|(r, v)| (r, v.abs()))
            .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if big.is_nan() || big <= 0.0 || !big.is_finite() {
            return Err(Error::MalformedHeader(format!("degenerate affine column {k}")));
        }
        if col
            .iter()
            .enumerate()
            .any(|(r, v)| r != row && v.abs() > AXIS_TOL * big)
        {
            return Err(Error::ObliqueOrientation(format!("affine column {k} = {col:?}")));
        }
        if axis[row] != usize::MAX {
            return Err(Error::ObliqueOrientation(format!(
                "voxel axes {} and {k} both map to world axis {row}",
                axis[row]
            )));
        }
        axis[row] = k;
        spacing[row] = big;
        if col[row] < 0.0 {
            flip[row] = true;
            origin[row] += col[row] * (dims[k] as f64 - 1.0);
        }
    }
    Ok(Reorientation {
        axis,
        flip,
        spacing,
        origin,
    })
}

fn decode_values(payload: &[u8], datatype: NiftiDatatype, endian: Endian) -> Result<Vec<Label>> {
    let n = payload.len() / datatype.bytes();
    let mut out = Vec::with_capacity(n);
    macro_rules! decode {
        ($t:ty, $w:expr) => {
            for chunk in payload.chunks_exact($w) {
                let raw: [u8; $w] = chunk.try_into().unwrap();
                let v = match endian {
                    Endian::Little => <$t>::from_le_bytes(raw),
                    Endian::Big => <$t>::from_be_bytes(raw),
                } as i64;
                if v < 0 {
                    return Err(Error::NegativeLabel(v));
                }
                out.push(v as Label);
            }
        };
    }
    match datatype {
        NiftiDatatype::Uint8 => out.extend(payload.iter().map(|&b| b as Label)),
        NiftiDatatype::Int16 => decode!(i16, 2),
        NiftiDatatype::Uint16 => decode!(u16, 2),
        NiftiDatatype::Int32 => decode!(i32, 4),
    }
    Ok(out)
}

fn maybe_gunzip(bytes: Vec<u8>) -> Result<Vec<u8>> {
    if bytes.starts_with(&GZIP_MAGIC) {
        let mut out = Vec::new();
        MultiGzDecoder::new(bytes.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::MalformedHeader(format!("gzip: {e}")))?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    maybe_gunzip(raw)
}

/// Image file paired with a `.hdr` header (`ni1` magic).
fn pair_image_path(path: &Path) -> Option<PathBuf> {
    let name = path.file_name()?.to_string_lossy().into_owned();
    let stem = name.strip_suffix(".hdr.gz").or_else(|| name.strip_suffix(".hdr"))?;
    [".img", ".img.gz"]
        .iter()
        .map(|ext| path.with_file_name(format!("{stem}{ext}")))
        .find(|p| p.exists())
}

/// Decodes an in-memory single-file NIfTI-1 image (plain or gzip).
pub fn decode_label_volume(bytes: &[u8]) -> Result<(LabelVolume, NiftiHeaderSubset)> {
    let bytes = maybe_gunzip(bytes.to_vec())?;
    let header = NiftiHeaderSubset::parse(&bytes)?;
    if &header.magic != MAGIC_SINGLE {
        return Err(Error::MalformedHeader(
            "header/image pair cannot be decoded from a single buffer".into(),
        ));
    }
    let start = header.vox_offset as usize;
    assemble(&bytes[start.min(bytes.len())..], header)
}

pub fn read_label_volume(path: impl AsRef<Path>) -> Result<(LabelVolume, NiftiHeaderSubset)> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let header = NiftiHeaderSubset::parse(&bytes)?;
    if &header.magic == MAGIC_SINGLE {
        let start = header.vox_offset as usize;
        assemble(&bytes[start.min(bytes.len())..], header)
    } else {
        let img = pair_image_path(path).ok_or_else(|| {
            Error::MalformedHeader(format!("{}: no matching .img file", path.display()))
        })?;
        let data = read_bytes(&img)?;
        let start = header.vox_offset as usize;
        assemble(&data[start.min(data.len())..], header)
    }
}

fn assemble(payload: &[u8], header: NiftiHeaderSubset) -> Result<(LabelVolume, NiftiHeaderSubset)> {
    let dims = header.dims3();
    let n = dims[0] * dims[1] * dims[2];
    let need = n * header.datatype.bytes();
    if payload.len() < need {
        return Err(Error::MalformedHeader(format!(
            "payload has {} bytes, expected {need}",
            payload.len()
        )));
    }
    let raw = decode_values(&payload[..need], header.datatype, header.endian)?;

    let (m, t) = header.affine();
    let ro = reorientation(&m, &t, &dims)?;
    let out_dims = [dims[ro.axis[0]], dims[ro.axis[1]], dims[ro.axis[2]]];
    let grid = GridSpec::new(out_dims, ro.spacing, ro.origin)?;

    let identity = ro.axis == [0, 1, 2] && ro.flip == [false; 3];
    let voxels = if identity {
        raw
    } else {
        let src_stride = [1, dims[0], dims[0] * dims[1]];
        let mut out = Vec::with_capacity(n);
        for z in 0..out_dims[2] {
            for y in 0..out_dims[1] {
                for x in 0..out_dims[0] {
                    let mut src = 0;
                    for (w, &o) in [x, y, z].iter().enumerate() {
                        let i = if ro.flip[w] { out_dims[w] - 1 - o } else { o };
                        src += i * src_stride[ro.axis[w]];
                    }
                    out.push(raw[src]);
                }
            }
        }
        out
    };
    Ok((LabelVolume::new(grid, voxels)?, header))
}

/// Serializes a volume as an uncompressed single-file NIfTI-1 image.
pub fn encode_label_volume(vol: &LabelVolume, datatype: NiftiDatatype) -> Result<Vec<u8>> {
    let max = vol.max_code();
    if max > datatype.max_code() {
        return Err(Error::CodeOverflow {
            code: max,
            datatype: datatype.name(),
        });
    }
    let grid = vol.grid();
    for d in grid.dims {
        if d > i16::MAX as usize {
            return Err(Error::InvalidGrid(format!("dimension {d} exceeds NIfTI-1 limit")));
        }
    }
    let mut h = vec![0u8; DEFAULT_VOX_OFFSET];
    let put_i16 = |h: &mut Vec<u8>, at: usize, v: i16| h[at..at + 2].copy_from_slice(&v.to_le_bytes());
    let put_f32 = |h: &mut Vec<u8>, at: usize, v: f32| h[at..at + 4].copy_from_slice(&v.to_le_bytes());

    h[0..4].copy_from_slice(&(HEADER_SIZE as i32).to_le_bytes());
    let dim = [3, grid.dims[0] as i16, grid.dims[1] as i16, grid.dims[2] as i16, 1, 1, 1, 1];
    for (i, d) in dim.iter().enumerate() {
        put_i16(&mut h, offset::DIM + 2 * i, *d);
    }
    put_i16(&mut h, offset::DATATYPE, datatype.code());
    put_i16(&mut h, offset::BITPIX, datatype.bitpix());
    let pixdim = [1.0, grid.spacing[0], grid.spacing[1], grid.spacing[2], 0.0, 0.0, 0.0, 0.0];
    for (i, p) in pixdim.iter().enumerate() {
        put_f32(&mut h, offset::PIXDIM + 4 * i, *p as f32);
    }
    put_f32(&mut h, offset::VOX_OFFSET, DEFAULT_VOX_OFFSET as f32);
    put_f32(&mut h, offset::SCL_SLOPE, 1.0);
    put_f32(&mut h, offset::SCL_INTER, 0.0);
    h[offset::XYZT_UNITS] = 2; // mm
    let descrip = b"pancstudy label volume";
    h[offset::DESCRIP..offset::DESCRIP + descrip.len()].copy_from_slice(descrip);
    put_i16(&mut h, offset::QFORM_CODE, 1);
    put_i16(&mut h, offset::SFORM_CODE, 1);
    for k in 0..3 {
        put_f32(&mut h, offset::QOFFSET_X + 4 * k, grid.origin[k] as f32);
        for c in 0..4 {
            let v = if c == k {
                grid.spacing[k]
            } else if c == 3 {
                grid.origin[k]
            } else {
                0.0
            };
            put_f32(&mut h, offset::SROW_X + 16 * k + 4 * c, v as f32);
        }
    }
    h[offset::MAGIC..offset::MAGIC + 4].copy_from_slice(MAGIC_SINGLE);

    h.reserve(vol.voxels().len() * datatype.bytes());
    match datatype {
        NiftiDatatype::Uint8 => h.extend(vol.voxels().iter().map(|&v| v as u8)),
        NiftiDatatype::Int16 => {
            for &v in vol.voxels() {
                h.extend_from_slice(&(v as i16).to_le_bytes());
            }
        }
        NiftiDatatype::Uint16 => {
            for &v in vol.voxels() {
                h.extend_from_slice(&(v as u16).to_le_bytes());
            }
        }
        NiftiDatatype::Int32 => {
            for &v in vol.voxels() {
                h.extend_from_slice(&(v as i32).to_le_bytes());
            }
        }
    }
    Ok(h)
}

fn is_gz_path(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("gz"))
}

/// Writes `.nii` or `.nii.gz` (chosen by extension). The gzip stream carries
/// no timestamp, so identical volumes produce identical bytes.
pub fn write_label_volume(
    vol: &LabelVolume,
    path: impl AsRef<Path>,
    datatype: NiftiDatatype,
) -> Result<()> {
    let path = path.as_ref();
    let plain = encode_label_volume(vol, datatype)?;
    let bytes = if is_gz_path(path) {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&plain).map_err(|e| Error::io(path, e))?;
        enc.finish().map_err(|e| Error::io(path, e))?
    } else {
        plain
    };
    crate::fsutil::write_atomic(path, &bytes)
}

/// Writes with uint8 when every code is below 256, else uint16.
pub fn write_label_volume_auto(vol: &LabelVolume, path: impl AsRef<Path>) -> Result<()> {
    write_label_volume(vol, path, NiftiDatatype::for_max_code(vol.max_code()))
}
