//! NIfTI-1 ingestion.
//!
//! Reads single-file NIfTI-1 volumes (`.nii`, optionally gzip-compressed) into
//! a dense `f32` grid in x-fastest order. Byte order is detected from the
//! `sizeof_hdr` field. Only the spacing part of the orientation metadata is
//! consumed by the pipeline; the qform/sform codes and rows are kept on the
//! header for callers that want them.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::Compression;
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;

/// Size of the fixed NIfTI-1 header.
pub const HEADER_SIZE: usize = 348;
/// Header plus the four extension bytes that precede the payload in `.nii` files.
pub const MIN_FILE_SIZE: usize = 352;
/// Magic for single-file NIfTI-1.
pub const MAGIC_SINGLE_FILE: &[u8; 4] = b"n+1\0";

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

// Field offsets into the 348-byte header.
const OFF_DIM: usize = 40;
const OFF_DATATYPE: usize = 70;
const OFF_BITPIX: usize = 72;
const OFF_PIXDIM: usize = 76;
const OFF_VOX_OFFSET: usize = 108;
const OFF_SCL_SLOPE: usize = 112;
const OFF_SCL_INTER: usize = 116;
const OFF_QFORM_CODE: usize = 252;
const OFF_SFORM_CODE: usize = 254;
const OFF_SROW_X: usize = 280;
const OFF_MAGIC: usize = 344;

#[derive(Debug, thiserror::Error)]
pub enum VolumeIoError {
    #[error("malformed NIfTI-1 header: {0}")]
    MalformedHeader(String),
    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("voxel payload truncated: expected {expected} bytes after offset {offset}, found {found}")]
    TruncatedPayload {
        expected: usize,
        found: usize,
        offset: usize,
    },
    #[error("gzip decompression failed: {0}")]
    DecompressionFailure(std::io::Error),
    #[error("voxel {index} is not finite")]
    NonFiniteVoxel { index: usize },
    #[error("invalid volume: {0}")]
    InvalidVolume(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, VolumeIoError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endianness {
    Little,
    Big,
}

/// The datatypes this loader decodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Datatype {
    Uint8,
    Int16,
    Float32,
    Uint16,
}

impl Datatype {
    pub fn from_code(code: i16) -> Result<Self> {
        match code {
            2 => Ok(Datatype::Uint8),
            4 => Ok(Datatype::Int16),
            16 => Ok(Datatype::Float32),
            512 => Ok(Datatype::Uint16),
            other => Err(VolumeIoError::UnsupportedDatatype(other)),
        }
    }

    pub fn code(self) -> i16 {
        match self {
            Datatype::Uint8 => 2,
            Datatype::Int16 => 4,
            Datatype::Float32 => 16,
            Datatype::Uint16 => 512,
        }
    }

    pub fn size_bytes(self) -> usize {
        match self {
            Datatype::Uint8 => 1,
            Datatype::Int16 | Datatype::Uint16 => 2,
            Datatype::Float32 => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeHeader {
    /// Voxels per axis (x, y, z).
    pub dims: [usize; 3],
    /// Millimetres per voxel along each axis.
    pub spacing: [f32; 3],
    pub datatype: Datatype,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub vox_offset: usize,
    pub endianness: Endianness,
    pub qform_code: i16,
    pub sform_code: i16,
    /// Rows of the sform affine, as stored.
    pub srow: [[f32; 4]; 3],
}

impl VolumeHeader {
    /// A little-endian float32 header for a volume of the given shape.
    pub fn new(dims: [usize; 3], spacing: [f32; 3]) -> Self {
        VolumeHeader {
            dims,
            spacing,
            datatype: Datatype::Float32,
            scl_slope: 0.0,
            scl_inter: 0.0,
            vox_offset: MIN_FILE_SIZE,
            endianness: Endianness::Little,
            qform_code: 0,
            sform_code: 0,
            srow: [
                [spacing[0], 0.0, 0.0, 0.0],
                [0.0, spacing[1], 0.0, 0.0],
                [0.0, 0.0, spacing[2], 0.0],
            ],
        }
    }

    pub fn voxel_count(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn payload_bytes(&self) -> usize {
        self.voxel_count() * self.datatype.size_bytes()
    }

    /// Physical extent of the grid in millimetres.
    pub fn extent_mm(&self) -> [f32; 3] {
        [
            self.dims[0] as f32 * self.spacing[0],
            self.dims[1] as f32 * self.spacing[1],
            self.dims[2] as f32 * self.spacing[2],
        ]
    }
}

/// A loaded scalar volume with its raw intensity range.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub header: VolumeHeader,
    /// Scaled intensities, x fastest, then y, then z.
    pub voxels: Vec<f32>,
    pub i_min: f32,
    pub i_max: f32,
}

impl Volume {
    /// Wraps decoded voxels, computing the intensity range.
    pub fn new(header: VolumeHeader, voxels: Vec<f32>) -> Result<Self> {
        if header.dims.iter().any(|&d| d == 0) {
            return Err(VolumeIoError::InvalidVolume(format!(
                "dims must be positive, got {:?}",
                header.dims
            )));
        }
        if header.spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(VolumeIoError::InvalidVolume(format!(
                "spacing must be positive, got {:?}",
                header.spacing
            )));
        }
        if voxels.len() != header.voxel_count() {
            return Err(VolumeIoError::InvalidVolume(format!(
                "{} voxels supplied for dims {:?}",
                voxels.len(),
                header.dims
            )));
        }
        let (i_min, i_max) = intensity_range(&voxels)?;
        Ok(Volume {
            header,
            voxels,
            i_min,
            i_max,
        })
    }

    pub fn from_voxels(dims: [usize; 3], spacing: [f32; 3], voxels: Vec<f32>) -> Result<Self> {
        Volume::new(VolumeHeader::new(dims, spacing), voxels)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.header.dims
    }

    pub fn spacing(&self) -> [f32; 3] {
        self.header.spacing
    }
}

fn intensity_range(voxels: &[f32]) -> Result<(f32, f32)> {
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for (index, &v) in voxels.iter().enumerate() {
        if !v.is_finite() {
            return Err(VolumeIoError::NonFiniteVoxel { index });
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok((lo, hi))
}

/// Reads fields in the byte order detected from `sizeof_hdr`.
struct FieldReader<'a> {
    bytes: &'a [u8],
    endianness: Endianness,
}

impl FieldReader<'_> {
    fn array<const N: usize>(&self, at: usize) -> [u8; N] {
        self.bytes[at..at + N].try_into().expect("in-bounds header field")
    }

    fn i16(&self, at: usize) -> i16 {
        match self.endianness {
            Endianness::Little => i16::from_le_bytes(self.array(at)),
            Endianness::Big => i16::from_be_bytes(self.array(at)),
        }
    }

    fn f32(&self, at: usize) -> f32 {
        match self.endianness {
            Endianness::Little => f32::from_le_bytes(self.array(at)),
            Endianness::Big => f32::from_be_bytes(self.array(at)),
        }
    }
}

pub fn is_gzip(bytes: &[u8]) -> bool {
    bytes.len() >= 2 && bytes[..2] == GZIP_MAGIC
}

/// Parses the 348-byte header of an uncompressed single-file NIfTI-1 image.
pub fn parse_header(bytes: &[u8]) -> Result<VolumeHeader> {
    if bytes.len() < MIN_FILE_SIZE {
        return Err(VolumeIoError::MalformedHeader(format!(
            "need at least {MIN_FILE_SIZE} bytes, got {}",
            bytes.len()
        )));
    }
    let raw_size: [u8; 4] = bytes[0..4].try_into().unwrap();
    let endianness = if i32::from_le_bytes(raw_size) == HEADER_SIZE as i32 {
        Endianness::Little
    } else if i32::from_be_bytes(raw_size) == HEADER_SIZE as i32 {
        Endianness::Big
    } else {
        return Err(VolumeIoError::MalformedHeader(format!(
            "sizeof_hdr is {} (expected {HEADER_SIZE} in either byte order)",
            i32::from_le_bytes(raw_size)
        )));
    };
    if &bytes[OFF_MAGIC..OFF_MAGIC + 4] != MAGIC_SINGLE_FILE {
        return Err(VolumeIoError::MalformedHeader(format!(
            "bad magic {:?}",
            &bytes[OFF_MAGIC..OFF_MAGIC + 4]
        )));
    }
    let r = FieldReader { bytes, endianness };

    let dim: Vec<i16> = (0..8).map(|i| r.i16(OFF_DIM + 2 * i)).collect();
    let rank = dim[0];
    let rank_ok = rank == 3 || (rank == 4 && dim[4] == 1);
    if !rank_ok {
        return Err(VolumeIoError::MalformedHeader(format!(
            "only 3D volumes are supported (dim = {dim:?})"
        )));
    }
    let mut dims = [0usize; 3];
    for axis in 0..3 {
        let d = dim[axis + 1];
        if d < 1 {
            return Err(VolumeIoError::MalformedHeader(format!(
                "dim[{}] = {d} must be positive",
                axis + 1
            )));
        }
        dims[axis] = d as usize;
    }

    let datatype = Datatype::from_code(r.i16(OFF_DATATYPE))?;
    let bitpix = r.i16(OFF_BITPIX);
    if bitpix != 0 && bitpix as usize != datatype.size_bytes() * 8 {
        return Err(VolumeIoError::MalformedHeader(format!(
            "bitpix {bitpix} disagrees with datatype {datatype:?}"
        )));
    }

    let mut spacing = [0f32; 3];
    for (axis, s) in spacing.iter_mut().enumerate() {
        // Some writers store negative pixdim; only the magnitude matters here.
        let v = r.f32(OFF_PIXDIM + 4 * (axis + 1)).abs();
        if !(v > 0.0 && v.is_finite()) {
            return Err(VolumeIoError::MalformedHeader(format!(
                "pixdim[{}] = {v} must be positive",
                axis + 1
            )));
        }
        *s = v;
    }

    let vox_offset = r.f32(OFF_VOX_OFFSET);
    if !(vox_offset >= HEADER_SIZE as f32) || vox_offset.fract() != 0.0 {
        return Err(VolumeIoError::MalformedHeader(format!(
            "vox_offset {vox_offset} must be an integer >= {HEADER_SIZE}"
        )));
    }

    let mut srow = [[0f32; 4]; 3];
    for (row, out) in srow.iter_mut().enumerate() {
        for (col, v) in out.iter_mut().enumerate() {
            *v = r.f32(OFF_SROW_X + 16 * row + 4 * col);
        }
    }

    Ok(VolumeHeader {
        dims,
        spacing,
        datatype,
        scl_slope: r.f32(OFF_SCL_SLOPE),
        scl_inter: r.f32(OFF_SCL_INTER),
        vox_offset: vox_offset as usize,
        endianness,
        qform_code: r.i16(OFF_QFORM_CODE),
        sform_code: r.i16(OFF_SFORM_CODE),
        srow,
    })
}

/// Decompresses gzip input, passing plain bytes through untouched.
pub fn maybe_decompress(bytes: &[u8]) -> Result<std::borrow::Cow<'_, [u8]>> {
    if !is_gzip(bytes) {
        return Ok(std::borrow::Cow::Borrowed(bytes));
    }
    let mut out = Vec::with_capacity(bytes.len() * 4);
    GzDecoder::new(bytes)
        .read_to_end(&mut out)
        .map_err(VolumeIoError::DecompressionFailure)?;
    Ok(std::borrow::Cow::Owned(out))
}

/// Decodes a complete `.nii` or `.nii.gz` image.
pub fn load_volume(bytes: &[u8]) -> Result<Volume> {
    let bytes = maybe_decompress(bytes)?;
    let header = parse_header(&bytes)?;
    let expected = header.payload_bytes();
    let found = bytes.len().saturating_sub(header.vox_offset);
    if found < expected {
        return Err(VolumeIoError::TruncatedPayload {
            expected,
            found,
            offset: header.vox_offset,
        });
    }
    let payload = &bytes[header.vox_offset..header.vox_offset + expected];
    let mut voxels = decode_payload(payload, header.datatype, header.endianness);

    // scl_slope == 0 means "unscaled" by NIfTI convention.
    if header.scl_slope != 0.0 && header.scl_slope.is_finite() {
        let slope = header.scl_slope;
        let inter = if header.scl_inter.is_finite() {
            header.scl_inter
        } else {
            0.0
        };
        for v in &mut voxels {
            *v = slope * *v + inter;
        }
    }
    Volume::new(header, voxels)
}

pub fn load_file(path: impl AsRef<Path>) -> Result<Volume> {
    let bytes = fs::read(path)?;
    load_volume(&bytes)
}

fn decode_payload(payload: &[u8], datatype: Datatype, endianness: Endianness) -> Vec<f32> {
    let little = endianness == Endianness::Little;
    match datatype {
        Datatype::Uint8 => payload.iter().map(|&b| b as f32).collect(),
        Datatype::Int16 => payload
            .chunks_exact(2)
            .map(|c| {
                let b = [c[0], c[1]];
                (if little { i16::from_le_bytes(b) } else { i16::from_be_bytes(b) }) as f32
            })
            .collect(),
        Datatype::Uint16 => payload
            .chunks_exact(2)
            .map(|c| {
                let b = [c[0], c[1]];
                (if little { u16::from_le_bytes(b) } else { u16::from_be_bytes(b) }) as f32
            })
            .collect(),
        Datatype::Float32 => payload
            .chunks_exact(4)
            .map(|c| {
                let b = [c[0], c[1], c[2], c[3]];
                if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) }
            })
            .collect(),
    }
}

/// Options for [`encode_nifti`].
#[derive(Debug, Clone, Copy)]
pub struct WriteOptions {
    pub datatype: Datatype,
    pub endianness: Endianness,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub gzip: bool,
}

impl Default for WriteOptions {
    fn default() -> Self {
        WriteOptions {
            datatype: Datatype::Float32,
            endianness: Endianness::Little,
            scl_slope: 0.0,
            scl_inter: 0.0,
            gzip: false,
        }
    }
}

struct FieldWriter<'a> {
    buf: &'a mut [u8],
    endianness: Endianness,
}

impl FieldWriter<'_> {
    fn i16(&mut self, at: usize, v: i16) {
        let b = match self.endianness {
            Endianness::Little => v.to_le_bytes(),
            Endianness::Big => v.to_be_bytes(),
        };
        self.buf[at..at + 2].copy_from_slice(&b);
    }

    fn i32(&mut self, at: usize, v: i32) {
        let b = match self.endianness {
            Endianness::Little => v.to_le_bytes(),
            Endianness::Big => v.to_be_bytes(),
        };
        self.buf[at..at + 4].copy_from_slice(&b);
    }

    fn f32(&mut self, at: usize, v: f32) {
        let b = match self.endianness {
            Endianness::Little => v.to_le_bytes(),
            Endianness::Big => v.to_be_bytes(),
        };
        self.buf[at..at + 4].copy_from_slice(&b);
    }
}

/// Serializes voxels (already in stored units) as a single-file NIfTI-1 image.
///
/// Voxel values are converted to `opts.datatype` by rounding; callers writing
/// integer types are expected to pass integral values in range.
pub fn encode_nifti(dims: [usize; 3], spacing: [f32; 3], stored: &[f32], opts: &WriteOptions) -> Result<Vec<u8>> {
    let count: usize = dims.iter().product();
    if stored.len() != count {
        return Err(VolumeIoError::InvalidVolume(format!(
            "{} voxels supplied for dims {dims:?}",
            stored.len()
        )));
    }
    if dims.iter().any(|&d| d == 0 || d > i16::MAX as usize) {
        return Err(VolumeIoError::InvalidVolume(format!("dims {dims:?} not representable")));
    }
    let mut out = vec![0u8; MIN_FILE_SIZE + count * opts.datatype.size_bytes()];
    {
        let mut w = FieldWriter {
            buf: &mut out,
            endianness: opts.endianness,
        };
        w.i32(0, HEADER_SIZE as i32);
        w.i16(OFF_DIM, 3);
        for (axis, &d) in dims.iter().enumerate() {
            w.i16(OFF_DIM + 2 * (axis + 1), d as i16);
        }
        for i in 4..8 {
            w.i16(OFF_DIM + 2 * i, 1);
        }
        w.i16(OFF_DATATYPE, opts.datatype.code());
        w.i16(OFF_BITPIX, (opts.datatype.size_bytes() * 8) as i16);
        w.f32(OFF_PIXDIM, 1.0);
        for (axis, &s) in spacing.iter().enumerate() {
            w.f32(OFF_PIXDIM + 4 * (axis + 1), s);
        }
        w.f32(OFF_VOX_OFFSET, MIN_FILE_SIZE as f32);
        w.f32(OFF_SCL_SLOPE, opts.scl_slope);
        w.f32(OFF_SCL_INTER, opts.scl_inter);
        // xyzt_units: mm
        w.buf[123] = 2;
        w.i16(OFF_SFORM_CODE, 1);
        for (axis, &s) in spacing.iter().enumerate() {
            w.f32(OFF_SROW_X + 16 * axis + 4 * axis, s);
        }
    }
    out[OFF_MAGIC..OFF_MAGIC + 4].copy_from_slice(MAGIC_SINGLE_FILE);

    let little = opts.endianness == Endianness::Little;
    let payload = &mut out[MIN_FILE_SIZE..];
    match opts.datatype {
        Datatype::Uint8 => {
            for (dst, &v) in payload.iter_mut().zip(stored) {
                *dst = v.round().clamp(0.0, 255.0) as u8;
            }
        }
        Datatype::Int16 => {
            for (dst, &v) in payload.chunks_exact_mut(2).zip(stored) {
                let x = v.round().clamp(i16::MIN as f32, i16::MAX as f32) as i16;
                dst.copy_from_slice(&if little { x.to_le_bytes() } else { x.to_be_bytes() });
            }
        }
        Datatype::Uint16 => {
            for (dst, &v) in payload.chunks_exact_mut(2).zip(stored) {
                let x = v.round().clamp(0.0, u16::MAX as f32) as u16;
                dst.copy_from_slice(&if little { x.to_le_bytes() } else { x.to_be_bytes() });
            }
        }
        Datatype::Float32 => {
            for (dst, &v) in payload.chunks_exact_mut(4).zip(stored) {
                dst.copy_from_slice(&if little { v.to_le_bytes() } else { v.to_be_bytes() });
            }
        }
    }

    if opts.gzip {
        let mut enc = GzEncoder::new(Vec::with_capacity(out.len() / 2), Compression::fast());
        enc.write_all(&out)?;
        return Ok(enc.finish()?);
    }
    Ok(out)
}

/// Writes a volume as float32 NIfTI-1; gzip when the path ends in `.gz`.
pub fn save_file(volume: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let gzip = path.extension().is_some_and(|e| e == "gz");
    let opts = WriteOptions {
        gzip,
        ..WriteOptions::default()
    };
    let bytes = encode_nifti(volume.dims(), volume.spacing(), &volume.voxels, &opts)?;
    fs::write(path, bytes)?;
    Ok(())
}
