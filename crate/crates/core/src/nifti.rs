//! NIfTI-1 parsing and writing.
//!
//! Single-file (`.nii`) volumes only: a 348-byte header with magic `n+1\0`
//! followed by the voxel block at `vox_offset`. Endianness is detected from
//! `sizeof_hdr`, intensity scaling (`scl_slope`/`scl_inter`) is applied on
//! load, and 4D files are unrolled into independent 3D volumes. The writer
//! emits just enough of the format to round-trip what the parser reads.

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use thiserror::Error;

/// Size of the NIfTI-1 header in bytes.
pub const HEADER_SIZE: usize = 348;

/// Default voxel-data offset written by [`write_nifti`]: header plus the
/// 4-byte "no extensions" marker.
pub const DEFAULT_VOX_OFFSET: u32 = 352;

mod offsets {
    pub const SIZEOF_HDR: usize = 0;
    pub const DIM: usize = 40;
    pub const DATATYPE: usize = 70;
    pub const BITPIX: usize = 72;
    pub const PIXDIM: usize = 76;
    pub const VOX_OFFSET: usize = 108;
    pub const SCL_SLOPE: usize = 112;
    pub const SCL_INTER: usize = 116;
    pub const QFORM_CODE: usize = 252;
    pub const SFORM_CODE: usize = 254;
    pub const MAGIC: usize = 344;
}

#[derive(Debug, Error)]
pub enum NiftiError {
    #[error("input too short: {0} bytes, header needs {HEADER_SIZE}")]
    TooShort(usize),
    #[error("gzip-compressed input is not supported; decompress to .nii first")]
    GzipNotSupported,
    #[error("sizeof_hdr is {0} in both byte orders; not a NIfTI-1 header")]
    BadSize(i32),
    #[error("bad magic {0:?}; expected \"n+1\\0\" or \"ni1\\0\"")]
    BadMagic([u8; 4]),
    #[error("unsupported datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("bitpix {bitpix} inconsistent with datatype {datatype:?}")]
    BitpixMismatch { datatype: DataType, bitpix: i16 },
    #[error("invalid dim array {0:?}")]
    BadDim([i16; 8]),
    #[error("vox_offset {0} below header size for a single-file image")]
    BadVoxOffset(f32),
    #[error("paired header/image files (magic \"ni1\\0\") are not supported")]
    PairedNotSupported,
    #[error("dimensions above 4 must be singleton; got rank {0}")]
    UnsupportedRank(i16),
    #[error("voxel data truncated: need {expected} bytes, found {found}")]
    TruncatedData { expected: usize, found: usize },
    #[error("non-finite voxel value after scaling (index {0})")]
    NonFiniteVoxel(usize),
    #[error("voxel value {value} not representable as {datatype:?}")]
    ValueOverflow { value: f64, datatype: DataType },
    #[error("volume dimensions must be positive, got {0}x{1}x{2}")]
    BadVolumeDims(usize, usize, usize),
    #[error("voxel buffer length {got} does not match {expected}")]
    VoxelCountMismatch { expected: usize, got: usize },
}

/// Byte order of a parsed file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endianness {
    Little,
    Big,
}

/// Voxel datatypes this parser accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataType {
    U8,
    I16,
    I32,
    F32,
    F64,
}

impl DataType {
    pub fn from_code(code: i16) -> Result<Self, NiftiError> {
        match code {
            2 => Ok(DataType::U8),
            4 => Ok(DataType::I16),
            8 => Ok(DataType::I32),
            16 => Ok(DataType::F32),
            64 => Ok(DataType::F64),
            other => Err(NiftiError::UnsupportedDatatype(other)),
        }
    }

    pub const fn code(self) -> i16 {
        match self {
            DataType::U8 => 2,
            DataType::I16 => 4,
            DataType::I32 => 8,
            DataType::F32 => 16,
            DataType::F64 => 64,
        }
    }

    pub const fn bitpix(self) -> i16 {
        8 * self.byte_size() as i16
    }

    pub const fn byte_size(self) -> usize {
        match self {
            DataType::U8 => 1,
            DataType::I16 => 2,
            DataType::I32 => 4,
            DataType::F32 => 4,
            DataType::F64 => 8,
        }
    }

    pub const ALL: [DataType; 5] = [
        DataType::U8,
        DataType::I16,
        DataType::I32,
        DataType::F32,
        DataType::F64,
    ];
}

/// The header fields this pipeline consumes. Orientation codes are parsed
/// but ignored: slicing is always along the stored third axis.
#[derive(Debug, Clone)]
pub struct NiftiHeader {
    pub dim: [i16; 8],
    pub datatype: DataType,
    pub bitpix: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub qform_code: i16,
    pub sform_code: i16,
    pub magic: [u8; 4],
    pub endianness: Endianness,
}

impl NiftiHeader {
    pub fn rank(&self) -> i16 {
        self.dim[0]
    }

    pub fn nx(&self) -> usize {
        self.dim[1] as usize
    }

    pub fn ny(&self) -> usize {
        self.dim[2].max(1) as usize
    }

    pub fn nz(&self) -> usize {
        if self.rank() >= 3 { self.dim[3] as usize } else { 1 }
    }

    /// Number of 3D volumes in the file (4D unrolling).
    pub fn nt(&self) -> usize {
        if self.rank() >= 4 { self.dim[4] as usize } else { 1 }
    }

    pub fn is_single_file(&self) -> bool {
        &self.magic == b"n+1\0"
    }
}

/// Voxel grid with intensity scaling already applied. Values are stored with
/// x varying fastest: `voxels[x + nx*(y + ny*z)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    nx: usize,
    ny: usize,
    nz: usize,
    voxels: Vec<f64>,
    source_scaling: (f64, f64),
}

impl Volume3D {
    /// Builds a volume, rejecting zero dimensions, length mismatches, and
    /// non-finite values.
    pub fn new(nx: usize, ny: usize, nz: usize, voxels: Vec<f64>) -> Result<Self, NiftiError> {
        Self::with_scaling(nx, ny, nz, voxels, (1.0, 0.0))
    }

    pub fn with_scaling(
        nx: usize,
        ny: usize,
        nz: usize,
        voxels: Vec<f64>,
        source_scaling: (f64, f64),
    ) -> Result<Self, NiftiError> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(NiftiError::BadVolumeDims(nx, ny, nz));
        }
        let expected = nx * ny * nz;
        if voxels.len() != expected {
            return Err(NiftiError::VoxelCountMismatch { expected, got: voxels.len() });
        }
        if let Some(i) = voxels.iter().position(|v| !v.is_finite()) {
            return Err(NiftiError::NonFiniteVoxel(i));
        }
        Ok(Volume3D { nx, ny, nz, voxels, source_scaling })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn voxels(&self) -> &[f64] {
        &self.voxels
    }

    pub fn source_scaling(&self) -> (f64, f64) {
        self.source_scaling
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.voxels[x + self.nx * (y + self.ny * z)]
    }

    /// Minimum and maximum voxel value.
    pub fn value_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &self.voxels {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }
}

/// Parses a NIfTI-1 header, byte-swapping every multi-byte field when
/// `sizeof_hdr` only matches 348 under the opposite byte order.
pub fn parse_nifti_header(bytes: &[u8]) -> Result<NiftiHeader, NiftiError> {
    if bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b {
        return Err(NiftiError::GzipNotSupported);
    }
    if bytes.len() < HEADER_SIZE {
        return Err(NiftiError::TooShort(bytes.len()));
    }
    let size_le = LittleEndian::read_i32(&bytes[offsets::SIZEOF_HDR..]);
    let header = if size_le == HEADER_SIZE as i32 {
        read_header::<LittleEndian>(bytes, Endianness::Little)
    } else {
        let size_be = BigEndian::read_i32(&bytes[offsets::SIZEOF_HDR..]);
        if size_be == HEADER_SIZE as i32 {
            read_header::<BigEndian>(bytes, Endianness::Big)
        } else {
            return Err(NiftiError::BadSize(size_le));
        }
    }?;
    validate_header(&header)?;
    Ok(header)
}

fn read_header<O: ByteOrder>(
    bytes: &[u8],
    endianness: Endianness,
) -> Result<NiftiHeader, NiftiError> {
    let mut dim = [0i16; 8];
    let mut pixdim = [0f32; 8];
    for i in 0..8 {
        dim[i] = O::read_i16(&bytes[offsets::DIM + 2 * i..]);
        pixdim[i] = O::read_f32(&bytes[offsets::PIXDIM + 4 * i..]);
    }
    let datatype_code = O::read_i16(&bytes[offsets::DATATYPE..]);
    let mut magic = [0u8; 4];
    magic.copy_from_slice(&bytes[offsets::MAGIC..offsets::MAGIC + 4]);
    if &magic != b"n+1\0" && &magic != b"ni1\0" {
        return Err(NiftiError::BadMagic(magic));
    }
    Ok(NiftiHeader {
        dim,
        datatype: DataType::from_code(datatype_code)?,
        bitpix: O::read_i16(&bytes[offsets::BITPIX..]),
        pixdim,
        vox_offset: O::read_f32(&bytes[offsets::VOX_OFFSET..]),
        scl_slope: O::read_f32(&bytes[offsets::SCL_SLOPE..]),
        scl_inter: O::read_f32(&bytes[offsets::SCL_INTER..]),
        qform_code: O::read_i16(&bytes[offsets::QFORM_CODE..]),
        sform_code: O::read_i16(&bytes[offsets::SFORM_CODE..]),
        magic,
        endianness,
    })
}

fn validate_header(h: &NiftiHeader) -> Result<(), NiftiError> {
    if h.bitpix != h.datatype.bitpix() {
        return Err(NiftiError::BitpixMismatch { datatype: h.datatype, bitpix: h.bitpix });
    }
    let rank = h.dim[0];
    if !(1..=7).contains(&rank) {
        return Err(NiftiError::BadDim(h.dim));
    }
    for i in 1..=rank as usize {
        if h.dim[i] < 1 {
            return Err(NiftiError::BadDim(h.dim));
        }
    }
    if h.is_single_file() && h.vox_offset < HEADER_SIZE as f32 {
        return Err(NiftiError::BadVoxOffset(h.vox_offset));
    }
    Ok(())
}

/// Loads every 3D volume from a single-file NIfTI-1 byte buffer.
///
/// A 3D file yields one volume; a 4D file yields `dim[4]` volumes in time
/// order. Voxels become `raw * scl_slope + scl_inter` unless `scl_slope`
/// is zero, which by NIfTI convention means "no scaling".
pub fn load_volume(bytes: &[u8]) -> Result<Vec<Volume3D>, NiftiError> {
    let header = parse_nifti_header(bytes)?;
    if !header.is_single_file() {
        return Err(NiftiError::PairedNotSupported);
    }
    for i in 5..=header.rank() as usize {
        if header.dim[i] > 1 {
            return Err(NiftiError::UnsupportedRank(header.rank()));
        }
    }
    let (nx, ny, nz, nt) = (header.nx(), header.ny(), header.nz(), header.nt());
    let per_volume = nx * ny * nz;
    let elem = header.datatype.byte_size();
    let offset = header.vox_offset as usize;
    let expected = offset + per_volume * nt * elem;
    if bytes.len() < expected {
        return Err(NiftiError::TruncatedData { expected, found: bytes.len() });
    }

    let (slope, inter) = (header.scl_slope as f64, header.scl_inter as f64);
    let scale = |raw: f64| if slope != 0.0 { raw * slope + inter } else { raw };

    let mut volumes = Vec::with_capacity(nt);
    for t in 0..nt {
        let start = offset + t * per_volume * elem;
        let raw = &bytes[start..start + per_volume * elem];
        let voxels = match header.endianness {
            Endianness::Little => decode_voxels::<LittleEndian>(raw, header.datatype, &scale),
            Endianness::Big => decode_voxels::<BigEndian>(raw, header.datatype, &scale),
        };
        volumes.push(Volume3D::with_scaling(nx, ny, nz, voxels, (slope, inter))?);
    }
    Ok(volumes)
}

fn decode_voxels<O: ByteOrder>(
    raw: &[u8],
    datatype: DataType,
    scale: &impl Fn(f64) -> f64,
) -> Vec<f64> {
    match datatype {
        DataType::U8 => raw.iter().map(|&b| scale(b as f64)).collect(),
        DataType::I16 => raw
            .chunks_exact(2)
            .map(|c| scale(O::read_i16(c) as f64))
            .collect(),
        DataType::I32 => raw
            .chunks_exact(4)
            .map(|c| scale(O::read_i32(c) as f64))
            .collect(),
        DataType::F32 => raw
            .chunks_exact(4)
            .map(|c| scale(O::read_f32(c) as f64))
            .collect(),
        DataType::F64 => raw.chunks_exact(8).map(|c| scale(O::read_f64(c))).collect(),
    }
}

/// Serializes a volume as a little-endian single-file NIfTI-1 image.
///
/// Integer datatypes round to nearest (ties away from zero) and error on
/// out-of-range values; `scl_slope`/`scl_inter` are written as 1/0 so a
/// round trip reproduces the voxels up to datatype quantization.
pub fn write_nifti(vol: &Volume3D, datatype: DataType) -> Result<Vec<u8>, NiftiError> {
    write_nifti_with(vol, datatype, Endianness::Little)
}

/// [`write_nifti`] with an explicit byte order.
pub fn write_nifti_with(
    vol: &Volume3D,
    datatype: DataType,
    endianness: Endianness,
) -> Result<Vec<u8>, NiftiError> {
    match endianness {
        Endianness::Little => write_impl::<LittleEndian>(vol, datatype),
        Endianness::Big => write_impl::<BigEndian>(vol, datatype),
    }
}

fn write_impl<O: ByteOrder>(vol: &Volume3D, datatype: DataType) -> Result<Vec<u8>, NiftiError> {
    let n = vol.voxels().len();
    let mut out = vec![0u8; DEFAULT_VOX_OFFSET as usize + n * datatype.byte_size()];

    O::write_i32(&mut out[offsets::SIZEOF_HDR..], HEADER_SIZE as i32);
    let dim: [i16; 8] = [
        3,
        vol.nx() as i16,
        vol.ny() as i16,
        vol.nz() as i16,
        1,
        1,
        1,
        1,
    ];
    for (i, &d) in dim.iter().enumerate() {
        O::write_i16(&mut out[offsets::DIM + 2 * i..], d);
    }
    O::write_i16(&mut out[offsets::DATATYPE..], datatype.code());
    O::write_i16(&mut out[offsets::BITPIX..], datatype.bitpix());
    for i in 0..8 {
        O::write_f32(&mut out[offsets::PIXDIM + 4 * i..], 1.0);
    }
    O::write_f32(&mut out[offsets::VOX_OFFSET..], DEFAULT_VOX_OFFSET as f32);
    O::write_f32(&mut out[offsets::SCL_SLOPE..], 1.0);
    O::write_f32(&mut out[offsets::SCL_INTER..], 0.0);
    out[offsets::MAGIC..offsets::MAGIC + 4].copy_from_slice(b"n+1\0");

    let data = &mut out[DEFAULT_VOX_OFFSET as usize..];
    for (i, &v) in vol.voxels().iter().enumerate() {
        let at = i * datatype.byte_size();
        match datatype {
            DataType::U8 => data[at] = encode_int(v, datatype, 0.0, 255.0)? as u8,
            DataType::I16 => O::write_i16(
                &mut data[at..],
                encode_int(v, datatype, i16::MIN as f64, i16::MAX as f64)? as i16,
            ),
            DataType::I32 => O::write_i32(
                &mut data[at..],
                encode_int(v, datatype, i32::MIN as f64, i32::MAX as f64)? as i32,
            ),
            DataType::F32 => {
                if v.abs() > f32::MAX as f64 {
                    return Err(NiftiError::ValueOverflow { value: v, datatype });
                }
                O::write_f32(&mut data[at..], v as f32);
            }
            DataType::F64 => O::write_f64(&mut data[at..], v),
        }
    }
    Ok(out)
}

fn encode_int(v: f64, datatype: DataType, lo: f64, hi: f64) -> Result<f64, NiftiError> {
    let rounded = v.round();
    if rounded < lo || rounded > hi {
        return Err(NiftiError::ValueOverflow { value: v, datatype });
    }
    Ok(rounded)
}
