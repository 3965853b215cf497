//! NIfTI-1 single-file reader and writer.
//!
//! Reads little- and big-endian files with uint8, int16, int32 and float32
//! payloads, optionally gzip-wrapped. Writes little-endian float32 with the
//! affine stored in the sform.

use std::io::{Read, Write};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::{diagonal_affine, voxel_count, Affine, Volume};
use crate::error::{Error, Result};

pub const HEADER_SIZE: usize = 348;
/// Header plus the 4-byte extension flag.
pub const DATA_OFFSET: usize = 352;

pub const DT_UINT8: i16 = 2;
pub const DT_INT16: i16 = 4;
pub const DT_INT32: i16 = 8;
pub const DT_FLOAT32: i16 = 16;

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

pub fn is_gzip(bytes: &[u8]) -> bool {
    bytes.len() >= 2 && bytes[..2] == GZIP_MAGIC
}

/// Strips a gzip envelope if present.
pub fn decompress(bytes: &[u8]) -> Result<std::borrow::Cow<'_, [u8]>> {
    if !is_gzip(bytes) {
        return Ok(std::borrow::Cow::Borrowed(bytes));
    }
    let mut out = Vec::with_capacity(bytes.len() * 4);
    GzDecoder::new(bytes).read_to_end(&mut out).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::TruncatedFile {
                expected: HEADER_SIZE,
                actual: out.len(),
            }
        } else {
            Error::Io(e)
        }
    })?;
    Ok(std::borrow::Cow::Owned(out))
}

/// Fields of the header this crate consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub dim: [i16; 8],
    pub datatype: i16,
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
    pub big_endian: bool,
}

struct Fields<'a> {
    bytes: &'a [u8],
    big_endian: bool,
}

impl Fields<'_> {
    fn raw<const N: usize>(&self, at: usize) -> [u8; N] {
        let mut b = [0u8; N];
        b.copy_from_slice(&self.bytes[at..at + N]);
        b
    }

    fn i16(&self, at: usize) -> i16 {
        let b = self.raw::<2>(at);
        if self.big_endian {
            i16::from_be_bytes(b)
        } else {
            i16::from_le_bytes(b)
        }
    }

    fn i32(&self, at: usize) -> i32 {
        let b = self.raw::<4>(at);
        if self.big_endian {
            i32::from_be_bytes(b)
        } else {
            i32::from_le_bytes(b)
        }
    }

    fn f32(&self, at: usize) -> f32 {
        f32::from_bits(self.i32(at) as u32)
    }
}

impl Header {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_SIZE {
            return Err(Error::TruncatedFile {
                expected: HEADER_SIZE,
                actual: bytes.len(),
            });
        }
        let mut magic = [0u8; 4];
        magic.copy_from_slice(&bytes[344..348]);
        if &magic != b"n+1\0" && &magic != b"ni1\0" {
            return Err(Error::BadMagic(magic));
        }
        let le = i32::from_le_bytes(bytes[0..4].try_into().unwrap());
        let be = i32::from_be_bytes(bytes[0..4].try_into().unwrap());
        let big_endian = match (le, be) {
            (348, _) => false,
            (_, 348) => true,
            _ => return Err(Error::InvalidHeader(format!("sizeof_hdr is {le}"))),
        };
        let f = Fields { bytes, big_endian };
        let mut dim = [0i16; 8];
        let mut pixdim = [0f32; 8];
        for i in 0..8 {
            dim[i] = f.i16(40 + 2 * i);
            pixdim[i] = f.f32(76 + 4 * i);
        }
        let mut srow = [[0f32; 4]; 3];
        for (r, row) in srow.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = f.f32(280 + 16 * r + 4 * c);
            }
        }
        Ok(Self {
            dim,
            datatype: f.i16(70),
            bitpix: f.i16(72),
            pixdim,
            vox_offset: f.f32(108),
            scl_slope: f.f32(112),
            scl_inter: f.f32(116),
            qform_code: f.i16(252),
            sform_code: f.i16(254),
            quatern: [f.f32(256), f.f32(260), f.f32(264)],
            qoffset: [f.f32(268), f.f32(272), f.f32(276)],
            srow,
            magic,
            big_endian,
        })
    }

    pub fn dims(&self) -> Result<[usize; 3]> {
        let ndim = self.dim[0];
        if !(1..=7).contains(&ndim) {
            return Err(Error::InvalidHeader(format!("dim[0] = {ndim}")));
        }
        let mut dims = [1usize; 3];
        for (axis, d) in dims.iter_mut().enumerate() {
            if (axis as i16) < ndim {
                let n = self.dim[axis + 1];
                if n < 1 {
                    return Err(Error::InvalidHeader(format!("dim[{}] = {n}", axis + 1)));
                }
                *d = n as usize;
            }
        }
        // Trailing axes are accepted only as singletons.
        for k in 4..=ndim as usize {
            if self.dim[k] > 1 {
                return Err(Error::InvalidHeader(format!(
                    "only 3D volumes are supported (dim[{k}] = {})",
                    self.dim[k]
                )));
            }
        }
        Ok(dims)
    }

    pub fn spacing(&self) -> [f64; 3] {
        let mut s = [1.0; 3];
        for (i, v) in s.iter_mut().enumerate() {
            let p = f64::from(self.pixdim[i + 1]).abs();
            if p.is_finite() && p > 0.0 {
                *v = p;
            }
        }
        s
    }

    /// sform when `sform_code > 0`, else qform when `qform_code > 0`, else a
    /// diagonal matrix from the spacing.
    pub fn affine(&self) -> Affine {
        if self.sform_code > 0 {
            let mut a = diagonal_affine([1.0; 3]);
            for r in 0..3 {
                for c in 0..4 {
                    a[r][c] = f64::from(self.srow[r][c]);
                }
            }
            return a;
        }
        if self.qform_code > 0 {
            return self.qform_affine();
        }
        diagonal_affine(self.spacing())
    }

    fn qform_affine(&self) -> Affine {
        let [b, c, d] = self.quatern.map(f64::from);
        let a = (1.0 - (b * b + c * c + d * d)).max(0.0).sqrt();
        let r = [
            [
                a * a + b * b - c * c - d * d,
                2.0 * (b * c - a * d),
                2.0 * (b * d + a * c),
            ],
            [
                2.0 * (b * c + a * d),
                a * a + c * c - b * b - d * d,
                2.0 * (c * d - a * b),
            ],
            [
                2.0 * (b * d - a * c),
                2.0 * (c * d + a * b),
                a * a + d * d - c * c - b * b,
            ],
        ];
        let qfac = if self.pixdim[0] < 0.0 { -1.0 } else { 1.0 };
        let sp = self.spacing();
        let scale = [sp[0], sp[1], sp[2] * qfac];
        let mut out = diagonal_affine([1.0; 3]);
        for row in 0..3 {
            for col in 0..3 {
                out[row][col] = r[row][col] * scale[col];
            }
            out[row][3] = f64::from(self.qoffset[row]);
        }
        out
    }

    fn bytes_per_voxel(&self) -> Result<usize> {
        match self.datatype {
            DT_UINT8 => Ok(1),
            DT_INT16 => Ok(2),
            DT_INT32 | DT_FLOAT32 => Ok(4),
            other => Err(Error::UnsupportedDatatype(other)),
        }
    }
}

/// Parses a NIfTI-1 file (plain or gzip-compressed) into a [`Volume`].
pub fn read(bytes: &[u8]) -> Result<Volume> {
    let bytes = decompress(bytes)?;
    let hdr = Header::parse(&bytes)?;
    let width = hdr.bytes_per_voxel()?;
    let dims = hdr.dims()?;
    let n = voxel_count(dims);
    let offset = if hdr.vox_offset.is_finite() && hdr.vox_offset > 0.0 {
        (hdr.vox_offset as usize).max(HEADER_SIZE)
    } else {
        HEADER_SIZE
    };
    let expected = offset + n * width;
    if bytes.len() < expected {
        return Err(Error::TruncatedFile {
            expected,
            actual: bytes.len(),
        });
    }
    let payload = &bytes[offset..expected];
    let be = hdr.big_endian;
    let mut data: Vec<f32> = match hdr.datatype {
        DT_UINT8 => payload.iter().map(|&v| f32::from(v)).collect(),
        DT_INT16 => payload
            .chunks_exact(2)
            .map(|c| {
                let b = [c[0], c[1]];
                f32::from(if be { i16::from_be_bytes(b) } else { i16::from_le_bytes(b) })
            })
            .collect(),
        DT_INT32 => payload
            .chunks_exact(4)
            .map(|c| {
                let b = [c[0], c[1], c[2], c[3]];
                (if be { i32::from_be_bytes(b) } else { i32::from_le_bytes(b) }) as f32
            })
            .collect(),
        DT_FLOAT32 => payload
            .chunks_exact(4)
            .map(|c| {
                let b = [c[0], c[1], c[2], c[3]];
                if be {
                    f32::from_be_bytes(b)
                } else {
                    f32::from_le_bytes(b)
                }
            })
            .collect(),
        other => return Err(Error::UnsupportedDatatype(other)),
    };
    let slope = hdr.scl_slope;
    let inter = hdr.scl_inter;
    let identity = slope == 1.0 && inter == 0.0;
    if slope != 0.0 && slope.is_finite() && inter.is_finite() && !identity {
        let (s, i) = (f64::from(slope), f64::from(inter));
        for v in &mut data {
            *v = (f64::from(*v) * s + i) as f32;
        }
    }
    Volume::new(dims, hdr.spacing(), hdr.affine(), data)
        .map_err(|e| Error::InvalidHeader(e.to_string()))
}

/// Serializes `v` as float32 NIfTI-1 with `vox_offset` 352 and sform code 1.
pub fn write(v: &Volume, gzip: bool) -> Vec<u8> {
    let raw = encode(v);
    if !gzip {
        return raw;
    }
    let mut enc = GzEncoder::new(Vec::with_capacity(raw.len() / 2), Compression::default());
    enc.write_all(&raw).expect("writing to memory cannot fail");
    enc.finish().expect("writing to memory cannot fail")
}

fn encode(v: &Volume) -> Vec<u8> {
    let mut out = vec![0u8; DATA_OFFSET + 4 * v.len()];
    let put_i16 = |buf: &mut [u8], at: usize, x: i16| buf[at..at + 2].copy_from_slice(&x.to_le_bytes());
    let put_i32 = |buf: &mut [u8], at: usize, x: i32| buf[at..at + 4].copy_from_slice(&x.to_le_bytes());
    let put_f32 = |buf: &mut [u8], at: usize, x: f32| buf[at..at + 4].copy_from_slice(&x.to_le_bytes());

    put_i32(&mut out, 0, HEADER_SIZE as i32);
    let dims = v.dims();
    let dim: [i16; 8] = [3, dims[0] as i16, dims[1] as i16, dims[2] as i16, 1, 1, 1, 1];
    for (i, d) in dim.iter().enumerate() {
        put_i16(&mut out, 40 + 2 * i, *d);
    }
    put_i16(&mut out, 70, DT_FLOAT32);
    put_i16(&mut out, 72, 32);
    let sp = v.spacing();
    let pixdim: [f32; 8] = [1.0, sp[0] as f32, sp[1] as f32, sp[2] as f32, 0.0, 0.0, 0.0, 0.0];
    for (i, p) in pixdim.iter().enumerate() {
        put_f32(&mut out, 76 + 4 * i, *p);
    }
    put_f32(&mut out, 108, DATA_OFFSET as f32);
    put_f32(&mut out, 112, 1.0);
    put_f32(&mut out, 116, 0.0);
    // xyzt_units: mm + s
    out[123] = 2 | 8;
    let descrip = b"voxlabel";
    out[148..148 + descrip.len()].copy_from_slice(descrip);
    put_i16(&mut out, 252, 0);
    put_i16(&mut out, 254, 1);
    let a = v.affine();
    for r in 0..3 {
        for c in 0..4 {
            put_f32(&mut out, 280 + 16 * r + 4 * c, a[r][c] as f32);
        }
    }
    out[344..348].copy_from_slice(b"n+1\0");
    for (chunk, x) in out[DATA_OFFSET..].chunks_exact_mut(4).zip(v.data()) {
        chunk.copy_from_slice(&x.to_le_bytes());
    }
    out
}
