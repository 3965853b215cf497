//! Volumetric data types and the grid utilities shared by every stage of the
//! engine.
//!
//! All grids are stored x-fastest: the voxel `(x, y, z)` lives at linear index
//! `x + nx * (y + ny * z)`.

mod edt;
mod metrics;
pub mod nifti;
mod resample;

pub use edt::{edt, edt_squared};
pub use metrics::{connected_components, dice, Components};
pub use resample::{resample, resample_mask};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Voxel counts along x, y and z.
pub type Dims = [usize; 3];

/// Voxel-to-world transform, row-major.
pub type Affine = [[f64; 4]; 4];

pub fn voxel_count(dims: Dims) -> usize {
    dims[0] * dims[1] * dims[2]
}

#[inline]
pub fn linear_index(dims: Dims, x: usize, y: usize, z: usize) -> usize {
    x + dims[0] * (y + dims[1] * z)
}

#[inline]
pub fn coords(dims: Dims, idx: usize) -> [usize; 3] {
    let x = idx % dims[0];
    let y = (idx / dims[0]) % dims[1];
    let z = idx / (dims[0] * dims[1]);
    [x, y, z]
}

pub fn diagonal_affine(spacing: [f64; 3]) -> Affine {
    [
        [spacing[0], 0.0, 0.0, 0.0],
        [0.0, spacing[1], 0.0, 0.0],
        [0.0, 0.0, spacing[2], 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

fn check_dims(dims: Dims) -> Result<()> {
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::InvalidVolume(format!("zero-length axis in {dims:?}")));
    }
    Ok(())
}

fn check_len(dims: Dims, len: usize) -> Result<()> {
    if voxel_count(dims) != len {
        return Err(Error::InvalidVolume(format!(
            "{len} voxels for dims {dims:?}"
        )));
    }
    Ok(())
}

/// A 3D scalar image with its sampling geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: Dims,
    spacing: [f64; 3],
    affine: Affine,
    data: Vec<f32>,
}

impl Volume {
    pub fn new(dims: Dims, spacing: [f64; 3], affine: Affine, data: Vec<f32>) -> Result<Self> {
        check_dims(dims)?;
        check_len(dims, data.len())?;
        if spacing.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::InvalidVolume(format!("bad spacing {spacing:?}")));
        }
        if affine[3] != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::InvalidVolume(format!(
                "affine last row is {:?}",
                affine[3]
            )));
        }
        Ok(Self {
            dims,
            spacing,
            affine,
            data,
        })
    }

    /// Volume with a diagonal affine built from `spacing`.
    pub fn with_spacing(dims: Dims, spacing: [f64; 3], data: Vec<f32>) -> Result<Self> {
        Self::new(dims, spacing, diagonal_affine(spacing), data)
    }

    /// Unit-spacing volume; handy for synthetic data.
    pub fn from_data(dims: Dims, data: Vec<f32>) -> Result<Self> {
        Self::with_spacing(dims, [1.0; 3], data)
    }

    pub fn filled(dims: Dims, value: f32) -> Result<Self> {
        Self::from_data(dims, vec![value; voxel_count(dims)])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn affine(&self) -> &Affine {
        &self.affine
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[linear_index(self.dims, x, y, z)]
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Same geometry, new voxel values.
    pub fn with_data(&self, data: Vec<f32>) -> Result<Self> {
        Self::new(self.dims, self.spacing, self.affine, data)
    }

    /// Encodes a mask on this volume's grid as a float volume (0.0 / 1.0), the
    /// representation labels take on disk.
    pub fn mask_volume(&self, mask: &LabelMask) -> Result<Self> {
        ensure_same_dims(self.dims, mask.dims())?;
        self.with_data(mask.data().iter().map(|&v| f32::from(v)).collect())
    }
}

pub(crate) fn ensure_same_dims(expected: Dims, found: Dims) -> Result<()> {
    if expected != found {
        return Err(Error::DimMismatch { expected, found });
    }
    Ok(())
}

/// Binary segmentation: 0 background, 1 foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    dims: Dims,
    data: Vec<u8>,
}

impl LabelMask {
    pub fn new(dims: Dims, data: Vec<u8>) -> Result<Self> {
        check_dims(dims)?;
        check_len(dims, data.len())?;
        if let Some(v) = data.iter().find(|&&v| v > 1) {
            return Err(Error::BadLabel(format!("value {v} is not 0 or 1")));
        }
        Ok(Self { dims, data })
    }

    pub fn empty(dims: Dims) -> Self {
        Self {
            dims,
            data: vec![0; voxel_count(dims)],
        }
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(voxel_count(dims));
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(u8::from(f(x, y, z)));
                }
            }
        }
        Self { dims, data }
    }

    pub fn from_bools(dims: Dims, bits: &[bool]) -> Result<Self> {
        Self::new(dims, bits.iter().map(|&b| u8::from(b)).collect())
    }

    /// Thresholds a foreground probability map: `p > threshold` is foreground.
    pub fn from_probabilities(dims: Dims, prob: &[f64], threshold: f64) -> Result<Self> {
        Self::new(dims, prob.iter().map(|&p| u8::from(p > threshold)).collect())
    }

    /// Reads a mask from a float volume, rejecting values other than 0 and 1.
    pub fn from_volume(v: &Volume) -> Result<Self> {
        let data = v
            .data()
            .iter()
            .map(|&x| match x {
                x if x == 0.0 => Ok(0),
                x if x == 1.0 => Ok(1),
                other => Err(Error::BadLabel(format!("value {other} is not 0 or 1"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::new(v.dims(), data)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn is_foreground(&self, idx: usize) -> bool {
        self.data[idx] != 0
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.data[linear_index(self.dims, x, y, z)] != 0
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, fg: bool) {
        let i = linear_index(self.dims, x, y, z);
        self.data[i] = u8::from(fg);
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }
}

/// User strokes: 0 unmarked, 2 foreground scribble, 3 background scribble.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScribbleMask {
    dims: Dims,
    data: Vec<u8>,
}

impl ScribbleMask {
    pub const UNMARKED: u8 = 0;
    pub const FOREGROUND: u8 = 2;
    pub const BACKGROUND: u8 = 3;

    pub fn new(dims: Dims, data: Vec<u8>) -> Result<Self> {
        check_dims(dims)?;
        check_len(dims, data.len())?;
        if let Some(v) = data
            .iter()
            .find(|&&v| !matches!(v, Self::UNMARKED | Self::FOREGROUND | Self::BACKGROUND))
        {
            return Err(Error::BadLabel(format!("scribble value {v} not in {{0, 2, 3}}")));
        }
        Ok(Self { dims, data })
    }

    pub fn empty(dims: Dims) -> Self {
        Self {
            dims,
            data: vec![0; voxel_count(dims)],
        }
    }

    pub fn from_volume(v: &Volume) -> Result<Self> {
        let data = v
            .data()
            .iter()
            .map(|&x| match x {
                x if x == 0.0 => Ok(Self::UNMARKED),
                x if x == 2.0 => Ok(Self::FOREGROUND),
                x if x == 3.0 => Ok(Self::BACKGROUND),
                other => Err(Error::BadLabel(format!(
                    "scribble value {other} not in {{0, 2, 3}}"
                ))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::new(v.dims(), data)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn mark(&mut self, x: usize, y: usize, z: usize, value: u8) {
        assert!(matches!(
            value,
            Self::UNMARKED | Self::FOREGROUND | Self::BACKGROUND
        ));
        let i = linear_index(self.dims, x, y, z);
        self.data[i] = value;
    }

    pub fn count(&self, value: u8) -> usize {
        self.data.iter().filter(|&&v| v == value).count()
    }
}

/// Per-voxel foreground probability on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    pub dims: Dims,
    pub data: Vec<f64>,
}

impl ProbabilityMap {
    pub fn new(dims: Dims, data: Vec<f64>) -> Result<Self> {
        check_dims(dims)?;
        check_len(dims, data.len())?;
        Ok(Self { dims, data })
    }

    pub fn threshold(&self, t: f64) -> LabelMask {
        LabelMask::from_probabilities(self.dims, &self.data, t).expect("dims checked at construction")
    }
}

/// Positive and negative clicks in voxel coordinates.
///
/// On the wire this is `{"foreground": [[x,y,z],...], "background": [...]}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickSet {
    #[serde(rename = "foreground", default)]
    pub positive: Vec<[usize; 3]>,
    #[serde(rename = "background", default)]
    pub negative: Vec<[usize; 3]>,
}

impl ClickSet {
    pub fn is_empty(&self) -> bool {
        self.positive.is_empty() && self.negative.is_empty()
    }

    pub fn len(&self) -> usize {
        self.positive.len() + self.negative.len()
    }

    pub fn validate(&self, dims: Dims) -> Result<()> {
        for c in self.positive.iter().chain(&self.negative) {
            if c[0] >= dims[0] || c[1] >= dims[1] || c[2] >= dims[2] {
                return Err(Error::ClickOutOfBounds(*c));
            }
        }
        Ok(())
    }
}
