use crate::guidance::ModelInput;
use crate::volume::Dims;

/// Gaussian smoothing scales (voxels) applied to the image channel.
pub const FEATURE_SCALES: [f64; 3] = [1.0, 2.0, 4.0];
/// Raw intensity, three smoothed intensities, pos, neg, pos*I, neg*I.
pub const FEATURE_COUNT: usize = 8;

/// Image-derived features, reusable across different guidance channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFeatures {
    pub dims: Dims,
    pub raw: Vec<f64>,
    pub smoothed: [Vec<f64>; 3],
}

/// Row-major `voxels x FEATURE_COUNT` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub dims: Dims,
    pub data: Vec<f64>,
}

impl Features {
    pub fn voxel_count(&self) -> usize {
        self.data.len() / FEATURE_COUNT
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * FEATURE_COUNT..(i + 1) * FEATURE_COUNT]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(FEATURE_COUNT)
    }
}

/// Normalized 1D Gaussian taps for offsets `-r..=r`, `r = ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-r..=r)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Separable Gaussian blur with edge replication.
pub fn smooth(data: &[f64], dims: Dims, sigma: f64) -> Vec<f64> {
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as i64;
    let mut cur = data.to_vec();
    let mut next = vec![0.0; data.len()];
    let strides = [1, dims[0], dims[0] * dims[1]];
    for axis in 0..3 {
        let n = dims[axis] as i64;
        let stride = strides[axis];
        for (i, out) in next.iter_mut().enumerate() {
            let pos = ((i / stride) % dims[axis]) as i64;
            let base = i - pos as usize * stride;
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let q = (pos + k as i64 - r).clamp(0, n - 1) as usize;
                acc += w * cur[base + q * stride];
            }
            *out = acc;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

pub fn image_features(image: &[f32], dims: Dims) -> ImageFeatures {
    let raw: Vec<f64> = image.iter().map(|&x| f64::from(x)).collect();
    let smoothed = FEATURE_SCALES.map(|s| smooth(&raw, dims, s));
    ImageFeatures { dims, raw, smoothed }
}

/// Combines cached image features with guidance channels.
pub fn assemble(img: &ImageFeatures, pos: &[f32], neg: &[f32]) -> Features {
    let n = img.raw.len();
    assert_eq!(pos.len(), n);
    assert_eq!(neg.len(), n);
    let mut data = Vec::with_capacity(n * FEATURE_COUNT);
    for i in 0..n {
        let intensity = img.raw[i];
        let (p, q) = (f64::from(pos[i]), f64::from(neg[i]));
        data.extend_from_slice(&[
            intensity,
            img.smoothed[0][i],
            img.smoothed[1][i],
            img.smoothed[2][i],
            p,
            q,
            p * intensity,
            q * intensity,
        ]);
    }
    Features { dims: img.dims, data }
}

pub fn featurize(input: &ModelInput) -> Features {
    assemble(&image_features(&input.image, input.dims), &input.pos, &input.neg)
}
