//! Online intensity likelihood fitted from user scribbles.

use crate::error::{Error, Result};
use crate::stats::{robust_range, sorted_copy};
use crate::volume::{ensure_same_dims, ScribbleMask, Volume};

pub const DEFAULT_BINS: usize = 128;
/// Laplace pseudo-count added to every bin.
pub const SMOOTHING: f64 = 1.0;

/// Per-class intensity histograms over a robust intensity range.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityHistogramModel {
    pub bin_count: usize,
    pub range: (f64, f64),
    pub p_fg: Vec<f64>,
    pub p_bg: Vec<f64>,
}

/// Per-voxel negative log-likelihoods of each label.
#[derive(Debug, Clone, PartialEq)]
pub struct UnaryCosts {
    pub cost_bg: Vec<f64>,
    pub cost_fg: Vec<f64>,
}

impl IntensityHistogramModel {
    /// Bin of an intensity; values outside the range land in the end bins.
    pub fn bin(&self, intensity: f64) -> usize {
        let (lo, hi) = self.range;
        let t = (intensity - lo) / (hi - lo);
        let b = (t * self.bin_count as f64).floor();
        if b.is_nan() || b < 0.0 {
            0
        } else {
            (b as usize).min(self.bin_count - 1)
        }
    }

    /// Builds normalized, Laplace-smoothed histograms from raw bin counts.
    pub fn from_counts(range: (f64, f64), fg_counts: &[u64], bg_counts: &[u64]) -> Result<Self> {
        let bin_count = fg_counts.len();
        if bin_count < 2 {
            return Err(Error::BadBins(bin_count));
        }
        assert_eq!(bin_count, bg_counts.len());
        let smooth = |counts: &[u64]| {
            let total = counts.iter().sum::<u64>() as f64 + SMOOTHING * bin_count as f64;
            counts
                .iter()
                .map(|&c| (c as f64 + SMOOTHING) / total)
                .collect::<Vec<_>>()
        };
        Ok(Self {
            bin_count,
            range,
            p_fg: smooth(fg_counts),
            p_bg: smooth(bg_counts),
        })
    }
}

/// Fits per-class histograms from scribbled voxels of `v`.
pub fn fit_from_scribbles(v: &Volume, s: &ScribbleMask, bin_count: usize) -> Result<IntensityHistogramModel> {
    if bin_count < 2 {
        return Err(Error::BadBins(bin_count));
    }
    ensure_same_dims(v.dims(), s.dims())?;
    if s.count(ScribbleMask::FOREGROUND) == 0 {
        return Err(Error::MissingClass("foreground"));
    }
    if s.count(ScribbleMask::BACKGROUND) == 0 {
        return Err(Error::MissingClass("background"));
    }
    let range = intensity_range(v);
    let binner = IntensityHistogramModel {
        bin_count,
        range,
        p_fg: Vec::new(),
        p_bg: Vec::new(),
    };
    let mut fg = vec![0u64; bin_count];
    let mut bg = vec![0u64; bin_count];
    for (&x, &mark) in v.data().iter().zip(s.data()) {
        match mark {
            ScribbleMask::FOREGROUND => fg[binner.bin(f64::from(x))] += 1,
            ScribbleMask::BACKGROUND => bg[binner.bin(f64::from(x))] += 1,
            _ => {}
        }
    }
    IntensityHistogramModel::from_counts(range, &fg, &bg)
}

/// 0.5 / 99.5 percentile range, widened so it never has zero span.
pub fn intensity_range(v: &Volume) -> (f64, f64) {
    let sorted = sorted_copy(v.data().iter().map(|&x| f64::from(x)));
    let (lo, hi) = robust_range(&sorted);
    let min_span = f64::EPSILON * lo.abs().max(hi.abs()).max(1.0);
    (lo, hi.max(lo + min_span))
}

/// `cost_c = -ln p_c(bin(intensity))` for both classes.
pub fn unary_costs(m: &IntensityHistogramModel, v: &Volume) -> UnaryCosts {
    let cost_fg_bins: Vec<f64> = m.p_fg.iter().map(|p| -p.ln()).collect();
    let cost_bg_bins: Vec<f64> = m.p_bg.iter().map(|p| -p.ln()).collect();
    let bins: Vec<usize> = v.data().iter().map(|&x| m.bin(f64::from(x))).collect();
    UnaryCosts {
        cost_bg: bins.iter().map(|&b| cost_bg_bins[b]).collect(),
        cost_fg: bins.iter().map(|&b| cost_fg_bins[b]).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplace_arithmetic() {
        let m = IntensityHistogramModel::from_counts((0.0, 1.0), &[10, 0], &[1, 1]).unwrap();
        assert_eq!(m.p_fg, vec![11.0 / 12.0, 1.0 / 12.0]);
        assert_eq!(m.p_bg, vec![0.5, 0.5]);
        let v = Volume::from_data([1, 1, 1], vec![0.2]).unwrap();
        let c = unary_costs(&m, &v);
        assert!((c.cost_fg[0] - 0.0870).abs() < 1e-4);
        assert_eq!(c.cost_fg[0], -(11.0f64 / 12.0).ln());
    }

    #[test]
    fn fit_counts_scribbled_voxels() {
        // 20 voxels: ten at 0 (FG-scribbled) and ten at 1 (BG-scribbled)
        let data: Vec<f32> = (0..20).map(|i| if i < 10 { 0.0 } else { 1.0 }).collect();
        let v = Volume::from_data([20, 1, 1], data).unwrap();
        let marks = (0..20).map(|i| if i < 10 { 2 } else { 3 }).collect();
        let s = ScribbleMask::new([20, 1, 1], marks).unwrap();
        let m = fit_from_scribbles(&v, &s, 2).unwrap();
        assert_eq!(m.p_fg, vec![11.0 / 12.0, 1.0 / 12.0]);
        assert_eq!(m.p_bg, vec![1.0 / 12.0, 11.0 / 12.0]);
    }

    #[test]
    fn uniform_scribbles_give_uniform_model() {
        let v = Volume::from_data([4, 2, 1], vec![0.0, 1.0, 2.0, 3.0, 0.0, 1.0, 2.0, 3.0]).unwrap();
        let s = ScribbleMask::new([4, 2, 1], vec![2, 2, 2, 2, 3, 3, 3, 3]).unwrap();
        let m = fit_from_scribbles(&v, &s, 4).unwrap();
        assert_eq!(m.p_fg, m.p_bg);
        assert!(m.p_fg.iter().all(|&p| (p - 0.25).abs() < 1e-12));
    }

    #[test]
    fn missing_class_and_bins() {
        let v = Volume::from_data([2, 1, 1], vec![0.0, 1.0]).unwrap();
        let fg_only = ScribbleMask::new([2, 1, 1], vec![2, 0]).unwrap();
        assert!(matches!(fit_from_scribbles(&v, &fg_only, 8), Err(Error::MissingClass("background"))));
        let bg_only = ScribbleMask::new([2, 1, 1], vec![0, 3]).unwrap();
        assert!(matches!(fit_from_scribbles(&v, &bg_only, 8), Err(Error::MissingClass("foreground"))));
        let both = ScribbleMask::new([2, 1, 1], vec![2, 3]).unwrap();
        assert!(matches!(fit_from_scribbles(&v, &both, 1), Err(Error::BadBins(1))));
    }

    #[test]
    fn clamps_out_of_range() {
        let data: Vec<f32> = (0..1000).map(|i| i as f32).collect();
        let v = Volume::from_data([1000, 1, 1], data).unwrap();
        let mut marks = vec![0u8; 1000];
        marks[100] = 2;
        marks[900] = 3;
        let s = ScribbleMask::new([1000, 1, 1], marks).unwrap();
        let m = fit_from_scribbles(&v, &s, 16).unwrap();
        let probe = Volume::from_data([2, 1, 1], vec![-50.0, m.range.0 as f32]).unwrap();
        let c = unary_costs(&m, &probe);
        assert_eq!(c.cost_fg[0], c.cost_fg[1]);
        assert_eq!(c.cost_bg[0], c.cost_bg[1]);
    }

    #[test]
    fn constant_volume_has_positive_span() {
        let v = Volume::filled([3, 3, 3], 1000.0).unwrap();
        let (lo, hi) = intensity_range(&v);
        assert!(hi > lo);
    }
}
