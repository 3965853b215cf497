//! Dataset statistics and memory-bounded training plans.
//!
//! Memory model: `overhead * batch * channels * prod(roi) * 4` bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::atomic::write_atomic;
use crate::error::{Error, Result};
use crate::stats::{mean_std, robust_range, sorted_copy};
use crate::volume::{Dims, Volume};

pub const PLAN_FILE: &str = "plan.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub spacing_median: [f64; 3],
    pub intensity_p05: f64,
    pub intensity_p995: f64,
    /// Mean and standard deviation of intensities clipped to the percentile
    /// range.
    pub intensity_mean: f64,
    pub intensity_std: f64,
    /// Largest per-axis size after resampling to `spacing_median`.
    pub max_dims: Dims,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub clip_low: f64,
    pub clip_high: f64,
    pub mean: f64,
    /// 1.0 when the clipped data has no spread.
    pub std: f64,
}

impl Normalization {
    pub fn apply(&self, x: f64) -> f64 {
        (x.clamp(self.clip_low, self.clip_high) - self.mean) / self.std
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub target_spacing: [f64; 3],
    pub normalization: Normalization,
    pub roi_size: [usize; 3],
    pub batch_size: usize,
    pub estimated_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub overhead: u64,
    pub channels: u64,
    pub min_roi: usize,
    pub max_batch: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            overhead: 24,
            channels: 3,
            min_roi: 16,
            max_batch: 8,
        }
    }
}

impl PlannerConfig {
    pub fn estimated_bytes(&self, batch: usize, roi: [usize; 3]) -> u64 {
        let voxels: u64 = roi.iter().map(|&r| r as u64).product();
        self.overhead * batch as u64 * self.channels * voxels * 4
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Statistics over a set of (labeled) images.
pub fn dataset_stats<'a>(images: impl IntoIterator<Item = &'a Volume>) -> Result<DatasetStats> {
    let images: Vec<&Volume> = images.into_iter().collect();
    if images.is_empty() {
        return Err(Error::EmptyDatastore);
    }
    let spacing_median: [f64; 3] = std::array::from_fn(|a| median(images.iter().map(|v| v.spacing()[a]).collect()));
    let sorted = sorted_copy(images.iter().flat_map(|v| v.data().iter().map(|&x| f64::from(x))));
    let (lo, hi) = robust_range(&sorted);
    let clipped: Vec<f64> = sorted.iter().map(|x| x.clamp(lo, hi)).collect();
    let (mean, std) = mean_std(&clipped);
    let mut max_dims = [1; 3];
    for v in &images {
        for a in 0..3 {
            let n = (v.dims()[a] as f64 * v.spacing()[a] / spacing_median[a]).round().max(1.0) as usize;
            max_dims[a] = max_dims[a].max(n);
        }
    }
    Ok(DatasetStats {
        spacing_median,
        intensity_p05: lo,
        intensity_p995: hi,
        intensity_mean: mean,
        intensity_std: std,
        max_dims,
    })
}

pub fn plan(stats: &DatasetStats, budget_bytes: u64) -> Result<Plan> {
    plan_with(stats, budget_bytes, &PlannerConfig::default())
}

/// Largest cubic power-of-two ROI within the budget at batch 1, capped by
/// the data extent; the batch grows (up to `max_batch`) only once the ROI
/// has reached that cap, which keeps both monotone in the budget.
pub fn plan_with(stats: &DatasetStats, budget_bytes: u64, cfg: &PlannerConfig) -> Result<Plan> {
    let floor = cfg.min_roi.next_power_of_two();
    let fits = |batch: usize, side: usize| cfg.estimated_bytes(batch, [side; 3]) <= budget_bytes;
    if !fits(1, floor) {
        return Err(Error::InsufficientBudget(budget_bytes));
    }
    let cap = stats
        .max_dims
        .iter()
        .map(|d| d.next_power_of_two())
        .min()
        .unwrap_or(floor)
        .max(floor);
    let mut side = floor;
    while side < cap && fits(1, side * 2) {
        side *= 2;
    }
    let mut batch = 1;
    if side == cap {
        while batch < cfg.max_batch && fits(batch + 1, side) {
            batch += 1;
        }
    }
    let std = if stats.intensity_std > 0.0 { stats.intensity_std } else { 1.0 };
    Ok(Plan {
        target_spacing: stats.spacing_median,
        normalization: Normalization {
            clip_low: stats.intensity_p05,
            clip_high: stats.intensity_p995,
            mean: stats.intensity_mean,
            std,
        },
        roi_size: [side; 3],
        batch_size: batch,
        estimated_bytes: cfg.estimated_bytes(batch, [side; 3]),
    })
}

/// Writes `dir/plan.json`.
pub fn save_plan(dir: &Path, plan: &Plan) -> Result<()> {
    Ok(write_atomic(&dir.join(PLAN_FILE), &serde_json::to_vec_pretty(plan)?)?)
}
