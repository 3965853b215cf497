//! Binary MRF segmentation solved exactly by min-cut.
//!
//! Energy: `E(x) = sum_i U_i(x_i) + sum_{i~j} w_ij [x_i != x_j]` over the
//! 6-neighborhood, with `w_ij = lambda * exp(-(I_i - I_j)^2 / (2 sigma^2))`.
//! The source side of the cut is foreground.

mod flow;

pub use flow::{Arc, FlowNetwork, MaxFlow};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{fit_from_scribbles, unary_costs, UnaryCosts};
use crate::stats::{mean_std, robust_range, sorted_copy};
use crate::volume::{ensure_same_dims, linear_index, LabelMask, ProbabilityMap, ScribbleMask, Volume};

pub const DEFAULT_LAMBDA: f64 = 5.0;
pub const HARD_CAP: f64 = 1e9;
/// Probability clamp used when turning model output into unary costs.
pub const PROB_DELTA: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyParams {
    pub lambda_pair: f64,
    /// Intensity scale of the pairwise term; `None` uses the volume's robust
    /// standard deviation.
    pub sigma_int: Option<f64>,
    pub hard_cap: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            lambda_pair: DEFAULT_LAMBDA,
            sigma_int: None,
            hard_cap: HARD_CAP,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_pair.is_finite() && self.lambda_pair >= 0.0) {
            return Err(Error::InvalidParameter(format!("lambda_pair {}", self.lambda_pair)));
        }
        if let Some(s) = self.sigma_int {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidParameter(format!("sigma_int {s}")));
            }
        }
        if !(self.hard_cap > 0.0) {
            return Err(Error::InvalidParameter(format!("hard_cap {}", self.hard_cap)));
        }
        Ok(())
    }

    pub fn sigma_for(&self, v: &Volume) -> f64 {
        self.sigma_int.unwrap_or_else(|| robust_std(v))
    }
}

/// Standard deviation of intensities clipped to the 0.5/99.5 percentile
/// range; 1.0 for (near-)constant images.
pub fn robust_std(v: &Volume) -> f64 {
    let sorted = sorted_copy(v.data().iter().map(|&x| f64::from(x)));
    let (lo, hi) = robust_range(&sorted);
    let clipped: Vec<f64> = sorted.iter().map(|x| x.clamp(lo, hi)).collect();
    let (_, std) = mean_std(&clipped);
    if std > 0.0 && std.is_finite() {
        std
    } else {
        1.0
    }
}

/// Potts weight between two neighbors.
pub fn pair_weight(lambda: f64, sigma: f64, a: f64, b: f64) -> f64 {
    let d = a - b;
    lambda * (-(d * d) / (2.0 * sigma * sigma)).exp()
}

/// One node per voxel; unaries on the terminal arcs, Potts weights on the
/// 6-neighbor arcs, scribbles clamped with `hard_cap`.
pub fn build_energy(
    unary: &UnaryCosts,
    v: &Volume,
    s: Option<&ScribbleMask>,
    p: &EnergyParams,
) -> Result<FlowNetwork> {
    p.validate()?;
    let dims = v.dims();
    if unary.cost_bg.len() != v.len() || unary.cost_fg.len() != v.len() {
        return Err(Error::InvalidParameter(format!(
            "{} unary costs for {} voxels",
            unary.cost_bg.len().min(unary.cost_fg.len()),
            v.len()
        )));
    }
    if let Some(s) = s {
        ensure_same_dims(dims, s.dims())?;
    }
    let mut net = FlowNetwork::new(v.len());
    for i in 0..v.len() {
        let (cs, ct) = match s.map(|s| s.data()[i]) {
            Some(ScribbleMask::FOREGROUND) => (p.hard_cap, 0.0),
            Some(ScribbleMask::BACKGROUND) => (0.0, p.hard_cap),
            _ => (unary.cost_bg[i], unary.cost_fg[i]),
        };
        net.set_terminal(i, cs, ct);
    }
    if p.lambda_pair > 0.0 {
        let sigma = p.sigma_for(v);
        let data = v.data();
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    let i = linear_index(dims, x, y, z);
                    let here = f64::from(data[i]);
                    let mut link = |j: usize| {
                        let w = pair_weight(p.lambda_pair, sigma, here, f64::from(data[j]));
                        net.add_arc(i, j, w, w);
                    };
                    if x + 1 < dims[0] {
                        link(linear_index(dims, x + 1, y, z));
                    }
                    if y + 1 < dims[1] {
                        link(linear_index(dims, x, y + 1, z));
                    }
                    if z + 1 < dims[2] {
                        link(linear_index(dims, x, y, z + 1));
                    }
                }
            }
        }
    }
    Ok(net)
}

/// Solves the network and reads the source side as foreground.
pub fn solve(net: &FlowNetwork, v: &Volume) -> LabelMask {
    let cut = net.max_flow();
    LabelMask::from_bools(v.dims(), &cut.source_side).expect("one node per voxel")
}

/// Scribbles-only segmentation: histogram likelihood, then min-cut.
pub fn segment_scribbles(v: &Volume, s: &ScribbleMask, p: &EnergyParams, bins: usize) -> Result<LabelMask> {
    let model = fit_from_scribbles(v, s, bins)?;
    let unary = unary_costs(&model, v);
    let net = build_energy(&unary, v, Some(s), p)?;
    Ok(solve(&net, v))
}

/// Unary costs from a foreground probability map, clamped to
/// `[PROB_DELTA, 1 - PROB_DELTA]`.
pub fn probability_costs(prob: &ProbabilityMap) -> Result<UnaryCosts> {
    if let Some(&bad) = prob.data.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::BadProbability(bad));
    }
    let nll = |p: f64| -p.clamp(PROB_DELTA, 1.0 - PROB_DELTA).ln();
    Ok(UnaryCosts {
        cost_fg: prob.data.iter().map(|&p| nll(p)).collect(),
        cost_bg: prob.data.iter().map(|&p| nll(1.0 - p)).collect(),
    })
}

/// Refines a model's probability map with optional scribbles.
pub fn refine_prediction(
    prob: &ProbabilityMap,
    v: &Volume,
    s: Option<&ScribbleMask>,
    p: &EnergyParams,
) -> Result<LabelMask> {
    ensure_same_dims(v.dims(), prob.dims)?;
    let unary = probability_costs(prob)?;
    let net = build_energy(&unary, v, s, p)?;
    Ok(solve(&net, v))
}
