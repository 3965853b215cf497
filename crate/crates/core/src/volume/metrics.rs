use std::collections::VecDeque;

use super::{coords, ensure_same_dims, linear_index, Dims, LabelMask};
use crate::error::Result;

/// Dice overlap `2|A∩B| / (|A|+|B|)`; two empty masks score 1.0.
pub fn dice(a: &LabelMask, b: &LabelMask) -> Result<f64> {
    ensure_same_dims(a.dims(), b.dims())?;
    let (mut inter, mut sa, mut sb) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let (x, y) = (x != 0, y != 0);
        sa += usize::from(x);
        sb += usize::from(y);
        inter += usize::from(x && y);
    }
    if sa + sb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (sa + sb) as f64)
}

/// 6-connected component labeling.
///
/// Components are numbered 1..=K in order of decreasing size (ties by the
/// smallest linear index they contain), so `sizes[k - 1]` is the size of
/// label `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    pub dims: Dims,
    pub labels: Vec<u32>,
    pub sizes: Vec<usize>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    /// Linear indices of the voxels in component `label` (1-based), ascending.
    pub fn voxels(&self, label: u32) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == label).then_some(i))
            .collect()
    }
}

pub(crate) fn neighbors6(dims: Dims, idx: usize) -> impl Iterator<Item = usize> {
    let [x, y, z] = coords(dims, idx);
    let mut out = [usize::MAX; 6];
    if x > 0 {
        out[0] = linear_index(dims, x - 1, y, z);
    }
    if x + 1 < dims[0] {
        out[1] = linear_index(dims, x + 1, y, z);
    }
    if y > 0 {
        out[2] = linear_index(dims, x, y - 1, z);
    }
    if y + 1 < dims[1] {
        out[3] = linear_index(dims, x, y + 1, z);
    }
    if z > 0 {
        out[4] = linear_index(dims, x, y, z - 1);
    }
    if z + 1 < dims[2] {
        out[5] = linear_index(dims, x, y, z + 1);
    }
    out.into_iter().filter(|&i| i != usize::MAX)
}

pub fn connected_components(m: &LabelMask) -> Components {
    let dims = m.dims();
    let n = m.data().len();
    let mut provisional = vec![0u32; n];
    // (size, first index, provisional label)
    let mut found: Vec<(usize, usize, u32)> = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if !m.is_foreground(start) || provisional[start] != 0 {
            continue;
        }
        let label = found.len() as u32 + 1;
        provisional[start] = label;
        queue.push_back(start);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            for j in neighbors6(dims, i) {
                if m.is_foreground(j) && provisional[j] == 0 {
                    provisional[j] = label;
                    queue.push_back(j);
                }
            }
        }
        found.push((size, start, label));
    }
    // `found` is already in first-index order; a stable sort keeps that as the
    // tie-break.
    let mut order = found.clone();
    order.sort_by(|a, b| b.0.cmp(&a.0));
    let mut remap = vec![0u32; found.len() + 1];
    for (new, &(_, _, old)) in order.iter().enumerate() {
        remap[old as usize] = new as u32 + 1;
    }
    let labels = provisional.into_iter().map(|l| remap[l as usize]).collect();
    Components {
        dims,
        labels,
        sizes: order.into_iter().map(|(s, _, _)| s).collect(),
    }
}
