//! Small descriptive statistics shared by the likelihood model and the
//! planner.

/// Linear-interpolated percentile of already sorted data, `q` in [0, 1]:
/// position `q * (n - 1)` between the neighboring order statistics.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let t = pos - lo as f64;
    sorted[lo] + t * (sorted[hi] - sorted[lo])
}

pub fn sorted_copy(values: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Robust intensity range: the 0.5th and 99.5th percentiles.
pub fn robust_range(sorted: &[f64]) -> (f64, f64) {
    (percentile_sorted(sorted, 0.005), percentile_sorted(sorted, 0.995))
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_interpolates() {
        let ramp: Vec<f64> = (0..1000).map(f64::from).collect();
        assert!((percentile_sorted(&ramp, 0.995) - 994.005).abs() < 1e-9);
        assert_eq!(percentile_sorted(&ramp, 0.0), 0.0);
        assert_eq!(percentile_sorted(&[3.0], 0.7), 3.0);
    }

    #[test]
    fn mean_std_population() {
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, 5.0);
        assert_eq!(s, 2.0);
    }
}
