//! Uncertainty-driven selection of the next image to annotate.

use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guidance::compose_input;
use crate::model::{featurize, ReferenceModel, SegmentationModel};
use crate::volume::{coords, linear_index, Dims, Volume};

pub const DEFAULT_PASSES: usize = 10;
pub const DEFAULT_DROPOUT: f64 = 0.2;
pub const DEFAULT_AUGMENTATIONS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Strategy {
    Sequential,
    Random { seed: u64 },
    Epistemic { n_passes: usize, dropout_rate: f64, seed: u64 },
    Aleatoric { n_augment: usize, seed: u64 },
}

impl Strategy {
    /// Parses a wire name ("first", "random", "epistemic", "tta") with
    /// default parameters.
    pub fn from_name(name: &str, seed: u64) -> Option<Self> {
        Some(match name {
            "first" => Strategy::Sequential,
            "random" => Strategy::Random { seed },
            "epistemic" => Strategy::Epistemic {
                n_passes: DEFAULT_PASSES,
                dropout_rate: DEFAULT_DROPOUT,
                seed,
            },
            "tta" => Strategy::Aleatoric {
                n_augment: DEFAULT_AUGMENTATIONS,
                seed,
            },
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Sequential => "first",
            Strategy::Random { .. } => "random",
            Strategy::Epistemic { .. } => "epistemic",
            Strategy::Aleatoric { .. } => "tta",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Strategy::Epistemic { n_passes, dropout_rate, .. } => {
                if n_passes < 2 {
                    return Err(Error::InvalidParameter(format!("n_passes {n_passes} < 2")));
                }
                if !(0.0..1.0).contains(&dropout_rate) {
                    return Err(Error::InvalidParameter(format!("dropout rate {dropout_rate}")));
                }
            }
            Strategy::Aleatoric { n_augment, .. } if !(2..=8).contains(&n_augment) => {
                return Err(Error::InvalidParameter(format!("n_augment {n_augment} not in 2..=8")));
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredImage {
    pub image_id: String,
    pub score: f64,
    pub strategy: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

/// Read access to candidate images, in insertion order.
pub trait ImageSource: Sync {
    fn image_ids(&self) -> Vec<String>;
    fn load_image(&self, id: &str) -> Result<Volume>;
}

/// One of the eight axis-flip compositions; bit `a` flips axis `a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Flip(pub u8);

impl Flip {
    pub const IDENTITY: Flip = Flip(0);

    pub fn all() -> [Flip; 8] {
        std::array::from_fn(|k| Flip(k as u8))
    }

    fn source_index(self, dims: Dims, i: usize) -> usize {
        let mut c = coords(dims, i);
        for (a, c) in c.iter_mut().enumerate() {
            if self.0 >> a & 1 == 1 {
                *c = dims[a] - 1 - *c;
            }
        }
        linear_index(dims, c[0], c[1], c[2])
    }

    /// Permutes `data` laid out on `dims`. Flips are involutions, so this is
    /// also the inverse.
    pub fn apply<T: Copy>(self, data: &[T], dims: Dims) -> Vec<T> {
        (0..data.len()).map(|i| data[self.source_index(dims, i)]).collect()
    }

    pub fn apply_volume(self, v: &Volume) -> Volume {
        v.with_data(self.apply(v.data(), v.dims())).expect("same length")
    }
}

/// Mean over voxels of the population variance across `samples`.
/// Welford updates keep identical samples at exactly zero.
fn mean_variance(samples: impl Iterator<Item = Vec<f64>>) -> f64 {
    let mut mean: Vec<f64> = Vec::new();
    let mut m2: Vec<f64> = Vec::new();
    let mut k = 0.0;
    for s in samples {
        k += 1.0;
        if mean.is_empty() {
            mean = vec![0.0; s.len()];
            m2 = vec![0.0; s.len()];
        }
        for ((x, mu), acc) in s.iter().zip(mean.iter_mut()).zip(m2.iter_mut()) {
            let delta = x - *mu;
            *mu += delta / k;
            *acc += delta * (x - *mu);
        }
    }
    if mean.is_empty() {
        return 0.0;
    }
    (m2.iter().map(|v| v / k).sum::<f64>() / m2.len() as f64).max(0.0)
}

/// Variance of zero-guidance probabilities over `n_passes` dropout passes.
pub fn epistemic_score(m: &ReferenceModel, v: &Volume, n_passes: usize, dropout_rate: f64, seed: u64) -> Result<f64> {
    Strategy::Epistemic { n_passes, dropout_rate, seed }.validate()?;
    let model = ReferenceModel {
        weights: m.weights.clone(),
        dropout_rate,
    };
    let features = featurize(&compose_input(v, None)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..n_passes).map(|_| rng.gen()).collect();
    Ok(mean_variance(seeds.into_iter().map(|s| model.predict_features(&features, true, s).data)))
}

/// The `n_augment` flips drawn without replacement for `seed`.
pub fn sample_flips(n_augment: usize, seed: u64) -> Vec<Flip> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all = Flip::all();
    index::sample(&mut rng, all.len(), n_augment.min(all.len()))
        .into_iter()
        .map(|k| all[k])
        .collect()
}

/// Test-time-augmentation variance for an explicit list of flips.
pub fn aleatoric_score_with(m: &impl SegmentationModel, v: &Volume, flips: &[Flip]) -> Result<f64> {
    let dims = v.dims();
    let mut preds = Vec::with_capacity(flips.len());
    for &f in flips {
        let input = compose_input(&f.apply_volume(v), None)?;
        let p = m.predict_input(&input, false, 0);
        preds.push(f.apply(&p.data, dims));
    }
    Ok(mean_variance(preds.into_iter()))
}

/// Variance of deterministic predictions under `n_augment` seeded flips,
/// each mapped back to the original frame.
pub fn aleatoric_score(m: &impl SegmentationModel, v: &Volume, n_augment: usize, seed: u64) -> Result<f64> {
    Strategy::Aleatoric { n_augment, seed }.validate()?;
    aleatoric_score_with(m, v, &sample_flips(n_augment, seed))
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Orders `pool` by `strategy`. Uncertainty strategies sort by descending
/// score with ties broken by id.
pub fn rank(
    pool: &[String],
    strategy: &Strategy,
    model: &ReferenceModel,
    source: &impl ImageSource,
) -> Result<Vec<ScoredImage>> {
    strategy.validate()?;
    let known = source.image_ids();
    let position = |id: &str| known.iter().position(|k| k == id);
    for id in pool {
        if position(id).is_none() {
            return Err(Error::UnknownImage(id.clone()));
        }
    }
    let ts = now();
    let scored = |id: &String, score: f64| ScoredImage {
        image_id: id.clone(),
        score,
        strategy: strategy.name().to_string(),
        timestamp: ts,
    };
    let out = match *strategy {
        Strategy::Sequential => {
            let mut ids: Vec<&String> = pool.iter().collect();
            ids.sort_by_key(|id| position(id));
            ids.into_iter().map(|id| scored(id, 0.0)).collect()
        }
        Strategy::Random { seed } => {
            let mut ids: Vec<&String> = pool.iter().collect();
            ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            ids.into_iter().map(|id| scored(id, 0.0)).collect()
        }
        Strategy::Epistemic { n_passes, dropout_rate, seed } => score_all(pool, source, &scored, |v| {
            epistemic_score(model, v, n_passes, dropout_rate, seed)
        })?,
        Strategy::Aleatoric { n_augment, seed } => {
            score_all(pool, source, &scored, |v| aleatoric_score(model, v, n_augment, seed))?
        }
    };
    Ok(out)
}

fn score_all(
    pool: &[String],
    source: &impl ImageSource,
    scored: &(dyn Fn(&String, f64) -> ScoredImage + Sync),
    score: impl Fn(&Volume) -> Result<f64> + Sync,
) -> Result<Vec<ScoredImage>> {
    let mut out = pool
        .par_iter()
        .map(|id| Ok(scored(id, score(&source.load_image(id)?)?)))
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.image_id.cmp(&b.image_id)));
    Ok(out)
}

/// Head of [`rank`].
pub fn next(
    pool: &[String],
    strategy: &Strategy,
    model: &ReferenceModel,
    source: &impl ImageSource,
) -> Result<ScoredImage> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    Ok(rank(pool, strategy, model, source)?.swap_remove(0))
}

/// First `k` entries of [`rank`].
pub fn top_k(
    pool: &[String],
    strategy: &Strategy,
    model: &ReferenceModel,
    source: &impl ImageSource,
    k: usize,
) -> Result<Vec<ScoredImage>> {
    let mut r = rank(pool, strategy, model, source)?;
    r.truncate(k);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_variance_of_two() {
        let v = mean_variance([vec![0.2], vec![0.4]].into_iter());
        assert!((v - 0.01).abs() < 1e-15);
    }

    #[test]
    fn flips_are_involutions() {
        let dims = [3, 4, 5];
        let data: Vec<u32> = (0..60).collect();
        for f in Flip::all() {
            assert_eq!(f.apply(&f.apply(&data, dims), dims), data);
        }
        assert_eq!(Flip(1).apply(&data, dims)[0], 2);
        assert_eq!(Flip(4).apply(&data, dims)[0], 48);
    }

    #[test]
    fn flip_sampling_is_seeded_and_distinct() {
        let a = sample_flips(5, 3);
        assert_eq!(a, sample_flips(5, 3));
        let mut s = a.clone();
        s.sort();
        s.dedup();
        assert_eq!(s.len(), 5);
        assert_eq!(sample_flips(8, 1).len(), 8);
    }

    #[test]
    fn wire_names() {
        for n in ["first", "random", "epistemic", "tta"] {
            assert_eq!(Strategy::from_name(n, 0).unwrap().name(), n);
        }
        assert!(Strategy::from_name("entropy", 0).is_none());
    }

    #[test]
    fn parameter_bounds() {
        let v = Volume::filled([2, 2, 2], 1.0).unwrap();
        let m = ReferenceModel::zeros(0.2);
        assert!(epistemic_score(&m, &v, 1, 0.2, 0).is_err());
        assert!(aleatoric_score(&m, &v, 1, 0).is_err());
        assert!(aleatoric_score(&m, &v, 9, 0).is_err());
    }
}
