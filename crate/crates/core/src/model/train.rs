//! Training: binary cross-entropy, closed-form logistic gradients, Adam, and
//! the automatic / click-guided / dual-mode guidance schedules.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{assemble, featurize, image_features, Features, ImageFeatures, FEATURE_COUNT};
use super::{sigmoid, ReferenceModel};
use crate::error::{Error, Result};
use crate::guidance::{compose_input, encode_clicks, simulate_clicks, ModelInput, DEFAULT_SIGMA};
use crate::volume::{dice, ensure_same_dims, LabelMask, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    /// Zero guidance on every iteration.
    Automatic,
    /// Simulated clicks on every iteration.
    Deepgrow,
    /// Zero guidance on half of the iterations, simulated clicks on the rest.
    Deepedit,
}

/// How dual-mode training picks zero-guidance iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceSchedule {
    /// Even iterations zero guidance, odd iterations clicks.
    Alternate,
    /// Seeded fair coin per iteration.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub mode: TrainMode,
    pub click_budget: usize,
    pub rng_seed: u64,
    pub schedule: GuidanceSchedule,
    pub guidance_sigma: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 1,
            optimizer: Optimizer::Adam,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 50,
            mode: TrainMode::Deepedit,
            click_budget: 5,
            rng_seed: 0,
            schedule: GuidanceSchedule::Alternate,
            guidance_sigma: DEFAULT_SIGMA,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!("learning_rate {}", self.learning_rate)));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_loss: Vec<f64>,
    pub val_dice: Vec<f64>,
    /// One entry per iteration: `true` when that iteration used zero guidance.
    pub zero_guidance: Vec<bool>,
    pub cancelled: bool,
}

impl TrainReport {
    pub fn epochs(&self) -> usize {
        self.epoch_loss.len()
    }

    pub fn zero_guidance_iterations(&self) -> usize {
        self.zero_guidance.iter().filter(|&&z| z).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochProgress {
    pub epoch: usize,
    pub epochs: usize,
    pub loss: f64,
    pub val_dice: f64,
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, cfg: &TrainConfig) -> Self {
        Self {
            learning_rate: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// Mean binary cross-entropy and its gradient with respect to the weights
/// (bias last): `mean((p - y) * phi)`.
pub fn loss_and_gradient(m: &ReferenceModel, f: &Features, gt: &LabelMask) -> (f64, Vec<f64>) {
    let n = f.voxel_count();
    let mut loss = 0.0;
    let mut grad = vec![0.0; FEATURE_COUNT + 1];
    for (row, &y) in f.rows().zip(gt.data()) {
        let y = f64::from(y);
        let z = m.logit(row);
        // softplus(z) - y z, computed without overflow
        loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z;
        let r = sigmoid(z) - y;
        for (g, x) in grad.iter_mut().zip(row) {
            *g += r * x;
        }
        grad[FEATURE_COUNT] += r;
    }
    let inv = 1.0 / n as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    (loss * inv, grad)
}

/// Max over weights of `|ga - gn| / max(1e-12, |ga| + |gn|)` between the
/// analytic gradient and central differences with step 1e-4.
pub fn gradient_check(m: &ReferenceModel, input: &ModelInput, gt: &LabelMask) -> f64 {
    const H: f64 = 1e-4;
    let f = featurize(input);
    let (_, analytic) = loss_and_gradient(m, &f, gt);
    let mut probe = m.clone();
    let mut worst: f64 = 0.0;
    for k in 0..m.weights.len() {
        probe.weights[k] = m.weights[k] + H;
        let (up, _) = loss_and_gradient(&probe, &f, gt);
        probe.weights[k] = m.weights[k] - H;
        let (down, _) = loss_and_gradient(&probe, &f, gt);
        probe.weights[k] = m.weights[k];
        let numeric = (up - down) / (2.0 * H);
        let err = (analytic[k] - numeric).abs() / (analytic[k].abs() + numeric.abs()).max(1e-12);
        worst = worst.max(err);
    }
    worst
}

impl ReferenceModel {
    /// One Adam update on a single sample; returns the pre-update loss.
    pub fn train_step(&mut self, input: &ModelInput, gt: &LabelMask, opt: &mut Adam) -> Result<f64> {
        ensure_same_dims(input.dims, gt.dims())?;
        let (loss, grad) = loss_and_gradient(self, &featurize(input), gt);
        opt.step(&mut self.weights, &grad);
        Ok(loss)
    }
}

struct Sample<'a> {
    gt: &'a LabelMask,
    image: ImageFeatures,
    zero: Features,
}

fn prepare<'a>(data: &'a [(Volume, LabelMask)]) -> Result<Vec<Sample<'a>>> {
    data.iter()
        .map(|(v, gt)| {
            ensure_same_dims(v.dims(), gt.dims())?;
            let input = compose_input(v, None)?;
            let image = image_features(&input.image, input.dims);
            let zero = assemble(&image, &input.pos, &input.neg);
            Ok(Sample { gt, image, zero })
        })
        .collect()
}

fn mean_dice(m: &ReferenceModel, samples: &[Sample<'_>]) -> f64 {
    let total: f64 = samples
        .iter()
        .map(|s| {
            let pred = m.predict_features(&s.zero, false, 0).threshold(0.5);
            dice(&pred, s.gt).expect("dims checked in prepare")
        })
        .sum();
    total / samples.len() as f64
}

/// [`train_with_progress`] without a progress callback.
pub fn train(
    model: &ReferenceModel,
    dataset: &[(Volume, LabelMask)],
    cfg: &TrainConfig,
    val: &[(Volume, LabelMask)],
) -> Result<(ReferenceModel, TrainReport)> {
    train_with_progress(model, dataset, cfg, val, |_| true)
}

/// Trains a copy of `model` for `cfg.epochs` passes over `dataset`, in a
/// seeded shuffled order each epoch.
///
/// Clicks are regenerated on every guided iteration from the current model's
/// zero-guidance prediction thresholded at 0.5. Validation Dice is measured
/// on `val` with zero guidance (on `dataset` when `val` is empty).
/// `on_epoch` returning `false` stops training at that epoch boundary and
/// marks the report cancelled.
pub fn train_with_progress(
    model: &ReferenceModel,
    dataset: &[(Volume, LabelMask)],
    cfg: &TrainConfig,
    val: &[(Volume, LabelMask)],
    mut on_epoch: impl FnMut(&EpochProgress) -> bool,
) -> Result<(ReferenceModel, TrainReport)> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    cfg.validate()?;
    model.validate()?;
    let train_samples = prepare(dataset)?;
    let val_samples = if val.is_empty() { None } else { Some(prepare(val)?) };
    let val_ref = val_samples.as_deref().unwrap_or(&train_samples);

    log::info!(
        "training {:?} for {} epochs on {} samples; clicks regenerated per iteration",
        cfg.mode,
        cfg.epochs,
        dataset.len()
    );
    let mut m = model.clone();
    let mut opt = Adam::new(m.weights.len(), cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..train_samples.len()).collect();
    let mut iteration = 0usize;
    let mut grad_acc = vec![0.0; m.weights.len()];
    let mut in_batch = 0usize;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for &idx in &order {
            let sample = &train_samples[idx];
            let zero = match cfg.mode {
                TrainMode::Automatic => true,
                TrainMode::Deepgrow => false,
                TrainMode::Deepedit => match cfg.schedule {
                    GuidanceSchedule::Alternate => iteration % 2 == 0,
                    GuidanceSchedule::Random => rng.gen_bool(0.5),
                },
            };
            let guided;
            let features = if zero {
                &sample.zero
            } else {
                let pred = m.predict_features(&sample.zero, false, 0).threshold(0.5);
                let clicks = simulate_clicks(&pred, sample.gt, cfg.click_budget, rng.gen())?;
                let g = encode_clicks(&clicks, sample.gt.dims(), cfg.guidance_sigma)?;
                guided = assemble(&sample.image, &g.pos, &g.neg);
                &guided
            };
            let (loss, grad) = loss_and_gradient(&m, features, sample.gt);
            epoch_loss += loss;
            for (a, g) in grad_acc.iter_mut().zip(&grad) {
                *a += g;
            }
            in_batch += 1;
            if in_batch == cfg.batch_size {
                flush(&mut m, &mut opt, &mut grad_acc, &mut in_batch);
            }
            report.zero_guidance.push(zero);
            iteration += 1;
        }
        if in_batch > 0 {
            flush(&mut m, &mut opt, &mut grad_acc, &mut in_batch);
        }
        let loss = epoch_loss / order.len() as f64;
        let val_dice = mean_dice(&m, val_ref);
        report.epoch_loss.push(loss);
        report.val_dice.push(val_dice);
        log::debug!("epoch {}/{}: loss {loss:.5} val dice {val_dice:.4}", epoch + 1, cfg.epochs);
        let progress = EpochProgress {
            epoch: epoch + 1,
            epochs: cfg.epochs,
            loss,
            val_dice,
        };
        if !on_epoch(&progress) && epoch + 1 < cfg.epochs {
            report.cancelled = true;
            break;
        }
    }
    Ok((m, report))
}

/// Dice of one volume after `n_clicks` corrective clicks simulated against
/// the zero-guidance prediction (0 clicks gives the zero-guidance Dice).
pub fn interactive_dice(m: &ReferenceModel, v: &Volume, gt: &LabelMask, n_clicks: usize, seed: u64) -> Result<f64> {
    let initial = m.predict(v, None, false, 0)?.threshold(0.5);
    if n_clicks == 0 {
        return dice(&initial, gt);
    }
    let clicks = simulate_clicks(&initial, gt, n_clicks, seed)?;
    dice(&m.predict(v, Some(&clicks), false, 0)?.threshold(0.5), gt)
}

/// Mean [`interactive_dice`] over a labeled set.
pub fn mean_interactive_dice(m: &ReferenceModel, data: &[(Volume, LabelMask)], n_clicks: usize, seed: u64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for (v, gt) in data {
        total += interactive_dice(m, v, gt, n_clicks, seed)?;
    }
    Ok(total / data.len() as f64)
}

fn flush(m: &mut ReferenceModel, opt: &mut Adam, acc: &mut [f64], count: &mut usize) {
    let inv = 1.0 / *count as f64;
    let grad: Vec<f64> = acc.iter().map(|g| g * inv).collect();
    opt.step(&mut m.weights, &grad);
    acc.iter_mut().for_each(|g| *g = 0.0);
    *count = 0;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guidance::GuidanceChannels;
    use crate::synthetic::SpherePhantom;
    use crate::volume::ClickSet;

    fn phantom_set(n: usize, seed: u64) -> Vec<(Volume, LabelMask)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| SpherePhantom::random([12, 12, 12], &mut rng).render(seed * 100 + i as u64))
            .collect()
    }

    #[test]
    fn defaults() {
        let c: TrainConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c.learning_rate, 1e-4);
        assert_eq!(c.batch_size, 1);
        assert_eq!(c.optimizer, Optimizer::Adam);
        assert_eq!(c.epochs, 50);
        assert_eq!((c.beta1, c.beta2, c.epsilon), (0.9, 0.999, 1e-8));
        let c: TrainConfig = serde_json::from_str(r#"{"epochs": 2, "mode": "automatic"}"#).unwrap();
        assert_eq!(c.epochs, 2);
        assert_eq!(c.mode, TrainMode::Automatic);
    }

    #[test]
    fn bias_gradient_is_mean_residual() {
        let data = phantom_set(1, 4);
        let input = compose_input(&data[0].0, None).unwrap();
        let f = featurize(&input);
        let m = ReferenceModel::random(1, 0.3, 0.2);
        let (_, g) = loss_and_gradient(&m, &f, &data[0].1);
        let p = m.predict_features(&f, false, 0);
        let mean: f64 = p
            .data
            .iter()
            .zip(data[0].1.data())
            .map(|(p, &y)| p - f64::from(y))
            .sum::<f64>()
            / p.data.len() as f64;
        assert!((g[FEATURE_COUNT] - mean).abs() < 1e-12);
    }

    #[test]
    fn zero_image_zero_guidance_has_no_feature_gradient() {
        let v = Volume::filled([4, 4, 4], 0.0).unwrap();
        let gt = LabelMask::from_fn([4, 4, 4], |x, _, _| x < 2);
        let input = compose_input(&v, None).unwrap();
        let (_, g) = loss_and_gradient(&ReferenceModel::random(2, 1.0, 0.2), &featurize(&input), &gt);
        assert!(g[..FEATURE_COUNT].iter().all(|&x| x == 0.0));
        assert!(g[FEATURE_COUNT] != 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let data = phantom_set(1, 8);
        let clicks = ClickSet {
            positive: vec![[5, 5, 5]],
            negative: vec![[1, 1, 1]],
        };
        let g: GuidanceChannels = encode_clicks(&clicks, [12, 12, 12], 2.0).unwrap();
        let input = compose_input(&data[0].0, Some(&g)).unwrap();
        let err = gradient_check(&ReferenceModel::random(5, 0.5, 0.2), &input, &data[0].1);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let data = phantom_set(1, 2);
        let input = compose_input(&data[0].0, None).unwrap();
        let mut m = ReferenceModel::random(1, 0.5, 0.2);
        let before = m.clone();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        let mut opt = Adam::new(m.weights.len(), &cfg);
        let a = m.train_step(&input, &data[0].1, &mut opt).unwrap();
        let b = m.train_step(&input, &data[0].1, &mut opt).unwrap();
        assert_eq!(m, before);
        assert_eq!(a, b);
        assert!(a >= 0.0);
    }

    #[test]
    fn deepedit_alternation() {
        let data = phantom_set(3, 1);
        let cfg = TrainConfig {
            epochs: 3,
            ..Default::default()
        };
        let (_, r) = train(&ReferenceModel::zeros(0.2), &data, &cfg, &[]).unwrap();
        assert_eq!(r.zero_guidance.len(), 9);
        assert_eq!(r.zero_guidance_iterations(), 5);
        assert_eq!(r.epochs(), 3);
    }

    #[test]
    fn empty_dataset() {
        assert!(matches!(
            train(&ReferenceModel::zeros(0.2), &[], &TrainConfig::default(), &[]),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn cancellation_stops_at_epoch_boundary() {
        let data = phantom_set(2, 3);
        let cfg = TrainConfig {
            epochs: 5,
            ..Default::default()
        };
        let (_, r) = train_with_progress(&ReferenceModel::zeros(0.2), &data, &cfg, &[], |p| p.epoch < 2).unwrap();
        assert!(r.cancelled);
        assert_eq!(r.epochs(), 2);
    }

    #[test]
    fn automatic_mode_learns_separable_data() {
        let data = phantom_set(6, 9);
        let cfg = TrainConfig {
            mode: TrainMode::Automatic,
            learning_rate: 0.05,
            epochs: 30,
            ..Default::default()
        };
        let (_, r) = train(&ReferenceModel::zeros(0.2), &data[..4], &cfg, &data[4..]).unwrap();
        assert!(*r.val_dice.last().unwrap() >= 0.9, "{:?}", r.val_dice);
    }
}
