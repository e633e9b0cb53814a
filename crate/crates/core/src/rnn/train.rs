use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{dropout_mask, forward, sample_loss_grad, Adam, AdamConfig, LstmParams, RnnError, Sample};
use crate::evalkit::{compute_metrics, Confusion, Metrics};

/// Per-sample gradients are summed in chunks of this many samples, then the
/// chunk sums are added in order. The chunking is fixed, so results do not
/// depend on the number of worker threads.
const REDUCE_CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: usize,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub threshold: f64,
    pub seed: u64,
    /// Stop after this many epochs without validation-loss improvement and
    /// keep the best parameters. Off when `None`.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            epochs: 100,
            batch_size: 128,
            hidden: 100,
            dropout_rate: 0.2,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            threshold: 0.5,
            seed: 1,
            patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), RnnError> {
        let bad = |m: String| Err(RnnError::Config(m));
        if self.batch_size == 0 || self.hidden == 0 {
            return bad("batch_size and hidden must be > 0".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        if !(self.learning_rate > 0.0 && self.epsilon > 0.0) {
            return bad("learning_rate and epsilon must be > 0".into());
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("betas must lie in [0, 1)".into());
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("threshold {} outside (0, 1)", self.threshold));
        }
        if self.patience == Some(0) {
            return bad("patience must be >= 1 when set".into());
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub validation_loss: Option<f64>,
    pub validation: Option<Metrics>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub params: LstmParams,
    pub wall_time: std::time::Duration,
    pub stopped_early: bool,
}

/// Loss plus confusion at `threshold` over `samples`, dropout off.
pub fn evaluate(p: &LstmParams, samples: &[Sample], threshold: f64) -> Result<(f64, Confusion), RnnError> {
    let probs: Vec<f64> = samples
        .par_iter()
        .map(|s| forward(p, &s.x, &s.valid))
        .collect::<Result<_, _>>()?;
    let mut conf = Confusion::default();
    let mut loss = 0.0;
    for (s, y) in samples.iter().zip(&probs) {
        loss += super::bce(*y, s.label);
        conf.add(*y >= threshold, s.label >= 0.5);
    }
    Ok((loss / samples.len().max(1) as f64, conf))
}

/// Mean loss and mean gradient over `batch`, reduced in fixed order.
fn batch_gradient(p: &LstmParams, batch: &[&Sample], masks: &[Option<Vec<f64>>]) -> Result<(f64, Vec<f64>), RnnError> {
    let n = p.data.len();
    let idx: Vec<usize> = (0..batch.len()).collect();
    let partials: Vec<(f64, Vec<f64>)> = idx
        .par_chunks(REDUCE_CHUNK)
        .map(|chunk| {
            let mut g = vec![0.0; n];
            let mut loss = 0.0;
            for &i in chunk {
                loss += sample_loss_grad(p, batch[i], masks[i].as_deref(), &mut g)?;
            }
            Ok((loss, g))
        })
        .collect::<Result<_, RnnError>>()?;
    let mut grad = vec![0.0; n];
    let mut loss = 0.0;
    for (l, g) in partials {
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    let scale = batch.len() as f64;
    for g in &mut grad {
        *g /= scale;
    }
    Ok((loss / scale, grad))
}

/// Train from a seeded initialization. `validation` may be empty.
pub fn train(train_set: &[Sample], validation: &[Sample], config: &TrainConfig) -> Result<TrainReport, RnnError> {
    config.validate()?;
    let first = train_set
        .first()
        .ok_or_else(|| RnnError::Config("empty training partition".into()))?;
    let steps = first.steps();
    if steps == 0 || first.x.len() % steps != 0 {
        return Err(RnnError::Shape("first training sample has no steps".into()));
    }
    let dim = first.x.len() / steps;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = LstmParams::init(dim, config.hidden, &mut rng);
    train_from(init, train_set, validation, config, &mut rng)
}

/// Continue training `params` with the supplied generator.
pub fn train_from(
    mut params: LstmParams,
    train_set: &[Sample],
    validation: &[Sample],
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TrainReport, RnnError> {
    config.validate()?;
    let started = Instant::now();
    for s in train_set.iter().chain(validation) {
        if s.x.len() != s.steps() * params.dim {
            return Err(RnnError::Shape(format!(
                "sample with {} values over {} steps does not match dim {}",
                s.x.len(),
                s.steps(),
                params.dim
            )));
        }
    }
    let mut adam = Adam::new(config.adam(), params.data.len());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let batch_size = config.batch_size.min(train_set.len()).max(1);
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, LstmParams)> = None;
    let mut since_best = 0usize;
    let mut stopped_early = false;

    for epoch in 0..config.epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for (bi, idx) in order.chunks(batch_size).enumerate() {
            let batch: Vec<&Sample> = idx.iter().map(|&i| &train_set[i]).collect();
            let masks: Vec<Option<Vec<f64>>> = batch
                .iter()
                .map(|_| (config.dropout_rate > 0.0).then(|| dropout_mask(params.hidden, config.dropout_rate, rng)))
                .collect();
            let (loss, grad) = batch_gradient(&params, &batch, &masks)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(RnnError::Diverged {
                    epoch,
                    batch: bi,
                    detail: format!("loss {loss}"),
                });
            }
            adam.step(&mut params.data, &grad);
            if !params.is_finite() {
                return Err(RnnError::Diverged {
                    epoch,
                    batch: bi,
                    detail: "non-finite parameters after update".into(),
                });
            }
            epoch_loss += loss * idx.len() as f64;
        }
        let loss = epoch_loss / train_set.len() as f64;

        let (validation_loss, metrics) = if validation.is_empty() {
            (None, None)
        } else {
            let (vl, conf) = evaluate(&params, validation, config.threshold)?;
            (Some(vl), compute_metrics(&conf).ok())
        };
        log::debug!("epoch {epoch}: loss {loss:.6} validation {validation_loss:?}");
        epochs.push(EpochStats {
            epoch,
            loss,
            validation_loss,
            validation: metrics,
        });

        if let (Some(patience), Some(vl)) = (config.patience, validation_loss) {
            if best.as_ref().is_none_or(|(b, _)| vl < *b) {
                best = Some((vl, params.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= patience {
                    stopped_early = true;
                    break;
                }
            }
        }
    }
    if stopped_early {
        if let Some((_, p)) = best {
            params = p;
        }
    }
    Ok(TrainReport {
        epochs,
        params,
        wall_time: started.elapsed(),
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| {
                let pos = i % 2 == 0;
                let v = if pos { 1.0f32 } else { -1.0 };
                Sample::padded(vec![v, 0.5, v, -0.5, 0.0, 0.0], 3, 2, if pos { 1.0 } else { 0.0 })
            })
            .collect()
    }

    fn cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            hidden: 4,
            batch_size: 4,
            learning_rate: 0.05,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initial_params() {
        let data = toy(8);
        let report = train(&data, &[], &cfg(0)).unwrap();
        let init = LstmParams::init(2, 4, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(report.params, init);
        assert!(report.epochs.is_empty());
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let data = toy(12);
        let a = train(&data, &data[..4], &cfg(5)).unwrap();
        let b = train(&data, &data[..4], &cfg(5)).unwrap();
        let bits = |p: &LstmParams| p.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.params), bits(&b.params));
        assert_eq!(a.epochs, b.epochs);
    }

    #[test]
    fn learns_a_separable_toy() {
        let data = toy(16);
        let report = train(&data, &data, &cfg(60)).unwrap();
        let last = report.epochs.last().unwrap();
        assert!(last.loss < report.epochs[0].loss);
        assert_eq!(last.validation.unwrap().f1, Some(1.0));
    }

    #[test]
    fn chunked_gradient_matches_plain_mean() {
        let data = toy(19);
        let p = LstmParams::seeded(2, 3, 2);
        let refs: Vec<&Sample> = data.iter().collect();
        let masks = vec![None; data.len()];
        let (l1, g1) = batch_gradient(&p, &refs, &masks).unwrap();
        let (l2, g2) = super::super::backward(&p, &data, None).unwrap();
        assert!((l1 - l2).abs() < 1e-14);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn patience_stops_and_keeps_best() {
        let data = toy(8);
        let c = TrainConfig {
            patience: Some(1),
            learning_rate: 0.9,
            ..cfg(200)
        };
        let report = train(&data, &data, &c).unwrap();
        assert!(report.epochs.len() <= 200);
        if report.stopped_early {
            let best = report
                .epochs
                .iter()
                .filter_map(|e| e.validation_loss)
                .fold(f64::INFINITY, f64::min);
            let (vl, _) = evaluate(&report.params, &data, 0.5).unwrap();
            assert!((vl - best).abs() < 1e-12);
        }
    }

    #[test]
    fn config_rejects_bad_values() {
        assert!(TrainConfig {
            dropout_rate: 1.0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            threshold: 1.0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig::default().validate().is_ok());
        assert!(train(&[], &[], &TrainConfig::default()).is_err());
    }
}
