use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, TrainingMeta};
use super::graph::{Graph, ParamSet, Var};
use super::net::{ChordModel, Dropout, ModelConfig};
use crate::chord::{structured_targets, ChordClassId};
use crate::dsp::{augment, AugmentPolicy};
use crate::error::{Error, Result};

/// One window of CQT features (`bins x T`) with a label per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub features: Array2<f32>,
    pub labels: Vec<ChordClassId>,
}

impl TrainExample {
    pub fn new(features: Array2<f32>, labels: Vec<ChordClassId>) -> Result<Self> {
        if features.ncols() != labels.len() {
            return Err(Error::Shape(format!(
                "{} frames of features but {} labels",
                features.ncols(),
                labels.len()
            )));
        }
        if labels.is_empty() {
            return Err(Error::Empty { what: "training window" });
        }
        Ok(TrainExample { features, labels })
    }

    pub fn n_frames(&self) -> usize {
        self.labels.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    pub weight_decay: f64,
    /// First warm-restart period, in epochs.
    pub restart_period: f64,
    pub restart_mult: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub root_loss_weight: f64,
    pub bass_loss_weight: f64,
    pub pitch_loss_weight: f64,
    pub augment: Option<AugmentPolicy>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            min_learning_rate: 0.0,
            weight_decay: 1e-2,
            restart_period: 10.0,
            restart_mult: 2.0,
            batch_size: 8,
            patience: 20,
            max_epochs: 200,
            seed: 0,
            root_loss_weight: 0.0,
            bass_loss_weight: 0.0,
            pitch_loss_weight: 0.0,
            augment: Some(AugmentPolicy::default()),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch size and max epochs must be positive".into()));
        }
        if !(self.restart_period > 0.0) || self.restart_mult < 1.0 {
            return Err(Error::Config("restart period must be positive and multiplier at least 1".into()));
        }
        let weights = [self.root_loss_weight, self.bass_loss_weight, self.pitch_loss_weight, self.weight_decay];
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("loss weights and weight decay must be non-negative".into()));
        }
        Ok(())
    }

    /// Cosine-annealed rate with warm restarts at fractional epoch `t`.
    pub fn lr_at(&self, t: f64) -> f64 {
        let mut period = self.restart_period;
        let mut t_cur = t;
        while t_cur >= period {
            t_cur -= period;
            period *= self.restart_mult;
        }
        let lo = self.min_learning_rate;
        lo + 0.5 * (self.learning_rate - lo) * (1.0 + (PI * t_cur / period).cos())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub learning_rate: f64,
}

struct AdamW {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    decay: Vec<bool>,
    step: i32,
}

impl AdamW {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(params: &ParamSet) -> Self {
        AdamW {
            m: params.zeros_like(),
            v: params.zeros_like(),
            decay: params.names.iter().map(|n| n.ends_with(".w")).collect(),
            step: 0,
        }
    }

    fn update(&mut self, params: &mut ParamSet, grads: &[Array2<f64>], lr: f64, weight_decay: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        for (i, p) in params.values.iter_mut().enumerate() {
            if self.decay[i] {
                *p *= 1.0 - lr * weight_decay;
            }
            ndarray::Zip::from(p)
                .and(&mut self.m[i])
                .and(&mut self.v[i])
                .and(&grads[i])
                .for_each(|p, m, v, &g| {
                    *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
                    *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
                });
        }
    }
}

fn time_major(features: ArrayView2<f32>) -> Array2<f64> {
    features.t().mapv(f64::from)
}

/// Loss graph for one window; `scale` divides the summed frame losses.
fn window_loss(
    model: &ChordModel,
    g: &mut Graph,
    x: Array2<f64>,
    labels: &[ChordClassId],
    cfg: &TrainConfig,
    scale: f64,
    drop: &mut Dropout,
) -> Var {
    let out = model.forward_graph(g, x, drop);
    let targets: Vec<usize> = labels.iter().map(|c| c.index()).collect();
    let mut loss = g.nll(out.chord_log_probs, targets, scale);
    let need_structure = cfg.root_loss_weight > 0.0 || cfg.bass_loss_weight > 0.0 || cfg.pitch_loss_weight > 0.0;
    if !need_structure {
        return loss;
    }
    let st: Vec<_> = labels.iter().map(|&c| structured_targets(c)).collect();
    if cfg.root_loss_weight > 0.0 {
        let lp = g.log_softmax(out.root);
        let l = g.nll(lp, st.iter().map(|s| usize::from(s.root)).collect(), scale * cfg.root_loss_weight);
        loss = g.add(loss, l);
    }
    if cfg.bass_loss_weight > 0.0 {
        let lp = g.log_softmax(out.bass);
        let l = g.nll(lp, st.iter().map(|s| usize::from(s.bass)).collect(), scale * cfg.bass_loss_weight);
        loss = g.add(loss, l);
    }
    if cfg.pitch_loss_weight > 0.0 {
        let y = Array2::from_shape_fn((st.len(), 12), |(t, p)| f64::from(u8::from(st[t].pitches[p])));
        let l = g.bce_logits(out.pitch, y, scale * cfg.pitch_loss_weight / 12.0);
        loss = g.add(loss, l);
    }
    loss
}

/// Mean frame-wise cross-entropy in evaluation mode.
pub fn evaluate_loss(model: &ChordModel, data: &[TrainExample]) -> Result<f64> {
    let frames: usize = data.iter().map(|d| d.n_frames()).sum();
    if frames == 0 {
        return Err(Error::Empty { what: "evaluation set" });
    }
    let mut total = 0.0;
    for ex in data {
        let out = model.forward(ex.features.view())?;
        total -= ex
            .labels
            .iter()
            .enumerate()
            .map(|(t, c)| out.chord_log_probs[[t, c.index()]])
            .sum::<f64>();
    }
    Ok(total / frames as f64)
}

/// Frame accuracy of the arg-max class.
pub fn frame_accuracy(model: &ChordModel, data: &[TrainExample]) -> Result<f64> {
    let mut hits = 0usize;
    let mut frames = 0usize;
    for ex in data {
        let out = model.forward(ex.features.view())?;
        for (t, c) in ex.labels.iter().enumerate() {
            let row = out.chord_log_probs.row(t);
            let best = (0..row.len())
                .max_by(|&a, &b| row[a].total_cmp(&row[b]))
                .unwrap_or(0);
            hits += usize::from(best == c.index());
            frames += 1;
        }
    }
    if frames == 0 {
        return Err(Error::Empty { what: "evaluation set" });
    }
    Ok(hits as f64 / frames as f64)
}

pub fn train(
    train_set: &[TrainExample],
    val_set: &[TrainExample],
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
) -> Result<Checkpoint> {
    train_with_progress(train_set, val_set, cfg, model_cfg, |_| {})
}

/// Train with AdamW, cosine warm restarts stepped per batch and early
/// stopping on validation loss (training loss when no validation set is
/// given). Returns the best epoch's weights.
pub fn train_with_progress(
    train_set: &[TrainExample],
    val_set: &[TrainExample],
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<Checkpoint> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Empty { what: "training set" });
    }
    if let Some(bad) = train_set.iter().chain(val_set).find(|e| e.features.nrows() != model_cfg.n_bins) {
        return Err(Error::Shape(format!(
            "window has {} bins, model expects {}",
            bad.features.nrows(),
            model_cfg.n_bins
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = ChordModel::new(model_cfg.clone(), &mut rng)?;
    let mut opt = AdamW::new(&model.params);
    let n_batches = train_set.len().div_ceil(cfg.batch_size);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut best = (f64::INFINITY, 0usize, model.params.clone());
    let mut meta = TrainingMeta {
        seed: cfg.seed,
        ..TrainingMeta::default()
    };
    let mut stop_epoch = cfg.max_epochs;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_frames = 0usize;
        let mut lr = cfg.learning_rate;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let frames: usize = batch.iter().map(|&i| train_set[i].n_frames()).sum();
            let scale = 1.0 / frames as f64;
            let mut grads = model.params.zeros_like();
            let mut batch_loss = 0.0;
            for &i in batch {
                let ex = &train_set[i];
                let feats = match &cfg.augment {
                    Some(policy) => augment(&ex.features, policy, &mut rng),
                    None => ex.features.clone(),
                };
                let mut g = Graph::new(&model.params);
                let mut drop_rng = ChaCha8Rng::from_rng(&mut rng).map_err(|e| Error::Numeric(e.to_string()))?;
                let mut drop = Dropout::train(model_cfg.dropout, &mut drop_rng);
                let loss = window_loss(&model, &mut g, time_major(feats.view()), &ex.labels, cfg, scale, &mut drop);
                let value = g.scalar(loss);
                if !value.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite training loss at epoch {epoch}, batch {}",
                        b + 1
                    )));
                }
                batch_loss += value;
                g.backward_into(loss, &mut grads);
            }
            lr = cfg.lr_at((epoch - 1) as f64 + b as f64 / n_batches as f64);
            opt.update(&mut model.params, &grads, lr, cfg.weight_decay);
            epoch_loss += batch_loss * frames as f64;
            epoch_frames += frames;
        }
        let train_loss = epoch_loss / epoch_frames as f64;
        let val_loss = if val_set.is_empty() {
            train_loss
        } else {
            evaluate_loss(&model, val_set)?
        };
        if !val_loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite validation loss at epoch {epoch}")));
        }
        meta.train_loss.push(train_loss);
        meta.val_loss.push(val_loss);
        on_epoch(&EpochStats {
            epoch,
            train_loss,
            val_loss,
            learning_rate: lr,
        });
        if val_loss < best.0 {
            best = (val_loss, epoch, model.params.clone());
        } else if epoch - best.1 >= cfg.patience {
            stop_epoch = epoch;
            break;
        }
    }
    meta.epoch = best.1;
    meta.stop_epoch = stop_epoch;
    model.params = best.2;
    Ok(Checkpoint::from_model(&model, meta))
}
