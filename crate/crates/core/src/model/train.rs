//! Mini-batch training with Adam and validation-based early stopping.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::net::{Mode, Net};
use super::{ModelConfig, ModelError};
use crate::seed;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Adam with coupled L2 weight decay (the gradient gets `wd·θ` added before
/// the moment updates).
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    weight_decay: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    pub fn new(net: &Net, lr: f64, weight_decay: f64) -> Self {
        let shapes: Vec<usize> = net.tensors().iter().map(|(_, t)| t.len()).collect();
        Self {
            lr,
            weight_decay,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn step(&mut self, net: &mut Net, grads: &Net) {
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t);
        let bc2 = 1.0 - BETA2.powi(self.t);
        let gs = grads.tensors();
        for (k, (_, p)) in net.tensors_mut().into_iter().enumerate() {
            let g = gs[k].1;
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                let gi = g[i] + self.weight_decay * p[i];
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * gi;
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= self.lr * mhat / (vhat.sqrt() + ADAM_EPS);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    /// weights from the epoch with the lowest validation loss
    pub net: Net,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub val_indices: Vec<usize>,
}

impl TrainedModel {
    pub fn history_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.history {
            w.serialize(r).expect("history row serializes");
        }
        String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
    }
}

/// Mean cross-entropy in inference mode.
pub fn mean_loss(net: &Net, data: &Dataset, idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return f64::NAN;
    }
    let mut total = 0.0;
    for chunk in idx.chunks(64) {
        let xs: Vec<(&[f64], &[f64])> = chunk
            .iter()
            .map(|&i| (data.items[i].left.as_slice(), data.items[i].right.as_slice()))
            .collect();
        let labels: Vec<usize> = chunk.iter().map(|&i| data.items[i].label.index()).collect();
        let c = net.forward_eval_cached(&xs);
        debug_assert_eq!(c.mode, Mode::Eval);
        total += Net::loss(&c, &labels) * chunk.len() as f64;
    }
    total / idx.len() as f64
}

/// Split the training indices into (fit, validation) with a seeded shuffle.
pub fn validation_split(train: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx = train.to_vec();
    idx.shuffle(&mut seed::rng(seed, "val-split"));
    let n_val = ((train.len() as f64) * fraction).round() as usize;
    let val = idx[..n_val].to_vec();
    (idx[n_val..].to_vec(), val)
}

/// Batches of `size`; a trailing batch of one joins the previous batch so
/// batch statistics are always defined.
pub fn batches(idx: &[usize], size: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = idx.chunks(size).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().map_or(false, |b| b.len() == 1) {
        let last = out.pop().expect("nonempty");
        out.last_mut().expect("nonempty").extend(last);
    }
    out
}

pub fn train(cfg: &ModelConfig, data: &Dataset) -> Result<TrainedModel, ModelError> {
    train_with(cfg, data, |_| {})
}

/// Train, calling `on_epoch` after every epoch (progress reporting).
pub fn train_with(cfg: &ModelConfig, data: &Dataset, mut on_epoch: impl FnMut(&EpochRecord)) -> Result<TrainedModel, ModelError> {
    cfg.validate()?;
    let want = cfg.map_height * cfg.map_width;
    if let Some(bad) = data.items.iter().find(|it| it.left.len() != want || it.right.len() != want) {
        return Err(ModelError::Shape(format!("item {} does not match {}x{}", bad.tag, cfg.map_height, cfg.map_width)));
    }
    let (fit, val) = validation_split(&data.train, cfg.val_fraction, cfg.seed);
    if fit.len() < 2 {
        return Err(ModelError::Dataset("need at least two training items".into()));
    }
    let mut net = Net::new(cfg)?;
    let mut opt = Adam::new(&net, cfg.lr, cfg.weight_decay);
    let mut shuffle_rng = seed::rng(cfg.seed, "epoch-shuffle");
    let mut dropout_rng = seed::rng(cfg.seed, "dropout");
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Net)> = None;
    let mut order = fit.clone();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sum = 0.0;
        for batch in batches(&order, cfg.batch_size) {
            let xs: Vec<(&[f64], &[f64])> = batch
                .iter()
                .map(|&i| (data.items[i].left.as_slice(), data.items[i].right.as_slice()))
                .collect();
            let labels: Vec<usize> = batch.iter().map(|&i| data.items[i].label.index()).collect();
            let cache = net.forward_batch(&xs, &mut dropout_rng);
            let loss = Net::loss(&cache, &labels);
            if !loss.is_finite() {
                return Err(ModelError::Diverged {
                    epoch,
                    detail: format!("non-finite batch loss; history so far: {history:?}"),
                });
            }
            sum += loss * batch.len() as f64;
            let mut g = net.zeros_like();
            net.backward(&cache, &labels, &mut g);
            opt.step(&mut net, &g);
        }
        let train_loss = sum / order.len() as f64;
        let val_loss = if val.is_empty() { train_loss } else { mean_loss(&net, data, &val) };
        if !val_loss.is_finite() {
            return Err(ModelError::Diverged {
                epoch,
                detail: "non-finite validation loss".into(),
            });
        }
        let rec = EpochRecord {
            epoch,
            train_loss,
            val_loss,
        };
        history.push(rec);
        on_epoch(&rec);
        if best.as_ref().map_or(true, |(b, _, _)| val_loss < *b) {
            best = Some((val_loss, epoch, net.clone()));
        }
        let best_epoch = best.as_ref().expect("set above").1;
        if epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    let epochs_run = history.len();
    let (_, best_epoch, best_net) = best.ok_or_else(|| ModelError::Config("max_epochs must be >= 1".into()))?;
    Ok(TrainedModel {
        net: best_net,
        history,
        best_epoch,
        epochs_run,
        val_indices: val,
    })
}
