//! Mini-batch training for both model families, with two countermeasures
//! built in: a nuclear-norm proximal step that pushes weights toward low
//! rank, and adversarial training that swaps a fraction of each epoch's
//! instances for loss-ascent perturbations of themselves.
//!
//! Everything is deterministic given the config seed: initialization,
//! batch order, the adversarial pool, and per-instance attack seeds all
//! come from one seeded stream, and gradient reductions run in index
//! order.

use std::collections::HashMap;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{loss_ascent, AttackSpec};
use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::explore::{gase_with, ExploreOpts};
use crate::linalg::singular_shrink;
use crate::model::{Activation, LinearModel, Loss, MlpLayer, MlpModel, Model};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Training loss; `squared_hinge` for linear models, `logistic` for
    /// multi-layer ones.
    pub loss: Loss,
    /// Frobenius penalty weight.
    pub l2: f64,
    /// Nuclear-norm weight; each gradient step is followed by singular-value
    /// shrinkage with threshold `lr * lambda_nuc`.
    pub lambda_nuc: f64,
    pub adv_training: bool,
    /// Perturbation budget for training-time attacks.
    pub adv_mu_r: f64,
    /// Fraction of the train split replaced by adversarial examples,
    /// resampled and regenerated every epoch.
    pub adv_fraction: f64,
    /// Iteration cap of the training-time loss ascent.
    pub adv_iters: usize,
    /// Use greedy exploration instead of loss ascent to craft training
    /// examples (slower, for ablations).
    pub adv_gase: bool,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            loss: Loss::SquaredHinge,
            l2: 0.0,
            lambda_nuc: 0.0,
            adv_training: false,
            adv_mu_r: 0.5,
            adv_fraction: 0.5,
            adv_iters: 40,
            adv_gase: false,
            epochs: 100,
            lr: 0.1,
            batch: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self, for_mlp: bool) -> Result<()> {
        match self.loss {
            Loss::SquaredHinge | Loss::Logistic => {}
            other => {
                return Err(Error::InvalidArgument(format!(
                    "training needs squared_hinge or logistic, got {}",
                    other.name()
                )))
            }
        }
        if for_mlp && self.loss != Loss::Logistic {
            return Err(Error::InvalidArgument(
                "multi-layer training uses the logistic loss".into(),
            ));
        }
        if self.l2 < 0.0 || self.lambda_nuc < 0.0 {
            return Err(Error::InvalidArgument("penalty weights must be non-negative".into()));
        }
        if self.adv_training && !(self.adv_mu_r > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "adversarial training needs a positive budget, got {}",
                self.adv_mu_r
            )));
        }
        if !(0.0..=1.0).contains(&self.adv_fraction) {
            return Err(Error::InvalidArgument(format!(
                "adv_fraction must lie in [0,1], got {}",
                self.adv_fraction
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("lr must be positive, got {}", self.lr)));
        }
        if self.batch == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-instance data loss plus the Frobenius penalty at epoch end.
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub model: Model,
    pub epoch_loss: Vec<EpochStats>,
}

/// Singular-value soft-thresholding: shrink every singular value by `tau`,
/// clamping at zero.
pub fn nuclear_prox(m: &Array2<f64>, tau: f64) -> Result<Array2<f64>> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("tau must be >= 0, got {}", tau)));
    }
    Ok(singular_shrink(m, tau))
}

/// Fresh adversarial replacements for this epoch: a seeded sample of the
/// train split, each instance perturbed against the current model.
fn adv_replacements(
    model: &Model,
    ds: &Dataset,
    train_idx: &[usize],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<HashMap<usize, Array1<f64>>> {
    let k = (cfg.adv_fraction * train_idx.len() as f64).round() as usize;
    if k == 0 {
        return Ok(HashMap::new());
    }
    let mut pool = train_idx.to_vec();
    pool.shuffle(rng);
    pool.truncate(k);
    pool.sort_unstable();
    let seeds: Vec<u64> = pool.iter().map(|_| rng.random()).collect();

    let entries: Vec<(usize, Array1<f64>)> = pool
        .par_iter()
        .zip(seeds.par_iter())
        .map(|(&i, &seed)| -> Result<(usize, Array1<f64>)> {
            let inst = ds.instance(i);
            let r = if cfg.adv_gase {
                let spec = AttackSpec {
                    seed,
                    preserve_others: false,
                    max_iter: cfg.adv_iters.max(1),
                    ..AttackSpec::new(cfg.adv_mu_r)
                };
                gase_with(model, &inst.x, &inst.y, &spec, &ExploreOpts::default())?.r
            } else {
                loss_ascent(model, &inst.x, &inst.y, cfg.loss, cfg.adv_mu_r, None, cfg.adv_iters)?
            };
            Ok((i, &inst.x + &r))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(entries.into_iter().collect())
}

fn train_indices(ds: &Dataset) -> Result<Vec<usize>> {
    let idx = ds.indices(Split::Train);
    if idx.is_empty() {
        return Err(Error::EmptyInput("train split is empty".into()));
    }
    Ok(idx)
}

/// Mini-batch gradient descent on `loss + l2 ||W||_F^2`, each step followed
/// by the nuclear proximal operator when `lambda_nuc > 0`. With
/// `adv_training`, a fraction of the instances are replaced per epoch by
/// loss-ascent perturbations at budget `adv_mu_r`.
pub fn train_linear(ds: &Dataset, cfg: &TrainConfig) -> Result<TrainRun> {
    cfg.validate(false)?;
    let idx = train_indices(ds)?;
    let (d, m) = (ds.d, ds.m);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = Array2::from_shape_fn((d, m), |_| {
        rng.sample::<f64, _>(StandardNormal) / (d as f64).sqrt()
    });
    let mut stats = Vec::with_capacity(cfg.epochs);
    let mut stable = w.clone();

    for epoch in 0..cfg.epochs {
        let replaced = if cfg.adv_training {
            let snapshot = Model::Linear(LinearModel::new(w.clone())?);
            adv_replacements(&snapshot, ds, &idx, cfg, &mut rng)?
        } else {
            HashMap::new()
        };
        let mut order = idx.clone();
        order.shuffle(&mut rng);

        let mut data_loss = 0.0;
        for batch in order.chunks(cfg.batch) {
            let mut grad = Array2::<f64>::zeros((d, m));
            for &i in batch {
                let inst = ds.instance(i);
                let x = replaced.get(&i).unwrap_or(&inst.x);
                let h = x.dot(&w);
                data_loss += cfg.loss.value(&inst.y, &h);
                let gl = cfg.loss.grad_scores(&inst.y, &h).expect("validated loss");
                for (col, gv) in gl.iter().enumerate() {
                    grad.column_mut(col).scaled_add(*gv, x);
                }
            }
            grad.mapv_inplace(|v| v / batch.len() as f64);
            grad.scaled_add(2.0 * cfg.l2, &w);
            w.scaled_add(-cfg.lr, &grad);
            if cfg.lambda_nuc > 0.0 {
                w = singular_shrink(&w, cfg.lr * cfg.lambda_nuc);
            }
        }
        let penalty = cfg.l2 * w.iter().map(|v| v * v).sum::<f64>();
        let loss = data_loss / idx.len() as f64 + penalty;
        if !loss.is_finite() || w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                epoch,
                checkpoint: Box::new(Model::Linear(LinearModel::new(stable)?)),
            });
        }
        stable = w.clone();
        stats.push(EpochStats { epoch, loss });
    }
    Ok(TrainRun { model: Model::Linear(LinearModel::new(w)?), epoch_loss: stats })
}

/// Per-layer weight gradients of the per-instance loss, by backprop.
fn mlp_grads(layers: &[MlpLayer], x: &Array1<f64>, y: &Array1<f64>, loss: Loss) -> (f64, Vec<Array2<f64>>) {
    let mut acts = Vec::with_capacity(layers.len() + 1);
    let mut pres = Vec::with_capacity(layers.len());
    acts.push(x.clone());
    for layer in layers {
        let pre = acts.last().unwrap().dot(&layer.a);
        acts.push(pre.mapv(|z| layer.act.apply(z)));
        pres.push(pre);
    }
    let h = acts.last().unwrap();
    let value = loss.value(y, h);
    let mut delta = loss.grad_scores(y, h).expect("validated loss");

    let mut grads = vec![Array2::zeros((0, 0)); layers.len()];
    for li in (0..layers.len()).rev() {
        let layer = &layers[li];
        let dpre = Array1::from_shape_fn(delta.len(), |k| delta[k] * layer.act.deriv(pres[li][k]));
        let mut g = Array2::<f64>::zeros(layer.a.dim());
        for (col, gv) in dpre.iter().enumerate() {
            g.column_mut(col).scaled_add(*gv, &acts[li]);
        }
        grads[li] = g;
        if li > 0 {
            delta = layer.a.dot(&dpre);
        }
    }
    (value, grads)
}

/// Backprop training of a feed-forward net given as a width/activation
/// chain (excluding the input layer; the last width must be the label
/// count). The nuclear proximal step touches the final layer only.
pub fn train_mlp(ds: &Dataset, cfg: &TrainConfig, arch: &[(usize, Activation)]) -> Result<TrainRun> {
    cfg.validate(true)?;
    let idx = train_indices(ds)?;
    if arch.is_empty() {
        return Err(Error::InvalidArgument("architecture chain is empty".into()));
    }
    if arch.last().unwrap().0 != ds.m {
        return Err(Error::InvalidArgument(format!(
            "final layer width {} must equal the label count {}",
            arch.last().unwrap().0,
            ds.m
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut layers = Vec::with_capacity(arch.len());
    let mut fan_in = ds.d;
    for &(width, act) in arch {
        let s = (6.0 / (fan_in + width) as f64).sqrt();
        let a = Array2::from_shape_fn((fan_in, width), |_| rng.random_range(-s..s));
        layers.push(MlpLayer { a, act });
        fan_in = width;
    }
    // Validates widths and the identity final activation.
    MlpModel::new(layers.clone())?;

    let mut stats = Vec::with_capacity(cfg.epochs);
    let mut stable = layers.clone();
    let last = layers.len() - 1;

    for epoch in 0..cfg.epochs {
        let replaced = if cfg.adv_training {
            let snapshot = Model::Mlp(MlpModel::new(layers.clone())?);
            adv_replacements(&snapshot, ds, &idx, cfg, &mut rng)?
        } else {
            HashMap::new()
        };
        let mut order = idx.clone();
        order.shuffle(&mut rng);

        let mut data_loss = 0.0;
        for batch in order.chunks(cfg.batch) {
            let mut grads: Vec<Array2<f64>> =
                layers.iter().map(|l| Array2::zeros(l.a.dim())).collect();
            for &i in batch {
                let inst = ds.instance(i);
                let x = replaced.get(&i).unwrap_or(&inst.x);
                let (value, g) = mlp_grads(&layers, x, &inst.y, cfg.loss);
                data_loss += value;
                for (acc, gi) in grads.iter_mut().zip(g) {
                    *acc += &gi;
                }
            }
            for (li, layer) in layers.iter_mut().enumerate() {
                grads[li].mapv_inplace(|v| v / batch.len() as f64);
                grads[li].scaled_add(2.0 * cfg.l2, &layer.a);
                layer.a.scaled_add(-cfg.lr, &grads[li]);
            }
            if cfg.lambda_nuc > 0.0 {
                layers[last].a = singular_shrink(&layers[last].a, cfg.lr * cfg.lambda_nuc);
            }
        }
        let penalty: f64 =
            cfg.l2 * layers.iter().map(|l| l.a.iter().map(|v| v * v).sum::<f64>()).sum::<f64>();
        let loss = data_loss / idx.len() as f64 + penalty;
        if !loss.is_finite() || layers.iter().any(|l| l.a.iter().any(|v| !v.is_finite())) {
            return Err(Error::Diverged {
                epoch,
                checkpoint: Box::new(Model::Mlp(MlpModel::new(stable)?)),
            });
        }
        stable = layers.clone();
        stats.push(EpochStats { epoch, loss });
    }
    Ok(TrainRun { model: Model::Mlp(MlpModel::new(layers)?), epoch_loss: stats })
}

/// Micro and macro F1 with decisions `h_j > 0`. A label with no true and no
/// predicted positives contributes F1 = 0 to the macro mean.
pub fn f1_metrics(model: &Model, ds: &Dataset, split: Split) -> Result<(f64, f64)> {
    let idx = ds.indices(split);
    if idx.is_empty() {
        return Err(Error::EmptyInput(format!("split {} is empty", split.name())));
    }
    let m = ds.m;
    let mut tp = vec![0usize; m];
    let mut fp = vec![0usize; m];
    let mut fnn = vec![0usize; m];
    for &i in &idx {
        let inst = ds.instance(i);
        let h = model.scores(&inst.x);
        for j in 0..m {
            let pred = h[j] > 0.0;
            let truth = inst.y[j] > 0.0;
            match (pred, truth) {
                (true, true) => tp[j] += 1,
                (true, false) => fp[j] += 1,
                (false, true) => fnn[j] += 1,
                (false, false) => {}
            }
        }
    }
    let f1 = |tp: usize, fp: usize, fnn: usize| -> f64 {
        let denom = 2 * tp + fp + fnn;
        if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    };
    let micro = f1(tp.iter().sum(), fp.iter().sum(), fnn.iter().sum());
    let macro_f1 = (0..m).map(|j| f1(tp[j], fp[j], fnn[j])).sum::<f64>() / m as f64;
    Ok((micro, macro_f1))
}
