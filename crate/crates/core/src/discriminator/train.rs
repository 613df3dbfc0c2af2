use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Discriminator, DistortionPair, Gradients, LabeledExample, Mlp};
use crate::error::{Error, Result};
use crate::extractor::StyleRepresentation;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
    pub use_distortion_term: bool,
    pub use_augmentation: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-5,
            max_epochs: 100,
            patience: 10,
            batch_size: 32,
            hidden: vec![512, 128],
            seed: 0,
            use_distortion_term: true,
            use_augmentation: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        if self.patience >= self.max_epochs {
            return Err(Error::InvalidConfig("patience must be < max_epochs".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be > 0".into()));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::InvalidConfig("hidden layer of width 0".into()));
        }
        Ok(())
    }
}

/// Adam with the usual (0.9, 0.999, 1e-8) moments.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, n_params: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let (m, v) = (&mut self.m, &mut self.v);
        net.zip_apply(grads, |i, p, g| {
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            *p -= lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + eps);
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopAction {
    Improved,
    Continue,
    Stop,
}

/// Patience-based early stopping on a loss that should decrease. Ties keep
/// the earlier epoch.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: Option<usize>,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: None,
            since_best: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> StopAction {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = Some(epoch);
            self.since_best = 0;
            return StopAction::Improved;
        }
        self.since_best += 1;
        if self.since_best >= self.patience {
            StopAction::Stop
        } else {
            StopAction::Continue
        }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best_epoch.map(|e| (e, self.best))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub validation_losses: Vec<f64>,
    pub train_losses: Vec<f64>,
}

fn raw_matrix(reps: &[&StyleRepresentation]) -> Array2<f64> {
    let d = reps[0].len();
    Array2::from_shape_fn((reps.len(), d), |(i, j)| reps[i].vector[j] as f64)
}

/// Trains one artist's discriminator.
///
/// Mini-batches of `batch_size` labeled examples are stepped together with
/// a proportional slice of the distortion pairs so both loss terms follow
/// the same schedule. Validation loss is the regression term on `valid`;
/// the parameters of the best validation epoch are returned.
pub fn train(
    artist_id: &str,
    train_set: &[LabeledExample],
    valid: &[LabeledExample],
    pairs: &[DistortionPair],
    cfg: &TrainConfig,
) -> Result<(Discriminator, TrainReport)> {
    cfg.validate()?;
    if train_set.is_empty() || valid.is_empty() {
        return Err(Error::TooFewRecords {
            needed: 1,
            got: train_set.len().min(valid.len()),
        });
    }
    if cfg.use_distortion_term && pairs.is_empty() {
        return Err(Error::InvalidConfig("distortion term enabled without pairs".into()));
    }
    let plan = train_set[0].representation.tap_plan_hash.clone();
    let dim = train_set[0].representation.len();
    let train_reps: Vec<&StyleRepresentation> = train_set.iter().map(|e| &e.representation).collect();
    let first = &train_reps[0].vector;
    if train_reps.iter().all(|r| r.vector == *first) {
        return Err(Error::Degenerate(
            "all training representations are identical".into(),
        ));
    }

    // standardization statistics from the training inputs
    let raw = raw_matrix(&train_reps);
    let mean = raw.mean_axis(Axis(0)).expect("non-empty");
    let var = raw.var_axis(Axis(0), 0.0);
    let scale = var.mapv(|v| if v.sqrt() > 1e-8 { v.sqrt() } else { 1.0 });

    let mut sizes = vec![dim];
    sizes.extend(&cfg.hidden);
    sizes.push(1);
    let mut disc = Discriminator::from_network(artist_id, &plan, Mlp::init(&sizes, cfg.seed)?);
    disc.input_mean = mean.to_vec();
    disc.input_scale = scale.to_vec();
    disc.train_config = Some(cfg.clone());

    let x = disc.matrix(train_set.iter().map(|e| &e.representation))?;
    let y = Array1::from_iter(train_set.iter().map(|e| e.target));
    let xv = disc.matrix(valid.iter().map(|e| &e.representation))?;
    let yv = Array1::from_iter(valid.iter().map(|e| e.target));
    let (gen, public) = if cfg.use_distortion_term {
        (
            Some(disc.matrix(pairs.iter().map(|p| &p.generated_rep))?),
            Some(disc.matrix(pairs.iter().map(|p| &p.public_rep))?),
        )
    } else {
        (None, None)
    };

    let n = x.nrows();
    let steps = n.div_ceil(cfg.batch_size);
    let n_pairs = gen.as_ref().map(|g| g.nrows()).unwrap_or(0);
    let pairs_per_step = if n_pairs > 0 { n_pairs.div_ceil(steps).max(1) } else { 0 };

    let mut rng = rng::seeded(cfg.seed ^ 0x5eed);
    let mut adam = Adam::new(cfg.learning_rate, disc.network.param_count());
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_net = disc.network.clone();
    let mut report = TrainReport {
        epochs_run: 0,
        best_epoch: 0,
        best_validation_loss: f64::INFINITY,
        validation_losses: Vec::new(),
        train_losses: Vec::new(),
    };
    let mut order: Vec<usize> = (0..n).collect();
    let mut pair_order: Vec<usize> = (0..n_pairs).collect();

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        pair_order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let xb = x.select(Axis(0), chunk);
            let yb = y.select(Axis(0), chunk);
            let (gb, pb) = match (&gen, &public) {
                (Some(g), Some(p)) => {
                    let idx: Vec<usize> = (0..pairs_per_step)
                        .map(|k| pair_order[(step * pairs_per_step + k) % n_pairs])
                        .collect();
                    (Some(g.select(Axis(0), &idx)), Some(p.select(Axis(0), &idx)))
                }
                _ => (None, None),
            };
            let (l, grads) = disc.network.loss_and_grad(&xb, yb.view(), gb.as_ref(), pb.as_ref());
            epoch_loss += l * chunk.len() as f64 / n as f64;
            adam.step(&mut disc.network, &grads);
        }
        let vloss = disc.network.loss(&xv, &yv, None, None);
        report.train_losses.push(epoch_loss);
        report.validation_losses.push(vloss);
        report.epochs_run = epoch + 1;
        match stopper.observe(epoch, vloss) {
            StopAction::Improved => best_net = disc.network.clone(),
            StopAction::Continue => {}
            StopAction::Stop => break,
        }
    }
    let (best_epoch, best_loss) = stopper.best().unwrap_or((0, f64::INFINITY));
    report.best_epoch = best_epoch;
    report.best_validation_loss = best_loss;
    disc.network = best_net;
    Ok((disc, report))
}

/// Trains from raw positive and negative representations, holding out
/// 20 % of each class (at least one) for validation.
pub fn train_from_reps(
    artist_id: &str,
    reps_pos: &[StyleRepresentation],
    reps_neg: &[StyleRepresentation],
    pairs: &[DistortionPair],
    cfg: &TrainConfig,
) -> Result<(Discriminator, TrainReport)> {
    if reps_pos.len() < 4 {
        return Err(Error::TooFewRecords {
            needed: 4,
            got: reps_pos.len(),
        });
    }
    if reps_neg.is_empty() {
        return Err(Error::TooFewRecords { needed: 1, got: 0 });
    }
    let all_same = reps_pos
        .iter()
        .chain(reps_neg)
        .all(|r| r.vector == reps_pos[0].vector);
    if all_same {
        return Err(Error::Degenerate(
            "positive and negative representations are identical".into(),
        ));
    }
    let mut r = rng::seeded(cfg.seed ^ 0x5b11);
    let mut split = |reps: &[StyleRepresentation], target: f64| {
        let mut idx: Vec<usize> = (0..reps.len()).collect();
        idx.shuffle(&mut r);
        let n_train = ((reps.len() as f64 * 0.8 + 1e-9).floor() as usize).clamp(1, reps.len().saturating_sub(1).max(1));
        let mk = |i: &usize| LabeledExample {
            representation: reps[*i].clone(),
            target,
        };
        let train: Vec<_> = idx[..n_train].iter().map(mk).collect();
        let valid: Vec<_> = idx[n_train..].iter().map(mk).collect();
        (train, valid)
    };
    let (mut tr, mut va) = split(reps_pos, 1.0);
    let (tn, vn) = split(reps_neg, -1.0);
    tr.extend(tn);
    va.extend(vn);
    train(artist_id, &tr, &va, pairs, cfg)
}
