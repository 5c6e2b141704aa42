//! Plain mini-batch SGD over the imitation loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, DatasetConfig, TrainingSample};
use super::loss::{loss_and_grad, loss_parts, LossWeights};
use super::metrics::training_sup_error;
use crate::error::{Error, Result};
use crate::policy::{raw_features, Architecture, SnDnnModel, N_FEATURES};
use crate::dynamics::IsoSnapshot;

/// Loss above which training is declared divergent.
pub const DIVERGENCE_LOSS: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    /// Stop once the mean held-out loss per row is at most this.
    pub test_loss: f64,
    /// ... and the held-out sup control error (N) is at most this.
    pub test_sup_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Cosine decay of the step from `lr` to zero over `epochs`.
    pub cosine_decay: bool,
    pub seed: u64,
    pub weights: LossWeights,
    pub early_stop: Option<EarlyStop>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10_000,
            batch_size: 32,
            lr: 1e-3,
            cosine_decay: false,
            seed: 0,
            weights: LossWeights::default(),
            early_stop: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::invalid("need batch_size > 0 and a finite lr >= 0"));
        }
        self.weights.validate()
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        if self.cosine_decay && self.epochs > 0 {
            0.5 * self.lr * (1.0 + (std::f64::consts::PI * epoch as f64 / self.epochs as f64).cos())
        } else {
            self.lr
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0 is the untrained model.
    pub epoch: usize,
    /// Mean loss per row over the whole training set after the epoch.
    pub train_loss: f64,
    pub train_control: f64,
    pub train_state: f64,
    pub test_loss: Option<f64>,
    pub test_sup_error: Option<f64>,
    pub lr: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StopReason {
    Completed,
    EarlyStop { epoch: usize },
    Diverged { epoch: usize, loss: f64 },
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub model: SnDnnModel,
    pub history: Vec<EpochRecord>,
    pub stop: StopReason,
}

/// Max-abs normalization constants of the raw features and the labels.
///
/// Zero or non-finite maxima fall back to 1 (features) or `u_max` (outputs)
/// so the model stays well defined on degenerate data.
pub fn fit_normalization(rows: &[TrainingSample], cfg: &DatasetConfig) -> Result<(Vec<f64>, [f64; 3])> {
    if rows.is_empty() {
        return Err(Error::invalid("cannot normalize on an empty dataset"));
    }
    let mut inp = vec![0.0f64; N_FEATURES];
    let mut out = [0.0f64; 3];
    for r in rows {
        let snap = IsoSnapshot::new(r.oe_bar)?;
        let input = crate::policy::GuidanceInput {
            x_hat: r.x_bar,
            oe_hat: r.oe_bar,
            t: r.t_bar,
            rho: r.rho_bar,
            t_f: r.t_f,
        };
        let f = raw_features(&input, &snap.frame, cfg.model)?;
        for (m, x) in inp.iter_mut().zip(f) {
            *m = m.max(x.abs());
        }
        for (m, u) in out.iter_mut().zip(r.u_label.iter()) {
            *m = m.max(u.abs());
        }
    }
    for m in inp.iter_mut() {
        if !(*m > 0.0 && m.is_finite()) {
            *m = 1.0;
        }
    }
    for m in out.iter_mut() {
        if !(*m > 0.0 && m.is_finite()) {
            *m = cfg.u_max;
        }
    }
    Ok((inp, out))
}

/// Random model with normalization fitted to `ds`.
pub fn init_model(arch: Architecture, ds: &Dataset, seed: u64) -> Result<SnDnnModel> {
    let mut model = SnDnnModel::new_random(arch, seed)?;
    let (inp, out) = fit_normalization(&ds.rows, &ds.cfg)?;
    model.set_normalization(inp, out)?;
    Ok(model)
}

fn evaluate(model: &SnDnnModel, ds: &Dataset, w: &LossWeights) -> Result<(f64, f64, f64)> {
    let p = loss_parts(model, &ds.rows, w, &ds.cfg)?;
    let n = ds.rows.len() as f64;
    Ok((p.total() / n, p.control / n, p.state / n))
}

fn diverged(e: &Error) -> bool {
    matches!(e, Error::NonFinite { .. })
}

/// Trains `model` with mini-batch SGD.
///
/// The step uses the batch-mean gradient of the summed loss. Batches are a
/// fresh seeded shuffle each epoch, processed in order, so the result is a
/// deterministic function of the inputs. Divergence ends training early
/// with [`StopReason::Diverged`]; the partial history is kept.
pub fn train(
    mut model: SnDnnModel,
    train_ds: &Dataset,
    test_ds: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<TrainResult> {
    cfg.validate()?;
    if train_ds.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let w = &cfg.weights;
    let eval_test = |m: &SnDnnModel| -> Result<(Option<f64>, Option<f64>)> {
        match test_ds {
            Some(t) if !t.is_empty() => Ok((
                Some(evaluate(m, t, w)?.0),
                Some(training_sup_error(m, &t.rows, t.cfg.model)?),
            )),
            _ => Ok((None, None)),
        }
    };
    let (l0, c0, s0) = evaluate(&model, train_ds, w)?;
    let (tl, ts) = eval_test(&model)?;
    let mut history = vec![EpochRecord {
        epoch: 0,
        train_loss: l0,
        train_control: c0,
        train_state: s0,
        test_loss: tl,
        test_sup_error: ts,
        lr: 0.0,
        grad_norm: 0.0,
    }];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_ds.len()).collect();
    for epoch in 1..=cfg.epochs {
        let lr = cfg.lr_at(epoch - 1);
        order.shuffle(&mut rng);
        let mut grad_norm: f64 = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<TrainingSample> = chunk.iter().map(|&i| train_ds.rows[i]).collect();
            let (l, mut g) = match loss_and_grad(&model, &batch, w, &train_ds.cfg) {
                Ok(v) => v,
                Err(e) if diverged(&e) => {
                    let stop = StopReason::Diverged { epoch, loss: f64::NAN };
                    return Ok(TrainResult { model, history, stop });
                }
                Err(e) => return Err(e),
            };
            if l > DIVERGENCE_LOSS {
                let stop = StopReason::Diverged { epoch, loss: l };
                return Ok(TrainResult { model, history, stop });
            }
            g.scale(1.0 / batch.len() as f64);
            grad_norm = grad_norm.max(g.norm());
            if lr > 0.0 {
                model.sgd_step(&g, lr);
            }
        }
        let (l, c, s) = match evaluate(&model, train_ds, w) {
            Ok(v) => v,
            Err(e) if diverged(&e) => {
                let stop = StopReason::Diverged { epoch, loss: f64::NAN };
                return Ok(TrainResult { model, history, stop });
            }
            Err(e) => return Err(e),
        };
        let (tl, ts) = eval_test(&model)?;
        history.push(EpochRecord {
            epoch,
            train_loss: l,
            train_control: c,
            train_state: s,
            test_loss: tl,
            test_sup_error: ts,
            lr,
            grad_norm,
        });
        if l * train_ds.len() as f64 > DIVERGENCE_LOSS {
            let stop = StopReason::Diverged { epoch, loss: l };
            return Ok(TrainResult { model, history, stop });
        }
        if let (Some(es), Some(tl), Some(ts)) = (cfg.early_stop, tl, ts) {
            if tl <= es.test_loss && ts <= es.test_sup_error {
                return Ok(TrainResult {
                    model,
                    history,
                    stop: StopReason::EarlyStop { epoch },
                });
            }
        }
    }
    Ok(TrainResult {
        model,
        history,
        stop: StopReason::Completed,
    })
}
