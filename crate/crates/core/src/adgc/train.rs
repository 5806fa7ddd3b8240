//! Adam training loop over labeled windows.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use super::forward::forward_window;
use super::model::{ModelDims, SyncModel};
use super::structure::GraphStructure;
use super::{AdgcError, TrainConfig};

/// One labeled training sample: per-step node coordinates (each N×3,
/// millimeters) and the class label.
#[derive(Debug, Clone)]
pub struct TrainingWindow {
    pub coords: Vec<Array2<f64>>,
    pub label: usize,
}

/// Per-epoch mean loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub total: f64,
    pub ce_global: f64,
    pub ce_local: f64,
    pub reg_focus: f64,
    pub reg_count: f64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

struct Adam {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    step: u64,
}

impl Adam {
    fn new(params: &[Array2<f64>]) -> Self {
        Self {
            m: params.iter().map(|p| Array2::zeros(p.dim())).collect(),
            v: params.iter().map(|p| Array2::zeros(p.dim())).collect(),
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [Array2<f64>], grads: &[Option<Array2<f64>>], lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.step as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.step as i32);
        for (i, p) in params.iter_mut().enumerate() {
            let Some(g) = &grads[i] else { continue };
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for ((pv, gv), (mv, vv)) in
                p.iter_mut().zip(g.iter()).zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mv = ADAM_BETA1 * *mv + (1.0 - ADAM_BETA1) * gv;
                *vv = ADAM_BETA2 * *vv + (1.0 - ADAM_BETA2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
    }
}

fn check_finite(term: &'static str, value: f64, epoch: usize) -> Result<(), AdgcError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(AdgcError::NanLoss { term, epoch })
    }
}

/// Trains a fresh model on the dataset. Deterministic for a fixed seed: the
/// windows are visited in order and the learning rate follows
/// `lr · decay^(epoch / decay_epochs)`. Returns the model and the per-epoch
/// loss curve.
pub fn train(
    dataset: &[TrainingWindow],
    structure: &GraphStructure,
    dims: ModelDims,
    config: &TrainConfig,
) -> Result<(SyncModel, Vec<EpochLoss>), AdgcError> {
    if dataset.is_empty() {
        return Err(AdgcError::EmptyDataset);
    }
    for (i, w) in dataset.iter().enumerate() {
        if w.coords.len() != config.window_len {
            return Err(AdgcError::ShapeMismatch(format!(
                "window {i} has {} steps, config says {}",
                w.coords.len(),
                config.window_len
            )));
        }
        if w.label >= dims.classes {
            return Err(AdgcError::ClassOutOfRange { label: w.label, classes: dims.classes });
        }
    }

    let mut model = SyncModel::init(dims, config.seed);
    let mut adam = Adam::new(model.params());
    let mut curve = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let lr = config.learning_rate
            * config.lr_decay_factor.powi((epoch / config.lr_decay_epochs.max(1)) as i32);
        let mut sums = [0.0f64; 5];
        for window in dataset {
            let out = forward_window(
                &model,
                structure,
                &window.coords,
                Some(window.label),
                config.lambda_bar,
                config.beta_bar,
                true,
            )?;
            let parts = out.loss_breakdown().expect("labeled forward has a loss");
            check_finite("ce_global", parts.ce_global, epoch)?;
            check_finite("ce_local", parts.ce_local, epoch)?;
            check_finite("reg_focus", parts.reg_focus, epoch)?;
            check_finite("reg_count", parts.reg_count, epoch)?;
            check_finite("total", parts.total, epoch)?;
            sums[0] += parts.total;
            sums[1] += parts.ce_global;
            sums[2] += parts.ce_local;
            sums[3] += parts.reg_focus;
            sums[4] += parts.reg_count;

            let grads_by_node = out.tape.backward(out.loss.as_ref().unwrap().total);
            let grads: Vec<Option<Array2<f64>>> = out
                .param_vars
                .iter()
                .map(|&v| grads_by_node.get(v).cloned())
                .collect();
            adam.update(model.params_mut(), &grads, lr);
        }
        let n = dataset.len() as f64;
        curve.push(EpochLoss {
            epoch,
            total: sums[0] / n,
            ce_global: sums[1] / n,
            ce_local: sums[2] / n,
            reg_focus: sums[3] / n,
            reg_count: sums[4] / n,
        });
    }
    Ok((model, curve))
}

/// Writes the loss curve as `epoch,total,ce_g,ce_l,reg1,reg2` rows.
pub fn write_loss_curve(path: &Path, curve: &[EpochLoss]) -> Result<(), AdgcError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "epoch,total,ce_g,ce_l,reg1,reg2")?;
    for e in curve {
        writeln!(
            out,
            "{},{:.12},{:.12},{:.12},{:.12},{:.12}",
            e.epoch, e.total, e.ce_global, e.ce_local, e.reg_focus, e.reg_count
        )?;
    }
    Ok(())
}
