//! Deterministic single-pair trainer with Adam and cosine decay.

use std::f64::consts::PI;

use serde::Serialize;

use crate::autodiff::Var;
use crate::data::Image;
use crate::error::{Error, Result};
use crate::loss::{total_loss, LossConfig};
use crate::metrics::fullref::{mse_slices, psnr_from_mse};
use crate::metrics::serialize_f64;
use crate::model::{init_params, mcafnet_forward, ModelConfig};
use crate::params::{Bound, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    /// Floor of the cosine schedule; capped at `lr`.
    pub lr_min: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            lr: 1e-3,
            lr_min: 1e-8,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: crate::rng::DEFAULT_SEED,
            loss: LossConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Invalid(format!(
                "learning rate {} must be finite and >= 0",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Invalid("Adam betas must lie in [0, 1)".into()));
        }
        self.loss.validate()
    }

    /// Cosine annealing from `lr` at step 0 to the floor at `steps`.
    pub fn lr_at(&self, step: usize) -> f64 {
        let floor = self.lr_min.min(self.lr);
        if self.steps == 0 {
            return self.lr;
        }
        let phase = (step.min(self.steps) as f64 / self.steps as f64 * PI).cos();
        floor + 0.5 * (self.lr - floor) * (1.0 + phase)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceRecord {
    pub step: usize,
    pub loss: f64,
    /// PSNR of the network output against the clear image before the
    /// update of this step.
    #[serde(serialize_with = "serialize_f64")]
    pub psnr: f64,
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ParamStore,
    /// One record per optimisation step.
    pub trace: Vec<TraceRecord>,
    /// Evaluation of the final parameters, `step == steps`, `lr == 0`.
    pub last: TraceRecord,
}

impl TrainOutcome {
    pub fn initial_psnr(&self) -> f64 {
        self.trace.first().unwrap_or(&self.last).psnr
    }

    pub fn psnr_gain(&self) -> f64 {
        self.last.psnr - self.initial_psnr()
    }

    /// The trace plus the final evaluation as JSON lines.
    pub fn to_jsonl(&self) -> String {
        self.trace
            .iter()
            .chain(std::iter::once(&self.last))
            .map(|r| serde_json::to_string(r).expect("trace serializes") + "\n")
            .collect()
    }
}

struct Adam {
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    t: i32,
}

impl Adam {
    fn new(params: &ParamStore) -> Self {
        let zeros = || params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    fn step(
        &mut self,
        params: &mut ParamStore,
        grads: &[Tensor],
        lr: f64,
        cfg: &TrainConfig,
    ) -> Result<()> {
        self.t += 1;
        let (b1, b2) = (cfg.beta1 as f32, cfg.beta2 as f32);
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        let step = (lr * c2.sqrt() / c1) as f32;
        let eps = (cfg.eps * c2.sqrt()) as f32;
        let names: Vec<String> = params.names().map(str::to_string).collect();
        for (i, name) in names.iter().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let mut w = params.get(name)?.to_vec();
            for (j, &g) in grads[i].data().iter().enumerate() {
                m[j] = b1 * m[j] + (1.0 - b1) * g;
                v[j] = b2 * v[j] + (1.0 - b2) * g * g;
                w[j] -= step * m[j] / (v[j].sqrt() + eps);
            }
            params.set(name, Tensor::new(params.get(name)?.dims(), w)?)?;
        }
        Ok(())
    }
}

fn evaluate(
    params: &ParamStore,
    x: &Tensor,
    y: &Tensor,
    model: &ModelConfig,
    cfg: &TrainConfig,
    grad: bool,
) -> Result<(f64, f64, Option<Vec<Tensor>>)> {
    let p = if grad {
        Bound::<f32>::trainable(params)
    } else {
        Bound::frozen(params)
    };
    let target = Var::constant(y.clone());
    let out = mcafnet_forward(&Var::constant(x.clone()), &p, model)?;
    let loss = total_loss(&out.dehazed, &target, &out.fakes, &cfg.loss)?;
    let lv = loss.value().item() as f64;
    let psnr = psnr_from_mse(mse_slices(out.dehazed.value().data(), y.data()), 1.0);
    if !grad || !lv.is_finite() {
        return Ok((lv, psnr, None));
    }
    loss.backward();
    Ok((lv, psnr, Some(p.grads().into_values().collect())))
}

/// Overfit a freshly initialised network to one hazy/clear pair.
pub fn train_overfit(
    hazy: &Image,
    clear: &Image,
    model: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if (hazy.width(), hazy.height()) != (clear.width(), clear.height()) {
        return Err(Error::shape("train_overfit", "hazy and clear dims differ"));
    }
    let x = hazy.to_tensor();
    let y = clear.to_tensor();
    let mut params = init_params(model, cfg.seed)?;
    let mut adam = Adam::new(&params);
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let (loss, psnr, grads) = evaluate(&params, &x, &y, model, cfg, true)?;
        let grads = grads.ok_or(Error::Diverged { step, loss })?;
        let lr = cfg.lr_at(step);
        trace.push(TraceRecord {
            step,
            loss,
            psnr,
            lr,
        });
        adam.step(&mut params, &grads, lr, cfg)?;
    }
    let (loss, psnr, _) = evaluate(&params, &x, &y, model, cfg, false)?;
    if !loss.is_finite() {
        return Err(Error::Diverged {
            step: cfg.steps,
            loss,
        });
    }
    let last = TraceRecord {
        step: cfg.steps,
        loss,
        psnr,
        lr: 0.0,
    };
    Ok(TrainOutcome {
        params,
        trace,
        last,
    })
}

/// Fraction of consecutive `window`-step moving averages that do not
/// increase. Returns 1 when fewer than two windows exist.
pub fn moving_average_nonincreasing(losses: &[f64], window: usize) -> f64 {
    if window == 0 || losses.len() < window + 1 {
        return 1.0;
    }
    let avg: Vec<f64> = losses
        .windows(window)
        .map(|w| w.iter().sum::<f64>() / window as f64)
        .collect();
    let ok = avg.windows(2).filter(|p| p[1] <= p[0]).count();
    ok as f64 / (avg.len() - 1) as f64
}
