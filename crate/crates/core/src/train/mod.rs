//! The four-term training objective, Adam, the mini-batch loop and the
//! Hebbian weight-storage variant.

mod loss;

pub use loss::{
    evaluate_objective, loss_ae, loss_asso, loss_attr, loss_bl, objective, perturb_latent,
    LatentPerturbation, LossBreakdown, LossVars, TrainBatch,
};

use serde::{Deserialize, Serialize};

use crate::data::{CorruptionSpec, Dataset, MaskSide, Rng};
use crate::error::{Error, Result};
use crate::model::Lshn;
use crate::ndgrad::{Graph, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub ae: f64,
    pub bl: f64,
    pub attr: f64,
    pub asso: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            ae: 1.0,
            bl: 1.0,
            attr: 1.0,
            asso: 1.0,
        }
    }
}

impl LossWeights {
    pub fn combine(&self, b: &LossBreakdown) -> f64 {
        let mut total = 0.0;
        for (w, l) in [(self.ae, b.l_ae), (self.bl, b.l_bl), (self.attr, b.l_attr), (self.asso, b.l_asso)] {
            if w != 0.0 {
                total += w * l;
            }
        }
        total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    /// Upper bound; the effective size is `min(batch_size, N_pat)`.
    pub batch_size: usize,
    pub t_train: usize,
    pub weights: LossWeights,
    pub flip_prob: f64,
    pub latent_sigma: f64,
    /// Corruptions applied to every pattern to form `X_noisy`.
    pub corruptions: Vec<CorruptionSpec>,
    /// Detach the `E(x)` target inside the attractor and association terms.
    pub stop_gradient: bool,
    /// Derive `I` from the perturbed start state rather than the clean latent.
    pub input_from_perturbed: bool,
    /// Score noisy reconstructions against the noisy input instead of the clean one.
    pub strict_autoencoding: bool,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 2000,
            batch_size: 64,
            t_train: 10,
            weights: LossWeights::default(),
            flip_prob: 0.1,
            latent_sigma: 0.2,
            corruptions: vec![
                CorruptionSpec::half_mask(MaskSide::Bottom),
                CorruptionSpec::gaussian(0.5),
            ],
            stop_gradient: true,
            input_from_perturbed: false,
            strict_autoencoding: false,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_train == 0 {
            return Err(Error::Invalid("t_train must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Invalid("batch_size must be >= 1".into()));
        }
        let w = self.weights;
        for (name, v) in [("ae", w.ae), ("bl", w.bl), ("attr", w.attr), ("asso", w.asso)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Invalid(format!("loss weight `{name}` must be finite and >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::Invalid(format!("flip_prob must lie in [0, 1], got {}", self.flip_prob)));
        }
        if !(self.latent_sigma >= 0.0) {
            return Err(Error::Invalid(format!("latent_sigma must be >= 0, got {}", self.latent_sigma)));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::Invalid(format!("lr must be finite and >= 0, got {}", self.lr)));
        }
        let a = self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return Err(Error::Invalid("adam needs beta1, beta2 in [0, 1) and eps > 0".into()));
        }
        for c in &self.corruptions {
            c.validate()?;
        }
        Ok(())
    }

    pub fn effective_batch(&self, n_pat: usize) -> usize {
        self.batch_size.min(n_pat).max(1)
    }
}

/// Adam with bias correction. Moment buffers are created on the first step.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub cfg: AdamConfig,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(lr: f64, cfg: AdamConfig) -> Self {
        Self {
            lr,
            cfg,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update from the gradients stored on `model`'s params.
    pub fn step(&mut self, model: &mut Lshn) {
        let params = model.params.iter_mut();
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for ((p, m), v) in params.into_iter().zip(&mut self.m).zip(&mut self.v) {
            let g = p.grad.data();
            let w = p.value.data_mut();
            for (((w, &g), m), v) in w.iter_mut().zip(g).zip(m.data_mut()).zip(v.data_mut()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *w -= self.lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitHistory {
    pub epochs: Vec<EpochLog>,
}

impl FitHistory {
    pub fn last(&self) -> Option<&LossBreakdown> {
        self.epochs.last().map(|e| &e.loss)
    }

    /// `epoch,l_ae,l_bl,l_attr,l_asso,total` with one row per epoch.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,l_ae,l_bl,l_attr,l_asso,total\n");
        for e in &self.epochs {
            let l = e.loss;
            s.push_str(&format!(
                "{},{:e},{:e},{:e},{:e},{:e}\n",
                e.epoch, l.l_ae, l.l_bl, l.l_attr, l.l_asso, l.total
            ));
        }
        s
    }
}

/// Runs `cfg.epochs` epochs of mini-batch Adam on `model`.
pub fn fit(model: &mut Lshn, ds: &Dataset, cfg: &TrainConfig) -> Result<FitHistory> {
    fit_with(model, ds, cfg, |_| {})
}

/// Like [`fit`], calling `on_epoch` after every epoch.
pub fn fit_with(
    model: &mut Lshn,
    ds: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<FitHistory> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::Invalid("cannot train on an empty dataset".into()));
    }
    if ds.geometry.dim() != model.dims.d_img {
        return Err(Error::Shape {
            op: "fit",
            lhs: vec![ds.geometry.dim()],
            rhs: vec![model.dims.d_img],
        });
    }
    let root = Rng::new(cfg.seed);
    let batch = cfg.effective_batch(ds.len());
    let mut adam = Adam::new(cfg.lr, cfg.adam);
    let mut history = FitHistory::default();
    let mut order: Vec<usize> = (0..ds.len()).collect();
    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        root.substream(&[epoch as u64, 0]).shuffle(&mut order);
        let mut sum = LossBreakdown::default();
        for (b, idx) in order.chunks(batch).enumerate() {
            let tb = TrainBatch::sample(ds, idx, model.dims.n_neurons, cfg, epoch, &root);
            let mut g = Graph::new();
            let bp = model.bind(&mut g)?;
            let vars = objective(&mut g, model, &bp, &tb, cfg)?;
            let loss = vars.breakdown(&g);
            if let Some(term) = loss.first_non_finite() {
                return Err(Error::NonFinite { term, epoch, batch: b });
            }
            let grads = g.backward(vars.total)?;
            model.params.zero_grad();
            grads.accumulate(&mut model.params.iter_mut())?;
            adam.step(model);
            let w = idx.len() as f64;
            sum.l_ae += w * loss.l_ae;
            sum.l_bl += w * loss.l_bl;
            sum.l_attr += w * loss.l_attr;
            sum.l_asso += w * loss.l_asso;
            sum.total += w * loss.total;
        }
        let n = ds.len() as f64;
        let log = EpochLog {
            epoch,
            loss: LossBreakdown {
                l_ae: sum.l_ae / n,
                l_bl: sum.l_bl / n,
                l_attr: sum.l_attr / n,
                l_asso: sum.l_asso / n,
                total: sum.total / n,
            },
        };
        on_epoch(&log);
        history.epochs.push(log);
    }
    Ok(history)
}

/// Binarized latents `sign(E(x))` with zero mapped to `+1`.
pub fn latent_signs(model: &Lshn, ds: &Dataset) -> Result<Tensor> {
    Ok(model
        .encode(&ds.images)?
        .map(|z| if z >= 0.0 { 1.0 } else { -1.0 }))
}

/// `(1/N) Σ_μ ξ^μ ξ^μᵀ` over the rows of `xi` with the diagonal set to zero.
pub fn hebbian_weights(xi: &Tensor) -> Result<Tensor> {
    let n = xi.cols();
    let mut w = xi.transpose()?.matmul(xi)?.scale(1.0 / n as f64);
    for i in 0..n {
        w.set(i, i, 0.0);
    }
    Ok(w)
}

/// Replaces the recurrent weights with the outer-product rule on the
/// binarized latents of `ds` and switches the external input off. Encoder
/// and decoder are left alone.
pub fn hebbian_fit(model: &mut Lshn, ds: &Dataset) -> Result<()> {
    let n = model.dims.n_neurons;
    let w = if ds.is_empty() {
        Tensor::zeros(&[n, n])
    } else {
        hebbian_weights(&latent_signs(model, ds)?)?
    };
    model.params.a.value = w;
    model.params.w_in.value = Tensor::zeros(&[n, n]);
    model.params.b_in.value = Tensor::zeros(&[1, n]);
    model.zero_diagonal = true;
    model.params.zero_grad();
    Ok(())
}
