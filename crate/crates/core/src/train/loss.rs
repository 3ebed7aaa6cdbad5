use super::TrainConfig;
use crate::data::{corrupt, Dataset, Rng};
use crate::error::{Error, Result};
use crate::model::{BoundParams, Lshn};
use crate::ndgrad::{Graph, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub l_ae: f64,
    pub l_bl: f64,
    pub l_attr: f64,
    pub l_asso: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// The first term (in reporting order) that is not finite.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        [
            ("l_ae", self.l_ae),
            ("l_bl", self.l_bl),
            ("l_attr", self.l_attr),
            ("l_asso", self.l_asso),
            ("total", self.total),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(n, _)| n)
    }
}

/// Sign flips and additive noise that turn `E(x)` into the attractor-loss start state.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPerturbation {
    /// `±1` per component.
    pub signs: Tensor,
    pub noise: Tensor,
}

impl LatentPerturbation {
    pub fn sample(rows: usize, n: usize, flip_prob: f64, sigma: f64, rng: &mut Rng) -> Self {
        let mut signs = Tensor::ones(&[rows, n]);
        let mut noise = Tensor::zeros(&[rows, n]);
        for (s, e) in signs.data_mut().iter_mut().zip(noise.data_mut()) {
            if flip_prob > 0.0 && rng.bernoulli(flip_prob) {
                *s = -1.0;
            }
            if sigma > 0.0 {
                *e = sigma * rng.normal();
            }
        }
        Self { signs, noise }
    }

    pub fn none(rows: usize, n: usize) -> Self {
        Self {
            signs: Tensor::ones(&[rows, n]),
            noise: Tensor::zeros(&[rows, n]),
        }
    }

    pub fn apply(&self, z: &Tensor) -> Result<Tensor> {
        Ok(z.mul(&self.signs)?
            .add(&self.noise)?
            .map(|v| v.clamp(-1.0, 1.0)))
    }

    pub fn apply_g(&self, g: &mut Graph, z: Var) -> Result<Var> {
        let s = g.constant(self.signs.clone());
        let e = g.constant(self.noise.clone());
        let flipped = g.mul(z, s)?;
        let noisy = g.add(flipped, e)?;
        g.clamp(noisy, -1.0, 1.0)
    }
}

/// Flips each component's sign with probability `flip_prob`, adds
/// `N(0, sigma²)` noise and clamps back into `[-1, 1]`.
pub fn perturb_latent(z: &Tensor, flip_prob: f64, sigma: f64, rng: &mut Rng) -> Result<Tensor> {
    LatentPerturbation::sample(z.rows(), z.cols(), flip_prob, sigma, rng).apply(z)
}

/// Everything random that one optimizer step consumes, drawn up front so the
/// objective is a deterministic function of the parameters.
#[derive(Debug, Clone)]
pub struct TrainBatch {
    pub indices: Vec<usize>,
    pub x: Tensor,
    /// One corrupted copy of `x` per configured corruption.
    pub cues: Vec<Tensor>,
    pub perturbation: LatentPerturbation,
}

impl TrainBatch {
    /// Cue noise comes from a sub-stream per (epoch, pattern, corruption);
    /// latent perturbations from a sub-stream per (epoch, pattern).
    pub fn sample(
        ds: &Dataset,
        indices: &[usize],
        n_neurons: usize,
        cfg: &TrainConfig,
        epoch: usize,
        rng: &Rng,
    ) -> Self {
        let x = ds.subset(indices).images;
        let cues = cfg
            .corruptions
            .iter()
            .map(|spec| {
                let mut data = Vec::with_capacity(x.len());
                for &i in indices {
                    let mut r = rng.substream(&[epoch as u64, i as u64, 1, spec.stream_tag()]);
                    data.extend(corrupt(ds.image(i), spec, &ds.geometry, &mut r));
                }
                Tensor::new(x.shape().to_vec(), data).expect("cue shape")
            })
            .collect();
        let mut signs = Tensor::ones(&[indices.len(), n_neurons]);
        let mut noise = Tensor::zeros(&[indices.len(), n_neurons]);
        for (row, &i) in indices.iter().enumerate() {
            let mut r = rng.substream(&[epoch as u64, i as u64, 2]);
            let p = LatentPerturbation::sample(1, n_neurons, cfg.flip_prob, cfg.latent_sigma, &mut r);
            signs.row_slice_mut(row).copy_from_slice(p.signs.data());
            noise.row_slice_mut(row).copy_from_slice(p.noise.data());
        }
        Self {
            indices: indices.to_vec(),
            x,
            cues,
            perturbation: LatentPerturbation { signs, noise },
        }
    }

    pub fn rows(&self) -> usize {
        self.x.rows()
    }
}

/// Graph handles of the four loss terms and their weighted total.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub l_ae: Var,
    pub l_bl: Var,
    pub l_attr: Var,
    pub l_asso: Var,
    pub total: Var,
}

impl LossVars {
    pub fn breakdown(&self, g: &Graph) -> LossBreakdown {
        LossBreakdown {
            l_ae: g.value(self.l_ae).item(),
            l_bl: g.value(self.l_bl).item(),
            l_attr: g.value(self.l_attr).item(),
            l_asso: g.value(self.l_asso).item(),
            total: g.value(self.total).item(),
        }
    }
}

/// Mean over rows of `‖target − D(E(input))‖²`.
fn reconstruction_term(g: &mut Graph, model: &Lshn, bp: &BoundParams, input: Var, target: Var) -> Result<Var> {
    let rows = g.value(input).rows();
    let z = model.encode_g(g, bp, input)?;
    let recon = model.decode_g(g, bp, z)?;
    let sse = g.sq_err_sum(recon, target)?;
    Ok(g.scale(sse, 1.0 / rows as f64))
}

/// `Σ_{t=0}^{T−1} ‖target − v[t+1]‖²` summed over rows, with `v[t+1]` the
/// discrete update of `v[t]` under constant input.
fn trajectory_error(
    g: &mut Graph,
    model: &Lshn,
    bp: &BoundParams,
    v0: Var,
    input: Var,
    target: Var,
    steps: usize,
) -> Result<Var> {
    let mut v = v0;
    let mut acc: Option<Var> = None;
    for _ in 0..steps {
        v = model.hopfield_step_g(g, bp, v, input)?;
        let d = g.sq_err_sum(target, v)?;
        acc = Some(match acc {
            Some(a) => g.add(a, d)?,
            None => d,
        });
    }
    acc.ok_or_else(|| Error::Invalid("attractor loss needs at least one step".into()))
}

fn zero_scalar(g: &mut Graph) -> Var {
    g.constant(Tensor::scalar(0.0))
}

/// Reconstruction loss over `X ∪ X_noisy`. Noisy inputs are scored against
/// their clean source unless `strict_autoencoding` is set.
pub fn loss_ae(
    g: &mut Graph,
    model: &Lshn,
    bp: &BoundParams,
    x: &Tensor,
    x_noisy: &[Tensor],
    strict_autoencoding: bool,
) -> Result<Var> {
    let mut inputs = vec![x];
    inputs.extend(x_noisy.iter());
    let union = Tensor::concat_rows(&inputs)?;
    let target = if strict_autoencoding {
        union.clone()
    } else {
        Tensor::concat_rows(&vec![x; inputs.len()])?
    };
    let input = g.constant(union);
    let target = g.constant(target);
    reconstruction_term(g, model, bp, input, target)
}

/// `−mean ‖E(x)‖²`.
pub fn loss_bl(g: &mut Graph, model: &Lshn, bp: &BoundParams, x: &Tensor) -> Result<Var> {
    let xv = g.constant(x.clone());
    let z = model.encode_g(g, bp, xv)?;
    binary_term(g, z)
}

fn binary_term(g: &mut Graph, z: Var) -> Result<Var> {
    let rows = g.value(z).rows();
    let zero = g.constant(Tensor::zeros(g.value(z).shape()));
    let sq = g.sq_err_sum(z, zero)?;
    Ok(g.scale(sq, -1.0 / rows as f64))
}

/// Attractor loss: start from a perturbed `E(x)` and pull every unrolled
/// state back to `E(x)`.
pub fn loss_attr(
    g: &mut Graph,
    model: &Lshn,
    bp: &BoundParams,
    x: &Tensor,
    perturbation: &LatentPerturbation,
    cfg: &TrainConfig,
) -> Result<Var> {
    let xv = g.constant(x.clone());
    let z = model.encode_g(g, bp, xv)?;
    let target = if cfg.stop_gradient { g.detach(z) } else { z };
    let v0 = perturbation.apply_g(g, z)?;
    let src = if cfg.input_from_perturbed { v0 } else { z };
    let input = model.external_input_g(g, bp, src)?;
    let err = trajectory_error(g, model, bp, v0, input, target, cfg.t_train)?;
    Ok(g.scale(err, 1.0 / x.rows() as f64))
}

/// Association loss: start from `E(cue)` with `I` derived from it, pull the
/// trajectory to the clean latent `E(x)`. Averaged over every cue set.
pub fn loss_asso(
    g: &mut Graph,
    model: &Lshn,
    bp: &BoundParams,
    x: &Tensor,
    cues: &[Tensor],
    cfg: &TrainConfig,
) -> Result<Var> {
    if cues.is_empty() {
        return Ok(zero_scalar(g));
    }
    let xv = g.constant(x.clone());
    let z = model.encode_g(g, bp, xv)?;
    let target = if cfg.stop_gradient { g.detach(z) } else { z };
    let refs: Vec<&Tensor> = cues.iter().collect();
    let cue_v = g.constant(Tensor::concat_rows(&refs)?);
    let zc = model.encode_g(g, bp, cue_v)?;
    let input = model.external_input_g(g, bp, zc)?;
    let targets = g.concat_rows(&vec![target; cues.len()])?;
    let err = trajectory_error(g, model, bp, zc, input, targets, cfg.t_train)?;
    Ok(g.scale(err, 1.0 / (x.rows() * cues.len()) as f64))
}

/// All four terms from one shared encoder/decoder pass over the stacked
/// clean and corrupted batch. Terms with zero weight are still evaluated
/// but left out of `total`, so no gradient flows through them.
pub fn objective(
    g: &mut Graph,
    model: &Lshn,
    bp: &BoundParams,
    batch: &TrainBatch,
    cfg: &TrainConfig,
) -> Result<LossVars> {
    let b = batch.rows();
    let k = batch.cues.len();
    let mut inputs = vec![&batch.x];
    inputs.extend(batch.cues.iter());
    let union = Tensor::concat_rows(&inputs)?;
    let target_img = if cfg.strict_autoencoding {
        union.clone()
    } else {
        Tensor::concat_rows(&vec![&batch.x; k + 1])?
    };
    let rows = union.rows();
    let union_v = g.constant(union);
    let target_v = g.constant(target_img);

    let z_all = model.encode_g(g, bp, union_v)?;
    let recon = model.decode_g(g, bp, z_all)?;
    let sse = g.sq_err_sum(recon, target_v)?;
    let l_ae = g.scale(sse, 1.0 / rows as f64);

    let z = g.slice_rows(z_all, 0, b)?;
    let l_bl = binary_term(g, z)?;

    let target = if cfg.stop_gradient { g.detach(z) } else { z };
    let v0_attr = batch.perturbation.apply_g(g, z)?;
    let src_attr = if cfg.input_from_perturbed { v0_attr } else { z };

    let (l_attr, l_asso) = if k == 0 {
        let input = model.external_input_g(g, bp, src_attr)?;
        let err = trajectory_error(g, model, bp, v0_attr, input, target, cfg.t_train)?;
        (g.scale(err, 1.0 / b as f64), zero_scalar(g))
    } else {
        let z_cues = g.slice_rows(z_all, b, rows)?;
        let v0 = g.concat_rows(&[v0_attr, z_cues])?;
        let src = g.concat_rows(&[src_attr, z_cues])?;
        let input = model.external_input_g(g, bp, src)?;
        let cue_targets = g.concat_rows(&vec![target; k])?;
        let mut v = v0;
        let mut attr_acc: Option<Var> = None;
        let mut asso_acc: Option<Var> = None;
        for _ in 0..cfg.t_train {
            v = model.hopfield_step_g(g, bp, v, input)?;
            let va = g.slice_rows(v, 0, b)?;
            let vc = g.slice_rows(v, b, rows)?;
            let da = g.sq_err_sum(target, va)?;
            let dc = g.sq_err_sum(cue_targets, vc)?;
            attr_acc = Some(match attr_acc {
                Some(a) => g.add(a, da)?,
                None => da,
            });
            asso_acc = Some(match asso_acc {
                Some(a) => g.add(a, dc)?,
                None => dc,
            });
        }
        let (Some(a), Some(c)) = (attr_acc, asso_acc) else {
            return Err(Error::Invalid("attractor loss needs at least one step".into()));
        };
        (g.scale(a, 1.0 / b as f64), g.scale(c, 1.0 / (b * k) as f64))
    };

    let w = cfg.weights;
    let mut total: Option<Var> = None;
    for (lambda, term) in [(w.ae, l_ae), (w.bl, l_bl), (w.attr, l_attr), (w.asso, l_asso)] {
        if lambda == 0.0 {
            continue;
        }
        let t = g.scale(term, lambda);
        total = Some(match total {
            Some(acc) => g.add(acc, t)?,
            None => t,
        });
    }
    let total = total.unwrap_or_else(|| zero_scalar(g));
    Ok(LossVars {
        l_ae,
        l_bl,
        l_attr,
        l_asso,
        total,
    })
}

/// Forward-only evaluation of the objective.
pub fn evaluate_objective(model: &Lshn, batch: &TrainBatch, cfg: &TrainConfig) -> Result<LossBreakdown> {
    let mut g = Graph::new();
    let bp = model.bind(&mut g)?;
    let vars = objective(&mut g, model, &bp, batch, cfg)?;
    Ok(vars.breakdown(&g))
}
