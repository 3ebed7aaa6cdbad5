//! Retrieval protocol and metrics, capacity and noise sweeps, and a
//! top-k dictionary lookup baseline.
//!
//! A retrieval starts from `v[0] = E(cue)` with constant input
//! `I = external_input(v[0])`, runs the discrete dynamics and decodes the
//! final state. It counts as correct when the summed squared error to the
//! stored image is at most 50. `acc*` scores the same decode against the
//! autoencoder's own reconstruction `D(E(x))`, and `acc_h` compares latent
//! signs against `E(x)`.

mod metrics;

pub use metrics::{
    latent_correct, latent_correct_frac, mse_metric, retrieval_correct, sign_agreements, sse,
    ssim_metric, LATENT_AGREEMENT, SSE_THRESHOLD, SSIM_SIGMA, SSIM_WINDOW,
};

use serde::{Deserialize, Serialize};

use crate::data::{corrupt, select_patterns, CorruptionSpec, Dataset, Rng};
use crate::error::{Error, Result};
use crate::model::{DynamicsOptions, DynamicsOutcome, Lshn, ModelDims};
use crate::ndgrad::Tensor;
use crate::train::{fit, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Dynamics steps at retrieval time.
    pub steps: usize,
    pub threshold: f64,
    pub latent_agreement: f64,
    /// Per-pattern stop once an update moves no component by this much.
    pub early_stop: Option<f64>,
    /// Patterns per dynamics batch. Fixed so results do not depend on `threads`.
    pub chunk: usize,
    pub threads: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            threshold: SSE_THRESHOLD,
            latent_agreement: LATENT_AGREEMENT,
            early_stop: Some(1e-9),
            chunk: 128,
            threads: 1,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Invalid("eval steps must be >= 1".into()));
        }
        if self.chunk == 0 {
            return Err(Error::Invalid("eval chunk must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.latent_agreement) {
            return Err(Error::Invalid(format!(
                "latent_agreement must lie in [0, 1], got {}",
                self.latent_agreement
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub pattern: usize,
    pub cue: CorruptionSpec,
    pub final_latent: Vec<f64>,
    pub decoded: Vec<f64>,
    pub sse_to_target: f64,
    pub correct: bool,
    /// Against `D(E(x))`.
    pub sse_to_reconstruction: f64,
    pub correct_star: bool,
    pub latent_correct: bool,
    pub mse: f64,
    pub ssim: f64,
    pub mse_star: f64,
    pub ssim_star: f64,
    pub steps_used: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct EvalMetrics {
    pub patterns: usize,
    pub acc: f64,
    pub acc_star: f64,
    pub acc_h: f64,
    pub mse: f64,
    pub ssim: f64,
    pub mse_star: f64,
    pub ssim_star: f64,
    pub mean_steps: f64,
}

impl EvalMetrics {
    pub fn from_results(results: &[RetrievalResult]) -> Self {
        let n = results.len();
        if n == 0 {
            return Self::default();
        }
        let frac = |f: &dyn Fn(&RetrievalResult) -> bool| results.iter().filter(|r| f(r)).count() as f64 / n as f64;
        let mean = |f: &dyn Fn(&RetrievalResult) -> f64| results.iter().map(f).sum::<f64>() / n as f64;
        Self {
            patterns: n,
            acc: frac(&|r| r.correct),
            acc_star: frac(&|r| r.correct_star),
            acc_h: frac(&|r| r.latent_correct),
            mse: mean(&|r| r.mse),
            ssim: mean(&|r| r.ssim),
            mse_star: mean(&|r| r.mse_star),
            ssim_star: mean(&|r| r.ssim_star),
            mean_steps: mean(&|r| r.steps_used as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub results: Vec<RetrievalResult>,
    pub metrics: EvalMetrics,
}

/// Corrupted copies of the listed stored patterns, each drawn from its own
/// sub-stream of `rng` keyed by pattern index and corruption.
pub fn make_cues(stored: &Dataset, indices: &[usize], spec: &CorruptionSpec, rng: &Rng) -> Result<Tensor> {
    let d = stored.geometry.dim();
    let mut data = Vec::with_capacity(indices.len() * d);
    for &i in indices {
        if i >= stored.len() {
            return Err(Error::Invalid(format!(
                "pattern index {i} out of range for {} stored patterns",
                stored.len()
            )));
        }
        let mut r = rng.substream(&[i as u64, spec.stream_tag()]);
        data.extend(corrupt(stored.image(i), spec, &stored.geometry, &mut r));
    }
    Tensor::new(vec![indices.len(), d], data)
}

/// Runs the retrieval dynamics from `E(cues)`. Returns the start latents and
/// the dynamics outcome.
pub fn cue_dynamics(model: &Lshn, cues: &Tensor, steps: usize, opts: DynamicsOptions) -> Result<(Tensor, DynamicsOutcome)> {
    let z0 = model.encode(cues)?;
    let input = model.external_input(&z0)?;
    let out = model.run_dynamics(&z0, &input, steps, opts)?;
    Ok((z0, out))
}

fn evaluate_chunk(
    model: &Lshn,
    stored: &Dataset,
    indices: &[usize],
    spec: &CorruptionSpec,
    cfg: &EvalConfig,
    rng: &Rng,
) -> Result<Vec<RetrievalResult>> {
    let x = stored.subset(indices).images;
    let z = model.encode(&x)?;
    let recon = model.decode(&z)?;
    let cues = make_cues(stored, indices, spec, rng)?;
    let opts = DynamicsOptions {
        early_stop: cfg.early_stop,
        record: false,
    };
    let (_, out) = cue_dynamics(model, &cues, cfg.steps, opts)?;
    let decoded = model.decode(&out.final_state)?;
    let g = &stored.geometry;
    indices
        .iter()
        .enumerate()
        .map(|(r, &pattern)| {
            let (hat, xr, rr) = (decoded.row_slice(r), x.row_slice(r), recon.row_slice(r));
            let vt = out.final_state.row_slice(r);
            let sse_x = sse(hat, xr)?;
            let sse_r = sse(hat, rr)?;
            Ok(RetrievalResult {
                pattern,
                cue: *spec,
                final_latent: vt.to_vec(),
                decoded: hat.to_vec(),
                sse_to_target: sse_x,
                correct: sse_x <= cfg.threshold,
                sse_to_reconstruction: sse_r,
                correct_star: sse_r <= cfg.threshold,
                latent_correct: latent_correct_frac(vt, z.row_slice(r), cfg.latent_agreement)?,
                mse: sse_x / xr.len() as f64,
                ssim: ssim_metric(hat, xr, g)?,
                mse_star: sse_r / rr.len() as f64,
                ssim_star: ssim_metric(hat, rr, g)?,
                steps_used: out.steps_used[r],
            })
        })
        .collect()
}

/// Retrieves every stored pattern from a corrupted cue. Patterns are
/// processed in fixed-size chunks, optionally on several threads; results
/// are ordered by pattern index and identical for any thread count.
pub fn evaluate(model: &Lshn, stored: &Dataset, spec: &CorruptionSpec, cfg: &EvalConfig, rng: &Rng) -> Result<Evaluation> {
    cfg.validate()?;
    spec.validate()?;
    if stored.geometry.dim() != model.dims.d_img {
        return Err(Error::Shape {
            op: "evaluate",
            lhs: vec![stored.geometry.dim()],
            rhs: vec![model.dims.d_img],
        });
    }
    let all: Vec<usize> = (0..stored.len()).collect();
    let chunks: Vec<&[usize]> = all.chunks(cfg.chunk).collect();
    let threads = cfg.threads.max(1).min(chunks.len().max(1));
    let mut parts: Vec<Result<Vec<RetrievalResult>>> = Vec::with_capacity(chunks.len());
    if threads <= 1 {
        for c in &chunks {
            parts.push(evaluate_chunk(model, stored, c, spec, cfg, rng));
        }
    } else {
        let mut slots: Vec<Option<Result<Vec<RetrievalResult>>>> = (0..chunks.len()).map(|_| None).collect();
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..threads)
                .map(|t| {
                    let chunks = &chunks;
                    s.spawn(move || {
                        (t..chunks.len())
                            .step_by(threads)
                            .map(|i| (i, evaluate_chunk(model, stored, chunks[i], spec, cfg, rng)))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (i, r) in h.join().expect("evaluation thread panicked") {
                    slots[i] = Some(r);
                }
            }
        });
        parts.extend(slots.into_iter().map(|s| s.expect("every chunk evaluated")));
    }
    let mut results = Vec::with_capacity(stored.len());
    for p in parts {
        results.extend(p?);
    }
    let metrics = EvalMetrics::from_results(&results);
    Ok(Evaluation { results, metrics })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: f64,
    pub metrics: EvalMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub axis_name: String,
    pub rows: Vec<SweepRow>,
    pub seed: u64,
    pub config_hash: String,
}

impl SweepReport {
    /// `axis,acc,acc_star,acc_h,mse,ssim,seed,config_hash`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("axis,acc,acc_star,acc_h,mse,ssim,seed,config_hash\n");
        for r in &self.rows {
            let m = r.metrics;
            s.push_str(&format!(
                "{},{},{},{},{:e},{:e},{},{}\n",
                r.axis, m.acc, m.acc_star, m.acc_h, m.mse, m.ssim, self.seed, self.config_hash
            ));
        }
        s
    }
}

/// Everything a capacity sweep needs besides the dataset.
#[derive(Debug, Clone)]
pub struct CapacitySweep<'a> {
    pub counts: &'a [usize],
    pub n_neurons: usize,
    pub hidden_enc: usize,
    pub hidden_dec: usize,
    pub train: &'a TrainConfig,
    pub spec: CorruptionSpec,
    pub eval: EvalConfig,
    pub seed: u64,
    pub config_hash: String,
}

/// Stored-set selection, initialization and cue noise for one pattern count.
pub fn capacity_streams(seed: u64, count: usize) -> (Rng, Rng, Rng) {
    let root = Rng::new(seed);
    (
        root.substream(&[count as u64, 1]),
        root.substream(&[count as u64, 2]),
        root.substream(&[count as u64, 3]),
    )
}

/// Trains a fresh model per pattern count and evaluates it. Accuracy is
/// reported as measured; no monotonicity is enforced.
pub fn capacity_sweep(ds: &Dataset, sweep: &CapacitySweep<'_>, mut on_row: impl FnMut(&SweepRow)) -> Result<SweepReport> {
    if sweep.counts.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Invalid(format!("pattern counts must be ascending, got {:?}", sweep.counts)));
    }
    let dims = ModelDims {
        d_img: ds.geometry.dim(),
        hidden_enc: sweep.hidden_enc,
        n_neurons: sweep.n_neurons,
        hidden_dec: sweep.hidden_dec,
    };
    let mut rows = Vec::new();
    for &count in sweep.counts {
        let (mut pick, mut init, cue) = capacity_streams(sweep.seed, count);
        let stored = select_patterns(ds, count, &mut pick)?;
        let mut model = Lshn::init(dims, &mut init)?;
        let mut tc = sweep.train.clone();
        tc.seed = sweep.seed ^ (count as u64).rotate_left(32);
        fit(&mut model, &stored, &tc).map_err(|e| Error::Sweep {
            count,
            source: Box::new(e),
        })?;
        let ev = evaluate(&model, &stored, &sweep.spec, &sweep.eval, &cue)?;
        let row = SweepRow {
            axis: count as f64,
            metrics: ev.metrics,
        };
        on_row(&row);
        rows.push(row);
    }
    Ok(SweepReport {
        axis_name: "patterns".into(),
        rows,
        seed: sweep.seed,
        config_hash: sweep.config_hash.clone(),
    })
}

/// Evaluates one trained model under Gaussian cues of each `sigma`, with a
/// fresh sub-stream per value.
pub fn noise_sweep(
    model: &Lshn,
    stored: &Dataset,
    sigmas: &[f64],
    eval: &EvalConfig,
    seed: u64,
    config_hash: &str,
) -> Result<SweepReport> {
    let root = Rng::new(seed);
    let rows = sigmas
        .iter()
        .enumerate()
        .map(|(i, &sigma)| {
            let rng = root.substream(&[i as u64, sigma.to_bits()]);
            let ev = evaluate(model, stored, &CorruptionSpec::gaussian(sigma), eval, &rng)?;
            Ok(SweepRow {
                axis: sigma,
                metrics: ev.metrics,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport {
        axis_name: "sigma".into(),
        rows,
        seed,
        config_hash: config_hash.to_string(),
    })
}

/// Mean image of the `k` stored entries whose key latents have the largest
/// dot product with `cue`. Ties go to the lower index.
pub fn dict_baseline(keys: &Tensor, images: &Tensor, cue: &[f64], k: usize) -> Result<Vec<f64>> {
    let n = keys.rows();
    if n == 0 || keys.shape().len() != 2 {
        return Err(Error::Invalid("dictionary store is empty".into()));
    }
    if images.rows() != n {
        return Err(Error::Shape {
            op: "dict_baseline",
            lhs: keys.shape().to_vec(),
            rhs: images.shape().to_vec(),
        });
    }
    if cue.len() != keys.cols() {
        return Err(Error::Shape {
            op: "dict_baseline",
            lhs: vec![cue.len()],
            rhs: vec![keys.cols()],
        });
    }
    if k == 0 || k > n {
        return Err(Error::Invalid(format!("k must lie in [1, {n}], got {k}")));
    }
    let mut scored: Vec<(f64, usize)> = (0..n)
        .map(|i| (keys.row_slice(i).iter().zip(cue).map(|(a, b)| a * b).sum(), i))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut out = vec![0.0; images.cols()];
    for &(_, i) in &scored[..k] {
        for (o, v) in out.iter_mut().zip(images.row_slice(i)) {
            *o += v;
        }
    }
    for o in &mut out {
        *o /= k as f64;
    }
    Ok(out)
}

/// Runs the dictionary baseline for every stored pattern: keys are `E(x)`,
/// the query is `E(cue)`.
pub fn evaluate_dict(
    model: &Lshn,
    stored: &Dataset,
    spec: &CorruptionSpec,
    k: usize,
    threshold: f64,
    rng: &Rng,
) -> Result<f64> {
    let keys = model.encode(&stored.images)?;
    let idx: Vec<usize> = (0..stored.len()).collect();
    let cues = make_cues(stored, &idx, spec, rng)?;
    let q = model.encode(&cues)?;
    let mut hits = 0usize;
    for i in idx {
        let hat = dict_baseline(&keys, &stored.images, q.row_slice(i), k)?;
        if retrieval_correct(&hat, stored.image(i), threshold)? {
            hits += 1;
        }
    }
    Ok(hits as f64 / stored.len().max(1) as f64)
}
