use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lshn::data::{CorruptionSpec, Dataset};
use lshn::eval::{
    capacity_sweep, cue_dynamics, evaluate, evaluate_dict, make_cues, noise_sweep, CapacitySweep,
    Evaluation, SweepReport,
};
use lshn::model::{load_checkpoint, save_checkpoint, DynamicsOptions, Lshn};
use lshn::train::{fit_with, hebbian_fit, FitHistory, LossWeights, TrainConfig};

use crate::config::{load_pool, load_stored, ExperimentConfig, Variant};
use crate::figures::{heatmap as render_heatmap, image_grid, line_plot};
use crate::CliError;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOSS_FILE: &str = "loss.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const RESULTS_FILE: &str = "results.csv";
pub const DICT_FILE: &str = "dict.csv";

/// `--out` when given, else `<out_dir>/<name>`.
pub fn output_dir(cfg: &ExperimentConfig, out: Option<&Path>) -> PathBuf {
    out.map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.out_dir.join(&cfg.name))
}

pub fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Training config actually used for `cfg`'s variant: the Hebbian variant
/// trains only the autoencoder terms.
pub fn effective_train_config(cfg: &ExperimentConfig) -> TrainConfig {
    let mut tc = cfg.train_config();
    if cfg.model.variant == Variant::Hebbian {
        tc.weights = LossWeights {
            attr: 0.0,
            asso: 0.0,
            ..tc.weights
        };
    }
    tc
}

/// Fresh model trained on `stored` according to `cfg`.
pub fn train_model(
    cfg: &ExperimentConfig,
    stored: &Dataset,
    mut progress: impl FnMut(usize, &lshn::train::LossBreakdown),
) -> Result<(Lshn, FitHistory), CliError> {
    let mut model = cfg.fresh_model(stored.geometry.dim())?;
    let tc = effective_train_config(cfg);
    let history = fit_with(&mut model, stored, &tc, |log| progress(log.epoch, &log.loss))?;
    if cfg.model.variant == Variant::Hebbian {
        hebbian_fit(&mut model, stored)?;
    }
    Ok((model, history))
}

pub fn loss_csv(history: &FitHistory, hash: &str) -> String {
    let mut s = String::from("epoch,l_ae,l_bl,l_attr,l_asso,total,config_hash\n");
    for e in &history.epochs {
        let l = e.loss;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{hash}",
            e.epoch, l.l_ae, l.l_bl, l.l_attr, l.l_asso, l.total
        );
    }
    s
}

pub struct TrainOutput {
    pub model: Lshn,
    pub history: FitHistory,
    pub checkpoint: PathBuf,
    pub loss_csv: PathBuf,
}

pub fn cmd_train(cfg: &ExperimentConfig, out: &Path, verbose: bool) -> Result<TrainOutput, CliError> {
    let (stored, _) = load_stored(cfg)?;
    ensure_dir(out)?;
    let hash = cfg.hash_hex();
    let every = (cfg.train.epochs / 20).max(1);
    let start = Instant::now();
    let (model, history) = train_model(cfg, &stored, |epoch, l| {
        if verbose && (epoch % every == 0 || epoch + 1 == cfg.train.epochs) {
            eprintln!(
                "epoch {epoch:>5}  total {:.4}  ae {:.4}  bl {:.4}  attr {:.4}  asso {:.4}  ({:.0}s)",
                l.total,
                l.l_ae,
                l.l_bl,
                l.l_attr,
                l.l_asso,
                start.elapsed().as_secs_f64()
            );
        }
    })?;
    let checkpoint = out.join(CHECKPOINT_FILE);
    save_checkpoint(&checkpoint, &model, &cfg.hash_bytes())?;
    let loss_path = out.join(LOSS_FILE);
    write_file(&loss_path, loss_csv(&history, &hash).as_bytes())?;
    if let Some(l) = history.last() {
        println!(
            "final loss: total {} (ae {}, bl {}, attr {}, asso {})",
            l.total, l.l_ae, l.l_bl, l.l_attr, l.l_asso
        );
    }
    println!("checkpoint: {}", checkpoint.display());
    Ok(TrainOutput {
        model,
        history,
        checkpoint,
        loss_csv: loss_path,
    })
}

/// Loads a checkpoint and checks it against the dimensions `cfg` implies.
pub fn load_model(cfg: &ExperimentConfig, path: &Path, d_img: usize) -> Result<Lshn, CliError> {
    let (model, hash) = load_checkpoint(path)?;
    let want = cfg.dims(d_img);
    if model.dims != want {
        return Err(lshn::Error::Checkpoint(format!(
            "{}: dims {:?} do not match config {:?}",
            path.display(),
            model.dims,
            want
        ))
        .into());
    }
    if hash != cfg.hash_bytes() {
        eprintln!(
            "warning: {} was written under config hash {}, current config is {}",
            path.display(),
            hex::encode(hash),
            cfg.hash_hex()
        );
    }
    Ok(model)
}

pub fn checkpoint_path(out: &Path, explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out.join(CHECKPOINT_FILE))
}

/// Sub-stream for cue noise of the `i`-th configured spec.
pub fn cue_rng(cfg: &ExperimentConfig, i: usize) -> lshn::data::Rng {
    cfg.root_rng().substream(&[0xc0e, i as u64])
}

pub struct EvalOutput {
    pub evaluations: Vec<(CorruptionSpec, Evaluation)>,
    pub dict: Vec<(CorruptionSpec, usize, f64)>,
    pub metrics_csv: PathBuf,
    pub results_csv: PathBuf,
}

pub fn metrics_header() -> &'static str {
    "spec,acc,acc_star,acc_h,mse,ssim,mse_star,ssim_star,mean_steps,patterns,seed,config_hash"
}

/// Runs every configured cue against `model` on `stored`.
pub fn evaluate_all(
    cfg: &ExperimentConfig,
    model: &Lshn,
    stored: &Dataset,
    threads: Option<usize>,
) -> Result<Vec<(CorruptionSpec, Evaluation)>, CliError> {
    let ec = cfg.eval_config(threads);
    cfg.eval
        .specs
        .iter()
        .enumerate()
        .map(|(i, spec)| Ok((*spec, evaluate(model, stored, spec, &ec, &cue_rng(cfg, i))?)))
        .collect()
}

pub fn cmd_eval(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    out: &Path,
    threads: Option<usize>,
) -> Result<EvalOutput, CliError> {
    let (stored, pool_idx) = load_stored(cfg)?;
    let model = load_model(cfg, checkpoint, stored.geometry.dim())?;
    ensure_dir(out)?;
    let hash = cfg.hash_hex();
    let evaluations = evaluate_all(cfg, &model, &stored, threads)?;

    let mut metrics = format!("{}\n", metrics_header());
    let mut results = String::from(
        "spec,pattern,pool_index,label,sse_to_target,correct,sse_to_reconstruction,correct_star,latent_correct,mse,ssim,steps_used,config_hash\n",
    );
    for (spec, ev) in &evaluations {
        let m = ev.metrics;
        let label = spec.label();
        let _ = writeln!(
            metrics,
            "{label},{},{},{},{},{},{},{},{},{},{},{hash}",
            m.acc, m.acc_star, m.acc_h, m.mse, m.ssim, m.mse_star, m.ssim_star, m.mean_steps, m.patterns, cfg.seed
        );
        println!(
            "{label:>12}: acc {:.3}  acc* {:.3}  acc_h {:.3}  mse {:.4}  ssim {:.3}",
            m.acc, m.acc_star, m.acc_h, m.mse, m.ssim
        );
        for r in &ev.results {
            let _ = writeln!(
                results,
                "{label},{},{},{},{},{},{},{},{},{},{},{},{hash}",
                r.pattern,
                pool_idx[r.pattern],
                stored.labels[r.pattern],
                r.sse_to_target,
                u8::from(r.correct),
                r.sse_to_reconstruction,
                u8::from(r.correct_star),
                u8::from(r.latent_correct),
                r.mse,
                r.ssim,
                r.steps_used
            );
        }
    }
    let mut dict = Vec::new();
    let mut dict_csv = String::from("spec,k,acc,seed,config_hash\n");
    for (i, spec) in cfg.eval.specs.iter().enumerate() {
        for &k in &cfg.eval.dict_k {
            if k > stored.len() {
                continue;
            }
            let acc = evaluate_dict(&model, &stored, spec, k, cfg.eval.threshold, &cue_rng(cfg, i))?;
            let _ = writeln!(dict_csv, "{},{k},{acc},{},{hash}", spec.label(), cfg.seed);
            dict.push((*spec, k, acc));
        }
    }
    let metrics_csv = out.join(METRICS_FILE);
    let results_csv = out.join(RESULTS_FILE);
    write_file(&metrics_csv, metrics.as_bytes())?;
    write_file(&results_csv, results.as_bytes())?;
    write_file(&out.join(DICT_FILE), dict_csv.as_bytes())?;
    Ok(EvalOutput {
        evaluations,
        dict,
        metrics_csv,
        results_csv,
    })
}

/// Cells of the recall grid: one column per (pattern, cue), one row per
/// requested step, each cell `D(v[t])`.
pub fn recall_cells(
    cfg: &ExperimentConfig,
    model: &Lshn,
    stored: &Dataset,
    patterns: &[usize],
    steps: &[usize],
) -> Result<Vec<Vec<Vec<f64>>>, CliError> {
    if steps.is_empty() || patterns.is_empty() {
        return Err(CliError::Usage("recall grid needs at least one pattern and one step".into()));
    }
    if let Some(&bad) = patterns.iter().find(|&&p| p >= stored.len()) {
        return Err(CliError::Usage(format!(
            "pattern index {bad} out of range for {} stored patterns",
            stored.len()
        )));
    }
    let t_max = *steps.iter().max().expect("non-empty");
    let mut columns: Vec<Vec<Vec<f64>>> = Vec::new();
    for &p in patterns {
        for (i, spec) in cfg.eval.specs.iter().enumerate() {
            let cue = make_cues(stored, &[p], spec, &cue_rng(cfg, i))?;
            let traj = if t_max == 0 {
                vec![model.encode(&cue)?]
            } else {
                let opts = DynamicsOptions {
                    early_stop: cfg.eval.early_stop,
                    record: true,
                };
                let (_, outcome) = cue_dynamics(model, &cue, t_max, opts)?;
                outcome.trajectory.expect("recorded")
            };
            let col = steps
                .iter()
                .map(|&t| Ok(model.decode(&traj[t.min(traj.len() - 1)])?.into_data()))
                .collect::<Result<Vec<_>, CliError>>()?;
            columns.push(col);
        }
    }
    let rows = (0..steps.len())
        .map(|r| columns.iter().map(|c| c[r].clone()).collect())
        .collect();
    Ok(rows)
}

pub fn cmd_recall_grid(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    out: &Path,
    patterns: &[usize],
    steps: &[usize],
) -> Result<PathBuf, CliError> {
    let (stored, _) = load_stored(cfg)?;
    let model = load_model(cfg, checkpoint, stored.geometry.dim())?;
    let cells = recall_cells(cfg, &model, &stored, patterns, steps)?;
    ensure_dir(out)?;
    let path = out.join("recall_grid.png");
    image_grid(&cells, &stored.geometry).save(&path, &cfg.hash_hex())?;
    Ok(path)
}

/// `v[t] − E(x)` for `t = 0..=steps`, starting from the cue.
pub fn latent_deviations(
    cfg: &ExperimentConfig,
    model: &Lshn,
    stored: &Dataset,
    pattern: usize,
    spec_index: usize,
    steps: usize,
) -> Result<Vec<Vec<f64>>, CliError> {
    if pattern >= stored.len() {
        return Err(CliError::Usage(format!(
            "pattern index {pattern} out of range for {} stored patterns",
            stored.len()
        )));
    }
    let spec = cfg
        .eval
        .specs
        .get(spec_index)
        .ok_or_else(|| CliError::Usage(format!("no eval spec #{spec_index}")))?;
    let target = model.encode(&stored.subset(&[pattern]).images)?;
    let cue = make_cues(stored, &[pattern], spec, &cue_rng(cfg, spec_index))?;
    let opts = DynamicsOptions {
        early_stop: None,
        record: true,
    };
    let (_, outcome) = cue_dynamics(model, &cue, steps.max(1), opts)?;
    let traj = outcome.trajectory.expect("recorded");
    Ok(traj
        .iter()
        .take(steps + 1)
        .map(|v| v.data().iter().zip(target.data()).map(|(a, b)| a - b).collect())
        .collect())
}

pub fn cmd_heatmap(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    out: &Path,
    pattern: usize,
    spec_index: usize,
) -> Result<PathBuf, CliError> {
    let (stored, _) = load_stored(cfg)?;
    let model = load_model(cfg, checkpoint, stored.geometry.dim())?;
    let dev = latent_deviations(cfg, &model, &stored, pattern, spec_index, cfg.figures.heatmap_steps)?;
    ensure_dir(out)?;
    let path = out.join("heatmap.png");
    render_heatmap(&dev, cfg.figures.gray_band).save(&path, &cfg.hash_hex())?;
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepKind {
    Capacity,
    Noise,
}

pub struct SweepOutput {
    pub report: SweepReport,
    pub csv: PathBuf,
    pub plot: PathBuf,
}

pub fn cmd_sweep(
    cfg: &ExperimentConfig,
    kind: SweepKind,
    checkpoint: Option<&Path>,
    out: &Path,
    threads: Option<usize>,
) -> Result<SweepOutput, CliError> {
    let hash = cfg.hash_hex();
    let ec = cfg.eval_config(threads);
    let (report, stem) = match kind {
        SweepKind::Capacity => {
            let pool = load_pool(cfg)?;
            let tc = effective_train_config(cfg);
            if cfg.model.variant == Variant::Hebbian {
                return Err(CliError::Usage("capacity sweeps train the gradient variant only".into()));
            }
            let sweep = CapacitySweep {
                counts: &cfg.eval.counts,
                n_neurons: cfg.model.n_neurons,
                hidden_enc: cfg.model.hidden_enc,
                hidden_dec: cfg.model.hidden_dec,
                train: &tc,
                spec: cfg.eval.sweep_spec,
                eval: ec,
                seed: cfg.seed,
                config_hash: hash.clone(),
            };
            let start = Instant::now();
            let rep = capacity_sweep(&pool, &sweep, |row| {
                eprintln!(
                    "{:>6} patterns: acc {:.3}  ({:.0}s)",
                    row.axis,
                    row.metrics.acc,
                    start.elapsed().as_secs_f64()
                );
            })?;
            (rep, "sweep_capacity")
        }
        SweepKind::Noise => {
            let (stored, _) = load_stored(cfg)?;
            let path = checkpoint_path(out, checkpoint);
            let model = load_model(cfg, &path, stored.geometry.dim())?;
            (noise_sweep(&model, &stored, &cfg.eval.sigmas, &ec, cfg.seed, &hash)?, "sweep_noise")
        }
    };
    ensure_dir(out)?;
    let csv = out.join(format!("{stem}.csv"));
    write_file(&csv, report.to_csv().as_bytes())?;
    let plot = out.join(format!("{stem}.png"));
    let points: Vec<(f64, f64)> = report.rows.iter().map(|r| (r.axis, r.metrics.acc)).collect();
    line_plot(&points).save(&plot, &hash)?;
    for r in &report.rows {
        println!("{} = {}: acc {:.3}", report.axis_name, r.axis, r.metrics.acc);
    }
    Ok(SweepOutput { report, csv, plot })
}
