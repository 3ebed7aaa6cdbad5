//! Property battery behind `lshn verify`: energy descent of the clipped
//! dynamics, gradient checks, loader round trips, checkpoint integrity and
//! run-to-run determinism.

use std::fmt::Write as _;
use std::time::Instant;

use lshn::data::{
    encode_idx_images, encode_idx_labels, load_cifar10, load_mnist, CorruptionSpec, Dataset,
    ImageGeometry, Rng, CIFAR_RECORD_LEN,
};
use lshn::eval::{evaluate, EvalConfig};
use lshn::model::{
    descent_check, load_checkpoint, save_checkpoint, HopfieldSystem, Lshn, ModelDims,
};
use lshn::ndgrad::{grad_check, GradCheckOptions, Tensor};
use lshn::train::{fit, objective, TrainBatch, TrainConfig};
use lshn::Error;

/// Test-only faults that must make the battery fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Fault {
    /// Adds a skew-symmetric part to every recurrent matrix.
    AsymmetricWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub seconds: f64,
    pub seed: u64,
    pub detail: String,
}

#[derive(Debug, Clone, Copy)]
pub struct EnergyBattery {
    pub systems: usize,
    pub n: usize,
    pub eta: f64,
    pub steps: usize,
    pub tol: f64,
}

impl Default for EnergyBattery {
    fn default() -> Self {
        Self {
            systems: 100,
            n: 64,
            eta: 1e-3,
            steps: 10_000,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct EnergySummary {
    pub worst_increase: f64,
    pub worst_system: usize,
    pub interior: usize,
    pub at_upper: usize,
    pub at_lower: usize,
    pub clipped: usize,
}

/// Runs `systems` random systems; odd-numbered ones start at a random
/// corner of the box so saturated neurons and clipped rates occur.
pub fn energy_battery(cfg: &EnergyBattery, seed: u64, fault: Option<Fault>) -> Result<EnergySummary, Error> {
    let root = Rng::new(seed);
    let mut s = EnergySummary {
        worst_increase: f64::NEG_INFINITY,
        ..Default::default()
    };
    for k in 0..cfg.systems {
        let mut rng = root.substream(&[k as u64]);
        let mut sys = HopfieldSystem::random(cfg.n, &mut rng);
        if fault == Some(Fault::AsymmetricWeights) {
            sys = sys.with_skew(1.0, &mut rng);
        }
        let v0: Vec<f64> = (0..cfg.n)
            .map(|_| {
                if k % 2 == 1 {
                    if rng.bernoulli(0.5) {
                        1.0
                    } else {
                        -1.0
                    }
                } else {
                    rng.uniform_range(-1.0, 1.0)
                }
            })
            .collect();
        let r = descent_check(&sys, &v0, cfg.eta, cfg.steps)?;
        if r.max_increase > s.worst_increase {
            s.worst_increase = r.max_increase;
            s.worst_system = k;
        }
        s.interior += r.interior;
        s.at_upper += r.at_upper;
        s.at_lower += r.at_lower;
        s.clipped += r.clipped;
    }
    Ok(s)
}

fn toy_grad_check(seed: u64) -> Result<f64, Error> {
    let mut rng = Rng::new(seed);
    let dims = ModelDims {
        d_img: 16,
        hidden_enc: 8,
        n_neurons: 8,
        hidden_dec: 8,
    };
    let mut model = Lshn::init(dims, &mut rng)?;
    for v in model.params.a.value.data_mut() {
        *v = 0.3 * rng.normal();
    }
    let ds = Dataset {
        images: Tensor::new(vec![1, 16], (0..16).map(|_| rng.uniform_range(-1.0, 1.0)).collect())?,
        labels: vec![0],
        geometry: ImageGeometry {
            channels: 1,
            height: 4,
            width: 4,
        },
    };
    let cfg = TrainConfig {
        t_train: 3,
        corruptions: vec![CorruptionSpec::gaussian(0.5)],
        stop_gradient: false,
        ..TrainConfig::default()
    };
    let batch = TrainBatch::sample(&ds, &[0], 8, &cfg, 0, &rng.substream(&[1]));
    let values: Vec<Tensor> = model.params.iter().iter().map(|p| p.value.clone()).collect();
    let report = grad_check(
        &values,
        |g, leaves| {
            let bp = model.bind_leaves(g, leaves)?;
            Ok(objective(g, &model, &bp, &batch, &cfg)?.total)
        },
        GradCheckOptions::default(),
    )?;
    Ok(report.max_rel_err)
}

fn loader_round_trip(seed: u64) -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = Rng::new(seed);
    let pixels: Vec<u8> = (0..5 * 28 * 28).map(|_| (rng.uniform() * 256.0) as u8).collect();
    let labels: Vec<u8> = (0..5).map(|i| (i * 3 % 10) as u8).collect();
    let (ip, lp) = (dir.path().join("img"), dir.path().join("lab"));
    std::fs::write(&ip, encode_idx_images(28, 28, &pixels)).map_err(|e| e.to_string())?;
    std::fs::write(&lp, encode_idx_labels(&labels)).map_err(|e| e.to_string())?;
    let ds = load_mnist(&ip, &lp).map_err(|e| e.to_string())?;
    if ds.labels != labels || ds.images.rows() != 5 {
        return Err("idx round trip changed labels or count".into());
    }
    if ds.image(2)[7] != pixels[2 * 784 + 7] as f64 / 127.5 - 1.0 {
        return Err("idx round trip changed pixels".into());
    }
    let mut rec = Vec::new();
    for i in 0..3u8 {
        rec.push(i);
        rec.extend((0..CIFAR_RECORD_LEN - 1).map(|j| ((j + i as usize) % 256) as u8));
    }
    let cp = dir.path().join("batch.bin");
    std::fs::write(&cp, &rec).map_err(|e| e.to_string())?;
    let c = load_cifar10(&[&cp]).map_err(|e| e.to_string())?;
    if c.labels != [0, 1, 2] || c.geometry.dim() != 3072 {
        return Err("cifar round trip changed labels or geometry".into());
    }
    std::fs::write(&cp, &rec[..rec.len() - 1]).map_err(|e| e.to_string())?;
    if load_cifar10(&[&cp]).is_ok() {
        return Err("truncated cifar batch was accepted".into());
    }
    Ok(())
}

fn checkpoint_integrity(seed: u64) -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("m.ckpt");
    let model = Lshn::init(ModelDims::new(12, 6), &mut Rng::new(seed)).map_err(|e| e.to_string())?;
    save_checkpoint(&path, &model, &[3; 32]).map_err(|e| e.to_string())?;
    let (back, hash) = load_checkpoint(&path).map_err(|e| e.to_string())?;
    if back != model || hash != [3; 32] {
        return Err("checkpoint round trip changed the model".into());
    }
    let mut bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
    let mid = bytes.len() / 2;
    bytes[mid] ^= 1;
    std::fs::write(&path, &bytes).map_err(|e| e.to_string())?;
    match load_checkpoint(&path) {
        Err(Error::Checksum { .. }) => Ok(()),
        other => Err(format!("flipped byte not caught: {:?}", other.map(|_| ()))),
    }
}

fn determinism(seed: u64) -> Result<(), String> {
    let mut rng = Rng::new(seed);
    let ds = Dataset {
        images: Tensor::new(vec![6, 36], (0..216).map(|_| rng.uniform_range(-1.0, 1.0)).collect())
            .map_err(|e| e.to_string())?,
        labels: (0..6).collect(),
        geometry: ImageGeometry {
            channels: 1,
            height: 6,
            width: 6,
        },
    };
    let dims = ModelDims {
        d_img: 36,
        hidden_enc: 16,
        n_neurons: 12,
        hidden_dec: 16,
    };
    let cfg = TrainConfig {
        epochs: 4,
        batch_size: 4,
        t_train: 3,
        seed,
        ..TrainConfig::default()
    };
    let run = || -> Result<_, Error> {
        let mut m = Lshn::init(dims, &mut Rng::new(seed))?;
        let h = fit(&mut m, &ds, &cfg)?;
        Ok((m, h))
    };
    let (ma, ha) = run().map_err(|e| e.to_string())?;
    let (mb, hb) = run().map_err(|e| e.to_string())?;
    if ha != hb || ma != mb {
        return Err("two identical training runs diverged".into());
    }
    let spec = CorruptionSpec::gaussian(0.3);
    let one = EvalConfig {
        steps: 20,
        chunk: 2,
        ..EvalConfig::default()
    };
    let many = EvalConfig { threads: 3, ..one };
    let a = evaluate(&ma, &ds, &spec, &one, &Rng::new(seed)).map_err(|e| e.to_string())?;
    let b = evaluate(&ma, &ds, &spec, &many, &Rng::new(seed)).map_err(|e| e.to_string())?;
    if a != b {
        return Err("evaluation depends on thread count".into());
    }
    Ok(())
}

fn timed(name: &'static str, seed: u64, f: impl FnOnce() -> Result<String, String>) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = match f() {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    CheckResult {
        name,
        passed,
        seconds: start.elapsed().as_secs_f64(),
        seed,
        detail,
    }
}

/// Runs every check. `energy` sizes the descent battery.
pub fn run_battery(seed: u64, energy: &EnergyBattery, fault: Option<Fault>) -> Vec<CheckResult> {
    let mut out = Vec::new();
    out.push(timed("energy_descent", seed, || {
        let s = energy_battery(energy, seed, fault).map_err(|e| e.to_string())?;
        let detail = format!(
            "worst increase {:e} (system {}); interior {}, upper {}, lower {}, clipped {}",
            s.worst_increase, s.worst_system, s.interior, s.at_upper, s.at_lower, s.clipped
        );
        if s.worst_increase > energy.tol {
            return Err(detail);
        }
        if s.interior == 0 || s.at_upper == 0 || s.at_lower == 0 || s.clipped == 0 {
            return Err(format!("not every clip case was exercised: {detail}"));
        }
        Ok(detail)
    }));
    out.push(timed("gradient_check", seed, || {
        let err = toy_grad_check(seed).map_err(|e| e.to_string())?;
        let detail = format!("max relative error {err:e}");
        if err < 1e-4 {
            Ok(detail)
        } else {
            Err(detail)
        }
    }));
    out.push(timed("loader_round_trip", seed, || loader_round_trip(seed).map(|_| String::new())));
    out.push(timed("checkpoint_integrity", seed, || checkpoint_integrity(seed).map(|_| String::new())));
    out.push(timed("determinism", seed, || determinism(seed).map(|_| String::new())));
    out
}

pub fn report_csv(results: &[CheckResult], hash: &str) -> String {
    let mut s = String::from("check,passed,seconds,seed,detail,config_hash\n");
    for r in results {
        let _ = writeln!(
            s,
            "{},{},{:.3},{},\"{}\",{hash}",
            r.name,
            u8::from(r.passed),
            r.seconds,
            r.seed,
            r.detail.replace('"', "'")
        );
    }
    s
}
