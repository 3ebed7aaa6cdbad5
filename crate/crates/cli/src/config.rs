use std::path::{Path, PathBuf};

use lshn::data::{load_cifar10, load_mnist, select_indices, CorruptionSpec, Dataset, Rng};
use lshn::eval::EvalConfig;
use lshn::model::{Lshn, ModelDims};
use lshn::train::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Mnist,
    Cifar10,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub kind: DatasetKind,
    /// Root holding `mnist/` and `cifar-10-batches-bin/`. When unset,
    /// `LSHN_DATA_DIR` or the workspace `data/` directory is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_split")]
    pub split: Split,
    /// CIFAR-10 training batch numbers (1..=5) to draw from.
    #[serde(default = "default_batches")]
    pub cifar_batches: Vec<u8>,
    /// Stored-pattern count.
    pub patterns: usize,
}

fn default_split() -> Split {
    Split::Train
}

fn default_batches() -> Vec<u8> {
    vec![1]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Recurrent weights trained jointly by gradient descent.
    Gradient,
    /// Autoencoder trained alone, then outer-product storage.
    Hebbian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_neurons: usize,
    #[serde(default = "default_hidden")]
    pub hidden_enc: usize,
    #[serde(default = "default_hidden")]
    pub hidden_dec: usize,
    #[serde(default)]
    pub zero_diagonal: bool,
    #[serde(default = "default_variant")]
    pub variant: Variant,
}

fn default_hidden() -> usize {
    512
}

fn default_variant() -> Variant {
    Variant::Gradient
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Dynamics steps at retrieval time.
    pub steps: usize,
    pub threshold: f64,
    pub latent_agreement: f64,
    pub early_stop: Option<f64>,
    pub chunk: usize,
    /// Cues evaluated by `eval`, in order.
    pub specs: Vec<CorruptionSpec>,
    /// Noise-sweep values.
    pub sigmas: Vec<f64>,
    /// Capacity-sweep stored counts.
    pub counts: Vec<usize>,
    /// Cue used by capacity sweeps.
    pub sweep_spec: CorruptionSpec,
    /// `k` values for the dictionary baseline.
    pub dict_k: Vec<usize>,
}

impl Default for EvalSection {
    fn default() -> Self {
        let run = EvalConfig::default();
        Self {
            steps: run.steps,
            threshold: run.threshold,
            latent_agreement: run.latent_agreement,
            early_stop: run.early_stop,
            chunk: run.chunk,
            specs: vec![
                CorruptionSpec::half_mask(lshn::data::MaskSide::Bottom),
                CorruptionSpec::gaussian(0.5),
            ],
            sigmas: vec![0.0, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0],
            counts: vec![10, 20, 50, 100],
            sweep_spec: CorruptionSpec::half_mask(lshn::data::MaskSide::Bottom),
            dict_k: vec![1, 5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FigureConfig {
    pub recall_patterns: Vec<usize>,
    pub recall_steps: Vec<usize>,
    pub heatmap_pattern: usize,
    pub heatmap_steps: usize,
    /// Deviations within `±gray_band` render gray.
    pub gray_band: f64,
}

impl Default for FigureConfig {
    fn default() -> Self {
        Self {
            recall_patterns: vec![0],
            recall_steps: vec![0, 1, 2, 5, 10, 100],
            heatmap_pattern: 0,
            heatmap_steps: 30,
            gray_band: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub figures: FigureConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.data.patterns == 0 {
            return Err(invalid("data.patterns", "must be >= 1"));
        }
        if self.data.cifar_batches.iter().any(|b| !(1..=5).contains(b)) || self.data.cifar_batches.is_empty() {
            return Err(invalid("data.cifar_batches", "entries must lie in 1..=5"));
        }
        if self.model.n_neurons == 0 || self.model.hidden_enc == 0 || self.model.hidden_dec == 0 {
            return Err(invalid("model", "widths must be >= 1"));
        }
        self.train.validate().map_err(|e| invalid("train", e))?;
        self.eval_config(None).validate().map_err(|e| invalid("eval", e))?;
        for (i, s) in self.eval.specs.iter().enumerate() {
            s.validate().map_err(|e| invalid(&format!("eval.specs[{i}]"), e))?;
        }
        self.eval.sweep_spec.validate().map_err(|e| invalid("eval.sweep_spec", e))?;
        if self.eval.sigmas.iter().any(|s| !(*s >= 0.0)) {
            return Err(invalid("eval.sigmas", "must be >= 0"));
        }
        if self.eval.counts.windows(2).any(|w| w[0] > w[1]) {
            return Err(invalid("eval.counts", "must be ascending"));
        }
        if self.eval.dict_k.contains(&0) {
            return Err(invalid("eval.dict_k", "must be >= 1"));
        }
        if !(self.figures.gray_band >= 0.0) {
            return Err(invalid("figures.gray_band", "must be >= 0"));
        }
        Ok(())
    }

    /// Canonical TOML rendering; the hash is taken over these bytes.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn hash_bytes(&self) -> [u8; 32] {
        Sha256::digest(self.canonical().as_bytes()).into()
    }

    pub fn hash_hex(&self) -> String {
        hex::encode(self.hash_bytes())
    }

    pub fn dims(&self, d_img: usize) -> ModelDims {
        ModelDims {
            d_img,
            hidden_enc: self.model.hidden_enc,
            n_neurons: self.model.n_neurons,
            hidden_dec: self.model.hidden_dec,
        }
    }

    pub fn data_dir(&self) -> PathBuf {
        if let Some(d) = &self.data.dir {
            return d.clone();
        }
        if let Some(d) = std::env::var_os("LSHN_DATA_DIR") {
            return PathBuf::from(d);
        }
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
    }

    pub fn root_rng(&self) -> Rng {
        Rng::new(self.seed)
    }

    /// Training config with the experiment seed folded in.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn eval_config(&self, threads: Option<usize>) -> EvalConfig {
        let e = &self.eval;
        EvalConfig {
            steps: e.steps,
            threshold: e.threshold,
            latent_agreement: e.latent_agreement,
            early_stop: e.early_stop,
            chunk: e.chunk,
            threads: threads.unwrap_or(1),
        }
    }

    pub fn fresh_model(&self, d_img: usize) -> Result<Lshn, CliError> {
        let mut model = Lshn::init(self.dims(d_img), &mut self.root_rng().substream(&[0x1417]))?;
        model.zero_diagonal = self.model.zero_diagonal;
        Ok(model)
    }
}

fn require(path: PathBuf) -> Result<PathBuf, CliError> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::MissingData(path))
    }
}

/// Loads the configured pool of images (before stored-set selection).
pub fn load_pool(cfg: &ExperimentConfig) -> Result<Dataset, CliError> {
    let dir = cfg.data_dir();
    match cfg.data.kind {
        DatasetKind::Mnist => {
            let prefix = match cfg.data.split {
                Split::Train => "train",
                Split::Test => "t10k",
            };
            let m = dir.join("mnist");
            let images = require(m.join(format!("{prefix}-images-idx3-ubyte")))?;
            let labels = require(m.join(format!("{prefix}-labels-idx1-ubyte")))?;
            Ok(load_mnist(&images, &labels)?)
        }
        DatasetKind::Cifar10 => {
            let c = dir.join("cifar-10-batches-bin");
            let files = match cfg.data.split {
                Split::Train => cfg
                    .data
                    .cifar_batches
                    .iter()
                    .map(|b| require(c.join(format!("data_batch_{b}.bin"))))
                    .collect::<Result<Vec<_>, _>>()?,
                Split::Test => vec![require(c.join("test_batch.bin"))?],
            };
            Ok(load_cifar10(&files)?)
        }
    }
}

/// Stored patterns and their pool indices, chosen by a fixed sub-stream of
/// the experiment seed.
pub fn stored_set(cfg: &ExperimentConfig, pool: &Dataset) -> Result<(Dataset, Vec<usize>), CliError> {
    let idx = select_indices(pool, cfg.data.patterns, &mut cfg.root_rng().substream(&[0x5e1]))?;
    Ok((pool.subset(&idx), idx))
}

pub fn load_stored(cfg: &ExperimentConfig) -> Result<(Dataset, Vec<usize>), CliError> {
    let pool = load_pool(cfg)?;
    stored_set(cfg, &pool)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "t"
[data]
kind = "mnist"
patterns = 10
[model]
n_neurons = 64
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.train, TrainConfig::default());
        assert_eq!(c.model.hidden_enc, 512);
        assert_eq!(c.eval.steps, 1000);
        assert_eq!(c.eval.specs.len(), 2);
    }

    #[test]
    fn hash_ignores_formatting_but_not_content() {
        let a = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let spaced = MINIMAL.replace("patterns = 10", "patterns     =   10\n# comment");
        let b = ExperimentConfig::from_toml(&spaced).unwrap();
        assert_eq!(a.hash_hex(), b.hash_hex());
        let c = ExperimentConfig::from_toml(&MINIMAL.replace("10", "11")).unwrap();
        assert_ne!(a.hash_hex(), c.hash_hex());
        assert_eq!(a.hash_hex().len(), 64);
    }

    #[test]
    fn canonical_form_round_trips() {
        let a = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let b = ExperimentConfig::from_toml(&a.canonical()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_fields_are_named() {
        let e = ExperimentConfig::from_toml(&format!("{MINIMAL}[train]\nt_train = 0\n")).unwrap_err();
        assert!(e.to_string().contains("train"), "{e}");
        let e = ExperimentConfig::from_toml(&format!("{MINIMAL}[train]\nbogus = 1\n")).unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
        let e = ExperimentConfig::from_toml(&MINIMAL.replace("patterns = 10", "patterns = 0")).unwrap_err();
        assert!(e.to_string().contains("data.patterns"), "{e}");
    }
}
