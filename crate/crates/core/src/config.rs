//! Run configuration: flat `key = value` files with dotted sections, strict
//! unknown-key rejection, per-dataset defaults, and a resolved-config hash
//! embedded in every output file.

use crate::encode::BinMode;
use crate::engine::Mode;
use crate::error::{Error, Result};
use crate::optim::OptimizerKind;
use crate::surrogate::SurrogateKind;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Which dataset a run trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dataset {
    Mnist,
    Nmnist,
    Synth,
}

impl Dataset {
    pub fn parse(s: &str) -> Option<Dataset> {
        match s {
            "mnist" => Some(Dataset::Mnist),
            "nmnist" => Some(Dataset::Nmnist),
            "synth" => Some(Dataset::Synth),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Dataset::Mnist => "mnist",
            Dataset::Nmnist => "nmnist",
            Dataset::Synth => "synth",
        }
    }

    /// Per-dataset threshold and decay defaults.
    pub fn default_v_th(&self) -> f64 {
        match self {
            Dataset::Mnist => 1.5,
            Dataset::Synth => 2.0,
            Dataset::Nmnist => 0.2,
        }
    }

    pub fn default_tau(&self) -> f64 {
        match self {
            Dataset::Mnist => 0.1,
            Dataset::Synth => 0.15,
            Dataset::Nmnist => 0.2,
        }
    }

    pub fn default_arch(&self) -> &'static str {
        match self {
            Dataset::Mnist => "784-400-10",
            Dataset::Synth => "784-400-10",
            Dataset::Nmnist => "34x34x2-400-400-10",
        }
    }
}

/// When test-set evaluation runs during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalCadence {
    EveryEpoch,
    Final,
    Never,
}

impl EvalCadence {
    pub fn parse(s: &str) -> Option<EvalCadence> {
        match s {
            "every-epoch" => Some(EvalCadence::EveryEpoch),
            "final" => Some(EvalCadence::Final),
            "never" => Some(EvalCadence::Never),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EvalCadence::EveryEpoch => "every-epoch",
            EvalCadence::Final => "final",
            EvalCadence::Never => "never",
        }
    }
}

/// A fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: Dataset,
    pub arch: String,
    pub t_window: usize,
    pub dt_ms: f64,
    pub offset_ms: f64,
    pub bin_mode: BinMode,
    pub v_th: f64,
    pub tau: f64,
    pub surrogate_kind: SurrogateKind,
    pub surrogate_a: f64,
    pub optim_kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    pub mode: Mode,
    pub workers: usize,
    pub eval: EvalCadence,
    /// Cap on training/test samples; 0 means the full set.
    pub limit_train: usize,
    pub limit_test: usize,
    pub data_dir: PathBuf,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Starts from per-dataset defaults.
    pub fn defaults(dataset: Dataset) -> RunConfig {
        RunConfig {
            dataset,
            arch: dataset.default_arch().to_string(),
            t_window: 30,
            dt_ms: 1.0,
            offset_ms: 0.0,
            bin_mode: BinMode::Or,
            v_th: dataset.default_v_th(),
            tau: dataset.default_tau(),
            surrogate_kind: SurrogateKind::Rectangular,
            surrogate_a: 1.0,
            optim_kind: OptimizerKind::Sgd,
            lr: 0.5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch: 100,
            epochs: 200,
            seed: 1,
            mode: Mode::Stbp,
            workers: 0,
            eval: EvalCadence::EveryEpoch,
            limit_train: 0,
            limit_test: 0,
            data_dir: default_data_dir(),
            out_dir: None,
        }
    }

    /// Parses a config file's text, then applies `overrides` (CLI flags win
    /// over file keys). Unknown keys are rejected.
    pub fn from_text(text: &str, overrides: &[(String, String)]) -> Result<RunConfig> {
        let mut map = parse_kv(text)?;
        for (k, v) in overrides {
            map.insert(k.clone(), v.clone());
        }
        Self::from_map(map)
    }

    fn from_map(mut map: BTreeMap<String, String>) -> Result<RunConfig> {
        let dataset = match map.remove("dataset") {
            Some(v) => Dataset::parse(&v)
                .ok_or_else(|| Error::Config(format!("unknown dataset '{v}'")))?,
            None => return Err(Error::Config("missing required key 'dataset'".into())),
        };
        let mut cfg = RunConfig::defaults(dataset);
        // conv architectures default to Adam at its conventional rate
        if let Some(arch) = map.get("arch") {
            cfg.arch = arch.clone();
        }
        if cfg.arch.contains('C') {
            cfg.optim_kind = OptimizerKind::Adam;
            cfg.lr = 1e-3;
        }

        macro_rules! take {
            ($key:literal, $slot:expr, $parse:expr) => {
                if let Some(v) = map.remove($key) {
                    $slot = $parse(&v)
                        .ok_or_else(|| Error::Config(format!("bad value '{v}' for {}", $key)))?;
                }
            };
        }
        let parse_usize = |v: &str| v.parse::<usize>().ok();
        let parse_f64 = |v: &str| v.parse::<f64>().ok();
        map.remove("arch");
        take!("encode.T", cfg.t_window, parse_usize);
        take!("encode.dt", cfg.dt_ms, parse_f64);
        take!("encode.offset_ms", cfg.offset_ms, parse_f64);
        take!("encode.bin_mode", cfg.bin_mode, BinMode::parse);
        take!("lif.v_th", cfg.v_th, parse_f64);
        take!("lif.tau", cfg.tau, parse_f64);
        take!("surrogate.kind", cfg.surrogate_kind, SurrogateKind::parse);
        take!("surrogate.a", cfg.surrogate_a, parse_f64);
        take!("optim.kind", cfg.optim_kind, OptimizerKind::parse);
        take!("optim.lr", cfg.lr, parse_f64);
        take!("optim.beta1", cfg.beta1, parse_f64);
        take!("optim.beta2", cfg.beta2, parse_f64);
        take!("optim.epsilon", cfg.epsilon, parse_f64);
        take!("batch", cfg.batch, parse_usize);
        take!("epochs", cfg.epochs, parse_usize);
        take!("seed", cfg.seed, |v: &str| v.parse::<u64>().ok());
        take!("mode", cfg.mode, Mode::parse);
        take!("workers", cfg.workers, parse_usize);
        take!("eval", cfg.eval, EvalCadence::parse);
        take!("limit.train", cfg.limit_train, parse_usize);
        take!("limit.test", cfg.limit_test, parse_usize);
        if let Some(v) = map.remove("data_dir") {
            cfg.data_dir = PathBuf::from(v);
        }
        if let Some(v) = map.remove("out_dir") {
            cfg.out_dir = Some(PathBuf::from(v));
        }
        if let Some((k, _)) = map.into_iter().next() {
            return Err(Error::Config(format!("unknown config key '{k}'")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        crate::topology::parse_arch(&self.arch)?;
        let checks: [(bool, &str); 12] = [
            (self.t_window >= 1, "encode.T must be >= 1"),
            (self.dt_ms > 0.0, "encode.dt must be positive"),
            (self.offset_ms >= 0.0, "encode.offset_ms must be >= 0"),
            (self.v_th > 0.0, "lif.v_th must be positive"),
            (
                self.tau > 0.0 && self.tau <= 1.0,
                "lif.tau is a per-step decay factor in (0, 1]",
            ),
            (self.surrogate_a > 0.0, "surrogate.a must be positive"),
            (self.lr > 0.0, "optim.lr must be positive"),
            (
                (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2),
                "optim.beta1/beta2 must lie in [0, 1)",
            ),
            (self.epsilon > 0.0, "optim.epsilon must be positive"),
            (self.batch >= 1, "batch must be >= 1"),
            (self.epochs < 1_000_000, "epochs is implausibly large"),
            (
                self.dataset != Dataset::Nmnist || self.arch.starts_with("34x34x2"),
                "nmnist architectures start from the 34x34x2 sensor shape",
            ),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Config(msg.into()));
            }
        }
        Ok(())
    }

    /// Canonical `key = value` listing of every resolved field, sorted.
    pub fn canonical_string(&self) -> String {
        let mut rows: Vec<(String, String)> = vec![
            ("arch".into(), self.arch.clone()),
            ("batch".into(), self.batch.to_string()),
            ("dataset".into(), self.dataset.name().into()),
            ("encode.T".into(), self.t_window.to_string()),
            ("encode.bin_mode".into(), match self.bin_mode {
                BinMode::Or => "or".into(),
                BinMode::Count => "count".into(),
            }),
            ("encode.dt".into(), format!("{}", self.dt_ms)),
            ("encode.offset_ms".into(), format!("{}", self.offset_ms)),
            ("epochs".into(), self.epochs.to_string()),
            ("eval".into(), self.eval.name().into()),
            ("lif.tau".into(), format!("{}", self.tau)),
            ("lif.v_th".into(), format!("{}", self.v_th)),
            ("limit.test".into(), self.limit_test.to_string()),
            ("limit.train".into(), self.limit_train.to_string()),
            ("mode".into(), self.mode.name().into()),
            ("optim.beta1".into(), format!("{}", self.beta1)),
            ("optim.beta2".into(), format!("{}", self.beta2)),
            ("optim.epsilon".into(), format!("{}", self.epsilon)),
            ("optim.kind".into(), self.optim_kind.name().into()),
            ("optim.lr".into(), format!("{}", self.lr)),
            ("seed".into(), self.seed.to_string()),
            ("surrogate.a".into(), format!("{}", self.surrogate_a)),
            ("surrogate.kind".into(), self.surrogate_kind.name().into()),
        ];
        rows.sort();
        rows.into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Short hex digest of the canonical listing. Worker count and paths are
    /// excluded: they cannot change results, so one configuration keeps one
    /// hash no matter where or how parallel it runs.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_string().as_bytes());
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn lif_params(&self) -> Result<crate::lif::LifParams> {
        crate::lif::LifParams::new(self.tau, self.v_th, self.dt_ms)
    }

    pub fn surrogate(&self) -> crate::surrogate::SurrogateSpec {
        crate::surrogate::SurrogateSpec::new(self.surrogate_kind, self.surrogate_a, self.v_th)
    }

    pub fn optimizer(&self) -> crate::optim::Optimizer {
        crate::optim::Optimizer::new(self.optim_kind, self.lr, self.beta1, self.beta2, self.epsilon)
    }
}

/// Dataset root: `SNN_DATA_DIR` if set, else `./data`.
pub fn default_data_dir() -> PathBuf {
    std::env::var_os("SNN_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

/// Parses `key = value` lines; `#` starts a comment; blank lines ignored.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "line {}: expected 'key = value', got '{raw}'",
                lineno + 1
            )));
        };
        let key = k.trim().to_string();
        if map.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
        }
    }
    Ok(map)
}

/// Loads and resolves a config file.
pub fn load_config(path: &Path, overrides: &[(String, String)]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunConfig::from_text(&text, overrides)
}
