use std::fs;
use std::path::{Path, PathBuf};

use tkge::sampler::NegFilter;
use tkge::{HyperParams, Mode, Norm};

use crate::CliError;

/// Every setting a subcommand may read.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub hp: HyperParams,
    pub mode: Mode,
    pub seed: u64,
    pub filtered: bool,
    pub min_triples: usize,
    pub neg_filter: NegFilter,
    pub batch_size: usize,
    pub resample: bool,
    pub threads: usize,
    /// Directory holding `train.txt`, `valid.txt`, `test.txt`.
    pub data_dir: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Materialized graph written by `preprocess`.
    pub cache: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            hp: HyperParams::default(),
            mode: Mode::Rtge,
            seed: 0,
            filtered: false,
            min_triples: 300,
            neg_filter: NegFilter::Bin,
            batch_size: 0,
            resample: false,
            threads: 1,
            data_dir: None,
            train: None,
            valid: None,
            test: None,
            cache: None,
            checkpoint: None,
            out_dir: PathBuf::from("."),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| CliError::Usage(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(CliError::Usage(format!("invalid boolean `{value}` for `{key}`"))),
    }
}

impl RunConfig {
    /// Sets one field by name. Keys accept `snake_case` or `kebab-case`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        let k = key.as_str();
        match k {
            "gamma" => self.hp.gamma = parse(k, value)?,
            "alpha" => self.hp.alpha = parse(k, value)?,
            "beta" => self.hp.beta = parse(k, value)?,
            "xi" => self.hp.xi = parse(k, value)?,
            "psi" => self.hp.psi = parse(k, value)?,
            "kappa" => self.hp.kappa = parse(k, value)?,
            "epsilon" => self.hp.epsilon = parse(k, value)?,
            "m" => self.hp.m = parse(k, value)?,
            "d" => self.hp.d = parse(k, value)?,
            "norm" => self.hp.norm = parse::<Norm>(k, value)?,
            "mode" => self.mode = parse(k, value)?,
            "seed" => self.seed = parse(k, value)?,
            "filtered" => self.filtered = parse_bool(k, value)?,
            "min_triples" => self.min_triples = parse(k, value)?,
            "neg_filter" => self.neg_filter = parse(k, value)?,
            "batch_size" => self.batch_size = parse(k, value)?,
            "resample" => self.resample = parse_bool(k, value)?,
            "threads" => self.threads = parse(k, value)?,
            "data_dir" => self.data_dir = Some(value.into()),
            "train" => self.train = Some(value.into()),
            "valid" => self.valid = Some(value.into()),
            "test" => self.test = Some(value.into()),
            "cache" => self.cache = Some(value.into()),
            "checkpoint" => self.checkpoint = Some(value.into()),
            "out_dir" => self.out_dir = value.into(),
            _ => return Err(CliError::Usage(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value", idx + 1)))?;
            self.set(key, value).map_err(|e| CliError::Usage(format!("config line {}: {e}", idx + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.hp.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        if self.min_triples == 0 {
            return Err(CliError::Usage("min_triples must be >= 1".into()));
        }
        Ok(())
    }

    fn split(&self, explicit: &Option<PathBuf>, name: &str) -> Option<PathBuf> {
        explicit.clone().or_else(|| self.data_dir.as_ref().map(|d| d.join(name)))
    }

    pub fn train_path(&self) -> Option<PathBuf> {
        self.split(&self.train, "train.txt")
    }

    /// Valid file, if named explicitly or present in the data directory.
    pub fn valid_path(&self) -> Option<PathBuf> {
        self.valid.clone().or_else(|| self.split(&None, "valid.txt").filter(|p| p.is_file()))
    }

    pub fn test_path(&self) -> Option<PathBuf> {
        self.test.clone().or_else(|| self.split(&None, "test.txt").filter(|p| p.is_file()))
    }

    pub fn cache_path(&self) -> PathBuf {
        self.cache.clone().unwrap_or_else(|| self.out_dir.join("graph.cache"))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out_dir.join("model.ckpt"))
    }
}
