//! Layered `key=value` run configuration.
//!
//! Precedence, lowest first: built-in defaults, the `LRRG_GRADER_URL` /
//! `LRRG_GRADER_TOKEN` environment variables, the config file, then
//! command-line flags and overrides. Keys use dotted section prefixes such
//! as `trainer.alpha`; `#` starts a comment line.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use lrrg_core::dualloop::{TrainMode, TrainerConfig};
use lrrg_core::synth::{CueSign, DatasetConfig, SpuriousCue};
use lrrg_core::{Regime, Split};

pub const ENV_GRADER_URL: &str = "LRRG_GRADER_URL";
pub const ENV_GRADER_TOKEN: &str = "LRRG_GRADER_TOKEN";
const REDACTED: &str = "<redacted>";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("{origin}: line {line}: expected key=value")]
    Syntax { origin: String, line: usize },
    #[error("{origin}: unknown key `{key}`")]
    UnknownKey { origin: String, key: String },
    #[error("{origin}: `{key}`: cannot parse `{value}`: {reason}")]
    Value {
        origin: String,
        key: String,
        value: String,
        reason: String,
    },
    #[error("cannot read config {path}: {reason}")]
    Io { path: PathBuf, reason: String },
}

/// One of the four evaluation benchmarks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Benchmark {
    Std,
    Mild,
    Severe,
    Aux,
}

impl Benchmark {
    pub const ALL: [Benchmark; 4] = [Benchmark::Std, Benchmark::Mild, Benchmark::Severe, Benchmark::Aux];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Std => "std",
            Benchmark::Mild => "mild",
            Benchmark::Severe => "severe",
            Benchmark::Aux => "aux",
        }
    }

    pub fn regime(self) -> Option<Regime> {
        match self {
            Benchmark::Std => Some(Regime::Standard),
            Benchmark::Mild => Some(Regime::Mild),
            Benchmark::Severe => Some(Regime::Severe),
            Benchmark::Aux => None,
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Benchmark {
    type Err = String;

    fn from_str(s: &str) -> Result<Benchmark, String> {
        Benchmark::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| format!("unknown benchmark `{s}` (std, mild, severe, aux)"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeSettings {
    pub batches: usize,
    /// `None` evaluates each pool once in full.
    pub batch_size: Option<usize>,
    pub split: Split,
    pub params: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraderSettings {
    pub url: Option<String>,
    pub token: Option<String>,
    pub model: String,
    pub timeout_secs: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Dataset directory for train/eval/probe; defaults to `<out>/data`.
    pub data_dir: Option<PathBuf>,
    pub dataset: DatasetConfig,
    /// Hidden width of the classifier; `None` is a linear model.
    pub hidden: Option<usize>,
    /// `seed` is ignored here; each run uses its own seed.
    pub trainer: TrainerConfig,
    pub modes: Vec<TrainMode>,
    /// Runs use seeds `seed, seed+1, …, seed+seeds−1`.
    pub seeds: u64,
    pub benchmarks: Vec<Benchmark>,
    pub threshold: f64,
    /// Parameter file or directory for eval and probe; defaults to `<out>/train/params`.
    pub params: Option<PathBuf>,
    pub probe: ProbeSettings,
    pub metadata: Option<PathBuf>,
    pub grader: GraderSettings,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            seed: 0,
            out: PathBuf::from("runs"),
            data_dir: None,
            dataset: DatasetConfig::default(),
            hidden: Some(16),
            trainer: TrainerConfig::default(),
            modes: vec![TrainMode::Erm, TrainMode::DtsFirstOrder],
            seeds: 1,
            benchmarks: Benchmark::ALL.to_vec(),
            threshold: 0.5,
            params: None,
            probe: ProbeSettings {
                batches: 20,
                batch_size: Some(128),
                split: Split::Train,
                params: None,
            },
            metadata: None,
            grader: GraderSettings {
                url: None,
                token: None,
                model: "quality-grader".into(),
                timeout_secs: 30,
            },
        }
    }
}

/// Ordered `key=value` assignments, each tagged with where it came from.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Layer {
    pub origin: String,
    pub entries: Vec<(usize, String, String)>,
}

impl Layer {
    pub fn parse(text: &str, origin: &str) -> Result<Layer, ConfigError> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                origin: origin.into(),
                line: i + 1,
            })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(ConfigError::Syntax {
                    origin: origin.into(),
                    line: i + 1,
                });
            }
            entries.push((i + 1, k.to_string(), v.trim().to_string()));
        }
        Ok(Layer {
            origin: origin.into(),
            entries,
        })
    }

    pub fn from_file(path: &Path) -> Result<Layer, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Layer::parse(&text, &path.display().to_string())
    }

    /// Command-line `key=value` arguments.
    pub fn from_args(args: &[String]) -> Result<Layer, ConfigError> {
        let mut entries = Vec::new();
        for (i, a) in args.iter().enumerate() {
            let (k, v) = a.split_once('=').ok_or_else(|| ConfigError::Syntax {
                origin: "command line".into(),
                line: i + 1,
            })?;
            entries.push((i + 1, k.trim().to_string(), v.trim().to_string()));
        }
        Ok(Layer {
            origin: "command line".into(),
            entries,
        })
    }

    pub fn push(&mut self, key: &str, value: impl fmt::Display) {
        let n = self.entries.len() + 1;
        self.entries.push((n, key.into(), value.to_string()));
    }
}

fn parse_value<T: FromStr>(origin: &str, key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value {
        origin: origin.into(),
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

fn parse_list<T: FromStr>(origin: &str, key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(origin, key, s))
        .collect()
}

/// `0` or `none` means absent.
fn parse_optional_size(origin: &str, key: &str, value: &str) -> Result<Option<usize>, ConfigError> {
    if value.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    let n: usize = parse_value(origin, key, value)?;
    Ok((n > 0).then_some(n))
}

fn optional_string(value: &str) -> Option<String> {
    (!value.is_empty()).then(|| value.to_string())
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

struct Resolver {
    config: RunConfig,
    lambda_set: bool,
}

impl Resolver {
    fn apply(&mut self, origin: &str, key: &str, value: &str) -> Result<(), ConfigError> {
        let c = &mut self.config;
        match key {
            "seed" => c.seed = parse_value(origin, key, value)?,
            "out" => c.out = PathBuf::from(value),
            "data.dir" => c.data_dir = optional_string(value).map(PathBuf::from),
            "data.patients" => c.dataset.patients = parse_value(origin, key, value)?,
            "data.aux_test" => c.dataset.aux_test = parse_value(origin, key, value)?,
            "model.hidden" => c.hidden = parse_optional_size(origin, key, value)?,
            "trainer.alpha" => c.trainer.alpha = parse_value(origin, key, value)?,
            "trainer.outer_lr" => c.trainer.outer_lr = parse_value(origin, key, value)?,
            "trainer.lambda" => {
                c.trainer.lambda = parse_value(origin, key, value)?;
                self.lambda_set = true;
            }
            "trainer.steps" => c.trainer.steps = parse_value(origin, key, value)?,
            "trainer.batch_size" => c.trainer.batch_size = parse_value(origin, key, value)?,
            "trainer.zero_grad_policy" => c.trainer.zero_grad_policy = parse_value(origin, key, value)?,
            "trainer.fd_step" => c.trainer.fd_step = parse_value(origin, key, value)?,
            "trainer.modes" => c.modes = parse_list(origin, key, value)?,
            "trainer.seeds" => c.seeds = parse_value(origin, key, value)?,
            "eval.benchmarks" => c.benchmarks = parse_list(origin, key, value)?,
            "eval.threshold" => c.threshold = parse_value(origin, key, value)?,
            "eval.params" => c.params = optional_string(value).map(PathBuf::from),
            "probe.batches" => c.probe.batches = parse_value(origin, key, value)?,
            "probe.batch_size" => c.probe.batch_size = parse_optional_size(origin, key, value)?,
            "probe.split" => {
                c.probe.split = Split::ALL
                    .into_iter()
                    .find(|s| s.short_name() == value)
                    .ok_or_else(|| ConfigError::Value {
                        origin: origin.into(),
                        key: key.into(),
                        value: value.into(),
                        reason: "expected train, val or test".into(),
                    })?
            }
            "probe.params" => c.probe.params = optional_string(value).map(PathBuf::from),
            "curate.metadata" => c.metadata = optional_string(value).map(PathBuf::from),
            "grader.url" => c.grader.url = optional_string(value),
            "grader.token" => c.grader.token = optional_string(value),
            "grader.model" => c.grader.model = value.into(),
            "grader.timeout_secs" => c.grader.timeout_secs = parse_value(origin, key, value)?,
            _ => return self.apply_regime_key(origin, key, value),
        }
        Ok(())
    }

    fn apply_regime_key(&mut self, origin: &str, key: &str, value: &str) -> Result<(), ConfigError> {
        let unknown = || ConfigError::UnknownKey {
            origin: origin.into(),
            key: key.into(),
        };
        let rest = key.strip_prefix("data.").ok_or_else(unknown)?;
        let (regime, field) = rest.split_once('.').ok_or_else(unknown)?;
        let r = Regime::from_short_name(regime).ok_or_else(unknown)?.index();
        let counts = &mut self.config.dataset.counts[r];
        let grade = &mut self.config.dataset.grades[r];
        match field {
            "train" => counts.train = parse_value(origin, key, value)?,
            "val" => counts.val = parse_value(origin, key, value)?,
            "test" => counts.test = parse_value(origin, key, value)?,
            "noise_sigma" => grade.noise_sigma = parse_value(origin, key, value)?,
            "blur_passes" => grade.blur_passes = parse_value(origin, key, value)?,
            "shift_range" => grade.shift_range = parse_value(origin, key, value)?,
            "cue_sign" => {
                let intensity = grade.cue.map_or(lrrg_core::synth::DEFAULT_CUE_INTENSITY, |c| c.intensity);
                grade.cue = match value {
                    "none" | "0" => None,
                    v => {
                        let n: i8 = parse_value(origin, key, v)?;
                        let sign = CueSign::from_i8(n).ok_or_else(|| ConfigError::Value {
                            origin: origin.into(),
                            key: key.into(),
                            value: value.into(),
                            reason: "expected +1, -1 or none".into(),
                        })?;
                        Some(SpuriousCue { intensity, sign })
                    }
                }
            }
            "cue_intensity" => {
                let intensity = parse_value(origin, key, value)?;
                if let Some(cue) = grade.cue.as_mut() {
                    cue.intensity = intensity;
                }
            }
            _ => return Err(unknown()),
        }
        Ok(())
    }
}

impl RunConfig {
    /// Resolves layers in order on top of the defaults and the environment
    /// lookup `env`.
    pub fn resolve(layers: &[Layer], env: impl Fn(&str) -> Option<String>) -> Result<RunConfig, ConfigError> {
        let mut r = Resolver {
            config: RunConfig::default(),
            lambda_set: false,
        };
        r.config.grader.url = env(ENV_GRADER_URL).filter(|s| !s.is_empty());
        r.config.grader.token = env(ENV_GRADER_TOKEN).filter(|s| !s.is_empty());
        for layer in layers {
            for (line, key, value) in &layer.entries {
                let origin = format!("{} (entry {line})", layer.origin);
                r.apply(&origin, key, value)?;
            }
        }
        if !r.lambda_set {
            r.config.trainer.lambda = r.config.trainer.alpha;
        }
        Ok(r.config)
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data_dir.clone().unwrap_or_else(|| self.out.join("data"))
    }

    /// Trainer settings for one run seed.
    pub fn trainer_for(&self, seed: u64) -> TrainerConfig {
        TrainerConfig {
            seed,
            ..self.trainer.clone()
        }
    }

    pub fn run_seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.seeds).map(move |i| self.seed + i)
    }

    /// Every effective setting as `key → value`; the grader token is redacted.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
        put("seed", self.seed.to_string());
        put("out", self.out.display().to_string());
        put("data.dir", path(&self.data_dir));
        put("data.patients", self.dataset.patients.to_string());
        put("data.aux_test", self.dataset.aux_test.to_string());
        for r in Regime::ALL {
            let n = r.short_name();
            let c = &self.dataset.counts[r.index()];
            let g = &self.dataset.grades[r.index()];
            put(&format!("data.{n}.train"), c.train.to_string());
            put(&format!("data.{n}.val"), c.val.to_string());
            put(&format!("data.{n}.test"), c.test.to_string());
            put(&format!("data.{n}.noise_sigma"), g.noise_sigma.to_string());
            put(&format!("data.{n}.blur_passes"), g.blur_passes.to_string());
            put(&format!("data.{n}.shift_range"), g.shift_range.to_string());
            match g.cue {
                Some(cue) => {
                    put(&format!("data.{n}.cue_sign"), cue.sign.as_i8().to_string());
                    put(&format!("data.{n}.cue_intensity"), cue.intensity.to_string());
                }
                None => put(&format!("data.{n}.cue_sign"), "none".into()),
            }
        }
        put("model.hidden", self.hidden.unwrap_or(0).to_string());
        let t = &self.trainer;
        put("trainer.alpha", t.alpha.to_string());
        put("trainer.outer_lr", t.outer_lr.to_string());
        put("trainer.lambda", t.lambda.to_string());
        put("trainer.steps", t.steps.to_string());
        put("trainer.batch_size", t.batch_size.to_string());
        put("trainer.zero_grad_policy", t.zero_grad_policy.as_str().into());
        put("trainer.fd_step", t.fd_step.to_string());
        put("trainer.modes", join(&self.modes));
        put("trainer.seeds", self.seeds.to_string());
        put("eval.benchmarks", join(&self.benchmarks));
        put("eval.threshold", self.threshold.to_string());
        put("eval.params", path(&self.params));
        put("probe.batches", self.probe.batches.to_string());
        put("probe.batch_size", self.probe.batch_size.unwrap_or(0).to_string());
        put("probe.split", self.probe.split.short_name().into());
        put("probe.params", path(&self.probe.params));
        put("curate.metadata", path(&self.metadata));
        put("grader.url", self.grader.url.clone().unwrap_or_default());
        put(
            "grader.token",
            self.grader.token.as_ref().map_or(String::new(), |_| REDACTED.into()),
        );
        put("grader.model", self.grader.model.clone());
        put("grader.timeout_secs", self.grader.timeout_secs.to_string());
        m
    }
}
