//! Flat `key = value` experiment configuration with dotted section keys.
//!
//! ```text
//! # comments start with '#'
//! backbone.kind = lightgcn
//! sampler.kind = mixgcf
//! loss.alpha = 0.5
//! eval.ks = 10,20
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::backbone::BackboneKind;
use crate::error::{Error, Result};
use crate::objective::{LossWeights, TrainConfig};
use crate::sampling::{SamplerConfig, SamplerKind};
use crate::semantic::{ProviderKind, ProviderSettings};

#[derive(Clone, Debug, PartialEq)]
pub struct EvalPlan {
    pub ks: Vec<usize>,
    pub strata: bool,
    pub fhns: bool,
    pub sweep: Vec<f64>,
    pub panel_size: usize,
}

impl Default for EvalPlan {
    fn default() -> Self {
        Self {
            ks: vec![10, 20],
            strata: false,
            fhns: false,
            sweep: Vec::new(),
            panel_size: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct DataPaths {
    /// Directory holding `train.csv`, `test.csv` and `mapping.json`.
    pub split: Option<PathBuf>,
    pub profiles: Option<PathBuf>,
    pub negatives: Option<PathBuf>,
    pub anchors: Option<PathBuf>,
    pub item_meta: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataPaths,
    pub train: TrainConfig,
    pub sampler: SamplerConfig,
    pub provider: ProviderSettings,
    pub loss: LossWeights,
    pub eval: EvalPlan,
    /// Negatives requested per pair when sampling semantic negatives.
    pub negatives_per_pair: usize,
    pub hybrid: bool,
    pub hybrid_instruction: String,
    /// Root under which per-run directories are created.
    pub runs_dir: PathBuf,
}

pub const DEFAULT_HYBRID_INSTRUCTION: &str =
    "Given the user and item below, generate a hard negative sample for this user.";

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataPaths::default(),
            train: TrainConfig::default(),
            sampler: SamplerConfig::new(SamplerKind::Rns),
            provider: ProviderSettings::default(),
            loss: LossWeights::default(),
            eval: EvalPlan::default(),
            negatives_per_pair: 1,
            hybrid: false,
            hybrid_instruction: DEFAULT_HYBRID_INSTRUCTION.into(),
            runs_dir: PathBuf::from("runs"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| Error::Config(format!("{key} = {value:?}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key} = {value:?}: expected true or false"
        ))),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn opt_path(value: &str) -> Option<PathBuf> {
    let v = value.trim();
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn opt_string(value: &str) -> Option<String> {
    let v = value.trim();
    (!v.is_empty()).then(|| v.to_string())
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn path_str(p: &Option<PathBuf>) -> String {
    p.as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_default()
}

impl ExperimentConfig {
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                source_name: "config".into(),
                line: i as u64 + 1,
                msg: format!("expected `key = value`, got {line:?}"),
            })?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|_| Error::MissingFile(path.display().to_string()))?;
        Self::parse_text(&text).map_err(|e| match e {
            Error::Parse { line, msg, .. } => Error::Parse {
                source_name: path.display().to_string(),
                line,
                msg,
            },
            other => other,
        })
    }

    /// Sets one dotted key. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value;
        match key {
            "data.split" => self.data.split = opt_path(v),
            "data.profiles" => self.data.profiles = opt_path(v),
            "data.negatives" => self.data.negatives = opt_path(v),
            "data.anchors" => self.data.anchors = opt_path(v),
            "data.item_meta" => self.data.item_meta = opt_path(v),
            "run.dir" => self.runs_dir = PathBuf::from(v.trim()),

            "backbone.kind" => self.train.backbone = parse::<BackboneKind>(key, v)?,
            "backbone.dim" => self.train.dim = parse(key, v)?,
            "backbone.layers" => self.train.layers = parse(key, v)?,

            "sampler.kind" => {
                let kind: SamplerKind = parse(key, v)?;
                if self.sampler.pool == self.sampler.kind.default_pool() {
                    self.sampler.pool = kind.default_pool();
                }
                self.sampler.kind = kind;
            }
            "sampler.pool" => self.sampler.pool = parse(key, v)?,
            "sampler.ahns_beta" => self.sampler.ahns_beta = parse(key, v)?,
            "sampler.seed" => self.sampler.seed = parse(key, v)?,

            "provider.kind" => self.provider.kind = parse::<ProviderKind>(key, v)?,
            "provider.endpoint" => self.provider.endpoint = opt_string(v),
            "provider.embedding_endpoint" => self.provider.embedding_endpoint = opt_string(v),
            "provider.model" => self.provider.model = v.trim().to_string(),
            "provider.embedding_model" => self.provider.embedding_model = v.trim().to_string(),
            "provider.mock_seed" => self.provider.mock_seed = parse(key, v)?,
            "provider.mock_dim" => self.provider.mock_dim = parse(key, v)?,
            "provider.mock_none_rate" => self.provider.mock_none_rate = parse(key, v)?,
            "provider.cache" => self.provider.cache = opt_path(v),
            "provider.max_inflight" => self.provider.max_inflight = parse(key, v)?,
            "provider.timeout_ms" => self.provider.timeout_ms = parse(key, v)?,
            "provider.retries" => self.provider.retries = parse(key, v)?,
            "provider.backoff_ms" => self.provider.backoff_ms = parse(key, v)?,
            "provider.allow_network" => self.provider.allow_network = parse_bool(key, v)?,
            "provider.direct_embedding" => self.provider.direct_embedding = parse_bool(key, v)?,

            "semantic.negatives" => self.negatives_per_pair = parse(key, v)?,
            "semantic.hybrid" => self.hybrid = parse_bool(key, v)?,
            "semantic.instruction" => self.hybrid_instruction = v.trim().to_string(),
            "semantic.hidden" => self.train.hidden = parse(key, v)?,

            "loss.alpha" => self.loss.alpha = parse(key, v)?,
            "loss.tau" => self.loss.tau = parse(key, v)?,
            "loss.lambda1" => self.loss.lambda1 = parse(key, v)?,
            "loss.lambda2" => self.loss.lambda2 = parse(key, v)?,
            "loss.lambda_sft" => self.loss.lambda_sft = parse(key, v)?,

            "trainer.lr" => self.train.learning_rate = parse(key, v)?,
            "trainer.batch" => self.train.batch_size = parse(key, v)?,
            "trainer.epochs" => self.train.epochs = parse(key, v)?,
            "trainer.seed" => self.train.seed = parse(key, v)?,
            "trainer.init_scale" => self.train.init_scale = parse(key, v)?,
            "trainer.workers" => self.train.workers = parse(key, v)?,
            "trainer.head_lr_scale" => self.train.head_lr_scale = parse(key, v)?,

            "eval.ks" => self.eval.ks = parse_list(key, v)?,
            "eval.strata" => self.eval.strata = parse_bool(key, v)?,
            "eval.fhns" => self.eval.fhns = parse_bool(key, v)?,
            "eval.sweep" => self.eval.sweep = parse_list(key, v)?,
            "eval.panel" => self.eval.panel_size = parse(key, v)?,

            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<'a>(
        &mut self,
        overrides: impl IntoIterator<Item = &'a str>,
    ) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Numeric and cross-field constraints. Path checks are left to the
    /// subcommand that needs the path.
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.sampler.validate()?;
        self.loss.validate()?;
        self.provider.validate()?;
        if self.negatives_per_pair == 0 {
            return Err(Error::Config("semantic.negatives must be >= 1".into()));
        }
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            return Err(Error::Config("eval.ks must list positive integers".into()));
        }
        if let Some(f) = self.eval.sweep.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return Err(Error::Config(format!(
                "eval.sweep fractions must lie in (0, 1], got {f}"
            )));
        }
        if self.eval.panel_size == 0 {
            return Err(Error::Config("eval.panel must be >= 1".into()));
        }
        Ok(())
    }

    /// Every setting as sorted `key = value` lines; the run id hashes this.
    pub fn canonical(&self) -> String {
        let t = &self.train;
        let s = &self.sampler;
        let p = &self.provider;
        let l = &self.loss;
        let e = &self.eval;
        let mut pairs: Vec<(&str, String)> = vec![
            ("data.split", path_str(&self.data.split)),
            ("data.profiles", path_str(&self.data.profiles)),
            ("data.negatives", path_str(&self.data.negatives)),
            ("data.anchors", path_str(&self.data.anchors)),
            ("data.item_meta", path_str(&self.data.item_meta)),
            ("backbone.kind", t.backbone.to_string()),
            ("backbone.dim", t.dim.to_string()),
            ("backbone.layers", t.layers.to_string()),
            ("sampler.kind", s.kind.to_string()),
            ("sampler.pool", s.pool.to_string()),
            ("sampler.ahns_beta", s.ahns_beta.to_string()),
            ("sampler.seed", s.seed.to_string()),
            (
                "provider.kind",
                format!("{:?}", p.kind).to_ascii_lowercase(),
            ),
            ("provider.endpoint", p.endpoint.clone().unwrap_or_default()),
            (
                "provider.embedding_endpoint",
                p.embedding_endpoint.clone().unwrap_or_default(),
            ),
            ("provider.model", p.model.clone()),
            ("provider.embedding_model", p.embedding_model.clone()),
            ("provider.mock_seed", p.mock_seed.to_string()),
            ("provider.mock_dim", p.mock_dim.to_string()),
            ("provider.mock_none_rate", p.mock_none_rate.to_string()),
            ("provider.direct_embedding", p.direct_embedding.to_string()),
            ("semantic.negatives", self.negatives_per_pair.to_string()),
            ("semantic.hybrid", self.hybrid.to_string()),
            ("semantic.instruction", self.hybrid_instruction.clone()),
            ("semantic.hidden", t.hidden.to_string()),
            ("loss.alpha", l.alpha.to_string()),
            ("loss.tau", l.tau.to_string()),
            ("loss.lambda1", l.lambda1.to_string()),
            ("loss.lambda2", l.lambda2.to_string()),
            ("loss.lambda_sft", l.lambda_sft.to_string()),
            ("trainer.lr", t.learning_rate.to_string()),
            ("trainer.batch", t.batch_size.to_string()),
            ("trainer.epochs", t.epochs.to_string()),
            ("trainer.seed", t.seed.to_string()),
            ("trainer.init_scale", t.init_scale.to_string()),
            ("trainer.workers", t.workers.to_string()),
            ("trainer.head_lr_scale", t.head_lr_scale.to_string()),
            ("eval.ks", join(&e.ks)),
            ("eval.strata", e.strata.to_string()),
            ("eval.fhns", e.fhns.to_string()),
            ("eval.sweep", join(&e.sweep)),
            ("eval.panel", e.panel_size.to_string()),
        ];
        pairs.sort();
        let mut out = String::new();
        for (k, v) in pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Short stable identifier of the training-relevant settings.
    pub fn run_id(&self) -> String {
        let canon: String = self
            .canonical()
            .lines()
            .filter(|l| !l.starts_with("eval.") && !l.starts_with("provider."))
            .collect::<Vec<_>>()
            .join("\n");
        let digest = crate::semantic::content_hash(canon.as_bytes());
        format!("run-{}", &digest[..12])
    }

    pub fn run_dir(&self) -> PathBuf {
        self.runs_dir.join(self.run_id())
    }
}

/// Fails with a message naming the path when it does not exist.
pub fn require_path(path: Option<&Path>, what: &str) -> Result<PathBuf> {
    let p = path.ok_or_else(|| Error::Config(format!("{what} is not configured")))?;
    if !p.exists() {
        return Err(Error::MissingFile(format!("{what}: {}", p.display())));
    }
    Ok(p.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_dotted_keys_and_comments() {
        let cfg = ExperimentConfig::parse_text(
            "# test\nsampler.kind = mixgcf\nloss.alpha=0.25\neval.ks = 5, 10\nbackbone.kind = mf\n",
        )
        .unwrap();
        assert_eq!(cfg.sampler.kind, SamplerKind::MixGcf);
        assert_eq!(cfg.sampler.pool, 32);
        assert_eq!(cfg.loss.alpha, 0.25);
        assert_eq!(cfg.eval.ks, vec![5, 10]);
        assert_eq!(cfg.train.backbone, BackboneKind::Mf);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ExperimentConfig::parse_text("nope.key = 1").is_err());
        assert!(ExperimentConfig::parse_text("loss.alpha = x").is_err());
        assert!(matches!(
            ExperimentConfig::parse_text("justtext"),
            Err(Error::Parse { line: 1, .. })
        ));
        let mut cfg = ExperimentConfig::default();
        cfg.set("loss.alpha", "2").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn overrides_and_run_id() {
        let mut a = ExperimentConfig::default();
        let b = a.clone();
        assert_eq!(a.run_id(), b.run_id());
        a.apply_overrides(["trainer.seed=3"]).unwrap();
        assert_ne!(a.run_id(), b.run_id());
        let mut c = b.clone();
        c.apply_overrides(["eval.ks=1"]).unwrap();
        assert_eq!(c.run_id(), b.run_id());
        let round = ExperimentConfig::parse_text(&a.canonical()).unwrap();
        assert_eq!(round.canonical(), a.canonical());
    }
}
