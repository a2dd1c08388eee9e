//! Run configuration: a JSON file plus command-line overrides, merged so
//! that flags always win. Secrets never live in the file — each tier
//! names an environment variable and the key is read from there at
//! launch.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result, bail};
use cascade_core::ledger::PriceTable;
use cascade_core::pipeline::{DEFAULT_PARALLELISM, JUDGE_TEMPERATURE};
use cascade_core::provider::CacheMode;
use cascade_core::types::JudgeStrategy;
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

/// Verification strategy as written in config files and on the command
/// line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyArg {
    /// One holistic pass/fail judgment per draft.
    Immediate,
    /// Label the draft's reasoning steps one by one.
    Step,
}

impl From<StrategyArg> for JudgeStrategy {
    fn from(arg: StrategyArg) -> Self {
        match arg {
            StrategyArg::Immediate => JudgeStrategy::Immediate,
            StrategyArg::Step => JudgeStrategy::StepByStep,
        }
    }
}

/// Cache participation as written in config files and on the command
/// line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CacheModeArg {
    /// Ignore the cache entirely.
    Bypass,
    /// Serve from the cache only; a miss fails the question (replay).
    Readonly,
    /// Serve hits, record misses.
    Readwrite,
}

impl From<CacheModeArg> for CacheMode {
    fn from(arg: CacheModeArg) -> Self {
        match arg {
            CacheModeArg::Bypass => CacheMode::Bypass,
            CacheModeArg::Readonly => CacheMode::ReadOnly,
            CacheModeArg::Readwrite => CacheMode::ReadWrite,
        }
    }
}

/// One model tier (drafter or verifier/escalator) in the config file.
///
/// `api_key_env` names an environment variable holding the bearer token;
/// the token itself must never appear in the file. A tier with no
/// `base_url` has no live endpoint and can only serve replay runs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TierConfig {
    pub base_url: Option<String>,
    pub model_id: Option<String>,
    pub api_key_env: Option<String>,
    pub temperature: Option<f64>,
    pub max_output_tokens: Option<u32>,
    pub reasoning_enabled: Option<bool>,
    pub timeout_secs: Option<u64>,
    pub max_in_flight: Option<usize>,
}

/// Response-cache section of the config file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheConfig {
    pub path: Option<PathBuf>,
    pub mode: Option<CacheModeArg>,
}

/// The config file as written on disk. Every field is optional; [`resolve`]
/// applies defaults and rejects contradictions.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Question dataset: JSONL, one object per line.
    pub dataset: Option<PathBuf>,
    pub strategy: Option<StrategyArg>,
    /// Carry verified steps into the escalation prompt (step strategy
    /// only).
    pub augment_escalation: Option<bool>,
    pub judge_temperature: Option<f64>,
    pub parallelism: Option<usize>,
    /// Names the default output directory `runs/<label>`; the reported
    /// row label is always the final directory name.
    pub label: Option<String>,
    pub output_dir: Option<PathBuf>,
    /// Price table JSON (`{"model id": {"input_per_million": "0",
    /// "output_per_million": "10"}}`); built-in prices when omitted.
    pub prices: Option<PathBuf>,
    pub cache: CacheConfig,
    pub small: TierConfig,
    pub large: TierConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        serde_json::from_str(&text)
            .with_context(|| format!("parsing config file {}", path.display()))
    }
}

/// Command-line overrides for `run`; every field defaults to "keep the
/// config file's value".
#[derive(Debug, Clone, Default, clap::Args)]
pub struct RunOverrides {
    /// Question dataset (JSONL).
    #[arg(long, value_name = "FILE")]
    pub dataset: Option<PathBuf>,
    /// Verification strategy.
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    /// Carry verified steps into escalation prompts (step strategy).
    #[arg(long, value_name = "BOOL")]
    pub augment_escalation: Option<bool>,
    /// Sampling temperature for judgment calls.
    #[arg(long, value_name = "T")]
    pub judge_temperature: Option<f64>,
    /// Questions in flight at once.
    #[arg(long, value_name = "N")]
    pub parallelism: Option<usize>,
    /// Run label (also names the default output directory).
    #[arg(long)]
    pub label: Option<String>,
    /// Price table JSON.
    #[arg(long, value_name = "FILE")]
    pub prices: Option<PathBuf>,
    /// Response cache file.
    #[arg(long, value_name = "FILE")]
    pub cache_path: Option<PathBuf>,
    /// How the cache participates in the run.
    #[arg(long, value_enum)]
    pub cache_mode: Option<CacheModeArg>,
    /// Drafter endpoint base URL.
    #[arg(long, value_name = "URL")]
    pub small_base_url: Option<String>,
    /// Drafter model id.
    #[arg(long, value_name = "ID")]
    pub small_model: Option<String>,
    /// Verifier/escalator endpoint base URL.
    #[arg(long, value_name = "URL")]
    pub large_base_url: Option<String>,
    /// Verifier/escalator model id.
    #[arg(long, value_name = "ID")]
    pub large_model: Option<String>,
}

/// A tier after defaulting and secret resolution.
#[derive(Debug, Clone)]
pub struct ResolvedTier {
    pub base_url: Option<String>,
    pub model_id: String,
    /// Bearer token read from the environment variable the config named.
    pub api_key: Option<String>,
    pub temperature: Option<f64>,
    pub max_output_tokens: Option<u32>,
    pub reasoning_enabled: Option<bool>,
    pub timeout_secs: Option<u64>,
    pub max_in_flight: Option<usize>,
}

/// Everything `run` needs, fully defaulted and validated.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub dataset: PathBuf,
    pub strategy: JudgeStrategy,
    pub augment_escalation: bool,
    pub judge_temperature: f64,
    pub parallelism: usize,
    pub output_dir: PathBuf,
    pub prices: PriceTable,
    pub cache_path: Option<PathBuf>,
    pub cache_mode: CacheMode,
    pub small: ResolvedTier,
    pub large: ResolvedTier,
}

pub const DEFAULT_SMALL_MODEL: &str = "qwen2.5-3b-instruct";
pub const DEFAULT_LARGE_MODEL: &str = "gemini-2.5-pro";

fn resolve_tier(
    tier: &TierConfig,
    name: &str,
    base_url_override: Option<&String>,
    model_override: Option<&String>,
    default_model: &str,
) -> Result<ResolvedTier> {
    let base_url = base_url_override.or(tier.base_url.as_ref()).cloned();
    let api_key = match (&base_url, &tier.api_key_env) {
        // Key lookup is lazy on purpose: a replay-only tier needs no
        // secret even if the config names one.
        (Some(_), Some(var)) => Some(std::env::var(var).map_err(|_| {
            anyhow::anyhow!(
                "environment variable {var} (named by {name}.api_key_env) is not set"
            )
        })?),
        _ => None,
    };
    Ok(ResolvedTier {
        base_url,
        model_id: model_override
            .or(tier.model_id.as_ref())
            .map_or_else(|| default_model.to_string(), Clone::clone),
        api_key,
        temperature: tier.temperature,
        max_output_tokens: tier.max_output_tokens,
        reasoning_enabled: tier.reasoning_enabled,
        timeout_secs: tier.timeout_secs,
        max_in_flight: tier.max_in_flight,
    })
}

/// Merges config file and flags (flags win), fills defaults, reads
/// secrets from the environment, and rejects unusable combinations.
pub fn resolve(
    config: &RunConfig,
    flags: &RunOverrides,
    output_dir_flag: Option<&Path>,
) -> Result<ResolvedRun> {
    let Some(dataset) = flags.dataset.as_ref().or(config.dataset.as_ref()).cloned() else {
        bail!("no dataset given: pass --dataset or set \"dataset\" in the config file");
    };

    let cache_path = flags.cache_path.as_ref().or(config.cache.path.as_ref()).cloned();
    let cache_mode = flags
        .cache_mode
        .or(config.cache.mode)
        .map(CacheMode::from)
        // A configured path without a mode means "record": the least
        // surprising reading of pointing a run at a cache file.
        .unwrap_or(if cache_path.is_some() { CacheMode::ReadWrite } else { CacheMode::Bypass });
    if cache_path.is_none() && cache_mode != CacheMode::Bypass {
        bail!("cache mode {cache_mode:?} needs a cache file: pass --cache-path or set cache.path");
    }

    let small = resolve_tier(
        &config.small,
        "small",
        flags.small_base_url.as_ref(),
        flags.small_model.as_ref(),
        DEFAULT_SMALL_MODEL,
    )?;
    let large = resolve_tier(
        &config.large,
        "large",
        flags.large_base_url.as_ref(),
        flags.large_model.as_ref(),
        DEFAULT_LARGE_MODEL,
    )?;
    // Tiers without endpoints can still serve a pure replay run, where
    // every completion comes out of the cache.
    let replay_only = cache_mode == CacheMode::ReadOnly;
    for (tier, name) in [(&small, "small"), (&large, "large")] {
        if tier.base_url.is_none() && !replay_only {
            bail!(
                "{name} tier has no endpoint: set {name}.base_url (or --{name}-base-url), \
                 or run with --cache-mode readonly over a populated cache"
            );
        }
    }

    let prices = match flags.prices.as_ref().or(config.prices.as_ref()) {
        Some(path) => PriceTable::load(path)
            .with_context(|| format!("loading price table {}", path.display()))?,
        None => PriceTable::builtin_default(),
    };

    let label = flags
        .label
        .as_ref()
        .or(config.label.as_ref())
        .cloned()
        .or_else(|| {
            dataset.file_stem().map(|stem| stem.to_string_lossy().into_owned())
        })
        .unwrap_or_else(|| "run".to_string());
    let output_dir = output_dir_flag
        .map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(&label));

    Ok(ResolvedRun {
        dataset,
        strategy: flags.strategy.or(config.strategy).map_or(JudgeStrategy::Immediate, Into::into),
        augment_escalation: flags
            .augment_escalation
            .or(config.augment_escalation)
            .unwrap_or(true),
        judge_temperature: flags
            .judge_temperature
            .or(config.judge_temperature)
            .unwrap_or(JUDGE_TEMPERATURE),
        parallelism: flags
            .parallelism
            .or(config.parallelism)
            .unwrap_or(DEFAULT_PARALLELISM),
        output_dir,
        prices,
        cache_path,
        cache_mode,
        small,
        large,
    })
}

/// Label for a run directory: its final path component.
pub fn dir_label(path: &Path) -> String {
    path.file_name().map_or_else(|| "run".to_string(), |name| name.to_string_lossy().into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_config() -> RunConfig {
        serde_json::from_str(
            r#"{
                "dataset": "questions.jsonl",
                "small": {"base_url": "http://localhost:8001/v1"},
                "large": {"base_url": "http://localhost:8002/v1"}
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn defaults_fill_in() {
        let resolved = resolve(&minimal_config(), &RunOverrides::default(), None).unwrap();
        assert_eq!(resolved.strategy, JudgeStrategy::Immediate);
        assert!(resolved.augment_escalation);
        assert_eq!(resolved.judge_temperature, 0.0);
        assert_eq!(resolved.parallelism, DEFAULT_PARALLELISM);
        assert_eq!(resolved.small.model_id, DEFAULT_SMALL_MODEL);
        assert_eq!(resolved.large.model_id, DEFAULT_LARGE_MODEL);
        assert_eq!(resolved.cache_mode, CacheMode::Bypass);
        assert_eq!(resolved.output_dir, PathBuf::from("runs/questions"));
    }

    #[test]
    fn flags_override_config() {
        let mut config = minimal_config();
        config.strategy = Some(StrategyArg::Immediate);
        config.parallelism = Some(4);
        let flags = RunOverrides {
            strategy: Some(StrategyArg::Step),
            parallelism: Some(2),
            small_model: Some("other-model".into()),
            ..RunOverrides::default()
        };
        let resolved = resolve(&config, &flags, Some(Path::new("out/here"))).unwrap();
        assert_eq!(resolved.strategy, JudgeStrategy::StepByStep);
        assert_eq!(resolved.parallelism, 2);
        assert_eq!(resolved.small.model_id, "other-model");
        assert_eq!(resolved.output_dir, PathBuf::from("out/here"));
    }

    #[test]
    fn missing_dataset_is_an_error() {
        let config = RunConfig::default();
        let err = resolve(&config, &RunOverrides::default(), None).unwrap_err();
        assert!(err.to_string().contains("dataset"), "got: {err}");
    }

    #[test]
    fn missing_endpoint_is_an_error_outside_replay() {
        let mut config = minimal_config();
        config.large.base_url = None;
        let err = resolve(&config, &RunOverrides::default(), None).unwrap_err();
        assert!(err.to_string().contains("large tier has no endpoint"), "got: {err}");
    }

    #[test]
    fn readonly_cache_permits_endpointless_tiers() {
        let config: RunConfig = serde_json::from_str(
            r#"{
                "dataset": "questions.jsonl",
                "cache": {"path": "responses.jsonl", "mode": "readonly"}
            }"#,
        )
        .unwrap();
        let resolved = resolve(&config, &RunOverrides::default(), None).unwrap();
        assert_eq!(resolved.cache_mode, CacheMode::ReadOnly);
        assert!(resolved.small.base_url.is_none());
    }

    #[test]
    fn cache_path_alone_defaults_to_recording() {
        let mut config = minimal_config();
        config.cache.path = Some(PathBuf::from("responses.jsonl"));
        let resolved = resolve(&config, &RunOverrides::default(), None).unwrap();
        assert_eq!(resolved.cache_mode, CacheMode::ReadWrite);
    }

    #[test]
    fn cache_mode_without_path_is_an_error() {
        let flags = RunOverrides {
            cache_mode: Some(CacheModeArg::Readonly),
            ..RunOverrides::default()
        };
        let err = resolve(&minimal_config(), &flags, None).unwrap_err();
        assert!(err.to_string().contains("cache"), "got: {err}");
    }

    #[test]
    fn secret_comes_from_environment_not_config() {
        // SAFETY: test-local variable name nothing else reads.
        unsafe { std::env::set_var("CASCADE_CONFIG_TEST_KEY", "sk-from-env") };
        let mut config = minimal_config();
        config.small.api_key_env = Some("CASCADE_CONFIG_TEST_KEY".into());
        let resolved = resolve(&config, &RunOverrides::default(), None).unwrap();
        assert_eq!(resolved.small.api_key.as_deref(), Some("sk-from-env"));
        unsafe { std::env::remove_var("CASCADE_CONFIG_TEST_KEY") };
    }

    #[test]
    fn missing_secret_variable_is_an_error() {
        let mut config = minimal_config();
        config.small.api_key_env = Some("CASCADE_CONFIG_TEST_UNSET".into());
        let err = resolve(&config, &RunOverrides::default(), None).unwrap_err();
        assert!(err.to_string().contains("CASCADE_CONFIG_TEST_UNSET"), "got: {err}");
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"datsaet": "typo.jsonl"}"#).unwrap_err();
        assert!(err.to_string().contains("datsaet"));
    }

    #[test]
    fn api_keys_never_serialize_into_configs() {
        // The config schema holds variable names, not secrets: round-trip a
        // config with a key env set and confirm no key material appears.
        let mut config = minimal_config();
        config.small.api_key_env = Some("SOME_VAR".into());
        let text = serde_json::to_string(&config).unwrap();
        assert!(text.contains("api_key_env"));
        assert!(!text.contains("sk-"));
    }
}
