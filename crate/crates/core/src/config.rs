//! Run configuration: named presets, TOML files and dotted-key overrides.
//!
//! Resolution order is preset, then file, then overrides; the result is
//! validated once at the end.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Serialize, Deserialize, Clone, Copy, PartialEq, Eq, Debug)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    /// One ratio per token, sequence advantage broadcast.
    Token,
    /// One ratio per output, `exp(Σ current − Σ old)`.
    Sequence,
}

#[derive(Serialize, Deserialize, Clone, PartialEq, Debug)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Salt mixed with the run seed for this stage's random streams.
    pub seed: u64,
    pub group_size: usize,
    pub clip_epsilon: f64,
    pub kl_beta: f64,
    pub temperature: f64,
    pub max_output_len: usize,
    pub inner_iterations: usize,
    pub granularity: Granularity,
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs < 1 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.group_size < 2 {
            return bad(format!(
                "group_size must be at least 2, got {}",
                self.group_size
            ));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return bad(format!(
                "clip_epsilon must lie in (0, 1), got {}",
                self.clip_epsilon
            ));
        }
        if !(self.kl_beta >= 0.0 && self.kl_beta.is_finite()) {
            return bad(format!(
                "kl_beta must be non-negative, got {}",
                self.kl_beta
            ));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!(
                "temperature must be positive, got {}",
                self.temperature
            ));
        }
        if self.max_output_len < 1 || self.inner_iterations < 1 {
            return bad("max_output_len and inner_iterations must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize, Clone, Copy, PartialEq, Eq, Debug)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub context: usize,
    pub embed: usize,
    pub hidden: usize,
}

#[derive(Serialize, Deserialize, Clone, PartialEq, Eq, Debug)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub n_train: usize,
    /// Held-out problems; each is rendered in all five variants.
    pub n_heldout: usize,
    /// Problems reserved for the reinforcement stages, disjoint from both splits.
    pub n_rl: usize,
    /// Interpreter SFT scenes are drawn vision-only, except one in this many
    /// with only the question drawn in (0: never)...
    pub question_only_every: usize,
    /// ...and one in this many with no text at all (0: never).
    pub plain_every: usize,
    pub min_complexity: u32,
    pub max_complexity: u32,
}

#[derive(Serialize, Deserialize, Clone, PartialEq, Debug)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: String,
    pub seed: u64,
    pub data: DataConfig,
    pub interpreter: ModelConfig,
    pub reasoner: ModelConfig,
    pub sft_interpreter: TrainingConfig,
    pub sft_reasoner: TrainingConfig,
    pub stage2: TrainingConfig,
    pub stage3: TrainingConfig,
}

pub const PRESETS: [&str; 2] = ["toy", "paper"];

impl ExperimentConfig {
    /// Desk-scale settings for the tiny policies.
    pub fn toy() -> Self {
        let rl = |max_output_len| TrainingConfig {
            epochs: 2,
            batch_size: 16,
            learning_rate: 3e-4,
            seed: 0,
            group_size: 5,
            clip_epsilon: 0.2,
            kl_beta: 0.01,
            temperature: 1.0,
            max_output_len,
            inner_iterations: 1,
            granularity: Granularity::Token,
        };
        ExperimentConfig {
            preset: "toy".into(),
            seed: 0,
            data: DataConfig {
                n_train: 3000,
                n_heldout: 300,
                n_rl: 1500,
                question_only_every: 20,
                plain_every: 0,
                min_complexity: 1,
                max_complexity: 3,
            },
            interpreter: ModelConfig {
                context: 128,
                embed: 12,
                hidden: 128,
            },
            reasoner: ModelConfig {
                context: 64,
                embed: 16,
                hidden: 256,
            },
            sft_interpreter: TrainingConfig {
                epochs: 10,
                batch_size: 32,
                learning_rate: 3e-3,
                ..rl(96)
            },
            sft_reasoner: TrainingConfig {
                epochs: 20,
                batch_size: 32,
                learning_rate: 3e-3,
                ..rl(64)
            },
            stage2: rl(96),
            stage3: rl(64),
        }
    }

    /// The published hyperparameters; model sizes and data as in `toy`.
    pub fn paper() -> Self {
        let toy = Self::toy();
        let rl = |t: TrainingConfig| TrainingConfig {
            epochs: 5,
            batch_size: 64,
            learning_rate: 1e-6,
            ..t
        };
        let sft = |t: TrainingConfig| TrainingConfig {
            epochs: 1,
            batch_size: 128,
            learning_rate: 1e-4,
            ..t
        };
        ExperimentConfig {
            preset: "paper".into(),
            sft_interpreter: sft(toy.sft_interpreter.clone()),
            sft_reasoner: sft(toy.sft_reasoner.clone()),
            stage2: rl(toy.stage2.clone()),
            stage3: rl(toy.stage3.clone()),
            ..toy
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "toy" => Ok(Self::toy()),
            "paper" => Ok(Self::paper()),
            other => Err(Error::Config(format!(
                "unknown preset {other:?}; expected one of {PRESETS:?}"
            ))),
        }
    }

    /// Preset (explicit, else named in the file, else `toy`), then file, then
    /// `key.path=value` overrides.
    pub fn resolve(preset: Option<&str>, file: Option<&str>, overrides: &[String]) -> Result<Self> {
        let file_table = match file {
            Some(text) => text
                .parse::<toml::Table>()
                .map_err(|e| Error::Config(format!("config file: {e}")))?,
            None => toml::Table::new(),
        };
        let name = match (preset, file_table.get("preset")) {
            (Some(p), _) => p.to_string(),
            (None, Some(toml::Value::String(p))) => p.clone(),
            (None, Some(v)) => {
                return Err(Error::Config(format!("preset must be a string, got {v}")))
            }
            (None, None) => "toy".to_string(),
        };
        let base = Self::preset(&name)?;
        let mut table = toml::Table::try_from(&base).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut table, file_table);
        table.insert("preset".into(), toml::Value::String(name));
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, t) in [
            ("sft_interpreter", &self.sft_interpreter),
            ("sft_reasoner", &self.sft_reasoner),
            ("stage2", &self.stage2),
            ("stage3", &self.stage3),
        ] {
            t.validate()
                .map_err(|e| Error::Config(format!("[{name}] {e}")))?;
        }
        for (name, m) in [
            ("interpreter", self.interpreter),
            ("reasoner", self.reasoner),
        ] {
            if m.context == 0 || m.embed == 0 || m.hidden == 0 {
                return Err(Error::Config(format!(
                    "[{name}] dimensions must be positive"
                )));
            }
        }
        let d = &self.data;
        if d.n_train == 0 || d.n_heldout == 0 || d.n_rl == 0 {
            return Err(Error::Config("data sizes must be positive".into()));
        }
        if !(1 <= d.min_complexity && d.min_complexity <= d.max_complexity && d.max_complexity <= 3)
        {
            return Err(Error::Config(
                "complexities must satisfy 1 <= min <= max <= 3".into(),
            ));
        }
        Ok(())
    }

    /// Canonical TOML text; stored in checkpoints for provenance.
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn merge(into: &mut toml::Table, from: toml::Table) {
    for (k, v) in from {
        match (into.get_mut(&k), v) {
            (Some(toml::Value::Table(a)), toml::Value::Table(b)) => merge(a, b),
            (_, v) => {
                into.insert(k, v);
            }
        }
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not key=value")))?;
    let (key, raw) = (key.trim(), raw.trim());
    // Bare words such as `sequence` are taken as strings.
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts
        .pop()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::Config(format!("empty key in {spec:?}")))?;
    let mut cur = table;
    for p in parts {
        cur = match cur.get_mut(p) {
            Some(toml::Value::Table(t)) => t,
            _ => {
                return Err(Error::Config(format!(
                    "unknown section {p:?} in override {spec:?}"
                )))
            }
        };
    }
    if !cur.contains_key(last) {
        return Err(Error::Config(format!("unknown key {key:?}")));
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_preset_values() {
        let p = ExperimentConfig::paper();
        assert_eq!(
            (p.stage2.group_size, p.stage2.clip_epsilon, p.stage2.kl_beta),
            (5, 0.2, 0.01)
        );
        assert_eq!(
            (p.stage2.learning_rate, p.stage2.epochs, p.stage2.batch_size),
            (1e-6, 5, 64)
        );
        assert_eq!(
            (
                p.sft_reasoner.epochs,
                p.sft_reasoner.batch_size,
                p.sft_reasoner.learning_rate
            ),
            (1, 128, 1e-4)
        );
        let t = ExperimentConfig::toy();
        assert_eq!(
            (
                t.sft_interpreter.epochs,
                t.sft_interpreter.batch_size,
                t.sft_interpreter.learning_rate
            ),
            (10, 32, 3e-3)
        );
    }

    #[test]
    fn file_then_overrides() {
        let file = "preset = \"paper\"\nseed = 4\n[stage2]\nepochs = 3\n";
        let c = ExperimentConfig::resolve(
            None,
            Some(file),
            &["stage2.granularity=sequence".into(), "seed=9".into()],
        )
        .unwrap();
        assert_eq!(
            (c.preset.as_str(), c.seed, c.stage2.epochs),
            ("paper", 9, 3)
        );
        assert_eq!(c.stage2.granularity, Granularity::Sequence);
        assert_eq!(c.stage2.learning_rate, 1e-6);
        let c = ExperimentConfig::resolve(Some("toy"), Some(file), &[]).unwrap();
        assert_eq!((c.preset.as_str(), c.sft_interpreter.epochs), ("toy", 10));
    }

    #[test]
    fn round_trips_through_text() {
        let c = ExperimentConfig::toy();
        assert_eq!(
            ExperimentConfig::resolve(None, Some(&c.to_text()), &[]).unwrap(),
            c
        );
    }

    #[test]
    fn invalid_values_rejected() {
        let r = |o: &str| ExperimentConfig::resolve(None, None, &[o.to_string()]);
        assert!(r("stage2.group_size=1").is_err());
        assert!(r("stage2.clip_epsilon=1.0").is_err());
        assert!(r("stage3.kl_beta=-0.1").is_err());
        assert!(r("sft_reasoner.epochs=0").is_err());
        assert!(r("sft_interpreter.nonsense=3").is_err());
        assert!(r("nosection.epochs=3").is_err());
        assert!(r("stage2.granularity=diagonal").is_err());
        assert!(ExperimentConfig::resolve(Some("huge"), None, &[]).is_err());
        assert!(ExperimentConfig::resolve(None, Some("[[["), &[]).is_err());
    }
}
