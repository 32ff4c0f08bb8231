use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use xlsearch_core::eval::EvalOptions;
use xlsearch_core::sss::RunnerConfig;
use xlsearch_core::trainer::TrainConfig;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturizerConfig {
    pub dim: usize,
    pub seed: u64,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig { dim: 256, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SssSettings {
    pub corpus_size: usize,
}

impl Default for SssSettings {
    fn default() -> Self {
        SssSettings { corpus_size: 100 }
    }
}

/// Everything a run needs, from the config file with flags applied on top.
///
/// `seed` drives the split, the tuples, the SSS input corpora and training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub source_lang: String,
    pub target_lang: String,
    pub dataset: Option<PathBuf>,
    /// Base embedding table; the built-in featurizer when absent.
    pub embeddings: Option<PathBuf>,
    /// Explicit split manifest; otherwise `split_ratios`.
    pub splits: Option<PathBuf>,
    pub split_ratios: [f64; 3],
    pub featurizer: FeaturizerConfig,
    pub train: TrainConfig,
    pub sss: SssSettings,
    pub eval: EvalOptions,
    pub runner: RunnerConfig,
    /// Worker cap; 0 uses every core.
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            source_lang: "toy".into(),
            target_lang: "toyb".into(),
            dataset: None,
            embeddings: None,
            splits: None,
            split_ratios: [0.7, 0.1, 0.2],
            featurizer: FeaturizerConfig::default(),
            train: TrainConfig::default(),
            sss: SssSettings::default(),
            eval: EvalOptions::default(),
            runner: RunnerConfig::default(),
            jobs: 0,
        }
    }
}

impl RunConfig {
    /// Parse a TOML config. Relative paths resolve against the file's directory.
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| xlsearch_core::Error::io(path, e))?;
        let mut config: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(vec![format!("{}: {}", path.display(), e.message())]))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.dataset, &mut config.embeddings, &mut config.splits].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    /// The config with the top-level seed pushed into training.
    pub fn resolved(mut self) -> Self {
        self.train.seed = self.seed;
        self
    }

    /// Every problem with the config and the given required inputs.
    pub fn problems(&self, inputs: &[(&str, Option<&Path>)]) -> Vec<String> {
        let mut out = self.train.problems();
        out.extend(self.runner.problems());
        if self.source_lang.is_empty() || self.target_lang.is_empty() {
            out.push("source_lang and target_lang must be set".into());
        }
        let sum: f64 = self.split_ratios.iter().sum();
        if self.split_ratios.iter().any(|r| !r.is_finite() || *r < 0.0) || (sum - 1.0).abs() > 1e-9 {
            out.push(format!("split_ratios {:?} must be non-negative and sum to 1", self.split_ratios));
        }
        if self.featurizer.dim == 0 {
            out.push("featurizer.dim must be at least 1".into());
        }
        if self.sss.corpus_size == 0 {
            out.push("sss.corpus_size must be at least 1".into());
        }
        if self.eval.n_max == 0 {
            out.push("eval.n_max must be at least 1".into());
        }
        for (name, path) in inputs {
            match path {
                None => out.push(format!("{name} is required")),
                Some(p) if !p.exists() => out.push(format!("{name} {} does not exist", p.display())),
                Some(_) => {}
            }
        }
        for (name, path) in [("embeddings", &self.embeddings), ("splits", &self.splits)] {
            if let Some(p) = path {
                if !p.is_file() {
                    out.push(format!("{name} {} does not exist", p.display()));
                }
            }
        }
        out
    }

    pub fn validate(&self, inputs: &[(&str, Option<&Path>)]) -> Result<(), CliError> {
        let problems = self.problems(inputs);
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(problems))
        }
    }

    /// Settings that determine results, without paths, as recorded in reports.
    pub fn recorded(&self) -> serde_json::Value {
        serde_json::json!({
            "seed": self.seed,
            "source_lang": self.source_lang,
            "target_lang": self.target_lang,
            "split_ratios": self.split_ratios,
            "featurizer": self.featurizer,
            "train": self.train,
            "sss": self.sss,
            "eval": self.eval,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_problems_are_reported_together() {
        let mut c = RunConfig::default();
        c.train.alpha = 1.5;
        c.train.momentum = 1.0;
        c.split_ratios = [0.5, 0.5, 0.5];
        let p = c.problems(&[("dataset", None)]);
        assert_eq!(p.len(), 4, "{p:?}");
        assert!(p[0].contains("train.alpha") && p[0].contains("[0, 1]"));
    }

    #[test]
    fn toml_round_trip_and_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 4\ndataset = \"data\"\n[train]\nalpha = 0.5\n[runner.toy]\ncommand_template = \"builtin:toy\"\n").unwrap();
        let c = RunConfig::read(&path).unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.train.alpha, 0.5);
        assert_eq!(c.dataset.unwrap(), dir.path().join("data"));
        assert_eq!(c.runner.languages.len(), 1);

        std::fs::write(&path, "[train]\nalpah = 0.5\n").unwrap();
        let err = RunConfig::read(&path).unwrap_err();
        assert_eq!(err.kind(), "config");
        assert!(err.to_string().contains("alpah"));
    }
}
