use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bptt::HeadKind;
use crate::cells::Arch;
use crate::error::{Error, Result};
use crate::numerics::Activation;
use crate::optim::{InitPlan, InitScheme, OptimConfig};
use crate::tasks::AddingSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskConfig {
    Adding {
        sequence_length: usize,
        train_size: usize,
        test_size: usize,
    },
    /// Digit images read pixel by pixel. The first `train_size` images train,
    /// the last `test_size` test.
    Pixel {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default = "one")]
        downsample: usize,
        #[serde(default)]
        permuted: bool,
        #[serde(default)]
        permutation_seed: Option<u64>,
        train_size: usize,
        test_size: usize,
    },
}

fn one() -> usize {
    1
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: Arch,
    pub layers: usize,
    pub hidden: usize,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default)]
    pub transform_activation: Option<Activation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub max_epochs: usize,
    #[serde(default)]
    pub clip: Option<f64>,
    #[serde(default = "one")]
    pub eval_every: usize,
    #[serde(default)]
    pub patience: Option<usize>,
    #[serde(default = "default_eval_batch")]
    pub eval_batch_size: usize,
}

fn default_eval_batch() -> usize {
    500
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    /// Dataset generation.
    pub data: u64,
    /// Initialization and per-epoch shuffling.
    pub model: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    #[serde(default = "yes")]
    pub checkpoint: bool,
}

fn yes() -> bool {
    true
}

/// A full experiment description, read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskConfig,
    pub model: ModelConfig,
    /// Init overrides keyed by in-layer block name (`W`, `U`, `W_f`, ...) or
    /// `head.W` / `head.b`, in [`InitScheme::parse`] syntax.
    #[serde(default)]
    pub init: BTreeMap<String, String>,
    pub optim: OptimConfig,
    pub train: TrainConfig,
    pub seeds: Seeds,
    pub output: OutputConfig,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl ExperimentConfig {
    /// Parses and validates; `origin` labels diagnostics.
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            line: e.span().map_or(1, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)?;
        let cfg = Self::from_toml(&text, &path.display().to_string())?;
        Ok((cfg, text))
    }

    pub fn validate(&self) -> Result<()> {
        match &self.task {
            TaskConfig::Adding { .. } => {
                self.adding_spec().expect("adding task").validate()?;
            }
            TaskConfig::Pixel {
                downsample,
                permuted,
                permutation_seed,
                train_size,
                test_size,
                ..
            } => {
                if *downsample == 0 {
                    return Err(Error::Config("downsample factor must be positive".into()));
                }
                if *permuted && permutation_seed.is_none() {
                    return Err(Error::Config("a permuted pixel task needs permutation_seed".into()));
                }
                if !*permuted && permutation_seed.is_some() {
                    return Err(Error::Config("permutation_seed given but permuted = false".into()));
                }
                if *train_size == 0 || *test_size == 0 {
                    return Err(Error::Config("pixel split sizes must be positive".into()));
                }
            }
        }
        if self.model.layers == 0 || self.model.hidden == 0 {
            return Err(Error::Config("model needs at least one layer and one hidden unit".into()));
        }
        self.optim.validate()?;
        let t = &self.train;
        if t.eval_every == 0 || t.eval_batch_size == 0 {
            return Err(Error::Config("eval_every and eval_batch_size must be positive".into()));
        }
        if let Some(c) = t.clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("clip threshold must be positive, got {c}")));
            }
        }
        if t.patience == Some(0) {
            return Err(Error::Config("patience must be positive when given".into()));
        }
        self.init_plan()?;
        Ok(())
    }

    pub fn adding_spec(&self) -> Option<AddingSpec> {
        match self.task {
            TaskConfig::Adding {
                sequence_length,
                train_size,
                test_size,
            } => Some(AddingSpec {
                sequence_length,
                train_size,
                test_size,
                seed: self.seeds.data,
            }),
            TaskConfig::Pixel { .. } => None,
        }
    }

    pub fn head(&self) -> HeadKind {
        match self.task {
            TaskConfig::Adding { .. } => HeadKind::Regression,
            TaskConfig::Pixel { .. } => HeadKind::Classification { classes: 10 },
        }
    }

    pub fn init_plan(&self) -> Result<InitPlan> {
        let overrides = self
            .init
            .iter()
            .map(|(k, v)| Ok((k.clone(), InitScheme::parse(v)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let plan = InitPlan::with_overrides(self.model.arch, &overrides);
        let known = InitPlan::defaults(self.model.arch);
        if let Some(k) = overrides.keys().find(|k| !known.0.contains_key(*k)) {
            return Err(Error::Config(format!(
                "init key {k:?} names no {} block",
                self.model.arch
            )));
        }
        Ok(plan)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ADDING: &str = r#"
[task]
kind = "adding"
sequence_length = 10
train_size = 64
test_size = 32

[model]
arch = "rin"
layers = 1
hidden = 8

[optim]
algorithm = "adam"
learning_rate = 1e-3
batch_size = 16

[train]
max_epochs = 2
clip = 100.0

[seeds]
data = 1
model = 2

[output]
dir = "out"
"#;

    #[test]
    fn parses_a_minimal_config() {
        let cfg = ExperimentConfig::from_toml(ADDING, "a.toml").unwrap();
        assert_eq!(cfg.model.arch, Arch::Rin);
        assert_eq!(cfg.train.eval_every, 1);
        assert_eq!(cfg.optim.beta2, 0.999);
        assert_eq!(cfg.model.precision, Precision::F64);
        assert_eq!(cfg.adding_spec().unwrap().seed, 1);
        assert!(cfg.output.checkpoint);
    }

    #[test]
    fn syntax_errors_carry_the_line() {
        let broken = ADDING.replace("hidden = 8", "hidden = = 8");
        match ExperimentConfig::from_toml(&broken, "a.toml") {
            Err(Error::Parse { path, line, .. }) => {
                assert_eq!(path, "a.toml");
                assert_eq!(line, 11);
            }
            other => panic!("{other:?}"),
        }
        let unknown = ADDING.replace("layers = 1", "layers = 1\ndepth = 3");
        assert!(matches!(
            ExperimentConfig::from_toml(&unknown, "a.toml"),
            Err(Error::Parse { line: 11..=13, .. })
        ));
    }

    #[test]
    fn semantic_errors_are_config_errors() {
        for (from, to) in [
            ("sequence_length = 10", "sequence_length = 1"),
            ("learning_rate = 1e-3", "learning_rate = -1.0"),
            ("clip = 100.0", "clip = 0.0"),
            ("hidden = 8", "hidden = 0"),
        ] {
            let text = ADDING.replace(from, to);
            assert!(
                matches!(ExperimentConfig::from_toml(&text, "a"), Err(Error::Config(_))),
                "{to}"
            );
        }
        let bad_init = ADDING.replace("[optim]", "[init]\nW_f = \"zeros\"\n\n[optim]");
        assert!(matches!(ExperimentConfig::from_toml(&bad_init, "a"), Err(Error::Config(_))));
        let good_init = ADDING.replace("[optim]", "[init]\nU = \"gaussian_small:0.01\"\n\n[optim]");
        let plan = ExperimentConfig::from_toml(&good_init, "a").unwrap().init_plan().unwrap();
        assert_eq!(plan.0["U"], InitScheme::GaussianSmall { std: 0.01 });
    }

    #[test]
    fn pixel_task_section() {
        let text = ADDING.replace(
            "kind = \"adding\"\nsequence_length = 10",
            "kind = \"pixel\"\nimages = \"i.gz\"\nlabels = \"l.gz\"\ndownsample = 2\npermuted = true\npermutation_seed = 3",
        );
        let cfg = ExperimentConfig::from_toml(&text, "p").unwrap();
        assert_eq!(cfg.head(), HeadKind::Classification { classes: 10 });
        let no_seed = text.replace("permutation_seed = 3", "");
        assert!(matches!(ExperimentConfig::from_toml(&no_seed, "p"), Err(Error::Config(_))));
    }
}
