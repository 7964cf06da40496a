use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::attacks::AttackKind;
use crate::evaluation::{FamilyFilter, SweepConfig};
use crate::scoring::{IdentifyConfig, SmaxMode, DEFAULT_ENUMERATION_CAP, DEFAULT_THRESHOLD};
use crate::synthbench::SynthConfig;
use crate::weights::{WeightConfig, WeightMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemaSection {
    pub num_categories: usize,
    pub num_concepts: usize,
    pub signature_size: usize,
    pub min_distance: usize,
}

impl Default for SchemaSection {
    fn default() -> Self {
        let s = SynthConfig::default();
        SchemaSection {
            num_categories: s.num_categories,
            num_concepts: s.num_concepts,
            signature_size: s.signature_size,
            min_distance: s.min_distance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub num_samples: usize,
    pub noise: f64,
    pub seed: u64,
    /// Directory holding `instances.jsonl` and `signatures.json` from a previous `gen`.
    pub path: Option<PathBuf>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection { num_samples: 1000, noise: 0.1, seed: 0, path: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RulesSection {
    /// Rule file; rules are derived from the signatures when unset.
    pub path: Option<PathBuf>,
    pub omission_rate: f64,
    pub seed: u64,
    pub max_arity: usize,
}

impl Default for RulesSection {
    fn default() -> Self {
        RulesSection { path: None, omission_rate: 0.0, seed: 0, max_arity: crate::rule_lang::DEFAULT_MAX_ARITY }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsSection {
    pub mode: WeightMode,
    pub learning_rate: f64,
    pub epochs: usize,
    pub initial: f64,
    pub w_min: f64,
    pub w_max: f64,
    /// Sidecar weights file; overrides `mode` when set.
    pub path: Option<PathBuf>,
}

impl Default for WeightsSection {
    fn default() -> Self {
        let w = WeightConfig::default();
        WeightsSection {
            mode: w.mode,
            learning_rate: w.learning_rate,
            epochs: w.epochs,
            initial: w.initial,
            w_min: w.w_min,
            w_max: w.w_max,
            path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    pub kind: AttackKind,
    pub budgets: Vec<usize>,
    pub gamma: f64,
    pub seed: u64,
    pub erase_targets: Option<Vec<usize>>,
    pub introduce_targets: Option<Vec<usize>>,
}

impl Default for AttackSection {
    fn default() -> Self {
        AttackSection {
            kind: AttackKind::Confounding,
            budgets: vec![1, 2, 3, 4],
            gamma: 0.5,
            seed: 0,
            erase_targets: None,
            introduce_targets: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentifySection {
    pub threshold: f64,
    pub mode: SmaxMode,
    pub cap: usize,
}

impl Default for IdentifySection {
    fn default() -> Self {
        IdentifySection { threshold: DEFAULT_THRESHOLD, mode: SmaxMode::default(), cap: DEFAULT_ENUMERATION_CAP }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepairSection {
    pub enabled: bool,
    pub max_passes: usize,
}

impl Default for RepairSection {
    fn default() -> Self {
        RepairSection { enabled: true, max_passes: crate::intervention::DEFAULT_MAX_PASSES }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub ratios: Vec<f64>,
    pub families: Vec<FamilyFilter>,
    pub repeats: usize,
    /// Allowed shortfall of measured accuracy below the factor-count bound.
    pub bound_slack: f64,
    /// Largest factor count in the bound table.
    pub bound_max_factors: usize,
    /// Optional file with explicit bound inputs (TOML).
    pub bound_inputs: Option<PathBuf>,
}

impl Default for EvalSection {
    fn default() -> Self {
        let s = SweepConfig::default();
        EvalSection {
            ratios: s.ratios,
            families: s.families,
            repeats: s.repeats,
            bound_slack: 0.02,
            bound_max_factors: 50,
            bound_inputs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub schema: SchemaSection,
    pub dataset: DatasetSection,
    pub rules: RulesSection,
    pub weights: WeightsSection,
    pub attack: AttackSection,
    pub identify: IdentifySection,
    pub repair: RepairSection,
    pub eval: EvalSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            output_dir: PathBuf::from("out"),
            schema: SchemaSection::default(),
            dataset: DatasetSection::default(),
            rules: RulesSection::default(),
            weights: WeightsSection::default(),
            attack: AttackSection::default(),
            identify: IdentifySection::default(),
            repair: RepairSection::default(),
            eval: EvalSection::default(),
        }
    }
}

fn config_err(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

/// Parses a `--partial` value: TOML literal when it parses as one, bare string otherwise.
fn parse_override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Sets `dotted.key = value` inside a TOML table, creating sections as needed.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), ExperimentError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| config_err(format!("override `{assignment}` is not of the form key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(config_err(format!("bad override key `{key}`")));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur.entry(part.to_string()).or_insert_with(|| toml::Value::Table(Default::default()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| config_err(format!("override key `{key}`: `{part}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_override_value(raw.trim()));
    Ok(())
}

impl ExperimentConfig {
    /// Parses TOML text, applies overrides in order, and validates.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, ExperimentError> {
        Self::from_toml_with_output(text, overrides, None)
    }

    /// As [`from_toml`](Self::from_toml), with `default_output` used when
    /// neither the text nor an override sets `output_dir`.
    pub fn from_toml_with_output(
        text: &str,
        overrides: &[String],
        default_output: Option<&std::path::Path>,
    ) -> Result<Self, ExperimentError> {
        let mut table: toml::Table = text.parse().map_err(|e| config_err(format!("config: {e}")))?;
        if let Some(dir) = default_output.filter(|_| !table.contains_key("output_dir")) {
            table.insert("output_dir".into(), toml::Value::String(dir.to_string_lossy().into_owned()));
        }
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: ExperimentConfig =
            toml::Value::Table(table).try_into().map_err(|e| config_err(format!("config: {e}")))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn synth(&self) -> SynthConfig {
        SynthConfig {
            num_categories: self.schema.num_categories,
            num_concepts: self.schema.num_concepts,
            signature_size: self.schema.signature_size,
            num_samples: self.dataset.num_samples,
            min_distance: self.schema.min_distance,
            noise: self.dataset.noise,
            seed: self.dataset.seed,
        }
    }

    pub fn identify_config(&self) -> IdentifyConfig {
        IdentifyConfig { threshold: self.identify.threshold, mode: self.identify.mode, cap: self.identify.cap }
    }

    pub fn weight_config(&self) -> WeightConfig {
        let w = &self.weights;
        WeightConfig {
            mode: w.mode,
            learning_rate: w.learning_rate,
            epochs: w.epochs,
            initial: w.initial,
            w_min: w.w_min,
            w_max: w.w_max,
            cap: self.identify.cap,
        }
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            ratios: self.eval.ratios.clone(),
            families: self.eval.families.clone(),
            repeats: self.eval.repeats,
        }
    }

    pub fn check(&self) -> Result<(), ExperimentError> {
        self.synth().check()?;
        if !(0.0..=1.0).contains(&self.identify.threshold) {
            return Err(config_err(format!("identify.threshold {} must be in [0, 1]", self.identify.threshold)));
        }
        if !(0.0..1.0).contains(&self.rules.omission_rate) {
            return Err(config_err(format!("rules.omission_rate {} must be in [0, 1)", self.rules.omission_rate)));
        }
        if self.attack.budgets.contains(&0) {
            return Err(config_err("attack budgets must be >= 1"));
        }
        if let Some(r) = self.eval.ratios.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return Err(config_err(format!("eval ratio {r} must be in (0, 1]")));
        }
        self.weight_config().check().map_err(|e| config_err(e.to_string()))?;
        for p in [&self.rules.path, &self.weights.path, &self.eval.bound_inputs].into_iter().flatten() {
            if !p.exists() {
                return Err(config_err(format!("file {} does not exist", p.display())));
            }
        }
        if let Some(p) = &self.dataset.path {
            if !p.join(super::io::INSTANCES_FILE).exists() {
                return Err(config_err(format!("dataset directory {} has no instances file", p.display())));
            }
        }
        Ok(())
    }
}
