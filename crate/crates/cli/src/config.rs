//! Experiment configuration: a TOML file overlaid with command-line flags.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Deserializer};
use ujmmd::data::{generate_synthetic, load_domain, DomainPair, SyntheticSpec};
use ujmmd::kernels::KernelSpec;
use ujmmd::pipeline::{HyperParams, MethodSpec, Normalization, Preset};

use crate::error::{CliError, CliResult};

/// Repeat count of the label-shift protocol when none is configured.
pub const DEFAULT_SHIFT_REPEATS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HyperSet {
    Small,
    Large,
}

impl HyperSet {
    fn params(self) -> HyperParams {
        match self {
            HyperSet::Small => HyperParams::SMALL,
            HyperSet::Large => HyperParams::LARGE,
        }
    }
}

/// Flags shared by `run`, `shift` and `ablate`. Each one overrides the
/// same-named config key.
#[derive(Debug, Clone, Default, Args)]
pub struct ExperimentArgs {
    /// TOML experiment file; without it a built-in synthetic pair is used.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Comma-separated preset names, e.g. `KNN-baseline,WC,WC*`.
    #[arg(long, value_name = "NAME[,NAME...]", value_delimiter = ',')]
    pub preset: Vec<Preset>,
    /// First seed; runs use `seed .. seed + repeats`.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    #[arg(long, value_name = "N")]
    pub repeats: Option<usize>,
    /// Also write results here (format from `--format`, else the extension).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long, value_enum)]
    pub hyperparams: Option<HyperSet>,
    #[arg(long, value_name = "X")]
    pub delta: Option<f64>,
    #[arg(long, value_name = "X")]
    pub lambda: Option<f64>,
    #[arg(long, value_name = "D")]
    pub dim: Option<usize>,
    #[arg(long, value_name = "T")]
    pub iters: Option<usize>,
    /// `linear`, `rbf`, `rbf:<sigma>`, `poly` or `poly:<degree>:<offset>`.
    #[arg(long, value_name = "SPEC")]
    pub kernel: Option<KernelSpec>,
    /// Absolute ridge on the constraint matrix.
    #[arg(long, value_name = "X")]
    pub ridge: Option<f64>,
    /// Feature preprocessing: `none`, `unit` or `zscore`.
    #[arg(long, value_name = "MODE")]
    pub normalization: Option<Normalization>,
    #[arg(long, value_name = "K")]
    pub knn_k: Option<usize>,
}

/// Wraps a `FromStr` type so that TOML errors carry the value's position.
#[derive(Debug, Clone, Copy)]
struct Parsed<T>(T);

impl<'de, T> Deserialize<'de> for Parsed<T>
where
    T: FromStr,
    T::Err: fmt::Display,
{
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map(Parsed).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    experiment: ExperimentSection,
    #[serde(default)]
    method: MethodSection,
    synthetic: Option<SyntheticSection>,
    #[serde(default)]
    task: Vec<TaskSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentSection {
    presets: Option<Vec<Parsed<Preset>>>,
    seed: Option<u64>,
    seeds: Option<Vec<u64>>,
    repeats: Option<usize>,
    out: Option<PathBuf>,
    format: Option<Format>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MethodSection {
    hyperparams: Option<HyperSet>,
    lambda: Option<f64>,
    dim: Option<usize>,
    iters: Option<usize>,
    delta: Option<f64>,
    kernel: Option<Parsed<KernelSpec>>,
    ridge: Option<f64>,
    knn_k: Option<usize>,
    normalization: Option<Parsed<Normalization>>,
    normalize_mmd: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum PerClass {
    Same(usize),
    Each(Vec<usize>),
}

impl PerClass {
    fn expand(&self, classes: usize, what: &str) -> CliResult<Vec<usize>> {
        match self {
            PerClass::Same(n) => Ok(vec![*n; classes]),
            PerClass::Each(v) if v.len() == classes => Ok(v.clone()),
            PerClass::Each(v) => Err(CliError::Usage(format!(
                "{what} lists {} counts for {classes} classes",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SyntheticSection {
    classes: usize,
    per_class_source: PerClass,
    per_class_target: PerClass,
    dim: usize,
    class_separation: f64,
    domain_shift: f64,
    /// Fixes the drawn pair; otherwise each run seed draws its own pair.
    seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskSection {
    name: String,
    source: PathBuf,
    source_labels: PathBuf,
    target: PathBuf,
    target_labels: Option<PathBuf>,
    classes: usize,
}

/// Where domain pairs come from.
#[derive(Debug, Clone)]
pub enum DataSource {
    Synthetic(SyntheticTemplate),
    Tasks(Vec<Task>),
}

#[derive(Debug, Clone)]
pub struct SyntheticTemplate {
    spec: SyntheticSpec,
    fixed_seed: Option<u64>,
}

impl SyntheticTemplate {
    /// The pair used for a run with `seed`.
    pub fn pair(&self, seed: u64) -> CliResult<DomainPair> {
        let spec = SyntheticSpec {
            seed: self.fixed_seed.unwrap_or(seed),
            ..self.spec.clone()
        };
        Ok(generate_synthetic(&spec)?)
    }
}

/// A file-backed task with paths already resolved.
#[derive(Debug, Clone)]
pub struct Task {
    pub name: String,
    source: PathBuf,
    source_labels: PathBuf,
    target: PathBuf,
    target_labels: Option<PathBuf>,
    classes: usize,
}

impl Task {
    pub fn load(&self) -> CliResult<DomainPair> {
        let (xs, ys) = load_domain(&self.source, Some(&self.source_labels), self.classes)?;
        let (xt, yt) = load_domain(&self.target, self.target_labels.as_deref(), self.classes)?;
        Ok(DomainPair::new(xs, ys.expect("labels path given"), xt, yt)?)
    }
}

/// Fully resolved experiment.
#[derive(Debug, Clone)]
pub struct Settings {
    pub presets: Vec<Preset>,
    /// Explicit seed list, if configured and not overridden by flags.
    seeds: Option<Vec<u64>>,
    base_seed: u64,
    repeats: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    hyper: HyperParams,
    kernel: KernelSpec,
    ridge: Option<f64>,
    knn_k: usize,
    normalization: Normalization,
    normalize_mmd: bool,
    pub data: DataSource,
}

impl Settings {
    pub fn load(args: &ExperimentArgs) -> CliResult<Self> {
        let (file, base_dir) = match &args.config {
            Some(path) => (
                read_config(path)?,
                path.parent().map(Path::to_path_buf).unwrap_or_default(),
            ),
            None => (default_config(), PathBuf::new()),
        };
        let config_path = args.config.clone().unwrap_or_else(|| PathBuf::from("<built-in>"));
        let data = match (file.synthetic, file.task.is_empty()) {
            (Some(_), false) => {
                return Err(CliError::Usage(format!(
                    "{}: give either [synthetic] or [[task]] entries, not both",
                    config_path.display()
                )))
            }
            (None, true) => {
                return Err(CliError::Usage(format!(
                    "{}: no data; add a [synthetic] section or [[task]] entries",
                    config_path.display()
                )))
            }
            (Some(s), true) => DataSource::Synthetic(SyntheticTemplate {
                spec: SyntheticSpec {
                    classes: s.classes,
                    per_class_source: s.per_class_source.expand(s.classes, "per_class_source")?,
                    per_class_target: s.per_class_target.expand(s.classes, "per_class_target")?,
                    dim: s.dim,
                    class_separation: s.class_separation,
                    domain_shift: s.domain_shift,
                    seed: 0,
                },
                fixed_seed: s.seed,
            }),
            (None, false) => DataSource::Tasks(
                file.task
                    .into_iter()
                    .map(|t| Task {
                        name: t.name,
                        source: base_dir.join(t.source),
                        source_labels: base_dir.join(t.source_labels),
                        target: base_dir.join(t.target),
                        target_labels: t.target_labels.map(|p| base_dir.join(p)),
                        classes: t.classes,
                    })
                    .collect(),
            ),
        };

        let exp = file.experiment;
        let mut presets: Vec<Preset> = if args.preset.is_empty() {
            match exp.presets {
                Some(list) => list.into_iter().map(|p| p.0).collect(),
                None => Preset::ALL.to_vec(),
            }
        } else {
            args.preset.clone()
        };
        presets.sort();
        presets.dedup();
        if presets.is_empty() {
            return Err(CliError::Usage("no presets selected".into()));
        }

        let flags_set_seeds = args.seed.is_some() || args.repeats.is_some();
        let seeds = exp.seeds.filter(|s| !s.is_empty() && !flags_set_seeds);
        let base_seed = args
            .seed
            .or(exp.seed)
            .or_else(|| seeds.as_ref().map(|s| s[0]))
            .unwrap_or(0);
        let repeats = args.repeats.or(exp.repeats);
        if repeats == Some(0) {
            return Err(CliError::Usage("repeats must be >= 1".into()));
        }

        let m = file.method;
        let mut hyper = args.hyperparams.or(m.hyperparams).unwrap_or(HyperSet::Small).params();
        hyper.lambda = args.lambda.or(m.lambda).unwrap_or(hyper.lambda);
        hyper.dim = args.dim.or(m.dim).unwrap_or(hyper.dim);
        hyper.iters = args.iters.or(m.iters).unwrap_or(hyper.iters);
        hyper.delta = args.delta.or(m.delta).unwrap_or(hyper.delta);

        let settings = Settings {
            presets,
            seeds,
            base_seed,
            repeats,
            out: args.out.clone().or(exp.out.map(|p| base_dir.join(p))),
            format: args.format.or(exp.format),
            hyper,
            kernel: args.kernel.or(m.kernel.map(|k| k.0)).unwrap_or_default(),
            ridge: args.ridge.or(m.ridge),
            knn_k: args.knn_k.or(m.knn_k).unwrap_or(1),
            normalization: args.normalization.or(m.normalization.map(|n| n.0)).unwrap_or_default(),
            normalize_mmd: m.normalize_mmd.unwrap_or(false),
            data,
        };
        // Surface invalid method settings before any work starts.
        for &p in &settings.presets {
            settings.method(p)?;
        }
        Ok(settings)
    }

    /// Seeds for `run` and `ablate`: the explicit list, or
    /// `base .. base + repeats` (one run by default).
    pub fn run_seeds(&self) -> Vec<u64> {
        match &self.seeds {
            Some(list) => list.clone(),
            None => (0..self.repeats.unwrap_or(1) as u64)
                .map(|r| self.base_seed + r)
                .collect(),
        }
    }

    /// `(base_seed, repeats)` for the label-shift protocol.
    pub fn shift_protocol(&self) -> (u64, usize) {
        (self.base_seed, self.repeats.unwrap_or(DEFAULT_SHIFT_REPEATS))
    }

    pub fn method(&self, preset: Preset) -> CliResult<MethodSpec> {
        let mut spec = MethodSpec::from_preset(preset, &self.hyper)?;
        spec.kernel = self.kernel;
        spec.ridge = self.ridge;
        spec.knn_k = self.knn_k;
        spec.normalization = self.normalization;
        spec.normalize_mmd = self.normalize_mmd;
        spec.validate()?;
        Ok(spec)
    }
}

/// Shifted-domain synthetic pair used when no config file is given.
fn default_config() -> ConfigFile {
    ConfigFile {
        synthetic: Some(SyntheticSection {
            classes: 10,
            per_class_source: PerClass::Same(20),
            per_class_target: PerClass::Same(20),
            dim: 25,
            class_separation: 5.0,
            domain_shift: 6.0,
            seed: None,
        }),
        ..ConfigFile::default()
    }
}

fn read_config(path: &Path) -> CliResult<ConfigFile> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |span| line_column(&text, span.start));
        CliError::Config {
            path: path.to_path_buf(),
            line,
            column,
            message: e.message().trim().to_string(),
        }
    })
}

/// 1-based line and column (in characters) of byte `offset`.
fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let line_start = before.rfind('\n').map_or(0, |i| i + 1);
    (line, before[line_start..].chars().count() + 1)
}
