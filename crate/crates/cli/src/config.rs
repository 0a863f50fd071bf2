//! Flat `key=value` run configuration. Every key is also a command-line
//! flag of the same name; flags override the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use weedmap_core::learn::{
    BoostingParams, Distance, ForestParams, Hyperparams, KnnParams, ModelKind, SplitSpec,
    DEFAULT_FOLDS, DEFAULT_UNDERSAMPLE_FRACTION,
};
use weedmap_core::pipeline::PipelineConfig;
use weedmap_core::preprocess::{build_grid, TimeGrid, DEFAULT_CLOUD_THRESHOLD, DEFAULT_STEP_DAYS};
use weedmap_core::synth::{default_revisit_days, Separation, SynthConfig};
use weedmap_core::SensorId;

use crate::error::{CliError, Result};

pub struct ConfigKey {
    pub name: &'static str,
    pub help: &'static str,
}

const fn key(name: &'static str, help: &'static str) -> ConfigKey {
    ConfigKey { name, help }
}

pub const KEYS: &[ConfigKey] = &[
    key("sensor", "s2 or ps8b; inferred from the observation file when unset"),
    key("window-start", "first day of the season window (YYYY-MM-DD)"),
    key("window-end", "last day of the season window (YYYY-MM-DD)"),
    key("grid-step", "days between interpolation grid dates"),
    key("cloud-threshold", "largest cloud fraction kept"),
    key("test-fraction", "per-class share of parcels held out for testing"),
    key("undersample-fraction", "share of majority-class training parcels removed"),
    key("model", "rf, gbt or knn"),
    key("folds", "cross-validation folds"),
    key("seed", "master random seed"),
    key("observations", "observation CSV file"),
    key("manifest", "parcel manifest CSV file"),
    key("out-dir", "output directory"),
    key("orchard-feature", "append one-hot orchard type columns (true/false)"),
    key("drop-bands", "comma-separated band codes to leave out of the features"),
    key("rf-trees", "random forest grid: tree counts"),
    key("rf-max-depth", "random forest grid: depth limits (`none` for unlimited)"),
    key("rf-min-leaf", "random forest grid: minimum leaf sizes"),
    key("rf-features-per-split", "random forest grid: features tried per split (`none` for sqrt)"),
    key("gbt-rounds", "boosting grid: rounds"),
    key("gbt-learning-rate", "boosting grid: learning rates"),
    key("gbt-max-depth", "boosting grid: tree depths"),
    key("gbt-min-leaf", "boosting grid: minimum leaf sizes"),
    key("knn-k", "nearest-neighbour grid: neighbour counts"),
    key("knn-distance", "nearest-neighbour grid: euclidean and/or manhattan"),
    key("knn-standardize", "nearest-neighbour grid: z-score features (true/false)"),
    key("separation", "synthetic class separation: high, medium or low"),
    key("class-counts", "synthetic parcels per class: mowing,tillage,spraying,none"),
    key("pixels-per-parcel", "synthetic pixel count range, e.g. 4-25"),
    key("noise-sd", "synthetic per-band reflectance noise"),
    key("parcel-noise-ratio", "synthetic per-parcel NDVI offset spread, relative to noise-sd"),
    key("cloud-rate", "synthetic share of cloudy acquisitions"),
    key("revisit-days", "synthetic days between acquisitions"),
];

pub type RawConfig = BTreeMap<String, String>;

pub fn known_key(name: &str) -> Option<&'static str> {
    KEYS.iter().map(|k| k.name).find(|k| *k == name)
}

/// Parses `key=value` lines; `#` starts a comment line, underscores in
/// keys are read as dashes.
pub fn parse_config_text(text: &str) -> Result<RawConfig> {
    let mut raw = RawConfig::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("config line {}: expected key=value", i + 1)))?;
        let k = k.trim().replace('_', "-");
        let name = known_key(&k).ok_or_else(|| CliError::config(format!("config line {}: unknown key `{k}`", i + 1)))?;
        raw.insert(name.to_string(), v.trim().to_string());
    }
    Ok(raw)
}

pub fn load_config_file(path: &Path) -> Result<RawConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_text(&text)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sensor: Option<SensorId>,
    pub window_start: NaiveDate,
    pub window_end: NaiveDate,
    pub grid_step: u32,
    pub cloud_threshold: f64,
    pub test_fraction: f64,
    pub undersample_fraction: f64,
    pub model: ModelKind,
    pub folds: usize,
    pub seed: u64,
    pub observations: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub orchard_feature: bool,
    pub drop_bands: Vec<String>,
    /// Grid-axis overrides, raw comma-separated values keyed like [`KEYS`].
    pub grid_overrides: BTreeMap<String, String>,
    pub separation: Separation,
    pub class_counts: [usize; 4],
    pub pixels_per_parcel: (usize, usize),
    pub noise_sd: f64,
    pub parcel_noise_ratio: f64,
    pub cloud_rate: f64,
    pub revisit_days: Option<u32>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SynthConfig::new(SensorId::S2, 0);
        RunConfig {
            sensor: None,
            window_start: synth.window_start,
            window_end: synth.window_end,
            grid_step: DEFAULT_STEP_DAYS,
            cloud_threshold: DEFAULT_CLOUD_THRESHOLD,
            test_fraction: SplitSpec::DEFAULT_TEST_FRACTION,
            undersample_fraction: DEFAULT_UNDERSAMPLE_FRACTION,
            model: ModelKind::Rf,
            folds: DEFAULT_FOLDS,
            seed: 0,
            observations: None,
            manifest: None,
            out_dir: None,
            orchard_feature: false,
            drop_bands: Vec::new(),
            grid_overrides: BTreeMap::new(),
            separation: synth.separation,
            class_counts: synth.class_counts,
            pixels_per_parcel: synth.pixels_per_parcel,
            noise_sd: synth.noise_sd,
            parcel_noise_ratio: synth.parcel_noise_ratio,
            cloud_rate: synth.cloud_rate,
            revisit_days: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::config(format!("{key}: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(CliError::config(format!("{key}: expected true or false, got `{value}`"))),
    }
}

fn parse_list<T>(key: &str, value: &str, item: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(item)
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(CliError::config(format!("{key}: empty list")));
    }
    Ok(items)
}

fn parse_optional_usize(key: &str, value: &str) -> Result<Option<usize>> {
    match value.trim().to_ascii_lowercase().as_str() {
        "none" | "unlimited" | "" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (k, v) in raw {
            match k.as_str() {
                "sensor" => cfg.sensor = Some(parse(k, v)?),
                "window-start" => cfg.window_start = parse(k, v)?,
                "window-end" => cfg.window_end = parse(k, v)?,
                "grid-step" => cfg.grid_step = parse(k, v)?,
                "cloud-threshold" => cfg.cloud_threshold = parse(k, v)?,
                "test-fraction" => cfg.test_fraction = parse(k, v)?,
                "undersample-fraction" => cfg.undersample_fraction = parse(k, v)?,
                "model" => cfg.model = parse(k, v)?,
                "folds" => cfg.folds = parse(k, v)?,
                "seed" => cfg.seed = parse(k, v)?,
                "observations" => cfg.observations = Some(PathBuf::from(v)),
                "manifest" => cfg.manifest = Some(PathBuf::from(v)),
                "out-dir" => cfg.out_dir = Some(PathBuf::from(v)),
                "orchard-feature" => cfg.orchard_feature = parse_bool(k, v)?,
                "drop-bands" => {
                    cfg.drop_bands = v
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(String::from)
                        .collect()
                }
                "separation" => cfg.separation = parse(k, v)?,
                "class-counts" => {
                    let counts = parse_list(k, v, |s| parse::<usize>(k, s))?;
                    cfg.class_counts = counts
                        .try_into()
                        .map_err(|_| CliError::config("class-counts: expected four counts"))?;
                }
                "pixels-per-parcel" => {
                    let (lo, hi) = v.split_once('-').unwrap_or((v, v));
                    cfg.pixels_per_parcel = (parse(k, lo)?, parse(k, hi)?);
                }
                "noise-sd" => cfg.noise_sd = parse(k, v)?,
                "parcel-noise-ratio" => cfg.parcel_noise_ratio = parse(k, v)?,
                "cloud-rate" => cfg.cloud_rate = parse(k, v)?,
                "revisit-days" => cfg.revisit_days = Some(parse(k, v)?),
                other if other.starts_with("rf-") || other.starts_with("gbt-") || other.starts_with("knn-") => {
                    cfg.grid_overrides.insert(other.to_string(), v.clone());
                }
                other => return Err(CliError::config(format!("unknown key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_end <= self.window_start {
            return Err(CliError::config(format!(
                "window-end {} must be after window-start {}",
                self.window_end, self.window_start
            )));
        }
        if self.grid_step == 0 {
            return Err(CliError::config("grid-step must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.cloud_threshold) {
            return Err(CliError::config("cloud-threshold must lie in [0, 1]"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(CliError::config("test-fraction must lie in (0, 1)"));
        }
        if !(0.0..1.0).contains(&self.undersample_fraction) {
            return Err(CliError::config("undersample-fraction must lie in [0, 1)"));
        }
        if self.folds < 2 {
            return Err(CliError::config("folds must be at least 2"));
        }
        if !(0.0..=1.0).contains(&self.cloud_rate) {
            return Err(CliError::config("cloud-rate must lie in [0, 1]"));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(CliError::config("noise-sd must be nonnegative"));
        }
        if !(self.parcel_noise_ratio >= 0.0 && self.parcel_noise_ratio.is_finite()) {
            return Err(CliError::config("parcel-noise-ratio must be nonnegative"));
        }
        let (lo, hi) = self.pixels_per_parcel;
        if lo == 0 || hi < lo {
            return Err(CliError::config("pixels-per-parcel must be a range like 4-25"));
        }
        if self.revisit_days == Some(0) {
            return Err(CliError::config("revisit-days must be positive"));
        }
        self.hyperparameter_grid()?;
        Ok(())
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        Ok(build_grid(self.window_start, self.window_end, self.grid_step)?)
    }

    pub fn pipeline_config(&self, sensor: SensorId) -> Result<PipelineConfig> {
        Ok(PipelineConfig {
            sensor,
            grid: self.time_grid()?,
            cloud_threshold: self.cloud_threshold,
            dropped_bands: self.drop_bands.clone(),
            orchard_feature: self.orchard_feature,
        })
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            test_fraction: self.test_fraction,
            seed: self.seed,
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        let sensor = self.sensor.unwrap_or(SensorId::S2);
        SynthConfig {
            sensor,
            window_start: self.window_start,
            window_end: self.window_end,
            class_counts: self.class_counts,
            pixels_per_parcel: self.pixels_per_parcel,
            separation: self.separation,
            noise_sd: self.noise_sd,
            parcel_noise_ratio: self.parcel_noise_ratio,
            cloud_rate: self.cloud_rate,
            revisit_days: self.revisit_days.unwrap_or_else(|| default_revisit_days(sensor)),
            seed: self.seed,
        }
    }

    fn axis<T>(&self, key: &str, default: Vec<T>, item: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
        match self.grid_overrides.get(key) {
            Some(v) => parse_list(key, v, item),
            None => Ok(default),
        }
    }

    /// Cartesian product of the grid axes for the configured model, first
    /// axis outermost. Without overrides this is the default grid.
    pub fn hyperparameter_grid(&self) -> Result<Vec<Hyperparams>> {
        for k in self.grid_overrides.keys() {
            if known_key(k).is_none() {
                return Err(CliError::config(format!("unknown grid key `{k}`")));
            }
        }
        let uint = |k: &'static str| move |s: &str| parse::<usize>(k, s);
        let mut grid = Vec::new();
        match self.model {
            ModelKind::Rf => {
                let trees = self.axis("rf-trees", vec![100, 300, 500], uint("rf-trees"))?;
                let depths = self.axis("rf-max-depth", vec![Some(8), None], |s| parse_optional_usize("rf-max-depth", s))?;
                let leaves = self.axis("rf-min-leaf", vec![1], uint("rf-min-leaf"))?;
                let fps = self.axis("rf-features-per-split", vec![None], |s| {
                    parse_optional_usize("rf-features-per-split", s)
                })?;
                for &n_trees in &trees {
                    for &max_depth in &depths {
                        for &min_leaf in &leaves {
                            for &features_per_split in &fps {
                                let p = ForestParams {
                                    n_trees,
                                    max_depth,
                                    min_leaf,
                                    features_per_split,
                                    bootstrap: true,
                                };
                                p.validate()?;
                                grid.push(Hyperparams::Rf(p));
                            }
                        }
                    }
                }
            }
            ModelKind::Gbt => {
                let rounds = self.axis("gbt-rounds", vec![100, 300], uint("gbt-rounds"))?;
                let rates = self.axis("gbt-learning-rate", vec![0.05, 0.1], |s| parse::<f64>("gbt-learning-rate", s))?;
                let depths = self.axis("gbt-max-depth", vec![3, 5], uint("gbt-max-depth"))?;
                let leaves = self.axis("gbt-min-leaf", vec![1], uint("gbt-min-leaf"))?;
                for &n_rounds in &rounds {
                    for &learning_rate in &rates {
                        for &max_depth in &depths {
                            for &min_leaf in &leaves {
                                let p = BoostingParams {
                                    n_rounds,
                                    learning_rate,
                                    max_depth,
                                    min_leaf,
                                };
                                p.validate()?;
                                grid.push(Hyperparams::Gbt(p));
                            }
                        }
                    }
                }
            }
            ModelKind::Knn => {
                let ks = self.axis("knn-k", vec![3, 5, 7, 11], uint("knn-k"))?;
                let distances = self.axis(
                    "knn-distance",
                    vec![Distance::Euclidean, Distance::Manhattan],
                    |s| parse::<Distance>("knn-distance", s),
                )?;
                let scales = self.axis("knn-standardize", vec![true], |s| parse_bool("knn-standardize", s))?;
                for &k in &ks {
                    if k == 0 {
                        return Err(CliError::config("knn-k must be positive"));
                    }
                    for &distance in &distances {
                        for &standardize in &scales {
                            grid.push(Hyperparams::Knn(KnnParams {
                                k,
                                distance,
                                standardize,
                            }));
                        }
                    }
                }
            }
        }
        Ok(grid)
    }

    /// Every effective setting as loadable `key=value` text, in key order.
    pub fn to_config_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        if let Some(s) = self.sensor {
            put("sensor", s.to_string());
        }
        put("window-start", self.window_start.to_string());
        put("window-end", self.window_end.to_string());
        put("grid-step", self.grid_step.to_string());
        put("cloud-threshold", self.cloud_threshold.to_string());
        put("test-fraction", self.test_fraction.to_string());
        put("undersample-fraction", self.undersample_fraction.to_string());
        put("model", self.model.to_string());
        put("folds", self.folds.to_string());
        put("seed", self.seed.to_string());
        for (k, p) in [
            ("observations", &self.observations),
            ("manifest", &self.manifest),
            ("out-dir", &self.out_dir),
        ] {
            if let Some(p) = p {
                put(k, p.display().to_string());
            }
        }
        put("orchard-feature", self.orchard_feature.to_string());
        if !self.drop_bands.is_empty() {
            put("drop-bands", self.drop_bands.join(","));
        }
        for k in KEYS.iter().map(|k| k.name) {
            if let Some(v) = self.grid_overrides.get(k) {
                put(k, v.clone());
            }
        }
        put("separation", self.separation.as_str().to_string());
        put("class-counts", join(&self.class_counts));
        put(
            "pixels-per-parcel",
            format!("{}-{}", self.pixels_per_parcel.0, self.pixels_per_parcel.1),
        );
        put("noise-sd", self.noise_sd.to_string());
        put("parcel-noise-ratio", self.parcel_noise_ratio.to_string());
        put("cloud-rate", self.cloud_rate.to_string());
        if let Some(r) = self.revisit_days {
            put("revisit-days", r.to_string());
        }
        out
    }
}
