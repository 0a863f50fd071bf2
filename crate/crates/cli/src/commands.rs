use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use sha2::{Digest, Sha256};
use weedmap_core::eval::{render_confusion_csv, render_report, EvaluationReport, ReportFormat, ReportMetadata};
use weedmap_core::learn::{
    cross_validate, predict, stratified_split, train, undersample_majority, CvResult, Dataset, ModelArtifact,
    MODEL_FORMAT_VERSION,
};
use weedmap_core::pipeline::{run_pipeline, ManifestEntry, PipelineOutput};
use weedmap_core::synth::generate_dataset;
use weedmap_core::{validate_observation, Id, SensorId, WeedClass};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io;

pub const OBSERVATIONS_FILE: &str = "observations.csv";
pub const PARCELS_FILE: &str = "parcels.csv";
pub const FEATURES_FILE: &str = "features.csv";
pub const MODEL_FILE: &str = "model.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "metrics.csv";
pub const REPORT_TEXT: &str = "report.txt";
pub const CONFUSION_CSV: &str = "confusion.csv";
pub const CV_CSV: &str = "cv_results.csv";
pub const TEST_PREDICTIONS: &str = "test_predictions.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const RUN_MANIFEST: &str = "run_manifest.txt";

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    cfg.out_dir
        .as_deref()
        .ok_or_else(|| CliError::config("out-dir is required"))
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

/// Creates the output directory and refuses outputs that would overwrite
/// an input file.
fn prepare_outputs(cfg: &RunConfig, names: &[&str], inputs: &[&Path]) -> Result<Vec<PathBuf>> {
    let dir = out_dir(cfg)?;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let outputs: Vec<PathBuf> = names.iter().map(|n| dir.join(n)).collect();
    for input in inputs {
        if let Some(clash) = outputs.iter().find(|o| same_file(o, input)) {
            return Err(CliError::config(format!(
                "output {} would overwrite input {}",
                clash.display(),
                input.display()
            )));
        }
    }
    Ok(outputs)
}

fn input_path<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    let p = p
        .as_deref()
        .ok_or_else(|| CliError::config(format!("{key} is required")))?;
    if !p.is_file() {
        return Err(CliError::config(format!("{key} file {} does not exist", p.display())));
    }
    Ok(p)
}

pub struct Inputs {
    pub sensor: SensorId,
    pub observations: Vec<weedmap_core::SpectralObservation>,
    pub manifest: Vec<ManifestEntry>,
    /// Hash of the observation and manifest file contents.
    pub dataset_id: String,
}

pub fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let obs_path = input_path(&cfg.observations, "observations")?;
    let manifest_path = input_path(&cfg.manifest, "manifest")?;
    let file = io::read_observations(obs_path)?;
    if let Some(s) = cfg.sensor {
        if s != file.sensor {
            return Err(CliError::input(
                obs_path,
                format!("configured sensor {s} but the file holds {} bands", file.sensor),
            ));
        }
    }
    let manifest = io::read_manifest(manifest_path)?;
    let mut hasher = Sha256::new();
    for p in [obs_path, manifest_path] {
        hasher.update(std::fs::read(p).map_err(|e| CliError::io(p, e))?);
    }
    let digest = hasher.finalize();
    let dataset_id = digest[..8].iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    });
    info!(
        "read {} {} observations and {} manifest parcels",
        file.observations.len(),
        file.sensor,
        manifest.len()
    );
    Ok(Inputs {
        sensor: file.sensor,
        observations: file.observations,
        manifest,
        dataset_id,
    })
}

fn featurize_inputs(cfg: &RunConfig, inputs: Inputs) -> Result<PipelineOutput> {
    let pc = cfg.pipeline_config(inputs.sensor)?;
    Ok(run_pipeline(inputs.observations, &inputs.manifest, &pc)?)
}

#[derive(Debug, Clone)]
pub struct SynthOutputs {
    pub observations: PathBuf,
    pub parcels: PathBuf,
    pub n_parcels: usize,
    pub n_observations: usize,
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<SynthOutputs> {
    let outputs = prepare_outputs(cfg, &[OBSERVATIONS_FILE, PARCELS_FILE], &[])?;
    let sc = cfg.synth_config();
    let data = generate_dataset(&sc)?;
    io::write_observations(&outputs[0], sc.sensor, io::DEFAULT_SCALE, &data.observations)?;
    let entries: Vec<ManifestEntry> = data
        .parcels
        .iter()
        .map(|p| ManifestEntry {
            parcel_id: p.parcel_id.clone(),
            orchard_type: p.orchard_type,
            label: p.label,
        })
        .collect();
    io::write_manifest(&outputs[1], &entries)?;
    info!(
        "wrote {} parcels, {} observations to {}",
        entries.len(),
        data.observations.len(),
        out_dir(cfg)?.display()
    );
    Ok(SynthOutputs {
        observations: outputs[0].clone(),
        parcels: outputs[1].clone(),
        n_parcels: entries.len(),
        n_observations: data.observations.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationSummary {
    pub sensor: SensorId,
    pub observations: usize,
    pub pixels: usize,
    pub parcels: usize,
    pub labelled: usize,
    pub cloudy: usize,
}

pub fn cmd_validate(cfg: &RunConfig) -> Result<ValidationSummary> {
    let inputs = load_inputs(cfg)?;
    let sensor = inputs.sensor.sensor();
    let mut ids = BTreeSet::new();
    for e in &inputs.manifest {
        if !ids.insert(e.parcel_id.clone()) {
            return Err(weedmap_core::Error::DuplicateId(e.parcel_id.to_string()).into());
        }
    }
    let mut pixels = BTreeSet::new();
    let mut dates = BTreeSet::new();
    let mut cloudy = 0;
    let n = inputs.observations.len();
    for obs in inputs.observations {
        if !ids.contains(&obs.parcel_id) {
            return Err(weedmap_core::Error::Parse(format!(
                "pixel {} references parcel {} absent from the manifest",
                obs.pixel_id, obs.parcel_id
            ))
            .into());
        }
        let obs = validate_observation(obs, sensor)?;
        if !dates.insert((obs.pixel_id.clone(), obs.date)) {
            return Err(weedmap_core::Error::DuplicateId(format!("{}@{}", obs.pixel_id, obs.date)).into());
        }
        if obs.cloud_fraction > cfg.cloud_threshold {
            cloudy += 1;
        }
        pixels.insert(obs.pixel_id);
    }
    Ok(ValidationSummary {
        sensor: inputs.sensor,
        observations: n,
        pixels: pixels.len(),
        parcels: inputs.manifest.len(),
        labelled: inputs.manifest.iter().filter(|e| e.label.is_some()).count(),
        cloudy,
    })
}

pub fn cmd_featurize(cfg: &RunConfig) -> Result<PathBuf> {
    let inputs_paths = [input_path(&cfg.observations, "observations")?, input_path(&cfg.manifest, "manifest")?];
    let outputs = prepare_outputs(cfg, &[FEATURES_FILE], &inputs_paths)?;
    let out = featurize_inputs(cfg, load_inputs(cfg)?)?;
    io::write_features(&outputs[0], &out.schema, &out.parcels)?;
    Ok(outputs[0].clone())
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: EvaluationReport,
    pub cv: CvResult,
    pub model: ModelArtifact,
    pub out_dir: PathBuf,
}

fn cv_csv(cv: &CvResult, grid: &[weedmap_core::learn::Hyperparams]) -> String {
    let mut out = String::from("candidate,hyperparameters,mean_weighted_f1,selected\n");
    for (i, (hp, f1)) in grid.iter().zip(&cv.mean_weighted_f1).enumerate() {
        let _ = writeln!(out, "{i},{hp},{f1},{}", i == cv.best_index);
    }
    out
}

fn run_manifest(cfg: &RunConfig, model: &ModelArtifact, dataset_id: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# weedmap run manifest; pass this file to --config to repeat the run");
    let _ = writeln!(out, "# weedmap-cli {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "# model_format_version={MODEL_FORMAT_VERSION}");
    let _ = writeln!(out, "# schema_fingerprint={}", model.schema_fingerprint);
    let _ = writeln!(out, "# dataset_id={dataset_id}");
    out.push_str(&cfg.to_config_text());
    out
}

/// Featurize, split, rebalance, grid-search, train on the full training
/// split and evaluate on the held-out parcels.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunOutcome> {
    let inputs_paths = [input_path(&cfg.observations, "observations")?, input_path(&cfg.manifest, "manifest")?];
    let outputs = prepare_outputs(
        cfg,
        &[
            MODEL_FILE,
            REPORT_JSON,
            REPORT_CSV,
            REPORT_TEXT,
            CONFUSION_CSV,
            CV_CSV,
            TEST_PREDICTIONS,
            RUN_MANIFEST,
        ],
        &inputs_paths,
    )?;
    let grid = cfg.hyperparameter_grid()?;
    let inputs = load_inputs(cfg)?;
    let mut resolved = cfg.clone();
    resolved.sensor = Some(inputs.sensor);
    let dataset_id = inputs.dataset_id.clone();

    let out = featurize_inputs(cfg, inputs)?;
    let (labelled, unlabelled): (Vec<_>, Vec<_>) = out.parcels.into_iter().partition(|p| p.label.is_some());
    if !unlabelled.is_empty() {
        warn!("{} unlabelled parcels left out of training and evaluation", unlabelled.len());
    }
    let data = Dataset::new(out.schema, labelled)?;
    let (train_set, test) = stratified_split(&data, &cfg.split_spec())?;
    let train_set = undersample_majority(&train_set, cfg.undersample_fraction, cfg.seed)?;
    info!(
        "{} training and {} test parcels; searching {} {} candidates with {}-fold CV",
        train_set.len(),
        test.len(),
        grid.len(),
        cfg.model,
        cfg.folds
    );
    let cv = cross_validate(&train_set, cfg.model, &grid, cfg.folds, cfg.seed)?;
    info!("selected {}", cv.best);
    let model = train(&train_set, &cv.best, cfg.seed)?;
    let predicted = predict(&model, test.rows())?;
    let report = EvaluationReport::from_predictions(
        test.labels(),
        &predicted,
        ReportMetadata {
            model_kind: cfg.model.to_string(),
            hyperparams: cv.best.named(),
            seed: cfg.seed,
            dataset_id: dataset_id.clone(),
        },
    )?;

    model.save(&outputs[0])?;
    io::write_text(&outputs[1], &render_report(&report, ReportFormat::Json)?)?;
    io::write_text(&outputs[2], &render_report(&report, ReportFormat::Csv)?)?;
    io::write_text(&outputs[3], &render_report(&report, ReportFormat::Text)?)?;
    io::write_text(&outputs[4], &render_confusion_csv(&report.confusion))?;
    io::write_text(&outputs[5], &cv_csv(&cv, &grid))?;
    let mut test_rows = String::from("parcel_id,true_class,predicted_class\n");
    for ((row, truth), pred) in test.rows().iter().zip(test.labels()).zip(&predicted) {
        let _ = writeln!(test_rows, "{},{truth},{pred}", row.parcel_id);
    }
    io::write_text(&outputs[6], &test_rows)?;
    io::write_text(&outputs[7], &run_manifest(&resolved, &model, &dataset_id))?;
    Ok(RunOutcome {
        report,
        cv,
        model,
        out_dir: out_dir(cfg)?.to_path_buf(),
    })
}

/// Labels every manifest parcel with a stored model. Observations of
/// parcels missing from the manifest are ignored.
pub fn cmd_predict(cfg: &RunConfig, model_path: &Path) -> Result<Vec<(Id, WeedClass)>> {
    if !model_path.is_file() {
        return Err(CliError::config(format!("model file {} does not exist", model_path.display())));
    }
    let inputs_paths = [
        input_path(&cfg.observations, "observations")?,
        input_path(&cfg.manifest, "manifest")?,
        model_path,
    ];
    let outputs = prepare_outputs(cfg, &[PREDICTIONS_FILE], &inputs_paths)?;
    let model = ModelArtifact::load(model_path)?;
    let mut cfg = cfg.clone();
    if model.schema.names().iter().any(|n| n.starts_with("orchard=")) {
        cfg.orchard_feature = true;
    }
    let mut inputs = load_inputs(&cfg)?;
    let wanted: BTreeSet<Id> = inputs.manifest.iter().map(|e| e.parcel_id.clone()).collect();
    let before = inputs.observations.len();
    inputs.observations.retain(|o| wanted.contains(&o.parcel_id));
    if inputs.observations.len() < before {
        warn!(
            "ignored {} observations of parcels absent from the manifest",
            before - inputs.observations.len()
        );
    }
    let out = featurize_inputs(&cfg, inputs)?;
    if out.schema.fingerprint() != model.schema_fingerprint {
        return Err(weedmap_core::Error::SchemaMismatch(format!(
            "model expects {} features ({}), input yields {} ({})",
            model.schema.len(),
            &model.schema_fingerprint[..12],
            out.schema.len(),
            &out.schema.fingerprint()[..12]
        ))
        .into());
    }
    let labels = predict(&model, &out.parcels)?;
    let predictions: Vec<(Id, WeedClass)> = out
        .parcels
        .iter()
        .map(|p| p.parcel_id.clone())
        .zip(labels)
        .collect();
    io::write_predictions(&outputs[0], &predictions)?;
    Ok(predictions)
}

pub fn cmd_report(input: &Path, format: ReportFormat) -> Result<String> {
    let text = std::fs::read_to_string(input).map_err(|e| CliError::io(input, e))?;
    let report = EvaluationReport::from_json(&text)?;
    Ok(render_report(&report, format)?)
}
