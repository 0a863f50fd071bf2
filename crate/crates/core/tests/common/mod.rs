#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use weedmap_core::learn::Dataset;
use weedmap_core::pipeline::{run_pipeline, ManifestEntry, PipelineConfig, PipelineOutput};
use weedmap_core::preprocess::{build_grid, DEFAULT_CLOUD_THRESHOLD, DEFAULT_STEP_DAYS};
use weedmap_core::synth::{generate_dataset, Separation, SynthConfig, SynthDataset};
use weedmap_core::{SensorId, WeedClass};

pub fn manifest(data: &SynthDataset) -> Vec<ManifestEntry> {
    data.parcels
        .iter()
        .map(|p| ManifestEntry {
            parcel_id: p.parcel_id.clone(),
            orchard_type: p.orchard_type,
            label: p.label,
        })
        .collect()
}

pub fn featurize(cfg: &SynthConfig) -> PipelineOutput {
    let data = generate_dataset(cfg).unwrap();
    let manifest = manifest(&data);
    let config = PipelineConfig {
        sensor: cfg.sensor,
        grid: build_grid(cfg.window_start, cfg.window_end, DEFAULT_STEP_DAYS).unwrap(),
        cloud_threshold: DEFAULT_CLOUD_THRESHOLD,
        dropped_bands: Vec::new(),
        orchard_feature: false,
    };
    run_pipeline(data.observations, &manifest, &config).unwrap()
}

/// Parcel-level dataset from the synthetic generator.
pub fn synthetic(sensor: SensorId, separation: Separation, seed: u64, counts: [usize; 4]) -> Dataset {
    let mut cfg = SynthConfig::new(sensor, seed);
    cfg.separation = separation;
    cfg.class_counts = counts;
    cfg.pixels_per_parcel = (3, 6);
    let out = featurize(&cfg);
    Dataset::new(out.schema, out.parcels).unwrap()
}

/// Random labelled matrix with `n` rows and `d` features.
pub fn random_matrix(n: usize, d: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<WeedClass>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-5.0..5.0)).collect())
        .collect();
    let y = (0..n).map(|_| WeedClass::ALL[rng.random_range(0..4)]).collect();
    (x, y)
}

pub fn names(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("f{j}")).collect()
}
