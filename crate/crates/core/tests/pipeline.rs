mod common;

use chrono::Days;
use common::{featurize, manifest};
use weedmap_core::eval::EvaluationReport;
use weedmap_core::learn::*;
use weedmap_core::pipeline::{run_pipeline, PipelineConfig};
use weedmap_core::preprocess::build_grid;
use weedmap_core::synth::{class_signature, generate_dataset, Separation, SynthConfig};
use weedmap_core::{Error, SensorId, WeedClass};

fn config(cfg: &SynthConfig) -> PipelineConfig {
    PipelineConfig {
        sensor: cfg.sensor,
        grid: build_grid(cfg.window_start, cfg.window_end, 10).unwrap(),
        cloud_threshold: 0.005,
        dropped_bands: Vec::new(),
        orchard_feature: false,
    }
}

#[test]
fn feature_counts_per_sensor() {
    for (sensor, pixel_features) in [(SensorId::S2, 518), (SensorId::Ps8b, 333)] {
        let mut cfg = SynthConfig::new(sensor, 1);
        cfg.class_counts = [2, 1, 1, 1];
        let out = featurize(&cfg);
        assert_eq!(out.schema.len(), 3 * pixel_features);
        assert_eq!(out.parcels.len(), 5);
        assert!(out.parcels.iter().all(|p| p.values.len() == 3 * pixel_features));
        assert_eq!(out.schema.names()[0], format!("{}@0:mean", sensor.sensor().codes().next().unwrap()));
    }
}

#[test]
fn noiseless_daily_pixels_reproduce_signature_on_grid() {
    let mut cfg = SynthConfig::new(SensorId::Ps8b, 2);
    cfg.class_counts = [2, 2, 2, 2];
    cfg.noise_sd = 0.0;
    cfg.cloud_rate = 0.0;
    cfg.pixels_per_parcel = (1, 1);
    let data = generate_dataset(&cfg).unwrap();
    let events = data.event_days.clone();
    let labels: Vec<WeedClass> = data.parcels.iter().map(|p| p.label.unwrap()).collect();
    let m = manifest(&data);
    let out = run_pipeline(data.observations, &m, &config(&cfg)).unwrap();
    let grid = build_grid(cfg.window_start, cfg.window_end, 10).unwrap();
    for ((parcel, &event), class) in out.parcels.iter().zip(&events).zip(&labels) {
        for k in 0..grid.n_steps {
            let name = format!("NDVI@{k}:mean");
            let j = out.schema.names().iter().position(|n| *n == name).unwrap();
            let t = (grid.date(k) - cfg.window_start).num_days() as f64;
            let want = class_signature(*class, event as f64, t);
            assert!((parcel.values[j] - want).abs() < 1e-9, "{class} k={k}: {} vs {want}", parcel.values[j]);
        }
    }
}

#[test]
fn cloudy_observations_are_removed() {
    let mut cfg = SynthConfig::new(SensorId::S2, 3);
    cfg.class_counts = [3, 2, 2, 2];
    let data = generate_dataset(&cfg).unwrap();
    let cloudy = data.observations.iter().filter(|o| o.cloud_fraction > 0.005).count();
    assert!(cloudy > 0);
    let m = manifest(&data);
    let out = run_pipeline(data.observations, &m, &config(&cfg)).unwrap();
    assert_eq!(out.stats.cloudy_removed, cloudy);
}

#[test]
fn orchard_one_hot_block() {
    let mut cfg = SynthConfig::new(SensorId::S2, 4);
    cfg.class_counts = [2, 1, 1, 1];
    let data = generate_dataset(&cfg).unwrap();
    let mut pc = config(&cfg);
    pc.orchard_feature = true;
    let m = manifest(&data);
    let out = run_pipeline(data.observations, &m, &pc).unwrap();
    assert_eq!(out.schema.len(), 3 * 518 + 7);
    for (p, rec) in out.parcels.iter().zip(&data.parcels) {
        let block = &p.values[3 * 518..];
        assert_eq!(block.iter().sum::<f64>(), 1.0);
        let name = format!("orchard={}", rec.orchard_type);
        let j = out.schema.names().iter().position(|n| *n == name).unwrap();
        assert_eq!(p.values[j], 1.0);
    }
}

#[test]
fn pipeline_rejects_inconsistent_inputs() {
    let mut cfg = SynthConfig::new(SensorId::S2, 5);
    cfg.class_counts = [2, 1, 1, 1];
    let data = generate_dataset(&cfg).unwrap();
    let m = manifest(&data);

    let mut wrong_sensor = config(&cfg);
    wrong_sensor.sensor = SensorId::Ps8b;
    assert!(matches!(
        run_pipeline(data.observations.clone(), &m, &wrong_sensor),
        Err(Error::SchemaMismatch(_))
    ));

    assert!(run_pipeline(data.observations.clone(), &m[1..], &config(&cfg)).is_err());

    let mut duplicate = data.observations.clone();
    duplicate.push(data.observations[0].clone());
    assert!(matches!(
        run_pipeline(duplicate, &m, &config(&cfg)),
        Err(Error::DuplicateId(_))
    ));

    let mut bad = data.observations.clone();
    bad[0].reflectances.pop();
    assert!(matches!(
        run_pipeline(bad, &m, &config(&cfg)),
        Err(Error::BandCountMismatch { .. })
    ));
}

#[test]
fn fully_clouded_parcel_is_dropped() {
    let mut cfg = SynthConfig::new(SensorId::S2, 6);
    cfg.class_counts = [2, 1, 1, 1];
    let mut data = generate_dataset(&cfg).unwrap();
    let victim = data.parcels[0].parcel_id.clone();
    for o in data.observations.iter_mut().filter(|o| o.parcel_id == victim) {
        o.cloud_fraction = 0.9;
    }
    let m = manifest(&data);
    let out = run_pipeline(data.observations, &m, &config(&cfg)).unwrap();
    assert_eq!(out.parcels.len(), 4);
    assert_eq!(out.stats.parcels_dropped, vec![victim]);
}

#[test]
fn pipeline_ignores_observation_order() {
    let mut cfg = SynthConfig::new(SensorId::S2, 7);
    cfg.class_counts = [3, 1, 1, 1];
    let data = generate_dataset(&cfg).unwrap();
    let m = manifest(&data);
    let forward = run_pipeline(data.observations.clone(), &m, &config(&cfg)).unwrap();
    let mut reversed = data.observations;
    reversed.reverse();
    let backward = run_pipeline(reversed, &m, &config(&cfg)).unwrap();
    assert_eq!(forward.parcels, backward.parcels);
}

#[test]
fn grid_ends_on_last_step_inside_window() {
    let cfg = SynthConfig::new(SensorId::S2, 8);
    let grid = build_grid(cfg.window_start, cfg.window_end, 10).unwrap();
    assert_eq!(grid.n_steps, 13);
    assert_eq!(grid.last_date(), cfg.window_start + Days::new(120));
}

#[test]
fn one_nn_separates_high_separation_parcels() {
    let out = featurize(&SynthConfig::new(SensorId::Ps8b, 9));
    let data = Dataset::new(out.schema, out.parcels).unwrap();
    let (train_set, test) = stratified_split(&data, &SplitSpec { test_fraction: 0.2, seed: 9 }).unwrap();
    let model = train_knn(&train_set, &KnnParams { k: 1, ..Default::default() }).unwrap();
    let pred = predict(&model, test.rows()).unwrap();
    let f1 = EvaluationReport::from_predictions(test.labels(), &pred, Default::default())
        .unwrap()
        .weighted_f1;
    assert!(f1 >= 0.9, "weighted F1 {f1}");
}

#[test]
fn low_separation_is_harder_than_high() {
    let score = |separation| {
        let mut cfg = SynthConfig::new(SensorId::Ps8b, 10);
        cfg.separation = separation;
        let out = featurize(&cfg);
        let data = Dataset::new(out.schema, out.parcels).unwrap();
        let (train_set, test) = stratified_split(&data, &SplitSpec { test_fraction: 0.2, seed: 10 }).unwrap();
        let model = train_random_forest(&train_set, &ForestParams::default(), 10).unwrap();
        let pred = predict(&model, test.rows()).unwrap();
        EvaluationReport::from_predictions(test.labels(), &pred, Default::default())
            .unwrap()
            .weighted_f1
    };
    assert!(score(Separation::Low) < score(Separation::High));
}

#[test]
fn sensors_share_one_test_partition() {
    let split_ids = |sensor| {
        let mut cfg = SynthConfig::new(sensor, 12);
        cfg.class_counts = [20, 6, 6, 6];
        cfg.pixels_per_parcel = (1, 2);
        let out = featurize(&cfg);
        let data = Dataset::new(out.schema, out.parcels).unwrap();
        let (_, test) = stratified_split(&data, &SplitSpec { test_fraction: 0.2, seed: 77 }).unwrap();
        let mut ids: Vec<String> = test.rows().iter().map(|r| r.parcel_id.to_string()).collect();
        ids.sort();
        ids
    };
    assert_eq!(split_ids(SensorId::S2), split_ids(SensorId::Ps8b));
}
