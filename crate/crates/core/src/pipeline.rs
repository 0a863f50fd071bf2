//! Raw observations to parcel feature vectors: validate, cloud-screen,
//! grid-interpolate, featurize per pixel, aggregate per parcel.

use std::collections::BTreeMap;
use std::sync::Arc;

use log::{info, warn};
use rayon::prelude::*;

use crate::domain::{
    validate_observation, Id, OrchardType, ParcelRecord, SensorId, SpectralObservation,
    TimeSeries, WeedClass,
};
use crate::error::{Error, Result};
use crate::features::{aggregate_parcel_with, FeatureLayout, FeatureSchema, ParcelFeatureVector};
use crate::preprocess::{filter_cloudy, interpolate_to_grid, TimeGrid};

/// One row of the parcel manifest; pixel membership comes from the
/// observations themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub parcel_id: Id,
    pub orchard_type: OrchardType,
    pub label: Option<WeedClass>,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub sensor: SensorId,
    pub grid: TimeGrid,
    pub cloud_threshold: f64,
    pub dropped_bands: Vec<String>,
    /// Append a one-hot orchard type block to every parcel vector.
    pub orchard_feature: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PipelineStats {
    pub observations: usize,
    pub cloudy_removed: usize,
    pub pixels_kept: usize,
    pub pixels_dropped: Vec<Id>,
    pub parcels_dropped: Vec<Id>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub parcels: Vec<ParcelFeatureVector>,
    pub records: Vec<ParcelRecord>,
    pub schema: Arc<FeatureSchema>,
    pub stats: PipelineStats,
}

/// Resamples one pixel's date-sorted observations onto the grid, band by band.
pub fn grid_pixel(observations: &[SpectralObservation], n_bands: usize, grid: &TimeGrid) -> Result<Vec<TimeSeries>> {
    let dates: Vec<_> = observations.iter().map(|o| o.date).collect();
    (0..n_bands)
        .map(|b| {
            let values = observations.iter().map(|o| o.reflectances[b]).collect();
            interpolate_to_grid(&TimeSeries::new(dates.clone(), values)?, grid)
        })
        .collect()
}

pub fn run_pipeline(
    observations: Vec<SpectralObservation>,
    manifest: &[ManifestEntry],
    config: &PipelineConfig,
) -> Result<PipelineOutput> {
    let sensor = config.sensor.sensor();
    let layout = FeatureLayout::new(sensor, config.grid.n_steps, &config.dropped_bands)?;
    let mut stats = PipelineStats {
        observations: observations.len(),
        ..Default::default()
    };

    let mut known: BTreeMap<Id, &ManifestEntry> = BTreeMap::new();
    for entry in manifest {
        if known.insert(entry.parcel_id.clone(), entry).is_some() {
            return Err(Error::DuplicateId(entry.parcel_id.to_string()));
        }
    }

    let mut validated = Vec::with_capacity(observations.len());
    for obs in observations {
        if obs.sensor != config.sensor {
            return Err(Error::SchemaMismatch(format!(
                "observation for pixel {} is from {}, run expects {}",
                obs.pixel_id, obs.sensor, config.sensor
            )));
        }
        if !known.contains_key(&obs.parcel_id) {
            return Err(Error::Parse(format!(
                "pixel {} references parcel {} absent from the manifest",
                obs.pixel_id, obs.parcel_id
            )));
        }
        validated.push(validate_observation(obs, sensor)?);
    }

    let filtered = filter_cloudy(validated, config.cloud_threshold);
    stats.cloudy_removed = filtered.removed;
    stats.pixels_dropped = filtered.fully_clouded;

    let mut by_pixel: BTreeMap<Id, Vec<SpectralObservation>> = BTreeMap::new();
    for obs in filtered.kept {
        by_pixel.entry(obs.pixel_id.clone()).or_default().push(obs);
    }
    let pixels: Vec<(Id, Vec<SpectralObservation>)> = by_pixel
        .into_iter()
        .map(|(id, mut list)| {
            list.sort_by_key(|o| o.date);
            (id, list)
        })
        .collect();
    for (id, list) in &pixels {
        for w in list.windows(2) {
            if w[0].date == w[1].date {
                return Err(Error::DuplicateId(format!("{id}@{}", w[0].date)));
            }
            if w[0].parcel_id != w[1].parcel_id {
                return Err(Error::Parse(format!(
                    "pixel {id} assigned to parcels {} and {}",
                    w[0].parcel_id, w[1].parcel_id
                )));
            }
        }
    }
    stats.pixels_kept = pixels.len();

    let vectors = pixels
        .par_iter()
        .map(|(id, list)| {
            let bands = grid_pixel(list, sensor.band_count(), &config.grid)?;
            let v = layout.assemble(id.clone(), &bands)?;
            Ok((list[0].parcel_id.clone(), v))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut by_parcel: BTreeMap<Id, Vec<_>> = BTreeMap::new();
    for (parcel, v) in vectors {
        by_parcel.entry(parcel).or_default().push(v);
    }

    let parcel_schema = Arc::new(layout.schema().parcel_schema());
    let out_schema = if config.orchard_feature {
        let mut names = parcel_schema.names().to_vec();
        names.extend(OrchardType::ALL.iter().map(|o| format!("orchard={o}")));
        Arc::new(FeatureSchema::new(names))
    } else {
        parcel_schema.clone()
    };

    let mut parcels = Vec::with_capacity(manifest.len());
    let mut records = Vec::with_capacity(manifest.len());
    for entry in manifest {
        let Some(pixel_vectors) = by_parcel.get(&entry.parcel_id) else {
            warn!("parcel {} has no clear pixels; dropped", entry.parcel_id);
            stats.parcels_dropped.push(entry.parcel_id.clone());
            continue;
        };
        let record = ParcelRecord::new(
            entry.parcel_id.clone(),
            pixel_vectors.iter().map(|v| v.pixel_id.clone()).collect(),
            entry.orchard_type,
            entry.label,
        )?;
        let mut pv = aggregate_parcel_with(pixel_vectors, &record, &parcel_schema)?;
        if config.orchard_feature {
            pv.values
                .extend(OrchardType::ALL.iter().map(|&o| f64::from(u8::from(o == entry.orchard_type))));
            pv.schema = out_schema.clone();
        }
        parcels.push(pv);
        records.push(record);
    }
    info!(
        "featurized {} parcels from {} pixels ({} cloudy observations removed)",
        parcels.len(),
        stats.pixels_kept,
        stats.cloudy_removed
    );
    Ok(PipelineOutput {
        parcels,
        records,
        schema: out_schema,
        stats,
    })
}
