//! Observation, parcel-manifest, feature and prediction files.
//!
//! Observation files are CSV preceded by `# key=value` comment lines. The
//! `scale` comment is required and divides every stored band value; an
//! optional `sensor` comment must agree with the band columns.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use weedmap_core::features::{FeatureSchema, ParcelFeatureVector};
use weedmap_core::pipeline::ManifestEntry;
use weedmap_core::{Id, Sensor, SensorId, SpectralObservation, WeedClass};

use crate::error::{CliError, Result};

pub const DEFAULT_SCALE: f64 = 10000.0;
const FIXED_COLUMNS: [&str; 4] = ["pixel_id", "parcel_id", "date", "cloud_fraction"];
const MANIFEST_COLUMNS: [&str; 3] = ["parcel_id", "orchard_type", "label"];

#[derive(Debug, Clone)]
pub struct ObservationFile {
    pub sensor: SensorId,
    pub scale: f64,
    pub observations: Vec<SpectralObservation>,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::input(path, format!("{other:?}")),
    }
}

pub fn read_observations(path: &Path) -> Result<ObservationFile> {
    let text = read_text(path)?;
    let mut scale = None;
    let mut declared = None;
    let mut body_start = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim();
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some((k, v)) = comment.split_once('=') {
                match k.trim() {
                    "scale" => {
                        let s: f64 = v.trim().parse().map_err(|_| CliError::input(path, format!("scale `{}`", v.trim())))?;
                        if !(s > 0.0 && s.is_finite()) {
                            return Err(CliError::input(path, format!("scale must be positive, got {s}")));
                        }
                        scale = Some(s);
                    }
                    "sensor" => {
                        declared = Some(v.trim().parse::<SensorId>().map_err(|_| {
                            CliError::input(path, format!("unknown sensor `{}`", v.trim()))
                        })?)
                    }
                    _ => {}
                }
            }
        } else if !trimmed.is_empty() {
            break;
        }
        body_start += line.len();
    }
    let scale = scale.ok_or_else(|| CliError::input(path, "missing `# scale=` header line"))?;

    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(text[body_start..].as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.len() < FIXED_COLUMNS.len() || header[..4] != FIXED_COLUMNS {
        return Err(CliError::input(
            path,
            format!("header must start with {}", FIXED_COLUMNS.join(",")),
        ));
    }
    let codes = &header[4..];
    let sensor = Sensor::from_band_codes(codes)
        .ok_or_else(|| CliError::input(path, format!("band columns {} match no known sensor", codes.join(","))))?;
    if let Some(d) = declared {
        if d != sensor.id {
            return Err(CliError::input(
                path,
                format!("declared sensor {d} but band columns belong to {}", sensor.id),
            ));
        }
    }

    let skipped = text[..body_start].lines().count() as u64;
    let mut observations = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = skipped + record.position().map_or(0, |p| p.line());
        let bad = |what: &str, v: &str| CliError::input(path, format!("line {line}: {what} `{v}`"));
        if record.len() < 4 {
            return Err(CliError::input(path, format!("line {line}: too few fields")));
        }
        let date = NaiveDate::parse_from_str(record[2].trim(), "%Y-%m-%d").map_err(|_| bad("date", &record[2]))?;
        let cloud_fraction: f64 = record[3].trim().parse().map_err(|_| bad("cloud_fraction", &record[3]))?;
        let reflectances = record
            .iter()
            .skip(4)
            .map(|v| v.trim().parse::<f64>().map(|x| x / scale).map_err(|_| bad("band value", v)))
            .collect::<Result<Vec<f64>>>()?;
        observations.push(SpectralObservation {
            pixel_id: Id::from(record[0].trim()),
            parcel_id: Id::from(record[1].trim()),
            date,
            sensor: sensor.id,
            reflectances,
            cloud_fraction,
        });
    }
    Ok(ObservationFile {
        sensor: sensor.id,
        scale,
        observations,
    })
}

/// Band values are stored as rounded integers at `scale`; cloud fractions
/// with four decimals.
pub fn write_observations(path: &Path, sensor: SensorId, scale: f64, observations: &[SpectralObservation]) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "# scale={scale}").map_err(|e| CliError::io(path, e))?;
    writeln!(out, "# sensor={sensor}").map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = FIXED_COLUMNS.to_vec();
    header.extend(sensor.sensor().codes());
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for o in observations {
        let mut row = vec![
            o.pixel_id.to_string(),
            o.parcel_id.to_string(),
            o.date.format("%Y-%m-%d").to_string(),
            format!("{:.4}", o.cloud_fraction),
        ];
        row.extend(o.reflectances.iter().map(|r| format!("{}", (r * scale).round() as i64)));
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = read_text(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header != MANIFEST_COLUMNS {
        return Err(CliError::input(path, format!("header must be {}", MANIFEST_COLUMNS.join(","))));
    }
    let mut entries = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let label = match record[2].trim() {
            "" => None,
            s => Some(
                s.parse::<WeedClass>()
                    .map_err(|_| CliError::input(path, format!("line {line}: unknown class `{s}`")))?,
            ),
        };
        entries.push(ManifestEntry {
            parcel_id: Id::from(record[0].trim()),
            orchard_type: record[1].parse().map_err(CliError::from)?,
            label,
        });
    }
    Ok(entries)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(MANIFEST_COLUMNS).map_err(|e| csv_error(path, e))?;
    for e in entries {
        let label = e.label.map_or("", |l| l.as_str());
        w.write_record([e.parcel_id.as_ref(), e.orchard_type.as_str(), label])
            .map_err(|err| csv_error(path, err))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_features(path: &Path, schema: &FeatureSchema, rows: &[ParcelFeatureVector]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["parcel_id", "label"];
    header.extend(schema.names().iter().map(String::as_str));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for r in rows {
        let mut row = vec![r.parcel_id.to_string(), r.label.map_or(String::new(), |l| l.to_string())];
        row.extend(r.values.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub const PREDICTIONS_HEADER: [&str; 2] = ["parcel_id", "predicted_class"];

pub fn write_predictions(path: &Path, predictions: &[(Id, WeedClass)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(PREDICTIONS_HEADER).map_err(|e| csv_error(path, e))?;
    for (id, class) in predictions {
        w.write_record([id.as_ref(), class.as_str()])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}
