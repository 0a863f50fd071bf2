//! Per-pixel temporal features (bands, NDVI, first differences, rates of
//! change) and their aggregation into one vector per parcel.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{Id, ParcelRecord, Sensor, TimeSeries, WeedClass};
use crate::error::{Error, Result};

pub const NDVI_SOURCE: &str = "NDVI";
pub const PARCEL_STATS: [&str; 3] = ["mean", "median", "std"];

/// Normalized difference of NIR and red reflectance. A zero denominator
/// yields 0.
pub fn ndvi(nir: f64, red: f64) -> Result<f64> {
    if !nir.is_finite() || !red.is_finite() {
        return Err(Error::NonFiniteInput("ndvi"));
    }
    let sum = nir + red;
    if sum == 0.0 {
        return Ok(0.0);
    }
    Ok((nir - red) / sum)
}

/// `x[k+1] - x[k]`, dated at the later observation of each pair.
pub fn first_difference(series: &TimeSeries) -> TimeSeries {
    let (dates, values) = (series.dates(), series.values());
    if values.len() < 2 {
        return TimeSeries::empty();
    }
    let diffs = values.windows(2).map(|w| w[1] - w[0]).collect();
    TimeSeries::new(dates[1..].to_vec(), diffs).expect("dates inherited from a valid series")
}

/// `(x[k+1] - x[k]) / (t[k+1] - t[k])` in value per day.
pub fn rate_of_change(series: &TimeSeries) -> Result<TimeSeries> {
    let (dates, values) = (series.dates(), series.values());
    if values.len() < 2 {
        return Ok(TimeSeries::empty());
    }
    let mut rates = Vec::with_capacity(values.len() - 1);
    for k in 0..values.len() - 1 {
        let days = (dates[k + 1] - dates[k]).num_days();
        if days <= 0 {
            return Err(Error::NonAscendingDates(k + 1));
        }
        rates.push((values[k + 1] - values[k]) / days as f64);
    }
    TimeSeries::new(dates[1..].to_vec(), rates)
}

/// Ordered feature names shared by every vector of one run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    names: Vec<String>,
}

impl FeatureSchema {
    pub fn new(names: Vec<String>) -> Self {
        FeatureSchema { names }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Hex SHA-256 over the newline-joined names.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for n in &self.names {
            h.update(n.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Parcel-level schema: each pixel feature expanded into its statistics.
    pub fn parcel_schema(&self) -> FeatureSchema {
        let names = self
            .names
            .iter()
            .flat_map(|n| PARCEL_STATS.iter().map(move |s| format!("{n}:{s}")))
            .collect();
        FeatureSchema { names }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PixelFeatureVector {
    pub pixel_id: Id,
    pub schema: Arc<FeatureSchema>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParcelFeatureVector {
    pub parcel_id: Id,
    pub label: Option<WeedClass>,
    pub schema: Arc<FeatureSchema>,
    pub values: Vec<f64>,
}

/// Which bands enter the pixel feature vector and how long the grid is.
/// NDVI is always computed from the sensor's NIR/red pair, even when those
/// bands are dropped as features.
#[derive(Debug, Clone)]
pub struct FeatureLayout {
    sensor: &'static Sensor,
    kept_bands: Vec<usize>,
    n_steps: usize,
    schema: Arc<FeatureSchema>,
}

impl FeatureLayout {
    pub fn new(sensor: &'static Sensor, n_steps: usize, dropped: &[String]) -> Result<Self> {
        for code in dropped {
            if sensor.band_index(code).is_none() {
                return Err(Error::UnknownBand(code.clone()));
            }
        }
        let kept_bands: Vec<usize> = sensor
            .bands
            .iter()
            .filter(|b| !dropped.iter().any(|d| d == b.code))
            .map(|b| b.index)
            .collect();
        let mut names = Vec::new();
        let sources = kept_bands
            .iter()
            .map(|&i| sensor.bands[i].code)
            .chain(std::iter::once(NDVI_SOURCE));
        for src in sources {
            names.extend((0..n_steps).map(|k| format!("{src}@{k}")));
            names.extend((0..n_steps.saturating_sub(1)).map(|k| format!("{src}_diff@{k}")));
            names.extend((0..n_steps.saturating_sub(1)).map(|k| format!("{src}_roc@{k}")));
        }
        Ok(FeatureLayout {
            sensor,
            kept_bands,
            n_steps,
            schema: Arc::new(FeatureSchema::new(names)),
        })
    }

    pub fn sensor(&self) -> &'static Sensor {
        self.sensor
    }

    pub fn schema(&self) -> &Arc<FeatureSchema> {
        &self.schema
    }

    /// Builds one pixel's vector from its gridded band series (registry order).
    pub fn assemble(&self, pixel_id: Id, bands: &[TimeSeries]) -> Result<PixelFeatureVector> {
        if bands.len() != self.sensor.band_count() {
            return Err(Error::GridMismatch(format!(
                "expected {} band series, got {}",
                self.sensor.band_count(),
                bands.len()
            )));
        }
        let dates = bands[0].dates();
        if dates.len() != self.n_steps {
            return Err(Error::GridMismatch(format!(
                "expected {} grid steps, got {}",
                self.n_steps,
                dates.len()
            )));
        }
        if let Some(b) = bands.iter().position(|s| s.dates() != dates) {
            return Err(Error::GridMismatch(format!(
                "band {} dated differently",
                self.sensor.bands[b].code
            )));
        }
        let (nir, red) = self.sensor.ndvi_pair();
        let ndvi_values = bands[nir]
            .values()
            .iter()
            .zip(bands[red].values())
            .map(|(&n, &r)| ndvi(n, r))
            .collect::<Result<Vec<_>>>()?;
        let ndvi_series = TimeSeries::new(dates.to_vec(), ndvi_values)?;

        let mut values = Vec::with_capacity(self.schema.len());
        let sources = self
            .kept_bands
            .iter()
            .map(|&i| &bands[i])
            .chain(std::iter::once(&ndvi_series));
        for series in sources {
            values.extend_from_slice(series.values());
            values.extend_from_slice(first_difference(series).values());
            values.extend_from_slice(rate_of_change(series)?.values());
        }
        debug_assert_eq!(values.len(), self.schema.len());
        Ok(PixelFeatureVector {
            pixel_id,
            schema: self.schema.clone(),
            values,
        })
    }
}

/// Convenience wrapper using every band of the sensor.
pub fn assemble_pixel_features(
    pixel_id: Id,
    bands: &[TimeSeries],
    sensor: &'static Sensor,
) -> Result<PixelFeatureVector> {
    let n_steps = bands.first().map_or(0, TimeSeries::len);
    FeatureLayout::new(sensor, n_steps, &[])?.assemble(pixel_id, bands)
}

/// Mean, median and population standard deviation of every pixel feature.
pub fn aggregate_parcel(
    pixels: &[PixelFeatureVector],
    parcel: &ParcelRecord,
) -> Result<ParcelFeatureVector> {
    let first = pixels
        .first()
        .ok_or_else(|| Error::EmptyParcel(parcel.parcel_id.to_string()))?;
    let schema = Arc::new(first.schema.parcel_schema());
    aggregate_parcel_with(pixels, parcel, &schema)
}

/// As [`aggregate_parcel`], reusing a precomputed parcel schema.
pub fn aggregate_parcel_with(
    pixels: &[PixelFeatureVector],
    parcel: &ParcelRecord,
    parcel_schema: &Arc<FeatureSchema>,
) -> Result<ParcelFeatureVector> {
    let first = pixels
        .first()
        .ok_or_else(|| Error::EmptyParcel(parcel.parcel_id.to_string()))?;
    let width = first.values.len();
    if parcel_schema.len() != width * PARCEL_STATS.len() {
        return Err(Error::SchemaMismatch(format!(
            "parcel schema has {} columns for {} pixel features",
            parcel_schema.len(),
            width
        )));
    }
    for p in pixels {
        if !Arc::ptr_eq(&p.schema, &first.schema) && p.schema != first.schema {
            return Err(Error::SchemaMismatch(format!(
                "pixel {} differs from pixel {}",
                p.pixel_id, first.pixel_id
            )));
        }
        if !parcel.pixel_ids.contains(&p.pixel_id) {
            return Err(Error::SchemaMismatch(format!(
                "pixel {} is not part of parcel {}",
                p.pixel_id, parcel.parcel_id
            )));
        }
    }

    let n = pixels.len() as f64;
    let mut column = Vec::with_capacity(pixels.len());
    let mut values = Vec::with_capacity(width * PARCEL_STATS.len());
    for j in 0..width {
        column.clear();
        column.extend(pixels.iter().map(|p| p.values[j]));
        // sorted summation keeps the statistics independent of pixel order
        column.sort_by(f64::total_cmp);
        let mean = column.iter().sum::<f64>() / n;
        let mid = column.len() / 2;
        let median = if column.len() % 2 == 0 {
            (column[mid - 1] + column[mid]) / 2.0
        } else {
            column[mid]
        };
        let var = column.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        values.extend([mean, median, var.sqrt()]);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("parcel aggregation"));
    }
    Ok(ParcelFeatureVector {
        parcel_id: parcel.parcel_id.clone(),
        label: parcel.label,
        schema: parcel_schema.clone(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{OrchardType, SensorId};
    use chrono::{Days, NaiveDate};
    use proptest::prelude::*;

    fn day(n: u64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 1, 1).unwrap() + Days::new(n)
    }

    fn series(days: &[u64], values: &[f64]) -> TimeSeries {
        TimeSeries::new(days.iter().map(|&d| day(d)).collect(), values.to_vec()).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn ndvi_examples() {
        assert_eq!(ndvi(0.5, 0.5).unwrap(), 0.0);
        assert!(close(ndvi(0.6, 0.2).unwrap(), 0.5));
        assert_eq!(ndvi(0.0, 0.0).unwrap(), 0.0);
        assert!(matches!(ndvi(f64::NAN, 0.1), Err(Error::NonFiniteInput(_))));
    }

    #[test]
    fn difference_examples() {
        assert_eq!(first_difference(&series(&[0, 1, 2], &[1.0, 1.0, 1.0])).values(), &[0.0, 0.0]);
        let d = first_difference(&series(&[0, 10, 20], &[0.2, 0.5, 0.4]));
        assert!(close(d.values()[0], 0.3) && close(d.values()[1], -0.1));
        assert_eq!(d.dates(), &[day(10), day(20)]);
        assert!(first_difference(&series(&[3], &[0.4])).is_empty());
    }

    #[test]
    fn rate_examples() {
        let r = rate_of_change(&series(&[100, 110], &[0.2, 0.5])).unwrap();
        assert!(close(r.values()[0], 0.03));
        let flat = rate_of_change(&series(&[0, 3, 9], &[0.7, 0.7, 0.7])).unwrap();
        assert_eq!(flat.values(), &[0.0, 0.0]);
    }

    fn flat_bands(sensor: &Sensor, n: usize, v: f64) -> Vec<TimeSeries> {
        let days: Vec<u64> = (0..n as u64).map(|k| k * 10).collect();
        (0..sensor.band_count()).map(|_| series(&days, &vec![v; n])).collect()
    }

    #[test]
    fn schema_lengths() {
        let s2 = SensorId::S2.sensor();
        let pv = assemble_pixel_features("a".into(), &flat_bands(s2, 13, 0.1), s2).unwrap();
        assert_eq!(pv.values.len(), 518);
        assert_eq!(pv.schema.len(), 518);
        let ps = SensorId::Ps8b.sensor();
        let layout = FeatureLayout::new(ps, 13, &[]).unwrap();
        let a = layout.assemble("a".into(), &flat_bands(ps, 13, 0.1)).unwrap();
        let b = layout.assemble("b".into(), &flat_bands(ps, 13, 0.3)).unwrap();
        assert_eq!(a.values.len(), 333);
        assert_eq!(a.schema, b.schema);
        assert_eq!(a.schema.names()[0], "B1@0");
        assert_eq!(a.schema.names()[13], "B1_diff@0");
        assert_eq!(a.schema.names()[25], "B1_roc@0");
        assert_eq!(a.schema.names()[8 * 37], "NDVI@0");
    }

    #[test]
    fn dropped_bands_shrink_schema_but_keep_ndvi() {
        let ps = SensorId::Ps8b.sensor();
        let layout = FeatureLayout::new(ps, 13, &["B6".to_string(), "B8".to_string()]).unwrap();
        assert_eq!(layout.schema().len(), 7 * 37);
        assert!(FeatureLayout::new(ps, 13, &["B04".to_string()]).is_err());
    }

    #[test]
    fn grid_mismatch_detected() {
        let ps = SensorId::Ps8b.sensor();
        let layout = FeatureLayout::new(ps, 13, &[]).unwrap();
        let mut bands = flat_bands(ps, 13, 0.1);
        bands[2] = series(&(0..13).map(|k| k * 10 + 1).collect::<Vec<_>>(), &[0.1; 13]);
        assert!(matches!(layout.assemble("a".into(), &bands), Err(Error::GridMismatch(_))));
        assert!(matches!(
            layout.assemble("a".into(), &flat_bands(ps, 12, 0.1)),
            Err(Error::GridMismatch(_))
        ));
    }

    fn pixel(id: &str, schema: &Arc<FeatureSchema>, values: Vec<f64>) -> PixelFeatureVector {
        PixelFeatureVector {
            pixel_id: id.into(),
            schema: schema.clone(),
            values,
        }
    }

    fn parcel_of(ids: &[&str]) -> ParcelRecord {
        ParcelRecord::new(
            "f1",
            ids.iter().map(|&s| Id::from(s)).collect(),
            OrchardType::Almonds,
            Some(WeedClass::Tillage),
        )
        .unwrap()
    }

    #[test]
    fn aggregation_examples() {
        let schema = Arc::new(FeatureSchema::new(vec!["x".into()]));
        let p = aggregate_parcel(
            &[pixel("a", &schema, vec![0.7]), pixel("b", &schema, vec![0.7])],
            &parcel_of(&["a", "b"]),
        )
        .unwrap();
        assert_eq!(p.values, vec![0.7, 0.7, 0.0]);
        assert_eq!(p.schema.names(), &["x:mean", "x:median", "x:std"]);
        assert_eq!(p.label, Some(WeedClass::Tillage));

        let p = aggregate_parcel(
            &[pixel("a", &schema, vec![0.2]), pixel("b", &schema, vec![0.6])],
            &parcel_of(&["a", "b"]),
        )
        .unwrap();
        assert!(close(p.values[0], 0.4) && close(p.values[1], 0.4) && close(p.values[2], 0.2));

        let p = aggregate_parcel(&[pixel("a", &schema, vec![0.3])], &parcel_of(&["a"])).unwrap();
        assert_eq!(p.values, vec![0.3, 0.3, 0.0]);

        assert!(matches!(
            aggregate_parcel(&[], &parcel_of(&["a"])),
            Err(Error::EmptyParcel(_))
        ));
        let other = Arc::new(FeatureSchema::new(vec!["y".into()]));
        assert!(matches!(
            aggregate_parcel(
                &[pixel("a", &schema, vec![0.1]), pixel("b", &other, vec![0.1])],
                &parcel_of(&["a", "b"])
            ),
            Err(Error::SchemaMismatch(_))
        ));
    }

    proptest! {
        #[test]
        fn ndvi_bounded_and_scale_invariant(nir in 0.0f64..2.0, red in 0.0f64..2.0, c in 0.01f64..100.0) {
            let v = ndvi(nir, red).unwrap();
            prop_assert!((-1.0..=1.0).contains(&v));
            prop_assert!((ndvi(c * nir, c * red).unwrap() - v).abs() < 1e-12);
        }

        #[test]
        fn difference_inverts_cumulative_sum(incs in prop::collection::vec(-1000i32..1000, 1..30)) {
            // integer-valued increments keep the cumulative sums exact
            let mut acc = 0.0;
            let mut vals = vec![0.0];
            for &i in &incs {
                acc += i as f64;
                vals.push(acc);
            }
            let days: Vec<u64> = (0..vals.len() as u64).collect();
            let d = first_difference(&series(&days, &vals));
            let expected: Vec<f64> = incs.iter().map(|&i| i as f64).collect();
            prop_assert_eq!(d.values(), expected.as_slice());
        }

        #[test]
        fn aggregation_is_order_free_and_median_bounded(
            rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..12),
            seed in any::<u64>(),
        ) {
            let schema = Arc::new(FeatureSchema::new(vec!["a".into(), "b".into(), "c".into()]));
            let ids: Vec<String> = (0..rows.len()).map(|i| format!("p{i}")).collect();
            let pixels: Vec<_> = rows.iter().zip(&ids).map(|(r, id)| pixel(id, &schema, r.clone())).collect();
            let parcel = parcel_of(&ids.iter().map(String::as_str).collect::<Vec<_>>());
            let base = aggregate_parcel(&pixels, &parcel).unwrap();

            let mut shuffled = pixels.clone();
            let n = shuffled.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (s >> 33) as usize % (i + 1));
            }
            prop_assert_eq!(&aggregate_parcel(&shuffled, &parcel).unwrap().values, &base.values);

            for j in 0..3 {
                let lo = rows.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
                let hi = rows.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
                let median = base.values[3 * j + 1];
                prop_assert!(lo <= median && median <= hi);
            }
        }
    }
}
