//! Domain vocabulary shared by every stage: sensors and their band
//! registries, weed-management classes, orchard types, raw observations,
//! time series and parcel records.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cheaply clonable identifier for pixels and parcels.
pub type Id = Arc<str>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BandDescriptor {
    pub code: &'static str,
    pub name: &'static str,
    pub index: usize,
}

const fn band(code: &'static str, name: &'static str, index: usize) -> BandDescriptor {
    BandDescriptor { code, name, index }
}

static S2_BANDS: [BandDescriptor; 13] = [
    band("B01", "Coastal Aerosol", 0),
    band("B02", "Blue", 1),
    band("B03", "Green", 2),
    band("B04", "Red", 3),
    band("B05", "Red Edge 1", 4),
    band("B06", "Red Edge 2", 5),
    band("B07", "Red Edge 3", 6),
    band("B08", "Near-Infrared (NIR)", 7),
    band("B8A", "Narrow Near-Infrared (Narrow NIR)", 8),
    band("B09", "Water Vapour", 9),
    band("B10", "Shortwave Infrared", 10),
    band("B11", "Shortwave Infrared 1 (SWIR1)", 11),
    band("B12", "Shortwave Infrared 2 (SWIR2)", 12),
];

static PS8B_BANDS: [BandDescriptor; 8] = [
    band("B1", "Coastal Blue", 0),
    band("B2", "Blue", 1),
    band("B3", "Green I", 2),
    band("B4", "Green", 3),
    band("B5", "Yellow", 4),
    band("B6", "Red", 5),
    band("B7", "Red Edge", 6),
    band("B8", "Near Infrared (NIR)", 7),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorId {
    S2,
    Ps8b,
}

impl SensorId {
    pub const ALL: [SensorId; 2] = [SensorId::S2, SensorId::Ps8b];

    pub fn sensor(self) -> &'static Sensor {
        match self {
            SensorId::S2 => &S2,
            SensorId::Ps8b => &PS8B,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SensorId::S2 => "s2",
            SensorId::Ps8b => "ps8b",
        }
    }
}

impl fmt::Display for SensorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SensorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "s2" | "sentinel-2" | "sentinel2" => Ok(SensorId::S2),
            "ps8b" | "ps" | "ps-8b" | "planetscope" => Ok(SensorId::Ps8b),
            _ => Err(Error::UnknownSensor(s.to_string())),
        }
    }
}

/// A sensor's ordered band registry plus the bands feeding NDVI.
#[derive(Debug)]
pub struct Sensor {
    pub id: SensorId,
    pub bands: &'static [BandDescriptor],
    nir_code: &'static str,
    red_code: &'static str,
}

static S2: Sensor = Sensor {
    id: SensorId::S2,
    bands: &S2_BANDS,
    nir_code: "B08",
    red_code: "B04",
};

static PS8B: Sensor = Sensor {
    id: SensorId::Ps8b,
    bands: &PS8B_BANDS,
    nir_code: "B8",
    red_code: "B6",
};

impl Sensor {
    /// Looks a sensor up by its textual id (`s2`, `ps8b`).
    pub fn by_name(name: &str) -> Result<&'static Sensor> {
        name.parse::<SensorId>().map(SensorId::sensor)
    }

    pub fn band_count(&self) -> usize {
        self.bands.len()
    }

    pub fn band_index(&self, code: &str) -> Option<usize> {
        self.bands.iter().position(|b| b.code == code)
    }

    pub fn band_code(&self, index: usize) -> Option<&'static str> {
        self.bands.get(index).map(|b| b.code)
    }

    pub fn codes(&self) -> impl Iterator<Item = &'static str> {
        self.bands.iter().map(|b| b.code)
    }

    /// Registry positions of the (NIR, red) bands used for NDVI.
    pub fn ndvi_pair(&self) -> (usize, usize) {
        let nir = self.band_index(self.nir_code).expect("nir band registered");
        let red = self.band_index(self.red_code).expect("red band registered");
        (nir, red)
    }

    /// Finds the sensor whose registry codes equal `codes` exactly.
    pub fn from_band_codes<S: AsRef<str>>(codes: &[S]) -> Option<&'static Sensor> {
        SensorId::ALL.iter().map(|id| id.sensor()).find(|s| {
            s.band_count() == codes.len() && s.codes().zip(codes).all(|(a, b)| a == b.as_ref())
        })
    }
}

/// (nir_index, red_index) for a sensor named by its textual id.
pub fn ndvi_band_pair(sensor: &str) -> Result<(usize, usize)> {
    Sensor::by_name(sensor).map(Sensor::ndvi_pair)
}

/// Weed-management practice. Declaration order is the canonical axis order
/// of every confusion matrix and report.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum WeedClass {
    Mowing,
    Tillage,
    ChemicalSpraying,
    NoPractice,
}

impl WeedClass {
    pub const COUNT: usize = 4;
    pub const ALL: [WeedClass; 4] = [
        WeedClass::Mowing,
        WeedClass::Tillage,
        WeedClass::ChemicalSpraying,
        WeedClass::NoPractice,
    ];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(i: usize) -> Option<WeedClass> {
        Self::ALL.get(i).copied()
    }

    /// Two-letter abbreviation used in report tables.
    pub fn abbrev(self) -> &'static str {
        match self {
            WeedClass::Mowing => "MO",
            WeedClass::Tillage => "TL",
            WeedClass::ChemicalSpraying => "CS",
            WeedClass::NoPractice => "NP",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            WeedClass::Mowing => "mowing",
            WeedClass::Tillage => "tillage",
            WeedClass::ChemicalSpraying => "chemical_spraying",
            WeedClass::NoPractice => "no_practice",
        }
    }
}

impl fmt::Display for WeedClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WeedClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .trim()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        match norm.as_str() {
            "mowing" | "mo" => Ok(WeedClass::Mowing),
            "tillage" | "tl" => Ok(WeedClass::Tillage),
            "chemicalspraying" | "cs" => Ok(WeedClass::ChemicalSpraying),
            "nopractice" | "np" => Ok(WeedClass::NoPractice),
            _ => Err(Error::UnknownClass(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrchardType {
    Apricots,
    Peaches,
    Almonds,
    Pears,
    Olives,
    Pistachios,
    Other,
}

impl OrchardType {
    pub const ALL: [OrchardType; 7] = [
        OrchardType::Apricots,
        OrchardType::Peaches,
        OrchardType::Almonds,
        OrchardType::Pears,
        OrchardType::Olives,
        OrchardType::Pistachios,
        OrchardType::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OrchardType::Apricots => "apricots",
            OrchardType::Peaches => "peaches",
            OrchardType::Almonds => "almonds",
            OrchardType::Pears => "pears",
            OrchardType::Olives => "olives",
            OrchardType::Pistachios => "pistachios",
            OrchardType::Other => "other",
        }
    }
}

impl fmt::Display for OrchardType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OrchardType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Ok(OrchardType::ALL
            .into_iter()
            .find(|o| o.as_str() == s || o.as_str().trim_end_matches('s') == s)
            .unwrap_or(OrchardType::Other))
    }
}

/// One pixel, one date, one sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralObservation {
    pub pixel_id: Id,
    pub parcel_id: Id,
    pub date: NaiveDate,
    pub sensor: SensorId,
    /// Surface reflectance as a fraction of unity, in registry band order.
    pub reflectances: Vec<f64>,
    pub cloud_fraction: f64,
}

/// Returns the observation unchanged iff it satisfies the sensor's invariants.
pub fn validate_observation(
    obs: SpectralObservation,
    sensor: &Sensor,
) -> Result<SpectralObservation> {
    let pixel_id = || obs.pixel_id.to_string();
    if obs.reflectances.len() != sensor.band_count() {
        return Err(Error::BandCountMismatch {
            pixel_id: pixel_id(),
            date: obs.date,
            expected: sensor.band_count(),
            found: obs.reflectances.len(),
        });
    }
    for (i, &value) in obs.reflectances.iter().enumerate() {
        let band = sensor.band_code(i).unwrap_or("?");
        if !value.is_finite() {
            return Err(Error::NonFiniteValue {
                pixel_id: pixel_id(),
                date: obs.date,
                field: band.to_string(),
            });
        }
        if value < 0.0 {
            return Err(Error::NegativeReflectance {
                pixel_id: pixel_id(),
                date: obs.date,
                band: band.to_string(),
                value,
            });
        }
    }
    if !obs.cloud_fraction.is_finite() {
        return Err(Error::NonFiniteValue {
            pixel_id: pixel_id(),
            date: obs.date,
            field: "cloud_fraction".to_string(),
        });
    }
    if !(0.0..=1.0).contains(&obs.cloud_fraction) {
        return Err(Error::CloudFractionOutOfRange {
            pixel_id: pixel_id(),
            date: obs.date,
            value: obs.cloud_fraction,
        });
    }
    Ok(obs)
}

/// Values at strictly ascending calendar dates.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::LengthMismatch {
                left: dates.len(),
                right: values.len(),
            });
        }
        if let Some(i) = dates.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::NonAscendingDates(i + 1));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("time series"));
        }
        Ok(TimeSeries { dates, values })
    }

    pub fn empty() -> Self {
        TimeSeries {
            dates: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A field: the pixels it covers plus its survey metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ParcelRecord {
    pub parcel_id: Id,
    pub pixel_ids: BTreeSet<Id>,
    pub orchard_type: OrchardType,
    pub label: Option<WeedClass>,
}

impl ParcelRecord {
    pub fn new(
        parcel_id: impl Into<Id>,
        pixel_ids: BTreeSet<Id>,
        orchard_type: OrchardType,
        label: Option<WeedClass>,
    ) -> Result<Self> {
        let parcel_id = parcel_id.into();
        if pixel_ids.is_empty() {
            return Err(Error::EmptyParcel(parcel_id.to_string()));
        }
        Ok(ParcelRecord {
            parcel_id,
            pixel_ids,
            orchard_type,
            label,
        })
    }
}

/// Rejects datasets that reuse a parcel id.
pub fn check_unique_parcels(parcels: &[ParcelRecord]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for p in parcels {
        if !seen.insert(p.parcel_id.clone()) {
            return Err(Error::DuplicateId(p.parcel_id.to_string()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(values: Vec<f64>, cloud: f64) -> SpectralObservation {
        SpectralObservation {
            pixel_id: "px1".into(),
            parcel_id: "f1".into(),
            date: NaiveDate::from_ymd_opt(2024, 5, 1).unwrap(),
            sensor: SensorId::S2,
            reflectances: values,
            cloud_fraction: cloud,
        }
    }

    #[test]
    fn registries_follow_band_table() {
        let s2 = SensorId::S2.sensor();
        assert_eq!(s2.band_count(), 13);
        assert_eq!(s2.bands[0].name, "Coastal Aerosol");
        assert_eq!(s2.bands[12].code, "B12");
        let ps = SensorId::Ps8b.sensor();
        assert_eq!(ps.band_count(), 8);
        assert_eq!(ps.bands[0].name, "Coastal Blue");
        assert_eq!(ps.bands[7].name, "Near Infrared (NIR)");
        for s in SensorId::ALL.map(SensorId::sensor) {
            for (i, b) in s.bands.iter().enumerate() {
                assert_eq!(b.index, i);
                assert_eq!(s.band_index(b.code), Some(i));
                assert_eq!(s.band_code(i), Some(b.code));
            }
        }
    }

    #[test]
    fn ndvi_pairs() {
        // B08 and B04 sit at 0-based positions 7 and 3 of the 13 S2 bands;
        // Band 8 and Band 6 at positions 7 and 5 of the PS list.
        assert_eq!(ndvi_band_pair("s2").unwrap(), (7, 3));
        assert_eq!(ndvi_band_pair("ps8b").unwrap(), (7, 5));
        assert!(matches!(
            ndvi_band_pair("landsat8"),
            Err(Error::UnknownSensor(_))
        ));
    }

    #[test]
    fn validation_paths() {
        let s2 = SensorId::S2.sensor();
        let ok = obs(vec![0.1; 13], 0.0);
        assert_eq!(validate_observation(ok.clone(), s2).unwrap(), ok);
        assert!(matches!(
            validate_observation(obs(vec![0.1; 8], 0.0), s2),
            Err(Error::BandCountMismatch {
                expected: 13,
                found: 8,
                ..
            })
        ));
        assert!(matches!(
            validate_observation(obs(vec![0.1; 13], 1.3), s2),
            Err(Error::CloudFractionOutOfRange { .. })
        ));
        let mut neg = vec![0.1; 13];
        neg[4] = -0.01;
        let err = validate_observation(obs(neg, 0.0), s2).unwrap_err();
        assert!(err.to_string().contains("B05"), "{err}");
        let mut nan = vec![0.1; 13];
        nan[0] = f64::NAN;
        assert!(matches!(
            validate_observation(obs(nan, 0.0), s2),
            Err(Error::NonFiniteValue { .. })
        ));
    }

    #[test]
    fn class_order_and_names() {
        for (i, c) in WeedClass::ALL.iter().enumerate() {
            assert_eq!(c.ordinal(), i);
            assert_eq!(c.as_str().parse::<WeedClass>().unwrap(), *c);
            assert_eq!(c.abbrev().parse::<WeedClass>().unwrap(), *c);
            let json = serde_json::to_string(c).unwrap();
            assert_eq!(serde_json::from_str::<WeedClass>(&json).unwrap(), *c);
        }
        assert_eq!(
            "Chemical-spraying".parse::<WeedClass>().unwrap(),
            WeedClass::ChemicalSpraying
        );
        assert_eq!("No practice".parse::<WeedClass>().unwrap(), WeedClass::NoPractice);
    }

    #[test]
    fn time_series_rejects_unsorted_dates() {
        let d = |day| NaiveDate::from_ymd_opt(2024, 5, day).unwrap();
        assert!(TimeSeries::new(vec![d(1), d(3)], vec![0.0, 1.0]).is_ok());
        assert!(matches!(
            TimeSeries::new(vec![d(3), d(3)], vec![0.0, 1.0]),
            Err(Error::NonAscendingDates(1))
        ));
        assert!(TimeSeries::new(vec![d(1)], vec![]).is_err());
    }

    #[test]
    fn parcel_requires_pixels() {
        assert!(ParcelRecord::new("f1", BTreeSet::new(), OrchardType::Olives, None).is_err());
        let px: BTreeSet<Id> = ["a".into()].into_iter().collect();
        let a = ParcelRecord::new("f1", px.clone(), OrchardType::Olives, None).unwrap();
        assert!(check_unique_parcels(&[a.clone(), a]).is_err());
    }
}
