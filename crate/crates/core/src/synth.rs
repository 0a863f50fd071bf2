//! Synthetic labeled parcels with class-specific NDVI trajectories.
//!
//! No-practice parcels follow a smooth seasonal curve. Mowing cuts NDVI
//! abruptly and recovers within about a month; tillage collapses NDVI to
//! bare soil, brightens red and SWIR, and recovers over about two months;
//! chemical spraying produces a slow decline with partial recovery. Band
//! reflectances are back-solved from the NDVI target so that the sensor's
//! NDVI pair reproduces the curve exactly in the noiseless case.

use std::str::FromStr;

use chrono::{Days, NaiveDate};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Id, OrchardType, ParcelRecord, SensorId, SpectralObservation, WeedClass};
use crate::error::{Error, Result};
use crate::rng::stream;

/// Class counts of the reference field survey (mowing, tillage, chemical
/// spraying, no practice).
pub const REFERENCE_CLASS_COUNTS: [usize; 4] = [141, 33, 31, 27];

/// Reference orchard mix per class, columns in [`OrchardType::ALL`] order.
const ORCHARD_MIX: [[u32; 7]; 4] = [
    [29, 29, 42, 11, 27, 3, 0],
    [1, 2, 25, 0, 5, 0, 0],
    [1, 6, 18, 1, 5, 0, 0],
    [0, 2, 7, 1, 16, 1, 0],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Separation {
    High,
    Medium,
    Low,
}

impl FromStr for Separation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "high" => Ok(Separation::High),
            "medium" => Ok(Separation::Medium),
            "low" => Ok(Separation::Low),
            _ => Err(Error::Parse(format!("separation `{s}`"))),
        }
    }
}

/// Shape constants of the class curves. Times are in days, NDVI unitless,
/// brightness in reflectance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureParams {
    pub base_ndvi: f64,
    pub seasonal_gain: f64,
    pub seasonal_days: f64,
    pub mowing_drop: f64,
    pub mowing_recovery_days: f64,
    /// Share of the mowing drop still present once regrowth levels off.
    pub mowing_residual_fraction: f64,
    pub tillage_soil_ndvi: f64,
    pub tillage_recovery_days: f64,
    pub tillage_soil_brightness: f64,
    pub spraying_decline: f64,
    pub spraying_decline_days: f64,
    pub spraying_recovered_fraction: f64,
    pub spraying_recovery_days: f64,
    /// NIR + red of the vegetated surface.
    pub canopy_brightness: f64,
    /// Scale of every class's departure from the no-practice curve.
    pub amplitude: f64,
}

impl Default for SignatureParams {
    fn default() -> Self {
        SignatureParams {
            base_ndvi: 0.55,
            seasonal_gain: 0.2,
            seasonal_days: 30.0,
            mowing_drop: 0.35,
            mowing_recovery_days: 30.0,
            mowing_residual_fraction: 0.3,
            tillage_soil_ndvi: 0.15,
            tillage_recovery_days: 60.0,
            tillage_soil_brightness: 0.15,
            spraying_decline: 0.25,
            spraying_decline_days: 21.0,
            spraying_recovered_fraction: 0.2,
            spraying_recovery_days: 40.0,
            canopy_brightness: 0.5,
            amplitude: 1.0,
        }
    }
}

impl SignatureParams {
    pub fn with_separation(separation: Separation) -> Self {
        SignatureParams {
            amplitude: separation.amplitude(),
            ..Default::default()
        }
    }

    fn seasonal(&self, t: f64) -> f64 {
        self.base_ndvi + self.seasonal_gain * (1.0 - (-t.max(0.0) / self.seasonal_days).exp())
    }

    /// Fraction of bare soil exposed by tillage at time `t`.
    fn soil_exposure(&self, class: WeedClass, event_day: f64, t: f64) -> f64 {
        let dt = t - event_day;
        if class != WeedClass::Tillage || dt < 0.0 || dt >= self.tillage_recovery_days {
            return 0.0;
        }
        self.amplitude * (1.0 - dt / self.tillage_recovery_days)
    }

    /// Canonical NDVI at day offset `t` for a practice applied on `event_day`.
    pub fn ndvi(&self, class: WeedClass, event_day: f64, t: f64) -> f64 {
        let base = self.seasonal(t);
        let dt = t - event_day;
        let departure = match class {
            WeedClass::NoPractice => 0.0,
            _ if dt < 0.0 => 0.0,
            WeedClass::Mowing => {
                let recovered = (dt / self.mowing_recovery_days).min(1.0);
                self.mowing_drop * (1.0 - (1.0 - self.mowing_residual_fraction) * recovered)
            }
            WeedClass::Tillage => {
                if dt < self.tillage_recovery_days {
                    (base - self.tillage_soil_ndvi) * (1.0 - dt / self.tillage_recovery_days)
                } else {
                    0.0
                }
            }
            WeedClass::ChemicalSpraying => {
                let d = self.spraying_decline;
                if dt <= self.spraying_decline_days {
                    d * dt / self.spraying_decline_days
                } else {
                    let r = ((dt - self.spraying_decline_days) / self.spraying_recovery_days).min(1.0);
                    d * (1.0 - self.spraying_recovered_fraction * r)
                }
            }
        };
        base - self.amplitude * departure
    }
}

impl Separation {
    pub fn as_str(self) -> &'static str {
        match self {
            Separation::High => "high",
            Separation::Medium => "medium",
            Separation::Low => "low",
        }
    }

    pub fn amplitude(self) -> f64 {
        match self {
            Separation::High => 1.0,
            Separation::Medium => 0.5,
            Separation::Low => 0.15,
        }
    }
}

/// Canonical NDVI with the default (high-separation) constants.
pub fn class_signature(class: WeedClass, event_day: f64, t: f64) -> f64 {
    SignatureParams::default().ndvi(class, event_day, t)
}

/// Band weights (red, nir, constant, soil) used to derive every band from
/// the red/NIR pair and tillage soil exposure.
fn band_weights(sensor: SensorId) -> &'static [[f64; 4]] {
    const S2: [[f64; 4]; 13] = [
        [0.90, 0.03, 0.02, 0.05],
        [0.80, 0.04, 0.01, 0.05],
        [0.60, 0.12, 0.01, 0.05],
        [1.00, 0.00, 0.00, 0.00],
        [0.60, 0.35, 0.00, 0.05],
        [0.30, 0.70, 0.00, 0.03],
        [0.15, 0.90, 0.00, 0.02],
        [0.00, 1.00, 0.00, 0.00],
        [0.05, 0.98, 0.00, 0.00],
        [0.00, 0.20, 0.05, 0.00],
        [0.00, 0.02, 0.01, 0.00],
        [0.80, 0.35, 0.02, 0.80],
        [0.90, 0.15, 0.02, 0.90],
    ];
    const PS8B: [[f64; 4]; 8] = [
        [0.90, 0.03, 0.02, 0.05],
        [0.80, 0.04, 0.01, 0.05],
        [0.65, 0.10, 0.01, 0.05],
        [0.60, 0.12, 0.01, 0.05],
        [0.85, 0.08, 0.01, 0.05],
        [1.00, 0.00, 0.00, 0.00],
        [0.50, 0.45, 0.00, 0.04],
        [0.00, 1.00, 0.00, 0.00],
    ];
    match sensor {
        SensorId::S2 => &S2,
        SensorId::Ps8b => &PS8B,
    }
}

/// Noiseless reflectances for one date, in registry band order.
pub fn signature_reflectances(
    sensor: SensorId,
    params: &SignatureParams,
    class: WeedClass,
    event_day: f64,
    t: f64,
    ndvi_offset: f64,
) -> Vec<f64> {
    let v = (params.ndvi(class, event_day, t) + ndvi_offset).clamp(-1.0, 1.0);
    let soil = params.soil_exposure(class, event_day, t) * params.tillage_soil_brightness;
    let brightness = params.canopy_brightness + soil;
    let red = brightness * (1.0 - v) / 2.0;
    let nir = brightness * (1.0 + v) / 2.0;
    band_weights(sensor)
        .iter()
        .map(|[wr, wn, c, ws]| (wr * red + wn * nir + c + ws * soil).clamp(0.0, 1.0))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub sensor: SensorId,
    pub window_start: NaiveDate,
    pub window_end: NaiveDate,
    pub class_counts: [usize; 4],
    pub pixels_per_parcel: (usize, usize),
    pub separation: Separation,
    /// Per-band, per-observation reflectance noise.
    pub noise_sd: f64,
    /// Per-parcel NDVI offset spread, as a multiple of `noise_sd`.
    pub parcel_noise_ratio: f64,
    pub cloud_rate: f64,
    pub revisit_days: u32,
    pub seed: u64,
}

pub fn default_revisit_days(sensor: SensorId) -> u32 {
    match sensor {
        SensorId::S2 => 5,
        SensorId::Ps8b => 1,
    }
}

impl SynthConfig {
    pub fn new(sensor: SensorId, seed: u64) -> Self {
        SynthConfig {
            sensor,
            window_start: NaiveDate::from_ymd_opt(2024, 5, 1).unwrap(),
            window_end: NaiveDate::from_ymd_opt(2024, 8, 31).unwrap(),
            class_counts: REFERENCE_CLASS_COUNTS,
            pixels_per_parcel: (4, 25),
            separation: Separation::High,
            noise_sd: 0.02,
            parcel_noise_ratio: 1.0,
            cloud_rate: 0.2,
            revisit_days: default_revisit_days(sensor),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidHyperparameter(m.to_string()));
        if self.window_end <= self.window_start {
            return Err(Error::EmptyWindow {
                start: self.window_start,
                end: self.window_end,
            });
        }
        let (lo, hi) = self.pixels_per_parcel;
        if lo == 0 || hi < lo {
            return bad("pixels_per_parcel must be a nonempty range starting at 1 or more");
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad("noise_sd must be nonnegative");
        }
        if !(self.parcel_noise_ratio >= 0.0 && self.parcel_noise_ratio.is_finite()) {
            return bad("parcel_noise_ratio must be nonnegative");
        }
        if !(0.0..=1.0).contains(&self.cloud_rate) {
            return Err(Error::FractionOutOfRange(self.cloud_rate));
        }
        if self.revisit_days == 0 {
            return bad("revisit_days must be positive");
        }
        Ok(())
    }

    pub fn total_parcels(&self) -> usize {
        self.class_counts.iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub observations: Vec<SpectralObservation>,
    pub parcels: Vec<ParcelRecord>,
    /// Event day offset of each parcel, aligned with `parcels`.
    pub event_days: Vec<u32>,
}

pub fn generate_dataset(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let mut labels: Vec<WeedClass> = WeedClass::ALL
        .iter()
        .zip(cfg.class_counts)
        .flat_map(|(&c, n)| std::iter::repeat_n(c, n))
        .collect();
    labels.shuffle(&mut stream(cfg.seed, "parcel-order", 0));

    let params = SignatureParams::with_separation(cfg.separation);
    let span = (cfg.window_end - cfg.window_start).num_days() as u32;
    let parts: Vec<(Vec<SpectralObservation>, ParcelRecord, u32)> = labels
        .par_iter()
        .enumerate()
        .map(|(i, &class)| generate_parcel(cfg, &params, span, i, class))
        .collect::<Result<_>>()?;

    let mut observations = Vec::with_capacity(parts.iter().map(|p| p.0.len()).sum());
    let mut parcels = Vec::with_capacity(parts.len());
    let mut event_days = Vec::with_capacity(parts.len());
    for (obs, parcel, event) in parts {
        observations.extend(obs);
        parcels.push(parcel);
        event_days.push(event);
    }
    Ok(SynthDataset {
        observations,
        parcels,
        event_days,
    })
}

fn generate_parcel(
    cfg: &SynthConfig,
    params: &SignatureParams,
    span: u32,
    index: usize,
    class: WeedClass,
) -> Result<(Vec<SpectralObservation>, ParcelRecord, u32)> {
    let mut rng = stream(cfg.seed, "parcel", index as u64);
    let parcel_id: Id = format!("F{:04}", index + 1).into();
    let orchard_weights = WeightedIndex::new(ORCHARD_MIX[class.ordinal()])
        .map_err(|e| Error::Parse(e.to_string()))?;
    let orchard = OrchardType::ALL[orchard_weights.sample(&mut rng)];
    let event_lo = (0.2 * span as f64).round() as u32;
    let event_hi = (0.8 * span as f64).round() as u32;
    let event_day = rng.random_range(event_lo..=event_hi);
    let n_pixels = rng.random_range(cfg.pixels_per_parcel.0..=cfg.pixels_per_parcel.1);
    let phase = rng.random_range(0..cfg.revisit_days);

    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|e| Error::Parse(e.to_string()))?;
    let parcel_sd = cfg.noise_sd * cfg.parcel_noise_ratio;
    let parcel_offset = if parcel_sd > 0.0 {
        Normal::new(0.0, parcel_sd)
            .map_err(|e| Error::Parse(e.to_string()))?
            .sample(&mut rng)
    } else {
        0.0
    };

    let pixel_ids: Vec<Id> = (0..n_pixels)
        .map(|p| Id::from(format!("{parcel_id}-P{:03}", p + 1)))
        .collect();
    let mut observations = Vec::new();
    let mut day = phase;
    while day <= span {
        let date = cfg.window_start + Days::new(day as u64);
        let cloudy = rng.random_bool(cfg.cloud_rate);
        let cloud_fraction = if cloudy {
            rng.random_range(0.01..=1.0)
        } else {
            rng.random_range(0.0..0.004)
        };
        let clean = signature_reflectances(
            cfg.sensor,
            params,
            class,
            event_day as f64,
            day as f64,
            parcel_offset,
        );
        for pixel_id in &pixel_ids {
            let reflectances = clean
                .iter()
                .map(|&r| {
                    if cfg.noise_sd > 0.0 {
                        (r + noise.sample(&mut rng)).clamp(0.0, 1.0)
                    } else {
                        r
                    }
                })
                .collect();
            observations.push(SpectralObservation {
                pixel_id: pixel_id.clone(),
                parcel_id: parcel_id.clone(),
                date,
                sensor: cfg.sensor,
                reflectances,
                cloud_fraction,
            });
        }
        day += cfg.revisit_days;
    }
    let record = ParcelRecord::new(
        parcel_id,
        pixel_ids.into_iter().collect(),
        orchard,
        Some(class),
    )?;
    Ok((observations, record, event_day))
}
