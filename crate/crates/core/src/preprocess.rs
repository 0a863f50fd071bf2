//! Cloud screening and resampling of irregular acquisitions onto a
//! regular day grid.

use std::collections::BTreeSet;

use chrono::{Days, NaiveDate};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::domain::{Id, SpectralObservation, TimeSeries};
use crate::error::{Error, Result};

pub const DEFAULT_CLOUD_THRESHOLD: f64 = 0.005;
pub const DEFAULT_STEP_DAYS: u32 = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct CloudFilterOutcome {
    pub kept: Vec<SpectralObservation>,
    pub removed: usize,
    /// Pixels that had observations but lost every one of them.
    pub fully_clouded: Vec<Id>,
}

/// Keeps observations whose cloud fraction does not exceed `threshold`.
/// A fraction exactly at the threshold is kept.
pub fn filter_cloudy(observations: Vec<SpectralObservation>, threshold: f64) -> CloudFilterOutcome {
    let total = observations.len();
    let mut seen: BTreeSet<Id> = BTreeSet::new();
    let mut clear: BTreeSet<Id> = BTreeSet::new();
    let mut kept = Vec::with_capacity(total);
    for obs in observations {
        if !seen.contains(&obs.pixel_id) {
            seen.insert(obs.pixel_id.clone());
        }
        if obs.cloud_fraction <= threshold {
            if !clear.contains(&obs.pixel_id) {
                clear.insert(obs.pixel_id.clone());
            }
            kept.push(obs);
        }
    }
    let fully_clouded: Vec<Id> = seen.difference(&clear).cloned().collect();
    if !fully_clouded.is_empty() {
        warn!(
            "{} pixel(s) have no observation with cloud fraction <= {threshold}",
            fully_clouded.len()
        );
    }
    CloudFilterOutcome {
        removed: total - kept.len(),
        kept,
        fully_clouded,
    }
}

/// Regular grid `start + k * step_days` for `k in 0..n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub start_date: NaiveDate,
    pub step_days: u32,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn date(&self, k: usize) -> NaiveDate {
        self.start_date + Days::new(k as u64 * self.step_days as u64)
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        (0..self.n_steps).map(|k| self.date(k)).collect()
    }

    pub fn last_date(&self) -> NaiveDate {
        self.date(self.n_steps - 1)
    }
}

pub fn build_grid(window_start: NaiveDate, window_end: NaiveDate, step_days: u32) -> Result<TimeGrid> {
    if step_days == 0 {
        return Err(Error::InvalidStep);
    }
    if window_end <= window_start {
        return Err(Error::EmptyWindow {
            start: window_start,
            end: window_end,
        });
    }
    let span = (window_end - window_start).num_days() as usize;
    Ok(TimeGrid {
        start_date: window_start,
        step_days,
        n_steps: span / step_days as usize + 1,
    })
}

/// Linear interpolation onto the grid, holding the first/last observed
/// value constant outside the observed range.
pub fn interpolate_to_grid(series: &TimeSeries, grid: &TimeGrid) -> Result<TimeSeries> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    let dates = series.dates();
    let values = series.values();
    let last = dates.len() - 1;
    let out: Vec<f64> = grid
        .dates()
        .into_iter()
        .map(|g| {
            // first observation strictly after g
            let right = dates.partition_point(|&d| d <= g);
            if right == 0 {
                values[0]
            } else if dates[right - 1] == g {
                values[right - 1]
            } else if right > last {
                values[last]
            } else {
                let (t0, t1) = (dates[right - 1], dates[right]);
                let (x0, x1) = (values[right - 1], values[right]);
                let w = (g - t0).num_days() as f64 / (t1 - t0).num_days() as f64;
                (x0 + (x1 - x0) * w).clamp(x0.min(x1), x0.max(x1))
            }
        })
        .collect();
    TimeSeries::new(grid.dates(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::SensorId;
    use proptest::prelude::*;

    fn may(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 5, day).unwrap()
    }

    fn plus(d: NaiveDate, days: u64) -> NaiveDate {
        d + Days::new(days)
    }

    fn cloud_obs(pixel: &str, cloud: f64) -> SpectralObservation {
        SpectralObservation {
            pixel_id: pixel.into(),
            parcel_id: "f".into(),
            date: may(1),
            sensor: SensorId::Ps8b,
            reflectances: vec![0.1; 8],
            cloud_fraction: cloud,
        }
    }

    #[test]
    fn cloud_threshold_examples() {
        let obs: Vec<_> = [0.0, 0.004, 0.02].iter().map(|&c| cloud_obs("a", c)).collect();
        let out = filter_cloudy(obs.clone(), DEFAULT_CLOUD_THRESHOLD);
        assert_eq!(out.kept, obs[..2].to_vec());
        assert_eq!(out.removed, 1);
        assert!(out.fully_clouded.is_empty());

        let clear: Vec<_> = (0..3).map(|_| cloud_obs("a", 0.0)).collect();
        assert_eq!(filter_cloudy(clear.clone(), 0.005).kept, clear);

        let cloudy: Vec<_> = ["a", "b", "a"].iter().map(|p| cloud_obs(p, 1.0)).collect();
        let out = filter_cloudy(cloudy, 0.005);
        assert!(out.kept.is_empty());
        assert_eq!(out.removed, 3);
        assert_eq!(out.fully_clouded, vec![Id::from("a"), Id::from("b")]);
    }

    #[test]
    fn threshold_boundary_is_retained() {
        let out = filter_cloudy(vec![cloud_obs("a", 0.005)], 0.005);
        assert_eq!(out.kept.len(), 1);
    }

    #[test]
    fn grid_examples() {
        let g = build_grid(may(1), NaiveDate::from_ymd_opt(2024, 8, 31).unwrap(), 10).unwrap();
        assert_eq!(g.n_steps, 13);
        assert_eq!(g.last_date(), NaiveDate::from_ymd_opt(2024, 8, 29).unwrap());
        assert_eq!(build_grid(may(1), may(11), 10).unwrap().n_steps, 2);
        assert!(matches!(
            build_grid(may(1), NaiveDate::from_ymd_opt(2024, 4, 1).unwrap(), 10),
            Err(Error::EmptyWindow { .. })
        ));
        assert!(matches!(build_grid(may(1), may(11), 0), Err(Error::InvalidStep)));
    }

    #[test]
    fn interpolation_examples() {
        let grid = build_grid(may(1), may(21), 10).unwrap();
        let s = TimeSeries::new(vec![may(1), may(21)], vec![0.2, 0.6]).unwrap();
        let out = interpolate_to_grid(&s, &grid).unwrap();
        assert!((out.values()[1] - 0.4).abs() < 1e-12);

        let on_grid = TimeSeries::new(grid.dates(), vec![0.3, 0.1, 0.7]).unwrap();
        assert_eq!(interpolate_to_grid(&on_grid, &grid).unwrap(), on_grid);

        let full = build_grid(may(1), NaiveDate::from_ymd_opt(2024, 8, 31).unwrap(), 10).unwrap();
        let single = TimeSeries::new(vec![may(8)], vec![0.3]).unwrap();
        let out = interpolate_to_grid(&single, &full).unwrap();
        assert_eq!(out.values(), vec![0.3; 13].as_slice());

        assert!(matches!(
            interpolate_to_grid(&TimeSeries::empty(), &grid),
            Err(Error::EmptySeries)
        ));
    }

    fn series_strategy() -> impl Strategy<Value = (Vec<u64>, Vec<f64>)> {
        prop::collection::btree_set(0u64..140, 1..30).prop_flat_map(|days| {
            let n = days.len();
            (
                Just(days.into_iter().collect::<Vec<_>>()),
                prop::collection::vec(-1.0f64..1.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn interpolation_stays_within_observed_range((days, values) in series_strategy()) {
            let start = may(1);
            let dates: Vec<_> = days.iter().map(|&d| plus(start, d)).collect();
            let s = TimeSeries::new(dates, values.clone()).unwrap();
            let grid = build_grid(start, plus(start, 122), 10).unwrap();
            let out = interpolate_to_grid(&s, &grid).unwrap();
            let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for v in out.values() {
                prop_assert!(*v >= lo && *v <= hi);
            }
            // idempotent on its own grid
            prop_assert_eq!(interpolate_to_grid(&out, &grid).unwrap(), out);
        }

        #[test]
        fn lowering_threshold_never_keeps_more(clouds in prop::collection::vec(0.0f64..=1.0, 0..40),
                                               a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let obs: Vec<_> = clouds.iter().map(|&c| cloud_obs("p", c)).collect();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let n_lo = filter_cloudy(obs.clone(), lo).kept.len();
            let n_hi = filter_cloudy(obs, hi).kept.len();
            prop_assert!(n_lo <= n_hi);
        }
    }
}
