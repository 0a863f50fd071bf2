use std::sync::Arc;

use crate::domain::WeedClass;
use crate::error::{Error, Result};
use crate::features::{FeatureSchema, ParcelFeatureVector};
use crate::rng::keyed_hash;

pub type ClassCounts = [usize; WeedClass::COUNT];

/// Labeled parcel vectors sharing one schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Arc<FeatureSchema>,
    rows: Vec<ParcelFeatureVector>,
    labels: Vec<WeedClass>,
}

impl Dataset {
    pub fn new(schema: Arc<FeatureSchema>, rows: Vec<ParcelFeatureVector>) -> Result<Self> {
        let mut labels = Vec::with_capacity(rows.len());
        for r in &rows {
            if !Arc::ptr_eq(&r.schema, &schema) && *r.schema != *schema {
                return Err(Error::SchemaMismatch(format!("row {}", r.parcel_id)));
            }
            labels.push(
                r.label
                    .ok_or_else(|| Error::Parse(format!("parcel {} has no label", r.parcel_id)))?,
            );
        }
        Ok(Dataset { schema, rows, labels })
    }

    /// Builds a dataset from bare matrices; parcel ids are the row numbers.
    pub fn from_matrix(names: Vec<String>, x: Vec<Vec<f64>>, y: Vec<WeedClass>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch {
                left: x.len(),
                right: y.len(),
            });
        }
        let schema = Arc::new(FeatureSchema::new(names));
        let rows = x
            .into_iter()
            .zip(&y)
            .enumerate()
            .map(|(i, (values, &label))| ParcelFeatureVector {
                parcel_id: format!("r{i:05}").into(),
                label: Some(label),
                schema: schema.clone(),
                values,
            })
            .collect();
        Dataset::new(schema, rows)
    }

    pub fn schema(&self) -> &Arc<FeatureSchema> {
        &self.schema
    }

    pub fn rows(&self) -> &[ParcelFeatureVector] {
        &self.rows
    }

    pub fn labels(&self) -> &[WeedClass] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    pub fn matrix(&self) -> Vec<&[f64]> {
        self.rows.iter().map(|r| r.values.as_slice()).collect()
    }

    pub fn class_counts(&self) -> ClassCounts {
        let mut counts = [0; WeedClass::COUNT];
        for l in &self.labels {
            counts[l.ordinal()] += 1;
        }
        counts
    }

    /// Rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Indices of each class's rows, ordered by a seed-keyed hash of the
    /// parcel id. The ranking depends only on (seed, tag, parcel ids), never
    /// on row order, so two datasets over the same parcels rank them alike.
    pub(crate) fn ranked_by_class(&self, seed: u64, tag: &str) -> Vec<Vec<usize>> {
        let mut per_class = vec![Vec::new(); WeedClass::COUNT];
        for (i, l) in self.labels.iter().enumerate() {
            per_class[l.ordinal()].push(i);
        }
        for idx in &mut per_class {
            idx.sort_by_cached_key(|&i| (keyed_hash(seed, tag, &self.rows[i].parcel_id), i));
        }
        per_class
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

    /// `round(fraction * count)` clamped to `[1, count - 1]` for classes with
    /// at least two rows.
    pub fn test_counts(&self, counts: &ClassCounts) -> Result<ClassCounts> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::FractionOutOfRange(self.test_fraction));
        }
        let mut out = [0; WeedClass::COUNT];
        for (c, &n) in counts.iter().enumerate() {
            if n == 0 {
                continue;
            }
            if n < 2 {
                return Err(Error::ClassTooSmall {
                    class: WeedClass::ALL[c].to_string(),
                    count: n,
                    required: 2,
                });
            }
            out[c] = ((self.test_fraction * n as f64).round() as usize).clamp(1, n - 1);
        }
        Ok(out)
    }
}

/// Per class, exactly the [`SplitSpec::test_counts`] rows go to the test set.
/// Both outputs keep the input row order.
pub fn stratified_split(data: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let test_counts = spec.test_counts(&data.class_counts())?;
    let mut is_test = vec![false; data.len()];
    for (c, ranked) in data.ranked_by_class(spec.seed, "split").iter().enumerate() {
        for &i in &ranked[..test_counts[c]] {
            is_test[i] = true;
        }
    }
    let (test, train): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|&i| is_test[i]);
    Ok((data.subset(&train), data.subset(&test)))
}

/// Removes `round(fraction * n)` randomly chosen rows of the largest class
/// (ties: lower ordinal), always leaving at least one.
pub fn undersample_majority(train: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::FractionOutOfRange(fraction));
    }
    let counts = train.class_counts();
    let majority = (0..counts.len()).fold(0, |best, c| if counts[c] > counts[best] { c } else { best });
    let n = counts[majority];
    if n == 0 {
        return Ok(train.clone());
    }
    let n_remove = ((fraction * n as f64).round() as usize).min(n - 1);
    let ranked = &train.ranked_by_class(seed, "undersample")[majority];
    let mut drop = vec![false; train.len()];
    for &i in &ranked[..n_remove] {
        drop[i] = true;
    }
    let keep: Vec<usize> = (0..train.len()).filter(|&i| !drop[i]).collect();
    Ok(train.subset(&keep))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use std::collections::BTreeSet;

    pub(crate) fn dataset_with_counts(counts: [usize; 4]) -> Dataset {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (c, &n) in counts.iter().enumerate() {
            for i in 0..n {
                x.push(vec![c as f64, i as f64]);
                y.push(WeedClass::ALL[c]);
            }
        }
        Dataset::from_matrix(vec!["a".into(), "b".into()], x, y).unwrap()
    }

    fn ids(d: &Dataset) -> BTreeSet<String> {
        d.rows().iter().map(|r| r.parcel_id.to_string()).collect()
    }

    #[test]
    fn table_counts_split() {
        let data = dataset_with_counts([141, 33, 31, 27]);
        let spec = SplitSpec {
            test_fraction: 0.2,
            seed: 3,
        };
        let (train, test) = stratified_split(&data, &spec).unwrap();
        assert_eq!(test.class_counts(), [28, 7, 6, 5]);
        assert_eq!(train.class_counts(), [113, 26, 25, 22]);
        assert!(ids(&train).is_disjoint(&ids(&test)));
        assert_eq!(&ids(&train) | &ids(&test), ids(&data));
        let again = stratified_split(&data, &spec).unwrap();
        assert_eq!(again.1, test);
    }

    #[test]
    fn single_class_split() {
        let data = dataset_with_counts([10, 0, 0, 0]);
        let (train, test) = stratified_split(
            &data,
            &SplitSpec {
                test_fraction: 0.2,
                seed: 0,
            },
        )
        .unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
    }

    #[test]
    fn split_clamps_and_rejects_singletons() {
        let spec = SplitSpec {
            test_fraction: 0.2,
            seed: 0,
        };
        assert_eq!(spec.test_counts(&[2, 3, 0, 0]).unwrap(), [1, 1, 0, 0]);
        assert!(matches!(
            stratified_split(&dataset_with_counts([5, 1, 3, 3]), &spec),
            Err(Error::ClassTooSmall { count: 1, .. })
        ));
    }

    #[test]
    fn split_ignores_row_order() {
        let data = dataset_with_counts([20, 9, 7, 6]);
        let reversed: Vec<usize> = (0..data.len()).rev().collect();
        let spec = SplitSpec {
            test_fraction: 0.2,
            seed: 11,
        };
        let (_, a) = stratified_split(&data, &spec).unwrap();
        let (_, b) = stratified_split(&data.subset(&reversed), &spec).unwrap();
        assert_eq!(ids(&a), ids(&b));
    }

    #[test]
    fn undersampling_examples() {
        let data = dataset_with_counts([141, 33, 31, 27]);
        assert_eq!(undersample_majority(&data, 0.0, 1).unwrap(), data);
        let out = undersample_majority(&data, 0.006, 1).unwrap();
        assert_eq!(out.class_counts(), [140, 33, 31, 27]);
        let out = undersample_majority(&data, 0.999, 1).unwrap();
        assert_eq!(out.class_counts(), [1, 33, 31, 27]);
        assert!(matches!(undersample_majority(&data, 1.0, 1), Err(Error::FractionOutOfRange(_))));
        assert!(matches!(undersample_majority(&data, -0.1, 1), Err(Error::FractionOutOfRange(_))));
        let a = undersample_majority(&data, 0.5, 9).unwrap();
        assert_eq!(a, undersample_majority(&data, 0.5, 9).unwrap());
        assert_ne!(ids(&a), ids(&undersample_majority(&data, 0.5, 10).unwrap()));
    }
}
