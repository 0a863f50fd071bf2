//! Confusion matrices, per-class precision/recall/F1, support-weighted F1
//! and report rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::WeedClass;
use crate::error::{Error, Result};

const N: usize = WeedClass::COUNT;

/// Rows are true classes, columns predicted classes, both in class order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; N]; N],
}

impl ConfusionMatrix {
    pub fn get(&self, truth: WeedClass, predicted: WeedClass) -> u64 {
        self.counts[truth.ordinal()][predicted.ordinal()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, class: WeedClass) -> u64 {
        self.counts[class.ordinal()].iter().sum()
    }

    pub fn predicted(&self, class: WeedClass) -> u64 {
        self.counts.iter().map(|row| row[class.ordinal()]).sum()
    }
}

pub fn confusion_matrix(y_true: &[WeedClass], y_pred: &[WeedClass]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch {
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut cm = ConfusionMatrix::default();
    for (t, p) in y_true.iter().zip(y_pred) {
        cm.counts[t.ordinal()][p.ordinal()] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

pub type PerClassMetrics = BTreeMap<WeedClass, ClassMetrics>;

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Zero denominators give 0 rather than NaN.
pub fn per_class_metrics(cm: &ConfusionMatrix) -> PerClassMetrics {
    WeedClass::ALL
        .iter()
        .map(|&c| {
            let tp = cm.get(c, c) as f64;
            let precision = ratio(tp, cm.predicted(c) as f64);
            let recall = ratio(tp, cm.support(c) as f64);
            let f1 = ratio(2.0 * precision * recall, precision + recall);
            (
                c,
                ClassMetrics {
                    precision,
                    recall,
                    f1,
                    support: cm.support(c),
                },
            )
        })
        .collect()
}

pub fn weighted_f1(per_class: &PerClassMetrics) -> Result<f64> {
    let total: u64 = per_class.values().map(|m| m.support).sum();
    if total == 0 {
        return Err(Error::ZeroSupport);
    }
    let weighted: f64 = per_class.values().map(|m| m.support as f64 * m.f1).sum();
    Ok(weighted / total as f64)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub model_kind: String,
    pub hyperparams: BTreeMap<String, String>,
    pub seed: u64,
    pub dataset_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub confusion: ConfusionMatrix,
    pub per_class: PerClassMetrics,
    pub weighted_f1: f64,
    pub metadata: ReportMetadata,
}

impl EvaluationReport {
    pub fn from_predictions(
        y_true: &[WeedClass],
        y_pred: &[WeedClass],
        metadata: ReportMetadata,
    ) -> Result<Self> {
        let confusion = confusion_matrix(y_true, y_pred)?;
        let per_class = per_class_metrics(&confusion);
        let weighted_f1 = weighted_f1(&per_class)?;
        Ok(EvaluationReport {
            confusion,
            per_class,
            weighted_f1,
            metadata,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "text" | "txt" => Ok(ReportFormat::Text),
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(Error::UnsupportedFormat(s.to_string())),
        }
    }
}

pub const METRICS_CSV_HEADER: &str = "class,precision,recall,f1,support";
const WEIGHTED_ROW: &str = "weighted_f1";

pub fn render_report(report: &EvaluationReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report)?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Csv => Ok(render_metrics_csv(report)),
        ReportFormat::Text => Ok(render_text(report)),
    }
}

fn render_metrics_csv(report: &EvaluationReport) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for (c, m) in &report.per_class {
        let _ = writeln!(out, "{c},{},{},{},{}", m.precision, m.recall, m.f1, m.support);
    }
    let _ = writeln!(
        out,
        "{WEIGHTED_ROW},,,{},{}",
        report.weighted_f1,
        report.confusion.total()
    );
    out
}

/// Inverse of the CSV rendering: per-class metrics and weighted F1.
pub fn parse_metrics_csv(text: &str) -> Result<(PerClassMetrics, f64)> {
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_CSV_HEADER) {
        return Err(Error::Parse("metrics csv header".into()));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s}: {e}")));
    let int = |s: &str| s.parse::<u64>().map_err(|e| Error::Parse(format!("{s}: {e}")));
    let mut per_class = PerClassMetrics::new();
    let mut weighted = None;
    for line in lines.filter(|l| !l.is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(Error::Parse(format!("metrics row `{line}`")));
        }
        if f[0] == WEIGHTED_ROW {
            weighted = Some(num(f[3])?);
            continue;
        }
        per_class.insert(
            f[0].parse()?,
            ClassMetrics {
                precision: num(f[1])?,
                recall: num(f[2])?,
                f1: num(f[3])?,
                support: int(f[4])?,
            },
        );
    }
    let weighted = weighted.ok_or_else(|| Error::Parse("missing weighted_f1 row".into()))?;
    Ok((per_class, weighted))
}

/// Confusion matrix as CSV with class names on both axes.
pub fn render_confusion_csv(cm: &ConfusionMatrix) -> String {
    let mut out = String::from("true\\predicted");
    for c in WeedClass::ALL {
        let _ = write!(out, ",{c}");
    }
    out.push('\n');
    for c in WeedClass::ALL {
        out.push_str(c.as_str());
        for n in cm.counts[c.ordinal()] {
            let _ = write!(out, ",{n}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_confusion_csv(text: &str) -> Result<ConfusionMatrix> {
    let mut lines = text.lines().filter(|l| !l.is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or(Error::EmptyInput)?
        .split(',')
        .collect();
    let cols = header[1..]
        .iter()
        .map(|s| s.parse::<WeedClass>())
        .collect::<Result<Vec<_>>>()?;
    let mut cm = ConfusionMatrix::default();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols.len() + 1 {
            return Err(Error::Parse(format!("confusion row `{line}`")));
        }
        let row: WeedClass = f[0].parse()?;
        for (col, v) in cols.iter().zip(&f[1..]) {
            cm.counts[row.ordinal()][col.ordinal()] =
                v.parse().map_err(|_| Error::Parse(format!("count `{v}`")))?;
        }
    }
    Ok(cm)
}

fn render_text(report: &EvaluationReport) -> String {
    let md = &report.metadata;
    let mut out = String::new();
    let _ = writeln!(out, "model: {}  seed: {}  dataset: {}", md.model_kind, md.seed, md.dataset_id);
    if !md.hyperparams.is_empty() {
        let hp: Vec<String> = md.hyperparams.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let _ = writeln!(out, "hyperparameters: {}", hp.join(" "));
    }
    out.push('\n');
    let _ = writeln!(
        out,
        "{:<22}{:>10}{:>8}{:>10}{:>9}",
        "class", "precision", "recall", "f1", "support"
    );
    for (c, m) in &report.per_class {
        let label = format!("{} {}", c.abbrev(), c);
        let _ = writeln!(
            out,
            "{label:<22}{:>10.2}{:>8.2}{:>10.2}{:>9}",
            m.precision, m.recall, m.f1, m.support
        );
    }
    let _ = writeln!(out, "{:<22}{:>28.2}", "weighted F1", report.weighted_f1);
    out.push('\n');
    let _ = writeln!(out, "confusion matrix (rows: true, columns: predicted)");
    let _ = write!(out, "{:<6}", "");
    for c in WeedClass::ALL {
        let _ = write!(out, "{:>6}", c.abbrev());
    }
    out.push('\n');
    for c in WeedClass::ALL {
        let _ = write!(out, "{:<6}", c.abbrev());
        for n in report.confusion.counts[c.ordinal()] {
            let _ = write!(out, "{n:>6}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use WeedClass::*;

    fn metrics(f1: f64, support: u64) -> ClassMetrics {
        ClassMetrics {
            precision: 0.0,
            recall: 0.0,
            f1,
            support,
        }
    }

    #[test]
    fn hand_tally() {
        let cm = confusion_matrix(&[Mowing, Mowing, Tillage], &[Mowing, Tillage, Tillage]).unwrap();
        assert_eq!(cm.get(Mowing, Mowing), 1);
        assert_eq!(cm.get(Mowing, Tillage), 1);
        assert_eq!(cm.get(Tillage, Tillage), 1);
        assert_eq!(cm.total(), 3);
        let m = per_class_metrics(&cm);
        let (mo, tl) = (m[&Mowing], m[&Tillage]);
        assert_eq!((mo.precision, mo.recall), (1.0, 0.5));
        assert!((mo.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!((tl.precision, tl.recall), (0.5, 1.0));
        assert!((tl.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn confusion_errors() {
        assert!(matches!(confusion_matrix(&[Mowing], &[]), Err(Error::LengthMismatch { .. })));
        assert!(matches!(confusion_matrix(&[], &[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn all_predicted_mowing() {
        let truth = [Mowing, Tillage, Tillage, NoPractice];
        let cm = confusion_matrix(&truth, &[Mowing; 4]).unwrap();
        for c in [Tillage, ChemicalSpraying, NoPractice] {
            assert_eq!(cm.predicted(c), 0);
        }
        assert_eq!(cm.support(Tillage), 2);
        assert_eq!(cm.support(NoPractice), 1);
    }

    #[test]
    fn never_predicted_class_scores_zero() {
        let truth = [Mowing, ChemicalSpraying, ChemicalSpraying, Tillage];
        let pred = [Mowing, Mowing, Tillage, Tillage];
        let m = per_class_metrics(&confusion_matrix(&truth, &pred).unwrap());
        let cs = m[&ChemicalSpraying];
        assert_eq!((cs.precision, cs.recall, cs.f1), (0.0, 0.0, 0.0));
        assert!(m.values().all(|x| x.f1.is_finite()));
    }

    #[test]
    fn weighted_f1_examples() {
        let pc: PerClassMetrics = [
            (Mowing, metrics(0.72, 29)),
            (Tillage, metrics(0.5, 7)),
            (ChemicalSpraying, metrics(0.31, 7)),
            (NoPractice, metrics(0.25, 6)),
        ]
        .into_iter()
        .collect();
        // (0.72*29 + 0.5*7 + 0.31*7 + 0.25*6) / 49 = 28.05 / 49
        let w = weighted_f1(&pc).unwrap();
        assert!((w - 28.05 / 49.0).abs() < 1e-12);
        assert!((w - 0.57).abs() <= 0.005);

        let halves: PerClassMetrics = WeedClass::ALL.iter().map(|&c| (c, metrics(0.5, 3 + c as u64))).collect();
        assert!((weighted_f1(&halves).unwrap() - 0.5).abs() < 1e-15);

        let single: PerClassMetrics = WeedClass::ALL
            .iter()
            .map(|&c| (c, metrics(if c == Tillage { 0.8 } else { 0.1 }, u64::from(c == Tillage) * 5)))
            .collect();
        assert_eq!(weighted_f1(&single).unwrap(), 0.8);

        let none: PerClassMetrics = WeedClass::ALL.iter().map(|&c| (c, metrics(0.3, 0))).collect();
        assert!(matches!(weighted_f1(&none), Err(Error::ZeroSupport)));
    }

    fn sample_report() -> EvaluationReport {
        let truth = [Mowing, Mowing, Tillage, ChemicalSpraying, NoPractice, NoPractice, Mowing];
        let pred = [Mowing, Tillage, Tillage, Mowing, NoPractice, Mowing, Mowing];
        let md = ReportMetadata {
            model_kind: "rf".into(),
            hyperparams: [("n_trees".to_string(), "100".to_string())].into_iter().collect(),
            seed: 42,
            dataset_id: "synthetic".into(),
        };
        EvaluationReport::from_predictions(&truth, &pred, md).unwrap()
    }

    #[test]
    fn json_round_trip() {
        let r = sample_report();
        let text = render_report(&r, ReportFormat::Json).unwrap();
        assert_eq!(EvaluationReport::from_json(&text).unwrap(), r);
    }

    #[test]
    fn csv_round_trip_and_header() {
        let r = sample_report();
        let text = render_report(&r, ReportFormat::Csv).unwrap();
        assert_eq!(text.lines().next(), Some("class,precision,recall,f1,support"));
        let (pc, w) = parse_metrics_csv(&text).unwrap();
        assert_eq!(pc, r.per_class);
        assert_eq!(w, r.weighted_f1);
        assert_eq!(parse_confusion_csv(&render_confusion_csv(&r.confusion)).unwrap(), r.confusion);
    }

    #[test]
    fn text_rows_in_class_order() {
        let text = render_report(&sample_report(), ReportFormat::Text).unwrap();
        let pos: Vec<usize> = WeedClass::ALL
            .iter()
            .map(|c| text.find(&format!("{} {}", c.abbrev(), c)).unwrap())
            .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert!(text.contains("weighted F1"));
        assert!("xml".parse::<ReportFormat>().is_err());
    }

    fn classes() -> impl Strategy<Value = Vec<(WeedClass, WeedClass)>> {
        let c = (0usize..4).prop_map(|i| WeedClass::ALL[i]);
        prop::collection::vec((c.clone(), c), 1..80)
    }

    proptest! {
        #[test]
        fn matrix_sums(pairs in classes()) {
            let (t, p): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let cm = confusion_matrix(&t, &p).unwrap();
            prop_assert_eq!(cm.total(), t.len() as u64);
            for c in WeedClass::ALL {
                prop_assert_eq!(cm.support(c), t.iter().filter(|&&x| x == c).count() as u64);
                prop_assert_eq!(cm.predicted(c), p.iter().filter(|&&x| x == c).count() as u64);
            }
        }

        #[test]
        fn relabeling_permutes_metrics(pairs in classes(), perm in Just([0usize, 1, 2, 3]).prop_shuffle()) {
            let map = |c: WeedClass| WeedClass::ALL[perm[c.ordinal()]];
            let (t, p): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let base = per_class_metrics(&confusion_matrix(&t, &p).unwrap());
            let t2: Vec<_> = t.iter().map(|&c| map(c)).collect();
            let p2: Vec<_> = p.iter().map(|&c| map(c)).collect();
            let moved = per_class_metrics(&confusion_matrix(&t2, &p2).unwrap());
            for c in WeedClass::ALL {
                prop_assert_eq!(base[&c], moved[&map(c)]);
            }
            prop_assert!((weighted_f1(&base).unwrap() - weighted_f1(&moved).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn perfect_predictions_score_one(pairs in classes()) {
            let t: Vec<_> = pairs.into_iter().map(|(a, _)| a).collect();
            let r = EvaluationReport::from_predictions(&t, &t, ReportMetadata::default()).unwrap();
            prop_assert_eq!(r.weighted_f1, 1.0);
        }
    }
}
