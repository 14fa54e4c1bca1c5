//! Evaluation reports and their CSV/JSON renderings.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainingCurve;
use crate::error::{invalid, Error, Result};
use crate::util::write_atomic;

pub const ACCURACY_FILE: &str = "accuracy_by_snr.csv";
pub const CONFUSION_FILE: &str = "confusion.csv";
pub const CURVES_FILE: &str = "curves.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// SNR values averaged for the mid-band headline metric.
pub const BAND_SNRS: [i32; 6] = [0, 2, 4, 6, 8, 10];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub correct: u64,
    pub total: u64,
}

impl Tally {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// Accuracy by SNR and by class plus a confusion matrix
/// (rows = truth, columns = prediction).
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub classes: Vec<String>,
    pub per_snr: BTreeMap<i32, Tally>,
    pub confusion: Vec<Vec<u64>>,
    /// SNR the confusion matrix was restricted to, if any.
    pub confusion_snr: Option<i32>,
}

impl EvalReport {
    /// Builds a report from parallel truth/prediction/SNR sequences.
    pub fn from_predictions(
        classes: Vec<String>,
        truth: &[usize],
        predicted: &[usize],
        snr: &[i32],
        confusion_snr: Option<i32>,
    ) -> Result<Self> {
        if truth.len() != predicted.len() || truth.len() != snr.len() {
            return Err(invalid!("truth, prediction and SNR sequences differ in length"));
        }
        if truth.is_empty() {
            return Err(invalid!("cannot evaluate an empty set"));
        }
        let k = classes.len();
        if let Some(bad) = truth.iter().chain(predicted).find(|&&c| c >= k) {
            return Err(invalid!("class index {bad} outside {k} classes"));
        }
        let mut per_snr: BTreeMap<i32, Tally> = BTreeMap::new();
        let mut confusion = vec![vec![0u64; k]; k];
        for ((&t, &p), &s) in truth.iter().zip(predicted).zip(snr) {
            let tally = per_snr.entry(s).or_default();
            tally.total += 1;
            tally.correct += u64::from(t == p);
            if confusion_snr.is_none_or(|f| f == s) {
                confusion[t][p] += 1;
            }
        }
        Ok(Self {
            classes,
            per_snr,
            confusion,
            confusion_snr,
        })
    }

    pub fn overall(&self) -> Tally {
        self.per_snr.values().fold(Tally::default(), |a, t| Tally {
            correct: a.correct + t.correct,
            total: a.total + t.total,
        })
    }

    pub fn overall_accuracy(&self) -> f64 {
        self.overall().accuracy()
    }

    pub fn per_snr_accuracy(&self) -> BTreeMap<i32, f64> {
        self.per_snr.iter().map(|(&s, t)| (s, t.accuracy())).collect()
    }

    pub fn accuracy_at(&self, snr_db: i32) -> Option<f64> {
        self.per_snr.get(&snr_db).map(Tally::accuracy)
    }

    /// Per-class accuracy from the confusion matrix; classes with no test
    /// frames are omitted.
    pub fn per_class_accuracy(&self) -> BTreeMap<String, f64> {
        self.classes
            .iter()
            .zip(&self.confusion)
            .filter_map(|(name, row)| {
                let total: u64 = row.iter().sum();
                let idx = self.classes.iter().position(|c| c == name)?;
                (total > 0).then(|| (name.clone(), row[idx] as f64 / total as f64))
            })
            .collect()
    }

    pub fn summary(&self) -> Summary {
        Summary::from_counts(&self.per_snr, &self.classes, &self.confusion)
    }
}

/// The three headline metrics plus per-class accuracy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub overall_accuracy: f64,
    /// Unweighted mean over the 0..=10 dB bins present; `None` if none are.
    pub band_0_10_db_accuracy: Option<f64>,
    pub max_snr_accuracy: f64,
    pub max_snr_accuracy_db: i32,
    pub per_class_accuracy: BTreeMap<String, f64>,
    pub total_frames: u64,
    pub confusion_snr: Option<i32>,
}

impl Summary {
    fn from_counts(per_snr: &BTreeMap<i32, Tally>, classes: &[String], confusion: &[Vec<u64>]) -> Self {
        let overall = per_snr.values().fold(Tally::default(), |a, t| Tally {
            correct: a.correct + t.correct,
            total: a.total + t.total,
        });
        let band: Vec<f64> = BAND_SNRS
            .iter()
            .filter_map(|s| per_snr.get(s).map(Tally::accuracy))
            .collect();
        let (max_db, max_acc) = per_snr
            .iter()
            .map(|(&s, t)| (s, t.accuracy()))
            .fold((i32::MIN, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        let per_class_accuracy = classes
            .iter()
            .enumerate()
            .filter_map(|(i, name)| {
                let total: u64 = confusion[i].iter().sum();
                (total > 0).then(|| (name.clone(), confusion[i][i] as f64 / total as f64))
            })
            .collect();
        Summary {
            overall_accuracy: overall.accuracy(),
            band_0_10_db_accuracy: (!band.is_empty()).then(|| band.iter().sum::<f64>() / band.len() as f64),
            max_snr_accuracy: max_acc,
            max_snr_accuracy_db: max_db,
            per_class_accuracy,
            total_frames: overall.total,
            confusion_snr: None,
        }
    }
}

fn csv_bytes(write: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    write(&mut w).map_err(|e| Error::Format(e.to_string()))?;
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

fn summary_bytes(summary: &Summary) -> Result<Vec<u8>> {
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    Ok(text.into_bytes())
}

/// Writes `accuracy_by_snr.csv`, `confusion.csv`, `summary.json` and, when a
/// curve is given, `curves.csv` into `dir`.
pub fn report_csv(report: &EvalReport, curve: Option<&TrainingCurve>, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let acc = csv_bytes(|w| {
        w.write_record(["snr_db", "accuracy", "correct", "total"])?;
        for (snr, t) in &report.per_snr {
            w.write_record([
                snr.to_string(),
                t.accuracy().to_string(),
                t.correct.to_string(),
                t.total.to_string(),
            ])?;
        }
        Ok(())
    })?;
    write_atomic(&dir.join(ACCURACY_FILE), &acc)?;

    let conf = csv_bytes(|w| {
        let mut header = vec![match report.confusion_snr {
            Some(s) => format!("truth\\predicted@{s}dB"),
            None => "truth\\predicted".to_string(),
        }];
        header.extend(report.classes.iter().cloned());
        w.write_record(&header)?;
        for (name, row) in report.classes.iter().zip(&report.confusion) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(u64::to_string));
            w.write_record(&rec)?;
        }
        Ok(())
    })?;
    write_atomic(&dir.join(CONFUSION_FILE), &conf)?;

    if let Some(curve) = curve {
        let text = csv_bytes(|w| {
            w.write_record(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])?;
            for e in &curve.epochs {
                w.write_record([
                    e.epoch.to_string(),
                    e.train_loss.to_string(),
                    e.train_accuracy.to_string(),
                    e.val_loss.to_string(),
                    e.val_accuracy.to_string(),
                ])?;
            }
            Ok(())
        })?;
        write_atomic(&dir.join(CURVES_FILE), &text)?;
    }
    let mut summary = report.summary();
    summary.confusion_snr = report.confusion_snr;
    write_atomic(&dir.join(SUMMARY_FILE), &summary_bytes(&summary)?)
}

fn read_csv(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    r.records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn parse<T: std::str::FromStr>(field: &str, what: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::Format(format!("cannot parse {what} from `{field}`")))
}

/// Rebuilds `summary.json` from the CSVs in `dir` and returns it.
pub fn rerender_summary(dir: &Path) -> Result<Summary> {
    let acc = read_csv(&dir.join(ACCURACY_FILE))?;
    let mut per_snr = BTreeMap::new();
    for rec in acc.iter().skip(1) {
        if rec.len() < 4 {
            return Err(Error::Format("accuracy_by_snr.csv row needs 4 fields".into()));
        }
        per_snr.insert(
            parse::<i32>(&rec[0], "snr_db")?,
            Tally {
                correct: parse(&rec[2], "correct")?,
                total: parse(&rec[3], "total")?,
            },
        );
    }
    let conf = read_csv(&dir.join(CONFUSION_FILE))?;
    let header = conf
        .first()
        .ok_or_else(|| Error::Format("confusion.csv is empty".into()))?;
    let classes: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let confusion_snr = header[0]
        .split_once('@')
        .map(|(_, s)| parse::<i32>(s.trim_end_matches("dB"), "confusion SNR"))
        .transpose()?;
    let mut confusion = Vec::with_capacity(classes.len());
    for rec in conf.iter().skip(1) {
        confusion.push(
            rec.iter()
                .skip(1)
                .map(|v| parse::<u64>(v, "count"))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    if confusion.len() != classes.len() || confusion.iter().any(|r| r.len() != classes.len()) {
        return Err(Error::Format("confusion.csv is not square".into()));
    }
    let mut summary = Summary::from_counts(&per_snr, &classes, &confusion);
    summary.confusion_snr = confusion_snr;
    write_atomic(&dir.join(SUMMARY_FILE), &summary_bytes(&summary)?)?;
    Ok(summary)
}
