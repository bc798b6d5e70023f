//! Plain-text tables with reals rounded to two decimals.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::annotation::AgreementReport;
use crate::explain::DriverReport;
use crate::regression::CvReport;

/// One row of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub model: String,
    pub split: String,
    pub rmse: f64,
    pub mape: f64,
}

/// One row of `importance.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRow {
    pub rank: usize,
    pub model: String,
    pub feature: String,
    pub score: f64,
}

pub fn metrics_table(rows: &[MetricRow]) -> String {
    let mut out = String::from("MODEL                 SPLIT    RMSE     MAPE\n");
    for r in rows {
        let _ = writeln!(out, "{:<21} {:<6} {:>7.2} {:>7.2}%", r.model, r.split, r.rmse, r.mape);
    }
    out
}

pub fn cv_table(reports: &[CvReport]) -> String {
    let mut out = String::from("MODEL                 FOLD     RMSE     MAPE\n");
    for r in reports {
        for f in &r.folds {
            let _ = writeln!(out, "{:<21} {:<6} {:>7.2} {:>7.2}%", r.model, f.fold, f.rmse, f.mape);
        }
        let _ = writeln!(out, "{:<21} {:<6} {:>7.2} {:>7.2}%", r.model, "mean", r.mean.rmse, r.mean.mape);
    }
    out
}

/// Top `k` rows per model side by side is hard to read in plain text, so
/// models are listed one after another.
pub fn importance_table(rows: &[ImportanceRow], k: usize) -> String {
    let mut out = String::from("RANK  MODEL                 FEATURE                                       SCORE\n");
    for r in rows.iter().filter(|r| r.rank <= k) {
        let _ = writeln!(out, "{:<5} {:<21} {:<45} {:>6.2}", r.rank, r.model, r.feature, r.score);
    }
    out
}

pub fn drivers_table(reports: &[DriverReport]) -> String {
    let mut out = String::new();
    for r in reports {
        match r.month {
            Some(m) => {
                let _ = writeln!(out, "{} {m}", r.facility);
            }
            None => {
                let _ = writeln!(out, "{}", r.facility);
            }
        }
        for d in &r.drivers {
            let _ = writeln!(out, "  {:>2}. {:<30} {:>8.2}", d.rank, d.name, d.mean_abs_shap);
        }
    }
    out
}

pub fn agreement_table(r: &AgreementReport) -> String {
    let mut out = format!("{}\nCOMPONENT  MEAN\n", r.category);
    for c in &r.components {
        let _ = writeln!(out, "{:<10} {:.2}", c.id, c.mean);
    }
    out.push_str("ANNOTATOR     MEAN\n");
    for a in &r.annotators {
        let _ = writeln!(out, "{:<13} {:.2}", a.id, a.mean);
    }
    let _ = writeln!(out, "OVERALL       {:.2}", r.overall);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::annotation::ScoreMean;

    #[test]
    fn two_decimals() {
        let t = metrics_table(&[MetricRow {
            model: "RF".into(),
            split: "test".into(),
            rmse: 18.2449,
            mape: 11.0312,
        }]);
        assert!(t.contains("  18.24   11.03%"));
        let a = agreement_table(&AgreementReport {
            category: "overall facility level".into(),
            components: vec![ScoreMean { id: "2".into(), mean: 8.0 / 3.0, n_scores: 3 }],
            annotators: vec![],
            overall: 8.0 / 3.0,
        });
        assert!(a.contains("2          2.67"));
        assert!(a.contains("OVERALL       2.67"));
    }
}
