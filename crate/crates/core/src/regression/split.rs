use std::collections::BTreeSet;

use super::RegressionError;
use crate::data::{FeatureRow, MonthYear};

/// Splits rows by calendar: the earliest `train_months` distinct months
/// train, the next `test_months` test. Later months are ignored.
pub fn time_split(
    rows: &[FeatureRow],
    train_months: usize,
    test_months: usize,
) -> Result<(Vec<FeatureRow>, Vec<FeatureRow>), RegressionError> {
    let months: Vec<MonthYear> = rows.iter().map(|r| r.month).collect::<BTreeSet<_>>().into_iter().collect();
    let needed = train_months + test_months;
    if train_months == 0 || test_months == 0 || months.len() < needed {
        return Err(RegressionError::InsufficientMonths {
            needed,
            found: months.len(),
        });
    }
    let train_end = months[train_months - 1];
    let test_end = months[needed - 1];
    let train = rows.iter().filter(|r| r.month <= train_end).cloned().collect();
    let test = rows
        .iter()
        .filter(|r| r.month > train_end && r.month <= test_end)
        .cloned()
        .collect();
    Ok((train, test))
}

/// Feature matrix and targets of rows that all carry a target.
pub fn design_matrix(rows: &[FeatureRow]) -> Result<(Vec<Vec<f64>>, Vec<f64>), RegressionError> {
    let y = rows
        .iter()
        .enumerate()
        .map(|(i, r)| r.target.ok_or(RegressionError::MissingTarget(i)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((rows.iter().map(|r| r.values.clone()).collect(), y))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn rows(n_months: i64) -> Vec<FeatureRow> {
        let start = MonthYear::new(2020, 1).unwrap();
        (0..n_months)
            .flat_map(|m| {
                ["A", "B"].map(|id| FeatureRow {
                    facility_id: id.into(),
                    month: start.add_months(m),
                    values: vec![m as f64],
                    target: Some(10.0 + m as f64),
                })
            })
            .collect()
    }

    #[test]
    fn twenty_seven_months_split_24_3() {
        let (train, test) = time_split(&rows(27), 24, 3).unwrap();
        assert_eq!(train.len(), 48);
        assert_eq!(test.len(), 6);
        let train_max = train.iter().map(|r| r.month).max().unwrap();
        let test_min = test.iter().map(|r| r.month).min().unwrap();
        assert!(train_max < test_min);
        assert_eq!(train_max.to_string(), "2021-12");
    }

    #[test]
    fn twenty_six_months_insufficient() {
        assert!(matches!(
            time_split(&rows(26), 24, 3),
            Err(RegressionError::InsufficientMonths { needed: 27, found: 26 })
        ));
    }

    #[test]
    fn design_matrix_requires_targets() {
        let mut r = rows(2);
        let (x, y) = design_matrix(&r).unwrap();
        assert_eq!((x.len(), y.len()), (4, 4));
        r[1].target = None;
        assert!(matches!(design_matrix(&r), Err(RegressionError::MissingTarget(1))));
    }
}
