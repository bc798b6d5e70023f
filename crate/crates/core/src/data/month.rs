use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Calendar month, ordered by `(year, month)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MonthYear {
    year: i32,
    month: u8,
}

impl MonthYear {
    pub fn new(year: i32, month: u32) -> Option<Self> {
        (1..=12).contains(&month).then_some(Self {
            year,
            month: month as u8,
        })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u32 {
        u32::from(self.month)
    }

    /// Months since year 0, January.
    pub fn ordinal(self) -> i64 {
        i64::from(self.year) * 12 + i64::from(self.month) - 1
    }

    pub fn from_ordinal(ordinal: i64) -> Self {
        Self {
            year: ordinal.div_euclid(12) as i32,
            month: (ordinal.rem_euclid(12) + 1) as u8,
        }
    }

    pub fn add_months(self, n: i64) -> Self {
        Self::from_ordinal(self.ordinal() + n)
    }
}

impl fmt::Display for MonthYear {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for MonthYear {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (y, m) = s
            .split_once('-')
            .ok_or_else(|| format!("expected YYYY-MM, got {s:?}"))?;
        let year = y.parse().map_err(|_| format!("bad year in {s:?}"))?;
        let month = m.parse().map_err(|_| format!("bad month in {s:?}"))?;
        Self::new(year, month).ok_or_else(|| format!("month out of range in {s:?}"))
    }
}

impl Serialize for MonthYear {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MonthYear {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ordering_is_year_then_month() {
        let a = MonthYear::new(2020, 12).unwrap();
        let b = MonthYear::new(2021, 1).unwrap();
        assert!(a < b);
        assert_eq!(a.add_months(1), b);
        assert_eq!(b.add_months(-1), a);
    }

    #[test]
    fn rejects_month_13() {
        assert!(MonthYear::new(2020, 13).is_none());
        assert!("2020-00".parse::<MonthYear>().is_err());
    }

    #[test]
    fn display_round_trips() {
        let m = MonthYear::new(2020, 2).unwrap();
        assert_eq!(m.to_string(), "2020-02");
        assert_eq!("2020-02".parse::<MonthYear>().unwrap(), m);
    }

    proptest! {
        #[test]
        fn add_months_is_closed_and_consistent(y in 1900i32..2100, m in 1u32..=12, a in -500i64..500, b in -500i64..500) {
            let start = MonthYear::new(y, m).unwrap();
            let via = start.add_months(a).add_months(b);
            prop_assert_eq!(via, start.add_months(a + b));
            prop_assert!((1..=12).contains(&via.month()));
            prop_assert_eq!(start.add_months(a) > start, a > 0);
        }
    }
}
