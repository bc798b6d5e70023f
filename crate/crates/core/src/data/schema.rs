use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{IngestError, MonthYear};

/// Mandatory leading columns of `encounters.csv`. Any further columns are
/// optional numeric rating inputs (sentiment, HCAHPS), one value per row.
pub const FACT_COLUMNS: [&str; 11] = [
    "facility_id",
    "year",
    "month",
    "service_line",
    "base_class",
    "payor_group",
    "age_bucket",
    "zip_code",
    "physician_id",
    "drg_code",
    "count",
];

pub const PROFILE_COLUMNS: [&str; 12] = [
    "facility_id",
    "name",
    "system_id",
    "latitude",
    "longitude",
    "licensed_bed_cnt",
    "nurse_avg_rate",
    "service_area",
    "hospital_type",
    "ownership",
    "is_covid",
    "emergency_services",
];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FacilityId(pub String);

impl FacilityId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for FacilityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for FacilityId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

/// Encounter setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BaseClass {
    #[serde(rename = "ED")]
    Emergency,
    #[serde(rename = "Inpatient")]
    Inpatient,
    #[serde(rename = "Outpatient")]
    Outpatient,
}

impl BaseClass {
    pub const ALL: [BaseClass; 3] = [Self::Emergency, Self::Inpatient, Self::Outpatient];

    /// Suffix used in `baseclass_perc_*` feature names.
    pub fn code(self) -> &'static str {
        match self {
            Self::Emergency => "ED",
            Self::Inpatient => "IP",
            Self::Outpatient => "OP",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Emergency => "ED",
            Self::Inpatient => "Inpatient",
            Self::Outpatient => "Outpatient",
        }
    }
}

impl FromStr for BaseClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "ED" | "Emergency" | "Emergency Department" => Ok(Self::Emergency),
            "IP" | "Inpatient" => Ok(Self::Inpatient),
            "OP" | "Outpatient" => Ok(Self::Outpatient),
            other => Err(format!("unknown base class {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncounterFact {
    pub facility_id: FacilityId,
    pub month: MonthYear,
    pub service_line: String,
    pub base_class: BaseClass,
    pub payor_group: String,
    pub age_bucket: String,
    pub zip_code: String,
    pub physician_id: String,
    pub drg_code: String,
    pub count: u64,
    /// Values for [`FactTable::rating_columns`], same order.
    pub ratings: Vec<f64>,
}

impl EncounterFact {
    fn key(&self) -> FactKey<'_> {
        (
            &self.facility_id.0,
            self.month,
            &self.service_line,
            self.base_class,
            &self.payor_group,
            &self.age_bucket,
            &self.zip_code,
            &self.physician_id,
            &self.drg_code,
        )
    }
}

type FactKey<'a> = (
    &'a str,
    MonthYear,
    &'a str,
    BaseClass,
    &'a str,
    &'a str,
    &'a str,
    &'a str,
    &'a str,
);

/// Encounter facts plus the names of any optional rating columns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FactTable {
    pub rating_columns: Vec<String>,
    pub facts: Vec<EncounterFact>,
}

impl FactTable {
    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    /// Fails with `DuplicateKey` if two facts share the full dimension tuple.
    /// Line numbers assume one header line and one fact per line.
    pub fn check_unique(&self) -> Result<(), IngestError> {
        let mut seen: HashMap<FactKey<'_>, u64> = HashMap::with_capacity(self.facts.len());
        for (i, fact) in self.facts.iter().enumerate() {
            let line = i as u64 + 2;
            if let Some(first) = seen.insert(fact.key(), line) {
                return Err(IngestError::DuplicateKey { line, first });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacilityProfile {
    pub facility_id: FacilityId,
    pub name: String,
    pub system_id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub licensed_bed_cnt: u32,
    pub nurse_avg_rate: f64,
    pub service_area: String,
    pub hospital_type: String,
    pub ownership: String,
    pub is_covid: bool,
    pub emergency_services: bool,
}

impl FacilityProfile {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.latitude.abs() <= 90.0) {
            return Err(format!("latitude {} out of range", self.latitude));
        }
        if !(self.longitude.abs() <= 180.0) {
            return Err(format!("longitude {} out of range", self.longitude));
        }
        if self.licensed_bed_cnt < 1 {
            return Err("licensed_bed_cnt must be at least 1".into());
        }
        if !(0.0..=5.0).contains(&self.nurse_avg_rate) {
            return Err(format!("nurse_avg_rate {} outside 0-5", self.nurse_avg_rate));
        }
        Ok(())
    }
}

fn open(path: &Path) -> Result<csv::Reader<File>, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.to_owned(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> IngestError + '_ {
    move |source| IngestError::Csv {
        path: path.to_owned(),
        source,
    }
}

fn check_header(found: &csv::StringRecord, expected: &[&str], exact: bool) -> Result<(), IngestError> {
    let found: Vec<String> = found.iter().map(str::to_owned).collect();
    let prefix_ok = found.len() >= expected.len()
        && found.iter().zip(expected).all(|(f, e)| f == e);
    if !prefix_ok || (exact && found.len() != expected.len()) {
        return Err(IngestError::HeaderMismatch {
            expected: expected.iter().map(|s| (*s).to_owned()).collect(),
            found,
        });
    }
    Ok(())
}

fn field<'r>(record: &'r csv::StringRecord, idx: usize) -> &'r str {
    record.get(idx).unwrap_or("")
}

fn parse_fact(record: &csv::StringRecord, n_ratings: usize) -> Result<EncounterFact, String> {
    if record.len() != FACT_COLUMNS.len() + n_ratings {
        return Err(format!("expected {} fields, found {}", FACT_COLUMNS.len() + n_ratings, record.len()));
    }
    let non_empty = |idx: usize| -> Result<String, String> {
        let v = field(record, idx);
        if v.is_empty() {
            Err(format!("empty {}", FACT_COLUMNS[idx]))
        } else {
            Ok(v.to_owned())
        }
    };
    let year: i32 = field(record, 1)
        .parse()
        .map_err(|_| format!("bad year {:?}", field(record, 1)))?;
    let month_num: u32 = field(record, 2)
        .parse()
        .map_err(|_| format!("bad month {:?}", field(record, 2)))?;
    let month = MonthYear::new(year, month_num).ok_or_else(|| format!("month {month_num} out of range"))?;
    let count: u64 = field(record, 10)
        .parse()
        .map_err(|_| format!("count must be a non-negative integer, got {:?}", field(record, 10)))?;
    let ratings = (0..n_ratings)
        .map(|j| {
            let raw = field(record, FACT_COLUMNS.len() + j);
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("rating column {} is not numeric: {raw:?}", j + 1))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EncounterFact {
        facility_id: FacilityId(non_empty(0)?),
        month,
        service_line: non_empty(3)?,
        base_class: field(record, 4).parse()?,
        payor_group: non_empty(5)?,
        age_bucket: non_empty(6)?,
        zip_code: non_empty(7)?,
        physician_id: non_empty(8)?,
        drg_code: non_empty(9)?,
        count,
        ratings,
    })
}

/// Reads `encounters.csv`.
pub fn load_facts(path: &Path) -> Result<FactTable, IngestError> {
    let mut reader = open(path)?;
    let header = reader.headers().map_err(csv_err(path))?.clone();
    check_header(&header, &FACT_COLUMNS, false)?;
    let rating_columns: Vec<String> = header.iter().skip(FACT_COLUMNS.len()).map(str::to_owned).collect();

    let mut facts = Vec::new();
    let mut lines = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        let more = reader.read_record(&mut record).map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { pos: Some(pos), .. } => IngestError::MalformedRow {
                line: pos.line(),
                reason: "wrong number of fields".into(),
            },
            _ => csv_err(path)(e),
        })?;
        if !more {
            break;
        }
        let line = record.position().map_or(0, |p| p.line());
        let fact = parse_fact(&record, rating_columns.len())
            .map_err(|reason| IngestError::MalformedRow { line, reason })?;
        facts.push(fact);
        lines.push(line);
    }
    let table = FactTable {
        rating_columns,
        facts,
    };
    // Remap positional line numbers to the real ones from the reader.
    table.check_unique().map_err(|e| match e {
        IngestError::DuplicateKey { line, first } => IngestError::DuplicateKey {
            line: lines[(line - 2) as usize],
            first: lines[(first - 2) as usize],
        },
        other => other,
    })?;
    Ok(table)
}

pub fn write_facts(path: &Path, table: &FactTable) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let header: Vec<&str> = FACT_COLUMNS
        .iter()
        .copied()
        .chain(table.rating_columns.iter().map(String::as_str))
        .collect();
    w.write_record(&header).map_err(csv_err(path))?;
    for f in &table.facts {
        let mut rec: Vec<String> = vec![
            f.facility_id.0.clone(),
            f.month.year().to_string(),
            f.month.month().to_string(),
            f.service_line.clone(),
            f.base_class.as_str().to_owned(),
            f.payor_group.clone(),
            f.age_bucket.clone(),
            f.zip_code.clone(),
            f.physician_id.clone(),
            f.drg_code.clone(),
            f.count.to_string(),
        ];
        rec.extend(f.ratings.iter().map(|r| r.to_string()));
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| IngestError::Io {
        path: path.to_owned(),
        source,
    })
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "y" => Ok(true),
        "false" | "0" | "no" | "n" => Ok(false),
        other => Err(format!("not a boolean: {other:?}")),
    }
}

fn parse_profile(record: &csv::StringRecord) -> Result<FacilityProfile, String> {
    if record.len() != PROFILE_COLUMNS.len() {
        return Err(format!("expected {} fields, found {}", PROFILE_COLUMNS.len(), record.len()));
    }
    let num = |idx: usize| -> Result<f64, String> {
        field(record, idx)
            .parse::<f64>()
            .map_err(|_| format!("{} is not numeric: {:?}", PROFILE_COLUMNS[idx], field(record, idx)))
    };
    let id = field(record, 0);
    if id.is_empty() {
        return Err("empty facility_id".into());
    }
    let profile = FacilityProfile {
        facility_id: FacilityId::new(id),
        name: field(record, 1).to_owned(),
        system_id: field(record, 2).to_owned(),
        latitude: num(3)?,
        longitude: num(4)?,
        licensed_bed_cnt: field(record, 5)
            .parse()
            .map_err(|_| format!("licensed_bed_cnt is not a positive integer: {:?}", field(record, 5)))?,
        nurse_avg_rate: num(6)?,
        service_area: field(record, 7).to_owned(),
        hospital_type: field(record, 8).to_owned(),
        ownership: field(record, 9).to_owned(),
        is_covid: parse_bool(field(record, 10))?,
        emergency_services: parse_bool(field(record, 11))?,
    };
    profile.validate()?;
    Ok(profile)
}

/// Reads `facilities.csv`; facility ids must be unique.
pub fn load_profiles(path: &Path) -> Result<Vec<FacilityProfile>, IngestError> {
    let mut reader = open(path)?;
    let header = reader.headers().map_err(csv_err(path))?.clone();
    check_header(&header, &PROFILE_COLUMNS, true)?;
    let mut out = Vec::new();
    let mut seen: HashMap<FacilityId, u64> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(csv_err(path))?;
        let line = record.position().map_or(0, |p| p.line());
        let profile = parse_profile(&record).map_err(|reason| IngestError::MalformedRow { line, reason })?;
        if let Some(first) = seen.insert(profile.facility_id.clone(), line) {
            return Err(IngestError::DuplicateKey { line, first });
        }
        out.push(profile);
    }
    Ok(out)
}

pub fn write_profiles(path: &Path, profiles: &[FacilityProfile]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(PROFILE_COLUMNS).map_err(csv_err(path))?;
    for p in profiles {
        w.write_record([
            p.facility_id.0.clone(),
            p.name.clone(),
            p.system_id.clone(),
            p.latitude.to_string(),
            p.longitude.to_string(),
            p.licensed_bed_cnt.to_string(),
            p.nurse_avg_rate.to_string(),
            p.service_area.clone(),
            p.hospital_type.clone(),
            p.ownership.clone(),
            p.is_covid.to_string(),
            p.emergency_services.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| IngestError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Writes `contents` to `path`, mapping the error into [`IngestError`].
pub(crate) fn write_text(path: &Path, contents: &str) -> Result<(), IngestError> {
    let io = |source| IngestError::Io {
        path: path.to_owned(),
        source,
    };
    let mut f = File::create(path).map_err(io)?;
    f.write_all(contents.as_bytes()).map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str =
        "facility_id,year,month,service_line,base_class,payor_group,age_bucket,zip_code,physician_id,drg_code,count\n";

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_three_rows() {
        let f = write_tmp(&format!(
            "{HEADER}F1,2020,1,Heart,ED,SelfPay,30to40,98101,P1,DRG291,5\n\
             F1,2020,1,Heart,Inpatient,SelfPay,30to40,98101,P1,DRG291,7\n\
             F2,2020,2,Cancer,Outpatient,SelfPay,80Plus,98102,P2,DRG100,0\n"
        ));
        let table = load_facts(f.path()).unwrap();
        assert_eq!(table.len(), 3);
        assert_eq!(table.facts[1].base_class, BaseClass::Inpatient);
        assert_eq!(table.facts[2].count, 0);
        assert!(table.rating_columns.is_empty());
    }

    #[test]
    fn negative_count_is_malformed() {
        let f = write_tmp(&format!("{HEADER}F1,2020,1,Heart,ED,SelfPay,30to40,98101,P1,DRG291,-1\n"));
        match load_facts(f.path()) {
            Err(IngestError::MalformedRow { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected MalformedRow, got {other:?}"),
        }
    }

    #[test]
    fn repeated_key_is_duplicate() {
        let f = write_tmp(&format!(
            "{HEADER}F1,2020,1,Heart,ED,SelfPay,30to40,98101,P1,DRG291,5\n\
             F1,2020,1,Heart,ED,SelfPay,30to40,98101,P1,DRG291,9\n"
        ));
        match load_facts(f.path()) {
            Err(IngestError::DuplicateKey { line, first }) => {
                assert_eq!((first, line), (2, 3));
            }
            other => panic!("expected DuplicateKey, got {other:?}"),
        }
    }

    #[test]
    fn wrong_header_rejected() {
        let f = write_tmp("facility,year\nF1,2020\n");
        assert!(matches!(load_facts(f.path()), Err(IngestError::HeaderMismatch { .. })));
    }

    #[test]
    fn extra_columns_become_ratings() {
        let header = HEADER.trim_end().to_owned() + ",nurse_sentiment\n";
        let f = write_tmp(&format!("{header}F1,2020,1,Heart,ED,SelfPay,30to40,98101,P1,DRG291,5,3.5\n"));
        let table = load_facts(f.path()).unwrap();
        assert_eq!(table.rating_columns, vec!["nurse_sentiment"]);
        assert_eq!(table.facts[0].ratings, vec![3.5]);
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_facts(Path::new("/nonexistent/encounters.csv")),
            Err(IngestError::Io { .. })
        ));
    }

    #[test]
    fn profile_latitude_checked() {
        let f = write_tmp(
            "facility_id,name,system_id,latitude,longitude,licensed_bed_cnt,nurse_avg_rate,service_area,hospital_type,ownership,is_covid,emergency_services\n\
             F1,One,S1,95.0,-120.0,10,3.0,A,Acute,Gov,true,false\n",
        );
        assert!(matches!(load_profiles(f.path()), Err(IngestError::MalformedRow { .. })));
    }

    #[test]
    fn profiles_round_trip() {
        let p = FacilityProfile {
            facility_id: "F1".into(),
            name: "One".into(),
            system_id: "S1".into(),
            latitude: 47.6,
            longitude: -122.3,
            licensed_bed_cnt: 120,
            nurse_avg_rate: 3.25,
            service_area: "WA-MT SE WA".into(),
            hospital_type: "Childrens".into(),
            ownership: "Proprietary".into(),
            is_covid: true,
            emergency_services: false,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("facilities.csv");
        write_profiles(&path, std::slice::from_ref(&p)).unwrap();
        assert_eq!(load_profiles(&path).unwrap(), vec![p]);
    }
}
