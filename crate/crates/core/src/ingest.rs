//! Consultation and physician record files.
//!
//! Consultations: `patient_id,physician_id,date,hospital_id` with ISO dates.
//! Physicians: `physician_id,gender,birth_year,specialty,school,residency,hospitals`
//! where `hospitals` is `;`-separated. Lines starting with `#` are comments.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Role;

pub const CONSULTATION_HEADER: [&str; 4] = ["patient_id", "physician_id", "date", "hospital_id"];
pub const PHYSICIAN_HEADER: [&str; 7] = [
    "physician_id",
    "gender",
    "birth_year",
    "specialty",
    "school",
    "residency",
    "hospitals",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl StudyWindow {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::invalid(format!("study window {start}..{end} is empty")));
        }
        Ok(StudyWindow { start, end })
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }

    pub fn end_year(&self) -> i32 {
        self.end.year()
    }
}

impl Default for StudyWindow {
    fn default() -> Self {
        StudyWindow {
            start: NaiveDate::from_ymd_opt(2012, 1, 1).unwrap(),
            end: NaiveDate::from_ymd_opt(2017, 12, 31).unwrap(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ConsultationRecord {
    pub patient_id: String,
    pub physician_id: String,
    pub date: NaiveDate,
    pub hospital_id: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RejectReason {
    BadDate,
    OutOfWindow,
    EmptyId,
    FieldCount,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::BadDate => "bad_date",
            RejectReason::OutOfWindow => "out_of_window",
            RejectReason::EmptyId => "empty_id",
            RejectReason::FieldCount => "field_count",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rejection {
    /// 1-based index of the data row (header excluded).
    pub row_number: usize,
    pub reason: RejectReason,
}

#[derive(Clone, Debug, Default)]
pub struct ConsultationTable {
    /// Sorted by `(patient_id, date, physician_id, hospital_id)`.
    pub records: Vec<ConsultationRecord>,
    pub rejections: Vec<Rejection>,
}

impl ConsultationTable {
    pub fn input_rows(&self) -> usize {
        self.records.len() + self.rejections.len()
    }

    pub fn rejection_counts(&self) -> HashMap<RejectReason, usize> {
        let mut counts = HashMap::new();
        for r in &self.rejections {
            *counts.entry(r.reason).or_insert(0) += 1;
        }
        counts
    }

    pub fn write_rejections<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["row_number", "reason"])?;
        for r in &self.rejections {
            wtr.write_record([r.row_number.to_string(), r.reason.as_str().to_string()])?;
        }
        wtr.flush().map_err(|e| Error::io("<rejections>", e))?;
        Ok(())
    }
}

fn reader<R: Read>(rdr: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(rdr)
}

fn check_header<R: Read>(
    rdr: &mut csv::Reader<R>,
    expected: &[&str],
    label: &Path,
) -> Result<()> {
    let found = rdr.headers()?.clone();
    if found.iter().ne(expected.iter().copied()) {
        return Err(Error::Header {
            path: label.to_path_buf(),
            expected: expected.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(())
}

pub fn load_consultations(path: impl AsRef<Path>, window: StudyWindow) -> Result<ConsultationTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_consultations(file, window, path)
}

pub fn read_consultations<R: Read>(
    input: R,
    window: StudyWindow,
    label: impl AsRef<Path>,
) -> Result<ConsultationTable> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &CONSULTATION_HEADER, label.as_ref())?;
    let mut table = ConsultationTable::default();
    for (i, row) in rdr.records().enumerate() {
        let row_number = i + 1;
        let row = row?;
        let reject = |reason| Rejection { row_number, reason };
        if row.len() != CONSULTATION_HEADER.len() {
            table.rejections.push(reject(RejectReason::FieldCount));
            continue;
        }
        let (patient, physician, date, hospital) = (&row[0], &row[1], &row[2], &row[3]);
        if patient.is_empty() || physician.is_empty() || hospital.is_empty() {
            table.rejections.push(reject(RejectReason::EmptyId));
            continue;
        }
        let Ok(date) = NaiveDate::parse_from_str(date, "%Y-%m-%d") else {
            table.rejections.push(reject(RejectReason::BadDate));
            continue;
        };
        if !window.contains(date) {
            table.rejections.push(reject(RejectReason::OutOfWindow));
            continue;
        }
        table.records.push(ConsultationRecord {
            patient_id: patient.to_string(),
            physician_id: physician.to_string(),
            date,
            hospital_id: hospital.to_string(),
        });
    }
    sort_records(&mut table.records);
    Ok(table)
}

/// Canonical order: `(patient_id, date, physician_id, hospital_id)`.
pub fn sort_records(records: &mut [ConsultationRecord]) {
    records.sort_unstable_by(|a, b| {
        (&a.patient_id, a.date, &a.physician_id, &a.hospital_id)
            .cmp(&(&b.patient_id, b.date, &b.physician_id, &b.hospital_id))
    });
}

pub fn write_consultations<W: Write>(records: &[ConsultationRecord], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(CONSULTATION_HEADER)?;
    for r in records {
        wtr.write_record([
            r.patient_id.as_str(),
            r.physician_id.as_str(),
            &r.date.format("%Y-%m-%d").to_string(),
            r.hospital_id.as_str(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<consultations>", e))?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Gender {
    F,
    M,
    Unknown,
}

impl Gender {
    fn parse(s: &str) -> Gender {
        match s.trim().to_ascii_uppercase().as_str() {
            "F" => Gender::F,
            "M" => Gender::M,
            _ => Gender::Unknown,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::F => "F",
            Gender::M => "M",
            Gender::Unknown => "",
        }
    }

    /// F = 0, M = 1; unknown sits halfway.
    pub fn code(self) -> f64 {
        match self {
            Gender::F => 0.0,
            Gender::M => 1.0,
            Gender::Unknown => 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhysicianProfile {
    pub physician_id: String,
    pub gender: Gender,
    pub birth_year: Option<i32>,
    pub role: Role,
    pub specialty: Option<String>,
    pub school: Option<String>,
    pub residency_institution: Option<String>,
    pub hospital_ids: BTreeSet<String>,
}

impl PhysicianProfile {
    pub fn has_background(&self) -> bool {
        self.school.is_some() || self.residency_institution.is_some() || !self.hospital_ids.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RoleCensus {
    pub pc: usize,
    pub sc: usize,
    pub unknown: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct IngestConfig {
    pub window: StudyWindow,
    /// Specialties (case-insensitive) that make a physician primary care.
    pub primary_care_specialties: Vec<String>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            window: StudyWindow::default(),
            primary_care_specialties: vec!["family medicine".into(), "general practice".into()],
        }
    }
}

impl IngestConfig {
    pub fn role_for(&self, specialty: Option<&str>) -> Role {
        match specialty {
            None => Role::Unknown,
            Some(s) => {
                let s = s.trim().to_lowercase();
                if self
                    .primary_care_specialties
                    .iter()
                    .any(|p| p.trim().to_lowercase() == s)
                {
                    Role::Pc
                } else {
                    Role::Sc
                }
            }
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct PhysicianTable {
    /// Sorted by physician id.
    pub profiles: Vec<PhysicianProfile>,
    index: HashMap<String, usize>,
}

/// Derived age with its imputation flag.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Age {
    pub years: f64,
    pub imputed: bool,
}

impl PhysicianTable {
    pub fn new(mut profiles: Vec<PhysicianProfile>) -> Result<Self> {
        profiles.sort_by(|a, b| a.physician_id.cmp(&b.physician_id));
        let mut index = HashMap::with_capacity(profiles.len());
        for (i, p) in profiles.iter().enumerate() {
            if index.insert(p.physician_id.clone(), i).is_some() {
                return Err(Error::DuplicatePhysician(p.physician_id.clone()));
            }
        }
        Ok(PhysicianTable { profiles, index })
    }

    pub fn get(&self, id: &str) -> Option<&PhysicianProfile> {
        self.index.get(id).map(|&i| &self.profiles[i])
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn role_of(&self, id: &str) -> Role {
        self.get(id).map_or(Role::Unknown, |p| p.role)
    }

    pub fn census(&self) -> RoleCensus {
        let mut c = RoleCensus::default();
        for p in &self.profiles {
            match p.role {
                Role::Pc => c.pc += 1,
                Role::Sc => c.sc += 1,
                Role::Unknown => c.unknown += 1,
            }
        }
        c
    }

    /// Age at the end of the study; unknown birth years take the median age
    /// of physicians with the same role (all physicians if that role has none).
    pub fn ages(&self, end_year: i32) -> Result<Vec<Age>> {
        let known = |role: Option<Role>| -> Vec<f64> {
            self.profiles
                .iter()
                .filter(|p| role.is_none_or(|r| p.role == r))
                .filter_map(|p| p.birth_year.map(|y| f64::from(end_year - y)))
                .collect()
        };
        let overall = median(known(None));
        let per_role: HashMap<Role, Option<f64>> = [Role::Pc, Role::Sc, Role::Unknown]
            .into_iter()
            .map(|r| (r, median(known(Some(r)))))
            .collect();
        self.profiles
            .iter()
            .map(|p| match p.birth_year {
                Some(y) => Ok(Age {
                    years: f64::from(end_year - y),
                    imputed: false,
                }),
                None => per_role[&p.role]
                    .or(overall)
                    .map(|years| Age { years, imputed: true })
                    .ok_or_else(|| Error::invalid("no known birth year to impute from")),
            })
            .collect()
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

pub fn load_physicians(path: impl AsRef<Path>, cfg: &IngestConfig) -> Result<PhysicianTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_physicians(file, cfg, path)
}

pub fn read_physicians<R: Read>(
    input: R,
    cfg: &IngestConfig,
    label: impl AsRef<Path>,
) -> Result<PhysicianTable> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &PHYSICIAN_HEADER, label.as_ref())?;
    let end_year = cfg.window.end_year();
    let opt = |s: &str| (!s.is_empty()).then(|| s.to_string());
    let mut profiles = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        if row.len() != PHYSICIAN_HEADER.len() {
            return Err(Error::invalid(format!(
                "{}: physician row {} has {} fields",
                label.as_ref().display(),
                i + 1,
                row.len()
            )));
        }
        if row[0].is_empty() {
            return Err(Error::invalid(format!(
                "{}: physician row {} has an empty id",
                label.as_ref().display(),
                i + 1
            )));
        }
        let birth_year = row[2]
            .parse::<i32>()
            .ok()
            .filter(|y| (1900..=end_year).contains(y));
        let specialty = opt(&row[3]);
        profiles.push(PhysicianProfile {
            physician_id: row[0].to_string(),
            gender: Gender::parse(&row[1]),
            birth_year,
            role: cfg.role_for(specialty.as_deref()),
            specialty,
            school: opt(&row[4]),
            residency_institution: opt(&row[5]),
            hospital_ids: row[6]
                .split(';')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect(),
        });
    }
    PhysicianTable::new(profiles)
}

pub fn write_physicians<W: Write>(profiles: &[PhysicianProfile], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(PHYSICIAN_HEADER)?;
    for p in profiles {
        let hospitals: Vec<&str> = p.hospital_ids.iter().map(String::as_str).collect();
        wtr.write_record([
            p.physician_id.clone(),
            p.gender.as_str().to_string(),
            p.birth_year.map(|y| y.to_string()).unwrap_or_default(),
            p.specialty.clone().unwrap_or_default(),
            p.school.clone().unwrap_or_default(),
            p.residency_institution.clone().unwrap_or_default(),
            hospitals.join(";"),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<physicians>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER: &str = "patient_id,physician_id,date,hospital_id\n";

    fn load(body: &str) -> ConsultationTable {
        read_consultations(
            format!("{HEADER}{body}").as_bytes(),
            StudyWindow::default(),
            "test.csv",
        )
        .unwrap()
    }

    #[test]
    fn valid_rows_accepted() {
        let t = load("p1,d1,2013-01-02,h1\np2,d2,2014-05-06,h1\np1,d3,2012-07-08,h2\n");
        assert_eq!(t.records.len(), 3);
        assert!(t.rejections.is_empty());
        assert_eq!(t.records[0].physician_id, "d3");
    }

    #[test]
    fn bad_date_rejected() {
        let t = load("p1,d1,2020-13-40,h1\n");
        assert!(t.records.is_empty());
        assert_eq!(
            t.rejections,
            vec![Rejection {
                row_number: 1,
                reason: RejectReason::BadDate
            }]
        );
    }

    #[test]
    fn out_of_window_rejected() {
        let t = load("p1,d1,2011-12-31,h1\np1,d1,2012-01-01,h1\n");
        assert_eq!(t.records.len(), 1);
        assert_eq!(t.rejections[0].reason, RejectReason::OutOfWindow);
    }

    #[test]
    fn malformed_header_is_fatal() {
        let err = read_consultations(
            "patient,physician,date,hospital\n".as_bytes(),
            StudyWindow::default(),
            "x.csv",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Header { .. }));
    }

    #[test]
    fn missing_file_is_fatal() {
        assert!(matches!(
            load_consultations("/nonexistent/consults.csv", StudyWindow::default()),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn short_rows_and_empty_ids_rejected() {
        let t = load("p1,d1,2013-01-02\n,d1,2013-01-02,h1\n");
        let reasons: Vec<_> = t.rejections.iter().map(|r| r.reason).collect();
        assert_eq!(reasons, vec![RejectReason::FieldCount, RejectReason::EmptyId]);
    }

    const PHYS_HEADER: &str = "physician_id,gender,birth_year,specialty,school,residency,hospitals\n";

    fn physicians(body: &str) -> Result<PhysicianTable> {
        read_physicians(
            format!("{PHYS_HEADER}{body}").as_bytes(),
            &IngestConfig::default(),
            "phys.csv",
        )
    }

    #[test]
    fn census_counts_roles() {
        let t = physicians(
            "a,F,1970,Family Medicine,S1,R1,H1\n\
             b,M,1965,General Practice,S1,,H1;H2\n\
             c,F,1980,Cardiology,S2,R1,H2\n\
             d,M,1975,Orthopedics,,,\n\
             e,F,,Radiology,S3,,H3\n",
        )
        .unwrap();
        assert_eq!(t.census(), RoleCensus { pc: 2, sc: 3, unknown: 0 });
        assert_eq!(t.get("b").unwrap().hospital_ids.len(), 2);
        assert!(!t.get("d").unwrap().has_background());
    }

    #[test]
    fn duplicate_id_fatal() {
        let err = physicians("a,F,1970,Cardiology,,,\na,M,1971,Cardiology,,,\n").unwrap_err();
        assert!(matches!(err, Error::DuplicatePhysician(id) if id == "a"));
    }

    #[test]
    fn empty_specialty_is_unknown_role() {
        let t = physicians("a,F,1970,,S1,,H1\n").unwrap();
        assert_eq!(t.get("a").unwrap().role, Role::Unknown);
    }

    #[test]
    fn ages_impute_same_role_median() {
        let t = physicians(
            "a,F,1970,Cardiology,,,\nb,F,1980,Cardiology,,,\nc,M,,Cardiology,,,\nd,M,1950,Family Medicine,,,\n",
        )
        .unwrap();
        let ages = t.ages(2017).unwrap();
        // sorted by id: a, b, c, d
        assert_eq!(ages[2], Age { years: 42.0, imputed: true });
        assert_eq!(ages[3], Age { years: 67.0, imputed: false });
    }

    #[test]
    fn out_of_range_birth_year_becomes_unknown() {
        let t = physicians("a,F,1850,Cardiology,,,\nb,F,2030,Cardiology,,,\n").unwrap();
        assert!(t.profiles.iter().all(|p| p.birth_year.is_none()));
    }

    proptest! {
        #[test]
        fn shuffled_input_gives_identical_table(
            rows in prop::collection::vec((0u8..5, 0u8..5, 0u32..3000, prop::bool::ANY), 0..30),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let lines: Vec<String> = rows
                .iter()
                .map(|(p, d, day, bad)| {
                    let date = NaiveDate::from_ymd_opt(2011, 1, 1).unwrap()
                        + chrono::Days::new(u64::from(*day));
                    let date = if *bad { "garbage".to_string() } else { date.to_string() };
                    format!("p{p},d{d},{date},h1")
                })
                .collect();
            let mut shuffled = lines.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = load(&(lines.join("\n") + "\n"));
            let b = load(&(shuffled.join("\n") + "\n"));
            prop_assert_eq!(&a.records, &b.records);
            prop_assert_eq!(a.input_rows(), rows.len());
        }
    }
}
