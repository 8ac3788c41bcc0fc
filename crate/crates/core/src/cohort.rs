//! Patient cohorts: ingestion, completeness filtering and daily aggregation.
//!
//! Missing biomarkers are explicit `None`s end to end. Nothing here imputes a
//! value; incomplete records are either excluded (and reported) or carried
//! until [`aggregate_daily`] drops them.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DATETIME_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";
pub const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema error: missing required column `{0}`")]
    MissingColumn(String),
    #[error("ingestion error: duplicate (patient, recorded_at) rows: {}", format_pairs(.0))]
    DuplicateRecords(Vec<(String, String)>),
    #[error("ingestion error: no outcome for patient(s) {}", .0.join(", "))]
    MissingOutcome(Vec<String>),
    #[error("ingestion error: patient {patient} has conflicting {field} values")]
    InconsistentOutcome { patient: String, field: &'static str },
    #[error("ingestion error: patient {patient}: invalid {field} `{value}`")]
    InvalidOutcome { patient: String, field: &'static str, value: String },
    #[error("duplicate patient id `{0}` in cohort")]
    DuplicatePatient(String),
}

fn format_pairs(pairs: &[(String, String)]) -> String {
    pairs.iter().map(|(p, t)| format!("{p}@{t}")).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BiomarkerError {
    #[error("{field} must be finite and non-negative, got {value}")]
    Negative { field: &'static str, value: f64 },
    #[error("lymphocyte_pct must lie in [0, 100], got {0}")]
    PercentOutOfRange(f64),
}

/// Patient outcome, `Death` is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Outcome {
    Survival,
    Death,
}

impl Outcome {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Outcome::Survival),
            1 => Some(Outcome::Death),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Outcome::Survival => 0,
            Outcome::Death => 1,
        }
    }

    pub fn is_death(self) -> bool {
        self == Outcome::Death
    }

    pub fn name(self) -> &'static str {
        match self {
            Outcome::Survival => "survival",
            Outcome::Death => "death",
        }
    }
}

impl From<Outcome> for u8 {
    fn from(o: Outcome) -> u8 {
        o.code()
    }
}

impl TryFrom<u8> for Outcome {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        Outcome::from_code(v).ok_or_else(|| format!("outcome must be 0 or 1, got {v}"))
    }
}

/// A complete, validated biomarker triple in raw units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biomarkers {
    /// U/L
    pub ldh: f64,
    /// percent of white cells
    pub lymphocyte_pct: f64,
    /// mg/L
    pub hs_crp: f64,
}

impl Biomarkers {
    pub fn new(ldh: f64, lymphocyte_pct: f64, hs_crp: f64) -> Result<Self, BiomarkerError> {
        check_concentration("ldh", ldh)?;
        check_percent(lymphocyte_pct)?;
        check_concentration("hs_crp", hs_crp)?;
        Ok(Biomarkers { ldh, lymphocyte_pct, hs_crp })
    }
}

fn check_concentration(field: &'static str, value: f64) -> Result<(), BiomarkerError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(BiomarkerError::Negative { field, value })
    }
}

fn check_percent(value: f64) -> Result<(), BiomarkerError> {
    if (0.0..=100.0).contains(&value) {
        Ok(())
    } else {
        Err(BiomarkerError::PercentOutOfRange(value))
    }
}

/// One timestamped measurement row for one patient. Any biomarker may be absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiomarkerRecord {
    pub patient_id: String,
    pub recorded_at: NaiveDateTime,
    pub ldh: Option<f64>,
    pub lymphocyte_pct: Option<f64>,
    pub hs_crp: Option<f64>,
}

impl BiomarkerRecord {
    pub fn new(
        patient_id: impl Into<String>,
        recorded_at: NaiveDateTime,
        ldh: Option<f64>,
        lymphocyte_pct: Option<f64>,
        hs_crp: Option<f64>,
    ) -> Result<Self, BiomarkerError> {
        if let Some(v) = ldh {
            check_concentration("ldh", v)?;
        }
        if let Some(v) = lymphocyte_pct {
            check_percent(v)?;
        }
        if let Some(v) = hs_crp {
            check_concentration("hs_crp", v)?;
        }
        Ok(BiomarkerRecord { patient_id: patient_id.into(), recorded_at, ldh, lymphocyte_pct, hs_crp })
    }

    pub fn complete(patient_id: impl Into<String>, recorded_at: NaiveDateTime, markers: Biomarkers) -> Self {
        BiomarkerRecord {
            patient_id: patient_id.into(),
            recorded_at,
            ldh: Some(markers.ldh),
            lymphocyte_pct: Some(markers.lymphocyte_pct),
            hs_crp: Some(markers.hs_crp),
        }
    }

    /// The full triple, if every biomarker is present.
    pub fn biomarkers(&self) -> Option<Biomarkers> {
        Some(Biomarkers { ldh: self.ldh?, lymphocyte_pct: self.lymphocyte_pct?, hs_crp: self.hs_crp? })
    }

    pub fn is_complete(&self) -> bool {
        self.biomarkers().is_some()
    }

    pub fn missing_fields(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.ldh.is_none() {
            out.push("ldh");
        }
        if self.lymphocyte_pct.is_none() {
            out.push("lymphocyte_pct");
        }
        if self.hs_crp.is_none() {
            out.push("hs_crp");
        }
        out
    }

    pub fn day(&self) -> NaiveDate {
        self.recorded_at.date()
    }
}

/// When the final outcome (death or discharge) happened.
///
/// A bare date gives day-granular days-to-outcome; a full timestamp gives
/// fractional days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum OutcomeTime {
    Date(NaiveDate),
    DateTime(NaiveDateTime),
}

impl OutcomeTime {
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, DATETIME_FORMAT) {
            return Some(OutcomeTime::DateTime(dt));
        }
        NaiveDate::parse_from_str(s, DATE_FORMAT).ok().map(OutcomeTime::Date)
    }

    pub fn date(&self) -> NaiveDate {
        match self {
            OutcomeTime::Date(d) => *d,
            OutcomeTime::DateTime(dt) => dt.date(),
        }
    }

    /// Real-valued days from `at` until the outcome; negative when `at` is later.
    pub fn days_after(&self, at: NaiveDateTime) -> f64 {
        match self {
            OutcomeTime::Date(d) => (*d - at.date()).num_days() as f64,
            OutcomeTime::DateTime(dt) => (*dt - at).num_milliseconds() as f64 / 86_400_000.0,
        }
    }
}

impl fmt::Display for OutcomeTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutcomeTime::Date(d) => write!(f, "{}", d.format(DATE_FORMAT)),
            OutcomeTime::DateTime(dt) => write!(f, "{}", dt.format(DATETIME_FORMAT)),
        }
    }
}

impl Serialize for OutcomeTime {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for OutcomeTime {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        OutcomeTime::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("bad outcome date `{s}`")))
    }
}

/// A patient's records in chronological order plus the final outcome.
///
/// Straight after ingestion the records may be incomplete and several may
/// share a day; [`aggregate_daily`] produces the one-complete-record-per-day
/// form used downstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientTimeline {
    pub patient_id: String,
    pub records: Vec<BiomarkerRecord>,
    pub outcome: Outcome,
    pub outcome_time: OutcomeTime,
}

impl PatientTimeline {
    pub fn new(
        patient_id: impl Into<String>,
        mut records: Vec<BiomarkerRecord>,
        outcome: Outcome,
        outcome_time: OutcomeTime,
    ) -> Self {
        records.sort_by_key(|r| r.recorded_at);
        PatientTimeline { patient_id: patient_id.into(), records, outcome, outcome_time }
    }

    /// True when every record is complete and days are strictly increasing.
    pub fn is_daily(&self) -> bool {
        self.records.iter().all(BiomarkerRecord::is_complete)
            && self.records.windows(2).all(|w| w[0].day() < w[1].day())
    }

    pub fn has_complete_record(&self) -> bool {
        self.records.iter().any(BiomarkerRecord::is_complete)
    }

    /// The latest complete record: the one a per-patient model scores.
    pub fn final_complete_record(&self) -> Option<&BiomarkerRecord> {
        self.records.iter().rev().find(|r| r.is_complete())
    }
}

/// One labeled, complete observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub patient_id: String,
    pub biomarkers: Biomarkers,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortDataset {
    pub label: String,
    patients: Vec<PatientTimeline>,
}

impl CohortDataset {
    pub fn new(label: impl Into<String>, patients: Vec<PatientTimeline>) -> Result<Self, CohortError> {
        let mut seen = HashMap::with_capacity(patients.len());
        for p in &patients {
            if seen.insert(p.patient_id.as_str(), ()).is_some() {
                return Err(CohortError::DuplicatePatient(p.patient_id.clone()));
            }
        }
        Ok(CohortDataset { label: label.into(), patients })
    }

    pub fn patients(&self) -> &[PatientTimeline] {
        &self.patients
    }

    pub fn len(&self) -> usize {
        self.patients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }

    pub fn deaths(&self) -> usize {
        self.patients.iter().filter(|p| p.outcome.is_death()).count()
    }

    pub fn record_count(&self) -> usize {
        self.patients.iter().map(|p| p.records.len()).sum()
    }

    pub fn with_label(&self, label: impl Into<String>) -> Self {
        CohortDataset { label: label.into(), patients: self.patients.clone() }
    }

    /// Concatenate two cohorts. Fails on shared patient ids.
    pub fn merge(&self, other: &CohortDataset, label: impl Into<String>) -> Result<Self, CohortError> {
        let mut patients = self.patients.clone();
        patients.extend(other.patients.iter().cloned());
        CohortDataset::new(label, patients)
    }

    /// One sample per patient from its latest complete record; patients
    /// without a complete record contribute nothing.
    pub fn final_samples(&self) -> Vec<Sample> {
        self.patients
            .iter()
            .filter_map(|p| {
                let rec = p.final_complete_record()?;
                Some(Sample { patient_id: p.patient_id.clone(), biomarkers: rec.biomarkers()?, outcome: p.outcome })
            })
            .collect()
    }

    /// Serialize in the ingestion CSV schema with default column names.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), CohortError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(Schema::default().columns())?;
        for p in &self.patients {
            let outcome = p.outcome.code().to_string();
            let outcome_time = p.outcome_time.to_string();
            for r in &p.records {
                w.write_record([
                    p.patient_id.as_str(),
                    &r.recorded_at.format(DATETIME_FORMAT).to_string(),
                    &fmt_opt(r.ldh),
                    &fmt_opt(r.lymphocyte_pct),
                    &fmt_opt(r.hs_crp),
                    &outcome,
                    &outcome_time,
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Maps logical fields to the header names used in a particular file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub patient_id: String,
    pub recorded_at: String,
    pub ldh: String,
    pub lymphocyte_pct: String,
    pub hs_crp: String,
    pub outcome: String,
    pub outcome_date: String,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            patient_id: "patient_id".into(),
            recorded_at: "recorded_at".into(),
            ldh: "ldh".into(),
            lymphocyte_pct: "lymphocyte_pct".into(),
            hs_crp: "hs_crp".into(),
            outcome: "outcome".into(),
            outcome_date: "outcome_date".into(),
        }
    }
}

impl Schema {
    pub fn columns(&self) -> [&str; 7] {
        [
            &self.patient_id,
            &self.recorded_at,
            &self.ldh,
            &self.lymphocyte_pct,
            &self.hs_crp,
            &self.outcome,
            &self.outcome_date,
        ]
    }
}

/// A row that could not be turned into a record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowIssue {
    /// 1-based line number in the file, counting the header as line 1.
    pub line: u64,
    pub patient_id: String,
    pub column: String,
    pub value: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct LoadedCohort {
    pub cohort: CohortDataset,
    /// Rows dropped because a field failed to parse or validate.
    pub issues: Vec<RowIssue>,
}

impl LoadedCohort {
    /// Issues rendered as exclusion-report rows.
    pub fn issue_report(&self) -> ExclusionReport {
        ExclusionReport {
            entries: self
                .issues
                .iter()
                .map(|i| Exclusion {
                    patient_id: i.patient_id.clone(),
                    reason: ExclusionReason::UnparseableRow,
                    detail: format!("line {}: {}=`{}`: {}", i.line, i.column, i.value, i.reason),
                })
                .collect(),
        }
    }
}

pub fn load_cohort(path: impl AsRef<Path>, schema: &Schema, label: &str) -> Result<LoadedCohort, CohortError> {
    let file = std::fs::File::open(path)?;
    read_cohort(file, schema, label)
}

#[derive(Default)]
struct PatientAccumulator {
    records: Vec<BiomarkerRecord>,
    outcome: Option<Outcome>,
    outcome_time: Option<OutcomeTime>,
}

pub fn read_cohort<R: Read>(reader: R, schema: &Schema, label: &str) -> Result<LoadedCohort, CohortError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize, CohortError> {
        headers.iter().position(|h| h == name).ok_or_else(|| CohortError::MissingColumn(name.to_string()))
    };
    let i_pid = col(&schema.patient_id)?;
    let i_at = col(&schema.recorded_at)?;
    let i_ldh = col(&schema.ldh)?;
    let i_lym = col(&schema.lymphocyte_pct)?;
    let i_crp = col(&schema.hs_crp)?;
    let i_out = col(&schema.outcome)?;
    let i_odate = col(&schema.outcome_date)?;

    let mut order: Vec<String> = Vec::new();
    let mut acc: HashMap<String, PatientAccumulator> = HashMap::new();
    let mut issues = Vec::new();

    for (idx, row) in rdr.records().enumerate() {
        let row = row?;
        let line = idx as u64 + 2;
        let field = |i: usize| row.get(i).unwrap_or("");
        let pid = field(i_pid).to_string();
        let entry = acc.entry(pid.clone()).or_insert_with(|| {
            order.push(pid.clone());
            PatientAccumulator::default()
        });

        let out_raw = field(i_out);
        if !out_raw.is_empty() {
            let outcome = match out_raw {
                "0" => Outcome::Survival,
                "1" => Outcome::Death,
                other => {
                    return Err(CohortError::InvalidOutcome {
                        patient: pid,
                        field: "outcome",
                        value: other.to_string(),
                    })
                }
            };
            match entry.outcome {
                Some(prev) if prev != outcome => {
                    return Err(CohortError::InconsistentOutcome { patient: pid, field: "outcome" })
                }
                _ => entry.outcome = Some(outcome),
            }
        }
        let odate_raw = field(i_odate);
        if !odate_raw.is_empty() {
            let t = OutcomeTime::parse(odate_raw).ok_or_else(|| CohortError::InvalidOutcome {
                patient: pid.clone(),
                field: "outcome_date",
                value: odate_raw.to_string(),
            })?;
            match entry.outcome_time {
                Some(prev) if prev != t => {
                    return Err(CohortError::InconsistentOutcome { patient: pid, field: "outcome_date" })
                }
                _ => entry.outcome_time = Some(t),
            }
        }

        let mut issue = |column: &str, value: &str, reason: String| {
            issues.push(RowIssue {
                line,
                patient_id: pid.clone(),
                column: column.to_string(),
                value: value.to_string(),
                reason,
            });
        };

        let at_raw = field(i_at);
        let Ok(recorded_at) = NaiveDateTime::parse_from_str(at_raw, DATETIME_FORMAT) else {
            issue(&schema.recorded_at, at_raw, "expected YYYY-MM-DDTHH:MM:SS".into());
            continue;
        };
        let mut parsed = [None; 3];
        let mut bad = false;
        for (slot, (i, name)) in
            [(i_ldh, &schema.ldh), (i_lym, &schema.lymphocyte_pct), (i_crp, &schema.hs_crp)].into_iter().enumerate()
        {
            let raw = field(i);
            if raw.is_empty() {
                continue;
            }
            match raw.parse::<f64>() {
                Ok(v) => parsed[slot] = Some(v),
                Err(_) => {
                    issue(name, raw, "not a number".into());
                    bad = true;
                }
            }
        }
        if bad {
            continue;
        }
        match BiomarkerRecord::new(pid.clone(), recorded_at, parsed[0], parsed[1], parsed[2]) {
            Ok(rec) => entry.records.push(rec),
            Err(e) => {
                let (column, value) = match &e {
                    BiomarkerError::Negative { field, value } => (*field, value.to_string()),
                    BiomarkerError::PercentOutOfRange(v) => ("lymphocyte_pct", v.to_string()),
                };
                issue(column, &value, e.to_string());
            }
        }
    }

    let mut duplicates = Vec::new();
    let mut missing = Vec::new();
    let mut patients = Vec::with_capacity(order.len());
    for pid in order {
        let a = acc.remove(&pid).expect("every ordered id was accumulated");
        let mut seen = BTreeMap::new();
        for r in &a.records {
            if seen.insert(r.recorded_at, ()).is_some() {
                duplicates.push((pid.clone(), r.recorded_at.format(DATETIME_FORMAT).to_string()));
            }
        }
        match (a.outcome, a.outcome_time) {
            (Some(outcome), Some(time)) => patients.push(PatientTimeline::new(pid, a.records, outcome, time)),
            _ => missing.push(pid),
        }
    }
    if !duplicates.is_empty() {
        return Err(CohortError::DuplicateRecords(duplicates));
    }
    if !missing.is_empty() {
        return Err(CohortError::MissingOutcome(missing));
    }
    Ok(LoadedCohort { cohort: CohortDataset::new(label, patients)?, issues })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompletenessMode {
    /// Drop patients lacking any complete record; keep retained patients whole.
    PerPatient,
    /// Drop incomplete records; drop patients left with none.
    PerRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    UnparseableRow,
    NoCompleteRecord,
    IncompleteRecord,
    SameDaySuperseded,
    IncompleteDay,
}

impl ExclusionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ExclusionReason::UnparseableRow => "unparseable_row",
            ExclusionReason::NoCompleteRecord => "no_complete_record",
            ExclusionReason::IncompleteRecord => "incomplete_record",
            ExclusionReason::SameDaySuperseded => "same_day_superseded",
            ExclusionReason::IncompleteDay => "incomplete_day",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exclusion {
    pub patient_id: String,
    pub reason: ExclusionReason,
    pub detail: String,
}

/// What a filtering or aggregation step removed, and why.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ExclusionReport {
    pub entries: Vec<Exclusion>,
}

impl ExclusionReport {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, reason: ExclusionReason) -> usize {
        self.entries.iter().filter(|e| e.reason == reason).count()
    }

    pub fn extend(&mut self, other: ExclusionReport) {
        self.entries.extend(other.entries);
    }

    /// CSV with columns `patient_id,reason,detail`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), CohortError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["patient_id", "reason", "detail"])?;
        for e in &self.entries {
            w.write_record([e.patient_id.as_str(), e.reason.as_str(), e.detail.as_str()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn filter_complete_cases(cohort: &CohortDataset, mode: CompletenessMode) -> (CohortDataset, ExclusionReport) {
    let mut report = ExclusionReport::default();
    let mut kept = Vec::with_capacity(cohort.len());
    for p in cohort.patients() {
        match mode {
            CompletenessMode::PerPatient => {
                if p.has_complete_record() {
                    kept.push(p.clone());
                } else {
                    report.entries.push(Exclusion {
                        patient_id: p.patient_id.clone(),
                        reason: ExclusionReason::NoCompleteRecord,
                        detail: format!("{} record(s), none with all three biomarkers", p.records.len()),
                    });
                }
            }
            CompletenessMode::PerRecord => {
                let mut q = p.clone();
                q.records.retain(|r| {
                    let ok = r.is_complete();
                    if !ok {
                        report.entries.push(Exclusion {
                            patient_id: p.patient_id.clone(),
                            reason: ExclusionReason::IncompleteRecord,
                            detail: format!(
                                "{} missing {}",
                                r.recorded_at.format(DATETIME_FORMAT),
                                r.missing_fields().join("+")
                            ),
                        });
                    }
                    ok
                });
                if q.records.is_empty() {
                    report.entries.push(Exclusion {
                        patient_id: p.patient_id.clone(),
                        reason: ExclusionReason::NoCompleteRecord,
                        detail: "no records left after per-record filtering".into(),
                    });
                } else {
                    kept.push(q);
                }
            }
        }
    }
    let out = CohortDataset { label: cohort.label.clone(), patients: kept };
    (out, report)
}

/// Collapse a patient's records to at most one per calendar day, keeping the
/// latest complete record of each day. Days with only incomplete records
/// contribute nothing.
pub fn aggregate_daily(timeline: &PatientTimeline) -> PatientTimeline {
    aggregate_daily_with_report(timeline).0
}

pub fn aggregate_daily_with_report(timeline: &PatientTimeline) -> (PatientTimeline, ExclusionReport) {
    let mut by_day: BTreeMap<NaiveDate, Vec<&BiomarkerRecord>> = BTreeMap::new();
    for r in &timeline.records {
        by_day.entry(r.day()).or_default().push(r);
    }
    let mut report = ExclusionReport::default();
    let mut records = Vec::with_capacity(by_day.len());
    for (day, recs) in by_day {
        let chosen = recs.iter().filter(|r| r.is_complete()).max_by_key(|r| r.recorded_at);
        match chosen {
            Some(keep) => {
                for r in recs.iter().filter(|r| r.recorded_at != keep.recorded_at) {
                    report.entries.push(Exclusion {
                        patient_id: timeline.patient_id.clone(),
                        reason: ExclusionReason::SameDaySuperseded,
                        detail: format!(
                            "{} superseded by latest complete record {}",
                            r.recorded_at.format(DATETIME_FORMAT),
                            keep.recorded_at.format(DATETIME_FORMAT)
                        ),
                    });
                }
                records.push((*keep).clone());
            }
            None => report.entries.push(Exclusion {
                patient_id: timeline.patient_id.clone(),
                reason: ExclusionReason::IncompleteDay,
                detail: format!("{}: {} record(s), none complete", day.format(DATE_FORMAT), recs.len()),
            }),
        }
    }
    let out = PatientTimeline {
        patient_id: timeline.patient_id.clone(),
        records,
        outcome: timeline.outcome,
        outcome_time: timeline.outcome_time,
    };
    (out, report)
}

/// [`aggregate_daily`] over a whole cohort. Patients left without any daily
/// record are kept with an empty timeline so cohort membership is unchanged.
pub fn aggregate_cohort(cohort: &CohortDataset) -> (CohortDataset, ExclusionReport) {
    let mut report = ExclusionReport::default();
    let patients = cohort
        .patients()
        .iter()
        .map(|p| {
            let (t, r) = aggregate_daily_with_report(p);
            report.extend(r);
            t
        })
        .collect();
    (CohortDataset { label: cohort.label.clone(), patients }, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> NaiveDateTime {
        NaiveDateTime::parse_from_str(s, DATETIME_FORMAT).unwrap()
    }

    const HEADER: &str = "patient_id,recorded_at,ldh,lymphocyte_pct,hs_crp,outcome,outcome_date\n";

    fn read(body: &str) -> Result<LoadedCohort, CohortError> {
        read_cohort(format!("{HEADER}{body}").as_bytes(), &Schema::default(), "test")
    }

    #[test]
    fn three_patient_file() {
        let loaded = read(
            "a,2020-01-10T08:00:00,300,10,20,0,2020-01-20\n\
             a,2020-01-11T08:00:00,280,12,15,0,2020-01-20\n\
             b,2020-01-12T09:30:00,700,3,150,1,2020-01-15\n\
             c,2020-01-13T10:00:00,,25,4,0,2020-01-19\n",
        )
        .unwrap();
        assert!(loaded.issues.is_empty());
        let c = loaded.cohort;
        assert_eq!(c.len(), 3);
        assert_eq!(c.deaths(), 1);
        assert_eq!(c.patients()[0].records.len(), 2);
        assert_eq!(c.patients()[2].records[0].ldh, None);
    }

    #[test]
    fn missing_outcome_names_patient() {
        let err = read(
            "a,2020-01-10T08:00:00,300,10,20,0,2020-01-20\n\
             b,2020-01-12T09:30:00,700,3,150,,2020-01-15\n",
        )
        .unwrap_err();
        match err {
            CohortError::MissingOutcome(ids) => assert_eq!(ids, vec!["b".to_string()]),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn missing_column_named() {
        let err = read_cohort(
            "patient_id,recorded_at,ldh,lymphocyte_pct,outcome,outcome_date\n".as_bytes(),
            &Schema::default(),
            "t",
        )
        .unwrap_err();
        assert!(matches!(err, CohortError::MissingColumn(ref c) if c == "hs_crp"), "{err}");
    }

    #[test]
    fn duplicate_rows_listed() {
        let err = read(
            "a,2020-01-10T08:00:00,300,10,20,0,2020-01-20\n\
             a,2020-01-10T08:00:00,310,10,20,0,2020-01-20\n",
        )
        .unwrap_err();
        match err {
            CohortError::DuplicateRecords(d) => assert_eq!(d, vec![("a".into(), "2020-01-10T08:00:00".into())]),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn bad_fields_are_reported() {
        let loaded = read(
            "a,2020-01-10T08:00:00,abc,10,20,0,2020-01-20\n\
             a,2020-01-11T08:00:00,300,120,20,0,2020-01-20\n\
             a,not-a-date,300,10,20,0,2020-01-20\n\
             a,2020-01-12T08:00:00,300,10,20,0,2020-01-20\n",
        )
        .unwrap();
        assert_eq!(loaded.issues.len(), 3);
        assert_eq!(loaded.issues[0].line, 2);
        assert_eq!(loaded.issues[1].column, "lymphocyte_pct");
        assert_eq!(loaded.cohort.patients()[0].records.len(), 1);
        assert_eq!(loaded.issue_report().count(ExclusionReason::UnparseableRow), 3);
    }

    #[test]
    fn bad_outcome_code_rejected() {
        let err = read("a,2020-01-10T08:00:00,300,10,20,2,2020-01-20\n").unwrap_err();
        assert!(matches!(err, CohortError::InvalidOutcome { field: "outcome", .. }));
    }

    #[test]
    fn per_record_filter_keeps_complete_records() {
        let c = read(
            "a,2020-01-10T08:00:00,300,10,20,0,2020-01-20\n\
             a,2020-01-11T08:00:00,,10,20,0,2020-01-20\n\
             a,2020-01-12T08:00:00,280,12,15,0,2020-01-20\n",
        )
        .unwrap()
        .cohort;
        let (out, report) = filter_complete_cases(&c, CompletenessMode::PerRecord);
        assert_eq!(out.len(), 1);
        assert_eq!(out.patients()[0].records.len(), 2);
        assert_eq!(report.count(ExclusionReason::IncompleteRecord), 1);
        assert!(report.entries[0].detail.contains("ldh"));
    }

    #[test]
    fn no_missing_values_is_a_noop() {
        let c = read(
            "a,2020-01-10T08:00:00,300,10,20,0,2020-01-20\n\
             b,2020-01-12T09:30:00,700,3,150,1,2020-01-15\n",
        )
        .unwrap()
        .cohort;
        for mode in [CompletenessMode::PerPatient, CompletenessMode::PerRecord] {
            let (out, report) = filter_complete_cases(&c, mode);
            assert_eq!(out, c);
            assert!(report.is_empty());
        }
    }

    #[test]
    fn latest_complete_record_of_day_wins() {
        let t = PatientTimeline::new(
            "a",
            vec![
                BiomarkerRecord::new("a", ts("2020-01-10T08:00:00"), Some(300.0), Some(10.0), Some(20.0)).unwrap(),
                BiomarkerRecord::new("a", ts("2020-01-10T17:00:00"), Some(320.0), Some(9.0), Some(25.0)).unwrap(),
                BiomarkerRecord::new("a", ts("2020-01-10T21:00:00"), None, Some(9.0), Some(25.0)).unwrap(),
                BiomarkerRecord::new("a", ts("2020-01-11T07:00:00"), None, Some(8.0), None).unwrap(),
            ],
            Outcome::Survival,
            OutcomeTime::Date(NaiveDate::from_ymd_opt(2020, 1, 20).unwrap()),
        );
        let (daily, report) = aggregate_daily_with_report(&t);
        assert_eq!(daily.records.len(), 1);
        assert_eq!(daily.records[0].recorded_at, ts("2020-01-10T17:00:00"));
        assert!(daily.is_daily());
        assert_eq!(report.count(ExclusionReason::SameDaySuperseded), 2);
        assert_eq!(report.count(ExclusionReason::IncompleteDay), 1);
    }

    #[test]
    fn one_record_per_day_unchanged() {
        let recs = (0..5)
            .map(|d| {
                BiomarkerRecord::new(
                    "a",
                    ts(&format!("2020-01-1{d}T09:00:00")),
                    Some(250.0 + d as f64),
                    Some(20.0),
                    Some(3.0),
                )
                .unwrap()
            })
            .collect();
        let t = PatientTimeline::new(
            "a",
            recs,
            Outcome::Death,
            OutcomeTime::Date(NaiveDate::from_ymd_opt(2020, 1, 25).unwrap()),
        );
        let daily = aggregate_daily(&t);
        assert_eq!(daily, t);
        assert_eq!(aggregate_daily(&daily), daily);
    }

    #[test]
    fn outcome_time_days() {
        let d = OutcomeTime::parse("2020-01-20").unwrap();
        assert_eq!(d.days_after(ts("2020-01-15T23:00:00")), 5.0);
        assert_eq!(d.days_after(ts("2020-01-21T01:00:00")), -1.0);
        let dt = OutcomeTime::parse("2020-01-20T12:00:00").unwrap();
        assert_eq!(dt.days_after(ts("2020-01-15T00:00:00")), 5.5);
        assert_eq!(dt.to_string(), "2020-01-20T12:00:00");
    }

    #[test]
    fn record_validation() {
        assert!(BiomarkerRecord::new("a", ts("2020-01-15T23:00:00"), Some(-1.0), None, None).is_err());
        assert!(BiomarkerRecord::new("a", ts("2020-01-15T23:00:00"), None, Some(100.5), None).is_err());
        assert!(BiomarkerRecord::new("a", ts("2020-01-15T23:00:00"), None, None, Some(f64::NAN)).is_err());
        assert!(Biomarkers::new(0.0, 100.0, 0.0).is_ok());
    }

    #[test]
    fn duplicate_patient_rejected() {
        let t = PatientTimeline::new("a", vec![], Outcome::Death, OutcomeTime::parse("2020-01-20").unwrap());
        assert!(CohortDataset::new("x", vec![t.clone(), t]).is_err());
    }
}
