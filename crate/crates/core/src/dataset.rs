//! Student data model, CSV ingestion, and population filters.
//!
//! Input schema (header required):
//! `id,lsat,ugpa,female,race,occ_mom,occ_dad,ed_mom,ed_dad,fam_inc,tier,outcome`
//! with missing SES cells encoded as empty strings and homemaker
//! occupations as the literal token `homemaker`.

use std::collections::HashSet;
use std::io::{Read, Write};

use crate::error::{Error, Result, RowError};

pub const LSAT_MIN: i32 = 11;
pub const LSAT_MAX: i32 = 48;
pub const UGPA_MIN: f64 = 1.0;
pub const UGPA_MAX: f64 = 4.0;

pub const COLUMNS: [&str; 12] = [
    "id", "lsat", "ugpa", "female", "race", "occ_mom", "occ_dad", "ed_mom", "ed_dad", "fam_inc",
    "tier", "outcome",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Race {
    White,
    Black,
    Hispanic,
    Asian,
    Other,
}

impl Race {
    pub fn token(self) -> &'static str {
        match self {
            Race::White => "white",
            Race::Black => "black",
            Race::Hispanic => "hispanic",
            Race::Asian => "asian",
            Race::Other => "other",
        }
    }

    pub fn from_token(s: &str) -> Option<Race> {
        match s {
            "white" => Some(Race::White),
            "black" => Some(Race::Black),
            "hispanic" => Some(Race::Hispanic),
            "asian" => Some(Race::Asian),
            "other" => Some(Race::Other),
            _ => None,
        }
    }

    pub const ALL: [Race; 5] = [Race::White, Race::Black, Race::Hispanic, Race::Asian, Race::Other];
}

/// Final academic outcome; the five classes are mutually exclusive and
/// exhaustive, and dropping out implies never attempting the bar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutcomeClass {
    Dropout,
    GraduatedNoBar,
    PassedFirstTry,
    PassedLaterTry,
    FailedBar,
}

impl OutcomeClass {
    pub fn token(self) -> &'static str {
        match self {
            OutcomeClass::Dropout => "dropout",
            OutcomeClass::GraduatedNoBar => "grad_no_bar",
            OutcomeClass::PassedFirstTry => "passed_first",
            OutcomeClass::PassedLaterTry => "passed_later",
            OutcomeClass::FailedBar => "failed_bar",
        }
    }

    pub fn from_token(s: &str) -> Option<OutcomeClass> {
        match s {
            "dropout" => Some(OutcomeClass::Dropout),
            "grad_no_bar" => Some(OutcomeClass::GraduatedNoBar),
            "passed_first" => Some(OutcomeClass::PassedFirstTry),
            "passed_later" => Some(OutcomeClass::PassedLaterTry),
            "failed_bar" => Some(OutcomeClass::FailedBar),
            _ => None,
        }
    }

    pub const ALL: [OutcomeClass; 5] = [
        OutcomeClass::Dropout,
        OutcomeClass::GraduatedNoBar,
        OutcomeClass::PassedFirstTry,
        OutcomeClass::PassedLaterTry,
        OutcomeClass::FailedBar,
    ];

    /// Index into the canonical class ordering above.
    pub fn index(self) -> usize {
        match self {
            OutcomeClass::Dropout => 0,
            OutcomeClass::GraduatedNoBar => 1,
            OutcomeClass::PassedFirstTry => 2,
            OutcomeClass::PassedLaterTry => 3,
            OutcomeClass::FailedBar => 4,
        }
    }
}

/// One SES questionnaire cell on the 1-5 scale. `Homemaker` is only
/// valid for the two occupation fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SesValue {
    Value(u8),
    Homemaker,
    Missing,
}

impl SesValue {
    pub fn is_missing(self) -> bool {
        matches!(self, SesValue::Missing)
    }

    pub fn token(self) -> String {
        match self {
            SesValue::Value(v) => v.to_string(),
            SesValue::Homemaker => "homemaker".to_string(),
            SesValue::Missing => String::new(),
        }
    }
}

/// The five SES questionnaire components.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SesProfile {
    pub occ_mom: SesValue,
    pub occ_dad: SesValue,
    pub ed_mom: SesValue,
    pub ed_dad: SesValue,
    pub fam_inc: SesValue,
}

impl SesProfile {
    pub fn all_missing(&self) -> bool {
        self.occ_mom.is_missing()
            && self.occ_dad.is_missing()
            && self.ed_mom.is_missing()
            && self.ed_dad.is_missing()
            && self.fam_inc.is_missing()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentRecord {
    pub id: String,
    pub lsat: i32,
    pub ugpa: f64,
    pub female: bool,
    pub race: Race,
    pub ses: SesProfile,
    pub tier: u8,
    pub outcome: OutcomeClass,
}

/// Counts of records removed by each population filter, in the order
/// the filters are applied.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterLog {
    pub input: usize,
    pub removed_tier6: usize,
    pub removed_race: usize,
    pub removed_ses_empty: usize,
}

impl FilterLog {
    pub fn retained(&self) -> usize {
        self.input - self.removed_tier6 - self.removed_race - self.removed_ses_empty
    }
}

/// The filtered analysis set: white/black students in tiers 1-5 with
/// at least one SES component observed.
#[derive(Debug, Clone)]
pub struct AnalysisPopulation {
    pub records: Vec<StudentRecord>,
    pub provenance: FilterLog,
}

fn parse_ses_cell(raw: &str, field: &str, allow_homemaker: bool) -> std::result::Result<SesValue, String> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(SesValue::Missing);
    }
    if raw == "homemaker" {
        if allow_homemaker {
            return Ok(SesValue::Homemaker);
        }
        return Err(format!("{field}: homemaker only valid for occupation fields"));
    }
    match raw.parse::<u8>() {
        Ok(v) if (1..=5).contains(&v) => Ok(SesValue::Value(v)),
        Ok(v) => Err(format!("{field}: value {v} outside 1-5")),
        Err(_) => Err(format!("{field}: malformed value {raw:?}")),
    }
}

fn parse_row(rec: &csv::StringRecord, line: usize) -> std::result::Result<StudentRecord, RowError> {
    let err = |msg: String| RowError { line, message: msg };
    let field = |i: usize| rec.get(i).unwrap_or("").trim();

    let id = field(0).to_string();
    if id.is_empty() {
        return Err(err("id: empty".into()));
    }
    let lsat: i32 = field(1)
        .parse()
        .map_err(|_| err(format!("lsat: malformed value {:?}", field(1))))?;
    if !(LSAT_MIN..=LSAT_MAX).contains(&lsat) {
        return Err(err(format!("lsat: value {lsat} outside {LSAT_MIN}-{LSAT_MAX}")));
    }
    let ugpa: f64 = field(2)
        .parse()
        .map_err(|_| err(format!("ugpa: malformed value {:?}", field(2))))?;
    if !(UGPA_MIN..=UGPA_MAX).contains(&ugpa) {
        return Err(err(format!("ugpa: value {ugpa} outside {UGPA_MIN}-{UGPA_MAX}")));
    }
    let female = match field(3) {
        "0" => false,
        "1" => true,
        other => return Err(err(format!("female: expected 0 or 1, got {other:?}"))),
    };
    let race = Race::from_token(field(4)).ok_or_else(|| err(format!("race: unknown token {:?}", field(4))))?;

    let occ_mom = parse_ses_cell(field(5), "occ_mom", true).map_err(&err)?;
    let occ_dad = parse_ses_cell(field(6), "occ_dad", true).map_err(&err)?;
    let ed_mom = parse_ses_cell(field(7), "ed_mom", false).map_err(&err)?;
    let ed_dad = parse_ses_cell(field(8), "ed_dad", false).map_err(&err)?;
    let fam_inc = parse_ses_cell(field(9), "fam_inc", false).map_err(&err)?;

    let tier: u8 = field(10)
        .parse()
        .map_err(|_| err(format!("tier: malformed value {:?}", field(10))))?;
    if !(1..=6).contains(&tier) {
        return Err(err(format!("tier: value {tier} outside 1-6")));
    }
    let outcome = OutcomeClass::from_token(field(11))
        .ok_or_else(|| err(format!("outcome: unknown token {:?}", field(11))))?;

    Ok(StudentRecord {
        id,
        lsat,
        ugpa,
        female,
        race,
        ses: SesProfile {
            occ_mom,
            occ_dad,
            ed_mom,
            ed_dad,
            fam_inc,
        },
        tier,
        outcome,
    })
}

/// Parses the delimited student table. Malformed rows become
/// `RowError`s (with their line numbers) rather than aborting the
/// parse; a duplicate id or a broken header is fatal.
pub fn parse_dataset<R: Read>(source: R) -> Result<(Vec<StudentRecord>, Vec<RowError>)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let headers = reader.headers()?.clone();
    if headers.len() != COLUMNS.len() {
        return Err(Error::Data(format!(
            "header: expected {} columns, found {}",
            COLUMNS.len(),
            headers.len()
        )));
    }
    for (i, want) in COLUMNS.iter().enumerate() {
        let got = headers.get(i).unwrap_or("").trim();
        if got != *want {
            return Err(Error::Data(format!(
                "header: column {i} is {got:?}, expected {want:?}"
            )));
        }
    }

    let mut records = Vec::new();
    let mut row_errors = Vec::new();
    let mut seen = HashSet::new();
    for (row_idx, rec) in reader.records().enumerate() {
        let line = row_idx + 2; // header is line 1
        let rec = rec?;
        match parse_row(&rec, line) {
            Ok(student) => {
                if !seen.insert(student.id.clone()) {
                    return Err(Error::Data(format!(
                        "line {line}: duplicate id {:?}",
                        student.id
                    )));
                }
                records.push(student);
            }
            Err(e) => row_errors.push(e),
        }
    }
    Ok((records, row_errors))
}

/// Like `parse_dataset`, but any rejected row is fatal.
pub fn parse_dataset_strict<R: Read>(source: R) -> Result<Vec<StudentRecord>> {
    let (records, errors) = parse_dataset(source)?;
    if let Some(first) = errors.first() {
        return Err(Error::Data(format!(
            "{} malformed rows, first: {first}",
            errors.len()
        )));
    }
    Ok(records)
}

/// Writes records back out in the input schema.
pub fn write_dataset<W: Write>(out: W, records: &[StudentRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for r in records {
        w.write_record([
            r.id.clone(),
            r.lsat.to_string(),
            format!("{:.2}", r.ugpa),
            (r.female as u8).to_string(),
            r.race.token().to_string(),
            r.ses.occ_mom.token(),
            r.ses.occ_dad.token(),
            r.ses.ed_mom.token(),
            r.ses.ed_dad.token(),
            r.ses.fam_inc.token(),
            r.tier.to_string(),
            r.outcome.token().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Applies the population filters in fixed order: drop Tier-6
/// students, drop races other than white/black, drop students with all
/// five SES components missing.
pub fn filter_analysis_population(records: Vec<StudentRecord>) -> Result<AnalysisPopulation> {
    let mut log = FilterLog {
        input: records.len(),
        ..FilterLog::default()
    };
    let mut kept = Vec::with_capacity(records.len());
    for r in records {
        if r.tier == 6 {
            log.removed_tier6 += 1;
        } else if !matches!(r.race, Race::White | Race::Black) {
            log.removed_race += 1;
        } else if r.ses.all_missing() {
            log.removed_ses_empty += 1;
        } else {
            kept.push(r);
        }
    }
    if kept.is_empty() {
        return Err(Error::Data("no analyzable records".into()));
    }
    Ok(AnalysisPopulation {
        records: kept,
        provenance: log,
    })
}

/// Nearest-rank empirical quartiles of LSAT within a (tier, race) cell.
pub fn lsat_quartiles_by_group(
    records: &[StudentRecord],
    tier: u8,
    race: Race,
) -> Result<(i32, i32, i32)> {
    let mut scores: Vec<i32> = records
        .iter()
        .filter(|r| r.tier == tier && r.race == race)
        .map(|r| r.lsat)
        .collect();
    if scores.is_empty() {
        return Err(Error::Data(format!(
            "no students in tier {tier} with race {}",
            race.token()
        )));
    }
    scores.sort_unstable();
    Ok((
        nearest_rank(&scores, 0.25),
        nearest_rank(&scores, 0.50),
        nearest_rank(&scores, 0.75),
    ))
}

/// Nearest-rank quantile: value at index ceil(q*n) (1-based) of the
/// sorted sample.
pub fn nearest_rank(sorted: &[i32], q: f64) -> i32 {
    let n = sorted.len();
    let rank = (q * n as f64).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "id,lsat,ugpa,female,race,occ_mom,occ_dad,ed_mom,ed_dad,fam_inc,tier,outcome\n";

    fn mk(id: &str, lsat: i32, race: Race, tier: u8) -> StudentRecord {
        StudentRecord {
            id: id.to_string(),
            lsat,
            ugpa: 3.0,
            female: false,
            race,
            ses: SesProfile {
                occ_mom: SesValue::Value(3),
                occ_dad: SesValue::Value(3),
                ed_mom: SesValue::Value(3),
                ed_dad: SesValue::Value(3),
                fam_inc: SesValue::Value(3),
            },
            tier,
            outcome: OutcomeClass::PassedFirstTry,
        }
    }

    #[test]
    fn parses_basic_row() {
        let data = format!("{HEADER}S1,40,3.5,1,black,2,3,4,5,1,1,passed_first\n");
        let (records, errors) = parse_dataset(data.as_bytes()).unwrap();
        assert!(errors.is_empty());
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].lsat, 40);
        assert_eq!(records[0].tier, 1);
        assert_eq!(records[0].race, Race::Black);
        assert_eq!(records[0].ses.fam_inc, SesValue::Value(1));
    }

    #[test]
    fn lsat_out_of_range_is_row_error_naming_field() {
        let data = format!("{HEADER}S1,50,3.5,1,black,2,3,4,5,1,1,passed_first\n");
        let (records, errors) = parse_dataset(data.as_bytes()).unwrap();
        assert!(records.is_empty());
        assert_eq!(errors.len(), 1);
        assert_eq!(errors[0].line, 2);
        assert!(errors[0].message.contains("lsat"));
    }

    #[test]
    fn duplicate_id_is_fatal() {
        let data = format!(
            "{HEADER}S1,40,3.5,1,black,2,3,4,5,1,1,passed_first\nS1,30,3.0,0,white,2,3,4,5,1,2,dropout\n"
        );
        assert!(parse_dataset(data.as_bytes()).is_err());
    }

    #[test]
    fn homemaker_rejected_outside_occupation() {
        let data = format!("{HEADER}S1,40,3.5,1,black,2,3,homemaker,5,1,1,passed_first\n");
        let (_, errors) = parse_dataset(data.as_bytes()).unwrap();
        assert_eq!(errors.len(), 1);
        assert!(errors[0].message.contains("ed_mom"));
    }

    #[test]
    fn homemaker_and_missing_parse_in_occupation() {
        let data = format!("{HEADER}S1,40,3.5,1,black,homemaker,,4,5,1,1,passed_first\n");
        let (records, errors) = parse_dataset(data.as_bytes()).unwrap();
        assert!(errors.is_empty());
        assert_eq!(records[0].ses.occ_mom, SesValue::Homemaker);
        assert_eq!(records[0].ses.occ_dad, SesValue::Missing);
    }

    #[test]
    fn filter_removes_tier6_and_logs() {
        let records = vec![mk("a", 30, Race::White, 6)];
        let err = filter_analysis_population(records).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
        // One retained record keeps things non-fatal and the log visible.
        let records = vec![mk("a", 30, Race::White, 6), mk("b", 30, Race::Black, 3)];
        let pop = filter_analysis_population(records).unwrap();
        assert_eq!(pop.provenance.removed_tier6, 1);
        assert_eq!(pop.records.len(), 1);
        assert_eq!(pop.records[0].id, "b");
    }

    #[test]
    fn filter_order_and_counts_sum() {
        let mut hisp = mk("c", 30, Race::Hispanic, 2);
        hisp.tier = 6; // tier rule fires first
        let mut no_ses = mk("d", 30, Race::White, 2);
        no_ses.ses = SesProfile {
            occ_mom: SesValue::Missing,
            occ_dad: SesValue::Missing,
            ed_mom: SesValue::Missing,
            ed_dad: SesValue::Missing,
            fam_inc: SesValue::Missing,
        };
        let records = vec![mk("a", 30, Race::Black, 3), hisp, no_ses, mk("e", 31, Race::Asian, 1)];
        let pop = filter_analysis_population(records).unwrap();
        assert_eq!(pop.provenance.removed_tier6, 1);
        assert_eq!(pop.provenance.removed_race, 1);
        assert_eq!(pop.provenance.removed_ses_empty, 1);
        assert_eq!(pop.provenance.input, 4);
        assert_eq!(pop.provenance.retained(), pop.records.len());
    }

    #[test]
    fn filter_is_idempotent() {
        let records = vec![mk("a", 30, Race::Black, 3), mk("b", 32, Race::White, 2)];
        let pop = filter_analysis_population(records).unwrap();
        let again = filter_analysis_population(pop.records.clone()).unwrap();
        assert_eq!(again.records, pop.records);
        assert_eq!(again.provenance.retained(), again.provenance.input);
    }

    #[test]
    fn quartiles_single_student() {
        let records = vec![mk("a", 30, Race::White, 5)];
        assert_eq!(lsat_quartiles_by_group(&records, 5, Race::White).unwrap(), (30, 30, 30));
    }

    #[test]
    fn quartiles_match_sort_and_index_oracle() {
        // Brute-force oracle: sort, take the ceil(q*n)-th order statistic.
        let scores = [21, 24, 27, 30];
        let records: Vec<StudentRecord> = scores
            .iter()
            .enumerate()
            .map(|(i, &s)| mk(&format!("s{i}"), s, Race::Black, 5))
            .collect();
        let oracle = |q: f64| {
            let mut v = scores.to_vec();
            v.sort_unstable();
            v[((q * v.len() as f64).ceil() as usize) - 1]
        };
        let (q25, q50, q75) = lsat_quartiles_by_group(&records, 5, Race::Black).unwrap();
        assert_eq!((q25, q50, q75), (oracle(0.25), oracle(0.5), oracle(0.75)));
        assert_eq!((q25, q50, q75), (21, 24, 27));
    }

    #[test]
    fn empty_group_errors() {
        let records = vec![mk("a", 30, Race::White, 5)];
        assert!(lsat_quartiles_by_group(&records, 1, Race::Black).is_err());
    }

    #[test]
    fn roundtrip_is_exact() {
        let data = format!(
            "{HEADER}S1,40,3.50,1,black,homemaker,,4,5,,1,passed_first\nS2,30,2.75,0,white,1,2,3,4,5,5,dropout\n"
        );
        let (records, errors) = parse_dataset(data.as_bytes()).unwrap();
        assert!(errors.is_empty());
        let mut buf = Vec::new();
        write_dataset(&mut buf, &records).unwrap();
        let (reparsed, errors2) = parse_dataset(&buf[..]).unwrap();
        assert!(errors2.is_empty());
        assert_eq!(reparsed, records);
    }
}

#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_ses_value(occupation: bool) -> BoxedStrategy<SesValue> {
        if occupation {
            prop_oneof![
                4 => (1u8..=5).prop_map(SesValue::Value),
                2 => Just(SesValue::Missing),
                1 => Just(SesValue::Homemaker),
            ]
            .boxed()
        } else {
            prop_oneof![
                4 => (1u8..=5).prop_map(SesValue::Value),
                2 => Just(SesValue::Missing),
            ]
            .boxed()
        }
    }

    fn arb_record(id: usize) -> impl Strategy<Value = StudentRecord> {
        (
            11i32..=48,
            100u32..=400,
            any::<bool>(),
            0usize..5,
            (
                arb_ses_value(true),
                arb_ses_value(true),
                arb_ses_value(false),
                arb_ses_value(false),
                arb_ses_value(false),
            ),
            1u8..=6,
            0usize..5,
        )
            .prop_map(move |(lsat, gpa_cents, female, race, ses, tier, outcome)| StudentRecord {
                id: format!("p{id:04}"),
                lsat,
                ugpa: gpa_cents as f64 / 100.0,
                female,
                race: Race::ALL[race],
                ses: SesProfile {
                    occ_mom: ses.0,
                    occ_dad: ses.1,
                    ed_mom: ses.2,
                    ed_dad: ses.3,
                    fam_inc: ses.4,
                },
                tier,
                outcome: OutcomeClass::ALL[outcome],
            })
    }

    fn arb_records() -> impl Strategy<Value = Vec<StudentRecord>> {
        prop::collection::vec(0usize..1, 1..40).prop_flat_map(|slots| {
            slots
                .into_iter()
                .enumerate()
                .map(|(i, _)| arb_record(i))
                .collect::<Vec<_>>()
        })
    }

    proptest! {
        /// Any writable population survives a write/parse round trip
        /// bit-exactly (UGPA is defined at two decimals).
        #[test]
        fn write_parse_round_trip(records in arb_records()) {
            let mut buf = Vec::new();
            write_dataset(&mut buf, &records).unwrap();
            let (reparsed, errors) = parse_dataset(&buf[..]).unwrap();
            prop_assert!(errors.is_empty());
            prop_assert_eq!(reparsed, records);
        }

        /// Filtering is idempotent and never invents records.
        #[test]
        fn filter_is_idempotent(records in arb_records()) {
            match filter_analysis_population(records.clone()) {
                Ok(first) => {
                    let kept = first.records.len();
                    prop_assert!(kept <= records.len());
                    let second = filter_analysis_population(first.records).unwrap();
                    prop_assert_eq!(second.records.len(), kept);
                    prop_assert_eq!(second.provenance.removed_tier6, 0);
                    prop_assert_eq!(second.provenance.removed_race, 0);
                    prop_assert_eq!(second.provenance.removed_ses_empty, 0);
                }
                Err(_) => {
                    // Only legal when nothing survives the filters.
                    let survivors = records.iter().filter(|r| {
                        r.tier != 6
                            && matches!(r.race, Race::Black | Race::White)
                            && !r.ses.all_missing()
                    }).count();
                    prop_assert_eq!(survivors, 0);
                }
            }
        }
    }
}
