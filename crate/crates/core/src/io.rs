//! Trial CSV ingestion and JSON results.
//!
//! Trial files are comma-separated UTF-8 with a mandatory header:
//!
//! ```text
//! subject_id,trial_id,p_a,p_b,draws,marked,prior,choice
//! ```
//!
//! or with `report` in place of `choice`. `choice` is 1 for cage A and 0 for
//! cage B. Rows of one subject keep their file order; subjects are ordered by
//! first appearance. Errors name the offending row (the header is row 1) and
//! column.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::beliefs::ReportTrial;
use crate::design::{Design, Trial};
use crate::error::{Error, Result};
use crate::estimation::FitResult;
use crate::likelihood::{Dataset, Subject};
use crate::simulate::ReportPanel;

pub const BASE_COLUMNS: [&str; 7] = ["subject_id", "trial_id", "p_a", "p_b", "draws", "marked", "prior"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Choice,
    Report,
}

impl Mode {
    fn column(self) -> &'static str {
        match self {
            Mode::Choice => "choice",
            Mode::Report => "report",
        }
    }
}

/// One row of a trial file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub subject_id: String,
    pub trial_id: i64,
    pub p_a: f64,
    pub p_b: f64,
    pub draws: u32,
    pub marked: u32,
    pub prior: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub choice: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<f64>,
}

impl TrialRecord {
    pub fn trial(&self) -> Result<Trial> {
        Trial::new(self.prior, self.marked, Design::new(self.p_a, self.p_b, self.draws)?)
    }
}

/// Parsed contents of a trial file.
#[derive(Debug, Clone)]
pub enum Loaded {
    Choices(Dataset),
    Reports(ReportPanel),
}

fn parse_err(row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

fn check_header(headers: &csv::StringRecord, mode: Mode) -> Result<IndexMap<String, usize>> {
    let mut index = IndexMap::new();
    for (i, h) in headers.iter().enumerate() {
        let name = h.trim();
        if index.insert(name.to_string(), i).is_some() {
            return Err(parse_err(1, name, "duplicate column"));
        }
    }
    for col in BASE_COLUMNS.iter().chain([&mode.column()]) {
        if !index.contains_key(*col) {
            return Err(parse_err(1, col, "missing column"));
        }
    }
    for name in index.keys() {
        let known = BASE_COLUMNS.contains(&name.as_str()) || name == "choice" || name == "report";
        if !known {
            return Err(parse_err(1, name, "unknown column"));
        }
        if (name == "choice" || name == "report") && name != mode.column() {
            return Err(parse_err(
                1,
                name,
                format!("file mixes choice and report columns; expected {} mode", mode.column()),
            ));
        }
    }
    Ok(index)
}

fn field<'a>(rec: &'a csv::StringRecord, index: &IndexMap<String, usize>, col: &str) -> &'a str {
    rec.get(index[col]).unwrap_or("").trim()
}

fn parse_prob(raw: &str, row: usize, col: &str) -> Result<f64> {
    let v: f64 = raw
        .parse()
        .map_err(|_| parse_err(row, col, format!("`{raw}` is not a number")))?;
    if !(0.0..=1.0).contains(&v) {
        return Err(parse_err(row, col, format!("{v} is not a probability in [0, 1]")));
    }
    Ok(v)
}

fn parse_count(raw: &str, row: usize, col: &str) -> Result<u32> {
    raw.parse()
        .map_err(|_| parse_err(row, col, format!("`{raw}` is not a non-negative integer")))
}

fn parse_record(rec: &csv::StringRecord, index: &IndexMap<String, usize>, row: usize, mode: Mode) -> Result<TrialRecord> {
    if rec.len() != index.len() {
        return Err(parse_err(
            row,
            "*",
            format!("{} fields, header has {}", rec.len(), index.len()),
        ));
    }
    let subject_id = field(rec, index, "subject_id").to_string();
    if subject_id.is_empty() {
        return Err(parse_err(row, "subject_id", "empty subject id"));
    }
    let raw = field(rec, index, "trial_id");
    let trial_id: i64 = raw
        .parse()
        .map_err(|_| parse_err(row, "trial_id", format!("`{raw}` is not an integer")))?;
    let p_a = parse_prob(field(rec, index, "p_a"), row, "p_a")?;
    let p_b = parse_prob(field(rec, index, "p_b"), row, "p_b")?;
    let draws = parse_count(field(rec, index, "draws"), row, "draws")?;
    let marked = parse_count(field(rec, index, "marked"), row, "marked")?;
    if marked > draws {
        return Err(parse_err(row, "marked", format!("marked = {marked} exceeds draws = {draws}")));
    }
    let prior = parse_prob(field(rec, index, "prior"), row, "prior")?;
    let mut record = TrialRecord {
        subject_id,
        trial_id,
        p_a,
        p_b,
        draws,
        marked,
        prior,
        choice: None,
        report: None,
    };
    match mode {
        Mode::Choice => {
            let raw = field(rec, index, "choice");
            record.choice = Some(match raw {
                "1" => 1,
                "0" => 0,
                _ => return Err(parse_err(row, "choice", format!("`{raw}` is not 0 or 1"))),
            });
        }
        Mode::Report => {
            record.report = Some(parse_prob(field(rec, index, "report"), row, "report")?);
        }
    }
    Ok(record)
}

/// Validated records in file order.
pub fn read_records<R: Read>(reader: R, mode: Mode) -> Result<Vec<TrialRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || headers.iter().all(|h| h.trim().is_empty()) {
        return Err(parse_err(1, "*", "file is empty; a header row is required"));
    }
    let index = check_header(&headers, mode)?;
    let mut out = Vec::new();
    let mut seen: IndexMap<(String, i64), usize> = IndexMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| parse_err(row, "*", e.to_string()))?;
        let record = parse_record(&rec, &index, row, mode)?;
        if let Some(first) = seen.insert((record.subject_id.clone(), record.trial_id), row) {
            return Err(parse_err(
                row,
                "trial_id",
                format!("trial {} of subject {} repeats row {first}", record.trial_id, record.subject_id),
            ));
        }
        out.push(record);
    }
    if out.is_empty() {
        return Err(parse_err(2, "*", "file has a header but no trials"));
    }
    Ok(out)
}

fn group<T>(records: Vec<TrialRecord>, mut item: impl FnMut(&TrialRecord) -> Result<T>) -> Result<IndexMap<String, Vec<T>>> {
    let mut groups: IndexMap<String, Vec<T>> = IndexMap::new();
    for r in &records {
        groups.entry(r.subject_id.clone()).or_default().push(item(r)?);
    }
    Ok(groups)
}

pub fn read_choices<R: Read>(reader: R) -> Result<Dataset> {
    let records = read_records(reader, Mode::Choice)?;
    let groups = group(records, |r| Ok((r.trial()?, r.choice == Some(1))))?;
    let subjects = groups
        .into_iter()
        .map(|(id, rows)| {
            let (trials, choices) = rows.into_iter().unzip();
            Subject::new(id, trials, choices)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(subjects)
}

pub fn read_reports<R: Read>(reader: R) -> Result<ReportPanel> {
    let records = read_records(reader, Mode::Report)?;
    let groups = group(records, |r| ReportTrial::new(r.trial()?, r.report.unwrap_or(f64::NAN)))?;
    let (ids, reports) = groups.into_iter().unzip();
    Ok(ReportPanel { ids, reports })
}

pub fn load_dataset(path: impl AsRef<Path>, mode: Mode) -> Result<Loaded> {
    let file = File::open(path)?;
    Ok(match mode {
        Mode::Choice => Loaded::Choices(read_choices(file)?),
        Mode::Report => Loaded::Reports(read_reports(file)?),
    })
}

pub fn load_choices(path: impl AsRef<Path>) -> Result<Dataset> {
    read_choices(File::open(path)?)
}

pub fn load_reports(path: impl AsRef<Path>) -> Result<ReportPanel> {
    read_reports(File::open(path)?)
}

fn base_record(id: &str, i: usize, t: &Trial) -> TrialRecord {
    TrialRecord {
        subject_id: id.to_string(),
        trial_id: i as i64 + 1,
        p_a: t.design.p_a,
        p_b: t.design.p_b,
        draws: t.design.draws,
        marked: t.marked,
        prior: t.prior,
        choice: None,
        report: None,
    }
}

pub fn write_choices<W: Write>(writer: W, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for s in &data.subjects {
        for (i, (t, y)) in s.trials.iter().zip(&s.choices).enumerate() {
            let mut r = base_record(&s.id, i, t);
            r.choice = Some(u8::from(*y));
            w.serialize(r)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_reports<W: Write>(writer: W, panel: &ReportPanel) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (id, reports) in panel.ids.iter().zip(&panel.reports) {
        for (i, rt) in reports.iter().enumerate() {
            let mut r = base_record(id, i, &rt.trial);
            r.report = Some(rt.report);
            w.serialize(r)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_choices(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    write_choices(File::create(path)?, data)
}

pub fn save_reports(path: impl AsRef<Path>, panel: &ReportPanel) -> Result<()> {
    write_reports(File::create(path)?, panel)
}

/// Two-column `prior,loss` CSV.
pub fn write_loss_curve<W: Write>(writer: W, curve: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["prior", "loss"])?;
    for (prior, loss) in curve {
        w.write_record([prior.to_string(), loss.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Pretty JSON with a trailing newline. Field order follows the type's
/// declaration, so output diffs cleanly between runs.
pub fn write_json<W: Write, T: Serialize>(mut writer: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, value)?;
    writer.write_all(b"\n")?;
    Ok(())
}

pub fn save_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut file = File::create(path)?;
    write_json(&mut file, value)?;
    file.flush()?;
    Ok(())
}

pub fn load_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?)
}

pub fn write_results(path: impl AsRef<Path>, result: &FitResult) -> Result<()> {
    save_json(path, result)
}

pub fn read_results(path: impl AsRef<Path>) -> Result<FitResult> {
    load_json(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const HEADER: &str = "subject_id,trial_id,p_a,p_b,draws,marked,prior,choice\n";

    fn parse(body: &str) -> Result<Dataset> {
        read_choices(format!("{HEADER}{body}").as_bytes())
    }

    #[test]
    fn benchmark_row_parses() {
        let data = parse("s1,1,0.4,0.6,7,3,0.6,1\n").unwrap();
        let f = data.subjects[0].features()[0];
        assert_abs_diff_eq!(f.posterior, 9.0 / 13.0, epsilon = 1e-12);
        assert!(data.subjects[0].choices[0]);
    }

    #[test]
    fn groups_by_first_appearance() {
        let data = parse("b,1,0.6,0.4,3,1,0.5,0\na,1,0.6,0.4,3,2,0.5,1\nb,2,0.6,0.4,3,3,0.5,1\n").unwrap();
        assert_eq!(data.subjects[0].id, "b");
        assert_eq!(data.subjects[0].len(), 2);
        assert_eq!(data.subjects[0].trials[1].marked, 3);
        assert_eq!(data.subjects[1].id, "a");
    }

    fn expect_parse_error(text: &str, mode: Mode, row: usize, column: &str) {
        let err = read_records(text.as_bytes(), mode).unwrap_err();
        match err {
            Error::Parse { row: r, column: c, .. } => {
                assert_eq!((r, c.as_str()), (row, column), "{text}");
            }
            other => panic!("expected parse error for {text:?}, got {other}"),
        }
    }

    #[test]
    fn malformations_are_rejected() {
        let ok = "s1,1,0.4,0.6,7,3,0.6,1\n";
        let cases: Vec<(String, Mode, usize, &str)> = vec![
            ("".into(), Mode::Choice, 1, "*"),
            ("subject_id,trial_id,p_a,p_b,draws,marked,choice\n".to_string() + "s,1,.4,.6,7,3,1\n", Mode::Choice, 1, "prior"),
            (HEADER.to_string(), Mode::Choice, 2, "*"),
            (format!("{HEADER}s1,1,0.4,0.6,6,7,0.6,1\n"), Mode::Choice, 2, "marked"),
            (format!("{HEADER}{ok}s1,2,1.4,0.6,7,3,0.6,1\n"), Mode::Choice, 3, "p_a"),
            (format!("{HEADER}s1,1,0.4,0.6,7,3,-0.1,1\n"), Mode::Choice, 2, "prior"),
            (format!("{HEADER}s1,1,0.4,0.6,7,3,0.6,2\n"), Mode::Choice, 2, "choice"),
            (format!("{HEADER}s1,1,0.4,zero,7,3,0.6,1\n"), Mode::Choice, 2, "p_b"),
            (format!("{HEADER}s1,1,0.4,0.6,-7,3,0.6,1\n"), Mode::Choice, 2, "draws"),
            (format!("{HEADER}s1,1,0.4,0.6,7,3,0.6\n"), Mode::Choice, 2, "*"),
            (format!("{HEADER},1,0.4,0.6,7,3,0.6,1\n"), Mode::Choice, 2, "subject_id"),
            (format!("{HEADER}{ok}{ok}"), Mode::Choice, 3, "trial_id"),
            ("subject_id,trial_id,p_a,p_b,draws,marked,prior,choice,report\ns,1,.4,.6,7,3,.6,1,.5\n".into(), Mode::Choice, 1, "report"),
            ("subject_id,trial_id,p_a,p_b,draws,marked,prior,report\ns,1,.4,.6,7,3,.6,1.5\n".into(), Mode::Report, 2, "report"),
            ("subject_id,trial_id,p_a,p_b,draws,marked,prior,choice,age\ns,1,.4,.6,7,3,.6,1,30\n".into(), Mode::Choice, 1, "age"),
        ];
        for (text, mode, row, col) in cases {
            expect_parse_error(&text, mode, row, col);
        }
    }

    #[test]
    fn choice_roundtrip() {
        let text = "x,1,0.4,0.6,7,3,0.6,1\nx,2,0.6666666666666666,0.5,6,2,0.3333333333333333,0\ny,1,0.4,0.6,7,0,0.0,0\n";
        let data = parse(text).unwrap();
        let mut buf = Vec::new();
        write_choices(&mut buf, &data).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), format!("{HEADER}{text}"));
        let again = read_choices(buf.as_slice()).unwrap();
        for (a, b) in data.subjects.iter().zip(&again.subjects) {
            assert_eq!(a.trials, b.trials);
            assert_eq!(a.choices, b.choices);
        }
    }

    #[test]
    fn report_roundtrip() {
        let text = "subject_id,trial_id,p_a,p_b,draws,marked,prior,report\nr,1,0.4,0.6,7,3,0.6,0.7\nr,2,0.4,0.6,7,3,0.6,0.0\n";
        let panel = read_reports(text.as_bytes()).unwrap();
        assert_eq!(panel.reports[0][1].report, 0.0);
        let mut buf = Vec::new();
        write_reports(&mut buf, &panel).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), text);
    }

    #[test]
    fn loss_curve_header() {
        let mut buf = Vec::new();
        write_loss_curve(&mut buf, &[(0.0, 0.0), (0.5, 0.25)]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "prior,loss\n0,0\n0.5,0.25\n");
    }
}
