//! CSV and JSON persistence of datasets.
//!
//! CSV dialect: comma separated, `.` decimals, LF line endings, booleans as
//! `0`/`1`, UTF-8. The first line is a `# schema: ...` comment. Floats are
//! written in shortest round-trip form so import is lossless.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetRow, Features, ScoreDiagnostics};
use crate::error::{Error, Result};
use crate::sim::GroupId;

pub const DATASET_SCHEMA: &str = "biassim-dataset/1";

const BASE_COLUMNS: [&str; 15] = [
    "entity_id",
    "timestep",
    "group",
    "wealth",
    "education",
    "trust",
    "fin_lit",
    "credit_score",
    "loan_hist",
    "loan_amount",
    "has_job",
    "has_car",
    "has_house",
    "qualified",
    "loan_approved",
];
const DIAG_COLUMNS: [&str; 2] = ["raw_score", "biased_score"];

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn write_csv<W: Write>(rows: &[DatasetRow], out: W, include_diagnostics: bool) -> Result<()> {
    let mut out = out;
    writeln!(out, "# schema: {DATASET_SCHEMA}")?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let mut header: Vec<&str> = BASE_COLUMNS.to_vec();
    if include_diagnostics {
        header.extend(DIAG_COLUMNS);
    }
    w.write_record(&header)?;
    for r in rows {
        let f = &r.features;
        let mut rec = vec![
            r.entity_id.to_string(),
            r.timestep.to_string(),
            r.group.to_string(),
            f.wealth.to_string(),
            f.education.to_string(),
            f.trust.to_string(),
            f.fin_lit.to_string(),
            f.credit_score.to_string(),
            f.loan_hist.to_string(),
            f.loan_amount.to_string(),
            flag(f.has_job).into(),
            flag(f.has_car).into(),
            flag(f.has_house).into(),
            flag(r.qualified).into(),
            flag(r.loan_approved).into(),
        ];
        if include_diagnostics {
            let d = r.diagnostics.ok_or_else(|| {
                Error::Schema(format!("row for entity {} has no score diagnostics to export", r.entity_id))
            })?;
            rec.push(d.raw_score.to_string());
            rec.push(d.biased_score.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn parse<T: std::str::FromStr>(s: &str, col: &str, line: usize) -> Result<T> {
    s.parse().map_err(|_| Error::Schema(format!("line {line}: bad value `{s}` in column {col}")))
}

fn parse_flag(s: &str, col: &str, line: usize) -> Result<bool> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(Error::Schema(format!("line {line}: column {col} must be 0 or 1, got `{s}`"))),
    }
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<DatasetRow>> {
    let mut text = String::new();
    let mut input = input;
    input.read_to_string(&mut text)?;
    let (first, body) = text.split_once('\n').unwrap_or((text.as_str(), ""));
    let expected = format!("# schema: {DATASET_SCHEMA}");
    if first.trim_end() != expected {
        return Err(Error::Schema(format!("expected `{expected}` header line, found `{first}`")));
    }
    let mut rdr = csv::ReaderBuilder::new().from_reader(body.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let with_diag = if header == BASE_COLUMNS {
        false
    } else if header.len() == BASE_COLUMNS.len() + 2
        && header[..BASE_COLUMNS.len()] == BASE_COLUMNS
        && header[BASE_COLUMNS.len()..] == DIAG_COLUMNS
    {
        true
    } else {
        return Err(Error::Schema(format!("unexpected columns: {}", header.join(","))));
    };

    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 3;
        let c = |k: usize| rec.get(k).unwrap_or("");
        let group = GroupId::parse(c(2)).ok_or_else(|| Error::Schema(format!("line {line}: bad group `{}`", c(2))))?;
        let features = Features {
            wealth: parse(c(3), "wealth", line)?,
            education: parse(c(4), "education", line)?,
            trust: parse(c(5), "trust", line)?,
            fin_lit: parse(c(6), "fin_lit", line)?,
            credit_score: parse(c(7), "credit_score", line)?,
            loan_hist: parse(c(8), "loan_hist", line)?,
            loan_amount: parse(c(9), "loan_amount", line)?,
            has_job: parse_flag(c(10), "has_job", line)?,
            has_car: parse_flag(c(11), "has_car", line)?,
            has_house: parse_flag(c(12), "has_house", line)?,
        };
        let diagnostics = if with_diag {
            Some(ScoreDiagnostics {
                raw_score: parse(c(15), "raw_score", line)?,
                biased_score: parse(c(16), "biased_score", line)?,
            })
        } else {
            None
        };
        rows.push(DatasetRow {
            entity_id: parse(c(0), "entity_id", line)?,
            timestep: parse(c(1), "timestep", line)?,
            group,
            features,
            qualified: parse_flag(c(13), "qualified", line)?,
            loan_approved: parse_flag(c(14), "loan_approved", line)?,
            diagnostics,
        });
    }
    Ok(rows)
}

pub fn export_csv(rows: &[DatasetRow], path: impl AsRef<Path>, include_diagnostics: bool) -> Result<()> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf, include_diagnostics)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn import_csv(path: impl AsRef<Path>) -> Result<Vec<DatasetRow>> {
    read_csv(std::fs::File::open(path)?)
}

#[derive(Serialize, Deserialize)]
struct JsonDataset {
    schema: String,
    rows: Vec<DatasetRow>,
}

pub fn export_json(rows: &[DatasetRow], path: impl AsRef<Path>) -> Result<()> {
    let doc = JsonDataset { schema: DATASET_SCHEMA.into(), rows: rows.to_vec() };
    std::fs::write(path, serde_json::to_vec_pretty(&doc)?)?;
    Ok(())
}

pub fn import_json(path: impl AsRef<Path>) -> Result<Vec<DatasetRow>> {
    let doc: JsonDataset = serde_json::from_slice(&std::fs::read(path)?)?;
    if doc.schema != DATASET_SCHEMA {
        return Err(Error::Schema(format!("unsupported dataset schema `{}`", doc.schema)));
    }
    Ok(doc.rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::fixtures;
    use proptest::prelude::*;

    fn to_bytes(rows: &[DatasetRow], diag: bool) -> Vec<u8> {
        let mut buf = Vec::new();
        write_csv(rows, &mut buf, diag).unwrap();
        buf
    }

    #[test]
    fn empty_dataset_is_header_only() {
        let text = String::from_utf8(to_bytes(&[], false)).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("# schema: biassim-dataset/1\nentity_id,timestep,group,"));
        assert!(read_csv(text.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn fixture_reimports_identically() {
        let rows = fixtures::rows(10);
        let back = read_csv(to_bytes(&rows, true).as_slice()).unwrap();
        assert_eq!(back, rows);
        let no_diag = read_csv(to_bytes(&rows, false).as_slice()).unwrap();
        assert!(no_diag.iter().all(|r| r.diagnostics.is_none()));
        assert_eq!(no_diag[3].features, rows[3].features);
    }

    #[test]
    fn export_import_export_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.csv");
        let p2 = dir.path().join("b.csv");
        let rows = fixtures::rows(50);
        export_csv(&rows, &p1, true).unwrap();
        export_csv(&import_csv(&p1).unwrap(), &p2, true).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        let text = std::fs::read_to_string(&p1).unwrap();
        assert!(!text.contains('\r'));
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.json");
        let rows = fixtures::rows(7);
        export_json(&rows, &p).unwrap();
        assert_eq!(import_json(&p).unwrap(), rows);
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        assert!(matches!(read_csv("entity_id\n1\n".as_bytes()), Err(Error::Schema(_))));
        let bad = "# schema: biassim-dataset/1\nentity_id,group\n1,A\n";
        assert!(matches!(read_csv(bad.as_bytes()), Err(Error::Schema(_))));
        let mut text = String::from_utf8(to_bytes(&fixtures::rows(2), false)).unwrap();
        text = text.replace(",A,", ",Z,");
        assert!(read_csv(text.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_lossless(
            vals in proptest::collection::vec((any::<f64>(), 0u8..5, any::<u32>(), any::<bool>()), 0..20)
        ) {
            let mut rows = fixtures::rows(vals.len());
            for (r, (v, edu, hist, b)) in rows.iter_mut().zip(&vals) {
                let v = if v.is_finite() { *v } else { 0.5 };
                r.features.wealth = v;
                r.features.loan_amount = v * 1e-7;
                r.features.education = *edu;
                r.features.loan_hist = *hist;
                r.features.has_car = *b;
                r.diagnostics = Some(ScoreDiagnostics { raw_score: v, biased_score: -v });
            }
            let bytes = to_bytes(&rows, true);
            let back = read_csv(bytes.as_slice()).unwrap();
            prop_assert_eq!(&back, &rows);
            prop_assert_eq!(to_bytes(&back, true), bytes);
        }
    }
}
