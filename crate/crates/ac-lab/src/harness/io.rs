use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::experiments::Table;
use crate::field::PhaseField;

fn csv_err(e: csv::Error) -> LabError {
    LabError::Io(std::io::Error::other(e.to_string()))
}

/// Writes a table with a header row; floats use the shortest round-trip form.
pub fn write_table<W: std::io::Write>(t: &Table, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&t.columns).map_err(csv_err)?;
    for r in &t.rows {
        w.write_record(r.iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_table_file(t: &Table, path: &Path) -> Result<()> {
    write_table(t, BufWriter::new(File::create(path)?))
}

/// Reads a table written by `write_table`; errors name the offending line.
pub fn read_table<R: std::io::Read>(name: &str, inp: R) -> Result<Table> {
    let mut r = csv::Reader::from_reader(inp);
    let columns: Vec<String> = r.headers().map_err(csv_err)?.iter().map(|s| s.to_string()).collect();
    if columns.is_empty() {
        return Err(LabError::Config(format!("{name}: missing header")));
    }
    let mut rows = vec![];
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row: std::result::Result<Vec<f64>, _> = rec.iter().map(|s| s.trim().parse::<f64>()).collect();
        match row {
            Ok(v) if v.len() == columns.len() => rows.push(v),
            _ => return Err(LabError::Config(format!("{name}: malformed row at line {}", k + 2))),
        }
    }
    Ok(Table { name: name.to_string(), columns, rows })
}

pub fn write_json<T: Serialize>(v: &T, path: &Path) -> Result<()> {
    let f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(f, v).map_err(|e| LabError::Io(std::io::Error::other(e.to_string())))
}

pub fn write_field(f: &PhaseField, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    f.write_checkpoint(&mut w)?;
    std::io::Write::flush(&mut w)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip_is_exact() {
        let t = Table {
            name: "x".into(),
            columns: vec!["a".into(), "b".into()],
            rows: vec![vec![0.1, 1e-300], vec![-3.0, std::f64::consts::PI]],
        };
        let mut buf = vec![];
        write_table(&t, &mut buf).unwrap();
        let back = read_table("x", &buf[..]).unwrap();
        assert_eq!(back.columns, t.columns);
        assert_eq!(back.rows, t.rows);
    }

    #[test]
    fn malformed_rows_report_line() {
        let e = read_table("bad", "a,b\n1,2\n3,zz\n".as_bytes()).unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
        assert!(read_table("empty", "".as_bytes()).is_err());
    }
}
