//! JSON summaries and CSV tables.
//!
//! Floats are written as `{:.16e}` (17 significant digits), which
//! round-trips every `f64`; non-finite values become `null` in JSON and
//! `NaN`/`inf` in CSV.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::ser::Formatter;

use effdiff::montecarlo::StudyRow;
use effdiff::TorusGridField;

pub fn float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

struct ScientificFormatter {
    pretty: serde_json::ser::PrettyFormatter<'static>,
}

macro_rules! forward {
    ($($name:ident($($arg:ident: $ty:ty),*);)*) => {
        $(fn $name<W: ?Sized + Write>(&mut self, writer: &mut W $(, $arg: $ty)*) -> io::Result<()> {
            self.pretty.$name(writer $(, $arg)*)
        })*
    };
}

impl Formatter for ScientificFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            writer.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    forward! {
        begin_array();
        end_array();
        begin_array_value(first: bool);
        end_array_value();
        begin_object();
        end_object();
        begin_object_key(first: bool);
        end_object_key();
        begin_object_value();
        end_object_value();
    }
}

/// Pretty-printed JSON with scientific-notation floats and a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let formatter = ScientificFormatter { pretty: serde_json::ser::PrettyFormatter::with_indent(b"  ") };
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, formatter);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf)?)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
}

fn coordinate_headers(dim: usize) -> Vec<String> {
    (1..=dim).map(|i| format!("y{i}")).collect()
}

/// `converge.csv` header for dimension `d`:
/// `h,scheme,err_frobenius,err_11,…,err_dd,stderr,wallclock`.
pub fn converge_header(d: usize) -> Vec<String> {
    let mut h = vec!["h".to_string(), "scheme".into(), "err_frobenius".into()];
    for i in 1..=d {
        for j in 1..=d {
            h.push(format!("err_{i}{j}"));
        }
    }
    h.push("stderr".into());
    h.push("wallclock".into());
    h
}

pub fn write_converge_csv(path: &Path, d: usize, rows: &[StudyRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(converge_header(d))?;
    for r in rows {
        let mut rec = vec![float(r.h), r.scheme.to_string(), float(r.error_frobenius)];
        rec.extend(r.error.as_slice().iter().map(|v| float(*v)));
        rec.push(float(r.error_frobenius_stderr));
        rec.push(float(r.wallclock_seconds));
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per grid point: `y1,…,yd` (node or cell centre) followed by the
/// named components.
pub fn write_grid_csv(path: &Path, field: &TorusGridField, names: &[String]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = coordinate_headers(field.dim);
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    let mut y = vec![0.0; field.dim];
    for p in 0..field.points() {
        field.node_coordinates(p, &mut y);
        let mut rec: Vec<String> = y.iter().map(|v| float(*v)).collect();
        rec.extend((0..field.components).map(|c| float(field.get(p, c))));
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_through_json() {
        let values = [0.1, -1.0 / 3.0, 2.0615413909390865, 5e-324, f64::MAX, 0.0];
        let text = to_json(&values).unwrap();
        let back: Vec<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, values);
        assert!(text.contains("1.0000000000000001e-1"));
    }

    #[test]
    fn non_finite_floats_become_null() {
        let text = to_json(&[f64::NAN, 1.0]).unwrap();
        let back: Vec<Option<f64>> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, [None, Some(1.0)]);
    }

    #[test]
    fn converge_header_lists_entries_row_major() {
        assert_eq!(converge_header(2).join(","), "h,scheme,err_frobenius,err_11,err_12,err_21,err_22,stderr,wallclock");
    }
}
