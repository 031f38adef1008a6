//! Plain-text data exchange.
//!
//! Datasets are CSV files with a `# dims d k` line followed by a header
//! `x1,…,xd,y1,…,yk` and one sample per row. Datasets are written with
//! shortest round-trip floats so a write-read cycle is value-identical;
//! reports use 12 significant digits.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::model::{Dataset, SupervisedSample};

/// Formats a float with 12 significant digits, dropping trailing zeros.
///
/// Magnitudes below `1e-4` or from `1e15` on use scientific notation.
pub fn fmt12(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    let rounded: f64 = format!("{v:.11e}")
        .parse()
        .expect("scientific notation parses");
    let a = rounded.abs();
    if a != 0.0 && !(1e-4..1e15).contains(&a) {
        format!("{rounded:e}")
    } else {
        format!("{rounded}")
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_dims(line: &str, lineno: usize) -> Result<(usize, usize)> {
    let rest = line
        .trim()
        .strip_prefix('#')
        .map(str::trim)
        .and_then(|s| s.strip_prefix("dims"))
        .ok_or_else(|| parse_err(lineno, "expected '# dims d k'"))?;
    let parts: Vec<&str> = rest.split_whitespace().collect();
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| parse_err(lineno, format!("bad dimension '{s}'")))
    };
    match parts.as_slice() {
        [d, k] => {
            let (d, k) = (parse(d)?, parse(k)?);
            if d == 0 || k == 0 {
                return Err(parse_err(lineno, "dimensions must be positive"));
            }
            Ok((d, k))
        }
        _ => Err(parse_err(lineno, "expected '# dims d k'")),
    }
}

fn header(d: usize, k: usize) -> Vec<String> {
    (1..=d)
        .map(|i| format!("x{i}"))
        .chain((1..=k).map(|i| format!("y{i}")))
        .collect()
}

/// One-based line of the record at `pos`, past any blank lines the reader skipped.
fn body_line(body: &str, pos: &csv::Position) -> usize {
    let start = (pos.byte() as usize).min(body.len());
    let skipped = body[start..].len() - body[start..].trim_start().len();
    body.as_bytes()[..start + skipped]
        .iter()
        .filter(|&&b| b == b'\n')
        .count()
        + 1
}

/// Reads a dataset in the self-describing CSV format.
pub fn read_dataset<R: Read>(mut reader: R) -> Result<Dataset> {
    let mut text = String::new();
    reader
        .read_to_string(&mut text)
        .map_err(|e| Error::Io(e.to_string()))?;
    let first = text
        .lines()
        .enumerate()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or_else(|| parse_err(1, "empty file"))?;
    let (d, k) = parse_dims(first.1, first.0 + 1)?;
    let offset = first.0 + 1;
    let body: String = text.lines().skip(offset).collect::<Vec<_>>().join("\n");
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(body.as_bytes());
    let hdr = rdr
        .headers()
        .map_err(|e| parse_err(offset + 1, e.to_string()))?
        .clone();
    let want = header(d, k);
    if hdr.iter().ne(want.iter().map(String::as_str)) {
        return Err(parse_err(
            offset + 1,
            format!("expected header '{}'", want.join(",")),
        ));
    }
    let mut samples = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| body_line(&body, p));
            parse_err(offset + line, e.to_string())
        })?;
        let line = offset + rec.position().map_or(0, |p| body_line(&body, p));
        if rec.len() != d + k {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", d + k, rec.len()),
            ));
        }
        let mut vals = Vec::with_capacity(d + k);
        for f in rec.iter() {
            let v: f64 = f
                .parse()
                .map_err(|_| parse_err(line, format!("not a number: '{f}'")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("non-finite value '{f}'")));
            }
            vals.push(v);
        }
        let y = vals.split_off(d);
        samples.push(SupervisedSample::new(vals, y));
    }
    if samples.is_empty() {
        return Err(Error::EmptyData);
    }
    Dataset::new(samples)
}

/// Writes a dataset in the self-describing CSV format.
pub fn write_dataset<W: Write>(data: &Dataset, mut writer: W) -> Result<()> {
    let io = |e: std::io::Error| Error::Io(e.to_string());
    writeln!(writer, "# dims {} {}", data.dim_x(), data.dim_y()).map_err(io)?;
    let mut w = csv::Writer::from_writer(writer);
    let csv_io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(header(data.dim_x(), data.dim_y()))
        .map_err(csv_io)?;
    for s in data.samples() {
        w.write_record(s.x.iter().chain(&s.y).map(|v| format!("{v}")))
            .map_err(csv_io)?;
    }
    w.flush().map_err(io)
}

/// Writes a table of floats and labels with 12 significant digits.
pub fn write_table<W: Write>(header: &[&str], rows: &[Vec<String>], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let csv_io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(header).map_err(csv_io)?;
    for r in rows {
        if r.len() != header.len() {
            return Err(Error::DimensionMismatch {
                expected: header.len(),
                got: r.len(),
            });
        }
        w.write_record(r).map_err(csv_io)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}
