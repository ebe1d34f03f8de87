use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use qkrr::{Dataset, Sample};

use crate::error::{CliError, CliResult};

/// Reads a dataset: header row, one sample per line, target in the last column.
pub fn ingest_csv(path: &Path) -> CliResult<Dataset> {
    let file = File::open(path).map_err(|e| CliError::Usage(format!("cannot open dataset {}: {e}", path.display())))?;
    parse_dataset(file).map_err(|e| prefix(e, path))
}

pub fn parse_dataset<R: Read>(reader: R) -> CliResult<Dataset> {
    let (header, rows) = read_table(reader)?;
    if header.len() < 2 {
        return Err(CliError::Data(format!("need at least one feature and a target column, header has {}", header.len())));
    }
    let samples = rows
        .into_iter()
        .map(|mut r| {
            let target = r.pop().expect("rows have the header width");
            Sample::new(r, target)
        })
        .collect();
    Dataset::new(samples).map_err(CliError::from)
}

/// Reads query points. The file may carry the same layout as the dataset
/// (the target column is then ignored) or features only.
pub fn read_points(path: &Path, n_features: usize) -> CliResult<Vec<Vec<f64>>> {
    let file = File::open(path).map_err(|e| CliError::Usage(format!("cannot open test points {}: {e}", path.display())))?;
    let (header, mut rows) = read_table(file).map_err(|e| prefix(e, path))?;
    match header.len() {
        n if n == n_features => Ok(rows),
        n if n == n_features + 1 => {
            rows.iter_mut().for_each(|r| {
                r.pop();
            });
            Ok(rows)
        }
        n => Err(CliError::Data(format!(
            "{}: {n} columns do not match a dataset with {n_features} features",
            path.display()
        ))),
    }
}

fn prefix(e: CliError, path: &Path) -> CliError {
    match e {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        other => other,
    }
}

/// Header plus numeric rows. Rows are numbered from 1, excluding the header.
fn read_table<R: Read>(reader: R) -> CliResult<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("unreadable header: {e}")))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(CliError::Data("empty file".into()));
    }
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| CliError::Data(format!("row {row}: {e}")))?;
        if record.len() != header.len() {
            return Err(CliError::Data(format!("row {row}: expected {} columns, found {}", header.len(), record.len())));
        }
        let values = record
            .iter()
            .enumerate()
            .map(|(c, cell)| match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(CliError::Data(format!(
                    "row {row}, column {} ({}): '{cell}' is not a finite number",
                    c + 1,
                    header[c]
                ))),
            })
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(CliError::Data("no data rows".into()));
    }
    Ok((header, rows))
}

/// Writes `x1..xN,y`. Values use the shortest representation that parses
/// back to the same `f64`.
pub fn write_dataset<W: Write>(dataset: &Dataset, out: W) -> CliResult<()> {
    let mut header: Vec<String> = (1..=dataset.n_features()).map(|i| format!("x{i}")).collect();
    header.push("y".into());
    let rows = dataset.samples().iter().map(|s| s.features.iter().copied().chain([s.target]).collect::<Vec<_>>());
    write_table(&header, rows, out)
}

pub fn write_points<W: Write>(points: &[Vec<f64>], out: W) -> CliResult<()> {
    let n = points.first().map_or(0, Vec::len);
    let header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    write_table(&header, points.iter().cloned(), out)
}

fn write_table<W: Write>(header: &[String], rows: impl Iterator<Item = Vec<f64>>, out: W) -> CliResult<()> {
    let io = |e: csv::Error| CliError::Usage(format!("cannot write table: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string())).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Usage(format!("cannot write table: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> CliResult<Dataset> {
        parse_dataset(text.as_bytes())
    }

    #[test]
    fn single_row() {
        let d = parse("x1,x2,y\n1.0,2.0,3.0").unwrap();
        assert_eq!((d.len(), d.n_features()), (1, 2));
        assert_eq!(d.samples()[0].target, 3.0);
        assert_eq!(d.samples()[0].features, vec![1.0, 2.0]);
    }

    #[test]
    fn ragged_row_is_named() {
        let e = parse("a,b,y\n1,2,3\n4,5\n").unwrap_err();
        assert!(matches!(&e, CliError::Data(m) if m.contains("row 2")), "{e}");
    }

    #[test]
    fn non_numeric_cell_is_located() {
        let e = parse("a,b,y\n1,2,3\n4,x,6\n").unwrap_err();
        assert!(matches!(&e, CliError::Data(m) if m.contains("row 2") && m.contains("column 2")), "{e}");
        assert!(parse("a,y\nnan,1\n").is_err());
    }

    #[test]
    fn empty_inputs() {
        assert!(matches!(parse(""), Err(CliError::Data(_))));
        assert!(matches!(parse("a,y\n"), Err(CliError::Data(_))));
        assert!(matches!(parse("y\n1\n"), Err(CliError::Data(_))));
    }

    #[test]
    fn row_order_preserved() {
        let d = parse("a,y\n3,0\n1,1\n2,2\n").unwrap();
        let f: Vec<f64> = d.samples().iter().map(|s| s.features[0]).collect();
        assert_eq!(f, vec![3.0, 1.0, 2.0]);
    }

    #[test]
    fn round_trip_is_exact() {
        let d = qkrr::fixtures::synthetic_dataset(13, 3, 5).unwrap();
        let mut buf = Vec::new();
        write_dataset(&d, &mut buf).unwrap();
        assert_eq!(parse_dataset(buf.as_slice()).unwrap(), d);
    }
}
