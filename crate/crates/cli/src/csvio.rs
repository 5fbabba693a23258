//! CSV ingestion and emission. Cells are decimals or exact `p/q` fractions.

use std::path::Path;

use knet::ExactRational;

use crate::CliError;

fn parse_cell(cell: &str) -> Option<ExactRational> {
    cell.trim().parse().ok()
}

/// Reads numeric rows of exactly `columns` cells. A first row that does not
/// parse as numbers is taken as a header. Row numbers in errors count data
/// rows from 1.
pub fn read_rows(path: &Path, columns: usize) -> Result<Vec<Vec<ExactRational>>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut rows = Vec::new();
    let mut first = true;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        if std::mem::take(&mut first) && record.iter().any(|c| parse_cell(c).is_none()) {
            continue;
        }
        let row = rows.len() + 1;
        if record.len() != columns {
            return Err(CliError::Input(format!(
                "{}: row {row} has {} columns, expected {columns}",
                path.display(),
                record.len()
            )));
        }
        let values = record
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                parse_cell(cell).ok_or_else(|| {
                    CliError::Input(format!(
                        "{}: row {row}, column {}: {cell:?} is not a number",
                        path.display(),
                        c + 1
                    ))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(values);
    }
    Ok(rows)
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(source) => CliError::Io {
                path: path.to_path_buf(),
                source,
            },
            other => CliError::Input(format!("{}: {other:?}", path.display())),
        }
    } else {
        CliError::Input(format!("{}: {e}", path.display()))
    }
}

/// Renders a header plus rows as CSV text.
pub fn render(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(header).expect("write to memory");
    for row in rows {
        writer.write_record(row).expect("write to memory");
    }
    String::from_utf8(writer.into_inner().expect("flush to memory")).expect("utf-8 cells")
}
