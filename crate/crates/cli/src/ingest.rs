//! Headered CSV in and out.

use std::io::{Read, Write};
use std::path::Path;

use gplinear::Dataset;
use nalgebra::DMatrix;

use crate::error::{CliError, CliResult};

/// Column selection for building a dataset from a table.
#[derive(Debug, Clone, PartialEq)]
pub struct Columns {
    pub y: String,
    pub x: String,
    pub z: Vec<String>,
}

/// Reads the named numeric columns. Errors name the data row (1-based,
/// header excluded) and column of the first bad cell.
pub fn read_columns<R: Read>(reader: R, names: &[&str]) -> CliResult<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("cannot read CSV header: {e}")))?
        .clone();
    let idx = names
        .iter()
        .map(|name| {
            headers.iter().position(|h| h == *name).ok_or_else(|| {
                let avail: Vec<&str> = headers.iter().collect();
                CliError::Data(format!(
                    "column '{name}' not found; available columns: {}",
                    avail.join(", ")
                ))
            })
        })
        .collect::<CliResult<Vec<usize>>>()?;
    let mut cols = vec![Vec::new(); names.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Data(format!("row {}: {e}", row + 1)))?;
        for (c, &i) in idx.iter().enumerate() {
            let cell = rec.get(i).unwrap_or("");
            let v: f64 = cell.parse().map_err(|_| {
                CliError::Data(format!(
                    "row {} column '{}': cannot parse '{cell}' as a number",
                    row + 1,
                    names[c]
                ))
            })?;
            cols[c].push(v);
        }
    }
    Ok(cols)
}

pub fn read_dataset<R: Read>(reader: R, cols: &Columns) -> CliResult<Dataset> {
    let mut names: Vec<&str> = vec![&cols.y, &cols.x];
    names.extend(cols.z.iter().map(String::as_str));
    let mut data = read_columns(reader, &names)?;
    let z_cols = data.split_off(2);
    let x = data.pop().expect("x column");
    let y = data.pop().expect("y column");
    let n = y.len();
    let z = DMatrix::from_fn(n, z_cols.len(), |i, j| z_cols[j][i]);
    Ok(Dataset::new(y, x, z)?)
}

pub fn load_dataset(path: &Path, cols: &Columns) -> CliResult<Dataset> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    read_dataset(file, cols)
}

/// Column names used by [`write_dataset`]: `y`, `x`, `z1`, `z2`, ...
pub fn default_columns(k: usize) -> Columns {
    Columns {
        y: "y".into(),
        x: "x".into(),
        z: (1..=k).map(|j| format!("z{j}")).collect(),
    }
}

/// Writes a dataset with the [`default_columns`] header. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_dataset<W: Write>(d: &Dataset, w: W) -> CliResult<()> {
    let cols = default_columns(d.k());
    let mut wtr = csv::Writer::from_writer(w);
    let io = |e: csv::Error| CliError::Data(format!("cannot write CSV: {e}"));
    let mut header = vec![cols.y.clone(), cols.x.clone()];
    header.extend(cols.z.iter().cloned());
    wtr.write_record(&header).map_err(io)?;
    for i in 0..d.n() {
        let mut rec = vec![d.y[i].to_string(), d.x[i].to_string()];
        rec.extend((0..d.k()).map(|j| d.z[(i, j)].to_string()));
        wtr.write_record(&rec).map_err(io)?;
    }
    wtr.flush().map_err(|e| CliError::Data(format!("cannot write CSV: {e}")))?;
    Ok(())
}
