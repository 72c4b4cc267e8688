//! CSV ingestion and column standardization.

use crate::error::{CliError, Result};
use nalgebra::{DMatrix, DVector};
use std::path::Path;

/// Cell spellings treated as a missing value.
const MISSING: [&str; 5] = ["", "NA", "NaN", "nan", "?"];

/// Per-column shift and scale mapping raw data to zero mean, unit variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub x_mean: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub y_mean: f64,
    pub y_scale: f64,
}

fn mean_and_scale(values: impl Iterator<Item = f64> + Clone, what: &str) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var > 0.0 {
        (mean, var.sqrt())
    } else {
        log::warn!("{what} is constant; leaving its scale at 1");
        (mean, 1.0)
    }
}

impl Standardization {
    /// Population mean and standard deviation of every column. A constant
    /// column keeps scale 1 so the transform stays invertible.
    pub fn fit(x: &DMatrix<f64>, y: &DVector<f64>, names: &[String], target: &str) -> Self {
        let (x_mean, x_scale) = (0..x.ncols())
            .map(|j| mean_and_scale(x.column(j).iter().copied(), &format!("column '{}'", names[j])))
            .unzip();
        let (y_mean, y_scale) = mean_and_scale(y.iter().copied(), &format!("target '{target}'"));
        Self {
            x_mean,
            x_scale,
            y_mean,
            y_scale,
        }
    }

    pub fn d(&self) -> usize {
        self.x_mean.len()
    }

    pub fn transform_x(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.x_mean[j]) / self.x_scale[j])
    }

    pub fn transform_y(&self, y: &DVector<f64>) -> DVector<f64> {
        y.map(|v| (v - self.y_mean) / self.y_scale)
    }

    pub fn inverse_y(&self, y: &DVector<f64>) -> DVector<f64> {
        y.map(|v| v * self.y_scale + self.y_mean)
    }

    pub fn inverse_var(&self, var: &DVector<f64>) -> DVector<f64> {
        var.map(|v| v * self.y_scale * self.y_scale)
    }
}

/// Standardized training data plus what is needed to undo the scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub standardization: Standardization,
    /// Rows skipped because a cell was missing.
    pub dropped_rows: usize,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }
}

/// Raw numeric table; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
    /// File line of each row, for messages.
    pub lines: Vec<u64>,
}

impl Table {
    fn column_index(&self, target: &str, header: bool, path: &Path) -> Result<usize> {
        if let Some(j) = self.names.iter().position(|n| n == target) {
            return Ok(j);
        }
        if !header {
            if let Ok(j) = target.parse::<usize>() {
                if j < self.names.len() {
                    return Ok(j);
                }
            }
        }
        Err(CliError::input(
            path,
            format!("no column '{target}' (columns: {})", self.names.join(", ")),
        ))
    }
}

pub fn read_table(path: &Path, header: bool) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::input(path, e.to_string()))?;
    let mut names: Vec<String> = if header {
        reader
            .headers()
            .map_err(|e| CliError::input(path, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect()
    } else {
        Vec::new()
    };
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::input(path, e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if names.is_empty() {
            names = (0..record.len()).map(|j| format!("column{j}")).collect();
        }
        let mut row = Vec::with_capacity(record.len());
        for (j, cell) in record.iter().enumerate() {
            if MISSING.contains(&cell) {
                row.push(None);
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(Some(v)),
                _ => {
                    return Err(CliError::input(
                        path,
                        format!("row {line}, column '{}': '{cell}' is not a finite number", names[j]),
                    ))
                }
            }
        }
        rows.push(row);
        lines.push(line);
    }
    if rows.is_empty() {
        return Err(CliError::input(path, "file has no data rows"));
    }
    Ok(Table { names, rows, lines })
}

/// Reads a numeric CSV, drops rows with missing cells and standardizes every
/// column. The target is found by header name, or by 0-based index without a
/// header; it defaults to the last column.
pub fn ingest_csv(path: &Path, target: Option<&str>, header: bool) -> Result<Dataset> {
    let table = read_table(path, header)?;
    let ncols = table.names.len();
    if ncols < 2 {
        return Err(CliError::input(path, "need at least one feature column and a target column"));
    }
    let t = match target {
        Some(name) => table.column_index(name, header, path)?,
        None => ncols - 1,
    };
    let complete: Vec<&Vec<Option<f64>>> = table.rows.iter().filter(|r| r.iter().all(Option::is_some)).collect();
    let dropped_rows = table.rows.len() - complete.len();
    if dropped_rows > 0 {
        log::warn!("{}: skipped {dropped_rows} rows with missing values", path.display());
    }
    if complete.is_empty() {
        return Err(CliError::input(path, "every row has a missing value"));
    }
    let features: Vec<usize> = (0..ncols).filter(|&j| j != t).collect();
    let x = DMatrix::from_fn(complete.len(), features.len(), |i, j| complete[i][features[j]].unwrap_or_default());
    let y = DVector::from_fn(complete.len(), |i, _| complete[i][t].unwrap_or_default());
    let feature_names: Vec<String> = features.iter().map(|&j| table.names[j].clone()).collect();
    let target_name = table.names[t].clone();
    let standardization = Standardization::fit(&x, &y, &feature_names, &target_name);
    Ok(Dataset {
        x: standardization.transform_x(&x),
        y: standardization.transform_y(&y),
        feature_names,
        target_name,
        standardization,
        dropped_rows,
    })
}

/// Raw inputs for prediction, plus the target column when `target` names one
/// that is present. Missing cells are an error here since every row needs an
/// output.
pub fn read_features(
    path: &Path,
    header: bool,
    d: usize,
    target: Option<&str>,
) -> Result<(DMatrix<f64>, Option<DVector<f64>>)> {
    let table = read_table(path, header)?;
    let t = target.and_then(|name| table.column_index(name, header, path).ok());
    let features: Vec<usize> = (0..table.names.len()).filter(|&j| Some(j) != t).collect();
    if features.len() != d {
        return Err(CliError::input(
            path,
            format!("model expects d = {d} feature columns, found {}", features.len()),
        ));
    }
    for (row, line) in table.rows.iter().zip(&table.lines) {
        if let Some(j) = row.iter().position(Option::is_none) {
            return Err(CliError::input(
                path,
                format!("row {line}, column '{}': missing value", table.names[j]),
            ));
        }
    }
    let rows = &table.rows;
    let x = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][features[j]].unwrap_or_default());
    let y = t.map(|t| DVector::from_fn(rows.len(), |i, _| rows[i][t].unwrap_or_default()));
    Ok((x, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn csv_file(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn three_rows_hand_computed() {
        let f = csv_file("a,b,y\n1,10,2\n2,20,4\n3,60,9\n");
        let ds = ingest_csv(f.path(), Some("y"), true).unwrap();
        // a: mean 2, population sd sqrt(2/3).
        let sa = (2.0f64 / 3.0).sqrt();
        // b: mean 30, deviations -20, -10, 30, variance 1400/3.
        let sb = (1400.0f64 / 3.0).sqrt();
        // y: mean 5, deviations -3, -1, 4, variance 26/3.
        let sy = (26.0f64 / 3.0).sqrt();
        let want_x = [[-1.0 / sa, -20.0 / sb], [0.0, -10.0 / sb], [1.0 / sa, 30.0 / sb]];
        for (i, row) in want_x.iter().enumerate() {
            for (j, want) in row.iter().enumerate() {
                assert!((ds.x[(i, j)] - want).abs() < 1e-14);
            }
        }
        let want_y = [-3.0 / sy, -1.0 / sy, 4.0 / sy];
        for (got, want) in ds.y.iter().zip(want_y) {
            assert!((got - want).abs() < 1e-14);
        }
        assert_eq!(ds.feature_names, vec!["a", "b"]);
        assert_eq!(ds.standardization.x_mean, vec![2.0, 30.0]);
    }

    #[test]
    fn target_by_name_in_middle() {
        let f = csv_file("u,label,v\n1,7,3\n2,8,5\n4,9,6\n");
        let ds = ingest_csv(f.path(), Some("label"), true).unwrap();
        assert_eq!(ds.target_name, "label");
        assert_eq!(ds.feature_names, vec!["u", "v"]);
        assert_eq!(ds.standardization.y_mean, 8.0);
        assert!(ingest_csv(f.path(), Some("nope"), true).unwrap_err().to_string().contains("nope"));
    }

    #[test]
    fn target_by_index_without_header() {
        let f = csv_file("5,1,2\n6,3,4\n");
        let ds = ingest_csv(f.path(), Some("0"), false).unwrap();
        assert_eq!(ds.standardization.y_mean, 5.5);
        assert_eq!(ds.d(), 2);
    }

    #[test]
    fn constant_column_keeps_unit_scale() {
        let f = csv_file("a,b,y\n1,4,1\n2,4,2\n3,4,4\n");
        let ds = ingest_csv(f.path(), None, true).unwrap();
        assert_eq!(ds.standardization.x_scale[1], 1.0);
        assert!(ds.x.column(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_numeric_cell_names_row_and_column() {
        let f = csv_file("a,b,y\n1,2,3\n4,oops,6\n");
        let msg = ingest_csv(f.path(), None, true).unwrap_err().to_string();
        assert!(msg.contains("row 3") && msg.contains("'b'") && msg.contains("oops"), "{msg}");
    }

    #[test]
    fn missing_rows_are_dropped_and_counted() {
        let f = csv_file("a,y\n1,2\n,3\n2,NA\n3,5\n4,7\n");
        let ds = ingest_csv(f.path(), None, true).unwrap();
        assert_eq!(ds.dropped_rows, 2);
        assert_eq!(ds.n(), 3);
        let all_missing = csv_file("a,y\n1,\n");
        assert!(ingest_csv(all_missing.path(), None, true).is_err());
    }

    #[test]
    fn empty_and_ragged_files_are_errors() {
        assert!(ingest_csv(csv_file("").path(), None, true).is_err());
        assert!(ingest_csv(csv_file("a,y\n").path(), None, true).is_err());
        assert!(ingest_csv(csv_file("a,y\n1,2\n3\n").path(), None, true).is_err());
        assert!(ingest_csv(csv_file("a,y\n1,inf\n").path(), None, true).is_err());
    }

    #[test]
    fn standardization_round_trip() {
        let f = csv_file("a,y\n0.1,1e5\n0.7,-3.25\n12,17.5\n-4,0.001\n");
        let ds = ingest_csv(f.path(), None, true).unwrap();
        let back = ds.standardization.inverse_y(&ds.y);
        let orig: [f64; 4] = [1e5, -3.25, 17.5, 0.001];
        // Rounding scales with the column's magnitude, not each entry's.
        let size = orig.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (b, o) in back.iter().zip(orig) {
            assert!((b - o).abs() <= 1e-12 * size, "{b} vs {o}");
        }
    }

    #[test]
    fn feature_count_checked() {
        let f = csv_file("a,b,y\n1,2,3\n");
        let msg = read_features(f.path(), true, 3, Some("y")).unwrap_err().to_string();
        assert!(msg.contains("d = 3"), "{msg}");
        let (x, y) = read_features(f.path(), true, 2, Some("y")).unwrap();
        assert_eq!(x.ncols(), 2);
        assert_eq!(y.unwrap()[0], 3.0);
        let (x, y) = read_features(f.path(), true, 3, Some("other")).unwrap();
        assert_eq!((x.ncols(), y), (3, None));
    }
}
