use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sparse_gp::InputMatrix;

use crate::error::{BenchError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl Comparator {
    pub fn holds(self, a: f64, b: f64) -> bool {
        match self {
            Comparator::Eq => a == b,
            Comparator::Ne => a != b,
            Comparator::Lt => a < b,
            Comparator::Le => a <= b,
            Comparator::Gt => a > b,
            Comparator::Ge => a >= b,
        }
    }
}

/// Rows for which `column <op> value` holds are dropped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterRule {
    pub column: String,
    pub op: Comparator,
    pub value: f64,
}

/// Selected predictor columns and the target, row-aligned.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub predictors: Vec<String>,
    pub target: String,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl Table {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

fn column_index(header: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    header
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| BenchError::MissingColumn {
            column: name.to_string(),
            path: path.display().to_string(),
        })
}

/// Reads a headed, comma-delimited CSV, keeping `predictors` and `target`
/// and applying `filters`.
pub fn load_csv(path: &Path, predictors: &[String], target: &str, filters: &[FilterRule]) -> Result<Table> {
    if predictors.is_empty() {
        return Err(BenchError::Config("at least one predictor column is required".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| BenchError::Io(format!("{}: {e}", path.display())))?;
    let header = reader.headers().map_err(|e| BenchError::Io(e.to_string()))?.clone();

    let x_cols: Vec<usize> = predictors.iter().map(|c| column_index(&header, c, path)).collect::<Result<_>>()?;
    let y_col = column_index(&header, target, path)?;
    let f_cols: Vec<usize> = filters
        .iter()
        .map(|f| column_index(&header, &f.column, path))
        .collect::<Result<_>>()?;

    let mut table = Table {
        predictors: predictors.to_vec(),
        target: target.to_string(),
        x: Vec::new(),
        y: Vec::new(),
    };
    let mut data_rows = 0;
    for (r, record) in reader.records().enumerate() {
        // header is line 1
        let line = r + 2;
        let record = record.map_err(|e| BenchError::Io(format!("line {line}: {e}")))?;
        data_rows += 1;
        let cell = |c: usize| -> Result<f64> {
            let raw = record.get(c).unwrap_or("").trim();
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| BenchError::BadCell {
                    line,
                    column: header[c].trim().to_string(),
                    value: raw.to_string(),
                })
        };
        let mut dropped = false;
        for (rule, &c) in filters.iter().zip(&f_cols) {
            if rule.op.holds(cell(c)?, rule.value) {
                dropped = true;
            }
        }
        let xs = x_cols.iter().map(|&c| cell(c)).collect::<Result<Vec<_>>>()?;
        let y = cell(y_col)?;
        if !dropped {
            table.x.push(xs);
            table.y.push(y);
        }
    }
    if data_rows == 0 {
        return Err(BenchError::Config(format!("{} has no data rows", path.display())));
    }
    Ok(table)
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub x_train: InputMatrix,
    /// Standardized.
    pub y_train: Vec<f64>,
    pub x_test: InputMatrix,
    /// Original scale.
    pub y_test: Vec<f64>,
    pub x_mean: Vec<f64>,
    pub x_sd: Vec<f64>,
    pub y_mean: f64,
    pub y_sd: f64,
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Shuffles the rows with `seed`, takes `round(fraction·n)` for training, and
/// centers and scales every column by training-set statistics.
pub fn split_and_standardize(table: &Table, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(BenchError::Config(format!("split fraction must lie in (0,1), got {fraction}")));
    }
    let n = table.len();
    let n_train = (fraction * n as f64).round() as usize;
    if n_train < 2 || n_train >= n {
        return Err(BenchError::Config(format!(
            "split of {n} rows at {fraction} leaves an empty or singleton side"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, test) = order.split_at(n_train);

    let d = table.predictors.len();
    let mut x_mean = Vec::with_capacity(d);
    let mut x_sd = Vec::with_capacity(d);
    for c in 0..d {
        let (m, s) = mean_sd(train.iter().map(|&i| table.x[i][c]));
        if !(s > 0.0) {
            return Err(BenchError::ZeroVariance(table.predictors[c].clone()));
        }
        x_mean.push(m);
        x_sd.push(s);
    }
    let (y_mean, y_sd) = mean_sd(train.iter().map(|&i| table.y[i]));
    if !(y_sd > 0.0) {
        return Err(BenchError::ZeroVariance(table.target.clone()));
    }

    let (xm, xs) = (&x_mean, &x_sd);
    let scaled = |rows: &[usize]| -> Result<InputMatrix> {
        let data = rows
            .iter()
            .flat_map(|&i| (0..d).map(move |c| (table.x[i][c] - xm[c]) / xs[c]))
            .collect();
        Ok(InputMatrix::new(rows.len(), d, data)?)
    };
    Ok(Dataset {
        x_train: scaled(train)?,
        y_train: train.iter().map(|&i| (table.y[i] - y_mean) / y_sd).collect(),
        x_test: scaled(test)?,
        y_test: test.iter().map(|&i| table.y[i]).collect(),
        x_mean,
        x_sd,
        y_mean,
        y_sd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn cols(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn filters_drop_matching_rows() {
        let f = write_tmp("a,b,y\n1,2,50\n3,4,10\n5,6,50\n7,8,20\n");
        let rule = FilterRule { column: "y".into(), op: Comparator::Eq, value: 50.0 };
        let t = load_csv(f.path(), &cols(&["a", "b"]), "y", &[rule]).unwrap();
        assert_eq!(t.y, vec![10.0, 20.0]);
        assert_eq!(t.x, vec![vec![3.0, 4.0], vec![7.0, 8.0]]);
        let t = load_csv(f.path(), &cols(&["a"]), "y", &[]).unwrap();
        assert_eq!(t.len(), 4);
    }

    #[test]
    fn load_errors_name_the_problem() {
        let f = write_tmp("a,y\n1,2\nfoo,3\n");
        let err = load_csv(f.path(), &cols(&["a"]), "y", &[]).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("column a"), "{err}");

        let err = load_csv(f.path(), &cols(&["zz"]), "y", &[]).unwrap_err().to_string();
        assert!(err.contains("zz"), "{err}");

        let header_only = write_tmp("a,y\n");
        assert!(load_csv(header_only.path(), &cols(&["a"]), "y", &[]).is_err());

        assert!(load_csv(Path::new("/nonexistent/file.csv"), &cols(&["a"]), "y", &[]).is_err());
    }

    fn table(n: usize) -> Table {
        Table {
            predictors: cols(&["a", "b"]),
            target: "y".into(),
            x: (0..n).map(|i| vec![i as f64, (i * i % 7) as f64]).collect(),
            y: (0..n).map(|i| (i as f64).sin() * 3.0 + 10.0).collect(),
        }
    }

    #[test]
    fn split_sizes_and_standardization() {
        let t = table(490);
        let ds = split_and_standardize(&t, 0.8, 1).unwrap();
        assert_eq!((ds.x_train.nrows(), ds.x_test.nrows()), (392, 98));
        let (m, s) = mean_sd(ds.y_train.iter().copied());
        assert!(m.abs() < 1e-10 && (s - 1.0).abs() < 1e-10);
        let col: Vec<f64> = ds.x_train.points().map(|p| p[1]).collect();
        let (m, s) = mean_sd(col.iter().copied());
        assert!(m.abs() < 1e-10 && (s - 1.0).abs() < 1e-10);
    }

    #[test]
    fn split_is_seeded() {
        let t = table(50);
        let a = split_and_standardize(&t, 0.5, 7).unwrap();
        let b = split_and_standardize(&t, 0.5, 7).unwrap();
        let c = split_and_standardize(&t, 0.5, 8).unwrap();
        assert_eq!(a.y_test, b.y_test);
        assert_ne!(a.y_test, c.y_test);
    }

    #[test]
    fn zero_variance_column_is_named() {
        let mut t = table(20);
        for row in &mut t.x {
            row[1] = 4.0;
        }
        let err = split_and_standardize(&t, 0.5, 0).unwrap_err();
        assert!(matches!(err, BenchError::ZeroVariance(ref c) if c == "b"));
        assert!(split_and_standardize(&table(20), 1.0, 0).is_err());
    }
}
