//! Samples of the joint vector `Z = (X, Y)` with the split `d = p + q`.
//!
//! Storage is column-major: the growing phase projects whole cells onto one
//! coordinate at a time, so each coordinate lives in its own contiguous vector.

use std::io::{Read, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Vec<f64>>,
    p: usize,
    q: usize,
}

impl Dataset {
    /// Builds a dataset from rows of length `p + q`.
    pub fn from_rows(rows: &[Vec<f64>], p: usize, q: usize) -> Result<Self> {
        let d = p + q;
        let mut columns = vec![Vec::with_capacity(rows.len()); d];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::InvalidDataset(format!(
                    "row {i} has {} columns, expected {d}",
                    row.len()
                )));
            }
            for (c, &v) in row.iter().enumerate() {
                columns[c].push(v);
            }
        }
        Self::from_columns(columns, p, q)
    }

    pub fn from_columns(columns: Vec<Vec<f64>>, p: usize, q: usize) -> Result<Self> {
        if p == 0 || q == 0 {
            return Err(Error::InvalidDataset(format!(
                "both blocks need at least one coordinate (p={p}, q={q})"
            )));
        }
        if columns.len() != p + q {
            return Err(Error::DimensionMismatch {
                expected: p + q,
                got: columns.len(),
            });
        }
        let n = columns[0].len();
        if n == 0 {
            return Err(Error::InvalidDataset("dataset has no samples".into()));
        }
        for (c, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(Error::InvalidDataset(format!(
                    "column {c} has {} values, expected {n}",
                    col.len()
                )));
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidDataset(format!(
                    "non-finite value at row {i}, column {c}"
                )));
            }
        }
        Ok(Self { columns, p, q })
    }

    pub fn n(&self) -> usize {
        self.columns[0].len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn d(&self) -> usize {
        self.p + self.q
    }

    #[inline]
    pub fn value(&self, row: usize, coord: usize) -> f64 {
        self.columns[coord][row]
    }

    pub fn column(&self, coord: usize) -> &[f64] {
        &self.columns[coord]
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[row]).collect()
    }

    /// The first `n` samples.
    pub fn prefix(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.n() {
            return Err(Error::InvalidArgument(format!(
                "prefix length {n} outside 1..={}",
                self.n()
            )));
        }
        Ok(Self {
            columns: self.columns.iter().map(|c| c[..n].to_vec()).collect(),
            p: self.p,
            q: self.q,
        })
    }

    /// Applies `f(coord, value)` to every entry. The result is re-validated.
    pub fn map_coordinates(&self, f: impl Fn(usize, f64) -> f64) -> Result<Self> {
        let columns = self
            .columns
            .iter()
            .enumerate()
            .map(|(c, col)| col.iter().map(|&v| f(c, v)).collect())
            .collect();
        Self::from_columns(columns, self.p, self.q)
    }

    /// Concatenates `other` after `self`.
    pub fn concat(&self, other: &Dataset) -> Result<Self> {
        if other.p != self.p || other.q != self.q {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                got: other.d(),
            });
        }
        let columns = self
            .columns
            .iter()
            .zip(&other.columns)
            .map(|(a, b)| a.iter().chain(b).copied().collect())
            .collect();
        Self::from_columns(columns, self.p, self.q)
    }

    /// Reads one sample per row, `p + q` numeric columns. A first row that
    /// does not parse as numbers is treated as a header.
    pub fn read_csv<R: Read>(reader: R, p: usize, q: usize) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut rows = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            let parsed: std::result::Result<Vec<f64>, _> =
                record.iter().map(|s| s.parse::<f64>()).collect();
            match parsed {
                Ok(row) => rows.push(row),
                Err(_) if i == 0 => continue,
                Err(e) => {
                    return Err(Error::Csv(format!("line {}: {e}", i + 1)));
                }
            }
        }
        if rows.is_empty() {
            return Err(Error::InvalidDataset("csv contains no samples".into()));
        }
        Self::from_rows(&rows, p, q)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let header: Vec<String> = (0..self.p)
            .map(|i| format!("x{}", i + 1))
            .chain((0..self.q).map(|j| format!("y{}", j + 1)))
            .collect();
        w.write_record(&header)?;
        for i in 0..self.n() {
            w.write_record(self.columns.iter().map(|c| format!("{:?}", c[i])))?;
        }
        w.flush().map_err(|e| Error::Csv(e.to_string()))?;
        Ok(())
    }
}
