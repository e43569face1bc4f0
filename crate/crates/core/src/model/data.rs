use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Response, genetic factors, environment factors and clinical covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct GxEDataset {
    pub y: DVector<f64>,
    /// n x p genetic factors.
    pub x: DMatrix<f64>,
    /// Continuous environment factor.
    pub z: DVector<f64>,
    /// Discrete environment factor, coded numerically.
    pub e: DVector<f64>,
    /// n x q clinical covariates.
    pub w: DMatrix<f64>,
}

impl GxEDataset {
    pub fn new(y: DVector<f64>, x: DMatrix<f64>, z: DVector<f64>, e: DVector<f64>, w: DMatrix<f64>) -> Result<Self> {
        let d = GxEDataset { y, x, z, e, w };
        d.validate()?;
        Ok(d)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn q(&self) -> usize {
        self.w.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.y.len();
        if n == 0 {
            return Err(Error::Dimension("dataset has no observations".into()));
        }
        for (name, rows) in [("x", self.x.nrows()), ("z", self.z.len()), ("e", self.e.len()), ("w", self.w.nrows())] {
            if rows != n {
                return Err(Error::Dimension(format!("{name} has {rows} rows, y has {n}")));
            }
        }
        let finite = |s: &[f64]| s.iter().all(|v| v.is_finite());
        if ![self.y.as_slice(), self.x.as_slice(), self.z.as_slice(), self.e.as_slice(), self.w.as_slice()]
            .into_iter()
            .all(finite)
        {
            return Err(Error::Ingestion("dataset contains missing or non-finite values".into()));
        }
        Ok(())
    }

    /// Column names in file order: `y, z, e, w1..wq, x1..xp`.
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["y".to_string(), "z".to_string(), "e".to_string()];
        h.extend((1..=self.q()).map(|t| format!("w{t}")));
        h.extend((1..=self.p()).map(|j| format!("x{j}")));
        h
    }

    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        wtr.write_record(self.header())?;
        let mut row = Vec::with_capacity(3 + self.q() + self.p());
        for i in 0..self.n() {
            row.clear();
            row.push(fmt_num(self.y[i]));
            row.push(fmt_num(self.z[i]));
            row.push(fmt_num(self.e[i]));
            row.extend((0..self.q()).map(|t| fmt_num(self.w[(i, t)])));
            row.extend((0..self.p()).map(|j| fmt_num(self.x[(i, j)])));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Read the named-column CSV schema. Column order in the file is free;
    /// `w` and `x` columns are ordered by their numeric suffix.
    pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path)
            .map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?;
        let header = rdr.headers().map_err(|e| Error::Ingestion(e.to_string()))?.clone();
        let mut y_col = None;
        let mut z_col = None;
        let mut e_col = None;
        let mut w_cols: Vec<(usize, usize)> = Vec::new();
        let mut x_cols: Vec<(usize, usize)> = Vec::new();
        for (c, name) in header.iter().enumerate() {
            let name = name.trim();
            match name {
                "y" => y_col = Some(c),
                "z" => z_col = Some(c),
                "e" => e_col = Some(c),
                _ => {
                    let (kind, idx) = name.split_at(1);
                    let idx: usize = idx
                        .parse()
                        .map_err(|_| Error::Ingestion(format!("unrecognized column `{name}`")))?;
                    match kind {
                        "w" => w_cols.push((idx, c)),
                        "x" => x_cols.push((idx, c)),
                        _ => return Err(Error::Ingestion(format!("unrecognized column `{name}`"))),
                    }
                }
            }
        }
        let need = |c: Option<usize>, n: &str| c.ok_or_else(|| Error::Ingestion(format!("missing column `{n}`")));
        let (y_col, z_col, e_col) = (need(y_col, "y")?, need(z_col, "z")?, need(e_col, "e")?);
        w_cols.sort();
        x_cols.sort();
        check_contiguous(&w_cols, "w")?;
        check_contiguous(&x_cols, "x")?;
        if x_cols.is_empty() {
            return Err(Error::Ingestion("no genetic columns x1..xp".into()));
        }

        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Ingestion(e.to_string()))?;
            let vals = rec
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Ingestion(format!("row {}: cannot parse `{s}`", r + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != header.len() {
                return Err(Error::Ingestion(format!("row {} has {} fields", r + 1, vals.len())));
            }
            rows.push(vals);
        }
        let n = rows.len();
        let y = DVector::from_fn(n, |i, _| rows[i][y_col]);
        let z = DVector::from_fn(n, |i, _| rows[i][z_col]);
        let e = DVector::from_fn(n, |i, _| rows[i][e_col]);
        let w = DMatrix::from_fn(n, w_cols.len(), |i, t| rows[i][w_cols[t].1]);
        let x = DMatrix::from_fn(n, x_cols.len(), |i, j| rows[i][x_cols[j].1]);
        GxEDataset::new(y, x, z, e, w).map_err(|e| match e {
            Error::Dimension(m) => Error::Ingestion(m),
            other => other,
        })
    }

    /// Subset of rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> GxEDataset {
        let pick_vec = |v: &DVector<f64>| DVector::from_fn(rows.len(), |i, _| v[rows[i]]);
        let pick_mat = |m: &DMatrix<f64>| DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)]);
        GxEDataset {
            y: pick_vec(&self.y),
            x: pick_mat(&self.x),
            z: pick_vec(&self.z),
            e: pick_vec(&self.e),
            w: pick_mat(&self.w),
        }
    }
}

fn check_contiguous(cols: &[(usize, usize)], prefix: &str) -> Result<()> {
    for (k, &(idx, _)) in cols.iter().enumerate() {
        if idx != k + 1 {
            return Err(Error::Ingestion(format!("{prefix} columns must be numbered 1..; found {prefix}{idx}")));
        }
    }
    Ok(())
}

/// Shortest representation that parses back to the same f64.
pub(crate) fn fmt_num(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GxEDataset {
        GxEDataset::new(
            DVector::from_vec(vec![1.5, -0.25, 3.0]),
            DMatrix::from_row_slice(3, 2, &[0.1, 2.0, 1.0, 0.0, -1.0, 1.0]),
            DVector::from_vec(vec![0.1, 0.5, 0.9]),
            DVector::from_vec(vec![0.0, 1.0, 1.0]),
            DMatrix::from_row_slice(3, 1, &[0.3, 0.2, 0.1 + 0.2]),
        )
        .unwrap()
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let d = small();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        d.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("y,z,e,w1,x1,x2\n"));
        assert_eq!(GxEDataset::read_csv(&path).unwrap(), d);
    }

    #[test]
    fn dimension_checks() {
        let d = small();
        let bad = GxEDataset::new(d.y.clone(), d.x.clone(), DVector::zeros(2), d.e.clone(), d.w.clone());
        assert!(matches!(bad, Err(Error::Dimension(_))));
        let mut y = d.y.clone();
        y[0] = f64::NAN;
        assert!(GxEDataset::new(y, d.x.clone(), d.z.clone(), d.e.clone(), d.w.clone()).is_err());
    }

    #[test]
    fn malformed_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "y,z,x1\n1,2,3\n").unwrap();
        assert!(matches!(GxEDataset::read_csv(&p), Err(Error::Ingestion(_))));
        std::fs::write(&p, "y,z,e,x2\n1,2,3,4\n").unwrap();
        assert!(matches!(GxEDataset::read_csv(&p), Err(Error::Ingestion(_))));
        std::fs::write(&p, "y,z,e,x1\n1,2,NA,4\n").unwrap();
        assert!(matches!(GxEDataset::read_csv(&p), Err(Error::Ingestion(_))));
    }
}
