use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::features::{FeatureGroup, FeatureLayout, GroupCosts};
use crate::{Error, Result};

/// Feature rows with their target depths.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub layout: FeatureLayout,
    /// One row per sample.
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl Dataset {
    pub fn new(layout: FeatureLayout, x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::InvalidArgument(format!(
                "{} feature rows but {} targets",
                x.nrows(),
                y.len()
            )));
        }
        if x.ncols() != layout.dim() {
            return Err(Error::LayoutMismatch(format!(
                "matrix has {} columns, layout {}",
                x.ncols(),
                layout.dim()
            )));
        }
        Ok(Self { layout, x, y })
    }

    /// Build from row-major feature data.
    pub fn from_rows(layout: FeatureLayout, rows: &[f64], y: Vec<f64>) -> Result<Self> {
        let d = layout.dim();
        if d == 0 || rows.len() != d * y.len() {
            return Err(Error::InvalidArgument(format!(
                "{} values do not form {} rows of {d}",
                rows.len(),
                y.len()
            )));
        }
        Self::new(layout, DMatrix::from_row_slice(y.len(), d, rows), DVector::from_vec(y))
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            layout: self.layout.clone(),
            x: self.x.select_rows(idx),
            y: DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.y[i])),
        }
    }

    /// Restrict to the groups of `layout`, which must be a subset of ours.
    pub fn restrict(&self, layout: &FeatureLayout) -> Result<Self> {
        let cols = layout.columns_within(&self.layout)?;
        Ok(Self {
            layout: layout.clone(),
            x: self.x.select_columns(&cols),
            y: self.y.clone(),
        })
    }

    /// Deterministic split: every `every`-th sample goes to the second part.
    pub fn split_every(&self, every: usize) -> (Self, Self) {
        let every = every.max(2);
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for i in 0..self.len() {
            if i % every == every - 1 {
                b.push(i);
            } else {
                a.push(i);
            }
        }
        (self.select_rows(&a), self.select_rows(&b))
    }

    /// CSV with a `depth` column followed by the layout's column names.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["depth".to_string()];
        header.extend(self.layout.column_names());
        w.write_record(&header)?;
        let mut rec = Vec::with_capacity(header.len());
        for i in 0..self.len() {
            rec.clear();
            rec.push(self.y[i].to_string());
            rec.extend(self.x.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Inverse of [`write_csv`](Self::write_csv). The layout is recovered from
    /// the header; group costs come from `costs`.
    pub fn read_csv<R: Read>(input: R, costs: &GroupCosts) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        if header.get(0) != Some("depth") {
            return Err(Error::parse("feature csv", "first column must be `depth`"));
        }
        let mut groups: Vec<FeatureGroup> = Vec::new();
        for name in header.iter().skip(1) {
            let g = name
                .split('.')
                .next()
                .and_then(FeatureGroup::from_name)
                .ok_or_else(|| Error::parse("feature csv", format!("unknown column `{name}`")))?;
            if !groups.contains(&g) {
                groups.push(g);
            }
        }
        let layout = FeatureLayout::new(&groups, costs);
        let names: Vec<String> = layout.column_names();
        if names.iter().map(String::as_str).ne(header.iter().skip(1)) {
            return Err(Error::parse("feature csv", "columns are not in canonical layout order"));
        }
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let mut vals = rec.iter().map(|s| {
                s.parse::<f64>()
                    .map_err(|e| Error::parse(format!("feature csv row {}", line + 2), e.to_string()))
            });
            y.push(vals.next().ok_or_else(|| Error::parse("feature csv", "empty row"))??);
            for v in vals {
                rows.push(v?);
            }
        }
        Self::from_rows(layout, &rows, y)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load_csv(path: &Path, costs: &GroupCosts) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f), costs)
    }
}

/// Root-mean-square difference.
pub fn rmse(pred: &[f64], truth: &[f64]) -> f64 {
    assert_eq!(pred.len(), truth.len());
    if pred.is_empty() {
        return 0.0;
    }
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    (sse / pred.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Dataset {
        let layout = FeatureLayout::new(&[FeatureGroup::FlowStats], &GroupCosts::nominal());
        let rows: Vec<f64> = (0..36).map(|i| i as f64 * 0.25 - 1.0).collect();
        Dataset::from_rows(layout, &rows, vec![1.0, 2.0, 3.5, 4.0]).unwrap()
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let d = small();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(buf.as_slice(), &GroupCosts::nominal()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn split_is_deterministic_and_complete() {
        let d = small();
        let (a, b) = d.split_every(2);
        assert_eq!(a.len() + b.len(), d.len());
        assert_eq!(b.y.as_slice(), &[2.0, 4.0]);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let layout = FeatureLayout::new(&[FeatureGroup::FlowStats], &GroupCosts::nominal());
        assert!(Dataset::from_rows(layout, &[0.0; 10], vec![1.0]).is_err());
    }
}
