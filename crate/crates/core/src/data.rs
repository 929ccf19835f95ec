//! Numeric containers, CSV ingest, and deterministic random streams.
//!
//! A [`Dataset`] is an immutable `N × D` matrix of finite reals stored row
//! major. Every stochastic step in the crate draws from an [`RngSpec`], a
//! `(master_seed, stream_id)` pair that names one ChaCha8 stream; child
//! streams are derived as a pure function of the parent and an index, so
//! results never depend on how work is scheduled across threads.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The generator type behind every [`RngSpec`].
pub type Rng = ChaCha8Rng;

/// An `N × D` matrix of finite reals with optional feature names.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
    feature_names: Option<Vec<String>>,
}

impl Dataset {
    /// Builds a dataset from row-major `values`.
    pub fn new(values: Vec<f64>, n_rows: usize, n_cols: usize) -> Result<Self> {
        if n_rows < 2 {
            return Err(Error::InvalidData(format!(
                "need at least 2 observations, got {n_rows}"
            )));
        }
        if n_cols < 1 {
            return Err(Error::InvalidData("need at least 1 feature".into()));
        }
        if values.len() != n_rows * n_cols {
            return Err(Error::InvalidData(format!(
                "{} values do not fill a {n_rows}x{n_cols} matrix",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::BadCell {
                row: pos / n_cols + 1,
                column: pos % n_cols + 1,
                value: values[pos].to_string(),
            });
        }
        Ok(Dataset {
            values,
            n_rows,
            n_cols,
            feature_names: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::RaggedRow {
                    row: i + 1,
                    expected: n_cols,
                    found: row.len(),
                });
            }
        }
        Dataset::new(rows.concat(), rows.len(), n_cols)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_cols {
            return Err(Error::InvalidData(format!(
                "{} feature names for {} columns",
                names.len(),
                self.n_cols
            )));
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.n_cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }

    /// Per-feature `(min, max)` over all observations.
    pub fn column_ranges(&self) -> Vec<(f64, f64)> {
        let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); self.n_cols];
        for row in self.rows() {
            for (r, &v) in ranges.iter_mut().zip(row) {
                r.0 = r.0.min(v);
                r.1 = r.1.max(v);
            }
        }
        ranges
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.n_cols];
        for row in self.rows() {
            for (m, &v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = self.n_rows as f64;
        means.iter_mut().for_each(|m| *m /= n);
        means
    }

    /// Biased (divide by `N`) per-feature variances.
    pub fn column_variances(&self) -> Vec<f64> {
        let means = self.column_means();
        let mut vars = vec![0.0; self.n_cols];
        for row in self.rows() {
            for ((s, &v), &m) in vars.iter_mut().zip(row).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        let n = self.n_rows as f64;
        vars.iter_mut().for_each(|s| *s /= n);
        vars
    }

    /// Z-scores every column. Constant columns are centered but not scaled.
    pub fn standardized(&self) -> Dataset {
        let means = self.column_means();
        let sds: Vec<f64> = self.column_variances().iter().map(|v| v.sqrt()).collect();
        let values = self
            .rows()
            .flat_map(|row| {
                row.iter()
                    .zip(means.iter().zip(&sds))
                    .map(|(&v, (&m, &s))| if s > 0.0 { (v - m) / s } else { v - m })
                    .collect::<Vec<_>>()
            })
            .collect();
        Dataset {
            values,
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            feature_names: self.feature_names.clone(),
        }
    }

    /// Reads a comma-separated table. Every cell must parse as a finite real.
    pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Dataset::read_csv(file, has_header)
    }

    pub fn read_csv<R: Read>(reader: R, has_header: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(has_header)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let names = if has_header {
            Some(rdr.headers()?.iter().map(str::to_owned).collect::<Vec<_>>())
        } else {
            None
        };
        let mut expected = names.as_ref().map(Vec::len);
        let mut values = Vec::new();
        let mut n_rows = 0;
        let header_offset = usize::from(has_header);
        for record in rdr.records() {
            let record = record?;
            let row = n_rows + 1 + header_offset;
            let width = *expected.get_or_insert(record.len());
            if record.len() != width {
                return Err(Error::RaggedRow {
                    row,
                    expected: width,
                    found: record.len(),
                });
            }
            for (j, cell) in record.iter().enumerate() {
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => values.push(v),
                    _ => {
                        return Err(Error::BadCell {
                            row,
                            column: j + 1,
                            value: cell.to_owned(),
                        })
                    }
                }
            }
            n_rows += 1;
        }
        let data = Dataset::new(values, n_rows, expected.unwrap_or(0))?;
        match names {
            Some(names) => data.with_feature_names(names),
            None => Ok(data),
        }
    }

    /// Writes the dataset as CSV using shortest round-trip decimal formatting,
    /// so reading the file back reproduces every value bit for bit.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        if let Some(names) = &self.feature_names {
            wtr.write_record(names)?;
        }
        for row in self.rows() {
            wtr.write_record(row.iter().map(|v| format!("{v:?}")))?;
        }
        wtr.flush().map_err(|source| Error::Io {
            path: "<writer>".into(),
            source,
        })
    }
}

/// Names one reproducible pseudo-random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngSpec {
    pub fn new(master_seed: u64) -> Self {
        RngSpec {
            master_seed,
            stream_id: 0,
        }
    }

    /// A sub-stream for work unit `index`, independent of every sibling.
    pub fn child(&self, index: u64) -> RngSpec {
        RngSpec {
            master_seed: self.master_seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(index.wrapping_add(0x6a09_e667_f3bc_c909))),
        }
    }

    pub fn rng(&self) -> Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng as _;

    #[test]
    fn parses_plain_csv() {
        let d = Dataset::read_csv("1,2\n3,4\n5,6".as_bytes(), false).unwrap();
        assert_eq!((d.n_rows(), d.n_cols()), (3, 2));
        assert_eq!(d.row(2), &[5.0, 6.0]);
        assert!(d.feature_names().is_none());
    }

    #[test]
    fn header_becomes_feature_names() {
        let d = Dataset::read_csv("a,b\n1,2\n3,4\n".as_bytes(), true).unwrap();
        assert_eq!(d.feature_names().unwrap(), &["a", "b"]);
        assert_eq!(d.n_rows(), 2);
    }

    #[test]
    fn rejects_nan_naming_the_cell() {
        let err = Dataset::read_csv("1,2\n3,NaN\n".as_bytes(), false).unwrap_err();
        match err {
            Error::BadCell { row, column, .. } => assert_eq!((row, column), (2, 2)),
            other => panic!("unexpected {other}"),
        }
        assert!(err_msg("1,inf\n2,3").contains("column 2"));
        assert!(err_msg("1,x\n2,3").contains("row 1"));
    }

    fn err_msg(s: &str) -> String {
        Dataset::read_csv(s.as_bytes(), false).unwrap_err().to_string()
    }

    #[test]
    fn rejects_ragged_rows() {
        let err = Dataset::read_csv("1,2\n3\n".as_bytes(), false).unwrap_err();
        assert!(matches!(
            err,
            Error::RaggedRow {
                row: 2,
                expected: 2,
                found: 1
            }
        ));
    }

    #[test]
    fn rejects_single_row() {
        assert!(Dataset::read_csv("1,2\n".as_bytes(), false).is_err());
    }

    #[test]
    fn missing_file_names_path() {
        let err = Dataset::load_csv("/no/such/file.csv", false).unwrap_err();
        assert!(err.to_string().contains("/no/such/file.csv"));
    }

    #[test]
    fn column_ranges_examples() {
        let d = Dataset::from_rows(&[vec![0.0], vec![1.0], vec![0.5]]).unwrap();
        assert_eq!(d.column_ranges(), vec![(0.0, 1.0)]);
        let d = Dataset::from_rows(&[vec![2.0], vec![2.0], vec![2.0]]).unwrap();
        assert_eq!(d.column_ranges(), vec![(2.0, 2.0)]);
        let d = Dataset::from_rows(&[vec![1.0, 10.0], vec![3.0, 20.0]]).unwrap();
        assert_eq!(d.column_ranges(), vec![(1.0, 3.0), (10.0, 20.0)]);
    }

    #[test]
    fn standardize_gives_unit_variance() {
        let d = Dataset::from_rows(&[vec![1.0, 5.0], vec![3.0, 5.0], vec![8.0, 5.0]]).unwrap();
        let s = d.standardized();
        let v = s.column_variances();
        assert!((v[0] - 1.0).abs() < 1e-12);
        assert_eq!(v[1], 0.0);
        assert!(s.column_means().iter().all(|m| m.abs() < 1e-12));
    }

    #[test]
    fn rng_streams_are_reproducible() {
        let spec = RngSpec::new(42).child(7);
        let a: Vec<u64> = {
            let mut r = spec.rng();
            (0..10_000).map(|_| r.random()).collect()
        };
        let b: Vec<u64> = {
            let mut r = spec.rng();
            (0..10_000).map(|_| r.random()).collect()
        };
        assert_eq!(a, b);
        let c: u64 = RngSpec::new(42).child(8).rng().random();
        assert_ne!(a[0], c);
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_bit_exact(
            rows in prop::collection::vec(prop::collection::vec(-1e300f64..1e300, 3), 2..20)
        ) {
            let d = Dataset::from_rows(&rows).unwrap();
            let mut buf = Vec::new();
            d.write_csv(&mut buf).unwrap();
            let back = Dataset::read_csv(buf.as_slice(), false).unwrap();
            prop_assert_eq!(back.values(), d.values());
        }

        #[test]
        fn ranges_bound_every_value(
            rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 4), 2..30)
        ) {
            let d = Dataset::from_rows(&rows).unwrap();
            let ranges = d.column_ranges();
            for row in d.rows() {
                for (v, (lo, hi)) in row.iter().zip(&ranges) {
                    prop_assert!(lo <= v && v <= hi);
                }
            }
        }
    }
}
