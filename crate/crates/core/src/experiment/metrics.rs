//! Long-format per-epoch metrics.

use std::fs::{File, OpenOptions};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const METRICS_HEADER: [&str; 12] = [
    "run_id",
    "seed",
    "epoch",
    "train_loss",
    "test_acc",
    "wall_s",
    "alpha_1",
    "beta_1",
    "alpha_2",
    "beta_2",
    "alpha_3",
    "beta_3",
];

/// Number of activation layers with `(alpha, beta)` columns.
pub const ACTIVATION_SLOTS: usize = 3;

/// One row: a `(run, seed, epoch)` triple.
///
/// `train_loss` is `NaN` for a diverged run, whose `test_acc` is then empty.
/// Rows that involve no training (an evaluation-only arm) leave `train_loss`
/// empty.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub run_id: String,
    pub seed: u64,
    pub epoch: usize,
    pub train_loss: Option<f64>,
    pub test_acc: Option<f64>,
    pub wall_s: Option<f64>,
    /// `(alpha, beta)` per AReLU layer; empty for other activations.
    pub arelu: Vec<(f64, f64)>,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn parse_cell(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| Error::Consistency(format!("bad numeric cell '{s}' in metrics")))
}

impl MetricsRecord {
    pub fn failed(&self) -> bool {
        self.train_loss.is_some_and(f64::is_nan)
    }

    pub fn to_row(&self) -> Vec<String> {
        let mut row = vec![
            self.run_id.clone(),
            self.seed.to_string(),
            self.epoch.to_string(),
            cell(self.train_loss),
            cell(self.test_acc),
            cell(self.wall_s),
        ];
        for i in 0..ACTIVATION_SLOTS {
            match self.arelu.get(i) {
                Some(&(a, b)) => {
                    row.push(a.to_string());
                    row.push(b.to_string());
                }
                None => row.extend([String::new(), String::new()]),
            }
        }
        row
    }

    pub fn from_row(row: &csv::StringRecord) -> Result<Self> {
        if row.len() != METRICS_HEADER.len() {
            return Err(Error::Consistency(format!(
                "metrics row has {} cells, expected {}",
                row.len(),
                METRICS_HEADER.len()
            )));
        }
        let int = |i: usize| {
            row[i]
                .parse::<u64>()
                .map_err(|_| Error::Consistency(format!("bad integer cell '{}'", &row[i])))
        };
        let mut arelu = Vec::new();
        for i in 0..ACTIVATION_SLOTS {
            if let (Some(a), Some(b)) = (parse_cell(&row[6 + 2 * i])?, parse_cell(&row[7 + 2 * i])?)
            {
                arelu.push((a, b));
            }
        }
        Ok(MetricsRecord {
            run_id: row[0].to_string(),
            seed: int(1)?,
            epoch: int(2)? as usize,
            train_loss: parse_cell(&row[3])?,
            test_acc: parse_cell(&row[4])?,
            wall_s: parse_cell(&row[5])?,
            arelu,
        })
    }
}

/// Appending CSV writer; every record is flushed so a crash loses at most
/// the row being written.
pub struct MetricsWriter {
    path: PathBuf,
    inner: csv::Writer<File>,
}

impl MetricsWriter {
    /// Truncates `path` and writes the header.
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut inner = csv::Writer::from_writer(file);
        inner.write_record(METRICS_HEADER)?;
        inner.flush().map_err(|e| Error::io(path, e))?;
        Ok(MetricsWriter {
            path: path.to_path_buf(),
            inner,
        })
    }

    /// Appends to an existing file, writing the header only if it is empty.
    pub fn append(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let empty = file.metadata().map_err(|e| Error::io(path, e))?.len() == 0;
        let mut inner = csv::Writer::from_writer(file);
        if empty {
            inner.write_record(METRICS_HEADER)?;
        }
        Ok(MetricsWriter {
            path: path.to_path_buf(),
            inner,
        })
    }

    pub fn write(&mut self, rec: &MetricsRecord) -> Result<()> {
        self.inner.write_record(rec.to_row())?;
        self.inner.flush().map_err(|e| Error::io(&self.path, e))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    if header.iter().ne(METRICS_HEADER) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("unexpected metrics header {header:?}"),
        });
    }
    reader
        .records()
        .map(|r| MetricsRecord::from_row(&r?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(arelu: Vec<(f64, f64)>) -> MetricsRecord {
        MetricsRecord {
            run_id: "r".into(),
            seed: 3,
            epoch: 1,
            train_loss: Some(0.25),
            test_acc: Some(97.5),
            wall_s: None,
            arelu,
        }
    }

    #[test]
    fn non_arelu_rows_leave_parameter_cells_empty() {
        let row = rec(vec![]).to_row();
        assert_eq!(row.len(), 12);
        assert_eq!(row[3], "0.25");
        assert!(row[5..].iter().all(String::is_empty));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let a = rec(vec![(0.9, 2.0), (0.5, 1.5), (0.01, -0.25)]);
        let mut failed = rec(vec![]);
        failed.train_loss = Some(f64::NAN);
        failed.test_acc = None;
        {
            let mut w = MetricsWriter::create(&path).unwrap();
            w.write(&a).unwrap();
            w.write(&failed).unwrap();
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(&METRICS_HEADER.join(",")));
        let back = read_metrics(&path).unwrap();
        assert_eq!(back[0], a);
        assert!(back[1].failed());
        assert_eq!(back[1].test_acc, None);

        MetricsWriter::append(&path).unwrap().write(&a).unwrap();
        assert_eq!(read_metrics(&path).unwrap().len(), 3);
    }
}
